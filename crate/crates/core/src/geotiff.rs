//! Baseline classic-TIFF subset for label rasters.
//!
//! The writer emits little-endian, single-sample, uncompressed 8-bit strips of
//! [`ROWS_PER_STRIP`] rows. The class legend is stored as JSON in the
//! ImageDescription tag so a round trip restores it. GeoTIFF tags are carried
//! through as opaque bytes and never interpreted.
//!
//! The reader accepts either byte order, strip layout only, no compression,
//! and chunky 8-bit unsigned or 32-bit float samples.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMap, Legend, MultiBandRaster};

pub const ROWS_PER_STRIP: u32 = 64;

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const IMAGE_DESCRIPTION: u16 = 270;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const ROWS_PER_STRIP_TAG: u16 = 278;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIG: u16 = 284;
const TILE_WIDTH: u16 = 322;
const TILE_LENGTH: u16 = 323;
const TILE_OFFSETS: u16 = 324;
const TILE_BYTE_COUNTS: u16 = 325;
const SAMPLE_FORMAT: u16 = 339;

/// ModelPixelScale, ModelTiepoint, ModelTransformation, GeoKeyDirectory,
/// GeoDoubleParams, GeoAsciiParams, GDAL_METADATA, GDAL_NODATA.
const GEO_TAGS: [u16; 8] = [33550, 33922, 34264, 34735, 34736, 34737, 42112, 42113];

const SHORT: u16 = 3;
const LONG: u16 = 4;
const ASCII: u16 = 2;

fn type_size(field_type: u16) -> Option<usize> {
    Some(match field_type {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 | 13 => 4,
        5 | 10 | 12 => 8,
        _ => return None,
    })
}

/// Opaque TIFF tag, values stored in little-endian element order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTag {
    pub tag: u16,
    pub field_type: u16,
    pub count: u32,
    pub data: Vec<u8>,
}

/// Geo-referencing tags passed through unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeoTags(pub Vec<RawTag>);

impl GeoTags {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TiffTagSet {
    pub width: u32,
    pub length: u32,
    pub bits_per_sample: u16,
    pub compression: u16,
    pub photometric: u16,
    pub strip_offsets: Vec<u32>,
    pub rows_per_strip: u32,
    pub strip_byte_counts: Vec<u32>,
    pub samples_per_pixel: u16,
    pub sample_format: u16,
}

impl TiffTagSet {
    pub fn expected_bytes(&self) -> u64 {
        self.width as u64
            * self.length as u64
            * self.samples_per_pixel as u64
            * (self.bits_per_sample as u64 / 8)
    }

    fn check_byte_count(&self) -> Result<()> {
        let total: u64 = self.strip_byte_counts.iter().map(|&b| b as u64).sum();
        if total != self.expected_bytes() {
            return Err(Error::MalformedTiff(format!(
                "strip byte counts sum to {total}, image needs {}",
                self.expected_bytes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TiffSamples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// A decoded image: samples in band-sequential order.
#[derive(Debug, Clone, PartialEq)]
pub struct TiffImage {
    pub tags: TiffTagSet,
    pub samples: TiffSamples,
    pub description: Option<String>,
    pub geo: GeoTags,
}

#[derive(Serialize, Deserialize)]
struct Description {
    legend: Vec<String>,
}

struct Entry {
    field_type: u16,
    count: u32,
    bytes: Vec<u8>,
}

#[derive(Clone, Copy)]
enum Order {
    Little,
    Big,
}

impl Order {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            Order::Little => u16::from_le_bytes(a),
            Order::Big => u16::from_be_bytes(a),
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Order::Little => u32::from_le_bytes(a),
            Order::Big => u32::from_be_bytes(a),
        }
    }
}

fn slice<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    offset
        .checked_add(len)
        .and_then(|end| bytes.get(offset..end))
        .ok_or_else(|| {
            Error::MalformedTiff(format!(
                "{what} at offset {offset} (+{len}) runs past end of file ({} bytes)",
                bytes.len()
            ))
        })
}

impl Entry {
    fn values(&self, order: Order, tag: u16) -> Result<Vec<u32>> {
        match self.field_type {
            SHORT => Ok(self.bytes.chunks_exact(2).map(|b| order.u16(b) as u32).collect()),
            LONG => Ok(self.bytes.chunks_exact(4).map(|b| order.u32(b)).collect()),
            1 => Ok(self.bytes.iter().map(|&b| b as u32).collect()),
            t => Err(Error::MalformedTiff(format!(
                "tag {tag} has non-integer field type {t}"
            ))),
        }
    }

    fn scalar(&self, order: Order, tag: u16) -> Result<u32> {
        self.values(order, tag)?
            .first()
            .copied()
            .ok_or_else(|| Error::MalformedTiff(format!("tag {tag} has no value")))
    }

    /// Bytes re-ordered to little-endian elements.
    fn to_le(&self, order: Order) -> Vec<u8> {
        let size = type_size(self.field_type).unwrap_or(1);
        let elem = match self.field_type {
            5 | 10 => 4, // rationals are pairs of 32-bit integers
            _ => size,
        };
        match order {
            Order::Little => self.bytes.clone(),
            Order::Big => self
                .bytes
                .chunks(elem)
                .flat_map(|c| c.iter().rev().copied().collect::<Vec<_>>())
                .collect(),
        }
    }
}

fn parse_ifd(bytes: &[u8]) -> Result<(Order, BTreeMap<u16, Entry>)> {
    if bytes.len() < 8 {
        return Err(Error::MalformedTiff(format!(
            "{} bytes is too short for a TIFF header",
            bytes.len()
        )));
    }
    let order = match &bytes[..2] {
        b"II" => Order::Little,
        b"MM" => Order::Big,
        other => {
            return Err(Error::MalformedTiff(format!("bad byte-order mark {other:02x?}")))
        }
    };
    match order.u16(&bytes[2..4]) {
        42 => {}
        43 => return Err(Error::UnsupportedTiff("BigTIFF (version 43)".into())),
        v => return Err(Error::MalformedTiff(format!("bad version {v}"))),
    }
    let ifd = order.u32(&bytes[4..8]) as usize;
    let count = order.u16(slice(bytes, ifd, 2, "IFD entry count")?) as usize;
    let table = slice(bytes, ifd + 2, count * 12, "IFD entries")?;
    let mut entries = BTreeMap::new();
    for raw in table.chunks_exact(12) {
        let tag = order.u16(&raw[0..2]);
        let field_type = order.u16(&raw[2..4]);
        let count = order.u32(&raw[4..8]);
        let Some(size) = type_size(field_type) else {
            // unknown types are skippable per baseline rules
            continue;
        };
        let len = size
            .checked_mul(count as usize)
            .ok_or_else(|| Error::MalformedTiff(format!("tag {tag} count overflows")))?;
        let data = if len <= 4 {
            raw[8..8 + len].to_vec()
        } else {
            let off = order.u32(&raw[8..12]) as usize;
            slice(bytes, off, len, &format!("tag {tag} value"))?.to_vec()
        };
        entries.insert(
            tag,
            Entry {
                field_type,
                count,
                bytes: data,
            },
        );
    }
    Ok((order, entries))
}

/// Decodes the first image of a TIFF held in memory.
pub fn decode_tiff(bytes: &[u8]) -> Result<TiffImage> {
    let (order, entries) = parse_ifd(bytes)?;
    let get = |tag: u16| entries.get(&tag);
    let required = |tag: u16, name: &str| {
        get(tag).ok_or_else(|| Error::MalformedTiff(format!("missing required tag {name} ({tag})")))
    };

    for (tag, name) in [
        (TILE_WIDTH, "TileWidth"),
        (TILE_LENGTH, "TileLength"),
        (TILE_OFFSETS, "TileOffsets"),
        (TILE_BYTE_COUNTS, "TileByteCounts"),
    ] {
        if entries.contains_key(&tag) {
            return Err(Error::UnsupportedTiff(format!(
                "tiled layout ({name} tag {tag})"
            )));
        }
    }
    let compression = match get(COMPRESSION) {
        Some(e) => e.scalar(order, COMPRESSION)?,
        None => 1,
    };
    if compression != 1 {
        return Err(Error::UnsupportedTiff(format!(
            "Compression tag {COMPRESSION} = {compression}"
        )));
    }
    let planar = match get(PLANAR_CONFIG) {
        Some(e) => e.scalar(order, PLANAR_CONFIG)?,
        None => 1,
    };
    let width = required(IMAGE_WIDTH, "ImageWidth")?.scalar(order, IMAGE_WIDTH)?;
    let length = required(IMAGE_LENGTH, "ImageLength")?.scalar(order, IMAGE_LENGTH)?;
    let spp = match get(SAMPLES_PER_PIXEL) {
        Some(e) => e.scalar(order, SAMPLES_PER_PIXEL)?,
        None => 1,
    };
    if planar != 1 && spp > 1 {
        return Err(Error::UnsupportedTiff(format!(
            "PlanarConfiguration tag {PLANAR_CONFIG} = {planar}"
        )));
    }
    let bps_all = match get(BITS_PER_SAMPLE) {
        Some(e) => e.values(order, BITS_PER_SAMPLE)?,
        None => vec![1],
    };
    let bps = bps_all[0];
    if bps_all.iter().any(|&b| b != bps) {
        return Err(Error::UnsupportedTiff(format!(
            "mixed BitsPerSample tag {BITS_PER_SAMPLE} {bps_all:?}"
        )));
    }
    let sample_format = match get(SAMPLE_FORMAT) {
        Some(e) => e.scalar(order, SAMPLE_FORMAT)?,
        None => 1,
    };
    match (bps, sample_format) {
        (8, 1) | (32, 3) => {}
        _ => {
            return Err(Error::UnsupportedTiff(format!(
                "BitsPerSample tag {BITS_PER_SAMPLE} = {bps} with SampleFormat tag {SAMPLE_FORMAT} = {sample_format}"
            )))
        }
    }
    let photometric = match get(PHOTOMETRIC) {
        Some(e) => e.scalar(order, PHOTOMETRIC)?,
        None => 1,
    };
    let strip_offsets = required(STRIP_OFFSETS, "StripOffsets")?.values(order, STRIP_OFFSETS)?;
    let strip_byte_counts =
        required(STRIP_BYTE_COUNTS, "StripByteCounts")?.values(order, STRIP_BYTE_COUNTS)?;
    let rows_per_strip = match get(ROWS_PER_STRIP_TAG) {
        Some(e) => e.scalar(order, ROWS_PER_STRIP_TAG)?,
        None => u32::MAX,
    };
    if width == 0 || length == 0 || spp == 0 {
        return Err(Error::MalformedTiff(format!(
            "degenerate image {width}x{length}x{spp}"
        )));
    }
    if strip_offsets.len() != strip_byte_counts.len() {
        return Err(Error::MalformedTiff(format!(
            "{} strip offsets but {} byte counts",
            strip_offsets.len(),
            strip_byte_counts.len()
        )));
    }
    let tags = TiffTagSet {
        width,
        length,
        bits_per_sample: bps as u16,
        compression: compression as u16,
        photometric: photometric as u16,
        strip_offsets,
        rows_per_strip,
        strip_byte_counts,
        samples_per_pixel: spp as u16,
        sample_format: sample_format as u16,
    };
    tags.check_byte_count()?;

    let mut raw = Vec::with_capacity(tags.expected_bytes() as usize);
    for (i, (&off, &len)) in tags
        .strip_offsets
        .iter()
        .zip(&tags.strip_byte_counts)
        .enumerate()
    {
        raw.extend_from_slice(slice(bytes, off as usize, len as usize, &format!("strip {i}"))?);
    }

    let pixels = width as usize * length as usize;
    let spp = spp as usize;
    // chunky → band-sequential
    let samples = if bps == 8 {
        let mut out = vec![0u8; raw.len()];
        for px in 0..pixels {
            for b in 0..spp {
                out[b * pixels + px] = raw[px * spp + b];
            }
        }
        TiffSamples::U8(out)
    } else {
        let vals: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_bits(order.u32(c)))
            .collect();
        let mut out = vec![0f32; vals.len()];
        for px in 0..pixels {
            for b in 0..spp {
                out[b * pixels + px] = vals[px * spp + b];
            }
        }
        TiffSamples::F32(out)
    };

    let description = get(IMAGE_DESCRIPTION).and_then(|e| {
        let text = e.bytes.split(|&b| b == 0).next().unwrap_or(&[]);
        String::from_utf8(text.to_vec()).ok()
    });
    let geo = GeoTags(
        entries
            .iter()
            .filter(|(tag, _)| GEO_TAGS.contains(tag))
            .map(|(&tag, e)| RawTag {
                tag,
                field_type: e.field_type,
                count: e.count,
                data: e.to_le(order),
            })
            .collect(),
    );

    Ok(TiffImage {
        tags,
        samples,
        description,
        geo,
    })
}

fn labels_from_image(img: TiffImage) -> Result<(LabelMap, GeoTags)> {
    let TiffSamples::U8(data) = img.samples else {
        return Err(Error::UnsupportedTiff(format!(
            "label rasters must be 8-bit unsigned, found {}-bit float (BitsPerSample tag {BITS_PER_SAMPLE})",
            img.tags.bits_per_sample
        )));
    };
    if img.tags.samples_per_pixel != 1 {
        return Err(Error::UnsupportedTiff(format!(
            "label rasters have one sample, found SamplesPerPixel tag {SAMPLES_PER_PIXEL} = {}",
            img.tags.samples_per_pixel
        )));
    }
    let legend = img
        .description
        .as_deref()
        .and_then(|d| serde_json::from_str::<Description>(d).ok())
        .and_then(|d| Legend::new(d.legend).ok())
        .unwrap_or_else(|| Legend::generic(data.iter().copied().max().unwrap_or(0) as usize + 1));
    let labels = LabelMap::new(
        img.tags.length as usize,
        img.tags.width as usize,
        data,
        legend,
    )?;
    Ok((labels, img.geo))
}

struct IfdEntry {
    tag: u16,
    field_type: u16,
    count: u32,
    data: Vec<u8>,
}

fn shorts(tag: u16, v: &[u16]) -> IfdEntry {
    IfdEntry {
        tag,
        field_type: SHORT,
        count: v.len() as u32,
        data: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

fn longs(tag: u16, v: &[u32]) -> IfdEntry {
    IfdEntry {
        tag,
        field_type: LONG,
        count: v.len() as u32,
        data: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

/// Encodes a label map as a little-endian uint8 GeoTIFF.
pub fn encode_label_tiff(m: &LabelMap, geo: Option<&GeoTags>) -> Result<Vec<u8>> {
    if m.classes() > 256 {
        return Err(Error::Capacity(m.classes()));
    }
    let width = u32::try_from(m.width()).map_err(|_| Error::Capacity(m.width()))?;
    let length = u32::try_from(m.height()).map_err(|_| Error::Capacity(m.height()))?;
    let rows = ROWS_PER_STRIP.min(length);
    let strips = length.div_ceil(rows);
    let byte_counts: Vec<u32> = (0..strips)
        .map(|s| (rows.min(length - s * rows)) * width)
        .collect();

    let mut description = serde_json::to_vec(&Description {
        legend: m.legend().names().to_vec(),
    })
    .expect("legend serializes");
    description.push(0);

    let mut entries = vec![
        longs(IMAGE_WIDTH, &[width]),
        longs(IMAGE_LENGTH, &[length]),
        shorts(BITS_PER_SAMPLE, &[8]),
        shorts(COMPRESSION, &[1]),
        shorts(PHOTOMETRIC, &[1]),
        IfdEntry {
            tag: IMAGE_DESCRIPTION,
            field_type: ASCII,
            count: description.len() as u32,
            data: description,
        },
        longs(STRIP_OFFSETS, &vec![0; strips as usize]),
        shorts(SAMPLES_PER_PIXEL, &[1]),
        longs(ROWS_PER_STRIP_TAG, &[rows]),
        longs(STRIP_BYTE_COUNTS, &byte_counts),
        shorts(PLANAR_CONFIG, &[1]),
        shorts(SAMPLE_FORMAT, &[1]),
    ];
    if let Some(geo) = geo {
        for t in &geo.0 {
            if !GEO_TAGS.contains(&t.tag) {
                return Err(Error::invalid(format!("tag {} is not a geo tag", t.tag)));
            }
            entries.push(IfdEntry {
                tag: t.tag,
                field_type: t.field_type,
                count: t.count,
                data: t.data.clone(),
            });
        }
    }
    entries.sort_by_key(|e| e.tag);

    // header | IFD | out-of-line values | strips
    let ifd_len = 2 + entries.len() * 12 + 4;
    let mut extra_off = 8 + ifd_len;
    let mut offsets = Vec::with_capacity(entries.len());
    for e in &entries {
        if e.data.len() > 4 {
            offsets.push(Some(extra_off as u32));
            extra_off += e.data.len() + (e.data.len() & 1);
        } else {
            offsets.push(None);
        }
    }
    let mut strip_offsets = Vec::with_capacity(strips as usize);
    let mut cursor = extra_off;
    for &bc in &byte_counts {
        strip_offsets.push(cursor as u32);
        cursor += bc as usize;
    }
    if cursor > u32::MAX as usize {
        return Err(Error::Capacity(m.classes().max(cursor)));
    }
    let strip_entry = entries
        .iter_mut()
        .find(|e| e.tag == STRIP_OFFSETS)
        .expect("strip offsets present");
    strip_entry.data = strip_offsets.iter().flat_map(|x| x.to_le_bytes()).collect();

    let mut out = Vec::with_capacity(cursor);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for (e, off) in entries.iter().zip(&offsets) {
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.extend_from_slice(&e.field_type.to_le_bytes());
        out.extend_from_slice(&e.count.to_le_bytes());
        match off {
            Some(o) => out.extend_from_slice(&o.to_le_bytes()),
            None => {
                let mut inline = [0u8; 4];
                inline[..e.data.len()].copy_from_slice(&e.data);
                out.extend_from_slice(&inline);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    for e in &entries {
        if e.data.len() > 4 {
            out.extend_from_slice(&e.data);
            if e.data.len() & 1 == 1 {
                out.push(0);
            }
        }
    }
    debug_assert_eq!(out.len(), extra_off);
    out.extend_from_slice(m.data());

    // re-parse to enforce the tag-set invariants on everything we emit
    let check = decode_tiff(&out)?;
    if check.tags.expected_bytes() != m.data().len() as u64 {
        return Err(Error::MalformedTiff("emitted byte counts disagree with image".into()));
    }
    Ok(out)
}

pub fn write_label_tiff(m: &LabelMap, geo: Option<&GeoTags>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_label_tiff(m, geo)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_label_tiff(bytes: &[u8]) -> Result<(LabelMap, GeoTags)> {
    labels_from_image(decode_tiff(bytes)?)
}

pub fn read_label_tiff(path: impl AsRef<Path>) -> Result<LabelMap> {
    read_label_tiff_with_geo(path).map(|(l, _)| l)
}

/// Like [`read_label_tiff`] but also returns the geo tags for re-emission.
pub fn read_label_tiff_with_geo(path: impl AsRef<Path>) -> Result<(LabelMap, GeoTags)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_tiff(&bytes)
}

/// Reads a float (or 8-bit) TIFF as a multi-band raster.
pub fn read_raster_tiff(path: impl AsRef<Path>) -> Result<MultiBandRaster<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = decode_tiff(&bytes)?;
    let data = match img.samples {
        TiffSamples::F32(v) => v,
        TiffSamples::U8(v) => v.into_iter().map(f32::from).collect(),
    };
    MultiBandRaster::new(
        img.tags.length as usize,
        img.tags.width as usize,
        img.tags.samples_per_pixel as usize,
        data,
    )
}
