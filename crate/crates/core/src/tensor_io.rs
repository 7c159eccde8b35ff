//! Raw-tensor `.fmt` files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FMLCRAS1"            8-byte magic
//! header_len: u32
//! header: [u8; header_len]   UTF-8 JSON
//! payload                    BSQ row-major samples (f32 LE or u8)
//! crc32: u32                 CRC-32 (IEEE) of the payload bytes
//! ```
//!
//! The header carries `dtype` (`"f32"` or `"u8"`), `shape` (`[H, W, C]`),
//! `order` (always `"bsq"`) and optionally `bands`, `legend` and `nodata`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMap, Legend, MultiBandRaster};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"FMLCRAS1";

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Float(MultiBandRaster<f32>),
    Labels(LabelMap),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: [usize; 3],
    order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bands: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    legend: Option<LegendField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodata: Option<NodataField>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LegendField {
    List(Vec<String>),
    Map(BTreeMap<String, String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NodataField {
    Number(f64),
    Text(String),
}

impl LegendField {
    fn into_legend(self) -> Result<Legend> {
        match self {
            LegendField::List(names) => {
                Legend::new(names).map_err(|e| Error::MalformedHeader(e.to_string()))
            }
            LegendField::Map(map) => {
                let mut entries = map
                    .into_iter()
                    .map(|(k, v)| {
                        k.parse::<usize>()
                            .map(|id| (id, v))
                            .map_err(|_| Error::MalformedHeader(format!("legend key {k:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                entries.sort_by_key(|(id, _)| *id);
                if entries.iter().enumerate().any(|(i, (id, _))| i != *id) {
                    return Err(Error::MalformedHeader(
                        "legend ids must be contiguous from 0".into(),
                    ));
                }
                Legend::new(entries.into_iter().map(|(_, v)| v).collect())
                    .map_err(|e| Error::MalformedHeader(e.to_string()))
            }
        }
    }
}

fn frame(header: &Header, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out
}

/// Serializes a float raster; samples are narrowed to `f32`.
pub fn encode_raster<T: Scalar>(raster: &MultiBandRaster<T>) -> Vec<u8> {
    let mut payload = Vec::with_capacity(raster.data().len() * 4);
    for &v in raster.data() {
        payload.extend_from_slice(&v.to_f32_le());
    }
    let nodata = raster.nodata().map(|v| {
        let v = v.as_f64();
        if v.is_finite() {
            NodataField::Number(v)
        } else {
            NodataField::Text(v.to_string())
        }
    });
    let header = Header {
        dtype: "f32".into(),
        shape: [raster.height(), raster.width(), raster.bands()],
        order: "bsq".into(),
        bands: (!raster.band_names().is_empty()).then(|| raster.band_names().to_vec()),
        legend: None,
        nodata,
    };
    frame(&header, &payload)
}

pub fn encode_labels(labels: &LabelMap) -> Vec<u8> {
    let header = Header {
        dtype: "u8".into(),
        shape: [labels.height(), labels.width(), 1],
        order: "bsq".into(),
        bands: None,
        legend: Some(LegendField::List(labels.legend().names().to_vec())),
        nodata: None,
    };
    frame(&header, labels.data())
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated {
            what: "magic",
            expected: MAGIC.len(),
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let rest = &bytes[8..];
    if rest.len() < 4 {
        return Err(Error::Truncated {
            what: "header length",
            expected: 4,
            actual: rest.len(),
        });
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(Error::Truncated {
            what: "header",
            expected: header_len,
            actual: rest.len(),
        });
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let rest = &rest[header_len..];

    if header.order != "bsq" {
        return Err(Error::MalformedHeader(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    let [h, w, c] = header.shape;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::MalformedHeader(format!("degenerate shape {h}x{w}x{c}")));
    }
    let samples = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    let sample_size = match header.dtype.as_str() {
        "f32" => 4,
        "u8" => 1,
        other => return Err(Error::MalformedHeader(format!("unsupported dtype {other:?}"))),
    };
    let payload_len = samples
        .checked_mul(sample_size)
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    if rest.len() < payload_len + 4 {
        return Err(Error::Truncated {
            what: "payload",
            expected: payload_len + 4,
            actual: rest.len(),
        });
    }
    if rest.len() > payload_len + 4 {
        return Err(Error::TrailingData(rest.len() - payload_len - 4));
    }
    let payload = &rest[..payload_len];
    let stored = u32::from_le_bytes(rest[payload_len..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    match sample_size {
        4 => {
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let nodata = match header.nodata {
                None => None,
                Some(NodataField::Number(v)) => Some(v as f32),
                Some(NodataField::Text(s)) => Some(
                    s.parse::<f32>()
                        .map_err(|_| Error::MalformedHeader(format!("nodata {s:?}")))?,
                ),
            };
            let raster = MultiBandRaster::new(h, w, c, data)
                .and_then(|r| r.with_band_names(header.bands.unwrap_or_default()))
                .map_err(|e| Error::MalformedHeader(e.to_string()))?
                .with_nodata(nodata);
            Ok(Tensor::Float(raster))
        }
        _ => {
            if c != 1 {
                return Err(Error::MalformedHeader(format!(
                    "u8 tensors hold one label band, header declares {c}"
                )));
            }
            let legend = match header.legend {
                Some(field) => field.into_legend()?,
                None => Legend::generic(payload.iter().copied().max().unwrap_or(0) as usize + 1),
            };
            let labels = LabelMap::new(h, w, payload.to_vec(), legend)
                .map_err(|e| Error::MalformedHeader(e.to_string()))?;
            Ok(Tensor::Labels(labels))
        }
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_tensor<T: Scalar>(raster: &MultiBandRaster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raster(raster)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Reads a float tensor; label tensors are rejected.
pub fn read_raster(path: impl AsRef<Path>) -> Result<MultiBandRaster<f32>> {
    match read_tensor(path)? {
        Tensor::Float(r) => Ok(r),
        Tensor::Labels(_) => Err(Error::invalid("expected an f32 tensor, found u8 labels")),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    match read_tensor(path)? {
        Tensor::Labels(l) => Ok(l),
        Tensor::Float(_) => Err(Error::invalid("expected a u8 label tensor, found f32")),
    }
}
