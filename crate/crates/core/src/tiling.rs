//! Patch extraction, overlap-averaging reassembly and per-band standardization.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Grid, MultiBandRaster};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgePolicy {
    /// Tiles running past the raster edge repeat the last row/column.
    #[default]
    PadReplicate,
    /// Tiles running past the raster edge are cut short.
    ClipPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile_size: usize,
    pub stride: usize,
    #[serde(default)]
    pub edge_policy: EdgePolicy,
}

impl TileSpec {
    pub fn new(tile_size: usize, stride: usize, edge_policy: EdgePolicy) -> Result<Self> {
        let spec = Self {
            tile_size,
            stride,
            edge_policy,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 || self.stride == 0 || self.stride > self.tile_size {
            return Err(Error::invalid(format!(
                "tile spec needs 0 < stride <= tile_size, got tile {} stride {}",
                self.tile_size, self.stride
            )));
        }
        Ok(())
    }

    /// Tile origins along an axis of length `len`.
    pub fn origins(&self, len: usize) -> Vec<usize> {
        let count = if len <= self.tile_size {
            1
        } else {
            (len - self.tile_size).div_ceil(self.stride) + 1
        };
        (0..count).map(|i| i * self.stride).collect()
    }
}

/// A patch cut from a larger grid, with its top-left position in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile<G> {
    pub row: usize,
    pub col: usize,
    pub grid: G,
}

pub fn tile<T: Scalar, G: Grid<T> + Send + Sync>(x: &G, spec: &TileSpec) -> Result<Vec<Tile<G>>> {
    spec.validate()?;
    let shape = x.shape();
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let src = x.values();
    let n = h * w;
    let rows = spec.origins(h);
    let cols = spec.origins(w);
    let origins: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&cc| (r, cc)))
        .collect();

    origins
        .into_par_iter()
        .map(|(r0, c0)| {
            let (th, tw) = match spec.edge_policy {
                EdgePolicy::PadReplicate => (spec.tile_size, spec.tile_size),
                EdgePolicy::ClipPartial => (spec.tile_size.min(h - r0), spec.tile_size.min(w - c0)),
            };
            let mut data = Vec::with_capacity(th * tw * c);
            for ch in 0..c {
                let plane = &src[ch * n..(ch + 1) * n];
                for r in 0..th {
                    let sr = (r0 + r).min(h - 1);
                    for cc in 0..tw {
                        let sc = (c0 + cc).min(w - 1);
                        data.push(plane[sr * w + sc]);
                    }
                }
            }
            Ok(Tile {
                row: r0,
                col: c0,
                grid: x.rebuild(th, tw, data)?,
            })
        })
        .collect()
}

/// Reassembles tiles into a `height`×`width` grid, averaging overlaps.
///
/// Tile samples falling outside the output (replicated padding) are dropped.
/// Every output sample is accumulated over the tiles in slice order, so the
/// result does not depend on the thread count.
pub fn stitch<T: Scalar, G: Grid<T> + Send + Sync>(
    tiles: &[Tile<G>],
    height: usize,
    width: usize,
) -> Result<G> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::invalid("stitch needs at least one tile"))?;
    let channels = first.grid.shape().channels;
    if let Some(t) = tiles.iter().find(|t| t.grid.shape().channels != channels) {
        return Err(Error::ShapeMismatch {
            expected: format!("{channels} channels"),
            actual: format!("{} channels in tile at ({}, {})", t.grid.shape().channels, t.row, t.col),
        });
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("stitch output must have at least one pixel"));
    }

    let n = height * width;
    let mut out = vec![T::zero(); n * channels];
    let uncovered: usize = out
        .par_chunks_mut(width)
        .enumerate()
        .map(|(j, row_out)| {
            let ch = j / height;
            let row = j % height;
            let mut sum = vec![0f64; width];
            let mut count = vec![0u32; width];
            for t in tiles {
                let ts = t.grid.shape();
                if row < t.row || row >= t.row + ts.height || t.col >= width {
                    continue;
                }
                let tr = row - t.row;
                let plane = &t.grid.values()[ch * ts.pixels()..(ch + 1) * ts.pixels()];
                let span = ts.width.min(width - t.col);
                for k in 0..span {
                    sum[t.col + k] += plane[tr * ts.width + k].as_f64();
                    count[t.col + k] += 1;
                }
            }
            let mut missing = 0;
            for col in 0..width {
                if count[col] == 0 {
                    missing += 1;
                } else {
                    row_out[col] = T::of(sum[col] / count[col] as f64);
                }
            }
            if ch == 0 {
                missing
            } else {
                0
            }
        })
        .sum();
    if uncovered > 0 {
        return Err(Error::Coverage { count: uncovered });
    }
    first.grid.rebuild(height, width, out)
}

/// Per-band mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        if mean.len() != stddev.len() || mean.is_empty() {
            return Err(Error::invalid(format!(
                "{} means and {} standard deviations",
                mean.len(),
                stddev.len()
            )));
        }
        Ok(Self { mean, stddev })
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    fn check_usable(&self, bands: usize) -> Result<()> {
        if self.mean.len() != bands || self.stddev.len() != bands {
            return Err(Error::ShapeMismatch {
                expected: format!("stats for {bands} bands"),
                actual: format!("{} means, {} stddevs", self.mean.len(), self.stddev.len()),
            });
        }
        if let Some(band) = self.stddev.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::ZeroStddev { band });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let stats: Self = serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(stats.mean, stats.stddev)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Welford's single-pass mean/variance per band, skipping nodata samples.
pub fn compute_stats<T: Scalar>(x: &MultiBandRaster<T>) -> Result<NormalizationStats> {
    if x.height() * x.width() < 2 {
        return Err(Error::invalid("statistics need at least 2 pixels per band"));
    }
    let per_band: Vec<Result<(f64, f64)>> = (0..x.bands())
        .into_par_iter()
        .map(|b| {
            let mut count = 0u64;
            let mut mean = 0f64;
            let mut m2 = 0f64;
            for &v in x.band(b) {
                if x.is_nodata(v) {
                    continue;
                }
                let v = v.as_f64();
                count += 1;
                let delta = v - mean;
                mean += delta / count as f64;
                m2 += delta * (v - mean);
            }
            match count {
                0 => Err(Error::EmptyBand { band: b }),
                1 => Err(Error::invalid(format!("band {b} has a single valid pixel"))),
                _ => Ok((mean, (m2 / count as f64).sqrt())),
            }
        })
        .collect();
    let mut mean = Vec::with_capacity(x.bands());
    let mut stddev = Vec::with_capacity(x.bands());
    for r in per_band {
        let (m, s) = r?;
        mean.push(m);
        stddev.push(s);
    }
    Ok(NormalizationStats { mean, stddev })
}

fn map_bands<T: Scalar>(
    x: &MultiBandRaster<T>,
    s: &NormalizationStats,
    f: impl Fn(f64, f64, f64) -> f64 + Sync,
) -> Result<MultiBandRaster<T>> {
    s.check_usable(x.bands())?;
    let n = x.height() * x.width();
    let mut out = x.data().to_vec();
    out.par_chunks_mut(n).enumerate().for_each(|(b, plane)| {
        let (m, sd) = (s.mean[b], s.stddev[b]);
        for v in plane.iter_mut() {
            if !x.is_nodata(*v) {
                *v = T::of(f(v.as_f64(), m, sd));
            }
        }
    });
    x.rebuild(x.height(), x.width(), out)
}

/// `(x - mean) / stddev` per band; nodata samples pass through.
pub fn standardize<T: Scalar>(x: &MultiBandRaster<T>, s: &NormalizationStats) -> Result<MultiBandRaster<T>> {
    map_bands(x, s, |v, m, sd| (v - m) / sd)
}

/// Inverse of [`standardize`].
pub fn destandardize<T: Scalar>(x: &MultiBandRaster<T>, s: &NormalizationStats) -> Result<MultiBandRaster<T>> {
    map_bands(x, s, |v, m, sd| v * sd + m)
}
