//! Seeded synthetic scenes and slow reference implementations.
//!
//! # Random stream
//!
//! Every draw comes from `ChaCha8Rng::seed_from_u64(seed)`. A uniform
//! variate is `(next_u64() >> 11) · 2⁻⁵³`, an integer in `[0, n)` is
//! `floor(u · n)`. Draws are consumed in this order:
//!
//! 1. For each of `blobs` region centres: `y = u·H`, `x = u·W`, then a class
//!    draw `floor(u·C)`. The draw is made for every centre; centres
//!    `i < C` ignore it and take class `i` so that every class appears.
//! 2. For each of `4·blobs` confusion cells: `y = u·H`, `x = u·W`, then the
//!    cell's confusion variate `u`.
//! 3. For each pixel in row-major order, exactly `C + 3` draws: `C` jitter
//!    values, one expert variate, one noise variate, one noise-class draw.
//!
//! Regions and cells are the Voronoi cells of their centres under squared
//! Euclidean distance from the pixel centre `(r + ½, c + ½)`, ties going to
//! the lower index.
//!
//! # Scene model
//!
//! Raw class scores are `A = 2.5` for the dominant class and `0` elsewhere,
//! each plus jitter `(u - ½)/2`. Inside a confusion cell with variate `u`,
//! truth `k` is confused when `u < s` and truth `k′` when `u < s/4`, where
//! `s` is the confusion strength. A confused pixel scores its partner at `A`
//! and its true class at `A - 1`. A noise pixel (noise variate below the
//! rate) additionally scores a random wrong class at `A + 1.5`. The coarse
//! map is the softmax of the scores. The expert score is `0.85 + 0.14u` on
//! truth `k` and `0.01 + 0.14u` elsewhere.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryProbMap, LabelMap, Legend, LogitMap, ProbabilityMap};
use crate::scalar::Scalar;
use crate::smoothing::{BlendVariant, SmoothingParams, WindowStats};

const DOMINANT: f64 = 2.5;
const CONFUSED_DROP: f64 = 1.0;
const NOISE_BOOST: f64 = 1.5;
const CELLS_PER_BLOB: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_blobs")]
    pub blobs: usize,
    /// `(k, k′)`: truth `k` drifts toward `k′` in the coarse map.
    #[serde(default = "default_pair")]
    pub confusion_pair: (u8, u8),
    #[serde(default)]
    pub confusion_strength: f64,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    4
}

fn default_blobs() -> usize {
    12
}

fn default_pair() -> (u8, u8) {
    (1, 0)
}

impl SceneSpec {
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        Self {
            height,
            width,
            classes: default_classes(),
            blobs: default_blobs(),
            confusion_pair: default_pair(),
            confusion_strength: 0.0,
            noise_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("scene must have at least one pixel"));
        }
        if !(2..=256).contains(&self.classes) {
            return Err(Error::invalid(format!("classes {} outside 2..=256", self.classes)));
        }
        if self.blobs < self.classes {
            return Err(Error::invalid(format!(
                "blobs {} fewer than classes {}",
                self.blobs, self.classes
            )));
        }
        let (k, kp) = self.confusion_pair;
        if k == kp || k as usize >= self.classes || kp as usize >= self.classes {
            return Err(Error::invalid(format!(
                "confusion pair ({k}, {kp}) invalid for {} classes",
                self.classes
            )));
        }
        for (name, v) in [
            ("confusion_strength", self.confusion_strength),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn legend(&self) -> Legend {
        if self.classes == 4 {
            Legend::land_cover()
        } else {
            Legend::generic(self.classes)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T = f32> {
    pub truth: LabelMap,
    pub coarse: ProbabilityMap<T>,
    /// Expert score for `confusion_pair.0`.
    pub expert: BinaryProbMap<T>,
}

struct Stream(ChaCha8Rng);

impl Stream {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

fn nearest(centres: &[(f64, f64)], r: usize, c: usize) -> usize {
    let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &(cy, cx)) in centres.iter().enumerate() {
        let d = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn generate_scene<T: Scalar>(spec: &SceneSpec) -> Result<Scene<T>> {
    spec.validate()?;
    let (h, w, nc) = (spec.height, spec.width, spec.classes);
    let n = h * w;
    let mut rng = Stream::new(spec.seed);

    let mut blob_centres = Vec::with_capacity(spec.blobs);
    let mut blob_class = Vec::with_capacity(spec.blobs);
    for i in 0..spec.blobs {
        let y = rng.uniform() * h as f64;
        let x = rng.uniform() * w as f64;
        let drawn = rng.below(nc);
        blob_centres.push((y, x));
        blob_class.push(if i < nc { i } else { drawn });
    }
    let cells = spec.blobs * CELLS_PER_BLOB;
    let mut cell_centres = Vec::with_capacity(cells);
    let mut cell_u = Vec::with_capacity(cells);
    for _ in 0..cells {
        let y = rng.uniform() * h as f64;
        let x = rng.uniform() * w as f64;
        cell_centres.push((y, x));
        cell_u.push(rng.uniform());
    }

    let (k, kp) = (spec.confusion_pair.0 as usize, spec.confusion_pair.1 as usize);
    let s = spec.confusion_strength;
    let mut truth = vec![0u8; n];
    let mut probs = vec![T::zero(); n * nc];
    let mut expert = vec![T::zero(); n];
    let mut scores = vec![0.0f64; nc];
    for r in 0..h {
        for c in 0..w {
            let px = r * w + c;
            let class = blob_class[nearest(&blob_centres, r, c)];
            truth[px] = class as u8;

            for v in scores.iter_mut() {
                *v = (rng.uniform() - 0.5) / 2.0;
            }
            let eu = rng.uniform();
            let nu = rng.uniform();
            let wrong = rng.below(nc - 1);

            let u = cell_u[nearest(&cell_centres, r, c)];
            let confused = (class == k && u < s) || (class == kp && u < s / 4.0);
            if confused {
                let partner = if class == k { kp } else { k };
                scores[partner] += DOMINANT;
                scores[class] += DOMINANT - CONFUSED_DROP;
            } else {
                scores[class] += DOMINANT;
            }
            if nu < spec.noise_rate {
                let wrong = if wrong >= class { wrong + 1 } else { wrong };
                scores[wrong] += DOMINANT + NOISE_BOOST;
            }

            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = scores.iter().map(|v| (v - top).exp()).sum();
            for (ch, v) in scores.iter().enumerate() {
                probs[ch * n + px] = T::of((v - top).exp() / total);
            }
            expert[px] = T::of(if class == k { 0.85 } else { 0.01 } + 0.14 * eu);
        }
    }

    let legend = spec.legend();
    Ok(Scene {
        truth: LabelMap::new(h, w, truth, legend.clone())?,
        coarse: ProbabilityMap::new(h, w, nc, probs)?.with_legend(legend)?,
        expert: BinaryProbMap::new(h, w, expert)?,
    })
}

/// Materialises the padded map, then for every window collects, fully
/// sorts and summarises its values one by one.
pub fn naive_window_stats<T: Scalar>(l: &LogitMap<T>, params: &SmoothingParams) -> Result<WindowStats<T>> {
    params.validate()?;
    let (h, w, nc) = (l.height(), l.width(), l.classes());
    let radius = params.window / 2;
    let (ph, pw) = (h + 2 * radius, w + 2 * radius);
    let k = params.k_top();
    let mut mean = Vec::with_capacity(h * w * nc);
    let mut var = Vec::with_capacity(h * w * nc);
    for ch in 0..nc {
        let mut padded = vec![T::zero(); ph * pw];
        for pr in 0..ph {
            for pc in 0..pw {
                let r = pr.saturating_sub(radius).min(h - 1);
                let c = pc.saturating_sub(radius).min(w - 1);
                padded[pr * pw + pc] = l.get(ch, r, c);
            }
        }
        for r in 0..h {
            for c in 0..w {
                let mut window = Vec::new();
                for dr in 0..params.window {
                    for dc in 0..params.window {
                        window.push((padded[(r + dr) * pw + c + dc], window.len()));
                    }
                }
                window.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let pivot = window[0].0;
                let mut dev = T::zero();
                for &(v, _) in &window[..k] {
                    dev = dev + (v - pivot);
                }
                let m = pivot + dev / T::of(k as f64);
                let mut ss = T::zero();
                for &(v, _) in &window[..k] {
                    ss = ss + (v - m) * (v - m);
                }
                mean.push(m);
                var.push(ss / T::of(k as f64));
            }
        }
    }
    Ok(WindowStats {
        mean: LogitMap::new(h, w, nc, mean)?.with_legend(l.legend().clone())?,
        var: LogitMap::new(h, w, nc, var)?.with_legend(l.legend().clone())?,
    })
}

pub fn naive_smooth_reference<T: Scalar>(l: &LogitMap<T>, params: &SmoothingParams) -> Result<LogitMap<T>> {
    let stats = naive_window_stats(l, params)?;
    let sigma2 = T::of(params.sigma2);
    let mut out = Vec::with_capacity(l.data().len());
    for i in 0..l.data().len() {
        let (lv, m, s2) = (l.data()[i], stats.mean.data()[i], stats.var.data()[i]);
        let weight = match params.variant {
            BlendVariant::Conjugate => sigma2 / (sigma2 + s2),
            BlendVariant::Literal => s2 / (sigma2 + s2),
        };
        let mut v = lv + weight * (m - lv);
        let (lo, hi) = if lv < m { (lv, m) } else { (m, lv) };
        if v < lo {
            v = lo;
        }
        if v > hi {
            v = hi;
        }
        out.push(v);
    }
    LogitMap::new(l.height(), l.width(), l.classes(), out)?.with_legend(l.legend().clone())
}
