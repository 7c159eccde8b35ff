//! Windowed Bayesian logit smoothing and the MRF energy diagnostic.
//!
//! For every class channel independently, each pixel's W×W neighbourhood
//! (replicate-padded at the borders) is ranked by value, descending, with
//! ties broken by row-major position inside the window. The `k = ⌈W²·α⌉`
//! best-ranked values give a local prior mean `m` and spread `s²`:
//!
//! ```text
//! pivot = v[0]
//! m     = pivot + (Σ_i (v[i] - pivot)) / k          (sum in rank order)
//! s²    = (Σ_i (v[i] - m)²) / k                      (sum in rank order)
//! ```
//!
//! The observed logit `ℓ` is then pulled toward `m`:
//!
//! ```text
//! ℓ' = ℓ + w · (m - ℓ),  clamped to [min(ℓ, m), max(ℓ, m)]
//! w  = σ² / (σ² + s²)    (Conjugate: the Gaussian posterior mean)
//! w  = s² / (σ² + s²)    (Literal: coefficients swapped)
//! ```
//!
//! The arithmetic above is pinned so that independent implementations
//! (see [`crate::synth::naive_smooth_reference`]) agree bit for bit.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{argmax_labels, softmax, LabelMap, LogitMap, ProbabilityMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendVariant {
    /// Prior weight shrinks as neighbourhood variance grows.
    #[default]
    Conjugate,
    /// Prior weight grows with neighbourhood variance.
    Literal,
}

impl std::str::FromStr for BlendVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conjugate" => Ok(Self::Conjugate),
            "literal" => Ok(Self::Literal),
            other => Err(Error::invalid(format!(
                "unknown blend variant {other:?} (expected conjugate or literal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingParams {
    pub window: usize,
    pub alpha: f64,
    pub sigma2: f64,
    #[serde(default)]
    pub variant: BlendVariant,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            window: 5,
            alpha: 0.6,
            sigma2: 1.0,
            variant: BlendVariant::Conjugate,
        }
    }
}

impl SmoothingParams {
    pub fn new(window: usize, alpha: f64, sigma2: f64, variant: BlendVariant) -> Result<Self> {
        let p = Self {
            window,
            alpha,
            sigma2,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "window must be odd and positive, got {}",
                self.window
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 {} must be positive", self.sigma2)));
        }
        Ok(())
    }

    /// Number of ranked values kept per window, `⌈W²·α⌉`.
    pub fn k_top(&self) -> usize {
        let area = self.window * self.window;
        ((area as f64 * self.alpha).ceil() as usize).clamp(1, area)
    }
}

/// Per-pixel, per-channel prior mean and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats<T = f32> {
    pub mean: LogitMap<T>,
    pub var: LogitMap<T>,
}

fn rank<T: Scalar>(a: &(T, u32), b: &(T, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

pub fn window_stats<T: Scalar>(l: &LogitMap<T>, params: &SmoothingParams) -> Result<WindowStats<T>> {
    params.validate()?;
    let (h, w, c) = (l.height(), l.width(), l.classes());
    let n = h * w;
    let radius = (params.window / 2) as isize;
    let k = params.k_top();
    let area = params.window * params.window;
    let kt = T::of(k as f64);
    let src = l.data();

    let mut mean = vec![T::zero(); n * c];
    let mut var = vec![T::zero(); n * c];
    mean.par_chunks_mut(w)
        .zip(var.par_chunks_mut(w))
        .enumerate()
        .for_each_init(
            || Vec::with_capacity(area),
            |buf: &mut Vec<(T, u32)>, (j, (m_row, v_row))| {
                let ch = j / h;
                let row = (j % h) as isize;
                let plane = &src[ch * n..(ch + 1) * n];
                for col in 0..w as isize {
                    buf.clear();
                    let mut pos = 0u32;
                    for dr in -radius..=radius {
                        let r = (row + dr).clamp(0, h as isize - 1) as usize;
                        let line = &plane[r * w..(r + 1) * w];
                        for dc in -radius..=radius {
                            let cc = (col + dc).clamp(0, w as isize - 1) as usize;
                            buf.push((line[cc], pos));
                            pos += 1;
                        }
                    }
                    if k < area {
                        buf.select_nth_unstable_by(k - 1, rank);
                    }
                    let top = &mut buf[..k];
                    top.sort_unstable_by(rank);

                    let pivot = top[0].0;
                    let dev = top.iter().fold(T::zero(), |s, &(v, _)| s + (v - pivot));
                    let m = pivot + dev / kt;
                    let ss = top.iter().fold(T::zero(), |s, &(v, _)| {
                        let d = v - m;
                        s + d * d
                    });
                    m_row[col as usize] = m;
                    v_row[col as usize] = ss / kt;
                }
            },
        );

    let legend = l.legend().clone();
    Ok(WindowStats {
        mean: LogitMap::new(h, w, c, mean)?.with_legend(legend.clone())?,
        var: LogitMap::new(h, w, c, var)?.with_legend(legend)?,
    })
}

/// Scalar form of the blend rule, shared by [`blend`] and callers that
/// work pixel by pixel.
#[inline]
pub fn blend_value<T: Scalar>(l: T, m: T, s2: T, sigma2: T, variant: BlendVariant) -> T {
    let denom = sigma2 + s2;
    let w = match variant {
        BlendVariant::Conjugate => sigma2 / denom,
        BlendVariant::Literal => s2 / denom,
    };
    let v = l + w * (m - l);
    v.max(l.min(m)).min(l.max(m))
}

pub fn blend<T: Scalar>(
    l: &LogitMap<T>,
    mean: &LogitMap<T>,
    var: &LogitMap<T>,
    params: &SmoothingParams,
) -> Result<LogitMap<T>> {
    for other in [mean, var] {
        if other.height() != l.height() || other.width() != l.width() || other.classes() != l.classes() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", l.height(), l.width(), l.classes()),
                actual: format!("{}x{}x{}", other.height(), other.width(), other.classes()),
            });
        }
    }
    let sigma2 = T::of(params.sigma2);
    let data: Vec<T> = l
        .data()
        .par_iter()
        .zip(mean.data().par_iter())
        .zip(var.data().par_iter())
        .map(|((&lv, &mv), &sv)| blend_value(lv, mv, sv, sigma2, params.variant))
        .collect();
    LogitMap::new(l.height(), l.width(), l.classes(), data)?.with_legend(l.legend().clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed<T = f32> {
    /// Blended logits `ℓ'`.
    pub logits: LogitMap<T>,
    /// `softmax(ℓ')`.
    pub probs: ProbabilityMap<T>,
    /// Per-pixel argmax of `ℓ'` (identical to the argmax of `probs` up to
    /// rounding ties introduced by the softmax).
    pub labels: LabelMap,
}

pub fn smooth<T: Scalar>(l: &LogitMap<T>, params: &SmoothingParams) -> Result<Smoothed<T>> {
    let stats = window_stats(l, params)?;
    let logits = blend(l, &stats.mean, &stats.var, params)?;
    let probs = softmax(&logits);
    let labels = argmax_labels(&logits);
    Ok(Smoothed {
        logits,
        probs,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighborhood {
    #[default]
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrfParams {
    pub beta: f64,
    #[serde(default)]
    pub neighborhood: Neighborhood,
}

impl MrfParams {
    pub fn new(beta: f64, neighborhood: Neighborhood) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::invalid(format!("beta {beta} must be non-negative")));
        }
        Ok(Self { beta, neighborhood })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfEnergy {
    /// `-Σ log p(label)`.
    pub unary: f64,
    /// `β ·` number of neighbouring pairs with different labels.
    pub pairwise: f64,
}

impl MrfEnergy {
    pub fn total(&self) -> f64 {
        self.unary + self.pairwise
    }
}

/// Number of unordered neighbour pairs whose labels differ (unit weights).
pub fn disagreements(labels: &LabelMap, neighborhood: Neighborhood) -> u64 {
    let (h, w) = (labels.height(), labels.width());
    let d = labels.data();
    (0..h)
        .into_par_iter()
        .map(|r| {
            let mut count = 0u64;
            for c in 0..w {
                let v = d[r * w + c];
                if c + 1 < w && d[r * w + c + 1] != v {
                    count += 1;
                }
                if r + 1 < h {
                    if d[(r + 1) * w + c] != v {
                        count += 1;
                    }
                    if neighborhood == Neighborhood::Eight {
                        if c + 1 < w && d[(r + 1) * w + c + 1] != v {
                            count += 1;
                        }
                        if c > 0 && d[(r + 1) * w + c - 1] != v {
                            count += 1;
                        }
                    }
                }
            }
            count
        })
        .sum()
}

pub fn mrf_energy<T: Scalar>(labels: &LabelMap, p: &ProbabilityMap<T>, params: &MrfParams) -> Result<MrfEnergy> {
    labels.shape().same_plane(&crate::raster::Shape::new(p.height(), p.width(), 1))?;
    if let Some(&id) = labels.data().iter().find(|&&id| id as usize >= p.classes()) {
        return Err(Error::LabelOutOfRange {
            id,
            classes: p.classes(),
        });
    }
    let n = p.height() * p.width();
    let data = p.data();
    let unary: f64 = labels
        .data()
        .par_iter()
        .enumerate()
        .map(|(px, &c)| -data[c as usize * n + px].as_f64().max(1e-9).ln())
        .sum();
    let pairwise = params.beta * disagreements(labels, params.neighborhood) as f64;
    Ok(MrfEnergy { unary, pairwise })
}

/// Pixels none of whose 4-neighbours share their label.
pub fn isolated_pixels(labels: &LabelMap) -> usize {
    let (h, w) = (labels.height(), labels.width());
    let d = labels.data();
    (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .filter(|&c| {
                    let v = d[r * w + c];
                    let same = (c > 0 && d[r * w + c - 1] == v)
                        || (c + 1 < w && d[r * w + c + 1] == v)
                        || (r > 0 && d[(r - 1) * w + c] == v)
                        || (r + 1 < h && d[(r + 1) * w + c] == v);
                    !same && (h > 1 || w > 1)
                })
                .count()
        })
        .sum()
}
