//! Grid types and the per-pixel conversions between them.
//!
//! Every floating grid stores its samples band-sequentially (BSQ): all
//! pixels of channel 0 in row-major order, then channel 1, and so on. The
//! sample at `(channel, row, col)` lives at `channel * H * W + row * W + col`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default clamp used by [`probs_to_logits`].
pub const DEFAULT_LOGIT_EPS: f64 = 1e-6;

/// Tolerance on the per-pixel class sum of a [`ProbabilityMap`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.pixels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid(format!(
                "degenerate shape {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} samples for {self}", self.len()),
                actual: format!("{len} samples"),
            });
        }
        Ok(())
    }

    pub(crate) fn same_plane(&self, other: &Shape) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", other.height, other.width),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Class names indexed by class id. Ids are contiguous from zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Legend(Vec<String>);

impl Legend {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("legend must name at least one class"));
        }
        Ok(Self(names))
    }

    /// `class_0`, `class_1`, ...
    pub fn generic(classes: usize) -> Self {
        Self((0..classes.max(1)).map(|c| format!("class_{c}")).collect())
    }

    /// Water, vegetation, built area and bare ground, in that id order.
    pub fn land_cover() -> Self {
        Self(
            ["water", "vegetation", "built_area", "bare_ground"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.0.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, id: u8) -> bool {
        (id as usize) < self.0.len()
    }
}

/// Access shared by every floating BSQ grid, used by tiling and stitching.
pub trait Grid<T: Scalar>: Sized {
    fn shape(&self) -> Shape;
    fn values(&self) -> &[T];
    /// Builds a grid of the same kind and metadata with new extent and data.
    fn rebuild(&self, height: usize, width: usize, data: Vec<T>) -> Result<Self>;
}

/// H×W×B floating raster with optional band names and nodata marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandRaster<T = f32> {
    shape: Shape,
    data: Vec<T>,
    band_names: Vec<String>,
    nodata: Option<T>,
}

impl<T: Scalar> MultiBandRaster<T> {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(height, width, bands);
        shape.check_nonempty()?;
        shape.check_len(data.len())?;
        Ok(Self {
            shape,
            data,
            band_names: Vec::new(),
            nodata: None,
        })
    }

    pub fn filled(height: usize, width: usize, bands: usize, value: T) -> Result<Self> {
        Self::new(height, width, bands, vec![value; height * width * bands])
    }

    pub fn with_band_names(mut self, names: Vec<String>) -> Result<Self> {
        if !names.is_empty() && names.len() != self.shape.channels {
            return Err(Error::invalid(format!(
                "{} band names for {} bands",
                names.len(),
                self.shape.channels
            )));
        }
        self.band_names = names;
        Ok(self)
    }

    pub fn with_nodata(mut self, nodata: Option<T>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn bands(&self) -> usize {
        self.shape.channels
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn nodata(&self) -> Option<T> {
        self.nodata
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[T] {
        let n = self.shape.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> T {
        self.data[band * self.shape.pixels() + row * self.shape.width + col]
    }

    pub fn is_nodata(&self, v: T) -> bool {
        match self.nodata {
            Some(nd) => v == nd || (nd.is_nan() && v.is_nan()),
            None => false,
        }
    }

    /// Converts every sample to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MultiBandRaster<U> {
        MultiBandRaster {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            band_names: self.band_names.clone(),
            nodata: self.nodata.map(|v| U::of(v.as_f64())),
        }
    }
}

impl<T: Scalar> Grid<T> for MultiBandRaster<T> {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn values(&self) -> &[T] {
        &self.data
    }

    fn rebuild(&self, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let mut out = Self::new(height, width, self.shape.channels, data)?;
        out.band_names = self.band_names.clone();
        out.nodata = self.nodata;
        Ok(out)
    }
}

/// Per-pixel class probabilities; each pixel's vector lies on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap<T = f32> {
    shape: Shape,
    data: Vec<T>,
    legend: Legend,
}

impl<T: Scalar> ProbabilityMap<T> {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(height, width, classes);
        shape.check_nonempty()?;
        if classes < 2 {
            return Err(Error::invalid("a probability map needs at least 2 classes"));
        }
        shape.check_len(data.len())?;
        validate_simplex(&shape, &data)?;
        Ok(Self {
            shape,
            data,
            legend: Legend::generic(classes),
        })
    }

    pub fn from_raster(raster: MultiBandRaster<T>) -> Result<Self> {
        let names = raster.band_names.clone();
        let map = Self::new(raster.height(), raster.width(), raster.bands(), raster.data)?;
        if names.is_empty() {
            Ok(map)
        } else {
            map.with_legend(Legend::new(names)?)
        }
    }

    pub fn to_raster(&self) -> MultiBandRaster<T> {
        MultiBandRaster {
            shape: self.shape,
            data: self.data.clone(),
            band_names: self.legend.names().to_vec(),
            nodata: None,
        }
    }

    pub fn with_legend(mut self, legend: Legend) -> Result<Self> {
        check_legend_len(&legend, self.shape.channels)?;
        self.legend = legend;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn classes(&self) -> usize {
        self.shape.channels
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> T {
        self.data[class * self.shape.pixels() + row * self.shape.width + col]
    }
}

impl<T: Scalar> Grid<T> for ProbabilityMap<T> {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn values(&self) -> &[T] {
        &self.data
    }

    fn rebuild(&self, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::new(height, width, self.shape.channels, data)?.with_legend(self.legend.clone())
    }
}

/// Per-pixel unconstrained class scores (log-odds).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap<T = f32> {
    shape: Shape,
    data: Vec<T>,
    legend: Legend,
}

impl<T: Scalar> LogitMap<T> {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(height, width, classes);
        shape.check_nonempty()?;
        shape.check_len(data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite logit at sample {i}")));
        }
        Ok(Self {
            shape,
            data,
            legend: Legend::generic(classes),
        })
    }

    pub fn from_raster(raster: MultiBandRaster<T>) -> Result<Self> {
        let names = raster.band_names.clone();
        let map = Self::new(raster.height(), raster.width(), raster.bands(), raster.data)?;
        if names.is_empty() {
            Ok(map)
        } else {
            map.with_legend(Legend::new(names)?)
        }
    }

    pub fn to_raster(&self) -> MultiBandRaster<T> {
        MultiBandRaster {
            shape: self.shape,
            data: self.data.clone(),
            band_names: self.legend.names().to_vec(),
            nodata: None,
        }
    }

    pub fn with_legend(mut self, legend: Legend) -> Result<Self> {
        check_legend_len(&legend, self.shape.channels)?;
        self.legend = legend;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn classes(&self) -> usize {
        self.shape.channels
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.shape.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> T {
        self.data[class * self.shape.pixels() + row * self.shape.width + col]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T: Scalar> Grid<T> for LogitMap<T> {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn values(&self) -> &[T] {
        &self.data
    }

    fn rebuild(&self, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::new(height, width, self.shape.channels, data)?.with_legend(self.legend.clone())
    }
}

/// Single-channel probability of a flagged class against its partner.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProbMap<T = f32> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BinaryProbMap<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(height, width, 1);
        shape.check_nonempty()?;
        shape.check_len(data.len())?;
        if let Some(i) = data
            .iter()
            .position(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::invalid(format!(
                "binary probability {} at pixel {i} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_raster(raster: MultiBandRaster<T>) -> Result<Self> {
        if raster.bands() != 1 {
            return Err(Error::ShapeMismatch {
                expected: "1 band".into(),
                actual: format!("{} bands", raster.bands()),
            });
        }
        Self::new(raster.height(), raster.width(), raster.data)
    }

    pub fn to_raster(&self) -> MultiBandRaster<T> {
        MultiBandRaster {
            shape: self.shape(),
            data: self.data.clone(),
            band_names: Vec::new(),
            nodata: None,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, 1)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// `1 - e` at every pixel.
    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| T::one() - v).collect(),
        }
    }
}

/// H×W hard class ids with their legend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
    legend: Legend,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>, legend: Legend) -> Result<Self> {
        let shape = Shape::new(height, width, 1);
        shape.check_nonempty()?;
        shape.check_len(data.len())?;
        if let Some(&id) = data.iter().find(|&&id| !legend.contains(id)) {
            return Err(Error::LabelOutOfRange {
                id,
                classes: legend.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
            legend,
        })
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, 1)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn classes(&self) -> usize {
        self.legend.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    /// Number of pixels whose label differs from `other`.
    pub fn count_changed(&self, other: &LabelMap) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// H×W boolean pixel set, used for binary targets and loss domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        Shape::new(height, width, 1).check_len(data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Pixels whose label is any of `ids`.
    pub fn from_labels(labels: &LabelMap, ids: &[u8]) -> Self {
        Self {
            height: labels.height,
            width: labels.width,
            data: labels.data.iter().map(|l| ids.contains(l)).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, 1)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

fn check_legend_len(legend: &Legend, classes: usize) -> Result<()> {
    if legend.len() != classes {
        return Err(Error::invalid(format!(
            "legend names {} classes but the map has {classes}",
            legend.len()
        )));
    }
    Ok(())
}

fn validate_simplex<T: Scalar>(shape: &Shape, data: &[T]) -> Result<()> {
    let n = shape.pixels();
    if let Some(i) = data.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
        return Err(Error::invalid(format!(
            "probability {} at sample {i} is outside [0, 1]",
            data[i]
        )));
    }
    let bad = (0..n).into_par_iter().find_first(|&px| {
        let sum: f64 = (0..shape.channels).map(|c| data[c * n + px].as_f64()).sum();
        (sum - 1.0).abs() > SIMPLEX_TOLERANCE
    });
    match bad {
        Some(px) => Err(Error::invalid(format!(
            "class probabilities at pixel {px} do not sum to 1"
        ))),
        None => Ok(()),
    }
}

/// Log-odds of every probability after clamping it to `[eps, 1 - eps]`.
pub fn probs_to_logits<T: Scalar>(p: &ProbabilityMap<T>, eps: f64) -> Result<LogitMap<T>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("logit clamp eps {eps} outside (0, 0.5)")));
    }
    if p.shape.is_empty() {
        return Err(Error::invalid("probability map has no pixels"));
    }
    let data = p.data.par_iter().map(|&v| logit(v, eps)).collect();
    Ok(LogitMap {
        shape: p.shape,
        data,
        legend: p.legend.clone(),
    })
}

pub(crate) fn logit<T: Scalar>(v: T, eps: f64) -> T {
    let q = v.as_f64().clamp(eps, 1.0 - eps);
    T::of((q / (1.0 - q)).ln())
}

/// Channel-wise softmax, stabilised by subtracting each pixel's maximum.
pub fn softmax<T: Scalar>(l: &LogitMap<T>) -> ProbabilityMap<T> {
    let shape = l.shape;
    let n = shape.pixels();
    let c = shape.channels;
    let data = &l.data;
    let max: Vec<T> = (0..n)
        .into_par_iter()
        .map(|px| {
            (1..c).fold(data[px], |m, ch| m.max(data[ch * n + px]))
        })
        .collect();
    let denom: Vec<T> = (0..n)
        .into_par_iter()
        .map(|px| {
            (0..c).fold(T::zero(), |s, ch| s + (data[ch * n + px] - max[px]).exp())
        })
        .collect();
    let mut out = vec![T::zero(); shape.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(ch, plane)| {
        let src = &data[ch * n..(ch + 1) * n];
        for px in 0..n {
            plane[px] = ((src[px] - max[px]).exp() / denom[px]).min(T::one());
        }
    });
    ProbabilityMap {
        shape,
        data: out,
        legend: l.legend.clone(),
    }
}

/// Per-class score grids that can be reduced to hard labels.
pub trait ClassScores<T: Scalar> {
    fn score_shape(&self) -> Shape;
    fn scores(&self) -> &[T];
    fn score_legend(&self) -> &Legend;
}

impl<T: Scalar> ClassScores<T> for ProbabilityMap<T> {
    fn score_shape(&self) -> Shape {
        self.shape
    }
    fn scores(&self) -> &[T] {
        &self.data
    }
    fn score_legend(&self) -> &Legend {
        &self.legend
    }
}

impl<T: Scalar> ClassScores<T> for LogitMap<T> {
    fn score_shape(&self) -> Shape {
        self.shape
    }
    fn scores(&self) -> &[T] {
        &self.data
    }
    fn score_legend(&self) -> &Legend {
        &self.legend
    }
}

/// Per-pixel index of the largest channel; ties go to the lowest class id.
pub fn argmax_labels<T: Scalar, M: ClassScores<T>>(m: &M) -> LabelMap {
    let shape = m.score_shape();
    let n = shape.pixels();
    let data = m.scores();
    let mut labels = vec![0u8; n];
    labels
        .par_chunks_mut(shape.width)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, slot) in out.iter_mut().enumerate() {
                let px = row * shape.width + col;
                let mut best = 0usize;
                let mut best_v = data[px];
                for ch in 1..shape.channels {
                    let v = data[ch * n + px];
                    if v > best_v {
                        best = ch;
                        best_v = v;
                    }
                }
                *slot = best as u8;
            }
        });
    LabelMap {
        height: shape.height,
        width: shape.width,
        data: labels,
        legend: m.score_legend().clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(h: usize, w: usize, c: usize, per_pixel: &[f32]) -> ProbabilityMap<f32> {
        // per_pixel is pixel-interleaved; convert to BSQ
        let n = h * w;
        let mut data = vec![0.0; n * c];
        for px in 0..n {
            for ch in 0..c {
                data[ch * n + px] = per_pixel[px * c + ch];
            }
        }
        ProbabilityMap::new(h, w, c, data).unwrap()
    }

    #[test]
    fn logit_of_half_is_zero() {
        let p = probs(2, 2, 2, &[0.5; 8]);
        let l = probs_to_logits(&p, DEFAULT_LOGIT_EPS).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logit_clamps_certain_probability() {
        let p = probs(1, 1, 2, &[1.0, 0.0]);
        let l = probs_to_logits::<f64>(&ProbabilityMap::new(1, 1, 2, vec![1.0, 0.0]).unwrap(), 1e-6)
            .unwrap();
        // ln((1 - 1e-6) / 1e-6)
        assert!((l.get(0, 0, 0) - 13.815_509_557_963_773).abs() < 1e-9);
        assert!((l.get(1, 0, 0) + 13.815_509_557_963_773).abs() < 1e-9);
        let l32 = probs_to_logits(&p, 1e-6).unwrap();
        assert!((l32.get(0, 0, 0) - 13.8155).abs() < 1e-3);
    }

    #[test]
    fn logit_quarter_three_quarters() {
        let p = probs(1, 1, 2, &[0.25, 0.75]);
        let l = probs_to_logits(&p, DEFAULT_LOGIT_EPS).unwrap();
        assert!((l.get(0, 0, 0) + 1.098_612_3).abs() < 1e-5);
        assert!((l.get(1, 0, 0) - 1.098_612_3).abs() < 1e-5);
    }

    #[test]
    fn logit_rejects_bad_eps() {
        let p = probs(1, 1, 2, &[0.5, 0.5]);
        assert!(probs_to_logits(&p, 0.0).is_err());
        assert!(probs_to_logits(&p, 0.5).is_err());
    }

    #[test]
    fn degenerate_shapes_are_rejected() {
        assert!(ProbabilityMap::<f32>::new(0, 3, 2, vec![]).is_err());
        assert!(LogitMap::<f32>::new(2, 0, 2, vec![]).is_err());
        assert!(MultiBandRaster::<f32>::new(1, 1, 0, vec![]).is_err());
    }

    #[test]
    fn softmax_uniform_and_known_pair() {
        let l = LogitMap::new(1, 1, 4, vec![0.0f32; 4]).unwrap();
        assert!(softmax(&l).data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        let l = LogitMap::new(1, 1, 2, vec![1.0f64, 0.0]).unwrap();
        let p = softmax(&l);
        let e = std::f64::consts::E;
        assert!((p.get(0, 0, 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((p.get(1, 0, 0) - 0.268_941_4).abs() < 1e-6);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let base = vec![0.3f64, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 100.0).collect();
        let a = softmax(&LogitMap::new(1, 1, 4, base).unwrap());
        let b = softmax(&LogitMap::new(1, 1, 4, shifted).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_basic_and_tie() {
        let p = probs(1, 2, 4, &[0.1, 0.7, 0.1, 0.1, 0.25, 0.25, 0.25, 0.25]);
        assert_eq!(argmax_labels(&p).data(), &[1, 0]);
        let p = probs(1, 1, 2, &[0.5, 0.5]);
        assert_eq!(argmax_labels(&p).data(), &[0]);
    }

    #[test]
    fn probability_map_rejects_off_simplex() {
        assert!(ProbabilityMap::new(1, 1, 2, vec![0.6f32, 0.6]).is_err());
        assert!(ProbabilityMap::new(1, 1, 2, vec![1.2f32, -0.2]).is_err());
        assert!(ProbabilityMap::new(1, 1, 1, vec![1.0f32]).is_err());
    }

    #[test]
    fn label_map_checks_legend() {
        assert!(LabelMap::new(1, 2, vec![0, 4], Legend::land_cover()).is_err());
        assert!(LabelMap::new(1, 2, vec![0, 3], Legend::land_cover()).is_ok());
    }

    #[test]
    fn logit_map_rejects_non_finite() {
        assert!(LogitMap::new(1, 1, 2, vec![f32::NAN, 0.0]).is_err());
        assert!(LogitMap::new(1, 1, 2, vec![f32::INFINITY, 0.0]).is_err());
    }
}
