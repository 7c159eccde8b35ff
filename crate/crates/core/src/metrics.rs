//! Cross-entropy evaluators and the land-cover accuracy suite.
//!
//! Confusion matrices are laid out with rows = classified (predicted) class
//! and columns = reference (truth) class. Precision / user accuracy divide
//! the diagonal by row totals; recall / producer accuracy divide it by
//! column totals.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryProbMap, LabelMap, Legend, PixelMask, ProbabilityMap};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[LOSS_EPS, 1 - LOSS_EPS]` before taking logs.
pub const LOSS_EPS: f64 = 1e-9;

fn clamped_ln(p: f64) -> f64 {
    p.clamp(LOSS_EPS, 1.0 - LOSS_EPS).ln()
}

/// Summed negative log-likelihood of the true class plus `lambda * param_sq_norm`.
pub fn multiclass_ce_loss<T: Scalar>(
    p: &ProbabilityMap<T>,
    y: &LabelMap,
    lambda: f64,
    param_sq_norm: f64,
) -> Result<f64> {
    p_shape_matches(p.height(), p.width(), y)?;
    if !(lambda >= 0.0) || !(param_sq_norm >= 0.0) {
        return Err(Error::invalid("lambda and the parameter norm must be non-negative"));
    }
    let classes = p.classes();
    if let Some(&id) = y.data().iter().find(|&&id| id as usize >= classes) {
        return Err(Error::LabelOutOfRange { id, classes });
    }
    let n = p.height() * p.width();
    let data = p.data();
    let nll: f64 = y
        .data()
        .par_iter()
        .enumerate()
        .map(|(px, &c)| -clamped_ln(data[c as usize * n + px].as_f64()))
        .sum();
    Ok(nll + lambda * param_sq_norm)
}

fn p_shape_matches(h: usize, w: usize, y: &LabelMap) -> Result<()> {
    if h != y.height() || w != y.width() {
        return Err(Error::ShapeMismatch {
            expected: format!("{h}x{w}"),
            actual: format!("{}x{}", y.height(), y.width()),
        });
    }
    Ok(())
}

/// Binary cross-entropy restricted to a pixel domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryLoss {
    pub value: f64,
    /// Set when the domain is empty; `value` is then 0.
    pub empty_domain: bool,
}

pub fn binary_ce_loss<T: Scalar>(
    g: &BinaryProbMap<T>,
    y: &PixelMask,
    domain: &PixelMask,
) -> Result<BinaryLoss> {
    g.shape().same_plane(&y.shape())?;
    g.shape().same_plane(&domain.shape())?;
    let pixels = domain.count();
    if pixels == 0 {
        return Ok(BinaryLoss {
            value: 0.0,
            empty_domain: true,
        });
    }
    let value: f64 = g
        .data()
        .par_iter()
        .zip(y.data().par_iter())
        .zip(domain.data().par_iter())
        .filter(|(_, &inside)| inside)
        .map(|((&e, &target), _)| {
            let e = e.as_f64();
            if target {
                -clamped_ln(e)
            } else {
                -clamped_ln(1.0 - e)
            }
        })
        .sum();
    Ok(BinaryLoss {
        value,
        empty_domain: false,
    })
}

/// C×C pixel counts; `count(r, c)` = pixels predicted `r` whose truth is `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    legend: Option<Legend>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
            legend: None,
        }
    }

    /// Builds a matrix from row-major rows (classified) of column counts (reference).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if classes == 0 || rows.iter().any(|r| r.len() != classes) {
            return Err(Error::invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
            legend: None,
        })
    }

    pub fn with_legend(mut self, legend: Legend) -> Result<Self> {
        if legend.len() != self.classes {
            return Err(Error::invalid(format!(
                "legend has {} names for {} classes",
                legend.len(),
                self.classes
            )));
        }
        self.legend = Some(legend);
        Ok(self)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn legend(&self) -> Option<&Legend> {
        self.legend.as_ref()
    }

    pub fn count(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.classes + truth]
    }

    pub fn row_total(&self, r: usize) -> u64 {
        self.counts[r * self.classes..(r + 1) * self.classes].iter().sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|r| self.count(r, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.count(i, i)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.classes)
            .all(|r| (0..self.classes).all(|c| r == c || self.count(r, c) == 0))
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            classes: self.classes,
            counts: self.counts.iter().map(|&v| v * factor).collect(),
            legend: self.legend.clone(),
        }
    }

    fn add(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    fn name(&self, c: usize) -> String {
        self.legend
            .as_ref()
            .and_then(|l| l.names().get(c).cloned())
            .unwrap_or_else(|| format!("class_{c}"))
    }
}

/// Tallies `pred` against `truth`, skipping pixels whose truth is `ignore`.
pub fn confusion(pred: &LabelMap, truth: &LabelMap, ignore: Option<u8>) -> Result<ConfusionMatrix> {
    pred.shape().same_plane(&truth.shape())?;
    let legend = if pred.classes() >= truth.classes() {
        pred.legend().clone()
    } else {
        truth.legend().clone()
    };
    let classes = legend.len();
    let width = pred.width();
    let cm = pred
        .data()
        .par_chunks(width)
        .zip(truth.data().par_chunks(width))
        .fold(
            || ConfusionMatrix::zeros(classes),
            |mut cm, (p_row, t_row)| {
                for (&p, &t) in p_row.iter().zip(t_row) {
                    if Some(t) == ignore {
                        continue;
                    }
                    cm.counts[p as usize * classes + t as usize] += 1;
                }
                cm
            },
        )
        .reduce(|| ConfusionMatrix::zeros(classes), |a, b| a.add(&b));
    Ok(ConfusionMatrix {
        legend: Some(legend),
        ..cm
    })
}

/// Per-class and overall accuracy figures. Undefined ratios are NaN
/// (serialized as JSON `null`), never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub classes: Vec<String>,
    pub dice: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub producer_acc: Vec<f64>,
    pub user_acc: Vec<f64>,
    /// Share of reference pixels in each class.
    pub class_weights: Vec<f64>,
    pub overall_acc: f64,
    pub kappa: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let c = cm.classes;
    let rows: Vec<u64> = (0..c).map(|i| cm.row_total(i)).collect();
    let cols: Vec<u64> = (0..c).map(|i| cm.col_total(i)).collect();
    let diag: Vec<u64> = (0..c).map(|i| cm.count(i, i)).collect();

    let precision: Vec<f64> = (0..c).map(|i| ratio(diag[i], rows[i])).collect();
    let recall: Vec<f64> = (0..c).map(|i| ratio(diag[i], cols[i])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { f64::NAN })
        .collect();

    let overall_acc = ratio(cm.trace(), total);
    // chance agreement, exact in integers before the final division
    let chance: u128 = rows
        .iter()
        .zip(&cols)
        .map(|(&r, &c)| r as u128 * c as u128)
        .sum();
    let p_e = chance as f64 / (total as f64 * total as f64);
    let kappa = if p_e < 1.0 {
        (overall_acc - p_e) / (1.0 - p_e)
    } else {
        f64::NAN
    };

    Ok(MetricReport {
        classes: (0..c).map(|i| cm.name(i)).collect(),
        dice: f1.clone(),
        user_acc: precision.clone(),
        producer_acc: recall.clone(),
        precision,
        recall,
        f1,
        class_weights: cols.iter().map(|&n| n as f64 / total as f64).collect(),
        overall_acc,
        kappa,
        total,
    })
}

impl MetricReport {
    /// `Σ_c w_c · recall_c`, which equals the overall accuracy.
    pub fn weighted_recall(&self) -> f64 {
        self.class_weights
            .iter()
            .zip(&self.recall)
            .filter(|(&w, _)| w > 0.0)
            .map(|(w, r)| w * r)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn pct(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{:.2}", v * 100.0)
    }
}

/// Confusion-matrix table with totals, user accuracy per classified row,
/// producer accuracy per reference column, overall accuracy and kappa.
impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let report = metrics(self).ok();
        let c = self.classes;
        let label_w = (0..c)
            .map(|i| self.name(i).len())
            .chain(["Producer acc (%)".len()])
            .max()
            .unwrap_or(0);
        let cell_w = (0..c)
            .map(|i| self.name(i).len())
            .chain([self.total().to_string().len(), 9])
            .max()
            .unwrap_or(9)
            + 2;

        write!(f, "{:<label_w$}", "classified \\ reference")?;
        for i in 0..c {
            write!(f, "{:>cell_w$}", self.name(i))?;
        }
        writeln!(f, "{:>cell_w$}{:>14}", "Total", "User acc (%)")?;
        for r in 0..c {
            write!(f, "{:<label_w$}", self.name(r))?;
            for col in 0..c {
                write!(f, "{:>cell_w$}", self.count(r, col))?;
            }
            let ua = report.as_ref().map_or(f64::NAN, |m| m.user_acc[r]);
            writeln!(f, "{:>cell_w$}{:>14}", self.row_total(r), pct(ua))?;
        }
        write!(f, "{:<label_w$}", "Total")?;
        for col in 0..c {
            write!(f, "{:>cell_w$}", self.col_total(col))?;
        }
        writeln!(f, "{:>cell_w$}", self.total())?;
        write!(f, "{:<label_w$}", "Producer acc (%)")?;
        for col in 0..c {
            let pa = report.as_ref().map_or(f64::NAN, |m| m.producer_acc[col]);
            write!(f, "{:>cell_w$}", pct(pa))?;
        }
        writeln!(f)?;
        if let Some(m) = report {
            writeln!(f, "Overall accuracy (%): {}", pct(m.overall_acc))?;
            writeln!(f, "Kappa statistic: {:.3}", m.kappa)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Legend;

    fn labels(data: Vec<u8>, classes: usize) -> LabelMap {
        LabelMap::new(1, data.len(), data, Legend::generic(classes)).unwrap()
    }

    #[test]
    fn ce_half_half_is_ln2() {
        let p = ProbabilityMap::new(1, 1, 2, vec![0.5f64, 0.5]).unwrap();
        let y = labels(vec![1], 2);
        let l = multiclass_ce_loss(&p, &y, 0.0, 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_perfect_and_regularizer() {
        let p = ProbabilityMap::new(1, 2, 2, vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let y = labels(vec![0, 1], 2);
        let l = multiclass_ce_loss(&p, &y, 0.0, 0.0).unwrap();
        assert!(l.abs() < 1e-8, "{l}");
        let l = multiclass_ce_loss(&p, &y, 0.1, 4.0).unwrap();
        assert!((l - 0.4).abs() < 1e-8);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let p = ProbabilityMap::new(1, 1, 2, vec![0.5f32, 0.5]).unwrap();
        let y = labels(vec![2], 3);
        assert!(matches!(
            multiclass_ce_loss(&p, &y, 0.0, 0.0),
            Err(Error::LabelOutOfRange { id: 2, classes: 2 })
        ));
    }

    #[test]
    fn bce_cases() {
        let g = BinaryProbMap::new(1, 3, vec![1.0f64, 0.0, 0.5]).unwrap();
        let y = PixelMask::new(1, 3, vec![true, false, true]).unwrap();
        let first_two = PixelMask::new(1, 3, vec![true, true, false]).unwrap();
        assert!(binary_ce_loss(&g, &y, &first_two).unwrap().value < 1e-8);
        let last = PixelMask::new(1, 3, vec![false, false, true]).unwrap();
        let l = binary_ce_loss(&g, &y, &last).unwrap();
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-12);
        let none = PixelMask::new(1, 3, vec![false; 3]).unwrap();
        let l = binary_ce_loss(&g, &y, &none).unwrap();
        assert_eq!(l, BinaryLoss { value: 0.0, empty_domain: true });
    }

    #[test]
    fn confusion_simple() {
        let p = labels(vec![0; 10], 2);
        let cm = confusion(&p, &p, None).unwrap();
        assert_eq!(cm.count(0, 0), 10);
        assert_eq!(cm.total(), 10);
        let p = labels(vec![1; 5], 2);
        let t = labels(vec![0; 5], 2);
        let cm = confusion(&p, &t, None).unwrap();
        assert_eq!(cm.count(1, 0), 5);
        assert_eq!(cm.total(), 5);
    }

    #[test]
    fn confusion_ignore_and_shape() {
        let p = labels(vec![0, 1, 1], 3);
        let t = labels(vec![2, 2, 1], 3);
        let cm = confusion(&p, &t, Some(2)).unwrap();
        assert_eq!(cm.total(), 1);
        let short = labels(vec![0, 1], 3);
        assert!(confusion(&p, &short, None).is_err());
    }

    #[test]
    fn identity_matrix_metrics() {
        let cm = ConfusionMatrix::from_rows(&[vec![7, 0, 0], vec![0, 7, 0], vec![0, 0, 7]]).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.overall_acc, 1.0);
        assert_eq!(m.kappa, 1.0);
        for v in [&m.precision, &m.recall, &m.f1, &m.dice] {
            assert!(v.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn chance_agreement_kappa_zero() {
        let cm = ConfusionMatrix::from_rows(&[vec![50, 50], vec![50, 50]]).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.overall_acc, 0.5);
        assert_eq!(m.kappa, 0.0);
    }

    #[test]
    fn empty_class_rates_are_nan() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 0]]).unwrap();
        let m = metrics(&cm).unwrap();
        assert!(m.precision[1].is_nan());
        assert!(m.recall[1].is_nan());
        assert!(m.f1[1].is_nan());
        assert!(m.to_json().contains("null"));
        assert!(matches!(metrics(&ConfusionMatrix::zeros(3)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn table_lists_totals() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![0, 4]]).unwrap();
        let text = cm.to_string();
        assert!(text.contains("Overall accuracy (%): 87.50"), "{text}");
        assert!(text.contains("Producer acc (%)"));
    }
}
