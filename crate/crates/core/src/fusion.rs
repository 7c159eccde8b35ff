//! Confused-pair detection, expert override and the end-to-end pipeline.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{metrics, ConfusionMatrix};
use crate::raster::{
    argmax_labels, logit, probs_to_logits, BinaryProbMap, LabelMap, LogitMap, ProbabilityMap,
    DEFAULT_LOGIT_EPS,
};
use crate::scalar::Scalar;
use crate::smoothing::{smooth, SmoothingParams};

pub const DEFAULT_TAU: f64 = 0.5;

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Override rule: inside the pair's pixels, an expert score `>= tau`
/// selects the flagged class `k`, anything lower selects the partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionRule {
    pub k: u8,
    pub k_prime: u8,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl FusionRule {
    pub fn new(k: u8, k_prime: u8, tau: f64) -> Result<Self> {
        let rule = Self { k, k_prime, tau };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == self.k_prime {
            return Err(Error::invalid(format!(
                "rule pairs class {} with itself",
                self.k
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!("tau {} outside (0, 1)", self.tau)));
        }
        Ok(())
    }

    fn check_legend(&self, classes: usize) -> Result<()> {
        self.validate()?;
        for id in [self.k, self.k_prime] {
            if id as usize >= classes {
                return Err(Error::LabelOutOfRange { id, classes });
            }
        }
        Ok(())
    }
}

pub fn rules_from_json(s: &str) -> Result<Vec<FusionRule>> {
    let rules: Vec<FusionRule> = serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
    for r in &rules {
        r.validate()?;
    }
    Ok(rules)
}

pub fn rules_to_json(rules: &[FusionRule]) -> String {
    serde_json::to_string_pretty(rules).expect("rules serialize")
}

/// Ranks class pairs by symmetric off-diagonal mass over the smaller
/// reference total and returns up to `top_n` rules.
///
/// Within a pair the class with the lower F1 is flagged (an undefined F1
/// counts as lowest; equal F1 flags the lower id). Equal scores are ordered
/// by the pair's lower id, then its higher id.
pub fn detect_confusion(cm: &ConfusionMatrix, top_n: usize) -> Result<Vec<FusionRule>> {
    let report = metrics(cm)?;
    let c = cm.classes();
    let f1 = |i: usize| {
        let v = report.f1[i];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut pairs = Vec::new();
    for a in 0..c {
        for b in a + 1..c {
            let mass = cm.count(a, b) + cm.count(b, a);
            if mass == 0 {
                continue;
            }
            let smaller = cm.col_total(a).min(cm.col_total(b));
            let score = if smaller == 0 {
                f64::INFINITY
            } else {
                mass as f64 / smaller as f64
            };
            pairs.push((score, a, b));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    Ok(pairs
        .into_iter()
        .take(top_n)
        .map(|(_, a, b)| {
            let (k, k_prime) = if f1(b) < f1(a) { (b, a) } else { (a, b) };
            FusionRule {
                k: k as u8,
                k_prime: k_prime as u8,
                tau: DEFAULT_TAU,
            }
        })
        .collect())
}

fn check_expert<T: Scalar>(labels: &LabelMap, expert: &BinaryProbMap<T>) -> Result<()> {
    labels.shape().same_plane(&expert.shape())
}

/// Rewrites the pixels labelled `k` or `k_prime`; all other pixels keep
/// their label.
pub fn expert_override<T: Scalar>(
    coarse: &LabelMap,
    expert: &BinaryProbMap<T>,
    rule: &FusionRule,
) -> Result<LabelMap> {
    check_expert(coarse, expert)?;
    rule.check_legend(coarse.classes())?;
    let tau = T::of(rule.tau);
    let data: Vec<u8> = coarse
        .data()
        .par_iter()
        .zip(expert.data().par_iter())
        .map(|(&label, &e)| {
            if label == rule.k || label == rule.k_prime {
                if e >= tau {
                    rule.k
                } else {
                    rule.k_prime
                }
            } else {
                label
            }
        })
        .collect();
    LabelMap::new(coarse.height(), coarse.width(), data, coarse.legend().clone())
}

/// Carries an override into logit space: on the pair's pixels the flagged
/// channel gets the expert's log-odds measured from the threshold and the
/// partner gets its negation. Other channels and pixels are unchanged.
pub fn override_logits<T: Scalar>(
    logits: &mut LogitMap<T>,
    before: &LabelMap,
    expert: &BinaryProbMap<T>,
    rule: &FusionRule,
    eps: f64,
) -> Result<()> {
    check_expert(before, expert)?;
    rule.check_legend(logits.classes())?;
    let n = logits.height() * logits.width();
    let offset = logit(T::of(rule.tau), eps);
    let (k, kp) = (rule.k as usize, rule.k_prime as usize);
    let data = logits.data_mut();
    for (px, (&label, &e)) in before.data().iter().zip(expert.data()).enumerate() {
        if label == rule.k || label == rule.k_prime {
            let v = logit(e, eps) - offset;
            data[k * n + px] = v;
            data[kp * n + px] = -v;
        }
    }
    Ok(())
}

/// Intermediate and final products of [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput<T = f32> {
    pub coarse: LabelMap,
    /// Labels after all overrides, before smoothing.
    pub fused: LabelMap,
    /// Pixels changed by each rule, in rule order.
    pub changed_per_rule: Vec<usize>,
    /// Present when smoothing ran.
    pub smoothed_probs: Option<ProbabilityMap<T>>,
    pub labels: LabelMap,
}

/// Coarse argmax, then each rule's override in order, then optional
/// smoothing of the override-adjusted logits and a final argmax.
///
/// `experts` is keyed by the flagged class of each rule. With `smoothing`
/// set to `None` the fused labels are returned as final.
pub fn run_pipeline<T: Scalar>(
    p: &ProbabilityMap<T>,
    experts: &BTreeMap<u8, BinaryProbMap<T>>,
    rules: &[FusionRule],
    smoothing: Option<&SmoothingParams>,
) -> Result<PipelineOutput<T>> {
    for rule in rules {
        rule.check_legend(p.classes())?;
        let expert = experts.get(&rule.k).ok_or(Error::MissingExpert(rule.k))?;
        if expert.height() != p.height() || expert.width() != p.width() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", p.height(), p.width()),
                actual: format!("{}x{} expert for class {}", expert.height(), expert.width(), rule.k),
            });
        }
    }
    if let Some(params) = smoothing {
        params.validate()?;
    }

    let coarse = argmax_labels(p);
    let mut logits = match smoothing {
        Some(_) => Some(probs_to_logits(p, DEFAULT_LOGIT_EPS)?),
        None => None,
    };
    let mut fused = coarse.clone();
    let mut changed_per_rule = Vec::with_capacity(rules.len());
    for rule in rules {
        let expert = &experts[&rule.k];
        let next = expert_override(&fused, expert, rule)?;
        if let Some(l) = logits.as_mut() {
            override_logits(l, &fused, expert, rule, DEFAULT_LOGIT_EPS)?;
        }
        changed_per_rule.push(next.count_changed(&fused));
        fused = next;
    }

    let (smoothed_probs, labels) = match (smoothing, logits) {
        (Some(params), Some(l)) => {
            let s = smooth(&l, params)?;
            (Some(s.probs), s.labels)
        }
        _ => (None, fused.clone()),
    };
    Ok(PipelineOutput {
        coarse,
        fused,
        changed_per_rule,
        smoothed_probs,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Legend;

    const WATER: u8 = 0;
    const VEG: u8 = 1;
    const BUILT: u8 = 2;

    fn labels(data: Vec<u8>) -> LabelMap {
        LabelMap::new(1, data.len(), data, Legend::land_cover()).unwrap()
    }

    fn expert(data: Vec<f32>) -> BinaryProbMap<f32> {
        BinaryProbMap::new(1, data.len(), data).unwrap()
    }

    #[test]
    fn rule_validation() {
        assert!(FusionRule::new(1, 1, 0.5).is_err());
        assert!(FusionRule::new(1, 0, 0.0).is_err());
        assert!(FusionRule::new(1, 0, 1.0).is_err());
        let rules = rules_from_json(r#"[{"k":1,"k_prime":0}]"#).unwrap();
        assert_eq!(rules, vec![FusionRule::new(1, 0, 0.5).unwrap()]);
        assert_eq!(rules_from_json(&rules_to_json(&rules)).unwrap(), rules);
    }

    #[test]
    fn override_branches() {
        let rule = FusionRule::new(VEG, WATER, 0.5).unwrap();
        let out = expert_override(&labels(vec![WATER; 3]), &expert(vec![1.0; 3]), &rule).unwrap();
        assert_eq!(out.data(), &[VEG; 3]);
        let out = expert_override(&labels(vec![BUILT; 3]), &expert(vec![0.9, 0.1, 0.5]), &rule).unwrap();
        assert_eq!(out.data(), &[BUILT; 3]);
        let out = expert_override(
            &labels(vec![VEG, WATER, BUILT]),
            &expert(vec![0.4, 0.6, 0.9]),
            &rule,
        )
        .unwrap();
        assert_eq!(out.data(), &[WATER, VEG, BUILT]);
    }

    #[test]
    fn override_rejects_foreign_classes() {
        let small = LabelMap::new(1, 2, vec![0, 1], Legend::generic(2)).unwrap();
        let rule = FusionRule::new(3, 0, 0.5).unwrap();
        assert!(expert_override(&small, &expert(vec![0.5, 0.5]), &rule).is_err());
    }

    #[test]
    fn detect_on_diagonal_is_empty() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 5]]).unwrap();
        assert!(detect_confusion(&cm, 3).unwrap().is_empty());
    }

    #[test]
    fn detect_flags_vegetation_against_water() {
        // rows classified, columns reference: much vegetation classified as water
        let cm = ConfusionMatrix::from_rows(&[
            vec![900, 300, 5, 5],
            vec![20, 600, 5, 5],
            vec![5, 5, 1000, 10],
            vec![5, 5, 10, 800],
        ])
        .unwrap();
        let rules = detect_confusion(&cm, 1).unwrap();
        assert_eq!(rules, vec![FusionRule::new(VEG, WATER, 0.5).unwrap()]);
    }

    #[test]
    fn detect_ties_order_by_lower_id() {
        let cm = ConfusionMatrix::from_rows(&[
            vec![90, 0, 0, 0],
            vec![0, 100, 0, 0],
            vec![0, 0, 90, 0],
            vec![10, 0, 10, 100],
        ])
        .unwrap();
        // pairs (0,3) and (2,3) both score 10/100
        let rules = detect_confusion(&cm, 5).unwrap();
        let pairs: Vec<_> = rules.iter().map(|r| (r.k.min(r.k_prime), r.k.max(r.k_prime))).collect();
        assert_eq!(pairs, vec![(0, 3), (2, 3)]);
    }

    #[test]
    fn pipeline_requires_experts() {
        let p = ProbabilityMap::new(1, 1, 4, vec![0.25f32; 4]).unwrap();
        let rule = FusionRule::new(VEG, WATER, 0.5).unwrap();
        assert!(matches!(
            run_pipeline(&p, &BTreeMap::new(), &[rule], None),
            Err(Error::MissingExpert(1))
        ));
    }

    #[test]
    fn handoff_logits_follow_override_at_default_tau() {
        // pixel 0: coarse water, expert says vegetation
        let p = ProbabilityMap::new(1, 1, 3, vec![0.5f64, 0.3, 0.2]).unwrap();
        let mut l = probs_to_logits(&p, DEFAULT_LOGIT_EPS).unwrap();
        let coarse = argmax_labels(&p);
        let e = BinaryProbMap::new(1, 1, vec![0.8f64]).unwrap();
        let rule = FusionRule::new(1, 0, 0.5).unwrap();
        override_logits(&mut l, &coarse, &e, &rule, DEFAULT_LOGIT_EPS).unwrap();
        assert!((l.get(1, 0, 0) - 4f64.ln()).abs() < 1e-12);
        assert!((l.get(0, 0, 0) + 4f64.ln()).abs() < 1e-12);
        assert_eq!(argmax_labels(&l).data(), &[1]);
    }
}
