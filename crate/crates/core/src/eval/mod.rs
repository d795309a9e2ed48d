//! Ranking evaluation, synthetic data, and experiment runners.

mod experiment;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::conesvm::{LabeledExample, SvmModel};
use crate::featspace::{dot, FeatureVector};
use crate::io::VectorRecord;
use crate::{Error, Result};

pub use experiment::{
    run_cross_dataset_experiment, run_low_data_experiment, simulated_prior, ConditionResult,
    CrossDatasetConfig, CrossDatasetRecipe, ExperimentReport, LowDataConfig, LowDataRecipe,
};
pub use synthetic::{generate_synthetic, SyntheticDatasetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: i8,
    pub id: String,
}

/// A labeled vector with a stable id, the unit of every dataset here.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub x: FeatureVector,
    pub y: i8,
}

impl LabeledSample {
    pub fn example(&self) -> LabeledExample {
        LabeledExample {
            x: self.x.clone(),
            y: self.y,
        }
    }

    pub fn from_record(record: &VectorRecord) -> Result<Self> {
        record.validate()?;
        let y = record
            .label
            .ok_or_else(|| Error::invalid(format!("record {} has no label", record.id)))?;
        Ok(Self {
            id: record.id.clone(),
            x: record.vector()?,
            y,
        })
    }

    pub fn to_record(&self) -> VectorRecord {
        VectorRecord::labeled(self.id.clone(), &self.x, self.y)
    }
}

/// Summary written by the `eval` tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    pub chance: f64,
    pub n: usize,
    pub n_pos: usize,
}

/// All-points average precision.
///
/// Items are ranked by descending score, ties broken by ascending id. With
/// `P` positives, AP is the mean over positives of the precision at their
/// rank, which equals the sum of `(R_k - R_{k-1}) P_k`.
pub fn average_precision(items: &[ScoredLabel]) -> Result<f64> {
    if let Some(bad) = items.iter().find(|i| !i.score.is_finite()) {
        return Err(Error::invalid(format!("score of {} is not finite", bad.id)));
    }
    if let Some(bad) = items.iter().find(|i| i.label != 1 && i.label != -1) {
        return Err(Error::invalid(format!("label of {} must be -1 or 1", bad.id)));
    }
    let n_pos = items.iter().filter(|i| i.label == 1).count();
    if n_pos == 0 {
        return Err(Error::invalid(
            "average precision is undefined without positive examples",
        ));
    }
    let mut order: Vec<&ScoredLabel> = items.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, item) in order.iter().enumerate() {
        if item.label == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Positive prevalence; 0 for an empty list.
pub fn chance_ap(labels: &[i8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|l| **l == 1).count() as f64 / labels.len() as f64
}

/// AP of an arbitrary scoring function over a dataset.
pub fn evaluate_scores(data: &[LabeledSample], score: impl Fn(&FeatureVector) -> Result<f64>) -> Result<ApResult> {
    let items = data
        .iter()
        .map(|s| {
            Ok(ScoredLabel {
                score: score(&s.x)?,
                label: s.y,
                id: s.id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<i8> = data.iter().map(|s| s.y).collect();
    Ok(ApResult {
        ap: average_precision(&items)?,
        chance: chance_ap(&labels),
        n: data.len(),
        n_pos: labels.iter().filter(|l| **l == 1).count(),
    })
}

/// Uses a template directly as a classifier: score `<template, x>`, no bias.
pub fn eval_template(template: &FeatureVector, data: &[LabeledSample]) -> Result<ApResult> {
    if template.norm() == 0.0 {
        return Err(Error::invalid("cannot rank with an all-zero template"));
    }
    evaluate_scores(data, |x| template.dot(x))
}

pub fn eval_model(model: &SvmModel, data: &[LabeledSample]) -> Result<ApResult> {
    evaluate_scores(data, |x| model.predict(x))
}

pub(crate) fn ap_of_direction(w: &[f64], data: &[LabeledSample]) -> Result<f64> {
    evaluate_scores(data, |x| Ok(dot(w, x.values()))).map(|r| r.ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(scores: &[f64], labels: &[i8]) -> Vec<ScoredLabel> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, l))| ScoredLabel {
                score: *s,
                label: *l,
                id: format!("{i:03}"),
            })
            .collect()
    }

    #[test]
    fn hand_cases() {
        let ap = |s: &[f64], l: &[i8]| average_precision(&items(s, l)).unwrap();
        assert_eq!(ap(&[3.0, 2.0, 1.0], &[-1, 1, -1]), 0.5);
        assert_eq!(ap(&[3.0, 2.0, 1.0], &[1, 1, -1]), 1.0);
        assert_eq!(ap(&[1.0, 2.0, 3.0], &[1, 1, 1]), 1.0);
        // Positives at ranks 1 and 3: (1/1 + 2/3) / 2.
        assert_eq!(ap(&[3.0, 2.0, 1.0], &[1, -1, 1]), (1.0 + 2.0 / 3.0) / 2.0);
        // Ties resolve by id: "000" (negative) ranks before "001".
        assert_eq!(ap(&[1.0, 1.0], &[-1, 1]), 0.5);
        assert_eq!(ap(&[1.0, 1.0], &[1, -1]), 1.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(average_precision(&items(&[1.0, 2.0], &[-1, -1])).is_err());
        assert!(average_precision(&items(&[f64::NAN], &[1])).is_err());
        assert!(average_precision(&items(&[1.0], &[0])).is_err());
    }

    #[test]
    fn chance_is_prevalence() {
        assert_eq!(chance_ap(&[1, -1]), 0.5);
        assert_eq!(chance_ap(&[-1, -1, -1]), 0.0);
        assert_eq!(chance_ap(&[]), 0.0);
    }

    #[test]
    fn zero_template_is_rejected() {
        let zero = FeatureVector::new("s", vec![0.0, 0.0]).unwrap();
        let data = vec![LabeledSample {
            id: "a".into(),
            x: FeatureVector::new("s", vec![1.0, 0.0]).unwrap(),
            y: 1,
        }];
        assert!(eval_template(&zero, &data).is_err());
    }

    proptest! {
        #[test]
        fn ap_is_invariant_under_increasing_maps(
            raw in proptest::collection::vec((-10.0f64..10.0, any::<bool>()), 1..60),
            a in 0.1f64..5.0,
            c in -3.0f64..3.0,
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let mut labels: Vec<i8> = raw.iter().map(|r| if r.1 { 1 } else { -1 }).collect();
            labels[0] = 1;
            let base = average_precision(&items(&scores, &labels)).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (a * s + c).exp()).collect();
            prop_assert_eq!(average_precision(&items(&mapped, &labels)).unwrap(), base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
