//! Runners comparing plain SVMs with cone-constrained ones.
//!
//! Every repeat draws from its own seed `derive_seed(seed, r)`, so repeats
//! run in parallel and the report does not depend on scheduling.

use std::collections::BTreeSet;

use rand::seq::index;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{generate_synthetic, SyntheticDatasetSpec};
use super::{ap_of_direction, chance_ap, LabeledSample};
use crate::classimg::{accumulate_log, StimulusModel};
use crate::conesvm::{
    fit_cone_svm_with, fit_soft_prior, fit_svm_with, theta_from_degrees, ConeConstraint, LabeledExample, SolverOptions,
};
use crate::featspace::{dot, sample_white_noise, FeatureSpace, FeatureVector};
use crate::observer::{run_session, LinearObserver};
use crate::{rng, Error, Result};

/// Rankings only depend on the direction of `w`, which settles long before
/// the objective is certified to 1e-6.
fn solver_options() -> SolverOptions {
    SolverOptions {
        relative_gap: 1e-4,
        ..SolverOptions::default()
    }
}

/// Mean and spread of one condition at one training size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    /// Positives used for training (low-data) or training positives
    /// (cross-dataset). 0 for conditions that see no training data.
    pub size: usize,
    pub mean_ap: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub std_ap: f64,
    pub aps: Vec<f64>,
}

impl ConditionResult {
    fn from_aps(condition: &str, size: usize, aps: Vec<f64>) -> Self {
        let n = aps.len() as f64;
        let mean = aps.iter().sum::<f64>() / n;
        let std = if aps.len() > 1 {
            (aps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            condition: condition.to_owned(),
            size,
            mean_ap: mean,
            std_ap: std,
            aps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub recipe: String,
    pub category: String,
    pub config: serde_json::Value,
    pub repeat_seeds: Vec<u64>,
    pub results: Vec<ConditionResult>,
}

impl ExperimentReport {
    pub fn get(&self, condition: &str, size: usize) -> Option<&ConditionResult> {
        self.results
            .iter()
            .find(|r| r.condition == condition && r.size == size)
    }

    pub fn mean(&self, condition: &str, size: usize) -> Option<f64> {
        self.get(condition, size).map(|r| r.mean_ap)
    }

    /// One row per category, one `condition@size` column per result.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["category".to_owned()];
        let mut row = vec![self.category.clone()];
        for r in &self.results {
            header.push(format!("{}@{}", r.condition, r.size));
            row.push(r.mean_ap.to_string());
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowDataConfig {
    /// Positive counts to train with; 0 adds the chance and prior rows.
    pub positives: Vec<usize>,
    /// Negatives drawn per repeat; `None` trains on every pool negative.
    pub negatives: Option<usize>,
    pub lambda: f64,
    pub theta: f64,
    pub repeats: usize,
    pub seed: u64,
}

fn check_prior(prior: &FeatureVector) -> Result<()> {
    if (prior.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("prior must be unit norm, has norm {}", prior.norm())));
    }
    Ok(())
}

fn check_disjoint(a: &[LabeledSample], b: &[LabeledSample]) -> Result<()> {
    let ids: BTreeSet<&str> = a.iter().map(|s| s.id.as_str()).collect();
    if let Some(dup) = b.iter().find(|s| ids.contains(s.id.as_str())) {
        return Err(Error::invalid(format!("train and test pools share id {}", dup.id)));
    }
    Ok(())
}

fn pick<'a>(pool: &[&'a LabeledSample], k: usize, r: &mut ChaCha20Rng) -> Vec<&'a LabeledSample> {
    let mut idx = index::sample(r, pool.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

fn examples(samples: &[&LabeledSample]) -> Vec<LabeledExample> {
    samples.iter().map(|s| s.example()).collect()
}

fn assemble(order: &[(String, usize)], per_repeat: &[Vec<f64>]) -> Vec<ConditionResult> {
    order
        .iter()
        .enumerate()
        .map(|(k, (cond, size))| {
            ConditionResult::from_aps(cond, *size, per_repeat.iter().map(|r| r[k]).collect())
        })
        .collect()
}

/// Subsamples positives from `train`, fits with and without the cone around
/// `prior`, and scores both on `test`.
pub fn run_low_data_experiment(
    prior: &FeatureVector,
    train: &[LabeledSample],
    test: &[LabeledSample],
    cfg: &LowDataConfig,
) -> Result<ExperimentReport> {
    check_prior(prior)?;
    check_disjoint(train, test)?;
    if cfg.repeats == 0 {
        return Err(Error::invalid("at least one repeat is required"));
    }
    let cone = ConeConstraint::new(prior.values().to_vec(), cfg.theta)?;
    let pos: Vec<&LabeledSample> = train.iter().filter(|s| s.y == 1).collect();
    let neg: Vec<&LabeledSample> = train.iter().filter(|s| s.y == -1).collect();
    let max_k = cfg.positives.iter().copied().max().unwrap_or(0);
    if max_k > pos.len() {
        return Err(Error::invalid(format!(
            "{max_k} positives requested but the training pool has {}",
            pos.len()
        )));
    }
    let n_neg = cfg.negatives.unwrap_or(neg.len());
    if n_neg == 0 || n_neg > neg.len() {
        return Err(Error::invalid(format!(
            "{n_neg} negatives requested, training pool has {}",
            neg.len()
        )));
    }

    let chance = chance_ap(&test.iter().map(|s| s.y).collect::<Vec<_>>());
    let prior_ap = ap_of_direction(prior.values(), test)?;

    let mut order = Vec::new();
    for &k in &cfg.positives {
        if k == 0 {
            order.push(("chance".to_owned(), 0));
            order.push(("prior".to_owned(), 0));
        } else {
            order.push(("svm".to_owned(), k));
            order.push(("svm+prior".to_owned(), k));
        }
    }

    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| rng::derive_seed(cfg.seed, r)).collect();
    let per_repeat = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(order.len());
            for &k in &cfg.positives {
                if k == 0 {
                    row.extend([chance, prior_ap]);
                    continue;
                }
                let mut r = rng::stream(rng::derive_seed(seed, k as u64));
                let mut chosen = pick(&pos, k, &mut r);
                chosen.extend(pick(&neg, n_neg, &mut r));
                let data = examples(&chosen);
                let svm = fit_svm_with(&data, cfg.lambda, &solver_options())?;
                let constrained = fit_cone_svm_with(&data, cfg.lambda, &cone, &solver_options())?;
                row.push(ap_of_direction(&svm.w, test)?);
                row.push(ap_of_direction(&constrained.w, test)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        recipe: "low-data".to_owned(),
        category: "synthetic".to_owned(),
        config: serde_json::to_value(cfg).expect("config is serializable"),
        repeat_seeds: seeds,
        results: assemble(&order, &per_repeat),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetConfig {
    /// Training positives per condition.
    pub sizes: Vec<usize>,
    pub negatives_per_positive: usize,
    pub lambda: f64,
    pub theta: f64,
    /// The soft baseline regularizes towards `soft_prior_scale * prior`.
    pub soft_prior_scale: f64,
    pub repeats: usize,
    pub seed: u64,
}

/// Trains on fresh draws from `spec_train` and tests on `spec_test`.
///
/// Conditions: `svm`, `svm+prior`, and the `soft-prior` baseline scored on
/// the shifted test set, plus `svm-within`, the plain SVM scored on a held-out
/// set drawn from `spec_train` itself (its own counts and seed). A `prior`
/// row at size 0 scores the prior alone on the test set.
pub fn run_cross_dataset_experiment(
    prior: &FeatureVector,
    spec_train: &SyntheticDatasetSpec,
    spec_test: &SyntheticDatasetSpec,
    cfg: &CrossDatasetConfig,
) -> Result<ExperimentReport> {
    check_prior(prior)?;
    spec_train.validate()?;
    spec_test.validate()?;
    if spec_train.d != prior.len() || spec_test.d != prior.len() {
        return Err(Error::invalid("prior and dataset dimensions differ"));
    }
    if cfg.repeats == 0 || cfg.negatives_per_positive == 0 {
        return Err(Error::invalid("repeats and negatives_per_positive must be positive"));
    }
    if cfg.sizes.contains(&0) {
        return Err(Error::invalid("training sizes must be positive"));
    }
    let cone = ConeConstraint::new(prior.values().to_vec(), cfg.theta)?;
    let soft: Vec<f64> = prior.values().iter().map(|v| v * cfg.soft_prior_scale).collect();
    let test = generate_synthetic(spec_test)?;
    let within = generate_synthetic(spec_train)?;

    let mut order = vec![("prior".to_owned(), 0)];
    for &n in &cfg.sizes {
        for cond in ["svm", "svm+prior", "soft-prior", "svm-within"] {
            order.push((cond.to_owned(), n));
        }
    }
    let prior_ap = ap_of_direction(prior.values(), &test)?;

    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| rng::derive_seed(cfg.seed, r)).collect();
    let per_repeat = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let mut row = vec![prior_ap];
            for &n in &cfg.sizes {
                let draw = SyntheticDatasetSpec {
                    n_pos: n,
                    n_neg: n * cfg.negatives_per_positive,
                    seed: rng::derive_seed(seed, n as u64),
                    ..spec_train.clone()
                };
                let data: Vec<LabeledExample> = generate_synthetic(&draw)?.iter().map(|s| s.example()).collect();
                let svm = fit_svm_with(&data, cfg.lambda, &solver_options())?;
                let constrained = fit_cone_svm_with(&data, cfg.lambda, &cone, &solver_options())?;
                let (w_soft, _) = fit_soft_prior(&data, cfg.lambda, &soft, &solver_options())?;
                row.push(ap_of_direction(&svm.w, &test)?);
                row.push(ap_of_direction(&constrained.w, &test)?);
                row.push(ap_of_direction(&w_soft, &test)?);
                row.push(ap_of_direction(&svm.w, &within)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        recipe: "cross-dataset".to_owned(),
        category: "synthetic".to_owned(),
        config: serde_json::to_value(cfg).expect("config is serializable"),
        repeat_seeds: seeds,
        results: assemble(&order, &per_repeat),
    })
}

/// Noise-only template of a simulated observer whose true template is
/// `direction`, normalized for use as a prior. Also returns its cosine to
/// `direction`.
pub fn simulated_prior(
    direction: &FeatureVector,
    trials: u64,
    observer_sigma: f64,
    seed: u64,
) -> Result<(FeatureVector, f64)> {
    let space = FeatureSpace::external(direction.space_id(), direction.len())?;
    let unit = direction.l2_normalize()?;
    let mut obs = LinearObserver::new("sim", unit.clone(), observer_sigma, 0.0, rng::derive_seed(seed, 1))?;
    let log = run_session(&mut obs, &space, trials, rng::derive_seed(seed, 2), None)?;
    let acc = accumulate_log(&space, &StimulusModel::NoiseOnly, &log)?;
    let prior = acc.estimate_noise_only()?.normalized()?;
    let cos = prior.cosine(&unit)?;
    Ok((prior, cos))
}

fn random_unit(d: usize, seed: u64) -> Result<FeatureVector> {
    let space = FeatureSpace::external(format!("ext:{d}"), d)?;
    sample_white_noise(&space, seed).l2_normalize()
}

/// Unit vector orthogonal to `u`, from seeded noise.
fn orthogonal_unit(u: &FeatureVector, seed: u64) -> Result<FeatureVector> {
    let r = random_unit(u.len(), seed)?;
    let s = dot(r.values(), u.values());
    let v: Vec<f64> = r.values().iter().zip(u.values()).map(|(a, b)| a - s * b).collect();
    FeatureVector::new(u.space_id(), v)?.l2_normalize()
}

fn relabel(mut samples: Vec<LabeledSample>, prefix: &str) -> Vec<LabeledSample> {
    for s in &mut samples {
        s.id = format!("{prefix}-{}", s.id);
    }
    samples
}

/// Self-contained low-data experiment on two Gaussian classes separated by
/// `separation` along a random direction, with the prior estimated from a
/// simulated observer that uses that direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowDataRecipe {
    pub category: String,
    pub d: usize,
    pub separation: f64,
    pub sigma: f64,
    pub train_pos: usize,
    pub train_neg: usize,
    pub test_pos: usize,
    pub test_neg: usize,
    pub prior_trials: u64,
    pub observer_sigma: f64,
    pub positives: Vec<usize>,
    pub negatives: Option<usize>,
    pub lambda: f64,
    pub theta: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for LowDataRecipe {
    fn default() -> Self {
        Self {
            category: "synthetic".to_owned(),
            d: 32,
            separation: 2.0,
            sigma: 1.0,
            train_pos: 100,
            train_neg: 200,
            test_pos: 200,
            test_neg: 1800,
            prior_trials: 5000,
            observer_sigma: 1.0,
            positives: vec![0, 1, 5, 50],
            negatives: None,
            lambda: 1.0,
            theta: theta_from_degrees(30.0),
            repeats: 20,
            seed: 1,
        }
    }
}

impl LowDataRecipe {
    pub fn run(&self) -> Result<ExperimentReport> {
        let u = random_unit(self.d, rng::derive_seed(self.seed, 10))?;
        let (prior, prior_cos) = simulated_prior(&u, self.prior_trials, self.observer_sigma, rng::derive_seed(self.seed, 11))?;
        let spec = |n_pos, n_neg, seed| SyntheticDatasetSpec {
            d: self.d,
            mu_pos: u.values().iter().map(|v| v * self.separation).collect(),
            mu_neg: vec![0.0; self.d],
            sigma: self.sigma,
            shift: vec![0.0; self.d],
            n_pos,
            n_neg,
            seed,
        };
        let train = relabel(
            generate_synthetic(&spec(self.train_pos, self.train_neg, rng::derive_seed(self.seed, 12)))?,
            "train",
        );
        let test = relabel(
            generate_synthetic(&spec(self.test_pos, self.test_neg, rng::derive_seed(self.seed, 13)))?,
            "test",
        );
        let cfg = LowDataConfig {
            positives: self.positives.clone(),
            negatives: self.negatives,
            lambda: self.lambda,
            theta: self.theta,
            repeats: self.repeats,
            seed: rng::derive_seed(self.seed, 14),
        };
        let mut report = run_low_data_experiment(&prior, &train, &test, &cfg)?;
        report.category = self.category.clone();
        report.config = serde_json::json!({
            "recipe": self,
            "runner": report.config,
            "prior_cosine": prior_cos,
        });
        Ok(report)
    }
}

/// Self-contained cross-dataset experiment. The training distribution adds a
/// spurious cue of angle `cue_degrees` to the class difference and both
/// classes are offset by a random `shift` of norm `shift_norm` at test time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossDatasetRecipe {
    pub category: String,
    pub d: usize,
    pub separation: f64,
    pub sigma: f64,
    pub cue_degrees: f64,
    pub shift_norm: f64,
    pub test_pos: usize,
    pub test_neg: usize,
    pub prior_trials: u64,
    pub observer_sigma: f64,
    pub sizes: Vec<usize>,
    pub negatives_per_positive: usize,
    pub lambda: f64,
    pub theta: f64,
    pub soft_prior_scale: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CrossDatasetRecipe {
    fn default() -> Self {
        Self {
            category: "synthetic".to_owned(),
            d: 32,
            separation: 2.0,
            sigma: 1.0,
            cue_degrees: 10.0,
            shift_norm: 1.5,
            test_pos: 500,
            test_neg: 500,
            prior_trials: 20_000,
            observer_sigma: 1.0,
            sizes: vec![1, 2, 5, 10, 50, 200],
            negatives_per_positive: 2,
            lambda: 1.0,
            theta: theta_from_degrees(30.0),
            soft_prior_scale: 1.0,
            repeats: 20,
            seed: 1,
        }
    }
}

impl CrossDatasetRecipe {
    pub fn specs(&self) -> Result<(FeatureVector, SyntheticDatasetSpec, SyntheticDatasetSpec)> {
        let u = random_unit(self.d, rng::derive_seed(self.seed, 20))?;
        let v = orthogonal_unit(&u, rng::derive_seed(self.seed, 21))?;
        let shift_dir = random_unit(self.d, rng::derive_seed(self.seed, 22))?;
        let cue = self.cue_degrees.to_radians().tan();
        let a = self.separation;
        let train = SyntheticDatasetSpec {
            d: self.d,
            mu_pos: u.values().iter().zip(v.values()).map(|(x, y)| a * (x + cue * y)).collect(),
            mu_neg: vec![0.0; self.d],
            sigma: self.sigma,
            shift: vec![0.0; self.d],
            n_pos: self.test_pos,
            n_neg: self.test_neg,
            seed: rng::derive_seed(self.seed, 23),
        };
        let test = SyntheticDatasetSpec {
            mu_pos: u.values().iter().map(|x| a * x).collect(),
            shift: shift_dir.values().iter().map(|x| x * self.shift_norm).collect(),
            seed: rng::derive_seed(self.seed, 24),
            ..train.clone()
        };
        Ok((u, train, test))
    }

    pub fn run(&self) -> Result<ExperimentReport> {
        let (u, train, test) = self.specs()?;
        let (prior, prior_cos) = simulated_prior(&u, self.prior_trials, self.observer_sigma, rng::derive_seed(self.seed, 25))?;
        let cfg = CrossDatasetConfig {
            sizes: self.sizes.clone(),
            negatives_per_positive: self.negatives_per_positive,
            lambda: self.lambda,
            theta: self.theta,
            soft_prior_scale: self.soft_prior_scale,
            repeats: self.repeats,
            seed: rng::derive_seed(self.seed, 26),
        };
        let mut report = run_cross_dataset_experiment(&prior, &train, &test, &cfg)?;
        report.category = self.category.clone();
        report.config = serde_json::json!({
            "recipe": self,
            "runner": report.config,
            "prior_cosine": prior_cos,
        });
        Ok(report)
    }
}

