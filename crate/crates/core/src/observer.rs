//! Simulated linear observer.
//!
//! The observer answers `A` iff `<template, x> + eta >= tau`, where
//! `eta ~ N(0, sigma^2)` comes from the observer's own seeded stream. Under
//! white Gaussian stimuli this is the generative model for which the
//! classification-image estimate points along the observer's template, so it
//! serves as ground truth for every statistical test of the estimators.

use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classimg::{Class, StimulusModel, TrialRecord};
use crate::featspace::{sample_white_noise, FeatureSpace, FeatureVector};
use crate::{rng, Error, Result};

#[derive(Clone, Debug)]
pub struct LinearObserver {
    id: String,
    cohort: Option<String>,
    template: FeatureVector,
    sigma: f64,
    tau: f64,
    seed: u64,
    noise: ChaCha20Rng,
}

impl LinearObserver {
    /// `template` must have unit norm (within 1e-9).
    pub fn new(
        id: impl Into<String>,
        template: FeatureVector,
        sigma: f64,
        tau: f64,
        seed: u64,
    ) -> Result<Self> {
        if (template.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "observer template must be unit norm, has norm {}",
                template.norm()
            )));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("observer sigma must be finite and >= 0"));
        }
        if !tau.is_finite() {
            return Err(Error::invalid("observer tau must be finite"));
        }
        Ok(Self {
            id: id.into(),
            cohort: None,
            template,
            sigma,
            tau,
            seed,
            noise: rng::observer_stream(seed),
        })
    }

    pub fn with_cohort(mut self, cohort: impl Into<String>) -> Self {
        self.cohort = Some(cohort.into());
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn template(&self) -> &FeatureVector {
        &self.template
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Restarts the internal noise stream from the seed.
    pub fn reset(&mut self) {
        self.noise = rng::observer_stream(self.seed);
    }

    /// One decision. Always consumes exactly one internal-noise draw.
    pub fn respond(&mut self, x: &FeatureVector) -> Result<Class> {
        let z: f64 = StandardNormal.sample(&mut self.noise);
        let signal = self.template.dot(x)?;
        Ok(if signal + self.sigma * z >= self.tau {
            Class::A
        } else {
            Class::B
        })
    }
}

/// Where catch trials go and what they show.
///
/// Slot `i` is a catch slot iff `i % every == offset`. The catch stimulus is
/// `±amplitude * direction` plus white noise, `+` for true class `A`.
#[derive(Clone, Debug)]
pub struct CatchPlan {
    pub every: u64,
    pub offset: u64,
    pub direction: FeatureVector,
    pub amplitude: f64,
}

impl CatchPlan {
    pub fn is_catch_slot(&self, index: u64) -> bool {
        self.every > 0 && index % self.every == self.offset % self.every
    }

    pub fn true_class(seed: u64) -> Class {
        if rng::derive_seed(seed, 0xCA7C) & 1 == 0 {
            Class::A
        } else {
            Class::B
        }
    }

    pub fn stimulus(&self, space: &FeatureSpace, seed: u64, class: Class) -> Result<FeatureVector> {
        space.check(&self.direction)?;
        let noise = sample_white_noise(space, seed);
        let sign = class.sign() * self.amplitude;
        space.vector(
            self.direction
                .values()
                .iter()
                .zip(noise.values())
                .map(|(d, n)| sign * d + n)
                .collect(),
        )
    }
}

/// Simulated noise-only session: `n_trials` records, trial `i` showing the
/// white noise seeded by `derive_seed(base_seed, i)`.
pub fn run_session(
    obs: &mut LinearObserver,
    space: &FeatureSpace,
    n_trials: u64,
    base_seed: u64,
    catch: Option<&CatchPlan>,
) -> Result<Vec<TrialRecord>> {
    run_session_with(obs, space, n_trials, base_seed, &StimulusModel::NoiseOnly, catch)
}

/// Simulated session under an arbitrary stimulus model. Output is replayable
/// bit-exactly from `(observer seed, base_seed, n_trials, plan)`.
pub fn run_session_with(
    obs: &mut LinearObserver,
    space: &FeatureSpace,
    n_trials: u64,
    base_seed: u64,
    model: &StimulusModel,
    catch: Option<&CatchPlan>,
) -> Result<Vec<TrialRecord>> {
    if n_trials == 0 {
        return Err(Error::invalid("a session needs at least one trial"));
    }
    space.check(&obs.template)?;
    let mut out = Vec::with_capacity(n_trials as usize);
    for i in 0..n_trials {
        let seed = rng::derive_seed(base_seed, i);
        let mut record = TrialRecord {
            trial_id: format!("{}-{:07}", obs.id, i),
            sample_seed: seed,
            space_id: space.id().to_owned(),
            true_class: None,
            response: Class::B,
            is_catch: false,
            observer_id: obs.id.clone(),
            cohort: obs.cohort.clone(),
            // Logical clock: one tick per slot keeps logs deterministic.
            timestamp: i as i64,
        };
        let x = match catch {
            Some(plan) if plan.is_catch_slot(i) => {
                let class = CatchPlan::true_class(seed);
                record.is_catch = true;
                record.true_class = Some(class);
                plan.stimulus(space, seed, class)?
            }
            _ => {
                record.true_class = model.draw_class(seed);
                model.stimulus(space, &record)?
            }
        };
        record.response = obs.respond(&x)?;
        out.push(record);
    }
    Ok(out)
}
