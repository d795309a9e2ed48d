use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::featspace::{sample_white_noise, FeatureSpace, FeatureVector};
use crate::{io, rng, Error, Result};

/// The two response alternatives. `A` is the target category ("yes").
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    A,
    B,
}

impl Class {
    pub fn flip(self) -> Class {
        match self {
            Class::A => Class::B,
            Class::B => Class::A,
        }
    }

    /// `+1` for `A`, `-1` for `B`.
    pub fn sign(self) -> f64 {
        match self {
            Class::A => 1.0,
            Class::B => -1.0,
        }
    }
}

/// One observer decision on one stimulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub sample_seed: u64,
    pub space_id: String,
    #[serde(default)]
    pub true_class: Option<Class>,
    pub response: Class,
    pub is_catch: bool,
    pub observer_id: String,
    #[serde(default)]
    pub cohort: Option<String>,
    pub timestamp: i64,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        if self.is_catch && self.true_class.is_none() {
            return Err(Error::invalid(format!(
                "catch trial `{}` has no true_class",
                self.trial_id
            )));
        }
        Ok(())
    }

    /// Noise-only trial: no true class, not a catch trial.
    pub fn is_noise_only(&self) -> bool {
        !self.is_catch && self.true_class.is_none()
    }

    pub fn with_flipped_response(&self) -> TrialRecord {
        TrialRecord {
            response: self.response.flip(),
            ..self.clone()
        }
    }
}

/// Reads a trial log, validating every record.
pub fn read_trials<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>> {
    let trials: Vec<TrialRecord> = io::read_jsonl(reader)?;
    for (i, t) in trials.iter().enumerate() {
        t.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(trials)
}

pub fn write_trials<W: Write>(writer: W, trials: &[TrialRecord]) -> Result<()> {
    io::write_jsonl(writer, trials)
}

/// How non-catch stimuli are generated from a trial's seed.
///
/// In noise-only mode the stimulus is pure white noise. In classic mode the
/// stimulus is the base vector of the trial's true class plus scaled noise.
#[derive(Clone, Debug, PartialEq)]
pub enum StimulusModel {
    NoiseOnly,
    Classic {
        base_a: Vec<f64>,
        base_b: Vec<f64>,
        noise_scale: f64,
    },
}

impl StimulusModel {
    /// The class a classic-mode trial with this seed shows; `None` in
    /// noise-only mode.
    pub fn draw_class(&self, seed: u64) -> Option<Class> {
        match self {
            StimulusModel::NoiseOnly => None,
            StimulusModel::Classic { .. } => Some(if rng::derive_seed(seed, 0xC1A5) & 1 == 0 {
                Class::A
            } else {
                Class::B
            }),
        }
    }

    pub fn stimulus(&self, space: &FeatureSpace, trial: &TrialRecord) -> Result<FeatureVector> {
        if trial.space_id != space.id() {
            return Err(Error::space_mismatch(space.id(), &trial.space_id));
        }
        let noise = sample_white_noise(space, trial.sample_seed);
        match self {
            StimulusModel::NoiseOnly => Ok(noise),
            StimulusModel::Classic {
                base_a,
                base_b,
                noise_scale,
            } => {
                let base = match trial.true_class {
                    Some(Class::A) => base_a,
                    Some(Class::B) => base_b,
                    None => {
                        return Err(Error::invalid(format!(
                            "classic-mode trial `{}` has no true_class",
                            trial.trial_id
                        )))
                    }
                };
                if base.len() != space.dimension() {
                    return Err(Error::invalid("base vector length differs from space dimension"));
                }
                let values = base
                    .iter()
                    .zip(noise.values())
                    .map(|(b, n)| b + noise_scale * n)
                    .collect();
                space.vector(values)
            }
        }
    }
}
