use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledSample;
use crate::featspace::FeatureVector;
use crate::{rng, Error, Result};

/// Two isotropic Gaussian classes, both offset by `shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub d: usize,
    pub mu_pos: Vec<f64>,
    pub mu_neg: Vec<f64>,
    pub sigma: f64,
    pub shift: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("synthetic dimension must be positive"));
        }
        for (name, v) in [("mu_pos", &self.mu_pos), ("mu_neg", &self.mu_neg), ("shift", &self.shift)] {
            if v.len() != self.d {
                return Err(Error::invalid(format!("{name} has length {}, expected {}", v.len(), self.d)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("synthetic sigma must be positive"));
        }
        Ok(())
    }

    pub fn space_id(&self) -> String {
        format!("ext:{}", self.d)
    }
}

/// Positives `pos-{i}` followed by negatives `neg-{i}`.
///
/// Sample `i` of each class has its own derived seed, so growing `n_pos`
/// or `n_neg` only appends samples.
pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let space_id = spec.space_id();
    let mut out = Vec::with_capacity(spec.n_pos + spec.n_neg);
    for (label, prefix, mu, n, domain) in [
        (1i8, "pos", &spec.mu_pos, spec.n_pos, 0u64),
        (-1i8, "neg", &spec.mu_neg, spec.n_neg, 1u64),
    ] {
        let class_seed = rng::derive_seed(spec.seed, domain);
        for i in 0..n {
            let mut r = rng::stream(rng::derive_seed(class_seed, i as u64));
            let values = mu
                .iter()
                .zip(&spec.shift)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    m + s + spec.sigma * z
                })
                .collect();
            out.push(LabeledSample {
                id: format!("{prefix}-{i:06}"),
                x: FeatureVector::new(space_id.clone(), values)?,
                y: label,
            });
        }
    }
    Ok(out)
}
