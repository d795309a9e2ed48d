use serde::{Deserialize, Serialize};
use visbias_core::classimg::Class;
use visbias_core::featspace::{sample_white_noise, FeatureSpace, FeatureVector, Geometry};

/// Where a catch item's vector comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatchSource {
    /// White noise drawn from this seed.
    Seed { seed: u64 },
    Vector { vector: Vec<f64> },
}

/// An easy stimulus with a known answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatchItem {
    #[serde(flatten)]
    pub source: CatchSource,
    pub true_class: Class,
}

impl CatchItem {
    pub fn vector(&self, space: &FeatureSpace) -> visbias_core::Result<FeatureVector> {
        match &self.source {
            CatchSource::Seed { seed } => Ok(sample_white_noise(space, *seed)),
            CatchSource::Vector { vector } => space.vector(vector.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qualification {
    pub min_catch_seen: u64,
    pub min_catch_accuracy: f64,
}

impl Default for Qualification {
    fn default() -> Self {
        Self {
            min_catch_seen: 5,
            min_catch_accuracy: 0.8,
        }
    }
}

impl Qualification {
    /// A worker qualifies once they have seen enough catch trials and
    /// answered enough of them correctly.
    pub fn is_met(&self, seen: u64, correct: u64) -> bool {
        seen >= self.min_catch_seen && (seen == 0 || correct as f64 >= self.min_catch_accuracy * seen as f64)
    }
}

/// Everything needed to run one labeling session. Stored verbatim as
/// `config.json` and echoed back by `GET /api/sessions/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub session_id: String,
    pub space: FeatureSpace,
    pub category_name: String,
    /// Slots per worker, catch slots included.
    pub n_target_trials: u64,
    /// Three render scales in pixels per cell.
    pub scales: Vec<usize>,
    #[serde(default)]
    pub catch_rate: f64,
    #[serde(default)]
    pub catch_pool: Vec<CatchItem>,
    #[serde(default)]
    pub qualification: Qualification,
    #[serde(default)]
    pub seed: u64,
}

impl SessionConfig {
    /// Every problem with the config, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let id_ok = !self.session_id.is_empty()
            && self.session_id.len() <= 128
            && self
                .session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            out.push("session_id must be 1-128 characters from [A-Za-z0-9_-]".to_owned());
        }
        if let Geometry::External { .. } = self.space.geometry() {
            out.push("space must be raw_pixel or hog so stimuli can be rendered".to_owned());
        }
        if self.category_name.trim().is_empty() {
            out.push("category_name must not be empty".to_owned());
        }
        if self.n_target_trials == 0 {
            out.push("n_target_trials must be positive".to_owned());
        }
        if self.scales.len() != 3 {
            out.push(format!("scales must list exactly 3 values, got {}", self.scales.len()));
        }
        if self.scales.iter().any(|s| *s == 0 || *s > 64) {
            out.push("scales must lie in 1..=64".to_owned());
        }
        if !(0.0..1.0).contains(&self.catch_rate) {
            out.push(format!("catch_rate must lie in [0, 1), got {}", self.catch_rate));
        }
        if self.catch_rate > 0.0 && self.catch_pool.is_empty() {
            out.push("catch_pool must not be empty when catch_rate > 0".to_owned());
        }
        for (i, item) in self.catch_pool.iter().enumerate() {
            if let Err(e) = item.vector(&self.space) {
                out.push(format!("catch_pool[{i}]: {e}"));
            }
        }
        let q = &self.qualification;
        if !(q.min_catch_accuracy > 0.0 && q.min_catch_accuracy <= 1.0) {
            out.push("qualification.min_catch_accuracy must lie in (0, 1]".to_owned());
        }
        if q.min_catch_seen > 0 && self.catch_rate == 0.0 {
            out.push("qualification.min_catch_seen > 0 needs catch_rate > 0, or no worker can qualify".to_owned());
        }
        out
    }
}
