//! Offline recomputation of the live template from an exported log.
//!
//! Deliberately independent of [`crate::Session`]: it reads nothing but the
//! config and the trial records, tallies catch accuracy per worker and hands
//! the surviving noise trials to the core estimator.

use std::collections::{BTreeMap, BTreeSet};

use visbias_core::classimg::{accumulate_log, StimulusModel, Template, TrialRecord};

use crate::config::SessionConfig;

/// Workers whose full catch history meets the qualification rule.
pub fn qualified_workers(config: &SessionConfig, trials: &[TrialRecord]) -> BTreeSet<String> {
    let mut stats: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for t in trials {
        let entry = stats.entry(&t.observer_id).or_default();
        if t.is_catch {
            entry.0 += 1;
            entry.1 += u64::from(t.true_class == Some(t.response));
        }
    }
    stats
        .into_iter()
        .filter(|(_, (seen, correct))| config.qualification.is_met(*seen, *correct))
        .map(|(w, _)| w.to_owned())
        .collect()
}

/// Noise-only estimate over the non-catch trials of qualified workers.
pub fn offline_template(config: &SessionConfig, trials: &[TrialRecord]) -> visbias_core::Result<Template> {
    let keep = qualified_workers(config, trials);
    let kept: Vec<TrialRecord> = trials
        .iter()
        .filter(|t| !t.is_catch && keep.contains(&t.observer_id))
        .cloned()
        .collect();
    accumulate_log(&config.space, &StimulusModel::NoiseOnly, &kept)?.estimate_noise_only()
}
