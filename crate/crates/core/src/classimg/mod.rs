//! Classification-image template estimation.
//!
//! Trials are folded into a [`TemplateAccumulator`] that keeps exact per-cell
//! sums and counts. Cells are indexed by (true class, response); noise-only
//! trials have no true class and land in the pseudo-cells `·A` and `·B`.
//!
//! - Classic estimate: `(mean_AA + mean_BA) - (mean_AB + mean_BB)`, where
//!   `mean_XY` averages stimuli of true class `X` answered `Y`.
//! - Noise-only estimate: `mean_·A - mean_·B` over pure noise stimuli.
//!
//! Catch trials are never accumulated. Because sums are exact, merging shards
//! in any order gives bit-identical estimates.

mod trial;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::featspace::{FeatureSpace, FeatureVector};
use crate::fsum::ExactSum;
use crate::io::VectorRecord;
use crate::{Error, Result};

pub use trial::{read_trials, write_trials, Class, StimulusModel, TrialRecord};

/// Response cell, named `XY` for true class `X` and response `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    AA,
    AB,
    BA,
    BB,
    /// Noise-only trial answered `A`.
    NoiseA,
    /// Noise-only trial answered `B`.
    NoiseB,
}

impl Cell {
    pub const ALL: [Cell; 6] = [Cell::AA, Cell::AB, Cell::BA, Cell::BB, Cell::NoiseA, Cell::NoiseB];

    pub fn of(true_class: Option<Class>, response: Class) -> Cell {
        match (true_class, response) {
            (Some(Class::A), Class::A) => Cell::AA,
            (Some(Class::A), Class::B) => Cell::AB,
            (Some(Class::B), Class::A) => Cell::BA,
            (Some(Class::B), Class::B) => Cell::BB,
            (None, Class::A) => Cell::NoiseA,
            (None, Class::B) => Cell::NoiseB,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cell::AA => "AA",
            Cell::AB => "AB",
            Cell::BA => "BA",
            Cell::BB => "BB",
            Cell::NoiseA => "·A",
            Cell::NoiseB => "·B",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CellSum {
    sums: Vec<ExactSum>,
    count: u64,
}

impl CellSum {
    fn new(d: usize) -> Self {
        Self {
            sums: vec![ExactSum::new(); d],
            count: 0,
        }
    }

    fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| {
            let n = self.count as f64;
            self.sums.iter().map(|s| s.value() / n).collect()
        })
    }
}

/// Mergeable per-cell sums and counts of accumulated stimuli.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateAccumulator {
    space_id: String,
    dimension: usize,
    cells: [CellSum; 6],
}

impl TemplateAccumulator {
    pub fn new(space: &FeatureSpace) -> Self {
        Self::with_dimension(space.id(), space.dimension())
    }

    pub fn with_dimension(space_id: impl Into<String>, dimension: usize) -> Self {
        Self {
            space_id: space_id.into(),
            dimension,
            cells: std::array::from_fn(|_| CellSum::new(dimension)),
        }
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn count(&self, cell: Cell) -> u64 {
        self.cells[cell.index()].count
    }

    /// Trials accumulated over all cells.
    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Cell sum rounded to `f64`.
    pub fn sum(&self, cell: Cell) -> Vec<f64> {
        self.cells[cell.index()].sums.iter().map(ExactSum::value).collect()
    }

    pub fn mean(&self, cell: Cell) -> Option<Vec<f64>> {
        self.cells[cell.index()].mean()
    }

    /// Adds one trial. Catch trials leave the accumulator untouched.
    pub fn accumulate(&mut self, trial: &TrialRecord, x: &FeatureVector) -> Result<()> {
        if trial.space_id != self.space_id {
            return Err(Error::space_mismatch(&self.space_id, &trial.space_id));
        }
        if x.space_id() != self.space_id {
            return Err(Error::space_mismatch(&self.space_id, x.space_id()));
        }
        if x.len() != self.dimension {
            return Err(Error::invalid(format!(
                "stimulus has {} values, accumulator expects {}",
                x.len(),
                self.dimension
            )));
        }
        trial.validate()?;
        if trial.is_catch {
            return Ok(());
        }
        let cell = &mut self.cells[Cell::of(trial.true_class, trial.response).index()];
        for (s, &v) in cell.sums.iter_mut().zip(x.values()) {
            s.add(v);
        }
        cell.count += 1;
        Ok(())
    }

    /// Functional form of [`accumulate`](Self::accumulate).
    pub fn with_trial(mut self, trial: &TrialRecord, x: &FeatureVector) -> Result<Self> {
        self.accumulate(trial, x)?;
        Ok(self)
    }

    /// Adds `other` cell by cell. Commutative and associative, exactly.
    pub fn merge(&mut self, other: &TemplateAccumulator) -> Result<()> {
        if other.space_id != self.space_id {
            return Err(Error::space_mismatch(&self.space_id, &other.space_id));
        }
        if other.dimension != self.dimension {
            return Err(Error::invalid("accumulator dimensions differ"));
        }
        for (mine, theirs) in self.cells.iter_mut().zip(&other.cells) {
            for (a, b) in mine.sums.iter_mut().zip(&theirs.sums) {
                a.merge(b);
            }
            mine.count += theirs.count;
        }
        Ok(())
    }

    pub fn merged(a: &TemplateAccumulator, b: &TemplateAccumulator) -> Result<TemplateAccumulator> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    fn require(&self, cells: &[Cell]) -> Result<()> {
        let empty: Vec<Cell> = cells.iter().copied().filter(|&c| self.count(c) == 0).collect();
        if empty.is_empty() {
            Ok(())
        } else {
            Err(Error::EmptyCells(empty))
        }
    }

    /// `mean_·A - mean_·B` over noise-only trials.
    pub fn estimate_noise_only(&self) -> Result<Template> {
        self.require(&[Cell::NoiseA, Cell::NoiseB])?;
        let a = self.mean(Cell::NoiseA).unwrap_or_default();
        let b = self.mean(Cell::NoiseB).unwrap_or_default();
        Ok(Template {
            space_id: self.space_id.clone(),
            values: a.iter().zip(&b).map(|(a, b)| a - b).collect(),
            trials_used: self.count(Cell::NoiseA) + self.count(Cell::NoiseB),
            mode: EstimateMode::NoiseOnly,
        })
    }

    /// `(mean_AA + mean_BA) - (mean_AB + mean_BB)`.
    pub fn estimate_classic(&self) -> Result<Template> {
        self.require(&[Cell::AA, Cell::AB, Cell::BA, Cell::BB])?;
        let m = |c| self.mean(c).unwrap_or_default();
        let (aa, ab, ba, bb) = (m(Cell::AA), m(Cell::AB), m(Cell::BA), m(Cell::BB));
        let values = (0..self.dimension)
            .map(|k| (aa[k] + ba[k]) - (ab[k] + bb[k]))
            .collect();
        Ok(Template {
            space_id: self.space_id.clone(),
            values,
            trials_used: [Cell::AA, Cell::AB, Cell::BA, Cell::BB]
                .iter()
                .map(|&c| self.count(c))
                .sum(),
            mode: EstimateMode::Classic,
        })
    }

    pub fn estimate(&self, mode: EstimateMode) -> Result<Template> {
        match mode {
            EstimateMode::Classic => self.estimate_classic(),
            EstimateMode::NoiseOnly => self.estimate_noise_only(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    Classic,
    NoiseOnly,
}

impl fmt::Display for EstimateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateMode::Classic => "classic",
            EstimateMode::NoiseOnly => "noise-only",
        })
    }
}

/// Estimated linear template. The raw (unnormalized) estimate is kept for
/// visualization; use [`Template::normalized`] when it serves as a prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub space_id: String,
    pub values: Vec<f64>,
    pub trials_used: u64,
    pub mode: EstimateMode,
}

impl Template {
    pub fn vector(&self) -> Result<FeatureVector> {
        FeatureVector::new(self.space_id.clone(), self.values.clone())
    }

    pub fn normalized(&self) -> Result<FeatureVector> {
        self.vector()?.l2_normalize()
    }

    pub fn to_record(&self, id: impl Into<String>) -> VectorRecord {
        let mut meta = BTreeMap::new();
        meta.insert("mode".to_owned(), self.mode.to_string().into());
        meta.insert("trials_used".to_owned(), self.trials_used.into());
        VectorRecord {
            id: id.into(),
            space: self.space_id.clone(),
            label: None,
            kind: Some("template".to_owned()),
            meta,
            values: self.values.clone(),
        }
    }

    /// Reads a template back from a vector record. Records without template
    /// metadata are accepted as noise-only templates with one trial.
    pub fn from_record(record: &VectorRecord) -> Result<Template> {
        record.validate()?;
        let mode = match record.meta.get("mode").and_then(|m| m.as_str()) {
            Some("classic") => EstimateMode::Classic,
            _ => EstimateMode::NoiseOnly,
        };
        let trials_used = record
            .meta
            .get("trials_used")
            .and_then(|t| t.as_u64())
            .unwrap_or(1);
        Ok(Template {
            space_id: record.space.clone(),
            values: record.values.clone(),
            trials_used,
            mode,
        })
    }
}

/// Which trial field splits trials into cohorts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortKey {
    Cohort,
    ObserverId,
}

impl CohortKey {
    pub fn select<'a>(&self, trial: &'a TrialRecord) -> Option<&'a str> {
        match self {
            CohortKey::Cohort => trial.cohort.as_deref(),
            CohortKey::ObserverId => Some(&trial.observer_id),
        }
    }
}

impl std::str::FromStr for CohortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cohort" => Ok(CohortKey::Cohort),
            "observer_id" | "observer" => Ok(CohortKey::ObserverId),
            _ => Err(Error::invalid(format!(
                "unknown cohort key `{s}` (expected `cohort` or `observer_id`)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortEstimates {
    pub templates: BTreeMap<String, Template>,
    /// Cohorts left out because a response cell was empty.
    pub warnings: Vec<String>,
}

/// One noise-only template per distinct cohort value.
pub fn estimate_cohorts<I>(space: &FeatureSpace, trials: I, key: CohortKey) -> Result<CohortEstimates>
where
    I: IntoIterator<Item = (TrialRecord, FeatureVector)>,
{
    let mut accs: BTreeMap<String, TemplateAccumulator> = BTreeMap::new();
    for (trial, x) in trials {
        let cohort = key.select(&trial).ok_or_else(|| {
            Error::invalid(format!("trial `{}` has no cohort tag", trial.trial_id))
        })?;
        accs.entry(cohort.to_owned())
            .or_insert_with(|| TemplateAccumulator::new(space))
            .accumulate(&trial, &x)?;
    }
    let mut templates = BTreeMap::new();
    let mut warnings = Vec::new();
    for (cohort, acc) in accs {
        match acc.estimate_noise_only() {
            Ok(t) => {
                templates.insert(cohort, t);
            }
            Err(e @ Error::EmptyCells(_)) => warnings.push(format!("cohort `{cohort}` omitted: {e}")),
            Err(e) => return Err(e),
        }
    }
    Ok(CohortEstimates {
        templates,
        warnings,
    })
}

/// Accumulates a whole trial log, regenerating each non-catch stimulus.
pub fn accumulate_log(
    space: &FeatureSpace,
    model: &StimulusModel,
    trials: &[TrialRecord],
) -> Result<TemplateAccumulator> {
    let mut acc = TemplateAccumulator::new(space);
    for t in trials {
        if t.is_catch {
            continue;
        }
        acc.accumulate(t, &model.stimulus(space, t)?)?;
    }
    Ok(acc)
}
