use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use visbias_core::classimg::{Class, TemplateAccumulator, TrialRecord};
use visbias_core::featspace::{render, sample_white_noise, FeatureVector};
use visbias_core::{io, Error as CoreError};

use crate::config::SessionConfig;
use crate::schedule::{slot, Slot};
use crate::SessionError;

pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "trials.jsonl";

/// What a worker is shown. Catch and noise stimuli serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub stimulus_id: String,
    /// One base64 PNG per configured scale, smallest first.
    pub images: Vec<String>,
    /// Zero-based position of this stimulus in the worker's sequence.
    pub index: u64,
    pub total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Yes,
    No,
}

impl Response {
    /// Yes means the target was seen, class A.
    pub fn class(self) -> Class {
        match self {
            Response::Yes => Class::A,
            Response::No => Class::B,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: u64,
    pub total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub progress: Progress,
    pub qualified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveTemplate {
    pub space: String,
    pub values: Vec<f64>,
    pub trials_used: u64,
    /// Base64 PNG glyph of the template at the middle scale.
    pub glyph: String,
}

#[derive(Clone, Debug)]
struct WorkerState {
    next: u64,
    catch_seen: u64,
    catch_correct: u64,
    acc: TemplateAccumulator,
    acks: HashMap<String, Ack>,
}

/// One labeling session: config, per-worker state and the trial log.
///
/// The log is the source of truth; everything else is derived from it and
/// rebuilt by [`Session::load`].
pub struct Session {
    config: SessionConfig,
    log: Option<File>,
    dir: Option<PathBuf>,
    log_text: String,
    workers: BTreeMap<String, WorkerState>,
}

fn storage(e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage(e.to_string())
}

impl Session {
    /// Session kept in memory only.
    pub fn in_memory(config: SessionConfig) -> Result<Self, SessionError> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(SessionError::InvalidConfig(problems));
        }
        Ok(Self {
            config,
            log: None,
            dir: None,
            log_text: String::new(),
            workers: BTreeMap::new(),
        })
    }

    /// Creates `root/<session_id>/` with the config and an empty log.
    pub fn create(config: SessionConfig, root: &Path) -> Result<Self, SessionError> {
        let mut session = Self::in_memory(config)?;
        let dir = root.join(&session.config.session_id);
        fs::create_dir_all(root).map_err(storage)?;
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(SessionError::Duplicate(session.config.session_id.clone()))
            }
            Err(e) => return Err(storage(e)),
        }
        let text = serde_json::to_string_pretty(&session.config).map_err(storage)?;
        fs::write(dir.join(CONFIG_FILE), text + "\n").map_err(storage)?;
        let log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(dir.join(LOG_FILE))
            .map_err(storage)?;
        log.sync_all().map_err(storage)?;
        session.log = Some(log);
        session.dir = Some(dir);
        Ok(session)
    }

    /// Rebuilds a session from its directory. A final line cut short by a
    /// crash is dropped from the file; any other bad line is an error.
    pub fn load(dir: &Path) -> Result<Self, SessionError> {
        let text = fs::read_to_string(dir.join(CONFIG_FILE)).map_err(storage)?;
        let config: SessionConfig = serde_json::from_str(&text).map_err(storage)?;
        let mut session = Self::in_memory(config)?;

        let path = dir.join(LOG_FILE);
        let mut bytes = fs::read(&path).map_err(storage)?;
        if let Some(last_newline) = bytes.iter().rposition(|b| *b == b'\n') {
            if last_newline + 1 != bytes.len() {
                bytes.truncate(last_newline + 1);
            }
        } else {
            bytes.clear();
        }
        let file = OpenOptions::new().write(true).open(&path).map_err(storage)?;
        file.set_len(bytes.len() as u64).map_err(storage)?;
        drop(file);

        let log_text = String::from_utf8(bytes).map_err(storage)?;
        let trials = visbias_core::classimg::read_trials(log_text.as_bytes())
            .map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))?;
        for trial in &trials {
            session.apply(trial)?;
        }
        session.log_text = log_text;
        session.log = Some(OpenOptions::new().append(true).open(&path).map_err(storage)?);
        session.dir = Some(dir.to_owned());
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn worker(&mut self, worker: &str) -> &mut WorkerState {
        let space = &self.config.space;
        self.workers.entry(worker.to_owned()).or_insert_with(|| WorkerState {
            next: 0,
            catch_seen: 0,
            catch_correct: 0,
            acc: TemplateAccumulator::new(space),
            acks: HashMap::new(),
        })
    }

    fn check_worker(worker: &str) -> Result<(), SessionError> {
        if worker.is_empty() || worker.len() > 128 || worker.chars().any(char::is_control) {
            return Err(SessionError::InvalidRequest(
                "worker must be 1-128 printable characters".to_owned(),
            ));
        }
        Ok(())
    }

    fn slot_vector(&self, slot: &Slot) -> Result<FeatureVector, SessionError> {
        let space = &self.config.space;
        match slot.catch_item {
            Some(i) => self.config.catch_pool[i].vector(space).map_err(storage),
            None => Ok(sample_white_noise(space, slot.seed)),
        }
    }

    /// The worker's outstanding stimulus. Repeated calls return the same
    /// stimulus until it is labeled.
    pub fn next_stimulus(&mut self, worker: &str) -> Result<Stimulus, SessionError> {
        Self::check_worker(worker)?;
        let index = self.workers.get(worker).map_or(0, |w| w.next);
        if index >= self.config.n_target_trials {
            return Err(SessionError::Complete);
        }
        let slot = slot(&self.config, worker, index);
        let x = self.slot_vector(&slot)?;
        let images = self
            .config
            .scales
            .iter()
            .map(|s| {
                let png = render(&x, &self.config.space, *s)?.to_png()?;
                Ok(BASE64.encode(png))
            })
            .collect::<Result<Vec<_>, CoreError>>()
            .map_err(storage)?;
        Ok(Stimulus {
            stimulus_id: slot.stimulus_id,
            images,
            index,
            total: self.config.n_target_trials,
        })
    }

    /// Records a response. Resubmitting a labeled stimulus returns its
    /// original ack and changes nothing.
    pub fn submit(
        &mut self,
        worker: &str,
        stimulus_id: &str,
        response: Response,
        timestamp: i64,
    ) -> Result<Ack, SessionError> {
        Self::check_worker(worker)?;
        if let Some(ack) = self.workers.get(worker).and_then(|w| w.acks.get(stimulus_id)) {
            return Ok(*ack);
        }
        let index = self.workers.get(worker).map_or(0, |w| w.next);
        if index >= self.config.n_target_trials {
            return Err(SessionError::UnknownStimulus(stimulus_id.to_owned()));
        }
        let slot = slot(&self.config, worker, index);
        if slot.stimulus_id != stimulus_id {
            return Err(SessionError::UnknownStimulus(stimulus_id.to_owned()));
        }
        let trial = TrialRecord {
            trial_id: slot.stimulus_id.clone(),
            sample_seed: slot.seed,
            space_id: self.config.space.id().to_owned(),
            true_class: slot.catch_item.map(|i| self.config.catch_pool[i].true_class),
            response: response.class(),
            is_catch: slot.catch_item.is_some(),
            observer_id: worker.to_owned(),
            cohort: None,
            timestamp,
        };
        let mut line = io::to_line(&trial).map_err(storage)?;
        line.push('\n');
        if let Some(log) = self.log.as_mut() {
            // One write per record; a crash can only tear the final line.
            log.write_all(line.as_bytes()).map_err(storage)?;
            log.sync_data().map_err(storage)?;
        }
        self.log_text.push_str(&line);
        self.apply(&trial)
    }

    /// Folds one logged trial into the in-memory state.
    fn apply(&mut self, trial: &TrialRecord) -> Result<Ack, SessionError> {
        let worker = trial.observer_id.clone();
        let index = self.workers.get(&worker).map_or(0, |w| w.next);
        let expected = slot(&self.config, &worker, index);
        if trial.trial_id != expected.stimulus_id || trial.is_catch != expected.catch_item.is_some() {
            return Err(SessionError::Storage(format!(
                "log entry {} does not match slot {index} of worker {worker}",
                trial.trial_id
            )));
        }
        let x = (!trial.is_catch).then(|| self.slot_vector(&expected)).transpose()?;
        let total = self.config.n_target_trials;
        let qualification = self.config.qualification.clone();
        let state = self.worker(&worker);
        if trial.is_catch {
            state.catch_seen += 1;
            if Some(trial.response) == trial.true_class {
                state.catch_correct += 1;
            }
        } else if let Some(x) = x {
            state.acc.accumulate(trial, &x).map_err(storage)?;
        }
        state.next += 1;
        let ack = Ack {
            progress: Progress {
                labeled: state.next,
                total,
            },
            qualified: qualification.is_met(state.catch_seen, state.catch_correct),
        };
        state.acks.insert(trial.trial_id.clone(), ack);
        Ok(ack)
    }

    pub fn is_qualified(&self, worker: &str) -> bool {
        let (seen, correct) = self
            .workers
            .get(worker)
            .map_or((0, 0), |w| (w.catch_seen, w.catch_correct));
        self.config.qualification.is_met(seen, correct)
    }

    /// Sum over currently qualified workers.
    pub fn qualified_accumulator(&self) -> TemplateAccumulator {
        let mut acc = TemplateAccumulator::new(&self.config.space);
        for (id, w) in &self.workers {
            if self.is_qualified(id) {
                acc.merge(&w.acc).expect("accumulators share the session space");
            }
        }
        acc
    }

    pub fn template(&self) -> Result<LiveTemplate, SessionError> {
        let template = self.qualified_accumulator().estimate_noise_only().map_err(|e| match e {
            CoreError::EmptyCells(cells) => SessionError::NotReady {
                missing: cells.iter().map(ToString::to_string).collect(),
            },
            other => storage(other),
        })?;
        let x = template.vector().map_err(storage)?;
        let scale = self.config.scales[1];
        let png = render(&x, &self.config.space, scale)
            .and_then(|img| img.to_png())
            .map_err(storage)?;
        Ok(LiveTemplate {
            space: template.space_id,
            values: template.values,
            trials_used: template.trials_used,
            glyph: BASE64.encode(png),
        })
    }

    /// The trial log exactly as stored.
    pub fn export(&self) -> &str {
        &self.log_text
    }
}
