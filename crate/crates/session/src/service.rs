use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use crate::config::SessionConfig;
use crate::session::{Session, CONFIG_FILE};
use crate::SessionError;

/// All sessions known to one server. Each session has its own lock, so
/// updates to one session are serialized and distinct sessions never wait
/// on each other.
pub struct Service {
    data_dir: Option<PathBuf>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic mid-update cannot leave a half-written record behind, so the
    // data is still usable.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Service {
    pub fn in_memory() -> Self {
        Self {
            data_dir: None,
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    /// Loads every session found under `data_dir`, creating it if needed.
    pub fn open(data_dir: &Path) -> Result<Self, SessionError> {
        fs::create_dir_all(data_dir).map_err(|e| SessionError::Storage(e.to_string()))?;
        let mut sessions = BTreeMap::new();
        let entries = fs::read_dir(data_dir).map_err(|e| SessionError::Storage(e.to_string()))?;
        for entry in entries {
            let dir = entry.map_err(|e| SessionError::Storage(e.to_string()))?.path();
            if !dir.join(CONFIG_FILE).is_file() {
                continue;
            }
            let session = Session::load(&dir)
                .map_err(|e| SessionError::Storage(format!("{}: {e}", dir.display())))?;
            sessions.insert(session.config().session_id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            data_dir: Some(data_dir.to_owned()),
            sessions: Mutex::new(sessions),
        })
    }

    pub fn create(&self, config: SessionConfig) -> Result<String, SessionError> {
        let mut sessions = lock(&self.sessions);
        if sessions.contains_key(&config.session_id) {
            return Err(SessionError::Duplicate(config.session_id));
        }
        let session = match &self.data_dir {
            Some(dir) => Session::create(config, dir)?,
            None => Session::in_memory(config)?,
        };
        let id = session.config().session_id.clone();
        sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn session_ids(&self) -> Vec<String> {
        lock(&self.sessions).keys().cloned().collect()
    }

    /// Runs `f` with exclusive access to one session.
    pub fn with<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let session = lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_owned()))?;
        let mut guard = lock(&session);
        f(&mut guard)
    }
}
