//! Labeling service: serves feature-space noise to human workers at three
//! scales, interleaves catch trials, qualifies workers and keeps a live
//! template estimate.
//!
//! Each session lives in `<data_dir>/<session_id>/` as `config.json` plus an
//! append-only `trials.jsonl`. All in-memory state is rebuilt from those two
//! files on startup.

pub mod config;
pub mod http;
pub mod replay;
pub mod schedule;
mod service;
mod session;

pub use config::{CatchItem, CatchSource, Qualification, SessionConfig};
pub use http::{router, serve, serve_service};
pub use replay::{offline_template, qualified_workers};
pub use service::Service;
pub use session::{Ack, LiveTemplate, Progress, Response, Session, Stimulus, CONFIG_FILE, LOG_FILE};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("session `{0}` already exists")]
    Duplicate(String),
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("stimulus `{0}` is not the worker's outstanding stimulus")]
    UnknownStimulus(String),
    #[error("worker has labeled every stimulus in this session")]
    Complete,
    #[error("template not ready, empty response cell(s): {}", .missing.join(", "))]
    NotReady { missing: Vec<String> },
    #[error("{0}")]
    InvalidRequest(String),
    #[error("storage: {0}")]
    Storage(String),
}
