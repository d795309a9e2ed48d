//! Deterministic per-worker slot plan.
//!
//! Slot `k` of worker `w` is fully determined by the session config and
//! `(w, k)`: its noise seed, whether it is a catch slot, which catch item it
//! shows, and its opaque stimulus id. Nothing about a slot is random at
//! serving time, so a trial log can always be replayed.

use sha2::{Digest, Sha256};

use crate::config::SessionConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub index: u64,
    pub stimulus_id: String,
    pub seed: u64,
    /// Index into the catch pool for catch slots.
    pub catch_item: Option<usize>,
}

const PPM: u64 = 1_000_000;

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&out);
    bytes
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let d = digest(parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn key(config: &SessionConfig, worker: &str, purpose: &str, index: u64) -> u64 {
    hash64(&[
        config.session_id.as_bytes(),
        &config.seed.to_le_bytes(),
        worker.as_bytes(),
        purpose.as_bytes(),
        &index.to_le_bytes(),
    ])
}

/// Catch slots sit where `floor((k + offset) * rate)` steps up, so any `n`
/// consecutive slots contain `floor(n * rate)` or `ceil(n * rate)` of them;
/// exactly one in ten for a rate of 0.1.
pub fn is_catch_slot(config: &SessionConfig, worker: &str, index: u64) -> bool {
    let ppm = (config.catch_rate * PPM as f64).round() as u64;
    if ppm == 0 || config.catch_pool.is_empty() {
        return false;
    }
    let offset = key(config, worker, "catch-offset", 0) % PPM;
    let k = index + offset;
    ((k + 1) * ppm) / PPM > (k * ppm) / PPM
}

pub fn slot(config: &SessionConfig, worker: &str, index: u64) -> Slot {
    let id = digest(&[
        config.session_id.as_bytes(),
        &config.seed.to_le_bytes(),
        worker.as_bytes(),
        b"stimulus-id",
        &index.to_le_bytes(),
    ]);
    let stimulus_id = id[..12].iter().map(|b| format!("{b:02x}")).collect();
    let catch_item = is_catch_slot(config, worker, index)
        .then(|| (key(config, worker, "catch-item", index) % config.catch_pool.len() as u64) as usize);
    Slot {
        index,
        stimulus_id,
        seed: key(config, worker, "noise", index),
        catch_item,
    }
}
