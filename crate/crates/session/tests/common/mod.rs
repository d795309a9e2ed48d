#![allow(dead_code)]

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use visbias_core::classimg::Class;
use visbias_core::featspace::{FeatureSpace, GrayImage};
use visbias_session::{CatchItem, CatchSource, Qualification, Response, SessionConfig, Stimulus};

pub const SIDE: usize = 8;

/// Zero-mean unit pattern: bright left half, dark right half.
pub fn pattern() -> Vec<f64> {
    (0..SIDE * SIDE)
        .map(|i| if i % SIDE < SIDE / 2 { 0.125 } else { -0.125 })
        .collect()
}

pub fn config(id: &str, n_target_trials: u64, catch_rate: f64, seed: u64) -> SessionConfig {
    let t = pattern();
    let catch_pool = if catch_rate > 0.0 {
        vec![
            CatchItem {
                source: CatchSource::Vector { vector: t.iter().map(|v| 3.0 * v).collect() },
                true_class: Class::A,
            },
            CatchItem {
                source: CatchSource::Vector { vector: t.iter().map(|v| -3.0 * v).collect() },
                true_class: Class::B,
            },
        ]
    } else {
        Vec::new()
    };
    SessionConfig {
        session_id: id.to_owned(),
        space: FeatureSpace::raw_pixel("raw:8x8", SIDE, SIDE).unwrap(),
        category_name: "stripe".to_owned(),
        n_target_trials,
        scales: vec![1, 4, 8],
        catch_rate,
        catch_pool,
        qualification: if catch_rate > 0.0 {
            Qualification::default()
        } else {
            Qualification { min_catch_seen: 0, min_catch_accuracy: 0.8 }
        },
        seed,
    }
}

/// How a scripted worker answers, judged from the smallest image only.
#[derive(Clone, Copy, Debug)]
pub enum Rule {
    /// Yes when the image correlates with [`pattern`].
    Honest,
    /// Honest for the first `n` stimuli, inverted afterwards.
    InvertAfter(u64),
    AlwaysYes,
}

pub fn honest(stimulus: &Stimulus) -> Response {
    let png = BASE64.decode(&stimulus.images[0]).unwrap();
    let img = GrayImage::from_png(&png).unwrap();
    assert_eq!((img.width(), img.height()), (SIDE, SIDE));
    let s: f64 = img.pixels().iter().zip(pattern()).map(|(p, t)| p * t).sum();
    if s > 0.0 {
        Response::Yes
    } else {
        Response::No
    }
}

pub fn decide(rule: Rule, stimulus: &Stimulus) -> Response {
    let flip = |r| if r == Response::Yes { Response::No } else { Response::Yes };
    match rule {
        Rule::Honest => honest(stimulus),
        Rule::InvertAfter(n) if stimulus.index < n => honest(stimulus),
        Rule::InvertAfter(_) => flip(honest(stimulus)),
        Rule::AlwaysYes => Response::Yes,
    }
}
