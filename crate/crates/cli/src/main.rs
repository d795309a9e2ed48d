mod args;
mod commands;
mod output;
mod space;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};
use visbias_session::SessionError;

use crate::args::{Cli, Command};
use crate::commands::Ctx;
use crate::output::Output;

/// A flag combination the parser cannot rule out on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn error_json(err: &anyhow::Error) -> (Value, u8) {
    let message = format!("{err:#}");
    if let Some(u) = err.downcast_ref::<UsageError>() {
        return (json!({"kind": "usage", "message": u.0}), 2);
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<visbias_core::Error>() {
            let (kind, extra) = match e {
                visbias_core::Error::InvalidInput(_) => ("invalid_input", json!({})),
                visbias_core::Error::SpaceMismatch { expected, found } => {
                    ("space_mismatch", json!({"expected": expected, "found": found}))
                }
                visbias_core::Error::EmptyCells(cells) => (
                    "empty_cells",
                    json!({"cells": cells.iter().map(ToString::to_string).collect::<Vec<_>>()}),
                ),
                visbias_core::Error::Parse { line, .. } => ("parse", json!({"line": line})),
                visbias_core::Error::Io(_) => ("io", json!({})),
            };
            let mut v = json!({"kind": kind, "message": message});
            v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
            return (v, 1);
        }
        if cause.downcast_ref::<SessionError>().is_some() {
            return (json!({"kind": "session", "message": message}), 1);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (json!({"kind": "io", "message": message}), 1);
        }
    }
    (json!({"kind": "error", "message": message}), 1)
}

fn fail(error: Value, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": error }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let usage = e.render().to_string();
            let problem = usage.split("\n\nUsage:").next().unwrap_or_default();
            let message = problem.trim_start_matches("error: ").split_whitespace().collect::<Vec<_>>().join(" ");
            return fail(json!({"kind": "usage", "message": message, "usage": usage}), 2);
        }
    };
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        seed_given: cli.seed.is_some(),
        format: cli.format,
        out: Output::new(cli.out),
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
        Command::Render(a) => commands::render_cmd(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Experiment(a) => commands::experiment(&ctx, a),
        Command::Serve(a) => commands::serve(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (v, code) = error_json(&e);
            fail(v, code)
        }
    }
}
