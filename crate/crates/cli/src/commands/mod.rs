//! One module per subcommand. Each turns its arguments into a fully resolved
//! [`Invocation`] and executes invocations; `replay` feeds a recorded one back in.

mod attn;
mod eval;
mod gen;
mod gradcheck;
mod replay;
mod sweep;
mod train;

use std::path::Path;

use serde::Serialize;
use statt::data::Split;
use statt::train::{Metrics, Timing};

use crate::args::Command;
use crate::failure::{CliResult, Failure, Status};
use crate::files;
use crate::manifest::Invocation;


pub fn resolve(cmd: &Command) -> CliResult<Invocation> {
    match cmd {
        Command::Gen(a) => gen::resolve(a),
        Command::Train(a) => train::resolve(a),
        Command::Eval(a) => eval::resolve(a),
        Command::NoiseSweep(a) => sweep::resolve(a),
        Command::Attn(a) => attn::resolve(a),
        Command::Gradcheck(a) => gradcheck::resolve(a),
        Command::Replay(a) => replay::resolve(a),
    }
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    match inv.command.as_str() {
        "gen" => gen::execute(inv),
        "train" => train::execute(inv),
        "eval" => eval::execute(inv),
        "noise-sweep" => sweep::execute(inv),
        "attn" => attn::execute(inv),
        "gradcheck" => gradcheck::execute(inv),
        other => Err(Failure::config(format!("unknown command {other:?} in manifest"))),
    }
}

/// `metrics.json`: the scores of one split. Wall-clock timings go to a
/// separate file so this one is reproducible byte for byte.
#[derive(Serialize)]
struct MetricsFile<'a> {
    split: Split,
    #[serde(flatten)]
    metrics: &'a Metrics,
}

fn write_metrics(path: &Path, split: Split, metrics: &Metrics) -> CliResult<()> {
    files::write_json(path, &MetricsFile { split, metrics })
}

fn write_timing(path: &Path, timing: &Timing) -> CliResult<()> {
    files::write_json(path, timing)
}
