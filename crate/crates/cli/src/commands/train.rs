use std::time::Instant;

use serde::{Deserialize, Serialize};
use statt::data::{load_dataset, Split};
use statt::model::{init_params, save_checkpoint, ModelConfig};
use statt::parallel::Exec;
use statt::train::{evaluate, history_csv, train, PatchSets, Timing, TrainConfig};

use super::{write_metrics, write_timing};
use crate::args::TrainArgs;
use crate::failure::{CliResult, Status};
use crate::files::{self, load_config};
use crate::manifest::Invocation;

#[derive(Serialize, Deserialize)]
struct Resolved {
    model: ModelConfig,
    train: TrainConfig,
}

pub fn resolve(a: &TrainArgs) -> CliResult<Invocation> {
    let mut model: ModelConfig = match &a.model {
        Some(p) => load_config(p)?,
        None => ModelConfig::default(),
    };
    if let Some(mode) = a.mode {
        model.mode = mode;
    }
    let train: TrainConfig = match &a.train {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    model.validate()?;
    train.validate()?;
    let seed = train.seed;
    let mut inv = Invocation::new("train", &Resolved { model, train })
        .seed("init_and_shuffle", seed)
        .input("data", &a.data)
        .output("dir", &a.out);
    for (name, p) in [("model_config", &a.model), ("train_config", &a.train)] {
        if let Some(p) = p {
            inv = inv.input(name, p);
        }
    }
    Ok(inv)
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let r: Resolved = inv.config_as()?;
    let out = inv.output_path("dir")?;
    let ds = load_dataset(inv.input_path("data")?)?;
    let sets = PatchSets::extract(&ds, &r.model)?;
    eprintln!(
        "patches: {} train, {} val, {} test; mode {}",
        sets.train.len(),
        sets.val.len(),
        sets.test.len(),
        r.model.mode
    );
    let init = init_params(&r.model, r.train.seed)?;
    let outcome = train(&r.model, init, &sets.train, &sets.val, &r.train, Exec::default(), |e| {
        eprintln!("epoch {:>3}  loss {:.5}  val mean F1 {:.4}", e.epoch, e.train_loss, e.val_mean_f1)
    })?;
    files::create_dir(out)?;
    save_checkpoint(&out.join("checkpoint"), &r.model, &outcome.params)?;
    files::write_text(&out.join("history.csv"), &history_csv(&outcome.history))?;

    let t = Instant::now();
    let metrics = evaluate(&outcome.params, &r.model, &sets.test, ds.class_names(), Exec::default())?;
    let timing = Timing {
        train_seconds_per_epoch: Some(outcome.seconds_per_epoch),
        test_seconds: t.elapsed().as_secs_f64(),
    };
    write_metrics(&out.join("metrics.json"), Split::Test, &metrics)?;
    write_timing(&out.join("timing.json"), &timing)?;
    eprintln!(
        "best epoch {} (val mean F1 {:.4}); test mean F1 {:.4}",
        outcome.best_epoch, outcome.best_val_mean_f1, metrics.mean_f1
    );
    Ok(Status::Ok)
}
