use std::time::Instant;

use serde::{Deserialize, Serialize};
use statt::data::{extract_patches, load_dataset, Split};
use statt::model::load_checkpoint;
use statt::parallel::Exec;
use statt::train::{check_compatible, evaluate, Timing};

use super::{write_metrics, write_timing};
use crate::args::EvalArgs;
use crate::failure::{CliResult, Failure, Status};
use crate::files;
use crate::manifest::Invocation;

#[derive(Serialize, Deserialize)]
struct Resolved {
    split: Split,
}

pub fn resolve(a: &EvalArgs) -> CliResult<Invocation> {
    Ok(Invocation::new("eval", &Resolved { split: a.split })
        .input("data", &a.data)
        .input("ckpt", &a.ckpt)
        .output("file", &a.out))
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let r: Resolved = inv.config_as()?;
    let out = inv.output_path("file")?;
    let ds = load_dataset(inv.input_path("data")?)?;
    let (cfg, params) = load_checkpoint(inv.input_path("ckpt")?)?;
    check_compatible(&cfg, &ds)?;
    let patches = extract_patches(&ds, r.split, cfg.in_size, cfg.out_size)?;
    if patches.is_empty() {
        return Err(Failure::config(format!("split {} has no labeled patches", r.split)));
    }
    let t = Instant::now();
    let metrics = evaluate(&params, &cfg, &patches, ds.class_names(), Exec::default())?;
    let timing = Timing {
        train_seconds_per_epoch: None,
        test_seconds: t.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        files::create_dir(dir)?;
    }
    write_metrics(out, r.split, &metrics)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_timing(&out.with_file_name(format!("{stem}.timing.json")), &timing)?;
    eprintln!(
        "{} split: {} px, mean F1 {:.4}",
        r.split, metrics.pixels, metrics.mean_f1
    );
    Ok(Status::Ok)
}
