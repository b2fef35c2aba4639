use serde::Serialize;
use statt::model::AggregationMode;
use statt::parallel::Exec;
use statt::train::{noise_sweep, sweep_csv, SweepConfig};

use crate::args::{parse_fractions, SweepArgs};
use crate::failure::{CliResult, Failure, Status};
use crate::files::{self, load_config};
use crate::manifest::Invocation;
use crate::svg;

pub fn resolve(a: &SweepArgs) -> CliResult<Invocation> {
    let mut cfg: SweepConfig = match &a.config {
        Some(p) => load_config(p)?,
        None => SweepConfig::default(),
    };
    if let Some(list) = &a.fractions {
        cfg.fractions = parse_fractions(list).map_err(Failure::config)?;
    }
    if let Some(seed) = a.seed {
        cfg.dataset.scene.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    let mut inv = Invocation::new("noise-sweep", &cfg)
        .seed("scene", cfg.dataset.scene.seed)
        .seed("init_and_shuffle", cfg.train.seed)
        .output("dir", &a.out);
    if let Some(p) = &a.config {
        inv = inv.input("config", p);
    }
    Ok(inv)
}

/// Test-split temporal weights of one attention-mode run.
#[derive(Serialize)]
struct Profile<'a> {
    fraction: f64,
    noisy_steps: &'a [usize],
    alpha_mean: &'a [f64],
    /// Mean weight on noisy steps over mean weight on clean steps.
    noisy_to_clean_ratio: Option<f64>,
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let cfg: SweepConfig = inv.config_as()?;
    let out = inv.output_path("dir")?;
    files::create_dir(out)?;
    let (rows, names) = noise_sweep(&cfg, Exec::default(), |fraction, mode, epoch, val| {
        eprintln!("fraction {fraction} {mode:<9} epoch {epoch:>3}  val mean F1 {val:.4}")
    })?;
    let csv = sweep_csv(&rows, &names);
    files::write_text(&out.join("sweep.csv"), &csv)?;
    let chart = svg::sweep_line_chart(&csv).map_err(Failure::config)?;
    files::write_text(&out.join("sweep.svg"), &chart)?;
    let profiles: Vec<Profile> = rows
        .iter()
        .filter(|r| r.mode == AggregationMode::Attention)
        .filter_map(|r| {
            r.profile.as_ref().map(|p| Profile {
                fraction: r.fraction,
                noisy_steps: &r.noisy_steps,
                alpha_mean: &p.mean,
                noisy_to_clean_ratio: p.ratio(&r.noisy_steps),
            })
        })
        .collect();
    files::write_json(&out.join("profiles.json"), &profiles)?;
    for r in &rows {
        eprintln!("fraction {} {:<9} test mean F1 {:.4}", r.fraction, r.mode, r.mean_f1);
    }
    Ok(Status::Ok)
}
