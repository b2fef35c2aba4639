use std::time::Instant;

use serde::{Deserialize, Serialize};
use statt::gradcheck::{check_model, GradCheckReport};
use statt::model::{param_count, ModelConfig};

use crate::args::GradcheckArgs;
use crate::failure::{CliResult, Failure, Status};
use crate::files::{self, load_config};
use crate::manifest::Invocation;

/// Largest acceptable relative error.
pub const THRESHOLD: f64 = 1e-4;
/// Models above this many parameters need `--allow-large`.
pub const PARAM_GUARD: usize = 1_000_000;

#[derive(Serialize, Deserialize)]
struct Resolved {
    model: ModelConfig,
    seed: u64,
    samples: usize,
    eps: f64,
    allow_large: bool,
    inject_fault: bool,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    threshold: f64,
    passed: bool,
    parameters: usize,
    #[serde(flatten)]
    report: &'a GradCheckReport,
}

pub fn resolve(a: &GradcheckArgs) -> CliResult<Invocation> {
    let model: ModelConfig = match &a.model {
        Some(p) => load_config(p)?,
        None => ModelConfig::tiny(),
    };
    model.validate()?;
    if a.samples == 0 {
        return Err(Failure::config("--samples must be at least 1"));
    }
    if !(a.eps > 0.0) {
        return Err(Failure::config(format!("--eps must be positive, got {}", a.eps)));
    }
    let n = param_count(&model);
    if n > PARAM_GUARD && !a.allow_large {
        return Err(Failure::config(format!(
            "model has {n} parameters (guard {PARAM_GUARD}); each sample costs two full forward passes. \
             Pass --allow-large to check it anyway"
        )));
    }
    let r = Resolved {
        model,
        seed: a.seed,
        samples: a.samples,
        eps: a.eps,
        allow_large: a.allow_large,
        inject_fault: a.inject_fault,
    };
    let mut inv = Invocation::new("gradcheck", &r).seed("params_and_batch", a.seed).output("dir", &a.out);
    if let Some(p) = &a.model {
        inv = inv.input("model_config", p);
    }
    Ok(inv)
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let r: Resolved = inv.config_as()?;
    let out = inv.output_path("dir")?;
    let t = Instant::now();
    let report = check_model(&r.model, r.seed, r.samples, r.eps, r.inject_fault)?;
    let secs = t.elapsed().as_secs_f64();
    let passed = report.max_relative_error < THRESHOLD;

    println!("{:<12} {:>14}", "group", "max rel error");
    for (group, err) in &report.groups {
        println!("{group:<12} {err:>14.3e}");
    }
    println!(
        "max relative error {:.3e} over {} samples (eps {:e}, {secs:.2} s): {}",
        report.max_relative_error,
        report.samples.len(),
        r.eps,
        if passed { "PASS" } else { "FAIL" }
    );
    files::create_dir(out)?;
    files::write_json(
        &out.join("gradcheck.json"),
        &ReportFile {
            threshold: THRESHOLD,
            passed,
            parameters: param_count(&r.model),
            report: &report,
        },
    )?;
    Ok(if passed {
        Status::Ok
    } else {
        Status::CheckFailed(format!(
            "max relative error {:e} is not below {THRESHOLD:e}",
            report.max_relative_error
        ))
    })
}
