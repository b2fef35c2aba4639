use statt::data::{build_dataset, save_dataset, DatasetConfig};

use crate::args::GenArgs;
use crate::failure::{CliResult, Status};
use crate::files::load_config;
use crate::manifest::Invocation;

pub fn resolve(a: &GenArgs) -> CliResult<Invocation> {
    let mut cfg: DatasetConfig = match &a.config {
        Some(p) => load_config(p)?,
        None => DatasetConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.scene.seed = seed;
    }
    cfg.scene.validate()?;
    let mut inv = Invocation::new("gen", &cfg).seed("scene", cfg.scene.seed).output("dir", &a.out);
    if let Some(p) = &a.config {
        inv = inv.input("config", p);
    }
    Ok(inv)
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let cfg: DatasetConfig = inv.config_as()?;
    let out = inv.output_path("dir")?;
    let ds = build_dataset(&cfg)?;
    save_dataset(out, &ds)?;
    eprintln!(
        "wrote {} ({}x{} px, {} steps, {} channels, {} labeled px, noisy steps {:?})",
        out.display(),
        ds.manifest.height,
        ds.manifest.width,
        ds.manifest.time_steps,
        ds.manifest.channels,
        ds.labels.labeled_count(),
        ds.manifest.noisy_steps
    );
    Ok(Status::Ok)
}
