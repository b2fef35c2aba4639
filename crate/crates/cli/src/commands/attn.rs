use serde::{Deserialize, Serialize};
use statt::data::{extract_patches, load_dataset, Split};
use statt::model::load_checkpoint;
use statt::parallel::Exec;
use statt::train::{attention_profile, check_compatible, AttentionProfile};

use crate::args::AttnArgs;
use crate::failure::{CliResult, Failure, Status};
use crate::files;
use crate::manifest::Invocation;
use crate::svg;

#[derive(Serialize, Deserialize)]
struct Resolved {
    split: Split,
    /// `None`: overall mean only; `"all"`: every class; otherwise one class.
    class: Option<String>,
}

pub fn resolve(a: &AttnArgs) -> CliResult<Invocation> {
    Ok(Invocation::new(
        "attn",
        &Resolved {
            split: a.split,
            class: a.class.clone(),
        },
    )
    .input("data", &a.data)
    .input("ckpt", &a.ckpt)
    .output("dir", &a.out))
}

/// Class ids to report, in dataset order.
fn select_classes(choice: Option<&str>, names: &[String]) -> CliResult<Vec<usize>> {
    match choice {
        None => Ok(Vec::new()),
        Some("all") => Ok((0..names.len()).collect()),
        Some(name) => names.iter().position(|n| n == name).map(|k| vec![k]).ok_or_else(|| {
            Failure::config(format!("unknown class {name:?}; known classes: {}, or all", names.join(", ")))
        }),
    }
}

/// `t,alpha_mean[,alpha_class_<name>...]`, one row per time step. Classes
/// with no majority patch leave their column empty.
pub fn attention_csv(profile: &AttentionProfile, classes: &[usize], names: &[String]) -> String {
    let mut s = String::from("t,alpha_mean");
    for &k in classes {
        s.push_str(&format!(",alpha_class_{}", names[k]));
    }
    s.push('\n');
    for (t, a) in profile.mean.iter().enumerate() {
        s.push_str(&format!("{t},{a}"));
        for &k in classes {
            match &profile.per_class[k] {
                Some(v) => s.push_str(&format!(",{}", v[t])),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn execute(inv: &Invocation) -> CliResult<Status> {
    let r: Resolved = inv.config_as()?;
    let out = inv.output_path("dir")?;
    let ds = load_dataset(inv.input_path("data")?)?;
    let classes = select_classes(r.class.as_deref(), ds.class_names())?;
    let (cfg, params) = load_checkpoint(inv.input_path("ckpt")?)?;
    check_compatible(&cfg, &ds)?;
    let patches = extract_patches(&ds, r.split, cfg.in_size, cfg.out_size)?;
    let profile = attention_profile(&params, &cfg, &patches, Exec::default())?;
    let csv = attention_csv(&profile, &classes, ds.class_names());
    files::create_dir(out)?;
    files::write_text(&out.join("attention.csv"), &csv)?;
    let chart = svg::attention_bar_chart(&csv).map_err(Failure::config)?;
    files::write_text(&out.join("attention.svg"), &chart)?;
    for &k in &classes {
        if profile.per_class[k].is_none() {
            eprintln!("no {} split patch is mostly {}; its column is empty", r.split, ds.class_names()[k]);
        }
    }
    eprintln!("{} patches profiled", profile.patches);
    Ok(Status::Ok)
}
