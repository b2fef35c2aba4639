use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statt::data::Patch;
use statt::model::{init_params, ModelConfig, IGNORE_LABEL};
use statt::train::{evaluate, predict, Confusion, Metrics};
use statt::parallel::Exec;
use statt::Tensor;
use statt_oracles as oracle;

pub type Outcome = Result<String, String>;

fn compare(case: usize, m: &Metrics, truth: &[u8], pred: &[u8], classes: usize) -> Result<(), String> {
    let conf = oracle::confusion(truth, pred, classes, IGNORE_LABEL);
    if m.confusion != conf {
        return Err(format!("case {case}: confusion {:?} vs oracle {conf:?}", m.confusion));
    }
    let f1 = oracle::f1_scores(&conf);
    for (k, (c, want)) in m.classes.iter().zip(&f1).enumerate() {
        let same = match (c.f1, want) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        if !same {
            return Err(format!("case {case}: class {k} F1 {:?} vs oracle {want:?}", c.f1));
        }
    }
    let defined: Vec<f64> = f1.iter().flatten().copied().collect();
    let mean = if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    if (m.mean_f1 - mean).abs() > 1e-12 {
        return Err(format!("case {case}: mean F1 {} vs oracle {mean}", m.mean_f1));
    }
    Ok(())
}

/// Confusion, per-class and mean F1 against a cell-by-cell recount on random
/// label/prediction pairs.
pub fn random_cases(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for case in 0..cases {
        let classes = rng.gen_range(2..7usize);
        let n = rng.gen_range(1..400);
        let accuracy = rng.gen_range(0.0..1.0);
        let truth: Vec<u8> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    IGNORE_LABEL
                } else {
                    rng.gen_range(0..classes as u8)
                }
            })
            .collect();
        let pred: Vec<u8> = truth
            .iter()
            .map(|&t| {
                if t != IGNORE_LABEL && rng.gen_bool(accuracy) {
                    t
                } else {
                    rng.gen_range(0..classes as u8)
                }
            })
            .collect();
        let mut c = Confusion::new(classes);
        c.record(&truth, &pred).map_err(|e| e.to_string())?;
        compare(case, &Metrics::from_confusion(&c, &[]), &truth, &pred, classes)?;
    }
    Ok(format!("{cases} cases identical"))
}

/// TP 3, FP 1, FN 1 for class 0 gives F1 0.75.
pub fn worked_example() -> Outcome {
    let truth = [0, 0, 0, 1, 0];
    let pred = [0, 0, 0, 0, 1];
    let mut c = Confusion::new(2);
    c.record(&truth, &pred).map_err(|e| e.to_string())?;
    let got = c.f1(0).ok_or("class 0 F1 undefined")?;
    if c.counts_for(0) != (3, 1, 1) || (got - 0.75).abs() > 1e-12 {
        return Err(format!("counts {:?}, F1 {got}", c.counts_for(0)));
    }
    Ok(format!("F1 = {got}"))
}

/// Model evaluation equals recounting its own per-pixel predictions.
pub fn evaluation_recount(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let cfg = ModelConfig::tiny();
    for case in 0..cases {
        let params = init_params::<f32>(&cfg, case as u64).unwrap();
        let patches: Vec<Patch> = (0..rng.gen_range(1..5))
            .map(|_| Patch {
                x: Tensor::from_fn(&[cfg.time_steps, cfg.channels, cfg.in_size, cfg.in_size], |_| {
                    rng.gen_range(-2.0..2.0f32)
                }),
                y: (0..cfg.out_size * cfg.out_size)
                    .map(|_| if rng.gen_bool(0.2) { IGNORE_LABEL } else { rng.gen_range(0..cfg.classes as u8) })
                    .collect(),
                row: 0,
                col: 0,
            })
            .collect();
        let m = evaluate(&params, &cfg, &patches, &[], Exec::default()).map_err(|e| e.to_string())?;
        let (mut truth, mut pred) = (Vec::new(), Vec::new());
        for p in &patches {
            truth.extend_from_slice(&p.y);
            pred.extend(predict(&params, &cfg, p).map_err(|e| e.to_string())?);
        }
        compare(case, &m, &truth, &pred, cfg.classes)?;
    }
    Ok(format!("{cases} evaluations identical"))
}
