use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statt::model::{init_params, statt_forward, statt_forward_with, AggregationMode, ModelConfig};
use statt::{ModelParams, Real, Tensor};

pub type Outcome = Result<String, String>;

fn input<T: Real>(cfg: &ModelConfig, rng: &mut ChaCha8Rng, scale: f64) -> Tensor<T> {
    Tensor::from_fn(&[cfg.time_steps, cfg.channels, cfg.in_size, cfg.in_size], |_| {
        T::of(rng.gen_range(-scale..scale))
    })
}

/// Initialised parameters with the scorer sharpened so that weights spread
/// well away from uniform.
fn sharpened<T: Real>(cfg: &ModelConfig, seed: u64, gain: f64) -> ModelParams<T> {
    let mut p = init_params::<T>(cfg, seed).unwrap();
    for name in ["attn.fc1.weight", "attn.fc2.weight"] {
        let w = p.get_mut(name).unwrap();
        *w = w.map(|v| T::of(v.as_f64() * gain));
    }
    p
}

/// Temporal weights sum to one over `forwards` random passes in f32.
pub fn weights_sum_to_one(forwards: usize, tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut spread = 0.0f64;
    for i in 0..forwards {
        let cfg = ModelConfig {
            time_steps: [2, 4, 7, 12][i % 4],
            ..ModelConfig::tiny()
        };
        let p = sharpened::<f32>(&cfg, i as u64, rng.gen_range(1.0..4.0));
        let x = input::<f32>(&cfg, &mut rng, 3.0);
        let alpha = statt_forward(&x, &p, &cfg).map_err(|e| format!("forward {i}: {e}"))?.alpha;
        let sum: f64 = alpha.data().iter().map(|&a| f64::from(a)).sum();
        if alpha.data().iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(format!("forward {i}: weight outside [0, 1]: {:?}", alpha.data()));
        }
        worst = worst.max((sum - 1.0).abs());
        let hi = alpha.data().iter().fold(0.0f32, |m, &a| m.max(a));
        spread = spread.max(f64::from(hi));
        if worst > tol {
            return Err(format!("forward {i}: |sum - 1| = {worst:e}"));
        }
    }
    Ok(format!("{forwards} forwards, max |sum - 1| = {worst:e}, largest weight {spread:.3}"))
}

/// A one-hot weight vector copies step `t*` of the hidden sequence and of
/// every encoder level bit for bit.
pub fn one_hot_recovers_slice(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for case in 0..cases {
        let cfg = ModelConfig::tiny();
        let p = init_params::<f64>(&cfg, case as u64).unwrap();
        let x = input::<f64>(&cfg, &mut rng, 1.0);
        let star = rng.gen_range(0..cfg.time_steps);
        let onehot = Tensor::from_fn(&[cfg.time_steps], |t| if t == star { 1.0 } else { 0.0 });
        let tr = statt_forward_with(&x, &p, &cfg, Some(&onehot)).map_err(|e| e.to_string())?;
        let want = tr.hidden.outer(star).unwrap();
        if tr.context.data() != want.data() {
            return Err(format!("case {case}: context differs from hidden step {star}"));
        }
        for (k, (s, z)) in tr.skip_context.iter().zip(&tr.skips).enumerate() {
            if s.data() != z.outer(star).unwrap().data() {
                return Err(format!("case {case}: skip level {k} differs from step {star}"));
            }
        }
    }
    Ok(format!("{cases} cases exact"))
}

/// With the scorer's output layer zeroed, attention mode reproduces mean mode.
pub fn zero_scorer_is_mean(cases: usize, tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let att = ModelConfig::tiny();
        let mean = ModelConfig {
            mode: AggregationMode::Mean,
            ..att.clone()
        };
        let mut p = init_params::<f64>(&att, case as u64).unwrap();
        for name in ["attn.fc2.weight", "attn.fc2.bias"] {
            let w = p.get_mut(name).unwrap();
            *w = Tensor::zeros(w.shape());
        }
        let x = input::<f64>(&att, &mut rng, 1.0);
        let a = statt_forward(&x, &p, &att).map_err(|e| e.to_string())?;
        let m = statt_forward(&x, &p, &mean).map_err(|e| e.to_string())?;
        worst = worst
            .max(a.probs.max_abs_diff(&m.probs))
            .max(a.logits.max_abs_diff(&m.logits))
            .max(a.alpha.max_abs_diff(&m.alpha));
        if worst > tol {
            return Err(format!("case {case}: max difference {worst:e}"));
        }
    }
    Ok(format!("{cases} cases, max difference {worst:e}"))
}
