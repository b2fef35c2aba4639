//! Central-difference gradient checking in 64-bit precision.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{batch_loss_grad, batch_loss_recording, batch_loss_replaying, init_params, ModelConfig, IGNORE_LABEL};
use crate::parallel::{self, Exec};
use crate::params::ModelParams;
use crate::rng::{stream, tags};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct GradSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per parameter group.
    pub groups: BTreeMap<String, f64>,
    pub samples: Vec<GradSample>,
}

/// Group key for a parameter name: the first dotted segment, or the first two
/// for recurrent weights so each LSTM direction is reported separately.
pub fn param_group(name: &str) -> String {
    let mut parts = name.split('.');
    let first = parts.next().unwrap_or(name);
    match (first, parts.next()) {
        ("lstm", Some(dir)) => format!("lstm.{dir}"),
        _ => first.to_string(),
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `gradient(params)` against `(f(p+eps) - f(p-eps)) / 2eps` for
/// `samples` scalar parameters. Tensors are visited round-robin in a seeded
/// shuffled order, so every tensor is covered once `samples >= params.len()`.
pub fn grad_check<V, G>(
    value: V,
    gradient: G,
    params: &ModelParams<f64>,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    V: Fn(&ModelParams<f64>) -> Result<f64> + Sync + Send,
    G: Fn(&ModelParams<f64>) -> Result<ModelParams<f64>>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if params.is_empty() {
        return Err(Error::Config("no parameters to check".into()));
    }
    let analytic = gradient(params)?;
    if !params.same_layout(&analytic) {
        return Err(Error::Contract("gradient layout differs from parameter layout".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..params.len()).collect();
    let mut picks = Vec::with_capacity(samples);
    while picks.len() < samples {
        order.shuffle(&mut rng);
        for &ti in &order {
            if picks.len() == samples {
                break;
            }
            let n = params.tensors()[ti].len();
            picks.push((ti, rng.gen_range(0..n)));
        }
    }

    let results = parallel::map(Exec::default(), &picks, |&(ti, idx)| -> Result<GradSample> {
        let name = &params.names()[ti];
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            p.tensors_mut()[ti].data_mut()[idx] += delta;
            let v = value(&p)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at {name}[{idx}] perturbed by {delta:e}"
                )));
            }
            Ok(v)
        };
        let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        let a = analytic.tensors()[ti].data()[idx];
        Ok(GradSample {
            param: name.clone(),
            index: idx,
            analytic: a,
            numeric,
            relative_error: relative_error(a, numeric),
        })
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut groups = BTreeMap::new();
    let mut max_err = 0.0f64;
    for s in &samples {
        max_err = max_err.max(s.relative_error);
        let e = groups.entry(param_group(&s.param)).or_insert(0.0f64);
        *e = e.max(s.relative_error);
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        groups,
        samples,
    })
}

/// Random input series and labels for gradient checks; roughly one label in
/// eight is [`IGNORE_LABEL`].
pub fn synthetic_batch(cfg: &ModelConfig, patches: usize, seed: u64) -> Vec<(Tensor<f64>, Vec<u8>)> {
    let mut rng = stream(seed, tags::PIXEL_NOISE, u64::MAX);
    let shape = [cfg.time_steps, cfg.channels, cfg.in_size, cfg.in_size];
    (0..patches)
        .map(|_| {
            let x = Tensor::from_fn(&shape, |_| rng.gen_range(-1.0..1.0));
            let y = (0..cfg.out_size * cfg.out_size)
                .map(|_| {
                    if rng.gen_range(0..8) == 0 {
                        IGNORE_LABEL
                    } else {
                        rng.gen_range(0..cfg.classes) as u8
                    }
                })
                .collect();
            (x, y)
        })
        .collect()
}

/// Gradient check of the full network's batch loss in 64-bit precision.
/// `fault` swaps in a deliberately wrong sigmoid derivative.
///
/// The perturbed losses are evaluated with the ReLU gates and max-pool
/// winners of the unperturbed pass. Otherwise a step of `eps` crosses some
/// kink among the thousands of units for nearly every sampled coordinate and
/// the difference quotient no longer estimates the derivative at the point.
pub fn check_model(cfg: &ModelConfig, seed: u64, samples: usize, eps: f64, fault: bool) -> Result<GradCheckReport> {
    if samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    cfg.validate()?;
    let params = init_params::<f64>(cfg, seed)?;
    let data = synthetic_batch(cfg, 2, seed);
    let batch: Vec<(&Tensor<f64>, &[u8])> = data.iter().map(|(x, y)| (x, y.as_slice())).collect();
    let (_, tape) = batch_loss_recording(&params, cfg, &batch)?;
    grad_check(
        |p| batch_loss_replaying(p, cfg, &batch, &tape),
        |p| batch_loss_grad(p, cfg, &batch, fault).map(|(_, g)| g),
        &params,
        eps,
        samples,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams<f64> {
        let mut p = ModelParams::new();
        p.push("a.w", Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap()).unwrap();
        p.push("b.w", Tensor::new(vec![2, 2], vec![0.5, 0.1, -0.7, 4.0]).unwrap()).unwrap();
        p
    }

    #[test]
    fn quadratic_is_exact() {
        let p = params();
        let value = |p: &ModelParams<f64>| -> Result<f64> {
            Ok(0.5 * p.tensors().iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>())
        };
        let report = grad_check(value, |p| Ok(p.clone()), &p, 1e-3, 20, 7).unwrap();
        assert!(report.max_relative_error < 1e-9, "{}", report.max_relative_error);
        assert_eq!(report.groups.len(), 2);
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let p = params();
        let report = grad_check(|_| Ok(3.0), |p| Ok(p.zeros_like()), &p, 1e-3, 10, 1).unwrap();
        assert!(report.max_relative_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = params();
        let value = |p: &ModelParams<f64>| -> Result<f64> {
            Ok(p.tensors().iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>())
        };
        let report = grad_check(value, |p| Ok(p.clone()), &p, 1e-3, 10, 1).unwrap();
        assert!(report.max_relative_error > 0.4);
    }

    #[test]
    fn non_finite_objective_names_the_parameter() {
        let p = params();
        let value = |p: &ModelParams<f64>| -> Result<f64> {
            let s = p.get("b.w").unwrap().sum();
            Ok(if s > 3.9 + 1e-6 { f64::NAN } else { 0.0 })
        };
        let err = grad_check(value, |p| Ok(p.zeros_like()), &p, 1e-3, 4, 0).unwrap_err();
        assert!(err.to_string().contains("b.w"), "{err}");
    }

    #[test]
    fn groups_split_lstm_directions() {
        assert_eq!(param_group("lstm.fwd.w_h_f"), "lstm.fwd");
        assert_eq!(param_group("enc.0.conv1.weight"), "enc");
        assert_eq!(param_group("cls"), "cls");
    }
}
