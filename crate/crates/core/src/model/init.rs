use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;
use crate::params::ModelParams;
use crate::tensor::{Real, Tensor};

pub(crate) const GATES: [&str; 4] = ["f", "i", "o", "g"];
pub(crate) const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn conv(name: String, cout: usize, cin: usize, k: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![cout, cin, k, k],
            init: Init::Glorot {
                fan_in: cin * k * k,
                fan_out: cout * k * k,
            },
        },
        ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![cout],
            init: Init::Constant(0.0),
        },
    ]
}

fn dense(name: String, out: usize, inp: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![out, inp],
            init: Init::Glorot {
                fan_in: inp,
                fan_out: out,
            },
        },
        ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![out],
            init: Init::Constant(0.0),
        },
    ]
}

/// Every learnable tensor in construction order. Names and shapes are a pure
/// function of the configuration.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut cin = cfg.channels;
    for k in 0..cfg.blocks {
        let c = cfg.block_channels(k);
        specs.extend(conv(format!("enc.{k}.conv1"), c, cin, 3));
        specs.extend(conv(format!("enc.{k}.conv2"), c, c, 3));
        cin = c;
    }

    let (u, cz) = (cfg.lstm_hidden, cfg.bottleneck_channels());
    for dir in DIRECTIONS {
        for gate in GATES {
            specs.push(ParamSpec {
                name: format!("lstm.{dir}.w_h_{gate}"),
                shape: vec![u, u],
                init: Init::Glorot { fan_in: u, fan_out: u },
            });
            specs.push(ParamSpec {
                name: format!("lstm.{dir}.w_z_{gate}"),
                shape: vec![u, cz],
                init: Init::Glorot { fan_in: cz, fan_out: u },
            });
            specs.push(ParamSpec {
                name: format!("lstm.{dir}.b_{gate}"),
                shape: vec![u],
                init: Init::Constant(if gate == "f" { 1.0 } else { 0.0 }),
            });
        }
    }

    specs.extend(dense("attn.fc1".into(), cfg.attn_hidden, 2 * u));
    specs.extend(dense("attn.fc2".into(), 1, cfg.attn_hidden));

    specs.extend(conv("dec.proj".into(), cz, 2 * u, 1));
    let mut cur = cz;
    for k in (0..cfg.blocks).rev() {
        let c = cfg.block_channels(k);
        specs.push(ParamSpec {
            name: format!("dec.{k}.up.weight"),
            shape: vec![cur, c, 2, 2],
            init: Init::Glorot {
                fan_in: cur * 4,
                fan_out: c * 4,
            },
        });
        specs.push(ParamSpec {
            name: format!("dec.{k}.up.bias"),
            shape: vec![c],
            init: Init::Constant(0.0),
        });
        specs.extend(conv(format!("dec.{k}.conv1"), c, 2 * c, 3));
        specs.extend(conv(format!("dec.{k}.conv2"), c, c, 3));
        cur = c;
    }
    specs.extend(conv("cls".into(), cfg.classes, cfg.base_channels, 1));
    specs
}

pub fn param_count(cfg: &ModelConfig) -> usize {
    param_layout(cfg)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

/// Deterministic per seed. Values are drawn in `f64` and cast, so the `f32`
/// and `f64` initialisations agree up to rounding.
pub fn init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    for spec in param_layout(cfg) {
        let tensor = match spec.init {
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(&spec.shape, |_| T::of(rng.gen_range(-limit..limit)))
            }
            Init::Constant(c) => Tensor::full(&spec.shape, T::of(c)),
        };
        params.push(spec.name, tensor)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = ModelConfig::tiny();
        let a = init_params::<f32>(&cfg, 11).unwrap();
        let b = init_params::<f32>(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = init_params::<f32>(&cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn block_kernel_shapes_follow_doubling() {
        let cfg = ModelConfig {
            blocks: 3,
            base_channels: 32,
            channels: 10,
            ..ModelConfig::d1(6, 10, 4)
        };
        let layout = param_layout(&cfg);
        let shape = |name: &str| layout.iter().find(|s| s.name == name).unwrap().shape.clone();
        assert_eq!(shape("enc.0.conv1.weight"), vec![32, 10, 3, 3]);
        assert_eq!(shape("enc.0.conv2.weight"), vec![32, 32, 3, 3]);
        assert_eq!(shape("enc.1.conv1.weight"), vec![64, 32, 3, 3]);
        assert_eq!(shape("enc.2.conv2.weight"), vec![128, 128, 3, 3]);
        assert_eq!(shape("lstm.fwd.w_z_f"), vec![256, 128]);
        assert_eq!(shape("dec.proj.weight"), vec![128, 512, 1, 1]);
        assert_eq!(shape("dec.2.up.weight"), vec![128, 128, 2, 2]);
        assert_eq!(shape("dec.1.up.weight"), vec![128, 64, 2, 2]);
        assert_eq!(shape("dec.0.conv1.weight"), vec![32, 64, 3, 3]);
        assert_eq!(shape("cls.weight"), vec![4, 32, 1, 1]);
    }

    #[test]
    fn biases_zero_except_forget_gate() {
        let p = init_params::<f64>(&ModelConfig::tiny(), 3).unwrap();
        for (name, t) in p.iter() {
            if name.ends_with("b_f") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if name.ends_with("bias") || name.contains(".b_") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn weights_respect_glorot_limit() {
        let cfg = ModelConfig::tiny();
        let p = init_params::<f64>(&cfg, 5).unwrap();
        for spec in param_layout(&cfg) {
            if let Init::Glorot { fan_in, fan_out } = spec.init {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let t = p.get(&spec.name).unwrap();
                assert!(t.data().iter().all(|v| v.abs() <= limit), "{}", spec.name);
            }
        }
    }

    #[test]
    fn param_count_matches_arithmetic() {
        let cfg = ModelConfig::tiny();
        // T=4, C=2, K=2, base=4, U=8, A=8, L=3
        let enc = (4 * 2 * 9 + 4) + (4 * 4 * 9 + 4) + (8 * 4 * 9 + 8) + (8 * 8 * 9 + 8);
        let lstm = 2 * 4 * (8 * 8 + 8 * 8 + 8);
        let attn = (8 * 16 + 8) + (8 + 1);
        let proj = 8 * 16 + 8;
        let dec1 = (8 * 8 * 4 + 8) + (8 * 16 * 9 + 8) + (8 * 8 * 9 + 8);
        let dec0 = (8 * 4 * 4 + 4) + (4 * 8 * 9 + 4) + (4 * 4 * 9 + 4);
        let cls = 3 * 4 + 3;
        let expected = enc + lstm + attn + proj + dec1 + dec0 + cls;
        assert_eq!(param_count(&cfg), expected);
        assert_eq!(init_params::<f32>(&cfg, 0).unwrap().scalar_count(), expected);
    }
}
