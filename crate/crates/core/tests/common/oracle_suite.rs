use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statt::model::{
    aggregate, aggregate_skips, attention_weights, bilstm_forward, cross_entropy_loss, lstm_cell, LstmWeights,
    IGNORE_LABEL,
};
use statt::{Graph, ModelParams, Padding, Real, Tensor};
use statt_oracles as oracle;

const INSTANCES: usize = 200;

pub type Outcome = Result<(), String>;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Values as stored in precision `T`, widened back to f64 for the oracle.
fn rounded<T: Real>(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| T::of(x).as_f64()).collect()
}

fn tensor<T: Real>(shape: &[usize], v: &[f64]) -> Tensor<T> {
    Tensor::new(shape.to_vec(), v.iter().map(|&x| T::of(x)).collect()).unwrap()
}

fn assert_close<T: Real>(op: &str, case: usize, got: &Tensor<T>, want: &[f64], tol: f64) -> Outcome {
    if got.len() != want.len() {
        return Err(format!("{op} case {case}: length {} vs oracle {}", got.len(), want.len()));
    }
    for (i, (&g, &w)) in got.data().iter().zip(want).enumerate() {
        let err = (g.as_f64() - w).abs();
        if err > tol * w.abs().max(1.0) {
            return Err(format!(
                "{op} case {case} [{}] element {i}: {} vs oracle {w} (err {err:e})",
                T::DTYPE,
                g.as_f64()
            ));
        }
    }
    Ok(())
}

fn conv2d<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..INSTANCES {
        let (cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let same = rng.gen_bool(0.5);
        let (h, w) = (rng.gen_range(k..k + 6), rng.gen_range(k..k + 6));
        let x = rounded::<T>(&uniform(&mut rng, cin * h * w));
        let kern = rounded::<T>(&uniform(&mut rng, cout * cin * k * k));
        let b = rounded::<T>(&uniform(&mut rng, cout));
        let mut g = Graph::<T>::new();
        let xv = g.input(tensor(&[cin, h, w], &x)).unwrap();
        let kv = g.input(tensor(&[cout, cin, k, k], &kern)).unwrap();
        let bv = g.input(tensor(&[cout], &b)).unwrap();
        let pad = if same { Padding::Same } else { Padding::Valid };
        let y = g.conv2d(xv, kv, bv, pad).unwrap();
        let want = oracle::conv2d(&x, cin, h, w, &kern, cout, k, &b, if same { k / 2 } else { 0 });
        assert_close("conv2d", case, g.value(y), &want, tol)?;
    }
    Ok(())
}

fn transposed_conv2d<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..INSTANCES {
        let (cin, cout, h, w) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..6));
        let x = rounded::<T>(&uniform(&mut rng, cin * h * w));
        let kern = rounded::<T>(&uniform(&mut rng, cin * cout * 4));
        let b = rounded::<T>(&uniform(&mut rng, cout));
        let with_bias = rng.gen_bool(0.5);
        let mut g = Graph::<T>::new();
        let xv = g.input(tensor(&[cin, h, w], &x)).unwrap();
        let kv = g.input(tensor(&[cin, cout, 2, 2], &kern)).unwrap();
        let bv = with_bias.then(|| g.input(tensor(&[cout], &b)).unwrap());
        let y = g.transposed_conv2d(xv, kv, bv, 2).unwrap();
        let want = oracle::conv_transpose2(&x, cin, h, w, &kern, cout, with_bias.then_some(b.as_slice()));
        assert_close("transposed_conv2d", case, g.value(y), &want, tol)?;
    }
    Ok(())
}

fn maxpool2d<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..INSTANCES {
        let (c, h, w) = (rng.gen_range(1..4), 2 * rng.gen_range(1..5), 2 * rng.gen_range(1..5));
        // Coarse values so ties actually occur.
        let x: Vec<f64> = (0..c * h * w).map(|_| f64::from(rng.gen_range(-3..4)) * 0.5).collect();
        let mut g = Graph::<T>::new();
        let xv = g.input(tensor(&[c, h, w], &x)).unwrap();
        let y = g.maxpool2d(xv).unwrap();
        let (want, idx) = oracle::maxpool2(&x, c, h, w);
        assert_close("maxpool2d", case, g.value(y), &want, tol)?;
        // The gradient lands on the oracle's winning cell.
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        let dx = grads.wrt(xv).unwrap();
        let mut expect = vec![0.0; x.len()];
        for i in idx {
            expect[i] += 1.0;
        }
        assert_close("maxpool2d grad", case, dx, &expect, 0.0)?;
    }
    Ok(())
}

fn affine<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..INSTANCES {
        let (rows, n, m) = (rng.gen_range(1..6), rng.gen_range(1..8), rng.gen_range(1..8));
        let lead = rng.gen_range(1..3);
        let x = rounded::<T>(&uniform(&mut rng, lead * rows * n));
        let wt = rounded::<T>(&uniform(&mut rng, m * n));
        let b = rounded::<T>(&uniform(&mut rng, m));
        let mut g = Graph::<T>::new();
        let xv = g.input(tensor(&[lead, rows, n], &x)).unwrap();
        let wv = g.input(tensor(&[m, n], &wt)).unwrap();
        let bv = g.input(tensor(&[m], &b)).unwrap();
        let y = g.affine(xv, wv, bv).unwrap();
        if g.shape(y) != [lead, rows, m] {
            return Err(format!("affine case {case}: shape {:?}", g.shape(y)));
        }
        let want = oracle::affine(&x, lead * rows, n, &wt, m, &b);
        assert_close("affine", case, g.value(y), &want, tol)?;
    }
    Ok(())
}

fn softmax<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..INSTANCES {
        let rank = rng.gen_range(1..4);
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..5)).collect();
        let axis = rng.gen_range(0..rank);
        let n: usize = shape.iter().product();
        // Occasionally large logits to exercise the max shift.
        let scale = if rng.gen_bool(0.2) { 50.0 } else { 3.0 };
        let x: Vec<f64> = rounded::<T>(&uniform(&mut rng, n).iter().map(|v| v * scale).collect::<Vec<_>>());
        let mut g = Graph::<T>::new();
        let xv = g.input(tensor(&shape, &x)).unwrap();
        let y = g.softmax(xv, axis).unwrap();
        assert_close("softmax", case, g.value(y), &oracle::softmax(&x, &shape, axis), tol)?;
    }
    Ok(())
}

struct LstmSetup {
    params: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl LstmSetup {
    fn random<T: Real>(rng: &mut ChaCha8Rng, dirs: &[&str], u: usize, cz: usize) -> Self {
        let mut params = Vec::new();
        for dir in dirs {
            for gate in ["f", "i", "o", "g"] {
                params.push((format!("lstm.{dir}.w_h_{gate}"), vec![u, u], rounded::<T>(&uniform(rng, u * u))));
                params.push((format!("lstm.{dir}.w_z_{gate}"), vec![u, cz], rounded::<T>(&uniform(rng, u * cz))));
                params.push((format!("lstm.{dir}.b_{gate}"), vec![u], rounded::<T>(&uniform(rng, u))));
            }
        }
        Self { params }
    }

    fn model_params<T: Real>(&self) -> ModelParams<T> {
        let mut p = ModelParams::new();
        for (name, shape, v) in &self.params {
            p.push(name.clone(), tensor(shape, v)).unwrap();
        }
        p
    }

    fn get(&self, name: &str) -> &[f64] {
        &self.params.iter().find(|(n, _, _)| n == name).unwrap().2
    }

    fn gates(&self, dir: &str) -> oracle::LstmGates<'_> {
        let pick = |kind: &str| -> [&[f64]; 4] {
            ["f", "i", "o", "g"].map(|gate| self.get(&format!("lstm.{dir}.{kind}{gate}")))
        };
        oracle::LstmGates {
            w_h: pick("w_h_"),
            w_z: pick("w_z_"),
            b: pick("b_"),
        }
    }
}

fn lstm<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..INSTANCES {
        let (pixels, u, cz) = (rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..6));
        let setup = LstmSetup::random::<T>(&mut rng, &["fwd"], u, cz);
        let h = rounded::<T>(&uniform(&mut rng, pixels * u));
        let c = rounded::<T>(&uniform(&mut rng, pixels * u));
        let z = rounded::<T>(&uniform(&mut rng, pixels * cz));
        let mut g = Graph::<T>::new();
        let pv = setup.model_params::<T>().register(&mut g).unwrap();
        let w = LstmWeights::lookup(&mut g, &pv, "fwd").unwrap();
        let hv = g.input(tensor(&[pixels, u], &h)).unwrap();
        let cv = g.input(tensor(&[pixels, u], &c)).unwrap();
        let zv = g.input(tensor(&[pixels, cz], &z)).unwrap();
        let (h1, c1) = lstm_cell(&mut g, &w, hv, cv, zv).unwrap();
        let (wh, wc) = oracle::lstm_cell(&h, &c, &z, pixels, u, cz, &setup.gates("fwd"));
        assert_close("lstm_cell h", case, g.value(h1), &wh, tol)?;
        assert_close("lstm_cell c", case, g.value(c1), &wc, tol)?;
    }
    Ok(())
}

fn bilstm<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..INSTANCES {
        let (steps, pixels, u, cz) = (rng.gen_range(2..6), rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
        let setup = LstmSetup::random::<T>(&mut rng, &["fwd", "bwd"], u, cz);
        let z: Vec<Vec<f64>> = (0..steps).map(|_| rounded::<T>(&uniform(&mut rng, pixels * cz))).collect();
        let mut g = Graph::<T>::new();
        let pv = setup.model_params::<T>().register(&mut g).unwrap();
        let fw = LstmWeights::lookup(&mut g, &pv, "fwd").unwrap();
        let bw = LstmWeights::lookup(&mut g, &pv, "bwd").unwrap();
        let zv: Vec<_> = z.iter().map(|zt| g.input(tensor(&[pixels, cz], zt)).unwrap()).collect();
        let out = bilstm_forward(&mut g, &fw, &bw, &zv).unwrap();
        let want = oracle::bilstm(&z, pixels, u, cz, &setup.gates("fwd"), &setup.gates("bwd"));
        for (t, (&o, w)) in out.iter().zip(&want).enumerate() {
            assert_close(&format!("bilstm t={t}"), case, g.value(o), w, tol)?;
        }
    }
    Ok(())
}

fn attention<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..INSTANCES {
        let (steps, pixels, d, a) = (rng.gen_range(2..7), rng.gen_range(1..6), rng.gen_range(1..7), rng.gen_range(1..6));
        let h: Vec<Vec<f64>> = (0..steps).map(|_| rounded::<T>(&uniform(&mut rng, pixels * d))).collect();
        let w1 = rounded::<T>(&uniform(&mut rng, a * d));
        let b1 = rounded::<T>(&uniform(&mut rng, a));
        let w2 = rounded::<T>(&uniform(&mut rng, a).iter().map(|v| v * 3.0).collect::<Vec<_>>());
        let b2 = rounded::<T>(&uniform(&mut rng, 1));
        let mut p = ModelParams::<T>::new();
        p.push("attn.fc1.weight", tensor(&[a, d], &w1)).unwrap();
        p.push("attn.fc1.bias", tensor(&[a], &b1)).unwrap();
        p.push("attn.fc2.weight", tensor(&[1, a], &w2)).unwrap();
        p.push("attn.fc2.bias", tensor(&[1], &b2)).unwrap();
        let mut g = Graph::<T>::new();
        let pv = p.register(&mut g).unwrap();
        let hv: Vec<_> = h.iter().map(|ht| g.input(tensor(&[pixels, d], ht)).unwrap()).collect();
        let alpha = attention_weights(&mut g, &pv, &hv).unwrap();
        let want = oracle::attention_weights(&h, pixels, d, &w1, &b1, a, &w2, b2[0]);
        assert_close("attention_weights", case, g.value(alpha), &want, tol)?;
    }
    Ok(())
}

fn aggregation<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..INSTANCES {
        let steps = rng.gen_range(2..7);
        let raw = uniform(&mut rng, steps);
        let alpha = rounded::<T>(&oracle::softmax(&raw, &[steps], 0));
        let mut g = Graph::<T>::new();
        let av = g.input(tensor(&[steps], &alpha)).unwrap();

        // Context: [T, D, r, r].
        let (d, r) = (rng.gen_range(1..5), rng.gen_range(1..4));
        let seq: Vec<Vec<f64>> = (0..steps).map(|_| rounded::<T>(&uniform(&mut rng, d * r * r))).collect();
        let flat: Vec<f64> = seq.concat();
        let sv = g.input(tensor(&[steps, d, r, r], &flat)).unwrap();
        let ctx = aggregate(&mut g, sv, av).unwrap();
        if g.shape(ctx) != [d, r, r] {
            return Err(format!("aggregate case {case}: shape {:?}", g.shape(ctx)));
        }
        assert_close("aggregate", case, g.value(ctx), &oracle::aggregate(&seq, &alpha), tol)?;

        // Skips: one stacked sequence per level, all with the same weights.
        let levels = rng.gen_range(1..4);
        let mut skips = Vec::new();
        let mut want = Vec::new();
        for k in 0..levels {
            let (c, s) = (rng.gen_range(1..4), 2usize.pow(k as u32 + 1));
            let z: Vec<Vec<f64>> = (0..steps).map(|_| rounded::<T>(&uniform(&mut rng, c * s * s))).collect();
            skips.push(g.input(tensor(&[steps, c, s, s], &z.concat())).unwrap());
            want.push(oracle::aggregate(&z, &alpha));
        }
        let out = aggregate_skips(&mut g, &skips, av).unwrap();
        for (k, (&o, w)) in out.iter().zip(&want).enumerate() {
            assert_close(&format!("aggregate_skips level {k}"), case, g.value(o), w, tol)?;
        }
    }
    Ok(())
}

fn cross_entropy<T: Real>(tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..INSTANCES {
        let (maps, classes, pixels) = (rng.gen_range(1..4), rng.gen_range(2..5), rng.gen_range(1..10));
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..maps {
            let logits: Vec<f64> = uniform(&mut rng, classes * pixels).iter().map(|v| v * 4.0).collect();
            probs.push(rounded::<T>(&oracle::softmax(&logits, &[classes, pixels], 0)));
            labels.push(
                (0..pixels)
                    .map(|_| if rng.gen_bool(0.2) { IGNORE_LABEL } else { rng.gen_range(0..classes) as u8 })
                    .collect::<Vec<u8>>(),
            );
        }
        // Force at least one labeled pixel.
        labels[0][0] = 0;
        let mut g = Graph::<T>::new();
        let pv: Vec<_> = probs.iter().map(|p| g.input(tensor(&[classes, pixels], p)).unwrap()).collect();
        let lrefs: Vec<&[u8]> = labels.iter().map(Vec::as_slice).collect();
        let loss = cross_entropy_loss(&mut g, &pv, &lrefs).unwrap();
        let want = oracle::cross_entropy(&probs, &labels, classes, IGNORE_LABEL, 1e-12).unwrap();
        assert_close("cross_entropy_loss", case, g.value(loss), &[want], tol)?;
    }
    Ok(())
}

pub fn all_ops<T: Real>(tol: f64) -> Outcome {
    conv2d::<T>(tol)?;
    transposed_conv2d::<T>(tol)?;
    maxpool2d::<T>(tol)?;
    affine::<T>(tol)?;
    softmax::<T>(tol)?;
    lstm::<T>(tol)?;
    bilstm::<T>(tol)?;
    attention::<T>(tol)?;
    aggregation::<T>(tol)?;
    cross_entropy::<T>(tol)
}
