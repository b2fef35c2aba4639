//! Graph builders for each stage of the network and the composed forward pass.
//!
//! Spatial maps are `[C, H, W]`. The recurrent stage works on "pixel rows":
//! the bottleneck map is transposed to `[P, C']` with `P = H' * W'` so one
//! batched affine applies the shared LSTM weights at every location.

use super::config::{AggregationMode, ModelConfig};
use super::init::GATES;
use crate::error::{Error, Result};
use crate::graph::{BranchTape, Graph, Padding, Var};
use crate::params::{ModelParams, ParamVars};
use crate::tensor::{Real, Tensor};

/// Label value excluded from the loss and from metrics.
pub const IGNORE_LABEL: u8 = 255;

/// Output of [`encoder_forward`] for one time step.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Pooled bottleneck map `[C', in/2^K, in/2^K]`.
    pub bottleneck: Var,
    /// Pre-pool output of every block, shallowest first.
    pub skips: Vec<Var>,
}

pub fn encoder_forward<T: Real>(g: &mut Graph<T>, pv: &ParamVars, cfg: &ModelConfig, x: Var) -> Result<EncoderOutput> {
    let s = g.shape(x).to_vec();
    if s != [cfg.channels, cfg.in_size, cfg.in_size] {
        return Err(Error::dim(
            "encoder_forward",
            format!(
                "input {s:?} must be [{}, {}, {}]",
                cfg.channels, cfg.in_size, cfg.in_size
            ),
        ));
    }
    let mut cur = x;
    let mut skips = Vec::with_capacity(cfg.blocks);
    for k in 0..cfg.blocks {
        cur = conv_relu(g, pv, &format!("enc.{k}.conv1"), cur)?;
        cur = conv_relu(g, pv, &format!("enc.{k}.conv2"), cur)?;
        skips.push(cur);
        cur = g.maxpool2d(cur)?;
    }
    Ok(EncoderOutput { bottleneck: cur, skips })
}

fn conv_relu<T: Real>(g: &mut Graph<T>, pv: &ParamVars, name: &str, x: Var) -> Result<Var> {
    let y = g.conv2d(
        x,
        pv.get(&format!("{name}.weight"))?,
        pv.get(&format!("{name}.bias"))?,
        Padding::Same,
    )?;
    g.relu(y)
}

/// Graph handles for one LSTM direction.
#[derive(Clone, Debug)]
pub struct LstmWeights {
    /// Per gate (F, I, O, G): recurrent weight `[U, U]`, input weight `[U, C']`, bias `[U]`.
    pub gates: [(Var, Var, Var); 4],
    /// Zero bias used for the recurrent product.
    pub zero: Var,
}

impl LstmWeights {
    pub fn lookup<T: Real>(g: &mut Graph<T>, pv: &ParamVars, direction: &str) -> Result<Self> {
        let mut gates = Vec::with_capacity(4);
        for gate in GATES {
            gates.push((
                pv.get(&format!("lstm.{direction}.w_h_{gate}"))?,
                pv.get(&format!("lstm.{direction}.w_z_{gate}"))?,
                pv.get(&format!("lstm.{direction}.b_{gate}"))?,
            ));
        }
        let u = g.shape(gates[0].0)[0];
        let zero = g.input(Tensor::zeros(&[u]))?;
        Ok(Self {
            gates: [gates[0], gates[1], gates[2], gates[3]],
            zero,
        })
    }

    pub fn hidden(&self, g: &Graph<impl Real>) -> usize {
        g.shape(self.gates[0].0)[0]
    }
}

/// One LSTM step on pixel rows: `h_prev`, `c_prev` are `[P, U]`, `z` is `[P, C']`.
///
/// F, I, O = σ(W_H h + W_Z z + b); G = tanh(...); c = F⊙c_prev + I⊙G; h = O⊙tanh(c).
pub fn lstm_cell<T: Real>(g: &mut Graph<T>, w: &LstmWeights, h_prev: Var, c_prev: Var, z: Var) -> Result<(Var, Var)> {
    let mut pre = Vec::with_capacity(4);
    for &(wh, wz, b) in &w.gates {
        let rec = g.affine(h_prev, wh, w.zero)?;
        let inp = g.affine(z, wz, b)?;
        pre.push(g.add(rec, inp)?);
    }
    let f = g.sigmoid(pre[0])?;
    let i = g.sigmoid(pre[1])?;
    let o = g.sigmoid(pre[2])?;
    let cand = g.tanh(pre[3])?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Bidirectional LSTM over a sequence of pixel-row inputs `[P, C']`.
///
/// Returns, per time step, `concat(forward h_t, backward h_t)` as `[P, 2U]`,
/// where the backward state at `t` has consumed steps `T-1 ..= t`.
pub fn bilstm_forward<T: Real>(
    g: &mut Graph<T>,
    fwd: &LstmWeights,
    bwd: &LstmWeights,
    z_rows: &[Var],
) -> Result<Vec<Var>> {
    let steps = z_rows.len();
    if steps < 2 {
        return Err(Error::Contract(format!("bilstm needs at least 2 time steps, got {steps}")));
    }
    let pixels = g.shape(z_rows[0])[0];
    let run = |g: &mut Graph<T>, w: &LstmWeights, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<Option<Var>>> {
        let u = w.hidden(g);
        let mut h = g.input(Tensor::zeros(&[pixels, u]))?;
        let mut c = g.input(Tensor::zeros(&[pixels, u]))?;
        let mut out = vec![None; steps];
        for t in order {
            (h, c) = lstm_cell(g, w, h, c, z_rows[t])?;
            out[t] = Some(h);
        }
        Ok(out)
    };
    let hf = run(g, fwd, &mut (0..steps))?;
    let hb = run(g, bwd, &mut (0..steps).rev())?;
    hf.into_iter()
        .zip(hb)
        .map(|(f, b)| g.concat(&[f.unwrap(), b.unwrap()], 1))
        .collect()
}

/// Softmax over time of the spatially averaged scorer output.
///
/// The scorer is `affine(2U -> A) -> tanh -> affine(A -> 1)` applied per pixel.
pub fn attention_weights<T: Real>(g: &mut Graph<T>, pv: &ParamVars, h_rows: &[Var]) -> Result<Var> {
    let (w1, b1) = (pv.get("attn.fc1.weight")?, pv.get("attn.fc1.bias")?);
    let (w2, b2) = (pv.get("attn.fc2.weight")?, pv.get("attn.fc2.bias")?);
    let mut scores = Vec::with_capacity(h_rows.len());
    for &h in h_rows {
        let a = g.affine(h, w1, b1)?;
        let a = g.tanh(a)?;
        let s = g.affine(a, w2, b2)?;
        scores.push(g.mean(s, &[0, 1])?);
    }
    let scores = g.concat(&scores, 0)?;
    g.softmax(scores, 0)
}

/// Stack equally shaped maps along a new leading axis.
pub fn stack<T: Real>(g: &mut Graph<T>, parts: &[Var]) -> Result<Var> {
    let mut lifted = Vec::with_capacity(parts.len());
    for &p in parts {
        let mut s = vec![1];
        s.extend_from_slice(g.shape(p));
        lifted.push(g.reshape(p, &s)?);
    }
    g.concat(&lifted, 0)
}

/// `Σ_t α_t · H^t` for a stacked `[T, ...]` sequence.
pub fn aggregate<T: Real>(g: &mut Graph<T>, seq: Var, alpha: Var) -> Result<Var> {
    g.weighted_sum(seq, alpha)
}

/// Applies the same temporal weights to every encoder level: `S_k = Σ_t α_t · Z^k_t`.
/// `skips[k]` is the stacked `[T, c_k, r_k, r_k]` sequence of block `k`.
pub fn aggregate_skips<T: Real>(g: &mut Graph<T>, skips: &[Var], alpha: Var) -> Result<Vec<Var>> {
    skips.iter().map(|&s| g.weighted_sum(s, alpha)).collect()
}

/// Bottleneck projection, upsampling path with skip fusion, classifier and
/// centre crop. `context` is `[2U, r, r]`; `skip_context[k]` matches block `k`.
pub fn decoder_forward<T: Real>(
    g: &mut Graph<T>,
    pv: &ParamVars,
    cfg: &ModelConfig,
    context: Var,
    skip_context: &[Var],
) -> Result<Var> {
    if skip_context.len() != cfg.blocks {
        return Err(Error::dim(
            "decoder_forward",
            format!("{} skip maps for {} blocks", skip_context.len(), cfg.blocks),
        ));
    }
    let mut cur = g.conv2d(
        context,
        pv.get("dec.proj.weight")?,
        pv.get("dec.proj.bias")?,
        Padding::Same,
    )?;
    for k in (0..cfg.blocks).rev() {
        let up = g.transposed_conv2d(
            cur,
            pv.get(&format!("dec.{k}.up.weight"))?,
            Some(pv.get(&format!("dec.{k}.up.bias"))?),
            2,
        )?;
        let (us, ss) = (g.shape(up), g.shape(skip_context[k]));
        if us[1..] != ss[1..] {
            return Err(Error::dim(
                "decoder_forward",
                format!("level {k}: upsampled {us:?} vs skip {ss:?} on spatial axes 1,2"),
            ));
        }
        let fused = g.concat(&[up, skip_context[k]], 0)?;
        cur = conv_relu(g, pv, &format!("dec.{k}.conv1"), fused)?;
        cur = conv_relu(g, pv, &format!("dec.{k}.conv2"), cur)?;
    }
    let logits = g.conv2d(cur, pv.get("cls.weight")?, pv.get("cls.bias")?, Padding::Same)?;
    if cfg.out_size == cfg.in_size {
        return Ok(logits);
    }
    let off = cfg.crop_offset();
    let rows = g.slice(logits, 1, off, cfg.out_size)?;
    g.slice(rows, 2, off, cfg.out_size)
}

/// Handles to every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub alpha: Var,
    /// `[T, 2U, r, r]`.
    pub hidden: Var,
    /// `[T, c_k, r_k, r_k]` per block.
    pub skips: Vec<Var>,
    pub context: Var,
    pub skip_context: Vec<Var>,
    /// `[L, out, out]`.
    pub logits: Var,
    pub probs: Var,
}

/// Builds the full network on `g` for an input series `x` of shape `[T, C, in, in]`.
pub fn build_forward<T: Real>(g: &mut Graph<T>, pv: &ParamVars, cfg: &ModelConfig, x: &Tensor<T>) -> Result<ForwardVars> {
    build_forward_with(g, pv, cfg, x, None)
}

/// As [`build_forward`], optionally overriding the temporal weights (used to
/// probe aggregation with a fixed `α`).
pub fn build_forward_with<T: Real>(
    g: &mut Graph<T>,
    pv: &ParamVars,
    cfg: &ModelConfig,
    x: &Tensor<T>,
    alpha_override: Option<&Tensor<T>>,
) -> Result<ForwardVars> {
    let want = [cfg.time_steps, cfg.channels, cfg.in_size, cfg.in_size];
    if x.shape() != want {
        return Err(Error::dim(
            "statt_forward",
            format!("input {:?} must be {want:?}", x.shape()),
        ));
    }
    let steps = cfg.time_steps;
    let r = cfg.bottleneck_size();
    let cz = cfg.bottleneck_channels();
    let pixels = r * r;

    let mut z_rows = Vec::with_capacity(steps);
    let mut block_skips: Vec<Vec<Var>> = vec![Vec::with_capacity(steps); cfg.blocks];
    for t in 0..steps {
        let xt = g.input(x.outer(t)?)?;
        let enc = encoder_forward(g, pv, cfg, xt)?;
        for (k, s) in enc.skips.into_iter().enumerate() {
            block_skips[k].push(s);
        }
        let flat = g.reshape(enc.bottleneck, &[cz, pixels])?;
        z_rows.push(g.transpose(flat)?);
    }

    let fwd = LstmWeights::lookup(g, pv, "fwd")?;
    let bwd = LstmWeights::lookup(g, pv, "bwd")?;
    let h_rows = bilstm_forward(g, &fwd, &bwd, &z_rows)?;

    let alpha = match (alpha_override, cfg.mode) {
        (Some(a), _) => {
            if a.shape() != [steps] {
                return Err(Error::dim("statt_forward", format!("alpha {:?} must be [{steps}]", a.shape())));
            }
            g.input(a.clone())?
        }
        (None, AggregationMode::Attention) => attention_weights(g, pv, &h_rows)?,
        (None, AggregationMode::Mean) => g.input(Tensor::full(&[steps], T::one() / T::of(steps as f64)))?,
    };

    let two_u = 2 * cfg.lstm_hidden;
    let mut maps = Vec::with_capacity(steps);
    for &h in &h_rows {
        let cols = g.transpose(h)?;
        maps.push(g.reshape(cols, &[two_u, r, r])?);
    }
    let hidden = stack(g, &maps)?;
    let skips = block_skips
        .iter()
        .map(|seq| stack(g, seq))
        .collect::<Result<Vec<_>>>()?;

    let context = aggregate(g, hidden, alpha)?;
    let skip_context = aggregate_skips(g, &skips, alpha)?;
    let logits = decoder_forward(g, pv, cfg, context, &skip_context)?;
    let probs = g.softmax(logits, 0)?;
    Ok(ForwardVars {
        alpha,
        hidden,
        skips,
        context,
        skip_context,
        logits,
        probs,
    })
}

/// Materialised intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub alpha: Tensor<T>,
    pub hidden: Tensor<T>,
    pub skips: Vec<Tensor<T>>,
    pub context: Tensor<T>,
    pub skip_context: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

impl<T: Real> ForwardTrace<T> {
    fn collect(g: &Graph<T>, v: &ForwardVars) -> Self {
        Self {
            alpha: g.value(v.alpha).clone(),
            hidden: g.value(v.hidden).clone(),
            skips: v.skips.iter().map(|&s| g.value(s).clone()).collect(),
            context: g.value(v.context).clone(),
            skip_context: v.skip_context.iter().map(|&s| g.value(s).clone()).collect(),
            logits: g.value(v.logits).clone(),
            probs: g.value(v.probs).clone(),
        }
    }
}

pub fn statt_forward<T: Real>(x: &Tensor<T>, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<ForwardTrace<T>> {
    statt_forward_with(x, params, cfg, None)
}

pub fn statt_forward_with<T: Real>(
    x: &Tensor<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    alpha_override: Option<&Tensor<T>>,
) -> Result<ForwardTrace<T>> {
    cfg.validate()?;
    if !x.all_finite() {
        return Err(Error::NonFinite("model input".into()));
    }
    let mut g = Graph::new();
    let pv = params.register(&mut g)?;
    let vars = build_forward_with(&mut g, &pv, cfg, x, alpha_override)?;
    Ok(ForwardTrace::collect(&g, &vars))
}

/// Mean pixel-wise cross entropy over every non-ignored pixel of the batch.
pub fn cross_entropy_loss<T: Real>(g: &mut Graph<T>, probs: &[Var], labels: &[&[u8]]) -> Result<Var> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Contract(format!(
            "{} probability maps for {} label maps",
            probs.len(),
            labels.len()
        )));
    }
    let valid: usize = labels
        .iter()
        .map(|l| l.iter().filter(|&&v| v != IGNORE_LABEL).count())
        .sum();
    if valid == 0 {
        return Err(Error::Contract("every pixel in the batch is ignored; loss is empty".into()));
    }
    let mut terms = Vec::with_capacity(probs.len());
    for (&p, l) in probs.iter().zip(labels) {
        terms.push(g.nll(p, l, IGNORE_LABEL)?);
    }
    let total = if terms.len() == 1 {
        terms[0]
    } else {
        let stacked = g.concat(&terms, 0)?;
        g.sum(stacked)?
    };
    g.scale(total, 1.0 / valid as f64)
}

/// Summed per-pixel loss of one patch plus its parameter gradients, with the
/// loss scaled by `scale` before differentiation.
pub fn patch_loss_grad<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    x: &Tensor<T>,
    labels: &[u8],
    scale: f64,
) -> Result<(f64, ModelParams<T>)> {
    let mut g = Graph::new();
    let pv = params.register(&mut g)?;
    let vars = build_forward(&mut g, &pv, cfg, x)?;
    let nll = g.nll(vars.probs, labels, IGNORE_LABEL)?;
    let root = g.scale(nll, scale)?;
    let loss = g.value(nll).item().as_f64();
    let grads = g.backward(root)?;
    Ok((loss, params.collect_grads(&grads, &pv)))
}

/// Mean loss of a set of patches and its gradient, built on a single graph.
pub fn batch_loss_grad<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[(&Tensor<T>, &[u8])],
    fault: bool,
) -> Result<(f64, ModelParams<T>)> {
    let mut g = Graph::new();
    if fault {
        g.inject_backward_fault();
    }
    let pv = params.register(&mut g)?;
    let mut probs = Vec::with_capacity(batch.len());
    for (x, _) in batch {
        probs.push(build_forward(&mut g, &pv, cfg, x)?.probs);
    }
    let labels: Vec<&[u8]> = batch.iter().map(|(_, l)| *l).collect();
    let loss = cross_entropy_loss(&mut g, &probs, &labels)?;
    let value = g.value(loss).item().as_f64();
    let grads = g.backward(loss)?;
    Ok((value, params.collect_grads(&grads, &pv)))
}

fn batch_loss_on<T: Real>(
    g: &mut Graph<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[(&Tensor<T>, &[u8])],
) -> Result<f64> {
    let pv = params.register(g)?;
    let mut probs = Vec::with_capacity(batch.len());
    for (x, _) in batch {
        probs.push(build_forward(g, &pv, cfg, x)?.probs);
    }
    let labels: Vec<&[u8]> = batch.iter().map(|(_, l)| *l).collect();
    let loss = cross_entropy_loss(g, &probs, &labels)?;
    Ok(g.value(loss).item().as_f64())
}

/// Forward-only mean loss; counterpart of [`batch_loss_grad`] for finite differences.
pub fn batch_loss<T: Real>(params: &ModelParams<T>, cfg: &ModelConfig, batch: &[(&Tensor<T>, &[u8])]) -> Result<f64> {
    batch_loss_on(&mut Graph::new(), params, cfg, batch)
}

/// [`batch_loss`] that also returns the ReLU/max-pool decisions it made.
pub fn batch_loss_recording<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[(&Tensor<T>, &[u8])],
) -> Result<(f64, BranchTape)> {
    let mut g = Graph::new();
    g.record_branches();
    let loss = batch_loss_on(&mut g, params, cfg, batch)?;
    Ok((loss, g.take_branches().unwrap_or_default()))
}

/// [`batch_loss`] evaluated on the smooth piece selected by `tape`.
pub fn batch_loss_replaying<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[(&Tensor<T>, &[u8])],
    tape: &BranchTape,
) -> Result<f64> {
    let mut g = Graph::new();
    g.replay_branches(tape.clone());
    batch_loss_on(&mut g, params, cfg, batch)
}
