//! Dense feed-forward network with a shared backbone and two heads (action
//! logits and state value), hand-written reverse-mode gradients, and an
//! adaptive-moment optimizer.
//!
//! All arithmetic is 64-bit. The topology is fixed: rectified hidden layers,
//! affine heads. Gradients are computed for the scalar
//! `d_logits . logits + d_value * value`, which lets callers compose
//! arbitrary differentiable losses of the two outputs by supplying the
//! upstream signals.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};

/// Network shape: input width, hidden widths, and number of actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub action_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, action_dim: usize) -> Result<Self> {
        if input_dim == 0 || action_dim == 0 {
            return Err(Error::usage("input_dim and action_dim must be positive"));
        }
        if hidden_widths.is_empty() || hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::usage(
                "hidden widths must be a non-empty list of positive integers",
            ));
        }
        Ok(Architecture {
            input_dim,
            hidden_widths,
            action_dim,
        })
    }

    /// Total number of scalar parameters (backbone + both heads).
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut prev = self.input_dim;
        for &w in &self.hidden_widths {
            count += w * prev + w;
            prev = w;
        }
        count += self.action_dim * prev + self.action_dim; // policy head
        count += prev + 1; // value head
        count
    }

    /// Width list rendered as a stable label, e.g. `64-64`.
    pub fn label(&self) -> String {
        self.hidden_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// One affine block: `out = w * x + b`, with `w` stored row-major
/// (`w[o * in_dim + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Dense {
        Dense {
            in_dim,
            out_dim,
            w: vec![0.0; out_dim * in_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }
}

/// All weights and biases: backbone layers plus the two heads.
///
/// The same structure doubles as the gradient and moment container; see
/// [`Gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub backbone: Vec<Dense>,
    pub policy: Dense,
    pub value: Dense,
}

/// Shape-for-shape mirror of [`NetworkParams`].
pub type Gradients = NetworkParams;

impl NetworkParams {
    /// Zero-valued parameters of the given shape.
    pub fn zeros(arch: &Architecture) -> NetworkParams {
        let mut backbone = Vec::with_capacity(arch.hidden_widths.len());
        let mut prev = arch.input_dim;
        for &w in &arch.hidden_widths {
            backbone.push(Dense::zeros(prev, w));
            prev = w;
        }
        NetworkParams {
            backbone,
            policy: Dense::zeros(prev, arch.action_dim),
            value: Dense::zeros(prev, 1),
        }
    }

    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            backbone: self
                .backbone
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
            policy: Dense::zeros(self.policy.in_dim, self.policy.out_dim),
            value: Dense::zeros(self.value.in_dim, self.value.out_dim),
        }
    }

    /// Shape recovered from the stored blocks.
    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.backbone[0].in_dim,
            hidden_widths: self.backbone.iter().map(|l| l.out_dim).collect(),
            action_dim: self.policy.out_dim,
        }
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.backbone.len() == other.backbone.len()
            && self
                .backbone
                .iter()
                .zip(&other.backbone)
                .all(|(a, b)| a.same_shape(b))
            && self.policy.same_shape(&other.policy)
            && self.value.same_shape(&other.value)
    }

    pub fn param_count(&self) -> usize {
        self.blocks().map(|(_, d)| d.w.len() + d.b.len()).sum()
    }

    /// Named parameter blocks, backbone first, then the heads.
    pub fn blocks(&self) -> impl Iterator<Item = (String, &Dense)> {
        self.backbone
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("backbone{i}"), l))
            .chain([
                ("policy".to_string(), &self.policy),
                ("value".to_string(), &self.value),
            ])
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.backbone
            .iter_mut()
            .chain([&mut self.policy, &mut self.value])
    }

    /// Flat view of every parameter, in checkpoint order (per block: weights
    /// row-major, then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, d) in self.blocks() {
            out.extend_from_slice(&d.w);
            out.extend_from_slice(&d.b);
        }
        out
    }

    /// Inverse of [`NetworkParams::flatten`].
    pub fn fill_from_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::usage(format!(
                "expected {} values, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for d in self.blocks_mut() {
            let nw = d.w.len();
            d.w.copy_from_slice(&values[offset..offset + nw]);
            offset += nw;
            let nb = d.b.len();
            d.b.copy_from_slice(&values[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.blocks()
            .all(|(_, d)| d.w.iter().chain(&d.b).all(|x| x.is_finite()))
    }
}

/// Initializes a network: backbone weights uniform in +-sqrt(6/fan_in)
/// (rectifier-appropriate), backbone biases zero, and both heads exactly
/// zero, so the initial policy is exactly uniform and the initial value 0.
pub fn init_params<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> NetworkParams {
    let mut params = NetworkParams::zeros(arch);
    for layer in &mut params.backbone {
        let bound = (6.0 / layer.in_dim as f64).sqrt();
        let dist = Uniform::new(-bound, bound);
        for w in &mut layer.w {
            *w = dist.sample(rng);
        }
    }
    params
}

/// Cached intermediates of one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: Vec<f64>,
    /// Pre-activations per hidden layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// Rectified activations per hidden layer.
    pub activations: Vec<Vec<f64>>,
    pub policy_logits: Vec<f64>,
    pub value: f64,
}

/// Runs the network on one input vector, caching every intermediate needed
/// by [`backward`].
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<ForwardPass> {
    if input.len() != params.backbone[0].in_dim {
        return Err(Error::usage(format!(
            "input length {} does not match input_dim {}",
            input.len(),
            params.backbone[0].in_dim
        )));
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite network input"));
    }
    let mut pre_activations = Vec::with_capacity(params.backbone.len());
    let mut activations = Vec::with_capacity(params.backbone.len());
    let mut current = input.to_vec();
    for layer in &params.backbone {
        let mut z = Vec::new();
        layer.apply(&current, &mut z);
        let a: Vec<f64> = z.iter().map(|&x| x.max(0.0)).collect();
        pre_activations.push(z);
        current = a.clone();
        activations.push(a);
    }
    let mut policy_logits = Vec::new();
    params.policy.apply(&current, &mut policy_logits);
    let mut value_out = Vec::new();
    params.value.apply(&current, &mut value_out);
    let value = value_out[0];
    if !value.is_finite() || policy_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite network output"));
    }
    Ok(ForwardPass {
        input: input.to_vec(),
        pre_activations,
        activations,
        policy_logits,
        value,
    })
}

/// Numerically stable softmax: subtracts the max logit before
/// exponentiating. Output sums to 1 and every component is positive for
/// finite input.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Gradients of `d_logits . logits + d_value * value` with respect to every
/// parameter, accumulated into `grads` (callers zero it first for a plain
/// gradient; repeated calls sum, which is what the per-episode loss needs).
pub fn backward_into(
    pass: &ForwardPass,
    params: &NetworkParams,
    d_logits: &[f64],
    d_value: f64,
    grads: &mut Gradients,
) -> Result<()> {
    if d_logits.len() != params.policy.out_dim {
        return Err(Error::usage(format!(
            "d_logits length {} does not match action_dim {}",
            d_logits.len(),
            params.policy.out_dim
        )));
    }
    if !params.same_shape(grads) {
        return Err(Error::usage("gradient buffer shape mismatch"));
    }
    let last = params.backbone.len() - 1;
    let h_last = &pass.activations[last];

    // Heads.
    let mut d_hidden = vec![0.0; h_last.len()];
    for o in 0..params.policy.out_dim {
        let up = d_logits[o];
        grads.policy.b[o] += up;
        let row = &params.policy.w[o * h_last.len()..(o + 1) * h_last.len()];
        let grow = &mut grads.policy.w[o * h_last.len()..(o + 1) * h_last.len()];
        for i in 0..h_last.len() {
            grow[i] += up * h_last[i];
            d_hidden[i] += up * row[i];
        }
    }
    grads.value.b[0] += d_value;
    for i in 0..h_last.len() {
        grads.value.w[i] += d_value * h_last[i];
        d_hidden[i] += d_value * params.value.w[i];
    }

    // Backbone, last layer to first.
    for l in (0..=last).rev() {
        let layer = &params.backbone[l];
        let z = &pass.pre_activations[l];
        let below: &[f64] = if l == 0 {
            &pass.input
        } else {
            &pass.activations[l - 1]
        };
        let mut d_below = vec![0.0; layer.in_dim];
        let glayer = &mut grads.backbone[l];
        for o in 0..layer.out_dim {
            if z[o] <= 0.0 {
                continue; // rectifier gate closed
            }
            let dz = d_hidden[o];
            glayer.b[o] += dz;
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            let grow = &mut glayer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for i in 0..layer.in_dim {
                grow[i] += dz * below[i];
                d_below[i] += dz * row[i];
            }
        }
        d_hidden = d_below;
    }
    Ok(())
}

/// Allocating wrapper around [`backward_into`].
pub fn backward(
    pass: &ForwardPass,
    params: &NetworkParams,
    d_logits: &[f64],
    d_value: f64,
) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    backward_into(pass, params, d_logits, d_value, &mut grads)?;
    Ok(grads)
}

/// Adaptive-moment hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(arch: &Architecture, config: AdamConfig) -> OptimizerState {
        OptimizerState {
            m: NetworkParams::zeros(arch),
            v: NetworkParams::zeros(arch),
            step: 0,
            config,
        }
    }
}

/// One scalar adaptive-moment update. `step` is the post-increment counter
/// (>= 1). Returns the new (param, m, v).
pub fn adam_update(
    param: f64,
    grad: f64,
    m: f64,
    v: f64,
    step: u64,
    config: &AdamConfig,
) -> (f64, f64, f64) {
    let m = config.beta1 * m + (1.0 - config.beta1) * grad;
    let v = config.beta2 * v + (1.0 - config.beta2) * grad * grad;
    let m_hat = m / (1.0 - config.beta1.powi(step as i32));
    let v_hat = v / (1.0 - config.beta2.powi(step as i32));
    let param = param - config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    (param, m, v)
}

/// Applies one optimizer step in place. Errors on shape mismatch or
/// non-finite gradients.
pub fn optimizer_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    opt: &mut OptimizerState,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&opt.m) {
        return Err(Error::usage("optimizer shape mismatch"));
    }
    if !grads.all_finite() {
        return Err(Error::numeric("non-finite gradient"));
    }
    opt.step += 1;
    let step = opt.step;
    let config = opt.config.clone();
    let OptimizerState { m, v, .. } = opt;
    for (((p, g), mb), vb) in params
        .blocks_mut()
        .zip(grads.blocks())
        .zip(m.blocks_mut())
        .zip(v.blocks_mut())
    {
        for i in 0..p.w.len() {
            let (np, nm, nv) = adam_update(p.w[i], g.1.w[i], mb.w[i], vb.w[i], step, &config);
            p.w[i] = np;
            mb.w[i] = nm;
            vb.w[i] = nv;
        }
        for i in 0..p.b.len() {
            let (np, nm, nv) = adam_update(p.b[i], g.1.b[i], mb.b[i], vb.b[i], step, &config);
            p.b[i] = np;
            mb.b[i] = nm;
            vb.b[i] = nv;
        }
    }
    Ok(())
}

/// Where the worst gradient disagreement was found.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckWorst {
    pub block: String,
    /// Index into the block's weight vector, or bias index offset past the
    /// weights.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub trials: usize,
    pub coordinates_checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradcheckWorst>,
}

/// Finite-difference step for gradient verification.
pub const GRADCHECK_H: f64 = 1e-5;

/// Relative-error denominator floor. Keeps 64-bit roundoff in the central
/// difference from dominating when the true gradient is near zero.
const GRADCHECK_FLOOR: f64 = 1e-3;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Fully random parameters for gradient checking: every weight block drawn
/// uniform in +-sqrt(6/fan_in), biases in +-0.1. Heads are randomized too so
/// gradients flow through the whole backbone.
pub fn random_params<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> NetworkParams {
    let mut params = NetworkParams::zeros(arch);
    let bias = Uniform::new(-0.1, 0.1);
    for layer in params.blocks_mut() {
        let bound = (6.0 / layer.in_dim as f64).sqrt();
        let dist = Uniform::new(-bound, bound);
        for w in &mut layer.w {
            *w = dist.sample(rng);
        }
        for b in &mut layer.b {
            *b = bias.sample(rng);
        }
    }
    params
}

/// Central-difference gradient of `d_logits . logits + d_value * value`
/// with respect to one coordinate. `index` addresses weights first, then
/// biases. Exposed for tests; [`gradcheck`] uses it internally.
pub fn fd_gradient(
    params: &NetworkParams,
    input: &[f64],
    d_logits: &[f64],
    d_value: f64,
    block: usize,
    index: usize,
    h: f64,
) -> Result<f64> {
    let eval = |p: &NetworkParams| -> Result<f64> {
        let pass = forward(p, input)?;
        let mut s = d_value * pass.value;
        for (d, z) in d_logits.iter().zip(&pass.policy_logits) {
            s += d * z;
        }
        Ok(s)
    };
    let mut plus = params.clone();
    let mut minus = params.clone();
    {
        let tweak = |p: &mut NetworkParams, delta: f64| {
            let blk = p.blocks_mut().nth(block).expect("block index in range");
            if index < blk.w.len() {
                blk.w[index] += delta;
            } else {
                blk.b[index - blk.w.len()] += delta;
            }
        };
        tweak(&mut plus, h);
        tweak(&mut minus, -h);
    }
    Ok((eval(&plus)? - eval(&minus)?) / (2.0 * h))
}

/// Compares analytic gradients against central finite differences on random
/// parameters, inputs, and upstream signals, sampling a handful of
/// coordinates from every parameter block per trial.
///
/// Draws that leave any pre-activation within `1e-3` of the rectifier kink
/// are re-drawn: the two-sided difference quotient is meaningless across the
/// kink and would report a false mismatch.
pub fn gradcheck<R: Rng + ?Sized>(
    arch: &Architecture,
    trials: usize,
    rng: &mut R,
) -> Result<GradcheckReport> {
    if trials == 0 {
        return Err(Error::usage("gradcheck requires at least one trial"));
    }
    const COORDS_PER_BLOCK: usize = 8;
    const KINK_MARGIN: f64 = 1e-3;
    let unit = Uniform::new(-1.0, 1.0);
    let mut report = GradcheckReport {
        trials,
        coordinates_checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for _ in 0..trials {
        // Redraw until no pre-activation sits on the kink.
        let (params, input, pass) = loop {
            let params = random_params(arch, rng);
            let input: Vec<f64> = (0..arch.input_dim).map(|_| unit.sample(rng)).collect();
            let pass = forward(&params, &input)?;
            let near_kink = pass
                .pre_activations
                .iter()
                .flatten()
                .any(|z| z.abs() < KINK_MARGIN);
            if !near_kink {
                break (params, input, pass);
            }
        };
        let d_logits: Vec<f64> = (0..arch.action_dim).map(|_| unit.sample(rng)).collect();
        let d_value: f64 = unit.sample(rng);
        let analytic = backward(&pass, &params, &d_logits, d_value)?;

        let block_sizes: Vec<(String, usize)> = params
            .blocks()
            .map(|(name, d)| (name, d.w.len() + d.b.len()))
            .collect();
        for (block_idx, (name, size)) in block_sizes.iter().enumerate() {
            let n = COORDS_PER_BLOCK.min(*size);
            for _ in 0..n {
                let index = rng.gen_range(0..*size);
                let numeric = fd_gradient(
                    &params,
                    &input,
                    &d_logits,
                    d_value,
                    block_idx,
                    index,
                    GRADCHECK_H,
                )?;
                let blk = analytic.blocks().nth(block_idx).expect("block").1;
                let a = if index < blk.w.len() {
                    blk.w[index]
                } else {
                    blk.b[index - blk.w.len()]
                };
                let err = rel_error(a, numeric);
                report.coordinates_checked += 1;
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some(GradcheckWorst {
                        block: name.clone(),
                        index,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

const CHECKPOINT_MAGIC: &str = "ddlab-checkpoint v1";

/// Writes parameters as a checkpoint: one ASCII descriptor line, then the
/// flat little-endian 64-bit value stream in block order (per block: weights
/// row-major, then biases).
pub fn save_params(path: &Path, params: &NetworkParams) -> Result<()> {
    let arch = params.architecture();
    let header = format!(
        "{CHECKPOINT_MAGIC} input={} actions={} hidden={}\n",
        arch.input_dim,
        arch.action_dim,
        arch.hidden_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let mut file = std::fs::File::create(path)?;
    file.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(params.param_count() * 8);
    for x in params.flatten() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    file.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_params`].
pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(path.display().to_string(), "missing descriptor line"))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::parse(path.display().to_string(), "descriptor is not UTF-8"))?;
    let mut fields = header.split(' ');
    let magic: Vec<&str> = fields.by_ref().take(2).collect();
    if magic.join(" ") != CHECKPOINT_MAGIC {
        return Err(Error::parse(
            path.display().to_string(),
            format!("bad magic {:?}", magic.join(" ")),
        ));
    }
    let mut input_dim = None;
    let mut action_dim = None;
    let mut hidden = None;
    for field in fields {
        let (key, val) = field.split_once('=').ok_or_else(|| {
            Error::parse(path.display().to_string(), format!("bad field {field:?}"))
        })?;
        match key {
            "input" => input_dim = val.parse::<usize>().ok(),
            "actions" => action_dim = val.parse::<usize>().ok(),
            "hidden" => {
                hidden = val
                    .split(',')
                    .map(|w| w.parse::<usize>().ok())
                    .collect::<Option<Vec<usize>>>()
            }
            _ => {}
        }
    }
    let (input_dim, action_dim, hidden) = match (input_dim, action_dim, hidden) {
        (Some(i), Some(a), Some(h)) => (i, a, h),
        _ => {
            return Err(Error::parse(
                path.display().to_string(),
                "descriptor missing input=/actions=/hidden=",
            ))
        }
    };
    let arch = Architecture::new(input_dim, hidden, action_dim)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let payload = &bytes[newline + 1..];
    if payload.len() != arch.param_count() * 8 {
        return Err(Error::parse(
            path.display().to_string(),
            format!(
                "expected {} value bytes, found {}",
                arch.param_count() * 8,
                payload.len()
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut params = NetworkParams::zeros(&arch);
    params.fill_from_flat(&values)?;
    Ok(params)
}
