//! The fixed hourglass MLP: parameter storage, forward and backward passes,
//! binary cross-entropy, inverted dropout, Glorot initialization and a
//! central-difference gradient checker.
//!
//! Batches are row-major `N x d` matrices (one sample per row). Layer `l`
//! holds a weight matrix of shape `(fan_out, fan_in)` and a bias of length
//! `fan_out`, so a layer computes `z = a W^T + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::matrix::Matrix;

/// Probability clamp applied inside [`bce_loss`].
pub const PROB_CLAMP: f64 = 1e-7;

/// Hidden widths of the benchmark network.
pub const HOURGLASS: [usize; 6] = [16, 32, 64, 32, 16, 8];

const PARAMS_MAGIC: &[u8; 4] = b"OBPM";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("layer {layer}: expected input width {expected}, found {found}")]
    Dimension {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("inconsistent network state: {0}")]
    Consistency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("malformed parameter bytes: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 10,
            hidden_sizes: HOURGLASS.to_vec(),
            dropout_rate: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            ..Default::default()
        }
    }

    /// Number of parameterised layers (hidden layers plus the output unit).
    pub fn layer_count(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 {
            return Err(NetworkError::Config("input_dim must be positive".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(NetworkError::Config("hidden_sizes must be non-empty".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(NetworkError::Config("hidden layer of width 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetworkError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` for every layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.layer_count());
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_sizes {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        shapes.push((1, fan_in));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Layer {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

/// Network parameters, one [`Layer`] per affine transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Layer>,
}

/// Gradients share the layout of the parameters they differentiate.
pub type Gradients = Params;

impl Params {
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Params {
            layers: shapes.iter().map(|&(o, i)| Layer::zeros(o, i)).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.shape()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::fan_in)
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens in canonical order: per layer, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), NetworkError> {
        if values.len() != self.len() {
            return Err(NetworkError::Consistency(format!(
                "flat vector has {} values, parameters have {}",
                values.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&values[offset..offset + w.len()]);
            offset += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Canonical byte encoding: magic, little-endian `u64` layer count, one
    /// `(fan_out, fan_in)` pair of `u64`s per layer, then every layer's
    /// weights (row-major) followed by its bias as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 16 * self.layers.len() + 8 * self.len());
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.fan_out() as u64).to_le_bytes());
            out.extend_from_slice(&(l.fan_in() as u64).to_le_bytes());
        }
        for v in self.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        let mut reader = ByteReader::new(bytes);
        if reader.take(4)? != PARAMS_MAGIC {
            return Err(NetworkError::Serialization("bad magic".into()));
        }
        let n_layers = reader.u64()? as usize;
        let mut shapes = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let fan_out = reader.u64()? as usize;
            let fan_in = reader.u64()? as usize;
            shapes.push((fan_out, fan_in));
        }
        for pair in shapes.windows(2) {
            if pair[1].1 != pair[0].0 {
                return Err(NetworkError::Serialization("layer shapes do not chain".into()));
            }
        }
        let mut params = Params::zeros(&shapes);
        let mut flat = Vec::with_capacity(params.len());
        for _ in 0..params.len() {
            flat.push(f64::from_le_bytes(reader.take(8)?.try_into().unwrap()));
        }
        if !reader.is_done() {
            return Err(NetworkError::Serialization("trailing bytes".into()));
        }
        params.set_flat(&flat)?;
        Ok(params)
    }

    /// SHA-256 of the canonical encoding, lowercase hex.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetworkError::Serialization("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, NetworkError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn glorot_init(config: &NetworkConfig, seed: u64) -> Result<Params, NetworkError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::zeros(&config.layer_shapes());
    for layer in &mut params.layers {
        let limit = glorot_limit(layer.fan_in(), layer.fan_out());
        for w in layer.weights.as_mut_slice() {
            *w = rng.gen_range(-limit..=limit);
        }
    }
    Ok(params)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Logistic function, evaluated without overflowing `exp` for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Pre-activations per layer.
    pub pre: Vec<Matrix>,
    /// Post-activations per layer (after dropout on hidden layers). The last
    /// entry is the `N x 1` probability column.
    pub post: Vec<Matrix>,
    /// Scaled keep-masks (`0` or `1/(1-p)`) per hidden layer, present only
    /// for a training-mode pass with positive dropout.
    pub masks: Vec<Option<Matrix>>,
}

impl ForwardTrace {
    pub fn predictions(&self) -> &[f64] {
        self.post.last().map_or(&[], |m| m.as_slice())
    }
}

// Sigmoid saturates to exactly 0.0 or 1.0 in f64; keep outputs inside the
// open unit interval.
const PROB_MIN: f64 = f64::MIN_POSITIVE;
const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Forward pass. In [`Mode::Train`] with `dropout_rate > 0`, every hidden
/// activation is kept with probability `1 - p` and scaled by `1 / (1 - p)`;
/// mask draws consume `rng` layer by layer in row-major order.
pub fn forward<R: Rng + ?Sized>(
    params: &Params,
    batch: &Matrix,
    mode: Mode,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<ForwardTrace, NetworkError> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(NetworkError::Config(format!(
            "dropout_rate {dropout_rate} outside [0, 1)"
        )));
    }
    let use_dropout = mode == Mode::Train && dropout_rate > 0.0;
    run_forward(params, batch, |rows, cols| {
        use_dropout.then(|| dropout_mask(rows, cols, dropout_rate, rng))
    })
}

/// Evaluation-mode forward pass; no dropout and no RNG.
pub fn forward_eval(params: &Params, batch: &Matrix) -> Result<ForwardTrace, NetworkError> {
    run_forward(params, batch, |_, _| None)
}

/// Convenience wrapper returning only the predicted probabilities.
pub fn predict(params: &Params, batch: &Matrix) -> Result<Vec<f64>, NetworkError> {
    Ok(forward_eval(params, batch)?
        .post
        .pop()
        .map(Matrix::into_vec)
        .unwrap_or_default())
}

fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut mask = Matrix::zeros(rows, cols);
    for m in mask.as_mut_slice() {
        if rng.gen::<f64>() < keep {
            *m = scale;
        }
    }
    mask
}

fn run_forward<F>(params: &Params, batch: &Matrix, mut mask_for: F) -> Result<ForwardTrace, NetworkError>
where
    F: FnMut(usize, usize) -> Option<Matrix>,
{
    if params.layers.is_empty() {
        return Err(NetworkError::Consistency("network has no layers".into()));
    }
    let n = batch.rows();
    let last = params.layers.len() - 1;
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<Matrix> = Vec::with_capacity(params.layers.len());
    let mut masks = Vec::with_capacity(last);

    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { batch } else { &post[l - 1] };
        if input.cols() != layer.fan_in() {
            return Err(NetworkError::Dimension {
                layer: l,
                expected: layer.fan_in(),
                found: input.cols(),
            });
        }
        let z = affine(input, layer);
        let mut a = Matrix::zeros(n, layer.fan_out());
        if l < last {
            for (dst, &src) in a.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *dst = relu(src);
            }
            let mask = mask_for(n, layer.fan_out());
            if let Some(mask) = &mask {
                for (dst, &m) in a.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *dst *= m;
                }
            }
            masks.push(mask);
        } else {
            for (dst, &src) in a.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *dst = sigmoid(src).clamp(PROB_MIN, PROB_MAX);
            }
        }
        pre.push(z);
        post.push(a);
    }

    Ok(ForwardTrace {
        input: batch.clone(),
        pre,
        post,
        masks,
    })
}

/// `z[i][o] = b[o] + sum_k a[i][k] * W[o][k]`, accumulated in index order.
fn affine(input: &Matrix, layer: &Layer) -> Matrix {
    let n = input.rows();
    let fan_out = layer.fan_out();
    let mut z = Matrix::zeros(n, fan_out);
    for i in 0..n {
        let a = input.row(i);
        let out = z.row_mut(i);
        for (o, dst) in out.iter_mut().enumerate() {
            let w = layer.weights.row(o);
            let mut acc = layer.bias[o];
            for (x, wk) in a.iter().zip(w) {
                acc += x * wk;
            }
            *dst = acc;
        }
    }
    z
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(y: &[f64], y_hat: &[f64]) -> Result<f64, NetworkError> {
    if y.is_empty() {
        return Err(NetworkError::Domain("bce_loss on empty input".into()));
    }
    if y.len() != y_hat.len() {
        return Err(NetworkError::Domain(format!(
            "label count {} != prediction count {}",
            y.len(),
            y_hat.len()
        )));
    }
    let mut total = 0.0;
    for (&t, &p) in y.iter().zip(y_hat) {
        if t != 0.0 && t != 1.0 {
            return Err(NetworkError::Domain(format!("label {t} is not binary")));
        }
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total += t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(-total / y.len() as f64)
}

/// Gradients of the mean BCE for the batch recorded in `trace`.
///
/// Uses `dL/dz_out = (y_hat - y) / N`, a ReLU derivative of 0 at `z = 0`,
/// and the dropout masks stored in the trace.
pub fn backward(params: &Params, trace: &ForwardTrace, y: &[f64]) -> Result<Gradients, NetworkError> {
    let n_layers = params.layers.len();
    if trace.pre.len() != n_layers || trace.post.len() != n_layers {
        return Err(NetworkError::Consistency(format!(
            "trace has {} layers, params have {}",
            trace.pre.len(),
            n_layers
        )));
    }
    if trace.masks.len() + 1 != n_layers {
        return Err(NetworkError::Consistency("mask count mismatch".into()));
    }
    for (l, (layer, z)) in params.layers.iter().zip(&trace.pre).enumerate() {
        if z.cols() != layer.fan_out() {
            return Err(NetworkError::Consistency(format!(
                "layer {l}: trace width {} != fan_out {}",
                z.cols(),
                layer.fan_out()
            )));
        }
    }
    let n = trace.input.rows();
    if y.len() != n {
        return Err(NetworkError::Consistency(format!(
            "label count {} != batch size {n}",
            y.len()
        )));
    }
    if n == 0 {
        return Err(NetworkError::Domain("backward on empty batch".into()));
    }

    let mut grads = Params::zeros(&params.shapes());
    let inv_n = 1.0 / n as f64;
    let mut delta = Matrix::zeros(n, 1);
    for (i, (&p, &t)) in trace.predictions().iter().zip(y).enumerate() {
        delta.set(i, 0, (p - t) * inv_n);
    }

    for l in (0..n_layers).rev() {
        let input = if l == 0 { &trace.input } else { &trace.post[l - 1] };
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        let fan_out = layer.fan_out();
        let fan_in = layer.fan_in();

        for i in 0..n {
            let d = delta.row(i);
            let a = input.row(i);
            for (o, &d_o) in d.iter().enumerate().take(fan_out) {
                g.bias[o] += d_o;
                for (gw, &ak) in g.weights.row_mut(o).iter_mut().zip(a).take(fan_in) {
                    *gw += d_o * ak;
                }
            }
        }

        if l == 0 {
            break;
        }
        let z_prev = &trace.pre[l - 1];
        let mask = trace.masks[l - 1].as_ref();
        let mut next = Matrix::zeros(n, fan_in);
        for i in 0..n {
            let d = delta.row(i);
            let out = next.row_mut(i);
            for (o, &d_o) in d.iter().enumerate().take(fan_out) {
                for (ok, &wk) in out.iter_mut().zip(layer.weights.row(o)).take(fan_in) {
                    *ok += d_o * wk;
                }
            }
            let z = z_prev.row(i);
            for k in 0..fan_in {
                let mut v = if z[k] > 0.0 { out[k] } else { 0.0 };
                if let Some(m) = mask {
                    v *= m.get(i, k);
                }
                out[k] = v;
            }
        }
        delta = next;
    }
    Ok(grads)
}

/// Evaluation-mode loss of `params` on a batch.
pub fn eval_loss(params: &Params, batch: &Matrix, y: &[f64]) -> Result<f64, NetworkError> {
    let trace = forward_eval(params, batch)?;
    bce_loss(y, trace.predictions())
}

/// Maximum relative error between analytic gradients (from [`backward`],
/// eval mode) and central finite differences with step `h`.
pub fn gradient_check(params: &Params, batch: &Matrix, y: &[f64], h: f64) -> Result<f64, NetworkError> {
    let trace = forward_eval(params, batch)?;
    let analytic = backward(params, &trace, y)?;
    gradient_check_against(params, batch, y, h, &analytic)
}

/// As [`gradient_check`], but compares against caller-supplied gradients.
pub fn gradient_check_against(
    params: &Params,
    batch: &Matrix,
    y: &[f64],
    h: f64,
    analytic: &Gradients,
) -> Result<f64, NetworkError> {
    if h.is_nan() || h <= 0.0 {
        return Err(NetworkError::Domain(format!("step {h} must be positive")));
    }
    if batch.rows() == 0 {
        return Err(NetworkError::Domain("empty batch".into()));
    }
    if analytic.shapes() != params.shapes() {
        return Err(NetworkError::Consistency("gradient shapes differ from params".into()));
    }
    let base = params.to_flat();
    let analytic = analytic.to_flat();
    let mut probe = params.clone();
    let mut shifted = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        shifted[i] = base[i] + h;
        probe.set_flat(&shifted)?;
        let plus = eval_loss(&probe, batch, y)?;
        shifted[i] = base[i] - h;
        probe.set_flat(&shifted)?;
        let minus = eval_loss(&probe, batch, y)?;
        shifted[i] = base[i];

        let numeric = (plus - minus) / (2.0 * h);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
