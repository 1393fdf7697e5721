//! Three-layer 1-D convolutional predictor trained with Adam.
//!
//! Input is the window as a length-10 sequence with two channels (sin, cos).
//! Layers: conv 2->32, conv 32->64, conv 64->64 (kernel 3, stride 1, no
//! padding, ReLU), then a dense 256->2 layer with tanh.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnglePredictor, AngleWindow, TrainingPair, WINDOW};
use crate::error::{Error, Result};

const K: usize = 3;
/// (input channels, output channels) of the three convolutions.
const CONV: [(usize, usize); 3] = [(2, 32), (32, 64), (64, 64)];
/// Sequence length entering each convolution, and after the last.
const LEN: [usize; 4] = [WINDOW, WINDOW - 2, WINDOW - 4, WINDOW - 6];
const FLAT: usize = 64 * LEN[3];
const OUT: usize = 2;

#[derive(Clone, Copy)]
struct Layout {
    w: [usize; 4],
    b: [usize; 4],
    total: usize,
}

const fn layout() -> Layout {
    let mut w = [0; 4];
    let mut b = [0; 4];
    let mut off = 0;
    let mut i = 0;
    while i < 3 {
        w[i] = off;
        off += CONV[i].0 * CONV[i].1 * K;
        b[i] = off;
        off += CONV[i].1;
        i += 1;
    }
    w[3] = off;
    off += OUT * FLAT;
    b[3] = off;
    off += OUT;
    Layout { w, b, total: off }
}

const L: Layout = layout();

/// Network parameters as one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CnnRepr", into = "CnnRepr")]
pub struct CnnModel {
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerSpec {
    kind: String,
    inputs: usize,
    outputs: usize,
    kernel: usize,
}

#[derive(Serialize, Deserialize)]
struct CnnRepr {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

fn layer_specs() -> Vec<LayerSpec> {
    let mut v: Vec<LayerSpec> = CONV
        .iter()
        .map(|&(i, o)| LayerSpec {
            kind: "conv1d_relu".into(),
            inputs: i,
            outputs: o,
            kernel: K,
        })
        .collect();
    v.push(LayerSpec {
        kind: "dense_tanh".into(),
        inputs: FLAT,
        outputs: OUT,
        kernel: 1,
    });
    v
}

impl TryFrom<CnnRepr> for CnnModel {
    type Error = Error;
    fn try_from(r: CnnRepr) -> Result<Self> {
        let want = layer_specs();
        let same = r.layers.len() == want.len()
            && r.layers.iter().zip(&want).all(|(a, b)| {
                a.kind == b.kind
                    && a.inputs == b.inputs
                    && a.outputs == b.outputs
                    && a.kernel == b.kernel
            });
        if !same {
            return Err(Error::invalid(
                "checkpoint layer dimensions do not match this network",
            ));
        }
        let m = CnnModel { params: r.params };
        m.validate()?;
        Ok(m)
    }
}

impl From<CnnModel> for CnnRepr {
    fn from(m: CnnModel) -> Self {
        CnnRepr {
            layers: layer_specs(),
            params: m.params,
        }
    }
}

/// Activations kept for the backward pass.
struct Trace {
    x: [f64; 2 * WINDOW],
    z: [Vec<f64>; 3],
    a: [Vec<f64>; 3],
    y: [f64; OUT],
}

// Dimensions are const parameters so the short inner loops are unrolled.
fn conv_forward<const CIN: usize, const COUT: usize, const LIN: usize, const LOUT: usize>(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    z: &mut [f64],
) {
    let (w, x, z) = (&w[..COUT * CIN * K], &x[..CIN * LIN], &mut z[..COUT * LOUT]);
    for o in 0..COUT {
        let mut acc = [b[o]; LOUT];
        for i in 0..CIN {
            let wk = &w[(o * CIN + i) * K..][..K];
            let xi = &x[i * LIN..][..LIN];
            for (t, zt) in acc.iter_mut().enumerate() {
                *zt += wk[0] * xi[t] + wk[1] * xi[t + 1] + wk[2] * xi[t + 2];
            }
        }
        z[o * LOUT..][..LOUT].copy_from_slice(&acc);
    }
}

fn conv_backward<const CIN: usize, const COUT: usize, const LIN: usize, const LOUT: usize>(
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let (w, x, dz) = (&w[..COUT * CIN * K], &x[..CIN * LIN], &dz[..COUT * LOUT]);
    let dw = &mut dw[..COUT * CIN * K];
    for o in 0..COUT {
        let dzo: &[f64; LOUT] = dz[o * LOUT..][..LOUT].try_into().expect("length");
        db[o] += dzo.iter().sum::<f64>();
        for i in 0..CIN {
            let base = (o * CIN + i) * K;
            let xi = &x[i * LIN..][..LIN];
            for k in 0..K {
                dw[base + k] += dzo.iter().zip(&xi[k..]).map(|(d, v)| d * v).sum::<f64>();
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxi = &mut dx[i * LIN..][..LIN];
                let wk = &w[base..][..K];
                for (t, &d) in dzo.iter().enumerate() {
                    dxi[t] += wk[0] * d;
                    dxi[t + 1] += wk[1] * d;
                    dxi[t + 2] += wk[2] * d;
                }
            }
        }
    }
}

fn conv_layer_forward(l: usize, w: &[f64], b: &[f64], x: &[f64], z: &mut [f64]) {
    match l {
        0 => conv_forward::<{ CONV[0].0 }, { CONV[0].1 }, { LEN[0] }, { LEN[1] }>(w, b, x, z),
        1 => conv_forward::<{ CONV[1].0 }, { CONV[1].1 }, { LEN[1] }, { LEN[2] }>(w, b, x, z),
        _ => conv_forward::<{ CONV[2].0 }, { CONV[2].1 }, { LEN[2] }, { LEN[3] }>(w, b, x, z),
    }
}

fn conv_layer_backward(
    l: usize,
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    match l {
        0 => conv_backward::<{ CONV[0].0 }, { CONV[0].1 }, { LEN[0] }, { LEN[1] }>(
            w, x, dz, dw, db, dx,
        ),
        1 => conv_backward::<{ CONV[1].0 }, { CONV[1].1 }, { LEN[1] }, { LEN[2] }>(
            w, x, dz, dw, db, dx,
        ),
        _ => conv_backward::<{ CONV[2].0 }, { CONV[2].1 }, { LEN[2] }, { LEN[3] }>(
            w, x, dz, dw, db, dx,
        ),
    }
}

impl CnnModel {
    pub fn param_count() -> usize {
        L.total
    }

    /// All parameters zero.
    pub fn zeros() -> Self {
        CnnModel {
            params: vec![0.0; L.total],
        }
    }

    /// Uniform fan-in scaled weights (He style), small positive conv biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; L.total];
        for (l, &(cin, cout)) in CONV.iter().enumerate() {
            let bound = (6.0 / (cin * K) as f64).sqrt();
            for v in &mut p[L.w[l]..L.b[l]] {
                *v = rng.random_range(-bound..bound);
            }
            p[L.b[l]..L.b[l] + cout].fill(0.01);
        }
        let bound = (6.0 / FLAT as f64).sqrt();
        for v in &mut p[L.w[3]..L.b[3]] {
            *v = rng.random_range(-bound..bound);
        }
        CnnModel { params: p }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        let m = CnnModel { params };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.params.len() != L.total {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                L.total,
                self.params.len()
            )));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    fn run(&self, window: &AngleWindow) -> Trace {
        let p = &self.params;
        let mut x = [0.0; 2 * WINDOW];
        for (t, &(s, c)) in window.encoded().iter().enumerate() {
            x[t] = s;
            x[WINDOW + t] = c;
        }
        let mut z: [Vec<f64>; 3] = Default::default();
        let mut a: [Vec<f64>; 3] = Default::default();
        for (l, &(_, cout)) in CONV.iter().enumerate() {
            let mut zl = vec![0.0; cout * LEN[l + 1]];
            let input: &[f64] = if l == 0 { &x } else { &a[l - 1] };
            conv_layer_forward(
                l,
                &p[L.w[l]..L.b[l]],
                &p[L.b[l]..L.b[l] + cout],
                input,
                &mut zl,
            );
            a[l] = zl.iter().map(|&v| v.max(0.0)).collect();
            z[l] = zl;
        }
        let mut y = [0.0; OUT];
        for (c, yc) in y.iter_mut().enumerate() {
            let w = &p[L.w[3] + c * FLAT..L.w[3] + (c + 1) * FLAT];
            let pre = p[L.b[3] + c] + w.iter().zip(&a[2]).map(|(w, v)| w * v).sum::<f64>();
            *yc = pre.tanh();
        }
        Trace { x, z, a, y }
    }

    /// Encoded (sin, cos) prediction, each component in (-1, 1).
    pub fn forward(&self, window: &AngleWindow) -> (f64, f64) {
        let y = self.run(window).y;
        (y[0], y[1])
    }

    /// Sequence lengths after each convolution.
    pub fn layer_lengths() -> [usize; 4] {
        LEN
    }

    /// Loss of one pair: mean over the two outputs of the squared error.
    fn pair_loss(&self, pair: &TrainingPair) -> f64 {
        let y = self.forward(&pair.window);
        0.5 * ((y.0 - pair.target.0).powi(2) + (y.1 - pair.target.1).powi(2))
    }

    /// Adds `scale * d(loss)/d(params)` for one pair into `grad`; returns the loss.
    fn accumulate(&self, pair: &TrainingPair, scale: f64, grad: &mut [f64]) -> f64 {
        let p = &self.params;
        let tr = self.run(&pair.window);
        let target = [pair.target.0, pair.target.1];
        let mut loss = 0.0;
        let mut dpre = [0.0; OUT];
        for c in 0..OUT {
            let e = tr.y[c] - target[c];
            loss += 0.5 * e * e;
            dpre[c] = scale * e * (1.0 - tr.y[c] * tr.y[c]);
        }
        let mut da = vec![0.0; FLAT];
        for c in 0..OUT {
            let row = L.w[3] + c * FLAT;
            grad[L.b[3] + c] += dpre[c];
            for f in 0..FLAT {
                grad[row + f] += dpre[c] * tr.a[2][f];
                da[f] += p[row + f] * dpre[c];
            }
        }
        for l in (0..3).rev() {
            let (cin, cout) = CONV[l];
            let dz: Vec<f64> = da
                .iter()
                .zip(&tr.z[l])
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            let input: &[f64] = if l == 0 { &tr.x } else { &tr.a[l - 1] };
            let mut dx = if l > 0 {
                vec![0.0; cin * LEN[l]]
            } else {
                Vec::new()
            };
            let (head, tail) = grad.split_at_mut(L.b[l]);
            conv_layer_backward(
                l,
                &p[L.w[l]..L.b[l]],
                input,
                &dz,
                &mut head[L.w[l]..],
                &mut tail[..cout],
                (l > 0).then_some(&mut dx[..]),
            );
            da = dx;
        }
        loss
    }

    /// Mean loss and its gradient over `pairs`.
    pub fn loss_and_gradient(&self, pairs: &[TrainingPair]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; L.total];
        let scale = 1.0 / pairs.len() as f64;
        let loss: f64 = pairs
            .iter()
            .map(|p| self.accumulate(p, scale, &mut g))
            .sum();
        (loss * scale, g)
    }

    /// Mean over pairs of the mean squared error of the two outputs.
    pub fn loss(&self, pairs: &[TrainingPair]) -> f64 {
        pairs.iter().map(|p| self.pair_loss(p)).sum::<f64>() / pairs.len() as f64
    }
}

impl AnglePredictor for CnnModel {
    fn predict_encoded(&self, window: &AngleWindow) -> (f64, f64) {
        self.forward(window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Epochs over which the learning rate falls linearly to `lr_end`.
    pub decay_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 200,
            beta1: 0.8,
            beta2: 0.999,
            lr_start: 1e-3,
            lr_end: 1e-4,
            decay_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.epochs > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.beta1 > 0.0
            && self.beta2 > 0.0
            && self.lr_start > 0.0
            && self.lr_end > 0.0;
        if !ok {
            return Err(Error::invalid(format!(
                "invalid training configuration {self:?}"
            )));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.decay_epochs == 0 {
            return self.lr_end;
        }
        let f = (epoch as f64 / self.decay_epochs as f64).min(1.0);
        self.lr_start + (self.lr_end - self.lr_start) * f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss over the whole dataset before the first update.
    pub initial_loss: f64,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss over the whole dataset after training.
    pub final_loss: f64,
}

pub fn cnn_train(pairs: &[TrainingPair], config: &TrainConfig) -> Result<(CnnModel, TrainReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CnnModel::init(rng.random());
    let initial_loss = model.loss(pairs);
    let n = L.total;
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch: Vec<TrainingPair> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i]));
            let (loss, g) = model.loss_and_gradient(&batch);
            if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: b,
                    learning_rate: lr,
                });
            }
            total += loss * chunk.len() as f64;
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            for i in 0..n {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                model.params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        }
        epoch_losses.push(total / pairs.len() as f64);
    }
    let final_loss = model.loss(pairs);
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

/// Largest relative gap between backpropagated and central-difference
/// gradients over 256 parameters drawn with a fixed seed.
///
/// A parameter whose perturbation flips any ReLU is skipped: the loss is
/// not differentiable across the kink and the difference quotient is
/// meaningless there. Parameters are drawn until 256 have been compared.
pub fn gradient_check(model: &CnnModel, pair: &TrainingPair, epsilon: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    let mut idx: Vec<usize> = (0..L.total).collect();
    idx.shuffle(&mut rng);
    gradient_check_params(model, pair, epsilon, &idx, 256)
}

fn relu_pattern(model: &CnnModel, window: &AngleWindow) -> Vec<bool> {
    model
        .run(window)
        .z
        .iter()
        .flatten()
        .map(|&z| z > 0.0)
        .collect()
}

/// [`gradient_check`] over candidate indices, stopping after `count`
/// comparisons.
pub fn gradient_check_params(
    model: &CnnModel,
    pair: &TrainingPair,
    epsilon: f64,
    candidates: &[usize],
    count: usize,
) -> f64 {
    let (_, g) = model.loss_and_gradient(std::slice::from_ref(pair));
    let pattern = relu_pattern(model, &pair.window);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for &i in candidates {
        if checked == count {
            break;
        }
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = probe.pair_loss(pair);
        let smooth_up = relu_pattern(&probe, &pair.window) == pattern;
        probe.params[i] = orig - epsilon;
        let down = probe.pair_loss(pair);
        let smooth_down = relu_pattern(&probe, &pair.window) == pattern;
        probe.params[i] = orig;
        if !(smooth_up && smooth_down) {
            continue;
        }
        checked += 1;
        let numeric = (up - down) / (2.0 * epsilon);
        let scale = g[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((g[i] - numeric).abs() / scale);
    }
    worst
}

/// Parameter index ranges of the convolution biases.
pub fn conv_bias_indices() -> Vec<usize> {
    (0..3).flat_map(|l| L.b[l]..L.b[l] + CONV[l].1).collect()
}
