//! Dense feed-forward building blocks: affine layers, batch
//! normalization, relu activations, analytic backpropagation, and Adam.
//!
//! A [`Trunk`] is a stack of hidden layers, each computing
//! `activation(batch_norm(x·W + b))`. Output heads are plain
//! [`DenseLayer`]s owned by the model on top. Forward passes are pure
//! (`&self`) and return a trace; batch-norm running statistics are
//! folded in afterwards with an explicit commit, which keeps the
//! forward function usable for finite-difference checks.

mod matrix;

pub use matrix::Matrix;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const BN_EPS: f64 = 1e-5;
/// Retention factor of the running-statistics EMA:
/// `running = MOMENTUM·running + (1−MOMENTUM)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Normalize with batch statistics; needs at least 2 rows.
    Train,
    /// Normalize with running statistics; any batch size.
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Relu6,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => x.max(0.0).min(6.0),
        }
    }

    /// Derivative at pre-activation `x` (0 at the kinks).
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu6 => {
                if x > 0.0 && x < 6.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Relu6 => "relu6",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "relu6" => Some(Activation::Relu6),
            _ => None,
        }
    }
}

/// Affine map `x·W + b` with `W` stored input×output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

impl DenseLayer {
    /// He-uniform initialization: `W ~ U(±√(6/fan_in))`, sampled in
    /// row-major order, zero bias.
    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = Matrix::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out).map(|_| rng.range(-limit, limit)).collect(),
        );
        Self {
            w,
            b: vec![0.0; fan_out],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = x.matmul(&self.w);
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&self.b) {
                *o += b;
            }
        }
        out
    }

    /// Gradients for `dy = ∂loss/∂output`; returns `∂loss/∂x`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> (DenseGrads, Matrix) {
        let dw = x.transpose().matmul(dy);
        let mut db = vec![0.0; self.output_dim()];
        for i in 0..dy.rows() {
            for (d, &g) in db.iter_mut().zip(dy.row(i)) {
                *d += g;
            }
        }
        let dx = dy.matmul(&self.w.transpose());
        (DenseGrads { dw, db }, dx)
    }

    pub fn trainable(&self) -> Vec<f64> {
        let mut out = self.w.data().to_vec();
        out.extend_from_slice(&self.b);
        out
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        let nw = self.w.data().len();
        assert_eq!(flat.len(), nw + self.b.len());
        self.w.data_mut().copy_from_slice(&flat[..nw]);
        self.b.copy_from_slice(&flat[nw..]);
    }
}

impl DenseGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.dw.data().to_vec();
        out.extend_from_slice(&self.db);
        out
    }
}

/// Per-feature batch normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Intermediates one batch-norm forward pass produced, consumed by
/// [`BatchNorm::backward`] and [`BatchNorm::commit`].
#[derive(Debug, Clone)]
pub struct BnTrace {
    mode: RunMode,
    xhat: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Pure forward pass. In `Train` mode normalizes with the biased
    /// batch variance; panics if the batch has fewer than 2 rows, since
    /// a single row normalizes to noise. Running statistics are only
    /// modified by [`BatchNorm::commit`].
    pub fn forward(&self, u: &Matrix, mode: RunMode) -> (Matrix, BnTrace) {
        let (n, d) = (u.rows(), u.cols());
        assert_eq!(d, self.dim());
        let (mean, var) = match mode {
            RunMode::Train => {
                assert!(n >= 2, "batch norm needs at least 2 rows in train mode, got {n}");
                let mean = u.col_mean();
                let mut var = vec![0.0; d];
                for i in 0..n {
                    for (j, &v) in u.row(i).iter().enumerate() {
                        let c = v - mean[j];
                        var[j] += c * c;
                    }
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                (mean, var)
            }
            RunMode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let h = (u.get(i, j) - mean[j]) * inv_std[j];
                xhat.set(i, j, h);
                out.set(i, j, self.gamma[j] * h + self.beta[j]);
            }
        }
        let trace = BnTrace {
            mode,
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        };
        (out, trace)
    }

    /// Gradients for `dy = ∂loss/∂output`; returns `∂loss/∂u`.
    ///
    /// In `Train` mode the batch statistics depend on `u`, giving
    /// `du = γ·inv_std·(dy − mean(dy) − x̂·mean(dy⊙x̂))` with means over
    /// the batch. In `Infer` mode the normalization is a fixed affine
    /// map, so `du = dy·γ·inv_std`.
    pub fn backward(&self, trace: &BnTrace, dy: &Matrix) -> (BnGrads, Matrix) {
        let (n, d) = (dy.rows(), dy.cols());
        assert_eq!(d, self.dim());
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let g = dy.get(i, j);
                dgamma[j] += g * trace.xhat.get(i, j);
                dbeta[j] += g;
            }
        }
        let mut du = Matrix::zeros(n, d);
        match trace.mode {
            RunMode::Train => {
                // Per-feature batch means of dy and dy⊙x̂.
                let inv_n = 1.0 / n as f64;
                for j in 0..d {
                    let mean_dy = dbeta[j] * inv_n;
                    let mean_dy_xhat = dgamma[j] * inv_n;
                    let scale = self.gamma[j] * trace.inv_std[j];
                    for i in 0..n {
                        let v = dy.get(i, j) - mean_dy - trace.xhat.get(i, j) * mean_dy_xhat;
                        du.set(i, j, scale * v);
                    }
                }
            }
            RunMode::Infer => {
                for j in 0..d {
                    let scale = self.gamma[j] * trace.inv_std[j];
                    for i in 0..n {
                        du.set(i, j, dy.get(i, j) * scale);
                    }
                }
            }
        }
        (BnGrads { dgamma, dbeta }, du)
    }

    /// Fold one train-mode batch into the running statistics. No-op for
    /// infer-mode traces.
    pub fn commit(&mut self, trace: &BnTrace) {
        if trace.mode != RunMode::Train {
            return;
        }
        for j in 0..self.dim() {
            self.running_mean[j] =
                BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * trace.batch_mean[j];
            self.running_var[j] =
                BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * trace.batch_var[j];
        }
    }
}

/// One hidden layer: affine, then batch norm, then activation.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub dense: DenseLayer,
    pub bn: BatchNorm,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct HiddenGrads {
    pub dense: DenseGrads,
    pub bn: BnGrads,
}

/// Stack of hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub layers: Vec<HiddenLayer>,
    input_dim: usize,
}

/// Intermediates of one trunk forward pass.
pub struct TrunkTrace {
    /// `xs[0]` is the network input, `xs[i+1]` the activation output of
    /// layer `i`, so `xs.last()` is the trunk output.
    xs: Vec<Matrix>,
    /// Batch-norm output (activation input) per layer.
    pre_act: Vec<Matrix>,
    bn: Vec<BnTrace>,
}

impl TrunkTrace {
    pub fn output(&self) -> &Matrix {
        self.xs.last().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone)]
pub struct TrunkGrads {
    pub layers: Vec<HiddenGrads>,
}

impl TrunkGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.dense.dw.data());
            out.extend_from_slice(&l.dense.db);
            out.extend_from_slice(&l.bn.dgamma);
            out.extend_from_slice(&l.bn.dbeta);
        }
        out
    }
}

impl Trunk {
    pub fn new(input_dim: usize, widths: &[usize], act: Activation, rng: &mut Rng) -> Self {
        assert!(!widths.is_empty(), "trunk needs at least one hidden layer");
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &w in widths {
            assert!(w > 0, "hidden width must be positive");
            layers.push(HiddenLayer {
                dense: DenseLayer::he_uniform(fan_in, w, rng),
                bn: BatchNorm::new(w),
                act,
            });
            fan_in = w;
        }
        Self { layers, input_dim }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").dense.output_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.dense.output_dim()).collect()
    }

    pub fn activation(&self) -> Activation {
        self.layers[0].act
    }

    /// Pure forward pass; running statistics are untouched until
    /// [`Trunk::commit_running_stats`].
    pub fn forward(&self, x: &Matrix, mode: RunMode) -> TrunkTrace {
        assert_eq!(x.cols(), self.input_dim, "trunk expects {} inputs", self.input_dim);
        let mut xs = vec![x.clone()];
        let mut pre_act = Vec::with_capacity(self.layers.len());
        let mut bn = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let u = layer.dense.forward(xs.last().expect("non-empty"));
            let (v, trace) = layer.bn.forward(&u, mode);
            let h = v.map(|t| layer.act.apply(t));
            pre_act.push(v);
            bn.push(trace);
            xs.push(h);
        }
        TrunkTrace { xs, pre_act, bn }
    }

    /// Forward in `Infer` mode, returning only the output.
    pub fn infer(&self, x: &Matrix) -> Matrix {
        let trace = self.forward(x, RunMode::Infer);
        trace.xs.into_iter().last().expect("non-empty")
    }

    /// Gradients for `d_out = ∂loss/∂trunk output`; also returns
    /// `∂loss/∂x` for composite models that train through a frozen net.
    pub fn backward(&self, trace: &TrunkTrace, d_out: &Matrix) -> (TrunkGrads, Matrix) {
        let mut grads: Vec<HiddenGrads> = Vec::with_capacity(self.layers.len());
        let mut dh = d_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let v = &trace.pre_act[idx];
            let mut dv = Matrix::zeros(dh.rows(), dh.cols());
            for i in 0..dh.rows() {
                for j in 0..dh.cols() {
                    dv.set(i, j, dh.get(i, j) * layer.act.grad(v.get(i, j)));
                }
            }
            let (bn_grads, du) = layer.bn.backward(&trace.bn[idx], &dv);
            let (dense_grads, dx) = layer.dense.backward(&trace.xs[idx], &du);
            grads.push(HiddenGrads {
                dense: dense_grads,
                bn: bn_grads,
            });
            dh = dx;
        }
        grads.reverse();
        (TrunkGrads { layers: grads }, dh)
    }

    /// Fold the batch statistics of a train-mode trace into every
    /// layer's running mean and variance.
    pub fn commit_running_stats(&mut self, trace: &TrunkTrace) {
        for (layer, t) in self.layers.iter_mut().zip(&trace.bn) {
            layer.bn.commit(t);
        }
    }

    /// Trainable parameters as one flat vector, per layer:
    /// weights (row-major), bias, gamma, beta.
    pub fn trainable(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.dense.w.data());
            out.extend_from_slice(&l.dense.b);
            out.extend_from_slice(&l.bn.gamma);
            out.extend_from_slice(&l.bn.beta);
        }
        out
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.dense.w.data().len();
            l.dense.w.data_mut().copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.dense.b.len();
            l.dense.b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
            let d = l.bn.dim();
            l.bn.gamma.copy_from_slice(&flat[pos..pos + d]);
            pos += d;
            l.bn.beta.copy_from_slice(&flat[pos..pos + d]);
            pos += d;
        }
        assert_eq!(pos, flat.len(), "trainable vector length mismatch");
    }

    /// Full state vector: trainable parameters followed by each layer's
    /// running mean and variance, in layer order.
    pub fn state(&self) -> Vec<f64> {
        let mut out = self.trainable();
        for l in &self.layers {
            out.extend_from_slice(&l.bn.running_mean);
            out.extend_from_slice(&l.bn.running_var);
        }
        out
    }

    pub fn set_state(&mut self, flat: &[f64]) {
        let nt = self.trainable().len();
        self.set_trainable(&flat[..nt]);
        let mut pos = nt;
        for l in &mut self.layers {
            let d = l.bn.dim();
            l.bn.running_mean.copy_from_slice(&flat[pos..pos + d]);
            pos += d;
            l.bn.running_var.copy_from_slice(&flat[pos..pos + d]);
            pos += d;
        }
        assert_eq!(pos, flat.len(), "state vector length mismatch");
    }

    pub fn state_len(&self) -> usize {
        self.trainable().len()
            + 2 * self.layers.iter().map(|l| l.bn.dim()).sum::<usize>()
    }
}

/// Adam with PyTorch semantics: bias-corrected moments, epsilon added
/// to the square root of the second moment, optional L2 term folded
/// into the gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// One optimizer step over parameter tensors and their gradients.
    /// The tensor list must have the same shape on every call; moment
    /// buffers are allocated on the first.
    pub fn step(&mut self, tensors: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        for (idx, (_, grads)) in tensors.iter().enumerate() {
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    context: format!("optimizer step {}", self.t + 1),
                    message: format!("non-finite gradient in parameter tensor {idx}"),
                });
            }
        }
        if self.moments.is_empty() {
            self.moments = tensors
                .iter()
                .map(|(p, _)| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        assert_eq!(self.moments.len(), tensors.len(), "tensor count changed between steps");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((params, grads), (m, v)) in tensors.iter_mut().zip(&mut self.moments) {
            assert_eq!(params.len(), grads.len());
            assert_eq!(params.len(), m.len(), "tensor size changed between steps");
            for i in 0..params.len() {
                let g = grads[i] + self.weight_decay * params[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Mean squared error over all entries: `(1/(n·d))·Σ(p−y)²`.
pub fn mse(pred: &Matrix, target: &Matrix) -> f64 {
    assert_eq!((pred.rows(), pred.cols()), (target.rows(), target.cols()));
    let n = (pred.rows() * pred.cols()) as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n
}

/// Gradient of [`mse`] with respect to the predictions.
pub fn mse_grad(pred: &Matrix, target: &Matrix) -> Matrix {
    let n = (pred.rows() * pred.cols()) as f64;
    Matrix::from_fn(pred.rows(), pred.cols(), |i, j| {
        2.0 * (pred.get(i, j) - target.get(i, j)) / n
    })
}
