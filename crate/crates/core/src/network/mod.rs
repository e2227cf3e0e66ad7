//! The trainable classifier: observable-kernel features feeding a fully
//! connected head with optional batch normalization.

mod checkpoint;
mod metrics;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, sidecar_path, write_checkpoint, CheckpointMeta};
pub use metrics::{evaluate, Metrics};
pub use train::{lr_at_epoch, split_dataset, train, train_with_history, Adam, EpochRecord, Split};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, KernelBank, PathSet, KERNEL_PARAMS};
use crate::states::{item_rng, LabeledSample, PauliCoefficients};
use crate::tolerances;

/// Hidden widths of the full architecture.
pub const DEFAULT_HIDDEN: [usize; 3] = [1024, 512, 256];
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of active convolutional paths `l` (16 = full CNN).
    pub path_count: usize,
    pub kernels_trainable: bool,
    /// Kernel initialization; required when kernels are frozen.
    pub fixed_kernels: Option<KernelBank>,
    pub hidden: Vec<usize>,
    pub batchnorm: bool,
    pub seed: u64,
    pub learning_rate: f64,
    pub lr_halving_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl ModelConfig {
    pub fn new(path_count: usize) -> Self {
        ModelConfig {
            path_count,
            kernels_trainable: true,
            fixed_kernels: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            batchnorm: true,
            seed: 0,
            learning_rate: 1e-3,
            lr_halving_period: 6,
            epochs: 30,
            batch_size: 256,
        }
    }

    /// Frozen kernels, as used for retraining on circuit-measurable observables.
    pub fn with_fixed_kernels(path_count: usize, kernels: KernelBank) -> Self {
        ModelConfig {
            kernels_trainable: false,
            fixed_kernels: Some(kernels),
            ..Self::new(path_count)
        }
    }

    pub fn validate(&self) -> Result<()> {
        PathSet::first(self.path_count)?;
        if !self.kernels_trainable && self.fixed_kernels.is_none() {
            return Err(Error::InvalidArgument("frozen kernels require fixed_kernels".into()));
        }
        if self.batch_size == 0 || self.lr_halving_period == 0 {
            return Err(Error::InvalidArgument("batch size and LR period must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `C (m x n) = alpha op(A) op(B) + beta C` on row-major buffers.
///
/// `A` is stored `m x k` (or `k x m` when `a_t`), `B` is stored `k x n` (or `n x k` when `b_t`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index reachable through the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Dense {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            z.extend_from_slice(&self.biases);
        }
        gemm(batch, self.inputs, self.outputs, 1.0, x, false, &self.weights, true, 1.0, &mut z);
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
        }
    }

    fn update_running(&mut self, mean: &[f64], var: &[f64], batch: usize) {
        let unbias = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 1.0 };
        let m = self.momentum;
        for f in 0..self.gamma.len() {
            self.running_mean[f] = (1.0 - m) * self.running_mean[f] + m * mean[f];
            self.running_var[f] = (1.0 - m) * self.running_var[f] + m * var[f] * unbias;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub batchnorm: Option<BatchNorm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics only; deterministic per sample.
    Inference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub paths: PathSet,
    pub kernel_params: [f64; KERNEL_PARAMS],
    pub hidden: Vec<HiddenLayer>,
    pub output: Dense,
}

struct LayerCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    pre_relu: Vec<f64>,
}

pub(crate) struct ForwardCache {
    batch: usize,
    coeffs: Vec<PauliCoefficients>,
    layers: Vec<LayerCache>,
    head_input: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradients in the order of [`Model::params_mut`].
#[derive(Clone, Debug)]
pub struct Gradients(pub Vec<Vec<f64>>);

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with the probability clamped to `[eps, 1 - eps]`, natural log.
pub fn loss_bce(p: f64, y: f64) -> f64 {
    let eps = tolerances::BCE_EPSILON;
    let p = p.clamp(eps, 1.0 - eps);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

impl Model {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let paths = PathSet::first(config.path_count)?;
        let mut rng: ChaCha8Rng = item_rng(config.seed, 0);
        let kernels = match &config.fixed_kernels {
            Some(k) => *k,
            None => KernelBank::random(&mut rng),
        };
        let mut hidden = Vec::with_capacity(config.hidden.len());
        let mut width = paths.len();
        for &h in &config.hidden {
            hidden.push(HiddenLayer {
                dense: Dense::glorot(width, h, &mut rng),
                batchnorm: config.batchnorm.then(|| BatchNorm::new(h)),
            });
            width = h;
        }
        let output = Dense::glorot(width, 1, &mut rng);
        Ok(Model {
            config,
            paths,
            kernel_params: kernels.to_flat(),
            hidden,
            output,
        })
    }

    pub fn kernels(&self) -> KernelBank {
        KernelBank::from_flat(&self.kernel_params).expect("kernel parameter length is fixed")
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    /// Feature matrix `batch x l` for the given Pauli images.
    pub fn features(&self, coeffs: &[PauliCoefficients]) -> Vec<f64> {
        let kernels = self.kernels();
        let l = self.paths.len();
        let mut out = vec![0.0; coeffs.len() * l];
        for (c, row) in coeffs.iter().zip(out.chunks_exact_mut(l)) {
            features::features_from_pauli(c, &kernels, &self.paths, row);
        }
        out
    }

    pub(crate) fn forward_cached(&self, coeffs: &[PauliCoefficients], mode: Mode) -> ForwardCache {
        let features = self.features(coeffs);
        self.forward_features(coeffs.to_vec(), features, mode)
    }

    fn forward_features(&self, coeffs: Vec<PauliCoefficients>, features: Vec<f64>, mode: Mode) -> ForwardCache {
        let batch = features.len() / self.paths.len();
        let mut x = features;
        let mut layers = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let width = layer.dense.outputs;
            let z = layer.dense.forward(&x, batch);
            let (pre_relu, xhat, inv_std, batch_mean, batch_var) = match &layer.batchnorm {
                None => (z, Vec::new(), Vec::new(), Vec::new(), Vec::new()),
                Some(bn) => {
                    let (mean, var) = match mode {
                        Mode::Train => column_moments(&z, batch, width),
                        Mode::Inference => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    let mut xhat = z;
                    let mut y = vec![0.0; batch * width];
                    for (xr, yr) in xhat.chunks_exact_mut(width).zip(y.chunks_exact_mut(width)) {
                        for f in 0..width {
                            xr[f] = (xr[f] - mean[f]) * inv_std[f];
                            yr[f] = bn.gamma[f] * xr[f] + bn.beta[f];
                        }
                    }
                    (y, xhat, inv_std, mean, var)
                }
            };
            let act: Vec<f64> = pre_relu.iter().map(|&v| v.max(0.0)).collect();
            layers.push(LayerCache {
                input: std::mem::replace(&mut x, act),
                xhat,
                inv_std,
                batch_mean,
                batch_var,
                pre_relu,
            });
        }
        let logits = self.output.forward(&x, batch);
        ForwardCache {
            batch,
            coeffs,
            layers,
            head_input: x,
            probs: logits.into_iter().map(sigmoid).collect(),
        }
    }

    /// Discord probability for one Pauli image (inference mode).
    pub fn forward(&self, coeffs: &PauliCoefficients) -> f64 {
        self.forward_cached(std::slice::from_ref(coeffs), Mode::Inference).probs[0]
    }

    /// Probability for an explicit feature vector of length `l` (inference mode).
    pub fn forward_features_single(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.paths.len() {
            return Err(Error::DimensionMismatch {
                expected: self.paths.len(),
                got: features.len(),
            });
        }
        Ok(self.head_probabilities(features, 1)[0])
    }

    /// Runs only the fully connected head on a `batch x l` feature matrix.
    pub fn head_probabilities(&self, features: &[f64], batch: usize) -> Vec<f64> {
        assert_eq!(features.len(), batch * self.paths.len());
        self.forward_features(Vec::new(), features.to_vec(), Mode::Inference).probs
    }

    /// Inference-mode probabilities, processed in chunks.
    pub fn predict(&self, samples: &[LabeledSample]) -> Vec<f64> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(4096) {
            let coeffs: Vec<_> = chunk.iter().map(|s| s.coeffs).collect();
            out.extend(self.forward_cached(&coeffs, Mode::Inference).probs);
        }
        out
    }

    /// Mean BCE loss over the batch.
    pub fn batch_loss(&self, coeffs: &[PauliCoefficients], targets: &[f64], mode: Mode) -> f64 {
        let cache = self.forward_cached(coeffs, mode);
        mean_loss(&cache.probs, targets)
    }

    /// Parameters in a fixed order: kernels, then per hidden layer
    /// weights, biases, (gamma, beta), then output weights and biases.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.kernel_params[..]];
        for layer in &mut self.hidden {
            out.push(&mut layer.dense.weights);
            out.push(&mut layer.dense.biases);
            if let Some(bn) = &mut layer.batchnorm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.biases);
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Gradients of the mean BCE loss of a cached forward pass.
    pub(crate) fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> Gradients {
        let batch = cache.batch;
        assert_eq!(targets.len(), batch);
        let inv_b = 1.0 / batch as f64;
        let d_logit: Vec<f64> = cache
            .probs
            .iter()
            .zip(targets)
            .map(|(p, y)| (p - y) * inv_b)
            .collect();

        let mut out_w = vec![0.0; self.output.weights.len()];
        gemm(1, batch, self.output.inputs, 1.0, &d_logit, true, &cache.head_input, false, 0.0, &mut out_w);
        let out_b = vec![d_logit.iter().sum::<f64>()];
        let mut grad_x = vec![0.0; batch * self.output.inputs];
        gemm(batch, 1, self.output.inputs, 1.0, &d_logit, false, &self.output.weights, false, 0.0, &mut grad_x);

        let mut layer_grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.hidden.len());
        for (layer, lc) in self.hidden.iter().zip(&cache.layers).rev() {
            let width = layer.dense.outputs;
            let mut dy = grad_x;
            for (d, &pre) in dy.iter_mut().zip(&lc.pre_relu) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut grads = Vec::with_capacity(4);
            let dz = match &layer.batchnorm {
                None => dy,
                Some(bn) => {
                    let mut d_gamma = vec![0.0; width];
                    let mut d_beta = vec![0.0; width];
                    for (dr, xr) in dy.chunks_exact(width).zip(lc.xhat.chunks_exact(width)) {
                        for f in 0..width {
                            d_gamma[f] += dr[f] * xr[f];
                            d_beta[f] += dr[f];
                        }
                    }
                    // dxhat = dy * gamma; sums of dxhat and dxhat * xhat follow from d_beta and d_gamma.
                    let mut dz = dy;
                    for (dr, xr) in dz.chunks_exact_mut(width).zip(lc.xhat.chunks_exact(width)) {
                        for f in 0..width {
                            let g = bn.gamma[f];
                            dr[f] = g * lc.inv_std[f] * (dr[f] - inv_b * d_beta[f] - xr[f] * inv_b * d_gamma[f]);
                        }
                    }
                    grads.push(d_gamma);
                    grads.push(d_beta);
                    dz
                }
            };
            let inputs = layer.dense.inputs;
            let mut d_w = vec![0.0; width * inputs];
            gemm(width, batch, inputs, 1.0, &dz, true, &lc.input, false, 0.0, &mut d_w);
            let mut d_b = vec![0.0; width];
            for dr in dz.chunks_exact(width) {
                for f in 0..width {
                    d_b[f] += dr[f];
                }
            }
            let mut dx = vec![0.0; batch * inputs];
            gemm(batch, width, inputs, 1.0, &dz, false, &layer.dense.weights, false, 0.0, &mut dx);
            grad_x = dx;
            grads.insert(0, d_b);
            grads.insert(0, d_w);
            layer_grads.push(grads);
        }
        layer_grads.reverse();

        let mut d_kernels = vec![0.0; KERNEL_PARAMS];
        if self.config.kernels_trainable {
            let kernels = self.kernels();
            let l = self.paths.len();
            for (c, d_f) in cache.coeffs.iter().zip(grad_x.chunks_exact(l)) {
                let jac = features::feature_jacobian(c, &kernels, &self.paths);
                for (row, &df) in jac.iter().zip(d_f) {
                    for (dk, &j) in d_kernels.iter_mut().zip(row) {
                        *dk += df * j;
                    }
                }
            }
        }

        let mut all = vec![d_kernels];
        for g in layer_grads {
            all.extend(g);
        }
        all.push(out_w);
        all.push(out_b);
        Gradients(all)
    }

    /// Gradients of the training-mode batch loss.
    pub fn gradients(&self, coeffs: &[PauliCoefficients], targets: &[f64]) -> Gradients {
        let cache = self.forward_cached(coeffs, Mode::Train);
        self.backward(&cache, targets)
    }

    pub(crate) fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.hidden.iter_mut().zip(&cache.layers) {
            if let Some(bn) = &mut layer.batchnorm {
                bn.update_running(&lc.batch_mean, &lc.batch_var, cache.batch);
            }
        }
    }
}

pub(crate) fn mean_loss(probs: &[f64], targets: &[f64]) -> f64 {
    probs.iter().zip(targets).map(|(&p, &y)| loss_bce(p, y)).sum::<f64>() / probs.len() as f64
}

/// Per-column mean and biased variance of a `rows x cols` matrix.
fn column_moments(z: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; cols];
    for r in z.chunks_exact(cols) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in z.chunks_exact(cols) {
        for f in 0..cols {
            let d = r[f] - mean[f];
            var[f] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= rows as f64);
    (mean, var)
}
