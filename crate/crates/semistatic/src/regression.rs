//! Shallow single-hidden-layer ReLU networks and their AdaMax fitting.
//!
//! Three designs are supported: a one-factor network on a single discount
//! bond, a locally-connected network whose hidden rows each touch exactly
//! one bond of a basket, and a fully-connected network on log bond prices.
//! Inputs are z-scored per column and targets scaled by their sample SD;
//! the constants live on the network so closed-form pricing can undo them
//! (see [`HedgeNetwork::denormalized_weights`]).

use crate::instruments::SwapSide;
use crate::real::{lit, Real};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainingError {
    #[error("design/shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("invalid training options: {0}")]
    InvalidOptions(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
}

/// Network architecture, fixing both connectivity and the input assets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkDesign {
    /// Single input: one discount bond (d = 1).
    OneFactor,
    /// d bond inputs, one nonzero first-layer weight per hidden row.
    LocallyConnected,
    /// d log-bond inputs, dense first layer.
    FullyConnectedLog,
}

impl NetworkDesign {
    /// Whether the network consumes log bond prices.
    pub fn uses_log_inputs(self) -> bool {
        matches!(self, NetworkDesign::FullyConnectedLog)
    }
}

/// Input/output scaling constants estimated from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormConstants<T> {
    pub mu_z: Vec<T>,
    pub sigma_z: Vec<T>,
    pub sigma_v: T,
}

/// One shallow ReLU network; doubles as an options-portfolio description
/// through its denormalized weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeNetwork<T: Real> {
    design: NetworkDesign,
    q: usize,
    d_in: usize,
    /// Hidden weights, `q x d_in`, row-major. Off-mask entries are zero.
    w1: Vec<T>,
    b: Vec<T>,
    w2: Vec<T>,
    mask: Vec<bool>,
    mu_z: Vec<T>,
    sigma_z: Vec<T>,
    sigma_v: T,
}

/// First-layer/output weights mapped back to raw asset space.
#[derive(Debug, Clone)]
pub struct DenormalizedWeights<T> {
    pub w1: Vec<T>,
    pub b: Vec<T>,
    pub w2: Vec<T>,
}

impl<T: Real> HedgeNetwork<T> {
    /// Random or warm-started initialization.
    ///
    /// Fresh networks draw nonzero first-layer weights uniformly from
    /// (0,1) and biases from (-1,0) for payers, with the ranges swapped
    /// in sign for receivers; output weights come from (-1,1). When
    /// `prev` is given its weights are copied verbatim and only the
    /// normalization constants are left to be re-estimated for the new
    /// date.
    pub fn initialize(
        design: NetworkDesign,
        q: usize,
        d_in: usize,
        side: SwapSide,
        prev: Option<&HedgeNetwork<T>>,
        seed: u64,
    ) -> Result<Self, TrainingError> {
        if q == 0 || d_in == 0 {
            return Err(TrainingError::Shape("q and d_in must be positive".into()));
        }
        match design {
            NetworkDesign::OneFactor => {
                if d_in != 1 {
                    return Err(TrainingError::Shape(format!(
                        "one-factor design needs d_in = 1, got {d_in}"
                    )));
                }
            }
            NetworkDesign::LocallyConnected => {
                if q % d_in != 0 {
                    return Err(TrainingError::Shape(format!(
                        "locally-connected design needs q divisible by d_in ({q} % {d_in})"
                    )));
                }
            }
            NetworkDesign::FullyConnectedLog => {}
        }
        let mut mask = vec![true; q * d_in];
        if design == NetworkDesign::LocallyConnected {
            mask.iter_mut().for_each(|m| *m = false);
            for j in 0..q {
                mask[j * d_in + j * d_in / q] = true;
            }
        }
        if let Some(prev) = prev {
            if prev.design != design || prev.q != q || prev.d_in != d_in {
                return Err(TrainingError::Shape(
                    "warm-start network has a different shape".into(),
                ));
            }
            return Ok(prev.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |lo: f64, hi: f64| lit::<T>(rng.gen_range(lo..hi));
        let (w_lo, w_hi, b_lo, b_hi) = match side {
            SwapSide::Payer => (0.0, 1.0, -1.0, 0.0),
            SwapSide::Receiver => (-1.0, 0.0, 0.0, 1.0),
        };
        let mut w1 = vec![T::zero(); q * d_in];
        for (w, &m) in w1.iter_mut().zip(&mask) {
            if m {
                *w = draw(w_lo, w_hi);
            }
        }
        let b = (0..q).map(|_| draw(b_lo, b_hi)).collect();
        let w2 = (0..q).map(|_| draw(-1.0, 1.0)).collect();
        Ok(Self {
            design,
            q,
            d_in,
            w1,
            b,
            w2,
            mask,
            mu_z: vec![T::zero(); d_in],
            sigma_z: vec![T::one(); d_in],
            sigma_v: T::one(),
        })
    }

    pub fn design(&self) -> NetworkDesign {
        self.design
    }

    pub fn hidden_nodes(&self) -> usize {
        self.q
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn normalization(&self) -> NormConstants<T> {
        NormConstants {
            mu_z: self.mu_z.clone(),
            sigma_z: self.sigma_z.clone(),
            sigma_v: self.sigma_v,
        }
    }

    pub fn set_normalization(&mut self, norm: NormConstants<T>) -> Result<(), TrainingError> {
        if norm.mu_z.len() != self.d_in || norm.sigma_z.len() != self.d_in {
            return Err(TrainingError::Shape(
                "normalization dimension mismatch".into(),
            ));
        }
        if norm.sigma_z.iter().any(|s| !(*s > T::zero())) || !(norm.sigma_v > T::zero()) {
            return Err(TrainingError::DegenerateData(
                "normalization scales must be positive".into(),
            ));
        }
        self.mu_z = norm.mu_z;
        self.sigma_z = norm.sigma_z;
        self.sigma_v = norm.sigma_v;
        Ok(())
    }

    /// Network output on a raw (unnormalized) input vector.
    pub fn forward(&self, z: &[T]) -> T {
        assert_eq!(z.len(), self.d_in, "input dimension mismatch");
        let mut acc = T::zero();
        for j in 0..self.q {
            let mut p = self.b[j];
            for k in 0..self.d_in {
                p = p + self.w1[j * self.d_in + k] * (z[k] - self.mu_z[k]) / self.sigma_z[k];
            }
            if p > T::zero() {
                acc = acc + self.w2[j] * p;
            }
        }
        acc * self.sigma_v
    }

    /// Network output on an already-normalized input (training scale).
    pub fn forward_normalized(&self, z: &[T]) -> T {
        assert_eq!(z.len(), self.d_in, "input dimension mismatch");
        let mut acc = T::zero();
        for j in 0..self.q {
            let mut p = self.b[j];
            for k in 0..self.d_in {
                p = p + self.w1[j * self.d_in + k] * z[k];
            }
            if p > T::zero() {
                acc = acc + self.w2[j] * p;
            }
        }
        acc
    }

    /// Raw-asset-space coefficients: `w = w/sigma_z` per column,
    /// `b = b - sum_k w_k mu_k / sigma_k`, `w2 = sigma_v * w2`, so that
    /// `forward(z) = sum_j w2_j relu(w1_j . z + b_j)` exactly.
    pub fn denormalized_weights(&self) -> DenormalizedWeights<T> {
        let mut w1 = vec![T::zero(); self.q * self.d_in];
        let mut b = self.b.clone();
        for j in 0..self.q {
            for k in 0..self.d_in {
                let w = self.w1[j * self.d_in + k];
                w1[j * self.d_in + k] = w / self.sigma_z[k];
                b[j] = b[j] - w * self.mu_z[k] / self.sigma_z[k];
            }
        }
        let w2 = self.w2.iter().map(|&w| w * self.sigma_v).collect();
        DenormalizedWeights { w1, b, w2 }
    }
}

/// Regression data on the training (normalized) scale, with sampling
/// weights summing to one.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    inputs: Vec<T>,
    targets: Vec<T>,
    weights: Vec<T>,
    n: usize,
    d_in: usize,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(
        inputs: Vec<T>,
        targets: Vec<T>,
        weights: Vec<T>,
        d_in: usize,
    ) -> Result<Self, TrainingError> {
        if targets.is_empty() {
            return Err(TrainingError::DegenerateData("empty training set".into()));
        }
        let n = targets.len();
        if inputs.len() != n * d_in || weights.len() != n {
            return Err(TrainingError::Shape(
                "inputs/targets/weights sizes disagree".into(),
            ));
        }
        if inputs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(TrainingError::DegenerateData(
                "non-finite training values".into(),
            ));
        }
        let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
        if (total - T::one()).abs() > lit(1e-6) {
            return Err(TrainingError::DegenerateData(
                "sampling weights must sum to one".into(),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            weights,
            n,
            d_in,
        })
    }

    /// Uniform Monte Carlo weights `1/N`.
    pub fn monte_carlo(inputs: Vec<T>, targets: Vec<T>, d_in: usize) -> Result<Self, TrainingError> {
        let n = targets.len();
        if n == 0 {
            return Err(TrainingError::DegenerateData("empty training set".into()));
        }
        let w = T::one() / T::from_usize(n).unwrap();
        Self::new(inputs, targets, vec![w; n], d_in)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn input(&self, i: usize) -> &[T] {
        &self.inputs[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn target(&self, i: usize) -> T {
        self.targets[i]
    }
}

/// Z-scores inputs per column and scales targets by their sample SD
/// (targets are not centered). Fails on constant columns.
pub fn normalize<T: Real>(
    raw_inputs: &[T],
    raw_targets: &[T],
    d_in: usize,
) -> Result<(TrainingSet<T>, NormConstants<T>), TrainingError> {
    let n = raw_targets.len();
    if n < 2 {
        return Err(TrainingError::DegenerateData(
            "need at least two samples to normalize".into(),
        ));
    }
    if raw_inputs.len() != n * d_in {
        return Err(TrainingError::Shape("input length mismatch".into()));
    }
    let nf = T::from_usize(n).unwrap();
    let nm1 = T::from_usize(n - 1).unwrap();
    let mut mu_z = vec![T::zero(); d_in];
    let mut sigma_z = vec![T::zero(); d_in];
    for k in 0..d_in {
        let mut s = T::zero();
        for i in 0..n {
            s = s + raw_inputs[i * d_in + k];
        }
        mu_z[k] = s / nf;
        let mut ss = T::zero();
        for i in 0..n {
            let c = raw_inputs[i * d_in + k] - mu_z[k];
            ss = ss + c * c;
        }
        sigma_z[k] = (ss / nm1).sqrt();
        if !(sigma_z[k] > T::zero()) {
            return Err(TrainingError::DegenerateData(format!(
                "input column {k} is constant"
            )));
        }
    }
    let mean_v = raw_targets.iter().fold(T::zero(), |a, &v| a + v) / nf;
    let mut ss = T::zero();
    for &v in raw_targets {
        let c = v - mean_v;
        ss = ss + c * c;
    }
    let sigma_v = (ss / nm1).sqrt();
    if !(sigma_v > T::zero()) {
        return Err(TrainingError::DegenerateData("targets are constant".into()));
    }
    let mut inputs = Vec::with_capacity(n * d_in);
    for i in 0..n {
        for k in 0..d_in {
            inputs.push((raw_inputs[i * d_in + k] - mu_z[k]) / sigma_z[k]);
        }
    }
    let targets = raw_targets.iter().map(|&v| v / sigma_v).collect();
    let set = TrainingSet::monte_carlo(inputs, targets, d_in)?;
    Ok((
        set,
        NormConstants {
            mu_z,
            sigma_z,
            sigma_v,
        },
    ))
}

/// AdaMax options. The learning rate follows the published range
/// 0.0001-0.0005; epochs cap at 200 with early stopping once the
/// training MSE stops improving by `min_delta` for `patience` epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions<T> {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: T,
    pub min_delta: T,
    pub patience: usize,
}

impl<T: Real> Default for TrainOptions<T> {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 32,
            learning_rate: lit(2e-4),
            min_delta: lit(1e-7),
            patience: 10,
        }
    }
}

/// Fit diagnostics on the training set, in denormalized units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainDiagnostics<T> {
    pub mse: T,
    pub mae: T,
    pub epochs_run: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAMAX_EPS: f64 = 1e-8;

/// Weighted empirical loss and its gradient over the given sample
/// indices. The gradient is with respect to the flattened parameter
/// vector `[w1, b, w2]`; off-mask entries stay zero.
pub(crate) fn loss_and_gradient<T: Real>(
    net: &HedgeNetwork<T>,
    data: &TrainingSet<T>,
    indices: &[usize],
) -> (T, Vec<T>) {
    let q = net.q;
    let d = net.d_in;
    let n_params = q * d + 2 * q;
    let mut grad = vec![T::zero(); n_params];
    let mut loss = T::zero();
    let scale = T::from_usize(data.n).unwrap() / T::from_usize(indices.len()).unwrap();
    let mut pre = vec![T::zero(); q];
    for &i in indices {
        let z = data.input(i);
        let mut out = T::zero();
        for j in 0..q {
            let mut p = net.b[j];
            for k in 0..d {
                p = p + net.w1[j * d + k] * z[k];
            }
            pre[j] = p;
            if p > T::zero() {
                out = out + net.w2[j] * p;
            }
        }
        let err = out - data.targets[i];
        let w = data.weights[i] * scale;
        loss = loss + w * err * err;
        let gs = lit::<T>(2.0) * w * err;
        for j in 0..q {
            if pre[j] > T::zero() {
                grad[q * d + q + j] = grad[q * d + q + j] + gs * pre[j];
                grad[q * d + j] = grad[q * d + j] + gs * net.w2[j];
                for k in 0..d {
                    if net.mask[j * d + k] {
                        grad[j * d + k] = grad[j * d + k] + gs * net.w2[j] * z[k];
                    }
                }
            }
        }
    }
    (loss, grad)
}

fn full_mse<T: Real>(net: &HedgeNetwork<T>, data: &TrainingSet<T>) -> T {
    let mut loss = T::zero();
    for i in 0..data.n {
        let e = net.forward_normalized(data.input(i)) - data.targets[i];
        loss = loss + data.weights[i] * e * e;
    }
    loss
}

/// Minimizes the weighted MSE with AdaMax on shuffled mini-batches.
/// Returns diagnostics in denormalized units.
pub fn train<T: Real>(
    net: &mut HedgeNetwork<T>,
    data: &TrainingSet<T>,
    opts: &TrainOptions<T>,
    shuffle_seed: u64,
) -> Result<TrainDiagnostics<T>, TrainingError> {
    if data.d_in != net.d_in {
        return Err(TrainingError::Shape(
            "training data does not match network input dimension".into(),
        ));
    }
    if opts.epochs == 0 || opts.batch == 0 {
        return Err(TrainingError::InvalidOptions(
            "epochs and batch must be positive".into(),
        ));
    }
    if !(opts.learning_rate > T::zero()) {
        return Err(TrainingError::InvalidOptions(
            "learning rate must be positive".into(),
        ));
    }
    let q = net.q;
    let d = net.d_in;
    let n_params = q * d + 2 * q;
    let mut m = vec![T::zero(); n_params];
    let mut u = vec![T::zero(); n_params];
    let beta1 = lit::<T>(BETA1);
    let beta2 = lit::<T>(BETA2);
    let eps = lit::<T>(ADAMAX_EPS);
    let mut beta1_pow = T::one();

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..data.n).collect();
    let batch = opts.batch.min(data.n);

    let mut best = T::infinity();
    let mut last_improved = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 0..opts.epochs {
        epochs_run = epoch + 1;
        // Seeded Fisher-Yates shuffle.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = loss_and_gradient(net, data, chunk);
            beta1_pow = beta1_pow * beta1;
            let step = opts.learning_rate / (T::one() - beta1_pow);
            for (idx, g) in grad.iter().enumerate() {
                m[idx] = beta1 * m[idx] + (T::one() - beta1) * *g;
                u[idx] = (beta2 * u[idx]).max(g.abs());
                let delta = step * m[idx] / (u[idx] + eps);
                if idx < q * d {
                    if net.mask[idx] {
                        net.w1[idx] = net.w1[idx] - delta;
                    }
                } else if idx < q * d + q {
                    net.b[idx - q * d] = net.b[idx - q * d] - delta;
                } else {
                    net.w2[idx - q * d - q] = net.w2[idx - q * d - q] - delta;
                }
            }
        }
        let mse = full_mse(net, data);
        if !mse.is_finite() {
            return Err(TrainingError::Diverged { epoch });
        }
        if mse < best - opts.min_delta {
            best = mse;
            last_improved = epoch;
        }
        if epoch >= last_improved + opts.patience {
            break;
        }
    }

    let mut abs_sum = T::zero();
    for i in 0..data.n {
        let e = net.forward_normalized(data.input(i)) - data.targets[i];
        abs_sum = abs_sum + data.weights[i] * e.abs();
    }
    let mse = full_mse(net, data);
    Ok(TrainDiagnostics {
        mse: mse * net.sigma_v * net.sigma_v,
        mae: abs_sum * net.sigma_v,
        epochs_run,
    })
}

/// Normalizes, initializes (optionally warm-started) and trains a network
/// on raw data; the one-stop call used by the backward induction.
#[allow(clippy::too_many_arguments)]
pub fn fit<T: Real>(
    design: NetworkDesign,
    q: usize,
    d_in: usize,
    side: SwapSide,
    prev: Option<&HedgeNetwork<T>>,
    raw_inputs: &[T],
    raw_targets: &[T],
    opts: &TrainOptions<T>,
    seed: u64,
) -> Result<(HedgeNetwork<T>, TrainDiagnostics<T>), TrainingError> {
    let (data, consts) = normalize(raw_inputs, raw_targets, d_in)?;
    let init_seed = crate::real::derive_seed(seed, 0);
    let shuffle_seed = crate::real::derive_seed(seed, 1);
    let mut net = HedgeNetwork::initialize(design, q, d_in, side, prev, init_seed)?;
    net.set_normalization(consts)?;
    let diag = train(&mut net, &data, opts, shuffle_seed)?;
    Ok((net, diag))
}
