//! ADMM training of the network jointly with the combination coefficients.
//!
//! The problem `min L(a, theta)` subject to `a in [0, 1]^n` is split as
//! `a = b`, `b in [0, 1]^n`, and solved in scaled form:
//!
//! ```text
//! theta <- a few SGD epochs on L(a, .)
//! a     <- gradient steps on L(., theta) + rho/2 |a - b + u|^2
//! b     <- clamp(a + u, 0, 1)
//! u     <- u + tau (a - b)
//! ```

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::{stream_rng, LabeledDataset, Samples};
use crate::error::{Error, Result};
use crate::gradients::{backprop_to_alpha, smooth_jrp_with_jacobian, smooth_rp_with_jacobian, ImageGradient};
use crate::imaging::{jrp, rp, ImagingConfig, RecurrenceImage};
use crate::interval::{combine, combine_mv};
use crate::net::{loss_and_grad, sample_gradients, sgd_epoch, Architecture, CnnModel, TrainConfig};

const GOLDEN: f64 = 1.618_033_988_749_895;
const INIT_STREAM: u64 = u64::MAX - 1;
const SGD_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmConfig {
    pub rho_admm: f64,
    pub tau: f64,
    pub outer_iters: usize,
    pub inner_theta_epochs: usize,
    pub inner_alpha_steps: usize,
    pub alpha_lr: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Starting value of every coefficient.
    pub alpha_init: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho_admm: 1.0,
            tau: 1.0,
            outer_iters: 10,
            inner_theta_epochs: 3,
            inner_alpha_steps: 10,
            alpha_lr: 1.0,
            tol_primal: 1e-3,
            tol_dual: 1e-3,
            alpha_init: 0.5,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.rho_admm > 0.0 && self.rho_admm.is_finite()) {
            return bad("rho_admm must be > 0");
        }
        if !(self.tau > 0.0 && self.tau <= GOLDEN) {
            return bad("tau must lie in (0, (1 + sqrt 5) / 2]");
        }
        if !(self.alpha_lr >= 0.0 && self.alpha_lr.is_finite()) {
            return bad("alpha_lr must be >= 0");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return bad("tolerances must be > 0");
        }
        if !(0.0..=1.0).contains(&self.alpha_init) {
            return bad("alpha_init must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

/// Coefficient-side ADMM variables. The network parameters live in the data term.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub history: Vec<HistoryRecord>,
}

impl AdmmState {
    pub fn new(dim: usize, alpha_init: f64) -> Self {
        Self {
            alpha: vec![alpha_init; dim],
            beta: vec![alpha_init; dim],
            u: vec![0.0; dim],
            history: Vec::new(),
        }
    }
}

/// The empirical risk `L(a, theta)` with its own parameters `theta`.
pub trait DataTerm {
    /// Number of coefficients.
    fn dim(&self) -> usize;

    /// Improve `theta` for fixed coefficients.
    fn theta_step(&mut self, alpha: &[f64], epochs: usize) -> Result<()>;

    fn loss(&mut self, alpha: &[f64]) -> Result<f64>;

    /// Loss and its gradient with respect to the coefficients.
    fn loss_grad(&mut self, alpha: &[f64]) -> Result<(f64, Vec<f64>)>;
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Scaled-form augmented Lagrangian `L + rho/2 |a - b + u|^2 - rho/2 |u|^2`,
/// or `+inf` when `b` leaves the box.
pub fn augmented_lagrangian(loss: f64, alpha: &[f64], beta: &[f64], u: &[f64], rho: f64) -> f64 {
    if beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return f64::INFINITY;
    }
    let shifted: f64 = alpha
        .iter()
        .zip(beta)
        .zip(u)
        .map(|((a, b), u)| (a - b + u).powi(2))
        .sum();
    let scale: f64 = u.iter().map(|u| u * u).sum();
    loss + 0.5 * rho * (shifted - scale)
}

/// `L(a) + rho/2 |a - b + u|^2`, the function minimised by the coefficient step.
pub fn composite_objective<D: DataTerm + ?Sized>(
    data: &mut D,
    alpha: &[f64],
    beta: &[f64],
    u: &[f64],
    rho: f64,
) -> Result<f64> {
    let prox: f64 = alpha
        .iter()
        .zip(beta)
        .zip(u)
        .map(|((a, b), u)| (a - b + u).powi(2))
        .sum();
    Ok(data.loss(alpha)? + 0.5 * rho * prox)
}

pub fn composite_gradient<D: DataTerm + ?Sized>(
    data: &mut D,
    alpha: &[f64],
    beta: &[f64],
    u: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let (_, mut grad) = data.loss_grad(alpha)?;
    for (i, g) in grad.iter_mut().enumerate() {
        *g += rho * (alpha[i] - beta[i] + u[i]);
    }
    Ok(grad)
}

pub fn theta_step<D: DataTerm + ?Sized>(data: &mut D, state: &AdmmState, cfg: &AdmmConfig) -> Result<()> {
    data.theta_step(&state.alpha, cfg.inner_theta_epochs)
}

/// Plain gradient descent on the composite objective; no projection.
pub fn alpha_step<D: DataTerm + ?Sized>(data: &mut D, state: &AdmmState, cfg: &AdmmConfig) -> Result<Vec<f64>> {
    let mut alpha = state.alpha.clone();
    for _ in 0..cfg.inner_alpha_steps {
        let grad = composite_gradient(data, &alpha, &state.beta, &state.u, cfg.rho_admm)?;
        for (a, g) in alpha.iter_mut().zip(&grad) {
            *a -= cfg.alpha_lr * g;
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("coefficients during alpha step".into()));
        }
    }
    Ok(alpha)
}

/// Projection of `a + u` onto `[0, 1]^n`.
pub fn beta_step(alpha: &[f64], u: &[f64]) -> Vec<f64> {
    alpha.iter().zip(u).map(|(a, u)| (a + u).clamp(0.0, 1.0)).collect()
}

pub fn u_step(u: &[f64], alpha: &[f64], beta: &[f64], tau: f64) -> Vec<f64> {
    u.iter()
        .zip(alpha)
        .zip(beta)
        .map(|((u, a), b)| u + tau * (a - b))
        .collect()
}

/// One full cycle. Returns `true` once both residuals are below tolerance.
pub fn iterate<D: DataTerm + ?Sized>(data: &mut D, state: &mut AdmmState, cfg: &AdmmConfig) -> Result<bool> {
    theta_step(data, state, cfg)?;
    let alpha = alpha_step(data, state, cfg)?;
    let beta = beta_step(&alpha, &state.u);
    let u = u_step(&state.u, &alpha, &beta, cfg.tau);
    let primal = norm(alpha.iter().zip(&beta).map(|(a, b)| a - b));
    let dual = cfg.rho_admm * norm(beta.iter().zip(&state.beta).map(|(b, prev)| b - prev));
    let loss = data.loss(&alpha)?;
    let objective = augmented_lagrangian(loss, &alpha, &beta, &u, cfg.rho_admm);
    if !objective.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective {objective} at iteration {}",
            state.history.len() + 1
        )));
    }
    state.history.push(HistoryRecord {
        iter: state.history.len() + 1,
        objective,
        primal_residual: primal,
        dual_residual: dual,
        alpha_min: alpha.iter().copied().fold(f64::INFINITY, f64::min),
        alpha_max: alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    state.alpha = alpha;
    state.beta = beta;
    state.u = u;
    Ok(primal < cfg.tol_primal && dual < cfg.tol_dual)
}

/// Runs up to `outer_iters` cycles from `alpha = beta = alpha_init`, `u = 0`.
pub fn run<D: DataTerm + ?Sized>(data: &mut D, cfg: &AdmmConfig) -> Result<AdmmState> {
    cfg.validate()?;
    let mut state = AdmmState::new(data.dim(), cfg.alpha_init);
    for _ in 0..cfg.outer_iters {
        if iterate(data, &mut state, cfg)? {
            break;
        }
    }
    Ok(state)
}

/// Number of coefficients for a dataset: `T` per-time weights for univariate
/// samples, `p` per-dimension weights for multivariate ones.
pub fn coefficient_dim(data: &LabeledDataset) -> usize {
    if data.is_multivariate() {
        data.dims()
    } else {
        data.series_len()
    }
}

/// Smooth image of sample `i` under `alpha`.
pub fn sample_image(data: &LabeledDataset, i: usize, alpha: &[f64], cfg: &ImagingConfig) -> Result<RecurrenceImage> {
    match &data.samples {
        Samples::Univariate(s) => {
            let c = combine(s[i].lower(), s[i].upper(), alpha)?;
            rp(&c, &cfg.emb, &cfg.thr, Some(cfg.nu))
        }
        Samples::Multivariate(s) => {
            let c = combine_mv(s[i].lower(), s[i].upper(), alpha)?;
            jrp(&c, &cfg.emb, &vec![cfg.thr; c.len()], Some(cfg.nu))
        }
    }
}

pub fn sample_image_with_jacobian(
    data: &LabeledDataset,
    i: usize,
    alpha: &[f64],
    cfg: &ImagingConfig,
) -> Result<(RecurrenceImage, ImageGradient)> {
    match &data.samples {
        Samples::Univariate(s) => smooth_rp_with_jacobian(&s[i], alpha, &cfg.emb, &cfg.thr, cfg.nu),
        Samples::Multivariate(s) => {
            smooth_jrp_with_jacobian(&s[i], alpha, &cfg.emb, &vec![cfg.thr; s[i].dims()], cfg.nu)
        }
    }
}

pub fn dataset_images(data: &LabeledDataset, alpha: &[f64], cfg: &ImagingConfig) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .map(|i| sample_image(data, i, alpha, cfg).map(RecurrenceImage::into_values))
        .collect()
}

fn alpha_key(alpha: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for a in alpha {
        a.to_bits().hash(&mut h);
    }
    h.finish()
}

/// The CNN empirical risk over a labeled interval dataset.
#[derive(Debug, Clone)]
pub struct CnnObjective<'a> {
    pub model: CnnModel,
    data: &'a LabeledDataset,
    labels: Vec<usize>,
    imaging: ImagingConfig,
    train: TrainConfig,
    rng: ChaCha8Rng,
    cache: Option<(u64, Vec<Vec<f64>>)>,
}

impl<'a> CnnObjective<'a> {
    /// Fresh network seeded from `train.seed`.
    pub fn new(
        data: &'a LabeledDataset,
        arch: &Architecture,
        imaging: ImagingConfig,
        train: TrainConfig,
    ) -> Result<Self> {
        imaging.validate()?;
        train.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidConfig("empty training set".into()));
        }
        data.validate()?;
        let size = imaging.emb.trajectories(data.series_len())?;
        let model = CnnModel::new(arch, size, data.classes, &mut stream_rng(train.seed, INIT_STREAM))?;
        Ok(Self::with_model(data, model, imaging, train))
    }

    pub fn with_model(data: &'a LabeledDataset, model: CnnModel, imaging: ImagingConfig, train: TrainConfig) -> Self {
        Self {
            model,
            labels: data.labels(),
            data,
            imaging,
            rng: stream_rng(train.seed, SGD_STREAM),
            train,
            cache: None,
        }
    }

    /// Images for `alpha`, recomputed only when `alpha` changes.
    pub fn images(&mut self, alpha: &[f64]) -> Result<&[Vec<f64>]> {
        let key = alpha_key(alpha);
        if self.cache.as_ref().map(|(k, _)| *k) != Some(key) {
            let images = dataset_images(self.data, alpha, &self.imaging)?;
            self.cache = Some((key, images));
        }
        Ok(&self.cache.as_ref().expect("filled above").1)
    }

    /// Per-sample activation patterns of the network under `alpha`.
    pub fn activation_patterns(&mut self, alpha: &[f64]) -> Result<Vec<Vec<u64>>> {
        self.images(alpha)?;
        let images = &self.cache.as_ref().expect("filled above").1;
        images
            .iter()
            .map(|img| self.model.forward(img).map(|(_, cache)| cache.activation_pattern(&self.model)))
            .collect()
    }

    pub fn into_model(self) -> CnnModel {
        self.model
    }
}

impl DataTerm for CnnObjective<'_> {
    fn dim(&self) -> usize {
        coefficient_dim(self.data)
    }

    fn theta_step(&mut self, alpha: &[f64], epochs: usize) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        self.images(alpha)?;
        let Self {
            model,
            labels,
            train,
            rng,
            cache,
            ..
        } = self;
        let images = &cache.as_ref().expect("filled above").1;
        for _ in 0..epochs {
            sgd_epoch(model, images, labels, train, rng)?;
        }
        Ok(())
    }

    fn loss(&mut self, alpha: &[f64]) -> Result<f64> {
        self.images(alpha)?;
        let images = &self.cache.as_ref().expect("filled above").1;
        let mut total = 0.0;
        for (img, &y) in images.iter().zip(&self.labels) {
            let (logits, _) = self.model.forward(img)?;
            total += loss_and_grad(&logits, y, &self.train.loss).0;
        }
        Ok(total / images.len() as f64)
    }

    fn loss_grad(&mut self, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.data.len();
        let mut total = 0.0;
        let mut grad = vec![0.0; alpha.len()];
        let mut images = Vec::with_capacity(n);
        for i in 0..n {
            let (image, jac) = sample_image_with_jacobian(self.data, i, alpha, &self.imaging)?;
            let (value, _, dimage) = sample_gradients(&self.model, image.values(), self.labels[i], &self.train.loss, true)?;
            total += value;
            let g = backprop_to_alpha(&dimage.expect("input gradient requested"), &jac)?;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            images.push(image.into_values());
        }
        self.cache = Some((alpha_key(alpha), images));
        let scale = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grad))
    }
}

/// Result of [`train`]. `beta` holds the reported (feasible) coefficients.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CnnModel,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub history: Vec<HistoryRecord>,
    /// Training risk of the final network at `beta`.
    pub train_loss: f64,
}

/// Trains a fresh network and coefficients on `data`. `net.seed` seeds both the
/// initialisation and the SGD shuffling.
pub fn train(
    data: &LabeledDataset,
    imaging: &ImagingConfig,
    arch: &Architecture,
    net: &TrainConfig,
    cfg: &AdmmConfig,
) -> Result<TrainOutcome> {
    let mut objective = CnnObjective::new(data, arch, *imaging, net.clone())?;
    let state = run(&mut objective, cfg)?;
    let train_loss = objective.loss(&state.beta)?;
    Ok(TrainOutcome {
        model: objective.into_model(),
        alpha: state.alpha,
        beta: state.beta,
        u: state.u,
        history: state.history,
        train_loss,
    })
}
