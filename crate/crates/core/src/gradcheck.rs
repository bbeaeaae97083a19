//! Central finite-difference checks of every analytic derivative in the crate.
//!
//! Three suites run on random instances:
//!
//! * `image`: `dR/da` of smooth RP and JRP images against differences of images
//!   recomputed from scratch through [`crate::imaging`].
//! * `net`: every CNN parameter gradient and `dL/dimage`.
//! * `composite`: `d/da` of `L(a) + rho/2 |a - b + u|^2` through images and network.
//!
//! Coordinates whose perturbation crosses a kink (a ReLU sign flip, a change of
//! pooling winner, or a near-zero trajectory distance) are skipped and counted.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admm::{composite_gradient, composite_objective, CnnObjective};
use crate::dgp::{stream_rng, LabeledDataset, Samples};
use crate::error::Result;
use crate::gradients::{smooth_jrp_with_jacobian, smooth_rp_with_jacobian, ImageGradient};
use crate::imaging::{distances, DistanceMatrix, EmbeddingSpec, ImagingConfig, ThresholdSpec};
use crate::interval::{combine, IntervalSeries, MvIntervalSeries};
use crate::net::{loss_and_grad, sample_gradients, Architecture, CnnModel, LayerSpec, LossKind, TrainConfig};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;
/// Distances below this are treated as sitting on the norm's kink at 0.
const KINK_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            max_rel_err: 0.0,
            checked: 0,
            skipped: 0,
        }
    }

    fn record(&mut self, analytic: f64, fd: f64) {
        self.checked += 1;
        let err = rel_err(analytic, fd);
        if err > self.max_rel_err || err.is_nan() {
            self.max_rel_err = err;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    pub suites: Vec<SuiteReport>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.suites.iter().map(|s| s.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.max_rel_err < self.tolerance && s.checked > 0)
    }
}

pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (fd.abs() + 1e-8)
}

/// A random imaging setup within the checked envelope: `T <= 20`,
/// `m in {1, 2, 3}`, `kappa in {1, 2}`, `nu in {1, 5, 10}`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub emb: EmbeddingSpec,
    pub nu: f64,
    pub eps: f64,
    pub len: usize,
    /// `None` for univariate instances, else `p = 3`.
    pub dims: Option<usize>,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let m = rng.random_range(1..=3);
        let kappa = rng.random_range(1..=2);
        // At least 6 trajectories so the composite check network has room for a 3x3 conv and a pool.
        let min_len = (m - 1) * kappa + 6;
        Self {
            emb: EmbeddingSpec { m, kappa },
            nu: [1.0, 5.0, 10.0][rng.random_range(0..3)],
            eps: rng.random_range(0.2..0.8) * (m as f64).sqrt(),
            len: rng.random_range(min_len..=20),
            dims: rng.random_bool(0.5).then_some(3),
        }
    }

    fn coeffs(&self) -> usize {
        self.dims.unwrap_or(self.len)
    }

    fn imaging(&self) -> ImagingConfig {
        ImagingConfig {
            emb: self.emb,
            thr: ThresholdSpec::Fixed(self.eps),
            nu: self.nu,
        }
    }
}

pub fn random_series(len: usize, rng: &mut ChaCha8Rng) -> IntervalSeries {
    let mut level = 0.0;
    let (mut lower, mut upper) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for _ in 0..len {
        level += rng.random_range(-0.6..0.6);
        let half = rng.random_range(0.05..0.6);
        lower.push(level - half);
        upper.push(level + half);
    }
    IntervalSeries::new(lower, upper, None).expect("lower < upper by construction")
}

fn random_dataset(inst: &Instance, samples: usize, classes: usize, rng: &mut ChaCha8Rng) -> LabeledDataset {
    let label = |i: usize| Some(i % classes);
    let samples = match inst.dims {
        None => Samples::Univariate(
            (0..samples)
                .map(|i| random_series(inst.len, rng).with_label(label(i)))
                .collect(),
        ),
        Some(p) => Samples::Multivariate(
            (0..samples)
                .map(|i| {
                    let dims = (0..p).map(|_| random_series(inst.len, rng)).collect();
                    MvIntervalSeries::from_dims(dims, label(i)).expect("equal lengths")
                })
                .collect(),
        ),
    };
    let names = (0..classes).map(|k| format!("class{k}")).collect();
    LabeledDataset::new(samples, classes, names).expect("labels in range")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth image entries from distances, kept as `(R, 1 - R)` so that both
/// tails can be differenced without cancellation.
fn smooth_pair(dist: &DistanceMatrix, eps: f64, nu: f64) -> Vec<(f64, f64)> {
    dist.values
        .iter()
        .map(|&d| {
            let z = 2.0 * nu * (eps - d);
            (sigmoid(z), sigmoid(-z))
        })
        .collect()
}

fn point_distances(s: &IntervalSeries, alpha: &[f64], emb: &EmbeddingSpec) -> Result<DistanceMatrix> {
    distances(&combine(s.lower(), s.upper(), alpha)?, emb)
}

/// Central difference of one image entry from its `(R, 1 - R)` pairs.
fn entry_fd(plus: (f64, f64), minus: (f64, f64), h: f64) -> f64 {
    if plus.0.max(minus.0) <= 0.5 {
        (plus.0 - minus.0) / (2.0 * h)
    } else {
        -(plus.1 - minus.1) / (2.0 * h)
    }
}

fn near_kink(dist: &[&DistanceMatrix], j: usize, k: usize) -> bool {
    j != k && dist.iter().any(|d| d.get(j, k) < KINK_DISTANCE)
}

fn dense(grad: &ImageGradient, t: usize) -> Vec<f64> {
    let n = grad.size();
    let mut out = vec![0.0; n * n];
    for e in grad.entries(t) {
        out[e.row as usize * n + e.col as usize] = e.value;
    }
    out
}

fn check_rp(inst: &Instance, rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    let s = random_series(inst.len, rng);
    let alpha: Vec<f64> = (0..inst.len).map(|_| rng.random_range(0.0..1.0)).collect();
    let thr = ThresholdSpec::Fixed(inst.eps);
    let (_, grad) = smooth_rp_with_jacobian(&s, &alpha, &inst.emb, &thr, inst.nu)?;
    let base = point_distances(&s, &alpha, &inst.emb)?;
    for t in 0..inst.len {
        let analytic = dense(&grad, t);
        let (mut ap, mut am) = (alpha.clone(), alpha.clone());
        ap[t] += STEP;
        am[t] -= STEP;
        let dp = point_distances(&s, &ap, &inst.emb)?;
        let dm = point_distances(&s, &am, &inst.emb)?;
        let (rp, rm) = (smooth_pair(&dp, inst.eps, inst.nu), smooth_pair(&dm, inst.eps, inst.nu));
        let n = base.size;
        for j in 0..n {
            for k in 0..n {
                if near_kink(&[&base, &dp, &dm], j, k) {
                    report.skipped += 1;
                    continue;
                }
                report.record(analytic[j * n + k], entry_fd(rp[j * n + k], rm[j * n + k], STEP));
            }
        }
    }
    Ok(())
}

fn check_jrp(inst: &Instance, p: usize, rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    let dims: Vec<IntervalSeries> = (0..p).map(|_| random_series(inst.len, rng)).collect();
    let mv = MvIntervalSeries::from_dims(dims.clone(), None)?;
    let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
    let thr = vec![ThresholdSpec::Fixed(inst.eps); p];
    let (_, grad) = smooth_jrp_with_jacobian(&mv, &alpha, &inst.emb, &thr, inst.nu)?;
    let per_dim = |i: usize, a: f64| {
        point_distances(&dims[i], &vec![a; inst.len], &inst.emb)
    };
    let base: Vec<DistanceMatrix> = (0..p).map(|i| per_dim(i, alpha[i])).collect::<Result<_>>()?;
    let values: Vec<Vec<(f64, f64)>> = base.iter().map(|d| smooth_pair(d, inst.eps, inst.nu)).collect();
    for t in 0..p {
        let analytic = dense(&grad, t);
        let dp = per_dim(t, alpha[t] + STEP)?;
        let dm = per_dim(t, alpha[t] - STEP)?;
        let (rp, rm) = (smooth_pair(&dp, inst.eps, inst.nu), smooth_pair(&dm, inst.eps, inst.nu));
        let n = dp.size;
        for j in 0..n {
            for k in 0..n {
                if near_kink(&[&base[t], &dp, &dm], j, k) {
                    report.skipped += 1;
                    continue;
                }
                // Only dimension t moves; the other factors are constants.
                let others: f64 = (0..p).filter(|&i| i != t).map(|i| values[i][j * n + k].0).product();
                let fd = others * entry_fd(rp[j * n + k], rm[j * n + k], STEP);
                report.record(analytic[j * n + k], fd);
            }
        }
    }
    Ok(())
}

fn random_arch(side: usize, rng: &mut ChaCha8Rng) -> Architecture {
    let mut layers = vec![
        LayerSpec::Conv {
            kernel: rng.random_range(2..=3),
            maps: rng.random_range(1..=3),
        },
        LayerSpec::Relu,
    ];
    if rng.random_bool(0.5) {
        layers.push(LayerSpec::MaxPool { window: 2 });
    }
    if side >= 10 && rng.random_bool(0.5) {
        layers.push(LayerSpec::Conv {
            kernel: 2,
            maps: rng.random_range(1..=3),
        });
        layers.push(LayerSpec::Relu);
    }
    Architecture(layers)
}

fn check_net(rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    let side = rng.random_range(6..=12);
    let classes = rng.random_range(2..=4);
    let arch = random_arch(side, rng);
    let mut model = CnnModel::new(&arch, side, classes, rng)?;
    let image: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
    let label = rng.random_range(0..classes);
    let loss = LossKind::CrossEntropy;
    let eval = |m: &CnnModel, img: &[f64]| -> Result<(f64, Vec<u64>)> {
        let (logits, cache) = m.forward(img)?;
        Ok((loss_and_grad(&logits, label, &loss).0, cache.activation_pattern(m)))
    };
    let (_, grads, dimage) = sample_gradients(&model, &image, label, &loss, true)?;
    let analytic: Vec<f64> = grads.iter().copied().collect();
    let mut index = 0;
    for b in 0..model.parameters().count() {
        let len = model.parameters().nth(b).map_or(0, <[f64]>::len);
        for i in 0..len {
            let orig = model.parameters().nth(b).expect("buffer")[i];
            let set = |m: &mut CnnModel, v: f64| m.parameters_mut().nth(b).expect("buffer")[i] = v;
            set(&mut model, orig + STEP);
            let (up, pu) = eval(&model, &image)?;
            set(&mut model, orig - STEP);
            let (down, pd) = eval(&model, &image)?;
            set(&mut model, orig);
            if pu == pd {
                report.record(analytic[index], (up - down) / (2.0 * STEP));
            } else {
                report.skipped += 1;
            }
            index += 1;
        }
    }
    let dimage = dimage.expect("input gradient requested");
    let mut img = image.clone();
    for p in 0..img.len() {
        img[p] = image[p] + STEP;
        let (up, pu) = eval(&model, &img)?;
        img[p] = image[p] - STEP;
        let (down, pd) = eval(&model, &img)?;
        img[p] = image[p];
        if pu == pd {
            report.record(dimage[p], (up - down) / (2.0 * STEP));
        } else {
            report.skipped += 1;
        }
    }
    Ok(())
}

fn min_distance(data: &LabeledDataset, alpha: &[f64], emb: &EmbeddingSpec) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut scan = |d: DistanceMatrix| best = d.off_diagonal().into_iter().fold(best, f64::min);
    match &data.samples {
        Samples::Univariate(s) => {
            for series in s {
                scan(point_distances(series, alpha, emb)?);
            }
        }
        Samples::Multivariate(s) => {
            for series in s {
                for (i, &a) in alpha.iter().enumerate() {
                    scan(point_distances(&series.dim(i), &vec![a; series.len()], emb)?);
                }
            }
        }
    }
    Ok(best)
}

fn check_composite(inst: &Instance, rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    let data = random_dataset(inst, 4, 2, rng);
    let arch = Architecture(vec![
        LayerSpec::Conv { kernel: 3, maps: 2 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2 },
    ]);
    let train = TrainConfig {
        seed: rng.random(),
        ..TrainConfig::default()
    };
    let mut obj = CnnObjective::new(&data, &arch, inst.imaging(), train)?;
    let n = inst.coeffs();
    let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
    let rho = rng.random_range(0.5..2.0);
    let grad = composite_gradient(&mut obj, &alpha, &beta, &u, rho)?;
    for t in 0..n {
        let (mut ap, mut am) = (alpha.clone(), alpha.clone());
        ap[t] += STEP;
        am[t] -= STEP;
        let kink = min_distance(&data, &ap, &inst.emb)?.min(min_distance(&data, &am, &inst.emb)?) < KINK_DISTANCE
            || obj.activation_patterns(&ap)? != obj.activation_patterns(&am)?;
        if kink {
            report.skipped += 1;
            continue;
        }
        let up = composite_objective(&mut obj, &ap, &beta, &u, rho)?;
        let down = composite_objective(&mut obj, &am, &beta, &u, rho)?;
        report.record(grad[t], (up - down) / (2.0 * STEP));
    }
    Ok(())
}

/// Runs all suites on `trials` random instances derived from `seed`.
pub fn run(seed: u64, trials: usize) -> Result<GradcheckReport> {
    let mut image = SuiteReport::new("image");
    let mut net = SuiteReport::new("net");
    let mut composite = SuiteReport::new("composite");
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial as u64);
        let inst = Instance::random(&mut rng);
        match inst.dims {
            None => check_rp(&inst, &mut rng, &mut image)?,
            Some(p) => check_jrp(&inst, p, &mut rng, &mut image)?,
        }
        check_net(&mut rng, &mut net)?;
        check_composite(&inst, &mut rng, &mut composite)?;
    }
    Ok(GradcheckReport {
        seed,
        trials,
        tolerance: DEFAULT_TOLERANCE,
        suites: vec![image, net, composite],
    })
}
