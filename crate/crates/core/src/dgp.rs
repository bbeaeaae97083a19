//! Seeded generators for the three synthetic center/range processes and the
//! labeled datasets built from them.
//!
//! Every process produces a bivariate point series `x_t = (center_t, range_t)`
//! driven by residuals `eps_t ~ N(0, Sigma)` with
//! `Sigma = [[1, rho/2], [rho/2, 1/4]]`:
//!
//! * DGP1: `x_t = sum_{l>=1} pi_l * PHI * z_{t,l} + eps_t`, `pi_l = l^-2 / sqrt(3)`,
//!   `z_{t,1} = (1, 1)`, `z_{t,l} ~ N(0, Sigma)` for `l >= 2`; truncated after `series_terms` terms.
//! * DGP2: `x_t = PHI * x_{t-1} + eps_t - GAMMA * eps_{t-1}`, started from zero and burned in.
//! * DGP3: `x_t = eps_t - GAMMA * eps_{t-1}`.
//!
//! Bounds are rebuilt as `center -/+ max(range, 0)`.
//!
//! Randomness: each sample owns a ChaCha8 stream. The generator is seeded with
//! the dataset seed and the stream number is the sample index (univariate) or
//! `sample_index * p + dim` (multivariate), so samples are independent of
//! generation order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{from_center_range, CenterRange, IntervalSeries, MvIntervalSeries};

pub const PHI: [[f64; 2]; 2] = [[0.2, -0.1], [0.1, 0.2]];
pub const GAMMA: [[f64; 2]; 2] = [[-0.6, 0.3], [0.3, 0.6]];

pub const DEFAULT_SERIES_TERMS: usize = 100;
pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_RHOS: [f64; 5] = [-0.9, -0.5, 0.0, 0.3, 0.7];

type Pair = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpKind {
    #[serde(rename = "dgp1")]
    Dgp1,
    #[serde(rename = "dgp2")]
    Dgp2,
    #[serde(rename = "dgp3")]
    Dgp3,
}

impl DgpKind {
    pub const ALL: [DgpKind; 3] = [DgpKind::Dgp1, DgpKind::Dgp2, DgpKind::Dgp3];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Dgp1 => "DGP1",
            DgpKind::Dgp2 => "DGP2",
            DgpKind::Dgp3 => "DGP3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// One class per process, one dimension per correlation.
    #[serde(rename = "c1")]
    C1,
    /// One class per correlation, one dimension per process.
    #[serde(rename = "c2")]
    C2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub rho: f64,
    pub length: usize,
    pub series_terms: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, rho: f64, length: usize, seed: u64) -> Self {
        Self {
            kind,
            rho,
            length,
            series_terms: DEFAULT_SERIES_TERMS,
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidConfig(format!(
                "series length {} < 2",
                self.length
            )));
        }
        if self.series_terms < 1 {
            return Err(Error::InvalidConfig("series_terms must be >= 1".into()));
        }
        check_rho(self.rho)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(())
}

/// Residual covariance `[[1, rho/2], [rho/2, 1/4]]`.
pub fn covariance(rho: f64) -> [[f64; 2]; 2] {
    [[1.0, rho / 2.0], [rho / 2.0, 0.25]]
}

/// Lower Cholesky factor of [`covariance`]. At `|rho| = 1` the second diagonal
/// entry is zero and the factor degenerates to the rank-1 construction.
fn cholesky(rho: f64) -> [[f64; 2]; 2] {
    let l22 = ((1.0 - rho * rho).max(0.0)).sqrt() / 2.0;
    [[1.0, 0.0], [rho / 2.0, l22]]
}

/// The sum weight `pi_l = l^-2 / sqrt(3)` (1-based `l`).
pub fn pi_weight(l: usize) -> f64 {
    1.0 / ((l * l) as f64 * 3f64.sqrt())
}

/// Seeded generator for stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_pair<R: Rng + ?Sized>(chol: &[[f64; 2]; 2], rng: &mut R) -> Pair {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    [chol[0][0] * z1, chol[1][0] * z1 + chol[1][1] * z2]
}

/// `n` i.i.d. draws of `(eps_c, eps_r) ~ N(0, Sigma(rho))`.
pub fn sample_residuals<R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> Result<Vec<Pair>> {
    check_rho(rho)?;
    let chol = cholesky(rho);
    Ok((0..n).map(|_| draw_pair(&chol, rng)).collect())
}

fn mat_vec(m: &[[f64; 2]; 2], v: Pair) -> Pair {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// DGP1 from explicit draws: `shocks[t]` holds `z_{t,2}, z_{t,3}, ...`.
pub fn dgp1_path(residuals: &[Pair], shocks: &[Vec<Pair>]) -> Vec<Pair> {
    residuals
        .iter()
        .zip(shocks)
        .map(|(eps, z)| {
            let mut w = [pi_weight(1), pi_weight(1)];
            for (i, zl) in z.iter().enumerate() {
                let pi = pi_weight(i + 2);
                w[0] += pi * zl[0];
                w[1] += pi * zl[1];
            }
            let x = mat_vec(&PHI, w);
            [x[0] + eps[0], x[1] + eps[1]]
        })
        .collect()
}

/// VARMA(1,1) recursion from `x_0 = 0`. `residuals[0]` is `eps_0`; the result
/// holds `x_1 .. x_n` for `n = residuals.len() - 1`.
pub fn dgp2_path(residuals: &[Pair]) -> Vec<Pair> {
    let mut x = [0.0, 0.0];
    residuals
        .windows(2)
        .map(|w| {
            let ar = mat_vec(&PHI, x);
            let ma = mat_vec(&GAMMA, w[0]);
            x = [ar[0] + w[1][0] - ma[0], ar[1] + w[1][1] - ma[1]];
            x
        })
        .collect()
}

/// MA(1) recursion; `residuals[0]` is `eps_0`, result holds `x_1 .. x_n`.
pub fn dgp3_path(residuals: &[Pair]) -> Vec<Pair> {
    residuals
        .windows(2)
        .map(|w| {
            let ma = mat_vec(&GAMMA, w[0]);
            [w[1][0] - ma[0], w[1][1] - ma[1]]
        })
        .collect()
}

fn simulate_path<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Vec<Pair>> {
    spec.validate()?;
    let chol = cholesky(spec.rho);
    let path = match spec.kind {
        DgpKind::Dgp1 => {
            let mut residuals = Vec::with_capacity(spec.length);
            let mut shocks = Vec::with_capacity(spec.length);
            for _ in 0..spec.length {
                residuals.push(draw_pair(&chol, rng));
                shocks.push(
                    (1..spec.series_terms)
                        .map(|_| draw_pair(&chol, rng))
                        .collect::<Vec<_>>(),
                );
            }
            dgp1_path(&residuals, &shocks)
        }
        DgpKind::Dgp2 => {
            let mut residuals = vec![[0.0, 0.0]];
            residuals.extend((0..spec.burn_in + spec.length).map(|_| draw_pair(&chol, rng)));
            dgp2_path(&residuals).split_off(spec.burn_in)
        }
        DgpKind::Dgp3 => {
            let residuals: Vec<Pair> = (0..=spec.length).map(|_| draw_pair(&chol, rng)).collect();
            dgp3_path(&residuals)
        }
    };
    Ok(path)
}

fn to_series(path: Vec<Pair>) -> Result<IntervalSeries> {
    let (center, range) = path.into_iter().map(|p| (p[0], p[1])).unzip();
    from_center_range(&CenterRange { center, range }, true)
}

/// Generates one series of `spec.kind` using the caller's generator.
pub fn generate<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<IntervalSeries> {
    to_series(simulate_path(spec, rng)?)
}

fn generate_kind(spec: &DgpSpec, kind: DgpKind) -> Result<IntervalSeries> {
    if spec.kind != kind {
        return Err(Error::InvalidConfig(format!(
            "spec is for {}, not {}",
            spec.kind.name(),
            kind.name()
        )));
    }
    generate(spec, &mut stream_rng(spec.seed, 0))
}

pub fn gen_dgp1(spec: &DgpSpec) -> Result<IntervalSeries> {
    generate_kind(spec, DgpKind::Dgp1)
}

pub fn gen_dgp2(spec: &DgpSpec) -> Result<IntervalSeries> {
    generate_kind(spec, DgpKind::Dgp2)
}

pub fn gen_dgp3(spec: &DgpSpec) -> Result<IntervalSeries> {
    generate_kind(spec, DgpKind::Dgp3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Samples {
    Univariate(Vec<IntervalSeries>),
    Multivariate(Vec<MvIntervalSeries>),
}

/// Labeled interval-valued samples. Labels live on the samples themselves and
/// are always `Some` and `< classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Samples,
    pub classes: usize,
    /// Human-readable name of each class, indexed by label.
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(samples: Samples, classes: usize, class_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            samples,
            classes,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() != self.classes {
            return Err(Error::DimMismatch {
                expected: self.classes,
                got: self.class_names.len(),
            });
        }
        let (len, dims) = (self.series_len(), self.dims());
        for i in 0..self.len() {
            let label = self.label(i).ok_or_else(|| {
                Error::InvalidConfig(format!("sample {i} has no label"))
            })?;
            if label >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.classes,
                });
            }
            let (l, p) = match &self.samples {
                Samples::Univariate(s) => (s[i].len(), 1),
                Samples::Multivariate(s) => (s[i].len(), s[i].dims()),
            };
            if l != len {
                return Err(Error::LengthMismatch { expected: len, got: l });
            }
            if p != dims {
                return Err(Error::DimMismatch { expected: dims, got: p });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Univariate(s) => s.len(),
            Samples::Multivariate(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(self.samples, Samples::Multivariate(_))
    }

    /// Series length `T` (0 for an empty dataset).
    pub fn series_len(&self) -> usize {
        match &self.samples {
            Samples::Univariate(s) => s.first().map_or(0, |s| s.len()),
            Samples::Multivariate(s) => s.first().map_or(0, |s| s.len()),
        }
    }

    /// Dimension `p`; 1 for univariate data.
    pub fn dims(&self) -> usize {
        match &self.samples {
            Samples::Univariate(_) => 1,
            Samples::Multivariate(s) => s.first().map_or(0, |s| s.dims()),
        }
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        match &self.samples {
            Samples::Univariate(s) => s[i].label(),
            Samples::Multivariate(s) => s[i].label(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i).unwrap_or(0)).collect()
    }

    /// A new dataset holding `indices` in the given order, same class map.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let samples = match &self.samples {
            Samples::Univariate(s) => Samples::Univariate(indices.iter().map(|&i| s[i].clone()).collect()),
            Samples::Multivariate(s) => {
                Samples::Multivariate(indices.iter().map(|&i| s[i].clone()).collect())
            }
        };
        Self {
            samples,
            classes: self.classes,
            class_names: self.class_names.clone(),
        }
    }
}

/// Truncation and burn-in used when simulating datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    pub series_terms: usize,
    pub burn_in: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            series_terms: DEFAULT_SERIES_TERMS,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

fn rho_name(rho: f64) -> String {
    format!("rho={rho}")
}

impl SimulationOptions {
    fn spec(&self, kind: DgpKind, rho: f64, length: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            kind,
            rho,
            length,
            series_terms: self.series_terms,
            burn_in: self.burn_in,
            seed,
        }
    }

    /// `per_class` univariate samples for each correlation in `rhos`; class `k` is `rhos[k]`.
    pub fn dataset(
        &self,
        kind: DgpKind,
        rhos: &[f64],
        per_class: usize,
        length: usize,
        seed: u64,
    ) -> Result<LabeledDataset> {
        check_grid(rhos, per_class)?;
        let mut samples = Vec::with_capacity(rhos.len() * per_class);
        for (label, &rho) in rhos.iter().enumerate() {
            let spec = self.spec(kind, rho, length, seed);
            for n in 0..per_class {
                let index = (label * per_class + n) as u64;
                let s = generate(&spec, &mut stream_rng(seed, index))?;
                samples.push(s.with_label(Some(label)));
            }
        }
        LabeledDataset::new(
            Samples::Univariate(samples),
            rhos.len(),
            rhos.iter().map(|&r| rho_name(r)).collect(),
        )
    }

    /// Multivariate datasets composed from the three processes.
    pub fn multivariate(
        &self,
        scenario: Scenario,
        rhos: &[f64],
        per_class: usize,
        length: usize,
        seed: u64,
    ) -> Result<LabeledDataset> {
        check_grid(rhos, per_class)?;
        // (class label, per-dimension (kind, rho)) for every class.
        let classes: Vec<(String, Vec<(DgpKind, f64)>)> = match scenario {
            Scenario::C1 => DgpKind::ALL
                .iter()
                .map(|&k| (k.name().to_string(), rhos.iter().map(|&r| (k, r)).collect()))
                .collect(),
            Scenario::C2 => rhos
                .iter()
                .map(|&r| (rho_name(r), DgpKind::ALL.iter().map(|&k| (k, r)).collect()))
                .collect(),
        };
        let mut samples = Vec::with_capacity(classes.len() * per_class);
        for (label, (_, dims)) in classes.iter().enumerate() {
            let p = dims.len() as u64;
            for n in 0..per_class {
                let index = (label * per_class + n) as u64;
                let series = dims
                    .iter()
                    .enumerate()
                    .map(|(j, &(kind, rho))| {
                        let spec = self.spec(kind, rho, length, seed);
                        generate(&spec, &mut stream_rng(seed, index * p + j as u64))
                    })
                    .collect::<Result<Vec<_>>>()?;
                samples.push(MvIntervalSeries::from_dims(series, Some(label))?);
            }
        }
        let names = classes.into_iter().map(|(name, _)| name).collect::<Vec<_>>();
        LabeledDataset::new(Samples::Multivariate(samples), names.len(), names)
    }
}

fn check_grid(rhos: &[f64], per_class: usize) -> Result<()> {
    if rhos.is_empty() {
        return Err(Error::InvalidConfig("rhos must be nonempty".into()));
    }
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be >= 1".into()));
    }
    rhos.iter().try_for_each(|&r| check_rho(r))
}

pub fn build_dataset(
    kind: DgpKind,
    rhos: &[f64],
    per_class: usize,
    length: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    SimulationOptions::default().dataset(kind, rhos, per_class, length, seed)
}

pub fn build_multivariate(
    scenario: Scenario,
    rhos: &[f64],
    per_class: usize,
    length: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    SimulationOptions::default().multivariate(scenario, rhos, per_class, length, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::to_center_range;

    fn sample_corr(pairs: &[Pair]) -> f64 {
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p[1]).sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for p in pairs {
            sxy += (p[0] - mx) * (p[1] - my);
            sxx += (p[0] - mx).powi(2);
            syy += (p[1] - my).powi(2);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn covariance_matches_definition() {
        assert_eq!(covariance(0.7)[0][1], 0.35);
        assert_eq!(covariance(0.7)[1][0], 0.35);
        // L L^T reproduces Sigma.
        for rho in [-1.0, -0.5, 0.0, 0.3, 0.9, 1.0] {
            let l = cholesky(rho);
            let s = covariance(rho);
            assert!((l[1][0] * l[0][0] - s[1][0]).abs() < 1e-15);
            assert!((l[1][0].powi(2) + l[1][1].powi(2) - s[1][1]).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_correlation_monte_carlo() {
        for rho in [0.0, 0.9, -0.5] {
            let mut rng = stream_rng(42, 0);
            let eps = sample_residuals(rho, 100_000, &mut rng).unwrap();
            // corr = (rho/2) / (1 * 1/2) = rho
            let r = sample_corr(&eps);
            assert!((r - rho).abs() < 0.02, "rho {rho}: sample corr {r}");
        }
        assert!(sample_residuals(1.5, 1, &mut stream_rng(0, 0)).is_err());
        // Boundary correlation uses the rank-1 factor.
        let eps = sample_residuals(1.0, 10, &mut stream_rng(0, 0)).unwrap();
        assert!(eps.iter().all(|p| (p[1] - p[0] / 2.0).abs() < 1e-15));
    }

    #[test]
    fn pi_weights() {
        assert!((pi_weight(1) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((pi_weight(2) - 1.0 / (4.0 * 3f64.sqrt())).abs() < 1e-15);
        let tail: f64 = (51..2_000_000).map(pi_weight).sum();
        assert!(tail < 0.0116, "tail {tail}");
        assert!(tail < 1.0 / (50.0 * 3f64.sqrt()));
    }

    #[test]
    fn dgp1_first_term_only() {
        let eps = vec![[0.0, 0.0]; 5];
        let shocks = vec![Vec::new(); 5];
        let x = dgp1_path(&eps, &shocks);
        let s3 = 3f64.sqrt();
        for p in x {
            assert!((p[0] - 0.1 / s3).abs() < 1e-15);
            assert!((p[1] - 0.3 / s3).abs() < 1e-15);
        }
    }

    #[test]
    fn dgp2_examples() {
        assert!(dgp2_path(&[[0.0, 0.0]; 10]).iter().all(|p| *p == [0.0, 0.0]));
        assert_eq!(dgp2_path(&[[0.0, 0.0], [1.0, 1.0]]), vec![[1.0, 1.0]]);

        // Eigenvalues of PHI from trace and determinant: tr^2 - 4 det < 0 gives a complex pair.
        let tr = PHI[0][0] + PHI[1][1];
        let det = PHI[0][0] * PHI[1][1] - PHI[0][1] * PHI[1][0];
        let disc = tr * tr - 4.0 * det;
        assert!(disc < 0.0);
        assert!((tr / 2.0 - 0.2).abs() < 1e-15);
        assert!(((-disc).sqrt() / 2.0 - 0.1).abs() < 1e-12);
        let modulus = det.sqrt();
        assert!((modulus - 0.05f64.sqrt()).abs() < 1e-15);
        assert!(modulus < 1.0);
    }

    #[test]
    fn dgp3_examples() {
        assert!(dgp3_path(&vec![[0.0, 0.0]; 4]).iter().all(|p| *p == [0.0, 0.0]));
        let mut eps = vec![[0.0, 0.0]];
        eps.extend(vec![[1.0, 0.0]; 4]);
        let x = dgp3_path(&eps);
        assert_eq!(x[0], [1.0, 0.0]);
        for p in &x[1..] {
            assert!((p[0] - 1.6).abs() < 1e-15 && (p[1] + 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn dgp3_lag_two_autocovariance_vanishes() {
        let spec = DgpSpec::new(DgpKind::Dgp3, 0.3, 100_000, 7);
        let c = to_center_range(&gen_dgp3(&spec).unwrap()).center;
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let acov2 = c
            .windows(3)
            .map(|w| (w[0] - mean) * (w[2] - mean))
            .sum::<f64>()
            / c.len() as f64;
        assert!(acov2.abs() < 0.02, "lag-2 autocovariance {acov2}");
    }

    #[test]
    fn dgp2_variance_stabilizes() {
        let spec = DgpSpec::new(DgpKind::Dgp2, 0.3, 10_000, 11);
        let c = to_center_range(&gen_dgp2(&spec).unwrap()).center;
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
        };
        let (a, b) = c.split_at(c.len() / 2);
        let ratio = var(a) / var(b);
        assert!((0.8..1.2).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn generated_series_are_valid_intervals() {
        for kind in DgpKind::ALL {
            let s = generate(&DgpSpec::new(kind, 0.7, 60, 3), &mut stream_rng(3, 0)).unwrap();
            assert_eq!(s.len(), 60);
            assert!(s.lower().iter().zip(s.upper()).all(|(l, u)| l <= u));
        }
        assert!(gen_dgp2(&DgpSpec::new(DgpKind::Dgp1, 0.0, 10, 0)).is_err());
    }

    #[test]
    fn dataset_shapes() {
        let ds = build_dataset(DgpKind::Dgp2, &DEFAULT_RHOS, 20, 30, 1).unwrap();
        assert_eq!((ds.len(), ds.classes, ds.series_len()), (100, 5, 30));
        let ds = build_dataset(DgpKind::Dgp1, &[0.0], 1, 10, 1).unwrap();
        assert_eq!((ds.len(), ds.classes, ds.label(0)), (1, 1, Some(0)));

        let c1 = build_multivariate(Scenario::C1, &DEFAULT_RHOS, 2, 20, 5).unwrap();
        assert_eq!((c1.classes, c1.dims(), c1.len()), (3, 5, 6));
        let c2 = build_multivariate(Scenario::C2, &DEFAULT_RHOS, 2, 20, 5).unwrap();
        assert_eq!((c2.classes, c2.dims(), c2.len()), (5, 3, 10));
        let c2 = build_multivariate(Scenario::C2, &[0.0], 1, 20, 5).unwrap();
        assert_eq!((c2.classes, c2.dims()), (1, 3));
    }

    #[test]
    fn full_grid_counts() {
        let opts = SimulationOptions {
            series_terms: 2,
            burn_in: 10,
        };
        let ds = opts.dataset(DgpKind::Dgp3, &DEFAULT_RHOS, 500, 150, 0).unwrap();
        assert_eq!((ds.len(), ds.classes), (2500, 5));
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        use std::collections::HashSet;
        let a = build_dataset(DgpKind::Dgp1, &[-0.9, 0.9], 5, 20, 10).unwrap();
        let b = build_dataset(DgpKind::Dgp1, &[-0.9, 0.9], 5, 20, 10).unwrap();
        let c = build_dataset(DgpKind::Dgp1, &[-0.9, 0.9], 5, 20, 11).unwrap();
        assert_eq!(a, b);
        let bits = |ds: &LabeledDataset| -> HashSet<u64> {
            match &ds.samples {
                Samples::Univariate(s) => s
                    .iter()
                    .flat_map(|s| s.lower().iter().chain(s.upper()))
                    .map(|v| v.to_bits())
                    .collect(),
                Samples::Multivariate(_) => unreachable!(),
            }
        };
        assert!(bits(&a).is_disjoint(&bits(&c)));
    }
}
