//! Time-delay embedding and (smooth) recurrence plots.
//!
//! For a point series `c` the embedding with length `m` and delay `kappa` yields
//! `S = T - (m - 1) * kappa` trajectories `(c[j], c[j + kappa], ..., c[j + (m - 1) * kappa])`.
//! The recurrence plot thresholds their pairwise Euclidean distances:
//! `R(j, k) = H(eps - d(j, k))` with `H(0) = 1`, or the smooth surrogate
//! `(1 + tanh(nu * (eps - d(j, k)))) / 2`. The joint recurrence plot of a
//! multivariate series is the elementwise product of its per-dimension plots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    /// Trajectory length.
    pub m: usize,
    /// Time delay.
    pub kappa: usize,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self { m: 1, kappa: 1 }
    }
}

impl EmbeddingSpec {
    pub fn new(m: usize, kappa: usize) -> Result<Self> {
        if m == 0 || kappa == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding needs m >= 1 and kappa >= 1, got m={m} kappa={kappa}"
            )));
        }
        Ok(Self { m, kappa })
    }

    /// Number of trajectories `S` for a series of length `len`.
    pub fn trajectories(&self, len: usize) -> Result<usize> {
        let s = len as i64 - (self.m as i64 - 1) * self.kappa as i64;
        if self.m == 0 || self.kappa == 0 || s < 2 {
            return Err(Error::SeriesTooShort {
                len,
                trajectories: s,
            });
        }
        Ok(s as usize)
    }

    /// Series index of slot `s` of trajectory `j` (both 0-based).
    #[inline]
    pub fn index(&self, j: usize, s: usize) -> usize {
        j + s * self.kappa
    }
}

/// How the recurrence threshold `eps` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    Fixed(f64),
    /// The `q`-quantile of the off-diagonal trajectory distances.
    Quantile(f64),
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Fixed(std::f64::consts::PI / 18.0)
    }
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdSpec::Fixed(eps) if !(eps > 0.0 && eps.is_finite()) => Err(
                Error::InvalidConfig(format!("fixed threshold must be positive, got {eps}")),
            ),
            ThresholdSpec::Quantile(q) if !(q > 0.0 && q < 1.0) => Err(Error::InvalidConfig(
                format!("quantile must lie in (0, 1), got {q}"),
            )),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for ThresholdSpec {
    type Err = Error;

    /// Parses `fixed:X` or `q:Q`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("threshold must be fixed:X or q:Q, got {s:?}"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let spec = match kind.trim() {
            "fixed" => ThresholdSpec::Fixed(value),
            "q" | "quantile" => ThresholdSpec::Quantile(value),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A resolved threshold. `degenerate` is set when a quantile was requested but
/// every off-diagonal distance is zero; `eps` is then 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub eps: f64,
    pub degenerate: bool,
}

/// Square recurrence image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceImage {
    size: usize,
    values: Vec<f64>,
    smooth: bool,
    nu: Option<f64>,
}

impl RecurrenceImage {
    pub fn from_values(size: usize, values: Vec<f64>, nu: Option<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {size}x{size} image",
                values.len()
            )));
        }
        Ok(Self {
            size,
            values,
            smooth: nu.is_some(),
            nu,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.size + k]
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }
}

/// Symmetric matrix of pairwise trajectory distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub size: usize,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.size + k]
    }

    /// Distances `d(j, k)` for `j < k`.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.size;
        (0..n)
            .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
            .map(|(j, k)| self.get(j, k))
            .collect()
    }
}

pub fn embed(series: &[f64], spec: &EmbeddingSpec) -> Result<Vec<Vec<f64>>> {
    let s = spec.trajectories(series.len())?;
    Ok((0..s)
        .map(|j| (0..spec.m).map(|slot| series[spec.index(j, slot)]).collect())
        .collect())
}

pub fn distances(series: &[f64], spec: &EmbeddingSpec) -> Result<DistanceMatrix> {
    let n = spec.trajectories(series.len())?;
    let mut values = vec![0.0; n * n];
    for j in 0..n {
        for k in j + 1..n {
            let sq: f64 = (0..spec.m)
                .map(|s| {
                    let diff = series[spec.index(j, s)] - series[spec.index(k, s)];
                    diff * diff
                })
                .sum();
            let d = sq.sqrt();
            values[j * n + k] = d;
            values[k * n + j] = d;
        }
    }
    Ok(DistanceMatrix { size: n, values })
}

/// Linear-interpolation quantile of `values` (inclusive of both endpoints).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Threshold for an already computed distance matrix.
pub fn resolve_from_distances(dist: &DistanceMatrix, thr: &ThresholdSpec) -> Result<Threshold> {
    thr.validate()?;
    Ok(match *thr {
        ThresholdSpec::Fixed(eps) => Threshold {
            eps,
            degenerate: false,
        },
        ThresholdSpec::Quantile(q) => {
            let off = dist.off_diagonal();
            if off.iter().all(|&d| d == 0.0) {
                Threshold {
                    eps: 0.0,
                    degenerate: true,
                }
            } else {
                Threshold {
                    eps: quantile(&off, q),
                    degenerate: false,
                }
            }
        }
    })
}

pub fn resolve_threshold(series: &[f64], emb: &EmbeddingSpec, thr: &ThresholdSpec) -> Result<Threshold> {
    resolve_from_distances(&distances(series, emb)?, thr)
}

/// `(1 + tanh(nu * x)) / 2`.
#[inline]
pub fn smooth_heaviside(x: f64, nu: f64) -> f64 {
    0.5 * (1.0 + (nu * x).tanh())
}

/// Derivative of [`smooth_heaviside`] with respect to `x`:
/// `nu / (1 + cosh(2 nu x)) = (nu / 2) sech^2(nu x)`.
#[inline]
pub fn smooth_heaviside_slope(x: f64, nu: f64) -> f64 {
    nu / (1.0 + (2.0 * nu * x).cosh())
}

fn check_nu(nu: Option<f64>) -> Result<()> {
    match nu {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::InvalidConfig(format!(
            "smoothness nu must be positive, got {v}"
        ))),
        _ => Ok(()),
    }
}

/// Recurrence image of a distance matrix: hard when `nu` is `None`.
pub fn image_from_distances(dist: &DistanceMatrix, eps: f64, nu: Option<f64>) -> Result<RecurrenceImage> {
    check_nu(nu)?;
    let values = match nu {
        None => dist
            .values
            .iter()
            .map(|&d| if d <= eps { 1.0 } else { 0.0 })
            .collect(),
        Some(nu) => dist.values.iter().map(|&d| smooth_heaviside(eps - d, nu)).collect(),
    };
    RecurrenceImage::from_values(dist.size, values, nu)
}

/// Hard (`nu = None`) or smooth recurrence plot.
pub fn rp(series: &[f64], emb: &EmbeddingSpec, thr: &ThresholdSpec, nu: Option<f64>) -> Result<RecurrenceImage> {
    let dist = distances(series, emb)?;
    let eps = resolve_from_distances(&dist, thr)?.eps;
    image_from_distances(&dist, eps, nu)
}

pub fn rp_hard(series: &[f64], emb: &EmbeddingSpec, thr: &ThresholdSpec) -> Result<RecurrenceImage> {
    rp(series, emb, thr, None)
}

pub fn rp_smooth(series: &[f64], emb: &EmbeddingSpec, thr: &ThresholdSpec, nu: f64) -> Result<RecurrenceImage> {
    rp(series, emb, thr, Some(nu))
}

/// Joint recurrence plot of a `p x T` matrix with one threshold per dimension.
pub fn jrp(
    matrix: &[Vec<f64>],
    emb: &EmbeddingSpec,
    thr_per_dim: &[ThresholdSpec],
    nu: Option<f64>,
) -> Result<RecurrenceImage> {
    if matrix.is_empty() {
        return Err(Error::DimMismatch {
            expected: 1,
            got: 0,
        });
    }
    if thr_per_dim.len() != matrix.len() {
        return Err(Error::DimMismatch {
            expected: matrix.len(),
            got: thr_per_dim.len(),
        });
    }
    let images = matrix
        .iter()
        .zip(thr_per_dim)
        .map(|(row, thr)| rp(row, emb, thr, nu))
        .collect::<Result<Vec<_>>>()?;
    hadamard(images)
}

/// Elementwise product of equally sized images.
pub fn hadamard(images: Vec<RecurrenceImage>) -> Result<RecurrenceImage> {
    let mut images = images.into_iter();
    let first = images.next().ok_or(Error::DimMismatch {
        expected: 1,
        got: 0,
    })?;
    let (size, mut values, nu) = (first.size, first.values, first.nu);
    for image in images {
        if image.size != size {
            return Err(Error::ShapeMismatch("dimensions have different lengths".into()));
        }
        for (v, w) in values.iter_mut().zip(&image.values) {
            *v *= w;
        }
    }
    RecurrenceImage::from_values(size, values, nu)
}

/// Imaging settings shared by training and evaluation. Multivariate data uses
/// the same threshold rule in every dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingConfig {
    pub emb: EmbeddingSpec,
    pub thr: ThresholdSpec,
    pub nu: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            emb: EmbeddingSpec::default(),
            thr: ThresholdSpec::default(),
            nu: 10.0,
        }
    }
}

impl ImagingConfig {
    pub fn validate(&self) -> Result<()> {
        EmbeddingSpec::new(self.emb.m, self.emb.kappa)?;
        self.thr.validate()?;
        check_nu(Some(self.nu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PI18: f64 = std::f64::consts::PI / 18.0;

    #[test]
    fn embedding_examples() {
        let series: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(embed(&series, &EmbeddingSpec::new(2, 1).unwrap()).unwrap().len(), 99);
        let scalars = embed(&series, &EmbeddingSpec::default()).unwrap();
        assert_eq!(scalars.len(), 100);
        assert_eq!(scalars[7], vec![7.0]);
        let t = embed(&[1.0, 2.0, 3.0, 4.0], &EmbeddingSpec::new(2, 2).unwrap()).unwrap();
        assert_eq!(t, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert!(matches!(
            embed(&[1.0, 2.0, 3.0], &EmbeddingSpec::new(2, 2).unwrap()),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(EmbeddingSpec::new(0, 1).is_err());
    }

    #[test]
    fn hard_rp_examples() {
        let emb = EmbeddingSpec::default();
        let img = rp_hard(&[3.0; 6], &emb, &ThresholdSpec::Fixed(0.01)).unwrap();
        assert!(img.values().iter().all(|&v| v == 1.0));

        let img = rp_hard(&[0.0, 1.0, 3.0, 6.0], &emb, &ThresholdSpec::Fixed(0.5)).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(img.get(j, k), if j == k { 1.0 } else { 0.0 });
            }
        }

        let series = [0.0, 1.0, 0.0, 1.0];
        let img = rp_hard(&series, &emb, &ThresholdSpec::Fixed(0.5)).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let expected = if series[j] == series[k] { 1.0 } else { 0.0 };
                assert_eq!(img.get(j, k), expected);
            }
        }
    }

    #[test]
    fn smooth_rp_examples() {
        assert_eq!(smooth_heaviside(0.0, 7.0), 0.5);
        let v = smooth_heaviside(0.1, 20.0);
        assert!((v - (1.0 + 2f64.tanh()) / 2.0).abs() < 1e-15);
        assert!((v - 0.98201).abs() < 1e-5);

        // Distances {0, 1}: with eps = 1 the off-diagonal entries sit exactly on the threshold.
        let img = rp_smooth(&[0.0, 1.0], &EmbeddingSpec::default(), &ThresholdSpec::Fixed(1.0), 3.0).unwrap();
        assert_eq!(img.get(0, 1), 0.5);
        assert_eq!(img.get(0, 0), smooth_heaviside(1.0, 3.0));
        assert!(rp_smooth(&[0.0, 1.0], &EmbeddingSpec::default(), &ThresholdSpec::Fixed(1.0), 0.0).is_err());
        for nu in [1.0, 5.0, 10.0, 15.0, 20.0] {
            assert!(rp_smooth(&[0.0, 1.0, 2.0], &EmbeddingSpec::default(), &ThresholdSpec::default(), nu).is_ok());
        }
    }

    #[test]
    fn slope_matches_sech_squared() {
        for &(x, nu) in &[(0.0, 1.0), (0.3, 5.0), (-0.2, 10.0), (2.0, 20.0)] {
            let sech = 1.0 / f64::cosh(nu * x);
            assert!((smooth_heaviside_slope(x, nu) - 0.5 * nu * sech * sech).abs() < 1e-12);
        }
        assert_eq!(smooth_heaviside_slope(100.0, 50.0), 0.0);
    }

    #[test]
    fn threshold_resolution() {
        let emb = EmbeddingSpec::default();
        let t = resolve_threshold(&[0.0, 1.0], &emb, &ThresholdSpec::Fixed(PI18)).unwrap();
        assert!((t.eps - 0.174_532_925_199_432_95).abs() < 1e-15);
        // distances {1, 2, 3}
        let t = resolve_threshold(&[0.0, 1.0, 3.0], &emb, &ThresholdSpec::Quantile(0.5)).unwrap();
        assert_eq!(t.eps, 1.0 + (2.0 - 1.0) * 1.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);

        let t = resolve_threshold(&[2.0; 5], &emb, &ThresholdSpec::Quantile(0.3)).unwrap();
        assert_eq!(t, Threshold { eps: 0.0, degenerate: true });
        assert!(ThresholdSpec::Quantile(1.0).validate().is_err());
        assert!(ThresholdSpec::Fixed(0.0).validate().is_err());
    }

    #[test]
    fn quantile_of_uniform_distances() {
        use rand::Rng;
        let mut rng = crate::dgp::stream_rng(5, 0);
        let d: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        assert!((quantile(&d, 0.1) - 0.1).abs() < 0.05);
    }

    #[test]
    fn parse_threshold() {
        assert_eq!("fixed:0.5".parse::<ThresholdSpec>().unwrap(), ThresholdSpec::Fixed(0.5));
        assert_eq!("q:0.2".parse::<ThresholdSpec>().unwrap(), ThresholdSpec::Quantile(0.2));
        assert!("q:2".parse::<ThresholdSpec>().is_err());
        assert!("bogus".parse::<ThresholdSpec>().is_err());
    }

    #[test]
    fn jrp_examples() {
        let emb = EmbeddingSpec::default();
        let row = vec![0.0, 0.1, 0.5, 0.2];
        let thr = ThresholdSpec::Fixed(0.15);
        for nu in [None, Some(5.0)] {
            assert_eq!(jrp(std::slice::from_ref(&row), &emb, &[thr], nu).unwrap(), rp(&row, &emb, &thr, nu).unwrap());
        }
        assert!(matches!(
            jrp(&[row.clone(), row.clone()], &emb, &[thr], None),
            Err(Error::DimMismatch { .. })
        ));
        let zeros = RecurrenceImage::from_values(4, vec![0.0; 16], Some(5.0)).unwrap();
        let other = rp(&row, &emb, &thr, Some(5.0)).unwrap();
        let product = hadamard(vec![other, zeros]).unwrap();
        assert!(product.values().iter().all(|&v| v == 0.0));
    }

    fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0..2.0f64, 4..24)
    }

    proptest! {
        #[test]
        fn images_symmetric_and_bounded(series in series_strategy(), eps in 0.05..1.0f64, nu in 0.5..30.0f64, m in 1usize..3) {
            let emb = EmbeddingSpec::new(m, 1).unwrap();
            for nu in [None, Some(nu)] {
                let img = rp(&series, &emb, &ThresholdSpec::Fixed(eps), nu).unwrap();
                let n = img.size();
                for j in 0..n {
                    for k in 0..n {
                        prop_assert_eq!(img.get(j, k), img.get(k, j));
                        prop_assert!((0.0..=1.0).contains(&img.get(j, k)));
                    }
                    let diag = if nu.is_some() { smooth_heaviside(eps, nu.unwrap()) } else { 1.0 };
                    prop_assert_eq!(img.get(j, j), diag);
                }
            }
        }

        #[test]
        fn jrp_hard_is_logical_and(a in series_strategy(), seed in 0.0..1.0f64) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| (x * 3.1 + i as f64 * seed).sin()).collect();
            let emb = EmbeddingSpec::default();
            let thr = [ThresholdSpec::Fixed(0.3), ThresholdSpec::Fixed(0.4)];
            let joint = jrp(&[a.clone(), b.clone()], &emb, &thr, None).unwrap();
            let ra = rp_hard(&a, &emb, &thr[0]).unwrap();
            let rb = rp_hard(&b, &emb, &thr[1]).unwrap();
            for i in 0..joint.values().len() {
                let and = ra.values()[i] == 1.0 && rb.values()[i] == 1.0;
                prop_assert_eq!(joint.values()[i], if and { 1.0 } else { 0.0 });
            }
        }

        #[test]
        fn smooth_monotone_in_nu(series in series_strategy(), eps in 0.1..1.0f64) {
            let emb = EmbeddingSpec::default();
            let dist = distances(&series, &emb).unwrap();
            let lo = image_from_distances(&dist, eps, Some(2.0)).unwrap();
            let hi = image_from_distances(&dist, eps, Some(8.0)).unwrap();
            for (i, &d) in dist.values.iter().enumerate() {
                if d < eps {
                    prop_assert!(hi.values()[i] >= lo.values()[i]);
                } else if d > eps {
                    prop_assert!(hi.values()[i] <= lo.values()[i]);
                }
            }
        }
    }
}
