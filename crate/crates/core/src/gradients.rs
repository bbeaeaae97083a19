//! Derivatives of smooth recurrence images with respect to the combination coefficients.
//!
//! With `C = a * lower + (1 - a) * upper` we have `dC[t]/da[t] = lower[t] - upper[t]`,
//! and for trajectories `j, k` with distance `d > 0`
//!
//! ```text
//! dd/da[t] = sum over slots s with index(j, s) == t or index(k, s) == t of
//!            (C_j[s] - C_k[s]) * (1[index(j, s) == t] - 1[index(k, s) == t]) * (lower[t] - upper[t]) / d
//! dR/da[t] = -nu / (1 + cosh(2 nu (eps - d))) * dd/da[t]
//! ```
//!
//! At `d = 0` the norm is not differentiable and the derivative is taken to be 0.
//! The threshold is held constant (quantile thresholds are not differentiated).
//!
//! For the joint plot with per-dimension coefficients, `a[i]` only moves dimension `i`,
//! so `dR/da[i] = (prod over i' != i of R_i') * dR_i/da[i]`.

use crate::error::{Error, Result};
use crate::imaging::{
    distances, image_from_distances, resolve_from_distances, smooth_heaviside_slope, DistanceMatrix,
    EmbeddingSpec, RecurrenceImage, ThresholdSpec,
};
use crate::interval::{combine, IntervalSeries, MvIntervalSeries};

/// One nonzero-structure entry of the image Jacobian: `dR(row, col)/da[t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEntry {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

/// Sparse Jacobian of an `S x S` image with respect to each coefficient.
/// Entries come in symmetric pairs `(j, k)` / `(k, j)` with equal values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGradient {
    size: usize,
    per_coeff: Vec<Vec<GradEntry>>,
}

impl ImageGradient {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of coefficients.
    pub fn coeffs(&self) -> usize {
        self.per_coeff.len()
    }

    pub fn entries(&self, t: usize) -> &[GradEntry] {
        &self.per_coeff[t]
    }

    /// Dense `dR(j, k)/da[t]` (0 when absent).
    pub fn get(&self, t: usize, j: usize, k: usize) -> f64 {
        self.per_coeff[t]
            .iter()
            .find(|e| e.row as usize == j && e.col as usize == k)
            .map_or(0.0, |e| e.value)
    }

    fn push_pair(&mut self, t: usize, j: usize, k: usize, value: f64) {
        let list = &mut self.per_coeff[t];
        list.push(GradEntry {
            row: j as u32,
            col: k as u32,
            value,
        });
        list.push(GradEntry {
            row: k as u32,
            col: j as u32,
            value,
        });
    }
}

/// Partial derivatives `(t, dd/da[t])` of the distance between trajectories `j != k`,
/// given the combined series `c` and `dc[t] = lower[t] - upper[t]`. Indices that
/// appear in both trajectories accumulate. Results are unscaled by `1/d`.
fn distance_partials(c: &[f64], dc: &[f64], emb: &EmbeddingSpec, j: usize, k: usize, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let mut add = |t: usize, v: f64| match out.iter_mut().find(|(u, _)| *u == t) {
        Some(slot) => slot.1 += v,
        None => out.push((t, v)),
    };
    for s in 0..emb.m {
        let (a, b) = (emb.index(j, s), emb.index(k, s));
        let diff = c[a] - c[b];
        add(a, diff * dc[a]);
        add(b, -diff * dc[b]);
    }
}

fn bound_slopes(lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower.iter().zip(upper).map(|(l, u)| l - u).collect()
}

/// `d ||C_j - C_k||_2 / d a[t]` for the per-time combination of `series`.
/// Returns 0 when `d(j, k) = 0` (subgradient convention).
pub fn d_dist_d_alpha(
    series: &IntervalSeries,
    alpha: &[f64],
    emb: &EmbeddingSpec,
    j: usize,
    k: usize,
    t: usize,
) -> Result<f64> {
    let c = combine(series.lower(), series.upper(), alpha)?;
    let n = emb.trajectories(c.len())?;
    if j >= n || k >= n || t >= c.len() {
        return Err(Error::ShapeMismatch(format!(
            "index out of range: j={j} k={k} t={t} with {n} trajectories"
        )));
    }
    if j == k {
        return Ok(0.0);
    }
    let dc = bound_slopes(series.lower(), series.upper());
    let d = (0..emb.m)
        .map(|s| (c[emb.index(j, s)] - c[emb.index(k, s)]).powi(2))
        .sum::<f64>()
        .sqrt();
    if d == 0.0 {
        return Ok(0.0);
    }
    let mut parts = Vec::new();
    distance_partials(&c, &dc, emb, j, k, &mut parts);
    Ok(parts.iter().find(|(u, _)| *u == t).map_or(0.0, |(_, v)| v / d))
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("smoothness nu must be positive, got {nu}")))
    }
}

/// Smooth recurrence image of the per-time combination and its Jacobian.
pub fn smooth_rp_with_jacobian(
    series: &IntervalSeries,
    alpha: &[f64],
    emb: &EmbeddingSpec,
    thr: &ThresholdSpec,
    nu: f64,
) -> Result<(RecurrenceImage, ImageGradient)> {
    check_nu(nu)?;
    let c = combine(series.lower(), series.upper(), alpha)?;
    let dc = bound_slopes(series.lower(), series.upper());
    let dist = distances(&c, emb)?;
    let eps = resolve_from_distances(&dist, thr)?.eps;
    let image = image_from_distances(&dist, eps, Some(nu))?;

    let n = dist.size;
    let mut grad = ImageGradient {
        size: n,
        per_coeff: vec![Vec::new(); c.len()],
    };
    let mut parts = Vec::with_capacity(2 * emb.m);
    for j in 0..n {
        for k in j + 1..n {
            let d = dist.get(j, k);
            let scale = if d > 0.0 {
                -smooth_heaviside_slope(eps - d, nu) / d
            } else {
                0.0
            };
            distance_partials(&c, &dc, emb, j, k, &mut parts);
            for &(t, v) in &parts {
                grad.push_pair(t, j, k, scale * v);
            }
        }
    }
    Ok((image, grad))
}

pub fn d_rp_smooth_d_alpha(
    series: &IntervalSeries,
    alpha: &[f64],
    emb: &EmbeddingSpec,
    thr: &ThresholdSpec,
    nu: f64,
) -> Result<ImageGradient> {
    smooth_rp_with_jacobian(series, alpha, emb, thr, nu).map(|(_, g)| g)
}

/// Per-dimension smooth image values and `dR_i(j, k)/da[i]` for all `j != k` (row-major, 0 on the diagonal).
fn dimension_terms(
    lower: &[f64],
    upper: &[f64],
    a: f64,
    emb: &EmbeddingSpec,
    thr: &ThresholdSpec,
    nu: f64,
) -> Result<(DistanceMatrix, Vec<f64>, Vec<f64>)> {
    let c: Vec<f64> = lower.iter().zip(upper).map(|(&l, &u)| a * l + (1.0 - a) * u).collect();
    let dc = bound_slopes(lower, upper);
    let dist = distances(&c, emb)?;
    let eps = resolve_from_distances(&dist, thr)?.eps;
    let values = image_from_distances(&dist, eps, Some(nu))?.into_values();
    let n = dist.size;
    let mut deriv = vec![0.0; n * n];
    for j in 0..n {
        for k in j + 1..n {
            let d = dist.get(j, k);
            if d == 0.0 {
                continue;
            }
            // Every coordinate of this dimension moves with a, so dd/da sums all slots.
            let dd: f64 = (0..emb.m)
                .map(|s| {
                    let (p, q) = (emb.index(j, s), emb.index(k, s));
                    (c[p] - c[q]) * (dc[p] - dc[q])
                })
                .sum::<f64>()
                / d;
            let g = -smooth_heaviside_slope(eps - d, nu) * dd;
            deriv[j * n + k] = g;
            deriv[k * n + j] = g;
        }
    }
    Ok((dist, values, deriv))
}

/// Smooth joint recurrence image of the per-dimension combination and its Jacobian.
pub fn smooth_jrp_with_jacobian(
    series: &MvIntervalSeries,
    alpha: &[f64],
    emb: &EmbeddingSpec,
    thr_per_dim: &[ThresholdSpec],
    nu: f64,
) -> Result<(RecurrenceImage, ImageGradient)> {
    check_nu(nu)?;
    let p = series.dims();
    if alpha.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            got: alpha.len(),
        });
    }
    if thr_per_dim.len() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: thr_per_dim.len(),
        });
    }
    let terms = (0..p)
        .map(|i| {
            dimension_terms(
                &series.lower()[i],
                &series.upper()[i],
                alpha[i],
                emb,
                &thr_per_dim[i],
                nu,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = terms[0].0.size;
    let cells = n * n;

    // prefix[i][x] = prod_{i' < i} R_i'(x); suffix handled on the fly.
    let mut prefix = vec![vec![1.0; cells]; p + 1];
    for i in 0..p {
        for x in 0..cells {
            prefix[i + 1][x] = prefix[i][x] * terms[i].1[x];
        }
    }
    let mut suffix = vec![1.0; cells];
    let mut grad = ImageGradient {
        size: n,
        per_coeff: vec![Vec::new(); p],
    };
    for i in (0..p).rev() {
        let deriv = &terms[i].2;
        for j in 0..n {
            for k in j + 1..n {
                let x = j * n + k;
                let others = prefix[i][x] * suffix[x];
                grad.push_pair(i, j, k, others * deriv[x]);
            }
        }
        for x in 0..cells {
            suffix[x] *= terms[i].1[x];
        }
    }
    let image = RecurrenceImage::from_values(n, prefix.pop().expect("p >= 1"), Some(nu))?;
    Ok((image, grad))
}

pub fn d_jrp_d_alpha(
    series: &MvIntervalSeries,
    alpha: &[f64],
    emb: &EmbeddingSpec,
    thr_per_dim: &[ThresholdSpec],
    nu: f64,
) -> Result<ImageGradient> {
    smooth_jrp_with_jacobian(series, alpha, emb, thr_per_dim, nu).map(|(_, g)| g)
}

/// Contracts the Jacobian with an upstream gradient `dL/dR` (row-major `S x S`):
/// `dL/da[t] = sum_{j,k} dR(j,k)/da[t] * dL/dR(j,k)`.
pub fn backprop_to_alpha(dl_dr: &[f64], grad: &ImageGradient) -> Result<Vec<f64>> {
    let n = grad.size;
    if dl_dr.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has {} entries, image is {n}x{n}",
            dl_dr.len()
        )));
    }
    Ok(grad
        .per_coeff
        .iter()
        .map(|entries| {
            entries
                .iter()
                .map(|e| e.value * dl_dr[e.row as usize * n + e.col as usize])
                .sum()
        })
        .collect())
}
