//! Interval-valued series and the convex-combination representation.
//!
//! An interval `[lower, upper]` is mapped to the point `a * lower + (1 - a) * upper`
//! for a coefficient `a` in `[0, 1]`. With `a = 1/2` this is the center, with `a = 0`
//! the upper bound and with `a = 1` the lower bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A univariate interval-valued series of length `T >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSeries {
    lower: Vec<f64>,
    upper: Vec<f64>,
    label: Option<usize>,
}

impl IntervalSeries {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, label: Option<usize>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.len() < 2 {
            return Err(Error::SeriesTooShort {
                len: lower.len(),
                trajectories: lower.len() as i64,
            });
        }
        check_ordered(&lower, &upper, 0)?;
        Ok(Self {
            lower,
            upper,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }
}

/// A `p x T` interval-valued series. Row `j` holds dimension `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvIntervalSeries {
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
    label: Option<usize>,
}

impl MvIntervalSeries {
    pub fn new(lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>>, label: Option<usize>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::DimMismatch {
                expected: 1,
                got: 0,
            });
        }
        if lower.len() != upper.len() {
            return Err(Error::DimMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        let len = lower[0].len();
        if len < 2 {
            return Err(Error::SeriesTooShort {
                len,
                trajectories: len as i64,
            });
        }
        for (j, (lo, up)) in lower.iter().zip(&upper).enumerate() {
            if lo.len() != len || up.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: if lo.len() != len { lo.len() } else { up.len() },
                });
            }
            check_ordered(lo, up, j * len)?;
        }
        Ok(Self {
            lower,
            upper,
            label,
        })
    }

    /// Number of dimensions `p`.
    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    /// Series length `T`.
    pub fn len(&self) -> usize {
        self.lower[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> &[Vec<f64>] {
        &self.lower
    }

    pub fn upper(&self) -> &[Vec<f64>] {
        &self.upper
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Dimension `j` as a univariate series (carrying the same label).
    pub fn dim(&self, j: usize) -> IntervalSeries {
        IntervalSeries {
            lower: self.lower[j].clone(),
            upper: self.upper[j].clone(),
            label: self.label,
        }
    }

    pub fn from_dims(dims: Vec<IntervalSeries>, label: Option<usize>) -> Result<Self> {
        let (lower, upper) = dims.into_iter().map(|s| (s.lower, s.upper)).unzip();
        Self::new(lower, upper, label)
    }
}

fn check_ordered(lower: &[f64], upper: &[f64], offset: usize) -> Result<()> {
    for (t, (&lo, &up)) in lower.iter().zip(upper).enumerate() {
        if !lo.is_finite() || !up.is_finite() {
            return Err(Error::NonFinite(format!("interval bound at index {}", offset + t)));
        }
        if lo > up {
            return Err(Error::InvalidInterval {
                index: offset + t,
                lower: lo,
                upper: up,
            });
        }
    }
    Ok(())
}

/// Center/range coordinates: `center = (l + u) / 2`, `range = (u - l) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterRange {
    pub center: Vec<f64>,
    pub range: Vec<f64>,
}

pub fn to_center_range(s: &IntervalSeries) -> CenterRange {
    let (center, range) = s
        .lower
        .iter()
        .zip(&s.upper)
        .map(|(&l, &u)| ((l + u) / 2.0, (u - l) / 2.0))
        .unzip();
    CenterRange { center, range }
}

/// Rebuilds bounds as `center -/+ range`. Negative ranges are an error unless
/// `clamp` is set, in which case they are replaced by zero.
pub fn from_center_range(cr: &CenterRange, clamp: bool) -> Result<IntervalSeries> {
    if cr.center.len() != cr.range.len() {
        return Err(Error::LengthMismatch {
            expected: cr.center.len(),
            got: cr.range.len(),
        });
    }
    let mut lower = Vec::with_capacity(cr.center.len());
    let mut upper = Vec::with_capacity(cr.center.len());
    for (t, (&c, &r)) in cr.center.iter().zip(&cr.range).enumerate() {
        let r = if r < 0.0 {
            if !clamp {
                return Err(Error::NegativeRange { index: t, value: r });
            }
            0.0
        } else {
            r
        };
        lower.push(c - r);
        upper.push(c + r);
    }
    IntervalSeries::new(lower, upper, None)
}

/// Which axis the coefficients are indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// One coefficient per time step (univariate series).
    PerTime,
    /// One coefficient per dimension, shared across time (multivariate series).
    PerDim,
}

/// Box-constrained combination coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationCoefficients {
    alpha: Vec<f64>,
    axis: Axis,
}

impl CombinationCoefficients {
    pub fn new(alpha: Vec<f64>, axis: Axis) -> Result<Self> {
        for (index, &value) in alpha.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::CoefficientOutOfBox { index, value });
            }
        }
        Ok(Self { alpha, axis })
    }

    pub fn constant(value: f64, len: usize, axis: Axis) -> Result<Self> {
        Self::new(vec![value; len], axis)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }
}

/// `a[t] * lower[t] + (1 - a[t]) * upper[t]` without any box check on `a`.
///
/// Used by the training loop, where the unconstrained ADMM iterate may leave the box.
pub fn combine(lower: &[f64], upper: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != lower.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            got: alpha.len(),
        });
    }
    Ok(lower
        .iter()
        .zip(upper)
        .zip(alpha)
        .map(|((&l, &u), &a)| a * l + (1.0 - a) * u)
        .collect())
}

/// Row `j` of the result is `a[j] * lower[j] + (1 - a[j]) * upper[j]`.
pub fn combine_mv(lower: &[Vec<f64>], upper: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
    if alpha.len() != lower.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            got: alpha.len(),
        });
    }
    Ok(lower
        .iter()
        .zip(upper)
        .zip(alpha)
        .map(|((lo, up), &a)| lo.iter().zip(up).map(|(&l, &u)| a * l + (1.0 - a) * u).collect())
        .collect())
}

pub fn convex_combination(s: &IntervalSeries, a: &CombinationCoefficients) -> Result<Vec<f64>> {
    if a.axis != Axis::PerTime {
        return Err(Error::InvalidConfig(
            "univariate series need per-time coefficients".into(),
        ));
    }
    combine(&s.lower, &s.upper, &a.alpha)
}

pub fn convex_combination_mv(
    s: &MvIntervalSeries,
    a: &CombinationCoefficients,
) -> Result<Vec<Vec<f64>>> {
    if a.axis != Axis::PerDim {
        return Err(Error::InvalidConfig(
            "multivariate series need per-dimension coefficients".into(),
        ));
    }
    combine_mv(&s.lower, &s.upper, &a.alpha)
}
