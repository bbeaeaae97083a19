//! Multiclass precision, recall and F1 (micro, macro, weighted) plus accuracy.
//!
//! Per-label scores with an empty denominator are 0; such labels are listed in
//! [`Scores::degenerate_labels`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    classes: usize,
    counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let classes = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != classes) {
            return Err(Error::DimMismatch {
                expected: classes,
                got: row.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        for label in [truth, pred] {
            if label >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    /// Componentwise sum of two matrices over the same labels.
    pub fn merge(&mut self, other: &Confusion) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::DimMismatch {
                expected: self.classes,
                got: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, l: usize) -> u64 {
        self.counts[l][l]
    }

    pub fn fp(&self, l: usize) -> u64 {
        (0..self.classes).filter(|&j| j != l).map(|j| self.counts[j][l]).sum()
    }

    pub fn fn_(&self, l: usize) -> u64 {
        (0..self.classes).filter(|&j| j != l).map(|j| self.counts[l][j]).sum()
    }

    /// Number of samples whose true label is `l`.
    pub fn support(&self, l: usize) -> u64 {
        self.counts[l].iter().sum()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let mut c = Confusion::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        c.add(t, p)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(rename = "miP")]
    pub mi_p: f64,
    #[serde(rename = "maP")]
    pub ma_p: f64,
    #[serde(rename = "weiP")]
    pub wei_p: f64,
    #[serde(rename = "miR")]
    pub mi_r: f64,
    #[serde(rename = "maR")]
    pub ma_r: f64,
    #[serde(rename = "weiR")]
    pub wei_r: f64,
    #[serde(rename = "miF1")]
    pub mi_f1: f64,
    #[serde(rename = "maF1")]
    pub ma_f1: f64,
    #[serde(rename = "weiF1")]
    pub wei_f1: f64,
    pub accuracy: f64,
    /// Labels where some per-label score had a zero denominator.
    #[serde(skip)]
    pub degenerate_labels: Vec<usize>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn scores(c: &Confusion) -> Result<Scores> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidConfig("no evaluated samples".into()));
    }
    let k = c.classes;
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    let (mut ma, mut wei) = ([0.0; 3], [0.0; 3]);
    let mut degenerate = Vec::new();
    for l in 0..k {
        let (t, p, n) = (c.tp(l), c.fp(l), c.fn_(l));
        tp += t;
        fp += p;
        fneg += n;
        // t == 0 leaves F1 (and possibly P or R) with a zero denominator.
        if t == 0 {
            degenerate.push(l);
        }
        let prec = ratio(t, t + p);
        let rec = ratio(t, t + n);
        let per = [prec, rec, f1(prec, rec)];
        let w = c.support(l) as f64;
        for i in 0..3 {
            ma[i] += per[i];
            wei[i] += w * per[i];
        }
    }
    let mi_p = ratio(tp, tp + fp);
    let mi_r = ratio(tp, tp + fneg);
    let n = total as f64;
    Ok(Scores {
        mi_p,
        ma_p: ma[0] / k as f64,
        wei_p: wei[0] / n,
        mi_r,
        ma_r: ma[1] / k as f64,
        wei_r: wei[1] / n,
        mi_f1: f1(mi_p, mi_r),
        ma_f1: ma[2] / k as f64,
        wei_f1: wei[2] / n,
        accuracy: ratio(tp, total),
        degenerate_labels: degenerate,
    })
}
