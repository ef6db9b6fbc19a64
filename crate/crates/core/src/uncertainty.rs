//! Summaries of Monte-Carlo dropout samples: mean class probabilities,
//! predictive entropy, mutual information and variation ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub const CLASSES: usize = 3;

/// `M × 3` softmax outputs, one row per stochastic pass.
#[derive(Debug, Clone, PartialEq)]
pub struct McSamples<S> {
    rows: Vec<[S; CLASSES]>,
}

impl<S: Scalar> McSamples<S> {
    pub fn new(rows: Vec<[S; CLASSES]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no Monte-Carlo samples".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            check_probability(r).map_err(|e| Error::Validation(format!("sample {i}: {e}")))?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[S; CLASSES]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn all_identical(&self) -> bool {
        let first = &self.rows[0];
        self.rows
            .iter()
            .all(|r| r.iter().zip(first).all(|(a, b)| a.bits_eq(*b)))
    }
}

pub(crate) fn check_probability<S: Scalar>(p: &[S; CLASSES]) -> std::result::Result<(), String> {
    if p.iter().any(|v| !v.is_finite() || *v < S::zero()) {
        return Err(format!("entries must be finite and non-negative: {p:?}"));
    }
    let sum: S = p.iter().copied().sum();
    if (sum - S::one()).abs() > lit(1e-6) {
        return Err(format!("entries sum to {sum}, not 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    fn scale<S: Scalar>(self) -> S {
        match self {
            LogBase::Nats => S::one(),
            LogBase::Bits => S::one() / lit::<S>(2.0).ln(),
        }
    }
}

/// Column-wise mean of the samples.
pub fn mean_prob<S: Scalar>(s: &McSamples<S>) -> [S; CLASSES] {
    if s.all_identical() {
        return s.rows[0];
    }
    let mut acc = [S::zero(); CLASSES];
    for r in &s.rows {
        for c in 0..CLASSES {
            acc[c] += r[c];
        }
    }
    let m = lit::<S>(s.len() as f64);
    acc.map(|v| v / m)
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn predictive_entropy<S: Scalar>(p: &[S; CLASSES]) -> S {
    let mut h = S::zero();
    for &v in p {
        if v > S::zero() {
            h -= v * v.ln();
        }
    }
    h.max(S::zero())
}

pub fn predictive_entropy_in<S: Scalar>(p: &[S; CLASSES], base: LogBase) -> S {
    predictive_entropy(p) * base.scale()
}

/// Entropy of the mean minus the mean per-sample entropy, in nats.
pub fn mutual_information<S: Scalar>(s: &McSamples<S>) -> S {
    if s.all_identical() {
        return S::zero();
    }
    let h = predictive_entropy(&mean_prob(s));
    let expected: S = s.rows.iter().map(predictive_entropy).sum::<S>() / lit(s.len() as f64);
    (h - expected).max(S::zero())
}

/// Index of the largest entry, ties resolved to the lowest index.
pub fn argmax<S: Scalar>(p: &[S; CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..CLASSES {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

/// One minus the share of passes voting for the modal class.
pub fn variation_ratio<S: Scalar>(s: &McSamples<S>) -> S {
    let mut counts = [0usize; CLASSES];
    for r in &s.rows {
        counts[argmax(r)] += 1;
    }
    let mode = *counts.iter().max().unwrap_or(&0);
    S::one() - lit::<S>(mode as f64) / lit(s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary<S> {
    pub p_bar: [S; CLASSES],
    pub entropy: S,
    pub mutual_info: S,
    pub variation_ratio: S,
}

impl<S: Scalar> UncertaintySummary<S> {
    pub fn from_samples(s: &McSamples<S>) -> Self {
        Self::from_samples_in(s, LogBase::Nats)
    }

    pub fn from_samples_in(s: &McSamples<S>, base: LogBase) -> Self {
        let p_bar = mean_prob(s);
        Self {
            p_bar,
            entropy: predictive_entropy(&p_bar) * base.scale(),
            mutual_info: mutual_information(s) * base.scale(),
            variation_ratio: variation_ratio(s),
        }
    }
}
