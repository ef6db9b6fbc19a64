//! Classification and trading metrics.
//!
//! Class order everywhere is up, neutral, down (`Movement::class_index`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::Movement;
use crate::uncertainty::CLASSES;

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_returns(r: &[f64], min_len: usize) -> Result<()> {
    if r.len() < min_len {
        return Err(Error::Empty(format!(
            "return series needs at least {min_len} entries, got {}",
            r.len()
        )));
    }
    if let Some(i) = r.iter().position(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("non-finite return at index {i}")));
    }
    Ok(())
}

fn ratio_or_sentinel(mean: f64, risk: f64) -> f64 {
    if risk > 0.0 {
        mean / risk
    } else if mean > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn mean(r: &[f64]) -> f64 {
    compensated_sum(r.iter().copied()) / r.len() as f64
}

/// Downside deviation `sqrt(1/T Σ min(r_t, 0)²)`.
pub fn downside_deviation(r: &[f64]) -> Result<f64> {
    check_returns(r, 1)?;
    let sq = compensated_sum(r.iter().map(|&x| x.min(0.0) * x.min(0.0)));
    Ok((sq / r.len() as f64).sqrt())
}

/// Downward deviation ratio: mean return over downside deviation.
///
/// With no downside the result is `+∞` for a positive mean and 0 otherwise.
pub fn ddr(r: &[f64]) -> Result<f64> {
    let dd = downside_deviation(r)?;
    Ok(ratio_or_sentinel(mean(r), dd))
}

/// Mean over population standard deviation; no annualization, zero risk-free
/// rate. Zero deviation follows the same convention as [`ddr`].
pub fn sharpe(r: &[f64]) -> Result<f64> {
    check_returns(r, 2)?;
    let m = mean(r);
    let var = compensated_sum(r.iter().map(|&x| (x - m) * (x - m))) / r.len() as f64;
    Ok(ratio_or_sentinel(m, var.sqrt()))
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; CLASSES]; CLASSES]);

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..CLASSES).map(|c| self.0[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.0.iter_mut().flatten().zip(other.0.iter().flatten()) {
            *a += b;
        }
    }
}

pub fn confusion_matrix(labels: &[Movement], predictions: &[Movement]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Validation(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (l, p) in labels.iter().zip(predictions) {
        cm.0[l.class_index()][p.class_index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub per_class: [ClassScores; CLASSES],
    /// Unweighted mean over classes.
    pub macro_avg: ClassScores,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> PrecisionRecallF1 {
    let m = &cm.0;
    let mut per_class = [ClassScores::default(); CLASSES];
    for c in 0..CLASSES {
        let tp = m[c][c] as f64;
        let predicted: u64 = (0..CLASSES).map(|t| m[t][c]).sum();
        let actual: u64 = m[c].iter().sum();
        let precision = ratio(tp, predicted as f64);
        let recall = ratio(tp, actual as f64);
        per_class[c] = ClassScores {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        };
    }
    let avg = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / CLASSES as f64;
    PrecisionRecallF1 {
        per_class,
        macro_avg: ClassScores {
            precision: avg(|s| s.precision),
            recall: avg(|s| s.recall),
            f1: avg(|s| s.f1),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucAverage {
    /// One-vs-rest per class, then the unweighted mean over usable classes.
    #[default]
    Macro,
    /// All one-vs-rest (label, score) pairs pooled into a single curve.
    Micro,
}

/// Area under the ROC curve of `scores` for binary `positive` flags, via the
/// rank statistic with ties counted as one half. `None` when either side is
/// empty.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    debug_assert_eq!(positive.len(), scores.len());
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = n as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // twice the positive rank sum, with tied blocks taking their mid-rank
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, mid-rank (i+1+j)/2
        let mid2 = (i + 1 + j) as u128;
        let pos_in_block = order[i..j].iter().filter(|&&k| positive[k]).count() as u128;
        rank2_sum += mid2 * pos_in_block;
        i = j;
    }
    let u2 = rank2_sum - n_pos * (n_pos + 1);
    Some(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    /// One-vs-rest AUC per class; `None` for a skipped class.
    pub per_class: [Option<f64>; CLASSES],
    pub value: f64,
}

pub fn auc(labels: &[Movement], scores: &[[f64; CLASSES]], average: AucAverage) -> Result<AucReport> {
    if labels.len() != scores.len() {
        return Err(Error::Validation(format!(
            "{} labels but {} score vectors",
            labels.len(),
            scores.len()
        )));
    }
    let mut per_class = [None; CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let pos: Vec<bool> = labels.iter().map(|l| l.class_index() == c).collect();
        let s: Vec<f64> = scores.iter().map(|v| v[c]).collect();
        *slot = binary_auc(&pos, &s);
        if slot.is_none() {
            log::warn!(
                "class {:?} has no positive or no negative examples; skipped in AUC",
                Movement::ALL[c]
            );
        }
    }
    let value = match average {
        AucAverage::Macro => {
            let used: Vec<f64> = per_class.iter().flatten().copied().collect();
            if used.is_empty() {
                return Err(Error::Validation("AUC undefined: every class was skipped".into()));
            }
            used.iter().sum::<f64>() / used.len() as f64
        }
        AucAverage::Micro => {
            let pos: Vec<bool> = labels
                .iter()
                .flat_map(|l| (0..CLASSES).map(move |c| l.class_index() == c))
                .collect();
            let s: Vec<f64> = scores.iter().flatten().copied().collect();
            binary_auc(&pos, &s).ok_or_else(|| Error::Validation("AUC undefined for empty input".into()))?
        }
    };
    if per_class.iter().all(Option::is_none) {
        return Err(Error::Validation("AUC undefined: every class was skipped".into()));
    }
    Ok(AucReport { per_class, value })
}

/// Macro one-vs-rest AUC.
pub fn auc_macro(labels: &[Movement], scores: &[[f64; CLASSES]]) -> Result<f64> {
    auc(labels, scores, AucAverage::Macro).map(|r| r.value)
}

/// Labels and predictions of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayLabels {
    pub day_id: u32,
    pub labels: Vec<Movement>,
    pub predictions: Vec<Movement>,
}

/// Fraction correct per day; days without samples are skipped.
pub fn daily_accuracy(days: &[DayLabels]) -> Result<Vec<(u32, f64)>> {
    let mut out = Vec::with_capacity(days.len());
    for d in days {
        let cm = confusion_matrix(&d.labels, &d.predictions)?;
        if cm.total() > 0 {
            out.push((d.day_id, cm.accuracy()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile on sorted data (`(n − 1)·q` positions).
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::Empty("quartiles of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN in quartile sample".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Quartiles {
        min: s[0],
        q1: sorted_quantile(&s, 0.25),
        median: sorted_quantile(&s, 0.5),
        q3: sorted_quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}
