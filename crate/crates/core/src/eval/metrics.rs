use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Macro-averaged classification metrics with the confusion matrix
/// (rows are true classes, columns predictions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch { expected: y_true.len(), actual: y_pred.len() });
    }
    if n_classes == 0 {
        return Err(EvalError::Invalid("zero classes".into()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(EvalError::LabelOutOfRange { label: t.max(p), n_classes });
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    let mut absent = Vec::new();
    for c in 0..n_classes {
        let support: usize = confusion[c].iter().sum();
        if support == 0 {
            absent.push(c);
            continue;
        }
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let tp = confusion[c][c];
        let (p, r) = (ratio(tp, predicted), ratio(tp, support));
        p_sum += p;
        r_sum += r;
        f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    if !absent.is_empty() && !y_true.is_empty() {
        log::warn!("classes {absent:?} have no true samples; they count as 0 in macro averages");
    }
    let k = n_classes as f64;
    Ok(Metrics {
        accuracy: ratio(correct, y_true.len()),
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        macro_f1: f_sum / k,
        confusion,
    })
}

/// Accuracy of a uniform random guess.
pub fn chance_level(n_classes: usize) -> f64 {
    assert!(n_classes >= 2, "chance level needs at least two classes");
    1.0 / n_classes as f64
}

impl Metrics {
    /// Fold average: the four scores are arithmetic means, confusions are summed.
    pub fn mean(folds: &[Metrics]) -> Result<Metrics> {
        let first = folds.first().ok_or_else(|| EvalError::Invalid("no folds to average".into()))?;
        let n = first.confusion.len();
        let mut confusion = vec![vec![0; n]; n];
        for m in folds {
            if m.confusion.len() != n {
                return Err(EvalError::LengthMismatch { expected: n, actual: m.confusion.len() });
            }
            for (acc, row) in confusion.iter_mut().zip(&m.confusion) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        let avg = |f: fn(&Metrics) -> f64| folds.iter().map(f).sum::<f64>() / folds.len() as f64;
        Ok(Metrics {
            accuracy: avg(|m| m.accuracy),
            macro_precision: avg(|m| m.macro_precision),
            macro_recall: avg(|m| m.macro_recall),
            macro_f1: avg(|m| m.macro_f1),
            confusion,
        })
    }
}
