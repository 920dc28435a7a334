use serde::{Deserialize, Serialize};

use super::{rows_f64, training_view, Result, ShallowError};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaSpec {
    /// `1 / Σ_j var(column j)` over the training rows.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: GammaSpec },
}

/// Kernel with its width resolved against the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Stopping threshold on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, kernel: KernelSpec::Rbf { gamma: GammaSpec::Scale }, tol: 1e-3, max_iter: 10_000_000 }
    }
}

/// One binary machine of the one-vs-one ensemble. A positive score votes for
/// `classes.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub classes: (usize, usize),
    /// Indices into `SvmModel::support_vectors`.
    pub support: Vec<usize>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Label value of each class slot.
    pub classes: Vec<usize>,
    pub n_features: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub pairs: Vec<PairModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmPrediction {
    pub labels: Vec<usize>,
    /// Per row, the decision value of each pair machine in `SvmModel::pairs` order.
    pub scores: Vec<Vec<f64>>,
}

pub fn svm_train<T: Real>(x: &FeatureMatrix<T>, params: &SvmParams) -> Result<SvmModel> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ShallowError::InvalidParams(format!("C = {}", params.c)));
    }
    if !(params.tol > 0.0) {
        return Err(ShallowError::InvalidParams(format!("tolerance {}", params.tol)));
    }
    let (rows, classes) = training_view(x)?;
    let n = rows.len();
    let kernel = match params.kernel {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Rbf { gamma: GammaSpec::Value(g) } if g > 0.0 => Kernel::Rbf { gamma: g },
        KernelSpec::Rbf { gamma: GammaSpec::Value(g) } => {
            return Err(ShallowError::InvalidParams(format!("gamma = {g}")))
        }
        KernelSpec::Rbf { gamma: GammaSpec::Scale } => Kernel::Rbf { gamma: scale_gamma(&rows) },
    };
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(&rows[i], &rows[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let slot_of: Vec<usize> = x.labels().iter().map(|l| classes.binary_search(l).unwrap()).collect();

    let mut sv_index: Vec<Option<usize>> = vec![None; n];
    let mut support_vectors = Vec::new();
    let mut pairs = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let members: Vec<usize> = (0..n).filter(|&i| slot_of[i] == a || slot_of[i] == b).collect();
            let y: Vec<f64> = members.iter().map(|&i| if slot_of[i] == a { 1.0 } else { -1.0 }).collect();
            let sol = smo(&gram, n, &members, &y, params.c, params.tol, params.max_iter);
            if sol.kkt_gap >= params.tol {
                log::warn!(
                    "SVM pair ({a}, {b}) stopped after {} iterations with KKT gap {:.3e}",
                    sol.iterations,
                    sol.kkt_gap
                );
            }
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for (k, &i) in members.iter().enumerate() {
                if sol.alpha[k] > 0.0 {
                    let slot = *sv_index[i].get_or_insert_with(|| {
                        support_vectors.push(rows[i].clone());
                        support_vectors.len() - 1
                    });
                    support.push(slot);
                    coef.push(sol.alpha[k] * y[k]);
                }
            }
            pairs.push(PairModel {
                classes: (a, b),
                support,
                coef,
                bias: -sol.rho,
                kkt_gap: sol.kkt_gap,
                iterations: sol.iterations,
            });
        }
    }
    Ok(SvmModel { kernel, c: params.c, classes, n_features: x.n_cols(), support_vectors, pairs })
}

fn scale_gamma(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let p = rows.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for j in 0..p {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        total += rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
    }
    if total > 0.0 {
        1.0 / total
    } else {
        1.0
    }
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    kkt_gap: f64,
    iterations: usize,
}

/// Dual C-SVC by sequential minimal optimization with second-order working
/// set selection. `members` index rows of the shared Gram matrix.
fn smo(gram: &[f64], stride: usize, members: &[usize], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Solution {
    const TAU: f64 = 1e-12;
    let m = members.len();
    let k = |p: usize, q: usize| gram[members[p] * stride + members[q]];
    let diag: Vec<f64> = (0..m).map(|p| k(p, p)).collect();
    let mut alpha = vec![0.0; m];
    let mut grad = vec![-1.0; m];
    let up = |a: f64, yy: f64| (yy > 0.0 && a < c) || (yy < 0.0 && a > 0.0);
    let low = |a: f64, yy: f64| (yy > 0.0 && a > 0.0) || (yy < 0.0 && a < c);
    let mut iterations = 0;
    let kkt_gap = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..m {
            if !low(alpha[t], y[t]) {
                continue;
            }
            gmax2 = gmax2.max(y[t] * grad[t]);
            if i == usize::MAX {
                continue;
            }
            let diff = gmax + y[t] * grad[t];
            if diff > 0.0 {
                let mut quad = diag[i] + diag[t] - 2.0 * k(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -diff * diff / quad;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || j == usize::MAX || iterations >= max_iter {
            break gap.max(0.0);
        }
        iterations += 1;

        let qij = y[i] * y[j] * k(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..m {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    };

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Solution { alpha, rho, kkt_gap, iterations }
}

impl SvmModel {
    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.n_features {
            return Err(ShallowError::DimensionMismatch { expected: self.n_features, actual: cols });
        }
        Ok(())
    }

    /// Decision values of every pair machine for one row.
    pub fn decision_function(&self, row: &[f64]) -> Vec<f64> {
        let kx: Vec<f64> = self.support_vectors.iter().map(|sv| self.kernel.eval(sv, row)).collect();
        self.pairs
            .iter()
            .map(|p| p.support.iter().zip(&p.coef).map(|(&s, &a)| a * kx[s]).sum::<f64>() + p.bias)
            .collect()
    }

    /// One-vs-one vote; ties go to the class with the larger summed margin.
    pub fn vote(&self, scores: &[f64]) -> usize {
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut margin = vec![0.0; k];
        for (p, &s) in self.pairs.iter().zip(scores) {
            let (a, b) = p.classes;
            if s > 0.0 {
                votes[a] += 1;
            } else {
                votes[b] += 1;
            }
            margin[a] += s;
            margin[b] -= s;
        }
        let best = (0..k)
            .max_by(|&u, &v| votes[u].cmp(&votes[v]).then(margin[u].total_cmp(&margin[v])).then(v.cmp(&u)))
            .unwrap_or(0);
        self.classes[best]
    }

    pub fn predict<T: Real>(&self, x: &FeatureMatrix<T>) -> Result<SvmPrediction> {
        self.check(x.n_cols())?;
        let rows = rows_f64(x)?;
        let scores: Vec<Vec<f64>> = rows.iter().map(|r| self.decision_function(r)).collect();
        let labels = scores.iter().map(|s| self.vote(s)).collect();
        Ok(SvmPrediction { labels, scores })
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn max_kkt_gap(&self) -> f64 {
        self.pairs.iter().map(|p| p.kkt_gap).fold(0.0, f64::max)
    }
}
