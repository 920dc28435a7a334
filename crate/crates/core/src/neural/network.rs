use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{backprop_cell, run_cell, CellRef, Trace};
use super::{axpy, dot, DenseSlots, Layout, NetworkSpec, NeuralError, Result, SequenceBatch};
use crate::scalar::Real;

/// Dropout is active only in `Train`, with masks drawn from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Intermediate activations of the head for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace<T> {
    /// Recurrent output before dropout.
    pub representation: Vec<T>,
    /// Inverted-dropout multipliers (0 or 1/(1−p)); all ones in eval mode.
    pub mask1: Vec<T>,
    /// First dense pre-activation.
    pub a1: Vec<T>,
    pub mask2: Vec<T>,
    /// Second dense pre-activation.
    pub a2: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

struct SeqForward<T> {
    traces: Vec<Trace<T>>,
    head: HeadTrace<T>,
    r_drop: Vec<T>,
    z1_drop: Vec<T>,
    z2: Vec<T>,
}

fn cell<'a, T: Real>(layout: &Layout, params: &'a [T], k: usize) -> CellRef<'a, T> {
    let s = layout.cells[k];
    CellRef { d: s.d, h: s.h, w: &params[s.w..s.u], u: &params[s.u..s.b], b: &params[s.b..s.b + 4 * s.h] }
}

fn dense<T: Real>(params: &[T], s: &DenseSlots, input: &[T]) -> Vec<T> {
    (0..s.n_out).map(|o| params[s.b + o] + dot(&params[s.w + o * s.n_in..s.w + (o + 1) * s.n_in], input)).collect()
}

fn mask<T: Real>(n: usize, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Vec<T> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = T::lit(1.0 / (1.0 - p));
            (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
        }
        _ => vec![T::one(); n],
    }
}

pub(crate) fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn relu<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

fn forward_seq<T: Real>(
    spec: &NetworkSpec,
    layout: &Layout,
    params: &[T],
    x: &[T],
    steps: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> SeqForward<T> {
    let h = spec.front.hidden();
    let traces: Vec<Trace<T>> =
        (0..layout.cells.len()).map(|k| run_cell(cell(layout, params, k), x, steps, k == 1)).collect();
    let representation: Vec<T> = traces.iter().flat_map(|t| t.final_h(h)).collect();
    let mask1 = mask(representation.len(), spec.dropout[0], &mut rng);
    let r_drop: Vec<T> = representation.iter().zip(&mask1).map(|(&a, &m)| a * m).collect();
    let a1 = dense(params, &layout.dense[0], &r_drop);
    let mask2 = mask(a1.len(), spec.dropout[1], &mut rng);
    let z1_drop: Vec<T> = relu(&a1).iter().zip(&mask2).map(|(&a, &m)| a * m).collect();
    let a2 = dense(params, &layout.dense[1], &z1_drop);
    let z2 = relu(&a2);
    let logits = dense(params, &layout.dense[2], &z2);
    let probs = softmax(&logits);
    SeqForward { traces, head: HeadTrace { representation, mask1, a1, mask2, a2, logits, probs }, r_drop, z1_drop, z2 }
}

fn dense_backward<T: Real>(params: &[T], s: &DenseSlots, input: &[T], dout: &[T], grad: &mut [T]) -> Vec<T> {
    let mut din = vec![T::zero(); s.n_in];
    for (o, &g) in dout.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        axpy(&mut grad[s.w + o * s.n_in..s.w + (o + 1) * s.n_in], g, input);
        grad[s.b + o] += g;
        axpy(&mut din, g, &params[s.w + o * s.n_in..s.w + (o + 1) * s.n_in]);
    }
    din
}

#[allow(clippy::too_many_arguments)]
fn backward_seq<T: Real>(
    layout: &Layout,
    params: &[T],
    x: &[T],
    fwd: &SeqForward<T>,
    label: usize,
    scale: T,
    grad: &mut [T],
) {
    let head = &fwd.head;
    let dlogits: Vec<T> = head
        .probs
        .iter()
        .enumerate()
        .map(|(c, &p)| (p - if c == label { T::one() } else { T::zero() }) * scale)
        .collect();
    let dz2 = dense_backward(params, &layout.dense[2], &fwd.z2, &dlogits, grad);
    let da2: Vec<T> = dz2.iter().zip(&head.a2).map(|(&g, &a)| if a > T::zero() { g } else { T::zero() }).collect();
    let dz1 = dense_backward(params, &layout.dense[1], &fwd.z1_drop, &da2, grad);
    let da1: Vec<T> = dz1
        .iter()
        .zip(&head.mask2)
        .zip(&head.a1)
        .map(|((&g, &m), &a)| if a > T::zero() { g * m } else { T::zero() })
        .collect();
    let dr_drop = dense_backward(params, &layout.dense[0], &fwd.r_drop, &da1, grad);
    let dr: Vec<T> = dr_drop.iter().zip(&head.mask1).map(|(&g, &m)| g * m).collect();
    for (k, trace) in fwd.traces.iter().enumerate() {
        let s = layout.cells[k];
        let dh = &dr[k * s.h..(k + 1) * s.h];
        let (gw, rest) = grad[s.w..s.b + 4 * s.h].split_at_mut(s.u - s.w);
        let (gu, gb) = rest.split_at_mut(s.b - s.u);
        backprop_cell(cell(layout, params, k), x, trace, k == 1, dh, gw, gu, gb);
    }
}

fn check<T: Real>(spec: &NetworkSpec, layout: &Layout, params: &[T], batch: &SequenceBatch<T>) -> Result<()> {
    spec.validate()?;
    if params.len() != layout.len {
        return Err(NeuralError::DimensionMismatch { what: "parameter vector", expected: layout.len, actual: params.len() });
    }
    if batch.features != spec.input_dim {
        return Err(NeuralError::DimensionMismatch { what: "input features", expected: spec.input_dim, actual: batch.features });
    }
    if batch.n_classes != spec.n_classes {
        return Err(NeuralError::DimensionMismatch { what: "classes", expected: spec.n_classes, actual: batch.n_classes });
    }
    Ok(())
}

/// Class probabilities for every sequence of the batch.
pub fn forward<T: Real>(spec: &NetworkSpec, params: &[T], batch: &SequenceBatch<T>, mut mode: Mode<'_>) -> Result<Vec<Vec<T>>> {
    let layout = spec.layout();
    check(spec, &layout, params, batch)?;
    Ok((0..batch.batch)
        .map(|b| {
            let rng = match &mut mode {
                Mode::Eval => None,
                Mode::Train(rng) => Some(&mut **rng),
            };
            forward_seq(spec, &layout, params, batch.sequence(b), batch.timesteps, rng).head.probs
        })
        .collect())
}

/// Head activations for one sequence of `steps × input_dim` values.
pub fn forward_trace<T: Real>(spec: &NetworkSpec, params: &[T], sequence: &[T], steps: usize, mode: Mode<'_>) -> Result<HeadTrace<T>> {
    let layout = spec.layout();
    if params.len() != layout.len || sequence.len() != steps * spec.input_dim {
        return Err(NeuralError::DimensionMismatch { what: "sequence", expected: steps * spec.input_dim, actual: sequence.len() });
    }
    let rng = match mode {
        Mode::Eval => None,
        Mode::Train(rng) => Some(rng),
    };
    Ok(forward_seq(spec, &layout, params, sequence, steps, rng).head)
}

/// Mean categorical cross-entropy with probabilities clipped at 1e-12.
pub fn loss<T: Real>(probs: &[Vec<T>], one_hot: &[Vec<T>]) -> Result<T> {
    if probs.len() != one_hot.len() || probs.iter().zip(one_hot).any(|(p, y)| p.len() != y.len()) || probs.is_empty() {
        return Err(NeuralError::ShapeMismatch(format!("{} probability rows vs {} label rows", probs.len(), one_hot.len())));
    }
    let floor = T::lit(1e-12);
    let total: T = probs
        .iter()
        .zip(one_hot)
        .map(|(p, y)| p.iter().zip(y).map(|(&pi, &yi)| -yi * pi.max(floor).ln()).sum::<T>())
        .sum();
    Ok(total / T::of_usize(probs.len()))
}

/// `(softmax(z) − y) / batch`, the gradient of mean cross-entropy at the logits.
pub fn softmax_ce_logit_grad<T: Real>(logits: &[Vec<T>], labels: &[usize]) -> Vec<Vec<T>> {
    let n = T::of_usize(logits.len());
    logits
        .iter()
        .zip(labels)
        .map(|(z, &l)| softmax(z).iter().enumerate().map(|(c, &p)| (p - if c == l { T::one() } else { T::zero() }) / n).collect())
        .collect()
}

/// Accumulate the gradient of the mean loss over `idx` into `grad`; returns the
/// summed loss and the number of correct predictions.
pub(crate) fn accumulate<T: Real>(
    spec: &NetworkSpec,
    layout: &Layout,
    params: &[T],
    batch: &SequenceBatch<T>,
    idx: &[usize],
    mut rng: Option<&mut ChaCha8Rng>,
    grad: &mut [T],
) -> (T, usize) {
    let scale = T::one() / T::of_usize(idx.len().max(1));
    let floor = T::lit(1e-12);
    let mut total = T::zero();
    let mut correct = 0;
    for &b in idx {
        let x = batch.sequence(b);
        let label = batch.labels[b];
        let fwd = forward_seq(spec, layout, params, x, batch.timesteps, rng.as_deref_mut());
        total += -fwd.head.probs[label].max(floor).ln();
        correct += usize::from(argmax(&fwd.head.probs) == label);
        backward_seq(layout, params, x, &fwd, label, scale, grad);
    }
    (total, correct)
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// Mean loss and its exact gradient with respect to every parameter.
pub fn backward<T: Real>(spec: &NetworkSpec, params: &[T], batch: &SequenceBatch<T>, mode: Mode<'_>) -> Result<(T, Vec<T>)> {
    let layout = spec.layout();
    check(spec, &layout, params, batch)?;
    let mut grad = vec![T::zero(); layout.len];
    let rng = match mode {
        Mode::Eval => None,
        Mode::Train(rng) => Some(rng),
    };
    let idx: Vec<usize> = (0..batch.batch).collect();
    let (total, _) = accumulate(spec, &layout, params, batch, &idx, rng, &mut grad);
    Ok((total / T::of_usize(batch.batch.max(1)), grad))
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, Front};
    use super::*;
    use rand::SeedableRng;

    fn tiny(front: Front, dropout: [f64; 2]) -> NetworkSpec {
        NetworkSpec { input_dim: 3, front, dense: [5, 4], n_classes: 3, dropout }
    }

    fn batch(seed: u64, b: usize, t: usize) -> SequenceBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..b * t * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        SequenceBatch::new(data, b, t, 3, (0..b).map(|i| i % 3).collect(), 3).unwrap()
    }

    fn max_rel_err(spec: &NetworkSpec, params: &[f64], data: &SequenceBatch<f64>, mask_seed: Option<u64>) -> f64 {
        let eval = |p: &[f64]| {
            let mut rng = mask_seed.map(ChaCha8Rng::seed_from_u64);
            let mode = match rng.as_mut() {
                Some(r) => Mode::Train(r),
                None => Mode::Eval,
            };
            backward(spec, p, data, mode).unwrap()
        };
        let (_, analytic) = eval(params);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let mut p = params.to_vec();
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + eps;
            let up = eval(&p).0;
            p[i] = orig - eps;
            let down = eval(&p).0;
            p[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            // below 1e-6 the central difference is dominated by rounding noise
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_check_lstm_and_bilstm() {
        for front in [Front::Lstm { hidden: 4 }, Front::BiLstm { hidden: 4 }] {
            let spec = tiny(front, [0.3, 0.2]);
            let params: Vec<f64> = init_params(&spec, 3);
            let data = batch(1, 2, 5);
            assert!(max_rel_err(&spec, &params, &data, None) < 1e-4);
            assert!(max_rel_err(&spec, &params, &data, Some(8)) < 1e-4);
        }
    }

    #[test]
    fn probabilities_in_simplex() {
        let spec = tiny(Front::BiLstm { hidden: 4 }, [0.5, 0.5]);
        let params: Vec<f64> = init_params(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for probs in forward(&spec, &params, &batch(2, 6, 7), Mode::Train(&mut rng)).unwrap() {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let spec = tiny(Front::BiLstm { hidden: 4 }, [0.0, 0.0]);
        let params: Vec<f64> = init_params(&spec, 1);
        let data = batch(3, 4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            forward(&spec, &params, &data, Mode::Train(&mut rng)).unwrap(),
            forward(&spec, &params, &data, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let params_for = |dropout| {
            let spec = tiny(Front::Lstm { hidden: 4 }, dropout);
            let p: Vec<f64> = init_params(&spec, 11);
            (spec, p)
        };
        let data = batch(4, 1, 6);
        let x = data.sequence(0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // first dropout feeds the first dense layer linearly
        let (spec, p) = params_for([0.4, 0.0]);
        let eval = forward_trace(&spec, &p, x, 6, Mode::Eval).unwrap();
        let mut mean = vec![0.0; eval.a1.len()];
        for _ in 0..10_000 {
            let t = forward_trace(&spec, &p, x, 6, Mode::Train(&mut rng)).unwrap();
            axpy(&mut mean, 1e-4, &t.a1);
        }
        let scale = eval.a1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (m, e) in mean.iter().zip(&eval.a1) {
            assert!((m - e).abs() < 0.02 * scale);
        }
        let (spec, p) = params_for([0.0, 0.4]);
        let eval = forward_trace(&spec, &p, x, 6, Mode::Eval).unwrap();
        let mut mean = vec![0.0; eval.a2.len()];
        for _ in 0..10_000 {
            let t = forward_trace(&spec, &p, x, 6, Mode::Train(&mut rng)).unwrap();
            axpy(&mut mean, 1e-4, &t.a2);
        }
        let scale = eval.a2.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (m, e) in mean.iter().zip(&eval.a2) {
            assert!((m - e).abs() < 0.02 * scale);
        }
    }

    #[test]
    fn loss_examples() {
        let y = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(loss(&[vec![1.0, 0.0], vec![0.0, 1.0]], &y).unwrap(), 0.0);
        let u = vec![vec![0.25; 4]];
        assert!((loss(&u, &[vec![0.0, 0.0, 1.0, 0.0]]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let two = loss(&[vec![0.5, 0.5], vec![0.75, 0.25]], &y).unwrap();
        assert!((two - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!(matches!(loss(&[vec![1.0]], &y), Err(NeuralError::ShapeMismatch(_))));
    }

    #[test]
    fn logit_gradient_identity() {
        let logits: Vec<Vec<f64>> = vec![vec![0.3, -1.0, 2.0], vec![1.5, 0.2, -0.7]];
        let labels = [2, 0];
        let fast = softmax_ce_logit_grad(&logits, &labels);
        // chain rule through the softmax Jacobian
        for (b, z) in logits.iter().enumerate() {
            let p = softmax(z);
            for j in 0..3 {
                let mut g = 0.0;
                for i in 0..3 {
                    let dl_dp = if i == labels[b] { -1.0 / p[i] / 2.0 } else { 0.0 };
                    let dp_dz = p[i] * (if i == j { 1.0 } else { 0.0 } - p[j]);
                    g += dl_dp * dp_dz;
                }
                assert!((fast[b][j] - g).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_input_path_has_no_input_weight_gradient() {
        let spec = tiny(Front::BiLstm { hidden: 4 }, [0.0, 0.0]);
        let params: Vec<f64> = init_params(&spec, 5);
        let zeros = SequenceBatch::new(vec![0.0; 2 * 5 * 3], 2, 5, 3, vec![0, 1], 3).unwrap();
        let (_, g) = backward(&spec, &params, &zeros, Mode::Eval).unwrap();
        for c in &spec.layout().cells {
            assert!(g[c.w..c.u].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let spec = tiny(Front::Lstm { hidden: 4 }, [0.0, 0.0]);
        let params: Vec<f64> = init_params(&spec, 5);
        let one = batch(6, 2, 4);
        let mut data = one.data.clone();
        data.extend_from_slice(&one.data);
        let mut labels = one.labels.clone();
        labels.extend_from_slice(&one.labels);
        let two = SequenceBatch::new(data, 4, 4, 3, labels, 3).unwrap();
        let (la, ga) = backward(&spec, &params, &one, Mode::Eval).unwrap();
        let (lb, gb) = backward(&spec, &params, &two, Mode::Eval).unwrap();
        assert!((la - lb).abs() < 1e-12);
        for (a, b) in ga.iter().zip(&gb) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_input_rejected() {
        let spec = tiny(Front::Lstm { hidden: 4 }, [0.0, 0.0]);
        let params: Vec<f64> = init_params(&spec, 5);
        let wrong = SequenceBatch::new(vec![0.0; 8], 1, 4, 2, vec![0], 3).unwrap();
        assert!(matches!(forward(&spec, &params, &wrong, Mode::Eval), Err(NeuralError::DimensionMismatch { .. })));
    }
}
