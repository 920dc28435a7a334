use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{axpy, dot, NeuralError, Result};
use crate::scalar::Real;

/// Borrowed view of one cell's tensors inside a flat parameter vector.
#[derive(Clone, Copy)]
pub(crate) struct CellRef<'a, T> {
    pub d: usize,
    pub h: usize,
    pub w: &'a [T],
    pub u: &'a [T],
    pub b: &'a [T],
}

/// Owned parameters of a single LSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<T> {
    pub d: usize,
    pub h: usize,
    /// `4h × d`, gate blocks i, f, g, o.
    pub w: Vec<T>,
    /// `4h × h`.
    pub u: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> LstmCellParams<T> {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self { d, h, w: vec![T::zero(); 4 * h * d], u: vec![T::zero(); 4 * h * h], b: vec![T::zero(); 4 * h] }
    }

    /// Uniform(±1/√h) weights and biases, forget bias 1.
    pub fn random(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (h as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect::<Vec<T>>();
        let w = draw(4 * h * d);
        let u = draw(4 * h * h);
        let mut b = draw(4 * h);
        b[h..2 * h].iter_mut().for_each(|v| *v += T::one());
        Self { d, h, w, u, b }
    }

    pub(crate) fn view(&self) -> CellRef<'_, T> {
        CellRef { d: self.d, h: self.h, w: &self.w, u: &self.u, b: &self.b }
    }
}

/// Per-step activations kept for backpropagation, in processing order.
pub(crate) struct Trace<T> {
    /// Activated gates `i, f, g, o` per step (`steps × 4h`).
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
    pub steps: usize,
}

impl<T: Real> Trace<T> {
    pub fn final_h(&self, h: usize) -> Vec<T> {
        if self.steps == 0 {
            vec![T::zero(); h]
        } else {
            self.h[(self.steps - 1) * h..].to_vec()
        }
    }
}

/// Run the recurrence over `x` (`steps × d`, time-major), optionally from the
/// last step to the first. Initial `h` and `c` are zero.
pub(crate) fn run_cell<T: Real>(cell: CellRef<'_, T>, x: &[T], steps: usize, reverse: bool) -> Trace<T> {
    let (d, h) = (cell.d, cell.h);
    let mut gates = vec![T::zero(); steps * 4 * h];
    let mut cs = vec![T::zero(); steps * h];
    let mut hs = vec![T::zero(); steps * h];
    let zero = vec![T::zero(); h];
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let xt = &x[t * d..(t + 1) * d];
        let (h_done, h_rest) = hs.split_at_mut(k * h);
        let (c_done, c_rest) = cs.split_at_mut(k * h);
        let (h_prev, c_prev) = if k == 0 { (&zero[..], &zero[..]) } else { (&h_done[(k - 1) * h..], &c_done[(k - 1) * h..]) };
        let z = &mut gates[k * 4 * h..(k + 1) * 4 * h];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = cell.b[r] + dot(&cell.w[r * d..(r + 1) * d], xt) + dot(&cell.u[r * h..(r + 1) * h], h_prev);
        }
        let (c_now, h_now) = (&mut c_rest[..h], &mut h_rest[..h]);
        for j in 0..h {
            let i = z[j].sigmoid();
            let f = z[h + j].sigmoid();
            let g = z[2 * h + j].tanh();
            let o = z[3 * h + j].sigmoid();
            z[j] = i;
            z[h + j] = f;
            z[2 * h + j] = g;
            z[3 * h + j] = o;
            c_now[j] = f * c_prev[j] + i * g;
            h_now[j] = o * c_now[j].tanh();
        }
    }
    Trace { gates, c: cs, h: hs, steps }
}

/// Accumulate `∂L/∂(W, U, b)` given `∂L/∂h_final`; the loss depends on the
/// sequence only through the final hidden state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backprop_cell<T: Real>(
    cell: CellRef<'_, T>,
    x: &[T],
    trace: &Trace<T>,
    reverse: bool,
    dh_final: &[T],
    gw: &mut [T],
    gu: &mut [T],
    gb: &mut [T],
) {
    let (d, h, steps) = (cell.d, cell.h, trace.steps);
    let one = T::one();
    let zero = vec![T::zero(); h];
    let mut dh = dh_final.to_vec();
    let mut dc = vec![T::zero(); h];
    let mut dz = vec![T::zero(); 4 * h];
    let mut dh_prev = vec![T::zero(); h];
    for k in (0..steps).rev() {
        let t = if reverse { steps - 1 - k } else { k };
        let xt = &x[t * d..(t + 1) * d];
        let gate = &trace.gates[k * 4 * h..(k + 1) * 4 * h];
        let c_now = &trace.c[k * h..(k + 1) * h];
        let (h_prev, c_prev) =
            if k == 0 { (&zero[..], &zero[..]) } else { (&trace.h[(k - 1) * h..k * h], &trace.c[(k - 1) * h..k * h]) };
        for j in 0..h {
            let (i, f, g, o) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
            let tc = c_now[j].tanh();
            let dcj = dc[j] + dh[j] * o * (one - tc * tc);
            dz[j] = dcj * g * i * (one - i);
            dz[h + j] = dcj * c_prev[j] * f * (one - f);
            dz[2 * h + j] = dcj * i * (one - g * g);
            dz[3 * h + j] = dh[j] * tc * o * (one - o);
            dc[j] = dcj * f;
        }
        dh_prev.iter_mut().for_each(|v| *v = T::zero());
        for (r, &zr) in dz.iter().enumerate() {
            axpy(&mut gw[r * d..(r + 1) * d], zr, xt);
            if k > 0 {
                axpy(&mut gu[r * h..(r + 1) * h], zr, h_prev);
            }
            gb[r] += zr;
            axpy(&mut dh_prev, zr, &cell.u[r * h..(r + 1) * h]);
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }
}

/// Hidden states of a forward pass and the final `(h, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmOutput<T> {
    /// `steps × h`, time-major.
    pub hidden: Vec<T>,
    pub final_h: Vec<T>,
    pub final_c: Vec<T>,
}

/// Unidirectional LSTM over `sequence` (`steps × d`).
pub fn lstm_forward<T: Real>(cell: &LstmCellParams<T>, sequence: &[T], steps: usize) -> Result<LstmOutput<T>> {
    check_cell(cell)?;
    if sequence.len() != steps * cell.d {
        return Err(NeuralError::DimensionMismatch {
            what: "sequence length",
            expected: steps * cell.d,
            actual: sequence.len(),
        });
    }
    let trace = run_cell(cell.view(), sequence, steps, false);
    let h = cell.h;
    let final_c = if steps == 0 { vec![T::zero(); h] } else { trace.c[(steps - 1) * h..].to_vec() };
    Ok(LstmOutput { final_h: trace.final_h(h), final_c, hidden: trace.h })
}

/// Forward cell's final state followed by the backward cell's final state
/// over the reversed sequence (length `2h`).
pub fn bilstm_forward<T: Real>(
    fwd: &LstmCellParams<T>,
    bwd: &LstmCellParams<T>,
    sequence: &[T],
    steps: usize,
) -> Result<Vec<T>> {
    if fwd.h != bwd.h || fwd.d != bwd.d {
        return Err(NeuralError::DimensionMismatch { what: "bidirectional cell sizes", expected: fwd.h, actual: bwd.h });
    }
    let f = lstm_forward(fwd, sequence, steps)?;
    check_cell(bwd)?;
    let b = run_cell(bwd.view(), sequence, steps, true);
    let mut out = f.final_h;
    out.extend(b.final_h(bwd.h));
    Ok(out)
}

fn check_cell<T>(cell: &LstmCellParams<T>) -> Result<()> {
    let (d, h) = (cell.d, cell.h);
    for (what, expected, actual) in
        [("W", 4 * h * d, cell.w.len()), ("U", 4 * h * h, cell.u.len()), ("b", 4 * h, cell.b.len())]
    {
        if expected != actual {
            return Err(NeuralError::DimensionMismatch { what, expected, actual });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-by-scalar recurrence written independently of the library code.
    fn reference(p: &LstmCellParams<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (d, h) = (p.d, p.h);
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut out = Vec::new();
        for xt in x {
            let pre = |gate: usize, j: usize| {
                let r = gate * h + j;
                let mut s = p.b[r];
                for k in 0..d {
                    s += p.w[r * d + k] * xt[k];
                }
                for k in 0..h {
                    s += p.u[r * h + k] * hs[k];
                }
                s
            };
            let mut nh = vec![0.0; h];
            let mut nc = vec![0.0; h];
            for j in 0..h {
                let i = sigmoid(pre(0, j));
                let f = sigmoid(pre(1, j));
                let g = pre(2, j).tanh();
                let o = sigmoid(pre(3, j));
                nc[j] = f * cs[j] + i * g;
                nh[j] = o * nc[j].tanh();
            }
            hs = nh;
            cs = nc;
            out.push(hs.clone());
        }
        out
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let p = LstmCellParams::<f64>::zeros(2, 3);
        let out = lstm_forward(&p, &[1.0, -2.0, 3.0, 4.0, 0.5, 9.0], 3).unwrap();
        assert!(out.hidden.iter().all(|&v| v == 0.0));
        let q = LstmCellParams::<f64>::zeros(2, 3);
        assert_eq!(bilstm_forward(&p, &q, &[1.0, 2.0], 1).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn empty_sequence_keeps_initial_state() {
        let p = LstmCellParams::<f64>::random(2, 3, 1);
        let out = lstm_forward(&p, &[], 0).unwrap();
        assert_eq!(out.final_h, [0.0; 3]);
        assert_eq!(out.final_c, [0.0; 3]);
    }

    #[test]
    fn matches_scalar_reference() {
        let p = LstmCellParams::<f64>::random(2, 2, 42);
        let x = vec![vec![0.3, -1.2], vec![0.8, 0.1], vec![-0.5, 0.9]];
        let got = lstm_forward(&p, &x.concat(), 3).unwrap();
        for (t, want) in reference(&p, &x).iter().enumerate() {
            for j in 0..2 {
                assert!((got.hidden[t * 2 + j] - want[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bilstm_is_composition() {
        let f = LstmCellParams::<f64>::random(3, 4, 1);
        let b = LstmCellParams::<f64>::random(3, 4, 2);
        let x: Vec<f64> = (0..15).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let rev: Vec<f64> = x.chunks(3).rev().flatten().copied().collect();
        let out = bilstm_forward(&f, &b, &x, 5).unwrap();
        let mut want = lstm_forward(&f, &x, 5).unwrap().final_h;
        want.extend(lstm_forward(&b, &rev, 5).unwrap().final_h);
        assert_eq!(out, want);
        // reversing the input with swapped cells swaps the halves
        let swapped = bilstm_forward(&b, &f, &rev, 5).unwrap();
        assert_eq!(&swapped[..4], &out[4..]);
        assert_eq!(&swapped[4..], &out[..4]);
    }

    #[test]
    fn palindrome_with_shared_cell_gives_equal_halves() {
        let p = LstmCellParams::<f64>::random(2, 3, 9);
        let x = [1.0, 0.5, -0.2, 0.3, 0.7, 0.7, -0.2, 0.3, 1.0, 0.5];
        let out = bilstm_forward(&p, &p, &x, 5).unwrap();
        assert_eq!(&out[..3], &out[3..]);
    }

    #[test]
    fn dimension_errors() {
        let p = LstmCellParams::<f64>::random(2, 3, 9);
        assert!(matches!(lstm_forward(&p, &[1.0; 5], 3), Err(NeuralError::DimensionMismatch { .. })));
        let q = LstmCellParams::<f64>::random(2, 4, 9);
        assert!(bilstm_forward(&p, &q, &[1.0; 4], 2).is_err());
    }
}
