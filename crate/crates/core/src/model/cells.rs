//! Per-step recurrent cell math, forward and reverse, shared by inference
//! and training.

use crate::linalg::{gemv_acc, gemv_t_acc, outer_acc};
use crate::Scalar;

/// Activations of one unrolled clip. `aux` holds per-step gate values:
/// LSTM `[i, f, g, o]`, GRU `[r, z, n, W_hn h + b_hn]`, each `hidden` wide.
#[derive(Debug, Clone)]
pub(crate) struct RecurrentTrace<T> {
    pub hidden: Vec<T>,
    pub aux: Vec<T>,
    pub cell: Vec<T>,
}

pub(crate) struct LstmWeights<'a, T> {
    pub w_ih: &'a [T],
    pub w_hh: &'a [T],
    pub bias: &'a [T],
    pub hidden: usize,
}

pub(crate) struct GruWeights<'a, T> {
    pub w_ih: &'a [T],
    pub w_hh: &'a [T],
    pub b_ih: &'a [T],
    pub b_hh: &'a [T],
    pub hidden: usize,
}

impl<T: Scalar> LstmWeights<'_, T> {
    /// One step. `gates` receives the activated `[i, f, g, o]`.
    pub fn step(&self, x: &[T], h_prev: &[T], c_prev: &[T], gates: &mut [T], c: &mut [T], h: &mut [T]) {
        let n = self.hidden;
        gates.copy_from_slice(self.bias);
        gemv_acc(gates, self.w_ih, x);
        gemv_acc(gates, self.w_hh, h_prev);
        for k in 0..n {
            let i = gates[k].sigmoid();
            let f = gates[n + k].sigmoid();
            let g = gates[2 * n + k].tanh();
            let o = gates[3 * n + k].sigmoid();
            gates[k] = i;
            gates[n + k] = f;
            gates[2 * n + k] = g;
            gates[3 * n + k] = o;
            c[k] = f * c_prev[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }

    pub fn forward(&self, x: &[T], frames: usize) -> RecurrentTrace<T> {
        let n = self.hidden;
        let input = x.len() / frames.max(1);
        let mut hidden = vec![T::zero(); frames * n];
        let mut cell = vec![T::zero(); frames * n];
        let mut aux = vec![T::zero(); frames * 4 * n];
        let zeros = vec![T::zero(); n];
        for t in 0..frames {
            let (h_done, h_rest) = hidden.split_at_mut(t * n);
            let (c_done, c_rest) = cell.split_at_mut(t * n);
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&h_done[(t - 1) * n..], &c_done[(t - 1) * n..])
            };
            self.step(
                &x[t * input..(t + 1) * input],
                h_prev,
                c_prev,
                &mut aux[t * 4 * n..(t + 1) * 4 * n],
                &mut c_rest[..n],
                &mut h_rest[..n],
            );
        }
        RecurrentTrace { hidden, aux, cell }
    }

    /// Backpropagation through time. `d_hidden` is dL/dh_t from the head for
    /// every step. Returns gradients for `[w_ih, w_hh, bias]`.
    pub fn backward(&self, x: &[T], frames: usize, trace: &RecurrentTrace<T>, d_hidden: &[T]) -> Vec<Vec<T>> {
        let n = self.hidden;
        let input = x.len() / frames.max(1);
        let mut g_ih = vec![T::zero(); self.w_ih.len()];
        let mut g_hh = vec![T::zero(); self.w_hh.len()];
        let mut g_b = vec![T::zero(); 4 * n];
        let mut dh_next = vec![T::zero(); n];
        let mut dc_next = vec![T::zero(); n];
        let mut dz = vec![T::zero(); 4 * n];
        let zeros = vec![T::zero(); n];
        let one = T::one();
        for t in (0..frames).rev() {
            let gates = &trace.aux[t * 4 * n..(t + 1) * 4 * n];
            let c = &trace.cell[t * n..(t + 1) * n];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&trace.hidden[(t - 1) * n..t * n], &trace.cell[(t - 1) * n..t * n])
            };
            for k in 0..n {
                let (i, f, g, o) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
                let dh = d_hidden[t * n + k] + dh_next[k];
                let tc = c[k].tanh();
                let dc = dc_next[k] + dh * o * (one - tc * tc);
                dz[k] = dc * g * i * (one - i);
                dz[n + k] = dc * c_prev[k] * f * (one - f);
                dz[2 * n + k] = dc * i * (one - g * g);
                dz[3 * n + k] = dh * tc * o * (one - o);
                dc_next[k] = dc * f;
            }
            outer_acc(&mut g_ih, &dz, &x[t * input..(t + 1) * input]);
            outer_acc(&mut g_hh, &dz, h_prev);
            for (b, d) in g_b.iter_mut().zip(&dz) {
                *b += *d;
            }
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            gemv_t_acc(&mut dh_next, self.w_hh, &dz);
        }
        vec![g_ih, g_hh, g_b]
    }
}

impl<T: Scalar> GruWeights<'_, T> {
    /// One step, `h = (1 - z) ⊙ n + z ⊙ h_prev`. `aux` receives
    /// `[r, z, n, W_hn h_prev + b_hn]`; `scratch` must hold `6 * hidden`.
    pub fn step(&self, x: &[T], h_prev: &[T], aux: &mut [T], h: &mut [T], scratch: &mut [T]) {
        let n = self.hidden;
        let (gi, gh) = scratch.split_at_mut(3 * n);
        gi.copy_from_slice(self.b_ih);
        gemv_acc(gi, self.w_ih, x);
        gh.copy_from_slice(self.b_hh);
        gemv_acc(gh, self.w_hh, h_prev);
        for k in 0..n {
            let r = (gi[k] + gh[k]).sigmoid();
            let z = (gi[n + k] + gh[n + k]).sigmoid();
            let hn = gh[2 * n + k];
            let cand = (gi[2 * n + k] + r * hn).tanh();
            aux[k] = r;
            aux[n + k] = z;
            aux[2 * n + k] = cand;
            aux[3 * n + k] = hn;
            h[k] = (T::one() - z) * cand + z * h_prev[k];
        }
    }

    pub fn forward(&self, x: &[T], frames: usize) -> RecurrentTrace<T> {
        let n = self.hidden;
        let input = x.len() / frames.max(1);
        let mut hidden = vec![T::zero(); frames * n];
        let mut aux = vec![T::zero(); frames * 4 * n];
        let mut scratch = vec![T::zero(); 6 * n];
        let zeros = vec![T::zero(); n];
        for t in 0..frames {
            let (done, rest) = hidden.split_at_mut(t * n);
            let h_prev = if t == 0 { &zeros[..] } else { &done[(t - 1) * n..] };
            self.step(
                &x[t * input..(t + 1) * input],
                h_prev,
                &mut aux[t * 4 * n..(t + 1) * 4 * n],
                &mut rest[..n],
                &mut scratch,
            );
        }
        RecurrentTrace { hidden, aux, cell: Vec::new() }
    }

    /// Returns gradients for `[w_ih, w_hh, b_ih, b_hh]`.
    pub fn backward(&self, x: &[T], frames: usize, trace: &RecurrentTrace<T>, d_hidden: &[T]) -> Vec<Vec<T>> {
        let n = self.hidden;
        let input = x.len() / frames.max(1);
        let mut g_ih = vec![T::zero(); self.w_ih.len()];
        let mut g_hh = vec![T::zero(); self.w_hh.len()];
        let mut g_bi = vec![T::zero(); 3 * n];
        let mut g_bh = vec![T::zero(); 3 * n];
        let mut dh_next = vec![T::zero(); n];
        let mut dgi = vec![T::zero(); 3 * n];
        let mut dgh = vec![T::zero(); 3 * n];
        let zeros = vec![T::zero(); n];
        let one = T::one();
        for t in (0..frames).rev() {
            let aux = &trace.aux[t * 4 * n..(t + 1) * 4 * n];
            let h_prev = if t == 0 { &zeros[..] } else { &trace.hidden[(t - 1) * n..t * n] };
            let mut dh_prev = vec![T::zero(); n];
            for k in 0..n {
                let (r, z, cand, hn) = (aux[k], aux[n + k], aux[2 * n + k], aux[3 * n + k]);
                let dh = d_hidden[t * n + k] + dh_next[k];
                let d_cand = dh * (one - z) * (one - cand * cand);
                let d_z = dh * (h_prev[k] - cand) * z * (one - z);
                let d_r = d_cand * hn * r * (one - r);
                dgi[k] = d_r;
                dgi[n + k] = d_z;
                dgi[2 * n + k] = d_cand;
                dgh[k] = d_r;
                dgh[n + k] = d_z;
                dgh[2 * n + k] = d_cand * r;
                dh_prev[k] = dh * z;
            }
            outer_acc(&mut g_ih, &dgi, &x[t * input..(t + 1) * input]);
            outer_acc(&mut g_hh, &dgh, h_prev);
            for k in 0..3 * n {
                g_bi[k] += dgi[k];
                g_bh[k] += dgh[k];
            }
            gemv_t_acc(&mut dh_prev, self.w_hh, &dgh);
            dh_next = dh_prev;
        }
        vec![g_ih, g_hh, g_bi, g_bh]
    }
}
