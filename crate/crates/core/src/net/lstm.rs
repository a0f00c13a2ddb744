//! LSTM cells and the bidirectional layer built from two of them.
//!
//! Sequences are stored time-major: row `t * B + b` is step `t` of sample `b`.
//! Gate blocks are stacked in the order input, forget, output, candidate.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// Input weights `[W_i; W_f; W_o; W_g]`, `4H x in`.
    pub w: Array2<f64>,
    /// Recurrent weights `[U_i; U_f; U_o; U_g]`, `4H x H`.
    pub u: Array2<f64>,
    /// Biases `[b_i; b_f; b_o; b_g]`, length `4H`.
    pub b: Array1<f64>,
}

impl LstmCellParams {
    pub fn units(&self) -> usize {
        self.u.ncols()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    fn check(&self) -> Result<()> {
        let h = self.units();
        if self.w.nrows() != 4 * h || self.u.nrows() != 4 * h || self.b.len() != 4 * h {
            return Err(Error::Shape("inconsistent LSTM parameter shapes".into()));
        }
        Ok(())
    }
}

pub(crate) struct LstmCache {
    /// Post-activation gates, `T*B x 4H`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

fn step_order(t_len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    }
}

fn prev_step(t: usize, t_len: usize, reverse: bool) -> Option<usize> {
    if reverse {
        (t + 1 < t_len).then_some(t + 1)
    } else {
        t.checked_sub(1)
    }
}

/// Runs one direction over a time-major batch, starting from zero state.
pub(crate) fn forward(x: &Array2<f64>, p: &LstmCellParams, t_len: usize, bsz: usize, reverse: bool) -> LstmCache {
    let hu = p.units();
    let mut gates = x.dot(&p.w.t());
    gates += &p.b;
    let mut c = Array2::zeros((t_len * bsz, hu));
    let mut tanh_c = Array2::zeros((t_len * bsz, hu));
    let mut h = Array2::zeros((t_len * bsz, hu));
    for t in step_order(t_len, reverse) {
        let rows = t * bsz..(t + 1) * bsz;
        let prev = prev_step(t, t_len, reverse);
        let mut pre = gates.slice_mut(s![rows.clone(), ..]);
        if let Some(pt) = prev {
            let h_prev = h.slice(s![pt * bsz..(pt + 1) * bsz, ..]);
            pre += &h_prev.dot(&p.u.t());
        }
        for b in 0..bsz {
            let r = t * bsz + b;
            let mut g = pre.row_mut(b);
            for j in 0..hu {
                let i_g = sigmoid(g[j]);
                let f_g = sigmoid(g[hu + j]);
                let o_g = sigmoid(g[2 * hu + j]);
                let c_g = g[3 * hu + j].tanh();
                g[j] = i_g;
                g[hu + j] = f_g;
                g[2 * hu + j] = o_g;
                g[3 * hu + j] = c_g;
                let c_prev = prev.map_or(0.0, |pt| c[[pt * bsz + b, j]]);
                let ct = f_g * c_prev + i_g * c_g;
                let tc = ct.tanh();
                c[[r, j]] = ct;
                tanh_c[[r, j]] = tc;
                h[[r, j]] = o_g * tc;
            }
        }
    }
    LstmCache { gates, c, tanh_c, h }
}

/// Backpropagation through time for one direction. Accumulates parameter
/// gradients into `grad` and returns the gradient with respect to `x`.
pub(crate) fn backward(
    cache: &LstmCache,
    x: &Array2<f64>,
    p: &LstmCellParams,
    d_h: ArrayView2<'_, f64>,
    t_len: usize,
    bsz: usize,
    reverse: bool,
    grad: &mut LstmCellParams,
) -> Array2<f64> {
    let hu = p.units();
    let mut d_pre = Array2::<f64>::zeros((t_len * bsz, 4 * hu));
    let mut dh_next = Array2::<f64>::zeros((bsz, hu));
    let mut dc_next = Array2::<f64>::zeros((bsz, hu));
    let order: Vec<usize> = step_order(t_len, reverse).collect();
    for &t in order.iter().rev() {
        let prev = prev_step(t, t_len, reverse);
        for b in 0..bsz {
            let r = t * bsz + b;
            for j in 0..hu {
                let i_g = cache.gates[[r, j]];
                let f_g = cache.gates[[r, hu + j]];
                let o_g = cache.gates[[r, 2 * hu + j]];
                let c_g = cache.gates[[r, 3 * hu + j]];
                let tc = cache.tanh_c[[r, j]];
                let c_prev = prev.map_or(0.0, |pt| cache.c[[pt * bsz + b, j]]);
                let dh = d_h[[r, j]] + dh_next[[b, j]];
                let dc = dc_next[[b, j]] + dh * o_g * (1.0 - tc * tc);
                d_pre[[r, j]] = dc * c_g * i_g * (1.0 - i_g);
                d_pre[[r, hu + j]] = dc * c_prev * f_g * (1.0 - f_g);
                d_pre[[r, 2 * hu + j]] = dh * tc * o_g * (1.0 - o_g);
                d_pre[[r, 3 * hu + j]] = dc * i_g * (1.0 - c_g * c_g);
                dc_next[[b, j]] = dc * f_g;
            }
        }
        let dp = d_pre.slice(s![t * bsz..(t + 1) * bsz, ..]);
        match prev {
            Some(pt) => {
                let h_prev = cache.h.slice(s![pt * bsz..(pt + 1) * bsz, ..]);
                grad.u += &dp.t().dot(&h_prev);
                dh_next = dp.dot(&p.u);
            }
            None => dh_next.fill(0.0),
        }
    }
    grad.w += &d_pre.t().dot(x);
    grad.b += &d_pre.sum_axis(Axis(0));
    d_pre.dot(&p.w)
}

/// Bidirectional pass over one `T x in` sequence: row `t` of the result is
/// the forward hidden state at `t` followed by the backward one.
pub fn bilstm_forward(x: ArrayView2<'_, f64>, fwd: &LstmCellParams, bwd: &LstmCellParams) -> Result<Array2<f64>> {
    fwd.check()?;
    bwd.check()?;
    if fwd.in_dim() != x.ncols() || bwd.in_dim() != x.ncols() {
        return Err(Error::Shape(format!(
            "LSTM input width {} does not match weights ({}, {})",
            x.ncols(),
            fwd.in_dim(),
            bwd.in_dim()
        )));
    }
    let x = x.to_owned();
    let t_len = x.nrows();
    let f = forward(&x, fwd, t_len, 1, false);
    let b = forward(&x, bwd, t_len, 1, true);
    Ok(concatenate(Axis(1), &[f.h.view(), b.h.view()]).expect("matching row counts"))
}
