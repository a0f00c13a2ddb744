//! Additive self-attention over the BiLSTM states.
//!
//! For every ordered pair of steps `(t, t')`:
//!
//! ```text
//! g[t,t']     = tanh(Wg h[t] + Wg' h[t'] + bg)
//! alpha[t,t'] = logistic(w_alpha . g[t,t'] + b_alpha)
//! a[t,.]      = softmax over t' of alpha[t,.]
//! l[t]        = sum over t' of a[t,t'] h[t']
//! ```

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_in_place};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `A x 2H`, applied to the query step.
    pub wg: Array2<f64>,
    /// `A x 2H`, applied to the attended step.
    pub wg_prime: Array2<f64>,
    pub bg: Array1<f64>,
    pub walpha: Array1<f64>,
    pub balpha: f64,
}

impl AttentionParams {
    pub fn dim(&self) -> usize {
        self.bg.len()
    }
}

pub(crate) struct AttnCache {
    /// `tanh` activations, row `(t * T + t') * B + b`.
    pub g: Array2<f64>,
    /// Logistic scores, `B x T x T`.
    pub alpha: Array3<f64>,
    /// Normalized weights, `B x T x T`.
    pub a: Array3<f64>,
    /// Output, time-major `T*B x 2H`.
    pub out: Array2<f64>,
}

pub(crate) fn forward(h: &Array2<f64>, p: &AttentionParams, t_len: usize, bsz: usize) -> AttnCache {
    let adim = p.dim();
    let width = h.ncols();
    let q = h.dot(&p.wg.t());
    let k = h.dot(&p.wg_prime.t());
    let mut g = Array2::zeros((t_len * t_len * bsz, adim));
    let mut alpha = Array3::zeros((bsz, t_len, t_len));
    let mut a = Array3::zeros((bsz, t_len, t_len));
    let mut out = Array2::zeros((t_len * bsz, width));
    let mut scores = vec![0.0; t_len];
    for b in 0..bsz {
        for t in 0..t_len {
            for t2 in 0..t_len {
                let r = (t * t_len + t2) * bsz + b;
                let mut z = p.balpha;
                for j in 0..adim {
                    let gv = (q[[t * bsz + b, j]] + k[[t2 * bsz + b, j]] + p.bg[j]).tanh();
                    g[[r, j]] = gv;
                    z += p.walpha[j] * gv;
                }
                let s = sigmoid(z);
                alpha[[b, t, t2]] = s;
                scores[t2] = s;
            }
            softmax_in_place(&mut scores);
            debug_assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut row = out.row_mut(t * bsz + b);
            for (t2, &w) in scores.iter().enumerate() {
                a[[b, t, t2]] = w;
                row.scaled_add(w, &h.row(t2 * bsz + b));
            }
        }
    }
    AttnCache { g, alpha, a, out }
}

/// Accumulates parameter gradients and returns the gradient with respect to `h`.
pub(crate) fn backward(
    cache: &AttnCache,
    h: &Array2<f64>,
    p: &AttentionParams,
    d_out: &Array2<f64>,
    t_len: usize,
    bsz: usize,
    grad: &mut AttentionParams,
) -> Array2<f64> {
    let adim = p.dim();
    let mut d_h = Array2::<f64>::zeros(h.dim());
    let mut d_q = Array2::<f64>::zeros((t_len * bsz, adim));
    let mut d_k = Array2::<f64>::zeros((t_len * bsz, adim));
    let mut d_a = vec![0.0; t_len];
    for b in 0..bsz {
        for t in 0..t_len {
            let dl = d_out.row(t * bsz + b);
            for t2 in 0..t_len {
                let hr = h.row(t2 * bsz + b);
                d_a[t2] = dl.dot(&hr);
                d_h.row_mut(t2 * bsz + b).scaled_add(cache.a[[b, t, t2]], &dl);
            }
            let mean: f64 = (0..t_len).map(|t2| cache.a[[b, t, t2]] * d_a[t2]).sum();
            for t2 in 0..t_len {
                let aw = cache.a[[b, t, t2]];
                let s = cache.alpha[[b, t, t2]];
                let dz = aw * (d_a[t2] - mean) * s * (1.0 - s);
                grad.balpha += dz;
                let r = (t * t_len + t2) * bsz + b;
                for j in 0..adim {
                    let gv = cache.g[[r, j]];
                    grad.walpha[j] += dz * gv;
                    let du = dz * p.walpha[j] * (1.0 - gv * gv);
                    grad.bg[j] += du;
                    d_q[[t * bsz + b, j]] += du;
                    d_k[[t2 * bsz + b, j]] += du;
                }
            }
        }
    }
    grad.wg += &d_q.t().dot(h);
    grad.wg_prime += &d_k.t().dot(h);
    d_h += &d_q.dot(&p.wg);
    d_h += &d_k.dot(&p.wg_prime);
    d_h
}

/// Attends over one `T x 2H` sequence. Returns the context vectors `l`
/// (`T x 2H`) and the attention weights `a` (`T x T`, rows sum to one).
pub fn attention_forward(h: ArrayView2<'_, f64>, p: &AttentionParams) -> Result<(Array2<f64>, Array2<f64>)> {
    let (t_len, width) = h.dim();
    let adim = p.dim();
    if t_len == 0
        || p.wg.dim() != (adim, width)
        || p.wg_prime.dim() != (adim, width)
        || p.walpha.len() != adim
    {
        return Err(Error::Shape(format!(
            "attention with Wg {:?} cannot take a {t_len}x{width} input",
            p.wg.dim()
        )));
    }
    let cache = forward(&h.to_owned(), p, t_len, 1);
    let a = cache.a.index_axis_move(Axis(0), 0);
    Ok((cache.out, a))
}
