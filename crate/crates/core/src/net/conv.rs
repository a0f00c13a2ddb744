//! Valid, stride-1 one-dimensional convolution over the time axis with ReLU.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    /// Filter weights, `filters x (kernel * d)`: row `n` is filter `n`
    /// flattened row-major from its `kernel x d` patch.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub kernel: usize,
}

impl ConvLayerParams {
    pub fn filters(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols() / self.kernel
    }
}

pub(crate) struct ConvCache {
    pub patches: Array2<f64>,
    pub pre: Array2<f64>,
    pub out: Array2<f64>,
}

/// Unrolls every window into patch rows, time-major: row `t * B + b` holds
/// `x_b[t..t+kernel, :]` flattened.
pub(crate) fn patches(xs: &[ArrayView2<'_, f64>], kernel: usize) -> Array2<f64> {
    let (v, d) = xs[0].dim();
    let t_out = v - kernel + 1;
    let bsz = xs.len();
    let mut p = Array2::zeros((t_out * bsz, kernel * d));
    for t in 0..t_out {
        for (b, x) in xs.iter().enumerate() {
            let mut row = p.row_mut(t * bsz + b);
            for (dst, src) in row.iter_mut().zip(x.slice(s![t..t + kernel, ..]).iter()) {
                *dst = *src;
            }
        }
    }
    p
}

pub(crate) fn forward(patches: Array2<f64>, p: &ConvLayerParams) -> ConvCache {
    let mut pre = patches.dot(&p.w.t());
    pre += &p.b;
    let out = pre.mapv(|z| z.max(0.0));
    ConvCache { patches, pre, out }
}

/// Parameter gradients given the gradient at the ReLU output.
pub(crate) fn backward(cache: &ConvCache, d_out: &Array2<f64>, grad: &mut ConvLayerParams) {
    let mut d_pre = d_out.clone();
    d_pre.zip_mut_with(&cache.pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    grad.w += &d_pre.t().dot(&cache.patches);
    grad.b += &d_pre.sum_axis(Axis(0));
}

/// Convolves one `v x d` window, giving a `(v - kernel + 1) x filters` map.
pub fn conv1d_forward(x: ArrayView2<'_, f64>, p: &ConvLayerParams) -> Result<Array2<f64>> {
    let (v, d) = x.dim();
    if p.kernel == 0 || p.kernel > v || p.w.ncols() != p.kernel * d || p.b.len() != p.filters() {
        return Err(Error::Shape(format!(
            "conv with kernel {} and weights {:?} cannot take a {v}x{d} input",
            p.kernel,
            p.w.dim()
        )));
    }
    Ok(forward(patches(&[x], p.kernel), p).out)
}
