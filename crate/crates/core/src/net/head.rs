//! Flatten, optional inverted dropout, dense layer and softmax.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::softmax_in_place;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `C x (T_out * 2H)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Keep-masks for inverted dropout: entries are 0 or 1, kept units are
/// scaled by `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub mask: Array2<f64>,
    pub p: f64,
}

impl Dropout {
    /// Draws a `rows x cols` mask with each unit kept with probability `1 - p`.
    pub fn sample<R: Rng>(rng: &mut R, rows: usize, cols: usize, p: f64) -> Self {
        let mask = Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { 1.0 });
        Dropout { mask, p }
    }

    fn scaled(&self) -> Array2<f64> {
        let keep = 1.0 / (1.0 - self.p);
        self.mask.mapv(|m| m * keep)
    }
}

pub(crate) struct HeadCache {
    /// Flattened (and dropped-out) input, `B x F`.
    pub flat: Array2<f64>,
    pub scale: Option<Array2<f64>>,
    pub probs: Array2<f64>,
    pub log_probs: Array2<f64>,
}

/// Flattens time-major `T*B x W` rows into `B x (T*W)`, row-major per sample.
pub(crate) fn flatten(l: &Array2<f64>, t_len: usize, bsz: usize) -> Array2<f64> {
    let width = l.ncols();
    let mut flat = Array2::zeros((bsz, t_len * width));
    for t in 0..t_len {
        for b in 0..bsz {
            flat.row_mut(b)
                .slice_mut(ndarray::s![t * width..(t + 1) * width])
                .assign(&l.row(t * bsz + b));
        }
    }
    flat
}

pub(crate) fn unflatten(d_flat: &Array2<f64>, t_len: usize, bsz: usize, width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((t_len * bsz, width));
    for t in 0..t_len {
        for b in 0..bsz {
            out.row_mut(t * bsz + b)
                .assign(&d_flat.row(b).slice(ndarray::s![t * width..(t + 1) * width]));
        }
    }
    out
}

pub(crate) fn forward(mut flat: Array2<f64>, p: &DenseParams, dropout: Option<&Dropout>) -> HeadCache {
    let scale = dropout.filter(|d| d.p > 0.0).map(Dropout::scaled);
    if let Some(s) = &scale {
        flat *= s;
    }
    let mut logits = flat.dot(&p.w.t());
    logits += &p.b;
    let mut probs = logits.clone();
    let mut log_probs = logits;
    for (mut pr, mut lp) in probs.rows_mut().into_iter().zip(log_probs.rows_mut()) {
        let max = lp.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + lp.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        lp.mapv_inplace(|x| x - lse);
        softmax_in_place(pr.as_slice_mut().expect("standard layout"));
    }
    HeadCache { flat, scale, probs, log_probs }
}

/// Gradient of mean cross-entropy; returns the gradient at the flattened
/// input (before dropout).
pub(crate) fn backward(cache: &HeadCache, targets: ArrayView2<'_, f64>, p: &DenseParams, grad: &mut DenseParams) -> Array2<f64> {
    let bsz = targets.nrows() as f64;
    let d_logits = (&cache.probs - &targets) / bsz;
    grad.w += &d_logits.t().dot(&cache.flat);
    grad.b += &d_logits.sum_axis(Axis(0));
    let mut d_flat = d_logits.dot(&p.w);
    if let Some(s) = &cache.scale {
        d_flat *= s;
    }
    d_flat
}

/// Class probabilities for one `T x 2H` attention output. Pass a one-row
/// dropout mask in training mode, `None` for inference.
pub fn head_forward(l: ArrayView2<'_, f64>, p: &DenseParams, dropout: Option<&Dropout>) -> Result<Vec<f64>> {
    let flat_len = l.len();
    if p.w.ncols() != flat_len || p.b.len() != p.w.nrows() {
        return Err(Error::Shape(format!(
            "dense weights {:?} cannot take {flat_len} inputs",
            p.w.dim()
        )));
    }
    if let Some(d) = dropout {
        if d.mask.dim() != (1, flat_len) {
            return Err(Error::Shape("dropout mask must be 1 x flattened length".into()));
        }
    }
    let flat = ArrayView1::from_shape(flat_len, l.as_standard_layout().as_slice().expect("standard"))
        .expect("length checked")
        .to_owned()
        .insert_axis(Axis(0));
    Ok(forward(flat, p, dropout).probs.row(0).to_vec())
}
