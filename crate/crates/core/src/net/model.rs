//! The full classifier: conv -> BiLSTM -> self-attention -> dropout ->
//! dense softmax, with batched forward and exact reverse-mode gradients.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{self, AttentionParams};
use super::config::NetConfig;
use super::conv::{self, ConvLayerParams};
use super::head::{self, DenseParams, Dropout};
use super::lstm::{self, LstmCellParams};
use crate::error::{Error, Result};
use crate::types::{argmax, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv: ConvLayerParams,
    pub fwd_lstm: LstmCellParams,
    pub bwd_lstm: LstmCellParams,
    pub attn: AttentionParams,
    pub dense: DenseParams,
    pub cfg: NetConfig,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

pub const TENSOR_NAMES: [&str; 15] = [
    "conv.w",
    "conv.b",
    "lstm_fwd.w",
    "lstm_fwd.u",
    "lstm_fwd.b",
    "lstm_bwd.w",
    "lstm_bwd.u",
    "lstm_bwd.b",
    "attn.wg",
    "attn.wg_prime",
    "attn.bg",
    "attn.walpha",
    "attn.balpha",
    "dense.w",
    "dense.b",
];

fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

fn init_lstm<R: Rng>(rng: &mut R, input: usize, units: usize) -> LstmCellParams {
    // each gate matrix gets its own limit
    let w_blocks: Vec<Array2<f64>> = (0..4).map(|_| glorot(rng, units, input, input, units)).collect();
    let u_blocks: Vec<Array2<f64>> = (0..4).map(|_| glorot(rng, units, units, units, units)).collect();
    let mut b = Array1::zeros(4 * units);
    b.slice_mut(s![units..2 * units]).fill(1.0);
    LstmCellParams {
        w: concatenate(Axis(0), &views(&w_blocks)).expect("equal widths"),
        u: concatenate(Axis(0), &views(&u_blocks)).expect("equal widths"),
        b,
    }
}

fn views(v: &[Array2<f64>]) -> Vec<ndarray::ArrayView2<'_, f64>> {
    v.iter().map(|a| a.view()).collect()
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn s2(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

fn s1(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

/// Glorot-uniform weights, zero biases except the forget gates (one).
pub fn init_params(cfg: &NetConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (m, d, nf, hu, ad) = (cfg.kernel, cfg.d, cfg.filters, cfg.lstm_units, cfg.attn_dim);
    let conv = ConvLayerParams {
        w: glorot(&mut rng, nf, m * d, m * d, m * nf),
        b: Array1::zeros(nf),
        kernel: m,
    };
    let fwd_lstm = init_lstm(&mut rng, nf, hu);
    let bwd_lstm = init_lstm(&mut rng, nf, hu);
    let attn = AttentionParams {
        wg: glorot(&mut rng, ad, 2 * hu, 2 * hu, ad),
        wg_prime: glorot(&mut rng, ad, 2 * hu, 2 * hu, ad),
        bg: Array1::zeros(ad),
        walpha: glorot(&mut rng, 1, ad, ad, 1).into_shape_with_order(ad).expect("1 x A"),
        balpha: 0.0,
    };
    let dense = DenseParams {
        w: glorot(&mut rng, cfg.classes, cfg.flat_len(), cfg.flat_len(), cfg.classes),
        b: Array1::zeros(cfg.classes),
    };
    Ok(ModelParams {
        conv,
        fwd_lstm,
        bwd_lstm,
        attn,
        dense,
        cfg: cfg.clone(),
    })
}

impl ModelParams {
    /// Same shapes, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.1.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let c = &self.cfg;
        let mk = |name, dims, data| TensorRef { name, dims, data };
        let (h4, h) = (4 * c.lstm_units, c.lstm_units);
        vec![
            mk(TENSOR_NAMES[0], vec![c.filters, c.kernel, c.d], slice2(&self.conv.w)),
            mk(TENSOR_NAMES[1], vec![c.filters], slice1(&self.conv.b)),
            mk(TENSOR_NAMES[2], vec![h4, c.filters], slice2(&self.fwd_lstm.w)),
            mk(TENSOR_NAMES[3], vec![h4, h], slice2(&self.fwd_lstm.u)),
            mk(TENSOR_NAMES[4], vec![h4], slice1(&self.fwd_lstm.b)),
            mk(TENSOR_NAMES[5], vec![h4, c.filters], slice2(&self.bwd_lstm.w)),
            mk(TENSOR_NAMES[6], vec![h4, h], slice2(&self.bwd_lstm.u)),
            mk(TENSOR_NAMES[7], vec![h4], slice1(&self.bwd_lstm.b)),
            mk(TENSOR_NAMES[8], vec![c.attn_dim, 2 * h], slice2(&self.attn.wg)),
            mk(TENSOR_NAMES[9], vec![c.attn_dim, 2 * h], slice2(&self.attn.wg_prime)),
            mk(TENSOR_NAMES[10], vec![c.attn_dim], slice1(&self.attn.bg)),
            mk(TENSOR_NAMES[11], vec![1, c.attn_dim], slice1(&self.attn.walpha)),
            mk(TENSOR_NAMES[12], vec![], std::slice::from_ref(&self.attn.balpha)),
            mk(TENSOR_NAMES[13], vec![c.classes, c.flat_len()], slice2(&self.dense.w)),
            mk(TENSOR_NAMES[14], vec![c.classes], slice1(&self.dense.b)),
        ]
    }

    /// Mutable flat views in the order of [`TENSOR_NAMES`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let slices: Vec<&mut [f64]> = vec![
            s2(&mut self.conv.w),
            s1(&mut self.conv.b),
            s2(&mut self.fwd_lstm.w),
            s2(&mut self.fwd_lstm.u),
            s1(&mut self.fwd_lstm.b),
            s2(&mut self.bwd_lstm.w),
            s2(&mut self.bwd_lstm.u),
            s1(&mut self.bwd_lstm.b),
            s2(&mut self.attn.wg),
            s2(&mut self.attn.wg_prime),
            s1(&mut self.attn.bg),
            s1(&mut self.attn.walpha),
            std::slice::from_mut(&mut self.attn.balpha),
            s2(&mut self.dense.w),
            s1(&mut self.dense.b),
        ];
        TENSOR_NAMES.into_iter().zip(slices).collect()
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.cfg.validate()?;
        let reference = init_shapes(&self.cfg);
        for (t, dims) in self.tensors().iter().zip(reference) {
            if t.data.len() != dims.iter().product::<usize>() {
                return Err(Error::Shape(format!("tensor {} does not match {:?}", t.name, dims)));
            }
        }
        if self.conv.kernel != self.cfg.kernel {
            return Err(Error::Shape("conv kernel disagrees with config".into()));
        }
        Ok(())
    }
}

fn init_shapes(c: &NetConfig) -> Vec<Vec<usize>> {
    let (h4, h) = (4 * c.lstm_units, c.lstm_units);
    vec![
        vec![c.filters, c.kernel, c.d],
        vec![c.filters],
        vec![h4, c.filters],
        vec![h4, h],
        vec![h4],
        vec![h4, c.filters],
        vec![h4, h],
        vec![h4],
        vec![c.attn_dim, 2 * h],
        vec![c.attn_dim, 2 * h],
        vec![c.attn_dim],
        vec![1, c.attn_dim],
        vec![],
        vec![c.classes, c.flat_len()],
        vec![c.classes],
    ]
}

pub(crate) struct BatchForward {
    bsz: usize,
    conv: conv::ConvCache,
    fwd: lstm::LstmCache,
    bwd: lstm::LstmCache,
    hcat: Array2<f64>,
    attn: attention::AttnCache,
    head: head::HeadCache,
}

fn check_windows(params: &ModelParams, windows: &[ArrayView2<'_, f64>]) -> Result<()> {
    let c = &params.cfg;
    if windows.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if let Some(w) = windows.iter().find(|w| w.dim() != (c.v, c.d)) {
        return Err(Error::Shape(format!("window {:?} does not match {}x{}", w.dim(), c.v, c.d)));
    }
    Ok(())
}

pub(crate) fn forward_batch(params: &ModelParams, windows: &[ArrayView2<'_, f64>], dropout: Option<&Dropout>) -> BatchForward {
    let bsz = windows.len();
    let t_len = params.cfg.t_out();
    let conv = conv::forward(conv::patches(windows, params.cfg.kernel), &params.conv);
    let fwd = lstm::forward(&conv.out, &params.fwd_lstm, t_len, bsz, false);
    let bwd = lstm::forward(&conv.out, &params.bwd_lstm, t_len, bsz, true);
    let hcat = concatenate(Axis(1), &[fwd.h.view(), bwd.h.view()]).expect("matching rows");
    let attn = attention::forward(&hcat, &params.attn, t_len, bsz);
    let flat = head::flatten(&attn.out, t_len, bsz);
    let head = head::forward(flat, &params.dense, dropout);
    BatchForward { bsz, conv, fwd, bwd, hcat, attn, head }
}

fn backward_batch(params: &ModelParams, fw: &BatchForward, targets: ArrayView2<'_, f64>) -> ModelParams {
    let mut grad = params.zeros_like();
    let t_len = params.cfg.t_out();
    let bsz = fw.bsz;
    let hu = params.cfg.lstm_units;
    let d_flat = head::backward(&fw.head, targets, &params.dense, &mut grad.dense);
    let d_attn_out = head::unflatten(&d_flat, t_len, bsz, 2 * hu);
    let d_h = attention::backward(&fw.attn, &fw.hcat, &params.attn, &d_attn_out, t_len, bsz, &mut grad.attn);
    let mut d_conv = lstm::backward(
        &fw.fwd,
        &fw.conv.out,
        &params.fwd_lstm,
        d_h.slice(s![.., ..hu]),
        t_len,
        bsz,
        false,
        &mut grad.fwd_lstm,
    );
    d_conv += &lstm::backward(
        &fw.bwd,
        &fw.conv.out,
        &params.bwd_lstm,
        d_h.slice(s![.., hu..]),
        t_len,
        bsz,
        true,
        &mut grad.bwd_lstm,
    );
    conv::backward(&fw.conv, &d_conv, &mut grad.conv);
    grad
}

fn stack_targets(params: &ModelParams, batch: &[&Sample]) -> Result<Array2<f64>> {
    let c = params.cfg.classes;
    let mut y = Array2::zeros((batch.len(), c));
    for (i, s) in batch.iter().enumerate() {
        if s.target.len() != c {
            return Err(Error::Shape(format!("target of length {} for {c} classes", s.target.len())));
        }
        y.row_mut(i).assign(&ndarray::ArrayView1::from(&s.target[..]));
    }
    Ok(y)
}

fn mean_loss(fw: &BatchForward, targets: &Array2<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (i, (lp, y)) in fw.head.log_probs.rows().into_iter().zip(targets.rows()).enumerate() {
        let l = -lp.dot(&y);
        if !l.is_finite() {
            return Err(Error::Numeric { sample: i });
        }
        total += l;
    }
    Ok(total / fw.bsz as f64)
}

/// Result of one forward/backward pass over a batch.
pub struct BatchResult {
    pub loss: f64,
    pub grads: ModelParams,
    /// Number of samples whose argmax prediction matched the target.
    pub correct: usize,
}

/// Mean cross-entropy over `batch` and its exact gradient. `dropout`, when
/// given, must hold one mask row per sample over the flattened attention
/// output.
pub fn loss_and_backward(params: &ModelParams, batch: &[&Sample], dropout: Option<&Dropout>) -> Result<BatchResult> {
    let windows: Vec<ArrayView2<'_, f64>> = batch.iter().map(|s| s.window.view()).collect();
    check_windows(params, &windows)?;
    if let Some(d) = dropout {
        if d.mask.dim() != (batch.len(), params.cfg.flat_len()) {
            return Err(Error::Shape("dropout mask does not match batch".into()));
        }
    }
    let targets = stack_targets(params, batch)?;
    let fw = forward_batch(params, &windows, dropout);
    let loss = mean_loss(&fw, &targets)?;
    let correct = count_correct(&fw.head.probs, &targets);
    let grads = backward_batch(params, &fw, targets.view());
    Ok(BatchResult { loss, grads, correct })
}

/// Mean cross-entropy without gradients.
pub fn loss(params: &ModelParams, batch: &[&Sample], dropout: Option<&Dropout>) -> Result<f64> {
    let windows: Vec<ArrayView2<'_, f64>> = batch.iter().map(|s| s.window.view()).collect();
    check_windows(params, &windows)?;
    let targets = stack_targets(params, batch)?;
    mean_loss(&forward_batch(params, &windows, dropout), &targets)
}

fn count_correct(probs: &Array2<f64>, targets: &Array2<f64>) -> usize {
    probs
        .rows()
        .into_iter()
        .zip(targets.rows())
        .filter(|(p, y)| argmax(p.as_slice().expect("row")) == argmax(&y.to_vec()))
        .count()
}

/// Inference-mode class probabilities for a batch of windows, one row each.
pub fn predict_batch(params: &ModelParams, windows: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    check_windows(params, windows)?;
    Ok(forward_batch(params, windows, None).head.probs)
}

/// Inference-mode probabilities and the argmax class for one window.
pub fn predict(window: ArrayView2<'_, f64>, params: &ModelParams) -> Result<(Vec<f64>, usize)> {
    let probs = predict_batch(params, &[window])?.row(0).to_vec();
    let k = argmax(&probs);
    Ok((probs, k))
}
