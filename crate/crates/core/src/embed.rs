//! Skip-gram tag embeddings trained with negative sampling, and the lookup
//! that turns a token window into the classifier's input matrix.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::TokenSequence;
use crate::kvconfig::KvConfig;
use crate::math::{dot, log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub context_window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 10,
            context_window: 2,
            negatives: 5,
            epochs: 50,
            lr_start: 0.025,
            lr_end: 1e-4,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.context_window == 0 || self.negatives == 0 {
            return Err(Error::Config("dim, context_window and negatives must be at least 1".into()));
        }
        if !(self.lr_end <= self.lr_start && self.lr_end >= 0.0) {
            return Err(Error::Config("learning rates must satisfy 0 <= lr_end <= lr_start".into()));
        }
        Ok(())
    }

    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut cfg = SkipGramConfig::default();
        kv.take("dim", &mut cfg.dim)?;
        kv.take("context_window", &mut cfg.context_window)?;
        kv.take("negatives", &mut cfg.negatives)?;
        kv.take("epochs", &mut cfg.epochs)?;
        kv.take("lr_start", &mut cfg.lr_start)?;
        kv.take("lr_end", &mut cfg.lr_end)?;
        kv.take("seed", &mut cfg.seed)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "dim = {}\ncontext_window = {}\nnegatives = {}\nepochs = {}\nlr_start = {:?}\nlr_end = {:?}\nseed = {}\n",
            self.dim, self.context_window, self.negatives, self.epochs, self.lr_start, self.lr_end, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vocab: Vec<String>,
    /// Center vectors, one row per vocabulary entry.
    pub vectors: Array2<f64>,
    /// Output vectors; only present right after training.
    pub context_vectors: Option<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != vocab.len() || vectors.ncols() == 0 {
            return Err(Error::Shape(format!(
                "{} tokens but a {}x{} vector matrix",
                vocab.len(),
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Load("embedding contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, t) in vocab.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(EmbeddingTable {
            dim: vectors.ncols(),
            vocab,
            vectors,
            context_vectors: None,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(token).map(|i| self.vectors.row(i))
    }

    /// Text format: `vocab_size dim`, then `token x1 ... xd` per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.vocab.len(), self.dim)?;
        for (tok, row) in self.vocab.iter().zip(self.vectors.rows()) {
            write!(w, "{tok}")?;
            for x in row {
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let perr = |line: usize, msg: String| Error::Load(format!("line {line}: {msg}"));
        let (_, header) = lines.next().ok_or_else(|| Error::Load("empty embedding file".into()))?;
        let header = header?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| perr(1, format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [n, dim] = nums[..] else {
            return Err(perr(1, "header must be `vocab_size dim`".into()));
        };
        let mut vocab = Vec::with_capacity(n);
        let mut vectors = Array2::zeros((n, dim));
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if vocab.len() == n {
                return Err(perr(i + 1, "more rows than the header declares".into()));
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().unwrap_or_default().to_string();
            let vals: Vec<f64> = parts
                .map(|s| s.parse().map_err(|_| perr(i + 1, format!("bad number {s:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(perr(i + 1, format!("expected {dim} values, found {}", vals.len())));
            }
            let r = vocab.len();
            vectors.row_mut(r).assign(&ArrayView1::from(&vals[..]));
            vocab.push(tok);
        }
        if vocab.len() != n {
            return Err(Error::Load(format!("header declares {n} rows, found {}", vocab.len())));
        }
        EmbeddingTable::new(vocab, vectors)
    }
}

/// Lexicographically sorted vocabulary with exact unigram counts.
pub fn build_vocab(seqs: &[TokenSequence]) -> Result<(Vec<String>, Vec<u64>)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in seqs {
        for t in &s.tokens {
            *counts.entry(t).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Vocab("corpus contains no tokens".into()));
    }
    Ok(counts.into_iter().map(|(t, c)| (t.to_string(), c)).unzip())
}

/// Loss and gradients of one positive pair with its negatives:
/// `-ln s(u_ctx . v) - sum ln s(-u_neg . v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub loss: f64,
    pub d_center: Vec<f64>,
    pub d_context: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

pub fn pair_loss_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGrad {
    let pos = dot(context, center);
    let mut loss = -log_sigmoid(pos);
    let coef = sigmoid(pos) - 1.0;
    let mut d_center: Vec<f64> = context.iter().map(|u| coef * u).collect();
    let d_context: Vec<f64> = center.iter().map(|v| coef * v).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(neg, center);
        loss -= log_sigmoid(-s);
        let c = sigmoid(s);
        for (dc, u) in d_center.iter_mut().zip(neg.iter()) {
            *dc += c * u;
        }
        d_negatives.push(center.iter().map(|v| c * v).collect());
    }
    PairGrad {
        loss,
        d_center,
        d_context,
        d_negatives,
    }
}

fn pairs_per_epoch(seqs: &[TokenSequence], c: usize) -> usize {
    seqs.iter()
        .map(|s| {
            let n = s.tokens.len();
            (0..n).map(|t| t.min(c) + (n - 1 - t).min(c)).sum::<usize>()
        })
        .sum()
}

/// Trains center/context vectors with skip-gram negative sampling.
///
/// Pairs are visited in corpus order every epoch; the learning rate falls
/// linearly from `lr_start` to `lr_end` across all pair updates. Negatives are
/// drawn from unigram counts raised to 0.75 and a draw equal to the positive
/// context is skipped.
pub fn train_skipgram(seqs: &[TokenSequence], cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let (vocab, counts) = build_vocab(seqs)?;
    if vocab.len() < 2 {
        return Err(Error::Training(format!("vocabulary of {} token(s) is too small", vocab.len())));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 0.5 / d as f64;
    let mut center = Array2::from_shape_fn((vocab.len(), d), |_| rng.random_range(-bound..=bound));
    let mut context = Array2::<f64>::zeros((vocab.len(), d));

    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let ids: Vec<Vec<usize>> = seqs
        .iter()
        .map(|s| s.tokens.iter().map(|t| index[t.as_str()]).collect())
        .collect();
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::Training(e.to_string()))?;

    let total = cfg.epochs * pairs_per_epoch(seqs, cfg.context_window);
    let lr_at = |u: usize| {
        if total <= 1 {
            cfg.lr_start
        } else {
            cfg.lr_start + (cfg.lr_end - cfg.lr_start) * u as f64 / (total - 1) as f64
        }
    };
    let c = cfg.context_window;
    let mut update = 0usize;
    let mut negs: Vec<usize> = Vec::with_capacity(cfg.negatives);
    for _ in 0..cfg.epochs {
        for seq in &ids {
            for t in 0..seq.len() {
                let lo = t.saturating_sub(c);
                let hi = (t + c).min(seq.len() - 1);
                for j in lo..=hi {
                    if j == t {
                        continue;
                    }
                    let (cen, ctx) = (seq[t], seq[j]);
                    negs.clear();
                    for _ in 0..cfg.negatives {
                        let n = noise.sample(&mut rng);
                        if n != ctx {
                            negs.push(n);
                        }
                    }
                    let lr = lr_at(update);
                    update += 1;

                    let v: Vec<f64> = center.row(cen).to_vec();
                    let u_ctx: Vec<f64> = context.row(ctx).to_vec();
                    let neg_rows: Vec<Vec<f64>> = negs.iter().map(|&n| context.row(n).to_vec()).collect();
                    let neg_refs: Vec<&[f64]> = neg_rows.iter().map(Vec::as_slice).collect();
                    let g = pair_loss_grad(&v, &u_ctx, &neg_refs);

                    context
                        .row_mut(ctx)
                        .iter_mut()
                        .zip(&g.d_context)
                        .for_each(|(p, d)| *p -= lr * d);
                    for (&n, dn) in negs.iter().zip(&g.d_negatives) {
                        context.row_mut(n).iter_mut().zip(dn).for_each(|(p, d)| *p -= lr * d);
                    }
                    center
                        .row_mut(cen)
                        .iter_mut()
                        .zip(&g.d_center)
                        .for_each(|(p, d)| *p -= lr * d);
                }
            }
        }
    }
    let mut table = EmbeddingTable::new(vocab, center)?;
    table.context_vectors = Some(context);
    Ok(table)
}

/// Stacks the center vectors of `tokens` into a `len x dim` matrix.
pub fn embed_window<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((tokens.len(), table.dim));
    for (r, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let row = table.vector(tok).ok_or_else(|| Error::Oov(tok.to_string()))?;
        out.row_mut(r).assign(&row);
    }
    Ok(out)
}
