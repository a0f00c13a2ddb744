use crate::error::{Error, Result};
use crate::kvconfig::KvConfig;

/// Shape and training hyperparameters of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Window length (rows of the input matrix).
    pub v: usize,
    /// Embedding dimension (columns of the input matrix).
    pub d: usize,
    pub filters: usize,
    pub kernel: usize,
    pub lstm_units: usize,
    pub attn_dim: usize,
    pub classes: usize,
    pub dropout_p: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            v: 5,
            d: 10,
            filters: 128,
            kernel: 3,
            lstm_units: 128,
            attn_dim: 64,
            classes: 10,
            dropout_p: 0.1,
            lr: 1e-5,
            epochs: 100,
            batch: 100,
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Rows left after valid convolution.
    pub fn t_out(&self) -> usize {
        self.v - self.kernel + 1
    }

    /// Width of the flattened attention output fed to the dense layer.
    pub fn flat_len(&self) -> usize {
        self.t_out() * 2 * self.lstm_units
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("v", self.v),
            ("d", self.d),
            ("filters", self.filters),
            ("kernel", self.kernel),
            ("lstm_units", self.lstm_units),
            ("attn_dim", self.attn_dim),
            ("classes", self.classes),
            ("batch", self.batch),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.kernel > self.v {
            return Err(Error::Config(format!("kernel {} exceeds window length {}", self.kernel, self.v)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} must lie in [0,1)", self.dropout_p)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }

    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut cfg = NetConfig::default();
        cfg.apply_kv(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Consumes the keys this config understands, leaving the rest in `kv`.
    pub fn apply_kv(&mut self, kv: &mut KvConfig) -> Result<()> {
        kv.take("v", &mut self.v)?;
        kv.take("d", &mut self.d)?;
        kv.take("filters", &mut self.filters)?;
        kv.take("kernel", &mut self.kernel)?;
        kv.take("lstm_units", &mut self.lstm_units)?;
        kv.take("attn_dim", &mut self.attn_dim)?;
        kv.take("classes", &mut self.classes)?;
        kv.take("dropout_p", &mut self.dropout_p)?;
        kv.take("lr", &mut self.lr)?;
        kv.take("epochs", &mut self.epochs)?;
        kv.take("batch", &mut self.batch)?;
        kv.take("seed", &mut self.seed)?;
        Ok(())
    }

    /// Renders every key in the format [`NetConfig::from_kv`] reads.
    pub fn to_kv_string(&self) -> String {
        format!(
            "v = {}\nd = {}\nfilters = {}\nkernel = {}\nlstm_units = {}\nattn_dim = {}\nclasses = {}\n\
             dropout_p = {:?}\nlr = {:?}\nepochs = {}\nbatch = {}\nseed = {}\n",
            self.v,
            self.d,
            self.filters,
            self.kernel,
            self.lstm_units,
            self.attn_dim,
            self.classes,
            self.dropout_p,
            self.lr,
            self.epochs,
            self.batch,
            self.seed,
        )
    }

    /// The small configuration used for gradient checks.
    pub fn tiny() -> Self {
        NetConfig {
            v: 5,
            d: 3,
            filters: 4,
            kernel: 3,
            lstm_units: 3,
            attn_dim: 2,
            classes: 3,
            dropout_p: 0.0,
            lr: 1e-3,
            epochs: 1,
            batch: 4,
            seed: 0,
        }
    }
}
