//! Streaming detector: keeps the last `v` alarms and classifies every full window.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;
use std::sync::Arc;

use crate::embed::{embed_window, EmbeddingTable};
use crate::error::{Error, Result};
use crate::ingest::{is_header, parse_record};
use crate::net::{predict, ModelParams};
use crate::types::{AlarmEvent, ScenarioSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    SkipWindow,
    HaltOnOov,
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(OovPolicy::SkipWindow),
            "halt" => Ok(OovPolicy::HaltOnOov),
            other => Err(Error::Config(format!("oov policy must be skip or halt, got {other:?}"))),
        }
    }
}

/// Trained model plus the embedding table it was trained against. Immutable
/// once built, so one instance can back any number of detector states.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    params: ModelParams,
    table: EmbeddingTable,
    scenarios: ScenarioSet,
}

impl DetectorModel {
    pub fn new(params: ModelParams, table: EmbeddingTable, scenarios: ScenarioSet) -> Result<Self> {
        params.check_shapes()?;
        if table.dim != params.cfg.d {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match model input dimension {}",
                table.dim, params.cfg.d
            )));
        }
        if scenarios.len() != params.cfg.classes {
            return Err(Error::Config(format!(
                "{} scenarios for a {}-class model",
                scenarios.len(),
                params.cfg.classes
            )));
        }
        Ok(DetectorModel { params, table, scenarios })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn window_len(&self) -> usize {
        self.params.cfg.v
    }

    /// Classifies a full window of known tokens.
    pub fn classify<S: AsRef<str>>(&self, tokens: &[S], at: f64) -> Result<Detection> {
        let x = embed_window(tokens, &self.table)?;
        let (probabilities, k) = predict(x.view(), &self.params)?;
        Ok(Detection {
            at,
            confidence: probabilities[k],
            predicted_scenario: self.scenarios.ids()[k],
            probabilities,
            window_tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Timestamp of the newest alarm in the window.
    pub at: f64,
    pub probabilities: Vec<f64>,
    pub predicted_scenario: u32,
    pub confidence: f64,
    pub window_tokens: Vec<String>,
}

impl Detection {
    /// `timestamp,predicted_scenario,confidence,p_1,...,p_C`
    pub fn to_line(&self) -> String {
        let mut s = format!("{},{},{:?}", self.at, self.predicted_scenario, self.confidence);
        for p in &self.probabilities {
            write!(s, ",{p:?}").expect("write to String");
        }
        s
    }
}

#[derive(Debug, Clone)]
struct Slot {
    token: String,
    known: bool,
}

/// Per-stream buffer of the most recent alarms.
#[derive(Debug, Clone)]
pub struct DetectorState {
    model: Arc<DetectorModel>,
    buffer: VecDeque<Slot>,
    policy: OovPolicy,
    repeat_suppress_s: Option<f64>,
    last_kept: HashMap<String, f64>,
}

impl DetectorState {
    pub fn new(model: Arc<DetectorModel>, policy: OovPolicy) -> Self {
        let cap = model.window_len();
        DetectorState {
            model,
            buffer: VecDeque::with_capacity(cap + 1),
            policy,
            repeat_suppress_s: None,
            last_kept: HashMap::new(),
        }
    }

    /// Drops repeats of a tag arriving less than `window_s` after its last
    /// kept occurrence, before they reach the buffer.
    pub fn with_repeat_suppression(mut self, window_s: f64) -> Result<Self> {
        if !(window_s.is_finite() && window_s >= 0.0) {
            return Err(Error::Config(format!("repeat suppression window must be >= 0, got {window_s}")));
        }
        self.repeat_suppress_s = Some(window_s);
        Ok(self)
    }

    pub fn buffered_tokens(&self) -> Vec<&str> {
        self.buffer.iter().map(|s| s.token.as_str()).collect()
    }

    pub fn push_alarm(&mut self, event: &AlarmEvent) -> Result<Option<Detection>> {
        let token = &event.tag_token;
        if let Some(window) = self.repeat_suppress_s {
            if let Some(&last) = self.last_kept.get(token) {
                if event.timestamp - last < window {
                    return Ok(None);
                }
            }
            self.last_kept.insert(token.clone(), event.timestamp);
        }
        let known = self.model.table.index_of(token).is_some();
        if !known {
            match self.policy {
                OovPolicy::HaltOnOov => return Err(Error::Oov(token.clone())),
                OovPolicy::SkipWindow => log::warn!(
                    "unknown tag {token} at t={}; windows containing it are skipped",
                    event.timestamp
                ),
            }
        }
        self.buffer.push_back(Slot { token: token.clone(), known });
        if self.buffer.len() > self.model.window_len() {
            self.buffer.pop_front();
        }
        if self.buffer.len() < self.model.window_len() || !self.buffer.iter().all(|s| s.known) {
            return Ok(None);
        }
        let tokens: Vec<&str> = self.buffer.iter().map(|s| s.token.as_str()).collect();
        self.model.classify(&tokens, event.timestamp).map(Some)
    }
}

/// Folds `push_alarm` over a stream, collecting every detection.
pub fn replay<I>(state: &mut DetectorState, events: I) -> Result<Vec<Detection>>
where
    I: IntoIterator<Item = Result<AlarmEvent>>,
{
    let mut out = Vec::new();
    for ev in events {
        if let Some(d) = state.push_alarm(&ev?)? {
            out.push(d);
        }
    }
    Ok(out)
}

/// Lazily parses stream rows (`timestamp,variable,identifier,priority`; the
/// labeled six-column form is accepted too). An optional header is skipped.
pub fn stream_events<R: BufRead>(reader: R) -> impl Iterator<Item = Result<AlarmEvent>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        let t = line.trim();
        if t.is_empty() || (i == 0 && is_header(t)) {
            return None;
        }
        Some(parse_record(t, i + 1).map(|r| r.event))
    })
}
