//! Domain types shared by every stage of the pipeline: alarm events, fault
//! labels, classifier samples, plus tokenization, one-hot encoding and
//! seeded dataset splitting.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which limit an alarm crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    High,
    Low,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::High => "High",
            Direction::Low => "Low",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "High" => Ok(Direction::High),
            "Low" => Ok(Direction::Low),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown direction {other:?}"),
            }),
        }
    }
}

/// Builds the vocabulary token for an alarm: whitespace runs in the variable
/// name become a single `_`, then `+` and the direction are appended.
pub fn tokenize(variable_name: &str, direction: Direction) -> Result<String> {
    if variable_name.contains('+') {
        return Err(Error::MalformedVariable(variable_name.to_string()));
    }
    let parts: Vec<&str> = variable_name.split_whitespace().collect();
    if parts.is_empty() {
        return Err(Error::MalformedVariable(variable_name.to_string()));
    }
    Ok(format!("{}+{}", parts.join("_"), direction))
}

/// One annunciated alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEvent {
    pub timestamp: f64,
    pub variable_name: String,
    pub direction: Direction,
    pub priority: u8,
    pub tag_token: String,
}

impl AlarmEvent {
    pub fn new(
        timestamp: f64,
        variable_name: impl Into<String>,
        direction: Direction,
        priority: u8,
    ) -> Result<Self> {
        let variable_name = variable_name.into();
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::Trace(format!("invalid timestamp {timestamp}")));
        }
        let tag_token = tokenize(&variable_name, direction)?;
        Ok(AlarmEvent {
            timestamp,
            variable_name,
            direction,
            priority,
            tag_token,
        })
    }

    /// Chronological order with ties broken on `(variable_name, direction)`.
    pub fn chrono_cmp(&self, other: &Self) -> Ordering {
        self.timestamp
            .total_cmp(&other.timestamp)
            .then_with(|| self.variable_name.cmp(&other.variable_name))
            .then_with(|| self.direction.cmp(&other.direction))
    }
}

/// Sorts events chronologically using [`AlarmEvent::chrono_cmp`].
pub fn sort_events(events: &mut [AlarmEvent]) {
    events.sort_by(AlarmEvent::chrono_cmp);
}

/// The fault scenarios a model distinguishes, kept sorted so that the
/// scenario id to class index mapping is a fixed bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSet {
    ids: Vec<u32>,
}

pub const DEFAULT_SCENARIOS: [u32; 10] = [1, 2, 6, 7, 8, 10, 11, 12, 13, 17];

impl Default for ScenarioSet {
    fn default() -> Self {
        ScenarioSet {
            ids: DEFAULT_SCENARIOS.to_vec(),
        }
    }
}

impl ScenarioSet {
    pub fn new(ids: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() || ids[0] == 0 {
            return Err(Error::Label(
                "scenario set must be non-empty with positive ids".into(),
            ));
        }
        Ok(ScenarioSet { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn label(&self, scenario_id: u32) -> Result<FaultLabel> {
        self.ids
            .binary_search(&scenario_id)
            .map(|class_index| FaultLabel {
                scenario_id,
                class_index,
            })
            .map_err(|_| Error::Label(format!("unknown fault scenario {scenario_id}")))
    }

    pub fn label_for_class(&self, class_index: usize) -> Result<FaultLabel> {
        self.ids
            .get(class_index)
            .map(|&scenario_id| FaultLabel {
                scenario_id,
                class_index,
            })
            .ok_or_else(|| Error::Label(format!("class index {class_index} out of range")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultLabel {
    pub scenario_id: u32,
    pub class_index: usize,
}

/// One fault execution with its chronologically ordered alarms.
#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub occurrence_id: String,
    pub label: FaultLabel,
    pub events: Vec<AlarmEvent>,
}

pub fn one_hot(label: FaultLabel, classes: usize) -> Result<Vec<f64>> {
    if label.class_index >= classes {
        return Err(Error::Label(format!(
            "class index {} out of range for {classes} classes",
            label.class_index
        )));
    }
    let mut v = vec![0.0; classes];
    v[label.class_index] = 1.0;
    Ok(v)
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One classifier input: an embedded window and its one-hot target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Array2<f64>,
    pub target: Vec<f64>,
    pub occurrence_id: String,
    pub start: usize,
}

impl Sample {
    pub fn new(
        window: Array2<f64>,
        target: Vec<f64>,
        occurrence_id: impl Into<String>,
        start: usize,
    ) -> Result<Self> {
        if window.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("window contains non-finite entries".into()));
        }
        let ones = target.iter().filter(|&&t| t == 1.0).count();
        let zeros = target.iter().filter(|&&t| t == 0.0).count();
        if ones != 1 || ones + zeros != target.len() {
            return Err(Error::Label("target is not one-hot".into()));
        }
        Ok(Sample {
            window,
            target,
            occurrence_id: occurrence_id.into(),
            start,
        })
    }

    pub fn class_index(&self) -> usize {
        argmax(&self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Split(format!("fractions must lie in (0,1): {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Split(format!("fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` items: val and test are rounded,
    /// train takes the remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let n_val = (n as f64 * self.val_fraction).round() as usize;
        let n_test = (n as f64 * self.test_fraction).round() as usize;
        if n_val + n_test >= n || n_val == 0 || n_test == 0 {
            return Err(Error::Split(format!(
                "{n} items cannot be split into non-empty parts with {:?}",
                (self.train_fraction, self.val_fraction, self.test_fraction)
            )));
        }
        Ok((n - n_val - n_test, n_val, n_test))
    }
}

/// Seeded random partition into train, validation and test parts.
pub fn split_samples<T: Clone>(items: &[T], cfg: &SplitConfig) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.len() < 3 {
        return Err(Error::Split(format!("need at least 3 items, got {}", items.len())));
    }
    let (n_train, n_val, _) = cfg.sizes(items.len())?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}
