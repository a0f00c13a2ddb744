//! Synthetic labeled alarm corpora.
//!
//! Each fault scenario is described by a [`FaultSignature`]: an ordered list
//! of alarm steps with noisy onsets, plus a pool of tags that keep firing as
//! the disturbance propagates. Onsets pass through the on-delay timer of the
//! variable's kind before they are annunciated, and chattering bursts are
//! injected on top so that downstream repeat suppression has work to do.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kvconfig::KvConfig;
use crate::types::{sort_events, AlarmEvent, Direction, Occurrence, ScenarioSet, DEFAULT_SCENARIOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    Pressure,
    Flow,
    Temperature,
    Level,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub variable_name: String,
    pub kind: VariableKind,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmLimits {
    pub high: f64,
    pub low: f64,
}

/// Alarm limits for a variable: the override when given, otherwise mu ± 3 sigma.
pub fn limits_for(spec: &VariableSpec, over: Option<AlarmLimits>) -> Result<AlarmLimits> {
    if !(spec.sigma > 0.0) {
        return Err(Error::Config(format!(
            "variable {}: sigma must be positive",
            spec.variable_name
        )));
    }
    match over {
        Some(l) if l.low >= l.high => Err(Error::Config(format!(
            "variable {}: low limit {} not below high limit {}",
            spec.variable_name, l.low, l.high
        ))),
        Some(l) => Ok(l),
        None => Ok(AlarmLimits {
            high: spec.mu + 3.0 * spec.sigma,
            low: spec.mu - 3.0 * spec.sigma,
        }),
    }
}

/// On-delay timer: an alarm fires only once its condition has held for `delay_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayTimer {
    pub delay_s: f64,
}

pub const FAST_DELAY_S: f64 = 15.0;
pub const SLOW_DELAY_S: f64 = 60.0;

impl DelayTimer {
    pub fn for_kind(kind: VariableKind, other_default_s: f64) -> Self {
        let delay_s = match kind {
            VariableKind::Pressure | VariableKind::Flow => FAST_DELAY_S,
            VariableKind::Temperature | VariableKind::Level => SLOW_DELAY_S,
            VariableKind::Other => other_default_s,
        };
        DelayTimer { delay_s }
    }
}

/// Activation times produced by an on-delay timer over a variable's limit
/// excursions, given as closed `(start, end)` intervals.
///
/// An excursion lasting at least the delay raises exactly one alarm at
/// `start + delay`; shorter ones raise nothing.
pub fn apply_delay_timer(excursions: &[(f64, f64)], timer: DelayTimer) -> Result<Vec<f64>> {
    if !(timer.delay_s >= 0.0) {
        return Err(Error::Trace(format!("negative delay {}", timer.delay_s)));
    }
    let mut prev_end = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for (i, &(start, end)) in excursions.iter().enumerate() {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::Trace(format!("excursion {i} is not a proper interval")));
        }
        if start <= prev_end {
            return Err(Error::Trace(format!("excursion {i} overlaps or precedes its predecessor")));
        }
        prev_end = end;
        if end - start >= timer.delay_s {
            out.push(start + timer.delay_s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureStep {
    pub variable_name: String,
    pub direction: Direction,
    pub onset_mean_s: f64,
    pub onset_jitter_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSignature {
    pub scenario_id: u32,
    pub steps: Vec<SignatureStep>,
    pub tail_pool: Vec<(String, Direction)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub plant: Vec<VariableSpec>,
    pub signatures: Vec<FaultSignature>,
    pub occurrences_per_fault: usize,
    pub alarms_per_occurrence: usize,
    pub chattering_rate: f64,
    pub burst_len: usize,
    pub burst_gap_s: f64,
    /// Delay for variables of kind `Other`.
    pub other_delay_s: f64,
    /// Minimum spacing between two annunciations of the same tag; must not
    /// be shorter than the downstream repeat-suppression window.
    pub rearm_s: f64,
    /// Spacing of propagation alarms appended after the signature.
    pub tail_spacing_s: f64,
    /// Idle time between consecutive occurrences in the corpus timeline.
    pub occurrence_gap_s: f64,
    /// Downstream truncation length and window length, checked at load.
    pub k: usize,
    pub v: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let plant = default_plant();
        let signatures = default_signatures(&plant);
        GenConfig {
            plant,
            signatures,
            occurrences_per_fault: 10,
            alarms_per_occurrence: 20,
            chattering_rate: 0.2,
            burst_len: 3,
            burst_gap_s: 2.0,
            other_delay_s: FAST_DELAY_S,
            rearm_s: 60.0,
            tail_spacing_s: 30.0,
            occurrence_gap_s: 600.0,
            k: 20,
            v: 5,
            seed: 0,
        }
    }
}

const KINDS: [VariableKind; 4] = [
    VariableKind::Pressure,
    VariableKind::Flow,
    VariableKind::Temperature,
    VariableKind::Level,
];

/// 41 variables `V01..V41` with kinds cycling pressure, flow, temperature, level.
pub fn default_plant() -> Vec<VariableSpec> {
    (0..41)
        .map(|i| VariableSpec {
            variable_name: format!("V{:02}", i + 1),
            kind: KINDS[i % 4],
            mu: 50.0 + 10.0 * i as f64,
            sigma: 1.0 + 0.5 * (i % 5) as f64,
        })
        .collect()
}

fn flip(d: Direction) -> Direction {
    match d {
        Direction::High => Direction::Low,
        Direction::Low => Direction::High,
    }
}

/// One signature per default scenario. Fault `f` originates in its own block
/// of four variables, spills into the next fault's block and into the last,
/// shared variable.
pub fn default_signatures(plant: &[VariableSpec]) -> Vec<FaultSignature> {
    let name = |i: usize| plant[i].variable_name.clone();
    let shared = plant.len() - 1;
    DEFAULT_SCENARIOS
        .iter()
        .enumerate()
        .map(|(f, &scenario_id)| {
            let home = |j: usize| name(4 * f + j);
            let next = |j: usize| name(4 * ((f + 1) % 10) + j);
            let dir = |bit: usize| {
                if (f >> bit) & 1 == 0 {
                    Direction::High
                } else {
                    Direction::Low
                }
            };
            let order = [
                (home(0), dir(0)),
                (home(1), dir(1)),
                (home(2), dir(2)),
                (next(0), dir(3)),
                (home(3), dir(0)),
                (name(shared), dir(1)),
                (home(0), flip(dir(0))),
                (next(1), dir(2)),
                (home(1), flip(dir(1))),
                (home(2), flip(dir(2))),
                (next(2), dir(0)),
                (home(3), flip(dir(0))),
            ];
            let steps = order
                .into_iter()
                .enumerate()
                .map(|(i, (variable_name, direction))| SignatureStep {
                    variable_name,
                    direction,
                    onset_mean_s: 25.0 * i as f64,
                    onset_jitter_s: 8.0,
                })
                .collect();
            let mut tail_pool: Vec<(String, Direction)> = (0..4)
                .flat_map(|j| [(home(j), dir(j % 3)), (home(j), flip(dir(j % 3)))])
                .collect();
            tail_pool.push((next(3), dir(1)));
            tail_pool.push((name(shared), flip(dir(1))));
            FaultSignature {
                scenario_id,
                steps,
                tail_pool,
            }
        })
        .collect()
}

impl GenConfig {
    fn spec(&self, variable_name: &str) -> Option<&VariableSpec> {
        self.plant.iter().find(|s| s.variable_name == variable_name)
    }

    pub fn scenarios(&self) -> Result<ScenarioSet> {
        ScenarioSet::new(self.signatures.iter().map(|s| s.scenario_id))
    }

    fn delay_of(&self, variable_name: &str) -> Result<f64> {
        self.spec(variable_name)
            .map(|s| DelayTimer::for_kind(s.kind, self.other_delay_s).delay_s)
            .ok_or_else(|| Error::Config(format!("unknown variable {variable_name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.plant.is_empty() {
            return cfg_err("plant has no variables".into());
        }
        for spec in &self.plant {
            limits_for(spec, None)?;
            crate::types::tokenize(&spec.variable_name, Direction::High)?;
        }
        if self.signatures.is_empty() {
            return cfg_err("no fault signatures".into());
        }
        if self.occurrences_per_fault == 0 {
            return cfg_err("occurrences_per_fault must be at least 1".into());
        }
        if self.v == 0 || self.v > self.k {
            return cfg_err(format!("window length v={} must lie in 1..=k={}", self.v, self.k));
        }
        if self.alarms_per_occurrence < self.k {
            return cfg_err(format!(
                "alarms_per_occurrence {} is below k={}",
                self.alarms_per_occurrence, self.k
            ));
        }
        if !(0.0..=1.0).contains(&self.chattering_rate) {
            return cfg_err(format!("chattering_rate {} not a probability", self.chattering_rate));
        }
        if !(self.other_delay_s >= 0.0 && self.rearm_s >= 0.0 && self.tail_spacing_s > 0.0) {
            return cfg_err("delays and spacings must be non-negative".into());
        }
        if !(self.occurrence_gap_s >= 0.0) {
            return cfg_err("occurrence_gap_s must be non-negative".into());
        }
        let mut min_delay = f64::INFINITY;
        let mut ids = std::collections::HashSet::new();
        for sig in &self.signatures {
            if !ids.insert(sig.scenario_id) {
                return cfg_err(format!("duplicate signature for scenario {}", sig.scenario_id));
            }
            if sig.steps.is_empty() {
                return cfg_err(format!("signature {} has no steps", sig.scenario_id));
            }
            for st in &sig.steps {
                min_delay = min_delay.min(self.delay_of(&st.variable_name)?);
                if !(st.onset_jitter_s >= 0.0 && st.onset_mean_s.is_finite()) {
                    return cfg_err(format!("signature {}: bad onset", sig.scenario_id));
                }
            }
            for (var, _) in &sig.tail_pool {
                min_delay = min_delay.min(self.delay_of(var)?);
            }
        }
        if self.burst_len > 0 && !(self.burst_gap_s > 0.0 && self.burst_gap_s < min_delay) {
            return cfg_err(format!(
                "burst_gap_s {} must be positive and below the shortest delay {min_delay}",
                self.burst_gap_s
            ));
        }
        for (i, a) in self.signatures.iter().enumerate() {
            for b in &self.signatures[i + 1..] {
                let n = self.v.min(a.steps.len()).min(b.steps.len());
                let same = a.steps[..n]
                    .iter()
                    .zip(&b.steps[..n])
                    .all(|(x, y)| x.variable_name == y.variable_name && x.direction == y.direction);
                if same && a.steps.len().min(self.v) == b.steps.len().min(self.v) {
                    return cfg_err(format!(
                        "signatures {} and {} share their leading steps",
                        a.scenario_id, b.scenario_id
                    ));
                }
            }
        }
        self.scenarios()?;
        Ok(())
    }

    /// Overrides scalar settings from a flat key=value file. The plant and
    /// signatures always come from the built-in defaults, optionally
    /// restricted with `scenarios = 1,2,...`.
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut cfg = GenConfig::default();
        kv.take("seed", &mut cfg.seed)?;
        kv.take("occurrences_per_fault", &mut cfg.occurrences_per_fault)?;
        kv.take("alarms_per_occurrence", &mut cfg.alarms_per_occurrence)?;
        kv.take("chattering_rate", &mut cfg.chattering_rate)?;
        kv.take("burst_len", &mut cfg.burst_len)?;
        kv.take("burst_gap_s", &mut cfg.burst_gap_s)?;
        kv.take("other_delay_s", &mut cfg.other_delay_s)?;
        kv.take("rearm_s", &mut cfg.rearm_s)?;
        kv.take("tail_spacing_s", &mut cfg.tail_spacing_s)?;
        kv.take("occurrence_gap_s", &mut cfg.occurrence_gap_s)?;
        kv.take("k", &mut cfg.k)?;
        kv.take("v", &mut cfg.v)?;
        if let Some(ids) = kv.take_list::<u32>("scenarios")? {
            for id in &ids {
                if !cfg.signatures.iter().any(|s| s.scenario_id == *id) {
                    return Err(Error::Config(format!("key \"scenarios\": no signature for {id}")));
                }
            }
            cfg.signatures.retain(|s| ids.contains(&s.scenario_id));
        }
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the scalar settings in the format [`GenConfig::from_kv`] reads.
    pub fn to_kv_string(&self) -> String {
        let ids: Vec<String> = self.signatures.iter().map(|s| s.scenario_id.to_string()).collect();
        format!(
            "seed = {}\noccurrences_per_fault = {}\nalarms_per_occurrence = {}\nchattering_rate = {}\n\
             burst_len = {}\nburst_gap_s = {}\nother_delay_s = {}\nrearm_s = {}\ntail_spacing_s = {}\n\
             occurrence_gap_s = {}\nk = {}\nv = {}\nscenarios = {}\n",
            self.seed,
            self.occurrences_per_fault,
            self.alarms_per_occurrence,
            self.chattering_rate,
            self.burst_len,
            self.burst_gap_s,
            self.other_delay_s,
            self.rearm_s,
            self.tail_spacing_s,
            self.occurrence_gap_s,
            self.k,
            self.v,
            ids.join(","),
        )
    }
}

fn priority_of(kind: VariableKind) -> u8 {
    match kind {
        VariableKind::Pressure => 1,
        VariableKind::Temperature => 2,
        VariableKind::Flow | VariableKind::Level => 3,
        VariableKind::Other => 4,
    }
}

/// Random stream for one occurrence, independent of generation order.
pub fn occurrence_rng(seed: u64, fault_index: usize, occurrence_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((fault_index as u64) << 32) | occurrence_index as u64);
    rng
}

/// Generates one execution of a fault, with timestamps relative to `t0`.
pub fn generate_occurrence<R: Rng>(
    sig: &FaultSignature,
    cfg: &GenConfig,
    rng: &mut R,
    occurrence_id: &str,
    t0: f64,
) -> Result<Occurrence> {
    let label = cfg.scenarios()?.label(sig.scenario_id)?;
    let target = cfg.alarms_per_occurrence;

    let mut base: Vec<(f64, &str, Direction)> = Vec::with_capacity(target);
    for st in &sig.steps {
        let noise: f64 = rng.sample(StandardNormal);
        let onset = (st.onset_mean_s + st.onset_jitter_s * noise).max(0.0);
        base.push((onset + cfg.delay_of(&st.variable_name)?, &st.variable_name, st.direction));
    }
    base.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));

    let mut last_seen: HashMap<(&str, Direction), f64> = HashMap::new();
    let mut kept: Vec<(f64, &str, Direction)> = Vec::with_capacity(target);
    for (t, var, dir) in base {
        if kept.len() == target {
            break;
        }
        if last_seen.get(&(var, dir)).is_some_and(|&p| t - p < cfg.rearm_s) {
            continue;
        }
        last_seen.insert((var, dir), t);
        kept.push((t, var, dir));
    }

    if kept.len() < target {
        if sig.tail_pool.is_empty() {
            return Err(Error::Generation(format!(
                "signature {} yields {} alarms, {target} required, and has no tail pool",
                sig.scenario_id,
                kept.len()
            )));
        }
        let mut t = kept.last().map_or(0.0, |e| e.0);
        let max_tries = (target + 1) * (sig.tail_pool.len() + 1) * 4;
        let mut tries = 0;
        let mut idx = 0;
        while kept.len() < target {
            if tries == max_tries {
                return Err(Error::Generation(format!(
                    "signature {} tail pool cannot supply {target} alarms",
                    sig.scenario_id
                )));
            }
            tries += 1;
            t += cfg.tail_spacing_s;
            let (var, dir) = &sig.tail_pool[idx % sig.tail_pool.len()];
            idx += 1;
            let key = (var.as_str(), *dir);
            if last_seen.get(&key).is_some_and(|&p| t - p < cfg.rearm_s) {
                continue;
            }
            last_seen.insert(key, t);
            kept.push((t, var.as_str(), *dir));
        }
    }

    let mut events = Vec::with_capacity(target * (1 + cfg.burst_len));
    for &(t, var, dir) in &kept {
        let kind = cfg.spec(var).map_or(VariableKind::Other, |s| s.kind);
        let prio = priority_of(kind);
        events.push(AlarmEvent::new(t0 + t, var, dir, prio)?);
        if cfg.burst_len > 0 && rng.random::<f64>() < cfg.chattering_rate {
            for j in 1..=cfg.burst_len {
                events.push(AlarmEvent::new(t0 + t + j as f64 * cfg.burst_gap_s, var, dir, prio)?);
            }
        }
    }
    sort_events(&mut events);
    Ok(Occurrence {
        occurrence_id: occurrence_id.to_string(),
        label,
        events,
    })
}

/// Generates `occurrences_per_fault` executions of every signature, laid out
/// one after another on a shared timeline.
pub fn generate_corpus(cfg: &GenConfig) -> Result<Vec<Occurrence>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.signatures.len() * cfg.occurrences_per_fault);
    let mut t0 = 0.0;
    for (f, sig) in cfg.signatures.iter().enumerate() {
        for i in 0..cfg.occurrences_per_fault {
            let mut rng = occurrence_rng(cfg.seed, f, i);
            let id = format!("occ-{}-{}", sig.scenario_id, i);
            let occ = generate_occurrence(sig, cfg, &mut rng, &id, t0)?;
            let end = occ.events.last().map_or(t0, |e| e.timestamp);
            t0 = (end + cfg.occurrence_gap_s).ceil();
            out.push(occ);
        }
    }
    Ok(out)
}
