//! Alarm-log parsing and the preprocessing chain that turns raw logs into
//! fixed-length token windows: repeat suppression, grouping by occurrence,
//! first-k truncation and stride-1 windowing.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::types::{sort_events, AlarmEvent, Direction, FaultLabel, Occurrence, ScenarioSet};

pub const LOG_HEADER: &str = "timestamp,variable,identifier,priority,occurrence_id,fault";
pub const STREAM_HEADER: &str = "timestamp,variable,identifier,priority";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub k: usize,
    pub v: usize,
    pub repeat_suppress_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            k: 20,
            v: 5,
            repeat_suppress_s: 60.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v == 0 || self.v > self.k {
            return Err(Error::Config(format!("need 1 <= v <= k, got v={} k={}", self.v, self.k)));
        }
        if !(self.repeat_suppress_s >= 0.0) {
            return Err(Error::Config("repeat_suppress_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// One parsed log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub event: AlarmEvent,
    pub occurrence_id: Option<String>,
    pub fault: Option<u32>,
}

/// Parses one CSV row with 4 (stream) or 6 (labeled log) columns.
pub fn parse_record(line: &str, line_no: usize) -> Result<LogRecord> {
    let perr = |msg: String| Error::Parse { line: line_no, msg };
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() != 4 && cols.len() != 6 {
        return Err(perr(format!("expected 4 or 6 columns, found {}", cols.len())));
    }
    let timestamp: f64 = cols[0].parse().map_err(|_| perr(format!("bad timestamp {:?}", cols[0])))?;
    let direction: Direction = cols[2].parse().map_err(|_| perr(format!("unknown direction {:?}", cols[2])))?;
    let priority: u8 = cols[3].parse().map_err(|_| perr(format!("bad priority {:?}", cols[3])))?;
    let event = AlarmEvent::new(timestamp, cols[1], direction, priority).map_err(|e| perr(e.to_string()))?;
    let (mut occurrence_id, mut fault) = (None, None);
    if cols.len() == 6 {
        if !cols[4].is_empty() {
            occurrence_id = Some(cols[4].to_string());
        }
        if !cols[5].is_empty() {
            fault = Some(cols[5].parse().map_err(|_| perr(format!("bad fault {:?}", cols[5])))?);
        }
    }
    Ok(LogRecord {
        event,
        occurrence_id,
        fault,
    })
}

pub(crate) fn is_header(line: &str) -> bool {
    line.split(',').next().map(str::trim) == Some("timestamp")
}

/// Reads an alarm log, keeping rows in file order. Line numbers in errors are 1-based.
pub fn parse_alarm_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && is_header(trimmed)) {
            continue;
        }
        out.push(parse_record(trimmed, i + 1)?);
    }
    Ok(out)
}

pub fn write_alarm_log<W: Write>(mut w: W, occurrences: &[Occurrence]) -> Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for occ in occurrences {
        for e in &occ.events {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.timestamp, e.variable_name, e.direction, e.priority, occ.occurrence_id, occ.label.scenario_id
            )?;
        }
    }
    Ok(())
}

/// Groups labeled records into occurrences, in order of first appearance.
/// The scenario set is taken from the fault ids present in the log.
pub fn assemble_occurrences(records: Vec<LogRecord>) -> Result<(Vec<Occurrence>, ScenarioSet)> {
    let mut ids = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        match (&r.occurrence_id, r.fault) {
            (Some(_), Some(f)) => {
                ids.insert(f);
            }
            _ => return Err(Error::Label(format!("record {} has no occurrence id or fault label", i + 1))),
        }
    }
    let scenarios = ScenarioSet::new(ids)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<Occurrence> = Vec::new();
    for r in records {
        let occ_id = r.occurrence_id.unwrap_or_default();
        let label = scenarios.label(r.fault.unwrap_or_default())?;
        let slot = *index.entry(occ_id.clone()).or_insert_with(|| {
            out.push(Occurrence {
                occurrence_id: occ_id.clone(),
                label,
                events: Vec::new(),
            });
            out.len() - 1
        });
        if out[slot].label != label {
            return Err(Error::Label(format!("occurrence {occ_id} carries conflicting fault labels")));
        }
        out[slot].events.push(r.event);
    }
    for occ in &mut out {
        sort_events(&mut occ.events);
    }
    Ok((out, scenarios))
}

/// Drops an event iff an earlier *retained* event with the same tag lies
/// strictly less than `window_s` seconds before it.
pub fn suppress_repeats(events: &[AlarmEvent], window_s: f64) -> Result<Vec<AlarmEvent>> {
    if let Some(i) = events.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::Order(i + 1));
    }
    let mut last: HashMap<&str, f64> = HashMap::new();
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        match last.get(e.tag_token.as_str()) {
            Some(&t) if e.timestamp - t < window_s => {}
            _ => {
                last.insert(&e.tag_token, e.timestamp);
                out.push(e.clone());
            }
        }
    }
    Ok(out)
}

/// The first `k` alarm tags of one occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub label: FaultLabel,
    pub occurrence_id: String,
}

/// Suppresses repeats in every occurrence and keeps its first `k` tags.
pub fn build_sequences(occurrences: &[Occurrence], cfg: &PreprocessConfig) -> Result<Vec<TokenSequence>> {
    cfg.validate()?;
    let mut short = Vec::new();
    let mut out = Vec::with_capacity(occurrences.len());
    for occ in occurrences {
        let kept = suppress_repeats(&occ.events, cfg.repeat_suppress_s)?;
        if kept.len() < cfg.k {
            short.push(format!("{} ({} alarms)", occ.occurrence_id, kept.len()));
            continue;
        }
        out.push(TokenSequence {
            tokens: kept.into_iter().take(cfg.k).map(|e| e.tag_token).collect(),
            label: occ.label,
            occurrence_id: occ.occurrence_id.clone(),
        });
    }
    if !short.is_empty() {
        return Err(Error::InsufficientAlarms {
            occurrences: short,
            needed: cfg.k,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub tokens: Vec<String>,
    pub label: FaultLabel,
    pub occurrence_id: String,
    pub start: usize,
}

/// Cuts every sequence into its `len - v + 1` stride-1 windows.
pub fn window_sequences(seqs: &[TokenSequence], v: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for s in seqs {
        if v == 0 || v > s.tokens.len() {
            return Err(Error::Config(format!(
                "window length {v} invalid for sequence of length {}",
                s.tokens.len()
            )));
        }
        out.extend(s.tokens.windows(v).enumerate().map(|(start, w)| Window {
            tokens: w.to_vec(),
            label: s.label,
            occurrence_id: s.occurrence_id.clone(),
            start,
        }));
    }
    Ok(out)
}

/// One line per window: `occurrence_id,fault,start_index,tok1 tok2 ...`.
pub fn write_windows<W: Write>(mut w: W, windows: &[Window]) -> Result<()> {
    for win in windows {
        writeln!(
            w,
            "{},{},{},{}",
            win.occurrence_id,
            win.label.scenario_id,
            win.start,
            win.tokens.join(" ")
        )?;
    }
    Ok(())
}

pub fn read_windows<R: BufRead>(reader: R) -> Result<(Vec<Window>, ScenarioSet)> {
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: i + 1, msg };
        let cols: Vec<&str> = line.splitn(4, ',').collect();
        if cols.len() != 4 {
            return Err(perr("expected occurrence_id,fault,start_index,tokens".into()));
        }
        let fault: u32 = cols[1].parse().map_err(|_| perr(format!("bad fault {:?}", cols[1])))?;
        let start: usize = cols[2].parse().map_err(|_| perr(format!("bad start index {:?}", cols[2])))?;
        let tokens: Vec<String> = cols[3].split_whitespace().map(String::from).collect();
        if tokens.is_empty() {
            return Err(perr("window has no tokens".into()));
        }
        raw.push((cols[0].to_string(), fault, start, tokens, i + 1));
    }
    if raw.is_empty() {
        return Err(Error::Vocab("windows file is empty".into()));
    }
    let scenarios = ScenarioSet::new(raw.iter().map(|r| r.1))?;
    let v = raw[0].3.len();
    let mut out = Vec::with_capacity(raw.len());
    for (occurrence_id, fault, start, tokens, line) in raw {
        if tokens.len() != v {
            return Err(Error::Parse {
                line,
                msg: format!("window has {} tokens, expected {v}", tokens.len()),
            });
        }
        out.push(Window {
            tokens,
            label: scenarios.label(fault)?,
            occurrence_id,
            start,
        });
    }
    Ok((out, scenarios))
}

/// Rebuilds the source sequences from a complete set of stride-1 windows.
pub fn sequences_from_windows(windows: &[Window]) -> Result<Vec<TokenSequence>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Window>> = HashMap::new();
    for w in windows {
        groups
            .entry(&w.occurrence_id)
            .or_insert_with(|| {
                order.push(w.occurrence_id.clone());
                Vec::new()
            })
            .push(w);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut ws = groups.remove(id.as_str()).unwrap_or_default();
        ws.sort_by_key(|w| w.start);
        let mut tokens = ws[0].tokens.clone();
        for (i, w) in ws.iter().enumerate() {
            let consistent = w.start == i
                && w.label == ws[0].label
                && (i == 0 || w.tokens[..w.tokens.len() - 1] == tokens[i..]);
            if !consistent {
                return Err(Error::Config(format!("windows of {id} are not contiguous stride-1 windows")));
            }
            if i > 0 {
                tokens.push(w.tokens[w.tokens.len() - 1].clone());
            }
        }
        out.push(TokenSequence {
            tokens,
            label: ws[0].label,
            occurrence_id: id,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: f64, var: &str) -> AlarmEvent {
        AlarmEvent::new(t, var, Direction::High, 1).unwrap()
    }

    fn label() -> FaultLabel {
        FaultLabel { scenario_id: 1, class_index: 0 }
    }

    // Single pass that remembers the last retained time per tag.
    fn suppress_oracle(events: &[(f64, &str)], window: f64) -> Vec<(f64, String)> {
        let mut kept: Vec<(f64, String)> = Vec::new();
        for &(t, tag) in events {
            let last = kept.iter().rev().find(|(_, k)| k == tag).map(|(s, _)| *s);
            if last.is_none_or(|s| t - s >= window) {
                kept.push((t, tag.to_string()));
            }
        }
        kept
    }

    #[test]
    fn parse_examples() {
        let recs = parse_alarm_log("12.5,V03,High,2,occ-1-0,1\n".as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.event.timestamp, 12.5);
        assert_eq!(r.event.variable_name, "V03");
        assert_eq!(r.event.direction, Direction::High);
        assert_eq!(r.event.priority, 2);
        assert_eq!(r.occurrence_id.as_deref(), Some("occ-1-0"));
        assert_eq!(r.fault, Some(1));

        assert!(parse_alarm_log(format!("{LOG_HEADER}\n").as_bytes()).unwrap().is_empty());

        let bad = format!("{LOG_HEADER}\n1,V01,High,1,o,1\n2,V01,Hi,1,o,1\n");
        assert_eq!(
            parse_alarm_log(bad.as_bytes()).unwrap_err(),
            Error::Parse { line: 3, msg: "unknown direction \"Hi\"".into() }
        );
        let short = "1,V01,High\n";
        assert!(matches!(parse_alarm_log(short.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let stream = parse_alarm_log("3,Reactor Temp,Low,1\n".as_bytes()).unwrap();
        assert_eq!(stream[0].event.tag_token, "Reactor_Temp+Low");
        assert_eq!(stream[0].occurrence_id, None);
    }

    #[test]
    fn suppress_examples() {
        let events = vec![ev(0.0, "A"), ev(2.0, "A"), ev(3.0, "A"), ev(4.0, "B")];
        let kept = suppress_repeats(&events, 60.0).unwrap();
        let got: Vec<(f64, &str)> = kept.iter().map(|e| (e.timestamp, e.variable_name.as_str())).collect();
        assert_eq!(got, [(0.0, "A"), (4.0, "B")]);
        let oracle = suppress_oracle(&[(0.0, "A+High"), (2.0, "A+High"), (3.0, "A+High"), (4.0, "B+High")], 60.0);
        assert_eq!(oracle.len(), 2);

        assert_eq!(suppress_repeats(&events, 0.0).unwrap(), events);

        let spaced = vec![ev(0.0, "A"), ev(61.0, "A")];
        assert_eq!(suppress_repeats(&spaced, 60.0).unwrap(), spaced);

        let unsorted = vec![ev(5.0, "A"), ev(1.0, "B")];
        assert_eq!(suppress_repeats(&unsorted, 60.0), Err(Error::Order(1)));
    }

    #[test]
    fn sequences_truncate_and_check_length() {
        let cfg = PreprocessConfig::default();
        let mk = |n: usize| Occurrence {
            occurrence_id: format!("o{n}"),
            label: label(),
            events: (0..n).map(|i| ev(i as f64, &format!("V{i}"))).collect(),
        };
        let s = build_sequences(&[mk(20)], &cfg).unwrap();
        assert_eq!(s[0].tokens.len(), 20);
        let s = build_sequences(&[mk(35)], &cfg).unwrap();
        assert_eq!(s[0].tokens, (0..20).map(|i| format!("V{i}+High")).collect::<Vec<_>>());
        match build_sequences(&[mk(20), mk(19), mk(3)], &cfg) {
            Err(Error::InsufficientAlarms { occurrences, needed }) => {
                assert_eq!(needed, 20);
                assert_eq!(occurrences.len(), 2);
                assert!(occurrences[0].starts_with("o19"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            label: label(),
            occurrence_id: "o".into(),
        }
    }

    #[test]
    fn window_examples() {
        let s = seq(&["a", "b", "c", "d", "e", "f"]);
        let w = window_sequences(std::slice::from_ref(&s), 5).unwrap();
        // enumerate every contiguous slice of length 5 by hand
        let mut expected = Vec::new();
        for start in 0..6 {
            if start + 5 <= 6 {
                expected.push(s.tokens[start..start + 5].to_vec());
            }
        }
        assert_eq!(w.iter().map(|x| x.tokens.clone()).collect::<Vec<_>>(), expected);
        assert_eq!(w[1].tokens, ["b", "c", "d", "e", "f"]);

        let whole = window_sequences(std::slice::from_ref(&s), 6).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].tokens, s.tokens);
        assert!(window_sequences(&[s], 7).is_err());

        let seqs: Vec<TokenSequence> = (0..100).map(|_| seq(&["x"; 20])).collect();
        assert_eq!(window_sequences(&seqs, 5).unwrap().len(), 1600);
    }

    #[test]
    fn windows_file_round_trip_and_sequence_rebuild() {
        let s = seq(&["a+High", "b+Low", "c+High", "d+High", "e+Low", "f+Low", "g+High"]);
        let w = window_sequences(std::slice::from_ref(&s), 3).unwrap();
        let mut buf = Vec::new();
        write_windows(&mut buf, &w).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "o,1,0,a+High b+Low c+High");
        let (back, set) = read_windows(buf.as_slice()).unwrap();
        assert_eq!(back, w);
        assert_eq!(set.ids(), &[1]);
        assert_eq!(sequences_from_windows(&back).unwrap(), vec![s]);
    }

    #[test]
    fn assemble_requires_labels() {
        let recs = parse_alarm_log("1,V01,High,1\n".as_bytes()).unwrap();
        assert!(matches!(assemble_occurrences(recs), Err(Error::Label(_))));
        let text = "timestamp,variable,identifier,priority,occurrence_id,fault\n\
                    5,V02,Low,1,b,7\n1,V01,High,1,a,2\n0,V03,High,1,b,7\n";
        let (occ, set) = assemble_occurrences(parse_alarm_log(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(set.ids(), &[2, 7]);
        assert_eq!(occ.len(), 2);
        assert_eq!(occ[0].occurrence_id, "b");
        assert_eq!(occ[0].label.class_index, 1);
        assert_eq!(occ[0].events[0].variable_name, "V03");
    }

    fn arb_events() -> impl Strategy<Value = Vec<AlarmEvent>> {
        prop::collection::vec((0u32..500, 0usize..4), 0..60).prop_map(|mut raw| {
            raw.sort();
            raw.into_iter()
                .map(|(t, v)| ev(t as f64 / 2.0, ["A", "B", "C", "D"][v]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn window_count_identity(k in 1usize..=50, v_frac in 0.0f64..1.0) {
            let v = 1 + ((k - 1) as f64 * v_frac) as usize;
            let tokens: Vec<String> = (0..k).map(|i| format!("t{i}")).collect();
            let s = TokenSequence { tokens: tokens.clone(), label: label(), occurrence_id: "o".into() };
            let w = window_sequences(&[s], v).unwrap();
            prop_assert_eq!(w.len(), k - v + 1);
            for win in &w {
                prop_assert_eq!(&win.tokens[..], &tokens[win.start..win.start + v]);
            }
        }

        #[test]
        fn suppression_matches_oracle_and_is_idempotent(events in arb_events(), window in 0u32..100) {
            let window = window as f64;
            let once = suppress_repeats(&events, window).unwrap();
            let twice = suppress_repeats(&once, window).unwrap();
            prop_assert_eq!(&once, &twice);
            let raw: Vec<(f64, &str)> = events.iter().map(|e| (e.timestamp, e.tag_token.as_str())).collect();
            let oracle = suppress_oracle(&raw, window);
            let got: Vec<(f64, String)> = once.iter().map(|e| (e.timestamp, e.tag_token.clone())).collect();
            prop_assert_eq!(got, oracle);
            // retained events keep their relative order
            let mut pos = 0;
            for e in &once {
                pos += events[pos..].iter().position(|x| x == e).unwrap() + 1;
            }
        }
    }
}
