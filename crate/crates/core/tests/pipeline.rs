use std::sync::Arc;

use arca_core::detect::{replay, DetectorModel, DetectorState, OovPolicy};
use arca_core::embed::{train_skipgram, SkipGramConfig};
use arca_core::ingest::{
    assemble_occurrences, build_sequences, parse_alarm_log, read_windows, suppress_repeats, window_sequences,
    write_alarm_log, write_windows, PreprocessConfig,
};
use arca_core::net::{init_params, NetConfig};
use arca_core::simgen::{generate_corpus, GenConfig};
use arca_core::trainpipe::{samples_from_windows, train};
use arca_core::{split_samples, SplitConfig};

#[test]
fn log_and_windows_files_round_trip() {
    let occ = generate_corpus(&GenConfig::default()).unwrap();
    let mut log = Vec::new();
    write_alarm_log(&mut log, &occ).unwrap();
    let (back, scenarios) = assemble_occurrences(parse_alarm_log(log.as_slice()).unwrap()).unwrap();
    assert_eq!(back, occ);
    assert_eq!(scenarios.ids(), &[1, 2, 6, 7, 8, 10, 11, 12, 13, 17]);

    let seqs = build_sequences(&back, &PreprocessConfig::default()).unwrap();
    assert!(seqs.iter().all(|s| s.tokens.len() == 20));
    let windows = window_sequences(&seqs, 5).unwrap();
    assert_eq!(windows.len(), 1600);
    let mut text = Vec::new();
    write_windows(&mut text, &windows).unwrap();
    let (again, s2) = read_windows(text.as_slice()).unwrap();
    assert_eq!(again, windows);
    assert_eq!(s2, scenarios);
}

#[test]
fn loss_falls_over_first_ten_epochs() {
    let occ = generate_corpus(&GenConfig::default()).unwrap();
    let seqs = build_sequences(&occ, &PreprocessConfig::default()).unwrap();
    let table = train_skipgram(&seqs, &SkipGramConfig::default()).unwrap();
    let samples = samples_from_windows(&window_sequences(&seqs, 5).unwrap(), &table, 10).unwrap();
    let (tr, va, te) = split_samples(&samples, &SplitConfig::default()).unwrap();
    assert_eq!((tr.len(), va.len(), te.len()), (1120, 240, 240));

    let cfg = NetConfig { epochs: 10, ..NetConfig::default() };
    let (_, history) = train(init_params(&cfg).unwrap(), &tr, &va, &cfg).unwrap();
    assert_eq!(history.len(), 10);
    assert!(history[9].train_loss < history[0].train_loss);
    assert!(history.windows(2).all(|w| w[1].wall_time_s >= w[0].wall_time_s));
}

#[test]
fn every_occurrence_replays_to_sixteen_detections() {
    let occ = generate_corpus(&GenConfig::default()).unwrap();
    let seqs = build_sequences(&occ, &PreprocessConfig::default()).unwrap();
    let table = train_skipgram(&seqs, &SkipGramConfig { epochs: 1, ..SkipGramConfig::default() }).unwrap();
    let scenarios = GenConfig::default().scenarios().unwrap();
    let model = Arc::new(DetectorModel::new(init_params(&NetConfig::default()).unwrap(), table, scenarios).unwrap());
    for o in &occ {
        let kept: Vec<_> = suppress_repeats(&o.events, 60.0).unwrap().into_iter().take(20).collect();
        let mut state = DetectorState::new(model.clone(), OovPolicy::HaltOnOov);
        let dets = replay(&mut state, kept.iter().cloned().map(Ok)).unwrap();
        assert_eq!(dets.len(), 16, "{}", o.occurrence_id);
        assert_eq!(dets[0].at, kept[4].timestamp);
    }
}
