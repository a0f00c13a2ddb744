//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arca_cli::{
    cmd_detect, cmd_preprocess, cmd_simulate, cmd_train, cmd_train_embed, load_detector, DetectArgs, OovArg,
    PreprocessArgs, SimulateArgs, TrainArgs, TrainEmbedArgs,
};
use arca_core::detect::{replay, DetectorState, OovPolicy};
use arca_core::embed::{pair_loss_grad, train_skipgram, EmbeddingTable, SkipGramConfig};
use arca_core::ingest::{build_sequences, suppress_repeats, window_sequences, PreprocessConfig, TokenSequence};
use arca_core::math::cosine;
use arca_core::net::{attention_forward, gradcheck, gradcheck_dense, init_params, loss, read_model, write_model};
use arca_core::net::{AttentionParams, NetConfig};
use arca_core::simgen::{apply_delay_timer, generate_corpus, DelayTimer, GenConfig, VariableKind};
use arca_core::trainpipe::{samples_from_windows, EvalReport};
use arca_core::{split_samples, FaultLabel, Sample, SplitConfig};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Artifacts of one full simulate → preprocess → train-embed → train chain.
struct Run {
    dir: PathBuf,
    test_acc: f64,
    wall_s: f64,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn pipeline(dir: &Path, seed: u64) -> Run {
    fs::create_dir_all(dir).unwrap();
    let start = Instant::now();
    let log = dir.join("log.csv");
    let win = dir.join("win.txt");
    let emb = dir.join("emb.txt");
    let model = dir.join("model.bin");
    cmd_simulate(&SimulateArgs { config: None, out: log.clone(), seed: Some(seed) }).unwrap();
    cmd_preprocess(&PreprocessArgs { log, out: win.clone(), k: 20, v: 5, suppress: 60.0 }).unwrap();
    cmd_train_embed(&TrainEmbedArgs { windows: win.clone(), config: None, out: emb.clone(), seed: Some(seed) }).unwrap();
    let summary = cmd_train(&TrainArgs {
        windows: win,
        embeddings: emb,
        config: None,
        out: model,
        seed: Some(seed),
        epochs: None,
        history: None,
    })
    .unwrap();
    Run { dir: dir.to_path_buf(), test_acc: summary.test_acc, wall_s: start.elapsed().as_secs_f64() }
}

fn default_sequences(seed: u64) -> Vec<TokenSequence> {
    let occ = generate_corpus(&GenConfig { seed, ..GenConfig::default() }).unwrap();
    build_sequences(&occ, &PreprocessConfig::default()).unwrap()
}

fn c1(runs: &[Run]) -> Verdict {
    let accs: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
    let walls: Vec<f64> = runs.iter().map(|r| r.wall_s).collect();
    let best = accs.iter().cloned().fold(0.0, f64::max);
    let pass = accs.iter().all(|&a| a >= 0.90) && best >= 0.95 && walls.iter().all(|&w| w <= 300.0);
    let accs_s: Vec<String> = accs.iter().map(|a| format!("{a:.4}")).collect();
    let walls_s: Vec<String> = walls.iter().map(|w| format!("{w:.0}s")).collect();
    verdict(pass, format!("test accuracy per seed [{}], wall time [{}]", accs_s.join(", "), walls_s.join(", ")))
}

fn c2(run: &Run) -> Verdict {
    let lines = fs::read_to_string(run.path("win.txt")).unwrap().lines().count();
    let mut bad = Vec::new();
    for k in 1..=50usize {
        let seq = TokenSequence {
            tokens: (0..k).map(|i| format!("T{i}+High")).collect(),
            label: FaultLabel { scenario_id: 1, class_index: 0 },
            occurrence_id: "o".into(),
        };
        for v in 1..=k {
            let w = window_sequences(std::slice::from_ref(&seq), v).unwrap();
            let contiguous = w.iter().enumerate().all(|(i, x)| x.start == i && x.tokens == seq.tokens[i..i + v]);
            if w.len() != k - v + 1 || !contiguous {
                bad.push((k, v));
            }
        }
    }
    verdict(
        lines == 1600 && bad.is_empty(),
        format!("{lines} windows from the default corpus; {} of 1275 (k, v) pairs off", bad.len()),
    )
}

fn c3() -> Verdict {
    let start = Instant::now();
    let mut worst: HashMap<&str, f64> = HashMap::new();
    let mut dense = 0.0f64;
    for seed in 1..=3 {
        for (layer, e) in gradcheck(&NetConfig::tiny(), seed).unwrap().by_layer() {
            let w = worst.entry(layer).or_insert(0.0);
            *w = w.max(e);
        }
        dense = dense.max(gradcheck_dense(&NetConfig::tiny(), seed).unwrap().max_error());
    }
    let secs = start.elapsed().as_secs_f64();
    let layers = ["conv", "lstm_fwd", "lstm_bwd", "attn", "dense"];
    let all_layers = layers.iter().all(|l| worst.get(l).is_some_and(|&e| e < 1e-4));
    let report: Vec<String> = layers.iter().map(|l| format!("{l} {:.1e}", worst.get(l).copied().unwrap_or(f64::NAN))).collect();
    verdict(
        all_layers && dense < 1e-7 && secs < 30.0,
        format!("{}; dense-only {dense:.1e}; {secs:.1}s", report.join(", ")),
    )
}

fn c4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_row = 0.0f64;
    let mut worst_t1 = 0.0f64;
    let mut t1_cases = 0;
    for case in 0..1000 {
        let t_len = if case % 5 == 0 { 1 } else { rng.random_range(1..=8) };
        let width = rng.random_range(1..=8);
        let adim = rng.random_range(1..=6);
        let scale = [0.1, 1.0, 5.0, 30.0][case % 4];
        let u = |r: &mut ChaCha8Rng| r.random_range(-scale..scale);
        let h = Array2::from_shape_simple_fn((t_len, width), || u(&mut rng));
        let p = AttentionParams {
            wg: Array2::from_shape_simple_fn((adim, width), || u(&mut rng)),
            wg_prime: Array2::from_shape_simple_fn((adim, width), || u(&mut rng)),
            bg: Array1::from_shape_simple_fn(adim, || u(&mut rng)),
            walpha: Array1::from_shape_simple_fn(adim, || u(&mut rng)),
            balpha: u(&mut rng),
        };
        let (l, a) = attention_forward(h.view(), &p).unwrap();
        for row in a.rows() {
            worst_row = worst_row.max((row.sum() - 1.0).abs());
        }
        if t_len == 1 {
            t1_cases += 1;
            worst_t1 = worst_t1.max((&l - &h).iter().fold(0.0, |m, x| m.max(x.abs())));
        }
    }
    verdict(
        worst_row <= 1e-12 && worst_t1 <= 1e-12,
        format!("1000 inputs: max |row sum - 1| {worst_row:.1e}; {t1_cases} single-step cases, max |l - h| {worst_t1:.1e}"),
    )
}

/// Steps a 0.1 s clock through the excursions and fires once per run of
/// continuous activity that has lasted `delay` ticks.
fn brute_force_timer(excursions: &[(i64, i64)], delay: i64) -> Vec<i64> {
    let horizon = excursions.last().map_or(0, |e| e.1) + 1;
    let active = |t: i64| excursions.iter().any(|&(s, e)| s <= t && t <= e);
    let mut fired = Vec::new();
    let mut run_start: Option<i64> = None;
    let mut done = false;
    for t in 0..=horizon {
        if active(t) {
            let s = *run_start.get_or_insert(t);
            if !done && t - s >= delay {
                fired.push(t);
                done = true;
            }
        } else {
            run_start = None;
            done = false;
        }
    }
    fired
}

fn c5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut activations = 0;
    for case in 0..500 {
        // endpoints on a 0.5 s grid so both sides see exact values
        let delay_ticks = match case % 3 {
            0 => 150,
            1 => 600,
            _ => 5 * rng.random_range(0..=180),
        };
        let n = rng.random_range(0..=8);
        let mut cursor = 5 * rng.random_range(0..=20);
        let mut ex = Vec::new();
        for _ in 0..n {
            let start = cursor + 5 * rng.random_range(1..=400);
            let end = start + 5 * rng.random_range(1..=240);
            ex.push((start, end));
            cursor = end;
        }
        let secs: Vec<(f64, f64)> = ex.iter().map(|&(s, e)| (s as f64 / 10.0, e as f64 / 10.0)).collect();
        let got = apply_delay_timer(&secs, DelayTimer { delay_s: delay_ticks as f64 / 10.0 }).unwrap();
        let want: Vec<f64> = brute_force_timer(&ex, delay_ticks).iter().map(|&t| t as f64 / 10.0).collect();
        activations += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    let kinds = [
        (VariableKind::Pressure, 15.0),
        (VariableKind::Flow, 15.0),
        (VariableKind::Temperature, 60.0),
        (VariableKind::Level, 60.0),
    ];
    let mapping = kinds.iter().all(|&(k, d)| DelayTimer::for_kind(k, 15.0).delay_s == d);
    verdict(
        mismatches == 0 && mapping,
        format!("500 excursion lists, {activations} activations, {mismatches} mismatches; kind mapping {}", if mapping { "ok" } else { "wrong" }),
    )
}

fn c6(run: &Run) -> Verdict {
    let detector = load_detector(&run.path("model.bin"), &run.path("emb.txt")).unwrap();
    let held_out = generate_corpus(&GenConfig { seed: 0x5eed_0bad, occurrences_per_fault: 1, ..GenConfig::default() }).unwrap();
    let mut correct = 0;
    let mut counts = Vec::new();
    for occ in &held_out {
        let kept: Vec<_> = suppress_repeats(&occ.events, 60.0).unwrap().into_iter().take(20).collect();
        let mut state = DetectorState::new(detector.clone(), OovPolicy::SkipWindow);
        let dets = replay(&mut state, kept.into_iter().map(Ok)).unwrap();
        counts.push(dets.len());
        if dets.first().is_some_and(|d| d.predicted_scenario == occ.label.scenario_id) {
            correct += 1;
        }
    }
    verdict(
        held_out.len() == 10 && correct >= 9 && counts.iter().all(|&c| c == 16),
        format!("first window correct for {correct}/10 held-out faults; detections per replay {counts:?}"),
    )
}

fn c7() -> Verdict {
    let seqs = default_sequences(0);
    let table = train_skipgram(&seqs, &SkipGramConfig::default()).unwrap();
    let window = SkipGramConfig::default().context_window;
    let mut near: HashSet<(usize, usize)> = HashSet::new();
    let mut together: HashSet<(usize, usize)> = HashSet::new();
    for s in &seqs {
        let idx: Vec<usize> = s.tokens.iter().map(|t| table.index_of(t).unwrap()).collect();
        for i in 0..idx.len() {
            for j in 0..idx.len() {
                let pair = (idx[i].min(idx[j]), idx[i].max(idx[j]));
                if idx[i] != idx[j] {
                    together.insert(pair);
                    if i.abs_diff(j) <= window {
                        near.insert(pair);
                    }
                }
            }
        }
    }
    let cos = |a: usize, b: usize| cosine(table.vectors.row(a).as_slice().unwrap(), table.vectors.row(b).as_slice().unwrap());
    let mean_near = near.iter().map(|&(a, b)| cos(a, b)).sum::<f64>() / near.len() as f64;
    let mut never = Vec::new();
    for a in 0..table.len() {
        for b in a + 1..table.len() {
            if !together.contains(&(a, b)) {
                never.push(cos(a, b));
            }
        }
    }
    let mean_never = never.iter().sum::<f64>() / never.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let eps = 1e-5;
    for _ in 0..20 {
        let v = |r: &mut ChaCha8Rng| (0..10).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let center = v(&mut rng);
        let context = v(&mut rng);
        let negs: Vec<Vec<f64>> = (0..5).map(|_| v(&mut rng)).collect();
        let f = |c: &[f64], o: &[f64], n: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = n.iter().map(Vec::as_slice).collect();
            pair_loss_grad(c, o, &refs).loss
        };
        let g = pair_loss_grad(&center, &context, &negs.iter().map(Vec::as_slice).collect::<Vec<_>>());
        for i in 0..10 {
            let (mut up, mut dn) = (center.clone(), center.clone());
            up[i] += eps;
            dn[i] -= eps;
            let num = (f(&up, &context, &negs) - f(&dn, &context, &negs)) / (2.0 * eps);
            worst = worst.max((num - g.d_center[i]).abs());
            let (mut up, mut dn) = (context.clone(), context.clone());
            up[i] += eps;
            dn[i] -= eps;
            let num = (f(&center, &up, &negs) - f(&center, &dn, &negs)) / (2.0 * eps);
            worst = worst.max((num - g.d_context[i]).abs());
            for k in 0..negs.len() {
                let (mut up, mut dn) = (negs.clone(), negs.clone());
                up[k][i] += eps;
                dn[k][i] -= eps;
                let num = (f(&center, &context, &up) - f(&center, &context, &dn)) / (2.0 * eps);
                worst = worst.max((num - g.d_negatives[k][i]).abs());
            }
        }
    }
    verdict(
        mean_near > mean_never && worst < 1e-6,
        format!(
            "mean cosine {mean_near:.4} over {} co-occurring pairs vs {mean_never:.4} over {} never-co-occurring; update gradient max error {worst:.1e}",
            near.len(),
            never.len()
        ),
    )
}

fn stream_of_first_occurrence(run: &Run, out: &Path) {
    let log = fs::read_to_string(run.path("log.csv")).unwrap();
    let rows: Vec<String> = log
        .lines()
        .skip(1)
        .filter(|r| r.split(',').nth(4) == Some("occ-1-0"))
        .map(|r| r.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(out, rows.join("\n") + "\n").unwrap();
}

fn detect_lines(run: &Run) -> Vec<u8> {
    let stream = run.path("stream.csv");
    stream_of_first_occurrence(run, &stream);
    let mut out = Vec::new();
    let args = DetectArgs {
        model: run.path("model.bin"),
        embeddings: run.path("emb.txt"),
        input: Some(stream),
        oov: OovArg::Skip,
        suppress: Some(60.0),
    };
    cmd_detect(&args, &mut out).unwrap();
    out
}

fn without_timing(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn c8(first: &Run, scratch: &Path) -> Verdict {
    let second = pipeline(&scratch.join("rerun-0"), 0);
    let mut diffs = Vec::new();
    for name in ["log.csv", "win.txt", "emb.txt", "model.bin", "model.bin.confusion.csv"] {
        if fs::read(first.path(name)).unwrap() != fs::read(second.path(name)).unwrap() {
            diffs.push(name.to_string());
        }
    }
    let hist = |r: &Run| without_timing(&fs::read(r.path("model.bin.history.csv")).unwrap());
    if hist(first) != hist(&second) {
        diffs.push("history".into());
    }
    let (d1, d2) = (detect_lines(first), detect_lines(&second));
    if d1 != d2 {
        diffs.push("detections".into());
    }
    let n_det = String::from_utf8_lossy(&d1).lines().count();

    let bytes = fs::read(first.path("model.bin")).unwrap();
    let (params, scenarios) = read_model(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_model(&mut again, &params, &scenarios).unwrap();
    let model_rt = again == bytes;
    let text = fs::read(first.path("emb.txt")).unwrap();
    let table = EmbeddingTable::read_text(text.as_slice()).unwrap();
    let mut again = Vec::new();
    table.write_text(&mut again).unwrap();
    let emb_rt = again == text;
    verdict(
        diffs.is_empty() && model_rt && emb_rt && n_det > 0,
        format!(
            "second seed-0 pipeline identical ({}), model round trip {model_rt}, embedding round trip {emb_rt}, detect emitted {n_det} lines",
            if diffs.is_empty() { "all artifacts".to_string() } else { format!("differs: {}", diffs.join(", ")) }
        ),
    )
}

fn c9(run: &Run) -> Verdict {
    let (windows, _) = arca_core::ingest::read_windows(fs::File::open(run.path("win.txt")).map(std::io::BufReader::new).unwrap()).unwrap();
    let table = EmbeddingTable::read_text(std::io::BufReader::new(fs::File::open(run.path("emb.txt")).unwrap())).unwrap();
    let samples = samples_from_windows(&windows, &table, 10).unwrap();
    let init = init_params(&NetConfig::default()).unwrap();
    let refs: Vec<&Sample> = samples.iter().collect();
    let l0 = loss(&init, &refs, None).unwrap();
    let ln10 = 10f64.ln();
    let loss_ok = (l0 - ln10).abs() / ln10 < 0.10;

    // balanced test split: the same split rule applied within each class
    let split = SplitConfig::default();
    let mut balanced = Vec::new();
    for c in 0..10 {
        let members: Vec<Sample> = samples.iter().filter(|s| s.class_index() == c).cloned().collect();
        balanced.extend(split_samples(&members, &SplitConfig { seed: c as u64, ..split.clone() }).unwrap().2);
    }
    let report = EvalReport::from_pairs(balanced.iter().map(|s| (s.class_index(), 0)), 10).unwrap();
    let const_ok = report.accuracy == 0.1 && report.confusion.iter().all(|r| r[1..].iter().all(|&x| x == 0));

    // on the plain seeded test split the same predictor scores n_0 / N
    let (_, _, test) = split_samples(&samples, &split).unwrap();
    let n0 = test.iter().filter(|s| s.class_index() == 0).count();
    let r = EvalReport::from_pairs(test.iter().map(|s| (s.class_index(), 0)), 10).unwrap();
    let arith_ok = r.accuracy == n0 as f64 / test.len() as f64;
    verdict(
        loss_ok && const_ok && arith_ok,
        format!(
            "initial loss {l0:.4} vs ln 10 = {ln10:.4}; constant predictor {:.4} on balanced {}-sample test split, {:.4} = {n0}/{} on the seeded split",
            report.accuracy,
            balanced.len(),
            r.accuracy,
            test.len()
        ),
    )
}

fn guarded(id: &str, title: &str, f: impl FnOnce() -> Verdict) -> bool {
    let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    println!("[{}] {id} {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    v.pass
}

fn main() {
    let scratch = tempfile::TempDir::new().unwrap();
    let mut ok = true;
    ok &= guarded("C3", "gradient exactness", c3);
    ok &= guarded("C4", "attention normalization", c4);
    ok &= guarded("C5", "delay timer oracle", c5);
    ok &= guarded("C7", "embedding separability", c7);

    let runs: Vec<Run> = SEEDS.iter().map(|&s| pipeline(&scratch.path().join(format!("seed-{s}")), s)).collect();
    ok &= guarded("C1", "pipeline reproduction", || c1(&runs));
    ok &= guarded("C2", "window arithmetic", || c2(&runs[0]));
    ok &= guarded("C6", "online detection", || c6(&runs[0]));
    ok &= guarded("C8", "determinism and persistence", || c8(&runs[0], scratch.path()));
    ok &= guarded("C9", "baseline sanity", || c9(&runs[0]));
    if !ok {
        std::process::exit(1);
    }
}
