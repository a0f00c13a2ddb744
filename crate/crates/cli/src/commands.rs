use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use arca_core::detect::{replay, stream_events, DetectorModel, DetectorState, OovPolicy};
use arca_core::embed::{train_skipgram, EmbeddingTable, SkipGramConfig};
use arca_core::ingest::{
    assemble_occurrences, build_sequences, parse_alarm_log, read_windows, sequences_from_windows, window_sequences,
    write_alarm_log, write_windows, PreprocessConfig,
};
use arca_core::kvconfig::KvConfig;
use arca_core::net::{gradcheck, read_model, write_model, GradReport, NetConfig};
use arca_core::simgen::{generate_corpus, GenConfig};
use arca_core::trainpipe::{accuracy, evaluate, samples_from_windows, train_with, write_history_csv, EvalReport};
use arca_core::{split_samples, Error, Result, SplitConfig};

use crate::manifest::{load_config_text, RunManifest};
use crate::{DetectArgs, GradcheckArgs, OovArg, PreprocessArgs, SimulateArgs, TrainArgs, TrainEmbedArgs};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn config_kv(path: Option<&Path>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::parse(&load_config_text(p)?),
        None => Ok(KvConfig::default()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut kv = config_kv(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        kv.set("seed", seed);
    }
    let cfg = GenConfig::from_kv(kv)?;
    let occurrences = generate_corpus(&cfg)?;
    let mut w = create(&args.out)?;
    write_alarm_log(&mut w, &occurrences)?;
    finish(w)?;
    let rows: usize = occurrences.iter().map(|o| o.events.len()).sum();
    log::info!("wrote {} occurrences, {rows} alarms to {}", occurrences.len(), args.out.display());

    let mut m = RunManifest::new("simulate", cfg.to_kv_string(), vec![cfg.seed]);
    m.inputs.extend(args.config.clone());
    m.outputs.push(args.out.clone());
    m.wall_time_s = start.elapsed().as_secs_f64();
    m.write_next_to(&args.out)?;
    Ok(m)
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let cfg = PreprocessConfig { k: args.k, v: args.v, repeat_suppress_s: args.suppress };
    cfg.validate()?;
    let (occurrences, _) = assemble_occurrences(parse_alarm_log(open(&args.log)?)?)?;
    let seqs = build_sequences(&occurrences, &cfg)?;
    let windows = window_sequences(&seqs, cfg.v)?;
    let mut w = create(&args.out)?;
    write_windows(&mut w, &windows)?;
    finish(w)?;
    log::info!("{} sequences -> {} windows", seqs.len(), windows.len());

    let text = format!("k = {}\nv = {}\nrepeat_suppress_s = {:?}\n", cfg.k, cfg.v, cfg.repeat_suppress_s);
    let mut m = RunManifest::new("preprocess", text, Vec::new());
    m.inputs.push(args.log.clone());
    m.outputs.push(args.out.clone());
    m.wall_time_s = start.elapsed().as_secs_f64();
    m.write_next_to(&args.out)?;
    Ok(m)
}

pub fn cmd_train_embed(args: &TrainEmbedArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut kv = config_kv(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        kv.set("seed", seed);
    }
    let cfg = SkipGramConfig::from_kv(kv)?;
    let (windows, _) = read_windows(open(&args.windows)?)?;
    let seqs = sequences_from_windows(&windows)?;
    let table = train_skipgram(&seqs, &cfg)?;
    let mut w = create(&args.out)?;
    table.write_text(&mut w)?;
    finish(w)?;
    log::info!("{} tags embedded in {} dimensions", table.len(), table.dim);

    let mut m = RunManifest::new("train-embed", cfg.to_kv_string(), vec![cfg.seed]);
    m.inputs.push(args.windows.clone());
    m.inputs.extend(args.config.clone());
    m.outputs.push(args.out.clone());
    m.wall_time_s = start.elapsed().as_secs_f64();
    m.write_next_to(&args.out)?;
    Ok(m)
}

/// Final accuracies of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub test_report: EvalReport,
    pub manifest: RunManifest,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let start = Instant::now();
    let (windows, scenarios) = read_windows(open(&args.windows)?)?;
    let table = EmbeddingTable::read_text(open(&args.embeddings)?)?;

    let mut kv = config_kv(args.config.as_deref())?;
    let mut cfg = NetConfig { v: windows[0].tokens.len(), classes: scenarios.len(), ..NetConfig::default() };
    cfg.apply_kv(&mut kv)?;
    kv.finish()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    if cfg.d != table.dim {
        return Err(Error::Config(format!(
            "embedding dimension {} does not match configured d = {}",
            table.dim, cfg.d
        )));
    }
    if cfg.v != windows[0].tokens.len() {
        return Err(Error::Config(format!("windows have length {}, configured v = {}", windows[0].tokens.len(), cfg.v)));
    }
    if cfg.classes != scenarios.len() {
        return Err(Error::Config(format!("{} scenarios in the data, configured classes = {}", scenarios.len(), cfg.classes)));
    }

    let samples = samples_from_windows(&windows, &table, cfg.classes)?;
    let (tr, va, te) = split_samples(&samples, &SplitConfig { seed: cfg.seed, ..SplitConfig::default() })?;
    log::info!("split {} / {} / {}", tr.len(), va.len(), te.len());
    let mut model = arca_core::net::init_params(&cfg)?;
    let history = train_with(&mut model, &tr, &va, &cfg, |r| {
        log::debug!("epoch {} loss {:.4} train {:.3} val {:.3}", r.epoch, r.train_loss, r.train_acc, r.val_acc)
    })?;

    let mut w = create(&args.out)?;
    write_model(&mut w, &model, &scenarios)?;
    finish(w)?;
    let history_path = args.history.clone().unwrap_or_else(|| with_suffix(&args.out, ".history.csv"));
    let mut w = create(&history_path)?;
    write_history_csv(&mut w, &history)?;
    finish(w)?;
    let report = evaluate(&model, &te)?;
    log::info!("test split\n{report}");
    let confusion_path = with_suffix(&args.out, ".confusion.csv");
    let mut w = create(&confusion_path)?;
    report.write_confusion_csv(&mut w, scenarios.ids())?;
    finish(w)?;

    let mut m = RunManifest::new("train", cfg.to_kv_string(), vec![cfg.seed]);
    m.inputs.extend([args.windows.clone(), args.embeddings.clone()]);
    m.inputs.extend(args.config.clone());
    m.outputs.extend([args.out.clone(), history_path, confusion_path]);
    m.wall_time_s = start.elapsed().as_secs_f64();
    m.write_next_to(&args.out)?;
    Ok(TrainSummary {
        train_acc: accuracy(&model, &tr)?,
        val_acc: accuracy(&model, &va)?,
        test_acc: report.accuracy,
        test_report: report,
        manifest: m,
    })
}

pub fn load_detector(model: &Path, embeddings: &Path) -> Result<Arc<DetectorModel>> {
    let (params, scenarios) = read_model(open(model)?)?;
    let table = EmbeddingTable::read_text(open(embeddings)?)?;
    Ok(Arc::new(DetectorModel::new(params, table, scenarios)?))
}

/// Streams detections to `out`, one line per full window. Returns the count.
pub fn cmd_detect<W: Write>(args: &DetectArgs, mut out: W) -> Result<usize> {
    let model = load_detector(&args.model, &args.embeddings)?;
    let policy = match args.oov {
        OovArg::Skip => OovPolicy::SkipWindow,
        OovArg::Halt => OovPolicy::HaltOnOov,
    };
    let mut state = DetectorState::new(model, policy);
    if let Some(s) = args.suppress {
        state = state.with_repeat_suppression(s)?;
    }
    let input: Box<dyn BufRead> = match &args.input {
        Some(p) if p.as_os_str() != "-" => Box::new(open(p)?),
        _ => Box::new(io::stdin().lock()),
    };
    let mut n = 0;
    for ev in stream_events(input) {
        if let Some(d) = state.push_alarm(&ev?)? {
            let written = writeln!(out, "{}", d.to_line()).and_then(|_| out.flush());
            match written {
                Ok(()) => n += 1,
                // the consumer went away; nothing left to report to
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(n),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(n)
}

/// Replays a whole file and returns the detections instead of printing them.
pub fn detect_file(model: Arc<DetectorModel>, input: &Path, policy: OovPolicy) -> Result<Vec<arca_core::detect::Detection>> {
    let mut state = DetectorState::new(model, policy);
    replay(&mut state, stream_events(open(input)?))
}

pub fn cmd_gradcheck<W: Write>(args: &GradcheckArgs, mut out: W) -> Result<(bool, GradReport)> {
    let report = gradcheck(&NetConfig::tiny(), args.seed)?;
    for (layer, err) in report.by_layer() {
        let verdict = if err < args.threshold { "ok" } else { "FAIL" };
        writeln!(out, "{layer:<9} max rel error {err:.3e} {verdict}")?;
    }
    let pass = report.passes(args.threshold);
    writeln!(
        out,
        "{} (threshold {:e}, seed {})",
        if pass { "PASS" } else { "FAIL" },
        args.threshold,
        args.seed
    )?;
    Ok((pass, report))
}
