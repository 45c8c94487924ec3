//! Experiment orchestration: data preparation, multi-seed runs, sweeps and
//! the on-disk run layout.
//!
//! A run directory `runs/<run_id>/` holds `manifest.txt`, `config.txt`,
//! `metrics.csv`, `decisions.csv`, `snapshots.csv`, `per_class.csv` and
//! `checkpoints/`. The run id is a prefix of the configuration hash, so
//! re-running a configuration overwrites its own directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{per_class_gap, stride_degradation, ClassAccuracyTable, ClassGap, StrideDrop};
use crate::netcore::{load_checkpoint, save_checkpoint};
use crate::par::Exec;
use crate::pseudolabel::{LabelSource, PseudoLabelDecision};
use crate::synthdata::{
    generate_dataset_with, generate_heldout, split_labeled, ClassKind, DatasetSpec, SplitResult, Video,
};
use crate::trainer::{
    evaluate_with, train_with, DecisionRecord, EpochRecord, MetricsLog, Network, SubsetSnapshot, TrainData,
    TrainMode, TrainOutcome,
};

pub const METRICS_HEADER: &str =
    "seed,epoch,lr,loss_sup_F,loss_sup_A,loss_unsup_F,loss_unsup_A,n_confident,pl_ratio,val_acc_F,val_acc_A";

/// Training pool and held-out validation videos for one configuration.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub spec: DatasetSpec,
    pub videos: Vec<Video>,
    pub validation: Vec<Video>,
}

pub fn prepare_data(config: &Config, exec: Exec) -> Result<PreparedData> {
    let spec = config.dataset_spec()?;
    let videos = generate_dataset_with(&spec, exec)?;
    let validation = generate_heldout(&spec, config.val_videos_per_class()?, exec)?;
    Ok(PreparedData { spec, videos, validation })
}

/// Labeled split for one training seed: drawn with `split.seed`, or with the
/// training seed itself when that is `run`.
pub fn split_for(config: &Config, data: &PreparedData, seed: u64) -> Result<SplitResult> {
    let split_seed = config.split_seed()?.unwrap_or(seed);
    split_labeled(&data.videos, config.labeled_fraction()?, config.split_scheme()?, split_seed)
}

/// Final held-out accuracy of both networks for one seed.
#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub seed: u64,
    pub primary: ClassAccuracyTable,
    /// `None` when the auxiliary network was not trained.
    pub auxiliary: Option<ClassAccuracyTable>,
}

impl SeedSummary {
    pub fn val_acc_f(&self) -> f64 {
        self.primary.overall()
    }

    pub fn val_acc_a(&self) -> f64 {
        self.auxiliary.as_ref().map_or(f64::NAN, ClassAccuracyTable::overall)
    }
}

pub struct SeedResult {
    pub outcome: TrainOutcome,
    pub summary: SeedSummary,
}

/// Per-class table of `net` on `videos`.
pub fn class_table(
    net: &Network,
    videos: &[Video],
    num_clips: usize,
    stride: usize,
    num_classes: usize,
    exec: Exec,
) -> Result<ClassAccuracyTable> {
    let preds = evaluate_with(net, videos, num_clips, stride, exec)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.argmax()).collect();
    let truth: Vec<usize> = videos.iter().map(|v| v.class_id).collect();
    ClassAccuracyTable::from_predictions(&predicted, &truth, num_classes)
}

/// Trains one seed and summarizes it on the held-out set.
pub fn run_seed(
    config: &Config,
    data: &PreparedData,
    seed: u64,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<SeedResult> {
    let exp = config.experiment(seed)?;
    let split = split_for(config, data, seed)?;
    let train_data = TrainData { videos: &data.videos, split: &split, validation: &data.validation };
    let outcome = train_with(&exp, &train_data, exec, on_epoch)?;
    let k = data.spec.num_classes;
    let t = &exp.temporal;
    let primary = class_table(&outcome.pair.primary, &data.validation, exp.num_clips, t.primary_stride, k, exec)?;
    let auxiliary = if exp.mode.trains_auxiliary() {
        Some(class_table(&outcome.pair.auxiliary, &data.validation, exp.num_clips, t.aux_stride, k, exec)?)
    } else {
        None
    };
    Ok(SeedResult { outcome, summary: SeedSummary { seed, primary, auxiliary } })
}

/// Every seed of `config`, in order, without touching the disk.
pub fn run_in_memory(config: &Config, data: &PreparedData, exec: Exec) -> Result<Vec<SeedResult>> {
    config.seeds()?.into_iter().map(|s| run_seed(config, data, s, exec, &mut |_| {})).collect()
}

/// Mean, minimum and maximum, ignoring NaN entries. All NaN when nothing is left.
pub fn mean_range(values: &[f64]) -> (f64, f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Contents of `manifest.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub mode: String,
    pub scheme: String,
    pub seeds: Vec<u64>,
    pub duration_secs: f64,
    pub complete: bool,
    pub val_acc_f: Vec<f64>,
    pub val_acc_a: Vec<f64>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let (fm, fl, fh) = mean_range(&self.val_acc_f);
        let (am, al, ah) = mean_range(&self.val_acc_a);
        let mut out = String::new();
        let _ = writeln!(out, "run_id = {}", self.run_id);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "scheme = {}", self.scheme);
        let _ = writeln!(out, "seeds = {}", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        let _ = writeln!(out, "duration_secs = {:.3}", self.duration_secs);
        let _ = writeln!(out, "complete = {}", self.complete);
        let _ = writeln!(out, "val_acc_F = {}", join(&self.val_acc_f));
        let _ = writeln!(out, "val_acc_A = {}", join(&self.val_acc_a));
        let _ = writeln!(out, "val_acc_F_mean_min_max = {fm},{fl},{fh}");
        let _ = writeln!(out, "val_acc_A_mean_min_max = {am},{al},{ah}");
        let _ = writeln!(out, "files = {}", self.files.join(","));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest {
            run_id: String::new(),
            config_hash: String::new(),
            mode: String::new(),
            scheme: String::new(),
            seeds: Vec::new(),
            duration_secs: 0.0,
            complete: false,
            val_acc_f: Vec::new(),
            val_acc_a: Vec::new(),
            files: Vec::new(),
        };
        let bad = |line: &str| Error::Format(format!("bad manifest line: {line}"));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            let v = v.trim();
            let floats = |v: &str| -> Result<Vec<f64>> {
                v.split(',').filter(|s| !s.is_empty()).map(|s| s.parse().map_err(|_| bad(line))).collect()
            };
            match k.trim() {
                "run_id" => m.run_id = v.into(),
                "config_hash" => m.config_hash = v.into(),
                "mode" => m.mode = v.into(),
                "scheme" => m.scheme = v.into(),
                "seeds" => {
                    m.seeds = v.split(',').filter(|s| !s.is_empty()).map(|s| s.parse().map_err(|_| bad(line))).collect::<Result<_>>()?
                }
                "duration_secs" => m.duration_secs = v.parse().map_err(|_| bad(line))?,
                "complete" => m.complete = v == "true",
                "val_acc_F" => m.val_acc_f = floats(v)?,
                "val_acc_A" => m.val_acc_a = floats(v)?,
                "files" => m.files = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                _ => {}
            }
        }
        if m.run_id.is_empty() {
            return Err(Error::Format("manifest has no run_id".into()));
        }
        Ok(m)
    }
}

pub fn run_id(config: &Config) -> String {
    config.hash()[..12].to_string()
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(run_id)
}

fn checkpoint_path(dir: &Path, seed: u64, net: &str) -> PathBuf {
    dir.join("checkpoints").join(format!("seed{seed}_{net}.ckpt"))
}

pub fn metrics_row(seed: u64, r: &EpochRecord) -> String {
    format!(
        "{seed},{},{},{},{},{},{},{},{},{},{}",
        r.epoch, r.lr, r.loss_sup_f, r.loss_sup_a, r.loss_unsup_f, r.loss_unsup_a, r.n_confident, r.pl_ratio, r.val_acc_f, r.val_acc_a
    )
}

fn source_name(s: LabelSource) -> &'static str {
    match s {
        LabelSource::Primary => "primary",
        LabelSource::Auxiliary => "auxiliary",
        LabelSource::Fused => "fused",
    }
}

fn decision_cols(d: &PseudoLabelDecision) -> String {
    format!("{},{},{},{}", d.confident, d.target_class, source_name(d.source), d.confidence)
}

fn write_decisions(w: &mut impl Write, seed: u64, records: &[DecisionRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{seed},{},{},{},{}", r.video_id, r.truth, decision_cols(&r.for_f), decision_cols(&r.for_a))?;
    }
    Ok(())
}

fn write_snapshots(w: &mut impl Write, seed: u64, snaps: &[SubsetSnapshot]) -> Result<()> {
    for s in snaps {
        for i in 0..s.truth.len() {
            let (aux, conf) = match (s.aux_pred.get(i), s.aux_confident.get(i)) {
                (Some(a), Some(c)) => (a.to_string(), c.to_string()),
                _ => (String::new(), String::new()),
            };
            writeln!(w, "{seed},{},{i},{},{},{aux},{conf}", s.epoch, s.truth[i], s.primary_pred[i])?;
        }
    }
    Ok(())
}

fn write_class_table(w: &mut impl Write, seed: u64, net: &str, table: &ClassAccuracyTable, kinds: &[ClassKind]) -> Result<()> {
    let acc = table.accuracy();
    for c in 0..table.num_classes() {
        let kind = kinds.get(c).map_or('?', |k| k.code());
        writeln!(w, "{seed},{net},{c},{kind},{},{},{}", table.correct[c], table.totals[c], acc[c])?;
    }
    Ok(())
}

/// Writes a run directory for every seed of `config`. The manifest is
/// written first with `complete = false` and rewritten at the end, so an
/// interrupted run is recognizable.
pub fn run(config: &Config, out: &Path, exec: Exec, progress: &mut dyn FnMut(u64, &EpochRecord)) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let seeds = config.seeds()?;
    let exp = config.experiment(seeds[0])?;
    let id = run_id(config);
    let dir = run_dir(out, &id);
    fs::create_dir_all(dir.join("checkpoints"))?;
    let files: Vec<String> = ["config.txt", "metrics.csv", "decisions.csv", "snapshots.csv", "per_class.csv", "checkpoints"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut manifest = RunManifest {
        run_id: id,
        config_hash: config.hash(),
        mode: exp.mode.as_str().into(),
        scheme: exp.scheme.as_str().into(),
        seeds: seeds.clone(),
        duration_secs: 0.0,
        complete: false,
        val_acc_f: Vec::new(),
        val_acc_a: Vec::new(),
        files,
    };
    fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    fs::write(dir.join("config.txt"), config.canonical_text())?;

    let data = prepare_data(config, exec)?;
    let kinds = data.spec.kinds();
    let mut metrics = BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
    writeln!(metrics, "{METRICS_HEADER}")?;
    let mut decisions = BufWriter::new(fs::File::create(dir.join("decisions.csv"))?);
    writeln!(
        decisions,
        "seed,video_id,truth,F_confident,F_target,F_source,F_confidence,A_confident,A_target,A_source,A_confidence"
    )?;
    let mut snapshots = BufWriter::new(fs::File::create(dir.join("snapshots.csv"))?);
    writeln!(snapshots, "seed,epoch,index,truth,primary_pred,aux_pred,aux_confident")?;
    let mut per_class = BufWriter::new(fs::File::create(dir.join("per_class.csv"))?);
    writeln!(per_class, "seed,net,class,kind,correct,total,accuracy")?;

    for &seed in &seeds {
        let mut io_err = None;
        let result = run_seed(config, &data, seed, exec, &mut |r| {
            if let Err(e) = writeln!(metrics, "{}", metrics_row(seed, r)).and_then(|_| metrics.flush()) {
                io_err.get_or_insert(e);
            }
            progress(seed, r);
        })?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
        write_decisions(&mut decisions, seed, &result.outcome.log.final_decisions)?;
        write_snapshots(&mut snapshots, seed, &result.outcome.log.snapshots)?;
        write_class_table(&mut per_class, seed, "primary", &result.summary.primary, &kinds)?;
        save_checkpoint(&checkpoint_path(&dir, seed, "primary"), &result.outcome.pair.primary.params)?;
        if let Some(aux) = &result.summary.auxiliary {
            write_class_table(&mut per_class, seed, "auxiliary", aux, &kinds)?;
            save_checkpoint(&checkpoint_path(&dir, seed, "auxiliary"), &result.outcome.pair.auxiliary.params)?;
        }
        manifest.val_acc_f.push(result.summary.val_acc_f());
        manifest.val_acc_a.push(result.summary.val_acc_a());
    }
    for w in [&mut decisions, &mut snapshots, &mut per_class] {
        w.flush()?;
    }
    manifest.duration_secs = started.elapsed().as_secs_f64();
    manifest.complete = true;
    fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    Ok(manifest)
}

/// One run per value of the configured sweep axis. Up to `jobs` runs go at
/// once; runs share nothing but the output root. Returns the manifests in
/// axis order and writes `sweep.csv` under `out`.
pub fn sweep(config: &Config, out: &Path, exec: Exec, jobs: usize) -> Result<Vec<RunManifest>> {
    let axis = config.sweep().ok_or_else(|| Error::config("no sweep axis configured (sweep = key:v1,v2,...)"))?;
    if axis.values.is_empty() {
        return Err(Error::config(format!("sweep over {} has no values", axis.key)));
    }
    let configs = axis
        .values
        .iter()
        .map(|v| {
            let mut c = config.clone();
            c.clear_sweep();
            c.set(&axis.key, v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs = jobs.max(1);
    let mut manifests = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(jobs) {
        let results: Vec<Result<RunManifest>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|c| s.spawn(move || run(c, out, exec, &mut |_, _| {}))).collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Numeric("sweep worker panicked".into())))).collect()
        });
        for r in results {
            manifests.push(r?);
        }
    }
    let mut csv = format!("{},run_id,val_acc_F_mean,val_acc_F_min,val_acc_F_max,val_acc_A_mean\n", axis.key);
    for (v, m) in axis.values.iter().zip(&manifests) {
        let (fm, fl, fh) = mean_range(&m.val_acc_f);
        let (am, _, _) = mean_range(&m.val_acc_a);
        let _ = writeln!(csv, "{v},{},{fm},{fl},{fh},{am}", m.run_id);
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("sweep.csv"), csv)?;
    Ok(manifests)
}

/// Reloads a finished run's configuration.
pub fn load_run_config(out: &Path, run_id: &str) -> Result<Config> {
    let path = run_dir(out, run_id).join("config.txt");
    if !path.exists() {
        return Err(Error::Usage(format!("no run {run_id} under {}", out.display())));
    }
    Config::load(&path)
}

/// Held-out diagnostics for one seed of a finished run.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub seed: u64,
    pub primary: ClassAccuracyTable,
    pub auxiliary: Option<ClassAccuracyTable>,
    /// Auxiliary minus primary accuracy per class; empty without an auxiliary.
    pub gaps: Vec<ClassGap>,
    /// Stride degradation on temporal classes.
    pub primary_strides: Vec<StrideDrop>,
    pub aux_strides: Vec<StrideDrop>,
}

/// Reloads the checkpoints of a run and evaluates them on a freshly
/// generated held-out set.
pub fn evaluate_run(out: &Path, run_id: &str, exec: Exec) -> Result<Vec<Evaluation>> {
    let config = load_run_config(out, run_id)?;
    let dir = run_dir(out, run_id);
    let spec = config.dataset_spec()?;
    let validation = generate_heldout(&spec, config.val_videos_per_class()?, exec)?;
    let strides = config.eval_strides()?;
    let mut evals = Vec::new();
    for seed in config.seeds()? {
        let exp = config.experiment(seed)?;
        let k = spec.num_classes;
        let load = |net: &str, cfg| -> Result<Network> {
            let params = load_checkpoint(&checkpoint_path(&dir, seed, net))?;
            Ok(Network { config: cfg, params })
        };
        let primary = load("primary", exp.primary_config(k, spec.spatial_dim))?;
        let t = &exp.temporal;
        let table_f = class_table(&primary, &validation, exp.num_clips, t.primary_stride, k, exec)?;
        let strides_f = temporal_stride_drop(&primary, &validation, &strides, exp.num_clips, t.primary_stride, exec)?;
        let (table_a, gaps, strides_a) = if exp.mode == TrainMode::FixMatch {
            (None, Vec::new(), Vec::new())
        } else {
            let aux = load("auxiliary", exp.auxiliary_config(k, spec.spatial_dim))?;
            let table = class_table(&aux, &validation, exp.num_clips, t.aux_stride, k, exec)?;
            let gaps = per_class_gap(&table, &table_f)?;
            let sd = temporal_stride_drop(&aux, &validation, &strides, exp.num_clips, t.aux_stride, exec)?;
            (Some(table), gaps, sd)
        };
        evals.push(Evaluation {
            seed,
            primary: table_f,
            auxiliary: table_a,
            gaps,
            primary_strides: strides_f,
            aux_strides: strides_a,
        });
    }
    Ok(evals)
}

/// Stride degradation restricted to temporal-class videos. Strides that do
/// not divide the clip length are skipped.
pub fn temporal_stride_drop(
    net: &Network,
    videos: &[Video],
    strides: &[usize],
    num_clips: usize,
    clip_stride: usize,
    exec: Exec,
) -> Result<Vec<StrideDrop>> {
    let temporal: Vec<Video> = videos.iter().filter(|v| v.kind == ClassKind::Temporal).cloned().collect();
    let usable: Vec<usize> =
        strides.iter().copied().filter(|&s| s > 0 && net.config.input_frames.is_multiple_of(s)).collect();
    stride_degradation(net, &temporal, &usable, num_clips, clip_stride, exec)
}

pub fn evaluation_to_csv(evals: &[Evaluation]) -> String {
    let mut out = String::from("seed,net,class,accuracy\n");
    for e in evals {
        for (net, table) in [("primary", Some(&e.primary)), ("auxiliary", e.auxiliary.as_ref())] {
            if let Some(t) = table {
                for (c, a) in t.accuracy().iter().enumerate() {
                    let _ = writeln!(out, "{},{net},{c},{a}", e.seed);
                }
            }
        }
    }
    out.push_str("\nseed,class,acc_small,acc_large,gap\n");
    for e in evals {
        for g in &e.gaps {
            let _ = writeln!(out, "{},{},{},{},{}", e.seed, g.class, g.acc_small, g.acc_large, g.gap);
        }
    }
    out.push_str("\nseed,net,stride,accuracy,drop\n");
    for e in evals {
        for (net, rows) in [("primary", &e.primary_strides), ("auxiliary", &e.aux_strides)] {
            for r in rows {
                let _ = writeln!(out, "{},{net},{},{},{}", e.seed, r.stride, r.accuracy, r.drop);
            }
        }
    }
    out
}

/// All run manifests under `out/runs`, sorted by run id.
pub fn list_runs(out: &Path) -> Result<Vec<RunManifest>> {
    let root = out.join("runs");
    if !root.is_dir() {
        return Err(Error::Usage(format!("no runs under {}", out.display())));
    }
    let mut manifests = Vec::new();
    for entry in fs::read_dir(&root)? {
        let path = entry?.path().join("manifest.txt");
        if path.is_file() {
            manifests.push(RunManifest::parse(&fs::read_to_string(&path)?)?);
        }
    }
    manifests.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(manifests)
}

pub fn summary_csv(manifests: &[RunManifest]) -> String {
    let mut out = String::from("run_id,mode,scheme,seeds,complete,val_acc_F_mean,val_acc_F_min,val_acc_F_max,val_acc_A_mean,val_acc_A_min,val_acc_A_max\n");
    for m in manifests {
        let (fm, fl, fh) = mean_range(&m.val_acc_f);
        let (am, al, ah) = mean_range(&m.val_acc_a);
        let seeds = m.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{},{},{},{seeds},{},{fm},{fl},{fh},{am},{al},{ah}", m.run_id, m.mode, m.scheme, m.complete);
    }
    out
}

/// Reads the subset snapshots of one seed back from `snapshots.csv`.
pub fn read_snapshots(out: &Path, run_id: &str, seed: u64) -> Result<MetricsLog> {
    let text = fs::read_to_string(run_dir(out, run_id).join("snapshots.csv"))?;
    let mut log = MetricsLog::default();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("bad snapshot line: {line}"));
        if f.len() != 7 {
            return Err(bad());
        }
        if f[0].parse::<u64>().map_err(|_| bad())? != seed {
            continue;
        }
        let epoch: usize = f[1].parse().map_err(|_| bad())?;
        if log.snapshots.last().map(|s| s.epoch) != Some(epoch) {
            log.snapshots.push(SubsetSnapshot { epoch, ..SubsetSnapshot::default() });
        }
        let snap = log.snapshots.last_mut().expect("pushed above");
        snap.truth.push(f[3].parse().map_err(|_| bad())?);
        snap.primary_pred.push(f[4].parse().map_err(|_| bad())?);
        if !f[5].is_empty() {
            snap.aux_pred.push(f[5].parse().map_err(|_| bad())?);
            snap.aux_confident.push(f[6] == "true");
        }
    }
    Ok(log)
}

/// Per-class primary accuracy averaged over the seeds in `per_class.csv`.
pub fn read_class_accuracy(out: &Path, run_id: &str, net: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(run_dir(out, run_id).join("per_class.csv"))?;
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("bad per-class line: {line}"));
        if f.len() != 7 {
            return Err(bad());
        }
        if f[1] != net {
            continue;
        }
        let c: usize = f[2].parse().map_err(|_| bad())?;
        let a: f64 = f[6].parse().map_err(|_| bad())?;
        if sums.len() <= c {
            sums.resize(c + 1, (0.0, 0));
        }
        sums[c].0 += a;
        sums[c].1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::Report(format!("run {run_id} has no per-class rows for {net}")));
    }
    Ok(sums.into_iter().map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect())
}
