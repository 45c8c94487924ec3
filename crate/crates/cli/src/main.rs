use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmpl_core::config::Config;
use cmpl_core::metrics::{bins_to_csv, curve_to_csv, gain_vs_aux_bins, subset_accuracy_curve};
use cmpl_core::runner::{self, mean_range, RunManifest};
use cmpl_core::synthdata::{generate_dataset_with, generate_heldout, write_dataset};
use cmpl_core::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "cmpl", version, about = "Cross-model pseudo-labeling experiments on synthetic videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and held-out set.
    Generate(Common),
    /// Train every configured seed and write a run directory.
    Train(Common),
    /// Re-evaluate the checkpoints of a finished run.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Run id under <out>/runs (default: the only run there).
        #[arg(long)]
        run: Option<String>,
    },
    /// One run per value of the `sweep = key:v1,v2,...` axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Runs trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize the runs under <out>.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run to analyse against `--reference`.
        #[arg(long, requires = "reference")]
        run: Option<String>,
        /// Paired single-network run (same data, same seeds).
        #[arg(long)]
        reference: Option<String>,
        /// Bin width for gain against auxiliary accuracy.
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output root.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run batch loops on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        config.apply_overrides(&self.set)?;
        if let Some(seeds) = &self.seeds {
            config.set_seeds(seeds)?;
        }
        Ok(config)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

fn fmt_range(values: &[f64]) -> String {
    let (m, lo, hi) = mean_range(values);
    format!("{m:.4} [{lo:.4}, {hi:.4}]")
}

fn print_manifest(m: &RunManifest, out: &Path) {
    println!("run {} ({} / {}) -> {}", m.run_id, m.mode, m.scheme, runner::run_dir(out, &m.run_id).display());
    println!("  val_acc_F mean [min, max]: {}", fmt_range(&m.val_acc_f));
    if m.val_acc_a.iter().any(|v| !v.is_nan()) {
        println!("  val_acc_A mean [min, max]: {}", fmt_range(&m.val_acc_a));
    }
}

fn generate(c: &Common) -> Result<()> {
    let config = c.load()?;
    let spec = config.dataset_spec()?;
    let exec = c.exec();
    let videos = generate_dataset_with(&spec, exec)?;
    let heldout = generate_heldout(&spec, config.val_videos_per_class()?, exec)?;
    let dir = c.out.join("data");
    fs::create_dir_all(&dir)?;
    write_dataset(&dir.join("train.bin"), &spec, &videos)?;
    write_dataset(&dir.join("validation.bin"), &spec, &heldout)?;
    println!("wrote {} training and {} held-out videos to {}", videos.len(), heldout.len(), dir.display());
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let config = c.load()?;
    let manifest = runner::run(&config, &c.out, c.exec(), &mut |seed, r| {
        eprintln!(
            "seed {seed} epoch {:>3} lr {:.5} sup {:.4}/{:.4} unsup {:.4}/{:.4} pl {:.3} val {:.3}/{:.3}",
            r.epoch, r.lr, r.loss_sup_f, r.loss_sup_a, r.loss_unsup_f, r.loss_unsup_a, r.pl_ratio, r.val_acc_f, r.val_acc_a
        );
    })?;
    print_manifest(&manifest, &c.out);
    Ok(())
}

fn pick_run(out: &Path, run: &Option<String>) -> Result<String> {
    if let Some(r) = run {
        return Ok(r.clone());
    }
    match runner::list_runs(out)?.as_slice() {
        [only] => Ok(only.run_id.clone()),
        [] => Err(Error::Usage(format!("no runs under {}", out.display()))),
        _ => Err(Error::Usage("several runs present; pass --run".into())),
    }
}

fn evaluate(c: &Common, run: &Option<String>) -> Result<()> {
    let id = pick_run(&c.out, run)?;
    let evals = runner::evaluate_run(&c.out, &id, c.exec())?;
    let csv = runner::evaluation_to_csv(&evals);
    fs::write(runner::run_dir(&c.out, &id).join("evaluation.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn sweep(c: &Common, jobs: usize) -> Result<()> {
    let config = c.load()?;
    let manifests = runner::sweep(&config, &c.out, c.exec(), jobs)?;
    for m in &manifests {
        print_manifest(m, &c.out);
    }
    println!("wrote {}", c.out.join("sweep.csv").display());
    Ok(())
}

fn report(c: &Common, run: &Option<String>, reference: &Option<String>, bin_width: f64) -> Result<()> {
    let manifests = runner::list_runs(&c.out)?;
    let mut text = runner::summary_csv(&manifests);
    if let (Some(run), Some(reference)) = (run, reference) {
        let find = |id: &str| {
            manifests
                .iter()
                .find(|m| m.run_id == id)
                .ok_or_else(|| Error::Usage(format!("no run {id} under {}", c.out.display())))
        };
        let (m, r) = (find(run)?, find(reference)?);
        for &seed in &m.seeds {
            if !r.seeds.contains(&seed) {
                continue;
            }
            let log = runner::read_snapshots(&c.out, run, seed)?;
            let ref_log = runner::read_snapshots(&c.out, reference, seed)?;
            let curve = subset_accuracy_curve(&log, Some(&ref_log))?;
            let _ = write!(text, "\n# subset accuracy, seed {seed}\n{}", curve_to_csv(&curve));
        }
        let primary = runner::read_class_accuracy(&c.out, run, "primary")?;
        let baseline = runner::read_class_accuracy(&c.out, reference, "primary")?;
        let aux = runner::read_class_accuracy(&c.out, run, "auxiliary")?;
        let gain: Vec<f64> = primary.iter().zip(&baseline).map(|(p, b)| p - b).collect();
        let bins = gain_vs_aux_bins(&gain, &aux, bin_width)?;
        let _ = write!(text, "\n# primary gain by auxiliary accuracy\n{}", bins_to_csv(&bins));
    }
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("report.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Train(c) => train(c),
        Command::Evaluate { common, run } => evaluate(common, run),
        Command::Sweep { common, jobs } => sweep(common, *jobs),
        Command::Report { common, run, reference, bin_width } => report(common, run, reference, *bin_width),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
