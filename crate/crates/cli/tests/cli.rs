use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmpl")).args(args).output().expect("run cmpl")
}

const TINY: &str = "\
data.videos_per_class = 10
data.val_videos_per_class = 2
split.labeled_fraction = 0.2
epochs = 2
trainer.snapshot_interval = 1
tau = 0.4
";

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.conf");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn only_run(out: &Path) -> std::path::PathBuf {
    let mut runs: Vec<_> = fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    runs.pop().unwrap()
}

#[test]
fn train_writes_the_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny(dir.path());
    let out = dir.path().join("out");
    let o = cmpl(&["train", "--config", &conf, "--seeds", "0,1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = only_run(&out);
    for f in ["manifest.txt", "metrics.csv", "decisions.csv", "config.txt", "snapshots.csv", "per_class.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    for ckpt in ["seed0_primary.ckpt", "seed0_auxiliary.ckpt", "seed1_primary.ckpt", "seed1_auxiliary.ckpt"] {
        assert!(run.join("checkpoints").join(ckpt).is_file(), "missing {ckpt}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,epoch,lr,loss_sup_F,loss_sup_A,loss_unsup_F,loss_unsup_A,n_confident,pl_ratio,val_acc_F,val_acc_A"
    );
    assert_eq!(lines.count(), 4);
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("complete = true"));
    assert!(manifest.contains("seeds = 0,1"));
}

#[test]
fn repeated_train_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny(dir.path());
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = cmpl(&["train", "--config", &conf, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        texts.push(fs::read(only_run(&out).join("metrics.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn sequential_flag_gives_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny(dir.path());
    let mut texts = Vec::new();
    for (name, extra) in [("par", None), ("seq", Some("--sequential"))] {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--config", &conf, "--out", out.to_str().unwrap()];
        args.extend(extra);
        assert!(cmpl(&args).status.success());
        texts.push(fs::read(only_run(&out).join("metrics.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cmpl(&["train", "--set", "no_such_key=1", "--out", out]).status.code(), Some(2));
    assert_eq!(cmpl(&["train", "--set", "tau=1.5", "--out", out]).status.code(), Some(2));
    assert_eq!(cmpl(&["train", "--set", "tau", "--out", out]).status.code(), Some(2));
    assert_eq!(cmpl(&["train", "--config", "/nonexistent.conf", "--out", out]).status.code(), Some(2));
    assert_eq!(cmpl(&["sweep", "--out", out]).status.code(), Some(2));
    assert_eq!(cmpl(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny(dir.path());
    let out = dir.path().join("out");
    assert!(cmpl(&["train", "--config", &conf, "--out", out.to_str().unwrap()]).status.success());
    let run = only_run(&out);
    fs::write(run.join("checkpoints/seed0_primary.ckpt"), b"garbage").unwrap();
    let id = run.file_name().unwrap().to_str().unwrap();
    let o = cmpl(&["evaluate", "--out", out.to_str().unwrap(), "--run", id]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_evaluate_sweep_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(cmpl(&["generate", "--config", &conf, "--out", out_s]).status.success());
    assert!(out.join("data/train.bin").is_file());
    assert!(out.join("data/validation.bin.manifest").is_file());

    let o = cmpl(&["sweep", "--config", &conf, "--set", "sweep=mode:cmpl,fixmatch", "--out", out_s, "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = sweep.lines().collect();
    assert_eq!(rows.len(), 3);
    let cmpl_id = rows[1].split(',').nth(1).unwrap();
    let fix_id = rows[2].split(',').nth(1).unwrap();

    let o = cmpl(&["evaluate", "--out", out_s, "--run", cmpl_id]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("seed,net,class,accuracy"));
    assert!(text.contains("seed,net,stride,accuracy,drop"));

    let o = cmpl(&["report", "--out", out_s, "--run", cmpl_id, "--reference", fix_id]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(cmpl_id) && text.contains(fix_id));
    assert!(text.contains("# subset accuracy, seed 0"));
    assert!(text.contains("# primary gain by auxiliary accuracy"));
    assert!(out.join("report.csv").is_file());
}
