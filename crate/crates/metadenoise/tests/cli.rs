use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metadenoise"))
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg")
}

fn status(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn key(line: &str) -> &str {
    line.split('=').next().unwrap_or("").trim()
}

/// Smoke config with the keys in `extra` replaced.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let text = fs::read_to_string(smoke_config()).unwrap();
    let overridden: Vec<&str> = extra.lines().map(key).collect();
    let kept: Vec<&str> = text.lines().filter(|l| !overridden.contains(&key(l))).collect();
    let path = dir.join("c.cfg");
    fs::write(&path, format!("{}\n{}", kept.join("\n"), extra)).unwrap();
    path
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(status(&[]), 1);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["compare"]), 1);
    assert_eq!(status(&["--help"]), 0);
    let res = bin().args(["compare", "--config", "/nonexistent/c.cfg"]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("Usage"));
    let cfg = smoke_config();
    assert_eq!(status(&["compare", "--config", cfg.to_str().unwrap(), "--k", "0"]), 1);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();

    let bad = write_config(dir.path(), "colour = blue\n");
    let out = bin().args(["compare", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let missing = write_config(dir.path(), "data.clean = nowhere.csv\n");
    let res = bin().args(["compare", "--config", missing.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nowhere.csv"));

    let junk = dir.path().join("junk.mdnz");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let cfg = smoke_config();
    let out = dir.path().join("o");
    assert_eq!(status(&["evaluate", "--config", cfg.to_str().unwrap(), "--model", junk.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn compare_writes_report_and_respects_lock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let out = dir.path().join("run");
    assert_eq!(status(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    for f in ["report.csv", "initial_noise.csv", "ttest.csv", "streams.csv", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join(".metadenoise.lock").exists());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    // three methods, three seeds, one task count
    assert_eq!(csv.lines().count(), 1 + 9);
    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("Initial Noise")));

    fs::write(out.join(".metadenoise.lock"), b"").unwrap();
    let res = bin().args(["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("in use"));
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap(), csv);
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let c = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(status(&["meta-train", "--config", c, "--out", out]), 0);
    let meta = dir.path().join("meta.mdnz");
    let log = fs::read_to_string(dir.path().join("trainlog.csv")).unwrap();
    assert!(log.starts_with("iteration,inner_loss,displacement,wall_seconds"));
    assert_eq!(status(&["finetune", "--config", c, "--out", out, "--model", meta.to_str().unwrap()]), 0);
    let tuned = dir.path().join("finetuned.mdnz");
    assert_eq!(status(&["evaluate", "--config", c, "--out", out, "--model", tuned.to_str().unwrap()]), 0);
    assert!(fs::read_to_string(dir.path().join("evaluate.csv")).unwrap().starts_with("sample,metric_db,initial_db"));
    assert_eq!(status(&["transfer", "--config", c, "--out", out]), 0);
    assert!(dir.path().join("pretrained.mdnz").exists() && dir.path().join("transfer.mdnz").exists());
    assert_eq!(status(&["kshot-sweep", "--config", c, "--out", out]), 0);
    assert_eq!(fs::read_to_string(dir.path().join("kshot.csv")).unwrap().lines().count(), 1 + 3);

    // a checkpoint for a different network is refused
    let other = write_config(dir.path(), "net.hidden = 9\n");
    assert_eq!(status(&["evaluate", "--config", other.to_str().unwrap(), "--out", out, "--model", meta.to_str().unwrap()]), 2);
}

#[test]
fn synthetic_data_feeds_a_file_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = smoke_config();
    assert_eq!(status(&["synth-data", "--config", c.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), 0);
    assert!(dir.path().join("clean.csv").exists() && dir.path().join("real_clean.csv").exists());
    let cfg = write_config(dir.path(), "data.clean = clean.csv\nmethods = meta\nseeds = 1\n");
    // synthesis keys have no effect once the data comes from a file
    let text = fs::read_to_string(&cfg).unwrap().lines().filter(|l| !l.starts_with("synth.")).collect::<Vec<_>>().join("\n");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("r");
    assert_eq!(status(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 2);
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "inner.optimizer = sgd\ninner.lr = 1e200\n");
    let out = dir.path().join("o");
    let res = bin().args(["meta-train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}
