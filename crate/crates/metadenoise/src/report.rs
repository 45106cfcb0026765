//! Report files: per-seed CSV, t-tests, stream log and a readable table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use metadenoise_core::evaluation::{format_db, EvalReport, KShotRow, Method, MetricResult, EXACT};
use metadenoise_core::training::TrainLog;

use crate::{Error, Result};

pub const REPORT_HEADER: &str = "method,n_tasks,k,seed,metric_mean_db,metric_sd_db,n_test";

/// Shortest round-trip decimal, or `exact` for the zero-residual sentinel.
pub fn real(v: f64) -> String {
    if v == EXACT {
        "exact".into()
    } else {
        v.to_string()
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    if s == "exact" {
        Some(EXACT)
    } else {
        s.parse().ok()
    }
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = format!("{}\n", REPORT_HEADER);
    for r in &report.rows {
        let run = &r.run;
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.method, run.n_tasks, run.k, run.seed, real(run.result.mean), real(run.result.sd), run.result.count);
    }
    out
}

/// One parsed data row of `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: Method,
    pub n_tasks: usize,
    pub k: usize,
    pub seed: u64,
    pub mean_db: f64,
    pub sd_db: f64,
    pub n_test: usize,
}

pub fn parse_report_csv(text: &str) -> std::result::Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("row {}: malformed `{}`", i + 1, line);
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(CsvRow {
                method: f[0].parse().map_err(|_| bad())?,
                n_tasks: f[1].parse().map_err(|_| bad())?,
                k: f[2].parse().map_err(|_| bad())?,
                seed: f[3].parse().map_err(|_| bad())?,
                mean_db: parse_real(f[4]).ok_or_else(bad)?,
                sd_db: parse_real(f[5]).ok_or_else(bad)?,
                n_test: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn initial_csv(report: &EvalReport) -> String {
    let mut out = String::from("n_tasks,k,seed,metric_mean_db,metric_sd_db,n_test\n");
    for r in &report.initial {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.n_tasks, r.k, r.seed, real(r.result.mean), real(r.result.sd), r.result.count);
    }
    out
}

pub fn ttest_csv(report: &EvalReport) -> String {
    let mut out = String::from("n_tasks,k,method_a,method_b,t,df,p,mean_diff_db,degenerate\n");
    for t in &report.tests {
        let r = &t.result;
        let _ = writeln!(out, "{},{},{},{},{},{},{},{},{}", t.n_tasks, t.k, t.a, t.b, r.t, r.df, r.p, r.mean_diff, r.degenerate);
    }
    out
}

pub fn streams_csv(report: &EvalReport) -> String {
    let mut out = String::from("seed,split_stream,task_set_stream,init_seed,data_seed,shuffle_seed\n");
    for s in &report.streams {
        let _ = writeln!(out, "{},{:016x},{:016x},{},{},{}", s.seed, s.split.0, s.task_set.0, s.init_seed, s.data_seed, s.shuffle_seed);
    }
    out
}

fn cell(r: Option<MetricResult>) -> String {
    match r {
        Some(r) if r.mean == EXACT => "exact".into(),
        Some(r) => format!("{:.2} ± {:.2}", r.mean, r.sd),
        None => "-".into(),
    }
}

/// Initial Noise first, then one row per method and task count.
pub fn report_table(report: &EvalReport) -> String {
    let k = report.rows.first().map(|r| r.run.k).or_else(|| report.initial.first().map(|r| r.k));
    let seeds = report.streams.iter().map(|s| s.seed).collect::<std::collections::BTreeSet<_>>().len();
    let mut out = format!("{} (dB), mean ± sd over test samples", report.metric.name());
    if let Some(k) = k {
        let _ = write!(out, ", k = {}", k);
    }
    let _ = writeln!(out, ", seeds = {}\n", seeds);
    let _ = writeln!(out, "{:<16} {:>8}  {}", "", "# Tasks", report.metric.name());
    let conditions = report.conditions();
    let initial = conditions.first().and_then(|&n| report.pooled_initial(n));
    let _ = writeln!(out, "{:<16} {:>8}  {}", "Initial Noise", "-", cell(initial));
    for m in report.methods() {
        for (i, &n) in conditions.iter().enumerate() {
            let label = if i == 0 { m.title() } else { "" };
            let _ = writeln!(out, "{:<16} {:>8}  {}", label, n, cell(report.pooled(m, n)));
        }
    }
    if !report.tests.is_empty() {
        let _ = writeln!(out, "\nOne-tailed paired t-tests (alternative: first method better)");
        for t in &report.tests {
            let flag = if t.result.degenerate { " (degenerate)" } else { "" };
            let _ = writeln!(
                out,
                "  tasks {:>4}: {} vs {}: t = {:.3}, df = {}, p = {:.3e}{}",
                t.n_tasks,
                t.a.title(),
                t.b.title(),
                t.result.t,
                t.result.df,
                t.result.p,
                flag
            );
        }
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `report.csv`, `initial_noise.csv`, `ttest.csv`, `streams.csv` and
/// `report.txt`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write(dir, "report.csv", &report_csv(report))?,
        write(dir, "initial_noise.csv", &initial_csv(report))?,
        write(dir, "ttest.csv", &ttest_csv(report))?,
        write(dir, "streams.csv", &streams_csv(report))?,
        write(dir, "report.txt", &report_table(report))?,
    ])
}

pub fn kshot_csv(method: Method, conditions: &[(usize, Vec<KShotRow>)]) -> String {
    let mut out = String::from("method,n_tasks,k,metric_mean_db,metric_sd_db,n_seeds\n");
    for (n, rows) in conditions {
        for r in rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", method, n, r.k, real(r.mean), real(r.sd), r.seed_means.len());
        }
    }
    out
}

pub fn kshot_table(method: Method, metric: &str, conditions: &[(usize, Vec<KShotRow>)]) -> String {
    let mut out = format!("{} k-shot sweep, {} (dB), mean ± sd over seeds\n\n{:>8} {:>6}  {}\n", method.title(), metric, "# Tasks", "k", metric);
    for (n, rows) in conditions {
        for r in rows {
            let _ = writeln!(out, "{:>8} {:>6}  {} ± {}", n, r.k, format_db(r.mean, 2), format_db(r.sd, 2));
        }
    }
    out
}

pub fn emit_kshot(method: Method, metric: &str, conditions: &[(usize, Vec<KShotRow>)], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![write(dir, "kshot.csv", &kshot_csv(method, conditions))?, write(dir, "kshot.txt", &kshot_table(method, metric, conditions))?])
}

pub fn trainlog_csv(log: &TrainLog) -> String {
    let mut out = String::from("iteration,inner_loss,displacement,wall_seconds\n");
    for i in 0..log.len() {
        let wall = log.wall_seconds[i].map(|s| format!("{:.3}", s)).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", i, log.inner_loss[i], log.displacement[i], wall);
    }
    out
}

pub fn emit_trainlog(log: &TrainLog, dir: &Path) -> Result<PathBuf> {
    write(dir, "trainlog.csv", &trainlog_csv(log))
}

pub fn evaluation_csv(model: &MetricResult, initial: &MetricResult) -> String {
    let mut out = String::from("sample,metric_db,initial_db\n");
    for (i, (a, b)) in model.values.iter().zip(&initial.values).enumerate() {
        let _ = writeln!(out, "{},{},{}", i, real(*a), real(*b));
    }
    out
}

pub fn emit_evaluation(model: &MetricResult, initial: &MetricResult, dir: &Path) -> Result<PathBuf> {
    write(dir, "evaluate.csv", &evaluation_csv(model, initial))
}
