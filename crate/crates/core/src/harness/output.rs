use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::{RunResult, SweepRow};
use crate::error::Result;
use crate::io::fmt_f64;

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
}

fn header(prefix: &str, d: usize) -> String {
    (0..d).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",")
}

pub fn samples_csv(result: &RunResult) -> String {
    let d = result.config.dim();
    let mut s = format!("chain,{}\n", header("x", d));
    for (chain, rec) in result.successes() {
        let _ = writeln!(s, "{chain},{}", join(rec.sample.iter().copied()));
    }
    s
}

pub fn trajectory_csv(result: &RunResult, dump_states: bool) -> String {
    let d = result.config.dim();
    let mut s = String::from("chain,step,sigma,residual_x0hat,residual_x0y");
    if dump_states {
        let _ = write!(s, ",{},{},{}", header("xt", d), header("x0hat", d), header("x0y", d));
    }
    s.push('\n');
    for (chain, rec) in result.successes() {
        for (i, st) in rec.trajectory.steps.iter().enumerate() {
            let _ = write!(
                s,
                "{chain},{i},{},{},{}",
                fmt_f64(st.sigma),
                fmt_f64(st.residual_x0hat),
                fmt_f64(st.residual_x0y)
            );
            if dump_states {
                let _ = write!(
                    s,
                    ",{},{},{}",
                    join(st.x_t.iter().copied()),
                    join(st.x0_hat.iter().copied()),
                    join(st.x0_y.iter().copied())
                );
            }
            s.push('\n');
        }
    }
    s
}

pub fn metrics_csv(results: &[&RunResult]) -> String {
    let mut s = String::from("run_id,metric,step,value\n");
    for r in results {
        for m in &r.metrics {
            let step = m.step.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{step},{}", r.run_id, m.metric, fmt_f64(m.value));
        }
    }
    s
}

fn failures_csv(result: &RunResult) -> String {
    let mut s = String::from("chain,error\n");
    for c in &result.chains {
        if let Err(e) = &c.record {
            let _ = writeln!(s, "{},\"{}\"", c.chain, e.replace('"', "'"));
        }
    }
    s
}

/// Writes `samples.csv`, `trajectory.csv`, `metrics.csv`, `config.snapshot`,
/// the measurement (and ground truth, if any) as plain-text rows, and
/// `failures.csv` when some chain failed.
pub fn write_run(result: &RunResult, dir: &Path, dump_states: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("samples.csv"), samples_csv(result))?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(result, dump_states))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&[result]))?;
    fs::write(dir.join("config.snapshot"), result.snapshot())?;
    fs::write(
        dir.join("measurement.txt"),
        format!("{}\n", join(result.measurement.y.iter().copied()).replace(',', " ")),
    )?;
    if let Some(gt) = &result.ground_truth {
        fs::write(
            dir.join("ground_truth.txt"),
            format!("{}\n", join(gt.iter().copied()).replace(',', " ")),
        )?;
    }
    if result.n_failed() > 0 {
        fs::write(dir.join("failures.csv"), failures_csv(result))?;
    }
    Ok(())
}

/// Aggregated sweep table: `axis_value,metric,value` over run-level metrics.
pub fn sweep_csv(axis: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{axis},metric,value\n");
    for row in rows {
        for m in row.result.metrics.iter().filter(|m| m.step.is_none()) {
            let _ = writeln!(s, "{},{},{}", fmt_f64(row.value), m.metric, fmt_f64(m.value));
        }
    }
    s
}

/// Writes each sweep run to `dir/<index>/` plus `sweep.csv` and a combined
/// `metrics.csv`.
pub fn write_sweep(axis: &str, rows: &[SweepRow], dir: &Path, dump_states: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, row) in rows.iter().enumerate() {
        write_run(&row.result, &dir.join(format!("{i:03}")), dump_states)?;
    }
    fs::write(dir.join("sweep.csv"), sweep_csv(axis, rows))?;
    let all: Vec<&RunResult> = rows.iter().map(|r| &r.result).collect();
    fs::write(dir.join("metrics.csv"), metrics_csv(&all))?;
    Ok(())
}
