//! CSV schemas written by the harness.
//!
//! Floats are printed in Rust's shortest round-trip form, so equal values
//! always produce equal bytes.

use std::io::Write;
use std::path::Path;

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::optim::RunRecord;

use super::stats::SummaryRow;

pub const TRACE_HEADER: &str = "trial,iter,rel_error";
pub const TRACE_HEADER_BETA: &str = "trial,iter,rel_error,beta";
pub const SUMMARY_HEADER: &str = "problem,algo,B,eps,mean_iters,std_iters,mean_wall_ms,std_wall_ms";
pub const BOUNDS_HEADER: &str = "field,value";
pub const RUNS_HEADER: &str =
    "instance,trial,seed,status,iters_to_converge,iterations,final_rel_error,switch_iter,u_lower,u_upper,eta,wall_ms";
pub const LEVELS_HEADER: &str = "level,successes,mean_first_hit,max_first_hit";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "N".to_string())
}

/// One row of the per-trial overview.
#[derive(Debug, Clone)]
pub struct RunRow<'a> {
    pub instance: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<&'a RunRecord, String>,
}

/// Writes `trial,iter,rel_error[,beta]`; the β column appears when any record carries one.
pub fn write_trace_csv<W: Write>(out: W, records: &[(usize, &RunRecord)]) -> csv::Result<()> {
    let with_beta = records.iter().any(|(_, r)| !r.beta_trace.is_empty());
    let mut w = csv::Writer::from_writer(out);
    if with_beta {
        w.write_record(TRACE_HEADER_BETA.split(','))?;
    } else {
        w.write_record(TRACE_HEADER.split(','))?;
    }
    for (trial, rec) in records {
        let last = rec.trace.len() - 1;
        for (i, e) in rec.trace.iter().enumerate() {
            // a converged run's final entry may fall between strides
            let iter = if i == last && rec.iters_to_converge.is_some() && rec.iterations > 0 {
                rec.iterations
            } else {
                i * rec.stride
            };
            let mut row = vec![trial.to_string(), iter.to_string(), e.to_string()];
            if with_beta {
                let beta = if iter == 0 { None } else { rec.beta_trace.get(iter - 1) };
                row.push(beta.map(|b| b.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs_csv<W: Write>(out: W, rows: &[RunRow<'_>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER.split(','))?;
    for row in rows {
        let head = [row.instance.to_string(), row.trial.to_string(), row.seed.to_string()];
        let rest: Vec<String> = match &row.outcome {
            Ok(r) => vec![
                if r.iters_to_converge.is_some() {
                    "converged"
                } else {
                    "max_iters"
                }
                .to_string(),
                opt(r.iters_to_converge),
                r.iterations.to_string(),
                r.final_rel_error().to_string(),
                opt(r.switch_iter),
                r.hyper.u_lower.to_string(),
                r.hyper.u_upper.to_string(),
                r.eta.to_string(),
                format!("{:.3}", r.wall_ms),
            ],
            Err(msg) => {
                let mut v = vec![format!("failed: {msg}")];
                v.extend(std::iter::repeat_n("N".to_string(), 8));
                v
            }
        };
        w.write_record(head.iter().chain(&rest))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.problem.clone(),
            r.algo.clone(),
            r.batch_size.to_string(),
            r.eps.clone(),
            opt(r.mean_iters.map(|v| format!("{v:.0}"))),
            opt(r.std_iters.map(|v| format!("{v:.1}"))),
            opt(r.mean_wall_ms.map(|v| format!("{v:.3}"))),
            opt(r.std_wall_ms.map(|v| format!("{v:.3}"))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bounds_csv<W: Write>(out: W, report: &BoundReport, extra: &[(&str, f64)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUNDS_HEADER.split(','))?;
    for (k, v) in report.fields().iter().chain(extra) {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_levels_csv<W: Write>(
    out: W,
    levels: &[f64],
    triples: &[(usize, Option<f64>, Option<usize>)],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEVELS_HEADER.split(','))?;
    for (level, (n, mean, max)) in levels.iter().zip(triples) {
        w.write_record([
            level.to_string(),
            n.to_string(),
            opt(mean.map(|m| format!("{m:.0}"))),
            opt(*max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(std::io::BufWriter<std::fs::File>) -> csv::Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f(std::io::BufWriter::new(file)).map_err(|e| csv_err(path, e))
}

/// Reads a trace CSV back as `(trial, iter, rel_error)` triples.
pub fn read_trace_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "trial" || &headers[1] != "iter" || &headers[2] != "rel_error" {
        return Err(Error::Format(format!("{} is not a trace CSV", path.display())));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c).ok_or_else(|| Error::Parse {
                row: line + 2,
                column: c + 1,
                message: "missing field".into(),
            })
        };
        let parse_err = |c: usize, m: String| Error::Parse {
            row: line + 2,
            column: c + 1,
            message: m,
        };
        let trial = field(0)?.parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let iter = field(1)?.parse().map_err(|e| parse_err(2, format!("{e}")))?;
        let err = field(2)?.parse().map_err(|e| parse_err(3, format!("{e}")))?;
        out.push((trial, iter, err));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{BetaPolicy, HyperParams, StepSizeRule};

    fn record(trace: Vec<f64>, converged: Option<usize>, betas: Vec<f64>) -> RunRecord {
        RunRecord {
            iterations: converged.unwrap_or(trace.len() - 1),
            trace,
            stride: 1,
            iters_to_converge: converged,
            wall_ms: 1.5,
            switch_iter: None,
            beta_trace: betas,
            final_x: vec![0.0],
            initial_distance: 1.0,
            hyper: HyperParams {
                epsilon: 0.1,
                u_lower: 1.0,
                u_upper: 5.0,
                beta_policy: BetaPolicy::Midpoint,
                eta_rule: StepSizeRule::ThmConsistent,
                batch_size: 10,
            },
            eta: 0.25,
        }
    }

    #[test]
    fn trace_schema() {
        let r = record(vec![1.0, 0.5, 0.25], None, vec![]);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[(0, &r), (1, &r)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "trial,iter,rel_error\n0,0,1\n0,1,0.5\n0,2,0.25\n1,0,1\n1,1,0.5\n1,2,0.25\n"
        );
    }

    #[test]
    fn trace_with_beta() {
        let r = record(vec![1.0, 0.5], None, vec![0.75]);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[(3, &r)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "trial,iter,rel_error,beta\n3,0,1,\n3,1,0.5,0.75\n"
        );
    }

    #[test]
    fn summary_rounding_and_n() {
        let rows = vec![
            SummaryRow {
                problem: "(ED, 20, 0.7)".into(),
                algo: "sga".into(),
                batch_size: 50,
                eps: "preset1".into(),
                mean_iters: Some(112.6),
                std_iters: Some(3.04),
                mean_wall_ms: Some(1.0),
                std_wall_ms: Some(0.0),
            },
            SummaryRow {
                problem: "p".into(),
                algo: "rmsprop".into(),
                batch_size: 50,
                eps: "-".into(),
                mean_iters: None,
                std_iters: None,
                mean_wall_ms: None,
                std_wall_ms: None,
            },
        ];
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines[1], "\"(ED, 20, 0.7)\",sga,50,preset1,113,3.0,1.000,0.000");
        assert_eq!(lines[2], "p,rmsprop,50,-,N,N,N,N");
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let r = record(vec![1.0, 0.1, 1e-5], Some(2), vec![]);
        write_file(&path, |w| write_trace_csv(w, &[(4, &r)])).unwrap();
        assert_eq!(
            read_trace_csv(&path).unwrap(),
            vec![(4, 0, 1.0), (4, 1, 0.1), (4, 2, 1e-5)]
        );
    }
}
