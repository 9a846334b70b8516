//! Kernel cache as CSV: a `# key=value` metadata block, then `i,j,k_value` rows.

use std::io::{BufRead, Write};

use super::{Kernel, TriGrid};
use crate::error::{Error, Result};

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_kernel_csv<W: Write>(kernel: &Kernel, mut out: W) -> Result<()> {
    writeln!(out, "# n={}", kernel.n())?;
    writeln!(out, "# c={}", kernel.c)?;
    writeln!(out, "# k11={}", kernel.k11)?;
    writeln!(out, "# sweeps={}", kernel.sweeps)?;
    writeln!(out, "# a_samples={}", join(&kernel.a_samples))?;
    writeln!(out, "# kx1_trace={}", join(&kernel.kx1_trace))?;
    writeln!(out, "i,j,k_value")?;
    for i in 0..kernel.n() {
        for j in 0..=i {
            writeln!(out, "{i},{j},{}", kernel.grid.at(i, j))?;
        }
    }
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Config {
        line,
        reason: format!("not a number: `{s}`"),
    })
}

fn parse_list(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace().map(|t| parse_f64(t, line)).collect()
}

pub fn read_kernel_csv<R: BufRead>(input: R) -> Result<Kernel> {
    let mut n = None;
    let mut c = None;
    let mut sweeps = 0;
    let mut a_samples = None;
    let mut kx1_trace = None;
    let mut grid: Option<TriGrid> = None;

    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.trim().split_once('=') else {
                continue;
            };
            match key.trim() {
                "n" => {
                    n = Some(value.trim().parse::<usize>().map_err(|_| Error::Config {
                        line: lineno,
                        reason: "bad n".into(),
                    })?)
                }
                "c" => c = Some(parse_f64(value, lineno)?),
                "sweeps" => sweeps = value.trim().parse().unwrap_or(0),
                "a_samples" => a_samples = Some(parse_list(value, lineno)?),
                "kx1_trace" => kx1_trace = Some(parse_list(value, lineno)?),
                _ => {}
            }
            continue;
        }
        if line.trim() == "i,j,k_value" {
            let size = n.ok_or(Error::Config {
                line: lineno,
                reason: "missing `# n=` header".into(),
            })?;
            grid = Some(TriGrid::zeros(size)?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let g = grid.as_mut().ok_or(Error::Config {
            line: lineno,
            reason: "data row before column header".into(),
        })?;
        let mut parts = line.split(',');
        let (Some(i), Some(j), Some(v), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Config {
                line: lineno,
                reason: "expected three columns".into(),
            });
        };
        let bad = |_| Error::Config {
            line: lineno,
            reason: "bad index".into(),
        };
        let i: usize = i.trim().parse().map_err(bad)?;
        let j: usize = j.trim().parse().map_err(bad)?;
        g.set(i, j, parse_f64(v, lineno)?)?;
    }

    let missing = |what: &str| Error::Config {
        line: 0,
        reason: format!("kernel cache is missing {what}"),
    };
    let grid = grid.ok_or_else(|| missing("data"))?;
    let a_samples = a_samples.ok_or_else(|| missing("a_samples"))?;
    let kx1_trace = kx1_trace.ok_or_else(|| missing("kx1_trace"))?;
    let n = grid.n();
    if a_samples.len() != n || kx1_trace.len() != n {
        return Err(Error::Dimension(
            "kernel cache traces do not match n".into(),
        ));
    }
    let diag_trace: Vec<f64> = (0..n).map(|i| grid.at(i, i)).collect();
    Ok(Kernel {
        k11: diag_trace[n - 1],
        c: c.ok_or_else(|| missing("c"))?,
        grid,
        a_samples,
        diag_trace,
        kx1_trace,
        sweeps,
    })
}
