//! Line-oriented run configuration: `key = value` pairs under `[scenario]`
//! and `[run]` headers, `#` comments. Matrices are bracketed row-major lists
//! (`[[0, 2], [-2, 0]]`), vectors flat lists (`[1, 0]`).
//!
//! [`write_config`] emits every resolved field, so a manifest parses back to
//! the same [`RunConfig`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{scenario_preset, Coefficient, Mode, Profile, Scenario};
use crate::spde::SpatialScheme;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PATHS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub command: String,
    pub out: PathBuf,
    pub seed: u64,
    pub paths: usize,
    /// Field snapshot stride in steps.
    pub snapshots: Option<usize>,
    /// Also emit a JSON document where the command supports it.
    pub json: bool,
}

impl RunConfig {
    pub fn new(scenario: Scenario, command: &str) -> Self {
        Self {
            scenario,
            command: command.to_string(),
            out: PathBuf::from("."),
            seed: DEFAULT_SEED,
            paths: DEFAULT_PATHS,
            snapshots: None,
            json: false,
        }
    }
}

fn cfg_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<Value>),
}

struct ListParser<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
}

impl ListParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&b'[') {
            self.pos += 1;
            let mut items = Vec::new();
            loop {
                self.skip_ws();
                if self.s.get(self.pos) == Some(&b']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                if !items.is_empty() {
                    if self.s.get(self.pos) != Some(&b',') {
                        return Err(cfg_err(self.line, "expected `,` or `]` in list"));
                    }
                    self.pos += 1;
                }
                items.push(self.value()?);
            }
        }
        let start = self.pos;
        while self.pos < self.s.len() && !b",] \t".contains(&self.s[self.pos]) {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        tok.parse::<f64>()
            .map(Value::Num)
            .map_err(|_| cfg_err(self.line, format!("not a number: `{tok}`")))
    }
}

fn parse_value(s: &str, line: usize) -> Result<Value> {
    let mut p = ListParser {
        s: s.as_bytes(),
        pos: 0,
        line,
    };
    let v = p.value()?;
    p.skip_ws();
    if p.pos != s.len() {
        return Err(cfg_err(line, format!("trailing characters in `{s}`")));
    }
    Ok(v)
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("not a number: `{}`", s.trim())))
}

fn parse_uint<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("not a non-negative integer: `{}`", s.trim())))
}

fn parse_vector(s: &str, line: usize) -> Result<DVector<f64>> {
    match parse_value(s, line)? {
        Value::List(items) => items
            .into_iter()
            .map(|v| match v {
                Value::Num(x) => Ok(x),
                Value::List(_) => Err(cfg_err(line, "expected a flat list")),
            })
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec),
        Value::Num(_) => Err(cfg_err(line, "expected a bracketed list")),
    }
}

fn parse_matrix(s: &str, line: usize) -> Result<DMatrix<f64>> {
    let Value::List(rows) = parse_value(s, line)? else {
        return Err(cfg_err(line, "expected a bracketed list of rows"));
    };
    let mut data = Vec::new();
    let mut cols = None;
    for row in &rows {
        let Value::List(items) = row else {
            return Err(cfg_err(line, "matrix rows must be bracketed lists"));
        };
        if *cols.get_or_insert(items.len()) != items.len() {
            return Err(cfg_err(line, "matrix rows differ in length"));
        }
        for v in items {
            match v {
                Value::Num(x) => data.push(*x),
                Value::List(_) => return Err(cfg_err(line, "matrix entries must be numbers")),
            }
        }
    }
    let cols = cols.unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(cfg_err(line, "matrix is empty"));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

fn parse_table(s: &str, line: usize) -> Result<Vec<(f64, f64)>> {
    let m = parse_matrix(s, line)?;
    if m.ncols() != 2 {
        return Err(cfg_err(line, "table rows must be `[x, value]` pairs"));
    }
    Ok((0..m.nrows()).map(|i| (m[(i, 0)], m[(i, 1)])).collect())
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.split_once(char::is_whitespace) {
        Some((a, b)) => (a, b.trim()),
        None => (s, ""),
    }
}

fn parse_coefficient(s: &str, line: usize) -> Result<Coefficient> {
    match split_word(s) {
        ("const", v) => Ok(Coefficient::Const(parse_num(v, line)?)),
        ("table", v) => Ok(Coefficient::Table(parse_table(v, line)?)),
        ("file", v) if !v.is_empty() => Ok(Coefficient::File(PathBuf::from(v))),
        _ if !s.trim().is_empty() => Ok(Coefficient::File(PathBuf::from(s.trim()))),
        _ => Err(cfg_err(
            line,
            "expected `const <v>`, `table [...]` or a path",
        )),
    }
}

fn parse_profile(s: &str, line: usize) -> Result<Profile> {
    match split_word(s) {
        ("cosine", rest) => {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match parts.as_slice() {
                [k] => Ok(Profile::Cosine {
                    k: parse_num(k, line)?,
                    amp: 1.0,
                }),
                [k, amp] => Ok(Profile::Cosine {
                    k: parse_num(k, line)?,
                    amp: parse_num(amp, line)?,
                }),
                _ => Err(cfg_err(line, "expected `cosine <k> [amp]`")),
            }
        }
        ("const", v) => Ok(Profile::Constant(parse_num(v, line)?)),
        ("table", v) => Ok(Profile::Table(parse_table(v, line)?)),
        ("file", v) if !v.is_empty() => Ok(Profile::File(PathBuf::from(v))),
        _ if !s.trim().is_empty() => Ok(Profile::File(PathBuf::from(s.trim()))),
        _ => Err(cfg_err(
            line,
            "expected `cosine`, `const`, `table` or a path",
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Scenario,
    Run,
}

/// Parses a configuration. Scenario fields start from the preset named by
/// `preset` (section4 when absent) and are overridden key by key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: Vec<(Section, usize, String, String)> = Vec::new();
    let mut section = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = Some(match name.trim() {
                "scenario" => Section::Scenario,
                "run" => Section::Run,
                other => return Err(cfg_err(line, format!("unknown section `[{other}]`"))),
            });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(cfg_err(line, "expected `key = value`"));
        };
        let Some(sec) = section else {
            return Err(cfg_err(line, "key outside a section"));
        };
        entries.push((sec, line, key.trim().to_string(), value.trim().to_string()));
    }

    let base = entries
        .iter()
        .find(|(s, _, k, _)| *s == Section::Scenario && k == "preset")
        .map(|(_, _, _, v)| v.as_str())
        .unwrap_or("section4");
    let mut s = scenario_preset(base)?;
    let mut cfg = RunConfig::new(s.clone(), "");

    for (sec, line, key, value) in &entries {
        let (line, v) = (*line, value.as_str());
        match sec {
            Section::Scenario => match key.as_str() {
                "preset" => {}
                "name" => s.name = v.to_string(),
                "mode" => {
                    s.mode = Mode::parse(v)
                        .ok_or_else(|| cfg_err(line, format!("unknown mode `{v}`")))?
                }
                "a" => s.a = parse_coefficient(v, line)?,
                "c" => s.c = parse_num(v, line)?,
                "sigma" => s.sigma = parse_num(v, line)?,
                "A" => s.a_exo = parse_matrix(v, line)?,
                "C" => s.c_row = parse_matrix(v, line)?,
                "L" => s.l_col = parse_matrix(v, line)?,
                "xi0" => s.xi0 = parse_vector(v, line)?,
                "theta0" => s.theta0 = parse_vector(v, line)?,
                "y0" => s.y0 = parse_profile(v, line)?,
                "nodes" => s.nodes = parse_uint(v, line)?,
                "dt" => s.dt = parse_num(v, line)?,
                "T" => s.horizon = parse_num(v, line)?,
                "record_every" => s.record_every = parse_uint(v, line)?,
                "theta_frac" => s.theta_frac = parse_num(v, line)?,
                "scheme" => {
                    s.scheme = SpatialScheme::parse(v)
                        .ok_or_else(|| cfg_err(line, format!("unknown scheme `{v}`")))?
                }
                other => return Err(cfg_err(line, format!("unknown scenario key `{other}`"))),
            },
            Section::Run => match key.as_str() {
                "command" => cfg.command = v.to_string(),
                "out" => cfg.out = PathBuf::from(v),
                "seed" => cfg.seed = parse_uint(v, line)?,
                "paths" => cfg.paths = parse_uint(v, line)?,
                "snapshots" => {
                    cfg.snapshots = match v {
                        "none" => None,
                        _ => Some(parse_uint(v, line)?),
                    }
                }
                "json" => {
                    cfg.json = match v {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(cfg_err(line, format!("expected true or false, got `{v}`")))
                        }
                    }
                }
                other => return Err(cfg_err(line, format!("unknown run key `{other}`"))),
            },
        }
    }
    cfg.scenario = s;
    Ok(cfg)
}

/// Reads a configuration file; relative sample-file paths are resolved
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = dir.join(&*p);
        }
    };
    if let Coefficient::File(p) = &mut cfg.scenario.a {
        resolve(p);
    }
    if let Profile::File(p) = &mut cfg.scenario.y0 {
        resolve(p);
    }
    Ok(cfg)
}

fn fmt_vector(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let items: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            format!("[{}]", items.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn fmt_table(t: &[(f64, f64)]) -> String {
    let rows: Vec<String> = t.iter().map(|(x, v)| format!("[{x}, {v}]")).collect();
    format!("[{}]", rows.join(", "))
}

/// Serializes every field; floats use the shortest round-trip form.
pub fn write_config(cfg: &RunConfig) -> String {
    let s = &cfg.scenario;
    let mut o = String::new();
    let _ = writeln!(o, "[scenario]");
    let _ = writeln!(o, "name = {}", s.name);
    let _ = writeln!(o, "mode = {}", s.mode.name());
    let a = match &s.a {
        Coefficient::Const(v) => format!("const {v}"),
        Coefficient::Table(t) => format!("table {}", fmt_table(t)),
        Coefficient::File(p) => format!("file {}", p.display()),
    };
    let _ = writeln!(o, "a = {a}");
    let _ = writeln!(o, "c = {}", s.c);
    let _ = writeln!(o, "sigma = {}", s.sigma);
    let _ = writeln!(o, "A = {}", fmt_matrix(&s.a_exo));
    let _ = writeln!(o, "C = {}", fmt_matrix(&s.c_row));
    let _ = writeln!(o, "L = {}", fmt_matrix(&s.l_col));
    let _ = writeln!(o, "xi0 = {}", fmt_vector(&s.xi0));
    let _ = writeln!(o, "theta0 = {}", fmt_vector(&s.theta0));
    let y0 = match &s.y0 {
        Profile::Cosine { k, amp } => format!("cosine {k} {amp}"),
        Profile::Constant(v) => format!("const {v}"),
        Profile::Table(t) => format!("table {}", fmt_table(t)),
        Profile::File(p) => format!("file {}", p.display()),
    };
    let _ = writeln!(o, "y0 = {y0}");
    let _ = writeln!(o, "nodes = {}", s.nodes);
    let _ = writeln!(o, "dt = {}", s.dt);
    let _ = writeln!(o, "T = {}", s.horizon);
    let _ = writeln!(o, "record_every = {}", s.record_every);
    let _ = writeln!(o, "theta_frac = {}", s.theta_frac);
    let _ = writeln!(o, "scheme = {}", s.scheme.name());
    let _ = writeln!(o);
    let _ = writeln!(o, "[run]");
    let _ = writeln!(o, "command = {}", cfg.command);
    let _ = writeln!(o, "out = {}", cfg.out.display());
    let _ = writeln!(o, "seed = {}", cfg.seed);
    let _ = writeln!(o, "paths = {}", cfg.paths);
    let snaps = cfg
        .snapshots
        .map_or_else(|| "none".to_string(), |n| n.to_string());
    let _ = writeln!(o, "snapshots = {snaps}");
    let _ = writeln!(o, "json = {}", cfg.json);
    o
}
