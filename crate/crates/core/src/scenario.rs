//! Experiment descriptions and the presets shipped with the toolkit.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::certify::{
    certify_gains, gamma_constants, GainCertificate, PlantSpec, DEFAULT_THETA_FRAC,
};
use crate::error::{Error, Result};
use crate::kernel::{apply_forward, build_transform, solve_kernel, Kernel, TransformPair};
use crate::spde::{l2_norm_sq, SpatialScheme};

/// Largest step accepted for any stochastic run.
pub const MAX_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Open,
    Closed,
    Target,
    /// The finite-dimensional `(Z, η)` system alone.
    Coupled,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Open => "open",
            Mode::Closed => "closed",
            Mode::Target => "target",
            Mode::Coupled => "coupled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(Mode::Open),
            "closed" => Some(Mode::Closed),
            "target" => Some(Mode::Target),
            "coupled" => Some(Mode::Coupled),
            _ => None,
        }
    }
}

/// Reaction coefficient `a(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Const(f64),
    /// Two-column `(x, a)` samples, interpolated linearly onto the grid.
    Table(Vec<(f64, f64)>),
    /// Two-column sample file, read when the scenario is prepared.
    File(PathBuf),
}

/// Initial temperature profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `amp·cos(k·π·x)`.
    Cosine {
        k: f64,
        amp: f64,
    },
    Constant(f64),
    Table(Vec<(f64, f64)>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub a: Coefficient,
    pub c: f64,
    pub sigma: f64,
    pub a_exo: DMatrix<f64>,
    pub c_row: DMatrix<f64>,
    pub l_col: DMatrix<f64>,
    pub xi0: DVector<f64>,
    /// Initial observer state `ϑ(0)`.
    pub theta0: DVector<f64>,
    pub y0: Profile,
    pub nodes: usize,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub theta_frac: f64,
    pub scheme: SpatialScheme,
}

pub const PRESETS: [&str; 3] = ["section4", "remark2", "coupledZeta"];

/// `4π² + 1.005`: the anti-stable reaction of the reference example.
pub fn reference_reaction() -> f64 {
    4.0 * PI * PI + 1.005
}

pub fn scenario_preset(name: &str) -> Result<Scenario> {
    let section4 = Scenario {
        name: "section4".into(),
        mode: Mode::Closed,
        a: Coefficient::Const(reference_reaction()),
        c: 1.02,
        sigma: 0.1,
        a_exo: DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]),
        c_row: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        l_col: DMatrix::from_row_slice(2, 1, &[-5.0, -1.0]),
        // toolkit choices: ξ(0), ϑ(0), grid and step
        xi0: DVector::from_vec(vec![1.0, 0.0]),
        theta0: DVector::zeros(2),
        y0: Profile::Cosine { k: 2.0, amp: 1.0 },
        nodes: 129,
        dt: 1e-4,
        horizon: 3.0,
        record_every: 100,
        theta_frac: DEFAULT_THETA_FRAC,
        scheme: SpatialScheme::Compact4,
    };
    match name {
        "section4" => Ok(section4),
        "remark2" => Ok(Scenario {
            name: "remark2".into(),
            mode: Mode::Open,
            xi0: DVector::zeros(2),
            nodes: 65,
            dt: 1e-3,
            horizon: 1.0,
            record_every: 10,
            ..section4
        }),
        "coupledZeta" => Ok(Scenario {
            name: "coupledZeta".into(),
            mode: Mode::Coupled,
            horizon: 2.0,
            record_every: 10,
            ..section4
        }),
        other => Err(Error::invalid(
            "preset",
            format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
        )),
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::invalid(name, format!("must be finite, got {v}")));
    }
    Ok(())
}

fn read_table(path: &PathBuf) -> Result<Vec<(f64, f64)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Config {
                line: idx + 1,
                reason: format!("{}: not a number `{s}`", path.display()),
            })
        };
        match cols.as_slice() {
            [x, v] => match (parse(x), parse(v)) {
                (Ok(x), Ok(v)) => out.push((x, v)),
                // a non-numeric first line is a header
                _ if out.is_empty() => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            },
            _ => {
                return Err(Error::Config {
                    line: idx + 1,
                    reason: format!("{}: expected two columns", path.display()),
                })
            }
        }
    }
    Ok(out)
}

/// Linear interpolation of `(x, v)` samples onto `m` uniform nodes; constant
/// extrapolation outside the sampled range.
pub fn interpolate(table: &[(f64, f64)], m: usize) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::invalid("samples", "table is empty"));
    }
    if table.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
        return Err(Error::invalid("samples", "non-finite entry"));
    }
    if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid(
            "samples",
            "x values must be strictly increasing",
        ));
    }
    let h = 1.0 / (m - 1) as f64;
    Ok((0..m)
        .map(|i| {
            let x = i as f64 * h;
            let first = table[0];
            let last = table[table.len() - 1];
            if x <= first.0 {
                return first.1;
            }
            if x >= last.0 {
                return last.1;
            }
            let k = table.partition_point(|(xs, _)| *xs <= x);
            let (x0, v0) = table[k - 1];
            let (x1, v1) = table[k];
            v0 + (v1 - v0) * (x - x0) / (x1 - x0)
        })
        .collect())
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn plant_spec(&self) -> PlantSpec {
        PlantSpec {
            c: self.c,
            sigma: self.sigma,
            a: self.a_exo.clone(),
            c_row: self.c_row.clone(),
            l_col: self.l_col.clone(),
        }
    }

    /// Checks every numeric field before any computation.
    pub fn validate(&self) -> Result<()> {
        finite("c", self.c)?;
        finite("sigma", self.sigma)?;
        finite("T", self.horizon)?;
        finite("dt", self.dt)?;
        finite("theta_frac", self.theta_frac)?;
        if self.nodes < 3 {
            return Err(Error::invalid(
                "nodes",
                format!("need at least 3, got {}", self.nodes),
            ));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid(
                "dt",
                format!("must lie in (0, {MAX_DT}], got {}", self.dt),
            ));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid(
                "T",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        let steps = self.steps();
        if steps == 0 || (steps as f64 * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::invalid(
                "T",
                "horizon must be a whole number of steps",
            ));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be at least 1"));
        }
        if !(self.theta_frac > 0.0 && self.theta_frac < 1.0) {
            return Err(Error::invalid("theta_frac", "must lie in (0, 1)"));
        }
        let n = self.a_exo.nrows();
        if self.xi0.len() != n || self.theta0.len() != n {
            return Err(Error::Dimension(format!(
                "xi0 and theta0 must have length {n}, got {} and {}",
                self.xi0.len(),
                self.theta0.len()
            )));
        }
        self.plant_spec().check_dims()?;
        for m in [&self.a_exo, &self.c_row, &self.l_col] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("matrices", "entries must be finite"));
            }
        }
        if !self
            .xi0
            .iter()
            .chain(self.theta0.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("xi0, theta0", "entries must be finite"));
        }
        match &self.a {
            Coefficient::Const(v) => finite("a", *v)?,
            Coefficient::Table(t) => {
                interpolate(t, self.nodes)?;
            }
            Coefficient::File(_) => {}
        }
        match &self.y0 {
            Profile::Cosine { k, amp } => {
                finite("y0", *k)?;
                finite("y0", *amp)?;
            }
            Profile::Constant(v) => finite("y0", *v)?,
            Profile::Table(t) => {
                interpolate(t, self.nodes)?;
            }
            Profile::File(_) => {}
        }
        Ok(())
    }

    pub fn a_samples(&self) -> Result<Vec<f64>> {
        match &self.a {
            Coefficient::Const(v) => Ok(vec![*v; self.nodes]),
            Coefficient::Table(t) => interpolate(t, self.nodes),
            Coefficient::File(p) => interpolate(&read_table(p)?, self.nodes),
        }
    }

    pub fn y0_samples(&self) -> Result<Vec<f64>> {
        let h = 1.0 / (self.nodes - 1) as f64;
        match &self.y0 {
            Profile::Cosine { k, amp } => Ok((0..self.nodes)
                .map(|i| amp * (k * PI * i as f64 * h).cos())
                .collect()),
            Profile::Constant(v) => Ok(vec![*v; self.nodes]),
            Profile::Table(t) => interpolate(t, self.nodes),
            Profile::File(p) => interpolate(&read_table(p)?, self.nodes),
        }
    }
}

/// A validated scenario with its kernel, transform and (when the gains
/// certify) the certificate and bound constants.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub a_samples: Vec<f64>,
    pub y0: Vec<f64>,
    pub kernel: Kernel,
    pub transform: TransformPair,
    pub certificate: std::result::Result<GainCertificate, Error>,
    /// `Z(0)` and `η(0) = ϑ(0) + L·Z(0) − ξ(0)`.
    pub z0: f64,
    pub eta0: DVector<f64>,
}

impl Prepared {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let a_samples = scenario.a_samples()?;
        let y0 = scenario.y0_samples()?;
        let kernel = solve_kernel(&a_samples, scenario.c, scenario.nodes)?;
        let transform = build_transform(&kernel)?;
        let z_field = apply_forward(&transform, &y0)?;
        let h = kernel.h();
        let weights = crate::spde::trapezoid_weights(scenario.nodes);
        let z0: f64 = (0..scenario.nodes)
            .map(|j| weights[j] * (PI * j as f64 * h).cos() * z_field[j])
            .sum();
        let eta0 = &scenario.theta0 + scenario.l_col.column(0) * z0 - &scenario.xi0;

        let mut certificate = certify_gains(&scenario.plant_spec(), scenario.theta_frac);
        if let Ok(cert) = certificate.as_mut() {
            // β(0) = z(0) + x²/2·Cη(0)
            let c_eta = (&scenario.c_row * &eta0)[(0, 0)];
            let beta0: Vec<f64> = (0..scenario.nodes)
                .map(|j| {
                    let x = j as f64 * h;
                    z_field[j] + 0.5 * x * x * c_eta
                })
                .collect();
            cert.gammas = Some(gamma_constants(
                cert,
                z0 * z0,
                eta0.norm_squared(),
                l2_norm_sq(&beta0),
                transform.inverse_kernel_max_sq,
            )?);
        }
        Ok(Self {
            scenario: scenario.clone(),
            a_samples,
            y0,
            kernel,
            transform,
            certificate,
            z0,
            eta0,
        })
    }

    /// The certificate, or the error that prevented it.
    pub fn certified(&self) -> Result<&GainCertificate> {
        self.certificate.as_ref().map_err(Clone::clone)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section4_preset_values() {
        let s = scenario_preset("section4").unwrap();
        assert_eq!(s.c, 1.02);
        assert_eq!(s.sigma, 0.1);
        assert_eq!(
            s.a_exo,
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0])
        );
        assert_eq!(s.c_row, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(s.l_col, DMatrix::from_row_slice(2, 1, &[-5.0, -1.0]));
        assert_eq!(s.mode, Mode::Closed);
        assert_eq!((s.nodes, s.dt), (129, 1e-4));
        s.validate().unwrap();
    }

    #[test]
    fn remark2_preset_values() {
        let s = scenario_preset("remark2").unwrap();
        assert_eq!(s.mode, Mode::Open);
        assert_eq!(s.a, Coefficient::Const(4.0 * PI * PI + 1.005));
        assert!(s.xi0.iter().all(|v| *v == 0.0));
        let y0 = s.y0_samples().unwrap();
        assert!((y0[0] - 1.0).abs() < 1e-15 && (y0[32] + 1.0).abs() < 1e-15);
        s.validate().unwrap();
    }

    #[test]
    fn coupled_preset_restricts_section4() {
        let s = scenario_preset("coupledZeta").unwrap();
        let base = scenario_preset("section4").unwrap();
        assert_eq!(s.mode, Mode::Coupled);
        assert_eq!(s.plant_spec(), base.plant_spec());
    }

    #[test]
    fn unknown_preset() {
        assert!(scenario_preset("fig9").is_err());
    }

    #[test]
    fn validation_catches_bad_fields() {
        let base = scenario_preset("section4").unwrap();
        let mut s = base.clone();
        s.dt = 2e-3;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.horizon = 1.00005;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.xi0 = DVector::zeros(3);
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.sigma = f64::NAN;
        assert!(s.validate().is_err());
        let mut s = base;
        s.nodes = 2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn interpolation() {
        let t = [(0.0, 1.0), (0.5, 2.0), (1.0, 0.0)];
        let v = interpolate(&t, 5).unwrap();
        assert_eq!(v, vec![1.0, 1.5, 2.0, 1.0, 0.0]);
        assert!(interpolate(&[(0.0, 1.0), (0.0, 2.0)], 5).is_err());
        assert_eq!(interpolate(&[(0.3, 4.0)], 3).unwrap(), vec![4.0; 3]);
    }

    #[test]
    fn sample_file_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "x,a\n0,1\n1,3\n").unwrap();
        let mut s = scenario_preset("section4").unwrap();
        s.nodes = 3;
        s.a = Coefficient::File(p);
        assert_eq!(s.a_samples().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn prepared_section4_has_gammas() {
        let mut s = scenario_preset("section4").unwrap();
        s.nodes = 65;
        let p = Prepared::new(&s).unwrap();
        let cert = p.certified().unwrap();
        assert!((cert.theta_star - 0.01).abs() < 1e-12);
        let g = cert.gammas.unwrap();
        assert!(g.gamma_star > 0.0 && g.gamma_star.is_finite());
        // η(0) = L·Z(0) − ξ(0)
        assert!((p.eta0[0] - (-5.0 * p.z0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn prepared_reports_uncertified_sigma() {
        let mut s = scenario_preset("section4").unwrap();
        s.nodes = 33;
        s.sigma = 0.2;
        let p = Prepared::new(&s).unwrap();
        assert!(matches!(p.certified(), Err(Error::Uncertified { .. })));
    }
}
