//! Physical and algorithmic parameters, plus the flat `key=value` config
//! format used by the CLI.

use crate::conic::SolverSettings;
use crate::error::Error;

/// Physical and kinematic problem parameters.
///
/// Defaults reproduce the reference scenario: a 4 m track swept in 1 s by a
/// 0.1 kg antenna with damping 0.2 kg/s, drag 0.1 kg/m, speed limit 10 m/s,
/// variance floor fraction 0.1, and 11 spectral modes.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    /// Sensing interval T (s).
    pub interval: f64,
    /// Track length L (m).
    pub track_length: f64,
    /// Maximum speed (m/s).
    pub v_max: f64,
    /// Antenna mass (kg).
    pub mass: f64,
    /// Linear damping coefficient (kg/s).
    pub alpha1: f64,
    /// Quadratic drag coefficient (kg/m).
    pub alpha2: f64,
    /// QoS fraction in (0, 1]: spatial variance floor eta * L^2 / 4.
    pub eta: f64,
    /// Spectral truncation order N.
    pub modes: usize,
    /// Outer (Dinkelbach) convergence tolerance on |delta xi|.
    pub eps_out: f64,
    /// Inner (SCA) convergence tolerance on the coefficient step norm.
    pub eps_in: f64,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// Inner iteration cap.
    pub max_inner: usize,
    /// Points in the uniform quadrature grid.
    pub quad_points: usize,
    /// Conic solver settings.
    pub solver: SolverSettings,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            interval: 1.0,
            track_length: 4.0,
            v_max: 10.0,
            mass: 0.1,
            alpha1: 0.2,
            alpha2: 0.1,
            eta: 0.1,
            modes: 11,
            eps_out: 1e-6,
            eps_in: 1e-6,
            max_outer: 100,
            max_inner: 50,
            quad_points: 4001,
            solver: SolverSettings::default(),
        }
    }
}

impl ProblemConfig {
    /// Check the parameter invariants.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.interval > 0.0) {
            return bad("T must be positive");
        }
        if !(self.track_length > 0.0) {
            return bad("L must be positive");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        if !(self.mass >= 0.0) {
            return bad("m_a must be nonnegative");
        }
        if !(self.alpha1 >= 0.0) || !(self.alpha2 >= 0.0) {
            return bad("alpha1 and alpha2 must be nonnegative");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.modes < 1 {
            return bad("N must be at least 1");
        }
        if self.quad_points < 2 {
            return bad("quad_points must be at least 2");
        }
        if !(self.eps_out > 0.0) || !(self.eps_in > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file body. `#` starts a comment;
    /// blank lines are ignored. Unknown keys are rejected.
    pub fn from_key_values(body: &str) -> Result<Self, Error> {
        let mut cfg = Self::default();
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply a single `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let fv = || -> Result<f64, Error> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: bad float '{value}'")))
        };
        let uv = || -> Result<usize, Error> {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: bad integer '{value}'")))
        };
        match key {
            "T" => self.interval = fv()?,
            "L" => self.track_length = fv()?,
            "v_max" => self.v_max = fv()?,
            "m_a" => self.mass = fv()?,
            "alpha1" => self.alpha1 = fv()?,
            "alpha2" => self.alpha2 = fv()?,
            "eta" => self.eta = fv()?,
            "n" | "N" => self.modes = uv()?,
            "eps_out" => self.eps_out = fv()?,
            "eps_in" => self.eps_in = fv()?,
            "max_outer" => self.max_outer = uv()?,
            "max_inner" => self.max_inner = uv()?,
            "quad_points" => self.quad_points = uv()?,
            "solver_eps_abs" => self.solver.eps_abs = fv()?,
            "solver_eps_rel" => self.solver.eps_rel = fv()?,
            "solver_max_iter" => self.solver.max_iter = uv()?,
            "solver_rho" => self.solver.rho = fv()?,
            "solver_sigma" => self.solver.sigma = fv()?,
            "solver_alpha" => self.solver.alpha = fv()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// `eta * L^2 / 4`, the spatial-variance floor.
    pub fn qos_floor(&self) -> f64 {
        self.eta * self.track_length * self.track_length / 4.0
    }
}
