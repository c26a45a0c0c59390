//! Flat key=value run configuration shared by every subcommand.
//!
//! The format is one `key=value` per line, `#` comments, no nesting.
//! Command-line flags override file values; the `GSSCRIT_OUT` environment
//! variable overrides the output directory.

use gsscrit::profile::ProfileSolver;
use gsscrit::{Error, ModelSpec, RadialGrid, Result};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// "nlkg" or "dpnls".
    pub model: String,
    // single-power Klein-Gordon parameters
    pub p: f64,
    pub dim: u32,
    // double-power Schrödinger parameters
    pub a1: f64,
    pub p1: f64,
    pub a2: f64,
    pub p2: f64,
    /// Profile frequency for single-frequency subcommands.
    pub omega: f64,
    // frequency sweep for dcurve
    pub omega_min: f64,
    pub omega_max: f64,
    pub samples: usize,
    pub grid_n: usize,
    /// Domain radius; 0 selects 40 / (slowest decay rate) automatically.
    pub grid_r: f64,
    pub tol: f64,
    // time integration
    pub t_final: f64,
    pub dt: f64,
    pub output_every: usize,
    /// Perturbation amplitude for stability-style evolve runs.
    pub delta: f64,
    /// Group-frequency offset of Ψ(λ) initial data; 0 selects the
    /// δ-perturbation initial data instead.
    pub lambda: f64,
    pub sponge: bool,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "nlkg".into(),
            p: 3.0,
            dim: 1,
            a1: 1.0,
            p1: 3.0,
            a2: 1.0,
            p2: 7.0,
            omega: 0.5,
            omega_min: 0.1,
            omega_max: 0.9,
            samples: 17,
            grid_n: 2048,
            grid_r: 0.0,
            tol: 1e-11,
            t_final: 200.0,
            dt: 0.01,
            output_every: 50,
            delta: 0.01,
            lambda: 0.0,
            sponge: false,
            out_dir: "out".into(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse {key}={value}")))
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.to_string(),
            "p" => self.p = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "a1" => self.a1 = parse(key, value)?,
            "p1" => self.p1 = parse(key, value)?,
            "a2" => self.a2 = parse(key, value)?,
            "p2" => self.p2 = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "omega_min" => self.omega_min = parse(key, value)?,
            "omega_max" => self.omega_max = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "grid_n" => self.grid_n = parse(key, value)?,
            "grid_r" => self.grid_r = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "t_final" => self.t_final = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "output_every" => self.output_every = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "sponge" => self.sponge = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            _ => return Err(Error::invalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse the flat file format on top of the defaults.
    pub fn from_flat(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_flat(text)?;
        Ok(cfg)
    }

    pub fn apply_flat(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The flat file representation; `from_flat(to_flat(c)) == c`.
    pub fn to_flat(&self) -> String {
        format!(
            "model={}\np={}\ndim={}\na1={}\np1={}\na2={}\np2={}\nomega={}\n\
             omega_min={}\nomega_max={}\nsamples={}\ngrid_n={}\ngrid_r={}\ntol={}\n\
             t_final={}\ndt={}\noutput_every={}\ndelta={}\nlambda={}\nsponge={}\nout_dir={}\n",
            self.model,
            self.p,
            self.dim,
            self.a1,
            self.p1,
            self.a2,
            self.p2,
            self.omega,
            self.omega_min,
            self.omega_max,
            self.samples,
            self.grid_n,
            self.grid_r,
            self.tol,
            self.t_final,
            self.dt,
            self.output_every,
            self.delta,
            self.lambda,
            self.sponge,
            self.out_dir,
        )
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = match self.model.as_str() {
            "nlkg" => ModelSpec::nlkg(self.p, self.dim),
            "dpnls" => ModelSpec::dpnls(self.a1, self.p1, self.a2, self.p2),
            other => return Err(Error::invalid(format!("unknown model '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.model_spec()?;
        for (name, omega) in [
            ("omega", self.omega),
            ("omega_min", self.omega_min),
            ("omega_max", self.omega_max),
        ] {
            if !omega.is_finite() || !spec.omega_admissible(omega) {
                return Err(Error::invalid(format!(
                    "{name}={omega} outside the existence range of {spec}"
                )));
            }
        }
        if !(self.omega_min < self.omega_max) {
            return Err(Error::invalid("need omega_min < omega_max"));
        }
        if self.samples < 2 {
            return Err(Error::invalid("need samples >= 2"));
        }
        if self.grid_n < 8 {
            return Err(Error::invalid("need grid_n >= 8"));
        }
        if !(self.grid_r >= 0.0) {
            return Err(Error::invalid("need grid_r >= 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("need tol > 0"));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.dt <= self.t_final) {
            return Err(Error::invalid("need 0 < dt <= t_final"));
        }
        if self.output_every == 0 {
            return Err(Error::invalid("need output_every >= 1"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("need delta >= 0"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if self.out_dir.is_empty() {
            return Err(Error::invalid("out_dir must not be empty"));
        }
        Ok(())
    }

    /// Profile solver on the configured grid; the automatic radius uses
    /// the slowest decay among the given reference frequencies.
    pub fn solver(&self, omega_refs: &[f64]) -> Result<ProfileSolver> {
        let spec = self.model_spec()?;
        let r = if self.grid_r > 0.0 {
            self.grid_r
        } else {
            let kappa = omega_refs
                .iter()
                .map(|&w| spec.decay_rate(w))
                .fold(f64::INFINITY, f64::min);
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::invalid("cannot choose a grid radius automatically"));
            }
            40.0 / kappa
        };
        let geometry = if spec.dim() == 1 {
            gsscrit::Geometry::EvenLine
        } else {
            gsscrit::Geometry::Radial
        };
        let grid = Arc::new(RadialGrid::new(spec.dim(), self.grid_n, r, geometry)?);
        Ok(ProfileSolver::new(spec, grid, self.tol))
    }
}
