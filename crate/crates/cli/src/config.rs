//! Flat `key = value` run configurations.
//!
//! ```text
//! solution = example_1
//! fem.degree = 1
//! stab.gamma = 0.1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are errors.

use std::fmt::Write as _;
use std::sync::Arc;

use ucfem::analysis::Study;
use ucfem::problem::{Constant, ExactSolution, NoiseModel, ScalarField, SeparableCosine};
use ucfem::solver::Method;
use ucfem::trace_space::Beta;

use crate::{CliError, Result};

/// Manufactured solutions selectable by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolutionId {
    /// `(e^y − y) cos(πx)`.
    Example1,
    /// `(e^y − y)(cos(πx) + 0.025 cos(2πx))`.
    Perturbed,
    /// `(e^y − y) cos(kπx)`.
    UN(usize),
    Constant(f64),
}

impl SolutionId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "example_1" => Some(SolutionId::Example1),
            "perturbed" => Some(SolutionId::Perturbed),
            _ => {
                if let Some(k) = s.strip_prefix("u_") {
                    k.parse().ok().filter(|k| *k >= 1).map(SolutionId::UN)
                } else if let Some(c) = s.strip_prefix("constant:") {
                    c.parse()
                        .ok()
                        .filter(|c: &f64| c.is_finite())
                        .map(SolutionId::Constant)
                } else {
                    None
                }
            }
        }
    }

    pub fn build(self) -> Arc<dyn ExactSolution> {
        match self {
            SolutionId::Example1 => Arc::new(SeparableCosine::example_1()),
            SolutionId::Perturbed => Arc::new(SeparableCosine::perturbed()),
            SolutionId::UN(k) => Arc::new(SeparableCosine::u_n(k)),
            SolutionId::Constant(c) => Arc::new(Constant(c)),
        }
    }
}

impl std::fmt::Display for SolutionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolutionId::Example1 => f.write_str("example_1"),
            SolutionId::Perturbed => f.write_str("perturbed"),
            SolutionId::UN(k) => write!(f, "u_{k}"),
            SolutionId::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

/// Additive perturbation `q_δ` of the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Zero,
    /// `q_δ = c`.
    Const(f64),
    /// `q_δ = a (e^y − y) cos(2πx)`.
    Cos2(f64),
}

impl Perturbation {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "zero" {
            return Some(Perturbation::Zero);
        }
        let (kind, v) = s.split_once(':')?;
        let v: f64 = v.parse().ok().filter(|v: &f64| v.is_finite())?;
        match kind {
            "const" => Some(Perturbation::Const(v)),
            "cos2" => Some(Perturbation::Cos2(v)),
            _ => None,
        }
    }

    pub fn field(self) -> Option<ScalarField> {
        match self {
            Perturbation::Zero => None,
            Perturbation::Const(c) => Some(Arc::new(move |_| c)),
            Perturbation::Cos2(a) => Some(Arc::new(move |p: [f64; 2]| {
                a * (p[1].exp() - p[1]) * (2.0 * std::f64::consts::PI * p[0]).cos()
            })),
        }
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Perturbation::Zero => f.write_str("zero"),
            Perturbation::Const(c) => write!(f, "const:{c}"),
            Perturbation::Cos2(a) => write!(f, "cos2:{a}"),
        }
    }
}

/// One convergence study, fully specified.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solution: SolutionId,
    pub degree: usize,
    pub n_start: usize,
    pub n_levels: usize,
    pub method: Method,
    pub trace_n: usize,
    pub beta: Beta,
    pub gamma: f64,
    pub noise_eps: f64,
    pub noise_seed: u64,
    pub noise_model: NoiseModel,
    pub perturbation: Perturbation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solution: SolutionId::Example1,
            degree: 1,
            n_start: 21,
            n_levels: 4,
            method: Method::TwoField,
            trace_n: 8,
            beta: Beta::Auto,
            gamma: 1.0,
            noise_eps: 0.0,
            noise_seed: 0,
            noise_model: NoiseModel::Shared,
            perturbation: Perturbation::Zero,
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 12] = [
    "solution",
    "fem.degree",
    "fem.n_start",
    "fem.n_levels",
    "method",
    "trace.N",
    "trace.beta",
    "stab.gamma",
    "noise.eps",
    "noise.seed",
    "noise.model",
    "data.perturbation",
];

/// Mesh sizes above this are refused; the next level would not fit in memory.
pub const MAX_N: usize = 641;

fn bad(key: &str, value: &str) -> CliError {
    CliError::Config(format!("invalid value {value:?} for {key}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

impl RunConfig {
    /// Sets one key. Does not validate cross-field constraints.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "solution" => {
                self.solution = SolutionId::parse(value).ok_or_else(|| bad(key, value))?
            }
            "fem.degree" => self.degree = parse_num(key, value)?,
            "fem.n_start" => self.n_start = parse_num(key, value)?,
            "fem.n_levels" => self.n_levels = parse_num(key, value)?,
            "method" => self.method = Method::parse(value).ok_or_else(|| bad(key, value))?,
            "trace.N" => self.trace_n = parse_num(key, value)?,
            "trace.beta" => {
                self.beta = if value == "auto" {
                    Beta::Auto
                } else {
                    Beta::Value(parse_num(key, value)?)
                };
            }
            "stab.gamma" => self.gamma = parse_num(key, value)?,
            "noise.eps" => self.noise_eps = parse_num(key, value)?,
            "noise.seed" => self.noise_seed = parse_num(key, value)?,
            "noise.model" => {
                self.noise_model = match value {
                    "shared" => NoiseModel::Shared,
                    "entrywise" => NoiseModel::Entrywise,
                    _ => return Err(bad(key, value)),
                }
            }
            "data.perturbation" => {
                self.perturbation = Perturbation::parse(value).ok_or_else(|| bad(key, value))?
            }
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Value of `key` as it would be serialized.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "solution" => self.solution.to_string(),
            "fem.degree" => self.degree.to_string(),
            "fem.n_start" => self.n_start.to_string(),
            "fem.n_levels" => self.n_levels.to_string(),
            "method" => self.method.as_str().to_string(),
            "trace.N" => self.trace_n.to_string(),
            "trace.beta" => match self.beta {
                Beta::Auto => "auto".to_string(),
                Beta::Value(b) => b.to_string(),
            },
            "stab.gamma" => self.gamma.to_string(),
            "noise.eps" => self.noise_eps.to_string(),
            "noise.seed" => self.noise_seed.to_string(),
            "noise.model" => match self.noise_model {
                NoiseModel::Shared => "shared".to_string(),
                NoiseModel::Entrywise => "entrywise".to_string(),
            },
            "data.perturbation" => self.perturbation.to_string(),
            _ => return None,
        })
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Parses a full config; missing keys take their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Every key, one per line, in [`KEYS`] order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    /// Mesh sizes of the study.
    pub fn level_sizes(&self) -> Vec<usize> {
        (0..self.n_levels)
            .map(|i| (self.n_start - 1) * (1 << i) + 1)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if !(1..=2).contains(&self.degree) {
            return err(format!("fem.degree must be 1 or 2, got {}", self.degree));
        }
        if self.n_start < 4 {
            return err(format!(
                "fem.n_start must be at least 4, got {}",
                self.n_start
            ));
        }
        if self.n_levels == 0 || self.n_levels > 8 {
            return err(format!(
                "fem.n_levels must be in 1..=8, got {}",
                self.n_levels
            ));
        }
        if self.level_sizes().last().is_some_and(|&n| n > MAX_N) {
            return err(format!("finest mesh would have n > {MAX_N}"));
        }
        if self.trace_n == 0 {
            return err("trace.N must be at least 1".into());
        }
        if let Beta::Value(b) = self.beta {
            if !b.is_finite() {
                return err("trace.beta must be finite or auto".into());
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return err(format!(
                "stab.gamma must be finite and >= 0, got {}",
                self.gamma
            ));
        }
        if !(self.noise_eps >= 0.0 && self.noise_eps.is_finite()) {
            return err(format!(
                "noise.eps must be finite and >= 0, got {}",
                self.noise_eps
            ));
        }
        Ok(())
    }

    pub fn to_study(&self) -> Result<Study> {
        self.validate()?;
        let mut s = Study::new(self.solution.build());
        s.degree = self.degree;
        s.method = self.method;
        s.gamma = self.gamma;
        s.trace_n = self.trace_n;
        s.beta = self.beta;
        s.noise_eps = self.noise_eps;
        s.noise_seed = self.noise_seed;
        s.noise_model = self.noise_model;
        s.q_delta = self.perturbation.field();
        s.n_start = self.n_start;
        s.n_levels = self.n_levels;
        s.validate()?;
        Ok(s)
    }
}

/// Command-line overrides, applied on top of a config or preset variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub degree: Option<usize>,
    pub n_levels: Option<usize>,
    pub gamma: Option<f64>,
    pub trace_n: Option<usize>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.degree {
            c.degree = v;
        }
        if let Some(v) = self.n_levels {
            c.n_levels = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.trace_n {
            c.trace_n = v;
        }
        if let Some(v) = self.eps {
            c.noise_eps = v;
        }
        if let Some(v) = self.seed {
            c.noise_seed = v;
        }
        if let Some(v) = self.method {
            c.method = v;
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}
