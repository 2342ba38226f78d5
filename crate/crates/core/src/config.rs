//! Run configuration: strict JSON, one document per run.
//!
//! ```json
//! {
//!   "sigma": -1,
//!   "background": [{"type": "traveling", "direction": "minus",
//!                   "profile": {"shape": "gaussian", "amplitude": 1, "center": 0, "width": 1}}],
//!   "solution": {"family": "single"},
//!   "grid": {"s_min": -10, "s_max": 10, "n_s": 2001, "dt": 0.005, "t_final": 1,
//!            "boundary": "clamped"}
//! }
//! ```
//!
//! Unknown keys are logged, or rejected under `--strict`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{Branch, CollisionSolution, SinglePeakonSolution, DEFAULT_SINGULAR_THRESHOLD};
use crate::background::{BackgroundSolution, Sigma, Term};
use crate::complex::{ComplexGrid, Variant};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, DEFAULT_CONDITION_CAP};
use crate::par::Execution;
use crate::solver::{Boundary, SGrid, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analytic,
    Simulate,
    Verify,
    Ch,
    Collision,
    ComplexVerify,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Analytic,
        Command::Simulate,
        Command::Verify,
        Command::Ch,
        Command::Collision,
        Command::ComplexVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Ch => "ch",
            Command::Collision => "collision",
            Command::ComplexVerify => "complex-verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Which exact solution seeds (or is checked by) the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    #[default]
    Single,
    Collision {
        #[serde(default = "plus")]
        branch: Branch,
        #[serde(default)]
        center: f64,
        #[serde(default = "singular_threshold")]
        threshold: f64,
    },
}

fn plus() -> Branch {
    Branch::Plus
}

fn singular_threshold() -> f64 {
    DEFAULT_SINGULAR_THRESHOLD
}

fn minus() -> Sigma {
    Sigma::Minus
}

fn condition_cap() -> f64 {
    DEFAULT_CONDITION_CAP
}

fn blowup_limit() -> f64 {
    1e12
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub n_s: usize,
    #[serde(default)]
    pub t_min: f64,
    pub t_final: f64,
    /// Time step for `simulate`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Time levels for the sampled commands; defaults to `n_s`.
    #[serde(default)]
    pub n_t: Option<usize>,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
    /// Keep every k-th step of a simulation.
    #[serde(default)]
    pub output_every: Option<usize>,
    /// Also run at doubled spacing and report observed orders.
    #[serde(default)]
    pub refine: bool,
    #[serde(default = "condition_cap")]
    pub condition_cap: f64,
    #[serde(default = "blowup_limit")]
    pub blowup_limit: f64,
}

fn periodic() -> Boundary {
    Boundary::Periodic
}

impl GridSpec {
    pub fn s_grid(&self) -> SGrid {
        match self.boundary {
            Boundary::Periodic => SGrid::periodic(self.s_min, self.s_max, self.n_s),
            Boundary::Clamped => SGrid::closed(self.s_min, self.s_max, self.n_s),
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid { t_min: self.t_min, t_max: self.t_final, n: self.n_t.unwrap_or(self.n_s) }
    }

    /// Same extent with doubled spacing in `s` and `t`.
    pub fn coarsened(&self) -> Result<Self> {
        let halve = |n: usize, closed: bool, what: &str| -> Result<usize> {
            if closed {
                if n % 2 == 0 {
                    return Err(Error::config(what, format!("refinement needs an odd node count, got {n}")));
                }
                Ok((n - 1) / 2 + 1)
            } else {
                if n % 2 == 1 {
                    return Err(Error::config(what, format!("refinement needs an even periodic node count, got {n}")));
                }
                Ok(n / 2)
            }
        };
        Ok(Self {
            n_s: halve(self.n_s, self.boundary == Boundary::Clamped, "grid.n_s")?,
            n_t: self.n_t.map(|n| halve(n, true, "grid.n_t")).transpose()?,
            dt: self.dt.map(|d| 2.0 * d),
            output_every: self.output_every.map(|k| k.div_ceil(2)),
            ..*self
        })
    }

    fn validate(&self, needs_dt: bool) -> Result<()> {
        if !(self.s_max > self.s_min) {
            return Err(Error::config("grid.s_max", "must exceed grid.s_min"));
        }
        if self.n_s < 5 {
            return Err(Error::config("grid.n_s", "need at least 5 nodes"));
        }
        if !(self.t_final >= self.t_min) {
            return Err(Error::config("grid.t_final", "must be at least grid.t_min"));
        }
        if matches!(self.n_t, Some(n) if n < 3) {
            return Err(Error::config("grid.n_t", "need at least 3 time levels"));
        }
        match self.dt {
            Some(dt) if !(dt > 0.0 && dt.is_finite()) => return Err(Error::config("grid.dt", "must be positive")),
            None if needs_dt => return Err(Error::config("grid.dt", "required for simulate")),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChSpec {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub output_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpec {
    pub variant: Variant,
    pub grid: ComplexGrid,
    #[serde(default = "yes")]
    pub refine: bool,
}

/// Thresholds for every check; each one used is echoed in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Absolute max error in `Q` against the exact solution.
    pub q_error: f64,
    /// Max over components of `max|num - exact| / max|exact|`.
    pub relative_error: f64,
    pub constraint: f64,
    pub antisymmetry: f64,
    pub conservation: f64,
    /// Max-norm of sampled-solution residuals.
    pub residual: f64,
    /// Residuals below this at both resolutions count as converged.
    pub residual_floor: f64,
    pub min_order_evolve: f64,
    pub min_order_residual: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
    pub f_transform: f64,
    pub round_trip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            q_error: 1e-4,
            relative_error: 1e-3,
            constraint: 1e-3,
            antisymmetry: 1e-8,
            conservation: 1e-6,
            residual: 1e-3,
            residual_floor: 1e-10,
            min_order_evolve: 3.0,
            min_order_residual: 1.9,
            energy_drift: 1e-8,
            momentum_drift: 1e-10,
            f_transform: 1e-8,
            round_trip: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl XGrid {
    pub fn nodes(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![self.min; self.n];
        }
        let h = (self.max - self.min) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.min + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Write `fields.csv` on this `x` grid at the final time.
    #[serde(default)]
    pub x_grid: Option<XGrid>,
    /// s-node for `fields.csv`; defaults to the middle node.
    #[serde(default)]
    pub field_node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Optional; must match the CLI command when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default = "minus")]
    pub sigma: Sigma,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub background: Vec<Term>,
    #[serde(default)]
    pub solution: Family,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub ch: Option<ChSpec>,
    #[serde(default)]
    pub complex: Option<ComplexSpec>,
    /// Trajectory CSV checked by `verify` instead of an analytic solution.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub execution: Execution,
}

/// An analytic solution built from a config.
pub enum Exact {
    Single(SinglePeakonSolution),
    Collision(CollisionSolution),
}

impl Exact {
    pub fn as_analytic(&self) -> &dyn crate::analytic::AnalyticSolution {
        match self {
            Exact::Single(s) => s,
            Exact::Collision(c) => c,
        }
    }
}

impl RunConfig {
    pub fn background_solution(&self, sigma: Sigma) -> Result<BackgroundSolution> {
        BackgroundSolution::new(sigma, self.background.clone()).map_err(|e| Error::config("background", e.to_string()))
    }

    pub fn exact(&self) -> Result<Exact> {
        let bg = self.background_solution(self.sigma)?;
        Ok(match self.solution {
            Family::Single => Exact::Single(SinglePeakonSolution::new(bg, self.kernel)),
            Family::Collision { branch, center, threshold } => {
                Exact::Collision(CollisionSolution::new(bg, self.kernel, branch, center).with_threshold(threshold))
            }
        })
    }

    pub fn grid(&self) -> Result<&GridSpec> {
        self.grid.as_ref().ok_or_else(|| Error::config("grid", "missing; required for this command"))
    }

    fn validate(&self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::config("command", format!("config is for `{c}` but `{command}` was requested")));
            }
        }
        if command == Command::Simulate && self.sigma == Sigma::Plus {
            return Err(Error::IllPosed);
        }
        match command {
            Command::Analytic | Command::Simulate | Command::Collision => {
                self.grid()?.validate(command == Command::Simulate)?;
                if self.background.is_empty() {
                    return Err(Error::config("background", "missing; at least one term is required"));
                }
            }
            Command::Verify => {
                self.grid()?.validate(false)?;
                if self.background.is_empty() && self.snapshot.is_none() {
                    return Err(Error::config("background", "verify needs a background or a snapshot file"));
                }
            }
            Command::Ch => {
                let ch = self.ch.as_ref().ok_or_else(|| Error::config("ch", "missing; required for ch"))?;
                if ch.q.len() != ch.m.len() || ch.q.is_empty() {
                    return Err(Error::config("ch.m", "need one momentum per position"));
                }
                if !(ch.dt > 0.0) {
                    return Err(Error::config("ch.dt", "must be positive"));
                }
            }
            Command::ComplexVerify => {
                let cx = self.complex.as_ref().ok_or_else(|| Error::config("complex", "missing; required for complex-verify"))?;
                cx.grid.validate().map_err(|e| Error::config("complex.grid", e.to_string()))?;
                if self.background.is_empty() {
                    return Err(Error::config("background", "missing; at least one term is required"));
                }
            }
        }
        if command == Command::Collision && !matches!(self.solution, Family::Collision { .. }) {
            return Err(Error::config("solution", "collision needs {\"family\": \"collision\"}"));
        }
        Ok(())
    }
}

/// Parses and validates `text` for `command`.
pub fn parse_config(text: &str, command: Command, strict: bool) -> Result<RunConfig> {
    let mut unknown = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string().replace(".?", ""))).map_err(|e| {
        let msg = e.to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("missing field") || msg.starts_with("unknown"))
            .unwrap_or("$")
            .to_string();
        Error::config(key, msg)
    })?;
    if let Some(path) = unknown.first() {
        if strict {
            return Err(Error::config(path.clone(), "unknown key"));
        }
        for p in &unknown {
            log::warn!("ignoring unknown config key `{p}`");
        }
    }
    cfg.validate(command)?;
    Ok(cfg)
}
