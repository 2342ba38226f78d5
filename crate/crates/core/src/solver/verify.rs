//! Residual-only mode: sample an analytic solution on a `(t, s)` grid and
//! measure how well it satisfies the discretized parameter equations.

use serde::Serialize;

use super::{constraint_residual, max_abs, strand_rhs, SGrid, SolverConfig, StrandState};
use crate::analytic::AnalyticSolution;
use crate::error::Result;
use crate::kernel::Kernel;
use crate::par;

/// `n` uniformly spaced times in `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.dt()
    }
}

/// Max-norm residuals of each parameter equation over the grid interior in
/// `t`. Time derivatives are second-order central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridResidual {
    /// `∂ₜQ - Σ M K`
    pub q_transport: f64,
    /// `∂ₛQ - σ Σ N K`
    pub constraint: f64,
    /// `∂ₜM - (M equation)`
    pub m_balance: f64,
    /// `∂ₜN - (N equation)`
    pub n_balance: f64,
}

impl GridResidual {
    pub fn max(&self) -> f64 {
        self.q_transport.max(self.constraint).max(self.m_balance).max(self.n_balance)
    }

    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("q_transport", self.q_transport),
            ("constraint", self.constraint),
            ("m_balance", self.m_balance),
            ("n_balance", self.n_balance),
        ]
    }
}

pub fn verify_on_grid(
    sol: &dyn AnalyticSolution,
    times: TimeGrid,
    grid: SGrid,
    cfg: &SolverConfig,
    kernel: Kernel,
) -> Result<GridResidual> {
    if times.n < 3 {
        return Err(crate::Error::invalid("residual mode needs at least 3 time levels"));
    }
    let levels: Vec<StrandState> =
        par::try_map_range(cfg.execution, times.n, |i| super::init_from_analytic(sol, times.node(i), grid))?;
    let periodic = cfg.periodic();
    let dt = times.dt();

    let mut out = GridResidual { q_transport: 0.0, constraint: 0.0, m_balance: 0.0, n_balance: 0.0 };
    for st in &levels {
        out.constraint = out.constraint.max(max_abs(&constraint_residual(st, cfg.sigma, kernel, periodic)));
    }
    for i in 1..times.n - 1 {
        let (prev, cur, next) = (&levels[i - 1], &levels[i], &levels[i + 1]);
        let rates = strand_rhs(cur, cfg, kernel)?;
        let worst = |p: &[Vec<f64>], n: &[Vec<f64>], r: &[Vec<f64>]| {
            let mut w: f64 = 0.0;
            for a in 0..r.len() {
                for j in 0..grid.n {
                    w = w.max(((n[a][j] - p[a][j]) / (2.0 * dt) - r[a][j]).abs());
                }
            }
            w
        };
        out.q_transport = out.q_transport.max(worst(&prev.q, &next.q, &rates.dq));
        out.m_balance = out.m_balance.max(worst(&prev.m, &next.m, &rates.dm));
        out.n_balance = out.n_balance.max(worst(&prev.n, &next.n, &rates.dn));
    }
    Ok(out)
}
