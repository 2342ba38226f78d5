use serde::Serialize;

use super::{constraint_residual, max_abs, strand_rhs, Boundary, Mode, SolverConfig, StrandRates, StrandState};
use crate::analytic::{AnalyticSolution, PeakonSample, StrandSource};
use crate::background::Sigma;
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    /// `max_{a,j} |∂ₛQᵃ - σ Σ_b N_b Kᵃᵇ|`
    pub constraint_max: f64,
    /// `∫ Σ_a M_a ds`
    pub momentum_integral: f64,
    /// `∫ N₁ ds` for one peakon, `∫ (N₁ - N₂) ds` for two; absent otherwise.
    pub n_charge: Option<f64>,
    /// `∫ Σ_a |M_a| ds`, the scale for relative momentum drift.
    pub momentum_scale: f64,
    /// `∫ Σ_a |N_a| ds`, the scale for relative N-charge drift.
    pub n_scale: f64,
    /// `min_{j, a<b} |Qᵃ - Qᵇ|`; infinite for a single peakon.
    pub min_separation: f64,
}

impl MonitorRecord {
    pub fn measure(state: &StrandState, sigma: Sigma, kernel: Kernel, periodic: bool) -> Self {
        let np = state.n_peakons();
        let grid = state.grid;
        // Periodic grids: rectangle rule over one period. Otherwise trapezoid.
        let weight = |j: usize| {
            if !periodic && (j == 0 || j == grid.n - 1) {
                0.5 * grid.ds
            } else {
                grid.ds
            }
        };
        let integrate = |f: &dyn Fn(usize) -> f64| (0..grid.n).map(|j| weight(j) * f(j)).sum::<f64>();

        let momentum_integral = integrate(&|j| (0..np).map(|a| state.m[a][j]).sum());
        let momentum_scale = integrate(&|j| (0..np).map(|a| state.m[a][j].abs()).sum());
        let n_scale = integrate(&|j| (0..np).map(|a| state.n[a][j].abs()).sum());
        let n_charge = match np {
            1 => Some(integrate(&|j| state.n[0][j])),
            2 => Some(integrate(&|j| state.n[0][j] - state.n[1][j])),
            _ => None,
        };
        let mut min_separation = f64::INFINITY;
        for j in 0..grid.n {
            for a in 0..np {
                for b in a + 1..np {
                    min_separation = min_separation.min((state.q[a][j] - state.q[b][j]).abs());
                }
            }
        }
        Self {
            t: state.t,
            constraint_max: max_abs(&constraint_residual(state, sigma, kernel, periodic)),
            momentum_integral,
            n_charge,
            momentum_scale,
            n_scale,
            min_separation,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonitorSeries {
    pub records: Vec<MonitorRecord>,
}

impl MonitorSeries {
    pub fn max_constraint(&self) -> f64 {
        self.records.iter().map(|r| r.constraint_max).fold(0.0, f64::max)
    }

    pub fn min_separation(&self) -> f64 {
        self.records.iter().map(|r| r.min_separation).fold(f64::INFINITY, f64::min)
    }

    /// `max_t |I(t) - I(0)| / max(|I(0)|, scale(0))` for `∫ Σ M ds`.
    pub fn momentum_drift(&self) -> f64 {
        self.relative_drift(|r| Some(r.momentum_integral), |r| r.momentum_scale)
    }

    /// Same as [`momentum_drift`](Self::momentum_drift) for the N-charge.
    pub fn n_charge_drift(&self) -> Option<f64> {
        self.records.first()?.n_charge?;
        Some(self.relative_drift(|r| r.n_charge, |r| r.n_scale))
    }

    fn relative_drift(&self, value: impl Fn(&MonitorRecord) -> Option<f64>, scale: impl Fn(&MonitorRecord) -> f64) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        let i0 = value(first).unwrap_or(0.0);
        let denom = i0.abs().max(scale(first));
        let worst = self
            .records
            .iter()
            .filter_map(&value)
            .map(|v| (v - i0).abs())
            .fold(0.0, f64::max);
        if denom > 0.0 {
            worst / denom
        } else {
            worst
        }
    }
}

/// Snapshots at output times, with enough context to look values up.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sigma: Sigma,
    pub kernel: Kernel,
    pub boundary: Boundary,
    pub snapshots: Vec<StrandState>,
}

impl Trajectory {
    pub fn last(&self) -> &StrandState {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }
}

/// Exact lookup: `(t, s)` must coincide with a stored time and grid node.
impl StrandSource for Trajectory {
    fn sigma(&self) -> Sigma {
        self.sigma
    }

    fn n_peakons(&self) -> usize {
        self.snapshots.first().map_or(0, StrandState::n_peakons)
    }

    fn sample(&self, t: f64, s: f64) -> Result<PeakonSample> {
        let tol = 1e-9;
        let snap = self
            .snapshots
            .iter()
            .find(|st| (st.t - t).abs() <= tol * (1.0 + t.abs()))
            .ok_or_else(|| Error::invalid(format!("no snapshot at t = {t}")))?;
        let g = snap.grid;
        let mut pos = (s - g.s_min) / g.ds;
        if self.boundary == Boundary::Periodic {
            pos = pos.rem_euclid(g.n as f64);
        }
        let j = pos.round();
        if (pos - j).abs() > 1e-6 || j < 0.0 || j as usize >= g.n + usize::from(self.boundary == Boundary::Periodic) {
            return Err(Error::invalid(format!("s = {s} is not a grid node")));
        }
        let j = j as usize % g.n;
        Ok(PeakonSample {
            q: snap.q.iter().map(|r| r[j]).collect(),
            m: snap.m.iter().map(|r| r[j]).collect(),
            n: snap.n.iter().map(|r| r[j]).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub monitor: MonitorSeries,
    /// Step actually used (`t_final` divided into a whole number of steps).
    pub dt: f64,
    pub steps: usize,
}

/// Advances `initial` to `cfg.t_final` with classic RK4.
///
/// Clamped boundaries take their time derivatives at the two end nodes from
/// `reference`. σ = +1 is refused: the system is Laplace-type there.
pub fn evolve(
    initial: &StrandState,
    cfg: &SolverConfig,
    kernel: Kernel,
    reference: Option<&dyn AnalyticSolution>,
) -> Result<Evolution> {
    if cfg.sigma == Sigma::Plus {
        return Err(Error::IllPosed);
    }
    if cfg.mode != Mode::Evolve {
        return Err(Error::invalid("evolve requires mode = evolve; use verify_on_grid for residual-only runs"));
    }
    if !(cfg.dt > 0.0 && cfg.t_final >= 0.0 && cfg.dt.is_finite() && cfg.t_final.is_finite()) {
        return Err(Error::invalid(format!("need dt > 0 and T >= 0, got dt = {}, T = {}", cfg.dt, cfg.t_final)));
    }
    initial.validate()?;
    if cfg.boundary == Boundary::Clamped && reference.is_none() {
        return Err(Error::invalid("clamped boundaries need a reference solution"));
    }
    let periodic = cfg.periodic();
    let initial_constraint = max_abs(&constraint_residual(initial, cfg.sigma, kernel, periodic));
    if initial_constraint > cfg.initial_constraint_tol {
        return Err(Error::invalid(format!(
            "initial data violates the s-constraint: max residual {initial_constraint:.3e} > {:.1e}",
            cfg.initial_constraint_tol
        )));
    }

    let steps = ((cfg.t_final - initial.t) / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 { 0.0 } else { (cfg.t_final - initial.t) / steps as f64 };

    let rhs = |st: &StrandState| -> Result<StrandRates> {
        let mut r = strand_rhs(st, cfg, kernel)?;
        if let (Boundary::Clamped, Some(reference)) = (cfg.boundary, reference) {
            let last = st.grid.n - 1;
            for j in [0, last] {
                let exact = reference.sample_dt(st.t, st.grid.node(j))?;
                for a in 0..st.n_peakons() {
                    r.dq[a][j] = exact.q[a];
                    r.dm[a][j] = exact.m[a];
                    r.dn[a][j] = exact.n[a];
                }
            }
        }
        Ok(r)
    };

    let mut monitor = MonitorSeries::default();
    monitor.records.push(MonitorRecord::measure(initial, cfg.sigma, kernel, periodic));
    let mut snapshots = vec![initial.clone()];
    let mut y = initial.clone();

    for step in 1..=steps {
        let k1 = rhs(&y)?;
        let k2 = rhs(&y.advanced(0.5 * dt, &k1))?;
        let k3 = rhs(&y.advanced(0.5 * dt, &k2))?;
        let k4 = rhs(&y.advanced(dt, &k3))?;
        let combined = StrandRates {
            dq: combine(&k1.dq, &k2.dq, &k3.dq, &k4.dq),
            dm: combine(&k1.dm, &k2.dm, &k3.dm, &k4.dm),
            dn: combine(&k1.dn, &k2.dn, &k3.dn, &k4.dn),
        };
        let mut next = y.advanced(dt, &combined);
        next.t = initial.t + step as f64 * dt;

        if next.values().any(|v| !(v.abs() <= cfg.blowup_limit)) {
            return Err(Error::BlowUp {
                t: next.t,
                limit: cfg.blowup_limit,
                last_good: Box::new(y),
            });
        }
        monitor.records.push(MonitorRecord::measure(&next, cfg.sigma, kernel, periodic));
        if step % cfg.output_every.max(1) == 0 || step == steps {
            snapshots.push(next.clone());
        }
        y = next;
    }

    Ok(Evolution {
        trajectory: Trajectory {
            sigma: cfg.sigma,
            kernel,
            boundary: cfg.boundary,
            snapshots,
        },
        monitor,
        dt,
        steps,
    })
}

/// `(k1 + 2k2 + 2k3 + k4) / 6`
fn combine(k1: &[Vec<f64>], k2: &[Vec<f64>], k3: &[Vec<f64>], k4: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..k1.len())
        .map(|a| {
            (0..k1[a].len())
                .map(|j| (k1[a][j] + 2.0 * k2[a][j] + 2.0 * k3[a][j] + k4[a][j]) / 6.0)
                .collect()
        })
        .collect()
}
