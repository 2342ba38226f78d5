//! Method-of-lines integration of the N-peakon parameter equations
//!
//! ```text
//! ∂ₜQᵃ = Σ_b M_b Kᵃᵇ
//! ∂ₛQᵃ = σ Σ_b N_b Kᵃᵇ                                   (monitored)
//! ∂ₜM_a = -∂ₛN_a - Σ_c (M_a M_c + σ N_a N_c) K'(Qᵃ - Qᶜ)
//! ∂ₜN_a = σ ∂ₛM_a + Σ_e (K⁻¹)_ae Σ_{b,c} (N_b M_c - M_b N_c) K'(Qᵉ - Qᶜ)(Kᵉᵇ - Kᶜᵇ)
//! ```
//!
//! `s` is discretized with fourth-order differences and `t` advanced with the
//! classic four-stage Runge–Kutta scheme.

mod evolve;
pub mod stencil;
mod verify;

pub use evolve::{evolve, Evolution, MonitorRecord, MonitorSeries, Trajectory};
pub use verify::{verify_on_grid, GridResidual, TimeGrid};

use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticSolution;
use crate::background::Sigma;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, DEFAULT_CONDITION_CAP};
use crate::par::{self, Execution};

/// Upper bound on the number of peakons a state may carry.
pub const MAX_PEAKONS: usize = 16;

/// Uniform nodes `s_j = s_min + j Δs`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    pub s_min: f64,
    pub ds: f64,
    pub n: usize,
}

impl SGrid {
    /// `n` nodes covering `[s_min, s_max)`; the right end is the image of `s_min`.
    pub fn periodic(s_min: f64, s_max: f64, n: usize) -> Self {
        Self { s_min, ds: (s_max - s_min) / n as f64, n }
    }

    /// `n` nodes covering `[s_min, s_max]` including both ends.
    pub fn closed(s_min: f64, s_max: f64, n: usize) -> Self {
        Self { s_min, ds: (s_max - s_min) / (n - 1) as f64, n }
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        self.s_min + j as f64 * self.ds
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|j| self.node(j))
    }
}

/// Numeric unknowns at one time: `Qᵃ, M_a, N_a` indexed `[peakon][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrandState {
    pub t: f64,
    pub grid: SGrid,
    pub q: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
}

impl StrandState {
    pub fn zeros(t: f64, grid: SGrid, n_peakons: usize) -> Self {
        let z = vec![vec![0.0; grid.n]; n_peakons];
        Self { t, grid, q: z.clone(), m: z.clone(), n: z }
    }

    pub fn n_peakons(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let np = self.n_peakons();
        if np == 0 || np > MAX_PEAKONS {
            return Err(Error::invalid(format!("peakon count {np} outside 1..={MAX_PEAKONS}")));
        }
        if self.grid.n < 5 {
            return Err(Error::invalid("s grid needs at least 5 nodes"));
        }
        for arr in [&self.q, &self.m, &self.n] {
            if arr.len() != np || arr.iter().any(|row| row.len() != self.grid.n) {
                return Err(Error::invalid("Q, M, N arrays must all be n_peakons x n_s"));
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite(format!("strand state at t = {}", self.t)));
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.q
            .iter()
            .chain(&self.m)
            .chain(&self.n)
            .flat_map(|row| row.iter().copied())
    }

    /// Column of all peakons at node `j`.
    pub fn column(arr: &[Vec<f64>], j: usize) -> Vec<f64> {
        arr.iter().map(|row| row[j]).collect()
    }

    /// `self + h · rates`, at time `t + h`.
    pub(crate) fn advanced(&self, h: f64, rates: &StrandRates) -> StrandState {
        let step = |y: &[Vec<f64>], k: &[Vec<f64>]| -> Vec<Vec<f64>> {
            y.iter()
                .zip(k)
                .map(|(yr, kr)| yr.iter().zip(kr).map(|(a, b)| a + h * b).collect())
                .collect()
        };
        StrandState {
            t: self.t + h,
            grid: self.grid,
            q: step(&self.q, &rates.dq),
            m: step(&self.m, &rates.dm),
            n: step(&self.n, &rates.dn),
        }
    }
}

/// Time derivatives `(∂ₜQ, ∂ₜM, ∂ₜN)`, same shape as the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StrandRates {
    pub dq: Vec<Vec<f64>>,
    pub dm: Vec<Vec<f64>>,
    pub dn: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    /// Dirichlet data from a reference analytic solution at the two end nodes.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Evolve,
    ResidualOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub sigma: Sigma,
    pub dt: f64,
    pub t_final: f64,
    pub boundary: Boundary,
    pub mode: Mode,
    pub condition_cap: f64,
    /// Any `|value|` above this aborts the run.
    pub blowup_limit: f64,
    /// Maximum initial `∂ₛQ` constraint residual accepted by [`evolve`].
    pub initial_constraint_tol: f64,
    /// Keep every `output_every`-th step in the trajectory (the final step is
    /// always kept).
    pub output_every: usize,
    pub execution: Execution,
}

impl SolverConfig {
    pub fn new(sigma: Sigma, dt: f64, t_final: f64, boundary: Boundary) -> Self {
        Self {
            sigma,
            dt,
            t_final,
            boundary,
            mode: Mode::Evolve,
            condition_cap: DEFAULT_CONDITION_CAP,
            blowup_limit: 1e12,
            initial_constraint_tol: 1e-6,
            output_every: usize::MAX,
            execution: Execution::default(),
        }
    }

    pub fn periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }
}

struct NodeRates {
    dq: Vec<f64>,
    dm: Vec<f64>,
    dn: Vec<f64>,
}

/// Interaction terms at one node; `ds_m`, `ds_n` are the s-derivatives of the
/// momenta there.
#[allow(clippy::too_many_arguments)]
fn node_rates(
    kernel: Kernel,
    sigma: f64,
    cap: f64,
    q: &[f64],
    m: &[f64],
    n: &[f64],
    ds_m: &[f64],
    ds_n: &[f64],
) -> Result<NodeRates> {
    let np = q.len();
    let gram = kernel.gram(q);
    let kp = |a: usize, c: usize| if a == c { 0.0 } else { kernel.derivative(q[a] - q[c]) };

    let dq = gram.apply(m);

    let dm = (0..np)
        .map(|a| {
            let coupling: f64 = (0..np).map(|c| (m[a] * m[c] + sigma * n[a] * n[c]) * kp(a, c)).sum();
            -ds_n[a] - coupling
        })
        .collect();

    let w: Vec<f64> = (0..np)
        .map(|e| {
            let mut acc = 0.0;
            for c in 0..np {
                let kec = kp(e, c);
                if kec == 0.0 {
                    continue;
                }
                for b in 0..np {
                    acc += (n[b] * m[c] - m[b] * n[c]) * kec * (gram.entry(e, b) - gram.entry(c, b));
                }
            }
            acc
        })
        .collect();
    let correction = gram.solve(&w, cap)?;
    let dn = (0..np).map(|a| sigma * ds_m[a] + correction[a]).collect();

    Ok(NodeRates { dq, dm, dn })
}

fn near_collision_site(q: &[f64], j: usize, t: f64) -> String {
    let mut best = (0, 0, f64::INFINITY);
    for a in 0..q.len() {
        for b in a + 1..q.len() {
            let d = (q[a] - q[b]).abs();
            if d < best.2 {
                best = (a, b, d);
            }
        }
    }
    format!("peakons ({}, {}), node {j}, t = {t}", best.0, best.1)
}

/// Time derivatives of the state from the parameter equations, with
/// s-derivatives from [`stencil::derivative`] (periodic or one-sided).
pub fn strand_rhs(state: &StrandState, cfg: &SolverConfig, kernel: Kernel) -> Result<StrandRates> {
    let np = state.n_peakons();
    let ns = state.grid.n;
    let periodic = cfg.periodic();
    let ds_m: Vec<Vec<f64>> = state.m.iter().map(|r| stencil::derivative(r, state.grid.ds, periodic)).collect();
    let ds_n: Vec<Vec<f64>> = state.n.iter().map(|r| stencil::derivative(r, state.grid.ds, periodic)).collect();
    let sigma = cfg.sigma.value();

    let nodes = par::try_map_range(cfg.execution, ns, |j| {
        let col = |arr: &[Vec<f64>]| StrandState::column(arr, j);
        let q = col(&state.q);
        let rates = node_rates(
            kernel,
            sigma,
            cfg.condition_cap,
            &q,
            &col(&state.m),
            &col(&state.n),
            &col(&ds_m),
            &col(&ds_n),
        )
        .map_err(|e| match e {
            Error::NearCollision { condition, cap, .. } => Error::NearCollision {
                condition,
                cap,
                site: Some(near_collision_site(&q, j, state.t)),
            },
            other => other,
        })?;
        let finite = rates.dq.iter().chain(&rates.dm).chain(&rates.dn).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("strand_rhs at node {j}, t = {}", state.t)));
        }
        Ok(rates)
    })?;

    let mut out = StrandRates {
        dq: vec![vec![0.0; ns]; np],
        dm: vec![vec![0.0; ns]; np],
        dn: vec![vec![0.0; ns]; np],
    };
    for (j, r) in nodes.into_iter().enumerate() {
        for a in 0..np {
            out.dq[a][j] = r.dq[a];
            out.dm[a][j] = r.dm[a];
            out.dn[a][j] = r.dn[a];
        }
    }
    Ok(out)
}

/// `∂ₛQᵃ - σ Σ_b N_b Kᵃᵇ` at every node, `[peakon][node]`.
pub fn constraint_residual(state: &StrandState, sigma: Sigma, kernel: Kernel, periodic: bool) -> Vec<Vec<f64>> {
    let np = state.n_peakons();
    let ds_q: Vec<Vec<f64>> = state.q.iter().map(|r| stencil::derivative(r, state.grid.ds, periodic)).collect();
    let mut out = vec![vec![0.0; state.grid.n]; np];
    for j in 0..state.grid.n {
        let q = StrandState::column(&state.q, j);
        let n = StrandState::column(&state.n, j);
        let kn = kernel.gram(&q).apply(&n);
        for a in 0..np {
            out[a][j] = ds_q[a][j] - sigma.value() * kn[a];
        }
    }
    out
}

/// `max |v|` over a `[peakon][node]` array.
pub fn max_abs(arr: &[Vec<f64>]) -> f64 {
    arr.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Samples an analytic solution at every node of `grid` at time `t0`.
pub fn init_from_analytic(sol: &dyn AnalyticSolution, t0: f64, grid: SGrid) -> Result<StrandState> {
    let np = sol.n_peakons();
    let mut state = StrandState::zeros(t0, grid, np);
    for j in 0..grid.n {
        let s = grid.node(j);
        let p = sol.sample(t0, s).map_err(|e| match e {
            Error::CollisionSingularity { h, threshold, .. } => Error::InvalidInput(format!(
                "analytic solution singular at node {j} (t = {t0}, s = {s}): |h| = {h:.3e} < {threshold:.1e}"
            )),
            other => other,
        })?;
        for a in 0..np {
            state.q[a][j] = p.q[a];
            state.m[a][j] = p.m[a];
            state.n[a][j] = p.n[a];
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{Branch, CollisionSolution, SinglePeakonSolution};
    use crate::background::{BackgroundSolution, Direction, Profile, Term};

    const K: Kernel = Kernel::Peakon;

    fn gaussian_peakon() -> SinglePeakonSolution {
        let bg = BackgroundSolution::new(
            Sigma::Minus,
            vec![Term::Traveling {
                direction: Direction::Minus,
                profile: Profile::Gaussian { amplitude: 1.0, center: 0.0, width: 1.0 },
            }],
        )
        .unwrap();
        SinglePeakonSolution::new(bg, K)
    }

    fn sine_collision() -> CollisionSolution {
        let bg = BackgroundSolution::new(
            Sigma::Minus,
            vec![
                Term::Constant { value: 1.0 },
                Term::Traveling {
                    direction: Direction::Minus,
                    profile: Profile::Sinusoid { amplitude: 0.3, k: 1.0, phase: 0.0 },
                },
            ],
        )
        .unwrap();
        CollisionSolution::new(bg, K, Branch::Plus, 0.0)
    }

    #[test]
    fn rest_state_has_zero_rates() {
        let grid = SGrid::periodic(0.0, 1.0, 16);
        let mut st = StrandState::zeros(0.0, grid, 3);
        st.q = vec![vec![-1.0; 16], vec![0.5; 16], vec![2.0; 16]];
        let cfg = SolverConfig::new(Sigma::Minus, 0.1, 1.0, Boundary::Periodic);
        let r = strand_rhs(&st, &cfg, K).unwrap();
        assert_eq!(max_abs(&r.dq) + max_abs(&r.dm) + max_abs(&r.dn), 0.0);
    }

    #[test]
    fn single_peakon_closure() {
        let grid = SGrid::periodic(0.0, std::f64::consts::TAU, 64);
        let mut st = StrandState::zeros(0.0, grid, 1);
        for j in 0..64 {
            let s = grid.node(j);
            st.q[0][j] = s.sin();
            st.m[0][j] = s.cos();
            st.n[0][j] = (2.0 * s).sin();
        }
        let cfg = SolverConfig::new(Sigma::Minus, 0.1, 1.0, Boundary::Periodic);
        let r = strand_rhs(&st, &cfg, K).unwrap();
        let ds_n = stencil::derivative(&st.n[0], grid.ds, true);
        let ds_m = stencil::derivative(&st.m[0], grid.ds, true);
        for j in 0..64 {
            assert_eq!(r.dq[0][j], st.m[0][j] * 0.5);
            assert_eq!(r.dm[0][j], -ds_n[j]);
            assert_eq!(r.dn[0][j], -ds_m[j]);
        }
    }

    #[test]
    fn single_peakon_rates_are_fourth_order() {
        let sol = gaussian_peakon();
        let err = |n: usize| {
            let grid = SGrid::closed(-4.0, 4.0, n);
            let st = init_from_analytic(&sol, 0.3, grid).unwrap();
            let cfg = SolverConfig::new(Sigma::Minus, 0.1, 1.0, Boundary::Clamped);
            let r = strand_rhs(&st, &cfg, K).unwrap();
            let mut e: f64 = 0.0;
            for j in 0..n {
                let exact = sol.sample_dt(0.3, grid.node(j)).unwrap();
                e = e.max((r.dm[0][j] - exact.m[0]).abs()).max((r.dn[0][j] - exact.n[0]).abs());
            }
            e
        };
        let order = (err(81) / err(161)).log2();
        assert!(order > 3.5, "order {order}");
    }

    #[test]
    fn collision_rates_match_exact() {
        let sol = sine_collision();
        let grid = SGrid::periodic(0.0, std::f64::consts::TAU, 256);
        let st = init_from_analytic(&sol, 0.2, grid).unwrap();
        let cfg = SolverConfig::new(Sigma::Minus, 0.1, 1.0, Boundary::Periodic);
        let r = strand_rhs(&st, &cfg, K).unwrap();
        for j in 0..grid.n {
            let exact = sol.sample_dt(0.2, grid.node(j)).unwrap();
            for a in 0..2 {
                assert!((r.dq[a][j] - exact.q[a]).abs() < 1e-12);
                assert!((r.dm[a][j] - exact.m[a]).abs() < 1e-6);
                assert!((r.dn[a][j] - exact.n[a]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constraint_on_exact_data_and_with_n_zeroed() {
        let sol = sine_collision();
        let grid = SGrid::periodic(0.0, std::f64::consts::TAU, 128);
        let mut st = init_from_analytic(&sol, 0.0, grid).unwrap();
        assert!(max_abs(&constraint_residual(&st, Sigma::Minus, K, true)) < 1e-6);
        for row in &mut st.n {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        let res = constraint_residual(&st, Sigma::Minus, K, true);
        for a in 0..2 {
            assert_eq!(res[a], stencil::derivative(&st.q[a], grid.ds, true));
        }
    }

    #[test]
    fn near_collision_reports_site() {
        let grid = SGrid::periodic(0.0, 1.0, 8);
        let mut st = StrandState::zeros(1.5, grid, 2);
        st.q[1][5] = 1e-15;
        st.m = vec![vec![1.0; 8], vec![-1.0; 8]];
        let cfg = SolverConfig::new(Sigma::Minus, 0.1, 1.0, Boundary::Periodic);
        match strand_rhs(&st, &cfg, K) {
            Err(Error::NearCollision { site: Some(site), .. }) => {
                assert!(site.contains("node 0"), "{site}");
                assert!(site.contains("(0, 1)"), "{site}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn init_reports_singular_node() {
        let bg = BackgroundSolution::new(
            Sigma::Minus,
            vec![Term::Traveling {
                direction: Direction::Minus,
                profile: Profile::Affine { slope: 1.0, intercept: 0.0 },
            }],
        )
        .unwrap();
        let sol = CollisionSolution::new(bg, K, Branch::Plus, 0.0);
        let err = init_from_analytic(&sol, 0.0, SGrid::closed(-1.0, 1.0, 11)).unwrap_err();
        assert!(err.to_string().contains("node 5"), "{err}");
    }

    #[test]
    fn init_constant_single_peakon() {
        let bg = BackgroundSolution::new(Sigma::Minus, vec![Term::Constant { value: 1.0 }]).unwrap();
        let st = init_from_analytic(&SinglePeakonSolution::new(bg, K), 0.0, SGrid::closed(0.0, 1.0, 9)).unwrap();
        assert!(st.q[0].iter().all(|&v| v == 1.0));
        assert!(st.m[0].iter().chain(&st.n[0]).all(|&v| v == 0.0));
    }
}
