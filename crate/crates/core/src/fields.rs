//! Continuum fields rebuilt from peakon parameters, and the zero-curvature
//! relation `v_t - u_s + u v_x - v u_x = 0` checked by finite differences.

use serde::Serialize;

use crate::analytic::{PeakonSample, StrandSource};
use crate::background::Sigma;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::solver::StrandState;

/// A weighted Dirac mass at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointMass {
    pub position: f64,
    pub weight: f64,
}

/// `u`, `v` on an `x` grid plus the singular momenta `m`, `n` as point masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSnapshot {
    pub x_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<PointMass>,
    pub n: Vec<PointMass>,
}

/// `u(x) = Σ M_a K(x - Qᵃ)` and `v(x) = σ Σ N_a K(x - Qᵃ)`.
fn superpose(kernel: Kernel, sigma: f64, p: &PeakonSample, x: f64) -> (f64, f64) {
    let mut u = 0.0;
    let mut v = 0.0;
    for a in 0..p.q.len() {
        let k = kernel.value(x - p.q[a]);
        u += p.m[a] * k;
        v += p.n[a] * k;
    }
    (u, sigma * v)
}

/// Fields at s-node `j` of `state`.
pub fn reconstruct(state: &StrandState, j: usize, x_grid: &[f64], kernel: Kernel, sigma: Sigma) -> Result<FieldSnapshot> {
    if j >= state.grid.n {
        return Err(Error::invalid(format!("node {j} out of range for {} nodes", state.grid.n)));
    }
    let p = PeakonSample {
        q: StrandState::column(&state.q, j),
        m: StrandState::column(&state.m, j),
        n: StrandState::column(&state.n, j),
    };
    Ok(snapshot(&p, x_grid, kernel, sigma))
}

/// Fields of a single parameter sample.
pub fn snapshot(p: &PeakonSample, x_grid: &[f64], kernel: Kernel, sigma: Sigma) -> FieldSnapshot {
    let (u, v) = x_grid.iter().map(|&x| superpose(kernel, sigma.value(), p, x)).unzip();
    let masses = |w: &[f64]| {
        p.q.iter()
            .zip(w)
            .map(|(&position, &weight)| PointMass { position, weight })
            .collect()
    };
    FieldSnapshot {
        x_grid: x_grid.to_vec(),
        u,
        v,
        m: masses(&p.m),
        n: masses(&p.n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub t: f64,
    pub s: f64,
    pub x: f64,
}

/// Residual at one probe; `None` when a peak came within `3h` of the probe
/// and the stencil would straddle a derivative jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResidual {
    pub probe: Probe,
    pub residual: Option<f64>,
}

/// `v_t - u_s + u v_x - v u_x` at each probe by second-order central
/// differences with spacing `h` in `t`, `s` and `x`.
pub fn zero_curvature_residual(
    source: &dyn StrandSource,
    probes: &[Probe],
    h: f64,
    kernel: Kernel,
) -> Result<Vec<ProbeResidual>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("stencil spacing must be positive, got {h}")));
    }
    let sigma = source.sigma().value();
    probes
        .iter()
        .map(|&probe| {
            let Probe { t, s, x } = probe;
            let samples = [
                source.sample(t, s)?,
                source.sample(t + h, s)?,
                source.sample(t - h, s)?,
                source.sample(t, s + h)?,
                source.sample(t, s - h)?,
            ];
            let near = samples.iter().flat_map(|p| &p.q).any(|&q| (x - q).abs() <= 3.0 * h);
            if near {
                return Ok(ProbeResidual { probe, residual: None });
            }
            let f = |i: usize, x: f64| superpose(kernel, sigma, &samples[i], x);
            let (u, v) = f(0, x);
            let (u_r, v_r) = f(0, x + h);
            let (u_l, v_l) = f(0, x - h);
            let u_x = (u_r - u_l) / (2.0 * h);
            let v_x = (v_r - v_l) / (2.0 * h);
            let v_t = (f(1, x).1 - f(2, x).1) / (2.0 * h);
            let u_s = (f(3, x).0 - f(4, x).0) / (2.0 * h);
            Ok(ProbeResidual { probe, residual: Some(v_t - u_s + u * v_x - v * u_x) })
        })
        .collect()
}
