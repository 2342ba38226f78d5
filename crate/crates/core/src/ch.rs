//! Camassa–Holm peakon ODEs: the s-independent, `N ≡ 0` limit of the strand
//! equations, with energy `H = ½ Σ M_a M_b Kᵃᵇ` and momentum `P = Σ M_a`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Kernel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChState {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub t: f64,
}

impl ChState {
    pub fn new(q: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        if q.len() != m.len() {
            return Err(Error::invalid(format!("{} positions but {} momenta", q.len(), m.len())));
        }
        if q.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(Error::invalid("CH state must be finite"));
        }
        Ok(Self { q, m, t: 0.0 })
    }
}

/// `dQᵃ = Σ_b M_b Kᵃᵇ`, `dM_a = -Σ_c M_a M_c K'(Qᵃ - Qᶜ)`.
pub fn ch_rhs(state: &ChState, kernel: Kernel) -> (Vec<f64>, Vec<f64>) {
    let (q, m) = (&state.q, &state.m);
    let np = q.len();
    let dq = (0..np).map(|a| (0..np).map(|b| m[b] * kernel.value(q[a] - q[b])).sum()).collect();
    let dm = (0..np)
        .map(|a| -(0..np).map(|c| m[a] * m[c] * kernel.derivative(q[a] - q[c])).sum::<f64>())
        .collect();
    (dq, dm)
}

/// `(H, P)`.
pub fn ch_invariants(state: &ChState, kernel: Kernel) -> (f64, f64) {
    let (q, m) = (&state.q, &state.m);
    let mut h = 0.0;
    for a in 0..q.len() {
        for b in 0..q.len() {
            h += m[a] * m[b] * kernel.value(q[a] - q[b]);
        }
    }
    (0.5 * h, m.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChRecord {
    pub t: f64,
    pub energy: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChTrajectory {
    pub states: Vec<ChState>,
    pub records: Vec<ChRecord>,
    pub dt: f64,
}

impl ChTrajectory {
    pub fn last(&self) -> &ChState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// `max_t |H(t) - H(0)| / |H(0)|`, absolute when `H(0) = 0`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.records[0].energy;
        let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
        self.records.iter().map(|r| (r.energy - h0).abs() / scale).fold(0.0, f64::max)
    }

    /// `max_t |P(t) - P(0)|`.
    pub fn momentum_drift(&self) -> f64 {
        let p0 = self.records[0].momentum;
        self.records.iter().map(|r| (r.momentum - p0).abs()).fold(0.0, f64::max)
    }

    /// Smallest pairwise `|Qᵃ - Qᵇ|` over the run; infinite for one peakon.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for st in &self.states {
            for a in 0..st.q.len() {
                for b in a + 1..st.q.len() {
                    best = best.min((st.q[a] - st.q[b]).abs());
                }
            }
        }
        best
    }
}

/// Classical RK4 from `initial.t` to `initial.t + t_final`, storing every
/// `output_every`-th state (and the last). `H`, `P` are recorded every step.
pub fn ch_evolve(
    initial: &ChState,
    dt: f64,
    t_final: f64,
    kernel: Kernel,
    output_every: usize,
    blowup_limit: f64,
) -> Result<ChTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::invalid(format!("T must be non-negative, got {t_final}")));
    }
    let steps = (t_final / dt).ceil() as usize;
    let h = if steps == 0 { dt } else { t_final / steps as f64 };
    let record = |st: &ChState| {
        let (energy, momentum) = ch_invariants(st, kernel);
        ChRecord { t: st.t, energy, momentum }
    };
    let axpy = |st: &ChState, c: f64, dq: &[f64], dm: &[f64]| ChState {
        q: st.q.iter().zip(dq).map(|(q, d)| q + c * d).collect(),
        m: st.m.iter().zip(dm).map(|(m, d)| m + c * d).collect(),
        t: st.t + c,
    };

    let mut cur = initial.clone();
    let mut out = ChTrajectory { states: vec![cur.clone()], records: vec![record(&cur)], dt: h };
    for step in 1..=steps {
        let (q1, m1) = ch_rhs(&cur, kernel);
        let (q2, m2) = ch_rhs(&axpy(&cur, 0.5 * h, &q1, &m1), kernel);
        let (q3, m3) = ch_rhs(&axpy(&cur, 0.5 * h, &q2, &m2), kernel);
        let (q4, m4) = ch_rhs(&axpy(&cur, h, &q3, &m3), kernel);
        let combine = |y: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
            (0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
        };
        let next = ChState {
            q: combine(&cur.q, &q1, &q2, &q3, &q4),
            m: combine(&cur.m, &m1, &m2, &m3, &m4),
            t: initial.t + step as f64 * h,
        };
        if next.q.iter().chain(&next.m).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("CH state at t = {}", next.t)));
        }
        if next.q.iter().chain(&next.m).any(|v| v.abs() > blowup_limit) {
            return Err(Error::OdeBlowUp { t: next.t, limit: blowup_limit });
        }
        out.records.push(record(&next));
        if step % output_every.max(1) == 0 || step == steps {
            out.states.push(next.clone());
        }
        cur = next;
    }
    Ok(out)
}
