//! Complexified strand systems in `z = ξ + iη` with real positions `Qᵃ` and
//! complex momenta `M_a`; `M̄_a` takes the role of `N_a`.
//!
//! Both variants share
//!
//! ```text
//! ∂_z Qᵃ  = Σ_b M_b Kᵃᵇ
//! ∂_z M̄_a = ∂_z̄ M_a + Σ_e (K⁻¹)_ae W_e,
//! W_e     = Σ_{b,c} (M̄_b M_c - M_b M̄_c) K'(Qᵉ - Qᶜ)(Kᵉᵇ - Kᶜᵇ)
//! ```
//!
//! and differ in the remaining equation:
//!
//! ```text
//! A:  ∂_z M_a  = -∂_z̄ M̄_a - Σ_c (M_a M_c + M̄_a M̄_c) K'(Qᵃ - Qᶜ)
//! B:  ∂_z M̄_a = -∂_z̄ M_a  - Σ_c (M̄_a M_c + M_a M̄_c) K'(Qᵃ - Qᶜ)
//! ```
//!
//! Variant A reduces to the wave equation `(∂_ξ² - ∂_η²) F(X) = 0` and B to
//! Laplace's equation. Both left sides in B are `∂_z M̄_a`, so B also reports
//! the difference of its two `M̄` residuals as a constraint.
//!
//! Backgrounds are [`BackgroundSolution`]s with `t = η`, `s = ξ`: a `σ = -1`
//! background is a wave solution in `(ξ, η)`, a `σ = +1` one is harmonic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{f_of_x, Branch, CollisionSolution, DEFAULT_SINGULAR_THRESHOLD};
use crate::background::{BackgroundSolution, Sigma};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, DEFAULT_CONDITION_CAP};
use crate::par::{self, Execution};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
}

impl Variant {
    /// Sign of the background equation `h_ηη + σ h_ξξ = 0` in this variant.
    pub fn background_sigma(self) -> Sigma {
        match self {
            Variant::A => Sigma::Minus,
            Variant::B => Sigma::Plus,
        }
    }

    fn check_background(self, bg: &BackgroundSolution) -> Result<()> {
        if bg.sigma() != self.background_sigma() {
            let need = match self {
                Variant::A => "a wave solution (sigma = -1)",
                Variant::B => "a harmonic function (sigma = +1)",
            };
            return Err(Error::invalid(format!("variant {self:?} needs {need}, got sigma = {}", bg.sigma())));
        }
        Ok(())
    }
}

/// Closed uniform grid on `[xi_min, xi_max] × [eta_min, eta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub n_xi: usize,
    pub n_eta: usize,
}

impl ComplexGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_xi < 3 || self.n_eta < 3 {
            return Err(Error::invalid("complex grid needs at least 3 nodes per direction"));
        }
        if !(self.xi_max > self.xi_min && self.eta_max > self.eta_min) {
            return Err(Error::invalid("complex grid ranges must be non-empty"));
        }
        Ok(())
    }

    pub fn d_xi(&self) -> f64 {
        (self.xi_max - self.xi_min) / (self.n_xi - 1) as f64
    }

    pub fn d_eta(&self) -> f64 {
        (self.eta_max - self.eta_min) / (self.n_eta - 1) as f64
    }

    pub fn xi(&self, i: usize) -> f64 {
        self.xi_min + i as f64 * self.d_xi()
    }

    pub fn eta(&self, j: usize) -> f64 {
        self.eta_min + j as f64 * self.d_eta()
    }

    pub fn len(&self) -> usize {
        self.n_xi * self.n_eta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index, `η` fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_eta + j
    }

    /// The same ranges with every interval halved.
    pub fn refined(&self) -> Self {
        Self { n_xi: 2 * self.n_xi - 1, n_eta: 2 * self.n_eta - 1, ..*self }
    }
}

/// Sampled peakon parameters, `q[a][grid.index(i, j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPeakonField {
    pub variant: Variant,
    pub grid: ComplexGrid,
    pub q: Vec<Vec<f64>>,
    pub m: Vec<Vec<Complex64>>,
}

impl ComplexPeakonField {
    pub fn zeros(variant: Variant, grid: ComplexGrid, n_peakons: usize) -> Self {
        Self {
            variant,
            grid,
            q: vec![vec![0.0; grid.len()]; n_peakons],
            m: vec![vec![Complex64::new(0.0, 0.0); grid.len()]; n_peakons],
        }
    }

    pub fn n_peakons(&self) -> usize {
        self.q.len()
    }

    /// Fills every node from `f(ξ, η) -> (Q, M)`.
    pub fn sample<F>(variant: Variant, grid: ComplexGrid, n_peakons: usize, exec: Execution, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<(Vec<f64>, Vec<Complex64>)> + Sync + Send,
    {
        grid.validate()?;
        let rows = par::try_map_range(exec, grid.n_xi, |i| {
            (0..grid.n_eta).map(|j| f(grid.xi(i), grid.eta(j))).collect::<Result<Vec<_>>>()
        })?;
        let mut out = Self::zeros(variant, grid, n_peakons);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, (q, m)) in row.into_iter().enumerate() {
                let k = grid.index(i, j);
                for a in 0..n_peakons {
                    out.q[a][k] = q[a];
                    out.m[a][k] = m[a];
                }
            }
        }
        Ok(out)
    }

    pub fn single_peakon(variant: Variant, bg: &BackgroundSolution, kernel: Kernel, grid: ComplexGrid, exec: Execution) -> Result<Self> {
        variant.check_background(bg)?;
        Self::sample(variant, grid, 1, exec, |xi, eta| {
            let (q, m) = complex_single_peakon_unchecked(bg, kernel, xi, eta);
            Ok((vec![q], vec![m]))
        })
    }

    pub fn collision(c: &ComplexCollision, grid: ComplexGrid, exec: Execution) -> Result<Self> {
        Self::sample(c.variant, grid, 2, exec, |xi, eta| {
            let s = c.state(xi, eta)?;
            Ok((vec![s.q1, s.q2], vec![s.m1, s.m2]))
        })
    }

    /// The `(Q, M) → (-Q, -M)` image.
    pub fn reflected(&self) -> Self {
        Self {
            variant: self.variant,
            grid: self.grid,
            q: self.q.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
            m: self.m.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
        }
    }
}

/// `(Q¹, M₁) = (h, (h_ξ + i h_η) / K₀)`.
pub fn complex_single_peakon(variant: Variant, bg: &BackgroundSolution, kernel: Kernel, xi: f64, eta: f64) -> Result<(f64, Complex64)> {
    variant.check_background(bg)?;
    Ok(complex_single_peakon_unchecked(bg, kernel, xi, eta))
}

fn complex_single_peakon_unchecked(bg: &BackgroundSolution, kernel: Kernel, xi: f64, eta: f64) -> (f64, Complex64) {
    let j = bg.eval(eta, xi);
    (j.h, Complex64::new(j.h_s, j.h_t) / kernel.k0())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexCollisionState {
    pub q1: f64,
    pub q2: f64,
    pub m1: Complex64,
    pub m2: Complex64,
}

/// Peakon-antipeakon pair with `φ = 0`: `X = branch · ln cosh²(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCollision {
    variant: Variant,
    kernel: Kernel,
    inner: CollisionSolution,
}

impl ComplexCollision {
    pub fn new(variant: Variant, background: BackgroundSolution, kernel: Kernel, branch: Branch, center: f64) -> Result<Self> {
        variant.check_background(&background)?;
        Ok(Self::new_unchecked(variant, background, kernel, branch, center))
    }

    /// Skips the background/variant check, for negative tests.
    pub fn new_unchecked(variant: Variant, background: BackgroundSolution, kernel: Kernel, branch: Branch, center: f64) -> Self {
        Self {
            variant,
            kernel,
            inner: CollisionSolution::new(background, kernel, branch, center).with_threshold(DEFAULT_SINGULAR_THRESHOLD),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.inner = self.inner.with_threshold(threshold);
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn background(&self) -> &BackgroundSolution {
        self.inner.background()
    }

    /// `X(ξ, η)`.
    pub fn separation(&self, xi: f64, eta: f64) -> Result<f64> {
        Ok(self.inner.separation_jet(eta, xi)?.h)
    }

    pub fn state(&self, xi: f64, eta: f64) -> Result<ComplexCollisionState> {
        let x = self.inner.separation_jet(eta, xi)?;
        let m1 = Complex64::new(x.h_s, x.h_t) / (2.0 * self.kernel.k0_minus_k(x.h));
        let c = self.inner.center();
        Ok(ComplexCollisionState {
            q1: 0.5 * (c + x.h),
            q2: 0.5 * (c - x.h),
            m1,
            m2: -m1,
        })
    }
}

/// Per-equation residuals at interior nodes, `[peakon][(i-1)·(n_eta-2) + (j-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexResidual {
    pub q_transport: Vec<Vec<Complex64>>,
    pub m_balance: Vec<Vec<Complex64>>,
    pub mbar_balance: Vec<Vec<Complex64>>,
    /// Variant B only: difference of its two `∂_z M̄` residuals.
    pub constraint: Option<Vec<Vec<Complex64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexResidualNorms {
    pub q_transport: f64,
    pub m_balance: f64,
    pub mbar_balance: f64,
    pub constraint: Option<f64>,
}

impl ComplexResidualNorms {
    pub fn components(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("q_transport", self.q_transport),
            ("m_balance", self.m_balance),
            ("mbar_balance", self.mbar_balance),
        ];
        if let Some(c) = self.constraint {
            v.push(("constraint", c));
        }
        v
    }

    pub fn max(&self) -> f64 {
        self.components().iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

fn max_norm(arr: &[Vec<Complex64>]) -> f64 {
    arr.iter().flatten().fold(0.0, |acc, v| acc.max(v.norm()))
}

impl ComplexResidual {
    pub fn norms(&self) -> ComplexResidualNorms {
        ComplexResidualNorms {
            q_transport: max_norm(&self.q_transport),
            m_balance: max_norm(&self.m_balance),
            mbar_balance: max_norm(&self.mbar_balance),
            constraint: self.constraint.as_deref().map(max_norm),
        }
    }
}

struct NodeResidual {
    r1: Vec<Complex64>,
    r2: Vec<Complex64>,
    r3: Vec<Complex64>,
}

/// Residuals of the variant's equations with `∂_z = ∂_ξ + i∂_η` and
/// `∂_z̄ = ∂_ξ - i∂_η` from second-order central differences.
pub fn complex_param_residual(field: &ComplexPeakonField, kernel: Kernel, exec: Execution) -> Result<ComplexResidual> {
    let g = field.grid;
    g.validate()?;
    let np = field.n_peakons();
    let shapes_ok = field.m.len() == np
        && field.q.iter().all(|r| r.len() == g.len())
        && field.m.iter().all(|r| r.len() == g.len());
    if !shapes_ok {
        return Err(Error::invalid("field arrays do not match the grid"));
    }
    let (hx, he) = (2.0 * g.d_xi(), 2.0 * g.d_eta());
    let (ni, nj) = (g.n_xi - 2, g.n_eta - 2);

    let rows = par::try_map_range(exec, ni, |ii| {
        let i = ii + 1;
        (1..=nj)
            .map(|j| {
                let k = g.index(i, j);
                let (kr, kl, ku, kd) = (g.index(i + 1, j), g.index(i - 1, j), g.index(i, j + 1), g.index(i, j - 1));
                let q: Vec<f64> = (0..np).map(|a| field.q[a][k]).collect();
                let m: Vec<Complex64> = (0..np).map(|a| field.m[a][k]).collect();
                let mb: Vec<Complex64> = m.iter().map(|v| v.conj()).collect();
                let gram = kernel.gram(&q);
                let kp = |a: usize, c: usize| if a == c { 0.0 } else { kernel.derivative(q[a] - q[c]) };

                let mut r1 = Vec::with_capacity(np);
                let mut r2 = Vec::with_capacity(np);
                let mut w_re = vec![0.0; np];
                let mut w_im = vec![0.0; np];
                let mut dz_mb = Vec::with_capacity(np);
                let mut dzb_m = Vec::with_capacity(np);
                for a in 0..np {
                    let q_xi = (field.q[a][kr] - field.q[a][kl]) / hx;
                    let q_eta = (field.q[a][ku] - field.q[a][kd]) / he;
                    let mk: Complex64 = (0..np).map(|b| m[b] * gram.entry(a, b)).sum();
                    r1.push(Complex64::new(q_xi, q_eta) - mk);

                    let m_xi = (field.m[a][kr] - field.m[a][kl]) / hx;
                    let m_eta = (field.m[a][ku] - field.m[a][kd]) / he;
                    let dz_m = m_xi + I * m_eta;
                    let dzb = m_xi - I * m_eta;
                    // ∂ of the conjugate is the conjugate of the conjugate derivative.
                    let dz_conj = dzb.conj();
                    let dzb_conj = dz_m.conj();
                    dz_mb.push(dz_conj);
                    dzb_m.push(dzb);

                    let coupling: Complex64 = match field.variant {
                        Variant::A => (0..np).map(|c| (m[a] * m[c] + mb[a] * mb[c]) * kp(a, c)).sum(),
                        Variant::B => (0..np).map(|c| (mb[a] * m[c] + m[a] * mb[c]) * kp(a, c)).sum(),
                    };
                    r2.push(match field.variant {
                        Variant::A => dz_m + dzb_conj + coupling,
                        Variant::B => dz_conj + dzb + coupling,
                    });

                    let mut w = Complex64::new(0.0, 0.0);
                    for c in 0..np {
                        let kac = kp(a, c);
                        if kac == 0.0 {
                            continue;
                        }
                        for b in 0..np {
                            w += (mb[b] * m[c] - m[b] * mb[c]) * kac * (gram.entry(a, b) - gram.entry(c, b));
                        }
                    }
                    w_re[a] = w.re;
                    w_im[a] = w.im;
                }
                let cap = DEFAULT_CONDITION_CAP;
                let site = |e: Error| match e {
                    Error::NearCollision { condition, cap, .. } => Error::NearCollision {
                        condition,
                        cap,
                        site: Some(format!("complex node ({i}, {j})")),
                    },
                    other => other,
                };
                let c_re = gram.solve(&w_re, cap).map_err(site)?;
                let c_im = gram.solve(&w_im, cap).map_err(site)?;
                let r3 = (0..np).map(|a| dz_mb[a] - dzb_m[a] - Complex64::new(c_re[a], c_im[a])).collect();
                Ok(NodeResidual { r1, r2, r3 })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = ComplexResidual {
        q_transport: vec![Vec::with_capacity(ni * nj); np],
        m_balance: vec![Vec::with_capacity(ni * nj); np],
        mbar_balance: vec![Vec::with_capacity(ni * nj); np],
        constraint: (field.variant == Variant::B).then(|| vec![Vec::with_capacity(ni * nj); np]),
    };
    for node in rows.into_iter().flatten() {
        for a in 0..np {
            out.q_transport[a].push(node.r1[a]);
            out.m_balance[a].push(node.r2[a]);
            out.mbar_balance[a].push(node.r3[a]);
            if let Some(c) = out.constraint.as_mut() {
                c[a].push(node.r2[a] - node.r3[a]);
            }
        }
    }
    Ok(out)
}

/// `(∂_ξ² ∓ ∂_η²) F(X)` at interior nodes; `None` where a stencil point hit
/// the collision singularity `h = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResidual {
    pub values: Vec<Option<f64>>,
    pub flagged: Vec<(usize, usize)>,
}

impl ReductionResidual {
    pub fn max(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub fn complex_reduction_residual(c: &ComplexCollision, grid: ComplexGrid, exec: Execution) -> Result<ReductionResidual> {
    grid.validate()?;
    let f: Vec<Option<f64>> = par::map_range(exec, grid.len(), |k| {
        let (i, j) = (k / grid.n_eta, k % grid.n_eta);
        c.separation(grid.xi(i), grid.eta(j)).ok().map(f_of_x)
    });
    let sign = match c.variant {
        Variant::A => -1.0,
        Variant::B => 1.0,
    };
    let (dx2, de2) = (grid.d_xi().powi(2), grid.d_eta().powi(2));
    let mut out = ReductionResidual { values: Vec::new(), flagged: Vec::new() };
    for i in 1..grid.n_xi - 1 {
        for j in 1..grid.n_eta - 1 {
            let at = |i: usize, j: usize| f[grid.index(i, j)];
            let stencil = [at(i, j), at(i + 1, j), at(i - 1, j), at(i, j + 1), at(i, j - 1)];
            match stencil {
                [Some(f0), Some(fr), Some(fl), Some(fu), Some(fd)] => {
                    let fxx = ((fr - f0) + (fl - f0)) / dx2;
                    let fee = ((fu - f0) + (fd - f0)) / de2;
                    out.values.push(Some(fxx + sign * fee));
                }
                _ => {
                    out.values.push(None);
                    out.flagged.push((i, j));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{Direction, Part, Profile, Term, Trig};
    use crate::ch::{ch_rhs, ChState};
    use approx::assert_relative_eq;

    const K: Kernel = Kernel::Peakon;
    const SEQ: Execution = Execution::Sequential;

    fn bg(sigma: Sigma, terms: Vec<Term>) -> BackgroundSolution {
        BackgroundSolution::new(sigma, terms).unwrap()
    }

    fn saddle() -> BackgroundSolution {
        // ξ² - η² = -Re((η + iξ)²)
        bg(Sigma::Plus, vec![Term::HarmonicPoly { degree: 2, part: Part::Re, coefficient: -1.0 }])
    }

    fn wave() -> BackgroundSolution {
        bg(
            Sigma::Minus,
            vec![
                Term::Constant { value: 1.5 },
                Term::Traveling {
                    direction: Direction::Minus,
                    profile: Profile::Sinusoid { amplitude: 0.3, k: 1.0, phase: 0.0 },
                },
            ],
        )
    }

    fn harmonic() -> BackgroundSolution {
        bg(
            Sigma::Plus,
            vec![Term::Constant { value: 1.5 }, Term::PlaneHarmonic { amplitude: 0.3, k: 1.0, trig: Trig::Cos }],
        )
    }

    fn grid(n: usize) -> ComplexGrid {
        ComplexGrid { xi_min: 0.0, xi_max: 1.0, eta_min: -0.3, eta_max: 0.5, n_xi: n, n_eta: n }
    }

    #[test]
    fn single_peakon_examples() {
        let (q, m) = complex_single_peakon(Variant::B, &saddle(), K, 1.0, 1.0).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(m, Complex64::new(4.0, -4.0));

        let flat = bg(Sigma::Plus, vec![Term::Constant { value: 2.0 }]);
        assert_eq!(complex_single_peakon(Variant::B, &flat, K, 0.3, 0.1).unwrap().1, Complex64::new(0.0, 0.0));

        // sin(ξ - η)
        let sine = bg(
            Sigma::Minus,
            vec![Term::Traveling {
                direction: Direction::Minus,
                profile: Profile::Sinusoid { amplitude: 1.0, k: 1.0, phase: 0.0 },
            }],
        );
        let (_, m) = complex_single_peakon(Variant::A, &sine, K, 0.0, 0.0).unwrap();
        assert_eq!(m, Complex64::new(2.0, -2.0));
    }

    #[test]
    fn mismatched_background() {
        assert!(complex_single_peakon(Variant::A, &saddle(), K, 0.0, 0.0).is_err());
        assert!(ComplexCollision::new(Variant::B, wave(), K, Branch::Plus, 0.0).is_err());
    }

    #[test]
    fn collision_examples() {
        let flat = bg(Sigma::Plus, vec![Term::Constant { value: 1.0 }]);
        let c = ComplexCollision::new(Variant::B, flat, K, Branch::Plus, 0.0).unwrap();
        let s = c.state(0.2, 0.7).unwrap();
        assert_relative_eq!(s.q1, 0.433_781, max_relative = 1e-6);
        assert_eq!(s.q1, -s.q2);
        assert_eq!(s.m1, Complex64::new(0.0, 0.0));

        let lin = bg(Sigma::Plus, vec![Term::Monomial { coefficient: 1.0, t_pow: 0, s_pow: 1 }]);
        let c = ComplexCollision::new(Variant::B, lin, K, Branch::Minus, 0.0).unwrap();
        let s = c.state(0.8, 0.3).unwrap();
        assert_eq!(s.m1.im, 0.0);
        assert_eq!(s.m1 + s.m2, Complex64::new(0.0, 0.0));
        let d = 2.0 * K.k0_minus_k(-2.0 * ln_cosh_of(0.8));
        assert_relative_eq!(s.m1.re, -2.0 * 0.8f64.tanh() / d, max_relative = 1e-14);
        assert!(c.state(0.0, 0.3).is_err());
    }

    fn ln_cosh_of(x: f64) -> f64 {
        crate::analytic::ln_cosh(x)
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let f = ComplexPeakonField::zeros(Variant::B, grid(9), 2);
        let r = complex_param_residual(&f, K, SEQ);
        // Coincident zero positions make the Gram matrix singular.
        assert!(matches!(r, Err(Error::NearCollision { .. })));
        let f = ComplexPeakonField::zeros(Variant::A, grid(9), 1);
        assert_eq!(complex_param_residual(&f, K, SEQ).unwrap().norms().max(), 0.0);
    }

    fn order(c: f64, f: f64) -> f64 {
        (c / f).log2()
    }

    #[test]
    fn single_peakon_b_converges() {
        let res = |n| {
            let f = ComplexPeakonField::single_peakon(Variant::B, &harmonic(), K, grid(n), SEQ).unwrap();
            complex_param_residual(&f, K, SEQ).unwrap().norms()
        };
        let (c, f) = (res(21), res(41));
        for ((name, ec), (_, ef)) in c.components().into_iter().zip(f.components()) {
            assert!(ec < 1e-12 || order(ec, ef) > 1.9, "{name}: {ec:e} {ef:e}");
        }
        assert!(c.max() > 1e-6);
    }

    #[test]
    fn collision_a_converges() {
        let c = ComplexCollision::new(Variant::A, wave(), K, Branch::Plus, 0.2).unwrap();
        let res = |n| complex_param_residual(&ComplexPeakonField::collision(&c, grid(n), SEQ).unwrap(), K, SEQ).unwrap().norms();
        let (rc, rf) = (res(21), res(41));
        for ((name, ec), (_, ef)) in rc.components().into_iter().zip(rf.components()) {
            assert!(ec < 1e-12 || order(ec, ef) > 1.9, "{name}: {ec:e} {ef:e}");
        }
    }

    #[test]
    fn collision_b_converges_with_constraint() {
        let c = ComplexCollision::new(Variant::B, harmonic(), K, Branch::Minus, 0.0).unwrap();
        let res = |n| complex_param_residual(&ComplexPeakonField::collision(&c, grid(n), SEQ).unwrap(), K, SEQ).unwrap().norms();
        let (rc, rf) = (res(21), res(41));
        assert!(rc.constraint.is_some());
        for ((name, ec), (_, ef)) in rc.components().into_iter().zip(rf.components()) {
            assert!(order(ec, ef) > 1.9, "{name}: {ec:e} {ef:e}");
        }
    }

    #[test]
    fn wrong_variant_residual_is_order_one() {
        let c = ComplexCollision::new_unchecked(Variant::A, harmonic(), K, Branch::Plus, 0.0);
        let r = complex_param_residual(&ComplexPeakonField::collision(&c, grid(41), SEQ).unwrap(), K, SEQ).unwrap();
        assert!(r.norms().m_balance > 1e-2, "{:?}", r.norms());
    }

    #[test]
    fn reflection_negates_residuals() {
        for c in [
            ComplexCollision::new(Variant::A, wave(), K, Branch::Plus, 0.2).unwrap(),
            ComplexCollision::new(Variant::B, harmonic(), K, Branch::Plus, -0.1).unwrap(),
        ] {
            let f = ComplexPeakonField::collision(&c, grid(21), SEQ).unwrap();
            let r = complex_param_residual(&f, K, SEQ).unwrap();
            let p = complex_param_residual(&f.reflected(), K, SEQ).unwrap();
            let pairs = [
                (&r.q_transport, &p.q_transport),
                (&r.m_balance, &p.m_balance),
                (&r.mbar_balance, &p.mbar_balance),
            ];
            for (x, y) in pairs {
                for (u, v) in x.iter().flatten().zip(y.iter().flatten()) {
                    assert!((u + v).norm() < 1e-12, "{u} {v}");
                }
            }
        }
    }

    #[test]
    fn real_eta_constant_field_reduces_to_ch() {
        let g = ComplexGrid { xi_min: 0.0, xi_max: 1.0, eta_min: 0.0, eta_max: 0.2, n_xi: 11, n_eta: 5 };
        let q_of = |xi: f64| vec![-1.0 + 0.3 * xi * xi, 0.8 + xi.sin()];
        let m_of = |xi: f64| vec![1.0 + 0.5 * xi, -0.4 * xi.cos()];
        let f = ComplexPeakonField::sample(Variant::A, g, 2, SEQ, |xi, _| {
            Ok((q_of(xi), m_of(xi).into_iter().map(|v| Complex64::new(v, 0.0)).collect()))
        })
        .unwrap();
        let r = complex_param_residual(&f, K, SEQ).unwrap();
        let h = 2.0 * g.d_xi();
        for i in 1..g.n_xi - 1 {
            let (xi, xr, xl) = (g.xi(i), g.xi(i + 1), g.xi(i - 1));
            let (dq, dm) = ch_rhs(&ChState::new(q_of(xi), m_of(xi)).unwrap(), K);
            for j in 1..g.n_eta - 1 {
                let k = (i - 1) * (g.n_eta - 2) + (j - 1);
                for a in 0..2 {
                    let ch_q = (q_of(xr)[a] - q_of(xl)[a]) / h - dq[a];
                    let ch_m = (m_of(xr)[a] - m_of(xl)[a]) / h - dm[a];
                    assert!((r.q_transport[a][k] - ch_q).norm() < 1e-13);
                    assert!((r.m_balance[a][k] - 2.0 * ch_m).norm() < 1e-13);
                    assert!(r.mbar_balance[a][k].norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn reduction_converges() {
        let fine = |c: &ComplexCollision, n| complex_reduction_residual(c, grid(n), SEQ).unwrap().max();
        for c in [
            ComplexCollision::new(Variant::A, wave(), K, Branch::Plus, 0.0).unwrap(),
            ComplexCollision::new(Variant::B, harmonic(), K, Branch::Minus, 0.0).unwrap(),
        ] {
            let (ec, ef) = (fine(&c, 21), fine(&c, 41));
            assert!(order(ec, ef) > 1.9, "{:?}: {ec:e} {ef:e}", c.variant());
        }
    }

    #[test]
    fn reduction_exact_cases() {
        let flat = bg(Sigma::Plus, vec![Term::Constant { value: 1.0 }]);
        let c = ComplexCollision::new(Variant::B, flat, K, Branch::Plus, 0.0).unwrap();
        assert_eq!(complex_reduction_residual(&c, grid(11), SEQ).unwrap().max(), 0.0);

        // F(X) = 2√2 h, so a quadratic background is differenced exactly.
        let quad = bg(
            Sigma::Plus,
            vec![
                Term::Constant { value: 1.0 },
                Term::HarmonicPoly { degree: 2, part: Part::Re, coefficient: -0.2 },
            ],
        );
        let c = ComplexCollision::new(Variant::B, quad.clone(), K, Branch::Plus, 0.0).unwrap();
        assert!(complex_reduction_residual(&c, grid(21), SEQ).unwrap().max() < 1e-9);

        let wrong = ComplexCollision::new_unchecked(Variant::A, quad, K, Branch::Plus, 0.0);
        let r = complex_reduction_residual(&wrong, grid(21), SEQ).unwrap().max();
        assert!((r - 2.0 * std::f64::consts::SQRT_2 * 0.2 * 4.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn singular_nodes_are_flagged() {
        let lin = bg(Sigma::Plus, vec![Term::Monomial { coefficient: 1.0, t_pow: 0, s_pow: 1 }]);
        let c = ComplexCollision::new(Variant::B, lin, K, Branch::Plus, 0.0).unwrap();
        let g = ComplexGrid { xi_min: -1.0, xi_max: 1.0, eta_min: 0.0, eta_max: 1.0, n_xi: 11, n_eta: 5 };
        let r = complex_reduction_residual(&c, g, SEQ).unwrap();
        assert!(!r.flagged.is_empty());
        assert!(r.flagged.iter().all(|&(i, _)| (4..=6).contains(&i)));
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = ComplexCollision::new(Variant::A, wave(), K, Branch::Plus, 0.2).unwrap();
        let f = ComplexPeakonField::collision(&c, grid(101), Execution::Parallel).unwrap();
        assert_eq!(f, ComplexPeakonField::collision(&c, grid(101), SEQ).unwrap());
        assert_eq!(complex_param_residual(&f, K, Execution::Parallel).unwrap(), complex_param_residual(&f, K, SEQ).unwrap());
    }
}
