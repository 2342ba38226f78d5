//! Exact peakon solutions of the strand parameter equations.
//!
//! * [`SinglePeakonSolution`]: `Q¹ = h`, `M₁ = h_t / K₀`, `N₁ = σ h_s / K₀`
//!   for any background `h`.
//! * [`CollisionSolution`]: the antisymmetric peakon-antipeakon pair. The
//!   separation `X = Q¹ - Q²` linearizes under
//!   `F(X) = 2√2 sign(X) arcosh(e^{|X|/2})`, which gives
//!   `X = ±ln cosh²(h)` for any background `h`.
//! * [`potentials_residual`]: residual of the coupled equations for the two
//!   potentials `(X, φ)` of a general two-peakon solution.

use serde::{Deserialize, Serialize};

use crate::background::{BackgroundSolution, Jet2, Sigma};
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Default `|h|` below which collision momenta are refused.
pub const DEFAULT_SINGULAR_THRESHOLD: f64 = 1e-6;

/// Positions and momenta of every peakon at one `(t, s)` point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakonSample {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

impl PeakonSample {
    pub fn zeros(n_peakons: usize) -> Self {
        Self {
            q: vec![0.0; n_peakons],
            m: vec![0.0; n_peakons],
            n: vec![0.0; n_peakons],
        }
    }
}

/// Anything that can report strand parameters at an arbitrary `(t, s)`.
pub trait StrandSource {
    fn sigma(&self) -> Sigma;
    fn n_peakons(&self) -> usize;
    fn sample(&self, t: f64, s: f64) -> Result<PeakonSample>;
}

/// A closed-form solution: samples plus exact time derivatives.
pub trait AnalyticSolution: StrandSource + Sync {
    fn kernel(&self) -> Kernel;
    /// `(∂ₜQ, ∂ₜM, ∂ₜN)` at `(t, s)`.
    fn sample_dt(&self, t: f64, s: f64) -> Result<PeakonSample>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn value(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl TryFrom<i64> for Branch {
    type Error = String;
    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Branch::Plus),
            -1 => Ok(Branch::Minus),
            other => Err(format!("branch must be +1 or -1, got {other}")),
        }
    }
}

impl From<Branch> for i64 {
    fn from(b: Branch) -> i64 {
        match b {
            Branch::Plus => 1,
            Branch::Minus => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinglePeakonSolution {
    background: BackgroundSolution,
    kernel: Kernel,
}

impl SinglePeakonSolution {
    pub fn new(background: BackgroundSolution, kernel: Kernel) -> Self {
        Self { background, kernel }
    }

    pub fn background(&self) -> &BackgroundSolution {
        &self.background
    }

    /// `(Q¹, M₁, N₁)`.
    pub fn state(&self, t: f64, s: f64) -> (f64, f64, f64) {
        let j = self.background.eval(t, s);
        let k0 = self.kernel.k0();
        (j.h, j.h_t / k0, self.sigma().value() * j.h_s / k0)
    }
}

impl StrandSource for SinglePeakonSolution {
    fn sigma(&self) -> Sigma {
        self.background.sigma()
    }

    fn n_peakons(&self) -> usize {
        1
    }

    fn sample(&self, t: f64, s: f64) -> Result<PeakonSample> {
        let (q, m, n) = self.state(t, s);
        Ok(PeakonSample { q: vec![q], m: vec![m], n: vec![n] })
    }
}

impl AnalyticSolution for SinglePeakonSolution {
    fn kernel(&self) -> Kernel {
        self.kernel
    }

    fn sample_dt(&self, t: f64, s: f64) -> Result<PeakonSample> {
        let j = self.background.eval(t, s);
        let k0 = self.kernel.k0();
        Ok(PeakonSample {
            q: vec![j.h_t],
            m: vec![j.h_tt / k0],
            n: vec![self.sigma().value() * j.h_ts / k0],
        })
    }
}

/// Peakon-antipeakon state at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CollisionState {
    pub q1: f64,
    pub q2: f64,
    pub m1: f64,
    pub m2: f64,
    pub n1: f64,
    pub n2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSolution {
    background: BackgroundSolution,
    kernel: Kernel,
    branch: Branch,
    center: f64,
    threshold: f64,
}

impl CollisionSolution {
    pub fn new(background: BackgroundSolution, kernel: Kernel, branch: Branch, center: f64) -> Self {
        Self {
            background,
            kernel,
            branch,
            center,
            threshold: DEFAULT_SINGULAR_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn background(&self) -> &BackgroundSolution {
        &self.background
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Exact jet of `X = branch · ln cosh²(h)`.
    pub fn separation_jet(&self, t: f64, s: f64) -> Result<Jet2> {
        let h = self.background.eval(t, s);
        if !(h.h.abs() >= self.threshold) {
            return Err(Error::CollisionSingularity {
                h: h.h.abs(),
                threshold: self.threshold,
                t,
                s,
            });
        }
        Ok(log_cosh_sq_jet(h, self.branch.value()))
    }

    pub fn state(&self, t: f64, s: f64) -> Result<CollisionState> {
        let x = self.separation_jet(t, s)?;
        let d = 2.0 * self.kernel.k0_minus_k(x.h);
        let m1 = x.h_t / d;
        let n1 = self.sigma().value() * x.h_s / d;
        Ok(CollisionState {
            q1: 0.5 * (self.center + x.h),
            q2: 0.5 * (self.center - x.h),
            m1,
            m2: -m1,
            n1,
            n2: -n1,
        })
    }
}

/// Jet of `b · ln cosh²(h)` from the jet of `h`.
pub(crate) fn log_cosh_sq_jet(h: Jet2, branch: f64) -> Jet2 {
    let th = h.h.tanh();
    let sech2 = 1.0 - th * th;
    let c = 2.0 * branch;
    Jet2 {
        h: c * ln_cosh(h.h),
        h_t: c * th * h.h_t,
        h_s: c * th * h.h_s,
        h_tt: c * (sech2 * h.h_t * h.h_t + th * h.h_tt),
        h_ss: c * (sech2 * h.h_s * h.h_s + th * h.h_ss),
        h_ts: c * (sech2 * h.h_t * h.h_s + th * h.h_ts),
    }
}

impl StrandSource for CollisionSolution {
    fn sigma(&self) -> Sigma {
        self.background.sigma()
    }

    fn n_peakons(&self) -> usize {
        2
    }

    fn sample(&self, t: f64, s: f64) -> Result<PeakonSample> {
        let c = self.state(t, s)?;
        Ok(PeakonSample {
            q: vec![c.q1, c.q2],
            m: vec![c.m1, c.m2],
            n: vec![c.n1, c.n2],
        })
    }
}

impl AnalyticSolution for CollisionSolution {
    fn kernel(&self) -> Kernel {
        self.kernel
    }

    fn sample_dt(&self, t: f64, s: f64) -> Result<PeakonSample> {
        let x = self.separation_jet(t, s)?;
        let d = self.kernel.k0_minus_k(x.h);
        let kp = self.kernel.derivative(x.h);
        // ∂ₜ[X_t / 2D] with dD/dX = -K'(X).
        let m1_t = x.h_tt / (2.0 * d) + kp * x.h_t * x.h_t / (2.0 * d * d);
        let n1_t = self.sigma().value() * (x.h_ts / (2.0 * d) + kp * x.h_s * x.h_t / (2.0 * d * d));
        Ok(PeakonSample {
            q: vec![0.5 * x.h_t, -0.5 * x.h_t],
            m: vec![m1_t, -m1_t],
            n: vec![n1_t, -n1_t],
        })
    }
}

/// `ln cosh x`, accurate for small and large `|x|`.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        let sh = (0.5 * a).sinh();
        (2.0 * sh * sh).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }
}

/// `F(X) = 2√2 sign(X) arcosh(e^{|X|/2})`, normalized so that `F(0) = 0`.
pub fn f_of_x(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = 0.5 * x.abs();
    // arcosh(eᵃ) = a + ln(1 + √(1 - e^{-2a}))
    let ac = a + (-(-2.0 * a).exp_m1()).sqrt().ln_1p();
    2.0 * std::f64::consts::SQRT_2 * x.signum() * ac
}

/// Inverse of [`f_of_x`]: `sign(y) ln cosh²(y / 2√2)`.
pub fn f_inverse(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    y.signum() * 2.0 * ln_cosh(y / (2.0 * std::f64::consts::SQRT_2))
}

/// Default absolute target for [`f_quadrature`].
pub const F_QUADRATURE_TARGET: f64 = 1e-12;

/// `√2 ∫₀^X (1 - e^{-|Y|})^{-1/2} dY` by double-exponential quadrature.
///
/// The integrand has a `Y^{-1/2}` singularity at the origin, which the
/// tanh-sinh rule handles without a change of variables.
pub fn f_quadrature(x: f64, target: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("F quadrature argument must be finite, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // y = u² removes the inverse square root at the origin.
    let integrand = |u: f64| {
        let d = -(-u * u).exp_m1();
        if d > 0.0 {
            2.0 * u / d.sqrt()
        } else {
            2.0
        }
    };
    let out = quadrature::double_exponential::integrate(integrand, 0.0, x.abs().sqrt(), target);
    if !(out.error_estimate <= target) {
        return Err(Error::Quadrature {
            achieved: out.error_estimate,
            target,
        });
    }
    Ok(x.signum() * std::f64::consts::SQRT_2 * out.integral)
}

/// Jets of the two potentials of a general two-peakon solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PotentialPair {
    pub x: Jet2,
    pub phi: Jet2,
}

/// `(M₁, M₂, N₁, N₂)` from the potentials `X` and `φ`.
pub fn potentials_to_momenta(p: &PotentialPair, sigma: Sigma, kernel: Kernel) -> Result<[f64; 4]> {
    let d = 2.0 * nonzero_gap(p.x.h, kernel)?;
    let sg = sigma.value();
    let (xt, xs) = (p.x.h_t / d, sg * p.x.h_s / d);
    let (ps, pt) = (0.5 * p.phi.h_s, 0.5 * p.phi.h_t);
    Ok([xt + ps, -xt + ps, xs - pt, -xs - pt])
}

/// Residuals `(r_φ, r_X)` of the determining equations for the potentials.
///
/// ```text
/// r_φ = (φ_tt + σφ_ss) + K'/(K₀+K) (X_t φ_t + σ X_s φ_s)
/// r_X = (X_tt + σX_ss) + K'/(2(K₀-K)) (X_t² + σX_s²) + ½K'(K₀-K)(φ_s² + σφ_t²)
/// ```
pub fn potentials_residual(x: &Jet2, phi: &Jet2, sigma: Sigma, kernel: Kernel) -> Result<(f64, f64)> {
    let gap = nonzero_gap(x.h, kernel)?;
    let sg = sigma.value();
    let k = kernel.value(x.h);
    let kp = kernel.derivative(x.h);
    let r_phi = (phi.h_tt + sg * phi.h_ss) + kp / (kernel.k0() + k) * (x.h_t * phi.h_t + sg * x.h_s * phi.h_s);
    let r_x = (x.h_tt + sg * x.h_ss)
        + kp / (2.0 * gap) * (x.h_t * x.h_t + sg * x.h_s * x.h_s)
        + 0.5 * kp * gap * (phi.h_s * phi.h_s + sg * phi.h_t * phi.h_t);
    Ok((r_phi, r_x))
}

fn nonzero_gap(x: f64, kernel: Kernel) -> Result<f64> {
    let gap = kernel.k0_minus_k(x);
    if gap > 0.0 && gap.is_finite() {
        Ok(gap)
    } else {
        Err(Error::CollisionSingularity {
            h: x.abs(),
            threshold: 0.0,
            t: f64::NAN,
            s: f64::NAN,
        })
    }
}
