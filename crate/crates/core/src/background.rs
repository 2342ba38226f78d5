//! Closed-form solutions `h(t, s)` of `(∂ₛ² + σ∂ₜ²) h = 0`.
//!
//! For `σ = +1` these are harmonic functions, for `σ = -1` solutions of the
//! 1+1 wave equation. Every term carries its exact first and second partials
//! so analytic solutions built on top of a background have exact jets.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the second term in the strand Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sigma {
    /// Laplace-type parameter equations.
    Plus,
    /// Wave-type parameter equations.
    Minus,
}

impl Sigma {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sigma::Plus => 1.0,
            Sigma::Minus => -1.0,
        }
    }
}

impl TryFrom<i64> for Sigma {
    type Error = String;

    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sigma::Plus),
            -1 => Ok(Sigma::Minus),
            other => Err(format!("sigma must be +1 or -1, got {other}")),
        }
    }
}

impl From<Sigma> for i64 {
    fn from(s: Sigma) -> i64 {
        match s {
            Sigma::Plus => 1,
            Sigma::Minus => -1,
        }
    }
}

impl std::fmt::Display for Sigma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sigma::Plus => "+1",
            Sigma::Minus => "-1",
        })
    }
}

/// Value and partial derivatives up to second order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub h: f64,
    pub h_t: f64,
    pub h_s: f64,
    pub h_tt: f64,
    pub h_ss: f64,
    pub h_ts: f64,
}

impl Jet2 {
    pub fn constant(h: f64) -> Self {
        Self { h, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        [self.h, self.h_t, self.h_s, self.h_tt, self.h_ss, self.h_ts]
            .iter()
            .all(|v| v.is_finite())
    }

    /// `h_ss + σ h_tt`.
    pub fn linear_residual(&self, sigma: Sigma) -> f64 {
        self.h_ss + sigma.value() * self.h_tt
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            h: self.h + o.h,
            h_t: self.h_t + o.h_t,
            h_s: self.h_s + o.h_s,
            h_tt: self.h_tt + o.h_tt,
            h_ss: self.h_ss + o.h_ss,
            h_ts: self.h_ts + o.h_ts,
        }
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        Jet2 {
            h: self * j.h,
            h_t: self * j.h_t,
            h_s: self * j.h_s,
            h_tt: self * j.h_tt,
            h_ss: self * j.h_ss,
            h_ts: self * j.h_ts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// Which characteristic a traveling profile rides on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `f(s - t)`
    Minus,
    /// `f(s + t)`
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `A sin(k ξ + φ₀)`
    Sinusoid {
        amplitude: f64,
        k: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `A exp(-(ξ - ξ₀)² / w²)`
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl Profile {
    /// `(f, f', f'')` at `xi`.
    fn eval(&self, xi: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Constant { value } => (value, 0.0, 0.0),
            Profile::Affine { slope, intercept } => (slope * xi + intercept, slope, 0.0),
            Profile::Sinusoid { amplitude, k, phase } => {
                let (sn, cs) = (k * xi + phase).sin_cos();
                (amplitude * sn, amplitude * k * cs, -amplitude * k * k * sn)
            }
            Profile::Gaussian { amplitude, center, width } => {
                let d = (xi - center) / width;
                let g = amplitude * (-d * d).exp();
                let w2 = width * width;
                let f1 = -2.0 * (xi - center) / w2 * g;
                let f2 = (4.0 * (xi - center).powi(2) / (w2 * w2) - 2.0 / w2) * g;
                (g, f1, f2)
            }
        }
    }
}

/// One primitive of a background term list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// A constant; valid for either sign.
    Constant { value: f64 },
    /// `c · Re(wⁿ)` or `c · Im(wⁿ)` with `w = t + i s`, degree ≤ 4 (σ = +1).
    /// For instance `Im(w²) = 2ts` and `Re(w²) = t² - s²`.
    HarmonicPoly { degree: u32, part: Part, coefficient: f64 },
    /// `A e^{k s} cos(k t)` or `A e^{k s} sin(k t)` (σ = +1).
    PlaneHarmonic { amplitude: f64, k: f64, trig: Trig },
    /// `f(s ∓ t)` (σ = -1).
    Traveling { direction: Direction, profile: Profile },
    /// `c tᵖ sᵠ`. Not annihilated in general; rejected by validation and kept
    /// only to exercise the residual detector.
    Monomial { coefficient: f64, t_pow: u32, s_pow: u32 },
}

impl Term {
    pub fn eval(&self, t: f64, s: f64) -> Jet2 {
        match *self {
            Term::Constant { value } => Jet2::constant(value),
            Term::HarmonicPoly { degree, part, coefficient } => {
                coefficient * harmonic_poly(degree, part, t, s)
            }
            Term::PlaneHarmonic { amplitude, k, trig } => {
                let e = (k * s).exp();
                let (sn, cs) = (k * t).sin_cos();
                // g(t) = cos or sin, g' and g''.
                let (g, g1, g2) = match trig {
                    Trig::Cos => (cs, -k * sn, -k * k * cs),
                    Trig::Sin => (sn, k * cs, -k * k * sn),
                };
                amplitude
                    * Jet2 {
                        h: e * g,
                        h_t: e * g1,
                        h_s: k * e * g,
                        h_tt: e * g2,
                        h_ss: k * k * e * g,
                        h_ts: k * e * g1,
                    }
            }
            Term::Traveling { direction, profile } => {
                let sgn = match direction {
                    Direction::Minus => -1.0,
                    Direction::Plus => 1.0,
                };
                let (f, f1, f2) = profile.eval(s + sgn * t);
                Jet2 {
                    h: f,
                    h_t: sgn * f1,
                    h_s: f1,
                    h_tt: f2,
                    h_ss: f2,
                    h_ts: sgn * f2,
                }
            }
            Term::Monomial { coefficient, t_pow, s_pow } => {
                let p = |x: f64, n: u32, d: u32| -> f64 {
                    if d > n {
                        0.0
                    } else {
                        let fall: f64 = (0..d).map(|i| (n - i) as f64).product();
                        fall * x.powi((n - d) as i32)
                    }
                };
                coefficient
                    * Jet2 {
                        h: p(t, t_pow, 0) * p(s, s_pow, 0),
                        h_t: p(t, t_pow, 1) * p(s, s_pow, 0),
                        h_s: p(t, t_pow, 0) * p(s, s_pow, 1),
                        h_tt: p(t, t_pow, 2) * p(s, s_pow, 0),
                        h_ss: p(t, t_pow, 0) * p(s, s_pow, 2),
                        h_ts: p(t, t_pow, 1) * p(s, s_pow, 1),
                    }
            }
        }
    }

    fn check(&self, sigma: Sigma) -> Result<()> {
        let bad = |why: &str| Err(Error::invalid(format!("background term {self:?}: {why}")));
        match (*self, sigma) {
            (Term::Constant { .. }, _) => Ok(()),
            (Term::HarmonicPoly { degree, .. }, Sigma::Plus) if degree <= 4 => Ok(()),
            (Term::HarmonicPoly { .. }, Sigma::Plus) => bad("degree must be at most 4"),
            (Term::PlaneHarmonic { .. }, Sigma::Plus) => Ok(()),
            (Term::Traveling { profile, .. }, Sigma::Minus) => match profile {
                Profile::Gaussian { width, .. } if !(width > 0.0) => bad("width must be positive"),
                _ => Ok(()),
            },
            (Term::Monomial { t_pow, s_pow, .. }, _) if t_pow + s_pow <= 1 => Ok(()),
            (Term::Monomial { t_pow: 1, s_pow: 1, .. }, _) => Ok(()),
            (Term::Monomial { .. }, _) => bad("monomial is not annihilated by the linear operator"),
            (_, Sigma::Plus) => bad("only valid for sigma = -1"),
            (_, Sigma::Minus) => bad("only valid for sigma = +1"),
        }
    }
}

/// `(Re or Im)(wⁿ)` with `w = t + i s` and its partials. `∂ₜ = d/dw`,
/// `∂ₛ = i d/dw`.
fn harmonic_poly(degree: u32, part: Part, t: f64, s: f64) -> Jet2 {
    use num_complex::Complex64;
    let w = Complex64::new(t, s);
    let n = degree as f64;
    let pow = |k: i32| if k < 0 { Complex64::new(0.0, 0.0) } else { w.powi(k) };
    let f0 = pow(degree as i32);
    let f1 = n * pow(degree as i32 - 1);
    let f2 = n * (n - 1.0) * pow(degree as i32 - 2);
    let i = Complex64::i();
    let pick = |z: Complex64| match part {
        Part::Re => z.re,
        Part::Im => z.im,
    };
    Jet2 {
        h: pick(f0),
        h_t: pick(f1),
        h_s: pick(i * f1),
        h_tt: pick(f2),
        h_ss: pick(-f2),
        h_ts: pick(i * f2),
    }
}

/// A sum of primitives together with the sign of the linear operator they
/// solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSolution {
    sigma: Sigma,
    terms: Vec<Term>,
}

impl BackgroundSolution {
    /// Builds a background, checking that every term is compatible with `sigma`.
    pub fn new(sigma: Sigma, terms: Vec<Term>) -> Result<Self> {
        for term in &terms {
            term.check(sigma)?;
        }
        Ok(Self { sigma, terms })
    }

    /// Skips validation. Used for negative tests of the residual checks.
    pub fn new_unchecked(sigma: Sigma, terms: Vec<Term>) -> Self {
        Self { sigma, terms }
    }

    pub fn zero(sigma: Sigma) -> Self {
        Self { sigma, terms: Vec::new() }
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn eval(&self, t: f64, s: f64) -> Jet2 {
        self.terms
            .iter()
            .fold(Jet2::default(), |acc, term| acc + term.eval(t, s))
    }

    /// `h_ss + σ h_tt`; zero to rounding for every valid background.
    pub fn residual(&self, t: f64, s: f64) -> f64 {
        self.eval(t, s).linear_residual(self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ts() -> BackgroundSolution {
        BackgroundSolution::new(
            Sigma::Plus,
            vec![Term::HarmonicPoly { degree: 2, part: Part::Im, coefficient: 0.5 }],
        )
        .unwrap()
    }

    fn all_primitives() -> Vec<(Sigma, Term)> {
        let mut v = vec![(Sigma::Plus, Term::Constant { value: 1.3 }), (Sigma::Minus, Term::Constant { value: -0.4 })];
        for degree in 0..=4 {
            for part in [Part::Re, Part::Im] {
                v.push((Sigma::Plus, Term::HarmonicPoly { degree, part, coefficient: 0.7 }));
            }
        }
        for trig in [Trig::Cos, Trig::Sin] {
            v.push((Sigma::Plus, Term::PlaneHarmonic { amplitude: 0.3, k: 1.7, trig }));
        }
        let profiles = [
            Profile::Constant { value: 1.0 },
            Profile::Affine { slope: 0.4, intercept: -1.0 },
            Profile::Sinusoid { amplitude: 0.3, k: 2.0, phase: 0.1 },
            Profile::Gaussian { amplitude: 1.2, center: 0.5, width: 0.8 },
        ];
        for direction in [Direction::Minus, Direction::Plus] {
            for profile in profiles {
                v.push((Sigma::Minus, Term::Traveling { direction, profile }));
            }
        }
        v
    }

    #[test]
    fn jet_of_ts() {
        let j = ts().eval(2.0, 3.0);
        assert_eq!(j, Jet2 { h: 6.0, h_t: 3.0, h_s: 2.0, h_tt: 0.0, h_ss: 0.0, h_ts: 1.0 });
    }

    #[test]
    fn constant_traveling_profile() {
        let b = BackgroundSolution::new(
            Sigma::Minus,
            vec![Term::Traveling { direction: Direction::Minus, profile: Profile::Constant { value: 1.0 } }],
        )
        .unwrap();
        assert_eq!(b.eval(0.3, -7.0), Jet2::constant(1.0));
    }

    #[test]
    fn sine_wave_jet() {
        // h = sin(s - t): h_s = cos, h_t = -cos, h_ss = h_tt = -sin, h_ts = sin.
        let b = BackgroundSolution::new(
            Sigma::Minus,
            vec![Term::Traveling {
                direction: Direction::Minus,
                profile: Profile::Sinusoid { amplitude: 1.0, k: 1.0, phase: 0.0 },
            }],
        )
        .unwrap();
        let j = b.eval(0.0, 0.0);
        assert_eq!((j.h, j.h_s, j.h_t), (0.0, 1.0, -1.0));
        assert_eq!((j.h_ss, j.h_tt, j.h_ts), (0.0, 0.0, 0.0));
        let j = b.eval(0.2, 1.1);
        let xi: f64 = 0.9;
        assert_abs_diff_eq!(j.h_ts, xi.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.h_tt, -xi.sin(), epsilon = 1e-15);
    }

    #[test]
    fn illegal_t_squared_has_residual_two() {
        let b = BackgroundSolution::new_unchecked(
            Sigma::Plus,
            vec![Term::Monomial { coefficient: 1.0, t_pow: 2, s_pow: 0 }],
        );
        assert_eq!(b.residual(0.3, -1.2), 2.0);
        assert!(BackgroundSolution::new(Sigma::Plus, b.terms().to_vec()).is_err());
    }

    #[test]
    fn zero_background() {
        assert_eq!(BackgroundSolution::zero(Sigma::Plus).residual(1.0, 2.0), 0.0);
    }

    #[test]
    fn sigma_mismatch_rejected() {
        let wave = Term::Traveling { direction: Direction::Plus, profile: Profile::Constant { value: 1.0 } };
        assert!(BackgroundSolution::new(Sigma::Plus, vec![wave]).is_err());
        let harm = Term::PlaneHarmonic { amplitude: 1.0, k: 1.0, trig: Trig::Cos };
        assert!(BackgroundSolution::new(Sigma::Minus, vec![harm]).is_err());
        let hp = Term::HarmonicPoly { degree: 5, part: Part::Re, coefficient: 1.0 };
        assert!(BackgroundSolution::new(Sigma::Plus, vec![hp]).is_err());
    }

    #[test]
    fn jets_match_central_differences() {
        // O(Δ²): the error ratio between Δ and Δ/2 should be close to 4.
        for (sigma, term) in all_primitives() {
            let b = BackgroundSolution::new(sigma, vec![term]).unwrap();
            let (t, s) = (0.37, -0.61);
            let exact = b.eval(t, s);
            let fd = |d: f64| {
                let v = |dt: f64, ds: f64| b.eval(t + dt, s + ds).h;
                [
                    (v(d, 0.0) - v(-d, 0.0)) / (2.0 * d),
                    (v(0.0, d) - v(0.0, -d)) / (2.0 * d),
                    (v(d, 0.0) - 2.0 * v(0.0, 0.0) + v(-d, 0.0)) / (d * d),
                    (v(0.0, d) - 2.0 * v(0.0, 0.0) + v(0.0, -d)) / (d * d),
                    (v(d, d) - v(d, -d) - v(-d, d) + v(-d, -d)) / (4.0 * d * d),
                ]
            };
            let want = [exact.h_t, exact.h_s, exact.h_tt, exact.h_ss, exact.h_ts];
            let (c, f) = (fd(2e-3), fd(1e-3));
            for k in 0..5 {
                let (ec, ef) = ((c[k] - want[k]).abs(), (f[k] - want[k]).abs());
                if ec < 1e-9 {
                    // Exact to rounding (polynomials of low degree).
                    assert!(ef < 1e-7, "{term:?} component {k}: {ef}");
                } else {
                    let ratio = ec / ef;
                    assert!((3.5..4.5).contains(&ratio), "{term:?} component {k}: ratio {ratio}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn every_primitive_is_annihilated(t in -2.0f64..2.0, s in -2.0f64..2.0) {
            for (sigma, term) in all_primitives() {
                let j = term.eval(t, s);
                let scale = 1.0 + j.h_ss.abs().max(j.h_tt.abs()).max(j.h.abs());
                prop_assert!(j.linear_residual(sigma).abs() < 1e-12 * scale, "{:?}", term);
            }
        }
    }
}
