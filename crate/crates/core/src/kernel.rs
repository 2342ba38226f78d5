//! Green's function of the Helmholtz operator `1 - ∂ₓ²` and the Gram-matrix
//! algebra the peakon parameter equations need.
//!
//! The peakon kernel is `K(X) = ½ e^{-|X|}`. Its derivative jumps at the
//! origin; we use the odd extension `K'(0) = 0`, which makes every
//! self-interaction term `K'(Qᵃ - Qᵃ)` vanish.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the Gram condition estimate before a solve is refused.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[non_exhaustive]
pub enum Kernel {
    #[default]
    Peakon,
}

impl Kernel {
    /// `K(0)`.
    #[inline]
    pub fn k0(&self) -> f64 {
        match self {
            Kernel::Peakon => 0.5,
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Kernel::Peakon => 0.5 * (-x.abs()).exp(),
        }
    }

    /// `K'(X)` with `K'(0) = 0`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Kernel::Peakon => {
                if x == 0.0 {
                    0.0
                } else {
                    -0.5 * x.signum() * (-x.abs()).exp()
                }
            }
        }
    }

    /// `K₀ - K(X)` without cancellation for small `|X|`.
    #[inline]
    pub fn k0_minus_k(&self, x: f64) -> f64 {
        match self {
            Kernel::Peakon => -0.5 * (-x.abs()).exp_m1(),
        }
    }

    /// Returns `(K(X), K'(X))`, rejecting non-finite arguments.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("kernel argument must be finite, got {x}")));
        }
        Ok((self.value(x), self.derivative(x)))
    }

    pub fn gram(&self, positions: &[f64]) -> GramMatrix {
        GramMatrix::new(*self, positions)
    }
}

/// `Kᵃᵇ = K(Qᵃ - Qᵇ)` for a set of peakon positions, factored once on
/// construction.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    positions: Vec<f64>,
    entries: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    condition: f64,
}

impl GramMatrix {
    pub fn new(kernel: Kernel, positions: &[f64]) -> Self {
        let n = positions.len();
        let entries = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                kernel.k0()
            } else {
                kernel.value(positions[a] - positions[b])
            }
        });
        let factor = Cholesky::new(entries.clone());
        let condition = match &factor {
            _ if n == 0 => 1.0,
            Some(chol) => {
                let inv = chol.inverse();
                let c = one_norm(&entries) * one_norm(&inv);
                if c.is_finite() && c < 1.0 / f64::EPSILON {
                    c
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        };
        Self {
            positions: positions.to_vec(),
            entries,
            factor,
            condition,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.entries[(a, b)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// 1-norm condition estimate; `f64::INFINITY` when the matrix is singular to working precision
    /// (e.g. coincident positions).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `Σ_b Kᵃᵇ xᵇ`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|a| (0..self.len()).map(|b| self.entries[(a, b)] * x[b]).sum())
            .collect()
    }

    /// Solves `K x = rhs`, refusing when the condition estimate exceeds `cap`.
    pub fn solve(&self, rhs: &[f64], cap: f64) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(Error::invalid(format!(
                "rhs has length {}, Gram matrix is {}x{}",
                rhs.len(),
                self.len(),
                self.len()
            )));
        }
        let factor = match &self.factor {
            Some(f) if self.condition <= cap => f,
            _ => {
                return Err(Error::NearCollision {
                    condition: self.condition,
                    cap,
                    site: None,
                })
            }
        };
        let x = factor.solve(&DVector::from_column_slice(rhs));
        Ok(x.iter().copied().collect())
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
