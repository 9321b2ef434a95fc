//! Gaussian-smoothed leaky-ReLU.
//!
//! The activation is the convolution of `max(gamma*u, u)` with a Gaussian
//! kernel of standard deviation `s = (1 - gamma) / (beta * sqrt(2 pi))`,
//! shifted so that `sigma(0) = 0`. With `z = x / s` and `Psi` the standard
//! normal CDF it has the closed form
//!
//! ```text
//! sigma(x)   = c * (exp(-z^2/2) - 1) + x Psi(z) + gamma x Psi(-z),   c = (1-gamma)^2 / (2 pi beta)
//! sigma'(x)  = gamma + (1 - gamma) Psi(z)
//! sigma''(x) = beta sqrt(2 pi) Psi'(z)
//! ```
//!
//! so `sigma'` lies in `[gamma, 1]`, is `beta`-Lipschitz, and
//! `|sigma(x) - max(gamma x, x)| <= c + (1 - gamma) / (pi beta)` uniformly.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Below this exponent `exp` underflows to a subnormal or zero.
const EXP_UNDERFLOW: f64 = -745.0;

/// Standard normal CDF through the complementary error function, which keeps
/// full relative precision in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    let e = -0.5 * z * z;
    if e < EXP_UNDERFLOW {
        0.0
    } else {
        e.exp() / SQRT_2PI
    }
}

/// The `(gamma, beta)` pair selecting one member of the smoothed leaky-ReLU
/// family. `0 < gamma < 1` is the slope floor and `beta > 0` the smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawActivation", into = "RawActivation")]
pub struct ActivationParams {
    gamma: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawActivation {
    gamma: f64,
    beta: f64,
}

impl TryFrom<RawActivation> for ActivationParams {
    type Error = Error;

    fn try_from(raw: RawActivation) -> Result<Self> {
        ActivationParams::new(raw.gamma, raw.beta)
    }
}

impl From<ActivationParams> for RawActivation {
    fn from(p: ActivationParams) -> Self {
        RawActivation {
            gamma: p.gamma,
            beta: p.beta,
        }
    }
}

impl ActivationParams {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidActivation(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidActivation(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        Ok(Self { gamma, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `z = beta sqrt(2 pi) x / (1 - gamma)`.
    fn standardize(&self, x: f64) -> f64 {
        self.beta * SQRT_2PI * x / (1.0 - self.gamma)
    }

    fn offset(&self) -> f64 {
        let g = 1.0 - self.gamma;
        g * g / (2.0 * PI * self.beta)
    }

    /// `sigma(x)` without input validation; used on the hot path after the
    /// caller has checked finiteness of whole matrices.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let z = self.standardize(x);
        let e = -0.5 * z * z;
        // expm1 keeps precision near x = 0 where the two offset terms cancel
        let bump = if e < EXP_UNDERFLOW { -1.0 } else { e.exp_m1() };
        self.offset() * bump + x * normal_cdf(z) + self.gamma * x * normal_cdf(-z)
    }

    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        self.gamma + (1.0 - self.gamma) * normal_cdf(self.standardize(x))
    }

    #[inline]
    pub fn curvature(&self, x: f64) -> f64 {
        self.beta * SQRT_2PI * normal_pdf(self.standardize(x))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_finite("eval", x)?;
        Ok(self.value(x))
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        check_finite("deriv", x)?;
        Ok(self.slope(x))
    }

    pub fn deriv2(&self, x: f64) -> Result<f64> {
        check_finite("deriv2", x)?;
        Ok(self.curvature(x))
    }

    /// Uniform distance to the leaky ReLU guaranteed for every `x`.
    pub fn gap_bound(&self) -> f64 {
        self.offset() + (1.0 - self.gamma) / (PI * self.beta)
    }

    /// Largest `|sigma(x) - max(gamma x, x)|` over the grid.
    pub fn uniform_gap(&self, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("uniform_gap needs a non-empty grid".into()));
        }
        let mut worst: f64 = 0.0;
        for &x in grid {
            check_finite("uniform_gap", x)?;
            let relu = (self.gamma * x).max(x);
            worst = worst.max((self.value(x) - relu).abs());
        }
        Ok(worst)
    }
}

fn check_finite(op: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op, value: x })
    }
}
