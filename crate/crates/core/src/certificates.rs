//! Initialization spectra, rate constants and the two initial conditions.
//!
//! Notation: `lbar_l` and `lam_l` are the upper and lower spectral proxies of
//! `W_l^0`, `lam_F = sigma_min(sigma(X W_1^0))`, and `a_{i->j}` is the product
//! of `a_l` over `l = i..=j` (1 when `i > j`).

use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::error::{Error, Result};
use crate::gradients::{InvariantTally, StepFlags, TrainLog, FLAG_NAMES};
use crate::io::lenient_f64;
use crate::linalg;
use crate::network::{self, Dataset, Params};

/// Spectral proxies of the initial weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    /// `lbar_1 .. lbar_L`.
    pub lambda_bar: Vec<f64>,
    /// `lam_3 .. lam_L` (empty for `L = 2`).
    pub lambda_min: Vec<f64>,
}

impl Spectra {
    pub fn depth(&self) -> usize {
        self.lambda_bar.len()
    }

    /// `lbar_{i->j}`, 1-based and inclusive.
    pub fn bar_prod(&self, i: usize, j: usize) -> f64 {
        if i > j {
            return 1.0;
        }
        self.lambda_bar[i - 1..j].iter().product()
    }

    /// `lam_{i->j}` for `3 <= i`.
    pub fn min_prod(&self, i: usize, j: usize) -> f64 {
        if i > j {
            return 1.0;
        }
        self.lambda_min[i - 3..j - 2].iter().product()
    }
}

pub fn spectral_quantities(params0: &Params) -> Result<Spectra> {
    let mut lambda_bar = Vec::with_capacity(params0.depth());
    let mut lambda_min = Vec::new();
    for l in 1..=params0.depth() {
        let (lo, hi) = linalg::extreme_singular_values(params0.weight(l), &format!("W_{l}"))?;
        if l <= 2 {
            lambda_bar.push(2.0 / 3.0 * (1.0 + hi));
        } else {
            lambda_bar.push(hi);
            lambda_min.push(lo);
        }
    }
    Ok(Spectra { lambda_bar, lambda_min })
}

/// `min_{|z| = 1} ||sigma(X W_1)^T z||`; 0 whenever `n_1 < N`.
pub fn lambda_f(w1: &nalgebra::DMatrix<f64>, x: &nalgebra::DMatrix<f64>, act: &ActivationParams) -> Result<f64> {
    if x.ncols() != w1.nrows() {
        return Err(Error::DimensionMismatch {
            layer: 1,
            expected: (x.ncols(), w1.ncols()),
            found: w1.shape(),
        });
    }
    let f1 = (x * w1).map(|g| act.value(g));
    linalg::row_sigma_min(&f1, "F_1")
}

/// Verdict on one of the two initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub holds: bool,
    #[serde(with = "lenient_f64")]
    pub lhs: f64,
    #[serde(with = "lenient_f64")]
    pub rhs: f64,
    /// `lhs / rhs` to 6 significant digits; at least 1 iff the condition holds.
    #[serde(with = "lenient_f64")]
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl AssumptionCheck {
    fn evaluate(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs == 0.0 {
            if lhs > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            lhs / rhs
        };
        Self {
            holds: lhs >= rhs,
            lhs,
            rhs,
            slack: round_sig(ratio, 6),
            reason: None,
        }
    }

    fn degenerate(lhs: f64, rhs: f64) -> Self {
        Self {
            holds: false,
            lhs,
            rhs,
            slack: 0.0,
            reason: Some("degenerate data: lambda_F = 0 while Phi(theta_0) > 0".into()),
        }
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    if !scale.is_finite() || scale == 0.0 {
        return x;
    }
    (x * scale).round() / scale
}

/// Quantities both initial conditions are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionInputs<'a> {
    pub spectra: &'a Spectra,
    pub lambda_f: f64,
    pub x_fro: f64,
    pub x_spec: f64,
    pub phi0: f64,
    pub gamma: f64,
}

/// Both sides of the two initial conditions, evaluated literally.
///
/// For `L = 2` the products over `l = 3..L` are 1 and the term with the
/// minimum over that empty range is dropped from the max.
pub fn check_assumption(inp: &AssumptionInputs) -> (AssumptionCheck, AssumptionCheck) {
    let s = inp.spectra;
    let depth = s.depth();
    let g4 = inp.gamma.powi(4);
    let growth = (6.0 / (inp.gamma * inp.gamma)).powi(depth as i32);
    let root = (2.0 * inp.phi0).sqrt();
    let deep_min = s.min_prod(3, depth);
    let deep = s.bar_prod(3, depth) / (deep_min * deep_min);

    let (l1, l2) = (s.lambda_bar[0], s.lambda_bar[1]);
    let mut m = l1.max(l2);
    if depth >= 3 {
        let floor = s
            .lambda_min
            .iter()
            .zip(&s.lambda_bar[2..])
            .map(|(lo, hi)| lo * hi)
            .fold(f64::INFINITY, f64::min);
        m = m.max(2.0 * l1 * l2 / floor);
    }

    let rhs8 = scaled(g4 / 3.0 * growth * inp.x_fro * m, deep, root);
    let rhs9 = scaled(2.0 * g4 / 3.0 * growth * inp.x_spec * inp.x_fro * l2, deep, root);
    let lhs8 = inp.lambda_f.powi(2);
    let lhs9 = inp.lambda_f.powi(3);

    if inp.lambda_f == 0.0 && inp.phi0 > 0.0 {
        return (
            AssumptionCheck::degenerate(lhs8, rhs8),
            AssumptionCheck::degenerate(lhs9, rhs9),
        );
    }
    (
        AssumptionCheck::evaluate(lhs8, rhs8),
        AssumptionCheck::evaluate(lhs9, rhs9),
    )
}

/// `a * b * root` with `0 * inf` read as 0: when `Phi(theta_0) = 0` the
/// right-hand side vanishes whatever the spectra are.
fn scaled(a: f64, b: f64, root: f64) -> f64 {
    if root == 0.0 {
        0.0
    } else {
        a * b * root
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    #[serde(with = "lenient_f64")]
    pub alpha0: f64,
    #[serde(with = "lenient_f64")]
    pub q0: f64,
    #[serde(with = "lenient_f64")]
    pub q1: f64,
    #[serde(with = "lenient_f64")]
    pub r: f64,
    /// `min(1/alpha_0, 1/Q_0)`; `None` when either constant is 0.
    pub eta_max: Option<f64>,
}

impl RateConstants {
    pub fn vacuous(&self) -> bool {
        !(self.alpha0 > 0.0)
    }
}

pub fn rate_constants(
    spectra: &Spectra,
    lambda_f: f64,
    x_fro: f64,
    phi0: f64,
    act: &ActivationParams,
) -> RateConstants {
    let depth = spectra.depth();
    let lf = depth as f64;
    let gamma = act.gamma();
    let root = (2.0 * phi0).sqrt();
    let deep = spectra.min_prod(3, depth);
    let alpha0 = 4.0 / gamma.powi(4) * (gamma * gamma / 4.0).powi(depth as i32) * lambda_f.powi(2) * deep * deep;

    let r: f64 = spectra.lambda_bar.iter().map(|&b| (1.5 * b).max(1.0)).product();
    let all = spectra.bar_prod(1, depth);
    let min_bar = spectra.lambda_bar.iter().copied().fold(f64::INFINITY, f64::min);
    let lsl = lf * lf.sqrt();
    let q0 = lsl * 1.5f64.powi(2 * (depth as i32 - 1)) * x_fro * x_fro * all * all / (min_bar * min_bar)
        + lsl * x_fro * (1.0 + lf * act.beta() * x_fro * r) * r * root;

    let q1 = if root == 0.0 {
        0.0
    } else {
        let sum: f64 = spectra.lambda_bar.iter().map(|b| all / b).sum();
        4.0 / 3.0 * 1.5f64.powi(depth as i32) * x_fro / alpha0 * sum * root
    };

    let eta_max = (alpha0 > 0.0 && q0 > 0.0).then(|| (1.0 / alpha0).min(1.0 / q0));
    RateConstants {
        alpha0,
        q0,
        q1,
        r,
        eta_max,
    }
}

/// `(1 - eta alpha_0)^k Phi(theta_0)`.
pub fn predicted_decay(alpha0: f64, eta: f64, phi0: f64, k: u64) -> Result<f64> {
    let rate = eta * alpha0;
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eta * alpha_0 = {rate} lies outside (0, 1)"
        )));
    }
    if k == 0 {
        return Ok(phi0);
    }
    Ok(phi0 * ((k as f64) * (-rate).ln_1p()).exp())
}

/// Everything the convergence guarantee needs, computed at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub depth: usize,
    pub n_samples: usize,
    pub first_width: usize,
    pub gamma: f64,
    pub beta: f64,
    pub lambda_bar: Vec<f64>,
    pub lambda_min: Vec<f64>,
    #[serde(rename = "lambda_F")]
    pub lambda_f: f64,
    pub phi0: f64,
    pub x_fro: f64,
    pub x_spec: f64,
    #[serde(with = "lenient_f64")]
    pub alpha0: f64,
    #[serde(rename = "Q0", with = "lenient_f64")]
    pub q0: f64,
    #[serde(rename = "Q1", with = "lenient_f64")]
    pub q1: f64,
    #[serde(rename = "R", with = "lenient_f64")]
    pub r: f64,
    pub eta_max: Option<f64>,
    pub assumption_eq8: AssumptionCheck,
    pub assumption_eq9: AssumptionCheck,
    /// `n_1 >= N`.
    pub width_ok: bool,
    /// True when `L = 2` and the empty-range conventions were applied.
    pub empty_product_convention: bool,
    /// No rate guarantee: `alpha_0 = 0`.
    pub vacuous: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn spectra(&self) -> Spectra {
        Spectra {
            lambda_bar: self.lambda_bar.clone(),
            lambda_min: self.lambda_min.clone(),
        }
    }

    /// Both initial conditions hold and the rate is non-vacuous.
    pub fn holds(&self) -> bool {
        self.assumption_eq8.holds && self.assumption_eq9.holds && !self.vacuous
    }

    /// `0.9 * eta_max`.
    pub fn default_eta(&self) -> Option<f64> {
        self.eta_max.map(|m| 0.9 * m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Computes the full certificate for an initialization.
pub fn certify(params0: &Params, data: &Dataset, act: &ActivationParams) -> Result<Certificate> {
    let trace = network::forward(params0, data, act)?;
    let phi0 = network::trace_loss(&trace, data);
    let spectra = spectral_quantities(params0)?;
    let lam_f = linalg::row_sigma_min(trace.layer_output(1), "F_1")?;
    let x_fro = data.x().norm();
    let x_spec = linalg::spectral_norm(data.x(), "X")?;
    let (eq8, eq9) = check_assumption(&AssumptionInputs {
        spectra: &spectra,
        lambda_f: lam_f,
        x_fro,
        x_spec,
        phi0,
        gamma: act.gamma(),
    });
    let rates = rate_constants(&spectra, lam_f, x_fro, phi0, act);

    let depth = params0.depth();
    let first_width = params0.weight(1).ncols();
    let width_ok = first_width >= data.n_samples();
    let mut notes = Vec::new();
    if depth == 2 {
        notes.push("L = 2: products over l = 3..L set to 1; min-over-empty-range term dropped".into());
    }
    if !width_ok {
        notes.push(format!(
            "n_1 = {first_width} < N = {}: lambda_F is necessarily 0",
            data.n_samples()
        ));
    }
    if rates.vacuous() {
        notes.push("alpha_0 = 0: no rate guarantee".into());
    }
    Ok(Certificate {
        depth,
        n_samples: data.n_samples(),
        first_width,
        gamma: act.gamma(),
        beta: act.beta(),
        lambda_bar: spectra.lambda_bar,
        lambda_min: spectra.lambda_min,
        lambda_f: lam_f,
        phi0,
        x_fro,
        x_spec,
        alpha0: rates.alpha0,
        q0: rates.q0,
        q1: rates.q1,
        r: rates.r,
        eta_max: rates.eta_max,
        assumption_eq8: eq8,
        assumption_eq9: eq9,
        width_ok,
        empty_product_convention: depth == 2,
        vacuous: rates.vacuous(),
        notes,
    })
}

/// Per-record verdicts re-derived from the logged spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub flag_names: Vec<String>,
    /// One row per logged step: `(k, flags)`.
    pub rows: Vec<(u64, StepFlags)>,
    pub first_violation: Option<u64>,
    /// Every-step tally kept by the trainer.
    pub tally: InvariantTally,
    pub distance_violations: Option<u64>,
}

impl InvariantReport {
    pub fn clean(&self) -> bool {
        self.first_violation.is_none() && self.distance_violations.unwrap_or(0) == 0
    }
}

/// Re-checks every logged record against the floors and caps of `cert`
/// and merges the result with the trainer's every-step tally.
pub fn monitor_invariants(log: &TrainLog, cert: &Certificate) -> InvariantReport {
    let mut first = log.tally.first_violation;
    let mut rows = Vec::with_capacity(log.records.len());
    for rec in &log.records {
        let mut flags = rec.flags;
        if !rec.min_sv_w.is_empty() {
            let ok = rec.min_sv_w.iter().zip(&cert.lambda_min).all(|(s, l)| *s >= 0.5 * l);
            flags.0[0] = Some(ok);
        }
        if !rec.max_norm_w.is_empty() {
            let ok = rec.max_norm_w.iter().zip(&cert.lambda_bar).all(|(n, b)| *n <= 1.5 * b);
            flags.0[1] = Some(ok);
        }
        if let Some(s) = rec.sv_f1 {
            flags.0[2] = Some(s >= 0.5 * cert.lambda_f);
        }
        if let Some(b) = rec.bound {
            flags.0[3] = Some(rec.loss <= b);
        }
        if !flags.all_hold() {
            first = Some(first.map_or(rec.k, |f| f.min(rec.k)));
        }
        rows.push((rec.k, flags));
    }
    InvariantReport {
        flag_names: FLAG_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
        first_violation: first,
        tally: log.tally.clone(),
        distance_violations: log.distance.as_ref().map(|d| d.violations),
    }
}
