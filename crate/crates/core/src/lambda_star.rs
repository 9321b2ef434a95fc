//! The expected first-layer Gram matrix `G* = E_w[sigma(Xw) sigma(Xw)^T]`,
//! `w ~ N(0, I_d / d)`, and the tools around it: Hermite coefficients,
//! Gauss-Hermite quadrature, Khatri-Rao powers and Monte-Carlo estimation.
//!
//! Hermite polynomials here are the normalized probabilists' ones, which are
//! orthonormal under the standard Gaussian density.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Largest degree accepted by [`hermite_poly`].
pub const MAX_DEGREE: usize = 200;
/// Entry budget for Khatri-Rao powers.
pub const KR_BUDGET: u128 = 100_000_000;
/// Agreement required between a quadrature rule and its doubled refinement.
pub const QUAD_TOL: f64 = 1e-8;
/// Batch count for Monte-Carlo standard errors.
pub const MC_BATCHES: usize = 50;

/// `h_0(x), ..., h_n(x)` by the three-term recurrence
/// `h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k + 1)`.
fn hermite_all(n: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(x);
    }
    for k in 1..n {
        let next = (x * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        h.push(next);
    }
    h
}

/// `h_r(x)`.
pub fn hermite_poly(r: usize, x: f64) -> Result<f64> {
    if r > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Hermite degree {r} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite {
            op: "hermite_poly",
            value: x,
        });
    }
    Ok(hermite_all(r, x)[r])
}

/// Gauss-Hermite rule for the standard Gaussian density: `E[f(Z)] ~ sum w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule: nodes from the eigenvalues of the Jacobi matrix,
    /// polished by Newton steps on `h_n`, weights `1 / sum_{k<n} h_k(x_i)^2`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 4 * MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "quadrature order must be in 1..={}, got {n}",
                4 * MAX_DEGREE
            )));
        }
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));
        let mut weights = Vec::with_capacity(n);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let h = hermite_all(n, *x);
                let deriv = (n as f64).sqrt() * h[n - 1];
                if deriv == 0.0 {
                    break;
                }
                let step = h[n] / deriv;
                *x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            let h = hermite_all(n - 1, *x);
            weights.push(1.0 / h.iter().map(|v| v * v).sum::<f64>());
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `E[f(Z) h_k(Z)]` for `k = 0..=r_max`.
    pub fn coefficients(&self, f: impl Fn(f64) -> f64, r_max: usize) -> Vec<f64> {
        let mut mu = vec![0.0; r_max + 1];
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let fx = w * f(x);
            for (m, h) in mu.iter_mut().zip(hermite_all(r_max, x)) {
                *m += fx * h;
            }
        }
        mu
    }
}

/// Scalar functions with a Hermite expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    Square,
    SmoothedLeakyRelu { gamma: f64, beta: f64 },
}

impl Nonlinearity {
    pub fn smoothed(act: &ActivationParams) -> Self {
        Nonlinearity::SmoothedLeakyRelu {
            gamma: act.gamma(),
            beta: act.beta(),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::Square => "square",
            Nonlinearity::SmoothedLeakyRelu { .. } => "smoothed_leaky_relu",
        }
    }

    /// Closed-form coefficients `mu_0 ..= mu_r_max`.
    ///
    /// The smoothed leaky ReLU is a Gaussian blur (variance `s^2`) of
    /// `g(x) = max(gamma x, x)` shifted by `-c`; with `g` positively
    /// homogeneous, `mu_r(sigma) = (1 + s^2)^{(1-r)/2} mu_r(g) - c [r = 0]`,
    /// and `mu_r(relu) = phi(0) He_{r-2}(0) / sqrt(r!)` for `r >= 2`.
    pub fn exact_coefficients(&self, r_max: usize) -> Result<Vec<f64>> {
        let mut mu = vec![0.0; r_max + 1];
        match *self {
            Nonlinearity::Identity => {
                if r_max >= 1 {
                    mu[1] = 1.0;
                }
            }
            Nonlinearity::Square => {
                mu[0] = 1.0;
                if r_max >= 2 {
                    mu[2] = 2f64.sqrt();
                }
            }
            Nonlinearity::SmoothedLeakyRelu { gamma, beta } => {
                ActivationParams::new(gamma, beta)?;
                let s2 = (1.0 - gamma).powi(2) / (2.0 * std::f64::consts::PI * beta * beta);
                let shrink = (1.0 + s2).sqrt().recip();
                let phi0 = crate::activation::normal_pdf(0.0);
                let mut relu = vec![0.0; r_max + 1];
                relu[0] = phi0;
                if r_max >= 1 {
                    relu[1] = 0.5;
                }
                if r_max >= 2 {
                    relu[2] = phi0 / 2f64.sqrt();
                }
                for r in (4..=r_max).step_by(2) {
                    let k = (r - 2) as f64;
                    relu[r] = -(k - 1.0) * relu[r - 2] / ((k + 1.0) * (k + 2.0)).sqrt();
                }
                let mut scale = 1.0 / shrink;
                for (r, m) in mu.iter_mut().enumerate() {
                    let g = (1.0 - gamma) * relu[r] + if r == 1 { gamma } else { 0.0 };
                    *m = scale * g;
                    scale *= shrink;
                }
                mu[0] -= (1.0 - gamma).powi(2) / (2.0 * std::f64::consts::PI * beta);
            }
        }
        Ok(mu)
    }

    /// `E[sigma(Z)^2]` in closed form. For the smoothed leaky ReLU this is
    /// `E[g(A) g(B)]` with `Var = 1 + s^2`, `Cov = 1`, via the arc-cosine
    /// kernel `E[relu(A') relu(B')] = (sqrt(1 - rho^2) + (pi - acos rho) rho) / (2 pi)`.
    pub fn exact_norm_sq(&self) -> Result<f64> {
        Ok(match *self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Square => 3.0,
            Nonlinearity::SmoothedLeakyRelu { gamma, beta } => {
                let pi = std::f64::consts::PI;
                let mu0 = self.exact_coefficients(0)?[0];
                let c = (1.0 - gamma).powi(2) / (2.0 * pi * beta);
                let var = 1.0 + (1.0 - gamma).powi(2) / (2.0 * pi * beta * beta);
                let rho = 1.0 / var;
                let arc = ((1.0 - rho * rho).sqrt() + (pi - rho.acos()) * rho) / (2.0 * pi);
                let gg = gamma * gamma * rho + gamma * (1.0 - gamma) * rho + (1.0 - gamma).powi(2) * arc;
                var * gg - 2.0 * c * (mu0 + c) + c * c
            }
        })
    }

    /// Validated evaluator.
    pub fn evaluator(&self) -> Result<impl Fn(f64) -> f64 + Sync + Send> {
        let act = match *self {
            Nonlinearity::SmoothedLeakyRelu { gamma, beta } => Some(ActivationParams::new(gamma, beta)?),
            _ => None,
        };
        let kind = *self;
        Ok(move |x: f64| match kind {
            Nonlinearity::Identity => x,
            Nonlinearity::Square => x * x,
            Nonlinearity::SmoothedLeakyRelu { .. } => act.as_ref().map_or(f64::NAN, |a| a.value(x)),
        })
    }
}

/// One Hermite coefficient with its quadrature-refinement check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffEstimate {
    pub value: f64,
    /// Same coefficient with twice the quadrature order.
    pub refined: f64,
    pub converged: bool,
}

/// `mu_r = E[sigma(Z) h_r(Z)]` by `quad_order`-point Gauss-Hermite
/// quadrature, checked against the doubled rule.
pub fn hermite_coeff(sigma: impl Fn(f64) -> f64, r: usize, quad_order: usize) -> Result<CoeffEstimate> {
    if r > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Hermite degree {r} exceeds {MAX_DEGREE}"
        )));
    }
    let value = GaussHermite::new(quad_order)?.coefficients(&sigma, r)[r];
    let refined = GaussHermite::new(2 * quad_order)?.coefficients(&sigma, r)[r];
    Ok(CoeffEstimate {
        value,
        refined,
        converged: (value - refined).abs() < QUAD_TOL,
    })
}

/// Hermite coefficients `mu_0 .. mu_{r_max}` of a nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSpec {
    pub target: Nonlinearity,
    pub coeffs: Vec<f64>,
    pub quad_order: usize,
    /// `E[sigma(Z)^2]`.
    pub norm_sq: f64,
    /// `E[sigma(Z)^2] - sum_{r <= r_max} mu_r^2`, clamped at 0.
    pub tail: f64,
    /// Every coefficient agreed with the doubled rule to within the tolerance.
    pub converged: bool,
}

impl HermiteSpec {
    pub fn compute(target: Nonlinearity, r_max: usize, quad_order: usize) -> Result<Self> {
        if r_max > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("r_max {r_max} exceeds {MAX_DEGREE}")));
        }
        let f = target.evaluator()?;
        let coarse = GaussHermite::new(quad_order)?;
        let fine = GaussHermite::new(2 * quad_order)?;
        let (coeffs, converged) = match target {
            Nonlinearity::SmoothedLeakyRelu { .. } => (target.exact_coefficients(r_max)?, true),
            _ => {
                let coeffs = coarse.coefficients(&f, r_max);
                let check = fine.coefficients(&f, r_max);
                let converged = coeffs.iter().zip(&check).all(|(a, b)| (a - b).abs() < QUAD_TOL);
                (coeffs, converged)
            }
        };
        let norm_sq = match target {
            Nonlinearity::SmoothedLeakyRelu { .. } => target.exact_norm_sq()?,
            _ => fine.integrate(|x| f(x).powi(2)),
        };
        Ok(Self {
            target,
            quad_order,
            norm_sq,
            tail: tail_mass(norm_sq, &coeffs, r_max),
            coeffs,
            converged,
        })
    }

    pub fn r_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Unexplained mass after truncating at `r`.
    pub fn tail_after(&self, r: usize) -> f64 {
        tail_mass(self.norm_sq, &self.coeffs, r)
    }
}

fn tail_mass(norm_sq: f64, coeffs: &[f64], r: usize) -> f64 {
    let head: f64 = coeffs.iter().take(r + 1).map(|m| m * m).sum();
    (norm_sq - head).max(0.0)
}

fn check_budget(n: usize, d: usize, r: usize) -> Result<()> {
    let required = (d as u128)
        .checked_pow(r as u32)
        .and_then(|p| p.checked_mul(n as u128))
        .unwrap_or(u128::MAX);
    if required > KR_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            limit: KR_BUDGET,
        });
    }
    Ok(())
}

/// `N x d^r` matrix whose `i`-th row is `x_i ⊗ ... ⊗ x_i` (`r` factors).
pub fn khatri_rao_power(x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    if r == 0 {
        return Err(Error::InvalidArgument("Khatri-Rao power needs r >= 1".into()));
    }
    let (n, d) = x.shape();
    check_budget(n, d, r)?;
    let width = d.pow(r as u32);
    let mut out = DMatrix::zeros(n, width);
    let mut row = Vec::with_capacity(width);
    let mut next = Vec::with_capacity(width);
    for i in 0..n {
        row.clear();
        row.push(1.0);
        for _ in 0..r {
            next.clear();
            for &a in &row {
                next.extend(x.row(i).iter().map(|&b| a * b));
            }
            std::mem::swap(&mut row, &mut next);
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Exact `sigma_min` of a Khatri-Rao power and the deterministic bound
/// `sigma_min^2 >= min_i ||x_i||^{2r} - N (max_{i != j} |<x_i, x_j>|)^r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrSingular {
    pub sigma_min: f64,
    pub bound_sq: f64,
    /// `sqrt(bound_sq)` when positive, otherwise 0 (the bound is vacuous).
    pub lower_bound: f64,
}

impl KrSingular {
    pub fn vacuous(&self) -> bool {
        self.bound_sq <= 0.0
    }
}

pub fn kr_min_singular(x: &DMatrix<f64>, r: usize) -> Result<KrSingular> {
    let k = khatri_rao_power(x, r)?;
    let sigma_min = linalg::row_sigma_min(&k, "Khatri-Rao power")?;
    let bound_sq = kr_bound_sq(x, r);
    Ok(KrSingular {
        sigma_min,
        bound_sq,
        lower_bound: bound_sq.max(0.0).sqrt(),
    })
}

pub fn kr_bound_sq(x: &DMatrix<f64>, r: usize) -> f64 {
    let gram = x * x.transpose();
    let n = gram.nrows();
    let min_norm = (0..n).map(|i| gram[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut max_cross: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            max_cross = max_cross.max(gram[(i, j)].abs());
        }
    }
    min_norm.powi(r as i32) - n as f64 * max_cross.powi(r as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GramMethod {
    MonteCarlo { samples: usize, batches: usize },
    Hermite { r_max: usize },
}

/// An estimate of `G*`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramEstimate {
    pub gram: DMatrix<f64>,
    pub lambda_min: f64,
    pub method: GramMethod,
    /// Per-entry batch-mean standard error (Monte Carlo only).
    pub stderr: Option<DMatrix<f64>>,
    /// Truncation mass bounding every entry's series remainder (Hermite only).
    pub tail: Option<f64>,
}

/// JSON form of a [`GramEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    pub method: GramMethod,
    pub lambda_min: f64,
    #[serde(default)]
    pub stderr_max: Option<f64>,
    #[serde(default)]
    pub tail: Option<f64>,
    pub n: usize,
}

impl GramEstimate {
    fn new(gram: DMatrix<f64>, method: GramMethod, stderr: Option<DMatrix<f64>>, tail: Option<f64>) -> Result<Self> {
        let mut est = Self {
            gram,
            lambda_min: 0.0,
            method,
            stderr,
            tail,
        };
        est.lambda_min = lambda_star(&est)?;
        Ok(est)
    }

    pub fn summary(&self) -> GramSummary {
        GramSummary {
            method: self.method,
            lambda_min: self.lambda_min,
            stderr_max: self.stderr.as_ref().map(|s| s.max()),
            tail: self.tail,
            n: self.gram.nrows(),
        }
    }
}

/// Smallest eigenvalue of the estimate.
pub fn lambda_star(est: &GramEstimate) -> Result<f64> {
    let g = &est.gram;
    if g.nrows() != g.ncols() || g.nrows() == 0 {
        return Err(Error::InvalidShape(format!(
            "Gram matrix is {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let asym = linalg::asymmetry(g);
    if asym > 1e-8 {
        return Err(Error::InvalidArgument(format!("Gram matrix asymmetric by {asym:e}")));
    }
    Ok(linalg::symmetric_eigenvalues(g)[0])
}

/// Samples are drawn in chunks of this many columns.
const MC_CHUNK: usize = 256;

fn batch_sum(
    x: &DMatrix<f64>,
    f: &(impl Fn(f64) -> f64 + Sync),
    samples: usize,
    seed: u64,
    batch: usize,
) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let std = 1.0 / (d as f64).sqrt();
    let mut r = rng::stream(seed, rng::MC_STREAM_BASE + batch as u64);
    let mut acc = DMatrix::zeros(n, n);
    let mut left = samples;
    while left > 0 {
        let m = left.min(MC_CHUNK);
        let w = rng::gaussian_matrix(&mut r, d, m, std);
        let s = (x * w).map(f);
        acc.gemm(1.0, &s, &s.transpose(), 1.0);
        left -= m;
    }
    acc
}

/// Monte-Carlo estimate of `G*` with `n_samples` draws of `w`.
///
/// Samples are split into up to [`MC_BATCHES`] batches, each with its own
/// random stream; batches run in parallel and are reduced in index order,
/// so the result depends only on `(X, sigma, n_samples, seed)`.
pub fn gram_mc(x: &DMatrix<f64>, sigma: &Nonlinearity, n_samples: usize, seed: u64) -> Result<GramEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "Monte-Carlo estimate needs at least one sample".into(),
        ));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidDataset("empty data matrix".into()));
    }
    let f = sigma.evaluator()?;
    let batches = n_samples.min(MC_BATCHES);
    let sizes: Vec<usize> = (0..batches)
        .map(|b| n_samples / batches + usize::from(b < n_samples % batches))
        .collect();
    let sums: Vec<DMatrix<f64>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &m)| batch_sum(x, &f, m, seed, b))
        .collect();

    let n = x.nrows();
    let mut total = DMatrix::zeros(n, n);
    for s in &sums {
        total += s;
    }
    let mut gram = total / n_samples as f64;
    gram = (&gram + gram.transpose()) * 0.5;

    let stderr = if batches >= 2 {
        let mut var = DMatrix::zeros(n, n);
        for (s, &m) in sums.iter().zip(&sizes) {
            let dev = s / m as f64 - &gram;
            var += dev.component_mul(&dev);
        }
        let b = batches as f64;
        var.map(|v| (v / (b - 1.0) / b).sqrt())
    } else {
        DMatrix::from_element(n, n, f64::INFINITY)
    };
    GramEstimate::new(
        gram,
        GramMethod::MonteCarlo {
            samples: n_samples,
            batches,
        },
        Some(stderr),
        None,
    )
}

fn check_sphere_rows(x: &DMatrix<f64>) -> Result<()> {
    let d = x.ncols() as f64;
    for (i, row) in x.row_iter().enumerate() {
        let sq = row.norm_squared();
        if (sq - d).abs() > 1e-8 * d {
            return Err(Error::InvalidDataset(format!(
                "row {i} has squared norm {sq}, expected d = {d}"
            )));
        }
    }
    Ok(())
}

/// Truncated Hermite series `sum_{k <= r_max} mu_k^2 (<x_i, x_j> / d)^k`,
/// valid for rows of norm `sqrt(d)`.
pub fn gram_hermite(x: &DMatrix<f64>, spec: &HermiteSpec, r_max: usize) -> Result<GramEstimate> {
    check_sphere_rows(x)?;
    if r_max > spec.r_max() {
        return Err(Error::InvalidArgument(format!(
            "r_max {r_max} exceeds the {} available coefficients",
            spec.coeffs.len()
        )));
    }
    let d = x.ncols() as f64;
    let rho = (x * x.transpose()) / d;
    let mut gram = rho.map(|v| {
        let mut pow = 1.0;
        let mut acc = 0.0;
        for mu in &spec.coeffs[..=r_max] {
            acc += mu * mu * pow;
            pow *= v;
        }
        acc
    });
    gram = (&gram + gram.transpose()) * 0.5;
    GramEstimate::new(gram, GramMethod::Hermite { r_max }, None, Some(spec.tail_after(r_max)))
}

/// Same series assembled from explicit Khatri-Rao powers,
/// `sum_k (mu_k^2 / d^k) K_k K_k^T`.
pub fn gram_hermite_dense(x: &DMatrix<f64>, spec: &HermiteSpec, r_max: usize) -> Result<GramEstimate> {
    check_sphere_rows(x)?;
    if r_max > spec.r_max() {
        return Err(Error::InvalidArgument(format!(
            "r_max {r_max} exceeds available coefficients"
        )));
    }
    let (n, d) = x.shape();
    let mut gram = DMatrix::from_element(n, n, spec.coeffs[0].powi(2));
    for k in 1..=r_max {
        let kr = khatri_rao_power(x, k)?;
        gram += (&kr * kr.transpose()) * (spec.coeffs[k].powi(2) / (d as f64).powi(k as i32));
    }
    gram = (&gram + gram.transpose()) * 0.5;
    GramEstimate::new(gram, GramMethod::Hermite { r_max }, None, Some(spec.tail_after(r_max)))
}

/// Monte-Carlo mean and standard error of `h_j(<w, u>) h_k(<w, v>)` over
/// `w ~ N(0, I_d)`.
pub fn hermite_correlation_mc(
    u: &[f64],
    v: &[f64],
    j: usize,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidArgument(
            "vectors must be non-empty and of equal length".into(),
        ));
    }
    if j.max(k) > MAX_DEGREE || n_samples < 2 {
        return Err(Error::InvalidArgument(
            "degree too large or fewer than two samples".into(),
        ));
    }
    let mut r = rng::stream(seed, rng::MC_STREAM_BASE);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut w = vec![0.0; u.len()];
    for _ in 0..n_samples {
        for wi in w.iter_mut() {
            *wi = rng::standard_normal(&mut r);
        }
        let a: f64 = w.iter().zip(u).map(|(p, q)| p * q).sum();
        let b: f64 = w.iter().zip(v).map(|(p, q)| p * q).sum();
        let val = hermite_all(j, a)[j] * hermite_all(k, b)[k];
        sum += val;
        sum_sq += val * val;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
