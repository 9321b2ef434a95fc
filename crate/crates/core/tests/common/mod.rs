//! Reference implementations used as test oracles. Nothing here calls the
//! library's forward pass, gradient or activation code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pyrcert::{ActivationParams, Dataset, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn act(gamma: f64, beta: f64) -> ActivationParams {
    ActivationParams::new(gamma, beta).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Random pyramidal instance with `W_l ~ N(0, scale^2 / n_{l-1})`.
pub fn instance(seed: u64, n: usize, d: usize, widths: &[usize], scale: f64) -> (Params, Dataset) {
    let mut r = rng(seed);
    let mut dims = vec![d];
    dims.extend_from_slice(widths);
    let weights = dims
        .windows(2)
        .map(|w| gaussian(&mut r, w[0], w[1], scale / (w[0] as f64).sqrt()))
        .collect();
    let x = gaussian(&mut r, n, d, 1.0);
    let y = gaussian(&mut r, n, *widths.last().unwrap(), 1.0);
    (Params::new(weights).unwrap(), Dataset::new(x, y).unwrap())
}

/// Random small pyramidal shape: `N <= max_n`, `d <= max_d`, `2 <= L <= max_l`.
pub fn random_dims(seed: u64, max_n: usize, max_d: usize, max_l: usize) -> (usize, usize, Vec<usize>) {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let n = r.gen_range(1..=max_n);
    let d = r.gen_range(1..=max_d);
    let depth = r.gen_range(2..=max_l);
    let mut widths = vec![r.gen_range(1..=8)];
    let mut cap = 6;
    for _ in 1..depth {
        let w = r.gen_range(1..=cap);
        widths.push(w);
        cap = w;
    }
    (n, d, widths)
}

fn psi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed form of the smoothed leaky ReLU, written out term by term.
pub fn sigma_ref(gamma: f64, beta: f64, x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let a = (1.0 - gamma).powi(2) / (2.0 * pi * beta);
    let z = beta * (2.0 * pi).sqrt() * x / (1.0 - gamma);
    -a + a * (-pi * beta * beta * x * x / (1.0 - gamma).powi(2)).exp() + x * psi(z) + gamma * x * psi(-z)
}

pub fn sigma_prime_ref(gamma: f64, beta: f64, x: f64) -> f64 {
    let z = beta * (2.0 * std::f64::consts::PI).sqrt() * x / (1.0 - gamma);
    gamma + (1.0 - gamma) * psi(z)
}

/// Pre-activations `G_1..G_L` and outputs `F_0..F_L` by explicit loops.
pub fn naive_forward(
    weights: &[DMatrix<f64>],
    x: &DMatrix<f64>,
    gamma: f64,
    beta: f64,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let depth = weights.len();
    let mut gs = Vec::new();
    let mut fs = vec![x.clone()];
    for (l, w) in weights.iter().enumerate() {
        let f = fs.last().unwrap();
        let mut g = DMatrix::zeros(f.nrows(), w.ncols());
        for i in 0..f.nrows() {
            for j in 0..w.ncols() {
                let mut s = 0.0;
                for k in 0..f.ncols() {
                    s += f[(i, k)] * w[(k, j)];
                }
                g[(i, j)] = s;
            }
        }
        let out = if l + 1 < depth {
            g.map(|v| sigma_ref(gamma, beta, v))
        } else {
            g.clone()
        };
        gs.push(g);
        fs.push(out);
    }
    (gs, fs)
}

pub fn naive_loss(weights: &[DMatrix<f64>], x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64, beta: f64) -> f64 {
    let (_, fs) = naive_forward(weights, x, gamma, beta);
    let out = fs.last().unwrap();
    let mut s = 0.0;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            s += (out[(i, j)] - y[(i, j)]).powi(2);
        }
    }
    0.5 * s
}

/// Column-major stacking.
pub fn vec_cm(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = Vec::with_capacity(m.len());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v.push(m[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn diag_vec(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&vec_cm(m))
}

fn slope_diag(g: &DMatrix<f64>, gamma: f64, beta: f64) -> DMatrix<f64> {
    diag_vec(&g.map(|v| sigma_prime_ref(gamma, beta, v)))
}

/// `(I ⊗ F_{l-1}^T) prod_{p=l+1..L} Sigma_{p-1} (W_p ⊗ I_N) (f_L - y)`, built densely.
pub fn dense_gradient(
    weights: &[DMatrix<f64>],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    gamma: f64,
    beta: f64,
    l: usize,
) -> DVector<f64> {
    let depth = weights.len();
    let n = x.nrows();
    let (gs, fs) = naive_forward(weights, x, gamma, beta);
    let n_l = weights[l - 1].ncols();
    let mut m = kron(&DMatrix::identity(n_l, n_l), &fs[l - 1].transpose());
    for p in (l + 1)..=depth {
        let sigma = slope_diag(&gs[p - 2], gamma, beta);
        m = m * sigma * kron(&weights[p - 1], &DMatrix::identity(n, n));
    }
    m * (vec_cm(&fs[depth]) - vec_cm(y))
}

/// `prod_{p=0..L-l-1} (W_{L-p}^T ⊗ I_N) Sigma_{L-p-1} (I ⊗ F_{l-1})`, built densely.
pub fn dense_jacobian(weights: &[DMatrix<f64>], x: &DMatrix<f64>, gamma: f64, beta: f64, l: usize) -> DMatrix<f64> {
    let depth = weights.len();
    let n = x.nrows();
    let (gs, fs) = naive_forward(weights, x, gamma, beta);
    let n_out = weights[depth - 1].ncols();
    let mut m = DMatrix::<f64>::identity(n * n_out, n * n_out);
    for p in 0..(depth - l) {
        let w = &weights[depth - p - 1];
        m *= kron(&w.transpose(), &DMatrix::identity(n, n));
        m *= slope_diag(&gs[depth - p - 2], gamma, beta);
    }
    let n_l = weights[l - 1].ncols();
    m * kron(&DMatrix::identity(n_l, n_l), &fs[l - 1])
}

/// Central differences of the loss with respect to every entry of `W_l`.
pub fn fd_gradient(params: &Params, data: &Dataset, gamma: f64, beta: f64, l: usize, h: f64) -> DMatrix<f64> {
    let base: Vec<DMatrix<f64>> = params.weights().to_vec();
    let (r, c) = base[l - 1].shape();
    DMatrix::from_fn(r, c, |i, j| {
        let mut plus = base.clone();
        plus[l - 1][(i, j)] += h;
        let mut minus = base.clone();
        minus[l - 1][(i, j)] -= h;
        (naive_loss(&plus, data.x(), data.y(), gamma, beta) - naive_loss(&minus, data.x(), data.y(), gamma, beta))
            / (2.0 * h)
    })
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// The activation as a Gaussian-kernel smoothing of `max(gamma u, u)`,
/// integrated numerically on either side of the kink.
pub fn sigma_by_quadrature(gamma: f64, beta: f64, x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let k = beta / (1.0 - gamma);
    let integrand = move |u: f64| u.max(gamma * u) * k * (-pi * k * k * (x - u).powi(2)).exp();
    let width = 40.0 / (k * (2.0 * pi).sqrt());
    let (lo, hi) = (x - width, x + width);
    // panels narrower than the kernel so no peak hides between samples
    let panel = 0.25 / k;
    let mut total = 0.0;
    let mut integrate = |a: f64, b: f64| {
        let m = ((b - a) / panel).ceil().max(1.0) as usize;
        let step = (b - a) / m as f64;
        for i in 0..m {
            total += simpson(&integrand, a + i as f64 * step, a + (i + 1) as f64 * step, 1e-16);
        }
    };
    if lo < 0.0 {
        integrate(lo, hi.min(0.0));
    }
    if hi > 0.0 {
        integrate(lo.max(0.0), hi);
    }
    -(1.0 - gamma).powi(2) / (2.0 * pi * beta) + total
}
