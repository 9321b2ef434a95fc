//! Initialization schemes and synthetic data.
//!
//! Every layer draws from its own ChaCha20 stream (see [`crate::rng`]), so
//! changing one layer's width or scheme leaves the other layers' draws intact.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::certificates::{certify, Certificate};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{Dataset, Params, Shape};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Width-`N` class: LeCun first layer, small second layer, well-conditioned deep layers.
    Section31,
    Lecun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeepStyle {
    /// `N(0, (200c)^2 / n_{l-1})` entries.
    Gaussian,
    /// `c * I` on the top `n_l x n_l` block, zeros below.
    ScaledIdentity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub scheme: Scheme,
    /// Gain of the deep layers; must exceed 1.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Entry variance of `W_2`; 0 gives `W_2 = 0`.
    #[serde(default)]
    pub v: f64,
    #[serde(default = "default_style")]
    pub deep_style: DeepStyle,
    #[serde(default)]
    pub seed: u64,
}

fn default_c() -> f64 {
    2.0
}

fn default_style() -> DeepStyle {
    DeepStyle::ScaledIdentity
}

impl InitConfig {
    pub fn section31(c: f64, v: f64, deep_style: DeepStyle, seed: u64) -> Self {
        Self {
            scheme: Scheme::Section31,
            c,
            v,
            deep_style,
            seed,
        }
    }

    pub fn lecun(seed: u64) -> Self {
        Self {
            scheme: Scheme::Lecun,
            c: default_c(),
            v: 0.0,
            deep_style: default_style(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::Section31 {
            if !(self.c > 1.0 && self.c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "gain c must be finite and > 1, got {}",
                    self.c
                )));
            }
            if !(self.v >= 0.0 && self.v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "variance v must be finite and >= 0, got {}",
                    self.v
                )));
            }
        }
        Ok(())
    }
}

/// Dispatches on `cfg.scheme`.
pub fn initialize(shape: &Shape, data: &Dataset, cfg: &InitConfig) -> Result<Params> {
    match cfg.scheme {
        Scheme::Section31 => init_section31(shape, data, cfg),
        Scheme::Lecun => Ok(init_lecun(shape, cfg.seed)),
    }
}

fn lecun_layer(shape: &Shape, seed: u64, l: usize) -> DMatrix<f64> {
    let (rows, cols) = shape.layer_dims(l);
    rng::gaussian_matrix(&mut rng::layer_stream(seed, l), rows, cols, 1.0 / (rows as f64).sqrt())
}

/// `[W_l]_{ij} ~ N(0, 1/n_{l-1})` for every layer.
pub fn init_lecun(shape: &Shape, seed: u64) -> Params {
    let weights = (1..=shape.depth()).map(|l| lecun_layer(shape, seed, l)).collect();
    Params::new(weights).expect("shape-derived weights chain")
}

/// Top-block scaled identity of the given dimensions.
pub fn scaled_identity(rows: usize, cols: usize, s: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows.min(cols) {
        m[(i, i)] = s;
    }
    m
}

/// The width-`N` initialization class.
///
/// With `v = 0` the network output at initialization is exactly zero.
/// The scaled-identity deep layers use scale `c`, the smallest scale with
/// `lam_l >= 1` and `lam_l^2 >= c * lbar_l`.
pub fn init_section31(shape: &Shape, data: &Dataset, cfg: &InitConfig) -> Result<Params> {
    cfg.validate()?;
    if shape.input_dim() != data.input_dim() {
        return Err(Error::InvalidShape(format!(
            "shape input dimension {} but data has {} columns",
            shape.input_dim(),
            data.input_dim()
        )));
    }
    if shape.width(1) < data.n_samples() {
        warn!(
            "first layer width {} is below N = {}; lambda_F will be 0",
            shape.width(1),
            data.n_samples()
        );
    }
    if cfg.deep_style == DeepStyle::Gaussian {
        for l in 3..=shape.depth() {
            let (n_prev, n_l) = shape.layer_dims(l);
            if (n_prev as f64).sqrt() < 1.01 * (n_l as f64).sqrt() {
                return Err(Error::InvalidShape(format!(
                    "gaussian deep layers need sqrt(n_{}) >= 1.01 sqrt(n_{l}); got n_{} = {n_prev}, n_{l} = {n_l}",
                    l - 1,
                    l - 1
                )));
            }
        }
    }

    let mut weights = Vec::with_capacity(shape.depth());
    weights.push(lecun_layer(shape, cfg.seed, 1));
    let (r2, c2) = shape.layer_dims(2);
    weights.push(if cfg.v == 0.0 {
        DMatrix::zeros(r2, c2)
    } else {
        rng::gaussian_matrix(&mut rng::layer_stream(cfg.seed, 2), r2, c2, cfg.v.sqrt())
    });
    for l in 3..=shape.depth() {
        let (rows, cols) = shape.layer_dims(l);
        weights.push(match cfg.deep_style {
            DeepStyle::ScaledIdentity => scaled_identity(rows, cols, cfg.c),
            DeepStyle::Gaussian => rng::gaussian_matrix(
                &mut rng::layer_stream(cfg.seed, l),
                rows,
                cols,
                200.0 * cfg.c / (rows as f64).sqrt(),
            ),
        });
    }
    Params::new(weights)
}

/// Outcome of [`tune_gain`].
#[derive(Debug, Clone)]
pub struct TunedInit {
    pub c: f64,
    pub params: Params,
    pub certificate: Certificate,
    pub attempts: usize,
}

/// Doubles `c` from `cfg.c` until both initial conditions hold, trying at
/// most `max_attempts` values. `W_1` does not depend on `c`.
pub fn tune_gain(
    shape: &Shape,
    data: &Dataset,
    act: &ActivationParams,
    cfg: &InitConfig,
    max_attempts: usize,
) -> Result<Option<TunedInit>> {
    let mut cfg = cfg.clone();
    for attempt in 1..=max_attempts {
        let params = init_section31(shape, data, &cfg)?;
        let certificate = certify(&params, data, act)?;
        if certificate.holds() {
            return Ok(Some(TunedInit {
                c: cfg.c,
                params,
                certificate,
                attempts: attempt,
            }));
        }
        cfg.c *= 2.0;
    }
    Ok(None)
}

/// Width and step-size requirements for LeCun initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthPlan {
    pub n1_required: f64,
    /// The four arguments of the max defining `n1_required`.
    pub terms: [f64; 4],
    /// Step-size ceiling at width `n1_required`.
    pub eta_max_lecun: f64,
    /// `t0` is at least its lower floor.
    pub t0_ok: bool,
    pub t0_floor: f64,
    pub n_samples: usize,
    pub d: usize,
    pub lambda_star: f64,
    pub depth: usize,
    pub output_width: usize,
    pub t: f64,
    pub t0: f64,
    pub c_const: f64,
    pub x_spec: f64,
    pub x_fro: f64,
    pub y_fro: f64,
    pub note: String,
}

impl WidthPlan {
    /// Step-size ceiling for an actual first-layer width `n1`.
    pub fn eta_max_at(&self, n1: f64) -> f64 {
        let d = self.d as f64;
        let head = (self.output_width as f64).sqrt() + self.t;
        let scale = self.x_fro.powi(2).max(1.0);
        let size = 1f64.max(head * self.x_fro / d.sqrt()).max(self.y_fro);
        1.0 / (2f64.powf(self.c_const * self.depth as f64) * n1 / d * scale * size)
    }
}

/// `t0` floor: `max(1, sqrt(4/d * ln max(1, 2 sqrt(6d) ||X||_2^2 / lambda*)))`.
pub fn t0_floor(d: usize, x_spec: f64, lambda_star: f64) -> f64 {
    let d = d as f64;
    let inner = (2.0 * (6.0 * d).sqrt() * x_spec * x_spec / lambda_star).max(1.0);
    (4.0 / d * inner.ln()).sqrt().max(1.0)
}

/// Literal evaluation of the LeCun first-layer width condition.
///
/// The constant in the exponent is unknown; `c_const` is supplied by the
/// caller and the result is annotated as conservative.
pub fn required_width_lecun(
    data: &Dataset,
    lambda_star: f64,
    depth: usize,
    output_width: usize,
    t: f64,
    t0: f64,
    c_const: f64,
) -> Result<WidthPlan> {
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda* must be positive, got {lambda_star}"
        )));
    }
    if !(t > 0.0) || !(c_const > 0.0) {
        return Err(Error::InvalidArgument("t and c_const must be positive".into()));
    }
    let n = data.n_samples();
    let d = data.input_dim();
    let (nf, df) = (n as f64, d as f64);
    let x_spec = linalg::spectral_norm(data.x(), "X")?;
    let x_fro = data.x().norm();
    let y_fro = data.y().norm();
    let floor = t0_floor(d, x_spec, lambda_star);

    let head = (output_width as f64).sqrt() + t;
    let third = c_const * t0 * t0 * df * x_spec * x_spec * (t0 * t0 + nf.ln()) / lambda_star;
    let fourth = 2f64.powf(c_const * depth as f64) * x_fro * x_fro / (df * lambda_star * lambda_star)
        * (head * x_fro / df.sqrt() + y_fro).powi(2);
    let terms = [nf, df, third, fourth];
    let n1_required = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut plan = WidthPlan {
        n1_required,
        terms,
        eta_max_lecun: 0.0,
        t0_ok: t0 >= floor,
        t0_floor: floor,
        n_samples: n,
        d,
        lambda_star,
        depth,
        output_width,
        t,
        t0,
        c_const,
        x_spec,
        x_fro,
        y_fro,
        note: "conservative: depends on unspecified constant c".into(),
    };
    plan.eta_max_lecun = plan.eta_max_at(n1_required);
    if !plan.t0_ok {
        warn!("t0 = {t0} is below its floor {floor}");
    }
    Ok(plan)
}

/// Growing-width condition `sqrt(n_{l-1}) >= 1.01 (sqrt(n_l) + t)` for `l = 2..L`.
pub fn growing_widths_ok(shape: &Shape, t: f64) -> bool {
    (2..=shape.depth()).all(|l| {
        let (a, b) = shape.layer_dims(l);
        (a as f64).sqrt() >= 1.01 * ((b as f64).sqrt() + t)
    })
}

/// `N` points uniform on the sphere of the given radius in `R^d`.
pub fn sphere_data(n: usize, d: usize, radius: f64, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("sphere data needs N, d >= 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let mut r = rng::stream(seed, rng::DATA_STREAM);
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut norm = 0.0;
        while norm == 0.0 {
            for j in 0..d {
                x[(i, j)] = rng::standard_normal(&mut r);
            }
            norm = x.row(i).norm();
        }
        x.row_mut(i).apply(|v| *v = *v / norm * radius);
    }
    Ok(x)
}

/// Standard Gaussian labels scaled by `scale`, from the label stream.
pub fn gaussian_labels(n: usize, out: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    rng::gaussian_matrix(&mut rng::stream(seed, rng::LABEL_STREAM), n, out, scale)
}

/// Sphere inputs of radius `sqrt(d)` with Gaussian labels.
pub fn synthetic_dataset(n: usize, d: usize, out: usize, label_scale: f64, seed: u64) -> Result<Dataset> {
    let x = sphere_data(n, d, (d as f64).sqrt(), seed)?;
    Dataset::new(x, gaussian_labels(n, out, label_scale, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network;

    #[test]
    fn zero_second_layer_gives_zero_output() {
        let shape = Shape::new(4, vec![10, 5, 3, 2]).unwrap();
        let data = synthetic_dataset(6, 4, 2, 1.0, 3).unwrap();
        let cfg = InitConfig::section31(3.0, 0.0, DeepStyle::ScaledIdentity, 3);
        let p = init_section31(&shape, &data, &cfg).unwrap();
        let act = ActivationParams::new(0.5, 1.0).unwrap();
        let out = network::forward(&p, &data, &act).unwrap();
        assert!(out.output().iter().all(|&v| v == 0.0));
        let phi0 = network::trace_loss(&out, &data);
        assert_eq!(phi0, 0.5 * data.y().norm_squared());
    }

    #[test]
    fn scaled_identity_spectrum() {
        let m = scaled_identity(6, 4, 2.5);
        let (lo, hi) = linalg::extreme_singular_values(&m, "m").unwrap();
        assert!((lo - 2.5).abs() < 1e-14 && (hi - 2.5).abs() < 1e-14);
    }

    #[test]
    fn gaussian_style_requires_width_ratio() {
        let shape = Shape::new(4, vec![10, 4, 4]).unwrap();
        let data = synthetic_dataset(3, 4, 4, 1.0, 0).unwrap();
        let cfg = InitConfig::section31(2.0, 0.0, DeepStyle::Gaussian, 0);
        assert!(init_section31(&shape, &data, &cfg).is_err());
    }

    #[test]
    fn rejects_bad_gain() {
        let shape = Shape::new(4, vec![10, 4, 4]).unwrap();
        let data = synthetic_dataset(3, 4, 4, 1.0, 0).unwrap();
        let cfg = InitConfig::section31(1.0, 0.0, DeepStyle::ScaledIdentity, 0);
        assert!(init_section31(&shape, &data, &cfg).is_err());
    }

    #[test]
    fn lecun_is_deterministic() {
        let shape = Shape::new(5, vec![8, 4, 2]).unwrap();
        assert_eq!(init_lecun(&shape, 9), init_lecun(&shape, 9));
        assert_ne!(init_lecun(&shape, 9), init_lecun(&shape, 10));
    }

    #[test]
    fn adding_a_layer_keeps_earlier_draws() {
        let a = init_lecun(&Shape::new(5, vec![8, 4]).unwrap(), 1);
        let b = init_lecun(&Shape::new(5, vec![8, 4, 3]).unwrap(), 1);
        assert_eq!(a.weight(1), b.weight(1));
        assert_eq!(a.weight(2), b.weight(2));
    }

    #[test]
    fn sphere_rows_on_sphere() {
        let x = sphere_data(50, 7, 7f64.sqrt(), 4).unwrap();
        for row in x.row_iter() {
            assert!((row.norm() - 7f64.sqrt()).abs() < 1e-12);
        }
        let x1 = sphere_data(20, 1, 1.0, 4).unwrap();
        assert!(x1.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn width_plan_scales_inverse_square_in_lambda() {
        let data = synthetic_dataset(32, 8, 2, 1.0, 5).unwrap();
        let a = required_width_lecun(&data, 0.5, 3, 2, 1.0, 2.0, 1.0).unwrap();
        let b = required_width_lecun(&data, 1.0, 3, 2, 1.0, 2.0, 1.0).unwrap();
        assert!((a.terms[3] / b.terms[3] - 4.0).abs() < 1e-12);
        assert!(a.n1_required >= 32.0);
        assert!(required_width_lecun(&data, 0.0, 3, 2, 1.0, 2.0, 1.0).is_err());
    }
}
