//! Bias-free fully connected networks with a pyramidal tail.
//!
//! Layer `l` maps `F_{l-1}` (N x n_{l-1}) to `G_l = F_{l-1} W_l` and
//! `F_l = sigma(G_l)` for hidden layers; the output layer is linear.
//!
//! Vectorization is column-major everywhere: `vec(M)` stacks the columns of
//! `M`, so entry `(i, j)` of an `N x n` matrix sits at `i + N * j`. Jacobian
//! blocks, gradients and residuals all use this ordering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::error::{Error, Result};

/// Layer widths: input dimension `d = n_0` and `n_1 .. n_L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct Shape {
    d: usize,
    widths: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawShape {
    d: usize,
    widths: Vec<usize>,
}

impl TryFrom<RawShape> for Shape {
    type Error = Error;
    fn try_from(raw: RawShape) -> Result<Self> {
        Shape::new(raw.d, raw.widths)
    }
}

impl From<Shape> for RawShape {
    fn from(s: Shape) -> Self {
        RawShape {
            d: s.d,
            widths: s.widths,
        }
    }
}

impl Shape {
    /// Requires `L >= 2`, positive widths and `n_2 >= n_3 >= ... >= n_L`.
    /// The first hidden layer is unconstrained here; `n_1 >= N` is a
    /// convergence hypothesis checked against a dataset by the certificate.
    pub fn new(d: usize, widths: Vec<usize>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidShape("input dimension must be positive".into()));
        }
        if widths.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "depth must be at least 2, got {}",
                widths.len()
            )));
        }
        if let Some(pos) = widths.iter().position(|&n| n == 0) {
            return Err(Error::InvalidShape(format!("layer {} has zero width", pos + 1)));
        }
        for l in 2..widths.len() {
            if widths[l] > widths[l - 1] {
                return Err(Error::InvalidShape(format!(
                    "not pyramidal: n_{} = {} < n_{} = {}",
                    l,
                    widths[l - 1],
                    l + 1,
                    widths[l]
                )));
            }
        }
        Ok(Self { d, widths })
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("depth >= 2")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `n_l`, with `n_0 = d`.
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            self.d
        } else {
            self.widths[l - 1]
        }
    }

    /// Dimensions `(n_{l-1}, n_l)` of `W_l`, `l` 1-based.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        (self.width(l - 1), self.width(l))
    }

    pub fn num_params(&self) -> usize {
        (1..=self.depth()).map(|l| self.width(l - 1) * self.width(l)).sum()
    }
}

/// Training input `X` (N x d) and output `Y` (N x n_L).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidDataset("need at least one sample".into()));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidDataset(
                "input and output dimensions must be positive".into(),
            ));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::InvalidDataset(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("NaN or infinite entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    /// Same inputs, new targets.
    pub fn with_targets(&self, y: DMatrix<f64>) -> Result<Self> {
        Dataset::new(self.x.clone(), y)
    }
}

/// Weights `W_1 .. W_L` with `W_l` of size `n_{l-1} x n_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    weights: Vec<DMatrix<f64>>,
}

impl Params {
    /// Checks that consecutive layers chain and that every entry is finite.
    pub fn new(weights: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "depth must be at least 2, got {}",
                weights.len()
            )));
        }
        for l in 1..weights.len() {
            if weights[l].nrows() != weights[l - 1].ncols() {
                return Err(Error::DimensionMismatch {
                    layer: l + 1,
                    expected: (weights[l - 1].ncols(), weights[l].ncols()),
                    found: weights[l].shape(),
                });
            }
        }
        if let Some(l) = weights.iter().position(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(format!("W_{} has non-finite entries", l + 1)));
        }
        Ok(Self { weights })
    }

    pub fn zeros(shape: &Shape) -> Self {
        let weights = (1..=shape.depth())
            .map(|l| {
                let (r, c) = shape.layer_dims(l);
                DMatrix::zeros(r, c)
            })
            .collect();
        Self { weights }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    /// `W_l`, 1-based.
    pub fn weight(&self, l: usize) -> &DMatrix<f64> {
        &self.weights[l - 1]
    }

    pub(crate) fn weight_mut(&mut self, l: usize) -> &mut DMatrix<f64> {
        &mut self.weights[l - 1]
    }

    pub fn into_weights(self) -> Vec<DMatrix<f64>> {
        self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("depth >= 2").ncols()
    }

    /// Layer widths `(d, [n_1..n_L])` without the pyramidal check.
    pub fn dims(&self) -> (usize, Vec<usize>) {
        (self.input_dim(), self.weights.iter().map(|w| w.ncols()).collect())
    }

    /// Verifies every `W_l` has the dimensions `shape` prescribes.
    pub fn check_shape(&self, shape: &Shape) -> Result<()> {
        if self.depth() != shape.depth() {
            return Err(Error::InvalidShape(format!(
                "params have depth {}, shape has depth {}",
                self.depth(),
                shape.depth()
            )));
        }
        for l in 1..=self.depth() {
            let expected = shape.layer_dims(l);
            if self.weight(l).shape() != expected {
                return Err(Error::DimensionMismatch {
                    layer: l,
                    expected,
                    found: self.weight(l).shape(),
                });
            }
        }
        Ok(())
    }

    /// `sqrt(sum_l ||W_l^a - W_l^b||_F^2)`.
    pub fn distance(&self, other: &Params) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// All weights stacked as `(vec(W_1), ..., vec(W_L))`.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(self.num_params(), self.weights.iter().flat_map(|w| w.iter().copied()))
    }

    /// Inverse of [`Params::flatten`] using this instance's layer sizes.
    pub fn unflatten_like(&self, flat: &DVector<f64>) -> Result<Params> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidArgument(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        let weights = self
            .weights
            .iter()
            .map(|w| {
                let m = DMatrix::from_column_slice(w.nrows(), w.ncols(), &flat.as_slice()[offset..offset + w.len()]);
                offset += w.len();
                m
            })
            .collect();
        Params::new(weights)
    }
}

/// Pre-activations `G_1..G_L` and outputs `F_0..F_L` of one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pre: Vec<DMatrix<f64>>,
    out: Vec<DMatrix<f64>>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    /// `G_l`, 1-based. `G_L = F_L`.
    pub fn pre_activation(&self, l: usize) -> &DMatrix<f64> {
        &self.pre[l - 1]
    }

    /// `F_l` for `l` in `0..=L`; `F_0 = X`.
    pub fn layer_output(&self, l: usize) -> &DMatrix<f64> {
        &self.out[l]
    }

    /// `F_L`.
    pub fn output(&self) -> &DMatrix<f64> {
        self.out.last().expect("non-empty trace")
    }

    /// `sigma'(G_l)` entrywise; the diagonal of `Sigma_l` is its `vec`.
    pub fn activation_slopes(&self, l: usize, act: &ActivationParams) -> DMatrix<f64> {
        self.pre[l - 1].map(|g| act.slope(g))
    }

    /// Smallest diagonal entry of `Sigma_l`, which is its smallest singular value.
    pub fn min_slope(&self, l: usize, act: &ActivationParams) -> f64 {
        self.pre[l - 1]
            .iter()
            .map(|&g| act.slope(g))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Forward pass on raw inputs.
pub fn forward_inputs(params: &Params, x: &DMatrix<f64>, act: &ActivationParams) -> Result<ForwardTrace> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            layer: 1,
            expected: (x.ncols(), params.weight(1).ncols()),
            found: params.weight(1).shape(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("NaN or infinite input entry".into()));
    }
    let depth = params.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut out = Vec::with_capacity(depth + 1);
    out.push(x.clone());
    for l in 1..=depth {
        let g = &out[l - 1] * params.weight(l);
        let f = if l < depth { g.map(|v| act.value(v)) } else { g.clone() };
        pre.push(g);
        out.push(f);
    }
    Ok(ForwardTrace { pre, out })
}

pub fn forward(params: &Params, data: &Dataset, act: &ActivationParams) -> Result<ForwardTrace> {
    check_output_dim(params, data)?;
    forward_inputs(params, data.x(), act)
}

fn check_output_dim(params: &Params, data: &Dataset) -> Result<()> {
    if params.input_dim() != data.input_dim() {
        return Err(Error::DimensionMismatch {
            layer: 1,
            expected: (data.input_dim(), params.weight(1).ncols()),
            found: params.weight(1).shape(),
        });
    }
    if params.output_dim() != data.output_dim() {
        let l = params.depth();
        return Err(Error::DimensionMismatch {
            layer: l,
            expected: (params.weight(l).nrows(), data.output_dim()),
            found: params.weight(l).shape(),
        });
    }
    Ok(())
}

/// `F_L - Y`.
pub fn residual(trace: &ForwardTrace, data: &Dataset) -> DMatrix<f64> {
    trace.output() - data.y()
}

/// Square loss `0.5 * ||f_L - y||^2` of a computed trace.
pub fn trace_loss(trace: &ForwardTrace, data: &Dataset) -> f64 {
    0.5 * residual(trace, data).norm_squared()
}

pub fn loss(params: &Params, data: &Dataset, act: &ActivationParams) -> Result<f64> {
    Ok(trace_loss(&forward(params, data, act)?, data))
}

/// Column-major stacking.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if rows * cols != v.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act() -> ActivationParams {
        ActivationParams::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(Shape::new(3, vec![4]).is_err());
        assert!(Shape::new(0, vec![4, 2]).is_err());
        assert!(Shape::new(3, vec![4, 0]).is_err());
        assert!(Shape::new(3, vec![4, 2, 3]).is_err());
        // n_1 may be smaller than n_2
        let s = Shape::new(3, vec![2, 5, 5, 1]).unwrap();
        assert_eq!(s.layer_dims(1), (3, 2));
        assert_eq!(s.layer_dims(4), (5, 1));
        assert_eq!(s.num_params(), 6 + 10 + 25 + 5);
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_element(2, 3, 1.0);
        assert!(Dataset::new(x.clone(), DMatrix::zeros(3, 1)).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(Dataset::new(bad, DMatrix::zeros(2, 1)).is_err());
        assert!(Dataset::new(DMatrix::zeros(0, 3), DMatrix::zeros(0, 1)).is_err());
        assert!(Dataset::new(x, DMatrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn params_must_chain() {
        let err = Params::new(vec![DMatrix::zeros(3, 4), DMatrix::zeros(5, 2)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { layer: 2, .. }));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let shape = Shape::new(2, vec![4, 2, 1]).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.3, -1.0, 4.0]);
        let data = Dataset::new(x, DMatrix::zeros(3, 1)).unwrap();
        let trace = forward(&Params::zeros(&shape), &data, &act()).unwrap();
        assert!(trace.output().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let w = vec![
            DMatrix::from_element(2, 4, 0.7),
            DMatrix::from_element(4, 2, -1.3),
            DMatrix::from_element(2, 1, 2.0),
        ];
        let params = Params::new(w).unwrap();
        let data = Dataset::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 1)).unwrap();
        let trace = forward(&params, &data, &act()).unwrap();
        assert!(trace.output().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_of_zero_net() {
        let shape = Shape::new(2, vec![3, 2]).unwrap();
        // ||Y||_F = 2
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let data = Dataset::new(DMatrix::from_element(2, 2, 0.3), y).unwrap();
        assert_eq!(loss(&Params::zeros(&shape), &data, &act()).unwrap(), 2.0);
    }

    #[test]
    fn forward_reports_offending_layer() {
        let params = Params::new(vec![DMatrix::zeros(3, 4), DMatrix::zeros(4, 2)]).unwrap();
        let data = Dataset::new(DMatrix::zeros(2, 5), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            forward(&params, &data, &act()),
            Err(Error::DimensionMismatch { layer: 1, .. })
        ));
        let data = Dataset::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            forward(&params, &data, &act()),
            Err(Error::DimensionMismatch { layer: 2, .. })
        ));
    }

    #[test]
    fn vec_is_column_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        let row = DMatrix::from_row_slice(1, 4, &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(vec(&row).as_slice(), &[5.0, 6.0, 7.0, 8.0]);
        let back = unvec(&vec(&m), 2, 2).unwrap();
        assert_eq!(back, m);
        assert!(unvec(&vec(&m), 3, 2).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let params = Params::new(vec![
            DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64),
            DMatrix::from_fn(3, 1, |i, _| -(i as f64)),
        ])
        .unwrap();
        let back = params.unflatten_like(&params.flatten()).unwrap();
        assert_eq!(back, params);
    }
}
