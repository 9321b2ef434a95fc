//! Gradients, Jacobian blocks, the PL-type lower bound and the GD trainer.
//!
//! With `Sigma_l = diag(vec(sigma'(G_l)))` and the column-major `vec`, the
//! gradient of the square loss with respect to `W_l` is
//!
//! ```text
//! vec(grad_{W_l}) = (I ⊗ F_{l-1}^T) Sigma_l (W_{l+1} ⊗ I_N) ... Sigma_{L-1} (W_L ⊗ I_N) (f_L - y)
//! ```
//!
//! which is evaluated here by reverse accumulation:
//! `D_L = F_L - Y`, `D_l = (D_{l+1} W_{l+1}^T) ∘ sigma'(G_l)`, `grad_{W_l} = F_{l-1}^T D_l`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationParams;
use crate::certificates::Certificate;
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{self, Dataset, ForwardTrace, Params};

/// Per-layer gradients, shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    blocks: Vec<DMatrix<f64>>,
    sq_norm: f64,
}

impl GradientBundle {
    fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Self {
        let sq_norm = blocks.iter().map(|b| b.norm_squared()).sum();
        Self { blocks, sq_norm }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// `grad_{W_l}`, 1-based.
    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l - 1]
    }

    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }

    /// `(vec(grad_{W_1}), ..., vec(grad_{W_L}))`.
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.blocks.iter().map(|b| b.len()).sum();
        DVector::from_iterator(n, self.blocks.iter().flat_map(|b| b.iter().copied()))
    }
}

/// Reverse accumulation on an existing trace.
pub fn grad_from_trace(
    params: &Params,
    trace: &ForwardTrace,
    data: &Dataset,
    act: &ActivationParams,
) -> GradientBundle {
    let depth = params.depth();
    let mut blocks = vec![DMatrix::zeros(0, 0); depth];
    let mut delta = network::residual(trace, data);
    blocks[depth - 1] = trace.layer_output(depth - 1).tr_mul(&delta);
    for l in (1..depth).rev() {
        let back = &delta * params.weight(l + 1).transpose();
        delta = back.zip_map(trace.pre_activation(l), |d, g| d * act.slope(g));
        blocks[l - 1] = trace.layer_output(l - 1).tr_mul(&delta);
    }
    GradientBundle::from_blocks(blocks)
}

pub fn grad(params: &Params, data: &Dataset, act: &ActivationParams) -> Result<GradientBundle> {
    let trace = network::forward(params, data, act)?;
    Ok(grad_from_trace(params, &trace, data, act))
}

/// `d f_L / d vec(W_l)`, an `(N n_L) x (n_{l-1} n_l)` matrix.
///
/// Column `a + n_{l-1} b` is the directional derivative along the unit
/// perturbation of entry `(a, b)` of `W_l`, pushed forward layer by layer.
pub fn jacobian_block(params: &Params, data: &Dataset, act: &ActivationParams, l: usize) -> Result<DMatrix<f64>> {
    let depth = params.depth();
    if l == 0 || l > depth {
        return Err(Error::LayerOutOfRange { layer: l, depth });
    }
    let trace = network::forward(params, data, act)?;
    Ok(jacobian_block_from_trace(params, &trace, act, l))
}

pub(crate) fn jacobian_block_from_trace(
    params: &Params,
    trace: &ForwardTrace,
    act: &ActivationParams,
    l: usize,
) -> DMatrix<f64> {
    let depth = params.depth();
    let n = trace.layer_output(0).nrows();
    let (rows_in, cols_in) = params.weight(l).shape();
    let n_out = params.output_dim();
    let slopes: Vec<DMatrix<f64>> = (l..depth).map(|p| trace.activation_slopes(p, act)).collect();
    let f_prev = trace.layer_output(l - 1);

    let mut jac = DMatrix::zeros(n * n_out, rows_in * cols_in);
    for b in 0..cols_in {
        for a in 0..rows_in {
            let mut dg = DMatrix::zeros(n, cols_in);
            dg.column_mut(b).copy_from(&f_prev.column(a));
            for p in l..depth {
                let df = dg.component_mul(&slopes[p - l]);
                dg = df * params.weight(p + 1);
            }
            jac.column_mut(a + rows_in * b).copy_from_slice(dg.as_slice());
        }
    }
    jac
}

/// `sigma_min(F_1) * prod_{p=3..L} sigma_min(Sigma_{p-1}) sigma_min(W_p) * ||f_L - y||`.
///
/// `Sigma` is diagonal, so its smallest singular value is its smallest entry.
pub fn pl_lower_bound(trace: &ForwardTrace, params: &Params, data: &Dataset, act: &ActivationParams) -> Result<f64> {
    let depth = params.depth();
    if trace.depth() != depth {
        return Err(Error::InvalidArgument(format!(
            "trace depth {} does not match params depth {depth}",
            trace.depth()
        )));
    }
    if trace.output().shape() != data.y().shape() {
        return Err(Error::DimensionMismatch {
            layer: depth,
            expected: data.y().shape(),
            found: trace.output().shape(),
        });
    }
    let mut bound = linalg::row_sigma_min(trace.layer_output(1), "F_1")?;
    for p in 3..=depth {
        bound *= trace.min_slope(p - 1, act) * linalg::sigma_min(params.weight(p), &format!("W_{p}"))?;
    }
    Ok(bound * network::residual(trace, data).norm())
}

/// What the trainer records besides the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitor {
    /// Exact singular values of `F_1` and every `W_l` at logged steps.
    pub spectra: bool,
    /// Per-step check of the four trajectory invariants (needs a certificate).
    pub invariants: bool,
    /// Per-step check of the sufficient-decrease inequality.
    pub descent: bool,
    /// Replay the run to check the parameter-distance bound (needs a certificate).
    pub parameter_distance: bool,
}

impl Default for Monitor {
    fn default() -> Self {
        Self {
            spectra: true,
            invariants: true,
            descent: true,
            parameter_distance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub max_steps: u64,
    pub stop_loss: f64,
    /// Keep a full record every `log_every` steps (the first and last step
    /// are always kept). Invariant flags are checked at every step regardless.
    #[serde(default = "one")]
    pub log_every: u64,
    #[serde(default)]
    pub monitor: Monitor,
}

fn one() -> u64 {
    1
}

impl TrainConfig {
    pub fn new(eta: f64, max_steps: u64, stop_loss: f64) -> Self {
        Self {
            eta,
            max_steps,
            stop_loss,
            log_every: 1,
            monitor: Monitor::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if !(self.stop_loss >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop_loss must be >= 0, got {}",
                self.stop_loss
            )));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Index of each invariant in [`StepFlags`] and [`InvariantTally`].
pub const FLAG_NAMES: [&str; 5] = ["sv_W", "norm_W", "sv_F1", "loss_bound", "descent"];

/// Per-step verdicts; `None` when not checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags(pub [Option<bool>; 5]);

impl StepFlags {
    pub fn all_hold(&self) -> bool {
        self.0.iter().all(|f| f.unwrap_or(true))
    }

    /// One character per flag: `1` holds, `0` violated, `-` unchecked.
    pub fn encode(&self) -> String {
        self.0
            .iter()
            .map(|f| match f {
                Some(true) => '1',
                Some(false) => '0',
                None => '-',
            })
            .collect()
    }

    pub fn decode(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 5 {
            return Err(Error::Parse(format!("flags field {s:?} must have 5 characters")));
        }
        let mut flags = [None; 5];
        for (slot, c) in flags.iter_mut().zip(chars) {
            *slot = match c {
                '1' => Some(true),
                '0' => Some(false),
                '-' => None,
                other => return Err(Error::Parse(format!("bad flag character {other:?}"))),
            };
        }
        Ok(StepFlags(flags))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: u64,
    pub loss: f64,
    /// `(1 - eta alpha_0)^k Phi(theta_0)` when a certificate is attached.
    pub bound: Option<f64>,
    pub sv_f1: Option<f64>,
    /// `sigma_min(W_l)` for `l = 3..L`.
    pub min_sv_w: Vec<f64>,
    /// `||W_l||_2` for `l = 1..L`.
    pub max_norm_w: Vec<f64>,
    pub grad_norm: f64,
    pub flags: StepFlags,
}

/// Violation counts over every step of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantTally {
    pub steps_checked: u64,
    pub violations: [u64; 5],
    pub first_violation: Option<u64>,
    /// Steps where the cheap perturbation bound was inconclusive and an
    /// exact decomposition was needed.
    pub exact_fallbacks: u64,
}

impl InvariantTally {
    fn add(&mut self, k: u64, flags: &StepFlags) {
        self.steps_checked += 1;
        for (count, f) in self.violations.iter_mut().zip(flags.0.iter()) {
            if *f == Some(false) {
                *count += 1;
            }
        }
        if !flags.all_hold() && self.first_violation.is_none() {
            self.first_violation = Some(k);
        }
    }

    pub fn total_violations(&self) -> u64 {
        self.violations.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainOutcome {
    Converged,
    MaxSteps,
    /// Loss exceeded the divergence threshold or became NaN; the log up to
    /// that step is retained.
    Diverged {
        step: u64,
        loss: f64,
    },
}

/// Check of `||theta_k - theta_final|| <= (1 - eta alpha_0)^{k/2} Q_1 + slack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCheck {
    pub slack: f64,
    pub window: u64,
    pub steps_checked: u64,
    pub violations: u64,
    pub first_violation: Option<u64>,
    /// Largest ratio of observed distance to the bound.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub tally: InvariantTally,
    pub outcome: TrainOutcome,
    pub steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Whether `eta < min(1/alpha_0, 1/Q_0)` held for the attached certificate.
    pub certified_step: Option<bool>,
    pub distance: Option<DistanceCheck>,
    pub final_params: Params,
}

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Reference state for the cheap per-step invariant checks.
struct InvariantMonitor<'a> {
    cert: &'a Certificate,
    w0: Vec<DMatrix<f64>>,
    f1_0: DMatrix<f64>,
    w0_sigma_min: Vec<f64>,
    w0_norm: Vec<f64>,
    fallbacks: u64,
}

impl<'a> InvariantMonitor<'a> {
    fn new(cert: &'a Certificate, params0: &Params, trace0: &ForwardTrace) -> Result<Self> {
        let mut w0_sigma_min = Vec::new();
        let mut w0_norm = Vec::new();
        for (l, w) in params0.weights().iter().enumerate() {
            let (lo, hi) = linalg::extreme_singular_values(w, &format!("W_{}", l + 1))?;
            w0_sigma_min.push(lo);
            w0_norm.push(hi);
        }
        Ok(Self {
            cert,
            w0: params0.weights().to_vec(),
            f1_0: trace0.layer_output(1).clone(),
            w0_sigma_min,
            w0_norm,
            fallbacks: 0,
        })
    }

    /// First three invariants. Weyl's inequality bounds the drift of every
    /// singular value by the Frobenius norm of the change; only when that is
    /// inconclusive is an exact SVD taken.
    fn check(&mut self, params: &Params, trace: &ForwardTrace) -> Result<[bool; 3]> {
        let cert = self.cert;
        let depth = params.depth();
        let mut sv_ok = true;
        let mut norm_ok = true;
        for l in 1..=depth {
            let drift = (params.weight(l) - &self.w0[l - 1]).norm();
            let cap = 1.5 * cert.lambda_bar[l - 1];
            if self.w0_norm[l - 1] + drift > cap {
                self.fallbacks += 1;
                if linalg::spectral_norm(params.weight(l), "W_l")? > cap {
                    norm_ok = false;
                }
            }
            if l >= 3 {
                let floor = 0.5 * cert.lambda_min[l - 3];
                if self.w0_sigma_min[l - 1] - drift < floor {
                    self.fallbacks += 1;
                    if linalg::sigma_min(params.weight(l), "W_l")? < floor {
                        sv_ok = false;
                    }
                }
            }
        }
        let floor = 0.5 * cert.lambda_f;
        let drift = (trace.layer_output(1) - &self.f1_0).norm();
        let mut f1_ok = true;
        if cert.lambda_f - drift < floor {
            self.fallbacks += 1;
            if linalg::row_sigma_min(trace.layer_output(1), "F_1")? < floor {
                f1_ok = false;
            }
        }
        Ok([sv_ok, norm_ok, f1_ok])
    }
}

fn spectra(params: &Params, trace: &ForwardTrace) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let sv_f1 = linalg::row_sigma_min(trace.layer_output(1), "F_1")?;
    let mut min_sv = Vec::new();
    let mut norms = Vec::new();
    for l in 1..=params.depth() {
        let (lo, hi) = linalg::extreme_singular_values(params.weight(l), &format!("W_{l}"))?;
        if l >= 3 {
            min_sv.push(lo);
        }
        norms.push(hi);
    }
    Ok((sv_f1, min_sv, norms))
}

/// One GD step in place: `theta <- theta - eta * grad`.
fn apply_step(params: &mut Params, g: &GradientBundle, eta: f64) {
    for l in 1..=params.depth() {
        params.weight_mut(l).zip_apply(g.block(l), |w, d| *w -= eta * d);
    }
}

/// Full-batch gradient descent from `params0`.
///
/// With a certificate attached every step is checked against the four
/// trajectory invariants, and a converged run is replayed to check the
/// parameter-distance bound against the final iterate.
pub fn train(
    params0: &Params,
    data: &Dataset,
    act: &ActivationParams,
    cfg: &TrainConfig,
    cert: Option<&Certificate>,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut params = params0.clone();
    let mut trace = network::forward(&params, data, act)?;
    let initial_loss = network::trace_loss(&trace, data);

    let certified_step = cert.map(|c| c.eta_max.is_some_and(|m| cfg.eta < m));
    let rate = cert.map(|c| 1.0 - cfg.eta * c.alpha0);
    let mut monitor = match cert {
        Some(c) if cfg.monitor.invariants => Some(InvariantMonitor::new(c, &params, &trace)?),
        _ => None,
    };

    let mut records = Vec::new();
    let mut tally = InvariantTally::default();
    let mut outcome = TrainOutcome::MaxSteps;
    let mut prev: Option<(f64, f64)> = None; // (loss, squared gradient norm) of the previous step
    let mut pending: Option<StepRecord> = None;
    let mut k: u64 = 0;
    let mut loss;

    loop {
        loss = network::trace_loss(&trace, data);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            outcome = TrainOutcome::Diverged { step: k, loss };
            if let Some(mut rec) = pending.take() {
                // the previous step's descent verdict is unknowable; keep it unchecked
                rec.flags.0[4] = None;
                records.push(rec);
            }
            break;
        }

        let mut flags = StepFlags::default();
        if let Some(m) = monitor.as_mut() {
            let [sv, norm, f1] = m.check(&params, &trace)?;
            flags.0[0] = Some(sv);
            flags.0[1] = Some(norm);
            flags.0[2] = Some(f1);
        }
        let bound = match (cert, rate) {
            (Some(_), Some(q)) => Some(decay(q, initial_loss, k)),
            _ => None,
        };
        if monitor.is_some() {
            flags.0[3] = bound.map(|b| loss <= b);
        }

        // the descent verdict for step k-1 needs the loss at step k
        if let Some((prev_loss, prev_sq)) = prev {
            if cfg.monitor.descent {
                let allowance = 4.0 * f64::EPSILON * prev_loss;
                let ok = loss <= prev_loss - 0.5 * cfg.eta * prev_sq + allowance;
                if let Some(rec) = pending.as_mut() {
                    rec.flags.0[4] = Some(ok);
                }
                tally_descent(&mut tally, k - 1, ok);
            }
        }
        if let Some(rec) = pending.take() {
            records.push(rec);
        }

        let stop = loss <= cfg.stop_loss;
        let last = stop || k >= cfg.max_steps;
        let g = if last {
            None
        } else {
            Some(grad_from_trace(&params, &trace, data, act))
        };
        let grad_norm = match &g {
            Some(g) => g.norm(),
            None => grad_from_trace(&params, &trace, data, act).norm(),
        };

        if monitor.is_some() {
            tally.add(k, &flags);
        }

        if k.is_multiple_of(cfg.log_every) || last {
            let (sv_f1, min_sv_w, max_norm_w) = if cfg.monitor.spectra {
                let (a, b, c) = spectra(&params, &trace)?;
                (Some(a), b, c)
            } else {
                (None, Vec::new(), Vec::new())
            };
            pending = Some(StepRecord {
                k,
                loss,
                bound,
                sv_f1,
                min_sv_w,
                max_norm_w,
                grad_norm,
                flags,
            });
        }

        if last {
            if let Some(rec) = pending.take() {
                records.push(rec);
            }
            if stop {
                outcome = TrainOutcome::Converged;
            }
            break;
        }

        let g = g.expect("gradient computed for non-final step");
        prev = Some((loss, g.sq_norm()));
        apply_step(&mut params, &g, cfg.eta);
        trace = network::forward(&params, data, act)?;
        k += 1;
    }

    if let Some(m) = &monitor {
        tally.exact_fallbacks = m.fallbacks;
    }

    let distance = match (cert, &outcome) {
        (Some(c), TrainOutcome::Converged) if cfg.monitor.parameter_distance && k > 0 => {
            Some(distance_check(params0, &params, data, act, cfg, c, k)?)
        }
        _ => None,
    };

    Ok(TrainLog {
        records,
        tally,
        outcome,
        steps: k,
        initial_loss,
        final_loss: loss,
        certified_step,
        distance,
        final_params: params,
    })
}

fn tally_descent(tally: &mut InvariantTally, k: u64, ok: bool) {
    if !ok {
        tally.violations[4] += 1;
        tally.first_violation = Some(tally.first_violation.map_or(k, |f| f.min(k)));
    }
}

/// `q^k * phi0` evaluated without accumulating rounding over `k`.
fn decay(q: f64, phi0: f64, k: u64) -> f64 {
    if k == 0 {
        phi0
    } else {
        phi0 * ((k as f64) * (q - 1.0).ln_1p()).exp()
    }
}

/// Replays the GD trajectory and compares `||theta_k - theta_final||` with
/// `(1 - eta alpha_0)^{k/2} Q_1 + slack`, where the slack is the distance
/// still travelled over the last tenth of the run.
fn distance_check(
    params0: &Params,
    final_params: &Params,
    data: &Dataset,
    act: &ActivationParams,
    cfg: &TrainConfig,
    cert: &Certificate,
    steps: u64,
) -> Result<DistanceCheck> {
    let window = (steps / 10).max(1);
    let q = 1.0 - cfg.eta * cert.alpha0;
    let mut distances = Vec::with_capacity(steps as usize + 1);
    let mut params = params0.clone();
    for k in 0..=steps {
        distances.push(params.distance(final_params));
        if k == steps {
            break;
        }
        let g = grad(&params, data, act)?;
        apply_step(&mut params, &g, cfg.eta);
    }
    let slack = distances[(steps - window) as usize];
    let mut check = DistanceCheck {
        slack,
        window,
        steps_checked: steps + 1,
        violations: 0,
        first_violation: None,
        worst_ratio: 0.0,
    };
    for (k, &dist) in distances.iter().enumerate() {
        let bound = decay(q, 1.0, k as u64).sqrt() * cert.q1 + slack;
        if dist > bound {
            check.violations += 1;
            check.first_violation.get_or_insert(k as u64);
        }
        if bound > 0.0 {
            check.worst_ratio = check.worst_ratio.max(dist / bound);
        }
    }
    Ok(check)
}

impl TrainLog {
    pub fn converged(&self) -> bool {
        self.outcome == TrainOutcome::Converged
    }
}
