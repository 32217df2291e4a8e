//! Sliding-window online updating with automatically adaptive weights.

use serde::{Deserialize, Serialize};

use crate::engine::{append_seeded, reconstruct, run_sweeps, slide_window, Hyperparams, PredictorState};
use crate::error::{Result, TopaError};
use crate::matrix::DenseMatrix;
use crate::regression::ArSpec;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AawConfig {
    /// Window length.
    pub tau: usize,
    /// Staleness damping base.
    pub alpha_damp: f64,
    /// Floor on the fit-quality factor.
    pub beta: f64,
}

impl AawConfig {
    pub fn new(tau: usize, alpha_damp: f64, beta: f64) -> Self {
        Self {
            tau,
            alpha_damp,
            beta,
        }
    }

    pub fn validate(&self, spec: ArSpec) -> Result<()> {
        if self.tau < 2 || self.tau <= spec.lag() {
            return Err(TopaError::InvalidConfig(format!(
                "window length {} must exceed p + d = {} and be at least 2",
                self.tau,
                spec.lag()
            )));
        }
        if !(self.alpha_damp > 0.0 && self.alpha_damp < 1.0) {
            return Err(TopaError::InvalidConfig(format!(
                "alpha_damp must lie in (0, 1), got {}",
                self.alpha_damp
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(TopaError::InvalidConfig(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Weights over the window, oldest first; the last entry belongs to the new observation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    /// Global time of the first weight.
    pub first_time: usize,
    pub weights: Vec<f64>,
}

/// Relative reconstruction residual `||X - G x U||^2 / ||X||^2`.
pub fn residual_eps<S: Scalar>(x: &DenseTensor<S>, g: &DenseTensor<S>, us: &[DenseMatrix<S>]) -> Result<f64> {
    let norm = x.frob_norm_sq();
    if norm == 0.0 {
        return Err(TopaError::ZeroNorm);
    }
    Ok(x.dist_sq(&reconstruct(g, us)?)? / norm)
}

/// Weights for the window ending at `t_prev + 1`.
///
/// `residuals[k]` is the residual of global time `t_prev - residuals.len() + 1 + k`;
/// `None` marks a zero-norm observation. At most `tau - 1` residuals are used.
pub fn compute_weights(cfg: &AawConfig, t_prev: usize, residuals: &[Option<f64>]) -> Result<WeightVector> {
    if cfg.tau < 2 || !(cfg.alpha_damp > 0.0 && cfg.alpha_damp < 1.0) || !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(TopaError::InvalidConfig(format!("bad window config {cfg:?}")));
    }
    let keep = residuals.len().min(cfg.tau - 1).min(t_prev);
    let residuals = &residuals[residuals.len() - keep..];
    let first_time = t_prev + 1 - keep;
    // Window start minus one: T - tau + 1, possibly below 1 for short histories.
    let origin = t_prev as i64 - cfg.tau as i64 + 1;
    let mut weights = Vec::with_capacity(keep + 1);
    for (k, eps) in residuals.iter().enumerate() {
        let t = (first_time + k) as i64;
        let staleness = 1.0 - cfg.alpha_damp.powi((t - origin) as i32);
        let fit = cfg.beta.max(1.0 - eps.unwrap_or(1.0));
        weights.push(staleness * fit);
    }
    weights.push(1.0);
    Ok(WeightVector { first_time, weights })
}

/// Appends `x_new` with weight 1, slides the window to the last `tau` entries
/// and runs `iters_online` weighted sweeps. `interior` weights the `tau - 1`
/// (or fewer) entries preceding the new one, oldest first.
pub fn windowed_ingest<S: Scalar>(
    state: &mut PredictorState<S>,
    x_new: DenseTensor<S>,
    hyper: &Hyperparams,
    tau: usize,
    interior: &[f64],
) -> Result<()> {
    append_seeded(state, hyper, x_new, 1.0)?;
    slide_window(state, tau, hyper.spec.lag());
    let active = state.active_len();
    if interior.len() + 1 != active {
        return Err(TopaError::ShapeMismatch(format!(
            "{} interior weights for a window of {active}",
            interior.len()
        )));
    }
    let mut weights = interior.to_vec();
    weights.push(1.0);
    run_sweeps(state, hyper, Some(&weights), hyper.iters_online)?;
    Ok(())
}

/// Window residuals from the current (previous-step) fit.
pub fn window_residuals<S: Scalar>(state: &PredictorState<S>, cfg: &AawConfig) -> Result<Vec<Option<f64>>> {
    let n = state.len();
    let keep = n.min(cfg.tau - 1);
    (n - keep..n)
        .map(|i| match residual_eps(&state.history[i], &state.cores[i], &state.us) {
            Ok(e) => Ok(Some(e)),
            Err(TopaError::ZeroNorm) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// One AAW online step. Returns the weights used.
pub fn aaw_ingest_and_update<S: Scalar>(
    state: &mut PredictorState<S>,
    x_new: DenseTensor<S>,
    hyper: &Hyperparams,
    cfg: &AawConfig,
) -> Result<WeightVector> {
    cfg.validate(hyper.spec)?;
    let residuals = window_residuals(state, cfg)?;
    let wv = compute_weights(cfg, state.t, &residuals)?;
    let interior = &wv.weights[..wv.weights.len() - 1];
    windowed_ingest(state, x_new, hyper, cfg.tau, interior)?;
    Ok(wv)
}
