//! Joint-Tucker online predictor: objective, proximal block updates, the
//! Stage I batch fit and Stage II online updating.
//!
//! The objective over the retained series is
//!
//! ```text
//! F = sum_{t >= lag} ||G_t - f(G_{t-1}, .., G_{t-lag})||^2
//!   + varphi * sum_{t active} w_t ||G_t - X_t x_1 U_1^H .. x_M U_M^H||^2
//! ```
//!
//! where `f` is the AR(p) recursion on `d`-times differenced cores. Entries
//! before `active_start` are frozen context: they only feed the regressor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopaError};
use crate::linalg::{procrustes, thin_svd};
use crate::matrix::DenseMatrix;
use crate::regression::{expanded_coefficients, fit_ar, forecast, ArParams, ArSpec};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreUpdateMode {
    /// Closed forms as printed: a core's role as a regressor for later
    /// residuals is ignored.
    #[default]
    PaperForm,
    /// Exact block minimizers. The projection block uses a majorized closed
    /// form that accounts for `||U^H H||^2`, so every block step descends.
    ExactBlock,
}

impl CoreUpdateMode {
    pub fn tag(self) -> u8 {
        match self {
            CoreUpdateMode::PaperForm => 0,
            CoreUpdateMode::ExactBlock => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CoreUpdateMode::PaperForm),
            1 => Some(CoreUpdateMode::ExactBlock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub ranks: Vec<usize>,
    pub spec: ArSpec,
    /// Weight of the decomposition residual.
    pub varphi: f64,
    /// Proximal step.
    pub lambda: f64,
    /// Squared-change stopping tolerance.
    pub eps: f64,
    pub max_iter_stage1: usize,
    pub iters_online: usize,
    pub core_update_mode: CoreUpdateMode,
}

impl Hyperparams {
    pub fn new(ranks: Vec<usize>, spec: ArSpec) -> Self {
        Self {
            ranks,
            spec,
            varphi: 10.0,
            lambda: 1.0,
            eps: 1e-6,
            max_iter_stage1: 200,
            iters_online: 1,
            core_update_mode: CoreUpdateMode::PaperForm,
        }
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        self.spec.validate()?;
        if self.ranks.len() != dims.len() {
            return Err(TopaError::InfeasibleRanks(format!(
                "{} ranks for order-{} data",
                self.ranks.len(),
                dims.len()
            )));
        }
        if let Some((m, (&r, &i))) = self
            .ranks
            .iter()
            .zip(dims)
            .enumerate()
            .find(|(_, (&r, &i))| r == 0 || r > i)
        {
            return Err(TopaError::InfeasibleRanks(format!(
                "rank {r} on mode {m} with dimension {i}"
            )));
        }
        if !(self.varphi > 0.0 && self.varphi.is_finite()) {
            return Err(TopaError::InvalidConfig(format!(
                "varphi must be positive, got {}",
                self.varphi
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TopaError::InvalidConfig(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.eps > 0.0) {
            return Err(TopaError::InvalidConfig("eps must be positive".into()));
        }
        if self.max_iter_stage1 == 0 {
            return Err(TopaError::InvalidConfig("max_iter_stage1 must be >= 1".into()));
        }
        if self.iters_online == 0 {
            return Err(TopaError::InvalidConfig("iters_online must be >= 1".into()));
        }
        Ok(())
    }
}

/// Objective and squared iterate change after one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterStats {
    pub objective: f64,
    pub change_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState<S> {
    pub us: Vec<DenseMatrix<S>>,
    pub cores: Vec<DenseTensor<S>>,
    pub params: ArParams<S>,
    pub history: Vec<DenseTensor<S>>,
    /// First retained entry that takes part in the optimization.
    pub active_start: usize,
    /// Number of observations seen so far (global time of the last entry).
    pub t: usize,
    pub objective: f64,
    /// Objective at the start of the last fit call.
    pub initial_objective: f64,
    /// Per-sweep statistics of the last fit call.
    pub trace: Vec<IterStats>,
}

impl<S: Scalar> PredictorState<S> {
    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn data_dims(&self) -> &[usize] {
        self.history[0].dims()
    }

    pub fn active_len(&self) -> usize {
        self.len() - self.active_start
    }

    /// Global (1-based) time of retained entry `i`.
    pub fn global_time(&self, i: usize) -> usize {
        self.t + 1 + i - self.len()
    }

    fn residual_start(&self, hyper: &Hyperparams) -> usize {
        hyper.spec.lag().max(self.active_start)
    }

    pub fn check_invariants(&self, hyper: &Hyperparams) -> Result<()> {
        if self.cores.len() != self.history.len() || self.history.is_empty() {
            return Err(TopaError::ShapeMismatch(format!(
                "{} cores for {} observations",
                self.cores.len(),
                self.history.len()
            )));
        }
        if self.active_start >= self.len() {
            return Err(TopaError::ShapeMismatch("empty active window".into()));
        }
        let dims = self.data_dims().to_vec();
        hyper.validate(&dims)?;
        if self.us.len() != dims.len() {
            return Err(TopaError::ShapeMismatch("factor count".into()));
        }
        for (m, u) in self.us.iter().enumerate() {
            if u.rows() != dims[m] || u.cols() != hyper.ranks[m] {
                return Err(TopaError::ShapeMismatch(format!("factor {m} shape")));
            }
            let err = u.orthonormality_error();
            if err > 1e-8 {
                return Err(TopaError::ShapeMismatch(format!(
                    "factor {m} lost orthonormality ({err:.2e})"
                )));
            }
        }
        if self.history.iter().any(|x| x.dims() != dims.as_slice())
            || self.cores.iter().any(|g| g.dims() != hyper.ranks.as_slice())
        {
            return Err(TopaError::ShapeMismatch("series entry dims".into()));
        }
        if self.params.alpha.len() != hyper.spec.p {
            return Err(TopaError::ShapeMismatch("AR parameter count".into()));
        }
        Ok(())
    }
}

fn weight_at(weights: Option<&[f64]>, active_idx: usize) -> f64 {
    weights.map_or(1.0, |w| w[active_idx])
}

fn check_weights<S: Scalar>(state: &PredictorState<S>, weights: Option<&[f64]>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != state.active_len() {
            return Err(TopaError::ShapeMismatch(format!(
                "{} weights for {} active entries",
                w.len(),
                state.active_len()
            )));
        }
    }
    Ok(())
}

/// `sum_k beta_k G_{i-k}`; requires `i >= beta.len()`.
fn regressor<S: Scalar>(cores: &[DenseTensor<S>], beta: &[S], i: usize) -> DenseTensor<S> {
    let mut out = DenseTensor::zeros(cores[i].dims()).expect("valid dims");
    for (k, &b) in beta.iter().enumerate() {
        out.axpy(b, &cores[i - 1 - k]).expect("same dims");
    }
    out
}

/// `X_t x_m U_m^H` over all modes.
pub fn project<S: Scalar>(x: &DenseTensor<S>, us: &[DenseMatrix<S>]) -> Result<DenseTensor<S>> {
    x.multi_project(us, true)
}

/// `G x_m U_m` over all modes.
pub fn reconstruct<S: Scalar>(g: &DenseTensor<S>, us: &[DenseMatrix<S>]) -> Result<DenseTensor<S>> {
    g.multi_project(us, false)
}

fn objective_with_projections<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    weights: Option<&[f64]>,
    projections: &[DenseTensor<S>],
) -> Result<f64> {
    let beta = expanded_coefficients(&state.params, hyper.spec);
    let mut reg = 0.0;
    for i in state.residual_start(hyper)..state.len() {
        reg += state.cores[i].dist_sq(&regressor(&state.cores, &beta, i))?;
    }
    let mut dec = 0.0;
    for (a, p) in projections.iter().enumerate() {
        let i = state.active_start + a;
        dec += weight_at(weights, a) * state.cores[i].dist_sq(p)?;
    }
    Ok(reg + hyper.varphi * dec)
}

/// Evaluates the (optionally weighted) objective at the current state.
pub fn objective<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_weights(state, weights)?;
    let projections = state.history[state.active_start..]
        .iter()
        .map(|x| project(x, &state.us))
        .collect::<Result<Vec<_>>>()?;
    objective_with_projections(state, hyper, weights, &projections)
}

/// Projects every mode except `m`, applying modes in ascending order.
fn partial_project<S: Scalar>(
    x: &DenseTensor<S>,
    us: &[DenseMatrix<S>],
    skip: usize,
    from: usize,
) -> Result<DenseTensor<S>> {
    let mut cur: Option<DenseTensor<S>> = None;
    for (j, u) in us.iter().enumerate().skip(from) {
        if j == skip {
            continue;
        }
        let next = cur.as_ref().unwrap_or(x).mode_product_adjoint(u, j)?;
        cur = Some(next);
    }
    Ok(cur.unwrap_or_else(|| x.clone()))
}

/// Projection-block solve from the partially projected tensors `hs`.
fn projection_from<S: Scalar>(
    hs: &[DenseTensor<S>],
    cores: &[DenseTensor<S>],
    weights: Option<&[f64]>,
    u_old: &DenseMatrix<S>,
    m: usize,
    hyper: &Hyperparams,
) -> Result<DenseMatrix<S>> {
    let mut w = DenseMatrix::zeros(u_old.rows(), u_old.cols());
    for (a, (h, g)) in hs.iter().zip(cores).enumerate() {
        w.axpy(S::from_real(weight_at(weights, a)), &h.mode_gram(g, m)?)?;
    }
    w.axpy(S::from_real(hyper.lambda / (2.0 * hyper.varphi)), u_old)?;
    if hyper.core_update_mode == CoreUpdateMode::ExactBlock {
        // Majorize tr(U^H S U) at U_old with c >= lambda_max(S).
        let mut s = DenseMatrix::zeros(u_old.rows(), u_old.rows());
        for (a, h) in hs.iter().enumerate() {
            s.axpy(S::from_real(weight_at(weights, a)), &h.mode_gram(h, m)?)?;
        }
        let c = thin_svd(&s)?.singular_values[0];
        w.axpy(S::from_real(c), u_old)?;
        w.axpy(-S::one(), &s.matmul(u_old)?)?;
    }
    procrustes(&w)
}

/// Recomputes factor `m` from the current state, treating factors `< m` as
/// already updated in this sweep.
pub fn update_projection<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    m: usize,
    weights: Option<&[f64]>,
) -> Result<DenseMatrix<S>> {
    check_weights(state, weights)?;
    if m >= state.us.len() {
        return Err(TopaError::ModeOutOfRange {
            mode: m,
            order: state.us.len(),
        });
    }
    let hs = state.history[state.active_start..]
        .iter()
        .map(|x| partial_project(x, &state.us, m, 0))
        .collect::<Result<Vec<_>>>()?;
    projection_from(
        &hs,
        &state.cores[state.active_start..],
        weights,
        &state.us[m],
        m,
        hyper,
    )
}

fn core_update_with<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    beta: &[S],
    i: usize,
    weight: f64,
    projection: &DenseTensor<S>,
) -> Result<DenseTensor<S>> {
    let lag = beta.len();
    let half = hyper.lambda / 2.0;
    let fw = hyper.varphi * weight;
    let old = &state.cores[i];
    let has_residual = i >= lag;

    let mut rhs = projection.scale(S::from_real(fw));
    rhs.axpy(S::from_real(half), old)?;
    let mut coef = fw + half;
    if has_residual {
        rhs = rhs.add(&regressor(&state.cores, beta, i))?;
        coef += 1.0;
    }
    if hyper.core_update_mode == CoreUpdateMode::ExactBlock {
        for (k, &b) in beta.iter().enumerate() {
            let s = i + k + 1;
            if s >= state.len() {
                break;
            }
            if s < lag {
                continue;
            }
            // c_s = G_s - f_s + b_k G_i: the residual at s with G_i taken out.
            let mut c = state.cores[s].sub(&regressor(&state.cores, beta, s))?;
            c.axpy(b, old)?;
            rhs.axpy(b.conj(), &c)?;
            coef += b.abs2();
        }
    }
    Ok(rhs.scale(S::from_real(1.0 / coef)))
}

/// Block update of core `i` (a retained-series index inside the active window).
pub fn update_core<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    i: usize,
    weights: Option<&[f64]>,
) -> Result<DenseTensor<S>> {
    check_weights(state, weights)?;
    if i < state.active_start || i >= state.len() {
        return Err(TopaError::ShapeMismatch(format!(
            "core index {i} outside active window {}..{}",
            state.active_start,
            state.len()
        )));
    }
    let beta = expanded_coefficients(&state.params, hyper.spec);
    let p = project(&state.history[i], &state.us)?;
    core_update_with(
        state,
        hyper,
        &beta,
        i,
        weight_at(weights, i - state.active_start),
        &p,
    )
}

/// One proximal alternating sweep: AR parameters, then factors `U_1..U_M`,
/// then cores in time order. Updates `state.objective`.
pub fn sweep<S: Scalar>(
    state: &mut PredictorState<S>,
    hyper: &Hyperparams,
    weights: Option<&[f64]>,
) -> Result<IterStats> {
    check_weights(state, weights)?;
    let start = state.active_start;
    let n = state.len();
    let lag = hyper.spec.lag();
    let mut change_sq = 0.0;

    let fit_from = state.residual_start(hyper) - lag;
    let params = fit_ar(&state.cores[fit_from..], hyper.spec, hyper.lambda, &state.params)?;
    change_sq += params.dist_sq(&state.params);
    state.params = params;

    // prefix[a] = X_{start+a} projected on modes < m with the updated factors.
    let order = state.us.len();
    let mut prefix: Option<Vec<DenseTensor<S>>> = None;
    for m in 0..order {
        let hs = (start..n)
            .map(|i| {
                let src = prefix.as_ref().map_or(&state.history[i], |p| &p[i - start]);
                partial_project(src, &state.us, m, m + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        let u_new = projection_from(&hs, &state.cores[start..], weights, &state.us[m], m, hyper)?;
        change_sq += u_new.dist_sq(&state.us[m])?;
        state.us[m] = u_new;
        let next = (start..n)
            .map(|i| {
                let src = prefix.as_ref().map_or(&state.history[i], |p| &p[i - start]);
                src.mode_product_adjoint(&state.us[m], m)
            })
            .collect::<Result<Vec<_>>>()?;
        prefix = Some(next);
    }
    let projections = prefix.expect("order >= 1");

    let beta = expanded_coefficients(&state.params, hyper.spec);
    for i in start..n {
        let w = weight_at(weights, i - start);
        let g = core_update_with(state, hyper, &beta, i, w, &projections[i - start])?;
        change_sq += g.dist_sq(&state.cores[i])?;
        state.cores[i] = g;
    }
    debug_assert!(lag <= n);

    let objective = objective_with_projections(state, hyper, weights, &projections)?;
    state.objective = objective;
    Ok(IterStats {
        objective,
        change_sq,
    })
}

/// Runs up to `max_iters` sweeps, stopping once the squared change drops below `eps`.
pub fn run_sweeps<S: Scalar>(
    state: &mut PredictorState<S>,
    hyper: &Hyperparams,
    weights: Option<&[f64]>,
    max_iters: usize,
) -> Result<usize> {
    state.initial_objective = objective(state, hyper, weights)?;
    state.objective = state.initial_objective;
    state.trace.clear();
    for k in 0..max_iters {
        let stats = sweep(state, hyper, weights)?;
        state.trace.push(stats);
        if stats.change_sq < hyper.eps {
            return Ok(k + 1);
        }
    }
    Ok(max_iters)
}

/// Random orthonormal factors: Gaussian entries mapped through Procrustes.
pub fn random_factors<S: Scalar>(
    dims: &[usize],
    ranks: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DenseMatrix<S>>> {
    dims.iter()
        .zip(ranks)
        .map(|(&i, &r)| procrustes(&DenseMatrix::from_fn(i, r, |_, _| S::gaussian(rng))))
        .collect()
}

/// Builds a state with random factors and projected cores, without iterating.
pub fn initial_state<S: Scalar>(
    tts: &[DenseTensor<S>],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<PredictorState<S>> {
    let needed = hyper.spec.lag() + 2;
    if tts.len() < needed {
        return Err(TopaError::SeriesTooShort {
            needed,
            got: tts.len(),
        });
    }
    let dims = tts[0].dims().to_vec();
    hyper.validate(&dims)?;
    if let Some(x) = tts.iter().find(|x| x.dims() != dims.as_slice()) {
        return Err(TopaError::ShapeMismatch(format!(
            "series mixes dims {dims:?} and {:?}",
            x.dims()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us = random_factors(&dims, &hyper.ranks, &mut rng)?;
    let cores = tts
        .iter()
        .map(|x| project(x, &us))
        .collect::<Result<Vec<_>>>()?;
    let mut state = PredictorState {
        us,
        cores,
        params: ArParams::zeros(hyper.spec.p),
        history: tts.to_vec(),
        active_start: 0,
        t: tts.len(),
        objective: 0.0,
        initial_objective: 0.0,
        trace: Vec::new(),
    };
    state.objective = objective(&state, hyper, None)?;
    state.initial_objective = state.objective;
    Ok(state)
}

/// Stage I: batch fit on the starting series.
pub fn stage1_fit<S: Scalar>(
    tts: &[DenseTensor<S>],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<PredictorState<S>> {
    let mut state = initial_state(tts, hyper, seed)?;
    run_sweeps(&mut state, hyper, None, hyper.max_iter_stage1)?;
    Ok(state)
}

/// Forecast of the next observation: AR forecast of the core, reconstructed.
pub fn predict_next<S: Scalar>(state: &PredictorState<S>, hyper: &Hyperparams) -> Result<DenseTensor<S>> {
    let g = forecast(&state.params, hyper.spec, &state.cores)?;
    reconstruct(&g, &state.us)
}

fn check_new<S: Scalar>(state: &PredictorState<S>, x_new: &DenseTensor<S>) -> Result<()> {
    if x_new.dims() != state.data_dims() {
        return Err(TopaError::ShapeMismatch(format!(
            "new observation has dims {:?}, series has {:?}",
            x_new.dims(),
            state.data_dims()
        )));
    }
    Ok(())
}

/// Warm-start core for a new observation:
/// `(f(G) + varphi w P) / (1 + varphi w)` with `P` the projection of `x_new`.
pub fn seed_core<S: Scalar>(
    state: &PredictorState<S>,
    hyper: &Hyperparams,
    x_new: &DenseTensor<S>,
    weight: f64,
) -> Result<DenseTensor<S>> {
    check_new(state, x_new)?;
    let fw = hyper.varphi * weight;
    let mut num = expanded_predictor(state, hyper)?;
    num.axpy(S::from_real(fw), &project(x_new, &state.us)?)?;
    Ok(num.scale(S::from_real(1.0 / (1.0 + fw))))
}

/// Regressor for the next core, `sum_k b_k G_{T+1-k}`, from the current parameters.
pub fn expanded_predictor<S: Scalar>(state: &PredictorState<S>, hyper: &Hyperparams) -> Result<DenseTensor<S>> {
    let beta = expanded_coefficients(&state.params, hyper.spec);
    let n = state.len();
    if n < beta.len() {
        return Err(TopaError::SeriesTooShort {
            needed: beta.len(),
            got: n,
        });
    }
    let mut f = DenseTensor::zeros(&hyper.ranks)?;
    for (k, &b) in beta.iter().enumerate() {
        f.axpy(b, &state.cores[n - 1 - k])?;
    }
    Ok(f)
}

/// Appends an observation and its warm-start core; advances `t`.
pub fn append_seeded<S: Scalar>(
    state: &mut PredictorState<S>,
    hyper: &Hyperparams,
    x_new: DenseTensor<S>,
    weight: f64,
) -> Result<()> {
    let g = seed_core(state, hyper, &x_new, weight)?;
    state.history.push(x_new);
    state.cores.push(g);
    state.t += 1;
    Ok(())
}

/// Keeps the last `window` entries active plus up to `lag` frozen entries before them.
pub fn slide_window<S: Scalar>(state: &mut PredictorState<S>, window: usize, lag: usize) {
    let n = state.len();
    let active_start = n.saturating_sub(window.max(1));
    let context = lag.min(active_start);
    let drop = active_start - context;
    state.history.drain(..drop);
    state.cores.drain(..drop);
    state.active_start = context;
}

/// Stage II online update over the full retained history.
pub fn ingest_and_update<S: Scalar>(
    state: &mut PredictorState<S>,
    x_new: DenseTensor<S>,
    hyper: &Hyperparams,
) -> Result<()> {
    append_seeded(state, hyper, x_new, 1.0)?;
    run_sweeps(state, hyper, None, hyper.iters_online)?;
    Ok(())
}

/// Appends an observation with its plain projection as core; no refit.
pub fn append_without_update<S: Scalar>(
    state: &mut PredictorState<S>,
    x_new: DenseTensor<S>,
) -> Result<()> {
    check_new(state, &x_new)?;
    let g = project(&x_new, &state.us)?;
    state.history.push(x_new);
    state.cores.push(g);
    state.t += 1;
    Ok(())
}

/// Offline baseline: a fresh Stage I fit on the whole history, then a forecast.
pub fn offline_refit_step<S: Scalar>(
    history: &[DenseTensor<S>],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(PredictorState<S>, DenseTensor<S>)> {
    let state = stage1_fit(history, hyper, seed)?;
    let pred = predict_next(&state, hyper)?;
    Ok((state, pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn rand_tensor<S: Scalar>(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor<S> {
        DenseTensor::from_fn(dims, |_| S::gaussian(rng)).unwrap()
    }

    /// Exact low-rank series with AR(1) cores.
    fn exact_series<S: Scalar>(
        dims: &[usize],
        ranks: &[usize],
        alpha: S,
        len: usize,
        seed: u64,
    ) -> (Vec<DenseTensor<S>>, Vec<DenseMatrix<S>>, Vec<DenseTensor<S>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let us = random_factors::<S>(dims, ranks, &mut rng).unwrap();
        let mut g = vec![rand_tensor::<S>(ranks, &mut rng)];
        while g.len() < len {
            let next = g.last().unwrap().scale(alpha);
            g.push(next);
        }
        let xs = g.iter().map(|c| reconstruct(c, &us).unwrap()).collect();
        (xs, us, g)
    }

    fn small_state(seed: u64) -> (PredictorState<f64>, Hyperparams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<DenseTensor<f64>> = (0..4).map(|_| rand_tensor(&[3, 3], &mut rng)).collect();
        let mut hyper = Hyperparams::new(vec![2, 2], ArSpec::new(1, 0).unwrap());
        hyper.varphi = 2.0;
        let mut state = initial_state(&xs, &hyper, seed).unwrap();
        state.params.alpha = vec![0.6];
        for g in state.cores.iter_mut() {
            for v in g.data_mut() {
                *v += 0.3 * f64::gaussian(&mut rng);
            }
        }
        (state, hyper)
    }

    #[test]
    fn objective_hand_accumulation() {
        let (state, hyper) = small_state(1);
        let mut total = 0.0;
        for t in 1..4 {
            let r = state.cores[t].sub(&state.cores[t - 1].scale(0.6)).unwrap();
            total += r.frob_norm_sq();
        }
        for t in 0..4 {
            let p = state.history[t]
                .mode_product(&state.us[0].adjoint(), 0)
                .unwrap()
                .mode_product(&state.us[1].adjoint(), 1)
                .unwrap();
            total += 2.0 * state.cores[t].dist_sq(&p).unwrap();
        }
        let f = objective(&state, &hyper, None).unwrap();
        assert!((f - total).abs() <= 1e-12 * total);
        let w = [0.5, 1.0, 0.25, 1.0];
        let fw = objective(&state, &hyper, Some(&w)).unwrap();
        assert!(fw < f);
        assert!(objective(&state, &hyper, Some(&w[..3])).is_err());
    }

    #[test]
    fn objective_vanishes_on_exact_model_and_zero_series() {
        let (xs, us, g) = exact_series::<f64>(&[4, 3], &[2, 2], 0.8, 6, 2);
        let hyper = Hyperparams::new(vec![2, 2], ArSpec::new(1, 0).unwrap());
        let state = PredictorState {
            us,
            cores: g,
            params: ArParams { alpha: vec![0.8] },
            history: xs,
            active_start: 0,
            t: 6,
            objective: 0.0,
            initial_objective: 0.0,
            trace: vec![],
        };
        assert!(objective(&state, &hyper, None).unwrap() < 1e-10);

        let zeros = vec![DenseTensor::<f64>::zeros(&[4, 3]).unwrap(); 5];
        let st = initial_state(&zeros, &hyper, 3).unwrap();
        assert_eq!(objective(&st, &hyper, None).unwrap(), 0.0);
    }

    #[test]
    fn core_update_collapses_to_projection() {
        let (state, mut hyper) = small_state(4);
        hyper.lambda = 0.0;
        let p0 = project(&state.history[0], &state.us).unwrap();
        let g0 = update_core(&state, &hyper, 0, None).unwrap();
        assert!(g0.dist_sq(&p0).unwrap() < 1e-24);

        hyper.varphi = 1e12;
        let p2 = project(&state.history[2], &state.us).unwrap();
        let g2 = update_core(&state, &hyper, 2, None).unwrap();
        assert!(g2.dist_sq(&p2).unwrap().sqrt() < 1e-9 * (1.0 + p2.frob_norm()));
    }

    #[test]
    fn exact_block_core_minimizes_block_objective() {
        // Dense quadratic oracle: treat G_i entries as unknowns, assemble the
        // block objective's normal equations by probing with unit vectors.
        let (state, mut hyper) = small_state(5);
        hyper.core_update_mode = CoreUpdateMode::ExactBlock;
        hyper.lambda = 0.7;
        let i = 1;
        let block_obj = |g: &DenseTensor<f64>| {
            let mut st = state.clone();
            st.cores[i] = g.clone();
            objective(&st, &hyper, None).unwrap() + hyper.lambda / 2.0 * g.dist_sq(&state.cores[i]).unwrap()
        };
        let n = 4;
        let zero = DenseTensor::zeros(&[2, 2]).unwrap();
        let f0 = block_obj(&zero);
        let unit = |k: usize| {
            let mut e = zero.clone();
            e.data_mut()[k] = 1.0;
            e
        };
        // q(g) = f0 + b.g + g'Ag ; recover A and b by finite probing (exact for quadratics)
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for k in 0..n {
            let fp = block_obj(&unit(k));
            let fm = block_obj(&unit(k).scale(-1.0));
            a[k][k] = (fp + fm - 2.0 * f0) / 2.0;
            b[k] = (fp - fm) / 2.0;
        }
        for k in 0..n {
            for l in 0..k {
                let e = unit(k).add(&unit(l)).unwrap();
                let fkl = block_obj(&e);
                a[k][l] = (fkl - f0 - b[k] - b[l] - a[k][k] - a[l][l]) / 2.0;
                a[l][k] = a[k][l];
            }
        }
        // minimizer solves 2 A g = -b
        let am = DenseMatrix::from_fn(n, n, |r, c| 2.0 * a[r][c]);
        let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
        let g_star = crate::linalg::cholesky_solve(&am, &rhs).unwrap();
        let g = update_core(&state, &hyper, i, None).unwrap();
        for (x, y) in g.data().iter().zip(&g_star) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn projection_update_recovers_exact_subspace() {
        let (xs, us_true, g) = exact_series::<f64>(&[5, 4], &[2, 2], 0.9, 3, 6);
        let mut hyper = Hyperparams::new(vec![2, 2], ArSpec::new(1, 0).unwrap());
        hyper.lambda = 0.0;
        let mut state = initial_state(&xs[..3], &hyper, 7).unwrap();
        // true factor on mode 1, true cores: mode-0 update must span the true subspace
        state.us[1] = us_true[1].clone();
        state.cores = g;
        let u0 = update_projection(&state, &hyper, 0, None).unwrap();
        let diff = u0.projector().sub(&us_true[0].projector()).unwrap().frob_norm();
        assert!(diff < 1e-10, "projector distance {diff}");
    }

    #[test]
    fn projection_update_proximal_dominance_and_order1() {
        let (mut state, mut hyper) = small_state(8);
        hyper.lambda = 1e12;
        let u = update_projection(&state, &hyper, 1, None).unwrap();
        assert!(u.dist_sq(&state.us[1]).unwrap().sqrt() < 1e-6);

        // M = 1: procrustes(sum w X G^H + lambda/(2 varphi) U_old)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<DenseTensor<Complex64>> = (0..4).map(|_| rand_tensor(&[5], &mut rng)).collect();
        let mut h1 = Hyperparams::new(vec![2], ArSpec::new(1, 0).unwrap());
        h1.lambda = 0.6;
        h1.varphi = 3.0;
        let st = initial_state(&xs, &h1, 10).unwrap();
        let w = [0.2, 0.5, 0.9, 1.0];
        let mut acc = DenseMatrix::<Complex64>::zeros(5, 2);
        for (t, x) in xs.iter().enumerate() {
            let xm = DenseMatrix::new(5, 1, x.data().to_vec()).unwrap();
            let gm = DenseMatrix::new(2, 1, st.cores[t].data().to_vec()).unwrap();
            acc.axpy(Complex64::new(w[t], 0.0), &xm.matmul(&gm.adjoint()).unwrap()).unwrap();
        }
        acc.axpy(Complex64::new(0.1, 0.0), &st.us[0]).unwrap();
        let expected = procrustes(&acc).unwrap();
        let got = update_projection(&st, &h1, 0, Some(&w)).unwrap();
        assert!(got.dist_sq(&expected).unwrap() < 1e-20);
        state.trace.clear();
    }

    #[test]
    fn stage1_minimal_length_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hyper = Hyperparams::new(vec![2, 2], ArSpec::new(2, 1).unwrap());
        let xs: Vec<DenseTensor<f64>> = (0..5).map(|_| rand_tensor(&[3, 4], &mut rng)).collect();
        let a = stage1_fit(&xs, &hyper, 3).unwrap();
        let b = stage1_fit(&xs, &hyper, 3).unwrap();
        assert_eq!(a, b);
        a.check_invariants(&hyper).unwrap();
        assert!(matches!(
            stage1_fit(&xs[..4], &hyper, 3),
            Err(TopaError::SeriesTooShort { needed: 5, got: 4 })
        ));
        let bad = Hyperparams::new(vec![4, 2], ArSpec::new(1, 0).unwrap());
        assert!(matches!(stage1_fit(&xs, &bad, 3), Err(TopaError::InfeasibleRanks(_))));
    }

    #[test]
    fn stage1_fits_exact_low_rank_ar_series() {
        let (xs, _, _) = exact_series::<f64>(&[6, 5, 4], &[2, 2, 2], 0.9, 12, 12);
        let mut hyper = Hyperparams::new(vec![2, 2, 2], ArSpec::new(1, 0).unwrap());
        hyper.eps = 1e-14;
        hyper.max_iter_stage1 = 500;
        let state = stage1_fit(&xs[..11], &hyper, 1).unwrap();
        assert!(state.objective <= 1e-6, "objective {}", state.objective);
        let pred = predict_next(&state, &hyper).unwrap();
        let err = pred.sub(&xs[11]).unwrap().frob_norm() / xs[11].frob_norm();
        assert!(err <= 1e-3, "nrmse {err}");
    }

    #[test]
    fn predict_with_persistence_is_projection_of_last() {
        let (mut state, hyper) = small_state(13);
        state.params.alpha = vec![1.0];
        let last = state.cores.last().unwrap().clone();
        let pred = predict_next(&state, &hyper).unwrap();
        assert!(pred.dist_sq(&reconstruct(&last, &state.us).unwrap()).unwrap() < 1e-24);
    }

    #[test]
    fn full_rank_exact_prediction() {
        let (xs, us, g) = exact_series::<Complex64>(&[3, 2], &[3, 2], Complex64::new(0.5, 0.4), 6, 14);
        let hyper = Hyperparams::new(vec![3, 2], ArSpec::new(1, 0).unwrap());
        let state = PredictorState {
            us,
            cores: g[..5].to_vec(),
            params: ArParams { alpha: vec![Complex64::new(0.5, 0.4)] },
            history: xs[..5].to_vec(),
            active_start: 0,
            t: 5,
            objective: 0.0,
            initial_objective: 0.0,
            trace: vec![],
        };
        let pred = predict_next(&state, &hyper).unwrap();
        assert!(pred.dist_sq(&xs[5]).unwrap().sqrt() < 1e-12);
    }

    #[test]
    fn seed_core_limits() {
        let (state, mut hyper) = small_state(15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x: DenseTensor<f64> = rand_tensor(&[3, 3], &mut rng);
        hyper.varphi = 1e12;
        let g = seed_core(&state, &hyper, &x, 1.0).unwrap();
        let p = project(&x, &state.us).unwrap();
        assert!(g.dist_sq(&p).unwrap().sqrt() < 1e-9);
        assert!(seed_core(&state, &hyper, &DenseTensor::zeros(&[3, 2]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn slide_window_keeps_context() {
        let (mut state, _) = small_state(17);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..6 {
            let x: DenseTensor<f64> = rand_tensor(&[3, 3], &mut rng);
            append_without_update(&mut state, x).unwrap();
        }
        assert_eq!(state.len(), 10);
        let last = state.history[9].clone();
        slide_window(&mut state, 4, 2);
        assert_eq!(state.len(), 6);
        assert_eq!(state.active_start, 2);
        assert_eq!(state.history[5], last);
        assert_eq!(state.global_time(5), 10);
    }
}
