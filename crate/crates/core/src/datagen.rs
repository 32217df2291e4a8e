//! Seeded synthetic tensor time series: `X_t = G_t x_1 U_1 .. x_M U_M + noise`,
//! with ARIMA core dynamics and optionally rotating subspaces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{random_factors, reconstruct};
use crate::error::{Result, TopaError};
use crate::evalio::TtsRecord;
use crate::matrix::DenseMatrix;
use crate::regression::MAX_DIFF;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

const STREAM_SUBSPACES: u64 = 0;
const STREAM_CORES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_DRIFT: u64 = 3;

/// ARIMA(p, d, 0) coefficients for the core entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreModel {
    pub coeffs: Vec<f64>,
    pub d: usize,
}

impl Default for CoreModel {
    fn default() -> Self {
        Self {
            coeffs: vec![0.5, -0.3, 0.2],
            d: 1,
        }
    }
}

fn default_rho() -> f64 {
    0.1
}

fn default_innovation() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Series length.
    pub t: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub core: CoreModel,
    /// Rotation angle per step, radians.
    #[serde(default)]
    pub drift_angle: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the core innovations.
    #[serde(default = "default_innovation")]
    pub innovation_scale: f64,
    /// Standard deviation of the initial differenced core values.
    #[serde(default)]
    pub init_scale: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl SynthConfig {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, t: usize, seed: u64) -> Self {
        Self {
            dims,
            ranks,
            t,
            rho: default_rho(),
            core: CoreModel::default(),
            drift_angle: 0.0,
            seed,
            innovation_scale: default_innovation(),
            init_scale: 0.0,
            burn_in: default_burn_in(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.ranks.len() {
            return Err(TopaError::InfeasibleRanks(format!(
                "dims {:?} vs ranks {:?}",
                self.dims, self.ranks
            )));
        }
        if self.dims.iter().zip(&self.ranks).any(|(&i, &r)| r == 0 || r > i) {
            return Err(TopaError::InfeasibleRanks(format!(
                "ranks {:?} exceed dims {:?}",
                self.ranks, self.dims
            )));
        }
        let checks = [
            (self.rho, "rho"),
            (self.drift_angle, "drift_angle"),
            (self.innovation_scale, "innovation_scale"),
            (self.init_scale, "init_scale"),
        ];
        if let Some((v, name)) = checks.iter().find(|(v, _)| !(*v >= 0.0 && v.is_finite())) {
            return Err(TopaError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
        }
        if self.core.d > MAX_DIFF {
            return Err(TopaError::InvalidConfig(format!(
                "differencing order must be <= {MAX_DIFF}"
            )));
        }
        check_stable(&self.core.coeffs)
    }
}

/// Rejects AR coefficients whose companion matrix has spectral radius >= 1,
/// using the step-down recursion on reflection coefficients.
pub fn check_stable(coeffs: &[f64]) -> Result<()> {
    let mut a = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return Err(TopaError::UnstableCoefficients(coeffs.to_vec()));
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        a = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / denom).collect();
    }
    Ok(())
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gen_subspaces<S: Scalar>(cfg: &SynthConfig) -> Result<Vec<DenseMatrix<S>>> {
    cfg.validate()?;
    random_factors(&cfg.dims, &cfg.ranks, &mut rng_for(cfg.seed, STREAM_SUBSPACES))
}

/// Entrywise ARIMA recursions; the first `burn_in` steps are discarded.
pub fn gen_core_series<S: Scalar>(cfg: &SynthConfig) -> Result<Vec<DenseTensor<S>>> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, STREAM_CORES);
    let size: usize = cfg.ranks.iter().product();
    let p = cfg.core.coeffs.len();
    let d = cfg.core.d;
    let total = cfg.burn_in + cfg.t;

    // diffs[k] holds the d-th differences of every entry at step k.
    let mut diffs: Vec<Vec<S>> = Vec::with_capacity(total);
    // levels[j] is the current value of the j-th order difference, j < d.
    let mut levels = vec![vec![S::zero(); size]; d];
    let mut out = Vec::with_capacity(cfg.t);
    for step in 0..total {
        let mut next: Vec<S> = if step < p {
            (0..size).map(|_| S::gaussian(&mut rng).scale(cfg.init_scale)).collect()
        } else {
            let mut v: Vec<S> = (0..size)
                .map(|_| S::gaussian(&mut rng).scale(cfg.innovation_scale))
                .collect();
            for (i, &a) in cfg.core.coeffs.iter().enumerate() {
                for (x, &prev) in v.iter_mut().zip(&diffs[step - 1 - i]) {
                    *x += prev.scale(a);
                }
            }
            v
        };
        diffs.push(next.clone());
        // Integrate: level_{d-1} += diff, level_{d-2} += level_{d-1}, ...
        for level in levels.iter_mut().rev() {
            for (l, x) in level.iter_mut().zip(next.iter_mut()) {
                *l += *x;
                *x = *l;
            }
        }
        if step >= cfg.burn_in {
            out.push(DenseTensor::new(cfg.ranks.clone(), next)?);
        }
    }
    Ok(out)
}

/// Givens rotation by `angle` in the plane of unit vectors `a`, `b` (orthogonal).
fn plane_rotation<S: Scalar>(a: &[S], b: &[S], angle: f64) -> DenseMatrix<S> {
    let (s, c) = angle.sin_cos();
    let n = a.len();
    DenseMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { S::one() } else { S::zero() };
        let span = a[i] * a[j].conj() + b[i] * b[j].conj();
        let twist = b[i] * a[j].conj() - a[i] * b[j].conj();
        id + span.scale(c - 1.0) + twist.scale(s)
    })
}

fn normalize<S: Scalar>(v: &mut [S]) {
    let n = v.iter().map(|x| x.abs2()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x = x.scale(1.0 / n));
    }
}

/// One rotation per mode, turning a direction of `span(U_m)` toward its complement.
pub fn drift_rotations<S: Scalar>(us: &[DenseMatrix<S>], angle: f64, seed: u64) -> Vec<DenseMatrix<S>> {
    let mut rng = rng_for(seed, STREAM_DRIFT);
    us.iter()
        .map(|u| {
            let (n, r) = (u.rows(), u.cols());
            let coef: Vec<S> = (0..r).map(|_| S::gaussian(&mut rng)).collect();
            let mut a = u.matvec(&coef).expect("shape");
            normalize(&mut a);
            let mut b: Vec<S> = (0..n).map(|_| S::gaussian(&mut rng)).collect();
            if r < n {
                // b -= U U^H b
                let ub: Vec<S> = (0..r)
                    .map(|j| (0..n).map(|i| u[(i, j)].conj() * b[i]).sum())
                    .collect();
                let proj = u.matvec(&ub).expect("shape");
                b.iter_mut().zip(&proj).for_each(|(x, &p)| *x -= p);
            } else {
                let ab: S = a.iter().zip(&b).map(|(&x, &y)| x.conj() * y).sum();
                b.iter_mut().zip(&a).for_each(|(x, &y)| *x -= y * ab);
            }
            normalize(&mut b);
            plane_rotation(&a, &b, angle)
        })
        .collect()
}

/// A generated series with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthSeries<S> {
    pub record: TtsRecord<S>,
    /// Factors in effect at each step (constant without drift).
    pub factors: Vec<Vec<DenseMatrix<S>>>,
    pub cores: Vec<DenseTensor<S>>,
    pub signals: Vec<DenseTensor<S>>,
}

pub fn synth_tts<S: Scalar>(cfg: &SynthConfig) -> Result<SynthSeries<S>> {
    let mut us = gen_subspaces::<S>(cfg)?;
    let cores = gen_core_series::<S>(cfg)?;
    let rotations = (cfg.drift_angle > 0.0).then(|| drift_rotations(&us, cfg.drift_angle, cfg.seed));
    let mut noise_rng = rng_for(cfg.seed, STREAM_NOISE);
    let mut factors = Vec::with_capacity(cfg.t);
    let mut signals = Vec::with_capacity(cfg.t);
    let mut tensors = Vec::with_capacity(cfg.t);
    for (step, g) in cores.iter().enumerate() {
        if step > 0 {
            if let Some(qs) = &rotations {
                us = us
                    .iter()
                    .zip(qs)
                    .map(|(u, q)| q.matmul(u))
                    .collect::<Result<Vec<_>>>()?;
            }
        }
        let signal = reconstruct(g, &us)?;
        let mut e = DenseTensor::from_fn(&cfg.dims, |_| S::gaussian(&mut noise_rng))?;
        let en = e.frob_norm();
        let mut x = signal.clone();
        if en > 0.0 && cfg.rho > 0.0 {
            e = e.scale(S::from_real(cfg.rho * g.frob_norm() / en));
            x = x.add(&e)?;
        }
        factors.push(us.clone());
        signals.push(signal);
        tensors.push(x);
    }
    Ok(SynthSeries {
        record: TtsRecord::new(cfg.dims.clone(), tensors, None)?,
        factors,
        cores,
        signals,
    })
}
