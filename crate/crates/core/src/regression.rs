//! AR(p) modelling of a tensor series, with optional d-th order differencing.
//!
//! Coefficients are fitted on the differenced series. Differencing and the AR
//! recursion compose to an AR(p + d) recursion on the raw series whose
//! coefficients are given by [`expanded_coefficients`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, TopaError};
use crate::linalg::solve_reg_normal;
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Highest supported differencing order.
pub const MAX_DIFF: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArSpec {
    pub p: usize,
    pub d: usize,
}

impl ArSpec {
    pub fn new(p: usize, d: usize) -> Result<Self> {
        let spec = Self { p, d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(TopaError::InvalidConfig("AR order p must be >= 1".into()));
        }
        if self.d > MAX_DIFF {
            return Err(TopaError::InvalidConfig(format!(
                "differencing order d must be <= {MAX_DIFF}, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// Number of past values the raw-series recursion depends on.
    pub fn lag(&self) -> usize {
        self.p + self.d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArParams<S> {
    pub alpha: Vec<S>,
}

impl<S: Scalar> ArParams<S> {
    pub fn zeros(p: usize) -> Self {
        Self {
            alpha: vec![S::zero(); p],
        }
    }

    pub fn dist_sq(&self, other: &Self) -> f64 {
        self.alpha
            .iter()
            .zip(&other.alpha)
            .map(|(&a, &b)| (a - b).abs2())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().all(|a| a.is_finite())
    }
}

/// `d`-th order successive differences; the result has `len - d` entries.
pub fn difference<S: Scalar>(series: &[DenseTensor<S>], d: usize) -> Result<Vec<DenseTensor<S>>> {
    let mut cur = series.to_vec();
    for _ in 0..d {
        cur = cur
            .windows(2)
            .map(|w| w[1].sub(&w[0]))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(cur)
}

/// `R[i][j] = sum_t <G_{t-i}, G_{t-j}>` and `r[i] = sum_t <G_{t-i}, G_t>` for
/// `t = p+1..T` (1-based lags `i, j` in `1..=p`).
pub fn yule_walker_stats<S: Scalar>(
    series: &[DenseTensor<S>],
    p: usize,
) -> Result<(DenseMatrix<S>, Vec<S>)> {
    let n = series.len();
    if n < p + 1 {
        return Err(TopaError::SeriesTooShort {
            needed: p + 1,
            got: n,
        });
    }
    let mut rm = DenseMatrix::<S>::zeros(p, p);
    let mut rv = vec![S::zero(); p];
    for t in p..n {
        for i in 0..p {
            let gi = &series[t - i - 1];
            rv[i] += gi.inner(&series[t])?;
            for j in i..p {
                rm[(i, j)] += gi.inner(&series[t - j - 1])?;
            }
        }
    }
    for i in 0..p {
        rm[(i, i)] = S::from_real(rm[(i, i)].re());
        for j in 0..i {
            rm[(i, j)] = rm[(j, i)].conj();
        }
    }
    Ok((rm, rv))
}

/// Proximally regularized AR fit:
/// `argmin_a sum_t ||G'_t - sum_i a_i G'_{t-i}||^2 + (lambda/2) ||a - prev||^2`
/// on the `d`-times differenced series `G'`.
pub fn fit_ar<S: Scalar>(
    series: &[DenseTensor<S>],
    spec: ArSpec,
    lambda: f64,
    prev: &ArParams<S>,
) -> Result<ArParams<S>> {
    spec.validate()?;
    if prev.alpha.len() != spec.p {
        return Err(TopaError::ShapeMismatch(format!(
            "previous parameters have {} entries, order is {}",
            prev.alpha.len(),
            spec.p
        )));
    }
    if series.len() < spec.lag() + 1 {
        return Err(TopaError::SeriesTooShort {
            needed: spec.lag() + 1,
            got: series.len(),
        });
    }
    let diffed = difference(series, spec.d)?;
    let (rm, rv) = yule_walker_stats(&diffed, spec.p)?;
    // With <x, y> = sum x conj(y) the normal equations read conj(R) a = conj(r);
    // solve the conjugated system R conj(a) = r instead.
    let prev_conj: Vec<S> = prev.alpha.iter().map(|a| a.conj()).collect();
    let x = solve_reg_normal(&rm, &rv, lambda, &prev_conj)?;
    Ok(ArParams {
        alpha: x.into_iter().map(|a| a.conj()).collect(),
    })
}

/// One-step forecast: AR recursion on the differenced series, then `d`
/// cumulative re-summations anchored at the series tail.
pub fn forecast<S: Scalar>(
    params: &ArParams<S>,
    spec: ArSpec,
    series: &[DenseTensor<S>],
) -> Result<DenseTensor<S>> {
    spec.validate()?;
    if params.alpha.len() != spec.p {
        return Err(TopaError::ShapeMismatch(format!(
            "{} coefficients for AR order {}",
            params.alpha.len(),
            spec.p
        )));
    }
    if series.len() < spec.lag() {
        return Err(TopaError::SeriesTooShort {
            needed: spec.lag(),
            got: series.len(),
        });
    }
    // Only the last p + d values matter.
    let tail = &series[series.len() - spec.lag()..];
    let mut levels = vec![tail.to_vec()];
    for _ in 0..spec.d {
        let next = difference(levels.last().expect("nonempty"), 1)?;
        levels.push(next);
    }
    let top = levels.last().expect("nonempty");
    let mut out = DenseTensor::zeros(top[0].dims())?;
    for (i, &a) in params.alpha.iter().enumerate() {
        out.axpy(a, &top[top.len() - 1 - i])?;
    }
    for level in levels[..spec.d].iter().rev() {
        out = level.last().expect("nonempty").add(&out)?;
    }
    Ok(out)
}

/// Coefficients `b_1..b_{p+d}` with `(1 - B)^d (1 - sum_i a_i B^i) = 1 - sum_k b_k B^k`,
/// so the raw-series predictor is `sum_k b_k G_{t-k}`.
pub fn expanded_coefficients<S: Scalar>(params: &ArParams<S>, spec: ArSpec) -> Vec<S> {
    let mut poly: Vec<S> = std::iter::once(S::one())
        .chain(params.alpha.iter().map(|&a| -a))
        .collect();
    for _ in 0..spec.d {
        let mut next = poly.clone();
        next.push(S::zero());
        for k in 1..next.len() {
            next[k] -= poly[k - 1];
        }
        poly = next;
    }
    poly[1..].iter().map(|&c| -c).collect()
}
