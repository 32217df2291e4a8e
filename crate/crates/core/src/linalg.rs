//! Thin SVD (one-sided Jacobi), the orthogonal Procrustes map, and a
//! regularized Hermitian solve via Cholesky.

use crate::error::{Result, TopaError};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `A = L diag(s) R^H`.
#[derive(Debug, Clone)]
pub struct ThinSvd<S> {
    /// `I x R`, orthonormal columns.
    pub left: DenseMatrix<S>,
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// `R x R`, unitary.
    pub right: DenseMatrix<S>,
}

impl<S: Scalar> ThinSvd<S> {
    pub fn reconstruct(&self) -> DenseMatrix<S> {
        let r = self.singular_values.len();
        let ls = DenseMatrix::from_fn(self.left.rows(), r, |i, j| {
            self.left[(i, j)].scale(self.singular_values[j])
        });
        ls.matmul(&self.right.adjoint()).expect("conformal")
    }
}

fn dot_conj<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x.conj() * y).sum()
}

fn norm_sq<S: Scalar>(a: &[S]) -> f64 {
    a.iter().map(|x| x.abs2()).sum()
}

/// Thin SVD of a tall or square matrix (`rows >= cols`).
pub fn thin_svd<S: Scalar>(a: &DenseMatrix<S>) -> Result<ThinSvd<S>> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return Err(TopaError::EmptyMatrix);
    }
    if rows < cols {
        return Err(TopaError::ShapeMismatch(format!(
            "thin SVD needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut work: Vec<Vec<S>> = (0..cols).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<S>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { S::one() } else { S::zero() }).collect())
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = norm_sq(&work[p]);
                let beta = norm_sq(&work[q]);
                let gamma = dot_conj(&work[p], &work[q]);
                let g = gamma.abs();
                if g == 0.0 || g <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate (c_p, conj(phase) c_q) by a real Jacobi rotation.
                let phase_conj = gamma.conj().scale(1.0 / g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_pair(&mut work, p, q, cs, sn, phase_conj);
                rotate_pair(&mut v, p, q, cs, sn, phase_conj);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = work.iter().map(|c| norm_sq(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];
    let cutoff = smax * 1e-13 * rows as f64;

    let mut left_cols: Vec<Option<Vec<S>>> = Vec::with_capacity(cols);
    let mut singular_values = Vec::with_capacity(cols);
    for &j in &order {
        let s = norms[j];
        if s > cutoff && s > 0.0 {
            let inv = 1.0 / s;
            left_cols.push(Some(work[j].iter().map(|x| x.scale(inv)).collect()));
            singular_values.push(s);
        } else {
            left_cols.push(None);
            singular_values.push(0.0);
        }
    }
    let left_cols = complete_orthonormal(left_cols, rows);

    let left = DenseMatrix::from_fn(rows, cols, |i, j| left_cols[j][i]);
    let right = DenseMatrix::from_fn(cols, cols, |i, j| v[order[j]][i]);
    Ok(ThinSvd {
        left,
        singular_values,
        right,
    })
}

fn rotate_pair<S: Scalar>(cols: &mut [Vec<S>], p: usize, q: usize, cs: f64, sn: f64, ph: S) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = ph * *y;
        let xp = *x;
        *x = xp.scale(cs) - yq.scale(sn);
        *y = xp.scale(sn) + yq.scale(cs);
    }
}

/// Fills missing columns (null-space directions) by Gram-Schmidt on the standard basis.
fn complete_orthonormal<S: Scalar>(mut cols: Vec<Option<Vec<S>>>, rows: usize) -> Vec<Vec<S>> {
    let mut candidate = 0usize;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        loop {
            assert!(candidate < rows, "orthonormal completion exhausted the basis");
            let mut v: Vec<S> = (0..rows)
                .map(|i| if i == candidate { S::one() } else { S::zero() })
                .collect();
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let proj = dot_conj(c, &v);
                    for (vi, &ci) in v.iter_mut().zip(c) {
                        *vi -= proj * ci;
                    }
                }
            }
            let n = norm_sq(&v).sqrt();
            if n > 0.5 {
                cols[j] = Some(v.into_iter().map(|x| x.scale(1.0 / n)).collect());
                break;
            }
        }
    }
    cols.into_iter().map(|c| c.expect("completed")).collect()
}

/// Nearest matrix with orthonormal columns: `U = L R^H` from the thin SVD of
/// `W`. Maximizes `Re trace(U^H W)` over the Stiefel manifold.
pub fn procrustes<S: Scalar>(w: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    let svd = thin_svd(w)?;
    svd.left.matmul(&svd.right.adjoint())
}

/// Solves `(Rm + (lambda/2) I) x = rv + (lambda/2) x_prev` by Cholesky.
pub fn solve_reg_normal<S: Scalar>(
    rm: &DenseMatrix<S>,
    rv: &[S],
    lambda: f64,
    x_prev: &[S],
) -> Result<Vec<S>> {
    let p = rm.rows();
    if rm.cols() != p || rv.len() != p || x_prev.len() != p {
        return Err(TopaError::ShapeMismatch(format!(
            "regularized solve with {}x{} matrix, rhs {}, prior {}",
            rm.rows(),
            rm.cols(),
            rv.len(),
            x_prev.len()
        )));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(TopaError::InvalidConfig(format!(
            "proximal weight must be finite and nonnegative, got {lambda}"
        )));
    }
    let half = lambda / 2.0;
    let mut m = rm.clone();
    for i in 0..p {
        m[(i, i)] += S::from_real(half);
    }
    let b: Vec<S> = rv
        .iter()
        .zip(x_prev)
        .map(|(&r, &a)| r + a.scale(half))
        .collect();
    cholesky_solve(&m, &b)
}

/// Solves a Hermitian positive definite system, reading the lower triangle.
pub fn cholesky_solve<S: Scalar>(m: &DenseMatrix<S>, b: &[S]) -> Result<Vec<S>> {
    let p = m.rows();
    let scale = (0..p).map(|i| m[(i, i)].re().abs()).fold(0.0, f64::max);
    let tol = scale * 1e-14 * p as f64;
    let mut l = DenseMatrix::<S>::zeros(p, p);
    for j in 0..p {
        let mut d = m[(j, j)].re();
        for k in 0..j {
            d -= l[(j, k)].abs2();
        }
        if !(d > tol) || d <= 0.0 {
            return Err(TopaError::Singular(format!(
                "pivot {j} is {d:.3e} (scale {scale:.3e})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = S::from_real(djj);
        for i in j + 1..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s.scale(1.0 / djj);
        }
    }
    // L y = b
    let mut y = b.to_vec();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s.scale(1.0 / l[(i, i)].re());
    }
    // L^H x = y
    let mut x = y;
    for i in (0..p).rev() {
        let mut s = x[i];
        for k in i + 1..p {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s.scale(1.0 / l[(i, i)].re());
    }
    Ok(x)
}
