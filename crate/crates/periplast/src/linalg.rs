//! Small dense-free numerical kernels shared across the crate: compensated
//! summation and a matrix-free preconditioned conjugate gradient solver.

use thiserror::Error;

/// Neumaier-style compensated accumulator.
///
/// The horizon sweeps compare nearly equal double sums, so pair terms are
/// accumulated with a running error compensation instead of a bare `+=`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums a slice with compensation, in index order (deterministic).
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Error)]
pub enum CgError {
    #[error("conjugate gradient did not reach tolerance {tol:e} in {max_iter} iterations (residual {residual:e})")]
    NoConvergence {
        tol: f64,
        max_iter: usize,
        residual: f64,
    },
    #[error("operator is not positive definite: encountered curvature {curvature:e}")]
    IndefiniteOperator { curvature: f64 },
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub iterations: usize,
    /// Final residual norm relative to `max(||rhs||, eps)`.
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradient with a matrix-free operator.
///
/// `apply` must implement a symmetric positive definite map; `precond`
/// applies an SPD preconditioner (pass the identity copy for none).
/// `x` holds the initial guess on entry and the solution on exit.
/// Convergence is on the true-residual proxy `||r|| <= tol * max(||b||, tiny)`.
pub fn solve_cg<A, P>(
    apply: A,
    precond: P,
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgResult, CgError>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let m = rhs.len();
    assert_eq!(x.len(), m);
    let bnorm = norm2(rhs).max(f64::MIN_POSITIVE);

    let mut r = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut ap = vec![0.0; m];

    apply(x, &mut ap);
    for i in 0..m {
        r[i] = rhs[i] - ap[i];
    }
    let mut resid = norm2(&r);
    if resid <= tol * bnorm {
        return Ok(CgResult {
            iterations: 0,
            relative_residual: resid / bnorm,
        });
    }

    precond(&r, &mut z);
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);

    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(CgError::IndefiniteOperator { curvature });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        resid = norm2(&r);
        if resid <= tol * bnorm {
            return Ok(CgResult {
                iterations: iter,
                relative_residual: resid / bnorm,
            });
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(CgError::NoConvergence {
        tol,
        max_iter,
        residual: resid / bnorm,
    })
}
