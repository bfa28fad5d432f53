//! Pointwise proximal map of the plastic update:
//! minimize `0.5 (P - P_old) : M (P - P_old) + g : (P - P_old) + s |P - P_old|`
//! over deviatoric coordinates, with `M` symmetric positive definite and
//! `|.|` the Frobenius (= Euclidean coordinate) norm.
//!
//! The optimality inclusion `M Q + g + s d|Q| = 0` either sticks (`Q = 0`
//! when `|g| <= s`) or reduces to `(M + (s/r) I) Q = -g` with `r = |Q|`
//! solving a monotone scalar equation, handled by safeguarded
//! Newton/bisection on the eigenbasis of `M`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProxError {
    #[error("quadratic operator is not positive definite (eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
}

/// Eigendecomposition of the per-cell quadratic operator, cached so the
/// scalar root solve is cheap across sweeps.
#[derive(Debug, Clone)]
pub struct ProxOperator {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

impl ProxOperator {
    pub fn new(m: &DMatrix<f64>) -> Result<Self, ProxError> {
        let sym = m.clone().symmetric_eigen();
        let min = sym.eigenvalues.min();
        if !(min > 0.0) {
            return Err(ProxError::NotPositiveDefinite(min));
        }
        Ok(ProxOperator {
            eigvecs: sym.eigenvectors,
            eigvals: sym.eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Solves the step `Q = argmin 0.5 Q:MQ + g:Q + s|Q|`.
    pub fn step(&self, g: &DVector<f64>, s: f64, root_tol: f64) -> Result<DVector<f64>, ProxError> {
        if s < 0.0 {
            return Err(ProxError::NegativeThreshold(s));
        }
        let gnorm = g.norm();
        // stick case, including the kink tie |g| = s
        if gnorm <= s {
            return Ok(DVector::zeros(self.dim()));
        }
        let ghat = self.eigvecs.transpose() * g;
        if s == 0.0 {
            let q = -&self.eigvecs
                * DVector::from_iterator(
                    self.dim(),
                    ghat.iter().zip(self.eigvals.iter()).map(|(gh, l)| gh / l),
                );
            return Ok(q);
        }

        // psi(r) = |(M + (s/r) I)^{-1} g|; solve psi(r) = r on (0, |M^{-1}g|]
        let psi = |r: f64| -> f64 {
            ghat.iter()
                .zip(self.eigvals.iter())
                .map(|(gh, l)| {
                    let v = gh / (l + s / r);
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        };
        let psi_prime = |r: f64, psi_r: f64| -> f64 {
            let num: f64 = ghat
                .iter()
                .zip(self.eigvals.iter())
                .map(|(gh, l)| gh * gh / (l + s / r).powi(3))
                .sum();
            (s / (r * r)) * num / psi_r
        };

        let mut hi = ghat
            .iter()
            .zip(self.eigvals.iter())
            .map(|(gh, l)| (gh / l) * (gh / l))
            .sum::<f64>()
            .sqrt();
        let mut lo = 0.0f64;
        // f(r) = psi(r) - r is positive near 0 (|g| > s) and <= 0 at hi
        let mut r = hi;
        for _ in 0..200 {
            let p = psi(r);
            let f = p - r;
            if f.abs() <= root_tol * r.max(1e-300) {
                break;
            }
            if f > 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            // Newton step, bisection fallback when it leaves the bracket
            let fp = psi_prime(r, p) - 1.0;
            let newton = r - f / fp;
            r = if fp < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }

        let q = -&self.eigvecs
            * DVector::from_iterator(
                self.dim(),
                ghat.iter()
                    .zip(self.eigvals.iter())
                    .map(|(gh, l)| gh / (l + s / r)),
            );
        Ok(q)
    }
}

/// One-shot form of the plastic prox: returns `P_old + Q`.
pub fn prox_plastic_point(
    m: &DMatrix<f64>,
    g: &DVector<f64>,
    s: f64,
    p_old: &DVector<f64>,
    root_tol: f64,
) -> Result<DVector<f64>, ProxError> {
    let op = ProxOperator::new(m)?;
    Ok(p_old + op.step(g, s, root_tol)?)
}

/// Closed-form shrinkage for isotropic `M = m_scalar * I`:
/// `Q = -(|g| - s)_+ g / (m_scalar |g|)`.
pub fn shrinkage_step(g: &[f64], s: f64, m_scalar: f64, out: &mut [f64]) {
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm <= s {
        out.fill(0.0);
        return;
    }
    let factor = -(gnorm - s) / (m_scalar * gnorm);
    for (o, gi) in out.iter_mut().zip(g) {
        *o = factor * gi;
    }
}

/// Residual of the subgradient inclusion `M Q + g + s d|Q|(Q) = 0`:
/// distance to the subdifferential at the returned step.
pub fn inclusion_residual(m: &DMatrix<f64>, g: &DVector<f64>, s: f64, q: &DVector<f64>) -> f64 {
    let grad = m * q + g;
    let qn = q.norm();
    if qn == 0.0 {
        (grad.norm() - s).max(0.0)
    } else {
        (grad + q * (s / qn)).norm()
    }
}
