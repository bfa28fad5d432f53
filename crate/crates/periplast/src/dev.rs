//! Coordinates for symmetric deviatoric (trace-free) tensors.
//!
//! Plastic strain values are stored as coefficients in an orthonormal basis
//! of the deviatoric subspace, 2 coordinates for n = 2 and 5 for n = 3.
//! Trace-freeness and symmetry then hold exactly by representation, and the
//! Euclidean norm of a coordinate vector equals the Frobenius norm of the
//! tensor, so the von Mises dissipation and the pointwise flow problem are
//! plain Euclidean objects on these coordinates.
//!
//! Basis, n = 2:  (1/sqrt2) diag(1,-1),  (1/sqrt2) offdiag.
//! Basis, n = 3:  (1/sqrt2) sym(12), (1/sqrt2) sym(13), (1/sqrt2) sym(23),
//!                (1/sqrt2) diag(1,-1,0), (1/sqrt6) diag(1,1,-2).

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Number of deviatoric coordinates in dimension `n`.
#[inline]
pub const fn dim(n: usize) -> usize {
    match n {
        2 => 2,
        3 => 5,
        _ => panic!("dimension must be 2 or 3"),
    }
}

/// Coefficients of the bond map `P -> (P e) . e` for a unit direction `e`:
/// `(P e) . e = coeffs . p` on the orthonormal coordinates.
#[inline]
pub fn bond_coeffs(n: usize, e: &[f64], out: &mut [f64]) {
    match n {
        2 => {
            out[0] = (e[0] * e[0] - e[1] * e[1]) / SQRT2;
            out[1] = SQRT2 * e[0] * e[1];
        }
        3 => {
            out[0] = SQRT2 * e[0] * e[1];
            out[1] = SQRT2 * e[0] * e[2];
            out[2] = SQRT2 * e[1] * e[2];
            out[3] = (e[0] * e[0] - e[1] * e[1]) / SQRT2;
            out[4] = (e[0] * e[0] + e[1] * e[1] - 2.0 * e[2] * e[2]) / 6.0f64.sqrt();
        }
        _ => unreachable!(),
    }
}

/// `(P e) . e` for coordinates `p` and unit direction `e`.
#[inline]
pub fn bond_projection(n: usize, p: &[f64], e: &[f64]) -> f64 {
    match n {
        2 => {
            p[0] * (e[0] * e[0] - e[1] * e[1]) / SQRT2 + p[1] * SQRT2 * e[0] * e[1]
        }
        3 => {
            p[0] * SQRT2 * e[0] * e[1]
                + p[1] * SQRT2 * e[0] * e[2]
                + p[2] * SQRT2 * e[1] * e[2]
                + p[3] * (e[0] * e[0] - e[1] * e[1]) / SQRT2
                + p[4] * (e[0] * e[0] + e[1] * e[1] - 2.0 * e[2] * e[2]) / 6.0f64.sqrt()
        }
        _ => unreachable!(),
    }
}

/// Coordinates of the 2-d deviatoric tensor with entries `p11`, `p12`
/// (and `p22 = -p11`).
#[inline]
pub fn coords_2d(p11: f64, p12: f64) -> [f64; 2] {
    [SQRT2 * p11, SQRT2 * p12]
}

/// Tensor entries `(p11, p12)` of 2-d coordinates.
#[inline]
pub fn entries_2d(p: &[f64]) -> (f64, f64) {
    (p[0] / SQRT2, p[1] / SQRT2)
}

/// Coordinates of the 3-d deviatoric tensor with independent entries
/// `(p11, p22, p12, p13, p23)` and `p33 = -p11 - p22`.
#[inline]
pub fn coords_3d(p11: f64, p22: f64, p12: f64, p13: f64, p23: f64) -> [f64; 5] {
    let p33 = -p11 - p22;
    [
        SQRT2 * p12,
        SQRT2 * p13,
        SQRT2 * p23,
        (p11 - p22) / SQRT2,
        (p11 + p22 - 2.0 * p33) / 6.0f64.sqrt(),
    ]
}

/// Tensor entries `(p11, p22, p12, p13, p23)` of 3-d coordinates.
#[inline]
pub fn entries_3d(p: &[f64]) -> (f64, f64, f64, f64, f64) {
    let sum = p[4] * (2.0f64 / 3.0).sqrt(); // p11 + p22
    let diff = SQRT2 * p[3]; // p11 - p22
    (
        0.5 * (sum + diff),
        0.5 * (sum - diff),
        p[0] / SQRT2,
        p[1] / SQRT2,
        p[2] / SQRT2,
    )
}

/// Full row-major `n x n` matrix of a coordinate vector.
pub fn to_matrix(n: usize, p: &[f64]) -> Vec<f64> {
    match n {
        2 => {
            let (p11, p12) = entries_2d(p);
            vec![p11, p12, p12, -p11]
        }
        3 => {
            let (p11, p22, p12, p13, p23) = entries_3d(p);
            vec![
                p11, p12, p13, //
                p12, p22, p23, //
                p13, p23, -p11 - p22,
            ]
        }
        _ => unreachable!(),
    }
}

/// Projects a symmetric `n x n` matrix (row-major) onto the deviatoric
/// coordinates. The trace component is discarded.
pub fn from_symmetric(n: usize, s: &[f64]) -> Vec<f64> {
    match n {
        2 => vec![(s[0] - s[3]) / SQRT2, SQRT2 * s[1]],
        3 => vec![
            SQRT2 * s[1],
            SQRT2 * s[2],
            SQRT2 * s[5],
            (s[0] - s[4]) / SQRT2,
            (s[0] + s[4] - 2.0 * s[8]) / 6.0f64.sqrt(),
        ],
        _ => unreachable!(),
    }
}

/// Frobenius norm of the tensor = Euclidean norm of the coordinates.
#[inline]
pub fn frob_norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}
