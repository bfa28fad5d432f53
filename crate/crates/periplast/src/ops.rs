//! Nonlocal kinematic operators on discrete fields: projected pair strains,
//! nonlocal divergences, the plastic bond moment, and the seminorms they
//! induce.
//!
//! All pair sums follow midpoint quadrature: weight `w*w` for double
//! integrals, `w` for single ones, with the self-pair excluded. Pair sums
//! are accumulated with compensated summation because the horizon sweeps
//! compare nearly equal values.

use crate::dev;
use crate::kernel::NeighborTable;
use crate::linalg::KahanSum;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("displacement field has {got} entries, expected {expected}")]
    DisplacementSize { expected: usize, got: usize },
    #[error("plastic field has {got} entries, expected {expected}")]
    PlasticSize { expected: usize, got: usize },
    #[error("self-pair ({0}, {0}) is excluded by the principal-value convention")]
    SelfPair(usize),
    #[error("cells {0} and {1} are not within the horizon")]
    NotNeighbors(usize, usize),
}

/// Displacement and plastic strain of the medium on one grid.
///
/// `u` holds `n` components per cell; `p` holds the deviatoric coordinates
/// (see [`crate::dev`]) per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl State {
    pub fn zeros(cells: usize, n: usize) -> Self {
        State {
            u: vec![0.0; cells * n],
            p: vec![0.0; cells * dev::dim(n)],
        }
    }
}

pub(crate) fn check_u(u: &[f64], table: &NeighborTable) -> Result<(), OpsError> {
    let expected = table.cells() * table.n;
    if u.len() != expected {
        return Err(OpsError::DisplacementSize {
            expected,
            got: u.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_p(p: &[f64], table: &NeighborTable) -> Result<(), OpsError> {
    let expected = table.cells() * dev::dim(table.n);
    if p.len() != expected {
        return Err(OpsError::PlasticSize {
            expected,
            got: p.len(),
        });
    }
    Ok(())
}

#[inline]
fn strain_of(u: &[f64], n: usize, i: usize, j: usize, dir: &[f64], dist: f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..n {
        acc += (u[j * n + a] - u[i * n + a]) * dir[a];
    }
    acc / dist
}

/// Projected nonlocal strain of the pair `(i, j)`:
/// `((u_j - u_i) . e_ij) / d_ij`.
pub fn pair_strain(u: &[f64], table: &NeighborTable, i: usize, j: usize) -> Result<f64, OpsError> {
    check_u(u, table)?;
    if i == j {
        return Err(OpsError::SelfPair(i));
    }
    let entry = table
        .find_pair(i, j)
        .ok_or(OpsError::NotNeighbors(i, j))?;
    Ok(strain_of(u, table.n, i, j, entry.dir, entry.dist))
}

/// Pair strain with the plastic contribution removed: the plastic strain is
/// evaluated at the first cell only.
pub fn pair_strain_plastic(
    u: &[f64],
    p: &[f64],
    table: &NeighborTable,
    i: usize,
    j: usize,
) -> Result<f64, OpsError> {
    check_p(p, table)?;
    let elastic = pair_strain(u, table, i, j)?;
    let m = dev::dim(table.n);
    let entry = table.find_pair(i, j).unwrap();
    Ok(elastic - dev::bond_projection(table.n, &p[i * m..(i + 1) * m], entry.dir))
}

/// Nonlocal divergence: per-cell kernel-weighted sum of pair strains.
pub fn nonlocal_divergence(u: &[f64], table: &NeighborTable) -> Result<Vec<f64>, OpsError> {
    check_u(u, table)?;
    Ok(divergence_field(u, table))
}

/// Nonlocal divergence of the elastically effective strain (plastic bond
/// projection subtracted).
pub fn nonlocal_divergence_plastic(
    u: &[f64],
    p: &[f64],
    table: &NeighborTable,
) -> Result<Vec<f64>, OpsError> {
    check_u(u, table)?;
    check_p(p, table)?;
    Ok(divergence_plastic_field(u, p, table))
}

/// Kernel-weighted bond projection of the plastic strain. Vanishes exactly
/// at cells with a full symmetric stencil because the strain is deviatoric.
pub fn plastic_moment(p: &[f64], table: &NeighborTable) -> Result<Vec<f64>, OpsError> {
    check_p(p, table)?;
    let n = table.n;
    let m = dev::dim(n);
    let w = table.w;
    Ok((0..table.cells())
        .into_par_iter()
        .map(|i| {
            let pi = &p[i * m..(i + 1) * m];
            let mut acc = KahanSum::new();
            for pair in table.pairs(i) {
                acc.add(pair.rho * dev::bond_projection(n, pi, pair.dir) * w);
            }
            acc.value()
        })
        .collect())
}

pub(crate) fn divergence_field(u: &[f64], table: &NeighborTable) -> Vec<f64> {
    let n = table.n;
    let w = table.w;
    (0..table.cells())
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::new();
            for pair in table.pairs(i) {
                acc.add(pair.rho * strain_of(u, n, i, pair.neighbor, pair.dir, pair.dist) * w);
            }
            acc.value()
        })
        .collect()
}

pub(crate) fn divergence_plastic_field(u: &[f64], p: &[f64], table: &NeighborTable) -> Vec<f64> {
    let n = table.n;
    let m = dev::dim(n);
    let w = table.w;
    (0..table.cells())
        .into_par_iter()
        .map(|i| {
            let pi = &p[i * m..(i + 1) * m];
            let mut acc = KahanSum::new();
            for pair in table.pairs(i) {
                let strain = strain_of(u, n, i, pair.neighbor, pair.dir, pair.dist)
                    - dev::bond_projection(n, pi, pair.dir);
                acc.add(pair.rho * strain * w);
            }
            acc.value()
        })
        .collect()
}

/// Seminorms and norms of a state.
#[derive(Debug, Clone, Copy)]
pub struct SeminormReport {
    /// Pair seminorm of the displacement alone.
    pub s_semi: f64,
    /// Pair seminorm of the elastoplastic pair strain.
    pub t_semi: f64,
    pub l2_u: f64,
    pub l2_p: f64,
    pub s_norm: f64,
    pub t_norm: f64,
}

pub fn seminorms(state: &State, table: &NeighborTable) -> Result<SeminormReport, OpsError> {
    check_u(&state.u, table)?;
    check_p(&state.p, table)?;
    let n = table.n;
    let m = dev::dim(n);
    let w = table.w;
    let ww = w * w;

    let partials: Vec<(f64, f64)> = (0..table.cells())
        .into_par_iter()
        .map(|i| {
            let pi = &state.p[i * m..(i + 1) * m];
            let mut s2 = KahanSum::new();
            let mut t2 = KahanSum::new();
            for pair in table.pairs(i) {
                let d = strain_of(&state.u, n, i, pair.neighbor, pair.dir, pair.dist);
                let e = d - dev::bond_projection(n, pi, pair.dir);
                s2.add(pair.rho * d * d * ww);
                t2.add(pair.rho * e * e * ww);
            }
            (s2.value(), t2.value())
        })
        .collect();

    let mut s2 = KahanSum::new();
    let mut t2 = KahanSum::new();
    for (a, b) in partials {
        s2.add(a);
        t2.add(b);
    }
    let s_semi = s2.value().max(0.0).sqrt();
    let t_semi = t2.value().max(0.0).sqrt();

    let mut l2u = KahanSum::new();
    for chunk in state.u.chunks_exact(n) {
        l2u.add(chunk.iter().map(|x| x * x).sum::<f64>() * w);
    }
    let mut l2p = KahanSum::new();
    for chunk in state.p.chunks_exact(m) {
        l2p.add(chunk.iter().map(|x| x * x).sum::<f64>() * w);
    }
    let l2_u = l2u.value().sqrt();
    let l2_p = l2p.value().sqrt();

    Ok(SeminormReport {
        s_semi,
        t_semi,
        l2_u,
        l2_p,
        s_norm: (l2_u * l2_u + s_semi * s_semi).sqrt(),
        t_norm: (l2_u * l2_u + l2_p * l2_p + t_semi * t_semi).sqrt(),
    })
}

/// Gradient of the quadratic energy part with respect to the displacement,
/// written into `out` (length `cells * n`). The quadratic part is
/// `beta * sum_i Dvg_i^2 w + alpha * sum_ij rho (E_ij - Edvg_i / n)^2 w^2`.
///
/// Derivation folds the divergence corrections into per-cell coefficients:
/// with `t_ij = alpha E_ij - (alpha/n)(2 - m_i/n) Edvg_i + beta Dvg_i`, the
/// gradient at cell k is `-2 w^2 sum_j rho_kj (t_kj + t_jk) e_kj / d_kj`.
pub(crate) fn quad_grad_u(
    u: &[f64],
    p: &[f64],
    table: &NeighborTable,
    alpha: f64,
    beta: f64,
    out: &mut [f64],
) {
    let n = table.n;
    let m = dev::dim(n);
    let w = table.w;
    let cells = table.cells();
    debug_assert_eq!(out.len(), cells * n);

    let dvg = divergence_field(u, table);
    let edvg = divergence_plastic_field(u, p, table);
    let coeff: Vec<f64> = (0..cells)
        .map(|i| -(alpha / n as f64) * (2.0 - table.mass(i) / n as f64) * edvg[i] + beta * dvg[i])
        .collect();

    let grads: Vec<[f64; 3]> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let pk = &p[k * m..(k + 1) * m];
            let mut acc = [KahanSum::new(), KahanSum::new(), KahanSum::new()];
            for pair in table.pairs(k) {
                let j = pair.neighbor;
                let d = strain_of(u, n, k, j, pair.dir, pair.dist);
                let e_kj = d - dev::bond_projection(n, pk, pair.dir);
                let e_jk = d - dev::bond_projection(n, &p[j * m..(j + 1) * m], pair.dir);
                let t = alpha * (e_kj + e_jk) + coeff[k] + coeff[j];
                let f = pair.rho * t / pair.dist;
                for a in 0..n {
                    acc[a].add(f * pair.dir[a]);
                }
            }
            let mut g = [0.0; 3];
            for a in 0..n {
                g[a] = -2.0 * w * w * acc[a].value();
            }
            g
        })
        .collect();

    for (k, g) in grads.iter().enumerate() {
        for a in 0..n {
            out[k * n + a] = g[a];
        }
    }
}

/// Elastic fast path of [`quad_grad_u`] for `p = 0`; one fewer table pass,
/// used inside every CG iteration.
pub(crate) fn quad_grad_u_elastic(
    u: &[f64],
    table: &NeighborTable,
    alpha: f64,
    beta: f64,
    out: &mut [f64],
) {
    let n = table.n;
    let w = table.w;
    let cells = table.cells();
    debug_assert_eq!(out.len(), cells * n);

    let dvg = divergence_field(u, table);
    let coeff: Vec<f64> = (0..cells)
        .map(|i| (beta - (alpha / n as f64) * (2.0 - table.mass(i) / n as f64)) * dvg[i])
        .collect();

    let grads: Vec<[f64; 3]> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let mut acc = [KahanSum::new(), KahanSum::new(), KahanSum::new()];
            for pair in table.pairs(k) {
                let j = pair.neighbor;
                let d = strain_of(u, n, k, j, pair.dir, pair.dist);
                let t = 2.0 * alpha * d + coeff[k] + coeff[j];
                let f = pair.rho * t / pair.dist;
                for a in 0..n {
                    acc[a].add(f * pair.dir[a]);
                }
            }
            let mut g = [0.0; 3];
            for a in 0..n {
                g[a] = -2.0 * w * w * acc[a].value();
            }
            g
        })
        .collect();

    for (k, g) in grads.iter().enumerate() {
        for a in 0..n {
            out[k * n + a] = g[a];
        }
    }
}

/// Applies the Gram operator of the displacement pair seminorm:
/// `(S u)_k = -2 w^2 sum_j rho_kj D_kj e_kj / d_kj`, so that
/// `u . (S u) = |u|_S^2`.
pub(crate) fn sgram_apply(u: &[f64], table: &NeighborTable, out: &mut [f64]) {
    let n = table.n;
    let w = table.w;
    let grads: Vec<[f64; 3]> = (0..table.cells())
        .into_par_iter()
        .map(|k| {
            let mut acc = [KahanSum::new(), KahanSum::new(), KahanSum::new()];
            for pair in table.pairs(k) {
                let d = strain_of(u, n, k, pair.neighbor, pair.dir, pair.dist);
                let f = pair.rho * d / pair.dist;
                for a in 0..n {
                    acc[a].add(f * pair.dir[a]);
                }
            }
            let mut g = [0.0; 3];
            for a in 0..n {
                g[a] = -2.0 * w * w * acc[a].value();
            }
            g
        })
        .collect();
    for (k, g) in grads.iter().enumerate() {
        for a in 0..n {
            out[k * n + a] = g[a];
        }
    }
}

/// Exact diagonal of the displacement-block Hessian (P fixed), used as the
/// Jacobi preconditioner.
pub(crate) fn jacobi_diagonal(table: &NeighborTable, alpha: f64, beta: f64) -> Vec<f64> {
    let n = table.n;
    let w = table.w;
    let cells = table.cells();
    let kappa: Vec<f64> = (0..cells)
        .map(|i| beta - (alpha / n as f64) * (2.0 - table.mass(i) / n as f64))
        .collect();

    (0..cells)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut a_sum = [0.0f64; 3];
            let mut b_sum = [0.0f64; 3];
            let mut c_sum = [0.0f64; 3];
            for pair in table.pairs(k) {
                let inv_d = 1.0 / pair.dist;
                for a in 0..n {
                    let ed = pair.dir[a] * inv_d;
                    a_sum[a] += pair.rho * ed;
                    b_sum[a] += pair.rho * ed * ed;
                    c_sum[a] += kappa[pair.neighbor] * pair.rho * pair.rho * ed * ed;
                }
            }
            (0..n).map(move |a| {
                2.0 * w
                    * w
                    * (2.0 * alpha * b_sum[a] + kappa[k] * w * a_sum[a] * a_sum[a] + w * c_sum[a])
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, CollarSpec, Grid};
    use crate::kernel::{build_neighbor_table, make_kernel, KernelFamily, TableMode};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup(cells: usize, delta: f64) -> (Grid, NeighborTable) {
        let g = build_grid(2, &[cells, cells], &[1.0, 1.0], CollarSpec::Frame { width: 1 }).unwrap();
        let k = make_kernel(KernelFamily::Constant, delta, 2).unwrap();
        let t = build_neighbor_table(&g, &k, TableMode::Stencil).unwrap();
        (g, t)
    }

    fn affine_field(g: &Grid, a: [[f64; 2]; 2], shift: [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; g.total_cells() * 2];
        for cell in 0..g.total_cells() {
            let x = g.center(cell);
            for r in 0..2 {
                u[cell * 2 + r] = a[r][0] * x[0] + a[r][1] * x[1] + shift[r];
            }
        }
        u
    }

    fn random_u(g: &Grid, rng: &mut impl Rng) -> Vec<f64> {
        (0..g.total_cells() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_p(g: &Grid, rng: &mut impl Rng) -> Vec<f64> {
        (0..g.total_cells() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn pair_strain_basic_values() {
        let (g, t) = setup(8, 0.3);
        // constant field: zero for every pair
        let c = affine_field(&g, [[0.0; 2]; 2], [0.7, -0.4]);
        for pair in t.pairs(27) {
            assert_eq!(pair_strain(&c, &t, 27, pair.neighbor).unwrap(), 0.0);
        }
        // skew field: S v . v = 0
        let s = affine_field(&g, [[0.0, 1.0], [-1.0, 0.0]], [0.0; 2]);
        for pair in t.pairs(27) {
            assert!(pair_strain(&s, &t, 27, pair.neighbor).unwrap().abs() < 1e-13);
        }
        // diag(2, 1) along the x axis: strain 2
        let a = affine_field(&g, [[2.0, 0.0], [0.0, 1.0]], [0.0; 2]);
        let i = 27;
        let j = i + 1; // next cell along x
        assert!((pair_strain(&a, &t, i, j).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            pair_strain(&a, &t, i, i),
            Err(OpsError::SelfPair(_))
        ));
    }

    #[test]
    fn plastic_pair_strain_values() {
        let (g, t) = setup(8, 0.3);
        let zero_u = vec![0.0; g.total_cells() * 2];
        let mut p = vec![0.0; g.total_cells() * 2];
        let i = 27;
        // P_i = diag(p, -p), bond along x: strain -p
        let coords = dev::coords_2d(0.6, 0.0);
        p[i * 2..i * 2 + 2].copy_from_slice(&coords);
        let v = pair_strain_plastic(&zero_u, &p, &t, i, i + 1).unwrap();
        assert!((v + 0.6).abs() < 1e-14);
        // P_i = [[p, q], [q, -p]], bond along the diagonal: strain -q
        let coords = dev::coords_2d(0.6, 0.25);
        p[i * 2..i * 2 + 2].copy_from_slice(&coords);
        let j = i + 1 + 8; // +x +y neighbor
        let v = pair_strain_plastic(&zero_u, &p, &t, i, j).unwrap();
        assert!((v + 0.25).abs() < 1e-14);
        // P = 0 reduces to the elastic strain
        let u = affine_field(&g, [[1.0, 0.5], [0.0, -1.0]], [0.0; 2]);
        let zero_p = vec![0.0; g.total_cells() * 2];
        let a = pair_strain_plastic(&u, &zero_p, &t, i, j).unwrap();
        let b = pair_strain(&u, &t, i, j).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_of_affine_field_is_trace_at_interior() {
        let (g, t) = setup(16, 0.2);
        let a = [[1.3, 0.4], [-0.2, 2.1]];
        let u = affine_field(&g, a, [0.1, 0.2]);
        let dvg = nonlocal_divergence(&u, &t).unwrap();
        let mut checked = 0;
        for cell in 0..g.total_cells() {
            if g.boundary_distance(cell) >= t.kernel.delta {
                assert!(
                    (dvg[cell] - (a[0][0] + a[1][1])).abs() < 1e-12,
                    "cell {cell}: {}",
                    dvg[cell]
                );
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn divergence_of_rigid_motion_vanishes_everywhere() {
        let (g, t) = setup(8, 0.3);
        let u = affine_field(&g, [[0.0, -0.7], [0.7, 0.0]], [0.3, -0.2]);
        for v in nonlocal_divergence(&u, &t).unwrap() {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn operator_identity_and_plastic_moment() {
        let (g, t) = setup(12, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_u(&g, &mut rng);
        let p = random_p(&g, &mut rng);

        let dvg = nonlocal_divergence(&u, &t).unwrap();
        let edvg = nonlocal_divergence_plastic(&u, &p, &t).unwrap();
        let moment = plastic_moment(&p, &t).unwrap();

        for i in 0..g.total_cells() {
            let lhs = edvg[i];
            let rhs = dvg[i] - moment[i];
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!((lhs - rhs).abs() <= 1e-14 * scale.max(1.0));

            let pnorm = dev::frob_norm(&p[i * 2..i * 2 + 2]);
            if g.boundary_distance(i) >= t.kernel.delta {
                assert!(moment[i].abs() <= 1e-12 * pnorm.max(1e-30));
            } else {
                assert!(moment[i].abs() <= t.mass(i) * pnorm + 1e-12);
            }
        }

        let zero_p = vec![0.0; p.len()];
        assert!(plastic_moment(&zero_p, &t).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seminorms_nullspace_and_bounds() {
        let (g, t) = setup(10, 0.25);
        let n_cells = g.total_cells();

        // rigid displacement, zero plastic strain: both seminorms vanish
        let rigid = State {
            u: affine_field(&g, [[0.0, 0.4], [-0.4, 0.0]], [1.0, -2.0]),
            p: vec![0.0; n_cells * 2],
        };
        let rep = seminorms(&rigid, &t).unwrap();
        assert!(rep.s_semi < 1e-14 * (1.0 + rep.l2_u));
        assert!(rep.t_semi < 1e-14 * (1.0 + rep.l2_u));

        // zero displacement, constant plastic strain
        let coords = dev::coords_2d(0.5, -0.2);
        let mut p = vec![0.0; n_cells * 2];
        for c in p.chunks_exact_mut(2) {
            c.copy_from_slice(&coords);
        }
        let st = State {
            u: vec![0.0; n_cells * 2],
            p,
        };
        let rep = seminorms(&st, &t).unwrap();
        assert!(rep.t_semi * rep.t_semi <= 2.0 * rep.l2_p * rep.l2_p + 1e-12);

        // triangle bounds and the norm identity on random states
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let st = State {
                u: random_u(&g, &mut rng),
                p: random_p(&g, &mut rng),
            };
            let r = seminorms(&st, &t).unwrap();
            let sqrt_n = (t.n as f64).sqrt();
            assert!(r.s_semi <= r.t_semi + sqrt_n * r.l2_p + 1e-12);
            assert!(r.t_semi <= r.s_semi + sqrt_n * r.l2_p + 1e-12);
            let ident = r.l2_u.powi(2) + r.l2_p.powi(2) + r.t_semi.powi(2);
            assert!((r.t_norm.powi(2) - ident).abs() <= 1e-12 * ident.max(1.0));
            // non-rigid random fields have positive seminorm
            assert!(r.s_semi > 0.0);
        }
    }

    #[test]
    fn discrete_jensen_bound_holds_cellwise() {
        let (g, t) = setup(10, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_u(&g, &mut rng);
            let p = random_p(&g, &mut rng);
            let dvg = nonlocal_divergence(&u, &t).unwrap();
            let edvg = nonlocal_divergence_plastic(&u, &p, &t).unwrap();
            for i in 0..g.total_cells() {
                let mut sd = 0.0;
                let mut se = 0.0;
                for pair in t.pairs(i) {
                    let d = pair_strain(&u, &t, i, pair.neighbor).unwrap();
                    let e = pair_strain_plastic(&u, &p, &t, i, pair.neighbor).unwrap();
                    sd += pair.rho * d * d * t.w;
                    se += pair.rho * e * e * t.w;
                }
                let m = t.mass(i);
                assert!(dvg[i] * dvg[i] <= m * sd * (1.0 + 1e-12) + 1e-14);
                assert!(edvg[i] * edvg[i] <= m * se * (1.0 + 1e-12) + 1e-14);
            }
        }
    }

    #[test]
    fn operators_are_linear() {
        let (g, t) = setup(8, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u1 = random_u(&g, &mut rng);
        let u2 = random_u(&g, &mut rng);
        let p1 = random_p(&g, &mut rng);
        let p2 = random_p(&g, &mut rng);
        let (a, b) = (0.37, -1.21);

        let mix_u: Vec<f64> = u1.iter().zip(&u2).map(|(x, y)| a * x + b * y).collect();
        let mix_p: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| a * x + b * y).collect();

        let e1 = nonlocal_divergence_plastic(&u1, &p1, &t).unwrap();
        let e2 = nonlocal_divergence_plastic(&u2, &p2, &t).unwrap();
        let em = nonlocal_divergence_plastic(&mix_u, &mix_p, &t).unwrap();
        for i in 0..g.total_cells() {
            let want = a * e1[i] + b * e2[i];
            assert!((em[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn divergence_localizes_on_smooth_fields() {
        let poly_u = |x: f64, y: f64| [x * x * y + 0.3 * y * y, 0.5 * x * y * y - 0.2 * x * x * x];
        let div_u = |x: f64, y: f64| 3.0 * x * y;

        let mut errs = Vec::new();
        for delta in [0.2, 0.1] {
            let cells = (8.0 / delta).round() as usize; // h = delta / 8
            let g = build_grid(2, &[cells, cells], &[1.0, 1.0], CollarSpec::Frame { width: 1 })
                .unwrap();
            let k = make_kernel(KernelFamily::Constant, delta, 2).unwrap();
            let t = build_neighbor_table(&g, &k, TableMode::Stencil).unwrap();
            let mut u = vec![0.0; g.total_cells() * 2];
            for cell in 0..g.total_cells() {
                let c = g.center(cell);
                let v = poly_u(c[0], c[1]);
                u[cell * 2] = v[0];
                u[cell * 2 + 1] = v[1];
            }
            let dvg = nonlocal_divergence(&u, &t).unwrap();
            let mut max_err = 0.0f64;
            for cell in 0..g.total_cells() {
                if g.boundary_distance(cell) >= delta {
                    let c = g.center(cell);
                    max_err = max_err.max((dvg[cell] - div_u(c[0], c[1])).abs());
                }
            }
            errs.push(max_err);
        }
        assert!(
            errs[1] < errs[0],
            "expected decreasing localization error, got {:?}",
            errs
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (g, t) = setup(6, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_u(&g, &mut rng);
        let p = random_p(&g, &mut rng);
        let (alpha, beta) = (1.7, 0.9);

        let quad = |u: &[f64]| -> f64 {
            let dvg = divergence_field(u, &t);
            let edvg = divergence_plastic_field(u, &p, &t);
            let mut total = 0.0;
            for i in 0..g.total_cells() {
                total += beta * dvg[i] * dvg[i] * t.w;
                for pair in t.pairs(i) {
                    let e = strain_of(u, 2, i, pair.neighbor, pair.dir, pair.dist)
                        - dev::bond_projection(2, &p[i * 2..i * 2 + 2], pair.dir);
                    let r = e - edvg[i] / 2.0;
                    total += alpha * pair.rho * r * r * t.w * t.w;
                }
            }
            total
        };

        let mut grad = vec![0.0; u.len()];
        quad_grad_u(&u, &p, &t, alpha, beta, &mut grad);

        let h = 1e-6;
        for &dof in &[0usize, 5, 17, 40, 63] {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[dof] += h;
            dn[dof] -= h;
            let fd = (quad(&up) - quad(&dn)) / (2.0 * h);
            assert!(
                (grad[dof] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "dof {dof}: analytic {} vs fd {}",
                grad[dof],
                fd
            );
        }
    }

    #[test]
    fn elastic_gradient_fast_path_agrees_with_generic() {
        let (g, t) = setup(6, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let u = random_u(&g, &mut rng);
        let p = vec![0.0; g.total_cells() * 2];
        let (alpha, beta) = (1.7, 0.9);
        let mut a = vec![0.0; u.len()];
        let mut b = vec![0.0; u.len()];
        quad_grad_u(&u, &p, &t, alpha, beta, &mut a);
        quad_grad_u_elastic(&u, &t, alpha, beta, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
        }
    }

    #[test]
    fn sgram_matches_seminorm_and_jacobi_diagonal_is_exact() {
        let (g, t) = setup(6, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = random_u(&g, &mut rng);
        let mut su = vec![0.0; u.len()];
        sgram_apply(&u, &t, &mut su);
        let quad: f64 = u.iter().zip(&su).map(|(a, b)| a * b).sum();
        let rep = seminorms(
            &State {
                u: u.clone(),
                p: vec![0.0; g.total_cells() * 2],
            },
            &t,
        )
        .unwrap();
        assert!((quad - rep.s_semi * rep.s_semi).abs() < 1e-12 * quad.abs().max(1.0));

        // Jacobi diagonal equals the Hessian diagonal of the quadratic part;
        // the gradient at a unit vector is the corresponding Hessian column.
        let (alpha, beta) = (1.1, 0.6);
        let diag = jacobi_diagonal(&t, alpha, beta);
        let p = vec![0.0; g.total_cells() * 2];
        for &dof in &[0usize, 9, 33, 70] {
            let mut unit = vec![0.0; u.len()];
            unit[dof] = 1.0;
            let mut col = vec![0.0; u.len()];
            quad_grad_u(&unit, &p, &t, alpha, beta, &mut col);
            assert!(
                (col[dof] - diag[dof]).abs() <= 1e-10 * diag[dof].abs().max(1.0),
                "dof {dof}: {} vs {}",
                col[dof],
                diag[dof]
            );
        }
    }
}
