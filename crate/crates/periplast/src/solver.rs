//! One-increment solver: minimize `F(u, P, t) + H(P - P_old)` by
//! alternating an SPD equilibrium solve in `u` with an exactly separable
//! per-cell proximal update in `P`, and certify the result.
//!
//! The plastic block is separable because both the pair strain and the
//! hardening term see `P` only through its value at the first cell of each
//! pair, so one sweep is an exact global minimization over the whole
//! plastic field at fixed `u`.

use crate::dev;
use crate::energy::{self, LoadProgram, MaterialParams};
use crate::grid::Grid;
use crate::kernel::NeighborTable;
use crate::linalg::{self, CgError};
use crate::ops::{self, State};
use crate::prox::{ProxError, ProxOperator};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Relative residual target of the equilibrium CG solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Relative energy-decrease stop for the alternating sweeps.
    pub bcd_tol: f64,
    pub bcd_max_iter: usize,
    /// Certificate residual bound (scaled equilibrium and flow residuals).
    pub cert_tol: f64,
    /// Tolerance of the scalar root solve inside the prox.
    pub prox_root_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cg_tol: 1e-10,
            cg_max_iter: 10_000,
            bcd_tol: 1e-12,
            bcd_max_iter: 200,
            cert_tol: 1e-8,
            prox_root_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let all_pos = self.cg_tol > 0.0
            && self.bcd_tol > 0.0
            && self.cert_tol > 0.0
            && self.prox_root_tol > 0.0;
        if !all_pos || self.cg_max_iter == 0 || self.bcd_max_iter == 0 {
            return Err(SolverError::BadConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver tolerances must be positive and iteration caps at least 1")]
    BadConfig,
    #[error(transparent)]
    Cg(#[from] CgError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Ops(#[from] ops::OpsError),
}

/// Optimality evidence for one increment.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// `||grad_u F||` on free DOFs relative to the system right-hand side.
    pub eq_residual: f64,
    /// Worst scaled distance of the per-cell flow inclusion.
    pub flow_residual: f64,
    /// Alternating sweeps performed.
    pub iterations: usize,
    /// Total CG iterations across sweeps.
    pub cg_iterations: usize,
    /// Energy after each half-step (u-solve, P-sweep), non-increasing.
    pub energy_history: Vec<f64>,
    pub converged: bool,
}

/// Matrix-free assembly of the nonlocal incremental problem on one grid,
/// kernel, and parameter set. The per-cell plastic quadratic operators are
/// geometry-only, so they are eigendecomposed once and reused across all
/// increments.
pub struct NonlocalSystem<'a> {
    pub grid: &'a Grid,
    pub table: &'a NeighborTable,
    pub params: &'a MaterialParams,
    pub load: &'a LoadProgram,
    prox_ops: Vec<ProxOperator>,
    /// Per-cell mean bond coefficients `Lambda_i = sum_j rho_ij w l_ij`.
    bond_mean: Vec<f64>,
    jacobi: Vec<f64>,
    free_len: usize,
}

impl<'a> NonlocalSystem<'a> {
    pub fn new(
        grid: &'a Grid,
        table: &'a NeighborTable,
        params: &'a MaterialParams,
        load: &'a LoadProgram,
    ) -> Result<Self, SolverError> {
        let n = table.n;
        let m = dev::dim(n);
        let w = table.w;
        let cells = table.cells();

        let bond_mean: Vec<f64> = (0..cells)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut acc = vec![0.0f64; m];
                let mut l = [0.0f64; 5];
                for pair in table.pairs(i) {
                    dev::bond_coeffs(n, pair.dir, &mut l);
                    for a in 0..m {
                        acc[a] += pair.rho * w * l[a];
                    }
                }
                acc.into_iter()
            })
            .collect();

        let prox_ops: Vec<ProxOperator> = (0..cells)
            .into_par_iter()
            .map(|i| {
                let mut mat = DMatrix::zeros(m, m);
                let mut l = [0.0f64; 5];
                let mean = &bond_mean[i * m..(i + 1) * m];
                for pair in table.pairs(i) {
                    dev::bond_coeffs(n, pair.dir, &mut l);
                    for a in 0..m {
                        let la = l[a] - mean[a] / n as f64;
                        for b in 0..m {
                            let lb = l[b] - mean[b] / n as f64;
                            mat[(a, b)] += 2.0 * params.alpha * w * w * pair.rho * la * lb;
                        }
                    }
                }
                for a in 0..m {
                    mat[(a, a)] += 2.0 * params.gamma * w;
                }
                ProxOperator::new(&mat)
            })
            .collect::<Result<_, _>>()?;

        Ok(NonlocalSystem {
            grid,
            table,
            params,
            load,
            prox_ops,
            bond_mean,
            jacobi: ops::jacobi_diagonal(table, params.alpha, params.beta),
            free_len: grid.free_count() * n,
        })
    }

    pub fn energy(&self, state: &State, t: f64) -> f64 {
        let b = self.load.eval(t);
        energy::quadratic_energy(&state.u, &state.p, self.table, self.params)
            - energy::load_work(&b, &state.u, self.table.w)
    }

    /// Right-hand side of the equilibrium system on free DOFs:
    /// `b(t) * w` minus the plastic coupling gradient.
    fn equilibrium_rhs(&self, p: &[f64], t: f64) -> Vec<f64> {
        let n = self.table.n;
        let cells = self.table.cells();
        let zero_u = vec![0.0; cells * n];
        let mut coupling = vec![0.0; cells * n];
        ops::quad_grad_u(&zero_u, p, self.table, self.params.alpha, self.params.beta, &mut coupling);
        let b = self.load.eval(t);
        let mut rhs_full = vec![0.0; cells * n];
        for i in 0..cells * n {
            rhs_full[i] = b[i] * self.table.w - coupling[i];
        }
        let mut rhs = vec![0.0; self.free_len];
        self.grid.gather_free(&rhs_full, &mut rhs);
        rhs
    }

    fn apply_operator(&self, x_free: &[f64], out_free: &mut [f64]) {
        let n = self.table.n;
        let cells = self.table.cells();
        let mut full = vec![0.0; cells * n];
        self.grid.scatter_free(x_free, &mut full);
        let mut grad = vec![0.0; cells * n];
        ops::quad_grad_u_elastic(&full, self.table, self.params.alpha, self.params.beta, &mut grad);
        let mut packed = vec![0.0; self.free_len];
        self.grid.gather_free(&grad, &mut packed);
        out_free.copy_from_slice(&packed);
    }

    /// Solves the equilibrium system at fixed plastic strain. Returns the
    /// full (collar-zeroed) displacement and the CG iteration count.
    pub fn solve_equilibrium(
        &self,
        p: &[f64],
        t: f64,
        u_init: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, usize), SolverError> {
        ops::check_p(p, self.table)?;
        ops::check_u(u_init, self.table)?;
        let rhs = self.equilibrium_rhs(p, t);
        let mut jac_free = vec![0.0; self.free_len];
        self.grid.gather_free(&self.jacobi, &mut jac_free);

        let mut x = vec![0.0; self.free_len];
        self.grid.gather_free(u_init, &mut x);
        let result = linalg::solve_cg(
            |v, out| self.apply_operator(v, out),
            |r, out| {
                for i in 0..r.len() {
                    out[i] = r[i] / jac_free[i];
                }
            },
            &rhs,
            &mut x,
            cfg.cg_tol,
            cfg.cg_max_iter,
        )?;

        let n = self.table.n;
        let mut u = vec![0.0; self.table.cells() * n];
        self.grid.scatter_free(&x, &mut u);
        Ok((u, result.iterations))
    }

    /// Scaled equilibrium residual of the current state.
    pub fn equilibrium_residual(&self, u: &[f64], p: &[f64], t: f64) -> f64 {
        let rhs = self.equilibrium_rhs(p, t);
        let mut x = vec![0.0; self.free_len];
        self.grid.gather_free(u, &mut x);
        let mut ax = vec![0.0; self.free_len];
        self.apply_operator(&x, &mut ax);
        let mut res2 = 0.0;
        for i in 0..self.free_len {
            let r = ax[i] - rhs[i];
            res2 += r * r;
        }
        res2.sqrt() / linalg::norm2(&rhs).max(f64::MIN_POSITIVE)
    }

    /// Per-cell smooth gradient of the plastic block at the current state:
    /// `q_i = -2 alpha w^2 sum_j rho (r0_ij - lt_ij . p_i) lt_ij + 2 gamma w p_i`.
    fn plastic_gradients(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let n = self.table.n;
        let nf = n as f64;
        let m = dev::dim(n);
        let w = self.table.w;
        let dvg = ops::divergence_field(u, self.table);

        (0..self.table.cells())
            .into_par_iter()
            .flat_map_iter(|i| {
                let mean = &self.bond_mean[i * m..(i + 1) * m];
                let pi = &p[i * m..(i + 1) * m];
                let mut q = vec![0.0f64; m];
                let mut l = [0.0f64; 5];
                for pair in self.table.pairs(i) {
                    dev::bond_coeffs(n, pair.dir, &mut l);
                    let mut lt = [0.0f64; 5];
                    let mut ltp = 0.0;
                    for a in 0..m {
                        lt[a] = l[a] - mean[a] / nf;
                        ltp += lt[a] * pi[a];
                    }
                    let mut du = 0.0;
                    for a in 0..n {
                        du += (u[pair.neighbor * n + a] - u[i * n + a]) * pair.dir[a];
                    }
                    let r0 = du / pair.dist - dvg[i] / nf;
                    let factor = -2.0 * self.params.alpha * w * w * pair.rho * (r0 - ltp);
                    for a in 0..m {
                        q[a] += factor * lt[a];
                    }
                }
                for a in 0..m {
                    q[a] += 2.0 * self.params.gamma * w * pi[a];
                }
                q.into_iter()
            })
            .collect()
    }

    /// Exact per-cell plastic minimization at fixed displacement.
    fn plastic_sweep(
        &self,
        u: &[f64],
        p_old: &[f64],
        cfg: &SolverConfig,
    ) -> Result<Vec<f64>, SolverError> {
        let m = dev::dim(self.table.n);
        let s = self.params.sigma_y * self.table.w;
        // gradient of the smooth part at p_old is the prox linear term
        let g_all = self.plastic_gradients(u, p_old);
        let new_p: Vec<Vec<f64>> = (0..self.table.cells())
            .into_par_iter()
            .map(|i| {
                let g = DVector::from_column_slice(&g_all[i * m..(i + 1) * m]);
                let q = self.prox_ops[i].step(&g, s, cfg.prox_root_tol)?;
                let mut out = vec![0.0; m];
                for a in 0..m {
                    out[a] = p_old[i * m + a] + q[a];
                }
                Ok(out)
            })
            .collect::<Result<_, ProxError>>()?;
        Ok(new_p.into_iter().flatten().collect())
    }

    /// Worst scaled distance of `q_i + s d|.|(P_i - P_old_i)` from zero.
    pub fn flow_residual(&self, u: &[f64], p: &[f64], p_old: &[f64]) -> f64 {
        let m = dev::dim(self.table.n);
        let s = self.params.sigma_y * self.table.w;
        let q_all = self.plastic_gradients(u, p);
        (0..self.table.cells())
            .into_par_iter()
            .map(|i| {
                let q = &q_all[i * m..(i + 1) * m];
                let qnorm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut dnorm2 = 0.0;
                for a in 0..m {
                    let d = p[i * m + a] - p_old[i * m + a];
                    dnorm2 += d * d;
                }
                let dnorm = dnorm2.sqrt();
                let res = if dnorm <= 1e-300 {
                    (qnorm - s).max(0.0)
                } else {
                    let mut r2 = 0.0;
                    for a in 0..m {
                        let v = q[a] + s * (p[i * m + a] - p_old[i * m + a]) / dnorm;
                        r2 += v * v;
                    }
                    r2.sqrt()
                };
                res / (s + qnorm).max(f64::MIN_POSITIVE)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Solves one incremental problem `min F(., t) + H(. - P_old)`.
    pub fn solve_increment(
        &self,
        p_old: &[f64],
        t: f64,
        warm: Option<&State>,
        cfg: &SolverConfig,
    ) -> Result<(State, Certificate), SolverError> {
        ops::check_p(p_old, self.table)?;
        if let Some(s) = warm {
            ops::check_u(&s.u, self.table)?;
            ops::check_p(&s.p, self.table)?;
        }
        solve_increment_bcd(self, p_old, t, warm, cfg)
    }
}

impl IncrementBlocks for NonlocalSystem<'_> {
    fn grid(&self) -> &Grid {
        self.grid
    }

    fn energy_at(&self, state: &State, t: f64) -> f64 {
        self.energy(state, t)
    }

    fn solve_u(
        &self,
        p: &[f64],
        t: f64,
        u_init: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, usize), SolverError> {
        self.solve_equilibrium(p, t, u_init, cfg)
    }

    fn sweep_p(&self, u: &[f64], p_old: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>, SolverError> {
        self.plastic_sweep(u, p_old, cfg)
    }

    fn eq_residual_at(&self, u: &[f64], p: &[f64], t: f64) -> f64 {
        self.equilibrium_residual(u, p, t)
    }

    fn flow_residual_at(&self, u: &[f64], p: &[f64], p_old: &[f64]) -> f64 {
        self.flow_residual(u, p, p_old)
    }
}

/// The two exact block minimizations an incremental model must provide.
/// The nonlocal and the local reference model share the alternating loop
/// below, so the only difference between them is the energy.
pub(crate) trait IncrementBlocks {
    fn grid(&self) -> &Grid;
    fn energy_at(&self, state: &State, t: f64) -> f64;
    fn solve_u(
        &self,
        p: &[f64],
        t: f64,
        u_init: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, usize), SolverError>;
    fn sweep_p(&self, u: &[f64], p_old: &[f64], cfg: &SolverConfig)
        -> Result<Vec<f64>, SolverError>;
    fn eq_residual_at(&self, u: &[f64], p: &[f64], t: f64) -> f64;
    fn flow_residual_at(&self, u: &[f64], p: &[f64], p_old: &[f64]) -> f64;
}

/// Alternating minimization with certificate-driven exit: stops when both
/// scaled residuals pass `cert_tol`, or when the energy decrease stalls
/// below `bcd_tol` (then the certificate flags failure), or at the sweep cap.
pub(crate) fn solve_increment_bcd<B: IncrementBlocks>(
    blocks: &B,
    p_old: &[f64],
    t: f64,
    warm: Option<&State>,
    cfg: &SolverConfig,
) -> Result<(State, Certificate), SolverError> {
    cfg.validate()?;
    let grid = blocks.grid();
    let n = grid.n;
    let cells = grid.total_cells();

    let mut state = match warm {
        Some(s) => {
            let mut st = s.clone();
            grid.constrain_in_place(&mut st.u);
            st
        }
        None => State {
            u: vec![0.0; cells * n],
            p: p_old.to_vec(),
        },
    };

    let mut history = vec![blocks.energy_at(&state, t)];
    let mut cg_total = 0;
    let mut eq_res = f64::INFINITY;
    let mut flow_res = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.bcd_max_iter {
        sweeps += 1;
        let (u, iters) = blocks.solve_u(&state.p, t, &state.u, cfg)?;
        cg_total += iters;
        state.u = u;
        history.push(blocks.energy_at(&state, t));

        state.p = blocks.sweep_p(&state.u, p_old, cfg)?;
        let e_now = blocks.energy_at(&state, t);
        history.push(e_now);

        eq_res = blocks.eq_residual_at(&state.u, &state.p, t);
        flow_res = blocks.flow_residual_at(&state.u, &state.p, p_old);
        if eq_res <= cfg.cert_tol && flow_res <= cfg.cert_tol {
            converged = true;
            break;
        }

        let len = history.len();
        let prev = history[len - 3];
        if (prev - e_now).abs() <= cfg.bcd_tol * e_now.abs().max(1.0) {
            break;
        }
    }

    Ok((
        state,
        Certificate {
            eq_residual: eq_res,
            flow_residual: flow_res,
            iterations: sweeps,
            cg_iterations: cg_total,
            energy_history: history,
            converged,
        },
    ))
}
