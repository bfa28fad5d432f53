//! Classical local elastoplasticity on the same grid, the reference the
//! nonlocal model must approach as the horizon shrinks.
//!
//! Displacement gradients come from central finite differences with
//! one-sided stencils on the outermost cell layer. Everything else reuses
//! the incremental machinery: the same alternating solver, the hardening
//! prox collapsing to closed-form shrinkage, the same certificates.

use crate::dev;
use crate::energy::{self, EnergyError, LoadProgram, MaterialParams};
use crate::grid::Grid;
use crate::linalg::{self, KahanSum};
use crate::ops::State;
use crate::prox::shrinkage_step;
use crate::solver::{
    solve_increment_bcd, Certificate, IncrementBlocks, SolverConfig, SolverError,
};

/// Gradient tensor per cell, row-major `n x n` with `G[c][a] = d u_c / d x_a`.
pub fn gradient_tensor(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let cells = grid.total_cells();
    let mut g = vec![0.0; cells * n * n];
    let mut idx_buf;
    for cell in 0..cells {
        idx_buf = grid.cell_coords(cell);
        for axis in 0..n {
            let i = idx_buf[axis];
            let last = grid.cells[axis] - 1;
            let h = grid.h[axis];
            let mut lo = idx_buf;
            let mut hi = idx_buf;
            let scale;
            if i == 0 {
                hi[axis] = 1;
                scale = 1.0 / h;
            } else if i == last {
                lo[axis] = last - 1;
                scale = 1.0 / h;
            } else {
                lo[axis] = i - 1;
                hi[axis] = i + 1;
                scale = 0.5 / h;
            }
            let jlo = grid.cell_id(&lo[..n]);
            let jhi = grid.cell_id(&hi[..n]);
            for c in 0..n {
                g[cell * n * n + c * n + axis] = scale * (u[jhi * n + c] - u[jlo * n + c]);
            }
        }
    }
    g
}

/// Adjoint of [`gradient_tensor`]: scatters per-cell tensor weights back
/// onto displacement DOFs, so `<G u, X> = <u, adjoint(X)>` exactly.
pub fn gradient_tensor_adjoint(grid: &Grid, x: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let cells = grid.total_cells();
    let mut out = vec![0.0; cells * n];
    for cell in 0..cells {
        let idx = grid.cell_coords(cell);
        for axis in 0..n {
            let i = idx[axis];
            let last = grid.cells[axis] - 1;
            let h = grid.h[axis];
            let mut lo = idx;
            let mut hi = idx;
            let scale;
            if i == 0 {
                hi[axis] = 1;
                scale = 1.0 / h;
            } else if i == last {
                lo[axis] = last - 1;
                scale = 1.0 / h;
            } else {
                lo[axis] = i - 1;
                hi[axis] = i + 1;
                scale = 0.5 / h;
            }
            let jlo = grid.cell_id(&lo[..n]);
            let jhi = grid.cell_id(&hi[..n]);
            for c in 0..n {
                let wgt = x[cell * n * n + c * n + axis];
                out[jhi * n + c] += scale * wgt;
                out[jlo * n + c] -= scale * wgt;
            }
        }
    }
    out
}

/// Symmetric gradient and divergence fields.
pub fn local_gradients(u: &[f64], grid: &Grid) -> Result<(Vec<f64>, Vec<f64>), EnergyError> {
    if u.len() != grid.total_cells() * grid.n {
        return Err(EnergyError::Ops(crate::ops::OpsError::DisplacementSize {
            expected: grid.total_cells() * grid.n,
            got: u.len(),
        }));
    }
    let n = grid.n;
    let g = gradient_tensor(grid, u);
    let cells = grid.total_cells();
    let mut sym = vec![0.0; cells * n * n];
    let mut div = vec![0.0; cells];
    for cell in 0..cells {
        let gc = &g[cell * n * n..(cell + 1) * n * n];
        for i in 0..n {
            for j in 0..n {
                sym[cell * n * n + i * n + j] = 0.5 * (gc[i * n + j] + gc[j * n + i]);
            }
            div[cell] += gc[i * n + i];
        }
    }
    Ok((sym, div))
}

/// Local elastoplastic energy evaluated in both displayed forms: the
/// Lamé form `(lambda/2) div^2 + mu |sym grad u - P|^2 + ...` and the
/// sphere-average form in the nonlocal moduli. The two must agree to
/// `1e-10` relative; their mean is returned.
pub fn local_energy_f0(
    grid: &Grid,
    state: &State,
    t: f64,
    params: &MaterialParams,
    load: &LoadProgram,
) -> Result<f64, EnergyError> {
    if !grid.satisfies_constraint(&state.u) {
        return Err(EnergyError::InadmissibleState);
    }
    let lame = lame_form_energy(grid, &state.u, &state.p, params);
    let sphere = sphere_form_energy(grid, &state.u, &state.p, params);
    let scale = lame.abs().max(sphere.abs()).max(1.0);
    if (lame - sphere).abs() > 1e-10 * scale {
        return Err(EnergyError::FormMismatch {
            lame,
            sphere,
        });
    }
    let b = load.eval(t);
    let work = energy::load_work(&b, &state.u, grid.w);
    Ok(0.5 * (lame + sphere) - work)
}

/// Quadratic part in the Lamé form (no load term).
pub(crate) fn lame_form_energy(grid: &Grid, u: &[f64], p: &[f64], params: &MaterialParams) -> f64 {
    let n = grid.n;
    let m = dev::dim(n);
    let g = gradient_tensor(grid, u);
    let mut acc = KahanSum::new();
    for cell in 0..grid.total_cells() {
        let gc = &g[cell * n * n..(cell + 1) * n * n];
        let pm = dev::to_matrix(n, &p[cell * m..(cell + 1) * m]);
        let mut d = 0.0;
        for i in 0..n {
            d += gc[i * n + i];
        }
        let mut dev2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let s = 0.5 * (gc[i * n + j] + gc[j * n + i]) - pm[i * n + j];
                dev2 += s * s;
            }
        }
        let mut p2 = 0.0;
        for a in 0..m {
            p2 += p[cell * m + a] * p[cell * m + a];
        }
        acc.add(grid.w * (0.5 * params.lambda * d * d + params.mu * dev2 + params.gamma * p2));
    }
    acc.value()
}

/// Quadratic part in the sphere-average form (no load term):
/// `beta div^2 + alpha n <((grad u - P) z . z - div/n)^2>_sphere + gamma |P|^2`.
pub(crate) fn sphere_form_energy(grid: &Grid, u: &[f64], p: &[f64], params: &MaterialParams) -> f64 {
    let n = grid.n;
    let m = dev::dim(n);
    let g = gradient_tensor(grid, u);
    let mut acc = KahanSum::new();
    for cell in 0..grid.total_cells() {
        let gc = &g[cell * n * n..(cell + 1) * n * n];
        let pm = dev::to_matrix(n, &p[cell * m..(cell + 1) * m]);
        let mut d = 0.0;
        let mut a_mat = vec![0.0; n * n];
        for i in 0..n {
            d += gc[i * n + i];
            for j in 0..n {
                a_mat[i * n + j] = gc[i * n + j] - pm[i * n + j];
            }
        }
        let pair = energy::sphere_average_quadratic(n, &a_mat, d);
        let mut p2 = 0.0;
        for a in 0..m {
            p2 += p[cell * m + a] * p[cell * m + a];
        }
        acc.add(grid.w
            * (params.beta * d * d + params.alpha * n as f64 * pair + params.gamma * p2));
    }
    acc.value()
}

/// Full stress field `Sigma = lambda tr(sym grad u - P) I + 2 mu (sym grad u - P)`,
/// row-major `n x n` per cell.
pub fn stress_field(grid: &Grid, u: &[f64], p: &[f64], params: &MaterialParams) -> Vec<f64> {
    let n = grid.n;
    let m = dev::dim(n);
    let g = gradient_tensor(grid, u);
    let cells = grid.total_cells();
    let mut sigma = vec![0.0; cells * n * n];
    for cell in 0..cells {
        let gc = &g[cell * n * n..(cell + 1) * n * n];
        let pm = dev::to_matrix(n, &p[cell * m..(cell + 1) * m]);
        let mut tr = 0.0;
        for i in 0..n {
            tr += gc[i * n + i]; // tr P = 0
        }
        for i in 0..n {
            for j in 0..n {
                let e = 0.5 * (gc[i * n + j] + gc[j * n + i]) - pm[i * n + j];
                sigma[cell * n * n + i * n + j] =
                    2.0 * params.mu * e + if i == j { params.lambda * tr } else { 0.0 };
            }
        }
    }
    sigma
}

/// The local incremental model: same interface as the nonlocal system.
pub struct LocalSystem<'a> {
    pub grid: &'a Grid,
    pub params: &'a MaterialParams,
    pub load: &'a LoadProgram,
    jacobi: Vec<f64>,
    free_len: usize,
}

impl<'a> LocalSystem<'a> {
    pub fn new(grid: &'a Grid, params: &'a MaterialParams, load: &'a LoadProgram) -> Self {
        let n = grid.n;
        // Approximate Jacobi diagonal from the interior stencil pattern:
        // sum over axes of the second-difference weight of each block.
        let mut jacobi = vec![0.0; grid.total_cells() * n];
        for cell in 0..grid.total_cells() {
            for c in 0..n {
                let mut d = 0.0;
                for a in 0..n {
                    let k_cc = params.lambda * if a == c { 1.0 } else { 0.0 }
                        + params.mu * (1.0 + if a == c { 1.0 } else { 0.0 });
                    d += grid.w * k_cc / (2.0 * grid.h[a] * grid.h[a]);
                }
                jacobi[cell * n + c] = 2.0 * d;
            }
        }
        LocalSystem {
            grid,
            params,
            load,
            jacobi,
            free_len: grid.free_count() * n,
        }
    }

    pub fn energy(&self, state: &State, t: f64) -> f64 {
        let b = self.load.eval(t);
        lame_form_energy(self.grid, &state.u, &state.p, self.params)
            - energy::load_work(&b, &state.u, self.grid.w)
    }

    /// Gradient of the quadratic part with respect to `u`:
    /// adjoint of the FD gradient applied to the per-cell stress
    /// `w (lambda tr(G) I + 2 mu (sym G - P))`.
    fn quad_grad_u(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let m = dev::dim(n);
        let g = gradient_tensor(self.grid, u);
        let cells = self.grid.total_cells();
        let mut weights = vec![0.0; cells * n * n];
        for cell in 0..cells {
            let gc = &g[cell * n * n..(cell + 1) * n * n];
            let pm = dev::to_matrix(n, &p[cell * m..(cell + 1) * m]);
            let mut tr = 0.0;
            for i in 0..n {
                tr += gc[i * n + i];
            }
            for i in 0..n {
                for j in 0..n {
                    let sym = 0.5 * (gc[i * n + j] + gc[j * n + i]) - pm[i * n + j];
                    weights[cell * n * n + i * n + j] = self.grid.w
                        * (2.0 * self.params.mu * sym
                            + if i == j { self.params.lambda * tr } else { 0.0 });
                }
            }
        }
        gradient_tensor_adjoint(self.grid, &weights)
    }

    fn equilibrium_rhs(&self, p: &[f64], t: f64) -> Vec<f64> {
        let n = self.grid.n;
        let cells = self.grid.total_cells();
        let zero_u = vec![0.0; cells * n];
        let coupling = self.quad_grad_u(&zero_u, p);
        let b = self.load.eval(t);
        let mut rhs_full = vec![0.0; cells * n];
        for i in 0..cells * n {
            rhs_full[i] = b[i] * self.grid.w - coupling[i];
        }
        let mut rhs = vec![0.0; self.free_len];
        self.grid.gather_free(&rhs_full, &mut rhs);
        rhs
    }

    fn apply_operator(&self, x_free: &[f64], out_free: &mut [f64]) {
        let n = self.grid.n;
        let cells = self.grid.total_cells();
        let mut full = vec![0.0; cells * n];
        self.grid.scatter_free(x_free, &mut full);
        let zero_p = vec![0.0; cells * dev::dim(n)];
        let grad = self.quad_grad_u(&full, &zero_p);
        let mut packed = vec![0.0; self.free_len];
        self.grid.gather_free(&grad, &mut packed);
        out_free.copy_from_slice(&packed);
    }

    pub fn solve_equilibrium(
        &self,
        p: &[f64],
        t: f64,
        u_init: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, usize), SolverError> {
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
        let n = self.grid.n;
        let mut u = vec![0.0; self.grid.total_cells() * n];
        self.grid.scatter_free(&x, &mut u);
        Ok((u, result.iterations))
    }

    /// Deviatoric coordinates of the symmetric displacement gradient.
    fn strain_dev_coords(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let g = gradient_tensor(self.grid, u);
        let cells = self.grid.total_cells();
        let mut eta = Vec::with_capacity(cells * dev::dim(n));
        for cell in 0..cells {
            let gc = &g[cell * n * n..(cell + 1) * n * n];
            let mut sym = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    sym[i * n + j] = 0.5 * (gc[i * n + j] + gc[j * n + i]);
                }
            }
            eta.extend_from_slice(&dev::from_symmetric(n, &sym));
        }
        eta
    }

    /// Smooth plastic gradient `q_i = -2 mu w (eta_i - p_i) + 2 gamma w p_i`.
    fn plastic_gradients(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let eta = self.strain_dev_coords(u);
        let w = self.grid.w;
        eta.iter()
            .zip(p)
            .map(|(e, pi)| -2.0 * self.params.mu * w * (e - pi) + 2.0 * self.params.gamma * w * pi)
            .collect()
    }

    fn plastic_sweep(&self, u: &[f64], p_old: &[f64]) -> Vec<f64> {
        let m = dev::dim(self.grid.n);
        let w = self.grid.w;
        let s = self.params.sigma_y * w;
        let m_scalar = (2.0 * self.params.mu + 2.0 * self.params.gamma) * w;
        let g_all = self.plastic_gradients(u, p_old);
        let mut out = vec![0.0; p_old.len()];
        let mut q = vec![0.0; m];
        for i in 0..self.grid.total_cells() {
            shrinkage_step(&g_all[i * m..(i + 1) * m], s, m_scalar, &mut q);
            for a in 0..m {
                out[i * m + a] = p_old[i * m + a] + q[a];
            }
        }
        out
    }

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

    pub fn flow_residual(&self, u: &[f64], p: &[f64], p_old: &[f64]) -> f64 {
        let m = dev::dim(self.grid.n);
        let s = self.params.sigma_y * self.grid.w;
        let q_all = self.plastic_gradients(u, p);
        let mut worst = 0.0f64;
        for i in 0..self.grid.total_cells() {
            let q = &q_all[i * m..(i + 1) * m];
            let qnorm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut d2 = 0.0;
            for a in 0..m {
                let d = p[i * m + a] - p_old[i * m + a];
                d2 += d * d;
            }
            let dnorm = d2.sqrt();
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
            worst = worst.max(res / (s + qnorm).max(f64::MIN_POSITIVE));
        }
        worst
    }

    pub fn solve_increment(
        &self,
        p_old: &[f64],
        t: f64,
        warm: Option<&State>,
        cfg: &SolverConfig,
    ) -> Result<(State, Certificate), SolverError> {
        solve_increment_bcd(self, p_old, t, warm, cfg)
    }
}

impl IncrementBlocks for LocalSystem<'_> {
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

    fn sweep_p(&self, u: &[f64], p_old: &[f64], _cfg: &SolverConfig) -> Result<Vec<f64>, SolverError> {
        Ok(self.plastic_sweep(u, p_old))
    }

    fn eq_residual_at(&self, u: &[f64], p: &[f64], t: f64) -> f64 {
        self.equilibrium_residual(u, p, t)
    }

    fn flow_residual_at(&self, u: &[f64], p: &[f64], p_old: &[f64]) -> f64 {
        self.flow_residual(u, p, p_old)
    }
}
