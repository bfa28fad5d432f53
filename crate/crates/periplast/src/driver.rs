//! Quasistatic march: solve the incremental problem along a uniform time
//! partition, account for stored energy, dissipation and external work,
//! and audit the energetic-solution structure.

use crate::dev;
use crate::energy::{dissipation_h, LoadProgram};
use crate::grid::Grid;
use crate::linalg::KahanSum;
use crate::local::LocalSystem;
use crate::ops::State;
use crate::solver::{Certificate, NonlocalSystem, SolverConfig, SolverError};
use rand::Rng;

/// A time-incremental model the driver can march: the nonlocal system or
/// its local reference.
pub trait IncrementalModel {
    fn grid(&self) -> &Grid;
    fn load(&self) -> &LoadProgram;
    fn sigma_y(&self) -> f64;
    fn energy(&self, state: &State, t: f64) -> f64;
    fn solve_increment(
        &self,
        p_old: &[f64],
        t: f64,
        warm: Option<&State>,
        cfg: &SolverConfig,
    ) -> Result<(State, Certificate), SolverError>;
}

impl IncrementalModel for NonlocalSystem<'_> {
    fn grid(&self) -> &Grid {
        self.grid
    }
    fn load(&self) -> &LoadProgram {
        self.load
    }
    fn sigma_y(&self) -> f64 {
        self.params.sigma_y
    }
    fn energy(&self, state: &State, t: f64) -> f64 {
        NonlocalSystem::energy(self, state, t)
    }
    fn solve_increment(
        &self,
        p_old: &[f64],
        t: f64,
        warm: Option<&State>,
        cfg: &SolverConfig,
    ) -> Result<(State, Certificate), SolverError> {
        NonlocalSystem::solve_increment(self, p_old, t, warm, cfg)
    }
}

impl IncrementalModel for LocalSystem<'_> {
    fn grid(&self) -> &Grid {
        self.grid
    }
    fn load(&self) -> &LoadProgram {
        self.load
    }
    fn sigma_y(&self) -> f64 {
        self.params.sigma_y
    }
    fn energy(&self, state: &State, t: f64) -> f64 {
        LocalSystem::energy(self, state, t)
    }
    fn solve_increment(
        &self,
        p_old: &[f64],
        t: f64,
        warm: Option<&State>,
        cfg: &SolverConfig,
    ) -> Result<(State, Certificate), SolverError> {
        LocalSystem::solve_increment(self, p_old, t, warm, cfg)
    }
}

/// States and certificates along a uniform time partition. `flagged` is set
/// when some increment failed its certificate; the trajectory then holds
/// the partial march up to and including the failed step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub certificates: Vec<Certificate>,
    pub flagged: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Marches the incremental solver over `t_i = i T / N`. The initial state
/// is itself produced by an incremental solve at `t = 0` from `initial_p`,
/// which makes it globally stable by construction; later steps warm-start
/// from their predecessor.
pub fn run_quasistatic<M: IncrementalModel>(
    model: &M,
    initial_p: &[f64],
    n_steps: usize,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    assert!(n_steps >= 1, "need at least one step");
    let t_end = model.load().end_time();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut certificates = Vec::with_capacity(n_steps + 1);
    let mut flagged = false;

    let mut p_old = initial_p.to_vec();
    let mut warm: Option<State> = None;
    for i in 0..=n_steps {
        let t = t_end * i as f64 / n_steps as f64;
        let (state, cert) = model.solve_increment(&p_old, t, warm.as_ref(), cfg)?;
        let ok = cert.converged;
        times.push(t);
        p_old = state.p.clone();
        warm = Some(state.clone());
        states.push(state);
        certificates.push(cert);
        if !ok {
            flagged = true;
            break;
        }
    }

    Ok(Trajectory {
        times,
        states,
        certificates,
        flagged,
    })
}

/// Per-knot energy bookkeeping of a finished trajectory.
///
/// `work[m]` is the discrete external-work sum
/// `-(sum_{i<=m} (b(t_i) - b(t_{i-1})) . u_{i-1} w)`, the convention under
/// which the one-sided upper estimate
/// `F_m + Diss_m <= F_0 + work_m` is exact for incremental minimizers.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub f: Vec<f64>,
    pub h_step: Vec<f64>,
    pub diss: Vec<f64>,
    pub work: Vec<f64>,
    /// `F_0 + work_m - F_m - Diss_m`, nonnegative up to solver tolerance.
    pub upper_gap: Vec<f64>,
    /// `|F_m + Diss_m - F_0 - work_m|`; closes only with partition refinement.
    pub balance_residual: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("trajectory is flagged: some increment failed its certificate")]
    FlaggedTrajectory,
}

pub fn energy_ledger<M: IncrementalModel>(
    model: &M,
    traj: &Trajectory,
) -> Result<EnergyLedger, LedgerError> {
    if traj.flagged {
        return Err(LedgerError::FlaggedTrajectory);
    }
    let grid = model.grid();
    let m = dev::dim(grid.n);
    let w = grid.w;
    let sigma_y = model.sigma_y();
    let count = traj.states.len();

    let mut f = Vec::with_capacity(count);
    for (state, &t) in traj.states.iter().zip(&traj.times) {
        f.push(model.energy(state, t));
    }

    let mut h_step = vec![0.0; count];
    let mut diss = vec![0.0; count];
    let mut work = vec![0.0; count];
    let mut upper_gap = vec![0.0; count];
    let mut balance_residual = vec![0.0; count];

    let mut diss_acc = KahanSum::new();
    let mut work_acc = KahanSum::new();
    let mut b_prev = model.load().eval(traj.times[0]);
    for i in 1..count {
        h_step[i] = dissipation_h(&traj.states[i].p, &traj.states[i - 1].p, sigma_y, w, m);
        diss_acc.add(h_step[i]);
        diss[i] = diss_acc.value();

        let b_now = model.load().eval(traj.times[i]);
        let u_prev = &traj.states[i - 1].u;
        let mut step_work = KahanSum::new();
        for (k, up) in u_prev.iter().enumerate() {
            step_work.add((b_now[k] - b_prev[k]) * up * w);
        }
        work_acc.add(-step_work.value());
        work[i] = work_acc.value();
        b_prev = b_now;

        upper_gap[i] = f[0] + work[i] - f[i] - diss[i];
        balance_residual[i] = upper_gap[i].abs();
    }

    Ok(EnergyLedger {
        f,
        h_step,
        diss,
        work,
        upper_gap,
        balance_residual,
    })
}

/// Outcome of sampling the global-stability inequality at one state.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub competitors: usize,
    /// Smallest of `F(competitor) + H(competitor - state) - F(state)`;
    /// nonnegative up to solver tolerance when the state is stable.
    pub worst_margin: f64,
    pub scale: f64,
}

/// Draws competitor states (smooth admissible bumps added to the current
/// state in both fields) and checks the stability inequality against each.
pub fn stability_spot_check<M: IncrementalModel>(
    model: &M,
    state: &State,
    t: f64,
    n_competitors: usize,
    rng: &mut impl Rng,
) -> StabilityReport {
    let grid = model.grid();
    let n = grid.n;
    let m = dev::dim(n);
    let cells = grid.total_cells();
    let f_state = model.energy(state, t);
    let scale = f_state.abs().max(1.0);
    let mut worst = f64::INFINITY;

    for _ in 0..n_competitors {
        // smooth bump: product of sines with random frequency and phase
        let mut freq = [0.0f64; 3];
        let mut phase = [0.0f64; 3];
        for a in 0..n {
            freq[a] = rng.gen_range(1..=4) as f64 * std::f64::consts::PI;
            phase[a] = rng.gen_range(0.0..std::f64::consts::PI);
        }
        let amp_u: f64 = rng.gen_range(-0.3..0.3);
        let amp_p: f64 = rng.gen_range(-0.3..0.3);

        let mut cand = state.clone();
        for cell in 0..cells {
            let c = grid.center(cell);
            let mut bump = 1.0;
            for a in 0..n {
                bump *= (freq[a] * c[a] / grid.extent[a] + phase[a]).sin();
            }
            for a in 0..n {
                cand.u[cell * n + a] += amp_u * bump;
            }
            for a in 0..m {
                cand.p[cell * m + a] += amp_p * bump;
            }
        }
        grid.constrain_in_place(&mut cand.u);

        let margin = model.energy(&cand, t)
            + dissipation_h(&cand.p, &state.p, model.sigma_y(), grid.w, m)
            - f_state;
        worst = worst.min(margin);
    }

    StabilityReport {
        competitors: n_competitors,
        worst_margin: worst,
        scale,
    }
}
