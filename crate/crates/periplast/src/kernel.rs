//! Radial interaction kernels with compact support and the per-pair
//! neighbor table used by every nonlocal operator.
//!
//! A kernel is `rho(x) = c * g(|x|)` on `|x| < delta` and zero outside,
//! with `g` one of `1`, `r^2`, `1/r`, and `c` fixed in closed form so the
//! total mass equals the spatial dimension `n`. All three families keep
//! `r -> r^{-2} rho(r)` non-increasing, the admissibility condition the
//! localization limit rests on.

use crate::grid::Grid;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `g(r) = 1`: bounded, discontinuous at the horizon.
    Constant,
    /// `g(r) = r^2`: vanishes at the origin.
    Quadratic,
    /// `g(r) = 1/r`: integrable singularity at the origin.
    Inverse,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Constant => "constant",
            KernelFamily::Quadratic => "quadratic",
            KernelFamily::Inverse => "inverse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(KernelFamily::Constant),
            "quadratic" => Some(KernelFamily::Quadratic),
            "inverse" => Some(KernelFamily::Inverse),
            _ => None,
        }
    }

    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Constant,
        KernelFamily::Quadratic,
        KernelFamily::Inverse,
    ];
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Radial kernel with horizon `delta`, normalized so its integral is `n`.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub family: KernelFamily,
    pub delta: f64,
    pub n: usize,
    /// Normalization constant; public so diagnostics can perturb it.
    pub c: f64,
}

fn sphere_area(n: usize) -> f64 {
    match n {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Exponent k such that the radial mass integrand is `c * r^{k-1}`.
fn mass_exponent(family: KernelFamily, n: usize) -> usize {
    match family {
        KernelFamily::Constant => n,
        KernelFamily::Quadratic => n + 2,
        KernelFamily::Inverse => n - 1,
    }
}

pub fn make_kernel(family: KernelFamily, delta: f64, n: usize) -> Result<Kernel, KernelError> {
    if !(delta > 0.0) {
        return Err(KernelError::BadHorizon(delta));
    }
    if n != 2 && n != 3 {
        return Err(KernelError::BadDimension(n));
    }
    // integral over R^n: area(S^{n-1}) * c * delta^k / k = n
    let k = mass_exponent(family, n) as f64;
    let c = n as f64 * k / (sphere_area(n) * delta.powf(k));
    Ok(Kernel {
        family,
        delta,
        n,
        c,
    })
}

impl Kernel {
    /// Radial profile `rho(r)`, zero outside the horizon.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.delta || r <= 0.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Constant => self.c,
            KernelFamily::Quadratic => self.c * r * r,
            KernelFamily::Inverse => self.c / r,
        }
    }

    /// Closed-form mass of the ball `B(0, r)`, capped at the total mass `n`.
    pub fn ball_mass(&self, r: f64) -> f64 {
        let r = r.min(self.delta);
        let k = mass_exponent(self.family, self.n) as f64;
        sphere_area(self.n) * self.c * r.powf(k) / k
    }

    /// Mass outside `B(0, r)`: the tail that must vanish as the horizon
    /// shrinks. Zero whenever `r >= delta`.
    pub fn tail_mass(&self, r: f64) -> Result<f64, KernelError> {
        if !(r > 0.0) {
            return Err(KernelError::BadRadius(r));
        }
        Ok((self.n as f64 - self.ball_mass(r)).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    /// Raw midpoint kernel values.
    Analytic,
    /// One global rescale so a full-ball stencil carries discrete mass `n`.
    Stencil,
}

impl TableMode {
    pub fn name(self) -> &'static str {
        match self {
            TableMode::Analytic => "analytic",
            TableMode::Stencil => "stencil",
        }
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("horizon {delta} too small for spacing {h}: need delta >= 1.5*h")]
    HorizonTooSmall { delta: f64, h: f64 },
    #[error("kernel dimension {kernel_n} does not match grid dimension {grid_n}")]
    DimensionMismatch { kernel_n: usize, grid_n: usize },
}

/// Per-pair interaction data in CSR layout: for each cell, the neighbors
/// within the horizon together with kernel value, distance, and unit
/// direction. The self-pair is excluded (principal-value convention).
#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub n: usize,
    pub w: f64,
    pub mode: TableMode,
    pub kernel: Kernel,
    offsets: Vec<usize>,
    neighbor: Vec<u32>,
    rho: Vec<f64>,
    dist: Vec<f64>,
    /// Unit directions, `n` components per entry.
    dir: Vec<f64>,
    /// Discrete mass per cell: sum of `rho * w` over its entries.
    mass: Vec<f64>,
}

pub struct PairEntry<'a> {
    pub neighbor: usize,
    pub rho: f64,
    pub dist: f64,
    pub dir: &'a [f64],
}

impl NeighborTable {
    pub fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn degree(&self, cell: usize) -> usize {
        self.offsets[cell + 1] - self.offsets[cell]
    }

    #[inline]
    pub fn mass(&self, cell: usize) -> f64 {
        self.mass[cell]
    }

    #[inline]
    pub fn pairs(&self, cell: usize) -> impl Iterator<Item = PairEntry<'_>> {
        let lo = self.offsets[cell];
        let hi = self.offsets[cell + 1];
        (lo..hi).map(move |e| PairEntry {
            neighbor: self.neighbor[e] as usize,
            rho: self.rho[e],
            dist: self.dist[e],
            dir: &self.dir[e * self.n..(e + 1) * self.n],
        })
    }

    /// Looks up the entry for an explicit ordered pair, if present.
    pub fn find_pair(&self, i: usize, j: usize) -> Option<PairEntry<'_>> {
        self.pairs(i).find(|p| p.neighbor == j)
    }
}

/// Builds the neighbor table by scanning per-axis index windows and
/// filtering on the Euclidean distance. Deterministic per-cell order
/// (neighbors sorted by cell id via the scan order).
pub fn build_neighbor_table(
    grid: &Grid,
    kernel: &Kernel,
    mode: TableMode,
) -> Result<NeighborTable, TableError> {
    if kernel.n != grid.n {
        return Err(TableError::DimensionMismatch {
            kernel_n: kernel.n,
            grid_n: grid.n,
        });
    }
    let hmax = grid.h[..grid.n].iter().cloned().fold(0.0f64, f64::max);
    if kernel.delta < 1.5 * hmax {
        return Err(TableError::HorizonTooSmall {
            delta: kernel.delta,
            h: hmax,
        });
    }

    let n = grid.n;
    let total = grid.total_cells();
    let delta = kernel.delta;
    let mut window = [0isize; 3];
    for a in 0..n {
        window[a] = (delta / grid.h[a]).ceil() as isize;
    }

    // Stencil rescale factor: discrete mass of the full-ball stencil must be
    // exactly n. The reference stencil is position independent on a uniform
    // grid, so one pass over lattice offsets fixes the global factor.
    let scale = match mode {
        TableMode::Analytic => 1.0,
        TableMode::Stencil => {
            let mut mass = 0.0;
            let mut off = [0isize; 3];
            let ranges: Vec<Vec<isize>> = (0..n).map(|a| (-window[a]..=window[a]).collect()).collect();
            fn rec(
                a: usize,
                n: usize,
                ranges: &[Vec<isize>],
                off: &mut [isize; 3],
                grid: &Grid,
                kernel: &Kernel,
                mass: &mut f64,
            ) {
                if a == n {
                    let mut d2 = 0.0;
                    for b in 0..n {
                        let d = off[b] as f64 * grid.h[b];
                        d2 += d * d;
                    }
                    let d = d2.sqrt();
                    if d > 0.0 && d < kernel.delta {
                        *mass += kernel.eval(d) * grid.w;
                    }
                    return;
                }
                for &o in &ranges[a] {
                    off[a] = o;
                    rec(a + 1, n, ranges, off, grid, kernel, mass);
                }
            }
            rec(0, n, &ranges, &mut off, grid, kernel, &mut mass);
            kernel.n as f64 / mass
        }
    };

    let per_cell: Vec<(Vec<u32>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|cell| {
            let idx = grid.cell_coords(cell);
            let ci = grid.center(cell);
            let mut nbr = Vec::new();
            let mut rho = Vec::new();
            let mut dist = Vec::new();
            let mut dir = Vec::new();
            let mut jdx = [0usize; 3];

            // iterate the window in row-major order so entries are sorted
            let lo = |a: usize| (idx[a] as isize - window[a]).max(0) as usize;
            let hi = |a: usize| ((idx[a] as isize + window[a]) as usize).min(grid.cells[a] - 1);
            let z_range = if n == 3 { lo(2)..=hi(2) } else { 0..=0 };
            for z in z_range {
                if n == 3 {
                    jdx[2] = z;
                }
                for y in lo(1)..=hi(1) {
                    jdx[1] = y;
                    for x in lo(0)..=hi(0) {
                        jdx[0] = x;
                        let j = grid.cell_id(&jdx[..n]);
                        if j == cell {
                            continue;
                        }
                        let cj = grid.center(j);
                        let mut d2 = 0.0;
                        for a in 0..n {
                            let d = cj[a] - ci[a];
                            d2 += d * d;
                        }
                        let d = d2.sqrt();
                        if d >= delta {
                            continue;
                        }
                        let r = kernel.eval(d) * scale;
                        nbr.push(j as u32);
                        rho.push(r);
                        dist.push(d);
                        for a in 0..n {
                            dir.push((cj[a] - ci[a]) / d);
                        }
                    }
                }
            }
            (nbr, rho, dist, dir)
        })
        .collect();

    let mut offsets = Vec::with_capacity(total + 1);
    offsets.push(0usize);
    let mut count = 0usize;
    for (nbr, _, _, _) in &per_cell {
        count += nbr.len();
        offsets.push(count);
    }
    let mut neighbor = Vec::with_capacity(count);
    let mut rho = Vec::with_capacity(count);
    let mut dist = Vec::with_capacity(count);
    let mut dir = Vec::with_capacity(count * n);
    let mut mass = Vec::with_capacity(total);
    for (nb, rh, di, dr) in per_cell {
        let m: f64 = rh.iter().map(|r| r * grid.w).sum();
        mass.push(m);
        neighbor.extend_from_slice(&nb);
        rho.extend_from_slice(&rh);
        dist.extend_from_slice(&di);
        dir.extend_from_slice(&dr);
    }

    Ok(NeighborTable {
        n,
        w: grid.w,
        mode,
        kernel: *kernel,
        offsets,
        neighbor,
        rho,
        dist,
        dir,
        mass,
    })
}
