//! Uniform cell discretization of the reference configuration with a
//! constrained collar and free degree-of-freedom indexing.
//!
//! Space is discretized by collocation at cell centers with midpoint
//! quadrature (weight = cell volume). The collar is the subregion where
//! displacements are pinned to zero; it is realized as a frame of whole
//! cells or a one-sided strip so the free region stays an axis-aligned box.

use thiserror::Error;

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Placement of the zero-displacement collar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollarSpec {
    /// Frame of `width` whole cells along every face.
    Frame { width: usize },
    /// Strip of `width` whole cells at the minimum face of `axis`.
    Side { axis: usize, width: usize },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("spatial dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("need at least 4 cells per axis, got {0} on axis {1}")]
    TooFewCells(usize, usize),
    #[error("extent must be positive on every axis, got {0} on axis {1}")]
    BadExtent(f64, usize),
    #[error("collar width must be at least 1 cell")]
    EmptyCollar,
    #[error("collar axis {0} out of range for dimension {1}")]
    BadCollarAxis(usize, usize),
    #[error("collar covers every cell; no free degrees of freedom remain")]
    CollarCoversAll,
    #[error("free region must contain a {0}^n cell block")]
    FreeRegionTooThin(usize),
    #[error("field has {got} entries, expected {expected}")]
    FieldSizeMismatch { expected: usize, got: usize },
}

/// Uniform grid over a box domain with collar bookkeeping.
#[derive(Debug, Clone)]
pub struct Grid {
    pub n: usize,
    pub cells: [usize; MAX_DIM],
    pub extent: [f64; MAX_DIM],
    pub h: [f64; MAX_DIM],
    /// Cell volume, the midpoint quadrature weight.
    pub w: f64,
    pub collar: CollarSpec,
    collar_mask: Vec<bool>,
    /// Contiguous DOF index for unconstrained cells, `None` on the collar.
    free_index: Vec<Option<u32>>,
    free_cells: Vec<u32>,
    centers: Vec<f64>,
}

impl Grid {
    pub fn total_cells(&self) -> usize {
        self.cells[..self.n].iter().product()
    }

    pub fn free_count(&self) -> usize {
        self.free_cells.len()
    }

    pub fn collar_count(&self) -> usize {
        self.total_cells() - self.free_count()
    }

    #[inline]
    pub fn is_collar(&self, cell: usize) -> bool {
        self.collar_mask[cell]
    }

    #[inline]
    pub fn free_index(&self, cell: usize) -> Option<u32> {
        self.free_index[cell]
    }

    pub fn free_cells(&self) -> &[u32] {
        &self.free_cells
    }

    /// Cell center coordinates, `n` entries.
    #[inline]
    pub fn center(&self, cell: usize) -> &[f64] {
        &self.centers[cell * self.n..(cell + 1) * self.n]
    }

    /// Multi-index of a cell in row-major order (axis 0 fastest).
    #[inline]
    pub fn cell_coords(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut rem = cell;
        let mut idx = [0usize; MAX_DIM];
        for a in 0..self.n {
            idx[a] = rem % self.cells[a];
            rem /= self.cells[a];
        }
        idx
    }

    #[inline]
    pub fn cell_id(&self, idx: &[usize]) -> usize {
        let mut id = 0usize;
        for a in (0..self.n).rev() {
            id = id * self.cells[a] + idx[a];
        }
        id
    }

    /// Distance from a cell center to the domain boundary.
    pub fn boundary_distance(&self, cell: usize) -> f64 {
        let c = self.center(cell);
        let mut d = f64::INFINITY;
        for a in 0..self.n {
            d = d.min(c[a]).min(self.extent[a] - c[a]);
        }
        d
    }

    /// Zeroes the collar components of a displacement field, in place.
    pub fn constrain_in_place(&self, u: &mut [f64]) {
        let n = self.n;
        for (cell, &is_collar) in self.collar_mask.iter().enumerate() {
            if is_collar {
                for c in 0..n {
                    u[cell * n + c] = 0.0;
                }
            }
        }
    }

    /// Projection of a displacement field onto the constrained space:
    /// equal to the input on free cells, zero on the collar. Idempotent.
    pub fn apply_constraint(&self, u: &[f64]) -> Result<Vec<f64>, GridError> {
        self.check_vector_field(u)?;
        let mut out = u.to_vec();
        self.constrain_in_place(&mut out);
        Ok(out)
    }

    pub fn check_vector_field(&self, u: &[f64]) -> Result<(), GridError> {
        if u.len() != self.total_cells() * self.n {
            return Err(GridError::FieldSizeMismatch {
                expected: self.total_cells() * self.n,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// True when every component on the collar vanishes.
    pub fn satisfies_constraint(&self, u: &[f64]) -> bool {
        let n = self.n;
        self.collar_mask
            .iter()
            .enumerate()
            .all(|(cell, &c)| !c || (0..n).all(|k| u[cell * n + k] == 0.0))
    }

    /// Gathers free-cell components of a full field into a packed vector.
    pub fn gather_free(&self, full: &[f64], packed: &mut [f64]) {
        let n = self.n;
        for (k, &cell) in self.free_cells.iter().enumerate() {
            let cell = cell as usize;
            packed[k * n..k * n + n].copy_from_slice(&full[cell * n..cell * n + n]);
        }
    }

    /// Scatters a packed free vector back into a full field (collar zeroed).
    pub fn scatter_free(&self, packed: &[f64], full: &mut [f64]) {
        let n = self.n;
        full.fill(0.0);
        for (k, &cell) in self.free_cells.iter().enumerate() {
            let cell = cell as usize;
            full[cell * n..cell * n + n].copy_from_slice(&packed[k * n..k * n + n]);
        }
    }
}

/// Builds the grid, marks the collar, and indexes free cells.
pub fn build_grid(
    n: usize,
    cells: &[usize],
    extent: &[f64],
    collar: CollarSpec,
) -> Result<Grid, GridError> {
    if n != 2 && n != 3 {
        return Err(GridError::BadDimension(n));
    }
    assert_eq!(cells.len(), n, "cells spec must have {n} entries");
    assert_eq!(extent.len(), n, "extent spec must have {n} entries");

    let mut cells_a = [1usize; MAX_DIM];
    let mut extent_a = [1.0f64; MAX_DIM];
    let mut h = [1.0f64; MAX_DIM];
    for a in 0..n {
        if cells[a] < 4 {
            return Err(GridError::TooFewCells(cells[a], a));
        }
        if !(extent[a] > 0.0) {
            return Err(GridError::BadExtent(extent[a], a));
        }
        cells_a[a] = cells[a];
        extent_a[a] = extent[a];
        h[a] = extent[a] / cells[a] as f64;
    }
    let w: f64 = h[..n].iter().product();

    let width = match collar {
        CollarSpec::Frame { width } | CollarSpec::Side { width, .. } => width,
    };
    if width == 0 {
        return Err(GridError::EmptyCollar);
    }
    if let CollarSpec::Side { axis, .. } = collar {
        if axis >= n {
            return Err(GridError::BadCollarAxis(axis, n));
        }
    }

    let total: usize = cells_a[..n].iter().product();
    let mut collar_mask = vec![false; total];
    let mut centers = vec![0.0f64; total * n];

    let mut idx = [0usize; MAX_DIM];
    for cell in 0..total {
        let mut rem = cell;
        for a in 0..n {
            idx[a] = rem % cells_a[a];
            rem /= cells_a[a];
            centers[cell * n + a] = (idx[a] as f64 + 0.5) * h[a];
        }
        collar_mask[cell] = match collar {
            CollarSpec::Frame { width } => (0..n)
                .any(|a| idx[a] < width || idx[a] >= cells_a[a] - width),
            CollarSpec::Side { axis, width } => idx[axis] < width,
        };
    }

    let mut free_index = vec![None; total];
    let mut free_cells = Vec::new();
    for cell in 0..total {
        if !collar_mask[cell] {
            free_index[cell] = Some(free_cells.len() as u32);
            free_cells.push(cell as u32);
        }
    }
    if free_cells.is_empty() {
        return Err(GridError::CollarCoversAll);
    }

    // The free region must keep room for at least a 2x2(x2) block so that
    // the discrete problem has genuine interior.
    let free_span = |a: usize| -> usize {
        match collar {
            CollarSpec::Frame { width } => cells_a[a].saturating_sub(2 * width),
            CollarSpec::Side { axis, width } if axis == a => cells_a[a] - width,
            CollarSpec::Side { .. } => cells_a[a],
        }
    };
    if (0..n).any(|a| free_span(a) < 2) {
        return Err(GridError::FreeRegionTooThin(2));
    }

    Ok(Grid {
        n,
        cells: cells_a,
        extent: extent_a,
        h,
        w,
        collar,
        collar_mask,
        free_index,
        free_cells,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(cells: usize, collar: CollarSpec) -> Grid {
        build_grid(2, &[cells, cells], &[1.0, 1.0], collar).unwrap()
    }

    #[test]
    fn frame_collar_counts_on_8x8() {
        let g = unit_square(8, CollarSpec::Frame { width: 1 });
        assert_eq!(g.total_cells(), 64);
        assert_eq!(g.collar_count(), 28);
        assert_eq!(g.free_count(), 36);
        assert!((g.w - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn side_collar_counts_on_4x4() {
        let g = build_grid(
            2,
            &[4, 4],
            &[2.0, 2.0],
            CollarSpec::Side { axis: 0, width: 1 },
        )
        .unwrap();
        assert_eq!(g.total_cells(), 16);
        assert_eq!(g.collar_count(), 4);
        assert!((g.w - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wide_frame_on_small_grid_is_rejected() {
        let err = build_grid(2, &[4, 4], &[1.0, 1.0], CollarSpec::Frame { width: 2 }).unwrap_err();
        assert!(matches!(err, GridError::CollarCoversAll));
    }

    #[test]
    fn dimension_and_extent_validation() {
        assert!(matches!(
            build_grid(4, &[4, 4, 4, 4], &[1.0; 4], CollarSpec::Frame { width: 1 }),
            Err(GridError::BadDimension(4))
        ));
        assert!(matches!(
            build_grid(2, &[4, 4], &[0.0, 1.0], CollarSpec::Frame { width: 1 }),
            Err(GridError::BadExtent(_, 0))
        ));
        assert!(matches!(
            build_grid(2, &[3, 4], &[1.0, 1.0], CollarSpec::Frame { width: 1 }),
            Err(GridError::TooFewCells(3, 0))
        ));
    }

    #[test]
    fn constraint_zeroes_frame_cells_and_is_idempotent() {
        let g = unit_square(8, CollarSpec::Frame { width: 1 });
        let ones = vec![1.0; 64 * 2];
        let constrained = g.apply_constraint(&ones).unwrap();
        let zeros = constrained.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 28 * 2);
        assert!(g.satisfies_constraint(&constrained));

        // zero field is a fixed point
        let z = vec![0.0; 64 * 2];
        assert_eq!(g.apply_constraint(&z).unwrap(), z);

        // idempotence on a deterministic pseudo-random field
        let field: Vec<f64> = (0..128).map(|i| ((i * 2654435761u64 as usize) % 97) as f64 / 97.0 - 0.5).collect();
        let once = g.apply_constraint(&field).unwrap();
        let twice = g.apply_constraint(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn field_size_mismatch_is_an_error() {
        let g = unit_square(8, CollarSpec::Frame { width: 1 });
        assert!(g.apply_constraint(&[0.0; 5]).is_err());
    }

    #[test]
    fn cell_volumes_tile_the_domain() {
        let g = build_grid(
            3,
            &[5, 6, 7],
            &[1.0, 2.0, 0.5],
            CollarSpec::Frame { width: 1 },
        )
        .unwrap();
        let total: f64 = (0..g.total_cells()).map(|_| g.w).sum();
        let vol: f64 = g.extent[..3].iter().product();
        assert!((total - vol).abs() <= 1e-12 * vol);
    }

    #[test]
    fn coords_roundtrip_and_centers() {
        let g = unit_square(8, CollarSpec::Frame { width: 1 });
        for cell in 0..g.total_cells() {
            let idx = g.cell_coords(cell);
            assert_eq!(g.cell_id(&idx[..2]), cell);
        }
        assert_eq!(g.center(0), &[1.0 / 16.0, 1.0 / 16.0]);
    }
}
