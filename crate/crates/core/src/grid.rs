//! Uniform cell-centred rectangular meshes with zero-flux faces and the
//! finite-volume operators built on them.
//!
//! All operators are written in flux form over interior faces: a face flux is
//! added to one neighbour and subtracted from the other, so every operator
//! output sums to zero up to rounding. Boundary faces carry no flux, which is
//! the same as reflecting the cell value into a ghost cell.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; MAX_DIM],
    lengths: [f64; MAX_DIM],
}

impl Grid {
    pub fn new_1d(nx: usize, lx: f64) -> Result<Self> {
        Self::new(1, [nx, 1], [lx, 1.0])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(2, [nx, ny], [lx, ly])
    }

    fn new(dim: usize, cells: [usize; MAX_DIM], lengths: [f64; MAX_DIM]) -> Result<Self> {
        for a in 0..dim {
            if cells[a] < 3 {
                return Err(Error::domain(format!(
                    "need at least 3 cells per axis, axis {a} has {}",
                    cells[a]
                )));
            }
            if !(lengths[a] > 0.0 && lengths[a].is_finite()) {
                return Err(Error::domain(format!("axis {a} length must be positive")));
            }
        }
        Ok(Self {
            dim,
            cells,
            lengths,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells along `axis`.
    pub fn n(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Linear index stride along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.cells[0]
        }
    }

    /// Per-axis integer coordinates of a cell.
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; MAX_DIM] {
        [idx % self.cells[0], idx / self.cells[0]]
    }

    /// Physical coordinates of a cell centre (unused axes are 0).
    pub fn center(&self, idx: usize) -> [f64; MAX_DIM] {
        let c = self.coords(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = (c[a] as f64 + 0.5) * self.spacing(a);
        }
        x
    }

    /// Calls `f(lo, hi)` for every interior face normal to `axis`, where `hi`
    /// is the neighbour of `lo` in the positive direction.
    #[inline]
    pub fn for_each_face(&self, axis: usize, mut f: impl FnMut(usize, usize)) {
        let nx = self.cells[0];
        let ny = if self.dim > 1 { self.cells[1] } else { 1 };
        if axis == 0 {
            for j in 0..ny {
                let row = j * nx;
                for i in 0..nx - 1 {
                    f(row + i, row + i + 1);
                }
            }
        } else {
            for j in 0..ny - 1 {
                let row = j * nx;
                for i in 0..nx {
                    f(row + i, row + i + nx);
                }
            }
        }
    }

    /// Physical coordinates of the face between `lo` and its `axis` neighbour.
    pub fn face_center(&self, axis: usize, lo: usize) -> [f64; MAX_DIM] {
        let mut x = self.center(lo);
        x[axis] += 0.5 * self.spacing(axis);
        x
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        Self {
            grid,
            values: vec![v; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; MAX_DIM]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Σ f_i · cell volume.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }
}

pub fn integrate(f: &Field) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Five-point (three-point in 1D) Laplacian with zero normal derivative.
pub fn laplacian_neumann(f: &Field) -> Field {
    let g = f.grid;
    let v = &f.values;
    let mut out = vec![0.0; v.len()];
    for axis in 0..g.dim() {
        let inv_h2 = 1.0 / (g.spacing(axis) * g.spacing(axis));
        g.for_each_face(axis, |lo, hi| {
            let flux = (v[hi] - v[lo]) * inv_h2;
            out[lo] += flux;
            out[hi] -= flux;
        });
    }
    Field::from_vec_unchecked(g, out)
}

/// Discrete `∇·(coeff c ∇s)` with the transported value `c` taken upwind of
/// the face velocity `coeff ∇s`.
pub fn taxis_divergence(c: &Field, s: &Field, coeff: f64) -> Result<Field> {
    if c.grid != s.grid {
        return Err(Error::usage("taxis operands live on different grids"));
    }
    if !(coeff >= 0.0) {
        return Err(Error::domain(format!(
            "taxis coefficient must be non-negative, got {coeff}"
        )));
    }
    if let Some(i) = c.values.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::domain(format!(
            "transported density negative at cell {i}: {}",
            c.values[i]
        )));
    }
    Ok(taxis_unchecked(c, s, coeff))
}

pub(crate) fn taxis_unchecked(c: &Field, s: &Field, coeff: f64) -> Field {
    let g = c.grid;
    let mut out = vec![0.0; g.len()];
    if coeff == 0.0 {
        return Field::from_vec_unchecked(g, out);
    }
    let cv = &c.values;
    let sv = &s.values;
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        let scale = coeff / h;
        g.for_each_face(axis, |lo, hi| {
            let vel = scale * (sv[hi] - sv[lo]);
            let upwind = if vel > 0.0 { cv[lo] } else { cv[hi] };
            let flux = vel * upwind / h;
            out[lo] += flux;
            out[hi] -= flux;
        });
    }
    Field::from_vec_unchecked(g, out)
}

/// Cellwise |∇f|², the mean of the squared one-sided differences on the two
/// faces of each axis (boundary faces contribute zero).
pub fn gradient_sq(f: &Field) -> Field {
    let g = f.grid;
    let v = &f.values;
    let mut out = vec![0.0; v.len()];
    for axis in 0..g.dim() {
        let inv_h = 1.0 / g.spacing(axis);
        g.for_each_face(axis, |lo, hi| {
            let d = (v[hi] - v[lo]) * inv_h;
            let half = 0.5 * d * d;
            out[lo] += half;
            out[hi] += half;
        });
    }
    Field::from_vec_unchecked(g, out)
}

/// Largest |∂f| over all interior faces, per axis.
pub fn max_face_gradient(f: &Field) -> [f64; MAX_DIM] {
    let g = f.grid;
    let v = &f.values;
    let mut out = [0.0; MAX_DIM];
    for (axis, slot) in out.iter_mut().enumerate().take(g.dim()) {
        let inv_h = 1.0 / g.spacing(axis);
        let mut m: f64 = 0.0;
        g.for_each_face(axis, |lo, hi| m = m.max(((v[hi] - v[lo]) * inv_h).abs()));
        *slot = m;
    }
    out
}
