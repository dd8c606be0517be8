//! Rectangular phase-space grids and the shared difference operators.
//!
//! The discrete gradient `G` is a centered difference with a copy ghost cell
//! at each boundary (the boundary row differences the cell against its inner
//! neighbor at half weight). Its exact matrix transpose equals minus the
//! divergence of arithmetically face-averaged fluxes with zero boundary
//! faces. That identity is what makes the bracket formalism and the
//! flux-form solver agree to roundoff, so every consumer in this crate must
//! use these operators rather than rolling its own stencils.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Cells with `f` below this are excluded from logarithm-based quadratures.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
}

impl Axis {
    pub fn dx(&self) -> f64 {
        (self.max - self.min) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.dx()
    }
}

/// A rectangular cell-centered grid in 2 or 3 phase-space dimensions.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    ncells: usize,
    cell_volume: f64,
}

impl PhaseGrid {
    pub fn new(min: &[f64], max: &[f64], cells: &[usize]) -> Result<Self> {
        if min.len() != max.len() || min.len() != cells.len() || min.is_empty() {
            return Err(Error::Config("grid axes must agree in length".into()));
        }
        for a in 0..min.len() {
            if !(min[a] < max[a]) {
                return Err(Error::Config(format!("axis {a}: min must be below max")));
            }
            if cells[a] < 8 {
                return Err(Error::Config(format!(
                    "axis {a}: at least 8 cells required, got {}",
                    cells[a]
                )));
            }
        }
        let axes: Vec<Axis> = (0..min.len())
            .map(|a| Axis { min: min[a], max: max[a], cells: cells[a] })
            .collect();
        let dim = axes.len();
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].cells;
        }
        let ncells: usize = axes.iter().map(|a| a.cells).product();
        let cell_volume: f64 = axes.iter().map(|a| a.dx()).product();
        Ok(Self { axes, strides, ncells, cell_volume })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }

    /// Component of the multi-index of `flat` along `axis`.
    pub fn coord_along(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.axes[axis].cells
    }

    /// Physical coordinates of the center of cell `flat`.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.axes[a].center(self.coord_along(flat, a)))
            .collect()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        (0..self.dim()).any(|a| {
            let i = self.coord_along(flat, a);
            i == 0 || i == self.axes[a].cells - 1
        })
    }

    /// Flat index of the cell containing `x`, or None if outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for a in 0..self.dim() {
            let ax = &self.axes[a];
            if !(x[a] >= ax.min && x[a] < ax.max) {
                return None;
            }
            let i = (((x[a] - ax.min) / ax.dx()) as usize).min(ax.cells - 1);
            flat += i * self.strides[a];
        }
        Some(flat)
    }

    /// Samples a function at all cell centers.
    pub fn field_from<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.ncells).map(|c| f(&self.center(c))).collect()
    }

    /// `sum_c field_c dV`, in fixed cell order.
    pub fn quadrature(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume
    }

    /// Centered difference along `axis` with a copy ghost at the boundary.
    pub fn gradient_axis(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let s = self.strides[axis];
        let n = self.axes[axis].cells;
        let inv2dx = 0.5 / self.axes[axis].dx();
        (0..self.ncells)
            .map(|c| {
                let i = self.coord_along(c, axis);
                let left = if i == 0 { c } else { c - s };
                let right = if i == n - 1 { c } else { c + s };
                (field[right] - field[left]) * inv2dx
            })
            .collect()
    }

    /// All axis gradients of a field.
    pub fn gradient(&self, field: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|a| self.gradient_axis(field, a)).collect()
    }

    /// Exact matrix transpose of `gradient_axis`, applied by scattering.
    pub fn gradient_axis_transpose(&self, w: &[f64], axis: usize) -> Vec<f64> {
        let s = self.strides[axis];
        let n = self.axes[axis].cells;
        let inv2dx = 0.5 / self.axes[axis].dx();
        let mut out = vec![0.0; self.ncells];
        for c in 0..self.ncells {
            let i = self.coord_along(c, axis);
            let left = if i == 0 { c } else { c - s };
            let right = if i == n - 1 { c } else { c + s };
            out[left] -= w[c] * inv2dx;
            out[right] += w[c] * inv2dx;
        }
        out
    }

    /// Histogram cell counts of a flat `N x dim` sample array. Returns the
    /// counts and the number of samples inside the box.
    pub fn histogram(&self, samples: &[f64]) -> (Vec<usize>, usize) {
        let dim = self.dim();
        let mut counts = vec![0usize; self.ncells];
        let mut inside = 0usize;
        for p in samples.chunks_exact(dim) {
            if let Some(c) = self.locate(p) {
                counts[c] += 1;
                inside += 1;
            }
        }
        (counts, inside)
    }
}

/// A nonnegative, unit-mass cell-averaged distribution on a grid.
#[derive(Debug, Clone)]
pub struct GridDistribution {
    pub grid: Arc<PhaseGrid>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl GridDistribution {
    /// Wraps raw cell values, checking nonnegativity and unit mass.
    pub fn new(grid: Arc<PhaseGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.ncells() {
            return Err(Error::DimensionMismatch { expected: grid.ncells(), got: values.len() });
        }
        let max = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
            if v < -1e-13 * max {
                return Err(Error::Numerical(format!("negative cell value {v:.3e} at {i}")));
            }
        }
        let mass = grid.quadrature(&values);
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!("mass {mass} differs from 1 beyond 1e-12")));
        }
        Ok(Self { grid, values, time })
    }

    /// Samples a nonnegative shape function and normalizes it to unit mass.
    pub fn normalized_from<F: Fn(&[f64]) -> f64>(grid: Arc<PhaseGrid>, shape: F) -> Result<Self> {
        let mut values = grid.field_from(shape);
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
            if v < 0.0 {
                return Err(Error::Numerical(format!("negative shape value at cell {i}")));
            }
        }
        let mass = grid.quadrature(&values);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Numerical("shape function has no mass".into()));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self { grid, values, time: 0.0 })
    }

    pub fn mass(&self) -> f64 {
        self.grid.quadrature(&self.values)
    }

    /// `integral f * field dV`.
    pub fn expectation(&self, field: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(field.iter())
            .map(|(f, g)| f * g)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// `S = -integral f log f dV` with the log floor.
    pub fn entropy(&self) -> f64 {
        -self
            .values
            .iter()
            .map(|&f| if f >= LOG_FLOOR { f * f.ln() } else { 0.0 })
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// L1 distance to another distribution on the same grid.
    pub fn l1_distance(&self, other: &GridDistribution) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Mass sitting in boundary cells; reported as a domain-truncation gauge.
    pub fn boundary_mass(&self) -> f64 {
        (0..self.grid.ncells())
            .filter(|&c| self.grid.is_boundary(c))
            .map(|c| self.values[c])
            .sum::<f64>()
            * self.grid.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2d() -> Arc<PhaseGrid> {
        Arc::new(PhaseGrid::new(&[-2.0, -3.0], &[2.0, 1.0], &[16, 12]).unwrap())
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(PhaseGrid::new(&[0.0], &[0.0], &[8]).is_err());
        assert!(PhaseGrid::new(&[0.0], &[1.0], &[4]).is_err());
    }

    #[test]
    fn centers_and_locate_agree() {
        let g = grid_2d();
        for c in [0, 5, 77, g.ncells() - 1] {
            let x = g.center(c);
            assert_eq!(g.locate(&x), Some(c));
        }
        assert_eq!(g.locate(&[10.0, 0.0]), None);
    }

    #[test]
    fn gradient_exact_on_linear_fields_interior() {
        let g = grid_2d();
        let field = g.field_from(|x| 2.0 * x[0] - 3.0 * x[1] + 1.0);
        let gx = g.gradient_axis(&field, 0);
        let gy = g.gradient_axis(&field, 1);
        for c in 0..g.ncells() {
            if !g.is_boundary(c) {
                assert!((gx[c] - 2.0).abs() < 1e-12);
                assert!((gy[c] + 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_constant_is_zero_everywhere() {
        let g = grid_2d();
        let field = vec![3.7; g.ncells()];
        for a in 0..2 {
            assert!(g.gradient_axis(&field, a).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = grid_2d();
        let u = g.field_from(|x| (x[0] * 1.3).sin() + x[1] * x[1]);
        let w = g.field_from(|x| (x[1] * 0.7).cos() - x[0]);
        for a in 0..2 {
            let lhs: f64 = g.gradient_axis(&u, a).iter().zip(&w).map(|(p, q)| p * q).sum();
            let rhs: f64 = g
                .gradient_axis_transpose(&w, a)
                .iter()
                .zip(&u)
                .map(|(p, q)| p * q)
                .sum();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn transpose_annihilates_constants_in_total() {
        // sum_c (G^T w)_c = sum_c w_c (G 1)_c = 0: discrete mass conservation.
        let g = grid_2d();
        let w = g.field_from(|x| x[0] * x[1] + 0.3);
        for a in 0..2 {
            let total: f64 = g.gradient_axis_transpose(&w, a).iter().sum();
            assert!(total.abs() < 1e-13 * w.iter().map(|v| v.abs()).sum::<f64>());
        }
    }

    #[test]
    fn normalized_distribution_has_unit_mass() {
        let g = grid_2d();
        let f = GridDistribution::normalized_from(g, |x| (-x[0] * x[0] - x[1] * x[1]).exp())
            .unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert!(f.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn histogram_counts_inside() {
        let g = grid_2d();
        let samples = vec![0.1, 0.2, 5.0, 5.0, -1.9, -2.9];
        let (counts, inside) = g.histogram(&samples);
        assert_eq!(inside, 2);
        assert_eq!(counts.iter().sum::<usize>(), 2);
    }
}
