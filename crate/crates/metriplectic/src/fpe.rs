//! Flux-form Fokker-Planck solver on low-dimensional phase-space grids.
//!
//! The equation is advanced in divergence form `df/dt = -d_i (f Z^i)` with
//! Fokker-Planck velocity `Z^i = J^ij H_j - (D/2) J^ik J^jk d_j(log f + beta H)`.
//! The advective part uses second-order centered face fluxes (with an
//! optional upwind switch); the diffusive part uses the log-form flux, which
//! makes the Boltzmann-type equilibrium an exact fixed point up to gradient
//! discretization. Faces on the domain boundary carry exactly zero flux, so
//! mass conservation is a telescoping identity.
//!
//! With `beta` chosen per stage from [`FpeProblem::compute_beta`], the
//! discrete energy `E = integral f H dV` is conserved to roundoff, because
//! the same discrete gradient fields appear in the flux and in the beta
//! quadratures.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridDistribution, PhaseGrid, LOG_FLOOR};
use crate::poisson::HamiltonianSystem;

/// Denominator guard for the inverse-temperature quadrature ratio.
pub const BETA_DENOMINATOR_FLOOR: f64 = 1e-14;

/// Relative floor (e^-200) applied to f before taking logarithms in the
/// flux assembly; cells this far below the peak carry no physical mass.
pub const RELATIVE_LOG_FLOOR: f64 = 1.3838965267367376e-87;

/// How the inverse temperature entering the dissipative flux is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    /// Fixed beta; friction is gamma = beta D / 2 throughout.
    Fixed(f64),
    /// Recompute beta from the energy-conservation quadrature at every
    /// Runge-Kutta stage (beta is frozen within a stage).
    Adaptive,
}

/// Face flux scheme for the advective term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    /// Second-order centered average; required for the bracket identity.
    #[default]
    Centered,
    /// First-order upwinding on the advective part only.
    Upwind,
}

/// Per-face fluxes, stored per axis at the face on the positive side of each
/// cell. Faces on the domain boundary are exactly zero by construction.
pub struct FluxField {
    /// `per_axis[a][c]` is the flux through the face between cell `c` and
    /// its `+e_a` neighbor; entries for cells on the high edge stay zero.
    pub per_axis: Vec<Vec<f64>>,
}

impl FluxField {
    /// Max |flux| over boundary faces; zero by construction.
    pub fn max_boundary_flux(&self, grid: &PhaseGrid) -> f64 {
        let mut m = 0.0_f64;
        for (a, fluxes) in self.per_axis.iter().enumerate() {
            let n = grid.axis(a).cells;
            for (c, &v) in fluxes.iter().enumerate() {
                if grid.coord_along(c, a) == n - 1 {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }
}

/// Multipliers of the discrete Boltzmann-type equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumParams {
    pub beta: f64,
    pub mu: Vec<f64>,
    /// Partition function from the grid quadrature.
    pub z: f64,
    pub log_z: f64,
    /// alpha = log Z - 1, the particle-number multiplier.
    pub alpha: f64,
}

/// One diagnostics record of a relaxation run.
#[derive(Debug, Clone, Serialize)]
pub struct FpeDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    /// Constrained entropy Sigma = S - alpha N - beta E - mu_k C^k.
    pub sigma: f64,
    pub beta: f64,
    pub casimirs: Vec<f64>,
    /// Entropy production quadrature (the H-theorem rate).
    pub ds_dt: f64,
    /// L1 distance to the equilibrium at the current beta.
    pub l1_eq: f64,
}

/// A Fokker-Planck problem bound to a system and a grid, with all static
/// fields (operator, metric factors, Hamiltonian gradients) precomputed at
/// cell centers.
pub struct FpeProblem {
    pub grid: Arc<PhaseGrid>,
    pub d: f64,
    pub scheme: FluxScheme,
    dim: usize,
    /// J(x_c), row-major n x n per cell.
    j_cells: Vec<f64>,
    h_cells: Vec<f64>,
    casimir_cells: Vec<Vec<f64>>,
    /// Advective velocity (J G H)_a per axis.
    jgh: Vec<Vec<f64>>,
    /// b = J^T (G H) per cell (length n each), the static factor of the
    /// dissipative quadratures.
    b_cells: Vec<f64>,
}

impl FpeProblem {
    pub fn new(
        sys: &HamiltonianSystem,
        grid: Arc<PhaseGrid>,
        d: f64,
        scheme: FluxScheme,
    ) -> Result<Self> {
        if d < 0.0 {
            return Err(Error::InvalidArgument("diffusion amplitude D must be >= 0".into()));
        }
        if grid.dim() != sys.dim() {
            return Err(Error::DimensionMismatch { expected: sys.dim(), got: grid.dim() });
        }
        if !sys.has_identity_measure() {
            return Err(Error::InvalidArgument(
                "grid solver requires coordinates spanning the invariant measure (J = 1)".into(),
            ));
        }
        let n = grid.dim();
        let ncells = grid.ncells();

        let mut j_cells = vec![0.0; ncells * n * n];
        for c in 0..ncells {
            let j = sys.operator.eval_unchecked(&grid.center(c));
            for i in 0..n {
                for k in 0..n {
                    j_cells[c * n * n + i * n + k] = j[(i, k)];
                }
            }
        }
        let h_cells = grid.field_from(|x| sys.hamiltonian.value(x));
        let casimir_cells: Vec<Vec<f64>> = sys
            .casimirs
            .iter()
            .map(|ck| grid.field_from(|x| ck.value(x)))
            .collect();
        let gh = grid.gradient(&h_cells);

        let mut jgh = vec![vec![0.0; ncells]; n];
        let mut b_cells = vec![0.0; ncells * n];
        for c in 0..ncells {
            let jc = &j_cells[c * n * n..(c + 1) * n * n];
            for i in 0..n {
                let mut adv = 0.0;
                let mut bt = 0.0;
                for k in 0..n {
                    adv += jc[i * n + k] * gh[k][c];
                    // b_i = sum_k J^ki (G_k H): transpose contraction.
                    bt += jc[k * n + i] * gh[k][c];
                }
                jgh[i][c] = adv;
                b_cells[c * n + i] = bt;
            }
        }

        Ok(Self { grid, d, scheme, dim: n, j_cells, h_cells, casimir_cells, jgh, b_cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian_field(&self) -> &[f64] {
        &self.h_cells
    }

    pub fn casimir_fields(&self) -> &[Vec<f64>] {
        &self.casimir_cells
    }

    pub fn operator_at(&self, cell: usize) -> &[f64] {
        let n = self.dim;
        &self.j_cells[cell * n * n..(cell + 1) * n * n]
    }

    /// log f with the floor, and a = J^T G(log f) per cell.
    ///
    /// The floor is relative to the current maximum (e^-200 below it, with
    /// the absolute 1e-300 backstop). An absolute floor alone would put a
    /// ~690-deep cliff in log f next to any cell that underflows or rounds
    /// negative, and the resulting artificial log-gradient feeds back
    /// through the flux and destabilizes the tail.
    fn log_fields(&self, f: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.dim;
        let ncells = self.grid.ncells();
        let fmax = f.iter().fold(0.0_f64, |m, &v| m.max(v));
        let floor = (fmax * RELATIVE_LOG_FLOOR).max(LOG_FLOOR);
        let logf: Vec<f64> = f.iter().map(|&v| v.max(floor).ln()).collect();
        let gl: Vec<Vec<f64>> = self.grid.gradient(&logf);
        let mut a_cells = vec![0.0; ncells * n];
        for c in 0..ncells {
            let jc = &self.j_cells[c * n * n..(c + 1) * n * n];
            for i in 0..n {
                let mut t = 0.0;
                for k in 0..n {
                    t += jc[k * n + i] * gl[k][c];
                }
                a_cells[c * n + i] = t;
            }
        }
        (gl, a_cells)
    }

    /// Cell-centered flux vector `w^i = f Z^i` for a given beta.
    fn cell_flux(&self, f: &[f64], beta: f64) -> Vec<Vec<f64>> {
        let n = self.dim;
        let ncells = self.grid.ncells();
        let (_, a_cells) = self.log_fields(f);
        let mut w = vec![vec![0.0; ncells]; n];
        for c in 0..ncells {
            let jc = &self.j_cells[c * n * n..(c + 1) * n * n];
            let ac = &a_cells[c * n..(c + 1) * n];
            let bc = &self.b_cells[c * n..(c + 1) * n];
            for i in 0..n {
                // (g psi)^i = sum_k J^ik (a + beta b)_k with a,b already in
                // the J^T-contracted frame.
                let mut diff = 0.0;
                for k in 0..n {
                    diff += jc[i * n + k] * (ac[k] + beta * bc[k]);
                }
                w[i][c] = f[c] * (self.jgh[i][c] - 0.5 * self.d * diff);
            }
        }
        w
    }

    /// Face fluxes with exactly zero boundary faces.
    pub fn flux_field(&self, f: &GridDistribution, beta: f64) -> FluxField {
        let g = &*self.grid;
        let w = self.cell_flux(&f.values, beta);
        let mut per_axis = Vec::with_capacity(self.dim);
        match self.scheme {
            FluxScheme::Centered => {
                for (a, wa) in w.iter().enumerate() {
                    let s = g.stride(a);
                    let n = g.axis(a).cells;
                    let mut fa = vec![0.0; g.ncells()];
                    for c in 0..g.ncells() {
                        if g.coord_along(c, a) < n - 1 {
                            fa[c] = 0.5 * (wa[c] + wa[c + s]);
                        }
                    }
                    per_axis.push(fa);
                }
            }
            FluxScheme::Upwind => {
                // Upwind the advective part on the face velocity; keep the
                // diffusive part centered.
                for a in 0..self.dim {
                    let s = g.stride(a);
                    let n = g.axis(a).cells;
                    let mut fa = vec![0.0; g.ncells()];
                    for c in 0..g.ncells() {
                        if g.coord_along(c, a) < n - 1 {
                            let vel = 0.5 * (self.jgh[a][c] + self.jgh[a][c + s]);
                            let fup = if vel >= 0.0 { f.values[c] } else { f.values[c + s] };
                            let wd_c = w[a][c] - f.values[c] * self.jgh[a][c];
                            let wd_r = w[a][c + s] - f.values[c + s] * self.jgh[a][c + s];
                            fa[c] = vel * fup + 0.5 * (wd_c + wd_r);
                        }
                    }
                    per_axis.push(fa);
                }
            }
        }
        FluxField { per_axis }
    }

    /// `df/dt` as the negative divergence of the face fluxes.
    pub fn fpe_rhs(&self, f: &GridDistribution, beta: f64) -> Vec<f64> {
        let flux = self.flux_field(f, beta);
        self.divergence_of(&flux)
    }

    /// Negative flux divergence: `rhs_c = -sum_a (F_a[c] - F_a[c - e_a]) / dx_a`.
    pub fn divergence_of(&self, flux: &FluxField) -> Vec<f64> {
        let g = &*self.grid;
        let mut rhs = vec![0.0; g.ncells()];
        for (a, fa) in flux.per_axis.iter().enumerate() {
            let s = g.stride(a);
            let invdx = 1.0 / g.axis(a).dx();
            for c in 0..g.ncells() {
                let i = g.coord_along(c, a);
                let left = if i == 0 { 0.0 } else { fa[c - s] };
                rhs[c] -= (fa[c] - left) * invdx;
            }
        }
        rhs
    }

    /// Inverse temperature from the energy-conservation quadrature ratio.
    ///
    /// Uses the solver's own discrete fields, so the resulting beta makes
    /// dE/dt vanish identically for the discrete dynamics.
    pub fn compute_beta(&self, f: &GridDistribution) -> Result<f64> {
        let n = self.dim;
        let (_, a_cells) = self.log_fields(&f.values);
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..self.grid.ncells() {
            let ac = &a_cells[c * n..(c + 1) * n];
            let bc = &self.b_cells[c * n..(c + 1) * n];
            let mut ab = 0.0;
            let mut bb = 0.0;
            for k in 0..n {
                ab += ac[k] * bc[k];
                bb += bc[k] * bc[k];
            }
            num += f.values[c] * ab;
            den += f.values[c] * bb;
        }
        num *= self.grid.cell_volume();
        den *= self.grid.cell_volume();
        if den.abs() <= BETA_DENOMINATOR_FLOOR {
            return Err(Error::DegenerateDenominator {
                value: den,
                threshold: BETA_DENOMINATOR_FLOOR,
            });
        }
        Ok(-num / den)
    }

    /// Entropy production `(D/2) sum_i integral f [J^ij d_j(log f + beta H)]^2 dV`.
    pub fn entropy_production(&self, f: &GridDistribution, beta: f64) -> f64 {
        let n = self.dim;
        let (_, a_cells) = self.log_fields(&f.values);
        let mut total = 0.0;
        for c in 0..self.grid.ncells() {
            if f.values[c] < LOG_FLOOR {
                continue;
            }
            let ac = &a_cells[c * n..(c + 1) * n];
            let bc = &self.b_cells[c * n..(c + 1) * n];
            let mut sq = 0.0;
            for k in 0..n {
                let v = ac[k] + beta * bc[k];
                sq += v * v;
            }
            total += f.values[c] * sq;
        }
        0.5 * self.d * total * self.grid.cell_volume()
    }

    /// dE/dt under the current discrete dynamics (diagnostic; vanishes to
    /// roundoff when beta comes from [`Self::compute_beta`]).
    pub fn energy_rate(&self, f: &GridDistribution, beta: f64) -> f64 {
        let rhs = self.fpe_rhs(f, beta);
        rhs.iter()
            .zip(self.h_cells.iter())
            .map(|(r, h)| r * h)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Stability bound on dt: parabolic estimate from max |g| and min dx^2,
    /// combined with the advective CFL of the velocity field J grad H.
    pub fn dt_stability_bound(&self) -> f64 {
        let n = self.dim;
        let g = &*self.grid;
        // max over cells of the infinity norm of g = J J^T.
        let mut gmax = 0.0_f64;
        for c in 0..g.ncells() {
            let jc = &self.j_cells[c * n * n..(c + 1) * n * n];
            for i in 0..n {
                let mut row = 0.0;
                for k in 0..n {
                    let mut gik = 0.0;
                    for m in 0..n {
                        gik += jc[i * n + m] * jc[k * n + m];
                    }
                    row += gik.abs();
                }
                gmax = gmax.max(row);
            }
        }
        let min_dx2 = (0..n).map(|a| g.axis(a).dx().powi(2)).fold(f64::INFINITY, f64::min);
        let parabolic = if self.d * gmax > 0.0 {
            min_dx2 / (2.0 * n as f64 * 0.5 * self.d * gmax)
        } else {
            f64::INFINITY
        };
        let mut advective_rate = 0.0;
        for a in 0..n {
            let vmax = self.jgh[a].iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            advective_rate += vmax / g.axis(a).dx();
        }
        let advective = if advective_rate > 0.0 { 1.0 / advective_rate } else { f64::INFINITY };
        0.9 * parabolic.min(advective)
    }

    fn resolve_beta(&self, f: &GridDistribution, mode: BetaMode) -> Result<f64> {
        match mode {
            BetaMode::Fixed(b) => Ok(b),
            BetaMode::Adaptive => self.compute_beta(f),
        }
    }

    /// One SSP-RK2 step. Mass is conserved by the flux form; nonnegativity
    /// is maintained by the dt restriction and checked, never clipped.
    pub fn step(&self, f: &GridDistribution, dt: f64, mode: BetaMode) -> Result<GridDistribution> {
        let bound = self.dt_stability_bound();
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if dt > bound {
            return Err(Error::StabilityViolation { dt, bound, suggested: 0.5 * bound });
        }
        let ncells = self.grid.ncells();

        let beta1 = self.resolve_beta(f, mode)?;
        let r1 = self.fpe_rhs(f, beta1);
        let mut f1 = vec![0.0; ncells];
        for c in 0..ncells {
            f1[c] = f.values[c] + dt * r1[c];
        }
        let stage = GridDistribution { grid: self.grid.clone(), values: f1, time: f.time + dt };
        self.check_positivity(&stage.values, f.time)?;

        let beta2 = self.resolve_beta(&stage, mode)?;
        let r2 = self.fpe_rhs(&stage, beta2);
        let mut out = vec![0.0; ncells];
        for c in 0..ncells {
            out[c] = 0.5 * (f.values[c] + stage.values[c] + dt * r2[c]);
        }
        self.check_positivity(&out, f.time)?;
        Ok(GridDistribution { grid: self.grid.clone(), values: out, time: f.time + dt })
    }

    fn check_positivity(&self, values: &[f64], time: f64) -> Result<()> {
        let mut max = 0.0_f64;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite cell value at t = {time}")));
            }
            max = max.max(v);
        }
        let floor = -1e-12 * max;
        if values.iter().any(|&v| v < floor) {
            return Err(Error::Numerical(format!(
                "negative cell values beyond roundoff at t = {time}; reduce dt"
            )));
        }
        Ok(())
    }

    /// Discrete Boltzmann-type equilibrium `Z^-1 J exp(-beta H - mu_k C^k)`
    /// on this problem's grid (identity measure here).
    pub fn equilibrium(&self, beta: f64, mu: &[f64]) -> Result<(GridDistribution, EquilibriumParams)> {
        equilibrium_fields(&self.grid, &self.h_cells, &self.casimir_cells, None, beta, mu)
    }

    /// Relaxation loop recording diagnostics every `record_every` steps.
    ///
    /// `mu` gives the Casimir multipliers of the reference equilibrium used
    /// for the Sigma and L1 diagnostics.
    pub fn relax_to_equilibrium(
        &self,
        f0: GridDistribution,
        dt: f64,
        t_end: f64,
        mode: BetaMode,
        mu: &[f64],
        record_every: usize,
    ) -> Result<(Vec<FpeDiagnostics>, GridDistribution)> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidArgument("t_end must be positive".into()));
        }
        let steps = (t_end / dt).ceil() as usize;
        let every = record_every.max(1);
        let mut f = f0;
        let mut series = Vec::new();
        series.push(self.diagnose(&f, mode, mu)?);
        for s in 0..steps {
            f = self.step(&f, dt, mode)?;
            if (s + 1) % every == 0 || s + 1 == steps {
                series.push(self.diagnose(&f, mode, mu)?);
            }
        }
        Ok((series, f))
    }

    /// One diagnostics record at the distribution's current time.
    pub fn diagnose(
        &self,
        f: &GridDistribution,
        mode: BetaMode,
        mu: &[f64],
    ) -> Result<FpeDiagnostics> {
        let beta = self.resolve_beta(f, mode)?;
        let (feq, params) = self.equilibrium(beta, mu)?;
        let mass = f.mass();
        let energy = f.expectation(&self.h_cells);
        let entropy = f.entropy();
        let casimirs: Vec<f64> = self.casimir_cells.iter().map(|ck| f.expectation(ck)).collect();
        let mu_dot_c: f64 = mu.iter().zip(casimirs.iter()).map(|(m, c)| m * c).sum();
        let sigma = entropy - params.alpha * mass - beta * energy - mu_dot_c;
        Ok(FpeDiagnostics {
            t: f.time,
            mass,
            energy,
            entropy,
            sigma,
            beta,
            casimirs,
            ds_dt: self.entropy_production(f, beta),
            l1_eq: f.l1_distance(&feq),
        })
    }
}

/// Equilibrium over explicit fields; `measure` defaults to 1.
pub fn equilibrium_fields(
    grid: &Arc<PhaseGrid>,
    h: &[f64],
    casimirs: &[Vec<f64>],
    measure: Option<&[f64]>,
    beta: f64,
    mu: &[f64],
) -> Result<(GridDistribution, EquilibriumParams)> {
    if mu.len() != casimirs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} Casimir multipliers supplied for {} Casimirs",
            mu.len(),
            casimirs.len()
        )));
    }
    let ncells = grid.ncells();
    let mut exponent = vec![0.0; ncells];
    for c in 0..ncells {
        let mut e = -beta * h[c];
        for (m, ck) in mu.iter().zip(casimirs.iter()) {
            e -= m * ck[c];
        }
        if let Some(j) = measure {
            if !(j[c] > 0.0) {
                return Err(Error::NonIntegrable(format!("measure density {} at cell {c}", j[c])));
            }
            e += j[c].ln();
        }
        if !e.is_finite() {
            return Err(Error::NonIntegrable(format!("exponent not finite at cell {c}")));
        }
        exponent[c] = e;
    }
    // Shift by the max exponent before exponentiating.
    let shift = exponent.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let weights: Vec<f64> = exponent.iter().map(|&e| (e - shift).exp()).collect();
    let sum_w = grid.quadrature(&weights);
    if !(sum_w > 0.0) || !sum_w.is_finite() {
        return Err(Error::NonIntegrable("equilibrium weight quadrature degenerate".into()));
    }
    let log_z = shift + sum_w.ln();
    let values: Vec<f64> = weights.iter().map(|&w| w / sum_w).collect();
    let f = GridDistribution { grid: grid.clone(), values, time: 0.0 };
    let params = EquilibriumParams {
        beta,
        mu: mu.to_vec(),
        z: log_z.exp(),
        log_z,
        alpha: log_z - 1.0,
    };
    Ok((f, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    fn canonical_problem(cells: usize, d: f64) -> FpeProblem {
        let grid = Arc::new(
            PhaseGrid::new(&[-7.0, -7.0], &[7.0, 7.0], &[cells, cells]).unwrap(),
        );
        FpeProblem::new(&systems::canonical_2d(), grid, d, FluxScheme::Centered).unwrap()
    }

    fn gaussian(grid: &Arc<PhaseGrid>, center: [f64; 2], sigma: f64) -> GridDistribution {
        GridDistribution::normalized_from(grid.clone(), |x| {
            let dp = x[0] - center[0];
            let dq = x[1] - center[1];
            (-(dp * dp + dq * dq) / (2.0 * sigma * sigma)).exp()
        })
        .unwrap()
    }

    #[test]
    fn equilibrium_is_near_fixed_point_and_refines() {
        // Residual at the discrete equilibrium is O(dx^2): ratio ~ 4 per halving.
        let mut norms = Vec::new();
        for cells in [32usize, 64, 128] {
            let prob = canonical_problem(cells, 0.2);
            let (feq, _) = prob.equilibrium(1.0, &[]).unwrap();
            let rhs = prob.fpe_rhs(&feq, 1.0);
            let max = rhs.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            norms.push(max);
        }
        let r1 = norms[0] / norms[1];
        let r2 = norms[1] / norms[2];
        assert!(r1 > 3.5 && r1 < 4.5, "refinement ratio {r1}");
        assert!(r2 > 3.5 && r2 < 4.5, "refinement ratio {r2}");
    }

    #[test]
    fn equilibrium_partition_function_converges() {
        // Z -> 2 pi / beta for the canonical Gaussian.
        let prob = canonical_problem(128, 0.2);
        let (_, params) = prob.equilibrium(1.0, &[]).unwrap();
        assert!((params.z - 2.0 * std::f64::consts::PI).abs() < 1e-3);
        assert!((params.alpha - (params.log_z - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_beta_zero_is_uniform() {
        let prob = canonical_problem(32, 0.2);
        let (feq, _) = prob.equilibrium(0.0, &[]).unwrap();
        let expected = 1.0 / (14.0 * 14.0);
        for &v in &feq.values {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rhs_conserves_mass() {
        let prob = canonical_problem(64, 0.2);
        let f = gaussian(&prob.grid, [1.0, 0.5], 0.8);
        let rhs = prob.fpe_rhs(&f, 1.0);
        let total = prob.grid.quadrature(&rhs);
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>() * prob.grid.cell_volume();
        assert!(total.abs() <= 1e-13 * scale.max(1.0), "mass defect {total}");
    }

    #[test]
    fn boundary_faces_are_zero() {
        let prob = canonical_problem(32, 0.2);
        let f = gaussian(&prob.grid, [0.5, -0.3], 1.0);
        let flux = prob.flux_field(&f, 1.0);
        assert_eq!(flux.max_boundary_flux(&prob.grid), 0.0);
    }

    #[test]
    fn liouville_limit_conserves_energy_and_mass() {
        // D = 0: pure advection; E and mass conserved by the flux form.
        let prob = canonical_problem(64, 0.0);
        let f = gaussian(&prob.grid, [1.0, 0.0], 0.7);
        let e0 = f.expectation(prob.hamiltonian_field());
        let dt = 0.5 * prob.dt_stability_bound();
        let mut g = f;
        for _ in 0..20 {
            g = prob.step(&g, dt, BetaMode::Fixed(0.0)).unwrap();
        }
        let e1 = g.expectation(prob.hamiltonian_field());
        assert!((g.mass() - 1.0).abs() < 1e-12);
        assert!(((e1 - e0) / e0).abs() < 1e-12, "Liouville energy drift {}", (e1 - e0) / e0);
    }

    #[test]
    fn step_conserves_mass_to_1e13() {
        let prob = canonical_problem(64, 0.2);
        let f = gaussian(&prob.grid, [1.0, 0.0], 0.7);
        let dt = 0.5 * prob.dt_stability_bound();
        let g = prob.step(&f, dt, BetaMode::Adaptive).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn step_rejects_dt_above_bound() {
        let prob = canonical_problem(32, 0.2);
        let f = gaussian(&prob.grid, [0.0, 0.0], 1.0);
        let bound = prob.dt_stability_bound();
        let err = prob.step(&f, 2.0 * bound, BetaMode::Fixed(1.0)).unwrap_err();
        assert!(matches!(err, Error::StabilityViolation { .. }));
    }

    #[test]
    fn compute_beta_recovers_equilibrium_beta() {
        let prob = canonical_problem(64, 0.2);
        for beta in [0.5, 1.0, 2.0] {
            let (feq, _) = prob.equilibrium(beta, &[]).unwrap();
            let est = prob.compute_beta(&feq).unwrap();
            assert!((est - beta).abs() < 1e-6, "beta {beta} -> {est}");
        }
    }

    #[test]
    fn compute_beta_uniform_is_zero() {
        let prob = canonical_problem(32, 0.2);
        let (uniform, _) = prob.equilibrium(0.0, &[]).unwrap();
        let est = prob.compute_beta(&uniform).unwrap();
        assert!(est.abs() < 1e-10, "uniform beta {est}");
    }

    #[test]
    fn compute_beta_degenerate_for_point_mass() {
        // Use a grid with a cell centered exactly on the H minimum, so the
        // discrete gradient there is exactly zero.
        let grid = Arc::new(
            PhaseGrid::new(&[-1.75, -1.75], &[2.25, 2.25], &[8, 8]).unwrap(),
        );
        let prob =
            FpeProblem::new(&systems::canonical_2d(), grid.clone(), 0.2, FluxScheme::Centered)
                .unwrap();
        let mut values = vec![0.0; grid.ncells()];
        let c = grid.locate(&[0.0, 0.0]).unwrap();
        assert_eq!(grid.center(c), vec![0.0, 0.0]);
        values[c] = 1.0 / grid.cell_volume();
        let f = GridDistribution { grid, values, time: 0.0 };
        assert!(matches!(
            prob.compute_beta(&f),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn adaptive_beta_conserves_energy_exactly() {
        let prob = canonical_problem(64, 0.2);
        let f = gaussian(&prob.grid, [1.0, 0.0], 0.7);
        let beta = prob.compute_beta(&f).unwrap();
        let rate = prob.energy_rate(&f, beta);
        assert!(rate.abs() < 1e-12, "energy rate {rate}");
    }

    #[test]
    fn entropy_production_nonnegative_and_zero_cases() {
        let prob = canonical_problem(64, 0.2);
        let f = gaussian(&prob.grid, [1.0, 0.0], 0.7);
        assert!(prob.entropy_production(&f, 1.0) > 0.0);
        let (feq, _) = prob.equilibrium(1.0, &[]).unwrap();
        // At equilibrium the integrand vanishes identically.
        assert!(prob.entropy_production(&feq, 1.0) < 1e-20);
        let prob0 = canonical_problem(64, 0.0);
        assert_eq!(prob0.entropy_production(&f, 1.0), 0.0);
    }

    #[test]
    fn rigid_body_equilibrium_flux_in_kernel() {
        // With mu on C = |x|^2/2 the log-form diffusive flux vanishes to
        // quadrature tolerance because J grad C = 0 pointwise.
        let grid = Arc::new(PhaseGrid::new(&[-4.0; 3], &[4.0; 3], &[24, 24, 24]).unwrap());
        let sys = systems::rigid_body();
        let prob = FpeProblem::new(&sys, grid, 0.2, FluxScheme::Centered).unwrap();
        let (feq, _) = prob.equilibrium(1.0, &[0.5]).unwrap();
        let (_, a_cells) = prob.log_fields(&feq.values);
        let n = prob.dim;
        let mut worst = 0.0_f64;
        for c in 0..prob.grid.ncells() {
            if prob.grid.is_boundary(c) {
                continue;
            }
            let ac = &a_cells[c * n..(c + 1) * n];
            let bc = &prob.b_cells[c * n..(c + 1) * n];
            for k in 0..n {
                worst = worst.max((ac[k] + 1.0 * bc[k]).abs());
            }
        }
        // Interior cells: a + beta b = -mu J^T (G C) and the centered
        // gradient of the quadratic Casimir is exact, so this is roundoff.
        assert!(worst < 1e-10, "kernel defect {worst}");
    }

    #[test]
    fn equilibrium_overflow_guard() {
        let prob = canonical_problem(32, 0.2);
        // Large beta would overflow exp without the shift.
        let (feq, params) = prob.equilibrium(400.0, &[]).unwrap();
        assert!(feq.values.iter().all(|v| v.is_finite()));
        assert!(params.log_z.is_finite());
    }
}
