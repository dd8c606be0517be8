//! Finite-dimensional noncanonical Hamiltonian systems.
//!
//! A system is an antisymmetric state-dependent operator `J(x)` (the Poisson
//! operator), a Hamiltonian, a list of Casimirs, and an optional measure
//! density `J_m(x)` with `d_i(J_m J^ij) = 0`. Everything here is a numerical
//! verifier or evaluator for the algebraic identities those objects satisfy:
//! antisymmetry, the Jacobi identity, Casimir degeneracy, the invariant
//! measure condition, and the induced dissipative metric `g = J J^T`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Antisymmetry is enforced at evaluation time with this tolerance.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Relative singular-value cutoff for numerical rank.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Centered finite-difference step: `h_i = FD_STEP_SCALE * (1 + |x_i|)`.
pub const FD_STEP_SCALE: f64 = 1e-5;

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type OperatorFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type PartialsFn = dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync;

/// A point of phase space: a finite real vector of the system dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords)?;
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

impl std::ops::Deref for PhasePoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i, value: v });
        }
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A scalar function of phase space with an optional analytic gradient.
///
/// When no gradient is supplied, centered finite differences with the
/// scale-aware step `h_i = 1e-5 (1 + |x_i|)` are used.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl ScalarField {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient(x),
        }
    }

    /// Centered finite-difference gradient, always available.
    pub fn fd_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut out = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = FD_STEP_SCALE * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            out[i] = ((self.value)(&xp) - (self.value)(&xm)) / (2.0 * h);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        out
    }

    /// Max relative deviation between the analytic gradient and the
    /// finite-difference one at `x`. Zero when no analytic gradient exists.
    pub fn gradient_consistency(&self, x: &[f64]) -> f64 {
        if self.gradient.is_none() {
            return 0.0;
        }
        let ga = self.gradient(x);
        let gf = self.fd_gradient(x);
        let scale = ga
            .iter()
            .chain(gf.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1.0);
        ga.iter()
            .zip(gf.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs() / scale))
    }
}

/// The positive Jacobian weight of the invariant measure `J_m dV`.
#[derive(Clone)]
pub struct MeasureDensity {
    value: Arc<ValueFn>,
}

impl MeasureDensity {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { value: Arc::new(value) }
    }

    pub fn identity() -> Self {
        Self::new(|_| 1.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
}

/// The antisymmetric operator field `J(x)` with optional analytic partials
/// `d_m J^ij(x)` (finite differences otherwise).
#[derive(Clone)]
pub struct PoissonOperatorField {
    dim: usize,
    eval: Arc<OperatorFn>,
    partials: Option<Arc<PartialsFn>>,
}

impl PoissonOperatorField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(eval), partials: None }
    }

    pub fn with_partials<F, P>(dim: usize, eval: F, partials: P) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        P: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(eval), partials: Some(Arc::new(partials)) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    /// Raw evaluation without the antisymmetry gate.
    pub fn eval_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        (self.eval)(x)
    }

    /// `d_m J(x)` for each coordinate `m`, analytic or centered differences.
    pub fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match &self.partials {
            Some(p) => p(x),
            None => {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                let mut out = Vec::with_capacity(self.dim);
                for m in 0..self.dim {
                    let h = FD_STEP_SCALE * (1.0 + x[m].abs());
                    xp[m] = x[m] + h;
                    xm[m] = x[m] - h;
                    let diff = ((self.eval)(&xp) - (self.eval)(&xm)) / (2.0 * h);
                    out.push(diff);
                    xp[m] = x[m];
                    xm[m] = x[m];
                }
                out
            }
        }
    }
}

/// A noncanonical Hamiltonian system: operator, Hamiltonian, Casimirs, and
/// an optional measure density (identity when the coordinates already span
/// the invariant measure).
#[derive(Clone)]
pub struct HamiltonianSystem {
    pub operator: PoissonOperatorField,
    pub hamiltonian: ScalarField,
    pub casimirs: Vec<ScalarField>,
    pub measure: Option<MeasureDensity>,
}

impl HamiltonianSystem {
    pub fn new(
        operator: PoissonOperatorField,
        hamiltonian: ScalarField,
        casimirs: Vec<ScalarField>,
    ) -> Self {
        Self { operator, hamiltonian, casimirs, measure: None }
    }

    pub fn with_measure(mut self, measure: MeasureDensity) -> Self {
        self.measure = Some(measure);
        self
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn measure_value(&self, x: &[f64]) -> f64 {
        match &self.measure {
            Some(m) => m.value(x),
            None => 1.0,
        }
    }

    pub fn has_identity_measure(&self) -> bool {
        self.measure.is_none()
    }
}

/// Evaluates `J(x)` and enforces the antisymmetry gate.
pub fn eval_poisson(sys: &HamiltonianSystem, x: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(sys.dim(), x.len())?;
    check_finite(x)?;
    let j = sys.operator.eval_unchecked(x);
    let n = sys.dim();
    let mut max_violation = 0.0_f64;
    for i in 0..n {
        for k in i..n {
            max_violation = max_violation.max((j[(i, k)] + j[(k, i)]).abs());
        }
    }
    if max_violation > ANTISYMMETRY_TOL {
        return Err(Error::AntisymmetryViolation {
            max_violation,
            tolerance: ANTISYMMETRY_TOL,
        });
    }
    Ok(j)
}

/// Max antisymmetry defect `max_ij |J^ij + J^ji|` without the gate.
pub fn antisymmetry_violation(sys: &HamiltonianSystem, x: &[f64]) -> f64 {
    let j = sys.operator.eval_unchecked(x);
    let n = sys.dim();
    let mut m = 0.0_f64;
    for i in 0..n {
        for k in i..n {
            m = m.max((j[(i, k)] + j[(k, i)]).abs());
        }
    }
    m
}

/// Max over (i,j,k) of the cyclic sum `J^im d_m J^jk + J^jm d_m J^ki + J^km d_m J^ij`.
pub fn jacobi_residual(sys: &HamiltonianSystem, x: &[f64]) -> Result<f64> {
    check_dim(sys.dim(), x.len())?;
    check_finite(x)?;
    let n = sys.dim();
    let j = sys.operator.eval_unchecked(x);
    let dj = sys.operator.partials(x);
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let mut sum = 0.0;
                for m in 0..n {
                    sum += j[(a, m)] * dj[m][(b, c)]
                        + j[(b, m)] * dj[m][(c, a)]
                        + j[(c, m)] * dj[m][(a, b)];
                }
                worst = worst.max(sum.abs());
            }
        }
    }
    Ok(worst)
}

/// The vector `J(x) grad C^k(x)`; zero for a true Casimir.
pub fn casimir_residual(sys: &HamiltonianSystem, k: usize, x: &[f64]) -> Result<Vec<f64>> {
    if k >= sys.casimirs.len() {
        return Err(Error::CasimirIndex { index: k, count: sys.casimirs.len() });
    }
    let j = eval_poisson(sys, x)?;
    let grad = DVector::from_vec(sys.casimirs[k].gradient(x));
    Ok((j * grad).iter().copied().collect())
}

/// The length-n vector `sum_i d_i (J_m J^ij)`, the invariant-measure defect.
pub fn divergence_residual(sys: &HamiltonianSystem, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(sys.dim(), x.len())?;
    check_finite(x)?;
    let n = sys.dim();
    let mut out = vec![0.0; n];
    match (&sys.measure, sys.operator.has_analytic_partials()) {
        // Identity measure and analytic partials: contract them directly.
        (None, true) => {
            let dj = sys.operator.partials(x);
            for col in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += dj[i][(i, col)];
                }
                out[col] = s;
            }
        }
        // Otherwise difference the product J_m(x) J(x) per coordinate.
        _ => {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for i in 0..n {
                let h = FD_STEP_SCALE * (1.0 + x[i].abs());
                xp[i] = x[i] + h;
                xm[i] = x[i] - h;
                let jp = sys.operator.eval_unchecked(&xp) * sys.measure_value(&xp);
                let jm = sys.operator.eval_unchecked(&xm) * sys.measure_value(&xm);
                for col in 0..n {
                    out[col] += (jp[(i, col)] - jm[(i, col)]) / (2.0 * h);
                }
                xp[i] = x[i];
                xm[i] = x[i];
            }
        }
    }
    Ok(out)
}

/// Microscopic Poisson bracket `{a,b}_m = a_i J^ij b_j` at `x`.
pub fn micro_poisson_bracket(
    a: &ScalarField,
    b: &ScalarField,
    sys: &HamiltonianSystem,
    x: &[f64],
) -> Result<f64> {
    let j = eval_poisson(sys, x)?;
    let ga = DVector::from_vec(a.gradient(x));
    let gb = DVector::from_vec(b.gradient(x));
    Ok((ga.transpose() * j * gb)[(0, 0)])
}

/// Microscopic dissipative bracket `[a,b]_m = a_i J^ik J^jk b_j` at `x`.
///
/// Computed in the factored form `(J^T grad a) . (J^T grad b)` so that
/// `[a,a]_m` is a sum of squares and non-negativity is exact.
pub fn micro_dissipative_bracket(
    a: &ScalarField,
    b: &ScalarField,
    sys: &HamiltonianSystem,
    x: &[f64],
) -> Result<f64> {
    let j = eval_poisson(sys, x)?;
    let ga = DVector::from_vec(a.gradient(x));
    let gb = DVector::from_vec(b.gradient(x));
    let ta = j.transpose() * ga;
    let tb = j.transpose() * gb;
    Ok(ta.dot(&tb))
}

/// The induced metric `g = J J^T` (symmetric positive-semidefinite).
pub fn metric_tensor(sys: &HamiltonianSystem, x: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(sys.dim(), x.len())?;
    check_finite(x)?;
    let j = sys.operator.eval_unchecked(x);
    Ok(&j * j.transpose())
}

/// Numerical rank of `J(x)` with relative singular-value cutoff 1e-10.
///
/// Errors when a singular value falls within a factor 10 of the cutoff,
/// so callers never silently act on an ambiguous rank.
pub fn operator_rank(sys: &HamiltonianSystem, x: &[f64]) -> Result<usize> {
    check_dim(sys.dim(), x.len())?;
    check_finite(x)?;
    let j = sys.operator.eval_unchecked(x);
    let svals = j.singular_values();
    let smax = svals.iter().fold(0.0_f64, |m, &v| m.max(v));
    if smax == 0.0 {
        return Ok(0);
    }
    let cutoff = RANK_CUTOFF * smax;
    let mut rank = 0;
    for &s in svals.iter() {
        if s > cutoff * 10.0 {
            rank += 1;
        } else if s > cutoff / 10.0 {
            return Err(Error::RankAmbiguous { value: s, cutoff });
        }
    }
    Ok(rank)
}

/// Unperturbed drift `J(x) grad H(x)`.
pub fn hamiltonian_drift(sys: &HamiltonianSystem, x: &[f64]) -> Result<Vec<f64>> {
    let j = eval_poisson(sys, x)?;
    let gh = DVector::from_vec(sys.hamiltonian.gradient(x));
    Ok((j * gh).iter().copied().collect())
}

/// Classic RK4 on `dx/dt = rhs(x)`.
pub fn rk4_step<F>(rhs: F, x: &[f64], dt: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let k1 = rhs(x);
    let mut tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * k1[i]).collect();
    let k2 = rhs(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    let k3 = rhs(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    let k4 = rhs(&tmp);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates the unperturbed flow `dx/dt = J grad H` with RK4.
pub fn integrate_hamiltonian(
    sys: &HamiltonianSystem,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    check_dim(sys.dim(), x0.len())?;
    check_finite(x0)?;
    let rhs = |x: &[f64]| -> Vec<f64> {
        let j = sys.operator.eval_unchecked(x);
        let gh = DVector::from_vec(sys.hamiltonian.gradient(x));
        (j * gh).iter().copied().collect()
    };
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = rk4_step(rhs, &x, dt);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn canonical_operator_matrix() {
        let sys = systems::canonical_2d();
        let j = eval_poisson(&sys, &[0.3, 0.5]).unwrap();
        assert_eq!(j[(0, 0)], 0.0);
        assert_eq!(j[(0, 1)], -1.0);
        assert_eq!(j[(1, 0)], 1.0);
        assert_eq!(j[(1, 1)], 0.0);
    }

    #[test]
    fn rigid_body_operator_matrix() {
        let sys = systems::rigid_body();
        let j = eval_poisson(&sys, &[1.0, 2.0, 3.0]).unwrap();
        let expected = [[0.0, 3.0, -2.0], [-3.0, 0.0, 1.0], [2.0, -1.0, 0.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(j[(i, k)], expected[i][k]);
            }
        }
    }

    #[test]
    fn nan_point_rejected() {
        let sys = systems::canonical_2d();
        assert!(matches!(
            eval_poisson(&sys, &[f64::NAN, 0.0]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let sys = systems::canonical_2d();
        assert!(matches!(
            eval_poisson(&sys, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jacobi_constant_operator_vanishes() {
        let sys = systems::canonical_2d();
        assert_eq!(jacobi_residual(&sys, &[0.7, -0.2]).unwrap(), 0.0);
    }

    #[test]
    fn jacobi_rigid_body_vanishes() {
        let sys = systems::rigid_body();
        assert!(jacobi_residual(&sys, &[1.0, 2.0, 3.0]).unwrap() <= 1e-10);
    }

    #[test]
    fn jacobi_corrupted_operator_positive() {
        let sys = systems::corrupted_demo();
        // Brute-force cyclic sum at x = (1,2,3): J12 = x1*x2 breaks Jacobi.
        assert!(jacobi_residual(&sys, &[1.0, 2.0, 3.0]).unwrap() > 1e-3);
    }

    #[test]
    fn casimir_residual_rigid_body_zero() {
        let sys = systems::rigid_body();
        let r = casimir_residual(&sys, 0, &[0.4, -1.1, 2.0]).unwrap();
        let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-14);
    }

    #[test]
    fn canonical_candidate_casimir_rejected() {
        // Candidate C = p on the canonical system: J grad C = (0, 1).
        let mut sys = systems::canonical_2d();
        sys.casimirs.push(ScalarField::with_gradient(|x| x[0], |_| vec![1.0, 0.0]));
        let r = casimir_residual(&sys, 0, &[0.2, 0.9]).unwrap();
        assert!((r[0] - 0.0).abs() < 1e-14);
        assert!((r[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn casimir_index_out_of_range() {
        let sys = systems::canonical_2d();
        assert!(matches!(
            casimir_residual(&sys, 0, &[0.0, 0.0]),
            Err(Error::CasimirIndex { .. })
        ));
    }

    #[test]
    fn divergence_residual_zero_for_builtins() {
        for sys in [systems::canonical_2d(), systems::rigid_body()] {
            let x: Vec<f64> = (0..sys.dim()).map(|i| 0.3 * (i as f64 + 1.0)).collect();
            let r = divergence_residual(&sys, &x).unwrap();
            for v in r {
                assert!(v.abs() <= 1e-12, "divergence defect {v}");
            }
        }
    }

    #[test]
    fn micro_bracket_canonical_q_p() {
        let sys = systems::canonical_2d();
        // Coordinates are (p, q); {q, p} = 1 at every point.
        let q = ScalarField::with_gradient(|x| x[1], |_| vec![0.0, 1.0]);
        let p = ScalarField::with_gradient(|x| x[0], |_| vec![1.0, 0.0]);
        let v = micro_poisson_bracket(&q, &p, &sys, &[0.3, 0.4]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        // Alternativity and antisymmetry.
        assert_eq!(micro_poisson_bracket(&p, &p, &sys, &[0.3, 0.4]).unwrap(), 0.0);
        let w = micro_poisson_bracket(&p, &q, &sys, &[0.3, 0.4]).unwrap();
        assert!((v + w).abs() < 1e-15);
    }

    #[test]
    fn micro_dissipative_canonical_p_p() {
        let sys = systems::canonical_2d();
        let p = ScalarField::with_gradient(|x| x[0], |_| vec![1.0, 0.0]);
        let v = micro_dissipative_bracket(&p, &p, &sys, &[1.5, -0.2]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let c = ScalarField::with_gradient(|_| 3.0, |_| vec![0.0, 0.0]);
        assert_eq!(micro_dissipative_bracket(&c, &p, &sys, &[1.5, -0.2]).unwrap(), 0.0);
    }

    #[test]
    fn micro_dissipative_casimir_in_kernel() {
        let sys = systems::rigid_body();
        let c = sys.casimirs[0].clone();
        let v = micro_dissipative_bracket(&c, &c, &sys, &[1.0, -2.0, 0.5]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn metric_tensor_values() {
        let sys = systems::canonical_2d();
        let g = metric_tensor(&sys, &[0.1, 0.2]).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));

        let sys = systems::rigid_body();
        let g = metric_tensor(&sys, &[1.0, 2.0, 3.0]).unwrap();
        let expected = [[13.0, -2.0, -3.0], [-2.0, 10.0, -6.0], [-3.0, -6.0, 5.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert!((g[(i, k)] - expected[i][k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn metric_kernel_contains_casimir_gradient() {
        let sys = systems::rigid_body();
        let x = [0.7, -0.4, 1.3];
        let g = metric_tensor(&sys, &x).unwrap();
        let gc = DVector::from_vec(sys.casimirs[0].gradient(&x));
        assert!((g * gc).norm() <= 1e-10);
    }

    #[test]
    fn ranks() {
        let canonical = systems::canonical_2d();
        assert_eq!(operator_rank(&canonical, &[0.0, 0.0]).unwrap(), 2);
        let rigid = systems::rigid_body();
        assert_eq!(operator_rank(&rigid, &[1.0, 2.0, 3.0]).unwrap(), 2);
        assert_eq!(operator_rank(&rigid, &[0.0, 0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn zero_operator_metric_is_zero() {
        let op = PoissonOperatorField::new(2, |_| DMatrix::zeros(2, 2));
        let sys = HamiltonianSystem::new(op, ScalarField::new(|_| 0.0), vec![]);
        let g = metric_tensor(&sys, &[1.0, 1.0]).unwrap();
        assert_eq!(g, DMatrix::zeros(2, 2));
    }

    #[test]
    fn rk4_conserves_energy_canonical() {
        let sys = systems::canonical_2d();
        let x0 = [1.0, 0.0];
        let h0 = sys.hamiltonian.value(&x0);
        let x = integrate_hamiltonian(&sys, &x0, 1e-3, 1000).unwrap();
        let h1 = sys.hamiltonian.value(&x);
        assert!(((h1 - h0) / h0).abs() <= 1e-8);
    }

    #[test]
    fn rk4_conserves_energy_rigid_body() {
        let sys = systems::rigid_body();
        let x0 = [1.0, 0.5, -0.7];
        let h0 = sys.hamiltonian.value(&x0);
        let x = integrate_hamiltonian(&sys, &x0, 1e-3, 1000).unwrap();
        let h1 = sys.hamiltonian.value(&x);
        assert!(((h1 - h0) / h0).abs() <= 1e-8);
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let f = ScalarField::with_gradient(
            |x| x[0] * x[0] * x[1] + x[1].sin(),
            |x| vec![2.0 * x[0] * x[1], x[0] * x[0] + x[1].cos()],
        );
        assert!(f.gradient_consistency(&[0.7, -1.2]) < 1e-6);
    }
}
