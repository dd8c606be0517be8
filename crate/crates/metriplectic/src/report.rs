//! Identity-check suites over registered systems, with JSON-serializable
//! reports. These drive the `verify` and `verify-brackets` CLI subcommands
//! and the acceptance tests.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::sync::Arc;

use crate::brackets::{axiom_suite, AxiomReport, Functional};
use crate::chm;
use crate::error::{Error, Result};
use crate::fpe::{FluxScheme, FpeProblem};
use crate::grid::{GridDistribution, PhaseGrid};
use crate::poisson::{self, ScalarField};
use crate::systems::SystemHandle;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_violation: f64,
    /// None marks an informational check with no asserted target.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub system: String,
    pub states: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

fn gated(name: &str, violation: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        max_violation: violation,
        tolerance: Some(tol),
        pass: violation <= tol,
    }
}

fn informational(name: &str, violation: f64) -> CheckResult {
    CheckResult { name: name.into(), max_violation: violation, tolerance: None, pass: true }
}

fn random_states(dim: usize, sigma: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Random polynomial scalar fields for the micro-bracket duality checks.
fn random_quadratic_fields(dim: usize, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let lin: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let quad: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let n = dim;
            let (l2, q2) = (lin.clone(), quad.clone());
            ScalarField::with_gradient(
                move |x: &[f64]| {
                    let mut v = 0.0;
                    for i in 0..n {
                        v += lin[i] * x[i];
                        for j in 0..n {
                            v += quad[i * n + j] * x[i] * x[j];
                        }
                    }
                    v
                },
                move |x: &[f64]| {
                    (0..n)
                        .map(|i| {
                            let mut g = l2[i];
                            for j in 0..n {
                                g += q2[i * n + j] * x[j] + q2[j * n + i] * x[j];
                            }
                            g
                        })
                        .collect()
                },
            )
        })
        .collect()
}

/// Runs the algebraic identity suite on a registered system at random states.
pub fn verify_system(handle: &SystemHandle, states: usize, seed: u64) -> Result<VerifyReport> {
    let sys = &handle.system;
    let dim = sys.dim();
    let points = random_states(dim, handle.sample_sigma, states, seed);
    let mut checks = Vec::new();

    // Antisymmetry of the operator.
    let mut antisym = 0.0_f64;
    for x in &points {
        antisym = antisym.max(poisson::antisymmetry_violation(sys, x));
    }
    checks.push(gated("antisymmetry", antisym, 1e-14));

    // Jacobi identity: interior triads for the spectral truncation, the full
    // cyclic sum otherwise.
    if let Some(trunc) = &handle.chm {
        let mut interior = 0.0_f64;
        let mut boundary = 0.0_f64;
        for x in &points {
            let phi = trunc.complex_from_real(x);
            interior = interior.max(trunc.interior_triad_residual(&phi));
            boundary = boundary.max(trunc.boundary_triad_residual(&phi));
        }
        checks.push(gated("jacobi (interior triads)", interior, 1e-8));
        checks.push(informational("jacobi (boundary triads, truncation artifact)", boundary));
    } else {
        let tol = if sys.operator.has_analytic_partials() { 1e-8 } else { 1e-5 };
        let mut jacobi = 0.0_f64;
        for x in &points {
            jacobi = jacobi.max(poisson::jacobi_residual(sys, x)?);
        }
        checks.push(gated("jacobi", jacobi, tol));
    }

    // Casimir degeneracy J grad C = 0 and the metric kernel g grad C = 0.
    if !sys.casimirs.is_empty() {
        let mut casimir = 0.0_f64;
        let mut kernel = 0.0_f64;
        for x in &points {
            let g = poisson::metric_tensor(sys, x)?;
            for k in 0..sys.casimirs.len() {
                let r = poisson::casimir_residual(sys, k, x)?;
                casimir = casimir.max(r.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
                let gc = &g * DVector::from_vec(sys.casimirs[k].gradient(x));
                kernel = kernel.max(gc.amax());
            }
        }
        checks.push(gated("casimir residual", casimir, 1e-12));
        checks.push(gated("metric kernel (g grad C)", kernel, 1e-10));
    }

    // Invariant measure (Liouville) condition.
    let div_tol = if sys.operator.has_analytic_partials() { 1e-12 } else { 1e-5 };
    let mut divergence = 0.0_f64;
    for x in &points {
        let r = poisson::divergence_residual(sys, x)?;
        divergence = divergence.max(r.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    checks.push(gated("divergence (invariant measure)", divergence, div_tol));

    // Metric tensor equals the explicit contraction.
    let mut metric = 0.0_f64;
    for x in &points {
        let g = poisson::metric_tensor(sys, x)?;
        let j = sys.operator.eval_unchecked(x);
        for i in 0..dim {
            for l in 0..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += j[(i, k)] * j[(l, k)];
                }
                metric = metric.max((g[(i, l)] - s).abs());
            }
        }
    }
    checks.push(gated("metric = J J^T contraction", metric, 1e-14));

    // Rank evenness (states with ambiguous rank are skipped).
    let mut odd_ranks = 0usize;
    for x in &points {
        if let Ok(rank) = poisson::operator_rank(sys, x) {
            if rank % 2 != 0 {
                odd_ranks += 1;
            }
        }
    }
    checks.push(gated("rank evenness", odd_ranks as f64, 0.0));

    // Micro-bracket duality on random polynomial fields.
    let fields = random_quadratic_fields(dim, 4, seed ^ 0x5eed);
    let mut duality = 0.0_f64;
    for x in points.iter().take(10) {
        for a in &fields {
            for b in &fields {
                let pb = poisson::micro_poisson_bracket(a, b, sys, x)?;
                let pb_t = poisson::micro_poisson_bracket(b, a, sys, x)?;
                let db = poisson::micro_dissipative_bracket(a, b, sys, x)?;
                let db_t = poisson::micro_dissipative_bracket(b, a, sys, x)?;
                let scale = pb.abs().max(db.abs()).max(1.0);
                duality = duality.max((pb + pb_t).abs() / scale);
                duality = duality.max((db - db_t).abs() / scale);
            }
            // Non-negativity of the dissipative square.
            duality = duality.max((-poisson::micro_dissipative_bracket(a, a, sys, x)?).max(0.0));
        }
    }
    checks.push(gated("micro-bracket duality", duality, 1e-12));

    // Gradient consistency of supplied analytic gradients.
    let mut grad = 0.0_f64;
    for x in points.iter().take(10) {
        grad = grad.max(sys.hamiltonian.gradient_consistency(x));
        for c in &sys.casimirs {
            grad = grad.max(c.gradient_consistency(x));
        }
    }
    checks.push(gated("analytic gradient consistency", grad, 1e-6));

    // Unperturbed flow conserves H (RK4, unit time, dt = 1e-3).
    let x0: Vec<f64> = points[0].clone();
    let h0 = sys.hamiltonian.value(&x0);
    let xt = poisson::integrate_hamiltonian(sys, &x0, 1e-3, 1000)?;
    let h1 = sys.hamiltonian.value(&xt);
    let drift = if h0.abs() > 1e-14 { ((h1 - h0) / h0).abs() } else { (h1 - h0).abs() };
    checks.push(gated("energy conservation (RK4, unit time)", drift, 1e-8));

    if let Some(trunc) = &handle.chm {
        // Reality preservation, dual-path equivalence, Liouville trace.
        let mut dual = 0.0_f64;
        let mut reality = 0.0_f64;
        let mut liouville = 0.0_f64;
        for x in points.iter().take(10) {
            let phi = trunc.complex_from_real(x);
            reality = reality.max(chm::reality_violation(trunc, &phi));
            let conv = trunc.rhs_convolution(&phi);
            let oper = trunc.rhs_operator_complex(&phi);
            let scale = conv.iter().map(|v| v.norm()).fold(1.0_f64, f64::max);
            for i in 0..conv.len() {
                dual = dual.max((conv[i] - oper[i]).norm() / scale);
            }
            liouville = liouville.max(trunc.liouville_trace_fd(x).abs());
        }
        checks.push(gated("reality constraint", reality, 1e-13));
        checks.push(gated("dual-path rhs equivalence", dual, 1e-12));
        checks.push(gated("liouville trace (finite difference)", liouville, 1e-8));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { system: handle.name.clone(), states, seed, checks, pass })
}

/// Standard fixture for the bracket axiom suite: an equilibrium plus two
/// offset Gaussians, all decaying to nothing at the box boundary, and
/// low-degree coordinate-polynomial functionals.
pub fn bracket_fixture(prob: &FpeProblem) -> Result<(Vec<GridDistribution>, Vec<Functional>)> {
    let grid = &prob.grid;
    let dim = grid.dim();
    // Pick beta so the equilibrium is ~1e-17 at the lowest-energy boundary
    // cell; boundary rows of the difference stencil then carry no weight.
    let h = prob.hamiltonian_field();
    let mut h_boundary = f64::INFINITY;
    for c in 0..grid.ncells() {
        if grid.is_boundary(c) {
            h_boundary = h_boundary.min(h[c]);
        }
    }
    if !(h_boundary > 0.0) {
        return Err(Error::InvalidArgument(
            "bracket fixture needs a confining Hamiltonian (H > 0 on the boundary)".into(),
        ));
    }
    let beta_fix = 38.0 / h_boundary;
    let (feq, _) = prob.equilibrium(beta_fix, &vec![0.0; prob.casimir_fields().len()])?;

    let half: Vec<f64> = (0..dim).map(|a| 0.5 * (grid.axis(a).max - grid.axis(a).min)).collect();
    let mid: Vec<f64> = (0..dim).map(|a| 0.5 * (grid.axis(a).max + grid.axis(a).min)).collect();
    let gauss = |center: Vec<f64>, sigma: Vec<f64>| {
        GridDistribution::normalized_from(grid.clone(), move |x| {
            let mut e = 0.0;
            for a in 0..x.len() {
                let d = x[a] - center[a];
                e += d * d / (2.0 * sigma[a] * sigma[a]);
            }
            (-e).exp()
        })
    };
    let sigma: Vec<f64> = half.iter().map(|h| h / 9.0).collect();
    let c1: Vec<f64> = (0..dim).map(|a| mid[a] + 0.1 * half[a]).collect();
    let c2: Vec<f64> = (0..dim).map(|a| mid[a] - 0.08 * half[a] * (a as f64 + 1.0)).collect();
    let distributions = vec![feq, gauss(c1, sigma.clone())?, gauss(c2, sigma)?];

    let mut functionals = vec![
        Functional::linear("x0", grid.field_from(|x| x[0])),
        Functional::linear("x1", grid.field_from(|x| x[1])),
        Functional::linear("x0+2x1", grid.field_from(|x| x[0] + 2.0 * x[1])),
        Functional::linear("x0*x1", grid.field_from(|x| x[0] * x[1])),
        Functional::linear("x0^2-x1^2", grid.field_from(|x| x[0] * x[0] - x[1] * x[1])),
    ];
    if dim == 3 {
        functionals.push(Functional::linear("x2", grid.field_from(|x| x[2])));
        functionals.push(Functional::linear("x0*x2", grid.field_from(|x| x[0] * x[2])));
    }
    Ok((distributions, functionals))
}

/// Runs the bracket axiom suite for a grid-representable system.
pub fn verify_brackets(handle: &SystemHandle, cells_per_axis: usize, d: f64) -> Result<AxiomReport> {
    let dim = handle.system.dim();
    if !(2..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!(
            "bracket verification needs a 2- or 3-dimensional system, `{}` has {dim}",
            handle.name
        )));
    }
    let (lo, hi) = &handle.default_box;
    let cells = vec![cells_per_axis; dim];
    let grid = Arc::new(PhaseGrid::new(lo, hi, &cells)?);
    let prob = FpeProblem::new(&handle.system, grid, d, FluxScheme::Centered)?;
    let (distributions, functionals) = bracket_fixture(&prob)?;
    axiom_suite(&prob, &handle.name, &distributions, &functionals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn builtin_systems_verify_clean() {
        for name in ["canonical2d", "rigid-body"] {
            let handle = systems::build(name, 0, 0.0).unwrap();
            let report = verify_system(&handle, 25, 7).unwrap();
            for c in &report.checks {
                assert!(c.pass, "{name}: {} violated with {:.3e}", c.name, c.max_violation);
            }
        }
    }

    #[test]
    fn chm_verifies_clean() {
        let handle = systems::build("chm", 2, 0.5).unwrap();
        let report = verify_system(&handle, 10, 3).unwrap();
        for c in &report.checks {
            assert!(c.pass, "chm: {} violated with {:.3e}", c.name, c.max_violation);
        }
    }

    #[test]
    fn corrupted_system_fails_jacobi() {
        let handle = systems::build("corrupted-demo", 0, 0.0).unwrap();
        let report = verify_system(&handle, 25, 7).unwrap();
        assert!(!report.pass);
        let jacobi = report.checks.iter().find(|c| c.name == "jacobi").unwrap();
        assert!(!jacobi.pass);
    }

    #[test]
    fn bracket_verification_passes_canonical() {
        let handle = systems::build("canonical2d", 0, 0.0).unwrap();
        let report = verify_brackets(&handle, 48, 0.2).unwrap();
        for c in &report.checks {
            assert!(c.pass, "{}: {:.3e}", c.axiom, c.max_violation);
        }
    }
}
