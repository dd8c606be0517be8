//! Macroscopic Poisson and dissipative brackets on grid functionals.
//!
//! A functional is a (value map, derivative-field map) pair; the brackets
//! are quadratures of the discrete gradients of the derivative fields
//! contracted with the operator `J` or the induced metric `g = J J^T`:
//!
//! `{F,G} = integral f (d_i dF/df) J^ij (d_j dG/df) dV`
//! `[F,G] = (D/2) integral f (d_i dF/df) J^ik J^jk (d_j dG/df) dV`
//!
//! `metriplectic_rhs` transcribes `{f,E} + [f,Sigma]` through the exact
//! transpose of the difference operators (the discrete integration-by-parts
//! step), which reproduces the flux-form Fokker-Planck right-hand side.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fpe::FpeProblem;
use crate::grid::{GridDistribution, LOG_FLOOR};

type ValueFn = dyn Fn(&GridDistribution) -> f64 + Send + Sync;
type DerivativeFn = dyn Fn(&GridDistribution) -> Vec<f64> + Send + Sync;

/// A differentiable functional of the distribution.
#[derive(Clone)]
pub struct Functional {
    pub name: String,
    value: Arc<ValueFn>,
    derivative: Arc<DerivativeFn>,
}

impl Functional {
    pub fn new<V, D>(name: &str, value: V, derivative: D) -> Self
    where
        V: Fn(&GridDistribution) -> f64 + Send + Sync + 'static,
        D: Fn(&GridDistribution) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { name: name.into(), value: Arc::new(value), derivative: Arc::new(derivative) }
    }

    /// A linear functional `F[f] = integral f w dV` with fixed field `w`.
    pub fn linear(name: &str, field: Vec<f64>) -> Self {
        let w = Arc::new(field);
        let wv = w.clone();
        Self::new(
            name,
            move |f: &GridDistribution| f.expectation(&wv),
            move |_| w.as_ref().clone(),
        )
    }

    pub fn value(&self, f: &GridDistribution) -> f64 {
        (self.value)(f)
    }

    pub fn derivative(&self, f: &GridDistribution) -> Vec<f64> {
        (self.derivative)(f)
    }

    /// Relative defect between `(F[f+eh] - F[f-eh])/2e` and the pairing
    /// `integral (dF/df) h dV` for a perturbation field `h`.
    pub fn derivative_consistency(&self, f: &GridDistribution, h: &[f64], eps: f64) -> f64 {
        let perturb = |sign: f64| {
            let values: Vec<f64> =
                f.values.iter().zip(h.iter()).map(|(v, p)| v + sign * eps * p).collect();
            GridDistribution { grid: f.grid.clone(), values, time: f.time }
        };
        let fd = (self.value(&perturb(1.0)) - self.value(&perturb(-1.0))) / (2.0 * eps);
        let pairing = {
            let d = self.derivative(f);
            d.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume()
        };
        (fd - pairing).abs() / pairing.abs().max(fd.abs()).max(1e-12)
    }
}

/// The macroscopic observables N, E, C^k, S, Sigma with their multipliers.
pub struct ObservableSet {
    pub number: Functional,
    pub energy: Functional,
    pub casimirs: Vec<Functional>,
    pub entropy: Functional,
    pub sigma: Functional,
    pub alpha: f64,
    pub beta: f64,
    pub mu: Vec<f64>,
}

/// Builds the observables for a problem at given multipliers.
/// `alpha = log Z - 1` normally comes from the equilibrium quadrature.
pub fn observables(prob: &FpeProblem, alpha: f64, beta: f64, mu: &[f64]) -> Result<ObservableSet> {
    if mu.len() != prob.casimir_fields().len() {
        return Err(Error::InvalidArgument(format!(
            "{} multipliers for {} Casimirs",
            mu.len(),
            prob.casimir_fields().len()
        )));
    }
    let ncells = prob.grid.ncells();
    let number = Functional::new(
        "N",
        |f: &GridDistribution| f.mass(),
        move |_| vec![1.0; ncells],
    );
    let energy = Functional::linear("E", prob.hamiltonian_field().to_vec());
    let casimirs: Vec<Functional> = prob
        .casimir_fields()
        .iter()
        .enumerate()
        .map(|(k, ck)| Functional::linear(&format!("C{}", k + 1), ck.clone()))
        .collect();
    let entropy = Functional::new(
        "S",
        |f: &GridDistribution| f.entropy(),
        |f: &GridDistribution| {
            f.values.iter().map(|&v| -(v.max(LOG_FLOOR).ln() + 1.0)).collect()
        },
    );

    let h = prob.hamiltonian_field().to_vec();
    let cks: Vec<Vec<f64>> = prob.casimir_fields().to_vec();
    let mu_owned = mu.to_vec();
    let (a, b) = (alpha, beta);
    let mu_v = mu_owned.clone();
    let sigma_value = move |f: &GridDistribution| {
        let mut s = f.entropy() - a * f.mass() - b * f.expectation(&h);
        for (m, ck) in mu_v.iter().zip(cks.iter()) {
            s -= m * f.expectation(ck);
        }
        s
    };
    let h2 = prob.hamiltonian_field().to_vec();
    let cks2: Vec<Vec<f64>> = prob.casimir_fields().to_vec();
    let sigma_derivative = move |f: &GridDistribution| {
        let mut d: Vec<f64> = f
            .values
            .iter()
            .zip(h2.iter())
            .map(|(&v, &hc)| -(v.max(LOG_FLOOR).ln() + 1.0) - a - b * hc)
            .collect();
        for (m, ck) in mu_owned.iter().zip(cks2.iter()) {
            for (dv, cv) in d.iter_mut().zip(ck.iter()) {
                *dv -= m * cv;
            }
        }
        d
    };
    let sigma = Functional::new("Sigma", sigma_value, sigma_derivative);

    Ok(ObservableSet {
        number,
        energy,
        casimirs,
        entropy,
        sigma,
        alpha,
        beta,
        mu: mu.to_vec(),
    })
}

/// Contracts gradients of two derivative fields through `J` at every cell:
/// the integrand of the macroscopic Poisson bracket.
fn poisson_integrand(prob: &FpeProblem, u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = prob.dim();
    let gu = prob.grid.gradient(u);
    let gv = prob.grid.gradient(v);
    (0..prob.grid.ncells())
        .map(|c| {
            let jc = prob.operator_at(c);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gu[i][c] * jc[i * n + j] * gv[j][c];
                }
            }
            s
        })
        .collect()
}

/// `{F,G}` on a distribution.
pub fn poisson_bracket(prob: &FpeProblem, f: &GridDistribution, fa: &Functional, fb: &Functional) -> f64 {
    let u = fa.derivative(f);
    let v = fb.derivative(f);
    let w = poisson_integrand(prob, &u, &v);
    f.values
        .iter()
        .zip(w.iter())
        .map(|(fv, wv)| fv * wv)
        .sum::<f64>()
        * f.grid.cell_volume()
}

/// `[F,G]` on a distribution, in the factored `(J^T grad u).(J^T grad v)`
/// form so that `[F,F] >= 0` holds exactly.
pub fn dissipative_bracket(
    prob: &FpeProblem,
    f: &GridDistribution,
    fa: &Functional,
    fb: &Functional,
) -> f64 {
    let n = prob.dim();
    let u = fa.derivative(f);
    let v = fb.derivative(f);
    let gu = prob.grid.gradient(&u);
    let gv = prob.grid.gradient(&v);
    let mut total = 0.0;
    for c in 0..prob.grid.ncells() {
        let jc = prob.operator_at(c);
        let mut dot = 0.0;
        for k in 0..n {
            let mut au = 0.0;
            let mut av = 0.0;
            for i in 0..n {
                au += jc[i * n + k] * gu[i][c];
                av += jc[i * n + k] * gv[i][c];
            }
            dot += au * av;
        }
        total += f.values[c] * dot;
    }
    0.5 * prob.d * total * f.grid.cell_volume()
}

/// Metriplectic combination `(F, E, Sigma) = {F,E} + [F,Sigma]`.
pub fn metriplectic_bracket(
    prob: &FpeProblem,
    f: &GridDistribution,
    fa: &Functional,
    obs: &ObservableSet,
) -> f64 {
    poisson_bracket(prob, f, fa, &obs.energy) + dissipative_bracket(prob, f, fa, &obs.sigma)
}

/// `df/dt = {f,E} + [f,Sigma]` transcribed through the transpose of the
/// difference operators (the discrete adjoint of the bracket quadratures).
/// Must reproduce [`FpeProblem::fpe_rhs`] on the same grid.
pub fn metriplectic_rhs(prob: &FpeProblem, f: &GridDistribution, obs: &ObservableSet) -> Vec<f64> {
    let n = prob.dim();
    let g = &*prob.grid;
    let ncells = g.ncells();

    let ve = obs.energy.derivative(f);
    let vs = obs.sigma.derivative(f);
    let gve = g.gradient(&ve);
    let gvs = g.gradient(&vs);

    // w1^i = f (J grad dE/df)^i ; w2^i = (D/2) f (J J^T grad dSigma/df)^i.
    let mut w = vec![vec![0.0; ncells]; n];
    for c in 0..ncells {
        let jc = prob.operator_at(c);
        // t_k = sum_i J^ik (grad dSigma/df)_i
        let mut t = vec![0.0; n];
        for k in 0..n {
            for i in 0..n {
                t[k] += jc[i * n + k] * gvs[i][c];
            }
        }
        for i in 0..n {
            let mut adv = 0.0;
            let mut dis = 0.0;
            for k in 0..n {
                adv += jc[i * n + k] * gve[k][c];
                dis += jc[i * n + k] * t[k];
            }
            w[i][c] = f.values[c] * (adv + 0.5 * prob.d * dis);
        }
    }

    let mut rhs = vec![0.0; ncells];
    for (a, wa) in w.iter().enumerate() {
        let gt = g.gradient_axis_transpose(wa, a);
        for c in 0..ncells {
            rhs[c] += gt[c];
        }
    }
    rhs
}

/// One axiom check: name, worst violation, gate.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Report of the bracket axiom suite (P1-P5, D1-D4).
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub system: String,
    pub distributions: usize,
    pub functionals: usize,
    pub checks: Vec<AxiomCheck>,
    pub pass: bool,
}

fn push_check(checks: &mut Vec<AxiomCheck>, axiom: &str, violation: f64, tol: f64) {
    checks.push(AxiomCheck {
        axiom: axiom.into(),
        max_violation: violation,
        tolerance: tol,
        pass: violation <= tol,
    });
}

/// Runs the bracket axiom suite over sample distributions and linear-in-f
/// functionals (derivative fields independent of f, as the Jacobi check
/// requires).
pub fn axiom_suite(
    prob: &FpeProblem,
    system_name: &str,
    distributions: &[GridDistribution],
    functionals: &[Functional],
) -> Result<AxiomReport> {
    if distributions.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 sample distributions".into()));
    }
    if functionals.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 sample functionals".into()));
    }

    let mut bilinearity_p: f64 = 0.0;
    let mut alternativity: f64 = 0.0;
    let mut antisymmetry: f64 = 0.0;
    let mut leibniz_p: f64 = 0.0;
    let mut jacobi: f64 = 0.0;
    let mut bilinearity_d: f64 = 0.0;
    let mut negativity: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    let mut leibniz_d: f64 = 0.0;

    let (ca, cb) = (0.7, -1.3);

    for f in distributions {
        for fa in functionals {
            // P2 alternativity and D2 non-negativity.
            alternativity = alternativity.max(poisson_bracket(prob, f, fa, fa).abs());
            negativity = negativity.max(-dissipative_bracket(prob, f, fa, fa));

            for fb in functionals {
                let pb_ab = poisson_bracket(prob, f, fa, fb);
                let pb_ba = poisson_bracket(prob, f, fb, fa);
                antisymmetry = antisymmetry.max((pb_ab + pb_ba).abs());
                let db_ab = dissipative_bracket(prob, f, fa, fb);
                let db_ba = dissipative_bracket(prob, f, fb, fa);
                symmetry = symmetry.max((db_ab - db_ba).abs());

                for fc in functionals {
                    // P1/D1 bilinearity in the first slot with (ca, cb).
                    let ua = fa.derivative(f);
                    let ub = fb.derivative(f);
                    let comb: Vec<f64> = ua
                        .iter()
                        .zip(ub.iter())
                        .map(|(x, y)| ca * x + cb * y)
                        .collect();
                    let fcomb = Functional::linear("comb", comb);
                    let lhs = poisson_bracket(prob, f, &fcomb, fc);
                    let rhs = ca * poisson_bracket(prob, f, fa, fc)
                        + cb * poisson_bracket(prob, f, fb, fc);
                    bilinearity_p = bilinearity_p.max((lhs - rhs).abs());
                    let lhs_d = dissipative_bracket(prob, f, &fcomb, fc);
                    let rhs_d = ca * dissipative_bracket(prob, f, fa, fc)
                        + cb * dissipative_bracket(prob, f, fb, fc);
                    bilinearity_d = bilinearity_d.max((lhs_d - rhs_d).abs());

                    // P4/D4 Leibniz with FG the product functional: scalars
                    // F[f], G[f] multiply the brackets.
                    let fa_val = fa.value(f);
                    let fb_val = fb.value(f);
                    let prod_field: Vec<f64> = ua
                        .iter()
                        .zip(ub.iter())
                        .map(|(x, y)| fa_val * y + fb_val * x)
                        .collect();
                    let fprod = Functional::linear("prod", prod_field);
                    let scale =
                        (fa_val.abs() + fb_val.abs()).max(1.0) * pb_ab.abs().max(1.0);
                    let lhs_l = poisson_bracket(prob, f, &fprod, fc);
                    let rhs_l = fa_val * poisson_bracket(prob, f, fb, fc)
                        + poisson_bracket(prob, f, fa, fc) * fb_val;
                    leibniz_p = leibniz_p.max((lhs_l - rhs_l).abs() / scale);
                    let lhs_ld = dissipative_bracket(prob, f, &fprod, fc);
                    let rhs_ld = fa_val * dissipative_bracket(prob, f, fb, fc)
                        + dissipative_bracket(prob, f, fa, fc) * fb_val;
                    leibniz_d = leibniz_d.max((lhs_ld - rhs_ld).abs() / scale);

                    // P5 Jacobi on linear functionals: the derivative field
                    // of the inner bracket is its integrand.
                    let uc = fc.derivative(f);
                    let w_bc = poisson_integrand(prob, &ub, &uc);
                    let w_ca = poisson_integrand(prob, &uc, &ua);
                    let w_ab = poisson_integrand(prob, &ua, &ub);
                    let cyc = poisson_bracket(prob, f, fa, &Functional::linear("w", w_bc))
                        + poisson_bracket(prob, f, fb, &Functional::linear("w", w_ca))
                        + poisson_bracket(prob, f, fc, &Functional::linear("w", w_ab));
                    jacobi = jacobi.max(cyc.abs());
                }
            }
        }
    }

    let mut checks = Vec::new();
    push_check(&mut checks, "P1 bilinearity", bilinearity_p, 1e-10);
    push_check(&mut checks, "P2 alternativity", alternativity, 1e-10);
    push_check(&mut checks, "P3 antisymmetry", antisymmetry, 1e-10);
    push_check(&mut checks, "P4 Leibniz", leibniz_p, 1e-10);
    push_check(&mut checks, "P5 Jacobi (linear functionals)", jacobi, 1e-8);
    push_check(&mut checks, "D1 bilinearity", bilinearity_d, 1e-10);
    push_check(&mut checks, "D2 non-negativity", negativity, 1e-14);
    push_check(&mut checks, "D3 symmetry", symmetry, 1e-10);
    push_check(&mut checks, "D4 Leibniz", leibniz_d, 1e-10);
    let pass = checks.iter().all(|c| c.pass);
    Ok(AxiomReport {
        system: system_name.into(),
        distributions: distributions.len(),
        functionals: functionals.len(),
        checks,
        pass,
    })
}
