//! Named example systems and user-defined polynomial systems.
//!
//! The registry exposes systems addressable by string name from the CLI:
//! `canonical2d`, `rigid-body`, `corrupted-demo`, and `chm` (which takes a
//! truncation half-width `K` and drift parameter `c`). User-defined systems
//! are loaded from a TOML file giving the operator, Hamiltonian, and Casimir
//! coefficients as sparse polynomial term lists.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chm;
use crate::error::{Error, Result};
use crate::poisson::{HamiltonianSystem, MeasureDensity, PoissonOperatorField, ScalarField};

/// A registry entry: the system plus the metadata the CLI and verifier need
/// (sampling scale for random states, a default phase-space box for grids).
pub struct SystemHandle {
    pub name: String,
    pub system: HamiltonianSystem,
    /// Random verification states are drawn as N(0, sigma^2) per coordinate.
    pub sample_sigma: f64,
    /// Default rectangular domain for grid runs (min, max per axis).
    pub default_box: (Vec<f64>, Vec<f64>),
    /// Present when this is a spectral truncation; carries the mode table.
    pub chm: Option<chm::Truncation>,
}

/// Canonical 2D system: coordinates (p, q), J = [[0,-1],[1,0]],
/// H = (p^2 + q^2)/2, no Casimirs.
pub fn canonical_2d() -> HamiltonianSystem {
    let op = PoissonOperatorField::with_partials(
        2,
        |_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        |_| vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
    );
    let h = ScalarField::with_gradient(
        |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
        |x| vec![x[0], x[1]],
    );
    HamiltonianSystem::new(op, h, vec![])
}

/// Moments of inertia of the built-in rigid body.
pub const RIGID_BODY_INERTIA: [f64; 3] = [1.0, 2.0, 3.0];

fn rigid_body_operator(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.0, x[2], -x[1], -x[2], 0.0, x[0], x[1], -x[0], 0.0],
    )
}

fn rigid_body_partials(_x: &[f64]) -> Vec<DMatrix<f64>> {
    // d_m J^ij = eps^ijm.
    let d0 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0]);
    let d1 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let d2 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    vec![d0, d1, d2]
}

/// so(3) Lie-Poisson system: J^ij = eps^ijk x_k, H = sum x_i^2 / (2 I_i),
/// Casimir C = |x|^2 / 2.
pub fn rigid_body() -> HamiltonianSystem {
    let op = PoissonOperatorField::with_partials(3, rigid_body_operator, rigid_body_partials);
    let h = ScalarField::with_gradient(
        |x| {
            0.5 * (x[0] * x[0] / RIGID_BODY_INERTIA[0]
                + x[1] * x[1] / RIGID_BODY_INERTIA[1]
                + x[2] * x[2] / RIGID_BODY_INERTIA[2])
        },
        |x| {
            vec![
                x[0] / RIGID_BODY_INERTIA[0],
                x[1] / RIGID_BODY_INERTIA[1],
                x[2] / RIGID_BODY_INERTIA[2],
            ]
        },
    );
    let c = ScalarField::with_gradient(
        |x| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
        |x| x.to_vec(),
    );
    HamiltonianSystem::new(op, h, vec![c])
}

/// Fault-injection fixture: the rigid-body operator with J^12 replaced by
/// x^1 x^2. Still antisymmetric, but the Jacobi identity fails.
pub fn corrupted_demo() -> HamiltonianSystem {
    let op = PoissonOperatorField::new(3, |x| {
        let mut j = rigid_body_operator(x);
        j[(0, 1)] = x[0] * x[1];
        j[(1, 0)] = -x[0] * x[1];
        j
    });
    let h = ScalarField::with_gradient(
        |x| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
        |x| x.to_vec(),
    );
    HamiltonianSystem::new(op, h, vec![])
}

/// Builds a registry entry by name. `k`/`c` apply to `chm`; `file:<path>`
/// loads a polynomial system definition.
pub fn build(name: &str, k: usize, c: f64) -> Result<SystemHandle> {
    match name {
        "canonical2d" => Ok(SystemHandle {
            name: name.into(),
            system: canonical_2d(),
            sample_sigma: 1.0,
            default_box: (vec![-7.0, -7.0], vec![7.0, 7.0]),
            chm: None,
        }),
        "rigid-body" => Ok(SystemHandle {
            name: name.into(),
            system: rigid_body(),
            sample_sigma: 1.0,
            default_box: (vec![-4.0; 3], vec![4.0; 3]),
            chm: None,
        }),
        "corrupted-demo" => Ok(SystemHandle {
            name: name.into(),
            system: corrupted_demo(),
            sample_sigma: 1.0,
            default_box: (vec![-4.0; 3], vec![4.0; 3]),
            chm: None,
        }),
        "chm" => {
            let trunc = chm::Truncation::new(k, c)?;
            let system = chm::system(&trunc);
            Ok(SystemHandle {
                name: format!("chm(K={k}, c={c})"),
                system,
                sample_sigma: 0.2,
                default_box: (vec![], vec![]),
                chm: Some(trunc),
            })
        }
        other => {
            if let Some(path) = other.strip_prefix("file:") {
                return load_polynomial_system(Path::new(path));
            }
            Err(Error::UnknownSystem(other.into()))
        }
    }
}

/// Names the registry understands (besides `file:<path>`).
pub fn names() -> &'static [&'static str] {
    &["canonical2d", "rigid-body", "chm", "corrupted-demo"]
}

// ---------------------------------------------------------------------------
// Sparse polynomial systems loadable from config files.
// ---------------------------------------------------------------------------

/// One monomial `coeff * prod_i x_i^powers[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// A sparse polynomial on phase space.
#[derive(Debug, Clone)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if t.powers.len() != dim {
                return Err(Error::Config(format!(
                    "polynomial term has {} exponents, system dimension is {dim}",
                    t.powers.len()
                )));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| x[i].powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// The partial derivative with respect to coordinate `i`, as a polynomial.
    pub fn partial(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers[i] > 0)
            .map(|t| {
                let mut powers = t.powers.clone();
                let p = powers[i];
                powers[i] = p - 1;
                Term { coeff: t.coeff * p as f64, powers }
            })
            .collect();
        Polynomial { dim: self.dim, terms }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.partial(i).eval(x)).collect()
    }
}

fn scalar_field_from(poly: Polynomial) -> ScalarField {
    let grads: Vec<Polynomial> = (0..poly.dim).map(|i| poly.partial(i)).collect();
    let value = poly.clone();
    ScalarField::with_gradient(
        move |x| value.eval(x),
        move |x| grads.iter().map(|g| g.eval(x)).collect(),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoissonEntryConfig {
    i: usize,
    j: usize,
    terms: Vec<Term>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermListConfig {
    terms: Vec<Term>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolySystemConfig {
    name: String,
    dimension: usize,
    poisson: Vec<PoissonEntryConfig>,
    hamiltonian: TermListConfig,
    #[serde(default)]
    casimirs: Vec<TermListConfig>,
    #[serde(default)]
    measure: Option<TermListConfig>,
    #[serde(default)]
    sample_sigma: Option<f64>,
    #[serde(default)]
    box_min: Option<Vec<f64>>,
    #[serde(default)]
    box_max: Option<Vec<f64>>,
}

/// Loads a user-defined polynomial system from a TOML file. Only the upper
/// triangle of the operator is given; the lower triangle is the negation.
pub fn load_polynomial_system(path: &Path) -> Result<SystemHandle> {
    let text = std::fs::read_to_string(path)?;
    let cfg: PolySystemConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let n = cfg.dimension;
    if n == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }

    let mut entries: Vec<(usize, usize, Polynomial)> = Vec::new();
    for e in &cfg.poisson {
        if e.i >= n || e.j >= n || e.i == e.j {
            return Err(Error::Config(format!(
                "poisson entry ({}, {}) outside strict upper triangle of a {n}-dim operator",
                e.i, e.j
            )));
        }
        let (i, j, sign) = if e.i < e.j { (e.i, e.j, 1.0) } else { (e.j, e.i, -1.0) };
        let terms = e
            .terms
            .iter()
            .map(|t| Term { coeff: sign * t.coeff, powers: t.powers.clone() })
            .collect();
        entries.push((i, j, Polynomial::new(n, terms)?));
    }

    let eval_entries = entries.clone();
    let eval = move |x: &[f64]| {
        let mut m = DMatrix::zeros(n, n);
        for (i, j, p) in &eval_entries {
            let v = p.eval(x);
            m[(*i, *j)] = v;
            m[(*j, *i)] = -v;
        }
        m
    };

    // Differentiate each entry once, up front.
    let dentries: Vec<(usize, usize, Vec<Polynomial>)> = entries
        .iter()
        .map(|(i, j, p)| (*i, *j, (0..n).map(|m| p.partial(m)).collect()))
        .collect();
    let partials = move |x: &[f64]| {
        let mut out = vec![DMatrix::zeros(n, n); n];
        for (i, j, dps) in &dentries {
            for (m, dp) in dps.iter().enumerate() {
                let v = dp.eval(x);
                out[m][(*i, *j)] = v;
                out[m][(*j, *i)] = -v;
            }
        }
        out
    };

    let op = PoissonOperatorField::with_partials(n, eval, partials);
    let h = scalar_field_from(Polynomial::new(n, cfg.hamiltonian.terms)?);
    let casimirs = cfg
        .casimirs
        .into_iter()
        .map(|c| Ok(scalar_field_from(Polynomial::new(n, c.terms)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut system = HamiltonianSystem::new(op, h, casimirs);
    if let Some(m) = cfg.measure {
        let poly = Polynomial::new(n, m.terms)?;
        system = system.with_measure(MeasureDensity::new(move |x| poly.eval(x)));
    }

    let default_box = match (cfg.box_min, cfg.box_max) {
        (Some(lo), Some(hi)) if lo.len() == n && hi.len() == n => (lo, hi),
        _ => (vec![-4.0; n], vec![4.0; n]),
    };

    Ok(SystemHandle {
        name: cfg.name,
        system,
        sample_sigma: cfg.sample_sigma.unwrap_or(1.0),
        default_box,
        chm: None,
    })
}
