//! Stochastic particle dynamics on a noncanonical Hamiltonian system.
//!
//! Integrates `dX^i = J^ij (H_j dt + sqrt(D) dW_j + gamma J^jk H_k dt)` with
//! the Stratonovich-consistent Heun predictor-corrector (the same Wiener
//! increment enters predictor and corrector). The friction coefficient obeys
//! the fluctuation-dissipation relation `gamma = beta D / 2`, either with a
//! fixed beta or with beta re-estimated from the ensemble.
//!
//! Per-particle random streams are split off the master seed, so parallel
//! and serial execution produce bit-identical trajectories.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::poisson::{check_finite, HamiltonianSystem};

/// Coordinates beyond this magnitude abort a run as a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Cells need at least this many samples to enter density estimates.
pub const MIN_CELL_SAMPLES: usize = 10;

/// Gaussian white-noise forcing of amplitude `sqrt(D)` per coordinate.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub d: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(d: f64, seed: u64) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(Error::InvalidArgument("diffusion amplitude D must be >= 0".into()));
        }
        Ok(Self { d, seed })
    }
}

/// Friction model tied to the noise by `gamma = beta D / 2`.
#[derive(Debug, Clone, Copy)]
pub struct FrictionModel {
    pub beta: f64,
    pub gamma: f64,
    pub adaptive: bool,
    /// Re-estimation cadence (steps) in adaptive mode.
    pub update_every: usize,
}

impl FrictionModel {
    /// Fixed-beta mode: `gamma = beta D / 2` for all time.
    pub fn fixed(beta: f64, d: f64) -> Self {
        Self { beta, gamma: 0.5 * beta * d, adaptive: false, update_every: 0 }
    }

    /// Adaptive mode starting from `beta0`, re-estimated every `update_every`
    /// steps from the ensemble histogram density.
    pub fn adaptive(beta0: f64, d: f64, update_every: usize) -> Self {
        Self {
            beta: beta0,
            gamma: 0.5 * beta0 * d,
            adaptive: true,
            update_every: update_every.max(1),
        }
    }

    /// Re-points the fluctuation-dissipation pair at a new beta.
    pub fn retune(&mut self, beta: f64, d: f64) {
        self.beta = beta;
        self.gamma = 0.5 * beta * d;
    }

    /// The fluctuation-dissipation defect `|gamma - beta D / 2|`.
    pub fn fd_defect(&self, d: f64) -> f64 {
        (self.gamma - 0.5 * self.beta * d).abs()
    }
}

/// Per-record ensemble diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleDiagnostics {
    pub t: f64,
    pub e_mean: f64,
    pub casimir_means: Vec<f64>,
    /// Plug-in histogram entropy when a density grid is attached.
    pub entropy: Option<f64>,
    pub beta_estimate: Option<f64>,
    /// Name of the entropy/beta estimator.
    pub estimator: &'static str,
}

/// N phase-space samples with their private random streams.
pub struct Ensemble {
    dim: usize,
    /// Flat `N x dim` coordinates.
    pub particles: Vec<f64>,
    pub time: f64,
    pub noise: NoiseModel,
    pub friction: FrictionModel,
    rngs: Vec<ChaCha12Rng>,
}

impl Ensemble {
    /// Wraps explicit initial positions (flat `N x dim`).
    pub fn new(
        dim: usize,
        particles: Vec<f64>,
        noise: NoiseModel,
        friction: FrictionModel,
    ) -> Result<Self> {
        if dim == 0 || particles.is_empty() || particles.len() % dim != 0 {
            return Err(Error::InvalidArgument("particle array must be a nonempty N x dim".into()));
        }
        check_finite(&particles)?;
        let count = particles.len() / dim;
        let rngs = (0..count)
            .map(|i| {
                let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
                // Stream 0 is reserved for initial-condition sampling.
                rng.set_stream(i as u64 + 1);
                rng
            })
            .collect();
        Ok(Self { dim, particles, time: 0.0, noise, friction, rngs })
    }

    /// Gaussian cloud of `count` particles at `center` with per-axis `sigma`.
    pub fn gaussian(
        dim: usize,
        count: usize,
        center: &[f64],
        sigma: &[f64],
        noise: NoiseModel,
        friction: FrictionModel,
    ) -> Result<Self> {
        if center.len() != dim || sigma.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: center.len().min(sigma.len()) });
        }
        if count == 0 {
            return Err(Error::InvalidArgument("ensemble needs N >= 1".into()));
        }
        let mut init_rng = ChaCha12Rng::seed_from_u64(noise.seed);
        init_rng.set_stream(0);
        let mut particles = Vec::with_capacity(count * dim);
        for _ in 0..count {
            for a in 0..dim {
                let z: f64 = init_rng.sample(StandardNormal);
                particles.push(center[a] + sigma[a] * z);
            }
        }
        Self::new(dim, particles, noise, friction)
    }

    pub fn len(&self) -> usize {
        self.particles.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }
}

/// Deterministic part of the perturbed velocity: `J grad H - gamma g grad H`,
/// using `J^ij J^jk = -g^ik` so only one operator evaluation is needed.
pub fn drift(sys: &HamiltonianSystem, x: &[f64], friction: &FrictionModel) -> Result<Vec<f64>> {
    check_finite(x)?;
    if x.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x.len() });
    }
    let j = sys.operator.eval_unchecked(x);
    let gh = DVector::from_vec(sys.hamiltonian.gradient(x));
    let u = &j * gh;
    let v = &j * &u;
    Ok((0..x.len()).map(|i| u[i] + friction.gamma * v[i]).collect())
}

fn heun_particle(
    sys: &HamiltonianSystem,
    x: &mut [f64],
    rng: &mut ChaCha12Rng,
    dt: f64,
    sqrt_d: f64,
    gamma: f64,
    time: f64,
) -> Result<()> {
    let n = x.len();
    let sqrt_dt = dt.sqrt();
    let dw: Vec<f64> = (0..n).map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal)).collect();
    let dwv = DVector::from_vec(dw);

    let eval = |y: &[f64]| -> (DVector<f64>, DVector<f64>) {
        let j: DMatrix<f64> = sys.operator.eval_unchecked(y);
        let gh = DVector::from_vec(sys.hamiltonian.gradient(y));
        let u = &j * gh;
        let a = &u + gamma * (&j * &u);
        let b = sqrt_d * (&j * &dwv);
        (a, b)
    };

    let (a0, b0) = eval(x);
    let mut pred = vec![0.0; n];
    for i in 0..n {
        pred[i] = x[i] + dt * a0[i] + b0[i];
        if !pred[i].is_finite() || pred[i].abs() > BLOWUP_THRESHOLD {
            return Err(Error::BlowUp {
                time,
                magnitude: pred[i].abs(),
                threshold: BLOWUP_THRESHOLD,
            });
        }
    }
    let (a1, b1) = eval(&pred);
    for i in 0..n {
        x[i] += 0.5 * dt * (a0[i] + a1[i]) + 0.5 * (b0[i] + b1[i]);
        if !x[i].is_finite() || x[i].abs() > BLOWUP_THRESHOLD {
            return Err(Error::BlowUp { time, magnitude: x[i].abs(), threshold: BLOWUP_THRESHOLD });
        }
    }
    Ok(())
}

/// One Heun (Stratonovich) step of the whole ensemble, in parallel.
pub fn step_stratonovich(ens: &mut Ensemble, sys: &HamiltonianSystem, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let dim = ens.dim;
    let sqrt_d = ens.noise.d.sqrt();
    let gamma = ens.friction.gamma;
    let time = ens.time;
    ens.particles
        .par_chunks_mut(dim)
        .zip(ens.rngs.par_iter_mut())
        .try_for_each(|(x, rng)| heun_particle(sys, x, rng, dt, sqrt_d, gamma, time))?;
    ens.time += dt;
    Ok(())
}

/// Sample-mean diagnostics; reductions run in fixed particle order.
pub fn diagnose(
    ens: &Ensemble,
    sys: &HamiltonianSystem,
    density_grid: Option<&PhaseGrid>,
) -> EnsembleDiagnostics {
    let count = ens.len() as f64;
    let mut e_sum = 0.0;
    let mut c_sums = vec![0.0; sys.casimirs.len()];
    for i in 0..ens.len() {
        let x = ens.particle(i);
        e_sum += sys.hamiltonian.value(x);
        for (k, ck) in sys.casimirs.iter().enumerate() {
            c_sums[k] += ck.value(x);
        }
    }
    let entropy = density_grid.and_then(|g| entropy_estimate(&ens.particles, ens.dim, g).ok());
    let beta = density_grid
        .and_then(|g| estimate_beta_ensemble(&ens.particles, ens.dim, sys, g).ok());
    EnsembleDiagnostics {
        t: ens.time,
        e_mean: e_sum / count,
        casimir_means: c_sums.iter().map(|s| s / count).collect(),
        entropy,
        beta_estimate: beta,
        estimator: "histogram-plugin",
    }
}

/// Evolves the ensemble, recording diagnostics every `record_every` steps.
/// In adaptive mode the friction is re-tuned from the histogram beta
/// estimate every `friction.update_every` steps.
pub fn evolve(
    ens: &mut Ensemble,
    sys: &HamiltonianSystem,
    dt: f64,
    steps: usize,
    record_every: usize,
    density_grid: Option<&PhaseGrid>,
) -> Result<Vec<EnsembleDiagnostics>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if ens.friction.adaptive && density_grid.is_none() {
        return Err(Error::InvalidArgument(
            "adaptive-beta mode needs a density grid for the estimator".into(),
        ));
    }
    let every = record_every.max(1);
    let mut series = Vec::new();
    series.push(diagnose(ens, sys, density_grid));
    for s in 0..steps {
        step_stratonovich(ens, sys, dt)?;
        if ens.friction.adaptive && (s + 1) % ens.friction.update_every == 0 {
            let grid = density_grid.expect("checked above");
            if let Ok(beta) = estimate_beta_ensemble(&ens.particles, ens.dim, sys, grid) {
                ens.friction.retune(beta, ens.noise.d);
            }
        }
        if (s + 1) % every == 0 || s + 1 == steps {
            series.push(diagnose(ens, sys, density_grid));
        }
    }
    Ok(series)
}

/// Histogram density and which cells are usable for log-density gradients.
struct HistogramDensity {
    counts: Vec<usize>,
    log_density: Vec<f64>,
    valid: Vec<bool>,
    inside: usize,
}

fn histogram_density(particles: &[f64], dim: usize, grid: &PhaseGrid) -> Result<HistogramDensity> {
    if particles.len() < dim * 2 * MIN_CELL_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{} particles are too few for a histogram density (need >= {})",
            particles.len() / dim.max(1),
            2 * MIN_CELL_SAMPLES
        )));
    }
    if grid.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: grid.dim() });
    }
    let (counts, inside) = grid.histogram(particles);
    if inside == 0 {
        return Err(Error::InsufficientSamples("no samples inside the density grid".into()));
    }
    let norm = inside as f64 * grid.cell_volume();
    let log_density: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { (c as f64 / norm).ln() } else { 0.0 })
        .collect();
    let valid: Vec<bool> = counts.iter().map(|&c| c >= MIN_CELL_SAMPLES).collect();
    Ok(HistogramDensity { counts, log_density, valid, inside })
}

/// Inverse-temperature estimate
/// `beta = -sum_i <xdot^i J^ij d_j log f> / sum_i <(xdot^i)^2>`
/// with `d log f` from centered differences of the histogram density.
///
/// Cells with fewer than [`MIN_CELL_SAMPLES`] samples are excluded, as are
/// particles whose difference stencil touches an excluded cell; erroring
/// only when no usable samples remain.
pub fn estimate_beta_ensemble(
    particles: &[f64],
    dim: usize,
    sys: &HamiltonianSystem,
    grid: &PhaseGrid,
) -> Result<f64> {
    let hist = histogram_density(particles, dim, grid)?;

    // Per-cell gradient of log density, flagged usable only when every
    // stencil point is a valid cell.
    let ncells = grid.ncells();
    let mut grad = vec![0.0; ncells * dim];
    let mut usable = vec![true; ncells];
    for c in 0..ncells {
        if !hist.valid[c] {
            usable[c] = false;
            continue;
        }
        for a in 0..dim {
            let s = grid.stride(a);
            let i = grid.coord_along(c, a);
            let n = grid.axis(a).cells;
            let left = if i == 0 { c } else { c - s };
            let right = if i == n - 1 { c } else { c + s };
            if !hist.valid[left] || !hist.valid[right] {
                usable[c] = false;
                break;
            }
            grad[c * dim + a] =
                (hist.log_density[right] - hist.log_density[left]) * 0.5 / grid.axis(a).dx();
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for p in particles.chunks_exact(dim) {
        let Some(c) = grid.locate(p) else { continue };
        if !usable[c] {
            continue;
        }
        let j = sys.operator.eval_unchecked(p);
        let gh = DVector::from_vec(sys.hamiltonian.gradient(p));
        let v = &j * gh;
        let gl = DVector::from_column_slice(&grad[c * dim..(c + 1) * dim]);
        let w = &j * gl;
        num += v.dot(&w);
        den += v.dot(&v);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientSamples(
            "no particles in cells with enough samples for the gradient stencil".into(),
        ));
    }
    if den <= 1e-14 * used as f64 {
        return Err(Error::DegenerateDenominator { value: den, threshold: 1e-14 });
    }
    Ok(-num / den)
}

/// Plug-in histogram entropy `-sum_c p_c log(p_c / dV)` with `p_c` the cell
/// occupation fraction; biased low by the usual plug-in counting deficit,
/// which shrinks as N grows.
pub fn entropy_estimate(particles: &[f64], dim: usize, grid: &PhaseGrid) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::InsufficientSamples("empty ensemble".into()));
    }
    let hist = histogram_density(particles, dim, grid)?;
    let inside = hist.inside as f64;
    let mut s = 0.0;
    for &count in &hist.counts {
        if count > 0 {
            let p = count as f64 / inside;
            s -= p * (p / grid.cell_volume()).ln();
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use std::sync::Arc;

    #[test]
    fn drift_canonical_example() {
        let sys = systems::canonical_2d();
        let friction = FrictionModel { beta: 0.0, gamma: 0.1, adaptive: false, update_every: 0 };
        let d = drift(&sys, &[1.0, 0.0], &friction).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn drift_without_friction_is_hamiltonian() {
        let sys = systems::rigid_body();
        let friction = FrictionModel::fixed(1.0, 0.0);
        assert_eq!(friction.gamma, 0.0);
        let x = [0.3, -0.8, 1.1];
        let d = drift(&sys, &x, &friction).unwrap();
        let u = crate::poisson::hamiltonian_drift(&sys, &x).unwrap();
        for i in 0..3 {
            assert!((d[i] - u[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_zero_at_critical_point() {
        let sys = systems::canonical_2d();
        let friction = FrictionModel::fixed(1.0, 0.2);
        let d = drift(&sys, &[0.0, 0.0], &friction).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn fluctuation_dissipation_invariant() {
        let f = FrictionModel::fixed(2.5, 0.3);
        assert_eq!(f.fd_defect(0.3), 0.0);
        let mut g = FrictionModel::adaptive(1.0, 0.3, 10);
        g.retune(1.7, 0.3);
        assert_eq!(g.fd_defect(0.3), 0.0);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let sys = systems::canonical_2d();
        let run = || {
            let noise = NoiseModel::new(0.2, 42).unwrap();
            let friction = FrictionModel::fixed(1.0, 0.2);
            let mut ens =
                Ensemble::gaussian(2, 64, &[1.0, 0.0], &[0.5, 0.5], noise, friction).unwrap();
            for _ in 0..50 {
                step_stratonovich(&mut ens, &sys, 1e-2).unwrap();
            }
            ens.particles
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_reduces_to_deterministic_heun() {
        let sys = systems::canonical_2d();
        let noise = NoiseModel::new(0.0, 7).unwrap();
        let friction = FrictionModel::fixed(1.0, 0.0);
        let mut ens = Ensemble::new(2, vec![1.0, 0.0], noise, friction).unwrap();
        let h0 = sys.hamiltonian.value(ens.particle(0));
        for _ in 0..1000 {
            step_stratonovich(&mut ens, &sys, 1e-3).unwrap();
        }
        let h1 = sys.hamiltonian.value(ens.particle(0));
        // Heun is second order: drift O(dt^2) over unit time at dt = 1e-3.
        assert!(((h1 - h0) / h0).abs() < 1e-5, "H drift {}", (h1 - h0) / h0);
    }

    #[test]
    fn evolve_rejects_zero_steps() {
        let sys = systems::canonical_2d();
        let noise = NoiseModel::new(0.1, 3).unwrap();
        let mut ens =
            Ensemble::new(2, vec![0.5, 0.5], noise, FrictionModel::fixed(1.0, 0.1)).unwrap();
        assert!(matches!(
            evolve(&mut ens, &sys, 1e-2, 0, 1, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn blow_up_detected() {
        use crate::poisson::{HamiltonianSystem, PoissonOperatorField, ScalarField};
        use nalgebra::DMatrix;
        // dx/dt = J grad H with H = exp(x0) * big on a canonical pair blows up
        // once the drift is huge; force it with an absurd gradient.
        let op = PoissonOperatorField::new(2, |_| {
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        });
        let sys = HamiltonianSystem::new(
            op,
            ScalarField::with_gradient(|x: &[f64]| 1e13 * x[0], |_| vec![1e13, 0.0]),
            vec![],
        );
        let noise = NoiseModel::new(0.0, 1).unwrap();
        let mut ens =
            Ensemble::new(2, vec![1.0, 1.0], noise, FrictionModel::fixed(0.0, 0.0)).unwrap();
        let err = step_stratonovich(&mut ens, &sys, 1.0).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn casimir_means_constant_under_evolution() {
        let sys = systems::rigid_body();
        let noise = NoiseModel::new(0.1, 11).unwrap();
        let friction = FrictionModel::fixed(1.0, 0.1);
        let mut ens =
            Ensemble::gaussian(3, 32, &[1.0, 0.0, 0.5], &[0.2, 0.2, 0.2], noise, friction)
                .unwrap();
        let before: Vec<f64> =
            (0..ens.len()).map(|i| sys.casimirs[0].value(ens.particle(i))).collect();
        for _ in 0..1000 {
            step_stratonovich(&mut ens, &sys, 1e-3).unwrap();
        }
        for i in 0..ens.len() {
            let after = sys.casimirs[0].value(ens.particle(i));
            let rel = ((after - before[i]) / before[i]).abs();
            assert!(rel <= 1e-3, "particle {i} Casimir drift {rel}");
        }
    }

    #[test]
    fn entropy_estimate_uniform_box() {
        // Uniform samples on the unit box: S ~ log(1) = 0.
        let grid = Arc::new(crate::grid::PhaseGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 200_000;
        let mut pts = Vec::with_capacity(2 * n);
        for _ in 0..n {
            pts.push(rng.gen::<f64>());
            pts.push(rng.gen::<f64>());
        }
        let s = entropy_estimate(&pts, 2, &grid).unwrap();
        assert!(s.abs() < 0.01, "uniform entropy {s}");
    }

    #[test]
    fn entropy_estimate_gaussian() {
        // Standard 2D Gaussian: S = log(2 pi e) ~ 2.8379, within 2% at N = 1e5.
        let grid = Arc::new(
            crate::grid::PhaseGrid::new(&[-6.0, -6.0], &[6.0, 6.0], &[64, 64]).unwrap(),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 100_000;
        let mut pts = Vec::with_capacity(2 * n);
        for _ in 0..n {
            pts.push(rng.sample::<f64, _>(StandardNormal));
            pts.push(rng.sample::<f64, _>(StandardNormal));
        }
        let s = entropy_estimate(&pts, 2, &grid).unwrap();
        let exact = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((s - exact).abs() / exact < 0.02, "gaussian entropy {s} vs {exact}");
    }

    #[test]
    fn entropy_estimate_rejects_tiny_ensembles() {
        let grid = Arc::new(
            crate::grid::PhaseGrid::new(&[-1.0, -1.0], &[1.0, 1.0], &[8, 8]).unwrap(),
        );
        assert!(matches!(
            entropy_estimate(&[0.0, 0.0], 2, &grid),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(matches!(
            entropy_estimate(&[], 2, &grid),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn beta_estimator_recovers_known_beta() {
        // Exact Gaussian samples at beta = 2 for H = (p^2+q^2)/2.
        let sys = systems::canonical_2d();
        let grid = Arc::new(
            crate::grid::PhaseGrid::new(&[-4.0, -4.0], &[4.0, 4.0], &[64, 64]).unwrap(),
        );
        let beta = 2.0_f64;
        let sigma = (1.0 / beta).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 100_000;
        let mut pts = Vec::with_capacity(2 * n);
        for _ in 0..n {
            pts.push(sigma * rng.sample::<f64, _>(StandardNormal));
            pts.push(sigma * rng.sample::<f64, _>(StandardNormal));
        }
        let est = estimate_beta_ensemble(&pts, 2, &sys, &grid).unwrap();
        assert!((est - beta).abs() <= 0.1, "beta estimate {est}");
    }

    #[test]
    fn beta_estimator_rejects_single_particle() {
        let sys = systems::canonical_2d();
        let grid = Arc::new(
            crate::grid::PhaseGrid::new(&[-1.0, -1.0], &[1.0, 1.0], &[8, 8]).unwrap(),
        );
        assert!(matches!(
            estimate_beta_ensemble(&[0.1, 0.1], 2, &sys, &grid),
            Err(Error::InsufficientSamples(_))
        ));
    }
}
