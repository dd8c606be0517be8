//! Spectral truncation of the Charney-Hasegawa-Mima equation.
//!
//! Periodic solutions are expanded as `phi = sum phi^nm exp(i(nx+my))` and
//! truncated to the square box `|n|, |m| <= K` with a Galerkin cutoff
//! (`phi^(i+j) := 0` when `i+j` leaves the box). The truncated system is
//! `dphi^i/dt = J^ij H_j` with
//!
//! `J^ij = B^ij + C^ij phi^(i+j)`
//! `B^ij = i c i1 delta_(i,-j) / (4 pi^2 w_i w_j)`
//! `C^ij = (i1 j2 - i2 j1) (1 + (i1+j1)^2 + (i2+j2)^2) / (4 pi^2 w_i w_j)`
//!
//! where `w_i = 1 + i1^2 + i2^2`. The cutoff preserves antisymmetry, the
//! pairwise-cancellation Casimir argument, and the Liouville property
//! exactly; the Jacobi identity holds on interior mode triads.
//!
//! States are stored on a real chart (`phi^00` plus Re/Im of one
//! representative per conjugate pair), on which the operator becomes a real
//! antisymmetric matrix of dimension `(2K+1)^2` and the generic particle and
//! bracket machinery applies unchanged. Mode ordering is row-major (n outer,
//! m inner), fixed so binary snapshots are portable.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poisson::{HamiltonianSystem, PoissonOperatorField, ScalarField};
use crate::sde::{self, Ensemble, FrictionModel, NoiseModel};

/// Reality-constraint gate for constructing complex states.
pub const REALITY_TOL: f64 = 1e-13;

/// Closed-form mode coefficients `(B^ij, C^ij)`.
pub fn coefficients(i: (i32, i32), j: (i32, i32), c: f64) -> (Complex64, f64) {
    let wi = 1.0 + (i.0 * i.0 + i.1 * i.1) as f64;
    let wj = 1.0 + (j.0 * j.0 + j.1 * j.1) as f64;
    let denom = 4.0 * PI * PI * wi * wj;
    let b = if i.0 == -j.0 && i.1 == -j.1 {
        Complex64::new(0.0, c * i.0 as f64 / denom)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let cross = (i.0 * j.1 - i.1 * j.0) as f64;
    let sum_w = 1.0 + ((i.0 + j.0).pow(2) + (i.1 + j.1).pow(2)) as f64;
    (b, cross * sum_w / denom)
}

/// Spectral weight `w = 1 + n^2 + m^2`.
pub fn weight(n: i32, m: i32) -> f64 {
    1.0 + (n * n + m * m) as f64
}

/// `alpha_nm = 2 pi^2 (1+n^2+m^2) [beta + mu (1+n^2+m^2)]`, the equilibrium
/// stiffness of mode (n, m).
pub fn alpha_nm(n: i32, m: i32, beta: f64, mu: f64) -> f64 {
    let w = weight(n, m);
    2.0 * PI * PI * w * (beta + mu * w)
}

/// The truncated mode box with precomputed coefficient tables.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub k: usize,
    pub c: f64,
    side: usize,
    /// Modes in row-major order (n outer, m inner).
    modes: Vec<(i32, i32)>,
    /// Representative modes (n > 0, or n == 0 and m > 0), row-major order.
    reps: Vec<usize>,
    /// Position of each mode among the representatives, if it is one.
    rep_slot: Vec<Option<usize>>,
    /// Index of the conjugate mode.
    conj: Vec<usize>,
    /// `C^ij` table, `[i * nmodes + j]`.
    c_table: Vec<f64>,
    /// `B^ij` table.
    b_table: Vec<Complex64>,
    /// Index of mode `i + j`, or None when the sum leaves the box.
    sum_index: Vec<Option<usize>>,
    zero: usize,
}

impl Truncation {
    pub fn new(k: usize, c: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument("truncation needs K >= 1".into()));
        }
        let side = 2 * k + 1;
        let kk = k as i32;
        let mut modes = Vec::with_capacity(side * side);
        for n in -kk..=kk {
            for m in -kk..=kk {
                modes.push((n, m));
            }
        }
        let nmodes = modes.len();
        let index_of = |n: i32, m: i32| -> Option<usize> {
            if n.abs() <= kk && m.abs() <= kk {
                Some(((n + kk) as usize) * side + (m + kk) as usize)
            } else {
                None
            }
        };
        let mut reps = Vec::new();
        let mut rep_slot = vec![None; nmodes];
        for (idx, &(n, m)) in modes.iter().enumerate() {
            if n > 0 || (n == 0 && m > 0) {
                rep_slot[idx] = Some(reps.len());
                reps.push(idx);
            }
        }
        let conj: Vec<usize> =
            modes.iter().map(|&(n, m)| index_of(-n, -m).expect("box is symmetric")).collect();
        let mut c_table = vec![0.0; nmodes * nmodes];
        let mut b_table = vec![Complex64::new(0.0, 0.0); nmodes * nmodes];
        let mut sum_index = vec![None; nmodes * nmodes];
        for (i, &mi) in modes.iter().enumerate() {
            for (j, &mj) in modes.iter().enumerate() {
                let (b, cc) = coefficients(mi, mj, c);
                b_table[i * nmodes + j] = b;
                c_table[i * nmodes + j] = cc;
                sum_index[i * nmodes + j] = index_of(mi.0 + mj.0, mi.1 + mj.1);
            }
        }
        let zero = index_of(0, 0).unwrap();
        Ok(Self { k, c, side, modes, reps, rep_slot, conj, c_table, b_table, sum_index, zero })
    }

    pub fn nmodes(&self) -> usize {
        self.side * self.side
    }

    /// Real-chart dimension, `(2K+1)^2`.
    pub fn real_dim(&self) -> usize {
        self.nmodes()
    }

    pub fn modes(&self) -> &[(i32, i32)] {
        &self.modes
    }

    pub fn mode_index(&self, n: i32, m: i32) -> Option<usize> {
        let kk = self.k as i32;
        if n.abs() <= kk && m.abs() <= kk {
            Some(((n + kk) as usize) * self.side + (m + kk) as usize)
        } else {
            None
        }
    }

    /// Complex operator entry `J^ij = B^ij + C^ij phi^(i+j)` with the cutoff.
    fn entry(&self, phi: &[Complex64], i: usize, j: usize) -> Complex64 {
        let nm = self.nmodes();
        let mut v = self.b_table[i * nm + j];
        if let Some(s) = self.sum_index[i * nm + j] {
            v += self.c_table[i * nm + j] * phi[s];
        }
        v
    }

    /// Hamiltonian `H = 2 pi^2 sum w |phi|^2` from complex coefficients.
    pub fn hamiltonian_complex(&self, phi: &[Complex64]) -> f64 {
        2.0 * PI * PI
            * self
                .modes
                .iter()
                .zip(phi.iter())
                .map(|(&(n, m), p)| weight(n, m) * p.norm_sqr())
                .sum::<f64>()
    }

    /// Casimir `C = 2 pi^2 sum w^2 |phi|^2` (exact invariant for c = 0).
    pub fn casimir_complex(&self, phi: &[Complex64]) -> f64 {
        2.0 * PI * PI
            * self
                .modes
                .iter()
                .zip(phi.iter())
                .map(|(&(n, m), p)| weight(n, m).powi(2) * p.norm_sqr())
                .sum::<f64>()
    }

    /// Hamiltonian on the real chart.
    pub fn hamiltonian_real(&self, y: &[f64]) -> f64 {
        let mut s = y[self.real_slot_zero()].powi(2);
        for (slot, &ri) in self.reps.iter().enumerate() {
            let (n, m) = self.modes[ri];
            let a = y[1 + 2 * slot];
            let b = y[2 + 2 * slot];
            s += 2.0 * weight(n, m) * (a * a + b * b);
        }
        2.0 * PI * PI * s
    }

    /// Gradient of the Hamiltonian on the real chart. The zero-mode entry is
    /// the true derivative `4 pi^2 phi^00` (it never enters the dynamics
    /// because the operator column of the zero mode vanishes identically).
    pub fn hamiltonian_real_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.real_dim()];
        g[0] = 4.0 * PI * PI * y[0];
        for (slot, &ri) in self.reps.iter().enumerate() {
            let (n, m) = self.modes[ri];
            let w = weight(n, m);
            g[1 + 2 * slot] = 8.0 * PI * PI * w * y[1 + 2 * slot];
            g[2 + 2 * slot] = 8.0 * PI * PI * w * y[2 + 2 * slot];
        }
        g
    }

    pub fn casimir_real(&self, y: &[f64]) -> f64 {
        let mut s = y[0].powi(2);
        for (slot, &ri) in self.reps.iter().enumerate() {
            let (n, m) = self.modes[ri];
            let a = y[1 + 2 * slot];
            let b = y[2 + 2 * slot];
            s += 2.0 * weight(n, m).powi(2) * (a * a + b * b);
        }
        2.0 * PI * PI * s
    }

    pub fn casimir_real_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.real_dim()];
        g[0] = 4.0 * PI * PI * y[0];
        for (slot, &ri) in self.reps.iter().enumerate() {
            let (n, m) = self.modes[ri];
            let w2 = weight(n, m).powi(2);
            g[1 + 2 * slot] = 8.0 * PI * PI * w2 * y[1 + 2 * slot];
            g[2 + 2 * slot] = 8.0 * PI * PI * w2 * y[2 + 2 * slot];
        }
        g
    }

    fn real_slot_zero(&self) -> usize {
        0
    }

    /// Complex coefficients from a real-chart vector.
    pub fn complex_from_real(&self, y: &[f64]) -> Vec<Complex64> {
        let mut phi = vec![Complex64::new(0.0, 0.0); self.nmodes()];
        phi[self.zero] = Complex64::new(y[0], 0.0);
        for (slot, &ri) in self.reps.iter().enumerate() {
            let v = Complex64::new(y[1 + 2 * slot], y[2 + 2 * slot]);
            phi[ri] = v;
            phi[self.conj[ri]] = v.conj();
        }
        phi
    }

    /// Real-chart vector from complex coefficients (assumes the reality
    /// constraint already holds; representatives win).
    pub fn real_from_complex(&self, phi: &[Complex64]) -> Vec<f64> {
        let mut y = vec![0.0; self.real_dim()];
        y[0] = phi[self.zero].re;
        for (slot, &ri) in self.reps.iter().enumerate() {
            y[1 + 2 * slot] = phi[ri].re;
            y[2 + 2 * slot] = phi[ri].im;
        }
        y
    }

    /// Real antisymmetric operator on the chart. Only the strict upper
    /// triangle is computed; the mirror is the exact negation.
    pub fn real_operator(&self, y: &[f64]) -> DMatrix<f64> {
        let phi = self.complex_from_real(y);
        let dim = self.real_dim();
        let mut out = DMatrix::zeros(dim, dim);
        for alpha in 0..dim {
            for beta in (alpha + 1)..dim {
                let v = self.real_entry(&phi, alpha, beta);
                out[(alpha, beta)] = v;
                out[(beta, alpha)] = -v;
            }
        }
        out
    }

    /// One strict-upper real-chart entry from the complex operator.
    fn real_entry(&self, phi: &[Complex64], alpha: usize, beta: usize) -> f64 {
        debug_assert!(alpha < beta);
        let (s_rep, s_kind) = ((beta - 1) / 2, (beta - 1) % 2);
        let s = self.reps[s_rep];
        let s_conj = self.conj[s];
        if alpha == 0 {
            let p = self.entry(phi, self.zero, s);
            return if s_kind == 0 { p.re } else { p.im };
        }
        let (r_rep, r_kind) = ((alpha - 1) / 2, (alpha - 1) % 2);
        let r = self.reps[r_rep];
        let p1 = self.entry(phi, r, s);
        let p2 = self.entry(phi, r, s_conj);
        combine_real_entry(r_kind, s_kind, p1, p2)
    }

    /// Analytic partials `d J_R / d y^g`. The operator is affine in the
    /// coefficients, so the partials do not depend on the chart point.
    pub fn real_operator_partials(&self, _y: &[f64]) -> Vec<DMatrix<f64>> {
        let dim = self.real_dim();
        let nm = self.nmodes();
        let mut out = vec![DMatrix::zeros(dim, dim); dim];
        // d phi^u / d y^g as a sparse list per mode u.
        let dphi = |u: usize| -> Vec<(usize, Complex64)> {
            if u == self.zero {
                vec![(0, Complex64::new(1.0, 0.0))]
            } else if let Some(slot) = self.rep_slot[u] {
                vec![
                    (1 + 2 * slot, Complex64::new(1.0, 0.0)),
                    (2 + 2 * slot, Complex64::new(0.0, 1.0)),
                ]
            } else {
                let slot = self.rep_slot[self.conj[u]].expect("conjugate of non-rep is rep");
                vec![
                    (1 + 2 * slot, Complex64::new(1.0, 0.0)),
                    (2 + 2 * slot, Complex64::new(0.0, -1.0)),
                ]
            }
        };
        let zero_c = Complex64::new(0.0, 0.0);
        for alpha in 0..dim {
            for beta in (alpha + 1)..dim {
                let (s_rep, s_kind) = ((beta - 1) / 2, (beta - 1) % 2);
                let s = self.reps[s_rep];
                let s_conj = self.conj[s];
                // Entry combines P(i, s) and P(i, conj s); the phi-dependent
                // part of P(i, j) is C^ij phi^(i+j).
                let (i, r_kind) = if alpha == 0 {
                    (self.zero, usize::MAX)
                } else {
                    (self.reps[(alpha - 1) / 2], (alpha - 1) % 2)
                };
                for (which, &j) in [s, s_conj].iter().enumerate() {
                    if alpha == 0 && which == 1 {
                        continue;
                    }
                    let Some(u) = self.sum_index[i * nm + j] else { continue };
                    let coeff = self.c_table[i * nm + j];
                    if coeff == 0.0 {
                        continue;
                    }
                    for (gamma, dval) in dphi(u) {
                        let dp = coeff * dval;
                        let v = if alpha == 0 {
                            if s_kind == 0 { dp.re } else { dp.im }
                        } else if which == 0 {
                            combine_real_entry(r_kind, s_kind, dp, zero_c)
                        } else {
                            combine_real_entry(r_kind, s_kind, zero_c, dp)
                        };
                        out[gamma][(alpha, beta)] += v;
                        out[gamma][(beta, alpha)] -= v;
                    }
                }
            }
        }
        out
    }

    /// Direct convolution form of the truncated equations.
    pub fn rhs_convolution(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let kk = self.k as i32;
        let mut out = vec![Complex64::new(0.0, 0.0); self.nmodes()];
        for (i, &(n, m)) in self.modes.iter().enumerate() {
            let mut sum = Complex64::new(0.0, self.c * n as f64) * phi[i];
            for (pj, &(p, q)) in self.modes.iter().enumerate() {
                let (dn, dm) = (n - p, m - q);
                if dn.abs() > kk || dm.abs() > kk {
                    continue;
                }
                let cross = (m * p - n * q) as f64;
                if cross == 0.0 {
                    continue;
                }
                let w = 1.0 + (dn * dn + dm * dm) as f64;
                let di = self.mode_index(dn, dm).unwrap();
                sum += cross * w * phi[di] * phi[pj];
            }
            out[i] = sum / weight(n, m);
        }
        out
    }

    /// Operator form `J^ij H_j` over complex modes; the independent partner
    /// of the convolution path.
    pub fn rhs_operator_complex(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let nm = self.nmodes();
        let mut out = vec![Complex64::new(0.0, 0.0); nm];
        let grad: Vec<Complex64> = self
            .modes
            .iter()
            .enumerate()
            .map(|(j, &(n, m))| 4.0 * PI * PI * weight(n, m) * phi[self.conj[j]])
            .collect();
        for i in 0..nm {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..nm {
                s += self.entry(phi, i, j) * grad[j];
            }
            out[i] = s;
        }
        out
    }

    /// Real-chart velocity field `J_R(y) grad H(y)`.
    pub fn rhs_real(&self, y: &[f64]) -> Vec<f64> {
        let j = self.real_operator(y);
        let g = self.hamiltonian_real_gradient(y);
        let mut out = vec![0.0; self.real_dim()];
        for a in 0..self.real_dim() {
            let mut s = 0.0;
            for b in 0..self.real_dim() {
                s += j[(a, b)] * g[b];
            }
            out[a] = s;
        }
        out
    }

    /// Max cyclic Jacobi defect over interior mode triads (all pairwise sums
    /// and the triple sum inside the box).
    pub fn interior_triad_residual(&self, phi: &[Complex64]) -> f64 {
        self.triad_residual(phi, true)
    }

    /// Max cyclic defect over boundary triads (some sum outside the box);
    /// reported without an asserted target, as a truncation gauge.
    pub fn boundary_triad_residual(&self, phi: &[Complex64]) -> f64 {
        self.triad_residual(phi, false)
    }

    fn triad_residual(&self, phi: &[Complex64], interior: bool) -> f64 {
        let nm = self.nmodes();
        let mut worst = 0.0_f64;
        for i in 0..nm {
            for j in 0..nm {
                let sij = self.sum_index[i * nm + j];
                for k in 0..nm {
                    let sjk = self.sum_index[j * nm + k];
                    let ski = self.sum_index[k * nm + i];
                    let triple = sij.and_then(|u| {
                        let (a, b) = self.modes[u];
                        let (cn, cm) = self.modes[k];
                        self.mode_index(a + cn, b + cm)
                    });
                    let is_interior =
                        sij.is_some() && sjk.is_some() && ski.is_some() && triple.is_some();
                    if is_interior != interior {
                        continue;
                    }
                    let mut sum = Complex64::new(0.0, 0.0);
                    if let Some(u) = sjk {
                        sum += self.entry(phi, i, u) * self.c_table[j * nm + k];
                    }
                    if let Some(u) = ski {
                        sum += self.entry(phi, j, u) * self.c_table[k * nm + i];
                    }
                    if let Some(u) = sij {
                        sum += self.entry(phi, k, u) * self.c_table[i * nm + j];
                    }
                    worst = worst.max(sum.norm());
                }
            }
        }
        worst
    }

    /// Finite-difference trace of the flow Jacobian (the Liouville defect).
    pub fn liouville_trace_fd(&self, y: &[f64]) -> f64 {
        let dim = self.real_dim();
        let mut trace = 0.0;
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        for a in 0..dim {
            let h = 1e-5 * (1.0 + y[a].abs());
            yp[a] = y[a] + h;
            ym[a] = y[a] - h;
            let rp = self.rhs_real(&yp);
            let rm = self.rhs_real(&ym);
            trace += (rp[a] - rm[a]) / (2.0 * h);
            yp[a] = y[a];
            ym[a] = y[a];
        }
        trace
    }
}

/// Combination rule taking the complex entries `P(r,s)` and `P(r,-s)` to the
/// real-chart entry for the four (Re/Im, Re/Im) slot kinds.
fn combine_real_entry(r_kind: usize, s_kind: usize, p1: Complex64, p2: Complex64) -> f64 {
    match (r_kind, s_kind) {
        (0, 0) => 0.5 * (p1.re + p2.re),
        (0, 1) => 0.5 * (p1.im - p2.im),
        (1, 0) => 0.5 * (p1.im + p2.im),
        (1, 1) => 0.5 * (p2.re - p1.re),
        _ => unreachable!("kinds are 0 or 1"),
    }
}

/// A truncated spectral state with the reality constraint enforced.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub k: usize,
    pub c: f64,
    coeffs: Vec<Complex64>,
}

impl SpectralState {
    /// Validates the reality constraint (max violation 1e-13, real zero
    /// mode) and then symmetrizes exactly.
    pub fn new(trunc: &Truncation, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != trunc.nmodes() {
            return Err(Error::DimensionMismatch { expected: trunc.nmodes(), got: coeffs.len() });
        }
        let violation = reality_violation(trunc, &coeffs);
        if violation > REALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "reality constraint violated by {violation:.3e} (limit {REALITY_TOL:.0e})"
            )));
        }
        for &ri in &trunc.reps {
            let avg = 0.5 * (coeffs[ri] + coeffs[trunc.conj[ri]].conj());
            coeffs[ri] = avg;
            coeffs[trunc.conj[ri]] = avg.conj();
        }
        coeffs[trunc.zero] = Complex64::new(coeffs[trunc.zero].re, 0.0);
        Ok(Self { k: trunc.k, c: trunc.c, coeffs })
    }

    pub fn zero(trunc: &Truncation) -> Self {
        Self {
            k: trunc.k,
            c: trunc.c,
            coeffs: vec![Complex64::new(0.0, 0.0); trunc.nmodes()],
        }
    }

    pub fn from_real(trunc: &Truncation, y: &[f64]) -> Self {
        Self { k: trunc.k, c: trunc.c, coeffs: trunc.complex_from_real(y) }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, trunc: &Truncation, n: i32, m: i32) -> Complex64 {
        self.coeffs[trunc.mode_index(n, m).expect("mode in box")]
    }

    pub fn to_real(&self, trunc: &Truncation) -> Vec<f64> {
        trunc.real_from_complex(&self.coeffs)
    }
}

/// Max violation of `phi^(-n,-m) = conj(phi^nm)` (zero-mode imaginary part
/// included).
pub fn reality_violation(trunc: &Truncation, coeffs: &[Complex64]) -> f64 {
    let mut worst = coeffs[trunc.zero].im.abs();
    for &ri in &trunc.reps {
        worst = worst.max((coeffs[trunc.conj[ri]] - coeffs[ri].conj()).norm());
    }
    worst
}

/// Wraps the truncation as a generic Hamiltonian system on the real chart.
/// The Casimir is registered only for c = 0, where it is exact.
pub fn system(trunc: &Truncation) -> HamiltonianSystem {
    let dim = trunc.real_dim();
    let t_eval = trunc.clone();
    let t_part = trunc.clone();
    let op = PoissonOperatorField::with_partials(
        dim,
        move |y| t_eval.real_operator(y),
        move |y| t_part.real_operator_partials(y),
    );
    let t_h = trunc.clone();
    let t_hg = trunc.clone();
    let hamiltonian = ScalarField::with_gradient(
        move |y: &[f64]| t_h.hamiltonian_real(y),
        move |y: &[f64]| t_hg.hamiltonian_real_gradient(y),
    );
    let casimirs = if trunc.c == 0.0 {
        let t_c = trunc.clone();
        let t_cg = trunc.clone();
        vec![ScalarField::with_gradient(
            move |y: &[f64]| t_c.casimir_real(y),
            move |y: &[f64]| t_cg.casimir_real_gradient(y),
        )]
    } else {
        vec![]
    };
    HamiltonianSystem::new(op, hamiltonian, casimirs)
}

/// Deterministic integration record.
#[derive(Debug, Clone, Serialize)]
pub struct ChmDiagnostics {
    pub t: f64,
    pub h: f64,
    pub casimir: f64,
}

/// RK4 on the real chart with the reality constraint maintained by
/// construction; records (t, H, C) every `record_every` steps.
pub fn integrate_deterministic(
    trunc: &Truncation,
    state: &SpectralState,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<(SpectralState, Vec<ChmDiagnostics>)> {
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument("need dt > 0 and steps >= 1".into()));
    }
    let mut y = state.to_real(trunc);
    let every = record_every.max(1);
    let mut series = Vec::new();
    let record = |y: &[f64], t: f64, series: &mut Vec<ChmDiagnostics>| {
        series.push(ChmDiagnostics {
            t,
            h: trunc.hamiltonian_real(y),
            casimir: trunc.casimir_real(y),
        });
    };
    record(&y, 0.0, &mut series);
    for s in 0..steps {
        y = crate::poisson::rk4_step(|v| trunc.rhs_real(v), &y, dt);
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || v.abs() > sde::BLOWUP_THRESHOLD {
                return Err(Error::BlowUp {
                    time: (s + 1) as f64 * dt,
                    magnitude: y[i].abs(),
                    threshold: sde::BLOWUP_THRESHOLD,
                });
            }
        }
        if (s + 1) % every == 0 || s + 1 == steps {
            record(&y, (s + 1) as f64 * dt, &mut series);
        }
    }
    Ok((SpectralState::from_real(trunc, &y), series))
}

/// Per-mode equilibrium spectrum entry.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub n: i32,
    pub m: i32,
    pub alpha_nm: f64,
    pub mean_sq_amp: f64,
    pub predicted: f64,
    pub std_err: f64,
}

/// Options of a stochastic thermalization run.
#[derive(Debug, Clone)]
pub struct ThermalizeOptions {
    pub d: f64,
    pub beta: f64,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub members: usize,
    /// Steps discarded before sampling begins.
    pub burn_in: usize,
    /// Sampling cadence after burn-in.
    pub sample_every: usize,
}

/// Result of a thermalization run: the mode spectrum and the final ensemble
/// of real-chart states.
pub struct Thermalization {
    pub spectrum: Vec<SpectrumRow>,
    pub members: usize,
    pub samples_per_member: usize,
    pub final_states: Vec<f64>,
}

/// Evolves an ensemble of identical copies under the perturbed dynamics and
/// compares the long-run spectrum against `<|phi^nm|^2> = 1/(2 alpha_nm)`.
pub fn thermalize(
    trunc: &Truncation,
    initial: &SpectralState,
    opts: &ThermalizeOptions,
) -> Result<Thermalization> {
    if trunc.c != 0.0 {
        return Err(Error::InvalidArgument(
            "thermalization requires c = 0 (the Casimir and equilibrium hold only there)".into(),
        ));
    }
    if opts.beta < 0.0 || opts.mu < 0.0 || opts.beta + opts.mu <= 0.0 {
        return Err(Error::NonIntegrable(
            "equilibrium needs beta, mu >= 0 and not both zero".into(),
        ));
    }
    if opts.members == 0 || opts.steps == 0 || opts.burn_in >= opts.steps {
        return Err(Error::InvalidArgument(
            "need members >= 1, steps >= 1, burn_in < steps".into(),
        ));
    }
    let sys = system(trunc);
    let dim = trunc.real_dim();
    let y0 = initial.to_real(trunc);
    let mut particles = Vec::with_capacity(opts.members * dim);
    for _ in 0..opts.members {
        particles.extend_from_slice(&y0);
    }
    let noise = NoiseModel::new(opts.d, opts.seed)?;
    let friction = FrictionModel::fixed(opts.beta, opts.d);
    let mut ens = Ensemble::new(dim, particles, noise, friction)?;

    let nmodes = trunc.nmodes();
    let mut sums = vec![0.0; opts.members * nmodes];
    let mut samples = 0usize;
    let every = opts.sample_every.max(1);
    for s in 0..opts.steps {
        sde::step_stratonovich(&mut ens, &sys, opts.dt)?;
        if s + 1 > opts.burn_in && (s + 1 - opts.burn_in) % every == 0 {
            samples += 1;
            for member in 0..opts.members {
                let y = &ens.particles[member * dim..(member + 1) * dim];
                accumulate_mode_power(trunc, y, &mut sums[member * nmodes..(member + 1) * nmodes]);
            }
        }
    }
    if samples == 0 {
        return Err(Error::InsufficientSamples("no post-burn-in samples taken".into()));
    }

    let mut spectrum = Vec::with_capacity(nmodes);
    for (idx, &(n, m)) in trunc.modes.iter().enumerate() {
        // Per-member time averages; members are independent streams.
        let means: Vec<f64> = (0..opts.members)
            .map(|member| sums[member * nmodes + idx] / samples as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / opts.members as f64;
        let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (opts.members.max(2) - 1) as f64;
        let std_err = (var / opts.members as f64).sqrt();
        let alpha = alpha_nm(n, m, opts.beta, opts.mu);
        spectrum.push(SpectrumRow {
            n,
            m,
            alpha_nm: alpha,
            mean_sq_amp: mean,
            predicted: 1.0 / (2.0 * alpha),
            std_err,
        });
    }
    Ok(Thermalization {
        spectrum,
        members: opts.members,
        samples_per_member: samples,
        final_states: ens.particles,
    })
}

fn accumulate_mode_power(trunc: &Truncation, y: &[f64], sums: &mut [f64]) {
    sums[trunc.zero] += y[0] * y[0];
    for (slot, &ri) in trunc.reps.iter().enumerate() {
        let a = y[1 + 2 * slot];
        let b = y[2 + 2 * slot];
        let power = a * a + b * b;
        sums[ri] += power;
        sums[trunc.conj[ri]] += power;
    }
}

/// Closed-form partition function over the independent real degrees of
/// freedom: `Z = sqrt(pi/alpha_00) prod_reps pi/(2 alpha_nm)`.
///
/// This is the real-Gaussian evaluation; the product the source text reaches
/// through polar factors is reported by callers for comparison, not asserted.
pub fn partition_function(k: usize, beta: f64, mu: f64) -> Result<f64> {
    if beta < 0.0 || mu < 0.0 || beta + mu <= 0.0 {
        return Err(Error::NonIntegrable(
            "partition function needs beta, mu >= 0 and not both zero".into(),
        ));
    }
    let trunc = Truncation::new(k, 0.0)?;
    let mut z = (PI / alpha_nm(0, 0, beta, mu)).sqrt();
    for &ri in &trunc.reps {
        let (n, m) = trunc.modes[ri];
        z *= PI / (2.0 * alpha_nm(n, m, beta, mu));
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_state(trunc: &Truncation, sigma: f64, seed: u64) -> SpectralState {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let y: Vec<f64> =
            (0..trunc.real_dim()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        SpectralState::from_real(trunc, &y)
    }

    #[test]
    fn coefficient_values() {
        // C^i0 = 0 for all i.
        let trunc = Truncation::new(2, 0.7).unwrap();
        for &mi in trunc.modes() {
            let (_, c) = coefficients(mi, (0, 0), 0.7);
            assert_eq!(c, 0.0);
        }
        // i=(1,0), j=(0,1): C = 3/(16 pi^2).
        let (_, c) = coefficients((1, 0), (0, 1), 0.3);
        assert!((c - 3.0 / (16.0 * PI * PI)).abs() < 1e-16);
        // B vanishes identically at c = 0.
        for &mi in trunc.modes() {
            for &mj in trunc.modes() {
                let (b, _) = coefficients(mi, mj, 0.0);
                assert_eq!(b, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn hamiltonian_single_pair() {
        // phi^10 = phi^-10 = 0.5: H = 2 pi^2.
        let trunc = Truncation::new(1, 0.0).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); trunc.nmodes()];
        coeffs[trunc.mode_index(1, 0).unwrap()] = Complex64::new(0.5, 0.0);
        coeffs[trunc.mode_index(-1, 0).unwrap()] = Complex64::new(0.5, 0.0);
        let state = SpectralState::new(&trunc, coeffs).unwrap();
        let h = trunc.hamiltonian_complex(state.coeffs());
        assert!((h - 2.0 * PI * PI).abs() < 1e-12);
        // Real-chart value agrees.
        let y = state.to_real(&trunc);
        assert!((trunc.hamiltonian_real(&y) - h).abs() < 1e-12);
        // Zero state has zero energy and Casimir.
        let z = SpectralState::zero(&trunc);
        assert_eq!(trunc.hamiltonian_complex(z.coeffs()), 0.0);
        assert_eq!(trunc.casimir_complex(z.coeffs()), 0.0);
    }

    #[test]
    fn reality_constraint_enforced() {
        let trunc = Truncation::new(1, 0.0).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); trunc.nmodes()];
        coeffs[trunc.mode_index(1, 0).unwrap()] = Complex64::new(0.5, 0.2);
        coeffs[trunc.mode_index(-1, 0).unwrap()] = Complex64::new(0.9, 0.0);
        assert!(SpectralState::new(&trunc, coeffs).is_err());
    }

    #[test]
    fn real_operator_antisymmetric_and_matches_complex_dynamics() {
        for k in [1usize, 2] {
            for c in [0.0, 0.8] {
                let trunc = Truncation::new(k, c).unwrap();
                let state = random_state(&trunc, 0.3, 42 + k as u64);
                let y = state.to_real(&trunc);
                let j = trunc.real_operator(&y);
                let mut worst = 0.0_f64;
                for a in 0..trunc.real_dim() {
                    for b in 0..trunc.real_dim() {
                        worst = worst.max((j[(a, b)] + j[(b, a)]).abs());
                    }
                }
                assert_eq!(worst, 0.0, "mirror antisymmetry is exact by construction");

                // Real-chart velocity maps to the complex operator path.
                let ydot = trunc.rhs_real(&y);
                let phidot_from_real = trunc.complex_from_real(&ydot);
                let phidot = trunc.rhs_operator_complex(state.coeffs());
                // The real chart carries d/dt of (a, b); complex_from_real of
                // the velocity vector is exactly d phi/dt.
                for i in 0..trunc.nmodes() {
                    assert!(
                        (phidot_from_real[i] - phidot[i]).norm() < 1e-10,
                        "K={k} c={c} mode {i}: {} vs {}",
                        phidot_from_real[i],
                        phidot[i]
                    );
                }
            }
        }
    }

    #[test]
    fn dual_path_rhs_agreement() {
        for k in [1usize, 2, 3] {
            let trunc = Truncation::new(k, 0.6).unwrap();
            let state = random_state(&trunc, 0.4, 7 * k as u64 + 1);
            let conv = trunc.rhs_convolution(state.coeffs());
            let oper = trunc.rhs_operator_complex(state.coeffs());
            let scale = conv.iter().map(|v| v.norm()).fold(1e-30, f64::max);
            for i in 0..trunc.nmodes() {
                assert!(
                    (conv[i] - oper[i]).norm() <= 1e-12 * scale.max(1.0),
                    "K={k} mode {i}: {} vs {}",
                    conv[i],
                    oper[i]
                );
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let trunc = Truncation::new(2, 0.5).unwrap();
        let state = random_state(&trunc, 0.3, 99);
        let y = state.to_real(&trunc);
        let analytic = trunc.real_operator_partials(&y);
        let dim = trunc.real_dim();
        let mut yp = y.clone();
        let mut ym = y.clone();
        for g in 0..dim {
            let h = 1e-6 * (1.0 + y[g].abs());
            yp[g] = y[g] + h;
            ym[g] = y[g] - h;
            let fd = (trunc.real_operator(&yp) - trunc.real_operator(&ym)) / (2.0 * h);
            let diff = (&fd - &analytic[g]).abs().max();
            assert!(diff < 1e-8, "partial {g}: defect {diff}");
            yp[g] = y[g];
            ym[g] = y[g];
        }
    }

    #[test]
    fn single_pair_rhs_is_zero() {
        // One excited conjugate pair has no triad partner: rhs = 0 at c = 0.
        let trunc = Truncation::new(2, 0.0).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); trunc.nmodes()];
        coeffs[trunc.mode_index(1, 1).unwrap()] = Complex64::new(0.3, -0.2);
        coeffs[trunc.mode_index(-1, -1).unwrap()] = Complex64::new(0.3, 0.2);
        let state = SpectralState::new(&trunc, coeffs).unwrap();
        let conv = trunc.rhs_convolution(state.coeffs());
        assert!(conv.iter().all(|v| v.norm() == 0.0));
        let oper = trunc.rhs_operator_complex(state.coeffs());
        assert!(oper.iter().all(|v| v.norm() < 1e-16));
    }

    #[test]
    fn casimir_gradient_in_kernel() {
        let trunc = Truncation::new(3, 0.0).unwrap();
        let sys = system(&trunc);
        for seed in 0..5 {
            let state = random_state(&trunc, 0.4, 1000 + seed);
            let y = state.to_real(&trunc);
            let r = crate::poisson::casimir_residual(&sys, 0, &y).unwrap();
            let worst = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-12, "Casimir residual {worst}");
        }
    }

    #[test]
    fn divergence_free_real_chart() {
        let trunc = Truncation::new(2, 0.4).unwrap();
        let sys = system(&trunc);
        let state = random_state(&trunc, 0.4, 5);
        let y = state.to_real(&trunc);
        let div = crate::poisson::divergence_residual(&sys, &y).unwrap();
        let worst = div.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-13, "divergence defect {worst}");
    }

    #[test]
    fn interior_triads_satisfy_jacobi() {
        for k in [2usize, 3] {
            let trunc = Truncation::new(k, 0.7).unwrap();
            let state = random_state(&trunc, 0.5, 21 * k as u64);
            let r = trunc.interior_triad_residual(state.coeffs());
            assert!(r <= 1e-10, "K={k} interior residual {r}");
        }
    }

    #[test]
    fn boundary_triads_reported_nonzero() {
        // The truncation artifact: boundary triads generally fail Jacobi.
        let trunc = Truncation::new(2, 0.0).unwrap();
        let state = random_state(&trunc, 0.5, 3);
        let r = trunc.boundary_triad_residual(state.coeffs());
        assert!(r > 1e-8, "boundary residual unexpectedly small: {r}");
    }

    #[test]
    fn liouville_trace_vanishes() {
        let trunc = Truncation::new(2, 0.3).unwrap();
        let state = random_state(&trunc, 0.4, 8);
        let y = state.to_real(&trunc);
        let tr = trunc.liouville_trace_fd(&y);
        assert!(tr.abs() <= 1e-8, "Liouville trace {tr}");
    }

    #[test]
    fn deterministic_integration_conserves_h_and_c() {
        let trunc = Truncation::new(3, 0.0).unwrap();
        let state = random_state(&trunc, 0.25, 13);
        let y = state.to_real(&trunc);
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>();
        let scale = 1.0 / norm.sqrt();
        let y: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let unit = SpectralState::from_real(&trunc, &y);
        let (_, series) = integrate_deterministic(&trunc, &unit, 1e-3, 1000, 1000).unwrap();
        let h0 = series.first().unwrap().h;
        let c0 = series.first().unwrap().casimir;
        let h1 = series.last().unwrap().h;
        let c1 = series.last().unwrap().casimir;
        assert!(((h1 - h0) / h0).abs() <= 1e-6, "H drift {}", (h1 - h0) / h0);
        assert!(((c1 - c0) / c0).abs() <= 1e-6, "C drift {}", (c1 - c0) / c0);
    }

    #[test]
    fn rk4_fourth_order_in_energy_drift() {
        let trunc = Truncation::new(2, 0.0).unwrap();
        let state = random_state(&trunc, 0.5, 29);
        let drift = |dt: f64| {
            let steps = (0.5 / dt).round() as usize;
            let (_, series) = integrate_deterministic(&trunc, &state, dt, steps, steps).unwrap();
            (series.last().unwrap().h - series[0].h).abs()
        };
        let d1 = drift(2e-3);
        let d2 = drift(1e-3);
        let ratio = d1 / d2;
        assert!(ratio > 8.0 && ratio < 32.0, "drift ratio {ratio} (expected ~16)");
    }

    #[test]
    fn partition_function_values() {
        // Monotone decrease toward 0 as beta grows.
        let z1 = partition_function(1, 1.0, 1.0).unwrap();
        let z2 = partition_function(1, 4.0, 1.0).unwrap();
        let z3 = partition_function(1, 16.0, 1.0).unwrap();
        assert!(z1 > z2 && z2 > z3 && z3 > 0.0);
        assert!(matches!(partition_function(1, 0.0, 0.0), Err(Error::NonIntegrable(_))));
        assert!(matches!(partition_function(1, -1.0, 1.0), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn thermalize_requires_c_zero_and_integrable_params() {
        let trunc = Truncation::new(1, 0.5).unwrap();
        let state = SpectralState::zero(&trunc);
        let opts = ThermalizeOptions {
            d: 0.1,
            beta: 1.0,
            mu: 1.0,
            dt: 1e-3,
            steps: 10,
            seed: 1,
            members: 2,
            burn_in: 5,
            sample_every: 1,
        };
        assert!(thermalize(&trunc, &state, &opts).is_err());
        let trunc0 = Truncation::new(1, 0.0).unwrap();
        let state0 = SpectralState::zero(&trunc0);
        let bad = ThermalizeOptions { beta: 0.0, mu: 0.0, ..opts.clone() };
        assert!(matches!(thermalize(&trunc0, &state0, &bad), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn frozen_spectrum_without_noise() {
        // D = 0 keeps H and C at their flow-preserved values.
        let trunc = Truncation::new(2, 0.0).unwrap();
        let state = random_state(&trunc, 0.3, 55);
        let opts = ThermalizeOptions {
            d: 0.0,
            beta: 1.0,
            mu: 1.0,
            dt: 1e-3,
            steps: 200,
            seed: 2,
            members: 1,
            burn_in: 100,
            sample_every: 10,
        };
        let out = thermalize(&trunc, &state, &opts).unwrap();
        let y_final = &out.final_states[..trunc.real_dim()];
        let h0 = trunc.hamiltonian_real(&state.to_real(&trunc));
        let h1 = trunc.hamiltonian_real(y_final);
        assert!(((h1 - h0) / h0).abs() < 1e-6);
    }
}
