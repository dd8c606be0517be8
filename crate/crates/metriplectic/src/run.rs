//! Configuration-driven scenario runner.
//!
//! A run is described by a TOML config with a strict schema (unknown keys
//! are rejected). Scenarios: `fpe` (grid relaxation), `sde` (particle
//! ensemble), `chm-integrate` (deterministic spectral run), and
//! `chm-thermalize` (stochastic spectral thermalization). Every run leaves a
//! `manifest.json` listing each artifact it wrote with a checksum.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chm;
use crate::error::{Error, Result};
use crate::fpe::{BetaMode, FluxScheme, FpeProblem};
use crate::grid::{GridDistribution, PhaseGrid};
use crate::output::{ArtifactSink, ChmSidecar, EnsembleSidecar, RunManifest};
use crate::sde::{self, Ensemble, FrictionModel, NoiseModel};
use crate::systems::{self, SystemHandle};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One of `fpe`, `sde`, `chm-integrate`, `chm-thermalize`.
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    pub dt: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    /// Diffusion amplitude.
    #[serde(rename = "D", default)]
    pub d: f64,
    /// `adaptive`, `adaptive:<beta0>`, or `fixed:<beta>`.
    #[serde(default = "default_beta_mode")]
    pub beta_mode: String,
    pub system: SystemSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub init: Option<InitSection>,
    #[serde(default)]
    pub sde: Option<SdeSection>,
    #[serde(default)]
    pub fpe: Option<FpeSection>,
    #[serde(default)]
    pub chm: Option<ChmSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_beta_mode() -> String {
    "fixed:1.0".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    /// Truncation half-width (chm only).
    #[serde(default)]
    pub k: usize,
    /// Drift parameter lambda = c y (chm only).
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSection {
    pub fn build(&self) -> Result<Arc<PhaseGrid>> {
        Ok(Arc::new(PhaseGrid::new(&self.min, &self.max, &self.cells)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// `gaussian` (grid/particles), `equilibrium` (grid), `random` (chm).
    pub kind: String,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub n_particles: usize,
    #[serde(default = "default_update_every")]
    pub adaptive_update_every: usize,
}

fn default_update_every() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FpeSection {
    /// Casimir multipliers of the reference equilibrium.
    #[serde(default)]
    pub mu: Vec<f64>,
    /// `centered` (default) or `upwind`.
    #[serde(default)]
    pub flux_scheme: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChmSection {
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub mu: f64,
}

fn default_members() -> usize {
    256
}

fn default_sample_every() -> usize {
    20
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    /// Diagnostics record cadence in steps.
    #[serde(default = "default_every")]
    pub every: usize,
    /// Snapshot format: `binary` (default) or `csv`.
    #[serde(default = "default_format")]
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_out_dir(), every: default_every(), format: default_format() }
    }
}

fn default_out_dir() -> String {
    "out".to_string()
}

fn default_every() -> usize {
    50
}

fn default_format() -> String {
    "binary".to_string()
}

/// Parses and schema-validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Parsed form of the `beta_mode` key.
#[derive(Debug, Clone, Copy)]
pub enum TemperatureMode {
    Fixed(f64),
    Adaptive { beta0: f64 },
}

pub fn parse_beta_mode(s: &str) -> Result<TemperatureMode> {
    if s == "adaptive" {
        return Ok(TemperatureMode::Adaptive { beta0: 1.0 });
    }
    if let Some(rest) = s.strip_prefix("adaptive:") {
        let beta0: f64 = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad beta in beta_mode `{s}`")))?;
        return Ok(TemperatureMode::Adaptive { beta0 });
    }
    if let Some(rest) = s.strip_prefix("fixed:") {
        let beta: f64 = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad beta in beta_mode `{s}`")))?;
        return Ok(TemperatureMode::Fixed(beta));
    }
    Err(Error::Config(format!(
        "beta_mode `{s}` not recognized (use `adaptive`, `adaptive:<beta0>`, or `fixed:<beta>`)"
    )))
}

fn parse_flux_scheme(s: Option<&str>) -> Result<FluxScheme> {
    match s {
        None | Some("centered") => Ok(FluxScheme::Centered),
        Some("upwind") => Ok(FluxScheme::Upwind),
        Some(other) => Err(Error::Config(format!("unknown flux scheme `{other}`"))),
    }
}

fn resolve_steps(cfg: &RunConfig) -> Result<usize> {
    match (cfg.steps, cfg.t_end) {
        (Some(s), _) if s >= 1 => Ok(s),
        (None, Some(t)) if t > 0.0 && cfg.dt > 0.0 => Ok((t / cfg.dt).ceil() as usize),
        _ => Err(Error::Config("need steps >= 1 or t_end > 0".into())),
    }
}

fn build_handle(cfg: &RunConfig) -> Result<SystemHandle> {
    systems::build(&cfg.system.name, cfg.system.k, cfg.system.c)
}

/// Executes a run config; artifacts land in `output.directory` unless
/// overridden. Returns the manifest.
pub fn run(
    cfg: &RunConfig,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| Path::new(&cfg.output.directory).to_path_buf());
    let mut sink = ArtifactSink::new(&out_dir)?;

    match cfg.scenario.as_str() {
        "fpe" => run_fpe(&cfg, &mut sink)?,
        "sde" => run_sde(&cfg, &mut sink)?,
        "chm-integrate" => run_chm_integrate(&cfg, &mut sink)?,
        "chm-thermalize" => run_chm_thermalize(&cfg, &mut sink)?,
        other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
    }

    let echo = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    sink.finish(cfg.seed, echo, started.elapsed().as_secs_f64())
}

fn sde_csv_header(n_casimirs: usize) -> String {
    let mut h = String::from("t,E,S,beta");
    for k in 1..=n_casimirs {
        h.push_str(&format!(",C{k}"));
    }
    h
}

fn run_fpe(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let handle = build_handle(cfg)?;
    if handle.chm.is_some() {
        return Err(Error::Config("the fpe scenario needs a low-dimensional system".into()));
    }
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("fpe scenario needs a [grid] section".into()))?
        .build()?;
    let fpe_section = cfg.fpe.clone().unwrap_or_default();
    let scheme = parse_flux_scheme(fpe_section.flux_scheme.as_deref())?;
    let prob = FpeProblem::new(&handle.system, grid.clone(), cfg.d, scheme)?;
    let mu = fpe_section.mu.clone();
    if mu.len() != handle.system.casimirs.len() {
        if !mu.is_empty() {
            return Err(Error::Config(format!(
                "fpe.mu has {} entries for {} Casimirs",
                mu.len(),
                handle.system.casimirs.len()
            )));
        }
    }
    let mu = if mu.is_empty() { vec![0.0; handle.system.casimirs.len()] } else { mu };

    let mode = match parse_beta_mode(&cfg.beta_mode)? {
        TemperatureMode::Fixed(b) => BetaMode::Fixed(b),
        TemperatureMode::Adaptive { .. } => BetaMode::Adaptive,
    };

    let init = cfg
        .init
        .as_ref()
        .ok_or_else(|| Error::Config("fpe scenario needs an [init] section".into()))?;
    let f0 = match init.kind.as_str() {
        "gaussian" => {
            let center = init
                .center
                .clone()
                .ok_or_else(|| Error::Config("gaussian init needs `center`".into()))?;
            let sigma = init
                .sigma
                .clone()
                .ok_or_else(|| Error::Config("gaussian init needs `sigma`".into()))?;
            if center.len() != grid.dim() || sigma.len() != grid.dim() {
                return Err(Error::Config("init center/sigma must match the grid dimension".into()));
            }
            GridDistribution::normalized_from(grid.clone(), move |x| {
                let mut e = 0.0;
                for a in 0..x.len() {
                    let d = x[a] - center[a];
                    e += d * d / (2.0 * sigma[a] * sigma[a]);
                }
                (-e).exp()
            })?
        }
        "equilibrium" => {
            let beta = init.beta.unwrap_or(1.0);
            let mu_init = init.mu.clone().unwrap_or_else(|| mu.clone());
            prob.equilibrium(beta, &mu_init)?.0
        }
        other => return Err(Error::Config(format!("unknown fpe init kind `{other}`"))),
    };

    let t_end = cfg.t_end.ok_or_else(|| Error::Config("fpe scenario needs t_end".into()))?;
    let boundary_mass = f0.boundary_mass();
    let (series, final_f) =
        prob.relax_to_equilibrium(f0, cfg.dt, t_end, mode, &mu, cfg.output.every)?;

    let mut header = sde_csv_header(handle.system.casimirs.len());
    header.push_str(",dSdt,L1_eq");
    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|d| {
            let mut row = vec![d.t, d.energy, d.entropy, d.beta];
            row.extend(d.casimirs.iter().copied());
            row.push(d.ds_dt);
            row.push(d.l1_eq);
            row
        })
        .collect();
    sink.write_csv("diagnostics.csv", &header, &rows)?;
    sink.write_distribution("final_f", &final_f)?;
    sink.write_json(
        "fpe_summary.json",
        &serde_json::json!({
            "initial_boundary_mass": boundary_mass,
            "dt_stability_bound": prob.dt_stability_bound(),
            "records": series.len(),
            "final_time": final_f.time,
        }),
    )?;
    Ok(())
}

fn run_sde(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let handle = build_handle(cfg)?;
    let sys = &handle.system;
    let sde_section = cfg
        .sde
        .as_ref()
        .ok_or_else(|| Error::Config("sde scenario needs an [sde] section".into()))?;
    let steps = resolve_steps(cfg)?;
    let noise = NoiseModel::new(cfg.d, cfg.seed)?;
    let friction = match parse_beta_mode(&cfg.beta_mode)? {
        TemperatureMode::Fixed(b) => FrictionModel::fixed(b, cfg.d),
        TemperatureMode::Adaptive { beta0 } => {
            FrictionModel::adaptive(beta0, cfg.d, sde_section.adaptive_update_every)
        }
    };

    let init = cfg
        .init
        .as_ref()
        .ok_or_else(|| Error::Config("sde scenario needs an [init] section".into()))?;
    if init.kind != "gaussian" {
        return Err(Error::Config(format!("unknown sde init kind `{}`", init.kind)));
    }
    let center = init
        .center
        .clone()
        .ok_or_else(|| Error::Config("gaussian init needs `center`".into()))?;
    let sigma = init
        .sigma
        .clone()
        .ok_or_else(|| Error::Config("gaussian init needs `sigma`".into()))?;
    let mut ens = Ensemble::gaussian(
        sys.dim(),
        sde_section.n_particles,
        &center,
        &sigma,
        noise,
        friction,
    )?;

    let density_grid = cfg.grid.as_ref().map(|g| g.build()).transpose()?;
    let series = sde::evolve(
        &mut ens,
        sys,
        cfg.dt,
        steps,
        cfg.output.every,
        density_grid.as_deref(),
    )?;

    let header = sde_csv_header(sys.casimirs.len());
    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|d| {
            let mut row = vec![
                d.t,
                d.e_mean,
                d.entropy.unwrap_or(f64::NAN),
                d.beta_estimate.unwrap_or(f64::NAN),
            ];
            row.extend(d.casimir_means.iter().copied());
            row
        })
        .collect();
    sink.write_csv("diagnostics.csv", &header, &rows)?;

    match cfg.output.format.as_str() {
        "binary" => {
            sink.write_f64_binary("ensemble.bin", &ens.particles)?;
            sink.write_json(
                "ensemble.json",
                &EnsembleSidecar::new(ens.len(), ens.dim(), ens.time),
            )?;
        }
        "csv" => {
            let rows: Vec<Vec<f64>> =
                (0..ens.len()).map(|i| ens.particle(i).to_vec()).collect();
            let header: Vec<String> = (0..ens.dim()).map(|a| format!("x{a}")).collect();
            sink.write_csv("ensemble.csv", &header.join(","), &rows)?;
        }
        other => return Err(Error::Config(format!("unknown output format `{other}`"))),
    }
    Ok(())
}

fn chm_initial_state(
    cfg: &RunConfig,
    trunc: &chm::Truncation,
) -> Result<chm::SpectralState> {
    use rand::{Rng, SeedableRng};
    let init = cfg
        .init
        .as_ref()
        .ok_or_else(|| Error::Config("chm scenarios need an [init] section".into()))?;
    match init.kind.as_str() {
        "random" => {
            let sigma = init.sigma.as_ref().map(|s| s[0]).unwrap_or(0.3);
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(cfg.seed);
            let y: Vec<f64> = (0..trunc.real_dim())
                .map(|_| sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            Ok(chm::SpectralState::from_real(trunc, &y))
        }
        "zero" => Ok(chm::SpectralState::zero(trunc)),
        other => Err(Error::Config(format!("unknown chm init kind `{other}`"))),
    }
}

fn run_chm_integrate(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    if cfg.system.name != "chm" {
        return Err(Error::Config("chm-integrate needs system.name = \"chm\"".into()));
    }
    let trunc = chm::Truncation::new(cfg.system.k, cfg.system.c)?;
    let state0 = chm_initial_state(cfg, &trunc)?;
    let steps = resolve_steps(cfg)?;
    let (state, series) =
        chm::integrate_deterministic(&trunc, &state0, cfg.dt, steps, cfg.output.every)?;

    let rows: Vec<Vec<f64>> = series.iter().map(|d| vec![d.t, d.h, d.casimir]).collect();
    sink.write_csv("diagnostics.csv", "t,H,C", &rows)?;
    let mut flat = Vec::with_capacity(2 * trunc.nmodes());
    for v in state.coeffs() {
        flat.push(v.re);
        flat.push(v.im);
    }
    sink.write_f64_binary("state.bin", &flat)?;
    sink.write_json("state.json", &ChmSidecar::new(cfg.system.k, cfg.system.c))?;
    Ok(())
}

fn run_chm_thermalize(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    if cfg.system.name != "chm" {
        return Err(Error::Config("chm-thermalize needs system.name = \"chm\"".into()));
    }
    let trunc = chm::Truncation::new(cfg.system.k, cfg.system.c)?;
    let chm_section = cfg
        .chm
        .as_ref()
        .ok_or_else(|| Error::Config("chm-thermalize needs a [chm] section".into()))?;
    let steps = resolve_steps(cfg)?;
    let state0 = chm_initial_state(cfg, &trunc)?;
    let opts = chm::ThermalizeOptions {
        d: cfg.d,
        beta: chm_section.beta,
        mu: chm_section.mu,
        dt: cfg.dt,
        steps,
        seed: cfg.seed,
        members: chm_section.members,
        burn_in: chm_section.burn_in.unwrap_or(steps / 2),
        sample_every: chm_section.sample_every,
    };
    let out = chm::thermalize(&trunc, &state0, &opts)?;

    let rows: Vec<Vec<f64>> = out
        .spectrum
        .iter()
        .map(|r| vec![r.n as f64, r.m as f64, r.alpha_nm, r.mean_sq_amp, r.predicted])
        .collect();
    sink.write_csv("spectrum.csv", "n,m,alpha_nm,mean_sq_amp,predicted", &rows)?;
    sink.write_json(
        "thermalize_summary.json",
        &serde_json::json!({
            "members": out.members,
            "samples_per_member": out.samples_per_member,
            "beta": opts.beta,
            "mu": opts.mu,
            "D": opts.d,
        }),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_named_in_error() {
        let text = "scenario = \"fpe\"\ndt = 0.01\n[system]\nname = \"canonical2d\"\n[gird]\ncells = [8, 8]\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gird"), "error must name the unknown key: {msg}");
    }

    #[test]
    fn beta_mode_parsing() {
        assert!(matches!(parse_beta_mode("adaptive").unwrap(), TemperatureMode::Adaptive { .. }));
        match parse_beta_mode("fixed:2.5").unwrap() {
            TemperatureMode::Fixed(b) => assert_eq!(b, 2.5),
            _ => panic!(),
        }
        assert!(parse_beta_mode("warm").is_err());
    }

    #[test]
    fn fpe_run_writes_artifacts_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
scenario = "fpe"
seed = 3
dt = 0.0005
t_end = 0.01
D = 0.2
beta_mode = "fixed:1.0"

[system]
name = "canonical2d"

[grid]
min = [-7.0, -7.0]
max = [7.0, 7.0]
cells = [32, 32]

[init]
kind = "gaussian"
center = [1.0, 0.0]
sigma = [1.2, 1.2]

[output]
every = 5
"#;
        let cfg = parse_config(text).unwrap();
        let manifest = run(&cfg, Some(dir.path()), None).unwrap();
        let names: Vec<&str> = manifest.outputs.iter().map(|r| r.path.as_str()).collect();
        assert!(names.contains(&"diagnostics.csv"));
        assert!(names.contains(&"final_f.bin"));
        assert!(names.contains(&"final_f.json"));
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn sde_run_is_byte_identical_across_reruns() {
        let text = r#"
scenario = "sde"
seed = 11
dt = 0.01
steps = 40
D = 0.2
beta_mode = "fixed:1.0"

[system]
name = "canonical2d"

[grid]
min = [-5.0, -5.0]
max = [5.0, 5.0]
cells = [16, 16]

[init]
kind = "gaussian"
center = [1.0, 0.0]
sigma = [0.5, 0.5]

[sde]
n_particles = 500

[output]
every = 10
"#;
        let cfg = parse_config(text).unwrap();
        let run_once = || {
            let dir = tempfile::tempdir().unwrap();
            run(&cfg, Some(dir.path()), None).unwrap();
            std::fs::read(dir.path().join("diagnostics.csv")).unwrap()
        };
        assert_eq!(run_once(), run_once());
    }
}
