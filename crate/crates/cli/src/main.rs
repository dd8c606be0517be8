//! Command-line entry point.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 usage/config error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metriplectic::error::Error;
use metriplectic::run::{self, RunConfig};
use metriplectic::{report, systems};

#[derive(Parser)]
#[command(name = "metriplectic", version, about = "Stochastic thermalization and bracket verification for noncanonical Hamiltonian systems", disable_help_subcommand = true)]
struct Cli {
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario described by a TOML config file.
    Run {
        /// Path to the run config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the algebraic identity suite on a registered system.
    Verify(VerifyArgs),
    /// Run the macroscopic bracket axiom suite on a registered system.
    VerifyBrackets(VerifyBracketsArgs),
    /// Particle-ensemble scenario from flags (no config file).
    Sde(SdeArgs),
    /// Grid Fokker-Planck relaxation from flags.
    Fpe(FpeArgs),
    /// Spectral truncation scenarios.
    Chm(ChmArgs),
    /// List registered system names.
    ListSystems,
}

#[derive(Args)]
struct VerifyArgs {
    /// System name (see list-systems), or file:<path> for a polynomial one.
    system: String,
    /// Truncation half-width for chm.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Drift parameter for chm.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Random states to test.
    #[arg(long, default_value_t = 100)]
    states: usize,
}

#[derive(Args)]
struct VerifyBracketsArgs {
    system: String,
    /// Cells per grid axis.
    #[arg(long, default_value_t = 64)]
    cells: usize,
    /// Diffusion amplitude entering the dissipative bracket.
    #[arg(long, default_value_t = 0.2)]
    d: f64,
}

#[derive(Args)]
struct SdeArgs {
    #[arg(long, default_value = "canonical2d")]
    system: String,
    #[arg(long, default_value_t = 10_000)]
    particles: usize,
    #[arg(long, default_value_t = 0.2)]
    d: f64,
    #[arg(long, default_value = "fixed:1.0")]
    beta_mode: String,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 50)]
    every: usize,
}

#[derive(Args)]
struct FpeArgs {
    #[arg(long, default_value = "canonical2d")]
    system: String,
    #[arg(long, default_value_t = 128)]
    cells: usize,
    #[arg(long, default_value_t = 0.2)]
    d: f64,
    #[arg(long, default_value = "adaptive")]
    beta_mode: String,
    #[arg(long, default_value_t = 0.004)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 50)]
    every: usize,
}

#[derive(Args)]
struct ChmArgs {
    #[command(subcommand)]
    action: ChmAction,
}

#[derive(Subcommand)]
enum ChmAction {
    /// Deterministic spectral integration.
    Integrate {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Stochastic thermalization toward the closed-form spectrum.
    Thermalize {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 2e-3)]
        dt: f64,
        #[arg(long, default_value_t = 15000)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        members: usize,
    },
    /// Identity suite for the truncation (shorthand for `verify chm`).
    Verify {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        #[arg(long, default_value_t = 100)]
        states: usize,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnknownSystem(_) | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = run::load_config(&config)?;
            let manifest = run::run(&cfg, cli.out.as_deref(), cli.seed)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest json"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let handle = systems::build(&args.system, args.k, args.c)?;
            let seed = cli.seed.unwrap_or(0);
            let rep = report::verify_system(&handle, args.states, seed)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("report json"));
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::VerifyBrackets(args) => {
            let handle = systems::build(&args.system, 0, 0.0)?;
            let rep = report::verify_brackets(&handle, args.cells, args.d)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("report json"));
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sde(args) => {
            let handle = systems::build(&args.system, 0, 0.0)?;
            let dim = handle.system.dim();
            let (lo, hi) = handle.default_box.clone();
            let cfg = RunConfig {
                scenario: "sde".into(),
                seed: cli.seed.unwrap_or(0),
                dt: args.dt,
                t_end: None,
                steps: Some(args.steps),
                d: args.d,
                beta_mode: args.beta_mode.clone(),
                system: run::SystemSection { name: args.system.clone(), k: 0, c: 0.0 },
                grid: Some(run::GridSection {
                    min: lo,
                    max: hi,
                    cells: vec![48; dim],
                }),
                init: Some(run::InitSection {
                    kind: "gaussian".into(),
                    center: Some(vec![1.0; dim]),
                    sigma: Some(vec![0.5; dim]),
                    beta: None,
                    mu: None,
                }),
                sde: Some(run::SdeSection {
                    n_particles: args.particles,
                    adaptive_update_every: 10,
                }),
                fpe: None,
                chm: None,
                output: run::OutputSection { every: args.every, ..Default::default() },
            };
            let manifest = run::run(&cfg, cli.out.as_deref(), None)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest json"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Fpe(args) => {
            let handle = systems::build(&args.system, 0, 0.0)?;
            let dim = handle.system.dim();
            let (lo, hi) = handle.default_box.clone();
            let cfg = RunConfig {
                scenario: "fpe".into(),
                seed: cli.seed.unwrap_or(0),
                dt: args.dt,
                t_end: Some(args.t_end),
                steps: None,
                d: args.d,
                beta_mode: args.beta_mode.clone(),
                system: run::SystemSection { name: args.system.clone(), k: 0, c: 0.0 },
                grid: Some(run::GridSection {
                    min: lo,
                    max: hi,
                    cells: vec![args.cells; dim],
                }),
                init: Some(run::InitSection {
                    kind: "gaussian".into(),
                    center: Some(vec![1.0; dim]),
                    sigma: Some(vec![1.0 / (2.0_f64).sqrt(); dim]),
                    beta: None,
                    mu: None,
                }),
                sde: None,
                fpe: Some(run::FpeSection::default()),
                chm: None,
                output: run::OutputSection { every: args.every, ..Default::default() },
            };
            let manifest = run::run(&cfg, cli.out.as_deref(), None)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest json"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Chm(args) => match args.action {
            ChmAction::Integrate { k, c, dt, steps, every } => {
                let cfg = RunConfig {
                    scenario: "chm-integrate".into(),
                    seed: cli.seed.unwrap_or(0),
                    dt,
                    t_end: None,
                    steps: Some(steps),
                    d: 0.0,
                    beta_mode: "fixed:1.0".into(),
                    system: run::SystemSection { name: "chm".into(), k, c },
                    grid: None,
                    init: Some(run::InitSection {
                        kind: "random".into(),
                        center: None,
                        sigma: Some(vec![0.3]),
                        beta: None,
                        mu: None,
                    }),
                    sde: None,
                    fpe: None,
                    chm: None,
                    output: run::OutputSection { every, ..Default::default() },
                };
                let manifest = run::run(&cfg, cli.out.as_deref(), None)?;
                println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest json"));
                Ok(ExitCode::SUCCESS)
            }
            ChmAction::Thermalize { k, d, beta, mu, dt, steps, members } => {
                let cfg = RunConfig {
                    scenario: "chm-thermalize".into(),
                    seed: cli.seed.unwrap_or(0),
                    dt,
                    t_end: None,
                    steps: Some(steps),
                    d,
                    beta_mode: format!("fixed:{beta}"),
                    system: run::SystemSection { name: "chm".into(), k, c: 0.0 },
                    grid: None,
                    init: Some(run::InitSection {
                        kind: "random".into(),
                        center: None,
                        sigma: Some(vec![0.2]),
                        beta: None,
                        mu: None,
                    }),
                    sde: None,
                    fpe: None,
                    chm: Some(run::ChmSection {
                        members,
                        burn_in: None,
                        sample_every: 20,
                        beta,
                        mu,
                    }),
                    output: run::OutputSection::default(),
                };
                let manifest = run::run(&cfg, cli.out.as_deref(), None)?;
                println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest json"));
                Ok(ExitCode::SUCCESS)
            }
            ChmAction::Verify { k, c, states } => {
                let handle = systems::build("chm", k, c)?;
                let rep = report::verify_system(&handle, states, cli.seed.unwrap_or(0))?;
                println!("{}", serde_json::to_string_pretty(&rep).expect("report json"));
                Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
            }
        },
        Command::ListSystems => {
            for name in systems::names() {
                println!("{name}");
            }
            println!("file:<path>  (polynomial system definition)");
            Ok(ExitCode::SUCCESS)
        }
    }
}
