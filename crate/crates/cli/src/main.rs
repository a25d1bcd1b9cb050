use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wake_cli::commands::{self, KernelQuery};
use wake_cli::config::{parse_vec3, ZetaChoice};
use wake_cli::{Inequality, RunConfig, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_PASS, THREADS_ENV};

#[derive(Parser)]
#[command(name = "wake", version, about = "Periodic wake solver for a rigid body in a viscous fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Candidate ζ and the wake-drift diagnostic.
    CheckWake {
        #[command(flatten)]
        common: Common,
        /// `auto` or `x,y,z`.
        #[arg(long)]
        zeta: Option<String>,
    },
    /// Evaluate E(x, t−s), its gradient and, with a config, K(x, y; t, s).
    Kernel {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        x: [f64; 3],
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,0", allow_hyphen_values = true)]
        y: [f64; 3],
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        s: f64,
    },
    /// Sweep one (or every) potential/kernel inequality.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        inequality: Inequality,
    },
    /// Solve v = Sg + Λ(v⊗v) and report decay and grid-extension checks.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        zeta: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Overall forcing amplitude.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Skip the R_max-doubling re-solve.
        #[arg(long)]
        no_extension: bool,
    },
    /// Fit radial decay exponents of a field CSV written by `solve`.
    DecayFit {
        #[arg(long)]
        field: PathBuf,
        /// Optional config supplying rays and the fit range.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        zeta: Option<[f64; 3]>,
        #[arg(long)]
        r_lo: Option<f64>,
        #[arg(long)]
        r_hi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<commands::Report> {
    match cli.command {
        Command::CheckWake { common, zeta } => {
            let mut cfg = load(&common)?;
            if let Some(z) = zeta {
                cfg.solver.zeta = ZetaChoice::parse(&z)?;
            }
            cfg.validate()?;
            commands::check_wake(&cfg, cfg.output.as_deref())
        }
        Command::Kernel { config, x, y, t, s } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            commands::kernel(cfg.as_ref(), &KernelQuery { x, y, t, s })
        }
        Command::VerifyBounds { common, inequality } => {
            let cfg = load(&common)?;
            commands::verify_bounds(&cfg, inequality, cfg.output.as_deref())
        }
        Command::Solve { common, zeta, tol, max_iter, amplitude, no_extension } => {
            let mut cfg = load(&common)?;
            if let Some(z) = zeta {
                cfg.solver.zeta = ZetaChoice::parse(&z)?;
            }
            cfg.solver.tol = tol.unwrap_or(cfg.solver.tol);
            cfg.solver.max_iter = max_iter.unwrap_or(cfg.solver.max_iter);
            cfg.forcing.amplitude = amplitude.unwrap_or(cfg.forcing.amplitude);
            cfg.solver.extension &= !no_extension;
            cfg.validate()?;
            let out = commands::default_out(&cfg);
            commands::solve(&cfg, &out)
        }
        Command::DecayFit { field, config, zeta, r_lo, r_hi, out } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            commands::decay_fit(cfg.as_ref(), &field, zeta, r_lo, r_hi, out.as_deref())
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a worker count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors exit 1; 2 is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { EXIT_PASS as u8 });
        }
    };
    let result = init_threads().and_then(|_| run(cli));
    match result {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
            // a closed pipe (e.g. `| head`) is not an error of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::from(if report.passed { EXIT_PASS } else { EXIT_CHECK_FAILED } as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
