use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cellflux::config::{validate_config, ExperimentConfig, Preset};
use cellflux::experiment::{export_meshes, run_flux_convergence, run_model_comparison, ExperimentError};

#[derive(Parser)]
#[command(name = "cellflux", version, about = "Compare spatial exclusion and point source diffusion models of a cell")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the holed and full meshes and export them as text
    Mesh(Common),
    /// Emergent-flux sweeps of the point source clusters (no FEM)
    FluxSweep(Common),
    /// Solve both models and write per-step comparison metrics
    Compare(Common),
    /// Check a configuration file and report every problem
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resolution preset; applied on top of --config when both are given
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn load(common: &Common) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = match (&common.config, common.preset) {
        (Some(path), preset) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                eprintln!("cannot read {}: {e}", path.display());
                ExitCode::from(EXIT_CONFIG)
            })?;
            let mut cfg = validate_config(&text).map_err(|e| {
                eprint!("{e}");
                ExitCode::from(EXIT_CONFIG)
            })?;
            if let Some(p) = preset {
                cfg.apply_preset(p);
            }
            cfg
        }
        (None, Some(p)) => ExperimentConfig::preset(p),
        (None, None) => {
            eprintln!("either --config or --preset is required");
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    };
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.check().map_err(|e| {
        eprint!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    Ok(cfg)
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ExperimentError::Config(_) => ExitCode::from(EXIT_CONFIG),
        e if e.is_solver_failure() => ExitCode::from(EXIT_SOLVER),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Mesh(c) | Command::FluxSweep(c) | Command::Compare(c) | Command::Validate(c) => c,
    };
    let cfg = match load(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Validate(_) => {
            println!("configuration is valid");
            if cfg.over_budget() {
                println!(
                    "note: estimated work {:.2e} steps×vertices per run exceeds budget {:.2e}",
                    cfg.estimated_work(),
                    cfg.output.budget
                );
            }
            ExitCode::SUCCESS
        }
        Command::Mesh(_) => match export_meshes(&cfg, &out) {
            Ok(files) => {
                files.iter().for_each(|f| println!("{}", f.display()));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::FluxSweep(_) => match run_flux_convergence(&cfg, &out) {
            Ok(files) => {
                files.iter().for_each(|f| println!("{}", f.display()));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Compare(_) => match run_model_comparison(&cfg, &out) {
            Ok(report) => {
                for c in &report.summary.checks {
                    let label = match (c.informational, c.passed) {
                        (true, true) => "info: yes",
                        (true, false) => "info: no",
                        (false, true) => "pass",
                        (false, false) => "FAIL",
                    };
                    println!("[{label}] {} ({})", c.name, c.detail);
                }
                println!("manifest: {}", out.join("manifest.json").display());
                if report.any_failed() {
                    eprintln!("one or more runs failed; see the manifest");
                    ExitCode::from(EXIT_SOLVER)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => fail(e),
        },
    }
}
