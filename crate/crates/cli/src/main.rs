use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invdecomp_cli::{list_presets, preset, run, ConfigError, ExperimentConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "invdecomp", version, about = "Character decompositions of invariant Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a config file or preset.
    Run {
        /// Config file; omit when --preset is given.
        config: Option<PathBuf>,
        /// Output directory, overriding output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed, overriding the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Start from a bundled preset instead of a file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Multiply every tolerance except the z-score by this factor.
        #[arg(long)]
        tol_scale: Option<f64>,
    },
    /// Print the bundled preset names.
    ListPresets,
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("INVDECOMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("INVDECOMP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))
}

fn load(config: Option<PathBuf>, preset_name: Option<String>) -> Result<ExperimentConfig, ConfigError> {
    match (config, preset_name) {
        (Some(p), None) => ExperimentConfig::load(&p),
        (None, Some(name)) => preset(&name),
        _ => Err(ConfigError::Invalid("give a config file or --preset NAME".into())),
    }
}

fn main_inner(cli: Cli) -> Result<i32, ConfigError> {
    match cli.command {
        Command::ListPresets => {
            for name in list_presets() {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok ({} checks)", config.display(), cfg.checks.len());
            Ok(0)
        }
        Command::Run {
            config,
            out,
            seed,
            preset,
            tol_scale,
        } => {
            init_threads()?;
            let mut cfg = load(config, preset)?;
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(s) = seed {
                cfg.seed = Some(s);
            }
            if let Some(x) = tol_scale {
                cfg.scale_tolerances(x)?;
            }
            let result = run(&cfg)?;
            print!("{}", result.report.summary());
            for f in result.report.failures() {
                eprintln!("check {} failed: {}", f.name, f.message);
            }
            println!("outputs in {}", cfg.output.dir.display());
            Ok(result.report.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let code = main_inner(Cli::parse()).unwrap_or_else(|e| {
        eprintln!("config error: {e}");
        EXIT_CONFIG
    });
    ExitCode::from(code as u8)
}
