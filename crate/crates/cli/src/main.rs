use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mws_cli::output::to_json;
use mws_cli::{
    cmd_basis, cmd_effpot_kernel, cmd_figure1, cmd_reconstruct, cmd_spectrum, cmd_sweep,
    cmd_verify, with_jobs, CliError, CliResult, RunManifest, RunOptions,
};
use mws_core::model::{BasisBackend, DenominatorMode};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error
  3  i/o error
  4  config or spec validation error
  5  solver failure";

#[derive(Parser)]
#[command(name = "mws", version, about = "Effective-potential solver for periodically perturbed 1D systems", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Approx,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Unperturbed,
    V1,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the denominator mode of the config.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Override the channel basis backend of the config.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "MWS_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Base (and channel) eigenpairs.
    Basis(Common),
    /// Roots, poles, counts and realisations.
    Spectrum(Common),
    /// Wavefunction and density of one realisation over a cell.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Samples along the cell axis.
        #[arg(long)]
        samples: Option<usize>,
        /// One-based realisation index.
        #[arg(long)]
        realisation: Option<usize>,
        /// Continue evanescent roots with decaying exponentials.
        #[arg(long)]
        allow_evanescent: bool,
    },
    /// Oracle cross-checks.
    Verify(Common),
    /// Secular curve, asymptotes and intersections.
    Figure1 {
        #[command(flatten)]
        common: Common,
        /// Samples per interval between poles.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Spectrum over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON pointer of a numeric config field, e.g. /perturbation/amplitude_scale.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Effective-potential diagnostics.
    Effpot {
        #[command(subcommand)]
        command: EffpotCommand,
    },
}

#[derive(Subcommand)]
enum EffpotCommand {
    /// Kernel matrix K(x_i, x_j) at a fixed energy.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
    },
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        mode: common.mode.map(|m| match m {
            ModeArg::Approx => DenominatorMode::Approximate,
            ModeArg::Exact => DenominatorMode::Exact,
        }),
        backend: common.backend.map(|b| match b {
            BackendArg::Unperturbed => BasisBackend::Unperturbed,
            BackendArg::V1 => BasisBackend::SelfConsistentV1,
        }),
        ..RunOptions::default()
    }
}

fn dispatch(command: &Command) -> (&Path, CliResult<RunManifest>) {
    let run = |common: &Common,
               f: &(dyn Fn(&Path, &Path, &RunOptions) -> CliResult<RunManifest> + Sync),
               opts: RunOptions| {
        with_jobs(common.jobs, || f(&common.config, &common.out, &opts)).and_then(|r| r)
    };
    match command {
        Command::Basis(c) => (&c.out, run(c, &cmd_basis, options(c))),
        Command::Spectrum(c) => (&c.out, run(c, &cmd_spectrum, options(c))),
        Command::Verify(c) => (&c.out, run(c, &cmd_verify, options(c))),
        Command::Reconstruct {
            common,
            samples,
            realisation,
            allow_evanescent,
        } => {
            let opts = RunOptions {
                samples: *samples,
                realisation: *realisation,
                allow_evanescent: *allow_evanescent,
                ..options(common)
            };
            (&common.out, run(common, &cmd_reconstruct, opts))
        }
        Command::Figure1 { common, samples } => {
            let opts = RunOptions {
                samples: *samples,
                ..options(common)
            };
            (&common.out, run(common, &cmd_figure1, opts))
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let f = |c: &Path, o: &Path, opts: &RunOptions| cmd_sweep(c, param, values, o, opts);
            (&common.out, run(common, &f, options(common)))
        }
        Command::Effpot {
            command: EffpotCommand::Kernel { common, energy },
        } => {
            let f = |c: &Path, o: &Path, opts: &RunOptions| cmd_effpot_kernel(c, *energy, o, opts);
            (&common.out, run(common, &f, options(common)))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (out, result) = dispatch(&cli.command);
    match result {
        Ok(manifest) => {
            log::info!(
                "wrote {} files in {:.3}s",
                manifest.outputs.len(),
                manifest.wall_time_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => report(out, &e),
    }
}

fn report(out: &Path, error: &CliError) -> ExitCode {
    let record = to_json(&error.record());
    eprint!("{}", String::from_utf8_lossy(&record));
    if std::fs::create_dir_all(out).is_ok() {
        let _ = std::fs::write(out.join("error.json"), &record);
    }
    ExitCode::from(error.exit_code() as u8)
}
