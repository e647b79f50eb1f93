mod commands;
mod manifest;
mod numeric;

use clap::{Parser, Subcommand, ValueEnum};
use commands::{CliError, SimulateArgs, SkrArgs, SweepArgs, WorstCaseArgs};
use cvqkd::pipeline::{Fidelity, PhaseMode};
use cvqkd::security::Regime;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cvqkd",
    version,
    about = "GMCS CV-QKD link simulator and key-rate calculator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Asym,
    Fs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    Trace,
    Slot,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Estimated,
    Oracle,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Secret key rate at the configured operating point.
    Skr {
        /// Config file (key = value); defaults apply when omitted.
        #[arg(env = "CVQKD_CONFIG")]
        config: Option<PathBuf>,
        /// Key-generation fraction of the exchanged symbols.
        #[arg(long, value_parser = numeric::parse_f64)]
        ratio: Option<f64>,
        #[arg(long, value_enum, default_value = "asym")]
        regime: RegimeArg,
        /// Total exchanged symbols N.
        #[arg(long = "N", alias = "n-total", value_parser = numeric::parse_count)]
        n_total: Option<u64>,
        /// Parameter-estimation symbols m.
        #[arg(long, value_parser = numeric::parse_count_or_inf)]
        m: Option<f64>,
        /// Calibration symbols m'.
        #[arg(long = "m-prime", alias = "m-calib", value_parser = numeric::parse_count_or_inf)]
        m_prime: Option<f64>,
        #[arg(long, value_parser = numeric::parse_f64)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// End-to-end Monte-Carlo run: modulation, link, DSP, estimation.
    Simulate {
        #[arg(env = "CVQKD_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1e5", value_parser = numeric::parse_count)]
        n_symbols: u64,
        #[arg(long, value_enum, default_value = "trace")]
        fidelity: FidelityArg,
        #[arg(long, value_enum, default_value = "estimated")]
        phase: PhaseArg,
        /// Remove the channel excess noise (shot and electronic noise remain).
        #[arg(long)]
        no_excess_noise: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-stage CSV files.
        #[arg(long)]
        dump_stages: bool,
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotic and finite-size key rate versus channel attenuation.
    Sweep {
        #[arg(env = "CVQKD_CONFIG")]
        config: Option<PathBuf>,
        /// Attenuations in dB: start:stop:step or a comma list.
        #[arg(long, default_value = "0:14:0.25", value_parser = numeric::parse_grid)]
        grid: std::vec::Vec<f64>,
        /// Finite-size block sizes.
        #[arg(long, default_value = "1e6,1e8,1e10", value_parser = numeric::parse_count_list)]
        m: std::vec::Vec<f64>,
        #[arg(long, value_parser = numeric::parse_f64)]
        ratio: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case excess noise and transmittance versus block size.
    Worstcase {
        #[arg(env = "CVQKD_CONFIG")]
        config: Option<PathBuf>,
        /// Explicit comma list of m values (overrides --decades).
        #[arg(long, value_parser = numeric::parse_count_list)]
        m: Option<std::vec::Vec<f64>>,
        /// log10(m) grid as start:stop:step.
        #[arg(long, default_value = "4:14:0.25", value_parser = numeric::parse_decades)]
        decades: std::vec::Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Skr {
            config,
            ratio,
            regime,
            n_total,
            m,
            m_prime,
            epsilon,
            out,
        } => {
            let params = commands::resolve_params(config.as_deref())?;
            let regime = match regime {
                RegimeArg::Asym => Regime::Asymptotic,
                RegimeArg::Fs => Regime::FiniteSize,
            };
            commands::cmd_skr(
                params,
                SkrArgs {
                    ratio,
                    regime,
                    n_total,
                    m,
                    m_calib: m_prime,
                    epsilon,
                    out,
                },
            )
        }
        Command::Simulate {
            config,
            n_symbols,
            fidelity,
            phase,
            no_excess_noise,
            seed,
            dump_stages,
            dump_dir,
            out,
        } => {
            let params = commands::resolve_params(config.as_deref())?;
            commands::cmd_simulate(
                params,
                SimulateArgs {
                    n_symbols,
                    fidelity: match fidelity {
                        FidelityArg::Trace => Fidelity::Trace,
                        FidelityArg::Slot => Fidelity::Slot,
                    },
                    phase: match phase {
                        PhaseArg::Estimated => PhaseMode::Estimated,
                        PhaseArg::Oracle => PhaseMode::Oracle,
                        PhaseArg::Off => PhaseMode::Off,
                    },
                    excess_noise: !no_excess_noise,
                    seed,
                    dump_stages: dump_stages || dump_dir.is_some(),
                    dump_dir,
                    out,
                },
            )
        }
        Command::Sweep {
            config,
            grid,
            m,
            ratio,
            out,
        } => {
            let params = commands::resolve_params(config.as_deref())?;
            commands::cmd_sweep(
                params,
                SweepArgs {
                    grid,
                    ms: m,
                    ratio,
                    out,
                },
            )
        }
        Command::Worstcase {
            config,
            m,
            decades,
            out,
        } => {
            let params = commands::resolve_params(config.as_deref())?;
            commands::cmd_worstcase(
                params,
                WorstCaseArgs {
                    ms: m.unwrap_or(decades),
                    out,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
