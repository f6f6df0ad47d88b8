use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use cyborg_core::service::{
    analyze, gap_montecarlo, nav_run, serve, stim_dump, AnalyzeOptions, GapOptions, NavRunOptions,
    ServeOptions, ServiceError, StimDumpOptions,
};

#[derive(Parser)]
#[command(
    name = "cyborg",
    version,
    about = "Cyborg insect control stack: simulation runs, gap Monte Carlo, live bridge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario or calibration file; any artifact from a previous run also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded closed-loop navigation trials.
    NavRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Monte Carlo over the gap-negotiation state machine.
    GapMontecarlo {
        #[command(flatten)]
        common: Common,
        /// intact, mounted, implanted or all.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        /// Also compare the profiles and write report.txt / report.json.
        #[arg(long)]
        analyze: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Serve one live session over WebSocket (JSON schema v1).
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Virtual seconds per wall second, or `max`.
        #[arg(long, default_value = "1", value_parser = parse_scale)]
        time_scale: f64,
        /// Start with the autopilot engaged.
        #[arg(long)]
        autopilot: bool,
        /// Stop after this many wall-clock seconds.
        #[arg(long)]
        max_runtime_s: Option<f64>,
    },
    /// Print the DAC output of one stimulation command as CSV.
    StimDump {
        #[arg(long, default_value_t = 2.5)]
        amplitude: f64,
        #[arg(long, default_value_t = 12)]
        width: u32,
        #[arg(long, default_value_t = 400)]
        duration: u32,
        /// Channels joined by `+`: left, right, cerci, spare.
        #[arg(long, default_value = "cerci")]
        channels: String,
    },
    /// Compare gap trial files and write report.txt / report.json.
    Analyze {
        /// gap_trials_<profile>.csv files; defaults to those in --out-dir.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        heart_rate: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn parse_scale(s: &str) -> Result<f64, String> {
    if s.eq_ignore_ascii_case("max") {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number or `max`")),
    }
}

fn run(cli: Cli) -> Result<(), ServiceError> {
    match cli.command {
        Command::NavRun {
            common,
            trials,
            out_dir,
        } => {
            let out = nav_run(&NavRunOptions {
                config: common.config,
                seed: common.seed,
                trials,
                out_dir: out_dir.clone(),
            })?;
            let s = &out.summary;
            println!(
                "{} trials, {} reached the target (rate {}), mean time {} s -> {}",
                s.trials,
                s.successes,
                s.success_rate.map_or("n/a".into(), |r| format!("{r:.3}")),
                s.mean_time_to_goal_s
                    .map_or("n/a".into(), |t| format!("{t:.1}")),
                out_dir.display()
            );
        }
        Command::GapMontecarlo {
            common,
            profile,
            trials,
            analyze,
            out_dir,
        } => {
            let opts = GapOptions {
                config: common.config,
                profile,
                trials,
                seed: common.seed,
                analyze,
                out_dir,
            };
            for s in gap_montecarlo(&opts)? {
                let (lo, hi) = s.tunnel_success_ci99;
                println!(
                    "{:<10} trials {:>7}  tunnel success {:.4} [{:.4}, {:.4}]  traversal {:.2} s (n {})",
                    s.profile.map_or("-".into(), |p| p.to_string()),
                    s.trials,
                    s.tunnel_success_rate,
                    lo,
                    hi,
                    s.traversal.mean_s,
                    s.traversal.n
                );
            }
        }
        Command::Serve {
            common,
            port,
            bind,
            time_scale,
            autopilot,
            max_runtime_s,
        } => {
            let opts = ServeOptions {
                config: common.config,
                seed: common.seed,
                bind,
                port,
                time_scale,
                max_runtime: max_runtime_s.map(Duration::from_secs_f64),
                autopilot,
            };
            let report = serve(&opts, |addr| {
                println!("listening on ws://{addr}");
                let _ = std::io::stdout().flush();
            })?;
            println!(
                "served {} client(s), {} frames sent, {} dropped, {:.1} s simulated",
                report.clients,
                report.frames_sent,
                report.frames_dropped,
                report.virtual_ms / 1000.0
            );
        }
        Command::StimDump {
            amplitude,
            width,
            duration,
            channels,
        } => {
            let opts = StimDumpOptions {
                amplitude_v: amplitude,
                pulse_width_ms: width,
                duration_ms: duration,
                channels,
            };
            let stdout = std::io::stdout();
            stim_dump(&opts, stdout.lock())?;
        }
        Command::Analyze {
            inputs,
            heart_rate,
            out_dir,
        } => {
            analyze(&AnalyzeOptions {
                inputs,
                heart_rate,
                out_dir: out_dir.clone(),
            })?;
            println!("report written to {}", out_dir.join("report.txt").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
