use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use copguide::copstream::{
    fuse_stream, parse_plate_file, read_cop_file, PlateLayout, DEFAULT_CONTACT_THRESHOLD_N,
};
use copguide::harness::{read_records_dir, replay, run_session, serve, write_record, SessionPlan};
use copguide::metrics::summarize;
use copguide::refpath::{generate_gait_path, GaitParams, ReferencePath};
use copguide::FeedbackConfig;

const EXIT_INPUT: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "copguide",
    version,
    about = "Anticipatory CoP guidance: simulate, replay, score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a slow-walk reference path.
    GeneratePath {
        #[arg(long, default_value_t = GaitParams::default().step_length)]
        step_length: f64,
        #[arg(long, default_value_t = GaitParams::default().step_period)]
        step_period: f64,
        #[arg(long, default_value_t = GaitParams::default().ml_amplitude)]
        ml_amplitude: f64,
        #[arg(long, default_value_t = GaitParams::default().path_length)]
        length: f64,
        #[arg(long, default_value_t = GaitParams::default().double_support_fraction)]
        double_support: f64,
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded session of simulated trials.
    Run {
        /// Plan file, or `default` for every condition three times.
        #[arg(long)]
        plan: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the engine over a recorded CoP stream.
    Replay {
        /// Fused CoP CSV (`t,x,y,valid`), or raw plate rows when `--layout` is given.
        #[arg(long)]
        cop: PathBuf,
        /// Plate layout (`plate_id,origin_x,origin_y`) for raw plate input.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = FeedbackConfig::default().th_cop)]
        th: f64,
        #[arg(long, default_value_t = FeedbackConfig::default().anticipation)]
        ta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a directory of trial records.
    Metrics {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Serve the live protocol over TCP.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = FeedbackConfig::default().th_cop)]
        th: f64,
        #[arg(long, default_value_t = FeedbackConfig::default().anticipation)]
        ta: f64,
        /// Exit after this many connections.
        #[arg(long)]
        max_sessions: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Input(anyhow::Error),
    Protocol(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, err) = match self {
            Failure::Input(e) => (EXIT_INPUT, e),
            Failure::Protocol(e) => (EXIT_PROTOCOL, e),
            Failure::Other(e) => (1, e),
        };
        eprintln!("error: {err:#}");
        ExitCode::from(code)
    }
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn output(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
    fn output(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Other(e.into()))
    }
}

fn config(th: f64, ta: f64) -> Result<FeedbackConfig, Failure> {
    let config = FeedbackConfig {
        th_cop: th,
        anticipation: ta,
        ..FeedbackConfig::default()
    };
    config.validate().input()?;
    Ok(config)
}

fn load_path(file: &Path) -> Result<ReferencePath, Failure> {
    ReferencePath::load(file)
        .with_context(|| format!("reference path {}", file.display()))
        .input()
}

fn load_plan(plan: &str, seed: Option<u64>) -> Result<SessionPlan, Failure> {
    let mut plan = if plan == "default" {
        SessionPlan::default()
    } else {
        let file = Path::new(plan);
        let text = fs::read_to_string(file)
            .with_context(|| format!("read {}", file.display()))
            .input()?;
        SessionPlan::parse(&text, file.parent())
            .with_context(|| format!("plan {}", file.display()))
            .input()?
    };
    if let Some(seed) = seed {
        plan.base_seed = seed;
    }
    Ok(plan)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::GeneratePath {
            step_length,
            step_period,
            ml_amplitude,
            length,
            double_support,
            rate,
            out,
        } => {
            let params = GaitParams {
                step_length,
                step_period,
                ml_amplitude,
                path_length: length,
                double_support_fraction: double_support,
            };
            let path = generate_gait_path(&params, rate).input()?;
            path.save(&out).output()?;
            log::info!(
                "wrote {} points ({:.2} s) to {}",
                path.len(),
                path.duration(),
                out.display()
            );
        }
        Command::Run {
            plan,
            seed,
            out_dir,
        } => {
            let plan = load_plan(&plan, seed)?;
            let artifact = run_session(&plan).input()?;
            artifact.write_to(&out_dir).output()?;
            log::info!(
                "{} trials written to {}",
                artifact.trials.len(),
                out_dir.display()
            );
        }
        Command::Replay {
            cop,
            layout,
            path,
            th,
            ta,
            out,
        } => {
            let config = config(th, ta)?;
            let reference = load_path(&path)?;
            let samples = match layout {
                Some(layout) => {
                    let layout = PlateLayout::from_path(&layout)
                        .with_context(|| format!("layout {}", layout.display()))
                        .input()?;
                    let frames = parse_plate_file(&cop, &layout)
                        .with_context(|| format!("plate data {}", cop.display()))
                        .input()?;
                    fuse_stream(&frames, DEFAULT_CONTACT_THRESHOLD_N).input()?
                }
                None => read_cop_file(&cop)
                    .with_context(|| format!("CoP stream {}", cop.display()))
                    .input()?,
            };
            let outcome = replay(&samples, &reference, &config).input()?;
            write_record(&out, &outcome, config.th_cop).output()?;
            log::info!(
                "{} commands over {:.2} s",
                outcome.record.commands.len(),
                outcome.record.reference().duration()
            );
        }
        Command::Metrics { records, format } => {
            let files = read_records_dir(&records).input()?;
            let Some(first) = files.first() else {
                return Err(Failure::Input(anyhow!(
                    "no record files in {}",
                    records.display()
                )));
            };
            let th = first.th;
            if let Some(other) = files.iter().find(|f| f.th != th) {
                return Err(Failure::Input(anyhow!(
                    "records disagree on th ({} vs {})",
                    th,
                    other.th
                )));
            }
            let records: Vec<_> = files.into_iter().map(|f| f.record).collect();
            let summary = summarize(&records, th).input()?;
            let text = match format {
                Format::Csv => summary.to_csv(),
                Format::Json => summary.to_json() + "\n",
            };
            let mut stdout = io::stdout().lock();
            match stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
            {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    return Err(Failure::Other(e.into()))
                }
                _ => {}
            }
        }
        Command::Serve {
            listen,
            path,
            th,
            ta,
            max_sessions,
        } => {
            let config = config(th, ta)?;
            let reference = load_path(&path)?;
            let dropped = serve(listen.as_str(), reference, config, max_sessions)
                .with_context(|| format!("listen on {listen}"))
                .input()?;
            if dropped > 0 {
                return Err(Failure::Protocol(anyhow!(
                    "{dropped} session(s) dropped for protocol violations"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => failure.report(),
    }
}
