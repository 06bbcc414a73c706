//! Experiment runner: wires walker, engine and metrics into sessions of
//! seeded trials, replays recorded CoP files, and serves the live protocol.

mod artifact;
mod live;
mod plan;

use std::path::PathBuf;

use thiserror::Error;

use crate::copstream::{resample_uniform, CoPSample, IngestError, ResampleOptions};
use crate::feedback::{
    anticipatory_error, real_error, AxisError, EngineState, FeedbackConfig, FeedbackError,
};
use crate::metrics::{summarize, MetricsError, Summary, TimedCommand, TrialRecord};
use crate::refpath::{generate_gait_path, GaitParams, PathError, ReferencePath};
use crate::simwalker::{condition_preset, Condition, CueInbox, Walker, WalkerError, WalkerParams};

pub use artifact::{read_record, read_records_dir, record_file_name, write_record, RecordFile};
pub use live::{handle_session, parse_live_line, serve, serve_listener, LiveLineError, SessionEnd};
pub use plan::PlanError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Walker(#[from] WalkerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("recording covers {recorded:.3} s but the path lasts {required:.3} s")]
    Duration { recorded: f64, required: f64 },
    #[error("{0}")]
    Record(String),
}

impl HarnessError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathSource {
    Generated(GaitParams),
    File(PathBuf),
}

/// What to run: conditions in order with trial counts, engine config,
/// walker overrides, path source, and the base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPlan {
    pub conditions: Vec<(Condition, u32)>,
    pub config: FeedbackConfig,
    pub walker_file: Option<PathBuf>,
    /// `key = value` pairs applied over each condition preset.
    pub walker_overrides: Vec<(String, String)>,
    pub walker_label: Option<String>,
    pub path: PathSource,
    pub base_seed: u64,
}

impl Default for SessionPlan {
    fn default() -> Self {
        SessionPlan {
            conditions: Condition::ALL.iter().map(|&c| (c, 3)).collect(),
            config: FeedbackConfig::default(),
            walker_file: None,
            walker_overrides: Vec::new(),
            walker_label: None,
            path: PathSource::Generated(GaitParams::default()),
            base_seed: 0,
        }
    }
}

impl SessionPlan {
    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    /// Walker instance name used in reports.
    pub fn walker_name(&self) -> String {
        self.walker_label
            .clone()
            .unwrap_or_else(|| format!("seed{}", self.base_seed))
    }

    pub fn total_trials(&self) -> usize {
        self.conditions.iter().map(|&(_, n)| n as usize).sum()
    }

    /// Loads or generates the reference on the engine's tick grid.
    pub fn resolve_path(&self) -> Result<ReferencePath, HarnessError> {
        let path = match &self.path {
            PathSource::Generated(g) => generate_gait_path(g, self.config.tick_rate)?,
            PathSource::File(f) => ReferencePath::load(f)?,
        };
        Ok(regrid(&path, self.config.tick_rate)?)
    }

    fn walker_text(&self) -> Result<Option<String>, HarnessError> {
        self.walker_file
            .as_ref()
            .map(|f| {
                std::fs::read_to_string(f)
                    .map_err(|e| HarnessError::io(format!("walker file {}", f.display()), e))
            })
            .transpose()
    }

    /// Preset for `condition` with the plan's overrides applied.
    pub fn walker_params(&self, condition: Condition) -> Result<WalkerParams, HarnessError> {
        let mut params = condition_preset(condition);
        if let Some(text) = self.walker_text()? {
            params.apply_overrides(&text)?;
        }
        for (k, v) in &self.walker_overrides {
            params
                .set(k, v)
                .map_err(|msg| WalkerError::Syntax { line: 0, msg })?;
        }
        params.validate()?;
        Ok(params)
    }
}

/// Resamples a path onto `rate`, or returns it unchanged when it already
/// uses that rate.
pub fn regrid(path: &ReferencePath, rate: f64) -> Result<ReferencePath, PathError> {
    if path.rate() == rate {
        return Ok(path.clone());
    }
    let n = (path.duration() * rate + 1e-9).floor() as usize + 1;
    let points = (0..n).map(|k| path.lookup(k as f64 / rate)).collect();
    ReferencePath::new(rate, points)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: `base_seed ^ splitmix64(condition_index << 32 | trial_index)`.
pub fn trial_seed(base_seed: u64, condition: Condition, trial_index: u32) -> u64 {
    base_seed ^ splitmix64((u64::from(condition.index()) << 32) | u64::from(trial_index))
}

/// Per-tick engine view of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Anticipatory error; `None` for invalid samples.
    pub anticipatory: Option<AxisError>,
    pub real: Option<AxisError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub trace: Vec<TraceRow>,
}

/// Everything one session produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub plan: SessionPlan,
    pub trials: Vec<TrialOutcome>,
    pub summary: Summary,
}

/// Steps the walker and, in belt conditions, the engine over the path grid.
pub fn run_trial(
    plan: &SessionPlan,
    path: &ReferencePath,
    condition: Condition,
    trial_index: u32,
) -> Result<TrialOutcome, HarnessError> {
    let seed = trial_seed(plan.base_seed, condition, trial_index);
    let params = WalkerParams {
        rng_seed: seed,
        ..plan.walker_params(condition)?
    };
    simulate(plan, path, condition, trial_index, params)
}

/// [`run_trial`] with explicit walker parameters (seed included).
pub fn simulate(
    plan: &SessionPlan,
    path: &ReferencePath,
    condition: Condition,
    trial_index: u32,
    params: WalkerParams,
) -> Result<TrialOutcome, HarnessError> {
    let config = plan.config;
    config.validate()?;
    params.validate()?;
    let dt = 1.0 / path.rate();
    let mut walker = Walker::new(params);
    let mut engine = EngineState::new();
    let mut inbox = CueInbox::new();
    let mut measured = Vec::with_capacity(path.len());
    let mut commands = Vec::new();
    let mut trace = Vec::with_capacity(path.len());

    for k in 0..path.len() {
        let t = path.time_at(k);
        let sample = walker.sample(path, t);
        trace.push(trace_row(path, &sample, &config));
        if condition.belt_feedback() {
            for command in engine.tick(path, &sample, &config)? {
                inbox.push(command, t, params.reaction_latency);
                commands.push(TimedCommand { t, command });
            }
        }
        measured.push(sample);
        if k + 1 < path.len() {
            let cues = inbox.deliver(t);
            walker.step(path, t, dt, &cues, condition.visual_feedback());
        }
    }

    let mut record = TrialRecord::new(path.clone(), measured, condition, plan.walker_name())?;
    record.commands = commands;
    record.trial_index = trial_index;
    record.seed = params.rng_seed;
    Ok(TrialOutcome { record, trace })
}

fn trace_row(path: &ReferencePath, sample: &CoPSample, config: &FeedbackConfig) -> TraceRow {
    TraceRow {
        t: sample.t,
        anticipatory: anticipatory_error(path, sample, config).ok(),
        real: real_error(path, sample).ok(),
    }
}

/// Runs every (condition, trial) pair of the plan and summarizes.
pub fn run_session(plan: &SessionPlan) -> Result<RunArtifact, HarnessError> {
    let path = plan.resolve_path()?;
    let mut trials = Vec::with_capacity(plan.total_trials());
    for &(condition, n) in &plan.conditions {
        for trial_index in 0..n {
            trials.push(run_trial(plan, &path, condition, trial_index)?);
        }
    }
    let records: Vec<TrialRecord> = trials.iter().map(|t| t.record.clone()).collect();
    let summary = summarize(&records, plan.config.th_cop)?;
    Ok(RunArtifact {
        plan: plan.clone(),
        trials,
        summary,
    })
}

/// Runs the engine over a recorded fused-CoP stream as if the belt had been
/// worn. The recording is resampled to the tick rate and its first sample is
/// aligned with the start of the path.
pub fn replay(
    recorded: &[CoPSample],
    path: &ReferencePath,
    config: &FeedbackConfig,
) -> Result<TrialOutcome, HarnessError> {
    config.validate()?;
    let path = regrid(path, config.tick_rate)?;
    let grid = resample_uniform(recorded, ResampleOptions::at_rate(config.tick_rate))?;
    let recorded_span = grid.len().saturating_sub(1) as f64 / config.tick_rate;
    if grid.len() < path.len() {
        return Err(HarnessError::Duration {
            recorded: recorded_span,
            required: path.duration(),
        });
    }

    let mut engine = EngineState::new();
    let mut measured = Vec::with_capacity(path.len());
    let mut commands = Vec::new();
    let mut trace = Vec::with_capacity(path.len());
    for (k, s) in grid.iter().take(path.len()).enumerate() {
        let t = path.time_at(k);
        let sample = CoPSample { t, ..*s };
        trace.push(trace_row(&path, &sample, config));
        for command in engine.tick(&path, &sample, config)? {
            commands.push(TimedCommand { t, command });
        }
        measured.push(sample);
    }
    let mut record = TrialRecord::new(path, measured, Condition::EfO, "replay")?;
    record.commands = commands;
    Ok(TrialOutcome { record, trace })
}
