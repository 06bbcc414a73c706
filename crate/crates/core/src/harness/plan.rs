//! Session plan files.
//!
//! ```text
//! # comments start with '#'
//! base_seed = 42
//! walker = S01
//!
//! [feedback]
//! th = 0.1            # dead-zone half width, m
//! ta = 0.5            # anticipation, s
//! pulse_ms = 400
//! tick_rate = 100
//! intensity = 128
//!
//! [path]              # either `file = ...` or generator keys
//! step_length = 0.3
//! step_period = 2.0
//! ml_amplitude = 0.05
//! length = 3.0
//! double_support = 0.3
//!
//! [walker]            # overrides applied on top of each condition preset
//! reaction_latency = 0.25
//! file = walker.txt   # optional walker parameter file, applied first
//!
//! [conditions]        # run order; defaults to all five x 3
//! NF_O = 3
//! NF_B = 3
//! VF_O = 3
//! EF_O = 3
//! EF_B = 3
//! ```
//!
//! Relative file paths resolve against the plan file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::feedback::FeedbackConfig;
use crate::refpath::GaitParams;
use crate::simwalker::{Condition, WalkerParams};

use super::{PathSource, SessionPlan};

#[derive(Debug, Error, PartialEq)]
#[error("plan line {line}: {msg}")]
pub struct PlanError {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Feedback,
    Path,
    Walker,
    Conditions,
}

impl SessionPlan {
    /// Parses a plan. `base_dir` anchors relative file references.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<SessionPlan, PlanError> {
        let mut plan = SessionPlan::default();
        let mut gait = GaitParams::default();
        let mut path_file: Option<PathBuf> = None;
        let mut saw_gait_key = false;
        let mut conditions: Vec<(Condition, u32)> = Vec::new();
        let mut section = Section::Top;
        let resolve = |p: &str| match base_dir {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| PlanError { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {content:?}")))?;
                section = match name.trim() {
                    "feedback" => Section::Feedback,
                    "path" => Section::Path,
                    "walker" => Section::Walker,
                    "conditions" => Section::Conditions,
                    other => return Err(err(format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("{key}: cannot parse {value:?}")))
            };

            match section {
                Section::Top => match key {
                    "base_seed" => {
                        plan.base_seed = value
                            .parse()
                            .map_err(|_| err(format!("base_seed: cannot parse {value:?}")))?
                    }
                    "walker" => plan.walker_label = Some(value.to_string()),
                    _ => return Err(err(format!("unknown key {key:?}"))),
                },
                Section::Feedback => {
                    match key {
                        "th" => plan.config.th_cop = float()?,
                        "ta" => plan.config.anticipation = float()?,
                        "pulse_ms" => {
                            let ms: u32 = value.parse().map_err(|_| {
                                err(format!("pulse_ms: expected integer ms, got {value:?}"))
                            })?;
                            plan.config.pulse_duration = f64::from(ms) / 1000.0;
                        }
                        "tick_rate" => plan.config.tick_rate = float()?,
                        "intensity" => {
                            plan.config.intensity = value.parse().map_err(|_| {
                                err(format!("intensity: expected 0-255, got {value:?}"))
                            })?
                        }
                        _ => return Err(err(format!("unknown feedback key {key:?}"))),
                    }
                    plan.config.validate().map_err(|e| err(e.to_string()))?;
                }
                Section::Path => {
                    if (key == "file" && saw_gait_key) || (key != "file" && path_file.is_some()) {
                        return Err(err(
                            "[path] takes either `file` or generator keys, not both".into(),
                        ));
                    }
                    match key {
                        "file" => path_file = Some(resolve(value)),
                        "step_length" => gait.step_length = float()?,
                        "step_period" => gait.step_period = float()?,
                        "ml_amplitude" => gait.ml_amplitude = float()?,
                        "length" => gait.path_length = float()?,
                        "double_support" => gait.double_support_fraction = float()?,
                        _ => return Err(err(format!("unknown path key {key:?}"))),
                    }
                    if key != "file" {
                        saw_gait_key = true;
                        gait.validate().map_err(|e| err(e.to_string()))?;
                    }
                }
                Section::Walker => {
                    if key == "file" {
                        plan.walker_file = Some(resolve(value));
                    } else {
                        WalkerParams::default().set(key, value).map_err(&err)?;
                        plan.walker_overrides
                            .push((key.to_string(), value.to_string()));
                    }
                }
                Section::Conditions => {
                    let condition: Condition = key.parse().map_err(&err)?;
                    let n: u32 = value
                        .parse()
                        .map_err(|_| err(format!("{key}: cannot parse trial count {value:?}")))?;
                    if n == 0 {
                        return Err(err(format!("{key}: need at least one trial")));
                    }
                    if conditions.iter().any(|(c, _)| *c == condition) {
                        return Err(err(format!("{key} listed twice")));
                    }
                    conditions.push((condition, n));
                }
            }
        }

        plan.path = match path_file {
            Some(_) if saw_gait_key => {
                return Err(PlanError {
                    line: 0,
                    msg: "[path] takes either `file` or generator keys, not both".into(),
                })
            }
            Some(file) => PathSource::File(file),
            None => PathSource::Generated(gait),
        };
        if !conditions.is_empty() {
            plan.conditions = conditions;
        }
        if let Err(e) = plan.config.validate() {
            return Err(PlanError {
                line: 0,
                msg: e.to_string(),
            });
        }
        if let PathSource::Generated(g) = &plan.path {
            g.validate().map_err(|e| PlanError {
                line: 0,
                msg: e.to_string(),
            })?;
        }
        Ok(plan)
    }

    /// Canonical text form; parsing it yields an equal plan.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "base_seed = {}", self.base_seed);
        if let Some(label) = &self.walker_label {
            let _ = writeln!(out, "walker = {label}");
        }
        let c: &FeedbackConfig = &self.config;
        let _ = writeln!(
            out,
            "\n[feedback]\nth = {}\nta = {}\npulse_ms = {}\ntick_rate = {}\nintensity = {}",
            c.th_cop,
            c.anticipation,
            c.pulse_duration_ms(),
            c.tick_rate,
            c.intensity
        );
        out.push_str("\n[path]\n");
        match &self.path {
            PathSource::File(p) => {
                let _ = writeln!(out, "file = {}", p.display());
            }
            PathSource::Generated(g) => {
                let _ = writeln!(
                    out,
                    "step_length = {}\nstep_period = {}\nml_amplitude = {}\nlength = {}\ndouble_support = {}",
                    g.step_length,
                    g.step_period,
                    g.ml_amplitude,
                    g.path_length,
                    g.double_support_fraction
                );
            }
        }
        out.push_str("\n[walker]\n");
        if let Some(file) = &self.walker_file {
            let _ = writeln!(out, "file = {}", file.display());
        }
        for (k, v) in &self.walker_overrides {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n[conditions]\n");
        for (cond, n) in &self.conditions {
            let _ = writeln!(out, "{cond} = {n}");
        }
        out
    }
}
