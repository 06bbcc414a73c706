//! Parametric simulated walker.
//!
//! The walker knows the reference path (its nominal progression) and
//! accumulates a deviation from it: a Gaussian random walk, a constant veer,
//! an optional visual correction toward the reference, and constant-speed
//! corrections for each belt cue it feels. Cues reach it after a reaction
//! latency and drive motion for the duration of the pulse.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copstream::CoPSample;
use crate::feedback::{ActuatorCommand, Axis};
use crate::refpath::ReferencePath;

// Cue delivery slack; grid times built by repeated addition drift by ulps.
const DELIVER_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WalkerError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("walker parameter out of range: {0}")]
    Range(String),
}

/// Test conditions, in session order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// No feedback, eyes open.
    #[serde(rename = "NF_O")]
    NfO,
    /// No feedback, eyes closed.
    #[serde(rename = "NF_B")]
    NfB,
    /// Visual feedback, eyes open.
    #[serde(rename = "VF_O")]
    VfO,
    /// Belt feedback, eyes open.
    #[serde(rename = "EF_O")]
    EfO,
    /// Belt feedback, eyes closed.
    #[serde(rename = "EF_B")]
    EfB,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NfO,
        Condition::NfB,
        Condition::VfO,
        Condition::EfO,
        Condition::EfB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::NfO => "NF_O",
            Condition::NfB => "NF_B",
            Condition::VfO => "VF_O",
            Condition::EfO => "EF_O",
            Condition::EfB => "EF_B",
        }
    }

    /// Position in the session order; also the seed-derivation key.
    pub fn index(self) -> u32 {
        match self {
            Condition::NfO => 0,
            Condition::NfB => 1,
            Condition::VfO => 2,
            Condition::EfO => 3,
            Condition::EfB => 4,
        }
    }

    pub fn belt_feedback(self) -> bool {
        matches!(self, Condition::EfO | Condition::EfB)
    }

    pub fn visual_feedback(self) -> bool {
        self == Condition::VfO
    }

    pub fn eyes_closed(self) -> bool {
        matches!(self, Condition::NfB | Condition::EfB)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('/', "_");
        Condition::ALL
            .into_iter()
            .find(|c| c.label() == norm)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    pub reaction_latency: f64,
    /// Speed of a cue- or vision-driven correction, m/s.
    pub correction_speed: f64,
    /// Random-walk intensity, m/sqrt(s).
    pub drift_sigma: f64,
    pub bias_velocity: (f64, f64),
    /// Fraction of the visible error corrected per tick, capped by
    /// `correction_speed`.
    pub visual_gain: f64,
    pub rng_seed: u64,
}

const NF_O_DRIFT: f64 = 0.04;
const NF_B_DRIFT: f64 = 2.0 * NF_O_DRIFT;
/// Slow walkers tend to fall behind the reference and veer a little.
const NF_O_BIAS: (f64, f64) = (-0.02, 0.01);
const NF_B_BIAS: (f64, f64) = (-0.04, 0.02);
const VF_GAIN: f64 = 0.5;

impl Default for WalkerParams {
    fn default() -> Self {
        condition_preset(Condition::NfO)
    }
}

/// Walker parameters standing in for a subject under condition `c`.
///
/// Eyes closed doubles the sway and the veer. Visual feedback adds a
/// continuous pull toward the reference. Belt conditions share the drift of
/// their no-feedback counterpart; the difference is the cue response, which
/// comes from the engine being switched on.
pub fn condition_preset(c: Condition) -> WalkerParams {
    let base = WalkerParams {
        reaction_latency: 0.25,
        correction_speed: 0.1,
        drift_sigma: NF_O_DRIFT,
        bias_velocity: NF_O_BIAS,
        visual_gain: 0.0,
        rng_seed: 0,
    };
    match c {
        Condition::NfO | Condition::EfO => base,
        Condition::NfB | Condition::EfB => WalkerParams {
            drift_sigma: NF_B_DRIFT,
            bias_velocity: NF_B_BIAS,
            ..base
        },
        Condition::VfO => WalkerParams {
            visual_gain: VF_GAIN,
            ..base
        },
    }
}

impl WalkerParams {
    pub fn validate(&self) -> Result<(), WalkerError> {
        let range = |msg: String| Err(WalkerError::Range(msg));
        if !(self.reaction_latency >= 0.0 && self.reaction_latency.is_finite()) {
            return range(format!("reaction_latency {}", self.reaction_latency));
        }
        if !(self.correction_speed > 0.0 && self.correction_speed.is_finite()) {
            return range(format!("correction_speed {}", self.correction_speed));
        }
        if !(self.drift_sigma >= 0.0 && self.drift_sigma.is_finite()) {
            return range(format!("drift_sigma {}", self.drift_sigma));
        }
        if !(0.0..=1.0).contains(&self.visual_gain) {
            return range(format!("visual_gain {}", self.visual_gain));
        }
        if !(self.bias_velocity.0.is_finite() && self.bias_velocity.1.is_finite()) {
            return range("bias_velocity must be finite".into());
        }
        Ok(())
    }

    /// Applies `key = value` overrides from the walker parameter format.
    /// Blank lines and `#` comments are skipped.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), WalkerError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| WalkerError::Syntax {
                line,
                msg: format!("expected key = value, got {content:?}"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| WalkerError::Syntax { line, msg })?;
        }
        self.validate()
    }

    /// Sets one parameter by its file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| format!("{key}: cannot parse {value:?}"))
        };
        match key {
            "reaction_latency" => self.reaction_latency = float()?,
            "correction_speed" => self.correction_speed = float()?,
            "drift_sigma" => self.drift_sigma = float()?,
            "bias_vx" => self.bias_velocity.0 = float()?,
            "bias_vy" => self.bias_velocity.1 = float()?,
            "visual_gain" => self.visual_gain = float()?,
            "rng_seed" => {
                self.rng_seed = value
                    .parse()
                    .map_err(|_| format!("rng_seed: cannot parse {value:?}"))?
            }
            other => return Err(format!("unknown walker key {other:?}")),
        }
        Ok(())
    }

    /// Parses a complete walker parameter file, starting from the NF_O preset.
    pub fn parse(text: &str) -> Result<Self, WalkerError> {
        let mut params = WalkerParams::default();
        params.apply_overrides(text)?;
        Ok(params)
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "reaction_latency = {}\ncorrection_speed = {}\ndrift_sigma = {}\nbias_vx = {}\nbias_vy = {}\nvisual_gain = {}\nrng_seed = {}\n",
            self.reaction_latency,
            self.correction_speed,
            self.drift_sigma,
            self.bias_velocity.0,
            self.bias_velocity.1,
            self.visual_gain,
            self.rng_seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingCue {
    command: ActuatorCommand,
    deliver_at: f64,
}

/// Cues in flight between the belt and the walker's reaction.
#[derive(Debug, Clone, Default)]
pub struct CueInbox {
    ap: VecDeque<PendingCue>,
    ml: VecDeque<PendingCue>,
}

impl CueInbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a command received at `received_at`.
    pub fn push(&mut self, command: ActuatorCommand, received_at: f64, latency: f64) {
        let cue = PendingCue {
            command,
            deliver_at: received_at + latency,
        };
        match command.unit.axis() {
            Axis::Ap => self.ap.push_back(cue),
            Axis::Ml => self.ml.push_back(cue),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ap.is_empty() && self.ml.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ap.len() + self.ml.len()
    }

    /// Removes and returns every cue due at `t`, AP before ML, FIFO per axis.
    pub fn deliver(&mut self, t: f64) -> Vec<ActuatorCommand> {
        let mut out = Vec::new();
        for queue in [&mut self.ap, &mut self.ml] {
            while queue
                .front()
                .is_some_and(|c| c.deliver_at <= t + DELIVER_EPS)
            {
                out.extend(queue.pop_front().map(|c| c.command));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    velocity: (f64, f64),
    start: f64,
    end: f64,
}

/// Walker state: deviation from the nominal path plus cue-driven motions.
#[derive(Debug, Clone)]
pub struct Walker {
    params: WalkerParams,
    offset: (f64, f64),
    motions: Vec<Motion>,
    rng: ChaCha8Rng,
}

impl Walker {
    pub fn new(params: WalkerParams) -> Self {
        Walker {
            params,
            offset: (0.0, 0.0),
            motions: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(params.rng_seed),
        }
    }

    pub fn params(&self) -> &WalkerParams {
        &self.params
    }

    /// Current deviation from the nominal path.
    pub fn offset(&self) -> (f64, f64) {
        self.offset
    }

    /// Measured CoP at `t`.
    pub fn sample(&self, path: &ReferencePath, t: f64) -> CoPSample {
        let (nx, ny) = path.lookup(t);
        CoPSample::new(t, nx + self.offset.0, ny + self.offset.1)
    }

    /// Feels the delivered cues at `t`, then advances by `dt` and returns the
    /// sample at `t + dt`. `visual` switches on the pull toward the reference.
    pub fn step(
        &mut self,
        path: &ReferencePath,
        t: f64,
        dt: f64,
        cues: &[ActuatorCommand],
        visual: bool,
    ) -> CoPSample {
        let p = self.params;
        for cue in cues {
            let (ux, uy) = cue.unit.repulsive_motion();
            self.motions.push(Motion {
                velocity: (ux * p.correction_speed, uy * p.correction_speed),
                start: t,
                end: t + f64::from(cue.duration_ms) / 1000.0,
            });
        }

        let sd = p.drift_sigma * dt.sqrt();
        let (nx, ny): (f64, f64) = if sd > 0.0 {
            (
                StandardNormal.sample(&mut self.rng),
                StandardNormal.sample(&mut self.rng),
            )
        } else {
            (0.0, 0.0)
        };
        let mut dx = sd * nx + p.bias_velocity.0 * dt;
        let mut dy = sd * ny + p.bias_velocity.1 * dt;

        if visual && p.visual_gain > 0.0 {
            let cap = p.correction_speed * dt;
            // real error is reference minus measured, i.e. minus the offset
            dx += (-p.visual_gain * self.offset.0).clamp(-cap, cap);
            dy += (-p.visual_gain * self.offset.1).clamp(-cap, cap);
        }

        let t_next = t + dt;
        for m in &self.motions {
            let overlap = (t_next.min(m.end) - t.max(m.start)).max(0.0);
            dx += m.velocity.0 * overlap;
            dy += m.velocity.1 * overlap;
        }
        self.motions.retain(|m| m.end > t_next);

        self.offset.0 += dx;
        self.offset.1 += dy;
        self.sample(path, t_next)
    }
}
