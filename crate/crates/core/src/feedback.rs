//! Anticipatory vibrotactile feedback engine.
//!
//! Every tick compares the measured CoP at `t` with the reference at
//! `t + anticipation`. When the signed error on an axis leaves the dead zone
//! `[-th, th]`, the belt unit on the side the walker must move *away* from is
//! pulsed (repulsive cue):
//!
//! | error            | unit  | walker should move |
//! |------------------|-------|--------------------|
//! | `dx > th`        | Back  | forward (+x)       |
//! | `dx < -th`       | Front | backward (-x)      |
//! | `dy > th`        | Left  | right (+y)         |
//! | `dy < -th`       | Right | left (-y)          |
//!
//! The AP and ML axes are independent. An axis holding an unexpired pulse
//! emits nothing until the pulse ends, so a sustained violation produces a
//! pulse train at `1 / pulse_duration`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copstream::CoPSample;
use crate::refpath::ReferencePath;

/// Length of an encoded command frame.
pub const FRAME_LEN: usize = 8;
pub const FRAME_SYNC: u8 = 0xA5;
pub const FRAME_RESERVED: u8 = 0x01;

// Slack when comparing tick times against pulse expiry.
const EXPIRY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("measured sample at t={0} is not valid")]
    InvalidSample(f64),
    #[error("tick at t={t} does not follow previous tick at t={last}")]
    NonMonotonic { t: f64, last: f64 },
    #[error("invalid feedback config: {0}")]
    Config(String),
    #[error("duration {0} ms does not fit the frame (max 65535)")]
    DurationOverflow(u32),
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("frame must be {FRAME_LEN} bytes, got {0}")]
    FrameLength(usize),
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("unknown unit code {0}")]
    BadUnit(u8),
    #[error("bad reserved byte {0:#04x}")]
    BadReserved(u8),
    #[error("checksum mismatch: frame says {found:#04x}, computed {computed:#04x}")]
    Checksum { found: u8, computed: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConfig {
    /// Dead-zone half width, meters.
    pub th_cop: f64,
    /// Anticipation interval, seconds.
    pub anticipation: f64,
    pub pulse_duration: f64,
    pub tick_rate: f64,
    pub intensity: u8,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            th_cop: 0.1,
            anticipation: 0.5,
            pulse_duration: 0.4,
            tick_rate: 100.0,
            intensity: 128,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        let bad = |msg: String| Err(FeedbackError::Config(msg));
        if !(self.th_cop > 0.0 && self.th_cop.is_finite()) {
            return bad(format!("th_cop must be positive, got {}", self.th_cop));
        }
        if !(self.anticipation >= 0.0 && self.anticipation.is_finite()) {
            return bad(format!(
                "anticipation must be non-negative, got {}",
                self.anticipation
            ));
        }
        if !(self.pulse_duration > 0.0 && self.pulse_duration.is_finite()) {
            return bad(format!(
                "pulse_duration must be positive, got {}",
                self.pulse_duration
            ));
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return bad(format!(
                "tick_rate must be positive, got {}",
                self.tick_rate
            ));
        }
        if self.pulse_duration_ms() == 0 || self.pulse_duration_ms() > u32::from(u16::MAX) {
            return bad(format!(
                "pulse_duration {} s does not fit in 1..=65535 ms",
                self.pulse_duration
            ));
        }
        Ok(())
    }

    pub fn pulse_duration_ms(&self) -> u32 {
        (self.pulse_duration * 1000.0).round() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Front,
    Back,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Antero-posterior, owns Front/Back.
    Ap,
    /// Medio-lateral, owns Left/Right.
    Ml,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Front,
        Direction::Back,
        Direction::Left,
        Direction::Right,
    ];

    pub fn axis(self) -> Axis {
        match self {
            Direction::Front | Direction::Back => Axis::Ap,
            Direction::Left | Direction::Right => Axis::Ml,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Direction::Front => 0,
            Direction::Back => 1,
            Direction::Left => 2,
            Direction::Right => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Direction> {
        Direction::ALL.get(usize::from(code)).copied()
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Front => Direction::Back,
            Direction::Back => Direction::Front,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Unit vector the walker is asked to move along when this unit vibrates.
    pub fn repulsive_motion(self) -> (f64, f64) {
        match self {
            Direction::Back => (1.0, 0.0),
            Direction::Front => (-1.0, 0.0),
            Direction::Left => (0.0, 1.0),
            Direction::Right => (0.0, -1.0),
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Direction::Front => "F",
            Direction::Back => "B",
            Direction::Left => "L",
            Direction::Right => "R",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" | "Front" | "front" => Ok(Direction::Front),
            "B" | "Back" | "back" => Ok(Direction::Back),
            "L" | "Left" | "left" => Ok(Direction::Left),
            "R" | "Right" | "right" => Ok(Direction::Right),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}

/// Signed reference-minus-measured error on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisError {
    pub dx: f64,
    pub dy: f64,
}

/// Error against the reference at `t + anticipation`.
pub fn anticipatory_error(
    path: &ReferencePath,
    measured: &CoPSample,
    config: &FeedbackConfig,
) -> Result<AxisError, FeedbackError> {
    if !measured.valid {
        return Err(FeedbackError::InvalidSample(measured.t));
    }
    let (rx, ry) = path.lookup(measured.t + config.anticipation);
    Ok(AxisError {
        dx: rx - measured.x,
        dy: ry - measured.y,
    })
}

/// Error against the reference at the same instant.
pub fn real_error(path: &ReferencePath, measured: &CoPSample) -> Result<AxisError, FeedbackError> {
    if !measured.valid {
        return Err(FeedbackError::InvalidSample(measured.t));
    }
    let (rx, ry) = path.lookup(measured.t);
    Ok(AxisError {
        dx: rx - measured.x,
        dy: ry - measured.y,
    })
}

/// Units to activate for one error pair; at most one per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Decision {
    pub ap: Option<Direction>,
    pub ml: Option<Direction>,
}

impl Decision {
    pub fn is_empty(&self) -> bool {
        self.ap.is_none() && self.ml.is_none()
    }

    pub fn contains(&self, d: Direction) -> bool {
        self.ap == Some(d) || self.ml == Some(d)
    }

    /// AP first, then ML.
    pub fn iter(&self) -> impl Iterator<Item = Direction> {
        self.ap.into_iter().chain(self.ml)
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }
}

/// Threshold logic. Strict inequalities: an error of exactly `th` stays
/// silent.
pub fn decide(error: AxisError, th: f64) -> Decision {
    let ap = if error.dx > th {
        Some(Direction::Back)
    } else if error.dx < -th {
        Some(Direction::Front)
    } else {
        None
    };
    let ml = if error.dy > th {
        Some(Direction::Left)
    } else if error.dy < -th {
        Some(Direction::Right)
    } else {
        None
    };
    Decision { ap, ml }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub unit: Direction,
    pub intensity: u8,
    pub duration_ms: u32,
    /// Session sequence number; only the low byte travels on the wire.
    pub seq: u32,
}

impl ActuatorCommand {
    /// Encodes into the 8-byte frame:
    /// `A5 | unit | 01 | intensity | duration_ms (u16 BE) | seq & 0xff | xor(0..7)`.
    pub fn encode(&self) -> Result<[u8; FRAME_LEN], FeedbackError> {
        if self.duration_ms == 0 {
            return Err(FeedbackError::ZeroDuration);
        }
        let duration = u16::try_from(self.duration_ms)
            .map_err(|_| FeedbackError::DurationOverflow(self.duration_ms))?;
        let [d_hi, d_lo] = duration.to_be_bytes();
        let mut frame = [
            FRAME_SYNC,
            self.unit.code(),
            FRAME_RESERVED,
            self.intensity,
            d_hi,
            d_lo,
            (self.seq & 0xff) as u8,
            0,
        ];
        frame[7] = checksum(&frame[..7]);
        Ok(frame)
    }

    /// Decodes a frame. The returned `seq` is the wire byte.
    pub fn decode(frame: &[u8]) -> Result<ActuatorCommand, FeedbackError> {
        if frame.len() != FRAME_LEN {
            return Err(FeedbackError::FrameLength(frame.len()));
        }
        if frame[0] != FRAME_SYNC {
            return Err(FeedbackError::BadSync(frame[0]));
        }
        let computed = checksum(&frame[..7]);
        if computed != frame[7] {
            return Err(FeedbackError::Checksum {
                found: frame[7],
                computed,
            });
        }
        let unit = Direction::from_code(frame[1]).ok_or(FeedbackError::BadUnit(frame[1]))?;
        if frame[2] != FRAME_RESERVED {
            return Err(FeedbackError::BadReserved(frame[2]));
        }
        let duration_ms = u32::from(u16::from_be_bytes([frame[4], frame[5]]));
        if duration_ms == 0 {
            return Err(FeedbackError::ZeroDuration);
        }
        Ok(ActuatorCommand {
            unit,
            intensity: frame[3],
            duration_ms,
            seq: u32::from(frame[6]),
        })
    }
}

/// XOR of all bytes.
pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivePulse {
    pub unit: Direction,
    pub expires_at: f64,
}

/// Loop state: one optional active pulse per axis and the sequence counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub ap_pulse: Option<ActivePulse>,
    pub ml_pulse: Option<ActivePulse>,
    pub last_tick: Option<f64>,
    next_seq: u32,
}

impl Default for EngineState {
    fn default() -> Self {
        EngineState {
            ap_pulse: None,
            ml_pulse: None,
            last_tick: None,
            next_seq: 1,
        }
    }
}

impl EngineState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sequence number the next command will carry.
    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    fn slot(&mut self, axis: Axis) -> &mut Option<ActivePulse> {
        match axis {
            Axis::Ap => &mut self.ap_pulse,
            Axis::Ml => &mut self.ml_pulse,
        }
    }

    /// Runs one loop iteration and returns the commands to send, AP first.
    pub fn tick(
        &mut self,
        path: &ReferencePath,
        measured: &CoPSample,
        config: &FeedbackConfig,
    ) -> Result<Vec<ActuatorCommand>, FeedbackError> {
        if let Some(last) = self.last_tick {
            if !(measured.t > last) {
                return Err(FeedbackError::NonMonotonic {
                    t: measured.t,
                    last,
                });
            }
        }
        self.last_tick = Some(measured.t);
        if !measured.valid {
            return Ok(Vec::new());
        }

        let t = measured.t;
        for axis in [Axis::Ap, Axis::Ml] {
            let slot = self.slot(axis);
            if slot.is_some_and(|p| t + EXPIRY_EPS >= p.expires_at) {
                *slot = None;
            }
        }

        let decision = decide(anticipatory_error(path, measured, config)?, config.th_cop);
        let mut commands = Vec::with_capacity(2);
        for unit in decision.iter() {
            let slot = self.slot(unit.axis());
            if slot.is_some() {
                continue;
            }
            *slot = Some(ActivePulse {
                unit,
                expires_at: t + config.pulse_duration,
            });
            commands.push(ActuatorCommand {
                unit,
                intensity: config.intensity,
                duration_ms: config.pulse_duration_ms(),
                seq: self.next_seq,
            });
            self.next_seq += 1;
        }
        Ok(commands)
    }
}
