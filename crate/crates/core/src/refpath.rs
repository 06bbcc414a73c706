//! Reference CoP path: a uniformly sampled planar trajectory with clamped
//! linear lookup, plus a parametric slow-walk generator.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("a path needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("anticipation interval must be non-negative, got {0}")]
    NegativeAnticipation(f64),
    #[error("gait parameter out of range: {0}")]
    Parameter(String),
}

// Fraction of a sample period treated as "on the grid".
const GRID_SNAP: f64 = 1e-9;

/// Uniformly sampled reference CoP path. Point `k` sits at `t = k / rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    rate: f64,
    points: Vec<(f64, f64)>,
}

impl ReferencePath {
    pub fn new(rate: f64, points: Vec<(f64, f64)>) -> Result<Self, PathError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(PathError::BadRate(rate));
        }
        if points.len() < 2 {
            return Err(PathError::TooShort(points.len()));
        }
        if let Some(i) = points
            .iter()
            .position(|(x, y)| !(x.is_finite() && y.is_finite()))
        {
            return Err(PathError::NonFinite(i));
        }
        Ok(ReferencePath { rate, points })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration(&self) -> f64 {
        (self.points.len() - 1) as f64 / self.rate
    }

    /// Grid time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 / self.rate
    }

    /// Reference at `t`, linearly interpolated and clamped to the path ends.
    pub fn lookup(&self, t: f64) -> (f64, f64) {
        let last = self.points.len() - 1;
        let pos = t * self.rate;
        if !(pos > 0.0) {
            return self.points[0];
        }
        if pos >= last as f64 {
            return self.points[last];
        }
        // snap to the grid so lookups at k / rate return point k exactly
        let nearest = pos.round();
        if (pos - nearest).abs() < GRID_SNAP {
            return self.points[nearest as usize];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let (x0, y0) = self.points[i];
        if frac == 0.0 {
            return (x0, y0);
        }
        let (x1, y1) = self.points[i + 1];
        (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
    }

    /// Reference at the later instant `t + anticipation`.
    pub fn anticipatory_lookup(&self, t: f64, anticipation: f64) -> Result<(f64, f64), PathError> {
        if !(anticipation >= 0.0) {
            return Err(PathError::NegativeAnticipation(anticipation));
        }
        Ok(self.lookup(t + anticipation))
    }

    /// Serializes to the path file format: `# rate=<hz> duration=<s>`, an
    /// `x,y` header, then one row per point.
    pub fn to_file_string(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 24);
        let _ = writeln!(out, "# rate={} duration={}", self.rate, self.duration());
        out.push_str("x,y\n");
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PathError> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|source| PathError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PathError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PathError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses the path file format. The `x,y` column header is optional; a
    /// `duration=` entry in the metadata line, when present, must agree with
    /// the point count.
    pub fn parse(text: &str) -> Result<Self, PathError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, meta) = lines.next().ok_or(PathError::Schema {
            line: 1,
            msg: "empty file".into(),
        })?;
        let meta = meta.strip_prefix('#').ok_or_else(|| PathError::Schema {
            line: 1,
            msg: "expected `# rate=<hz>` metadata line".into(),
        })?;
        let mut rate = None;
        let mut declared_duration = None;
        for token in meta.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| PathError::Schema {
                line: 1,
                msg: format!("malformed metadata entry {token:?}"),
            })?;
            let value: f64 = value.parse().map_err(|_| PathError::Schema {
                line: 1,
                msg: format!("{key}: cannot parse {value:?}"),
            })?;
            match key {
                "rate" => rate = Some(value),
                "duration" => declared_duration = Some(value),
                _ => {}
            }
        }
        let rate = rate.ok_or_else(|| PathError::Schema {
            line: 1,
            msg: "missing rate".into(),
        })?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(PathError::BadRate(rate));
        }

        let mut points = Vec::new();
        for (line, row) in lines {
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            if points.is_empty() && row == "x,y" {
                continue;
            }
            let schema = |msg: String| PathError::Schema { line, msg };
            let mut fields = row.split(',');
            let (Some(xs), Some(ys), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(schema("expected 2 columns".into()));
            };
            let x: f64 = xs
                .trim()
                .parse()
                .map_err(|_| schema(format!("x: cannot parse {xs:?}")))?;
            let y: f64 = ys
                .trim()
                .parse()
                .map_err(|_| schema(format!("y: cannot parse {ys:?}")))?;
            points.push((x, y));
        }
        let path = ReferencePath::new(rate, points)?;
        if let Some(d) = declared_duration {
            if (d - path.duration()).abs() > 0.5 / rate {
                return Err(PathError::Schema {
                    line: 1,
                    msg: format!(
                        "declared duration {d} disagrees with {} points at {rate} Hz",
                        path.len()
                    ),
                });
            }
        }
        Ok(path)
    }
}

/// Parameters of a synthetic slow walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    pub step_length: f64,
    pub step_period: f64,
    pub ml_amplitude: f64,
    pub path_length: f64,
    /// Fraction of each step spent in double support, where the AP
    /// reference dwells.
    pub double_support_fraction: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            step_length: 0.3,
            step_period: 2.0,
            ml_amplitude: 0.05,
            path_length: 3.0,
            double_support_fraction: 0.3,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<(), PathError> {
        let positive = [
            ("step_length", self.step_length),
            ("step_period", self.step_period),
            ("path_length", self.path_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PathError::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.ml_amplitude >= 0.0 && self.ml_amplitude.is_finite()) {
            return Err(PathError::Parameter(format!(
                "ml_amplitude must be non-negative, got {}",
                self.ml_amplitude
            )));
        }
        if !(0.0..1.0).contains(&self.double_support_fraction) {
            return Err(PathError::Parameter(format!(
                "double_support_fraction must lie in [0, 1), got {}",
                self.double_support_fraction
            )));
        }
        Ok(())
    }

    /// Number of steps needed to cover `path_length`; the last one may be short.
    pub fn step_count(&self) -> usize {
        (self.path_length / self.step_length - 1e-9).ceil().max(1.0) as usize
    }
}

/// Synthesizes a slow-walk reference.
///
/// Each step advances AP by `step_length` with a cosine ease during single
/// support and dwells for half the double-support fraction at either end.
/// ML follows `ml_amplitude * sin(pi * t / step_period)`: one cycle per two
/// steps, with extremes at mid single support.
pub fn generate_gait_path(params: &GaitParams, rate: f64) -> Result<ReferencePath, PathError> {
    params.validate()?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(PathError::BadRate(rate));
    }
    let steps = params.step_count();
    let duration = steps as f64 * params.step_period;
    let samples = (duration * rate).round() as usize + 1;
    let dwell = params.double_support_fraction / 2.0;
    let swing = 1.0 - params.double_support_fraction;

    let points = (0..samples)
        .map(|k| {
            let t = k as f64 / rate;
            let x = if k + 1 == samples {
                params.path_length
            } else {
                let step_pos = t / params.step_period;
                let step = (step_pos.floor() as usize).min(steps - 1);
                let phase = step_pos - step as f64;
                let s = ((phase - dwell) / swing).clamp(0.0, 1.0);
                let start = (step as f64 * params.step_length).min(params.path_length);
                let end = ((step + 1) as f64 * params.step_length).min(params.path_length);
                let ease = (1.0 - (PI * s).cos()) / 2.0;
                (start + (end - start) * ease).min(end)
            };
            let y = params.ml_amplitude * (PI * t / params.step_period).sin();
            (x, y)
        })
        .collect();
    ReferencePath::new(rate, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> ReferencePath {
        ReferencePath::new(1.0, vec![(0.0, 0.0), (1.0, 0.0)]).unwrap()
    }

    fn linear_ramp() -> ReferencePath {
        // x(t) = 0.2 t over 5 s at 100 Hz
        let pts = (0..=500).map(|k| (0.2 * (k as f64 / 100.0), 0.0)).collect();
        ReferencePath::new(100.0, pts).unwrap()
    }

    #[test]
    fn lookup_boundaries_and_clamp() {
        let p = two_point();
        assert_eq!(p.lookup(0.0), (0.0, 0.0));
        assert_eq!(p.lookup(-3.0), (0.0, 0.0));
        assert_eq!(p.lookup(p.duration() + 10.0), (1.0, 0.0));
        assert_eq!(p.lookup(0.25), (0.25, 0.0));
    }

    #[test]
    fn anticipatory_lookup_contract() {
        let p = linear_ramp();
        assert_eq!(p.anticipatory_lookup(1.3, 0.0).unwrap(), p.lookup(1.3));
        assert_eq!(
            p.anticipatory_lookup(p.duration(), 0.7).unwrap(),
            (1.0, 0.0)
        );
        let (x, _) = p.anticipatory_lookup(1.0, 0.5).unwrap();
        let (oracle, _) = p.lookup(1.5);
        assert_eq!(x, oracle);
        assert!((x - 0.30).abs() < 1e-12);
        assert!(matches!(
            p.anticipatory_lookup(1.0, -0.1),
            Err(PathError::NegativeAnticipation(_))
        ));
    }

    #[test]
    fn construction_invariants() {
        assert!(matches!(
            ReferencePath::new(100.0, vec![(0.0, 0.0)]),
            Err(PathError::TooShort(1))
        ));
        assert!(matches!(
            ReferencePath::new(0.0, vec![(0.0, 0.0), (1.0, 0.0)]),
            Err(PathError::BadRate(_))
        ));
        assert!(matches!(
            ReferencePath::new(1.0, vec![(0.0, 0.0), (f64::NAN, 0.0)]),
            Err(PathError::NonFinite(1))
        ));
    }

    #[test]
    fn zero_amplitude_is_straight() {
        let params = GaitParams {
            ml_amplitude: 0.0,
            ..GaitParams::default()
        };
        let p = generate_gait_path(&params, 100.0).unwrap();
        assert!(p.points().iter().all(|&(_, y)| y == 0.0));
    }

    #[test]
    fn ten_steps_over_three_meters() {
        let params = GaitParams::default();
        let rate = 100.0;
        let p = generate_gait_path(&params, rate).unwrap();
        // count step boundaries: the start of each dwell-to-motion transition
        let xs: Vec<f64> = p.points().iter().map(|pt| pt.0).collect();
        let mut starts = 0;
        let mut moving = false;
        for w in xs.windows(2) {
            let now = w[1] > w[0];
            if now && !moving {
                starts += 1;
            }
            moving = now;
        }
        assert_eq!(starts, 10);
        let last = *xs.last().unwrap();
        assert!((last - 3.0).abs() <= 1.0 / rate);
        assert_eq!(p.points()[0], (0.0, 0.0));
    }

    #[test]
    fn windowed_increments_sum_to_step_length() {
        let params = GaitParams::default();
        let p = generate_gait_path(&params, 100.0).unwrap();
        let xs: Vec<f64> = p.points().iter().map(|pt| pt.0).collect();
        for window in 0..params.step_count() {
            let lo = window * 200;
            let sum: f64 = (lo..lo + 200).map(|k| xs[k + 1] - xs[k]).sum();
            assert!((sum - 0.3).abs() < 1e-9, "window {window}: {sum}");
        }
    }

    #[test]
    fn amplitude_and_monotonicity() {
        let params = GaitParams::default();
        let p = generate_gait_path(&params, 100.0).unwrap();
        let max_abs_y = p.points().iter().map(|pt| pt.1.abs()).fold(0.0, f64::max);
        assert!((max_abs_y - params.ml_amplitude).abs() < 1e-3);
        assert!(p.points().windows(2).all(|w| w[1].0 >= w[0].0));
    }

    #[test]
    fn partial_last_step() {
        let params = GaitParams {
            path_length: 1.0,
            ..GaitParams::default()
        };
        assert_eq!(params.step_count(), 4);
        let p = generate_gait_path(&params, 50.0).unwrap();
        assert_eq!(p.points().last().unwrap().0, 1.0);
        assert!(p.points().windows(2).all(|w| w[1].0 >= w[0].0));
    }

    #[test]
    fn bad_params_rejected() {
        for bad in [
            GaitParams {
                step_length: 0.0,
                ..GaitParams::default()
            },
            GaitParams {
                double_support_fraction: 1.0,
                ..GaitParams::default()
            },
            GaitParams {
                ml_amplitude: -0.1,
                ..GaitParams::default()
            },
        ] {
            assert!(matches!(
                generate_gait_path(&bad, 100.0),
                Err(PathError::Parameter(_))
            ));
        }
    }

    #[test]
    fn file_roundtrip_is_bitwise() {
        let p = generate_gait_path(&GaitParams::default(), 100.0).unwrap();
        let back = ReferencePath::parse(&p.to_file_string()).unwrap();
        assert_eq!(back.rate(), p.rate());
        let bits = |q: &ReferencePath| -> Vec<(u64, u64)> {
            q.points()
                .iter()
                .map(|(x, y)| (x.to_bits(), y.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back), bits(&p));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ReferencePath::parse("# rate=100\nx,y\n0,0\n"),
            Err(PathError::TooShort(1))
        ));
        assert!(matches!(
            ReferencePath::parse("# rate=0\n0,0\n1,1\n"),
            Err(PathError::BadRate(_))
        ));
        assert!(matches!(
            ReferencePath::parse("x,y\n0,0\n1,1\n"),
            Err(PathError::Schema { line: 1, .. })
        ));
        assert!(matches!(
            ReferencePath::parse("# rate=10\n0,0\n1,zz\n"),
            Err(PathError::Schema { line: 3, .. })
        ));
        assert!(matches!(
            ReferencePath::parse("# rate=10 duration=5\n0,0\n1,1\n"),
            Err(PathError::Schema { line: 1, .. })
        ));
    }
}
