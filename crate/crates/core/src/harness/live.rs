//! Live mode: one client streams fused CoP samples as text lines
//! (`t,x,y` or `t,x,y,valid`); the engine ticks on each and any commands go
//! back as raw 8-byte frames on the same connection.
//!
//! A bad line is answered with `ERR parse <line>` (or `ERR order <line>` for
//! a timestamp that does not advance) and the session carries on. Three bad
//! lines in a row end the session with `ERR closed`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use thiserror::Error;

use crate::copstream::CoPSample;
use crate::feedback::{EngineState, FeedbackConfig, FeedbackError};
use crate::refpath::ReferencePath;

/// Consecutive malformed lines tolerated before the session is dropped.
pub const MAX_CONSECUTIVE_ERRORS: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum LiveLineError {
    #[error("expected 3 or 4 fields, got {0}")]
    FieldCount(usize),
    #[error("field {0} is not a finite number")]
    Number(usize),
    #[error("valid flag must be 0 or 1")]
    Flag,
}

/// Parses one client line.
pub fn parse_live_line(line: &str) -> Result<CoPSample, LiveLineError> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(LiveLineError::FieldCount(fields.len()));
    }
    let mut nums = [0.0; 3];
    for (i, slot) in nums.iter_mut().enumerate() {
        *slot = fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(LiveLineError::Number(i + 1))?;
    }
    let valid = match fields.get(3) {
        None | Some(&"1") => true,
        Some(&"0") => false,
        Some(_) => return Err(LiveLineError::Flag),
    };
    let [t, x, y] = nums;
    Ok(CoPSample { t, x, y, valid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    /// Client closed the connection.
    Eof,
    /// Too many consecutive malformed lines.
    ProtocolViolation,
}

/// Serves one client until EOF or a protocol violation.
pub fn handle_session<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    path: &ReferencePath,
    config: &FeedbackConfig,
) -> io::Result<SessionEnd> {
    let mut engine = EngineState::new();
    let mut consecutive_errors = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = match parse_live_line(&line) {
            Ok(sample) => engine.tick(path, &sample, config).map_err(|e| match e {
                FeedbackError::NonMonotonic { .. } => "order",
                _ => "engine",
            }),
            Err(_) => Err("parse"),
        };
        match outcome {
            Ok(commands) => {
                consecutive_errors = 0;
                for command in commands {
                    let frame = command
                        .encode()
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                    writer.write_all(&frame)?;
                }
            }
            Err(kind) => {
                consecutive_errors += 1;
                writeln!(writer, "ERR {kind} {line_no}")?;
                if consecutive_errors >= MAX_CONSECUTIVE_ERRORS {
                    writeln!(writer, "ERR closed")?;
                    writer.flush()?;
                    return Ok(SessionEnd::ProtocolViolation);
                }
            }
        }
        writer.flush()?;
    }
    Ok(SessionEnd::Eof)
}

fn serve_connection(
    stream: TcpStream,
    path: &ReferencePath,
    config: &FeedbackConfig,
) -> Option<SessionEnd> {
    let peer = stream
        .peer_addr()
        .map_or_else(|_| "?".to_string(), |a| a.to_string());
    let reader = match stream.try_clone() {
        Ok(s) => BufReader::new(s),
        Err(e) => {
            log::warn!("{peer}: {e}");
            return None;
        }
    };
    match handle_session(reader, &stream, path, config) {
        Ok(end) => {
            match end {
                SessionEnd::Eof => log::info!("{peer}: session closed"),
                SessionEnd::ProtocolViolation => {
                    log::warn!("{peer}: dropped after repeated bad lines")
                }
            }
            Some(end)
        }
        Err(e) => {
            log::warn!("{peer}: {e}");
            None
        }
    }
}

/// Accepts connections on `listener`, one thread and one engine per
/// connection. Stops after `max_sessions` connections when given and
/// returns how many of them were dropped for protocol violations.
pub fn serve_listener(
    listener: TcpListener,
    path: ReferencePath,
    config: FeedbackConfig,
    max_sessions: Option<usize>,
) -> io::Result<usize> {
    let shared = Arc::new((path, config));
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let shared = Arc::clone(&shared);
        handles.push(thread::spawn(move || {
            serve_connection(stream, &shared.0, &shared.1)
        }));
        if max_sessions.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    let violations = handles
        .into_iter()
        .map(|h| h.join().ok().flatten())
        .filter(|end| *end == Some(SessionEnd::ProtocolViolation))
        .count();
    Ok(violations)
}

/// Binds `addr` and serves `max_sessions` connections, or forever.
pub fn serve(
    addr: impl ToSocketAddrs,
    path: ReferencePath,
    config: FeedbackConfig,
    max_sessions: Option<usize>,
) -> io::Result<usize> {
    let listener = TcpListener::bind(addr)?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, path, config, max_sessions)
}
