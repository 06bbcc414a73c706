//! On-disk layout of a run.
//!
//! ```text
//! <out-dir>/plan.txt              canonical plan
//! <out-dir>/records/<trial>.csv   reference and measured CoP per tick
//! <out-dir>/commands/<trial>.csv  emitted commands with their frames
//! <out-dir>/trace/<trial>.csv     anticipatory and real error per tick
//! <out-dir>/summary.csv
//! <out-dir>/summary.json
//! ```
//!
//! Record files start with a metadata comment, e.g.
//! `# walker=seed42 condition=EF_O trial=0 seed=123 rate=100 th=0.1`,
//! followed by `t,ref_x,ref_y,x,y,valid`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::copstream::{check_header, csv_error, csv_reader, parse_f64, record_line, CoPSample};
use crate::metrics::{TimedCommand, TrialRecord};
use crate::refpath::ReferencePath;
use crate::simwalker::Condition;

use super::{HarnessError, RunArtifact, TraceRow, TrialOutcome};

const RECORD_HEADER: &str = "t,ref_x,ref_y,x,y,valid";

/// Base file name shared by a trial's record, command and trace files.
pub fn record_file_name(record: &TrialRecord) -> String {
    let walker: String = record
        .walker
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{walker}_{}_t{}", record.condition, record.trial_index)
}

fn record_csv(record: &TrialRecord, th: f64) -> String {
    let mut out = String::with_capacity(record.measured().len() * 48);
    let _ = writeln!(
        out,
        "# walker={} condition={} trial={} seed={} rate={} th={}",
        record.walker,
        record.condition,
        record.trial_index,
        record.seed,
        record.reference().rate(),
        th
    );
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for (s, (rx, ry)) in record.measured().iter().zip(record.reference().points()) {
        let _ = writeln!(
            out,
            "{},{rx},{ry},{},{},{}",
            s.t,
            s.x,
            s.y,
            u8::from(s.valid)
        );
    }
    out
}

fn commands_csv(commands: &[TimedCommand]) -> Result<String, HarnessError> {
    let mut out = String::from("t,seq,unit,intensity,duration_ms,frame\n");
    for TimedCommand { t, command } in commands {
        let frame = command.encode()?;
        let hex: String = frame.iter().map(|b| format!("{b:02X}")).collect();
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{hex}",
            command.seq, command.unit, command.intensity, command.duration_ms
        );
    }
    Ok(out)
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("t,dx_a,dy_a,dx_r,dy_r\n");
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.t,
            fmt(row.anticipatory.map(|e| e.dx)),
            fmt(row.anticipatory.map(|e| e.dy)),
            fmt(row.real.map(|e| e.dx)),
            fmt(row.real.map(|e| e.dy)),
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HarnessError::io(format!("create {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(format!("write {}", path.display()), e))
}

/// Writes a trial's record, command log and trace. `record_path` names the
/// record file; the other two go next to it with `.commands.csv` and
/// `.trace.csv` suffixes.
pub fn write_record(
    record_path: &Path,
    outcome: &TrialOutcome,
    th: f64,
) -> Result<(), HarnessError> {
    write_file(record_path, &record_csv(&outcome.record, th))?;
    let stem = record_path.with_extension("");
    write_file(
        &PathBuf::from(format!("{}.commands.csv", stem.display())),
        &commands_csv(&outcome.record.commands)?,
    )?;
    write_file(
        &PathBuf::from(format!("{}.trace.csv", stem.display())),
        &trace_csv(&outcome.trace),
    )
}

impl RunArtifact {
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        let th = self.plan.config.th_cop;
        write_file(&dir.join("plan.txt"), &self.plan.to_file_string())?;
        for trial in &self.trials {
            let name = record_file_name(&trial.record);
            write_file(
                &dir.join("records").join(format!("{name}.csv")),
                &record_csv(&trial.record, th),
            )?;
            write_file(
                &dir.join("commands").join(format!("{name}.csv")),
                &commands_csv(&trial.record.commands)?,
            )?;
            write_file(
                &dir.join("trace").join(format!("{name}.csv")),
                &trace_csv(&trial.trace),
            )?;
        }
        write_file(&dir.join("summary.csv"), &self.summary.to_csv())?;
        write_file(&dir.join("summary.json"), &(self.summary.to_json() + "\n"))
    }
}

/// A record read back from disk together with the threshold it was run at.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub record: TrialRecord,
    pub th: f64,
}

/// Parses a record file.
pub fn read_record(text: &str) -> Result<RecordFile, HarnessError> {
    let bad = |msg: String| HarnessError::Record(msg);
    let (meta, body) = text.split_once('\n').unwrap_or((text, ""));
    let meta = meta
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("record file must start with a `#` metadata line".into()))?;

    let mut walker = None;
    let mut condition = None;
    let mut trial = 0u32;
    let mut seed = 0u64;
    let mut rate = None;
    let mut th = None;
    for token in meta.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed metadata entry {token:?}")))?;
        let num = |what: &str| bad(format!("metadata {what}: cannot parse {v:?}"));
        match k {
            "walker" => walker = Some(v.to_string()),
            "condition" => condition = Some(v.parse::<Condition>().map_err(bad)?),
            "trial" => trial = v.parse().map_err(|_| num(k))?,
            "seed" => seed = v.parse().map_err(|_| num(k))?,
            "rate" => rate = Some(v.parse::<f64>().map_err(|_| num(k))?),
            "th" => th = Some(v.parse::<f64>().map_err(|_| num(k))?),
            _ => {}
        }
    }
    let condition = condition.ok_or_else(|| bad("metadata lacks condition".into()))?;
    let rate = rate.ok_or_else(|| bad("metadata lacks rate".into()))?;
    let th = th.ok_or_else(|| bad("metadata lacks th".into()))?;
    if !(th > 0.0) {
        return Err(bad(format!("th must be positive, got {th}")));
    }

    let mut rdr = csv_reader(body.as_bytes());
    let header: Vec<&str> = RECORD_HEADER.split(',').collect();
    check_header(&mut rdr, &header)?;
    let mut reference = Vec::new();
    let mut measured = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        // +1 for the metadata line
        let line = record_line(&row) + 1;
        let t = parse_f64(&row, 0, "t", line)?;
        let rx = parse_f64(&row, 1, "ref_x", line)?;
        let ry = parse_f64(&row, 2, "ref_y", line)?;
        let x = parse_f64(&row, 3, "x", line)?;
        let y = parse_f64(&row, 4, "y", line)?;
        let valid = match &row[5] {
            "1" => true,
            "0" => false,
            other => {
                return Err(bad(format!(
                    "line {line}: valid must be 0/1, got {other:?}"
                )))
            }
        };
        reference.push((rx, ry));
        measured.push(CoPSample { t, x, y, valid });
    }
    let reference = ReferencePath::new(rate, reference)?;
    let mut record = TrialRecord::new(
        reference,
        measured,
        condition,
        walker.unwrap_or_else(|| "unknown".into()),
    )?;
    record.trial_index = trial;
    record.seed = seed;
    Ok(RecordFile { record, th })
}

/// Reads every record `*.csv` in `dir` (skipping command and trace files),
/// sorted by file name.
pub fn read_records_dir(dir: &Path) -> Result<Vec<RecordFile>, HarnessError> {
    let entries =
        fs::read_dir(dir).map_err(|e| HarnessError::io(format!("read {}", dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv")
                && !name.ends_with(".commands.csv")
                && !name.ends_with(".trace.csv")
        })
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f)
                .map_err(|e| HarnessError::io(format!("read {}", f.display()), e))?;
            read_record(&text).map_err(|e| HarnessError::Record(format!("{}: {e}", f.display())))
        })
        .collect()
}
