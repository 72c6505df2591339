use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    BadLogLine { line: usize, reason: String },
    #[error("line {line}: expected epoch {expected}, found {found}")]
    NonMonotoneEpochs { line: usize, expected: u32, found: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

/// Four fixed decimals; negative zero prints as `0.0000`.
fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        format!(
            "epoch {}: train_loss={} val_loss={} val_metric={}",
            self.epoch,
            fmt4(self.train_loss),
            fmt4(self.val_loss),
            fmt4(self.val_metric)
        )
    }

    fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("train_loss", self.train_loss),
            ("val_loss", self.val_loss),
            ("val_metric", self.val_metric),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v < 0.0 {
                return Err(format!("{name} is negative"));
            }
        }
        if self.val_metric > 1.0 {
            return Err("val_metric exceeds 1".into());
        }
        Ok(())
    }
}

/// Per-epoch metrics with epochs numbered 1, 2, 3, ... without gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn new(entries: Vec<LogEntry>) -> Result<Self, LogError> {
        for (i, e) in entries.iter().enumerate() {
            let line = i + 1;
            e.check().map_err(|reason| LogError::BadLogLine { line, reason })?;
            let expected = line as u32;
            if e.epoch != expected {
                return Err(LogError::NonMonotoneEpochs {
                    line,
                    expected,
                    found: e.epoch,
                });
            }
        }
        Ok(TrainingLog { entries })
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.last().map(|e| e.val_metric)
    }

    /// Canonical text form: one line per epoch, each terminated by `\n`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for TrainingLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl<'de> Deserialize<'de> for TrainingLog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            entries: Vec<LogEntry>,
        }
        let raw = Raw::deserialize(d)?;
        TrainingLog::new(raw.entries).map_err(serde::de::Error::custom)
    }
}

fn parse_float(field: &str, token: &str) -> Result<f64, String> {
    let ok = !token.is_empty()
        && token
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+'));
    match token.parse::<f64>() {
        Ok(x) if ok && x.is_finite() => Ok(x),
        _ => Err(format!("`{token}` is not a valid {field} value")),
    }
}

fn parse_line(line: &str) -> Result<LogEntry, String> {
    let rest = line.strip_prefix("epoch ").ok_or("line must start with `epoch `")?;
    let (epoch, rest) = rest.split_once(": ").ok_or("missing `: ` after epoch")?;
    if epoch.is_empty() || !epoch.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("`{epoch}` is not an epoch number"));
    }
    let epoch: u32 = epoch.parse().map_err(|_| format!("epoch `{epoch}` out of range"))?;
    let fields: Vec<&str> = rest.split(' ').collect();
    let names = ["train_loss", "val_loss", "val_metric"];
    if fields.len() != names.len() {
        return Err("expected train_loss, val_loss and val_metric".into());
    }
    let mut values = [0.0; 3];
    for ((field, name), slot) in fields.iter().zip(names).zip(values.iter_mut()) {
        let v = field
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| format!("expected `{name}=`"))?;
        *slot = parse_float(name, v)?;
    }
    let entry = LogEntry {
        epoch,
        train_loss: values[0],
        val_loss: values[1],
        val_metric: values[2],
    };
    entry.check()?;
    Ok(entry)
}

/// Parses log text line by line. Empty lines are ignored; any other line
/// must match `epoch <n>: train_loss=<x> val_loss=<x> val_metric=<x>`.
pub fn parse_training_log(text: &str) -> Result<TrainingLog, LogError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let entry = parse_line(line).map_err(|reason| LogError::BadLogLine { line: line_no, reason })?;
        let expected = entries.len() as u32 + 1;
        if entry.epoch != expected {
            return Err(LogError::NonMonotoneEpochs {
                line: line_no,
                expected,
                found: entry.epoch,
            });
        }
        entries.push(entry);
    }
    Ok(TrainingLog { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_example() {
        let log = parse_training_log("epoch 1: train_loss=0.4120 val_loss=0.5300 val_metric=0.8100\n").unwrap();
        assert_eq!(
            log.entries()[0],
            LogEntry {
                epoch: 1,
                train_loss: 0.412,
                val_loss: 0.53,
                val_metric: 0.81
            }
        );
    }

    #[test]
    fn gap_is_non_monotone() {
        let text = "epoch 1: train_loss=1 val_loss=1 val_metric=0\n\
                    epoch 2: train_loss=1 val_loss=1 val_metric=0\n\
                    epoch 4: train_loss=1 val_loss=1 val_metric=0\n";
        assert_eq!(
            parse_training_log(text),
            Err(LogError::NonMonotoneEpochs {
                line: 3,
                expected: 3,
                found: 4
            })
        );
    }

    #[test]
    fn must_start_at_one() {
        assert!(matches!(
            parse_training_log("epoch 3: train_loss=0.4120 val_loss=0.5300 val_metric=0.8100"),
            Err(LogError::NonMonotoneEpochs { .. })
        ));
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let text = "epoch 1: train_loss=1 val_loss=1 val_metric=0\nepoch 2: loss=1\n";
        assert!(matches!(
            parse_training_log(text),
            Err(LogError::BadLogLine { line: 2, .. })
        ));
        for bad in [
            "epoch 1: train_loss=nan val_loss=1 val_metric=0",
            "epoch 1: train_loss=inf val_loss=1 val_metric=0",
            "epoch 1: train_loss=-1 val_loss=1 val_metric=0",
            "epoch 1: train_loss=1 val_loss=1 val_metric=1.5",
            "epoch 1: train_loss=1  val_loss=1 val_metric=0",
            "epoch x: train_loss=1 val_loss=1 val_metric=0",
            "Epoch 1: train_loss=1 val_loss=1 val_metric=0",
        ] {
            assert!(
                matches!(parse_training_log(bad), Err(LogError::BadLogLine { line: 1, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn canonical_serialization() {
        let log = parse_training_log("epoch 1: train_loss=0.41 val_loss=5.3e-1 val_metric=0.81\n\n").unwrap();
        assert_eq!(
            log.serialize(),
            "epoch 1: train_loss=0.4100 val_loss=0.5300 val_metric=0.8100\n"
        );
        assert_eq!(parse_training_log(&log.serialize()).unwrap(), log);
    }

    #[test]
    fn constructor_validates() {
        let e = |epoch| LogEntry {
            epoch,
            train_loss: 1.0,
            val_loss: 1.0,
            val_metric: 0.5,
        };
        assert!(TrainingLog::new(vec![e(1), e(2)]).is_ok());
        assert!(TrainingLog::new(vec![e(2)]).is_err());
        assert!(TrainingLog::default().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let log = parse_training_log("epoch 1: train_loss=0.4 val_loss=0.5 val_metric=0.8").unwrap();
        let json = serde_json::to_string(&log).unwrap();
        assert_eq!(serde_json::from_str::<TrainingLog>(&json).unwrap(), log);
        assert!(serde_json::from_str::<TrainingLog>(
            r#"{"entries":[{"epoch":2,"train_loss":0,"val_loss":0,"val_metric":0}]}"#
        )
        .is_err());
    }
}
