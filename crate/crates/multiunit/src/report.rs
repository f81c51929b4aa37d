//! Report emission: versioned JSON envelopes and the sweep CSV format.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analyzer::SweepRow;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope around every JSON report the CLI emits.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        config: BTreeMap<String, String>,
        body: T,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `M,ALG,OPT,ratio,case` rows. Floats print in shortest round-trip form, so
/// parsing the file back recovers the exact values.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("M,ALG,OPT,ratio,case\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.m, r.alg, r.opt, r.ratio, r.case));
    }
    out
}

/// Parses a sweep CSV produced by [`sweep_to_csv`].
pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "M,ALG,OPT,ratio,case" {
                return Err(Error::ParseError {
                    path: "<csv>".into(),
                    detail: format!("unexpected header: {line}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::ParseError {
                path: "<csv>".into(),
                detail: format!("line {}: expected 5 fields, got {}", i + 1, fields.len()),
            });
        }
        let parse_f = |s: &str, field: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::ParseError {
                path: "<csv>".into(),
                detail: format!("line {}, field {field}: {e}", i + 1),
            })
        };
        rows.push(SweepRow {
            m: fields[0].parse().map_err(|e| Error::ParseError {
                path: "<csv>".into(),
                detail: format!("line {}, field M: {e}", i + 1),
            })?,
            alg: parse_f(fields[1], "ALG")?,
            opt: parse_f(fields[2], "OPT")?,
            ratio: parse_f(fields[3], "ratio")?,
            case: fields[4].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let rows = vec![
            SweepRow { m: 1, alg: 1.0, opt: 1.0, ratio: 1.0, case: "degenerate".into() },
            SweepRow {
                m: 3,
                alg: 26.0 / 3.0,
                opt: 10.0,
                ratio: 26.0 / 30.0,
                case: "1a".into(),
            },
        ];
        let text = sweep_to_csv(&rows);
        let back = sweep_from_csv(&text).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(sweep_from_csv("bogus header\n1,2,3,4,x\n").is_err());
        assert!(sweep_from_csv("M,ALG,OPT,ratio,case\n1,2,3\n").is_err());
        assert!(sweep_from_csv("M,ALG,OPT,ratio,case\n1,zz,3,4,x\n").is_err());
    }
}
