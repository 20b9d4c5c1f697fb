//! Online handwriting records and their JSON-lines storage.
//!
//! One record per line: `{"class": "\\alpha", "strokes": [[[x, y], ...], ...]}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecord {
    #[serde(rename = "class")]
    pub class_label: String,
    pub strokes: Vec<Vec<[f64; 2]>>,
}

impl StrokeRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.strokes.is_empty() {
            return Err("record has no strokes".into());
        }
        if let Some(i) = self.strokes.iter().position(Vec::is_empty) {
            return Err(format!("stroke {i} has no points"));
        }
        if self.points().any(|[x, y]| !x.is_finite() || !y.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.strokes.iter().flatten().copied()
    }
}

/// Reads records, skipping blank lines. Errors carry the 1-based line number.
pub fn read_stroke_jsonl(reader: impl BufRead) -> Result<Vec<StrokeRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Stroke {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StrokeRecord = serde_json::from_str(&line).map_err(|e| Error::Stroke {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| Error::Stroke {
            line: line_no,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_stroke_jsonl(records: &[StrokeRecord], mut writer: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<stroke output>", e))?;
    }
    Ok(())
}

fn point(v: &Value) -> Option<[f64; 2]> {
    match v {
        Value::Object(m) => Some([m.get("x")?.as_f64()?, m.get("y")?.as_f64()?]),
        Value::Array(a) if a.len() >= 2 => Some([a[0].as_f64()?, a[1].as_f64()?]),
        _ => None,
    }
}

fn parse_strokes(raw: &str) -> std::result::Result<Vec<Vec<[f64; 2]>>, String> {
    let v: Value = serde_json::from_str(raw).map_err(|e| format!("stroke data: {e}"))?;
    let strokes = v.as_array().ok_or("stroke data is not a list")?;
    strokes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_array()
                .ok_or_else(|| format!("stroke {i} is not a list"))?
                .iter()
                .map(|p| point(p).ok_or_else(|| format!("stroke {i}: malformed point {p}")))
                .collect()
        })
        .collect()
}

/// Converts the upstream handwritten-math CSV layout into stroke records.
///
/// The file needs a header with a class column (`latex`, `symbol` or
/// `class`) and a `data` column holding the strokes as JSON, either
/// `[[{"x":..,"y":..,"time":..}, ...], ...]` or `[[[x, y], ...], ...]`.
/// Fields are separated by `;` when the header line contains one, by `,`
/// otherwise.
pub fn convert_hwrt_csv(mut reader: impl std::io::Read) -> Result<Vec<StrokeRecord>> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::Dataset(format!("reading csv: {e}")))?;
    let header = text.lines().next().unwrap_or_default();
    let delimiter = if header.contains(';') { b';' } else { b',' };
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let headers = csv.headers()?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let class_col = find(&["latex", "symbol", "class", "formula_in_latex"])
        .ok_or_else(|| Error::Dataset(format!("no class column in header {headers:?}")))?;
    let data_col = find(&["data", "strokes"])
        .ok_or_else(|| Error::Dataset(format!("no data column in header {headers:?}")))?;
    let mut out = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let field = |c: usize| {
            row.get(c).ok_or_else(|| Error::Stroke {
                line,
                message: format!("missing column {c}"),
            })
        };
        let rec = StrokeRecord {
            class_label: field(class_col)?.to_string(),
            strokes: parse_strokes(field(data_col)?).map_err(|message| Error::Stroke { line, message })?,
        };
        rec.validate().map_err(|message| Error::Stroke { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            StrokeRecord {
                class_label: "\\alpha".into(),
                strokes: vec![vec![[0.0, 1.0], [2.5, 3.0]], vec![[4.0, 4.0]]],
            },
            StrokeRecord {
                class_label: "+".into(),
                strokes: vec![vec![[1.0, 1.0]]],
            },
        ];
        let mut buf = Vec::new();
        write_stroke_jsonl(&recs, &mut buf).unwrap();
        assert_eq!(read_stroke_jsonl(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn bad_line_is_named() {
        let text = "{\"class\":\"a\",\"strokes\":[[[0,0]]]}\n\n{\"class\":\"b\",\"strokes\":[]}\n";
        match read_stroke_jsonl(text.as_bytes()) {
            Err(Error::Stroke { line: 3, message }) => assert!(message.contains("no strokes")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_stroke_rejected() {
        let text = "{\"class\":\"a\",\"strokes\":[[[0,0]],[]]}";
        assert!(matches!(read_stroke_jsonl(text.as_bytes()), Err(Error::Stroke { line: 1, .. })));
    }

    #[test]
    fn converts_upstream_csv() {
        let csv = "symbol_id,latex,user_id,data\n\
            31,\\alpha,7,\"[[{\"\"x\"\":1,\"\"y\"\":2,\"\"time\"\":0},{\"\"x\"\":3,\"\"y\"\":4,\"\"time\"\":5}]]\"\n\
            32,+,8,\"[[[0,0],[1,0]],[[0.5,-0.5],[0.5,0.5]]]\"\n";
        let recs = convert_hwrt_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].class_label, "\\alpha");
        assert_eq!(recs[0].strokes, vec![vec![[1.0, 2.0], [3.0, 4.0]]]);
        assert_eq!(recs[1].strokes.len(), 2);
    }

    #[test]
    fn csv_without_data_column_rejected() {
        assert!(convert_hwrt_csv("latex,foo\na,b\n".as_bytes()).is_err());
    }
}
