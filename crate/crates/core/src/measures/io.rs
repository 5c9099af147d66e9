//! CSV and JSON measure files.
//!
//! CSV: one point per row, `;`-separated coordinates, optional trailing
//! `w=<weight>` field; `#` starts a comment line. JSON:
//! `{"points": [[...]], "weights": [...]}` with `weights` optional. Both
//! writers emit shortest round-trip decimals, so save/load is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, MeasureError};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MeasureFile<T> {
    points: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<T>>,
}

/// Loads a measure, inferring the format from the extension when `format`
/// is `None`. The measure id is the file stem.
pub fn load_measure<T: Real>(path: &Path, format: Option<Format>) -> Result<DiscreteMeasure<T>, MeasureError> {
    let format = format
        .or_else(|| Format::from_path(path))
        .ok_or_else(|| MeasureError::Parameter(format!("cannot infer format of {}", path.display())))?;
    let text = fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("measure")
        .to_string();
    match format {
        Format::Csv => parse_csv(&id, &text),
        Format::Json => parse_json(&id, &text),
    }
}

pub fn save_measure<T: Real>(m: &DiscreteMeasure<T>, path: &Path, format: Format) -> Result<(), MeasureError> {
    let text = match format {
        Format::Csv => to_csv(m),
        Format::Json => to_json(m)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_csv<T: Real>(id: &str, text: &str) -> Result<DiscreteMeasure<T>, MeasureError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut weights: Vec<Option<T>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MeasureError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let (coords, weight) = match fields.split_last() {
            Some((last, rest)) if last.starts_with("w=") => {
                let w = parse_number::<T>(&last[2..], line)?;
                if w < T::zero() {
                    return Err(MeasureError::NegativeWeight {
                        index: points.len(),
                        weight: w.f64(),
                    });
                }
                (rest, Some(w))
            }
            _ => (&fields[..], None),
        };
        if coords.is_empty() {
            return Err(MeasureError::Parse {
                line,
                msg: "row has no coordinates".into(),
            });
        }
        let p = coords
            .iter()
            .map(|f| parse_number::<T>(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = points.first().map(|p: &Vec<T>| p.len()) {
            if first != p.len() {
                return Err(MeasureError::DimensionMismatch {
                    index: points.len(),
                    expected: first,
                    got: p.len(),
                });
            }
        }
        points.push(p);
        weights.push(weight);
    }
    build(id, points, weights)
}

pub fn parse_json<T: Real>(id: &str, text: &str) -> Result<DiscreteMeasure<T>, MeasureError> {
    let file: MeasureFile<T> = serde_json::from_str(text)?;
    match file.weights {
        Some(w) => DiscreteMeasure::new(id, file.points, w),
        None => DiscreteMeasure::uniform(id, file.points),
    }
}

fn build<T: Real>(id: &str, points: Vec<Vec<T>>, weights: Vec<Option<T>>) -> Result<DiscreteMeasure<T>, MeasureError> {
    let given = weights.iter().filter(|w| w.is_some()).count();
    if given == 0 {
        return DiscreteMeasure::uniform(id, points);
    }
    if given != weights.len() {
        return Err(MeasureError::Parameter(
            "either every row or no row must carry a w= weight".into(),
        ));
    }
    DiscreteMeasure::new(id, points, weights.into_iter().flatten().collect())
}

fn parse_number<T: Real>(field: &str, line: usize) -> Result<T, MeasureError> {
    let v: T = field.parse().map_err(|_| MeasureError::Parse {
        line,
        msg: format!("malformed number {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(MeasureError::Parse {
            line,
            msg: format!("non-finite number {field:?}"),
        });
    }
    Ok(v)
}

pub fn to_csv<T: Real>(m: &DiscreteMeasure<T>) -> String {
    let mut out = String::new();
    for (p, w) in m.points().iter().zip(m.weights()) {
        for v in p {
            write!(out, "{v};").expect("string write");
        }
        writeln!(out, "w={w}").expect("string write");
    }
    out
}

pub fn to_json<T: Real>(m: &DiscreteMeasure<T>) -> Result<String, MeasureError> {
    let file = MeasureFile {
        points: m.points().to_vec(),
        weights: Some(m.weights().to_vec()),
    };
    Ok(serde_json::to_string(&file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_without_weights_is_uniform() {
        let m: DiscreteMeasure<f64> = parse_csv("m", "0;1;2\n3;4;5\n6;7;8\n").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.dim(), 3);
        assert!(m.weights().iter().all(|w| (*w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn csv_single_column_rows() {
        let m: DiscreteMeasure<f64> = parse_csv("m", "0\n1\n2\n").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.dim(), 1);
    }

    #[test]
    fn csv_errors() {
        let neg = parse_csv::<f64>("m", "0;1;w=1.1\n1;1;w=-0.1\n").unwrap_err();
        assert!(neg.to_string().contains("negative weight"), "{neg}");
        assert!(matches!(
            parse_csv::<f64>("m", "0;1\n1;2;3\n"),
            Err(MeasureError::DimensionMismatch { index: 1, .. })
        ));
        assert!(matches!(
            parse_csv::<f64>("m", "0;x\n"),
            Err(MeasureError::Parse { line: 1, .. })
        ));
        assert!(parse_csv::<f64>("m", "0;w=0.5\n1\n").is_err());
    }

    #[test]
    fn comments_and_weights() {
        let m: DiscreteMeasure<f64> = parse_csv("m", "# header\n0.5;w=0.25\n1.5;w=0.75\n").unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = crate::measures::uniform_cube_sample::<f64>(3, 17, 2).unwrap();
        let back: DiscreteMeasure<f64> = parse_json(m.id(), &to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let back: DiscreteMeasure<f64> = parse_csv(m.id(), &to_csv(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn json_without_weights() {
        let m: DiscreteMeasure<f64> = parse_json("m", r#"{"points": [[0, 1], [2, 3]]}"#).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }
}
