//! Observation datasets and the `t,y` CSV format.

use crate::error::{Error, Result};
use std::path::Path;

/// Whether a dataset feeds hyperparameter fitting or posterior prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetRole {
    #[default]
    HyperparameterTraining,
    PredictionTraining,
}

/// Time/value observation pairs, sorted by time.
///
/// Times live on the nonnegative axis, strictly increasing; duplicates are
/// rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<(f64, f64)>,
    pub role: DatasetRole,
}

impl Dataset {
    pub fn new(mut points: Vec<(f64, f64)>, role: DatasetRole) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("dataset must not be empty".into()));
        }
        for &(t, y) in &points {
            if !t.is_finite() || !y.is_finite() {
                return Err(Error::Config(format!("non-finite observation ({t}, {y})")));
            }
            if t < 0.0 {
                return Err(Error::Config(format!("observation time {t} < 0")));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!("duplicate observation time {}", w[0].0)));
            }
        }
        Ok(Self { points, role })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn last_time(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }

    pub fn with_role(mut self, role: DatasetRole) -> Self {
        self.role = role;
        self
    }

    /// Parse a `t,y` CSV file. Rows may arrive unsorted; duplicates and
    /// non-finite values are rejected with their line number.
    pub fn from_csv_path(path: &Path, role: DatasetRole) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, role)
    }

    pub fn from_csv_str(text: &str, role: DatasetRole) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => break (i, l),
                None => {
                    return Err(Error::Parse { line: 1, message: "empty file".into() });
                }
            }
        };
        if header.1.trim() != "t,y" {
            return Err(Error::Parse {
                line: header.0 + 1,
                message: format!("expected header 't,y', got '{}'", header.1.trim()),
            });
        }
        let mut points = Vec::new();
        let mut seen = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut cols = trimmed.split(',');
            let (t_str, y_str) = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected two comma-separated columns, got '{trimmed}'"),
                    });
                }
            };
            let t: f64 = t_str.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid time '{t_str}'"),
            })?;
            let y: f64 = y_str.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid value '{y_str}'"),
            })?;
            if !t.is_finite() || !y.is_finite() {
                return Err(Error::Parse { line, message: "non-finite observation".into() });
            }
            if t < 0.0 {
                return Err(Error::Parse { line, message: format!("time {t} < 0") });
            }
            if let Some(prev) = seen.iter().position(|&(pt, _)| pt == t) {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "duplicate time {t} (first seen at line {})",
                        seen[prev].1
                    ),
                });
            }
            seen.push((t, line));
            points.push((t, y));
        }
        Self::new(points, role)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,y\n");
        for &(t, y) in &self.points {
            out.push_str(&format!("{t},{y}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let d = Dataset::from_csv_str("t,y\n1,2\n0,1\n", DatasetRole::default()).unwrap();
        assert_eq!(d.points(), &[(0.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn duplicate_time_names_line() {
        let err =
            Dataset::from_csv_str("t,y\n0,1\n1,2\n0,3\n", DatasetRole::default()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_line() {
        let err = Dataset::from_csv_str("t,y\n0,1\nbroken\n", DatasetRole::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        assert!(Dataset::from_csv_str("", DatasetRole::default()).is_err());
        assert!(Dataset::from_csv_str("t,y\n", DatasetRole::default()).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Dataset::from_csv_str("t,y\n0,NaN\n", DatasetRole::default()).is_err());
        assert!(Dataset::new(vec![(0.0, f64::INFINITY)], DatasetRole::default()).is_err());
    }

    #[test]
    fn negative_time_rejected() {
        assert!(Dataset::new(vec![(-1.0, 0.0)], DatasetRole::default()).is_err());
    }

    #[test]
    fn roundtrip() {
        let d = Dataset::new(vec![(0.0, 1.5), (0.25, -0.5)], DatasetRole::default()).unwrap();
        let d2 = Dataset::from_csv_str(&d.to_csv_string(), DatasetRole::default()).unwrap();
        assert_eq!(d, d2);
    }
}
