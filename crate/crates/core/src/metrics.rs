//! Task metrics and the per-epoch metrics CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: predictions {pred:?} vs truth {truth:?}")]
    ShapeMismatch { pred: Vec<usize>, truth: Vec<usize> },
    #[error("length mismatch: {pred} predictions vs {truth} targets")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed metrics CSV at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `1 - mean |1[pred >= threshold] - truth|` over all cells.
pub fn hamming_accuracy(pred: &Array, truth: &Array, threshold: f64) -> Result<f64, MetricsError> {
    if pred.shape() != truth.shape() {
        return Err(MetricsError::ShapeMismatch {
            pred: pred.shape().to_vec(),
            truth: truth.shape().to_vec(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::Invalid(format!(
            "threshold {threshold} outside (0,1)"
        )));
    }
    if pred.is_empty() {
        return Err(MetricsError::Invalid("no predictions".into()));
    }
    let wrong: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| {
            let bit = if p >= threshold { 1.0 } else { 0.0 };
            (bit - t).abs()
        })
        .sum();
    Ok(1.0 - wrong / pred.len() as f64)
}

/// Fraction of rows whose highest-scoring column is the true class.
pub fn argmax_accuracy(scores: &Array, truth: &Array) -> Result<f64, MetricsError> {
    if scores.shape() != truth.shape() || scores.ndim() != 2 {
        return Err(MetricsError::ShapeMismatch {
            pred: scores.shape().to_vec(),
            truth: truth.shape().to_vec(),
        });
    }
    let n = scores.rows();
    if n == 0 {
        return Err(MetricsError::Invalid("no predictions".into()));
    }
    let argmax = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    };
    let hits = (0..n)
        .filter(|&i| argmax(scores.row(i)) == argmax(truth.row(i)))
        .count();
    Ok(hits as f64 / n as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Invalid("rmse of empty vectors".into()));
    }
    let mse: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// One epoch of satisfiability-driven training.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub sat_train: f64,
    pub sat_test: f64,
    pub acc_train: f64,
    pub acc_test: f64,
    /// Truth value of each named query formula.
    pub queries: Vec<(String, f64)>,
}

impl MetricsRecord {
    pub fn query(&self, name: &str) -> Option<f64> {
        self.queries
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }
}

pub const RECORD_COLUMNS: [&str; 4] = ["sat_train", "sat_test", "acc_train", "acc_test"];

/// Ordered per-epoch rows under a fixed column schema (the epoch column is implicit).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    columns: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl MetricsLog {
    pub fn new(columns: Vec<String>) -> Self {
        MetricsLog {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn from_records(records: &[MetricsRecord]) -> Result<Self, MetricsError> {
        let first = records
            .first()
            .ok_or_else(|| MetricsError::Invalid("empty metrics log".into()))?;
        let mut columns: Vec<String> = RECORD_COLUMNS.iter().map(|s| s.to_string()).collect();
        columns.extend(first.queries.iter().map(|(n, _)| n.clone()));
        let mut log = MetricsLog::new(columns);
        for r in records {
            let names: Vec<&str> = r.queries.iter().map(|(n, _)| n.as_str()).collect();
            if names
                != log.columns[4..]
                    .iter()
                    .map(String::as_str)
                    .collect::<Vec<_>>()
            {
                return Err(MetricsError::Invalid(format!(
                    "epoch {} has query columns {names:?}",
                    r.epoch
                )));
            }
            let mut values = vec![r.sat_train, r.sat_test, r.acc_train, r.acc_test];
            values.extend(r.queries.iter().map(|&(_, v)| v));
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(MetricsError::Invalid(format!(
                    "epoch {} has value {v} outside [0,1]",
                    r.epoch
                )));
            }
            log.push(r.epoch, values)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, epoch: usize, values: Vec<f64>) -> Result<(), MetricsError> {
        if values.len() != self.columns.len() {
            return Err(MetricsError::Invalid(format!(
                "{} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if let Some(&(last, _)) = self.rows.last() {
            if epoch <= last {
                return Err(MetricsError::Invalid(format!(
                    "epoch {epoch} does not follow epoch {last}"
                )));
            }
        }
        self.rows.push((epoch, values));
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (epoch, values) in &self.rows {
            out += &epoch.to_string();
            for v in values {
                out += &format!(",{v:.6}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(MetricsError::Malformed {
            line: 1,
            message: "empty file".into(),
        })?;
        let mut names = header.split(',').map(str::trim);
        if names.next() != Some("epoch") {
            return Err(MetricsError::Malformed {
                line: 1,
                message: "first column must be 'epoch'".into(),
            });
        }
        let mut log = MetricsLog::new(names.map(str::to_string).collect());
        for (i, line) in lines {
            let bad = |message: String| MetricsError::Malformed {
                line: i + 1,
                message,
            };
            let mut cells = line.split(',').map(str::trim);
            let epoch = cells
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad("bad epoch".into()))?;
            let values = cells
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| bad(format!("bad value '{c}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            log.push(epoch, values).map_err(|e| bad(e.to_string()))?;
        }
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        if self.rows.is_empty() {
            return Err(MetricsError::Invalid(
                "refusing to write an empty metrics log".into(),
            ));
        }
        fs::write(path, self.to_csv()).map_err(|source| MetricsError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, MetricsError> {
        let text = fs::read_to_string(path).map_err(|source| MetricsError::Read {
            path: path.display().to_string(),
            source,
        })?;
        MetricsLog::from_csv(&text)
    }
}

/// Writes `records` as the standard metrics CSV.
pub fn write_metrics_csv(
    records: &[MetricsRecord],
    path: &Path,
) -> Result<MetricsLog, MetricsError> {
    let log = MetricsLog::from_records(records)?;
    log.write_csv(path)?;
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub y: f64,
    pub y_pred: f64,
    pub dif: f64,
}

/// Pairs targets with predictions, worst (largest absolute difference) first.
pub fn prediction_table(truth: &[f64], pred: &[f64]) -> Result<Vec<Prediction>, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut rows: Vec<Prediction> = truth
        .iter()
        .zip(pred)
        .map(|(&y, &y_pred)| Prediction {
            y,
            y_pred,
            dif: (y - y_pred).abs(),
        })
        .collect();
    rows.sort_by(|a, b| b.dif.total_cmp(&a.dif));
    Ok(rows)
}

pub fn write_prediction_csv(rows: &[Prediction], path: &Path) -> Result<(), MetricsError> {
    let wrap = |source| MetricsError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(wrap)?;
    let mut out = String::from("y,y_pred,dif\n");
    for r in rows {
        out += &format!("{:.6},{:.6},{:.6}\n", r.y, r.y_pred, r.dif);
    }
    file.write_all(out.as_bytes()).map_err(wrap)
}
