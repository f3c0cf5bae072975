//! Tabular data: CSV ingestion against a schema, cleaning, KDD99 category
//! grouping, encoding to arrays, splitting, and synthetic stand-in datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::{Array, TensorError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("column '{column}', row {row}: {message}")]
    Cell {
        column: String,
        row: usize,
        message: String,
    },
    #[error("column '{column}': value '{value}' is not in the vocabulary")]
    UnknownCategory { column: String, value: String },
    #[error("unknown connection label '{0}'")]
    UnknownAttack(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Label => "label",
        })
    }
}

impl FromStr for ColumnKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" => Ok(ColumnKind::Numeric),
            "categorical" => Ok(ColumnKind::Categorical),
            "label" => Ok(ColumnKind::Label),
            other => Err(DataError::Schema(format!("unknown column kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        Column {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn is_clean(&self) -> bool {
        match self {
            Cell::Num(v) => v.is_finite(),
            Cell::Text(_) => true,
            Cell::Missing => false,
        }
    }

    /// Bit-exact key used for duplicate detection.
    fn key(&self) -> String {
        match self {
            Cell::Num(v) => format!("n{:016x}", v.to_bits()),
            Cell::Text(s) => format!("t{s}"),
            Cell::Missing => "m".into(),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetTable {
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
}

impl DatasetTable {
    pub fn new(columns: Vec<Column>) -> Self {
        DatasetTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), DataError> {
        if row.len() != self.columns.len() {
            return Err(DataError::Arity {
                row: self.rows.len() + 1,
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn column_cells(&self, name: &str) -> Result<Vec<&Cell>, DataError> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| &r[k]).collect())
    }

    /// Distinct text values of a column, sorted.
    pub fn distinct_text(&self, name: &str) -> Result<Vec<String>, DataError> {
        let set: BTreeSet<String> = self
            .column_cells(name)?
            .into_iter()
            .filter_map(|c| match c {
                Cell::Text(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        Ok(set.into_iter().collect())
    }

    pub fn to_csv(&self) -> Result<String, DataError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |source| DataError::Csv {
            path: PathBuf::from("<memory>"),
            source,
        };
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_string))
                .map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| DataError::Schema(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_csv()?).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Schema text: one `name,kind` line per column in file order; `#` comments.
pub fn parse_schema(text: &str) -> Result<Vec<Column>, DataError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, kind) = line
            .rsplit_once(',')
            .ok_or_else(|| DataError::Schema(format!("line {}: expected 'name,kind'", i + 1)))?;
        out.push(Column::new(name.trim(), kind.parse()?));
    }
    if out.is_empty() {
        return Err(DataError::Schema("no columns declared".into()));
    }
    Ok(out)
}

pub fn load_schema(path: &Path) -> Result<Vec<Column>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_schema(&text)
}

fn parse_cell(kind: ColumnKind, raw: &str) -> Cell {
    let s = raw.trim();
    if s.is_empty() || s == "?" {
        return Cell::Missing;
    }
    match kind {
        ColumnKind::Numeric => s.parse::<f64>().map_or(Cell::Missing, Cell::Num),
        ColumnKind::Categorical | ColumnKind::Label => Cell::Text(s.to_string()),
    }
}

/// Reads comma-separated text against `schema`. A first row whose fields
/// equal the column names is taken as a header and skipped.
pub fn read_table(text: &str, schema: &[Column]) -> Result<DatasetTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut table = DatasetTable::new(schema.to_vec());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: PathBuf::from("<input>"),
            source,
        })?;
        let row = record.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0
            && record.len() == schema.len()
            && record
                .iter()
                .zip(schema)
                .all(|(f, c)| f.trim().eq_ignore_ascii_case(&c.name))
        {
            continue;
        }
        if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != schema.len() {
            return Err(DataError::Arity {
                row,
                expected: schema.len(),
                found: record.len(),
            });
        }
        let cells = record
            .iter()
            .zip(schema)
            .map(|(f, c)| parse_cell(c.kind, f))
            .collect();
        table.rows.push(cells);
    }
    Ok(table)
}

pub fn load_table(path: &Path, schema: &[Column]) -> Result<DatasetTable, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table(&text, schema)
}

/// Drops exact duplicate rows (keeping the first) and rows holding a
/// missing or non-finite cell.
pub fn clean(t: &DatasetTable) -> DatasetTable {
    let mut seen = BTreeSet::new();
    let rows = t
        .rows
        .iter()
        .filter(|r| r.iter().all(Cell::is_clean))
        .filter(|r| seen.insert(r.iter().map(Cell::key).collect::<Vec<_>>()))
        .cloned()
        .collect();
    DatasetTable {
        columns: t.columns.clone(),
        rows,
    }
}

pub const KDD_CATEGORIES: [&str; 5] = ["normal", "DOS", "probe", "R2L", "U2R"];

/// The five-way grouping of the 23 KDD99 connection labels. Trailing dots
/// are ignored and `portseep` is read as `portsweep`.
pub fn map_kdd_category(attack_name: &str) -> Result<&'static str, DataError> {
    let name = attack_name.trim().trim_end_matches('.');
    Ok(match name {
        "normal" => "normal",
        "back" | "land" | "neptune" | "pod" | "smurf" | "teardrop" => "DOS",
        "ftp_write" | "guess_passwd" | "imap" | "multihop" | "phf" | "spy" | "warezclient"
        | "warezmaster" => "R2L",
        "buffer_overflow" | "loadmodule" | "perl" | "rootkit" => "U2R",
        "ipsweep" | "nmap" | "portsweep" | "portseep" | "satan" => "probe",
        _ => return Err(DataError::UnknownAttack(attack_name.to_string())),
    })
}

/// Replaces every value of `column` with its KDD category.
pub fn group_kdd_categories(t: &DatasetTable, column: &str) -> Result<DatasetTable, DataError> {
    let k = t.column_index(column)?;
    let mut out = t.clone();
    for (i, row) in out.rows.iter_mut().enumerate() {
        let Cell::Text(name) = &row[k] else {
            return Err(DataError::Cell {
                column: column.to_string(),
                row: i + 1,
                message: "expected a connection label".into(),
            });
        };
        row[k] = Cell::Text(map_kdd_category(name)?.to_string());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaling {
    None,
    MinMax { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureEncoding {
    OneHot {
        column: String,
        vocabulary: Vec<String>,
    },
    Numeric {
        column: String,
        scaling: Scaling,
    },
}

impl FeatureEncoding {
    pub fn column(&self) -> &str {
        match self {
            FeatureEncoding::OneHot { column, .. } | FeatureEncoding::Numeric { column, .. } => {
                column
            }
        }
    }

    pub fn width(&self) -> usize {
        match self {
            FeatureEncoding::OneHot { vocabulary, .. } => vocabulary.len(),
            FeatureEncoding::Numeric { .. } => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LabelSpec {
    /// One class per row, taken from `column`.
    OneHot {
        column: String,
        classes: Vec<String>,
    },
    /// A class is set when any of `columns` holds it (case-insensitive).
    Membership {
        columns: Vec<String>,
        classes: Vec<String>,
    },
    /// Numeric targets passed through unscaled.
    Regression { columns: Vec<String> },
}

impl LabelSpec {
    pub fn classes(&self) -> &[String] {
        match self {
            LabelSpec::OneHot { classes, .. } | LabelSpec::Membership { classes, .. } => classes,
            LabelSpec::Regression { .. } => &[],
        }
    }

    fn columns(&self) -> Vec<&str> {
        match self {
            LabelSpec::OneHot { column, .. } => vec![column],
            LabelSpec::Membership { .. } => Vec::new(),
            LabelSpec::Regression { columns } => columns.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodingSpec {
    pub features: Vec<FeatureEncoding>,
    pub label: LabelSpec,
}

fn match_vocab(vocab: &[String], value: &str) -> Option<usize> {
    vocab
        .iter()
        .position(|v| v == value)
        .or_else(|| vocab.iter().position(|v| v.eq_ignore_ascii_case(value)))
}

impl EncodingSpec {
    /// Encodes every numeric and categorical column except the label
    /// columns and `exclude`, in table order: categorical vocabularies are
    /// the sorted distinct values, numeric columns are min-max scaled over
    /// the table.
    pub fn fit(
        table: &DatasetTable,
        label: LabelSpec,
        exclude: &[&str],
    ) -> Result<Self, DataError> {
        let skip: Vec<&str> = label
            .columns()
            .into_iter()
            .chain(exclude.iter().copied())
            .collect();
        let mut features = Vec::new();
        for c in table.columns() {
            if skip.contains(&c.name.as_str()) {
                continue;
            }
            match c.kind {
                ColumnKind::Categorical => features.push(FeatureEncoding::OneHot {
                    column: c.name.clone(),
                    vocabulary: table.distinct_text(&c.name)?,
                }),
                ColumnKind::Numeric => features.push(FeatureEncoding::Numeric {
                    column: c.name.clone(),
                    scaling: fit_min_max(table, &c.name)?,
                }),
                ColumnKind::Label => {}
            }
        }
        Ok(EncodingSpec { features, label })
    }

    /// Fixes the one-hot order of `column`.
    pub fn with_vocabulary(mut self, column: &str, vocabulary: &[&str]) -> Result<Self, DataError> {
        let f = self
            .features
            .iter_mut()
            .find(|f| f.column() == column)
            .ok_or_else(|| DataError::UnknownColumn(column.to_string()))?;
        *f = FeatureEncoding::OneHot {
            column: column.to_string(),
            vocabulary: vocabulary.iter().map(|s| s.to_string()).collect(),
        };
        Ok(self)
    }

    /// Keeps only the listed feature columns, in the listed order.
    pub fn select_features(mut self, columns: &[&str]) -> Result<Self, DataError> {
        let mut out = Vec::with_capacity(columns.len());
        for c in columns {
            let k = self
                .features
                .iter()
                .position(|f| f.column() == *c)
                .ok_or_else(|| DataError::UnknownColumn(c.to_string()))?;
            out.push(self.features[k].clone());
        }
        self.features = out;
        Ok(self)
    }

    pub fn feature_width(&self) -> usize {
        self.features.iter().map(FeatureEncoding::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.features {
            match f {
                FeatureEncoding::OneHot { column, vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| format!("{column}={v}")))
                }
                FeatureEncoding::Numeric { column, .. } => out.push(column.clone()),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for f in &self.features {
            match f {
                FeatureEncoding::OneHot { column, vocabulary } if vocabulary.is_empty() => {
                    return Err(DataError::Schema(format!(
                        "empty vocabulary for '{column}'"
                    )))
                }
                FeatureEncoding::Numeric {
                    column,
                    scaling: Scaling::MinMax { min, max },
                } if min.is_nan() || max.is_nan() || min >= max => {
                    return Err(DataError::Schema(format!(
                        "scaling for '{column}' needs min < max"
                    )))
                }
                _ => {}
            }
        }
        match &self.label {
            LabelSpec::OneHot { classes, .. } | LabelSpec::Membership { classes, .. }
                if classes.is_empty() =>
            {
                Err(DataError::Schema("no label classes".into()))
            }
            _ => Ok(()),
        }
    }
}

fn fit_min_max(table: &DatasetTable, column: &str) -> Result<Scaling, DataError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in table.column_cells(column)? {
        if let Cell::Num(v) = c {
            if v.is_finite() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
    }
    if !lo.is_finite() {
        return Ok(Scaling::None);
    }
    // A constant column maps to 0.
    if lo == hi {
        hi = lo + 1.0;
    }
    Ok(Scaling::MinMax { min: lo, max: hi })
}

fn number(cell: &Cell, column: &str, row: usize) -> Result<f64, DataError> {
    match cell {
        Cell::Num(v) if v.is_finite() => Ok(*v),
        Cell::Text(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DataError::Cell {
                column: column.to_string(),
                row,
                message: format!("'{s}' is not a finite number"),
            }),
        _ => Err(DataError::Cell {
            column: column.to_string(),
            row,
            message: "missing or non-finite value".into(),
        }),
    }
}

fn text<'a>(cell: &'a Cell, column: &str, row: usize) -> Result<&'a str, DataError> {
    match cell {
        Cell::Text(s) => Ok(s),
        _ => Err(DataError::Cell {
            column: column.to_string(),
            row,
            message: "expected a categorical value".into(),
        }),
    }
}

/// Features `[n, feature_width]` and labels (`[n, |classes|]` for class
/// labels, `[n, |columns|]` for regression).
pub fn encode(t: &DatasetTable, spec: &EncodingSpec) -> Result<(Array, Array), DataError> {
    spec.validate()?;
    let n = t.len();
    let width = spec.feature_width();
    let mut x = Vec::with_capacity(n * width);
    let feature_cols: Vec<usize> = spec
        .features
        .iter()
        .map(|f| t.column_index(f.column()))
        .collect::<Result<_, _>>()?;
    for (i, row) in t.rows().iter().enumerate() {
        for (f, &k) in spec.features.iter().zip(&feature_cols) {
            match f {
                FeatureEncoding::OneHot { column, vocabulary } => {
                    let v = text(&row[k], column, i + 1)?;
                    let hot =
                        match_vocab(vocabulary, v).ok_or_else(|| DataError::UnknownCategory {
                            column: column.clone(),
                            value: v.to_string(),
                        })?;
                    x.extend((0..vocabulary.len()).map(|j| if j == hot { 1.0 } else { 0.0 }));
                }
                FeatureEncoding::Numeric { column, scaling } => {
                    let v = number(&row[k], column, i + 1)?;
                    x.push(match scaling {
                        Scaling::None => v,
                        Scaling::MinMax { min, max } => (v - min) / (max - min),
                    });
                }
            }
        }
    }
    let features = Array::new(vec![n, width], x)?;
    let labels = match &spec.label {
        LabelSpec::OneHot { column, classes } => {
            let k = t.column_index(column)?;
            let mut y = Vec::with_capacity(n * classes.len());
            for (i, row) in t.rows().iter().enumerate() {
                let v = text(&row[k], column, i + 1)?;
                let hot = match_vocab(classes, v).ok_or_else(|| DataError::UnknownCategory {
                    column: column.clone(),
                    value: v.to_string(),
                })?;
                y.extend((0..classes.len()).map(|j| if j == hot { 1.0 } else { 0.0 }));
            }
            Array::new(vec![n, classes.len()], y)?
        }
        LabelSpec::Membership { columns, classes } => {
            let ks: Vec<usize> = columns
                .iter()
                .map(|c| t.column_index(c))
                .collect::<Result<_, _>>()?;
            let mut y = Vec::with_capacity(n * classes.len());
            for row in t.rows() {
                for class in classes {
                    let set = ks.iter().any(
                        |&k| matches!(&row[k], Cell::Text(s) if s.eq_ignore_ascii_case(class)),
                    );
                    y.push(if set { 1.0 } else { 0.0 });
                }
            }
            Array::new(vec![n, classes.len()], y)?
        }
        LabelSpec::Regression { columns } => {
            let ks: Vec<usize> = columns
                .iter()
                .map(|c| t.column_index(c))
                .collect::<Result<_, _>>()?;
            let mut y = Vec::with_capacity(n * columns.len());
            for (i, row) in t.rows().iter().enumerate() {
                for (&k, c) in ks.iter().zip(columns) {
                    y.push(number(&row[k], c, i + 1)?);
                }
            }
            Array::new(vec![n, columns.len()], y)?
        }
    };
    Ok((features, labels))
}

/// Values of a one-hot encoded categorical feature, read back from `features`.
pub fn decode_categorical(
    features: &Array,
    spec: &EncodingSpec,
    column: &str,
) -> Result<Vec<String>, DataError> {
    let mut offset = 0;
    for f in &spec.features {
        if let FeatureEncoding::OneHot {
            column: c,
            vocabulary,
        } = f
        {
            if c == column {
                return (0..features.rows())
                    .map(|i| {
                        let block = &features.row(i)[offset..offset + vocabulary.len()];
                        let hot: Vec<usize> =
                            (0..block.len()).filter(|&j| block[j] == 1.0).collect();
                        match hot.as_slice() {
                            [j] => Ok(vocabulary[*j].clone()),
                            _ => Err(DataError::Cell {
                                column: column.to_string(),
                                row: i + 1,
                                message: "not a one-hot block".into(),
                            }),
                        }
                    })
                    .collect();
            }
        }
        offset += f.width();
    }
    Err(DataError::UnknownColumn(column.to_string()))
}

/// SHA-256 over the shape and the little-endian bit patterns of `features`.
pub fn feature_checksum(features: &Array) -> String {
    let mut h = Sha256::new();
    for &d in features.shape() {
        h.update((d as u64).to_le_bytes());
    }
    for v in features.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffled train/test index sets; the test part holds `round(n·fraction)`
/// rows, at least one and at most `n − 1`.
pub fn split(
    n: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "test fraction {test_fraction} outside (0,1)"
        )));
    }
    if n < 2 {
        return Err(DataError::InvalidSplit(format!("cannot split {n} rows")));
    }
    let idx = shuffled(n, seed);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = idx.split_at(n_test);
    Ok((train.to_vec(), test.to_vec()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices outside fold `i`, in fold order.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }

    pub fn validation_indices(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }
}

/// Partitions shuffled indices into `k` folds; the first `n mod k` folds
/// get one extra index.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 || k > n {
        return Err(DataError::InvalidSplit(format!(
            "k={k} needs 2 <= k <= n={n}"
        )));
    }
    let idx = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(FoldPlan { k, seed, folds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    ProtocolFlags,
    AttackCategories,
    ThreeClass,
    BeamRfs,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [
        SynthKind::ProtocolFlags,
        SynthKind::AttackCategories,
        SynthKind::ThreeClass,
        SynthKind::BeamRfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::ProtocolFlags => "protocol_flags",
            SynthKind::AttackCategories => "attack_categories",
            SynthKind::ThreeClass => "three_class",
            SynthKind::BeamRfs => "beam_rfs",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| DataError::Schema(format!("unknown synthetic dataset '{s}'")))
    }
}

pub const PROTOCOLS: [&str; 3] = ["tcp", "icmp", "udp"];
pub const FLAGS: [&str; 11] = [
    "SF", "S1", "REJ", "S2", "S0", "S3", "RSTO", "RSTR", "RSTOS0", "OTH", "SH",
];

/// Raw connection labels per category, in [`KDD_CATEGORIES`] order.
const ATTACKS: [&[&str]; 5] = [
    &["normal"],
    &["back", "land", "neptune", "pod", "smurf", "teardrop"],
    &["ipsweep", "nmap", "portsweep", "satan"],
    &[
        "ftp_write",
        "guess_passwd",
        "imap",
        "multihop",
        "phf",
        "spy",
        "warezclient",
        "warezmaster",
    ],
    &["buffer_overflow", "loadmodule", "perl", "rootkit"],
];
const CATEGORY_SHARE: [f64; 5] = [0.60, 0.25, 0.10, 0.04, 0.01];

pub const ATTACK_FEATURES: [&str; 8] = [
    "duration",
    "src_bytes",
    "dst_bytes",
    "count",
    "srv_count",
    "serror_rate",
    "same_srv_rate",
    "dst_host_count",
];
const ATTACK_FEATURE_SCALE: [f64; 8] = [100.0, 5000.0, 5000.0, 500.0, 500.0, 1.0, 1.0, 255.0];

pub const CIC_FEATURES: [&str; 19] = [
    "Destination Port",
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Mean",
    "Bwd Packet Length Max",
    "Bwd Packet Length Mean",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Fwd IAT Mean",
    "Bwd IAT Mean",
    "SYN Flag Count",
    "ACK Flag Count",
    "Average Packet Size",
    "Init_Win_bytes_forward",
];
pub const CIC_CLASSES: [&str; 3] = ["BENIGN", "DDoS", "PortScan"];
const CIC_COUNTS: [f64; 3] = [57305.0, 212718.0, 128005.0];

pub const BEAM_FEATURES: usize = 8;

/// Exact per-class counts proportional to `shares`, summing to `n`.
fn class_counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let mut counts: Vec<usize> = shares
        .iter()
        .map(|s| (n as f64 * s / total).floor() as usize)
        .collect();
    let mut rest = n - counts.iter().sum::<usize>();
    // Largest remainders first, ties by position.
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = n as f64 * shares[a] / total - counts[a] as f64;
        let rb = n as f64 * shares[b] / total - counts[b] as f64;
        rb.total_cmp(&ra)
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Shuffled class assignment with exact proportional counts.
fn class_sequence(n: usize, shares: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seq: Vec<usize> = class_counts(n, shares)
        .iter()
        .enumerate()
        .flat_map(|(c, &m)| std::iter::repeat_n(c, m))
        .collect();
    seq.shuffle(rng);
    seq
}

fn gaussian(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd)
        .expect("positive deviation")
        .sample(rng)
}

/// Synthetic stand-ins for the experiment datasets; `n ≥ 10`.
pub fn synth_generate(kind: SynthKind, n: usize, seed: u64) -> Result<DatasetTable, DataError> {
    if n < 10 {
        return Err(DataError::InvalidSplit(format!(
            "synthetic datasets need n >= 10, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num = ColumnKind::Numeric;
    Ok(match kind {
        SynthKind::ProtocolFlags => {
            let mut t = DatasetTable::new(vec![
                Column::new("duration", num),
                Column::new("protocol_type", ColumnKind::Categorical),
                Column::new("flag", ColumnKind::Categorical),
                Column::new("src_bytes", num),
                Column::new("dst_bytes", num),
                Column::new("label", ColumnKind::Label),
            ]);
            // UDP is the majority protocol; UDP and ICMP connections are
            // always SF, TCP ones never are.
            let protocols = class_sequence(n, &[0.12, 0.08, 0.80], &mut rng);
            for p in protocols {
                let flag = if PROTOCOLS[p] == "tcp" {
                    FLAGS[rng.random_range(1..FLAGS.len())]
                } else {
                    "SF"
                };
                t.push_row(vec![
                    Cell::Num(rng.random_range(0..60) as f64),
                    Cell::Text(PROTOCOLS[p].into()),
                    Cell::Text(flag.into()),
                    Cell::Num(rng.random_range(0..5000) as f64),
                    Cell::Num(rng.random_range(0..5000) as f64),
                    Cell::Text(if flag == "SF" { "normal" } else { "neptune" }.into()),
                ])?;
            }
            t
        }
        SynthKind::AttackCategories => {
            let mut columns: Vec<Column> = ATTACK_FEATURES
                .iter()
                .map(|c| Column::new(c, num))
                .collect();
            columns.insert(1, Column::new("protocol_type", ColumnKind::Categorical));
            columns.push(Column::new("label", ColumnKind::Label));
            let mut t = DatasetTable::new(columns);
            // One well-separated centre per category on the unit cube.
            let centres: Vec<Vec<f64>> = (0..KDD_CATEGORIES.len())
                .map(|c| {
                    (0..ATTACK_FEATURES.len())
                        .map(|j| {
                            if (c + j) % KDD_CATEGORIES.len() < 2 {
                                0.8
                            } else {
                                0.2
                            }
                        })
                        .collect()
                })
                .collect();
            let protocol_of = [
                [0.6, 0.1, 0.3],
                [0.5, 0.4, 0.1],
                [0.6, 0.2, 0.2],
                [0.9, 0.0, 0.1],
                [1.0, 0.0, 0.0],
            ];
            for c in class_sequence(n, &CATEGORY_SHARE, &mut rng) {
                let mut row: Vec<Cell> = centres[c]
                    .iter()
                    .zip(ATTACK_FEATURE_SCALE)
                    .map(|(&m, s)| Cell::Num(gaussian(&mut rng, m, 0.06).clamp(0.0, 1.0) * s))
                    .collect();
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut p = 0;
                for (i, w) in protocol_of[c].iter().enumerate() {
                    acc += w;
                    if u < acc {
                        p = i;
                        break;
                    }
                }
                row.insert(1, Cell::Text(PROTOCOLS[p].into()));
                let names = ATTACKS[c];
                let mut name = names[rng.random_range(0..names.len())].to_string();
                if rng.random_bool(0.5) {
                    name.push('.');
                }
                row.push(Cell::Text(name));
                t.push_row(row)?;
            }
            t
        }
        SynthKind::ThreeClass => {
            let mut columns: Vec<Column> =
                CIC_FEATURES.iter().map(|c| Column::new(c, num)).collect();
            columns.push(Column::new("Label", ColumnKind::Label));
            let mut t = DatasetTable::new(columns);
            let centres: Vec<Vec<f64>> = (0..CIC_CLASSES.len())
                .map(|c| {
                    (0..CIC_FEATURES.len())
                        .map(|j| [0.2, 0.5, 0.8][(c + j) % 3])
                        .collect()
                })
                .collect();
            for c in class_sequence(n, &CIC_COUNTS, &mut rng) {
                let mut row: Vec<Cell> = centres[c]
                    .iter()
                    .map(|&m| Cell::Num(gaussian(&mut rng, m, 0.08) * 1000.0))
                    .collect();
                row.push(Cell::Text(CIC_CLASSES[c].into()));
                t.push_row(row)?;
            }
            t
        }
        SynthKind::BeamRfs => {
            let mut columns: Vec<Column> = (1..=BEAM_FEATURES)
                .map(|i| Column::new(&format!("rfs_{i}"), num))
                .collect();
            columns.push(Column::new("position", num));
            let mut t = DatasetTable::new(columns);
            for _ in 0..n {
                let s: f64 = rng.random_range(0.02..0.98);
                let mut row: Vec<Cell> = beam_rfs(s)
                    .into_iter()
                    .map(|v| Cell::Num(v + gaussian(&mut rng, 0.0, 0.002)))
                    .collect();
                row.push(Cell::Num(s));
                t.push_row(row)?;
            }
            t
        }
    })
}

/// Noise-free relative frequency shifts of the eight modes for a defect at
/// position `s`: squared mode shapes `sin²(mπs/4)`-style, the first one
/// monotone over the beam.
pub fn beam_rfs(s: f64) -> [f64; BEAM_FEATURES] {
    let pi = std::f64::consts::PI;
    let mut out = [0.0; BEAM_FEATURES];
    for (i, v) in out.iter_mut().enumerate() {
        let m = (i + 1) as f64;
        *v = (m * pi * s / 4.0 + 0.1 * m).sin().powi(2) / m.sqrt();
    }
    out
}

/// Per-class row counts of a label column.
pub fn label_counts(t: &DatasetTable, column: &str) -> Result<BTreeMap<String, usize>, DataError> {
    let mut out = BTreeMap::new();
    for c in t.column_cells(column)? {
        *out.entry(c.to_string()).or_insert(0) += 1;
    }
    Ok(out)
}
