//! Experiment pipelines behind the `ltn` binary: configuration, data
//! preparation, training and the files each run writes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::data::{
    self, clean, encode, group_kdd_categories, kfold, load_table, parse_schema, split,
    synth_generate, DataError, DatasetTable, EncodingSpec, FeatureEncoding, LabelSpec, SynthKind,
    CIC_CLASSES, FLAGS, KDD_CATEGORIES, PROTOCOLS,
};
use crate::kb::{BindingScheme, Dataset, KbError, KnowledgeBase, Task, TrainConfig};
use crate::logic::{
    Formula, FunctionGrounding, Grounding, PredicateGrounding, QuantifierConfig, SimilarityKind,
};
use crate::metrics::{
    self, prediction_table, write_metrics_csv, write_prediction_csv, MetricsError, MetricsLog,
    MetricsRecord,
};
use crate::nn::{
    mlp_init, train_classifier, ClassifierConfig, HiddenActivation, MlpSpec, NnError,
    OutputActivation,
};
use crate::parser::{parse_formula_file, ParseError};
use crate::tensor::AdamConfig;

const BUILTIN_PREFIX: &str = "builtin:";

/// Axiom, query and schema texts shipped with the binary.
fn builtin(name: &str) -> Option<&'static str> {
    Some(match name {
        "protocol.axioms" => include_str!("../../../configs/axioms/protocol.axioms"),
        "kdd_multilabel.axioms" => include_str!("../../../configs/axioms/kdd_multilabel.axioms"),
        "cic.axioms" => include_str!("../../../configs/axioms/cic.axioms"),
        "beam.axioms" => include_str!("../../../configs/axioms/beam.axioms"),
        "protocol.queries" => include_str!("../../../configs/queries/protocol.queries"),
        "kdd_multilabel.queries" => include_str!("../../../configs/queries/kdd_multilabel.queries"),
        "kdd99.schema" => include_str!("../../../configs/schemas/kdd99.schema"),
        "cic_reduced.schema" => include_str!("../../../configs/schemas/cic_reduced.schema"),
        "beam.schema" => include_str!("../../../configs/schemas/beam.schema"),
        _ => return None,
    })
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment '{name}' (valid: {})", Experiment::names().join(", "))]
    UnknownExperiment { name: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("training: {0}")]
    Kb(#[from] KbError),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ProtocolKb,
    KddMultilabelLtn,
    KddDnn,
    CicSinglelabel,
    BeamRegression,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::ProtocolKb,
        Experiment::KddMultilabelLtn,
        Experiment::KddDnn,
        Experiment::CicSinglelabel,
        Experiment::BeamRegression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ProtocolKb => "protocol-kb",
            Experiment::KddMultilabelLtn => "kdd-multilabel-ltn",
            Experiment::KddDnn => "kdd-dnn",
            Experiment::CicSinglelabel => "cic-singlelabel",
            Experiment::BeamRegression => "beam-regression",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Experiment::ALL.iter().map(|e| e.name()).collect()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, ExperimentError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| ExperimentError::UnknownExperiment {
                name: s.trim().to_string(),
            })
    }
}

/// Fully resolved run settings. Text sources (`schema`, `axioms`,
/// `queries`) are either a path or `builtin:<name>`; `data` is a CSV path
/// or `synth`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub data: String,
    pub synth: SynthKind,
    pub n: usize,
    pub data_seed: u64,
    pub schema: String,
    pub validation: Option<PathBuf>,
    pub axioms: String,
    pub queries: Option<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub test_fraction: f64,
    pub hidden: Vec<usize>,
    pub p_train: f64,
    pub p_forall_query: f64,
    pub p_exists_query: f64,
    pub axiom_p: f64,
    pub threshold: f64,
    pub k: Option<usize>,
    pub distance: Option<String>,
    pub minkowski_p: f64,
    pub compare_with: Option<PathBuf>,
    pub out: PathBuf,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .trim()
        .parse()
        .map_err(|_| ExperimentError::Config(format!("bad value '{value}' for '{key}'")))
}

fn optional(value: &str) -> Option<String> {
    match value.trim() {
        "" | "none" => None,
        v => Some(v.to_string()),
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let b = |name: &str| format!("{BUILTIN_PREFIX}{name}");
        let base = ExperimentConfig {
            experiment,
            data: "synth".into(),
            synth: SynthKind::AttackCategories,
            n: 2000,
            data_seed: 1,
            schema: b("kdd99.schema"),
            validation: None,
            axioms: b("kdd_multilabel.axioms"),
            queries: Some(b("kdd_multilabel.queries")),
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 7,
            test_fraction: 0.2,
            hidden: crate::nn::DEFAULT_HIDDEN.to_vec(),
            p_train: 2.0,
            p_forall_query: 4.0,
            p_exists_query: 6.0,
            axiom_p: 2.0,
            threshold: metrics::DEFAULT_THRESHOLD,
            k: None,
            distance: None,
            minkowski_p: 2.0,
            compare_with: None,
            out: PathBuf::from(format!("runs/{experiment}")),
        };
        match experiment {
            Experiment::ProtocolKb => ExperimentConfig {
                synth: SynthKind::ProtocolFlags,
                axioms: b("protocol.axioms"),
                queries: Some(b("protocol.queries")),
                ..base
            },
            Experiment::KddMultilabelLtn => base,
            Experiment::KddDnn => ExperimentConfig {
                axioms: String::new(),
                queries: None,
                learning_rate: 1e-3,
                ..base
            },
            Experiment::CicSinglelabel => ExperimentConfig {
                synth: SynthKind::ThreeClass,
                n: 3000,
                schema: b("cic_reduced.schema"),
                axioms: b("cic.axioms"),
                queries: None,
                ..base
            },
            Experiment::BeamRegression => ExperimentConfig {
                synth: SynthKind::BeamRfs,
                n: 400,
                schema: b("beam.schema"),
                axioms: b("beam.axioms"),
                queries: None,
                epochs: 200,
                batch_size: 32,
                learning_rate: 3e-3,
                k: Some(2),
                distance: Some("euclidean".into()),
                ..base
            },
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "experiment" => {
                let e: Experiment = v.parse()?;
                if e != self.experiment {
                    return Err(ExperimentError::Config(format!(
                        "config is for '{e}' but '{}' was requested",
                        self.experiment
                    )));
                }
            }
            "data" => self.data = v.to_string(),
            "synth" => self.synth = v.parse()?,
            "n" => self.n = parse_value(&key, v)?,
            "data_seed" => self.data_seed = parse_value(&key, v)?,
            "schema" => self.schema = v.to_string(),
            "validation" => self.validation = optional(v).map(PathBuf::from),
            "axioms" => self.axioms = v.to_string(),
            "queries" => self.queries = optional(v),
            "epochs" => self.epochs = parse_value(&key, v)?,
            "batch_size" => self.batch_size = parse_value(&key, v)?,
            "learning_rate" => self.learning_rate = parse_value(&key, v)?,
            "seed" => self.seed = parse_value(&key, v)?,
            "test_fraction" => self.test_fraction = parse_value(&key, v)?,
            "hidden" => {
                self.hidden = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_value(&key, s))
                    .collect::<Result<_, _>>()?
            }
            "p_train" => self.p_train = parse_value(&key, v)?,
            "p_forall_query" => self.p_forall_query = parse_value(&key, v)?,
            "p_exists_query" => self.p_exists_query = parse_value(&key, v)?,
            "axiom_p" => self.axiom_p = parse_value(&key, v)?,
            "threshold" => self.threshold = parse_value(&key, v)?,
            "k" => self.k = optional(v).map(|s| parse_value(&key, &s)).transpose()?,
            "distance" => self.distance = optional(v),
            "minkowski_p" => self.minkowski_p = parse_value(&key, v)?,
            "compare_with" => self.compare_with = optional(v).map(PathBuf::from),
            "out" => self.out = PathBuf::from(v),
            // Derived values written into echo files.
            "feature_checksum" | "ltn_feature_checksum" | "checksum_match" => {}
            other => return Err(ExperimentError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies flat `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key=value", i + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Reads a config file; its `experiment` key picks the defaults.
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let experiment = text
            .lines()
            .filter_map(|l| l.split('#').next())
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "experiment")
            .map(|(_, v)| v.parse::<Experiment>())
            .transpose()?
            .ok_or_else(|| ExperimentError::Config("missing 'experiment' key".into()))?;
        let mut cfg = ExperimentConfig::defaults(experiment);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let beam = self.experiment == Experiment::BeamRegression;
        if !beam && (self.k.is_some() || self.distance.is_some()) {
            return bad(format!(
                "'k' and 'distance' apply only to beam-regression, not {}",
                self.experiment
            ));
        }
        if beam && (self.k.is_none() || self.distance.is_none()) {
            return bad("beam-regression needs 'k' and 'distance'".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "test_fraction {} outside (0,1)",
                self.test_fraction
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0,1)", self.threshold));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be >= 1".into());
        }
        self.quantifiers()
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.axiom_p.is_nan() || self.axiom_p < 1.0 {
            return bad(format!("axiom_p {} must be >= 1", self.axiom_p));
        }
        if beam {
            self.similarity()?;
        }
        if self.experiment != Experiment::KddDnn && self.axioms.is_empty() {
            return bad("missing axiom file".into());
        }
        Ok(())
    }

    pub fn quantifiers(&self) -> QuantifierConfig {
        QuantifierConfig {
            p_train: self.p_train,
            p_forall_query: self.p_forall_query,
            p_exists_query: self.p_exists_query,
        }
    }

    pub fn similarity(&self) -> Result<SimilarityKind, ExperimentError> {
        match self.distance.as_deref() {
            Some("euclidean") => Ok(SimilarityKind::Euclidean),
            Some("manhattan") => Ok(SimilarityKind::Manhattan),
            Some("minkowski") if self.minkowski_p >= 1.0 => {
                Ok(SimilarityKind::Minkowski(self.minkowski_p))
            }
            Some("minkowski") => Err(ExperimentError::Config(format!(
                "minkowski_p {} must be >= 1",
                self.minkowski_p
            ))),
            other => Err(ExperimentError::Config(format!(
                "distance must be euclidean, manhattan or minkowski, got {other:?}"
            ))),
        }
    }

    /// Every setting as `key=value` lines, defaults included.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("none".to_string(), |p| p.display().to_string())
        };
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let mut lines = vec![
            format!("experiment={}", self.experiment),
            format!("data={}", self.data),
            format!("synth={}", self.synth),
            format!("n={}", self.n),
            format!("data_seed={}", self.data_seed),
            format!("schema={}", self.schema),
            format!("validation={}", opt(&self.validation)),
            format!("axioms={}", self.axioms),
            format!("queries={}", self.queries.as_deref().unwrap_or("none")),
            format!("epochs={}", self.epochs),
            format!("batch_size={}", self.batch_size),
            format!("learning_rate={}", self.learning_rate),
            format!("seed={}", self.seed),
            format!("test_fraction={}", self.test_fraction),
            format!("hidden={}", hidden.join(",")),
            format!("p_train={}", self.p_train),
            format!("p_forall_query={}", self.p_forall_query),
            format!("p_exists_query={}", self.p_exists_query),
            format!("axiom_p={}", self.axiom_p),
            format!("threshold={}", self.threshold),
        ];
        if let Some(k) = self.k {
            lines.push(format!("k={k}"));
        }
        if let Some(d) = &self.distance {
            lines.push(format!("distance={d}"));
            lines.push(format!("minkowski_p={}", self.minkowski_p));
        }
        lines.push(format!("compare_with={}", opt(&self.compare_with)));
        lines.push(format!("out={}", self.out.display()));
        lines.join("\n") + "\n"
    }
}

/// Files written by a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunArtifacts {
    pub metrics: PathBuf,
    pub echo: PathBuf,
    pub plots: Vec<PathBuf>,
    /// Per-fold prediction tables (regression).
    pub predictions: Vec<PathBuf>,
    /// Any further tables (fold summary, comparison).
    pub extra: Vec<PathBuf>,
    pub feature_checksum: String,
    /// Per-fold predictions in held-out row order (regression).
    pub fold_predictions: Vec<Vec<f64>>,
    /// Per-fold RMSE on the held-out fold (regression).
    pub fold_rmse: Vec<f64>,
}

fn read_source(source: &str) -> Result<(String, String), ExperimentError> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        let text = builtin(name)
            .ok_or_else(|| ExperimentError::Config(format!("no built-in file '{name}'")))?;
        return Ok((source.to_string(), text.to_string()));
    }
    let text = fs::read_to_string(source).map_err(|e| ExperimentError::Io {
        path: source.to_string(),
        source: e,
    })?;
    Ok((source.to_string(), text))
}

fn read_formulas(source: &str, prefix: &str) -> Result<Vec<(String, Formula)>, ExperimentError> {
    let (path, text) = read_source(source)?;
    let formulas = parse_formula_file(&text, prefix).map_err(|e| ExperimentError::Parse {
        path: path.clone(),
        source: e,
    })?;
    if formulas.is_empty() {
        return Err(ExperimentError::Config(format!("{path}: no formulas")));
    }
    Ok(formulas)
}

fn load_data(cfg: &ExperimentConfig) -> Result<DatasetTable, ExperimentError> {
    let table = if cfg.data == "synth" {
        synth_generate(cfg.synth, cfg.n, cfg.data_seed)?
    } else {
        let (_, schema) = read_source(&cfg.schema)?;
        load_table(Path::new(&cfg.data), &parse_schema(&schema)?)?
    };
    let table = clean(&table);
    if table.len() < 2 {
        return Err(
            DataError::InvalidSplit(format!("{} usable rows after cleaning", table.len())).into(),
        );
    }
    Ok(table)
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn split_dataset(
    cfg: &ExperimentConfig,
    ds: &Dataset,
) -> Result<(Dataset, Dataset), ExperimentError> {
    let (train, test) = split(ds.len(), cfg.test_fraction, cfg.data_seed)?;
    Ok((ds.take(&train)?, ds.take(&test)?))
}

fn class_network(
    cfg: &ExperimentConfig,
    input: usize,
    classes: &[String],
) -> Result<PredicateGrounding, ExperimentError> {
    let spec = MlpSpec {
        hidden_dims: cfg.hidden.clone(),
        ..MlpSpec::predicate(input, classes.len(), cfg.seed)
    };
    Ok(PredicateGrounding::Classes {
        net: mlp_init(&spec)?,
        classes: classes.to_vec(),
    })
}

fn train_config(cfg: &ExperimentConfig, queries: Vec<(String, Formula)>, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed,
        query_formulas: queries,
    }
}

/// Builds a class-predicate knowledge base, trains it and returns its records.
fn run_classification_kb(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    task: Task,
) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let axioms = read_formulas(&cfg.axioms, "A")?;
    let queries = match &cfg.queries {
        Some(q) => read_formulas(q, "phi")?,
        None => Vec::new(),
    };
    let (train, test) = split_dataset(cfg, ds)?;
    let grounding = Grounding::new().with_predicate(
        "P",
        class_network(cfg, ds.features.row_width(), &ds.classes)?,
    );
    let mut kb = KnowledgeBase::new(axioms, grounding, BindingScheme::default())?;
    kb.quantifier_config = cfg.quantifiers();
    kb.axiom_aggregation_p = cfg.axiom_p;
    Ok(kb.train(&train, &test, &train_config(cfg, queries, cfg.seed), &task)?)
}

fn protocol_encoding() -> EncodingSpec {
    let classes = ["tcp", "icmp", "udp", "sf", "s1", "rej"];
    EncodingSpec {
        features: vec![
            FeatureEncoding::OneHot {
                column: "protocol_type".into(),
                vocabulary: PROTOCOLS.iter().map(|s| s.to_string()).collect(),
            },
            FeatureEncoding::OneHot {
                column: "flag".into(),
                vocabulary: FLAGS.iter().map(|s| s.to_string()).collect(),
            },
        ],
        label: LabelSpec::Membership {
            columns: vec!["protocol_type".into(), "flag".into()],
            classes: classes.iter().map(|s| s.to_string()).collect(),
        },
    }
}

/// KDD rows grouped into the five categories and encoded; numeric columns
/// min-max scaled, categorical ones one-hot.
pub fn kdd_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    let table = group_kdd_categories(&load_data(cfg)?, "label")?;
    let label = LabelSpec::OneHot {
        column: "label".into(),
        classes: KDD_CATEGORIES.iter().map(|s| s.to_string()).collect(),
    };
    let spec = EncodingSpec::fit(&table, label, &[])?;
    let (x, y) = encode(&table, &spec)?;
    Ok(Dataset::new(x, y, spec.label.classes().to_vec())?)
}

fn echo(cfg: &ExperimentConfig, extra: &[(&str, String)]) -> String {
    let mut text = cfg.to_text();
    for (k, v) in extra {
        text += &format!("{k}={v}\n");
    }
    text
}

fn finish(
    cfg: &ExperimentConfig,
    metrics_path: PathBuf,
    extra_echo: &[(&str, String)],
    checksum: String,
) -> Result<RunArtifacts, ExperimentError> {
    let echo_path = cfg.out.join("config.echo");
    write_file(&echo_path, &echo(cfg, extra_echo))?;
    let plots = emit_plot_data(&metrics_path, &cfg.out.join("plot"))?;
    Ok(RunArtifacts {
        metrics: metrics_path,
        echo: echo_path,
        plots,
        feature_checksum: checksum,
        ..RunArtifacts::default()
    })
}

/// Reads the `feature_checksum` line of a run's echo file.
pub fn echoed_checksum(echo: &Path) -> Option<String> {
    fs::read_to_string(echo)
        .ok()?
        .lines()
        .find_map(|l| l.strip_prefix("feature_checksum=").map(str::to_string))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|source| ExperimentError::Io {
        path: cfg.out.display().to_string(),
        source,
    })?;
    let metrics_path = cfg.out.join("metrics.csv");
    match cfg.experiment {
        Experiment::ProtocolKb => {
            let table = load_data(cfg)?;
            let spec = protocol_encoding();
            let (x, y) = encode(&table, &spec)?;
            let checksum = data::feature_checksum(&x);
            let ds = Dataset::new(x, y, spec.label.classes().to_vec())?;
            let task = Task::MultiLabel {
                predicate: "P".into(),
                threshold: cfg.threshold,
            };
            let records = run_classification_kb(cfg, &ds, task)?;
            write_metrics_csv(&records, &metrics_path)?;
            finish(
                cfg,
                metrics_path,
                &[("feature_checksum", checksum.clone())],
                checksum,
            )
        }
        Experiment::KddMultilabelLtn => {
            let ds = kdd_dataset(cfg)?;
            let checksum = data::feature_checksum(&ds.features);
            let task = Task::MultiLabel {
                predicate: "P".into(),
                threshold: cfg.threshold,
            };
            let records = run_classification_kb(cfg, &ds, task)?;
            write_metrics_csv(&records, &metrics_path)?;
            finish(
                cfg,
                metrics_path,
                &[("feature_checksum", checksum.clone())],
                checksum,
            )
        }
        Experiment::KddDnn => run_dnn(cfg, metrics_path),
        Experiment::CicSinglelabel => {
            let table = load_data(cfg)?;
            let label = LabelSpec::OneHot {
                column: "Label".into(),
                classes: CIC_CLASSES.iter().map(|s| s.to_string()).collect(),
            };
            let spec = EncodingSpec::fit(&table, label, &[])?;
            let (x, y) = encode(&table, &spec)?;
            let checksum = data::feature_checksum(&x);
            let ds = Dataset::new(x, y, spec.label.classes().to_vec())?;
            let task = Task::SingleLabel {
                predicate: "P".into(),
            };
            let records = run_classification_kb(cfg, &ds, task)?;
            write_metrics_csv(&records, &metrics_path)?;
            finish(
                cfg,
                metrics_path,
                &[("feature_checksum", checksum.clone())],
                checksum,
            )
        }
        Experiment::BeamRegression => run_beam(cfg, metrics_path),
    }
}

fn run_dnn(cfg: &ExperimentConfig, metrics_path: PathBuf) -> Result<RunArtifacts, ExperimentError> {
    let ds = kdd_dataset(cfg)?;
    let checksum = data::feature_checksum(&ds.features);
    let (train, test) = split_dataset(cfg, &ds)?;
    let spec = MlpSpec {
        hidden_dims: cfg.hidden.clone(),
        hidden_activation: HiddenActivation::Relu,
        output_activation: OutputActivation::Softmax,
        ..MlpSpec::classifier(ds.features.row_width(), ds.classes.len(), cfg.seed)
    };
    let mut net = mlp_init(&spec)?;
    let records = train_classifier(
        &mut net,
        (&train.features, &train.targets),
        (&test.features, &test.targets),
        &ClassifierConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            adam: AdamConfig::with_learning_rate(cfg.learning_rate),
            seed: cfg.seed,
            threshold: cfg.threshold,
        },
    )?;
    let mut log = MetricsLog::new(
        ["loss_train", "loss_test", "acc_train", "acc_test"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in &records {
        log.push(
            r.epoch,
            vec![r.loss_train, r.loss_test, r.acc_train, r.acc_test],
        )?;
    }
    log.write_csv(&metrics_path)?;

    let mut extra_echo = vec![("feature_checksum", checksum.clone())];
    let mut extra = Vec::new();
    if let Some(ltn_metrics) = &cfg.compare_with {
        let ltn = MetricsLog::read_csv(ltn_metrics)?;
        let (Some(ltn_train), Some(ltn_test)) = (ltn.column("acc_train"), ltn.column("acc_test"))
        else {
            return Err(ExperimentError::Config(format!(
                "{}: no accuracy columns to compare",
                ltn_metrics.display()
            )));
        };
        let mut cmp = MetricsLog::new(
            [
                "ltn_acc_train",
                "ltn_acc_test",
                "dnn_acc_train",
                "dnn_acc_test",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        for (i, (epoch, _)) in ltn.rows().iter().enumerate() {
            if let Some(r) = records.iter().find(|r| r.epoch == *epoch) {
                cmp.push(
                    *epoch,
                    vec![ltn_train[i], ltn_test[i], r.acc_train, r.acc_test],
                )?;
            }
        }
        let path = cfg.out.join("comparison.csv");
        cmp.write_csv(&path)?;
        extra.push(path);
        let ltn_echo = ltn_metrics.with_file_name("config.echo");
        if let Some(other) = echoed_checksum(&ltn_echo) {
            extra_echo.push(("checksum_match", (other == checksum).to_string()));
            extra_echo.push(("ltn_feature_checksum", other));
        }
    }
    let mut artifacts = finish(cfg, metrics_path, &extra_echo, checksum)?;
    artifacts.extra = extra;
    Ok(artifacts)
}

fn beam_dataset(table: &DatasetTable, spec: &EncodingSpec) -> Result<Dataset, ExperimentError> {
    let (x, y) = encode(table, spec)?;
    Ok(Dataset::new(x, y, Vec::new())?)
}

fn run_beam(
    cfg: &ExperimentConfig,
    metrics_path: PathBuf,
) -> Result<RunArtifacts, ExperimentError> {
    let table = load_data(cfg)?;
    let label = LabelSpec::Regression {
        columns: vec!["position".into()],
    };
    let spec = EncodingSpec::fit(&table, label, &[])?;
    let ds = beam_dataset(&table, &spec)?;
    let checksum = data::feature_checksum(&ds.features);
    let external = match &cfg.validation {
        Some(path) => {
            let (_, schema) = read_source(&cfg.schema)?;
            let t = clean(&load_table(path, &parse_schema(&schema)?)?);
            Some(beam_dataset(&t, &spec)?)
        }
        None => None,
    };
    let axioms = read_formulas(&cfg.axioms, "A")?;
    let kind = cfg.similarity()?;
    let k = cfg.k.unwrap_or(2);
    let plan = kfold(ds.len(), k, cfg.seed)?;

    let mut artifacts = RunArtifacts::default();
    let mut fold_logs: Vec<Vec<MetricsRecord>> = Vec::new();
    let mut summary = String::from("fold,rows,rmse");
    summary += if external.is_some() {
        ",validation_rmse\n"
    } else {
        "\n"
    };
    for fold in 0..k {
        let seed = cfg.seed.wrapping_add(fold as u64);
        let train = ds.take(&plan.train_indices(fold))?;
        let held_out = ds.take(plan.validation_indices(fold))?;
        let net = mlp_init(&MlpSpec {
            hidden_dims: cfg.hidden.clone(),
            ..MlpSpec::regressor(ds.features.row_width(), ds.targets.row_width(), seed)
        })?;
        let grounding = Grounding::new()
            .with_function("f", FunctionGrounding::Mlp(net))
            .with_predicate("Sim", PredicateGrounding::Similarity(kind));
        let scheme = BindingScheme::Paired {
            input: "x".into(),
            target: "y".into(),
        };
        let mut kb = KnowledgeBase::new(axioms.clone(), grounding, scheme)?;
        kb.quantifier_config = cfg.quantifiers();
        kb.axiom_aggregation_p = cfg.axiom_p;
        let task = Task::Regression {
            function: "f".into(),
        };
        let records = kb.train(
            &train,
            &held_out,
            &train_config(cfg, Vec::new(), seed),
            &task,
        )?;
        let fold_metrics = cfg.out.join(format!("fold_{fold}_metrics.csv"));
        write_metrics_csv(&records, &fold_metrics)?;
        artifacts.extra.push(fold_metrics);

        let pred = kb.predict_function("f", &held_out.features)?;
        let rmse = metrics::rmse(pred.data(), held_out.targets.data())?;
        let table = prediction_table(held_out.targets.data(), pred.data())?;
        let path = cfg.out.join(format!("fold_{fold}_predictions.csv"));
        write_prediction_csv(&table, &path)?;
        artifacts.predictions.push(path);
        summary += &format!("{fold},{},{rmse:.6}", held_out.len());
        if let Some(ext) = &external {
            let pred = kb.predict_function("f", &ext.features)?;
            let ext_rmse = metrics::rmse(pred.data(), ext.targets.data())?;
            let path = cfg
                .out
                .join(format!("fold_{fold}_validation_predictions.csv"));
            write_prediction_csv(&prediction_table(ext.targets.data(), pred.data())?, &path)?;
            artifacts.extra.push(path);
            summary += &format!(",{ext_rmse:.6}");
        }
        summary.push('\n');
        artifacts.fold_predictions.push(pred.into_data());
        artifacts.fold_rmse.push(rmse);
        fold_logs.push(records);
    }
    let folds_path = cfg.out.join("folds.csv");
    write_file(&folds_path, &summary)?;
    artifacts.extra.push(folds_path);

    // The run-level log averages the fold logs epoch by epoch.
    let mean: Vec<MetricsRecord> = (0..fold_logs[0].len())
        .map(|e| {
            let avg = |f: fn(&MetricsRecord) -> f64| {
                fold_logs.iter().map(|l| f(&l[e])).sum::<f64>() / k as f64
            };
            MetricsRecord {
                epoch: fold_logs[0][e].epoch,
                sat_train: avg(|r| r.sat_train),
                sat_test: avg(|r| r.sat_test),
                acc_train: avg(|r| r.acc_train),
                acc_test: avg(|r| r.acc_test),
                queries: Vec::new(),
            }
        })
        .collect();
    write_metrics_csv(&mean, &metrics_path)?;
    let base = finish(
        cfg,
        metrics_path,
        &[("feature_checksum", checksum.clone())],
        checksum,
    )?;
    Ok(RunArtifacts {
        metrics: base.metrics,
        echo: base.echo,
        plots: base.plots,
        feature_checksum: base.feature_checksum,
        ..artifacts
    })
}

/// Writes one `<column>.dat` file per metric column holding `epoch value`
/// lines, with the values copied verbatim from the CSV.
pub fn emit_plot_data(metrics_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let text = fs::read_to_string(metrics_csv).map_err(|source| ExperimentError::Io {
        path: metrics_csv.display().to_string(),
        source,
    })?;
    let malformed = |line: usize, message: String| {
        ExperimentError::Metrics(MetricsError::Malformed { line, message })
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty metrics file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"epoch") || columns.len() < 2 {
        return Err(malformed(
            1,
            "expected 'epoch' followed by metric columns".into(),
        ));
    }
    let mut series: Vec<String> = columns[1..]
        .iter()
        .map(|c| format!("# epoch {c}\n"))
        .collect();
    let mut rows = 0;
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(malformed(
                i + 1,
                format!("expected {} fields", columns.len()),
            ));
        }
        if cells[0].parse::<usize>().is_err() {
            return Err(malformed(i + 1, format!("bad epoch '{}'", cells[0])));
        }
        for (s, cell) in series.iter_mut().zip(&cells[1..]) {
            if cell.parse::<f64>().is_err() {
                return Err(malformed(i + 1, format!("bad value '{cell}'")));
            }
            *s += &format!("{} {}\n", cells[0], cell);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(malformed(2, "no data rows".into()));
    }
    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut out = Vec::with_capacity(series.len());
    for (c, s) in columns[1..].iter().zip(series) {
        let name: String = c
            .chars()
            .map(|ch| {
                if ch.is_ascii_alphanumeric() || ch == '_' || ch == '-' {
                    ch
                } else {
                    '_'
                }
            })
            .collect();
        let path = out_dir.join(format!("{name}.dat"));
        write_file(&path, &s)?;
        out.push(path);
    }
    Ok(out)
}

/// Writes a synthetic dataset as CSV with its schema alongside (`.schema`).
pub fn write_synthetic(
    kind: SynthKind,
    n: usize,
    seed: u64,
    out: &Path,
) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let table = synth_generate(kind, n, seed)?;
    table.write_csv(out)?;
    let schema_path = out.with_extension("schema");
    let schema: String = table
        .columns()
        .iter()
        .map(|c| format!("{},{}\n", c.name, c.kind))
        .collect();
    write_file(&schema_path, &schema)?;
    Ok((out.to_path_buf(), schema_path))
}
