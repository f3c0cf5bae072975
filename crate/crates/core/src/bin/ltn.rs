use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ltn_core::data::SynthKind;
use ltn_core::experiment::{
    emit_plot_data, run_experiment, write_synthetic, Experiment, ExperimentConfig, ExperimentError,
};

#[derive(Parser)]
#[command(
    name = "ltn",
    version,
    about = "Train and query logic tensor network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Protocol/flag knowledge base with query formulas.
    ProtocolKb(RunArgs),
    /// Multi-label attack-category classification.
    KddMultilabelLtn(RunArgs),
    /// Plain relu/softmax network on the attack-category data.
    KddDnn(RunArgs),
    /// Single-label traffic classification.
    CicSinglelabel(RunArgs),
    /// Beam damage position regression with k-fold cross validation.
    BeamRegression(RunArgs),
    /// Split a metrics CSV into per-column plot series.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset and its schema.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(external_subcommand)]
    Unknown(Vec<String>),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra KEY=VALUE overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// CSV path, or `synth`.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    validation: Option<String>,
    #[arg(long)]
    axioms: Option<String>,
    #[arg(long)]
    queries: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    p_train: Option<String>,
    #[arg(long)]
    p_forall_query: Option<String>,
    #[arg(long)]
    p_exists_query: Option<String>,
    #[arg(long)]
    axiom_p: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// Number of folds (beam-regression).
    #[arg(long)]
    k: Option<String>,
    /// euclidean, manhattan or minkowski (beam-regression).
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    minkowski_p: Option<String>,
    /// LTN metrics CSV to compare against (kdd-dnn).
    #[arg(long)]
    compare_with: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = ExperimentConfig::defaults(experiment);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
                path: path.display().to_string(),
                source,
            })?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("data", &self.data),
            ("synth", &self.synth),
            ("n", &self.n),
            ("data_seed", &self.data_seed),
            ("schema", &self.schema),
            ("validation", &self.validation),
            ("axioms", &self.axioms),
            ("queries", &self.queries),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("seed", &self.seed),
            ("test_fraction", &self.test_fraction),
            ("hidden", &self.hidden),
            ("p_train", &self.p_train),
            ("p_forall_query", &self.p_forall_query),
            ("p_exists_query", &self.p_exists_query),
            ("axiom_p", &self.axiom_p),
            ("threshold", &self.threshold),
            ("k", &self.k),
            ("distance", &self.distance),
            ("minkowski_p", &self.minkowski_p),
            ("compare_with", &self.compare_with),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("--set expects KEY=VALUE, got '{s}'"))
            })?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), ExperimentError> {
    let (experiment, args) = match command {
        Command::ProtocolKb(a) => (Experiment::ProtocolKb, a),
        Command::KddMultilabelLtn(a) => (Experiment::KddMultilabelLtn, a),
        Command::KddDnn(a) => (Experiment::KddDnn, a),
        Command::CicSinglelabel(a) => (Experiment::CicSinglelabel, a),
        Command::BeamRegression(a) => (Experiment::BeamRegression, a),
        Command::Plot { metrics, out } => {
            for path in emit_plot_data(&metrics, &out)? {
                println!("{}", path.display());
            }
            return Ok(());
        }
        Command::Synth { kind, n, seed, out } => {
            let (csv, schema) = write_synthetic(kind, n, seed, &out)?;
            println!("{}\n{}", csv.display(), schema.display());
            return Ok(());
        }
        Command::Unknown(argv) => {
            let name = argv.first().cloned().unwrap_or_default();
            return Err(ExperimentError::UnknownExperiment { name });
        }
    };
    let cfg = args.resolve(experiment)?;
    let artifacts = run_experiment(&cfg)?;
    println!("metrics: {}", artifacts.metrics.display());
    println!("config: {}", artifacts.echo.display());
    for path in artifacts.predictions.iter().chain(&artifacts.extra) {
        println!("output: {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ ExperimentError::UnknownExperiment { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
