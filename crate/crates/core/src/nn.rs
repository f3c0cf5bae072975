//! Multilayer perceptrons on top of [`crate::tensor`], plus the plain
//! softmax/cross-entropy baseline classifier.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics;
use crate::tensor::{AdamConfig, AdamState, Array, Graph, NodeId, TensorError};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input width {found} does not match network input dimension {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("label row {row} is not one-hot")]
    NotOneHot { row: usize },
    #[error("probability row {row} sums to {sum}, not 1")]
    NotDistribution { row: usize, sum: f64 },
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HiddenActivation {
    Elu,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
    Identity,
}

impl fmt::Display for HiddenActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiddenActivation::Elu => "elu",
            HiddenActivation::Relu => "relu",
        })
    }
}

impl FromStr for HiddenActivation {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elu" => Ok(HiddenActivation::Elu),
            "relu" => Ok(HiddenActivation::Relu),
            _ => Err(NnError::InvalidSpec(format!(
                "unknown hidden activation '{s}'"
            ))),
        }
    }
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::Sigmoid => "sigmoid",
            OutputActivation::Softmax => "softmax",
            OutputActivation::Identity => "identity",
        })
    }
}

impl FromStr for OutputActivation {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            "softmax" => Ok(OutputActivation::Softmax),
            "identity" => Ok(OutputActivation::Identity),
            _ => Err(NnError::InvalidSpec(format!(
                "unknown output activation '{s}'"
            ))),
        }
    }
}

/// Hidden width used by every experiment network.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub seed: u64,
}

impl MlpSpec {
    /// elu hidden layers with a sigmoid head: the predicate network shape.
    pub fn predicate(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            output_dim,
            hidden_activation: HiddenActivation::Elu,
            output_activation: OutputActivation::Sigmoid,
            seed,
        }
    }

    /// relu hidden layers with a softmax head: the baseline classifier shape.
    pub fn classifier(input_dim: usize, classes: usize, seed: u64) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            output_dim: classes,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Softmax,
            seed,
        }
    }

    /// elu hidden layers with a linear head, for function symbols.
    pub fn regressor(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            output_dim,
            hidden_activation: HiddenActivation::Elu,
            output_activation: OutputActivation::Identity,
            seed,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    /// At least two hidden layers.
    pub fn is_deep(&self) -> bool {
        self.hidden_dims.len() >= 2
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.dims().contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "all layer dimensions must be >= 1, got {:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array,
    pub bias: Array,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Glorot-uniform weights, zero biases; deterministic per `spec.seed`.
pub fn mlp_init(spec: &MlpSpec) -> Result<MlpParams, NnError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = spec.dims();
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Layer {
                weight: Array::from_raw(vec![fan_in, fan_out], data),
                bias: Array::zeros(&[fan_out]),
            }
        })
        .collect();
    Ok(MlpParams {
        spec: spec.clone(),
        layers,
    })
}

/// Node ids of an [`MlpParams`] placed into a graph as trainable leaves.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(NodeId, NodeId)>,
    hidden: HiddenActivation,
    output: OutputActivation,
    input_dim: usize,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Weight and bias arrays, layer by layer.
    pub fn arrays(&self) -> impl Iterator<Item = &Array> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays().map(Array::len).sum()
    }

    pub fn bind(&self, graph: &mut Graph) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                (
                    graph.parameter(l.weight.clone()),
                    graph.parameter(l.bias.clone()),
                )
            })
            .collect();
        BoundMlp {
            layers,
            hidden: self.spec.hidden_activation,
            output: self.spec.output_activation,
            input_dim: self.spec.input_dim,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        MlpParams::from_text(&fs::read_to_string(path)?)
    }

    /// Plain-text parameter dump; see README for the layout.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let hidden: Vec<String> = s.hidden_dims.iter().map(usize::to_string).collect();
        let mut out = String::from("ltn-mlp 1\n");
        out += &format!(
            "spec input={} hidden={} output={} hidden_act={} output_act={} seed={}\n",
            s.input_dim,
            hidden.join(","),
            s.output_dim,
            s.hidden_activation,
            s.output_activation,
            s.seed
        );
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, a) in [("weight", &layer.weight), ("bias", &layer.bias)] {
                let dims: Vec<String> = a.shape().iter().map(usize::to_string).collect();
                out += &format!("{name} {i} {}\n", dims.join(" "));
                let values: Vec<String> = a.data().iter().map(f64::to_string).collect();
                out += &values.join(" ");
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::Format(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("ltn-mlp 1") {
            return Err(bad("missing 'ltn-mlp 1' header"));
        }
        let spec_line = lines.next().ok_or_else(|| bad("missing spec line"))?;
        let mut fields = spec_line.split_whitespace();
        if fields.next() != Some("spec") {
            return Err(bad("expected spec line"));
        }
        let mut get = std::collections::BTreeMap::new();
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad(f))?;
            get.insert(k, v);
        }
        let field = |k: &str| {
            get.get(k)
                .copied()
                .ok_or_else(|| bad(&format!("missing {k}")))
        };
        let num = |k: &str| -> Result<usize, NnError> {
            field(k)?.parse().map_err(|_| bad(&format!("bad {k}")))
        };
        let hidden_dims = match field("hidden")? {
            "" => Vec::new(),
            h => h
                .split(',')
                .map(|d| d.parse().map_err(|_| bad("bad hidden dims")))
                .collect::<Result<_, _>>()?,
        };
        let spec = MlpSpec {
            input_dim: num("input")?,
            hidden_dims,
            output_dim: num("output")?,
            hidden_activation: field("hidden_act")?.parse()?,
            output_activation: field("output_act")?.parse()?,
            seed: field("seed")?.parse().map_err(|_| bad("bad seed"))?,
        };
        spec.validate()?;
        let mut read_array =
            |name: &str, index: usize, shape: Vec<usize>| -> Result<Array, NnError> {
                let header = lines.next().ok_or_else(|| bad("truncated file"))?;
                let mut h = header.split_whitespace();
                let expected_header = (Some(name), Some(index.to_string()));
                if (h.next(), h.next().map(str::to_string)) != expected_header {
                    return Err(bad(&format!("expected '{name} {index}', found '{header}'")));
                }
                let dims: Vec<usize> = h
                    .map(|d| d.parse().map_err(|_| bad("bad dims")))
                    .collect::<Result<_, _>>()?;
                if dims != shape {
                    return Err(bad(&format!(
                        "{name} {index} has shape {dims:?}, expected {shape:?}"
                    )));
                }
                let values = lines.next().ok_or_else(|| bad("truncated file"))?;
                let data = values
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| bad("bad value")))
                    .collect::<Result<Vec<f64>, _>>()?;
                Ok(Array::new(shape, data)?)
            };
        let dims = spec.dims();
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let weight = read_array("weight", i, vec![w[0], w[1]])?;
            let bias = read_array("bias", i, vec![w[1]])?;
            layers.push(Layer { weight, bias });
        }
        Ok(MlpParams { spec, layers })
    }
}

impl BoundMlp {
    /// Parameter leaves in the same order as [`MlpParams::arrays`].
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// `input` is `[n, input_dim]`; returns `[n, output_dim]`.
    pub fn forward(&self, graph: &mut Graph, input: NodeId) -> Result<NodeId, NnError> {
        let shape = graph.shape(input);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(NnError::WidthMismatch {
                expected: self.input_dim,
                found: shape.last().copied().unwrap_or(0),
            });
        }
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = graph.matmul(h, w)?;
            let z = graph.add(z, b)?;
            h = if i < last {
                match self.hidden {
                    HiddenActivation::Elu => graph.elu(z)?,
                    HiddenActivation::Relu => graph.relu(z)?,
                }
            } else {
                match self.output {
                    OutputActivation::Sigmoid => graph.sigmoid(z)?,
                    OutputActivation::Softmax => graph.softmax(z)?,
                    OutputActivation::Identity => z,
                }
            };
        }
        Ok(h)
    }
}

/// Evaluates the network on a `[n, input_dim]` batch outside any training graph.
pub fn mlp_forward(params: &MlpParams, batch: &Array) -> Result<Array, NnError> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let x = graph.constant(batch.clone());
    let y = bound.forward(&mut graph, x)?;
    Ok(graph.value(y).clone())
}

const PROB_FLOOR: f64 = 1e-12;

fn check_one_hot(onehot: &Array) -> Result<(), NnError> {
    let c = onehot.row_width();
    for (row, chunk) in onehot.data().chunks(c.max(1)).enumerate() {
        let ones = chunk.iter().filter(|&&v| v == 1.0).count();
        let zeros = chunk.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != c {
            return Err(NnError::NotOneHot { row });
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class, `probs` floored at 1e-12.
pub fn cross_entropy(probs: &Array, onehot: &Array) -> Result<f64, NnError> {
    if probs.shape() != onehot.shape() || probs.ndim() != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            left: probs.shape().to_vec(),
            right: onehot.shape().to_vec(),
        }
        .into());
    }
    check_one_hot(onehot)?;
    let c = probs.shape()[1];
    for (row, chunk) in probs.data().chunks(c).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(NnError::NotDistribution { row, sum });
        }
    }
    let n = probs.shape()[0];
    let total: f64 = probs
        .data()
        .iter()
        .zip(onehot.data())
        .filter(|(_, &t)| t == 1.0)
        .map(|(&p, _)| p.max(PROB_FLOOR).ln())
        .sum();
    Ok(-total / n as f64)
}

/// Graph form of [`cross_entropy`]; `onehot` is trusted here.
pub fn cross_entropy_node(
    graph: &mut Graph,
    probs: NodeId,
    onehot: NodeId,
) -> Result<NodeId, TensorError> {
    let n = graph.shape(probs).first().copied().unwrap_or(1).max(1);
    let p = graph.clamp(probs, PROB_FLOOR, 1.0)?;
    let logp = graph.log(p)?;
    let picked = graph.mul(logp, onehot)?;
    let total = graph.sum_all(picked)?;
    graph.affine(total, -1.0 / n as f64, 0.0)
}

#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub threshold: f64,
}

/// Per-epoch baseline statistics; epoch 0 is the untrained network.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierRecord {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_test: f64,
    pub acc_train: f64,
    pub acc_test: f64,
}

/// Mini-batch Adam on cross-entropy for a softmax classifier. Accuracy is
/// Hamming accuracy of the thresholded probabilities against the one-hot truth.
pub fn train_classifier(
    params: &mut MlpParams,
    train: (&Array, &Array),
    test: (&Array, &Array),
    cfg: &ClassifierConfig,
) -> Result<Vec<ClassifierRecord>, NnError> {
    if params.spec.output_activation != OutputActivation::Softmax {
        return Err(NnError::InvalidSpec(
            "baseline classifier needs a softmax output".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(NnError::InvalidSpec("batch size must be >= 1".into()));
    }
    check_one_hot(train.1)?;
    check_one_hot(test.1)?;
    let evaluate = |params: &MlpParams, epoch: usize| -> Result<ClassifierRecord, NnError> {
        let score = |(x, y): (&Array, &Array)| -> Result<(f64, f64), NnError> {
            let probs = mlp_forward(params, x)?;
            let loss = cross_entropy(&probs, y)?;
            let acc = metrics::hamming_accuracy(&probs, y, cfg.threshold)
                .map_err(|e| NnError::InvalidSpec(e.to_string()))?;
            Ok((loss, acc))
        };
        let (loss_train, acc_train) = score(train)?;
        let (loss_test, acc_test) = score(test)?;
        Ok(ClassifierRecord {
            epoch,
            loss_train,
            loss_test,
            acc_train,
            acc_test,
        })
    };

    let mut records = vec![evaluate(params, 0)?];
    let mut adam = AdamState::new(cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.0.rows()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.0.take_rows(chunk)?;
            let y = train.1.take_rows(chunk)?;
            let mut graph = Graph::new();
            let bound = params.bind(&mut graph);
            let xn = graph.constant(x);
            let yn = graph.constant(y);
            let probs = bound.forward(&mut graph, xn)?;
            let loss = cross_entropy_node(&mut graph, probs, yn)?;
            let grads = graph.backward(loss)?;
            let g: Vec<Array> = bound.nodes().map(|id| grads.get(id)).collect();
            let mut arrays: Vec<&mut Array> = params.arrays_mut().collect();
            adam.step(&mut arrays, &g)?;
        }
        records.push(evaluate(params, epoch)?);
    }
    Ok(records)
}
