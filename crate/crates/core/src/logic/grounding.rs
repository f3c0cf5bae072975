use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{LogicError, SimilarityKind};
use crate::nn::{BoundMlp, MlpParams};
use crate::tensor::{Array, Graph, NodeId, TensorError};

/// Differentiable closure: receives one `[N, d_i]` node per tensor argument
/// and returns an `[N]` node (predicates) or `[N, d]` node (functions).
pub type LambdaFn = Arc<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId, TensorError> + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub value: Array,
    pub trainable: bool,
}

#[derive(Clone)]
pub enum PredicateGrounding {
    /// Single sigmoid output over the concatenated arguments.
    Mlp(MlpParams),
    /// One network with a sigmoid output per class; `P(x, c)` reads output `c`.
    Classes {
        net: MlpParams,
        classes: Vec<String>,
    },
    Lambda(LambdaFn),
    Similarity(SimilarityKind),
}

impl fmt::Debug for PredicateGrounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateGrounding::Mlp(m) => write!(f, "Mlp({:?})", m.spec),
            PredicateGrounding::Classes { classes, .. } => write!(f, "Classes({classes:?})"),
            PredicateGrounding::Lambda(_) => f.write_str("Lambda"),
            PredicateGrounding::Similarity(k) => write!(f, "Similarity({k:?})"),
        }
    }
}

impl PredicateGrounding {
    /// Index of `label` among the class outputs; exact match first, then
    /// ASCII case-insensitive.
    pub fn class_index(classes: &[String], label: &str) -> Option<usize> {
        classes
            .iter()
            .position(|c| c == label)
            .or_else(|| classes.iter().position(|c| c.eq_ignore_ascii_case(label)))
    }
}

#[derive(Clone)]
pub enum FunctionGrounding {
    Mlp(MlpParams),
    Lambda(LambdaFn),
}

impl fmt::Debug for FunctionGrounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionGrounding::Mlp(m) => write!(f, "Mlp({:?})", m.spec),
            FunctionGrounding::Lambda(_) => f.write_str("Lambda"),
        }
    }
}

/// Symbol groundings: constants, predicates and functions.
///
/// Variables are supplied separately per batch through [`Bindings`].
#[derive(Clone, Debug, Default)]
pub struct Grounding {
    pub constants: BTreeMap<String, Constant>,
    pub predicates: BTreeMap<String, PredicateGrounding>,
    pub functions: BTreeMap<String, FunctionGrounding>,
}

/// A [`Grounding`] placed into a graph; trainable arrays become parameter leaves.
#[derive(Clone, Debug, Default)]
pub struct BoundGrounding {
    pub constants: BTreeMap<String, NodeId>,
    pub predicates: BTreeMap<String, BoundMlp>,
    pub functions: BTreeMap<String, BoundMlp>,
    params: Vec<NodeId>,
}

impl BoundGrounding {
    /// Parameter leaves in [`Grounding::params_mut`] order.
    pub fn param_nodes(&self) -> &[NodeId] {
        &self.params
    }
}

impl Grounding {
    pub fn new() -> Self {
        Grounding::default()
    }

    pub fn with_constant(mut self, name: &str, value: Array, trainable: bool) -> Self {
        self.constants
            .insert(name.to_string(), Constant { value, trainable });
        self
    }

    pub fn with_predicate(mut self, name: &str, p: PredicateGrounding) -> Self {
        self.predicates.insert(name.to_string(), p);
        self
    }

    pub fn with_function(mut self, name: &str, f: FunctionGrounding) -> Self {
        self.functions.insert(name.to_string(), f);
        self
    }

    /// Every trainable array: trainable constants, then predicate networks,
    /// then function networks, each group in name order.
    pub fn params_mut(&mut self) -> Vec<&mut Array> {
        let mut out: Vec<&mut Array> = self
            .constants
            .values_mut()
            .filter(|c| c.trainable)
            .map(|c| &mut c.value)
            .collect();
        for p in self.predicates.values_mut() {
            match p {
                PredicateGrounding::Mlp(net) | PredicateGrounding::Classes { net, .. } => {
                    out.extend(net.arrays_mut())
                }
                PredicateGrounding::Lambda(_) | PredicateGrounding::Similarity(_) => {}
            }
        }
        for f in self.functions.values_mut() {
            if let FunctionGrounding::Mlp(net) = f {
                out.extend(net.arrays_mut());
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Array> {
        let mut out: Vec<&Array> = self
            .constants
            .values()
            .filter(|c| c.trainable)
            .map(|c| &c.value)
            .collect();
        for p in self.predicates.values() {
            if let PredicateGrounding::Mlp(net) | PredicateGrounding::Classes { net, .. } = p {
                out.extend(net.arrays());
            }
        }
        for f in self.functions.values() {
            if let FunctionGrounding::Mlp(net) = f {
                out.extend(net.arrays());
            }
        }
        out
    }

    /// FNV-1a over the bit patterns of every trainable value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for a in self.params() {
            for v in a.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn bind(&self, graph: &mut Graph) -> BoundGrounding {
        let mut bound = BoundGrounding::default();
        for (name, c) in &self.constants {
            let id = if c.trainable {
                let id = graph.parameter(c.value.clone());
                bound.params.push(id);
                id
            } else {
                graph.constant(c.value.clone())
            };
            bound.constants.insert(name.clone(), id);
        }
        for (name, p) in &self.predicates {
            if let PredicateGrounding::Mlp(net) | PredicateGrounding::Classes { net, .. } = p {
                let b = net.bind(graph);
                bound.params.extend(b.nodes());
                bound.predicates.insert(name.clone(), b);
            }
        }
        for (name, f) in &self.functions {
            if let FunctionGrounding::Mlp(net) = f {
                let b = net.bind(graph);
                bound.params.extend(b.nodes());
                bound.functions.insert(name.clone(), b);
            }
        }
        bound
    }
}

/// Data bound to variables for one evaluation: each variable holds a batch
/// `[n, d]` of individuals. Paired variables share one axis, so their
/// individuals are matched row by row instead of crossed.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: BTreeMap<String, Array>,
    axis: BTreeMap<String, String>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    /// Binds `name` to a batch; 1-D data is treated as `[n, 1]`.
    pub fn bind(&mut self, name: &str, batch: Array) -> Result<&mut Self, LogicError> {
        let batch = match batch.ndim() {
            1 => {
                let n = batch.len();
                batch.reshaped(vec![n, 1])?
            }
            2 => batch,
            _ => {
                return Err(LogicError::Tensor(TensorError::Rank {
                    op: "bind",
                    expected: 2,
                    shape: batch.shape().to_vec(),
                }))
            }
        };
        self.vars.insert(name.to_string(), batch);
        self.axis.insert(name.to_string(), name.to_string());
        Ok(self)
    }

    pub fn with(mut self, name: &str, batch: Array) -> Result<Self, LogicError> {
        self.bind(name, batch)?;
        Ok(self)
    }

    /// Declares `vars` as one pairing group sharing the axis of the first.
    pub fn pair(&mut self, vars: &[&str]) -> Result<&mut Self, LogicError> {
        let Some(first) = vars.first() else {
            return Ok(self);
        };
        let n = self.batch(first)?.rows();
        for v in vars {
            let m = self.batch(v)?.rows();
            if m != n {
                return Err(LogicError::Pairing(format!(
                    "'{first}' has {n} individuals but '{v}' has {m}"
                )));
            }
        }
        for v in vars {
            self.axis.insert(v.to_string(), first.to_string());
        }
        Ok(self)
    }

    pub fn batch(&self, var: &str) -> Result<&Array, LogicError> {
        self.vars
            .get(var)
            .ok_or_else(|| LogicError::UnboundVariable(var.to_string()))
    }

    pub fn contains(&self, var: &str) -> bool {
        self.vars.contains_key(var)
    }

    pub fn axis_of(&self, var: &str) -> Result<&str, LogicError> {
        self.axis
            .get(var)
            .map(String::as_str)
            .ok_or_else(|| LogicError::UnboundVariable(var.to_string()))
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }
}
