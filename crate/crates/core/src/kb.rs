//! Knowledge bases: axiom satisfiability, training by maximising it, and
//! querying trained groundings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::logic::{
    forall_node, Bindings, Evaluator, Formula, FunctionGrounding, GridNode, Grounding, LogicError,
    Mode, PredicateGrounding, QuantifierConfig,
};
use crate::metrics::{self, MetricsError, MetricsRecord};
use crate::nn::{mlp_forward, NnError};
use crate::tensor::{AdamConfig, AdamState, Array, Graph, NodeId, TensorError};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base has no axioms")]
    NoAxioms,
    #[error("axiom '{name}': {source}")]
    Axiom {
        name: String,
        #[source]
        source: LogicError,
    },
    #[error("formula '{name}' is not closed: free variables {vars:?}")]
    NotClosed { name: String, vars: Vec<String> },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How dataset rows are bound to axiom variables.
#[derive(Clone, Debug, PartialEq)]
pub enum BindingScheme {
    /// `all` binds every row; `<class_prefix><class>` binds the rows whose
    /// target marks `class`.
    Labeled { all: String, class_prefix: String },
    /// `input` binds the features and `target` the targets, row-paired.
    Paired { input: String, target: String },
}

impl Default for BindingScheme {
    fn default() -> Self {
        BindingScheme::Labeled {
            all: "x".into(),
            class_prefix: "x_".into(),
        }
    }
}

/// Encoded examples: `features [n, d]`, `targets [n, k]`. For labelled data
/// `classes` names the `k` target columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array,
    pub targets: Array,
    pub classes: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array, targets: Array, classes: Vec<String>) -> Result<Self, KbError> {
        let targets = if targets.ndim() == 1 {
            let n = targets.len();
            targets.reshaped(vec![n, 1])?
        } else {
            targets
        };
        if features.ndim() != 2 || targets.ndim() != 2 {
            return Err(KbError::Data("features and targets must be 2-D".into()));
        }
        if features.rows() != targets.rows() {
            return Err(KbError::Data(format!(
                "{} feature rows but {} target rows",
                features.rows(),
                targets.rows()
            )));
        }
        if !classes.is_empty() && classes.len() != targets.row_width() {
            return Err(KbError::Data(format!(
                "{} class names for {} target columns",
                classes.len(),
                targets.row_width()
            )));
        }
        Ok(Dataset {
            features,
            targets,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn take(&self, indices: &[usize]) -> Result<Dataset, KbError> {
        Ok(Dataset {
            features: self.features.take_rows(indices)?,
            targets: self.targets.take_rows(indices)?,
            classes: self.classes.clone(),
        })
    }
}

/// What accuracy means for a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// Hamming accuracy of thresholded class outputs of `predicate`.
    MultiLabel { predicate: String, threshold: f64 },
    /// Fraction of rows whose highest class output is the true class.
    SingleLabel { predicate: String },
    /// `1 − RMSE` of `function` against the targets, clamped to `[0,1]`.
    Regression { function: String },
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub query_formulas: Vec<(String, Formula)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            query_formulas: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    pub axioms: Vec<(String, Formula)>,
    pub grounding: Grounding,
    pub quantifier_config: QuantifierConfig,
    pub axiom_aggregation_p: f64,
    pub scheme: BindingScheme,
}

/// Every variable a quantifier in `f` binds.
fn quantified_vars(f: &Formula, out: &mut Vec<String>) {
    match f {
        Formula::Pred(..) => {}
        Formula::Not(a) => quantified_vars(a, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            quantified_vars(a, out);
            quantified_vars(b, out);
        }
        Formula::Forall { vars, body, .. } | Formula::Exists { vars, body, .. } => {
            for v in vars {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            quantified_vars(body, out);
        }
    }
}

/// Whether every variable of `f` has at least one individual in `bindings`.
fn is_populated(f: &Formula, bindings: &Bindings) -> bool {
    let mut vars = f.free_vars();
    quantified_vars(f, &mut vars);
    vars.iter()
        .all(|v| bindings.batch(v).is_ok_and(|b| b.rows() > 0))
}

/// Combines scalar axiom truths with the `∀` aggregator.
fn aggregate_axioms(graph: &mut Graph, truths: &[NodeId], p: f64) -> Result<NodeId, LogicError> {
    let mut parts = Vec::with_capacity(truths.len());
    for &t in truths {
        parts.push(graph.reshape(t, &[1])?);
    }
    let stacked = graph.concat(&parts)?;
    let g = GridNode {
        axes: vec!["axiom".into()],
        node: stacked,
    };
    Ok(forall_node(graph, &g, &["axiom".into()], p)?.node)
}

fn closed_scalar(ev: &Evaluator<'_>, name: &str, g: &GridNode) -> Result<NodeId, KbError> {
    if !g.axes.is_empty() {
        return Err(KbError::NotClosed {
            name: name.to_string(),
            vars: g.axes.clone(),
        });
    }
    debug_assert!(ev.graph().value(g.node).item().is_some());
    Ok(g.node)
}

/// Satisfiability of `axioms` under `bindings`: each axiom's truth, then
/// the `∀` aggregator at exponent `p` over them. Every axiom variable must
/// be bound to a non-empty batch.
pub fn kb_satisfiability(
    axioms: &[(String, Formula)],
    grounding: &Grounding,
    bindings: &Bindings,
    cfg: QuantifierConfig,
    p: f64,
) -> Result<f64, KbError> {
    if axioms.is_empty() {
        return Err(KbError::NoAxioms);
    }
    let mut ev = Evaluator::new(grounding, bindings, cfg, Mode::Train);
    let mut truths = Vec::with_capacity(axioms.len());
    for (name, f) in axioms {
        let g = ev.eval(f).map_err(|source| KbError::Axiom {
            name: name.clone(),
            source,
        })?;
        truths.push(closed_scalar(&ev, name, &g)?);
    }
    let sat = aggregate_axioms(ev.graph_mut(), &truths, p)?;
    Ok(ev.graph().value(sat).data()[0])
}

/// Truth of a closed formula at query-mode exponents. Never changes `grounding`.
pub fn query(
    grounding: &Grounding,
    f: &Formula,
    bindings: &Bindings,
    cfg: QuantifierConfig,
) -> Result<f64, KbError> {
    f.validate()?;
    let mut ev = Evaluator::new(grounding, bindings, cfg, Mode::Query);
    let g = ev.eval(f)?;
    let node = closed_scalar(&ev, &f.to_string(), &g)?;
    Ok(ev.graph().value(node).data()[0])
}

fn is_divergence(e: &TensorError) -> bool {
    matches!(
        e,
        TensorError::NonFinite { .. } | TensorError::NonFiniteGradient { .. }
    )
}

impl KnowledgeBase {
    pub fn new(
        axioms: Vec<(String, Formula)>,
        grounding: Grounding,
        scheme: BindingScheme,
    ) -> Result<Self, KbError> {
        if axioms.is_empty() {
            return Err(KbError::NoAxioms);
        }
        for (name, f) in &axioms {
            f.validate().map_err(|source| KbError::Axiom {
                name: name.clone(),
                source,
            })?;
            let free = f.free_vars();
            if !free.is_empty() {
                return Err(KbError::NotClosed {
                    name: name.clone(),
                    vars: free,
                });
            }
        }
        Ok(KnowledgeBase {
            axioms,
            grounding,
            quantifier_config: QuantifierConfig::default(),
            axiom_aggregation_p: 2.0,
            scheme,
        })
    }

    pub fn bindings(&self, data: &Dataset) -> Result<Bindings, KbError> {
        let mut b = Bindings::new();
        match &self.scheme {
            BindingScheme::Labeled { all, class_prefix } => {
                b.bind(all, data.features.clone())?;
                let k = data.targets.row_width();
                for (c, class) in data.classes.iter().enumerate() {
                    let rows: Vec<usize> = (0..data.len())
                        .filter(|&i| data.targets.data()[i * k + c] >= 0.5)
                        .collect();
                    b.bind(
                        &format!("{class_prefix}{class}"),
                        data.features.take_rows(&rows)?,
                    )?;
                }
            }
            BindingScheme::Paired { input, target } => {
                b.bind(input, data.features.clone())?;
                b.bind(target, data.targets.clone())?;
                b.pair(&[input.as_str(), target.as_str()])?;
            }
        }
        Ok(b)
    }

    /// Strict satisfiability over `data`; see [`kb_satisfiability`].
    pub fn satisfiability(&self, data: &Dataset) -> Result<f64, KbError> {
        let b = self.bindings(data)?;
        kb_satisfiability(
            &self.axioms,
            &self.grounding,
            &b,
            self.quantifier_config,
            self.axiom_aggregation_p,
        )
    }

    /// Train-mode truth of each axiom over `data`.
    pub fn axiom_truths(&self, data: &Dataset) -> Result<Vec<(String, f64)>, KbError> {
        let b = self.bindings(data)?;
        let mut ev = Evaluator::new(&self.grounding, &b, self.quantifier_config, Mode::Train);
        let mut out = Vec::with_capacity(self.axioms.len());
        for (name, f) in &self.axioms {
            let g = ev.eval(f).map_err(|source| KbError::Axiom {
                name: name.clone(),
                source,
            })?;
            let node = closed_scalar(&ev, name, &g)?;
            out.push((name.clone(), ev.graph().value(node).data()[0]));
        }
        Ok(out)
    }

    pub fn query(&self, f: &Formula, data: &Dataset) -> Result<f64, KbError> {
        let b = self.bindings(data)?;
        query(&self.grounding, f, &b, self.quantifier_config)
    }

    /// Satisfiability over the axioms whose variables are all populated in
    /// `bindings`, with the graph it was computed in. `None` when no axiom
    /// applies.
    fn populated_sat<'a>(
        &'a self,
        bindings: &'a Bindings,
    ) -> Result<Option<(Evaluator<'a>, NodeId)>, KbError> {
        let mut ev = Evaluator::new(
            &self.grounding,
            bindings,
            self.quantifier_config,
            Mode::Train,
        );
        let mut truths = Vec::new();
        for (name, f) in &self.axioms {
            if !is_populated(f, bindings) {
                continue;
            }
            let g = ev.eval(f).map_err(|source| match source {
                LogicError::Tensor(t) => KbError::Tensor(t),
                source => KbError::Axiom {
                    name: name.clone(),
                    source,
                },
            })?;
            truths.push(closed_scalar(&ev, name, &g)?);
        }
        if truths.is_empty() {
            return Ok(None);
        }
        let sat = aggregate_axioms(ev.graph_mut(), &truths, self.axiom_aggregation_p)?;
        Ok(Some((ev, sat)))
    }

    /// Class outputs `[n, |classes|]` of the task predicate, columns in the
    /// order of `classes`.
    pub fn predict_classes(
        &self,
        predicate: &str,
        features: &Array,
        classes: &[String],
    ) -> Result<Array, KbError> {
        let Some(PredicateGrounding::Classes { net, classes: own }) =
            self.grounding.predicates.get(predicate)
        else {
            return Err(LogicError::Unresolved {
                kind: "class predicate",
                name: predicate.to_string(),
            }
            .into());
        };
        let out = mlp_forward(net, features)?;
        let mut cols = Vec::with_capacity(classes.len());
        for c in classes {
            let k = PredicateGrounding::class_index(own, c).ok_or_else(|| {
                LogicError::UnknownClass {
                    predicate: predicate.to_string(),
                    label: c.clone(),
                }
            })?;
            cols.push(k);
        }
        let w = out.row_width();
        let data = (0..out.rows())
            .flat_map(|i| cols.iter().map(move |&k| (i, k)))
            .map(|(i, k)| out.data()[i * w + k])
            .collect();
        Ok(Array::new(vec![out.rows(), cols.len()], data)?)
    }

    /// Outputs `[n, d]` of a network-grounded function.
    pub fn predict_function(&self, function: &str, features: &Array) -> Result<Array, KbError> {
        match self.grounding.functions.get(function) {
            Some(FunctionGrounding::Mlp(net)) => Ok(mlp_forward(net, features)?),
            _ => Err(LogicError::Unresolved {
                kind: "network function",
                name: function.to_string(),
            }
            .into()),
        }
    }

    pub fn accuracy(&self, task: &Task, data: &Dataset) -> Result<f64, KbError> {
        Ok(match task {
            Task::MultiLabel {
                predicate,
                threshold,
            } => {
                let pred = self.predict_classes(predicate, &data.features, &data.classes)?;
                metrics::hamming_accuracy(&pred, &data.targets, *threshold)?
            }
            Task::SingleLabel { predicate } => {
                let pred = self.predict_classes(predicate, &data.features, &data.classes)?;
                metrics::argmax_accuracy(&pred, &data.targets)?
            }
            Task::Regression { function } => {
                let pred = self.predict_function(function, &data.features)?;
                let e = metrics::rmse(pred.data(), data.targets.data())?;
                (1.0 - e).clamp(0.0, 1.0)
            }
        })
    }

    fn record(
        &self,
        epoch: usize,
        train: &Dataset,
        test: &Dataset,
        task: &Task,
        queries: &[(String, Formula)],
    ) -> Result<MetricsRecord, KbError> {
        let sat = |data: &Dataset| -> Result<f64, KbError> {
            let b = self.bindings(data)?;
            match self.populated_sat(&b) {
                Ok(Some((ev, node))) => Ok(ev.graph().value(node).data()[0]),
                Ok(None) => Err(KbError::Data(
                    "no axiom has all of its variables populated".into(),
                )),
                Err(KbError::Tensor(e)) if is_divergence(&e) => Err(KbError::Divergence { epoch }),
                Err(e) => Err(e),
            }
        };
        let train_bindings = self.bindings(train)?;
        let mut values = Vec::with_capacity(queries.len());
        for (name, f) in queries {
            let v = query(&self.grounding, f, &train_bindings, self.quantifier_config)?;
            values.push((name.clone(), v));
        }
        Ok(MetricsRecord {
            epoch,
            sat_train: sat(train)?,
            sat_test: sat(test)?,
            acc_train: self.accuracy(task, train)?,
            acc_test: self.accuracy(task, test)?,
            queries: values,
        })
    }

    /// Maximises satisfiability with Adam over shuffled mini-batches,
    /// minimising `1 − sat`. Returns one record per epoch, epoch 0 being
    /// the untrained grounding. Axioms whose variables have no individuals
    /// in a mini-batch are left out of that step.
    pub fn train(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        cfg: &TrainConfig,
        task: &Task,
    ) -> Result<Vec<MetricsRecord>, KbError> {
        if cfg.batch_size == 0 {
            return Err(KbError::Config("batch size must be >= 1".into()));
        }
        if train.is_empty() || test.is_empty() {
            return Err(KbError::Data(
                "training and test data must be non-empty".into(),
            ));
        }
        for (name, f) in &cfg.query_formulas {
            f.validate().map_err(|source| KbError::Axiom {
                name: name.clone(),
                source,
            })?;
        }
        let adam_cfg = AdamConfig::with_learning_rate(cfg.learning_rate);
        adam_cfg
            .validate()
            .map_err(|e| KbError::Config(e.to_string()))?;
        let mut adam = AdamState::new(adam_cfg)?;
        let mut records = vec![self.record(0, train, test, task, &cfg.query_formulas)?];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = train.take(chunk)?;
                let bindings = self.bindings(&batch)?;
                let grads = {
                    let Some((mut ev, sat)) = (match self.populated_sat(&bindings) {
                        Err(KbError::Tensor(e)) if is_divergence(&e) => {
                            return Err(KbError::Divergence { epoch })
                        }
                        r => r?,
                    }) else {
                        continue;
                    };
                    let params = ev.param_nodes().to_vec();
                    let graph = ev.graph_mut();
                    let loss = graph.one_minus(sat)?;
                    let grads = match graph.backward(loss) {
                        Ok(g) => g,
                        Err(e) if is_divergence(&e) => return Err(KbError::Divergence { epoch }),
                        Err(e) => return Err(e.into()),
                    };
                    params.iter().map(|&id| grads.get(id)).collect::<Vec<_>>()
                };
                let mut params = self.grounding.params_mut();
                adam.step(&mut params, &grads)?;
            }
            let r = self.record(epoch, train, test, task, &cfg.query_formulas)?;
            if !r.sat_train.is_finite() || !r.sat_test.is_finite() {
                return Err(KbError::Divergence { epoch });
            }
            records.push(r);
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::logic::Term;
    use crate::nn::{mlp_init, MlpSpec};
    use crate::parser::parse_formula;

    fn const_pred(v: f64) -> PredicateGrounding {
        PredicateGrounding::Lambda(Arc::new(move |g: &mut Graph, xs: &[NodeId]| {
            let s = g.select(xs[0], 0)?;
            g.affine(s, 0.0, v)
        }))
    }

    fn axioms(truths: &[f64]) -> (Vec<(String, Formula)>, Grounding, Bindings) {
        let mut g = Grounding::new();
        let mut ax = Vec::new();
        for (i, &t) in truths.iter().enumerate() {
            let name = format!("T{i}");
            g = g.with_predicate(&name, const_pred(t));
            ax.push((
                format!("A{i}"),
                Formula::forall(&["x"], Formula::pred(&name, vec![Term::var("x")])),
            ));
        }
        let b = Bindings::new()
            .with("x", Array::new(vec![3, 1], vec![0.0, 1.0, 2.0]).unwrap())
            .unwrap();
        (ax, g, b)
    }

    #[test]
    fn satisfiability_reference_values() {
        let cfg = QuantifierConfig::default();
        let (ax, g, b) = axioms(&[0.3]);
        assert!((kb_satisfiability(&ax, &g, &b, cfg, 2.0).unwrap() - 0.3).abs() < 1e-12);
        let (ax, g, b) = axioms(&[1.0, 0.5]);
        let s = kb_satisfiability(&ax, &g, &b, cfg, 2.0).unwrap();
        assert!((s - (1.0 - 0.125f64.sqrt())).abs() < 1e-6);
        assert!((s - 0.64645).abs() < 1e-5);
        let (ax, g, b) = axioms(&[1.0, 1.0]);
        assert!((kb_satisfiability(&ax, &g, &b, cfg, 2.0).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(
            kb_satisfiability(&[], &g, &b, cfg, 2.0),
            Err(KbError::NoAxioms)
        ));
    }

    #[test]
    fn unbound_and_open_axioms_are_rejected() {
        let (_, g, b) = axioms(&[0.5]);
        let cfg = QuantifierConfig::default();
        let unbound = vec![("u".to_string(), parse_formula("forall z: T0(z)").unwrap())];
        assert!(matches!(
            kb_satisfiability(&unbound, &g, &b, cfg, 2.0),
            Err(KbError::Axiom { .. })
        ));
        let open = vec![("o".to_string(), Formula::pred("T0", vec![Term::var("x")]))];
        assert!(matches!(
            kb_satisfiability(&open, &g, &b, cfg, 2.0),
            Err(KbError::NotClosed { .. })
        ));
    }

    fn toy_data(n: usize) -> Dataset {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let a = (i % 2) as f64;
            xs.extend([a, 1.0 - a]);
            ys.extend([a, 1.0 - a]);
        }
        Dataset::new(
            Array::new(vec![n, 2], xs).unwrap(),
            Array::new(vec![n, 2], ys).unwrap(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn toy_kb() -> KnowledgeBase {
        let net = mlp_init(&MlpSpec {
            hidden_dims: vec![8],
            ..MlpSpec::predicate(2, 2, 3)
        })
        .unwrap();
        let g = Grounding::new().with_predicate(
            "P",
            PredicateGrounding::Classes {
                net,
                classes: vec!["a".into(), "b".into()],
            },
        );
        let ax = [
            "forall x_a: P(x_a, a)",
            "forall x_b: P(x_b, b)",
            "forall x: ~(P(x, a) & P(x, b))",
        ]
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("A{}", i + 1), parse_formula(s).unwrap()))
        .collect();
        KnowledgeBase::new(ax, g, BindingScheme::default()).unwrap()
    }

    #[test]
    fn training_raises_satisfiability_deterministically() {
        let data = toy_data(40);
        let task = Task::MultiLabel {
            predicate: "P".into(),
            threshold: 0.5,
        };
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 5,
            query_formulas: vec![(
                "phi".into(),
                parse_formula("forall x: P(x, a) -> ~P(x, b)").unwrap(),
            )],
        };
        let mut kb = toy_kb();
        let before = kb.grounding.fingerprint();
        let records = kb.train(&data, &data, &cfg, &task).unwrap();
        assert_eq!(records.len(), 16);
        assert!(records[0].sat_train > 0.0 && records[0].sat_train < 1.0);
        assert!(records[15].sat_train > records[0].sat_train + 0.1);
        assert_eq!(records[15].acc_train, 1.0);
        assert_ne!(kb.grounding.fingerprint(), before);

        let mut again = toy_kb();
        assert_eq!(again.train(&data, &data, &cfg, &task).unwrap(), records);
    }

    #[test]
    fn zero_epochs_and_queries_leave_grounding_unchanged() {
        let data = toy_data(10);
        let task = Task::MultiLabel {
            predicate: "P".into(),
            threshold: 0.5,
        };
        let mut kb = toy_kb();
        let before = kb.grounding.fingerprint();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let records = kb.train(&data, &data, &cfg, &task).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].epoch, 0);
        let axiom = kb.axioms[2].1.clone();
        let q = kb.query(&axiom, &data).unwrap();
        assert!((0.0..=1.0).contains(&q));
        assert_eq!(kb.grounding.fingerprint(), before);
        let sat = kb.satisfiability(&data).unwrap();
        assert!(sat > 0.0 && sat < 1.0);
    }

    #[test]
    fn labeled_bindings_select_class_rows() {
        let kb = toy_kb();
        let b = kb.bindings(&toy_data(5)).unwrap();
        assert_eq!(b.batch("x").unwrap().rows(), 5);
        assert_eq!(b.batch("x_a").unwrap().rows(), 2);
        assert_eq!(b.batch("x_b").unwrap().rows(), 3);
    }
}
