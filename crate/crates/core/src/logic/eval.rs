use std::collections::BTreeMap;

use super::ops::{align, connective_node, exists_node, forall_node, similarity_node};
use super::{
    Bindings, BoundGrounding, Connective, Formula, FunctionGrounding, GridNode, Grounding,
    LogicError, Mode, PredicateGrounding, QuantifierConfig, Term, TruthGrid,
};
use crate::tensor::{Graph, NodeId};

/// A term value: shape `[extent per axis..., d]`.
#[derive(Clone, Debug)]
struct TermNode {
    axes: Vec<String>,
    node: NodeId,
}

/// Arguments broadcast over the union of their axes and flattened to
/// `[N, d_i]` each, `N` being the product of the union extents.
#[derive(Clone, Debug)]
struct Flattened {
    axes: Vec<String>,
    extents: Vec<usize>,
    parts: Vec<NodeId>,
}

/// Evaluates formulas into one graph built over a grounding and a set of
/// variable bindings. Identical atoms are computed once per evaluator.
pub struct Evaluator<'a> {
    graph: Graph,
    grounding: &'a Grounding,
    bound: BoundGrounding,
    bindings: &'a Bindings,
    cfg: QuantifierConfig,
    mode: Mode,
    var_nodes: BTreeMap<String, NodeId>,
    atoms: BTreeMap<String, GridNode>,
    /// Class-network outputs `[N, |C|]` keyed by predicate and arguments,
    /// shared by every label read from them.
    class_outputs: BTreeMap<String, (Flattened, NodeId)>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        grounding: &'a Grounding,
        bindings: &'a Bindings,
        cfg: QuantifierConfig,
        mode: Mode,
    ) -> Self {
        let mut graph = Graph::new();
        let bound = grounding.bind(&mut graph);
        Evaluator {
            graph,
            grounding,
            bound,
            bindings,
            cfg,
            mode,
            var_nodes: BTreeMap::new(),
            atoms: BTreeMap::new(),
            class_outputs: BTreeMap::new(),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Parameter leaves in [`Grounding::params_mut`] order.
    pub fn param_nodes(&self) -> &[NodeId] {
        self.bound.param_nodes()
    }

    pub fn truth(&self, g: &GridNode) -> TruthGrid {
        TruthGrid {
            axes: g.axes.clone(),
            values: self.graph.value(g.node).clone(),
        }
    }

    pub fn eval(&mut self, f: &Formula) -> Result<GridNode, LogicError> {
        match f {
            Formula::Pred(name, args) => {
                let key = format!("{}", f);
                if let Some(g) = self.atoms.get(&key) {
                    return Ok(g.clone());
                }
                let g = self.atom(name, args)?;
                self.atoms.insert(key, g.clone());
                Ok(g)
            }
            Formula::Not(a) => {
                let a = self.eval(a)?;
                connective_node(&mut self.graph, Connective::Not, &a, None)
            }
            Formula::And(a, b) => self.binary(Connective::And, a, b),
            Formula::Or(a, b) => self.binary(Connective::Or, a, b),
            Formula::Implies(a, b) => self.binary(Connective::Implies, a, b),
            Formula::Forall { vars, body, p } => {
                let p = self.cfg.forall_p(*p, self.mode);
                let body = self.eval(body)?;
                let over = self.quantified_axes(vars, &body)?;
                forall_node(&mut self.graph, &body, &over, p)
            }
            Formula::Exists { vars, body, p } => {
                let p = self.cfg.exists_p(*p, self.mode);
                let body = self.eval(body)?;
                let over = self.quantified_axes(vars, &body)?;
                exists_node(&mut self.graph, &body, &over, p)
            }
        }
    }

    fn binary(
        &mut self,
        kind: Connective,
        a: &Formula,
        b: &Formula,
    ) -> Result<GridNode, LogicError> {
        let a = self.eval(a)?;
        let b = self.eval(b)?;
        connective_node(&mut self.graph, kind, &a, Some(&b))
    }

    /// Axes of `vars` present in the body; a variable the body never uses
    /// quantifies nothing, and paired variables reduce their shared axis once.
    fn quantified_axes(&self, vars: &[String], body: &GridNode) -> Result<Vec<String>, LogicError> {
        let mut over: Vec<String> = Vec::new();
        for v in vars {
            self.check_bound(v)?;
            let axis = self.bindings.axis_of(v)?;
            if body.axes.iter().any(|a| a == axis) && !over.iter().any(|o| o == axis) {
                over.push(axis.to_string());
            }
        }
        Ok(over)
    }

    fn check_bound(&self, var: &str) -> Result<(), LogicError> {
        if self.bindings.batch(var)?.rows() == 0 {
            return Err(LogicError::EmptyBatch(var.to_string()));
        }
        Ok(())
    }

    fn term(&mut self, t: &Term) -> Result<TermNode, LogicError> {
        match t {
            Term::Var(v) => {
                self.check_bound(v)?;
                let axis = self.bindings.axis_of(v)?.to_string();
                let node = match self.var_nodes.get(v) {
                    Some(&n) => n,
                    None => {
                        let n = self.graph.constant(self.bindings.batch(v)?.clone());
                        self.var_nodes.insert(v.clone(), n);
                        n
                    }
                };
                Ok(TermNode {
                    axes: vec![axis],
                    node,
                })
            }
            Term::Const(c) => {
                let &id = self
                    .bound
                    .constants
                    .get(c)
                    .ok_or_else(|| LogicError::Unresolved {
                        kind: "constant",
                        name: c.clone(),
                    })?;
                let len = self.graph.value(id).len();
                let node = if self.graph.shape(id) == [len] {
                    id
                } else {
                    self.graph.reshape(id, &[len])?
                };
                Ok(TermNode {
                    axes: Vec::new(),
                    node,
                })
            }
            Term::Func(name, args) => {
                let flat = self.flatten(args)?;
                let out = match self.grounding.functions.get(name) {
                    Some(FunctionGrounding::Mlp(_)) => {
                        let input = self.graph.concat(&flat.parts)?;
                        let net = self.bound.functions[name].clone();
                        net.forward(&mut self.graph, input)?
                    }
                    Some(FunctionGrounding::Lambda(f)) => {
                        let f = f.clone();
                        let out = f(&mut self.graph, &flat.parts)?;
                        let n: usize = flat.extents.iter().product();
                        let shape = self.graph.shape(out).to_vec();
                        match shape.as_slice() {
                            [m] if *m == n => self.graph.reshape(out, &[n, 1])?,
                            [m, _] if *m == n => out,
                            _ => {
                                return Err(LogicError::Pairing(format!(
                                    "function '{name}' returned shape {shape:?} for {n} inputs"
                                )))
                            }
                        }
                    }
                    None => {
                        return Err(LogicError::Unresolved {
                            kind: "function",
                            name: name.clone(),
                        })
                    }
                };
                let d = self.graph.shape(out)[1];
                let mut shape = flat.extents.clone();
                shape.push(d);
                let node = self.graph.reshape(out, &shape)?;
                Ok(TermNode {
                    axes: flat.axes,
                    node,
                })
            }
        }
    }

    fn flatten(&mut self, args: &[Term]) -> Result<Flattened, LogicError> {
        let mut values = Vec::with_capacity(args.len());
        for a in args {
            values.push(self.term(a)?);
        }
        let mut axes: Vec<String> = Vec::new();
        let mut extents: Vec<usize> = Vec::new();
        for t in &values {
            for (k, name) in t.axes.iter().enumerate() {
                let e = self.graph.shape(t.node)[k];
                match axes.iter().position(|a| a == name) {
                    Some(i) if extents[i] != e => {
                        return Err(LogicError::AxisMismatch {
                            axis: name.clone(),
                            left: extents[i],
                            right: e,
                        })
                    }
                    Some(_) => {}
                    None => {
                        axes.push(name.clone());
                        extents.push(e);
                    }
                }
            }
        }
        let n: usize = extents.iter().product();
        let mut parts = Vec::with_capacity(values.len());
        for t in &values {
            let d = *self.graph.shape(t.node).last().unwrap_or(&1);
            let aligned = align(&mut self.graph, &t.axes, t.node, &axes, 1)?;
            let mut full = extents.clone();
            full.push(d);
            let b = self.graph.broadcast_to(aligned, &full)?;
            parts.push(self.graph.reshape(b, &[n, d])?);
        }
        Ok(Flattened {
            axes,
            extents,
            parts,
        })
    }

    fn atom(&mut self, name: &str, args: &[Term]) -> Result<GridNode, LogicError> {
        let grounding =
            self.grounding
                .predicates
                .get(name)
                .ok_or_else(|| LogicError::Unresolved {
                    kind: "predicate",
                    name: name.to_string(),
                })?;
        let (flat, out) = match grounding {
            PredicateGrounding::Mlp(_) => {
                let flat = self.flatten(args)?;
                let input = self.graph.concat(&flat.parts)?;
                let net = self.bound.predicates[name].clone();
                let y = net.forward(&mut self.graph, input)?;
                let out = self.graph.select(y, 0)?;
                (flat, out)
            }
            PredicateGrounding::Classes { classes, .. } => {
                let (label, rest) = match args.split_last() {
                    Some((Term::Const(label), rest)) if !rest.is_empty() => (label, rest),
                    Some((last, rest)) if !rest.is_empty() => {
                        return Err(LogicError::UnknownClass {
                            predicate: name.to_string(),
                            label: format!("{last:?}"),
                        })
                    }
                    _ => {
                        return Err(LogicError::Arity {
                            name: name.to_string(),
                            expected: 2,
                            found: args.len(),
                        })
                    }
                };
                let index = PredicateGrounding::class_index(classes, label).ok_or_else(|| {
                    LogicError::UnknownClass {
                        predicate: name.to_string(),
                        label: label.clone(),
                    }
                })?;
                let key = format!("{}", Formula::Pred(name.to_string(), rest.to_vec()));
                let (flat, y) = match self.class_outputs.get(&key) {
                    Some(cached) => cached.clone(),
                    None => {
                        let flat = self.flatten(rest)?;
                        let input = self.graph.concat(&flat.parts)?;
                        let net = self.bound.predicates[name].clone();
                        let y = net.forward(&mut self.graph, input)?;
                        self.class_outputs.insert(key, (flat.clone(), y));
                        (flat, y)
                    }
                };
                let out = self.graph.select(y, index)?;
                (flat, out)
            }
            PredicateGrounding::Lambda(f) => {
                let f = f.clone();
                let flat = self.flatten(args)?;
                let out = f(&mut self.graph, &flat.parts)?;
                (flat, out)
            }
            PredicateGrounding::Similarity(kind) => {
                let kind = *kind;
                if args.len() != 2 {
                    return Err(LogicError::Arity {
                        name: name.to_string(),
                        expected: 2,
                        found: args.len(),
                    });
                }
                let flat = self.flatten(args)?;
                let (a, b) = (flat.parts[0], flat.parts[1]);
                let (da, db) = (self.graph.shape(a)[1], self.graph.shape(b)[1]);
                if da != db {
                    return Err(LogicError::WidthMismatch {
                        left: da,
                        right: db,
                    });
                }
                let diff = self.graph.sub(a, b)?;
                let out = similarity_node(&mut self.graph, kind, diff)?;
                (flat, out)
            }
        };
        let n: usize = flat.extents.iter().product();
        if self.graph.value(out).len() != n {
            return Err(LogicError::Pairing(format!(
                "predicate '{name}' returned shape {:?} for {n} inputs",
                self.graph.shape(out)
            )));
        }
        if let Some(&v) = self
            .graph
            .value(out)
            .data()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(LogicError::PredicateRange {
                name: name.to_string(),
                value: v,
            });
        }
        let node = if self.graph.shape(out) == flat.extents.as_slice() {
            out
        } else {
            self.graph.reshape(out, &flat.extents)?
        };
        Ok(GridNode {
            axes: flat.axes,
            node,
        })
    }
}

/// Evaluates `f` once, detached from any training. Free variables of `f`
/// remain as axes of the result.
pub fn eval_formula(
    f: &Formula,
    grounding: &Grounding,
    bindings: &Bindings,
    cfg: QuantifierConfig,
    mode: Mode,
) -> Result<TruthGrid, LogicError> {
    f.validate()?;
    cfg.validate()?;
    let mut ev = Evaluator::new(grounding, bindings, cfg, mode);
    let g = ev.eval(f)?;
    Ok(ev.truth(&g))
}
