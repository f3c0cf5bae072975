//! Real Logic: formulas over groundings, fuzzy connectives, p-mean
//! quantifiers and distance-based similarity predicates.
//!
//! Truth values are arrays in `[0,1]` with one axis per free variable
//! ([`TruthGrid`]). Connectives use the product family (`a·b`,
//! `a+b−ab`, `1−a+ab`, `1−a`); `∀` is the p-mean-error
//! `1 − (mean (1−aᵢ)^p)^(1/p)` and `∃` the p-mean `(mean aᵢ^p)^(1/p)`.

mod eval;
mod grounding;
mod ops;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::nn::NnError;
use crate::tensor::TensorError;

pub use eval::{eval_formula, Evaluator};
pub use grounding::{
    Bindings, BoundGrounding, Constant, FunctionGrounding, Grounding, LambdaFn, PredicateGrounding,
};
pub use ops::{
    aggregate_exists, aggregate_forall, apply_connective, connective_node, exists_node,
    forall_node, similarity_node, similarity_predicate, Connective, GridNode, SimilarityKind,
    TruthGrid,
};

#[derive(Debug, Error)]
pub enum LogicError {
    #[error("unresolved {kind} '{name}'")]
    Unresolved { kind: &'static str, name: String },
    #[error("axis '{axis}' has extent {left} on one side and {right} on the other")]
    AxisMismatch {
        axis: String,
        left: usize,
        right: usize,
    },
    #[error("unknown axis '{0}'")]
    UnknownAxis(String),
    #[error("predicate '{name}' produced {value}, outside [0,1]")]
    PredicateRange { name: String, value: f64 },
    #[error("quantifier exponent p={0} must be >= 1")]
    InvalidExponent(f64),
    #[error("variable '{0}' is neither quantified nor bound to data")]
    UnboundVariable(String),
    #[error("variable '{0}' is bound to an empty batch")]
    EmptyBatch(String),
    #[error("variable '{0}' is bound twice on one path")]
    DoubleBinding(String),
    #[error("'{name}' expects {expected} arguments, got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("predicate '{predicate}' has no class '{label}'")]
    UnknownClass { predicate: String, label: String },
    #[error("pairing: {0}")]
    Pairing(String),
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(String),
    Const(String),
    Func(String, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(name.to_string())
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Const(_) => {}
            Term::Func(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Pred(String, Vec<Term>),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// `p: None` defers to [`QuantifierConfig`].
    Forall {
        vars: Vec<String>,
        body: Box<Formula>,
        p: Option<f64>,
    },
    Exists {
        vars: Vec<String>,
        body: Box<Formula>,
        p: Option<f64>,
    },
}

impl Formula {
    pub fn pred(name: &str, args: Vec<Term>) -> Formula {
        Formula::Pred(name.to_string(), args)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(vars: &[&str], body: Formula) -> Formula {
        Formula::Forall {
            vars: vars.iter().map(|v| v.to_string()).collect(),
            body: Box::new(body),
            p: None,
        }
    }

    pub fn exists(vars: &[&str], body: Formula) -> Formula {
        Formula::Exists {
            vars: vars.iter().map(|v| v.to_string()).collect(),
            body: Box::new(body),
            p: None,
        }
    }

    /// Variables occurring outside any binding quantifier, in order of first use.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.free_into(&mut Vec::new(), &mut out);
        out
    }

    fn free_into(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        match self {
            Formula::Pred(_, args) => {
                let mut vars = Vec::new();
                args.iter().for_each(|a| a.collect_vars(&mut vars));
                for v in vars {
                    if !bound.iter().any(|b| b == v) && !out.iter().any(|o| o == v) {
                        out.push(v.to_string());
                    }
                }
            }
            Formula::Not(f) => f.free_into(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.free_into(bound, out);
                b.free_into(bound, out);
            }
            Formula::Forall { vars, body, .. } | Formula::Exists { vars, body, .. } => {
                let before = bound.len();
                bound.extend(vars.iter().cloned());
                body.free_into(bound, out);
                bound.truncate(before);
            }
        }
    }

    /// Rejects a variable quantified twice along one root-to-leaf path and
    /// quantifier exponents below 1.
    pub fn validate(&self) -> Result<(), LogicError> {
        fn walk(f: &Formula, bound: &mut BTreeSet<String>) -> Result<(), LogicError> {
            match f {
                Formula::Pred(..) => Ok(()),
                Formula::Not(g) => walk(g, bound),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, bound)?;
                    walk(b, bound)
                }
                Formula::Forall { vars, body, p } | Formula::Exists { vars, body, p } => {
                    if let Some(p) = p {
                        if *p < 1.0 || !p.is_finite() {
                            return Err(LogicError::InvalidExponent(*p));
                        }
                    }
                    let mut added = Vec::new();
                    for v in vars {
                        if !bound.insert(v.clone()) {
                            return Err(LogicError::DoubleBinding(v.clone()));
                        }
                        added.push(v);
                    }
                    let result = walk(body, bound);
                    for v in added {
                        bound.remove(v);
                    }
                    result
                }
            }
        }
        walk(self, &mut BTreeSet::new())
    }

    /// Nesting depth (an atom has depth 1).
    pub fn depth(&self) -> usize {
        match self {
            Formula::Pred(..) => 1,
            Formula::Not(f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Formula::Forall { body, .. } | Formula::Exists { body, .. } => 1 + body.depth(),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::format_formula(self))
    }
}

/// Evaluation mode: training uses the small exponent, querying the larger ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Query,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantifierConfig {
    pub p_train: f64,
    pub p_forall_query: f64,
    pub p_exists_query: f64,
}

impl Default for QuantifierConfig {
    fn default() -> Self {
        QuantifierConfig {
            p_train: 2.0,
            p_forall_query: 4.0,
            p_exists_query: 6.0,
        }
    }
}

impl QuantifierConfig {
    pub fn validate(&self) -> Result<(), LogicError> {
        for p in [self.p_train, self.p_forall_query, self.p_exists_query] {
            if p < 1.0 || !p.is_finite() {
                return Err(LogicError::InvalidExponent(p));
            }
        }
        Ok(())
    }

    pub fn forall_p(&self, explicit: Option<f64>, mode: Mode) -> f64 {
        explicit.unwrap_or(match mode {
            Mode::Train => self.p_train,
            Mode::Query => self.p_forall_query,
        })
    }

    pub fn exists_p(&self, explicit: Option<f64>, mode: Mode) -> f64 {
        explicit.unwrap_or(match mode {
            Mode::Train => self.p_train,
            Mode::Query => self.p_exists_query,
        })
    }
}
