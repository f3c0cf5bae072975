//! Shared fixtures: a small grounding with closed-form predicates, an
//! independent nested-loop evaluator, a random formula generator and a
//! finite-difference gradient check.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use ltn_core::logic::{
    Bindings, Evaluator, Formula, FunctionGrounding, Grounding, Mode, PredicateGrounding,
    QuantifierConfig, SimilarityKind, Term,
};
use ltn_core::nn::{mlp_init, HiddenActivation, MlpParams, MlpSpec, OutputActivation};
use ltn_core::tensor::{Array, Graph, NodeId, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 2;
pub const VARS: [&str; 3] = ["x", "y", "z"];
const GUARD: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grounding plus bindings, with the raw numbers kept for the oracle.
pub struct Fixture {
    pub grounding: Grounding,
    pub bindings: Bindings,
    pub rows: BTreeMap<String, Vec<Vec<f64>>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

fn small_net(
    input: usize,
    hidden: usize,
    output: usize,
    out: OutputActivation,
    seed: u64,
) -> MlpParams {
    mlp_init(&MlpSpec {
        input_dim: input,
        hidden_dims: vec![hidden],
        output_dim: output,
        hidden_activation: HiddenActivation::Elu,
        output_activation: out,
        seed,
    })
    .unwrap()
}

/// Predicates: `A/1` and `R/2` closed-form, `B/1` a network, `Sim/2`
/// euclidean and `Near/2` manhattan similarity. Functions: `f/1` affine,
/// `g/1` a network. Constant `c` is trainable.
pub fn fixture(seed: u64, extents: &[usize]) -> Fixture {
    let mut r = rng(seed);
    let a: PredicateGrounding =
        PredicateGrounding::Lambda(Arc::new(|g: &mut Graph, xs: &[NodeId]| {
            let x0 = g.select(xs[0], 0)?;
            let x1 = g.select(xs[0], 1)?;
            let u = g.affine(x0, 1.3, 0.2)?;
            let v = g.affine(x1, -0.7, 0.0)?;
            let s = g.add(u, v)?;
            g.sigmoid(s)
        }));
    let rel: PredicateGrounding =
        PredicateGrounding::Lambda(Arc::new(|g: &mut Graph, xs: &[NodeId]| {
            let s0 = g.select(xs[0], 0)?;
            let s1 = g.select(xs[0], 1)?;
            let t0 = g.select(xs[1], 0)?;
            let t1 = g.select(xs[1], 1)?;
            let a = g.mul(s0, t1)?;
            let b = g.mul(s1, t0)?;
            let c = g.sub(a, b)?;
            let d = g.add(s0, t0)?;
            let d = g.affine(d, 0.5, 0.0)?;
            let e = g.add(c, d)?;
            g.sigmoid(e)
        }));
    let f = FunctionGrounding::Lambda(Arc::new(|g: &mut Graph, xs: &[NodeId]| {
        g.affine(xs[0], 0.5, 0.1)
    }));
    let c: Vec<f64> = (0..WIDTH).map(|_| r.random_range(-1.0..1.0)).collect();
    let grounding = Grounding::new()
        .with_constant("c", Array::vector(c).unwrap(), true)
        .with_predicate("A", a)
        .with_predicate("R", rel)
        .with_predicate(
            "B",
            PredicateGrounding::Mlp(small_net(WIDTH, 6, 1, OutputActivation::Sigmoid, seed)),
        )
        .with_predicate(
            "Sim",
            PredicateGrounding::Similarity(SimilarityKind::Euclidean),
        )
        .with_predicate(
            "Near",
            PredicateGrounding::Similarity(SimilarityKind::Manhattan),
        )
        .with_function("f", f)
        .with_function(
            "g",
            FunctionGrounding::Mlp(small_net(
                WIDTH,
                4,
                WIDTH,
                OutputActivation::Identity,
                seed + 1,
            )),
        );
    let mut bindings = Bindings::new();
    let mut rows = BTreeMap::new();
    for (v, &n) in VARS.iter().zip(extents) {
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..WIDTH).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        bindings.bind(v, Array::from_rows(&data).unwrap()).unwrap();
        rows.insert(v.to_string(), data);
    }
    Fixture {
        grounding,
        bindings,
        rows,
    }
}

fn net_forward(net: &MlpParams, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    let last = net.layers.len() - 1;
    for (i, layer) in net.layers.iter().enumerate() {
        let (rows, cols) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        let w = layer.weight.data();
        let mut z: Vec<f64> = layer.bias.data().to_vec();
        for (j, zj) in z.iter_mut().enumerate().take(cols) {
            for (k, hk) in h.iter().enumerate().take(rows) {
                *zj += hk * w[k * cols + j];
            }
        }
        h = if i < last {
            z.into_iter().map(elu).collect()
        } else {
            match net.spec.output_activation {
                OutputActivation::Sigmoid => z.into_iter().map(sigmoid).collect(),
                _ => z,
            }
        };
    }
    h
}

/// Nested-loop evaluator over one variable assignment at a time.
pub struct Oracle<'a> {
    pub fixture: &'a Fixture,
    pub cfg: QuantifierConfig,
    pub mode: Mode,
}

impl Oracle<'_> {
    fn net(&self, pred: bool, name: &str) -> &MlpParams {
        if pred {
            match self.fixture.grounding.predicates.get(name) {
                Some(PredicateGrounding::Mlp(n)) => n,
                _ => panic!("no network predicate {name}"),
            }
        } else {
            match self.fixture.grounding.functions.get(name) {
                Some(FunctionGrounding::Mlp(n)) => n,
                _ => panic!("no network function {name}"),
            }
        }
    }

    fn term(&self, t: &Term, env: &BTreeMap<String, usize>) -> Vec<f64> {
        match t {
            Term::Var(v) => self.fixture.rows[v][env[v]].clone(),
            Term::Const(c) => self.fixture.grounding.constants[c].value.data().to_vec(),
            Term::Func(name, args) => {
                let a = self.term(&args[0], env);
                match name.as_str() {
                    "f" => a.iter().map(|v| 0.5 * v + 0.1).collect(),
                    "g" => net_forward(self.net(false, "g"), &a),
                    other => panic!("unknown function {other}"),
                }
            }
        }
    }

    pub fn eval(&self, f: &Formula, env: &BTreeMap<String, usize>) -> f64 {
        match f {
            Formula::Pred(name, args) => {
                let a: Vec<Vec<f64>> = args.iter().map(|t| self.term(t, env)).collect();
                match name.as_str() {
                    "A" => sigmoid(1.3 * a[0][0] + 0.2 - 0.7 * a[0][1]),
                    "B" => net_forward(self.net(true, "B"), &a[0])[0],
                    "R" => {
                        sigmoid(a[0][0] * a[1][1] - a[0][1] * a[1][0] + 0.5 * (a[0][0] + a[1][0]))
                    }
                    "Sim" => {
                        let d2: f64 = a[0].iter().zip(&a[1]).map(|(p, q)| (p - q).powi(2)).sum();
                        (-d2.max(1e-12).sqrt()).exp()
                    }
                    "Near" => (-a[0]
                        .iter()
                        .zip(&a[1])
                        .map(|(p, q)| (p - q).abs())
                        .sum::<f64>())
                    .exp(),
                    other => panic!("unknown predicate {other}"),
                }
            }
            Formula::Not(a) => 1.0 - self.eval(a, env),
            Formula::And(a, b) => self.eval(a, env) * self.eval(b, env),
            Formula::Or(a, b) => {
                let (a, b) = (self.eval(a, env), self.eval(b, env));
                a + b - a * b
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.eval(a, env), self.eval(b, env));
                1.0 - a + a * b
            }
            Formula::Forall { vars, body, p } => {
                let p = self.cfg.forall_p(*p, self.mode);
                let vals = self.assignments(vars, body, env);
                if !self.occurs(vars, body) {
                    return vals[0];
                }
                let m = vals
                    .iter()
                    .map(|a| (1.0 - a).clamp(GUARD, 1.0).powf(p))
                    .sum::<f64>()
                    / vals.len() as f64;
                1.0 - m.powf(1.0 / p)
            }
            Formula::Exists { vars, body, p } => {
                let p = self.cfg.exists_p(*p, self.mode);
                let vals = self.assignments(vars, body, env);
                if !self.occurs(vars, body) {
                    return vals[0];
                }
                let m = vals
                    .iter()
                    .map(|a| a.clamp(GUARD, 1.0).powf(p))
                    .sum::<f64>()
                    / vals.len() as f64;
                m.powf(1.0 / p)
            }
        }
    }

    fn occurs(&self, vars: &[String], body: &Formula) -> bool {
        let free = body.free_vars();
        vars.iter().any(|v| free.contains(v))
    }

    /// Body values over every assignment of the quantified variables that
    /// occur in the body; a variable the body never mentions is skipped.
    fn assignments(
        &self,
        vars: &[String],
        body: &Formula,
        env: &BTreeMap<String, usize>,
    ) -> Vec<f64> {
        let free = body.free_vars();
        let live: Vec<&String> = vars.iter().filter(|v| free.contains(v)).collect();
        let mut out = Vec::new();
        let mut env = env.clone();
        self.enumerate(&live, 0, &mut env, body, &mut out);
        out
    }

    fn enumerate(
        &self,
        live: &[&String],
        i: usize,
        env: &mut BTreeMap<String, usize>,
        body: &Formula,
        out: &mut Vec<f64>,
    ) {
        if i == live.len() {
            out.push(self.eval(body, env));
            return;
        }
        for k in 0..self.fixture.rows[live[i].as_str()].len() {
            env.insert(live[i].clone(), k);
            self.enumerate(live, i + 1, env, body, out);
        }
    }
}

pub struct FormulaGen {
    pub max_depth: usize,
    pub explicit_p: bool,
    pub predicates: Vec<(&'static str, usize)>,
    pub functions: Vec<&'static str>,
}

impl Default for FormulaGen {
    fn default() -> Self {
        FormulaGen {
            max_depth: 4,
            explicit_p: true,
            predicates: vec![("A", 1), ("B", 1), ("R", 2), ("Sim", 2), ("Near", 2)],
            functions: vec!["f", "g"],
        }
    }
}

impl FormulaGen {
    /// A closed formula of depth <= `max_depth`.
    pub fn closed(&self, r: &mut ChaCha8Rng) -> Formula {
        loop {
            let f = self.node(r, &[], self.max_depth);
            if f.depth() <= self.max_depth && f.free_vars().is_empty() {
                return f;
            }
        }
    }

    fn term(&self, r: &mut ChaCha8Rng, bound: &[String]) -> Term {
        let roll: f64 = r.random();
        if bound.is_empty() || roll < 0.15 {
            return Term::constant("c");
        }
        let v = Term::Var(bound[r.random_range(0..bound.len())].clone());
        if roll < 0.35 && !self.functions.is_empty() {
            let f = self.functions[r.random_range(0..self.functions.len())];
            return Term::Func(f.to_string(), vec![v]);
        }
        v
    }

    fn quantifier(&self, r: &mut ChaCha8Rng, bound: &[String], depth: usize) -> Formula {
        let free: Vec<&str> = VARS
            .iter()
            .copied()
            .filter(|v| !bound.iter().any(|b| b == v))
            .collect();
        let take = if free.len() > 1 && r.random_bool(0.3) {
            2
        } else {
            1
        };
        let vars: Vec<&str> = free[..take].to_vec();
        let mut inner = bound.to_vec();
        inner.extend(vars.iter().map(|v| v.to_string()));
        let body = self.node(r, &inner, depth - 1);
        let p = if self.explicit_p && r.random_bool(0.3) {
            Some([1.0, 1.5, 3.0, 6.0][r.random_range(0..4)])
        } else {
            None
        };
        if r.random_bool(0.5) {
            Formula::Forall {
                vars: vars.iter().map(|v| v.to_string()).collect(),
                body: Box::new(body),
                p,
            }
        } else {
            Formula::Exists {
                vars: vars.iter().map(|v| v.to_string()).collect(),
                body: Box::new(body),
                p,
            }
        }
    }

    fn node(&self, r: &mut ChaCha8Rng, bound: &[String], depth: usize) -> Formula {
        let can_quantify = bound.len() < VARS.len() && depth >= 2;
        if bound.is_empty() && can_quantify {
            return self.quantifier(r, bound, depth);
        }
        if depth <= 1 || r.random_bool(0.25) {
            let (name, arity) = self.predicates[r.random_range(0..self.predicates.len())];
            let args = (0..arity).map(|_| self.term(r, bound)).collect();
            return Formula::pred(name, args);
        }
        match r.random_range(0..6) {
            0 => Formula::not(self.node(r, bound, depth - 1)),
            1 => Formula::and(
                self.node(r, bound, depth - 1),
                self.node(r, bound, depth - 1),
            ),
            2 => Formula::or(
                self.node(r, bound, depth - 1),
                self.node(r, bound, depth - 1),
            ),
            3 => Formula::implies(
                self.node(r, bound, depth - 1),
                self.node(r, bound, depth - 1),
            ),
            _ if can_quantify => self.quantifier(r, bound, depth),
            _ => Formula::not(self.node(r, bound, depth - 1)),
        }
    }
}

/// Number of nested quantifiers on the deepest path.
pub fn quantifier_depth(f: &Formula) -> usize {
    match f {
        Formula::Pred(..) => 0,
        Formula::Not(a) => quantifier_depth(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            quantifier_depth(a).max(quantifier_depth(b))
        }
        Formula::Forall { body, .. } | Formula::Exists { body, .. } => 1 + quantifier_depth(body),
    }
}

/// Truth of a closed formula and its gradient w.r.t. every parameter,
/// flattened in `Grounding::params` order.
pub fn truth_and_gradient(f: &Formula, fx: &Fixture, cfg: QuantifierConfig) -> (f64, Vec<f64>) {
    let mut ev = Evaluator::new(&fx.grounding, &fx.bindings, cfg, Mode::Train);
    let root = ev.eval(f).unwrap();
    let params = ev.param_nodes().to_vec();
    let graph = ev.graph_mut();
    let value = graph.value(root.node).item().unwrap();
    let grads = graph.backward(root.node).unwrap();
    let flat = params
        .iter()
        .flat_map(|&p| grads.get(p).into_data())
        .collect();
    (value, flat)
}

fn truth(f: &Formula, grounding: &Grounding, bindings: &Bindings, cfg: QuantifierConfig) -> f64 {
    let mut ev = Evaluator::new(grounding, bindings, cfg, Mode::Train);
    let root = ev.eval(f).unwrap();
    ev.graph().value(root.node).item().unwrap()
}

/// Central-difference gradient of a closed formula's truth value.
pub fn numeric_gradient(f: &Formula, fx: &Fixture, cfg: QuantifierConfig, h: f64) -> Vec<f64> {
    let mut grounding = fx.grounding.clone();
    let sizes: Vec<usize> = grounding.params().iter().map(|a| a.len()).collect();
    let mut out = Vec::new();
    for (pi, &n) in sizes.iter().enumerate() {
        for k in 0..n {
            let orig = grounding.params()[pi].data()[k];
            let nudge = |g: &mut Grounding, v: f64| {
                let mut ps = g.params_mut();
                let mut d = ps[pi].data().to_vec();
                d[k] = v;
                *ps[pi] = Array::new(ps[pi].shape().to_vec(), d).unwrap();
            };
            nudge(&mut grounding, orig + h);
            let up = truth(f, &grounding, &fx.bindings, cfg);
            nudge(&mut grounding, orig - h);
            let down = truth(f, &grounding, &fx.bindings, cfg);
            nudge(&mut grounding, orig);
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// `|a - n| / max(|a| + |n|, 1e-4)` over whole vectors. The floor keeps
/// finite-difference roundoff (~1e-10) from dominating vanishing gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    diff / scale.max(1e-4)
}

/// Random op chain on a `[rows, cols]` parameter, reduced to a scalar.
pub fn random_tensor_graph(
    r: &mut ChaCha8Rng,
    x: &Array,
) -> Result<(Graph, NodeId, NodeId), TensorError> {
    let mut g = Graph::new();
    let p = g.parameter(x.clone());
    let cols = x.shape()[1];
    let w: Vec<f64> = (0..cols * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let w = g.constant(Array::new(vec![cols, 3], w)?);
    let mut h = g.matmul(p, w)?;
    for _ in 0..r.random_range(2..6) {
        h = match r.random_range(0..10) {
            0 => g.sigmoid(h)?,
            1 => g.elu(h)?,
            2 => {
                let s = g.sigmoid(h)?;
                g.guarded_pow(s, 1.7)?
            }
            3 => g.softmax(h)?,
            4 => {
                let s = g.mul(h, h)?;
                let s = g.affine(s, 1.0, 1.0)?;
                g.sqrt(s)?
            }
            5 => {
                let e = g.exp(h)?;
                let e = g.affine(e, 1.0, 1.0)?;
                g.log(e)?
            }
            6 => {
                let d = g.mul(h, h)?;
                let d = g.affine(d, 1.0, 2.0)?;
                g.div(h, d)?
            }
            7 => {
                let m = g.mean(h, &[0])?;
                g.sub(h, m)?
            }
            8 => {
                let t = g.permute(h, &[1, 0])?;
                let t = g.affine(t, 0.5, 0.0)?;
                g.permute(t, &[1, 0])?
            }
            _ => {
                let a = g.select(h, 0)?;
                let a = g.reshape(a, &[x.shape()[0], 1])?;
                let b = g.broadcast_to(a, &[x.shape()[0], 3])?;
                g.mul(h, b)?
            }
        };
    }
    let root = g.mean_all(h)?;
    Ok((g, p, root))
}

/// Central-difference gradient of `build`'s scalar root w.r.t. `x`.
pub fn numeric_tensor_gradient(x: &Array, h: f64, build: impl Fn(&Array) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.data().to_vec();
            let mut down = x.data().to_vec();
            up[k] += h;
            down[k] -= h;
            let up = build(&Array::new(x.shape().to_vec(), up).unwrap());
            let down = build(&Array::new(x.shape().to_vec(), down).unwrap());
            (up - down) / (2.0 * h)
        })
        .collect()
}
