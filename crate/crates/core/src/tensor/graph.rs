use std::collections::BTreeMap;

use super::array::{
    broadcast_shape, broadcast_strides, for_each_offset, reduce_to_shape, strides, Array,
};
use super::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Placeholder(String),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// `scale * x + shift`
    Affine {
        x: NodeId,
        scale: f64,
        shift: f64,
    },
    Pow {
        x: NodeId,
        exponent: f64,
    },
    Abs(NodeId),
    Sqrt(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum {
        x: NodeId,
        axes: Vec<usize>,
    },
    Mean {
        x: NodeId,
        axes: Vec<usize>,
    },
    Min {
        x: NodeId,
        axis: usize,
    },
    Sigmoid(NodeId),
    Elu(NodeId),
    Relu(NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Reshape {
        x: NodeId,
        shape: Vec<usize>,
    },
    Permute {
        x: NodeId,
        perm: Vec<usize>,
    },
    BroadcastTo {
        x: NodeId,
        shape: Vec<usize>,
    },
    /// Concatenation along the last axis.
    Concat(Vec<NodeId>),
    /// Picks one index of the last axis, dropping that axis.
    Select {
        x: NodeId,
        index: usize,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Placeholder(_) => "placeholder",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::Affine { .. } => "affine",
            Op::Pow { .. } => "pow",
            Op::Abs(_) => "abs",
            Op::Sqrt(_) => "sqrt",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Min { .. } => "min",
            Op::Sigmoid(_) => "sigmoid",
            Op::Elu(_) => "elu",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::Clamp { .. } => "clamp",
            Op::Reshape { .. } => "reshape",
            Op::Permute { .. } => "permute",
            Op::BroadcastTo { .. } => "broadcast_to",
            Op::Concat(_) => "concat",
            Op::Select { .. } => "select",
        }
    }

    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf | Op::Placeholder(_) => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Affine { x, .. }
            | Op::Pow { x, .. }
            | Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::Min { x, .. }
            | Op::Clamp { x, .. }
            | Op::Reshape { x, .. }
            | Op::Permute { x, .. }
            | Op::BroadcastTo { x, .. }
            | Op::Select { x, .. } => vec![*x],
            Op::Abs(x)
            | Op::Sqrt(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Sigmoid(x)
            | Op::Elu(x)
            | Op::Relu(x)
            | Op::Softmax(x) => vec![*x],
            Op::Concat(xs) => xs.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub value: Array,
    pub op: Op,
    pub grad: Option<Array>,
    pub trainable: bool,
}

/// Gradients of a scalar root with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `id`; zeros when `id` is not an ancestor of the root.
    pub fn get(&self, id: NodeId) -> Array {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Array::zeros(&self.shapes[id.0]),
        }
    }

    pub fn is_ancestor(&self, id: NodeId) -> bool {
        self.grads[id.0].is_some()
    }
}

/// A define-by-run computation graph.
///
/// Ops evaluate eagerly as they are recorded; [`Graph::forward_eval`]
/// re-evaluates the whole graph against new placeholder feeds.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Array, trainable: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            id,
            value,
            op,
            grad: None,
            trainable,
        });
        id
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn parameter(&mut self, value: Array) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    pub fn placeholder(&mut self, name: &str, initial: Array) -> NodeId {
        self.push(Op::Placeholder(name.to_string()), initial, false)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Array::scalar(v))
    }

    fn record(&mut self, op: Op) -> Result<NodeId, TensorError> {
        let next = NodeId(self.nodes.len());
        let value = self.compute(&op, next)?;
        Ok(self.push(op, value, false))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Mul(a, b))
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Div(a, b))
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::MatMul(a, b))
    }
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId, TensorError> {
        self.record(Op::Affine { x, scale, shift })
    }
    /// `1 - x`
    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.affine(x, -1.0, 1.0)
    }
    pub fn pow(&mut self, x: NodeId, exponent: f64) -> Result<NodeId, TensorError> {
        self.record(Op::Pow { x, exponent })
    }
    /// `x^p` with `x` first clamped into `[POW_GUARD, 1]`, for bases that
    /// live in the unit interval (truth values and their complements).
    pub fn guarded_pow(&mut self, x: NodeId, exponent: f64) -> Result<NodeId, TensorError> {
        let c = self.clamp(x, POW_GUARD, 1.0)?;
        self.pow(c, exponent)
    }
    pub fn abs(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Abs(x))
    }
    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Sqrt(x))
    }
    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Exp(x))
    }
    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Log(x))
    }
    pub fn sum(&mut self, x: NodeId, axes: &[usize]) -> Result<NodeId, TensorError> {
        self.record(Op::Sum {
            x,
            axes: axes.to_vec(),
        })
    }
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.sum(x, &axes)
    }
    pub fn mean(&mut self, x: NodeId, axes: &[usize]) -> Result<NodeId, TensorError> {
        self.record(Op::Mean {
            x,
            axes: axes.to_vec(),
        })
    }
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.mean(x, &axes)
    }
    pub fn min(&mut self, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        self.record(Op::Min { x, axis })
    }
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Sigmoid(x))
    }
    pub fn elu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Elu(x))
    }
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Relu(x))
    }
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.record(Op::Softmax(x))
    }
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId, TensorError> {
        self.record(Op::Clamp { x, lo, hi })
    }
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        self.record(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }
    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> Result<NodeId, TensorError> {
        if perm.iter().enumerate().all(|(i, &p)| i == p) && perm.len() == self.shape(x).len() {
            return Ok(x);
        }
        self.record(Op::Permute {
            x,
            perm: perm.to_vec(),
        })
    }
    pub fn broadcast_to(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        self.record(Op::BroadcastTo {
            x,
            shape: shape.to_vec(),
        })
    }
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId, TensorError> {
        if xs.len() == 1 {
            return Ok(xs[0]);
        }
        self.record(Op::Concat(xs.to_vec()))
    }
    pub fn select(&mut self, x: NodeId, index: usize) -> Result<NodeId, TensorError> {
        self.record(Op::Select { x, index })
    }

    /// Re-evaluates every node in creation order, substituting placeholder
    /// values from `feeds`. Leaves keep their current values.
    pub fn forward_eval(&mut self, feeds: &BTreeMap<String, Array>) -> Result<(), TensorError> {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op.clone();
            let value = match &op {
                Op::Leaf => continue,
                Op::Placeholder(name) => feeds
                    .get(name)
                    .cloned()
                    .ok_or_else(|| TensorError::MissingFeed(name.clone()))?,
                _ => self.compute(&op, NodeId(i))?,
            };
            self.nodes[i].value = value;
            self.nodes[i].grad = None;
        }
        Ok(())
    }

    fn compute(&self, op: &Op, at: NodeId) -> Result<Array, TensorError> {
        for p in op.parents() {
            if p.0 >= at.0 {
                return Err(TensorError::Cycle { node: at.0 });
            }
        }
        let v = |id: NodeId| &self.nodes[id.0].value;
        let out = match op {
            Op::Leaf | Op::Placeholder(_) => unreachable!("leaves are not computed"),
            Op::Add(a, b) => binary("add", v(*a), v(*b), |x, y| x + y)?,
            Op::Sub(a, b) => binary("sub", v(*a), v(*b), |x, y| x - y)?,
            Op::Mul(a, b) => binary("mul", v(*a), v(*b), |x, y| x * y)?,
            Op::Div(a, b) => binary("div", v(*a), v(*b), |x, y| x / y)?,
            Op::MatMul(a, b) => matmul(v(*a), v(*b))?,
            Op::Affine { x, scale, shift } => v(*x).map(|t| scale * t + shift),
            Op::Pow { x, exponent } => v(*x).map(|t| t.powf(*exponent)),
            Op::Abs(x) => v(*x).map(f64::abs),
            Op::Sqrt(x) => v(*x).map(f64::sqrt),
            Op::Exp(x) => v(*x).map(f64::exp),
            Op::Log(x) => v(*x).map(f64::ln),
            Op::Sum { x, axes } => reduce_sum(v(*x), axes, false)?,
            Op::Mean { x, axes } => reduce_sum(v(*x), axes, true)?,
            Op::Min { x, axis } => reduce_min(v(*x), *axis)?.0,
            Op::Sigmoid(x) => v(*x).map(sigmoid),
            Op::Elu(x) => v(*x).map(|t| if t > 0.0 { t } else { t.exp_m1() }),
            Op::Relu(x) => v(*x).map(|t| t.max(0.0)),
            Op::Softmax(x) => softmax(v(*x))?,
            Op::Clamp { x, lo, hi } => v(*x).map(|t| t.clamp(*lo, *hi)),
            Op::Reshape { x, shape } => v(*x).reshaped(shape.clone())?,
            Op::Permute { x, perm } => permute(v(*x), perm)?,
            Op::BroadcastTo { x, shape } => broadcast_to(v(*x), shape)?,
            Op::Concat(xs) => {
                let parts: Vec<&Array> = xs.iter().map(|&i| v(i)).collect();
                concat_last(&parts)?
            }
            Op::Select { x, index } => select_last(v(*x), *index)?,
        };
        if out.data().iter().any(|t| !t.is_finite()) {
            return Err(TensorError::NonFinite {
                node: at.0,
                op: op.name(),
            });
        }
        Ok(out)
    }

    /// Reverse-mode sweep from a scalar `root`. Trainable nodes also get
    /// their gradient stored in [`Node::grad`].
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients, TensorError> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Array>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array::filled(root_value.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for p in node.op.parents() {
                if p.0 >= i {
                    return Err(TensorError::Cycle { node: i });
                }
            }
            let contributions = self.local_grads(node, &g)?;
            for (parent, pg) in contributions {
                if pg.data().iter().any(|t| !t.is_finite()) {
                    return Err(TensorError::NonFiniteGradient {
                        node: i,
                        op: node.op.name(),
                    });
                }
                match &mut grads[parent.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        for node in &mut self.nodes {
            if node.trainable {
                node.grad = grads[node.id.0].clone();
            }
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn local_grads(&self, node: &Node, g: &Array) -> Result<Vec<(NodeId, Array)>, TensorError> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let out = &node.value;
        let unary = |x: NodeId, f: &dyn Fn(f64, f64, f64) -> f64| {
            let xv = v(x);
            let data = xv
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            vec![(x, Array::from_raw(xv.shape().to_vec(), data))]
        };
        Ok(match &node.op {
            Op::Leaf | Op::Placeholder(_) => Vec::new(),
            Op::Add(a, b) => vec![
                (*a, reduce_to_shape(g, v(*a).shape())),
                (*b, reduce_to_shape(g, v(*b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, reduce_to_shape(g, v(*a).shape())),
                (*b, reduce_to_shape(&g.map(|t| -t), v(*b).shape())),
            ],
            Op::Mul(a, b) => {
                let ga = binary("mul", g, v(*b), |x, y| x * y)?;
                let gb = binary("mul", g, v(*a), |x, y| x * y)?;
                vec![
                    (*a, reduce_to_shape(&ga, v(*a).shape())),
                    (*b, reduce_to_shape(&gb, v(*b).shape())),
                ]
            }
            Op::Div(a, b) => {
                let ga = binary("div", g, v(*b), |x, y| x / y)?;
                // d(a/b)/db = -out / b
                let q = binary("div", out, v(*b), |x, y| -x / y)?;
                let gb = binary("mul", g, &q, |x, y| x * y)?;
                vec![
                    (*a, reduce_to_shape(&ga, v(*a).shape())),
                    (*b, reduce_to_shape(&gb, v(*b).shape())),
                ]
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (v(*a), v(*b));
                let ga = matmul(g, &transpose2(bv))?;
                let gb = matmul(&transpose2(av), g)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Affine { x, scale, .. } => unary(*x, &|_, _, gi| gi * scale),
            Op::Pow { x, exponent } => {
                let p = *exponent;
                unary(*x, &|xi, _, gi| gi * p * xi.powf(p - 1.0))
            }
            Op::Abs(x) => unary(*x, &|xi, _, gi| {
                if xi > 0.0 {
                    gi
                } else if xi < 0.0 {
                    -gi
                } else {
                    0.0
                }
            }),
            Op::Sqrt(x) => unary(*x, &|_, yi, gi| gi * 0.5 / yi),
            Op::Exp(x) => unary(*x, &|_, yi, gi| gi * yi),
            Op::Log(x) => unary(*x, &|xi, _, gi| gi / xi),
            Op::Sum { x, axes } | Op::Mean { x, axes } => {
                let xs = v(*x).shape();
                let kept = kept_shape(xs, axes);
                let g_kept = g.reshaped(kept)?;
                let mut back = broadcast_to(&g_kept, xs)?;
                if matches!(node.op, Op::Mean { .. }) {
                    let count: usize = axes.iter().map(|&a| xs[a]).product();
                    let inv = 1.0 / count as f64;
                    back.data_mut().iter_mut().for_each(|t| *t *= inv);
                }
                vec![(*x, back)]
            }
            Op::Min { x, axis } => {
                let xv = v(*x);
                let (_, argmin) = reduce_min(xv, *axis)?;
                let mut back = vec![0.0; xv.len()];
                for (k, &pos) in argmin.iter().enumerate() {
                    back[pos] += g.data()[k];
                }
                vec![(*x, Array::from_raw(xv.shape().to_vec(), back))]
            }
            Op::Sigmoid(x) => unary(*x, &|_, yi, gi| gi * yi * (1.0 - yi)),
            Op::Elu(x) => unary(*x, &|xi, yi, gi| {
                if xi > 0.0 {
                    gi
                } else {
                    gi * (yi + 1.0)
                }
            }),
            Op::Relu(x) => unary(*x, &|xi, _, gi| if xi > 0.0 { gi } else { 0.0 }),
            Op::Softmax(x) => {
                let c = *out.shape().last().unwrap_or(&1);
                let mut back = vec![0.0; out.len()];
                for (r, chunk) in out.data().chunks(c.max(1)).enumerate() {
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let dot: f64 = chunk.iter().zip(gr).map(|(s, gi)| s * gi).sum();
                    for j in 0..c {
                        back[r * c + j] = chunk[j] * (gr[j] - dot);
                    }
                }
                vec![(*x, Array::from_raw(out.shape().to_vec(), back))]
            }
            Op::Clamp { x, lo, hi } => unary(*x, &|xi, _, gi| {
                if xi >= *lo && xi <= *hi {
                    gi
                } else {
                    0.0
                }
            }),
            Op::Reshape { x, .. } => vec![(*x, g.reshaped(v(*x).shape().to_vec())?)],
            Op::Permute { x, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                vec![(*x, permute(g, &inverse)?)]
            }
            Op::BroadcastTo { x, .. } => vec![(*x, reduce_to_shape(g, v(*x).shape()))],
            Op::Concat(xs) => {
                let total = *out.shape().last().unwrap_or(&1);
                let rows = out.len() / total.max(1);
                let mut offset = 0;
                let mut res = Vec::with_capacity(xs.len());
                for &p in xs {
                    let pv = v(p);
                    let w = *pv.shape().last().unwrap_or(&1);
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        let start = r * total + offset;
                        data.extend_from_slice(&g.data()[start..start + w]);
                    }
                    offset += w;
                    res.push((p, Array::from_raw(pv.shape().to_vec(), data)));
                }
                res
            }
            Op::Select { x, index } => {
                let xv = v(*x);
                let c = *xv.shape().last().unwrap_or(&1);
                let mut back = vec![0.0; xv.len()];
                for (r, &gi) in g.data().iter().enumerate() {
                    back[r * c + index] = gi;
                }
                vec![(*x, Array::from_raw(xv.shape().to_vec(), back))]
            }
        })
    }
}

/// Lower clamp bound applied before raising a unit-interval base to a power.
pub const POW_GUARD: f64 = 1e-7;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn binary(
    op: &'static str,
    a: &Array,
    b: &Array,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array, TensorError> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Ok(Array::from_raw(a.shape().to_vec(), data));
    }
    let shape =
        broadcast_shape(a.shape(), b.shape()).ok_or_else(|| TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })?;
    let sa = broadcast_strides(a.shape(), &shape);
    let sb = broadcast_strides(b.shape(), &shape);
    let mut data = vec![0.0; shape.iter().product()];
    for_each_offset(&shape, [&sa, &sb], |k, [i, j]| {
        data[k] = f(a.data()[i], b.data()[j]);
    });
    Ok(Array::from_raw(shape, data))
}

fn matmul(a: &Array, b: &Array) -> Result<Array, TensorError> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Array::from_raw(vec![n, m], out))
}

fn transpose2(a: &Array) -> Array {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.data()[i * m + j];
        }
    }
    Array::from_raw(vec![m, n], out)
}

fn check_axes(shape: &[usize], axes: &[usize], op: &'static str) -> Result<(), TensorError> {
    for (i, &a) in axes.iter().enumerate() {
        if a >= shape.len() || axes[..i].contains(&a) {
            return Err(TensorError::BadAxis {
                op,
                axis: a,
                shape: shape.to_vec(),
            });
        }
    }
    Ok(())
}

fn kept_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect()
}

fn reduce_sum(x: &Array, axes: &[usize], mean: bool) -> Result<Array, TensorError> {
    check_axes(x.shape(), axes, if mean { "mean" } else { "sum" })?;
    let kept = kept_shape(x.shape(), axes);
    let count: usize = axes.iter().map(|&a| x.shape()[a]).product();
    if mean && count == 0 {
        return Err(TensorError::EmptyReduction { op: "mean" });
    }
    let mut out = vec![0.0; kept.iter().product()];
    let unit = strides(x.shape());
    let dst = broadcast_strides(&kept, x.shape());
    for_each_offset(x.shape(), [&unit, &dst], |_, [i, o]| out[o] += x.data()[i]);
    if mean {
        let inv = 1.0 / count as f64;
        out.iter_mut().for_each(|t| *t *= inv);
    }
    let shape = x
        .shape()
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    Ok(Array::from_raw(shape, out))
}

/// Minimum along one axis, with the flat input position of each minimum.
fn reduce_min(x: &Array, axis: usize) -> Result<(Array, Vec<usize>), TensorError> {
    check_axes(x.shape(), &[axis], "min")?;
    if x.shape()[axis] == 0 {
        return Err(TensorError::EmptyReduction { op: "min" });
    }
    let kept = kept_shape(x.shape(), &[axis]);
    let n: usize = kept.iter().product();
    let mut out = vec![f64::INFINITY; n];
    let mut arg = vec![0usize; n];
    let unit = strides(x.shape());
    let dst = broadcast_strides(&kept, x.shape());
    for_each_offset(x.shape(), [&unit, &dst], |_, [i, o]| {
        if x.data()[i] < out[o] {
            out[o] = x.data()[i];
            arg[o] = i;
        }
    });
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    Ok((Array::from_raw(shape, out), arg))
}

fn softmax(x: &Array) -> Result<Array, TensorError> {
    let Some(&c) = x.shape().last() else {
        return Err(TensorError::Rank {
            op: "softmax",
            expected: 1,
            shape: Vec::new(),
        });
    };
    let mut out = x.data().to_vec();
    if c == 0 {
        return Ok(Array::from_raw(x.shape().to_vec(), out));
    }
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for t in row.iter_mut() {
            *t = (*t - max).exp();
            total += *t;
        }
        row.iter_mut().for_each(|t| *t /= total);
    }
    Ok(Array::from_raw(x.shape().to_vec(), out))
}

fn permute(x: &Array, perm: &[usize]) -> Result<Array, TensorError> {
    let nd = x.ndim();
    let mut seen = vec![false; nd];
    if perm.len() != nd
        || perm
            .iter()
            .any(|&p| p >= nd || std::mem::replace(&mut seen[p], true))
    {
        return Err(TensorError::BadPermutation {
            perm: perm.to_vec(),
            shape: x.shape().to_vec(),
        });
    }
    let shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let src = strides(x.shape());
    let view: Vec<usize> = perm.iter().map(|&p| src[p]).collect();
    let mut out = vec![0.0; x.len()];
    for_each_offset(&shape, [&view], |k, [i]| out[k] = x.data()[i]);
    Ok(Array::from_raw(shape, out))
}

fn broadcast_to(x: &Array, shape: &[usize]) -> Result<Array, TensorError> {
    match broadcast_shape(x.shape(), shape) {
        Some(s) if s == shape => {}
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_to",
                left: x.shape().to_vec(),
                right: shape.to_vec(),
            })
        }
    }
    let view = broadcast_strides(x.shape(), shape);
    let mut out = vec![0.0; shape.iter().product()];
    for_each_offset(shape, [&view], |k, [i]| out[k] = x.data()[i]);
    Ok(Array::from_raw(shape.to_vec(), out))
}

fn concat_last(parts: &[&Array]) -> Result<Array, TensorError> {
    let first = parts[0];
    if first.ndim() == 0 {
        return Err(TensorError::Rank {
            op: "concat",
            expected: 1,
            shape: Vec::new(),
        });
    }
    let lead = &first.shape()[..first.ndim() - 1];
    let rows: usize = lead.iter().product();
    let mut total = 0;
    for p in parts {
        if p.ndim() != first.ndim() || &p.shape()[..p.ndim() - 1] != lead {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                left: first.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
        total += p.shape()[p.ndim() - 1];
    }
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for p in parts {
            let w = p.shape()[p.ndim() - 1];
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Ok(Array::from_raw(shape, out))
}

fn select_last(x: &Array, index: usize) -> Result<Array, TensorError> {
    let Some(&c) = x.shape().last() else {
        return Err(TensorError::Rank {
            op: "select",
            expected: 1,
            shape: Vec::new(),
        });
    };
    if index >= c {
        return Err(TensorError::IndexOutOfRange { index, extent: c });
    }
    let data = x.data().chunks(c).map(|row| row[index]).collect();
    Ok(Array::from_raw(x.shape()[..x.ndim() - 1].to_vec(), data))
}
