use std::fmt;

use super::LogicError;
use crate::tensor::{Array, Graph, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connective {
    Not,
    And,
    Or,
    Implies,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimilarityKind {
    Euclidean,
    Manhattan,
    Minkowski(f64),
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityKind::Euclidean => f.write_str("euclidean"),
            SimilarityKind::Manhattan => f.write_str("manhattan"),
            SimilarityKind::Minkowski(p) => write!(f, "minkowski(p={p})"),
        }
    }
}

/// Lower bound on a summed distance before a root is taken, so the root's
/// derivative stays finite at zero distance.
const DISTANCE_FLOOR: f64 = 1e-12;

/// A truth grid living in a graph: `node` has one extent per entry of `axes`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridNode {
    pub axes: Vec<String>,
    pub node: NodeId,
}

/// Detached truth values with named axes.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthGrid {
    pub axes: Vec<String>,
    pub values: Array,
}

impl TruthGrid {
    pub fn new(axes: Vec<String>, values: Array) -> Result<Self, LogicError> {
        if axes.len() != values.ndim() {
            return Err(LogicError::Pairing(format!(
                "{} axis names for an array of rank {}",
                axes.len(),
                values.ndim()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(LogicError::Pairing(format!("axis '{a}' repeated")));
            }
        }
        if let Some(&v) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LogicError::PredicateRange {
                name: "truth grid".into(),
                value: v,
            });
        }
        Ok(TruthGrid { axes, values })
    }

    pub fn vector(axis: &str, values: Vec<f64>) -> Result<Self, LogicError> {
        TruthGrid::new(vec![axis.to_string()], Array::vector(values)?)
    }

    pub fn scalar(value: f64) -> Result<Self, LogicError> {
        TruthGrid::new(Vec::new(), Array::scalar(value))
    }

    /// The value of an axis-free grid.
    pub fn item(&self) -> Option<f64> {
        if self.axes.is_empty() {
            self.values.item()
        } else {
            None
        }
    }

    pub fn extent(&self, axis: &str) -> Option<usize> {
        let k = self.axes.iter().position(|a| a == axis)?;
        Some(self.values.shape()[k])
    }

    fn to_graph(&self, graph: &mut Graph) -> GridNode {
        GridNode {
            axes: self.axes.clone(),
            node: graph.constant(self.values.clone()),
        }
    }

    fn from_graph(graph: &Graph, g: &GridNode) -> TruthGrid {
        TruthGrid {
            axes: g.axes.clone(),
            values: graph.value(g.node).clone(),
        }
    }
}

/// Union of two axis lists (left order, then new right axes) with extents,
/// checking that shared axes agree.
fn union_axes(
    graph: &Graph,
    a: &GridNode,
    b: &GridNode,
) -> Result<(Vec<String>, Vec<usize>), LogicError> {
    let mut axes = a.axes.clone();
    let mut extents = graph.shape(a.node).to_vec();
    for (k, name) in b.axes.iter().enumerate() {
        let e = graph.shape(b.node)[k];
        match axes.iter().position(|x| x == name) {
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
    Ok((axes, extents))
}

/// Reorders `g` into the order of `union` and inserts unit extents for the
/// axes it lacks, ready for broadcasting. Any trailing non-axis dimensions
/// (`trailing` of them) are kept at the end.
pub(crate) fn align(
    graph: &mut Graph,
    axes: &[String],
    node: NodeId,
    union: &[String],
    trailing: usize,
) -> Result<NodeId, LogicError> {
    let mut perm: Vec<usize> = union
        .iter()
        .filter_map(|u| axes.iter().position(|a| a == u))
        .collect();
    if perm.len() != axes.len() {
        let missing = axes
            .iter()
            .find(|a| !union.contains(a))
            .cloned()
            .unwrap_or_default();
        return Err(LogicError::UnknownAxis(missing));
    }
    perm.extend(axes.len()..axes.len() + trailing);
    let permuted = graph.permute(node, &perm)?;
    let shape = graph.shape(node).to_vec();
    let mut target: Vec<usize> = union
        .iter()
        .map(|u| axes.iter().position(|a| a == u).map_or(1, |k| shape[k]))
        .collect();
    target.extend(&shape[axes.len()..]);
    if graph.shape(permuted) == target.as_slice() {
        return Ok(permuted);
    }
    Ok(graph.reshape(permuted, &target)?)
}

pub fn connective_node(
    graph: &mut Graph,
    kind: Connective,
    a: &GridNode,
    b: Option<&GridNode>,
) -> Result<GridNode, LogicError> {
    let b = match (kind, b) {
        (Connective::Not, _) => {
            return Ok(GridNode {
                axes: a.axes.clone(),
                node: graph.one_minus(a.node)?,
            })
        }
        (_, Some(b)) => b,
        (_, None) => {
            return Err(LogicError::Arity {
                name: format!("{kind:?}"),
                expected: 2,
                found: 1,
            })
        }
    };
    let (axes, extents) = union_axes(graph, a, b)?;
    let x = align(graph, &a.axes, a.node, &axes, 0)?;
    let y = align(graph, &b.axes, b.node, &axes, 0)?;
    let node = match kind {
        Connective::And => graph.mul(x, y)?,
        Connective::Or => {
            let s = graph.add(x, y)?;
            let p = graph.mul(x, y)?;
            graph.sub(s, p)?
        }
        Connective::Implies => {
            let na = graph.one_minus(x)?;
            let p = graph.mul(x, y)?;
            graph.add(na, p)?
        }
        Connective::Not => unreachable!(),
    };
    // Both operands may lack an axis only if it came from neither, which
    // union_axes rules out; this broadcast is a no-op except for safety on
    // degenerate unit extents.
    let node = graph.broadcast_to(node, &extents)?;
    Ok(GridNode { axes, node })
}

fn reduced_axes(g: &GridNode, over: &[String]) -> Result<(Vec<usize>, Vec<String>), LogicError> {
    let mut idx = Vec::new();
    for name in over {
        let k = g
            .axes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| LogicError::UnknownAxis(name.clone()))?;
        if !idx.contains(&k) {
            idx.push(k);
        }
    }
    let kept = g
        .axes
        .iter()
        .enumerate()
        .filter(|(k, _)| !idx.contains(k))
        .map(|(_, a)| a.clone())
        .collect();
    Ok((idx, kept))
}

fn check_p(p: f64) -> Result<(), LogicError> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(LogicError::InvalidExponent(p))
    }
}

/// `1 − (mean over axes of (1−a)^p)^(1/p)`.
pub fn forall_node(
    graph: &mut Graph,
    g: &GridNode,
    over: &[String],
    p: f64,
) -> Result<GridNode, LogicError> {
    check_p(p)?;
    let (idx, kept) = reduced_axes(g, over)?;
    if idx.is_empty() {
        return Ok(g.clone());
    }
    let err = graph.one_minus(g.node)?;
    let powered = graph.guarded_pow(err, p)?;
    let mean = graph.mean(powered, &idx)?;
    let root = graph.pow(mean, 1.0 / p)?;
    let node = graph.one_minus(root)?;
    Ok(GridNode { axes: kept, node })
}

/// `(mean over axes of a^p)^(1/p)`.
pub fn exists_node(
    graph: &mut Graph,
    g: &GridNode,
    over: &[String],
    p: f64,
) -> Result<GridNode, LogicError> {
    check_p(p)?;
    let (idx, kept) = reduced_axes(g, over)?;
    if idx.is_empty() {
        return Ok(g.clone());
    }
    let powered = graph.guarded_pow(g.node, p)?;
    let mean = graph.mean(powered, &idx)?;
    let node = graph.pow(mean, 1.0 / p)?;
    Ok(GridNode { axes: kept, node })
}

/// Row-wise similarity `exp(−D)` of a `[N, d]` difference node; returns `[N]`.
pub fn similarity_node(
    graph: &mut Graph,
    kind: SimilarityKind,
    diff: NodeId,
) -> Result<NodeId, LogicError> {
    let distance = match kind {
        SimilarityKind::Euclidean => {
            let sq = graph.mul(diff, diff)?;
            let s = graph.sum(sq, &[1])?;
            let s = graph.clamp(s, DISTANCE_FLOOR, f64::MAX)?;
            graph.sqrt(s)?
        }
        SimilarityKind::Manhattan => {
            let a = graph.abs(diff)?;
            graph.sum(a, &[1])?
        }
        SimilarityKind::Minkowski(p) => {
            check_p(p)?;
            let a = graph.abs(diff)?;
            let ap = graph.pow(a, p)?;
            let s = graph.sum(ap, &[1])?;
            let s = graph.clamp(s, DISTANCE_FLOOR, f64::MAX)?;
            graph.pow(s, 1.0 / p)?
        }
    };
    let neg = graph.affine(distance, -1.0, 0.0)?;
    Ok(graph.exp(neg)?)
}

pub fn apply_connective(
    kind: Connective,
    a: &TruthGrid,
    b: Option<&TruthGrid>,
) -> Result<TruthGrid, LogicError> {
    let mut graph = Graph::new();
    let an = a.to_graph(&mut graph);
    let bn = b.map(|b| b.to_graph(&mut graph));
    let out = connective_node(&mut graph, kind, &an, bn.as_ref())?;
    Ok(TruthGrid::from_graph(&graph, &out))
}

fn aggregate(
    values: &TruthGrid,
    over: &[&str],
    p: f64,
    f: fn(&mut Graph, &GridNode, &[String], f64) -> Result<GridNode, LogicError>,
) -> Result<TruthGrid, LogicError> {
    let mut graph = Graph::new();
    let g = values.to_graph(&mut graph);
    let over: Vec<String> = over.iter().map(|s| s.to_string()).collect();
    let out = f(&mut graph, &g, &over, p)?;
    Ok(TruthGrid::from_graph(&graph, &out))
}

pub fn aggregate_forall(
    values: &TruthGrid,
    over: &[&str],
    p: f64,
) -> Result<TruthGrid, LogicError> {
    aggregate(values, over, p, forall_node)
}

pub fn aggregate_exists(
    values: &TruthGrid,
    over: &[&str],
    p: f64,
) -> Result<TruthGrid, LogicError> {
    aggregate(values, over, p, exists_node)
}

/// Pairwise similarity of row `i` of `x` with row `i` of `y`.
pub fn similarity_predicate(
    kind: SimilarityKind,
    x: &Array,
    y: &Array,
) -> Result<Array, LogicError> {
    let as_2d = |a: &Array| -> Result<Array, LogicError> {
        match a.ndim() {
            1 => Ok(a.reshaped(vec![a.len(), 1])?),
            2 => Ok(a.clone()),
            _ => Err(LogicError::Pairing(format!(
                "expected a batch, got shape {:?}",
                a.shape()
            ))),
        }
    };
    let (x, y) = (as_2d(x)?, as_2d(y)?);
    if x.rows() != y.rows() {
        return Err(LogicError::Pairing(format!(
            "{} rows paired with {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.row_width() != y.row_width() {
        return Err(LogicError::WidthMismatch {
            left: x.row_width(),
            right: y.row_width(),
        });
    }
    let mut graph = Graph::new();
    let xn = graph.constant(x);
    let yn = graph.constant(y);
    let diff = graph.sub(xn, yn)?;
    let sim = similarity_node(&mut graph, kind, diff)?;
    Ok(graph.value(sim).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(axis: &str, v: &[f64]) -> TruthGrid {
        TruthGrid::vector(axis, v.to_vec()).unwrap()
    }

    fn s(v: f64) -> TruthGrid {
        TruthGrid::scalar(v).unwrap()
    }

    fn item(g: TruthGrid) -> f64 {
        g.item().unwrap()
    }

    #[test]
    fn connective_reference_values() {
        assert_eq!(
            item(apply_connective(Connective::Not, &s(0.0), None).unwrap()),
            1.0
        );
        for b in [0.0, 0.3, 1.0] {
            let r = apply_connective(Connective::And, &s(1.0), Some(&s(b))).unwrap();
            assert_eq!(item(r), b);
        }
        let r = apply_connective(Connective::Implies, &s(0.8), Some(&s(0.6))).unwrap();
        assert!((item(r) - 0.68).abs() < 1e-12);
        assert!(apply_connective(Connective::And, &s(0.5), None).is_err());
    }

    #[test]
    fn crisp_truth_tables() {
        for a in [0.0, 1.0] {
            for b in [0.0, 1.0] {
                let (x, y) = (a == 1.0, b == 1.0);
                let eval = |k| item(apply_connective(k, &s(a), Some(&s(b))).unwrap());
                assert_eq!(eval(Connective::And), f64::from(u8::from(x && y)));
                assert_eq!(eval(Connective::Or), f64::from(u8::from(x || y)));
                assert_eq!(eval(Connective::Implies), f64::from(u8::from(!x || y)));
            }
            let n = item(apply_connective(Connective::Not, &s(a), None).unwrap());
            assert_eq!(n, 1.0 - a);
        }
    }

    #[test]
    fn binary_connectives_broadcast_over_axis_union() {
        let a = tv("x", &[0.2, 0.5, 1.0]);
        let b = tv("y", &[0.5, 1.0]);
        let r = apply_connective(Connective::And, &a, Some(&b)).unwrap();
        assert_eq!(r.axes, vec!["x", "y"]);
        assert_eq!(r.values.shape(), &[3, 2]);
        assert_eq!(r.values.data(), &[0.1, 0.2, 0.25, 0.5, 0.5, 1.0]);

        let wrong = tv("x", &[0.1, 0.2]);
        assert!(matches!(
            apply_connective(Connective::Or, &a, Some(&wrong)),
            Err(LogicError::AxisMismatch { .. })
        ));
    }

    #[test]
    fn forall_reference_values() {
        let r = item(aggregate_forall(&tv("x", &[0.8, 0.6]), &["x"], 2.0).unwrap());
        assert!((r - (1.0 - 0.1f64.sqrt())).abs() < 1e-12);
        assert!((r - 0.68377).abs() < 1e-5);
        let ones = item(aggregate_forall(&tv("x", &[1.0; 4]), &["x"], 2.0).unwrap());
        assert!((ones - 1.0).abs() < 1e-6);
        for p in [1.0, 2.0, 6.0] {
            let c = item(aggregate_forall(&tv("x", &[0.37; 5]), &["x"], p).unwrap());
            assert!((c - 0.37).abs() < 1e-12);
        }
        let near_min = item(aggregate_forall(&tv("x", &[0.2, 0.9]), &["x"], 100.0).unwrap());
        assert!((near_min - 0.2).abs() < 0.02);
    }

    #[test]
    fn exists_reference_values() {
        let zeros = item(aggregate_exists(&tv("x", &[0.0; 3]), &["x"], 2.0).unwrap());
        assert!(zeros.abs() < 1e-6);
        let mean = item(aggregate_exists(&tv("x", &[0.2, 0.4, 0.9]), &["x"], 1.0).unwrap());
        assert!((mean - 0.5).abs() < 1e-12);
        let r = item(aggregate_exists(&tv("x", &[0.2, 0.9]), &["x"], 6.0).unwrap());
        let expected = ((0.2f64.powi(6) + 0.9f64.powi(6)) / 2.0).powf(1.0 / 6.0);
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.8019).abs() < 1e-4);
    }

    #[test]
    fn partial_reduction_keeps_other_axes() {
        let g = TruthGrid::new(
            vec!["x".into(), "y".into()],
            Array::new(vec![2, 2], vec![0.8, 1.0, 0.6, 1.0]).unwrap(),
        )
        .unwrap();
        let r = aggregate_forall(&g, &["x"], 2.0).unwrap();
        assert_eq!(r.axes, vec!["y"]);
        assert!((r.values.data()[0] - 0.68377).abs() < 1e-5);
        assert!(matches!(
            aggregate_forall(&g, &["z"], 2.0),
            Err(LogicError::UnknownAxis(a)) if a == "z"
        ));
        assert!(matches!(
            aggregate_exists(&g, &["x"], 0.5),
            Err(LogicError::InvalidExponent(_))
        ));
    }

    #[test]
    fn similarity_reference_values() {
        let x = Array::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let y = Array::from_rows(&[vec![3.0, 4.0], vec![1.0, 2.0]]).unwrap();
        let e = similarity_predicate(SimilarityKind::Euclidean, &x, &y).unwrap();
        assert!((e.data()[0] - (-5.0f64).exp()).abs() < 1e-12);
        assert!((e.data()[0] - 0.006738).abs() < 1e-6);
        assert!((e.data()[1] - 1.0).abs() < 1e-5);

        let a = Array::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Array::from_rows(&[vec![4.0, 6.0]]).unwrap();
        let m1 = similarity_predicate(SimilarityKind::Minkowski(1.0), &a, &b).unwrap();
        let man = similarity_predicate(SimilarityKind::Manhattan, &a, &b).unwrap();
        assert_eq!(m1, man);
        assert!((man.data()[0] - (-7.0f64).exp()).abs() < 1e-15);
        let m2 = similarity_predicate(SimilarityKind::Minkowski(2.0), &a, &b).unwrap();
        let euc = similarity_predicate(SimilarityKind::Euclidean, &a, &b).unwrap();
        assert!((m2.data()[0] - euc.data()[0]).abs() < 1e-15);

        let short = Array::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            similarity_predicate(SimilarityKind::Euclidean, &x, &short),
            Err(LogicError::Pairing(_))
        ));
        let narrow = Array::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        assert!(matches!(
            similarity_predicate(SimilarityKind::Manhattan, &x, &narrow),
            Err(LogicError::WidthMismatch { .. })
        ));
    }
}
