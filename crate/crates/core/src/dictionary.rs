//! Candidate basis library, design-matrix evaluation, and the mapping from
//! structural indicators to active columns.
//!
//! Node indices are zero-based here. A pairwise edge `(i, j)` means node `j`
//! drives node `i`; three-body edges are keyed by their target `i` first.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::oscillator::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CouplingKind {
    Pairwise,
    ThreeBodyAsym,
    ThreeBodySym,
}

impl CouplingKind {
    pub const ALL: [CouplingKind; 3] = [CouplingKind::Pairwise, CouplingKind::ThreeBodyAsym, CouplingKind::ThreeBodySym];

    pub fn class(self) -> HarmonicClass {
        match self {
            CouplingKind::Pairwise => HarmonicClass::Pairwise,
            _ => HarmonicClass::ThreeBody,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    pub fn eval(self, arg: f64) -> f64 {
        match self {
            Trig::Sin => arg.sin(),
            Trig::Cos => arg.cos(),
        }
    }
}

/// Which harmonic-order variable gates a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarmonicClass {
    Pairwise,
    ThreeBody,
}

/// Index of the phase-lag indicator for a coupling class and trig function:
/// `(pair sin, pair cos, asym sin, asym cos, sym sin, sym cos)`.
pub fn d_bit(kind: CouplingKind, trig: Trig) -> usize {
    2 * kind as usize + trig as usize
}

/// A coupling edge. `k` is `None` for pairwise edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub kind: CouplingKind,
    pub i: usize,
    pub j: usize,
    pub k: Option<usize>,
}

impl Edge {
    pub fn pairwise(i: usize, j: usize) -> Self {
        Edge { kind: CouplingKind::Pairwise, i, j, k: None }
    }

    pub fn new(kind: CouplingKind, i: usize, j: usize, k: usize) -> Self {
        match kind {
            CouplingKind::Pairwise => Edge::pairwise(i, j),
            _ => Edge { kind, i, j, k: Some(k) },
        }
    }

    pub fn target(&self) -> usize {
        self.i
    }

    pub fn is_pairwise(&self) -> bool {
        self.kind == CouplingKind::Pairwise
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let bad = |why: &str| Err(Error::invalid(format!("edge {self:?}: {why}")));
        if self.i >= n_nodes || self.j >= n_nodes || self.k.is_some_and(|k| k >= n_nodes) {
            return bad("node out of range");
        }
        if self.i == self.j {
            return bad("indices must differ");
        }
        match (self.kind, self.k) {
            (CouplingKind::Pairwise, None) => Ok(()),
            (CouplingKind::Pairwise, Some(_)) => bad("pairwise edge has a third node"),
            (_, None) => bad("three-body edge needs three nodes"),
            (kind, Some(k)) => {
                if k == self.i || k == self.j {
                    bad("indices must be mutually distinct")
                } else if kind == CouplingKind::ThreeBodySym && self.j > k {
                    bad("symmetric edges are stored with j < k")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Phase argument of the edge's basis functions at state `x`.
    pub fn phase(&self, x: &[f64]) -> f64 {
        let (xi, xj) = (x[self.i], x[self.j]);
        match (self.kind, self.k) {
            (CouplingKind::Pairwise, _) => xj - xi,
            (CouplingKind::ThreeBodyAsym, Some(k)) => 2.0 * x[k] - xi - xj,
            (CouplingKind::ThreeBodySym, Some(k)) => x[k] + xj - 2.0 * xi,
            _ => unreachable!("validated edge"),
        }
    }
}

/// Global enumeration of edge indicator bits: all pairwise edges, then asymmetric
/// triplets, then symmetric triplets, each in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndex {
    pub n_nodes: usize,
    pub edges: Vec<Edge>,
}

impl EdgeIndex {
    pub fn new(n_nodes: usize) -> Self {
        let mut edges = Vec::new();
        let n = n_nodes;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                edges.push(Edge::pairwise(i, j));
            }
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for k in (0..n).filter(|&k| k != i && k != j) {
                    edges.push(Edge::new(CouplingKind::ThreeBodyAsym, i, j, k));
                }
            }
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for k in (j + 1..n).filter(|&k| k != i) {
                    edges.push(Edge::new(CouplingKind::ThreeBodySym, i, j, k));
                }
            }
        }
        EdgeIndex { n_nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn bit_of(&self, edge: &Edge) -> Option<usize> {
        self.edges.iter().position(|e| e == edge)
    }
}

/// One candidate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BasisId {
    Intrinsic,
    Coupling { edge: Edge, harmonic: u8, trig: Trig },
}

impl BasisId {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BasisId::Intrinsic => 1.0,
            BasisId::Coupling { edge, harmonic, trig } => trig.eval(*harmonic as f64 * edge.phase(x)),
        }
    }
}

/// Ordered basis library of one node at the harmonic caps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub node: usize,
    pub n_nodes: usize,
    pub l2_max: u8,
    pub l3_max: u8,
    pub entries: Vec<BasisId>,
}

/// `1 + 2 L2 (N-1) + 3 L3 (N-1)(N-2)`.
pub fn gamma(n_nodes: usize, l2: u8, l3: u8) -> usize {
    let n = n_nodes;
    1 + 2 * l2 as usize * (n - 1) + 3 * l3 as usize * (n - 1) * n.saturating_sub(2)
}

pub fn build_dictionary(n_nodes: usize, node: usize, l2_max: u8, l3_max: u8) -> Result<Dictionary> {
    if n_nodes < 2 {
        return Err(Error::invalid("a dictionary needs at least two nodes"));
    }
    if node >= n_nodes {
        return Err(Error::invalid(format!("node {} out of range for {} nodes", node + 1, n_nodes)));
    }
    if l2_max == 0 || l3_max == 0 {
        return Err(Error::invalid("harmonic caps must be at least 1"));
    }
    let mut entries = vec![BasisId::Intrinsic];
    for edge in EdgeIndex::new(n_nodes).edges.into_iter().filter(|e| e.i == node) {
        let cap = if edge.is_pairwise() { l2_max } else { l3_max };
        for harmonic in 1..=cap {
            for trig in [Trig::Sin, Trig::Cos] {
                entries.push(BasisId::Coupling { edge, harmonic, trig });
            }
        }
    }
    Ok(Dictionary { node, n_nodes, l2_max, l3_max, entries })
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Row-major `rows x cols` matrix of basis evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub node: usize,
    pub rows: usize,
    pub cols: usize,
    pub g: Vec<f64>,
}

impl DesignMatrix {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.g[m * self.cols..(m + 1) * self.cols]
    }

    pub fn get(&self, m: usize, c: usize) -> f64 {
        self.g[m * self.cols + c]
    }
}

/// Evaluates every basis of `dict` at samples `0..M` (the last sample has no target).
pub fn evaluate_design_matrix(traj: &Trajectory, dict: &Dictionary) -> Result<DesignMatrix> {
    if traj.n_nodes() != dict.n_nodes {
        return Err(Error::dimension(format!(
            "trajectory has {} nodes, dictionary expects {}",
            traj.n_nodes(),
            dict.n_nodes
        )));
    }
    let rows = traj.n_samples().saturating_sub(1);
    let cols = dict.len();
    let mut g = Vec::with_capacity(rows * cols);
    let mut x = vec![0.0; dict.n_nodes];
    for m in 0..rows {
        traj.state_at(m, &mut x);
        g.extend(dict.entries.iter().map(|b| b.eval(&x)));
    }
    Ok(DesignMatrix { node: dict.node, rows, cols, g })
}

/// Structural indicators: one bit per edge, phase-lag bits `d` (one vector shared
/// by all nodes, or one per node), and current harmonic orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StructureState {
    pub edges: Vec<bool>,
    pub d: Vec<[bool; 6]>,
    pub l2: u8,
    pub l3: u8,
}

/// Activation rule of one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Always,
    Gated { bit: usize, d_bit: Option<usize>, harmonic: Option<(HarmonicClass, u8)> },
}

/// Indicator layout of a whole model: which bits gate which columns of which node.
/// The oscillator network and the single-node phase-difference regression both map
/// onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub n_bits: usize,
    pub gates: Vec<Vec<Gate>>,
    pub bit_node: Vec<usize>,
    pub per_node_d: bool,
    /// d bits that are sampled; the others stay at their initial value.
    pub d_free: [bool; 6],
    pub l2_max: u8,
    pub l3_max: u8,
}

impl ModelLayout {
    /// Layout of the oscillator network at the given caps.
    pub fn network(n_nodes: usize, l2_max: u8, l3_max: u8, per_node_d: bool) -> Result<(Self, Vec<Dictionary>)> {
        let index = EdgeIndex::new(n_nodes);
        let dicts = (0..n_nodes)
            .map(|i| build_dictionary(n_nodes, i, l2_max, l3_max))
            .collect::<Result<Vec<_>>>()?;
        let gates = dicts
            .iter()
            .map(|dict| {
                dict.entries
                    .iter()
                    .map(|b| match b {
                        BasisId::Intrinsic => Gate::Always,
                        BasisId::Coupling { edge, harmonic, trig } => Gate::Gated {
                            bit: index.bit_of(edge).expect("dictionary edge is indexed"),
                            d_bit: Some(d_bit(edge.kind, *trig)),
                            harmonic: Some((edge.kind.class(), *harmonic)),
                        },
                    })
                    .collect()
            })
            .collect();
        let bit_node = index.edges.iter().map(|e| e.i).collect();
        let layout = ModelLayout {
            n_bits: index.len(),
            gates,
            bit_node,
            per_node_d,
            d_free: [true; 6],
            l2_max,
            l3_max,
        };
        Ok((layout, dicts))
    }

    /// Single-node layout with one indicator per column and no d or harmonic gating.
    pub fn one_bit_per_column(cols: usize) -> Self {
        ModelLayout {
            n_bits: cols,
            gates: vec![(0..cols).map(|c| Gate::Gated { bit: c, d_bit: None, harmonic: None }).collect()],
            bit_node: vec![0; cols],
            per_node_d: false,
            d_free: [false; 6],
            l2_max: 1,
            l3_max: 1,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.gates.len()
    }

    pub fn n_cols(&self, node: usize) -> usize {
        self.gates[node].len()
    }

    pub fn n_d_vectors(&self) -> usize {
        if self.per_node_d {
            self.n_nodes()
        } else {
            1
        }
    }

    pub fn d_index(&self, node: usize) -> usize {
        if self.per_node_d {
            node
        } else {
            0
        }
    }

    pub fn node_bits(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.bit_node.iter().enumerate().filter(move |(_, n)| **n == node).map(|(b, _)| b)
    }

    pub fn is_active(&self, node: usize, col: usize, s: &StructureState) -> bool {
        match self.gates[node][col] {
            Gate::Always => true,
            Gate::Gated { bit, d_bit, harmonic } => {
                s.edges[bit]
                    && d_bit.is_none_or(|db| s.d[self.d_index(node)][db])
                    && harmonic.is_none_or(|(class, l)| {
                        l <= match class {
                            HarmonicClass::Pairwise => s.l2,
                            HarmonicClass::ThreeBody => s.l3,
                        }
                    })
            }
        }
    }

    /// Ascending list of active columns of `node`.
    pub fn active_columns_into(&self, node: usize, s: &StructureState, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.n_cols(node)).filter(|&c| self.is_active(node, c, s)));
    }

    pub fn active_columns(&self, node: usize, s: &StructureState) -> Vec<usize> {
        let mut out = Vec::new();
        self.active_columns_into(node, s, &mut out);
        out
    }

    /// Column-level effective indicators of every node.
    pub fn effective_indicators(&self, s: &StructureState) -> Vec<Vec<bool>> {
        (0..self.n_nodes())
            .map(|i| (0..self.n_cols(i)).map(|c| self.is_active(i, c, s)).collect())
            .collect()
    }

    /// Columns of `node` gated by edge bit `bit`.
    pub fn columns_of_bit(&self, node: usize, bit: usize) -> impl Iterator<Item = usize> + '_ {
        self.gates[node]
            .iter()
            .enumerate()
            .filter(move |(_, g)| matches!(g, Gate::Gated { bit: b, .. } if *b == bit))
            .map(|(c, _)| c)
    }

    /// Columns of `node` gated by phase-lag bit `db`.
    pub fn columns_of_d(&self, node: usize, db: usize) -> impl Iterator<Item = usize> + '_ {
        self.gates[node]
            .iter()
            .enumerate()
            .filter(move |(_, g)| matches!(g, Gate::Gated { d_bit: Some(d), .. } if *d == db))
            .map(|(c, _)| c)
    }

    /// Columns of `node` at harmonic `l` of `class`.
    pub fn columns_of_harmonic(&self, node: usize, class: HarmonicClass, l: u8) -> impl Iterator<Item = usize> + '_ {
        self.gates[node]
            .iter()
            .enumerate()
            .filter(move |(_, g)| matches!(g, Gate::Gated { harmonic: Some((c, h)), .. } if *c == class && *h == l))
            .map(|(c, _)| c)
    }

    /// All-zero structure with every d bit set and harmonic orders at 1.
    pub fn empty_structure(&self) -> StructureState {
        StructureState { edges: vec![false; self.n_bits], d: vec![[true; 6]; self.n_d_vectors()], l2: 1, l3: 1 }
    }

    pub fn check_structure(&self, s: &StructureState) -> Result<()> {
        if s.edges.len() != self.n_bits || s.d.len() != self.n_d_vectors() {
            return Err(Error::dimension("structure does not match the model layout"));
        }
        if s.l2 == 0 || s.l2 > self.l2_max || s.l3 == 0 || s.l3 > self.l3_max {
            return Err(Error::invalid("harmonic order outside its support"));
        }
        Ok(())
    }
}
