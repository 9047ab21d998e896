//! Very nice tree decompositions: leaf, introduce, forget, join and edge nodes, plus the
//! tree-index that gives every vertex a slot no co-bagged vertex shares.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::decomp::{validate, TreeDecomposition, Violation};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Leaf,
    Introduce(usize),
    Forget(usize),
    Join,
    Edge(usize, usize),
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Leaf => "leaf",
            NodeKind::Introduce(_) => "introduce",
            NodeKind::Forget(_) => "forget",
            NodeKind::Join => "join",
            NodeKind::Edge(..) => "edge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// Sorted vertex ids.
    pub bag: Vec<usize>,
    pub children: Vec<usize>,
}

/// Maps each vertex to its slot in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreeIndex(Vec<usize>);

impl TreeIndex {
    pub fn new(slots: Vec<usize>) -> Self {
        TreeIndex(slots)
    }

    #[inline]
    pub fn slot(&self, v: usize) -> usize {
        self.0[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// A rooted very nice tree decomposition. Children always have smaller node ids than their
/// parent, so ascending id order is a valid bottom-up order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VeryNiceTd {
    pub nodes: Vec<Node>,
    pub root: usize,
    pub tree_index: TreeIndex,
    /// Maximum bag size.
    pub k: usize,
}

impl VeryNiceTd {
    pub fn width(&self) -> isize {
        self.k as isize - 1
    }

    pub fn count(&self, pred: impl Fn(&NodeKind) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.kind)).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NicifyError {
    #[error("input decomposition is invalid: {}", list(.0))]
    InvalidDecomposition(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

struct Builder<'g> {
    g: &'g Graph,
    nodes: Vec<Node>,
    edge_placed: Vec<bool>,
}

impl Builder<'_> {
    fn push(&mut self, kind: NodeKind, bag: Vec<usize>, children: Vec<usize>) -> usize {
        self.nodes.push(Node {
            kind,
            bag,
            children,
        });
        self.nodes.len() - 1
    }

    /// Places edge nodes for the still-unplaced edges of `v` and then forgets `v`.
    fn forget(&mut self, mut top: usize, v: usize) -> usize {
        let bag = self.nodes[top].bag.clone();
        for &w in self.g.neighbors(v) {
            if bag.binary_search(&w).is_err() {
                continue;
            }
            let e = edge_id(self.g, v, w);
            if !self.edge_placed[e] {
                self.edge_placed[e] = true;
                let (a, b) = if v < w { (v, w) } else { (w, v) };
                top = self.push(NodeKind::Edge(a, b), bag.clone(), vec![top]);
            }
        }
        let smaller: Vec<usize> = bag.iter().copied().filter(|&x| x != v).collect();
        self.push(NodeKind::Forget(v), smaller, vec![top])
    }

    fn introduce(&mut self, top: usize, v: usize) -> usize {
        let mut bag = self.nodes[top].bag.clone();
        let pos = bag.binary_search(&v).unwrap_err();
        bag.insert(pos, v);
        self.push(NodeKind::Introduce(v), bag, vec![top])
    }

    /// Forget chain then introduce chain from the current top's bag to `target`.
    fn adapt(&mut self, mut top: usize, target: &[usize]) -> usize {
        let current = self.nodes[top].bag.clone();
        for &v in &current {
            if target.binary_search(&v).is_err() {
                top = self.forget(top, v);
            }
        }
        for &v in target {
            if current.binary_search(&v).is_err() {
                top = self.introduce(top, v);
            }
        }
        top
    }
}

fn edge_id(g: &Graph, u: usize, v: usize) -> usize {
    let key = if u < v { (u, v) } else { (v, u) };
    g.edges().binary_search(&key).expect("edge of the graph")
}

/// Turns a valid rooted decomposition into a very nice one of the same width.
///
/// Edge nodes for `{u, v}` sit directly below the forget node of whichever endpoint is
/// forgotten first, so every edge of a vertex has been seen before the vertex leaves the bag.
pub fn make_very_nice(td: &TreeDecomposition, g: &Graph) -> Result<VeryNiceTd, NicifyError> {
    let violations = validate(g, td);
    if !violations.is_empty() {
        return Err(NicifyError::InvalidDecomposition(violations));
    }
    let mut b = Builder {
        g,
        nodes: Vec::new(),
        edge_placed: vec![false; g.edge_count()],
    };
    let k = td.max_bag_size();
    if td.bags.is_empty() {
        let root = b.push(NodeKind::Leaf, Vec::new(), Vec::new());
        return Ok(finish(b.nodes, root, g.vertex_count(), k));
    }

    let root_bag = td.root_or_default();
    let adj = td.tree_adjacency();
    // iterative DFS for a parent-before-child order
    let mut order = Vec::with_capacity(td.bags.len());
    let mut parent = vec![usize::MAX; td.bags.len()];
    let mut stack = vec![root_bag];
    parent[root_bag] = root_bag;
    while let Some(x) = stack.pop() {
        order.push(x);
        for &y in adj[x].iter().rev() {
            if parent[y] == usize::MAX {
                parent[y] = x;
                stack.push(y);
            }
        }
    }
    let mut top_of = vec![usize::MAX; td.bags.len()];
    for &x in order.iter().rev() {
        let bag = &td.bags[x];
        let children: Vec<usize> = adj[x]
            .iter()
            .copied()
            .filter(|&y| parent[y] == x && y != x)
            .collect();
        let mut acc: Option<usize> = None;
        if children.is_empty() {
            let leaf = b.push(NodeKind::Leaf, Vec::new(), Vec::new());
            acc = Some(b.adapt(leaf, bag));
        }
        for c in children {
            let adapted = b.adapt(top_of[c], bag);
            acc = Some(match acc {
                None => adapted,
                Some(left) => b.push(NodeKind::Join, bag.clone(), vec![left, adapted]),
            });
        }
        top_of[x] = acc.expect("every bag yields a node");
    }
    let root = b.adapt(top_of[root_bag], &[]);
    debug_assert!(b.edge_placed.iter().all(|&p| p));
    Ok(finish(b.nodes, root, g.vertex_count(), k))
}

fn finish(nodes: Vec<Node>, root: usize, n: usize, k: usize) -> VeryNiceTd {
    let mut td = VeryNiceTd {
        nodes,
        root,
        tree_index: TreeIndex::default(),
        k,
    };
    td.tree_index = compute_tree_index(&td, n);
    td
}

/// Assigns slots top-down: a vertex gets the smallest slot not held by the rest of the bag at
/// its forget node. Vertices that are never forgotten get slot 0.
pub fn compute_tree_index(td: &VeryNiceTd, n: usize) -> TreeIndex {
    let mut slots = vec![usize::MAX; n];
    // parents have larger ids than their children
    for node in td.nodes.iter().rev() {
        if let NodeKind::Forget(v) = node.kind {
            if v >= n || slots[v] != usize::MAX {
                continue;
            }
            let used: BTreeSet<usize> = node
                .bag
                .iter()
                .filter(|&&w| w < n && slots[w] != usize::MAX)
                .map(|&w| slots[w])
                .collect();
            slots[v] = (0..).find(|s| !used.contains(s)).unwrap();
        }
    }
    for s in &mut slots {
        if *s == usize::MAX {
            *s = 0;
        }
    }
    TreeIndex(slots)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NiceViolation {
    BadRoot(usize),
    /// Node ids must decrease towards the leaves.
    BadOrder(usize),
    UnreachableNode(usize),
    Leaf(usize),
    Introduce(usize),
    Forget(usize),
    Join(usize),
    Edge(usize),
    UnsortedBag(usize),
    RootBagNotEmpty,
    EdgeCount {
        edge: (usize, usize),
        count: usize,
    },
    ForgetCount {
        vertex: usize,
        count: usize,
    },
    TreeIndexCollision {
        node: usize,
    },
    TreeIndexOutOfRange {
        vertex: usize,
    },
    BagTooLarge {
        node: usize,
    },
    UnknownVertex {
        node: usize,
        vertex: usize,
    },
}

impl fmt::Display for NiceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Checks every very-nice invariant against `g`. An empty result means valid.
pub fn validate_very_nice(td: &VeryNiceTd, g: &Graph) -> Vec<NiceViolation> {
    let mut out = Vec::new();
    let n = g.vertex_count();
    if td.root >= td.nodes.len() {
        out.push(NiceViolation::BadRoot(td.root));
        return out;
    }
    if !td.nodes[td.root].bag.is_empty() {
        out.push(NiceViolation::RootBagNotEmpty);
    }
    for (i, node) in td.nodes.iter().enumerate() {
        if let Some(&v) = node.bag.iter().find(|&&v| v >= n) {
            out.push(NiceViolation::UnknownVertex { node: i, vertex: v });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let mut reached = vec![false; td.nodes.len()];
    let mut stack = vec![td.root];
    reached[td.root] = true;
    while let Some(x) = stack.pop() {
        for &c in &td.nodes[x].children {
            if c >= x {
                out.push(NiceViolation::BadOrder(x));
                continue;
            }
            if !reached[c] {
                reached[c] = true;
                stack.push(c);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r {
            out.push(NiceViolation::UnreachableNode(i));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let mut edge_count = vec![0usize; g.edge_count()];
    let mut forget_count = vec![0usize; n];
    for (i, node) in td.nodes.iter().enumerate() {
        let bag = &node.bag;
        if bag.windows(2).any(|w| w[0] >= w[1]) || bag.iter().any(|&v| v >= n) {
            out.push(NiceViolation::UnsortedBag(i));
            continue;
        }
        if bag.len() > td.k {
            out.push(NiceViolation::BagTooLarge { node: i });
        }
        let child_bag = |j: usize| &td.nodes[node.children[j]].bag;
        let ok = match node.kind {
            NodeKind::Leaf => node.children.is_empty() && bag.is_empty(),
            NodeKind::Introduce(v) => {
                node.children.len() == 1 && {
                    let c = child_bag(0);
                    c.binary_search(&v).is_err()
                        && bag.len() == c.len() + 1
                        && bag.iter().filter(|&&x| x != v).eq(c.iter())
                }
            }
            NodeKind::Forget(v) => {
                if v < n {
                    forget_count[v] += 1;
                }
                node.children.len() == 1 && {
                    let c = child_bag(0);
                    bag.binary_search(&v).is_err()
                        && c.len() == bag.len() + 1
                        && c.iter().filter(|&&x| x != v).eq(bag.iter())
                }
            }
            NodeKind::Join => {
                node.children.len() == 2 && child_bag(0) == bag && child_bag(1) == bag
            }
            NodeKind::Edge(u, v) => {
                let real = u < v && g.has_edge(u, v);
                if real {
                    edge_count[edge_id(g, u, v)] += 1;
                }
                real && node.children.len() == 1
                    && child_bag(0) == bag
                    && bag.binary_search(&u).is_ok()
                    && bag.binary_search(&v).is_ok()
            }
        };
        if !ok {
            out.push(match node.kind {
                NodeKind::Leaf => NiceViolation::Leaf(i),
                NodeKind::Introduce(_) => NiceViolation::Introduce(i),
                NodeKind::Forget(_) => NiceViolation::Forget(i),
                NodeKind::Join => NiceViolation::Join(i),
                NodeKind::Edge(..) => NiceViolation::Edge(i),
            });
        }
        if node.children.is_empty() && node.kind != NodeKind::Leaf {
            out.push(NiceViolation::Leaf(i));
        }
    }
    for (e, &count) in edge_count.iter().enumerate() {
        if count != 1 {
            out.push(NiceViolation::EdgeCount {
                edge: g.edges()[e],
                count,
            });
        }
    }
    for (v, &count) in forget_count.iter().enumerate() {
        if count != 1 {
            out.push(NiceViolation::ForgetCount { vertex: v, count });
        }
    }
    let index = td.tree_index.as_slice();
    if index.len() != n {
        out.push(NiceViolation::TreeIndexOutOfRange {
            vertex: index.len(),
        });
        return out;
    }
    for (v, &s) in index.iter().enumerate() {
        if s >= td.k.max(1) {
            out.push(NiceViolation::TreeIndexOutOfRange { vertex: v });
        }
    }
    for (i, node) in td.nodes.iter().enumerate() {
        let slots: BTreeSet<usize> = node.bag.iter().map(|&v| index[v]).collect();
        if slots.len() != node.bag.len() {
            out.push(NiceViolation::TreeIndexCollision { node: i });
        }
    }
    out
}

/// Annotated `.td` text: 1-based node ids, one `c label` line per node, the tree-index as
/// `c index` lines, then a plain PACE body so the output also parses as a decomposition.
pub fn write_annotated(td: &VeryNiceTd, n: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "c very nice tree decomposition");
    let _ = writeln!(out, "c root {}", td.root + 1);
    for (i, node) in td.nodes.iter().enumerate() {
        let _ = write!(out, "c label {} {}", i + 1, node.kind.name());
        match node.kind {
            NodeKind::Introduce(v) | NodeKind::Forget(v) => {
                let _ = write!(out, " {}", v + 1);
            }
            NodeKind::Edge(u, v) => {
                let _ = write!(out, " {} {}", u + 1, v + 1);
            }
            NodeKind::Leaf | NodeKind::Join => {}
        }
        out.push('\n');
    }
    for (v, s) in td.tree_index.as_slice().iter().enumerate() {
        let _ = writeln!(out, "c index {} {}", v + 1, s);
    }
    let _ = writeln!(out, "s td {} {} {}", td.nodes.len(), td.k, n);
    for (i, node) in td.nodes.iter().enumerate() {
        let _ = write!(out, "b {}", i + 1);
        for v in &node.bag {
            let _ = write!(out, " {}", v + 1);
        }
        out.push('\n');
    }
    for (i, node) in td.nodes.iter().enumerate() {
        for &c in &node.children {
            let _ = writeln!(out, "{} {}", i + 1, c + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{heuristic_decompose, parse_td, Strategy};

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn single_bag_triangle_is_a_chain() {
        let td = parse_td("s td 1 3 3\nb 1 1 2 3\n").unwrap();
        let nice = make_very_nice(&td, &k3()).unwrap();
        assert!(validate_very_nice(&nice, &k3()).is_empty());
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Leaf)), 1);
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Introduce(_))), 3);
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Edge(..))), 3);
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Forget(_))), 3);
        assert_eq!(nice.nodes.len(), 10);
        assert_eq!(nice.k, 3);
        let mut slots = nice.tree_index.as_slice().to_vec();
        slots.sort_unstable();
        assert_eq!(slots, vec![0, 1, 2]);
    }

    #[test]
    fn path_decomposition_of_p3() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let td = parse_td("s td 2 2 3\nb 1 1 2\nb 2 2 3\n1 2\n").unwrap();
        let nice = make_very_nice(&td, &g).unwrap();
        assert!(validate_very_nice(&nice, &g).is_empty());
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Edge(..))), 2);
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Join)), 0);
        assert_eq!(nice.width(), 1);
    }

    #[test]
    fn star_decomposition_binarizes_joins() {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let td = parse_td("s td 4 2 4\nb 1 1\nb 2 1 2\nb 3 1 3\nb 4 1 4\n1 2\n1 3\n1 4\n").unwrap();
        let nice = make_very_nice(&td, &g).unwrap();
        assert!(validate_very_nice(&nice, &g).is_empty());
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Join)), 2);
        assert_eq!(nice.count(|k| matches!(k, NodeKind::Forget(_))), 4);
    }

    #[test]
    fn rejects_invalid_input() {
        let td = parse_td("s td 2 2 3\nb 1 1 2\nb 2 2 3\n1 2\n").unwrap();
        assert!(matches!(
            make_very_nice(&td, &k3()),
            Err(NicifyError::InvalidDecomposition(_))
        ));
    }

    #[test]
    fn detects_broken_joins_and_missing_edges() {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let td = heuristic_decompose(&g, Strategy::MinDegree);
        let nice = make_very_nice(&td, &g).unwrap();
        let join = nice
            .nodes
            .iter()
            .position(|n| n.kind == NodeKind::Join)
            .unwrap();
        let mut broken = nice.clone();
        let left = broken.nodes[join].children[0];
        broken.nodes[left].bag.push(99);
        assert!(!validate_very_nice(&broken, &g).is_empty());

        let edge = nice
            .nodes
            .iter()
            .position(|n| matches!(n.kind, NodeKind::Edge(..)))
            .unwrap();
        let mut broken = nice.clone();
        let NodeKind::Edge(u, v) = broken.nodes[edge].kind else {
            unreachable!()
        };
        let other = *g.edges().iter().find(|&&e| e != (u, v)).unwrap();
        broken.nodes[edge].kind = NodeKind::Edge(other.0, other.1);
        let v = validate_very_nice(&broken, &g);
        assert!(v
            .iter()
            .any(|x| matches!(x, NiceViolation::EdgeCount { count: 0, .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, NiceViolation::EdgeCount { count: 2, .. })));
    }

    #[test]
    fn empty_graph() {
        let g = Graph::empty(0);
        let td = heuristic_decompose(&g, Strategy::MinFill);
        let nice = make_very_nice(&td, &g).unwrap();
        assert_eq!(nice.nodes.len(), 1);
        assert_eq!(nice.nodes[0].kind, NodeKind::Leaf);
        assert!(validate_very_nice(&nice, &g).is_empty());
    }

    #[test]
    fn annotated_output_parses_as_plain_td() {
        let g = k3();
        let td = heuristic_decompose(&g, Strategy::MinFill);
        let nice = make_very_nice(&td, &g).unwrap();
        let text = write_annotated(&nice, 3);
        assert!(text.contains("c label 1 leaf"));
        let plain = parse_td(&text).unwrap();
        assert!(validate(&g, &plain).is_empty());
        assert_eq!(plain.root, Some(nice.root));
    }
}
