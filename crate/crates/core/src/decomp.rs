//! Tree decompositions: the PACE `.td` format, validity checking, and elimination-ordering
//! heuristics.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::graph::Graph;

/// A tree of bags. Bags hold sorted 0-based vertex ids; tree edges are pairs of bag indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
    pub root: Option<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TdError {
    #[error("line {line}: malformed `s td` header `{text}`")]
    MalformedHeader { line: usize, text: String },
    #[error("line {line}: missing `s td` header")]
    MissingHeader { line: usize },
    #[error("line {line}: duplicate header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: expected an integer, found `{token}`")]
    NotAnInteger { line: usize, token: String },
    #[error("line {line}: bag index {index} out of range 1..={count}")]
    BagOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("line {line}: bag {index} declared twice")]
    DuplicateBag { line: usize, index: usize },
    #[error("line {line}: vertex {id} out of range 1..={n}")]
    VertexOutOfRange { line: usize, id: i64, n: usize },
    #[error("line {line}: bag {index} has {size} vertices, header allows {max}")]
    BagTooLarge {
        line: usize,
        index: usize,
        size: usize,
        max: usize,
    },
    #[error("tree edges do not form a tree over {bags} bags")]
    NotATree { bags: usize },
    #[error("line {line}: unexpected line `{text}`")]
    Unexpected { line: usize, text: String },
}

/// One violated decomposition condition, with a witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A bag names a vertex the graph does not have.
    UnknownVertex {
        bag: usize,
        vertex: usize,
    },
    /// (T1) the vertex appears in no bag.
    VertexUncovered(usize),
    /// (T2) no bag contains both endpoints.
    EdgeUncovered(usize, usize),
    /// (T3) the bags containing the vertex are not connected in the tree.
    Disconnected(usize),
    /// The bag graph is not a tree.
    NotATree,
    RootOutOfRange(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownVertex { bag, vertex } => {
                write!(f, "bag {} contains unknown vertex {}", bag + 1, vertex + 1)
            }
            Violation::VertexUncovered(v) => write!(f, "vertex {} is in no bag", v + 1),
            Violation::EdgeUncovered(u, v) => {
                write!(f, "edge {} {} is in no bag", u + 1, v + 1)
            }
            Violation::Disconnected(v) => {
                write!(f, "bags containing vertex {} are not connected", v + 1)
            }
            Violation::NotATree => write!(f, "bag graph is not a tree"),
            Violation::RootOutOfRange(r) => write!(f, "root bag {} does not exist", r + 1),
        }
    }
}

impl TreeDecomposition {
    /// Maximum bag size minus one; `-1` when every bag is empty or there are no bags.
    pub fn width(&self) -> isize {
        self.max_bag_size() as isize - 1
    }

    pub fn max_bag_size(&self) -> usize {
        self.bags.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn root_or_default(&self) -> usize {
        self.root.unwrap_or(0)
    }

    /// Tree adjacency lists over bag indices.
    pub fn tree_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.bags.len()];
        for &(a, b) in &self.edges {
            if a < self.bags.len() && b < self.bags.len() {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_tree(&self) -> bool {
        is_tree(self.bags.len(), &self.edges)
    }

    /// Bags sorted, tree edges normalised to `(min, max)` and sorted.
    pub fn canonicalize(&mut self) {
        for bag in &mut self.bags {
            bag.sort_unstable();
            bag.dedup();
        }
        for e in &mut self.edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        self.edges.sort_unstable();
    }
}

fn is_tree(nodes: usize, edges: &[(usize, usize)]) -> bool {
    if nodes == 0 {
        return edges.is_empty();
    }
    if edges.len() != nodes - 1 {
        return false;
    }
    let mut adj = vec![Vec::new(); nodes];
    for &(a, b) in edges {
        if a >= nodes || b >= nodes || a == b {
            return false;
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count == nodes
}

fn int(token: &str, line: usize) -> Result<i64, TdError> {
    token.parse::<i64>().map_err(|_| TdError::NotAnInteger {
        line,
        token: token.to_string(),
    })
}

/// Parses a PACE `.td` document. A comment `c root <i>` selects the root bag.
pub fn parse_td(text: &str) -> Result<TreeDecomposition, TdError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut bags: Vec<Option<Vec<usize>>> = Vec::new();
    let mut edges = Vec::new();
    let mut root = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match tokens[0] {
            "c" => {
                if tokens.len() == 3 && tokens[1] == "root" {
                    let r = int(tokens[2], line)?;
                    let count = bags.len();
                    if header.is_some() && (r < 1 || r as usize > count) {
                        return Err(TdError::BagOutOfRange {
                            line,
                            index: r,
                            count,
                        });
                    }
                    root = Some((r.max(1) - 1) as usize);
                }
            }
            "s" => {
                if header.is_some() {
                    return Err(TdError::DuplicateHeader { line });
                }
                let bad = || TdError::MalformedHeader {
                    line,
                    text: trimmed.to_string(),
                };
                if tokens.len() != 5 || tokens[1] != "td" {
                    return Err(bad());
                }
                let nums = tokens[2..]
                    .iter()
                    .map(|t| int(t, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if nums.iter().any(|&x| x < 0) {
                    return Err(bad());
                }
                header = Some((nums[0] as usize, nums[1] as usize, nums[2] as usize));
                bags = vec![None; nums[0] as usize];
            }
            "b" => {
                let (count, max, n) = header.ok_or(TdError::MissingHeader { line })?;
                if tokens.len() < 2 {
                    return Err(TdError::Unexpected {
                        line,
                        text: trimmed.to_string(),
                    });
                }
                let index = int(tokens[1], line)?;
                if index < 1 || index as usize > count {
                    return Err(TdError::BagOutOfRange { line, index, count });
                }
                let index = index as usize - 1;
                if bags[index].is_some() {
                    return Err(TdError::DuplicateBag {
                        line,
                        index: index + 1,
                    });
                }
                let mut bag = Vec::with_capacity(tokens.len() - 2);
                for t in &tokens[2..] {
                    let id = int(t, line)?;
                    if id < 1 || id as usize > n {
                        return Err(TdError::VertexOutOfRange { line, id, n });
                    }
                    bag.push(id as usize - 1);
                }
                bag.sort_unstable();
                bag.dedup();
                if bag.len() > max {
                    return Err(TdError::BagTooLarge {
                        line,
                        index: index + 1,
                        size: bag.len(),
                        max,
                    });
                }
                bags[index] = Some(bag);
            }
            _ => {
                let (count, _, _) = header.ok_or(TdError::MissingHeader { line })?;
                if tokens.len() != 2 {
                    return Err(TdError::Unexpected {
                        line,
                        text: trimmed.to_string(),
                    });
                }
                let mut ends = [0usize; 2];
                for (slot, t) in ends.iter_mut().zip(&tokens) {
                    let index = int(t, line)?;
                    if index < 1 || index as usize > count {
                        return Err(TdError::BagOutOfRange { line, index, count });
                    }
                    *slot = index as usize - 1;
                }
                edges.push((ends[0], ends[1]));
            }
        }
    }
    if header.is_none() {
        return Err(TdError::MissingHeader {
            line: text.lines().count().max(1),
        });
    }
    let bags: Vec<Vec<usize>> = bags.into_iter().map(Option::unwrap_or_default).collect();
    if !is_tree(bags.len(), &edges) {
        return Err(TdError::NotATree { bags: bags.len() });
    }
    if let Some(r) = root {
        if r >= bags.len() {
            return Err(TdError::BagOutOfRange {
                line: 0,
                index: r as i64 + 1,
                count: bags.len(),
            });
        }
    }
    let mut td = TreeDecomposition { bags, edges, root };
    td.canonicalize();
    Ok(td)
}

/// Writes the canonical `.td` text for a decomposition of a graph with `n` vertices.
pub fn write_td(td: &TreeDecomposition, n: usize) -> String {
    let mut td = td.clone();
    td.canonicalize();
    let mut out = format!("s td {} {} {}\n", td.bags.len(), td.max_bag_size(), n);
    if let Some(r) = td.root.filter(|&r| r != 0) {
        let _ = writeln!(out, "c root {}", r + 1);
    }
    for (i, bag) in td.bags.iter().enumerate() {
        let _ = write!(out, "b {}", i + 1);
        for v in bag {
            let _ = write!(out, " {}", v + 1);
        }
        out.push('\n');
    }
    for &(a, b) in &td.edges {
        let _ = writeln!(out, "{} {}", a + 1, b + 1);
    }
    out
}

/// Checks the three decomposition conditions plus tree shape. An empty result means valid.
pub fn validate(g: &Graph, td: &TreeDecomposition) -> Vec<Violation> {
    let n = g.vertex_count();
    let mut violations = Vec::new();
    if !td.is_tree() {
        violations.push(Violation::NotATree);
    }
    if let Some(r) = td.root {
        if r >= td.bags.len() {
            violations.push(Violation::RootOutOfRange(r));
        }
    }
    let mut occurrences: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (b, bag) in td.bags.iter().enumerate() {
        for &v in bag {
            if v >= n {
                violations.push(Violation::UnknownVertex { bag: b, vertex: v });
            } else {
                occurrences[v].push(b);
            }
        }
    }
    for (v, occ) in occurrences.iter().enumerate() {
        if occ.is_empty() {
            violations.push(Violation::VertexUncovered(v));
        }
    }
    let sets: Vec<BTreeSet<usize>> = td
        .bags
        .iter()
        .map(|b| b.iter().copied().collect())
        .collect();
    for &(u, v) in g.edges() {
        let covered = occurrences[u].iter().any(|&b| sets[b].contains(&v));
        if !covered {
            violations.push(Violation::EdgeUncovered(u, v));
        }
    }
    let adj = td.tree_adjacency();
    let mut mark = vec![usize::MAX; td.bags.len()];
    for (v, occ) in occurrences.iter().enumerate() {
        if occ.len() < 2 {
            continue;
        }
        for &b in occ {
            mark[b] = v;
        }
        let mut seen = BTreeSet::from([occ[0]]);
        let mut queue = VecDeque::from([occ[0]]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if mark[y] == v && seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        if seen.len() != occ.len() {
            violations.push(Violation::Disconnected(v));
        }
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    MinFill,
    MinDegree,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-fill" => Ok(Strategy::MinFill),
            "min-degree" => Ok(Strategy::MinDegree),
            other => Err(format!(
                "unknown strategy `{other}` (expected min-fill or min-degree)"
            )),
        }
    }
}

/// Greedy elimination ordering; ties go to the smallest vertex id.
pub fn elimination_ordering(g: &Graph, strategy: Strategy) -> Vec<usize> {
    let n = g.vertex_count();
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| g.neighbors(v).iter().copied().collect())
        .collect();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| match strategy {
                Strategy::MinDegree => (adj[v].len(), v),
                Strategy::MinFill => (fill_in(&adj, v), v),
            })
            .expect("a live vertex remains");
        let nbrs: Vec<usize> = adj[pick].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            adj[a].remove(&pick);
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        adj[pick].clear();
        alive[pick] = false;
        order.push(pick);
    }
    order
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        for &b in &nbrs[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}

/// Builds a decomposition from an elimination ordering: one bag per vertex holding the vertex
/// and its neighbors at elimination time, attached to the bag of the earliest-eliminated later
/// neighbor. Component roots are attached to bag 0.
pub fn decompose_with_ordering(g: &Graph, order: &[usize]) -> TreeDecomposition {
    let n = g.vertex_count();
    if n == 0 {
        return TreeDecomposition {
            bags: vec![Vec::new()],
            edges: Vec::new(),
            root: None,
        };
    }
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| g.neighbors(v).iter().copied().collect())
        .collect();
    let mut bags = Vec::with_capacity(n);
    let mut parent: Vec<Option<usize>> = Vec::with_capacity(n);
    for (i, &v) in order.iter().enumerate() {
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        let mut bag = nbrs.clone();
        bag.push(v);
        bag.sort_unstable();
        bags.push(bag);
        parent.push(nbrs.iter().map(|&w| position[w]).min());
        debug_assert!(nbrs.iter().all(|&w| position[w] > i));
        for (j, &a) in nbrs.iter().enumerate() {
            adj[a].remove(&v);
            for &b in &nbrs[j + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut roots = Vec::new();
    for (i, p) in parent.iter().enumerate() {
        match p {
            Some(p) => edges.push((i, *p)),
            None => roots.push(i),
        }
    }
    let mut top = 0;
    while let Some(p) = parent[top] {
        top = p;
    }
    for r in roots {
        if r != top {
            edges.push((0, r));
        }
    }
    let mut td = TreeDecomposition {
        bags,
        edges,
        root: None,
    };
    td.canonicalize();
    td
}

pub fn heuristic_decompose(g: &Graph, strategy: Strategy) -> TreeDecomposition {
    decompose_with_ordering(g, &elimination_ordering(g, strategy))
}
