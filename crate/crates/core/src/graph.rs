//! Undirected simple graphs, the PACE `.gr` format, and per-variable weights.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: missing `p tw <n> <m>` header")]
    MissingHeader { line: usize },
    #[error("line {line}: duplicate header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: malformed header `{text}`")]
    MalformedHeader { line: usize, text: String },
    #[error("line {line}: expected an integer, found `{token}`")]
    NotAnInteger { line: usize, token: String },
    #[error("line {line}: vertex {id} out of range 1..={n}")]
    VertexOutOfRange { line: usize, id: i64, n: usize },
    #[error("line {line}: self-loop on vertex {id}")]
    SelfLoop { line: usize, id: usize },
    #[error("line {line}: expected exactly two vertices per edge line")]
    MalformedEdge { line: usize },
}

/// An undirected simple graph over the dense vertex ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    labels: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Graph on `n` isolated vertices labelled `1..=n`.
    pub fn empty(n: usize) -> Self {
        Graph {
            labels: (1..=n).map(|i| i.to_string()).collect(),
            adjacency: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    /// Builds a graph from 0-based edge pairs. Duplicates are collapsed; self-loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Graph::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::VertexOutOfRange {
                    line: 0,
                    id: u.max(v) as i64 + 1,
                    n,
                });
            }
            if u == v {
                return Err(GraphError::SelfLoop { line: 0, id: u + 1 });
            }
            g.insert_edge(u, v);
        }
        g.finish();
        Ok(g)
    }

    fn insert_edge(&mut self, u: usize, v: usize) -> bool {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        if self.adjacency[a].contains(&b) {
            return false;
        }
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
        self.edges.push((a, b));
        true
    }

    fn finish(&mut self) {
        for list in &mut self.adjacency {
            list.sort_unstable();
        }
        self.edges.sort_unstable();
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.vertex_count() && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn isolated_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| self.degree(v) == 0)
            .collect()
    }
}

/// Result of parsing a `.gr` document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGraph {
    pub graph: Graph,
    /// Number of edge lines that repeated an earlier edge.
    pub duplicate_edges: usize,
}

fn parse_int(token: &str, line: usize) -> Result<i64, GraphError> {
    token.parse::<i64>().map_err(|_| GraphError::NotAnInteger {
        line,
        token: token.to_string(),
    })
}

/// Parses a PACE `.gr` document, reporting how many duplicate edges were collapsed.
pub fn parse_graph_report(text: &str) -> Result<ParsedGraph, GraphError> {
    let mut graph: Option<Graph> = None;
    let mut duplicate_edges = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens[0] == "p" {
            if graph.is_some() {
                return Err(GraphError::DuplicateHeader { line });
            }
            if tokens.len() != 4 || tokens[1] != "tw" {
                return Err(GraphError::MalformedHeader {
                    line,
                    text: trimmed.to_string(),
                });
            }
            let n = parse_int(tokens[2], line)?;
            parse_int(tokens[3], line)?;
            if n < 0 {
                return Err(GraphError::MalformedHeader {
                    line,
                    text: trimmed.to_string(),
                });
            }
            graph = Some(Graph::empty(n as usize));
            continue;
        }
        let g = graph.as_mut().ok_or(GraphError::MissingHeader { line })?;
        if tokens.len() != 2 {
            // still report bad tokens first so the message points at the real problem
            for t in &tokens {
                parse_int(t, line)?;
            }
            return Err(GraphError::MalformedEdge { line });
        }
        let n = g.vertex_count();
        let mut ends = [0usize; 2];
        for (slot, t) in ends.iter_mut().zip(&tokens) {
            let id = parse_int(t, line)?;
            if id < 1 || id as usize > n {
                return Err(GraphError::VertexOutOfRange { line, id, n });
            }
            *slot = id as usize - 1;
        }
        if ends[0] == ends[1] {
            return Err(GraphError::SelfLoop {
                line,
                id: ends[0] + 1,
            });
        }
        if !g.insert_edge(ends[0], ends[1]) {
            duplicate_edges += 1;
        }
    }
    let mut graph = graph.ok_or(GraphError::MissingHeader {
        line: text.lines().count().max(1),
    })?;
    graph.finish();
    Ok(ParsedGraph {
        graph,
        duplicate_edges,
    })
}

pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    parse_graph_report(text).map(|p| p.graph)
}

/// Canonical `.gr` text: header followed by the sorted edge list, 1-based.
pub fn write_graph(g: &Graph) -> String {
    let mut out = format!("p tw {} {}\n", g.vertex_count(), g.edge_count());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{} {}", u + 1, v + 1);
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WeightError {
    #[error("line {line}: unrecognised weight line `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: `{token}` is not an integer")]
    NotAnInteger { line: usize, token: String },
    #[error("weight for variable {var} references vertex {vertex}, graph has {n} vertices")]
    VertexOutOfRange {
        var: String,
        vertex: usize,
        n: usize,
    },
    #[error("weights given for `{0}`, which is not a free variable of the formula")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct VariableWeights {
    default: i64,
    overrides: HashMap<usize, i64>,
}

impl Default for VariableWeights {
    fn default() -> Self {
        VariableWeights {
            default: 1,
            overrides: HashMap::new(),
        }
    }
}

/// Weight functions for free variables. Unlisted variables weigh 1 everywhere.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightMap {
    vars: HashMap<String, VariableWeights>,
}

impl WeightMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_default(&mut self, var: &str, weight: i64) {
        self.vars.entry(var.to_string()).or_default().default = weight;
    }

    /// Sets the weight of the 0-based vertex `v` for `var`.
    pub fn set(&mut self, var: &str, v: usize, weight: i64) {
        self.vars
            .entry(var.to_string())
            .or_default()
            .overrides
            .insert(v, weight);
    }

    pub fn weight(&self, var: &str, v: usize) -> i64 {
        match self.vars.get(var) {
            Some(w) => w.overrides.get(&v).copied().unwrap_or(w.default),
            None => 1,
        }
    }

    /// Names with an explicit weight entry, in no particular order.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: i64) -> WeightMap {
        let vars = self
            .vars
            .iter()
            .map(|(name, w)| {
                let scaled = VariableWeights {
                    default: w.default * factor,
                    overrides: w.overrides.iter().map(|(&v, &x)| (v, x * factor)).collect(),
                };
                (name.clone(), scaled)
            })
            .collect();
        WeightMap { vars }
    }

    /// Checks that every vertex referenced by an override exists in `g`.
    pub fn check_against(&self, g: &Graph) -> Result<(), WeightError> {
        let n = g.vertex_count();
        for (var, w) in &self.vars {
            if let Some(&v) = w.overrides.keys().find(|&&v| v >= n) {
                return Err(WeightError::VertexOutOfRange {
                    var: var.clone(),
                    vertex: v + 1,
                    n,
                });
            }
        }
        Ok(())
    }
}

/// Parses the weight document: lines `<var> <vertex> <weight>` (vertex ids 1-based, as in
/// `.gr` files) and `default <var> <weight>`. Blank lines and `c`/`#` comments are skipped.
pub fn parse_weights(text: &str) -> Result<WeightMap, WeightError> {
    let mut map = WeightMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty()
            || trimmed.starts_with('#')
            || trimmed == "c"
            || trimmed.starts_with("c ")
        {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let int = |token: &str| {
            token.parse::<i64>().map_err(|_| WeightError::NotAnInteger {
                line,
                token: token.to_string(),
            })
        };
        let syntax = || WeightError::Syntax {
            line,
            text: trimmed.to_string(),
        };
        match tokens.as_slice() {
            ["default", var, w] => map.set_default(var, int(w)?),
            [var, v, w] if is_identifier(var) => {
                let v = int(v)?;
                if v < 1 {
                    return Err(syntax());
                }
                map.set(var, v as usize - 1, int(w)?);
            }
            _ => return Err(syntax()),
        }
    }
    Ok(map)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
