use std::collections::BTreeMap;

use serde::Serialize;
use treedp::checker::{CheckError, CheckResult};
use treedp::engine::EngineError;
use treedp::graph::Graph;
use treedp::nicify::{NodeKind, VeryNiceTd};

#[derive(Debug, Default, Clone, Serialize)]
pub struct Timing {
    pub decompose_ms: f64,
    pub nicify_ms: f64,
    pub check_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct NodeCounts {
    pub leaf: usize,
    pub introduce: usize,
    pub forget: usize,
    pub join: usize,
    pub edge: usize,
}

impl NodeCounts {
    pub fn of(td: &VeryNiceTd) -> Self {
        NodeCounts {
            leaf: td.count(|k| matches!(k, NodeKind::Leaf)),
            introduce: td.count(|k| matches!(k, NodeKind::Introduce(_))),
            forget: td.count(|k| matches!(k, NodeKind::Forget(_))),
            join: td.count(|k| matches!(k, NodeKind::Join)),
            edge: td.count(|k| matches!(k, NodeKind::Edge(..))),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub max_states: usize,
    pub nodes: usize,
    pub width: isize,
    pub node_counts: NodeCounts,
}

/// JSON output of `solve --json`. Vertex ids in `witness` are 1-based, as in the input file.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub instance: String,
    pub formula: String,
    pub satisfiable: bool,
    pub value: Option<i64>,
    pub witness: BTreeMap<String, Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub stats: Stats,
    pub timing: Timing,
}

pub fn one_based(w: &BTreeMap<String, Vec<usize>>) -> BTreeMap<String, Vec<usize>> {
    w.iter()
        .map(|(k, vs)| (k.clone(), vs.iter().map(|v| v + 1).collect()))
        .collect()
}

impl RunReport {
    pub fn new(
        instance: String,
        formula: String,
        td: &VeryNiceTd,
        r: &CheckResult,
        timing: Timing,
    ) -> Self {
        RunReport {
            instance,
            formula,
            satisfiable: r.satisfiable,
            value: r.value,
            witness: one_based(&r.witness),
            diagnostics: r.diagnostics.clone(),
            stats: Stats {
                max_states: r.stats.max_states,
                nodes: r.stats.nodes,
                width: r.stats.width,
                node_counts: NodeCounts::of(td),
            },
            timing,
        }
    }
}

pub struct BenchRow {
    instance: String,
    n: usize,
    m: usize,
    width: isize,
    formula: String,
    time_ms: f64,
    states_max: Option<usize>,
    result: &'static str,
    value: Option<i64>,
}

impl BenchRow {
    pub const HEADER: &'static str = "instance,n,m,width,formula,time_ms,states_max,result,value";

    pub fn new(
        instance: String,
        g: &Graph,
        td: &VeryNiceTd,
        formula: &str,
        time_ms: f64,
        outcome: Result<&CheckResult, &CheckError>,
    ) -> Self {
        let (states_max, result, value) = match outcome {
            Ok(r) => (
                Some(r.stats.max_states),
                if r.satisfiable { "sat" } else { "unsat" },
                r.value,
            ),
            Err(CheckError::Engine(EngineError::Deadline { .. })) => (None, "timeout", None),
            Err(_) => (None, "error", None),
        };
        BenchRow {
            instance,
            n: g.vertex_count(),
            m: g.edge_count(),
            width: td.width(),
            formula: formula.to_string(),
            time_ms,
            states_max,
            result,
            value,
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3},{},{},{}",
            self.instance,
            self.n,
            self.m,
            self.width,
            self.formula,
            self.time_ms,
            opt(self.states_max.map(|s| s.to_string())),
            self.result,
            opt(self.value.map(|v| v.to_string())),
        )
    }
}
