//! Bottom-up simulation of a nondeterministic tree automaton over a very nice tree
//! decomposition.
//!
//! A dynamic program is written as a [`StateVector`]: the set of states the automaton may be
//! in at some node, together with four update rules for the node kinds. The engine walks the
//! decomposition in post-order, starting every leaf from [`StateVectorFactory::leaf`], and
//! hands back the vector of the root.

use std::hash::Hash;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::nicify::{NodeKind, TreeIndex, VeryNiceTd};

/// Failure raised by an update rule.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct HookError(pub String);

pub trait StateVector: Sized {
    /// `bag` is the bag of the introduce node, so it already contains `v`.
    fn introduce(self, bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError>;
    /// `bag` is the bag of the forget node, without `v`.
    fn forget(self, bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError>;
    fn join(self, bag: &[usize], other: Self, idx: &TreeIndex) -> Result<Self, HookError>;
    fn edge(self, bag: &[usize], u: usize, v: usize, idx: &TreeIndex) -> Result<Self, HookError>;
    /// Number of stored states, for statistics.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub trait StateVectorFactory {
    type Vector: StateVector;
    fn leaf(&self) -> Self::Vector;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("{kind} node {node} failed: {source}")]
    Hook {
        node: usize,
        kind: &'static str,
        source: HookError,
    },
    #[error("deadline reached after {processed} of {total} nodes")]
    Deadline { processed: usize, total: usize },
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub deadline: Option<Instant>,
    /// Evaluate the two subtrees below a join on separate worker threads.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeStats {
    pub node: usize,
    pub kind: &'static str,
    pub bag_size: usize,
    pub states: usize,
}

#[derive(Debug)]
pub struct SimulationResult<V> {
    pub root: V,
    /// One entry per node, in node-id order.
    pub nodes: Vec<NodeStats>,
    pub elapsed: Duration,
}

impl<V> SimulationResult<V> {
    pub fn max_states(&self) -> usize {
        self.nodes.iter().map(|s| s.states).max().unwrap_or(0)
    }
}

fn apply<V: StateVector>(td: &VeryNiceTd, node: usize, below: Vec<V>) -> Result<V, EngineError> {
    let n = &td.nodes[node];
    let idx = &td.tree_index;
    let wrap = |source| EngineError::Hook {
        node,
        kind: n.kind.name(),
        source,
    };
    let mut below = below.into_iter();
    let mut child = || below.next().expect("child vector");
    match n.kind {
        NodeKind::Leaf => unreachable!("leaves are created by the factory"),
        NodeKind::Introduce(v) => child().introduce(&n.bag, v, idx).map_err(wrap),
        NodeKind::Forget(v) => child().forget(&n.bag, v, idx).map_err(wrap),
        NodeKind::Edge(u, v) => child().edge(&n.bag, u, v, idx).map_err(wrap),
        NodeKind::Join => {
            let left = child();
            let right = child();
            left.join(&n.bag, right, idx).map_err(wrap)
        }
    }
}

/// Runs the automaton and calls `observe` on every node's vector right after it is computed.
pub fn simulate_observed<F, O>(
    td: &VeryNiceTd,
    factory: &F,
    options: &SimulateOptions,
    mut observe: O,
) -> Result<SimulationResult<F::Vector>, EngineError>
where
    F: StateVectorFactory,
    O: FnMut(usize, &F::Vector),
{
    let start = Instant::now();
    let total = td.nodes.len();
    let mut slots: Vec<Option<F::Vector>> = (0..total).map(|_| None).collect();
    let mut stats = Vec::with_capacity(total);
    // explicit post-order: (node, children expanded?)
    let mut stack = vec![(td.root, false)];
    let mut processed = 0;
    while let Some((node, expanded)) = stack.pop() {
        let children = &td.nodes[node].children;
        if !expanded {
            stack.push((node, true));
            for &c in children.iter().rev() {
                stack.push((c, false));
            }
            continue;
        }
        if let Some(deadline) = options.deadline {
            if Instant::now() >= deadline {
                return Err(EngineError::Deadline { processed, total });
            }
        }
        let vector = if children.is_empty() {
            factory.leaf()
        } else {
            let below = children
                .iter()
                .map(|&c| slots[c].take().expect("child evaluated"))
                .collect();
            apply(td, node, below)?
        };
        observe(node, &vector);
        stats.push(NodeStats {
            node,
            kind: td.nodes[node].kind.name(),
            bag_size: td.nodes[node].bag.len(),
            states: vector.len(),
        });
        slots[node] = Some(vector);
        processed += 1;
    }
    stats.sort_by_key(|s| s.node);
    Ok(SimulationResult {
        root: slots[td.root].take().expect("root evaluated"),
        nodes: stats,
        elapsed: start.elapsed(),
    })
}

pub fn simulate<F>(
    td: &VeryNiceTd,
    factory: &F,
    options: &SimulateOptions,
) -> Result<SimulationResult<F::Vector>, EngineError>
where
    F: StateVectorFactory + Sync,
    F::Vector: Send,
{
    if options.parallel {
        simulate_parallel(td, factory, options)
    } else {
        simulate_observed(td, factory, options, |_, _| {})
    }
}

fn simulate_parallel<F>(
    td: &VeryNiceTd,
    factory: &F,
    options: &SimulateOptions,
) -> Result<SimulationResult<F::Vector>, EngineError>
where
    F: StateVectorFactory + Sync,
    F::Vector: Send,
{
    let start = Instant::now();
    let (root, mut stats) = eval_subtree(td, factory, options, td.root)?;
    stats.sort_by_key(|s| s.node);
    Ok(SimulationResult {
        root,
        nodes: stats,
        elapsed: start.elapsed(),
    })
}

/// Evaluates the chain of unary nodes above the next join (or leaf) iteratively, forking at
/// the join.
fn eval_subtree<F>(
    td: &VeryNiceTd,
    factory: &F,
    options: &SimulateOptions,
    top: usize,
) -> Result<(F::Vector, Vec<NodeStats>), EngineError>
where
    F: StateVectorFactory + Sync,
    F::Vector: Send,
{
    let mut chain = vec![top];
    let mut bottom = top;
    while td.nodes[bottom].children.len() == 1 {
        bottom = td.nodes[bottom].children[0];
        chain.push(bottom);
    }
    chain.pop();
    let node = &td.nodes[bottom];
    let (mut vector, mut stats) = if node.children.is_empty() {
        (factory.leaf(), Vec::new())
    } else {
        let (l, r) = (node.children[0], node.children[1]);
        let (left, right) = rayon::join(
            || eval_subtree(td, factory, options, l),
            || eval_subtree(td, factory, options, r),
        );
        let (left, mut left_stats) = left?;
        let (right, right_stats) = right?;
        left_stats.extend(right_stats);
        (apply(td, bottom, vec![left, right])?, left_stats)
    };
    let record = |stats: &mut Vec<NodeStats>, node: usize, v: &F::Vector| {
        stats.push(NodeStats {
            node,
            kind: td.nodes[node].kind.name(),
            bag_size: td.nodes[node].bag.len(),
            states: v.len(),
        });
    };
    record(&mut stats, bottom, &vector);
    for &node in chain.iter().rev() {
        if let Some(deadline) = options.deadline {
            if Instant::now() >= deadline {
                return Err(EngineError::Deadline {
                    processed: stats.len(),
                    total: td.nodes.len(),
                });
            }
        }
        vector = apply(td, node, vec![vector])?;
        record(&mut stats, node, &vector);
    }
    Ok((vector, stats))
}

/// Work counters for a join: hash-table key probes and `combine` calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct JoinProbes {
    pub key_probes: u64,
    pub combines: u64,
}

impl JoinProbes {
    pub fn total(&self) -> u64 {
        self.key_probes + self.combines
    }
}

/// Joins two state sets by first bucketing `left` on its symmetric key, then pairing each
/// element of `right` only with the bucket of equal key. `combine` returns `None` to reject.
pub fn join_bucketed<S, K, R>(
    left: &[S],
    right: &[S],
    key: impl Fn(&S) -> K,
    mut combine: impl FnMut(&S, &S) -> Option<R>,
    probes: &mut JoinProbes,
) -> Vec<R>
where
    K: Hash + Eq,
{
    let mut buckets: FxHashMap<K, Vec<usize>> = FxHashMap::default();
    for (i, s) in left.iter().enumerate() {
        probes.key_probes += 1;
        buckets.entry(key(s)).or_default().push(i);
    }
    let mut out = Vec::new();
    for b in right {
        probes.key_probes += 1;
        if let Some(bucket) = buckets.get(&key(b)) {
            for &i in bucket {
                probes.combines += 1;
                if let Some(r) = combine(&left[i], b) {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// All-pairs reference join with the same contract as [`join_bucketed`].
pub fn join_naive<S, K, R>(
    left: &[S],
    right: &[S],
    key: impl Fn(&S) -> K,
    mut combine: impl FnMut(&S, &S) -> Option<R>,
    probes: &mut JoinProbes,
) -> Vec<R>
where
    K: Eq,
{
    let mut out = Vec::new();
    for b in right {
        for a in left {
            probes.key_probes += 2;
            if key(a) == key(b) {
                probes.combines += 1;
                if let Some(r) = combine(a, b) {
                    out.push(r);
                }
            }
        }
    }
    out
}
