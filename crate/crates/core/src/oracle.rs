//! Brute-force reference semantics: enumerate every assignment of the set quantifiers and
//! evaluate the clauses directly. The search uses `u64` vertex masks, so it is limited to 64
//! vertices (the cap bites long before that); witness verification has no such limit.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, WeightMap};
use crate::lang::{CompiledAtom, CompiledClause, FoVar, Formula, Objective, Quantifier, Shape};

pub const DEFAULT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error("the oracle supports at most 64 vertices, got {0}")]
    TooManyVertices(usize),
    #[error("witness names unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("witness does not assign `{0}`")]
    MissingVariable(String),
    #[error("witness puts vertex {vertex} into `{name}`, but the graph has {n} vertices")]
    VertexOutOfRange {
        name: String,
        vertex: usize,
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub cap: u64,
    pub nonempty_connected: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            cap: DEFAULT_CAP,
            nonempty_connected: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    pub satisfiable: bool,
    pub value: Option<i64>,
    pub witness: BTreeMap<String, Vec<usize>>,
    /// Assignments in the (side-condition filtered) search space.
    pub searched: u64,
}

struct Evaluator {
    n: usize,
    full: u64,
    neighbors: Vec<u64>,
    /// Per clause, per disjunction: (tautology on distinct vertices, x-literal masks, y-literal masks).
    clauses: Vec<(Shape, Vec<DisjunctionPlan>)>,
}

#[derive(Debug, Clone)]
struct DisjunctionPlan {
    /// Tautological when x and y are distinct (single-variable clauses never use it).
    taut_edge: bool,
    taut_vertex: bool,
    x: Vec<(u32, bool)>,
    y: Vec<(u32, bool)>,
}

impl Evaluator {
    fn new(g: &Graph, clauses: &[CompiledClause]) -> Self {
        let n = g.vertex_count();
        let neighbors = (0..n)
            .map(|v| g.neighbors(v).iter().fold(0u64, |m, &w| m | 1 << w))
            .collect();
        let clauses = clauses
            .iter()
            .map(|c| {
                let plans = c
                    .cnf
                    .iter()
                    .map(|disj| {
                        let mut p = DisjunctionPlan {
                            taut_edge: false,
                            taut_vertex: false,
                            x: Vec::new(),
                            y: Vec::new(),
                        };
                        for &(positive, atom) in disj {
                            match atom {
                                CompiledAtom::Member(set, FoVar::X) => p.x.push((set, positive)),
                                CompiledAtom::Member(set, FoVar::Y) => p.y.push((set, positive)),
                                CompiledAtom::Equal(a, b) => {
                                    // on edges x != y; in vertex clauses both sides are x
                                    let edge_truth = a == b;
                                    p.taut_edge |= edge_truth == positive;
                                    p.taut_vertex |= positive;
                                }
                            }
                        }
                        p
                    })
                    .collect();
                (c.shape, plans)
            })
            .collect();
        Evaluator {
            n,
            full: if n == 64 { u64::MAX } else { (1u64 << n) - 1 },
            neighbors,
            clauses,
        }
    }

    fn literal_mask(&self, sets: &[u64], lits: &[(u32, bool)]) -> u64 {
        lits.iter().fold(0, |m, &(set, positive)| {
            let s = sets[set as usize];
            m | if positive { s } else { !s & self.full }
        })
    }

    fn holds(&self, sets: &[u64]) -> bool {
        self.clauses.iter().all(|(shape, plans)| {
            if !shape.is_edge() {
                let sat = plans.iter().fold(self.full, |acc, p| {
                    acc & if p.taut_vertex {
                        self.full
                    } else {
                        self.literal_mask(sets, &p.x)
                    }
                });
                return match shape {
                    Shape::AllVertex => sat == self.full,
                    _ => sat != 0,
                };
            }
            let masks: Vec<(bool, u64, u64)> = plans
                .iter()
                .map(|p| {
                    (
                        p.taut_edge,
                        self.literal_mask(sets, &p.x),
                        self.literal_mask(sets, &p.y),
                    )
                })
                .collect();
            // good_y(x): the y for which chi(x, y) holds
            let good_y = |x: usize| {
                masks.iter().fold(self.full, |acc, &(taut, a, b)| {
                    if taut || a >> x & 1 == 1 {
                        acc
                    } else {
                        acc & b
                    }
                })
            };
            let mut vertices = 0..self.n;
            match shape {
                Shape::AllAllEdge => vertices.all(|x| self.neighbors[x] & !good_y(x) == 0),
                Shape::AllExistsEdge => vertices.all(|x| self.neighbors[x] & good_y(x) != 0),
                Shape::ExistsAllEdge => vertices.any(|x| self.neighbors[x] & !good_y(x) == 0),
                Shape::ExistsExistsEdge => vertices.any(|x| self.neighbors[x] & good_y(x) != 0),
                Shape::AllVertex | Shape::ExistsVertex => unreachable!(),
            }
        })
    }
}

/// (components, edges) of the subgraph induced by the vertices where `inside` holds.
fn induced_components(g: &Graph, inside: impl Fn(usize) -> bool) -> (usize, usize) {
    let n = g.vertex_count();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut edges = 0;
    for v in (0..n).filter(|&v| inside(v)) {
        edges += g
            .neighbors(v)
            .iter()
            .filter(|&&w| w > v && inside(w))
            .count();
        if !seen[v] {
            components += 1;
            let mut stack = vec![v];
            seen[v] = true;
            while let Some(x) = stack.pop() {
                for &w in g.neighbors(x) {
                    if inside(w) && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
    }
    (components, edges)
}

fn is_connected_set(g: &Graph, inside: impl Fn(usize) -> bool, nonempty: bool) -> bool {
    match induced_components(g, inside).0 {
        0 => !nonempty,
        c => c == 1,
    }
}

fn is_forest_set(g: &Graph, inside: impl Fn(usize) -> bool + Copy) -> bool {
    let (components, edges) = induced_components(g, inside);
    let size = (0..g.vertex_count()).filter(|&v| inside(v)).count();
    edges + components == size
}

fn in_mask(set: u64) -> impl Fn(usize) -> bool + Copy {
    move |v| set >> v & 1 == 1
}

/// True when `g` contains a cycle.
pub fn has_cycle(g: &Graph) -> bool {
    let n = g.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    g.edges().iter().any(|&(u, v)| {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        parent[a] = b;
        a == b
    })
}

/// Per quantifier, the admissible assignments (one mask per set name it declares).
fn candidates(g: &Graph, q: &Quantifier, options: &OracleOptions) -> Vec<Vec<u64>> {
    let n = g.vertex_count();
    let subsets = 0..1u64 << n;
    match q {
        Quantifier::Free(_) => subsets.map(|s| vec![s]).collect(),
        Quantifier::Connected(_) => subsets
            .filter(|&s| is_connected_set(g, in_mask(s), options.nonempty_connected))
            .map(|s| vec![s])
            .collect(),
        Quantifier::Forest(_) => subsets
            .filter(|&s| is_forest_set(g, in_mask(s)))
            .map(|s| vec![s])
            .collect(),
        Quantifier::Partition(classes) => {
            let q = classes.len();
            let total = q.pow(n as u32);
            (0..total)
                .map(|mut code| {
                    let mut masks = vec![0u64; q];
                    for v in 0..n {
                        masks[code % q] |= 1 << v;
                        code /= q;
                    }
                    masks
                })
                .collect()
        }
    }
}

fn raw_space(g: &Graph, f: &Formula) -> u128 {
    let n = g.vertex_count() as u32;
    f.prefix.iter().fold(1u128, |acc, q| {
        let per = match q {
            Quantifier::Partition(c) => (c.len() as u128).saturating_pow(n),
            _ => 1u128 << n,
        };
        acc.saturating_mul(per)
    })
}

fn witness_map(f: &Formula, sets: &[u64]) -> BTreeMap<String, Vec<usize>> {
    f.set_names()
        .iter()
        .zip(sets)
        .filter(|(name, _)| !name.starts_with('~'))
        .map(|(name, &m)| {
            let members = (0..64).filter(|v| m >> v & 1 == 1).collect();
            (name.to_string(), members)
        })
        .collect()
}

/// Exhaustive search. Among optimal assignments the first in enumeration order wins.
pub fn brute_force_check(
    g: &Graph,
    f: &Formula,
    weights: &WeightMap,
    options: &OracleOptions,
) -> Result<OracleResult, OracleError> {
    let n = g.vertex_count();
    if n > 64 {
        return Err(OracleError::TooManyVertices(n));
    }
    // refuse before materializing huge candidate lists
    let raw = raw_space(g, f);
    if raw > u128::from(options.cap) * 64 {
        return Err(OracleError::CapExceeded {
            size: raw,
            cap: options.cap,
        });
    }
    let lists: Vec<Vec<Vec<u64>>> = f.prefix.iter().map(|q| candidates(g, q, options)).collect();
    let size = lists.iter().fold(1u128, |acc, l| acc * l.len() as u128);
    if size > u128::from(options.cap) {
        return Err(OracleError::CapExceeded {
            size,
            cap: options.cap,
        });
    }
    let sign = if f.objective == Objective::Maximize {
        -1
    } else {
        1
    };
    let mut free_weights = Vec::new();
    let mut set = 0;
    for q in &f.prefix {
        if let Quantifier::Free(name) = q {
            free_weights.push((
                set,
                (0..n).map(|v| weights.weight(name, v)).collect::<Vec<_>>(),
            ));
        }
        set += q.names().len();
    }
    let eval = Evaluator::new(g, &f.compile_clauses());
    let mut result = OracleResult {
        searched: size as u64,
        ..Default::default()
    };
    if lists.iter().any(Vec::is_empty) {
        return Ok(result);
    }
    let mut best: Option<(i64, Vec<u64>)> = None;
    let mut pick = vec![0usize; lists.len()];
    let mut sets = Vec::with_capacity(f.set_names().len());
    'search: loop {
        sets.clear();
        for (list, &i) in lists.iter().zip(&pick) {
            sets.extend_from_slice(&list[i]);
        }
        if eval.holds(&sets) {
            let value: i64 = free_weights
                .iter()
                .map(|(s, w)| {
                    (0..n)
                        .filter(|v| sets[*s] >> v & 1 == 1)
                        .map(|v| w[v])
                        .sum::<i64>()
                })
                .sum();
            if best.as_ref().is_none_or(|(b, _)| sign * value < sign * b) {
                best = Some((value, sets.clone()));
                if f.objective == Objective::Decide {
                    break 'search;
                }
            }
        }
        // odometer, last quantifier fastest
        let mut q = lists.len();
        loop {
            if q == 0 {
                break 'search;
            }
            q -= 1;
            pick[q] += 1;
            if pick[q] < lists[q].len() {
                break;
            }
            pick[q] = 0;
        }
    }
    if let Some((value, sets)) = best {
        result.satisfiable = true;
        result.value = (f.objective != Objective::Decide).then_some(value);
        result.witness = witness_map(f, &sets);
    }
    Ok(result)
}

/// Evaluates `f` literally under the given assignment of every set variable. A partition
/// class named `~X` may be omitted; it then receives the vertices of no other class.
/// Works for any number of vertices.
pub fn verify_witness(
    g: &Graph,
    f: &Formula,
    witness: &BTreeMap<String, Vec<usize>>,
    nonempty_connected: bool,
) -> Result<bool, OracleError> {
    let n = g.vertex_count();
    let names = f.set_names();
    if let Some(unknown) = witness.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(OracleError::UnknownVariable(unknown.clone()));
    }
    // membership[v]: bit i set when v is in the i-th named set
    let mut membership = vec![0u64; n];
    let mut given = vec![false; names.len()];
    for (i, name) in names.iter().enumerate() {
        match witness.get(*name) {
            Some(members) => {
                for &v in members {
                    if v >= n {
                        return Err(OracleError::VertexOutOfRange {
                            name: name.to_string(),
                            vertex: v,
                            n,
                        });
                    }
                    membership[v] |= 1 << i;
                }
                given[i] = true;
            }
            None if name.starts_with('~') => {}
            None => return Err(OracleError::MissingVariable(name.to_string())),
        }
    }
    let mut at = 0;
    let mut ok = true;
    for q in &f.prefix {
        let width = q.names().len();
        let bit = |v: usize| membership[v] >> at & 1 == 1;
        match q {
            Quantifier::Partition(_) => {
                let class_bits = ((1u64 << width) - 1) << at;
                let derived: Vec<usize> = (at..at + width).filter(|&i| !given[i]).collect();
                for m in membership.iter_mut() {
                    let classes = (*m & class_bits).count_ones();
                    if classes == 0 && !derived.is_empty() {
                        *m |= 1 << derived[0];
                    } else if classes != 1 {
                        ok = false;
                    }
                }
            }
            Quantifier::Connected(_) => ok &= is_connected_set(g, bit, nonempty_connected),
            Quantifier::Forest(_) => ok &= is_forest_set(g, bit),
            Quantifier::Free(_) => {}
        }
        at += width;
    }
    Ok(ok && literal_holds(g, &f.compile_clauses(), &membership))
}

/// Direct evaluation over vertices and ordered edges.
fn literal_holds(g: &Graph, clauses: &[CompiledClause], membership: &[u64]) -> bool {
    let plans = &Evaluator::new(&Graph::empty(0), clauses).clauses;
    let lit =
        |lits: &[(u32, bool)], m: u64| lits.iter().any(|&(set, pos)| (m >> set & 1 == 1) == pos);
    let chi = |plan: &[DisjunctionPlan], x: usize, y: Option<usize>| {
        plan.iter().all(|p| match y {
            None => p.taut_vertex || lit(&p.x, membership[x]),
            Some(y) => p.taut_edge || lit(&p.x, membership[x]) || lit(&p.y, membership[y]),
        })
    };
    let n = g.vertex_count();
    plans.iter().all(|(shape, plan)| {
        let all_nb = |x: usize| g.neighbors(x).iter().all(|&y| chi(plan, x, Some(y)));
        let any_nb = |x: usize| g.neighbors(x).iter().any(|&y| chi(plan, x, Some(y)));
        let mut vs = 0..n;
        match shape {
            Shape::AllAllEdge => vs.all(all_nb),
            Shape::AllExistsEdge => vs.all(any_nb),
            Shape::ExistsAllEdge => vs.any(all_nb),
            Shape::ExistsExistsEdge => vs.any(any_nb),
            Shape::AllVertex => vs.all(|x| chi(plan, x, None)),
            Shape::ExistsVertex => vs.any(|x| chi(plan, x, None)),
        }
    })
}

/// Objective value of a witness for the free variables.
pub fn witness_value(
    f: &Formula,
    weights: &WeightMap,
    witness: &BTreeMap<String, Vec<usize>>,
) -> i64 {
    f.free_variables()
        .iter()
        .map(|name| {
            witness.get(*name).map_or(0, |vs| {
                vs.iter().map(|&v| weights.weight(name, v)).sum::<i64>()
            })
        })
        .sum()
}

/// Independent 3-colorability test by backtracking over vertices in id order.
pub fn three_colorable(g: &Graph) -> bool {
    fn extend(g: &Graph, colors: &mut Vec<u8>) -> bool {
        let v = colors.len();
        if v == g.vertex_count() {
            return true;
        }
        for c in 0..3 {
            if g.neighbors(v).iter().all(|&w| w >= v || colors[w] != c) {
                colors.push(c);
                if extend(g, colors) {
                    return true;
                }
                colors.pop();
            }
        }
        false
    }
    extend(g, &mut Vec::with_capacity(g.vertex_count()))
}
