//! Tree-automaton model checker for the formula fragment, simulated over a very nice tree
//! decomposition. States are bit vectors laid out by [`compile_layout`] plus an objective
//! value and a provenance chain for witness extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use smallvec::{smallvec, SmallVec};
use thiserror::Error;

use crate::decomp::{heuristic_decompose, Strategy};
use crate::engine::{
    join_bucketed, join_naive, simulate, simulate_observed, EngineError, HookError, JoinProbes,
    SimulateOptions, StateVector, StateVectorFactory,
};
use crate::graph::{Graph, WeightMap};
use crate::lang::{
    compile_layout, CompiledClause, Formula, Objective, Quantifier, Shape, SlotGroup, StateLayout,
};
use crate::nicify::{make_very_nice, NicifyError, TreeIndex, VeryNiceTd};

/// Fixed-width bit vector; fields may straddle word boundaries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackedBits(SmallVec<[u64; 2]>);

#[inline]
fn low_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl PackedBits {
    pub fn zeros(bits: usize) -> Self {
        PackedBits(smallvec![0; bits.div_ceil(64)])
    }

    #[inline]
    pub fn get(&self, offset: usize, width: usize) -> u64 {
        if width == 0 {
            return 0;
        }
        let (word, shift) = (offset / 64, offset % 64);
        let mut v = self.0[word] >> shift;
        if shift + width > 64 {
            v |= self.0[word + 1] << (64 - shift);
        }
        v & low_mask(width)
    }

    #[inline]
    pub fn set(&mut self, offset: usize, width: usize, value: u64) {
        if width == 0 {
            return;
        }
        let m = low_mask(width);
        let value = value & m;
        let (word, shift) = (offset / 64, offset % 64);
        self.0[word] = (self.0[word] & !(m << shift)) | (value << shift);
        if shift + width > 64 {
            let placed = 64 - shift;
            self.0[word + 1] = (self.0[word + 1] & !(m >> placed)) | (value >> placed);
        }
    }

    #[inline]
    pub fn bit(&self, offset: usize) -> bool {
        self.get(offset, 1) == 1
    }

    #[inline]
    pub fn set_bit(&mut self, offset: usize, on: bool) {
        self.set(offset, 1, u64::from(on));
    }

    /// The first `bits` bits, as a key.
    pub fn prefix(&self, bits: usize) -> SmallVec<[u64; 2]> {
        let words = bits.div_ceil(64);
        let mut out: SmallVec<[u64; 2]> = self.0[..words].into();
        if !bits.is_multiple_of(64) {
            out[words - 1] &= low_mask(bits % 64);
        }
        out
    }

    pub fn words(&self) -> &[u64] {
        &self.0
    }
}

/// Back-pointer chain: the introduce-time choices that led to a state.
#[derive(Debug)]
pub enum Provenance {
    Introduce {
        vertex: usize,
        mask: u64,
        prev: Option<Arc<Provenance>>,
    },
    Join(Option<Arc<Provenance>>, Option<Arc<Provenance>>),
}

impl Provenance {
    fn take_links(&mut self, out: &mut Vec<Arc<Provenance>>) {
        match self {
            Provenance::Introduce { prev, .. } => out.extend(prev.take()),
            Provenance::Join(a, b) => out.extend(a.take().into_iter().chain(b.take())),
        }
    }
}

impl Drop for Provenance {
    // iterative so that long chains do not overflow the stack
    fn drop(&mut self) {
        let mut stack = Vec::new();
        self.take_links(&mut stack);
        while let Some(link) = stack.pop() {
            if let Some(mut inner) = Arc::into_inner(link) {
                inner.take_links(&mut stack);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckerState {
    pub bits: PackedBits,
    /// Internal objective: always minimized (weights are negated for `maximize`).
    pub value: i64,
    pub provenance: Option<Arc<Provenance>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum JoinStrategy {
    #[default]
    Bucketed,
    Naive,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Merge states with equal bits, keeping the best value.
    pub dedup: bool,
    pub join: JoinStrategy,
    /// Reject an empty set for connected quantifiers.
    pub nonempty_connected: bool,
    pub parallel: bool,
    pub deadline: Option<Instant>,
    /// Track provenance so a witness can be reported.
    pub witness: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            dedup: true,
            join: JoinStrategy::Bucketed,
            nonempty_connected: false,
            parallel: false,
            deadline: None,
            witness: true,
        }
    }
}

/// Sizes and work of one join node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JoinRecord {
    pub left: usize,
    pub right: usize,
    pub output: usize,
    pub probes: JoinProbes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckStats {
    pub max_states: usize,
    pub nodes: usize,
    pub width: isize,
    #[serde(skip)]
    pub joins: Vec<JoinRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub satisfiable: bool,
    /// Optimum in the formula's own sense; absent for decision formulas.
    pub value: Option<i64>,
    /// Vertex sets (0-based ids) for every named set variable; empty when unsatisfiable.
    pub witness: BTreeMap<String, Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub stats: CheckStats,
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Nicify(#[from] NicifyError),
    #[error("vertex {vertex} of the decomposition is outside the graph (n = {n})")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("broken provenance chain: {0}")]
    BrokenProvenance(String),
}

#[derive(Debug, Clone)]
enum QuantKind {
    Partition { base: u32, classes: u64 },
    Free { set: u32, free_index: usize },
    Connected { set: u32 },
    Forest { set: u32 },
}

#[derive(Debug, Clone)]
struct CompiledQuant {
    kind: QuantKind,
    group: SlotGroup,
}

/// Everything the transitions need; shared by all vectors of one run.
pub struct Checker {
    layout: StateLayout,
    quants: Vec<CompiledQuant>,
    clauses: Vec<(CompiledClause, SlotGroup)>,
    /// `free_weights[i][v]`: internal weight of `v` for the i-th free variable.
    free_weights: Vec<Vec<i64>>,
    options: CheckOptions,
    joins: Mutex<Vec<JoinRecord>>,
}

impl Checker {
    pub fn new(
        f: &Formula,
        weights: &WeightMap,
        n: usize,
        k: usize,
        options: CheckOptions,
    ) -> Self {
        let layout = compile_layout(f, k);
        let sign = if f.objective == Objective::Maximize {
            -1
        } else {
            1
        };
        let mut quants = Vec::with_capacity(f.prefix.len());
        let mut free_weights = Vec::new();
        let mut set = 0u32;
        for (i, q) in f.prefix.iter().enumerate() {
            let group = layout.groups[layout.quantifier_groups[i]].clone();
            let kind = match q {
                Quantifier::Partition(classes) => QuantKind::Partition {
                    base: set,
                    classes: classes.len() as u64,
                },
                Quantifier::Free(name) => {
                    free_weights.push((0..n).map(|v| sign * weights.weight(name, v)).collect());
                    QuantKind::Free {
                        set,
                        free_index: free_weights.len() - 1,
                    }
                }
                Quantifier::Connected(_) => QuantKind::Connected { set },
                Quantifier::Forest(_) => QuantKind::Forest { set },
            };
            set += q.names().len() as u32;
            quants.push(CompiledQuant { kind, group });
        }
        let clauses = f
            .compile_clauses()
            .into_iter()
            .zip(&layout.clause_groups)
            .map(|(c, &g)| (c, layout.groups[g].clone()))
            .collect();
        Checker {
            layout,
            quants,
            clauses,
            free_weights,
            options,
            joins: Mutex::new(Vec::new()),
        }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn join_records(&self) -> Vec<JoinRecord> {
        self.joins.lock().expect("join log").clone()
    }

    /// Membership mask of the vertex in `slot`.
    fn mask(&self, bits: &PackedBits, slot: usize) -> u64 {
        let mut m = 0;
        for q in &self.quants {
            let g = &q.group;
            let value = bits.get(g.slot_offset(slot), g.slot_bits);
            match q.kind {
                QuantKind::Partition { base, .. } => m |= 1 << (base as u64 + value),
                QuantKind::Free { set, .. }
                | QuantKind::Connected { set }
                | QuantKind::Forest { set } => {
                    if value != 0 {
                        m |= 1 << set;
                    }
                }
            }
        }
        m
    }

    /// Internal weight of `v` given its membership mask.
    fn weight(&self, v: usize, mask: u64) -> i64 {
        self.quants
            .iter()
            .filter_map(|q| match q.kind {
                QuantKind::Free { set, free_index } if mask >> set & 1 == 1 => {
                    Some(self.free_weights[free_index][v])
                }
                _ => None,
            })
            .sum()
    }

    fn leaf_state(&self) -> CheckerState {
        CheckerState {
            bits: PackedBits::zeros(self.layout.total_bits),
            value: 0,
            provenance: None,
        }
    }

    fn link(&self, prov: impl FnOnce() -> Provenance) -> Option<Arc<Provenance>> {
        self.options.witness.then(|| Arc::new(prov()))
    }

    fn introduce_state(
        &self,
        s: &CheckerState,
        v: usize,
        slot: usize,
        out: &mut Vec<CheckerState>,
    ) {
        let mut branches = vec![s.bits.clone()];
        for q in &self.quants {
            let g = &q.group;
            let off = g.slot_offset(slot);
            let mut next = Vec::with_capacity(branches.len() * 2);
            for b in branches {
                match q.kind {
                    QuantKind::Partition { classes, .. } => {
                        for class in 0..classes {
                            let mut c = b.clone();
                            c.set(off, g.slot_bits, class);
                            next.push(c);
                        }
                    }
                    QuantKind::Free { .. } => {
                        let mut c = b.clone();
                        c.set(off, g.slot_bits, 1);
                        next.push(b);
                        next.push(c);
                    }
                    QuantKind::Connected { .. } | QuantKind::Forest { .. } => {
                        let blocked = matches!(q.kind, QuantKind::Connected { .. })
                            && b.bit(g.extra_offset());
                        if !blocked {
                            let mut c = b.clone();
                            c.set(off, g.slot_bits, g.domain as u64 - 1);
                            canonicalize(&mut c, g);
                            next.push(c);
                        }
                        next.push(b);
                    }
                }
            }
            branches = next;
        }
        'branch: for mut bits in branches {
            let mask = self.mask(&bits, slot);
            for (clause, g) in &self.clauses {
                match clause.shape {
                    Shape::AllVertex => {
                        if !clause.holds(mask, 0, true) {
                            continue 'branch;
                        }
                    }
                    Shape::ExistsVertex => {
                        if clause.holds(mask, 0, true) {
                            bits.set_bit(g.extra_offset(), true);
                        }
                    }
                    Shape::ExistsAllEdge => bits.set_bit(g.slot_offset(slot), true),
                    Shape::AllExistsEdge => bits.set_bit(g.slot_offset(slot), false),
                    Shape::AllAllEdge | Shape::ExistsExistsEdge => {}
                }
            }
            let prev = s.provenance.clone();
            out.push(CheckerState {
                bits,
                value: s.value + self.weight(v, mask),
                provenance: self.link(|| Provenance::Introduce {
                    vertex: v,
                    mask,
                    prev,
                }),
            });
        }
    }

    fn forget_state(&self, mut s: CheckerState, slot: usize) -> Option<CheckerState> {
        let k = self.layout.k;
        for q in &self.quants {
            let g = &q.group;
            let off = g.slot_offset(slot);
            let label = s.bits.get(off, g.slot_bits);
            if let QuantKind::Connected { .. } = q.kind {
                if label != 0 {
                    let (mut shares, mut others) = (false, false);
                    for t in (0..k).filter(|&t| t != slot) {
                        let l = s.bits.get(g.slot_offset(t), g.slot_bits);
                        shares |= l == label;
                        others |= l != 0;
                    }
                    if !shares {
                        if others {
                            return None;
                        }
                        s.bits.set_bit(g.extra_offset(), true);
                    }
                }
            }
            s.bits.set(off, g.slot_bits, 0);
            if matches!(
                q.kind,
                QuantKind::Connected { .. } | QuantKind::Forest { .. }
            ) {
                canonicalize(&mut s.bits, g);
            }
        }
        for (clause, g) in &self.clauses {
            match clause.shape {
                Shape::AllExistsEdge => {
                    if !s.bits.bit(g.slot_offset(slot)) {
                        return None;
                    }
                    s.bits.set_bit(g.slot_offset(slot), false);
                }
                Shape::ExistsAllEdge => {
                    if s.bits.bit(g.slot_offset(slot)) {
                        s.bits.set_bit(g.extra_offset(), true);
                    }
                    s.bits.set_bit(g.slot_offset(slot), false);
                }
                _ => {}
            }
        }
        Some(s)
    }

    fn edge_state(&self, mut s: CheckerState, a: usize, b: usize) -> Option<CheckerState> {
        let (ma, mb) = (self.mask(&s.bits, a), self.mask(&s.bits, b));
        for q in &self.quants {
            let g = &q.group;
            if !matches!(
                q.kind,
                QuantKind::Connected { .. } | QuantKind::Forest { .. }
            ) {
                continue;
            }
            let la = s.bits.get(g.slot_offset(a), g.slot_bits);
            let lb = s.bits.get(g.slot_offset(b), g.slot_bits);
            if la == 0 || lb == 0 {
                continue;
            }
            if la == lb {
                if matches!(q.kind, QuantKind::Forest { .. }) {
                    return None;
                }
                continue;
            }
            for t in 0..self.layout.k {
                if s.bits.get(g.slot_offset(t), g.slot_bits) == lb {
                    s.bits.set(g.slot_offset(t), g.slot_bits, la);
                }
            }
            canonicalize(&mut s.bits, g);
        }
        for (clause, g) in &self.clauses {
            let (ab, ba) = (
                || clause.holds(ma, mb, false),
                || clause.holds(mb, ma, false),
            );
            match clause.shape {
                Shape::AllAllEdge => {
                    if !(ab() && ba()) {
                        return None;
                    }
                }
                Shape::AllExistsEdge => {
                    if ab() {
                        s.bits.set_bit(g.slot_offset(a), true);
                    }
                    if ba() {
                        s.bits.set_bit(g.slot_offset(b), true);
                    }
                }
                Shape::ExistsAllEdge => {
                    if !ab() {
                        s.bits.set_bit(g.slot_offset(a), false);
                    }
                    if !ba() {
                        s.bits.set_bit(g.slot_offset(b), false);
                    }
                }
                Shape::ExistsExistsEdge => {
                    if ab() || ba() {
                        s.bits.set_bit(g.extra_offset(), true);
                    }
                }
                Shape::AllVertex | Shape::ExistsVertex => {}
            }
        }
        Some(s)
    }

    fn join_states(
        &self,
        y: &CheckerState,
        z: &CheckerState,
        bag_slots: &[(usize, usize)],
    ) -> Option<CheckerState> {
        let k = self.layout.k;
        let mut bits = y.bits.clone();
        for q in &self.quants {
            let g = &q.group;
            let forest = match q.kind {
                QuantKind::Connected { .. } => false,
                QuantKind::Forest { .. } => true,
                _ => continue,
            };
            let label = |b: &PackedBits, t: usize| b.get(g.slot_offset(t), g.slot_bits);
            let mut parent: SmallVec<[usize; 16]> = (0..k).collect();
            let mut first_y: SmallVec<[usize; 16]> = smallvec![usize::MAX; k + 1];
            let mut first_z: SmallVec<[usize; 16]> = smallvec![usize::MAX; k + 1];
            for t in 0..k {
                let (ly, lz) = (label(&y.bits, t) as usize, label(&z.bits, t) as usize);
                if (ly == 0) != (lz == 0) {
                    return None;
                }
                if ly == 0 {
                    continue;
                }
                if first_y[ly] == usize::MAX {
                    first_y[ly] = t;
                } else {
                    union(&mut parent, first_y[ly], t);
                }
                if first_z[lz] == usize::MAX {
                    first_z[lz] = t;
                }
            }
            for t in 0..k {
                let lz = label(&z.bits, t) as usize;
                if lz == 0 || first_z[lz] == t {
                    continue;
                }
                if !union(&mut parent, first_z[lz], t) && forest {
                    return None;
                }
            }
            for t in 0..k {
                let l = if label(&y.bits, t) == 0 {
                    0
                } else {
                    find(&mut parent, t) as u64 + 1
                };
                bits.set(g.slot_offset(t), g.slot_bits, l);
            }
            canonicalize(&mut bits, g);
            if !forest {
                let (dy, dz) = (y.bits.bit(g.extra_offset()), z.bits.bit(g.extra_offset()));
                let any_in = (0..k).any(|t| label(&y.bits, t) != 0);
                if (dy && dz) || ((dy || dz) && any_in) {
                    return None;
                }
                bits.set_bit(g.extra_offset(), dy || dz);
            }
        }
        for (clause, g) in &self.clauses {
            match clause.shape {
                Shape::AllExistsEdge => {
                    for t in 0..g.slots {
                        let on = y.bits.bit(g.slot_offset(t)) || z.bits.bit(g.slot_offset(t));
                        bits.set_bit(g.slot_offset(t), on);
                    }
                }
                Shape::ExistsAllEdge => {
                    for t in 0..g.slots {
                        let on = y.bits.bit(g.slot_offset(t)) && z.bits.bit(g.slot_offset(t));
                        bits.set_bit(g.slot_offset(t), on);
                    }
                    let found = y.bits.bit(g.extra_offset()) || z.bits.bit(g.extra_offset());
                    bits.set_bit(g.extra_offset(), found);
                }
                Shape::ExistsExistsEdge | Shape::ExistsVertex => {
                    let on = y.bits.bit(g.extra_offset()) || z.bits.bit(g.extra_offset());
                    bits.set_bit(g.extra_offset(), on);
                }
                Shape::AllAllEdge | Shape::AllVertex => {}
            }
        }
        let shared: i64 = bag_slots
            .iter()
            .map(|&(v, slot)| self.weight(v, self.mask(&y.bits, slot)))
            .sum();
        let (py, pz) = (y.provenance.clone(), z.provenance.clone());
        Some(CheckerState {
            bits,
            value: y.value + z.value - shared,
            provenance: self.link(|| Provenance::Join(py, pz)),
        })
    }

    fn accepts(&self, s: &CheckerState) -> bool {
        let clauses_ok = self.clauses.iter().all(|(clause, g)| match clause.shape {
            Shape::ExistsAllEdge | Shape::ExistsExistsEdge | Shape::ExistsVertex => {
                s.bits.bit(g.extra_offset())
            }
            _ => true,
        });
        let connected_ok = !self.options.nonempty_connected
            || self.quants.iter().all(|q| match q.kind {
                QuantKind::Connected { .. } => s.bits.bit(q.group.extra_offset()),
                _ => true,
            });
        clauses_ok && connected_ok
    }

    fn vector(&self, states: Vec<CheckerState>) -> CheckerVector<'_> {
        let mut v = CheckerVector {
            checker: self,
            states: Vec::with_capacity(states.len()),
            index: FxHashMap::default(),
        };
        for s in states {
            v.push(s);
        }
        v
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Returns false when `a` and `b` were already connected.
fn union(parent: &mut [usize], a: usize, b: usize) -> bool {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra == rb {
        return false;
    }
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi] = lo;
    true
}

/// Renames component labels to 1, 2, ... in order of first occurrence by slot.
fn canonicalize(bits: &mut PackedBits, g: &SlotGroup) {
    let mut rename: SmallVec<[u64; 16]> = smallvec![0; g.domain];
    let mut next = 1;
    for t in 0..g.slots {
        let off = g.slot_offset(t);
        let l = bits.get(off, g.slot_bits) as usize;
        if l == 0 {
            continue;
        }
        if rename[l] == 0 {
            rename[l] = next;
            next += 1;
        }
        bits.set(off, g.slot_bits, rename[l]);
    }
}

pub struct CheckerVector<'a> {
    checker: &'a Checker,
    states: Vec<CheckerState>,
    index: FxHashMap<PackedBits, usize>,
}

impl CheckerVector<'_> {
    pub fn states(&self) -> &[CheckerState] {
        &self.states
    }

    fn push(&mut self, s: CheckerState) {
        if !self.checker.options.dedup {
            self.states.push(s);
            return;
        }
        match self.index.get(&s.bits) {
            Some(&i) => {
                if s.value < self.states[i].value {
                    self.states[i] = s;
                }
            }
            None => {
                self.index.insert(s.bits.clone(), self.states.len());
                self.states.push(s);
            }
        }
    }

    fn rebuild(self, states: Vec<CheckerState>) -> Self {
        self.checker.vector(states)
    }
}

fn slot_of(idx: &TreeIndex, v: usize, k: usize) -> Result<usize, HookError> {
    let slot = idx.slot(v);
    if slot >= k {
        return Err(HookError(format!(
            "tree-index {slot} of vertex {v} exceeds {k} slots"
        )));
    }
    Ok(slot)
}

impl StateVector for CheckerVector<'_> {
    fn introduce(self, _bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError> {
        let slot = slot_of(idx, v, self.checker.layout.k)?;
        let mut out = Vec::with_capacity(self.states.len() * 2);
        for s in &self.states {
            self.checker.introduce_state(s, v, slot, &mut out);
        }
        Ok(self.rebuild(out))
    }

    fn forget(self, _bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError> {
        let slot = slot_of(idx, v, self.checker.layout.k)?;
        let checker = self.checker;
        let out = self
            .states
            .into_iter()
            .filter_map(|s| checker.forget_state(s, slot))
            .collect();
        Ok(checker.vector(out))
    }

    fn join(self, bag: &[usize], other: Self, idx: &TreeIndex) -> Result<Self, HookError> {
        let checker = self.checker;
        let k = checker.layout.k;
        let bag_slots = bag
            .iter()
            .map(|&v| slot_of(idx, v, k).map(|s| (v, s)))
            .collect::<Result<Vec<_>, _>>()?;
        let sym = checker.layout.symmetric_bits;
        let key = |s: &CheckerState| s.bits.prefix(sym);
        let combine = |a: &CheckerState, b: &CheckerState| checker.join_states(a, b, &bag_slots);
        let mut probes = JoinProbes::default();
        let out = match checker.options.join {
            JoinStrategy::Bucketed => {
                join_bucketed(&self.states, &other.states, key, combine, &mut probes)
            }
            JoinStrategy::Naive => {
                join_naive(&self.states, &other.states, key, combine, &mut probes)
            }
        };
        let result = checker.vector(out);
        checker.joins.lock().expect("join log").push(JoinRecord {
            left: self.states.len(),
            right: other.states.len(),
            output: result.states.len(),
            probes,
        });
        Ok(result)
    }

    fn edge(self, _bag: &[usize], u: usize, v: usize, idx: &TreeIndex) -> Result<Self, HookError> {
        let k = self.checker.layout.k;
        let (a, b) = (slot_of(idx, u, k)?, slot_of(idx, v, k)?);
        let checker = self.checker;
        let out = self
            .states
            .into_iter()
            .filter_map(|s| checker.edge_state(s, a, b))
            .collect();
        Ok(checker.vector(out))
    }

    fn len(&self) -> usize {
        self.states.len()
    }
}

impl<'a> StateVectorFactory for &'a Checker {
    type Vector = CheckerVector<'a>;

    fn leaf(&self) -> CheckerVector<'a> {
        let checker: &'a Checker = self;
        checker.vector(vec![checker.leaf_state()])
    }
}

/// Collects the set memberships recorded along a provenance DAG.
fn collect_choices(prov: &Option<Arc<Provenance>>) -> BTreeMap<usize, u64> {
    let mut out = BTreeMap::new();
    let mut seen = FxHashSet::default();
    let mut stack: Vec<&Arc<Provenance>> = prov.iter().collect();
    while let Some(p) = stack.pop() {
        if !seen.insert(Arc::as_ptr(p)) {
            continue;
        }
        match &**p {
            Provenance::Introduce { vertex, mask, prev } => {
                out.insert(*vertex, *mask);
                stack.extend(prev.iter());
            }
            Provenance::Join(a, b) => stack.extend(a.iter().chain(b.iter())),
        }
    }
    out
}

fn witness_from(
    f: &Formula,
    n: usize,
    prov: &Option<Arc<Provenance>>,
) -> Result<BTreeMap<String, Vec<usize>>, CheckError> {
    let choices = collect_choices(prov);
    if choices.len() != n {
        return Err(CheckError::BrokenProvenance(format!(
            "recorded {} of {n} vertices",
            choices.len()
        )));
    }
    Ok(f.set_names()
        .iter()
        .enumerate()
        .filter(|(_, name)| !name.starts_with('~'))
        .map(|(i, name)| {
            let members = choices
                .iter()
                .filter(|(_, &m)| m >> i & 1 == 1)
                .map(|(&v, _)| v)
                .collect();
            (name.to_string(), members)
        })
        .collect())
}

fn preflight(g: &Graph, f: &Formula) -> Vec<String> {
    let isolated = g.isolated_vertices();
    if isolated.is_empty() || !f.clauses.iter().any(|c| c.shape == Shape::AllExistsEdge) {
        return Vec::new();
    }
    let ids: Vec<String> = isolated.iter().map(|v| (v + 1).to_string()).collect();
    vec![format!(
        "isolated vertices {} have no neighbor, so every forall-exists edge clause fails for them",
        ids.join(" ")
    )]
}

/// Runs the automaton for `f` on `td`.
pub fn model_check(
    g: &Graph,
    td: &VeryNiceTd,
    f: &Formula,
    weights: &WeightMap,
    options: &CheckOptions,
) -> Result<CheckResult, CheckError> {
    let n = g.vertex_count();
    if let Some(&v) = td.nodes.iter().flat_map(|x| &x.bag).find(|&&v| v >= n) {
        return Err(CheckError::VertexOutOfRange { vertex: v, n });
    }
    let checker = Checker::new(f, weights, n, td.k, options.clone());
    let sim = simulate(
        td,
        &&checker,
        &SimulateOptions {
            deadline: options.deadline,
            parallel: options.parallel,
        },
    )?;
    let best = sim.root.states.iter().filter(|s| checker.accepts(s)).fold(
        None::<&CheckerState>,
        |best, s| match best {
            Some(b) if b.value <= s.value => Some(b),
            _ => Some(s),
        },
    );
    let stats = CheckStats {
        max_states: sim.max_states(),
        nodes: td.nodes.len(),
        width: td.width(),
        joins: checker.join_records(),
    };
    let mut result = CheckResult {
        satisfiable: best.is_some(),
        diagnostics: preflight(g, f),
        stats,
        ..Default::default()
    };
    if let Some(best) = best {
        result.value = match f.objective {
            Objective::Decide => None,
            Objective::Minimize => Some(best.value),
            Objective::Maximize => Some(-best.value),
        };
        if options.witness {
            result.witness = witness_from(f, n, &best.provenance)?;
        }
    }
    Ok(result)
}

/// Heuristic decomposition, nicification and model checking in one call.
pub fn solve(
    g: &Graph,
    f: &Formula,
    weights: &WeightMap,
    options: &CheckOptions,
) -> Result<CheckResult, CheckError> {
    let td = make_very_nice(&heuristic_decompose(g, Strategy::MinFill), g)?;
    model_check(g, &td, f, weights, options)
}

/// The distinct bit vectors reachable at every node, in node-id order.
pub fn reachable_states(
    g: &Graph,
    td: &VeryNiceTd,
    f: &Formula,
    weights: &WeightMap,
    options: &CheckOptions,
) -> Result<Vec<BTreeSet<PackedBits>>, CheckError> {
    let checker = Checker::new(f, weights, g.vertex_count(), td.k, options.clone());
    let mut out = vec![BTreeSet::new(); td.nodes.len()];
    simulate_observed(td, &&checker, &SimulateOptions::default(), |node, v| {
        out[node] = v.states.iter().map(|s| s.bits.clone()).collect();
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::parse_td;
    use crate::lang::{builtin, parse_formula};
    use proptest::prelude::*;

    fn graph(n: usize, e: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, e).unwrap()
    }

    fn k(n: usize) -> Graph {
        let e: Vec<_> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        graph(n, &e)
    }

    fn run(g: &Graph, name: &str) -> CheckResult {
        solve(
            g,
            &builtin::formula(name),
            &WeightMap::new(),
            &CheckOptions::default(),
        )
        .unwrap()
    }

    fn one_vertex_checker(src: &str) -> Checker {
        Checker::new(
            &parse_formula(src).unwrap(),
            &WeightMap::new(),
            2,
            2,
            CheckOptions::default(),
        )
    }

    #[test]
    fn packed_bits_straddle_words() {
        let mut b = PackedBits::zeros(130);
        b.set(62, 5, 0b10111);
        assert_eq!(b.get(62, 5), 0b10111);
        assert_eq!(b.words()[0] >> 62, 0b11);
        assert_eq!(b.words()[1] & 0b111, 0b101);
        b.set(62, 5, 0);
        assert_eq!(b, PackedBits::zeros(130));
        b.set(127, 3, 0b111);
        assert_eq!(b.get(126, 5), 0b1110);
        assert_eq!(b.prefix(128)[1], 1 << 63);
    }

    proptest! {
        #[test]
        fn packed_fields_are_independent(fields in proptest::collection::vec((1usize..9, any::<u64>()), 1..30)) {
            let total: usize = fields.iter().map(|f| f.0).sum();
            let mut b = PackedBits::zeros(total);
            let mut off = 0;
            for &(w, v) in &fields {
                b.set(off, w, v);
                off += w;
            }
            off = 0;
            for &(w, v) in &fields {
                prop_assert_eq!(b.get(off, w), v & low_mask(w));
                off += w;
            }
        }
    }

    #[test]
    fn leaf_state_is_zero() {
        let c = one_vertex_checker("free S; forall x S(x)");
        let s = c.leaf_state();
        assert_eq!(s.bits, PackedBits::zeros(c.layout.total_bits));
        assert_eq!(s.value, 0);
        assert!(s.provenance.is_none());
    }

    #[test]
    fn introduce_branching() {
        let c = one_vertex_checker("free S; minimize; forall x forall y edge -> (S(x) | S(y))");
        let mut out = Vec::new();
        c.introduce_state(&c.leaf_state(), 0, 0, &mut out);
        let mut values: Vec<_> = out.iter().map(|s| s.value).collect();
        values.sort();
        assert_eq!(values, vec![0, 1]);

        let c = Checker::new(
            &builtin::formula("3col"),
            &WeightMap::new(),
            2,
            2,
            CheckOptions::default(),
        );
        out.clear();
        c.introduce_state(&c.leaf_state(), 0, 0, &mut out);
        assert_eq!(out.len(), 3);

        // S-in/forest-out, S-out/forest-in, both, neither; the last violates S(x)|F(x)
        let c = one_vertex_checker("free S; forest F; forall x S(x) | F(x)");
        let relaxed = one_vertex_checker("free S; forest F;");
        out.clear();
        relaxed.introduce_state(&relaxed.leaf_state(), 0, 0, &mut out);
        assert_eq!(out.len(), 4);
        out.clear();
        c.introduce_state(&c.leaf_state(), 0, 0, &mut out);
        assert_eq!(out.len(), 3);
    }

    fn connected_pair(same_component: bool) -> (Checker, CheckerState) {
        let c = one_vertex_checker("connected X;");
        let g = c.quants[0].group.clone();
        let mut s = c.leaf_state();
        s.bits.set(g.slot_offset(0), g.slot_bits, 1);
        s.bits.set(
            g.slot_offset(1),
            g.slot_bits,
            if same_component { 1 } else { 2 },
        );
        (c, s)
    }

    #[test]
    fn connected_forget_cases() {
        let (c, s) = connected_pair(true);
        let after = c.forget_state(s, 0).expect("component persists through w");
        let g = &c.quants[0].group;
        assert_eq!(after.bits.get(g.slot_offset(1), g.slot_bits), 1);
        assert!(!after.bits.bit(g.extra_offset()));

        let (c, s) = connected_pair(false);
        assert!(c.forget_state(s, 0).is_none());

        let (c, s) = connected_pair(true);
        let s = c.forget_state(s, 0).unwrap();
        let s = c.forget_state(s, 1).unwrap();
        assert!(s.bits.bit(c.quants[0].group.extra_offset()));
        // a finished component blocks new members
        let mut out = Vec::new();
        c.introduce_state(&s, 0, 0, &mut out);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn edge_transitions() {
        let col = Checker::new(
            &builtin::formula("3col"),
            &WeightMap::new(),
            2,
            2,
            CheckOptions::default(),
        );
        let s = col.leaf_state();
        assert!(
            col.edge_state(s, 0, 1).is_none(),
            "both endpoints in class R"
        );

        let c = one_vertex_checker("forest F;");
        let grp = c.quants[0].group.clone();
        let mut s = c.leaf_state();
        s.bits.set(grp.slot_offset(0), grp.slot_bits, 1);
        s.bits.set(grp.slot_offset(1), grp.slot_bits, 1);
        assert!(c.edge_state(s.clone(), 0, 1).is_none());
        s.bits.set(grp.slot_offset(1), grp.slot_bits, 2);
        let merged = c.edge_state(s, 0, 1).unwrap();
        assert_eq!(merged.bits.get(grp.slot_offset(1), grp.slot_bits), 1);

        let vc = Checker::new(
            &builtin::formula("vc"),
            &WeightMap::new(),
            2,
            2,
            CheckOptions::default(),
        );
        let grp = vc.quants[0].group.clone();
        let mut survivors = 0;
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut s = vc.leaf_state();
            s.bits.set(grp.slot_offset(0), 1, a);
            s.bits.set(grp.slot_offset(1), 1, b);
            survivors += usize::from(vc.edge_state(s, 0, 1).is_some());
        }
        assert_eq!(survivors, 3);
    }

    #[test]
    fn dominating_set_forget_rejects_undominated() {
        let c = Checker::new(
            &builtin::formula("ds"),
            &WeightMap::new(),
            2,
            2,
            CheckOptions::default(),
        );
        assert!(c.forget_state(c.leaf_state(), 0).is_none());
    }

    #[test]
    fn join_agreement() {
        let c = one_vertex_checker("connected X;");
        let g = c.quants[0].group.clone();
        let mut y = c.leaf_state();
        y.bits.set(g.slot_offset(0), g.slot_bits, 1);
        y.bits.set(g.slot_offset(1), g.slot_bits, 1);
        let mut z = c.leaf_state();
        z.bits.set(g.slot_offset(0), g.slot_bits, 1);
        z.bits.set(g.slot_offset(1), g.slot_bits, 2);
        let j = c
            .join_states(&y, &z, &[])
            .expect("different labelings, connected union");
        assert_eq!(j.bits.get(g.slot_offset(1), g.slot_bits), 1);
        let mut other = c.leaf_state();
        other.bits.set(g.slot_offset(0), g.slot_bits, 1);
        assert!(c.join_states(&y, &other, &[]).is_none(), "X-sets differ");

        let f = one_vertex_checker("forest F;");
        assert!(
            f.join_states(&y, &y, &[]).is_none(),
            "two paths between the bag vertices"
        );
        assert!(f.join_states(&y, &z, &[]).is_some());
    }

    #[test]
    fn forest_cycle_through_join_on_c4() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        // bags {0,2,1} and {0,2,3} under a join; all of C4 in F must be rejected
        let td = parse_td("s td 3 3 4\nb 1 1 3\nb 2 1 2 3\nb 3 1 3 4\n1 2\n1 3\n").unwrap();
        let nice = make_very_nice(&td, &g).unwrap();
        assert!(nice.count(|k| matches!(k, crate::nicify::NodeKind::Join)) > 0);
        let all_f = parse_formula("forest F; forall x F(x)").unwrap();
        let r = model_check(
            &g,
            &nice,
            &all_f,
            &WeightMap::new(),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(!r.satisfiable);
        let fvs = model_check(
            &g,
            &nice,
            &builtin::formula("fvs"),
            &WeightMap::new(),
            &CheckOptions::default(),
        )
        .unwrap();
        assert_eq!(fvs.value, Some(1));
    }

    #[test]
    fn classic_values() {
        assert_eq!(run(&k(3), "vc").value, Some(2));
        assert!(!run(&k(4), "3col").satisfiable);
        let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(run(&star, "ds").value, Some(1));
        assert_eq!(run(&k(3), "is").value, Some(1));
        let fvs = run(&k(3), "fvs");
        assert_eq!(fvs.value, Some(1));
        assert_eq!(fvs.witness["S"].len(), 1);
        let p3 = graph(3, &[(0, 1), (1, 2)]);
        let vc = run(&p3, "vc");
        assert_eq!(vc.witness["S"], vec![1]);
        assert_eq!(run(&k(4), "fvs").value, Some(2));
    }

    #[test]
    fn negative_weights_with_minimize() {
        let f =
            parse_formula("free S; minimize; forall x forall y edge -> (!S(x) | !S(y))").unwrap();
        let mut w = WeightMap::new();
        w.set_default("S", -1);
        let r = solve(&k(3), &f, &w, &CheckOptions::default()).unwrap();
        assert_eq!(r.value, Some(-1));
    }

    #[test]
    fn triangle_minor_on_trees_and_cycles() {
        let tree = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        assert!(!run(&tree, "triangle-minor").satisfiable);
        let c5 = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let r = run(&c5, "triangle-minor");
        assert!(r.satisfiable);
        assert!(["R", "G", "B"].iter().all(|n| !r.witness[*n].is_empty()));
    }

    #[test]
    fn isolated_vertex_diagnostic() {
        let g = graph(3, &[(0, 1)]);
        let r = run(&g, "ds");
        assert!(!r.satisfiable);
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.diagnostics[0].contains('3'));
        assert!(run(&g, "vc").diagnostics.is_empty());
    }

    #[test]
    fn exists_shapes() {
        let p3 = graph(3, &[(0, 1), (1, 2)]);
        // some vertex all of whose neighbors are in S, with S = {0}: vertex 1? no; but S
        // free and minimized means choose S so that some vertex is dominated all around.
        let f = parse_formula("free S; minimize; exists x forall y edge -> S(y)").unwrap();
        let r = solve(&p3, &f, &WeightMap::new(), &CheckOptions::default()).unwrap();
        assert_eq!(r.value, Some(1));
        let f = parse_formula("free S; minimize; exists x exists y edge & S(x) & S(y)").unwrap();
        assert_eq!(
            solve(&p3, &f, &WeightMap::new(), &CheckOptions::default())
                .unwrap()
                .value,
            Some(2)
        );
        let f = parse_formula("free S; minimize; exists x S(x); exists x !S(x)").unwrap();
        assert_eq!(
            solve(&p3, &f, &WeightMap::new(), &CheckOptions::default())
                .unwrap()
                .value,
            Some(1)
        );
        // isolated vertices satisfy the universal part vacuously
        let f = parse_formula("free S; exists x forall y edge -> S(y) & !S(x)").unwrap();
        let lonely = graph(2, &[]);
        assert!(
            solve(&lonely, &f, &WeightMap::new(), &CheckOptions::default())
                .unwrap()
                .satisfiable
        );
    }

    #[test]
    fn empty_connected_policy() {
        let f = parse_formula("connected X;").unwrap();
        let g = graph(2, &[]);
        let lax = solve(&g, &f, &WeightMap::new(), &CheckOptions::default()).unwrap();
        assert!(lax.satisfiable);
        let strict = CheckOptions {
            nonempty_connected: true,
            ..Default::default()
        };
        let r = solve(&g, &f, &WeightMap::new(), &strict).unwrap();
        assert!(r.satisfiable, "a single vertex is connected");
        let f = parse_formula("connected X; forall x X(x)").unwrap();
        assert!(
            !solve(&g, &f, &WeightMap::new(), &strict)
                .unwrap()
                .satisfiable
        );
        assert!(
            solve(&graph(2, &[(0, 1)]), &f, &WeightMap::new(), &strict)
                .unwrap()
                .satisfiable
        );
    }

    #[test]
    fn options_do_not_change_answers() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)]);
        for name in builtin::NAMES {
            let base = run(&g, name);
            for opts in [
                CheckOptions {
                    dedup: false,
                    ..Default::default()
                },
                CheckOptions {
                    join: JoinStrategy::Naive,
                    ..Default::default()
                },
                CheckOptions {
                    parallel: true,
                    ..Default::default()
                },
                CheckOptions {
                    witness: false,
                    ..Default::default()
                },
            ] {
                let r = solve(&g, &builtin::formula(name), &WeightMap::new(), &opts).unwrap();
                assert_eq!(
                    (r.satisfiable, r.value),
                    (base.satisfiable, base.value),
                    "{name} {opts:?}"
                );
            }
        }
    }

    #[test]
    fn long_provenance_chain_drops() {
        let n = 200_000;
        let mut prov = None;
        for v in 0..n {
            prov = Some(Arc::new(Provenance::Introduce {
                vertex: v,
                mask: 0,
                prev: prov,
            }));
        }
        drop(prov);
    }

    #[test]
    fn deadline_is_reported() {
        let g = k(4);
        let opts = CheckOptions {
            deadline: Some(Instant::now()),
            ..Default::default()
        };
        let err = solve(&g, &builtin::formula("3col"), &WeightMap::new(), &opts).unwrap_err();
        assert!(matches!(
            err,
            CheckError::Engine(EngineError::Deadline { .. })
        ));
    }
}
