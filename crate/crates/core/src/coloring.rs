//! Reference dynamic program for 3-coloring, written against the [`StateVector`] interface.
//!
//! A state stores one color per tree-index slot (0 = slot unused, 1..=3 = color), packed two
//! bits per slot into a `u64`.

use rustc_hash::FxHashSet;

use crate::engine::{
    simulate, EngineError, HookError, SimulateOptions, StateVector, StateVectorFactory,
};
use crate::graph::Graph;
use crate::nicify::{TreeIndex, VeryNiceTd};

/// Largest bag size the packed representation supports.
pub const MAX_SLOTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColoringState(u64);

impl ColoringState {
    pub fn from_colors(colors: &[u8]) -> Self {
        let mut s = ColoringState(0);
        for (slot, &c) in colors.iter().enumerate() {
            s = s.with(slot, c);
        }
        s
    }

    #[inline]
    pub fn color(self, slot: usize) -> u8 {
        ((self.0 >> (2 * slot)) & 0b11) as u8
    }

    #[inline]
    fn with(self, slot: usize, color: u8) -> Self {
        let cleared = self.0 & !(0b11 << (2 * slot));
        ColoringState(cleared | (u64::from(color) << (2 * slot)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColoringVector {
    states: FxHashSet<ColoringState>,
}

impl ColoringVector {
    pub fn from_states(states: impl IntoIterator<Item = ColoringState>) -> Self {
        ColoringVector {
            states: states.into_iter().collect(),
        }
    }

    pub fn contains(&self, s: ColoringState) -> bool {
        self.states.contains(&s)
    }

    pub fn states(&self) -> impl Iterator<Item = ColoringState> + '_ {
        self.states.iter().copied()
    }
}

fn check_slot(idx: &TreeIndex, v: usize) -> Result<usize, HookError> {
    let slot = idx.slot(v);
    if slot >= MAX_SLOTS {
        return Err(HookError(format!(
            "tree-index {slot} exceeds the {MAX_SLOTS} packed slots"
        )));
    }
    Ok(slot)
}

impl StateVector for ColoringVector {
    fn introduce(self, _bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError> {
        let slot = check_slot(idx, v)?;
        let mut next =
            FxHashSet::with_capacity_and_hasher(self.states.len() * 3, Default::default());
        for state in self.states {
            for color in 1..=3 {
                next.insert(state.with(slot, color));
            }
        }
        Ok(ColoringVector { states: next })
    }

    fn forget(self, _bag: &[usize], v: usize, idx: &TreeIndex) -> Result<Self, HookError> {
        let slot = check_slot(idx, v)?;
        Ok(ColoringVector {
            states: self.states.into_iter().map(|s| s.with(slot, 0)).collect(),
        })
    }

    fn join(self, _bag: &[usize], other: Self, _idx: &TreeIndex) -> Result<Self, HookError> {
        let (small, large) = if self.states.len() <= other.states.len() {
            (self, other)
        } else {
            (other, self)
        };
        Ok(ColoringVector {
            states: small
                .states
                .into_iter()
                .filter(|s| large.states.contains(s))
                .collect(),
        })
    }

    fn edge(
        mut self,
        _bag: &[usize],
        u: usize,
        v: usize,
        idx: &TreeIndex,
    ) -> Result<Self, HookError> {
        let (a, b) = (check_slot(idx, u)?, check_slot(idx, v)?);
        self.states.retain(|s| s.color(a) != s.color(b));
        Ok(self)
    }

    fn len(&self) -> usize {
        self.states.len()
    }
}

pub struct ColoringFactory;

impl StateVectorFactory for ColoringFactory {
    type Vector = ColoringVector;

    fn leaf(&self) -> ColoringVector {
        ColoringVector::from_states([ColoringState(0)])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoringResult {
    pub satisfiable: bool,
    pub max_states: usize,
}

/// Decides 3-colorability of `g` on the given decomposition.
pub fn solve_3coloring(g: &Graph, td: &VeryNiceTd) -> Result<ColoringResult, EngineError> {
    solve_3coloring_with(g, td, &SimulateOptions::default())
}

pub fn solve_3coloring_with(
    _g: &Graph,
    td: &VeryNiceTd,
    options: &SimulateOptions,
) -> Result<ColoringResult, EngineError> {
    let result = simulate(td, &ColoringFactory, options)?;
    Ok(ColoringResult {
        satisfiable: !result.root.is_empty(),
        max_states: result.max_states(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{heuristic_decompose, parse_td, Strategy};
    use crate::nicify::{make_very_nice, NodeKind};

    fn idx3() -> TreeIndex {
        TreeIndex::new(vec![0, 1, 2])
    }

    fn st(c: &[u8]) -> ColoringState {
        ColoringState::from_colors(c)
    }

    fn complete(n: usize) -> Graph {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v));
            }
        }
        Graph::from_edges(n, &e).unwrap()
    }

    #[test]
    fn introduce_guesses_every_color() {
        let v = ColoringFactory.leaf().introduce(&[0], 0, &idx3()).unwrap();
        let expected =
            ColoringVector::from_states([st(&[1, 0, 0]), st(&[2, 0, 0]), st(&[3, 0, 0])]);
        assert_eq!(v, expected);
        let v = v.introduce(&[0, 1], 1, &idx3()).unwrap();
        assert_eq!(v.len(), 9);
        let empty = ColoringVector::default()
            .introduce(&[0], 0, &idx3())
            .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn forget_merges_states() {
        let v = ColoringVector::from_states([st(&[1, 2, 0]), st(&[1, 3, 0])]);
        let v = v.forget(&[0], 1, &idx3()).unwrap();
        assert_eq!(v, ColoringVector::from_states([st(&[1, 0, 0])]));
        assert!(ColoringVector::default()
            .forget(&[], 0, &idx3())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn edge_drops_conflicts() {
        let v = ColoringVector::from_states([st(&[1, 1, 0]), st(&[1, 2, 0])]);
        let v = v.edge(&[0, 1], 0, 1, &idx3()).unwrap();
        assert_eq!(v, ColoringVector::from_states([st(&[1, 2, 0])]));
        let all_bad = ColoringVector::from_states([st(&[1, 1, 0]), st(&[3, 3, 0])]);
        assert!(all_bad.edge(&[0, 1], 0, 1, &idx3()).unwrap().is_empty());
    }

    #[test]
    fn join_intersects() {
        let a = ColoringVector::from_states([st(&[1]), st(&[2])]);
        let b = ColoringVector::from_states([st(&[2]), st(&[3])]);
        assert_eq!(
            a.clone().join(&[0], b, &idx3()).unwrap(),
            ColoringVector::from_states([st(&[2])])
        );
        assert!(a
            .join(&[0], ColoringVector::default(), &idx3())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cliques() {
        for (n, expected) in [(3, true), (4, false)] {
            let g = complete(n);
            let td = make_very_nice(&heuristic_decompose(&g, Strategy::MinFill), &g).unwrap();
            assert_eq!(solve_3coloring(&g, &td).unwrap().satisfiable, expected);
        }
    }

    /// After the three edge nodes of the K3 chain exactly the 3! proper colorings remain.
    #[test]
    fn k3_full_bag_has_six_states() {
        let g = complete(3);
        let td = make_very_nice(&parse_td("s td 1 3 3\nb 1 1 2 3\n").unwrap(), &g).unwrap();
        let last_edge = td
            .nodes
            .iter()
            .rposition(|n| matches!(n.kind, NodeKind::Edge(..)))
            .unwrap();
        let mut count = None;
        crate::engine::simulate_observed(
            &td,
            &ColoringFactory,
            &SimulateOptions::default(),
            |node, v| {
                if node == last_edge {
                    count = Some(v.len());
                }
            },
        )
        .unwrap();
        // 3^3 colorings, of which those with pairwise distinct colors
        let oracle = (0..27)
            .filter(|c| {
                let (a, b, d) = (c % 3, c / 3 % 3, c / 9);
                a != b && b != d && a != d
            })
            .count();
        assert_eq!(oracle, 6);
        assert_eq!(count, Some(oracle));
    }
}
