//! Knowledge states and enumerated state spaces.
//!
//! A knowledge state records, per concept, whether the student has
//! mastered it. The state space is either every bit-vector (`Full`) or
//! only the downward-closed ones (`PrerequisiteFiltered`): a concept may
//! be mastered only when all of its prerequisite parents are.

use std::collections::HashMap;
use std::fmt;

use crate::domain::graph::ConceptGraph;
use crate::error::{Error, Result};

/// Upper bound on enumerated states; beyond this the request is refused.
const MAX_STATES: usize = 1 << 20;

/// Mastery bit-vector over the graph's concepts; bit `i` set means
/// concept `i` is mastered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeState(pub u64);

impl KnowledgeState {
    pub const EMPTY: KnowledgeState = KnowledgeState(0);

    pub fn is_mastered(self, concept: usize) -> bool {
        self.0 >> concept & 1 == 1
    }

    pub fn with_mastered(self, concept: usize) -> KnowledgeState {
        KnowledgeState(self.0 | 1 << concept)
    }

    pub fn without(self, concept: usize) -> KnowledgeState {
        KnowledgeState(self.0 & !(1 << concept))
    }

    pub fn mastered_count(self) -> u32 {
        self.0.count_ones()
    }

    /// Renders as a bit string with concept 0 leftmost, e.g. `110`.
    pub fn bits(self, concept_count: usize) -> String {
        (0..concept_count)
            .map(|c| if self.is_mastered(c) { '1' } else { '0' })
            .collect()
    }

    /// Parses the `bits` rendering back into a state.
    pub fn from_bits(bits: &str) -> Result<KnowledgeState> {
        let mut mask = 0u64;
        for (i, ch) in bits.chars().enumerate() {
            match ch {
                '1' => mask |= 1 << i,
                '0' => {}
                other => return Err(Error::data(format!("invalid state bit {other:?} in {bits:?}"))),
            }
        }
        Ok(KnowledgeState(mask))
    }

    /// True when every mastered concept has all its prerequisite parents
    /// mastered.
    pub fn is_downward_closed(self, graph: &ConceptGraph) -> bool {
        (0..graph.concept_count())
            .filter(|&c| self.is_mastered(c))
            .all(|c| graph.parents(c).iter().all(|&p| self.is_mastered(p)))
    }

    /// Sort key giving lexicographic order on the bit string (concept 0
    /// most significant).
    fn lex_key(self, concept_count: usize) -> u64 {
        let mut key = 0u64;
        for c in 0..concept_count {
            key = key << 1 | (self.0 >> c & 1);
        }
        key
    }
}

impl fmt::Display for KnowledgeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:b}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateSpaceMode {
    Full,
    #[default]
    PrerequisiteFiltered,
}

impl StateSpaceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StateSpaceMode::Full => "full",
            StateSpaceMode::PrerequisiteFiltered => "prerequisite-filtered",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(StateSpaceMode::Full),
            "filtered" | "prerequisite-filtered" => Ok(StateSpaceMode::PrerequisiteFiltered),
            other => Err(Error::contract(format!(
                "unknown state-space mode {other:?} (expected \"full\" or \"filtered\")"
            ))),
        }
    }
}

/// An enumerated, canonically ordered state space.
///
/// Ordering is lexicographic on the bit string (concept 0 most
/// significant), so indices are stable across runs and serializations.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    mode: StateSpaceMode,
    concept_count: usize,
    states: Vec<KnowledgeState>,
    index: HashMap<u64, usize>,
}

/// Enumerates the state space for `graph` in the requested mode.
pub fn build_state_space(graph: &ConceptGraph, mode: StateSpaceMode) -> Result<StateSpace> {
    let k = graph.concept_count();
    if k == 0 {
        return Err(Error::structure("cannot build a state space over zero concepts"));
    }

    let mut states = match mode {
        StateSpaceMode::Full => {
            if k > 20 {
                return Err(Error::capacity(format!(
                    "full state space over {k} concepts has 2^{k} states; use prerequisite-filtered mode"
                )));
            }
            (0..1u64 << k).map(KnowledgeState).collect::<Vec<_>>()
        }
        StateSpaceMode::PrerequisiteFiltered => enumerate_closed(graph)?,
    };

    states.sort_unstable_by_key(|s| s.lex_key(k));
    let index = states.iter().enumerate().map(|(i, s)| (s.0, i)).collect();
    Ok(StateSpace { mode, concept_count: k, states, index })
}

/// Breadth-first enumeration of downward-closed mastery sets: grow each
/// closed set by any concept whose parents are already in it.
fn enumerate_closed(graph: &ConceptGraph) -> Result<Vec<KnowledgeState>> {
    let k = graph.concept_count();
    let mut seen: HashMap<u64, ()> = HashMap::new();
    let mut frontier = vec![KnowledgeState::EMPTY];
    seen.insert(0, ());
    let mut out = Vec::new();
    while let Some(state) = frontier.pop() {
        out.push(state);
        if out.len() > MAX_STATES {
            return Err(Error::capacity(format!(
                "prerequisite-filtered state space exceeds {MAX_STATES} states"
            )));
        }
        for c in 0..k {
            if state.is_mastered(c) {
                continue;
            }
            if graph.parents(c).iter().all(|&p| state.is_mastered(p)) {
                let next = state.with_mastered(c);
                if seen.insert(next.0, ()).is_none() {
                    frontier.push(next);
                }
            }
        }
    }
    Ok(out)
}

impl StateSpace {
    pub fn mode(&self) -> StateSpaceMode {
        self.mode
    }

    pub fn concept_count(&self) -> usize {
        self.concept_count
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[KnowledgeState] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> KnowledgeState {
        self.states[idx]
    }

    pub fn index_of(&self, state: KnowledgeState) -> Option<usize> {
        self.index.get(&state.0).copied()
    }

    /// Index of the state reached by acquiring `concept` from state
    /// `from`, or `None` when the flip would leave the space or the
    /// concept is already mastered.
    pub fn acquire_target(&self, from: usize, concept: usize) -> Option<usize> {
        let state = self.states[from];
        if state.is_mastered(concept) {
            return None;
        }
        self.index_of(state.with_mastered(concept))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(names: &[&str]) -> ConceptGraph {
        let edges = names.windows(2).map(|w| (w[0], w[1])).collect();
        ConceptGraph::new(names.to_vec(), edges).unwrap()
    }

    #[test]
    fn single_concept_has_two_states() {
        let g = ConceptGraph::new(vec!["A"], vec![]).unwrap();
        for mode in [StateSpaceMode::Full, StateSpaceMode::PrerequisiteFiltered] {
            let space = build_state_space(&g, mode).unwrap();
            assert_eq!(space.len(), 2);
            assert_eq!(space.state(0), KnowledgeState(0));
            assert_eq!(space.state(1), KnowledgeState(1));
        }
    }

    #[test]
    fn three_independent_concepts_full() {
        let g = ConceptGraph::new(vec!["A", "B", "C"], vec![]).unwrap();
        let space = build_state_space(&g, StateSpaceMode::Full).unwrap();
        assert_eq!(space.len(), 8);
        // No constraints, so filtered agrees.
        let filtered = build_state_space(&g, StateSpaceMode::PrerequisiteFiltered).unwrap();
        assert_eq!(filtered.states(), space.states());
    }

    #[test]
    fn chain_filtered_is_prefix_closure() {
        let space = build_state_space(&chain(&["A", "B", "C"]), StateSpaceMode::PrerequisiteFiltered).unwrap();
        let bits: Vec<String> = space.states().iter().map(|s| s.bits(3)).collect();
        assert_eq!(bits, vec!["000", "100", "110", "111"]);
    }

    #[test]
    fn chain_filtered_has_k_plus_one_states() {
        for k in 1..=8 {
            let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let space = build_state_space(&chain(&refs), StateSpaceMode::PrerequisiteFiltered).unwrap();
            assert_eq!(space.len(), k + 1);
        }
    }

    #[test]
    fn zero_concepts_is_an_error() {
        let g = ConceptGraph::new(Vec::<&str>::new(), vec![]).unwrap();
        let err = build_state_space(&g, StateSpaceMode::Full).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let g = ConceptGraph::new(vec!["A", "B"], vec![]).unwrap();
        let space = build_state_space(&g, StateSpaceMode::Full).unwrap();
        let bits: Vec<String> = space.states().iter().map(|s| s.bits(2)).collect();
        assert_eq!(bits, vec!["00", "01", "10", "11"]);
    }

    #[test]
    fn acquire_target_respects_closure() {
        let g = chain(&["A", "B"]);
        let space = build_state_space(&g, StateSpaceMode::PrerequisiteFiltered).unwrap();
        let empty = space.index_of(KnowledgeState::EMPTY).unwrap();
        // B before A is infeasible in the filtered space.
        assert_eq!(space.acquire_target(empty, 1), None);
        let a = space.acquire_target(empty, 0).unwrap();
        assert!(space.state(a).is_mastered(0));
        assert!(space.acquire_target(a, 1).is_some());
    }
}
