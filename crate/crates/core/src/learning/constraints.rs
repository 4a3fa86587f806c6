//! Projection of raw parameter estimates onto the feasible family.
//!
//! Three restrictions are enforced structurally:
//!
//! 1. mastery must answer better than guessing: `fluency >= guess + eps`,
//!    restored by swapping the estimates and separating near-ties;
//! 2. questions on the same concept share transition dynamics, so their
//!    statistics are pooled;
//! 3. a transition may only acquire the acted-on concept or stay put, so
//!    all other mass is zeroed and rows renormalized (the self-loop
//!    absorbs forbidden mass).

use crate::domain::{Catalog, ConceptTransition, StateSpace};

/// Minimal fluency-over-guess separation enforced by Constraint 1.
pub const OBSERVATION_MARGIN: f64 = 1e-3;

/// Used when a concept or question received no statistics at all.
pub const DEFAULT_LEARN: f64 = 0.5;

/// Raw, possibly infeasible estimates straight out of an unconstrained
/// M-step: per-question transition mass tables and per-question
/// observation rates.
#[derive(Debug, Clone)]
pub struct RawParameters {
    /// `transition[component][question][s][s2]`: expected mass of moving
    /// from state `s` to `s2` when answering that question.
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// Raw P(correct | unmastered) per catalog question.
    pub guess: Vec<f64>,
    /// Raw P(correct | mastered) per catalog question.
    pub fluency: Vec<f64>,
}

/// The feasible parameterization: per-concept dynamics per component and
/// per-question observation pairs satisfying the fluency margin.
#[derive(Debug, Clone)]
pub struct ConstrainedParameters {
    /// `transition[component][concept]`.
    pub transition: Vec<Vec<ConceptTransition>>,
    pub guess: Vec<f64>,
    pub fluency: Vec<f64>,
}

/// Clamps into `[floor, 1-floor]` and restores the fluency margin,
/// swapping when the pair is inverted.
pub(crate) fn project_guess_fluency(guess: f64, fluency: f64, floor: f64) -> (f64, f64) {
    let lo = floor;
    let hi = 1.0 - floor;
    let mut g = guess.clamp(lo, hi);
    let mut f = fluency.clamp(lo, hi);
    if f < g {
        std::mem::swap(&mut f, &mut g);
    }
    if f < g + OBSERVATION_MARGIN {
        let mid = 0.5 * (f + g);
        f = (mid + 0.5 * OBSERVATION_MARGIN).min(hi);
        g = (mid - 0.5 * OBSERVATION_MARGIN).max(lo);
        if f < g + OBSERVATION_MARGIN {
            // One side was clipped at a boundary; push the other.
            if g + OBSERVATION_MARGIN <= hi {
                f = g + OBSERVATION_MARGIN;
            } else {
                g = f - OBSERVATION_MARGIN;
            }
        }
    }
    (g, f)
}

pub(crate) fn clamp_learn(learn: f64, floor: f64) -> f64 {
    learn.clamp(floor, 1.0 - floor)
}

/// Projects raw per-question tables onto the feasible family.
///
/// Per component and concept, flip/stay mass is pooled across all
/// questions of the concept and across all source states where the
/// acquire flip stays inside `space`; everything else (bit changes on
/// other concepts, forgetting) is discarded, which is exactly the
/// zero-and-renormalize projection. Concepts with no pooled mass fall
/// back to a 0.5 acquisition probability.
pub fn apply_constraints(
    raw: &RawParameters,
    space: &StateSpace,
    catalog: &Catalog,
    floor: f64,
) -> ConstrainedParameters {
    let concept_count = space.concept_count();
    let n_states = space.len();
    let mut transition = Vec::with_capacity(raw.transition.len());
    for tables in &raw.transition {
        let mut flip = vec![0.0; concept_count];
        let mut mass = vec![0.0; concept_count];
        for (q, table) in tables.iter().enumerate() {
            let concept = catalog.concept_of(q);
            for s in 0..n_states {
                if let Some(target) = space.acquire_target(s, concept) {
                    flip[concept] += table[s][target];
                    mass[concept] += table[s][target] + table[s][s];
                }
            }
        }
        let dynamics: Vec<ConceptTransition> = (0..concept_count)
            .map(|c| {
                let learn = if mass[c] > 0.0 { flip[c] / mass[c] } else { DEFAULT_LEARN };
                ConceptTransition::new(clamp_learn(learn, floor))
            })
            .collect();
        transition.push(dynamics);
    }

    let mut guess = Vec::with_capacity(raw.guess.len());
    let mut fluency = Vec::with_capacity(raw.fluency.len());
    for q in 0..raw.guess.len() {
        let (g, f) = project_guess_fluency(raw.guess[q], raw.fluency[q], floor);
        guess.push(g);
        fluency.push(f);
    }

    ConstrainedParameters { transition, guess, fluency }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::toy_single_concept;
    use crate::domain::{Catalog, ConceptGraph, Question};
    use crate::domain::{build_state_space, StateSpaceMode};

    #[test]
    fn forbidden_forgetting_mass_moves_to_self_loop() {
        let model = toy_single_concept();
        // Mass 0.1 on the forbidden mastered->unmastered flip; the
        // feasible unmastered row carries 6 stays and 4 flips.
        let raw = RawParameters {
            transition: vec![vec![vec![vec![6.0, 4.0], vec![0.1, 9.9]]]],
            guess: vec![0.2],
            fluency: vec![0.9],
        };
        let params = apply_constraints(&raw, &model.space, &model.catalog, 1e-6);
        let d = params.transition[0][0];
        assert!((d.learn - 0.4).abs() < 1e-12);
        // Materialized mastered row: self-loop 1, no forgetting.
        let mut probe = model.clone();
        probe.components[0].transition = params.transition[0].clone();
        assert_eq!(probe.transition_prob(0, 1, 0, 0), 0.0);
        assert_eq!(probe.transition_prob(0, 1, 0, 1), 1.0);
    }

    #[test]
    fn same_concept_questions_pool_their_statistics() {
        let graph = ConceptGraph::new(vec!["A"], vec![]).unwrap();
        let space = build_state_space(&graph, StateSpaceMode::PrerequisiteFiltered).unwrap();
        let catalog = Catalog::new(
            vec![
                Question { id: "q1".into(), concept: 0 },
                Question { id: "q2".into(), concept: 0 },
            ],
            1,
        )
        .unwrap();
        // Each question: 3 flips out of 10 feasible mass.
        let table = vec![vec![7.0, 3.0], vec![0.0, 5.0]];
        let raw = RawParameters {
            transition: vec![vec![table.clone(), table]],
            guess: vec![0.2, 0.2],
            fluency: vec![0.9, 0.9],
        };
        let params = apply_constraints(&raw, &space, &catalog, 1e-6);
        assert!((params.transition[0][0].learn - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inverted_observation_pair_is_swapped() {
        let model = toy_single_concept();
        let raw = RawParameters {
            transition: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]],
            guess: vec![0.8],
            fluency: vec![0.3],
        };
        let params = apply_constraints(&raw, &model.space, &model.catalog, 1e-6);
        assert!((params.fluency[0] - 0.8).abs() < 1e-12);
        assert!((params.guess[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn near_tie_is_separated_by_the_margin() {
        let (g, f) = project_guess_fluency(0.5, 0.5, 1e-6);
        assert!(f > g);
        assert!(f - g >= OBSERVATION_MARGIN - 1e-12);
        let (g, f) = project_guess_fluency(1.0, 1.0, 1e-6);
        assert!(f <= 1.0 - 1e-6 + 1e-15);
        assert!(f - g >= OBSERVATION_MARGIN - 1e-12);
        let (g, f) = project_guess_fluency(0.0, 0.0, 1e-6);
        assert!(g >= 1e-6 - 1e-18);
        assert!(f - g >= OBSERVATION_MARGIN - 1e-12);
    }

    #[test]
    fn empty_statistics_fall_back_to_default_learn() {
        let model = toy_single_concept();
        let raw = RawParameters {
            transition: vec![vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]]],
            guess: vec![0.2],
            fluency: vec![0.9],
        };
        let params = apply_constraints(&raw, &model.space, &model.catalog, 1e-6);
        assert_eq!(params.transition[0][0].learn, DEFAULT_LEARN);
    }

    #[test]
    fn swap_does_not_lower_the_observation_objective() {
        // Expected-count objective for one question:
        //   n_m1 ln f + n_m0 ln(1-f) + n_u1 ln g + n_u0 ln(1-g)
        // The raw data say unmastered answered better; after the swap the
        // projected pair must score at least as well as the previous
        // iterate's feasible pair would (generalized-EM condition).
        fn objective(g: f64, f: f64, counts: (f64, f64, f64, f64)) -> f64 {
            let (m1, m0, u1, u0) = counts;
            m1 * f.ln() + m0 * (1.0 - f).ln() + u1 * g.ln() + u0 * (1.0 - g).ln()
        }
        // mastered: 3 of 10 correct; unmastered: 8 of 10 correct.
        let counts = (3.0, 7.0, 8.0, 2.0);
        let (g, f) = project_guess_fluency(0.8, 0.3, 1e-6);
        assert_eq!((g, f), (0.3, 0.8));
        let previous = (0.2, 0.9); // a typical feasible previous iterate
        assert!(objective(g, f, counts) >= objective(previous.0, previous.1, counts));
    }
}
