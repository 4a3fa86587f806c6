//! Small hand-specified models used by tests and the documentation.

use crate::domain::graph::ConceptGraph;
use crate::domain::model::{
    ConceptTransition, HPomdpModel, ObservationFunction, PatternComponent, RewardSpec,
};
use crate::domain::question::{Catalog, Question};
use crate::domain::space::{build_state_space, StateSpaceMode};

/// One concept, one question, one pattern.
///
/// Initial mastery (0.6 unmastered, 0.4 mastered), guess 0.2, fluency
/// 0.9, acquisition probability 0.3. Small enough that every quantity
/// can be checked by hand.
pub fn toy_single_concept() -> HPomdpModel {
    let graph = ConceptGraph::new(vec!["A"], vec![]).unwrap();
    let space = build_state_space(&graph, StateSpaceMode::PrerequisiteFiltered).unwrap();
    let catalog = Catalog::new(vec![Question { id: "q".into(), concept: 0 }], 1).unwrap();
    HPomdpModel {
        graph,
        space,
        catalog,
        components: vec![PatternComponent {
            initial: vec![0.6, 0.4],
            transition: vec![ConceptTransition::new(0.3)],
        }],
        observation: ObservationFunction::per_question(vec![0.2], vec![0.9]),
        reward: RewardSpec::MasteredCount,
        discount: 1.0,
        membership: None,
        pattern_prior: None,
    }
}

/// Two concepts in a prerequisite chain `A -> B`, one question each,
/// one pattern starting fully unmastered.
pub fn two_concept_chain(learn_a: f64, learn_b: f64) -> HPomdpModel {
    let graph = ConceptGraph::new(vec!["A", "B"], vec![("A", "B")]).unwrap();
    let space = build_state_space(&graph, StateSpaceMode::PrerequisiteFiltered).unwrap();
    let catalog = Catalog::new(
        vec![
            Question { id: "qa".into(), concept: 0 },
            Question { id: "qb".into(), concept: 1 },
        ],
        2,
    )
    .unwrap();
    let n = space.len();
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    HPomdpModel {
        graph,
        space,
        catalog,
        components: vec![PatternComponent {
            initial,
            transition: vec![ConceptTransition::new(learn_a), ConceptTransition::new(learn_b)],
        }],
        observation: ObservationFunction::per_question(vec![0.2, 0.2], vec![0.9, 0.9]),
        reward: RewardSpec::MasteredCount,
        discount: 1.0,
        membership: None,
        pattern_prior: None,
    }
}
