//! Core vocabulary types: concept graphs, knowledge states, questions,
//! trajectories and the mixture model itself.

pub mod fixtures;
mod graph;
mod model;
mod question;
mod space;
mod trajectory;

pub use graph::ConceptGraph;
pub use model::{
    validate_model, ConceptTransition, HPomdpModel, InvariantKind, ObservationFunction,
    PatternComponent, RewardSpec, Violation, SUM_TOLERANCE,
};
pub use question::{Catalog, Question};
pub use space::{build_state_space, KnowledgeState, StateSpace, StateSpaceMode};
pub use trajectory::{Dataset, Observation, Step, Trajectory};
