//! The mixture cognitive model: `k` pattern components over a shared
//! state/action/observation structure.
//!
//! Every component indexes the same state space and question catalog and
//! shares the observation function and reward; components differ only in
//! their initial-state distributions and transition dynamics. Dynamics
//! are indexed by concept (questions on the same concept act alike) and
//! restricted to acquiring the acted-on concept or staying put: mastery
//! is never lost and never gained on an unrelated concept. The acquire
//! flip is additionally disallowed when the resulting mastery set lies
//! outside the (possibly prerequisite-filtered) state space.

use crate::domain::graph::ConceptGraph;
use crate::domain::question::Catalog;
use crate::domain::space::{KnowledgeState, StateSpace};

/// Tolerance used by all distribution-sum checks.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Per-concept acquisition dynamics: probability of acquiring the concept
/// when answering a related question (`learn`) versus staying (`stay`).
/// A valid pair sums to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceptTransition {
    pub learn: f64,
    pub stay: f64,
}

impl ConceptTransition {
    pub fn new(learn: f64) -> ConceptTransition {
        ConceptTransition { learn, stay: 1.0 - learn }
    }
}

/// One cognitive-pattern component: an initial distribution over the
/// state space plus per-concept acquisition dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternComponent {
    /// Distribution over the canonical state order; length `|S|`.
    pub initial: Vec<f64>,
    /// Indexed by concept; length `K`.
    pub transition: Vec<ConceptTransition>,
}

/// Observation model shared by every component.
///
/// The default form ties a question's answer distribution to the mastery
/// bit of its own concept only: `guess` is the probability of answering
/// correctly while unmastered, `fluency` while mastered. The full-table
/// form is an escape hatch for hand-built models with arbitrary
/// state-dependent answer probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationFunction {
    PerQuestion {
        /// P(correct | concept unmastered), per catalog index.
        guess: Vec<f64>,
        /// P(correct | concept mastered), per catalog index.
        fluency: Vec<f64>,
    },
    Table {
        /// P(correct | state, question): `correct[state][question]`.
        correct: Vec<Vec<f64>>,
    },
}

impl ObservationFunction {
    pub fn per_question(guess: Vec<f64>, fluency: Vec<f64>) -> ObservationFunction {
        ObservationFunction::PerQuestion { guess, fluency }
    }

    pub fn is_table(&self) -> bool {
        matches!(self, ObservationFunction::Table { .. })
    }
}

/// Terminal reward over final knowledge states; per-step reward is zero.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSpec {
    /// Count of mastered concepts in the final state.
    MasteredCount,
    /// Explicit value per state in canonical order; length `|S|`.
    PerState(Vec<f64>),
}

impl RewardSpec {
    pub fn value(&self, state: KnowledgeState, state_idx: usize) -> f64 {
        match self {
            RewardSpec::MasteredCount => state.mastered_count() as f64,
            RewardSpec::PerState(values) => values[state_idx],
        }
    }
}

/// The full mixture model.
#[derive(Debug, Clone, PartialEq)]
pub struct HPomdpModel {
    pub graph: ConceptGraph,
    pub space: StateSpace,
    pub catalog: Catalog,
    pub components: Vec<PatternComponent>,
    pub observation: ObservationFunction,
    pub reward: RewardSpec,
    pub discount: f64,
    /// Per-trajectory membership rows retained from fitting (`l x k`).
    pub membership: Option<Vec<Vec<f64>>>,
    /// Column means of the membership matrix; survives serialization.
    pub pattern_prior: Option<Vec<f64>>,
}

impl HPomdpModel {
    pub fn pattern_count(&self) -> usize {
        self.components.len()
    }

    /// P(correct | state, question) under the shared observation model.
    pub fn p_correct(&self, state_idx: usize, question: usize) -> f64 {
        match &self.observation {
            ObservationFunction::PerQuestion { guess, fluency } => {
                let concept = self.catalog.concept_of(question);
                if self.space.state(state_idx).is_mastered(concept) {
                    fluency[question]
                } else {
                    guess[question]
                }
            }
            ObservationFunction::Table { correct } => correct[state_idx][question],
        }
    }

    pub fn p_observation(
        &self,
        state_idx: usize,
        question: usize,
        observation: crate::domain::trajectory::Observation,
    ) -> f64 {
        let p = self.p_correct(state_idx, question);
        if observation.is_correct() {
            p
        } else {
            1.0 - p
        }
    }

    /// Transition probability for `pattern` acting on `concept`.
    pub fn transition_prob(&self, pattern: usize, from: usize, concept: usize, to: usize) -> f64 {
        let dynamics = self.components[pattern].transition[concept];
        match self.space.acquire_target(from, concept) {
            Some(target) => {
                if to == target {
                    dynamics.learn
                } else if to == from {
                    dynamics.stay
                } else {
                    0.0
                }
            }
            // Already mastered, or the flip would leave the space.
            None => {
                if to == from {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Fills `row` with the transition distribution from `from` under a
    /// question on `concept`.
    pub fn transition_row(&self, pattern: usize, from: usize, concept: usize, row: &mut [f64]) {
        row.fill(0.0);
        match self.space.acquire_target(from, concept) {
            Some(target) => {
                let dynamics = self.components[pattern].transition[concept];
                row[target] += dynamics.learn;
                row[from] += dynamics.stay;
            }
            None => row[from] = 1.0,
        }
    }

    /// Mean membership per pattern: the stored summary, else the column
    /// means of the membership matrix, else uniform.
    pub fn pattern_prior(&self) -> Vec<f64> {
        if let Some(prior) = &self.pattern_prior {
            return prior.clone();
        }
        if let Some(w) = &self.membership {
            if !w.is_empty() {
                let k = self.pattern_count();
                let mut mean = vec![0.0; k];
                for row in w {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= w.len() as f64;
                }
                return mean;
            }
        }
        let k = self.pattern_count();
        vec![1.0 / k as f64; k]
    }

    /// Runs every structural check; an empty list means the model is
    /// valid within tolerance. Diagnostics only, never fails.
    pub fn validate(&self) -> Vec<Violation> {
        validate_model(self)
    }
}

/// A named invariant violation with its location and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: InvariantKind,
    pub location: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantKind {
    /// A distribution does not sum to 1.
    DistributionSum,
    /// A transition row does not sum to 1.
    TransitionRowSum,
    /// A probability lies outside [0, 1].
    ProbabilityRange,
    /// Mastery must not answer worse than guessing (fluency > guess).
    MasteryInformative,
    /// A membership row does not sum to 1.
    MembershipRowSum,
    /// A table has the wrong shape for the model.
    Shape,
    /// Discount outside [0, 1].
    DiscountRange,
}

impl InvariantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InvariantKind::DistributionSum => "distribution-sum",
            InvariantKind::TransitionRowSum => "transition-row-sum",
            InvariantKind::ProbabilityRange => "probability-range",
            InvariantKind::MasteryInformative => "mastery-informative",
            InvariantKind::MembershipRowSum => "membership-row-sum",
            InvariantKind::Shape => "shape",
            InvariantKind::DiscountRange => "discount-range",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} at {} (residual {:.3e})",
            self.invariant.as_str(),
            self.location,
            self.residual
        )
    }
}

fn push_range_checks(out: &mut Vec<Violation>, value: f64, location: &str) {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        let residual = if value.is_nan() {
            f64::NAN
        } else if value < 0.0 {
            -value
        } else {
            value - 1.0
        };
        out.push(Violation {
            invariant: InvariantKind::ProbabilityRange,
            location: location.to_string(),
            residual,
        });
    }
}

/// Checks every structural invariant of the model and reports each
/// violation with its location and residual.
pub fn validate_model(model: &HPomdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_states = model.space.len();
    let k = model.graph.concept_count();

    if model.components.is_empty() {
        out.push(Violation {
            invariant: InvariantKind::Shape,
            location: "components".into(),
            residual: 0.0,
        });
    }

    for (j, component) in model.components.iter().enumerate() {
        if component.initial.len() != n_states {
            out.push(Violation {
                invariant: InvariantKind::Shape,
                location: format!("components[{j}].initial"),
                residual: component.initial.len() as f64 - n_states as f64,
            });
        } else {
            let sum: f64 = component.initial.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                out.push(Violation {
                    invariant: InvariantKind::DistributionSum,
                    location: format!("components[{j}].initial"),
                    residual: (sum - 1.0).abs(),
                });
            }
            for (s, &p) in component.initial.iter().enumerate() {
                push_range_checks(&mut out, p, &format!("components[{j}].initial[{s}]"));
            }
        }

        if component.transition.len() != k {
            out.push(Violation {
                invariant: InvariantKind::Shape,
                location: format!("components[{j}].transition"),
                residual: component.transition.len() as f64 - k as f64,
            });
            continue;
        }
        for (c, dynamics) in component.transition.iter().enumerate() {
            let name = model.graph.concept_name(c);
            let sum = dynamics.learn + dynamics.stay;
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                out.push(Violation {
                    invariant: InvariantKind::TransitionRowSum,
                    location: format!("components[{j}].transition[{name}]"),
                    residual: (sum - 1.0).abs(),
                });
            }
            push_range_checks(&mut out, dynamics.learn, &format!("components[{j}].transition[{name}].learn"));
            push_range_checks(&mut out, dynamics.stay, &format!("components[{j}].transition[{name}].stay"));
        }
    }

    match &model.observation {
        ObservationFunction::PerQuestion { guess, fluency } => {
            if guess.len() != model.catalog.len() || fluency.len() != model.catalog.len() {
                out.push(Violation {
                    invariant: InvariantKind::Shape,
                    location: "observation".into(),
                    residual: 0.0,
                });
            } else {
                for q in 0..model.catalog.len() {
                    let id = model.catalog.id_of(q);
                    push_range_checks(&mut out, guess[q], &format!("observation[{id}].guess"));
                    push_range_checks(&mut out, fluency[q], &format!("observation[{id}].fluency"));
                    if fluency[q] <= guess[q] {
                        out.push(Violation {
                            invariant: InvariantKind::MasteryInformative,
                            location: format!("observation[{id}]"),
                            residual: guess[q] - fluency[q],
                        });
                    }
                }
            }
        }
        ObservationFunction::Table { correct } => {
            if correct.len() != n_states || correct.iter().any(|row| row.len() != model.catalog.len()) {
                out.push(Violation {
                    invariant: InvariantKind::Shape,
                    location: "observation.table".into(),
                    residual: 0.0,
                });
            } else {
                for (s, row) in correct.iter().enumerate() {
                    for (q, &p) in row.iter().enumerate() {
                        push_range_checks(&mut out, p, &format!("observation.table[{s}][{q}]"));
                    }
                }
            }
        }
    }

    if let RewardSpec::PerState(values) = &model.reward {
        if values.len() != n_states {
            out.push(Violation {
                invariant: InvariantKind::Shape,
                location: "reward".into(),
                residual: values.len() as f64 - n_states as f64,
            });
        } else if let Some((s, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            out.push(Violation {
                invariant: InvariantKind::ProbabilityRange,
                location: format!("reward[{s}]"),
                residual: v,
            });
        }
    }

    if !(0.0..=1.0).contains(&model.discount) || model.discount.is_nan() {
        out.push(Violation {
            invariant: InvariantKind::DiscountRange,
            location: "discount".into(),
            residual: model.discount,
        });
    }

    if let Some(w) = &model.membership {
        let patterns = model.pattern_count();
        for (i, row) in w.iter().enumerate() {
            if row.len() != patterns {
                out.push(Violation {
                    invariant: InvariantKind::Shape,
                    location: format!("membership[{i}]"),
                    residual: row.len() as f64 - patterns as f64,
                });
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                out.push(Violation {
                    invariant: InvariantKind::MembershipRowSum,
                    location: format!("membership[{i}]"),
                    residual: (sum - 1.0).abs(),
                });
            }
        }
    }
    if let Some(prior) = &model.pattern_prior {
        let sum: f64 = prior.iter().sum();
        if prior.len() != model.pattern_count() {
            out.push(Violation {
                invariant: InvariantKind::Shape,
                location: "patternPrior".into(),
                residual: prior.len() as f64 - model.pattern_count() as f64,
            });
        } else if (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(Violation {
                invariant: InvariantKind::DistributionSum,
                location: "patternPrior".into(),
                residual: (sum - 1.0).abs(),
            });
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures;

    #[test]
    fn toy_model_is_valid() {
        let model = fixtures::toy_single_concept();
        assert!(model.validate().is_empty());
    }

    #[test]
    fn broken_transition_row_is_reported_with_residual() {
        let mut model = fixtures::toy_single_concept();
        model.components[0].transition[0] = ConceptTransition { learn: 0.28, stay: 0.7 };
        let violations = model.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].invariant, InvariantKind::TransitionRowSum);
        assert!((violations[0].residual - 0.02).abs() < 1e-12);
        assert!(violations[0].location.contains("transition"));
    }

    #[test]
    fn inverted_guess_fluency_violates_mastery_informative() {
        let mut model = fixtures::toy_single_concept();
        if let ObservationFunction::PerQuestion { guess, fluency } = &mut model.observation {
            guess[0] = 0.7;
            fluency[0] = 0.6;
        }
        let violations = model.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].invariant, InvariantKind::MasteryInformative);
        assert!((violations[0].residual - 0.1).abs() < 1e-12);
    }

    #[test]
    fn initial_distribution_sum_checked() {
        let mut model = fixtures::toy_single_concept();
        model.components[0].initial = vec![0.5, 0.4];
        let violations = model.validate();
        assert!(violations
            .iter()
            .any(|v| v.invariant == InvariantKind::DistributionSum && (v.residual - 0.1).abs() < 1e-9));
    }

    #[test]
    fn transition_rows_honor_filtered_space() {
        let model = fixtures::two_concept_chain(0.5, 0.5);
        let empty = 0; // state 00
        let mut row = vec![0.0; model.space.len()];
        // Acting on the child concept from 00 cannot flip: self-loop.
        model.transition_row(0, empty, 1, &mut row);
        assert_eq!(row[empty], 1.0);
        assert_eq!(row.iter().sum::<f64>(), 1.0);
        // Acting on the root concept splits between stay and acquire.
        model.transition_row(0, empty, 0, &mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(row[empty], 0.5);
    }

    #[test]
    fn mastered_state_is_absorbing_for_its_concept() {
        let model = fixtures::toy_single_concept();
        assert_eq!(model.transition_prob(0, 1, 0, 1), 1.0);
        assert_eq!(model.transition_prob(0, 1, 0, 0), 0.0);
    }
}
