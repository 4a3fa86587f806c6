//! Hierarchical belief tracking.
//!
//! A belief over a mixture model has two levels: `pattern[m]` is the
//! probability that the student follows cognitive pattern `m`, and
//! `state[m][s]` the probability of knowledge state `s` given pattern
//! `m`. Each answer updates the pattern level first, using only the
//! pre-transition observation likelihood, and then filters each pattern's
//! state belief through its own dynamics.

use crate::domain::{HPomdpModel, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// Distribution over patterns; sums to 1.
    pub pattern: Vec<f64>,
    /// Per-pattern distribution over states; each row sums to 1.
    pub state: Vec<Vec<f64>>,
}

impl Belief {
    pub fn pattern_count(&self) -> usize {
        self.pattern.len()
    }

    /// Marginal state distribution, mixing patterns.
    pub fn state_marginal(&self) -> Vec<f64> {
        let n = self.state.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (bm, bs) in self.pattern.iter().zip(&self.state) {
            for (o, &v) in out.iter_mut().zip(bs) {
                *o += bm * v;
            }
        }
        out
    }

    /// Expected terminal reward under the mixed state marginal.
    pub fn expected_reward(&self, model: &HPomdpModel) -> f64 {
        self.state_marginal()
            .iter()
            .enumerate()
            .map(|(s, &p)| p * model.reward.value(model.space.state(s), s))
            .sum()
    }
}

/// Population-average starting belief: the pattern level is the mean
/// fitted membership (uniform when the model carries none) and each
/// pattern's state belief is its initial distribution.
pub fn init_belief(model: &HPomdpModel) -> Belief {
    Belief {
        pattern: model.pattern_prior(),
        state: model.components.iter().map(|c| c.initial.clone()).collect(),
    }
}

/// One-step observation likelihood of `observation` on `question` under
/// pattern `m`, before any transition.
fn pattern_evidence(
    model: &HPomdpModel,
    belief: &Belief,
    m: usize,
    question: usize,
    observation: Observation,
) -> f64 {
    belief.state[m]
        .iter()
        .enumerate()
        .map(|(s, &p)| p * model.p_observation(s, question, observation))
        .sum()
}

/// Folds one answered question into the belief.
///
/// The pattern level is reweighted by each pattern's pre-transition
/// observation likelihood; each state belief is observation-reweighted,
/// propagated through that pattern's dynamics and renormalized. Errors
/// when the observation has probability 0 under every pattern.
pub fn update_belief(
    model: &HPomdpModel,
    belief: &Belief,
    question: usize,
    observation: Observation,
) -> Result<Belief> {
    let k = model.pattern_count();
    let n_states = model.space.len();
    let concept = model.catalog.concept_of(question);

    let evidence: Vec<f64> =
        (0..k).map(|m| pattern_evidence(model, belief, m, question, observation)).collect();
    let total: f64 = evidence.iter().zip(&belief.pattern).map(|(e, bm)| e * bm).sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleEvidence {
            question: model.catalog.id_of(question).to_string(),
            observation: observation.as_str().to_string(),
        });
    }

    let pattern: Vec<f64> =
        belief.pattern.iter().zip(&evidence).map(|(bm, e)| bm * e / total).collect();

    let mut state = Vec::with_capacity(k);
    for m in 0..k {
        let mut next = vec![0.0; n_states];
        let dynamics = model.components[m].transition[concept];
        if evidence[m] > 0.0 {
            for s in 0..n_states {
                let weighted = belief.state[m][s] * model.p_observation(s, question, observation);
                match model.space.acquire_target(s, concept) {
                    Some(target) => {
                        next[target] += weighted * dynamics.learn;
                        next[s] += weighted * dynamics.stay;
                    }
                    None => next[s] += weighted,
                }
            }
            let norm: f64 = next.iter().sum();
            for v in &mut next {
                *v /= norm;
            }
        } else {
            // The pattern assigned this observation probability 0; its
            // posterior weight is 0, so propagate the prior through the
            // dynamics to keep the row a valid distribution.
            for s in 0..n_states {
                let p = belief.state[m][s];
                match model.space.acquire_target(s, concept) {
                    Some(target) => {
                        next[target] += p * dynamics.learn;
                        next[s] += p * dynamics.stay;
                    }
                    None => next[s] += p,
                }
            }
        }
        state.push(next);
    }

    Ok(Belief { pattern, state })
}

/// Probability of answering `question` correctly under the belief.
pub fn predict_response(model: &HPomdpModel, belief: &Belief, question: usize) -> f64 {
    belief
        .pattern
        .iter()
        .enumerate()
        .map(|(m, &bm)| bm * pattern_evidence(model, belief, m, question, Observation::Correct))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::toy_single_concept;
    use crate::domain::{ConceptTransition, ObservationFunction, PatternComponent};
    use crate::inference::sequence_log_likelihood;
    use crate::domain::{Step, Trajectory};

    fn two_pattern_toy(learn_a: f64, learn_b: f64) -> crate::domain::HPomdpModel {
        let mut model = toy_single_concept();
        let base = model.components[0].clone();
        model.components = vec![
            PatternComponent { transition: vec![ConceptTransition::new(learn_a)], ..base.clone() },
            PatternComponent { transition: vec![ConceptTransition::new(learn_b)], ..base },
        ];
        model
    }

    #[test]
    fn init_uses_membership_column_means() {
        let mut model = two_pattern_toy(0.3, 0.1);
        model.membership = Some(vec![vec![0.9, 0.1], vec![0.5, 0.5]]);
        let belief = init_belief(&model);
        assert!((belief.pattern[0] - 0.7).abs() < 1e-12);
        assert!((belief.pattern[1] - 0.3).abs() < 1e-12);
        assert_eq!(belief.state[0], model.components[0].initial);
    }

    #[test]
    fn init_without_membership_is_uniform() {
        let model = two_pattern_toy(0.3, 0.1);
        let belief = init_belief(&model);
        assert_eq!(belief.pattern, vec![0.5, 0.5]);
    }

    #[test]
    fn init_single_pattern() {
        let model = toy_single_concept();
        let belief = init_belief(&model);
        assert_eq!(belief.pattern, vec![1.0]);
        assert_eq!(belief.state[0], vec![0.6, 0.4]);
    }

    #[test]
    fn update_matches_hand_computation() {
        let model = toy_single_concept();
        let belief = init_belief(&model);
        let updated = update_belief(&model, &belief, 0, Observation::Correct).unwrap();
        // (0.6*0.2*0.3 + 0.4*0.9*1.0) / 0.48
        assert!((updated.state[0][1] - 0.825).abs() < 1e-12);
        assert!((updated.state[0][0] - 0.175).abs() < 1e-12);
        assert_eq!(updated.pattern, vec![1.0]);
    }

    #[test]
    fn identical_state_beliefs_leave_pattern_level_unchanged() {
        // Patterns differ only in dynamics; the pattern update uses no
        // transition term, so it cannot distinguish them.
        let model = two_pattern_toy(0.9, 0.05);
        let belief = init_belief(&model);
        let updated = update_belief(&model, &belief, 0, Observation::Correct).unwrap();
        assert!((updated.pattern[0] - 0.5).abs() < 1e-12);
        assert!((updated.pattern[1] - 0.5).abs() < 1e-12);
        assert!(updated.state[0] != updated.state[1]);
    }

    #[test]
    fn uninformative_observation_is_pure_propagation() {
        let mut model = two_pattern_toy(0.3, 0.1);
        model.observation = ObservationFunction::Table { correct: vec![vec![0.5], vec![0.5]] };
        let belief = init_belief(&model);
        let updated = update_belief(&model, &belief, 0, Observation::Incorrect).unwrap();
        assert_eq!(updated.pattern, belief.pattern);
        // state = prior pushed through the dynamics only
        assert!((updated.state[0][1] - (0.4 + 0.6 * 0.3)).abs() < 1e-12);
        assert!((updated.state[1][1] - (0.4 + 0.6 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn predictions_marginalize_over_both_levels() {
        let model = toy_single_concept();
        let belief = init_belief(&model);
        assert!((predict_response(&model, &belief, 0) - 0.48).abs() < 1e-12);
    }

    #[test]
    fn degenerate_mastered_belief_predicts_fluency() {
        let model = toy_single_concept();
        let belief = Belief { pattern: vec![1.0], state: vec![vec![0.0, 1.0]] };
        assert!((predict_response(&model, &belief, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_pattern_is_ignored_in_prediction() {
        let model = two_pattern_toy(0.3, 0.1);
        let belief = Belief {
            pattern: vec![1.0, 0.0],
            state: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert!((predict_response(&model, &belief, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn update_preserves_normalization_tightly() {
        let model = two_pattern_toy(0.35, 0.02);
        let mut belief = init_belief(&model);
        for bit in [1u8, 0, 0, 1, 1, 1, 0, 1] {
            belief =
                update_belief(&model, &belief, 0, crate::domain::Observation::from_bit(bit)).unwrap();
            let bm_sum: f64 = belief.pattern.iter().sum();
            assert!((bm_sum - 1.0).abs() < 1e-12);
            for row in &belief.state {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn folded_pattern_belief_matches_sequence_likelihoods() {
        // bm after a trajectory must be proportional to
        // bm_1(m) * P(O | m, A).
        let model = two_pattern_toy(0.45, 0.08);
        let steps = vec![
            Step { question: 0, observation: Observation::Correct },
            Step { question: 0, observation: Observation::Incorrect },
            Step { question: 0, observation: Observation::Correct },
            Step { question: 0, observation: Observation::Correct },
        ];
        let trajectory = Trajectory { student: "s".into(), steps: steps.clone() };
        let mut belief = init_belief(&model);
        for step in &steps {
            belief = update_belief(&model, &belief, step.question, step.observation).unwrap();
        }
        let ll0 = sequence_log_likelihood(&model, 0, &trajectory).unwrap();
        let ll1 = sequence_log_likelihood(&model, 1, &trajectory).unwrap();
        let want = (0.5 * ll0.exp()) / (0.5 * ll0.exp() + 0.5 * ll1.exp());
        assert!(
            (belief.pattern[0].ln() - want.ln()).abs() < 1e-9,
            "{} vs {want}",
            belief.pattern[0]
        );
    }

    #[test]
    fn impossible_evidence_names_the_action() {
        let mut model = toy_single_concept();
        model.observation = ObservationFunction::per_question(vec![0.0], vec![1.0]);
        let belief = Belief { pattern: vec![1.0], state: vec![vec![1.0, 0.0]] };
        let err = update_belief(&model, &belief, 0, Observation::Correct).unwrap_err();
        match err {
            crate::Error::ImpossibleEvidence { question, observation } => {
                assert_eq!(question, "q");
                assert_eq!(observation, "correct");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn single_pattern_update_equals_plain_filter() {
        // Directly coded single-POMDP belief update for comparison.
        let model = toy_single_concept();
        let bs = vec![0.7, 0.3];
        let obs = Observation::Incorrect;
        let mut expected = vec![0.0; 2];
        let weighted: Vec<f64> =
            (0..2).map(|s| bs[s] * model.p_observation(s, 0, obs)).collect();
        for s in 0..2 {
            for s2 in 0..2 {
                expected[s2] += weighted[s] * model.transition_prob(0, s, 0, s2);
            }
        }
        let norm: f64 = expected.iter().sum();
        expected.iter_mut().for_each(|v| *v /= norm);

        let belief = Belief { pattern: vec![1.0], state: vec![bs] };
        let updated = update_belief(&model, &belief, 0, obs).unwrap();
        for s in 0..2 {
            assert!((updated.state[0][s] - expected[s]).abs() < 1e-12);
        }
    }
}
