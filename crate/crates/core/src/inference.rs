//! Action-conditioned forward-backward over one pattern component:
//! sequence likelihoods and state-posterior marginals.
//!
//! Probabilities are rescaled every step (the running filter is
//! normalized and the log of each normalizer accumulated), so nothing
//! underflows even for sequences of length 10^4. All posterior ratios
//! are unchanged by the rescaling.

use crate::domain::{HPomdpModel, Trajectory};
use crate::error::{Error, Result};

/// Materialized xi tensors above this many entries are refused.
const MAX_XI_ENTRIES: usize = 50_000_000;

/// Posterior state marginals of one trajectory under one component.
///
/// `gamma[t][s]` is the posterior probability of occupying state `s`
/// when answering step `t` (0-based); `xi[t][s][s2]` the joint posterior
/// of occupying `s` at step `t` and `s2` after the step's transition.
/// The last xi slice covers the transition out of the final step.
/// For an impossible sequence (`log_likelihood == -inf`) both tables are
/// empty.
#[derive(Debug, Clone)]
pub struct PosteriorTables {
    pub gamma: Vec<Vec<f64>>,
    pub xi: Vec<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
    /// Per-step normalizers; their logs sum to `log_likelihood`.
    pub scaling: Vec<f64>,
}

impl PosteriorTables {
    pub fn is_impossible(&self) -> bool {
        self.log_likelihood == f64::NEG_INFINITY
    }

    /// Distribution over the state reached after the final transition.
    pub fn final_state_marginal(&self) -> Option<Vec<f64>> {
        let last = self.xi.last()?;
        let n = last.len();
        let mut out = vec![0.0; n];
        for row in last {
            for (s2, &v) in row.iter().enumerate() {
                out[s2] += v;
            }
        }
        Some(out)
    }
}

/// Scaled forward/backward tables kept in filter form; the dense xi
/// tensor is derived from these on demand.
#[derive(Debug, Clone)]
pub(crate) struct ForwardBackward {
    /// `alpha[t][s]`: P(s_t = s | o_1..o_t), normalized per step.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[t][s]`, scaled so that sum_s alpha[t][s] beta[t][s] = 1.
    pub beta: Vec<Vec<f64>>,
    pub scaling: Vec<f64>,
    pub log_likelihood: f64,
}

fn check_inputs(model: &HPomdpModel, pattern: usize, trajectory: &Trajectory) -> Result<()> {
    if pattern >= model.pattern_count() {
        return Err(Error::contract(format!(
            "pattern index {pattern} out of range ({} components)",
            model.pattern_count()
        )));
    }
    if trajectory.is_empty() {
        return Err(Error::contract(format!(
            "trajectory for student {:?} is empty",
            trajectory.student
        )));
    }
    for step in &trajectory.steps {
        if step.question >= model.catalog.len() {
            return Err(Error::contract(format!(
                "trajectory for student {:?} references unknown action index {}",
                trajectory.student, step.question
            )));
        }
    }
    Ok(())
}

/// Runs the scaled forward and backward passes. `Ok(None)` means the
/// sequence has probability exactly 0 under this component.
pub(crate) fn forward_backward(
    model: &HPomdpModel,
    pattern: usize,
    trajectory: &Trajectory,
) -> Result<Option<ForwardBackward>> {
    check_inputs(model, pattern, trajectory)?;
    let n_states = model.space.len();
    let steps = &trajectory.steps;
    let n = steps.len();

    let mut alpha = vec![vec![0.0; n_states]; n];
    let mut scaling = vec![0.0; n];
    let mut propagated = vec![0.0; n_states];

    for t in 0..n {
        let step = steps[t];
        if t == 0 {
            propagated.copy_from_slice(&model.components[pattern].initial);
        } else {
            let prev_concept = model.catalog.concept_of(steps[t - 1].question);
            propagate(model, pattern, prev_concept, &alpha[t - 1], &mut propagated);
        }
        let mut norm = 0.0;
        for s in 0..n_states {
            let v = propagated[s] * model.p_observation(s, step.question, step.observation);
            alpha[t][s] = v;
            norm += v;
        }
        if norm <= 0.0 {
            return Ok(None);
        }
        scaling[t] = norm;
        for v in &mut alpha[t] {
            *v /= norm;
        }
    }

    let mut beta = vec![vec![0.0; n_states]; n];
    beta[n - 1].fill(1.0);
    for t in (0..n - 1).rev() {
        let concept = model.catalog.concept_of(steps[t].question);
        let next = steps[t + 1];
        let inv_norm = 1.0 / scaling[t + 1];
        // emit[s] = O(o_{t+1} | s, a_{t+1}) beta_{t+1}(s)
        let emit: Vec<f64> = (0..n_states)
            .map(|s| model.p_observation(s, next.question, next.observation) * beta[t + 1][s])
            .collect();
        for s in 0..n_states {
            let acc = match model.space.acquire_target(s, concept) {
                Some(target) => {
                    let d = model.components[pattern].transition[concept];
                    d.learn * emit[target] + d.stay * emit[s]
                }
                None => emit[s],
            };
            beta[t][s] = acc * inv_norm;
        }
    }

    let log_likelihood = scaling.iter().map(|c| c.ln()).sum();
    Ok(Some(ForwardBackward { alpha, beta, scaling, log_likelihood }))
}

/// dst(s2) = sum_s src(s) T(s2 | s, concept)
fn propagate(model: &HPomdpModel, pattern: usize, concept: usize, src: &[f64], dst: &mut [f64]) {
    dst.fill(0.0);
    let dynamics = model.components[pattern].transition[concept];
    for (s, &v) in src.iter().enumerate() {
        match model.space.acquire_target(s, concept) {
            Some(target) => {
                dst[target] += v * dynamics.learn;
                dst[s] += v * dynamics.stay;
            }
            None => dst[s] += v,
        }
    }
}

/// Log of the sequence generation probability under one component,
/// marginalized over state sequences. Returns `-inf` for a sequence
/// with probability exactly 0 (an impossible observation is reported
/// this way, never silently renormalized).
pub fn sequence_log_likelihood(
    model: &HPomdpModel,
    pattern: usize,
    trajectory: &Trajectory,
) -> Result<f64> {
    check_inputs(model, pattern, trajectory)?;
    let n_states = model.space.len();
    let steps = &trajectory.steps;
    let mut current = vec![0.0; n_states];
    let mut propagated = vec![0.0; n_states];
    let mut log_likelihood = 0.0;
    for t in 0..steps.len() {
        let step = steps[t];
        if t == 0 {
            propagated.copy_from_slice(&model.components[pattern].initial);
        } else {
            let prev_concept = model.catalog.concept_of(steps[t - 1].question);
            propagate(model, pattern, prev_concept, &current, &mut propagated);
        }
        let mut norm = 0.0;
        for s in 0..n_states {
            let v = propagated[s] * model.p_observation(s, step.question, step.observation);
            current[s] = v;
            norm += v;
        }
        if norm <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_likelihood += norm.ln();
        for v in &mut current {
            *v /= norm;
        }
    }
    Ok(log_likelihood)
}

/// Full posterior marginals for one trajectory under one component.
pub fn posterior_marginals(
    model: &HPomdpModel,
    pattern: usize,
    trajectory: &Trajectory,
) -> Result<PosteriorTables> {
    let n_states = model.space.len();
    let n = trajectory.steps.len();
    if n.saturating_mul(n_states).saturating_mul(n_states) > MAX_XI_ENTRIES {
        return Err(Error::capacity(format!(
            "posterior tables need {n} x {n_states} x {n_states} entries; \
             reduce the sequence length or state space"
        )));
    }
    let fb = match forward_backward(model, pattern, trajectory)? {
        Some(fb) => fb,
        None => {
            return Ok(PosteriorTables {
                gamma: Vec::new(),
                xi: Vec::new(),
                log_likelihood: f64::NEG_INFINITY,
                scaling: Vec::new(),
            })
        }
    };

    let steps = &trajectory.steps;
    let mut gamma = vec![vec![0.0; n_states]; n];
    for t in 0..n {
        for s in 0..n_states {
            gamma[t][s] = fb.alpha[t][s] * fb.beta[t][s];
        }
    }

    let mut xi = vec![vec![vec![0.0; n_states]; n_states]; n];
    for t in 0..n {
        let concept = model.catalog.concept_of(steps[t].question);
        let dynamics = model.components[pattern].transition[concept];
        if t + 1 < n {
            let next = steps[t + 1];
            let inv_norm = 1.0 / fb.scaling[t + 1];
            for s in 0..n_states {
                let base = fb.alpha[t][s] * inv_norm;
                match model.space.acquire_target(s, concept) {
                    Some(target) => {
                        xi[t][s][target] = base
                            * dynamics.learn
                            * model.p_observation(target, next.question, next.observation)
                            * fb.beta[t + 1][target];
                        xi[t][s][s] = base
                            * dynamics.stay
                            * model.p_observation(s, next.question, next.observation)
                            * fb.beta[t + 1][s];
                    }
                    None => {
                        xi[t][s][s] = base
                            * model.p_observation(s, next.question, next.observation)
                            * fb.beta[t + 1][s];
                    }
                }
            }
        } else {
            // Transition out of the final step: no later evidence, so the
            // joint is the posterior times the transition row.
            for s in 0..n_states {
                match model.space.acquire_target(s, concept) {
                    Some(target) => {
                        xi[t][s][target] = gamma[t][s] * dynamics.learn;
                        xi[t][s][s] = gamma[t][s] * dynamics.stay;
                    }
                    None => xi[t][s][s] = gamma[t][s],
                }
            }
        }
    }

    Ok(PosteriorTables { gamma, xi, log_likelihood: fb.log_likelihood, scaling: fb.scaling })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::{toy_single_concept, two_concept_chain};
    use crate::domain::{
        ConceptGraph, HPomdpModel, Observation, ObservationFunction, Step, Trajectory,
    };
    use rand::Rng;

    fn traj(steps: &[(usize, u8)]) -> Trajectory {
        Trajectory {
            student: "s".into(),
            steps: steps
                .iter()
                .map(|&(q, bit)| Step { question: q, observation: Observation::from_bit(bit) })
                .collect(),
        }
    }

    /// Brute-force likelihood and posteriors by enumerating every state
    /// sequence; the independent oracle for the forward-backward path.
    fn enumerate_posteriors(
        model: &HPomdpModel,
        pattern: usize,
        trajectory: &Trajectory,
    ) -> (f64, Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let n_states = model.space.len();
        let n = trajectory.steps.len();
        let mut total = 0.0;
        let mut gamma = vec![vec![0.0; n_states]; n];
        let mut xi = vec![vec![vec![0.0; n_states]; n_states]; n];
        // Paths over s_1..s_{n+1} (state after the last answer included).
        let path_count = (n_states as u64).pow(n as u32 + 1);
        for code in 0..path_count {
            let mut digits = Vec::with_capacity(n + 1);
            let mut rest = code;
            for _ in 0..=n {
                digits.push((rest % n_states as u64) as usize);
                rest /= n_states as u64;
            }
            let mut p = model.components[pattern].initial[digits[0]];
            for (t, step) in trajectory.steps.iter().enumerate() {
                p *= model.p_observation(digits[t], step.question, step.observation);
                let concept = model.catalog.concept_of(step.question);
                p *= model.transition_prob(pattern, digits[t], concept, digits[t + 1]);
            }
            if p == 0.0 {
                continue;
            }
            total += p;
            for t in 0..n {
                gamma[t][digits[t]] += p;
                xi[t][digits[t]][digits[t + 1]] += p;
            }
        }
        if total > 0.0 {
            for t in 0..n {
                for s in 0..n_states {
                    gamma[t][s] /= total;
                    for s2 in 0..n_states {
                        xi[t][s][s2] /= total;
                    }
                }
            }
        }
        (total, gamma, xi)
    }

    fn random_model(rng: &mut impl Rng) -> HPomdpModel {
        let mut model = if rng.gen_bool(0.5) {
            two_concept_chain(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95))
        } else {
            toy_single_concept()
        };
        let n = model.space.len();
        let mut initial: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|v| *v /= sum);
        model.components[0].initial = initial;
        if let ObservationFunction::PerQuestion { guess, fluency } = &mut model.observation {
            for q in 0..guess.len() {
                guess[q] = rng.gen_range(0.05..0.45);
                fluency[q] = rng.gen_range(0.55..0.95);
            }
        }
        model
    }

    fn random_trajectory(model: &HPomdpModel, len: usize, rng: &mut impl Rng) -> Trajectory {
        Trajectory {
            student: "r".into(),
            steps: (0..len)
                .map(|_| Step {
                    question: rng.gen_range(0..model.catalog.len()),
                    observation: Observation::from_bit(rng.gen_range(0..=1)),
                })
                .collect(),
        }
    }

    #[test]
    fn toy_single_step_likelihood_by_hand() {
        let model = toy_single_concept();
        let ll = sequence_log_likelihood(&model, 0, &traj(&[(0, 1)])).unwrap();
        assert!((ll.exp() - 0.48).abs() < 1e-12, "got {}", ll.exp());
    }

    #[test]
    fn deterministic_consistent_sequence_has_log_likelihood_zero() {
        let mut model = toy_single_concept();
        model.components[0].initial = vec![0.0, 1.0];
        model.observation = ObservationFunction::per_question(vec![0.0], vec![1.0]);
        let ll = sequence_log_likelihood(&model, 0, &traj(&[(0, 1), (0, 1), (0, 1)])).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn matches_enumeration_on_four_state_chain() {
        let mut rng = crate::rng::stream(11, crate::rng::StreamKind::Synthetic, 0);
        for _ in 0..20 {
            let model = random_model(&mut rng);
            let trajectory = random_trajectory(&model, 5, &mut rng);
            let expected = enumerate_posteriors(&model, 0, &trajectory).0;
            let got = sequence_log_likelihood(&model, 0, &trajectory).unwrap();
            assert!((got.exp() - expected).abs() < 1e-10, "{} vs {expected}", got.exp());
        }
    }

    #[test]
    fn single_step_posterior_by_hand() {
        let model = toy_single_concept();
        let tables = posterior_marginals(&model, 0, &traj(&[(0, 1)])).unwrap();
        assert!((tables.gamma[0][0] - 0.25).abs() < 1e-12);
        assert!((tables.gamma[0][1] - 0.75).abs() < 1e-12);
        assert_eq!(tables.gamma.len(), 1);
        assert_eq!(tables.xi.len(), 1);
    }

    #[test]
    fn uninformative_table_observation_gives_uniform_posterior() {
        let mut model = toy_single_concept();
        model.components[0].initial = vec![0.5, 0.5];
        model.observation = ObservationFunction::Table { correct: vec![vec![0.5], vec![0.5]] };
        let tables = posterior_marginals(&model, 0, &traj(&[(0, 1)])).unwrap();
        assert!((tables.gamma[0][0] - 0.5).abs() < 1e-15);
        assert!((tables.gamma[0][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posteriors_match_enumeration() {
        let mut rng = crate::rng::stream(13, crate::rng::StreamKind::Synthetic, 0);
        for _ in 0..20 {
            let model = random_model(&mut rng);
            let trajectory = random_trajectory(&model, 4, &mut rng);
            let (want_ll, want_gamma, want_xi) = enumerate_posteriors(&model, 0, &trajectory);
            let tables = posterior_marginals(&model, 0, &trajectory).unwrap();
            assert!((tables.log_likelihood.exp() - want_ll).abs() < 1e-10);
            for t in 0..trajectory.len() {
                for s in 0..model.space.len() {
                    assert!(
                        (tables.gamma[t][s] - want_gamma[t][s]).abs() < 1e-10,
                        "gamma[{t}][{s}]"
                    );
                    for s2 in 0..model.space.len() {
                        assert!(
                            (tables.xi[t][s][s2] - want_xi[t][s][s2]).abs() < 1e-10,
                            "xi[{t}][{s}][{s2}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_invariants_hold() {
        let mut rng = crate::rng::stream(17, crate::rng::StreamKind::Synthetic, 0);
        for _ in 0..20 {
            let model = random_model(&mut rng);
            let trajectory = random_trajectory(&model, 6, &mut rng);
            let tables = posterior_marginals(&model, 0, &trajectory).unwrap();
            assert!(
                (tables.log_likelihood
                    - sequence_log_likelihood(&model, 0, &trajectory).unwrap())
                .abs()
                    < 1e-12
            );
            for t in 0..trajectory.len() {
                let row_sum: f64 = tables.gamma[t].iter().sum();
                assert!((row_sum - 1.0).abs() < 1e-9, "gamma row {t} sums to {row_sum}");
                let slice_sum: f64 = tables.xi[t].iter().flatten().sum();
                assert!((slice_sum - 1.0).abs() < 1e-9, "xi slice {t} sums to {slice_sum}");
                for s in 0..model.space.len() {
                    let marginal: f64 = tables.xi[t][s].iter().sum();
                    assert!(
                        (marginal - tables.gamma[t][s]).abs() < 1e-9,
                        "xi marginal mismatch at t={t} s={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn scaling_scheme_matches_unscaled_products() {
        // Direct unscaled forward pass, viable only for short sequences.
        fn unscaled(model: &HPomdpModel, trajectory: &Trajectory) -> f64 {
            let n_states = model.space.len();
            let mut current = model.components[0].initial.clone();
            let mut next = vec![0.0; n_states];
            for (t, step) in trajectory.steps.iter().enumerate() {
                for s in 0..n_states {
                    current[s] *= model.p_observation(s, step.question, step.observation);
                }
                if t + 1 < trajectory.steps.len() {
                    let concept = model.catalog.concept_of(step.question);
                    next.fill(0.0);
                    for s in 0..n_states {
                        for s2 in 0..n_states {
                            next[s2] += current[s] * model.transition_prob(0, s, concept, s2);
                        }
                    }
                    std::mem::swap(&mut current, &mut next);
                }
            }
            current.iter().sum()
        }

        let mut rng = crate::rng::stream(19, crate::rng::StreamKind::Synthetic, 0);
        for _ in 0..20 {
            let model = random_model(&mut rng);
            let trajectory = random_trajectory(&model, 8, &mut rng);
            let got = sequence_log_likelihood(&model, 0, &trajectory).unwrap().exp();
            let want = unscaled(&model, &trajectory);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn impossible_observation_reports_zero_likelihood() {
        let mut model = toy_single_concept();
        model.components[0].initial = vec![0.0, 1.0];
        model.observation = ObservationFunction::per_question(vec![0.0], vec![1.0]);
        // Mastered with certainty but answered incorrectly: probability 0.
        let ll = sequence_log_likelihood(&model, 0, &traj(&[(0, 1), (0, 0)])).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
        let tables = posterior_marginals(&model, 0, &traj(&[(0, 0)])).unwrap();
        assert!(tables.is_impossible());
        assert!(tables.gamma.is_empty());
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let model = toy_single_concept();
        let steps: Vec<(usize, u8)> = (0..10_000).map(|i| (0, (i % 2) as u8)).collect();
        let ll = sequence_log_likelihood(&model, 0, &traj(&steps)).unwrap();
        assert!(ll.is_finite());
        assert!(ll < 0.0);
    }

    #[test]
    fn empty_trajectory_is_a_contract_error() {
        let model = toy_single_concept();
        let empty = Trajectory { student: "s".into(), steps: vec![] };
        assert!(sequence_log_likelihood(&model, 0, &empty).is_err());
        assert!(posterior_marginals(&model, 0, &empty).is_err());
    }

    #[test]
    fn final_state_marginal_sums_to_one() {
        let model = two_concept_chain(0.4, 0.5);
        let tables = posterior_marginals(&model, 0, &traj(&[(0, 1), (1, 0)])).unwrap();
        let marginal = tables.final_state_marginal().unwrap();
        assert!((marginal.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_graph_shape_still_checked() {
        // A trajectory referencing an action outside the catalog.
        let model = toy_single_concept();
        let bad = traj(&[(3, 1)]);
        assert!(sequence_log_likelihood(&model, 0, &bad).is_err());
        let _ = ConceptGraph::new(vec!["A"], vec![]).unwrap();
    }
}
