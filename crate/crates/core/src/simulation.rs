//! Simulated-cohort evaluation of question-selection strategies.
//!
//! A ground-truth model generates students: each draws a cognitive
//! pattern from the truth model's pattern prior and an initial state
//! from that pattern. A policy - typically a planner over a *fitted*
//! model, which need not equal the truth - picks questions; the truth
//! model samples answers and state transitions. Final knowledge states
//! are aggregated into proficiency and stability metrics.
//!
//! Every student owns an RNG stream derived from (seed, index), so
//! parallel and serial runs produce bit-identical cohorts.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::belief::{init_belief, update_belief, Belief};
use crate::domain::{
    ConceptGraph, Dataset, HPomdpModel, KnowledgeState, Observation, Step, Trajectory,
};
use crate::error::{Error, Result};
use crate::planning::{best_action, PlannerConfig};
use crate::rng::{stream, StreamKind};

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// A question-selection strategy; sessions are per-student and carry all
/// mutable state, so one policy may serve many concurrent students.
pub trait QuestionPolicy: Sync {
    fn label(&self) -> &str;
    fn start_session(&self) -> Result<Box<dyn PolicySession + '_>>;
}

pub trait PolicySession {
    /// Picks the next question id given how many questions remain.
    fn choose(&mut self, remaining: usize, rng: &mut dyn RngCore) -> Result<String>;
    /// Folds the outcome of the previously chosen question into the
    /// session state.
    fn observe(&mut self, question_id: &str, observation: Observation) -> Result<()>;
}

/// Plans with a belief over its own model, replanning every step with
/// the remaining horizon.
pub struct PlannerPolicy {
    pub model: HPomdpModel,
    pub config: PlannerConfig,
    label: String,
}

impl PlannerPolicy {
    pub fn new(model: HPomdpModel, config: PlannerConfig, label: impl Into<String>) -> Self {
        PlannerPolicy { model, config, label: label.into() }
    }
}

impl QuestionPolicy for PlannerPolicy {
    fn label(&self) -> &str {
        &self.label
    }

    fn start_session(&self) -> Result<Box<dyn PolicySession + '_>> {
        Ok(Box::new(PlannerSession { policy: self, belief: init_belief(&self.model) }))
    }
}

struct PlannerSession<'a> {
    policy: &'a PlannerPolicy,
    belief: Belief,
}

impl PolicySession for PlannerSession<'_> {
    fn choose(&mut self, remaining: usize, _rng: &mut dyn RngCore) -> Result<String> {
        let config = PlannerConfig {
            horizon: remaining.max(1),
            receding_depth: self.policy.config.receding_depth.min(remaining.max(1)),
            ..self.policy.config
        };
        let action = best_action(&self.policy.model, &self.belief, &config)?;
        Ok(self.policy.model.catalog.id_of(action).to_string())
    }

    fn observe(&mut self, question_id: &str, observation: Observation) -> Result<()> {
        let action = self.policy.model.catalog.index_of(question_id).ok_or_else(|| {
            Error::contract(format!("policy model does not know question {question_id:?}"))
        })?;
        self.belief = update_belief(&self.policy.model, &self.belief, action, observation)?;
        Ok(())
    }
}

/// Asks a uniformly random question every step.
pub struct UniformRandomPolicy {
    ids: Vec<String>,
    label: String,
}

impl UniformRandomPolicy {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::contract("random policy needs at least one question"));
        }
        Ok(UniformRandomPolicy { ids, label: "uniform-random".into() })
    }

    pub fn from_model(model: &HPomdpModel) -> Result<Self> {
        Self::new(model.catalog.questions().iter().map(|q| q.id.clone()).collect())
    }
}

impl QuestionPolicy for UniformRandomPolicy {
    fn label(&self) -> &str {
        &self.label
    }

    fn start_session(&self) -> Result<Box<dyn PolicySession + '_>> {
        Ok(Box::new(RandomSession { ids: &self.ids }))
    }
}

struct RandomSession<'a> {
    ids: &'a [String],
}

impl PolicySession for RandomSession<'_> {
    fn choose(&mut self, _remaining: usize, rng: &mut dyn RngCore) -> Result<String> {
        let idx = (rng.next_u64() % self.ids.len() as u64) as usize;
        Ok(self.ids[idx].clone())
    }

    fn observe(&mut self, _question_id: &str, _observation: Observation) -> Result<()> {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cohort simulation
// ---------------------------------------------------------------------------

/// Aggregated outcome of one simulated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortResult {
    /// The truth model's state space, in canonical order.
    pub states: Vec<KnowledgeState>,
    pub concept_count: usize,
    /// P(final state), aligned with `states`; sums to 1.
    pub distribution: Vec<f64>,
    /// Mastered-concept count per student, in student order.
    pub mastered_counts: Vec<u32>,
    pub episodes: usize,
    pub policy_label: String,
}

fn sample_index(dist: &[f64], rng: &mut impl Rng) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Simulates `students` episodes of `horizon` questions against the
/// truth model and aggregates final knowledge states.
pub fn simulate_cohort(
    truth: &HPomdpModel,
    policy: &dyn QuestionPolicy,
    horizon: usize,
    students: usize,
    seed: u64,
) -> Result<CohortResult> {
    if horizon == 0 {
        return Err(Error::contract("simulation horizon must be at least 1"));
    }
    if students == 0 {
        return Err(Error::contract("simulation needs at least one student"));
    }
    let violations = truth.validate();
    if !violations.is_empty() {
        return Err(Error::contract(format!("truth model fails validation: {}", violations[0])));
    }

    let prior = truth.pattern_prior();
    let finals: Vec<(usize, u32)> = (0..students)
        .into_par_iter()
        .map(|student| -> Result<(usize, u32)> {
            let mut rng = stream(seed, StreamKind::Student, student as u64);
            let pattern = sample_index(&prior, &mut rng);
            let mut state = sample_index(&truth.components[pattern].initial, &mut rng);
            let mut session = policy.start_session()?;
            for step in 0..horizon {
                let id = session.choose(horizon - step, &mut rng)?;
                let question = truth.catalog.index_of(&id).ok_or_else(|| {
                    Error::contract(format!("policy proposed unknown action {id:?}"))
                })?;
                let observation = if rng.gen_bool(truth.p_correct(state, question)) {
                    Observation::Correct
                } else {
                    Observation::Incorrect
                };
                let concept = truth.catalog.concept_of(question);
                if let Some(target) = truth.space.acquire_target(state, concept) {
                    if rng.gen_bool(truth.components[pattern].transition[concept].learn) {
                        state = target;
                    }
                }
                session.observe(&id, observation)?;
            }
            Ok((state, truth.space.state(state).mastered_count()))
        })
        .collect::<Result<_>>()?;

    let mut distribution = vec![0.0; truth.space.len()];
    let mut mastered_counts = Vec::with_capacity(students);
    for &(state, mastered) in &finals {
        distribution[state] += 1.0;
        mastered_counts.push(mastered);
    }
    for p in &mut distribution {
        *p /= students as f64;
    }

    Ok(CohortResult {
        states: truth.space.states().to_vec(),
        concept_count: truth.graph.concept_count(),
        distribution,
        mastered_counts,
        episodes: students,
        policy_label: policy.label().to_string(),
    })
}

// ---------------------------------------------------------------------------
// Strategy metrics
// ---------------------------------------------------------------------------

/// Cohort-level strategy quality: per-concept proficiency, its sum, and
/// the variance of the mastered-concept count.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMetrics {
    /// Average mastery per concept, in graph order.
    pub pro: Vec<f64>,
    /// Expected number of mastered concepts.
    pub pro_sum: f64,
    /// Variance of the mastered-concept count across final states.
    pub var: f64,
}

pub fn strategy_metrics(result: &CohortResult, graph: &ConceptGraph) -> Result<StrategyMetrics> {
    if result.concept_count != graph.concept_count() {
        return Err(Error::contract(format!(
            "cohort was simulated over {} concepts but the graph has {}",
            result.concept_count,
            graph.concept_count()
        )));
    }
    let k = graph.concept_count();
    let mut pro = vec![0.0; k];
    let mut pro_sum = 0.0;
    for (state, &p) in result.states.iter().zip(&result.distribution) {
        for (c, slot) in pro.iter_mut().enumerate() {
            if state.is_mastered(c) {
                *slot += p;
            }
        }
        pro_sum += state.mastered_count() as f64 * p;
    }
    let var = result
        .states
        .iter()
        .zip(&result.distribution)
        .map(|(state, &p)| (pro_sum - state.mastered_count() as f64).powi(2) * p)
        .sum();
    Ok(StrategyMetrics { pro, pro_sum, var })
}

/// Pooled-variance two-sample t statistic over mastered-concept counts.
///
/// Degrees of freedom are `n_a + n_b - 2`. With zero pooled variance the
/// statistic is 0 for equal means and infinite (signed) otherwise.
pub fn two_sample_t(counts_a: &[f64], counts_b: &[f64]) -> Result<f64> {
    if counts_a.is_empty() || counts_b.is_empty() {
        return Err(Error::contract("both samples must be non-empty"));
    }
    let n_a = counts_a.len() as f64;
    let n_b = counts_b.len() as f64;
    let mean_a = counts_a.iter().sum::<f64>() / n_a;
    let mean_b = counts_b.iter().sum::<f64>() / n_b;
    let ss_a: f64 = counts_a.iter().map(|v| (v - mean_a).powi(2)).sum();
    let ss_b: f64 = counts_b.iter().map(|v| (v - mean_b).powi(2)).sum();
    let df = n_a + n_b - 2.0;
    let pooled = if df > 0.0 { (ss_a + ss_b) / df } else { 0.0 };
    if pooled == 0.0 {
        return Ok(if mean_a == mean_b {
            0.0
        } else if mean_a > mean_b {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok((mean_a - mean_b) / (pooled * (1.0 / n_a + 1.0 / n_b)).sqrt())
}

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

/// Samples answer sequences from a truth model with uniformly random
/// question selection, returning the generating pattern per sequence.
pub fn sample_dataset_labeled(
    truth: &HPomdpModel,
    sequences: usize,
    length: usize,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if sequences == 0 || length == 0 {
        return Err(Error::contract("need at least one sequence of at least one step"));
    }
    if truth.catalog.is_empty() {
        return Err(Error::contract("truth model has an empty catalog"));
    }
    let prior = truth.pattern_prior();
    let rows: Vec<(Trajectory, usize)> = (0..sequences)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, StreamKind::Synthetic, i as u64);
            let pattern = sample_index(&prior, &mut rng);
            let mut state = sample_index(&truth.components[pattern].initial, &mut rng);
            let mut steps = Vec::with_capacity(length);
            for _ in 0..length {
                let question = (rng.next_u64() % truth.catalog.len() as u64) as usize;
                let observation = if rng.gen_bool(truth.p_correct(state, question)) {
                    Observation::Correct
                } else {
                    Observation::Incorrect
                };
                let concept = truth.catalog.concept_of(question);
                if let Some(target) = truth.space.acquire_target(state, concept) {
                    if rng.gen_bool(truth.components[pattern].transition[concept].learn) {
                        state = target;
                    }
                }
                steps.push(Step { question, observation });
            }
            (Trajectory { student: format!("sim{i:05}"), steps }, pattern)
        })
        .collect();

    let (trajectories, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((
        Dataset {
            graph: truth.graph.clone(),
            catalog: truth.catalog.clone(),
            trajectories,
        },
        labels,
    ))
}

pub fn sample_dataset(
    truth: &HPomdpModel,
    sequences: usize,
    length: usize,
    seed: u64,
) -> Result<Dataset> {
    Ok(sample_dataset_labeled(truth, sequences, length, seed)?.0)
}
