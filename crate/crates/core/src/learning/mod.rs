//! EM parameter learning: simultaneous sequence clustering and
//! per-pattern parameter estimation, plus the single-pattern baseline.
//!
//! Each iteration computes, per trajectory and pattern, the scaled
//! forward-backward posteriors, turns them into membership
//! responsibilities and pooled sufficient statistics, and re-estimates
//! initial distributions, per-concept acquisition probabilities and the
//! shared observation function under the feasibility projections of
//! [`constraints`]. Reduction order over trajectories is fixed, so a
//! fit is bit-identical across runs and thread counts.

mod constraints;

pub use constraints::{apply_constraints, ConstrainedParameters, RawParameters, DEFAULT_LEARN, OBSERVATION_MARGIN};

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{
    build_state_space, ConceptTransition, Dataset, HPomdpModel, ObservationFunction,
    PatternComponent, RewardSpec, StateSpaceMode,
};
use crate::error::{Error, Result};
use crate::inference::forward_backward;
use crate::rng::{fnv1a, stream, StreamKind};

/// Trajectories per parallel reduction chunk; fixed so the floating-point
/// fold order never depends on the thread count.
const CHUNK: usize = 32;

/// How membership responsibilities are computed in the E-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MembershipRule {
    /// Posterior responsibility including the prior membership weight.
    #[default]
    Derived,
    /// Pure likelihood ratio, ignoring the prior membership weight.
    Printed,
}

/// How the per-pattern initial distribution is re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialDistributionRule {
    /// Average of first-step posteriors weighted by responsibility.
    #[default]
    ResponsibilityWeighted,
    /// Unweighted average over every sequence.
    Printed,
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Number of cognitive patterns to fit.
    pub pattern_count: usize,
    pub max_iterations: usize,
    /// Stop when no parameter moved more than this between iterations.
    pub convergence_threshold: f64,
    /// Independent random initializations; the best final likelihood wins.
    pub restarts: usize,
    pub seed: u64,
    pub membership_rule: MembershipRule,
    pub initial_distribution_rule: InitialDistributionRule,
    /// Lower bound kept on every probability after each M-step.
    pub floor_probability: f64,
    pub state_space_mode: StateSpaceMode,
    /// Discount recorded on the fitted model.
    pub discount: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            pattern_count: 1,
            max_iterations: 200,
            convergence_threshold: 1e-4,
            restarts: 5,
            seed: 0,
            membership_rule: MembershipRule::default(),
            initial_distribution_rule: InitialDistributionRule::default(),
            floor_probability: 1e-6,
            state_space_mode: StateSpaceMode::default(),
            discount: 1.0,
        }
    }
}

impl EmConfig {
    pub fn with_patterns(pattern_count: usize) -> Self {
        EmConfig { pattern_count, ..EmConfig::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.pattern_count == 0 {
            return Err(Error::contract("pattern count must be at least 1"));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::contract("restarts and max iterations must be at least 1"));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::contract("convergence threshold must be positive"));
        }
        if !(self.floor_probability > 0.0 && self.floor_probability < 0.1) {
            return Err(Error::contract("floor probability must lie in (0, 0.1)"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::contract("discount must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Events worth reporting from a fit; never fatal.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// A component's total responsibility fell below `k * floor`; it was
    /// re-seeded from the named source component (first collapse) or
    /// frozen (second collapse).
    DegenerateComponent { pattern: usize, iteration: usize, action: DegenerateAction },
    /// A sequence had probability zero under every pattern; its
    /// membership was reset to uniform and it contributed no statistics.
    ImpossibleSequence { trajectory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateAction {
    /// Reported by [`em_step`]; the fit driver decides the remedy.
    Detected,
    Reinitialized { source: usize },
    Frozen,
}

#[derive(Debug, Clone)]
pub struct EmStepResult {
    /// Updated model carrying the new membership matrix.
    pub model: HPomdpModel,
    /// Mixture log-likelihood of the *input* model and memberships,
    /// obtained for free during the E-step.
    pub input_log_likelihood: f64,
    /// Largest absolute change over every parameter and membership entry.
    pub max_parameter_delta: f64,
    pub warnings: Vec<FitWarning>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: HPomdpModel,
    /// Final membership matrix, one row per trajectory.
    pub membership: Vec<Vec<f64>>,
    /// Mixture log-likelihood per iteration, starting with the initial
    /// model; non-decreasing under the default update rules.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

// ---------------------------------------------------------------------------
// Sufficient statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct SufficientStats {
    /// Responsibility-or-unit weighted first-step posteriors, `k x |S|`.
    init: Vec<Vec<f64>>,
    /// Weight behind each `init` row.
    init_weight: Vec<f64>,
    /// Acquire-flip mass per pattern and concept.
    flip: Vec<Vec<f64>>,
    /// Feasible occupancy mass per pattern and concept.
    exposure: Vec<Vec<f64>>,
    correct_mastered: Vec<f64>,
    total_mastered: Vec<f64>,
    correct_unmastered: Vec<f64>,
    total_unmastered: Vec<f64>,
    /// Total responsibility per pattern.
    column_responsibility: Vec<f64>,
    input_log_likelihood: f64,
    impossible: Vec<usize>,
}

impl SufficientStats {
    fn zero(k: usize, n_states: usize, n_concepts: usize, n_questions: usize) -> Self {
        SufficientStats {
            init: vec![vec![0.0; n_states]; k],
            init_weight: vec![0.0; k],
            flip: vec![vec![0.0; n_concepts]; k],
            exposure: vec![vec![0.0; n_concepts]; k],
            correct_mastered: vec![0.0; n_questions],
            total_mastered: vec![0.0; n_questions],
            correct_unmastered: vec![0.0; n_questions],
            total_unmastered: vec![0.0; n_questions],
            column_responsibility: vec![0.0; k],
            input_log_likelihood: 0.0,
            impossible: Vec::new(),
        }
    }

    fn merge(&mut self, other: &SufficientStats) {
        for (a, b) in self.init.iter_mut().zip(&other.init) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.init_weight.iter_mut().zip(&other.init_weight) {
            *a += b;
        }
        for (a, b) in self.flip.iter_mut().zip(&other.flip) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.exposure.iter_mut().zip(&other.exposure) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.correct_mastered.iter_mut().zip(&other.correct_mastered) {
            *a += b;
        }
        for (a, b) in self.total_mastered.iter_mut().zip(&other.total_mastered) {
            *a += b;
        }
        for (a, b) in self.correct_unmastered.iter_mut().zip(&other.correct_unmastered) {
            *a += b;
        }
        for (a, b) in self.total_unmastered.iter_mut().zip(&other.total_unmastered) {
            *a += b;
        }
        for (a, b) in self.column_responsibility.iter_mut().zip(&other.column_responsibility) {
            *a += b;
        }
        self.input_log_likelihood += other.input_log_likelihood;
        self.impossible.extend_from_slice(&other.impossible);
    }
}

/// Membership responsibilities for one trajectory from the per-pattern
/// log-likelihoods. `None` when every pattern assigns probability zero.
fn responsibilities(
    prior: &[f64],
    log_likelihoods: &[f64],
    rule: MembershipRule,
) -> Option<Vec<f64>> {
    let k = prior.len();
    let mut logs = vec![f64::NEG_INFINITY; k];
    for j in 0..k {
        let weight = match rule {
            MembershipRule::Derived => {
                if prior[j] > 0.0 {
                    prior[j].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            MembershipRule::Printed => 0.0,
        };
        if log_likelihoods[j] > f64::NEG_INFINITY && weight > f64::NEG_INFINITY {
            logs[j] = weight + log_likelihoods[j];
        }
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut out: Vec<f64> = logs.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Some(out)
}

/// E-step over a block of trajectories; returns the block's statistics
/// and new membership rows.
fn accumulate_block(
    model: &HPomdpModel,
    membership: &[Vec<f64>],
    config: &EmConfig,
    base_index: usize,
    trajectories: &[crate::domain::Trajectory],
) -> Result<(SufficientStats, Vec<Vec<f64>>)> {
    let k = model.pattern_count();
    let n_states = model.space.len();
    let n_concepts = model.graph.concept_count();
    let n_questions = model.catalog.len();
    let mut stats = SufficientStats::zero(k, n_states, n_concepts, n_questions);
    let mut new_membership = Vec::with_capacity(trajectories.len());

    for (offset, trajectory) in trajectories.iter().enumerate() {
        let index = base_index + offset;
        let prior = &membership[index];
        let mut tables = Vec::with_capacity(k);
        let mut log_likelihoods = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let fb = forward_backward(model, j, trajectory)?;
            if let Some(fb) = &fb {
                log_likelihoods[j] = fb.log_likelihood;
            }
            tables.push(fb);
        }

        // Trajectory contribution to the mixture log-likelihood of the
        // input parameters: log sum_j w_j P(O | m_j).
        let mut seq_logs: Vec<f64> = Vec::with_capacity(k);
        for j in 0..k {
            if prior[j] > 0.0 && log_likelihoods[j] > f64::NEG_INFINITY {
                seq_logs.push(prior[j].ln() + log_likelihoods[j]);
            }
        }
        let seq_max = seq_logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if seq_max > f64::NEG_INFINITY {
            let sum: f64 = seq_logs.iter().map(|&v| (v - seq_max).exp()).sum();
            stats.input_log_likelihood += seq_max + sum.ln();
        } else {
            stats.input_log_likelihood = f64::NEG_INFINITY;
        }

        let resp = match responsibilities(prior, &log_likelihoods, config.membership_rule) {
            Some(resp) => resp,
            None => {
                stats.impossible.push(index);
                new_membership.push(vec![1.0 / k as f64; k]);
                continue;
            }
        };

        for j in 0..k {
            let r = resp[j];
            stats.column_responsibility[j] += r;
            let fb = match &tables[j] {
                Some(fb) => fb,
                None => continue, // responsibility is 0 for this pattern
            };
            let d_weight = match config.initial_distribution_rule {
                InitialDistributionRule::ResponsibilityWeighted => r,
                InitialDistributionRule::Printed => 1.0,
            };
            let n = trajectory.steps.len();
            let dynamics = &model.components[j].transition;
            for s in 0..n_states {
                stats.init[j][s] += d_weight * fb.alpha[0][s] * fb.beta[0][s];
            }
            stats.init_weight[j] += d_weight;

            for t in 0..n {
                let step = trajectory.steps[t];
                let concept = model.catalog.concept_of(step.question);
                let mut mastered_mass = 0.0;
                let mut unmastered_mass = 0.0;
                for s in 0..n_states {
                    let gamma = fb.alpha[t][s] * fb.beta[t][s];
                    if model.space.state(s).is_mastered(concept) {
                        mastered_mass += gamma;
                    } else {
                        unmastered_mass += gamma;
                    }
                    if let Some(target) = model.space.acquire_target(s, concept) {
                        stats.exposure[j][concept] += r * gamma;
                        let flip_mass = if t + 1 < n {
                            let next = trajectory.steps[t + 1];
                            fb.alpha[t][s] / fb.scaling[t + 1]
                                * dynamics[concept].learn
                                * model.p_observation(target, next.question, next.observation)
                                * fb.beta[t + 1][target]
                        } else {
                            gamma * dynamics[concept].learn
                        };
                        stats.flip[j][concept] += r * flip_mass;
                    }
                }
                stats.total_mastered[step.question] += r * mastered_mass;
                stats.total_unmastered[step.question] += r * unmastered_mass;
                if step.observation.is_correct() {
                    stats.correct_mastered[step.question] += r * mastered_mass;
                    stats.correct_unmastered[step.question] += r * unmastered_mass;
                }
            }
        }
        new_membership.push(resp);
    }
    Ok((stats, new_membership))
}

fn floored_distribution(mut dist: Vec<f64>, floor: f64) -> Vec<f64> {
    for v in &mut dist {
        if *v < floor {
            *v = floor;
        }
    }
    let sum: f64 = dist.iter().sum();
    for v in &mut dist {
        *v /= sum;
    }
    dist
}

fn check_model_matches_dataset(model: &HPomdpModel, dataset: &Dataset) -> Result<()> {
    if model.catalog != dataset.catalog {
        return Err(Error::contract("model catalog does not match the dataset catalog"));
    }
    if model.graph != dataset.graph {
        return Err(Error::contract("model concept graph does not match the dataset graph"));
    }
    Ok(())
}

/// One full E+M sweep: new memberships, initial distributions,
/// per-concept dynamics and the pooled shared observation function.
///
/// The input model must be valid, carry a membership matrix with one row
/// per trajectory, and use the per-question observation parameterization.
pub fn em_step(dataset: &Dataset, model: &HPomdpModel, config: &EmConfig) -> Result<EmStepResult> {
    config.validate()?;
    dataset.check()?;
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty"));
    }
    check_model_matches_dataset(model, dataset)?;
    if model.observation.is_table() {
        return Err(Error::contract(
            "fitting requires the per-question guess/fluency observation parameterization",
        ));
    }
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::contract(format!(
            "input model fails validation: {}",
            violations[0]
        )));
    }
    let membership = model
        .membership
        .as_ref()
        .ok_or_else(|| Error::contract("input model carries no membership matrix"))?;
    if membership.len() != dataset.len() {
        return Err(Error::contract(format!(
            "membership has {} rows but the dataset has {} trajectories",
            membership.len(),
            dataset.len()
        )));
    }

    let k = model.pattern_count();
    let n_states = model.space.len();
    let n_questions = model.catalog.len();

    let blocks: Vec<(SufficientStats, Vec<Vec<f64>>)> = dataset
        .trajectories
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk, slice)| accumulate_block(model, membership, config, chunk * CHUNK, slice))
        .collect::<Result<_>>()?;

    let mut stats =
        SufficientStats::zero(k, n_states, model.graph.concept_count(), n_questions);
    let mut new_membership = Vec::with_capacity(dataset.len());
    for (block_stats, block_membership) in &blocks {
        stats.merge(block_stats);
        new_membership.extend_from_slice(block_membership);
    }

    let floor = config.floor_probability;
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let initial = match config.initial_distribution_rule {
            InitialDistributionRule::ResponsibilityWeighted => {
                if stats.init_weight[j] > 1e-12 {
                    stats.init[j].iter().map(|v| v / stats.init_weight[j]).collect()
                } else {
                    model.components[j].initial.clone()
                }
            }
            InitialDistributionRule::Printed => {
                let sum: f64 = stats.init[j].iter().sum();
                if sum > 1e-12 {
                    // Unweighted average over sequences; impossible pairs
                    // contribute nothing, so renormalize.
                    stats.init[j].iter().map(|v| v / sum).collect()
                } else {
                    model.components[j].initial.clone()
                }
            }
        };
        let initial = floored_distribution(initial, floor);
        let transition: Vec<ConceptTransition> = (0..model.graph.concept_count())
            .map(|c| {
                let learn = if stats.exposure[j][c] > 0.0 {
                    stats.flip[j][c] / stats.exposure[j][c]
                } else {
                    model.components[j].transition[c].learn
                };
                ConceptTransition::new(constraints::clamp_learn(learn, floor))
            })
            .collect();
        components.push(PatternComponent { initial, transition });
    }

    let (old_guess, old_fluency) = match &model.observation {
        ObservationFunction::PerQuestion { guess, fluency } => (guess, fluency),
        ObservationFunction::Table { .. } => unreachable!("rejected above"),
    };
    let mut guess = Vec::with_capacity(n_questions);
    let mut fluency = Vec::with_capacity(n_questions);
    for q in 0..n_questions {
        let raw_guess = if stats.total_unmastered[q] > 0.0 {
            stats.correct_unmastered[q] / stats.total_unmastered[q]
        } else {
            old_guess[q]
        };
        let raw_fluency = if stats.total_mastered[q] > 0.0 {
            stats.correct_mastered[q] / stats.total_mastered[q]
        } else {
            old_fluency[q]
        };
        let (g, f) = constraints::project_guess_fluency(raw_guess, raw_fluency, floor);
        guess.push(g);
        fluency.push(f);
    }

    let mut warnings: Vec<FitWarning> = stats
        .impossible
        .iter()
        .map(|&trajectory| FitWarning::ImpossibleSequence { trajectory })
        .collect();
    for j in 0..k {
        if stats.column_responsibility[j] < k as f64 * floor {
            warnings.push(FitWarning::DegenerateComponent {
                pattern: j,
                iteration: 0,
                action: DegenerateAction::Detected,
            });
        }
    }

    let pattern_prior = column_means(&new_membership, k);
    let updated = HPomdpModel {
        graph: model.graph.clone(),
        space: model.space.clone(),
        catalog: model.catalog.clone(),
        components,
        observation: ObservationFunction::PerQuestion { guess, fluency },
        reward: model.reward.clone(),
        discount: model.discount,
        membership: Some(new_membership),
        pattern_prior: Some(pattern_prior),
    };
    let max_parameter_delta = parameter_delta(model, &updated);

    Ok(EmStepResult {
        model: updated,
        input_log_likelihood: stats.input_log_likelihood,
        max_parameter_delta,
        warnings,
    })
}

fn column_means(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut mean = vec![0.0; k];
    if rows.is_empty() {
        return vec![1.0 / k as f64; k];
    }
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }
    mean
}

/// Largest absolute parameter difference between two models of identical
/// shape, including membership entries.
pub fn parameter_delta(a: &HPomdpModel, b: &HPomdpModel) -> f64 {
    let mut delta: f64 = 0.0;
    for (ca, cb) in a.components.iter().zip(&b.components) {
        for (x, y) in ca.initial.iter().zip(&cb.initial) {
            delta = delta.max((x - y).abs());
        }
        for (x, y) in ca.transition.iter().zip(&cb.transition) {
            delta = delta.max((x.learn - y.learn).abs());
        }
    }
    if let (
        ObservationFunction::PerQuestion { guess: ga, fluency: fa },
        ObservationFunction::PerQuestion { guess: gb, fluency: fb },
    ) = (&a.observation, &b.observation)
    {
        for (x, y) in ga.iter().zip(gb) {
            delta = delta.max((x - y).abs());
        }
        for (x, y) in fa.iter().zip(fb) {
            delta = delta.max((x - y).abs());
        }
    }
    if let (Some(wa), Some(wb)) = (&a.membership, &b.membership) {
        for (ra, rb) in wa.iter().zip(wb) {
            for (x, y) in ra.iter().zip(rb) {
                delta = delta.max((x - y).abs());
            }
        }
    }
    delta
}

/// Mixture log-likelihood of `model` (with its memberships) on `dataset`.
pub fn total_log_likelihood(dataset: &Dataset, model: &HPomdpModel) -> Result<f64> {
    let membership = model
        .membership
        .as_ref()
        .ok_or_else(|| Error::contract("model carries no membership matrix"))?;
    if membership.len() != dataset.len() {
        return Err(Error::contract("membership rows do not match the dataset"));
    }
    let k = model.pattern_count();
    let per_trajectory: Vec<f64> = dataset
        .trajectories
        .par_iter()
        .enumerate()
        .map(|(i, trajectory)| -> Result<f64> {
            let mut logs = Vec::with_capacity(k);
            for j in 0..k {
                if membership[i][j] > 0.0 {
                    let ll = crate::inference::sequence_log_likelihood(model, j, trajectory)?;
                    if ll > f64::NEG_INFINITY {
                        logs.push(membership[i][j].ln() + ll);
                    }
                }
            }
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let sum: f64 = logs.iter().map(|&v| (v - max).exp()).sum();
            Ok(max + sum.ln())
        })
        .collect::<Result<_>>()?;
    Ok(per_trajectory.iter().sum())
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

fn random_distribution(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

fn random_component(rng: &mut impl Rng, n_states: usize, n_concepts: usize) -> PatternComponent {
    PatternComponent {
        initial: random_distribution(rng, n_states),
        transition: (0..n_concepts)
            .map(|_| ConceptTransition::new(rng.gen_range(0.1..0.9)))
            .collect(),
    }
}

fn jittered_component(
    rng: &mut impl Rng,
    pooled: &PatternComponent,
    floor: f64,
) -> PatternComponent {
    let mut initial: Vec<f64> =
        pooled.initial.iter().map(|&v| v * rng.gen_range(0.5..1.5) + 1e-3).collect();
    let sum: f64 = initial.iter().sum();
    for v in &mut initial {
        *v /= sum;
    }
    PatternComponent {
        initial: floored_distribution(initial, floor),
        transition: pooled
            .transition
            .iter()
            .map(|d| {
                ConceptTransition::new(constraints::clamp_learn(
                    d.learn + rng.gen_range(-0.2..0.2),
                    floor.max(0.02),
                ))
            })
            .collect(),
    }
}

fn initial_membership(rng: &mut impl Rng, rows: usize, k: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let mut row: Vec<f64> = (0..k).map(|_| 1.0 + rng.gen_range(0.0..0.4)).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            row
        })
        .collect()
}

fn init_model(
    dataset: &Dataset,
    config: &EmConfig,
    rng: &mut impl Rng,
    pooled: Option<&HPomdpModel>,
) -> Result<HPomdpModel> {
    let space = build_state_space(&dataset.graph, config.state_space_mode)?;
    let k = config.pattern_count;
    let n_questions = dataset.catalog.len();

    let (components, observation) = match pooled {
        Some(pooled_model) => {
            let base = &pooled_model.components[0];
            let components: Vec<PatternComponent> = (0..k)
                .map(|_| jittered_component(rng, base, config.floor_probability))
                .collect();
            (components, pooled_model.observation.clone())
        }
        None => {
            let components: Vec<PatternComponent> = (0..k)
                .map(|_| random_component(rng, space.len(), dataset.graph.concept_count()))
                .collect();
            let guess: Vec<f64> = (0..n_questions).map(|_| rng.gen_range(0.05..0.4)).collect();
            let fluency: Vec<f64> = (0..n_questions).map(|_| rng.gen_range(0.6..0.95)).collect();
            (components, ObservationFunction::PerQuestion { guess, fluency })
        }
    };

    let membership = initial_membership(rng, dataset.len(), k);
    let pattern_prior = column_means(&membership, k);
    Ok(HPomdpModel {
        graph: dataset.graph.clone(),
        space,
        catalog: dataset.catalog.clone(),
        components,
        observation,
        reward: RewardSpec::MasteredCount,
        discount: config.discount,
        membership: Some(membership),
        pattern_prior: Some(pattern_prior),
    })
}

// ---------------------------------------------------------------------------
// Fit driver
// ---------------------------------------------------------------------------

/// Runs `restarts` independent EM fits and returns the restart with the
/// highest final mixture log-likelihood.
///
/// For two or more patterns the restarts are seeded by jittering a
/// pooled single-pattern fit, which stabilizes the clustering; a
/// single-pattern fit initializes randomly.
pub fn em_fit(dataset: &Dataset, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty"));
    }
    dataset.check()?;

    let pooled = if config.pattern_count > 1 {
        let warm_config = EmConfig {
            pattern_count: 1,
            restarts: 1,
            max_iterations: config.max_iterations.min(60),
            seed: fnv1a(&[&config.seed.to_le_bytes()[..], b"warm-start"].concat()),
            ..config.clone()
        };
        Some(em_fit(dataset, &warm_config)?.model)
    } else {
        None
    };

    let mut best: Option<FitResult> = None;
    for restart in 0..config.restarts {
        let mut rng = stream(config.seed, StreamKind::FitRestart, restart as u64);
        let model = init_model(dataset, config, &mut rng, pooled.as_ref())?;
        let result = run_single_fit(dataset, config, model, restart)?;
        let better = match &best {
            None => true,
            Some(current) => result.final_log_likelihood() > current.final_log_likelihood(),
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Single-pattern Baum-Welch-style baseline: identical to [`em_fit`]
/// with the pattern count forced to 1.
pub fn fit_baseline_pomdp(dataset: &Dataset, config: &EmConfig) -> Result<FitResult> {
    let config = EmConfig { pattern_count: 1, ..config.clone() };
    em_fit(dataset, &config)
}

fn run_single_fit(
    dataset: &Dataset,
    config: &EmConfig,
    mut model: HPomdpModel,
    restart: usize,
) -> Result<FitResult> {
    let k = config.pattern_count;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut rescue_count = vec![0u8; k];
    let mut frozen = vec![false; k];
    let mut converged = false;
    let mut iterations = 0;
    let mut rescues = 0u64;

    for iteration in 0..config.max_iterations {
        let step = em_step(dataset, &model, config)?;
        trace.push(step.input_log_likelihood);
        iterations += 1;

        let mut next = step.model;
        for j in 0..k {
            if frozen[j] {
                next.components[j] = model.components[j].clone();
            }
        }

        let mut rescued_now = false;
        for warning in &step.warnings {
            match warning {
                FitWarning::ImpossibleSequence { trajectory } => {
                    warnings.push(FitWarning::ImpossibleSequence { trajectory: *trajectory });
                }
                FitWarning::DegenerateComponent { pattern, .. } => {
                    let j = *pattern;
                    if frozen[j] {
                        continue;
                    }
                    if rescue_count[j] == 0 {
                        let source = rescue_source(&next, j, &frozen);
                        let mut rng = stream(
                            config.seed,
                            StreamKind::Rescue,
                            restart as u64 * 1_000_003 + rescues,
                        );
                        rescues += 1;
                        rescue_component(&mut next, j, source, &mut rng, config.floor_probability);
                        rescue_count[j] = 1;
                        rescued_now = true;
                        warnings.push(FitWarning::DegenerateComponent {
                            pattern: j,
                            iteration,
                            action: DegenerateAction::Reinitialized { source },
                        });
                    } else {
                        frozen[j] = true;
                        warnings.push(FitWarning::DegenerateComponent {
                            pattern: j,
                            iteration,
                            action: DegenerateAction::Frozen,
                        });
                    }
                }
            }
        }

        let delta = parameter_delta(&model, &next);
        model = next;
        if !rescued_now && delta < config.convergence_threshold {
            converged = true;
            break;
        }
    }

    trace.push(total_log_likelihood(dataset, &model)?);
    let membership = model.membership.clone().expect("fit always sets membership");
    Ok(FitResult {
        model,
        membership,
        log_likelihood_trace: trace,
        iterations,
        converged,
        restart_index: restart,
        warnings,
    })
}

/// Source for re-seeding a collapsed component: the live component whose
/// membership column has the highest variance.
fn rescue_source(model: &HPomdpModel, dead: usize, frozen: &[bool]) -> usize {
    let w = model.membership.as_ref().expect("membership present during fit");
    let k = model.pattern_count();
    let mut best = if dead == 0 && k > 1 { 1 } else { 0 };
    let mut best_var = f64::NEG_INFINITY;
    for j in 0..k {
        if j == dead || frozen[j] {
            continue;
        }
        let mean: f64 = w.iter().map(|row| row[j]).sum::<f64>() / w.len() as f64;
        let var: f64 =
            w.iter().map(|row| (row[j] - mean).powi(2)).sum::<f64>() / w.len() as f64;
        if var > best_var {
            best_var = var;
            best = j;
        }
    }
    best
}

/// Re-seeds component `dead` as a jittered copy of `source` and splits
/// the source's membership with its new twin.
fn rescue_component(
    model: &mut HPomdpModel,
    dead: usize,
    source: usize,
    rng: &mut impl Rng,
    floor: f64,
) {
    let template = model.components[source].clone();
    model.components[dead] = jittered_component(rng, &template, floor);
    if let Some(w) = &mut model.membership {
        for row in w.iter_mut() {
            let half = row[source] * 0.5;
            row[source] = half;
            row[dead] += half;
        }
        model.pattern_prior = Some(column_means(w, model.components.len()));
    }
}
