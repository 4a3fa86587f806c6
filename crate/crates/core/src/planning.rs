//! Question selection by expectimax over the hierarchical belief.
//!
//! The action value of asking a question is the discounted expectation,
//! over both answer outcomes, of the value of the updated belief; at
//! depth exhaustion the value is the expected terminal reward under the
//! belief. Exact mode expands the full remaining horizon and is only
//! feasible on small instances; receding mode cuts the tree at a fixed
//! depth and is meant to be replanned every step.
//!
//! Because questions on one concept share dynamics, the catalog can be
//! reduced to one representative question per concept (the one whose
//! fluency-guess gap is largest, i.e. the most informative) without
//! changing which concept is worth exercising.

use crate::belief::{predict_response, update_belief, Belief};
use crate::domain::{HPomdpModel, Observation, ObservationFunction};
use crate::error::{Error, Result};

/// Expansion budget for exact mode: (2 |A|)^H may not exceed this.
const EXACT_NODE_BUDGET: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanningMode {
    Exact,
    #[default]
    Receding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionReduction {
    /// One representative question per concept.
    #[default]
    PerConceptRepresentative,
    FullCatalog,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    /// Remaining number of questions to ask.
    pub horizon: usize,
    pub discount: f64,
    pub mode: PlanningMode,
    /// Lookahead depth in receding mode.
    pub receding_depth: usize,
    pub action_reduction: ActionReduction,
}

impl PlannerConfig {
    pub fn new(horizon: usize) -> PlannerConfig {
        PlannerConfig {
            horizon,
            discount: 1.0,
            mode: PlanningMode::default(),
            receding_depth: 3,
            action_reduction: ActionReduction::default(),
        }
    }

    pub fn exact(horizon: usize) -> PlannerConfig {
        PlannerConfig { mode: PlanningMode::Exact, ..PlannerConfig::new(horizon) }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::contract("planner horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::contract("discount must lie in [0, 1]"));
        }
        if self.mode == PlanningMode::Receding
            && !(1..=self.horizon).contains(&self.receding_depth)
        {
            return Err(Error::contract(format!(
                "receding depth {} must lie in 1..={}",
                self.receding_depth, self.horizon
            )));
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        match self.mode {
            PlanningMode::Exact => self.horizon,
            PlanningMode::Receding => self.receding_depth.min(self.horizon),
        }
    }
}

/// The action set the planner searches over, as catalog indices in
/// ascending id order.
pub fn reduced_actions(model: &HPomdpModel, reduction: ActionReduction) -> Vec<usize> {
    match reduction {
        ActionReduction::FullCatalog => (0..model.catalog.len()).collect(),
        ActionReduction::PerConceptRepresentative => {
            let mut best: Vec<Option<(usize, f64)>> = vec![None; model.graph.concept_count()];
            for q in 0..model.catalog.len() {
                let concept = model.catalog.concept_of(q);
                let gap = match &model.observation {
                    ObservationFunction::PerQuestion { guess, fluency } => fluency[q] - guess[q],
                    // No per-question informativeness in table mode; the
                    // first question of the concept stands in.
                    ObservationFunction::Table { .. } => 0.0,
                };
                match best[concept] {
                    Some((_, best_gap)) if gap <= best_gap => {}
                    _ => best[concept] = Some((q, gap)),
                }
            }
            let mut out: Vec<usize> = best.into_iter().flatten().map(|(q, _)| q).collect();
            out.sort_unstable();
            out
        }
    }
}

fn branch_value(
    model: &HPomdpModel,
    belief: &Belief,
    action: usize,
    depth: usize,
    discount: f64,
    actions: &[usize],
) -> f64 {
    if discount == 0.0 {
        // Per-step reward is zero, so nothing survives the discount.
        return 0.0;
    }
    let p_correct = predict_response(model, belief, action);
    let mut expectation = 0.0;
    for (observation, p) in
        [(Observation::Correct, p_correct), (Observation::Incorrect, 1.0 - p_correct)]
    {
        if p <= 0.0 {
            continue;
        }
        let successor = update_belief(model, belief, action, observation)
            .expect("branch probability is positive");
        expectation += p * belief_value(model, &successor, depth - 1, discount, actions);
    }
    discount * expectation
}

fn belief_value(
    model: &HPomdpModel,
    belief: &Belief,
    depth: usize,
    discount: f64,
    actions: &[usize],
) -> f64 {
    if depth == 0 {
        return belief.expected_reward(model);
    }
    let mut best = f64::NEG_INFINITY;
    for &action in actions {
        let q = branch_value(model, belief, action, depth, discount, actions);
        if q > best {
            best = q;
        }
    }
    best
}

/// Expected discounted terminal reward of asking `action` now and acting
/// optimally for the rest of the (depth-limited) horizon.
pub fn action_value(
    model: &HPomdpModel,
    belief: &Belief,
    action: usize,
    config: &PlannerConfig,
) -> Result<f64> {
    config.validate()?;
    if action >= model.catalog.len() {
        return Err(Error::contract(format!("action index {action} outside the catalog")));
    }
    let actions = reduced_actions(model, config.action_reduction);
    Ok(branch_value(model, belief, action, config.depth(), config.discount, &actions))
}

/// The highest-valued question under the configured search; ties break
/// toward the lowest action id.
pub fn best_action(model: &HPomdpModel, belief: &Belief, config: &PlannerConfig) -> Result<usize> {
    config.validate()?;
    let actions = reduced_actions(model, config.action_reduction);
    if actions.is_empty() {
        return Err(Error::contract("the action set is empty"));
    }
    let depth = config.depth();
    let mut best = actions[0];
    let mut best_q = f64::NEG_INFINITY;
    for &action in &actions {
        let q = branch_value(model, belief, action, depth, config.discount, &actions);
        if q > best_q {
            best_q = q;
            best = action;
        }
    }
    Ok(best)
}

/// Full-horizon expectimax value; the reference for receding mode.
///
/// Refuses instances whose tree exceeds the node budget; use receding
/// mode there instead.
pub fn exact_value(
    model: &HPomdpModel,
    belief: &Belief,
    horizon: usize,
    reduction: ActionReduction,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::contract("planner horizon must be at least 1"));
    }
    let actions = reduced_actions(model, reduction);
    if actions.is_empty() {
        return Err(Error::contract("the action set is empty"));
    }
    let nodes = (2.0 * actions.len() as f64).powi(horizon as i32);
    if nodes > EXACT_NODE_BUDGET {
        return Err(Error::capacity(format!(
            "exact planning would expand ~{nodes:.1e} nodes (budget {EXACT_NODE_BUDGET:.0e}); \
             use receding mode"
        )));
    }
    Ok(belief_value(model, belief, horizon, model.discount, &actions))
}
