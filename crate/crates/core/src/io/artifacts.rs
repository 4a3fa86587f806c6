//! Belief and cohort-result files, sharing the precise-float JSON style
//! of the model format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::domain::{HPomdpModel, KnowledgeState};
use crate::error::{Error, Result};
use crate::io::model_file::write_precise_json;
use crate::simulation::CohortResult;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct BeliefFile {
    pattern: Vec<f64>,
    state: Vec<Vec<f64>>,
}

pub fn save_belief(belief: &Belief, path: &Path) -> Result<()> {
    write_precise_json(
        &BeliefFile { pattern: belief.pattern.clone(), state: belief.state.clone() },
        path,
    )
}

pub fn load_belief(path: &Path, model: &HPomdpModel) -> Result<Belief> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: BeliefFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if file.pattern.len() != model.pattern_count() {
        return Err(Error::data(format!(
            "{}: belief has {} patterns but the model has {}",
            path.display(),
            file.pattern.len(),
            model.pattern_count()
        )));
    }
    if file.state.len() != model.pattern_count()
        || file.state.iter().any(|row| row.len() != model.space.len())
    {
        return Err(Error::data(format!(
            "{}: state belief shape does not match the model's {}-state space",
            path.display(),
            model.space.len()
        )));
    }
    let pattern_sum: f64 = file.pattern.iter().sum();
    if (pattern_sum - 1.0).abs() > 1e-9 {
        return Err(Error::data(format!(
            "{}: pattern belief sums to {pattern_sum}, expected 1",
            path.display()
        )));
    }
    for (m, row) in file.state.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!(
                "{}: state belief for pattern {m} sums to {sum}, expected 1",
                path.display()
            )));
        }
    }
    Ok(Belief { pattern: file.pattern, state: file.state })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CohortFile {
    policy: String,
    episodes: usize,
    concept_count: usize,
    /// Bit strings in canonical state order, concept 0 leftmost.
    states: Vec<String>,
    distribution: Vec<f64>,
    mastered_counts: Vec<u32>,
}

pub fn save_cohort(result: &CohortResult, path: &Path) -> Result<()> {
    write_precise_json(
        &CohortFile {
            policy: result.policy_label.clone(),
            episodes: result.episodes,
            concept_count: result.concept_count,
            states: result.states.iter().map(|s| s.bits(result.concept_count)).collect(),
            distribution: result.distribution.clone(),
            mastered_counts: result.mastered_counts.clone(),
        },
        path,
    )
}

pub fn load_cohort(path: &Path) -> Result<CohortResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CohortFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if file.states.len() != file.distribution.len() {
        return Err(Error::data(format!(
            "{}: {} states but {} distribution entries",
            path.display(),
            file.states.len(),
            file.distribution.len()
        )));
    }
    if file.mastered_counts.len() != file.episodes {
        return Err(Error::data(format!(
            "{}: {} mastered counts for {} episodes",
            path.display(),
            file.mastered_counts.len(),
            file.episodes
        )));
    }
    let sum: f64 = file.distribution.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::data(format!(
            "{}: distribution sums to {sum}, expected 1",
            path.display()
        )));
    }
    let states = file
        .states
        .iter()
        .map(|bits| KnowledgeState::from_bits(bits))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    Ok(CohortResult {
        states,
        concept_count: file.concept_count,
        distribution: file.distribution,
        mastered_counts: file.mastered_counts,
        episodes: file.episodes,
        policy_label: file.policy,
    })
}
