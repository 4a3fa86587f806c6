//! Answer trajectories and datasets bound to a catalog.

use crate::domain::graph::ConceptGraph;
use crate::domain::question::Catalog;
use crate::error::{Error, Result};

/// Outcome of answering a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observation {
    Correct,
    Incorrect,
}

impl Observation {
    pub fn from_bit(bit: u8) -> Observation {
        if bit == 0 {
            Observation::Incorrect
        } else {
            Observation::Correct
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Observation::Correct => 1,
            Observation::Incorrect => 0,
        }
    }

    pub fn is_correct(self) -> bool {
        self == Observation::Correct
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Observation::Correct => "correct",
            Observation::Incorrect => "incorrect",
        }
    }
}

/// One answered question: a catalog action index plus the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub question: usize,
    pub observation: Observation,
}

/// One student's time-ordered answer sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub student: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A set of trajectories sharing one concept graph and question catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: ConceptGraph,
    pub catalog: Catalog,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Verifies that every step references a catalog question and that no
    /// trajectory is empty.
    pub fn check(&self) -> Result<()> {
        for traj in &self.trajectories {
            if traj.is_empty() {
                return Err(Error::contract(format!(
                    "trajectory for student {:?} is empty",
                    traj.student
                )));
            }
            for step in &traj.steps {
                if step.question >= self.catalog.len() {
                    return Err(Error::contract(format!(
                        "trajectory for student {:?} references unknown action index {}",
                        traj.student, step.question
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same graph and catalog, trajectories restricted to `keep` indices.
    pub fn subset(&self, keep: &[usize]) -> Dataset {
        Dataset {
            graph: self.graph.clone(),
            catalog: self.catalog.clone(),
            trajectories: keep.iter().map(|&i| self.trajectories[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}
