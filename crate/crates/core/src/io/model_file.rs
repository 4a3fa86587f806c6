//! Versioned model serialization.
//!
//! Models are stored as pretty-printed JSON with every float rendered at
//! 18 significant decimal digits, which round-trips every f64 bit-exactly.
//! Loading is strict: the format version is checked before anything else,
//! the schema rejects unknown fields, and every distribution is
//! re-validated with an error naming the offending path.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::domain::{
    build_state_space, ConceptGraph, ConceptTransition, HPomdpModel, ObservationFunction,
    PatternComponent, Question, RewardSpec, StateSpaceMode, SUM_TOLERANCE,
};
use crate::domain::Catalog;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: String,
    pub graph: GraphSection,
    pub state_space_mode: String,
    pub discount: f64,
    pub questions: Vec<QuestionSection>,
    pub components: Vec<ComponentSection>,
    /// Per-question observation parameters, keyed by question id.
    pub observation: BTreeMap<String, ObservationSection>,
    pub reward: RewardSection,
    /// Column means of the fitted membership matrix.
    pub membership_summary: Option<Vec<f64>>,
    pub metadata: Option<FitMetadata>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub concepts: Vec<String>,
    pub prerequisites: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionSection {
    pub id: String,
    pub concept: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComponentSection {
    /// Aligned with the canonical state order of (graph, mode).
    pub initial: Vec<f64>,
    /// Keyed by concept name; `learn + stay` must be 1.
    pub transitions: BTreeMap<String, TransitionSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSection {
    pub learn: f64,
    pub stay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub guess: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RewardSection {
    MasteredCount,
    PerState(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FitMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub final_log_likelihood: Option<f64>,
}

/// Pretty JSON with floats at full precision.
struct PreciseFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.17e}")
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(writer)
    }
    fn end_array<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_array(writer)
    }
    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }
    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(writer)
    }
    fn begin_object<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(writer)
    }
    fn end_object<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_object(writer)
    }
    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }
    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(writer)
    }
    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Pretty JSON with full-precision floats, shared by every artifact file.
pub(crate) fn write_precise_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut buffer = Vec::new();
    let formatter = PreciseFormatter { inner: PrettyFormatter::new() };
    let mut serializer = serde_json::Serializer::with_formatter(&mut buffer, formatter);
    value
        .serialize(&mut serializer)
        .map_err(|e| Error::data(format!("serializing {}: {e}", path.display())))?;
    buffer.push(b'\n');
    let mut out = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    out.write_all(&buffer).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn model_to_file(model: &HPomdpModel, metadata: Option<FitMetadata>) -> Result<ModelFile> {
    let (guess, fluency) = match &model.observation {
        ObservationFunction::PerQuestion { guess, fluency } => (guess, fluency),
        ObservationFunction::Table { .. } => {
            return Err(Error::contract(
                "table observation functions are not representable in model format 1",
            ))
        }
    };
    let observation = model
        .catalog
        .questions()
        .iter()
        .enumerate()
        .map(|(q, question)| {
            (question.id.clone(), ObservationSection { guess: guess[q], fluency: fluency[q] })
        })
        .collect();
    Ok(ModelFile {
        format_version: FORMAT_VERSION.to_string(),
        graph: GraphSection {
            concepts: model.graph.concepts().to_vec(),
            prerequisites: model
                .graph
                .edges()
                .iter()
                .map(|&(p, c)| {
                    (model.graph.concept_name(p).to_string(), model.graph.concept_name(c).to_string())
                })
                .collect(),
        },
        state_space_mode: model.space.mode().as_str().to_string(),
        discount: model.discount,
        questions: model
            .catalog
            .questions()
            .iter()
            .map(|q| QuestionSection {
                id: q.id.clone(),
                concept: model.graph.concept_name(q.concept).to_string(),
            })
            .collect(),
        components: model
            .components
            .iter()
            .map(|component| ComponentSection {
                initial: component.initial.clone(),
                transitions: component
                    .transition
                    .iter()
                    .enumerate()
                    .map(|(c, d)| {
                        (
                            model.graph.concept_name(c).to_string(),
                            TransitionSection { learn: d.learn, stay: d.stay },
                        )
                    })
                    .collect(),
            })
            .collect(),
        observation,
        reward: match &model.reward {
            RewardSpec::MasteredCount => RewardSection::MasteredCount,
            RewardSpec::PerState(values) => RewardSection::PerState(values.clone()),
        },
        membership_summary: model.pattern_prior.clone(),
        metadata,
    })
}

/// Writes the model (and optional fit metadata) to `path`.
///
/// The model must pass validation and use the per-question observation
/// parameterization.
pub fn save_model(model: &HPomdpModel, path: &Path, metadata: Option<FitMetadata>) -> Result<()> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::contract(format!(
            "refusing to save an invalid model: {}",
            violations[0]
        )));
    }
    let file = model_to_file(model, metadata)?;
    write_precise_json(&file, path)
}

fn build_model(file: ModelFile, path: &Path) -> Result<HPomdpModel> {
    let graph = ConceptGraph::new(
        file.graph.concepts.clone(),
        file.graph.prerequisites.clone(),
    )
    .map_err(|e| Error::data(format!("{}: graph: {e}", path.display())))?;
    let mode = StateSpaceMode::parse(&file.state_space_mode)
        .map_err(|e| Error::data(format!("{}: stateSpaceMode: {e}", path.display())))?;
    let space = build_state_space(&graph, mode)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;

    let mut questions = Vec::with_capacity(file.questions.len());
    for (i, q) in file.questions.iter().enumerate() {
        let concept = graph.concept_index(&q.concept).ok_or_else(|| {
            Error::data(format!(
                "{}: questions[{i}]: unknown concept {:?}",
                path.display(),
                q.concept
            ))
        })?;
        questions.push(Question { id: q.id.clone(), concept });
    }
    let catalog = Catalog::new(questions, graph.concept_count())
        .map_err(|e| Error::data(format!("{}: questions: {e}", path.display())))?;

    let k = graph.concept_count();
    let mut components = Vec::with_capacity(file.components.len());
    for (j, section) in file.components.iter().enumerate() {
        if section.initial.len() != space.len() {
            return Err(Error::data(format!(
                "{}: components[{j}].initial: {} entries for a {}-state space",
                path.display(),
                section.initial.len(),
                space.len()
            )));
        }
        let mut transition = Vec::with_capacity(k);
        for c in 0..k {
            let name = graph.concept_name(c);
            let entry = section.transitions.get(name).ok_or_else(|| {
                Error::data(format!(
                    "{}: components[{j}].transitions: missing concept {name:?}",
                    path.display()
                ))
            })?;
            let sum = entry.learn + entry.stay;
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::data(format!(
                    "{}: components[{j}].transitions.{name}: row sums to {sum} \
                     (residual {:.3e})",
                    path.display(),
                    (sum - 1.0).abs()
                )));
            }
            transition.push(ConceptTransition { learn: entry.learn, stay: entry.stay });
        }
        for name in section.transitions.keys() {
            if graph.concept_index(name).is_none() {
                return Err(Error::data(format!(
                    "{}: components[{j}].transitions: unknown concept {name:?}",
                    path.display()
                )));
            }
        }
        components.push(PatternComponent { initial: section.initial.clone(), transition });
    }

    let mut guess = Vec::with_capacity(catalog.len());
    let mut fluency = Vec::with_capacity(catalog.len());
    for q in 0..catalog.len() {
        let id = catalog.id_of(q);
        let entry = file.observation.get(id).ok_or_else(|| {
            Error::data(format!("{}: observation: missing question {id:?}", path.display()))
        })?;
        guess.push(entry.guess);
        fluency.push(entry.fluency);
    }
    for id in file.observation.keys() {
        if catalog.index_of(id).is_none() {
            return Err(Error::data(format!(
                "{}: observation: unknown question {id:?}",
                path.display()
            )));
        }
    }

    let model = HPomdpModel {
        graph,
        space,
        catalog,
        components,
        observation: ObservationFunction::PerQuestion { guess, fluency },
        reward: match file.reward {
            RewardSection::MasteredCount => RewardSpec::MasteredCount,
            RewardSection::PerState(values) => RewardSpec::PerState(values),
        },
        discount: file.discount,
        membership: None,
        pattern_prior: file.membership_summary,
    };

    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::data(format!(
            "{}: model fails validation: {}",
            path.display(),
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(model)
}

/// Reads a model file, checking the format version before the schema.
pub fn load_model(path: &Path) -> Result<(HPomdpModel, Option<FitMetadata>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: not valid JSON: {e}", path.display())))?;
    let version = value
        .get("formatVersion")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::data(format!("{}: missing formatVersion", path.display())))?;
    if version != FORMAT_VERSION {
        return Err(Error::data(format!(
            "{}: unsupported formatVersion {version:?} (this build reads {FORMAT_VERSION:?})",
            path.display()
        )));
    }
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|e| Error::data(format!("{}: schema violation: {e}", path.display())))?;
    let metadata = file.metadata.clone();
    Ok((build_model(file, path)?, metadata))
}
