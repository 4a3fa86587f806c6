//! Answer-log ingestion and the canonical dataset file.
//!
//! Input logs are delimited text (comma or tab, sniffed from the header)
//! with one answered question per row. A column mapping names the five
//! required attributes; rows are grouped by student and ordered by the
//! sequence column, so ingestion is insensitive to input row order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::domain::{
    Catalog, ConceptGraph, Dataset, Observation, Question, Step, Trajectory,
};
use crate::error::{Error, Result};

/// Names the five log columns and decodes the correctness values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    /// Chronological ordering key (numeric).
    pub sequence: String,
    pub student: String,
    pub question: String,
    pub concept: String,
    pub correctness: String,
    /// Raw correctness value -> 0/1. Unmapped values drop the row.
    pub decoder: BTreeMap<String, u8>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            sequence: "seq_id".into(),
            student: "student_id".into(),
            question: "question_id".into(),
            concept: "concept_id".into(),
            correctness: "correct".into(),
            decoder: default_decoder(),
        }
    }
}

/// Accepts plain 0/1 flags plus the three-level correct/partial/incorrect
/// coding seen in commercial tutoring logs; partial credit maps to
/// incorrect because observations are binary.
pub fn default_decoder() -> BTreeMap<String, u8> {
    [
        ("1", 1u8),
        ("0", 0),
        ("true", 1),
        ("false", 0),
        ("I01", 1),
        ("I02", 0),
        ("I03", 0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped_bad_sequence: usize,
    pub dropped_undecodable: usize,
    pub dropped_unknown_concept: usize,
    /// Questions whose rows named more than one concept.
    pub conflicting_questions: usize,
    pub students: usize,
    /// Kept rows per concept, in graph concept order.
    pub per_concept: Vec<(String, usize)>,
}

struct RawRow {
    sequence: f64,
    question: String,
    concept: usize,
    correct: u8,
}

fn sniff_delimiter(path: &Path) -> Result<u8> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header = text.lines().next().unwrap_or("");
    Ok(if header.contains('\t') { b'\t' } else { b',' })
}

fn header_index(headers: &csv::StringRecord, key: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h.trim() == key).ok_or_else(|| {
        Error::contract(format!(
            "{}: header has no column {key:?} (columns: {})",
            path.display(),
            headers.iter().map(|h| format!("{h:?}")).collect::<Vec<_>>().join(", ")
        ))
    })
}

/// Reads an answer log into a dataset over `graph`, dropping and counting
/// rows that cannot be used.
pub fn ingest_logs(
    path: &Path,
    mapping: &ColumnMapping,
    graph: &ConceptGraph,
) -> Result<(Dataset, IngestReport)> {
    let keys = [
        &mapping.sequence,
        &mapping.student,
        &mapping.question,
        &mapping.concept,
        &mapping.correctness,
    ];
    for (i, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(i + 1) {
            if a == b {
                return Err(Error::contract(format!(
                    "column mapping keys must be distinct; {a:?} is used twice"
                )));
            }
        }
    }

    let delimiter = sniff_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .clone();
    let col_sequence = header_index(&headers, &mapping.sequence, path)?;
    let col_student = header_index(&headers, &mapping.student, path)?;
    let col_question = header_index(&headers, &mapping.question, path)?;
    let col_concept = header_index(&headers, &mapping.concept, path)?;
    let col_correct = header_index(&headers, &mapping.correctness, path)?;

    let mut report = IngestReport::default();
    let mut per_student: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    let mut concept_rows = vec![0usize; graph.concept_count()];

    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        report.rows_read += 1;
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();

        let sequence: f64 = match field(col_sequence).parse() {
            Ok(v) if f64::is_finite(v) => v,
            _ => {
                report.dropped_bad_sequence += 1;
                continue;
            }
        };
        let correct = match mapping.decoder.get(&field(col_correct)) {
            Some(&bit) => bit,
            None => {
                report.dropped_undecodable += 1;
                continue;
            }
        };
        let concept = match graph.concept_index(&field(col_concept)) {
            Some(c) => c,
            None => {
                report.dropped_unknown_concept += 1;
                continue;
            }
        };
        report.rows_kept += 1;
        concept_rows[concept] += 1;
        per_student.entry(field(col_student)).or_default().push(RawRow {
            sequence,
            question: field(col_question),
            concept,
            correct,
        });
    }

    // Resolve each question's concept by majority vote over its rows,
    // ties toward the lower concept index.
    let mut votes: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for rows in per_student.values() {
        for row in rows {
            *votes.entry(row.question.clone()).or_default().entry(row.concept).or_insert(0) += 1;
        }
    }
    let mut resolved: BTreeMap<String, usize> = BTreeMap::new();
    for (question, tally) in &votes {
        let winner = tally
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&c, _)| c)
            .expect("non-empty tally");
        if tally.len() > 1 {
            report.conflicting_questions += 1;
            warn!(
                "question {question:?} appears under {} concepts; keeping {:?}",
                tally.len(),
                graph.concept_name(winner)
            );
        }
        resolved.insert(question.clone(), winner);
    }

    let questions: Vec<Question> = resolved
        .iter()
        .map(|(id, &concept)| Question { id: id.clone(), concept })
        .collect();
    let catalog = Catalog::new(questions, graph.concept_count())?;

    let mut trajectories = Vec::with_capacity(per_student.len());
    for (student, mut rows) in per_student {
        rows.sort_by(|a, b| {
            a.sequence
                .partial_cmp(&b.sequence)
                .expect("finite sequence keys")
                .then_with(|| a.question.cmp(&b.question))
                .then_with(|| a.correct.cmp(&b.correct))
        });
        let steps: Vec<Step> = rows
            .iter()
            .map(|row| Step {
                question: catalog.index_of(&row.question).expect("catalog covers kept rows"),
                observation: Observation::from_bit(row.correct),
            })
            .collect();
        trajectories.push(Trajectory { student, steps });
    }

    report.students = trajectories.len();
    report.per_concept = graph
        .concepts()
        .iter()
        .enumerate()
        .map(|(c, name)| (name.clone(), concept_rows[c]))
        .collect();

    Ok((Dataset { graph: graph.clone(), catalog, trajectories }, report))
}

// ---------------------------------------------------------------------------
// Canonical dataset file
// ---------------------------------------------------------------------------

const DATASET_HEADER: &str = "student\tstep\tquestion\tconcept\tcorrect";

/// Writes the canonical one-step-per-line dataset file, sorted by
/// (student, step).
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut rows: Vec<String> = Vec::new();
    let mut order: Vec<usize> = (0..dataset.trajectories.len()).collect();
    order.sort_by(|&a, &b| {
        dataset.trajectories[a].student.cmp(&dataset.trajectories[b].student)
    });
    for idx in order {
        let trajectory = &dataset.trajectories[idx];
        for (t, step) in trajectory.steps.iter().enumerate() {
            let question = dataset.catalog.question(step.question);
            rows.push(format!(
                "{}\t{}\t{}\t{}\t{}",
                trajectory.student,
                t + 1,
                question.id,
                dataset.graph.concept_name(question.concept),
                step.observation.bit()
            ));
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(file, "{DATASET_HEADER}").map_err(|e| Error::io(path.display().to_string(), e))?;
    for row in rows {
        writeln!(file, "{row}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Reads a canonical dataset file back against `graph`.
pub fn read_dataset(path: &Path, graph: &ConceptGraph) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == DATASET_HEADER => {}
        Some(other) => {
            return Err(Error::data(format!(
                "{}: unexpected header {other:?} (expected {DATASET_HEADER:?})",
                path.display()
            )))
        }
        None => return Err(Error::data(format!("{}: empty file", path.display()))),
    }

    let mut question_concepts: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_student: BTreeMap<String, Vec<(usize, String, u8)>> = BTreeMap::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::data(format!(
                "{}: line {}: expected 5 tab-separated fields, found {}",
                path.display(),
                line_no + 2,
                fields.len()
            )));
        }
        let step: usize = fields[1].parse().map_err(|_| {
            Error::data(format!("{}: line {}: bad step index {:?}", path.display(), line_no + 2, fields[1]))
        })?;
        let concept = graph.concept_index(fields[3]).ok_or_else(|| {
            Error::data(format!(
                "{}: line {}: concept {:?} is not in the graph",
                path.display(),
                line_no + 2,
                fields[3]
            ))
        })?;
        let correct: u8 = match fields[4] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::data(format!(
                    "{}: line {}: bad correctness {other:?}",
                    path.display(),
                    line_no + 2
                )))
            }
        };
        if let Some(&existing) = question_concepts.get(fields[2]) {
            if existing != concept {
                return Err(Error::data(format!(
                    "{}: line {}: question {:?} mapped to two concepts",
                    path.display(),
                    line_no + 2,
                    fields[2]
                )));
            }
        } else {
            question_concepts.insert(fields[2].to_string(), concept);
        }
        per_student
            .entry(fields[0].to_string())
            .or_default()
            .push((step, fields[2].to_string(), correct));
    }

    let questions: Vec<Question> = question_concepts
        .iter()
        .map(|(id, &concept)| Question { id: id.clone(), concept })
        .collect();
    let catalog = Catalog::new(questions, graph.concept_count())?;
    let mut trajectories = Vec::with_capacity(per_student.len());
    for (student, mut rows) in per_student {
        rows.sort();
        let steps = rows
            .iter()
            .map(|(_, question, correct)| Step {
                question: catalog.index_of(question).expect("catalog covers all rows"),
                observation: Observation::from_bit(*correct),
            })
            .collect();
        trajectories.push(Trajectory { student, steps });
    }
    Ok(Dataset { graph: graph.clone(), catalog, trajectories })
}
