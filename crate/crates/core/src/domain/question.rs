//! The question catalog: each question exercises exactly one concept.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    /// Index into the graph's concept list.
    pub concept: usize,
}

/// Questions sorted by id; the index of a question in the catalog is its
/// action index everywhere else in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    questions: Vec<Question>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    /// Builds a catalog, sorting by question id and rejecting duplicates
    /// and out-of-range concept indices.
    pub fn new(mut questions: Vec<Question>, concept_count: usize) -> Result<Self> {
        questions.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if q.concept >= concept_count {
                return Err(Error::structure(format!(
                    "question {:?} references concept index {} outside the graph ({} concepts)",
                    q.id, q.concept, concept_count
                )));
            }
            if by_id.insert(q.id.clone(), i).is_some() {
                return Err(Error::structure(format!("duplicate question id {:?}", q.id)));
            }
        }
        Ok(Catalog { questions, by_id })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn question(&self, idx: usize) -> &Question {
        &self.questions[idx]
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn concept_of(&self, idx: usize) -> usize {
        self.questions[idx].concept
    }

    pub fn id_of(&self, idx: usize) -> &str {
        &self.questions[idx].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_by_id_and_indexes() {
        let catalog = Catalog::new(
            vec![
                Question { id: "q2".into(), concept: 0 },
                Question { id: "q1".into(), concept: 1 },
            ],
            2,
        )
        .unwrap();
        assert_eq!(catalog.id_of(0), "q1");
        assert_eq!(catalog.index_of("q2"), Some(1));
        assert_eq!(catalog.index_of("q9"), None);
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_concepts() {
        let dup = Catalog::new(
            vec![
                Question { id: "q".into(), concept: 0 },
                Question { id: "q".into(), concept: 0 },
            ],
            1,
        );
        assert!(dup.is_err());
        let bad = Catalog::new(vec![Question { id: "q".into(), concept: 3 }], 1);
        assert!(bad.is_err());
    }
}
