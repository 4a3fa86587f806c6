//! Knowledge-concept graphs: named concepts plus directed prerequisite
//! edges (parent must be mastered before the child can be acquired).

use std::collections::HashMap;

use crate::error::{Error, Result};

/// An acyclic prerequisite graph over an ordered list of concepts.
///
/// Concept order is fixed at construction and determines the bit layout
/// of [`super::space::KnowledgeState`] masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptGraph {
    concepts: Vec<String>,
    index: HashMap<String, usize>,
    /// Prerequisite parents per concept, sorted ascending.
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl ConceptGraph {
    /// Builds a graph from concept names and (parent, child) edges.
    ///
    /// Rejects duplicate concept names, edges with undeclared endpoints,
    /// self-loops and cycles.
    pub fn new<S: Into<String>>(concepts: Vec<S>, edges: Vec<(S, S)>) -> Result<Self> {
        let concepts: Vec<String> = concepts.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(concepts.len());
        for (i, name) in concepts.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::structure("empty concept identifier"));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::structure(format!("duplicate concept identifier {name:?}")));
            }
        }

        let k = concepts.len();
        let mut parents = vec![Vec::new(); k];
        let mut children = vec![Vec::new(); k];
        let mut edge_list = Vec::with_capacity(edges.len());
        for (parent, child) in edges {
            let parent = parent.into();
            let child = child.into();
            let p = *index
                .get(&parent)
                .ok_or_else(|| Error::structure(format!("edge references undeclared concept {parent:?}")))?;
            let c = *index
                .get(&child)
                .ok_or_else(|| Error::structure(format!("edge references undeclared concept {child:?}")))?;
            if p == c {
                return Err(Error::structure(format!("self-loop on concept {child:?}")));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
                children[p].push(c);
                edge_list.push((p, c));
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        edge_list.sort_unstable();

        let graph = ConceptGraph { concepts, index, parents, children, edges: edge_list };
        graph.check_acyclic()?;
        Ok(graph)
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm; leftover nodes mean a cycle.
        let k = self.concepts.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..k).filter(|&c| indegree[c] == 0).collect();
        let mut seen = 0;
        while let Some(c) = queue.pop() {
            seen += 1;
            for &child in &self.children[c] {
                indegree[child] -= 1;
                if indegree[child] == 0 {
                    queue.push(child);
                }
            }
        }
        if seen != k {
            let stuck: Vec<&str> = (0..k)
                .filter(|&c| indegree[c] > 0)
                .map(|c| self.concepts[c].as_str())
                .collect();
            return Err(Error::structure(format!(
                "prerequisite graph has a cycle through {{{}}}",
                stuck.join(", ")
            )));
        }
        Ok(())
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn concept_name(&self, idx: usize) -> &str {
        &self.concepts[idx]
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Prerequisite parents of `concept`, sorted ascending.
    pub fn parents(&self, concept: usize) -> &[usize] {
        &self.parents[concept]
    }

    pub fn children(&self, concept: usize) -> &[usize] {
        &self.children[concept]
    }

    /// All (parent, child) edges, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_chain() {
        let g = ConceptGraph::new(vec!["A", "B", "C"], vec![("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(g.concept_count(), 3);
        assert_eq!(g.parents(2), &[1]);
        assert_eq!(g.children(0), &[1]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_cycle() {
        let err = ConceptGraph::new(vec!["A", "B"], vec![("A", "B"), ("B", "A")]).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn rejects_duplicate_concepts() {
        let err = ConceptGraph::new(vec!["A", "A"], vec![]).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn rejects_unknown_edge_endpoint() {
        let err = ConceptGraph::new(vec!["A"], vec![("A", "Z")]).unwrap_err();
        assert!(err.to_string().contains("undeclared"));
    }

    #[test]
    fn deduplicates_repeated_edges() {
        let g = ConceptGraph::new(vec!["A", "B"], vec![("A", "B"), ("A", "B")]).unwrap();
        assert_eq!(g.edges().len(), 1);
    }
}
