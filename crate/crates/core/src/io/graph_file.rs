//! Plain-text concept graph files.
//!
//! One declaration per line, `#` starts a comment:
//!
//! ```text
//! concept algebra
//! concept equations
//! edge algebra equations   # algebra is a prerequisite of equations
//! ```

use std::fs;
use std::path::Path;

use crate::domain::ConceptGraph;
use crate::error::{Error, Result};

pub fn parse_graph(text: &str, origin: &str) -> Result<ConceptGraph> {
    let mut concepts = Vec::new();
    let mut edges = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        match keyword {
            "concept" => {
                if rest.len() != 1 {
                    return Err(Error::data(format!(
                        "{origin}: line {}: expected `concept <id>`",
                        line_no + 1
                    )));
                }
                concepts.push(rest[0].to_string());
            }
            "edge" => {
                if rest.len() != 2 {
                    return Err(Error::data(format!(
                        "{origin}: line {}: expected `edge <parent> <child>`",
                        line_no + 1
                    )));
                }
                edges.push((rest[0].to_string(), rest[1].to_string()));
            }
            other => {
                return Err(Error::data(format!(
                    "{origin}: line {}: unknown keyword {other:?}",
                    line_no + 1
                )))
            }
        }
    }
    ConceptGraph::new(concepts, edges).map_err(|e| Error::data(format!("{origin}: {e}")))
}

pub fn load_graph(path: &Path) -> Result<ConceptGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_graph(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chain_with_comments() {
        let graph = parse_graph(
            "# demo\nconcept A\nconcept B\nconcept C\nedge A B # prereq\nedge B C\n",
            "test",
        )
        .unwrap();
        assert_eq!(graph.concept_count(), 3);
        assert_eq!(graph.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_malformed_lines_and_cycles() {
        assert!(parse_graph("concept A B\n", "test").is_err());
        assert!(parse_graph("node A\n", "test").is_err());
        assert!(parse_graph("concept A\nedge A\n", "test").is_err());
        let err = parse_graph("concept A\nconcept B\nedge A B\nedge B A\n", "test").unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }
}
