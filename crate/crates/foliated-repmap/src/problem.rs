//! Problem definitions: the versioned on-disk schema binding an environment,
//! foliations, intersection witnesses and the query endpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{check_validity, Environment, ValidityTag};
use crate::error::{Error, Result};
use crate::foliation::{Configuration, Foliation, FoliationSet, IntersectionWitness, LeafId};

/// The three benchmark structure categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Simple,
    Sequential,
    Crossing,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Category::Simple => "simple",
            Category::Sequential => "sequential",
            Category::Crossing => "crossing",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Category::Simple),
            "sequential" => Ok(Category::Sequential),
            "crossing" => Ok(Category::Crossing),
            other => Err(Error::InvalidParameter(format!(
                "unknown category '{}'",
                other
            ))),
        }
    }
}

/// A query endpoint: a configuration pinned to a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub leaf: LeafId,
    pub config: Configuration,
}

/// A fully validated planning problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub category: Option<Category>,
    pub environment: Environment,
    pub foliations: FoliationSet,
    pub witnesses: Vec<IntersectionWitness>,
    pub start: Endpoint,
    pub goal: Endpoint,
}

pub const PROBLEM_SCHEMA: &str = "frm-problem/1";

/// On-disk problem format, versioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub schema: String,
    pub name: String,
    pub category: Option<Category>,
    pub dimension: usize,
    pub environment: Environment,
    pub foliations: Vec<Foliation>,
    pub witnesses: Vec<IntersectionWitness>,
    pub start: Endpoint,
    pub goal: Endpoint,
}

impl Problem {
    /// Builds and validates a problem from its parts.
    pub fn new(
        name: impl Into<String>,
        category: Option<Category>,
        environment: Environment,
        foliations: FoliationSet,
        witnesses: Vec<IntersectionWitness>,
        start: Endpoint,
        goal: Endpoint,
    ) -> Result<Self> {
        let problem = Problem {
            name: name.into(),
            category,
            environment,
            foliations,
            witnesses,
            start,
            goal,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn dimension(&self) -> usize {
        self.foliations.dimension()
    }

    fn validate(&self) -> Result<()> {
        if self.environment.bounds.dim() != self.foliations.dimension() {
            return Err(Error::InvalidProblem(
                "environment bounds and foliations disagree on dimension".to_string(),
            ));
        }
        for w in &self.witnesses {
            self.foliations.validate_witness(w)?;
            if !self.environment.bounds.contains(w.config.as_slice()) {
                return Err(Error::InvalidProblem(
                    "witness configuration out of bounds".to_string(),
                ));
            }
        }
        for (what, ep) in [("start", &self.start), ("goal", &self.goal)] {
            if !self.foliations.contains_leaf(ep.leaf) {
                return Err(Error::InvalidProblem(format!(
                    "{} references unknown leaf {}",
                    what, ep.leaf
                )));
            }
            let tag = check_validity(&ep.config, ep.leaf, &self.environment, &self.foliations);
            if tag != ValidityTag::Valid {
                return Err(Error::InvalidProblem(format!(
                    "{} configuration is {} on leaf {}",
                    what, tag, ep.leaf
                )));
            }
        }
        Ok(())
    }

    /// Leaf-level adjacency induced by the witnesses, for reachability
    /// analysis over the foliated structure.
    pub fn leaf_graph(&self) -> Vec<(LeafId, LeafId)> {
        self.witnesses
            .iter()
            .map(|w| (w.leaf_a, w.leaf_b))
            .collect()
    }

    /// Fewest leaf switches between two leaves, if connected at all.
    pub fn leaf_hops(&self, from: LeafId, to: LeafId) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let edges = self.leaf_graph();
        let mut frontier = vec![from];
        let mut dist = std::collections::BTreeMap::new();
        dist.insert(from, 0usize);
        while let Some(u) = frontier.pop() {
            let d = dist[&u];
            for &(a, b) in &edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !dist.contains_key(&y) {
                        dist.insert(y, d + 1);
                        if y == to {
                            return Some(d + 1);
                        }
                        frontier.push(y);
                    }
                }
            }
        }
        dist.get(&to).copied()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ProblemFile {
            schema: PROBLEM_SCHEMA.to_string(),
            name: self.name.clone(),
            category: self.category,
            dimension: self.dimension(),
            environment: self.environment.clone(),
            foliations: self.foliations.to_vec(),
            witnesses: self.witnesses.clone(),
            start: self.start.clone(),
            goal: self.goal.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    /// Loads and validates a problem file. Malformed JSON reports the line
    /// and column through the serde error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ProblemFile = serde_json::from_str(&text)?;
        if file.schema != PROBLEM_SCHEMA {
            return Err(Error::InvalidProblem(format!(
                "unsupported problem schema '{}'",
                file.schema
            )));
        }
        let foliations = FoliationSet::new(file.foliations, file.dimension)?;
        Problem::new(
            file.name,
            file.category,
            file.environment,
            foliations,
            file.witnesses,
            file.start,
            file.goal,
        )
    }
}
