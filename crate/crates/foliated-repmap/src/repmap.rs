//! The foliated repetition roadmap: the base distribution graph replicated
//! into every leaf, stitched across foliations at intersection witnesses, and
//! annotated with per-node experience counts.
//!
//! Node `(i, theta, j)` is distribution `j` seen through leaf `(i, theta)`.
//! Valid, object-collision and constraint-violation counts are per node;
//! robot-collision counts are shared by all nodes of one distribution, since
//! robot-vs-environment contact does not depend on the leaf.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::BaseRoadmap;
use crate::env::{Aabb, ValidityTag};
use crate::error::{Error, Result};
use crate::foliation::{Configuration, Foliation, FoliationSet, IntersectionWitness, LeafId};
use crate::gmm::{GaussianComponent, PreparedMixture};

/// A single-leaf motion planning task cut out of a node sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub leaf: LeafId,
    pub start: Configuration,
    pub goal: Configuration,
    /// Distributions of the section's nodes in path order; the motion
    /// planner samples from these with probability rho.
    pub distributions: Vec<GaussianComponent>,
}

/// What the motion planner hands back after one task attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerFeedback {
    pub success: bool,
    /// Every configuration the planner evaluated, with its validity tag.
    pub samples: Vec<(Configuration, ValidityTag)>,
    pub path: Option<Vec<Configuration>>,
    pub path_length: f64,
}

/// An edge of the stitched roadmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeRef {
    /// Mirror of a base-roadmap edge inside one leaf (index into the base
    /// edge list).
    Intra(usize),
    /// Cross-foliation stitch (index into the witness list).
    Inter(usize),
}

/// A path through the roadmap: `edges[k]` connects `nodes[k]` to
/// `nodes[k+1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePath {
    pub nodes: Vec<usize>,
    pub edges: Vec<EdgeRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InterEdge {
    a: usize,
    b: usize,
    witness: usize,
}

/// Experience counters. All monotone within one query.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Counts {
    valid: Vec<u64>,
    object_invalid: Vec<u64>,
    constraint_invalid: Vec<u64>,
    /// Shared per distribution across every leaf.
    robot_invalid: Vec<u64>,
    ingested: u64,
    /// Pseudo-count mass injected by informed initialization, kept apart so
    /// conservation against ingested samples stays checkable.
    seeded: u64,
}

#[derive(Debug, Clone)]
pub struct FoliatedRepMap {
    roadmap: BaseRoadmap,
    mixture: PreparedMixture,
    foliations: FoliationSet,
    bounds: Aabb,
    leaves: Vec<LeafId>,
    /// Start offset of each foliation's leaves in `leaves`.
    leaf_offsets: Vec<usize>,
    witnesses: Vec<IntersectionWitness>,
    inter_edges: Vec<InterEdge>,
    /// Per node: (neighbor node, edge), sorted by neighbor then edge.
    adjacency: Vec<Vec<(usize, EdgeRef)>>,
    counts: Counts,
}

impl FoliatedRepMap {
    /// Replicates the base roadmap into every leaf and stitches leaves at the
    /// witnesses. All counts start at zero.
    pub fn new(
        roadmap: BaseRoadmap,
        foliations: FoliationSet,
        witnesses: Vec<IntersectionWitness>,
        bounds: &Aabb,
    ) -> Result<Self> {
        if roadmap.components.is_empty() {
            return Err(Error::InvalidProblem("empty base roadmap".to_string()));
        }
        let mixture = PreparedMixture::new(&roadmap.components)?;
        let mut leaves = Vec::new();
        let mut leaf_offsets = Vec::with_capacity(foliations.len());
        for f in foliations.iter() {
            leaf_offsets.push(leaves.len());
            for c in 0..f.co_params.len() {
                leaves.push(LeafId::new(f.id, c));
            }
        }
        let n_comps = roadmap.components.len();
        let n_nodes = leaves.len() * n_comps;
        let mut adjacency: Vec<Vec<(usize, EdgeRef)>> = vec![Vec::new(); n_nodes];

        for (leaf_idx, _) in leaves.iter().enumerate() {
            for (e_idx, &(a, b)) in roadmap.edges.iter().enumerate() {
                let na = leaf_idx * n_comps + a;
                let nb = leaf_idx * n_comps + b;
                adjacency[na].push((nb, EdgeRef::Intra(e_idx)));
                adjacency[nb].push((na, EdgeRef::Intra(e_idx)));
            }
        }

        let mut inter_edges = Vec::with_capacity(witnesses.len());
        for (w_idx, w) in witnesses.iter().enumerate() {
            foliations.validate_witness(w)?;
            if !bounds.contains(w.config.as_slice()) {
                return Err(Error::InvalidProblem(format!(
                    "witness {} lies outside the bounds",
                    w_idx
                )));
            }
            let j = mixture.assign(&w.config);
            let na = leaf_position(&leaf_offsets, w.leaf_a) * n_comps + j;
            let nb = leaf_position(&leaf_offsets, w.leaf_b) * n_comps + j;
            adjacency[na].push((nb, EdgeRef::Inter(w_idx)));
            adjacency[nb].push((na, EdgeRef::Inter(w_idx)));
            inter_edges.push(InterEdge {
                a: na,
                b: nb,
                witness: w_idx,
            });
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, e)| (n, edge_order(e)));
        }

        Ok(FoliatedRepMap {
            counts: Counts {
                valid: vec![0; n_nodes],
                object_invalid: vec![0; n_nodes],
                constraint_invalid: vec![0; n_nodes],
                robot_invalid: vec![0; n_comps],
                ingested: 0,
                seeded: 0,
            },
            roadmap,
            mixture,
            foliations,
            bounds: bounds.clone(),
            leaves,
            leaf_offsets,
            witnesses,
            inter_edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn component_count(&self) -> usize {
        self.roadmap.components.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn intersection_edge_count(&self) -> usize {
        self.inter_edges.len()
    }

    pub fn intra_edge_count(&self) -> usize {
        self.leaves.len() * self.roadmap.edges.len()
    }

    pub fn roadmap(&self) -> &BaseRoadmap {
        &self.roadmap
    }

    pub fn foliations(&self) -> &FoliationSet {
        &self.foliations
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn witnesses(&self) -> &[IntersectionWitness] {
        &self.witnesses
    }

    pub fn mixture(&self) -> &PreparedMixture {
        &self.mixture
    }

    /// Neighbors of a node with the connecting edges, in deterministic order.
    pub fn neighbors(&self, node: usize) -> &[(usize, EdgeRef)] {
        &self.adjacency[node]
    }

    pub fn node_id(&self, leaf: LeafId, component: usize) -> Result<usize> {
        if !self.foliations.contains_leaf(leaf) {
            return Err(Error::InvalidProblem(format!("unknown leaf {}", leaf)));
        }
        if component >= self.component_count() {
            return Err(Error::InvalidProblem(format!(
                "unknown component {}",
                component
            )));
        }
        Ok(leaf_position(&self.leaf_offsets, leaf) * self.component_count() + component)
    }

    pub fn node_leaf(&self, node: usize) -> LeafId {
        self.leaves[node / self.component_count()]
    }

    pub fn node_component(&self, node: usize) -> usize {
        node % self.component_count()
    }

    /// Maps the query endpoints onto roadmap nodes. Rejects configurations
    /// that violate their leaf's constraint.
    pub fn attach_start_goal(
        &self,
        q_start: &Configuration,
        leaf_start: LeafId,
        q_goal: &Configuration,
        leaf_goal: LeafId,
    ) -> Result<(usize, usize)> {
        for (q, leaf, what) in [(q_start, leaf_start, "start"), (q_goal, leaf_goal, "goal")] {
            if !self.foliations.on_leaf(q, leaf)? {
                return Err(Error::QueryRejected(format!(
                    "{} configuration violates leaf {} constraint",
                    what, leaf
                )));
            }
        }
        let start = self.node_id(leaf_start, self.mixture.assign(q_start))?;
        let goal = self.node_id(leaf_goal, self.mixture.assign(q_goal))?;
        Ok((start, goal))
    }

    fn check_path(&self, path: &NodePath) -> Result<()> {
        if path.nodes.is_empty() {
            return Err(Error::ContractViolation("empty node sequence".to_string()));
        }
        if path.edges.len() + 1 != path.nodes.len() {
            return Err(Error::ContractViolation(
                "edge list does not match node list".to_string(),
            ));
        }
        for (k, &edge) in path.edges.iter().enumerate() {
            let (u, v) = (path.nodes[k], path.nodes[k + 1]);
            let ok = self
                .adjacency
                .get(u)
                .map(|list| list.iter().any(|&(n, e)| n == v && e == edge))
                .unwrap_or(false);
            if !ok {
                return Err(Error::ContractViolation(format!(
                    "edge {:?} between nodes {} and {} is not in the map",
                    edge, u, v
                )));
            }
        }
        Ok(())
    }

    /// Cuts a node path at every intersection edge. Each maximal single-leaf
    /// section becomes one task whose endpoints are the query endpoints or
    /// the bounding witness configurations projected onto the section's leaf.
    pub fn split_into_tasks(
        &self,
        path: &NodePath,
        q_start: &Configuration,
        q_goal: &Configuration,
    ) -> Result<Vec<Task>> {
        self.check_path(path)?;
        let mut tasks = Vec::new();
        let mut section_start_cfg = q_start.clone();
        let mut section_nodes: Vec<usize> = vec![path.nodes[0]];
        for (k, &edge) in path.edges.iter().enumerate() {
            match edge {
                EdgeRef::Intra(_) => section_nodes.push(path.nodes[k + 1]),
                EdgeRef::Inter(w_idx) => {
                    let witness = &self.witnesses[w_idx];
                    let leaf = self.node_leaf(section_nodes[0]);
                    let goal_cfg = self.project_onto(&witness.config, leaf)?;
                    tasks.push(self.make_task(leaf, section_start_cfg, goal_cfg, &section_nodes)?);
                    let next_leaf = self.node_leaf(path.nodes[k + 1]);
                    section_start_cfg = self.project_onto(&witness.config, next_leaf)?;
                    section_nodes = vec![path.nodes[k + 1]];
                }
            }
        }
        let leaf = self.node_leaf(section_nodes[0]);
        tasks.push(self.make_task(leaf, section_start_cfg, q_goal.clone(), &section_nodes)?);
        Ok(tasks)
    }

    fn project_onto(&self, q: &Configuration, leaf: LeafId) -> Result<Configuration> {
        if self.foliations.on_leaf(q, leaf)? {
            return Ok(q.clone());
        }
        self.foliations
            .project_to_manifold(q, leaf, crate::foliation::DEFAULT_PROJECTION_ITERS)
    }

    fn make_task(
        &self,
        leaf: LeafId,
        start: Configuration,
        goal: Configuration,
        nodes: &[usize],
    ) -> Result<Task> {
        debug_assert!(nodes.iter().all(|&n| self.node_leaf(n) == leaf));
        let distributions = nodes
            .iter()
            .map(|&n| self.roadmap.components[self.node_component(n)].clone())
            .collect();
        Ok(Task {
            leaf,
            start,
            goal,
            distributions,
        })
    }

    /// Files the tagged samples of one task attempt into the counts. Every
    /// sample lands in exactly one counter of the node (task leaf, assigned
    /// distribution), except robot collisions which land in the shared
    /// per-distribution counter.
    pub fn ingest_feedback(&mut self, task: &Task, feedback: &PlannerFeedback) -> Result<()> {
        if !self.foliations.contains_leaf(task.leaf) {
            return Err(Error::InvalidProblem(format!(
                "task leaf {} not in map",
                task.leaf
            )));
        }
        let leaf_idx = leaf_position(&self.leaf_offsets, task.leaf);
        let n_comps = self.component_count();
        for (q, tag) in &feedback.samples {
            let j = self.mixture.assign(q);
            let node = leaf_idx * n_comps + j;
            match tag {
                ValidityTag::Valid => self.counts.valid[node] += 1,
                ValidityTag::RobotInvalid => self.counts.robot_invalid[j] += 1,
                ValidityTag::ObjectInvalid => self.counts.object_invalid[node] += 1,
                ValidityTag::ConstraintInvalid => self.counts.constraint_invalid[node] += 1,
            }
            self.counts.ingested += 1;
        }
        Ok(())
    }

    /// Seeds shared robot-invalid pseudo-counts from external per-distribution
    /// collision scores in [0, 1]: count_j = round((1 - score_j) * kappa).
    pub fn init_weights(
        &mut self,
        scores: &std::collections::BTreeMap<usize, f64>,
        kappa: f64,
    ) -> Result<()> {
        if kappa < 0.0 {
            return Err(Error::InvalidParameter("kappa must be >= 0".to_string()));
        }
        for (&j, &score) in scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::InvalidParameter(format!(
                    "initialization score {} for distribution {} outside [0,1]",
                    score, j
                )));
            }
            if j >= self.component_count() {
                return Err(Error::InvalidParameter(format!(
                    "initialization score for unknown distribution {}",
                    j
                )));
            }
            let pseudo = ((1.0 - score) * kappa).round() as u64;
            self.counts.robot_invalid[j] += pseudo;
            self.counts.seeded += pseudo;
        }
        Ok(())
    }

    pub fn valid_count(&self, node: usize) -> u64 {
        self.counts.valid[node]
    }

    pub fn object_invalid_count(&self, node: usize) -> u64 {
        self.counts.object_invalid[node]
    }

    pub fn constraint_invalid_count(&self, node: usize) -> u64 {
        self.counts.constraint_invalid[node]
    }

    /// Shared robot-collision count of one distribution.
    pub fn robot_invalid_count(&self, component: usize) -> u64 {
        self.counts.robot_invalid[component]
    }

    pub fn samples_ingested(&self) -> u64 {
        self.counts.ingested
    }

    pub fn seeded_pseudo_mass(&self) -> u64 {
        self.counts.seeded
    }

    /// Sum of all counters; minus the seeded pseudo-mass it equals the number
    /// of ingested samples.
    pub fn total_count_mass(&self) -> u64 {
        self.counts.valid.iter().sum::<u64>()
            + self.counts.object_invalid.iter().sum::<u64>()
            + self.counts.constraint_invalid.iter().sum::<u64>()
            + self.counts.robot_invalid.iter().sum::<u64>()
    }

    pub fn all_counts_zero(&self) -> bool {
        self.total_count_mass() == 0
    }

    /// Similarity between the co-parameter of `leaf` and co-parameter `other`
    /// of the same foliation.
    pub fn leaf_similarity(&self, leaf: LeafId, other: usize) -> f64 {
        self.foliations
            .similarity(leaf.foliation, leaf.co_param, other)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = RepMapFile {
            schema: REPMAP_SCHEMA.to_string(),
            dimension: self.foliations.dimension(),
            bounds: self.bounds.clone(),
            foliations: self.foliations.to_vec(),
            roadmap: self.roadmap.clone(),
            witnesses: self.witnesses.clone(),
            counts: self.counts.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: RepMapFile = serde_json::from_str(&text)?;
        if file.schema != REPMAP_SCHEMA {
            return Err(Error::InvalidProblem(format!(
                "unsupported roadmap schema '{}'",
                file.schema
            )));
        }
        let foliations = FoliationSet::new(file.foliations, file.dimension)?;
        let mut map = FoliatedRepMap::new(file.roadmap, foliations, file.witnesses, &file.bounds)?;
        if file.counts.valid.len() != map.counts.valid.len()
            || file.counts.robot_invalid.len() != map.counts.robot_invalid.len()
        {
            return Err(Error::InvalidProblem(
                "count tables do not match the roadmap".to_string(),
            ));
        }
        map.counts = file.counts;
        Ok(map)
    }
}

fn leaf_position(offsets: &[usize], leaf: LeafId) -> usize {
    offsets[leaf.foliation] + leaf.co_param
}

fn edge_order(e: EdgeRef) -> (u8, usize) {
    match e {
        EdgeRef::Intra(i) => (0, i),
        EdgeRef::Inter(i) => (1, i),
    }
}

pub const REPMAP_SCHEMA: &str = "frm-repmap/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RepMapFile {
    schema: String,
    dimension: usize,
    bounds: Aabb,
    foliations: Vec<Foliation>,
    roadmap: BaseRoadmap,
    witnesses: Vec<IntersectionWitness>,
    counts: Counts,
}
