//! Base roadmap construction: trajectory dataset -> GMM -> distribution graph.
//!
//! The base roadmap lives in the unconstrained ambient space. Trajectories
//! planned between random valid pairs in the obstacle-free training world are
//! clustered into a Gaussian mixture, and two distributions get an edge when
//! enough distinct trajectories pass directly between them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_validity, Environment, ValidityTag};
use crate::error::{Error, Result};
use crate::foliation::{
    CoParameter, Configuration, ConstraintKind, Foliation, FoliationSet, LeafId, ObjectPoseRule,
    DEFAULT_EPSILON,
};
use crate::gmm::{fit_gmm, ClusteringConfig, GaussianComponent, GmmFit, PreparedMixture};
use crate::motion::{plan_task, MotionPlannerConfig};
use crate::repmap::Task;

/// Waypoint sequences collected in the training world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Vec<Configuration>>,
}

impl TrajectoryDataset {
    pub fn waypoints(&self) -> impl Iterator<Item = &Configuration> {
        self.trajectories.iter().flatten()
    }

    pub fn waypoint_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Checks the dataset invariants against the training environment.
    pub fn validate(&self, env: &Environment) -> Result<()> {
        for (i, traj) in self.trajectories.iter().enumerate() {
            if traj.len() < 2 {
                return Err(Error::InvalidProblem(format!(
                    "trajectory {} has fewer than 2 waypoints",
                    i
                )));
            }
            for q in traj {
                if !env.bounds.contains(q.as_slice()) || env.robot_collides(q.as_slice()) {
                    return Err(Error::InvalidProblem(format!(
                        "trajectory {} leaves the valid training space",
                        i
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The distribution graph over the fitted mixture. Components that end up
/// with no incident edge are pruned; `id` keeps each component's original
/// mixture index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseRoadmap {
    pub components: Vec<GaussianComponent>,
    /// Unordered pairs, stored as (low, high) positions into `components`.
    pub edges: Vec<(usize, usize)>,
}

impl BaseRoadmap {
    pub fn node_count(&self) -> usize {
        self.components.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn dimension(&self) -> usize {
        self.components.first().map(|c| c.mean.len()).unwrap_or(0)
    }

    /// True when every component can reach every other through the edges.
    pub fn is_connected(&self) -> bool {
        let n = self.components.len();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }
}

/// On-disk atlas format, versioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasFile {
    pub schema: String,
    pub dimension: usize,
    pub roadmap: BaseRoadmap,
    pub meta: AtlasMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasMeta {
    pub seed: u64,
    pub n_pairs: usize,
    pub tau_edge: usize,
    pub gmm_k: usize,
}

pub const ATLAS_SCHEMA: &str = "frm-atlas/1";

impl AtlasFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: AtlasFile = serde_json::from_str(&text)?;
        if file.schema != ATLAS_SCHEMA {
            return Err(Error::InvalidProblem(format!(
                "unsupported atlas schema '{}'",
                file.schema
            )));
        }
        if file.roadmap.dimension() != file.dimension {
            return Err(Error::InvalidProblem(
                "atlas dimension disagrees with components".to_string(),
            ));
        }
        Ok(file)
    }
}

/// A single-leaf, unconstrained pseudo-foliation covering the training world.
fn free_foliation(dim: usize) -> Result<FoliationSet> {
    let f = Foliation {
        id: 0,
        name: "training-free-space".to_string(),
        constraint: ConstraintKind::Free,
        co_params: vec![CoParameter::new("free", vec![0.0])],
        epsilon: DEFAULT_EPSILON,
        sigma_sim: Some(1.0),
        object_pose: ObjectPoseRule::None,
    };
    FoliationSet::new(vec![f], dim)
}

const PAIR_RETRIES: usize = 10;
const PAIR_MIN_DISTANCE: f64 = 1e-3;

/// Plans `n_pairs` shortcut-smoothed trajectories between uniformly sampled
/// valid pairs in the (obstacle-free) training environment. Deterministic for
/// a fixed seed; each pair draws from its own derived stream.
pub fn generate_dataset(
    env_free: &Environment,
    n_pairs: usize,
    motion: &MotionPlannerConfig,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be >= 1".to_string()));
    }
    let dim = env_free.bounds.dim();
    let foliations = free_foliation(dim)?;
    let leaf = LeafId::new(0, 0);

    let mut trajectories = Vec::with_capacity(n_pairs);
    for pair in 0..n_pairs {
        let mut rng = ChaCha12Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(pair as u64),
        );
        let mut done = false;
        for _attempt in 0..PAIR_RETRIES {
            let a = sample_valid(env_free, &foliations, leaf, &mut rng);
            let b = sample_valid(env_free, &foliations, leaf, &mut rng);
            if a.distance(&b) < PAIR_MIN_DISTANCE {
                continue;
            }
            let task = Task {
                leaf,
                start: a,
                goal: b,
                distributions: Vec::new(),
            };
            let fb = plan_task(&task, env_free, &foliations, motion, &mut rng);
            if let (true, Some(path)) = (fb.success, fb.path) {
                if path.len() >= 2 {
                    trajectories.push(path);
                    done = true;
                    break;
                }
            }
        }
        if !done {
            return Err(Error::AtlasConstruction(format!(
                "could not plan a training trajectory for pair {} after {} retries",
                pair, PAIR_RETRIES
            )));
        }
    }
    let dataset = TrajectoryDataset { trajectories };
    dataset.validate(env_free)?;
    Ok(dataset)
}

fn sample_valid<R: Rng>(
    env: &Environment,
    foliations: &FoliationSet,
    leaf: LeafId,
    rng: &mut R,
) -> Configuration {
    loop {
        let coords: Vec<f64> = env
            .bounds
            .min
            .iter()
            .zip(&env.bounds.max)
            .map(|(lo, hi)| rng.random_range(*lo..*hi))
            .collect();
        let q = Configuration(coords);
        if check_validity(&q, leaf, env, foliations) == ValidityTag::Valid {
            return q;
        }
    }
}

/// Votes edges from the trajectories' distribution sequences: consecutive
/// repeats collapse first, then each adjacent pair counts once per
/// trajectory. An edge appears when its votes reach `tau_edge`; components
/// left without edges are pruned.
pub fn build_base_roadmap(
    dataset: &TrajectoryDataset,
    components: &[GaussianComponent],
    tau_edge: usize,
) -> Result<BaseRoadmap> {
    if tau_edge == 0 {
        return Err(Error::InvalidParameter("tau_edge must be >= 1".to_string()));
    }
    let mixture = PreparedMixture::new(components)?;
    let mut votes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for traj in &dataset.trajectories {
        let mut seq: Vec<usize> = Vec::with_capacity(traj.len());
        for q in traj {
            let j = mixture.assign(q);
            if seq.last() != Some(&j) {
                seq.push(j);
            }
        }
        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        for w in seq.windows(2) {
            let pair = (w[0].min(w[1]), w[0].max(w[1]));
            seen.insert(pair);
        }
        for pair in seen {
            *votes.entry(pair).or_insert(0) += 1;
        }
    }
    let raw_edges: Vec<(usize, usize)> = votes
        .into_iter()
        .filter(|(_, v)| *v >= tau_edge)
        .map(|(pair, _)| pair)
        .collect();
    if raw_edges.is_empty() {
        return Err(Error::AtlasConstruction(format!(
            "no distribution pair reached tau_edge={}",
            tau_edge
        )));
    }
    // Prune isolated components, remapping edge endpoints onto positions in
    // the retained list. Original mixture indices survive in `id`.
    let used: BTreeSet<usize> = raw_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut remap = vec![usize::MAX; components.len()];
    let mut retained = Vec::with_capacity(used.len());
    for (new_idx, &old_idx) in used.iter().enumerate() {
        remap[old_idx] = new_idx;
        let mut c = components[old_idx].clone();
        c.id = old_idx;
        retained.push(c);
    }
    let edges = raw_edges
        .into_iter()
        .map(|(a, b)| (remap[a], remap[b]))
        .collect();
    Ok(BaseRoadmap {
        components: retained,
        edges,
    })
}

/// Full offline pipeline: dataset -> GMM -> base roadmap.
pub fn build_atlas(
    env_free: &Environment,
    n_pairs: usize,
    motion: &MotionPlannerConfig,
    clustering: &ClusteringConfig,
    tau_edge: usize,
    seed: u64,
) -> Result<(BaseRoadmap, GmmFit)> {
    let dataset = generate_dataset(env_free, n_pairs, motion, seed)?;
    let points: Vec<Configuration> = dataset.waypoints().cloned().collect();
    let mut cfg = clustering.clone();
    cfg.seed = seed;
    let fit = fit_gmm(&points, &cfg)?;
    let roadmap = build_base_roadmap(&dataset, &fit.components, tau_edge)?;
    Ok((roadmap, fit))
}
