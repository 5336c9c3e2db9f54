//! Value-iteration task planning with dead-end semantics.
//!
//! Each node carries a valid score s+ and an invalid score s- folded from the
//! counts across the foliation's co-parameters; an edge's success probability
//! is (1 + s+_m + s+_n) / (1 + s+_m + s+_n + s-_m + s-_n), or 0.5 on a virgin
//! map. Taking an edge either lands at its far node or, with the complement
//! probability, in an absorbing dead-end that costs a one-time penalty.
//! Entering the goal pays the reward and ends the episode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repmap::{EdgeRef, FoliatedRepMap, NodePath};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MdpParams {
    pub goal_reward: f64,
    pub deadend_penalty: f64,
    pub discount: f64,
    pub vi_tolerance: f64,
    pub vi_max_iters: usize,
}

impl Default for MdpParams {
    fn default() -> Self {
        // The reward must dwarf the dead-end penalty: at the virgin edge
        // probability of 0.5 an n-hop route only outvalues staying put when
        // reward/|penalty| exceeds roughly (1/(0.5*gamma))^n, and a planner
        // that stays put reports no path. The 1e4 ratio keeps routes of up
        // to ~14 hops worth attempting.
        MdpParams {
            goal_reward: 1000.0,
            deadend_penalty: -0.1,
            discount: 0.95,
            vi_tolerance: 1e-6,
            vi_max_iters: 10_000,
        }
    }
}

impl MdpParams {
    pub fn validate(&self) -> Result<()> {
        if self.goal_reward <= 0.0 {
            return Err(Error::InvalidParameter(
                "goal_reward must be positive".to_string(),
            ));
        }
        if self.deadend_penalty >= 0.0 {
            return Err(Error::InvalidParameter(
                "deadend_penalty must be negative".to_string(),
            ));
        }
        if !(0.0 < self.discount && self.discount < 1.0) {
            return Err(Error::InvalidParameter(
                "discount must lie in (0, 1)".to_string(),
            ));
        }
        if self.vi_tolerance <= 0.0 || self.vi_max_iters == 0 {
            return Err(Error::InvalidParameter(
                "vi_tolerance must be positive and vi_max_iters >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// (s+, s-) for one node under the current counts.
pub fn compute_scores(map: &FoliatedRepMap, node: usize) -> (f64, f64) {
    let leaf = map.node_leaf(node);
    let j = map.node_component(node);
    let co_param_count = map
        .foliations()
        .foliation(leaf.foliation)
        .map(|f| f.co_params.len())
        .unwrap_or(0);
    let mut s_plus = 0.0;
    let mut s_minus = map.robot_invalid_count(j) as f64;
    for other in 0..co_param_count {
        let s = map.leaf_similarity(leaf, other);
        let sibling = map
            .node_id(crate::foliation::LeafId::new(leaf.foliation, other), j)
            .expect("sibling node exists");
        s_plus += s * map.valid_count(sibling) as f64;
        s_minus += s
            * (map.object_invalid_count(sibling) as f64
                + map.constraint_invalid_count(sibling) as f64);
    }
    (s_plus, s_minus)
}

/// Success probability of the edge between `m` and `n`: 0.5 when no evidence
/// exists, otherwise the count-ratio form.
pub fn edge_probability(map: &FoliatedRepMap, m: usize, n: usize) -> f64 {
    let (pm, mm) = compute_scores(map, m);
    let (pn, mn) = compute_scores(map, n);
    probability_from_scores(pm, mm, pn, mn)
}

fn probability_from_scores(sp_m: f64, sm_m: f64, sp_n: f64, sm_n: f64) -> f64 {
    let total = sp_m + sp_n + sm_m + sm_n;
    if total == 0.0 {
        0.5
    } else {
        (1.0 + sp_m + sp_n) / (1.0 + sp_m + sp_n + sm_m + sm_n)
    }
}

/// Value-iteration audit trail.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Sup-norm difference after each sweep.
    pub sup_norm_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MdpPlanner {
    pub params: MdpParams,
    pub use_experience: bool,
}

impl MdpPlanner {
    pub fn new(params: MdpParams) -> Self {
        MdpPlanner {
            params,
            use_experience: true,
        }
    }

    pub fn baseline(params: MdpParams) -> Self {
        MdpPlanner {
            params,
            use_experience: false,
        }
    }

    fn edge_probabilities(&self, map: &FoliatedRepMap) -> Vec<Vec<f64>> {
        let n = map.node_count();
        let scores: Vec<(f64, f64)> = if self.use_experience {
            (0..n).map(|v| compute_scores(map, v)).collect()
        } else {
            vec![(0.0, 0.0); n]
        };
        (0..n)
            .map(|u| {
                map.neighbors(u)
                    .iter()
                    .map(|&(v, _)| {
                        let (pm, mm) = scores[u];
                        let (pn, mn) = scores[v];
                        probability_from_scores(pm, mm, pn, mn)
                    })
                    .collect()
            })
            .collect()
    }

    /// Runs value iteration for a fixed goal and returns the audit trail.
    pub fn value_iteration(
        &self,
        map: &FoliatedRepMap,
        goal: usize,
    ) -> ValueIterationResult {
        let probs = self.edge_probabilities(map);
        self.value_iteration_inner(map, goal, &probs)
    }

    fn value_iteration_inner(
        &self,
        map: &FoliatedRepMap,
        goal: usize,
        probs: &[Vec<f64>],
    ) -> ValueIterationResult {
        let n = map.node_count();
        let p = &self.params;
        let mut values = vec![0.0f64; n];
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < p.vi_max_iters {
            sweeps += 1;
            let mut next = vec![0.0f64; n];
            for s in 0..n {
                if s == goal {
                    continue; // absorbing once entered
                }
                let neighbors = map.neighbors(s);
                if neighbors.is_empty() {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for (a, &(t, _)) in neighbors.iter().enumerate() {
                    let prob = probs[s][a];
                    let enter = if t == goal { p.goal_reward } else { 0.0 };
                    let cont = if t == goal { 0.0 } else { values[t] };
                    let q = prob * (enter + p.discount * cont)
                        + (1.0 - prob) * p.deadend_penalty;
                    if q > best {
                        best = q;
                    }
                }
                next[s] = best;
            }
            let diff = values
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            trace.push(diff);
            values = next;
            if diff < p.vi_tolerance {
                converged = true;
                break;
            }
        }
        ValueIterationResult {
            values,
            sweeps,
            converged,
            sup_norm_trace: trace,
        }
    }

    /// Greedy node sequence from `start` under the converged values. No-path
    /// when the greedy walk revisits a state or strands before the goal.
    pub fn plan(&self, map: &FoliatedRepMap, start: usize, goal: usize) -> Option<NodePath> {
        let n = map.node_count();
        if start >= n || goal >= n {
            return None;
        }
        if start == goal {
            return Some(NodePath {
                nodes: vec![start],
                edges: vec![],
            });
        }
        let probs = self.edge_probabilities(map);
        let vi = self.value_iteration_inner(map, goal, &probs);
        self.extract_greedy(map, start, goal, &vi.values, &probs)
    }

    /// Follows the greedy policy, assuming each chosen transition succeeds.
    /// Ties fall to the higher action value, then the lower node id (the
    /// adjacency order is already sorted by neighbor id).
    pub fn extract_greedy(
        &self,
        map: &FoliatedRepMap,
        start: usize,
        goal: usize,
        values: &[f64],
        probs: &[Vec<f64>],
    ) -> Option<NodePath> {
        let p = &self.params;
        let mut nodes = vec![start];
        let mut edges = Vec::new();
        let mut visited = vec![false; map.node_count()];
        visited[start] = true;
        let mut cur = start;
        while cur != goal {
            let neighbors = map.neighbors(cur);
            if neighbors.is_empty() {
                return None;
            }
            let mut best: Option<(f64, usize, EdgeRef)> = None;
            for (a, &(t, e)) in neighbors.iter().enumerate() {
                let prob = probs[cur][a];
                let enter = if t == goal { p.goal_reward } else { 0.0 };
                let cont = if t == goal { 0.0 } else { values[t] };
                let q = prob * (enter + p.discount * cont) + (1.0 - prob) * p.deadend_penalty;
                let take = match best {
                    None => true,
                    Some((bq, _, _)) => q > bq,
                };
                if take {
                    best = Some((q, t, e));
                }
            }
            let (_, t, e) = best?;
            if visited[t] {
                return None; // cycle: unreachable goal under the greedy policy
            }
            visited[t] = true;
            nodes.push(t);
            edges.push(e);
            cur = t;
        }
        Some(NodePath { nodes, edges })
    }
}
