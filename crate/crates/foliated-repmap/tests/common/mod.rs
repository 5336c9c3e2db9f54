//! Shared test oracles, independent of the library's planning paths:
//! a brute-force grid planner for leaf feasibility, exhaustive simple-path
//! enumeration for shortest-path checks, exact policy evaluation and full
//! policy enumeration for the value-iteration checks, and a generator of
//! small random roadmaps with organically ingested counts.

#![allow(dead_code)]

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use foliated_repmap::atlas::BaseRoadmap;
use foliated_repmap::env::{check_validity, Aabb, Environment, ValidityTag};
use foliated_repmap::foliation::{
    CoParameter, Configuration, ConstraintKind, Foliation, FoliationSet, IntersectionWitness,
    LeafId, ObjectPoseRule,
};
use foliated_repmap::gmm::GaussianComponent;
use foliated_repmap::mtg::{edge_weight, MtgParams};
use foliated_repmap::problem::Problem;
use foliated_repmap::repmap::{FoliatedRepMap, PlannerFeedback, Task};

/// Grid BFS on one leaf between two on-leaf configurations. The pinned axis
/// of an axis-offset leaf is frozen; the remaining coordinates are walked on
/// a uniform grid of the given resolution.
pub fn grid_path_exists(
    env: &Environment,
    foliations: &FoliationSet,
    leaf: LeafId,
    from: &Configuration,
    to: &Configuration,
    resolution: f64,
) -> bool {
    let dim = env.bounds.dim();
    let free_axes: Vec<usize> = match foliations
        .foliation(leaf.foliation)
        .map(|f| f.constraint.clone())
    {
        Ok(ConstraintKind::AxisOffset { axis }) => (0..dim).filter(|&d| d != axis).collect(),
        Ok(ConstraintKind::Free) => (0..dim).collect(),
        _ => return false,
    };
    let cells: Vec<usize> = free_axes
        .iter()
        .map(|&d| (env.bounds.extent(d) / resolution).ceil() as usize + 1)
        .collect();
    let total: usize = cells.iter().product();
    let to_cell = |q: &Configuration| -> Vec<usize> {
        free_axes
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                (((q.0[d] - env.bounds.min[d]) / resolution).round() as usize).min(cells[i] - 1)
            })
            .collect()
    };
    let to_config = |cell: &[usize]| -> Configuration {
        let mut coords = from.0.clone();
        for (i, &d) in free_axes.iter().enumerate() {
            coords[d] = env.bounds.min[d] + cell[i] as f64 * resolution;
        }
        coords
            .iter_mut()
            .zip(env.bounds.min.iter().zip(&env.bounds.max))
            .for_each(|(c, (lo, hi))| *c = c.clamp(*lo, *hi));
        Configuration(coords)
    };
    let index = |cell: &[usize]| -> usize {
        cell.iter()
            .zip(&cells)
            .fold(0usize, |acc, (c, n)| acc * n + c)
    };
    let valid = |cell: &[usize]| -> bool {
        check_validity(&to_config(cell), leaf, env, foliations) == ValidityTag::Valid
    };

    let start_cell = to_cell(from);
    let goal_cell = to_cell(to);
    if !valid(&start_cell) || !valid(&goal_cell) {
        return false;
    }
    let mut seen = vec![false; total];
    let mut queue = VecDeque::new();
    seen[index(&start_cell)] = true;
    queue.push_back(start_cell);
    while let Some(cell) = queue.pop_front() {
        if cell == goal_cell {
            return true;
        }
        for axis in 0..cell.len() {
            for delta in [-1isize, 1] {
                let mut next = cell.clone();
                let v = next[axis] as isize + delta;
                if v < 0 || v as usize >= cells[axis] {
                    continue;
                }
                next[axis] = v as usize;
                let idx = index(&next);
                if !seen[idx] && valid(&next) {
                    seen[idx] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    false
}

/// Brute-force multi-leaf feasibility: breadth-first over (leaf, entry
/// configuration) states, moving through witnesses whose approach is
/// grid-feasible on the current leaf.
pub fn problem_feasible(problem: &Problem, resolution: f64) -> bool {
    let env = &problem.environment;
    let fols = &problem.foliations;
    let mut states: VecDeque<(LeafId, Configuration)> = VecDeque::new();
    let mut visited: Vec<(LeafId, usize)> = Vec::new();
    states.push_back((problem.start.leaf, problem.start.config.clone()));
    while let Some((leaf, config)) = states.pop_front() {
        if leaf == problem.goal.leaf
            && grid_path_exists(env, fols, leaf, &config, &problem.goal.config, resolution)
        {
            return true;
        }
        for (w_idx, w) in problem.witnesses.iter().enumerate() {
            let other = if w.leaf_a == leaf {
                Some(w.leaf_b)
            } else if w.leaf_b == leaf {
                Some(w.leaf_a)
            } else {
                None
            };
            let Some(other) = other else { continue };
            if visited.contains(&(other, w_idx)) {
                continue;
            }
            if grid_path_exists(env, fols, leaf, &config, &w.config, resolution) {
                visited.push((other, w_idx));
                states.push_back((other, w.config.clone()));
            }
        }
    }
    false
}

/// Exhaustive minimum path weight over all simple paths, folding edge
/// weights in path order exactly as the planner accumulates them.
pub fn exhaustive_min_weight(
    map: &FoliatedRepMap,
    start: usize,
    goal: usize,
    params: &MtgParams,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut on_path = vec![false; map.node_count()];
    on_path[start] = true;
    fn dfs(
        map: &FoliatedRepMap,
        params: &MtgParams,
        node: usize,
        goal: usize,
        acc: f64,
        on_path: &mut Vec<bool>,
        best: &mut Option<f64>,
    ) {
        if node == goal {
            *best = Some(match *best {
                None => acc,
                Some(b) => b.min(acc),
            });
            return;
        }
        for &(next, _) in map.neighbors(node) {
            if on_path[next] {
                continue;
            }
            on_path[next] = true;
            let w = acc + edge_weight(map, node, next, params);
            dfs(map, params, next, goal, w, on_path, best);
            on_path[next] = false;
        }
    }
    dfs(map, params, start, goal, 0.0, &mut on_path, &mut best);
    best
}

/// Exact value of a deterministic stationary policy at every state, by
/// solving (I - gamma P_pi) V = r_pi with dead-end and goal semantics
/// matching the planner's MDP.
pub fn evaluate_policy_exact(
    map: &FoliatedRepMap,
    policy: &[usize],
    goal: usize,
    goal_reward: f64,
    deadend_penalty: f64,
    gamma: f64,
    probs: &dyn Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let n = map.node_count();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        if s == goal || map.neighbors(s).is_empty() {
            continue; // absorbing or actionless: V = 0
        }
        let (t, _) = map.neighbors(s)[policy[s]];
        let p = probs(s, t);
        let enter = if t == goal { goal_reward } else { 0.0 };
        b[s] = p * enter + (1.0 - p) * deadend_penalty;
        if t != goal {
            a[(s, t)] -= p * gamma;
        }
    }
    let lu = a.lu();
    let v = lu.solve(&b).expect("policy evaluation system is regular");
    v.iter().cloned().collect()
}

/// Best deterministic stationary policy value at `start` by full enumeration.
pub fn best_policy_value_exhaustive(
    map: &FoliatedRepMap,
    start: usize,
    goal: usize,
    goal_reward: f64,
    deadend_penalty: f64,
    gamma: f64,
    probs: &dyn Fn(usize, usize) -> f64,
) -> f64 {
    let n = map.node_count();
    let degrees: Vec<usize> = (0..n).map(|s| map.neighbors(s).len().max(1)).collect();
    let mut policy = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        let v = evaluate_policy_exact(
            map,
            &policy,
            goal,
            goal_reward,
            deadend_penalty,
            gamma,
            probs,
        );
        if v[start] > best {
            best = v[start];
        }
        // Odometer increment over the policy space.
        let mut s = 0;
        loop {
            if s == n {
                return best;
            }
            policy[s] += 1;
            if policy[s] < degrees[s] {
                break;
            }
            policy[s] = 0;
            s += 1;
        }
    }
}

/// A small random stitched roadmap plus counts ingested through the public
/// feedback path, for the randomized planner-vs-oracle checks. Components sit
/// on a well-separated grid so a sample at a component's mean assigns to it.
pub fn random_small_map(rng: &mut ChaCha12Rng, max_nodes: usize) -> FoliatedRepMap {
    let leaves_per_fol = if max_nodes >= 8 && rng.random::<bool>() {
        2
    } else {
        1
    };
    let n_comps = rng.random_range(2..=(max_nodes / (leaves_per_fol + 1)).max(2));
    let comps: Vec<GaussianComponent> = (0..n_comps)
        .map(|id| GaussianComponent {
            id,
            weight: 1.0 / n_comps as f64,
            mean: DVector::from_column_slice(&[id as f64 * 3.0, 0.5]),
            covariance: DMatrix::identity(2, 2) * 0.04,
        })
        .collect();
    // A random connected graph: a spanning path plus random chords.
    let mut edges: Vec<(usize, usize)> = (1..n_comps).map(|i| (i - 1, i)).collect();
    for a in 0..n_comps {
        for b in (a + 2)..n_comps {
            if rng.random::<f64>() < 0.3 {
                edges.push((a, b));
            }
        }
    }
    // The vertical leaf sits at a random component's column; every witness
    // lies on that column at its height leaf's y.
    let vert_x = rng.random_range(0..n_comps) as f64 * 3.0;
    let heights = Foliation {
        id: 0,
        name: "heights".to_string(),
        constraint: ConstraintKind::AxisOffset { axis: 1 },
        co_params: (0..leaves_per_fol)
            .map(|k| CoParameter::new(format!("h{k}"), vec![k as f64]))
            .collect(),
        epsilon: 1e-6,
        sigma_sim: Some(1.5),
        object_pose: ObjectPoseRule::None,
    };
    let vertical = Foliation {
        id: 1,
        name: "vertical".to_string(),
        constraint: ConstraintKind::AxisOffset { axis: 0 },
        co_params: vec![CoParameter::new("v0", vec![vert_x])],
        epsilon: 1e-6,
        sigma_sim: Some(1.5),
        object_pose: ObjectPoseRule::None,
    };
    let fols = FoliationSet::new(vec![heights, vertical], 2).unwrap();
    let witnesses: Vec<IntersectionWitness> = (0..leaves_per_fol)
        .map(|k| IntersectionWitness {
            leaf_a: LeafId::new(0, k),
            leaf_b: LeafId::new(1, 0),
            config: Configuration(vec![vert_x, k as f64]),
        })
        .collect();
    let bounds = Aabb::new(
        vec![-2.0, -2.0],
        vec![3.0 * n_comps as f64 + 2.0, leaves_per_fol as f64 + 2.0],
    )
    .unwrap();
    let roadmap = BaseRoadmap {
        components: comps,
        edges,
    };
    let mut map = FoliatedRepMap::new(roadmap, fols, witnesses, &bounds).unwrap();

    // Organic counts: tagged samples at component means through ingest.
    let total_leaves = leaves_per_fol + 1;
    let n_samples = rng.random_range(0..60);
    for _ in 0..n_samples {
        let leaf = if rng.random_range(0..total_leaves) < leaves_per_fol {
            LeafId::new(0, rng.random_range(0..leaves_per_fol))
        } else {
            LeafId::new(1, 0)
        };
        let j = rng.random_range(0..n_comps);
        let tag = match rng.random_range(0..4) {
            0 => ValidityTag::Valid,
            1 => ValidityTag::RobotInvalid,
            2 => ValidityTag::ObjectInvalid,
            _ => ValidityTag::ConstraintInvalid,
        };
        let task = Task {
            leaf,
            start: Configuration(vec![0.0, 0.0]),
            goal: Configuration(vec![1.0, 0.0]),
            distributions: vec![],
        };
        let fb = PlannerFeedback {
            success: false,
            samples: vec![(Configuration(vec![j as f64 * 3.0, 0.5]), tag)],
            path: None,
            path_length: 0.0,
        };
        map.ingest_feedback(&task, &fb).unwrap();
    }
    map
}

/// Fresh deterministic rng for a named test.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
