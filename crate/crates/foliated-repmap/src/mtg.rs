//! Weighted shortest-path task planning.
//!
//! Each node's score folds the experience counts of its distribution across
//! every co-parameter of its foliation, scaled by co-parameter similarity:
//! valid samples cost a small penalty, collisions and constraint violations a
//! large one, and the shared robot-collision count of the distribution is
//! added on top. An edge weighs the sum of its endpoint scores, and Dijkstra
//! extracts the cheapest node sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repmap::{EdgeRef, FoliatedRepMap, NodePath};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MtgParams {
    /// Small penalty applied per valid sample.
    pub v_minus: f64,
    /// Large penalty applied per invalid sample.
    pub v_plus: f64,
}

impl Default for MtgParams {
    fn default() -> Self {
        MtgParams {
            v_minus: 1.0,
            v_plus: 50.0,
        }
    }
}

impl MtgParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.v_minus && self.v_minus < self.v_plus) {
            return Err(Error::InvalidParameter(
                "require 0 < v_minus < v_plus".to_string(),
            ));
        }
        Ok(())
    }
}

/// Per-node difficulty score from the current counts.
pub fn compute_node_score(map: &FoliatedRepMap, node: usize, params: &MtgParams) -> f64 {
    let leaf = map.node_leaf(node);
    let j = map.node_component(node);
    let co_param_count = map
        .foliations()
        .foliation(leaf.foliation)
        .map(|f| f.co_params.len())
        .unwrap_or(0);
    let mut score = map.robot_invalid_count(j) as f64 * params.v_plus;
    for other in 0..co_param_count {
        let s = map.leaf_similarity(leaf, other);
        let sibling = map
            .node_id(
                crate::foliation::LeafId::new(leaf.foliation, other),
                j,
            )
            .expect("sibling node exists");
        score += s
            * (params.v_minus * map.valid_count(sibling) as f64
                + params.v_plus
                    * (map.object_invalid_count(sibling) as f64
                        + map.constraint_invalid_count(sibling) as f64));
    }
    score
}

/// Sum of the endpoint scores.
pub fn edge_weight(map: &FoliatedRepMap, m: usize, n: usize, params: &MtgParams) -> f64 {
    compute_node_score(map, m, params) + compute_node_score(map, n, params)
}

/// The planner. With `use_experience` off it never reads the counts and every
/// edge weighs zero, which reduces Dijkstra to hop-count search with the
/// deterministic tie rules.
#[derive(Debug, Clone)]
pub struct MtgPlanner {
    pub params: MtgParams,
    pub use_experience: bool,
}

impl MtgPlanner {
    pub fn new(params: MtgParams) -> Self {
        MtgPlanner {
            params,
            use_experience: true,
        }
    }

    pub fn baseline(params: MtgParams) -> Self {
        MtgPlanner {
            params,
            use_experience: false,
        }
    }

    /// Minimal-total-weight path from `start` to `goal`; ties fall to fewer
    /// edges, then to the lexicographically smallest node-id sequence.
    /// Returns `None` when the goal is unreachable.
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
        let scores: Vec<f64> = if self.use_experience {
            (0..n)
                .map(|v| compute_node_score(map, v, &self.params))
                .collect()
        } else {
            vec![0.0; n]
        };

        // dist = (weight, hops); pred picks the parent and edge used.
        let mut dist: Vec<Option<(f64, usize)>> = vec![None; n];
        let mut pred: Vec<Option<(usize, EdgeRef)>> = vec![None; n];
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
        // Scratch buffers for tie comparisons; zero-weight maps tie a lot.
        let mut chain_a: Vec<usize> = Vec::new();
        let mut chain_b: Vec<usize> = Vec::new();
        dist[start] = Some((0.0, 0));
        heap.push(HeapEntry {
            weight: 0.0,
            hops: 0,
            node: start,
        });
        while let Some(entry) = heap.pop() {
            let u = entry.node;
            let Some((du, hu)) = dist[u] else { continue };
            if entry.weight > du || (entry.weight == du && entry.hops > hu) {
                continue; // stale
            }
            for &(v, edge) in map.neighbors(u) {
                let w = du + scores[u] + scores[v];
                let h = hu + 1;
                let better = match dist[v] {
                    None => true,
                    Some((dv, hv)) => {
                        if w < dv || (w == dv && h < hv) {
                            true
                        } else if w == dv && h == hv {
                            // Exact tie: both candidate paths end in v with
                            // the same hop count, so compare the parent
                            // chains elementwise.
                            let (pv, _) = pred[v].expect("tied node has a parent");
                            if u == pv {
                                false
                            } else {
                                fill_chain(&pred, u, start, &mut chain_a);
                                fill_chain(&pred, pv, start, &mut chain_b);
                                lex_less(&chain_a, &chain_b)
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    dist[v] = Some((w, h));
                    pred[v] = Some((u, edge));
                    heap.push(HeapEntry {
                        weight: w,
                        hops: h,
                        node: v,
                    });
                }
            }
        }
        dist[goal]?;
        let mut nodes = vec![goal];
        let mut edges = Vec::new();
        let mut cur = goal;
        while cur != start {
            let (p, e) = pred[cur].expect("path reconstructs to start");
            edges.push(e);
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        edges.reverse();
        Some(NodePath { nodes, edges })
    }
}

/// Total weight of a path under the current counts, folding edges in path
/// order (matches the planner's accumulation order exactly).
pub fn path_weight(map: &FoliatedRepMap, path: &NodePath, params: &MtgParams) -> f64 {
    let mut total = 0.0;
    for w in path.nodes.windows(2) {
        total += edge_weight(map, w[0], w[1], params);
    }
    total
}

fn fill_chain(
    pred: &[Option<(usize, EdgeRef)>],
    mut node: usize,
    start: usize,
    out: &mut Vec<usize>,
) {
    out.clear();
    out.push(node);
    while node != start {
        let (p, _) = pred[node].expect("chain reaches start");
        out.push(p);
        node = p;
    }
    out.reverse();
}

/// Strict lexicographic comparison of equal-length node sequences.
fn lex_less(a: &[usize], b: &[usize]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    false
}

#[derive(PartialEq)]
struct HeapEntry {
    weight: f64,
    hops: usize,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap over (weight, hops, node).
        other
            .weight
            .partial_cmp(&self.weight)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ValidityTag;
    use crate::foliation::{Configuration, LeafId};
    use crate::repmap::{PlannerFeedback, Task};

    use crate::repmap::tests::fixture;

    fn feed(
        map: &mut FoliatedRepMap,
        leaf: LeafId,
        component_x: f64,
        leaf_y: f64,
        tag: ValidityTag,
        times: usize,
    ) {
        let task = Task {
            leaf,
            start: Configuration(vec![0.0, leaf_y]),
            goal: Configuration(vec![4.0, leaf_y]),
            distributions: vec![],
        };
        let fb = PlannerFeedback {
            success: false,
            samples: vec![(Configuration(vec![component_x, leaf_y]), tag); times],
            path: None,
            path_length: 0.0,
        };
        map.ingest_feedback(&task, &fb).unwrap();
    }

    #[test]
    fn zero_counts_zero_scores() {
        let (map, _, _) = fixture();
        let params = MtgParams::default();
        for node in 0..map.node_count() {
            assert_eq!(compute_node_score(&map, node, &params), 0.0);
        }
    }

    #[test]
    fn score_formula_direct_evaluation() {
        // Single-co-param foliation (S = 1): v+ = 10, v- = 1,
        // C_robot = 2, C_valid = 3, C_obj = 1, C_const = 0 -> 2*10 + (3 + 10) = 33.
        let (mut map, _, _) = fixture();
        let leaf = LeafId::new(1, 0); // the single-leaf vertical foliation
        let params = MtgParams {
            v_minus: 1.0,
            v_plus: 10.0,
        };
        // Samples at x=2 on the vertical leaf: all assign to component 2.
        feed(&mut map, leaf, 2.0, 0.5, ValidityTag::RobotInvalid, 2);
        feed(&mut map, leaf, 2.0, 0.5, ValidityTag::Valid, 3);
        feed(&mut map, leaf, 2.0, 0.5, ValidityTag::ObjectInvalid, 1);
        let node = map.node_id(leaf, 2).unwrap();
        assert_eq!(compute_node_score(&map, node, &params), 33.0);
        // Edge weight: 33 + neighbor score. Neighbor (leaf, comp 1) carries
        // only the shared robot count contribution? No: robot counts are per
        // distribution, so component 1 has none; its score is 0 plus nothing.
        let neighbor = map.node_id(leaf, 1).unwrap();
        assert_eq!(compute_node_score(&map, neighbor, &params), 0.0);
        assert_eq!(edge_weight(&map, node, neighbor, &params), 33.0);
        assert_eq!(
            edge_weight(&map, node, neighbor, &params),
            edge_weight(&map, neighbor, node, &params)
        );
    }

    #[test]
    fn cross_leaf_similarity_propagation() {
        // Two co-params with similarity exp(-1) scaled fixture? The fixture's
        // heights foliation has sigma 1 and distance 1 -> S = e^-1. Use a
        // dedicated check: C_valid = 4 on theta', v- = 1 -> score on theta is
        // S * 4.
        let (mut map, _, _) = fixture();
        let params = MtgParams {
            v_minus: 1.0,
            v_plus: 10.0,
        };
        feed(
            &mut map,
            LeafId::new(0, 1),
            3.0,
            1.0,
            ValidityTag::Valid,
            4,
        );
        let s = map.leaf_similarity(LeafId::new(0, 0), 1);
        let node = map.node_id(LeafId::new(0, 0), 3).unwrap();
        let got = compute_node_score(&map, node, &params);
        assert!((got - s * 4.0).abs() < 1e-12);
        // And on the observed leaf itself the full count applies (S = 1).
        let own = map.node_id(LeafId::new(0, 1), 3).unwrap();
        assert_eq!(compute_node_score(&map, own, &params), 4.0);
    }

    #[test]
    fn start_equals_goal_single_node() {
        let (map, _, _) = fixture();
        let planner = MtgPlanner::new(MtgParams::default());
        let s = map.node_id(LeafId::new(0, 0), 0).unwrap();
        let path = planner.plan(&map, s, s).unwrap();
        assert_eq!(path.nodes, vec![s]);
        assert!(path.edges.is_empty());
        assert_eq!(path_weight(&map, &path, &planner.params), 0.0);
    }

    #[test]
    fn zero_weight_tie_prefers_fewer_edges() {
        let (map, _, _) = fixture();
        // From (0,0,c0) to (0,1,c4): shortcut edges give a 4-hop route
        // (c0-c2, two witness hops at c2, c2-c4) among zero weights.
        let s = map.node_id(LeafId::new(0, 0), 0).unwrap();
        let g = map.node_id(LeafId::new(0, 1), 4).unwrap();
        let planner = MtgPlanner::new(MtgParams::default());
        let p1 = planner.plan(&map, s, g).unwrap();
        let p2 = planner.plan(&map, s, g).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.edges.len(), 4);
    }

    /// One leaf, four routes from c0 to c3: two 2-hop routes (via c1 or c2)
    /// and one 3-hop route (via c4, c5).
    fn diamond_map() -> FoliatedRepMap {
        use crate::atlas::BaseRoadmap;
        use crate::env::Aabb;
        use crate::foliation::{CoParameter, ConstraintKind, Foliation, FoliationSet,
            ObjectPoseRule};
        use crate::gmm::GaussianComponent;
        use nalgebra::{DMatrix, DVector};
        let positions = [
            [0.0, 0.0],
            [1.0, 1.5],
            [1.0, -1.5],
            [2.0, 0.0],
            [0.0, 3.0],
            [2.0, 3.0],
        ];
        let comps = positions
            .iter()
            .enumerate()
            .map(|(id, p)| GaussianComponent {
                id,
                weight: 1.0 / 6.0,
                mean: DVector::from_column_slice(p),
                covariance: DMatrix::identity(2, 2) * 0.04,
            })
            .collect();
        let roadmap = BaseRoadmap {
            components: comps,
            edges: vec![(0, 1), (1, 3), (0, 2), (2, 3), (0, 4), (4, 5), (3, 5)],
        };
        let f = Foliation {
            id: 0,
            name: "free".to_string(),
            constraint: ConstraintKind::Free,
            co_params: vec![CoParameter::new("only", vec![0.0])],
            epsilon: 1e-6,
            sigma_sim: Some(1.0),
            object_pose: ObjectPoseRule::None,
        };
        let fols = FoliationSet::new(vec![f], 2).unwrap();
        let bounds = Aabb::new(vec![-2.0, -4.0], vec![4.0, 5.0]).unwrap();
        FoliatedRepMap::new(roadmap, fols, vec![], &bounds).unwrap()
    }

    #[test]
    fn virgin_tie_breaks_to_fewer_edges_then_lex() {
        let map = diamond_map();
        let planner = MtgPlanner::new(MtgParams::default());
        let path = planner.plan(&map, 0, 3).unwrap();
        // 2-hop routes beat the 3-hop one; among the tied 2-hop routes the
        // node sequence [0,1,3] is lexicographically smaller than [0,2,3].
        assert_eq!(path.nodes, vec![0, 1, 3]);
    }

    #[test]
    fn penalized_node_redirects_route() {
        let mut map = diamond_map();
        let planner = MtgPlanner::new(MtgParams::default());
        let leaf = LeafId::new(0, 0);
        // Poison component 1: the tied alternative through c2 takes over.
        feed(&mut map, leaf, 1.0, 1.5, ValidityTag::ObjectInvalid, 5);
        let path = planner.plan(&map, 0, 3).unwrap();
        assert_eq!(path.nodes, vec![0, 2, 3]);
        // Poison c2 as well: the longer zero-weight route via c4, c5 wins.
        feed(&mut map, leaf, 1.0, -1.5, ValidityTag::ObjectInvalid, 5);
        let path = planner.plan(&map, 0, 3).unwrap();
        assert_eq!(path.nodes, vec![0, 4, 5, 3]);
    }

    #[test]
    fn baseline_ignores_counts() {
        let (mut map, _, _) = fixture();
        let s = map.node_id(LeafId::new(0, 0), 0).unwrap();
        let g = map.node_id(LeafId::new(0, 0), 4).unwrap();
        let baseline = MtgPlanner::baseline(MtgParams::default());
        let before = baseline.plan(&map, s, g).unwrap();
        feed(
            &mut map,
            LeafId::new(0, 0),
            2.0,
            0.0,
            ValidityTag::ObjectInvalid,
            500,
        );
        let after = baseline.plan(&map, s, g).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn monotone_discouragement() {
        let (mut map, _, _) = fixture();
        let params = MtgParams::default();
        let planner = MtgPlanner::new(params);
        let s = map.node_id(LeafId::new(0, 0), 0).unwrap();
        let g = map.node_id(LeafId::new(0, 1), 4).unwrap();
        let before = path_weight(&map, &planner.plan(&map, s, g).unwrap(), &params);
        feed(
            &mut map,
            LeafId::new(0, 0),
            1.0,
            0.0,
            ValidityTag::ObjectInvalid,
            3,
        );
        // Optimal weight never decreases when counts only increase.
        let after = path_weight(&map, &planner.plan(&map, s, g).unwrap(), &params);
        assert!(after >= before);
    }
}
