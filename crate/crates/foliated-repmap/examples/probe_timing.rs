use foliated_repmap::bench::make_benchmark;
use foliated_repmap::harness::{AtlasParams, Budgets};
use foliated_repmap::gmm::ClusteringConfig;
use foliated_repmap::atlas::build_atlas;
use foliated_repmap::env::{Aabb, Environment};
use foliated_repmap::problem::Category;
use foliated_repmap::repmap::FoliatedRepMap;
use foliated_repmap::mtg::{MtgPlanner, MtgParams};
use foliated_repmap::mdp::{MdpPlanner, MdpParams};
use std::time::Instant;

fn main() {
    let ap = AtlasParams::default();
    let free = Environment {
        bounds: Aabb::new(vec![0.0;3], vec![10.0;3]).unwrap(),
        robot_radius: 0.15, object_radius: 0.3,
        robot_obstacles: vec![], object_obstacles: vec![],
    };
    let budgets = Budgets::default();
    let clustering = ClusteringConfig { k_min: ap.k_min, k_max: ap.k_max, ..Default::default() };
    let (roadmap, fit) = build_atlas(&free, ap.n_pairs, &budgets.motion, &clustering, ap.tau_edge, 0 ^ 0xA71A5A).unwrap();
    println!("atlas k={} retained={} edges={}", fit.selected.k, roadmap.node_count(), roadmap.edge_count());
    let problem = make_benchmark(Category::Simple, 0).unwrap();
    let map = FoliatedRepMap::new(roadmap, problem.foliations.clone(), problem.witnesses.clone(), &problem.environment.bounds).unwrap();
    println!("map nodes={} intra={} inter={}", map.node_count(), map.intra_edge_count(), map.intersection_edge_count());
    let (s, g) = map.attach_start_goal(&problem.start.config, problem.start.leaf, &problem.goal.config, problem.goal.leaf).unwrap();
    let mtg = MtgPlanner::new(MtgParams::default());
    let mdp = MdpPlanner::new(MdpParams::default());
    let n = 200;
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(mtg.plan(&map, s, g)); }
    let t_mtg = t0.elapsed().as_secs_f64() / n as f64;
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(mdp.plan(&map, s, g)); }
    let t_mdp = t0.elapsed().as_secs_f64() / n as f64;
    let vi = mdp.value_iteration(&map, g);
    println!("virgin map: mtg {:.1} us, mdp {:.1} us (vi sweeps {})", t_mtg*1e6, t_mdp*1e6, vi.sweeps);
}
