//! Benchmark problem generators for the three foliated-structure categories.
//!
//! All categories live in a 10x10x10 box. Grasp foliations are z-planes (the
//! hand slides at a grasp-dependent height, carrying the object at a
//! grasp-dependent x/y offset); placement foliations are x-planes (re-grasp
//! stations where the hand may move vertically). Robot obstacles are
//! full-height pillars, so robot collisions are leaf-independent exactly as
//! the shared per-distribution count assumes; object obstacles are z-slabs
//! that block a grasp-dependent subset of slide planes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::env::{check_validity, Aabb, ConvexShape, Environment, ValidityTag};
use crate::error::{Error, Result};
use crate::foliation::{
    CoParameter, Configuration, ConstraintKind, Foliation, FoliationSet, IntersectionWitness,
    LeafId, ObjectPoseRule,
};
use crate::problem::{Category, Endpoint, Problem};

pub const SIDE: f64 = 10.0;
pub const ROBOT_RADIUS: f64 = 0.15;
pub const OBJECT_RADIUS: f64 = 0.3;

/// Half-thickness of a blocking slab in z.
const SLAB_HALF: f64 = 0.4;
/// Keep slabs this far from station planes so witnesses stay valid.
const STATION_MARGIN: f64 = 0.75;

/// Deterministic benchmark generator with the default obstacle density.
pub fn make_benchmark(category: Category, seed: u64) -> Result<Problem> {
    make_benchmark_with(category, seed, 1.0)
}

/// `density` scales blocking probabilities and obstacle counts; the paper's
/// obstacle difficulty is not parameterized, so this knob stands in for it.
pub fn make_benchmark_with(category: Category, seed: u64, density: f64) -> Result<Problem> {
    if !(0.0..=2.0).contains(&density) {
        return Err(Error::InvalidParameter(
            "obstacle density must lie in [0, 2]".to_string(),
        ));
    }
    match category {
        Category::Simple => simple(seed),
        Category::Sequential => sequential(seed, density),
        Category::Crossing => crossing(seed, density),
    }
}

fn salt(category: Category) -> u64 {
    match category {
        Category::Simple => 0x51_4D_50,
        Category::Sequential => 0x53_45_51,
        Category::Crossing => 0x43_52_53,
    }
}

fn bounds() -> Aabb {
    Aabb::new(vec![0.0; 3], vec![SIDE; 3]).unwrap()
}

fn grasp_foliation(
    id: usize,
    name: &str,
    heights: &[f64],
    rng: &mut ChaCha12Rng,
) -> Foliation {
    let co_params = heights
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let ox = rng.random_range(-0.35..0.35);
            let oy = rng.random_range(-0.35..0.35);
            CoParameter::new(format!("grasp-{}-{}", id, k), vec![z, ox, oy, 0.0])
        })
        .collect();
    Foliation {
        id,
        name: name.to_string(),
        constraint: ConstraintKind::AxisOffset { axis: 2 },
        co_params,
        epsilon: 1e-6,
        sigma_sim: None,
        object_pose: ObjectPoseRule::Attached { offset_start: 1 },
    }
}

fn placement_foliation(id: usize, name: &str, xs: &[f64]) -> Foliation {
    let co_params = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| CoParameter::new(format!("place-{}-{}", id, k), vec![x]))
        .collect();
    Foliation {
        id,
        name: name.to_string(),
        constraint: ConstraintKind::AxisOffset { axis: 0 },
        co_params,
        epsilon: 1e-6,
        sigma_sim: None,
        object_pose: ObjectPoseRule::None,
    }
}

/// Samples a y so the witness at (x, y, z) is valid on both of its leaves.
fn witness_at(
    x: f64,
    z: f64,
    leaf_a: LeafId,
    leaf_b: LeafId,
    env: &Environment,
    foliations: &FoliationSet,
    rng: &mut ChaCha12Rng,
) -> Result<IntersectionWitness> {
    for _ in 0..500 {
        let y = rng.random_range(0.8..SIDE - 0.8);
        let config = Configuration(vec![x, y, z]);
        if check_validity(&config, leaf_a, env, foliations) == ValidityTag::Valid
            && check_validity(&config, leaf_b, env, foliations) == ValidityTag::Valid
        {
            return Ok(IntersectionWitness {
                leaf_a,
                leaf_b,
                config,
            });
        }
    }
    Err(Error::InvalidProblem(format!(
        "no valid witness found at x={:.2}, z={:.2}",
        x, z
    )))
}

/// Samples a valid endpoint configuration on a placement plane.
fn placement_endpoint(
    x: f64,
    leaf: LeafId,
    env: &Environment,
    foliations: &FoliationSet,
    rng: &mut ChaCha12Rng,
) -> Result<Endpoint> {
    for _ in 0..500 {
        let y = rng.random_range(1.0..SIDE - 1.0);
        let z = rng.random_range(1.0..SIDE - 1.0);
        let config = Configuration(vec![x, y, z]);
        if check_validity(&config, leaf, env, foliations) == ValidityTag::Valid {
            return Ok(Endpoint { leaf, config });
        }
    }
    Err(Error::InvalidProblem(format!(
        "no valid endpoint found on x={:.2}",
        x
    )))
}

/// A full-height pillar rising from y = 0, for leaf-independent robot
/// collisions. Anchoring every pillar and partial wall at the bottom keeps a
/// shared top band open, so partially obstructed planes stay traversable.
fn pillar(x_lo: f64, x_hi: f64, y_reach: f64) -> ConvexShape {
    ConvexShape::Box {
        min: vec![x_lo, 0.0, 0.0],
        max: vec![x_hi, y_reach, SIDE],
    }
}

/// A z-slab over an x-span for the object set. Full y seals the plane (a
/// blocked grasp), partial y forces a detour.
fn slab(x_lo: f64, x_hi: f64, z: f64, y_range: (f64, f64)) -> ConvexShape {
    ConvexShape::Box {
        min: vec![x_lo, y_range.0, z - SLAB_HALF],
        max: vec![x_hi, y_range.1, z + SLAB_HALF],
    }
}

/// Simple structure: grasps x placements, one transit each, no obstacles.
/// Every planner variant should solve this; it is the timing baseline.
fn simple(seed: u64) -> Result<Problem> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ salt(Category::Simple));
    let heights: Vec<f64> = (0..10)
        .map(|k| 1.5 + 7.0 * k as f64 / 9.0 + rng.random_range(-0.2..0.2))
        .collect();
    let grasps = grasp_foliation(0, "slide-grasps", &heights, &mut rng);
    let placements = placement_foliation(1, "placements", &[1.0, 9.0]);
    let foliations = FoliationSet::new(vec![grasps, placements], 3)?;
    let env = Environment {
        bounds: bounds(),
        robot_radius: ROBOT_RADIUS,
        object_radius: OBJECT_RADIUS,
        robot_obstacles: vec![],
        object_obstacles: vec![],
    };
    let mut witnesses = Vec::new();
    for (p, &x) in [1.0, 9.0].iter().enumerate() {
        for (k, &z) in heights.iter().enumerate() {
            witnesses.push(witness_at(
                x,
                z,
                LeafId::new(0, k),
                LeafId::new(1, p),
                &env,
                &foliations,
                &mut rng,
            )?);
        }
    }
    let start = placement_endpoint(1.0, LeafId::new(1, 0), &env, &foliations, &mut rng)?;
    let goal = placement_endpoint(9.0, LeafId::new(1, 1), &env, &foliations, &mut rng)?;
    Problem::new(
        format!("simple-{}", seed),
        Some(Category::Simple),
        env,
        foliations,
        witnesses,
        start,
        goal,
    )
}

/// Sequential structure: drag grasps -> one re-grasp station -> deliver
/// grasps -> goal placement. A random strict subset of the deliver grasps is
/// sealed between the station and the goal, so the deliver-leaf choice is
/// what experience must get right; one deliver leaf always stays clear.
fn sequential(seed: u64, density: f64) -> Result<Problem> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ salt(Category::Sequential));
    let drag_heights: Vec<f64> = (0..3)
        .map(|k| 1.2 + k as f64 + rng.random_range(-0.15..0.15))
        .collect();
    let deliver_heights: Vec<f64> = (0..3)
        .map(|k| 6.6 + k as f64 + rng.random_range(-0.15..0.15))
        .collect();
    let x_mid = 5.0 + rng.random_range(-0.5..0.5);

    let drag = grasp_foliation(0, "drag-grasps", &drag_heights, &mut rng);
    let station = placement_foliation(1, "regrasp-station", &[x_mid]);
    let deliver = grasp_foliation(2, "deliver-grasps", &deliver_heights, &mut rng);
    let goal_place = placement_foliation(3, "goal-placement", &[9.0]);
    let foliations = FoliationSet::new(vec![drag, station, deliver, goal_place], 3)?;

    // One deliver leaf is planted clear; the others seal with probability
    // scaled by density.
    let clear = rng.random_range(0..deliver_heights.len());
    let mut object_obstacles = Vec::new();
    for (k, &z) in deliver_heights.iter().enumerate() {
        if k != clear && rng.random::<f64>() < (0.6 * density).min(0.95) {
            object_obstacles.push(slab(x_mid + STATION_MARGIN, 8.4, z, (0.0, SIDE)));
        }
    }
    let mut robot_obstacles = Vec::new();
    if density > 0.0 {
        let x1 = 3.0 + rng.random_range(-0.3..0.3);
        robot_obstacles.push(pillar(x1, x1 + 0.5, 6.0));
        let x2 = 7.0 + rng.random_range(-0.3..0.3);
        robot_obstacles.push(pillar(x2, x2 + 0.5, 6.0));
    }
    let env = Environment {
        bounds: bounds(),
        robot_radius: ROBOT_RADIUS,
        object_radius: OBJECT_RADIUS,
        robot_obstacles,
        object_obstacles,
    };

    let mut witnesses = Vec::new();
    for (k, &z) in drag_heights.iter().enumerate() {
        witnesses.push(witness_at(
            x_mid,
            z,
            LeafId::new(0, k),
            LeafId::new(1, 0),
            &env,
            &foliations,
            &mut rng,
        )?);
    }
    for (k, &z) in deliver_heights.iter().enumerate() {
        witnesses.push(witness_at(
            x_mid,
            z,
            LeafId::new(1, 0),
            LeafId::new(2, k),
            &env,
            &foliations,
            &mut rng,
        )?);
        witnesses.push(witness_at(
            9.0,
            z,
            LeafId::new(2, k),
            LeafId::new(3, 0),
            &env,
            &foliations,
            &mut rng,
        )?);
    }

    // Start mid-drag on a random drag leaf; that leaf's slide toward the
    // station is kept clear by construction (drag planes carry no slabs).
    let start_leaf = LeafId::new(0, rng.random_range(0..drag_heights.len()));
    let start = {
        let z = foliations.co_param(start_leaf)?.value[0];
        let mut ep = None;
        for _ in 0..500 {
            let y = rng.random_range(1.0..SIDE - 1.0);
            let config = Configuration(vec![1.0, y, z]);
            if check_validity(&config, start_leaf, &env, &foliations) == ValidityTag::Valid {
                ep = Some(Endpoint {
                    leaf: start_leaf,
                    config,
                });
                break;
            }
        }
        ep.ok_or_else(|| Error::InvalidProblem("no valid sequential start".to_string()))?
    };
    let goal = placement_endpoint(9.0, LeafId::new(3, 0), &env, &foliations, &mut rng)?;
    Problem::new(
        format!("sequential-{}", seed),
        Some(Category::Sequential),
        env,
        foliations,
        witnesses,
        start,
        goal,
    )
}

/// Crossing structure: a maze of slide planes and re-grasp stations. Each
/// (grasp, span) pair may be sealed or partially walled; one grasp height is
/// planted clear across every span.
fn crossing(seed: u64, density: f64) -> Result<Problem> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ salt(Category::Crossing));
    let heights: Vec<f64> = (0..4)
        .map(|k| 2.0 + 1.8 * k as f64 + rng.random_range(-0.2..0.2))
        .collect();
    let stations = vec![
        1.0,
        3.7 + rng.random_range(-0.3..0.3),
        6.3 + rng.random_range(-0.3..0.3),
        9.0,
    ];
    let grasps = grasp_foliation(0, "slide-grasps", &heights, &mut rng);
    let placements = placement_foliation(1, "stations", &stations);
    let foliations = FoliationSet::new(vec![grasps, placements], 3)?;

    // A strict subset of grasp leaves is blocked: every span of a blocked
    // leaf is sealed (station neighborhoods stay clear so witnesses remain
    // valid). One planted leaf is never blocked. Clear leaves get passable
    // maze walls instead.
    let clear = rng.random_range(0..heights.len());
    let mut object_obstacles = Vec::new();
    for (k, &z) in heights.iter().enumerate() {
        let blocked = k != clear && rng.random::<f64>() < (0.5 * density).min(0.9);
        for span in stations.windows(2) {
            let (lo, hi) = (span[0] + STATION_MARGIN, span[1] - STATION_MARGIN);
            if blocked {
                object_obstacles.push(slab(lo, hi, z, (0.0, SIDE)));
            } else if rng.random::<f64>() < (0.35 * density).min(0.9) {
                // Anchored at the bottom; the top band stays open past every
                // wall and pillar.
                let reach = rng.random_range(4.0..6.5);
                object_obstacles.push(slab(lo, hi, z, (0.0, reach)));
            }
        }
    }
    let mut robot_obstacles = Vec::new();
    if density > 0.0 {
        let x1 = 2.6 + rng.random_range(-0.2..0.2);
        robot_obstacles.push(pillar(x1, x1 + 0.4, rng.random_range(5.0..6.0)));
        let x2 = 7.6 + rng.random_range(-0.2..0.2);
        robot_obstacles.push(pillar(x2, x2 + 0.4, rng.random_range(5.0..6.0)));
    }
    let env = Environment {
        bounds: bounds(),
        robot_radius: ROBOT_RADIUS,
        object_radius: OBJECT_RADIUS,
        robot_obstacles,
        object_obstacles,
    };

    let mut witnesses = Vec::new();
    for (p, &x) in stations.iter().enumerate() {
        for (k, &z) in heights.iter().enumerate() {
            witnesses.push(witness_at(
                x,
                z,
                LeafId::new(0, k),
                LeafId::new(1, p),
                &env,
                &foliations,
                &mut rng,
            )?);
        }
    }
    let start = placement_endpoint(stations[0], LeafId::new(1, 0), &env, &foliations, &mut rng)?;
    let goal = placement_endpoint(
        stations[3],
        LeafId::new(1, 3),
        &env,
        &foliations,
        &mut rng,
    )?;
    Problem::new(
        format!("crossing-{}", seed),
        Some(Category::Crossing),
        env,
        foliations,
        witnesses,
        start,
        goal,
    )
}
