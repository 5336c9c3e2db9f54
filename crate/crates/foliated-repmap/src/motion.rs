//! Constrained bidirectional RRT over one leaf, with distribution-biased
//! sampling and tagged feedback.
//!
//! Every random draw and every candidate tree vertex is evaluated through
//! `check_validity` and recorded in the feedback, valid or not; that record
//! is the experience the roadmap learns from. Edge interpolation checks and
//! shortcut-smoothing probes are not recorded.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_validity, Environment, ValidityTag};
use crate::foliation::{Configuration, FoliationSet, LeafId};
use crate::gmm::PreparedMixture;
use crate::repmap::{PlannerFeedback, Task};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionPlannerConfig {
    /// Probability of drawing from the task's distribution list instead of
    /// uniformly over the bounds.
    pub rho: f64,
    pub step_size: f64,
    /// Probability of steering straight at the opposite tree root.
    pub goal_bias: f64,
    /// Wall-clock safety cap. The iteration cap binds first in the default
    /// setup, which keeps results reproducible.
    pub time_budget_secs: f64,
    pub max_iterations: usize,
    pub projection_max_iters: usize,
    pub smoothing_attempts: usize,
}

impl Default for MotionPlannerConfig {
    fn default() -> Self {
        MotionPlannerConfig {
            rho: 0.5,
            step_size: 0.5,
            goal_bias: 0.05,
            time_budget_secs: 2.0,
            max_iterations: 1500,
            projection_max_iters: 50,
            smoothing_attempts: 50,
        }
    }
}

/// Draws task-biased samples: with probability rho a Gaussian from the
/// task's distribution list, otherwise uniform over the bounds; the raw draw
/// is then projected onto the task leaf.
pub struct BiasedSampler<'a> {
    leaf: LeafId,
    mixture: Option<PreparedMixture>,
    env: &'a Environment,
    foliations: &'a FoliationSet,
    cfg: &'a MotionPlannerConfig,
}

impl<'a> BiasedSampler<'a> {
    pub fn new(
        task: &Task,
        env: &'a Environment,
        foliations: &'a FoliationSet,
        cfg: &'a MotionPlannerConfig,
    ) -> crate::Result<Self> {
        let mixture = if task.distributions.is_empty() {
            None
        } else {
            Some(PreparedMixture::new(&task.distributions)?)
        };
        Ok(BiasedSampler {
            leaf: task.leaf,
            mixture,
            env,
            foliations,
            cfg,
        })
    }

    /// The raw draw, before projection.
    pub fn draw_raw<R: Rng>(&self, rng: &mut R) -> Configuration {
        let use_gaussian = match &self.mixture {
            Some(_) => rng.random::<f64>() < self.cfg.rho,
            None => {
                // Keep the rng stream aligned with the guided case so a
                // baseline run consumes draws at the same rate.
                let _ = rng.random::<f64>();
                false
            }
        };
        if use_gaussian {
            let mixture = self.mixture.as_ref().unwrap();
            let j = rng.random_range(0..mixture.len());
            mixture.sample(j, rng)
        } else {
            let coords = self
                .env
                .bounds
                .min
                .iter()
                .zip(&self.env.bounds.max)
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect();
            Configuration(coords)
        }
    }

    /// Raw draw projected onto the task leaf. When the projection does not
    /// converge the raw configuration is returned and the caller's validity
    /// check tags it (typically as a constraint violation).
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Configuration {
        let raw = self.draw_raw(rng);
        match self
            .foliations
            .project_to_manifold(&raw, self.leaf, self.cfg.projection_max_iters)
        {
            Ok(p) => p,
            Err(_) => raw,
        }
    }
}

/// Spec-level sampling operation; plan_task uses the same code path.
pub fn sample_biased<R: Rng>(
    task: &Task,
    env: &Environment,
    foliations: &FoliationSet,
    cfg: &MotionPlannerConfig,
    rng: &mut R,
) -> crate::Result<Configuration> {
    Ok(BiasedSampler::new(task, env, foliations, cfg)?.draw(rng))
}

struct TreeNode {
    q: Configuration,
    parent: Option<usize>,
}

struct Recorder<'a> {
    leaf: LeafId,
    env: &'a Environment,
    foliations: &'a FoliationSet,
    samples: Vec<(Configuration, ValidityTag)>,
}

impl<'a> Recorder<'a> {
    fn evaluate(&mut self, q: &Configuration) -> ValidityTag {
        let tag = check_validity(q, self.leaf, self.env, self.foliations);
        self.samples.push((q.clone(), tag));
        tag
    }

    /// Validity probe that leaves no trace, for interpolation and smoothing.
    fn probe(&self, q: &Configuration) -> ValidityTag {
        check_validity(q, self.leaf, self.env, self.foliations)
    }
}

/// Plans one task with a constrained bidirectional RRT. Always returns
/// feedback; failure is a result, not an error.
pub fn plan_task<R: Rng>(
    task: &Task,
    env: &Environment,
    foliations: &FoliationSet,
    cfg: &MotionPlannerConfig,
    rng: &mut R,
) -> PlannerFeedback {
    let clock = Instant::now();
    let mut rec = Recorder {
        leaf: task.leaf,
        env,
        foliations,
        samples: Vec::new(),
    };
    let eps = foliations
        .foliation(task.leaf.foliation)
        .map(|f| f.epsilon)
        .unwrap_or(crate::foliation::DEFAULT_EPSILON);

    // Endpoint validation: an invalid endpoint fails immediately with the
    // offending tag in the record.
    if rec.evaluate(&task.start) != ValidityTag::Valid {
        return failure(rec.samples);
    }
    if rec.evaluate(&task.goal) != ValidityTag::Valid {
        return failure(rec.samples);
    }
    if task.start.distance(&task.goal) <= eps {
        return PlannerFeedback {
            success: true,
            samples: rec.samples,
            path: Some(vec![task.start.clone()]),
            path_length: 0.0,
        };
    }

    let sampler = match BiasedSampler::new(task, env, foliations, cfg) {
        Ok(s) => s,
        Err(_) => return failure(rec.samples),
    };

    let mut start_tree = vec![TreeNode {
        q: task.start.clone(),
        parent: None,
    }];
    let mut goal_tree = vec![TreeNode {
        q: task.goal.clone(),
        parent: None,
    }];

    let mut connection: Option<(usize, usize)> = None; // (start tree, goal tree)
    let mut a_is_start = true;
    for _ in 0..cfg.max_iterations {
        if clock.elapsed().as_secs_f64() > cfg.time_budget_secs {
            break;
        }
        let (tree_a, tree_b) = if a_is_start {
            (&mut start_tree, &mut goal_tree)
        } else {
            (&mut goal_tree, &mut start_tree)
        };

        let target = if rng.random::<f64>() < cfg.goal_bias {
            tree_b[0].q.clone()
        } else {
            let q = sampler.draw(rng);
            if rec.evaluate(&q) != ValidityTag::Valid {
                a_is_start = !a_is_start;
                continue;
            }
            q
        };

        if let Some(new_a) = extend(tree_a, &target, cfg, foliations, &mut rec) {
            let bridge_target = tree_a[new_a].q.clone();
            if let Some(new_b) = extend(tree_b, &bridge_target, cfg, foliations, &mut rec) {
                if tree_b[new_b].q.distance(&bridge_target) <= eps.max(1e-9) {
                    connection = if a_is_start {
                        Some((new_a, new_b))
                    } else {
                        Some((new_b, new_a))
                    };
                }
            }
        }
        if connection.is_some() {
            break;
        }
        a_is_start = !a_is_start;
    }

    let Some((s_idx, g_idx)) = connection else {
        return failure(rec.samples);
    };

    let mut path = chain(&start_tree, s_idx);
    path.reverse();
    let back = chain(&goal_tree, g_idx);
    // The two chains meet at the same configuration; drop the duplicate.
    path.extend(back.into_iter().skip(1));

    let path = shortcut_smooth(path, cfg, foliations, &rec, rng);
    let path = densify(path, task.leaf, cfg, foliations);

    // Final audit: the waypoints must all be valid and on the leaf.
    for q in &path {
        if rec.probe(q) != ValidityTag::Valid {
            return failure(rec.samples);
        }
    }
    let mut length = 0.0;
    for w in path.windows(2) {
        length += w[0].distance(&w[1]);
    }
    PlannerFeedback {
        success: true,
        samples: rec.samples,
        path: Some(path),
        path_length: length,
    }
}

fn failure(samples: Vec<(Configuration, ValidityTag)>) -> PlannerFeedback {
    PlannerFeedback {
        success: false,
        samples,
        path: None,
        path_length: 0.0,
    }
}

fn chain(tree: &[TreeNode], mut idx: usize) -> Vec<Configuration> {
    let mut out = vec![tree[idx].q.clone()];
    while let Some(p) = tree[idx].parent {
        idx = p;
        out.push(tree[idx].q.clone());
    }
    out
}

fn nearest(tree: &[TreeNode], q: &Configuration) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in tree.iter().enumerate() {
        let d = n.q.distance(q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Connect-style extension: steps from the nearest node toward `target`,
/// projecting each step onto the leaf, until the target is reached or a step
/// goes invalid. Returns the index of the last node added, if any.
fn extend(
    tree: &mut Vec<TreeNode>,
    target: &Configuration,
    cfg: &MotionPlannerConfig,
    foliations: &FoliationSet,
    rec: &mut Recorder,
) -> Option<usize> {
    let mut cur = nearest(tree, target);
    let mut added = None;
    loop {
        let from = tree[cur].q.clone();
        let gap = from.distance(target);
        if gap <= 1e-12 {
            break;
        }
        let candidate = if gap <= cfg.step_size {
            target.clone()
        } else {
            let scaled: Vec<f64> = from
                .as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(a, b)| a + (b - a) * cfg.step_size / gap)
                .collect();
            match foliations.project_to_manifold(
                &Configuration(scaled.clone()),
                rec.leaf,
                cfg.projection_max_iters,
            ) {
                Ok(p) => p,
                Err(_) => Configuration(scaled),
            }
        };
        if candidate.distance(&from) <= 1e-12 {
            // Projection pushed the step back onto the current point; no
            // progress is possible in this direction.
            break;
        }
        if rec.evaluate(&candidate) != ValidityTag::Valid {
            break;
        }
        if !segment_valid(&from, &candidate, cfg, foliations, rec) {
            break;
        }
        tree.push(TreeNode {
            q: candidate.clone(),
            parent: Some(cur),
        });
        cur = tree.len() - 1;
        added = Some(cur);
        if candidate.distance(target) <= 1e-12 {
            break;
        }
    }
    added
}

/// Checks the straight segment at step_size/4 resolution, projecting each
/// interpolated point onto the leaf first. Probes are not recorded.
fn segment_valid(
    a: &Configuration,
    b: &Configuration,
    cfg: &MotionPlannerConfig,
    foliations: &FoliationSet,
    rec: &Recorder,
) -> bool {
    let dist = a.distance(b);
    if dist <= 1e-12 {
        return true;
    }
    let steps = (dist / (cfg.step_size / 4.0)).ceil() as usize;
    for i in 1..steps {
        let t = i as f64 / steps as f64;
        let interp: Vec<f64> = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x + (y - x) * t)
            .collect();
        let q = match foliations.project_to_manifold(
            &Configuration(interp),
            rec.leaf,
            cfg.projection_max_iters,
        ) {
            Ok(p) => p,
            Err(_) => return false,
        };
        if rec.probe(&q) != ValidityTag::Valid {
            return false;
        }
    }
    true
}

/// Random-pair shortcutting. Smoothing probes are planner bookkeeping, not
/// experience, so they stay out of the feedback record.
fn shortcut_smooth<R: Rng>(
    mut path: Vec<Configuration>,
    cfg: &MotionPlannerConfig,
    foliations: &FoliationSet,
    rec: &Recorder,
    rng: &mut R,
) -> Vec<Configuration> {
    for _ in 0..cfg.smoothing_attempts {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        let direct = path[i].distance(&path[j]);
        let mut via = 0.0;
        for w in path[i..=j].windows(2) {
            via += w[0].distance(&w[1]);
        }
        if direct >= via - 1e-12 {
            continue;
        }
        if segment_valid(&path[i], &path[j], cfg, foliations, rec) {
            path.drain(i + 1..j);
        }
    }
    path
}

/// Inserts projected midpoints until consecutive waypoints sit within
/// step_size of each other. Interpolation targets 0.9 * step_size so the
/// spacing bound survives the projection back onto curved leaves.
fn densify(
    path: Vec<Configuration>,
    leaf: LeafId,
    cfg: &MotionPlannerConfig,
    foliations: &FoliationSet,
) -> Vec<Configuration> {
    if path.len() < 2 {
        return path;
    }
    let mut out = vec![path[0].clone()];
    for k in 1..path.len() {
        let a = out.last().unwrap().clone();
        let b = &path[k];
        let dist = a.distance(b);
        let pieces = (dist / (0.9 * cfg.step_size)).ceil().max(1.0) as usize;
        for i in 1..=pieces {
            let t = i as f64 / pieces as f64;
            let interp: Vec<f64> = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| x + (y - x) * t)
                .collect();
            let q = Configuration(interp);
            let projected = foliations
                .project_to_manifold(&q, leaf, cfg.projection_max_iters)
                .unwrap_or(q);
            out.push(projected);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Aabb, ConvexShape};
    use crate::foliation::{CoParameter, ConstraintKind, Foliation, ObjectPoseRule};
    use crate::gmm::GaussianComponent;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn plane_world(obstacles: Vec<ConvexShape>) -> (Environment, FoliationSet) {
        let env = Environment {
            bounds: Aabb::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap(),
            robot_radius: 0.1,
            object_radius: 0.1,
            robot_obstacles: obstacles,
            object_obstacles: vec![],
        };
        let f = Foliation {
            id: 0,
            name: "heights".to_string(),
            constraint: ConstraintKind::AxisOffset { axis: 1 },
            co_params: vec![CoParameter::new("y5", vec![5.0])],
            epsilon: 1e-6,
            sigma_sim: Some(1.0),
            object_pose: ObjectPoseRule::None,
        };
        (env, FoliationSet::new(vec![f], 2).unwrap())
    }

    fn line_task(x0: f64, x1: f64) -> Task {
        Task {
            leaf: LeafId::new(0, 0),
            start: Configuration(vec![x0, 5.0]),
            goal: Configuration(vec![x1, 5.0]),
            distributions: vec![],
        }
    }

    #[test]
    fn start_equals_goal_trivial_success() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let task = line_task(3.0, 3.0);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        assert!(fb.success);
        assert_eq!(fb.path.as_ref().unwrap().len(), 1);
        assert_eq!(fb.path_length, 0.0);
    }

    #[test]
    fn open_corridor_succeeds_with_near_straight_path() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let task = line_task(1.0, 9.0);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        assert!(fb.success);
        let path = fb.path.unwrap();
        assert_eq!(path[0], task.start);
        assert!(path.last().unwrap().distance(&task.goal) <= 1e-6);
        assert!(fb.path_length <= 1.5 * 8.0);
        for w in path.windows(2) {
            assert!(w[0].distance(&w[1]) <= cfg.step_size + 1e-9);
        }
        for q in &path {
            assert!((q.0[1] - 5.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn blocked_goal_fails_with_robot_invalid_samples() {
        // A box sealing the goal region on the leaf: y-slab across the line.
        let wall = ConvexShape::Box {
            min: vec![6.0, 4.0],
            max: vec![6.5, 6.0],
        };
        let (env, fols) = plane_world(vec![wall]);
        let cfg = MotionPlannerConfig {
            max_iterations: 300,
            ..Default::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let task = line_task(1.0, 9.0);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        assert!(!fb.success);
        assert!(!fb.samples.is_empty());
        assert!(fb
            .samples
            .iter()
            .any(|(_, t)| *t == ValidityTag::RobotInvalid));
    }

    #[test]
    fn invalid_start_fails_immediately_with_tag() {
        let wall = ConvexShape::Box {
            min: vec![0.5, 4.5],
            max: vec![1.5, 5.5],
        };
        let (env, fols) = plane_world(vec![wall]);
        let cfg = MotionPlannerConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let task = line_task(1.0, 9.0);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        assert!(!fb.success);
        assert_eq!(fb.samples.len(), 1);
        assert_eq!(fb.samples[0].1, ValidityTag::RobotInvalid);
    }

    #[test]
    fn feedback_tags_agree_with_recheck() {
        let wall = ConvexShape::Ball {
            center: vec![5.0, 5.0],
            radius: 1.0,
        };
        let (env, fols) = plane_world(vec![wall]);
        let cfg = MotionPlannerConfig {
            max_iterations: 200,
            ..Default::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let task = line_task(1.0, 9.0);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        for (q, tag) in &fb.samples {
            assert_eq!(*tag, check_validity(q, task.leaf, &env, &fols));
        }
    }

    #[test]
    fn fixed_seed_reproduces_feedback() {
        let wall = ConvexShape::Ball {
            center: vec![4.0, 5.0],
            radius: 0.8,
        };
        let (env, fols) = plane_world(vec![wall]);
        let cfg = MotionPlannerConfig::default();
        let task = line_task(1.0, 9.0);
        let fb1 = plan_task(&task, &env, &fols, &cfg, &mut ChaCha12Rng::seed_from_u64(23));
        let fb2 = plan_task(&task, &env, &fols, &cfg, &mut ChaCha12Rng::seed_from_u64(23));
        assert_eq!(fb1.success, fb2.success);
        assert_eq!(fb1.samples, fb2.samples);
        assert_eq!(fb1.path, fb2.path);
        assert_eq!(fb1.path_length.to_bits(), fb2.path_length.to_bits());
    }

    #[test]
    fn sampler_uniform_when_rho_zero() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig {
            rho: 0.0,
            ..Default::default()
        };
        let task = Task {
            distributions: vec![GaussianComponent {
                id: 0,
                weight: 1.0,
                mean: DVector::from_column_slice(&[5.0, 5.0]),
                covariance: DMatrix::identity(2, 2) * 0.01,
            }],
            ..line_task(1.0, 9.0)
        };
        let sampler = BiasedSampler::new(&task, &env, &fols, &cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        // Chi-square over a 4x4 grid of the raw draws against uniform.
        let mut bins = [0usize; 16];
        let n = 10_000;
        for _ in 0..n {
            let q = sampler.draw_raw(&mut rng);
            let bx = ((q.0[0] / 2.5).floor() as usize).min(3);
            let by = ((q.0[1] / 2.5).floor() as usize).min(3);
            bins[by * 4 + bx] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // 99th percentile of chi-square with 15 degrees of freedom.
        assert!(chi2 < 30.5779, "chi2 = {}", chi2);
    }

    #[test]
    fn sampler_gaussian_when_rho_one() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig {
            rho: 1.0,
            ..Default::default()
        };
        let sigma = 0.3f64;
        let task = Task {
            distributions: vec![GaussianComponent {
                id: 0,
                weight: 1.0,
                mean: DVector::from_column_slice(&[5.0, 5.0]),
                covariance: DMatrix::identity(2, 2) * sigma * sigma,
            }],
            ..line_task(1.0, 9.0)
        };
        let sampler = BiasedSampler::new(&task, &env, &fols, &cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 10_000;
        let mut within = 0;
        for _ in 0..n {
            let q = sampler.draw_raw(&mut rng);
            let d = ((q.0[0] - 5.0).powi(2) + (q.0[1] - 5.0).powi(2)).sqrt();
            if d <= 4.0 * sigma {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.99 * n as f64, "within = {}", within);
    }

    #[test]
    fn sampler_projects_draws_onto_leaf() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig::default();
        let task = line_task(1.0, 9.0);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..100 {
            let q = sample_biased(&task, &env, &fols, &cfg, &mut rng).unwrap();
            assert!((q.0[1] - 5.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn sampler_deterministic_per_seed() {
        let (env, fols) = plane_world(vec![]);
        let cfg = MotionPlannerConfig::default();
        let task = line_task(1.0, 9.0);
        let a: Vec<Configuration> = {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            (0..50)
                .map(|_| sample_biased(&task, &env, &fols, &cfg, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<Configuration> = {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            (0..50)
                .map(|_| sample_biased(&task, &env, &fols, &cfg, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn planning_works_on_sphere_leaf() {
        let env = Environment {
            bounds: Aabb::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
            robot_radius: 0.05,
            object_radius: 0.05,
            robot_obstacles: vec![],
            object_obstacles: vec![],
        };
        let f = Foliation {
            id: 0,
            name: "circles".to_string(),
            constraint: ConstraintKind::SphereRadius {
                center: vec![0.0, 0.0],
            },
            co_params: vec![CoParameter::new("r2", vec![2.0])],
            epsilon: 1e-6,
            sigma_sim: Some(1.0),
            object_pose: ObjectPoseRule::None,
        };
        let fols = FoliationSet::new(vec![f], 2).unwrap();
        let task = Task {
            leaf: LeafId::new(0, 0),
            start: Configuration(vec![2.0, 0.0]),
            goal: Configuration(vec![-2.0, 0.0]),
            distributions: vec![],
        };
        let cfg = MotionPlannerConfig {
            step_size: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let fb = plan_task(&task, &env, &fols, &cfg, &mut rng);
        assert!(fb.success);
        for q in fb.path.unwrap() {
            let r = (q.0[0].powi(2) + q.0[1].powi(2)).sqrt();
            assert!((r - 2.0).abs() <= 1e-6);
        }
    }
}
