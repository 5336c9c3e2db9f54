//! The query loop and benchmark batteries.
//!
//! One query runs plan -> split -> motion-plan -> ingest -> re-plan until a
//! whole task sequence succeeds end to end, the planner reports no path, or
//! the loop cap trips. Batteries sweep seeds and planner variants over a
//! generated problem family and emit CSV artifacts: `runs.csv` holds the
//! deterministic per-run results (byte-identical across re-runs of the same
//! battery), `timing.csv` the measured wall times, `summary.csv` the
//! per-variant aggregates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{build_atlas, BaseRoadmap};
use crate::bench::make_benchmark_with;
use crate::error::{Error, Result};
use crate::foliation::{Configuration, LeafId};
use crate::gmm::ClusteringConfig;
use crate::mdp::{MdpParams, MdpPlanner};
use crate::motion::{plan_task, MotionPlannerConfig};
use crate::mtg::{MtgParams, MtgPlanner};
use crate::problem::{Category, Problem};
use crate::repmap::{FoliatedRepMap, NodePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Mtg,
    Mdp,
}

/// A planner paired with whether it reads and updates the experience counts.
/// Baselines re-plan over the same stitched graph with uniform weights or
/// probabilities and never touch the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub planner: PlannerKind,
    pub use_experience: bool,
}

impl Variant {
    pub const MTG_FRM: Variant = Variant {
        planner: PlannerKind::Mtg,
        use_experience: true,
    };
    pub const MTG_BASELINE: Variant = Variant {
        planner: PlannerKind::Mtg,
        use_experience: false,
    };
    pub const MDP_FRM: Variant = Variant {
        planner: PlannerKind::Mdp,
        use_experience: true,
    };
    pub const MDP_BASELINE: Variant = Variant {
        planner: PlannerKind::Mdp,
        use_experience: false,
    };

    pub fn all() -> Vec<Variant> {
        vec![
            Variant::MTG_FRM,
            Variant::MTG_BASELINE,
            Variant::MDP_FRM,
            Variant::MDP_BASELINE,
        ]
    }

    pub fn label(&self) -> &'static str {
        match (self.planner, self.use_experience) {
            (PlannerKind::Mtg, true) => "mtg-frm",
            (PlannerKind::Mtg, false) => "mtg-baseline",
            (PlannerKind::Mdp, true) => "mdp-frm",
            (PlannerKind::Mdp, false) => "mdp-baseline",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mtg-frm" => Ok(Variant::MTG_FRM),
            "mtg-baseline" => Ok(Variant::MTG_BASELINE),
            "mdp-frm" => Ok(Variant::MDP_FRM),
            "mdp-baseline" => Ok(Variant::MDP_BASELINE),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{}'",
                other
            ))),
        }
    }
}

/// Loop and planner budgets for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Budgets {
    pub max_loops: usize,
    pub motion: MotionPlannerConfig,
    pub mtg: MtgParams,
    pub mdp: MdpParams,
    /// Pseudo-count scale for informed initialization.
    pub init_kappa: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_loops: 100,
            motion: MotionPlannerConfig::default(),
            mtg: MtgParams::default(),
            mdp: MdpParams::default(),
            init_kappa: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    TimeoutLoops,
    NoPath,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::TimeoutLoops => f.write_str("timeout-loops"),
            FailureReason::NoPath => f.write_str("no-path"),
        }
    }
}

/// One solved task of the final successful sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolvedTask {
    pub leaf: LeafId,
    pub path: Vec<Configuration>,
    pub length: f64,
}

/// Per-loop trace kept in the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopLog {
    pub loop_index: usize,
    pub sequence_nodes: usize,
    pub tasks: usize,
    /// Index of the task that failed, if the sequence was aborted.
    pub failed_task: Option<usize>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub category: Option<Category>,
    pub variant: String,
    pub seed: u64,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    pub loops_used: usize,
    pub wall_time_s: f64,
    pub total_path_length: f64,
    /// Samples the harness submitted for ingestion (zero for baselines).
    pub samples_ingested: u64,
    /// Count mass in the map after the run, excluding seeded pseudo-counts.
    pub count_mass: u64,
    pub solution: Option<Vec<SolvedTask>>,
    pub loop_log: Vec<LoopLog>,
}

/// Runs the main loop for one query on a fresh map.
pub fn run_query(
    problem: &Problem,
    roadmap: &BaseRoadmap,
    variant: Variant,
    seed: u64,
    budgets: &Budgets,
    init_scores: Option<&BTreeMap<usize, f64>>,
) -> Result<RunRecord> {
    let mut map = FoliatedRepMap::new(
        roadmap.clone(),
        problem.foliations.clone(),
        problem.witnesses.clone(),
        &problem.environment.bounds,
    )?;
    if variant.use_experience {
        if let Some(scores) = init_scores {
            map.init_weights(scores, budgets.init_kappa)?;
        }
    }
    run_query_on_map(problem, &mut map, variant, seed, budgets).map(|r| r.0)
}

/// Runs the main loop on a caller-supplied map (warm starts keep the counts
/// accumulated by earlier queries). Returns the record and whether the run
/// left the counts untouched, which baselines must.
pub fn run_query_on_map(
    problem: &Problem,
    map: &mut FoliatedRepMap,
    variant: Variant,
    seed: u64,
    budgets: &Budgets,
) -> Result<(RunRecord, bool)> {
    budgets.mtg.validate()?;
    budgets.mdp.validate()?;
    let baseline_mass = map.total_count_mass();
    let baseline_ingested = map.samples_ingested();
    let (start, goal) = map.attach_start_goal(
        &problem.start.config,
        problem.start.leaf,
        &problem.goal.config,
        problem.goal.leaf,
    )?;
    // The motion stream depends on the run seed only, so different variants
    // face the same sampling noise on the same problem.
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x6D6F_7469_6F6E_0001);

    let mut wall = 0.0f64;
    let mut samples_tally: u64 = 0;
    let mut loop_log = Vec::new();
    let mut outcome: Option<(bool, Option<FailureReason>, usize)> = None;
    let mut solution = None;
    let mut total_path_length = 0.0;

    for loop_index in 1..=budgets.max_loops {
        let t0 = Instant::now();
        let path: Option<NodePath> = match variant.planner {
            PlannerKind::Mtg => {
                let planner = MtgPlanner {
                    params: budgets.mtg,
                    use_experience: variant.use_experience,
                };
                planner.plan(&map, start, goal)
            }
            PlannerKind::Mdp => {
                let planner = MdpPlanner {
                    params: budgets.mdp,
                    use_experience: variant.use_experience,
                };
                planner.plan(&map, start, goal)
            }
        };
        wall += t0.elapsed().as_secs_f64();
        let Some(path) = path else {
            outcome = Some((false, Some(FailureReason::NoPath), loop_index));
            loop_log.push(LoopLog {
                loop_index,
                sequence_nodes: 0,
                tasks: 0,
                failed_task: None,
                samples: 0,
            });
            break;
        };
        let mut tasks = map.split_into_tasks(&path, &problem.start.config, &problem.goal.config)?;
        if !variant.use_experience {
            for t in &mut tasks {
                t.distributions.clear();
            }
        }

        let mut attempts = Vec::new();
        let mut failed_task = None;
        for (idx, task) in tasks.iter().enumerate() {
            let t0 = Instant::now();
            let fb = plan_task(
                task,
                &problem.environment,
                &problem.foliations,
                &budgets.motion,
                &mut rng,
            );
            wall += t0.elapsed().as_secs_f64();
            let ok = fb.success;
            attempts.push((task.clone(), fb));
            if !ok {
                failed_task = Some(idx);
                break;
            }
        }

        let loop_samples: usize = attempts.iter().map(|(_, fb)| fb.samples.len()).sum();
        if variant.use_experience {
            for (task, fb) in &attempts {
                map.ingest_feedback(task, fb)?;
                samples_tally += fb.samples.len() as u64;
            }
        }
        loop_log.push(LoopLog {
            loop_index,
            sequence_nodes: path.nodes.len(),
            tasks: tasks.len(),
            failed_task,
            samples: loop_samples,
        });

        if failed_task.is_none() {
            total_path_length = attempts.iter().map(|(_, fb)| fb.path_length).sum();
            solution = Some(
                attempts
                    .into_iter()
                    .map(|(task, fb)| SolvedTask {
                        leaf: task.leaf,
                        length: fb.path_length,
                        path: fb.path.expect("successful feedback carries a path"),
                    })
                    .collect::<Vec<_>>(),
            );
            outcome = Some((true, None, loop_index));
            break;
        }
    }

    let (success, failure_reason, loops_used) =
        outcome.unwrap_or((false, Some(FailureReason::TimeoutLoops), budgets.max_loops));
    let counts_untouched = map.total_count_mass() == baseline_mass
        && map.samples_ingested() == baseline_ingested;
    if !variant.use_experience && !counts_untouched {
        return Err(Error::ContractViolation(
            "baseline run touched the experience counts".to_string(),
        ));
    }
    let record = RunRecord {
        problem: problem.name.clone(),
        category: problem.category,
        variant: variant.label().to_string(),
        seed,
        success,
        failure_reason,
        loops_used,
        wall_time_s: wall,
        total_path_length,
        samples_ingested: samples_tally,
        count_mass: map.total_count_mass() - map.seeded_pseudo_mass(),
        solution,
        loop_log,
    };
    Ok((record, counts_untouched))
}

/// Atlas construction knobs used by batteries and the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasParams {
    pub n_pairs: usize,
    pub tau_edge: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for AtlasParams {
    fn default() -> Self {
        // The mixture must be fine enough that a blocked slide crosses
        // several distributions: the count-ratio probabilities of single
        // edges saturate near the local valid fraction, and only the product
        // over multiple penalized edges pushes a sealed leaf's value below a
        // fresh alternative's 0.5-per-edge prior.
        AtlasParams {
            n_pairs: 90,
            tau_edge: 2,
            k_min: 16,
            k_max: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub category: Category,
    pub n_runs: usize,
    pub seed0: u64,
    pub variants: Vec<Variant>,
    pub budgets: Budgets,
    pub atlas: AtlasParams,
    pub density: f64,
    /// Distribute runs across threads. Timing summaries are cleanest when
    /// this is off.
    pub parallel: bool,
}

impl BatteryConfig {
    pub fn new(category: Category, n_runs: usize, seed0: u64) -> Self {
        let mut budgets = Budgets::default();
        // Batteries bind on iterations, not wall clock, so re-runs reproduce.
        budgets.motion.max_iterations = 800;
        BatteryConfig {
            category,
            n_runs,
            seed0,
            variants: Variant::all(),
            budgets,
            atlas: AtlasParams::default(),
            density: 1.0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatterySummary {
    pub category: Category,
    pub variant: String,
    pub n_runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_wall_time_s: f64,
    pub median_wall_time_s: f64,
    /// Mean total path length over the successful runs.
    pub mean_success_path_length: f64,
}

#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub config: BatteryConfig,
    pub roadmap: BaseRoadmap,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<BatterySummary>,
}

/// Runs the full battery: one shared atlas, then every variant against every
/// seeded problem. Records come back sorted by (variant order, seed).
pub fn run_battery(config: &BatteryConfig) -> Result<BatteryResult> {
    run_battery_with_roadmap(config, None)
}

/// Same as [`run_battery`] but reusing a prebuilt atlas.
pub fn run_battery_with_roadmap(
    config: &BatteryConfig,
    roadmap: Option<BaseRoadmap>,
) -> Result<BatteryResult> {
    if config.n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be >= 1".to_string()));
    }
    let roadmap = match roadmap {
        Some(r) => r,
        None => {
            let free = crate::env::Environment {
                bounds: crate::env::Aabb::new(vec![0.0; 3], vec![crate::bench::SIDE; 3])?,
                robot_radius: crate::bench::ROBOT_RADIUS,
                object_radius: crate::bench::OBJECT_RADIUS,
                robot_obstacles: vec![],
                object_obstacles: vec![],
            };
            let clustering = ClusteringConfig {
                k_min: config.atlas.k_min,
                k_max: config.atlas.k_max,
                ..Default::default()
            };
            let (roadmap, _) = build_atlas(
                &free,
                config.atlas.n_pairs,
                &config.budgets.motion,
                &clustering,
                config.atlas.tau_edge,
                config.seed0 ^ 0xA7_1A_5A,
            )?;
            roadmap
        }
    };

    let problems: Vec<Problem> = (0..config.n_runs)
        .map(|i| {
            make_benchmark_with(
                config.category,
                config.seed0.wrapping_add(i as u64),
                config.density,
            )
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, Variant, usize)> = config
        .variants
        .iter()
        .enumerate()
        .flat_map(|(vi, &v)| (0..config.n_runs).map(move |i| (vi, v, i)))
        .collect();

    let run_one = |&(_, variant, i): &(usize, Variant, usize)| -> Result<RunRecord> {
        run_query(
            &problems[i],
            &roadmap,
            variant,
            config.seed0.wrapping_add(i as u64),
            &config.budgets,
            None,
        )
    };

    let mut keyed: Vec<((usize, usize), RunRecord)> = if config.parallel {
        jobs.par_iter()
            .map(|job| run_one(job).map(|r| ((job.0, job.2), r)))
            .collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter()
            .map(|job| run_one(job).map(|r| ((job.0, job.2), r)))
            .collect::<Result<Vec<_>>>()?
    };
    keyed.sort_by_key(|(k, _)| *k);
    let records: Vec<RunRecord> = keyed.into_iter().map(|(_, r)| r).collect();

    let summaries = summarize(config, &records);
    Ok(BatteryResult {
        config: config.clone(),
        roadmap,
        records,
        summaries,
    })
}

fn summarize(config: &BatteryConfig, records: &[RunRecord]) -> Vec<BatterySummary> {
    config
        .variants
        .iter()
        .map(|v| {
            let label = v.label();
            let of_variant: Vec<&RunRecord> =
                records.iter().filter(|r| r.variant == label).collect();
            let n = of_variant.len();
            let successes = of_variant.iter().filter(|r| r.success).count();
            let mut times: Vec<f64> = of_variant.iter().map(|r| r.wall_time_s).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean_wall = if times.is_empty() {
                0.0
            } else {
                times.iter().sum::<f64>() / n as f64
            };
            let median_wall = median(&times);
            let lengths: Vec<f64> = of_variant
                .iter()
                .filter(|r| r.success)
                .map(|r| r.total_path_length)
                .collect();
            let mean_len = if lengths.is_empty() {
                0.0
            } else {
                lengths.iter().sum::<f64>() / lengths.len() as f64
            };
            BatterySummary {
                category: config.category,
                variant: label.to_string(),
                n_runs: n,
                successes,
                success_rate: successes as f64 / n.max(1) as f64,
                mean_wall_time_s: mean_wall,
                median_wall_time_s: median_wall,
                mean_success_path_length: mean_len,
            }
        })
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub const BATTERY_SCHEMA: &str = "frm-battery/1";

/// Paths of the artifacts one battery emission produces.
#[derive(Debug, Clone)]
pub struct BatteryArtifacts {
    pub runs_csv: PathBuf,
    pub timing_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub meta_json: PathBuf,
}

/// Writes the battery artifacts. `runs.csv` carries only deterministic
/// fields; measured wall times go to `timing.csv`.
pub fn write_battery(result: &BatteryResult, out_dir: &Path) -> Result<BatteryArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let runs_csv = out_dir.join("runs.csv");
    let timing_csv = out_dir.join("timing.csv");
    let summary_csv = out_dir.join("summary.csv");
    let meta_json = out_dir.join("meta.json");

    {
        let mut w = csv::Writer::from_path(&runs_csv)?;
        w.write_record([
            "category",
            "problem",
            "variant",
            "seed",
            "success",
            "failure_reason",
            "loops_used",
            "total_path_length",
            "samples_ingested",
            "count_mass",
            "solution_tasks",
        ])?;
        for r in &result.records {
            w.write_record([
                r.category.map(|c| c.to_string()).unwrap_or_default(),
                r.problem.clone(),
                r.variant.clone(),
                r.seed.to_string(),
                r.success.to_string(),
                r.failure_reason.map(|f| f.to_string()).unwrap_or_default(),
                r.loops_used.to_string(),
                format!("{:.9}", r.total_path_length),
                r.samples_ingested.to_string(),
                r.count_mass.to_string(),
                r.solution
                    .as_ref()
                    .map(|s| s.len().to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    {
        let mut w = csv::Writer::from_path(&timing_csv)?;
        w.write_record(["category", "variant", "seed", "wall_time_s"])?;
        for r in &result.records {
            w.write_record([
                r.category.map(|c| c.to_string()).unwrap_or_default(),
                r.variant.clone(),
                r.seed.to_string(),
                format!("{:.6}", r.wall_time_s),
            ])?;
        }
        w.flush()?;
    }
    {
        let mut w = csv::Writer::from_path(&summary_csv)?;
        w.write_record([
            "category",
            "variant",
            "n_runs",
            "successes",
            "success_rate",
            "mean_wall_time_s",
            "median_wall_time_s",
            "mean_success_path_length",
        ])?;
        for s in &result.summaries {
            w.write_record([
                s.category.to_string(),
                s.variant.clone(),
                s.n_runs.to_string(),
                s.successes.to_string(),
                format!("{:.6}", s.success_rate),
                format!("{:.6}", s.mean_wall_time_s),
                format!("{:.6}", s.median_wall_time_s),
                format!("{:.9}", s.mean_success_path_length),
            ])?;
        }
        w.flush()?;
    }
    let meta = serde_json::json!({
        "schema": BATTERY_SCHEMA,
        "category": result.config.category,
        "n_runs": result.config.n_runs,
        "seed0": result.config.seed0,
        "variants": result.config.variants.iter().map(|v| v.label()).collect::<Vec<_>>(),
        "density": result.config.density,
        "budgets": result.config.budgets,
        "atlas": result.config.atlas,
        "notes": "runs.csv is deterministic for a fixed seed0; timing.csv holds measured wall times",
    });
    std::fs::write(&meta_json, serde_json::to_string_pretty(&meta)?)?;
    Ok(BatteryArtifacts {
        runs_csv,
        timing_csv,
        summary_csv,
        meta_json,
    })
}
