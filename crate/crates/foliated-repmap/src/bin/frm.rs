//! Command-line front end: build atlases, run single queries, sweep
//! benchmark batteries, and inspect artifacts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use foliated_repmap::atlas::{build_atlas, AtlasFile, AtlasMeta, BaseRoadmap, ATLAS_SCHEMA};
use foliated_repmap::bench::{make_benchmark_with, OBJECT_RADIUS, ROBOT_RADIUS, SIDE};
use foliated_repmap::env::{Aabb, Environment};
use foliated_repmap::gmm::ClusteringConfig;
use foliated_repmap::harness::{
    run_battery_with_roadmap, run_query_on_map, write_battery, AtlasParams, BatteryConfig,
    Budgets, PlannerKind, Variant,
};
use foliated_repmap::motion::MotionPlannerConfig;
use foliated_repmap::problem::{Category, Problem};
use foliated_repmap::repmap::FoliatedRepMap;

#[derive(Parser)]
#[command(name = "frm", about = "Experience-driven planning over foliated manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the base roadmap (dataset -> GMM -> distribution graph).
    BuildAtlas(BuildAtlasArgs),
    /// Run a single query through the plan/execute/ingest loop.
    Plan(PlanArgs),
    /// Run a seeded benchmark battery and emit CSV artifacts.
    Battery(BatteryArgs),
    /// Print statistics of stored artifacts.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CategoryArg {
    Simple,
    Sequential,
    Crossing,
}

impl From<CategoryArg> for Category {
    fn from(c: CategoryArg) -> Category {
        match c {
            CategoryArg::Simple => Category::Simple,
            CategoryArg::Sequential => Category::Sequential,
            CategoryArg::Crossing => Category::Crossing,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Mtg,
    Mdp,
}

#[derive(Args)]
struct AtlasOpts {
    /// Trajectory pairs for the training dataset.
    #[arg(long, default_value_t = 90)]
    n_pairs: usize,
    /// Votes required before two distributions get an edge.
    #[arg(long, default_value_t = 2)]
    tau_edge: usize,
    #[arg(long, default_value_t = 16)]
    k_min: usize,
    #[arg(long, default_value_t = 24)]
    k_max: usize,
}

#[derive(Args)]
struct MotionOpts {
    /// Probability of sampling from the task's distribution list.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    step_size: f64,
    #[arg(long, default_value_t = 0.05)]
    goal_bias: f64,
    /// Wall-clock cap per task, seconds.
    #[arg(long, default_value_t = 2.0)]
    time_budget: f64,
    /// Iteration cap per task; binds before the wall clock by default, which
    /// keeps runs reproducible.
    #[arg(long, default_value_t = 800)]
    motion_iters: usize,
}

impl MotionOpts {
    fn to_config(&self) -> MotionPlannerConfig {
        MotionPlannerConfig {
            rho: self.rho,
            step_size: self.step_size,
            goal_bias: self.goal_bias,
            time_budget_secs: self.time_budget,
            max_iterations: self.motion_iters,
            ..MotionPlannerConfig::default()
        }
    }
}

#[derive(Args)]
struct PlannerOpts {
    /// MTG small penalty per valid sample.
    #[arg(long, default_value_t = 1.0)]
    v_minus: f64,
    /// MTG large penalty per invalid sample.
    #[arg(long, default_value_t = 50.0)]
    v_plus: f64,
    #[arg(long, default_value_t = 1000.0)]
    goal_reward: f64,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    deadend_penalty: f64,
    #[arg(long, default_value_t = 0.95)]
    discount: f64,
    #[arg(long, default_value_t = 1e-6)]
    vi_tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    vi_max_iters: usize,
    #[arg(long, default_value_t = 100)]
    max_loops: usize,
    /// Pseudo-count scale for informed initialization scores.
    #[arg(long, default_value_t = 10.0)]
    init_kappa: f64,
}

impl PlannerOpts {
    fn to_budgets(&self, motion: &MotionOpts) -> Budgets {
        Budgets {
            max_loops: self.max_loops,
            motion: motion.to_config(),
            mtg: foliated_repmap::mtg::MtgParams {
                v_minus: self.v_minus,
                v_plus: self.v_plus,
            },
            mdp: foliated_repmap::mdp::MdpParams {
                goal_reward: self.goal_reward,
                deadend_penalty: self.deadend_penalty,
                discount: self.discount,
                vi_tolerance: self.vi_tolerance,
                vi_max_iters: self.vi_max_iters,
            },
            init_kappa: self.init_kappa,
        }
    }
}

#[derive(Args)]
struct BuildAtlasArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 0.0)]
    bounds_min: f64,
    #[arg(long, default_value_t = SIDE)]
    bounds_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    atlas: AtlasOpts,
    #[command(flatten)]
    motion: MotionOpts,
    /// Output atlas file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    /// Problem file; alternatively generate one with --category/--seed.
    #[arg(long, conflicts_with = "category")]
    problem: Option<PathBuf>,
    #[arg(long, value_enum)]
    category: Option<CategoryArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Write the (possibly generated) problem definition here.
    #[arg(long)]
    emit_problem: Option<PathBuf>,
    /// Prebuilt atlas; built on the fly from the seed when absent.
    #[arg(long)]
    atlas: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlannerArg::Mtg)]
    planner: PlannerArg,
    /// Disable experience: empty distribution lists, no count updates.
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    motion: MotionOpts,
    #[command(flatten)]
    params: PlannerOpts,
    #[command(flatten)]
    atlas_opts: AtlasOpts,
    /// JSON map of per-distribution collision scores in [0,1]; seeds
    /// pseudo-counts scaled by --init-kappa.
    #[arg(long)]
    init_scores: Option<PathBuf>,
    /// Write the run record here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the experience-laden map after the run (warm-start replays).
    #[arg(long)]
    save_map: Option<PathBuf>,
    /// Start from a previously saved map instead of a fresh one.
    #[arg(long)]
    load_map: Option<PathBuf>,
}

#[derive(Args)]
struct BatteryArgs {
    #[arg(long, value_enum)]
    category: CategoryArg,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed0: u64,
    /// Comma-separated variant labels; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Output directory; the FRM_OUT_DIR environment variable overrides the
    /// built-in default.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run the battery on one thread (cleanest timing summaries).
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    atlas: Option<PathBuf>,
    #[command(flatten)]
    motion: MotionOpts,
    #[command(flatten)]
    params: PlannerOpts,
    #[command(flatten)]
    atlas_opts: AtlasOpts,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    atlas: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Saved experience map.
    #[arg(long)]
    map: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::BuildAtlas(args) => build_atlas_cmd(args),
        Command::Plan(args) => plan_cmd(args),
        Command::Battery(args) => battery_cmd(args),
        Command::Inspect(args) => inspect_cmd(args),
    }
}

fn build_atlas_cmd(args: BuildAtlasArgs) -> anyhow::Result<()> {
    let env = Environment {
        bounds: Aabb::new(
            vec![args.bounds_min; args.dim],
            vec![args.bounds_max; args.dim],
        )?,
        robot_radius: ROBOT_RADIUS,
        object_radius: OBJECT_RADIUS,
        robot_obstacles: vec![],
        object_obstacles: vec![],
    };
    let clustering = ClusteringConfig {
        k_min: args.atlas.k_min,
        k_max: args.atlas.k_max,
        ..Default::default()
    };
    let (roadmap, fit) = build_atlas(
        &env,
        args.atlas.n_pairs,
        &args.motion.to_config(),
        &clustering,
        args.atlas.tau_edge,
        args.seed,
    )?;
    println!(
        "atlas: {} components retained of k={}, {} edges, connected: {}",
        roadmap.node_count(),
        fit.selected.k,
        roadmap.edge_count(),
        roadmap.is_connected()
    );
    let file = AtlasFile {
        schema: ATLAS_SCHEMA.to_string(),
        dimension: args.dim,
        roadmap,
        meta: AtlasMeta {
            seed: args.seed,
            n_pairs: args.atlas.n_pairs,
            tau_edge: args.atlas.tau_edge,
            gmm_k: fit.selected.k,
        },
    };
    file.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_or_build_roadmap(
    atlas: &Option<PathBuf>,
    opts: &AtlasOpts,
    motion: &MotionPlannerConfig,
    seed: u64,
) -> anyhow::Result<BaseRoadmap> {
    if let Some(path) = atlas {
        let file = AtlasFile::load(path).context("loading atlas")?;
        return Ok(file.roadmap);
    }
    let env = Environment {
        bounds: Aabb::new(vec![0.0; 3], vec![SIDE; 3])?,
        robot_radius: ROBOT_RADIUS,
        object_radius: OBJECT_RADIUS,
        robot_obstacles: vec![],
        object_obstacles: vec![],
    };
    let clustering = ClusteringConfig {
        k_min: opts.k_min,
        k_max: opts.k_max,
        ..Default::default()
    };
    eprintln!("no --atlas given; building one from seed {}", seed);
    let (roadmap, _) = build_atlas(&env, opts.n_pairs, motion, &clustering, opts.tau_edge, seed)?;
    Ok(roadmap)
}

fn plan_cmd(args: PlanArgs) -> anyhow::Result<()> {
    let problem = match (&args.problem, args.category) {
        (Some(path), _) => Problem::load(path)?,
        (None, Some(category)) => make_benchmark_with(category.into(), args.seed, args.density)?,
        (None, None) => bail!("either --problem or --category is required"),
    };
    if let Some(path) = &args.emit_problem {
        problem.save(path)?;
        println!("wrote {}", path.display());
    }
    let budgets = args.params.to_budgets(&args.motion);
    let variant = Variant {
        planner: match args.planner {
            PlannerArg::Mtg => PlannerKind::Mtg,
            PlannerArg::Mdp => PlannerKind::Mdp,
        },
        use_experience: !args.baseline,
    };
    let init_scores: Option<BTreeMap<usize, f64>> = match &args.init_scores {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };

    // Cross-query persistence is opt-in: --load-map replays onto the saved
    // experience, the default is a fresh map per query.
    let mut map = match &args.load_map {
        Some(path) => {
            let map = FoliatedRepMap::load(path).context("loading experience map")?;
            eprintln!(
                "warm start: {} previously ingested samples",
                map.samples_ingested()
            );
            map
        }
        None => {
            let roadmap = load_or_build_roadmap(
                &args.atlas,
                &args.atlas_opts,
                &budgets.motion,
                args.seed ^ 0xA7_1A_5A,
            )?;
            FoliatedRepMap::new(
                roadmap,
                problem.foliations.clone(),
                problem.witnesses.clone(),
                &problem.environment.bounds,
            )?
        }
    };
    if variant.use_experience {
        if let Some(scores) = &init_scores {
            map.init_weights(scores, budgets.init_kappa)?;
        }
    }

    let (record, _) = run_query_on_map(&problem, &mut map, variant, args.seed, &budgets)?;
    println!(
        "{} on {}: success={} loops={} wall={:.3}s length={:.3}",
        record.variant,
        record.problem,
        record.success,
        record.loops_used,
        record.wall_time_s,
        record.total_path_length
    );
    for log in &record.loop_log {
        println!(
            "  loop {:>3}: {} nodes, {} tasks, failed_task={:?}, {} samples",
            log.loop_index, log.sequence_nodes, log.tasks, log.failed_task, log.samples
        );
    }
    if let Some(path) = &args.save_map {
        map.save(path)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&record)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn battery_cmd(args: BatteryArgs) -> anyhow::Result<()> {
    let mut config = BatteryConfig::new(args.category.into(), args.runs, args.seed0);
    config.budgets = args.params.to_budgets(&args.motion);
    config.density = args.density;
    config.parallel = !args.serial;
    config.atlas = AtlasParams {
        n_pairs: args.atlas_opts.n_pairs,
        tau_edge: args.atlas_opts.tau_edge,
        k_min: args.atlas_opts.k_min,
        k_max: args.atlas_opts.k_max,
    };
    if !args.variants.is_empty() {
        config.variants = args
            .variants
            .iter()
            .map(|s| s.parse::<Variant>())
            .collect::<foliated_repmap::Result<_>>()?;
    }
    let roadmap = match &args.atlas {
        Some(path) => Some(AtlasFile::load(path)?.roadmap),
        None => None,
    };
    let result = run_battery_with_roadmap(&config, roadmap)?;
    let out_dir = args
        .out_dir
        .or_else(|| std::env::var_os("FRM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("battery-out"));
    let artifacts = write_battery(&result, &out_dir)?;
    println!(
        "category={} runs={} seed0={}",
        result.config.category, args.runs, args.seed0
    );
    for s in &result.summaries {
        println!(
            "  {:<14} success {}/{} ({:.1}%)  median wall {:.3}s  mean length {:.2}",
            s.variant,
            s.successes,
            s.n_runs,
            100.0 * s.success_rate,
            s.median_wall_time_s,
            s.mean_success_path_length
        );
    }
    println!(
        "wrote {}, {}, {}, {}",
        artifacts.runs_csv.display(),
        artifacts.timing_csv.display(),
        artifacts.summary_csv.display(),
        artifacts.meta_json.display()
    );
    Ok(())
}

fn inspect_cmd(args: InspectArgs) -> anyhow::Result<()> {
    let mut did_something = false;
    if let Some(path) = &args.atlas {
        let file = AtlasFile::load(path)?;
        println!("atlas {}:", path.display());
        println!("  schema      {}", file.schema);
        println!("  dimension   {}", file.dimension);
        println!("  components  {}", file.roadmap.node_count());
        println!("  edges       {}", file.roadmap.edge_count());
        println!("  connected   {}", file.roadmap.is_connected());
        println!(
            "  built from  seed={} n_pairs={} tau_edge={} (fit k={})",
            file.meta.seed, file.meta.n_pairs, file.meta.tau_edge, file.meta.gmm_k
        );
        did_something = true;
    }
    if let Some(path) = &args.problem {
        let p = Problem::load(path)?;
        println!("problem {} ({}):", p.name, path.display());
        if let Some(c) = p.category {
            println!("  category    {}", c);
        }
        println!("  dimension   {}", p.dimension());
        println!("  foliations  {}", p.foliations.len());
        for f in p.foliations.iter() {
            println!(
                "    [{}] {:<18} {} leaves, sigma={:.3}",
                f.id,
                f.name,
                f.co_params.len(),
                f.effective_sigma()
            );
        }
        println!("  witnesses   {}", p.witnesses.len());
        println!(
            "  robot/object obstacles: {}/{}",
            p.environment.robot_obstacles.len(),
            p.environment.object_obstacles.len()
        );
        println!("  start leaf  {}   goal leaf {}", p.start.leaf, p.goal.leaf);
        did_something = true;
    }
    if let Some(path) = &args.map {
        let map = FoliatedRepMap::load(path)?;
        println!("experience map {}:", path.display());
        println!("  nodes            {}", map.node_count());
        println!("  leaves           {}", map.leaf_count());
        println!("  intra edges      {}", map.intra_edge_count());
        println!("  stitch edges     {}", map.intersection_edge_count());
        println!("  ingested samples {}", map.samples_ingested());
        println!("  count mass       {}", map.total_count_mass());
        did_something = true;
    }
    if !did_something {
        bail!("nothing to inspect; pass --atlas, --problem or --map");
    }
    Ok(())
}
