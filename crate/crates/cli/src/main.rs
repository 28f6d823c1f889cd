//! `scenenav` command-line front end: explore a map, run deployment suites,
//! render scene graphs and manage the trajectory cache.

mod cache_cmd;
mod error;
mod explore_cmd;
mod files;
mod run_cmd;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scenenav::vlmclient::{VlmClient, VlmConfig};
use scenenav::world::Pose;

use crate::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "scenenav", version, about = "Scene-graph exploration and cached deployment on grid maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore a map and write the scene graph.
    Explore(ExploreArgs),
    /// Run deployment episodes over an explored scene graph.
    Run(RunArgs),
    /// Render a scene graph (or a ground-truth map) as a PPM image.
    Render(RenderArgs),
    /// Inspect, validate or evict trajectory cache entries.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Frontier,
    Oracle,
    Vlm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimingKind {
    Modeled,
    Wall,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposerKind {
    Rule,
    Vlm,
}

#[derive(Args, Clone)]
pub struct VlmArgs {
    #[arg(long, default_value = "http://127.0.0.1:8000/v1/chat/completions")]
    vlm_endpoint: String,
    #[arg(long, default_value = "gpt-4.1")]
    vlm_model: String,
    #[arg(long, default_value_t = 60.0)]
    vlm_timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    vlm_retries: u32,
    /// Dollars charged per answered backend call.
    #[arg(long, default_value_t = 0.0)]
    price_per_call: f64,
}

impl VlmArgs {
    pub fn client(&self) -> Result<Arc<VlmClient>> {
        if self.vlm_timeout_secs.is_nan() || self.vlm_timeout_secs <= 0.0 {
            return Err(CliError::Usage("--vlm-timeout-secs must be positive".into()));
        }
        let mut cfg = VlmConfig::from_env(&self.vlm_endpoint, &self.vlm_model);
        cfg.timeout = Duration::from_secs_f64(self.vlm_timeout_secs);
        cfg.max_retries = self.vlm_retries;
        cfg.price_per_call_usd = self.price_per_call;
        VlmClient::new(cfg).map(Arc::new).map_err(|e| CliError::Backend(e.to_string()))
    }
}

#[derive(Args)]
pub struct ExploreArgs {
    #[arg(long)]
    map: PathBuf,
    /// Region and landmark sidecar; defaults to the map's `.json` sibling.
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "frontier")]
    backend: BackendKind,
    /// Start pose `x,y[,H]`; defaults to the map's `@` cell facing north.
    #[arg(long, value_parser = files::parse_pose)]
    start: Option<Pose>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, conflicts_with = "max_steps")]
    wall_clock_secs: Option<f64>,
    #[arg(long, default_value_t = 90.0)]
    fov_deg: f64,
    #[arg(long, default_value_t = 12)]
    range_cells: u32,
    #[arg(long, default_value_t = scenenav::scenegraph::DEFAULT_VOID_THRESHOLD)]
    void_threshold: usize,
    /// Extra constraint appended to the prompt; repeatable.
    #[arg(long = "constraint")]
    constraints: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    vlm: VlmArgs,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    scenegraph: PathBuf,
    /// Ground-truth map the agent moves in.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    regions: Option<PathBuf>,
    /// JSON array of episodes.
    #[arg(long, required_unless_present = "random_episodes", conflicts_with = "random_episodes")]
    episodes: Option<PathBuf>,
    /// Generate this many cell-goal episodes from `--seed` instead.
    #[arg(long)]
    random_episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    #[arg(long, value_enum, default_value = "rule")]
    decomposer: DecomposerKind,
    /// Cache file, or `none`. Without one caching is off.
    #[arg(long)]
    cache: Option<String>,
    /// Run the suite cold, then again warm, and report the reduction.
    #[arg(long)]
    compare_cache: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = scenenav::metrics::SUCCESS_RADIUS_M)]
    goal_radius_m: f64,
    #[arg(long, default_value_t = 1000)]
    max_steps: u64,
    #[arg(long, value_enum, default_value = "modeled")]
    timing: TimingKind,
    #[arg(long, default_value_t = 90.0)]
    fov_deg: f64,
    #[command(flatten)]
    vlm: VlmArgs,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long, required_unless_present = "map", conflicts_with = "map")]
    scenegraph: Option<PathBuf>,
    /// Render the fully known graph of a map.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Episode records file whose trajectory is drawn instead of the graph's.
    #[arg(long, requires = "episode")]
    records: Option<PathBuf>,
    #[arg(long)]
    episode: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
pub enum CacheCommand {
    /// List entries.
    Inspect {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Check every trajectory against a scene graph.
    Validate {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        scenegraph: PathBuf,
    },
    /// Remove entries and write the cache back.
    Evict {
        #[arg(long)]
        cache: PathBuf,
        /// Drop everything.
        #[arg(long, conflicts_with_all = ["keep", "prompt"])]
        all: bool,
        /// Keep at most this many entries, least recently used go first.
        #[arg(long, conflicts_with = "prompt")]
        keep: Option<usize>,
        /// Prompt of the entry; task tier unless `--location` is given.
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long, requires = "prompt", value_parser = files::parse_pose)]
        location: Option<Pose>,
    },
}

fn render(args: &RenderArgs) -> Result<()> {
    let graph = match (&args.scenegraph, &args.map) {
        (Some(path), _) => files::load_graph(path)?,
        (None, Some(map)) => {
            let world = files::load_world(map, args.regions.as_deref())?;
            let start = world.start_cell().map(|c| Pose::at(c, scenenav::world::Heading::North));
            let start =
                start.or_else(|| world.free_cells().next().map(|c| Pose::at(c, scenenav::world::Heading::North)));
            let start = start.ok_or_else(|| CliError::Validation(format!("{} has no free cell", map.display())))?;
            scenenav::scenegraph::SceneGraph::from_world(&world, start)
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let overlay = match (&args.records, &args.episode) {
        (Some(path), Some(id)) => {
            let records: Vec<scenenav::plan::EpisodeRecord> = files::parse_json(path)?;
            let rec = records
                .into_iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| CliError::Validation(format!("{}: no episode {id:?}", path.display())))?;
            Some(rec.trajectory)
        }
        _ => None,
    };
    files::write(&args.out, scenenav::scenegraph::render_ppm(&graph, overlay.as_deref()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Explore(args) => explore_cmd::run(args),
        Command::Run(args) => run_cmd::run(args),
        Command::Render(args) => render(args),
        Command::Cache { command } => cache_cmd::run(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scenenav: {e}");
            ExitCode::from(e.code())
        }
    }
}
