use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use scenenav::backend::DecisionBackend;
use scenenav::cache::TrajectoryCache;
use scenenav::metrics::{episode_metrics, render_table, suite_metrics, EpisodeMetrics, SuiteMetrics};
use scenenav::pathfind::bfs_distances;
use scenenav::plan::{
    goal_cell, run_episode, Decomposer, Episode, EpisodeConfig, EpisodeRecord, FailureKind, Goal, OracleBackend,
    Outcome, PlanConfig, RuleDecomposer, TimingModel,
};
use scenenav::scenegraph::SceneGraph;
use scenenav::vlmclient::{VlmBackend, VlmClient, VlmDecomposer};
use scenenav::world::{GridWorld, Heading, Pose};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::{files, BackendKind, DecomposerKind, RunArgs, TimingKind};

/// Builds per-worker backends and decomposers.
struct Agents {
    backend: BackendKind,
    decomposer: DecomposerKind,
    client: Option<Arc<VlmClient>>,
}

impl Agents {
    fn backend(&self) -> Box<dyn DecisionBackend> {
        match self.backend {
            BackendKind::Vlm => Box::new(VlmBackend::new(self.client.clone().expect("client built for vlm"))),
            _ => Box::new(OracleBackend),
        }
    }

    fn decomposer(&self) -> Box<dyn Decomposer> {
        match self.decomposer {
            DecomposerKind::Vlm => Box::new(VlmDecomposer::new(self.client.clone().expect("client built for vlm"))),
            DecomposerKind::Rule => Box::new(RuleDecomposer),
        }
    }
}

/// Cell-goal episodes between graph-navigable cells that are connected in
/// the world.
pub fn random_episodes(world: &GridWorld, graph: &SceneGraph, n: usize, seed: u64) -> Vec<Episode> {
    let mut rng = StdRng::seed_from_u64(seed);
    let cells: Vec<_> = world.free_cells().filter(|c| graph.is_navigable(*c)).collect();
    let mut out = Vec::with_capacity(n);
    if cells.is_empty() {
        return out;
    }
    while out.len() < n {
        let start = *cells.choose(&mut rng).unwrap();
        let goal = *cells.choose(&mut rng).unwrap();
        let heading = Heading::ALL[rng.gen_range(0..4)];
        let dist = bfs_distances(world.width(), world.height(), start, |c| world.is_free(c));
        if dist[(goal.y * world.width() + goal.x) as usize].is_none() {
            continue;
        }
        out.push(Episode {
            id: format!("r{:04}", out.len()),
            start: Pose::at(start, heading),
            goal: Goal::Cell { x: goal.x, y: goal.y },
            instruction: format!("go to cell {} {}", goal.x, goal.y),
            constraints: vec![],
        });
    }
    out
}

fn run_suite(
    world: &GridWorld,
    graph: &SceneGraph,
    cache: Option<&RwLock<TrajectoryCache>>,
    agents: &Agents,
    episodes: &[Episode],
    cfg: &EpisodeConfig,
    jobs: usize,
) -> Result<Vec<EpisodeRecord>> {
    let slots: Vec<Mutex<Option<Result<EpisodeRecord>>>> = episodes.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, episodes.len().max(1)) {
            s.spawn(|| {
                let mut backend = agents.backend();
                let mut decomposer = agents.decomposer();
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(ep) = episodes.get(i) else { break };
                    let rec = run_episode(world, graph, cache, &mut *backend, &mut *decomposer, ep, cfg)
                        .map_err(|e| CliError::Validation(e.to_string()));
                    *slots[i].lock().unwrap() = Some(rec);
                }
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every episode ran")).collect()
}

#[derive(Serialize)]
struct Condition<'a> {
    name: &'a str,
    suite: &'a SuiteMetrics,
}

#[derive(Serialize)]
struct Report<'a> {
    backend: &'a str,
    goal_radius_m: f64,
    price_per_call_usd: f64,
    conditions: Vec<Condition<'a>>,
}

fn write_condition(dir: &Path, records: &[EpisodeRecord], metrics: &[EpisodeMetrics]) -> Result<()> {
    files::write_json(&dir.join("records.json"), &records)?;
    files::write_json(&dir.join("metrics.json"), &metrics)
}

fn open_cache(spec: Option<&str>) -> Result<Option<(Option<PathBuf>, TrajectoryCache)>> {
    match spec {
        None | Some("none") => Ok(None),
        Some(p) => {
            let path = PathBuf::from(p);
            let cache = if path.exists() {
                TrajectoryCache::load(&files::read_text(&path)?)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            } else {
                TrajectoryCache::new()
            };
            Ok(Some((Some(path), cache)))
        }
    }
}

pub fn run(args: &RunArgs) -> Result<()> {
    if args.backend == BackendKind::Frontier {
        return Err(CliError::Usage("the frontier backend only explores; use oracle or vlm".into()));
    }
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let world = files::load_world(&args.map, args.regions.as_deref())?;
    let graph = files::load_graph(&args.scenegraph)?;
    if (graph.width(), graph.height()) != (world.width(), world.height()) {
        return Err(CliError::Validation("scene graph and map sizes differ".into()));
    }
    let episodes = match (&args.episodes, args.random_episodes) {
        (Some(path), _) => files::parse_json::<Vec<Episode>>(path)?,
        (None, Some(n)) => random_episodes(&world, &graph, n, args.seed),
        (None, None) => unreachable!("clap requires one"),
    };
    if episodes.is_empty() {
        return Err(CliError::Validation("no episodes to run".into()));
    }
    let goals = episodes
        .iter()
        .map(|ep| goal_cell(&world, ep).map_err(|e| CliError::Validation(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let uses_vlm = args.backend == BackendKind::Vlm || args.decomposer == DecomposerKind::Vlm;
    let agents = Agents {
        backend: args.backend,
        decomposer: args.decomposer,
        client: if uses_vlm { Some(args.vlm.client()?) } else { None },
    };
    let cfg = EpisodeConfig {
        plan: PlanConfig { goal_radius_cells: args.goal_radius_m / world.cell_size_m(), ..Default::default() },
        fov_deg: args.fov_deg,
        max_steps: args.max_steps,
        timing: match args.timing {
            TimingKind::Modeled => TimingModel::default(),
            TimingKind::Wall => TimingModel::WallClock,
        },
    };
    let price = args.vlm.price_per_call;
    let measure = |records: &[EpisodeRecord]| -> Result<Vec<EpisodeMetrics>> {
        records
            .iter()
            .zip(&goals)
            .map(|(r, g)| {
                episode_metrics(r, &world, *g, args.goal_radius_m, price)
                    .map_err(|e| CliError::Validation(e.to_string()))
            })
            .collect()
    };

    let opened = open_cache(args.cache.as_deref())?;
    let path = opened.as_ref().and_then(|(p, _)| p.clone());
    let mut all_records = Vec::new();
    let mut names_suites: Vec<(&str, SuiteMetrics)> = Vec::new();
    let final_cache = if args.compare_cache {
        // Cold starts from nothing; warm reuses what cold stored.
        let cache = opened.map(|_| RwLock::new(TrajectoryCache::new()));
        let cold = run_suite(&world, &graph, cache.as_ref(), &agents, &episodes, &cfg, args.jobs)?;
        let cold_m = measure(&cold)?;
        let warm = run_suite(&world, &graph, cache.as_ref(), &agents, &episodes, &cfg, args.jobs)?;
        let warm_m = measure(&warm)?;
        write_condition(&args.out.join("cold"), &cold, &cold_m)?;
        write_condition(&args.out.join("warm"), &warm, &warm_m)?;
        let cold_s = suite_metrics(&cold_m, None).expect("non-empty");
        let warm_s = suite_metrics(&warm_m, Some(&cold_s)).expect("non-empty");
        names_suites.push(("cold", cold_s));
        names_suites.push(("warm", warm_s));
        all_records.extend(cold);
        all_records.extend(warm);
        cache
    } else {
        let cache = opened.map(|(_, c)| RwLock::new(c));
        let records = run_suite(&world, &graph, cache.as_ref(), &agents, &episodes, &cfg, args.jobs)?;
        let m = measure(&records)?;
        write_condition(&args.out, &records, &m)?;
        names_suites
            .push((if cache.is_some() { "cached" } else { "uncached" }, suite_metrics(&m, None).expect("non-empty")));
        all_records.extend(records);
        cache
    };

    let report = Report {
        backend: match args.backend {
            BackendKind::Vlm => "vlm",
            _ => "oracle",
        },
        goal_radius_m: args.goal_radius_m,
        price_per_call_usd: price,
        conditions: names_suites.iter().map(|(name, suite)| Condition { name, suite }).collect(),
    };
    files::write_json(&args.out.join("report.json"), &report)?;
    let rows: Vec<(&str, &SuiteMetrics)> = names_suites.iter().map(|(n, s)| (*n, s)).collect();
    let table = render_table(&rows);
    files::write(&args.out.join("report.txt"), &table)?;
    print!("{table}");

    if let (Some(path), Some(cache)) = (path, final_cache) {
        files::write(&path, cache.into_inner().unwrap().save())?;
    }
    let backend_failures =
        all_records.iter().filter(|r| matches!(r.outcome, Outcome::Failed { kind: FailureKind::Backend, .. })).count();
    if backend_failures > 0 {
        return Err(CliError::Backend(format!("{backend_failures} episode(s) ended on a backend error")));
    }
    Ok(())
}
