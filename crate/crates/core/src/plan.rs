//! Deployment planning: task decomposition, the per-tick cache / backend
//! decision, and whole-episode execution.

use std::sync::RwLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, DecisionBackend, DecisionContext, Phase};
use crate::cache::{CacheError, CacheKey, Source, Trajectory, TrajectoryCache};
use crate::pathfind;
use crate::scenegraph::{KnownKind, SceneGraph};
use crate::world::{Action, Cell, GridWorld, Observation, Pose};

/// Success and subtask-completion radius in cells (3 m at 0.25 m per cell).
pub const GOAL_RADIUS_CELLS: f64 = 12.0;

/// How far, in Chebyshev cells, a subtask entry's start may be from the
/// agent and still be replayed.
pub const LOCATION_TOLERANCE: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct TaskPrompt {
    text: String,
    normalized: String,
}

impl TaskPrompt {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let normalized = normalize_prompt(&text);
        TaskPrompt { text, normalized }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }
}

impl From<String> for TaskPrompt {
    fn from(text: String) -> Self {
        TaskPrompt::new(text)
    }
}

impl From<TaskPrompt> for String {
    fn from(p: TaskPrompt) -> Self {
        p.text
    }
}

/// Lowercase, single spaces, no trailing punctuation.
pub fn normalize_prompt(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_owned()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    pub items: Vec<String>,
}

impl ConstraintSet {
    pub fn new<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        ConstraintSet { items: items.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubtaskKind {
    RoomToRoom,
    RoomToObject,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Region(String),
    Landmark(String),
    Cell(Cell),
}

impl Target {
    /// Cells the agent should get close to; empty when the id is unknown.
    pub fn goal_cells(&self, graph: &SceneGraph) -> Vec<Cell> {
        match self {
            Target::Landmark(id) => graph.landmarks().get(id).map(|l| vec![l.cell]).unwrap_or_default(),
            Target::Region(id) => {
                graph.regions().get(id).map(|r| r.cells.iter().copied().collect()).unwrap_or_default()
            }
            Target::Cell(c) => vec![*c],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub prompt: TaskPrompt,
    pub kind: SubtaskKind,
    pub target: Option<Target>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no scene graph match for: {}", clauses.join("; "))]
    UnresolvedTarget { clauses: Vec<String> },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub trait Decomposer {
    fn decompose(&mut self, task: &TaskPrompt, graph: &SceneGraph) -> Result<Vec<Subtask>, PlanError>;
}

impl<D: Decomposer + ?Sized> Decomposer for &mut D {
    fn decompose(&mut self, task: &TaskPrompt, graph: &SceneGraph) -> Result<Vec<Subtask>, PlanError> {
        (**self).decompose(task, graph)
    }
}

pub fn decompose(
    task: &TaskPrompt,
    graph: &SceneGraph,
    decomposer: &mut dyn Decomposer,
) -> Result<Vec<Subtask>, PlanError> {
    decomposer.decompose(task, graph)
}

/// Splits on "and then", "and return to" and "then", and resolves each
/// clause to the landmark or region whose name is the longest word-aligned
/// substring of it.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleDecomposer;

const CONNECTIVES: [&[&str]; 3] = [&["and", "return", "to"], &["and", "then"], &["then"]];

fn words(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_owned).collect()
}

pub fn split_clauses(text: &str) -> Vec<String> {
    let w = words(text);
    let mut clauses = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < w.len() {
        if let Some(c) =
            CONNECTIVES.iter().find(|c| w[i..].starts_with(&c.iter().map(|s| s.to_string()).collect::<Vec<_>>()))
        {
            if !current.is_empty() {
                clauses.push(current.join(" "));
                current.clear();
            }
            i += c.len();
            continue;
        }
        current.push(&w[i]);
        i += 1;
    }
    if !current.is_empty() {
        clauses.push(current.join(" "));
    }
    clauses
}

/// Best graph match for one clause: the target, its display name and kind.
pub fn resolve_clause(clause: &str, graph: &SceneGraph) -> Option<(Target, String, SubtaskKind)> {
    let hay = format!(" {} ", words(clause).join(" "));
    let mut best: Option<(usize, bool, Target, String)> = None;
    let mut consider = |alias: &str, landmark: bool, target: Target, name: &str| {
        let needle = words(alias).join(" ");
        if needle.is_empty() || !hay.contains(&format!(" {needle} ")) {
            return;
        }
        let better = match &best {
            None => true,
            Some((len, lm, _, _)) => (needle.len(), landmark) > (*len, *lm),
        };
        if better {
            best = Some((needle.len(), landmark, target, name.to_owned()));
        }
    };
    for (id, lm) in graph.landmarks() {
        consider(&lm.name, true, Target::Landmark(id.clone()), &lm.name);
        consider(&id.replace('_', " "), true, Target::Landmark(id.clone()), &lm.name);
    }
    for (id, region) in graph.regions() {
        consider(&region.name, false, Target::Region(id.clone()), &region.name);
    }
    best.map(|(_, landmark, target, name)| {
        let kind = if landmark { SubtaskKind::RoomToObject } else { SubtaskKind::RoomToRoom };
        (target, name, kind)
    })
}

impl Decomposer for RuleDecomposer {
    fn decompose(&mut self, task: &TaskPrompt, graph: &SceneGraph) -> Result<Vec<Subtask>, PlanError> {
        let mut out = Vec::new();
        let mut unresolved = Vec::new();
        for clause in split_clauses(task.text()) {
            match resolve_clause(&clause, graph) {
                Some((target, name, kind)) => {
                    // Canonical prompts let the same leg be reused across tasks.
                    out.push(Subtask {
                        prompt: TaskPrompt::new(format!("go to the {}", name.to_lowercase())),
                        kind,
                        target: Some(target),
                    });
                }
                None => unresolved.push(clause),
            }
        }
        if !unresolved.is_empty() || out.is_empty() {
            if unresolved.is_empty() {
                unresolved.push(task.text().to_owned());
            }
            return Err(PlanError::UnresolvedTarget { clauses: unresolved });
        }
        Ok(out)
    }
}

fn within(cell: Cell, goals: &[Cell], radius: f64) -> bool {
    let r2 = radius * radius + 1e-9;
    goals.iter().any(|g| g.dist_sq(cell) as f64 <= r2)
}

/// Shortest-path action over the graph's navigable cells toward any cell
/// within `radius` of a goal cell.
pub fn oracle_action(graph: &SceneGraph, pose: Pose, goals: &[Cell], radius: f64) -> Result<Action, BackendError> {
    if within(pose.cell(), goals, radius) {
        return Ok(Action::Stop);
    }
    let mut in_disk = vec![false; (graph.width() * graph.height()) as usize];
    let reach = radius.floor() as i32;
    for g in goals {
        for y in g.y - reach..=g.y + reach {
            for x in g.x - reach..=g.x + reach {
                let c = Cell::new(x, y);
                if graph.in_bounds(c) && within(c, &[*g], radius) {
                    in_disk[(y * graph.width() + x) as usize] = true;
                }
            }
        }
    }
    let w = graph.width();
    pathfind::route(
        graph.width(),
        graph.height(),
        pose,
        |c| graph.is_navigable(c),
        |p| in_disk[(p.y * w + p.x) as usize],
    )
    .and_then(|r| r.first_action)
    .ok_or_else(|| BackendError::NoPath {
        target: goals.first().map(|c| c.to_string()).unwrap_or_else(|| "<no goal cells>".into()),
    })
}

/// Deterministic stand-in for the model: breadth-first over the scene
/// graph toward the current subtask's goal disk.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleBackend;

impl DecisionBackend for OracleBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError> {
        let goals =
            ctx.goal_cells().ok_or_else(|| BackendError::Other("oracle needs a subtask with a target".into()))?;
        oracle_action(ctx.graph, ctx.pose(), &goals, ctx.goal_radius_cells)
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub task: u64,
    pub subtask: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanConfig {
    pub goal_radius_cells: f64,
    pub location_tolerance: u32,
    pub range_cells: u32,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { goal_radius_cells: GOAL_RADIUS_CELLS, location_tolerance: LOCATION_TOLERANCE, range_cells: 12 }
    }
}

#[derive(Debug, Clone)]
struct Replay {
    trajectory: Trajectory,
    cursor: usize,
}

impl Replay {
    fn new(trajectory: Trajectory) -> Self {
        Replay { trajectory, cursor: 0 }
    }

    /// Next action if `pose` lies on the rest of the trajectory.
    fn follow(&mut self, pose: Pose) -> Option<Action> {
        let i = self.trajectory.position(pose, self.cursor)?;
        let next = *self.trajectory.waypoints.get(i + 1)?;
        self.cursor = i + 1;
        Action::between(pose, next)
    }

    fn on_track(&self, pose: Pose) -> bool {
        self.trajectory.position(pose, self.cursor).is_some()
    }
}

enum Tick {
    Served(Action),
    Miss,
    Corrupt,
}

#[derive(Debug, Clone)]
pub struct PlanState {
    pub task: TaskPrompt,
    pub subtasks: Vec<Subtask>,
    pub current_subtask_index: usize,
    pub pose: Pose,
    pub executed: Vec<Pose>,
    pub backend_calls: u64,
    pub cache_hits: TierCounts,
    pub cache_corruptions: u64,
    task_replay: Option<Replay>,
    task_spent: bool,
    compose_tried: bool,
    subtask_replay: Option<Replay>,
    subtask_spent: bool,
    segment: Vec<Pose>,
    segment_used_backend: bool,
}

impl PlanState {
    pub fn new(task: TaskPrompt, subtasks: Vec<Subtask>, start: Pose) -> Self {
        PlanState {
            task,
            subtasks,
            current_subtask_index: 0,
            pose: start,
            executed: vec![start],
            backend_calls: 0,
            cache_hits: TierCounts::default(),
            cache_corruptions: 0,
            task_replay: None,
            task_spent: false,
            compose_tried: false,
            subtask_replay: None,
            subtask_spent: false,
            segment: vec![start],
            segment_used_backend: false,
        }
    }

    pub fn current_subtask(&self) -> Option<&Subtask> {
        self.subtasks.get(self.current_subtask_index)
    }

    pub fn is_done(&self) -> bool {
        self.current_subtask_index >= self.subtasks.len()
    }

    fn sync_pose(&mut self, pose: Pose) {
        self.pose = pose;
        if self.executed.last() != Some(&pose) {
            self.executed.push(pose);
        }
        if self.segment.last() != Some(&pose) {
            self.segment.push(pose);
        }
    }

    fn reached(&self, subtask: &Subtask, graph: &SceneGraph, radius: f64) -> bool {
        match &subtask.target {
            Some(t) => within(self.pose.cell(), &t.goal_cells(graph), radius),
            None => false,
        }
    }

    /// Closes the current subtask. Segments that needed the backend are
    /// stored at their start cell and merged into the task entry.
    fn finish_subtask(&mut self, cache: Option<&RwLock<TrajectoryCache>>) -> Result<(), PlanError> {
        if let (Some(cache), true) = (cache, self.segment_used_backend) {
            let fragment = Trajectory::new(self.segment.clone(), Source::Backend)
                .map_err(|source| CacheError::InvalidTrajectory { key: "<segment>".into(), source })?;
            let prompt = &self.subtasks[self.current_subtask_index].prompt;
            let mut guard = cache.write().unwrap_or_else(|e| e.into_inner());
            guard.store(CacheKey::subtask(prompt, fragment.start().cell()), fragment.clone())?;
            guard.merge_into_task(&self.task, fragment)?;
        }
        self.current_subtask_index += 1;
        self.segment = vec![self.pose];
        self.segment_used_backend = false;
        self.subtask_replay = None;
        self.subtask_spent = false;
        Ok(())
    }

    fn evict(&mut self, cache: &RwLock<TrajectoryCache>, key: &CacheKey, at: Pose) {
        log::warn!("cached trajectory {key} leaves the scene graph at {at}; evicting");
        cache.write().unwrap_or_else(|e| e.into_inner()).evict(key);
        self.cache_corruptions += 1;
    }

    fn task_tier(&mut self, graph: &SceneGraph, cache: &RwLock<TrajectoryCache>) -> Tick {
        if self.task_replay.is_none() && !self.task_spent {
            let found = cache.read().unwrap_or_else(|e| e.into_inner()).lookup_task(&self.task);
            if let Some(t) = found.filter(|t| t.position(self.pose, 0).is_some()) {
                if let Some(bad) = t.first_off_graph(graph) {
                    self.task_spent = true;
                    self.evict(cache, &CacheKey::task(&self.task), bad);
                    return Tick::Corrupt;
                }
                self.task_replay = Some(Replay::new(t));
            } else if !self.compose_tried {
                self.compose_tried = true;
                let rest = &self.subtasks[self.current_subtask_index..];
                let composed = cache.read().unwrap_or_else(|e| e.into_inner()).compose(rest, self.pose);
                if let Some(t) = composed.filter(|t| t.first_off_graph(graph).is_none()) {
                    self.task_replay = Some(Replay::new(t));
                }
            }
        }
        let Some(replay) = self.task_replay.as_mut() else { return Tick::Miss };
        match replay.follow(self.pose) {
            Some(a) => {
                match replay.trajectory.meta.source {
                    Source::Composed => self.cache_hits.subtask += 1,
                    _ => self.cache_hits.task += 1,
                }
                Tick::Served(a)
            }
            None => {
                self.task_replay = None;
                self.task_spent = true;
                Tick::Miss
            }
        }
    }

    fn subtask_tier(&mut self, graph: &SceneGraph, cache: &RwLock<TrajectoryCache>, cfg: &PlanConfig) -> Tick {
        let Some(subtask) = self.subtasks.get(self.current_subtask_index) else { return Tick::Miss };
        if self.subtask_replay.is_none() && !self.subtask_spent {
            let found = cache.read().unwrap_or_else(|e| e.into_inner()).lookup_subtask(
                &subtask.prompt,
                self.pose.cell(),
                cfg.location_tolerance,
            );
            if let Some(t) = found {
                if let Some(bad) = t.first_off_graph(graph) {
                    self.subtask_spent = true;
                    let key = CacheKey::subtask(&subtask.prompt, t.start().cell());
                    self.evict(cache, &key, bad);
                    return Tick::Corrupt;
                }
                self.subtask_replay = Some(Replay::new(t));
            }
        }
        let Some(replay) = self.subtask_replay.as_mut() else { return Tick::Miss };
        let action = if replay.on_track(self.pose) {
            replay.follow(self.pose)
        } else {
            // Off the stored path: take the shortest way onto its remainder.
            let rest = &replay.trajectory.waypoints[replay.cursor..];
            pathfind::route(graph.width(), graph.height(), self.pose, |c| graph.is_navigable(c), |p| rest.contains(&p))
                .and_then(|r| r.first_action)
        };
        match action {
            Some(a) => {
                self.cache_hits.subtask += 1;
                Tick::Served(a)
            }
            None => {
                self.subtask_replay = None;
                self.subtask_spent = true;
                Tick::Miss
            }
        }
    }

    fn ask_backend(
        &mut self,
        graph: &SceneGraph,
        backend: &mut dyn DecisionBackend,
        constraints: &ConstraintSet,
        obs: &Observation,
        cfg: &PlanConfig,
    ) -> Result<Action, BackendError> {
        let ctx = DecisionContext::new(
            Phase::Deployment { task: &self.task, subtask: self.subtasks.get(self.current_subtask_index) },
            constraints,
            obs,
            graph,
        )
        .with_overlay(&self.executed)
        .with_goal_radius(cfg.goal_radius_cells)
        .with_range(cfg.range_cells);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.backend_calls += 1;
            match backend.decide(&ctx) {
                Err(BackendError::UnparseableAction(reply)) if attempt == 1 => {
                    log::warn!("unparseable reply {reply:?}; asking again");
                }
                other => return other,
            }
        }
    }
}

/// One deployment tick: task-tier cache, then subtask-tier cache, then the
/// backend. Subtasks whose goal is within the radius are closed first; when
/// none remain the agent stops.
pub fn plan_step(
    state: &mut PlanState,
    graph: &SceneGraph,
    cache: Option<&RwLock<TrajectoryCache>>,
    backend: &mut dyn DecisionBackend,
    constraints: &ConstraintSet,
    obs: &Observation,
    cfg: &PlanConfig,
) -> Result<Action, PlanError> {
    state.sync_pose(obs.pose);
    loop {
        while let Some(s) = state.current_subtask() {
            if !state.reached(s, graph, cfg.goal_radius_cells) {
                break;
            }
            state.finish_subtask(cache)?;
        }
        if state.is_done() {
            return Ok(Action::Stop);
        }

        if let Some(cache) = cache {
            match state.task_tier(graph, cache) {
                Tick::Served(a) => return Ok(a),
                Tick::Corrupt => return fallback(state, graph, cache.into(), backend, constraints, obs, cfg),
                Tick::Miss => {}
            }
            match state.subtask_tier(graph, cache, cfg) {
                Tick::Served(a) => return Ok(a),
                Tick::Corrupt | Tick::Miss => {}
            }
        }

        let action = state.ask_backend(graph, backend, constraints, obs, cfg)?;
        if action == Action::Stop {
            // The backend considers this leg done even though the goal disk
            // was not reached.
            state.finish_subtask(cache)?;
            continue;
        }
        state.segment_used_backend = true;
        return Ok(veto_obstacle(graph, state.pose, action));
    }
}

fn fallback(
    state: &mut PlanState,
    graph: &SceneGraph,
    cache: Option<&RwLock<TrajectoryCache>>,
    backend: &mut dyn DecisionBackend,
    constraints: &ConstraintSet,
    obs: &Observation,
    cfg: &PlanConfig,
) -> Result<Action, PlanError> {
    let action = state.ask_backend(graph, backend, constraints, obs, cfg)?;
    if action == Action::Stop {
        state.finish_subtask(cache)?;
        return plan_step(state, graph, cache, backend, constraints, obs, cfg);
    }
    state.segment_used_backend = true;
    Ok(veto_obstacle(graph, state.pose, action))
}

/// A forward move into a known obstacle becomes a left turn.
fn veto_obstacle(graph: &SceneGraph, pose: Pose, action: Action) -> Action {
    let ahead = pose.cell().offset(pose.heading);
    if action == Action::MoveForward && (!graph.in_bounds(ahead) || graph.kind(ahead) == KnownKind::Obstacle) {
        log::warn!("backend proposed moving from {pose} into an obstacle; turning instead");
        return Action::TurnLeft;
    }
    action
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Goal {
    Landmark { landmark: String },
    Cell { x: i32, y: i32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub start: Pose,
    pub goal: Goal,
    pub instruction: String,
    #[serde(default)]
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingModel {
    /// Fixed seconds per backend call and per step; reproducible.
    Modeled {
        per_call_s: f64,
        per_step_s: f64,
    },
    WallClock,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel::Modeled { per_call_s: 2.0, per_step_s: 0.05 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig {
    pub plan: PlanConfig,
    pub fov_deg: f64,
    pub max_steps: u64,
    pub timing: TimingModel,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig { plan: PlanConfig::default(), fov_deg: 90.0, max_steps: 1000, timing: TimingModel::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Decomposition,
    NoPath,
    Backend,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Stopped,
    StepLimitExceeded,
    Failed { kind: FailureKind, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model: TimingModel,
    pub total_seconds: f64,
    pub avg_step_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub instruction: String,
    pub goal: Cell,
    pub subtasks: Vec<Subtask>,
    pub trajectory: Vec<Pose>,
    pub actions: Vec<Action>,
    pub outcome: Outcome,
    pub backend_calls: u64,
    pub cache_hits: TierCounts,
    pub cache_corruptions: u64,
    pub timing: Timing,
}

impl EpisodeRecord {
    pub fn stopped(&self) -> bool {
        self.outcome == Outcome::Stopped
    }

    pub fn final_pose(&self) -> Pose {
        *self.trajectory.last().expect("trajectory holds the start pose")
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("episode {id}: start pose {start} is not on a free cell")]
    InvalidStart { id: String, start: Pose },
    #[error("episode {id}: unknown goal landmark {landmark:?}")]
    UnknownLandmark { id: String, landmark: String },
    #[error("episode {id}: goal {goal} is outside the map")]
    GoalOutOfBounds { id: String, goal: Cell },
}

/// Resolves an episode goal to a ground-truth cell.
pub fn goal_cell(world: &GridWorld, episode: &Episode) -> Result<Cell, EpisodeError> {
    match &episode.goal {
        Goal::Cell { x, y } => {
            let goal = Cell::new(*x, *y);
            if !world.in_bounds(goal) {
                return Err(EpisodeError::GoalOutOfBounds { id: episode.id.clone(), goal });
            }
            Ok(goal)
        }
        Goal::Landmark { landmark } => world
            .landmarks()
            .get(landmark)
            .map(|l| l.cell)
            .ok_or_else(|| EpisodeError::UnknownLandmark { id: episode.id.clone(), landmark: landmark.clone() }),
    }
}

fn failure(e: &PlanError) -> Outcome {
    let kind = match e {
        PlanError::UnresolvedTarget { .. } => FailureKind::Decomposition,
        PlanError::Backend(BackendError::NoPath { .. }) => FailureKind::NoPath,
        PlanError::Backend(_) => FailureKind::Backend,
        PlanError::Cache(_) => FailureKind::Cache,
    };
    Outcome::Failed { kind, message: e.to_string() }
}

/// Runs one deployment episode to Stop, failure, or the step limit. The
/// scene graph is read-only; the cache, when given, is shared.
pub fn run_episode(
    world: &GridWorld,
    graph: &SceneGraph,
    cache: Option<&RwLock<TrajectoryCache>>,
    backend: &mut dyn DecisionBackend,
    decomposer: &mut dyn Decomposer,
    episode: &Episode,
    cfg: &EpisodeConfig,
) -> Result<EpisodeRecord, EpisodeError> {
    if !world.is_valid_pose(episode.start) {
        return Err(EpisodeError::InvalidStart { id: episode.id.clone(), start: episode.start });
    }
    let goal = goal_cell(world, episode)?;
    let started = Instant::now();
    let task = TaskPrompt::new(episode.instruction.clone());
    let constraints = ConstraintSet::new(episode.constraints.iter().cloned());

    let subtasks = match &episode.goal {
        Goal::Cell { .. } => {
            Ok(vec![Subtask { prompt: task.clone(), kind: SubtaskKind::Other, target: Some(Target::Cell(goal)) }])
        }
        Goal::Landmark { .. } => decompose(&task, graph, decomposer),
    };

    let mut pose = episode.start;
    let mut trajectory = vec![pose];
    let mut actions = Vec::new();
    let mut state = PlanState::new(task, subtasks.as_ref().cloned().unwrap_or_default(), pose);
    let outcome = match subtasks {
        Err(e) => failure(&e),
        Ok(_) => loop {
            if actions.len() as u64 >= cfg.max_steps {
                break Outcome::StepLimitExceeded;
            }
            let obs = world.observe(pose, cfg.fov_deg, cfg.plan.range_cells, actions.len() as u64);
            match plan_step(&mut state, graph, cache, backend, &constraints, &obs, &cfg.plan) {
                Ok(Action::Stop) => {
                    actions.push(Action::Stop);
                    break Outcome::Stopped;
                }
                Ok(a) => {
                    actions.push(a);
                    pose = world.step(pose, a).0;
                    if trajectory.last() != Some(&pose) {
                        trajectory.push(pose);
                    }
                }
                Err(e) => break failure(&e),
            }
        },
    };

    let steps = actions.len() as u64;
    let total_seconds = match cfg.timing {
        TimingModel::Modeled { per_call_s, per_step_s } => {
            state.backend_calls as f64 * per_call_s + steps as f64 * per_step_s
        }
        TimingModel::WallClock => started.elapsed().as_secs_f64(),
    };
    Ok(EpisodeRecord {
        id: episode.id.clone(),
        instruction: episode.instruction.clone(),
        goal,
        subtasks: state.subtasks.clone(),
        trajectory,
        actions,
        outcome,
        backend_calls: state.backend_calls,
        cache_hits: state.cache_hits,
        cache_corruptions: state.cache_corruptions,
        timing: Timing { model: cfg.timing, total_seconds, avg_step_seconds: total_seconds / steps.max(1) as f64 },
    })
}
