//! Hierarchical trajectory cache.
//!
//! Two keyed tiers: whole tasks (prompt only) and subtasks at a location
//! (prompt plus start cell). Fragments are subtask entries. Lookups take
//! `&self` and update statistics atomically, so a `RwLock<TrajectoryCache>`
//! gives concurrent readers with exclusive writers.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Subtask, TaskPrompt};
use crate::scenegraph::SceneGraph;
use crate::world::{Action, Cell, Heading, Pose};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid trajectory: {0}")]
pub struct InvalidTrajectory(pub String);

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache parse error: {0}")]
    Parse(String),
    #[error("entry {key}: {source}")]
    InvalidTrajectory {
        key: String,
        #[source]
        source: InvalidTrajectory,
    },
    #[error("bad cache key {0}: location must be set exactly for subtask entries")]
    InvalidKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Task,
    SubtaskAtLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub tier: Tier,
    /// Normalized prompt text.
    pub prompt: String,
    pub location: Option<Cell>,
}

impl CacheKey {
    pub fn task(prompt: &TaskPrompt) -> Self {
        CacheKey { tier: Tier::Task, prompt: prompt.normalized().to_owned(), location: None }
    }

    pub fn subtask(prompt: &TaskPrompt, location: Cell) -> Self {
        CacheKey { tier: Tier::SubtaskAtLocation, prompt: prompt.normalized().to_owned(), location: Some(location) }
    }

    fn is_consistent(&self) -> bool {
        (self.tier == Tier::SubtaskAtLocation) == self.location.is_some()
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.tier, self.location) {
            (Tier::Task, _) => write!(f, "task {:?}", self.prompt),
            (Tier::SubtaskAtLocation, Some(at)) => write!(f, "subtask {:?} at {at}", self.prompt),
            (Tier::SubtaskAtLocation, None) => write!(f, "subtask {:?} at ?", self.prompt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Backend,
    Composed,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// Cache clock value at insertion.
    pub created_at: u64,
    pub source: Source,
}

/// Executable pose sequence: every consecutive pair differs by exactly one
/// rotation or one forward move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub waypoints: Vec<Pose>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Pose>, source: Source) -> Result<Self, InvalidTrajectory> {
        let t = Trajectory { waypoints, meta: TrajectoryMeta { created_at: 0, source } };
        t.validate()?;
        Ok(t)
    }

    /// Trajectory produced by applying `actions` from `start`, ignoring
    /// collisions. `Stop` actions are skipped.
    pub fn from_actions(start: Pose, actions: &[Action], source: Source) -> Self {
        let mut waypoints = vec![start];
        for a in actions.iter().filter(|a| **a != Action::Stop) {
            waypoints.push(a.apply(*waypoints.last().unwrap()));
        }
        Trajectory { waypoints, meta: TrajectoryMeta { created_at: 0, source } }
    }

    pub fn validate(&self) -> Result<(), InvalidTrajectory> {
        if self.waypoints.is_empty() {
            return Err(InvalidTrajectory("no waypoints".into()));
        }
        for (i, w) in self.waypoints.windows(2).enumerate() {
            if Action::between(w[0], w[1]).is_none() {
                return Err(InvalidTrajectory(format!(
                    "waypoint {} {} does not follow {} by one action",
                    i + 1,
                    w[1],
                    w[0]
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Pose {
        self.waypoints[0]
    }

    pub fn end(&self) -> Pose {
        self.waypoints[self.waypoints.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.waypoints.windows(2).filter_map(|w| Action::between(w[0], w[1])).collect()
    }

    pub fn moves(&self) -> usize {
        self.actions().iter().filter(|a| **a == Action::MoveForward).count()
    }

    /// First waypoint whose cell is not navigable in `graph`.
    pub fn first_off_graph(&self, graph: &SceneGraph) -> Option<Pose> {
        self.waypoints.iter().copied().find(|p| !graph.is_navigable(p.cell()))
    }

    /// Index of `pose` at or after `from`.
    pub fn position(&self, pose: Pose, from: usize) -> Option<usize> {
        self.waypoints.iter().skip(from).position(|w| *w == pose).map(|i| i + from)
    }
}

/// In-place rotations from `from` to `to`; a half turn is two left turns.
pub fn rotations(from: Heading, to: Heading) -> Vec<Action> {
    match (to.index() + 4 - from.index()) % 4 {
        0 => vec![],
        1 => vec![Action::TurnRight],
        2 => vec![Action::TurnLeft, Action::TurnLeft],
        _ => vec![Action::TurnLeft],
    }
}

/// `head` followed by `tail`, bridged by rotations. `None` if `tail` does
/// not start on the cell where `head` ends.
fn join(head: &[Pose], tail: &[Pose]) -> Option<Vec<Pose>> {
    let last = *head.last()?;
    let first = *tail.first()?;
    if last.cell() != first.cell() {
        return None;
    }
    let mut out = head.to_vec();
    for a in rotations(last.heading, first.heading) {
        out.push(a.apply(*out.last().unwrap()));
    }
    out.extend_from_slice(&tail[1..]);
    Some(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub task_hits: u64,
    pub task_misses: u64,
    pub subtask_hits: u64,
    pub subtask_misses: u64,
    pub insertions: u64,
    pub evictions: u64,
    pub discontinuities: u64,
}

#[derive(Debug, Default)]
struct AtomicStats {
    task_hits: AtomicU64,
    task_misses: AtomicU64,
    subtask_hits: AtomicU64,
    subtask_misses: AtomicU64,
    insertions: AtomicU64,
    evictions: AtomicU64,
    discontinuities: AtomicU64,
}

impl AtomicStats {
    fn snapshot(&self) -> CacheStats {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CacheStats {
            task_hits: get(&self.task_hits),
            task_misses: get(&self.task_misses),
            subtask_hits: get(&self.subtask_hits),
            subtask_misses: get(&self.subtask_misses),
            insertions: get(&self.insertions),
            evictions: get(&self.evictions),
            discontinuities: get(&self.discontinuities),
        }
    }

    fn from_snapshot(s: CacheStats) -> Self {
        AtomicStats {
            task_hits: s.task_hits.into(),
            task_misses: s.task_misses.into(),
            subtask_hits: s.subtask_hits.into(),
            subtask_misses: s.subtask_misses.into(),
            insertions: s.insertions.into(),
            evictions: s.evictions.into(),
            discontinuities: s.discontinuities.into(),
        }
    }

    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug)]
struct Entry {
    trajectory: Trajectory,
    last_hit: AtomicU64,
}

impl Entry {
    fn recency(&self) -> u64 {
        self.trajectory.meta.created_at.max(self.last_hit.load(Ordering::Relaxed))
    }
}

#[derive(Debug, Default)]
pub struct TrajectoryCache {
    entries: BTreeMap<CacheKey, Entry>,
    capacity: Option<usize>,
    clock: AtomicU64,
    stats: AtomicStats,
}

impl Clone for TrajectoryCache {
    fn clone(&self) -> Self {
        TrajectoryCache {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    let entry =
                        Entry { trajectory: e.trajectory.clone(), last_hit: e.last_hit.load(Ordering::Relaxed).into() };
                    (k.clone(), entry)
                })
                .collect(),
            capacity: self.capacity,
            clock: self.clock.load(Ordering::Relaxed).into(),
            stats: AtomicStats::from_snapshot(self.stats.snapshot()),
        }
    }
}

impl TrajectoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        TrajectoryCache { capacity: Some(capacity), ..Self::default() }
    }

    pub fn set_capacity(&mut self, capacity: Option<usize>) {
        self.capacity = capacity;
        self.enforce_capacity();
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats.snapshot()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CacheKey, &Trajectory)> {
        self.entries.iter().map(|(k, e)| (k, &e.trajectory))
    }

    pub fn get(&self, key: &CacheKey) -> Option<&Trajectory> {
        self.entries.get(key).map(|e| &e.trajectory)
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    fn hit(&self, entry: &Entry) -> Trajectory {
        entry.last_hit.store(self.tick(), Ordering::Relaxed);
        entry.trajectory.clone()
    }

    pub fn lookup_task(&self, task: &TaskPrompt) -> Option<Trajectory> {
        match self.entries.get(&CacheKey::task(task)) {
            Some(e) => {
                AtomicStats::bump(&self.stats.task_hits);
                Some(self.hit(e))
            }
            None => {
                AtomicStats::bump(&self.stats.task_misses);
                None
            }
        }
    }

    fn find_subtask(&self, prompt: &TaskPrompt, location: Cell, tolerance: u32) -> Option<&Entry> {
        self.entries
            .iter()
            .filter(|(k, _)| k.tier == Tier::SubtaskAtLocation && k.prompt == prompt.normalized())
            .map(|(_, e)| (e.trajectory.start().cell().chebyshev(location), e))
            .filter(|(d, _)| *d <= tolerance as i32)
            .min_by_key(|(d, e)| (*d, e.trajectory.meta.created_at))
            .map(|(_, e)| e)
    }

    /// Subtask entry with a matching prompt whose trajectory starts within
    /// Chebyshev distance `tolerance` of `location`. The nearest start wins,
    /// then the earliest insertion.
    pub fn lookup_subtask(&self, prompt: &TaskPrompt, location: Cell, tolerance: u32) -> Option<Trajectory> {
        match self.find_subtask(prompt, location, tolerance) {
            Some(e) => {
                AtomicStats::bump(&self.stats.subtask_hits);
                Some(self.hit(e))
            }
            None => {
                AtomicStats::bump(&self.stats.subtask_misses);
                None
            }
        }
    }

    pub fn store(&mut self, key: CacheKey, mut trajectory: Trajectory) -> Result<(), CacheError> {
        if !key.is_consistent() {
            return Err(CacheError::InvalidKey(key.to_string()));
        }
        trajectory.validate().map_err(|source| CacheError::InvalidTrajectory { key: key.to_string(), source })?;
        trajectory.meta.created_at = self.tick();
        self.entries.insert(key, Entry { trajectory, last_hit: 0.into() });
        AtomicStats::bump(&self.stats.insertions);
        self.enforce_capacity();
        Ok(())
    }

    fn enforce_capacity(&mut self) {
        let Some(cap) = self.capacity else { return };
        while self.entries.len() > cap {
            let victim = self
                .entries
                .iter()
                .min_by_key(|(k, e)| (k.tier != Tier::SubtaskAtLocation, e.recency()))
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            self.entries.remove(&victim);
            AtomicStats::bump(&self.stats.evictions);
        }
    }

    pub fn evict(&mut self, key: &CacheKey) -> bool {
        let removed = self.entries.remove(key).is_some();
        if removed {
            AtomicStats::bump(&self.stats.evictions);
        }
        removed
    }

    /// Evicts least-recently-hit entries, subtask tier first, until at most
    /// `keep` remain. Returns the number evicted.
    pub fn evict_to(&mut self, keep: usize) -> usize {
        let before = self.entries.len();
        let saved = self.capacity;
        self.capacity = Some(keep);
        self.enforce_capacity();
        self.capacity = saved;
        before - self.entries.len()
    }

    /// Keys whose trajectories leave the navigable cells of `graph`.
    pub fn invalid_against(&self, graph: &SceneGraph) -> Vec<(CacheKey, Pose)> {
        self.entries.iter().filter_map(|(k, e)| e.trajectory.first_off_graph(graph).map(|p| (k.clone(), p))).collect()
    }

    /// Appends `trajectory` to the task entry when it starts on the entry's
    /// final cell, otherwise replaces the entry and counts a discontinuity.
    pub fn merge_into_task(&mut self, task: &TaskPrompt, trajectory: Trajectory) -> Result<(), CacheError> {
        let key = CacheKey::task(task);
        let merged = match self.entries.get(&key) {
            None => trajectory,
            Some(existing) => match join(&existing.trajectory.waypoints, &trajectory.waypoints) {
                Some(waypoints) => {
                    Trajectory { waypoints, meta: TrajectoryMeta { created_at: 0, source: Source::Merged } }
                }
                None => {
                    AtomicStats::bump(&self.stats.discontinuities);
                    trajectory
                }
            },
        };
        self.store(key, merged)
    }

    /// Chains subtask entries end to start, beginning exactly at `start`'s
    /// cell. All or nothing.
    pub fn compose(&self, subtasks: &[Subtask], start: Pose) -> Option<Trajectory> {
        let mut chain = vec![start];
        for s in subtasks {
            let end = *chain.last().unwrap();
            let fragment = self.lookup_subtask(&s.prompt, end.cell(), 0)?;
            chain = join(&chain, &fragment.waypoints)?;
        }
        Some(Trajectory { waypoints: chain, meta: TrajectoryMeta { created_at: 0, source: Source::Composed } })
    }
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    tier: Tier,
    prompt: String,
    location: Option<[i32; 2]>,
    waypoints: Vec<(i32, i32, Heading)>,
    meta: TrajectoryMeta,
    #[serde(default)]
    last_hit: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    entries: Vec<EntryFile>,
    stats: CacheStats,
}

impl TrajectoryCache {
    pub fn save(&self) -> String {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| EntryFile {
                tier: k.tier,
                prompt: k.prompt.clone(),
                location: k.location.map(|c| [c.x, c.y]),
                waypoints: e.trajectory.waypoints.iter().map(|p| (p.x, p.y, p.heading)).collect(),
                meta: e.trajectory.meta,
                last_hit: e.last_hit.load(Ordering::Relaxed),
            })
            .collect();
        let file = CacheFile { version: 1, entries, stats: self.stats() };
        serde_json::to_string_pretty(&file).expect("cache serializes")
    }

    pub fn load(text: &str) -> Result<Self, CacheError> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| CacheError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(CacheError::Parse(format!("unsupported cache version {}", file.version)));
        }
        let mut cache = TrajectoryCache { stats: AtomicStats::from_snapshot(file.stats), ..Self::default() };
        let mut clock = 0;
        for e in file.entries {
            let key = CacheKey { tier: e.tier, prompt: e.prompt, location: e.location.map(|[x, y]| Cell::new(x, y)) };
            if !key.is_consistent() {
                return Err(CacheError::InvalidKey(key.to_string()));
            }
            let trajectory = Trajectory {
                waypoints: e.waypoints.into_iter().map(|(x, y, h)| Pose::new(x, y, h)).collect(),
                meta: e.meta,
            };
            trajectory.validate().map_err(|source| CacheError::InvalidTrajectory { key: key.to_string(), source })?;
            clock = clock.max(e.meta.created_at).max(e.last_hit);
            if cache.entries.insert(key.clone(), Entry { trajectory, last_hit: e.last_hit.into() }).is_some() {
                return Err(CacheError::Parse(format!("duplicate entry {key}")));
            }
        }
        cache.clock = clock.into();
        Ok(cache)
    }
}
