//! Exploration phase: observe, ask the backend for an action, execute it,
//! and merge what was seen into the scene graph until the budget runs out,
//! coverage is sufficient, or the backend stops.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, DecisionBackend, DecisionContext, Phase};
use crate::pathfind;
use crate::plan::ConstraintSet;
use crate::scenegraph::{CoverageReport, KnownKind, SceneGraph, SceneGraphDelta, DEFAULT_VOID_THRESHOLD};
use crate::world::{Action, GridWorld, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    MaxSteps(u64),
    WallClock(Duration),
}

impl Default for Budget {
    fn default() -> Self {
        Budget::WallClock(Duration::from_secs(3600))
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationConfig {
    pub budget: Budget,
    pub fov_deg: f64,
    pub range_cells: u32,
    pub void_threshold: usize,
    pub constraints: ConstraintSet,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            budget: Budget::default(),
            fov_deg: 90.0,
            range_cells: 12,
            void_threshold: DEFAULT_VOID_THRESHOLD,
            constraints: ConstraintSet::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    BudgetExhausted,
    CoverageSufficient,
    BackendStopped,
}

#[derive(Debug, Clone)]
pub struct ExplorationResult {
    pub graph: SceneGraph,
    pub steps_taken: u64,
    pub termination: Termination,
    pub backend_calls: u64,
    pub final_pose: Pose,
}

/// The persisted accounting that accompanies the scene graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSummary {
    pub steps_taken: u64,
    pub termination: Termination,
    pub backend_calls: u64,
    pub final_pose: Pose,
    pub known_cells: usize,
    pub merge_conflicts: u64,
    pub coverage: CoverageReport,
}

impl ExplorationResult {
    pub fn summary(&self, void_threshold: usize) -> ExplorationSummary {
        ExplorationSummary {
            steps_taken: self.steps_taken,
            termination: self.termination,
            backend_calls: self.backend_calls,
            final_pose: self.final_pose,
            known_cells: self.graph.known_count(),
            merge_conflicts: self.graph.conflicts(),
            coverage: self.graph.coverage(void_threshold),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("start pose {0} is not on a free cell")]
    InvalidStart(Pose),
    #[error("backend failed after {} steps: {source}", partial.steps_taken)]
    Backend {
        #[source]
        source: BackendError,
        /// Exploration state up to the failing call; the caller may resume from it.
        partial: Box<ExplorationResult>,
    },
}

pub fn explore(
    world: &GridWorld,
    start: Pose,
    backend: &mut dyn DecisionBackend,
    cfg: &ExplorationConfig,
) -> Result<ExplorationResult, ExploreError> {
    if !world.is_valid_pose(start) {
        return Err(ExploreError::InvalidStart(start));
    }
    let started = Instant::now();
    let budget_left = |steps: u64| match cfg.budget {
        Budget::MaxSteps(max) => steps < max,
        Budget::WallClock(limit) => started.elapsed() < limit,
    };

    let mut graph = SceneGraph::empty(world, start);
    let mut pose = start;
    let mut steps = 0u64;
    let mut obs = world.observe(pose, cfg.fov_deg, cfg.range_cells, 0);
    graph.merge(&SceneGraphDelta::from_observation(&obs));

    let finish = |graph: SceneGraph, steps: u64, termination: Termination, pose: Pose| ExplorationResult {
        graph,
        steps_taken: steps,
        termination,
        backend_calls: steps,
        final_pose: pose,
    };

    while budget_left(steps) {
        if graph.coverage(cfg.void_threshold).sufficient {
            return Ok(finish(graph, steps, Termination::CoverageSufficient, pose));
        }
        let ctx = DecisionContext::new(Phase::Exploration, &cfg.constraints, &obs, &graph).with_range(cfg.range_cells);
        let decision = backend.decide(&ctx);
        steps += 1;
        let action = match decision {
            Ok(a) => a,
            Err(BackendError::UnparseableAction(reply)) => {
                log::warn!("unparseable exploration reply treated as stop: {reply:?}");
                Action::Stop
            }
            Err(source) => {
                return Err(ExploreError::Backend {
                    source,
                    partial: Box::new(finish(graph, steps - 1, Termination::BudgetExhausted, pose)),
                })
            }
        };
        if action == Action::Stop {
            return Ok(finish(graph, steps, Termination::BackendStopped, pose));
        }
        let (next, _) = world.step(pose, action);
        pose = next;
        obs = world.observe(pose, cfg.fov_deg, cfg.range_cells, steps);
        graph.merge(&SceneGraphDelta::from_observation(&obs));
        graph.push_pose(pose).expect("own cell is always observed");
    }
    Ok(finish(graph, steps, Termination::BudgetExhausted, pose))
}

/// Deterministic exploration policy: head for the nearest frontier and stop
/// when none is reachable.
///
/// A goal state is a navigable cell facing an unknown in-map neighbor. The
/// nearest one by (moves, turns) wins, ties going to the smallest `(y, x)`
/// cell; the first action follows the forward / left / right preference.
#[derive(Debug, Default, Clone)]
pub struct FrontierBackend;

pub fn frontier_backend() -> FrontierBackend {
    FrontierBackend
}

impl FrontierBackend {
    pub fn next_action(graph: &SceneGraph, pose: Pose) -> Action {
        let facing_unknown = |p: Pose| {
            let ahead = p.cell().offset(p.heading);
            graph.in_bounds(ahead) && graph.kind(ahead) == KnownKind::Unknown
        };
        pathfind::route(graph.width(), graph.height(), pose, |c| graph.is_navigable(c), facing_unknown)
            .and_then(|r| r.first_action)
            .unwrap_or(Action::Stop)
    }
}

impl DecisionBackend for FrontierBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError> {
        Ok(Self::next_action(ctx.graph, ctx.pose()))
    }

    fn name(&self) -> &str {
        "frontier"
    }
}
