//! The decision backend: anything that maps (constraints, observation, scene
//! graph, task) to one of the four actions.

use std::cell::OnceCell;

use thiserror::Error;

use crate::plan::{ConstraintSet, Subtask, TaskPrompt};
use crate::scenegraph::{render_observation, render_ppm, SceneGraph};
use crate::world::{Action, Cell, Observation, Pose};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("reply contains no action phrase: {0:?}")]
    UnparseableAction(String),
    #[error("no path to {target} within known navigable cells")]
    NoPath { target: String },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy)]
pub enum Phase<'a> {
    Exploration,
    Deployment { task: &'a TaskPrompt, subtask: Option<&'a Subtask> },
}

/// Everything a backend may look at for one decision. The rendered images
/// are produced lazily so structural backends never pay for them.
pub struct DecisionContext<'a> {
    pub phase: Phase<'a>,
    pub constraints: &'a ConstraintSet,
    pub observation: &'a Observation,
    pub graph: &'a SceneGraph,
    /// Path drawn on the scene-graph image; `None` draws the graph's own.
    pub overlay: Option<&'a [Pose]>,
    pub goal_radius_cells: f64,
    pub range_cells: u32,
    graph_image: OnceCell<Vec<u8>>,
    fpv_image: OnceCell<Vec<u8>>,
}

impl<'a> DecisionContext<'a> {
    pub fn new(
        phase: Phase<'a>,
        constraints: &'a ConstraintSet,
        observation: &'a Observation,
        graph: &'a SceneGraph,
    ) -> Self {
        DecisionContext {
            phase,
            constraints,
            observation,
            graph,
            overlay: None,
            goal_radius_cells: 0.0,
            range_cells: 1,
            graph_image: OnceCell::new(),
            fpv_image: OnceCell::new(),
        }
    }

    pub fn with_overlay(mut self, overlay: &'a [Pose]) -> Self {
        self.overlay = Some(overlay);
        self
    }

    pub fn with_goal_radius(mut self, cells: f64) -> Self {
        self.goal_radius_cells = cells;
        self
    }

    pub fn with_range(mut self, range_cells: u32) -> Self {
        self.range_cells = range_cells;
        self
    }

    pub fn pose(&self) -> Pose {
        self.observation.pose
    }

    /// Scene graph as a PPM image with the path overlay.
    pub fn graph_image(&self) -> &[u8] {
        self.graph_image.get_or_init(|| render_ppm(self.graph, self.overlay))
    }

    /// First-person view as a PPM image.
    pub fn fpv_image(&self) -> &[u8] {
        self.fpv_image.get_or_init(|| render_observation(self.observation, self.range_cells))
    }

    /// Goal cells of the current subtask resolved against the graph.
    pub fn goal_cells(&self) -> Option<Vec<Cell>> {
        match self.phase {
            Phase::Deployment { subtask: Some(s), .. } => s.target.as_ref().map(|t| t.goal_cells(self.graph)),
            _ => None,
        }
    }
}

pub trait DecisionBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError>;

    fn name(&self) -> &str;
}

impl<B: DecisionBackend + ?Sized> DecisionBackend for &mut B {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError> {
        (**self).decide(ctx)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: DecisionBackend + ?Sized> DecisionBackend for Box<B> {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, BackendError> {
        (**self).decide(ctx)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
