//! The top-down scene graph: a labeled occupancy grid with semantic regions,
//! landmarks, and the agent's path.

mod coverage;
mod persist;
mod render;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Cell, CellKind, GridWorld, LandmarkSighting, Observation, Pose, RegionRef};

pub use coverage::{CoverageReport, InteriorVoid, DEFAULT_VOID_THRESHOLD};
pub use render::{polyline_vertices, render_observation, render_ppm, PIXELS_PER_CELL};

#[derive(Debug, Error)]
pub enum SceneGraphError {
    #[error("cell {cell} assigned to both region {first:?} and {second:?}")]
    Conflict { cell: Cell, first: String, second: String },
    #[error("pose {0} is not on a navigable cell")]
    OffGraph(Pose),
    #[error("scene graph parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnownKind {
    Unknown,
    Navigable,
    Obstacle,
}

impl KnownKind {
    pub fn glyph(self) -> char {
        match self {
            KnownKind::Unknown => 'U',
            KnownKind::Navigable => 'N',
            KnownKind::Obstacle => 'O',
        }
    }
}

impl From<CellKind> for KnownKind {
    fn from(kind: CellKind) -> Self {
        match kind {
            CellKind::Free => KnownKind::Navigable,
            CellKind::Obstacle => KnownKind::Obstacle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub cells: BTreeSet<Cell>,
}

impl Region {
    /// 4-connected patches of this region, ordered by their smallest cell.
    pub fn patches(&self) -> Vec<BTreeSet<Cell>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &seed in &self.cells {
            if !seen.insert(seed) {
                continue;
            }
            let mut patch = BTreeSet::from([seed]);
            let mut queue = VecDeque::from([seed]);
            while let Some(c) = queue.pop_front() {
                for n in c.neighbors4() {
                    if self.cells.contains(&n) && seen.insert(n) {
                        patch.insert(n);
                        queue.push_back(n);
                    }
                }
            }
            out.push(patch);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphLandmark {
    pub cell: Cell,
    pub name: String,
}

/// Partial update derived from one observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGraphDelta {
    pub observed: BTreeMap<Cell, KnownKind>,
    pub region_hints: BTreeMap<Cell, RegionRef>,
    pub landmark_hints: BTreeSet<LandmarkSighting>,
}

impl SceneGraphDelta {
    pub fn from_observation(obs: &Observation) -> Self {
        let mut delta = SceneGraphDelta::default();
        for v in &obs.visible_cells {
            delta.observed.insert(v.cell, v.kind.into());
            if let (CellKind::Free, Some(region)) = (v.kind, &v.region) {
                delta.region_hints.insert(v.cell, region.clone());
            }
        }
        delta.landmark_hints = obs.visible_landmarks.clone();
        delta
    }
}

/// Region and landmark hints handed to [`SceneGraph::label_regions`].
#[derive(Debug, Clone, Default)]
pub struct LabelHints {
    pub regions: Vec<(Cell, RegionRef)>,
    pub landmarks: Vec<LandmarkSighting>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub newly_known: usize,
    pub conflicts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    width: i32,
    height: i32,
    cell_size_m: f64,
    knowledge: Vec<KnownKind>,
    regions: BTreeMap<String, Region>,
    landmarks: BTreeMap<String, GraphLandmark>,
    trajectory: Vec<Pose>,
    start: Pose,
    conflicts: u64,
}

impl SceneGraph {
    /// An all-unknown graph in the frame of `world`.
    pub fn empty(world: &GridWorld, start: Pose) -> Self {
        Self::blank(world.width(), world.height(), world.cell_size_m(), start)
    }

    pub fn blank(width: i32, height: i32, cell_size_m: f64, start: Pose) -> Self {
        SceneGraph {
            width,
            height,
            cell_size_m,
            knowledge: vec![KnownKind::Unknown; (width.max(0) * height.max(0)) as usize],
            regions: BTreeMap::new(),
            landmarks: BTreeMap::new(),
            trajectory: Vec::new(),
            start,
            conflicts: 0,
        }
    }

    /// Complete ground-truth graph, as if exploration had seen every cell.
    pub fn from_world(world: &GridWorld, start: Pose) -> Self {
        let mut g = Self::empty(world, start);
        for cell in world.cells() {
            let kind = world.kind(cell).map(KnownKind::from).unwrap_or(KnownKind::Unknown);
            g.set(cell, kind);
            if let Some(region) = world.region_of(cell) {
                g.regions
                    .entry(region.id)
                    .or_insert_with(|| Region { name: region.name, cells: BTreeSet::new() })
                    .cells
                    .insert(cell);
            }
        }
        for (id, lm) in world.landmarks() {
            g.landmarks.insert(id.clone(), GraphLandmark { cell: lm.cell, name: lm.name.clone() });
        }
        g
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn trajectory(&self) -> &[Pose] {
        &self.trajectory
    }

    pub fn regions(&self) -> &BTreeMap<String, Region> {
        &self.regions
    }

    pub fn landmarks(&self) -> &BTreeMap<String, GraphLandmark> {
        &self.landmarks
    }

    /// Conflicting observations seen by [`SceneGraph::merge`] so far.
    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && cell.x < self.width && cell.y < self.height
    }

    fn idx(&self, cell: Cell) -> usize {
        (cell.y * self.width + cell.x) as usize
    }

    /// Knowledge at `cell`; off-map cells read as `Unknown`.
    pub fn kind(&self, cell: Cell) -> KnownKind {
        if self.in_bounds(cell) {
            self.knowledge[self.idx(cell)]
        } else {
            KnownKind::Unknown
        }
    }

    pub fn is_navigable(&self, cell: Cell) -> bool {
        self.kind(cell) == KnownKind::Navigable
    }

    fn set(&mut self, cell: Cell, kind: KnownKind) {
        let i = self.idx(cell);
        self.knowledge[i] = kind;
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        (0..self.height).flat_map(move |y| (0..w).map(move |x| Cell::new(x, y)))
    }

    pub fn known_count(&self) -> usize {
        self.knowledge.iter().filter(|k| **k != KnownKind::Unknown).count()
    }

    pub fn region_at(&self, cell: Cell) -> Option<&str> {
        self.regions.iter().find(|(_, r)| r.cells.contains(&cell)).map(|(id, _)| id.as_str())
    }

    /// Navigable cell with at least one unknown 4-neighbor inside the map.
    pub fn is_frontier(&self, cell: Cell) -> bool {
        self.is_navigable(cell)
            && cell.neighbors4().iter().any(|n| self.in_bounds(*n) && self.kind(*n) == KnownKind::Unknown)
    }

    /// Union update. Unknown cells adopt the delta's kind; on disagreement
    /// the existing knowledge is kept and the conflict counted.
    pub fn merge(&mut self, delta: &SceneGraphDelta) -> MergeReport {
        let mut report = MergeReport::default();
        for (&cell, &kind) in &delta.observed {
            if !self.in_bounds(cell) || kind == KnownKind::Unknown {
                continue;
            }
            match self.kind(cell) {
                KnownKind::Unknown => {
                    self.set(cell, kind);
                    report.newly_known += 1;
                }
                existing if existing != kind => report.conflicts += 1,
                _ => {}
            }
        }
        for (&cell, region) in &delta.region_hints {
            if !self.is_navigable(cell) {
                continue;
            }
            match self.region_at(cell) {
                Some(id) if id != region.id => report.conflicts += 1,
                Some(_) => {}
                None => self.insert_region_cell(cell, region),
            }
        }
        for sighting in &delta.landmark_hints {
            match self.landmarks.get(&sighting.id) {
                Some(existing) if existing.cell != sighting.cell => report.conflicts += 1,
                Some(_) => {}
                None => {
                    self.landmarks.insert(
                        sighting.id.clone(),
                        GraphLandmark { cell: sighting.cell, name: sighting.name.clone() },
                    );
                }
            }
        }
        self.conflicts += report.conflicts as u64;
        report
    }

    fn insert_region_cell(&mut self, cell: Cell, region: &RegionRef) {
        self.regions
            .entry(region.id.clone())
            .or_insert_with(|| Region { name: region.name.clone(), cells: BTreeSet::new() })
            .cells
            .insert(cell);
    }

    /// Groups hinted navigable cells into named regions and records landmark
    /// hints. Hints on non-navigable cells are ignored. Fails without
    /// modifying the graph if any cell would carry two region ids.
    pub fn label_regions(&mut self, hints: &LabelHints) -> Result<(), SceneGraphError> {
        let mut assigned: BTreeMap<Cell, &RegionRef> = BTreeMap::new();
        for (cell, region) in &hints.regions {
            if !self.is_navigable(*cell) {
                continue;
            }
            let existing = self.region_at(*cell).map(str::to_owned);
            let prior = assigned.get(cell).map(|r| r.id.clone()).or(existing);
            if let Some(first) = prior {
                if first != region.id {
                    return Err(SceneGraphError::Conflict { cell: *cell, first, second: region.id.clone() });
                }
            }
            assigned.insert(*cell, region);
        }
        for (cell, region) in assigned {
            self.insert_region_cell(cell, region);
        }
        for s in &hints.landmarks {
            self.landmarks.insert(s.id.clone(), GraphLandmark { cell: s.cell, name: s.name.clone() });
        }
        Ok(())
    }

    /// Appends a pose to the exploration path.
    pub fn push_pose(&mut self, pose: Pose) -> Result<(), SceneGraphError> {
        if !self.is_navigable(pose.cell()) {
            return Err(SceneGraphError::OffGraph(pose));
        }
        self.trajectory.push(pose);
        Ok(())
    }

    /// The agent's most recent pose, falling back to the start pose.
    pub fn current_pose(&self) -> Pose {
        self.trajectory.last().copied().unwrap_or(self.start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Heading, VisibleCell};

    fn graph(w: i32, h: i32) -> SceneGraph {
        SceneGraph::blank(w, h, 0.25, Pose::new(0, 0, Heading::North))
    }

    fn obs(cells: &[(i32, i32, CellKind)]) -> Observation {
        Observation {
            visible_cells: cells
                .iter()
                .map(|&(x, y, kind)| VisibleCell { cell: Cell::new(x, y), kind, region: None })
                .collect(),
            visible_landmarks: BTreeSet::new(),
            pose: Pose::new(0, 0, Heading::North),
            step_index: 0,
        }
    }

    #[test]
    fn delta_transcribes_observation() {
        let mut cells: Vec<_> = (0..5).map(|x| (x, 0, CellKind::Free)).collect();
        cells.push((0, 1, CellKind::Obstacle));
        cells.push((1, 1, CellKind::Obstacle));
        let d = SceneGraphDelta::from_observation(&obs(&cells));
        assert_eq!(d.observed.len(), 7);
        assert_eq!(d.observed.values().filter(|k| **k == KnownKind::Obstacle).count(), 2);

        let d = SceneGraphDelta::from_observation(&obs(&[(0, 0, CellKind::Free)]));
        assert_eq!(d.observed.into_iter().collect::<Vec<_>>(), vec![(Cell::new(0, 0), KnownKind::Navigable)]);
    }

    #[test]
    fn merge_into_empty_and_idempotent() {
        let mut cells: Vec<_> = (0..5).map(|x| (x, 0, CellKind::Free)).collect();
        cells.extend([(0, 1, CellKind::Obstacle), (1, 1, CellKind::Obstacle)]);
        let d = SceneGraphDelta::from_observation(&obs(&cells));
        let mut g = graph(6, 3);
        assert_eq!(g.merge(&d).newly_known, 7);
        assert_eq!(g.known_count(), 7);
        let before = g.clone();
        let r = g.merge(&d);
        assert_eq!(r, MergeReport::default());
        assert_eq!(g, before);
    }

    #[test]
    fn conflicts_keep_existing_value() {
        let mut g = graph(2, 1);
        g.merge(&SceneGraphDelta::from_observation(&obs(&[(0, 0, CellKind::Free)])));
        let r = g.merge(&SceneGraphDelta::from_observation(&obs(&[(0, 0, CellKind::Obstacle)])));
        assert_eq!(r.conflicts, 1);
        assert_eq!(g.kind(Cell::new(0, 0)), KnownKind::Navigable);
        assert_eq!(g.conflicts(), 1);
    }

    fn known_open(w: i32, h: i32) -> SceneGraph {
        let mut g = graph(w, h);
        let cells: Vec<_> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y, CellKind::Free))).collect();
        g.merge(&SceneGraphDelta::from_observation(&obs(&cells)));
        g
    }

    fn kitchen() -> RegionRef {
        RegionRef { id: "k".into(), name: "kitchen".into() }
    }

    #[test]
    fn contiguous_hints_form_one_region() {
        let mut g = known_open(10, 5);
        let hints = LabelHints {
            regions: (0..3).flat_map(|y| (0..10).map(move |x| (Cell::new(x, y), kitchen()))).collect(),
            landmarks: vec![],
        };
        g.label_regions(&hints).unwrap();
        let r = &g.regions()["k"];
        assert_eq!(r.name, "kitchen");
        assert_eq!(r.cells.len(), 30);
        assert_eq!(r.patches().len(), 1);
    }

    #[test]
    fn no_hints_is_identity() {
        let mut g = known_open(4, 4);
        let before = g.clone();
        g.label_regions(&LabelHints::default()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn double_assignment_is_a_conflict() {
        let mut g = known_open(4, 4);
        let bath = RegionRef { id: "b".into(), name: "bathroom".into() };
        let hints =
            LabelHints { regions: vec![(Cell::new(1, 1), kitchen()), (Cell::new(1, 1), bath)], landmarks: vec![] };
        let before = g.clone();
        assert!(matches!(g.label_regions(&hints), Err(SceneGraphError::Conflict { .. })));
        assert_eq!(g, before);
    }

    #[test]
    fn trajectory_must_stay_on_navigable_cells() {
        let mut g = graph(3, 3);
        assert!(g.push_pose(Pose::new(1, 1, Heading::East)).is_err());
        g.merge(&SceneGraphDelta::from_observation(&obs(&[(1, 1, CellKind::Free)])));
        g.push_pose(Pose::new(1, 1, Heading::East)).unwrap();
        assert_eq!(g.current_pose(), Pose::new(1, 1, Heading::East));
    }
}
