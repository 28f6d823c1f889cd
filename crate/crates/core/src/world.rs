//! Deterministic grid-world simulator: map loading, agent kinematics, and
//! ray-cast observations.
//!
//! Coordinates are cell indices with `x` growing east and `y` growing south;
//! row 0 of a map file is the northern edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per cell edge unless the region sidecar overrides it.
pub const DEFAULT_CELL_SIZE_M: f64 = 0.25;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sidecar parse error: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("inconsistent map: {0}")]
    Consistency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, heading: Heading) -> Cell {
        let (dx, dy) = heading.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn dist_sq(self, other: Cell) -> i64 {
        let dx = i64::from(self.x - other.x);
        let dy = i64::from(self.y - other.y);
        dx * dx + dy * dy
    }

    /// Euclidean distance between cell centers, in cells.
    pub fn distance(self, other: Cell) -> f64 {
        (self.dist_sq(other) as f64).sqrt()
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        Heading::ALL.map(|h| self.offset(h))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Heading::North => 'N',
            Heading::East => 'E',
            Heading::South => 'S',
            Heading::West => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<Heading> {
        match c {
            'N' => Some(Heading::North),
            'E' => Some(Heading::East),
            'S' => Some(Heading::South),
            'W' => Some(Heading::West),
            _ => None,
        }
    }
}

// Serialized as "N"/"E"/"S"/"W"; full names are accepted on input.
impl Serialize for Heading {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        s.serialize_str(self.letter().encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for Heading {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.to_ascii_lowercase().as_str() {
            "n" | "north" => Ok(Heading::North),
            "e" | "east" => Ok(Heading::East),
            "s" | "south" => Ok(Heading::South),
            "w" | "west" => Ok(Heading::West),
            _ => Err(serde::de::Error::custom(format!("unknown heading {raw:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
}

impl Pose {
    pub const fn new(x: i32, y: i32, heading: Heading) -> Self {
        Self { x, y, heading }
    }

    pub fn at(cell: Cell, heading: Heading) -> Self {
        Self::new(cell.x, cell.y, heading)
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.heading.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    /// Tie-break order used by the planners.
    pub const PREFERENCE: [Action; 3] = [Action::MoveForward, Action::TurnLeft, Action::TurnRight];

    pub fn phrase(self) -> &'static str {
        match self {
            Action::MoveForward => "move forward",
            Action::TurnLeft => "turn left",
            Action::TurnRight => "turn right",
            Action::Stop => "stop",
        }
    }

    /// Pose reached by applying this action, ignoring collisions.
    pub fn apply(self, pose: Pose) -> Pose {
        match self {
            Action::MoveForward => Pose::at(pose.cell().offset(pose.heading), pose.heading),
            Action::TurnLeft => Pose { heading: pose.heading.left(), ..pose },
            Action::TurnRight => Pose { heading: pose.heading.right(), ..pose },
            Action::Stop => pose,
        }
    }

    /// The single action taking `from` to `to`, if one exists and changes the pose.
    pub fn between(from: Pose, to: Pose) -> Option<Action> {
        Action::PREFERENCE.into_iter().find(|a| a.apply(from) == to)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    Free,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    Ok,
    Blocked,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub cell: Cell,
    pub name: String,
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisibleCell {
    pub cell: Cell,
    pub kind: CellKind,
    pub region: Option<RegionRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LandmarkSighting {
    pub id: String,
    pub cell: Cell,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub visible_cells: BTreeSet<VisibleCell>,
    pub visible_landmarks: BTreeSet<LandmarkSighting>,
    pub pose: Pose,
    pub step_index: u64,
}

impl Observation {
    pub fn sees(&self, cell: Cell) -> bool {
        self.visible_cells.iter().any(|v| v.cell == cell)
    }
}

#[derive(Debug, Deserialize)]
struct Sidecar {
    #[serde(default)]
    regions: BTreeMap<String, String>,
    #[serde(default)]
    landmarks: Vec<SidecarLandmark>,
    cell_size_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct SidecarLandmark {
    id: String,
    x: i32,
    y: i32,
    name: Option<String>,
    region: Option<String>,
}

/// Immutable environment. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: i32,
    height: i32,
    cells: Vec<CellKind>,
    region_labels: BTreeMap<Cell, String>,
    region_names: BTreeMap<String, String>,
    landmarks: BTreeMap<String, Landmark>,
    cell_size_m: f64,
    start: Option<Cell>,
    trailing_newline: bool,
}

impl GridWorld {
    /// Parses an ASCII map plus an optional JSON region sidecar.
    pub fn load(text: &[u8], sidecar: Option<&[u8]>) -> Result<Self, MapError> {
        let text =
            std::str::from_utf8(text).map_err(|e| MapError::Parse { line: 1, message: format!("not utf-8: {e}") })?;
        let trailing_newline = text.ends_with('\n');
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Err(MapError::Parse { line: 1, message: "empty map".into() });
        }

        let mut width = None;
        let mut cells = Vec::new();
        let mut region_labels = BTreeMap::new();
        let mut start = None;
        let mut height = 0;
        for (y, line) in body.split('\n').enumerate() {
            let row_len = line.chars().count();
            match width {
                None => width = Some(row_len),
                Some(w) if w != row_len => {
                    return Err(MapError::Parse {
                        line: y + 1,
                        message: format!("ragged row: expected {w} cells, found {row_len}"),
                    })
                }
                _ => {}
            }
            if row_len == 0 {
                return Err(MapError::Parse { line: y + 1, message: "empty row".into() });
            }
            for (x, glyph) in line.chars().enumerate() {
                let cell = Cell::new(x as i32, y as i32);
                let kind = match glyph {
                    '.' => CellKind::Free,
                    '#' => CellKind::Obstacle,
                    '@' => {
                        if start.replace(cell).is_some() {
                            return Err(MapError::Parse {
                                line: y + 1,
                                message: "more than one '@' start cell".into(),
                            });
                        }
                        CellKind::Free
                    }
                    'a'..='z' => {
                        region_labels.insert(cell, glyph.to_string());
                        CellKind::Free
                    }
                    other => {
                        return Err(MapError::Parse {
                            line: y + 1,
                            message: format!("unknown glyph {other:?} at column {}", x + 1),
                        })
                    }
                };
                cells.push(kind);
            }
            height += 1;
        }
        let width = width.unwrap_or(0) as i32;

        let mut world = GridWorld {
            width,
            height,
            cells,
            region_names: BTreeMap::new(),
            region_labels,
            landmarks: BTreeMap::new(),
            cell_size_m: DEFAULT_CELL_SIZE_M,
            start,
            trailing_newline,
        };
        for id in world.region_labels.values() {
            world.region_names.entry(id.clone()).or_insert_with(|| id.clone());
        }

        if let Some(bytes) = sidecar {
            let meta: Sidecar = serde_json::from_slice(bytes)?;
            if let Some(size) = meta.cell_size_m {
                if !(size.is_finite() && size > 0.0) {
                    return Err(MapError::Consistency(format!("cell_size_m must be positive, got {size}")));
                }
                world.cell_size_m = size;
            }
            for (id, name) in meta.regions {
                world.region_names.insert(id, name);
            }
            for lm in meta.landmarks {
                let cell = Cell::new(lm.x, lm.y);
                match world.kind(cell) {
                    None => {
                        return Err(MapError::Consistency(format!("landmark {:?} at {cell} is out of bounds", lm.id)))
                    }
                    Some(CellKind::Obstacle) => {
                        return Err(MapError::Consistency(format!(
                            "landmark {:?} at {cell} sits on an obstacle",
                            lm.id
                        )))
                    }
                    Some(CellKind::Free) => {}
                }
                let name = lm.name.unwrap_or_else(|| lm.id.replace('_', " "));
                let region = lm.region.or_else(|| world.region_labels.get(&cell).cloned());
                if world.landmarks.insert(lm.id.clone(), Landmark { cell, name, region }).is_some() {
                    return Err(MapError::Consistency(format!("duplicate landmark id {:?}", lm.id)));
                }
            }
        }
        Ok(world)
    }

    /// Writes the map back in the ASCII format accepted by [`GridWorld::load`].
    pub fn to_map_text(&self) -> String {
        let mut out = String::with_capacity(((self.width + 1) * self.height) as usize);
        for y in 0..self.height {
            if y > 0 {
                out.push('\n');
            }
            for x in 0..self.width {
                let cell = Cell::new(x, y);
                let glyph = if self.kind(cell) == Some(CellKind::Obstacle) {
                    '#'
                } else if self.start == Some(cell) {
                    '@'
                } else if let Some(id) = self.region_labels.get(&cell) {
                    id.chars().next().unwrap_or('.')
                } else {
                    '.'
                };
                out.push(glyph);
            }
        }
        if self.trailing_newline {
            out.push('\n');
        }
        out
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

    pub fn start_cell(&self) -> Option<Cell> {
        self.start
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && cell.x < self.width && cell.y < self.height
    }

    pub fn kind(&self, cell: Cell) -> Option<CellKind> {
        self.in_bounds(cell).then(|| self.cells[(cell.y * self.width + cell.x) as usize])
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.kind(cell) == Some(CellKind::Free)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| self.is_free(*c))
    }

    pub fn region_of(&self, cell: Cell) -> Option<RegionRef> {
        self.region_labels.get(&cell).map(|id| RegionRef {
            id: id.clone(),
            name: self.region_names.get(id).cloned().unwrap_or_else(|| id.clone()),
        })
    }

    pub fn region_labels(&self) -> &BTreeMap<Cell, String> {
        &self.region_labels
    }

    pub fn region_names(&self) -> &BTreeMap<String, String> {
        &self.region_names
    }

    pub fn landmarks(&self) -> &BTreeMap<String, Landmark> {
        &self.landmarks
    }

    pub fn is_valid_pose(&self, pose: Pose) -> bool {
        self.is_free(pose.cell())
    }

    /// Applies one action. Moves into walls or off the map are reported as
    /// [`StepOutcome::Blocked`] and leave the pose unchanged.
    pub fn step(&self, pose: Pose, action: Action) -> (Pose, StepOutcome) {
        match action {
            Action::Stop => (pose, StepOutcome::Stopped),
            Action::TurnLeft | Action::TurnRight => (action.apply(pose), StepOutcome::Ok),
            Action::MoveForward => {
                let next = action.apply(pose);
                if self.is_free(next.cell()) {
                    (next, StepOutcome::Ok)
                } else {
                    (pose, StepOutcome::Blocked)
                }
            }
        }
    }

    /// Cells within `range_cells` (Euclidean) and inside the field of view
    /// centered on the heading, with unobstructed line of sight.
    pub fn observe(&self, pose: Pose, fov_deg: f64, range_cells: u32, step_index: u64) -> Observation {
        let origin = pose.cell();
        let r = range_cells as i32;
        let r_sq = i64::from(r) * i64::from(r);
        let (hx, hy) = pose.heading.delta();
        let half_fov_cos = (fov_deg.clamp(0.0, 360.0).to_radians() / 2.0).cos();
        let full_circle = fov_deg >= 360.0;

        let mut visible_cells = BTreeSet::new();
        let mut visible_landmarks = BTreeSet::new();
        for y in (origin.y - r).max(0)..=(origin.y + r).min(self.height - 1) {
            for x in (origin.x - r).max(0)..=(origin.x + r).min(self.width - 1) {
                let cell = Cell::new(x, y);
                if cell != origin {
                    if origin.dist_sq(cell) > r_sq {
                        continue;
                    }
                    if !full_circle {
                        let (dx, dy) = (f64::from(x - origin.x), f64::from(y - origin.y));
                        let cos = (dx * f64::from(hx) + dy * f64::from(hy)) / dx.hypot(dy);
                        if cos + 1e-9 < half_fov_cos {
                            continue;
                        }
                    }
                    if !self.line_of_sight(origin, cell) {
                        continue;
                    }
                }
                let kind = self.cells[(y * self.width + x) as usize];
                visible_cells.insert(VisibleCell { cell, kind, region: self.region_of(cell) });
            }
        }
        for (id, lm) in &self.landmarks {
            if visible_cells.iter().any(|v| v.cell == lm.cell) {
                visible_landmarks.insert(LandmarkSighting { id: id.clone(), cell: lm.cell, name: lm.name.clone() });
            }
        }
        Observation { visible_cells, visible_landmarks, pose, step_index }
    }

    /// True when no obstacle lies strictly between `from` and `to` on the
    /// Bresenham ray. The endpoint itself may be an obstacle.
    pub fn line_of_sight(&self, from: Cell, to: Cell) -> bool {
        let ray = bresenham(from, to);
        ray[1..ray.len().saturating_sub(1)].iter().all(|c| self.kind(*c) == Some(CellKind::Free))
    }
}

/// Integer Bresenham line from `a` to `b`, inclusive of both endpoints.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (a.x, a.y);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push(Cell::new(x, y));
        if x == b.x && y == b.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(w: usize, h: usize) -> GridWorld {
        let row = ".".repeat(w);
        let text = vec![row; h].join("\n");
        GridWorld::load(text.as_bytes(), None).unwrap()
    }

    #[test]
    fn loads_empty_three_by_three() {
        let w = GridWorld::load(b"...\n...\n...\n", None).unwrap();
        assert_eq!(w.free_cells().count(), 9);
        assert!(w.landmarks().is_empty());
    }

    #[test]
    fn obstacle_is_transcribed() {
        let w = GridWorld::load(b"...\n.#.\n...", None).unwrap();
        assert_eq!(w.kind(Cell::new(1, 1)), Some(CellKind::Obstacle));
        assert_eq!(w.to_map_text(), "...\n.#.\n...");
    }

    #[test]
    fn rejects_ragged_and_unknown_glyphs() {
        assert!(matches!(GridWorld::load(b"...\n..\n", None), Err(MapError::Parse { line: 2, .. })));
        assert!(matches!(GridWorld::load(b"..?\n", None), Err(MapError::Parse { .. })));
        assert!(matches!(GridWorld::load(b"", None), Err(MapError::Parse { .. })));
    }

    #[test]
    fn landmark_on_obstacle_is_inconsistent() {
        let side = br#"{"landmarks": [{"id": "lamp", "x": 1, "y": 0}]}"#;
        let err = GridWorld::load(b".#.\n", Some(side)).unwrap_err();
        assert!(matches!(err, MapError::Consistency(_)), "{err}");
    }

    #[test]
    fn turn_left_rotates_in_place() {
        let w = open(5, 5);
        let (p, o) = w.step(Pose::new(2, 2, Heading::North), Action::TurnLeft);
        assert_eq!((p, o), (Pose::new(2, 2, Heading::West), StepOutcome::Ok));
        let (p, _) = w.step(p, Action::TurnRight);
        assert_eq!(p, Pose::new(2, 2, Heading::North));
    }

    #[test]
    fn edge_blocks_forward_motion() {
        let w = open(5, 5);
        let pose = Pose::new(0, 0, Heading::North);
        assert_eq!(w.step(pose, Action::MoveForward), (pose, StepOutcome::Blocked));
        assert_eq!(w.step(pose, Action::Stop), (pose, StepOutcome::Stopped));
    }

    #[test]
    fn forward_into_free_cell() {
        let w = open(8, 8);
        let (p, o) = w.step(Pose::new(5, 5, Heading::East), Action::MoveForward);
        assert_eq!((p, o), (Pose::new(6, 5, Heading::East), StepOutcome::Ok));
    }

    #[test]
    fn open_room_full_circle_sees_everything() {
        let w = open(11, 11);
        let obs = w.observe(Pose::new(5, 5, Heading::North), 360.0, 20, 0);
        assert_eq!(obs.visible_cells.len(), 121);
    }

    #[test]
    fn unit_range_stays_in_neighborhood() {
        let w = open(7, 7);
        let pose = Pose::new(3, 3, Heading::East);
        let obs = w.observe(pose, 360.0, 1, 0);
        assert!(obs.sees(pose.cell()));
        assert!(obs.visible_cells.iter().all(|v| v.cell.chebyshev(pose.cell()) <= 1));
    }

    #[test]
    fn narrow_fov_still_sees_own_cell() {
        let w = open(7, 7);
        let pose = Pose::new(3, 3, Heading::South);
        let obs = w.observe(pose, 1.0, 3, 0);
        let cells: Vec<_> = obs.visible_cells.iter().map(|v| v.cell).collect();
        assert_eq!(cells, vec![Cell::new(3, 3), Cell::new(3, 4), Cell::new(3, 5), Cell::new(3, 6)]);
    }

    #[test]
    fn bresenham_endpoints_and_adjacency() {
        for (a, b) in [((0, 0), (5, 2)), ((4, 4), (0, 1)), ((2, 2), (2, 2)), ((0, 3), (3, 0))] {
            let line = bresenham(Cell::new(a.0, a.1), Cell::new(b.0, b.1));
            assert_eq!(line.first(), Some(&Cell::new(a.0, a.1)));
            assert_eq!(line.last(), Some(&Cell::new(b.0, b.1)));
            assert!(line.windows(2).all(|w| w[0].chebyshev(w[1]) == 1));
        }
    }
}
