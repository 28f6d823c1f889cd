//! Binary PPM (P6) rendering of the scene graph and of first-person views.
//!
//! Legend: gray = navigable floor, white = obstacles or unknown space, blue
//! polyline = path so far, blue arrow = current pose, black square = start.

use std::collections::BTreeMap;

use super::{KnownKind, SceneGraph};
use crate::world::{bresenham, Cell, CellKind, Heading, Observation, Pose};

pub const PIXELS_PER_CELL: i32 = 8;

type Rgb = [u8; 3];

const FLOOR: Rgb = [160, 160, 160];
const WALL: Rgb = [255, 255, 255];
const UNSEEN: Rgb = [0, 0, 0];
const PATH: Rgb = [0, 0, 255];
const START: Rgb = [0, 0, 0];

const ARROW_NORTH: [&str; 8] =
    ["........", "...##...", "..####..", ".######.", "...##...", "...##...", "...##...", "........"];

struct Canvas {
    width: i32,
    height: i32,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(cells_w: i32, cells_h: i32) -> Self {
        let width = cells_w * PIXELS_PER_CELL;
        let height = cells_h * PIXELS_PER_CELL;
        Canvas { width, height, pixels: vec![255; (width * height * 3) as usize] }
    }

    fn put(&mut self, x: i32, y: i32, rgb: Rgb) {
        if x >= 0 && y >= 0 && x < self.width && y < self.height {
            let i = ((y * self.width + x) * 3) as usize;
            self.pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }

    fn fill_cell(&mut self, cell: Cell, rgb: Rgb) {
        for dy in 0..PIXELS_PER_CELL {
            for dx in 0..PIXELS_PER_CELL {
                self.put(cell.x * PIXELS_PER_CELL + dx, cell.y * PIXELS_PER_CELL + dy, rgb);
            }
        }
    }

    fn line(&mut self, a: Cell, b: Cell, rgb: Rgb) {
        let center = |c: Cell| {
            Cell::new(c.x * PIXELS_PER_CELL + PIXELS_PER_CELL / 2, c.y * PIXELS_PER_CELL + PIXELS_PER_CELL / 2)
        };
        for p in bresenham(center(a), center(b)) {
            self.put(p.x, p.y, rgb);
        }
    }

    fn square(&mut self, cell: Cell, rgb: Rgb) {
        let (ox, oy) = (cell.x * PIXELS_PER_CELL, cell.y * PIXELS_PER_CELL);
        for i in 1..PIXELS_PER_CELL - 1 {
            for (x, y) in [(i, 1), (i, PIXELS_PER_CELL - 2), (1, i), (PIXELS_PER_CELL - 2, i)] {
                self.put(ox + x, oy + y, rgb);
            }
        }
    }

    fn arrow(&mut self, cell: Cell, heading: Heading, rgb: Rgb) {
        let n = PIXELS_PER_CELL as usize;
        for y in 0..n {
            for x in 0..n {
                // Rotate the north-facing mask clockwise once per quarter turn.
                let (mut sx, mut sy) = (x, y);
                for _ in 0..heading.index() {
                    (sx, sy) = (sy, n - 1 - sx);
                }
                if ARROW_NORTH[sy].as_bytes()[sx] == b'#' {
                    self.put(cell.x * PIXELS_PER_CELL + x as i32, cell.y * PIXELS_PER_CELL + y as i32, rgb);
                }
            }
        }
    }

    fn into_ppm(self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Cells of the drawn path with consecutive duplicates removed. Without an
/// overlay the path runs from the start pose through the recorded trajectory.
pub fn polyline_vertices(graph: &SceneGraph, overlay: Option<&[Pose]>) -> Vec<Cell> {
    let poses: Vec<Pose> = match overlay {
        Some(p) => p.to_vec(),
        None => std::iter::once(graph.start()).chain(graph.trajectory().iter().copied()).collect(),
    };
    let mut out: Vec<Cell> = Vec::with_capacity(poses.len());
    for p in poses {
        if out.last() != Some(&p.cell()) {
            out.push(p.cell());
        }
    }
    out
}

/// Renders the scene graph at [`PIXELS_PER_CELL`] pixels per cell.
pub fn render_ppm(graph: &SceneGraph, overlay: Option<&[Pose]>) -> Vec<u8> {
    let mut canvas = Canvas::new(graph.width(), graph.height());
    for cell in graph.cells() {
        let rgb = match graph.kind(cell) {
            KnownKind::Navigable => FLOOR,
            KnownKind::Obstacle | KnownKind::Unknown => WALL,
        };
        canvas.fill_cell(cell, rgb);
    }
    let vertices = polyline_vertices(graph, overlay);
    for w in vertices.windows(2) {
        canvas.line(w[0], w[1], PATH);
    }
    let (start, current) = match overlay {
        Some(p) if !p.is_empty() => (p[0], p[p.len() - 1]),
        _ => (graph.start(), graph.current_pose()),
    };
    canvas.square(start.cell(), START);
    canvas.arrow(current.cell(), current.heading, PATH);
    canvas.into_ppm()
}

/// Egocentric view of an observation: the agent sits in the center facing
/// up, unseen cells are black.
pub fn render_observation(obs: &Observation, range_cells: u32) -> Vec<u8> {
    let r = range_cells as i32;
    let side = 2 * r + 1;
    let mut canvas = Canvas::new(side, side);
    let seen: BTreeMap<Cell, CellKind> = obs.visible_cells.iter().map(|v| (v.cell, v.kind)).collect();
    let (fx, fy) = obs.pose.heading.delta();
    let (rx, ry) = obs.pose.heading.right().delta();
    for j in 0..side {
        for i in 0..side {
            let forward = r - j;
            let right = i - r;
            let world = Cell::new(obs.pose.x + forward * fx + right * rx, obs.pose.y + forward * fy + right * ry);
            let rgb = match seen.get(&world) {
                Some(CellKind::Free) => FLOOR,
                Some(CellKind::Obstacle) => WALL,
                None => UNSEEN,
            };
            canvas.fill_cell(Cell::new(i, j), rgb);
        }
    }
    canvas.arrow(Cell::new(r, r), Heading::North, PATH);
    canvas.into_ppm()
}
