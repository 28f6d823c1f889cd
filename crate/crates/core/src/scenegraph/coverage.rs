use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{KnownKind, SceneGraph};
use crate::pathfind::bfs_distances;
use crate::world::{Cell, GridWorld};

/// One success radius worth of area, in cells.
pub const DEFAULT_VOID_THRESHOLD: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteriorVoid {
    /// Smallest `(y, x)` cell of the component.
    pub anchor: Cell,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub periphery_closed: bool,
    pub interior_voids: Vec<InteriorVoid>,
    /// Fraction of ground-truth reachable free cells that are known; only
    /// available from [`SceneGraph::coverage_against`].
    pub covered_fraction: Option<f64>,
    pub sufficient: bool,
}

impl SceneGraph {
    /// Structural exploration-completeness check.
    ///
    /// Unknown cells are grouped into 4-connected components. Components
    /// that border no navigable cell lie behind walls and are ignored. A
    /// component that borders navigable floor and touches the map edge means
    /// the explored periphery is still open; one that borders floor but is
    /// enclosed by known cells is an interior void.
    pub fn coverage(&self, void_threshold: usize) -> CoverageReport {
        let mut seen = vec![false; self.knowledge.len()];
        let mut periphery_closed = true;
        let mut interior_voids = Vec::new();

        for seed in self.cells() {
            if seen[self.idx(seed)] || self.kind(seed) != KnownKind::Unknown {
                continue;
            }
            seen[self.idx(seed)] = true;
            let mut queue = VecDeque::from([seed]);
            let mut size = 0usize;
            let mut touches_edge = false;
            let mut borders_floor = false;
            while let Some(c) = queue.pop_front() {
                size += 1;
                for n in c.neighbors4() {
                    if !self.in_bounds(n) {
                        touches_edge = true;
                        continue;
                    }
                    match self.kind(n) {
                        KnownKind::Navigable => borders_floor = true,
                        KnownKind::Obstacle => {}
                        KnownKind::Unknown => {
                            let i = self.idx(n);
                            if !seen[i] {
                                seen[i] = true;
                                queue.push_back(n);
                            }
                        }
                    }
                }
            }
            if !borders_floor {
                continue;
            }
            if touches_edge {
                periphery_closed = false;
            } else {
                interior_voids.push(InteriorVoid { anchor: seed, cells: size });
            }
        }

        let sufficient = periphery_closed && interior_voids.iter().all(|v| v.cells < void_threshold.max(1));
        CoverageReport { periphery_closed, interior_voids, covered_fraction: None, sufficient }
    }

    /// [`SceneGraph::coverage`] plus the known fraction of free cells
    /// reachable from the graph's start pose in `world`.
    pub fn coverage_against(&self, world: &GridWorld, void_threshold: usize) -> CoverageReport {
        let mut report = self.coverage(void_threshold);
        let dist = bfs_distances(world.width(), world.height(), self.start.cell(), |c| world.is_free(c));
        let reachable: Vec<Cell> =
            world.cells().filter(|c| dist[(c.y * world.width() + c.x) as usize].is_some()).collect();
        if !reachable.is_empty() {
            let known = reachable.iter().filter(|c| self.kind(**c) != KnownKind::Unknown).count();
            report.covered_fraction = Some(known as f64 / reachable.len() as f64);
        }
        report
    }
}
