//! Shortest action sequences over (cell, heading) states.
//!
//! Cost is lexicographic: forward moves first, rotations second. Among goal
//! states at minimal cost the smallest `(y, x)` cell wins; among optimal
//! sequences to that cell the first action is chosen by
//! [`Action::PREFERENCE`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::world::{Action, Cell, Heading, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub target: Cell,
    /// `None` when the start state already satisfies the goal.
    pub first_action: Option<Action>,
    pub moves: u32,
    pub turns: u32,
}

struct StateSpace {
    width: i32,
    height: i32,
}

impl StateSpace {
    fn index(&self, pose: Pose) -> Option<usize> {
        let c = pose.cell();
        (c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height)
            .then(|| ((c.y * self.width + c.x) as usize) * 4 + pose.heading.index())
    }

    fn pose(&self, index: usize) -> Pose {
        let cell = index / 4;
        Pose::at(
            Cell::new((cell % self.width as usize) as i32, (cell / self.width as usize) as i32),
            Heading::ALL[index % 4],
        )
    }
}

fn rank(action: Action) -> u8 {
    match action {
        Action::MoveForward => 0,
        Action::TurnLeft => 1,
        Action::TurnRight => 2,
        Action::Stop => 3,
    }
}

/// Finds the cheapest route from `start` to any state satisfying `is_goal`,
/// moving only through cells for which `passable` holds.
pub fn route(
    width: i32,
    height: i32,
    start: Pose,
    passable: impl Fn(Cell) -> bool,
    is_goal: impl Fn(Pose) -> bool,
) -> Option<Route> {
    let space = StateSpace { width, height };
    let start_idx = space.index(start)?;
    if is_goal(start) {
        return Some(Route { target: start.cell(), first_action: None, moves: 0, turns: 0 });
    }
    let n = (width.max(0) as usize) * (height.max(0) as usize) * 4;
    let mut dist: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut first: Vec<u8> = vec![u8::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[start_idx] = Some((0, 0));
    heap.push(Reverse(((0u32, 0u32), start_idx)));

    let mut best: Option<(u32, u32)> = None;
    let mut goals: Vec<usize> = Vec::new();
    while let Some(Reverse((cost, idx))) = heap.pop() {
        if dist[idx] != Some(cost) {
            continue;
        }
        if let Some(b) = best {
            if cost > b {
                break;
            }
        }
        let pose = space.pose(idx);
        if idx != start_idx && is_goal(pose) {
            best = Some(cost);
            goals.push(idx);
            continue;
        }
        for action in Action::PREFERENCE {
            let next = action.apply(pose);
            if action == Action::MoveForward && !passable(next.cell()) {
                continue;
            }
            let Some(next_idx) = space.index(next) else { continue };
            let next_cost = match action {
                Action::MoveForward => (cost.0 + 1, cost.1),
                _ => (cost.0, cost.1 + 1),
            };
            let inherited = if idx == start_idx { rank(action) } else { first[idx] };
            match dist[next_idx] {
                Some(d) if d < next_cost => {}
                Some(d) if d == next_cost => first[next_idx] = first[next_idx].min(inherited),
                _ => {
                    dist[next_idx] = Some(next_cost);
                    first[next_idx] = inherited;
                    heap.push(Reverse((next_cost, next_idx)));
                }
            }
        }
    }

    let (moves, turns) = best?;
    let target = goals.iter().map(|&i| space.pose(i).cell()).min_by_key(|c| (c.y, c.x))?;
    let first_rank = goals.iter().filter(|&&i| space.pose(i).cell() == target).map(|&i| first[i]).min()?;
    let first_action = Action::PREFERENCE.into_iter().find(|a| rank(*a) == first_rank);
    Some(Route { target, first_action, moves, turns })
}

/// Breadth-first move counts over 4-connected passable cells.
pub fn bfs_distances(width: i32, height: i32, from: Cell, passable: impl Fn(Cell) -> bool) -> Vec<Option<u32>> {
    let idx = |c: Cell| (c.y * width + c.x) as usize;
    let in_bounds = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < width && c.y < height;
    let mut dist = vec![None; (width.max(0) * height.max(0)) as usize];
    if !in_bounds(from) || !passable(from) {
        return dist;
    }
    dist[idx(from)] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[idx(c)].unwrap_or(0);
        for n in c.neighbors4() {
            if in_bounds(n) && dist[idx(n)].is_none() && passable(n) {
                dist[idx(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}
