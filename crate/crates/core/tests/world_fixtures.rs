mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use scenenav::world::{bresenham, Action, Cell, CellKind, GridWorld, Heading, Pose};

/// Closed-form line: one cell per step along the major axis, minor offset
/// rounded half away from the start.
fn line_oracle(a: Cell, b: Cell) -> Vec<Cell> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let x_major = dx.abs() >= dy.abs();
    let (major, minor) = if x_major { (dx, dy) } else { (dy, dx) };
    let n = major.abs();
    (0..=n)
        .map(|i| {
            let off = if n == 0 { 0 } else { (2 * i * minor.abs() + n) / (2 * n) * minor.signum() };
            let m = i * major.signum();
            if x_major {
                Cell::new(a.x + m, a.y + off)
            } else {
                Cell::new(a.x + off, a.y + m)
            }
        })
        .collect()
}

/// Every in-range, in-cone cell whose line has no obstacle strictly inside.
fn visible_oracle(world: &GridWorld, pose: Pose, fov_deg: f64, range: i32) -> BTreeSet<Cell> {
    let o = pose.cell();
    let (hx, hy) = match pose.heading {
        Heading::North => (0.0, -1.0),
        Heading::East => (1.0, 0.0),
        Heading::South => (0.0, 1.0),
        Heading::West => (-1.0, 0.0),
    };
    let mut out = BTreeSet::new();
    for c in world.cells() {
        if c == o {
            out.insert(c);
            continue;
        }
        let (dx, dy) = ((c.x - o.x) as f64, (c.y - o.y) as f64);
        if dx * dx + dy * dy > (range * range) as f64 {
            continue;
        }
        let from_heading = (dx * hy - dy * hx).atan2(dx * hx + dy * hy).abs().to_degrees();
        if fov_deg < 360.0 && from_heading > fov_deg / 2.0 + 1e-6 {
            continue;
        }
        let ray = line_oracle(o, c);
        if ray[1..ray.len() - 1].iter().all(|r| world.is_free(*r)) {
            out.insert(c);
        }
    }
    out
}

fn seen(world: &GridWorld, pose: Pose, fov: f64, range: u32) -> BTreeSet<Cell> {
    world.observe(pose, fov, range, 0).visible_cells.iter().map(|v| v.cell).collect()
}

#[test]
fn apartment_region_sizes_match_glyph_counts() {
    let text = common::map_text("apartment");
    let world = common::load("apartment");
    assert_eq!(world.region_names().len(), 3);
    for (letter, name) in [('l', "living room"), ('k', "kitchen"), ('e', "entrance")] {
        let glyphs = text.chars().filter(|c| *c == letter).count();
        let labelled = world.region_labels().values().filter(|id| id.as_str() == letter.to_string()).count();
        assert_eq!(labelled, glyphs, "{name}");
        assert_eq!(world.region_names()[&letter.to_string()], name);
    }
}

#[test]
fn fixtures_round_trip_byte_for_byte() {
    for name in common::CONNECTED {
        assert_eq!(common::load(name).to_map_text(), common::map_text(name), "{name}");
    }
}

#[test]
fn wall_hides_what_is_behind_it() {
    let world = common::load("wall");
    let pose = Pose::new(4, 3, Heading::East);
    let vis = seen(&world, pose, 90.0, 12);
    assert!(vis.contains(&Cell::new(5, 3)));
    assert!(vis.contains(&Cell::new(5, 2)) && vis.contains(&Cell::new(5, 4)));
    for x in 6..9 {
        for y in 1..6 {
            assert!(!vis.contains(&Cell::new(x, y)), "({x}, {y}) should be occluded");
        }
    }
    assert_eq!(vis, visible_oracle(&world, pose, 90.0, 12));
}

#[test]
fn open_room_sees_all_cells() {
    let world = common::load("open_room");
    assert_eq!(seen(&world, Pose::new(5, 5, Heading::North), 360.0, 20).len(), 121);
}

fn any_fixture() -> impl Strategy<Value = &'static str> {
    prop::sample::select(common::CONNECTED.to_vec())
}

fn heading() -> impl Strategy<Value = Heading> {
    prop::sample::select(Heading::ALL.to_vec())
}

fn action() -> impl Strategy<Value = Action> {
    prop::sample::select(vec![
        Action::MoveForward,
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bresenham_matches_closed_form(ax in -20i32..20, ay in -20i32..20, bx in -20i32..20, by in -20i32..20) {
        prop_assert_eq!(bresenham(Cell::new(ax, ay), Cell::new(bx, by)), line_oracle(Cell::new(ax, ay), Cell::new(bx, by)));
    }

    #[test]
    fn observation_matches_brute_force(name in any_fixture(), pick in any::<prop::sample::Index>(), h in heading(),
                                       fov in prop::sample::select(vec![60.0, 90.0, 120.0, 180.0, 360.0]), range in 1u32..15) {
        let world = common::load(name);
        let free: Vec<Cell> = world.free_cells().collect();
        let pose = Pose::at(*pick.get(&free), h);
        prop_assert_eq!(seen(&world, pose, fov, range), visible_oracle(&world, pose, fov, range as i32));
    }

    #[test]
    fn observe_is_monotone_in_range(name in any_fixture(), pick in any::<prop::sample::Index>(), h in heading(), range in 1u32..14) {
        let world = common::load(name);
        let free: Vec<Cell> = world.free_cells().collect();
        let pose = Pose::at(*pick.get(&free), h);
        let small = seen(&world, pose, 90.0, range);
        let big = seen(&world, pose, 90.0, range + 1);
        prop_assert!(small.is_subset(&big));
        prop_assert!(small.contains(&pose.cell()));
    }

    #[test]
    fn steps_stay_on_free_cells(name in any_fixture(), pick in any::<prop::sample::Index>(), actions in prop::collection::vec(action(), 0..200)) {
        let world = common::load(name);
        let free: Vec<Cell> = world.free_cells().collect();
        let mut pose = Pose::at(*pick.get(&free), Heading::North);
        for a in actions {
            let (next, _) = world.step(pose, a);
            prop_assert!(world.in_bounds(next.cell()));
            prop_assert_eq!(world.kind(next.cell()), Some(CellKind::Free));
            prop_assert_eq!(world.step(pose, a), world.step(pose, a));
            pose = next;
        }
    }
}
