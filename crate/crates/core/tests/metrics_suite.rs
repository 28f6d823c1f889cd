mod common;

use proptest::prelude::*;
use scenenav::metrics::{episode_metrics, suite_metrics, SUCCESS_RADIUS_M};
use scenenav::plan::{run_episode, Episode, EpisodeConfig, Goal, OracleBackend, PlanConfig, RuleDecomposer};
use scenenav::scenegraph::SceneGraph;
use scenenav::world::{Cell, GridWorld, Heading, Pose};

#[test]
fn detour_lowers_spl() {
    let cfg = EpisodeConfig { plan: PlanConfig { goal_radius_cells: 0.0, ..Default::default() }, ..Default::default() };
    let long = GridWorld::load(
        b"\
#########
#.......#
#######.#
#.......#
#########
",
        None,
    )
    .unwrap();
    let start = Pose::new(1, 1, Heading::East);
    let graph = SceneGraph::from_world(&long, start);
    let ep = Episode {
        id: "d".into(),
        start,
        goal: Goal::Cell { x: 1, y: 3 },
        instruction: "go".into(),
        constraints: vec![],
    };
    let mut rec = run_episode(&long, &graph, None, &mut OracleBackend, &mut RuleDecomposer, &ep, &cfg).unwrap();
    let shortest = episode_metrics(&rec, &long, Cell::new(1, 3), 0.0, 0.0).unwrap().path_length_m;
    // Walk the corridor out and back once before the real route.
    let mut detour: Vec<Pose> = (1..=7).map(|x| Pose::new(x, 1, Heading::East)).collect();
    detour.extend((1..7).rev().map(|x| Pose::new(x, 1, Heading::West)));
    detour.extend(rec.trajectory.iter().skip(1).copied());
    rec.trajectory = detour;
    let m = episode_metrics(&rec, &long, Cell::new(1, 3), 0.0, 0.0).unwrap();
    assert_eq!(m.shortest_path_m, shortest);
    assert_eq!(shortest, 14.0 * 0.25);
    assert!((m.spl - 14.0 / 26.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn suite_orderings_hold(name in prop::sample::select(common::CONNECTED.to_vec()),
                            eps in prop::collection::vec((any::<prop::sample::Index>(), 0usize..4, any::<prop::sample::Index>(), 0u64..60), 1..8),
                            radius in 0.0f64..14.0) {
        let world = common::load(name);
        let free: Vec<Cell> = world.free_cells().collect();
        let mut metrics = Vec::new();
        for (i, (s, h, g, max_steps)) in eps.iter().enumerate() {
            let start = Pose::at(*s.get(&free), Heading::ALL[*h]);
            let goal = *g.get(&free);
            let graph = SceneGraph::from_world(&world, start);
            let ep = Episode { id: i.to_string(), start, goal: Goal::Cell { x: goal.x, y: goal.y }, instruction: "go".into(), constraints: vec![] };
            let cfg = EpisodeConfig { plan: PlanConfig { goal_radius_cells: radius, ..Default::default() }, max_steps: *max_steps, ..Default::default() };
            let rec = run_episode(&world, &graph, None, &mut OracleBackend, &mut RuleDecomposer, &ep, &cfg).unwrap();
            let m = episode_metrics(&rec, &world, goal, SUCCESS_RADIUS_M, 0.01).unwrap();
            prop_assert!(m.spl <= 1.0 + 1e-12);
            prop_assert!(!m.success || m.oracle_success);
            metrics.push(m);
        }
        let s = suite_metrics(&metrics, None).unwrap();
        prop_assert!(s.os_pct >= s.sr_pct);
        prop_assert!(s.spl_pct <= s.sr_pct + 1e-9);
    }
}
