use std::time::Duration;

use scenenav::backend::DecisionBackend;
use scenenav::explore::{explore, frontier_backend, Budget, ExplorationConfig, ExplorationResult, ExploreError};
use scenenav::plan::ConstraintSet;
use scenenav::scenegraph::render_ppm;
use scenenav::vlmclient::VlmBackend;
use scenenav::world::{Heading, Pose};

use crate::error::{CliError, Result};
use crate::{files, BackendKind, ExploreArgs};

fn write_outputs(args: &ExploreArgs, result: &ExplorationResult) -> Result<()> {
    files::write(&args.out.join("scenegraph.json"), result.graph.to_json())?;
    files::write(&args.out.join("exploration.ppm"), render_ppm(&result.graph, None))?;
    files::write_json(&args.out.join("exploration_result.json"), &result.summary(args.void_threshold))
}

pub fn run(args: &ExploreArgs) -> Result<()> {
    let world = files::load_world(&args.map, args.regions.as_deref())?;
    let start = match args.start {
        Some(p) => p,
        None => world
            .start_cell()
            .map(|c| Pose::at(c, Heading::North))
            .ok_or_else(|| CliError::Usage(format!("{} has no '@' start; pass --start", args.map.display())))?,
    };
    let mut backend: Box<dyn DecisionBackend> = match args.backend {
        BackendKind::Frontier => Box::new(frontier_backend()),
        BackendKind::Vlm => Box::new(VlmBackend::new(args.vlm.client()?)),
        BackendKind::Oracle => {
            return Err(CliError::Usage("the oracle backend needs a goal; use it with `run`".into()))
        }
    };
    // Without an explicit budget the frontier policy runs until it stops on
    // its own; a remote model gets an hour.
    let budget = match (args.max_steps, args.wall_clock_secs) {
        (Some(n), _) => Budget::MaxSteps(n),
        (None, Some(s)) if s >= 0.0 => Budget::WallClock(Duration::from_secs_f64(s)),
        (None, Some(_)) => return Err(CliError::Usage("--wall-clock-secs must be non-negative".into())),
        (None, None) if args.backend == BackendKind::Frontier => Budget::MaxSteps(u64::MAX),
        (None, None) => Budget::default(),
    };
    let cfg = ExplorationConfig {
        budget,
        fov_deg: args.fov_deg,
        range_cells: args.range_cells,
        void_threshold: args.void_threshold,
        constraints: ConstraintSet::new(args.constraints.iter().cloned()),
    };
    match explore(&world, start, &mut backend, &cfg) {
        Ok(result) => {
            write_outputs(args, &result)?;
            eprintln!(
                "{:?} after {} steps, {} cells known",
                result.termination,
                result.steps_taken,
                result.graph.known_count()
            );
            Ok(())
        }
        Err(ExploreError::InvalidStart(p)) => {
            Err(CliError::Validation(format!("start pose {p} is not on a free cell")))
        }
        Err(ExploreError::Backend { source, partial }) => {
            write_outputs(args, &partial)?;
            Err(CliError::Backend(format!("{source} (partial results written after {} steps)", partial.steps_taken)))
        }
    }
}
