use std::path::Path;

use scenenav::cache::{CacheKey, TrajectoryCache};
use scenenav::plan::TaskPrompt;

use crate::error::{CliError, Result};
use crate::{files, CacheCommand};

fn load(path: &Path) -> Result<TrajectoryCache> {
    TrajectoryCache::load(&files::read_text(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn run(cmd: &CacheCommand) -> Result<()> {
    match cmd {
        CacheCommand::Inspect { cache } => {
            let c = load(cache)?;
            println!("{} entries", c.len());
            for (key, t) in c.entries() {
                println!(
                    "{key}: {} waypoints, {} moves, {} -> {}, {:?}",
                    t.len(),
                    t.moves(),
                    t.start(),
                    t.end(),
                    t.meta.source
                );
            }
            Ok(())
        }
        CacheCommand::Validate { cache, scenegraph } => {
            let c = load(cache)?;
            let graph = files::load_graph(scenegraph)?;
            let bad = c.invalid_against(&graph);
            for (key, pose) in &bad {
                println!("invalid {key}: leaves the navigable graph at {pose}");
            }
            if bad.is_empty() {
                println!("{} entries valid", c.len());
                Ok(())
            } else {
                Err(CliError::Validation(format!("{} of {} entries invalid", bad.len(), c.len())))
            }
        }
        CacheCommand::Evict { cache, all, keep, prompt, location } => {
            let mut c = load(cache)?;
            let evicted = match (all, keep, prompt) {
                (true, _, _) => c.evict_to(0),
                (_, Some(k), _) => c.evict_to(*k),
                (_, _, Some(p)) => {
                    let p = TaskPrompt::new(p.clone());
                    let key = match location {
                        Some(at) => CacheKey::subtask(&p, at.cell()),
                        None => CacheKey::task(&p),
                    };
                    if !c.evict(&key) {
                        return Err(CliError::Validation(format!("no entry {key}")));
                    }
                    1
                }
                _ => return Err(CliError::Usage("pass one of --all, --keep or --prompt".into())),
            };
            files::write(cache, c.save())?;
            println!("evicted {evicted}, {} entries left", c.len());
            Ok(())
        }
    }
}
