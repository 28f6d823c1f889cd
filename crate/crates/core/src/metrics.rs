//! Navigation metrics: NE, OS, SR and SPL per episode and per suite, plus
//! backend-call and time accounting against a baseline run.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pathfind::bfs_distances;
use crate::plan::EpisodeRecord;
use crate::world::{Cell, GridWorld};

pub const SUCCESS_RADIUS_M: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("episode {id}: goal {goal} is unreachable from the start")]
    UnreachableGoal { id: String, goal: Cell },
    #[error("episode {0}: empty trajectory")]
    EmptyTrajectory(String),
    #[error("cannot aggregate an empty suite")]
    EmptySuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub id: String,
    pub ne_m: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub path_length_m: f64,
    pub shortest_path_m: f64,
    pub backend_calls: u64,
    pub avg_step_seconds: f64,
    pub total_seconds: f64,
    pub cost_usd: f64,
}

pub fn cost_accounting(backend_calls: u64, price_per_call_usd: f64) -> f64 {
    backend_calls as f64 * price_per_call_usd
}

pub fn spl(success: bool, shortest: f64, taken: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = taken.max(shortest);
    if denom <= 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

pub fn episode_metrics(
    record: &EpisodeRecord,
    world: &GridWorld,
    goal: Cell,
    success_radius_m: f64,
    price_per_call_usd: f64,
) -> Result<EpisodeMetrics, MetricsError> {
    let (Some(first), Some(last)) = (record.trajectory.first(), record.trajectory.last()) else {
        return Err(MetricsError::EmptyTrajectory(record.id.clone()));
    };
    let cs = world.cell_size_m();
    let dist = bfs_distances(world.width(), world.height(), first.cell(), |c| world.is_free(c));
    let shortest_cells = world
        .in_bounds(goal)
        .then(|| dist[(goal.y * world.width() + goal.x) as usize])
        .flatten()
        .ok_or_else(|| MetricsError::UnreachableGoal { id: record.id.clone(), goal })?;

    let within = |c: Cell| c.distance(goal) * cs <= success_radius_m + 1e-9;
    let ne_m = last.cell().distance(goal) * cs;
    let success = record.stopped() && within(last.cell());
    let oracle_success = record.trajectory.iter().any(|p| within(p.cell()));
    let moves = record.trajectory.windows(2).filter(|w| w[0].cell() != w[1].cell()).count();
    let path_length_m = moves as f64 * cs;
    let shortest_path_m = shortest_cells as f64 * cs;
    Ok(EpisodeMetrics {
        id: record.id.clone(),
        ne_m,
        success,
        oracle_success,
        spl: spl(success, shortest_path_m, path_length_m),
        path_length_m,
        shortest_path_m,
        backend_calls: record.backend_calls,
        avg_step_seconds: record.timing.avg_step_seconds,
        total_seconds: record.timing.total_seconds,
        cost_usd: cost_accounting(record.backend_calls, price_per_call_usd),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub backend_calls_pct: f64,
    pub time_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub episodes: usize,
    pub ne_m: f64,
    pub os_pct: f64,
    pub sr_pct: f64,
    pub spl_pct: f64,
    pub backend_calls: u64,
    pub total_seconds: f64,
    pub avg_step_seconds: f64,
    pub cost_usd: f64,
    pub reduction: Option<Reduction>,
}

/// `100 * (1 - ours / baseline)`; zero when the baseline is zero.
pub fn reduction_pct(ours: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - ours / baseline)
    }
}

pub fn suite_metrics(
    episodes: &[EpisodeMetrics],
    baseline: Option<&SuiteMetrics>,
) -> Result<SuiteMetrics, MetricsError> {
    if episodes.is_empty() {
        return Err(MetricsError::EmptySuite);
    }
    let n = episodes.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n;
    let rate = |f: &dyn Fn(&EpisodeMetrics) -> bool| 100.0 * episodes.iter().filter(|e| f(e)).count() as f64 / n;
    let backend_calls = episodes.iter().map(|e| e.backend_calls).sum();
    let total_seconds = episodes.iter().map(|e| e.total_seconds).sum();
    let mut suite = SuiteMetrics {
        episodes: episodes.len(),
        ne_m: mean(&|e| e.ne_m),
        os_pct: rate(&|e| e.oracle_success),
        sr_pct: rate(&|e| e.success),
        spl_pct: 100.0 * mean(&|e| e.spl),
        backend_calls,
        total_seconds,
        avg_step_seconds: mean(&|e| e.avg_step_seconds),
        cost_usd: episodes.iter().map(|e| e.cost_usd).sum(),
        reduction: None,
    };
    if let Some(b) = baseline {
        suite.reduction = Some(Reduction {
            backend_calls_pct: reduction_pct(suite.backend_calls as f64, b.backend_calls as f64),
            time_pct: reduction_pct(suite.total_seconds, b.total_seconds),
        });
    }
    Ok(suite)
}

/// Aligned plain-text table, one row per condition.
pub fn render_table(rows: &[(&str, &SuiteMetrics)]) -> String {
    let header =
        ["condition", "episodes", "NE(m)", "OS", "SR", "SPL", "calls", "time(s)", "cost($)", "calls-red%", "time-red%"];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (name, m) in rows {
        let red = |f: fn(&Reduction) -> f64| {
            m.reduction.as_ref().map(|r| format!("{:.1}", f(r))).unwrap_or_else(|| "-".into())
        };
        cells.push(vec![
            name.to_string(),
            m.episodes.to_string(),
            format!("{:.2}", m.ne_m),
            format!("{:.1}", m.os_pct),
            format!("{:.1}", m.sr_pct),
            format!("{:.1}", m.spl_pct),
            m.backend_calls.to_string(),
            format!("{:.3}", m.total_seconds),
            format!("{:.3}", m.cost_usd),
            red(|r| r.backend_calls_pct),
            red(|r| r.time_pct),
        ]);
    }
    let widths: Vec<usize> = (0..header.len()).map(|i| cells.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}
