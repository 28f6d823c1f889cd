use std::path::{Path, PathBuf};

use scenenav::scenegraph::SceneGraph;
use scenenav::world::{Cell, GridWorld, Heading, Pose};
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(path, text)
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Loads a map with its sidecar: the explicit one, else `<stem>.json`
/// beside the map when present.
pub fn load_world(map: &Path, sidecar: Option<&Path>) -> Result<GridWorld> {
    let text = read(map)?;
    let implied: PathBuf = map.with_extension("json");
    let side = match sidecar {
        Some(p) => Some(read(p)?),
        None if implied.is_file() => Some(read(&implied)?),
        None => None,
    };
    GridWorld::load(&text, side.as_deref()).map_err(|e| CliError::Validation(format!("{}: {e}", map.display())))
}

pub fn load_graph(path: &Path) -> Result<SceneGraph> {
    SceneGraph::from_json(&read_text(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// `x,y` or `x,y,H` with H one of N/E/S/W.
pub fn parse_pose(s: &str) -> std::result::Result<Pose, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<i32>().map_err(|_| format!("bad coordinate {t:?}"));
    let heading = match parts.get(2) {
        None => Heading::North,
        Some(h) => h
            .chars()
            .next()
            .and_then(|c| Heading::from_letter(c.to_ascii_uppercase()))
            .filter(|_| h.len() == 1)
            .ok_or_else(|| format!("bad heading {h:?}"))?,
    };
    match parts.as_slice() {
        [x, y] | [x, y, _] => Ok(Pose::at(Cell::new(num(x)?, num(y)?), heading)),
        _ => Err(format!("expected x,y[,H], got {s:?}")),
    }
}
