//! JSON persistence. Knowledge is stored row-major as a run-length string of
//! `<count><glyph>` pairs with glyphs `U`, `N`, `O`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GraphLandmark, KnownKind, Region, SceneGraph, SceneGraphError};
use crate::world::{Cell, Pose};

#[derive(Serialize, Deserialize)]
struct RegionFile {
    name: String,
    cells: Vec<[i32; 2]>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    x: i32,
    y: i32,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct SceneGraphFile {
    width: i32,
    height: i32,
    cell_size_m: f64,
    knowledge: String,
    regions: BTreeMap<String, RegionFile>,
    landmarks: BTreeMap<String, LandmarkFile>,
    start: Pose,
    trajectory: Vec<Pose>,
}

pub fn rle_encode(kinds: &[KnownKind]) -> String {
    let mut out = String::new();
    let mut iter = kinds.iter().peekable();
    while let Some(&kind) = iter.next() {
        let mut run = 1usize;
        while iter.peek() == Some(&&kind) {
            iter.next();
            run += 1;
        }
        out.push_str(&run.to_string());
        out.push(kind.glyph());
    }
    out
}

pub fn rle_decode(text: &str) -> Result<Vec<KnownKind>, SceneGraphError> {
    let mut out = Vec::new();
    let mut count = String::new();
    for ch in text.chars() {
        if ch.is_ascii_digit() {
            count.push(ch);
            continue;
        }
        let kind = match ch {
            'U' => KnownKind::Unknown,
            'N' => KnownKind::Navigable,
            'O' => KnownKind::Obstacle,
            other => return Err(SceneGraphError::Parse(format!("bad knowledge glyph {other:?}"))),
        };
        let n: usize =
            count.parse().map_err(|_| SceneGraphError::Parse(format!("missing run length before {ch:?}")))?;
        if n == 0 {
            return Err(SceneGraphError::Parse("zero-length run".into()));
        }
        out.extend(std::iter::repeat_n(kind, n));
        count.clear();
    }
    if !count.is_empty() {
        return Err(SceneGraphError::Parse("trailing run length without glyph".into()));
    }
    Ok(out)
}

impl SceneGraph {
    pub fn to_json(&self) -> String {
        let file = SceneGraphFile {
            width: self.width,
            height: self.height,
            cell_size_m: self.cell_size_m,
            knowledge: rle_encode(&self.knowledge),
            regions: self
                .regions
                .iter()
                .map(|(id, r)| {
                    let cells = r.cells.iter().map(|c| [c.x, c.y]).collect();
                    (id.clone(), RegionFile { name: r.name.clone(), cells })
                })
                .collect(),
            landmarks: self
                .landmarks
                .iter()
                .map(|(id, l)| (id.clone(), LandmarkFile { x: l.cell.x, y: l.cell.y, name: l.name.clone() }))
                .collect(),
            start: self.start,
            trajectory: self.trajectory.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scene graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SceneGraphError> {
        let file: SceneGraphFile = serde_json::from_str(text).map_err(|e| SceneGraphError::Parse(e.to_string()))?;
        if file.width < 1 || file.height < 1 {
            return Err(SceneGraphError::Parse("width and height must be positive".into()));
        }
        let knowledge = rle_decode(&file.knowledge)?;
        if knowledge.len() != (file.width * file.height) as usize {
            return Err(SceneGraphError::Parse(format!(
                "knowledge holds {} cells, expected {}",
                knowledge.len(),
                file.width * file.height
            )));
        }
        let mut g = SceneGraph::blank(file.width, file.height, file.cell_size_m, file.start);
        g.knowledge = knowledge;
        let mut owner: BTreeMap<Cell, String> = BTreeMap::new();
        for (id, r) in file.regions {
            let mut cells = BTreeSet::new();
            for [x, y] in r.cells {
                let cell = Cell::new(x, y);
                if !g.in_bounds(cell) {
                    return Err(SceneGraphError::Parse(format!("region {id:?} cell {cell} out of bounds")));
                }
                if let Some(first) = owner.insert(cell, id.clone()) {
                    return Err(SceneGraphError::Conflict { cell, first, second: id });
                }
                cells.insert(cell);
            }
            g.regions.insert(id, Region { name: r.name, cells });
        }
        for (id, l) in file.landmarks {
            let cell = Cell::new(l.x, l.y);
            if !g.in_bounds(cell) {
                return Err(SceneGraphError::Parse(format!("landmark {id:?} out of bounds")));
            }
            g.landmarks.insert(id, GraphLandmark { cell, name: l.name });
        }
        for pose in file.trajectory {
            g.push_pose(pose)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{GridWorld, Heading};
    use proptest::prelude::*;

    #[test]
    fn rle_matches_format() {
        use KnownKind::*;
        assert_eq!(rle_encode(&[Unknown, Unknown, Navigable, Obstacle, Obstacle, Obstacle]), "2U1N3O");
        assert_eq!(rle_decode("2U1N3O").unwrap().len(), 6);
        assert!(rle_decode("3").is_err());
        assert!(rle_decode("N").is_err());
        assert!(rle_decode("2X").is_err());
    }

    proptest! {
        #[test]
        fn rle_round_trips(raw in proptest::collection::vec(0u8..3, 0..200)) {
            let kinds: Vec<KnownKind> = raw.iter().map(|k| match k {
                0 => KnownKind::Unknown, 1 => KnownKind::Navigable, _ => KnownKind::Obstacle,
            }).collect();
            prop_assert_eq!(rle_decode(&rle_encode(&kinds)).unwrap(), kinds);
        }
    }

    #[test]
    fn json_round_trip() {
        let side = br#"{"regions": {"k": "kitchen"}, "landmarks": [{"id": "sink", "x": 1, "y": 1}]}"#;
        let world = GridWorld::load(b"#####\n#kk.#\n#...#\n#####\n", Some(side)).unwrap();
        let mut g = SceneGraph::from_world(&world, Pose::new(1, 1, Heading::East));
        g.push_pose(Pose::new(2, 1, Heading::East)).unwrap();
        let back = SceneGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_wrong_cell_count() {
        let g = SceneGraph::blank(2, 2, 0.25, Pose::new(0, 0, Heading::North));
        let text = g.to_json().replace("\"4U\"", "\"3U\"");
        assert!(SceneGraph::from_json(&text).is_err());
    }
}
