#![allow(dead_code)]

use std::path::PathBuf;

use scenenav::world::{GridWorld, Heading, Pose};

pub const CONNECTED: [&str; 9] =
    ["open_room", "wall", "apartment", "two_room", "small_two_room", "ring", "office", "maze", "warehouse"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn map_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(&format!("{name}.map"))).unwrap()
}

pub fn load(name: &str) -> GridWorld {
    let text = std::fs::read(fixture_path(&format!("{name}.map"))).unwrap();
    let side = std::fs::read(fixture_path(&format!("{name}.json"))).ok();
    GridWorld::load(&text, side.as_deref()).unwrap()
}

pub fn start(world: &GridWorld) -> Pose {
    Pose::at(world.start_cell().expect("fixture has a start"), Heading::North)
}
