//! Exploration and deployment prompt templates.

use std::fmt::Write as _;

use crate::plan::{ConstraintSet, TaskPrompt};

pub const PPM_MEDIA_TYPE: &str = "image/x-portable-pixmap";

const EXPLORATION_META: &str = "Prompt: Generate simple step-by-step navigation instructions for a robot exploring an unknown environment. The robot can only perform the following actions: move forward, turn left, turn right, and stop.";

pub const EXPLORATION_CONSTRAINTS: [&str; 4] = [
    "Use only the allowed actions.",
    "Return a single action.",
    "Stop when exploration of the visible environment is complete or when further movement is unsafe.",
    "Avoid visiting explored areas",
];

const DEPLOYMENT_META: &str =
    "Prompt: Move from your start location to a goal location using the provided top-down scene graph and camera view.";

pub const LEGEND: [&str; 5] = [
    "- SQUARE: Your starting position.",
    "- BLUE ARROW: Your current position & heading.",
    "- BLUE LINE: Your trajectory so far.",
    "- GRAY AREAS: Navigable floor where you can walk.",
    "- WHITE AREAS: Obstacles or walls you cannot walk through.",
];

pub const NAVIGATION_RULES: [&str; 5] = [
    "- Use a top-down scene graph to determine the direction to move in.",
    "- Only walk on gray areas; never move forward into white areas.",
    "- If the goal is beside or behind you, turn toward it before moving forward.",
    "- Stop as soon as you are within 3 meters of the goal.",
    "- Do not stop anywhere else.",
];

const RESPONSE: &str = "Response: <One of the four actions>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Exploration,
    Deployment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image { label: &'static str, media_type: &'static str, data: Vec<u8> },
}

/// A rendered prompt: one system text and an ordered list of user parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub system: String,
    pub constraint_block: String,
    pub parts: Vec<Part>,
}

impl PromptBundle {
    pub fn images(&self) -> impl Iterator<Item = &[u8]> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image { data, .. } => Some(data.as_slice()),
            Part::Text(_) => None,
        })
    }

    /// Human-readable rendering with images reduced to a size marker.
    pub fn transcript(&self) -> String {
        let mut out = format!("[system]\n{}\n[user]\n", self.system);
        for part in &self.parts {
            match part {
                Part::Text(t) => writeln!(out, "{t}").unwrap(),
                Part::Image { label, media_type, data } => {
                    writeln!(out, "[image: {label}, {media_type}, {} bytes]", data.len()).unwrap()
                }
            }
        }
        out
    }
}

fn bullets<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    items.into_iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
}

pub fn build_exploration_prompt(constraints: &ConstraintSet, graph_image: &[u8], fpv_image: &[u8]) -> PromptBundle {
    let all = EXPLORATION_CONSTRAINTS.iter().copied().chain(constraints.items.iter().map(String::as_str));
    let constraint_block = format!("Constraints:\n{}", bullets(all));
    PromptBundle {
        mode: PromptMode::Exploration,
        system: EXPLORATION_META.to_owned(),
        parts: vec![
            Part::Text(constraint_block.clone()),
            Part::Text("Scene Graph:".into()),
            Part::Image { label: "scene graph", media_type: PPM_MEDIA_TYPE, data: graph_image.to_vec() },
            Part::Text("Visual Observation:".into()),
            Part::Image { label: "visual observation", media_type: PPM_MEDIA_TYPE, data: fpv_image.to_vec() },
            Part::Text(RESPONSE.into()),
        ],
        constraint_block,
    }
}

pub fn build_deployment_prompt(
    constraints: &ConstraintSet,
    graph_image: &[u8],
    fpv_image: &[u8],
    task: &TaskPrompt,
    subtask: Option<&TaskPrompt>,
) -> PromptBundle {
    let mut goal = format!("Goal: {}", task.text());
    if let Some(s) = subtask {
        write!(goal, "\nCurrent subtask: {}", s.text()).unwrap();
    }
    let constraint_block = if constraints.items.is_empty() {
        "Constraints:\n- none".to_owned()
    } else {
        format!("Constraints:\n{}", bullets(constraints.items.iter().map(String::as_str)))
    };
    PromptBundle {
        mode: PromptMode::Deployment,
        system: DEPLOYMENT_META.to_owned(),
        parts: vec![
            Part::Text(goal),
            Part::Text(constraint_block.clone()),
            Part::Text("Scene Graph:".into()),
            Part::Image { label: "scene graph", media_type: PPM_MEDIA_TYPE, data: graph_image.to_vec() },
            Part::Text(LEGEND.join("\n")),
            Part::Text("Visual Observation:".into()),
            Part::Image { label: "visual observation", media_type: PPM_MEDIA_TYPE, data: fpv_image.to_vec() },
            Part::Text(format!("NAVIGATION RULES:\n{}", NAVIGATION_RULES.join("\n"))),
            Part::Text(RESPONSE.into()),
        ],
        constraint_block,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_lists_default_constraints_in_order() {
        let p = build_exploration_prompt(&ConstraintSet::default(), b"g", b"f");
        let t = p.transcript();
        let mut at = 0;
        for c in EXPLORATION_CONSTRAINTS {
            let i = t[at..].find(c).expect("constraint present") + at;
            at = i + c.len();
        }
        assert!(t.contains("move forward, turn left, turn right, and stop"));
    }

    #[test]
    fn user_constraints_are_appended() {
        let p = build_exploration_prompt(&ConstraintSet::new(["do not enter bedrooms"]), b"g", b"f");
        assert!(p.constraint_block.ends_with("- Avoid visiting explored areas\n- do not enter bedrooms"));
    }

    #[test]
    fn deployment_has_legend_and_rules() {
        let p =
            build_deployment_prompt(&ConstraintSet::default(), b"g", b"f", &TaskPrompt::new("go to the kitchen"), None);
        let t = p.transcript();
        for line in LEGEND {
            assert!(t.contains(line));
        }
        assert!(t.contains("NAVIGATION RULES:"));
        assert!(t.contains("Goal: go to the kitchen"));
        assert_eq!(p.images().count(), 2);
    }
}
