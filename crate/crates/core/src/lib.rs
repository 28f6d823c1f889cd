//! Two-phase embodied navigation on a grid world.
//!
//! The exploration phase drives a decision backend through an
//! observe / decide / execute / merge loop until the top-down scene graph
//! is complete enough. The deployment phase decomposes a task prompt into
//! subtasks and answers each tick from a hierarchical trajectory cache,
//! falling back to the backend only on a miss.

pub mod backend;
pub mod cache;
pub mod explore;
pub mod metrics;
pub mod pathfind;
pub mod plan;
pub mod scenegraph;
pub mod vlmclient;
pub mod world;
