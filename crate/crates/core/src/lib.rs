//! Closed-loop embodied agent: observer, history memory, planner and critic
//! driving a partially observable kitchen simulator, plus the trial harness
//! that compares the closed-loop agent with its ablations.

pub mod agent;
pub mod backend;
pub mod harness;
pub mod memory;
pub mod observer;
pub mod prompts;
pub mod skills;
pub mod world;
