//! Planning library and simulator for target-designated grasping in
//! orderly-stacked scenes.
//!
//! The scene is modelled as a DAG of typed support relations (stable
//! and weak). Given a set of designated targets, the planner groups
//! targets connected by stable support, orders the groups leaf to
//! root, and runs a belief-space lookahead over grasp actions to find
//! the decision chain with the highest expected discounted return. A
//! seeded simulator generates stacked scenes, samples noisy
//! observations and resolves grasp attempts, and the evaluation
//! harness scores planned chains against noiseless reference chains.

pub mod config;
pub mod eval;
pub mod planner;
pub mod pomdp;
pub mod scene;
pub mod sim;
