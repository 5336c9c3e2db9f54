//! Experience-driven task-and-motion planning over foliated manifolds.
//!
//! The pipeline: fit a Gaussian mixture over free-space trajectories and link
//! the components into a base roadmap ([`atlas`]); replicate that roadmap into
//! every leaf of the problem's foliations and stitch leaves at intersection
//! witnesses ([`repmap`]); plan node sequences over the stitched graph with a
//! weighted shortest-path planner ([`mtg`]) or a value-iteration planner
//! ([`mdp`]); solve each single-leaf task with a constrained bidirectional RRT
//! guided by the sequence's distributions ([`motion`]); and feed the tagged
//! samples back into the roadmap's experience counts. The [`harness`] module
//! ties the loop together and runs benchmark batteries.

pub mod atlas;
pub mod bench;
pub mod env;
pub mod error;
pub mod foliation;
pub mod gmm;
pub mod harness;
pub mod mdp;
pub mod motion;
pub mod mtg;
pub mod problem;
pub mod repmap;

pub use error::{Error, Result};
