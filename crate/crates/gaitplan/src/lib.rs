//! Kinodynamic gait planning over elevation maps.
//!
//! The planner's state is a contact *support phase* (attitude, base position
//! and velocity, four footholds, contact flags, phase timings). Transitions
//! between phases are certified by a convex transition-feasibility program
//! built from centroidal dynamics on a Bezier CoM curve, so candidate steps
//! are accepted or rejected by a linear feasibility solve instead of physics
//! simulation. On top of that sit a goal-conditioned environment with reward
//! shaping and failure terminations, a random-shooting planner, evaluation
//! metrics, file formats, and a line-delimited JSON environment service.

pub mod env;
pub mod feasibility;
pub mod formats;
pub mod metrics;
pub mod phase;
pub mod planner;
pub mod protocol;
pub mod terrain;
