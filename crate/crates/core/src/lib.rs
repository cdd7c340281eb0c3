//! Skill and ability graphs for automated vehicles.
//!
//! A [`graph::SkillGraph`] captures, at development time, which skills a
//! maneuver needs and how they depend on each other. Safety requirements are
//! annotated on its edges ([`requirements`]) and turned into performance
//! [`metrics`]. At runtime the skill graph is instantiated as an
//! [`ability::AbilityGraph`] whose edge weights are propagated performance
//! levels; the resulting status drives the operating-mode state machine in
//! [`modes`]. [`sim`] closes the loop with a small lane-following simulation.

pub mod ability;
pub mod graph;
pub mod metrics;
pub mod modes;
pub mod quantity;
pub mod requirements;
pub mod sim;
