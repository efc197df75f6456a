//! Continuous scene representations for embodied agents.
//!
//! A grid-world agent walks two trajectories through a scene (before and
//! after some objects move), encodes what it sees into continuous feature
//! vectors, fuses observations into a persistent scene graph, detects which
//! objects moved, and plans over a pose-indexed state graph to put them back.

pub mod csr;
pub mod embodied;
pub mod encoder;
pub mod numerics;
pub mod pipeline;
pub mod world;
