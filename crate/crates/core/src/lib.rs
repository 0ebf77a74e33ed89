//! Simulation and validation of STIT tessellation processes in bounded
//! windows of the line and the plane.

pub mod geometry;
pub mod measure;
pub mod tess;
pub mod tree;
pub mod construct;
pub mod oracle;
pub mod stats;
pub mod cli;
