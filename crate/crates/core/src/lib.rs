//! Quantum rotor models: exact operator algebra on spheres, moment-matrix
//! relaxations, Gaussian rounding and supporting bounds.

pub mod poly;
pub mod polysphere;
pub mod mc;
pub mod phasespace;
pub mod sdpcore;
pub mod relax;
pub mod bov;
pub mod rounding;
pub mod bounds;
pub mod oracle;
