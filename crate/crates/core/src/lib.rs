//! Multi-point positioning of a target vehicle from mmWave stepped-frequency
//! measurements collected by a sensing vehicle, including through specular
//! reflections off planar surfaces.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`signal`] simulates demodulated SFCW and signature-waveform phasors.
//! 2. [`sync`] estimates representative-antenna positions and the clock gap
//!    from phase differences of arrival.
//! 3. [`imaging`] reconstructs a 3-D reflectivity image per path.
//! 4. [`mapping`] maps virtual (mirrored) images back to real positions.
//! 5. [`metrics`] scores reconstructions with the Hausdorff distance.
//!
//! [`pipeline`] wires them together and [`config`] loads scenario files.

pub mod config;
pub mod geometry;
pub mod imaging;
pub mod mapping;
pub mod metrics;
pub mod pipeline;
pub mod signal;
pub mod sync;
