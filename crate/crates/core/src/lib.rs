//! Simulation and security analysis of a pulsed Gaussian-modulated
//! coherent-state (GMCS) CV-QKD link with a transmitted local oscillator.
//!
//! The crate is organized along the signal path:
//!
//! * [`params`]: system parameters and config ingestion
//! * [`tx`]: symbol generation, framing, IQ modulator and predistortion
//! * [`link`]: fiber channel, heterodyne receiver and oscilloscope traces
//! * [`dsp`]: downsampling, SNU normalization, phase recovery, synchronization
//! * [`estimation`]: asymptotic and finite-size parameter estimation
//! * [`gaussian`] and [`security`]: covariance formalism, Holevo bound and key rates
//! * [`pipeline`]: the end-to-end Monte-Carlo run

pub mod dsp;
pub mod estimation;
pub mod gaussian;
pub mod link;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod security;
pub mod tx;
