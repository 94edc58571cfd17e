//! Few-photon scattering off a two-level emitter in a one-sided cavity.
//!
//! The crate models how short optical pulses are reshaped and delayed when
//! they reflect off a strongly coupled emitter-cavity system: single-photon
//! dispersion, the two-photon scattering matrix, the photon-photon bound
//! state, and a simulated time-tag pipeline for coincidence histograms.

pub mod boundstate;
pub mod extended;
pub mod harness;
pub mod io;
pub mod onephoton;
pub mod optim;
pub mod params;
pub mod pulse;
pub mod spectroscopy;
pub mod twophoton;

pub use params::{DerivedRates, ParamError, ParamFile, SystemParams};
pub use pulse::{Grid1D, PulseSpec, SampledWaveform};
