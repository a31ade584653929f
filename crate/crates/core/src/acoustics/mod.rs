//! Physical model of a container being filled: air-column resonance,
//! synthetic pour recordings with ground truth, and scale calibration.

mod calibration;
mod container;
mod profile;
mod resonance;
mod synth;
mod trace;

pub use calibration::{fit_weight_to_height, heights_from_scale, interpolate_scale, scale_readings, CalibrationPoly};
pub use container::{ContainerSpec, END_CORRECTION, OBSERVED_BAND_HZ, SPEED_OF_SOUND_M_S};
pub use profile::{FlowProfile, PourProfile, Wobble};
pub use resonance::{air_column_for_frequency, resonance_frequency, Resonance};
pub use synth::{simulate_pour, PourSimulator, TraceSample};
pub use trace::PourTrace;
