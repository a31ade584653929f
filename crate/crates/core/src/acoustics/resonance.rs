use crate::acoustics::container::{ContainerSpec, END_CORRECTION, OBSERVED_BAND_HZ, SPEED_OF_SOUND_M_S};
use crate::error::AcousticsError;
use crate::Scalar;

/// Fundamental of the air column plus a flag for leaving the observed band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance<T> {
    pub hz: T,
    pub out_of_band: bool,
}

/// Quarter-wave resonance of the air column above the liquid:
/// `f = c / (4 (L + 0.3 d))`.
pub fn resonance_frequency<T: Scalar>(
    air_column_mm: T,
    container: &ContainerSpec,
) -> Result<Resonance<T>, AcousticsError> {
    let total = T::of(container.total_height_mm);
    if !(air_column_mm > T::zero() && air_column_mm <= total) {
        return Err(AcousticsError::AirColumnOutOfRange {
            air_column_mm: air_column_mm.f64(),
            total_height_mm: container.total_height_mm,
        });
    }
    let hz = quarter_wave_hz(air_column_mm, T::of(container.inner_diameter_mm));
    let (lo, hi) = OBSERVED_BAND_HZ;
    Ok(Resonance { hz, out_of_band: hz < T::of(lo) || hz > T::of(hi) })
}

/// Unchecked closed-pipe formula; lengths in mm.
#[inline]
pub(crate) fn quarter_wave_hz<T: Scalar>(air_column_mm: T, diameter_mm: T) -> T {
    let effective_m = (air_column_mm + T::of(END_CORRECTION) * diameter_mm) / T::of(1000.0);
    T::of(SPEED_OF_SOUND_M_S) / (T::of(4.0) * effective_m)
}

/// Inverse of the closed-pipe formula: the air column that resonates at `hz`.
pub fn air_column_for_frequency(hz: f64, container: &ContainerSpec) -> f64 {
    SPEED_OF_SOUND_M_S * 1000.0 / (4.0 * hz) - END_CORRECTION * container.inner_diameter_mm
}
