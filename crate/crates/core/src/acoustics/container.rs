use serde::{Deserialize, Serialize};

use crate::error::AcousticsError;

/// Speed of sound in air at room temperature.
pub const SPEED_OF_SOUND_M_S: f64 = 343.0;
/// Open-end correction as a fraction of the inner diameter.
pub const END_CORRECTION: f64 = 0.3;
/// Band in which the rising air resonance is visible in recorded pours.
pub const OBSERVED_BAND_HZ: (f64, f64) = (256.0, 2048.0);

/// Geometry and timbre of a target container. Cylinders only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub name: String,
    pub total_height_mm: f64,
    pub inner_diameter_mm: f64,
    /// In (0, 1]. Higher damping shortens the ring-down and deepens the
    /// turbulence amplitude modulation.
    pub material_damping: f64,
    pub resonance_gain: f64,
}

impl ContainerSpec {
    pub fn new(
        name: impl Into<String>,
        total_height_mm: f64,
        inner_diameter_mm: f64,
        material_damping: f64,
        resonance_gain: f64,
    ) -> Result<Self, AcousticsError> {
        let spec = Self {
            name: name.into(),
            total_height_mm,
            inner_diameter_mm,
            material_damping,
            resonance_gain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AcousticsError> {
        let bad = |reason: &str| {
            Err(AcousticsError::InvalidContainer {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.total_height_mm > 0.0 && self.total_height_mm.is_finite()) {
            return bad("total height must be positive");
        }
        if !(self.inner_diameter_mm > 0.0 && self.inner_diameter_mm.is_finite()) {
            return bad("inner diameter must be positive");
        }
        if !(self.material_damping > 0.0 && self.material_damping <= 1.0) {
            return bad("material damping must lie in (0, 1]");
        }
        if !(self.resonance_gain > 0.0 && self.resonance_gain.is_finite()) {
            return bad("resonance gain must be positive");
        }
        Ok(())
    }

    /// Cross-section area in mm².
    pub fn area_mm2(&self) -> f64 {
        let r = 0.5 * self.inner_diameter_mm;
        std::f64::consts::PI * r * r
    }

    /// Water volume in ml that raises the level by `height_mm`.
    pub fn volume_ml(&self, height_mm: f64) -> f64 {
        height_mm * self.area_mm2() / 1000.0
    }

    /// The three containers of the training corpus (glass, thermos, mug).
    pub fn training_set() -> Vec<ContainerSpec> {
        vec![
            Self::new("glass", 127.0, 70.0, 0.6, 0.5).unwrap(),
            Self::new("thermos", 150.0, 70.0, 0.3, 0.6).unwrap(),
            Self::new("mug", 99.0, 70.0, 0.8, 0.4).unwrap(),
        ]
    }

    /// Containers never seen in training.
    pub fn unseen_set() -> Vec<ContainerSpec> {
        vec![
            Self::new("red_mug", 97.0, 72.0, 0.7, 0.45).unwrap(),
            Self::new("blue_mug", 94.0, 68.0, 0.75, 0.5).unwrap(),
            Self::new("plastic_cup", 103.0, 73.0, 0.9, 0.35).unwrap(),
        ]
    }

    /// Looks a container up by name in the built-in library.
    pub fn builtin(name: &str) -> Option<ContainerSpec> {
        Self::training_set()
            .into_iter()
            .chain(Self::unseen_set())
            .find(|c| c.name == name)
    }
}
