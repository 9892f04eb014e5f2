use serde::{Deserialize, Serialize};

use super::{Result, SimError};

/// Lux reading of the bare light source in the opacity bench.
pub const BENCH_SOURCE_LUX: f64 = 466.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finish {
    Transparent,
    SemiReflective,
    SemiMatte,
    OpaqueReflective,
    OpaqueMatte,
}

impl Finish {
    pub const ALL: [Finish; 5] = [
        Finish::Transparent,
        Finish::SemiReflective,
        Finish::SemiMatte,
        Finish::OpaqueReflective,
        Finish::OpaqueMatte,
    ];

    /// The three membranes a camera can see through.
    pub const SEE_THROUGH: [Finish; 3] = [
        Finish::Transparent,
        Finish::SemiMatte,
        Finish::SemiReflective,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finish::Transparent => "transparent",
            Finish::SemiReflective => "semi_reflective",
            Finish::SemiMatte => "semi_matte",
            Finish::OpaqueReflective => "opaque_reflective",
            Finish::OpaqueMatte => "opaque_matte",
        }
    }

    pub fn parse(s: &str) -> Option<Finish> {
        Finish::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn is_reflective(self) -> bool {
        matches!(self, Finish::SemiReflective | Finish::OpaqueReflective)
    }

    /// Lux measured through this membrane on the opacity bench.
    pub fn bench_lux(self) -> f64 {
        match self {
            Finish::Transparent => 442.0,
            Finish::SemiReflective => 352.0,
            Finish::SemiMatte => 363.0,
            Finish::OpaqueReflective => 93.0,
            Finish::OpaqueMatte => 141.0,
        }
    }
}

/// Optical and mechanical model of one coated elastomer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembraneSpec {
    pub finish: Finish,
    /// Fraction of external light blocked, in `[0, 1]`.
    pub opacity: f64,
    pub specular_exponent: f64,
    /// Fraction of the image covered by paint spots, in `[0, 1]`.
    pub speckle_density: f64,
    /// Radius in pixels of the deformation smoothing kernel.
    pub stiffness_radius: f64,
}

impl MembraneSpec {
    /// Membrane whose opacity reproduces its bench reading exactly.
    pub fn preset(finish: Finish) -> Self {
        let opacity = 1.0 - finish.bench_lux() / BENCH_SOURCE_LUX;
        let (specular_exponent, speckle_density) = match finish {
            Finish::Transparent => (60.0, 0.0),
            Finish::SemiReflective | Finish::OpaqueReflective => (24.0, 0.03),
            Finish::SemiMatte | Finish::OpaqueMatte => (4.0, 0.004),
        };
        Self {
            finish,
            opacity,
            specular_exponent,
            speckle_density,
            stiffness_radius: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.opacity) {
            return Err(SimError::InvalidSpec(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if !unit.contains(&self.speckle_density) {
            return Err(SimError::InvalidSpec(format!(
                "speckle density {} outside [0, 1]",
                self.speckle_density
            )));
        }
        if !(self.stiffness_radius >= 0.0) {
            return Err(SimError::InvalidSpec(format!(
                "negative stiffness radius {}",
                self.stiffness_radius
            )));
        }
        if !(self.specular_exponent >= 0.0) {
            return Err(SimError::InvalidSpec("negative specular exponent".into()));
        }
        Ok(())
    }

    pub fn transmission(&self) -> f64 {
        1.0 - self.opacity
    }

    /// Diffuse reflectance of the coating under the internal LEDs.
    pub(crate) fn albedo(&self) -> f64 {
        match self.finish {
            Finish::Transparent => 0.55,
            Finish::SemiReflective => 1.0,
            Finish::SemiMatte => 0.4,
            Finish::OpaqueReflective => 1.0,
            Finish::OpaqueMatte => 0.4,
        }
    }

    /// Weight of the specular lobe.
    pub(crate) fn gloss(&self) -> f64 {
        match self.finish {
            Finish::Transparent => 0.05,
            Finish::SemiReflective | Finish::OpaqueReflective => 0.25,
            Finish::SemiMatte | Finish::OpaqueMatte => 0.0,
        }
    }

    /// Gain and per-frame flicker of the paint spots seen in vision mode.
    /// Reflective paint glints; matte paint leaves dull, stable dots.
    pub(crate) fn speckle_profile(&self) -> (f64, f64) {
        if self.finish.is_reflective() {
            (1.2, 0.8)
        } else {
            (-0.35, 0.05)
        }
    }
}

/// Lux-meter reading through an optional membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpacityReading {
    pub transmitted_lux: f64,
    /// `None` for the bare-source reading.
    pub opacity_pct: Option<f64>,
}

/// Reproduces the lux-meter bench: the meter sees `source_lux` attenuated by
/// the membrane, and opacity is the blocked fraction of the bare reading.
pub fn measure_opacity(membrane: Option<&MembraneSpec>, source_lux: f64) -> Result<OpacityReading> {
    if !(source_lux > 0.0) || !source_lux.is_finite() {
        return Err(SimError::InvalidSpec(format!(
            "source must be positive, got {source_lux}"
        )));
    }
    let reference = source_lux;
    Ok(match membrane {
        None => OpacityReading {
            transmitted_lux: reference,
            opacity_pct: None,
        },
        Some(m) => {
            m.validate()?;
            let transmitted = source_lux * (1.0 - m.opacity);
            OpacityReading {
                transmitted_lux: transmitted,
                opacity_pct: Some((1.0 - transmitted / reference) * 100.0),
            }
        }
    })
}
