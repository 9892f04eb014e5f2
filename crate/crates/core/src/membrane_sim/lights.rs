use serde::{Deserialize, Serialize};

use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedColor {
    Red,
    Blue,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminationStep {
    Dx,
    Dy,
}

/// Which border of the image an LED row sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Edge {
    Right,
    Bottom,
    Left,
    Top,
}

/// Rows 1–4 go round the square: right, bottom, left, top.
pub(crate) const ROW_EDGES: [Edge; 4] = [Edge::Right, Edge::Bottom, Edge::Left, Edge::Top];

impl Edge {
    /// Unit vector towards the row, camera side positive.
    pub(crate) fn direction(self, elevation: f64) -> [f64; 3] {
        let (c, s) = (elevation.cos(), elevation.sin());
        match self {
            Edge::Right => [c, 0.0, s],
            Edge::Left => [-c, 0.0, s],
            Edge::Bottom => [0.0, c, s],
            Edge::Top => [0.0, -c, s],
        }
    }

    pub(crate) fn distance(self, x: f64, y: f64, w: usize, h: usize) -> f64 {
        match self {
            Edge::Right => (w - 1) as f64 - x,
            Edge::Left => x,
            Edge::Bottom => (h - 1) as f64 - y,
            Edge::Top => y,
        }
    }
}

/// The four perimeter LED rows and their two-step colour schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub dx_rows: [LedColor; 4],
    pub dy_rows: [LedColor; 4],
    /// Peak 8-bit level a fully lit surface reaches next to a row.
    pub intensity: f64,
    /// Exponential falloff per pixel of distance to the row.
    pub attenuation_coeff: f64,
    /// Height of the rows above the membrane plane, as seen from a pixel.
    pub elevation_deg: f64,
}

impl Default for LightRig {
    fn default() -> Self {
        Self {
            dx_rows: [LedColor::Blue, LedColor::Off, LedColor::Red, LedColor::Off],
            dy_rows: [LedColor::Off, LedColor::Blue, LedColor::Off, LedColor::Red],
            intensity: 240.0,
            attenuation_coeff: 1.0 / 900.0,
            elevation_deg: 20.0,
        }
    }
}

impl LightRig {
    pub fn rows(&self, step: IlluminationStep) -> [LedColor; 4] {
        match step {
            IlluminationStep::Dx => self.dx_rows,
            IlluminationStep::Dy => self.dy_rows,
        }
    }

    /// Rows 1,3 carry the blue/red pair in the dx step and rows 2,4 are off;
    /// the dy step is the same pattern rotated by one row.
    pub fn validate(&self) -> Result<()> {
        let pair_ok = |rows: [LedColor; 4], lit: [usize; 2], off: [usize; 2]| {
            let mut colors = [rows[lit[0]], rows[lit[1]]];
            colors.sort_by_key(|c| *c as u8);
            colors == [LedColor::Red, LedColor::Blue]
                && off.iter().all(|&i| rows[i] == LedColor::Off)
        };
        if !pair_ok(self.dx_rows, [0, 2], [1, 3]) {
            return Err(SimError::InvalidSpec(
                "dx step must light rows 1 and 3 in blue/red only".into(),
            ));
        }
        if !pair_ok(self.dy_rows, [1, 3], [0, 2]) {
            return Err(SimError::InvalidSpec(
                "dy step must light rows 2 and 4 in blue/red only".into(),
            ));
        }
        if !(self.intensity > 0.0) || !(self.attenuation_coeff >= 0.0) {
            return Err(SimError::InvalidSpec(
                "intensity must be positive and attenuation non-negative".into(),
            ));
        }
        if !(0.0..90.0).contains(&self.elevation_deg) {
            return Err(SimError::InvalidSpec(
                "elevation must lie in [0, 90) degrees".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rig_is_valid() {
        LightRig::default().validate().unwrap();
    }

    #[test]
    fn wrong_schedule_rejected() {
        let mut rig = LightRig::default();
        rig.dx_rows[1] = LedColor::Red;
        assert!(rig.validate().is_err());
        let base = LightRig::default();
        let rig = LightRig {
            dy_rows: base.dx_rows,
            ..base.clone()
        };
        assert!(rig.validate().is_err());
        let rig = LightRig {
            dx_rows: [LedColor::Red, LedColor::Off, LedColor::Red, LedColor::Off],
            ..base
        };
        assert!(rig.validate().is_err());
    }
}
