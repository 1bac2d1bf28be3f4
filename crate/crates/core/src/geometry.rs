//! Platform and array geometry: how the Doppler of a stationary ground
//! scatterer depends on azimuth, elevation, look direction and crab angle.
//!
//! Conventions used throughout the crate:
//!
//! * azimuth `φ` is measured in the ground plane from the flight direction,
//! * elevation `θ` is the depression angle from the platform to the scatterer,
//! * the look angle `β` is the cone angle between the line of sight and the
//!   array axis, `cos β = cos(φ − ψ)·cos θ`, with `ψ` the crab angle between
//!   array axis and flight direction.
//!
//! All angles are radians. Degrees only appear at the configuration boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for the range-gate spacing.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Tolerance below which a negative discriminant in the look-angle Doppler
/// relation is clamped to zero.
pub const DISCRIMINANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub num_channels: usize,
    pub num_pulses: usize,
    /// Platform velocity (m/s).
    pub velocity: f64,
    /// Pulse repetition interval (s).
    pub pri: f64,
    /// Range sampling rate (Hz).
    pub sample_rate: f64,
    pub wavelength: f64,
    pub element_spacing: f64,
    pub height: f64,
    /// Crab angle between array axis and flight direction (rad).
    pub crab_angle: f64,
    /// Input signal-to-clutter ratio (dB).
    pub input_scr_db: f64,
}

impl RadarConfig {
    /// The airborne system used throughout the experiments: 12 channels,
    /// 12 pulses, 300 m/s, PRI 0.25 ms, 5 MHz, λ = 0.3 m, d = 0.15 m,
    /// H = 3000 m, SCR −30 dB, side-looking.
    pub fn table_one() -> Self {
        Self {
            num_channels: 12,
            num_pulses: 12,
            velocity: 300.0,
            pri: 0.25e-3,
            sample_rate: 5.0e6,
            wavelength: 0.3,
            element_spacing: 0.15,
            height: 3000.0,
            crab_angle: 0.0,
            input_scr_db: -30.0,
        }
    }

    pub fn with_crab_angle(mut self, crab_angle: f64) -> Self {
        self.crab_angle = crab_angle;
        self
    }

    /// Checks the hard invariants. Returns the list of soft warnings
    /// (currently only grating lobes when `d > λ/2`).
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_channels < 2 {
            return bad("num_channels must be at least 2");
        }
        if self.num_pulses < 2 {
            return bad("num_pulses must be at least 2");
        }
        for (name, value) in [
            ("velocity", self.velocity),
            ("pri", self.pri),
            ("wavelength", self.wavelength),
            ("element_spacing", self.element_spacing),
            ("height", self.height),
            ("sample_rate", self.sample_rate),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.crab_angle.is_finite() || !self.input_scr_db.is_finite() {
            return bad("crab_angle and input_scr_db must be finite");
        }
        let mut warnings = Vec::new();
        if self.element_spacing > 0.5 * self.wavelength {
            warnings.push(format!(
                "element spacing {} m exceeds half a wavelength ({} m); expect grating lobes",
                self.element_spacing,
                0.5 * self.wavelength
            ));
        }
        Ok(warnings)
    }

    /// Number of space-time samples NM.
    pub fn dof(&self) -> usize {
        self.num_channels * self.num_pulses
    }

    pub fn prf(&self) -> f64 {
        1.0 / self.pri
    }

    /// Peak clutter Doppler 2v/λ (Hz).
    pub fn max_doppler(&self) -> f64 {
        2.0 * self.velocity / self.wavelength
    }

    /// Range-gate spacing c/(2 f_s).
    pub fn range_gate(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.sample_rate)
    }

    /// Slant range of a range cell; cell 0 sits at the platform height.
    pub fn slant_range(&self, range_cell: usize) -> f64 {
        self.height + range_cell as f64 * self.range_gate()
    }

    /// Spatial frequency (cycles/element) of a look angle.
    pub fn spatial_freq(&self, look_angle: f64) -> f64 {
        self.element_spacing / self.wavelength * look_angle.cos()
    }

    /// Normalized Doppler (cycles/pulse) of a Doppler frequency.
    pub fn normalize_doppler(&self, doppler_hz: f64) -> f64 {
        doppler_hz * self.pri
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterGeometry {
    pub azimuth: f64,
    pub elevation: f64,
    pub slant_range: f64,
    pub look_angle: f64,
}

impl ScatterGeometry {
    /// Places a ground scatterer at `azimuth` in the given range cell.
    pub fn at(cfg: &RadarConfig, azimuth: f64, range_cell: usize) -> Result<Self> {
        let slant_range = cfg.slant_range(range_cell);
        let cos_el = elevation_cos_from_range(cfg.height, slant_range)?;
        let elevation = cos_el.clamp(-1.0, 1.0).acos();
        Ok(Self {
            azimuth,
            elevation,
            slant_range,
            look_angle: look_angle(azimuth, elevation, cfg.crab_angle),
        })
    }
}

/// Branch of the look-angle Doppler relation: which side of the array axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

/// Doppler (Hz) of a stationary scatterer at azimuth `azimuth` and
/// elevation `elevation`.
pub fn doppler_from_angles(cfg: &RadarConfig, azimuth: f64, elevation: f64) -> f64 {
    cfg.max_doppler() * azimuth.cos() * elevation.cos()
}

/// `cos θ` for a scatterer on flat ground at slant range `slant_range`.
pub fn elevation_cos_from_range(height: f64, slant_range: f64) -> Result<f64> {
    if !(slant_range >= height) {
        return Err(Error::RangeBelowHeight { slant_range, height });
    }
    let ratio = height / slant_range;
    Ok((1.0 - ratio * ratio).max(0.0).sqrt())
}

/// Cone angle to the array axis, `cos β = cos(φ − ψ)·cos θ`.
pub fn look_angle(azimuth: f64, elevation: f64, crab_angle: f64) -> f64 {
    ((azimuth - crab_angle).cos() * elevation.cos())
        .clamp(-1.0, 1.0)
        .acos()
}

/// Doppler (Hz) parameterised by look angle and elevation. `Right` takes the
/// `+` sign in front of the square root, `Left` the `−` sign.
pub fn doppler_from_look(
    cfg: &RadarConfig,
    look: f64,
    elevation: f64,
    branch: Branch,
) -> Result<f64> {
    let (cpsi, spsi) = (cfg.crab_angle.cos(), cfg.crab_angle.sin());
    let cb = look.cos();
    let ct = elevation.cos();
    let mut disc = cpsi * cpsi * cb * cb - cb * cb + spsi * spsi * ct * ct;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL {
            return Err(Error::InconsistentGeometry { discriminant: disc });
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let sign = match branch {
        Branch::Right => 1.0,
        Branch::Left => -1.0,
    };
    Ok(cfg.max_doppler() * (cpsi * cb + sign * root))
}

/// Azimuth interval (rad) occupied by clutter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSector {
    pub min: f64,
    pub max: f64,
}

impl AngularSector {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidScene(format!(
                "angular sector [{min}, {max}] must be a non-empty interval"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_degrees(min: f64, max: f64) -> Result<Self> {
        Self::new(min.to_radians(), max.to_radians())
    }

    /// `count` azimuths uniformly spanning the sector, endpoints included.
    pub fn samples(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![0.5 * (self.min + self.max)],
            _ => {
                let step = (self.max - self.min) / (count - 1) as f64;
                (0..count).map(|i| self.min + step * i as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePoint {
    pub azimuth: f64,
    pub look_angle: f64,
    pub doppler_hz: f64,
    /// `(d/λ)·cos β`, cycles/element.
    pub spatial_freq: f64,
    /// `f_d · PRI`, cycles/pulse.
    pub normalized_doppler: f64,
}

/// Evaluates the clutter ridge at a given elevation for `count` azimuth
/// samples of the sector.
pub fn ridge_at_elevation(
    cfg: &RadarConfig,
    elevation: f64,
    sector: &AngularSector,
    count: usize,
) -> Vec<RidgePoint> {
    sector
        .samples(count)
        .into_iter()
        .map(|azimuth| {
            let beta = look_angle(azimuth, elevation, cfg.crab_angle);
            let doppler_hz = doppler_from_angles(cfg, azimuth, elevation);
            RidgePoint {
                azimuth,
                look_angle: beta,
                doppler_hz,
                spatial_freq: cfg.spatial_freq(beta),
                normalized_doppler: cfg.normalize_doppler(doppler_hz),
            }
        })
        .collect()
}

/// Clutter ridge of one range cell: look angle and Doppler for each azimuth
/// sample of the sector.
pub fn clutter_ridge(
    cfg: &RadarConfig,
    range_cell: usize,
    sector: &AngularSector,
    count: usize,
) -> Result<Vec<RidgePoint>> {
    let cos_el = elevation_cos_from_range(cfg.height, cfg.slant_range(range_cell))?;
    let elevation = cos_el.clamp(-1.0, 1.0).acos();
    Ok(ridge_at_elevation(cfg, elevation, sector, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    #[test]
    fn doppler_examples() {
        let cfg = RadarConfig::table_one();
        assert!(doppler_from_angles(&cfg, FRAC_PI_2, 0.3).abs() < 1e-9);
        assert!((doppler_from_angles(&cfg, 0.0, 0.0) - 2000.0).abs() < 1e-9);
        let ct = elevation_cos_from_range(3000.0, 5000.0).unwrap();
        let f = doppler_from_angles(&cfg, FRAC_PI_3, ct.acos());
        assert!((f - 800.0).abs() < 1e-9);
    }

    #[test]
    fn elevation_examples() {
        assert_eq!(elevation_cos_from_range(3000.0, 3000.0).unwrap(), 0.0);
        assert!((elevation_cos_from_range(3000.0, 5000.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((elevation_cos_from_range(3000.0, 1e12).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            elevation_cos_from_range(3000.0, 2999.0),
            Err(Error::RangeBelowHeight { .. })
        ));
    }

    #[test]
    fn look_doppler_tangent_case() {
        let cfg = RadarConfig::table_one().with_crab_angle(FRAC_PI_4);
        let right = doppler_from_look(&cfg, 0.0, 0.0, Branch::Right).unwrap();
        let left = doppler_from_look(&cfg, 0.0, 0.0, Branch::Left).unwrap();
        let expected = 2000.0 * std::f64::consts::FRAC_1_SQRT_2;
        assert!((right - expected).abs() < 1e-6);
        assert!((left - expected).abs() < 1e-6);
    }

    #[test]
    fn unreachable_look_angle_is_rejected() {
        let cfg = RadarConfig::table_one().with_crab_angle(FRAC_PI_4);
        // β = 0 requires cos θ = 1 / cos(φ−ψ) ≥ 1; at θ = 80° it cannot happen.
        let res = doppler_from_look(&cfg, 0.0, 80f64.to_radians(), Branch::Right);
        assert!(matches!(res, Err(Error::InconsistentGeometry { .. })));
    }

    #[test]
    fn side_looking_branches_coincide() {
        let cfg = RadarConfig::table_one();
        for beta in [0.1, 0.7, 1.3, 2.9] {
            let l = doppler_from_look(&cfg, beta, 0.4, Branch::Left).unwrap();
            let r = doppler_from_look(&cfg, beta, 0.4, Branch::Right).unwrap();
            assert!((l - r).abs() < 1e-12);
            assert!((l - 2000.0 * beta.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_examples() {
        let sector = AngularSector::from_degrees(20.0, 60.0).unwrap();
        let cfg = RadarConfig::table_one();
        for p in clutter_ridge(&cfg, 40, &sector, 50).unwrap() {
            assert!((p.doppler_hz - cfg.max_doppler() * p.look_angle.cos()).abs() < 1e-9);
        }
        let crabbed = cfg.with_crab_angle(FRAC_PI_4);
        for p in clutter_ridge(&crabbed, 0, &sector, 50).unwrap() {
            assert!(p.doppler_hz.abs() < 1e-9);
        }
        let a = clutter_ridge(&crabbed, 10, &sector, 50).unwrap();
        let b = clutter_ridge(&crabbed, 60, &sector, 50).unwrap();
        let moved = a
            .iter()
            .zip(&b)
            .any(|(p, q)| (p.doppler_hz - q.doppler_hz).abs() > 1.0);
        assert!(moved);
    }

    #[test]
    fn validate_flags_grating_lobes() {
        let mut cfg = RadarConfig::table_one();
        assert!(cfg.validate().unwrap().is_empty());
        cfg.element_spacing = 0.2;
        assert_eq!(cfg.validate().unwrap().len(), 1);
        cfg.num_channels = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn range_gate_mapping() {
        let cfg = RadarConfig::table_one();
        assert!((cfg.range_gate() - 29.979_245_8).abs() < 1e-9);
        assert_eq!(cfg.slant_range(0), cfg.height);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    proptest! {
        #[test]
        fn side_looking_doppler_depends_on_look_angle_only(beta in 0.0..PI, theta in 0.0..FRAC_PI_2) {
            let cfg = RadarConfig::table_one();
            for branch in [Branch::Left, Branch::Right] {
                let f = doppler_from_look(&cfg, beta, theta, branch).unwrap();
                prop_assert!((f - cfg.max_doppler() * beta.cos()).abs() <= 1e-12 * cfg.max_doppler());
            }
        }

        #[test]
        fn look_parameterisation_matches_azimuth_form(
            phi in -PI..PI,
            theta in 0.0..FRAC_PI_2,
            crab in -FRAC_PI_2..FRAC_PI_2,
        ) {
            let cfg = RadarConfig::table_one().with_crab_angle(crab);
            let beta = look_angle(phi, theta, crab);
            prop_assert!((0.0..=PI).contains(&beta));
            let direct = doppler_from_angles(&cfg, phi, theta);
            let left = doppler_from_look(&cfg, beta, theta, Branch::Left).unwrap();
            let right = doppler_from_look(&cfg, beta, theta, Branch::Right).unwrap();
            let err = (direct - left).abs().min((direct - right).abs());
            prop_assert!(err <= 1e-6 * cfg.max_doppler(), "err {err}");
        }

        #[test]
        fn sector_samples_stay_inside(lo in -3.0..0.0f64, width in 0.01..3.0f64, count in 0usize..50) {
            let s = AngularSector::new(lo, lo + width).unwrap();
            let v = s.samples(count);
            prop_assert_eq!(v.len(), count);
            for a in v {
                prop_assert!(a >= lo - 1e-12 && a <= lo + width + 1e-12);
            }
        }
    }
}
