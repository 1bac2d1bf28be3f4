//! Experiment configuration file.
//!
//! TOML with four required tables (`radar`, `scene`, `grid`, `metrics`) and
//! two optional ones (`solver`, `filter`). Angles are given in degrees and
//! powers in dB relative to the noise power; both are converted here.
//! Unknown keys are rejected. See `configs/example.cfg` for every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dictionary::DictionaryGrid;
use crate::error::{Error, Result};
use crate::geometry::{AngularSector, RadarConfig};
use crate::scene::{ClutterScene, Interferer, TargetSpec};
use crate::solvers::{FocussOptions, L1Options};
use crate::stap::{Method, MethodSettings, NOISE_FLOOR_FACTOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub radar: RadarSection,
    pub scene: SceneSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub filter: FilterSection,
    pub metrics: MetricsSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSection {
    pub num_channels: usize,
    pub num_pulses: usize,
    pub velocity: f64,
    pub pri: f64,
    pub sample_rate: f64,
    pub wavelength: f64,
    pub element_spacing: f64,
    pub height: f64,
    pub crab_angle_deg: f64,
    pub input_scr_db: f64,
}

impl Default for RadarSection {
    fn default() -> Self {
        let t = RadarConfig::table_one();
        Self {
            num_channels: t.num_channels,
            num_pulses: t.num_pulses,
            velocity: t.velocity,
            pri: t.pri,
            sample_rate: t.sample_rate,
            wavelength: t.wavelength,
            element_spacing: t.element_spacing,
            height: t.height,
            crab_angle_deg: 0.0,
            input_scr_db: t.input_scr_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub sector_deg: [f64; 2],
    #[serde(default = "default_scatters")]
    pub num_scatters: usize,
    #[serde(default = "one")]
    pub noise_power: f64,
    pub num_range_cells: usize,
    /// Range cell whose ridge is shared by all cells of a side-looking
    /// array; defaults to the target cell.
    #[serde(default)]
    pub reference_cell: Option<usize>,
    #[serde(default)]
    pub target: Option<TargetSection>,
    #[serde(default)]
    pub interferers: Vec<InterfererSection>,
}

fn default_scatters() -> usize {
    181
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub range_cell: usize,
    pub azimuth_deg: f64,
    pub normalized_doppler: f64,
    #[serde(default)]
    pub power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererSection {
    pub aoa_deg: f64,
    pub normalized_doppler: f64,
    pub power_db: f64,
    pub range_cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub rho_s: usize,
    pub rho_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub focuss: FocussOptions,
    /// FOCUSS power floor as a multiple of the noise power.
    pub noise_floor: f64,
    pub l1: L1Options,
    /// L1 error allowance as a multiple of the expected noise norm.
    pub l1_epsilon_scale: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            focuss: FocussOptions::default(),
            noise_floor: NOISE_FLOOR_FACTOR,
            l1: L1Options::default(),
            l1_epsilon_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Diagonal loading as a multiple of the noise power.
    pub loading: f64,
    pub guard: [usize; 2],
    pub d3ls_subaperture: [usize; 2],
    /// LSMI training snapshots; `2NM` when absent.
    pub lsmi_training: Option<usize>,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            loading: 1.0,
            guard: [3, 3],
            d3ls_subaperture: [8, 8],
            lsmi_training: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Number of sweep Dopplers, spaced evenly around the circle with one
    /// of them at the clutter notch of the target direction.
    #[serde(default = "default_points")]
    pub mdv_points: usize,
    /// Explicit sweep Dopplers; overrides `mdv_points`.
    #[serde(default)]
    pub mdv_dopplers: Option<Vec<f64>>,
    pub trials: usize,
    /// Oversampling of the adapted output spectrum map.
    #[serde(default = "default_adapted_rho")]
    pub adapted_rho: usize,
}

fn default_points() -> usize {
    15
}

fn default_adapted_rho() -> usize {
    1
}

/// Library objects described by a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub radar: RadarConfig,
    pub scene: ClutterScene,
    pub grid: DictionaryGrid,
    pub map_grid: DictionaryGrid,
    pub settings: MethodSettings,
    pub num_range_cells: usize,
    pub warnings: Vec<String>,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses TOML text; syntax errors and unknown keys carry line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                line,
                message: e.message().trim().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Validates every block and builds the library objects.
    pub fn build(&self) -> Result<Experiment> {
        if self.methods.is_empty() {
            return Err(field_err("methods", "at least one method is required"));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return Err(field_err("methods", format!("`{m}` listed twice")));
            }
        }
        let r = &self.radar;
        let radar = RadarConfig {
            num_channels: r.num_channels,
            num_pulses: r.num_pulses,
            velocity: r.velocity,
            pri: r.pri,
            sample_rate: r.sample_rate,
            wavelength: r.wavelength,
            element_spacing: r.element_spacing,
            height: r.height,
            crab_angle: r.crab_angle_deg.to_radians(),
            input_scr_db: r.input_scr_db,
        };
        let warnings = radar.validate().map_err(|e| field_err("radar", e))?;

        let s = &self.scene;
        if s.num_range_cells == 0 {
            return Err(field_err("scene.num_range_cells", "must be at least 1"));
        }
        let sector = AngularSector::from_degrees(s.sector_deg[0], s.sector_deg[1])
            .map_err(|e| field_err("scene.sector_deg", e))?;
        let target = s.target.as_ref().map(|t| TargetSpec {
            range_cell: t.range_cell,
            azimuth: t.azimuth_deg.to_radians(),
            normalized_doppler: t.normalized_doppler,
            power: db_to_linear(t.power_db) * s.noise_power,
        });
        if let Some(t) = &target {
            if t.range_cell >= s.num_range_cells {
                return Err(field_err("scene.target.range_cell", "outside the simulated range cells"));
            }
        }
        let interferers: Vec<Interferer> = s
            .interferers
            .iter()
            .map(|i| {
                Interferer::from_aoa(
                    &radar,
                    i.aoa_deg.to_radians(),
                    i.normalized_doppler,
                    db_to_linear(i.power_db) * s.noise_power,
                    i.range_cells.clone(),
                )
            })
            .collect();
        let reference_cell = s
            .reference_cell
            .or(target.as_ref().map(|t| t.range_cell))
            .unwrap_or(0);
        let scene = ClutterScene {
            sector,
            num_scatters: s.num_scatters,
            noise_power: s.noise_power,
            interferers,
            reference_power: target.as_ref().map_or(s.noise_power, |t| t.power),
            target,
            reference_cell,
            seed: self.seed,
        };
        scene.validate().map_err(|e| field_err("scene", e))?;

        let grid = DictionaryGrid::new(&radar, self.grid.rho_s, self.grid.rho_t).map_err(|e| field_err("grid", e))?;
        let map_grid = DictionaryGrid::new(&radar, self.metrics.adapted_rho, self.metrics.adapted_rho)
            .map_err(|e| field_err("metrics.adapted_rho", e))?;

        let mut settings = MethodSettings::new(&radar, s.noise_power);
        settings.focuss = FocussOptions {
            noise_power: self.solver.noise_floor * s.noise_power,
            ..self.solver.focuss
        };
        settings.focuss.validate().map_err(|e| field_err("solver.focuss", e))?;
        if !(self.solver.noise_floor >= 0.0) {
            return Err(field_err("solver.noise_floor", "must be non-negative"));
        }
        settings.l1 = self.solver.l1;
        if !(self.solver.l1_epsilon_scale >= 0.0) {
            return Err(field_err("solver.l1_epsilon_scale", "must be non-negative"));
        }
        settings.l1_epsilon_scale = self.solver.l1_epsilon_scale;
        let f = &self.filter;
        if !(f.loading >= 0.0) {
            return Err(field_err("filter.loading", "must be non-negative"));
        }
        settings.loading = f.loading * s.noise_power;
        if f.guard.iter().any(|g| g % 2 == 0) {
            return Err(field_err("filter.guard", "guard sizes must be odd"));
        }
        settings.guard = (f.guard[0], f.guard[1]);
        let [na, np] = f.d3ls_subaperture;
        if na == 0 || np == 0 || na > radar.num_channels || np > radar.num_pulses {
            return Err(field_err("filter.d3ls_subaperture", "must fit inside the array"));
        }
        settings.d3ls_subaperture = (na, np);
        if let Some(l) = f.lsmi_training {
            if l == 0 {
                return Err(field_err("filter.lsmi_training", "must be at least 1"));
            }
            settings.lsmi_training = l;
        }

        let m = &self.metrics;
        if m.trials == 0 {
            return Err(field_err("metrics.trials", "must be at least 1"));
        }
        match &m.mdv_dopplers {
            Some(axis) => {
                if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(field_err("metrics.mdv_dopplers", "must be non-empty and strictly increasing"));
                }
            }
            None if m.mdv_points == 0 => return Err(field_err("metrics.mdv_points", "must be at least 1")),
            None => {}
        }
        if (self.methods.iter().any(|m| *m != Method::None && *m != Method::D3ls)
            || m.mdv_dopplers.is_none())
            && scene.target.is_none()
        {
            return Err(field_err("scene.target", "required for SOI-based processing and sweeps"));
        }

        Ok(Experiment {
            config: self.clone(),
            radar,
            scene,
            grid,
            map_grid,
            settings,
            num_range_cells: s.num_range_cells,
            warnings,
        })
    }
}
