//! Space-time steering vectors and synthesis of test-cell / training-cell
//! snapshots made of clutter, discrete interference, a moving target and
//! thermal noise.
//!
//! Spatial frequency convention: a ground scatterer with look angle `β`
//! (cone angle to the array axis) has spatial frequency `(d/λ)·cos β`. This
//! keeps steering vectors consistent with the Doppler/look-angle relations
//! in [`crate::geometry`]. Discrete interferers are specified by angle of
//! arrival measured from array broadside, i.e. `(d/λ)·sin(aoa)`, or by their
//! spatial frequency directly.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, AngularSector, RadarConfig};
use crate::rng::{self, Rng};
use crate::C64;

/// Amplitude of clutter scatterers outside the transmit mainlobe (−20 dB).
pub const SIDELOBE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub values: Vec<C64>,
    pub spatial_freq: f64,
    pub normalized_doppler: f64,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn phasor_ramp(len: usize, freq: f64) -> Vec<C64> {
    (0..len)
        .map(|k| C64::from_polar(1.0, std::f64::consts::TAU * k as f64 * freq))
        .collect()
}

/// `a[k] = exp(j2π k f_sp)`, `k = 0..N`.
pub fn spatial_steering(num_channels: usize, spatial_freq: f64) -> Vec<C64> {
    phasor_ramp(num_channels, spatial_freq)
}

/// `b[m] = exp(j2π m f̄_d)`, `m = 0..M`.
pub fn temporal_steering(num_pulses: usize, normalized_doppler: f64) -> Vec<C64> {
    phasor_ramp(num_pulses, normalized_doppler)
}

/// Kronecker product `a ⊗ b`, spatial index slowest.
pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Space-time steering vector of size `channels × pulses` (used directly for
/// subapertures).
pub fn steering(channels: usize, pulses: usize, spatial_freq: f64, doppler: f64) -> SteeringVector {
    SteeringVector {
        values: kron(
            &spatial_steering(channels, spatial_freq),
            &temporal_steering(pulses, doppler),
        ),
        spatial_freq,
        normalized_doppler: doppler,
    }
}

pub fn space_time_steering(cfg: &RadarConfig, spatial_freq: f64, doppler: f64) -> SteeringVector {
    steering(cfg.num_channels, cfg.num_pulses, spatial_freq, doppler)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub spatial_freq: f64,
    pub normalized_doppler: f64,
    /// Per-element power relative to the noise reference (linear).
    pub power: f64,
    /// Range cells in which this interferer is present.
    pub range_cells: Vec<usize>,
}

impl Interferer {
    pub fn from_aoa(
        cfg: &RadarConfig,
        aoa: f64,
        normalized_doppler: f64,
        power: f64,
        range_cells: Vec<usize>,
    ) -> Self {
        Self {
            spatial_freq: cfg.element_spacing / cfg.wavelength * aoa.sin(),
            normalized_doppler,
            power,
            range_cells,
        }
    }

    /// The five discrete interferers of the side-looking experiment
    /// (angle of arrival, normalized Doppler): (−60°, 0), (−40°, 0.1),
    /// (−20°, 0.2), (40°, 0.1), (60°, −0.4).
    pub fn table_two(cfg: &RadarConfig, power: f64, range_cells: &[usize]) -> Vec<Self> {
        [(-60.0, 0.0), (-40.0, 0.1), (-20.0, 0.2), (40.0, 0.1), (60.0, -0.4)]
            .iter()
            .map(|&(deg, dop): &(f64, f64)| {
                Self::from_aoa(cfg, deg.to_radians(), dop, power, range_cells.to_vec())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub range_cell: usize,
    /// Ground azimuth of the target (rad).
    pub azimuth: f64,
    pub normalized_doppler: f64,
    /// Per-element power relative to the noise reference (linear).
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterScene {
    pub sector: AngularSector,
    pub num_scatters: usize,
    pub noise_power: f64,
    pub interferers: Vec<Interferer>,
    pub target: Option<TargetSpec>,
    /// Target power used to set the clutter level through the input SCR.
    /// Equals the target power whenever a target is configured.
    pub reference_power: f64,
    /// Range cell whose elevation defines the shared clutter ridge of a
    /// side-looking array.
    pub reference_cell: usize,
    pub seed: u64,
}

impl ClutterScene {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.num_scatters < 1 {
            return bad("at least one clutter scatterer is required".into());
        }
        if !(self.noise_power > 0.0) {
            return bad("noise power must be positive".into());
        }
        if !(self.reference_power > 0.0) {
            return bad("reference power must be positive".into());
        }
        let (lo, hi) = (self.sector.min, self.sector.max);
        if !(lo < hi) || hi - lo > std::f64::consts::PI {
            return bad(format!(
                "clutter sector [{:.1}°, {:.1}°] must be a front-lobe interval no wider than 180°",
                lo.to_degrees(),
                hi.to_degrees()
            ));
        }
        for i in &self.interferers {
            if !(i.power >= 0.0) {
                return bad("interferer power must be non-negative".into());
            }
        }
        if let Some(t) = &self.target {
            if !(t.power >= 0.0) {
                return bad("target power must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Total per-element clutter power implied by the input SCR.
    pub fn clutter_power(&self, cfg: &RadarConfig) -> f64 {
        self.reference_power * 10f64.powf(-cfg.input_scr_db / 10.0)
    }

    /// Elevation defining the clutter ridge of `range_cell`. Side-looking
    /// arrays share the ridge of the reference cell; otherwise each cell
    /// uses its own elevation.
    pub fn clutter_elevation(&self, cfg: &RadarConfig, range_cell: usize) -> Result<f64> {
        let cell = if cfg.crab_angle == 0.0 {
            self.reference_cell
        } else {
            range_cell
        };
        let cos_el = geometry::elevation_cos_from_range(cfg.height, cfg.slant_range(cell))?;
        Ok(cos_el.clamp(-1.0, 1.0).acos())
    }

    /// Ridge points of the clutter scatterers of `range_cell`.
    pub fn ridge(&self, cfg: &RadarConfig, range_cell: usize) -> Result<Vec<geometry::RidgePoint>> {
        let el = self.clutter_elevation(cfg, range_cell)?;
        Ok(geometry::ridge_at_elevation(cfg, el, &self.sector, self.num_scatters))
    }

    /// Spatial frequency of the configured target (same geometry as clutter).
    pub fn target_spatial_freq(&self, cfg: &RadarConfig) -> Option<f64> {
        let t = self.target.as_ref()?;
        let el = self.clutter_elevation(cfg, t.range_cell).ok()?;
        Some(cfg.spatial_freq(geometry::look_angle(t.azimuth, el, cfg.crab_angle)))
    }

    pub fn target_steering(&self, cfg: &RadarConfig) -> Option<SteeringVector> {
        let f_sp = self.target_spatial_freq(cfg)?;
        let t = self.target.as_ref()?;
        Some(space_time_steering(cfg, f_sp, t.normalized_doppler))
    }

    /// Transmit taper amplitude of each scatterer: raised cosine over the
    /// central half of the sector, floored at −20 dB outside it.
    pub fn taper(&self) -> Vec<f64> {
        let n = self.num_scatters;
        (0..n)
            .map(|i| {
                let u = if n == 1 {
                    0.0
                } else {
                    2.0 * i as f64 / (n - 1) as f64 - 1.0
                };
                if u.abs() <= 0.5 {
                    (0.5 * (1.0 + (std::f64::consts::TAU * u).cos())).max(SIDELOBE_AMPLITUDE)
                } else {
                    SIDELOBE_AMPLITUDE
                }
            })
            .collect()
    }

    /// Expected power of each clutter scatterer.
    pub fn scatter_powers(&self, cfg: &RadarConfig) -> Vec<f64> {
        let taper = self.taper();
        let total: f64 = taper.iter().map(|g| g * g).sum();
        let scale = self.clutter_power(cfg) / total;
        taper.iter().map(|g| g * g * scale).collect()
    }

    pub fn interferers_in(&self, range_cell: usize) -> impl Iterator<Item = &Interferer> {
        self.interferers
            .iter()
            .filter(move |i| i.range_cells.contains(&range_cell))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchKind {
    Clutter,
    Interference,
}

/// One realized point source of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub kind: PatchKind,
    pub spatial_freq: f64,
    pub normalized_doppler: f64,
    pub amplitude: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub range_cell: usize,
    pub data: Vec<C64>,
    pub clutter: Vec<C64>,
    pub interference: Vec<C64>,
    pub target: Vec<C64>,
    pub noise: Vec<C64>,
    /// Realized clutter scatterers and interferers.
    pub patches: Vec<Patch>,
}

impl Snapshot {
    pub fn from_components(
        range_cell: usize,
        clutter: Vec<C64>,
        interference: Vec<C64>,
        target: Vec<C64>,
        noise: Vec<C64>,
        patches: Vec<Patch>,
    ) -> Self {
        let data = clutter
            .iter()
            .zip(&interference)
            .zip(&target)
            .zip(&noise)
            .map(|(((c, d), t), n)| c + d + t + n)
            .collect();
        Self {
            range_cell,
            data,
            clutter,
            interference,
            target,
            noise,
            patches,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `x_c + x_d + n`, the undesired part of the snapshot.
    pub fn disturbance(&self) -> Vec<C64> {
        self.clutter
            .iter()
            .zip(&self.interference)
            .zip(&self.noise)
            .map(|((c, d), n)| c + d + n)
            .collect()
    }

    /// Snapshot with the discrete interference removed.
    pub fn without_interference(&self) -> Self {
        let zeros = vec![C64::new(0.0, 0.0); self.len()];
        Self::from_components(
            self.range_cell,
            self.clutter.clone(),
            zeros,
            self.target.clone(),
            self.noise.clone(),
            self.patches
                .iter()
                .filter(|p| p.kind == PatchKind::Clutter)
                .copied()
                .collect(),
        )
    }
}

fn accumulate(out: &mut [C64], v: &[C64], amp: C64) {
    for (o, s) in out.iter_mut().zip(v) {
        *o += amp * s;
    }
}

/// `Σ κ_l · d_l` over explicit `(f_sp, f̄_d, κ)` triples.
pub fn interference_sum(cfg: &RadarConfig, sources: &[(f64, f64, C64)]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); cfg.dof()];
    for &(f_sp, f_d, amp) in sources {
        accumulate(&mut out, &space_time_steering(cfg, f_sp, f_d).values, amp);
    }
    out
}

/// Clutter of `range_cell` plus the realized scatterer list. Amplitudes are
/// circular Gaussian with the tapered per-scatterer power.
pub fn synthesize_clutter(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    range_cell: usize,
    rng: &mut Rng,
) -> Result<(Vec<C64>, Vec<Patch>)> {
    let ridge = scene.ridge(cfg, range_cell)?;
    let powers = scene.scatter_powers(cfg);
    let mut out = vec![C64::new(0.0, 0.0); cfg.dof()];
    let mut patches = Vec::with_capacity(ridge.len());
    for (p, &power) in ridge.iter().zip(&powers) {
        let amp = rng::complex_normal(rng, power);
        let v = space_time_steering(cfg, p.spatial_freq, p.normalized_doppler);
        accumulate(&mut out, &v.values, amp);
        patches.push(Patch {
            kind: PatchKind::Clutter,
            spatial_freq: p.spatial_freq,
            normalized_doppler: p.normalized_doppler,
            amplitude: amp,
        });
    }
    Ok((out, patches))
}

/// Discrete interference present in `range_cell`: fixed power, random phase.
pub fn synthesize_interference(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    range_cell: usize,
    rng: &mut Rng,
) -> (Vec<C64>, Vec<Patch>) {
    let mut sources = Vec::new();
    let mut patches = Vec::new();
    for i in scene.interferers_in(range_cell) {
        let amp = i.power.sqrt() * rng::unit_phase(rng);
        sources.push((i.spatial_freq, i.normalized_doppler, amp));
        patches.push(Patch {
            kind: PatchKind::Interference,
            spatial_freq: i.spatial_freq,
            normalized_doppler: i.normalized_doppler,
            amplitude: amp,
        });
    }
    (interference_sum(cfg, &sources), patches)
}

/// One range cell. Draw order is clutter, interference, target phase, noise;
/// the target phase is drawn even when the target is left out so that the
/// remaining components do not depend on `include_target`.
pub fn synthesize_snapshot(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    range_cell: usize,
    include_target: bool,
    rng: &mut Rng,
) -> Result<Snapshot> {
    scene.validate()?;
    let nm = cfg.dof();
    let (clutter, mut patches) = synthesize_clutter(cfg, scene, range_cell, rng)?;
    let (interference, ipatches) = synthesize_interference(cfg, scene, range_cell, rng);
    patches.extend(ipatches);

    let mut target = vec![C64::new(0.0, 0.0); nm];
    if let Some(spec) = &scene.target {
        let phase = rng::unit_phase(rng);
        if include_target {
            let s = scene
                .target_steering(cfg)
                .ok_or_else(|| Error::InvalidScene("target geometry is undefined".into()))?;
            accumulate(&mut target, &s.values, spec.power.sqrt() * phase);
        }
    }

    let noise = (0..nm)
        .map(|_| rng::complex_normal(rng, scene.noise_power))
        .collect();
    Ok(Snapshot::from_components(
        range_cell,
        clutter,
        interference,
        target,
        noise,
        patches,
    ))
}

/// Seed of one cell of a cube: the master seed plus the cell index.
pub fn cell_seed(seed: u64, range_cell: usize) -> u64 {
    seed.wrapping_add(range_cell as u64)
}

/// Range cells `0..num_range_cells`. The target is included only in its own
/// range cell. Cells are synthesized in parallel from per-cell seeds.
pub fn synthesize_cube(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    num_range_cells: usize,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    if num_range_cells == 0 {
        return Err(Error::OutOfRange("a cube needs at least one range cell".into()));
    }
    let target_cell = scene.target.as_ref().map(|t| t.range_cell);
    (0..num_range_cells)
        .into_par_iter()
        .map(|cell| {
            let mut rng = rng::seeded(cell_seed(seed, cell));
            synthesize_snapshot(cfg, scene, cell, target_cell == Some(cell), &mut rng)
        })
        .collect()
}

/// Training snapshots for statistical methods: the `count` range cells
/// nearest to `test_cell` (excluding it), without target or discrete
/// interference.
pub fn training_cells(test_cell: usize, count: usize) -> Vec<usize> {
    let mut cells = Vec::with_capacity(count);
    let mut offset = 1usize;
    while cells.len() < count {
        if let Some(below) = test_cell.checked_sub(offset) {
            cells.push(below);
            if cells.len() == count {
                break;
            }
        }
        cells.push(test_cell + offset);
        offset += 1;
    }
    cells
}

pub fn synthesize_training(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    test_cell: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    let clean = ClutterScene {
        interferers: Vec::new(),
        target: None,
        ..scene.clone()
    };
    training_cells(test_cell, count)
        .into_par_iter()
        .map(|cell| {
            let mut rng = rng::seeded(cell_seed(seed, cell));
            synthesize_snapshot(cfg, &clean, cell, false, &mut rng)
        })
        .collect()
}

/// Clean training cells shared by the training sets of several test cells.
/// Each cell is synthesized once, exactly as [`synthesize_training`] would.
pub struct TrainingPool {
    count: usize,
    cells: BTreeMap<usize, Snapshot>,
}

impl TrainingPool {
    pub fn new(cfg: &RadarConfig, scene: &ClutterScene, test_cells: &[usize], count: usize, seed: u64) -> Result<Self> {
        let clean = ClutterScene {
            interferers: Vec::new(),
            target: None,
            ..scene.clone()
        };
        let wanted: BTreeSet<usize> = test_cells.iter().flat_map(|&c| training_cells(c, count)).collect();
        let wanted: Vec<usize> = wanted.into_iter().collect();
        let snapshots = wanted
            .par_iter()
            .map(|&cell| {
                let mut rng = rng::seeded(cell_seed(seed, cell));
                synthesize_snapshot(cfg, &clean, cell, false, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            count,
            cells: wanted.into_iter().zip(snapshots).collect(),
        })
    }

    /// Training set of `test_cell`, in [`training_cells`] order.
    pub fn training(&self, test_cell: usize) -> Result<Vec<&Snapshot>> {
        training_cells(test_cell, self.count)
            .into_iter()
            .map(|c| {
                self.cells
                    .get(&c)
                    .ok_or_else(|| Error::OutOfRange(format!("training cell {c} of test cell {test_cell} is not in the pool")))
            })
            .collect()
    }
}
