//! Output SCR, range profiles, adapted output spectra and Monte Carlo
//! minimum-detectable-velocity sweeps.
//!
//! Averages over trials are means of linear ratios converted to dB
//! afterwards. Powers in dB are referenced to the noise power.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::DictionaryGrid;
use crate::error::{Error, Result};
use crate::geometry::{self, RadarConfig};
use crate::rng;
use crate::scene::{self, ClutterScene, Snapshot};
use crate::stap::{apply_filter, Method, Pipeline, SoiSpec, StapFilter};
use crate::{linalg, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrReport {
    /// `+∞` when the disturbance is cancelled exactly, `−∞` without target.
    pub scr_db: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub method: Method,
    pub seed: u64,
}

impl ScrReport {
    pub fn ratio(&self) -> f64 {
        10f64.powf(self.scr_db / 10.0)
    }
}

/// `|w^H x_t|² / |w^H (x_c + x_d + n)|²` from the stored components.
pub fn output_scr(filter: &StapFilter, snapshot: &Snapshot, seed: u64) -> Result<ScrReport> {
    let numerator = apply_filter(filter, &snapshot.target)?.norm_sqr();
    let denominator = apply_filter(filter, &snapshot.disturbance())?.norm_sqr();
    let scr_db = if numerator == 0.0 {
        f64::NEG_INFINITY
    } else if denominator == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (numerator / denominator).log10()
    };
    Ok(ScrReport {
        scr_db,
        numerator,
        denominator,
        method: filter.method,
        seed,
    })
}

fn db(power: f64, noise_power: f64) -> f64 {
    if power == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (power / noise_power).log10()
    }
}

/// Output power `|w^H x_r|²` of one filter over every cell of a cube, in dB.
pub fn range_profile(filter: &StapFilter, cube: &[Snapshot], noise_power: f64) -> Result<Vec<f64>> {
    cube.iter()
        .map(|s| Ok(db(apply_filter(filter, &s.data)?.norm_sqr(), noise_power)))
        .collect()
}

/// Range profile where every cell is filtered by its own filter (`filters[k]`
/// designed with cell `k` as the test cell). Linear powers.
pub fn adaptive_range_powers(cube: &[Snapshot], filters: &[StapFilter]) -> Result<Vec<f64>> {
    if filters.len() != cube.len() {
        return Err(Error::DimensionMismatch {
            expected: cube.len(),
            found: filters.len(),
        });
    }
    cube.iter()
        .zip(filters)
        .map(|(s, f)| Ok(apply_filter(f, &s.data)?.norm_sqr()))
        .collect()
}

/// Converts linear powers to dB against the noise floor.
pub fn powers_to_db(powers: &[f64], noise_power: f64) -> Vec<f64> {
    powers.iter().map(|&p| db(p, noise_power)).collect()
}

/// Output power map: for every cell of `map_grid` the filter built with
/// that cell as the assumed SOI is applied to `snapshot`. Doppler-major,
/// like the dictionary, in dB.
pub fn adapted_spectrum<F>(snapshot: &[C64], map_grid: &DictionaryGrid, noise_power: f64, factory: F) -> Result<Vec<f64>>
where
    F: Fn(SoiSpec) -> Result<StapFilter> + Sync,
{
    (0..map_grid.len())
        .into_par_iter()
        .map(|i| {
            let (f_sp, f_d) = map_grid.frequencies(i);
            let filter = factory(SoiSpec::new(f_sp, f_d))?;
            Ok(db(apply_filter(&filter, snapshot)?.norm_sqr(), noise_power))
        })
        .collect()
}

/// Normalized clutter Doppler in the target's look direction, i.e. the
/// centre of the clutter notch the target has to escape.
pub fn notch_doppler(cfg: &RadarConfig, scene: &ClutterScene) -> Result<f64> {
    let target = scene
        .target
        .as_ref()
        .ok_or_else(|| Error::InvalidScene("the scene has no target".into()))?;
    let el = scene.clutter_elevation(cfg, target.range_cell)?;
    Ok(cfg.normalize_doppler(geometry::doppler_from_angles(cfg, target.azimuth, el)))
}

/// Wraps a normalized Doppler into `[−0.5, 0.5)`.
pub fn wrap_doppler(f: f64) -> f64 {
    let w = f - (f + 0.5).floor();
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Distance between two normalized Dopplers on the unit circle.
pub fn doppler_distance(a: f64, b: f64) -> f64 {
    wrap_doppler(a - b).abs()
}

/// `points` Dopplers spaced `1/points` apart around the circle, one of them
/// at `center`, sorted ascending.
pub fn doppler_grid(center: f64, points: usize) -> Vec<f64> {
    let mut axis: Vec<f64> = (0..points)
        .map(|k| wrap_doppler(center + k as f64 / points as f64))
        .collect();
    axis.sort_by(f64::total_cmp);
    axis
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdvCurve {
    pub method: Method,
    pub doppler_axis: Vec<f64>,
    /// Mean output SCR per Doppler in dB (linear mean over successful trials).
    pub mean_scr_db: Vec<f64>,
    pub trials: usize,
    pub failures: Vec<usize>,
    /// Trials whose sparse solver hit its iteration budget.
    pub unconverged: Vec<usize>,
}

/// Seed streams of a sweep. A trial uses the same disturbance for every
/// Doppler and every method (common random numbers).
const STREAM_DATA: u64 = 1;
const STREAM_SOLVER: u64 = 2;
const STREAM_TRAINING: u64 = 3;

/// Seeds of trial `t` under `master`: (snapshot, solver restarts, training).
pub fn trial_seeds(master: u64, trial: usize) -> (u64, u64, u64) {
    let t = trial as u64;
    (
        rng::derive_seed(master, STREAM_DATA, t),
        rng::derive_seed(master, STREAM_SOLVER, t),
        rng::derive_seed(master, STREAM_TRAINING, t),
    )
}

/// Outcome of one method on one trial at one Doppler.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub doppler_index: usize,
    pub trial: usize,
    pub method: Method,
    pub report: Option<ScrReport>,
    pub converged: bool,
}

/// Runs every (Doppler, trial, method) combination of a sweep and returns
/// the outcomes ordered by Doppler, trial and method.
pub fn mdv_trials(
    pipeline: &Pipeline,
    methods: &[Method],
    doppler_axis: &[f64],
    num_trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    if num_trials == 0 {
        return Err(Error::OutOfRange("a sweep needs at least one trial".into()));
    }
    if methods.is_empty() {
        return Err(Error::OutOfRange("a sweep needs at least one method".into()));
    }
    let target = pipeline
        .scene
        .target
        .clone()
        .ok_or_else(|| Error::InvalidScene("a sweep needs a target".into()))?;
    let f_sp = pipeline
        .scene
        .target_spatial_freq(pipeline.cfg)
        .ok_or_else(|| Error::InvalidScene("target geometry is undefined".into()))?;

    let jobs: Vec<(usize, usize)> = (0..doppler_axis.len())
        .flat_map(|d| (0..num_trials).map(move |t| (d, t)))
        .collect();
    let nested: Vec<Result<Vec<TrialOutcome>>> = jobs
        .par_iter()
        .map(|&(d, t)| {
            let f_d = doppler_axis[d];
            let mut scene = pipeline.scene.clone();
            scene.target = Some(scene::TargetSpec {
                normalized_doppler: f_d,
                ..target.clone()
            });
            let (data_seed, solver_seed, training_seed) = trial_seeds(master_seed, t);
            let snapshot = scene::synthesize_snapshot(
                pipeline.cfg,
                &scene,
                target.range_cell,
                true,
                &mut rng::seeded(data_seed),
            )?;
            let local = Pipeline {
                scene: &scene,
                ..*pipeline
            };
            let soi = local.soi(f_sp, f_d);
            let mut out = Vec::with_capacity(methods.len());
            for &method in methods {
                let design = local.design(method, &snapshot, soi, training_seed, &mut rng::seeded(solver_seed));
                let (report, converged) = match design {
                    Ok(design) => (Some(output_scr(&design.filter, &snapshot, data_seed)?), design.converged),
                    Err(Error::NumericalBreakdown | Error::EmptySupport | Error::SingularCovariance) => (None, false),
                    Err(e) => return Err(e),
                };
                out.push(TrialOutcome {
                    doppler_index: d,
                    trial: t,
                    method,
                    report,
                    converged,
                });
            }
            Ok(out)
        })
        .collect();
    let mut outcomes = Vec::with_capacity(jobs.len() * methods.len());
    for batch in nested {
        outcomes.extend(batch?);
    }
    Ok(outcomes)
}

/// Aggregates sweep outcomes into one curve per method.
pub fn aggregate_mdv(outcomes: &[TrialOutcome], methods: &[Method], doppler_axis: &[f64], num_trials: usize) -> Vec<MdvCurve> {
    methods
        .iter()
        .map(|&method| {
            let n = doppler_axis.len();
            let mut sum = vec![0.0; n];
            let mut ok = vec![0usize; n];
            let mut failures = vec![0usize; n];
            let mut unconverged = vec![0usize; n];
            for o in outcomes.iter().filter(|o| o.method == method) {
                match &o.report {
                    Some(r) => {
                        sum[o.doppler_index] += r.ratio();
                        ok[o.doppler_index] += 1;
                        if !o.converged {
                            unconverged[o.doppler_index] += 1;
                        }
                    }
                    None => failures[o.doppler_index] += 1,
                }
            }
            let mean_scr_db = sum
                .iter()
                .zip(&ok)
                .map(|(&s, &k)| if k == 0 { f64::NAN } else { 10.0 * (s / k as f64).log10() })
                .collect();
            MdvCurve {
                method,
                doppler_axis: doppler_axis.to_vec(),
                mean_scr_db,
                trials: num_trials,
                failures,
                unconverged,
            }
        })
        .collect()
}

/// Mean output SCR along the Doppler axis for each method.
pub fn mdv_sweep(
    pipeline: &Pipeline,
    methods: &[Method],
    doppler_axis: &[f64],
    num_trials: usize,
    master_seed: u64,
) -> Result<Vec<MdvCurve>> {
    if doppler_axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::OutOfRange("Doppler axis must be strictly increasing".into()));
    }
    let outcomes = mdv_trials(pipeline, methods, doppler_axis, num_trials, master_seed)?;
    Ok(aggregate_mdv(&outcomes, methods, doppler_axis, num_trials))
}

/// Fraction of spectrum energy inside `mask` (grid indices).
pub fn energy_fraction(amplitudes: &[C64], mask: &[bool]) -> f64 {
    let total: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let inside: f64 = amplitudes
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(a, _)| a.norm_sqr())
        .sum();
    inside / total
}

/// Grid cells a clutter-plus-interference spectrum is expected to occupy:
/// the sampled clutter ridge of `range_cell`, the interferers present there
/// and the SOI area, each dilated by `dilation` cells (Chebyshev).
pub fn expected_support_mask(
    cfg: &RadarConfig,
    scene: &ClutterScene,
    grid: &DictionaryGrid,
    range_cell: usize,
    soi_cells: &[usize],
    dilation: usize,
) -> Result<Vec<bool>> {
    let mut centres = Vec::new();
    // dense ridge sampling so that consecutive points fall in adjacent cells
    let dense = 8 * grid.n_s().max(grid.n_t());
    let el = scene.clutter_elevation(cfg, range_cell)?;
    for p in geometry::ridge_at_elevation(cfg, el, &scene.sector, dense) {
        if let Ok(i) = grid.grid_index(p.spatial_freq, wrap_doppler(p.normalized_doppler)) {
            centres.push(i);
        }
    }
    for i in scene.interferers_in(range_cell) {
        centres.push(grid.grid_index(i.spatial_freq, wrap_doppler(i.normalized_doppler))?);
    }
    let mut mask = vec![false; grid.len()];
    let d = dilation as f64 * std::f64::consts::SQRT_2 + 1e-9;
    for c in centres {
        mask[c] = true;
        for u in grid.neighbors(c, d) {
            mask[u] = true;
        }
    }
    for &c in soi_cells {
        mask[c] = true;
    }
    Ok(mask)
}

/// Noise-referenced power of the filter's output noise, `‖w‖² σ²`.
pub fn noise_output_power(filter: &StapFilter, noise_power: f64) -> f64 {
    linalg::norm(&filter.weights).powi(2) * noise_power
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    proptest! {
        #[test]
        fn wrap_lands_in_the_half_open_interval(f in -100.0..100.0f64) {
            let w = wrap_doppler(f);
            prop_assert!((-0.5..0.5).contains(&w));
            let k = (f - w).round();
            prop_assert!((f - w - k).abs() < 1e-9);
        }

        #[test]
        fn doppler_distance_is_a_circular_metric(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64) {
            let ab = doppler_distance(a, b);
            prop_assert!((0.0..=0.5).contains(&ab));
            prop_assert!((ab - doppler_distance(b, a)).abs() < 1e-12);
            prop_assert!(doppler_distance(a, a + 1.0) < 1e-12);
            prop_assert!(ab <= doppler_distance(a, c) + doppler_distance(c, b) + 1e-12);
        }

        #[test]
        fn doppler_grid_is_sorted_and_hits_the_center(center in -0.5..0.5f64, points in 1usize..40) {
            let axis = doppler_grid(center, points);
            prop_assert_eq!(axis.len(), points);
            prop_assert!(axis.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(axis.iter().any(|&f| doppler_distance(f, center) < 1e-12));
            prop_assert!(axis.iter().all(|f| (-0.5..0.5).contains(f)));
        }

        #[test]
        fn scr_is_invariant_to_filter_scale(seed in any::<u64>(), re in -5.0..5.0f64, im in -5.0..5.0f64) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut r = rng::seeded(seed);
            let mut v = || (0..6).map(|_| rng::complex_normal(&mut r, 1.0)).collect::<Vec<_>>();
            let snap = Snapshot::from_components(0, v(), v(), v(), v(), Vec::new());
            let weights = v();
            let filter = StapFilter {
                gain: C64::new(1.0, 0.0),
                weights: weights.clone(),
                method: Method::None,
                soi: SoiSpec::new(0.0, 0.0),
                subaperture: None,
                rank_deficient: false,
            };
            let scaled = StapFilter {
                weights: weights.iter().map(|w| w * C64::new(re, im)).collect(),
                ..filter.clone()
            };
            let a = output_scr(&filter, &snap, seed).unwrap();
            let b = output_scr(&scaled, &snap, seed).unwrap();
            prop_assert!((a.scr_db - b.scr_db).abs() < 1e-9);
        }

        #[test]
        fn aggregation_ignores_outcome_order(scrs in prop::collection::vec(-30.0..30.0f64, 12), shuffle in any::<u64>()) {
            let methods = [Method::D3ls, Method::Lsmi];
            let axis = [-0.25, 0.0, 0.25];
            let outcomes: Vec<TrialOutcome> = scrs
                .iter()
                .enumerate()
                .map(|(k, &scr_db)| TrialOutcome {
                    doppler_index: k % 3,
                    trial: k / 6,
                    method: methods[(k / 3) % 2],
                    report: (k != 5).then_some(ScrReport {
                        scr_db,
                        numerator: 1.0,
                        denominator: 1.0,
                        method: methods[(k / 3) % 2],
                        seed: 0,
                    }),
                    converged: k % 4 != 0,
                })
                .collect();
            let mut permuted = outcomes.clone();
            let mut r = rng::seeded(shuffle);
            permuted.shuffle(&mut r);
            let a = aggregate_mdv(&outcomes, &methods, &axis, 2);
            let b = aggregate_mdv(&permuted, &methods, &axis, 2);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.failures, &y.failures);
                prop_assert_eq!(&x.unconverged, &y.unconverged);
                for (p, q) in x.mean_scr_db.iter().zip(&y.mean_scr_db) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
