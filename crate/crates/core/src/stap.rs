//! Adaptive filters: D3SR from a sparse spectrum, plus the D3LS and LSMI
//! baselines. Every filter is normalized to unit gain at its assumed SOI,
//! `w^H s = 1`.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryGrid, SparseSpectrum};
use crate::error::{Error, Result};
use crate::geometry::RadarConfig;
use crate::linalg;
use crate::rng::Rng;
use crate::scene::{self, ClutterScene, Patch, Snapshot, TrainingPool};
use crate::solvers::{self, FocussOptions, L1Options};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    D3srFocuss,
    D3srL1,
    D3ls,
    Lsmi,
    /// Conventional beamformer `s / NM`, no adaptation.
    None,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::D3srFocuss,
        Method::D3srL1,
        Method::D3ls,
        Method::Lsmi,
        Method::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::D3srFocuss => "d3sr-focuss",
            Method::D3srL1 => "d3sr-l1",
            Method::D3ls => "d3ls",
            Method::Lsmi => "lsmi",
            Method::None => "none",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::D3srFocuss | Method::D3srL1)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected one of d3sr-focuss, d3sr-l1, d3ls, lsmi, none)"
                ))
            })
    }
}

/// Assumed signal of interest and its guard window in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoiSpec {
    pub spatial_freq: f64,
    pub normalized_doppler: f64,
    pub guard_spatial: usize,
    pub guard_doppler: usize,
}

impl SoiSpec {
    pub fn new(spatial_freq: f64, normalized_doppler: f64) -> Self {
        Self {
            spatial_freq,
            normalized_doppler,
            guard_spatial: 3,
            guard_doppler: 3,
        }
    }

    pub fn with_guard(mut self, spatial: usize, doppler: usize) -> Self {
        self.guard_spatial = spatial;
        self.guard_doppler = doppler;
        self
    }

    pub fn steering(&self, channels: usize, pulses: usize) -> Vec<C64> {
        scene::steering(channels, pulses, self.spatial_freq, self.normalized_doppler).values
    }
}

/// Grid cells of the guard window centred on the SOI, truncated at edges.
pub fn soi_area(grid: &DictionaryGrid, soi: &SoiSpec) -> Result<Vec<usize>> {
    if soi.guard_spatial % 2 == 0 || soi.guard_doppler % 2 == 0 {
        return Err(Error::OutOfRange(format!(
            "SOI guard {}x{} must have odd extents",
            soi.guard_spatial, soi.guard_doppler
        )));
    }
    let center = grid.grid_index(soi.spatial_freq, soi.normalized_doppler)?;
    let (ci, cj) = grid.coords(center);
    let (hs, ht) = ((soi.guard_spatial / 2) as isize, (soi.guard_doppler / 2) as isize);
    let mut cells = Vec::new();
    for dj in -ht..=ht {
        for di in -hs..=hs {
            let (i, j) = (ci as isize + di, cj as isize + dj);
            if i >= 0 && j >= 0 && (i as usize) < grid.n_s() && (j as usize) < grid.n_t() {
                cells.push(grid.index(i as usize, j as usize));
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub matrix: DMatrix<C64>,
    pub loading: f64,
}

/// `Σ |a_i|² φ_i φ_i^H + β_L I` over the support minus the SOI cells.
pub fn build_ccm(dict: &Dictionary, spectrum: &SparseSpectrum, soi_cells: &[usize], loading: f64) -> CovarianceMatrix {
    let (columns, powers): (Vec<usize>, Vec<f64>) = spectrum
        .support
        .iter()
        .filter(|i| !soi_cells.contains(i))
        .map(|&i| (i, spectrum.amplitudes[i].norm_sqr()))
        .unzip();
    let mut matrix = if columns.is_empty() {
        DMatrix::zeros(dict.rows(), dict.rows())
    } else {
        dict.weighted_gram(&columns, &powers)
    };
    for k in 0..matrix.nrows() {
        matrix[(k, k)] += loading;
    }
    CovarianceMatrix { matrix, loading }
}

/// Covariance of a list of point sources: `Σ p_k v_k v_k^H + σ² I`, with
/// `p_k = |amplitude|²`.
pub fn patch_covariance(cfg: &RadarConfig, patches: &[Patch], noise_power: f64) -> CovarianceMatrix {
    let sources: Vec<(f64, f64, f64)> = patches
        .iter()
        .map(|p| (p.spatial_freq, p.normalized_doppler, p.amplitude.norm_sqr()))
        .collect();
    source_covariance(cfg, &sources, noise_power)
}

fn source_covariance(cfg: &RadarConfig, sources: &[(f64, f64, f64)], noise_power: f64) -> CovarianceMatrix {
    let nm = cfg.dof();
    let mut matrix = DMatrix::<C64>::zeros(nm, nm);
    for &(f_sp, f_d, p) in sources {
        let v = DVector::from_vec(scene::space_time_steering(cfg, f_sp, f_d).values);
        matrix.gerc(C64::new(p, 0.0), &v, &v, C64::new(1.0, 0.0));
    }
    for k in 0..nm {
        matrix[(k, k)] += noise_power;
    }
    CovarianceMatrix {
        matrix,
        loading: noise_power,
    }
}

/// Expected clutter-plus-interference-plus-noise covariance of a range cell.
pub fn expected_covariance(cfg: &RadarConfig, scene: &ClutterScene, range_cell: usize) -> Result<CovarianceMatrix> {
    let ridge = scene.ridge(cfg, range_cell)?;
    let mut sources: Vec<(f64, f64, f64)> = ridge
        .iter()
        .zip(scene.scatter_powers(cfg))
        .map(|(p, power)| (p.spatial_freq, p.normalized_doppler, power))
        .collect();
    sources.extend(
        scene
            .interferers_in(range_cell)
            .map(|i| (i.spatial_freq, i.normalized_doppler, i.power)),
    );
    Ok(source_covariance(cfg, &sources, scene.noise_power))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StapFilter {
    /// Full-aperture weights (length NM).
    pub weights: Vec<C64>,
    pub method: Method,
    pub soi: SoiSpec,
    /// `w^H s` at the assumed SOI.
    pub gain: C64,
    /// D3LS subaperture weights `(N_a, N_p, w_sub)`.
    pub subaperture: Option<(usize, usize, Vec<C64>)>,
    pub rank_deficient: bool,
}

impl StapFilter {
    fn normalized(weights: Vec<C64>, s: &[C64], method: Method, soi: SoiSpec) -> Result<Self> {
        let g = linalg::inner(&weights, s);
        if !(g.norm() > 0.0) || !g.norm().is_finite() {
            return Err(Error::SingularCovariance);
        }
        let scale = g.conj().inv();
        let weights: Vec<C64> = weights.iter().map(|w| w * scale).collect();
        let gain = linalg::inner(&weights, s);
        Ok(Self {
            weights,
            method,
            soi,
            gain,
            subaperture: None,
            rank_deficient: false,
        })
    }
}

/// `w = R^{-1}s / (s^H R^{-1} s)` through a Cholesky solve.
pub fn mvdr_filter(ccm: &CovarianceMatrix, s: &[C64], method: Method, soi: SoiSpec) -> Result<StapFilter> {
    if s.len() != ccm.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: ccm.matrix.nrows(),
            found: s.len(),
        });
    }
    let z = linalg::cholesky_solve(ccm.matrix.clone(), &DVector::from_column_slice(s))?;
    StapFilter::normalized(z.as_slice().to_vec(), s, method, soi)
}

pub fn d3sr_filter(ccm: &CovarianceMatrix, cfg: &RadarConfig, soi: SoiSpec) -> Result<StapFilter> {
    let s = soi.steering(cfg.num_channels, cfg.num_pulses);
    mvdr_filter(ccm, &s, Method::D3srFocuss, soi)
}

/// `s / NM`.
pub fn conventional_filter(cfg: &RadarConfig, soi: SoiSpec) -> StapFilter {
    let s = soi.steering(cfg.num_channels, cfg.num_pulses);
    let nm = s.len() as f64;
    let weights: Vec<C64> = s.iter().map(|v| v / nm).collect();
    StapFilter {
        gain: linalg::inner(&weights, &s),
        weights,
        method: Method::None,
        soi,
        subaperture: None,
        rank_deficient: false,
    }
}

/// Loaded sample matrix inversion from training snapshots.
pub fn lsmi_filter<S: Borrow<Snapshot>>(training: &[S], cfg: &RadarConfig, soi: SoiSpec, loading: f64) -> Result<StapFilter> {
    if training.is_empty() {
        return Err(Error::OutOfRange("LSMI needs at least one training snapshot".into()));
    }
    let nm = cfg.dof();
    let mut x = DMatrix::<C64>::zeros(nm, training.len());
    for (k, snap) in training.iter().enumerate() {
        let snap = snap.borrow();
        if snap.len() != nm {
            return Err(Error::DimensionMismatch {
                expected: nm,
                found: snap.len(),
            });
        }
        x.column_mut(k).copy_from_slice(&snap.data);
    }
    let mut r = &x * x.adjoint() / C64::new(training.len() as f64, 0.0);
    for k in 0..nm {
        r[(k, k)] += loading;
    }
    let s = soi.steering(cfg.num_channels, cfg.num_pulses);
    mvdr_filter(&CovarianceMatrix { matrix: r, loading }, &s, Method::Lsmi, soi)
}

/// Difference kinds of the forward cancellation rows, in fill order.
const DIFFERENCES: [(usize, usize); 3] = [(1, 0), (0, 1), (1, 1)];

/// SOI-cancelling difference rows of the D3LS system: windows of size
/// `N_a × N_p` over `x(n,m) − z_s^{-dn} z_t^{-dm} x(n+dn, m+dm)` for
/// spatial, temporal and cross differences, placements in lexicographic
/// order. Returns at most `limit` rows.
pub fn d3ls_rows(x: &[C64], cfg: &RadarConfig, soi: &SoiSpec, sub_channels: usize, sub_pulses: usize, limit: usize) -> Vec<Vec<C64>> {
    let (n, m) = (cfg.num_channels, cfg.num_pulses);
    let zs = C64::from_polar(1.0, std::f64::consts::TAU * soi.spatial_freq);
    let zt = C64::from_polar(1.0, std::f64::consts::TAU * soi.normalized_doppler);
    let at = |a: usize, b: usize| x[a * m + b];
    let mut rows = Vec::new();
    for &(dn, dm) in &DIFFERENCES {
        if n < sub_channels + dn || m < sub_pulses + dm {
            continue;
        }
        let factor = zs.powi(-(dn as i32)) * zt.powi(-(dm as i32));
        for n0 in 0..=(n - sub_channels - dn) {
            for m0 in 0..=(m - sub_pulses - dm) {
                if rows.len() == limit {
                    return rows;
                }
                let mut row = Vec::with_capacity(sub_channels * sub_pulses);
                for a in 0..sub_channels {
                    for b in 0..sub_pulses {
                        let (p, q) = (n0 + a, m0 + b);
                        row.push(at(p, q) - factor * at(p + dn, q + dm));
                    }
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Direct data domain least squares on the test cell alone. The returned
/// full-aperture weights average the subaperture filter over every
/// placement, phase-aligned to the SOI.
pub fn d3ls_filter(snapshot: &Snapshot, cfg: &RadarConfig, soi: SoiSpec, sub_channels: usize, sub_pulses: usize) -> Result<StapFilter> {
    let (n, m) = (cfg.num_channels, cfg.num_pulses);
    if !(2..=n).contains(&sub_channels) || !(2..=m).contains(&sub_pulses) {
        return Err(Error::DimensionError {
            sub_channels,
            sub_pulses,
            channels: n,
            pulses: m,
        });
    }
    if snapshot.len() != n * m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            found: snapshot.len(),
        });
    }
    let dof = sub_channels * sub_pulses;
    let rows = d3ls_rows(&snapshot.data, cfg, &soi, sub_channels, sub_pulses, dof - 1);
    if rows.is_empty() {
        return Err(Error::DimensionError {
            sub_channels,
            sub_pulses,
            channels: n,
            pulses: m,
        });
    }
    let s_sub = soi.steering(sub_channels, sub_pulses);
    // [s_sub^H; g_r^H] w = e1
    let mut a = DMatrix::<C64>::zeros(rows.len() + 1, dof);
    for k in 0..dof {
        a[(0, k)] = s_sub[k].conj();
        for (r, row) in rows.iter().enumerate() {
            a[(r + 1, k)] = row[k].conj();
        }
    }
    let mut b = DVector::zeros(rows.len() + 1);
    b[0] = C64::new(1.0, 0.0);
    let (w, rank) = linalg::min_norm_solve(a, &b, 1e-10);
    let g = linalg::inner(w.as_slice(), &s_sub);
    if !(g.norm() > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let w_sub: Vec<C64> = w.iter().map(|v| v / g.conj()).collect();

    let zs = C64::from_polar(1.0, std::f64::consts::TAU * soi.spatial_freq);
    let zt = C64::from_polar(1.0, std::f64::consts::TAU * soi.normalized_doppler);
    let placements = (n - sub_channels + 1) * (m - sub_pulses + 1);
    let mut full = vec![C64::new(0.0, 0.0); n * m];
    for n0 in 0..=(n - sub_channels) {
        for m0 in 0..=(m - sub_pulses) {
            let phase = zs.powi(n0 as i32) * zt.powi(m0 as i32) / placements as f64;
            for a in 0..sub_channels {
                for b in 0..sub_pulses {
                    full[(n0 + a) * m + (m0 + b)] += phase * w_sub[a * sub_pulses + b];
                }
            }
        }
    }
    let s = soi.steering(n, m);
    let mut filter = StapFilter::normalized(full, &s, Method::D3ls, soi)?;
    filter.rank_deficient = rank < rows.len() + 1;
    filter.subaperture = Some((sub_channels, sub_pulses, w_sub));
    Ok(filter)
}

/// `y = w^H x`.
pub fn apply_filter(filter: &StapFilter, x: &[C64]) -> Result<C64> {
    if x.len() != filter.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: filter.weights.len(),
            found: x.len(),
        });
    }
    Ok(linalg::inner(&filter.weights, x))
}

/// Settings shared by every method of one experiment.
#[derive(Debug, Clone)]
pub struct MethodSettings {
    pub focuss: FocussOptions,
    pub l1: L1Options,
    /// L1 error allowance as a multiple of the expected noise norm `√(NM σ²)`.
    pub l1_epsilon_scale: f64,
    /// Diagonal loading for D3SR and LSMI (linear power).
    pub loading: f64,
    pub guard: (usize, usize),
    pub d3ls_subaperture: (usize, usize),
    pub lsmi_training: usize,
}

/// Default FOCUSS power floor in units of the noise power.
pub const NOISE_FLOOR_FACTOR: f64 = 2.0;

impl MethodSettings {
    pub fn new(cfg: &RadarConfig, noise_power: f64) -> Self {
        Self {
            focuss: FocussOptions {
                noise_power: NOISE_FLOOR_FACTOR * noise_power,
                ..FocussOptions::default()
            },
            l1: L1Options::default(),
            l1_epsilon_scale: 1.0,
            loading: noise_power,
            guard: (3, 3),
            d3ls_subaperture: (8, 8),
            lsmi_training: 2 * cfg.dof(),
        }
    }
}

/// Everything a method needs to design a filter for one test cell.
pub struct Pipeline<'a> {
    pub cfg: &'a RadarConfig,
    pub scene: &'a ClutterScene,
    pub dict: &'a Dictionary,
    pub settings: &'a MethodSettings,
}

/// Outcome of designing one filter.
#[derive(Debug, Clone)]
pub struct Design {
    pub filter: StapFilter,
    pub spectrum: Option<SparseSpectrum>,
    /// `false` when the solver ran out of iterations and its best state
    /// was used instead.
    pub converged: bool,
}

impl Pipeline<'_> {
    pub fn soi(&self, spatial_freq: f64, doppler: f64) -> SoiSpec {
        SoiSpec::new(spatial_freq, doppler).with_guard(self.settings.guard.0, self.settings.guard.1)
    }

    /// Sparse spectrum of a snapshot. An exhausted iteration budget yields
    /// the solver's best state with `converged = false`.
    pub fn estimate(&self, method: Method, x: &[C64], rng: &mut Rng) -> Result<(SparseSpectrum, bool)> {
        match method {
            Method::D3srFocuss => match solvers::focuss_solve(self.dict, x, &self.settings.focuss, rng) {
                Ok(s) => Ok((s, true)),
                Err(Error::DidNotConverge { best, .. }) => Ok((*best, false)),
                Err(e) => Err(e),
            },
            Method::D3srL1 => {
                let eps = self.settings.l1_epsilon_scale * (self.cfg.dof() as f64 * self.scene.noise_power).sqrt();
                Ok((solvers::l1_solve(self.dict, x, eps, &self.settings.l1)?, true))
            }
            other => Err(Error::Config(format!("{other} does not estimate a spectrum"))),
        }
    }

    /// D3SR filter for an already estimated spectrum.
    pub fn d3sr_from_spectrum(&self, method: Method, spectrum: &SparseSpectrum, soi: SoiSpec) -> Result<StapFilter> {
        let grid = self
            .dict
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("D3SR needs a steering-grid dictionary".into()))?;
        let cells = soi_area(grid, &soi)?;
        let ccm = build_ccm(self.dict, spectrum, &cells, self.settings.loading);
        let mut filter = d3sr_filter(&ccm, self.cfg, soi)?;
        filter.method = method;
        Ok(filter)
    }

    pub fn lsmi_training(&self, test_cell: usize, seed: u64) -> Result<Vec<Snapshot>> {
        scene::synthesize_training(self.cfg, self.scene, test_cell, self.settings.lsmi_training, seed)
    }

    /// Filters of `method` with every cell of `cube` in turn as the test
    /// cell, all at `soi`. LSMI training cells are synthesized once and
    /// shared; `solver_rng(cell)` drives the restarts of each cell.
    pub fn range_filters<F>(&self, method: Method, cube: &[Snapshot], soi: SoiSpec, training_seed: u64, solver_rng: F) -> Result<Vec<StapFilter>>
    where
        F: Fn(usize) -> Rng + Sync,
    {
        if method == Method::Lsmi {
            let cells: Vec<usize> = cube.iter().map(|s| s.range_cell).collect();
            let pool = TrainingPool::new(self.cfg, self.scene, &cells, self.settings.lsmi_training, training_seed)?;
            return cube
                .par_iter()
                .map(|s| lsmi_filter(&pool.training(s.range_cell)?, self.cfg, soi, self.settings.loading))
                .collect();
        }
        cube.par_iter()
            .map(|s| Ok(self.design(method, s, soi, training_seed, &mut solver_rng(s.range_cell))?.filter))
            .collect()
    }

    /// Designs `method`'s filter for `snapshot` at the given SOI.
    /// `training_seed` seeds the LSMI training cells; `rng` drives solver
    /// restarts.
    pub fn design(&self, method: Method, snapshot: &Snapshot, soi: SoiSpec, training_seed: u64, rng: &mut Rng) -> Result<Design> {
        match method {
            Method::D3srFocuss | Method::D3srL1 => {
                let (spectrum, converged) = self.estimate(method, &snapshot.data, rng)?;
                let filter = self.d3sr_from_spectrum(method, &spectrum, soi)?;
                Ok(Design {
                    filter,
                    spectrum: Some(spectrum),
                    converged,
                })
            }
            Method::D3ls => {
                let (na, np) = self.settings.d3ls_subaperture;
                Ok(Design {
                    filter: d3ls_filter(snapshot, self.cfg, soi, na, np)?,
                    spectrum: None,
                    converged: true,
                })
            }
            Method::Lsmi => {
                let training = self.lsmi_training(snapshot.range_cell, training_seed)?;
                Ok(Design {
                    filter: lsmi_filter(&training, self.cfg, soi, self.settings.loading)?,
                    spectrum: None,
                    converged: true,
                })
            }
            Method::None => Ok(Design {
                filter: conventional_filter(self.cfg, soi),
                spectrum: None,
                converged: true,
            }),
        }
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn small_radar(n: usize, m: usize) -> RadarConfig {
        RadarConfig {
            num_channels: n,
            num_pulses: m,
            ..RadarConfig::table_one()
        }
    }

    fn noise(len: usize, r: &mut rng::Rng) -> Vec<C64> {
        (0..len).map(|_| rng::complex_normal(r, 1.0)).collect()
    }

    fn snapshot(data: Vec<C64>) -> Snapshot {
        let zero = vec![C64::new(0.0, 0.0); data.len()];
        Snapshot::from_components(0, data, zero.clone(), zero.clone(), zero, Vec::new())
    }

    fn assert_unit_gain(filter: &StapFilter, s: &[C64]) -> std::result::Result<(), TestCaseError> {
        let g = linalg::inner(&filter.weights, s);
        prop_assert!((g - C64::new(1.0, 0.0)).norm() < 1e-6, "gain {g}");
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn every_filter_has_unit_gain_on_its_soi(
            n in 3usize..6,
            m in 3usize..6,
            f in -0.5..0.5f64,
            d in -0.5..0.5f64,
            seed in any::<u64>(),
        ) {
            let cfg = small_radar(n, m);
            let soi = SoiSpec::new(f, d);
            let s = soi.steering(n, m);
            let mut r = rng::seeded(seed);

            assert_unit_gain(&conventional_filter(&cfg, soi), &s)?;

            let a = DMatrix::from_fn(n * m, n * m, |_, _| rng::complex_normal(&mut r, 1.0));
            let mut matrix = &a * a.adjoint();
            for k in 0..n * m {
                matrix[(k, k)] += 1.0;
            }
            let ccm = CovarianceMatrix { matrix, loading: 1.0 };
            assert_unit_gain(&mvdr_filter(&ccm, &s, Method::D3srFocuss, soi).unwrap(), &s)?;
            assert_unit_gain(&d3sr_filter(&ccm, &cfg, soi).unwrap(), &s)?;

            let training: Vec<Snapshot> = (0..4).map(|_| snapshot(noise(n * m, &mut r))).collect();
            assert_unit_gain(&lsmi_filter(&training, &cfg, soi, 1.0).unwrap(), &s)?;

            let d3ls = d3ls_filter(&snapshot(noise(n * m, &mut r)), &cfg, soi, n - 1, m - 1).unwrap();
            assert_unit_gain(&d3ls, &s)?;
        }

        #[test]
        fn ccm_ignores_amplitude_phases(seed in any::<u64>(), count in 1usize..10) {
            let cfg = small_radar(3, 3);
            let grid = DictionaryGrid::new(&cfg, 2, 2).unwrap();
            let dict = Dictionary::build(&cfg, &grid).unwrap();
            let mut r = rng::seeded(seed);
            let mut spectrum = SparseSpectrum::zero(grid.len());
            for k in 0..count {
                let i = (k * 7 + seed as usize % 5) % grid.len();
                spectrum.amplitudes[i] = rng::complex_normal(&mut r, 4.0);
            }
            spectrum.support = (0..grid.len()).filter(|&i| spectrum.amplitudes[i].norm() > 0.0).collect();
            let mut rotated = spectrum.clone();
            for a in rotated.amplitudes.iter_mut() {
                *a *= rng::unit_phase(&mut r);
            }
            let soi = [spectrum.support[0]];
            let x = build_ccm(&dict, &spectrum, &soi, 0.5);
            let y = build_ccm(&dict, &rotated, &soi, 0.5);
            prop_assert!((x.matrix - y.matrix).norm() < 1e-9);
        }

        #[test]
        fn d3ls_rows_cancel_a_pure_soi(
            n in 2usize..6,
            m in 2usize..6,
            f in -0.5..0.5f64,
            d in -0.5..0.5f64,
            re in -10.0..10.0f64,
            im in -10.0..10.0f64,
        ) {
            let cfg = small_radar(n, m);
            let soi = SoiSpec::new(f, d);
            let alpha = C64::new(re, im);
            let x: Vec<C64> = soi.steering(n, m).iter().map(|v| v * alpha).collect();
            for row in d3ls_rows(&x, &cfg, &soi, 2.min(n), 2.min(m), usize::MAX) {
                for v in row {
                    prop_assert!(v.norm() < 1e-9 * (1.0 + alpha.norm()));
                }
            }
        }
    }
}
