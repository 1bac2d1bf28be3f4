//! Adaptive FOCUSS: reweighted minimum-norm iterations with a shrinking
//! active set, neighbourhood smoothing of the weights, TSVD-regularized
//! pseudoinverse steps and restarts when the solution over-focuses.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryGrid, SparseSpectrum};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocussOptions {
    /// Pruning threshold relative to the largest amplitude.
    pub threshold_fraction: f64,
    /// Smoothing neighbourhood radius in grid cells.
    pub neighbor_distance: f64,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    /// Singular values below `tsvd_level · σ_max` are dropped.
    pub tsvd_level: f64,
    /// Absolute power floor, normally a small multiple of the noise power.
    /// Directions of `Ψ_Γ W² Ψ_Γ^H` below it are truncated as well. Set by
    /// the caller from the scene, never read from a config file.
    #[serde(skip)]
    pub noise_power: f64,
    pub overfocal_correlation_min: f64,
    pub max_restarts: usize,
    pub restart_perturbation: f64,
}

impl Default for FocussOptions {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.01,
            neighbor_distance: std::f64::consts::SQRT_2,
            convergence_tol: 1e-3,
            max_iterations: 50,
            tsvd_level: 1e-3,
            noise_power: 0.0,
            overfocal_correlation_min: 0.5,
            max_restarts: 3,
            restart_perturbation: 0.1,
        }
    }
}

impl FocussOptions {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("focuss: {msg}")))
            }
        };
        check(
            self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0,
            "threshold_fraction must lie in (0, 1)",
        )?;
        check(self.neighbor_distance >= 1.0, "neighbor_distance must be at least 1")?;
        check(
            self.convergence_tol > 0.0 && self.convergence_tol < 1.0,
            "convergence_tol must lie in (0, 1)",
        )?;
        check(self.max_iterations >= 1, "max_iterations must be at least 1")?;
        check(
            self.tsvd_level > 0.0 && self.tsvd_level < 1.0,
            "tsvd_level must lie in (0, 1)",
        )?;
        check(self.noise_power >= 0.0, "noise_power must be non-negative")?;
        check(
            self.overfocal_correlation_min > 0.0 && self.overfocal_correlation_min < 1.0,
            "overfocal_correlation_min must lie in (0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.restart_perturbation),
            "restart_perturbation must lie in [0, 1)",
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocussState {
    /// Current amplitudes, full grid length, zero off the active set.
    pub amplitudes: Vec<C64>,
    /// Weighting diagonal, full grid length, zero off the active set.
    pub weights: Vec<f64>,
    /// Active set, ascending.
    pub active: Vec<usize>,
    pub iteration: usize,
}

/// Fourier initialization. Returns the state together with the Fourier
/// spectrum `Ψ^H x` used later by the over-focus check. The initial
/// amplitudes are the matched-filter estimates `ψ_i^H x / ‖ψ_i‖²`.
pub fn focuss_init(dict: &Dictionary, x: &[C64]) -> Result<(FocussState, Vec<C64>)> {
    let fourier = dict.fourier_spectrum(x)?;
    let amplitudes: Vec<C64> = fourier
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let n2 = dict.atoms.column(i).norm_squared();
            if n2 > 0.0 {
                f / n2
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let state = FocussState {
        weights: amplitudes.iter().map(|a| a.norm()).collect(),
        amplitudes,
        active: (0..dict.len()).collect(),
        iteration: 0,
    };
    Ok((state, fourier))
}

/// One weighted minimum-norm step `a_Γ = W (Ψ_Γ W)^† x` with a TSVD
/// pseudoinverse.
pub fn focuss_iterate(
    state: &FocussState,
    dict: &Dictionary,
    x: &[C64],
    opts: &FocussOptions,
) -> Result<FocussState> {
    if state.active.is_empty() {
        return Err(Error::EmptySupport);
    }
    if x.len() != dict.rows() {
        return Err(Error::DimensionMismatch {
            expected: dict.rows(),
            found: x.len(),
        });
    }
    let m = dict.rows();
    let g = state.active.len();
    let xv = DVector::from_column_slice(x);
    let cutoff = opts.tsvd_level * opts.tsvd_level;
    let mut amplitudes = vec![C64::new(0.0, 0.0); dict.len()];

    if g >= m || dict.grid.is_some() {
        // (Ψ_Γ W)^† x = W Ψ_Γ^H (Ψ_Γ W² Ψ_Γ^H)^† x
        let w2: Vec<f64> = state.active.iter().map(|&i| state.weights[i].powi(2)).collect();
        let gram = dict.weighted_gram(&state.active, &w2);
        let y = if dict.grid.is_some() {
            // steering-grid Grams are block Toeplitz, hence centro-Hermitian
            linalg::tsvd_solve_centro_hermitian(&gram, &xv, cutoff, opts.noise_power)
        } else {
            linalg::tsvd_solve_hermitian(gram, &xv, cutoff, opts.noise_power)
        }
        .ok_or(Error::NumericalBreakdown)?;
        for (&i, &w) in state.active.iter().zip(&w2) {
            if w == 0.0 {
                continue;
            }
            let col = dict.atoms.column(i);
            let dot: C64 = col.iter().zip(y.iter()).map(|(p, q)| p.conj() * q).sum();
            amplitudes[i] = dot * w;
        }
    } else {
        // (Ψ_Γ W)^† x = (B^H B)^† B^H x with B = Ψ_Γ W
        let mut b = DMatrix::zeros(m, g);
        for (k, &i) in state.active.iter().enumerate() {
            let w = state.weights[i];
            for (dst, src) in b.column_mut(k).iter_mut().zip(dict.atoms.column(i).iter()) {
                *dst = src * w;
            }
        }
        let rhs = b.ad_mul(&xv);
        let gram = b.ad_mul(&b);
        let v = linalg::tsvd_solve_hermitian(gram, &rhs, cutoff, opts.noise_power).ok_or(Error::NumericalBreakdown)?;
        for (k, &i) in state.active.iter().enumerate() {
            amplitudes[i] = v[k] * state.weights[i];
        }
    }
    Ok(FocussState {
        amplitudes,
        weights: state.weights.clone(),
        active: state.active.clone(),
        iteration: state.iteration + 1,
    })
}

fn max_magnitude(state: &FocussState) -> f64 {
    state
        .active
        .iter()
        .map(|&i| state.amplitudes[i].norm())
        .fold(0.0, f64::max)
}

/// Threshold pruning, neighbourhood dilation and weight smoothing.
/// Without a grid the neighbourhoods are empty and only pruning applies.
pub fn focuss_prune_and_smooth(
    state: &FocussState,
    grid: Option<&DictionaryGrid>,
    opts: &FocussOptions,
) -> Result<FocussState> {
    let max = max_magnitude(state);
    if !(max > 0.0) {
        return Err(Error::EmptySupport);
    }
    let th = opts.threshold_fraction * max;
    let kept: Vec<usize> = state
        .active
        .iter()
        .copied()
        .filter(|&i| state.amplitudes[i].norm() >= th)
        .collect();
    let len = state.amplitudes.len();
    let mut weights = vec![0.0; len];
    let active = match grid {
        None => {
            for &i in &kept {
                weights[i] = state.amplitudes[i].norm();
            }
            kept
        }
        Some(grid) => {
            let mut marked = vec![false; len];
            for &i in &kept {
                marked[i] = true;
                for u in grid.neighbors(i, opts.neighbor_distance) {
                    marked[u] = true;
                }
            }
            let active: Vec<usize> = (0..len).filter(|&i| marked[i]).collect();
            for &i in &active {
                let nb = grid.neighbors(i, opts.neighbor_distance);
                let sum: C64 = state.amplitudes[i] + nb.iter().map(|&u| state.amplitudes[u]).sum::<C64>();
                weights[i] = (sum / (nb.len() as f64 + 1.0)).norm();
            }
            // Averaging random-phase neighbours shrinks the weights; restore
            // the amplitude energy so that the noise floor keeps its meaning.
            let energy: f64 = active.iter().map(|&i| state.amplitudes[i].norm_sqr()).sum();
            let smoothed: f64 = active.iter().map(|&i| weights[i] * weights[i]).sum();
            if smoothed > 0.0 {
                let scale = (energy / smoothed).sqrt();
                for &i in &active {
                    weights[i] *= scale;
                }
            }
            active
        }
    };
    Ok(FocussState {
        amplitudes: state.amplitudes.clone(),
        weights,
        active,
        iteration: state.iteration,
    })
}

/// Indices of the top tenth of cells by Fourier magnitude.
fn fourier_top(fourier: &[C64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fourier.len()).collect();
    order.sort_by(|&a, &b| fourier[b].norm().total_cmp(&fourier[a].norm()).then(a.cmp(&b)));
    order.truncate(fourier.len().div_ceil(10).max(1));
    order
}

fn correlation_on(top: &[usize], amplitudes: &[C64], fourier: &[C64], grid: Option<&DictionaryGrid>) -> f64 {
    let (mut cross, mut ee, mut ff) = (0.0, 0.0, 0.0);
    for &i in top {
        let env = match grid {
            Some(grid) => {
                let nb = grid.neighbors(i, std::f64::consts::SQRT_2);
                (amplitudes[i].norm() + nb.iter().map(|&u| amplitudes[u].norm()).sum::<f64>())
                    / (nb.len() as f64 + 1.0)
            }
            None => amplitudes[i].norm(),
        };
        let f = fourier[i].norm();
        cross += env * f;
        ee += env * env;
        ff += f * f;
    }
    if ee == 0.0 || ff == 0.0 {
        return 0.0;
    }
    cross / (ee.sqrt() * ff.sqrt())
}

/// Normalized correlation between the 8-neighbour magnitude envelope of
/// `amplitudes` and `|fourier|` on the top tenth of Fourier cells.
pub fn overfocal_correlation(amplitudes: &[C64], fourier: &[C64], grid: Option<&DictionaryGrid>) -> f64 {
    correlation_on(&fourier_top(fourier), amplitudes, fourier, grid)
}

/// `true` when the solution has over-focused (a zero solution always has).
pub fn focuss_overfocal_check(
    state: &FocussState,
    fourier: &[C64],
    grid: Option<&DictionaryGrid>,
    opts: &FocussOptions,
) -> bool {
    overfocal_correlation(&state.amplitudes, fourier, grid) < opts.overfocal_correlation_min
}

/// Final support: the thresholded and dilated set the next step would use
/// (`pruned`), restricted to nonzero amplitudes. Residual recomputed.
fn finalize(dict: &Dictionary, x: &[C64], state: &FocussState, pruned: &FocussState, restarts: usize) -> Result<SparseSpectrum> {
    let mut amplitudes = vec![C64::new(0.0, 0.0); state.amplitudes.len()];
    let mut support = Vec::new();
    for &i in &pruned.active {
        let a = state.amplitudes[i];
        if a.norm() > 0.0 {
            amplitudes[i] = a;
            support.push(i);
        }
    }
    let residual_norm = dict.residual_norm(x, &amplitudes)?;
    Ok(SparseSpectrum {
        amplitudes,
        support,
        iterations: state.iteration,
        restarts,
        residual_norm,
    })
}

enum Attempt {
    Done(SparseSpectrum),
    Overfocal,
    Exhausted,
    Failed(Error),
}

fn run_attempt(
    dict: &Dictionary,
    x: &[C64],
    fourier: &[C64],
    top: &[usize],
    mut state: FocussState,
    opts: &FocussOptions,
    check_overfocal: bool,
    restarts: usize,
    best: &mut Option<SparseSpectrum>,
) -> Attempt {
    let grid = dict.grid.as_ref();
    let mut prev = state.amplitudes.clone();
    for k in 1..=opts.max_iterations {
        let next = match focuss_iterate(&state, dict, x, opts) {
            Ok(s) => s,
            Err(e) => return Attempt::Failed(e),
        };
        if check_overfocal && correlation_on(top, &next.amplitudes, fourier, grid) < opts.overfocal_correlation_min {
            return Attempt::Overfocal;
        }
        let norm = linalg::norm(&next.amplitudes);
        let change = next
            .amplitudes
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let pruned = match focuss_prune_and_smooth(&next, grid, opts) {
            Ok(s) => s,
            Err(e) => return Attempt::Failed(e),
        };
        let done = norm > 0.0 && change <= opts.convergence_tol * norm;
        if done || k == opts.max_iterations {
            let spectrum = match finalize(dict, x, &next, &pruned, restarts) {
                Ok(s) => s,
                Err(e) => return Attempt::Failed(e),
            };
            if done {
                return Attempt::Done(spectrum);
            }
            // the most recent iterate is the most focused one
            *best = Some(spectrum);
        }
        prev = next.amplitudes;
        state = pruned;
    }
    Attempt::Exhausted
}

/// Full adaptive FOCUSS solve. `rng` drives the restart perturbations only.
pub fn focuss_solve(dict: &Dictionary, x: &[C64], opts: &FocussOptions, rng: &mut Rng) -> Result<SparseSpectrum> {
    opts.validate()?;
    let (init, fourier) = focuss_init(dict, x)?;
    if x.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(SparseSpectrum::zero(dict.len()));
    }
    let top = fourier_top(&fourier);
    let mut best: Option<SparseSpectrum> = None;
    let mut last_err = None;
    for attempt in 0..=opts.max_restarts {
        let mut state = init.clone();
        if attempt > 0 {
            for w in state.weights.iter_mut() {
                *w *= 1.0 + opts.restart_perturbation * rng.random_range(-1.0..=1.0);
            }
        }
        let check = attempt < opts.max_restarts;
        match run_attempt(dict, x, &fourier, &top, state, opts, check, attempt, &mut best) {
            Attempt::Done(s) => return Ok(s),
            Attempt::Overfocal => continue,
            Attempt::Failed(Error::EmptySupport) if check => {
                last_err = Some(Error::EmptySupport);
                continue;
            }
            Attempt::Exhausted => {
                return Err(Error::DidNotConverge {
                    iterations: opts.max_iterations,
                    best: Box::new(best.take().expect("at least one iteration ran")),
                });
            }
            Attempt::Failed(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::NumericalBreakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionaryGrid;
    use crate::geometry::RadarConfig;
    use crate::rng;

    fn identity_dict(n: usize) -> Dictionary {
        Dictionary::from_matrix(DMatrix::identity(n, n))
    }

    #[test]
    fn identity_step_returns_data() {
        let dict = identity_dict(3);
        let x = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 3.0)];
        let state = FocussState {
            amplitudes: vec![C64::new(0.0, 0.0); 3],
            weights: vec![1.0; 3],
            active: vec![0, 1, 2],
            iteration: 0,
        };
        let next = focuss_iterate(&state, &dict, &x, &FocussOptions::default()).unwrap();
        for (a, b) in next.amplitudes.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_break_down() {
        let dict = identity_dict(3);
        let state = FocussState {
            amplitudes: vec![C64::new(0.0, 0.0); 3],
            weights: vec![0.0; 3],
            active: vec![0, 1, 2],
            iteration: 0,
        };
        let x = vec![C64::new(1.0, 0.0); 3];
        assert!(matches!(
            focuss_iterate(&state, &dict, &x, &FocussOptions::default()),
            Err(Error::NumericalBreakdown)
        ));
    }

    #[test]
    fn zero_data_gives_zero_spectrum() {
        let dict = Dictionary::random_phase(4, 8, &mut rng::seeded(1));
        let s = focuss_solve(&dict, &[C64::new(0.0, 0.0); 4], &FocussOptions::default(), &mut rng::seeded(2)).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.support.is_empty());
        let (init, _) = focuss_init(&dict, &[C64::new(0.0, 0.0); 4]).unwrap();
        assert!(init.weights.iter().all(|&w| w == 0.0));
        assert_eq!(init.active.len(), 8);
    }

    fn grid_dict() -> (RadarConfig, Dictionary) {
        let cfg = RadarConfig::table_one();
        let grid = DictionaryGrid::new(&cfg, 6, 6).unwrap();
        let dict = Dictionary::build(&cfg, &grid).unwrap();
        (cfg, dict)
    }

    #[test]
    fn one_sparse_on_grid_focuses_fast() {
        let (_, dict) = grid_dict();
        let cell = 2345;
        let x: Vec<C64> = dict.atoms.column(cell).iter().map(|z| z * C64::new(0.3, -1.1)).collect();
        let (init, fourier) = focuss_init(&dict, &x).unwrap();
        assert_eq!(init.active.len(), 5184);
        assert!((fourier[cell].norm() - 144.0 * C64::new(0.3, -1.1).norm()).abs() < 1e-9);
        let opts = FocussOptions::default();
        let mut state = init;
        // plain reweighting W = |a|, no smoothing
        for _ in 0..5 {
            let next = focuss_iterate(&state, &dict, &x, &opts).unwrap();
            state = focuss_prune_and_smooth(&next, None, &opts).unwrap();
        }
        let total: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        assert!(state.amplitudes[cell].norm_sqr() >= 0.99 * total);
    }

    #[test]
    fn smoothing_preserves_constant_blocks() {
        let (_, dict) = grid_dict();
        let grid = dict.grid.as_ref().unwrap();
        let center = grid.index(20, 30);
        let c = C64::new(0.7, -0.2);
        let mut amplitudes = vec![C64::new(0.0, 0.0); grid.len()];
        amplitudes[center] = c;
        for u in grid.neighbors(center, std::f64::consts::SQRT_2) {
            amplitudes[u] = c;
        }
        let state = FocussState {
            weights: amplitudes.iter().map(|a| a.norm()).collect(),
            active: (0..grid.len()).collect(),
            amplitudes,
            iteration: 1,
        };
        let out = focuss_prune_and_smooth(&state, Some(grid), &FocussOptions::default()).unwrap();
        // 3x3 block dilated by one ring → 5x5
        assert_eq!(out.active.len(), 25);
        let energy: f64 = out.active.iter().map(|&i| out.weights[i] * out.weights[i]).sum();
        assert!((energy - 9.0 * c.norm_sqr()).abs() < 1e-12);
        assert!(out.active.iter().all(|&i| out.weights[i] <= out.weights[center]));
    }

    #[test]
    fn pruning_without_grid_is_monotone() {
        let state = FocussState {
            amplitudes: vec![C64::new(1.0, 0.0), C64::new(1e-4, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.0)],
            weights: vec![1.0; 4],
            active: vec![0, 1, 2],
            iteration: 1,
        };
        let out = focuss_prune_and_smooth(&state, None, &FocussOptions::default()).unwrap();
        assert_eq!(out.active, vec![0, 2]);
        let zero = FocussState {
            amplitudes: vec![C64::new(0.0, 0.0); 4],
            ..state
        };
        assert!(matches!(
            focuss_prune_and_smooth(&zero, None, &FocussOptions::default()),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn overfocal_examples() {
        let (_, dict) = grid_dict();
        let grid = dict.grid.as_ref();
        let opts = FocussOptions::default();
        // Fourier envelope with two separate regions
        let a = dict.atoms.column(grid.unwrap().index(10, 10)).clone_owned();
        let b = dict.atoms.column(grid.unwrap().index(50, 60)).clone_owned();
        let x: Vec<C64> = (a + b).iter().copied().collect();
        let fourier = dict.fourier_spectrum(&x).unwrap();
        let as_state = |amps: Vec<C64>| FocussState {
            weights: vec![0.0; amps.len()],
            active: vec![],
            amplitudes: amps,
            iteration: 0,
        };
        assert!(!focuss_overfocal_check(&as_state(fourier.clone()), &fourier, grid, &opts));
        let floor_cell = fourier
            .iter()
            .enumerate()
            .min_by(|p, q| p.1.norm().total_cmp(&q.1.norm()))
            .unwrap()
            .0;
        let mut spike = vec![C64::new(0.0, 0.0); fourier.len()];
        spike[floor_cell] = C64::new(100.0, 0.0);
        assert!(focuss_overfocal_check(&as_state(spike), &fourier, grid, &opts));
        assert!(focuss_overfocal_check(
            &as_state(vec![C64::new(0.0, 0.0); fourier.len()]),
            &fourier,
            grid,
            &opts
        ));
        assert!(overfocal_correlation(&fourier, &fourier, None) > 1.0 - 1e-12);
    }

    #[test]
    fn options_validation() {
        assert!(FocussOptions::default().validate().is_ok());
        let bad = FocussOptions {
            threshold_fraction: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FocussOptions {
            neighbor_distance: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
