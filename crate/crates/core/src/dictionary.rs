//! Overcomplete angle-Doppler dictionary and the matched (Fourier) spectrum.
//!
//! Columns are ordered Doppler-major: column `j * N_s + i` is the steering
//! vector of spatial bin `i` and Doppler bin `j`. Both axes are uniform over
//! `[−0.5, 0.5)` cycles, `axis[k] = −0.5 + k / len`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::RadarConfig;
use crate::rng::{self, Rng};
use crate::scene;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryGrid {
    pub rho_s: usize,
    pub rho_t: usize,
    pub num_channels: usize,
    pub num_pulses: usize,
    pub spatial_axis: Vec<f64>,
    pub doppler_axis: Vec<f64>,
}

fn uniform_axis(len: usize) -> Vec<f64> {
    (0..len).map(|k| -0.5 + k as f64 / len as f64).collect()
}

fn nearest_bin(axis_len: usize, value: f64, what: &str) -> Result<usize> {
    if !(-0.5..0.5).contains(&value) {
        return Err(Error::OutOfRange(format!(
            "{what} {value} outside the grid span [-0.5, 0.5)"
        )));
    }
    let u = (value + 0.5) * axis_len as f64;
    // round half down
    let k = (u - 0.5).ceil().max(0.0) as usize;
    // the axis is periodic: the top half cell belongs to bin 0
    Ok(if k >= axis_len { 0 } else { k })
}

impl DictionaryGrid {
    pub fn new(cfg: &RadarConfig, rho_s: usize, rho_t: usize) -> Result<Self> {
        if rho_s < 1 || rho_t < 1 {
            return Err(Error::InvalidConfig(
                "resolution scales must be at least 1".into(),
            ));
        }
        Ok(Self {
            rho_s,
            rho_t,
            num_channels: cfg.num_channels,
            num_pulses: cfg.num_pulses,
            spatial_axis: uniform_axis(rho_s * cfg.num_channels),
            doppler_axis: uniform_axis(rho_t * cfg.num_pulses),
        })
    }

    pub fn n_s(&self) -> usize {
        self.spatial_axis.len()
    }

    pub fn n_t(&self) -> usize {
        self.doppler_axis.len()
    }

    pub fn len(&self) -> usize {
        self.n_s() * self.n_t()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, spatial_bin: usize, doppler_bin: usize) -> usize {
        doppler_bin * self.n_s() + spatial_bin
    }

    /// `(spatial_bin, doppler_bin)` of a column index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.n_s(), index / self.n_s())
    }

    /// `(f_sp, f̄_d)` of a column index.
    pub fn frequencies(&self, index: usize) -> (f64, f64) {
        let (i, j) = self.coords(index);
        (self.spatial_axis[i], self.doppler_axis[j])
    }

    /// Nearest grid cell; ties go to the lower index.
    pub fn grid_index(&self, spatial_freq: f64, doppler: f64) -> Result<usize> {
        let i = nearest_bin(self.n_s(), spatial_freq, "spatial frequency")?;
        let j = nearest_bin(self.n_t(), doppler, "normalized Doppler")?;
        Ok(self.index(i, j))
    }

    /// Cells other than `index` within Euclidean grid distance `distance`,
    /// truncated at the grid edges.
    pub fn neighbors(&self, index: usize, distance: f64) -> Vec<usize> {
        let (i, j) = self.coords(index);
        let reach = distance.floor() as isize;
        let mut out = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if (di == 0 && dj == 0) || ((di * di + dj * dj) as f64) > distance * distance + 1e-9 {
                    continue;
                }
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= self.n_s() as isize || jj >= self.n_t() as isize {
                    continue;
                }
                out.push(self.index(ii as usize, jj as usize));
            }
        }
        out
    }
}

/// Phase tables `exp(j2π p f)` for lag `p ∈ [−(len−1), len−1]` over one
/// axis, used to assemble weighted Gram matrices in closed form.
#[derive(Debug, Clone)]
struct LagTable {
    lags: usize,
    bins: usize,
    values: Vec<C64>,
}

impl LagTable {
    fn new(len: usize, axis: &[f64]) -> Self {
        let lags = 2 * len - 1;
        let mut values = Vec::with_capacity(lags * axis.len());
        for p in 0..lags {
            let lag = p as f64 - (len - 1) as f64;
            values.extend(
                axis.iter()
                    .map(|f| C64::from_polar(1.0, std::f64::consts::TAU * lag * f)),
            );
        }
        Self {
            lags,
            bins: axis.len(),
            values,
        }
    }

    fn row(&self, lag_index: usize) -> &[C64] {
        &self.values[lag_index * self.bins..(lag_index + 1) * self.bins]
    }
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    pub atoms: DMatrix<C64>,
    pub grid: Option<DictionaryGrid>,
    tables: Option<(LagTable, LagTable)>,
}

impl Dictionary {
    /// The steering dictionary of `grid`.
    pub fn build(cfg: &RadarConfig, grid: &DictionaryGrid) -> Result<Self> {
        let nm = cfg.dof();
        if grid.len() < nm {
            return Err(Error::GridTooCoarse {
                cells: grid.len(),
                dim: nm,
            });
        }
        if grid.num_channels != cfg.num_channels || grid.num_pulses != cfg.num_pulses {
            return Err(Error::DimensionMismatch {
                expected: nm,
                found: grid.num_channels * grid.num_pulses,
            });
        }
        let mut atoms = DMatrix::zeros(nm, grid.len());
        for j in 0..grid.n_t() {
            for i in 0..grid.n_s() {
                let s = scene::space_time_steering(cfg, grid.spatial_axis[i], grid.doppler_axis[j]);
                atoms
                    .column_mut(grid.index(i, j))
                    .copy_from_slice(&s.values);
            }
        }
        let tables = (
            LagTable::new(cfg.num_channels, &grid.spatial_axis),
            LagTable::new(cfg.num_pulses, &grid.doppler_axis),
        );
        Ok(Self {
            atoms,
            grid: Some(grid.clone()),
            tables: Some(tables),
        })
    }

    /// A dictionary with no angle-Doppler grid attached.
    pub fn from_matrix(atoms: DMatrix<C64>) -> Self {
        Self {
            atoms,
            grid: None,
            tables: None,
        }
    }

    /// `rows × cols` matrix of unit-modulus entries with uniform random phase.
    pub fn random_phase(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let mut atoms = DMatrix::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                atoms[(r, c)] = rng::unit_phase(rng);
            }
        }
        Self::from_matrix(atoms)
    }

    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_len(&self, x: &[C64]) -> Result<()> {
        if x.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `Ψ^H x`, the matched-filter (Fourier) spectrum.
    pub fn fourier_spectrum(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_len(x)?;
        let xv = DVector::from_column_slice(x);
        Ok(self.atoms.ad_mul(&xv).as_slice().to_vec())
    }

    /// `Ψ a` for a full-length amplitude vector.
    pub fn synthesize(&self, amplitudes: &[C64]) -> Result<Vec<C64>> {
        if amplitudes.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: amplitudes.len(),
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        for (c, a) in amplitudes.iter().enumerate() {
            if *a == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.atoms.column(c).iter()) {
                *o += a * v;
            }
        }
        Ok(out)
    }

    /// `‖x − Ψ a‖₂`.
    pub fn residual_norm(&self, x: &[C64], amplitudes: &[C64]) -> Result<f64> {
        self.check_len(x)?;
        let fit = self.synthesize(amplitudes)?;
        Ok(x.iter()
            .zip(&fit)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// `Σ_k w_k ψ_k ψ_k^H` over the listed columns (`weights` are real,
    /// usually squared FOCUSS weights). On a steering grid the result is
    /// block Toeplitz and is assembled from lag sums instead of outer
    /// products.
    pub fn weighted_gram(&self, columns: &[usize], weights: &[f64]) -> DMatrix<C64> {
        match (&self.grid, &self.tables) {
            (Some(grid), Some((sp, dp))) => self.toeplitz_gram(grid, sp, dp, columns, weights),
            _ => {
                let m = self.rows();
                let mut g = DMatrix::zeros(m, m);
                for (&c, &w) in columns.iter().zip(weights) {
                    let col = self.atoms.column(c);
                    for b in 0..m {
                        let cb = col[b].conj() * w;
                        for a in 0..m {
                            g[(a, b)] += col[a] * cb;
                        }
                    }
                }
                g
            }
        }
    }

    fn toeplitz_gram(
        &self,
        grid: &DictionaryGrid,
        sp: &LagTable,
        dp: &LagTable,
        columns: &[usize],
        weights: &[f64],
    ) -> DMatrix<C64> {
        let (n, m) = (grid.num_channels, grid.num_pulses);
        let n_s = grid.n_s();
        // u[i][q] = Σ_j w_(i,j) exp(j2π q f_j)
        let mut u = vec![C64::new(0.0, 0.0); n_s * dp.lags];
        for (&c, &w) in columns.iter().zip(weights) {
            let (i, j) = grid.coords(c);
            for q in 0..dp.lags {
                u[i * dp.lags + q] += dp.row(q)[j] * w;
            }
        }
        // t[p][q] = Σ_i exp(j2π p f_i) u[i][q]
        let mut t = vec![C64::new(0.0, 0.0); sp.lags * dp.lags];
        for p in 0..sp.lags {
            let phase = sp.row(p);
            let row = &mut t[p * dp.lags..(p + 1) * dp.lags];
            for (i, ph) in phase.iter().enumerate() {
                let ui = &u[i * dp.lags..(i + 1) * dp.lags];
                if ui.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    continue;
                }
                for (r, v) in row.iter_mut().zip(ui) {
                    *r += ph * v;
                }
            }
        }
        let nm = n * m;
        DMatrix::from_fn(nm, nm, |a, b| {
            let (na, ma) = (a / m, a % m);
            let (nb, mb) = (b / m, b % m);
            let p = na + n - 1 - nb;
            let q = ma + m - 1 - mb;
            t[p * dp.lags + q]
        })
    }
}

/// Sparse angle-Doppler spectrum returned by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    pub amplitudes: Vec<C64>,
    /// Active cells, ascending.
    pub support: Vec<usize>,
    pub iterations: usize,
    pub restarts: usize,
    pub residual_norm: f64,
}

impl SparseSpectrum {
    pub fn zero(len: usize) -> Self {
        Self {
            amplitudes: vec![C64::new(0.0, 0.0); len],
            support: Vec::new(),
            iterations: 0,
            restarts: 0,
            residual_norm: 0.0,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm()).sum()
    }

    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Power in dB relative to `reference`; zero maps to `-inf`.
pub fn power_db(power: f64, reference: f64) -> f64 {
    10.0 * (power / reference).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n: usize, m: usize) -> RadarConfig {
        RadarConfig {
            num_channels: n,
            num_pulses: m,
            ..RadarConfig::table_one()
        }
    }

    #[test]
    fn grid_axes_are_uniform() {
        let grid = DictionaryGrid::new(&RadarConfig::table_one(), 6, 6).unwrap();
        assert_eq!((grid.n_s(), grid.n_t()), (72, 72));
        assert_eq!(grid.spatial_axis[0], -0.5);
        for w in grid.doppler_axis.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 72.0).abs() < 1e-15);
        }
        assert!(DictionaryGrid::new(&RadarConfig::table_one(), 0, 6).is_err());
    }

    #[test]
    fn table_one_dictionary_shape() {
        let cfg = RadarConfig::table_one();
        let grid = DictionaryGrid::new(&cfg, 6, 6).unwrap();
        let dict = Dictionary::build(&cfg, &grid).unwrap();
        assert_eq!(dict.atoms.shape(), (144, 5184));
        for c in [0, 1000, 5183] {
            let norm: f64 = dict.atoms.column(c).iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 144.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_scale_dictionary_is_a_dft() {
        let cfg = small_cfg(2, 2);
        let grid = DictionaryGrid::new(&cfg, 1, 1).unwrap();
        let dict = Dictionary::build(&cfg, &grid).unwrap();
        let gram = dict.atoms.adjoint() * &dict.atoms;
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 4.0 } else { 0.0 };
                assert!((gram[(a, b)].norm() - expected).abs() < 1e-12);
            }
        }
        // column (i, j) enumerated directly
        for j in 0..2 {
            for i in 0..2 {
                let s = scene::space_time_steering(&cfg, grid.spatial_axis[i], grid.doppler_axis[j]);
                let col = dict.atoms.column(grid.index(i, j));
                for (a, b) in col.iter().zip(&s.values) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let cfg = small_cfg(4, 4);
        let mut grid = DictionaryGrid::new(&cfg, 1, 1).unwrap();
        grid.spatial_axis.truncate(3);
        assert!(matches!(
            Dictionary::build(&cfg, &grid),
            Err(Error::GridTooCoarse { cells: 12, dim: 16 })
        ));
    }

    #[test]
    fn fourier_spectrum_examples() {
        let cfg = RadarConfig::table_one();
        let grid = DictionaryGrid::new(&cfg, 6, 6).unwrap();
        let dict = Dictionary::build(&cfg, &grid).unwrap();
        let col: Vec<C64> = dict.atoms.column(777).iter().copied().collect();
        let f = dict.fourier_spectrum(&col).unwrap();
        assert!((f[777] - C64::new(144.0, 0.0)).norm() < 1e-9);
        let zero = dict.fourier_spectrum(&vec![C64::new(0.0, 0.0); 144]).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
        assert!(matches!(
            dict.fourier_spectrum(&[C64::new(1.0, 0.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
        // two orthogonal on-grid atoms: 6 bins apart in both axes
        let (a, b) = (grid.index(6, 6), grid.index(12, 30));
        let x: Vec<C64> = dict
            .atoms
            .column(a)
            .iter()
            .zip(dict.atoms.column(b).iter())
            .map(|(p, q)| p + q)
            .collect();
        let f = dict.fourier_spectrum(&x).unwrap();
        assert!((f[a].norm() - 144.0).abs() < 1e-9);
        assert!((f[b].norm() - 144.0).abs() < 1e-9);
    }

    #[test]
    fn grid_index_rules() {
        let cfg = small_cfg(4, 4);
        let grid = DictionaryGrid::new(&cfg, 1, 1).unwrap();
        // axis: -0.5, -0.25, 0, 0.25
        assert_eq!(grid.grid_index(0.0, -0.25).unwrap(), grid.index(2, 1));
        assert_eq!(grid.grid_index(-0.125, 0.125).unwrap(), grid.index(1, 2));
        assert_eq!(grid.grid_index(0.3, -0.5).unwrap(), grid.index(3, 0));
        // periodic: closer to -0.5 than to 0.25
        assert_eq!(grid.grid_index(0.49, -0.5).unwrap(), grid.index(0, 0));
        assert!(grid.grid_index(0.5, 0.0).is_err());
        assert!(grid.grid_index(0.0, -0.51).is_err());
        for idx in 0..grid.len() {
            let (f, d) = grid.frequencies(idx);
            assert_eq!(grid.grid_index(f, d).unwrap(), idx);
        }
    }

    #[test]
    fn neighborhoods() {
        let cfg = RadarConfig::table_one();
        let grid = DictionaryGrid::new(&cfg, 6, 6).unwrap();
        let d = std::f64::consts::SQRT_2;
        assert_eq!(grid.neighbors(grid.index(10, 10), d).len(), 8);
        assert_eq!(grid.neighbors(grid.index(0, 0), d).len(), 3);
        assert_eq!(grid.neighbors(grid.index(0, 10), d).len(), 5);
        assert_eq!(grid.neighbors(grid.index(10, 10), 1.0).len(), 4);
    }

    #[test]
    fn toeplitz_gram_matches_outer_products() {
        let cfg = small_cfg(3, 4);
        let grid = DictionaryGrid::new(&cfg, 2, 3).unwrap();
        let dict = Dictionary::build(&cfg, &grid).unwrap();
        let columns: Vec<usize> = (0..grid.len()).step_by(5).collect();
        let weights: Vec<f64> = columns.iter().map(|&c| 0.5 + c as f64 / 7.0).collect();
        let fast = dict.weighted_gram(&columns, &weights);
        let plain = Dictionary::from_matrix(dict.atoms.clone()).weighted_gram(&columns, &weights);
        assert!((fast - plain).norm() < 1e-10);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn small_radar(n: usize, m: usize) -> RadarConfig {
        RadarConfig {
            num_channels: n,
            num_pulses: m,
            ..RadarConfig::table_one()
        }
    }

    proptest! {
        #[test]
        fn grid_index_inverts_frequencies(n in 1usize..6, m in 1usize..6, rs in 1usize..4, rt in 1usize..4, pick in any::<prop::sample::Index>()) {
            let grid = DictionaryGrid::new(&small_radar(n, m), rs, rt).unwrap();
            let i = pick.index(grid.len());
            let (f, d) = grid.frequencies(i);
            prop_assert_eq!(grid.grid_index(f, d).unwrap(), i);
            prop_assert_eq!(grid.index(grid.coords(i).0, grid.coords(i).1), i);
        }

        #[test]
        fn grid_index_picks_the_nearest_cell(n in 1usize..6, m in 1usize..6, f in -0.5..0.5f64, d in -0.5..0.5f64) {
            let grid = DictionaryGrid::new(&small_radar(n, m), 2, 2).unwrap();
            let (gf, gd) = grid.frequencies(grid.grid_index(f, d).unwrap());
            let circ = |a: f64, b: f64| { let e = (a - b).rem_euclid(1.0); e.min(1.0 - e) };
            prop_assert!(circ(gf, f) <= 0.5 / grid.n_s() as f64 + 1e-12);
            prop_assert!(circ(gd, d) <= 0.5 / grid.n_t() as f64 + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn weighted_gram_equals_explicit_sum(
            n in 1usize..5,
            m in 1usize..5,
            seed in any::<u64>(),
            count in 1usize..12,
        ) {
            let cfg = small_radar(n, m);
            let grid = DictionaryGrid::new(&cfg, 2, 3).unwrap();
            let dict = Dictionary::build(&cfg, &grid).unwrap();
            let mut r = rng::seeded(seed);
            let columns: Vec<usize> = (0..count).map(|_| r.random_range(0..grid.len())).collect();
            let weights: Vec<f64> = (0..count).map(|_| r.random_range(0.0..2.0)).collect();
            let fast = dict.weighted_gram(&columns, &weights);
            let mut slow = DMatrix::<C64>::zeros(cfg.dof(), cfg.dof());
            for (&c, &w) in columns.iter().zip(&weights) {
                let col = dict.atoms.column(c);
                slow += (col * col.adjoint()) * C64::new(w, 0.0);
            }
            prop_assert!((fast - slow).norm() < 1e-9 * (1.0 + count as f64));
        }
    }
}
