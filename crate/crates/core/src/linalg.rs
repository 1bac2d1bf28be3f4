//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::C64;

/// Applies the truncated pseudoinverse of a Hermitian PSD matrix `g` to `y`:
/// eigenvalues below `max(rel_cutoff · λ_max, abs_floor)` are dropped.
/// Returns `None` when nothing survives (including `g = 0`).
pub fn tsvd_solve_hermitian(
    g: DMatrix<C64>,
    y: &DVector<C64>,
    rel_cutoff: f64,
    abs_floor: f64,
) -> Option<DVector<C64>> {
    let eig = SymmetricEigen::new(g);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return None;
    }
    let cut = (rel_cutoff * max).max(abs_floor);
    let proj = eig.eigenvectors.ad_mul(y);
    let mut scaled = DVector::zeros(proj.len());
    let mut kept = 0;
    for k in 0..proj.len() {
        let lambda = eig.eigenvalues[k];
        if lambda >= cut && lambda > 0.0 {
            scaled[k] = proj[k] / lambda;
            kept += 1;
        }
    }
    if kept == 0 {
        return None;
    }
    Some(&eig.eigenvectors * scaled)
}

/// Nonzeros of each column of the unitary `U` that maps a centro-Hermitian
/// matrix (`J G J = conj(G)`) to a real symmetric one, `U^H G U`.
fn centro_basis(n: usize) -> Vec<Vec<(usize, C64)>> {
    let h = n / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols = Vec::with_capacity(n);
    for c in 0..h {
        cols.push(vec![(c, C64::new(r, 0.0)), (n - 1 - c, C64::new(r, 0.0))]);
    }
    if n % 2 == 1 {
        cols.push(vec![(h, C64::new(1.0, 0.0))]);
    }
    for c in 0..h {
        cols.push(vec![(c, C64::new(0.0, r)), (n - 1 - c, C64::new(0.0, -r))]);
    }
    cols
}

/// Eigenpairs of a real symmetric matrix (divide and conquer, sequential).
fn real_symmetric_eigen(m: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let evd = faer::MatRef::from_column_major_slice(m.as_slice(), n, n)
        .self_adjoint_eigen(faer::Side::Lower)
        .ok()?;
    let values = (0..n).map(|k| evd.S()[k]).collect();
    let u = evd.U();
    Some((values, DMatrix::from_fn(n, n, |r, c| u[(r, c)])))
}

/// Same contract as [`tsvd_solve_hermitian`] for a Hermitian matrix that is
/// also centro-Hermitian; the eigenproblem is solved in real arithmetic.
pub fn tsvd_solve_centro_hermitian(
    g: &DMatrix<C64>,
    y: &DVector<C64>,
    rel_cutoff: f64,
    abs_floor: f64,
) -> Option<DVector<C64>> {
    let n = g.nrows();
    let basis = centro_basis(n);
    // GU, column by column
    let mut gu = DMatrix::<C64>::zeros(n, n);
    for (c, entries) in basis.iter().enumerate() {
        for &(r, u) in entries {
            let src = g.column(r);
            for (dst, v) in gu.column_mut(c).iter_mut().zip(src.iter()) {
                *dst += v * u;
            }
        }
    }
    let mut real = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        for (row, entries) in basis.iter().enumerate() {
            let v: C64 = entries.iter().map(|&(r, u)| u.conj() * gu[(r, c)]).sum();
            real[(row, c)] = v.re;
        }
    }
    let (eigenvalues, eigenvectors) = real_symmetric_eigen(&real)?;
    let max = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return None;
    }
    let cut = (rel_cutoff * max).max(abs_floor);
    // y' = U^H y
    let yp: Vec<C64> = basis
        .iter()
        .map(|entries| entries.iter().map(|&(r, u)| u.conj() * y[r]).sum())
        .collect();
    let mut zp = vec![C64::new(0.0, 0.0); n];
    let mut kept = 0;
    for k in 0..n {
        let lambda = eigenvalues[k];
        if !(lambda >= cut && lambda > 0.0) {
            continue;
        }
        kept += 1;
        let v = eigenvectors.column(k);
        let proj: C64 = v.iter().zip(&yp).map(|(a, b)| b * *a).sum::<C64>() / lambda;
        for (z, a) in zp.iter_mut().zip(v.iter()) {
            *z += proj * *a;
        }
    }
    if kept == 0 {
        return None;
    }
    let mut z = DVector::zeros(n);
    for (c, entries) in basis.iter().enumerate() {
        for &(r, u) in entries {
            z[r] += u * zp[c];
        }
    }
    Some(z)
}

/// Solves `R z = s` for Hermitian positive definite `R`.
pub fn cholesky_solve(r: DMatrix<C64>, s: &DVector<C64>) -> Result<DVector<C64>> {
    let chol = Cholesky::new(r).ok_or(Error::SingularCovariance)?;
    // complex square roots never fail, so check the factor's diagonal
    let l = chol.l_dirty();
    for k in 0..l.nrows() {
        let d = l[(k, k)];
        if !(d.re > 0.0) || d.im.abs() > 1e-6 * d.re {
            return Err(Error::SingularCovariance);
        }
    }
    Ok(chol.solve(s))
}

/// Minimum-norm least-squares solution of `a z = b` via SVD, dropping
/// singular values below `rel_cutoff · σ_max`. Also returns the numerical
/// rank.
pub fn min_norm_solve(a: DMatrix<C64>, b: &DVector<C64>, rel_cutoff: f64) -> (DVector<C64>, usize) {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    let cut = rel_cutoff * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let ub = u.ad_mul(b);
    let mut scaled = DVector::zeros(svd.singular_values.len());
    let mut rank = 0;
    for k in 0..scaled.len() {
        let s = svd.singular_values[k];
        if s > cut && s > 0.0 {
            scaled[k] = ub[k] / C64::new(s, 0.0);
            rank += 1;
        }
    }
    (vt.ad_mul(&scaled), rank)
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsvd_matches_inverse_when_well_conditioned() {
        let g = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(4.0, 0.0), C64::new(1.0, 1.0), C64::new(1.0, -1.0), C64::new(3.0, 0.0)],
        );
        let y = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)]);
        let z = tsvd_solve_hermitian(g.clone(), &y, 1e-6, 0.0).unwrap();
        assert!((&g * z - y).norm() < 1e-12);
    }

    #[test]
    fn tsvd_drops_small_directions() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1e-8, 0.0)]));
        let y = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let z = tsvd_solve_hermitian(g, &y, 1e-3, 0.0).unwrap();
        assert!((z[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(z[1], C64::new(0.0, 0.0));
        assert!(tsvd_solve_hermitian(DMatrix::zeros(2, 2), &y, 1e-3, 0.0).is_none());
    }

    #[test]
    fn centro_hermitian_path_matches_general_path() {
        // block Toeplitz Hermitian matrices with Toeplitz blocks are centro-Hermitian
        for (n, m) in [(3, 4), (3, 3)] {
            let cfg = crate::geometry::RadarConfig {
                num_channels: n,
                num_pulses: m,
                ..crate::geometry::RadarConfig::table_one()
            };
            let grid = crate::dictionary::DictionaryGrid::new(&cfg, 2, 2).unwrap();
            let dict = crate::dictionary::Dictionary::build(&cfg, &grid).unwrap();
            let cols: Vec<usize> = (0..grid.len()).step_by(3).collect();
            let w: Vec<f64> = cols.iter().map(|&c| 1.0 + (c % 5) as f64).collect();
            let g = dict.weighted_gram(&cols, &w);
            let y = DVector::from_fn(n * m, |k, _| C64::new(k as f64, 1.0 - k as f64 * 0.3));
            let a = tsvd_solve_hermitian(g.clone(), &y, 1e-4, 0.5).unwrap();
            let b = tsvd_solve_centro_hermitian(&g, &y, 1e-4, 0.5).unwrap();
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn min_norm_solution_of_wide_system() {
        // x + y = 2 → minimum-norm (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let b = DVector::from_vec(vec![C64::new(2.0, 0.0)]);
        let (z, rank) = min_norm_solve(a, &b, 1e-12);
        assert_eq!(rank, 1);
        assert!((z[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((z[1] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]));
        let s = DVector::from_vec(vec![C64::new(1.0, 0.0); 2]);
        assert!(matches!(cholesky_solve(r, &s), Err(Error::SingularCovariance)));
    }
}
