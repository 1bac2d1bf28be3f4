//! L1 relaxation: `min Σ|a_i|` subject to `‖x − Ψa‖₂ ≤ ε`.
//!
//! Solved through the Lagrangian form `½‖x − Ψa‖² + λ‖a‖₁` (FISTA with
//! complex soft thresholding and adaptive restart), with `λ` found by
//! bisection in log scale so that the residual meets `ε` from below.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, SparseSpectrum};
use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L1Options {
    /// Relative stationarity residual at which an inner solve stops.
    pub stationarity_tol: f64,
    pub max_inner_iterations: usize,
    pub max_bisections: usize,
    /// Relative gap `(ε − ‖r‖)/ε` accepted for the outer search.
    pub residual_tol: f64,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            stationarity_tol: 1e-5,
            max_inner_iterations: 20_000,
            max_bisections: 60,
            residual_tol: 1e-4,
        }
    }
}

/// Smallest ε handled; a zero allowance is raised to this fraction of `‖x‖`.
pub const MIN_RELATIVE_EPSILON: f64 = 1e-9;

fn soft(z: C64, t: f64) -> C64 {
    let m = z.norm();
    if m <= t {
        C64::new(0.0, 0.0)
    } else {
        z * (1.0 - t / m)
    }
}

struct Problem<'a> {
    psi: &'a DMatrix<C64>,
    x: DVector<C64>,
    lipschitz: f64,
}

impl Problem<'_> {
    fn residual(&self, a: &DVector<C64>) -> DVector<C64> {
        &self.x - self.psi * a
    }

    /// Relative soft-threshold fixed-point residual.
    fn stationarity(&self, a: &DVector<C64>, lambda: f64) -> f64 {
        let na = a.norm();
        if na == 0.0 {
            let corr = self.psi.ad_mul(&self.x);
            let m = corr.iter().map(|z| z.norm()).fold(0.0, f64::max);
            return if m <= lambda { 0.0 } else { f64::INFINITY };
        }
        let grad = self.psi.ad_mul(&self.residual(a));
        let step = 1.0 / self.lipschitz;
        let mut diff = 0.0;
        for (ai, gi) in a.iter().zip(grad.iter()) {
            let p = soft(ai + gi * step, lambda * step);
            diff += (ai - p).norm_sqr();
        }
        diff.sqrt() / na
    }

    fn lasso(&self, lambda: f64, warm: &DVector<C64>, opts: &L1Options) -> Result<DVector<C64>> {
        let step = 1.0 / self.lipschitz;
        let mut a = warm.clone();
        let mut y = a.clone();
        let mut t = 1.0f64;
        for k in 0..opts.max_inner_iterations {
            let grad = self.psi.ad_mul(&self.residual(&y));
            let next = DVector::from_iterator(
                y.len(),
                y.iter().zip(grad.iter()).map(|(yi, gi)| soft(yi + gi * step, lambda * step)),
            );
            // gradient-based adaptive restart
            let restart = (&y - &next)
                .iter()
                .zip((&next - &a).iter())
                .map(|(p, q)| (p.conj() * q).re)
                .sum::<f64>()
                > 0.0;
            let t_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
            y = &next + (&next - &a) * C64::new(momentum, 0.0);
            a = next;
            t = t_next;
            if k % 20 == 19 && self.stationarity(&a, lambda) <= opts.stationarity_tol {
                return Ok(a);
            }
        }
        if self.stationarity(&a, lambda) <= opts.stationarity_tol {
            Ok(a)
        } else {
            Err(Error::DidNotConverge {
                iterations: opts.max_inner_iterations,
                best: Box::new(SparseSpectrum::zero(0)),
            })
        }
    }
}

/// `‖Ψ‖₂²`, from the smaller Gram `Ψ Ψ^H`.
fn lipschitz(psi: &DMatrix<C64>) -> f64 {
    nalgebra::SymmetricEigen::new(psi * psi.adjoint())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v))
}

/// Distance from `x` to the column space of `Ψ`.
fn range_distance(psi: &DMatrix<C64>, x: &DVector<C64>) -> f64 {
    let (z, _) = linalg::min_norm_solve(psi.clone(), x, 1e-12);
    (x - psi * z).norm()
}

fn to_spectrum(dict: &Dictionary, x: &[C64], a: &DVector<C64>, iterations: usize) -> Result<SparseSpectrum> {
    let amplitudes: Vec<C64> = a.iter().copied().collect();
    let support = (0..amplitudes.len()).filter(|&i| amplitudes[i].norm() > 0.0).collect();
    let residual_norm = dict.residual_norm(x, &amplitudes)?;
    Ok(SparseSpectrum {
        amplitudes,
        support,
        iterations,
        restarts: 0,
        residual_norm,
    })
}

/// L1-minimal amplitudes with residual at most `epsilon`.
pub fn l1_solve(dict: &Dictionary, x: &[C64], epsilon: f64, opts: &L1Options) -> Result<SparseSpectrum> {
    if !(epsilon >= 0.0) {
        return Err(Error::OutOfRange(format!("error allowance {epsilon} must be non-negative")));
    }
    if x.len() != dict.rows() {
        return Err(Error::DimensionMismatch {
            expected: dict.rows(),
            found: x.len(),
        });
    }
    let xv = DVector::from_column_slice(x);
    let xnorm = xv.norm();
    if epsilon >= xnorm {
        return Ok(SparseSpectrum::zero(dict.len()));
    }
    let distance = range_distance(&dict.atoms, &xv);
    if epsilon < distance {
        return Err(Error::Infeasible { epsilon, distance });
    }
    let epsilon = epsilon.max(MIN_RELATIVE_EPSILON * xnorm);

    let problem = Problem {
        psi: &dict.atoms,
        x: xv,
        lipschitz: lipschitz(&dict.atoms),
    };
    let lambda_max = dict.atoms.ad_mul(&problem.x).iter().map(|z| z.norm()).fold(0.0, f64::max);

    let zero = DVector::zeros(dict.len());
    let mut hi = lambda_max;
    let mut lo = 0.1 * lambda_max;
    let mut a_lo = problem.lasso(lo, &zero, opts)?;
    let mut steps = 1;
    while problem.residual(&a_lo).norm() > epsilon {
        hi = lo;
        lo *= 0.1;
        a_lo = problem.lasso(lo, &a_lo, opts)?;
        steps += 1;
        if lo < 1e-14 * lambda_max {
            return Err(Error::Infeasible { epsilon, distance });
        }
    }
    for _ in 0..opts.max_bisections {
        let r = problem.residual(&a_lo).norm();
        if (epsilon - r) <= opts.residual_tol * epsilon {
            break;
        }
        let mid = (lo * hi).sqrt();
        let a_mid = problem.lasso(mid, &a_lo, opts)?;
        steps += 1;
        if problem.residual(&a_mid).norm() <= epsilon {
            lo = mid;
            a_lo = a_mid;
        } else {
            hi = mid;
        }
    }
    to_spectrum(dict, x, &a_lo, steps)
}

/// Stationarity residual of a returned solution for the multiplier that
/// best explains it (`max |ψ_i^H r|` over the support).
pub fn stationarity_residual(dict: &Dictionary, x: &[C64], spectrum: &SparseSpectrum) -> f64 {
    let a = DVector::from_column_slice(&spectrum.amplitudes);
    let xv = DVector::from_column_slice(x);
    let r = &xv - &dict.atoms * &a;
    let corr = dict.atoms.ad_mul(&r);
    let lambda = spectrum
        .support
        .iter()
        .map(|&i| corr[i].norm())
        .fold(0.0, f64::max);
    let problem = Problem {
        psi: &dict.atoms,
        x: xv,
        lipschitz: lipschitz(&dict.atoms),
    };
    problem.stationarity(&a, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn soft_threshold() {
        assert_eq!(soft(C64::new(3.0, 4.0), 6.0), C64::new(0.0, 0.0));
        let z = soft(C64::new(3.0, 4.0), 1.0);
        assert!((z - C64::new(2.4, 3.2)).norm() < 1e-15);
    }

    #[test]
    fn large_allowance_gives_zero() {
        let dict = Dictionary::random_phase(4, 8, &mut rng::seeded(3));
        let x = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.5, 0.0), C64::new(0.0, 0.0)];
        let s = l1_solve(&dict, &x, 2.0, &L1Options::default()).unwrap();
        assert!(s.amplitudes.iter().all(|a| a.norm() == 0.0));
        assert!(l1_solve(&dict, &x, -1.0, &L1Options::default()).is_err());
    }

    #[test]
    fn one_sparse_atom_is_recovered() {
        let dict = Dictionary::random_phase(16, 64, &mut rng::seeded(4));
        let x: Vec<C64> = dict.atoms.column(17).iter().copied().collect();
        let eps = 0.01 * linalg::norm(&x);
        let s = l1_solve(&dict, &x, eps, &L1Options::default()).unwrap();
        assert!(s.residual_norm <= eps * (1.0 + 1e-6));
        assert!(s.support.contains(&17));
        assert!(s.l1_norm() <= 1.01);
        assert!(stationarity_residual(&dict, &x, &s) <= 1e-4);
    }

    #[test]
    fn infeasible_allowance_is_detected() {
        // rank-one dictionary: x off its range
        let atoms = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let dict = Dictionary::from_matrix(atoms);
        let x = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(
            l1_solve(&dict, &x, 0.5, &L1Options::default()),
            Err(Error::Infeasible { .. })
        ));
    }
}
