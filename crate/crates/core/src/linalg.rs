//! Dense helpers shared by the solvers: canonical symplectic form, block
//! assembly, spectral abscissa and a Kronecker-vectorized Lyapunov solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// `I_n ⊗ [[0, 1], [-1, 0]]`, the commutator matrix of `n` canonical modes.
pub fn canonical_j(n_modes: usize) -> RMat {
    let mut j = RMat::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    j
}

pub fn block_diag(blocks: &[&RMat]) -> RMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = RMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn block_diag_c(blocks: &[&CMat]) -> CMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn symmetrize(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

pub fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Largest real part over the eigenvalues of `a` (`-inf` for an empty matrix).
pub fn spectral_abscissa(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A X + X A^T + Q = 0` by dense Kronecker vectorization.
///
/// Intended for the small systems this crate deals with (state dimension up
/// to a few tens); cost is cubic in `n^2`.
pub fn solve_lyapunov(a: &RMat, q: &RMat) -> Result<RMat> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov: A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if n == 0 {
        return Ok(RMat::zeros(0, 0));
    }
    let nn = n * n;
    // column-major vec: vec(AX) = (I ⊗ A) vec X, vec(X A^T) = (A ⊗ I) vec X
    let mut k = RMat::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for p in 0..n {
                k[(row, j * n + p)] += a[(i, p)];
                k[(row, p * n + i)] += a[(j, p)];
            }
        }
    }
    let lu = k.clone().lu();
    let singular = || Error::SolverFailure("singular Lyapunov operator".into());
    let rhs = RVec::from_iterator(nn, q.iter().map(|v| -v));
    let mut sol = lu.solve(&rhs).ok_or_else(singular)?;
    // two rounds of iterative refinement against the assembled operator
    for _ in 0..2 {
        let resid = &rhs - &k * &sol;
        sol += lu.solve(&resid).ok_or_else(singular)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let x = RMat::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

/// Smallest eigenvalue of the Hermitian matrix `S + iT` (`S` symmetric,
/// `T` antisymmetric), computed through the real embedding `[[S, -T], [T, S]]`.
pub fn min_eig_hermitian(s: &RMat, t: &RMat) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut big = RMat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(s);
    big.view_mut((n, n), (n, n)).copy_from(s);
    big.view_mut((0, n), (n, n)).copy_from(&(-t));
    big.view_mut((n, 0), (n, n)).copy_from(t);
    let big = symmetrize(&big);
    big.symmetric_eigenvalues().min()
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn canonical_j_is_antisymmetric_and_squares_to_minus_identity() {
        let j = canonical_j(3);
        assert_eq!(j.transpose(), -&j);
        assert_relative_eq!(&j * &j, -RMat::identity(6, 6));
    }

    #[test]
    fn lyapunov_residual_is_small() {
        let a = RMat::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -0.5, 0.3, 0.1, 0.0, -3.0]);
        let b = RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, 2.0]);
        let q = &b * b.transpose();
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = &a * &x + &x * a.transpose() + &q;
        assert!(res.norm() < 1e-12 * q.norm());
    }

    #[test]
    fn vacuum_ito_matrix_is_on_the_psd_boundary() {
        let f = RMat::identity(2, 2);
        let j = canonical_j(1);
        assert_relative_eq!(min_eig_hermitian(&f, &j), 0.0, epsilon = 1e-14);
        assert_relative_eq!(min_eig_hermitian(&(f * 0.5), &j), -0.5, epsilon = 1e-14);
    }

    #[test]
    fn spectral_abscissa_of_damped_rotation() {
        let a = RMat::from_row_slice(2, 2, &[-0.015, 1.0, -1.0, -0.015]);
        assert_relative_eq!(spectral_abscissa(&a), -0.015, epsilon = 1e-12);
    }
}
