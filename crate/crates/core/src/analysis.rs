//! Steady-state covariance, LQG cost and output power spectra of closed loops.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_eig_hermitian, solve_lyapunov, spectral_abscissa, CMat, RMat};
use crate::noise::ItoMatrix;
use crate::statespace::{StateSpace, HURWITZ_MARGIN};

pub const LYAPUNOV_TOL: f64 = 1e-10;
pub const HEISENBERG_TOL: f64 = 1e-9;

/// Symmetrized steady-state covariance `σ_ij = ½⟨x_i x_j + x_j x_i⟩` along
/// with the commutator matrix of the same state.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub sigma: RMat,
    pub theta: RMat,
}

impl Covariance {
    /// `min eig(σ + iΘ)`; nonnegative for a physical state.
    pub fn heisenberg_min_eig(&self) -> f64 {
        min_eig_hermitian(&self.sigma, &self.theta)
    }

    /// Heisenberg check with tolerance scaled by the covariance magnitude.
    pub fn satisfies_uncertainty(&self) -> bool {
        self.heisenberg_min_eig() >= -HEISENBERG_TOL * max_abs(&self.sigma).max(1.0)
    }
}

pub fn stability(ss: &StateSpace) -> f64 {
    spectral_abscissa(&ss.a)
}

fn check_noise(ss: &StateSpace, f: &ItoMatrix) -> Result<()> {
    if f.f.nrows() != ss.b.ncols() || f.f.ncols() != ss.b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "noise covers {} quadratures, system has {} inputs",
            f.f.nrows(),
            ss.b.ncols()
        )));
    }
    Ok(())
}

/// Solves `Aσ + σAᵀ + BFBᵀ = 0` and checks the residual.
pub fn steady_state_covariance(ss: &StateSpace, f: &ItoMatrix) -> Result<Covariance> {
    check_noise(ss, f)?;
    let abscissa = stability(ss);
    if ss.n_states() > 0 && abscissa >= -HURWITZ_MARGIN {
        return Err(Error::UnstableSystem(abscissa));
    }
    let q = &ss.b * &f.f * ss.b.transpose();
    let sigma = solve_lyapunov(&ss.a, &q)?;
    let resid = (&ss.a * &sigma + &sigma * ss.a.transpose() + &q).norm();
    if !(resid <= LYAPUNOV_TOL * q.norm()) {
        return Err(Error::SolverFailure(format!(
            "Lyapunov residual {resid:.3e} exceeds {:.1e} relative",
            LYAPUNOV_TOL
        )));
    }
    Ok(Covariance {
        sigma,
        theta: ss.theta.clone(),
    })
}

/// Fluctuation photon number `(σ_xx + σ_pp − 2)/4` of one mode.
pub fn photon_number(cov: &Covariance, mode: usize) -> Result<f64> {
    let n_modes = cov.sigma.nrows() / 2;
    if mode >= n_modes {
        return Err(Error::IndexOutOfRange { index: mode, len: n_modes });
    }
    let (i, j) = (2 * mode, 2 * mode + 1);
    Ok((cov.sigma[(i, i)] + cov.sigma[(j, j)] - 2.0) / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    /// `⟨a†a⟩` of the given mode of the joint state.
    Mode { index: usize },
    /// `½ tr(Wσ) + offset`, i.e. `½⟨xᵀWx⟩ + offset`.
    Quadratic { weight: Vec<Vec<f64>>, offset: f64 },
}

impl CostSpec {
    pub fn mode(index: usize) -> Self {
        Self::Mode { index }
    }

    pub fn evaluate(&self, cov: &Covariance) -> Result<f64> {
        match self {
            Self::Mode { index } => photon_number(cov, *index),
            Self::Quadratic { weight, offset } => {
                let n = cov.sigma.nrows();
                if weight.len() != n || weight.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch(format!("cost weight must be {n}x{n}")));
                }
                let mut acc = 0.0;
                for (i, row) in weight.iter().enumerate() {
                    for (j, w) in row.iter().enumerate() {
                        acc += w * cov.sigma[(j, i)];
                    }
                }
                Ok(0.5 * acc + offset)
            }
        }
    }
}

/// Assembled closed loop: joint dynamics, input noise and cost functional.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub system: StateSpace,
    pub noise: ItoMatrix,
    pub cost: CostSpec,
}

/// Cost and covariance of a closed loop. Fails with `SolverFailure` when the
/// computed covariance violates the uncertainty relation, which only happens
/// when the Lyapunov solve has lost accuracy.
pub fn lqg_cost_detailed(cl: &ClosedLoop) -> Result<(f64, Covariance)> {
    let cov = steady_state_covariance(&cl.system, &cl.noise)?;
    if !cov.satisfies_uncertainty() {
        return Err(Error::SolverFailure(format!(
            "covariance violates uncertainty bound (min eig {:.3e})",
            cov.heisenberg_min_eig()
        )));
    }
    let cost = cl.cost.evaluate(&cov)?;
    if !cost.is_finite() {
        return Err(Error::SolverFailure("non-finite cost".into()));
    }
    Ok((cost, cov))
}

pub fn lqg_cost(cl: &ClosedLoop) -> Result<f64> {
    lqg_cost_detailed(cl).map(|(c, _)| c)
}

/// Output spectral densities of one port over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    /// `H F H†` restricted to the port quadratures, one 2×2 block per `ω`.
    pub blocks: Vec<[[Complex64; 2]; 2]>,
    /// Vacuum-subtracted photon flux density `(S_xx + S_pp − 2)/4`.
    pub flux: Vec<f64>,
}

impl Spectrum {
    /// Grid indices of strict local maxima of the flux whose height exceeds
    /// `rel_floor` times the global maximum.
    pub fn local_maxima(&self, rel_floor: f64) -> Vec<usize> {
        let top = self.flux.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = rel_floor * top.max(0.0);
        (1..self.flux.len().saturating_sub(1))
            .filter(|&i| {
                let v = self.flux[i];
                v > self.flux[i - 1] && v > self.flux[i + 1] && v > floor
            })
            .collect()
    }

    /// Number of local maxima inside `[lo, hi]`.
    pub fn peaks_between(&self, lo: f64, hi: f64, rel_floor: f64) -> usize {
        self.local_maxima(rel_floor)
            .into_iter()
            .filter(|&i| self.omega[i] >= lo && self.omega[i] <= hi)
            .count()
    }
}

/// `S(ω) = H(ω) F H(ω)†` with `H(ω) = D + C(iωI − A)⁻¹B`.
pub fn output_spectrum(ss: &StateSpace, f: &ItoMatrix, port: usize, omega: &[f64]) -> Result<Spectrum> {
    check_noise(ss, f)?;
    if port >= ss.n_outputs() {
        return Err(Error::PortOutOfRange {
            index: port,
            ports: ss.n_outputs(),
        });
    }
    if let Some(w) = omega.iter().find(|w| !w.is_finite()) {
        return Err(Error::SolverFailure(format!("non-finite frequency {w}")));
    }
    let abscissa = stability(ss);
    if ss.n_states() > 0 && abscissa >= -HURWITZ_MARGIN {
        return Err(Error::UnstableSystem(abscissa));
    }
    let n = ss.n_states();
    let to_c = |m: &RMat| m.map(|x| Complex64::new(x, 0.0));
    let a = to_c(&ss.a);
    let b = to_c(&ss.b);
    let c = to_c(&ss.c.rows(2 * port, 2).into_owned());
    let d = to_c(&ss.d.rows(2 * port, 2).into_owned());
    let fc = to_c(&f.f);

    let blocks: Vec<[[Complex64; 2]; 2]> = omega
        .par_iter()
        .map(|&w| {
            let h = if n == 0 {
                d.clone()
            } else {
                let mut m: CMat = -&a;
                for k in 0..n {
                    m[(k, k)] += Complex64::new(0.0, w);
                }
                let x = m.lu().solve(&b).ok_or_else(|| Error::SolverFailure(format!("singular resolvent at ω = {w}")))?;
                &d + &c * x
            };
            let s = &h * &fc * h.adjoint();
            Ok([[s[(0, 0)], s[(0, 1)]], [s[(1, 0)], s[(1, 1)]]])
        })
        .collect::<Result<_>>()?;
    let flux = blocks.iter().map(|s| (s[0][0].re + s[1][1].re - 2.0) / 4.0).collect();
    Ok(Spectrum {
        omega: omega.to_vec(),
        blocks,
        flux,
    })
}
