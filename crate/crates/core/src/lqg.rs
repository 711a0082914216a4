//! Classical LQG machinery: noise decorrelation, continuous algebraic Riccati
//! equations and Kalman-filter-plus-feedback synthesis.

use crate::error::{Error, Result};
use crate::linalg::{solve_lyapunov, spectral_abscissa, symmetrize, RMat};
use crate::statespace::{StateSpace, HURWITZ_MARGIN};

pub const RICCATI_TOL: f64 = 1e-9;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_STEPS: usize = 4;

/// `dx = A x dt + B du + dw`, `dy = C x dt + dv`, with `⟨dw dwᵀ⟩ = F_w dt`,
/// `⟨dv dvᵀ⟩ = F_v dt` and `⟨dw dvᵀ⟩ = M dt`.
///
/// `injection` carries the `M F_v⁻¹ dy` term removed by [`decorrelate`], so
/// that `a + injection · c` is always the original drift.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPlantForm {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub fw: RMat,
    pub fv: RMat,
    pub m: RMat,
    pub injection: RMat,
}

impl ClassicalPlantForm {
    pub fn new(a: RMat, b: RMat, c: RMat, fw: RMat, fv: RMat, m: RMat) -> Result<Self> {
        let (n, ny) = (a.nrows(), c.nrows());
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && fw.shape() == (n, n)
            && fv.shape() == (ny, ny)
            && m.shape() == (n, ny);
        if !ok {
            return Err(Error::DimensionMismatch("classical plant form".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            fw,
            fv,
            m,
            injection: RMat::zeros(n, ny),
        })
    }

    /// Reads a measurement-feedback problem off a closed quantum plant.
    ///
    /// `measured` lists the output ports whose x quadrature is recorded,
    /// `actuated` the input port whose field the controller displaces.
    /// `f` is the Itô covariance of all plant inputs.
    pub fn from_statespace(ss: &StateSpace, f: &RMat, measured: &[usize], actuated: usize) -> Result<Self> {
        if f.shape() != (ss.b.ncols(), ss.b.ncols()) {
            return Err(Error::DimensionMismatch("noise covariance vs plant inputs".into()));
        }
        if actuated >= ss.n_inputs() {
            return Err(Error::PortOutOfRange {
                index: actuated,
                ports: ss.n_inputs(),
            });
        }
        let mut rows = Vec::with_capacity(measured.len());
        for &p in measured {
            if p >= ss.n_outputs() {
                return Err(Error::PortOutOfRange {
                    index: p,
                    ports: ss.n_outputs(),
                });
            }
            rows.push(2 * p);
        }
        let cy = ss.c.select_rows(&rows);
        let dy = ss.d.select_rows(&rows);
        let bu = ss.b.columns(2 * actuated, 2).into_owned();
        Self::new(
            ss.a.clone(),
            bu,
            cy,
            symmetrize(&(&ss.b * f * ss.b.transpose())),
            symmetrize(&(&dy * f * dy.transpose())),
            &ss.b * f * dy.transpose(),
        )
    }

    pub fn original_drift(&self) -> RMat {
        &self.a + &self.injection * &self.c
    }
}

fn invert_spd(m: &RMat) -> Option<RMat> {
    let n = m.nrows();
    let ch = m.clone().cholesky()?;
    Some(ch.solve(&RMat::identity(n, n)))
}

/// Removes the process/measurement noise correlation:
/// `Ã = A − M F_v⁻¹ C`, `F̃_w = F_w − M F_v⁻¹ Mᵀ`, `M̃ = 0`.
pub fn decorrelate(p: &ClassicalPlantForm) -> Result<ClassicalPlantForm> {
    let fvi = invert_spd(&p.fv).ok_or(Error::SingularMeasurementNoise)?;
    let g = &p.m * &fvi;
    Ok(ClassicalPlantForm {
        a: &p.a - &g * &p.c,
        b: p.b.clone(),
        c: p.c.clone(),
        fw: symmetrize(&(&p.fw - &g * p.m.transpose())),
        fv: p.fv.clone(),
        m: RMat::zeros(p.m.nrows(), p.m.ncols()),
        injection: &p.injection + g,
    })
}

fn riccati_residual(a: &RMat, g: &RMat, q: &RMat, x: &RMat) -> RMat {
    a.transpose() * x + x * a + q - x * g * x
}

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(h: &RMat) -> Result<RMat> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let zi = lu
            .try_inverse()
            .ok_or_else(|| Error::NoStabilizingSolution("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * c + zi / c) * 0.5;
        let change = (&next - &z).norm() / next.norm().max(1.0);
        z = next;
        if !z.iter().all(|v| v.is_finite()) {
            break;
        }
        if change < 1e-13 {
            return Ok(z);
        }
    }
    Err(Error::NoStabilizingSolution("sign iteration did not converge".into()))
}

/// Stabilizing solution of `AᵀX + XA + Q − X B R⁻¹ Bᵀ X = 0`.
///
/// The stable invariant subspace of the Hamiltonian matrix is extracted with
/// the matrix sign function; a few Newton–Kleinman steps then polish the
/// residual.
pub fn care_solve(a: &RMat, b: &RMat, q: &RMat, r: &RMat) -> Result<RMat> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::DimensionMismatch("care_solve".into()));
    }
    if n == 0 {
        return Ok(RMat::zeros(0, 0));
    }
    let ri = invert_spd(r).ok_or_else(|| Error::NoStabilizingSolution("R is not positive definite".into()))?;
    let g = symmetrize(&(b * &ri * b.transpose()));
    let q = symmetrize(q);

    let mut h = RMat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;

    // stable subspace = ker(W + I): [W12; W22 + I] X = −[W11 + I; W21]
    let mut lhs = RMat::zeros(2 * n, n);
    let mut rhs = RMat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + RMat::identity(n, n)));
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + RMat::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoStabilizingSolution(e.to_string()))?;
    x = symmetrize(&x);

    for _ in 0..NEWTON_STEPS {
        let k = &ri * b.transpose() * &x;
        let acl = a - b * &k;
        if spectral_abscissa(&acl) >= -HURWITZ_MARGIN {
            break;
        }
        let rhs = &q + k.transpose() * r * &k;
        match solve_lyapunov(&acl.transpose(), &rhs) {
            Ok(next) => x = next,
            Err(_) => break,
        }
    }

    let scale = q.norm() + (a.transpose() * &x).norm() * 2.0 + (&x * &g * &x).norm();
    let resid = riccati_residual(a, &g, &q, &x).norm();
    if !(resid <= RICCATI_TOL * scale) {
        return Err(Error::NoStabilizingSolution(format!("residual {resid:.3e}")));
    }
    let abscissa = spectral_abscissa(&(a - &g * &x));
    if abscissa >= -HURWITZ_MARGIN {
        return Err(Error::NoStabilizingSolution(format!(
            "closed loop not Hurwitz (abscissa {abscissa:.3e})"
        )));
    }
    Ok(x)
}

/// Kalman filter plus state feedback, `dx̂ = (Ã − BL − KC) x̂ dt + (K + M F_v⁻¹) dy`,
/// `u = −L x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalController {
    pub filter_a: RMat,
    pub kalman_gain: RMat,
    pub injection: RMat,
    pub feedback_gain: RMat,
    pub q_w: RMat,
    pub r_w: RMat,
}

impl ClassicalController {
    /// Controller as a state-space device with measurement ports (x
    /// quadrature read) followed by one ancilla port that `u` displaces.
    pub fn to_statespace(&self) -> Result<StateSpace> {
        let gain = &self.kalman_gain + &self.injection;
        let filter = crate::components::ClassicalFilter {
            a: self.filter_a.clone(),
            b: gain,
            c: -&self.feedback_gain,
            d: RMat::zeros(self.feedback_gain.nrows(), self.kalman_gain.ncols()),
        };
        crate::components::measurement_controller(&filter, self.kalman_gain.ncols())
    }
}

/// Synthesizes the LQG-optimal measurement controller for weights `Q_w`
/// (state) and `R_w` (actuation).
pub fn kalman_lqg_controller(p: &ClassicalPlantForm, q_w: &RMat, r_w: &RMat) -> Result<ClassicalController> {
    let dp = decorrelate(p)?;
    let fvi = invert_spd(&dp.fv).ok_or(Error::SingularMeasurementNoise)?;
    let sigma = care_solve(&dp.a.transpose(), &dp.c.transpose(), &dp.fw, &dp.fv)?;
    let kalman = &sigma * dp.c.transpose() * &fvi;
    let a0 = dp.original_drift();
    let x = care_solve(&a0, &dp.b, q_w, r_w)?;
    let ri = invert_spd(r_w).ok_or_else(|| Error::NoStabilizingSolution("R is not positive definite".into()))?;
    let l = ri * dp.b.transpose() * x;
    let filter_a = &dp.a - &dp.b * &l - &kalman * &dp.c;
    Ok(ClassicalController {
        filter_a,
        kalman_gain: kalman,
        injection: dp.injection.clone(),
        feedback_gain: l,
        q_w: q_w.clone(),
        r_w: r_w.clone(),
    })
}
