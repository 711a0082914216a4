//! Device library and scenario builders.
//!
//! Quantum devices are returned as [`LinearSlh`]; static (eliminated) maps as
//! [`StaticDevice`]; measurement controllers, which mix classical filter
//! states with optical ports, directly as [`StateSpace`] with `Θ = 0` on the
//! classical block.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};
use crate::slh::LinearSlh;
use crate::statespace::{connect, to_statespace, Link, StateSpace, StaticDevice};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Single-mode cavity with one port per mirror, `L_i = √k_i a`, `H = Δ a†a`.
pub fn cavity(kappas: &[f64], delta: f64) -> Result<LinearSlh> {
    if let Some(&k) = kappas.iter().find(|k| !(**k >= 0.0)) {
        return Err(Error::NegativeCoupling(k));
    }
    let m = kappas.len();
    let mut lam = CMat::zeros(m, 2);
    for (i, k) in kappas.iter().enumerate() {
        let h = k.sqrt() / 2.0;
        lam[(i, 0)] = c(h, 0.0);
        lam[(i, 1)] = c(0.0, h);
    }
    LinearSlh::new(
        CMat::identity(m, m),
        lam,
        CVec::zeros(m),
        RMat::identity(2, 2) * (delta / 2.0),
        RVec::zeros(2),
    )
}

/// Two-port degenerate OPO: a cavity with an added squeezing Hamiltonian of
/// complex strength `ε`.
pub fn opo(kappa1: f64, kappa2: f64, delta: f64, eps: Complex64) -> Result<LinearSlh> {
    let cav = cavity(&[kappa1, kappa2], delta)?;
    let r = RMat::from_row_slice(2, 2, &[delta - eps.im, eps.re, eps.re, delta + eps.im]) * 0.5;
    LinearSlh::new(
        cav.scattering().clone(),
        cav.coupling().clone(),
        cav.coupling_offset().clone(),
        r,
        RVec::zeros(2),
    )
}

/// `S = [[α, β], [−β, α]]`, `β = √(1 − α²)`.
pub fn beamsplitter(alpha: f64) -> Result<LinearSlh> {
    if !(alpha.abs() <= 1.0) {
        return Err(Error::InvalidTransmittance(alpha));
    }
    let beta = (1.0 - alpha * alpha).sqrt();
    let s = CMat::from_row_slice(2, 2, &[c(alpha, 0.0), c(beta, 0.0), c(-beta, 0.0), c(alpha, 0.0)]);
    LinearSlh::static_scattering(s)
}

pub fn phase(phi: f64) -> LinearSlh {
    LinearSlh::static_scattering(CMat::from_element(1, 1, Complex64::from_polar(1.0, phi)))
        .expect("unit-modulus phase is unitary")
}

/// Coherent displacement `L = α`.
pub fn displacement(alpha: Complex64) -> LinearSlh {
    LinearSlh::new(
        CMat::identity(1, 1),
        CMat::zeros(1, 0),
        CVec::from_element(1, alpha),
        RMat::zeros(0, 0),
        RVec::zeros(0),
    )
    .expect("one-port displacement is well formed")
}

fn rotation(phi: f64) -> RMat {
    let (s, co) = phi.sin_cos();
    RMat::from_row_slice(2, 2, &[co, -s, s, co])
}

/// Ideal squeezer `x → e^η x`, `p → e^{−η} p`, between input and output
/// phase shifters.
pub fn squeezer_static(eta: f64, phi_in: f64, phi_out: f64) -> StaticDevice {
    let sq = RMat::from_diagonal(&RVec::from_vec(vec![eta.exp(), (-eta).exp()]));
    StaticDevice::new(rotation(phi_out) * sq * rotation(phi_in)).expect("2x2 map")
}

/// Linear amplifier `ã₁ = cosh η a₁ + sinh η a₂†`, `ã₂ = sinh η a₁† + cosh η a₂`.
pub fn two_mode_squeezer_static(eta: f64) -> StaticDevice {
    let (ch, sh) = (eta.cosh(), eta.sinh());
    #[rustfmt::skip]
    let d = RMat::from_row_slice(4, 4, &[
        ch, 0.0, sh, 0.0,
        0.0, ch, 0.0, -sh,
        sh, 0.0, ch, 0.0,
        0.0, -sh, 0.0, ch,
    ]);
    StaticDevice::new(d).expect("4x4 map")
}

/// Three-mirror cavity plant with ports labelled `k1`, `k2`, `k3`.
pub fn cavity_plant(k1: f64, k2: f64, k3: f64, delta: f64) -> Result<LinearSlh> {
    cavity(&[k1, k2, k3], delta)?.with_labels(labels(&["k1", "k2", "k3"]), labels(&["k1", "k2", "k3"]))
}

/// Linearized optomechanical benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptomechScenario {
    pub omega: f64,
    pub q: f64,
    pub kn: f64,
    pub k1: f64,
    pub k2: f64,
}

impl OptomechScenario {
    /// Scenario with the `K₁ = −K₂ = K` convention.
    pub fn locked(omega: f64, q: f64, kn: f64, k: f64) -> Self {
        Self {
            omega,
            q,
            kn,
            k1: k,
            k2: -k,
        }
    }

    pub fn benchmark(kn: f64) -> Self {
        Self::locked(100.0, 1e4, kn, 1.0)
    }

    pub fn k_m(&self) -> f64 {
        self.omega / self.q
    }

    pub fn with_couplings(self, k1: f64, k2: f64) -> Self {
        Self { k1, k2, ..self }
    }
}

/// Spring mode with probe (`K₁ x_m`), feedback (`K₂ x_m`) and phonon-bath
/// (`√k_m b`) ports and `H = Ω b†b`.
pub fn optomech_plant(sc: &OptomechScenario) -> Result<LinearSlh> {
    if !(sc.omega > 0.0) {
        return Err(Error::NonPositiveParam("omega"));
    }
    if !(sc.q > 0.0) {
        return Err(Error::NonPositiveParam("q"));
    }
    let h = sc.k_m().sqrt() / 2.0;
    let lam = CMat::from_row_slice(
        3,
        2,
        &[c(sc.k1, 0.0), c(0.0, 0.0), c(sc.k2, 0.0), c(0.0, 0.0), c(h, 0.0), c(0.0, h)],
    );
    let names = labels(&["probe", "feedback", "bath"]);
    LinearSlh::new(
        CMat::identity(3, 3),
        lam,
        CVec::zeros(3),
        RMat::identity(2, 2) * (sc.omega / 2.0),
        RVec::zeros(2),
    )?
    .with_labels(names.clone(), names)
}

/// Laboratory parameters of the two-cavity optomechanical setup (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub power: [f64; 2],
    pub transmittance: [f64; 2],
    pub length: [f64; 2],
    pub mass: f64,
    pub omega_m: f64,
    pub q: f64,
    pub omega_laser: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub k: [f64; 2],
    pub kappa: [f64; 2],
    pub kn: f64,
    pub km: f64,
}

/// Dimensionless couplings from laboratory parameters:
/// `K_i = 4ηr_i/κ_i`, `r_i = √(P_i/ħω)`, `κ_i = t_i c/2l_i`,
/// `η = (ω/l_i)√(ħ/2mΩ)`, `k_n = (1 − e^{−ħΩ/kT})⁻¹`, `k_m = Ω/Q`.
///
/// `k_n` follows the table formula literally; it tends to 1 rather than 0 as
/// `T → 0`.
pub fn physical_params_to_couplings(pp: &PhysicalParams) -> Result<Couplings> {
    let positive = |v: f64, name: &'static str| if v > 0.0 { Ok(()) } else { Err(Error::NonPositiveParam(name)) };
    for i in 0..2 {
        positive(pp.power[i], "power")?;
        positive(pp.transmittance[i], "transmittance")?;
        positive(pp.length[i], "length")?;
        if pp.transmittance[i] > 1.0 {
            return Err(Error::InvalidTransmittance(pp.transmittance[i]));
        }
    }
    positive(pp.mass, "mass")?;
    positive(pp.omega_m, "omega_m")?;
    positive(pp.q, "q")?;
    positive(pp.omega_laser, "omega_laser")?;
    positive(pp.temperature, "temperature")?;

    let mut k = [0.0; 2];
    let mut kappa = [0.0; 2];
    for i in 0..2 {
        let r = (pp.power[i] / (HBAR * pp.omega_laser)).sqrt();
        kappa[i] = pp.transmittance[i] * SPEED_OF_LIGHT / (2.0 * pp.length[i]);
        let eta = (pp.omega_laser / pp.length[i]) * (HBAR / (2.0 * pp.mass * pp.omega_m)).sqrt();
        k[i] = 4.0 * eta * r / kappa[i];
    }
    let x = HBAR * pp.omega_m / (BOLTZMANN * pp.temperature);
    let kn = 1.0 / -(-x).exp_m1();
    Ok(Couplings {
        k,
        kappa,
        kn,
        km: pp.omega_m / pp.q,
    })
}

/// Classical linear filter `dz = A z dt + B dy`, `u = C z + D y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalFilter {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

impl ClassicalFilter {
    /// Memoryless gain `u = D y`.
    pub fn static_gain(d: RMat) -> Self {
        Self {
            a: RMat::zeros(0, 0),
            b: RMat::zeros(0, d.ncols()),
            c: RMat::zeros(d.nrows(), 0),
            d,
        }
    }
}

/// Homodyne measurement controller: reads the x quadrature of each of the
/// `n_meas` measured ports, filters the record, and displaces ancilla vacuum
/// ports with the result. Inputs are `[meas…, anc…]`, outputs `[out…]`, where
/// the number of ancillas is half the filter output dimension.
pub fn measurement_controller(filter: &ClassicalFilter, n_meas: usize) -> Result<StateSpace> {
    let nz = filter.a.nrows();
    let nu = filter.d.nrows();
    let shapes_ok = filter.a.ncols() == nz
        && filter.b.shape() == (nz, n_meas)
        && filter.c.shape() == (nu, nz)
        && filter.d.ncols() == n_meas
        && nu.is_multiple_of(2);
    if !shapes_ok {
        return Err(Error::DimensionMismatch(format!(
            "filter A {:?}, B {:?}, C {:?}, D {:?} for {n_meas} measured ports",
            filter.a.shape(),
            filter.b.shape(),
            filter.c.shape(),
            filter.d.shape()
        )));
    }
    let n_anc = nu / 2;
    let n_in = 2 * (n_meas + n_anc);
    let mut b = RMat::zeros(nz, n_in);
    let mut d = RMat::zeros(nu, n_in);
    for j in 0..n_meas {
        b.column_mut(2 * j).copy_from(&filter.b.column(j));
        d.column_mut(2 * j).copy_from(&filter.d.column(j));
    }
    for k in 0..nu {
        d[(k, 2 * n_meas + k)] = 1.0;
    }
    let ins: Vec<String> = (0..n_meas)
        .map(|j| format!("meas{j}"))
        .chain((0..n_anc).map(|j| format!("anc{j}")))
        .collect();
    let outs: Vec<String> = (0..n_anc).map(|j| format!("out{j}")).collect();
    StateSpace::new(filter.a.clone(), b, filter.c.clone(), d, RMat::zeros(nz, nz))?.with_labels(ins, outs)
}

/// Adiabatically eliminated homodyne controller
/// `dã_x = ξ₁ da_x + da_{k1,x}`, `dã_p = ξ₂ da_x + da_{k1,p}`.
pub fn homodyne_static(xi1: f64, xi2: f64) -> StateSpace {
    let filter = ClassicalFilter::static_gain(RMat::from_column_slice(2, 1, &[xi1, xi2]));
    measurement_controller(&filter, 1).expect("static homodyne shapes")
}

/// Heterodyne front end: beamsplitter `BS(α)` mixing the signal with vacuum,
/// then a quarter-wave phase on the second arm, so that homodyning the x
/// quadrature of both arms measures both signal quadratures.
pub fn heterodyne_frontend(alpha: f64) -> Result<StateSpace> {
    let bs = to_statespace(&beamsplitter(alpha)?)?;
    let ph = crate::slh::concatenate(&LinearSlh::identity(1), &phase(std::f64::consts::FRAC_PI_2));
    let ph = to_statespace(&ph)?;
    let mut ss = connect(&[&bs, &ph], &[Link::new(0, 0, 1, 0), Link::new(0, 1, 1, 1)])?.select_outputs(&[2, 3])?;
    ss.inputs = labels(&["signal", "split"]);
    ss.outputs = labels(&["arm0", "arm1"]);
    Ok(ss)
}

/// Heterodyne controller: front end followed by a two-input homodyne
/// controller. Inputs `[signal, split, anc]`, output `[out]`.
pub fn heterodyne_controller(alpha: f64, filter: &ClassicalFilter) -> Result<StateSpace> {
    let front = heterodyne_frontend(alpha)?;
    let hom = measurement_controller(filter, 2)?;
    let joint = connect(&[&front, &hom], &[Link::new(0, 0, 1, 0), Link::new(0, 1, 1, 1)])?;
    let last = joint.n_outputs() - 1;
    let mut ss = joint.select_outputs(&[last])?;
    ss.inputs = labels(&["signal", "split", "anc0"]);
    Ok(ss)
}

/// Eliminated heterodyne controller with 2×2 gain on the two arm records.
pub fn heterodyne_static(alpha: f64, gain: &RMat) -> Result<StateSpace> {
    heterodyne_controller(alpha, &ClassicalFilter::static_gain(gain.clone()))
}
