//! Closed-form steady-state costs for the three-mirror cavity benchmark.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavityOracleKind {
    NoControl,
    Trivial,
    Heterodyne,
    Squeezer,
    TwoMode,
}

/// Mirror couplings, bath strength and controller settings. `eta` sets the
/// gain (`ξ = sinh η` for the heterodyne controller), `phi` and `delta` only
/// enter the squeezer formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityOracleParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub kn: f64,
    pub eta: f64,
    pub phi: f64,
    pub delta: f64,
}

impl CavityOracleParams {
    pub fn benchmark(kn: f64) -> Self {
        Self {
            k1: 0.01,
            k2: 0.01,
            k3: 0.01,
            kn,
            eta: 0.0,
            phi: 0.0,
            delta: 0.1,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }
}

fn nonzero(den: f64, what: &str) -> Result<f64> {
    if den == 0.0 || !den.is_finite() {
        Err(Error::InvalidKindParams(format!("{what} denominator vanishes")))
    } else {
        Ok(den)
    }
}

pub fn oracle_cavity_cost(kind: CavityOracleKind, p: &CavityOracleParams) -> Result<f64> {
    let CavityOracleParams {
        k1,
        k2,
        k3,
        kn,
        eta,
        phi,
        delta,
    } = *p;
    if [k1, k2, k3].iter().any(|k| !(*k >= 0.0)) {
        return Err(Error::InvalidKindParams("couplings must be nonnegative".into()));
    }
    if !(kn >= 0.0) {
        return Err(Error::InvalidKindParams("k_n must be nonnegative".into()));
    }
    if !eta.is_finite() || !phi.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidKindParams("non-finite controller parameter".into()));
    }
    let sum = k1 + k2 + k3;
    let cross = 2.0 * (k1 * k2).sqrt();
    let (sh, ch) = (eta.sinh(), eta.cosh());
    match kind {
        CavityOracleKind::NoControl => Ok(k3 * kn / nonzero(sum, "no-control")?),
        CavityOracleKind::Trivial => Ok(k3 * kn / nonzero(sum + cross, "trivial")?),
        CavityOracleKind::Heterodyne => Ok((k2 * sh * sh + k3 * kn) / nonzero(sum + cross * sh, "heterodyne")?),
        CavityOracleKind::TwoMode => Ok((k2 * sh * sh + k3 * kn) / nonzero(sum + cross * ch, "two-mode")?),
        CavityOracleKind::Squeezer => {
            // implemented exactly as printed, including the 2 k_n term
            let g = Complex64::new(sum, 0.0) + Complex64::from_polar(cross * ch, phi);
            let gd = g + Complex64::new(0.0, 2.0 * delta);
            if gd.norm() == 0.0 {
                return Err(Error::InvalidKindParams("squeezer: G + 2iΔ vanishes".into()));
            }
            let num = Complex64::new(k2 * sh * sh + 2.0 * kn, 0.0)
                - Complex64::from_polar(2.0 * k2 * (k1 * k2).sqrt() * ch * sh * sh, phi) / gd;
            let den = g - 4.0 * k1 * k2 * sh * sh / gd;
            Ok(num.re / nonzero(den.re, "squeezer")?)
        }
    }
}

/// Noise strength below which any squeezing in the two-mode controller
/// raises the cavity occupation.
pub fn oracle_threshold(k1: f64, k2: f64, k3: f64) -> Result<f64> {
    let den = (k1 * k2).sqrt() * k3;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DivisionByZero("threshold"));
    }
    Ok(k1 * (k1 + k2 + k3 + 2.0 * (k1 * k2).sqrt()) / den)
}

/// Steady-state temperature of a spring with bath coupling `k_m` cooled by a
/// zero-temperature reservoir at rate `κ`: `T = k_m T_h/(κ + k_m)`.
pub fn oracle_refrigerator(k_m: f64, kappa: f64, t_h: f64) -> Result<f64> {
    let den = kappa + k_m;
    if !(den > 0.0) {
        return Err(Error::DivisionByZero("refrigerator"));
    }
    Ok(k_m * t_h / den)
}
