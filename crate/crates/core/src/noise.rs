//! Input-field statistics: per-port vacuum/thermal specifications and the
//! symmetrized Itô covariance `F`, `½⟨da_i da_j + da_j da_i⟩ = F_ij dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_j, min_eig_hermitian, RMat};

pub const QUANTUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PortNoise {
    Vacuum,
    /// Thermal input with `dA† dA = k_n dt`.
    Thermal { kn: f64 },
}

impl PortNoise {
    /// Variance of each quadrature, `1 + 2 k_n`.
    pub fn quadrature_variance(&self) -> f64 {
        match *self {
            Self::Vacuum => 1.0,
            Self::Thermal { kn } => 1.0 + 2.0 * kn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec(pub Vec<PortNoise>);

impl NoiseSpec {
    pub fn vacuum(ports: usize) -> Self {
        Self(vec![PortNoise::Vacuum; ports])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoMatrix {
    pub f: RMat,
}

impl ItoMatrix {
    pub fn n_ports(&self) -> usize {
        self.f.nrows() / 2
    }
}

/// Block-diagonal covariance: `I₂` per vacuum port, `(1 + 2k_n) I₂` per
/// thermal port.
pub fn build_f(spec: &NoiseSpec) -> Result<ItoMatrix> {
    let m = spec.len();
    let mut f = RMat::zeros(2 * m, 2 * m);
    for (i, port) in spec.0.iter().enumerate() {
        if let PortNoise::Thermal { kn } = port {
            if !(*kn >= 0.0) {
                return Err(Error::NegativeNoise(*kn));
            }
        }
        let v = port.quadrature_variance();
        f[(2 * i, 2 * i)] = v;
        f[(2 * i + 1, 2 * i + 1)] = v;
    }
    Ok(ItoMatrix { f })
}

/// True when `F` is symmetric and `F + iJ` is positive semidefinite.
pub fn validate_quantum(f: &RMat) -> bool {
    let n = f.nrows();
    if f.ncols() != n || !n.is_multiple_of(2) {
        return false;
    }
    if (f - f.transpose()).norm() > QUANTUM_TOL * f.norm().max(1.0) {
        return false;
    }
    min_eig_hermitian(f, &canonical_j(n / 2)) >= -QUANTUM_TOL
}
