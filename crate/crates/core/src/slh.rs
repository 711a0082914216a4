//! Linear SLH triples and the concatenation / series / feedback products.
//!
//! A linear system is `(S, L, H)` with `L = Λ x + λ` and
//! `H = ½ xᵀ R x + rᵀ x`, where `x` stacks the quadratures
//! `(x₁, p₁, x₂, p₂, …)` with `x = a + a†`, `p = (a − a†)/i`.
//! Only `(R, r)` is stored for the Hamiltonian; constant energy offsets
//! produced by the products are dropped.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, block_diag_c, im, symmetrize, CMat, CVec, RMat, RVec};

pub const UNITARY_TOL: f64 = 1e-10;
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSlh {
    scattering: CMat,
    coupling: CMat,
    coupling_offset: CVec,
    hamiltonian: RMat,
    hamiltonian_linear: RVec,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl LinearSlh {
    /// Validates dimensions and unitarity of `S`; `R` is symmetrized.
    pub fn new(
        scattering: CMat,
        coupling: CMat,
        coupling_offset: CVec,
        hamiltonian: RMat,
        hamiltonian_linear: RVec,
    ) -> Result<Self> {
        let m = scattering.nrows();
        if scattering.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "S must be square, got {}x{}",
                m,
                scattering.ncols()
            )));
        }
        let dim = hamiltonian.nrows();
        if hamiltonian.ncols() != dim || !dim.is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "R must be square with even size, got {}x{}",
                dim,
                hamiltonian.ncols()
            )));
        }
        if coupling.nrows() != m || coupling.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "Lambda must be {}x{}, got {}x{}",
                m,
                dim,
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        if coupling_offset.len() != m || hamiltonian_linear.len() != dim {
            return Err(Error::DimensionMismatch(
                "lambda must have one entry per port and r one per quadrature".into(),
            ));
        }
        let defect = (&scattering * scattering.adjoint() - CMat::identity(m, m)).norm();
        if !(defect <= UNITARY_TOL) {
            return Err(Error::NonUnitaryScattering(defect));
        }
        Ok(Self {
            scattering,
            coupling,
            coupling_offset,
            hamiltonian: symmetrize(&hamiltonian),
            hamiltonian_linear,
            inputs: default_labels(m),
            outputs: default_labels(m),
        })
    }

    /// Zero-mode pass-through on `ports` channels.
    pub fn identity(ports: usize) -> Self {
        Self::static_scattering(CMat::identity(ports, ports)).expect("identity is unitary")
    }

    /// Zero-mode component with the given scattering matrix.
    pub fn static_scattering(s: CMat) -> Result<Self> {
        let m = s.nrows();
        Self::new(s, CMat::zeros(m, 0), CVec::zeros(m), RMat::zeros(0, 0), RVec::zeros(0))
    }

    pub fn n_modes(&self) -> usize {
        self.hamiltonian.nrows() / 2
    }

    pub fn n_ports(&self) -> usize {
        self.scattering.nrows()
    }

    pub fn scattering(&self) -> &CMat {
        &self.scattering
    }

    pub fn coupling(&self) -> &CMat {
        &self.coupling
    }

    pub fn coupling_offset(&self) -> &CVec {
        &self.coupling_offset
    }

    pub fn hamiltonian(&self) -> &RMat {
        &self.hamiltonian
    }

    pub fn hamiltonian_linear(&self) -> &RVec {
        &self.hamiltonian_linear
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    /// Replaces the port labels. Input and output lists are tracked
    /// separately because feedback removes one of each.
    pub fn with_labels(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        if inputs.len() != self.n_ports() || outputs.len() != self.n_ports() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} port labels",
                self.n_ports()
            )));
        }
        self.inputs = inputs;
        self.outputs = outputs;
        Ok(self)
    }

    /// Prefixes every port label with `prefix.`.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for l in self.inputs.iter_mut().chain(self.outputs.iter_mut()) {
            *l = format!("{prefix}.{l}");
        }
        self
    }

    pub fn input_index(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|l| l == label)
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.outputs.iter().position(|l| l == label)
    }

    /// Coupling matrix embedded into a larger joint mode space starting at
    /// quadrature column `offset`.
    fn embedded_coupling(&self, total_dim: usize, offset: usize) -> CMat {
        let mut out = CMat::zeros(self.n_ports(), total_dim);
        out.view_mut((0, offset), (self.n_ports(), self.coupling.ncols()))
            .copy_from(&self.coupling);
        out
    }

    /// Largest entrywise deviation over all five fields.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        if self.n_ports() != other.n_ports() || self.n_modes() != other.n_modes() {
            return f64::INFINITY;
        }
        let c = |a: &CMat, b: &CMat| (a - b).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let r = |a: &RMat, b: &RMat| (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let cv = |a: &CVec, b: &CVec| (a - b).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let rv = |a: &RVec, b: &RVec| (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        c(&self.scattering, &other.scattering)
            .max(c(&self.coupling, &other.coupling))
            .max(cv(&self.coupling_offset, &other.coupling_offset))
            .max(r(&self.hamiltonian, &other.hamiltonian))
            .max(rv(&self.hamiltonian_linear, &other.hamiltonian_linear))
    }
}

/// Quadratic and linear parts of `Im(L_leftᴴ W L_right)` for linear
/// couplings `L = Λ x + λ`. Returns `(ΔR, Δr)` with the convention
/// `ΔH = ½ xᵀ ΔR x + Δrᵀ x`; the c-number part is dropped.
fn im_bilinear(
    lam_left: &CMat,
    off_left: &CVec,
    weight: &CMat,
    lam_right: &CMat,
    off_right: &CVec,
) -> (RMat, RVec) {
    let wl = weight * lam_right;
    let p = lam_left.adjoint() * &wl;
    let ip = im(&p);
    let quad = &ip + ip.transpose();
    let u = off_left.adjoint() * &wl;
    let v = lam_left.adjoint() * (weight * off_right);
    let lin = RVec::from_iterator(u.ncols(), u.iter().map(|z| z.im)) + v.map(|z| z.im);
    (quad, lin)
}

/// `G1 ⊞ G2`: block-diagonal scattering, stacked couplings, summed
/// Hamiltonians. The joint state is `[x₁; x₂]`.
pub fn concatenate(g1: &LinearSlh, g2: &LinearSlh) -> LinearSlh {
    let dim = g1.hamiltonian.nrows() + g2.hamiltonian.nrows();
    let (m1, m2) = (g1.n_ports(), g2.n_ports());
    let mut coupling = CMat::zeros(m1 + m2, dim);
    coupling
        .view_mut((0, 0), (m1, dim))
        .copy_from(&g1.embedded_coupling(dim, 0));
    coupling
        .view_mut((m1, 0), (m2, dim))
        .copy_from(&g2.embedded_coupling(dim, g1.hamiltonian.nrows()));
    let mut offset = CVec::zeros(m1 + m2);
    offset.rows_mut(0, m1).copy_from(&g1.coupling_offset);
    offset.rows_mut(m1, m2).copy_from(&g2.coupling_offset);
    let mut lin = RVec::zeros(dim);
    lin.rows_mut(0, g1.hamiltonian_linear.len())
        .copy_from(&g1.hamiltonian_linear);
    lin.rows_mut(g1.hamiltonian_linear.len(), g2.hamiltonian_linear.len())
        .copy_from(&g2.hamiltonian_linear);
    LinearSlh {
        scattering: block_diag_c(&[&g1.scattering, &g2.scattering]),
        coupling,
        coupling_offset: offset,
        hamiltonian: block_diag(&[&g1.hamiltonian, &g2.hamiltonian]),
        hamiltonian_linear: lin,
        inputs: g1.inputs.iter().chain(&g2.inputs).cloned().collect(),
        outputs: g1.outputs.iter().chain(&g2.outputs).cloned().collect(),
    }
}

/// `outer ◁ inner`: outputs of `inner` drive the inputs of `outer`.
/// Joint state is `[x_outer; x_inner]`, the same ordering as
/// `concatenate(outer, inner)` followed by feedback across the seam.
pub fn series(outer: &LinearSlh, inner: &LinearSlh) -> Result<LinearSlh> {
    if outer.n_ports() != inner.n_ports() {
        return Err(Error::DimensionMismatch(format!(
            "series product needs equal port counts ({} vs {})",
            outer.n_ports(),
            inner.n_ports()
        )));
    }
    let d_out = outer.hamiltonian.nrows();
    let dim = d_out + inner.hamiltonian.nrows();
    let lam_outer = outer.embedded_coupling(dim, 0);
    let lam_inner = inner.embedded_coupling(dim, d_out);
    let s2 = &outer.scattering;
    let coupling = &lam_outer + s2 * &lam_inner;
    let offset = &outer.coupling_offset + s2 * &inner.coupling_offset;
    let (dr, dlin) = im_bilinear(
        &lam_outer,
        &outer.coupling_offset,
        s2,
        &lam_inner,
        &inner.coupling_offset,
    );
    let mut lin = RVec::zeros(dim);
    lin.rows_mut(0, d_out).copy_from(&outer.hamiltonian_linear);
    lin.rows_mut(d_out, dim - d_out)
        .copy_from(&inner.hamiltonian_linear);
    Ok(LinearSlh {
        scattering: s2 * &inner.scattering,
        coupling,
        coupling_offset: offset,
        hamiltonian: symmetrize(&(block_diag(&[&outer.hamiltonian, &inner.hamiltonian]) + dr)),
        hamiltonian_linear: lin + dlin,
        inputs: inner.inputs.clone(),
        outputs: outer.outputs.clone(),
    })
}

/// `[G]_{output → input}`: routes output channel `output` back into input
/// channel `input`, eliminating both.
pub fn feedback(g: &LinearSlh, output: usize, input: usize) -> Result<LinearSlh> {
    let m = g.n_ports();
    for idx in [output, input] {
        if idx >= m {
            return Err(Error::PortOutOfRange { index: idx, ports: m });
        }
    }
    let s = &g.scattering;
    let pivot = Complex64::new(1.0, 0.0) - s[(output, input)];
    if pivot.norm() < PIVOT_TOL {
        return Err(Error::SingularFeedback { output, input });
    }
    let inv = pivot.inv();
    let rows: Vec<usize> = (0..m).filter(|&i| i != output).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| j != input).collect();

    let mut scattering = CMat::zeros(m - 1, m - 1);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            scattering[(a, b)] = s[(i, j)] + s[(i, input)] * s[(output, j)] * inv;
        }
    }
    let dim = g.coupling.ncols();
    let mut coupling = CMat::zeros(m - 1, dim);
    let mut offset = CVec::zeros(m - 1);
    for (a, &i) in rows.iter().enumerate() {
        let f = s[(i, input)] * inv;
        for c in 0..dim {
            coupling[(a, c)] = g.coupling[(i, c)] + f * g.coupling[(output, c)];
        }
        offset[a] = g.coupling_offset[i] + f * g.coupling_offset[output];
    }

    let weight = CMat::from_iterator(m, 1, (0..m).map(|i| s[(i, input)] * inv));
    let lam_k = g.coupling.rows(output, 1).into_owned();
    let off_k = CVec::from_element(1, g.coupling_offset[output]);
    let (dr, dlin) = im_bilinear(&g.coupling, &g.coupling_offset, &weight, &lam_k, &off_k);

    Ok(LinearSlh {
        scattering,
        coupling,
        coupling_offset: offset,
        hamiltonian: symmetrize(&(&g.hamiltonian + dr)),
        hamiltonian_linear: &g.hamiltonian_linear + dlin,
        inputs: cols.iter().map(|&j| g.inputs[j].clone()).collect(),
        outputs: rows.iter().map(|&i| g.outputs[i].clone()).collect(),
    })
}

/// Reorders ports: new port `k` is old port `permutation[k]` (same
/// permutation on inputs and outputs).
pub fn permute_ports(g: &LinearSlh, permutation: &[usize]) -> Result<LinearSlh> {
    let m = g.n_ports();
    let mut seen = vec![false; m];
    if permutation.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "permutation of length {} for {} ports",
            permutation.len(),
            m
        )));
    }
    for &p in permutation {
        if p >= m || seen[p] {
            return Err(Error::DimensionMismatch(format!(
                "{permutation:?} is not a permutation of 0..{m}"
            )));
        }
        seen[p] = true;
    }
    let scattering = CMat::from_fn(m, m, |i, j| g.scattering[(permutation[i], permutation[j])]);
    let coupling = CMat::from_fn(m, g.coupling.ncols(), |i, c| g.coupling[(permutation[i], c)]);
    let offset = CVec::from_fn(m, |i, _| g.coupling_offset[permutation[i]]);
    Ok(LinearSlh {
        scattering,
        coupling,
        coupling_offset: offset,
        hamiltonian: g.hamiltonian.clone(),
        hamiltonian_linear: g.hamiltonian_linear.clone(),
        inputs: permutation.iter().map(|&p| g.inputs[p].clone()).collect(),
        outputs: permutation.iter().map(|&p| g.outputs[p].clone()).collect(),
    })
}

/// Circuit expression over SLH leaves.
#[derive(Debug, Clone, PartialEq)]
pub enum CircuitExpr {
    Leaf(LinearSlh),
    Concat(Box<CircuitExpr>, Box<CircuitExpr>),
    Series {
        outer: Box<CircuitExpr>,
        inner: Box<CircuitExpr>,
    },
    Feedback {
        child: Box<CircuitExpr>,
        output: usize,
        input: usize,
    },
    Relabel {
        child: Box<CircuitExpr>,
        permutation: Vec<usize>,
    },
}

impl CircuitExpr {
    pub fn leaf(g: LinearSlh) -> Self {
        Self::Leaf(g)
    }

    pub fn concat(self, other: Self) -> Self {
        Self::Concat(Box::new(self), Box::new(other))
    }

    /// `self ◁ inner`.
    pub fn after(self, inner: Self) -> Self {
        Self::Series {
            outer: Box::new(self),
            inner: Box::new(inner),
        }
    }

    pub fn feedback(self, output: usize, input: usize) -> Self {
        Self::Feedback {
            child: Box::new(self),
            output,
            input,
        }
    }

    pub fn relabel(self, permutation: Vec<usize>) -> Self {
        Self::Relabel {
            child: Box::new(self),
            permutation,
        }
    }

    pub fn evaluate(&self) -> Result<LinearSlh> {
        match self {
            Self::Leaf(g) => Ok(g.clone()),
            Self::Concat(a, b) => Ok(concatenate(&a.evaluate()?, &b.evaluate()?)),
            Self::Series { outer, inner } => series(&outer.evaluate()?, &inner.evaluate()?),
            Self::Feedback {
                child,
                output,
                input,
            } => feedback(&child.evaluate()?, *output, *input),
            Self::Relabel { child, permutation } => permute_ports(&child.evaluate()?, permutation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn phase(phi: f64) -> LinearSlh {
        LinearSlh::static_scattering(CMat::from_element(1, 1, Complex64::from_polar(1.0, phi)))
            .unwrap()
    }

    fn one_port_cavity(k: f64, delta: f64) -> LinearSlh {
        let h = k.sqrt() / 2.0;
        LinearSlh::new(
            CMat::identity(1, 1),
            CMat::from_row_slice(1, 2, &[c(h, 0.0), c(0.0, h)]),
            CVec::zeros(1),
            RMat::identity(2, 2) * (delta / 2.0),
            RVec::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn one_port_cavity_is_valid() {
        let g = one_port_cavity(0.03, 0.0);
        assert_eq!(g.n_modes(), 1);
        assert_eq!(g.n_ports(), 1);
    }

    #[test]
    fn non_unitary_scattering_is_rejected() {
        let s = CMat::from_element(1, 1, c(1.0 / 1.1_f64.sqrt(), 0.0));
        match LinearSlh::static_scattering(s) {
            Err(Error::NonUnitaryScattering(d)) => assert_relative_eq!(d, 0.1 / 1.1, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hamiltonian_is_symmetrized() {
        let r = RMat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let g = LinearSlh::new(CMat::identity(1, 1), CMat::zeros(1, 2), CVec::zeros(1), r, RVec::zeros(2)).unwrap();
        assert_eq!(g.hamiltonian()[(0, 1)], 1.0);
        assert_eq!(g.hamiltonian()[(1, 0)], 1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = LinearSlh::new(CMat::identity(2, 2), CMat::zeros(1, 2), CVec::zeros(2), RMat::zeros(2, 2), RVec::zeros(2));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn concatenating_identities() {
        let g = concatenate(&LinearSlh::identity(1), &LinearSlh::identity(1));
        assert_eq!(g.n_ports(), 2);
        assert_eq!(g.n_modes(), 0);
        assert_eq!(g.scattering(), &CMat::identity(2, 2));
    }

    #[test]
    fn phases_compose_in_series() {
        let g = series(&phase(0.3), &phase(0.4)).unwrap();
        assert!(g.max_deviation(&phase(0.7)) < 1e-15);
    }

    #[test]
    fn displacements_cancel_in_series() {
        let d = |a: f64| {
            LinearSlh::new(CMat::identity(1, 1), CMat::zeros(1, 0), CVec::from_element(1, c(a, 0.0)), RMat::zeros(0, 0), RVec::zeros(0)).unwrap()
        };
        let g = series(&d(-1.5), &d(1.5)).unwrap();
        assert!(g.max_deviation(&LinearSlh::identity(1)) < 1e-15);
    }

    #[test]
    fn series_rejects_port_mismatch() {
        assert!(matches!(
            series(&LinearSlh::identity(2), &LinearSlh::identity(1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn feedback_around_identity_leaves_one_port() {
        let g = feedback(&LinearSlh::identity(2), 0, 1).unwrap();
        assert!(g.max_deviation(&LinearSlh::identity(1)) < 1e-15);
        assert_eq!(g.inputs(), &["0".to_string()]);
        assert_eq!(g.outputs(), &["1".to_string()]);
    }

    #[test]
    fn direct_loop_is_singular() {
        assert_eq!(
            feedback(&LinearSlh::identity(2), 1, 1),
            Err(Error::SingularFeedback { output: 1, input: 1 })
        );
        assert!(matches!(feedback(&LinearSlh::identity(2), 2, 0), Err(Error::PortOutOfRange { .. })));
    }

    #[test]
    fn concat_then_feedback_reproduces_series() {
        let g1 = one_port_cavity(0.3, 0.2);
        let g2 = series(&phase(0.9), &one_port_cavity(0.7, -0.4)).unwrap();
        let via_series = series(&g2, &g1).unwrap();
        let via_feedback = feedback(&concatenate(&g2, &g1), 1, 0).unwrap();
        assert!(via_series.max_deviation(&via_feedback) < 1e-14);
    }

    #[test]
    fn permutation_round_trip() {
        let g = concatenate(&one_port_cavity(0.1, 0.0), &phase(0.5));
        let p = permute_ports(&g, &[1, 0]).unwrap();
        assert_eq!(p.scattering()[(0, 0)], g.scattering()[(1, 1)]);
        let back = permute_ports(&p, &[1, 0]).unwrap();
        assert_eq!(back, g);
        assert!(permute_ports(&g, &[0, 0]).is_err());
    }

    #[test]
    fn expression_tree_evaluates() {
        let e = CircuitExpr::leaf(phase(0.1))
            .after(CircuitExpr::leaf(phase(0.2)))
            .concat(CircuitExpr::leaf(LinearSlh::identity(1)))
            .feedback(0, 1);
        let g = e.evaluate().unwrap();
        assert_eq!(g.n_ports(), 1);
        assert_relative_eq!(g.scattering()[(0, 0)].arg(), 0.3, epsilon = 1e-14);
    }
}
