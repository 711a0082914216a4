//! Real quadrature-basis ABCD models.
//!
//! `dx = (A x + a) dt + B da`, `dã = (C x + c) dt + D da`, with states and
//! ports both interleaved as `(x₁, p₁, x₂, p₂, …)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, canonical_j, max_abs, spectral_abscissa, CMat, CVec, RMat, RVec};
use crate::slh::LinearSlh;

pub const REALIZABILITY_TOL: f64 = 1e-9;
/// Required margin below zero of the spectral abscissa.
pub const HURWITZ_MARGIN: f64 = 1e-9;
const RESIDUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
    pub drift_offset: RVec,
    pub output_offset: RVec,
    /// Commutator matrix `Θ_ij = [x_i, x_j]/2i`; zero blocks mark classical
    /// (commuting) controller states.
    pub theta: RMat,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols() / 2
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows() / 2
    }

    /// Builds a model with default port labels after checking shapes.
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat, theta: RMat) -> Result<Self> {
        let n = a.nrows();
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols()
            && theta.shape() == (n, n)
            && b.ncols().is_multiple_of(2)
            && c.nrows().is_multiple_of(2);
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}, Theta {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape(),
                theta.shape()
            )));
        }
        let (ni, no) = (b.ncols() / 2, c.nrows() / 2);
        Ok(Self {
            drift_offset: RVec::zeros(n),
            output_offset: RVec::zeros(c.nrows()),
            a,
            b,
            c,
            d,
            theta,
            inputs: (0..ni).map(|i| i.to_string()).collect(),
            outputs: (0..no).map(|i| i.to_string()).collect(),
        })
    }

    pub fn with_labels(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        if inputs.len() != self.n_inputs() || outputs.len() != self.n_outputs() {
            return Err(Error::DimensionMismatch("port label count".into()));
        }
        self.inputs = inputs;
        self.outputs = outputs;
        Ok(self)
    }

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

    /// Keeps only the listed output ports, in the given order.
    pub fn select_outputs(&self, ports: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(2 * ports.len());
        for &p in ports {
            if p >= self.n_outputs() {
                return Err(Error::PortOutOfRange {
                    index: p,
                    ports: self.n_outputs(),
                });
            }
            rows.extend([2 * p, 2 * p + 1]);
        }
        Ok(Self {
            c: self.c.select_rows(&rows),
            d: self.d.select_rows(&rows),
            output_offset: self.output_offset.select_rows(&rows),
            outputs: ports.iter().map(|&p| self.outputs[p].clone()).collect(),
            ..self.clone()
        })
    }

    pub fn spectral_abscissa(&self) -> f64 {
        spectral_abscissa(&self.a)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.spectral_abscissa() < -HURWITZ_MARGIN
    }
}

/// Static input-output map `dã = D da + c dt` left after eliminating all
/// internal dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticDevice {
    pub d: RMat,
    pub offset: RVec,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl StaticDevice {
    pub fn new(d: RMat) -> Result<Self> {
        if !d.nrows().is_multiple_of(2) || !d.ncols().is_multiple_of(2) {
            return Err(Error::DimensionMismatch("static map must act on quadrature pairs".into()));
        }
        let (no, ni) = (d.nrows() / 2, d.ncols() / 2);
        Ok(Self {
            offset: RVec::zeros(d.nrows()),
            d,
            inputs: (0..ni).map(|i| i.to_string()).collect(),
            outputs: (0..no).map(|i| i.to_string()).collect(),
        })
    }

    /// `‖D J Dᵀ − J‖_F`.
    pub fn symplectic_residual(&self) -> f64 {
        let ji = canonical_j(self.d.ncols() / 2);
        let jo = canonical_j(self.d.nrows() / 2);
        (&self.d * ji * self.d.transpose() - jo).norm()
    }

    pub fn to_statespace(&self) -> StateSpace {
        StateSpace {
            a: RMat::zeros(0, 0),
            b: RMat::zeros(0, self.d.ncols()),
            c: RMat::zeros(self.d.nrows(), 0),
            d: self.d.clone(),
            drift_offset: RVec::zeros(0),
            output_offset: self.offset.clone(),
            theta: RMat::zeros(0, 0),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }
}

/// Real representation of one port block: `V · blkdiag(s, s*) · V⁻¹`
/// with `V = 2M†`, `M = ½[[1, i], [1, −i]]`.
fn v_matrix() -> CMat {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    CMat::from_row_slice(2, 2, &[one, one, -i, i])
}

fn m_matrix() -> CMat {
    let i = Complex64::i();
    let h = Complex64::new(0.5, 0.0);
    CMat::from_row_slice(2, 2, &[h, h * i, h, -h * i])
}

fn take_real(z: &CMat) -> Result<RMat> {
    let residue = z.iter().fold(0.0_f64, |m, v| m.max(v.im.abs()));
    if residue > RESIDUE_TOL {
        return Err(Error::ComplexResidue(residue));
    }
    Ok(z.map(|v| v.re))
}

/// Stacks `(S, Λ, λ)` into real quadrature-basis `(S̃, Λ̃, λ̃)`.
pub fn quadrature_stack(s: &CMat, lambda: &CMat, offset: &CVec) -> Result<(RMat, RMat, RVec)> {
    let m = s.nrows();
    let dim = lambda.ncols();
    if s.ncols() != m || lambda.nrows() != m || offset.len() != m {
        return Err(Error::DimensionMismatch("quadrature_stack inputs".into()));
    }
    let v = v_matrix();
    let mm = m_matrix();
    let mut st = CMat::zeros(2 * m, 2 * m);
    for a in 0..m {
        for b in 0..m {
            let z = s[(a, b)];
            let blk = CMat::from_row_slice(2, 2, &[z, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), z.conj()]);
            st.view_mut((2 * a, 2 * b), (2, 2)).copy_from(&(&v * blk * &mm));
        }
    }
    let mut lt = CMat::zeros(2 * m, dim);
    let mut ot = CMat::zeros(2 * m, 1);
    for a in 0..m {
        let mut pair = CMat::zeros(2, dim);
        for col in 0..dim {
            pair[(0, col)] = lambda[(a, col)];
            pair[(1, col)] = lambda[(a, col)].conj();
        }
        lt.view_mut((2 * a, 0), (2, dim)).copy_from(&(&v * pair));
        let o = CMat::from_column_slice(2, 1, &[offset[a], offset[a].conj()]);
        ot.view_mut((2 * a, 0), (2, 1)).copy_from(&(&v * o));
    }
    let ot = take_real(&ot)?;
    Ok((take_real(&st)?, take_real(&lt)?, RVec::from_column_slice(ot.as_slice())))
}

/// Compiles an SLH model into its ABCD form with canonical `Θ = J`.
pub fn to_statespace(g: &LinearSlh) -> Result<StateSpace> {
    let (st, lt, ot) = quadrature_stack(g.scattering(), g.coupling(), g.coupling_offset())?;
    let theta = canonical_j(g.n_modes());
    let jm = canonical_j(g.n_ports());
    let ltj = lt.transpose() * &jm;
    let a = &theta * (g.hamiltonian() + &ltj * &lt * 0.25) * 2.0;
    let b = &theta * &ltj * &st;
    let drift_offset = &theta * (g.hamiltonian_linear() + &ltj * &ot * 0.25) * 2.0;
    Ok(StateSpace {
        a,
        b,
        c: lt,
        d: st,
        drift_offset,
        output_offset: ot,
        theta,
        inputs: g.inputs().to_vec(),
        outputs: g.outputs().to_vec(),
    })
}

/// Frobenius residuals of the three physical-realizability identities:
/// `AΘ + ΘAᵀ + BJBᵀ`, `ΘCᵀ + BJDᵀ`, `DJDᵀ − J`.
pub fn check_realizability(ss: &StateSpace) -> (f64, f64, f64) {
    let ji = canonical_j(ss.b.ncols() / 2);
    let jo = canonical_j(ss.c.nrows() / 2);
    let r1 = (&ss.a * &ss.theta + &ss.theta * ss.a.transpose() + &ss.b * &ji * ss.b.transpose()).norm();
    let r2 = (&ss.theta * ss.c.transpose() + &ss.b * &ji * ss.d.transpose()).norm();
    let r3 = (&ss.d * &ji * ss.d.transpose() - jo).norm();
    (r1, r2, r3)
}

/// Replaces the dynamics by the static limit `D − C A⁻¹ B`.
pub fn adiabatic_eliminate(ss: &StateSpace) -> Result<StaticDevice> {
    let abscissa = ss.spectral_abscissa();
    if ss.n_states() > 0 && abscissa >= -HURWITZ_MARGIN {
        return Err(Error::UnstableSystem(abscissa));
    }
    let (d, offset) = if ss.n_states() == 0 {
        (ss.d.clone(), ss.output_offset.clone())
    } else {
        let lu = ss.a.clone().lu();
        let scale = max_abs(&ss.a).max(1.0);
        let det = lu.determinant();
        if !det.is_finite() || det.abs() < 1e-300 * scale {
            return Err(Error::SingularDrift);
        }
        let ainv_b = lu.solve(&ss.b).ok_or(Error::SingularDrift)?;
        let ainv_a = lu.solve(&ss.drift_offset).ok_or(Error::SingularDrift)?;
        (&ss.d - &ss.c * ainv_b, &ss.output_offset - &ss.c * ainv_a)
    };
    Ok(StaticDevice {
        d,
        offset,
        inputs: ss.inputs.clone(),
        outputs: ss.outputs.clone(),
    })
}

/// Connection from an output port of one subsystem to an input port of another
/// (or the same) subsystem, by subsystem index and port index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub from: (usize, usize),
    pub to: (usize, usize),
}

impl Link {
    pub fn new(from_system: usize, output: usize, to_system: usize, input: usize) -> Self {
        Self {
            from: (from_system, output),
            to: (to_system, input),
        }
    }
}

/// Plant/controller wiring for [`interconnect`]: port pairs
/// `(plant output, controller input)` and `(controller output, plant input)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Wiring {
    pub plant_to_ctrl: Vec<(usize, usize)>,
    pub ctrl_to_plant: Vec<(usize, usize)>,
}

/// Closes the loop between a plant and a controller. The joint state is
/// `[plant; controller]`, exogenous inputs are the unwired inputs in
/// (plant, controller) order, and all outputs are kept.
pub fn interconnect(plant: &StateSpace, ctrl: &StateSpace, wiring: &Wiring) -> Result<StateSpace> {
    let links: Vec<Link> = wiring
        .plant_to_ctrl
        .iter()
        .map(|&(o, i)| Link::new(0, o, 1, i))
        .chain(wiring.ctrl_to_plant.iter().map(|&(o, i)| Link::new(1, o, 0, i)))
        .collect();
    connect(&[plant, ctrl], &links)
}

/// General port-level interconnection of several subsystems.
pub fn connect(systems: &[&StateSpace], links: &[Link]) -> Result<StateSpace> {
    let a = block_diag(&systems.iter().map(|s| &s.a).collect::<Vec<_>>());
    let b = block_diag(&systems.iter().map(|s| &s.b).collect::<Vec<_>>());
    let c = block_diag(&systems.iter().map(|s| &s.c).collect::<Vec<_>>());
    let d = block_diag(&systems.iter().map(|s| &s.d).collect::<Vec<_>>());
    let theta = block_diag(&systems.iter().map(|s| &s.theta).collect::<Vec<_>>());
    let drift: Vec<f64> = systems.iter().flat_map(|s| s.drift_offset.iter().copied()).collect();
    let outoff: Vec<f64> = systems.iter().flat_map(|s| s.output_offset.iter().copied()).collect();

    let mut in_base = Vec::with_capacity(systems.len());
    let mut out_base = Vec::with_capacity(systems.len());
    let (mut ib, mut ob) = (0, 0);
    for s in systems {
        in_base.push(ib);
        out_base.push(ob);
        ib += s.n_inputs();
        ob += s.n_outputs();
    }
    let (n_in, n_out) = (ib, ob);

    let mut pi = RMat::zeros(2 * n_in, 2 * n_out);
    let mut wired = vec![false; n_in];
    for link in links {
        let (fs, fo) = link.from;
        let (ts, ti) = link.to;
        if fs >= systems.len() || ts >= systems.len() {
            return Err(Error::IndexOutOfRange {
                index: fs.max(ts),
                len: systems.len(),
            });
        }
        if fo >= systems[fs].n_outputs() {
            return Err(Error::PortOutOfRange {
                index: fo,
                ports: systems[fs].n_outputs(),
            });
        }
        if ti >= systems[ts].n_inputs() {
            return Err(Error::PortOutOfRange {
                index: ti,
                ports: systems[ts].n_inputs(),
            });
        }
        let (gi, go) = (in_base[ts] + ti, out_base[fs] + fo);
        if wired[gi] {
            return Err(Error::DimensionMismatch(format!("input {ti} of subsystem {ts} wired twice")));
        }
        wired[gi] = true;
        pi[(2 * gi, 2 * go)] = 1.0;
        pi[(2 * gi + 1, 2 * go + 1)] = 1.0;
    }
    let exo: Vec<usize> = (0..n_in).filter(|&i| !wired[i]).collect();
    let mut e = RMat::zeros(2 * n_in, 2 * exo.len());
    for (k, &i) in exo.iter().enumerate() {
        e[(2 * i, 2 * k)] = 1.0;
        e[(2 * i + 1, 2 * k + 1)] = 1.0;
    }

    let loop_m = RMat::identity(2 * n_out, 2 * n_out) - &d * &pi;
    let lu = loop_m.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::AlgebraicLoop);
    }
    let minv = lu.try_inverse().ok_or(Error::AlgebraicLoop)?;
    let bpim = &b * &pi * &minv;
    let outoff = RVec::from_vec(outoff);
    let a_cl = &a + &bpim * &c;
    let b_cl = (&b + &bpim * &d) * &e;
    let c_cl = &minv * &c;
    let d_cl = &minv * &d * &e;
    let drift_cl = RVec::from_vec(drift) + &bpim * &outoff;
    let out_cl = &minv * &outoff;

    let all_in: Vec<String> = systems.iter().flat_map(|s| s.inputs.iter().cloned()).collect();
    let all_out: Vec<String> = systems.iter().flat_map(|s| s.outputs.iter().cloned()).collect();
    Ok(StateSpace {
        a: a_cl,
        b: b_cl,
        c: c_cl,
        d: d_cl,
        drift_offset: drift_cl,
        output_offset: out_cl,
        theta,
        inputs: exo.iter().map(|&i| all_in[i].clone()).collect(),
        outputs: all_out,
    })
}

/// Fast-controller diagnostic `min |Re eig(A_ctrl)| / max |Re eig(A_plant)|`.
/// Large values mean the controller is well inside the adiabatic regime.
pub fn timescale_ratio(ctrl: &RMat, plant: &RMat) -> f64 {
    if ctrl.nrows() == 0 {
        return f64::INFINITY;
    }
    let re_abs = |m: &RMat| -> Vec<f64> { m.complex_eigenvalues().iter().map(|z| z.re.abs()).collect() };
    let c = re_abs(ctrl).into_iter().fold(f64::INFINITY, f64::min);
    let p = re_abs(plant).into_iter().fold(0.0, f64::max);
    if p == 0.0 {
        f64::INFINITY
    } else {
        c / p
    }
}
