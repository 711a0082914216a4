//! Controller templates: parameter layout, bounds and instantiation into a
//! closed loop for a given plant scenario.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{ClosedLoop, CostSpec};
use crate::components::{
    cavity, heterodyne_frontend, heterodyne_static, homodyne_static, opo, phase, squeezer_static,
    two_mode_squeezer_static,
};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};
use crate::lqg::{kalman_lqg_controller, ClassicalPlantForm};
use crate::noise::build_f;
use crate::scenario::PlantScenario;
use crate::slh::{concatenate, series, LinearSlh};
use crate::statespace::{connect, to_statespace, Link, StateSpace};

/// Actuation weight of the Riccati-synthesized controllers.
pub const DEFAULT_R_W: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalForm {
    /// Static gains on the cavity plant, Kalman synthesis on the optomechanical one.
    #[default]
    Auto,
    /// Adiabatically eliminated controller with free gains.
    Static,
    /// Kalman filter plus LQR feedback from the Riccati equations.
    Kalman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerTemplate {
    TrivialPhase,
    Cavity,
    Opo,
    StaticSqueezer,
    StaticTwoMode,
    ClassicalHomodyne {
        #[serde(default)]
        form: ClassicalForm,
    },
    ClassicalHeterodyne {
        #[serde(default)]
        form: ClassicalForm,
    },
    GeneralCoherent {
        n_c: usize,
    },
}

/// How the optomechanical probe/feedback couplings enter the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Scenario values are used as given.
    Fixed,
    /// One free parameter `K` with `K₁ = −K₂ = K`.
    #[default]
    Locked,
    /// Independent `K₁`, `K₂` within gain bounds.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Optimizer coordinate is `ln θ`.
    Log,
    /// Optimizer coordinate is `θ / scale`.
    Linear { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub transform: Transform,
}

impl ParamSpec {
    fn log(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
            transform: Transform::Log,
        }
    }

    fn linear(name: &str, lo: f64, hi: f64, scale: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
            transform: Transform::Linear { scale },
        }
    }

    pub fn to_internal(&self, v: f64) -> f64 {
        match self.transform {
            Transform::Log => v.ln(),
            Transform::Linear { scale } => v / scale,
        }
    }

    pub fn from_internal(&self, y: f64) -> f64 {
        match self.transform {
            Transform::Log => y.exp(),
            Transform::Linear { scale } => y * scale,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// A template together with the coupling convention for plants that have
/// tunable probe/feedback couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub controller: ControllerTemplate,
    #[serde(default)]
    pub coupling: CouplingMode,
}

/// Instantiated controller and the closed loop it forms with the plant.
#[derive(Debug, Clone)]
pub struct Instance {
    pub plant: StateSpace,
    pub controller: StateSpace,
    pub closed: ClosedLoop,
    pub couplings: Option<(f64, f64)>,
}

const K_LO: f64 = 1e-4;
const K_HI: f64 = 1e4;
const RELAXED_K_MAX: f64 = 1e3;

impl Template {
    pub fn new(controller: ControllerTemplate) -> Self {
        Self {
            controller,
            coupling: CouplingMode::default(),
        }
    }

    pub fn with_coupling(self, coupling: CouplingMode) -> Self {
        Self { coupling, ..self }
    }

    fn classical_form(form: ClassicalForm, sc: &PlantScenario) -> ClassicalForm {
        match form {
            ClassicalForm::Auto if sc.is_optomech() => ClassicalForm::Kalman,
            ClassicalForm::Auto => ClassicalForm::Static,
            f => f,
        }
    }

    fn coupling_params(&self, sc: &PlantScenario) -> Vec<ParamSpec> {
        if !sc.is_optomech() {
            return Vec::new();
        }
        match self.coupling {
            CouplingMode::Fixed => Vec::new(),
            CouplingMode::Locked => vec![ParamSpec::log("K", K_LO, K_HI)],
            CouplingMode::Relaxed => vec![
                ParamSpec::linear("K1", -RELAXED_K_MAX, RELAXED_K_MAX, 1.0),
                ParamSpec::linear("K2", -RELAXED_K_MAX, RELAXED_K_MAX, 1.0),
            ],
        }
    }

    /// Parameter layout: controller parameters followed by couplings.
    pub fn params(&self, sc: &PlantScenario) -> Result<Vec<ParamSpec>> {
        let fs = sc.freq_scale();
        let angle = |n: &str| ParamSpec::linear(n, -2.0 * PI, 2.0 * PI, 1.0);
        let mut p = match &self.controller {
            ControllerTemplate::TrivialPhase => vec![ParamSpec::linear("phi", -PI, PI, 1.0)],
            ControllerTemplate::Cavity => vec![
                ParamSpec::log("kappa1", 1e-6 * fs, 1e3 * fs),
                ParamSpec::log("kappa2", 1e-8 * fs, 1e3 * fs),
                ParamSpec::linear("delta", -10.0 * fs, 10.0 * fs, fs),
            ],
            ControllerTemplate::Opo => vec![
                ParamSpec::log("kappa1", 1e-6 * fs, 1e3 * fs),
                ParamSpec::log("kappa2", 1e-8 * fs, 1e3 * fs),
                ParamSpec::linear("delta", -100.0 * fs, 100.0 * fs, fs),
                ParamSpec::linear("eps_re", -100.0 * fs, 100.0 * fs, fs),
                ParamSpec::linear("eps_im", -100.0 * fs, 100.0 * fs, fs),
                angle("phi1"),
                angle("phi2"),
            ],
            ControllerTemplate::StaticSqueezer => {
                vec![ParamSpec::linear("eta", 0.0, 5.0, 1.0), angle("phi_in"), angle("phi_out")]
            }
            ControllerTemplate::StaticTwoMode => vec![ParamSpec::linear("eta", 0.0, 5.0, 1.0)],
            ControllerTemplate::ClassicalHomodyne { form } => match Self::classical_form(*form, sc) {
                ClassicalForm::Kalman => Vec::new(),
                _ => vec![
                    ParamSpec::linear("xi1", -1e3, 1e3, 1.0),
                    ParamSpec::linear("xi2", -1e3, 1e3, 1.0),
                ],
            },
            ControllerTemplate::ClassicalHeterodyne { form } => {
                let mut v = vec![ParamSpec::linear("alpha", 0.0, 1.0, 1.0)];
                if Self::classical_form(*form, sc) != ClassicalForm::Kalman {
                    for n in ["g11", "g12", "g21", "g22"] {
                        v.push(ParamSpec::linear(n, -1e3, 1e3, 1.0));
                    }
                }
                v
            }
            ControllerTemplate::GeneralCoherent { n_c } => {
                if *n_c == 0 {
                    return Err(Error::InvalidTemplate("general_coherent needs n_c >= 1".into()));
                }
                let d = 2 * n_c;
                let ls = fs.sqrt();
                let mut v = vec![angle("psi")];
                for port in 0..2 {
                    for q in 0..d {
                        v.push(ParamSpec::linear(&format!("lam{port}_{q}_re"), -100.0 * ls, 100.0 * ls, ls));
                        v.push(ParamSpec::linear(&format!("lam{port}_{q}_im"), -100.0 * ls, 100.0 * ls, ls));
                    }
                }
                for i in 0..d {
                    for j in i..d {
                        v.push(ParamSpec::linear(&format!("r{i}{j}"), -100.0 * fs, 100.0 * fs, fs));
                    }
                }
                v
            }
        };
        p.extend(self.coupling_params(sc));
        Ok(p)
    }

    /// Default starting point (physical values).
    pub fn initial(&self, sc: &PlantScenario) -> Result<Vec<f64>> {
        let fs = sc.freq_scale();
        let delta0 = if sc.is_optomech() { fs } else { 0.0 };
        let mut v = match &self.controller {
            ControllerTemplate::TrivialPhase => vec![0.0],
            ControllerTemplate::Cavity => vec![0.1 * fs, 1e-6 * fs, delta0],
            ControllerTemplate::Opo => vec![0.1 * fs, 1e-6 * fs, delta0, 0.0, 0.0, 0.0, 0.0],
            ControllerTemplate::StaticSqueezer => vec![0.0, 0.0, 0.0],
            ControllerTemplate::StaticTwoMode => vec![0.0],
            ControllerTemplate::ClassicalHomodyne { .. } | ControllerTemplate::ClassicalHeterodyne { .. } => {
                // zero gains, full transmission
                self.params(sc)?
                    .iter()
                    .filter(|p| p.name != "K" && p.name != "K1" && p.name != "K2")
                    .map(|p| if p.name == "alpha" { 1.0 } else { 0.0 })
                    .collect()
            }
            ControllerTemplate::GeneralCoherent { n_c } => {
                // weakly coupled detuned mode on the signal port
                let d = 2 * n_c;
                let mut v = vec![0.0];
                let h = (0.1 * fs).sqrt() / 2.0;
                for port in 0..2 {
                    for q in 0..d {
                        let (re, im) = match (port, q) {
                            (0, 0) => (h, 0.0),
                            (0, 1) => (0.0, h),
                            (1, 0) => (1e-3 * h, 0.0),
                            (1, 1) => (0.0, 1e-3 * h),
                            _ => (0.0, 0.0),
                        };
                        v.push(re);
                        v.push(im);
                    }
                }
                for i in 0..d {
                    for j in i..d {
                        v.push(if i == j { delta0 / 2.0 } else { 0.0 });
                    }
                }
                v
            }
        };
        if sc.is_optomech() {
            match self.coupling {
                CouplingMode::Fixed => {}
                CouplingMode::Locked => v.push(1.0),
                CouplingMode::Relaxed => v.extend([1.0, -1.0]),
            }
        }
        Ok(v)
    }

    fn split_couplings<'a>(&self, sc: &PlantScenario, theta: &'a [f64]) -> (&'a [f64], Option<(f64, f64)>) {
        let nk = self.coupling_params(sc).len();
        let (c, k) = theta.split_at(theta.len() - nk);
        let couplings = match (self.coupling, k) {
            (CouplingMode::Locked, [k]) => Some((*k, -*k)),
            (CouplingMode::Relaxed, [k1, k2]) => Some((*k1, *k2)),
            _ => None,
        };
        (c, couplings)
    }

    /// Builds the controller at `theta` (physical values) and closes the loop.
    pub fn instantiate(&self, sc: &PlantScenario, theta: &[f64]) -> Result<Instance> {
        let specs = self.params(sc)?;
        if theta.len() != specs.len() {
            return Err(Error::InvalidTemplate(format!(
                "expected {} parameters, got {}",
                specs.len(),
                theta.len()
            )));
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidTemplate(format!("non-finite parameter {v}")));
        }
        let (p, couplings) = self.split_couplings(sc, theta);
        let plant = sc.plant_statespace(couplings)?;
        let controller = match &self.controller {
            ControllerTemplate::TrivialPhase => to_statespace(&phase(p[0]))?,
            ControllerTemplate::Cavity => to_statespace(&cavity(&[p[0], p[1]], p[2])?)?,
            ControllerTemplate::Opo => {
                let core = opo(p[0], p[1], p[2], Complex64::new(p[3], p[4]))?;
                let outer = concatenate(&phase(p[5]), &LinearSlh::identity(1));
                let inner = concatenate(&phase(p[6]), &LinearSlh::identity(1));
                to_statespace(&series(&outer, &series(&core, &inner)?)?)?
            }
            ControllerTemplate::StaticSqueezer => squeezer_static(p[0], p[1], p[2]).to_statespace(),
            ControllerTemplate::StaticTwoMode => two_mode_squeezer_static(p[0]).to_statespace(),
            ControllerTemplate::ClassicalHomodyne { form } => match Self::classical_form(*form, sc) {
                ClassicalForm::Kalman => kalman_homodyne(sc, &plant)?,
                _ => homodyne_static(p[0], p[1]),
            },
            ControllerTemplate::ClassicalHeterodyne { form } => match Self::classical_form(*form, sc) {
                ClassicalForm::Kalman => kalman_heterodyne(sc, &plant, p[0])?,
                _ => heterodyne_static(p[0], &RMat::from_row_slice(2, 2, &p[1..5]))?,
            },
            ControllerTemplate::GeneralCoherent { n_c } => to_statespace(&general_coherent(*n_c, p)?)?,
        };
        let closed = sc.closed_loop(&plant, &controller)?;
        Ok(Instance {
            plant,
            controller,
            closed,
            couplings,
        })
    }
}

/// Two-port single-or-multi-mode controller with `S = diag(e^{iψ}, 1)`,
/// arbitrary complex `Λ` and symmetric `R`. Any such triple is a physical
/// system, so every parameter vector is realizable.
pub fn general_coherent(n_c: usize, p: &[f64]) -> Result<LinearSlh> {
    let d = 2 * n_c;
    let expected = 1 + 4 * d + d * (d + 1) / 2;
    if p.len() != expected {
        return Err(Error::InvalidTemplate(format!("general_coherent({n_c}) takes {expected} parameters")));
    }
    let mut s = CMat::identity(2, 2);
    s[(0, 0)] = Complex64::from_polar(1.0, p[0]);
    let mut lam = CMat::zeros(2, d);
    let mut k = 1;
    for port in 0..2 {
        for q in 0..d {
            lam[(port, q)] = Complex64::new(p[k], p[k + 1]);
            k += 2;
        }
    }
    let mut r = RMat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            r[(i, j)] = p[k];
            r[(j, i)] = p[k];
            k += 1;
        }
    }
    LinearSlh::new(s, lam, CVec::zeros(2), r, RVec::zeros(d))
}

fn lqr_weights(sc: &PlantScenario, n: usize) -> (RMat, RMat) {
    let mut q = RMat::zeros(n, n);
    match &sc.cost {
        CostSpec::Mode { index } => {
            let i = 2 * index;
            if i + 1 < n {
                q[(i, i)] = 0.25;
                q[(i + 1, i + 1)] = 0.25;
            }
        }
        CostSpec::Quadratic { weight, .. } => {
            for (i, row) in weight.iter().enumerate().take(n) {
                for (j, v) in row.iter().enumerate().take(n) {
                    q[(i, j)] = 0.5 * v;
                }
            }
            q = (&q + q.transpose()) * 0.5;
        }
    }
    (q, RMat::identity(2, 2) * DEFAULT_R_W)
}

/// Riccati-synthesized homodyne controller on the sense port.
pub fn kalman_homodyne(sc: &PlantScenario, plant: &StateSpace) -> Result<StateSpace> {
    let f = build_f(&sc.noise_for(&plant.inputs))?;
    let form = ClassicalPlantForm::from_statespace(plant, &f.f, &[sc.sense_index(plant)?], sc.actuate_index(plant)?)?;
    let (q, r) = lqr_weights(sc, plant.n_states());
    kalman_lqg_controller(&form, &q, &r)?.to_statespace()
}

/// Riccati-synthesized heterodyne controller: beamsplitter front end with
/// transmission `alpha` and a two-record Kalman filter.
pub fn kalman_heterodyne(sc: &PlantScenario, plant: &StateSpace, alpha: f64) -> Result<StateSpace> {
    let front = heterodyne_frontend(alpha)?.prefixed("front");
    let aug = connect(&[plant, &front], &[Link::new(0, sc.sense_index(plant)?, 1, 0)])?;
    let f = build_f(&sc.noise_for(&aug.inputs))?;
    let n_po = plant.n_outputs();
    let form = ClassicalPlantForm::from_statespace(&aug, &f.f, &[n_po, n_po + 1], sc.actuate_index(plant)?)?;
    let (q, r) = lqr_weights(sc, plant.n_states());
    let filter = kalman_lqg_controller(&form, &q, &r)?.to_statespace()?;
    let front = heterodyne_frontend(alpha)?;
    let joint = connect(&[&front, &filter], &[Link::new(0, 0, 1, 0), Link::new(0, 1, 1, 1)])?;
    let mut ss = joint.select_outputs(&[joint.n_outputs() - 1])?;
    ss.inputs = vec!["signal".into(), "split".into(), "anc0".into()];
    Ok(ss)
}
