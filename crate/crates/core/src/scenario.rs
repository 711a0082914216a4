//! Plant scenarios and closed-loop assembly.
//!
//! A scenario fixes the plant, the thermal ports, the port the controller
//! listens to (`sense`), the port it drives (`actuate`) and the cost. A
//! quadratic cost weight refers to the plant states only.
//! Controllers always read on their input 0 and write on their output 0.

use crate::analysis::{lqg_cost, ClosedLoop, CostSpec};
use crate::components::{cavity_plant, optomech_plant, OptomechScenario};
use crate::error::{Error, Result};
use crate::noise::{build_f, NoiseSpec, PortNoise};
use crate::slh::LinearSlh;
use crate::statespace::{connect, to_statespace, Link, StateSpace};

const PLANT: &str = "plant";
const CTRL: &str = "ctrl";

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Cavity { kappas: [f64; 3], delta: f64 },
    Optomech { omega: f64, q: f64, k1: f64, k2: f64 },
    Custom(LinearSlh),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantScenario {
    pub model: PlantModel,
    pub kn: f64,
    pub thermal: Vec<String>,
    pub sense: String,
    pub actuate: String,
    pub cost: CostSpec,
}

impl PlantScenario {
    /// Three-mirror cavity, `k₁ = k₂ = k₃ = 0.01`, `Δ = 0.1`, bath on mirror 3.
    pub fn cavity_benchmark(kn: f64) -> Self {
        Self::cavity([0.01; 3], 0.1, kn)
    }

    pub fn cavity(kappas: [f64; 3], delta: f64, kn: f64) -> Self {
        Self {
            model: PlantModel::Cavity { kappas, delta },
            kn,
            thermal: vec!["k3".into()],
            sense: "k1".into(),
            actuate: "k2".into(),
            cost: CostSpec::mode(0),
        }
    }

    /// Spring with `Ω = 100`, `Q = 10⁴`, `K₁ = −K₂ = 1`.
    pub fn optomech_benchmark(kn: f64) -> Self {
        Self::optomech(&OptomechScenario::benchmark(kn))
    }

    pub fn optomech(sc: &OptomechScenario) -> Self {
        Self {
            model: PlantModel::Optomech {
                omega: sc.omega,
                q: sc.q,
                k1: sc.k1,
                k2: sc.k2,
            },
            kn: sc.kn,
            thermal: vec!["bath".into()],
            sense: "probe".into(),
            actuate: "feedback".into(),
            cost: CostSpec::mode(0),
        }
    }

    pub fn custom(plant: LinearSlh, kn: f64, thermal: Vec<String>, sense: &str, actuate: &str, cost: CostSpec) -> Self {
        Self {
            model: PlantModel::Custom(plant),
            kn,
            thermal,
            sense: sense.into(),
            actuate: actuate.into(),
            cost,
        }
    }

    pub fn with_kn(&self, kn: f64) -> Self {
        Self { kn, ..self.clone() }
    }

    pub fn is_optomech(&self) -> bool {
        matches!(self.model, PlantModel::Optomech { .. })
    }

    /// Characteristic plant frequency used to scale controller parameters.
    pub fn freq_scale(&self) -> f64 {
        match &self.model {
            PlantModel::Optomech { omega, .. } => omega.abs().max(1.0),
            _ => 1.0,
        }
    }

    /// Plant SLH, with the probe/feedback couplings replaced when given.
    pub fn plant(&self, couplings: Option<(f64, f64)>) -> Result<LinearSlh> {
        match &self.model {
            PlantModel::Cavity { kappas, delta } => cavity_plant(kappas[0], kappas[1], kappas[2], *delta),
            PlantModel::Optomech { omega, q, k1, k2 } => {
                let (k1, k2) = couplings.unwrap_or((*k1, *k2));
                optomech_plant(&OptomechScenario {
                    omega: *omega,
                    q: *q,
                    kn: self.kn,
                    k1,
                    k2,
                })
            }
            PlantModel::Custom(g) => Ok(g.clone()),
        }
    }

    pub fn plant_statespace(&self, couplings: Option<(f64, f64)>) -> Result<StateSpace> {
        Ok(to_statespace(&self.plant(couplings)?)?.prefixed(PLANT))
    }

    fn port_noise(&self, label: &str) -> PortNoise {
        let bare = label.strip_prefix("plant.");
        match bare {
            Some(l) if self.thermal.iter().any(|t| t == l) => PortNoise::Thermal { kn: self.kn },
            _ => PortNoise::Vacuum,
        }
    }

    /// Per-port noise for a list of (prefixed) input labels.
    pub fn noise_for(&self, inputs: &[String]) -> NoiseSpec {
        NoiseSpec(inputs.iter().map(|l| self.port_noise(l)).collect())
    }

    pub fn sense_index(&self, plant: &StateSpace) -> Result<usize> {
        plant
            .output_index(&format!("{PLANT}.{}", self.sense))
            .ok_or_else(|| Error::InvalidTemplate(format!("plant has no output `{}`", self.sense)))
    }

    pub fn actuate_index(&self, plant: &StateSpace) -> Result<usize> {
        plant
            .input_index(&format!("{PLANT}.{}", self.actuate))
            .ok_or_else(|| Error::InvalidTemplate(format!("plant has no input `{}`", self.actuate)))
    }

    /// Closes the loop around `ctrl`; exogenous inputs are the plant inputs
    /// other than `actuate` followed by the controller's free inputs.
    pub fn closed_loop(&self, plant: &StateSpace, ctrl: &StateSpace) -> Result<ClosedLoop> {
        if ctrl.n_inputs() == 0 || ctrl.n_outputs() == 0 {
            return Err(Error::InvalidTemplate("controller needs at least one port".into()));
        }
        let ctrl = ctrl.clone().prefixed(CTRL);
        let links = [
            Link::new(0, self.sense_index(plant)?, 1, 0),
            Link::new(1, 0, 0, self.actuate_index(plant)?),
        ];
        let system = connect(&[plant, &ctrl], &links)?;
        let noise = build_f(&self.noise_for(&system.inputs))?;
        let cost = self.padded_cost(system.n_states());
        Ok(ClosedLoop { system, noise, cost })
    }

    /// The plant left to itself. For the optomechanical plant the probe and
    /// feedback couplings are switched off, so the reference is the bare
    /// spring in its bath.
    pub fn open_loop(&self) -> Result<ClosedLoop> {
        let plant = match self.model {
            PlantModel::Optomech { .. } => self.plant_statespace(Some((0.0, 0.0)))?,
            _ => self.plant_statespace(None)?,
        };
        let noise = build_f(&self.noise_for(&plant.inputs))?;
        Ok(ClosedLoop {
            system: plant,
            noise,
            cost: self.cost.clone(),
        })
    }

    fn padded_cost(&self, n: usize) -> CostSpec {
        match &self.cost {
            CostSpec::Quadratic { weight, offset } => {
                let mut w = vec![vec![0.0; n]; n];
                for (i, row) in weight.iter().enumerate().take(n) {
                    for (j, v) in row.iter().enumerate().take(n) {
                        w[i][j] = *v;
                    }
                }
                CostSpec::Quadratic { weight: w, offset: *offset }
            }
            c => c.clone(),
        }
    }

    pub fn no_control_cost(&self) -> Result<f64> {
        lqg_cost(&self.open_loop()?)
    }
}
