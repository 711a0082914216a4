//! The `qlc/1` netlist format.
//!
//! A netlist lists components, a composition expression over their ids, the
//! statistics of every exogenous input and, for closed-loop commands, the
//! plant ports the controller reads and drives. Port labels of a composed
//! circuit are `<id>.<port>`.

use std::collections::{BTreeSet, HashMap};

use num_complex::Complex64;
use qlc_core::analysis::CostSpec;
use qlc_core::components::{beamsplitter, cavity, cavity_plant, displacement, opo, optomech_plant, phase, OptomechScenario};
use qlc_core::linalg::{CMat, CVec, RMat, RVec};
use qlc_core::optimizer::{OptimizeOptions, Template};
use qlc_core::scenario::{PlantModel, PlantScenario};
use qlc_core::slh::{concatenate, feedback, permute_ports, series, LinearSlh};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA: &str = "qlc/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("unknown component type `{kind}` at {path}")]
    UnknownComponent { path: String, kind: String },
    #[error("port arity mismatch at {path}: {msg}")]
    PortArityMismatch { path: String, msg: String },
}

impl NetlistError {
    fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }

    fn arity(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::PortArityMismatch {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// JSON pointer of the offending value, if the error has one.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Syntax { .. } => None,
            Self::Schema { path, .. } | Self::UnknownComponent { path, .. } | Self::PortArityMismatch { path, .. } => {
                Some(path)
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, NetlistError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Netlist {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub components: Vec<Component>,
    /// Defaults to the concatenation of all components in listed order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<Composition>,
    pub noise: Vec<NoiseEntry>,
    /// Thermal occupation of every `thermal` port.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kn: Option<f64>,
    #[serde(default = "default_cost")]
    pub cost: CostSpec,
    #[serde(rename = "loop", default, skip_serializing_if = "Option::is_none")]
    pub control_loop: Option<LoopSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<Template>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizeOptions>,
}

fn default_cost() -> CostSpec {
    CostSpec::mode(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Composition {
    Ref(String),
    /// Chain in signal order: the first element receives the inputs.
    Series(Vec<Composition>),
    Concat(Vec<Composition>),
    Feedback {
        of: Box<Composition>,
        output: PortRef,
        input: PortRef,
    },
    Permute {
        of: Box<Composition>,
        order: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PortRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Vacuum,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub port: String,
    pub kind: NoiseKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    /// Output label the controller listens to.
    pub sense: String,
    /// Input label the controller drives.
    pub actuate: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CavityParams {
    kappas: Vec<f64>,
    #[serde(default)]
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpoParams {
    kappa1: f64,
    kappa2: f64,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    eps_re: f64,
    #[serde(default)]
    eps_im: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BeamsplitterParams {
    alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseParams {
    phi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DisplacementParams {
    #[serde(default)]
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityParams {
    ports: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CavityPlantParams {
    k1: f64,
    k2: f64,
    k3: f64,
    #[serde(default)]
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptomechParams {
    omega: f64,
    q: f64,
    #[serde(default = "one")]
    k1: f64,
    #[serde(default = "minus_one")]
    k2: f64,
}

fn one() -> f64 {
    1.0
}

fn minus_one() -> f64 {
    -1.0
}

/// Raw linear SLH in the quadrature basis: `L = Λx + l₀`, `H = ½xᵀRx + rᵀx`
/// with `x = (x₁, p₁, x₂, p₂, …)`. Complex entries are `[re, im]` pairs.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlhParams {
    #[serde(default)]
    s: Option<Vec<Vec<[f64; 2]>>>,
    l: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    l_offset: Option<Vec<[f64; 2]>>,
    r: Vec<Vec<f64>>,
    #[serde(default)]
    r_linear: Option<Vec<f64>>,
    #[serde(default)]
    inputs: Option<Vec<String>>,
    #[serde(default)]
    outputs: Option<Vec<String>>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn decode<T: DeserializeOwned>(value: &Value, base: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let p = pointer(e.path());
        let inner = e.into_inner().to_string();
        let path = if p == "/." || p.is_empty() { base.to_string() } else { format!("{base}{p}") };
        NetlistError::schema(path, inner)
    })
}

/// Parses and validates a `qlc/1` document.
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let value: Value = serde_json::from_str(text).map_err(|e| NetlistError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let netlist: Netlist = decode(&value, "")?;
    netlist.validate()?;
    Ok(netlist)
}

pub fn emit_netlist(netlist: &Netlist) -> String {
    serde_json::to_string_pretty(netlist).expect("netlist values serialize")
}

fn complex_matrix(rows: &[Vec<[f64; 2]>], cols: usize, path: &str) -> Result<CMat> {
    let mut m = CMat::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(NetlistError::schema(
                format!("{path}/{i}"),
                format!("expected {cols} entries, got {}", row.len()),
            ));
        }
        for (j, [re, im]) in row.iter().enumerate() {
            m[(i, j)] = Complex64::new(*re, *im);
        }
    }
    Ok(m)
}

impl Component {
    fn path(index: usize) -> String {
        format!("/components/{index}")
    }

    /// Builds the component SLH with its own (unprefixed) port labels.
    fn build(&self, index: usize) -> Result<LinearSlh> {
        let base = format!("{}/params", Self::path(index));
        let core_err = |e: qlc_core::Error| NetlistError::schema(base.clone(), e.to_string());
        let g = match self.kind.as_str() {
            "cavity" => {
                let p: CavityParams = decode(&self.params, &base)?;
                cavity(&p.kappas, p.delta).map_err(core_err)?
            }
            "opo" => {
                let p: OpoParams = decode(&self.params, &base)?;
                opo(p.kappa1, p.kappa2, p.delta, Complex64::new(p.eps_re, p.eps_im)).map_err(core_err)?
            }
            "beamsplitter" => {
                let p: BeamsplitterParams = decode(&self.params, &base)?;
                beamsplitter(p.alpha).map_err(core_err)?
            }
            "phase" => phase(decode::<PhaseParams>(&self.params, &base)?.phi),
            "displacement" => {
                let p: DisplacementParams = decode(&self.params, &base)?;
                displacement(Complex64::new(p.re, p.im))
            }
            "identity" => LinearSlh::identity(decode::<IdentityParams>(&self.params, &base)?.ports),
            "cavity_plant" => {
                let p: CavityPlantParams = decode(&self.params, &base)?;
                cavity_plant(p.k1, p.k2, p.k3, p.delta).map_err(core_err)?
            }
            "optomech_plant" => {
                let p: OptomechParams = decode(&self.params, &base)?;
                optomech_plant(&OptomechScenario {
                    omega: p.omega,
                    q: p.q,
                    kn: 0.0,
                    k1: p.k1,
                    k2: p.k2,
                })
                .map_err(core_err)?
            }
            "slh" => self.build_raw(&base)?,
            other => {
                return Err(NetlistError::UnknownComponent {
                    path: format!("{}/type", Self::path(index)),
                    kind: other.to_string(),
                })
            }
        };
        Ok(g)
    }

    fn build_raw(&self, base: &str) -> Result<LinearSlh> {
        let p: SlhParams = decode(&self.params, base)?;
        let ports = p.l.len();
        let dim = p.r.len();
        if !dim.is_multiple_of(2) {
            return Err(NetlistError::schema(format!("{base}/r"), "R must be 2n x 2n"));
        }
        let lam = complex_matrix(&p.l, dim, &format!("{base}/l"))?;
        let s = match &p.s {
            Some(s) => {
                if s.len() != ports {
                    return Err(NetlistError::arity(format!("{base}/s"), format!("S has {} rows, L has {ports}", s.len())));
                }
                complex_matrix(s, ports, &format!("{base}/s"))?
            }
            None => CMat::identity(ports, ports),
        };
        let offset = match &p.l_offset {
            Some(v) if v.len() != ports => {
                return Err(NetlistError::arity(format!("{base}/l_offset"), format!("expected {ports} entries")))
            }
            Some(v) => CVec::from_iterator(ports, v.iter().map(|[re, im]| Complex64::new(*re, *im))),
            None => CVec::zeros(ports),
        };
        let mut r = RMat::zeros(dim, dim);
        for (i, row) in p.r.iter().enumerate() {
            if row.len() != dim {
                return Err(NetlistError::schema(format!("{base}/r/{i}"), format!("expected {dim} entries")));
            }
            for (j, v) in row.iter().enumerate() {
                r[(i, j)] = *v;
            }
        }
        let lin = match &p.r_linear {
            Some(v) if v.len() != dim => {
                return Err(NetlistError::schema(format!("{base}/r_linear"), format!("expected {dim} entries")))
            }
            Some(v) => RVec::from_column_slice(v),
            None => RVec::zeros(dim),
        };
        let g = LinearSlh::new(s, lam, offset, r, lin).map_err(|e| NetlistError::schema(base, e.to_string()))?;
        let inputs = p.inputs.unwrap_or_else(|| g.inputs().to_vec());
        let outputs = p.outputs.unwrap_or_else(|| g.outputs().to_vec());
        g.with_labels(inputs, outputs)
            .map_err(|e| NetlistError::arity(base, e.to_string()))
    }
}

fn resolve_port(port: &PortRef, labels: &[String], path: &str) -> Result<usize> {
    match port {
        PortRef::Index(i) if *i < labels.len() => Ok(*i),
        PortRef::Index(i) => Err(NetlistError::arity(path, format!("port {i} out of range for {} ports", labels.len()))),
        PortRef::Label(l) => labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| NetlistError::schema(path, format!("no port `{l}`"))),
    }
}

impl Netlist {
    fn components_by_id(&self) -> Result<HashMap<&str, usize>> {
        let mut ids = HashMap::new();
        for (i, c) in self.components.iter().enumerate() {
            let path = format!("/components/{i}/id");
            if c.id.is_empty() || c.id.contains('.') {
                return Err(NetlistError::schema(path, format!("invalid id `{}`", c.id)));
            }
            if ids.insert(c.id.as_str(), i).is_some() {
                return Err(NetlistError::schema(path, format!("duplicate id `{}`", c.id)));
            }
        }
        Ok(ids)
    }

    /// Composes the circuit. Port labels are `<id>.<port>`.
    pub fn circuit(&self) -> Result<LinearSlh> {
        let ids = self.components_by_id()?;
        let mut leaves = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            leaves.push(c.build(i)?.prefixed(&c.id));
        }
        match &self.composition {
            Some(expr) => compose(expr, "/composition", &ids, &leaves),
            None => {
                let mut it = leaves.into_iter();
                let first = it.next().ok_or_else(|| NetlistError::schema("/components", "no components"))?;
                Ok(it.fold(first, |acc, g| concatenate(&acc, &g)))
            }
        }
    }

    /// Checks the schema tag, ids, composition, noise coverage, loop ports
    /// and `k_n`. The cost is checked against the plant in `scenario`.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(NetlistError::schema("/schema", format!("expected `{SCHEMA}`, got `{}`", self.schema)));
        }
        let g = self.circuit()?;
        let mut seen = BTreeSet::new();
        for (i, n) in self.noise.iter().enumerate() {
            let path = format!("/noise/{i}/port");
            if !g.inputs().contains(&n.port) {
                return Err(NetlistError::schema(path, format!("circuit has no input `{}`", n.port)));
            }
            if !seen.insert(n.port.as_str()) {
                return Err(NetlistError::schema(path, format!("duplicate noise entry for `{}`", n.port)));
            }
        }
        let missing: Vec<&str> = g
            .inputs()
            .iter()
            .map(String::as_str)
            .filter(|p| !seen.contains(p))
            .collect();
        if !missing.is_empty() {
            return Err(NetlistError::schema("/noise", format!("no statistics for inputs {missing:?}")));
        }
        if let Some(kn) = self.kn {
            if !(kn >= 0.0) || !kn.is_finite() {
                return Err(NetlistError::schema("/kn", format!("k_n must be finite and non-negative, got {kn}")));
            }
        }
        if let Some(l) = &self.control_loop {
            if !g.outputs().contains(&l.sense) {
                return Err(NetlistError::schema("/loop/sense", format!("circuit has no output `{}`", l.sense)));
            }
            if !g.inputs().contains(&l.actuate) {
                return Err(NetlistError::schema("/loop/actuate", format!("circuit has no input `{}`", l.actuate)));
            }
        }
        Ok(())
    }

    pub fn thermal_ports(&self) -> Vec<String> {
        self.noise
            .iter()
            .filter(|n| n.kind == NoiseKind::Thermal)
            .map(|n| n.port.clone())
            .collect()
    }

    /// Closed-loop scenario. `kn` overrides the netlist value. A composition
    /// that is a single plant preset keeps its model so plant-specific
    /// behaviour (frequency scaling, tunable couplings) applies.
    pub fn scenario(&self, kn: Option<f64>) -> Result<PlantScenario> {
        let l = self
            .control_loop
            .as_ref()
            .ok_or_else(|| NetlistError::schema("/loop", "closed-loop commands need `loop`"))?;
        let n_modes = self.circuit()?.n_modes();
        if let CostSpec::Mode { index } = self.cost {
            if index >= n_modes {
                return Err(NetlistError::schema("/cost/index", format!("plant has {n_modes} modes")));
            }
        }
        let kn = kn.or(self.kn).unwrap_or(0.0);
        if !(kn >= 0.0) || !kn.is_finite() {
            return Err(NetlistError::schema("/kn", format!("k_n must be finite and non-negative, got {kn}")));
        }
        if let Some((id, model)) = self.preset()? {
            let strip = |s: &str| s.strip_prefix(&format!("{id}.")).unwrap_or(s).to_string();
            return Ok(PlantScenario {
                model,
                kn,
                thermal: self.thermal_ports().iter().map(|s| strip(s)).collect(),
                sense: strip(&l.sense),
                actuate: strip(&l.actuate),
                cost: self.cost.clone(),
            });
        }
        Ok(PlantScenario::custom(
            self.circuit()?,
            kn,
            self.thermal_ports(),
            &l.sense,
            &l.actuate,
            self.cost.clone(),
        ))
    }

    fn preset(&self) -> Result<Option<(String, PlantModel)>> {
        let target = match &self.composition {
            Some(Composition::Ref(id)) => id.as_str(),
            None if self.components.len() == 1 => self.components[0].id.as_str(),
            _ => return Ok(None),
        };
        let Some((i, c)) = self.components.iter().enumerate().find(|(_, c)| c.id == target) else {
            return Ok(None);
        };
        let base = format!("/components/{i}/params");
        let model = match c.kind.as_str() {
            "cavity_plant" => {
                let p: CavityPlantParams = decode(&c.params, &base)?;
                PlantModel::Cavity {
                    kappas: [p.k1, p.k2, p.k3],
                    delta: p.delta,
                }
            }
            "optomech_plant" => {
                let p: OptomechParams = decode(&c.params, &base)?;
                PlantModel::Optomech {
                    omega: p.omega,
                    q: p.q,
                    k1: p.k1,
                    k2: p.k2,
                }
            }
            _ => return Ok(None),
        };
        Ok(Some((c.id.clone(), model)))
    }
}

fn compose(expr: &Composition, path: &str, ids: &HashMap<&str, usize>, leaves: &[LinearSlh]) -> Result<LinearSlh> {
    match expr {
        Composition::Ref(id) => ids
            .get(id.as_str())
            .map(|&i| leaves[i].clone())
            .ok_or_else(|| NetlistError::schema(format!("{path}/ref"), format!("undefined component `{id}`"))),
        Composition::Series(items) => {
            let base = format!("{path}/series");
            let mut acc: Option<LinearSlh> = None;
            for (i, item) in items.iter().enumerate() {
                let p = format!("{base}/{i}");
                let g = compose(item, &p, ids, leaves)?;
                acc = Some(match acc {
                    None => g,
                    Some(inner) => {
                        if inner.n_ports() != g.n_ports() {
                            return Err(NetlistError::arity(
                                p,
                                format!("{} ports feed a block with {} ports", inner.n_ports(), g.n_ports()),
                            ));
                        }
                        series(&g, &inner).map_err(|e| NetlistError::arity(p, e.to_string()))?
                    }
                });
            }
            acc.ok_or_else(|| NetlistError::schema(base, "empty series"))
        }
        Composition::Concat(items) => {
            let base = format!("{path}/concat");
            let mut acc: Option<LinearSlh> = None;
            for (i, item) in items.iter().enumerate() {
                let g = compose(item, &format!("{base}/{i}"), ids, leaves)?;
                acc = Some(match acc {
                    None => g,
                    Some(a) => concatenate(&a, &g),
                });
            }
            acc.ok_or_else(|| NetlistError::schema(base, "empty concat"))
        }
        Composition::Feedback { of, output, input } => {
            let base = format!("{path}/feedback");
            let g = compose(of, &format!("{base}/of"), ids, leaves)?;
            let o = resolve_port(output, g.outputs(), &format!("{base}/output"))?;
            let i = resolve_port(input, g.inputs(), &format!("{base}/input"))?;
            feedback(&g, o, i).map_err(|e| NetlistError::schema(base, e.to_string()))
        }
        Composition::Permute { of, order } => {
            let base = format!("{path}/permute");
            let g = compose(of, &format!("{base}/of"), ids, leaves)?;
            let n = g.n_ports();
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(NetlistError::arity(
                    format!("{base}/order"),
                    format!("not a permutation of {n} ports"),
                ));
            }
            permute_ports(&g, order).map_err(|e| NetlistError::arity(base, e.to_string()))
        }
    }
}
