use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qlc_core::analysis::output_spectrum;
use qlc_core::optimizer::{
    evaluate, optimize, sweep, ClassicalForm, ControllerTemplate, CouplingMode, OptimizationResult, OptimizeOptions,
    Template,
};
use qlc_core::scenario::PlantScenario;
use qlc_core::statespace::{adiabatic_eliminate, to_statespace};
use serde_json::{json, Value};
use thiserror::Error;

use crate::netlist::{parse_netlist, Netlist, NetlistError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Solver(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<NetlistError> for CliError {
    fn from(e: NetlistError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<qlc_core::Error> for CliError {
    fn from(e: qlc_core::Error) -> Self {
        use qlc_core::Error as E;
        match e {
            E::InvalidTemplate(_)
            | E::DimensionMismatch(_)
            | E::NegativeNoise(_)
            | E::NegativeCoupling(_)
            | E::InvalidTransmittance(_)
            | E::NonPositiveParam(_)
            | E::PortOutOfRange { .. }
            | E::IndexOutOfRange { .. }
            | E::InvalidKindParams(_) => Self::Validation(e.to_string()),
            _ => Self::Solver(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Linear quantum feedback networks: netlists, closed-loop LQG costs and
/// controller optimization.
///
/// Sweep CSV columns: kn, cost, ratio (no-control cost over optimized cost),
/// then one column per controller parameter. Spectrum CSV columns: omega,
/// flux (vacuum-subtracted photon flux density), s_xx, s_pp. Floats carry 17
/// significant digits; failed points are written as NaN.
///
/// Exit status: 0 success, 2 invalid input, 3 solver failure.
#[derive(Debug, Parser)]
#[command(name = "qlc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed of the multistart sequence.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Gradient-norm tolerance of the local optimizer.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output file; stdout when absent (`cost` defaults to result.json).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when absent.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for multistart and sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a netlist.
    Validate(NetlistArgs),
    /// Closed-loop cost at fixed controller parameters.
    Cost(CostArgs),
    /// Optimize a controller template.
    Optimize(ControllerArgs),
    /// Optimize over a log-spaced k_n grid.
    Sweep(SweepArgs),
    /// Output spectrum of the optimized (or given) closed loop.
    Spectrum(SpectrumArgs),
    /// Static limit D - C A^-1 B of the composed circuit.
    Eliminate(NetlistArgs),
}

#[derive(Debug, Args)]
pub struct NetlistArgs {
    #[arg(long)]
    pub netlist: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Trivial,
    Cavity,
    Opo,
    Squeezer,
    TwoMode,
    Homodyne,
    Heterodyne,
    GeneralCoherent,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Auto,
    Static,
    Kalman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingArg {
    Fixed,
    Locked,
    Relaxed,
}

#[derive(Debug, Args)]
pub struct ControllerArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    /// Overrides the netlist k_n.
    #[arg(long, allow_hyphen_values = true)]
    pub kn: Option<f64>,
    /// Overrides the netlist controller.
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    #[arg(long, value_enum, default_value = "auto")]
    pub classical_form: FormArg,
    #[arg(long, value_enum)]
    pub coupling: Option<CouplingArg>,
    /// Internal modes of the general coherent controller.
    #[arg(long, default_value_t = 1)]
    pub n_c: usize,
    /// Quasi-random restarts besides the default start.
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[command(flatten)]
    pub ctrl: ControllerArgs,
    /// Comma-separated parameter values; template defaults when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub ctrl: ControllerArgs,
    /// `a:b:n`, n points from 10^a to 10^b.
    #[arg(long, allow_hyphen_values = true)]
    pub kn_log: String,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub ctrl: ControllerArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// `a:b:n`, n evenly spaced frequencies.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: String,
    /// Closed-loop output label.
    #[arg(long, default_value = "ctrl.0")]
    pub port: String,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_range(s: &str, what: &str) -> Result<(f64, f64, usize)> {
    let bad = || CliError::Validation(format!("{what}: expected a:b:n, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !a.is_finite() || !b.is_finite() || n == 0 {
        return Err(bad());
    }
    Ok((a, b, n))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn parse_theta(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("theta: cannot parse `{v}`")))
        })
        .collect()
}

fn load(path: &Path) -> Result<Netlist> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_netlist(&text)?)
}

struct Ctx {
    scenario: PlantScenario,
    template: Option<Template>,
    opts: OptimizeOptions,
}

impl Cli {
    fn options(&self, netlist: &Netlist, restarts: Option<usize>) -> OptimizeOptions {
        let mut o = netlist.optimizer.clone().unwrap_or_default();
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if let Some(t) = self.tol {
            o.grad_tol = t;
        }
        if let Some(r) = restarts {
            o.n_restart = r;
        }
        o
    }

    fn context(&self, a: &ControllerArgs) -> Result<Ctx> {
        let netlist = load(&a.netlist)?;
        let scenario = netlist.scenario(a.kn)?;
        let form = match a.classical_form {
            FormArg::Auto => ClassicalForm::Auto,
            FormArg::Static => ClassicalForm::Static,
            FormArg::Kalman => ClassicalForm::Kalman,
        };
        let controller = match a.controller {
            None => None,
            Some(ControllerKind::None) => Some(None),
            Some(k) => Some(Some(match k {
                ControllerKind::Trivial => ControllerTemplate::TrivialPhase,
                ControllerKind::Cavity => ControllerTemplate::Cavity,
                ControllerKind::Opo => ControllerTemplate::Opo,
                ControllerKind::Squeezer => ControllerTemplate::StaticSqueezer,
                ControllerKind::TwoMode => ControllerTemplate::StaticTwoMode,
                ControllerKind::Homodyne => ControllerTemplate::ClassicalHomodyne { form },
                ControllerKind::Heterodyne => ControllerTemplate::ClassicalHeterodyne { form },
                ControllerKind::GeneralCoherent => ControllerTemplate::GeneralCoherent { n_c: a.n_c },
                ControllerKind::None => unreachable!(),
            })),
        };
        let mut template = match controller {
            Some(c) => c.map(Template::new),
            None => netlist.controller.clone(),
        };
        if let (Some(t), Some(c)) = (template.as_mut(), a.coupling) {
            t.coupling = match c {
                CouplingArg::Fixed => CouplingMode::Fixed,
                CouplingArg::Locked => CouplingMode::Locked,
                CouplingArg::Relaxed => CouplingMode::Relaxed,
            };
        }
        let opts = self.options(&netlist, a.restarts);
        Ok(Ctx {
            scenario,
            template,
            opts,
        })
    }

    fn format(&self, default: Format) -> Format {
        if let Some(f) = self.format {
            return f;
        }
        match self.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            _ => default,
        }
    }

    fn emit(&self, text: &str, default_path: Option<&Path>) -> Result<()> {
        match self.out.as_deref().or(default_path) {
            Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn required(t: Option<Template>) -> Result<Template> {
    t.ok_or_else(|| CliError::Validation("no controller: pass --controller or add `controller` to the netlist".into()))
}

fn result_json(r: &OptimizationResult) -> Value {
    let params: serde_json::Map<String, Value> =
        r.names.iter().zip(&r.theta).map(|(n, v)| (n.clone(), json!(v))).collect();
    json!({
        "cost": r.cost,
        "params": params,
        "theta": r.theta,
        "grad_norm": r.grad_norm,
        "hessian_cond": r.hessian_cond,
        "converged": r.converged,
        "iterations": r.iterations,
        "adiabatic_ratio": r.adiabatic_ratio,
    })
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn validate(cli: &Cli, a: &NetlistArgs) -> Result<()> {
    let n = load(&a.netlist)?;
    let g = n.circuit()?;
    let report = json!({
        "schema": crate::netlist::SCHEMA,
        "valid": true,
        "components": n.components.len(),
        "modes": g.n_modes(),
        "inputs": g.inputs(),
        "outputs": g.outputs(),
    });
    cli.emit(&pretty(&report), None)
}

fn cost(cli: &Cli, a: &CostArgs) -> Result<()> {
    let ctx = cli.context(&a.ctrl)?;
    let no_control = ctx.scenario.no_control_cost()?;
    let (names, theta, cost) = match &ctx.template {
        None if a.ctrl.controller == Some(ControllerKind::None) => (Vec::new(), Vec::new(), no_control),
        t => {
            let t = required(t.clone())?;
            let names: Vec<String> = t.params(&ctx.scenario)?.into_iter().map(|p| p.name).collect();
            let theta = match &a.theta {
                Some(s) => parse_theta(s)?,
                None => t.initial(&ctx.scenario)?,
            };
            if theta.len() != names.len() {
                return Err(CliError::Validation(format!(
                    "theta has {} values, template expects {} ({})",
                    theta.len(),
                    names.len(),
                    names.join(",")
                )));
            }
            let c = evaluate(&t, &ctx.scenario, &theta)?;
            (names, theta, c)
        }
    };
    println!("{}", fmt_f64(cost));
    let text = match cli.format(Format::Json) {
        Format::Json => pretty(&json!({
            "schema": crate::netlist::SCHEMA,
            "command": "cost",
            "kn": ctx.scenario.kn,
            "cost": cost,
            "no_control_cost": no_control,
            "names": names,
            "theta": theta,
        })),
        Format::Csv => {
            let mut header = vec!["kn".to_string(), "cost".into(), "no_control".into()];
            header.extend(names);
            let mut row = vec![fmt_f64(ctx.scenario.kn), fmt_f64(cost), fmt_f64(no_control)];
            row.extend(theta.iter().map(|v| fmt_f64(*v)));
            to_csv(&header, &[row])?
        }
    };
    cli.emit(&text, Some(Path::new("result.json")))
}

fn optimize_cmd(cli: &Cli, a: &ControllerArgs) -> Result<()> {
    let ctx = cli.context(a)?;
    let t = required(ctx.template)?;
    let r = optimize(&t, &ctx.scenario, &ctx.opts)?;
    let no_control = ctx.scenario.no_control_cost()?;
    let text = match cli.format(Format::Json) {
        Format::Json => {
            let mut v = result_json(&r);
            v["schema"] = json!(crate::netlist::SCHEMA);
            v["kn"] = json!(ctx.scenario.kn);
            v["no_control_cost"] = json!(no_control);
            v["ratio"] = json!(no_control / r.cost);
            v["controller"] = serde_json::to_value(&t).expect("template serializes");
            pretty(&v)
        }
        Format::Csv => {
            let mut header = vec!["kn".to_string(), "cost".into(), "ratio".into()];
            header.extend(r.names.iter().cloned());
            let mut row = vec![fmt_f64(ctx.scenario.kn), fmt_f64(r.cost), fmt_f64(no_control / r.cost)];
            row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
            to_csv(&header, &[row])?
        }
    };
    cli.emit(&text, None)
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let ctx = cli.context(&a.ctrl)?;
    let t = required(ctx.template)?;
    let (lo, hi, n) = parse_range(&a.kn_log, "--kn-log")?;
    let grid: Vec<f64> = linspace(lo, hi, n).into_iter().map(|e| 10f64.powf(e)).collect();
    let names: Vec<String> = t.params(&ctx.scenario)?.into_iter().map(|p| p.name).collect();
    let points = sweep(&t, &ctx.scenario, &grid, &ctx.opts);
    let text = match cli.format(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["kn".to_string(), "cost".into(), "ratio".into()];
            header.extend(names.iter().cloned());
            let rows: Vec<Vec<String>> = points
                .iter()
                .map(|p| {
                    let mut row = vec![fmt_f64(p.kn)];
                    match &p.result {
                        Ok(r) => {
                            row.push(fmt_f64(r.cost));
                            row.push(fmt_f64(p.ratio().unwrap_or(f64::NAN)));
                            row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
                        }
                        Err(_) => row.extend(std::iter::repeat_n(fmt_f64(f64::NAN), 2 + names.len())),
                    }
                    row
                })
                .collect();
            to_csv(&header, &rows)?
        }
        Format::Json => {
            let items: Vec<Value> = points
                .iter()
                .map(|p| match &p.result {
                    Ok(r) => {
                        let mut v = result_json(r);
                        v["kn"] = json!(p.kn);
                        v["no_control_cost"] = json!(p.no_control);
                        v["ratio"] = json!(p.ratio());
                        v
                    }
                    Err(e) => json!({"kn": p.kn, "error": e.to_string()}),
                })
                .collect();
            pretty(&json!({"schema": crate::netlist::SCHEMA, "command": "sweep", "names": names, "points": items}))
        }
    };
    cli.emit(&text, None)
}

fn spectrum_cmd(cli: &Cli, a: &SpectrumArgs) -> Result<()> {
    let ctx = cli.context(&a.ctrl)?;
    let t = required(ctx.template)?;
    let theta = match &a.theta {
        Some(s) => parse_theta(s)?,
        None => optimize(&t, &ctx.scenario, &ctx.opts)?.theta,
    };
    let inst = t.instantiate(&ctx.scenario, &theta)?;
    let sys = &inst.closed.system;
    let port = sys.output_index(&a.port).ok_or_else(|| {
        CliError::Validation(format!("closed loop has no output `{}` (outputs: {})", a.port, sys.outputs.join(", ")))
    })?;
    let (lo, hi, n) = parse_range(&a.omega, "--omega")?;
    let s = output_spectrum(sys, &inst.closed.noise, port, &linspace(lo, hi, n))?;
    let text = match cli.format(Format::Csv) {
        Format::Csv => {
            let header: Vec<String> = ["omega", "flux", "s_xx", "s_pp"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = s
                .omega
                .iter()
                .zip(&s.flux)
                .zip(&s.blocks)
                .map(|((w, f), b)| vec![fmt_f64(*w), fmt_f64(*f), fmt_f64(b[0][0].re), fmt_f64(b[1][1].re)])
                .collect();
            to_csv(&header, &rows)?
        }
        Format::Json => pretty(&json!({
            "schema": crate::netlist::SCHEMA,
            "command": "spectrum",
            "port": a.port,
            "theta": theta,
            "omega": s.omega,
            "flux": s.flux,
            "peaks": s.local_maxima(1e-3).into_iter().map(|i| s.omega[i]).collect::<Vec<_>>(),
        })),
    };
    cli.emit(&text, None)
}

fn eliminate_cmd(cli: &Cli, a: &NetlistArgs) -> Result<()> {
    let n = load(&a.netlist)?;
    let ss = to_statespace(&n.circuit()?)?;
    let dev = adiabatic_eliminate(&ss)?;
    let rows: Vec<Vec<f64>> = dev.d.row_iter().map(|r| r.iter().copied().collect()).collect();
    let text = match cli.format(Format::Json) {
        Format::Json => pretty(&json!({
            "schema": crate::netlist::SCHEMA,
            "command": "eliminate",
            "inputs": dev.inputs,
            "outputs": dev.outputs,
            "d": rows,
            "offset": dev.offset.iter().collect::<Vec<_>>(),
            "symplectic_residual": dev.symplectic_residual(),
        })),
        Format::Csv => {
            let header: Vec<String> = (0..dev.d.ncols()).map(|j| format!("d{j}")).collect();
            let body: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()).collect();
            to_csv(&header, &body)?
        }
    };
    cli.emit(&text, None)
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match &cli.command {
        Command::Validate(a) => validate(cli, a),
        Command::Cost(a) => cost(cli, a),
        Command::Optimize(a) => optimize_cmd(cli, a),
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::Spectrum(a) => spectrum_cmd(cli, a),
        Command::Eliminate(a) => eliminate_cmd(cli, a),
    }
}
