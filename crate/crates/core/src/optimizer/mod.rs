//! Parameter optimization of controller templates against the LQG cost.

pub mod newton;
pub mod template;

use serde::{Deserialize, Serialize};

use crate::analysis::lqg_cost;
use crate::error::{Error, Result};
use crate::scenario::PlantScenario;
use crate::statespace::timescale_ratio;

pub use newton::{halton_points, LocalOptions, LocalResult, Problem};
pub use template::{
    general_coherent, ClassicalForm, ControllerTemplate, CouplingMode, Instance, ParamSpec, Template, Transform,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub n_restart: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Turn a non-converged best restart into `MaxIterations`.
    pub require_convergence: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            n_restart: 32,
            seed: 0,
            max_iter: 200,
            grad_tol: 1e-7,
            require_convergence: false,
        }
    }
}

impl OptimizeOptions {
    fn local(&self) -> LocalOptions {
        LocalOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub hessian_cond: f64,
    /// 0 is the template default start, `1..` the quasi-random draws, and
    /// `usize::MAX` a warm start supplied by the caller.
    pub restart: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Slowest controller rate over fastest plant rate; large values mean
    /// the optimum sits in the adiabatic limit.
    pub adiabatic_ratio: f64,
}

impl OptimizationResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.theta[i])
    }

    pub fn theta_norm(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

struct Layout {
    specs: Vec<ParamSpec>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Layout {
    fn new(template: &Template, sc: &PlantScenario) -> Result<Self> {
        let specs = template.params(sc)?;
        let lo = specs.iter().map(|s| s.to_internal(s.lo)).collect();
        let hi = specs.iter().map(|s| s.to_internal(s.hi)).collect();
        Ok(Self { specs, lo, hi })
    }

    fn theta(&self, y: &[f64]) -> Vec<f64> {
        self.specs
            .iter()
            .zip(y)
            .map(|(s, v)| s.from_internal(*v).clamp(s.lo, s.hi))
            .collect()
    }

    fn internal(&self, theta: &[f64]) -> Vec<f64> {
        self.specs
            .iter()
            .zip(theta)
            .map(|(s, v)| s.to_internal(v.clamp(s.lo, s.hi)))
            .collect()
    }
}

/// LQG cost of `template` at physical parameters `theta`.
pub fn evaluate(template: &Template, sc: &PlantScenario, theta: &[f64]) -> Result<f64> {
    lqg_cost(&template.instantiate(sc, theta)?.closed)
}

fn finish(template: &Template, sc: &PlantScenario, layout: &Layout, r: LocalResult, restart: usize) -> Result<OptimizationResult> {
    let theta = layout.theta(&r.y);
    let inst = template.instantiate(sc, &theta)?;
    let cost = lqg_cost(&inst.closed)?;
    Ok(OptimizationResult {
        names: layout.specs.iter().map(|s| s.name.clone()).collect(),
        theta,
        cost,
        grad_norm: r.grad_norm,
        hessian_cond: r.hessian_cond,
        restart,
        converged: r.converged,
        iterations: r.iterations,
        adiabatic_ratio: timescale_ratio(&inst.controller.a, &inst.plant.a),
    })
}

fn objective<'a>(template: &'a Template, sc: &'a PlantScenario, layout: &'a Layout) -> impl Fn(&[f64]) -> Option<f64> + Sync + 'a {
    move |y: &[f64]| evaluate(template, sc, &layout.theta(y)).ok()
}

/// Multistart local optimization: the template default plus
/// `opts.n_restart` Halton draws. Equal costs (to 1e-12 relative) are broken
/// by smallest `‖θ‖`, then by start index.
pub fn optimize(template: &Template, sc: &PlantScenario, opts: &OptimizeOptions) -> Result<OptimizationResult> {
    let layout = Layout::new(template, sc)?;
    let mut starts = vec![layout.internal(&template.initial(sc)?)];
    starts.extend(halton_points(&layout.lo, &layout.hi, opts.n_restart, opts.seed));
    optimize_from_starts(template, sc, &layout, &starts, opts)
}

/// Local optimization from a caller-supplied start.
pub fn optimize_from(template: &Template, sc: &PlantScenario, theta0: &[f64], opts: &OptimizeOptions) -> Result<OptimizationResult> {
    let layout = Layout::new(template, sc)?;
    let start = layout.internal(theta0);
    let mut r = optimize_from_starts(template, sc, &layout, &[start], opts)?;
    r.restart = usize::MAX;
    Ok(r)
}

fn optimize_from_starts(
    template: &Template,
    sc: &PlantScenario,
    layout: &Layout,
    starts: &[Vec<f64>],
    opts: &OptimizeOptions,
) -> Result<OptimizationResult> {
    let f = objective(template, sc, layout);
    let problem = Problem {
        f: &f,
        lo: &layout.lo,
        hi: &layout.hi,
    };
    let results = newton::run_starts(&problem, starts, &opts.local());
    let mut best: Option<(usize, LocalResult, f64)> = None;
    for (i, r) in results.into_iter().enumerate() {
        let Some(r) = r else { continue };
        let norm = layout.theta(&r.y).iter().map(|v| v * v).sum::<f64>().sqrt();
        let better = match &best {
            None => true,
            Some((_, b, bn)) => {
                let tie = (r.f - b.f).abs() <= 1e-12 * b.f.abs().max(1.0);
                if tie {
                    norm < *bn
                } else {
                    r.f < b.f
                }
            }
        };
        if better {
            best = Some((i, r, norm));
        }
    }
    let (idx, r, _) = best.ok_or(Error::NoStableStart(starts.len()))?;
    if opts.require_convergence && !r.converged {
        return Err(Error::MaxIterations(opts.max_iter));
    }
    finish(template, sc, layout, r, idx)
}

/// Best general coherent controller with `n_c` internal modes.
pub fn optimize_general_coherent(n_c: usize, sc: &PlantScenario, coupling: CouplingMode, opts: &OptimizeOptions) -> Result<OptimizationResult> {
    let t = Template::new(ControllerTemplate::GeneralCoherent { n_c }).with_coupling(coupling);
    optimize(&t, sc, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub kn: f64,
    pub no_control: Option<f64>,
    pub result: std::result::Result<OptimizationResult, Error>,
}

impl SweepPoint {
    /// `no-control cost / optimized cost`.
    pub fn ratio(&self) -> Option<f64> {
        match (&self.result, self.no_control) {
            (Ok(r), Some(nc)) if r.cost > 0.0 => Some(nc / r.cost),
            _ => None,
        }
    }
}

fn pass(template: &Template, sc: &PlantScenario, grid: &[f64], order: &[usize], opts: &OptimizeOptions) -> Vec<Option<Result<OptimizationResult>>> {
    let mut out: Vec<Option<Result<OptimizationResult>>> = vec![None; grid.len()];
    let mut warm: Option<Vec<f64>> = None;
    for &i in order {
        let point = sc.with_kn(grid[i]);
        let r = match &warm {
            Some(theta) => optimize_from(template, &point, theta, opts).or_else(|_| optimize(template, &point, opts)),
            None => optimize(template, &point, opts),
        };
        warm = r.as_ref().ok().map(|r| r.theta.clone());
        out[i] = Some(r);
    }
    out
}

/// Optimizes at every `k_n` of the grid. A forward pass (multistart at the
/// first point, then warm starts) and a backward pass (multistart at the
/// last point) are run; each point keeps the better of the two.
pub fn sweep(template: &Template, sc: &PlantScenario, kn_grid: &[f64], opts: &OptimizeOptions) -> Vec<SweepPoint> {
    if kn_grid.is_empty() {
        return Vec::new();
    }
    let fwd_order: Vec<usize> = (0..kn_grid.len()).collect();
    let bwd_order: Vec<usize> = fwd_order.iter().rev().copied().collect();
    let (fwd, bwd) = rayon::join(
        || pass(template, sc, kn_grid, &fwd_order, opts),
        || pass(template, sc, kn_grid, &bwd_order, opts),
    );
    fwd.into_iter()
        .zip(bwd)
        .zip(kn_grid)
        .map(|((f, b), &kn)| {
            let f = f.expect("forward pass covers the grid");
            let b = b.expect("backward pass covers the grid");
            let result = match (f, b) {
                (Ok(a), Ok(b)) => Ok(if b.cost < a.cost - 1e-12 * a.cost.abs().max(1.0) { b } else { a }),
                (Ok(a), Err(_)) => Ok(a),
                (Err(_), Ok(b)) => Ok(b),
                (Err(e), Err(_)) => Err(e),
            };
            SweepPoint {
                kn,
                no_control: sc.with_kn(kn).no_control_cost().ok(),
                result,
            }
        })
        .collect()
}

/// Locations of parameter discontinuities in a sweep: indices `i` where the
/// change of `‖θ*‖` between points `i` and `i+1` exceeds `factor` times the
/// change over each neighbouring interval.
pub fn detect_jumps(points: &[SweepPoint], factor: f64) -> Vec<usize> {
    let norms: Vec<Option<f64>> = points
        .iter()
        .map(|p| p.result.as_ref().ok().map(|r| r.theta_norm()))
        .collect();
    let step = |i: usize| -> Option<f64> { Some((norms[i + 1]? - norms[i]?).abs()) };
    (0..points.len().saturating_sub(1))
        .filter(|&i| {
            let Some(d) = step(i) else { return false };
            let left = if i > 0 { step(i - 1) } else { None };
            let right = if i + 2 < points.len() { step(i + 1) } else { None };
            let neighbours: Vec<f64> = [left, right].into_iter().flatten().collect();
            !neighbours.is_empty() && neighbours.iter().all(|&n| d > factor * n)
        })
        .collect()
}

/// Narrows a detected jump between sweep points `i` and `i+1` to the `k_n`
/// where the two branches cost the same, by bisection in `log k_n`. Each
/// branch is followed by warm starts from its own side.
pub fn locate_crossover(
    template: &Template,
    sc: &PlantScenario,
    points: &[SweepPoint],
    i: usize,
    steps: usize,
    opts: &OptimizeOptions,
) -> Result<f64> {
    let (Some(a), Some(b)) = (points.get(i), points.get(i + 1)) else {
        return Err(Error::IndexOutOfRange {
            index: i + 1,
            len: points.len(),
        });
    };
    let (Ok(ra), Ok(rb)) = (&a.result, &b.result) else {
        return Err(Error::InvalidTemplate("jump endpoints have no optimum".into()));
    };
    let (mut lo, mut hi) = (a.kn.ln(), b.kn.ln());
    let (mut ta, mut tb) = (ra.theta.clone(), rb.theta.clone());
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let point = sc.with_kn(mid.exp());
        let left = optimize_from(template, &point, &ta, opts)?;
        let right = optimize_from(template, &point, &tb, opts)?;
        if left.cost <= right.cost {
            lo = mid;
            ta = left.theta;
        } else {
            hi = mid;
            tb = right.theta;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{oracle_cavity_cost, CavityOracleKind, CavityOracleParams};
    use approx::assert_relative_eq;

    fn quick() -> OptimizeOptions {
        OptimizeOptions {
            n_restart: 8,
            ..Default::default()
        }
    }

    #[test]
    fn two_mode_squeezing_switches_on_above_threshold() {
        let t = Template::new(ControllerTemplate::StaticTwoMode);
        let low = optimize(&t, &PlantScenario::cavity_benchmark(4.0), &quick()).unwrap();
        assert!(low.theta[0] < 1e-6, "eta = {}", low.theta[0]);
        let high = optimize(&t, &PlantScenario::cavity_benchmark(50.0), &quick()).unwrap();
        assert!(high.theta[0] > 0.1);
        let trivial = oracle_cavity_cost(CavityOracleKind::Trivial, &CavityOracleParams::benchmark(50.0)).unwrap();
        assert!(high.cost < trivial);
    }

    #[test]
    fn trivial_phase_optimum_is_zero() {
        let t = Template::new(ControllerTemplate::TrivialPhase);
        let r = optimize(&t, &PlantScenario::cavity_benchmark(10.0), &quick()).unwrap();
        assert_relative_eq!(r.cost, 2.0, max_relative = 1e-10);
        assert!(r.theta[0].abs() < 1e-4);
    }

    #[test]
    fn empty_sweep() {
        let t = Template::new(ControllerTemplate::TrivialPhase);
        assert!(sweep(&t, &PlantScenario::cavity_benchmark(1.0), &[], &quick()).is_empty());
    }

    #[test]
    fn jump_detection() {
        let mk = |kn: f64, v: f64| SweepPoint {
            kn,
            no_control: None,
            result: Ok(OptimizationResult {
                names: vec!["a".into()],
                theta: vec![v],
                cost: 1.0,
                grad_norm: 0.0,
                hessian_cond: 1.0,
                restart: 0,
                converged: true,
                iterations: 0,
                adiabatic_ratio: 1.0,
            }),
        };
        let pts: Vec<SweepPoint> = [1.0, 1.1, 1.2, 5.0, 5.1, 5.2].iter().enumerate().map(|(i, v)| mk(i as f64, *v)).collect();
        assert_eq!(detect_jumps(&pts, 5.0), vec![2]);
    }
}
