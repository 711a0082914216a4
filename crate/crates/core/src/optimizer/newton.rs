//! Box-constrained damped Newton minimizer with finite-difference
//! derivatives, plus deterministic quasi-random multistart.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

const GRAD_STEP: f64 = 1e-5;
const HESS_STEP: f64 = 1e-5;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const MAX_ESCAPES: usize = 4;
const MIN_REL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient norm is below `grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub y: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub hessian_cond: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub struct Problem<'a, F> {
    pub f: &'a F,
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

fn clamp(y: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..y.len() {
        y[i] = y[i].clamp(lo[i], hi[i]);
    }
}

impl<'a, F: Fn(&[f64]) -> Option<f64>> Problem<'a, F> {
    fn eval(&self, y: &[f64]) -> Option<f64> {
        (self.f)(y).filter(|v| v.is_finite())
    }

    fn eval_shift(&self, y: &[f64], moves: &[(usize, f64)]) -> Option<f64> {
        let mut z = y.to_vec();
        for &(i, d) in moves {
            z[i] += d;
        }
        self.eval(&z)
    }

    /// Central differences, switching to second-order one-sided stencils at
    /// the bounds or where a neighbour is infeasible.
    pub fn gradient(&self, y: &[f64], f0: f64) -> Option<Vec<f64>> {
        self.gradient_scaled(y, f0, 1.0)
    }

    fn gradient_scaled(&self, y: &[f64], f0: f64, rel: f64) -> Option<Vec<f64>> {
        let n = y.len();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let h = rel * GRAD_STEP * (1.0 + y[i].abs());
            let up_ok = y[i] + 2.0 * h <= self.hi[i];
            let dn_ok = y[i] - 2.0 * h >= self.lo[i];
            let central = || {
                let fp = self.eval_shift(y, &[(i, h)])?;
                let fm = self.eval_shift(y, &[(i, -h)])?;
                Some((fp - fm) / (2.0 * h))
            };
            let forward = || {
                let f1 = self.eval_shift(y, &[(i, h)])?;
                let f2 = self.eval_shift(y, &[(i, 2.0 * h)])?;
                Some((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
            };
            let backward = || {
                let f1 = self.eval_shift(y, &[(i, -h)])?;
                let f2 = self.eval_shift(y, &[(i, -2.0 * h)])?;
                Some((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h))
            };
            g[i] = match (up_ok, dn_ok) {
                (true, true) => central().or_else(forward).or_else(backward)?,
                (true, false) => forward()?,
                (false, true) => backward()?,
                (false, false) => 0.0,
            };
        }
        Some(g)
    }

    /// Hessian over the `free` coordinates, stencil centre pulled inside the box.
    fn hessian(&self, y: &[f64], free: &[usize], rel: f64) -> Option<DMatrix<f64>> {
        let m = free.len();
        let mut c = y.to_vec();
        let mut h = vec![0.0; m];
        for (k, &i) in free.iter().enumerate() {
            h[k] = rel * HESS_STEP * (1.0 + y[i].abs());
            if self.hi[i] - self.lo[i] > 4.0 * h[k] {
                c[i] = c[i].clamp(self.lo[i] + h[k], self.hi[i] - h[k]);
            }
        }
        let f0 = self.eval(&c)?;
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        let mut hm = DMatrix::zeros(m, m);
        for (k, &i) in free.iter().enumerate() {
            fp[k] = self.eval_shift(&c, &[(i, h[k])])?;
            fm[k] = self.eval_shift(&c, &[(i, -h[k])])?;
            hm[(k, k)] = (fp[k] - 2.0 * f0 + fm[k]) / (h[k] * h[k]);
        }
        for a in 0..m {
            for b in (a + 1)..m {
                let (i, j) = (free[a], free[b]);
                let (hi, hj) = (h[a], h[b]);
                let fpp = self.eval_shift(&c, &[(i, hi), (j, hj)])?;
                let fpm = self.eval_shift(&c, &[(i, hi), (j, -hj)])?;
                let fmp = self.eval_shift(&c, &[(i, -hi), (j, hj)])?;
                let fmm = self.eval_shift(&c, &[(i, -hi), (j, -hj)])?;
                let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        Some(hm)
    }

    fn free_set(&self, y: &[f64], g: &[f64]) -> Vec<usize> {
        (0..y.len())
            .filter(|&i| {
                let tol = 1e-12 * (1.0 + y[i].abs());
                let at_lo = y[i] <= self.lo[i] + tol && g[i] > 0.0;
                let at_hi = y[i] >= self.hi[i] - tol && g[i] < 0.0;
                !(at_lo || at_hi) && self.hi[i] > self.lo[i]
            })
            .collect()
    }

    /// Projected Armijo backtracking along `d`.
    fn line_search(&self, y: &[f64], f0: f64, g: &[f64], d: &[f64], t0: f64) -> Option<(Vec<f64>, f64)> {
        let mut t = t0;
        for _ in 0..MAX_BACKTRACK {
            let mut z: Vec<f64> = y.iter().zip(d).map(|(a, b)| a + t * b).collect();
            clamp(&mut z, self.lo, self.hi);
            let slope: f64 = g.iter().zip(z.iter().zip(y)).map(|(gi, (zi, yi))| gi * (zi - yi)).sum();
            if slope < 0.0 {
                if let Some(fz) = self.eval(&z) {
                    if fz <= f0 + ARMIJO * slope {
                        return Some((z, fz));
                    }
                }
            }
            t *= 0.5;
        }
        None
    }

    pub fn minimize(&self, y0: &[f64], opts: &LocalOptions) -> Option<LocalResult> {
        let n = y0.len();
        let mut y = y0.to_vec();
        clamp(&mut y, self.lo, self.hi);
        let mut fy = self.eval(&y)?;
        if n == 0 {
            return Some(LocalResult {
                y,
                f: fy,
                grad_norm: 0.0,
                hessian_cond: 1.0,
                iterations: 0,
                converged: true,
            });
        }
        let mut binv = DMatrix::<f64>::identity(n, n);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut converged = false;
        let mut escapes = 0;
        let mut iterations = 0;
        let mut pg_norm = f64::INFINITY;
        // difference steps shrink when a narrow valley defeats every search direction
        let mut rel = 1.0;

        while iterations < opts.max_iter {
            iterations += 1;
            let Some(g) = self.gradient_scaled(&y, fy, rel) else { break };
            if let Some((ys, gs)) = prev.take() {
                bfgs_update(&mut binv, &y, &ys, &g, &gs);
            }
            let free = self.free_set(&y, &g);
            pg_norm = free.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
            let small = pg_norm <= opts.grad_tol * fy.abs().max(1.0);

            if small || free.is_empty() {
                // stationary: leave along a direction of negative curvature if any
                let all: Vec<usize> = (0..n).filter(|&i| self.hi[i] > self.lo[i]).collect();
                let esc = if escapes < MAX_ESCAPES && !all.is_empty() {
                    self.hessian(&y, &all, rel).and_then(|h| self.escape(&y, fy, &all, &h))
                } else {
                    None
                };
                match esc {
                    Some((z, fz)) => {
                        escapes += 1;
                        y = z;
                        fy = fz;
                        prev = None;
                        continue;
                    }
                    None => {
                        converged = true;
                        break;
                    }
                }
            }

            let newton = self.hessian(&y, &free, rel).and_then(|h| h.cholesky()).map(|ch| -ch.solve(&gf));
            let newton = newton.filter(|d| d.dot(&gf) < 0.0);
            let quasi = {
                let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| binv[(free[a], free[b])]);
                let d = -(sub * &gf);
                Some(d).filter(|d| d.dot(&gf) < 0.0)
            };
            let steepest = -&gf;
            let scatter = |df: &DVector<f64>| {
                let mut d = vec![0.0; n];
                for (k, &i) in free.iter().enumerate() {
                    d[i] = df[k];
                }
                d
            };
            let mut step = None;
            for (dir, t0) in [
                (newton, 1.0),
                (quasi, 1.0),
                (Some(steepest.clone()), (1.0 / pg_norm).min(1.0)),
            ] {
                if let Some(df) = dir {
                    if let Some(s) = self.line_search(&y, fy, &g, &scatter(&df), t0) {
                        step = Some(s);
                        break;
                    }
                }
            }
            let Some((z, fz)) = step else {
                if rel > MIN_REL_STEP {
                    rel *= 0.1;
                    prev = None;
                    binv = DMatrix::identity(n, n);
                    continue;
                }
                break;
            };
            let stalled = (fy - fz).abs() <= 1e-15 * fy.abs().max(1.0);
            prev = Some((y.clone(), g));
            y = z;
            fy = fz;
            if stalled && rel > MIN_REL_STEP {
                rel *= 0.1;
                prev = None;
                binv = DMatrix::identity(n, n);
            } else if stalled {
                // no measurable progress: accept current point
                if let Some(g2) = self.gradient_scaled(&y, fy, rel) {
                    let free = self.free_set(&y, &g2);
                    pg_norm = free.iter().map(|&i| g2[i] * g2[i]).sum::<f64>().sqrt();
                    converged = pg_norm <= opts.grad_tol * fy.abs().max(1.0);
                }
                break;
            }
        }

        let hessian_cond = self
            .gradient_scaled(&y, fy, rel)
            .map(|g| self.free_set(&y, &g))
            .and_then(|free| if free.is_empty() { None } else { self.hessian(&y, &free, rel) })
            .map(|h| {
                let ev = h.symmetric_eigenvalues();
                let (mx, mn) = ev.iter().fold((0.0_f64, f64::INFINITY), |(a, b), v| (a.max(v.abs()), b.min(v.abs())));
                if mn == 0.0 {
                    f64::INFINITY
                } else {
                    mx / mn
                }
            })
            .unwrap_or(1.0);
        Some(LocalResult {
            y,
            f: fy,
            grad_norm: pg_norm,
            hessian_cond,
            iterations,
            converged,
        })
    }

    fn escape(&self, y: &[f64], fy: f64, free: &[usize], h: &DMatrix<f64>) -> Option<(Vec<f64>, f64)> {
        let eig = h.clone().symmetric_eigen();
        let (k, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !(lmin < -1e-6 * scale && lmin < -1e-10) {
            return None;
        }
        let v = eig.eigenvectors.column(k);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for sign in [1.0, -1.0] {
            let mut t = 1.0;
            for _ in 0..40 {
                let mut z = y.to_vec();
                for (a, &i) in free.iter().enumerate() {
                    z[i] += sign * t * v[a];
                }
                clamp(&mut z, self.lo, self.hi);
                if let Some(fz) = self.eval(&z) {
                    if fz < fy - 1e-12 * fy.abs().max(1.0) {
                        if best.as_ref().is_none_or(|b| fz < b.1) {
                            best = Some((z, fz));
                        }
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        best
    }
}

fn bfgs_update(binv: &mut DMatrix<f64>, y: &[f64], y_prev: &[f64], g: &[f64], g_prev: &[f64]) {
    let s = DVector::from_iterator(y.len(), y.iter().zip(y_prev).map(|(a, b)| a - b));
    let q = DVector::from_iterator(g.len(), g.iter().zip(g_prev).map(|(a, b)| a - b));
    let sq = s.dot(&q);
    if !(sq > 1e-12 * s.norm() * q.norm()) {
        return;
    }
    let rho = 1.0 / sq;
    let n = s.len();
    let i = DMatrix::<f64>::identity(n, n);
    let left = &i - &s * q.transpose() * rho;
    let right = &i - &q * s.transpose() * rho;
    *binv = &left * &*binv * right + &s * s.transpose() * rho;
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` Halton points in the box, starting at a seed-dependent index.
pub fn halton_points(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let start = 1 + seed.wrapping_mul(10_007) % 1_000_003;
    (0..count as u64)
        .map(|k| {
            (0..lo.len())
                .map(|d| {
                    let u = radical_inverse(start + k, PRIMES[d % PRIMES.len()]);
                    // dimensions beyond the prime table reuse bases with a shift
                    let u = (u + (d / PRIMES.len()) as f64 * 0.618_033_988_749_894_9).fract();
                    lo[d] + u * (hi[d] - lo[d])
                })
                .collect()
        })
        .collect()
}

/// Runs the local solver from every start (in parallel) and returns all
/// results in start order; infeasible starts give `None`.
pub fn run_starts<F>(problem: &Problem<'_, F>, starts: &[Vec<f64>], opts: &LocalOptions) -> Vec<Option<LocalResult>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    starts.par_iter().map(|s| problem.minimize(s, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |y: &[f64]| Some((1.0 - y[0]).powi(2) + 100.0 * (y[1] - y[0] * y[0]).powi(2));
        let p = Problem {
            f: &f,
            lo: &[-2.0, -2.0],
            hi: &[2.0, 2.0],
        };
        let r = p.minimize(&[-1.2, 1.0], &LocalOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.y[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(r.y[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn active_bound_is_respected() {
        // unconstrained minimum at (-1, 0.5); box forces x >= 0
        let f = |y: &[f64]| Some((y[0] + 1.0).powi(2) + (y[1] - 0.5).powi(2));
        let p = Problem {
            f: &f,
            lo: &[0.0, -1.0],
            hi: &[1.0, 1.0],
        };
        let r = p.minimize(&[0.7, -0.3], &LocalOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.y[0], 0.0);
        assert_relative_eq!(r.y[1], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn saddle_on_the_boundary_is_escaped() {
        // f = −x² + x⁴ has a maximum at the bound x = 0 and minima at ±1/√2
        let f = |y: &[f64]| Some(-y[0] * y[0] + y[0].powi(4));
        let p = Problem {
            f: &f,
            lo: &[0.0],
            hi: &[3.0],
        };
        let r = p.minimize(&[0.0], &LocalOptions::default()).unwrap();
        assert_relative_eq!(r.y[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |y: &[f64]| if y[0] < 0.5 { None } else { Some((y[0] - 0.4).powi(2)) };
        let p = Problem {
            f: &f,
            lo: &[0.0],
            hi: &[2.0],
        };
        let r = p.minimize(&[1.5], &LocalOptions::default()).unwrap();
        assert!(r.y[0] >= 0.5 && r.y[0] < 0.5 + 1e-3);
    }

    #[test]
    fn halton_points_fill_the_box() {
        let pts = halton_points(&[-1.0, 0.0, 10.0], &[1.0, 2.0, 20.0], 64, 3);
        assert_eq!(pts.len(), 64);
        for p in &pts {
            assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 2.0 && p[2] >= 10.0 && p[2] <= 20.0);
        }
        assert_eq!(pts, halton_points(&[-1.0, 0.0, 10.0], &[1.0, 2.0, 20.0], 64, 3));
        assert_ne!(pts, halton_points(&[-1.0, 0.0, 10.0], &[1.0, 2.0, 20.0], 64, 4));
    }
}
