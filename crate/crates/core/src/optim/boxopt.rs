//! Multi-start projected gradient for smooth objectives on `[0, 1]^n`.
//!
//! Each start runs a spectral (Barzilai-Borwein) projected gradient
//! iteration with monotone Armijo backtracking. Starts are every vertex of
//! the box followed by seeded uniform interior points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable objective on the unit box.
pub trait BoxObjective {
    fn dim(&self) -> usize;

    /// Returns `f(u)` and writes `grad f(u)` into `grad`.
    fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, u: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(u, &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxOptions {
    /// Stop when the unit-step projected gradient has infinity norm below this.
    pub tol: f64,
    pub max_iter: usize,
    pub random_starts: usize,
    pub include_vertices: bool,
    pub seed: u64,
    pub max_dim: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            random_starts: 20,
            include_vertices: true,
            seed: 0x5eed,
            max_dim: crate::model::DEFAULT_PERMUTATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSolution {
    pub value: f64,
    pub argopt: Vec<f64>,
    /// Projected gradient norm at `argopt`.
    pub residual: f64,
    pub converged: bool,
    pub at_vertex: bool,
    pub evaluations: usize,
}

struct Oriented<'a, F: ?Sized> {
    inner: &'a F,
    sign: f64,
}

impl<F: BoxObjective + ?Sized> Oriented<'_, F> {
    fn eval(&self, u: &[f64], g: &mut [f64]) -> Result<f64> {
        let v = self.inner.value_grad(u, g);
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        g.iter_mut().for_each(|x| *x *= self.sign);
        Ok(self.sign * v)
    }
}

fn project_step(u: &[f64], g: &[f64], step: f64, out: &mut [f64]) {
    for ((o, &x), &d) in out.iter_mut().zip(u).zip(g) {
        *o = (x + step * d).clamp(0.0, 1.0) - x;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Projected gradient norm of a maximization problem at `u`.
fn residual(u: &[f64], g: &[f64], scratch: &mut [f64]) -> f64 {
    project_step(u, g, 1.0, scratch);
    inf_norm(scratch)
}

struct LocalResult {
    value: f64,
    u: Vec<f64>,
    residual: f64,
    converged: bool,
    evaluations: usize,
}

fn ascend<F: BoxObjective + ?Sized>(f: &Oriented<'_, F>, start: Vec<f64>, opts: &BoxOptions) -> Result<LocalResult> {
    let n = start.len();
    let mut u = start;
    let mut g = vec![0.0; n];
    let mut fu = f.eval(&u, &mut g)?;
    let mut evaluations = 1;
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut res = residual(&u, &g, &mut d);
    let (lambda_min, lambda_max) = (1e-12, 1e12);
    let mut lambda = if res > 0.0 { (1.0 / res).clamp(lambda_min, lambda_max) } else { 1.0 };

    for _ in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(LocalResult {
                value: fu,
                u,
                residual: res,
                converged: true,
                evaluations,
            });
        }
        project_step(&u, &g, lambda, &mut d);
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        let mut f_trial = fu;
        while t > 1e-20 {
            for ((x, &ui), &di) in trial.iter_mut().zip(&u).zip(&d) {
                *x = (ui + t * di).clamp(0.0, 1.0);
            }
            f_trial = f.eval(&trial, &mut g_trial)?;
            evaluations += 1;
            if f_trial >= fu + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || f_trial <= fu && t < 1e-12 {
            // no representable ascent left along the projected direction
            break;
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for j in 0..n {
            let s = trial[j] - u[j];
            let y = g_trial[j] - g[j];
            ss += s * s;
            sy += s * y;
        }
        lambda = if sy < 0.0 { (ss / -sy).clamp(lambda_min, lambda_max) } else { lambda_max };
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        fu = f_trial;
        res = residual(&u, &g, &mut d);
    }
    Ok(LocalResult {
        value: fu,
        converged: res <= opts.tol,
        u,
        residual: res,
        evaluations,
    })
}

fn is_vertex(u: &[f64]) -> bool {
    u.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Best local optimum over all starts.
pub fn box_optimize<F: BoxObjective + ?Sized>(objective: &F, sense: Sense, opts: &BoxOptions) -> Result<BoxSolution> {
    let n = objective.dim();
    if n > opts.max_dim {
        return Err(Error::SetTooLarge {
            set: "box problem".into(),
            n,
            cap: opts.max_dim,
        });
    }
    let f = Oriented {
        inner: objective,
        sign: match sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        },
    };
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if opts.include_vertices {
        for mask in 0..(1usize << n) {
            starts.push((0..n).map(|j| ((mask >> j) & 1) as f64).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        starts.push((0..n).map(|_| rng.random::<f64>()).collect());
    }
    if starts.is_empty() {
        starts.push(vec![0.5; n]);
    }

    let mut best: Option<LocalResult> = None;
    let mut evaluations = 0;
    for s in starts {
        let r = ascend(&f, s, opts)?;
        evaluations += r.evaluations;
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    Ok(BoxSolution {
        value: f.sign * best.value,
        at_vertex: is_vertex(&best.u),
        argopt: best.u,
        residual: best.residual,
        converged: best.converged,
        evaluations,
    })
}

/// Central finite-difference gradient, for checking analytic gradients.
pub fn finite_difference_gradient<F: BoxObjective + ?Sized>(objective: &F, u: &[f64], h: f64) -> Vec<f64> {
    let mut x = u.to_vec();
    (0..u.len())
        .map(|j| {
            x[j] = u[j] + h;
            let up = objective.value(&x);
            x[j] = u[j] - h;
            let down = objective.value(&x);
            x[j] = u[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(usize, f64);
    impl BoxObjective for Constant {
        fn dim(&self) -> usize {
            self.0
        }
        fn value_grad(&self, _u: &[f64], g: &mut [f64]) -> f64 {
            g.iter_mut().for_each(|x| *x = 0.0);
            self.1
        }
    }

    /// Concave quadratic with an interior maximizer.
    struct Bowl(Vec<f64>);
    impl BoxObjective for Bowl {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn value_grad(&self, u: &[f64], g: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for j in 0..u.len() {
                let d = u[j] - self.0[j];
                v -= (j + 1) as f64 * d * d;
                g[j] = -2.0 * (j + 1) as f64 * d;
            }
            v
        }
    }

    struct PairShare(f64);
    impl BoxObjective for PairShare {
        fn dim(&self) -> usize {
            2
        }
        fn value_grad(&self, u: &[f64], g: &mut [f64]) -> f64 {
            let a = (self.0 * u[1]).exp();
            let b = (self.0 * u[0]).exp();
            let p = a / (a + b);
            g[0] = -self.0 * p * (1.0 - p);
            g[1] = self.0 * p * (1.0 - p);
            p
        }
    }

    #[test]
    fn constant_objective() {
        let sol = box_optimize(&Constant(3, 1.0 / 6.0), Sense::Maximize, &BoxOptions::default()).unwrap();
        assert_eq!(sol.value, 1.0 / 6.0);
        assert!(sol.converged);
    }

    #[test]
    fn interior_maximizer_found() {
        let target = vec![0.3, 0.8, 0.55];
        let sol = box_optimize(&Bowl(target.clone()), Sense::Maximize, &BoxOptions::default()).unwrap();
        for (a, b) in sol.argopt.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(sol.converged && !sol.at_vertex);
    }

    #[test]
    fn clamped_maximizer() {
        let sol = box_optimize(&Bowl(vec![1.4, -0.2]), Sense::Maximize, &BoxOptions::default()).unwrap();
        assert_eq!(sol.argopt, vec![1.0, 0.0]);
        assert!(sol.at_vertex);
    }

    #[test]
    fn pair_share_extremes() {
        let obj = PairShare(2f64.ln());
        let max = box_optimize(&obj, Sense::Maximize, &BoxOptions::default()).unwrap();
        assert!((max.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(max.argopt, vec![0.0, 1.0]);
        let min = box_optimize(&obj, Sense::Minimize, &BoxOptions::default()).unwrap();
        assert!((min.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_cap() {
        let opts = BoxOptions {
            max_dim: 2,
            ..BoxOptions::default()
        };
        assert!(box_optimize(&Constant(3, 0.0), Sense::Maximize, &opts).is_err());
    }

    #[test]
    fn finite_differences_match_quadratic() {
        let obj = Bowl(vec![0.1, 0.9]);
        let u = [0.4, 0.35];
        let mut g = [0.0; 2];
        obj.value_grad(&u, &mut g);
        let fd = finite_difference_gradient(&obj, &u, 1e-6);
        for (a, b) in g.iter().zip(fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
