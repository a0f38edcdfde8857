//! Within-set assignment probabilities under the dose sensitivity model,
//! `p_pi(u) ∝ exp(gamma * sum_j z_pi(j) u_j)` for an unmeasured confounder
//! `u` in `[0, 1]^n`.

use crate::error::Result;
use crate::model::PermutationTable;
use crate::optim::{box_optimize, BoxObjective, BoxOptions, Sense};

#[derive(Debug, Clone, Copy)]
pub struct BiasedAssignment<'a> {
    doses: &'a [f64],
    perms: PermutationTable,
    gamma: f64,
}

impl<'a> BiasedAssignment<'a> {
    /// `doses` are indexed by unit; permutation `pi` hands unit `j` the dose
    /// `doses[pi[j]]`.
    pub fn new(doses: &'a [f64], perms: PermutationTable, gamma: f64) -> Self {
        debug_assert_eq!(doses.len(), perms.n());
        Self { doses, perms, gamma }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn perms(&self) -> &PermutationTable {
        &self.perms
    }

    pub fn doses(&self) -> &[f64] {
        self.doses
    }

    pub fn dim(&self) -> usize {
        self.doses.len()
    }

    /// Normalized probabilities written into `out`.
    pub fn probabilities_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let flat = self.perms.flat();
        let mut max = f64::NEG_INFINITY;
        for (o, p) in out.iter_mut().zip(flat.chunks_exact(n)) {
            let s: f64 = p.iter().zip(u).map(|(&src, &uj)| self.doses[src] * uj).sum();
            *o = self.gamma * s;
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    pub fn probabilities(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.perms.len()];
        self.probabilities_into(u, &mut out);
        out
    }

    pub fn expectation(&self, values: &[f64], u: &[f64]) -> f64 {
        self.probabilities(u).iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// `u -> E_u[v]` for per-permutation values `v`.
pub struct ExpectedValue<'a> {
    model: BiasedAssignment<'a>,
    values: &'a [f64],
    probs: std::cell::RefCell<Vec<f64>>,
}

impl<'a> ExpectedValue<'a> {
    pub fn new(model: BiasedAssignment<'a>, values: &'a [f64]) -> Self {
        let probs = std::cell::RefCell::new(vec![0.0; model.perms.len()]);
        Self { model, values, probs }
    }
}

impl BoxObjective for ExpectedValue<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut probs = self.probs.borrow_mut();
        self.model.probabilities_into(u, &mut probs);
        let mean: f64 = probs.iter().zip(self.values).map(|(p, v)| p * v).sum();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.dim();
        for ((p, v), perm) in probs.iter().zip(self.values).zip(self.model.perms.flat().chunks_exact(n)) {
            let w = p * (v - mean);
            for (g, &src) in grad.iter_mut().zip(perm) {
                *g += w * self.model.doses[src];
            }
        }
        grad.iter_mut().for_each(|g| *g *= self.model.gamma);
        mean
    }
}

/// `u -> p_identity(u)`, the probability of the first permutation.
pub struct IdentityProbability<'a> {
    model: BiasedAssignment<'a>,
    probs: std::cell::RefCell<Vec<f64>>,
}

impl<'a> IdentityProbability<'a> {
    pub fn new(model: BiasedAssignment<'a>) -> Self {
        let probs = std::cell::RefCell::new(vec![0.0; model.perms.len()]);
        Self { model, probs }
    }
}

impl BoxObjective for IdentityProbability<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut probs = self.probs.borrow_mut();
        self.model.probabilities_into(u, &mut probs);
        let n = self.dim();
        for (g, &src) in grad.iter_mut().zip(self.model.perms.get(0)) {
            *g = self.model.doses[src];
        }
        for (p, perm) in probs.iter().zip(self.model.perms.flat().chunks_exact(n)) {
            for (g, &src) in grad.iter_mut().zip(perm) {
                *g -= p * self.model.doses[src];
            }
        }
        let p0 = probs[0];
        grad.iter_mut().for_each(|g| *g *= self.model.gamma * p0);
        p0
    }
}

/// Confounder allocation maximizing `E_u[v]` and the distribution it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub u: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub expectation: f64,
    pub converged: bool,
}

pub fn maximize_expectation(model: BiasedAssignment<'_>, values: &[f64], opts: &BoxOptions) -> Result<WorstCase> {
    let n = model.perms.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let spread = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if model.gamma == 0.0 || spread == 0.0 {
        let u = vec![0.0; model.dim()];
        let probabilities = model.probabilities(&u);
        return Ok(WorstCase {
            expectation: model.expectation(values, &u),
            u,
            probabilities,
            converged: true,
        });
    }
    // The maximizer is invariant to positive affine maps of v; solve on an O(1) scale.
    let scaled: Vec<f64> = values.iter().map(|v| (v - mean) / spread).collect();
    let sol = box_optimize(&ExpectedValue::new(model, &scaled), Sense::Maximize, opts)?;
    let probabilities = model.probabilities(&sol.argopt);
    let expectation = probabilities.iter().zip(values).map(|(p, v)| p * v).sum();
    Ok(WorstCase {
        u: sol.argopt,
        probabilities,
        expectation,
        converged: sol.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PermutationTable;
    use crate::optim::finite_difference_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_at_zero_gamma() {
        let doses = [0.1, 0.5, 0.9];
        let m = BiasedAssignment::new(&doses, PermutationTable::new(0, 3, 5).unwrap(), 0.0);
        let p = m.probabilities(&[0.3, 0.2, 0.9]);
        assert!(p.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn pair_worst_case_closed_form() {
        let doses = [0.0, 1.0];
        let gamma = 1.8f64.ln();
        let m = BiasedAssignment::new(&doses, PermutationTable::new(0, 2, 5).unwrap(), gamma);
        let wc = maximize_expectation(m, &[5.0, 1.0], &BoxOptions::default()).unwrap();
        assert!((wc.probabilities[0] - 1.8 / 2.8).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let doses: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let values: Vec<f64> = (0..24).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect();
        let m = BiasedAssignment::new(&doses, PermutationTable::new(0, 4, 5).unwrap(), 0.9);
        let ev = ExpectedValue::new(m, &values);
        let ip = IdentityProbability::new(m);
        for _ in 0..10 {
            let u: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 0.8 + 0.1).collect();
            for obj in [&ev as &dyn BoxObjective, &ip] {
                let mut g = vec![0.0; 4];
                obj.value_grad(&u, &mut g);
                let fd = finite_difference_gradient(obj, &u, 1e-6);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
                }
            }
        }
    }
}
