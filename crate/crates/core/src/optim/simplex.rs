//! Dense two-phase tableau simplex for small linear programs
//! `max c'x` subject to linear rows and `x >= 0`.
//!
//! Right-hand sides are perturbed by small distinct amounts while pivoting so
//! that degenerate vertices, such as the origin of a homogeneous ratio
//! system, do not stall the search. The optimal basis is then re-solved with
//! the true right-hand sides and repaired with dual simplex steps if any
//! basic value went negative. Entering columns follow Dantzig's rule, with
//! Bland's rule after a degenerate pivot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` pairs.
    pub coefficients: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    fn activity(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `maximize objective . x` subject to `constraints` and `x >= 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add_constraint(&mut self, coefficients: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
        self
    }

    pub fn add_dense(&mut self, row: &[f64], relation: Relation, rhs: f64) -> &mut Self {
        let coefficients = row
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect();
        self.add_constraint(coefficients, relation, rhs)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or sign constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let sign = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        self.constraints.iter().fold(sign, |worst, c| {
            let lhs = c.activity(x);
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst.max(v)
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let finite = self.objective.iter().all(|c| c.is_finite())
            && self.constraints.iter().all(|c| {
                c.rhs.is_finite() && c.coefficients.iter().all(|&(j, a)| j < n && a.is_finite())
            });
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidConfig("linear program has non-finite or out-of-range coefficients".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexOptions {
    pub tol: f64,
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_pivots: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per constraint, in the orientation the constraint was
    /// given: `>= 0` for `Le`, `<= 0` for `Ge`, free for `Eq`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    tol: f64,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[r * w + c];
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        prow.iter_mut().for_each(|v| *v *= inv);
        prow[c] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current objective row over the
    /// columns `allowed` says may enter.
    fn optimize(&mut self, allowed: &dyn Fn(usize) -> bool, pivots: &mut usize, max_pivots: usize) -> Result<()> {
        let obj = self.obj_row();
        let rhs = self.rhs_col();
        let mut bland = false;
        loop {
            let mut enter = None;
            let mut best = -self.tol;
            for j in 0..rhs {
                if !allowed(j) {
                    continue;
                }
                let d = self.at(obj, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            // Two-pass ratio test: find the smallest ratio with a little
            // slack, then take the largest pivot among rows within it.
            let mut bound = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a > self.tol {
                    bound = bound.min((self.at(i, rhs).max(0.0) + self.tol) / a);
                }
            }
            if bound == f64::INFINITY {
                return Err(Error::Unbounded);
            }
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a <= self.tol || self.at(i, rhs).max(0.0) / a > bound {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((li, la)) => {
                        if bland {
                            self.basis[i] < self.basis[li]
                        } else {
                            a > la
                        }
                    }
                };
                if better {
                    leave = Some((i, a));
                }
            }
            let (row, _) = leave.expect("a row attains the bound");
            let ratio = self.at(row, rhs).max(0.0) / self.at(row, col);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::PivotLimit(max_pivots));
            }
            bland = ratio <= self.tol;
            self.pivot(row, col);
        }
    }

    /// Dual simplex steps from a dual-feasible basis until every basic
    /// value is nonnegative.
    fn repair(&mut self, allowed: &dyn Fn(usize) -> bool, pivots: &mut usize, max_pivots: usize) -> Result<()> {
        let obj = self.obj_row();
        let rhs = self.rhs_col();
        loop {
            let scale = (0..self.rows).map(|r| self.at(r, rhs).abs()).fold(1.0, f64::max);
            let Some(row) = (0..self.rows)
                .filter(|&r| self.at(r, rhs) < -self.tol * scale)
                .min_by(|&a, &b| self.at(a, rhs).total_cmp(&self.at(b, rhs)))
            else {
                for r in 0..self.rows {
                    let v = self.at(r, rhs).max(0.0);
                    self.data[r * self.width + rhs] = v;
                }
                return Ok(());
            };
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..rhs {
                let a = self.at(row, j);
                if !allowed(j) || a >= -self.tol {
                    continue;
                }
                let ratio = self.at(obj, j).max(0.0) / -a;
                if enter.is_none_or(|(_, best)| ratio < best) {
                    enter = Some((j, ratio));
                }
            }
            let Some((col, _)) = enter else {
                return Err(Error::Infeasible);
            };
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::PivotLimit(max_pivots));
            }
            self.pivot(row, col);
        }
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let obj = self.obj_row();
        let w = self.width;
        for j in 0..w {
            self.data[obj * w + j] = 0.0;
        }
        for (j, &c) in costs.iter().enumerate() {
            self.data[obj * w + j] = -c;
        }
        for r in 0..self.rows {
            let b = self.basis[r];
            let f = self.at(obj, b);
            if f != 0.0 {
                for j in 0..w {
                    self.data[obj * w + j] -= f * self.data[r * w + j];
                }
            }
        }
    }
}

fn perturbation(i: usize, rhs: f64) -> f64 {
    let u = ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract();
    1e-7 * (1.0 + rhs.abs()) * (0.5 + u)
}

pub fn simplex_solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.constraints.len();

    // Normalize rows to nonnegative right-hand sides.
    let mut signs = Vec::with_capacity(m);
    let mut relations = Vec::with_capacity(m);
    for c in &lp.constraints {
        let flip = c.rhs < 0.0;
        signs.push(if flip { -1.0 } else { 1.0 });
        relations.push(match (c.relation, flip) {
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (r, _) => r,
        });
    }

    // Column layout: structural | slack or surplus per inequality | artificial.
    let mut slack_col = vec![usize::MAX; m];
    let mut art_col = vec![usize::MAX; m];
    let mut next = n;
    for (i, rel) in relations.iter().enumerate() {
        if *rel != Relation::Eq {
            slack_col[i] = next;
            next += 1;
        }
    }
    let first_art = next;
    for (i, rel) in relations.iter().enumerate() {
        if *rel != Relation::Le {
            art_col[i] = next;
            next += 1;
        }
    }
    let total = next;
    let width = total + 1;

    let mut t = Tableau {
        rows: m,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
        tol: opts.tol,
    };
    for (i, c) in lp.constraints.iter().enumerate() {
        let s = signs[i];
        for &(j, a) in &c.coefficients {
            t.data[i * width + j] += s * a;
        }
        t.data[i * width + total] = s * c.rhs + perturbation(i, c.rhs);
        match relations[i] {
            Relation::Le => {
                t.data[i * width + slack_col[i]] = 1.0;
                t.basis[i] = slack_col[i];
            }
            Relation::Ge => {
                t.data[i * width + slack_col[i]] = -1.0;
                t.data[i * width + art_col[i]] = 1.0;
                t.basis[i] = art_col[i];
            }
            Relation::Eq => {
                t.data[i * width + art_col[i]] = 1.0;
                t.basis[i] = art_col[i];
            }
        }
    }

    let mut pivots = 0;
    if first_art < total {
        let mut phase1 = vec![0.0; total];
        phase1[first_art..].iter_mut().for_each(|c| *c = -1.0);
        t.set_objective(&phase1);
        t.optimize(&|_| true, &mut pivots, opts.max_pivots)?;
        let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        let slack: f64 = (0..m).map(|i| perturbation(i, lp.constraints[i].rhs)).sum();
        if t.at(t.obj_row(), total) < -opts.tol * scale - 2.0 * slack {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] < first_art {
                continue;
            }
            let pick = (0..first_art)
                .filter(|&j| t.at(r, j).abs() > opts.tol)
                .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
            if let Some(j) = pick {
                t.pivot(r, j);
                pivots += 1;
            }
        }
    }

    let mut costs = vec![0.0; total];
    costs[..n].copy_from_slice(&lp.objective);
    t.set_objective(&costs);
    t.optimize(&|j| j < first_art, &mut pivots, opts.max_pivots)?;

    // Columns that formed the initial identity basis now hold B^-1.
    let unit_col: Vec<usize> = (0..m)
        .map(|i| if relations[i] == Relation::Le { slack_col[i] } else { art_col[i] })
        .collect();
    let exact: Vec<f64> = lp.constraints.iter().zip(&signs).map(|(c, s)| s * c.rhs).collect();
    for r in 0..m {
        let v: f64 = (0..m).map(|i| t.at(r, unit_col[i]) * exact[i]).sum();
        t.data[r * width + total] = v;
    }
    t.set_objective(&costs);
    t.repair(&|j| j < first_art, &mut pivots, opts.max_pivots)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.at(r, total).max(0.0);
        }
    }
    let obj = t.obj_row();
    let duals = (0..m)
        .map(|i| {
            let y = match relations[i] {
                Relation::Le => t.at(obj, slack_col[i]),
                _ => t.at(obj, art_col[i]),
            };
            signs[i] * y
        })
        .collect();
    Ok(LpSolution {
        value: lp.objective_value(&x),
        x,
        duals,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_certificate(lp: &LinearProgram, sol: &LpSolution, tol: f64) {
        assert!(lp.max_violation(&sol.x) <= tol, "primal violation");
        let n = lp.num_vars();
        let mut aty = vec![0.0; n];
        let mut by = 0.0;
        for (c, &y) in lp.constraints().iter().zip(&sol.duals) {
            match c.relation {
                Relation::Le => assert!(y >= -tol),
                Relation::Ge => assert!(y <= tol),
                Relation::Eq => {}
            }
            for &(j, a) in &c.coefficients {
                aty[j] += a * y;
            }
            by += c.rhs * y;
        }
        for (j, (a, c)) in aty.iter().zip(lp.objective()).enumerate() {
            assert!(*a >= c - tol, "dual infeasible in column {j}");
            // complementary slackness on the sign constraints
            assert!((sol.x[j] * (a - c)).abs() <= tol);
        }
        assert!((by - sol.value).abs() <= tol, "duality gap {by} vs {}", sol.value);
    }

    #[test]
    fn two_variable_ratio_program() {
        let mut lp = LinearProgram::maximize(vec![10.0, 4.0]);
        lp.add_dense(&[1.0, -2.0], Relation::Le, 0.0)
            .add_dense(&[-2.0, 1.0], Relation::Le, 0.0)
            .add_dense(&[1.0, 1.0], Relation::Eq, 1.0);
        let sol = simplex_solve(&lp, &SimplexOptions::default()).unwrap();
        assert!((sol.value - 8.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0 / 3.0).abs() < 1e-9);
        check_certificate(&lp, &sol, 1e-8);
    }

    #[test]
    fn equal_ratio_bounds_force_uniform() {
        let c = vec![3.0, -1.0, 7.0];
        let mut lp = LinearProgram::maximize(c.clone());
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    lp.add_constraint(vec![(a, 1.0), (b, -1.0)], Relation::Le, 0.0);
                }
            }
        }
        lp.add_dense(&[1.0, 1.0, 1.0], Relation::Eq, 1.0);
        let sol = simplex_solve(&lp, &SimplexOptions::default()).unwrap();
        assert!((sol.value - 3.0).abs() < 1e-9);
        check_certificate(&lp, &sol, 1e-8);
    }

    #[test]
    fn textbook_box() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        lp.add_dense(&[1.0, 0.0], Relation::Le, 1.0)
            .add_dense(&[0.0, 1.0], Relation::Le, 1.0);
        let sol = simplex_solve(&lp, &SimplexOptions::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
        check_certificate(&lp, &sol, 1e-9);
    }

    #[test]
    fn ge_rows_and_negative_rhs() {
        // max -x - y  s.t. x + y >= 2, x - y <= -1  => x = 0.5, y = 1.5
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0]);
        lp.add_dense(&[1.0, 1.0], Relation::Ge, 2.0)
            .add_dense(&[1.0, -1.0], Relation::Le, -1.0);
        let sol = simplex_solve(&lp, &SimplexOptions::default()).unwrap();
        assert!((sol.value + 2.0).abs() < 1e-9);
        check_certificate(&lp, &sol, 1e-8);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add_dense(&[1.0], Relation::Le, 1.0).add_dense(&[1.0], Relation::Ge, 2.0);
        assert!(matches!(simplex_solve(&lp, &SimplexOptions::default()), Err(Error::Infeasible)));
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.add_dense(&[-1.0, 1.0], Relation::Le, 1.0);
        assert!(matches!(simplex_solve(&lp, &SimplexOptions::default()), Err(Error::Unbounded)));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.add_dense(&[1.0, 1.0], Relation::Eq, 1.0)
            .add_dense(&[2.0, 2.0], Relation::Eq, 2.0);
        let sol = simplex_solve(&lp, &SimplexOptions::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-9);
    }
}
