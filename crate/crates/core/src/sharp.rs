//! Sensitivity analysis for the sharp null of no effect: ratio bounds on
//! assignment probabilities, the per-set linear program for `mu_i*`, the
//! statistic `V_F` and its bounding p-value, and the plain randomization
//! p-value.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{
    factorial, stream_rng, transposition_pairs, MatchedDataset, MatchedSet, PermutationTable,
    StreamPurpose, DEFAULT_PERMUTATION_CAP, HARD_PERMUTATION_LIMIT,
};
use crate::optim::{simplex_solve, LinearProgram, LpSolution, Relation, SimplexOptions};
use crate::stats::{CompiledStatistic, SetTValues};
use crate::variance::{DesignQ, DesignSpec, HatMatrix, RankPolicy, VarianceInputs, WeightScheme};

/// Upper bounds `U(a, b)` on `p_a / p_b` for every ordered pair of
/// permutations of one set, stored on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioBounds {
    pub set_index: usize,
    pub gamma: f64,
    perms: PermutationTable,
    log_upper: Vec<f64>,
}

impl RatioBounds {
    pub fn new(doses: &[f64], perms: PermutationTable, gamma: f64) -> Self {
        let n = perms.n();
        let m = perms.len();
        let mut log_upper = vec![0.0; m * m];
        for (a, pa) in perms.iter().enumerate() {
            for (b, pb) in perms.iter().enumerate() {
                let excess: f64 = pa
                    .iter()
                    .zip(pb)
                    .map(|(&x, &y)| (doses[x] - doses[y]).max(0.0))
                    .sum();
                log_upper[a * m + b] = gamma * excess;
            }
        }
        debug_assert_eq!(log_upper.len(), factorial(n) * factorial(n));
        Self {
            set_index: perms.set_index,
            gamma,
            perms,
            log_upper,
        }
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn perms(&self) -> &PermutationTable {
        &self.perms
    }

    pub fn upper(&self, a: usize, b: usize) -> f64 {
        self.log_upper[a * self.len() + b].exp()
    }

    /// `[1 / U(b, a), U(a, b)]`, the admissible range of `p_a / p_b`.
    pub fn interval(&self, a: usize, b: usize) -> (f64, f64) {
        (1.0 / self.upper(b, a), self.upper(a, b))
    }

    /// Whether `p` respects every bound to within `tol` (relative to `p_b`).
    pub fn admits(&self, p: &[f64], tol: f64) -> bool {
        let m = self.len();
        (0..m).all(|a| (0..m).all(|b| p[a] <= self.upper(a, b) * p[b] + tol))
    }
}

pub fn ratio_bounds(set: &MatchedSet, set_index: usize, gamma: f64, cap: usize) -> Result<RatioBounds> {
    let perms = crate::model::enumerate_assignments(set, set_index, cap)?;
    Ok(RatioBounds::new(set.doses(), perms, gamma))
}

/// Which ordered pairs get an explicit ratio row in the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioRows {
    /// Pairs one transposition apart; the remaining bounds follow by chaining.
    #[default]
    Transpositions,
    AllPairs,
}

/// The program `max sum_pi p_pi t_pi` over the probability simplex cut by
/// the ratio bounds.
pub fn mu_star_program(bounds: &RatioBounds, t: &[f64], rows: RatioRows) -> LinearProgram {
    let m = bounds.len();
    let mut lp = LinearProgram::maximize(t.to_vec());
    lp.add_constraint((0..m).map(|j| (j, 1.0)).collect(), Relation::Eq, 1.0);
    add_ratio_rows(&mut lp, bounds, rows);
    lp
}

fn add_ratio_rows(lp: &mut LinearProgram, bounds: &RatioBounds, rows: RatioRows) {
    let m = bounds.len();
    let mut push = |a: usize, b: usize| {
        lp.add_constraint(vec![(a, 1.0), (b, -bounds.upper(a, b))], Relation::Le, 0.0);
    };
    match rows {
        RatioRows::Transpositions => {
            for &(a, b) in transposition_pairs(bounds.perms.n()) {
                push(a, b);
            }
        }
        RatioRows::AllPairs => {
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        push(a, b);
                    }
                }
            }
        }
    }
}

/// Solves [`mu_star_program`] through its dual
/// `min lambda` subject to
/// `lambda + sum_b y_ab - sum_c U_ca y_ca >= t_a`, `y >= 0`.
/// Writing `lambda = max t - s` puts the origin at a feasible vertex with
/// few degenerate rows, whereas the primal starts on a fully degenerate
/// homogeneous system. The primal weights are read off the dual multipliers.
pub fn solve_mu_star(bounds: &RatioBounds, t: &[f64], rows: RatioRows, opts: &SimplexOptions) -> Result<LpSolution> {
    let m = bounds.len();
    let top = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pairs: Vec<(usize, usize)> = match rows {
        RatioRows::Transpositions => transposition_pairs(bounds.perms.n()).to_vec(),
        RatioRows::AllPairs => (0..m).flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b))).collect(),
    };
    // variable 0 is s, variable 1 + k is y for pairs[k]
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        columns[a].push((1 + k, -1.0));
        columns[b].push((1 + k, bounds.upper(a, b)));
    }
    let mut objective = vec![0.0; 1 + pairs.len()];
    objective[0] = 1.0;
    let mut dual = LinearProgram::maximize(objective);
    for (a, mut row) in columns.into_iter().enumerate() {
        row.push((0, 1.0));
        dual.add_constraint(row, Relation::Le, top - t[a]);
    }
    let sol = simplex_solve(&dual, opts)?;
    let mass: f64 = sol.duals.iter().map(|v| v.max(0.0)).sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::Infeasible);
    }
    let x: Vec<f64> = sol.duals.iter().map(|v| v.max(0.0) / mass).collect();
    Ok(LpSolution {
        value: top - sol.value,
        x,
        duals: sol.x,
        pivots: sol.pivots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpOptions {
    pub lp: SimplexOptions,
    pub perm_cap: usize,
    pub ratio_rows: RatioRows,
    pub rank_policy: RankPolicy,
}

impl Default for SharpOptions {
    fn default() -> Self {
        Self {
            lp: SimplexOptions::default(),
            perm_cap: DEFAULT_PERMUTATION_CAP,
            ratio_rows: RatioRows::default(),
            rank_policy: RankPolicy::default(),
        }
    }
}

/// `mu_i*` for one set's permutation values.
pub fn mu_star_values(set: &MatchedSet, t: &SetTValues, gamma: f64, opts: &SharpOptions) -> Result<f64> {
    let first = t.t[0];
    let scale = t.t.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if t.t.iter().all(|v| (v - first).abs() <= 1e-12 * scale) {
        return Ok(first);
    }
    let perms = PermutationTable::new(t.set_index, set.len(), opts.perm_cap)?;
    let bounds = RatioBounds::new(set.doses(), perms, gamma);
    Ok(solve_mu_star(&bounds, &t.t, opts.ratio_rows, &opts.lp)?.value)
}

pub fn mu_star(
    set: &MatchedSet,
    set_index: usize,
    statistic: &CompiledStatistic,
    gamma: f64,
    opts: &SharpOptions,
) -> Result<f64> {
    let perms = crate::model::enumerate_assignments(set, set_index, opts.perm_cap)?;
    mu_star_values(set, &statistic.t_values(&perms), gamma, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSharp {
    pub set_id: String,
    pub t_obs: f64,
    pub mu_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SharpResult {
    /// Sensitivity parameter on the log scale.
    #[serde(rename = "log_gamma")]
    pub gamma: f64,
    pub V_F: f64,
    pub S2: f64,
    pub S: f64,
    pub p_bound: f64,
    pub per_set: Vec<SetSharp>,
}

impl SharpResult {
    pub fn mu_star(&self) -> Vec<f64> {
        self.per_set.iter().map(|s| s.mu_star).collect()
    }

    /// `V_{F,i} = T_i - mu_i*`.
    pub fn per_set_values(&self) -> Vec<f64> {
        self.per_set.iter().map(|s| s.t_obs - s.mu_star).collect()
    }
}

/// Everything `sharp_analysis` needs besides data and sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpConfig {
    pub options: SharpOptions,
    pub design: DesignSpec,
    pub weights: WeightScheme,
}

impl Default for SharpConfig {
    fn default() -> Self {
        Self {
            options: SharpOptions::default(),
            design: DesignSpec::Intercept,
            weights: WeightScheme::Unit,
        }
    }
}

/// Upper-tail normal p-value of `v / sqrt(s2)` with the convention that a
/// zero variance gives 0 for positive `v` and 1 otherwise.
pub fn bounding_pvalue(v: f64, s2: f64) -> f64 {
    if s2 <= 0.0 {
        return if v > 0.0 { 0.0 } else { 1.0 };
    }
    let z = v / s2.sqrt();
    Normal::standard().sf(z)
}

/// Per-set `mu_i*` at log-sensitivity `gamma`, computed in parallel.
pub fn mu_star_all(
    dataset: &MatchedDataset,
    t_values: &[SetTValues],
    gamma: f64,
    opts: &SharpOptions,
) -> Result<Vec<f64>> {
    dataset
        .sets()
        .par_iter()
        .zip(t_values)
        .map(|(set, t)| mu_star_values(set, t, gamma, opts))
        .collect()
}

/// Sharp-null values `t_{i pi}` for every set.
pub fn all_t_values(dataset: &MatchedDataset, statistic: &CompiledStatistic, cap: usize) -> Result<Vec<SetTValues>> {
    dataset
        .sets()
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(statistic.t_values(&crate::model::enumerate_assignments(s, i, cap)?)))
        .collect()
}

/// Combine per-set observed values and `mu_i*` into `V_F`, `S_F^2` and the
/// bounding p-value.
pub fn sharp_from_parts(
    dataset: &MatchedDataset,
    t_obs: &[f64],
    mu: &[f64],
    gamma: f64,
    config: &SharpConfig,
) -> Result<SharpResult> {
    let i = dataset.num_sets();
    if i < 2 {
        return Err(Error::TooFewSets { needed: 2, found: i });
    }
    let values: Vec<f64> = t_obs.iter().zip(mu).map(|(t, m)| t - m).collect();
    let v_f = values.iter().sum::<f64>() / i as f64;
    let sizes: Vec<usize> = dataset.sets().iter().map(MatchedSet::len).collect();
    let q = DesignQ::from_spec(&config.design, dataset, None)?;
    let hat = HatMatrix::new(&q, config.options.rank_policy)?;
    let s2 = hat.variance(&VarianceInputs::with_scheme(values, &sizes, &config.weights)?)?;
    let per_set = dataset
        .sets()
        .iter()
        .zip(t_obs.iter().zip(mu))
        .map(|(s, (&t, &m))| SetSharp {
            set_id: s.id().to_string(),
            t_obs: t,
            mu_star: m,
        })
        .collect();
    Ok(SharpResult {
        gamma,
        V_F: v_f,
        S2: s2,
        S: s2.sqrt(),
        p_bound: bounding_pvalue(v_f, s2),
        per_set,
    })
}

pub fn sharp_analysis(
    dataset: &MatchedDataset,
    statistic: &CompiledStatistic,
    gamma: f64,
    config: &SharpConfig,
) -> Result<SharpResult> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("log sensitivity must be finite and >= 0, got {gamma}")));
    }
    if dataset.num_sets() < 2 {
        return Err(Error::TooFewSets {
            needed: 2,
            found: dataset.num_sets(),
        });
    }
    let t = all_t_values(dataset, statistic, config.options.perm_cap)?;
    let mu = mu_star_all(dataset, &t, gamma, &config.options)?;
    let t_obs: Vec<f64> = t.iter().map(|s| s.t_observed).collect();
    sharp_from_parts(dataset, &t_obs, &mu, gamma, config)
}

/// Total number of joint assignments above which the exact p-value switches
/// to Monte Carlo.
pub const EXACT_ENUMERATION_LIMIT: f64 = 1e6;

/// `P(T >= T_obs)` under uniform within-set randomization. Exact when the
/// assignment space has at most a million points, otherwise
/// `(#{T* >= T_obs} + 1) / (draws + 1)` over `draws` uniform assignments.
pub fn exact_sharp_pvalue(dataset: &MatchedDataset, statistic: &CompiledStatistic, draws: usize, seed: u64) -> f64 {
    let sets = dataset.sets();
    let total: f64 = sets.iter().map(|s| factorial(s.len()) as f64).product();
    let observed: f64 = (0..sets.len()).map(|i| statistic.observed_set_value(i)).sum();
    let scale: f64 = (0..sets.len())
        .map(|i| {
            statistic.dose_scores(i).iter().map(|x| x.abs()).sum::<f64>()
                * statistic.outcome_scores(i).iter().fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .sum::<f64>()
        .max(1.0);
    let tol = 1e-9 * scale;
    let fits = sets.iter().all(|s| s.len() <= HARD_PERMUTATION_LIMIT);
    if fits && total <= EXACT_ENUMERATION_LIMIT {
        let per_set: Vec<Vec<f64>> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let table = PermutationTable::new(i, s.len(), HARD_PERMUTATION_LIMIT).expect("size checked");
                statistic.t_values(&table).t
            })
            .collect();
        let mut hits = 0usize;
        enumerate_sums(&per_set, 0, 0.0, &mut |sum| {
            if sum >= observed - tol {
                hits += 1;
            }
        });
        return hits as f64 / total;
    }
    let mut rng = stream_rng(seed, 0, 0, StreamPurpose::MonteCarlo);
    let mut hits = 0usize;
    let mut perm = Vec::new();
    for _ in 0..draws {
        let mut sum = 0.0;
        for (i, s) in sets.iter().enumerate() {
            perm.clear();
            perm.extend(0..s.len());
            perm.shuffle(&mut rng);
            let q1 = statistic.dose_scores(i);
            sum += perm.iter().zip(statistic.outcome_scores(i)).map(|(&p, r)| q1[p] * r).sum::<f64>();
        }
        if sum >= observed - tol {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (draws + 1) as f64
}

fn enumerate_sums(per_set: &[Vec<f64>], depth: usize, acc: f64, visit: &mut impl FnMut(f64)) {
    if depth == per_set.len() {
        visit(acc);
        return;
    }
    for &t in &per_set[depth] {
        enumerate_sums(per_set, depth + 1, acc + t, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{build_statistic, StatisticKind, StatisticSpec};

    fn set(doses: &[f64], outcomes: &[f64]) -> MatchedSet {
        MatchedSet::new("s", doses.to_vec(), outcomes.to_vec(), None).unwrap()
    }

    #[test]
    fn pair_interval() {
        let b = ratio_bounds(&set(&[0.2, 0.7], &[0.0, 0.0]), 0, 2f64.ln(), 5).unwrap();
        let (lo, hi) = b.interval(0, 1);
        assert!((lo - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((hi - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.upper(0, 0), 1.0);
    }

    #[test]
    fn zero_gamma_bounds_are_one() {
        let b = ratio_bounds(&set(&[0.1, 0.5, 0.4], &[0.0; 3]), 0, 0.0, 5).unwrap();
        assert!((0..6).all(|a| (0..6).all(|c| b.upper(a, c) == 1.0)));
    }

    #[test]
    fn shared_high_dose_unit_gives_unit_bound() {
        let b = ratio_bounds(&set(&[0.0, 0.0, 1.0], &[0.0; 3]), 0, 1.3, 5).unwrap();
        let perms = *b.perms();
        for (a, pa) in perms.iter().enumerate() {
            for (c, pc) in perms.iter().enumerate() {
                let ja = pa.iter().position(|&x| x == 2).unwrap();
                let jc = pc.iter().position(|&x| x == 2).unwrap();
                if ja == jc {
                    assert_eq!(b.upper(a, c), 1.0);
                }
            }
        }
    }

    #[test]
    fn pair_mu_star_is_eight() {
        let b = ratio_bounds(&set(&[0.0, 1.0], &[0.0; 2]), 0, 2f64.ln(), 5).unwrap();
        let sol = solve_mu_star(&b, &[10.0, 4.0], RatioRows::Transpositions, &SimplexOptions::default()).unwrap();
        assert!((sol.value - 8.0).abs() < 1e-9);
    }

    #[test]
    fn pruned_rows_match_full_program() {
        let s = set(&[0.1, 0.45, 0.9, 0.3], &[0.0; 4]);
        let b = ratio_bounds(&s, 0, 0.8, 5).unwrap();
        let t: Vec<f64> = (0..24).map(|k| ((k * 7919) % 31) as f64 - 11.0).collect();
        let opts = SimplexOptions::default();
        let a = solve_mu_star(&b, &t, RatioRows::Transpositions, &opts).unwrap();
        let full = solve_mu_star(&b, &t, RatioRows::AllPairs, &opts).unwrap();
        assert!((a.value - full.value).abs() < 1e-9);
        assert!(b.admits(&a.x, 1e-9));
    }

    fn dataset(sets: Vec<MatchedSet>) -> MatchedDataset {
        MatchedDataset::new(sets).unwrap()
    }

    #[test]
    fn constant_doses_give_unit_pvalue() {
        let d = dataset(vec![set(&[0.5, 0.5], &[1.0, 2.0]), set(&[0.2, 0.2, 0.2], &[3.0, 1.0, 0.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &d).unwrap();
        let r = sharp_analysis(&d, &stat, 0.5, &SharpConfig::default()).unwrap();
        assert_eq!(r.V_F, 0.0);
        assert_eq!(r.S2, 0.0);
        assert_eq!(r.p_bound, 1.0);
    }

    #[test]
    fn single_set_is_rejected() {
        let d = dataset(vec![set(&[0.0, 1.0], &[0.0, 1.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &d).unwrap();
        assert!(matches!(
            sharp_analysis(&d, &stat, 0.0, &SharpConfig::default()),
            Err(Error::TooFewSets { .. })
        ));
    }

    #[test]
    fn zero_gamma_reduces_to_centered_statistic() {
        let d = dataset(vec![
            set(&[0.0, 1.0], &[0.3, 1.0]),
            set(&[0.2, 0.6, 0.9], &[0.1, 0.8, 0.4]),
            set(&[0.5, 0.1], &[2.0, -1.0]),
        ]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &d).unwrap();
        let r = sharp_analysis(&d, &stat, 0.0, &SharpConfig::default()).unwrap();
        let t = all_t_values(&d, &stat, 5).unwrap();
        let centered: f64 = t.iter().map(|s| s.t_observed - s.mean()).sum::<f64>() / 3.0;
        assert!((r.V_F - centered).abs() < 1e-9);
    }

    #[test]
    fn exact_pvalues() {
        let one = dataset(vec![set(&[0.0, 1.0], &[0.0, 1.0])]);
        let id = StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap();
        let stat = build_statistic(&id, &one).unwrap();
        assert_eq!(exact_sharp_pvalue(&one, &stat, 0, 1), 0.5);

        let two = dataset(vec![set(&[0.0, 1.0], &[0.0, 1.0]), set(&[0.0, 2.0], &[0.0, 1.0])]);
        let stat = build_statistic(&id, &two).unwrap();
        assert_eq!(exact_sharp_pvalue(&two, &stat, 0, 1), 0.25);

        let flat = dataset(vec![set(&[1.0, 1.0], &[0.0, 1.0]), set(&[2.0, 2.0], &[5.0, 1.0])]);
        let stat = build_statistic(&id, &flat).unwrap();
        assert_eq!(exact_sharp_pvalue(&flat, &stat, 0, 1), 1.0);
    }

    #[test]
    fn degenerate_variance_convention() {
        assert_eq!(bounding_pvalue(0.3, 0.0), 0.0);
        assert_eq!(bounding_pvalue(0.0, 0.0), 1.0);
        assert!((bounding_pvalue(0.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
