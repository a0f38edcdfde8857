//! Monte Carlo harness for the size of the sharp-null and weak-null
//! procedures when doses are assigned under a worst-case unmeasured
//! confounder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{maximize_expectation, BiasedAssignment};
use crate::error::{Error, Result};
use crate::model::{
    draw_categorical, stream_rng, MatchedDataset, MatchedSet, PermutationTable, StreamPurpose, DEFAULT_PERMUTATION_CAP,
};
use crate::optim::{BoxOptions, SimplexOptions};
use crate::sharp::{mu_star_values, sharp_from_parts, SharpConfig, SharpOptions};
use crate::stats::{build_statistic, RankScope, StatisticKind, StatisticSpec};
use crate::weak::{
    build_estimand, sensitivities, Correction, DegeneratePolicy, EstimandKind, EstimandSpec, Intervention, Method,
    WeakAnalysis, WeakConfig,
};

/// Univariate laws used by the generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum Dist {
    Uniform { low: f64, high: f64 },
    Beta { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    /// `sign * Exp(rate) + shift`.
    Exponential { rate: f64, sign: f64, shift: f64 },
}

impl Dist {
    pub fn unit_uniform() -> Self {
        Self::Uniform { low: 0.0, high: 1.0 }
    }

    pub fn normal(sd: f64) -> Self {
        Self::Normal { mean: 0.0, sd }
    }

    /// `Exp(rate) - 1 / rate`, centred at zero; `negated` flips the sign.
    pub fn centred_exp(rate: f64, negated: bool) -> Self {
        let sign = if negated { -1.0 } else { 1.0 };
        Self::Exponential {
            rate,
            sign,
            shift: -sign / rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Self::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            Self::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Self::Exponential { rate, sign, shift } => rate > 0.0 && rate.is_finite() && sign.is_finite() && shift.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid distribution parameters: {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
            Self::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
            Self::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Self::Exponential { rate, sign, shift } => sign * Exp::new(rate).expect("validated").sample(rng) + shift,
        }
    }
}

/// `min(2 + Poisson(mean), max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSizeLaw {
    pub poisson_mean: f64,
    pub max: usize,
}

impl SetSizeLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let extra = Poisson::new(self.poisson_mean).expect("validated").sample(rng) as usize;
        (2 + extra).min(self.max)
    }

    fn validate(&self, cap: usize) -> Result<()> {
        if !(self.poisson_mean > 0.0 && self.poisson_mean.is_finite()) || self.max < 2 || self.max > cap {
            return Err(Error::InvalidConfig(format!(
                "set size law needs a positive Poisson mean and 2 <= max <= {cap}, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Whether the population is redrawn for every replicate or held fixed
/// with only the assignment redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    #[default]
    PerRep,
    Fixed,
}

impl Population {
    fn key(self, rep: u64) -> u64 {
        match self {
            Self::PerRep => rep,
            Self::Fixed => u64::MAX,
        }
    }
}

fn check_common(sets: usize, reps: usize, gamma: f64, alpha: f64) -> Result<()> {
    if sets < 2 || reps < 1 {
        return Err(Error::InvalidConfig("need at least 2 sets and 1 replicate".into()));
    }
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sensitivity Gamma must be >= 1, got {gamma}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharpSimConfig {
    pub sets: usize,
    pub set_size: SetSizeLaw,
    pub dose: Dist,
    pub outcome: Dist,
    pub statistic: StatisticKind,
    pub dose_rank_scope: RankScope,
    /// Sensitivity on the odds scale, `Gamma >= 1`.
    pub gamma: f64,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub population: Population,
    pub box_opts: BoxOptions,
    pub lp: SimplexOptions,
}

impl Default for SharpSimConfig {
    fn default() -> Self {
        Self {
            sets: 400,
            set_size: SetSizeLaw {
                poisson_mean: 0.6,
                max: 4,
            },
            dose: Dist::unit_uniform(),
            outcome: Dist::normal(1.0),
            statistic: StatisticKind::DoubleRank,
            dose_rank_scope: RankScope::Global,
            gamma: 1.8,
            alpha: 0.1,
            reps: 500,
            seed: 20240901,
            population: Population::PerRep,
            box_opts: BoxOptions {
                random_starts: 4,
                ..BoxOptions::default()
            },
            lp: SimplexOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub reject: bool,
    pub p_value: f64,
    /// The bounding statistic, whose null worst-case expectation is zero.
    pub statistic: f64,
    pub est_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub rejection_rate: f64,
    /// Binomial standard error of `rejection_rate`.
    pub rejection_se: f64,
    pub mean_bias: f64,
    pub sd: f64,
    pub mean_est_sd: f64,
    pub records: Vec<RepRecord>,
}

impl SimSummary {
    pub fn from_records(records: Vec<RepRecord>) -> Self {
        let n = records.len() as f64;
        let rate = records.iter().filter(|r| r.reject).count() as f64 / n;
        let mean = records.iter().map(|r| r.statistic).sum::<f64>() / n;
        let var = if records.len() > 1 {
            records.iter().map(|r| (r.statistic - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            rejection_rate: rate,
            rejection_se: (rate * (1.0 - rate) / n).sqrt(),
            mean_bias: mean,
            sd: var.sqrt(),
            mean_est_sd: records.iter().map(|r| r.est_sd).sum::<f64>() / n,
            records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpSimReport {
    pub config: SharpSimConfig,
    pub summary: SimSummary,
}

fn sharp_population(config: &SharpSimConfig, key: u64) -> Result<MatchedDataset> {
    let sets = (0..config.sets)
        .map(|i| {
            let mut rng = stream_rng(config.seed, key, i as u64, StreamPurpose::Data);
            let n = config.set_size.sample(&mut rng);
            let doses = (0..n).map(|_| config.dose.sample(&mut rng)).collect();
            let outcomes = (0..n).map(|_| config.outcome.sample(&mut rng)).collect();
            MatchedSet::new(format!("{i}"), doses, outcomes, None)
        })
        .collect::<Result<Vec<_>>>()?;
    MatchedDataset::new(sets)
}

fn sharp_rep(config: &SharpSimConfig, rep: usize) -> Result<RepRecord> {
    let gamma = config.gamma.ln();
    let data = sharp_population(config, config.population.key(rep as u64))?;
    let spec = StatisticSpec::with_dose_rank_scope(config.statistic, config.dose_rank_scope)?;
    let stat = build_statistic(&spec, &data)?;
    let opts = SharpOptions {
        lp: config.lp,
        ..SharpOptions::default()
    };
    let mut t_obs = Vec::with_capacity(data.num_sets());
    let mut mu = Vec::with_capacity(data.num_sets());
    for (i, set) in data.sets().iter().enumerate() {
        let perms = PermutationTable::new(i, set.len(), DEFAULT_PERMUTATION_CAP)?;
        let t = stat.t_values(&perms);
        let model = BiasedAssignment::new(set.doses(), perms, gamma);
        let worst = maximize_expectation(model, &t.t, &config.box_opts)?;
        let mut rng = stream_rng(config.seed, rep as u64, i as u64, StreamPurpose::Assignment);
        let drawn = draw_categorical(&worst.probabilities, &mut rng);
        t_obs.push(t.t[drawn]);
        mu.push(mu_star_values(set, &t, gamma, &opts)?);
    }
    let result = sharp_from_parts(&data, &t_obs, &mu, gamma, &SharpConfig::default())?;
    Ok(RepRecord {
        rep,
        reject: result.p_bound <= config.alpha,
        p_value: result.p_bound,
        statistic: result.V_F,
        est_sd: result.S,
    })
}

pub fn run_sharp_sim(config: &SharpSimConfig) -> Result<SharpSimReport> {
    check_common(config.sets, config.reps, config.gamma, config.alpha)?;
    config.set_size.validate(DEFAULT_PERMUTATION_CAP)?;
    config.dose.validate()?;
    config.outcome.validate()?;
    let records = (0..config.reps)
        .into_par_iter()
        .map(|rep| sharp_rep(config, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(SharpSimReport {
        config: config.clone(),
        summary: SimSummary::from_records(records),
    })
}

/// Estimand targeted by the weak-null generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimEstimand {
    /// Above-threshold intervention minus the uniform baseline.
    #[default]
    AboveVsBaseline,
    Tsate,
}

impl SimEstimand {
    fn kind(self, threshold: f64) -> EstimandKind {
        match self {
            Self::AboveVsBaseline => EstimandKind::StochasticContrast {
                first: Intervention::AboveThreshold(threshold),
                second: Intervention::Baseline,
            },
            Self::Tsate => EstimandKind::Tsate { threshold },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeakSimConfig {
    pub sets: usize,
    pub set_size: SetSizeLaw,
    pub dose: Dist,
    pub effect: Dist,
    /// Noise at the lowest dose position.
    pub noise_min_dose: Dist,
    pub noise: Dist,
    /// Multiply the lowest-dose noise by `+B_i` (`1.0`), `-B_i` (`-1.0`), or
    /// leave it alone (`0.0`), where `B_i` is the sign of the set's effect.
    pub effect_sign_coupling: f64,
    pub threshold: f64,
    pub estimand: SimEstimand,
    /// Sensitivity on the odds scale, `Gamma >= 1`.
    pub gamma: f64,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub population: Population,
    pub box_opts: BoxOptions,
    pub max_redraws: usize,
}

impl Default for WeakSimConfig {
    fn default() -> Self {
        Self {
            sets: 250,
            set_size: SetSizeLaw {
                poisson_mean: 1.0,
                max: 5,
            },
            dose: Dist::Beta { a: 2.0, b: 5.0 },
            effect: Dist::normal(1.0),
            noise_min_dose: Dist::normal(5.0),
            noise: Dist::normal(1.0),
            effect_sign_coupling: 1.0,
            threshold: 0.5,
            estimand: SimEstimand::AboveVsBaseline,
            gamma: 1.0,
            alpha: 0.1,
            reps: 500,
            seed: 20240902,
            population: Population::PerRep,
            box_opts: BoxOptions {
                random_starts: 4,
                ..BoxOptions::default()
            },
            max_redraws: 100_000,
        }
    }
}

/// A generated weak-null population: doses plus the full table of
/// potential outcomes `tables[i][j][k]` of unit `j` at order position `k`.
#[derive(Debug, Clone)]
pub struct WeakPopulation {
    pub doses: MatchedDataset,
    pub tables: Vec<Vec<Vec<f64>>>,
}

fn draw_doses(config: &WeakSimConfig, rng: &mut ChaCha8Rng, n: usize, set: usize) -> Result<Vec<f64>> {
    for _ in 0..config.max_redraws {
        let z: Vec<f64> = (0..n).map(|_| config.dose.sample(rng)).collect();
        let above = z.iter().filter(|&&x| x > config.threshold).count();
        if above > 0 && above < n {
            return Ok(z);
        }
    }
    Err(Error::InvalidConfig(format!(
        "set {set}: no dose draw straddled the threshold after {} attempts",
        config.max_redraws
    )))
}

pub fn weak_population(config: &WeakSimConfig, key: u64) -> Result<WeakPopulation> {
    let mut sets = Vec::with_capacity(config.sets);
    let mut tables = Vec::with_capacity(config.sets);
    for i in 0..config.sets {
        let mut rng = stream_rng(config.seed, key, i as u64, StreamPurpose::Data);
        let n = config.set_size.sample(&mut rng);
        let mut dose_rng = stream_rng(config.seed, key, i as u64, StreamPurpose::Doses);
        let doses = draw_doses(config, &mut dose_rng, n, i)?;
        let beta = config.effect.sample(&mut rng);
        let b = if beta >= 0.0 { 1.0 } else { -1.0 };
        let coupling = if config.effect_sign_coupling == 0.0 {
            1.0
        } else {
            config.effect_sign_coupling.signum() * b
        };
        let mut sorted = doses.clone();
        sorted.sort_by(f64::total_cmp);
        let table: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                sorted
                    .iter()
                    .enumerate()
                    .map(|(k, z)| {
                        let eps = if k == 0 {
                            coupling * config.noise_min_dose.sample(&mut rng)
                        } else {
                            config.noise.sample(&mut rng)
                        };
                        eps + z * beta
                    })
                    .collect()
            })
            .collect();
        // outcomes are placeholders until an assignment reveals them
        sets.push(MatchedSet::new(format!("{i}"), doses, vec![0.0; n], None)?);
        tables.push(table);
    }
    Ok(WeakPopulation {
        doses: MatchedDataset::new(sets)?,
        tables,
    })
}

impl WeakPopulation {
    /// Order position received by each unit under permutation `perm` of set `i`.
    fn positions(&self, i: usize, perm: &[usize]) -> Vec<usize> {
        let order = self.doses.sets()[i].order_index();
        perm.iter().map(|&src| order[src]).collect()
    }

    /// The observed dataset when set `i` is assigned permutation `assigned[i]`.
    pub fn observe(&self, assigned: &[&[usize]]) -> Result<MatchedDataset> {
        let sets = self
            .doses
            .sets()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let perm = assigned[i];
                let pos = self.positions(i, perm);
                let outcomes = pos.iter().zip(&self.tables[i]).map(|(&k, row)| row[k]).collect();
                s.with_permuted_doses(perm).with_outcomes(outcomes)
            })
            .collect::<Result<Vec<_>>>()?;
        MatchedDataset::new(sets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSimReport {
    pub config: WeakSimConfig,
    pub vn: SimSummary,
    pub vc: SimSummary,
}

fn weak_config(method: Method, box_opts: &BoxOptions) -> WeakConfig {
    WeakConfig {
        method,
        box_opts: *box_opts,
        ..WeakConfig::default()
    }
}

fn weak_method_rep(
    config: &WeakSimConfig,
    pop: &WeakPopulation,
    estimand: &EstimandSpec,
    theta: f64,
    method: Method,
    rep: usize,
) -> Result<RepRecord> {
    let gamma = config.gamma.ln();
    let cfg = weak_config(method, &config.box_opts);
    let sens = sensitivities(&pop.doses, estimand, gamma, &cfg)?;
    let purpose = match method {
        Method::Vn => StreamPurpose::Assignment,
        Method::Vc => StreamPurpose::AssignmentAlt,
    };
    let mut assigned: Vec<&'static [usize]> = Vec::with_capacity(pop.doses.num_sets());
    for (i, set) in pop.doses.sets().iter().enumerate() {
        let r = i;
        let perms = PermutationTable::new(i, set.len(), DEFAULT_PERMUTATION_CAP)?;
        let correction = Correction::for_method(method, &sens[r], set.len());
        let values: Vec<f64> = perms
            .iter()
            .map(|p| {
                let v = estimand.set_estimate_under(r, &pop.tables[i], &pop.positions(i, p));
                correction.apply(v - theta)
            })
            .collect();
        let worst = maximize_expectation(BiasedAssignment::new(set.doses(), perms, gamma), &values, &config.box_opts)?;
        let mut rng = stream_rng(config.seed, rep as u64, i as u64, purpose);
        assigned.push(perms.get(draw_categorical(&worst.probabilities, &mut rng)));
    }
    let observed = pop.observe(&assigned)?;
    let analysis = WeakAnalysis::with_sensitivity(&observed, estimand, gamma, &cfg, sens)?;
    let result = analysis.test(theta)?;
    Ok(RepRecord {
        rep,
        reject: result.p_bound <= config.alpha,
        p_value: result.p_bound,
        statistic: result.V_bounded,
        est_sd: result.S_bounded,
    })
}

fn weak_setup(config: &WeakSimConfig, rep: usize) -> Result<(WeakPopulation, EstimandSpec, f64)> {
    let pop = weak_population(config, config.population.key(rep as u64))?;
    let estimand = build_estimand(config.estimand.kind(config.threshold), &pop.doses, DegeneratePolicy::Error)?;
    let theta = estimand.theta(&pop.doses, &pop.tables);
    Ok((pop, estimand, theta))
}

fn validate_weak(config: &WeakSimConfig) -> Result<()> {
    check_common(config.sets, config.reps, config.gamma, config.alpha)?;
    config.set_size.validate(DEFAULT_PERMUTATION_CAP)?;
    for d in [&config.dose, &config.effect, &config.noise_min_dose, &config.noise] {
        d.validate()?;
    }
    if !config.threshold.is_finite() || config.max_redraws == 0 {
        return Err(Error::InvalidConfig("threshold must be finite and max_redraws positive".into()));
    }
    Ok(())
}

pub fn run_weak_sim(config: &WeakSimConfig) -> Result<WeakSimReport> {
    validate_weak(config)?;
    let pairs = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let (pop, estimand, theta) = weak_setup(config, rep)?;
            let vn = weak_method_rep(config, &pop, &estimand, theta, Method::Vn, rep)?;
            let vc = weak_method_rep(config, &pop, &estimand, theta, Method::Vc, rep)?;
            Ok((vn, vc))
        })
        .collect::<Result<Vec<_>>>()?;
    let (vn, vc): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(WeakSimReport {
        config: config.clone(),
        vn: SimSummary::from_records(vn),
        vc: SimSummary::from_records(vc),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: WeakSimConfig,
    pub level: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub reps: usize,
}

/// Coverage of the two-sided `1 - alpha` interval for the true estimand
/// under uniform assignment.
pub fn run_ci_coverage(config: &WeakSimConfig) -> Result<CoverageReport> {
    validate_weak(config)?;
    let results = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let (pop, estimand, theta) = weak_setup(config, rep)?;
            let assigned: Vec<&'static [usize]> = pop
                .doses
                .sets()
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let perms = PermutationTable::new(i, s.len(), DEFAULT_PERMUTATION_CAP)?;
                    let mut rng = stream_rng(config.seed, rep as u64, i as u64, StreamPurpose::Assignment);
                    Ok(perms.get(rng.random_range(0..perms.len())))
                })
                .collect::<Result<_>>()?;
            let observed = pop.observe(&assigned)?;
            let analysis = WeakAnalysis::new(&observed, &estimand, 0.0, &WeakConfig::default())?;
            let iv = analysis.interval(config.alpha)?;
            Ok((iv.contains(theta), iv.width()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    Ok(CoverageReport {
        config: config.clone(),
        level: 1.0 - config.alpha,
        coverage: results.iter().filter(|r| r.0).count() as f64 / n,
        mean_width: results.iter().map(|r| r.1).sum::<f64>() / n,
        reps: results.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_population_respects_bounds() {
        let cfg = WeakSimConfig {
            sets: 300,
            ..WeakSimConfig::default()
        };
        let pop = weak_population(&cfg, 0).unwrap();
        for (s, t) in pop.doses.sets().iter().zip(&pop.tables) {
            assert!((2..=5).contains(&s.len()));
            let above = s.doses().iter().filter(|&&z| z > 0.5).count();
            assert!(above > 0 && above < s.len());
            assert_eq!(t.len(), s.len());
        }
    }

    #[test]
    fn sharp_sizes_truncated() {
        let cfg = SharpSimConfig {
            sets: 500,
            ..SharpSimConfig::default()
        };
        let d = sharp_population(&cfg, 3).unwrap();
        assert!(d.sets().iter().all(|s| (2..=4).contains(&s.len())));
    }

    #[test]
    fn single_replicate_is_deterministic() {
        let cfg = SharpSimConfig {
            sets: 30,
            reps: 1,
            ..SharpSimConfig::default()
        };
        let a = run_sharp_sim(&cfg).unwrap();
        let b = run_sharp_sim(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.records.len(), 1);
    }

    #[test]
    fn observe_reveals_table_entries() {
        let cfg = WeakSimConfig {
            sets: 5,
            ..WeakSimConfig::default()
        };
        let pop = weak_population(&cfg, 1).unwrap();
        let ids: Vec<&[usize]> = pop.doses.sets().iter().map(|s| &crate::model::permutations(s.len())[..s.len()]).collect();
        let obs = pop.observe(&ids).unwrap();
        for (i, s) in obs.sets().iter().enumerate() {
            for (j, &k) in s.order_index().iter().enumerate() {
                assert_eq!(s.outcomes()[j], pop.tables[i][j][k]);
            }
        }
    }

    #[test]
    fn centred_exponential_has_zero_mean() {
        let d = Dist::centred_exp(0.2, true);
        let mut rng = stream_rng(1, 0, 0, StreamPurpose::Data);
        let m: f64 = (0..200_000).map(|_| d.sample(&mut rng)).sum::<f64>() / 200_000.0;
        assert!(m.abs() < 0.05, "{m}");
    }
}
