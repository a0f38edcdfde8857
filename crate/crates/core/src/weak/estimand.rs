//! Estimands of the form
//! `theta = N^-1 sum_i sum_j sum_k f_i^(k)(z_(k), r_ij^(k))`
//! where every catalogued `f_i^(k)` is affine in the outcome.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MatchedDataset, MatchedSet};

/// Target of a stochastic intervention: a distribution `s_(k)` over the
/// order positions of each set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intervention {
    /// Uniform over doses strictly above `c`.
    AboveThreshold(f64),
    /// Uniform over doses at or below `c`.
    BelowThreshold(f64),
    /// Uniform over all doses.
    Baseline,
    /// Explicit weights, one row per set, indexed by order position.
    Custom(Vec<Vec<f64>>),
}

impl Intervention {
    fn threshold(&self) -> Option<f64> {
        match self {
            Self::AboveThreshold(c) | Self::BelowThreshold(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EstimandKind {
    /// Binary doses in `{0, 1}`.
    Sate,
    /// Pairs only; `theta = 0` exactly when the effect ratio equals `lambda0`.
    EffectRatio { lambda0: f64 },
    Tsate { threshold: f64 },
    AvgSlope,
    StochasticContrast { first: Intervention, second: Intervention },
}

impl EstimandKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sate => "sate",
            Self::EffectRatio { .. } => "effect-ratio",
            Self::Tsate { .. } => "tsate",
            Self::AvgSlope => "avg-slope",
            Self::StochasticContrast { .. } => "stochastic-contrast",
        }
    }
}

/// What to do with sets on which an estimand is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneratePolicy {
    #[default]
    Error,
    Drop,
}

/// `f^(k)(z, r) = slope[k] * r + intercept[k]` for order positions `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCoefficients {
    pub slope: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl SetCoefficients {
    pub fn eval(&self, k: usize, r: f64) -> f64 {
        self.slope[k] * r + self.intercept[k]
    }

    pub fn negated(&self) -> Self {
        Self {
            slope: self.slope.iter().map(|x| -x).collect(),
            intercept: self.intercept.iter().map(|x| -x).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    /// Dataset indices of the sets the estimand is defined on.
    pub retained: Vec<usize>,
    /// Dataset indices of sets dropped under [`DegeneratePolicy::Drop`].
    pub dropped: Vec<usize>,
    /// Coefficients aligned with `retained`.
    pub coefficients: Vec<SetCoefficients>,
}

fn count_above(sorted: &[f64], c: f64) -> usize {
    sorted.iter().filter(|&&z| z > c).count()
}

fn threshold_check(set: &MatchedSet, sorted: &[f64], c: f64) -> Result<usize> {
    if !c.is_finite() {
        return Err(Error::InvalidConfig(format!("threshold must be finite, got {c}")));
    }
    let m = count_above(sorted, c);
    if m == 0 || m == sorted.len() {
        return Err(Error::DegenerateThreshold {
            set: set.id().to_string(),
            threshold: c,
            above: m,
            n: sorted.len(),
        });
    }
    Ok(m)
}

fn intervention_weights(
    iv: &Intervention,
    set: &MatchedSet,
    set_index: usize,
    sorted: &[f64],
) -> Result<Vec<f64>> {
    let n = sorted.len();
    match iv {
        Intervention::AboveThreshold(c) => {
            let m = threshold_check(set, sorted, *c)? as f64;
            Ok(sorted.iter().map(|&z| if z > *c { 1.0 / m } else { 0.0 }).collect())
        }
        Intervention::BelowThreshold(c) => {
            let m = threshold_check(set, sorted, *c)?;
            let below = (n - m) as f64;
            Ok(sorted.iter().map(|&z| if z <= *c { 1.0 / below } else { 0.0 }).collect())
        }
        Intervention::Baseline => Ok(vec![1.0 / n as f64; n]),
        Intervention::Custom(rows) => {
            let bad = |reason: String| Error::BadWeights {
                set: set.id().to_string(),
                reason,
            };
            let w = rows
                .get(set_index)
                .ok_or_else(|| bad(format!("no weight row for set index {set_index}")))?;
            if w.len() != n {
                return Err(bad(format!("{} weights for {n} doses", w.len())));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(bad("weights must be nonnegative and finite".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(bad(format!("weights sum to {total}")));
            }
            Ok(w.clone())
        }
    }
}

fn set_coefficients(kind: &EstimandKind, set: &MatchedSet, set_index: usize) -> Result<SetCoefficients> {
    let sorted = set.sorted_doses();
    let n = sorted.len();
    let id = || set.id().to_string();
    let zeros = vec![0.0; n];
    let (slope, intercept) = match kind {
        EstimandKind::Sate => {
            if let Some(z) = sorted.iter().find(|&&z| z != 0.0 && z != 1.0) {
                return Err(Error::InvalidDoses {
                    set: id(),
                    reason: format!("dose {z} is not binary"),
                });
            }
            let m = threshold_check(set, &sorted, 0.5)?;
            let slope = (0..n)
                .map(|k| if k >= n - m { 1.0 / m as f64 } else { -1.0 / (n - m) as f64 })
                .collect();
            (slope, zeros)
        }
        EstimandKind::EffectRatio { lambda0 } => {
            if n != 2 {
                return Err(Error::InvalidDoses {
                    set: id(),
                    reason: format!("effect ratio needs pairs, set has {n} units"),
                });
            }
            if !lambda0.is_finite() {
                return Err(Error::InvalidConfig(format!("lambda0 must be finite, got {lambda0}")));
            }
            (vec![-1.0, 1.0], vec![lambda0 * sorted[0], -lambda0 * sorted[1]])
        }
        EstimandKind::Tsate { threshold } => {
            let c = *threshold;
            let m = threshold_check(set, &sorted, c)?;
            let slope = sorted
                .iter()
                .map(|&z| if z > c { 1.0 / m as f64 } else { -1.0 / (n - m) as f64 })
                .collect();
            (slope, zeros)
        }
        EstimandKind::AvgSlope => {
            let nf = n as f64;
            let mean = sorted.iter().sum::<f64>() / nf;
            let var = sorted.iter().map(|z| z * z).sum::<f64>() / nf - mean * mean;
            let spread = sorted[n - 1] - sorted[0];
            if spread <= 0.0 || var <= 1e-14 * sorted.iter().fold(0.0f64, |m, z| m.max(z * z)) {
                return Err(Error::ConstantDoses(id()));
            }
            (sorted.iter().map(|z| (z - mean) / (nf * var)).collect(), zeros)
        }
        EstimandKind::StochasticContrast { first, second } => {
            let a = intervention_weights(first, set, set_index, &sorted)?;
            let b = intervention_weights(second, set, set_index, &sorted)?;
            (a.iter().zip(&b).map(|(x, y)| x - y).collect(), zeros)
        }
    };
    let coeffs = SetCoefficients { slope, intercept };
    for k in 1..n {
        if sorted[k] == sorted[k - 1]
            && (coeffs.slope[k] != coeffs.slope[k - 1] || coeffs.intercept[k] != coeffs.intercept[k - 1])
        {
            return Err(Error::TiedCoefficients(id()));
        }
    }
    Ok(coeffs)
}

fn droppable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateThreshold { .. } | Error::ConstantDoses(_) | Error::TiedCoefficients(_) | Error::InvalidDoses { .. }
    )
}

pub fn build_estimand(kind: EstimandKind, dataset: &MatchedDataset, policy: DegeneratePolicy) -> Result<EstimandSpec> {
    if let EstimandKind::StochasticContrast { first, second } = &kind {
        for iv in [first, second] {
            if let Intervention::Custom(rows) = iv {
                if rows.len() != dataset.num_sets() {
                    return Err(Error::BadWeights {
                        set: "*".into(),
                        reason: format!("{} weight rows for {} sets", rows.len(), dataset.num_sets()),
                    });
                }
            }
            if iv.threshold().is_some_and(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig("threshold must be finite".into()));
            }
        }
    }
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut coefficients = Vec::new();
    for (i, set) in dataset.sets().iter().enumerate() {
        match set_coefficients(&kind, set, i) {
            Ok(c) => {
                retained.push(i);
                coefficients.push(c);
            }
            Err(e) if policy == DegeneratePolicy::Drop && droppable(&e) => {
                log::info!("dropping set `{}`: {e}", set.id());
                dropped.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    if retained.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(EstimandSpec {
        kind,
        retained,
        dropped,
        coefficients,
    })
}

impl EstimandSpec {
    pub fn num_sets(&self) -> usize {
        self.retained.len()
    }

    /// Sizes of retained sets, aligned with `retained`.
    pub fn sizes(&self, dataset: &MatchedDataset) -> Vec<usize> {
        self.retained.iter().map(|&i| dataset.sets()[i].len()).collect()
    }

    /// Total units over retained sets.
    pub fn total_units(&self, dataset: &MatchedDataset) -> usize {
        self.sizes(dataset).iter().sum()
    }

    /// `V_{N,i} = sum_j f^(k(j))(Z_ij, R_ij)` for the `r`-th retained set,
    /// given that set's doses and outcomes.
    pub fn set_estimate(&self, r: usize, set: &MatchedSet) -> f64 {
        let c = &self.coefficients[r];
        set.order_index()
            .iter()
            .zip(set.outcomes())
            .map(|(&k, &y)| c.eval(k, y))
            .sum()
    }

    /// Per-set estimates on retained sets.
    pub fn set_estimates(&self, dataset: &MatchedDataset) -> Vec<f64> {
        self.retained
            .iter()
            .enumerate()
            .map(|(r, &i)| self.set_estimate(r, &dataset.sets()[i]))
            .collect()
    }

    /// `V_N = sum_i (n_i / N) V_{N,i}` with `N` over retained sets.
    pub fn estimate(&self, dataset: &MatchedDataset) -> f64 {
        let sizes = self.sizes(dataset);
        let total: usize = sizes.iter().sum();
        self.set_estimates(dataset)
            .iter()
            .zip(&sizes)
            .map(|(v, &n)| n as f64 / total as f64 * v)
            .sum()
    }

    /// `theta_i = n_i^-1 sum_j sum_k f^(k)(r_jk)` from a potential-outcome
    /// table with `table[j][k]` the outcome of unit `j` at order position `k`.
    pub fn set_theta(&self, r: usize, table: &[Vec<f64>]) -> f64 {
        let c = &self.coefficients[r];
        let n = table.len() as f64;
        table
            .iter()
            .map(|row| row.iter().enumerate().map(|(k, &y)| c.eval(k, y)).sum::<f64>())
            .sum::<f64>()
            / n
    }

    /// `theta` from potential-outcome tables indexed by dataset set index.
    pub fn theta(&self, dataset: &MatchedDataset, tables: &[Vec<Vec<f64>>]) -> f64 {
        let sizes = self.sizes(dataset);
        let total: usize = sizes.iter().sum();
        self.retained
            .iter()
            .enumerate()
            .map(|(r, &i)| sizes[r] as f64 / total as f64 * self.set_theta(r, &tables[i]))
            .sum()
    }

    /// `V_{N,i}` when unit `j` receives the dose at order position
    /// `positions[j]` and reveals `table[j][positions[j]]`.
    pub fn set_estimate_under(&self, r: usize, table: &[Vec<f64>], positions: &[usize]) -> f64 {
        let c = &self.coefficients[r];
        positions.iter().zip(table).map(|(&k, row)| c.eval(k, row[k])).sum()
    }

    /// The same estimand with every coefficient negated.
    pub fn negated(&self) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(SetCoefficients::negated).collect(),
            ..self.clone()
        }
    }
}
