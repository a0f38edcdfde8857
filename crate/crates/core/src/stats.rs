//! Sum-of-products test statistics `T = I^-1 sum_i T_i`, with
//! `T_i = sum_j q1(Z_ij) q2(R_ij)` for a dose score `q1` and an outcome
//! score `q2`.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MatchedDataset, MatchedSet, PermutationTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    PermutationalT,
    Wilcoxon,
    DoubleRank,
    Custom,
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perm-t" | "permutational-t" | "t" => Ok(Self::PermutationalT),
            "wilcoxon" => Ok(Self::Wilcoxon),
            "double-rank" => Ok(Self::DoubleRank),
            "custom" => Ok(Self::Custom),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankScope {
    #[default]
    Global,
    WithinSet,
}

/// Tabulated `value -> score` map for custom statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    entries: Vec<(f64, f64)>,
}

impl ScoreTable {
    pub fn new(mut entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.iter().any(|(v, s)| !v.is_finite() || !s.is_finite()) {
            return Err(Error::InvalidConfig("score table holds non-finite entries".into()));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { entries })
    }

    /// Reads a two-column `value,score` CSV with a header row.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let mut entries = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |col: usize| -> Result<f64> {
                let raw = rec.get(col).unwrap_or("");
                raw.parse().map_err(|_| Error::Parse {
                    row: row + 1,
                    column: if col == 0 { "value" } else { "score" }.into(),
                    value: raw.into(),
                })
            };
            entries.push((parse(0)?, parse(1)?));
        }
        Self::new(entries)
    }

    pub fn lookup(&self, value: f64) -> Result<f64> {
        let tol = 1e-9 * value.abs().max(1.0);
        let i = self.entries.partition_point(|(v, _)| *v < value - tol);
        match self.entries.get(i) {
            Some(&(v, s)) if (v - value).abs() <= tol => Ok(s),
            _ => Err(Error::MissingScore(value)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFn {
    Identity,
    Rank(RankScope),
    Table(ScoreTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub kind: StatisticKind,
    pub dose_score: ScoreFn,
    pub outcome_score: ScoreFn,
}

impl StatisticSpec {
    /// Standard statistic for a named kind; dose ranks of the double-rank
    /// statistic are taken over the whole dataset.
    pub fn from_kind(kind: StatisticKind) -> Result<Self> {
        Self::with_dose_rank_scope(kind, RankScope::Global)
    }

    pub fn with_dose_rank_scope(kind: StatisticKind, scope: RankScope) -> Result<Self> {
        let (dose_score, outcome_score) = match kind {
            StatisticKind::PermutationalT => (ScoreFn::Identity, ScoreFn::Identity),
            StatisticKind::Wilcoxon => (ScoreFn::Identity, ScoreFn::Rank(RankScope::Global)),
            StatisticKind::DoubleRank => (ScoreFn::Rank(scope), ScoreFn::Rank(RankScope::Global)),
            StatisticKind::Custom => {
                return Err(Error::InvalidConfig(
                    "custom statistics need explicit score functions".into(),
                ))
            }
        };
        Ok(Self {
            kind,
            dose_score,
            outcome_score,
        })
    }

    pub fn custom(dose_score: ScoreFn, outcome_score: ScoreFn) -> Self {
        Self {
            kind: StatisticKind::Custom,
            dose_score,
            outcome_score,
        }
    }
}

/// Count of outcomes in the dataset that are `<= r`.
pub fn outcome_rank(dataset: &MatchedDataset, r: f64) -> f64 {
    dataset.all_outcomes().filter(|&x| r >= x).count() as f64
}

/// Sorted sample supporting `count(x <= r)` queries in `O(log n)`.
struct RankIndex(Vec<f64>);

impl RankIndex {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    fn rank(&self, r: f64) -> f64 {
        self.0.partition_point(|&x| x <= r) as f64
    }
}

/// A statistic with every per-unit score precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledStatistic {
    spec: StatisticSpec,
    /// Score of each unit's observed dose, per set.
    dose_scores: Vec<Vec<f64>>,
    outcome_scores: Vec<Vec<f64>>,
}

pub fn build_statistic(spec: &StatisticSpec, dataset: &MatchedDataset) -> Result<CompiledStatistic> {
    let dose_index = RankIndex::new(dataset.all_doses());
    let outcome_index = RankIndex::new(dataset.all_outcomes());
    let score = |f: &ScoreFn, values: &[f64], global: &RankIndex| -> Result<Vec<f64>> {
        match f {
            ScoreFn::Identity => Ok(values.to_vec()),
            ScoreFn::Rank(RankScope::Global) => Ok(values.iter().map(|&v| global.rank(v)).collect()),
            ScoreFn::Rank(RankScope::WithinSet) => {
                let local = RankIndex::new(values.iter().copied());
                Ok(values.iter().map(|&v| local.rank(v)).collect())
            }
            ScoreFn::Table(t) => values.iter().map(|&v| t.lookup(v)).collect(),
        }
    };
    let mut dose_scores = Vec::with_capacity(dataset.num_sets());
    let mut outcome_scores = Vec::with_capacity(dataset.num_sets());
    for set in dataset.sets() {
        dose_scores.push(score(&spec.dose_score, set.doses(), &dose_index)?);
        outcome_scores.push(score(&spec.outcome_score, set.outcomes(), &outcome_index)?);
    }
    Ok(CompiledStatistic {
        spec: spec.clone(),
        dose_scores,
        outcome_scores,
    })
}

impl CompiledStatistic {
    pub fn spec(&self) -> &StatisticSpec {
        &self.spec
    }

    pub fn num_sets(&self) -> usize {
        self.dose_scores.len()
    }

    pub fn dose_scores(&self, set_index: usize) -> &[f64] {
        &self.dose_scores[set_index]
    }

    pub fn outcome_scores(&self, set_index: usize) -> &[f64] {
        &self.outcome_scores[set_index]
    }

    /// `T_i` at the observed assignment.
    pub fn observed_set_value(&self, set_index: usize) -> f64 {
        self.dose_scores[set_index]
            .iter()
            .zip(&self.outcome_scores[set_index])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `t_{i pi}` for every permutation of the table.
    pub fn t_values(&self, perms: &PermutationTable) -> SetTValues {
        let i = perms.set_index;
        let q1 = &self.dose_scores[i];
        let q2 = &self.outcome_scores[i];
        let t: Vec<f64> = perms
            .iter()
            .map(|p| p.iter().zip(q2).map(|(&src, r)| q1[src] * r).sum())
            .collect();
        let t_observed = t[0];
        SetTValues {
            set_index: i,
            t,
            t_observed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTValues {
    pub set_index: usize,
    pub t: Vec<f64>,
    pub t_observed: f64,
}

impl SetTValues {
    pub fn mean(&self) -> f64 {
        self.t.iter().sum::<f64>() / self.t.len() as f64
    }
}

/// Per-permutation values of `T_i` for one set (sharp null: outcomes fixed).
pub fn t_values(_set: &MatchedSet, statistic: &CompiledStatistic, perms: &PermutationTable) -> SetTValues {
    statistic.t_values(perms)
}

/// Observed `T = I^-1 sum_i T_i`.
pub fn observed_t(statistic: &CompiledStatistic) -> f64 {
    let i = statistic.num_sets();
    (0..i).map(|s| statistic.observed_set_value(s)).sum::<f64>() / i as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::enumerate_assignments;

    fn dataset(sets: &[(&[f64], &[f64])]) -> MatchedDataset {
        MatchedDataset::new(
            sets.iter()
                .enumerate()
                .map(|(i, (z, r))| MatchedSet::new(i.to_string(), z.to_vec(), r.to_vec(), None).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn outcome_rank_counts_le() {
        let ds = dataset(&[(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0])]);
        assert_eq!(outcome_rank(&ds, 2.0), 2.0);
        assert_eq!(outcome_rank(&ds, 0.5), 0.0);
        let tied = dataset(&[(&[0.0, 1.0], &[5.0, 5.0])]);
        assert_eq!(outcome_rank(&tied, 5.0), 2.0);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::Wilcoxon).unwrap(), &tied).unwrap();
        assert_eq!(stat.outcome_scores(0), &[2.0, 2.0]);
    }

    #[test]
    fn kinds_map_to_scores() {
        let t = StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap();
        assert_eq!((t.dose_score, t.outcome_score), (ScoreFn::Identity, ScoreFn::Identity));
        let w = StatisticSpec::from_kind(StatisticKind::Wilcoxon).unwrap();
        assert_eq!(w.dose_score, ScoreFn::Identity);
        assert_eq!(w.outcome_score, ScoreFn::Rank(RankScope::Global));
        let d = StatisticSpec::from_kind(StatisticKind::DoubleRank).unwrap();
        assert_eq!(d.dose_score, ScoreFn::Rank(RankScope::Global));
        assert!(matches!("median".parse::<StatisticKind>(), Err(Error::UnknownKind(_))));
        assert_eq!("perm-t".parse::<StatisticKind>().unwrap(), StatisticKind::PermutationalT);
    }

    #[test]
    fn pair_t_values() {
        let ds = dataset(&[(&[0.0, 1.0], &[0.0, 1.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &ds).unwrap();
        let perms = enumerate_assignments(&ds.sets()[0], 0, 5).unwrap();
        let tv = stat.t_values(&perms);
        assert_eq!(tv.t, vec![1.0, 0.0]);
        assert_eq!(tv.t_observed, 1.0);
    }

    #[test]
    fn rearrangement_extremes() {
        let ds = dataset(&[(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &ds).unwrap();
        let tv = stat.t_values(&enumerate_assignments(&ds.sets()[0], 0, 5).unwrap());
        let max = tv.t.iter().cloned().fold(f64::MIN, f64::max);
        let min = tv.t.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!((max, min), (14.0, 10.0));
        assert_eq!(observed_t(&stat), 14.0);
    }

    #[test]
    fn constant_doses_give_constant_t() {
        let ds = dataset(&[(&[2.0, 2.0, 2.0], &[1.0, 5.0, -3.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::DoubleRank).unwrap(), &ds).unwrap();
        let tv = stat.t_values(&enumerate_assignments(&ds.sets()[0], 0, 5).unwrap());
        assert!(tv.t.iter().all(|&t| t == tv.t[0]));
    }

    #[test]
    fn observed_t_averages_sets() {
        let ds = dataset(&[(&[0.0, 1.0], &[0.0, 2.0]), (&[0.0, 2.0], &[1.0, 2.0])]);
        let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::PermutationalT).unwrap(), &ds).unwrap();
        assert_eq!(observed_t(&stat), 3.0);
    }

    #[test]
    fn within_set_dose_ranks() {
        let ds = dataset(&[(&[0.3, 0.1], &[0.0, 1.0]), (&[0.9, 0.2], &[1.0, 0.0])]);
        let spec = StatisticSpec::with_dose_rank_scope(StatisticKind::DoubleRank, RankScope::WithinSet).unwrap();
        let stat = build_statistic(&spec, &ds).unwrap();
        assert_eq!(stat.dose_scores(0), &[2.0, 1.0]);
        let global = build_statistic(&StatisticSpec::from_kind(StatisticKind::DoubleRank).unwrap(), &ds).unwrap();
        assert_eq!(global.dose_scores(1), &[4.0, 2.0]);
    }

    #[test]
    fn custom_table_scores() {
        let ds = dataset(&[(&[0.0, 1.0], &[3.0, 4.0])]);
        let table = ScoreTable::new(vec![(3.0, -1.0), (4.0, 1.0)]).unwrap();
        let spec = StatisticSpec::custom(ScoreFn::Identity, ScoreFn::Table(table));
        let stat = build_statistic(&spec, &ds).unwrap();
        assert_eq!(stat.outcome_scores(0), &[-1.0, 1.0]);
        let short = ScoreTable::new(vec![(3.0, -1.0)]).unwrap();
        let err = build_statistic(&StatisticSpec::custom(ScoreFn::Identity, ScoreFn::Table(short)), &ds);
        assert!(matches!(err, Err(Error::MissingScore(v)) if v == 4.0));
    }
}
