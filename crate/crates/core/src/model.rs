//! Matched-design data model: matched sets, dose order statistics, and the
//! within-set permutation group that randomization inference runs over.
//!
//! A permutation `perm` of a set with `n` units is stored as a slice of
//! length `n`; under `perm`, unit `j` receives the dose observed on unit
//! `perm[j]`. The identity permutation therefore reproduces the observed
//! assignment, and every table lists it first.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest set size for which permutation tables can be built at all.
pub const HARD_PERMUTATION_LIMIT: usize = 6;

/// Default enumeration cap (120 permutations per set).
pub const DEFAULT_PERMUTATION_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSet {
    id: String,
    unit_ids: Vec<String>,
    doses: Vec<f64>,
    outcomes: Vec<f64>,
    covariates: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    order: Vec<usize>,
}

impl MatchedSet {
    pub fn new(
        id: impl Into<String>,
        doses: Vec<f64>,
        outcomes: Vec<f64>,
        covariates: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let id = id.into();
        let unit_ids = (0..doses.len()).map(|j| (j + 1).to_string()).collect();
        Self::with_unit_ids(id, unit_ids, doses, outcomes, covariates)
    }

    pub fn with_unit_ids(
        id: String,
        unit_ids: Vec<String>,
        doses: Vec<f64>,
        outcomes: Vec<f64>,
        covariates: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = doses.len();
        if n < 2 {
            return Err(Error::SingletonSet(id));
        }
        let check_len = |what: &'static str, found: usize| {
            if found != n {
                Err(Error::LengthMismatch {
                    set: id.clone(),
                    what,
                    expected: n,
                    found,
                })
            } else {
                Ok(())
            }
        };
        check_len("outcomes", outcomes.len())?;
        check_len("unit ids", unit_ids.len())?;
        if let Some(cov) = &covariates {
            check_len("covariates", cov.len())?;
            let k = cov[0].len();
            for (j, x) in cov.iter().enumerate() {
                if x.len() != k {
                    return Err(Error::InconsistentCovariateDim {
                        set: id.clone(),
                        expected: k,
                        found: x.len(),
                    });
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue {
                        row: j + 1,
                        column: format!("covariate of set {id}"),
                    });
                }
            }
        }
        for (j, (&z, &r)) in doses.iter().zip(&outcomes).enumerate() {
            if !z.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: j + 1,
                    column: format!("dose of set {id}"),
                });
            }
            if !r.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: j + 1,
                    column: format!("outcome of set {id}"),
                });
            }
        }
        let order = stable_order_index(&doses);
        Ok(Self {
            id,
            unit_ids,
            doses,
            outcomes,
            covariates,
            order,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn len(&self) -> usize {
        self.doses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doses.is_empty()
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn covariates(&self) -> Option<&[Vec<f64>]> {
        self.covariates.as_deref()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates
            .as_ref()
            .map(|c| c[0].len())
            .unwrap_or(0)
    }

    /// Zero-based order position `k(j)` of each unit's dose, ties broken by
    /// unit index.
    pub fn order_index(&self) -> &[usize] {
        &self.order
    }

    /// Doses in ascending order, `z_(1) <= ... <= z_(n)`.
    pub fn sorted_doses(&self) -> Vec<f64> {
        let mut sorted = vec![0.0; self.len()];
        for (j, &k) in self.order.iter().enumerate() {
            sorted[k] = self.doses[j];
        }
        sorted
    }

    /// Mean of each covariate over the units of this set.
    pub fn covariate_means(&self) -> Vec<f64> {
        let Some(cov) = &self.covariates else {
            return Vec::new();
        };
        let k = cov[0].len();
        let mut means = vec![0.0; k];
        for x in cov {
            for (m, v) in means.iter_mut().zip(x) {
                *m += v;
            }
        }
        let n = cov.len() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// The set as it would be observed under `perm` (unit `j` receives the
    /// dose currently held by unit `perm[j]`); outcomes are left untouched.
    pub fn with_permuted_doses(&self, perm: &[usize]) -> MatchedSet {
        let doses: Vec<f64> = perm.iter().map(|&p| self.doses[p]).collect();
        let order = stable_order_index(&doses);
        MatchedSet {
            doses,
            order,
            ..self.clone()
        }
    }

    /// Replace the outcome vector, keeping doses and covariates.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<MatchedSet> {
        MatchedSet::with_unit_ids(
            self.id.clone(),
            self.unit_ids.clone(),
            self.doses.clone(),
            outcomes,
            self.covariates.clone(),
        )
    }
}

/// Zero-based order positions from a stable sort of `doses`.
pub fn stable_order_index(doses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..doses.len()).collect();
    idx.sort_by(|&a, &b| doses[a].total_cmp(&doses[b]));
    let mut order = vec![0; doses.len()];
    for (k, &j) in idx.iter().enumerate() {
        order[j] = k;
    }
    order
}

/// Order positions of a set's units (see [`MatchedSet::order_index`]).
pub fn order_index(set: &MatchedSet) -> Vec<usize> {
    set.order_index().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedDataset {
    sets: Vec<MatchedSet>,
    total_units: usize,
    covariate_dim: usize,
}

impl MatchedDataset {
    pub fn new(sets: Vec<MatchedSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let covariate_dim = sets[0].covariate_dim();
        let first_has = sets[0].covariates.is_some();
        for s in &sets {
            if s.covariate_dim() != covariate_dim || s.covariates.is_some() != first_has {
                return Err(Error::InconsistentCovariateDim {
                    set: s.id.clone(),
                    expected: covariate_dim,
                    found: s.covariate_dim(),
                });
            }
        }
        let total_units = sets.iter().map(MatchedSet::len).sum();
        Ok(Self {
            sets,
            total_units,
            covariate_dim,
        })
    }

    pub fn sets(&self) -> &[MatchedSet] {
        &self.sets
    }

    /// Number of matched sets `I`.
    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    /// Total number of units `N`.
    pub fn num_units(&self) -> usize {
        self.total_units
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn max_set_size(&self) -> usize {
        self.sets.iter().map(MatchedSet::len).max().unwrap_or(0)
    }

    /// Subset of sets by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<MatchedDataset> {
        MatchedDataset::new(indices.iter().map(|&i| self.sets[i].clone()).collect())
    }

    /// Dataset observed under a within-set permutation for every set.
    pub fn with_permuted_doses(&self, perms: &[&[usize]]) -> MatchedDataset {
        let sets = self
            .sets
            .iter()
            .zip(perms)
            .map(|(s, p)| s.with_permuted_doses(p))
            .collect();
        MatchedDataset {
            sets,
            ..self.clone()
        }
    }

    pub fn all_doses(&self) -> impl Iterator<Item = f64> + '_ {
        self.sets.iter().flat_map(|s| s.doses.iter().copied())
    }

    pub fn all_outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.sets.iter().flat_map(|s| s.outcomes.iter().copied())
    }

    pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, mapping)
    }

    pub fn from_csv_reader<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let set_col = find(&mapping.set_id)?;
        let unit_col = find(&mapping.unit_id)?;
        let dose_col = find(&mapping.dose)?;
        let outcome_col = find(&mapping.outcome)?;
        let cov_cols: Vec<usize> = match &mapping.covariates {
            Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
            None => (0..headers.len())
                .filter(|c| ![set_col, unit_col, dose_col, outcome_col].contains(c))
                .collect(),
        };

        struct Partial {
            units: Vec<String>,
            doses: Vec<f64>,
            outcomes: Vec<f64>,
            covariates: Vec<Vec<f64>>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Partial> = HashMap::new();

        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let row = row_idx + 1;
            let field = |col: usize| record.get(col).unwrap_or("");
            let number = |col: usize| -> Result<f64> {
                let raw = field(col);
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    row,
                    column: headers[col].to_string(),
                    value: raw.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row,
                        column: headers[col].to_string(),
                    });
                }
                Ok(v)
            };
            let set_id = field(set_col).to_string();
            let dose = number(dose_col)?;
            let outcome = number(outcome_col)?;
            let cov = cov_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
            let entry = groups.entry(set_id.clone()).or_insert_with(|| {
                order.push(set_id.clone());
                Partial {
                    units: Vec::new(),
                    doses: Vec::new(),
                    outcomes: Vec::new(),
                    covariates: Vec::new(),
                }
            });
            entry.units.push(field(unit_col).to_string());
            entry.doses.push(dose);
            entry.outcomes.push(outcome);
            entry.covariates.push(cov);
        }

        let mut sets = Vec::with_capacity(order.len());
        for id in order {
            let p = groups.remove(&id).expect("group recorded on first sight");
            let covariates = (!cov_cols.is_empty()).then_some(p.covariates);
            sets.push(MatchedSet::with_unit_ids(
                id, p.units, p.doses, p.outcomes, covariates,
            )?);
        }
        MatchedDataset::new(sets)
    }
}

/// Header names for the CSV ingestion format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub set_id: String,
    pub unit_id: String,
    pub dose: String,
    pub outcome: String,
    /// `None` takes every remaining column as a covariate.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            set_id: "set_id".into(),
            unit_id: "unit_id".into(),
            dose: "dose".into(),
            outcome: "outcome".into(),
            covariates: None,
        }
    }
}

/// All `n!` permutations of `0..n` in lexicographic order, flattened with
/// stride `n`. Cached per `n` for the lifetime of the process.
pub fn permutations(n: usize) -> &'static [usize] {
    static CACHE: [OnceLock<Vec<usize>>; HARD_PERMUTATION_LIMIT + 1] =
        [const { OnceLock::new() }; HARD_PERMUTATION_LIMIT + 1];
    assert!(n <= HARD_PERMUTATION_LIMIT, "permutation tables stop at n = 6");
    CACHE[n].get_or_init(|| {
        let mut out = Vec::with_capacity(factorial(n) * n);
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.extend_from_slice(&cur);
            if !next_permutation(&mut cur) {
                break;
            }
        }
        out
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Index pairs `(a, b)` of permutations of `0..n` that differ by exactly one
/// transposition. Every ratio constraint between other pairs is implied by a
/// chain of constraints between these.
pub fn transposition_pairs(n: usize) -> &'static [(usize, usize)] {
    static CACHE: [OnceLock<Vec<(usize, usize)>>; HARD_PERMUTATION_LIMIT + 1] =
        [const { OnceLock::new() }; HARD_PERMUTATION_LIMIT + 1];
    CACHE[n].get_or_init(|| {
        let perms = permutations(n);
        let count = factorial(n);
        let index: HashMap<&[usize], usize> = perms.chunks_exact(n.max(1)).zip(0..).collect();
        let mut pairs = Vec::new();
        for a in 0..count {
            let pa = &perms[a * n..(a + 1) * n];
            for x in 0..n {
                for y in (x + 1)..n {
                    let mut pb = pa.to_vec();
                    pb.swap(x, y);
                    let b = index[pb.as_slice()];
                    pairs.push((a, b));
                }
            }
        }
        pairs
    })
}

/// The assignment space of one matched set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationTable {
    pub set_index: usize,
    pub max_n: usize,
    n: usize,
    flat: &'static [usize],
}

impl PermutationTable {
    pub fn new(set_index: usize, n: usize, cap: usize) -> Result<Self> {
        if cap > HARD_PERMUTATION_LIMIT {
            return Err(Error::InvalidConfig(format!(
                "permutation cap {cap} exceeds the hard limit {HARD_PERMUTATION_LIMIT}"
            )));
        }
        if n > cap {
            return Err(Error::SetTooLarge {
                set: set_index.to_string(),
                n,
                cap,
            });
        }
        if n == HARD_PERMUTATION_LIMIT {
            log::warn!("enumerating 720 permutations for a set of size 6");
        }
        Ok(Self {
            set_index,
            max_n: cap,
            n,
            flat: permutations(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, index: usize) -> &'static [usize] {
        &self.flat[index * self.n..(index + 1) * self.n]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &'static [usize]> + Clone {
        self.flat.chunks_exact(self.n)
    }

    pub fn flat(&self) -> &'static [usize] {
        self.flat
    }
}

/// All `n_i!` assignments of a set, lexicographic, identity first.
pub fn enumerate_assignments(
    set: &MatchedSet,
    set_index: usize,
    cap: usize,
) -> Result<PermutationTable> {
    PermutationTable::new(set_index, set.len(), cap).map_err(|e| match e {
        Error::SetTooLarge { n, cap, .. } => Error::SetTooLarge {
            set: set.id().to_string(),
            n,
            cap,
        },
        other => other,
    })
}

/// Draw an index from a categorical distribution.
pub fn sample_assignment<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    validate_weights(weights)?;
    Ok(draw_categorical(weights, rng))
}

/// [`sample_assignment`] with a fresh generator seeded from `seed`.
pub fn sample_assignment_seeded(weights: &[f64], seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_assignment(weights, &mut rng)
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or non-finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn draw_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // rounding can leave target == total; fall back to the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Purpose tags separating the random streams used for one (replicate, set).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum StreamPurpose {
    Data = 1,
    Doses = 2,
    Assignment = 3,
    AssignmentAlt = 4,
    Starts = 5,
    MonteCarlo = 6,
}

/// Counter-based generator keyed by `(seed, replicate, set, purpose)`, so
/// results do not depend on how work is scheduled across threads.
pub fn stream_rng(seed: u64, replicate: u64, set: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&set.to_le_bytes());
    key[24..28].copy_from_slice(&(purpose as u32).to_le_bytes());
    key[28..32].copy_from_slice(b"dsns");
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(doses: &[f64]) -> MatchedSet {
        MatchedSet::new("s", doses.to_vec(), vec![0.0; doses.len()], None).unwrap()
    }

    #[test]
    fn order_index_sorts_stably() {
        assert_eq!(set(&[0.7, 0.2, 0.5]).order_index(), &[2, 0, 1]);
        assert_eq!(set(&[0.5, 0.5]).order_index(), &[0, 1]);
        assert_eq!(set(&[0.7, 0.2, 0.5]).sorted_doses(), vec![0.2, 0.5, 0.7]);
    }

    #[test]
    fn singleton_rejected() {
        let err = MatchedSet::new("a", vec![1.0], vec![1.0], None).unwrap_err();
        assert!(matches!(err, Error::SingletonSet(id) if id == "a"));
    }

    #[test]
    fn enumeration_counts_and_order() {
        let t = enumerate_assignments(&set(&[1.0, 2.0, 3.0]), 0, 5).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.get(0), &[0, 1, 2]);
        assert_eq!(t.get(5), &[2, 1, 0]);
        let pair = enumerate_assignments(&set(&[1.0, 2.0]), 0, 5).unwrap();
        assert_eq!(pair.iter().collect::<Vec<_>>(), vec![&[0, 1][..], &[1, 0][..]]);
    }

    #[test]
    fn cap_enforced() {
        let big = set(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert!(matches!(
            enumerate_assignments(&big, 0, 5),
            Err(Error::SetTooLarge { n: 7, cap: 5, .. })
        ));
        let six = set(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(enumerate_assignments(&six, 0, 5).is_err());
        assert_eq!(enumerate_assignments(&six, 0, 6).unwrap().len(), 720);
        assert!(matches!(
            enumerate_assignments(&six, 0, 7),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn transposition_pair_counts() {
        assert_eq!(transposition_pairs(2).len(), 2);
        assert_eq!(transposition_pairs(3).len(), 18);
        assert_eq!(transposition_pairs(4).len(), 144);
        assert_eq!(transposition_pairs(5).len(), 1200);
    }

    #[test]
    fn degenerate_and_invalid_weights() {
        for seed in 0..50 {
            assert_eq!(sample_assignment_seeded(&[1.0, 0.0], seed).unwrap(), 0);
        }
        assert!(matches!(
            sample_assignment_seeded(&[0.5, 0.4], 1),
            Err(Error::InvalidWeights(_))
        ));
        assert!(sample_assignment_seeded(&[1.5, -0.5], 1).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = stream_rng(7, 0, 0, StreamPurpose::Assignment);
        let w = [1.0 / 6.0; 6];
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[sample_assignment(&w, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 60_000.0 - 1.0 / 6.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream_rng(1, 2, 3, StreamPurpose::Data), |r, _| Some(r.random()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream_rng(1, 2, 3, StreamPurpose::Data), |r, _| Some(r.random()))
            .collect();
        let c: u64 = stream_rng(1, 2, 4, StreamPurpose::Data).random();
        assert_eq!(a, b);
        assert_ne!(a[0], c);
    }

    #[test]
    fn csv_loading() {
        let text = "set_id,unit_id,dose,outcome\n1,a,0.1,1.0\n2,c,0.3,2.0\n1,b,0.9,3.0\n2,d,0.8,1.5\n2,e,0.2,0.0\n";
        let ds = MatchedDataset::from_csv_reader(text.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(ds.num_sets(), 2);
        assert_eq!(ds.num_units(), 5);
        assert_eq!(ds.sets()[0].doses(), &[0.1, 0.9]);
        assert_eq!(ds.sets()[1].unit_ids(), &["c", "d", "e"]);
        assert_eq!(ds.covariate_dim(), 0);
    }

    #[test]
    fn csv_errors() {
        let mapping = ColumnMapping::default();
        let single = "set_id,unit_id,dose,outcome\n1,a,0.1,1.0\n1,b,0.2,1.0\n2,c,0.3,2.0\n";
        assert!(matches!(
            MatchedDataset::from_csv_reader(single.as_bytes(), &mapping),
            Err(Error::SingletonSet(id)) if id == "2"
        ));
        let nan = "set_id,unit_id,dose,outcome\n1,a,NaN,1.0\n1,b,0.2,1.0\n";
        assert!(matches!(
            MatchedDataset::from_csv_reader(nan.as_bytes(), &mapping),
            Err(Error::NonFiniteValue { row: 1, .. })
        ));
        let missing = "set,unit_id,dose,outcome\n1,a,0.1,1.0\n";
        assert!(matches!(
            MatchedDataset::from_csv_reader(missing.as_bytes(), &mapping),
            Err(Error::MissingColumn(c)) if c == "set_id"
        ));
    }

    #[test]
    fn csv_covariates_and_custom_headers() {
        let text = "grp,id,z,y,age,bmi\ng,1,0.1,1.0,30,22\ng,2,0.5,1.0,32,24\n";
        let mapping = ColumnMapping {
            set_id: "grp".into(),
            unit_id: "id".into(),
            dose: "z".into(),
            outcome: "y".into(),
            covariates: None,
        };
        let ds = MatchedDataset::from_csv_reader(text.as_bytes(), &mapping).unwrap();
        assert_eq!(ds.covariate_dim(), 2);
        assert_eq!(ds.sets()[0].covariate_means(), vec![31.0, 23.0]);
    }
}
