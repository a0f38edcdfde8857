//! Covariate-adjusted conservative variance estimator
//! `S^2(Q) = I^-2 * y W (I - H_Q) W y'` with `y_i = v_i / sqrt(1 - h_ii)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MatchedDataset;

/// Relative pivot tolerance for the column-pivoted QR rank decision.
pub const RANK_TOL: f64 = 1e-10;
/// Leverages at or above `1 - LEVERAGE_TOL` are treated as one.
pub const LEVERAGE_TOL: f64 = 1e-12;

/// How the `I x L` design is assembled from a dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignSpec {
    #[default]
    Intercept,
    /// Intercept plus the within-set covariate means.
    CovariateMeans,
    /// Explicit rows, one per set.
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignQ {
    matrix: DMatrix<f64>,
}

impl DesignQ {
    pub fn intercept(sets: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(sets, 1, 1.0),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::InvalidConfig("design matrix must be non-empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::InvalidConfig(format!(
                    "design row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!("design row {i} has a non-finite entry")));
            }
        }
        Ok(Self {
            matrix: DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]),
        })
    }

    /// Intercept plus covariate means of the sets listed in `sets`.
    pub fn covariate_means(dataset: &MatchedDataset, sets: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = sets
            .iter()
            .map(|&i| {
                let mut row = vec![1.0];
                row.extend(dataset.sets()[i].covariate_means());
                row
            })
            .collect();
        Self::from_rows(&rows)
    }

    /// Builds the design for the sets in `sets` (all sets when `None`).
    pub fn from_spec(spec: &DesignSpec, dataset: &MatchedDataset, sets: Option<&[usize]>) -> Result<Self> {
        let all: Vec<usize>;
        let sets = match sets {
            Some(s) => s,
            None => {
                all = (0..dataset.num_sets()).collect();
                &all
            }
        };
        match spec {
            DesignSpec::Intercept => Ok(Self::intercept(sets.len())),
            DesignSpec::CovariateMeans => Self::covariate_means(dataset, sets),
            DesignSpec::Matrix(rows) => {
                if rows.len() != dataset.num_sets() {
                    return Err(Error::InvalidConfig(format!(
                        "design has {} rows but the dataset has {} sets",
                        rows.len(),
                        dataset.num_sets()
                    )));
                }
                let picked: Vec<Vec<f64>> = sets.iter().map(|&i| rows[i].clone()).collect();
                Self::from_rows(&picked)
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankPolicy {
    #[default]
    Error,
    /// Keep an orthonormal basis of the column space and ignore dependent columns.
    DropDependent,
}

/// Projection onto the column space of `Q`, stored as a thin orthonormal
/// basis so `H = B B'` is never formed unless asked for.
#[derive(Debug, Clone)]
pub struct HatMatrix {
    basis: DMatrix<f64>,
    leverage: Vec<f64>,
}

impl HatMatrix {
    pub fn new(q: &DesignQ, policy: RankPolicy) -> Result<Self> {
        let (rows, cols) = (q.rows(), q.cols());
        if cols >= rows {
            return Err(Error::TooManyColumns { cols, sets: rows });
        }
        let qr = q.matrix.clone().col_piv_qr();
        let r = qr.r();
        let scale = r[(0, 0)].abs().max(1.0);
        let rank = (0..cols).take_while(|&k| r[(k, k)].abs() > RANK_TOL * scale).count();
        if rank < cols && policy == RankPolicy::Error {
            return Err(Error::RankDeficientQ { rank, cols });
        }
        let basis = qr.q().columns(0, rank).into_owned();
        let leverage = (0..rows).map(|i| basis.row(i).norm_squared()).collect();
        Ok(Self { basis, leverage })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn leverages(&self) -> &[f64] {
        &self.leverage
    }

    /// The dense `I x I` projection.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `S^2` for per-set values and weights aligned with the design rows.
    pub fn variance(&self, inputs: &VarianceInputs) -> Result<f64> {
        let rows = self.basis.nrows();
        if inputs.values.len() != rows {
            return Err(Error::LengthMismatch {
                set: "variance".into(),
                what: "values",
                expected: rows,
                found: inputs.values.len(),
            });
        }
        let mut wy = nalgebra::DVector::zeros(rows);
        for (i, (&v, &w)) in inputs.values.iter().zip(&inputs.weights).enumerate() {
            let h = self.leverage[i];
            if h >= 1.0 - LEVERAGE_TOL {
                return Err(Error::LeverageOne { index: i, leverage: h });
            }
            wy[i] = w * v / (1.0 - h).sqrt();
        }
        let proj = self.basis.tr_mul(&wy);
        let s2 = (wy.norm_squared() - proj.norm_squared()) / (rows * rows) as f64;
        if s2 < -1e-12 {
            log::warn!("negative variance estimate {s2:e} clamped to zero");
        }
        Ok(s2.max(0.0))
    }
}

/// Per-set weights `w_i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `w_i = I n_i / N`.
    #[default]
    SetSize,
    /// `w_i = 1`.
    Unit,
    Custom(Vec<f64>),
}

impl WeightScheme {
    pub fn weights(&self, sizes: &[usize]) -> Result<Vec<f64>> {
        let i = sizes.len() as f64;
        let total: usize = sizes.iter().sum();
        match self {
            Self::SetSize => Ok(sizes.iter().map(|&n| i * n as f64 / total as f64).collect()),
            Self::Unit => Ok(vec![1.0; sizes.len()]),
            Self::Custom(w) if w.len() == sizes.len() => Ok(w.clone()),
            Self::Custom(w) => Err(Error::LengthMismatch {
                set: "weights".into(),
                what: "weights",
                expected: sizes.len(),
                found: w.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceInputs {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl VarianceInputs {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::LengthMismatch {
                set: "variance".into(),
                what: "weights",
                expected: values.len(),
                found: weights.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i,
                column: "value".into(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig("variance weights must be positive and finite".into()));
        }
        Ok(Self { values, weights })
    }

    pub fn with_scheme(values: Vec<f64>, sizes: &[usize], scheme: &WeightScheme) -> Result<Self> {
        let weights = scheme.weights(sizes)?;
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub fn hat_matrix(q: &DesignQ) -> Result<HatMatrix> {
    HatMatrix::new(q, RankPolicy::Error)
}

pub fn variance_estimate(inputs: &VarianceInputs, q: &DesignQ) -> Result<f64> {
    hat_matrix(q)?.variance(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DesignQ {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..cols).map(|_| rng.random::<f64>() * 2.0 - 1.0));
                r
            })
            .collect();
        DesignQ::from_rows(&data).unwrap()
    }

    #[test]
    fn intercept_hat_matrix() {
        let h = hat_matrix(&DesignQ::intercept(4)).unwrap();
        let m = h.matrix();
        for i in 0..4 {
            assert!((h.leverages()[i] - 0.25).abs() < 1e-15);
            for j in 0..4 {
                assert!((m[(i, j)] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cols in 1..5 {
            let q = random_design(&mut rng, 9, cols);
            let h = hat_matrix(&q).unwrap();
            let m = h.matrix();
            let idem = (&m * &m - &m).amax();
            assert!(idem < 1e-8);
            assert!((m.trace() - cols as f64).abs() < 1e-10);
            assert!((&m - m.transpose()).amax() < 1e-12);
            assert!(h.leverages().iter().all(|&l| (0.0..1.0).contains(&l)));
        }
    }

    #[test]
    fn two_set_example() {
        let inputs = VarianceInputs::new(vec![1.0, 3.0], vec![1.0, 1.0]).unwrap();
        let s2 = variance_estimate(&inputs, &DesignQ::intercept(2)).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_have_zero_variance() {
        let inputs = VarianceInputs::new(vec![2.5; 5], vec![1.0; 5]).unwrap();
        assert_eq!(variance_estimate(&inputs, &DesignQ::intercept(5)).unwrap(), 0.0);
    }

    #[test]
    fn column_count_and_rank_checks() {
        let q = DesignQ::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(hat_matrix(&q), Err(Error::TooManyColumns { .. })));
        let dup = DesignQ::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(hat_matrix(&dup), Err(Error::RankDeficientQ { rank: 1, cols: 2 })));
    }

    #[test]
    fn dependent_column_leaves_estimate_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..7).map(|_| vec![1.0, rng.random::<f64>()]).collect();
        let wide: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], 3.0 * r[1] - 2.0]).collect();
        let values: Vec<f64> = (0..7).map(|_| rng.random::<f64>() * 4.0).collect();
        let inputs = VarianceInputs::new(values, vec![1.0; 7]).unwrap();
        let a = variance_estimate(&inputs, &DesignQ::from_rows(&rows).unwrap()).unwrap();
        let b = HatMatrix::new(&DesignQ::from_rows(&wide).unwrap(), RankPolicy::DropDependent)
            .unwrap()
            .variance(&inputs)
            .unwrap();
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn unit_leverage_is_rejected() {
        let q = DesignQ::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let inputs = VarianceInputs::new(vec![1.0, 2.0, 3.0], vec![1.0; 3]).unwrap();
        assert!(matches!(variance_estimate(&inputs, &q), Err(Error::LeverageOne { index: 0, .. })));
    }

    #[test]
    fn set_size_weights() {
        let w = WeightScheme::SetSize.weights(&[2, 3, 5]).unwrap();
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[2] - 1.5).abs() < 1e-15);
    }
}
