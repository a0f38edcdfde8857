//! Neyman-type weak nulls: the estimator `V_N`, per-set sensitivity
//! quantities, the bounding statistics `V_{N,Gamma,theta0}` and
//! `V_{C,Gamma,theta0}`, their tests, and confidence intervals by inversion.

pub mod estimand;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use estimand::{
    build_estimand, DegeneratePolicy, EstimandKind, EstimandSpec, Intervention, SetCoefficients,
};

use crate::assignment::{BiasedAssignment, IdentityProbability};
use crate::error::{Error, Result};
use crate::model::{factorial, MatchedDataset, MatchedSet, PermutationTable, DEFAULT_PERMUTATION_CAP};
use crate::optim::{box_optimize, BoxOptions, Sense};
use crate::sharp::bounding_pvalue;
use crate::variance::{DesignQ, DesignSpec, HatMatrix, RankPolicy, VarianceInputs, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Correction through the extreme single-assignment probabilities `l`, `h`.
    Vn,
    /// Closed-form correction through the maximal probability ratio.
    #[default]
    Vc,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vn" => Ok(Self::Vn),
            "vc" => Ok(Self::Vc),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Greater,
    Less,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Self::Greater => 1.0,
            Self::Less => -1.0,
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "greater" => Ok(Self::Greater),
            "less" => Ok(Self::Less),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSensitivity {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<f64>,
    pub gamma_p: f64,
}

/// `exp(gamma * (sum of the top floor(n/2) doses - sum of the bottom floor(n/2)))`
/// for doses sorted ascending.
pub fn gamma_p_sorted(sorted: &[f64], gamma: f64) -> f64 {
    let n = sorted.len();
    let top: f64 = sorted[n.div_ceil(2)..].iter().sum();
    let bottom: f64 = sorted[..n / 2].iter().sum();
    (gamma * (top - bottom)).exp()
}

pub fn gamma_p(set: &MatchedSet, gamma: f64) -> f64 {
    gamma_p_sorted(&set.sorted_doses(), gamma)
}

/// Smallest and largest probability of a single assignment over
/// `u in [0, 1]^n`.
pub fn l_h(set: &MatchedSet, gamma: f64, opts: &BoxOptions, cap: usize) -> Result<(f64, f64)> {
    let sorted = set.sorted_doses();
    let n = sorted.len();
    let perms = PermutationTable::new(0, n, cap).map_err(|e| match e {
        Error::SetTooLarge { n, cap, .. } => Error::SetTooLarge {
            set: set.id().to_string(),
            n,
            cap,
        },
        other => other,
    })?;
    let uniform = 1.0 / factorial(n) as f64;
    if gamma == 0.0 || sorted[0] == sorted[n - 1] {
        return Ok((uniform, uniform));
    }
    let opts = BoxOptions {
        max_dim: opts.max_dim.max(cap),
        ..*opts
    };
    let model = BiasedAssignment::new(&sorted, perms, gamma);
    let objective = IdentityProbability::new(model);
    let l = box_optimize(&objective, Sense::Minimize, &opts)?.value;
    let h = box_optimize(&objective, Sense::Maximize, &opts)?.value;
    Ok((l.min(uniform), h.max(uniform)))
}

pub fn set_sensitivity(set: &MatchedSet, gamma: f64, method: Method, opts: &BoxOptions, cap: usize) -> Result<SetSensitivity> {
    let gp = gamma_p(set, gamma);
    match method {
        Method::Vc => Ok(SetSensitivity {
            l: None,
            h: None,
            gamma_star: None,
            gamma_p: gp,
        }),
        Method::Vn => {
            let (l, h) = l_h(set, gamma, opts, cap)?;
            Ok(SetSensitivity {
                l: Some(l),
                h: Some(h),
                gamma_star: Some(h / l),
                gamma_p: gp,
            })
        }
    }
}

/// Per-set map `x -> scale * (x - kappa |x|)` applied to `V_{N,i} - theta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub scale: f64,
    pub kappa: f64,
}

impl Correction {
    pub fn for_method(method: Method, s: &SetSensitivity, n: usize) -> Self {
        match method {
            Method::Vc => Self {
                scale: 1.0,
                kappa: (s.gamma_p - 1.0) / (s.gamma_p + 1.0),
            },
            Method::Vn => {
                let g = s.gamma_star.expect("l/h computed for vn");
                let h = s.h.expect("l/h computed for vn");
                Self {
                    scale: (1.0 + g) / (2.0 * factorial(n) as f64 * h),
                    kappa: (g - 1.0) / (g + 1.0),
                }
            }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * (x - self.kappa * x.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    /// Closed form at `gamma = 0`, bisection otherwise.
    #[default]
    Auto,
    ClosedForm,
    Bisection,
    GridScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakConfig {
    pub method: Method,
    pub side: Side,
    pub design: DesignSpec,
    pub weights: WeightScheme,
    pub box_opts: BoxOptions,
    pub perm_cap: usize,
    pub rank_policy: RankPolicy,
    pub interval: IntervalMethod,
}

impl Default for WeakConfig {
    fn default() -> Self {
        Self {
            method: Method::Vc,
            side: Side::Greater,
            design: DesignSpec::Intercept,
            weights: WeightScheme::SetSize,
            box_opts: BoxOptions::default(),
            perm_cap: DEFAULT_PERMUTATION_CAP,
            rank_policy: RankPolicy::Error,
            interval: IntervalMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct WeakSet {
    pub set_id: String,
    pub V_N_i: f64,
    pub bounded: f64,
    pub sensitivity: SetSensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct WeakResult {
    /// Sensitivity parameter on the log scale.
    #[serde(rename = "log_gamma")]
    pub gamma: f64,
    pub method: Method,
    pub side: Side,
    pub theta0: f64,
    pub V_N: f64,
    pub S_N: f64,
    pub V_bounded: f64,
    pub S_bounded: f64,
    pub p_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
    /// Validity of `vc` rests on an assumption about set-level estimands
    /// that is not checked from data.
    pub unverified_assumption: bool,
    pub dropped: Vec<String>,
    pub per_set: Vec<WeakSet>,
}

/// Everything needed to evaluate weak-null tests at any `theta0` for one
/// dataset, estimand and sensitivity level.
#[derive(Debug, Clone)]
pub struct WeakAnalysis {
    gamma: f64,
    config: WeakConfig,
    set_ids: Vec<String>,
    dropped: Vec<String>,
    shares: Vec<f64>,
    estimates: Vec<f64>,
    sensitivity: Vec<SetSensitivity>,
    corrections: Vec<Correction>,
    weights: Vec<f64>,
    hat: HatMatrix,
}

/// Per-set sensitivity of every retained set, computed in parallel.
pub fn sensitivities(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gamma: f64,
    config: &WeakConfig,
) -> Result<Vec<SetSensitivity>> {
    estimand
        .retained
        .par_iter()
        .map(|&i| set_sensitivity(&dataset.sets()[i], gamma, config.method, &config.box_opts, config.perm_cap))
        .collect()
}

impl WeakAnalysis {
    pub fn new(dataset: &MatchedDataset, estimand: &EstimandSpec, gamma: f64, config: &WeakConfig) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("log sensitivity must be finite and >= 0, got {gamma}")));
        }
        let sens = sensitivities(dataset, estimand, gamma, config)?;
        Self::with_sensitivity(dataset, estimand, gamma, config, sens)
    }

    /// As [`WeakAnalysis::new`] with precomputed per-set sensitivities
    /// (they depend on doses only, so they survive reassignment).
    pub fn with_sensitivity(
        dataset: &MatchedDataset,
        estimand: &EstimandSpec,
        gamma: f64,
        config: &WeakConfig,
        sensitivity: Vec<SetSensitivity>,
    ) -> Result<Self> {
        let k = estimand.num_sets();
        if k < 2 {
            return Err(Error::TooFewSets { needed: 2, found: k });
        }
        let sizes = estimand.sizes(dataset);
        let total: usize = sizes.iter().sum();
        let q = DesignQ::from_spec(&config.design, dataset, Some(&estimand.retained))?;
        let hat = HatMatrix::new(&q, config.rank_policy)?;
        let weights = config.weights.weights(&sizes)?;
        let corrections = sensitivity
            .iter()
            .zip(&sizes)
            .map(|(s, &n)| Correction::for_method(config.method, s, n))
            .collect();
        Ok(Self {
            gamma,
            config: config.clone(),
            set_ids: estimand.retained.iter().map(|&i| dataset.sets()[i].id().to_string()).collect(),
            dropped: estimand.dropped.iter().map(|&i| dataset.sets()[i].id().to_string()).collect(),
            shares: sizes.iter().map(|&n| n as f64 / total as f64).collect(),
            estimates: estimand.set_estimates(dataset),
            sensitivity,
            corrections,
            weights,
            hat,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn config(&self) -> &WeakConfig {
        &self.config
    }

    pub fn set_estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn sensitivity(&self) -> &[SetSensitivity] {
        &self.sensitivity
    }

    pub fn corrections(&self) -> &[Correction] {
        &self.corrections
    }

    pub fn v_n(&self) -> f64 {
        self.shares.iter().zip(&self.estimates).map(|(s, v)| s * v).sum()
    }

    fn variance_of(&self, values: Vec<f64>) -> Result<f64> {
        self.hat.variance(&VarianceInputs::new(values, self.weights.clone())?)
    }

    /// `S_N(Q)` from the uncorrected per-set estimates.
    pub fn s_n(&self) -> Result<f64> {
        Ok(self.variance_of(self.estimates.clone())?.sqrt())
    }

    /// Per-set bounded values and their aggregate for the given side.
    pub fn bounded(&self, theta0: f64, side: Side) -> (Vec<f64>, f64) {
        let s = side.sign();
        let per: Vec<f64> = self
            .estimates
            .iter()
            .zip(&self.corrections)
            .map(|(v, c)| c.apply(s * (v - theta0)))
            .collect();
        let agg = per.iter().zip(&self.shares).map(|(b, w)| b * w).sum();
        (per, agg)
    }

    /// `(V_bounded, S_bounded^2, p)` for a one-sided test.
    pub fn test_side(&self, theta0: f64, side: Side) -> Result<(f64, f64, f64)> {
        let (per, v) = self.bounded(theta0, side);
        let s2 = self.variance_of(per)?;
        Ok((v, s2, bounding_pvalue(v, s2)))
    }

    pub fn test(&self, theta0: f64) -> Result<WeakResult> {
        let side = self.config.side;
        let (per, v) = self.bounded(theta0, side);
        let s2 = self.variance_of(per.clone())?;
        let per_set = self
            .set_ids
            .iter()
            .zip(&self.estimates)
            .zip(per.iter().zip(&self.sensitivity))
            .map(|((id, &e), (&b, &s))| WeakSet {
                set_id: id.clone(),
                V_N_i: e,
                bounded: b,
                sensitivity: s,
            })
            .collect();
        Ok(WeakResult {
            gamma: self.gamma,
            method: self.config.method,
            side,
            theta0,
            V_N: self.v_n(),
            S_N: self.s_n()?,
            V_bounded: v,
            S_bounded: s2.sqrt(),
            p_bound: bounding_pvalue(v, s2),
            ci: None,
            unverified_assumption: self.config.method == Method::Vc && self.gamma > 0.0,
            dropped: self.dropped.clone(),
            per_set,
        })
    }

    /// `V - z * S` for one side; the test at level `alpha / 2` rejects
    /// exactly when this is positive.
    fn margin(&self, theta0: f64, side: Side, z: f64) -> Result<f64> {
        let (v, s2, _) = self.test_side(theta0, side)?;
        Ok(v - z * s2.sqrt())
    }

    fn accepts(&self, theta0: f64, z: f64) -> Result<bool> {
        Ok(self.margin(theta0, Side::Greater, z)? <= 0.0 && self.margin(theta0, Side::Less, z)? <= 0.0)
    }

    /// Two-sided `1 - alpha` interval from two one-sided tests at `alpha / 2`.
    pub fn interval(&self, alpha: f64) -> Result<Interval> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
        let method = match self.config.interval {
            IntervalMethod::Auto if self.gamma == 0.0 => IntervalMethod::ClosedForm,
            IntervalMethod::Auto => IntervalMethod::Bisection,
            m => m,
        };
        match method {
            IntervalMethod::ClosedForm => {
                let (v, s) = (self.v_n(), self.s_n()?);
                Ok(Interval {
                    lower: v - z * s,
                    upper: v + z * s,
                    method,
                })
            }
            IntervalMethod::Bisection => match self.bisection_interval(z)? {
                Some(iv) => Ok(iv),
                None => {
                    log::warn!("acceptance region not an interval around the estimate; using a grid scan");
                    self.grid_interval(z)
                }
            },
            _ => self.grid_interval(z),
        }
    }

    fn base_width(&self) -> Result<f64> {
        let v = self.v_n();
        Ok(20.0 * self.s_n()?.max(1e-8 * v.abs().max(1.0)))
    }

    /// Boundary of the acceptance region on one side of the estimate.
    /// Returns `None` when the start point itself is rejected and infinity
    /// when no rejection is found after repeated doubling.
    fn edge(&self, side: Side, z: f64) -> Result<Option<f64>> {
        let center = self.v_n();
        // the greater test rejects small theta0, the less test large theta0
        let dir = -side.sign();
        if self.margin(center, side, z)? > 0.0 {
            return Ok(None);
        }
        let mut width = self.base_width()?;
        let mut far = center + dir * width;
        let mut tries = 0;
        while self.margin(far, side, z)? <= 0.0 {
            tries += 1;
            if tries > 60 {
                return Ok(Some(dir * f64::INFINITY));
            }
            width *= 2.0;
            far = center + dir * width;
        }
        let (mut inside, mut outside) = (center, far);
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if (outside - inside).abs() <= 1e-13 * inside.abs().max(outside.abs()).max(1.0) || mid == inside || mid == outside {
                break;
            }
            if self.margin(mid, side, z)? > 0.0 {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        Ok(Some(inside))
    }

    fn bisection_interval(&self, z: f64) -> Result<Option<Interval>> {
        let (Some(lower), Some(upper)) = (self.edge(Side::Greater, z)?, self.edge(Side::Less, z)?) else {
            return Ok(None);
        };
        if lower.is_finite() && upper.is_finite() && upper > lower {
            // coarse check that acceptance is exactly the bracketed interval
            let pad = 0.5 * (upper - lower);
            let span = (upper - lower) + 2.0 * pad;
            let edge_tol = 1e-6 * span;
            for k in 0..=40 {
                let t = lower - pad + span * k as f64 / 40.0;
                if (t - lower).abs() < edge_tol || (t - upper).abs() < edge_tol {
                    continue;
                }
                if self.accepts(t, z)? != (lower <= t && t <= upper) {
                    return Ok(None);
                }
            }
        }
        Ok(Some(Interval {
            lower,
            upper,
            method: IntervalMethod::Bisection,
        }))
    }

    fn grid_interval(&self, z: f64) -> Result<Interval> {
        let center = self.v_n();
        let mut half = self.base_width()?;
        let grid = |half: f64| -> Vec<f64> { (0..400).map(|k| center - half + 2.0 * half * k as f64 / 399.0).collect() };
        // widen until both grid ends are rejected, so the hull is bracketed
        let mut points = grid(half);
        for _ in 0..60 {
            if !self.accepts(points[0], z)? && !self.accepts(points[399], z)? {
                break;
            }
            half *= 2.0;
            points = grid(half);
        }
        let flags: Vec<bool> = points.iter().map(|&t| self.accepts(t, z)).collect::<Result<_>>()?;
        let first = flags.iter().position(|&a| a);
        let last = flags.iter().rposition(|&a| a);
        let (Some(first), Some(last)) = (first, last) else {
            return Err(Error::EmptyInterval);
        };
        let refine = |mut inside: f64, mut outside: f64| -> Result<f64> {
            for _ in 0..100 {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if self.accepts(mid, z)? {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            Ok(inside)
        };
        let lower = if first == 0 {
            f64::NEG_INFINITY
        } else {
            refine(points[first], points[first - 1])?
        };
        let upper = if last == 399 {
            f64::INFINITY
        } else {
            refine(points[last], points[last + 1])?
        };
        Ok(Interval {
            lower,
            upper,
            method: IntervalMethod::GridScan,
        })
    }
}

/// Aggregate bounded statistic at `theta0` with its per-set values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedStatistic {
    pub per_set: Vec<f64>,
    pub value: f64,
}

pub fn bounded_statistic(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gamma: f64,
    theta0: f64,
    config: &WeakConfig,
) -> Result<BoundedStatistic> {
    let a = WeakAnalysis::new(dataset, estimand, gamma, config)?;
    let (per_set, value) = a.bounded(theta0, config.side);
    Ok(BoundedStatistic { per_set, value })
}

pub fn weak_test(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gamma: f64,
    theta0: f64,
    config: &WeakConfig,
) -> Result<WeakResult> {
    WeakAnalysis::new(dataset, estimand, gamma, config)?.test(theta0)
}

pub fn ci_invert(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gamma: f64,
    alpha: f64,
    config: &WeakConfig,
) -> Result<Interval> {
    WeakAnalysis::new(dataset, estimand, gamma, config)?.interval(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(z: [f64; 2], r: [f64; 2]) -> MatchedSet {
        MatchedSet::new("p", z.to_vec(), r.to_vec(), None).unwrap()
    }

    #[test]
    fn gamma_p_examples() {
        let s = pair([0.0, 1.0], [0.0, 0.0]);
        assert!((gamma_p(&s, 2f64.ln()) - 2.0).abs() < 1e-12);
        let t = MatchedSet::new("t", vec![0.4, 0.1, 0.9], vec![0.0; 3], None).unwrap();
        assert!((gamma_p(&t, 1.8f64.ln()) - 1.8f64.powf(0.8)).abs() < 1e-12);
        assert_eq!(gamma_p(&t, 0.0), 1.0);
    }

    #[test]
    fn pair_l_h() {
        let s = pair([0.0, 1.0], [0.0, 0.0]);
        let (l, h) = l_h(&s, 2f64.ln(), &BoxOptions::default(), 5).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-10);
        assert!((h - 2.0 / 3.0).abs() < 1e-10);
        let (l0, h0) = l_h(&s, 0.0, &BoxOptions::default(), 5).unwrap();
        assert_eq!((l0, h0), (0.5, 0.5));
    }

    #[test]
    fn corrections_match_hand_values() {
        let vc = Correction {
            scale: 1.0,
            kappa: 1.0 / 3.0,
        };
        assert!((vc.apply(6.0) - 4.0).abs() < 1e-12);
        assert!((vc.apply(-6.0) + 8.0).abs() < 1e-12);
        let s = SetSensitivity {
            l: Some(1.0 / 3.0),
            h: Some(2.0 / 3.0),
            gamma_star: Some(2.0),
            gamma_p: 2.0,
        };
        let vn = Correction::for_method(Method::Vn, &s, 2);
        assert!((vn.apply(6.0) - 4.5).abs() < 1e-12);
        let one = SetSensitivity {
            l: Some(0.5),
            h: Some(0.5),
            gamma_star: Some(1.0),
            gamma_p: 1.0,
        };
        for m in [Method::Vn, Method::Vc] {
            let c = Correction::for_method(m, &one, 2);
            assert!((c.apply(-2.5) + 2.5).abs() < 1e-15);
        }
    }

    fn demo() -> (MatchedDataset, EstimandSpec) {
        let sets = vec![
            MatchedSet::new("a", vec![0.2, 0.7], vec![1.0, 2.5], None).unwrap(),
            MatchedSet::new("b", vec![0.9, 0.1, 0.6], vec![3.0, 0.5, 1.0], None).unwrap(),
            MatchedSet::new("c", vec![0.3, 0.8], vec![0.2, 0.1], None).unwrap(),
            MatchedSet::new("d", vec![0.45, 0.55], vec![1.0, 1.9], None).unwrap(),
        ];
        let d = MatchedDataset::new(sets).unwrap();
        let e = build_estimand(EstimandKind::Tsate { threshold: 0.5 }, &d, DegeneratePolicy::Error).unwrap();
        (d, e)
    }

    #[test]
    fn null_at_estimate_has_half_pvalue() {
        let (d, e) = demo();
        let a = WeakAnalysis::new(&d, &e, 0.0, &WeakConfig::default()).unwrap();
        let r = a.test(a.v_n()).unwrap();
        assert!(r.V_bounded.abs() < 1e-14);
        assert!((r.p_bound - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bisection_and_grid_agree() {
        let (d, e) = demo();
        for method in [Method::Vc, Method::Vn] {
            let cfg = WeakConfig {
                method,
                ..WeakConfig::default()
            };
            let a = WeakAnalysis::new(&d, &e, 0.3, &cfg).unwrap();
            let b = a.interval(0.1).unwrap();
            assert_eq!(b.method, IntervalMethod::Bisection);
            let g = WeakAnalysis::new(
                &d,
                &e,
                0.3,
                &WeakConfig {
                    interval: IntervalMethod::GridScan,
                    ..cfg
                },
            )
            .unwrap()
            .interval(0.1)
            .unwrap();
            assert!((b.lower - g.lower).abs() < 1e-8 && (b.upper - g.upper).abs() < 1e-8);
            assert!(b.contains(a.v_n()));
        }
    }

    #[test]
    fn closed_form_interval_at_unit_gamma() {
        let (d, e) = demo();
        let a = WeakAnalysis::new(&d, &e, 0.0, &WeakConfig::default()).unwrap();
        let iv = a.interval(0.05).unwrap();
        let half = 1.959963984540054 * a.s_n().unwrap();
        assert!((iv.lower - (a.v_n() - half)).abs() < 1e-12);
        assert!((iv.upper - (a.v_n() + half)).abs() < 1e-12);
    }

    #[test]
    fn less_side_mirrors_greater() {
        let (d, e) = demo();
        let g = WeakAnalysis::new(&d, &e, 0.4, &WeakConfig::default()).unwrap();
        let neg = e.negated();
        let l = WeakAnalysis::new(
            &d,
            &neg,
            0.4,
            &WeakConfig {
                side: Side::Less,
                ..WeakConfig::default()
            },
        )
        .unwrap();
        let a = g.test(0.1).unwrap();
        let b = l.test(-0.1).unwrap();
        assert!((a.V_bounded - b.V_bounded).abs() < 1e-14);
        assert!((a.p_bound - b.p_bound).abs() < 1e-14);
    }
}
