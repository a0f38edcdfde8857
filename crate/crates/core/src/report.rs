//! Run manifests, sweeps over a grid of sensitivity values, and report
//! emission as JSON, CSV or a plain-text table.
//!
//! Reports use the odds-scale `Gamma >= 1` in their `gamma` fields; the
//! library results they wrap carry `log_gamma` alongside.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::MatchedDataset;
use crate::sharp::{all_t_values, mu_star_all, sharp_from_parts, SharpConfig, SharpResult};
use crate::stats::CompiledStatistic;
use crate::weak::{EstimandSpec, Interval, WeakAnalysis, WeakConfig, WeakResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, input: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            input_sha256: input.map(sha256_file).transpose()?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// A report body together with the manifest of the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpEntry {
    pub gamma: f64,
    #[serde(flatten)]
    pub result: SharpResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakEntry {
    pub gamma: f64,
    #[serde(flatten)]
    pub result: WeakResult,
}

/// Checks a user-supplied grid: finite, `>= 1`, strictly ascending.
pub fn validate_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("at least one Gamma is required".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        return Err(Error::InvalidConfig(format!("Gamma must be finite and >= 1, got {g}")));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("Gamma values must be strictly ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Sharp,
    Weak,
    Ci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub p_value: f64,
    /// `V_F` for sharp sweeps, the bounded statistic at `theta0` otherwise.
    pub statistic: f64,
    pub sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    pub alpha: f64,
    pub rows: Vec<SweepRow>,
    /// Smallest `Gamma` in the grid whose p-value exceeds `alpha`.
    pub crossing: Option<f64>,
}

impl Sweep {
    pub fn new(kind: SweepKind, alpha: f64, rows: Vec<SweepRow>) -> Self {
        let crossing = rows.iter().find(|r| r.p_value > alpha).map(|r| r.gamma);
        Self {
            kind,
            alpha,
            rows,
            crossing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpSweep {
    pub sweep: Sweep,
    pub results: Vec<SharpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSweep {
    pub sweep: Sweep,
    pub results: Vec<WeakEntry>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Sharp-null bounding p-values over a grid of `Gamma` values. The
/// permutation values are computed once and reused across the grid.
pub fn sharp_sweep(
    dataset: &MatchedDataset,
    statistic: &CompiledStatistic,
    gammas: &[f64],
    alpha: f64,
    config: &SharpConfig,
) -> Result<SharpSweep> {
    validate_gammas(gammas)?;
    check_alpha(alpha)?;
    let t = all_t_values(dataset, statistic, config.options.perm_cap)?;
    let t_obs: Vec<f64> = t.iter().map(|s| s.t_observed).collect();
    let mut rows = Vec::with_capacity(gammas.len());
    let mut results = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let mu = mu_star_all(dataset, &t, g.ln(), &config.options)?;
        let result = sharp_from_parts(dataset, &t_obs, &mu, g.ln(), config)?;
        rows.push(SweepRow {
            gamma: g,
            p_value: result.p_bound,
            statistic: result.V_F,
            sd: result.S,
            lower: None,
            upper: None,
        });
        results.push(SharpEntry { gamma: g, result });
    }
    Ok(SharpSweep {
        sweep: Sweep::new(SweepKind::Sharp, alpha, rows),
        results,
    })
}

/// Weak-null test at `theta0` and the two-sided `1 - alpha` interval for
/// every `Gamma` in the grid.
pub fn ci_sweep(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gammas: &[f64],
    alpha: f64,
    theta0: f64,
    config: &WeakConfig,
) -> Result<WeakSweep> {
    validate_gammas(gammas)?;
    check_alpha(alpha)?;
    let mut rows = Vec::with_capacity(gammas.len());
    let mut results = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let analysis = WeakAnalysis::new(dataset, estimand, g.ln(), config)?;
        let interval: Interval = analysis.interval(alpha)?;
        let mut result = analysis.test(theta0)?;
        result.ci = Some(interval);
        rows.push(SweepRow {
            gamma: g,
            p_value: result.p_bound,
            statistic: result.V_bounded,
            sd: result.S_bounded,
            lower: Some(interval.lower),
            upper: Some(interval.upper),
        });
        results.push(WeakEntry { gamma: g, result });
    }
    Ok(WeakSweep {
        sweep: Sweep::new(SweepKind::Ci, alpha, rows),
        results,
    })
}

/// Weak-null bounding tests at `theta0` for every `Gamma` in the grid.
pub fn weak_sweep(
    dataset: &MatchedDataset,
    estimand: &EstimandSpec,
    gammas: &[f64],
    alpha: f64,
    theta0: f64,
    config: &WeakConfig,
) -> Result<WeakSweep> {
    validate_gammas(gammas)?;
    check_alpha(alpha)?;
    let mut rows = Vec::with_capacity(gammas.len());
    let mut results = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let result = WeakAnalysis::new(dataset, estimand, g.ln(), config)?.test(theta0)?;
        rows.push(SweepRow {
            gamma: g,
            p_value: result.p_bound,
            statistic: result.V_bounded,
            sd: result.S_bounded,
            lower: None,
            upper: None,
        });
        results.push(WeakEntry { gamma: g, result });
    }
    Ok(WeakSweep {
        sweep: Sweep::new(SweepKind::Weak, alpha, rows),
        results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Table,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(Error::UnknownKind(format!("output format {other:?}"))),
        }
    }
}

/// `x` rounded to 6 significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn sweep_csv(sweep: &Sweep) -> String {
    let mut out = String::new();
    match sweep.kind {
        SweepKind::Sharp => {
            out.push_str("gamma,V_F,S,p_value\n");
            for r in &sweep.rows {
                let _ = writeln!(out, "{},{},{},{}", sig6(r.gamma), sig6(r.statistic), sig6(r.sd), sig6(r.p_value));
            }
        }
        SweepKind::Weak => {
            out.push_str("gamma,statistic,sd,p_value\n");
            for r in &sweep.rows {
                let _ = writeln!(out, "{},{},{},{}", sig6(r.gamma), sig6(r.statistic), sig6(r.sd), sig6(r.p_value));
            }
        }
        SweepKind::Ci => {
            out.push_str("gamma,lower,upper,p_value\n");
            for r in &sweep.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    sig6(r.gamma),
                    sig6(r.lower.unwrap_or(f64::NAN)),
                    sig6(r.upper.unwrap_or(f64::NAN)),
                    sig6(r.p_value)
                );
            }
        }
    }
    out
}

fn fixed4(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Human-readable table; intervals print as `[lower, upper]` to 4 decimals.
pub fn sweep_table(sweep: &Sweep) -> String {
    let mut out = String::new();
    match sweep.kind {
        SweepKind::Sharp | SweepKind::Weak => {
            let (v, sd) = if sweep.kind == SweepKind::Sharp { ("V_F", "S") } else { ("V_bounded", "S_bounded") };
            let _ = writeln!(out, "{:>8}  {:>12}  {:>12}  {:>10}", "Gamma", v, sd, "p-value");
            for r in &sweep.rows {
                let _ = writeln!(
                    out,
                    "{:>8}  {:>12}  {:>12}  {:>10}",
                    format!("{:.2}", r.gamma),
                    sig6(r.statistic),
                    sig6(r.sd),
                    format!("{:.4}", r.p_value)
                );
            }
        }
        SweepKind::Ci => {
            let level = 100.0 * (1.0 - sweep.alpha);
            let _ = writeln!(out, "{:>8}  {:>10}  {:>24}", "Gamma", "p-value", format!("{} CI", sig6(level) + "%"));
            for r in &sweep.rows {
                let ci = format!(
                    "[{}, {}]",
                    fixed4(r.lower.unwrap_or(f64::NAN)),
                    fixed4(r.upper.unwrap_or(f64::NAN))
                );
                let _ = writeln!(out, "{:>8}  {:>10}  {:>24}", format!("{:.2}", r.gamma), format!("{:.4}", r.p_value), ci);
            }
        }
    }
    match sweep.crossing {
        Some(g) => {
            let _ = writeln!(out, "p-value first exceeds {} at Gamma = {}", sig6(sweep.alpha), sig6(g));
        }
        None => {
            let _ = writeln!(out, "p-value stays at or below {} across the grid", sig6(sweep.alpha));
        }
    }
    out
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn write_output(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0128), "0.0128");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(123456789.0), "123456789");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(1.23456789e-7), "1.23457e-7");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn gamma_grid_checks() {
        assert!(validate_gammas(&[1.0, 1.1, 1.3]).is_ok());
        assert!(validate_gammas(&[1.2, 1.1]).is_err());
        assert!(validate_gammas(&[0.9]).is_err());
        assert!(validate_gammas(&[]).is_err());
    }

    #[test]
    fn crossing_is_first_exceedance() {
        let row = |g: f64, p: f64| SweepRow {
            gamma: g,
            p_value: p,
            statistic: 0.0,
            sd: 1.0,
            lower: Some(0.0),
            upper: Some(1.0),
        };
        let s = Sweep::new(SweepKind::Ci, 0.05, vec![row(1.0, 0.01), row(1.2, 0.04), row(1.3, 0.06)]);
        assert_eq!(s.crossing, Some(1.3));
        assert!(sweep_csv(&s).starts_with("gamma,lower,upper,p_value\n1,0,1,0.01\n"));
        assert!(sweep_table(&s).contains("[0.0000, 1.0000]"));
    }
}
