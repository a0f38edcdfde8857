use std::path::Path;

use anyhow::{Context, Result};
use dosesens::optim::{BoxOptions, SimplexOptions};
use dosesens::sim::{SharpSimConfig, WeakSimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpSection {
    pub tol: Option<f64>,
    pub max_pivots: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub random_starts: Option<usize>,
}

/// Solver overrides shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lp: LpSection,
    #[serde(rename = "box")]
    pub box_opts: BoxSection,
}

impl SolverConfig {
    pub fn apply_lp(&self, lp: &mut SimplexOptions) {
        if let Some(t) = self.lp.tol {
            lp.tol = t;
        }
        if let Some(m) = self.lp.max_pivots {
            lp.max_pivots = m;
        }
    }

    pub fn apply_box(&self, b: &mut BoxOptions) {
        if let Some(t) = self.box_opts.tol {
            b.tol = t;
        }
        if let Some(m) = self.box_opts.max_iter {
            b.max_iter = m;
        }
        if let Some(r) = self.box_opts.random_starts {
            b.random_starts = r;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Sharp,
    Weak,
    /// Coverage of the Gamma = 1 interval under the weak generator.
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFile {
    pub protocol: Protocol,
    #[serde(default)]
    pub sharp: SharpSimConfig,
    #[serde(default)]
    pub weak: WeakSimConfig,
    #[serde(flatten)]
    pub solver: SolverConfig,
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| dosesens::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

pub fn solver_config(path: Option<&Path>) -> Result<SolverConfig> {
    path.map_or_else(|| Ok(SolverConfig::default()), read_toml)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_keys_override_defaults() {
        let cfg: SolverConfig = toml::from_str("[lp]\ntol = 1e-8\n[box]\ntol = 1e-7\nrandom_starts = 3\n").unwrap();
        let mut lp = SimplexOptions::default();
        let mut b = BoxOptions::default();
        cfg.apply_lp(&mut lp);
        cfg.apply_box(&mut b);
        assert_eq!(lp.tol, 1e-8);
        assert_eq!(b.tol, 1e-7);
        assert_eq!(b.random_starts, 3);
        assert_eq!(b.max_iter, BoxOptions::default().max_iter);
    }

    #[test]
    fn sim_file_partial_tables() {
        let f: SimFile = toml::from_str(
            "protocol = \"weak\"\n[weak]\nsets = 40\ngamma = 1.4\n[weak.dose]\nlaw = \"beta\"\na = 2.0\nb = 2.0\n",
        )
        .unwrap();
        assert_eq!(f.protocol, Protocol::Weak);
        assert_eq!(f.weak.sets, 40);
        assert_eq!(f.weak.gamma, 1.4);
        assert_eq!(f.weak.dose, dosesens::sim::Dist::Beta { a: 2.0, b: 2.0 });
        assert_eq!(f.weak.reps, WeakSimConfig::default().reps);
    }
}
