//! Experiment configuration, read from TOML.

use std::path::Path;

use anyhow::{bail, Context, Result};
use oscchain::{Bump, ChainSpec, GridSpec, PotentialSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Uniform grid `[min, max]` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.min, self.max, self.points)?)
    }
}

/// Parameters shared by every chain the experiments build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub omega: f64,
    /// On-site potential as a list of Gaussian bumps.
    pub v: Vec<Bump>,
    /// Pair potential `φ(x_k − x_{k+1})`.
    pub phi: Vec<Bump>,
}

impl ChainConfig {
    pub fn v(&self) -> PotentialSpec {
        PotentialSpec { terms: self.v.clone() }
    }

    pub fn phi(&self) -> PotentialSpec {
        PotentialSpec { terms: self.phi.clone() }
    }

    pub fn build(&self, l: usize, site_dim: usize, beta: f64, max_dim: Option<usize>) -> Result<ChainSpec> {
        let mut c = ChainSpec::new(l, site_dim, self.omega, self.v(), self.phi(), beta)?;
        if let Some(cap) = max_dim {
            c.dim_cap = cap;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub l: usize,
    pub site_dim: usize,
    pub beta: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub omega: f64,
    pub betas: Vec<f64>,
    pub dim: usize,
    pub grid: GridConfig,
    pub mehler_tolerance: f64,
    /// Gaussian `V` for the Trotter study.
    pub v: Vec<Bump>,
    pub trotter_beta: f64,
    pub trotter_steps: Vec<usize>,
    pub trotter_grid: GridConfig,
    pub order_range: [f64; 2],
    pub shift_t: f64,
    pub shift_steps: usize,
    pub shift_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    /// One bump list per site of `Λ_L`, in lattice order.
    pub factors: Vec<Vec<Bump>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichConfig {
    pub l: usize,
    pub l_outer: usize,
    pub site_dim: usize,
    pub beta: f64,
    pub multipliers: Vec<MultiplierConfig>,
    /// Pointwise kernel sandwich on two sites.
    pub pair_steps: usize,
    pub pair_grid: GridConfig,
    pub pair_columns: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    pub l: usize,
    pub site_dim: usize,
    /// Coarser truncation used to measure the drift.
    pub drift_site_dim: usize,
    pub beta: f64,
    pub q_site: i64,
    pub r_site: i64,
    /// `Q` and `R` are multiplication operators by this bump list.
    pub observable: Vec<Bump>,
    pub t_max: f64,
    pub points: usize,
    pub tolerance_factor: f64,
    pub control_tolerance: f64,
    pub volume_site_dim: usize,
    pub volume_t: f64,
    pub volume_n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DysonConfig {
    pub l: usize,
    pub site_dim: usize,
    pub max_order: usize,
    pub times: Vec<f64>,
    pub quadrature_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmsConfig {
    pub l: usize,
    pub site_dim: usize,
    pub betas: Vec<f64>,
    pub pairs: usize,
    pub t_max: f64,
    pub points: usize,
    pub boundary_tolerance: f64,
    pub invariance_tolerance: f64,
    pub strip_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsConfig {
    pub l: usize,
    pub l_outer: usize,
    pub site_dim: usize,
    pub beta: f64,
    pub samples: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub l: usize,
    pub l_outer: usize,
    pub site_dim: usize,
    pub beta: f64,
    pub pb_trials: usize,
    pub pb_dim: usize,
    pub pb_beta: f64,
    pub monotonicity_trials: usize,
    pub monotonicity_site_dim: usize,
    pub lsc_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventSampleConfig {
    pub lambda: f64,
    pub mu: f64,
    /// `f` and `g` at site 0, as `[re, im]`.
    pub f: [f64; 2],
    pub g: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    pub site_dims: Vec<usize>,
    pub samples: Vec<ResolventSampleConfig>,
    pub exact_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    pub l_outer: usize,
    pub site_dim: usize,
    pub beta: f64,
    pub t_max: f64,
    pub samples: usize,
    pub grid: GridConfig,
    pub trotter_steps: Vec<usize>,
    /// Positive multiplication operator on `Λ_1`, one bump list per site.
    pub factors: Vec<Vec<Bump>>,
}

/// Everything `oscchain` needs to run one or all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub chain: ChainConfig,
    pub spectrum: SpectrumConfig,
    pub kernel: KernelConfig,
    pub sandwich: SandwichConfig,
    pub lr: LrConfig,
    pub dyson: DysonConfig,
    pub kms: KmsConfig,
    pub gibbs: GibbsConfig,
    pub entropy: EntropyConfig,
    pub resolvent: ResolventConfig,
    pub regularity: RegularityConfig,
}

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `sha256` of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chain.omega > 0.0) {
            bail!("chain.omega must be positive");
        }
        self.chain.v().validate()?;
        self.chain.phi().validate()?;
        let k = &self.kernel;
        if k.trotter_steps.len() < 2 {
            bail!("kernel.trotter_steps needs at least two entries");
        }
        if k.order_range[0] > k.order_range[1] {
            bail!("kernel.order_range is empty");
        }
        if self.sandwich.l_outer <= self.sandwich.l || self.gibbs.l_outer <= self.gibbs.l || self.entropy.l_outer <= self.entropy.l {
            bail!("outer chains must be strictly larger than inner chains");
        }
        if self.sandwich.multipliers.iter().any(|m| m.factors.len() != 2 * self.sandwich.l) {
            bail!("sandwich multipliers need one factor per site of Λ_L");
        }
        if self.regularity.factors.len() != 2 {
            bail!("regularity.factors needs one factor per site of Λ_1");
        }
        if self.lr.points < 2 || self.kms.points < 2 {
            bail!("time grids need at least two points");
        }
        if self.resolvent.site_dims.len() < 2 {
            bail!("resolvent.site_dims needs at least two entries");
        }
        if self.dyson.max_order == 0 {
            bail!("dyson.max_order must be positive");
        }
        Ok(())
    }
}

/// `points` equally spaced values on `[−t_max, t_max]`.
pub fn symmetric_grid(t_max: f64, points: usize) -> Vec<f64> {
    let half = (points - 1) as f64 / 2.0;
    (0..points).map(|k| t_max * (k as f64 - half) / half).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default_config();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest(), again.digest());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{DEFAULT_CONFIG}\n[extra]\nx = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn grid_is_symmetric() {
        let g = symmetric_grid(1.0, 41);
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[20], 0.0);
        assert_eq!(g[40], 1.0);
        assert_eq!(g[30], -g[10]);
    }
}
