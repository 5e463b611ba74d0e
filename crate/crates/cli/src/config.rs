//! Experiment configuration: one JSON file, every key optional.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aniso_lp::fields::{GridSpec, TEST_SPECTRUM_RADIUS};
use aniso_lp::kernels::{ball_averaging_kernel, bump_kernel, AveragingKernel};
use aniso_lp::sobolev::{BetaSpec, Family, TheoremTag};
use aniso_lp::DilationGroup;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub group: GroupConfig,
    pub grid: GridConfig,
    pub family: FamilyConfig,
    pub sweep: SweepConfig,
    pub suites: Vec<TheoremTag>,
    pub kernel: KernelChoice,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            group: GroupConfig::default(),
            grid: GridConfig::default(),
            family: FamilyConfig::default(),
            sweep: SweepConfig::default(),
            suites: TheoremTag::ALL.to_vec(),
            kernel: KernelChoice::Ball,
            output_dir: PathBuf::from("aniso-lp-out"),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupConfig {
    pub matrix: Vec<Vec<f64>>,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { matrix: vec![vec![1.0, 0.0], vec![0.0, 2.0]] }
    }
}

/// A cube `[−extent/2, extent/2)^n` with `points` per axis.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub extent: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { extent: 8.0, points: 64 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub seeds: usize,
    pub eps: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { seeds: Family::DEFAULT_SIZE, eps: Family::DEFAULT_EPS }
    }
}

/// Parameter lists. An absent `alpha` list means the per-tag defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alpha: Option<Vec<f64>>,
    pub p: Vec<f64>,
    pub beta: Vec<BetaSpec>,
    pub k: Vec<u32>,
    /// Repeat each study on the doubled grid.
    pub refine: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            p: vec![1.5, 2.0, 3.0],
            beta: vec![BetaSpec::Fixed(0.0), BetaSpec::Default(aniso_lp::sobolev::DefaultBeta::Weighted)],
            k: vec![2],
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Ball,
    Bump,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// One `(tag, α, k)` study of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub tag: TheoremTag,
    pub alpha: f64,
    pub k: u32,
}

/// Default `α` values for a tag.
fn default_alphas(tag: TheoremTag) -> Vec<f64> {
    match tag {
        TheoremTag::T1_2 | TheoremTag::T1_3 => vec![0.5, 1.0, 1.5],
        TheoremTag::T1_4 | TheoremTag::T1_5 => vec![0.5, 1.5, 2.5],
        TheoremTag::T4_1 | TheoremTag::T4_2 => vec![1.0, 2.5],
        TheoremTag::T5_1 => vec![2.0],
    }
}

/// A parsed and validated configuration.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub group: Arc<DilationGroup>,
    pub grid: GridSpec,
    pub cells: Vec<StudyCell>,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))?;
        Self::validate(config)
    }

    pub fn validate(config: ExperimentConfig) -> Result<Self, ConfigError> {
        let err = |m: String| ConfigError(m);
        let group = DilationGroup::from_rows(&config.group.matrix).map_err(|e| err(format!("group.matrix: {e}")))?;
        let n = group.dim();
        let g = &config.grid;
        if !(g.extent > 0.0 && g.extent.is_finite()) || g.points < 8 || g.points % 2 != 0 {
            return Err(err(format!("grid: need extent > 0 and an even number of points ≥ 8, got {} and {}", g.extent, g.points)));
        }
        if g.points as f64 / (2.0 * g.extent) <= TEST_SPECTRUM_RADIUS {
            return Err(err(format!(
                "grid: Nyquist frequency {} must exceed the test spectrum radius {TEST_SPECTRUM_RADIUS}",
                g.points as f64 / (2.0 * g.extent)
            )));
        }
        let grid = GridSpec::cube(n, g.extent, g.points).map_err(|e| err(format!("grid: {e}")))?;
        if config.family.seeds == 0 {
            return Err(err("family.seeds must be positive".into()));
        }
        if !(config.family.eps > 0.0 && config.family.eps < 0.5) {
            return Err(err(format!("family.eps must lie in (0, 1/2), got {}", config.family.eps)));
        }
        let sweep = &config.sweep;
        if sweep.p.is_empty() || sweep.p.iter().any(|p| !(*p > 1.0) || !p.is_finite()) {
            return Err(err("sweep.p must be a non-empty list of values in (1, ∞)".into()));
        }
        if sweep.beta.is_empty() || sweep.beta.iter().any(|b| matches!(b, BetaSpec::Fixed(v) if !v.is_finite())) {
            return Err(err("sweep.beta must be a non-empty list of numbers or \"weighted\"".into()));
        }
        if sweep.k.is_empty() || sweep.k.contains(&0) {
            return Err(err("sweep.k must be a non-empty list of positive integers".into()));
        }
        if let Some(a) = &sweep.alpha {
            if a.is_empty() {
                return Err(err("sweep.alpha must not be empty".into()));
            }
        }

        let mut cells = Vec::new();
        for &tag in &config.suites {
            let ks: Vec<u32> = if tag.iterated() { sweep.k.clone() } else { vec![1] };
            let alphas = match (&sweep.alpha, tag) {
                (_, TheoremTag::T5_1) => vec![2.0],
                (Some(a), _) => a.clone(),
                (None, _) => default_alphas(tag),
            };
            for &k in &ks {
                for &alpha in &alphas {
                    tag.validate(&group, alpha, k).map_err(|e| err(format!("suite {tag}: {e}")))?;
                    cells.push(StudyCell { tag, alpha, k });
                }
            }
        }
        Ok(Self { config, group: Arc::new(group), grid, cells })
    }

    /// The configured kernel, iterated until its moments vanish past `[α]`.
    pub fn kernel_for(&self, alpha: f64, base: &Arc<AveragingKernel>) -> Result<Arc<AveragingKernel>, aniso_lp::Error> {
        // K^(j) has vanishing moments of orders 1..2j−1.
        let j = ((alpha.floor() + 2.0) / 2.0).floor().max(1.0) as u32;
        if j == 1 {
            return Ok(base.clone());
        }
        let density = base.iterated_kernel(j)?;
        Ok(Arc::new(AveragingKernel::from_density(density, (2 * j - 1) as f64, format!("{}^({j})", base.tag()))?))
    }

    pub fn base_kernel(&self) -> Arc<AveragingKernel> {
        Arc::new(match self.config.kernel {
            KernelChoice::Ball => ball_averaging_kernel(&self.group),
            KernelChoice::Bump => bump_kernel(self.group.dim()),
        })
    }

    pub fn family(&self, stream: &str) -> Family {
        Family::derived(self.group.clone(), self.grid.clone(), self.config.master_seed, stream, self.config.family.seeds, self.config.family.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Experiment, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        Experiment::validate(config)
    }

    #[test]
    fn empty_config_uses_defaults() {
        let e = parse("{}").unwrap();
        assert_eq!(e.grid.points(), &[64, 64]);
        assert_eq!(e.config.family.seeds, 32);
        assert!(e.cells.iter().any(|c| c.tag == TheoremTag::T5_1));
        assert_eq!(e.cells.iter().filter(|c| c.tag == TheoremTag::T1_2).count(), 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(parse(r#"{"colour": 1}"#).is_err());
        assert!(parse(r#"{"grid": {"extent": 8, "points": 64, "spacing": 1}}"#).is_err());
        let e = parse(r#"{"suites": ["T1.2"], "sweep": {"alpha": [5.0]}}"#).err().unwrap();
        assert!(e.0.contains("alpha"), "{e}");
        assert!(parse(r#"{"grid": {"extent": 16, "points": 64}}"#).is_err());
        assert!(parse(r#"{"suites": ["T5.1"], "group": {"matrix": [[1, 0], [0, 1]]}}"#).is_err());
        assert!(parse(r#"{"sweep": {"beta": ["heavy"]}}"#).is_err());
    }

    #[test]
    fn beta_accepts_numbers_and_the_default() {
        let e = parse(r#"{"sweep": {"beta": [0, 0.5, "weighted"]}}"#).unwrap();
        assert_eq!(e.config.sweep.beta.len(), 3);
        assert!(matches!(e.config.sweep.beta[2], BetaSpec::Default(_)));
    }

    #[test]
    fn kernels_are_iterated_for_large_alpha() {
        let e = parse(r#"{"grid": {"extent": 4, "points": 32}}"#).unwrap();
        let base = e.base_kernel();
        assert!(Arc::ptr_eq(&e.kernel_for(1.5, &base).unwrap(), &base));
        let k2 = e.kernel_for(2.5, &base).unwrap();
        assert!(aniso_lp::kernels::check_moment_class(&k2, 2.5).pass);
    }
}
