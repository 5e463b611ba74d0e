//! Weighted Sobolev norms, equivalence-ratio studies over random
//! band-limited families and the parabolic derivative characterization.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{random_test_function, weighted_lp_norm, weighted_lp_norm_with, GridSpec, SpatialField, Weight};
use crate::kernels::{check_moment_class, radial_profile, shipped_radial_eta, AveragingKernel};
use crate::operators::{riesz_potential, spatial_derivative};
use crate::squares::{square_batch, IterationRoute, ScaleGrid, SquareKind};

/// `‖f‖_{p,w} + ‖𝓘_{−α} f‖_{p,w}`.
pub fn sobolev_norm(f: &SpatialField, group: &DilationGroup, alpha: f64, p: f64, w: &Weight) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let d = riesz_potential(f, group, -alpha)?;
    Ok(weighted_lp_norm(f, p, w)? + weighted_lp_norm(&d, p, w)?)
}

/// The norm equivalences a study can measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremTag {
    /// `‖𝓘_{−α} f‖ ≃ ‖B_α f‖`, ball averages, `0 < α < 2`.
    #[serde(rename = "T1.2")]
    T1_2,
    /// `‖C_α f‖ ≃ ‖f‖`, ball averages of `𝓘_α f`, `0 < α < 2`.
    #[serde(rename = "T1.3")]
    T1_3,
    /// `‖H_α f‖ ≃ ‖f‖`, `0 < α < γ`.
    #[serde(rename = "T1.4")]
    T1_4,
    /// `‖𝓘_{−α} f‖ ≃ ‖G_α f‖`, `0 < α < γ`.
    #[serde(rename = "T1.5")]
    T1_5,
    /// `‖U_α^{(k)} f‖ ≃ ‖f‖`, `0 < α < min(2k, γ)`.
    #[serde(rename = "T4.1")]
    T4_1,
    /// `‖𝓘_{−α} f‖ ≃ ‖E_α^{(k)} f‖`, `0 < α < min(2k, γ)`.
    #[serde(rename = "T4.2")]
    T4_2,
    /// `‖𝓘_{−2} f‖ ≃ ‖∂₁² f‖ + ‖∂₂ f‖` for `P = diag(1, 2)`.
    #[serde(rename = "T5.1")]
    T5_1,
}

impl TheoremTag {
    pub const ALL: [TheoremTag; 7] = [Self::T1_2, Self::T1_3, Self::T1_4, Self::T1_5, Self::T4_1, Self::T4_2, Self::T5_1];

    pub fn label(&self) -> &'static str {
        match self {
            Self::T1_2 => "T1.2",
            Self::T1_3 => "T1.3",
            Self::T1_4 => "T1.4",
            Self::T1_5 => "T1.5",
            Self::T4_1 => "T4.1",
            Self::T4_2 => "T4.2",
            Self::T5_1 => "T5.1",
        }
    }

    /// Whether the tag takes an iteration count other than one.
    pub fn iterated(&self) -> bool {
        matches!(self, Self::T4_1 | Self::T4_2)
    }

    /// Open interval of admissible `α`.
    pub fn alpha_range(&self, group: &DilationGroup, k: u32) -> (f64, f64) {
        match self {
            Self::T1_2 | Self::T1_3 => (0.0, 2.0),
            Self::T1_4 | Self::T1_5 => (0.0, group.gamma()),
            Self::T4_1 | Self::T4_2 => (0.0, group.gamma().min(2.0 * k as f64)),
            Self::T5_1 => (0.0, f64::INFINITY),
        }
    }

    /// Rejects parameters outside the tag's stated range.
    pub fn validate(&self, group: &DilationGroup, alpha: f64, k: u32) -> Result<()> {
        if *self == Self::T5_1 {
            if !group.is_diagonal(&[1.0, 2.0]) {
                return Err(Error::Range("T5.1 needs the group diag(1, 2)".into()));
            }
            return Ok(());
        }
        if k == 0 || (!self.iterated() && k != 1) {
            return Err(Error::Range(format!("{} does not take k = {k}", self.label())));
        }
        let (lo, hi) = self.alpha_range(group, k);
        if !(alpha > lo && alpha < hi) {
            return Err(Error::Range(format!("{} needs alpha in ({lo}, {hi}), got {alpha}", self.label())));
        }
        Ok(())
    }
}

impl fmt::Display for TheoremTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TheoremTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Domain(format!("unknown suite tag {s:?}")))
    }
}

/// Seeds, band and grid of a random test family. Members are
/// `random_test_function(seed, group, grid, eps)`.
#[derive(Debug, Clone)]
pub struct Family {
    pub group: Arc<DilationGroup>,
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    pub eps: f64,
}

impl Family {
    pub const DEFAULT_SIZE: usize = 32;
    pub const DEFAULT_EPS: f64 = 0.125;

    /// 32 consecutive seeds from `first_seed`, band `1/8`.
    pub fn new(group: Arc<DilationGroup>, grid: GridSpec, first_seed: u64) -> Self {
        let seeds = (0..Self::DEFAULT_SIZE as u64).map(|i| first_seed.wrapping_add(i)).collect();
        Self { group, grid, seeds, eps: Self::DEFAULT_EPS }
    }

    /// `count` member seeds drawn from the ChaCha8 stream named `stream` under
    /// `master_seed`.
    pub fn derived(group: Arc<DilationGroup>, grid: GridSpec, master_seed: u64, stream: &str, count: usize, eps: f64) -> Self {
        Self { group, grid, seeds: derive_seeds(master_seed, stream, count), eps }
    }

    pub fn fields(&self, grid: &GridSpec) -> Result<Vec<SpatialField>> {
        self.seeds.par_iter().map(|&s| random_test_function(s, &self.group, grid, self.eps)).collect()
    }
}

/// Seeds from a counter-based generator: ChaCha8 keyed by `master_seed`,
/// stream chosen by an FNV-1a hash of `stream`.
pub fn derive_seeds(master_seed: u64, stream: &str, count: usize) -> Vec<u64> {
    let id = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// A weight exponent: fixed, or the default `0.3·γ·(p − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Fixed(f64),
    Default(DefaultBeta),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultBeta {
    Weighted,
}

impl BetaSpec {
    pub fn resolve(&self, group: &DilationGroup, p: f64) -> f64 {
        match self {
            BetaSpec::Fixed(b) => *b,
            BetaSpec::Default(_) => 0.3 * group.gamma() * (p - 1.0),
        }
    }
}

/// How `H_α` is realized for T1.4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// From the averaging kernel.
    #[default]
    Kernel,
    /// `g_ψ` with the normalized radial profile, exact at `p = 2`.
    NormalizedRadial,
}

#[derive(Debug, Clone)]
pub struct StudyParams {
    pub alpha: f64,
    pub k: u32,
    pub p: Vec<f64>,
    pub beta: Vec<BetaSpec>,
    pub kernel: Arc<AveragingKernel>,
    pub construction: Construction,
    pub scale: ScaleGrid,
    /// Skip the doubled-grid repeat; `refinement_drift` is then NaN.
    pub skip_refinement: bool,
}

impl StudyParams {
    /// `p ∈ {1.5, 2, 3}`, `β ∈ {0, default}`, automatic scale window.
    pub fn new(alpha: f64, k: u32, kernel: Arc<AveragingKernel>) -> Self {
        Self {
            alpha,
            k,
            p: vec![1.5, 2.0, 3.0],
            beta: vec![BetaSpec::Fixed(0.0), BetaSpec::Default(DefaultBeta::Weighted)],
            kernel,
            construction: Construction::Kernel,
            scale: ScaleGrid::default(),
            skip_refinement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSample {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// One `(α, p, β, k)` cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub theorem_tag: TheoremTag,
    pub alpha: f64,
    pub p: f64,
    pub beta: f64,
    pub k: u32,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub samples: Vec<RatioSample>,
    pub c_min: f64,
    pub c_max: f64,
    pub spread: f64,
    /// Spread on the doubled grid.
    pub refined_spread: f64,
    /// `|refined_spread / spread − 1|`.
    pub refinement_drift: f64,
}

impl EquivalenceReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ratio).collect()
    }
}

/// Per member: fields whose norms add up to the left side, and to the right.
type Sides = (Vec<SpatialField>, Vec<SpatialField>);

fn sides(tag: TheoremTag, group: &DilationGroup, params: &StudyParams, fields: Vec<SpatialField>) -> Result<Vec<Sides>> {
    let alpha = params.alpha;
    let values = |kind: SquareKind, inputs: &[SpatialField]| -> Result<Vec<SpatialField>> {
        Ok(square_batch(inputs, &kind, group, &params.scale)?.into_iter().map(|r| r.field).collect())
    };
    let kernel = params.kernel.clone();
    let potentials = |fields: &[SpatialField]| -> Result<Vec<SpatialField>> {
        fields.par_iter().map(|f| riesz_potential(f, group, -alpha)).collect()
    };
    let pair = |lhs: Vec<SpatialField>, rhs: Vec<SpatialField>| -> Vec<Sides> {
        lhs.into_iter().zip(rhs).map(|(l, r)| (vec![l], vec![r])).collect()
    };
    let averaging = |k: u32| SquareKind::Averaging { kernel: kernel.clone(), alpha, k, route: IterationRoute::Power };
    let potential = |k: u32| SquareKind::Potential { kernel: kernel.clone(), alpha, k };
    Ok(match tag {
        TheoremTag::T1_2 | TheoremTag::T1_5 => pair(potentials(&fields)?, values(averaging(1), &fields)?),
        TheoremTag::T1_3 => pair(values(potential(1), &fields)?, fields),
        TheoremTag::T1_4 => match params.construction {
            Construction::Kernel => pair(values(potential(1), &fields)?, fields),
            Construction::NormalizedRadial => {
                let psi = radial_profile(group.dim(), shipped_radial_eta())?;
                pair(values(SquareKind::Profiles(vec![psi]), &fields)?, fields)
            }
        },
        TheoremTag::T4_1 => pair(values(potential(params.k), &fields)?, fields),
        TheoremTag::T4_2 => pair(potentials(&fields)?, values(averaging(params.k), &fields)?),
        TheoremTag::T5_1 => fields
            .par_iter()
            .map(|f| {
                let lhs = riesz_potential(f, group, -2.0)?;
                Ok((vec![lhs], vec![spatial_derivative(f, &[2, 0])?, spatial_derivative(f, &[0, 1])?]))
            })
            .collect::<Result<_>>()?,
    })
}

fn spread_of(samples: &[RatioSample]) -> (f64, f64, f64) {
    let c_min = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let c_max = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    (c_min, c_max, c_max / c_min)
}

/// Ratio samples for every `(p, β)` cell, in seed order.
fn cell_samples(
    family: &Family,
    params: &StudyParams,
    grid: &GridSpec,
    sides: &[Sides],
    weight_offset: f64,
) -> Result<Vec<(f64, f64, Vec<RatioSample>)>> {
    let group = &family.group;
    let mut out = Vec::new();
    for &p in &params.p {
        for spec in &params.beta {
            let beta = spec.resolve(group, p);
            let w = if beta == 0.0 { Weight::constant() } else { Weight::power(group.clone(), beta, weight_offset)? };
            let wv = w.values_on(grid)?;
            let norm_sum = |fs: &[SpatialField]| -> Result<f64> {
                fs.iter().map(|f| weighted_lp_norm_with(f, p, &wv)).sum()
            };
            let samples = family
                .seeds
                .par_iter()
                .zip(sides)
                .map(|(&seed, (l, r))| {
                    let (lhs, rhs) = (norm_sum(l)?, norm_sum(r)?);
                    Ok(RatioSample { seed, lhs, rhs, ratio: lhs / rhs })
                })
                .collect::<Result<Vec<_>>>()?;
            out.push((p, beta, samples));
        }
    }
    Ok(out)
}

/// Measures `lhs/rhs` for each member of `family` in every `(p, β)` cell of
/// `params`, then repeats on the doubled grid for the refinement drift.
/// Weights are `(¼·cell + ρ(x))^β` with the cell of the coarse grid.
pub fn equivalence_study(tag: TheoremTag, family: &Family, params: &StudyParams) -> Result<Vec<EquivalenceReport>> {
    tag.validate(&family.group, params.alpha, params.k)?;
    if family.seeds.is_empty() {
        return Err(Error::Domain("the family has no members".into()));
    }
    if tag != TheoremTag::T5_1 {
        // Φ ∈ M^α: moments up to order [α] vanish (order 1 when iterating).
        let order = if tag.iterated() { params.alpha.min(1.0) } else { params.alpha };
        if !check_moment_class(&params.kernel, order).pass {
            return Err(Error::Range(format!("kernel {} lacks the vanishing moments needed at alpha = {}", params.kernel.tag(), params.alpha)));
        }
    }
    if params.p.iter().any(|p| !(*p > 1.0) || !p.is_finite()) {
        return Err(Error::Range("p must lie in (1, ∞)".into()));
    }
    let cell = (0..family.grid.dim()).map(|a| family.grid.spacing(a)).fold(0.0, f64::max);
    let offset = 0.25 * cell;
    let coarse = cell_samples(family, params, &family.grid, &sides(tag, &family.group, params, family.fields(&family.grid)?)?, offset)?;
    let fine = if params.skip_refinement {
        None
    } else {
        let grid = family.grid.refined();
        Some(cell_samples(family, params, &grid, &sides(tag, &family.group, params, family.fields(&grid)?)?, offset)?)
    };
    let k = if tag.iterated() { params.k } else { 1 };
    let alpha = if tag == TheoremTag::T5_1 { 2.0 } else { params.alpha };
    let mut reports = Vec::with_capacity(coarse.len());
    for (i, (p, beta, samples)) in coarse.into_iter().enumerate() {
        let (c_min, c_max, spread) = spread_of(&samples);
        let refined_spread = fine.as_ref().map_or(f64::NAN, |f| spread_of(&f[i].2).2);
        let refinement_drift = (refined_spread / spread - 1.0).abs();
        if samples.iter().any(|s| !(s.ratio > 0.0) || !s.ratio.is_finite()) {
            return Err(Error::Domain(format!("{tag} produced a non-positive or non-finite ratio")));
        }
        reports.push(EquivalenceReport {
            theorem_tag: tag,
            alpha,
            p,
            beta,
            k,
            extent: family.grid.extent().to_vec(),
            points: family.grid.points().to_vec(),
            samples,
            c_min,
            c_max,
            spread,
            refined_spread,
            refinement_drift,
        });
    }
    Ok(reports)
}

/// `N(ξ) = (−4π²ξ₁² − 2πiξ₂)/ρ^*(ξ)²` for `P = diag(1, 2)`, zero at the origin.
pub fn diag12_symbol(group: &DilationGroup, xi: &[f64]) -> Complex64 {
    let r = group.rho(xi, true);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(-4.0 * PI * PI * xi[0] * xi[0], -2.0 * PI * xi[1]) / (r * r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diag12Check {
    /// `‖𝓘_{−2} f‖_{p,w}`.
    pub a: f64,
    /// `‖∂₁² f‖_{p,w} + ‖∂₂ f‖_{p,w}`.
    pub b: f64,
    pub norm_ratio: f64,
    /// `max |𝓘_{−2} f − T_{Ñ^{−1}}(Θ + Ξ)| / max |𝓘_{−2} f|`, zero for `f = 0`.
    pub reconstruction_error: f64,
}

/// Compares `𝓘_{−2} f` with `∂₁² f` and `∂₂ f` and rebuilds it as
/// `T_{Ñ^{−1}}(Θ + Ξ)`, `Θ = ∂₁² f`, `Ξ = ∂₂ f`, `Ñ(ξ) = N(−ξ)`.
pub fn diag12_derivative_check(f: &SpatialField, group: &DilationGroup, p: f64, w: &Weight) -> Result<Diag12Check> {
    if !group.is_diagonal(&[1.0, 2.0]) {
        return Err(Error::Domain("the derivative characterization needs P = diag(1, 2)".into()));
    }
    let lhs = riesz_potential(f, group, -2.0)?;
    let theta = spatial_derivative(f, &[2, 0])?;
    let xi_field = spatial_derivative(f, &[0, 1])?;
    let a = weighted_lp_norm(&lhs, p, w)?;
    let b = weighted_lp_norm(&theta, p, w)? + weighted_lp_norm(&xi_field, p, w)?;

    let source = theta.add(&xi_field)?.to_spectrum();
    let mut neg = [0.0; 2];
    let rebuilt = source
        .multiply(|xi, _| {
            neg[0] = -xi[0];
            neg[1] = -xi[1];
            let n = diag12_symbol(group, &neg);
            if n == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                1.0 / n
            }
        })
        .to_spatial();
    let scale = lhs.max_abs();
    let reconstruction_error = if scale == 0.0 { rebuilt.max_abs() } else { lhs.max_diff(&rebuilt)? / scale };
    let norm_ratio = if b == 0.0 { if a == 0.0 { 0.0 } else { f64::INFINITY } } else { a / b };
    Ok(Diag12Check { a, b, norm_ratio, reconstruction_error })
}
