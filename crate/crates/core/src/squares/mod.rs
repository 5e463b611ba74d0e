//! Square functions `(∫ |f ∗ ψ_t|² dt/t)^{1/2}` and their relatives,
//! evaluated spectrally one scale node at a time.
//!
//! Every kind reduces to the same loop: per node `t` multiply the spectrum
//! of `f` by one or more symbols `s(δ_t^* ξ)`, transform back and accumulate
//! `w_j |·|²`. The measure `dt/t^{1+2α}` is folded into the node weights.

mod marcinkiewicz;
mod quadrature;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

pub use marcinkiewicz::{marcinkiewicz, MarcinkiewiczFunction};
pub use quadrature::TQuadrature;

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{write_field, FieldFile, GridSpec, SpatialField, SpectralField};
use crate::kernels::{check_moment_class, AveragingKernel, LpProfile, ProfileSymbol};
use crate::operators::{adjoint_dilations, mat_vec};

/// Largest estimated tail fraction accepted before reporting a coverage
/// failure.
pub const MAX_TAIL_FRACTION: f64 = 1e-6;

/// Spectral coefficients below this fraction of the largest are treated as
/// zero when choosing the frequencies a square function is evaluated on.
const SUPPORT_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareFunctionResult {
    /// Non-negative real samples.
    pub field: SpatialField,
    pub quadrature: TQuadrature,
    /// Estimated fraction of `∫_0^∞` lying outside the quadrature range.
    pub truncation_note: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SquareMetadata {
    pub profile: String,
    pub alpha: Option<f64>,
    pub k: Option<u32>,
}

#[derive(Serialize)]
struct ExportRecord<'a> {
    #[serde(flatten)]
    meta: &'a SquareMetadata,
    quadrature: &'a TQuadrature,
    truncation_note: f64,
}

impl SquareFunctionResult {
    /// Writes the field as `.fld` and a JSON description next to it.
    pub fn export(&self, field_path: impl AsRef<Path>, json_path: impl AsRef<Path>, meta: &SquareMetadata) -> Result<()> {
        write_field(field_path, &FieldFile::Spatial(self.field.clone()))?;
        let record = ExportRecord { meta, quadrature: &self.quadrature, truncation_note: self.truncation_note };
        fs::write(json_path, serde_json::to_string_pretty(&record)?)?;
        Ok(())
    }

    /// Samples as reals.
    pub fn values(&self) -> Vec<f64> {
        self.field.samples.iter().map(|z| z.re).collect()
    }
}

/// How the scale nodes are chosen.
#[derive(Debug, Clone)]
pub enum ScaleGrid {
    /// Window fitted to the spectral support of the inputs.
    Auto(AutoScale),
    /// A caller-supplied rule, used as is.
    Fixed(TQuadrature),
}

impl Default for ScaleGrid {
    fn default() -> Self {
        ScaleGrid::Auto(AutoScale::default())
    }
}

/// For inputs with spectrum in `a ≤ ρ^* ≤ b` the core window is
/// `[2^{−margin}/b, 2^{margin}/a]` at `per_octave` nodes per octave. Tails
/// at `tail_per_octave` are added octave by octave until the integrand
/// falls below `tail_tolerance` of the core total.
#[derive(Debug, Clone, Copy)]
pub struct AutoScale {
    pub margin_octaves: f64,
    pub per_octave: usize,
    pub tail_per_octave: usize,
    pub tail_tolerance: f64,
    pub max_tail_octaves: usize,
}

impl Default for AutoScale {
    fn default() -> Self {
        Self { margin_octaves: 4.0, per_octave: 16, tail_per_octave: 4, tail_tolerance: 1e-10, max_tail_octaves: 64 }
    }
}

impl AutoScale {
    pub fn uniform(per_octave: usize) -> Self {
        Self { per_octave, tail_per_octave: per_octave, ..Self::default() }
    }
}

/// Which form of `(1 − Φ̂)^k` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationRoute {
    /// `(1 − Φ̂)^k`, from the deficit directly.
    Power,
    /// `1 − K̂` with `K̂ = −Σ_{j=1}^k (−1)^j C(k,j) Φ̂^j`.
    Binomial,
}

/// A square function, described by its per-scale symbols.
#[derive(Debug, Clone)]
pub enum SquareKind {
    /// `g_Ψ` for a list of generators (one entry gives `g_ψ`).
    Profiles(Vec<LpProfile>),
    /// `(∫ |(I − Φ_t∗)^k f|² dt/t^{1+2α})^{1/2}`; `k = 1` is `G_α`.
    Averaging { kernel: Arc<AveragingKernel>, alpha: f64, k: u32, route: IterationRoute },
    /// The same applied to `𝓘_α f`; `k = 1` is `H_α`.
    Potential { kernel: Arc<AveragingKernel>, alpha: f64, k: u32 },
}

/// Evaluation data shared by all fields of a batch.
struct Plan {
    components: Vec<ProfileSymbol>,
    prefilter: Option<f64>,
    weight_power: f64,
}

fn binomial(k: u32, j: u32) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc * (k - j + i) as f64 / i as f64)
}

impl SquareKind {
    fn plan(&self, group: &DilationGroup) -> Result<Plan> {
        match self {
            SquareKind::Profiles(psis) => {
                if psis.is_empty() {
                    return Err(Error::Domain("need at least one profile".into()));
                }
                if psis.iter().any(|p| p.dim() != group.dim()) {
                    return Err(Error::Shape("profile and group dimensions differ".into()));
                }
                let components = psis
                    .iter()
                    .map(|p| {
                        let p = p.clone();
                        Arc::new(move |eta: &[f64], r: f64| p.eval(eta, r)) as ProfileSymbol
                    })
                    .collect();
                Ok(Plan { components, prefilter: None, weight_power: 0.0 })
            }
            SquareKind::Averaging { kernel, alpha, k, route } => {
                check_kernel(group, kernel, *k)?;
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
                }
                Ok(Plan { components: vec![deficit_symbol(kernel, *k, *route)], prefilter: None, weight_power: -2.0 * alpha })
            }
            SquareKind::Potential { kernel, alpha, k } => {
                check_kernel(group, kernel, *k)?;
                // H_α is defined for α < γ; iterating raises the kernel cap to 2k.
                let upper = if *k == 1 { group.gamma() } else { group.gamma().min(2.0 * *k as f64) };
                if !(*alpha > 0.0 && *alpha < upper) {
                    return Err(Error::Domain(format!("alpha must lie in (0, {upper}), got {alpha}")));
                }
                Ok(Plan {
                    components: vec![deficit_symbol(kernel, *k, IterationRoute::Power)],
                    prefilter: Some(*alpha),
                    weight_power: -2.0 * alpha,
                })
            }
        }
    }
}

fn check_kernel(group: &DilationGroup, kernel: &AveragingKernel, k: u32) -> Result<()> {
    if kernel.dim() != group.dim() {
        return Err(Error::Shape("kernel and group dimensions differ".into()));
    }
    if k == 0 {
        return Err(Error::Domain("iteration count must be at least 1".into()));
    }
    if k > 1 && !check_moment_class(kernel, 1.0).pass {
        return Err(Error::Domain(format!("kernel {} fails the order-1 moment check", kernel.tag())));
    }
    Ok(())
}

fn deficit_symbol(kernel: &Arc<AveragingKernel>, k: u32, route: IterationRoute) -> ProfileSymbol {
    let kernel = kernel.clone();
    match route {
        IterationRoute::Power => Arc::new(move |eta: &[f64], _| kernel.deficit(eta).powu(k)),
        IterationRoute::Binomial => Arc::new(move |eta: &[f64], _| {
            let phi = kernel.fourier(eta);
            let mut k_hat = Complex64::new(0.0, 0.0);
            let mut power = Complex64::new(1.0, 0.0);
            for j in 1..=k {
                power *= phi;
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                k_hat += sign * binomial(k, j) * power;
            }
            1.0 - k_hat
        }),
    }
}

/// Spectra of a batch restricted to their joint support.
pub(crate) struct SupportedSpectra {
    pub grid: GridSpec,
    /// Flat lattice indices of the support.
    pub support: Vec<usize>,
    /// Frequencies of the support, `dim` entries each.
    pub freqs: Vec<f64>,
    /// `ρ^*` on the support.
    pub rho: Vec<f64>,
    /// One coefficient vector per field, aligned with `support`.
    pub coeffs: Vec<Vec<Complex64>>,
}

impl SupportedSpectra {
    pub(crate) fn new(fields: &[SpatialField], group: &DilationGroup, prefilter: Option<f64>) -> Result<Self> {
        let grid = fields[0].grid.clone();
        if fields.iter().any(|f| f.grid != grid) {
            return Err(Error::Shape("all fields of a batch must share a grid".into()));
        }
        let norms = grid.dual_norms(group)?;
        let mut spectra: Vec<SpectralField> = fields.iter().map(|f| f.to_spectrum()).collect();
        if let Some(alpha) = prefilter {
            for (f, s) in fields.iter().zip(spectra.iter_mut()) {
                let threshold = 1e-10 * f.l2_norm();
                let mean = s.coeffs[0].norm();
                if mean > threshold {
                    return Err(Error::MeanNotZero { mean, threshold });
                }
                for (c, &r) in s.coeffs.iter_mut().zip(norms.iter()) {
                    *c = if r == 0.0 { Complex64::new(0.0, 0.0) } else { *c * r.powf(-alpha) };
                }
            }
        }
        let peak = spectra.iter().flat_map(|s| s.coeffs.iter()).map(|c| c.norm()).fold(0.0, f64::max);
        let cut = SUPPORT_THRESHOLD * peak;
        let support: Vec<usize> = (0..grid.len())
            .filter(|&i| norms[i] > 0.0 && spectra.iter().any(|s| s.coeffs[i].norm() > cut))
            .collect();
        let n = grid.dim();
        let mut freqs = vec![0.0; support.len() * n];
        for (q, &i) in support.iter().enumerate() {
            grid.frequency(i, &mut freqs[q * n..(q + 1) * n]);
        }
        let rho = support.iter().map(|&i| norms[i]).collect();
        let coeffs = spectra.iter().map(|s| support.iter().map(|&i| s.coeffs[i]).collect()).collect();
        Ok(Self { grid, support, freqs, rho, coeffs })
    }

    pub(crate) fn band(&self) -> Option<(f64, f64)> {
        if self.rho.is_empty() {
            return None;
        }
        let a = self.rho.iter().copied().fold(f64::INFINITY, f64::min);
        let b = self.rho.iter().copied().fold(0.0, f64::max);
        Some((a, b))
    }
}

/// Per-node symbol values on the support, `components × support`.
fn node_symbols(plan: &Plan, spectra: &SupportedSpectra, dilation: &[f64], t: f64) -> Vec<Vec<Complex64>> {
    let n = spectra.grid.dim();
    let mut eta = vec![0.0; n];
    let mut out = vec![Vec::with_capacity(spectra.support.len()); plan.components.len()];
    for (q, &r) in spectra.rho.iter().enumerate() {
        mat_vec(dilation, &spectra.freqs[q * n..(q + 1) * n], &mut eta);
        for (c, sym) in plan.components.iter().enumerate() {
            out[c].push(sym(&eta, t * r));
        }
    }
    out
}

/// `t^{power} Σ_ξ |F(ξ)|² Σ_c |s_c(δ_t^* ξ)|² / ∏L` for each field; the
/// scale integrand of `‖g(f)‖₂²`.
fn scale_energy(plan: &Plan, spectra: &SupportedSpectra, group: &DilationGroup, t: f64) -> Result<Vec<f64>> {
    let m = adjoint_dilations(group, &[t])?;
    let symbols = node_symbols(plan, spectra, &m[0], t);
    Ok(energy_from_symbols(plan, spectra, &symbols, t))
}

fn energy_from_symbols(plan: &Plan, spectra: &SupportedSpectra, symbols: &[Vec<Complex64>], t: f64) -> Vec<f64> {
    let scale = t.powf(plan.weight_power) / spectra.grid.volume();
    spectra
        .coeffs
        .iter()
        .map(|coeffs| {
            let mut sum = 0.0;
            for (q, c) in coeffs.iter().enumerate() {
                let s: f64 = symbols.iter().map(|sym| sym[q].norm_sqr()).sum();
                sum += c.norm_sqr() * s;
            }
            sum * scale
        })
        .collect()
}

/// Tail beyond `edge` of `∫ J dt/t`, extrapolating the decay measured
/// between `edge` and `inner` (one octave inward) geometrically.
fn tail_estimate(at_edge: f64, inner: f64) -> f64 {
    if at_edge == 0.0 {
        return 0.0;
    }
    if !(inner > at_edge) {
        return f64::INFINITY;
    }
    let rate = (inner / at_edge).ln() / std::f64::consts::LN_2;
    at_edge / (rate * std::f64::consts::LN_2)
}

fn choose_quadrature(plan: &Plan, spectra: &SupportedSpectra, group: &DilationGroup, auto: &AutoScale) -> Result<TQuadrature> {
    let (a, b) = spectra.band().expect("non-empty support");
    let margin = 2f64.powf(auto.margin_octaves);
    let core = [1.0 / (margin * b), margin / a];
    // Rough core totals at two nodes per octave.
    let coarse = TQuadrature::log_uniform(core[0], core[1], 2)?;
    let mut totals = vec![0.0; spectra.coeffs.len()];
    for (&t, &w) in coarse.nodes().iter().zip(coarse.weights()) {
        for (acc, e) in totals.iter_mut().zip(scale_energy(plan, spectra, group, t)?) {
            *acc += w * e;
        }
    }
    let mut ends = core;
    for (side, factor) in [(0usize, 0.5f64), (1, 2.0)] {
        let mut previous = scale_energy(plan, spectra, group, ends[side])?;
        for _ in 0..auto.max_tail_octaves {
            let t = ends[side] * factor;
            let current = scale_energy(plan, spectra, group, t)?;
            ends[side] = t;
            let done = current
                .iter()
                .zip(&previous)
                .zip(&totals)
                .all(|((&c, &p), &total)| tail_estimate(c, p) <= auto.tail_tolerance * total || total == 0.0);
            if done {
                break;
            }
            previous = current;
        }
    }
    TQuadrature::graded(ends[0], ends[1], core, auto.per_octave, auto.tail_per_octave)
}

/// Runs a square function over a batch of fields sharing one grid.
pub fn square_batch(
    fields: &[SpatialField],
    kind: &SquareKind,
    group: &DilationGroup,
    scale: &ScaleGrid,
) -> Result<Vec<SquareFunctionResult>> {
    if fields.is_empty() {
        return Ok(Vec::new());
    }
    let plan = kind.plan(group)?;
    let spectra = SupportedSpectra::new(fields, group, plan.prefilter)?;
    let grid = spectra.grid.clone();
    if spectra.support.is_empty() {
        let quadrature = match scale {
            ScaleGrid::Fixed(q) => q.clone(),
            ScaleGrid::Auto(_) => TQuadrature::log_uniform(0.5, 2.0, 1)?,
        };
        return Ok(fields
            .iter()
            .map(|_| SquareFunctionResult { field: SpatialField::zeros(&grid), quadrature: quadrature.clone(), truncation_note: 0.0 })
            .collect());
    }
    let quad = match scale {
        ScaleGrid::Fixed(q) => q.clone(),
        ScaleGrid::Auto(auto) => choose_quadrature(&plan, &spectra, group, auto)?,
    };
    let mats = adjoint_dilations(group, quad.nodes())?;
    let weights = quad.weights_with_power(plan.weight_power);
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = vec![vec![0.0f64; grid.len()]; fields.len()];
    let mut totals = vec![0.0; fields.len()];
    for ((m, &t), (&w, &base_w)) in mats.iter().zip(quad.nodes()).zip(weights.iter().zip(quad.weights())) {
        let symbols = node_symbols(&plan, &spectra, m, t);
        for (total, e) in totals.iter_mut().zip(energy_from_symbols(&plan, &spectra, &symbols, t)) {
            *total += base_w * e;
        }
        if symbols.iter().all(|s| s.iter().all(|v| *v == zero)) {
            continue;
        }
        acc.par_iter_mut().zip(&spectra.coeffs).for_each(|(acc, coeffs)| {
            for sym in &symbols {
                let mut full = vec![zero; grid.len()];
                for ((&i, c), s) in spectra.support.iter().zip(coeffs).zip(sym) {
                    full[i] = c * s;
                }
                let spatial = SpectralField { grid: grid.clone(), coeffs: full }.to_spatial();
                for (a, v) in acc.iter_mut().zip(&spatial.samples) {
                    *a += w * v.norm_sqr();
                }
            }
        });
    }
    // Tails at both ends, from the decay over the outermost octave.
    let [t0, t1] = quad.range();
    let lo = scale_energy(&plan, &spectra, group, t0)?;
    let lo_in = scale_energy(&plan, &spectra, group, 2.0 * t0)?;
    let hi = scale_energy(&plan, &spectra, group, t1)?;
    let hi_in = scale_energy(&plan, &spectra, group, 0.5 * t1)?;
    let mut results = Vec::with_capacity(fields.len());
    for (i, acc) in acc.into_iter().enumerate() {
        let tail = tail_estimate(lo[i], lo_in[i]) + tail_estimate(hi[i], hi_in[i]);
        let note = if totals[i] > 0.0 { tail / totals[i] } else if tail > 0.0 { f64::INFINITY } else { 0.0 };
        if note > MAX_TAIL_FRACTION {
            return Err(Error::QuadratureCoverage { tail: note });
        }
        let samples = acc.into_iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect();
        results.push(SquareFunctionResult {
            field: SpatialField { grid: grid.clone(), samples },
            quadrature: quad.clone(),
            truncation_note: note,
        });
    }
    Ok(results)
}

fn single(f: &SpatialField, kind: SquareKind, group: &DilationGroup, scale: &ScaleGrid) -> Result<SquareFunctionResult> {
    Ok(square_batch(std::slice::from_ref(f), &kind, group, scale)?.remove(0))
}

/// `g_ψ(f) = (∫ |f ∗ ψ_t|² dt/t)^{1/2}`.
pub fn g_psi(f: &SpatialField, psi: &LpProfile, group: &DilationGroup, scale: &ScaleGrid) -> Result<SquareFunctionResult> {
    single(f, SquareKind::Profiles(vec![psi.clone()]), group, scale)
}

/// `g_Ψ(f)` for a vector of generators.
pub fn g_vector(f: &SpatialField, psis: &[LpProfile], group: &DilationGroup, scale: &ScaleGrid) -> Result<SquareFunctionResult> {
    single(f, SquareKind::Profiles(psis.to_vec()), group, scale)
}

/// `G_α(f) = (∫ |f − Φ_t ∗ f|² dt/t^{1+2α})^{1/2}`; with the ball kernel
/// this compares `f` with its ball averages.
pub fn avg_square(
    f: &SpatialField,
    kernel: &Arc<AveragingKernel>,
    alpha: f64,
    group: &DilationGroup,
    scale: &ScaleGrid,
) -> Result<SquareFunctionResult> {
    iterated_square(f, kernel, alpha, 1, IterationRoute::Power, group, scale)
}

/// `H_α(f) = G_α(𝓘_α f)` for `0 < α < γ`.
pub fn potential_square(
    f: &SpatialField,
    kernel: &Arc<AveragingKernel>,
    alpha: f64,
    group: &DilationGroup,
    scale: &ScaleGrid,
) -> Result<SquareFunctionResult> {
    iterated_potential_square(f, kernel, alpha, 1, group, scale)
}

/// `(∫ |(I − Φ_t∗)^k f|² dt/t^{1+2α})^{1/2}`.
pub fn iterated_square(
    f: &SpatialField,
    kernel: &Arc<AveragingKernel>,
    alpha: f64,
    k: u32,
    route: IterationRoute,
    group: &DilationGroup,
    scale: &ScaleGrid,
) -> Result<SquareFunctionResult> {
    single(f, SquareKind::Averaging { kernel: kernel.clone(), alpha, k, route }, group, scale)
}

/// The iterated square function of `𝓘_α f`, `0 < α < min(2k, γ)`.
pub fn iterated_potential_square(
    f: &SpatialField,
    kernel: &Arc<AveragingKernel>,
    alpha: f64,
    k: u32,
    group: &DilationGroup,
    scale: &ScaleGrid,
) -> Result<SquareFunctionResult> {
    single(f, SquareKind::Potential { kernel: kernel.clone(), alpha, k }, group, scale)
}
