//! The one-dimensional Marcinkiewicz functions, evaluated from their
//! defining formulas:
//!
//! `μ(f)(x)² = ∫ |F(x+t) + F(x−t) − 2F(x)|² dt/t³`,
//! `ν(f)(x)² = ∫ |F(x) − (G(x+t) − G(x−t))/(2t)|² dt/t³`,
//!
//! with `F' = f`, `G' = F`. Primitives and shifts are spectral; the scale
//! integral uses Gauss-Legendre panels in `log t`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use super::{choose_quadrature, scale_energy, tail_estimate, Plan, ScaleGrid, SquareFunctionResult, SupportedSpectra, MAX_TAIL_FRACTION};
use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{SpatialField, SpectralField};
use crate::kernels::{marcinkiewicz_profile, MarcinkiewiczVariant, ProfileSymbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarcinkiewiczFunction {
    Mu,
    Nu,
}

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Eight-point Gauss-Legendre nodes and weights on `[a, b]`.
fn gauss_legendre(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .flat_map(move |(&x, &w)| [(mid - half * x, half * w), (mid + half * x, half * w)])
}

/// `μ(f)` or `ν(f)` for a band-limited one-dimensional field. The scale
/// window (and the density of the Gauss-Legendre panels, eight nodes per
/// `8/per_octave` octaves) follows `scale`.
pub fn marcinkiewicz(f: &SpatialField, which: MarcinkiewiczFunction, scale: &ScaleGrid) -> Result<SquareFunctionResult> {
    if f.grid.dim() != 1 {
        return Err(Error::Domain(format!("Marcinkiewicz functions are one-dimensional, got dim {}", f.grid.dim())));
    }
    let group = DilationGroup::isotropic(1)?;
    let variant = match which {
        MarcinkiewiczFunction::Mu => MarcinkiewiczVariant::Sign,
        MarcinkiewiczFunction::Nu => MarcinkiewiczVariant::Combined,
    };
    let profile = marcinkiewicz_profile(variant);
    let plan = Plan {
        components: vec![std::sync::Arc::new(move |eta: &[f64], r: f64| profile.eval(eta, r)) as ProfileSymbol],
        prefilter: None,
        weight_power: 0.0,
    };
    let spectra = SupportedSpectra::new(std::slice::from_ref(f), &group, None)?;
    let grid = f.grid.clone();
    let (quad, per_octave) = match scale {
        ScaleGrid::Fixed(q) => {
            let [a, b] = q.range();
            let octaves = (b / a).log2();
            (q.clone(), ((q.len() as f64 / octaves).round() as usize).max(8))
        }
        ScaleGrid::Auto(auto) => {
            if spectra.support.is_empty() {
                let q = super::TQuadrature::log_uniform(0.5, 2.0, 1)?;
                return Ok(SquareFunctionResult { field: SpatialField::zeros(&grid), quadrature: q, truncation_note: 0.0 });
            }
            (choose_quadrature(&plan, &spectra, &group, auto)?, auto.per_octave.max(8))
        }
    };

    // F̂ = f̂/(2πiξ), Ĝ = F̂/(2πiξ), zero at ξ = 0.
    let spec = f.to_spectrum();
    let integrate = |c: &Complex64, xi: f64| if xi == 0.0 { Complex64::new(0.0, 0.0) } else { c / Complex64::new(0.0, 2.0 * PI * xi) };
    let prim = SpectralField {
        grid: grid.clone(),
        coeffs: spec.coeffs.iter().enumerate().map(|(i, c)| integrate(c, freq(&grid, i))).collect(),
    };
    let second = SpectralField {
        grid: grid.clone(),
        coeffs: prim.coeffs.iter().enumerate().map(|(i, c)| integrate(c, freq(&grid, i))).collect(),
    };
    let big_f = prim.to_spatial();
    let shift = |s: &SpectralField, t: f64| s.multiply(|xi, _| Complex64::from_polar(1.0, 2.0 * PI * xi[0] * t)).to_spatial();

    let [t0, t1] = quad.range();
    let (l0, l1) = (t0.ln(), t1.ln());
    let panel = 8.0 * LN_2 / per_octave as f64;
    let panels = ((l1 - l0) / panel).ceil().max(1.0) as usize;
    let h = (l1 - l0) / panels as f64;
    let mut acc = vec![0.0; grid.len()];
    for p in 0..panels {
        for (s, w) in gauss_legendre(l0 + p as f64 * h, l0 + (p + 1) as f64 * h) {
            let t = s.exp();
            let scale = w / (t * t);
            match which {
                MarcinkiewiczFunction::Mu => {
                    let plus = shift(&prim, t);
                    let minus = shift(&prim, -t);
                    for (i, a) in acc.iter_mut().enumerate() {
                        let d = plus.samples[i] + minus.samples[i] - 2.0 * big_f.samples[i];
                        *a += scale * d.norm_sqr();
                    }
                }
                MarcinkiewiczFunction::Nu => {
                    let plus = shift(&second, t);
                    let minus = shift(&second, -t);
                    for (i, a) in acc.iter_mut().enumerate() {
                        let d = big_f.samples[i] - (plus.samples[i] - minus.samples[i]) / (2.0 * t);
                        *a += scale * d.norm_sqr();
                    }
                }
            }
        }
    }

    let note = if spectra.support.is_empty() {
        0.0
    } else {
        let total = scale_energy_total(&plan, &spectra, &group, &quad)?;
        let tail = tail_estimate(scale_energy(&plan, &spectra, &group, t0)?[0], scale_energy(&plan, &spectra, &group, 2.0 * t0)?[0])
            + tail_estimate(scale_energy(&plan, &spectra, &group, t1)?[0], scale_energy(&plan, &spectra, &group, 0.5 * t1)?[0]);
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    };
    if note > MAX_TAIL_FRACTION {
        return Err(Error::QuadratureCoverage { tail: note });
    }
    let samples = acc.into_iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect();
    Ok(SquareFunctionResult { field: SpatialField { grid, samples }, quadrature: quad, truncation_note: note })
}

fn freq(grid: &crate::fields::GridSpec, i: usize) -> f64 {
    let mut xi = [0.0];
    grid.frequency(i, &mut xi);
    xi[0]
}

fn scale_energy_total(plan: &Plan, spectra: &SupportedSpectra, group: &DilationGroup, quad: &super::TQuadrature) -> Result<f64> {
    let mut total = 0.0;
    for (&t, &w) in quad.nodes().iter().zip(quad.weights()) {
        total += w * scale_energy(plan, spectra, group, t)?[0];
    }
    Ok(total)
}
