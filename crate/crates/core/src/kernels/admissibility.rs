//! Quadrature of the integrability conditions placed on a generator `ψ`.

use num_complex::Complex64;
use serde::Serialize;

use super::LpProfile;
use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{GridSpec, SpatialField, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilitySeminorms {
    /// `∫_{|x|>1} |ψ(x)| |x|^ε dx`.
    pub b_eps: f64,
    /// `(∫_{|x|<1} |ψ(x)|^u dx)^{1/u}`.
    pub d_u: f64,
    /// `‖H_ψ‖₁` with `H_ψ(x) = sup_{ρ(y) ≥ ρ(x)} |ψ(y)|`.
    pub h_norm: f64,
}

/// Samples of `ψ = ℱ⁻¹ψ̂` on `grid`. The box should be several times
/// larger than the region where `ψ` is appreciable.
pub fn spatialize_profile(profile: &LpProfile, group: &DilationGroup, grid: &GridSpec) -> Result<SpatialField> {
    let norms = grid.dual_norms(group)?;
    let mut xi = vec![0.0; grid.dim()];
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            grid.frequency(i, &mut xi);
            profile.eval(&xi, norms[i])
        })
        .collect();
    Ok(SpectralField::new(grid.clone(), coeffs)?.to_spatial())
}

/// The three seminorms bounding a generator, by lattice quadrature.
/// `H_ψ` is the suffix maximum of `|ψ|` after sorting the samples by `ρ`.
pub fn profile_admissibility(
    psi: &SpatialField,
    group: &DilationGroup,
    eps: f64,
    u: f64,
) -> Result<AdmissibilitySeminorms> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    if !(u > 1.0) {
        return Err(Error::Domain(format!("u must exceed 1, got {u}")));
    }
    let grid = &psi.grid;
    let cell = grid.cell_volume();
    let rho = grid.spatial_norms(group)?;
    let mut x = vec![0.0; grid.dim()];
    let mut b_eps = 0.0;
    let mut d_sum = 0.0;
    for (i, v) in psi.samples.iter().enumerate() {
        grid.point(i, &mut x);
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let a = v.norm();
        if r > 1.0 {
            b_eps += a * r.powf(eps);
        } else if r < 1.0 {
            d_sum += a.powf(u);
        }
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]));
    let mut running: f64 = 0.0;
    let mut h_norm = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Points on the same ρ-level share one envelope value.
        let mut j = i;
        while j < order.len() && rho[order[j]] == rho[order[i]] {
            running = running.max(psi.samples[order[j]].norm());
            j += 1;
        }
        h_norm += running * (j - i) as f64;
        i = j;
    }
    Ok(AdmissibilitySeminorms {
        b_eps: b_eps * cell,
        d_u: (d_sum * cell).powf(1.0 / u),
        h_norm: h_norm * cell,
    })
}
