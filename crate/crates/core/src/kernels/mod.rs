//! Averaging kernels, their Fourier transforms, iterated kernels and
//! Littlewood-Paley profiles.
//!
//! A kernel is stored as a discrete measure on a fine reference lattice, so
//! its transform is a trigonometric polynomial. Three evaluators are kept:
//! an exact direct sum (slow, for checks), a tensor Lagrange interpolant of
//! a zero-padded FFT table, and a Taylor expansion from the moments near
//! `ξ = 0` where `1 − Φ̂` must be resolved to full relative accuracy.

mod admissibility;
mod profiles;

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{self, FieldFile, GridSpec, SpatialField, SpectralField};

pub use admissibility::{profile_admissibility, spatialize_profile, AdmissibilitySeminorms};
pub use profiles::{
    iterated_potential_profile, marcinkiewicz_profile, nondegeneracy_scan, poisson_gradient_family,
    potential_profile, radial_profile, shipped_radial_eta, unit_directions, eta_normalization, marcinkiewicz_symbol,
    Eta, LpProfile, MarcinkiewiczVariant, ProfileSymbol,
};

/// Highest total degree kept in the Taylor expansion about the origin.
const TAYLOR_DEGREE: usize = 16;
/// The Taylor branch is used for `|ξ| · R ≤ TAYLOR_RADIUS`, `R` the support radius.
const MOMENT_SNAP: f64 = 1e-12;
const TAYLOR_RADIUS: f64 = 0.08;
/// Subcell samples per axis when rasterizing an indicator.
const SUPERSAMPLING: usize = 16;

/// Reference lattice (extent, points) for kernels in dimension `n`, and the
/// zero-padding factor used for the Fourier table.
fn reference_layout(n: usize) -> (f64, usize, usize) {
    match n {
        1 | 2 => (8.0, 256, 4),
        _ => (4.0, 64, 2),
    }
}

/// Multi-indices of `n` variables with total degree at most `max_degree`,
/// ordered by degree.
pub fn multi_indices(n: usize, max_degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for degree in 0..=max_degree {
        let mut current = vec![0; n];
        fill_indices(&mut current, 0, degree, &mut out);
    }
    out
}

fn fill_indices(current: &mut Vec<usize>, axis: usize, remaining: usize, out: &mut Vec<Vec<usize>>) {
    let n = current.len();
    if axis == n - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        current[axis] = v;
        fill_indices(current, axis + 1, remaining - v, out);
    }
}

/// `∫ x^a f(x) dx` by the lattice sum, for every multi-index in `indices`.
pub fn moments(f: &SpatialField, indices: &[Vec<usize>]) -> Vec<Complex64> {
    let grid = &f.grid;
    let n = grid.dim();
    let max_degree = indices.iter().map(|a| a.iter().sum::<usize>()).max().unwrap_or(0);
    let cell = grid.cell_volume();
    let mut out = vec![Complex64::new(0.0, 0.0); indices.len()];
    let mut x = vec![0.0; n];
    let mut powers = vec![vec![1.0; max_degree + 1]; n];
    for (i, &v) in f.samples.iter().enumerate() {
        if v == Complex64::new(0.0, 0.0) {
            continue;
        }
        grid.point(i, &mut x);
        for a in 0..n {
            for d in 1..=max_degree {
                powers[a][d] = powers[a][d - 1] * x[a];
            }
        }
        for (o, idx) in out.iter_mut().zip(indices) {
            let mono: f64 = idx.iter().enumerate().map(|(a, &d)| powers[a][d]).product();
            *o += v * mono;
        }
    }
    out.iter().map(|m| m * cell).collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

#[derive(Debug, Clone)]
struct FourierTable {
    points: usize,
    extent: f64,
    values: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct TaylorExpansion {
    indices: Vec<Vec<usize>>,
    coefficients: Vec<Complex64>,
}

/// A compactly supported kernel `Φ` with `∫Φ = 1`.
#[derive(Debug, Clone)]
pub struct AveragingKernel {
    spatial: SpatialField,
    claimed_order: f64,
    support_box: Vec<[f64; 2]>,
    radius: f64,
    tag: String,
    table: FourierTable,
    taylor: TaylorExpansion,
}

/// JSON sidecar accompanying an imported kernel's `.fld` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSidecar {
    pub claimed_order: f64,
    pub support_box: Vec<[f64; 2]>,
}

/// Outcome of [`check_moment_class`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub pass: bool,
    /// `∫Φ − 1`.
    pub mass_residual: f64,
    /// `(a, ∫ x^a Φ)` for `1 ≤ |a| ≤ ⌊α⌋`.
    pub residuals: Vec<(Vec<usize>, f64)>,
}

impl AveragingKernel {
    /// Builds a kernel from densities on a lattice. The densities are
    /// rescaled so the lattice integral is exactly one.
    pub fn from_density(spatial: SpatialField, claimed_order: f64, tag: impl Into<String>) -> Result<Self> {
        let total = spatial.integral();
        if total.norm() == 0.0 {
            return Err(Error::Domain("kernel has zero integral".into()));
        }
        let spatial = spatial.scale(total.inv());
        Self::assemble(spatial, claimed_order, tag.into(), None)
    }

    fn assemble(
        spatial: SpatialField,
        claimed_order: f64,
        tag: String,
        declared_box: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        if !(claimed_order >= 0.0) {
            return Err(Error::Domain(format!("claimed order must be non-negative, got {claimed_order}")));
        }
        let grid = spatial.grid.clone();
        let n = grid.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut radius: f64 = 0.0;
        let mut x = vec![0.0; n];
        for (i, v) in spatial.samples.iter().enumerate() {
            if v.norm() == 0.0 {
                continue;
            }
            grid.point(i, &mut x);
            for a in 0..n {
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
            radius = radius.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        if !radius.is_finite() || lo[0] > hi[0] {
            return Err(Error::Domain("kernel has empty support".into()));
        }
        let support_box = match declared_box {
            Some(b) => {
                if b.len() != n || (0..n).any(|a| lo[a] < b[a][0] - 1e-12 || hi[a] > b[a][1] + 1e-12) {
                    return Err(Error::Domain("kernel support exceeds the declared box".into()));
                }
                b
            }
            None => (0..n).map(|a| [lo[a], hi[a]]).collect(),
        };

        let (_, _, pad) = reference_layout(n);
        let padded_grid = GridSpec::new(
            grid.extent().iter().map(|l| l * pad as f64).collect(),
            grid.points().iter().map(|p| p * pad).collect(),
        )?;
        let padded = embed(&spatial, &padded_grid);
        let spec = padded.to_spectrum();
        if grid.extent().windows(2).any(|w| w[0] != w[1]) || grid.points().windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Shape("kernel lattices must have equal axes".into()));
        }
        let table = FourierTable {
            points: padded_grid.points()[0],
            extent: padded_grid.extent()[0],
            values: spec.coeffs,
        };

        let indices = multi_indices(n, TAYLOR_DEGREE);
        let mut m = moments(&spatial, &indices);
        // Kernels are normalized on entry; pin the mass so Φ̂(0) = 1 exactly.
        m[0] = Complex64::new(1.0, 0.0);
        // Moments at rounding level are zero; left in, they swamp the deficit near the origin.
        for (a, mom) in indices.iter().zip(m.iter_mut()).skip(1) {
            let degree: i32 = a.iter().sum::<usize>() as i32;
            if mom.norm() <= MOMENT_SNAP * radius.max(f64::MIN_POSITIVE).powi(degree) {
                *mom = Complex64::new(0.0, 0.0);
            }
        }
        let coefficients = indices
            .iter()
            .zip(&m)
            .map(|(a, mom)| {
                let degree: usize = a.iter().sum();
                let denom: f64 = a.iter().map(|&d| factorial(d)).product();
                mom * Complex64::new(0.0, -2.0 * PI).powu(degree as u32) / denom
            })
            .collect();
        Ok(Self {
            spatial,
            claimed_order,
            support_box,
            radius: radius.max(f64::MIN_POSITIVE),
            tag,
            table,
            taylor: TaylorExpansion { indices, coefficients },
        })
    }

    pub fn dim(&self) -> usize {
        self.spatial.grid.dim()
    }

    pub fn spatial(&self) -> &SpatialField {
        &self.spatial
    }

    pub fn claimed_order(&self) -> f64 {
        self.claimed_order
    }

    pub fn support_box(&self) -> &[[f64; 2]] {
        &self.support_box
    }

    /// `max |y|` over the support.
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Largest `|ξ_i|` covered by the Fourier table.
    pub fn table_range(&self) -> f64 {
        0.5 * self.table.points as f64 / self.table.extent
    }

    /// `Φ̂(ξ)` as the exact sum over the lattice measure.
    pub fn fourier_direct(&self, xi: &[f64]) -> Complex64 {
        let grid = &self.spatial.grid;
        let cell = grid.cell_volume();
        let mut x = vec![0.0; grid.dim()];
        let mut sum = Complex64::new(0.0, 0.0);
        for (i, v) in self.spatial.samples.iter().enumerate() {
            if v.norm() == 0.0 {
                continue;
            }
            grid.point(i, &mut x);
            let phase: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
            sum += v * Complex64::from_polar(cell, -2.0 * PI * phase);
        }
        sum
    }

    /// `1 − Φ̂(ξ)` from the Taylor expansion about the origin.
    pub fn deficit_taylor(&self, xi: &[f64]) -> Complex64 {
        let n = xi.len();
        let mut powers = vec![[1.0f64; TAYLOR_DEGREE + 1]; n];
        for a in 0..n {
            for d in 1..=TAYLOR_DEGREE {
                powers[a][d] = powers[a][d - 1] * xi[a];
            }
        }
        let mut sum = Complex64::new(1.0, 0.0) - self.taylor.coefficients[0];
        // Highest degree first so the small terms accumulate before the large ones.
        for (idx, c) in self.taylor.indices.iter().zip(&self.taylor.coefficients).skip(1).rev() {
            let mono: f64 = idx.iter().enumerate().map(|(a, &d)| powers[a][d]).product();
            sum -= c * mono;
        }
        sum
    }

    /// `Φ̂(ξ)` by tensor six-point Lagrange interpolation of the table,
    /// zero outside its range.
    pub fn fourier_interpolated(&self, xi: &[f64]) -> Complex64 {
        let t = &self.table;
        let n = xi.len();
        let half = 0.5 * t.points as f64;
        let mut base = [0i64; 4];
        let mut weights = [[0.0f64; 6]; 4];
        assert!(n <= 4, "kernels are supported up to dimension 4");
        for a in 0..n {
            let u = xi[a] * t.extent;
            if u.abs() >= half {
                return Complex64::new(0.0, 0.0);
            }
            let fl = u.floor();
            base[a] = fl as i64 - 2;
            weights[a] = lagrange6(u - fl);
        }
        let len = t.points as i64;
        let wrap = |k: i64| k.rem_euclid(len) as usize;
        match n {
            1 => (0..6).map(|i| t.values[wrap(base[0] + i as i64)] * weights[0][i]).sum(),
            2 => {
                let mut sum = Complex64::new(0.0, 0.0);
                for i in 0..6 {
                    let row = wrap(base[0] + i as i64) * t.points;
                    let mut inner = Complex64::new(0.0, 0.0);
                    for j in 0..6 {
                        inner += t.values[row + wrap(base[1] + j as i64)] * weights[1][j];
                    }
                    sum += inner * weights[0][i];
                }
                sum
            }
            _ => {
                let mut sum = Complex64::new(0.0, 0.0);
                for combo in 0..6usize.pow(n as u32) {
                    let mut rem = combo;
                    let mut flat = 0usize;
                    let mut w = 1.0;
                    for a in 0..n {
                        let i = rem % 6;
                        rem /= 6;
                        flat = flat * t.points + wrap(base[a] + i as i64);
                        w *= weights[a][i];
                    }
                    sum += t.values[flat] * w;
                }
                sum
            }
        }
    }

    fn in_taylor_range(&self, xi: &[f64]) -> bool {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        r * self.radius <= TAYLOR_RADIUS
    }

    /// `Φ̂(ξ)`.
    pub fn fourier(&self, xi: &[f64]) -> Complex64 {
        if self.in_taylor_range(xi) {
            Complex64::new(1.0, 0.0) - self.deficit_taylor(xi)
        } else {
            self.fourier_interpolated(xi)
        }
    }

    /// `1 − Φ̂(ξ)`, accurate in relative terms near the origin.
    pub fn deficit(&self, xi: &[f64]) -> Complex64 {
        if self.in_taylor_range(xi) {
            self.deficit_taylor(xi)
        } else {
            Complex64::new(1.0, 0.0) - self.fourier_interpolated(xi)
        }
    }

    /// The kernel shifted by whole lattice cells.
    pub fn translated(&self, cells: &[i64]) -> Result<Self> {
        let grid = &self.spatial.grid;
        if cells.len() != grid.dim() {
            return Err(Error::Shape("shift has the wrong dimension".into()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut idx = vec![0usize; grid.dim()];
        for (i, v) in self.spatial.samples.iter().enumerate() {
            if v.norm() == 0.0 {
                continue;
            }
            grid.unravel(i, &mut idx);
            for a in 0..grid.dim() {
                let j = idx[a] as i64 + cells[a];
                if j < 0 || j >= grid.points()[a] as i64 {
                    return Err(Error::Domain("shift moves the kernel off its lattice".into()));
                }
                idx[a] = j as usize;
            }
            out[grid.ravel(&idx)] = *v;
        }
        let shifted = SpatialField::new(grid.clone(), out)?;
        Self::assemble(shifted, self.claimed_order, format!("{}-shifted", self.tag), None)
    }

    /// Reads a kernel from a `.fld` file and its JSON sidecar.
    pub fn import(field_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<Self> {
        let sidecar: KernelSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let spatial = match fields::read_field(field_path)? {
            FieldFile::Spatial(f) => f,
            FieldFile::Spectral(_) => return Err(Error::Format("kernel file must hold a spatial field".into())),
        };
        let mass = spatial.integral();
        if (mass - 1.0).norm() > 1e-9 {
            return Err(Error::Domain(format!("kernel integral is {mass}, expected 1")));
        }
        Self::assemble(spatial, sidecar.claimed_order, "imported".into(), Some(sidecar.support_box))
    }

    /// Writes the kernel as a `.fld` file plus JSON sidecar.
    pub fn export(&self, field_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<()> {
        fields::write_field(field_path, &FieldFile::Spatial(self.spatial.clone()))?;
        let sidecar = KernelSidecar { claimed_order: self.claimed_order, support_box: self.support_box.clone() };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Densities of `K^{(k)} = −Σ_{j=1}^k (−1)^j C(k, j) Φ^{*j}` on the
    /// zero-padded lattice, computed by FFT.
    pub fn iterated_kernel(&self, k: u32) -> Result<SpatialField> {
        if k == 0 {
            return Err(Error::Domain("iteration count must be at least 1".into()));
        }
        let n = self.dim();
        let grid = &self.spatial.grid;
        let (_, _, pad) = reference_layout(n);
        if self.radius * k as f64 >= 0.5 * grid.extent()[0] * pad as f64 {
            return Err(Error::Domain("iterated kernel does not fit on the padded lattice".into()));
        }
        let padded_grid = GridSpec::new(
            grid.extent().iter().map(|l| l * pad as f64).collect(),
            grid.points().iter().map(|p| p * pad).collect(),
        )?;
        let spec = embed(&self.spatial, &padded_grid).to_spectrum();
        let one = Complex64::new(1.0, 0.0);
        let coeffs = spec.coeffs.iter().map(|&phi| one - (one - phi).powu(k)).collect();
        Ok(SpectralField::new(padded_grid, coeffs)?.to_spatial())
    }
}

fn lagrange6(f: f64) -> [f64; 6] {
    const NODES: [f64; 6] = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    const DENOMS: [f64; 6] = [-120.0, 24.0, -12.0, 12.0, -24.0, 120.0];
    let mut w = [0.0; 6];
    for j in 0..6 {
        let mut p = 1.0;
        for m in 0..6 {
            if m != j {
                p *= f - NODES[m];
            }
        }
        w[j] = p / DENOMS[j];
    }
    w
}

/// Copies a field into the centre of a larger lattice with the same spacing.
fn embed(f: &SpatialField, target: &GridSpec) -> SpatialField {
    let src = &f.grid;
    let n = src.dim();
    let offsets: Vec<usize> = (0..n).map(|a| (target.points()[a] - src.points()[a]) / 2).collect();
    let mut out = SpatialField::zeros(target);
    let mut idx = vec![0usize; n];
    for (i, v) in f.samples.iter().enumerate() {
        src.unravel(i, &mut idx);
        for a in 0..n {
            idx[a] += offsets[a];
        }
        out.samples[target.ravel(&idx)] = *v;
    }
    out
}

/// The normalized indicator `χ₀ = |B(0,1)|⁻¹ χ_{B(0,1)}` of the unit ρ-ball.
///
/// `ρ(x) < 1` holds exactly when `|x| < 1`, so the rasterization tests the
/// Euclidean predicate. Cells cut by the boundary are supersampled at
/// `16ⁿ` points; the result is symmetric under `x ↦ −x` to the last bit.
pub fn ball_averaging_kernel(group: &DilationGroup) -> AveragingKernel {
    let n = group.dim();
    let (extent, points, _) = reference_layout(n);
    let grid = GridSpec::cube(n, extent, points).expect("reference lattice is valid");
    let h = grid.spacing(0);
    let offsets: Vec<f64> = (0..SUPERSAMPLING)
        .map(|s| (s as f64 + 0.5) / SUPERSAMPLING as f64 - 0.5)
        .collect();
    let sub_total = SUPERSAMPLING.pow(n as u32);
    let field = SpatialField::from_real_fn(&grid, |x| {
        let mut near = 0.0;
        let mut far = 0.0;
        for &v in x {
            let lo = (v.abs() - 0.5 * h).max(0.0);
            let hi = v.abs() + 0.5 * h;
            near += lo * lo;
            far += hi * hi;
        }
        if near >= 1.0 {
            return 0.0;
        }
        if far < 1.0 {
            return 1.0;
        }
        let mut inside = 0usize;
        for combo in 0..sub_total {
            let mut rem = combo;
            let mut r2 = 0.0;
            for &v in x {
                let z = v + offsets[rem % SUPERSAMPLING] * h;
                rem /= SUPERSAMPLING;
                r2 += z * z;
            }
            if r2 < 1.0 {
                inside += 1;
            }
        }
        inside as f64 / sub_total as f64
    });
    AveragingKernel::from_density(field, 1.0, "ball").expect("the unit ball has positive volume")
}

/// The smooth bump `c·exp(−1/(1 − |x|²))` on the Euclidean unit ball.
pub fn bump_kernel(n: usize) -> AveragingKernel {
    let (extent, points, _) = reference_layout(n);
    let grid = GridSpec::cube(n, extent, points).expect("reference lattice is valid");
    let field = SpatialField::from_real_fn(&grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    });
    AveragingKernel::from_density(field, 1.0, "bump").expect("bump has positive mass")
}

/// Checks `∫Φ = 1` and, for `α ≥ 1`, `∫ x^a Φ = 0` for `1 ≤ |a| ≤ ⌊α⌋`.
pub fn check_moment_class(kernel: &AveragingKernel, alpha: f64) -> MomentCheck {
    const MASS_TOL: f64 = 1e-9;
    const MOMENT_TOL: f64 = 1e-8;
    let order = if alpha >= 1.0 { alpha.floor() as usize } else { 0 };
    let indices = multi_indices(kernel.dim(), order);
    let m = moments(kernel.spatial(), &indices);
    let mass_residual = (m[0] - 1.0).norm();
    let residuals: Vec<(Vec<usize>, f64)> = indices
        .into_iter()
        .zip(m)
        .skip(1)
        .map(|(a, v)| (a, if v.im.abs() > 0.0 { v.norm() } else { v.re }))
        .collect();
    let pass = mass_residual <= MASS_TOL && residuals.iter().all(|(_, v)| v.abs() <= MOMENT_TOL);
    MomentCheck { pass, mass_residual, residuals }
}

/// The symbol `1 − (1 − Φ̂)^k` of the iterated kernel `K^{(k)}`.
#[derive(Debug, Clone)]
pub struct IteratedSymbol<'a> {
    kernel: &'a AveragingKernel,
    k: u32,
}

pub fn iterated_symbol(kernel: &AveragingKernel, k: u32) -> Result<IteratedSymbol<'_>> {
    if k == 0 {
        return Err(Error::Domain("iteration count must be at least 1".into()));
    }
    Ok(IteratedSymbol { kernel, k })
}

impl IteratedSymbol<'_> {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        Complex64::new(1.0, 0.0) - self.deficit(xi)
    }

    /// `(1 − Φ̂)^k`.
    pub fn deficit(&self, xi: &[f64]) -> Complex64 {
        self.kernel.deficit(xi).powu(self.k)
    }

    /// `−Σ_{j=1}^k (−1)^j C(k, j) Φ̂^j`.
    pub fn eval_binomial(&self, xi: &[f64]) -> Complex64 {
        let phi = self.kernel.fourier(xi);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        let mut power = Complex64::new(1.0, 0.0);
        for j in 1..=self.k {
            binom *= (self.k - j + 1) as f64 / j as f64;
            power *= phi;
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            sum += power * (sign * binom);
        }
        sum
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_power_law(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chi0() -> AveragingKernel {
        ball_averaging_kernel(&DilationGroup::parabolic())
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(3, 2).len(), 10);
        assert_eq!(multi_indices(1, 4).len(), 5);
    }

    #[test]
    fn ball_kernel_normalization_and_symmetry() {
        let k = chi0();
        assert!((k.spatial().integral() - 1.0).norm() < 1e-12);
        let m = moments(k.spatial(), &multi_indices(2, 1));
        assert!(m[1].norm() < 1e-12 && m[2].norm() < 1e-12);
        assert!((k.fourier(&[0.0, 0.0]) - 1.0).norm() < 1e-12);
        assert!((k.fourier_interpolated(&[0.0, 0.0]) - 1.0).norm() < 1e-9);
        // Area of the rasterized disc against π, and the second moment of the
        // uniform disc, ∫x₁² = 1/4.
        let density = k.spatial().samples.iter().fold(0.0f64, |m, v| m.max(v.re));
        assert!((1.0 / density - PI).abs() < 5e-4 * PI);
        let m2 = moments(k.spatial(), &[vec![2, 0]])[0].re;
        assert!((m2 - 0.25).abs() < 5e-4);
    }

    #[test]
    fn ball_transform_matches_bessel_profile() {
        // The normalized disc has transform J₁(2π|ξ|)/(π|ξ|).
        fn j1(x: f64) -> f64 {
            // Integral representation J₁(x) = (1/π)∫₀^π cos(τ − x sin τ) dτ.
            let m = 2000;
            let h = PI / m as f64;
            (0..m).map(|i| ((i as f64 + 0.5) * h - x * ((i as f64 + 0.5) * h).sin()).cos()).sum::<f64>() * h / PI
        }
        let k = chi0();
        for &r in &[0.05, 0.3, 0.7, 1.5] {
            let val = k.fourier(&[r * 0.6, r * 0.8]).re;
            let exact = j1(2.0 * PI * r) / (PI * r);
            assert!((val - exact).abs() < 2e-3, "{r}: {val} vs {exact}");
        }
    }

    #[test]
    fn interpolation_matches_direct_sum() {
        let k = chi0();
        let group = DilationGroup::parabolic();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let xi = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let t: f64 = 2f64.powf(rng.random_range(-3.0..2.0));
            let arg = group.apply(t, &xi, true).unwrap();
            if arg.iter().any(|v| v.abs() >= k.table_range()) {
                continue;
            }
            let err = (k.fourier_interpolated(&arg) - k.fourier_direct(&arg)).norm();
            worst = worst.max(err);
        }
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn taylor_matches_direct_sum_near_origin() {
        // Σ m_j (1 − e^{−iθ_j}) written as 2 sin²(θ/2) + i sin θ to avoid
        // cancellation.
        let k = chi0();
        let grid = &k.spatial().grid;
        let cell = grid.cell_volume();
        for &r in &[1e-4, 1e-2, 0.05, 0.08] {
            let xi = [r * 0.28, r * 0.96];
            let mut x = [0.0; 2];
            let mut direct = Complex64::new(0.0, 0.0);
            let mut mass = 0.0;
            for (i, v) in k.spatial().samples.iter().enumerate() {
                grid.point(i, &mut x);
                let th = 2.0 * PI * (x[0] * xi[0] + x[1] * xi[1]);
                direct += v.re * cell * Complex64::new(2.0 * (0.5 * th).sin().powi(2), th.sin());
                mass += v.re * cell;
            }
            direct /= mass;
            let taylor = k.deficit_taylor(&xi);
            assert!((direct - taylor).norm() <= 1e-12 * direct.norm() + 1e-15, "{r}");
        }
    }

    #[test]
    fn moment_class_decisions() {
        let k = chi0();
        assert!(check_moment_class(&k, 1.5).pass);
        let two = check_moment_class(&k, 2.0);
        assert!(!two.pass);
        let second = two.residuals.iter().find(|(a, _)| a == &vec![2, 0]).unwrap().1;
        assert!(second > 0.2);
        let shifted = k.translated(&[32, 0]).unwrap();
        let res = check_moment_class(&shifted, 1.0);
        assert!(!res.pass);
        assert!((res.residuals[0].1 - 1.0).abs() < 1e-12);
        assert!(check_moment_class(&shifted, 0.5).pass);
    }

    #[test]
    fn iterated_symbol_routes() {
        let k = chi0();
        for kk in 1..=4 {
            let s = iterated_symbol(&k, kk).unwrap();
            assert!((s.eval(&[0.0, 0.0]) - 1.0).norm() < 1e-15);
            for xi in [[0.3, -0.2], [1.7, 0.4], [0.01, 0.02], [5.0, -3.0]] {
                assert!((s.eval(&xi) - s.eval_binomial(&xi)).norm() < 1e-12);
            }
        }
        let s1 = iterated_symbol(&k, 1).unwrap();
        assert_eq!(s1.eval(&[0.4, 0.1]), Complex64::new(1.0, 0.0) - k.deficit(&[0.4, 0.1]));
    }

    #[test]
    fn iterated_kernel_moments_vanish() {
        let k = chi0();
        let k2 = k.iterated_kernel(2).unwrap();
        let idx: Vec<Vec<usize>> = multi_indices(2, 4);
        let m = moments(&k2, &idx);
        assert!((m[0] - 1.0).norm() < 1e-10);
        for (a, v) in idx.iter().zip(&m).skip(1) {
            let deg: usize = a.iter().sum();
            if deg <= 3 {
                assert!(v.norm() < 1e-7, "{a:?}: {v}");
            } else if a == &vec![4, 0] {
                assert!(v.norm() > 1e-3);
            }
        }
    }

    #[test]
    fn import_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = bump_kernel(2);
        let f = dir.path().join("k.fld");
        let s = dir.path().join("k.json");
        k.export(&f, &s).unwrap();
        let back = AveragingKernel::import(&f, &s).unwrap();
        assert_eq!(back.spatial(), k.spatial());
        assert_eq!(back.claimed_order(), k.claimed_order());
    }
}
