//! Fields sampled on a periodic grid and their Fourier coefficients.
//!
//! The grid covers `[-L/2, L/2)` on each axis with `N` points. Spectral
//! coefficients approximate the continuous transform
//! `f̂(ξ) = ∫ f(x) e^{-2πi⟨x,ξ⟩} dx` at the frequencies `ξ = k/L`, with
//! `k` in `[-N/2, N/2)`. Arrays are row-major with the last axis fastest.

mod fld;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};

pub use fld::{read_field, write_field, FieldFile, FieldKind, FieldHeader};

/// Axis lengths and point counts of a periodic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    extent: Vec<f64>,
    points: Vec<usize>,
}

impl GridSpec {
    pub fn new(extent: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if extent.is_empty() || extent.len() != points.len() {
            return Err(Error::Shape("extent and points must be non-empty and of equal length".into()));
        }
        for (&l, &n) in extent.iter().zip(&points) {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Domain(format!("grid extent must be positive, got {l}")));
            }
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::Domain(format!("grid points must be a power of two >= 8, got {n}")));
            }
        }
        Ok(Self { extent, points })
    }

    /// The same extent and point count on every axis.
    pub fn cube(dim: usize, extent: f64, points: usize) -> Result<Self> {
        Self::new(vec![extent; dim], vec![points; dim])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// `∏ L_i`; the spectral measure is its reciprocal.
    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    /// Twice the points per axis over the same extent.
    pub fn refined(&self) -> Self {
        Self {
            extent: self.extent.clone(),
            points: self.points.iter().map(|n| 2 * n).collect(),
        }
    }

    /// Signed integer frequency of FFT bin `k` on `axis` (Nyquist maps to `-N/2`).
    pub fn signed_index(&self, axis: usize, k: usize) -> i64 {
        let n = self.points[axis];
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Splits a flat index into per-axis indices.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.points[a];
            flat /= self.points[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.points).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Coordinates of lattice point `flat`.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.dim()).rev() {
            let i = rem % self.points[a];
            rem /= self.points[a];
            out[a] = -0.5 * self.extent[a] + i as f64 * self.spacing(a);
        }
    }

    /// Frequency of coefficient `flat`.
    pub fn frequency(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.dim()).rev() {
            let k = rem % self.points[a];
            rem /= self.points[a];
            out[a] = self.signed_index(a, k) as f64 / self.extent[a];
        }
    }

    /// All lattice points, `dim` coordinates each.
    pub fn points_flat(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.len() * n];
        for (i, chunk) in out.chunks_exact_mut(n).enumerate() {
            self.point(i, chunk);
        }
        out
    }

    /// All lattice frequencies, `dim` coordinates each.
    pub fn frequencies_flat(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.len() * n];
        for (i, chunk) in out.chunks_exact_mut(n).enumerate() {
            self.frequency(i, chunk);
        }
        out
    }

    /// `ρ^*` at every lattice frequency, cached on the group.
    pub fn dual_norms(&self, group: &DilationGroup) -> Result<Arc<Vec<f64>>> {
        self.check_group(group)?;
        Ok(group.cached_norms(true, &self.extent, &self.points, || {
            group.rho_many(&self.frequencies_flat(), true)
        }))
    }

    /// `ρ` at every lattice point, cached on the group.
    pub fn spatial_norms(&self, group: &DilationGroup) -> Result<Arc<Vec<f64>>> {
        self.check_group(group)?;
        Ok(group.cached_norms(false, &self.extent, &self.points, || {
            group.rho_many(&self.points_flat(), false)
        }))
    }

    fn check_group(&self, group: &DilationGroup) -> Result<()> {
        if group.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "group acts on R^{} but the grid is {}-dimensional",
                group.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        Ok(())
    }

    /// `(-1)^{Σ k_i}` for coefficient `flat`; the phase from centring the
    /// grid at the origin.
    fn centring_sign(&self, flat: usize) -> f64 {
        let mut rem = flat;
        let mut parity = 0;
        for a in (0..self.dim()).rev() {
            parity += rem % self.points[a];
            rem /= self.points[a];
        }
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Samples of a function on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: GridSpec,
    pub samples: Vec<Complex64>,
}

/// Fourier coefficients on the dual lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl SpatialField {
    pub fn new(grid: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::Shape(format!("expected {} samples, got {}", grid.len(), samples.len())));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("field samples must be finite".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), samples: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let samples = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                f(&x)
            })
            .collect();
        Self { grid: grid.clone(), samples }
    }

    pub fn from_real_fn(grid: &GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// The character `e^{2πi⟨x, k/L⟩}` for signed integer frequencies `k`.
    pub fn mode(grid: &GridSpec, k: &[i64]) -> Self {
        let xi: Vec<f64> = k.iter().zip(grid.extent()).map(|(&k, &l)| k as f64 / l).collect();
        Self::from_fn(grid, |x| {
            let phase: f64 = x.iter().zip(&xi).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase)
        })
    }

    pub fn to_spectrum(&self) -> SpectralField {
        to_spectrum(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Unweighted `L²` norm by the lattice sum.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { grid: self.grid.clone(), samples: self.samples.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// `max |self - other|`.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.samples.iter().zip(&other.samples).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    /// Lattice integral `Σ f(x_k) · cell_volume`.
    pub fn integral(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() * self.grid.cell_volume()
    }
}

impl SpectralField {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::Shape(format!("expected {} coefficients, got {}", grid.len(), coeffs.len())));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn to_spatial(&self) -> SpatialField {
        from_spectrum(self)
    }

    /// `L²` norm with the spectral measure `1/∏L`.
    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.grid.volume()).sqrt()
    }

    /// Multiplies every coefficient by `m(ξ, index)`.
    pub fn multiply(&self, mut m: impl FnMut(&[f64], usize) -> Complex64) -> Self {
        let mut xi = vec![0.0; self.grid.dim()];
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.grid.frequency(i, &mut xi);
                c * m(&xi, i)
            })
            .collect();
        Self { grid: self.grid.clone(), coeffs }
    }

    /// Coefficient at frequency zero.
    pub fn mean_coefficient(&self) -> Complex64 {
        self.coeffs[0]
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = plans.lock().unwrap().get(&(len, inverse)) {
        return p.clone();
    }
    let p = {
        let mut planner = planner().lock().unwrap();
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    };
    plans.lock().unwrap().insert((len, inverse), p.clone());
    p
}

/// Unnormalized in-place n-dimensional DFT of a row-major array.
pub fn fft_nd(data: &mut [Complex64], points: &[usize], inverse: bool) {
    let total: usize = points.iter().product();
    assert_eq!(data.len(), total, "array length does not match the grid");
    let mut stride = 1;
    for axis in (0..points.len()).rev() {
        let n = points[axis];
        let fft = plan(n, inverse);
        if stride == 1 {
            fft.process(data);
        } else {
            // Gather strided lines into contiguous rows, transform, scatter.
            let block = n * stride;
            let mut lines = vec![Complex64::new(0.0, 0.0); total];
            for (b, chunk) in data.chunks_exact(block).enumerate() {
                let base = b * block;
                for s in 0..stride {
                    let row = base + s * n;
                    for j in 0..n {
                        lines[row + j] = chunk[j * stride + s];
                    }
                }
            }
            fft.process(&mut lines);
            for (b, chunk) in data.chunks_exact_mut(block).enumerate() {
                let base = b * block;
                for s in 0..stride {
                    let row = base + s * n;
                    for j in 0..n {
                        chunk[j * stride + s] = lines[row + j];
                    }
                }
            }
        }
        stride *= n;
    }
}

/// Forward transform scaled to approximate `f̂`.
pub fn to_spectrum(f: &SpatialField) -> SpectralField {
    let grid = &f.grid;
    let mut data = f.samples.clone();
    fft_nd(&mut data, grid.points(), false);
    let h = grid.cell_volume();
    for (i, z) in data.iter_mut().enumerate() {
        *z *= h * grid.centring_sign(i);
    }
    SpectralField { grid: grid.clone(), coeffs: data }
}

/// Inverse of [`to_spectrum`].
pub fn from_spectrum(f: &SpectralField) -> SpatialField {
    let grid = &f.grid;
    let inv_vol = 1.0 / grid.volume();
    let mut data: Vec<Complex64> = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, z)| z * (inv_vol * grid.centring_sign(i)))
        .collect();
    fft_nd(&mut data, grid.points(), true);
    SpatialField { grid: grid.clone(), samples: data }
}

/// Smooth cutoff on `[0, ∞)`: one on `[0, 1]`, zero on `[2, ∞)`, built from
/// `e^{-1/u}`.
pub fn cutoff(s: f64) -> f64 {
    if s <= 1.0 {
        return 1.0;
    }
    if s >= 2.0 {
        return 0.0;
    }
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let a = f(2.0 - s);
    a / (a + f(s - 1.0))
}

/// The annular multiplier `ζ^{(ε)} = φ₀(ε ρ^*) − φ₀(ρ^*/ε)`, as a function
/// of `ρ^*`. It vanishes for `ρ^* ≤ ε` and `ρ^* ≥ 2/ε` and equals one on
/// `[2ε, 1/ε]`.
pub fn band_symbol(rho_star: f64, eps: f64) -> f64 {
    cutoff(eps * rho_star) - cutoff(rho_star / eps)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain(format!("band parameter must lie in (0, 1/2), got {eps}")));
    }
    Ok(())
}

/// Projects `f` onto the annulus `ε < ρ^* < 2/ε` by the multiplier `ζ^{(ε)}`.
pub fn band_limit(f: &SpatialField, group: &DilationGroup, eps: f64) -> Result<SpatialField> {
    check_eps(eps)?;
    let norms = f.grid.dual_norms(group)?;
    let spec = f.to_spectrum();
    Ok(spec
        .multiply(|_, i| Complex64::new(band_symbol(norms[i], eps), 0.0))
        .to_spatial())
}

/// Euclidean radius beyond which the random spectra vanish.
pub const TEST_SPECTRUM_RADIUS: f64 = 3.5;

fn mode_stream(k: &[i64]) -> u64 {
    // splitmix64 over the signed indices.
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &v in k {
        h ^= v as u64;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// A band-limited field with a random smooth spectrum and unit `L²` norm.
///
/// Each coefficient is a complex Gaussian drawn from a ChaCha8 stream keyed
/// by the seed and the mode's signed frequency index, shaped by
/// `φ₀(|ξ|/1.75)` and then by `ζ^{(ε)}`. The spectrum is therefore the same
/// on any grid with the same extent whose Nyquist frequency exceeds
/// [`TEST_SPECTRUM_RADIUS`].
pub fn random_test_function(seed: u64, group: &DilationGroup, grid: &GridSpec, eps: f64) -> Result<SpatialField> {
    check_eps(eps)?;
    let norms = grid.dual_norms(group)?;
    let n = grid.dim();
    let mut xi = vec![0.0; n];
    let mut idx = vec![0usize; n];
    let mut k = vec![0i64; n];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, c) in coeffs.iter_mut().enumerate() {
        grid.frequency(i, &mut xi);
        let radius = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let envelope = cutoff(2.0 * radius / TEST_SPECTRUM_RADIUS);
        let zeta = band_symbol(norms[i], eps);
        if envelope == 0.0 || zeta == 0.0 {
            continue;
        }
        grid.unravel(i, &mut idx);
        for a in 0..n {
            k[a] = grid.signed_index(a, idx[a]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mode_stream(&k));
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *c = Complex64::new(re, im) * (envelope * zeta);
    }
    let spec = SpectralField { grid: grid.clone(), coeffs };
    let norm = spec.l2_norm();
    if norm == 0.0 {
        return Err(Error::Domain("the band and the test spectrum do not overlap on this grid".into()));
    }
    let scaled = SpectralField {
        grid: grid.clone(),
        coeffs: spec.coeffs.iter().map(|c| c / norm).collect(),
    };
    Ok(scaled.to_spatial())
}

/// A weight on `ℝⁿ`: either `w ≡ 1` or `(offset + ρ(x − center))^β`.
#[derive(Debug, Clone)]
pub struct Weight {
    beta: f64,
    offset: f64,
    center: Option<Vec<f64>>,
    group: Option<Arc<DilationGroup>>,
}

impl Weight {
    pub fn constant() -> Self {
        Self { beta: 0.0, offset: 0.0, center: None, group: None }
    }

    /// `(offset + ρ(x))^β`. A zero offset with negative `β` is singular at the
    /// origin, which is a lattice point; with positive `β` it vanishes there.
    pub fn power(group: Arc<DilationGroup>, beta: f64, offset: f64) -> Result<Self> {
        if !beta.is_finite() || !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::Domain(format!("invalid power weight beta={beta}, offset={offset}")));
        }
        if beta < 0.0 && offset == 0.0 {
            return Err(Error::SingularWeight("negative exponent needs a positive offset".into()));
        }
        Ok(Self { beta, offset, center: None, group: Some(group) })
    }

    /// The same weight translated to `center`.
    pub fn centered_at(mut self, center: Vec<f64>) -> Self {
        self.center = Some(center);
        self
    }

    pub fn is_constant(&self) -> bool {
        self.group.is_none() || self.beta == 0.0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    pub fn group(&self) -> Option<&Arc<DilationGroup>> {
        self.group.as_ref()
    }

    /// `w(x)`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match &self.group {
            Some(g) if self.beta != 0.0 => {
                let r = match &self.center {
                    Some(c) => {
                        let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
                        g.rho(&d, false)
                    }
                    None => g.rho(x, false),
                };
                (self.offset + r).powf(self.beta)
            }
            _ => 1.0,
        }
    }

    /// `w` at every lattice point.
    pub fn values_on(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let g = match &self.group {
            Some(g) if self.beta != 0.0 => g,
            _ => return Ok(vec![1.0; grid.len()]),
        };
        let values: Vec<f64> = match &self.center {
            None => grid.spatial_norms(g)?.iter().map(|&r| (self.offset + r).powf(self.beta)).collect(),
            Some(_) => {
                let mut x = vec![0.0; grid.dim()];
                (0..grid.len())
                    .map(|i| {
                        grid.point(i, &mut x);
                        self.value_at(&x)
                    })
                    .collect()
            }
        };
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::SingularWeight(format!("weight takes the value {bad} on the grid")));
        }
        Ok(values)
    }
}

/// `(Σ |f(x_k)|^p w(x_k) · cell_volume)^{1/p}`.
pub fn weighted_lp_norm(f: &SpatialField, p: f64, w: &Weight) -> Result<f64> {
    let values = w.values_on(&f.grid)?;
    weighted_lp_norm_with(f, p, &values)
}

/// As [`weighted_lp_norm`] with the weight already evaluated on the grid.
pub fn weighted_lp_norm_with(f: &SpatialField, p: f64, weight_values: &[f64]) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("exponent p must lie in (1, ∞), got {p}")));
    }
    lp_sum(f.samples.iter().map(|z| z.norm()), p, weight_values, f.grid.cell_volume())
}

pub(crate) fn lp_sum(values: impl Iterator<Item = f64>, p: f64, weight_values: &[f64], cell: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for (v, w) in values.zip(weight_values) {
        sum += v.powf(p) * w;
        count += 1;
    }
    if count != weight_values.len() {
        return Err(Error::Shape("weight and field sizes differ".into()));
    }
    Ok((sum * cell).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid2(n: usize) -> GridSpec {
        GridSpec::cube(2, 16.0, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::cube(2, 16.0, 12).is_err());
        assert!(GridSpec::cube(2, 16.0, 4).is_err());
        assert!(GridSpec::cube(2, -1.0, 16).is_err());
        let g = grid2(64);
        assert_eq!(g.len(), 4096);
        assert!((g.cell_volume() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn constant_field_has_single_coefficient() {
        let g = grid2(32);
        let f = SpatialField::from_real_fn(&g, |_| 2.5);
        let s = f.to_spectrum();
        assert!((s.coeffs[0] - Complex64::new(2.5 * 256.0, 0.0)).norm() < 1e-10);
        assert!(s.coeffs[1..].iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn gaussian_is_self_dual() {
        let g = grid2(256);
        let f = SpatialField::from_real_fn(&g, |x| (-PI * (x[0] * x[0] + x[1] * x[1])).exp());
        let s = f.to_spectrum();
        let mut xi = [0.0; 2];
        for (i, c) in s.coeffs.iter().enumerate() {
            g.frequency(i, &mut xi);
            let exact = (-PI * (xi[0] * xi[0] + xi[1] * xi[1])).exp();
            assert!((c - exact).norm() < 1e-8, "{xi:?}");
        }
    }

    #[test]
    fn non_square_grid_transform() {
        let g = GridSpec::new(vec![8.0, 16.0, 4.0], vec![16, 32, 8]).unwrap();
        let f = SpatialField::mode(&g, &[1, -3, 2]);
        let s = f.to_spectrum();
        let target = g.ravel(&[1, 29, 2]);
        for (i, c) in s.coeffs.iter().enumerate() {
            let expect = if i == target { g.volume() } else { 0.0 };
            assert!((c.norm() - expect).abs() < 1e-9);
        }
    }

    fn random_field(grid: &GridSpec, seed: u64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..grid.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        SpatialField::new(grid.clone(), samples).unwrap()
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = grid2(64);
        for seed in 0..100 {
            let f = random_field(&g, seed);
            let s = f.to_spectrum();
            let back = s.to_spatial();
            assert!(f.max_diff(&back).unwrap() <= 1e-12 * f.max_abs());
            let a = f.l2_norm();
            let b = s.l2_norm();
            assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn band_limit_behaviour() {
        let group = DilationGroup::parabolic();
        let g = grid2(64);
        // ρ^*(0, 1) = 1 and the frequency (0, 1) is k = (0, 16) at L = 16.
        let mode = SpatialField::mode(&g, &[0, 16]);
        let out = band_limit(&mode, &group, 0.25).unwrap();
        assert!(out.max_diff(&mode).unwrap() < 1e-12);

        let c = SpatialField::from_real_fn(&g, |_| 1.0);
        assert!(band_limit(&c, &group, 0.25).unwrap().max_abs() < 1e-13);

        assert!(matches!(band_limit(&c, &group, 0.5), Err(Error::Domain(_))));

        let f = random_field(&g, 3);
        let once = band_limit(&f, &group, 0.125).unwrap();
        let twice = band_limit(&once, &group, 0.0625).unwrap();
        assert!(once.max_diff(&twice).unwrap() <= 1e-12 * once.max_abs().max(1.0));
        assert!(once.l2_norm() <= f.l2_norm());
    }

    #[test]
    fn random_test_function_properties() {
        let group = DilationGroup::parabolic();
        let g = grid2(128);
        let eps = 0.125;
        let a = random_test_function(7, &group, &g, eps).unwrap();
        let b = random_test_function(7, &group, &g, eps).unwrap();
        assert_eq!(a, b);
        assert!((a.l2_norm() - 1.0).abs() < 1e-12);
        let s = a.to_spectrum();
        assert!(s.coeffs[0].norm() < 1e-12);
        let norms = g.dual_norms(&group).unwrap();
        for (c, &r) in s.coeffs.iter().zip(norms.iter()) {
            if !(eps / 2.0 <= r && r <= 2.0 / eps) {
                assert!(c.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn random_spectrum_is_grid_independent() {
        let group = DilationGroup::parabolic();
        let coarse = grid2(128);
        let fine = coarse.refined();
        let a = random_test_function(11, &group, &coarse, 0.125).unwrap().to_spectrum();
        let b = random_test_function(11, &group, &fine, 0.125).unwrap().to_spectrum();
        let mut idx = [0usize; 2];
        for (i, c) in a.coeffs.iter().enumerate() {
            coarse.unravel(i, &mut idx);
            let k: Vec<i64> = (0..2).map(|ax| coarse.signed_index(ax, idx[ax])).collect();
            let j = fine.ravel(&[k[0].rem_euclid(256) as usize, k[1].rem_euclid(256) as usize]);
            assert!((c - b.coeffs[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn weighted_norms() {
        let g = grid2(64);
        let c = SpatialField::from_real_fn(&g, |_| 3.0);
        for &p in &[1.5, 2.0, 3.0] {
            let v = weighted_lp_norm(&c, p, &Weight::constant()).unwrap();
            assert!((v - 3.0 * 256f64.powf(1.0 / p)).abs() < 1e-10);
        }
        assert!(matches!(weighted_lp_norm(&c, 1.0, &Weight::constant()), Err(Error::Domain(_))));
        let f = random_field(&g, 1);
        let a = weighted_lp_norm(&f, 2.0, &Weight::constant()).unwrap();
        assert!((a - f.to_spectrum().l2_norm()).abs() < 1e-10 * a);
    }

    #[test]
    fn power_weight_norm_matches_fine_quadrature() {
        // ∫ e^{-2π|x|²} ρ(x)^{1/2} dx for the parabolic group, coarse lattice
        // against a much finer polar-free midpoint rule.
        let group = Arc::new(DilationGroup::parabolic());
        let w = Weight::power(group.clone(), 0.5, 0.0).unwrap();
        let g = GridSpec::cube(2, 8.0, 128).unwrap();
        let f = SpatialField::from_real_fn(&g, |x| (-PI * (x[0] * x[0] + x[1] * x[1])).exp());
        let coarse = weighted_lp_norm(&f, 2.0, &w).unwrap();
        let m = 2048;
        let h = 8.0 / m as f64;
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [-4.0 + (i as f64 + 0.5) * h, -4.0 + (j as f64 + 0.5) * h];
                let e = (-2.0 * PI * (x[0] * x[0] + x[1] * x[1])).exp();
                if e > 1e-30 {
                    sum += e * crate::dilation::parabolic_rho_closed_form(&x).sqrt();
                }
            }
        }
        let fine = (sum * h * h).sqrt();
        assert!((coarse - fine).abs() / fine < 5e-3, "{coarse} vs {fine}");
    }

    #[test]
    fn singular_weight_rejected() {
        let group = Arc::new(DilationGroup::parabolic());
        assert!(matches!(Weight::power(group, -1.0, 0.0), Err(Error::SingularWeight(_))));
    }

    proptest! {
        #[test]
        fn transform_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = GridSpec::cube(2, 4.0, 16).unwrap();
            let f = random_field(&g, seed);
            let h = random_field(&g, seed + 1);
            let lhs = f.scale(Complex64::new(a, 0.0)).add(&h.scale(Complex64::new(0.0, b))).unwrap().to_spectrum();
            let fs = f.to_spectrum();
            let hs = h.to_spectrum();
            for i in 0..g.len() {
                let rhs = fs.coeffs[i] * a + hs.coeffs[i] * Complex64::new(0.0, b);
                prop_assert!((lhs.coeffs[i] - rhs).norm() < 1e-10);
            }
        }
    }
}
