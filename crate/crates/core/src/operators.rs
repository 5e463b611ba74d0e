//! Fourier multipliers on the periodic lattice: application, Riesz
//! potentials, scale-integral symbols, inversion and the holomorphic
//! functional calculus.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{weighted_lp_norm, GridSpec, SpatialField, Weight};
use crate::kernels::{unit_directions, LpProfile};
use crate::squares::TQuadrature;

/// Default truncation `ε` of the scale integral defining `m^{(ε)}`.
pub const DEFAULT_TRUNCATION: f64 = 1.0 / 4096.0;

/// Threshold below which a symbol counts as vanishing on the unit shell.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// `m` as a function of `(ξ, ρ^*(ξ))`.
pub type SymbolFn = Arc<dyn Fn(&[f64], f64) -> Complex64 + Send + Sync>;

/// A holomorphic function on a neighbourhood of the range of a symbol.
pub type Holomorphic = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct MultiplierSymbol {
    evaluator: SymbolFn,
    homogeneous0: bool,
    origin_value: Complex64,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol")
            .field("homogeneous0", &self.homogeneous0)
            .field("origin_value", &self.origin_value)
            .finish()
    }
}

impl MultiplierSymbol {
    pub fn new(evaluator: SymbolFn, homogeneous0: bool, origin_value: Complex64) -> Self {
        Self { evaluator, homogeneous0, origin_value }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(Arc::new(move |_, _| c), true, c)
    }

    /// Declared invariance under `ξ ↦ δ_s^* ξ`.
    pub fn homogeneous0(&self) -> bool {
        self.homogeneous0
    }

    pub fn origin_value(&self) -> Complex64 {
        self.origin_value
    }

    #[inline]
    pub fn eval(&self, xi: &[f64], rho_star: f64) -> Complex64 {
        if rho_star == 0.0 {
            self.origin_value
        } else {
            (self.evaluator)(xi, rho_star)
        }
    }

    pub fn eval_at(&self, group: &DilationGroup, xi: &[f64]) -> Complex64 {
        self.eval(xi, group.rho(xi, true))
    }

    /// Pointwise product.
    pub fn product(&self, other: &MultiplierSymbol) -> MultiplierSymbol {
        let (a, b) = (self.clone(), other.clone());
        MultiplierSymbol::new(
            Arc::new(move |xi, r| a.eval(xi, r) * b.eval(xi, r)),
            self.homogeneous0 && other.homogeneous0,
            self.origin_value * other.origin_value,
        )
    }

    /// `m^k`.
    pub fn power(&self, k: u32) -> MultiplierSymbol {
        let a = self.clone();
        MultiplierSymbol::new(Arc::new(move |xi, r| a.eval(xi, r).powu(k)), self.homogeneous0, self.origin_value.powu(k))
    }

    /// Values on every lattice frequency of `grid`.
    pub fn on_lattice(&self, grid: &GridSpec, group: &DilationGroup) -> Result<Vec<Complex64>> {
        let norms = grid.dual_norms(group)?;
        let mut xi = vec![0.0; grid.dim()];
        let mut out = Vec::with_capacity(grid.len());
        for (i, &r) in norms.iter().enumerate() {
            grid.frequency(i, &mut xi);
            let v = self.eval(&xi, r);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteSymbol(xi));
            }
            out.push(v);
        }
        Ok(out)
    }

    /// `max |m(δ_s^* ω) − m(ω)|` over sampled unit directions `ω` and the
    /// given scales.
    pub fn homogeneity_defect(&self, group: &DilationGroup, directions: usize, scales: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for omega in unit_directions(group.dim(), directions) {
            let base = self.eval(&omega, 1.0);
            for &s in scales {
                let eta = group.apply(s, &omega, true)?;
                worst = worst.max((self.eval(&eta, s) - base).norm());
            }
        }
        Ok(worst)
    }
}

/// `T_m f`: multiply the spectrum of `f` by `m` and transform back.
pub fn apply_multiplier(m: &MultiplierSymbol, f: &SpatialField, group: &DilationGroup) -> Result<SpatialField> {
    let values = m.on_lattice(&f.grid, group)?;
    let spec = f.to_spectrum();
    Ok(spec.multiply(|_, i| values[i]).to_spatial())
}

/// The symbol `ρ^*(ξ)^{−β}`, zero at the origin.
pub fn riesz_symbol(beta: f64) -> MultiplierSymbol {
    MultiplierSymbol::new(Arc::new(move |_, r| Complex64::new(r.powf(-beta), 0.0)), false, Complex64::new(0.0, 0.0))
}

/// `𝓘_β f`, the multiplier `ρ^*(ξ)^{−β}`. For `β > 0` the input must have
/// mean zero.
pub fn riesz_potential(f: &SpatialField, group: &DilationGroup, beta: f64) -> Result<SpatialField> {
    if !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(f.clone());
    }
    let spec = f.to_spectrum();
    if beta > 0.0 {
        let threshold = 1e-10 * f.l2_norm();
        let mean = spec.mean_coefficient().norm();
        if mean > threshold {
            return Err(Error::MeanNotZero { mean, threshold });
        }
    }
    let norms = f.grid.dual_norms(group)?;
    Ok(spec
        .multiply(|_, i| {
            let r = norms[i];
            Complex64::new(if r == 0.0 { 0.0 } else { r.powf(-beta) }, 0.0)
        })
        .to_spatial())
}

/// Row-major matrices `δ_t^*` for each node.
pub(crate) fn adjoint_dilations(group: &DilationGroup, nodes: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = group.dim();
    nodes
        .iter()
        .map(|&t| {
            let m = group.dilation_matrix(t, true)?;
            Ok((0..n * n).map(|k| m[(k / n, k % n)]).collect())
        })
        .collect()
}

#[inline]
pub(crate) fn mat_vec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r * n..(r + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `m^{(ε)}(ξ) = ∫ |ψ̂(δ_t^* ξ)|² dt/t` over the range of `quad`, e.g.
/// `[ε, 1/ε]` for [`TQuadrature::truncated`].
pub fn lp_symbol(psi: &LpProfile, group: &DilationGroup, quad: &TQuadrature) -> Result<MultiplierSymbol> {
    lp_symbol_sum(std::slice::from_ref(psi), group, quad)
}

/// `Σ_j m_j^{(ε)}` for a family of profiles.
pub fn lp_symbol_sum(psis: &[LpProfile], group: &DilationGroup, quad: &TQuadrature) -> Result<MultiplierSymbol> {
    if psis.iter().any(|p| p.dim() != group.dim()) {
        return Err(Error::Shape("profile and group dimensions differ".into()));
    }
    let mats = Arc::new(adjoint_dilations(group, quad.nodes())?);
    let nodes = quad.nodes().to_vec();
    let weights = quad.weights().to_vec();
    let psis = psis.to_vec();
    let evaluator: SymbolFn = Arc::new(move |xi, r| {
        let mut eta = vec![0.0; xi.len()];
        let mut sum = 0.0;
        for ((m, &t), &w) in mats.iter().zip(&nodes).zip(&weights) {
            mat_vec(m, xi, &mut eta);
            sum += w * psis.iter().map(|p| p.eval(&eta, t * r).norm_sqr()).sum::<f64>();
        }
        Complex64::new(sum, 0.0)
    });
    Ok(MultiplierSymbol::new(evaluator, false, Complex64::new(0.0, 0.0)))
}

/// `min |m|` over sampled directions of the unit shell `ρ^* = 1`.
pub fn shell_minimum(m: &MultiplierSymbol, group: &DilationGroup, directions: usize) -> f64 {
    unit_directions(group.dim(), directions)
        .iter()
        .map(|w| m.eval(w, 1.0).norm())
        .fold(f64::INFINITY, f64::min)
}

/// `1/m`, assigned zero at the origin. Fails if `m` comes within
/// [`DEGENERACY_THRESHOLD`] of zero on the unit shell.
pub fn invert_multiplier(m: &MultiplierSymbol, group: &DilationGroup) -> Result<MultiplierSymbol> {
    let min_modulus = shell_minimum(m, group, 256);
    if !(min_modulus >= DEGENERACY_THRESHOLD) {
        return Err(Error::DegenerateSymbol { min_modulus });
    }
    let inner = m.clone();
    Ok(MultiplierSymbol::new(
        Arc::new(move |xi, r| 1.0 / inner.eval(xi, r)),
        m.homogeneous0(),
        Complex64::new(0.0, 0.0),
    ))
}

/// The truncated Cauchy series
/// `F(m) ≈ (1/2π) Σ_{k≤K} ((m − ℓ)/2ε₀)^k N_k`,
/// `N_k = ∫_0^{2π} F(ℓ + 2ε₀ e^{iθ}) e^{−ikθ} dθ`,
/// with `N_k` by the trapezoid rule on `theta_nodes` points.
#[derive(Clone)]
pub struct FunctionalCalculus {
    m: MultiplierSymbol,
    ell: MultiplierSymbol,
    f: Holomorphic,
    terms: usize,
    theta: Arc<Vec<Complex64>>,
    eps0: f64,
    distance: f64,
}

impl fmt::Debug for FunctionalCalculus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalCalculus")
            .field("terms", &self.terms)
            .field("theta_nodes", &self.theta.len())
            .field("eps0", &self.eps0)
            .field("distance", &self.distance)
            .finish()
    }
}

impl FunctionalCalculus {
    /// `ε₀` is a quarter of `min |m|` over lattice frequencies of `grid`
    /// with `1 ≤ ρ^* ≤ 2`; `‖m − ℓ‖_∞` is measured over the whole lattice.
    pub fn new(
        m: &MultiplierSymbol,
        ell: &MultiplierSymbol,
        f: Holomorphic,
        terms: usize,
        theta_nodes: usize,
        group: &DilationGroup,
        grid: &GridSpec,
    ) -> Result<Self> {
        if theta_nodes == 0 {
            return Err(Error::Domain("need at least one theta node".into()));
        }
        let norms = grid.dual_norms(group)?;
        let mv = m.on_lattice(grid, group)?;
        let lv = ell.on_lattice(grid, group)?;
        let mut shell_min = f64::INFINITY;
        let mut distance: f64 = 0.0;
        for (i, &r) in norms.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            if (1.0..=2.0).contains(&r) {
                shell_min = shell_min.min(mv[i].norm());
            }
            distance = distance.max((mv[i] - lv[i]).norm());
        }
        if !shell_min.is_finite() {
            return Err(Error::Domain("the lattice has no frequencies with 1 <= rho* <= 2".into()));
        }
        let eps0 = 0.25 * shell_min;
        if !(distance < eps0) {
            return Err(Error::ApproximantTooFar { distance, eps0 });
        }
        let theta = (0..theta_nodes)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / theta_nodes as f64))
            .collect();
        Ok(Self { m: m.clone(), ell: ell.clone(), f, terms, theta: Arc::new(theta), eps0, distance })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// `‖m − ℓ‖_∞` on the lattice.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// The series with `K = terms`, summing the geometric factor in closed
    /// form per θ node.
    pub fn eval(&self, xi: &[f64], rho_star: f64) -> Complex64 {
        let l = self.ell.eval(xi, rho_star);
        let d = (self.m.eval(xi, rho_star) - l) / (2.0 * self.eps0);
        let kp1 = (self.terms + 1) as i32;
        let mut sum = Complex64::new(0.0, 0.0);
        for e in self.theta.iter() {
            let z = l + 2.0 * self.eps0 * e;
            let q = d * e.conj();
            let geometric = if q.norm() < 1e-300 {
                Complex64::new(1.0, 0.0)
            } else {
                (1.0 - q.powi(kp1)) / (1.0 - q)
            };
            sum += (self.f)(z) * geometric;
        }
        sum / self.theta.len() as f64
    }

    /// Partial sums for `K = 0..=terms`, each coefficient `N_k` computed
    /// explicitly.
    pub fn partial_sums(&self, xi: &[f64], rho_star: f64) -> Vec<Complex64> {
        let l = self.ell.eval(xi, rho_star);
        let d = (self.m.eval(xi, rho_star) - l) / (2.0 * self.eps0);
        let values: Vec<Complex64> = self.theta.iter().map(|e| (self.f)(l + 2.0 * self.eps0 * e)).collect();
        let h = 2.0 * PI / self.theta.len() as f64;
        let mut out = Vec::with_capacity(self.terms + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut dk = Complex64::new(1.0, 0.0);
        for k in 0..=self.terms {
            let n_k: Complex64 = values
                .iter()
                .zip(self.theta.iter())
                .map(|(v, e)| v * e.conj().powu(k as u32))
                .sum::<Complex64>()
                * h;
            acc += dk * n_k / (2.0 * PI);
            out.push(acc);
            dk *= d;
        }
        out
    }

    pub fn symbol(&self) -> MultiplierSymbol {
        let me = self.clone();
        let origin = self.eval(&[], 0.0);
        MultiplierSymbol::new(Arc::new(move |xi, r| me.eval(xi, r)), false, origin)
    }
}

/// [`FunctionalCalculus`] as a symbol.
pub fn functional_calculus(
    m: &MultiplierSymbol,
    ell: &MultiplierSymbol,
    f: Holomorphic,
    terms: usize,
    theta_nodes: usize,
    group: &DilationGroup,
    grid: &GridSpec,
) -> Result<MultiplierSymbol> {
    Ok(FunctionalCalculus::new(m, ell, f, terms, theta_nodes, group, grid)?.symbol())
}

/// Smooth approximant of a degree-zero symbol: `m` averaged over small
/// rotations of the direction `ω = δ_{1/ρ^*}^* ξ` toward each coordinate
/// axis, with Gaussian weights of angular width `width`.
pub fn smooth_approximant(m: &MultiplierSymbol, group: &DilationGroup, width: f64) -> Result<MultiplierSymbol> {
    let n = group.dim();
    if n == 1 || width == 0.0 {
        return Ok(m.clone());
    }
    if !(width > 0.0) {
        return Err(Error::Domain(format!("mollifier width must be positive, got {width}")));
    }
    const TAPS: i32 = 4;
    let offsets: Vec<(f64, f64)> = (-TAPS..=TAPS)
        .map(|j| {
            let phi = 1.5 * width * j as f64 / TAPS as f64;
            (phi, (-0.5 * (phi / width).powi(2)).exp())
        })
        .collect();
    let total: f64 = offsets.iter().map(|(_, w)| w).sum::<f64>() * n as f64;
    let inner = m.clone();
    let group = Arc::new(DilationGroup::new(group.matrix().clone())?);
    let evaluator: SymbolFn = Arc::new(move |xi, r| {
        let omega = match group.apply(1.0 / r, xi, true) {
            Ok(v) => v,
            Err(_) => return Complex64::new(f64::NAN, f64::NAN),
        };
        let mut sum = Complex64::new(0.0, 0.0);
        let mut dir = vec![0.0; omega.len()];
        for a in 0..omega.len() {
            // Unit tangent toward e_a; skip if ω is parallel to e_a.
            let mut v: Vec<f64> = omega.iter().map(|w| -omega[a] * w).collect();
            v[a] += 1.0;
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            for &(phi, w) in &offsets {
                if norm < 1e-12 {
                    sum += w * inner.eval(&omega, 1.0);
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for (d, (o, t)) in dir.iter_mut().zip(omega.iter().zip(&v)) {
                    *d = c * o + s * t / norm;
                }
                sum += w * inner.eval(&dir, 1.0);
            }
        }
        sum / total
    });
    Ok(MultiplierSymbol::new(evaluator, m.homogeneous0(), m.origin_value()))
}

/// `∂^a f`, the multiplier `∏ (2πiξ_j)^{a_j}`.
pub fn spatial_derivative(f: &SpatialField, a: &[u32]) -> Result<SpatialField> {
    if a.len() != f.grid.dim() {
        return Err(Error::Shape("multi-index length differs from the field dimension".into()));
    }
    let spec = f.to_spectrum();
    Ok(spec
        .multiply(|xi, _| {
            xi.iter()
                .zip(a)
                .fold(Complex64::new(1.0, 0.0), |acc, (&x, &k)| acc * Complex64::new(0.0, 2.0 * PI * x).powu(k))
        })
        .to_spatial())
}

/// `(‖T_{m^k} f‖_{p,w} / ‖f‖_{p,w})^{1/k}` for `k = 1..=k_max`. These probe
/// the growth of powers of `m` on one input; nothing is claimed about
/// convergence.
pub fn multiplier_power_probe(
    m: &MultiplierSymbol,
    f: &SpatialField,
    group: &DilationGroup,
    p: f64,
    w: &Weight,
    k_max: u32,
) -> Result<Vec<f64>> {
    let base = weighted_lp_norm(f, p, w)?;
    if base == 0.0 {
        return Err(Error::Domain("probe input must be non-zero".into()));
    }
    let values = m.on_lattice(&f.grid, group)?;
    let spec = f.to_spectrum();
    (1..=k_max)
        .map(|k| {
            let g = spec.multiply(|_, i| values[i].powu(k)).to_spatial();
            Ok((weighted_lp_norm(&g, p, w)? / base).powf(1.0 / k as f64))
        })
        .collect()
}
