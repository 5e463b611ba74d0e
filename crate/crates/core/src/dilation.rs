//! Dilation groups `δ_t = t^P = exp((log t) P)` and their quasi-norms.
//!
//! A group is admissible when `⟨Px, x⟩ ≥ ⟨x, x⟩`, i.e. the symmetric part of
//! `P` has every eigenvalue at least one. Under that condition
//! `t ↦ |δ_t x|` is strictly increasing, and the quasi-norm `ρ(x)` is the
//! unique `t` with `|δ_{1/t} x| = 1`. The adjoint group `δ_t^*` (built from
//! `Pᵀ`) gives the dual quasi-norm `ρ^*` used on the frequency side.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the smallest eigenvalue of `(P + Pᵀ)/2` below one.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-9;
/// Default iteration cap for the quasi-norm root finder.
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Below this Euclidean length a vector is treated as the origin.
const ZERO_THRESHOLD: f64 = 1e-300;
/// Bracket width (in `log t`) at which bisection hands over to Newton.
const BISECTION_WIDTH: f64 = 1e-3;

#[derive(Debug, Clone)]
enum Structure {
    /// `P = diag(p)`.
    Diagonal(Vec<f64>),
    /// `P = V diag(λ) Vᵀ` with orthogonal `V`.
    Symmetric {
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    },
    /// Anything else; exponentials go through Padé scaling and squaring.
    General(DMatrix<f64>),
}

impl Structure {
    fn classify(p: &DMatrix<f64>) -> Self {
        let n = p.nrows();
        let off_diagonal_zero = (0..n).all(|i| (0..n).all(|j| i == j || p[(i, j)] == 0.0));
        if off_diagonal_zero {
            return Structure::Diagonal((0..n).map(|i| p[(i, i)]).collect());
        }
        let asymmetry = (p - p.transpose()).abs().max();
        if asymmetry <= 1e-14 * p.abs().max().max(1.0) {
            let sym = (p + p.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            return Structure::Symmetric {
                values: eig.eigenvalues.iter().copied().collect(),
                vectors: eig.eigenvectors,
            };
        }
        Structure::General(p.clone())
    }

    fn exp_scaled(&self, s: f64) -> DMatrix<f64> {
        match self {
            Structure::Diagonal(d) => {
                DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&p| (p * s).exp())))
            }
            Structure::Symmetric { values, vectors } => {
                let d = DVector::from_iterator(values.len(), values.iter().map(|&l| (l * s).exp()));
                vectors * DMatrix::from_diagonal(&d) * vectors.transpose()
            }
            Structure::General(p) => expm(&(p * s)),
        }
    }

    /// Returns `(log |e^{sP} x|², ⟨P y, y⟩ / |y|²)` for `y = e^{sP} x`.
    fn log_norm_sq(&self, s: f64, x: &[f64]) -> (f64, f64) {
        match self {
            Structure::Diagonal(d) => spectral_log_norm_sq(d, x.iter().copied(), s),
            Structure::Symmetric { values, vectors } => {
                let n = values.len();
                let rotated = (0..n).map(|k| (0..n).map(|i| vectors[(i, k)] * x[i]).sum::<f64>());
                spectral_log_norm_sq(values, rotated, s)
            }
            Structure::General(p) => {
                let m = expm(&(p * s));
                let y = &m * DVector::from_column_slice(x);
                let py = p * &y;
                let norm_sq = y.dot(&y);
                (norm_sq.ln(), py.dot(&y) / norm_sq)
            }
        }
    }
}

fn spectral_log_norm_sq(exponents: &[f64], coords: impl Iterator<Item = f64>, s: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (&l, z) in exponents.iter().zip(coords) {
        let term = (2.0 * l * s).exp() * z * z;
        sum += term;
        weighted += l * term;
    }
    (sum.ln(), weighted / sum)
}

/// Matrix exponential by degree-13 Padé approximation with scaling and
/// squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let squarings = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is invertible for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Outcome of a quasi-norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiNormResult {
    pub value: f64,
    pub iterations: usize,
    /// `| |δ_{1/value} x| − 1 |`.
    pub residual: f64,
}

/// How [`DilationGroup::estimate_unit_ball_volume`] samples `{ρ < 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeEstimator {
    /// Midpoint rule on a `resolution^n` tensor grid over `[-1, 1]^n`.
    TensorGrid { resolution: usize },
    /// Halton points in `[-1, 1]^n`.
    QuasiRandom { samples: usize },
    /// Pseudo-random points in `[-1, 1]^n`.
    MonteCarlo { samples: usize, seed: u64 },
}

type NormCacheKey = (bool, Vec<u64>, Vec<usize>);

/// A one-parameter dilation group `δ_t = t^P` on `ℝⁿ`.
pub struct DilationGroup {
    p: DMatrix<f64>,
    gamma: f64,
    forward: Structure,
    adjoint: Structure,
    unit_ball_volume: OnceLock<f64>,
    norm_cache: Mutex<HashMap<NormCacheKey, Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for DilationGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DilationGroup")
            .field("p", &self.p)
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl DilationGroup {
    /// Builds the group generated by `p`, checking admissibility.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(Error::Shape(format!("P must be square and non-empty, got {}x{}", n, p.ncols())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("P has non-finite entries".into()));
        }
        let sym = (&p + p.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
        if min_eigenvalue < 1.0 - ADMISSIBILITY_TOLERANCE {
            return Err(Error::Admissibility { min_eigenvalue });
        }
        let gamma = p.trace();
        let forward = Structure::classify(&p);
        let adjoint = match &forward {
            Structure::General(m) => Structure::General(m.transpose()),
            other => other.clone(),
        };
        Ok(Self {
            p,
            gamma,
            forward,
            adjoint,
            unit_ball_volume: OnceLock::new(),
            norm_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Builds the group from a row-major list of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("P must be square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `P = diag(exponents)`.
    pub fn diagonal(exponents: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(exponents)))
    }

    /// Ordinary isotropic dilations on `ℝⁿ`.
    pub fn isotropic(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    /// The parabolic group `diag(t, t²)` on `ℝ²`.
    pub fn parabolic() -> Self {
        Self::diagonal(&[1.0, 2.0]).expect("diag(1, 2) is admissible")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Homogeneous dimension `γ = trace P`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_isotropic(&self) -> bool {
        self.p == DMatrix::identity(self.dim(), self.dim())
    }

    /// True when `P` equals `diag(exponents)` exactly.
    pub fn is_diagonal(&self, exponents: &[f64]) -> bool {
        matches!(&self.forward, Structure::Diagonal(d) if d.as_slice() == exponents)
    }

    fn structure(&self, adjoint: bool) -> &Structure {
        if adjoint {
            &self.adjoint
        } else {
            &self.forward
        }
    }

    /// The matrix `δ_t` (or `δ_t^*` when `adjoint`).
    pub fn dilation_matrix(&self, t: f64, adjoint: bool) -> Result<DMatrix<f64>> {
        check_scale(t)?;
        Ok(self.structure(adjoint).exp_scaled(t.ln()))
    }

    /// Applies `δ_t` (or `δ_t^*`) to `x`.
    pub fn apply(&self, t: f64, x: &[f64], adjoint: bool) -> Result<Vec<f64>> {
        check_scale(t)?;
        self.check_len(x)?;
        Ok(match self.structure(adjoint) {
            Structure::Diagonal(d) => {
                let log_t = t.ln();
                d.iter().zip(x).map(|(&p, &v)| (p * log_t).exp() * v).collect()
            }
            s => {
                let m = s.exp_scaled(t.ln());
                (&m * DVector::from_column_slice(x)).iter().copied().collect()
            }
        })
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("expected a {}-vector, got length {}", self.dim(), x.len())));
        }
        Ok(())
    }

    /// `ρ(x)` (or `ρ^*(x)` when `dual`).
    ///
    /// The root of `u ↦ log|δ_{e^{-u}} x|²` is bracketed by
    /// `[log min(|x|,1), log max(|x|,1)]`, which follows from
    /// `|δ_t x| ≥ t|x|` for `t ≥ 1` and `|δ_t x| ≤ t|x|` for `t ≤ 1`.
    /// Bisection narrows the bracket, then safeguarded Newton finishes.
    pub fn quasi_norm(&self, x: &[f64], dual: bool) -> Result<QuasiNormResult> {
        self.quasi_norm_with(x, dual, DEFAULT_MAX_ITERATIONS)
    }

    pub fn quasi_norm_with(&self, x: &[f64], dual: bool, max_iterations: usize) -> Result<QuasiNormResult> {
        self.check_len(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("quasi-norm of a non-finite vector".into()));
        }
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(QuasiNormResult { value: 0.0, iterations: 0, residual: 0.0 });
        }
        let unit: Vec<f64> = x.iter().map(|v| v / scale).collect();
        let euclid = scale * unit.iter().map(|v| v * v).sum::<f64>().sqrt();
        if euclid < ZERO_THRESHOLD {
            return Ok(QuasiNormResult { value: 0.0, iterations: 0, residual: 0.0 });
        }
        let structure = self.structure(dual);
        let log_scale_sq = 2.0 * scale.ln();
        // h(u) = log |δ_{e^{-u}} x|²; decreasing, h'(u) = -2 ⟨Py,y⟩/|y|².
        let h = |u: f64| {
            let (l, q) = structure.log_norm_sq(-u, &unit);
            (l + log_scale_sq, -2.0 * q)
        };

        let mut lo = euclid.min(1.0).ln();
        let mut hi = euclid.max(1.0).ln();
        let mut iterations = 0;
        let mut u = 0.5 * (lo + hi);
        if hi > lo {
            while hi - lo > BISECTION_WIDTH {
                iterations += 1;
                if iterations > max_iterations {
                    return Err(Error::Convergence { iterations, residual: f64::NAN });
                }
                let (value, _) = h(u);
                if value > 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                u = 0.5 * (lo + hi);
            }
            loop {
                iterations += 1;
                let (value, slope) = h(u);
                if value == 0.0 || value.abs() <= 4.0 * f64::EPSILON {
                    break;
                }
                if value > 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                let mut next = u - value / slope;
                if !(next > lo && next < hi) || !next.is_finite() {
                    next = 0.5 * (lo + hi);
                }
                let step = (next - u).abs();
                u = next;
                if step <= 1e-15 * u.abs().max(1.0) {
                    break;
                }
                if iterations >= max_iterations {
                    let residual = (0.5 * h(u).0).exp_m1().abs();
                    return Err(Error::Convergence { iterations, residual });
                }
            }
        } else {
            u = 0.0;
        }
        let residual = (0.5 * h(u).0).exp_m1().abs();
        Ok(QuasiNormResult { value: u.exp(), iterations, residual })
    }

    /// `ρ(x)`, or `ρ^*(x)` with `dual`.
    pub fn rho(&self, x: &[f64], dual: bool) -> f64 {
        self.quasi_norm(x, dual)
            .map(|r| r.value)
            .unwrap_or_else(|e| panic!("quasi-norm failed at {x:?}: {e}"))
    }

    /// Quasi-norms of many points stored contiguously (`dim` values per
    /// point).
    pub fn rho_many(&self, points: &[f64], dual: bool) -> Vec<f64> {
        points.chunks_exact(self.dim()).map(|x| self.rho(x, dual)).collect()
    }

    pub(crate) fn cached_norms(
        &self,
        dual: bool,
        extent: &[f64],
        points: &[usize],
        compute: impl FnOnce() -> Vec<f64>,
    ) -> Arc<Vec<f64>> {
        let key = (dual, extent.iter().map(|v| v.to_bits()).collect(), points.to_vec());
        if let Some(v) = self.norm_cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let value = Arc::new(compute());
        self.norm_cache
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| value.clone())
            .clone()
    }

    /// `|B(0,1)|`, estimated once and cached.
    pub fn unit_ball_volume(&self) -> f64 {
        *self.unit_ball_volume.get_or_init(|| {
            let method = if self.dim() <= 2 {
                VolumeEstimator::TensorGrid { resolution: 512 }
            } else {
                VolumeEstimator::QuasiRandom { samples: 1 << 20 }
            };
            self.estimate_unit_ball_volume(method)
        })
    }

    /// `|B(x, t)| = t^γ |B(0, 1)|`.
    pub fn ball_volume(&self, t: f64) -> Result<f64> {
        check_scale(t)?;
        Ok(t.powf(self.gamma) * self.unit_ball_volume())
    }

    /// Estimates `|{ρ < 1}|` with the chosen sampler. The set lies inside
    /// `[-1, 1]^n` because `ρ(x) ≤ 1` iff `|x| ≤ 1`.
    pub fn estimate_unit_ball_volume(&self, method: VolumeEstimator) -> f64 {
        let n = self.dim();
        let cube = 2f64.powi(n as i32);
        let inside = |x: &[f64]| self.rho(x, false) < 1.0;
        match method {
            VolumeEstimator::TensorGrid { resolution } => {
                let h = 2.0 / resolution as f64;
                let total = resolution.pow(n as u32);
                let mut x = vec![0.0; n];
                let mut count = 0usize;
                for idx in 0..total {
                    let mut rem = idx;
                    for xi in x.iter_mut() {
                        *xi = -1.0 + h * ((rem % resolution) as f64 + 0.5);
                        rem /= resolution;
                    }
                    if inside(&x) {
                        count += 1;
                    }
                }
                cube * count as f64 / total as f64
            }
            VolumeEstimator::QuasiRandom { samples } => {
                let mut x = vec![0.0; n];
                let mut count = 0usize;
                for i in 1..=samples {
                    for (d, xi) in x.iter_mut().enumerate() {
                        *xi = 2.0 * halton(i, PRIMES[d % PRIMES.len()]) - 1.0;
                    }
                    if inside(&x) {
                        count += 1;
                    }
                }
                cube * count as f64 / samples as f64
            }
            VolumeEstimator::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut x = vec![0.0; n];
                let mut count = 0usize;
                for _ in 0..samples {
                    for xi in x.iter_mut() {
                        *xi = rng.random_range(-1.0..1.0);
                    }
                    if inside(&x) {
                        count += 1;
                    }
                }
                cube * count as f64 / samples as f64
            }
        }
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(mut index: usize, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index as u64 % base) as f64;
        index /= base as usize;
    }
    r
}

fn check_scale(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("dilation parameter must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Closed form of `ρ` for `P = diag(1, 2)`.
pub fn parabolic_rho_closed_form(x: &[f64]) -> f64 {
    let (a, b) = (x[0] * x[0], x[1]);
    ((a + (a * a + 4.0 * b * b).sqrt()) * 0.5).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assume, proptest};

    fn random_admissible(seed: u64, n: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6));
        let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.8..0.8));
        DMatrix::identity(n, n) + &b * b.transpose() + (&c - c.transpose()) * 0.5
    }

    /// Taylor series with scaling and squaring, kept independent of the
    /// Padé route.
    fn expm_taylor(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let s = (a.norm().log2().ceil() as i32 + 1).max(0);
        let a = a / 2f64.powi(s);
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn identity_has_gamma_n() {
        let g = DilationGroup::isotropic(2).unwrap();
        assert_eq!(g.gamma(), 2.0);
    }

    #[test]
    fn parabolic_gamma_is_three() {
        assert_eq!(DilationGroup::parabolic().gamma(), 3.0);
    }

    #[test]
    fn rejects_contracting_generator() {
        let err = DilationGroup::diagonal(&[0.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Admissibility { .. }));
    }

    #[test]
    fn rejects_bad_scale() {
        let g = DilationGroup::parabolic();
        assert!(matches!(g.apply(0.0, &[1.0, 1.0], false), Err(Error::Domain(_))));
        assert!(matches!(g.apply(-2.0, &[1.0, 1.0], false), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_scale_is_identity() {
        let g = DilationGroup::new(random_admissible(3, 3)).unwrap();
        let x = [0.3, -1.2, 2.5];
        let y = g.apply(1.0, &x, false).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn parabolic_dilation_is_t_t_squared() {
        let g = DilationGroup::parabolic();
        let y = g.apply(3.0, &[1.5, -2.0], false).unwrap();
        assert!((y[0] - 4.5).abs() < 1e-13);
        assert!((y[1] + 18.0).abs() < 1e-13);
    }

    #[test]
    fn pade_matches_taylor_oracle() {
        for seed in 0..10 {
            let p = random_admissible(seed, 3);
            for &t in &[0.01, 0.5, 3.0, 40.0] {
                let a = &p * f64::ln(t);
                let e = expm(&a);
                let o = expm_taylor(&a);
                let rel = (&e - &o).abs().max() / o.abs().max();
                assert!(rel < 1e-11, "seed {seed} t {t}: {rel}");
            }
        }
    }

    #[test]
    fn symmetric_route_matches_pade() {
        let mut p = random_admissible(11, 3);
        p = (&p + p.transpose()) * 0.5;
        let g = DilationGroup::new(p.clone()).unwrap();
        assert!(matches!(g.forward, Structure::Symmetric { .. }));
        let m = g.dilation_matrix(2.7, false).unwrap();
        let o = expm(&(&p * 2.7f64.ln()));
        assert!((&m - &o).abs().max() < 1e-12 * o.abs().max());
    }

    #[test]
    fn group_law_random_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..20 {
            let g = DilationGroup::new(random_admissible(seed, 2 + (seed as usize % 3))).unwrap();
            let n = g.dim();
            for _ in 0..10 {
                let s: f64 = rng.random_range(0.1..5.0);
                let t: f64 = rng.random_range(0.1..5.0);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                for adjoint in [false, true] {
                    let lhs = g.apply(s, &g.apply(t, &x, adjoint).unwrap(), adjoint).unwrap();
                    let rhs = g.apply(s * t, &x, adjoint).unwrap();
                    let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    assert!(err <= 1e-12 * scale, "{err} vs {scale}");
                }
            }
        }
    }

    #[test]
    fn isotropic_rho_is_euclidean() {
        let g = DilationGroup::isotropic(3).unwrap();
        let x = [0.3, -4.0, 1.25];
        let e = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((g.rho(&x, false) - e).abs() < 1e-14 * e);
    }

    #[test]
    fn parabolic_rho_examples() {
        let g = DilationGroup::parabolic();
        assert!((g.rho(&[0.0, 1.0], false) - 1.0).abs() < 1e-14);
        assert!((g.rho(&[0.0, 4.0], false) - 2.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
            let r = g.quasi_norm(&x, false).unwrap();
            let c = parabolic_rho_closed_form(&x);
            assert!((r.value - c).abs() <= 1e-12 * c);
            assert!(r.residual <= 1e-12 * r.value.max(1.0));
        }
    }

    #[test]
    fn rho_of_zero_is_zero() {
        let g = DilationGroup::parabolic();
        let r = g.quasi_norm(&[0.0, 0.0], false).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(g.rho(&[1e-320, 0.0], false), 0.0);
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let g = DilationGroup::new(random_admissible(2, 2)).unwrap();
        let err = g.quasi_norm_with(&[1e6, -3e5], false, 3).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn ball_volume_scaling() {
        let g = DilationGroup::isotropic(2).unwrap();
        assert!((g.ball_volume(1.0).unwrap() - std::f64::consts::PI).abs() < 1e-3);
        let p = DilationGroup::parabolic();
        for &t in &[0.3, 1.0, 7.0] {
            let ratio = p.ball_volume(2.0 * t).unwrap() / p.ball_volume(t).unwrap();
            assert!((ratio - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_estimators_agree() {
        let g = DilationGroup::parabolic();
        let grid = g.estimate_unit_ball_volume(VolumeEstimator::TensorGrid { resolution: 512 });
        let mc = g.estimate_unit_ball_volume(VolumeEstimator::MonteCarlo { samples: 1_000_000, seed: 5 });
        assert!((grid - mc).abs() / grid < 5e-3, "{grid} vs {mc}");
        let qmc = g.estimate_unit_ball_volume(VolumeEstimator::QuasiRandom { samples: 200_000 });
        assert!((grid - qmc).abs() / grid < 5e-3);
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-r..r)).collect()
    }

    #[test]
    fn quasi_norm_suite_for_both_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let groups = [
            DilationGroup::parabolic(),
            DilationGroup::new(random_admissible(4, 2)).unwrap(),
            DilationGroup::new(random_admissible(5, 3)).unwrap(),
        ];
        for g in &groups {
            let n = g.dim();
            for dual in [false, true] {
                for _ in 0..1000 {
                    let x = rand_vec(&mut rng, n, 3.0);
                    let y = rand_vec(&mut rng, n, 3.0);
                    let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                    let (rx, ry, rs) = (g.rho(&x, dual), g.rho(&y, dual), g.rho(&sum, dual));
                    assert!(rs <= rx + ry + 1e-9);

                    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                    assert!((g.rho(&neg, dual) - rx).abs() <= 1e-12 * rx.max(1.0));

                    let e = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if e <= 1.0 {
                        assert!(rx <= 1.0 + 1e-9);
                        assert!(rx >= e - 1e-12);
                    } else {
                        assert!(rx >= 1.0 - 1e-9);
                        assert!(rx <= e + 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity(x0 in -10.0f64..10.0, x1 in -10.0f64..10.0, t in 0.01f64..100.0) {
            prop_assume!(x0.abs() + x1.abs() > 1e-6);
            let g = DilationGroup::parabolic();
            let x = [x0, x1];
            let dx = g.apply(t, &x, false).unwrap();
            let lhs = g.rho(&dx, false);
            let rhs = t * g.rho(&x, false);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        }
    }
}
