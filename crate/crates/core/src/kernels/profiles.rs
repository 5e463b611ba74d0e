//! Littlewood-Paley generators `ψ`, represented by their transforms `ψ̂`.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use super::AveragingKernel;
use crate::dilation::DilationGroup;
use crate::error::{Error, Result};

/// `ψ̂` as a function of `(η, ρ^*(η))`. Callers that already know `ρ^*`
/// (the square-function engine uses `ρ^*(δ_t^* ξ) = t ρ^*(ξ)`) pass it in.
pub type ProfileSymbol = Arc<dyn Fn(&[f64], f64) -> Complex64 + Send + Sync>;

/// A Littlewood-Paley generator with `ψ̂(0) = 0`.
#[derive(Clone)]
pub struct LpProfile {
    symbol: ProfileSymbol,
    tag: String,
    dim: usize,
}

impl fmt::Debug for LpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LpProfile").field("tag", &self.tag).field("dim", &self.dim).finish()
    }
}

impl LpProfile {
    /// Wraps a symbol; the value at the origin is forced to zero.
    pub fn new(dim: usize, tag: impl Into<String>, symbol: ProfileSymbol) -> Self {
        Self { symbol, tag: tag.into(), dim }
    }

    /// `ψ ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, "zero", Arc::new(|_, _| Complex64::new(0.0, 0.0)))
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Profiles always have mean zero.
    pub fn mean_zero(&self) -> bool {
        true
    }

    /// `ψ̂(η)` given `ρ^*(η)`.
    #[inline]
    pub fn eval(&self, eta: &[f64], rho_star: f64) -> Complex64 {
        if rho_star == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        (self.symbol)(eta, rho_star)
    }

    /// `ψ̂(η)`, computing `ρ^*(η)` with `group`.
    pub fn eval_at(&self, group: &DilationGroup, eta: &[f64]) -> Complex64 {
        self.eval(eta, group.rho(eta, true))
    }
}

fn check_alpha(alpha: f64, upper: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::Domain(format!("alpha must lie in (0, {upper}), got {alpha}")));
    }
    Ok(())
}

/// `ψ̂^{(α)}(ξ) = ρ^*(ξ)^{−α} (1 − Φ̂(ξ))`.
pub fn potential_profile(group: &DilationGroup, alpha: f64, kernel: Arc<AveragingKernel>) -> Result<LpProfile> {
    check_alpha(alpha, group.gamma())?;
    check_dim(group, &kernel)?;
    let tag = format!("potential[{}; alpha={alpha}]", kernel.tag());
    Ok(LpProfile::new(
        group.dim(),
        tag,
        Arc::new(move |eta, r| r.powf(-alpha) * kernel.deficit(eta)),
    ))
}

/// `ρ^*(ξ)^{−α} (1 − Φ̂(ξ))^k`, the generator behind the iterated
/// potential square function.
pub fn iterated_potential_profile(
    group: &DilationGroup,
    alpha: f64,
    kernel: Arc<AveragingKernel>,
    k: u32,
) -> Result<LpProfile> {
    if k == 0 {
        return Err(Error::Domain("iteration count must be at least 1".into()));
    }
    check_alpha(alpha, group.gamma().min(2.0 * k as f64))?;
    check_dim(group, &kernel)?;
    let tag = format!("iterated-potential[{}; alpha={alpha}; k={k}]", kernel.tag());
    Ok(LpProfile::new(
        group.dim(),
        tag,
        Arc::new(move |eta, r| r.powf(-alpha) * kernel.deficit(eta).powu(k)),
    ))
}

fn check_dim(group: &DilationGroup, kernel: &AveragingKernel) -> Result<()> {
    if group.dim() != kernel.dim() {
        return Err(Error::Shape("kernel and group dimensions differ".into()));
    }
    Ok(())
}

/// A radial scale function `η` on `(0, ∞)`.
pub type Eta = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

/// `∫_0^1 g(s) ds` by the trapezoid rule; spectrally accurate for smooth
/// `g` whose derivatives vanish at both ends.
fn unit_trapezoid(g: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| g(i as f64 * h)).sum();
    h * (inner + 0.5 * (g(0.0) + g(1.0)))
}

/// `∫ η(t)² dt/t` for `η` supported in `[1, 2]`.
pub fn eta_normalization(eta: &dyn Fn(f64) -> f64) -> f64 {
    LN_2 * unit_trapezoid(|s| eta(2f64.powf(s)).powi(2), 4096)
}

/// The shipped scale function `η(t) = c · b(log₂ t)` with
/// `b(s) = exp(−1/(s(1 − s)))`, normalized so `∫ η² dt/t = 1`.
pub fn shipped_radial_eta() -> Eta {
    static SCALE: OnceLock<f64> = OnceLock::new();
    let c = *SCALE.get_or_init(|| 1.0 / (LN_2 * unit_trapezoid(|s| bump(s).powi(2), 4096)).sqrt());
    Arc::new(move |t: f64| if t > 0.0 { c * bump(t.log2()) } else { 0.0 })
}

/// `ψ̂(ξ) = η(ρ^*(ξ))` with `η` supported in `[1, 2]` and `∫ η² dt/t = 1`.
pub fn radial_profile(dim: usize, eta: Eta) -> Result<LpProfile> {
    for &t in &[0.0, 0.5, 0.99, 2.01, 3.0, 100.0] {
        if eta(t) != 0.0 {
            return Err(Error::Domain(format!("eta must vanish outside [1, 2], eta({t}) = {}", eta(t))));
        }
    }
    let integral = eta_normalization(&*eta);
    if (integral - 1.0).abs() > 1e-8 {
        return Err(Error::Normalization { integral });
    }
    Ok(LpProfile::new(dim, "radial", Arc::new(move |_, r| Complex64::new(eta(r), 0.0))))
}

/// `ψ̂^{(j)}(ξ) = 2πi ξ_j e^{−2π|ξ|}`, `j = 1..n`, for ordinary dilations.
pub fn poisson_gradient_family(group: &DilationGroup) -> Result<Vec<LpProfile>> {
    if !group.is_isotropic() {
        return Err(Error::Domain("the Poisson family needs P = I".into()));
    }
    let n = group.dim();
    Ok((0..n)
        .map(|j| {
            LpProfile::new(
                n,
                format!("poisson[{j}]"),
                Arc::new(move |eta: &[f64], r: f64| Complex64::new(0.0, 2.0 * PI * eta[j] * (-2.0 * PI * r).exp())),
            )
        })
        .collect())
}

/// The one-dimensional generators behind the Marcinkiewicz functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarcinkiewiczVariant {
    /// `ψ(x) = sgn(x) χ_{[−1,1]}(x)`.
    Sign,
    /// `ψ^{(1)}(x) = x χ_{[−1,1]}(x)`.
    Linear,
    /// `ψ^{(0)} = ψ/2 − ψ^{(1)}/2`.
    Combined,
}

/// `(a − sin a)/a²`.
fn sine_defect(a: f64) -> f64 {
    if a.abs() < 1.0 {
        // Σ_{k≥1} (−1)^{k+1} a^{2k−1}/(2k+1)!
        let a2 = a * a;
        let mut term = a / 6.0;
        let mut sum = term;
        for k in 2..12 {
            term *= -a2 / ((2 * k) as f64 * (2 * k + 1) as f64);
            sum += term;
        }
        sum
    } else {
        (a - a.sin()) / (a * a)
    }
}

/// `(sin a − a cos a)/a²`.
fn sine_moment(a: f64) -> f64 {
    if a.abs() < 1.0 {
        // Σ_{k≥1} (−1)^{k+1} 2k a^{2k−1}/(2k+1)!
        let a2 = a * a;
        let mut power = a;
        let mut fact = 6.0;
        let mut sum = 2.0 * power / fact;
        for k in 2..12 {
            power *= -a2;
            fact *= (2 * k) as f64 * (2 * k + 1) as f64;
            sum += (2 * k) as f64 * power / fact;
        }
        sum
    } else {
        (a.sin() - a * a.cos()) / (a * a)
    }
}

/// Transform of a Marcinkiewicz generator at frequency `u`.
pub fn marcinkiewicz_symbol(variant: MarcinkiewiczVariant, u: f64) -> Complex64 {
    let a = 2.0 * PI * u;
    let value = match variant {
        // −i (1 − cos a)/(πu) = −2i · 2 sin²(a/2)/a
        MarcinkiewiczVariant::Sign => {
            if a == 0.0 {
                0.0
            } else {
                -4.0 * (0.5 * a).sin().powi(2) / a
            }
        }
        MarcinkiewiczVariant::Linear => -2.0 * sine_moment(a),
        MarcinkiewiczVariant::Combined => -sine_defect(a),
    };
    Complex64::new(0.0, value)
}

pub fn marcinkiewicz_profile(variant: MarcinkiewiczVariant) -> LpProfile {
    let tag = match variant {
        MarcinkiewiczVariant::Sign => "marcinkiewicz-sign",
        MarcinkiewiczVariant::Linear => "marcinkiewicz-linear",
        MarcinkiewiczVariant::Combined => "marcinkiewicz-combined",
    };
    LpProfile::new(1, tag, Arc::new(move |eta, _| marcinkiewicz_symbol(variant, eta[0])))
}

/// Unit vectors used to probe a profile in every direction.
pub fn unit_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            // Gaussian-free spread: normalized Halton points in the cube.
            let primes = [2u64, 3, 5, 7, 11, 13];
            (1..=count)
                .map(|i| {
                    let v: Vec<f64> = (0..n)
                        .map(|d| {
                            let (mut f, mut r, mut idx) = (1.0, 0.0, i as u64);
                            let b = primes[d % primes.len()];
                            while idx > 0 {
                                f /= b as f64;
                                r += f * (idx % b) as f64;
                                idx /= b;
                            }
                            2.0 * r - 1.0
                        })
                        .collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

/// `min_ω sup_t |ψ̂(δ_t^* ω)|` over `directions` unit vectors and `scales`
/// log-uniform values of `t` in `[2^{-20}, 2^{20}]`. A positive result is
/// the sampled non-degeneracy condition.
pub fn nondegeneracy_scan(profile: &LpProfile, group: &DilationGroup, directions: usize, scales: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for omega in unit_directions(group.dim(), directions) {
        let mut best: f64 = 0.0;
        for s in 0..scales {
            let t = 2f64.powf(-20.0 + 40.0 * s as f64 / (scales - 1).max(1) as f64);
            let eta = group.apply(t, &omega, true)?;
            // ρ^*(ω) = 1 for Euclidean unit vectors, hence ρ^*(δ_t^* ω) = t.
            best = best.max(profile.eval(&eta, t).norm());
        }
        worst = worst.min(best);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::ball_averaging_kernel;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn potential_profile_on_unit_shell() {
        let g = DilationGroup::parabolic();
        let k = Arc::new(ball_averaging_kernel(&g));
        let psi = potential_profile(&g, 1.0, k.clone()).unwrap();
        let xi = [0.6, 0.8];
        assert!((g.rho(&xi, true) - 1.0).abs() < 1e-14);
        assert!((psi.eval_at(&g, &xi) - k.deficit(&xi)).norm() < 1e-15);
        assert_eq!(psi.eval_at(&g, &[0.0, 0.0]), Complex64::new(0.0, 0.0));
        assert!(matches!(potential_profile(&g, 3.0, k.clone()), Err(Error::Domain(_))));
        assert!(matches!(potential_profile(&g, 0.0, k), Err(Error::Domain(_))));
    }

    #[test]
    fn potential_profile_small_frequency_bound() {
        let g = DilationGroup::parabolic();
        let k = Arc::new(ball_averaging_kernel(&g));
        // χ₀ has vanishing first moments only, so the bound is checked for α < 2.
        for &alpha in &[0.5, 1.0, 1.5, 1.9] {
            let psi = potential_profile(&g, alpha, k.clone()).unwrap();
            let exponent = -alpha + alpha.floor() + 1.0;
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut ratio_max: f64 = 0.0;
            for _ in 0..500 {
                let th: f64 = rng.random_range(0.0..2.0 * PI);
                let t = 10f64.powf(rng.random_range(-4.0..-1.0));
                let xi = g.apply(t, &[th.cos(), th.sin()], true).unwrap();
                ratio_max = ratio_max.max(psi.eval(&xi, t).norm() / t.powf(exponent));
            }
            assert!(ratio_max < 50.0, "alpha {alpha}: {ratio_max}");
        }
    }

    #[test]
    fn potential_profile_nondegenerate() {
        let g = DilationGroup::parabolic();
        let k = Arc::new(ball_averaging_kernel(&g));
        let psi = potential_profile(&g, 1.5, k).unwrap();
        assert!(nondegeneracy_scan(&psi, &g, 64, 256).unwrap() > 0.1);
        assert_eq!(nondegeneracy_scan(&LpProfile::zero(2), &g, 8, 16).unwrap(), 0.0);
    }

    #[test]
    fn shipped_eta_is_normalized_and_supported() {
        let eta = shipped_radial_eta();
        assert!((eta_normalization(&*eta) - 1.0).abs() < 1e-12);
        assert_eq!(eta(0.99), 0.0);
        assert_eq!(eta(2.0), 0.0);
        assert!(eta(1.5) > 0.0);
        let psi = radial_profile(2, eta).unwrap();
        let g = DilationGroup::parabolic();
        assert_eq!(psi.eval_at(&g, &[0.1, 0.1]), Complex64::new(0.0, 0.0));
        assert_eq!(psi.eval_at(&g, &[3.0, 0.0]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn radial_scale_integral_is_one() {
        // Independent oracle: substitute u = t ρ^*(ξ) and integrate η(u)² du/u
        // with composite Simpson on a fine grid.
        let eta = shipped_radial_eta();
        let m = 20000;
        let h = 1.0 / m as f64;
        let mut sum = 0.0;
        for i in 0..=m {
            let s = i as f64 * h;
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * eta(2f64.powf(s)).powi(2);
        }
        let value = sum * h / 3.0 * LN_2;
        assert!((value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unnormalized_eta_rejected() {
        let eta = shipped_radial_eta();
        let doubled: Eta = Arc::new(move |t| 2.0 * eta(t));
        assert!(matches!(radial_profile(2, doubled), Err(Error::Normalization { .. })));
    }

    #[test]
    fn poisson_family_identities() {
        let g = DilationGroup::isotropic(2).unwrap();
        let fam = poisson_gradient_family(&g).unwrap();
        assert!(poisson_gradient_family(&DilationGroup::parabolic()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let xi: [f64; 2] = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let r: f64 = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let sq: f64 = fam.iter().map(|p| p.eval(&xi, r).norm_sqr()).sum();
            let expect = (2.0 * PI * r).powi(2) * (-4.0 * PI * r).exp();
            assert!((sq - expect).abs() <= 1e-12 * expect.max(1.0));
        }
        for p in &fam {
            assert_eq!(p.eval_at(&g, &[0.0, 0.0]), Complex64::new(0.0, 0.0));
        }
    }

    /// `∫_{-1}^{1} ψ(x) e^{-2πixu} dx` by composite Gauss-Legendre on each half.
    fn transform_by_quadrature(psi: impl Fn(f64) -> f64, u: f64) -> Complex64 {
        let nodes = [-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664];
        let weights = [0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891];
        let panels = 400;
        let mut sum = Complex64::new(0.0, 0.0);
        for (a, b) in [(-1.0, 0.0), (0.0, 1.0)] {
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let c = a + (p as f64 + 0.5) * h;
                for (x, w) in nodes.iter().zip(&weights) {
                    let y = c + 0.5 * h * x;
                    sum += Complex64::from_polar(psi(y) * w * 0.5 * h, -2.0 * PI * y * u);
                }
            }
        }
        sum
    }

    #[test]
    fn marcinkiewicz_symbols_match_quadrature() {
        let sign = |x: f64| x.signum();
        let linear = |x: f64| x;
        for &u in &[1e-6, 0.01, 0.1, 0.15, 0.3, 1.0, 2.7, -0.8] {
            let s = marcinkiewicz_symbol(MarcinkiewiczVariant::Sign, u);
            let l = marcinkiewicz_symbol(MarcinkiewiczVariant::Linear, u);
            let c = marcinkiewicz_symbol(MarcinkiewiczVariant::Combined, u);
            assert!((s - transform_by_quadrature(sign, u)).norm() < 1e-10, "{u}");
            assert!((l - transform_by_quadrature(linear, u)).norm() < 1e-10, "{u}");
            assert!((c - (s - l) * 0.5).norm() < 1e-14, "{u}");
        }
    }
}
