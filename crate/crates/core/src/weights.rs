//! Power weights, empirical A_p constants over ρ-balls and the centered
//! maximal operator.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dilation::DilationGroup;
use crate::error::{Error, Result};
use crate::fields::{fft_nd, GridSpec, SpatialField, Weight};
use crate::kernels::AveragingKernel;
use crate::operators::{adjoint_dilations, mat_vec};

/// Centers of the sampled balls sit on every `CENTER_STRIDE`-th lattice point.
pub const CENTER_STRIDE: usize = 4;

/// `(offset + ρ(x))^β`.
pub fn power_weight(group: Arc<DilationGroup>, beta: f64, offset: f64) -> Result<Weight> {
    Weight::power(group, beta, offset)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApEstimate {
    pub p: f64,
    /// Largest A_p product seen; a lower bound for the constant.
    pub lower_bound: f64,
    pub balls_tested: usize,
    /// Center and radius of the maximizing ball.
    pub argmax_ball: (Vec<f64>, f64),
}

/// Lattice offsets `d` with `ρ(d) < r`, as per-axis cell counts.
fn ball_offsets(group: &DilationGroup, grid: &GridSpec, r: f64, periodic: bool) -> Result<Vec<Vec<i64>>> {
    let n = grid.dim();
    // {ρ < r} = δ_r(unit ball), so each coordinate is bounded by ‖δ_r‖.
    let reach = group.dilation_matrix(r, false)?.norm();
    let bounds: Vec<i64> = (0..n)
        .map(|a| {
            let b = (reach / grid.spacing(a)).ceil() as i64;
            if periodic {
                b.min(grid.points()[a] as i64 / 2 - 1).max(0)
            } else {
                b
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = bounds.iter().map(|b| -b).collect();
    let mut d = vec![0.0; n];
    'outer: loop {
        for a in 0..n {
            d[a] = -(idx[a] as f64) * grid.spacing(a);
        }
        if group.rho(&d, false) < r {
            out.push(idx.clone());
        }
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] <= bounds[a] {
                continue 'outer;
            }
            idx[a] = -bounds[a];
        }
        break;
    }
    Ok(out)
}

/// Dyadic radii from `lo` up to and including the last one below `hi`.
fn dyadic(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = lo;
    while r <= hi * (1.0 + 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// Radii `2·cell, 4·cell, …, extent/4` of the default A_p ball sample.
pub fn ap_radii(grid: &GridSpec) -> Vec<f64> {
    let cell = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let extent = grid.extent().iter().cloned().fold(f64::INFINITY, f64::min);
    dyadic(2.0 * cell, 0.25 * extent)
}

/// Radii `cell, 2·cell, …` up to `extent/2` for [`maximal_function`].
pub fn maximal_radii(grid: &GridSpec) -> Vec<f64> {
    let cell = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let extent = grid.extent().iter().cloned().fold(f64::INFINITY, f64::min);
    dyadic(cell, 0.5 * extent)
}

/// Lower bound for `[w]_{A_p}` from the first `n_balls` balls of a
/// seed-shuffled sample (centers on a sublattice of `grid`, dyadic radii).
/// Balls may extend past the grid; the weight is evaluated there directly.
pub fn estimate_ap_constant(w: &Weight, grid: &GridSpec, p: f64, n_balls: usize, seed: u64) -> Result<ApEstimate> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("exponent p must lie in (1, ∞), got {p}")));
    }
    let n = grid.dim();
    let radii = ap_radii(grid);
    let group = match w.group() {
        Some(g) if !w.is_constant() => g.clone(),
        _ => {
            // w ≡ 1: every ball gives exactly one.
            let mut center = vec![0.0; n];
            grid.point(0, &mut center);
            let total = sample_size(grid, radii.len());
            return Ok(ApEstimate { p, lower_bound: 1.0, balls_tested: n_balls.min(total), argmax_ball: (center, radii[0]) });
        }
    };
    let stencils: Vec<Vec<Vec<i64>>> = radii.iter().map(|&r| ball_offsets(&group, grid, r, false)).collect::<Result<_>>()?;

    // Weight on the lattice padded by the widest stencil.
    let pad: Vec<i64> = (0..n)
        .map(|a| stencils.iter().flatten().map(|d| d[a].abs()).max().unwrap_or(0))
        .collect();
    let dims: Vec<usize> = (0..n).map(|a| grid.points()[a] + 2 * pad[a] as usize).collect();
    let total_len: usize = dims.iter().product();
    let dual_exp = -1.0 / (p - 1.0);
    let values: Vec<(f64, f64)> = (0..total_len)
        .into_par_iter()
        .map(|flat| {
            let mut x = vec![0.0; n];
            let mut rem = flat;
            for a in (0..n).rev() {
                let i = (rem % dims[a]) as i64 - pad[a];
                rem /= dims[a];
                x[a] = -0.5 * grid.extent()[a] + i as f64 * grid.spacing(a);
            }
            let v = w.value_at(&x);
            (v, v.powf(dual_exp))
        })
        .collect();
    if let Some(bad) = values.iter().find(|(v, _)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularWeight(format!("weight takes the value {} on the sampled balls", bad.0)));
    }

    let mut balls = ball_sample(grid, radii.len());
    balls.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    balls.truncate(n_balls);
    let products: Vec<f64> = balls
        .par_iter()
        .map(|(center, ri)| {
            let (mut sw, mut sd) = (0.0, 0.0);
            for d in &stencils[*ri] {
                let flat = d.iter().enumerate().fold(0usize, |acc, (a, &o)| {
                    acc * dims[a] + (center[a] as i64 + o + pad[a]) as usize
                });
                sw += values[flat].0;
                sd += values[flat].1;
            }
            let m = stencils[*ri].len() as f64;
            (sw / m) * (sd / m).powf(p - 1.0)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in products.iter().enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    if products.is_empty() {
        return Err(Error::Domain("no balls sampled".into()));
    }
    let (center, ri) = &balls[best.1];
    let x: Vec<f64> = (0..n).map(|a| -0.5 * grid.extent()[a] + center[a] as f64 * grid.spacing(a)).collect();
    Ok(ApEstimate { p, lower_bound: best.0, balls_tested: balls.len(), argmax_ball: (x, radii[*ri]) })
}

fn sample_size(grid: &GridSpec, radii: usize) -> usize {
    grid.points().iter().map(|&k| k.div_ceil(CENTER_STRIDE)).product::<usize>() * radii
}

/// `(center index, radius index)` pairs in lexicographic order.
fn ball_sample(grid: &GridSpec, radii: usize) -> Vec<(Vec<usize>, usize)> {
    let axes: Vec<Vec<usize>> = grid.points().iter().map(|&k| (0..k).step_by(CENTER_STRIDE).collect()).collect();
    let mut centers: Vec<Vec<usize>> = vec![vec![]];
    for axis in &axes {
        centers = centers
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    centers.into_iter().flat_map(|c| (0..radii).map(move |r| (c.clone(), r))).collect()
}

/// Periodic indicator of `{ρ < r}` normalized to unit mass, spectrally.
fn ball_stencil_spectrum(group: &DilationGroup, grid: &GridSpec, r: f64) -> Result<Vec<Complex64>> {
    let offsets = ball_offsets(group, grid, r, true)?;
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
    let weight = 1.0 / offsets.len() as f64;
    let mut idx = vec![0usize; grid.dim()];
    for d in &offsets {
        for a in 0..grid.dim() {
            let k = grid.points()[a] as i64;
            idx[a] = d[a].rem_euclid(k) as usize;
        }
        data[grid.ravel(&idx)] += weight;
    }
    fft_nd(&mut data, grid.points(), false);
    Ok(data)
}

/// Centered maximal function: the largest average of `|f|` over the
/// centered ρ-balls of the given radii (periodic on the grid).
pub fn maximal_function(f: &SpatialField, group: &DilationGroup, radii: &[f64]) -> Result<SpatialField> {
    if group.dim() != f.grid.dim() {
        return Err(Error::Shape("group and field dimensions differ".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Domain("radii must be positive".into()));
    }
    let grid = &f.grid;
    let mut abs: Vec<Complex64> = f.samples.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect();
    fft_nd(&mut abs, grid.points(), false);
    let len = grid.len() as f64;
    let averages: Vec<Vec<f64>> = radii
        .par_iter()
        .map(|&r| {
            let stencil = ball_stencil_spectrum(group, grid, r)?;
            let mut prod: Vec<Complex64> = abs.iter().zip(&stencil).map(|(a, b)| a * b).collect();
            fft_nd(&mut prod, grid.points(), true);
            Ok(prod.iter().map(|z| z.re / len).collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<f64> = f.samples.iter().map(|z| z.norm()).collect();
    for avg in &averages {
        for (o, a) in out.iter_mut().zip(avg) {
            *o = o.max(*a);
        }
    }
    Ok(SpatialField { grid: grid.clone(), samples: out.into_iter().map(|v| Complex64::new(v, 0.0)).collect() })
}

/// Centered ball average of `|f|` at radius `r`.
pub fn ball_average(f: &SpatialField, group: &DilationGroup, r: f64) -> Result<SpatialField> {
    let grid = &f.grid;
    let mut abs: Vec<Complex64> = f.samples.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect();
    fft_nd(&mut abs, grid.points(), false);
    let stencil = ball_stencil_spectrum(group, grid, r)?;
    let mut prod: Vec<Complex64> = abs.iter().zip(&stencil).map(|(a, b)| a * b).collect();
    fft_nd(&mut prod, grid.points(), true);
    let len = grid.len() as f64;
    Ok(SpatialField { grid: grid.clone(), samples: prod.iter().map(|z| Complex64::new(z.re / len, 0.0)).collect() })
}

/// `max_x sup_t |f∗φ_t(x)| / M(f)(x)` over the given scales, with
/// `φ_t = t^{−γ} φ∘δ_{1/t}`. Points where `M(f)` is below `1e−8·max M(f)`
/// are skipped.
pub fn domination_constant(
    f: &SpatialField,
    kernel: &AveragingKernel,
    group: &DilationGroup,
    radii: &[f64],
    scales: &[f64],
) -> Result<f64> {
    let m = maximal_function(f, group, radii)?;
    let spec = f.to_spectrum();
    let n = f.grid.dim();
    let dilations = adjoint_dilations(group, scales)?;
    let sups = dilations
        .par_iter()
        .map(|d| {
            let mut eta = vec![0.0; n];
            let smoothed = spec.multiply(|xi, _| {
                mat_vec(d, xi, &mut eta);
                kernel.fourier(&eta)
            });
            smoothed.to_spatial().samples.iter().map(|z| z.norm()).collect::<Vec<f64>>()
        })
        .reduce(|| vec![0.0; f.grid.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect());
    let floor = 1e-8 * m.max_abs();
    Ok(sups
        .iter()
        .zip(&m.samples)
        .filter(|(_, mv)| mv.re > floor)
        .map(|(s, mv)| s / mv.re)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_test_function;
    use proptest::prelude::*;

    fn line(n: usize) -> GridSpec {
        GridSpec::cube(1, 16.0, n).unwrap()
    }

    #[test]
    fn constant_weight_is_exactly_one() {
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let g = Arc::new(DilationGroup::parabolic());
        for p in [1.2, 2.0, 5.0] {
            let e = estimate_ap_constant(&power_weight(g.clone(), 0.0, 0.0).unwrap(), &grid, p, 1000, 1).unwrap();
            assert_eq!(e.lower_bound, 1.0);
        }
    }

    #[test]
    fn singular_weight_is_rejected() {
        let g = Arc::new(DilationGroup::parabolic());
        assert!(matches!(power_weight(g, -1.0, 0.0), Err(Error::SingularWeight(_))));
    }

    #[test]
    fn one_dimensional_sqrt_weight_matches_closed_form() {
        // w = (o + |x|)^{1/2}, p = 2: both averages integrate in closed form.
        let o = 0.05;
        let g = Arc::new(DilationGroup::isotropic(1).unwrap());
        let w = power_weight(g, 0.5, o).unwrap();
        let prim = |x: f64, s: f64| x.signum() * ((o + x.abs()).powf(s + 1.0) - o.powf(s + 1.0)) / (s + 1.0);
        let exact = |c: f64, r: f64| {
            let avg = |s: f64| (prim(c + r, s) - prim(c - r, s)) / (2.0 * r);
            avg(0.5) * avg(-0.5)
        };
        let mut previous: Option<f64> = None;
        for n in [256, 512, 1024] {
            let grid = line(n);
            let e = estimate_ap_constant(&w, &grid, 2.0, usize::MAX, 0).unwrap();
            let mut oracle: f64 = 0.0;
            for (c, ri) in ball_sample(&grid, ap_radii(&grid).len()) {
                let x = -8.0 + c[0] as f64 * grid.spacing(0);
                oracle = oracle.max(exact(x, ap_radii(&grid)[ri]));
            }
            assert!(e.lower_bound.is_finite() && e.lower_bound >= 1.0);
            assert!((e.lower_bound / oracle - 1.0).abs() < 0.05, "{} vs {oracle}", e.lower_bound);
            if let Some(prev) = previous {
                assert!((e.lower_bound / prev - 1.0_f64).abs() < 0.05);
            }
            previous = Some(e.lower_bound);
        }
    }

    #[test]
    fn strongly_singular_weight_blows_up() {
        let g = Arc::new(DilationGroup::parabolic());
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let w = power_weight(g.clone(), -2.0 * g.gamma(), 0.25 * grid.spacing(0)).unwrap();
        let e = estimate_ap_constant(&w, &grid, 2.0, usize::MAX, 0).unwrap();
        assert!(e.lower_bound > 1e3, "{}", e.lower_bound);
    }

    #[test]
    fn more_balls_never_lower_the_estimate() {
        let g = Arc::new(DilationGroup::parabolic());
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let w = power_weight(g, 0.9, 0.1).unwrap();
        let mut last = 0.0;
        for n in [4, 8, 16, 32, 64, 128, 256, 512] {
            let e = estimate_ap_constant(&w, &grid, 2.0, n, 9).unwrap();
            assert!(e.lower_bound >= last);
            assert!(e.lower_bound >= 1.0 - 1e-12);
            last = e.lower_bound;
        }
    }

    #[test]
    fn translated_weight_moves_the_maximizer() {
        let g = Arc::new(DilationGroup::parabolic());
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let h = grid.spacing(0);
        let base = power_weight(g.clone(), -1.5, 0.25 * h).unwrap();
        let shift = vec![4.0 * h, -8.0 * h];
        let moved = base.clone().centered_at(shift.clone());
        let a = estimate_ap_constant(&base, &grid, 2.0, usize::MAX, 3).unwrap();
        let b = estimate_ap_constant(&moved, &grid, 2.0, usize::MAX, 3).unwrap();
        assert!((a.lower_bound / b.lower_bound - 1.0).abs() < 0.02);
        for k in 0..2 {
            assert!((b.argmax_ball.0[k] - a.argmax_ball.0[k] - shift[k]).abs() < 1e-9);
        }
        assert_eq!(a.argmax_ball.1, b.argmax_ball.1);
    }

    #[test]
    fn maximal_function_of_constant() {
        let g = DilationGroup::parabolic();
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let f = SpatialField::from_real_fn(&grid, |_| -2.5);
        let m = maximal_function(&f, &g, &maximal_radii(&grid)).unwrap();
        assert!(m.samples.iter().all(|z| (z.re - 2.5).abs() < 1e-3));
    }

    #[test]
    fn maximal_function_of_ball_indicator() {
        let g = DilationGroup::parabolic();
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let f = SpatialField::from_real_fn(&grid, |x| if g.rho(x, false) < 1.5 { 1.0 } else { 0.0 });
        let m = maximal_function(&f, &g, &maximal_radii(&grid)).unwrap();
        for (z, v) in m.samples.iter().zip(&f.samples) {
            if v.re == 1.0 {
                assert!((z.re - 1.0).abs() < 1e-3);
            }
            assert!(z.re <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn maximal_function_dominates_ball_averages() {
        let g = DilationGroup::parabolic();
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let f = random_test_function(5, &g, &grid, 0.125).unwrap();
        let radii = maximal_radii(&grid);
        let m = maximal_function(&f, &g, &radii).unwrap();
        for &r in &radii {
            let avg = ball_average(&f, &g, r).unwrap();
            for (a, b) in m.samples.iter().zip(&avg.samples) {
                assert!(a.re >= b.re - 1e-12);
            }
        }
    }

    #[test]
    fn smooth_averages_are_dominated_by_the_maximal_function() {
        let g = DilationGroup::parabolic();
        let grid = GridSpec::cube(2, 8.0, 32).unwrap();
        let f = random_test_function(11, &g, &grid, 0.125).unwrap();
        let phi = crate::kernels::bump_kernel(2);
        let scales: Vec<f64> = (-12..=8).map(|j| 2f64.powf(j as f64 / 2.0)).collect();
        let c = domination_constant(&f, &phi, &g, &maximal_radii(&grid), &scales).unwrap();
        assert!(c.is_finite() && c > 0.1 && c < 20.0, "{c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn maximal_function_is_sublinear(s1 in 0u64..1000, s2 in 0u64..1000, c in -3.0f64..3.0) {
            let g = DilationGroup::parabolic();
            let grid = GridSpec::cube(2, 4.0, 32).unwrap();
            let f = random_test_function(s1, &g, &grid, 0.125).unwrap();
            let h = random_test_function(s2, &g, &grid, 0.125).unwrap().scale(Complex64::new(c, 0.0));
            let radii = maximal_radii(&grid);
            let sum = maximal_function(&f.add(&h).unwrap(), &g, &radii).unwrap();
            let mf = maximal_function(&f, &g, &radii).unwrap();
            let mh = maximal_function(&h, &g, &radii).unwrap();
            for i in 0..grid.len() {
                prop_assert!(sum.samples[i].re <= mf.samples[i].re + mh.samples[i].re + 1e-10);
            }
        }
    }
}
