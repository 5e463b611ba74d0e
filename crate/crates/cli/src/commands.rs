//! The three subcommands. Each writes CSV tables and a JSON summary into the
//! output directory and reports whether every check passed.

use std::error::Error;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use aniso_lp::dilation::parabolic_rho_closed_form;
use aniso_lp::fields::{band_limit, random_test_function, GridSpec, SpatialField, Weight};
use aniso_lp::kernels::{
    check_moment_class, marcinkiewicz_profile, moments, multi_indices, poisson_gradient_family, radial_profile, shipped_radial_eta,
    MarcinkiewiczVariant,
};
use aniso_lp::operators::riesz_potential;
use aniso_lp::sobolev::{
    diag12_derivative_check, equivalence_study, sobolev_norm, BetaSpec, Construction, Family, StudyParams, TheoremTag,
};
use aniso_lp::squares::{
    avg_square, g_psi, g_vector, marcinkiewicz, potential_square, AutoScale, MarcinkiewiczFunction, ScaleGrid, SquareFunctionResult,
};
use aniso_lp::weights::{estimate_ap_constant, maximal_function, maximal_radii};
use aniso_lp::DilationGroup;
use serde::Serialize;

use crate::config::Experiment;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest accepted spread and refinement drift of a sweep cell.
const MAX_SPREAD: f64 = 50.0;
const MAX_DRIFT: f64 = 0.05;

pub type Outcome = Result<bool, Box<dyn Error>>;

#[derive(Serialize)]
struct Summary<T: Serialize> {
    schema_version: u32,
    command: &'static str,
    master_seed: u64,
    passed: bool,
    #[serde(flatten)]
    body: T,
}

fn write_summary<T: Serialize>(dir: &Path, command: &'static str, e: &Experiment, passed: bool, body: T) -> Result<(), Box<dyn Error>> {
    let summary = Summary { schema_version: SCHEMA_VERSION, command, master_seed: e.config.master_seed, passed, body };
    fs::write(dir.join(format!("{command}_summary.json")), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), Box<dyn Error>> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Check {
    check: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check { check: name.into(), value, tolerance, pass: value <= tolerance }
}

fn max_abs_diff(a: &SquareFunctionResult, b: &SquareFunctionResult) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(values: &[f64], grid: &GridSpec) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt()
}

pub fn verify(e: &Experiment) -> Outcome {
    let dir = &e.config.output_dir;
    fs::create_dir_all(dir)?;
    let g = &*e.group;
    let grid = &e.grid;
    let n = g.dim();
    let mut family = e.family("verify");
    family.seeds.truncate(4);
    let fields = family.fields(grid)?;
    let mut checks = Vec::new();

    // Dilations: homogeneity on lattice points over four decades of t.
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; n];
    for i in (1..grid.len()).step_by(97) {
        grid.point(i, &mut x);
        for j in -8..=8 {
            let t = 2f64.powf(j as f64 / 2.0);
            let r = g.rho(&x, false);
            if r > 0.0 {
                worst = worst.max((g.rho(&g.apply(t, &x, false)?, false) - t * r).abs() / (t * r));
            }
        }
    }
    checks.push(check("dilation.homogeneity", worst, 1e-9));
    if g.is_diagonal(&[1.0, 2.0]) {
        let mut worst: f64 = 0.0;
        for i in (1..grid.len()).step_by(13) {
            grid.point(i, &mut x);
            let exact = parabolic_rho_closed_form(&x);
            worst = worst.max((g.rho(&x, false) - exact).abs() / exact);
        }
        checks.push(check("dilation.closed_form", worst, 1e-9));
    }

    let parseval = fields.iter().map(|f| (f.to_spectrum().l2_norm() / f.l2_norm() - 1.0).abs()).fold(0.0, f64::max);
    checks.push(check("fields.parseval", parseval, 1e-12));

    let base = e.base_kernel();
    checks.push(check("kernels.first_moments", if check_moment_class(&base, 1.0).pass { 0.0 } else { 1.0 }, 0.0));
    let k2 = base.iterated_kernel(2)?;
    let idx = multi_indices(n, 3);
    let m = moments(&k2, &idx).iter().skip(1).map(|v| v.norm()).fold(0.0, f64::max);
    checks.push(check("kernels.iterated_moments", m, 1e-7));

    let mut worst: f64 = 0.0;
    for (f, alpha) in fields.iter().zip([0.5, 1.0, 1.7, 1.0]) {
        let back = riesz_potential(&riesz_potential(f, g, alpha)?, g, -alpha)?;
        worst = worst.max(back.max_diff(f)? / f.max_abs());
    }
    checks.push(check("operators.riesz_round_trip", worst, 1e-10));

    let psi = radial_profile(n, shipped_radial_eta())?;
    let mut worst: f64 = 0.0;
    for f in &fields {
        let r = g_psi(f, &psi, g, &ScaleGrid::default())?;
        worst = worst.max((l2(&r.values(), grid) / f.l2_norm() - 1.0).abs());
    }
    checks.push(check("squares.isometry", worst, 1e-5));
    let alpha = 1.3f64.min(0.9 * g.gamma());
    let lhs = avg_square(&fields[0], &base, alpha, g, &ScaleGrid::default())?;
    let rhs = potential_square(&riesz_potential(&fields[0], g, -alpha)?, &base, alpha, g, &ScaleGrid::Fixed(lhs.quadrature.clone()))?;
    checks.push(check("squares.potential_route", max_abs_diff(&lhs, &rhs), 1e-9));

    let unit = Weight::constant();
    let ap = e.config.sweep.p.iter().map(|&p| estimate_ap_constant(&unit, grid, p, usize::MAX, 0).map(|a| (a.lower_bound - 1.0).abs()));
    checks.push(check("weights.unit_weight", ap.collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max), 1e-12));
    let constant = SpatialField::from_real_fn(grid, |_| 1.5);
    let mc = maximal_function(&constant, g, &maximal_radii(grid))?;
    checks.push(check("weights.maximal_constant", mc.samples.iter().map(|z| (z.re - 1.5).abs()).fold(0.0, f64::max), 1e-3));

    let mut params = StudyParams::new(1.0, 1, base.clone());
    params.construction = Construction::NormalizedRadial;
    params.p = vec![2.0];
    params.beta = vec![BetaSpec::Fixed(0.0)];
    params.skip_refinement = true;
    let spread = equivalence_study(TheoremTag::T1_4, &family, &params)?[0].spread;
    checks.push(check("sobolev.exact_cell", spread - 1.0, 1e-5));
    let s1 = sobolev_norm(&fields[0], g, 1.0, 2.5, &unit)?;
    let s3 = sobolev_norm(&fields[0].scale(3.0.into()), g, 1.0, 2.5, &unit)?;
    checks.push(check("sobolev.scaling", (s3 / s1 - 3.0).abs(), 1e-12));

    let passed = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!("{} {}: {:.3e} (tolerance {:.0e})", if c.pass { "PASS" } else { "FAIL" }, c.check, c.value, c.tolerance);
    }
    write_csv(&dir.join("verify.csv"), &checks)?;
    #[derive(Serialize)]
    struct Body<'a> {
        checks: &'a [Check],
    }
    write_summary(dir, "verify", e, passed, Body { checks: &checks })?;
    Ok(passed)
}

#[derive(Serialize)]
struct SweepRow {
    tag: TheoremTag,
    alpha: f64,
    p: f64,
    beta: f64,
    k: u32,
    seed: u64,
    lhs: f64,
    rhs: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CellSummary {
    tag: TheoremTag,
    alpha: f64,
    p: f64,
    beta: f64,
    k: u32,
    kernel: String,
    c_min: f64,
    c_max: f64,
    spread: f64,
    refinement_drift: Option<f64>,
    pass: bool,
}

pub fn sweep(e: &Experiment) -> Outcome {
    let dir = &e.config.output_dir;
    fs::create_dir_all(dir)?;
    let family = e.family("family");
    let base = e.base_kernel();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for cell in &e.cells {
        let kernel = match cell.tag {
            TheoremTag::T1_4 | TheoremTag::T1_5 => e.kernel_for(cell.alpha, &base)?,
            _ => base.clone(),
        };
        let mut params = StudyParams::new(cell.alpha, cell.k, kernel.clone());
        params.p = e.config.sweep.p.clone();
        params.beta = e.config.sweep.beta.clone();
        params.skip_refinement = !e.config.sweep.refine;
        for r in equivalence_study(cell.tag, &family, &params)? {
            let drift = (!params.skip_refinement).then_some(r.refinement_drift);
            let pass = r.spread <= MAX_SPREAD && drift.is_none_or(|d| d <= MAX_DRIFT);
            println!(
                "{} {} alpha={} p={} beta={:.3} k={}: spread {:.3}{}",
                if pass { "PASS" } else { "FAIL" },
                r.theorem_tag,
                r.alpha,
                r.p,
                r.beta,
                r.k,
                r.spread,
                drift.map(|d| format!(", drift {d:.2e}")).unwrap_or_default()
            );
            for s in &r.samples {
                rows.push(SweepRow { tag: r.theorem_tag, alpha: r.alpha, p: r.p, beta: r.beta, k: r.k, seed: s.seed, lhs: s.lhs, rhs: s.rhs, ratio: s.ratio });
            }
            cells.push(CellSummary {
                tag: r.theorem_tag,
                alpha: r.alpha,
                p: r.p,
                beta: r.beta,
                k: r.k,
                kernel: kernel.tag().to_string(),
                c_min: r.c_min,
                c_max: r.c_max,
                spread: r.spread,
                refinement_drift: drift,
                pass,
            });
        }
    }
    write_csv(&dir.join("sweep.csv"), &rows)?;
    let passed = cells.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Body {
        cells: Vec<CellSummary>,
        c_min: f64,
        c_max: f64,
        spread: f64,
        refinement_drift: Option<f64>,
    }
    let c_min = cells.iter().map(|c| c.c_min).fold(f64::INFINITY, f64::min);
    let c_max = cells.iter().map(|c| c.c_max).fold(0.0, f64::max);
    let spread = cells.iter().map(|c| c.spread).fold(0.0, f64::max);
    let refinement_drift = cells.iter().filter_map(|c| c.refinement_drift).reduce(f64::max);
    write_summary(dir, "sweep", e, passed, Body { cells, c_min, c_max, spread, refinement_drift })?;
    Ok(passed)
}

#[derive(Serialize)]
struct Diag12Row {
    seed: u64,
    p: f64,
    beta: f64,
    a: f64,
    b: f64,
    ratio: f64,
    reconstruction_error: f64,
}

#[derive(Serialize)]
struct PoissonRow {
    t: f64,
    magnitude: f64,
}

#[derive(Serialize)]
struct MarcinkiewiczRow {
    x: f64,
    f: f64,
    mu: f64,
    g_sign: f64,
    nu: f64,
    g_combined: f64,
}

fn rel_l2(a: &SquareFunctionResult, b: &SquareFunctionResult) -> f64 {
    let (x, y) = (a.values(), b.values());
    let num: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum();
    let den: f64 = y.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

pub fn demo(e: &Experiment) -> Outcome {
    let dir = &e.config.output_dir;
    fs::create_dir_all(dir)?;

    // Derivative characterization for P = diag(1, 2) on the configured grid.
    let d12 = Arc::new(DilationGroup::diagonal(&[1.0, 2.0])?);
    let grid = GridSpec::cube(2, e.config.grid.extent, e.config.grid.points)?;
    let family = Family::derived(d12.clone(), grid.clone(), e.config.master_seed, "demo", e.config.family.seeds, e.config.family.eps);
    let offset = 0.25 * grid.spacing(0);
    let mut diag_rows = Vec::new();
    for (seed, f) in family.seeds.iter().zip(family.fields(&grid)?) {
        for &p in &e.config.sweep.p {
            for spec in &e.config.sweep.beta {
                let beta = spec.resolve(&d12, p);
                let w = if beta == 0.0 { Weight::constant() } else { Weight::power(d12.clone(), beta, offset)? };
                let c = diag12_derivative_check(&f, &d12, p, &w)?;
                diag_rows.push(Diag12Row { seed: *seed, p, beta, a: c.a, b: c.b, ratio: c.norm_ratio, reconstruction_error: c.reconstruction_error });
            }
        }
    }
    let reconstruction = diag_rows.iter().map(|r| r.reconstruction_error).fold(0.0, f64::max);
    let ratio_spread = diag_rows.iter().map(|r| r.ratio).fold(0.0, f64::max) / diag_rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    write_csv(&dir.join("demo_diag12.csv"), &diag_rows)?;

    // Poisson gradient family: |ℱΨ_t(ξ)| at ξ = (1, 0) and the norm identity.
    let iso = DilationGroup::isotropic(2)?;
    let poisson = poisson_gradient_family(&iso)?;
    let magnitude = |t: f64| -> f64 {
        let eta = [t, 0.0];
        poisson.iter().map(|p| p.eval(&eta, t).norm_sqr()).sum::<f64>().sqrt()
    };
    let profile: Vec<PoissonRow> = (-64..=32).map(|j| 2f64.powf(j as f64 / 8.0)).map(|t| PoissonRow { t, magnitude: magnitude(t) }).collect();
    write_csv(&dir.join("demo_poisson_profile.csv"), &profile)?;
    let (mut a, mut b) = ((1e-3f64).ln(), (1e2f64).ln());
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (c, d) = (b - golden * (b - a), a + golden * (b - a));
        if magnitude(c.exp()) > magnitude(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    let sup_error = (magnitude((0.5 * (a + b)).exp()) - (-1f64).exp()).abs();
    let mut norm_error: f64 = 0.0;
    for seed in family.seeds.iter().take(4) {
        let f = random_test_function(*seed, &iso, &grid, e.config.family.eps)?;
        let r = g_vector(&f, &poisson, &iso, &ScaleGrid::default())?;
        norm_error = norm_error.max((l2(&r.values(), &grid) / f.l2_norm() - 0.5).abs());
    }

    // Marcinkiewicz functions against their square-function forms.
    let line = DilationGroup::isotropic(1)?;
    let grid1 = GridSpec::cube(1, 32.0, 256)?;
    let f = random_test_function(family.seeds[0], &line, &grid1, 0.125)?;
    let window = SpatialField::from_real_fn(&grid1, |x| (-PI * (x[0] / 6.0).powi(2)).exp());
    let windowed = SpatialField::new(grid1.clone(), f.samples.iter().zip(&window.samples).map(|(a, b)| a * b).collect())?;
    let f = band_limit(&windowed, &line, 0.125)?;
    let scale = ScaleGrid::Auto(AutoScale::uniform(64));
    let mu = marcinkiewicz(&f, MarcinkiewiczFunction::Mu, &scale)?;
    let gs = g_psi(&f, &marcinkiewicz_profile(MarcinkiewiczVariant::Sign), &line, &scale)?;
    let nu = marcinkiewicz(&f, MarcinkiewiczFunction::Nu, &scale)?;
    let gc = g_psi(&f, &marcinkiewicz_profile(MarcinkiewiczVariant::Combined), &line, &scale)?;
    let mut x = [0.0];
    let rows: Vec<MarcinkiewiczRow> = (0..grid1.len())
        .map(|i| {
            grid1.point(i, &mut x);
            MarcinkiewiczRow { x: x[0], f: f.samples[i].re, mu: mu.values()[i], g_sign: gs.values()[i], nu: nu.values()[i], g_combined: gc.values()[i] }
        })
        .collect();
    write_csv(&dir.join("demo_marcinkiewicz.csv"), &rows)?;
    let (mu_err, nu_err) = (rel_l2(&mu, &gs), rel_l2(&nu, &gc));

    let checks = vec![
        check("diag12.reconstruction", reconstruction, 1e-10),
        check("diag12.ratio_spread", ratio_spread, 20.0),
        check("poisson.sup", sup_error, 1e-6),
        check("poisson.norm", norm_error, 1e-5),
        check("marcinkiewicz.mu", mu_err, 1e-4),
        check("marcinkiewicz.nu", nu_err, 1e-4),
    ];
    for c in &checks {
        println!("{} {}: {:.3e} (tolerance {:.0e})", if c.pass { "PASS" } else { "FAIL" }, c.check, c.value, c.tolerance);
    }
    let passed = checks.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Body {
        checks: Vec<Check>,
    }
    write_summary(dir, "demo", e, passed, Body { checks })?;
    Ok(passed)
}
