use std::sync::Arc;

use aniso_lp::fields::{random_test_function, GridSpec, Weight};
use aniso_lp::kernels::{ball_averaging_kernel, AveragingKernel};
use aniso_lp::sobolev::{diag12_derivative_check, equivalence_study, BetaSpec, Family, StudyParams, TheoremTag};
use aniso_lp::weights::power_weight;
use aniso_lp::DilationGroup;

fn small_family(group: Arc<DilationGroup>) -> Family {
    let grid = GridSpec::cube(2, 4.0, 32).unwrap();
    let mut family = Family::new(group, grid.clone(), 11);
    family.seeds.truncate(4);
    family
}

#[test]
fn exported_kernel_reproduces_a_study() {
    let group = Arc::new(DilationGroup::parabolic());
    let kernel = ball_averaging_kernel(&group);
    let dir = tempfile::tempdir().unwrap();
    let (fld, json) = (dir.path().join("ball.fld"), dir.path().join("ball.json"));
    kernel.export(&fld, &json).unwrap();
    let imported = AveragingKernel::import(&fld, &json).unwrap();

    let family = small_family(group);
    let run = |k: AveragingKernel| {
        let mut params = StudyParams::new(1.0, 1, Arc::new(k));
        params.p = vec![1.5, 3.0];
        params.beta = vec![BetaSpec::Fixed(0.0), BetaSpec::Fixed(0.6)];
        params.skip_refinement = true;
        equivalence_study(TheoremTag::T1_2, &family, &params).unwrap()
    };
    let (a, b) = (run(kernel), run(imported));
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        for (r, s) in x.ratios().iter().zip(y.ratios()) {
            assert!((r / s - 1.0).abs() < 1e-12, "{r} vs {s}");
        }
    }
}

#[test]
fn derivative_identity_holds_under_power_weights() {
    let group = Arc::new(DilationGroup::parabolic());
    let grid = GridSpec::cube(2, 4.0, 32).unwrap();
    let f = random_test_function(5, &group, &grid, 0.125).unwrap();
    let unweighted = diag12_derivative_check(&f, &group, 2.0, &Weight::constant()).unwrap();
    for beta in [-1.0, 0.9, 2.0] {
        let w = power_weight(group.clone(), beta, 0.05).unwrap();
        let c = diag12_derivative_check(&f, &group, 2.0, &w).unwrap();
        assert!(c.reconstruction_error < 1e-10);
        assert_eq!(c.reconstruction_error, unweighted.reconstruction_error);
        assert!(c.norm_ratio.is_finite() && c.norm_ratio > 0.0);
    }
}
