
use cyfam::family::*;
use cyfam::fiber::{self, Index};
use cyfam::linalg::{c, CMat};
use cyfam::ma::SolverOptions;
use cyfam::torus::preset;
use cyfam::Complex64;

fn closed(name: &str, points: usize) -> AdmissibleForm {
    let fam = preset(name).unwrap().family;
    let st = SParameterStencil::new(c(0.0, 0.0), 1e-2).unwrap();
    build_admissible(&fam, &st, &BuildOptions::closed_form(points)).unwrap()
}

fn fiber_only_psi() -> PsiSpec {
    PsiSpec {
        modes: vec![
            PsiMode { k: vec![1, 0], amplitude: 0.02, phase: 0.0, s_coeff: [0.0, 0.0] },
            PsiMode { k: vec![1, 2], amplitude: 0.005, phase: 0.4, s_coeff: [0.0, 0.0] },
        ],
    }
}

fn perturbed(psi: PsiSpec) -> AdmissibleForm {
    let fam = preset("elliptic").unwrap().family;
    let st = SParameterStencil::new(c(0.0, 0.0), 1e-2).unwrap();
    let opts = BuildOptions {
        points: 32,
        mode: Mode::Perturbed { psi, solve: true },
        solver: SolverOptions { tol: 1e-12, ..Default::default() },
    };
    build_admissible(&fam, &st, &opts).unwrap()
}

#[test]
fn stencil_derivatives_are_fourth_order() {
    // f(s) = exp(s) + |s|^2 s: D_s f = exp(s) + 2|s|^2, D_s D_sbar f = 2 s
    let s0 = c(0.3, -0.2);
    let f = |s: Complex64| s.exp() + s.norm_sqr() * s;
    let errs: Vec<(f64, f64)> = [0.1, 0.05]
        .iter()
        .map(|&h| {
            let st = SParameterStencil::new(s0, h).unwrap();
            let vals: Vec<Complex64> = st.points().into_iter().map(f).collect();
            let (d, _) = st.d_s_scalar(&vals);
            let (dd, _) = st.d_s_dsbar_scalar(&vals);
            ((d - (s0.exp() + 2.0 * s0.norm_sqr())).norm(), (dd - 2.0 * s0).norm())
        })
        .collect();
    assert!(errs[1].0 < 1e-7 && (errs[0].0 / errs[1].0).log2() > 3.5, "{errs:?}");
    assert!(errs[1].1 < 1e-12);
}

#[test]
fn stencil_outside_domain_is_rejected() {
    let fam = preset("elliptic").unwrap().family;
    let st = SParameterStencil::new(c(0.0, 0.0), 5.0).unwrap();
    assert!(matches!(
        build_admissible(&fam, &st, &BuildOptions::closed_form(16)),
        Err(cyfam::Error::OutsideDomain { .. })
    ));
    assert!(SParameterStencil::new(c(0.0, 0.0), 0.0).is_err());
}

#[test]
fn elliptic_closed_form_components() {
    let w = closed("elliptic", 16);
    let g = w.grid().clone();
    let gs = w.mixed_coordinate();
    let lift = w.horizontal_lift();
    for k in 0..g.node_count() {
        let y = g.coords(k)[1];
        assert!((gs.components()[0][k] - c(-0.5 * y, 0.0)).norm() < 1e-15);
        assert!((lift.components()[0][k] - c(y, 0.0)).norm() < 1e-15);
    }
    let a = w.kodaira_spencer();
    assert_eq!(a.variance(), &[Index::UpHolo, Index::DownAnti]);
    let oracle = w.family().ks_closed_form(c(0.0, 0.0)).unwrap();
    assert!((oracle[(0, 0)] - c(0.0, 0.5)).norm() < 1e-15);
    assert!(max_dev_from_constant(&a, &oracle) < 1e-13);
    assert!(w.phi().unwrap().max_abs() < 1e-14);
}

#[test]
fn constant_family_is_trivial() {
    let w = closed("constant", 16);
    assert_eq!(w.mixed_coordinate().max_abs(), 0.0);
    assert_eq!(w.ss_coordinate().max_abs(), 0.0);
    assert_eq!(w.horizontal_lift().max_abs(), 0.0);
    assert_eq!(w.kodaira_spencer().max_abs(), 0.0);
    assert_eq!(w.phi().unwrap().max_abs(), 0.0);
}

#[test]
fn siegel_closed_form_components() {
    let w = closed("siegel-e", 8);
    let e = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.5), c(0.0, 0.5), c(0.0, 0.0)]);
    assert!(max_dev_from_constant(&w.kodaira_spencer(), &e) < 1e-13);
    assert!(w.perpendicularity_residual() <= 1e-10);
    assert!(w.determinant_identity_residual().unwrap() <= 1e-10);
    assert!(w.phi().unwrap().max_abs() < 1e-13);
    assert!(w.closedness_residual() <= 1e-7, "{}", w.closedness_residual());
}

#[test]
fn closed_forms_satisfy_admissibility() {
    for name in ["elliptic", "elliptic2i", "constant", "product"] {
        let w = closed(name, 16);
        assert!(w.restriction_residual() <= 1e-9, "{name}");
        assert!(w.closedness_residual() <= 1e-7, "{name}: {}", w.closedness_residual());
        assert!(w.hermitian_residual() <= 1e-12, "{name}");
        assert!(w.determinant_identity_residual().unwrap() <= 1e-10, "{name}");
    }
}

#[test]
fn normalization_is_identity_on_closed_forms() {
    let w = closed("elliptic", 16);
    let nw = normalize_admissible(&w).unwrap();
    assert_eq!(nw.ss_frame().max_abs_diff(w.ss_frame()).unwrap(), 0.0);
}

#[test]
fn pollution_is_removed_exactly() {
    let w = closed("elliptic", 16);
    let polluted = pollute(&w, 0.1);
    let phi = polluted.phi().unwrap();
    assert!(phi.values().unwrap().iter().all(|z| (z - 0.1).norm() < 1e-14));
    let nw = normalize_admissible(&polluted).unwrap();
    let h = fiber::integrate(&nw.phi().unwrap(), nw.center_metric()).unwrap();
    assert!(h.norm() <= 1e-10);
    assert!(nw.ss_frame().max_abs_diff(w.ss_frame()).unwrap() <= 1e-10);
    let twice = normalize_admissible(&nw).unwrap();
    assert!(twice.ss_frame().max_abs_diff(nw.ss_frame()).unwrap() <= 1e-15);
}

#[test]
fn perturbed_fiber_potential_reproduces_closed_form() {
    let w = perturbed(fiber_only_psi());
    assert_eq!(w.provenance(), Provenance::SolverCorrected);
    let reference = closed("elliptic", 32);
    assert!(w.restriction_residual() <= 1e-9);
    let diff = w.kodaira_spencer().max_abs_diff(&reference.kodaira_spencer()).unwrap();
    assert!(diff <= 1e-8, "KS difference {diff:e}");
    assert!(w.closedness_residual() <= 1e-7);
    assert!(w.perpendicularity_residual() <= 1e-10);
    assert!(w.determinant_identity_residual().unwrap() <= 1e-10);
}

#[test]
fn s_dependent_mean_is_a_pullback_removed_by_normalization() {
    // psi with an s-dependent zero mode leaves i d dbar of a base function behind
    let mut psi = fiber_only_psi();
    psi.modes.push(PsiMode { k: vec![0, 0], amplitude: 0.3, phase: 0.0, s_coeff: [0.0, 0.0] });
    psi.modes[0].s_coeff = [0.5, 0.2];
    let w = perturbed(psi);
    let nw = normalize_admissible(&w).unwrap();
    let h = fiber::integrate(&nw.phi().unwrap(), nw.center_metric()).unwrap();
    assert!(h.norm() <= 1e-9, "{h}");
    assert!(nw.phi().unwrap().max_abs() <= 1e-7);
}

#[test]
fn uncorrected_potential_breaks_restriction() {
    let fam = preset("elliptic").unwrap().family;
    let st = SParameterStencil::new(c(0.0, 0.0), 1e-2).unwrap();
    let psi = PsiSpec { modes: vec![PsiMode { k: vec![1, 0], amplitude: 1e-3, phase: 0.0, s_coeff: [1.0, 0.0] }] };
    let opts = BuildOptions { points: 16, mode: Mode::Perturbed { psi, solve: false }, solver: SolverOptions::default() };
    let w = build_admissible(&fam, &st, &opts).unwrap();
    assert_eq!(w.provenance(), Provenance::Uncorrected);
    // Hess of 1e-3 cos(2 pi x) on the square torus has amplitude 1e-3 pi^2
    assert!((w.restriction_residual() - 1e-3 * std::f64::consts::PI.powi(2)).abs() < 1e-4);
    assert!(w.closedness_residual() <= 1e-7);
}

#[test]
fn unresolved_psi_is_a_config_error() {
    let fam = preset("elliptic").unwrap().family;
    let st = SParameterStencil::new(c(0.0, 0.0), 1e-2).unwrap();
    let psi = PsiSpec { modes: vec![PsiMode { k: vec![7, 0], amplitude: 1e-3, phase: 0.0, s_coeff: [0.0, 0.0] }] };
    let opts = BuildOptions { points: 16, mode: Mode::Perturbed { psi, solve: true }, solver: SolverOptions::default() };
    assert!(matches!(build_admissible(&fam, &st, &opts), Err(cyfam::Error::Config(_))));
}

#[test]
fn manifest_and_grids_are_written() {
    let w = closed("elliptic", 8);
    let dir = tempfile::tempdir().unwrap();
    w.write_dir(dir.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"], "closed-form");
    assert_eq!(manifest["stencil_points"].as_array().unwrap().len(), 9);
    for f in ["g_fiber.csv", "g_s_frame.csv", "g_ss_frame.csv", "phi_ss.csv"] {
        assert!(dir.path().join(f).exists());
    }
}
