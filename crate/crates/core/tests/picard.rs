use std::sync::OnceLock;

use nalgebra::Vector3;
use wake_core::duhamel::QuadratureSpec;
use wake_core::forcing::*;
use wake_core::picard::*;
use wake_core::rigid_motion::RigidMotionSpec;
use wake_core::weights::GridSpec;
use wake_core::WakeError;

fn oseen() -> RigidMotionSpec {
    RigidMotionSpec::steady(Vector3::z(), Vector3::zeros(), 1.0).unwrap()
}

fn monopole() -> SyntheticForcing {
    SyntheticForcing::new(
        1.0,
        Bump::default(),
        vec![ForcingTerm {
            amplitude: 1.0,
            spatial: Spatial::Monopole { direction: [0.0, 0.0, 1.0] },
            temporal: Temporal::steady(),
        }],
    )
    .unwrap()
}

fn small_grid() -> GridSpec {
    GridSpec { r_max: 16.0, r_min: 0.25, shells: 20, directions: 14, times: 1 }
}

fn problem() -> &'static PicardProblem {
    static P: OnceLock<PicardProblem> = OnceLock::new();
    P.get_or_init(|| {
        PicardProblem::new(&oseen(), &Vector3::z(), &monopole(), &small_grid(), &QuadratureSpec::default()).unwrap()
    })
}

#[test]
fn zero_forcing_gives_the_zero_solution() {
    let state = problem().solve(0.0, &PicardOptions::default()).unwrap();
    assert_eq!(state.stop, StopReason::ZeroForcing);
    assert!(state.converged);
    assert_eq!(state.norm(), 0.0);
    assert!(state.solution().values().iter().all(|v| *v == Vector3::zeros()));
}

#[test]
fn contraction_factor_grows_with_the_amplitude() {
    let opts = PicardOptions::default();
    let qs: Vec<f64> = [0.025, 0.05, 0.1]
        .iter()
        .map(|&a| {
            let s = problem().solve(a, &opts).unwrap();
            assert!(s.converged, "amplitude {a}: {:?}", s.stop);
            s.contraction().unwrap()
        })
        .collect();
    assert!(qs.iter().all(|&q| q < 1.0), "{qs:?}");
    assert!(qs.windows(2).all(|w| w[0] < w[1]), "{qs:?}");
}

#[test]
fn converged_residual_is_within_twice_the_tolerance() {
    let opts = PicardOptions { tol: 1e-8, max_iter: 60 };
    let s = problem().solve(0.1, &opts).unwrap();
    assert_eq!(s.stop, StopReason::Converged);
    assert!(s.residual <= 2.0 * opts.tol, "residual {}", s.residual);
}

#[test]
fn solution_norm_sits_at_the_predicted_ball_radius() {
    let s = problem().solve(0.1, &PicardOptions::default()).unwrap();
    let ratio = s.ball_ratio.unwrap();
    assert!((1.0 / 1.1..=1.1).contains(&ratio), "ratio {ratio}");
}

#[test]
fn nonlinear_correction_is_quadratic_in_the_amplitude() {
    let opts = PicardOptions { tol: 1e-10, max_iter: 60 };
    let correction = |a: f64| {
        let s = problem().solve(a, &opts).unwrap();
        s.solution().axpy(-1.0, &s.linear).unwrap().weighted_norm() / (a * a)
    };
    let (c1, c2) = (correction(1e-2), correction(2e-2));
    assert!(c1 > 0.0);
    assert!((c2 / c1 - 1.0).abs() < 0.1, "{c1} vs {c2}");
}

#[test]
fn small_data_solution_is_linear_response() {
    let opts = PicardOptions::default();
    let (a, b) = (problem().solve(1e-3, &opts).unwrap(), problem().solve(5e-4, &opts).unwrap());
    assert!((a.norm() / b.norm() - 2.0).abs() < 0.1);
    assert!((a.norm() / a.linear_norm - 1.0).abs() < 0.01);
}

#[test]
fn observed_contraction_is_bounded_by_the_lipschitz_estimate() {
    let s = problem().solve(0.1, &PicardOptions::default()).unwrap();
    let q = s.contraction().unwrap();
    assert!(q <= s.lipschitz * 1.05, "q {q} lipschitz {}", s.lipschitz);
    assert!(s.lipschitz <= 3.0 * q, "q {q} lipschitz {}", s.lipschitz);
}

#[test]
fn invalid_iteration_options_are_rejected() {
    let bad = PicardOptions { tol: 0.0, max_iter: 10 };
    assert!(matches!(problem().solve(0.1, &bad), Err(WakeError::InvalidArgument(_))));
    let bad = PicardOptions { tol: 1e-6, max_iter: 0 };
    assert!(matches!(problem().solve(0.1, &bad), Err(WakeError::InvalidArgument(_))));
    assert!(problem().solve(f64::NAN, &PicardOptions::default()).is_err());
}

#[test]
fn rotation_off_the_wake_axis_is_inadmissible() {
    let spec = RigidMotionSpec::steady(Vector3::z(), Vector3::x(), 1.0).unwrap();
    let err = PicardProblem::new(&spec, &Vector3::z(), &monopole(), &small_grid(), &QuadratureSpec::default());
    assert!(matches!(err, Err(WakeError::Inadmissible(_))), "{err:?}");
}

#[test]
fn forcing_period_must_match_the_motion() {
    let f = SyntheticForcing::new(2.0, Bump::default(), monopole().terms.clone()).unwrap();
    let err = PicardProblem::new(&oseen(), &Vector3::z(), &f, &small_grid(), &QuadratureSpec::default());
    assert!(matches!(err, Err(WakeError::InvalidArgument(_))), "{err:?}");
}

#[test]
fn decay_fit_needs_enough_shells_inside_the_grid() {
    let s = problem().solve(0.1, &PicardOptions::default()).unwrap();
    let rays = standard_rays(&Vector3::z());
    assert!(decay_fit(s.solution(), &rays, 8.0, 9.0).is_err());
    assert!(decay_fit(s.solution(), &rays, 0.5, 16.0).is_err());
    assert!(decay_fit(s.solution(), &rays, 4.0, 32.0).is_err());
    let fits = decay_fit(s.solution(), &rays, 2.0, 16.0).unwrap();
    assert_eq!(fits.len(), 3);
    assert!(fits.iter().all(|f| f.shells >= MIN_FIT_SHELLS && f.slope.is_finite()));
}

#[test]
fn oseen_wake_decays_slower_than_upstream() {
    let s = problem().solve(0.1, &PicardOptions::default()).unwrap();
    let fits = decay_fit(s.solution(), &standard_rays(&Vector3::z()), 2.0, 16.0).unwrap();
    let slope = |label: &str| fits.iter().find(|f| f.label == label).unwrap().slope;
    assert!(slope("wake") > slope("upstream") + 0.5, "{fits:?}");
    assert!(slope("wake") > slope("perpendicular") + 0.5, "{fits:?}");
}
