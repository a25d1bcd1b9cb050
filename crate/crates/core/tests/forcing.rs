use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake_core::forcing::*;
use wake_core::rigid_motion::{FourierSeries3, RigidMotionSpec};

fn moving_spec() -> RigidMotionSpec {
    let eta = FourierSeries3::harmonic(Vector3::new(0.3, 0.0, 1.0), 1, Vector3::new(0.0, 0.4, 0.0), Vector3::new(0.5, 0.0, -0.2));
    let omega = FourierSeries3::harmonic(Vector3::new(0.0, 0.2, 0.7), 1, Vector3::new(0.6, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.9));
    RigidMotionSpec::new(1.3, eta, omega).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z) * rng.gen_range(lo..hi)
}

/// Fourth-order central divergence `∂_j M(x)_{ij}`.
fn divergence<M: Fn(&Vector3<f64>) -> Matrix3<f64>>(m: M, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let e = Vector3::ith(j, h);
        let d = (m(&(x - e * 2.0)) - m(&(x + e * 2.0)) + (m(&(x + e)) - m(&(x - e))) * 8.0) / (12.0 * h);
        out += d.column(j);
    }
    out
}

#[test]
fn lift_is_the_rigid_motion_inside_and_vanishes_outside() {
    let spec = moving_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let t = rng.gen_range(0.0..2.0);
        let x = random_point(&mut rng, 0.0, 1.0);
        let rigid = spec.eta(t) + spec.omega(t).cross(&x);
        assert!((lift_field(&spec, &x, t).b - rigid).norm() <= 1e-10 * rigid.norm().max(1.0));
        let y = random_point(&mut rng, 2.0, 6.0);
        let s = lift_field(&spec, &y, t);
        assert_eq!(s.b, Vector3::zeros());
        assert_eq!(lift_force_density(&spec, &y, t), Vector3::zeros());
    }
}

#[test]
fn lift_is_divergence_free_and_derivatives_match() {
    let spec = moving_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 2.5e-4;
    let mut worst_div = 0.0f64;
    for _ in 0..1000 {
        let t = rng.gen_range(0.0..1.3);
        let x = random_point(&mut rng, 1.0, 2.0);
        let s = lift_field(&spec, &x, t);
        let mut fd = Matrix3::zeros();
        for j in 0..3 {
            let e = Vector3::ith(j, h);
            let b = |y: Vector3<f64>| lift_field(&spec, &y, t).b;
            let col = (b(x - e * 2.0) - b(x + e * 2.0) + (b(x + e) - b(x - e)) * 8.0) / (12.0 * h);
            fd.set_column(j, &col);
        }
        let scale = s.grad.norm().max(1e-3);
        assert!((fd - s.grad).norm() <= 1e-5 * scale, "gradient mismatch at {x:?}: {:e} vs {scale:e}", (fd - s.grad).norm());
        worst_div = worst_div.max(fd.trace().abs() / scale);
        assert!(s.grad.trace().abs() <= 1e-12 * scale);
        // Laplacian as divergence of the gradient
        let lap = divergence(|y| lift_field(&spec, y, t).grad, &x, 2.5e-4);
        assert!((lap - s.laplacian).norm() <= 1e-5 * s.laplacian.norm().max(1.0), "laplacian at {x:?}: {:e}", (lap - s.laplacian).norm());
        let ht = 1e-5;
        let dt = (lift_field(&spec, &x, t + ht).b - lift_field(&spec, &x, t - ht).b) / (2.0 * ht);
        assert!((dt - s.dt).norm() <= 1e-6 * s.dt.norm().max(1.0));
    }
    assert!(worst_div <= 1e-6, "worst relative divergence {worst_div}");
}

#[test]
fn force_is_divergence_of_stress() {
    let spec = moving_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let t = rng.gen_range(0.0..1.3);
        let x = random_point(&mut rng, 1.05, 1.95);
        let sample = assemble_forcing(&spec, &x, t).unwrap();
        let div = divergence(|y| assemble_forcing(&spec, y, t).unwrap().big_f, &x, 2e-3);
        let rel = (div - sample.f).norm() / sample.f.norm();
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-5, "worst relative |div F − f| = {worst:e}");
}

#[test]
fn rest_gives_no_forcing() {
    let spec = RigidMotionSpec::at_rest(1.0).unwrap();
    let s = assemble_forcing(&spec, &Vector3::new(0.4, 1.2, -0.3), 0.2).unwrap();
    assert_eq!(s.f, Vector3::zeros());
    assert_eq!(s.big_f, Matrix3::zeros());
}

fn sup_norms(spec: &RigidMotionSpec) -> [f64; 3] {
    let mut out = [0.0f64; 3];
    for k in 0..=200 {
        let r = 2.2 * k as f64 / 200.0;
        for dir in [Vector3::x(), Vector3::y(), Vector3::new(0.6, 0.0, 0.8), Vector3::new(-0.3, 0.9, 0.316_227_766)] {
            let x = dir.normalize() * r;
            for it in 0..8 {
                let t = it as f64 / 8.0 * spec.period();
                let s = lift_field(spec, &x, t);
                out[0] = out[0].max(s.b.norm());
                out[1] = out[1].max(s.dt.norm());
                out[2] = out[2].max(lift_force_density(spec, &x, t).norm());
            }
        }
    }
    out
}

#[test]
fn sup_norms_scale_linearly() {
    let base = |eps: f64| {
        let eta = FourierSeries3::harmonic(Vector3::new(eps, 0.0, 0.0), 1, Vector3::new(0.0, eps, 0.0), Vector3::zeros());
        let omega = FourierSeries3::harmonic(Vector3::zeros(), 1, Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0 * eps));
        RigidMotionSpec::new(1.0, eta, omega).unwrap()
    };
    let amps = [1e-5, 1e-4, 1e-3, 1e-2];
    let ratios: Vec<[f64; 3]> = amps.iter().map(|a| sup_norms(&base(*a)).map(|v| v / a)).collect();
    for k in 0..3 {
        let lo = ratios.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().map(|r| r[k]).fold(0.0, f64::max);
        assert!(hi / lo - 1.0 <= 0.01, "norm {k}: ratios {ratios:?}");
    }
    // steady translation: sup|f| ≤ C ε with one C
    let c: Vec<f64> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|e| {
            let spec = RigidMotionSpec::steady(Vector3::new(*e, 0.0, 0.0), Vector3::zeros(), 1.0).unwrap();
            sup_norms(&spec)[2] / e
        })
        .collect();
    assert!(c.iter().all(|v| *v <= 1.2 * c[0]), "{c:?}");
}

#[test]
fn shell_theorem() {
    let bump = Bump::default();
    let h = |y: &Vector3<f64>| bump.value(y.norm());
    let q = bump.total_mass();
    for x in [Vector3::new(2.5, 0.0, 0.0), Vector3::new(1.0, -2.0, 2.0), Vector3::new(0.0, 0.0, 7.0)] {
        let (g, err) = newtonian_potential_gradient_scalar(&h, 2.0, &[1.0], &x, &PotentialRule::default()).unwrap();
        let exact = x * (q / (4.0 * PI * x.norm().powi(3)));
        assert!((g - exact).norm() <= 1e-6 * exact.norm(), "{g:?} vs {exact:?} (err {err:e})");
    }
}

#[test]
fn potential_is_linear_and_vanishes_for_zero_profile() {
    let rule = PotentialRule::default();
    let zero = |_: &Vector3<f64>| Vector3::zeros();
    let x = Vector3::new(0.3, 0.5, -0.7);
    let g = newtonian_potential_gradient(&zero, 2.0, &[1.0], &x, &rule).unwrap();
    assert_eq!(g.value, Matrix3::zeros());
    let a = |y: &Vector3<f64>| Vector3::new(1.0, y.x, 0.0) * Cutoff::value(y.norm());
    let b = |y: &Vector3<f64>| Vector3::new(y.z, 0.0, 2.0) * Cutoff::value(y.norm());
    let sum = |y: &Vector3<f64>| a(y) * 2.0 - b(y) * 0.5;
    let ga = newtonian_potential_gradient(&a, 2.0, &[1.0], &x, &rule).unwrap().value;
    let gb = newtonian_potential_gradient(&b, 2.0, &[1.0], &x, &rule).unwrap().value;
    let gs = newtonian_potential_gradient(&sum, 2.0, &[1.0], &x, &rule).unwrap().value;
    assert!((gs - (ga * 2.0 - gb * 0.5)).norm() <= 1e-12 * gs.norm());
}

#[test]
fn radial_monopole_potential_matches_quadrature() {
    let forcing = SyntheticForcing::steady_force(1.0, Vector3::new(0.0, 0.6, 0.8), 1.0).unwrap();
    let e = Vector3::new(0.0, 0.6, 0.8);
    let h = |y: &Vector3<f64>| e * Cutoff::value(y.norm());
    for x in [Vector3::new(0.2, 0.1, 0.0), Vector3::new(1.3, -0.4, 0.2), Vector3::new(0.0, 2.0, 3.0)] {
        let q = newtonian_potential_gradient(&h, 2.0, &[1.0], &x, &PotentialRule::default()).unwrap();
        let closed = forcing.potential(&x, 0.0);
        assert!((q.value - closed).norm() <= 1e-7 * closed.norm(), "{x:?}");
    }
}

#[test]
fn synthetic_forcing_is_divergence_of_its_potential() {
    let forcing = SyntheticForcing::new(
        1.0,
        Bump::default(),
        vec![
            ForcingTerm {
                amplitude: 0.7,
                spatial: Spatial::Curl { axis: [0.0, 0.0, 1.0] },
                temporal: Temporal::raised_cosine(),
            },
            ForcingTerm {
                amplitude: -0.4,
                spatial: Spatial::Monopole { direction: [1.0, 0.0, 0.5] },
                temporal: Temporal { mean: 0.0, cos: vec![0.0], sin: vec![1.0] },
            },
            ForcingTerm {
                amplitude: 0.3,
                spatial: Spatial::Dipole { tensor: [[1.0, 0.2, 0.0], [0.0, -0.5, 0.3], [0.4, 0.0, 0.1]] },
                temporal: Temporal::steady(),
            },
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let t = rng.gen_range(0.0..1.0);
        let x = random_point(&mut rng, 0.05, 3.0);
        let div = divergence(|y| forcing.potential(y, t), &x, 1e-3);
        let g = forcing.value(&x, t);
        assert!((div - g).norm() <= 1e-6 * (1.0 + g.norm()), "{x:?}: {div:?} vs {g:?}");
    }
}

#[test]
fn default_profile_contract_and_scaling() {
    let g = SyntheticForcing::default_profile(1.0, 2.0).unwrap();
    let report = check_contract(&g, 2000, 9);
    assert!(report.pass, "{report:?}");
    // divergence-free by construction
    let x = Vector3::new(0.9, 0.8, 0.6);
    let h = 1e-4;
    let div: f64 = (0..3)
        .map(|j| {
            let e = Vector3::ith(j, h);
            (g.value(&(x + e), 0.3)[j] - g.value(&(x - e), 0.3)[j]) / (2.0 * h)
        })
        .sum();
    assert!(div.abs() <= 1e-6);
    let base = g.potential_sup();
    for a in [1e-3, 1e-1, 10.0] {
        assert!((g.scaled(a).potential_sup() / (a * base) - 1.0).abs() <= 1e-12);
    }
    let lift = LiftForcing { spec: moving_spec() };
    assert!(check_contract(&lift, 2000, 10).pass);
}

#[test]
fn oversized_support_is_rejected() {
    assert!(SyntheticForcing::new(1.0, Bump { radius: 2.5 }, vec![]).is_err());
}

#[test]
fn shifted_forcing_is_delayed() {
    let g = SyntheticForcing::default_profile(1.0, 2.0).unwrap();
    let s = g.shifted(0.5);
    let x = Vector3::new(1.1, 0.3, 0.2);
    for t in [0.0, 0.4, 1.7] {
        assert!((s.value(&x, t) - g.value(&x, t - 0.5)).norm() <= 1e-14);
    }
}
