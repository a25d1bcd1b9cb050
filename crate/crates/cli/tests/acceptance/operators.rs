use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use wake_core::duhamel::*;
use wake_core::forcing::*;
use wake_core::quadrature::{gauss_legendre, SphereRule};
use wake_core::rigid_motion::*;

use crate::{Checks, Outcome};

fn term(amplitude: f64, spatial: Spatial, temporal: Temporal) -> ForcingTerm {
    ForcingTerm { amplitude, spatial, temporal }
}

fn zero_mean() -> RigidMotionSpec {
    let eta = FourierSeries3::harmonic(Vector3::z(), 1, Vector3::zeros(), Vector3::new(0.8, 0.0, 0.0));
    let omega = FourierSeries3::harmonic(Vector3::zeros(), 1, Vector3::zeros(), Vector3::new(0.0, 0.0, 3.0));
    RigidMotionSpec::new(1.0, eta, omega).unwrap()
}

fn mixed_forcing() -> SyntheticForcing {
    SyntheticForcing::new(
        1.0,
        Bump::default(),
        vec![
            term(0.7, Spatial::Monopole { direction: [1.0, 0.0, 0.5] }, Temporal::raised_cosine()),
            term(1.3, Spatial::Curl { axis: [0.0, 0.0, 1.0] }, Temporal::steady()),
            term(
                -0.4,
                Spatial::Dipole { tensor: [[0.0, 1.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.2, -1.0]] },
                Temporal { mean: 0.2, cos: vec![0.5], sin: vec![0.0, -0.3] },
            ),
        ],
    )
    .unwrap()
}

fn probes() -> [Vector3<f64>; 3] {
    [Vector3::new(0.5, 0.2, 0.1), Vector3::new(3.0, 0.5, -1.0), Vector3::new(4.0, -3.0, -9.0)]
}

fn rel(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn breaks(b: &Bump) -> Vec<f64> {
    let mut br = vec![0.0];
    br.extend(b.breaks());
    br.push(b.radius);
    br.sort_by(f64::total_cmp);
    br.dedup();
    br
}

/// `∫ U(x − y) g(y) dy` with the steady Stokeslet `U`.
fn stokeslet_potential(g: &SyntheticForcing, x: &Vector3<f64>) -> Vector3<f64> {
    let sphere = SphereRule::product(24, 48, &Vector3::z());
    let (gx, gw) = gauss_legendre(20);
    let mut out = Vector3::zeros();
    for w in breaks(&g.bump).windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (u, wu) in gx.iter().zip(&gw) {
            let rho = mid + half * u;
            for (d, wd) in sphere.points.iter().zip(&sphere.weights) {
                let z = x - d * rho;
                let r = z.norm();
                let u_mat = (Matrix3::identity() / r + z * z.transpose() / r.powi(3)) / (8.0 * PI);
                out += u_mat * g.value(&(d * rho), 0.0) * (wu * half * rho * rho * 4.0 * PI * wd);
            }
        }
    }
    out
}

pub fn duhamel_suite() -> Outcome {
    let quad = QuadratureSpec::default();
    let mut c = Checks::default();

    let spec = zero_mean();
    let (zeta, _) = candidate_zeta(&spec).unwrap();
    let path = RotationPath::new(&spec);
    let f = mixed_forcing();
    let single = |k: usize| SyntheticForcing::new(1.0, f.bump, vec![f.terms[k].clone()]).unwrap();
    let (a, b) = (3.7, -0.25);
    let mut combo = f.scaled(a);
    combo.terms.extend(single(2).scaled(b).terms);
    let s_combo = SyntheticDuhamel::new(&path, &combo, &zeta, &quad).unwrap();
    let singles: Vec<_> = (0..3).map(single).collect();
    let parts: Vec<_> = singles.iter().map(|g| SyntheticDuhamel::new(&path, g, &zeta, &quad).unwrap()).collect();
    let mut lin = 0.0f64;
    for x in probes() {
        for t in [0.0, 0.77] {
            let total = s_combo.point(&x, t).unwrap().value;
            let sum: Vector3<f64> = (0..3).map(|k| parts[k].point(&x, t).unwrap().value * if k == 2 { a + b } else { a }).sum();
            lin = lin.max(rel(&total, &sum));
        }
    }
    c.add(format!("linearity {lin:.1e} ≤ 1e-10"), lin <= 1e-10);

    let rest = RigidMotionSpec::at_rest(1.0).unwrap();
    let rest_path = RotationPath::new(&rest);
    let steady = SyntheticForcing::new(
        1.0,
        Bump::default(),
        vec![
            term(1.0, Spatial::Monopole { direction: [0.3, -1.0, 0.6] }, Temporal::steady()),
            term(0.8, Spatial::Curl { axis: [1.0, 0.0, 0.0] }, Temporal::steady()),
        ],
    )
    .unwrap();
    let s_rest = SyntheticDuhamel::new(&rest_path, &steady, &Vector3::zeros(), &quad).unwrap();
    let mut stokes = 0.0f64;
    for x in [Vector3::new(4.0, 0.0, 0.0), Vector3::new(0.0, 6.0, -8.0), Vector3::new(20.0, 10.0, 5.0)] {
        stokes = stokes.max(rel(&s_rest.point(&x, 0.0).unwrap().value, &stokeslet_potential(&steady, &x)));
    }
    c.add(format!("steady Stokeslet {stokes:.1e} ≤ 1e-3"), stokes <= 1e-3);

    let compact = SyntheticForcing::new(
        1.0,
        Bump::default(),
        vec![
            term(1.0, Spatial::Curl { axis: [0.0, 0.6, 0.8] }, Temporal::steady()),
            term(0.5, Spatial::Dipole { tensor: [[1.0, 0.2, 0.0], [0.0, 0.5, -0.7], [0.3, 0.0, -1.5]] }, Temporal::steady()),
        ],
    )
    .unwrap();
    let oseen = RigidMotionSpec::steady(Vector3::z(), Vector3::zeros(), 1.0).unwrap();
    let mut lam = 0.0f64;
    for (spec, z) in [(rest.clone(), Vector3::zeros()), (oseen, Vector3::z())] {
        let p = RotationPath::new(&spec);
        let s = SyntheticDuhamel::new(&p, &compact, &z, &quad).unwrap();
        for x in [Vector3::new(4.0, 0.0, 0.0), Vector3::new(3.0, 3.0, 6.0)] {
            let l = lambda_compact_point(&p, |y, t| compact.potential(y, t), &breaks(&compact.bump), &x, 0.0, 0.0, None, &quad, &VolumeRule::default());
            lam = lam.max(rel(&l.value, &-s.point(&x, 0.0).unwrap().value));
        }
    }
    c.add(format!("Λ(G) = S(−div G) {lam:.1e} ≤ 1e-3"), lam <= 1e-3);

    let spin = RigidMotionSpec::steady(Vector3::z(), Vector3::z() * (2.0 * PI), 1.0).unwrap();
    let spin_path = RotationPath::new(&spin);
    let s = SyntheticDuhamel::new(&spin_path, &f, &Vector3::z(), &quad).unwrap();
    let shifted = f.shifted(0.5);
    let s_shift = SyntheticDuhamel::new(&spin_path, &shifted, &Vector3::z(), &quad).unwrap();
    let mut shift_ok = true;
    let mut shift_dev = 0.0f64;
    for x in probes() {
        for t in [0.1, 0.65] {
            let (p, q) = (s_shift.point(&x, t).unwrap(), s.point(&x, t - 0.5).unwrap());
            let d = (p.value - q.value).norm();
            shift_dev = shift_dev.max(d);
            shift_ok &= d <= p.error + q.error + 1e-13 * q.value.norm();
        }
    }
    c.add(format!("time shift {shift_dev:.1e} within the error estimate"), shift_ok);

    let fine = SyntheticDuhamel::new(&path, &f, &zeta, &quad.refined()).unwrap();
    let coarse = SyntheticDuhamel::new(&path, &f, &zeta, &quad).unwrap();
    let mut worst = 0.0f64;
    for x in probes() {
        for t in [0.0, 0.4] {
            let (p, q) = (coarse.point(&x, t).unwrap(), fine.point(&x, t).unwrap());
            worst = worst.max((p.value - q.value).norm() / (3.0 * p.error));
        }
    }
    c.add(format!("refinement change / (3 × error) = {worst:.2}"), worst <= 1.0);
    c.outcome()
}
