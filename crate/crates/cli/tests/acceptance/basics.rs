use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake_core::forcing::*;
use wake_core::kernels::*;
use wake_core::oseen_bounds::*;
use wake_core::quadrature::Adaptive;
use wake_core::rigid_motion::*;

use crate::{Checks, Outcome};

fn random_vec(rng: &mut ChaCha8Rng, a: f64) -> [f64; 3] {
    [rng.gen_range(-a..a), rng.gen_range(-a..a), rng.gen_range(-a..a)]
}

fn random_spec(rng: &mut ChaCha8Rng) -> RigidMotionSpec {
    let l = rng.gen_range(0.5..3.0);
    let mut series = |n: usize| FourierSeries3 {
        cos: (0..n).map(|_| random_vec(rng, 1.5)).collect(),
        sin: (0..n).map(|_| random_vec(rng, 1.5)).collect(),
    };
    let omega = series(3);
    let eta = series(2);
    RigidMotionSpec::new(l, eta, omega).unwrap()
}

pub fn evolution_matrices() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut orth, mut cocycle, mut period, mut rodrigues) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let (r, a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let (s, t) = (r + a, r + a + b);
        let ts = evolution_matrix(&spec, t, s).unwrap();
        let sr = evolution_matrix(&spec, s, r).unwrap();
        let tr = evolution_matrix(&spec, t, r).unwrap();
        let shifted = evolution_matrix(&spec, t + spec.period(), s + spec.period()).unwrap();
        orth = orth.max(ts.orthogonality_defect()).max((ts.det() - 1.0).abs());
        cocycle = cocycle.max((ts.matrix * sr.matrix - tr.matrix).norm());
        period = period.max((shifted.matrix - ts.matrix).norm());

        let w = Vector3::from(random_vec(&mut rng, 3.0));
        let steady = RigidMotionSpec::steady(Vector3::zeros(), w, spec.period()).unwrap();
        let phi = evolution_matrix(&steady, t, s).unwrap().matrix;
        let exact = Rotation3::from_scaled_axis(-w * (t - s));
        rodrigues = rodrigues.max((phi - exact.matrix()).norm());
    }
    let mut c = Checks::default();
    c.add(format!("orthogonality/det {orth:.1e} ≤ 1e-10"), orth <= 1e-10);
    c.add(format!("cocycle {cocycle:.1e} ≤ 1e-8"), cocycle <= 1e-8);
    c.add(format!("periodicity {period:.1e} ≤ 1e-8"), period <= 1e-8);
    c.add(format!("Rodrigues {rodrigues:.1e} ≤ 1e-8"), rodrigues <= 1e-8);
    c.outcome()
}

pub fn wake_condition() -> Outcome {
    let l = 1.0;
    let families = [
        (
            "ω = 0",
            RigidMotionSpec::new(
                l,
                FourierSeries3::harmonic(Vector3::new(0.2, 0.0, 1.0), 1, Vector3::new(0.5, 0.0, 0.0), Vector3::new(0.0, 0.3, 0.0)),
                FourierSeries3::zero(),
            )
            .unwrap(),
            Vector3::x(),
        ),
        (
            "common axis",
            RigidMotionSpec::new(
                l,
                FourierSeries3::harmonic(Vector3::z(), 1, Vector3::z() * 0.3, Vector3::zeros()),
                FourierSeries3::harmonic(Vector3::z() * 2.0, 1, Vector3::zeros(), Vector3::z()),
            )
            .unwrap(),
            Vector3::z(),
        ),
        (
            "zero-mean ω ∥ ζ",
            RigidMotionSpec::new(
                l,
                FourierSeries3::harmonic(Vector3::z(), 1, Vector3::zeros(), Vector3::new(0.8, 0.0, 0.0)),
                FourierSeries3::harmonic(Vector3::zeros(), 1, Vector3::zeros(), Vector3::new(0.0, 0.0, 3.0)),
            )
            .unwrap(),
            Vector3::x(),
        ),
    ];
    let mut c = Checks::default();
    let delta = 0.5;
    for (name, spec, e) in families {
        let (zeta, _) = candidate_zeta(&spec).unwrap();
        let short = wake_constant(&spec, &zeta, 8.0 * l).unwrap();
        let long = wake_constant(&spec, &zeta, 16.0 * l).unwrap();
        let stable = long.admissible() && long.m_estimate <= 1.05 * short.m_estimate + 1e-12;
        c.add(format!("{name}: M {:.3} → {:.3}", short.m_estimate, long.m_estimate), stable);
        let shifted = zeta + e * delta;
        let a = wake_constant(&spec, &shifted, 8.0 * l).unwrap();
        let b = wake_constant(&spec, &shifted, 16.0 * l).unwrap();
        let growth = b.m_estimate - a.m_estimate;
        let expect = delta * 8.0 * l;
        c.add(format!("{name}: perturbed growth {growth:.3} vs {expect:.3}"), (growth - expect).abs() <= 0.1 * expect);
    }
    c.outcome()
}

fn stokes_by_quadrature(x: &Vector3<f64>, t: f64) -> Matrix3<f64> {
    let r2 = x.norm_squared();
    let heat = (4.0 * PI * t).powf(-1.5) * (-r2 / (4.0 * t)).exp();
    let quad = Adaptive::new(1e-12, 1e-300).with_max_segments(4000);
    let mut out = Matrix3::identity() * heat;
    for i in 0..3 {
        for j in i..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            let f = |s: f64| (4.0 * PI * s).powf(-1.5) * (-r2 / (4.0 * s)).exp() * (x[i] * x[j] / (4.0 * s * s) - d / (2.0 * s));
            let v = quad.integrate_to_infinity(f, t, t.max(r2), &[]).unwrap().value;
            out[(i, j)] += v;
            if i != j {
                out[(j, i)] += v;
            }
        }
    }
    out
}

pub fn kernel_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let point = |rng: &mut ChaCha8Rng| {
        let dir = Vector3::from(random_vec(rng, 1.0)).normalize();
        (dir * 10f64.powf(rng.gen_range(-2.0..1.5)), 10f64.powf(rng.gen_range(-2.0..2.0)))
    };
    let mut closed = 0.0f64;
    for _ in 0..100 {
        let (x, t) = point(&mut rng);
        let q = stokes_by_quadrature(&x, t);
        closed = closed.max((stokes_matrix(&x, t) - q).norm() / q.norm());
    }
    let mut origin = 0.0f64;
    for t in [1e-3, 0.5, 40.0] {
        let expect = (2.0 / 3.0) * (4.0 * PI * t).powf(-1.5);
        origin = origin.max((stokes_matrix(&Vector3::zeros(), t) - Matrix3::identity() * expect).norm() / expect);
    }
    let quad = Adaptive::new(1e-10, 1e-300).with_max_segments(4000);
    let mut stokeslet = 0.0f64;
    for x in [Vector3::<f64>::new(1.0, 0.0, 0.0), Vector3::new(0.3, -0.4, 1.2), Vector3::new(-2.0, 1.0, 0.5)] {
        let r = x.norm();
        let exact = (Matrix3::identity() / r + x * x.transpose() / r.powi(3)) / (8.0 * PI);
        let integral = Matrix3::from_fn(|i, j| {
            quad.integrate_to_infinity(|t: f64| stokes_matrix(&x, t)[(i, j)], 0.0, r * r, &[]).unwrap().value
        });
        stokeslet = stokeslet.max((integral - exact).norm() / exact.norm());
    }
    let mut div = 0.0f64;
    for _ in 0..200 {
        let (x, t) = point(&mut rng);
        let g = grad_stokes_fundamental(&x, t).unwrap();
        div = div.max(g.column_divergence().norm() / g.norm());
    }
    let mut c = Checks::default();
    c.add(format!("closed form vs quadrature {closed:.1e} ≤ 1e-6"), closed <= 1e-6);
    c.add(format!("x = 0 value {origin:.1e} ≤ 1e-10"), origin <= 1e-10);
    c.add(format!("Stokeslet identity {stokeslet:.1e} ≤ 1e-6"), stokeslet <= 1e-6);
    c.add(format!("column divergence {div:.1e} ≤ 1e-8"), div <= 1e-8);
    for j in 0..2 {
        let coarse = verify_kernel_decay(j, &DecayGrid::log_spaced(40)).unwrap();
        let fine = verify_kernel_decay(j, &DecayGrid::log_spaced(80)).unwrap();
        let change = (fine - coarse).abs() / fine;
        c.add(format!("decay ratio j={j} {fine:.4} (Δ {change:.1e} < 5%)"), fine.is_finite() && change < 0.05);
    }
    c.outcome()
}

pub fn potential_bounds() -> Outcome {
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    for alpha in [1.75, 2.0, 3.0, 4.5] {
        for s in [1e-2, 1.0, 1e2] {
            worst = worst.max((int_y_identity(alpha, s).unwrap() - 1.0).abs());
        }
    }
    let c2 = int_y_constant(2.0).unwrap();
    c.add(format!("int-y0 ratio 1 ± {worst:.1e}"), worst <= 1e-6);
    c.add(format!("C₂ = π² ({:.1e})", (c2 - PI * PI).abs()), (c2 - PI * PI).abs() <= 1e-12);
    let mut inv_sq = 0.0f64;
    for x in [Vector3::new(0.3, 0.0, 0.0), Vector3::new(1.0, -2.0, 2.0), Vector3::new(0.0, 50.0, 0.0)] {
        inv_sq = inv_sq.max((oseen_time_integral(&x, &Vector3::zeros()).unwrap() * x.norm_squared() - 1.0).abs());
    }
    c.add(format!("ζ = 0 time integral |x|⁻² ({inv_sq:.1e})"), inv_sq <= 1e-8);
    let zeta = Vector3::z();
    let samples = random_deuring_samples(1, 100_000, &zeta, 1.0);
    let deu = check_deu_ineq(&samples, &zeta, 1.0).unwrap();
    c.add(format!("deu-ineq {} violations / {}", deu.violations, samples.len()), deu.violations == 0);
    let deu2 = check_deu2(&zeta, 1.0, 24).unwrap();
    c.add(format!("deu2 sup {:.3} (Δ {:.1e})", deu2.fitted_constant, deu2.doubling_change), deu2.pass);
    for (z, n) in [(Vector3::zeros(), 4), (zeta, 6)] {
        let a = check_auxi1(&z, n).unwrap();
        c.add(format!("auxi1 |ζ|={} sup {:.3} (Δ {:.1e})", z.norm(), a.fitted_constant, a.doubling_change), a.pass);
    }
    let g = RadialBump { radius: 1.0, height: 1.0 };
    let a2 = check_auxi2(&g, 2.0, &zeta, 3).unwrap();
    c.add(format!("auxi2 sup {:.3} (Δ {:.1e})", a2.fitted_constant, a2.doubling_change), a2.pass);
    c.outcome()
}

fn moving_spec() -> RigidMotionSpec {
    let eta = FourierSeries3::harmonic(Vector3::new(0.3, 0.0, 1.0), 1, Vector3::new(0.0, 0.4, 0.0), Vector3::new(0.5, 0.0, -0.2));
    let omega = FourierSeries3::harmonic(Vector3::new(0.0, 0.2, 0.7), 1, Vector3::new(0.6, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.9));
    RigidMotionSpec::new(1.3, eta, omega).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::from(random_vec(rng, 1.0)).normalize() * rng.gen_range(lo..hi)
}

fn divergence<M: Fn(&Vector3<f64>) -> Matrix3<f64>>(m: M, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let e = Vector3::ith(j, h);
        let d = (m(&(x - e * 2.0)) - m(&(x + e * 2.0)) + (m(&(x + e)) - m(&(x - e))) * 8.0) / (12.0 * h);
        out += d.column(j);
    }
    out
}

fn sup_norms(spec: &RigidMotionSpec) -> [f64; 3] {
    let mut out = [0.0f64; 3];
    for k in 0..=120 {
        let r = 2.2 * k as f64 / 120.0;
        for dir in [Vector3::x(), Vector3::y(), Vector3::new(0.6, 0.0, 0.8)] {
            for it in 0..8 {
                let t = it as f64 / 8.0 * spec.period();
                let s = lift_field(spec, &(dir * r), t);
                out[0] = out[0].max(s.b.norm());
                out[1] = out[1].max(s.dt.norm());
                out[2] = out[2].max(lift_force_density(spec, &(dir * r), t).norm());
            }
        }
    }
    out
}

pub fn forcing_suite() -> Outcome {
    let spec = moving_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut inside, mut outside, mut div) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let t = rng.gen_range(0.0..2.0);
        let x = random_point(&mut rng, 0.0, 1.0);
        let rigid = spec.eta(t) + spec.omega(t).cross(&x);
        inside = inside.max((lift_field(&spec, &x, t).b - rigid).norm() / rigid.norm().max(1.0));
        outside = outside.max(lift_field(&spec, &random_point(&mut rng, 2.0, 6.0), t).b.norm());
        let y = random_point(&mut rng, 1.0, 2.0);
        let h = 2.5e-4;
        let b = |z: Vector3<f64>| lift_field(&spec, &z, t).b;
        let trace: f64 = (0..3)
            .map(|j| {
                let e = Vector3::ith(j, h);
                ((b(y - e * 2.0) - b(y + e * 2.0) + (b(y + e) - b(y - e)) * 8.0) / (12.0 * h))[j]
            })
            .sum();
        div = div.max(trace.abs() / lift_field(&spec, &y, t).grad.norm().max(1e-3));
    }
    let mut force = 0.0f64;
    for _ in 0..6 {
        let t = rng.gen_range(0.0..1.3);
        let x = random_point(&mut rng, 1.05, 1.95);
        let s = assemble_forcing(&spec, &x, t).unwrap();
        let d = divergence(|y| assemble_forcing(&spec, y, t).unwrap().big_f, &x, 2e-3);
        force = force.max((d - s.f).norm() / s.f.norm());
    }
    let family = |eps: f64| {
        let eta = FourierSeries3::harmonic(Vector3::new(eps, 0.0, 0.0), 1, Vector3::new(0.0, eps, 0.0), Vector3::zeros());
        let omega = FourierSeries3::harmonic(Vector3::zeros(), 1, Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0 * eps));
        RigidMotionSpec::new(1.0, eta, omega).unwrap()
    };
    let ratios: Vec<[f64; 3]> = [1e-5, 1e-4, 1e-3, 1e-2].iter().map(|a| sup_norms(&family(*a)).map(|v| v / a)).collect();
    let spread = (0..3)
        .map(|k| {
            let lo = ratios.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
            ratios.iter().map(|r| r[k]).fold(0.0, f64::max) / lo - 1.0
        })
        .fold(0.0, f64::max);
    let bump = Bump::default();
    let mut shell = 0.0f64;
    for x in [Vector3::new(2.5, 0.0, 0.0), Vector3::new(1.0, -2.0, 2.0), Vector3::new(0.0, 0.0, 7.0)] {
        let (g, _) = newtonian_potential_gradient_scalar(&|y: &Vector3<f64>| bump.value(y.norm()), 2.0, &[1.0], &x, &PotentialRule::default()).unwrap();
        let exact = x * (bump.total_mass() / (4.0 * PI * x.norm().powi(3)));
        shell = shell.max((g - exact).norm() / exact.norm());
    }
    let mut c = Checks::default();
    c.add(format!("b = η+ω×x on B₁ ({inside:.1e})"), inside <= 1e-10);
    c.add(format!("b = 0 outside B₂ ({outside:.1e})"), outside == 0.0);
    c.add(format!("div b {div:.1e} ≤ 1e-6"), div <= 1e-6);
    c.add(format!("f = div F {force:.1e} ≤ 1e-5"), force <= 1e-5);
    c.add(format!("amplitude scaling spread {spread:.1e} ≤ 1%"), spread <= 0.01);
    c.add(format!("shell theorem {shell:.1e} ≤ 1e-6"), shell <= 1e-6);
    c.outcome()
}
