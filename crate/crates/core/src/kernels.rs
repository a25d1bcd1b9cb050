//! Time-dependent Stokes fundamental solution
//! `E(x,t) = (4πt)^{−3/2}e^{−|x|²/4t} I + ∫_t^∞ (4πs)^{−3/2} ∇²e^{−|x|²/4s} ds`
//! and the non-autonomous kernel `K(x,y;t,s) = Φ(t,s) E(Φ(t,s)ᵀ(x + d) − y, t − s)`.
//!
//! The time tail is the Hessian of `Ψ(x,t) = erf(|x|/2√t)/(4π|x|)`. Writing
//! `c = 1/(2√t)`, `u = c²|x|²` and `P(u) = erf(√u)/√u`, every derivative of `Ψ`
//! is expressed through `P⁽ⁿ⁾(u) = (2/√π)(−1)ⁿ Iₙ(u)`, `Iₙ(u) = ∫₀¹ τ²ⁿ e^{−uτ²} dτ`,
//! which stays well conditioned at `x = 0`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::error::{Result, WakeError};
use crate::rigid_motion::{evolution_matrix, wake_drift, RigidMotionSpec, RotationPath};

/// `(2/3)(4π)^{−3/2}`: the value of `|E(0,t)| t^{3/2}`.
pub const ORIGIN_RATIO: f64 = 0.014_965_593_510_430_546;

/// Threshold in `u = |x|²/4t` between the power series and the upward recurrence.
const SERIES_LIMIT: f64 = 2.0;

/// `[I₀(u), …, I₄(u)]`.
fn moment_integrals(u: f64) -> [f64; 5] {
    if u < SERIES_LIMIT {
        series_integrals(u)
    } else {
        recurrence_integrals(u)
    }
}

/// `Iₙ(u) = Σ_k (−u)^k / (k! (2n + 2k + 1))`.
fn series_integrals(u: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let mut term = 1.0;
    let mut k = 0usize;
    loop {
        for (n, o) in out.iter_mut().enumerate() {
            *o += term / (2 * n + 2 * k + 1) as f64;
        }
        k += 1;
        term *= -u / k as f64;
        if term.abs() < 1e-18 {
            break;
        }
    }
    out
}

/// Upward recurrence `Iₙ = ((2n − 1) Iₙ₋₁ − e^{−u}) / 2u` from the error function.
fn recurrence_integrals(u: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let su = u.sqrt();
    let eu = (-u).exp();
    out[0] = 0.5 * PI.sqrt() * erf(su) / su;
    for n in 1..5 {
        out[n] = ((2 * n - 1) as f64 * out[n - 1] - eu) / (2.0 * u);
    }
    out
}

/// Radial profile `E = α I + β x xᵀ` and its `u`-derivatives.
#[derive(Debug, Clone, Copy)]
struct Profile {
    c2: f64,
    alpha: [f64; 3],
    beta: [f64; 3],
}

fn profile(r2: f64, t: f64) -> Profile {
    let c2 = 0.25 / t;
    let c = c2.sqrt();
    let c3 = c2 * c;
    let c5 = c3 * c2;
    let u = c2 * r2;
    let i = moment_integrals(u);
    let k = 2.0 / PI.sqrt();
    // P^{(n)} = k (−1)^n I_n
    let p1 = -k * i[1];
    let p2 = k * i[2];
    let p3 = -k * i[3];
    let p4 = k * i[4];
    let heat = (-u).exp() / PI.powf(1.5);
    Profile {
        c2,
        alpha: [
            c3 * (heat + p1 / (2.0 * PI)),
            c3 * (-heat + p2 / (2.0 * PI)),
            c3 * (heat + p3 / (2.0 * PI)),
        ],
        beta: [c5 * p2 / PI, c5 * p3 / PI, c5 * p4 / PI],
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(WakeError::NonFinite("kernel time"));
    }
    if t <= 0.0 {
        return Err(WakeError::InvalidArgument(format!("Stokes kernel needs t > 0 (got {t})")));
    }
    Ok(())
}

/// `E(x, t)` without argument checks; `t > 0` is assumed.
#[inline]
pub fn stokes_matrix(x: &Vector3<f64>, t: f64) -> Matrix3<f64> {
    let p = profile(x.norm_squared(), t);
    Matrix3::identity() * p.alpha[0] + x * x.transpose() * p.beta[0]
}

/// `∂_k E_ij(x, t)` as `[∂₁E, ∂₂E, ∂₃E]`; `t > 0` is assumed.
#[inline]
pub fn stokes_gradient(x: &Vector3<f64>, t: f64) -> [Matrix3<f64>; 3] {
    let p = profile(x.norm_squared(), t);
    gradient_from_profile(&p, x)
}

fn gradient_from_profile(p: &Profile, x: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (a1, b0, b1) = (p.alpha[1], p.beta[0], p.beta[1]);
    let xx = x * x.transpose();
    let mut out = [Matrix3::zeros(); 3];
    for (k, o) in out.iter_mut().enumerate() {
        let ek = Vector3::ith(k, 1.0);
        *o = Matrix3::identity() * (2.0 * p.c2 * a1 * x[k])
            + xx * (2.0 * p.c2 * b1 * x[k])
            + (ek * x.transpose() + x * ek.transpose()) * b0;
    }
    out
}

/// `E` and `∇E` sharing one profile evaluation.
#[inline]
pub fn stokes_matrix_and_gradient(x: &Vector3<f64>, t: f64) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let p = profile(x.norm_squared(), t);
    let e = Matrix3::identity() * p.alpha[0] + x * x.transpose() * p.beta[0];
    (e, gradient_from_profile(&p, x))
}

/// `∂_l ∂_k E_ij(x, t)` indexed `[k][l]`; `t > 0` is assumed.
pub fn stokes_hessian(x: &Vector3<f64>, t: f64) -> [[Matrix3<f64>; 3]; 3] {
    let p = profile(x.norm_squared(), t);
    let c2 = p.c2;
    let (a1, a2) = (p.alpha[1], p.alpha[2]);
    let (b0, b1, b2) = (p.beta[0], p.beta[1], p.beta[2]);
    let xx = x * x.transpose();
    let id = Matrix3::identity();
    let mut out = [[Matrix3::zeros(); 3]; 3];
    for k in 0..3 {
        let ek = Vector3::ith(k, 1.0);
        for l in 0..3 {
            let el = Vector3::ith(l, 1.0);
            let dkl = if k == l { 1.0 } else { 0.0 };
            let mut m = id * (2.0 * c2 * a1 * dkl + 4.0 * c2 * c2 * a2 * x[k] * x[l]);
            m += xx * (2.0 * c2 * b1 * dkl + 4.0 * c2 * c2 * b2 * x[k] * x[l]);
            m += (el * x.transpose() + x * el.transpose()) * (2.0 * c2 * b1 * x[k]);
            m += (ek * x.transpose() + x * ek.transpose()) * (2.0 * c2 * b1 * x[l]);
            m += (ek * el.transpose() + el * ek.transpose()) * b0;
            out[k][l] = m;
        }
    }
    out
}

/// `E(x, t)` together with its evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesKernelValue {
    pub matrix: Matrix3<f64>,
    pub x: Vector3<f64>,
    pub t: f64,
}

impl StokesKernelValue {
    /// Spectral norm (largest eigenvalue modulus).
    pub fn norm(&self) -> f64 {
        operator_norm(&self.matrix)
    }
}

/// Largest eigenvalue modulus of a symmetric matrix.
pub fn operator_norm(m: &Matrix3<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// `∂_k E_ij`, stored as `components[k][(i, j)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesGradient {
    pub components: [Matrix3<f64>; 3],
    pub x: Vector3<f64>,
    pub t: f64,
}

impl StokesGradient {
    /// Frobenius norm of the rank-3 array.
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.components[k][(i, j)]
    }

    /// `Σ_i ∂_i E_ij` for each `j`.
    pub fn column_divergence(&self) -> Vector3<f64> {
        Vector3::from_fn(|j, _| (0..3).map(|i| self.components[i][(i, j)]).sum())
    }
}

pub fn stokes_fundamental(x: &Vector3<f64>, t: f64) -> Result<StokesKernelValue> {
    check_time(t)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(WakeError::NonFinite("kernel point"));
    }
    Ok(StokesKernelValue {
        matrix: stokes_matrix(x, t),
        x: *x,
        t,
    })
}

pub fn grad_stokes_fundamental(x: &Vector3<f64>, t: f64) -> Result<StokesGradient> {
    check_time(t)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(WakeError::NonFinite("kernel point"));
    }
    Ok(StokesGradient {
        components: stokes_gradient(x, t),
        x: *x,
        t,
    })
}

/// `K(x, y; t, s)` and the drift `∫_s^t Φ(t,τ)η(τ)dτ` it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonautonomousKernelValue {
    pub matrix: Matrix3<f64>,
    pub phi: Matrix3<f64>,
    pub drift: Vector3<f64>,
    pub x: Vector3<f64>,
    pub y: Vector3<f64>,
    pub t: f64,
    pub s: f64,
}

fn assemble_k(
    phi: Matrix3<f64>,
    drift: Vector3<f64>,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    t: f64,
    s: f64,
) -> NonautonomousKernelValue {
    let q = phi.transpose() * (x + drift) - y;
    NonautonomousKernelValue {
        matrix: phi * stokes_matrix(&q, t - s),
        phi,
        drift,
        x: *x,
        y: *y,
        t,
        s,
    }
}

fn check_kernel_times(t: f64, s: f64) -> Result<()> {
    if !t.is_finite() || !s.is_finite() {
        return Err(WakeError::NonFinite("kernel time"));
    }
    if t <= s {
        return Err(WakeError::InvalidArgument(format!("kernel needs t > s (got t = {t}, s = {s})")));
    }
    Ok(())
}

/// `K(x, y; t, s)` from a direct solve of `Φ(t, s)` and the drift quadrature.
#[allow(non_snake_case)]
pub fn kernel_K(
    spec: &RigidMotionSpec,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    t: f64,
    s: f64,
) -> Result<NonautonomousKernelValue> {
    check_kernel_times(t, s)?;
    let phi = evolution_matrix(spec, t, s)?.matrix;
    let drift = wake_drift(spec, s, t, &Vector3::zeros())?;
    Ok(assemble_k(phi, drift, x, y, t, s))
}

/// [`kernel_K`] reading `Φ(t, s)` and the drift from a precomputed path.
#[allow(non_snake_case)]
pub fn kernel_K_cached(
    path: &RotationPath,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    t: f64,
    s: f64,
) -> Result<NonautonomousKernelValue> {
    check_kernel_times(t, s)?;
    let (phi, drift) = path.evolution_and_drift(t, s);
    Ok(assemble_k(phi, drift, x, y, t, s))
}

/// Sample grid for the kernel decay ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayGrid {
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
}

impl DecayGrid {
    /// `|x| ∈ {0} ∪ [10⁻³, 10²]` and `t ∈ [10⁻⁴, 10⁴]`, both log-spaced with
    /// `n` points, along three fixed directions.
    pub fn log_spaced(n: usize) -> Self {
        let n = n.max(2);
        let logspace = |a: f64, b: f64| -> Vec<f64> {
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        };
        let mut radii = vec![0.0];
        radii.extend(logspace(-3.0, 2.0));
        let s3 = 1.0 / 3f64.sqrt();
        Self {
            radii,
            times: logspace(-4.0, 4.0),
            directions: vec![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [s3, -s3, s3]],
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.times.len() * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `sup |∇ʲE(x,t)| (|x|² + t)^{(3+j)/2}` over the grid (`j ∈ {0, 1}`).
pub fn verify_kernel_decay(order: usize, grid: &DecayGrid) -> Result<f64> {
    if order > 1 {
        return Err(WakeError::InvalidArgument(format!("decay order must be 0 or 1 (got {order})")));
    }
    if grid.is_empty() {
        return Err(WakeError::InvalidArgument("empty decay grid".into()));
    }
    if grid.times.iter().any(|&t| t <= 0.0 || !t.is_finite()) {
        return Err(WakeError::InvalidArgument("decay grid times must be positive".into()));
    }
    let mut sup = 0.0f64;
    for d in &grid.directions {
        let dir = Vector3::new(d[0], d[1], d[2]).normalize();
        for &r in &grid.radii {
            let x = dir * r;
            for &t in &grid.times {
                let w = (r * r + t).powf((3 + order) as f64 / 2.0);
                let v = if order == 0 {
                    operator_norm(&stokes_matrix(&x, t))
                } else {
                    stokes_gradient(&x, t).iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
                };
                sup = sup.max(v * w);
            }
        }
    }
    Ok(sup)
}

/// Grid sups used as the empirical constants `C₀`, `C₁` of the kernel decay
/// estimate (with a 5% safety margin).
pub fn empirical_decay_constant(order: usize) -> f64 {
    1.05 * verify_kernel_decay(order, &DecayGrid::log_spaced(64)).expect("valid grid")
}
