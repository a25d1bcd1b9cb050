//! Periodic Duhamel operators: `S` (forcing → velocity) and `Λ` (stress
//! tensor → velocity), built from the Stokes kernel transported by the rigid
//! motion, `K(x,y;t,s) g = E(x + d − Φy, t−s) Φ g` with `Φ = Φ(t,s)` and
//! `d = ∫_s^t Φ(t,τ)η(τ)dτ`.
//!
//! `S` of a synthetic forcing is semi-analytic: the spatial convolution of
//! `E` with the radial bump reduces to one-dimensional radial integrals, and
//! only the time integral is done numerically. `Λ` acts on grid tensors
//! through a precomputed, time-integrated source-sum matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use libm::erf;
use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WakeError};
use crate::forcing::{Bump, SyntheticForcing, Temporal};
use crate::kernels::{operator_norm, stokes_gradient, stokes_matrix_and_gradient};
use crate::quadrature::{gauss_legendre, AdaptiveVec, SphereRule};
use crate::rigid_motion::RotationPath;
use crate::weights::{weight, FieldGrid, TensorField, WeightedField};

/// Radial functions of the heat-smoothed bump `F = Γ_σ ∗ χ` and of its
/// Newtonian potential `Q` (`ΔQ = F`), all even in `r` and finite at 0:
/// `f1 = F′/r`, `q1 = Q′/r`, `q2 = q1′/r`, `q3 = q2′/r`.
///
/// With them `E_σ ∗ χ = (F − q1) I − q2 x xᵀ` and
/// `∂_k(E_σ ∗ χ)_{ij} = f1 x_k δ_ij − q2 (δ_ij x_k + δ_ik x_j + δ_jk x_i) − q3 x_i x_j x_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RadialMoments {
    pub f: f64,
    pub f1: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Gauss–Legendre nodes per radial piece.
const RADIAL_NODES: usize = 16;
/// Half-width of the Gaussian window in units of `√σ`.
const WINDOW: f64 = 11.0;

struct RadialRules {
    x: Vec<f64>,
    w: Vec<f64>,
    small_x: Vec<f64>,
    small_w: Vec<f64>,
}

fn rules() -> &'static RadialRules {
    static RULES: std::sync::OnceLock<RadialRules> = std::sync::OnceLock::new();
    RULES.get_or_init(|| {
        let (x, w) = gauss_legendre(RADIAL_NODES);
        let (sx, sw) = gauss_legendre(12);
        // map the small-argument rule to [0, 1]
        let small_x = sx.iter().map(|t| 0.5 * (t + 1.0)).collect();
        let small_w = sw.iter().map(|w| 0.5 * w).collect();
        RadialRules { x, w, small_x, small_w }
    })
}

/// `e^{−(r²+ρ²)/4σ} · [S(z), T(z), U(z)]` at `z = rρ/2σ`, where
/// `S = sinh z / z`, `T = (z cosh z − sinh z)/z³`,
/// `U = (z² sinh z − 3z cosh z + 3 sinh z)/z⁵`.
#[inline]
fn shell_factors(r: f64, rho: f64, sigma: f64) -> [f64; 3] {
    let z = r * rho / (2.0 * sigma);
    if z < 2.0 {
        let e0 = (-(r * r + rho * rho) / (4.0 * sigma)).exp();
        if e0 == 0.0 {
            return [0.0; 3];
        }
        let z2 = z * z;
        // Σ z^{2k}/(2k+1)!, Σ 2(k+1) z^{2k}/(2k+3)!, Σ 4(k+2)(k+1) z^{2k}/(2k+5)!
        let (mut s, mut t, mut u) = (0.0, 0.0, 0.0);
        let mut term = 1.0; // z^{2k}/(2k+1)!
        for k in 0..18 {
            let kf = k as f64;
            s += term;
            let t_term = term * 2.0 * (kf + 1.0) / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
            t += t_term;
            let u_term = term * 4.0 * (kf + 2.0) * (kf + 1.0) / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0) * (2.0 * kf + 4.0) * (2.0 * kf + 5.0));
            u += u_term;
            term *= z2 / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
            if term < 1e-18 * s {
                break;
            }
        }
        [e0 * s, e0 * t, e0 * u]
    } else {
        let a = (-(r - rho).powi(2) / (4.0 * sigma)).exp();
        let b = (-(r + rho).powi(2) / (4.0 * sigma)).exp();
        let sh = 0.5 * (a - b);
        let ch = 0.5 * (a + b);
        let z2 = z * z;
        [
            sh / z,
            (z * ch - sh) / (z2 * z),
            (z2 * sh - 3.0 * z * ch + 3.0 * sh) / (z2 * z2 * z),
        ]
    }
}

/// Probability that a Gaussian step of variance `2σ` per axis started at
/// distance `ρ` from the origin ends inside `B_r`.
#[inline]
fn ball_probability(rho: f64, r: f64, sigma: f64) -> f64 {
    let s = sigma.sqrt();
    let erfs = 0.5 * (erf((r + rho) / (2.0 * s)) + erf((r - rho) / (2.0 * s)));
    // √(σ/π)/ρ · (e^{−(r−ρ)²/4σ} − e^{−(r+ρ)²/4σ}) = (r/√(πσ)) e0 S(z)
    let [e0s, ..] = shell_factors(r, rho, sigma);
    (erfs - r / (PI * sigma).sqrt() * e0s).clamp(0.0, 1.0)
}

/// Piece boundaries for radial integrals over `[0, R]` of integrands peaked
/// around `ρ = r` with width `√σ`.
fn radial_pieces(bump: &Bump, r: f64, sigma: f64, out: &mut Vec<f64>) {
    out.clear();
    let big = bump.radius;
    let w = WINDOW * sigma.sqrt();
    let (lo, hi) = ((r - w).max(0.0), (r + w).min(big));
    if lo >= hi {
        return;
    }
    out.push(lo);
    out.push(hi);
    for c in [r - w / 4.0, r, r + w / 4.0] {
        if c > lo && c < hi {
            out.push(c);
        }
    }
    for c in bump.breaks() {
        if c > lo && c < hi {
            out.push(c);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
}

/// `F`, `f1`, `f2 = f1′/r` at one radius.
fn smoothed_profile(bump: &Bump, r: f64, sigma: f64, pieces: &mut Vec<f64>) -> [f64; 3] {
    radial_pieces(bump, r, sigma, pieces);
    let rl = rules();
    let c = (4.0 * PI * sigma).powf(-0.5);
    let (h1, h2) = (0.5 / sigma, 0.25 / (sigma * sigma));
    let mut acc = [0.0; 3];
    for w in pieces.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (x, wt) in rl.x.iter().zip(&rl.w) {
            let rho = mid + half * x;
            let chi = bump.value(rho);
            if chi == 0.0 {
                continue;
            }
            let [es, et, eu] = shell_factors(r, rho, sigma);
            let p = rho * rho;
            let base = chi * c * p / sigma * wt * half;
            let g = p * h1; // ρ²/2σ
            acc[0] += base * es;
            acc[1] += base * h1 * (-es + g * et);
            acc[2] += base * h1 * ((es - g * et) * h1 + p * h2 * (-et + g * eu));
        }
    }
    acc
}

/// `∫_{B_r} F = ∫ χ(ρ) 4πρ² P(ρ; r, σ) dρ`.
fn smoothed_mass(bump: &Bump, r: f64, sigma: f64, pieces: &mut Vec<f64>) -> f64 {
    let big = bump.radius;
    let w = WINDOW * sigma.sqrt();
    pieces.clear();
    pieces.push(0.0);
    pieces.push(big);
    for c in [r - w, r - w / 4.0, r, r + w / 4.0, r + w] {
        if c > 0.0 && c < big {
            pieces.push(c);
        }
    }
    for c in bump.breaks() {
        if c > 0.0 && c < big {
            pieces.push(c);
        }
    }
    pieces.sort_by(f64::total_cmp);
    pieces.dedup();
    let rl = rules();
    let mut acc = 0.0;
    for win in pieces.windows(2) {
        let (a, b) = (win[0], win[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        // fully inside the ball, well away from its surface
        let inside = b <= r - w;
        let outside = a >= r + w;
        if outside {
            continue;
        }
        for (x, wt) in rl.x.iter().zip(&rl.w) {
            let rho = mid + half * x;
            let chi = bump.value(rho);
            if chi == 0.0 {
                continue;
            }
            let p = if inside { 1.0 } else { ball_probability(rho, r, sigma) };
            acc += chi * 4.0 * PI * rho * rho * p * wt * half;
        }
    }
    acc
}

/// Radial functions of `Γ_σ ∗ χ` at radius `r`.
pub fn radial_moments(bump: &Bump, r: f64, sigma: f64) -> RadialMoments {
    let mut pieces = Vec::with_capacity(16);
    let big = bump.radius;
    let s = sigma.sqrt();
    if r > big + WINDOW * s {
        // Point-mass regime: F and f1 vanish, Q is the Newtonian potential of the total mass.
        let m = bump.total_mass();
        let q1 = m / (4.0 * PI * r.powi(3));
        let q2 = -3.0 * q1 / (r * r);
        let q3 = -5.0 * q2 / (r * r);
        return RadialMoments { f: 0.0, f1: 0.0, q1, q2, q3 };
    }
    let small = 0.25 * s.min(1.0);
    if r < small {
        let rl = rules();
        let mut out = RadialMoments::default();
        let at = smoothed_profile(bump, r, sigma, &mut pieces);
        out.f = at[0];
        out.f1 = at[1];
        for (t, w) in rl.small_x.iter().zip(&rl.small_w) {
            let p = smoothed_profile(bump, r * t, sigma, &mut pieces);
            out.q1 += w * p[0] * t * t;
            out.q2 += w * p[1] * t.powi(4);
            out.q3 += w * p[2] * t.powi(6);
        }
        return out;
    }
    let [f, f1, _] = smoothed_profile(bump, r, sigma, &mut pieces);
    let m = smoothed_mass(bump, r, sigma, &mut pieces);
    let q1 = m / (4.0 * PI * r.powi(3));
    let q2 = (f - 3.0 * q1) / (r * r);
    let q3 = (f1 - 5.0 * q2) / (r * r);
    RadialMoments { f, f1, q1, q2, q3 }
}

impl RadialMoments {
    /// `(E_σ ∗ χ)(x)`.
    pub fn matrix(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::identity() * (self.f - self.q1) - x * x.transpose() * self.q2
    }

    /// `Σ_{jk} C_{jk} ∂_k(E_σ ∗ χ)_{ij}(x)`, i.e. `(E_σ ∗ (C∇χ))(x)`.
    pub fn dipole(&self, c: &Matrix3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        let cx = c * x;
        let ctx = c.transpose() * x;
        cx * (self.f1 - self.q2) - ctx * self.q2 - x * (self.q2 * c.trace() + self.q3 * x.dot(&cx))
    }
}

/// Time-quadrature controls shared by `S` and `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Length of the explicitly integrated near range, in periods.
    pub near_periods: f64,
    /// Phases used to average the far range over one period.
    pub phases: usize,
    pub rel_tol: f64,
    /// Absolute tolerance relative to the forcing scale `k_g · |χ|₁`.
    pub abs_tol: f64,
    pub max_segments: usize,
    /// Admissible far-range error relative to the weighted output norm.
    pub tail_tol: f64,
    /// Source blob width in units of the local radial spacing (`Λ` only).
    pub blob_factor: f64,
    /// Near range of the `Λ` matrix, in periods (`Λ` only).
    pub operator_near_periods: f64,
    /// Shells are extrapolated out to `cutoff_factor · R_max` (`Λ` only).
    pub cutoff_factor: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            near_periods: 8.0,
            phases: 16,
            rel_tol: 1e-7,
            abs_tol: 1e-11,
            max_segments: 400,
            tail_tol: 1e-3,
            blob_factor: 1.0,
            operator_near_periods: 2.0,
            cutoff_factor: 2.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.near_periods > 0.0
            && self.near_periods.is_finite()
            && self.phases >= 1
            && self.rel_tol > 0.0
            && self.abs_tol >= 0.0
            && self.max_segments >= 8
            && self.tail_tol > 0.0
            && self.blob_factor > 0.0
            && self.operator_near_periods > 0.0
            && self.cutoff_factor >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(WakeError::InvalidArgument(format!("bad quadrature settings {self:?}")))
        }
    }

    /// Tighter tolerances, twice the phases and a longer near range.
    pub fn refined(&self) -> Self {
        Self {
            near_periods: 2.0 * self.near_periods,
            phases: 2 * self.phases,
            rel_tol: 0.1 * self.rel_tol,
            abs_tol: 0.1 * self.abs_tol,
            max_segments: 2 * self.max_segments,
            ..self.clone()
        }
    }
}

/// A value with its estimated quadrature error and the far-range part of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: Vector3<f64>,
    pub error: f64,
    pub tail_error: f64,
    pub evaluations: usize,
}

/// Output of an operator sampled on a grid.
#[derive(Debug, Clone)]
pub struct OperatorOutput {
    pub field: WeightedField,
    /// Per-node absolute error estimates, total and far-range.
    pub errors: Vec<f64>,
    pub tail_errors: Vec<f64>,
}

impl OperatorOutput {
    /// `sup_x w(x) · error(x)`, comparable with the weighted norm.
    pub fn weighted_error(&self) -> f64 {
        weighted_sup(&self.field, &self.errors)
    }

    pub fn weighted_tail_error(&self) -> f64 {
        weighted_sup(&self.field, &self.tail_errors)
    }
}

fn weighted_sup(field: &WeightedField, values: &[f64]) -> f64 {
    let grid = field.grid();
    let zeta = grid.zeta;
    values
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (_, s, d) = grid.unpack(i);
            e * weight(&grid.position(s, d), &zeta, field.m())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Monopole(Vector3<f64>),
    Dipole(Matrix3<f64>),
}

impl Shape {
    fn transported(&self, phi: &Matrix3<f64>) -> Shape {
        match self {
            Shape::Monopole(e) => Shape::Monopole(phi * e),
            Shape::Dipole(c) => Shape::Dipole(phi * c * phi.transpose()),
        }
    }

    fn apply(&self, m: &RadialMoments, w: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Shape::Monopole(e) => m.matrix(w) * e,
            Shape::Dipole(c) => m.dipole(c, w),
        }
    }

    fn distance(&self, other: &Shape) -> f64 {
        match (self, other) {
            (Shape::Monopole(a), Shape::Monopole(b)) => (a - b).norm(),
            (Shape::Dipole(a), Shape::Dipole(b)) => (a - b).norm(),
            _ => f64::INFINITY,
        }
    }

    fn size(&self) -> f64 {
        match self {
            Shape::Monopole(e) => e.norm(),
            Shape::Dipole(c) => c.norm(),
        }
    }
}

/// `sup_x σ^{3/2}|E(x,σ)|` and `sup_x σ²|∇E(x,σ)|` (scale invariant).
fn kernel_sup_constants() -> (f64, f64) {
    static C: std::sync::OnceLock<(f64, f64)> = std::sync::OnceLock::new();
    *C.get_or_init(|| {
        let (mut c0, mut c1) = (0.0f64, 0.0f64);
        for k in 0..=400 {
            let x = Vector3::new(0.0, 0.0, 1e-3 + 10.0 * k as f64 / 400.0);
            let (e, g) = stokes_matrix_and_gradient(&x, 1.0);
            c0 = c0.max(operator_norm(&e));
            c1 = c1.max(g.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt());
        }
        (1.05 * c0, 1.05 * c1)
    })
}

/// `S` applied to a synthetic forcing; the bump convolution is exact and
/// only the retarded time `σ = t − s` is integrated numerically. Every term
/// is integrated at unit amplitude and then superposed, so the result is
/// linear in the forcing up to rounding.
#[derive(Clone)]
pub struct SyntheticDuhamel<'a> {
    path: &'a RotationPath,
    forcing: &'a SyntheticForcing,
    zeta: Vector3<f64>,
    quad: QuadratureSpec,
    shapes: Vec<(f64, Shape, &'a Temporal)>,
    trivial_monodromy: bool,
    scale: f64,
}

impl<'a> SyntheticDuhamel<'a> {
    pub fn new(
        path: &'a RotationPath,
        forcing: &'a SyntheticForcing,
        zeta: &Vector3<f64>,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        quad.validate()?;
        let l = path.spec().period();
        if (forcing.period - l).abs() > 1e-12 * l {
            return Err(WakeError::InvalidArgument(format!(
                "forcing period {} differs from the motion period {l}",
                forcing.period
            )));
        }
        let shapes = forcing
            .terms
            .iter()
            .filter(|t| t.amplitude != 0.0)
            .map(|t| {
                let shape = match (t.spatial.monopole_direction(), t.spatial.dipole_tensor()) {
                    (Some(e), _) => Shape::Monopole(e),
                    (_, Some(c)) => Shape::Dipole(c),
                    _ => unreachable!("every spatial form is a monopole or a dipole"),
                };
                (t.amplitude, shape, &t.temporal)
            })
            .collect::<Vec<_>>();
        let scale = Self::scale_of(&shapes, &forcing.bump);
        let trivial_monodromy = (path.monodromy() - Matrix3::identity()).norm() < 1e-9;
        Ok(Self {
            path,
            forcing,
            zeta: *zeta,
            quad: quad.clone(),
            shapes,
            trivial_monodromy,
            scale,
        })
    }

    fn scale_of(shapes: &[(f64, Shape, &Temporal)], bump: &Bump) -> f64 {
        shapes.iter().map(|(a, s, tmp)| a.abs() * s.size() * tmp.sup_bound()).sum::<f64>() * bump.total_mass()
    }

    /// The `j`-th term alone at unit amplitude.
    fn single(&self, j: usize) -> Self {
        let (_, shape, temporal) = self.shapes[j];
        let shapes = vec![(1.0, shape, temporal)];
        let scale = Self::scale_of(&shapes, &self.forcing.bump);
        Self { shapes, scale, ..self.clone() }
    }

    fn period(&self) -> f64 {
        self.path.spec().period()
    }

    /// Integrand at retarded time `σ` for a given transport `(Φ, d)`.
    fn integrand(&self, x: &Vector3<f64>, t: f64, sigma: f64, phi: &Matrix3<f64>, d: &Vector3<f64>) -> Vector3<f64> {
        let w = x + d;
        let m = radial_moments(&self.forcing.bump, w.norm(), sigma);
        let l = self.period();
        let mut out = Vector3::zeros();
        for (amp, shape, temporal) in &self.shapes {
            let a = amp * temporal.value(t - sigma, l);
            if a != 0.0 {
                out += shape.transported(phi).apply(&m, &w) * a;
            }
        }
        out
    }

    fn at_sigma(&self, x: &Vector3<f64>, t: f64, sigma: f64) -> Vector3<f64> {
        let (phi, d) = self.path.evolution_and_drift(t, t - sigma);
        self.integrand(x, t, sigma, &phi, &d)
    }

    fn abs_tol(&self, x: &Vector3<f64>) -> f64 {
        self.quad.abs_tol * self.scale / (1.0 + x.norm_squared())
    }

    /// Retarded times where the drifted point passes the support.
    fn passage_breaks(&self, x: &Vector3<f64>, offset: &Vector3<f64>, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let z2 = self.zeta.norm_squared();
        if z2 == 0.0 {
            return;
        }
        let p = x + offset;
        let s_star = -p.dot(&self.zeta) / z2;
        let perp = (p + self.zeta * s_star).norm();
        let width = (perp + self.forcing.bump.radius + s_star.max(0.0).sqrt()) / z2.sqrt();
        for k in [-4.0, -1.0, 0.0, 1.0, 4.0] {
            let b = s_star + k * width;
            if b > lo && b < hi {
                out.push(b);
            }
        }
    }

    /// `∫_0^{T}` of the transported integrand, with `σ = τ²` on the first panel.
    pub fn near_part(&self, x: &Vector3<f64>, t: f64, t_near: f64) -> PointValue {
        let l = self.period();
        let integ = AdaptiveVec::new(self.quad.rel_tol, self.abs_tol(x)).with_max_segments(self.quad.max_segments);
        let s0 = (0.25 * l).min(t_near);
        let first = integ.integrate_with_breaks(
            3,
            |tau, out: &mut [f64]| {
                let v = self.at_sigma(x, t, tau * tau) * (2.0 * tau);
                out.copy_from_slice(v.as_slice());
            },
            &[0.0, 0.5 * s0.sqrt(), s0.sqrt()],
        );
        let rest = self.range_part(x, t, s0, t_near);
        PointValue {
            value: Vector3::from_column_slice(&first.value) + rest.value,
            error: first.error + rest.error,
            tail_error: 0.0,
            evaluations: first.evaluations + rest.evaluations,
        }
    }

    /// `∫_a^b` of the transported integrand, for `0 < a < b`.
    pub fn range_part(&self, x: &Vector3<f64>, t: f64, a: f64, b: f64) -> PointValue {
        let l = self.period();
        let integ = AdaptiveVec::new(self.quad.rel_tol, self.abs_tol(x)).with_max_segments(self.quad.max_segments);
        let mut breaks = vec![a, b];
        let quarter = 0.25 * l;
        let mut k = (a / quarter).floor() + 1.0;
        while k * quarter < b {
            breaks.push(k * quarter);
            k += 1.0;
        }
        self.passage_breaks(x, &Vector3::zeros(), a, b, &mut breaks);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let res = integ.integrate_with_breaks(
            3,
            |sigma, out: &mut [f64]| {
                let v = self.at_sigma(x, t, sigma);
                out.copy_from_slice(v.as_slice());
            },
            &breaks,
        );
        PointValue {
            value: Vector3::from_column_slice(&res.value),
            error: res.error,
            tail_error: 0.0,
            evaluations: res.evaluations,
        }
    }
}

impl SyntheticDuhamel<'_> {
    /// Far range `[T, ∞)`. With trivial monodromy the transport is periodic
    /// in the phase `τ` of `σ − T`, so the range is replaced by its phase
    /// average (plus the Euler–Maclaurin boundary term); otherwise only a
    /// kernel bound is available and it is reported as error.
    pub fn far_part(&self, x: &Vector3<f64>, t: f64, t_near: f64) -> Result<PointValue> {
        let l = self.period();
        if !self.trivial_monodromy {
            let (c0, c1) = kernel_sup_constants();
            let m0 = self.forcing.bump.total_mass();
            let bound: f64 = self
                .shapes
                .iter()
                .map(|(a, s, tmp)| {
                    let amp = a.abs() * tmp.sup_bound() * s.size() * m0;
                    match s {
                        Shape::Monopole(_) => 2.0 * c0 * amp / t_near.sqrt(),
                        Shape::Dipole(_) => c1 * amp / t_near,
                    }
                })
                .sum();
            return Ok(PointValue { value: Vector3::zeros(), error: bound, tail_error: bound, evaluations: 0 });
        }
        let n = self.quad.phases;
        let phase = |tau: f64| {
            let sigma = t_near + tau;
            let (phi, d) = self.path.evolution_and_drift(t, t - sigma);
            let delta = d - self.zeta * sigma;
            let shapes: Vec<(f64, Shape)> = self
                .shapes
                .iter()
                .map(|(a, s, tmp)| (a * tmp.value(t - sigma, l), s.transported(&phi)))
                .collect();
            (tau, delta, shapes)
        };
        let mut phases: Vec<_> = (0..n).map(|k| phase((k as f64 + 0.5) * l / n as f64)).collect();
        {
            let sigma = t_near + l + phases[0].0;
            let (_, d) = self.path.evolution_and_drift(t, t - sigma);
            let drift = (d - self.zeta * sigma - phases[0].1).norm();
            if drift > 1e-7 * (1.0 + self.zeta.norm() * l + phases[0].1.norm()) {
                return Err(WakeError::Precondition(format!(
                    "ζ = {:?} is not the mean drift of the motion (per-period defect {drift:.3e})",
                    self.zeta.as_slice()
                )));
            }
        }
        // the rule shifted by half a step: guards the invariance test against
        // symmetric samples coinciding, and measures phase aliasing
        let probes: Vec<_> = (0..n).map(|k| phase(k as f64 * l / n as f64)).collect();
        let invariant = phases.iter().chain(&probes).all(|(_, delta, shapes)| {
            (delta - phases[0].1).norm() <= 1e-12 * (1.0 + delta.norm())
                && shapes.iter().zip(&phases[0].2).all(|((a, s), (a0, s0))| {
                    (a - a0).abs() <= 1e-12 * a0.abs().max(1e-300) && s.distance(s0) <= 1e-12 * s0.size()
                })
        });
        if invariant {
            phases.truncate(1);
            phases[0].0 = 0.5 * l;
        }
        let np = phases.len();
        let eval = |p: &(f64, Vector3<f64>, Vec<(f64, Shape)>), sigma: f64| -> Vector3<f64> {
            let w = x + self.zeta * sigma + p.1;
            let m = radial_moments(&self.forcing.bump, w.norm(), sigma);
            p.2.iter().fold(Vector3::zeros(), |acc, (a, s)| acc + s.apply(&m, &w) * *a)
        };
        let mut breaks = Vec::new();
        for p in &phases {
            self.passage_breaks(x, &p.1, t_near, f64::INFINITY, &mut breaks);
        }
        breaks.push(2.0 * t_near);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let integ = AdaptiveVec::new(self.quad.rel_tol, self.abs_tol(x) * (np as f64).sqrt())
            .with_max_segments(self.quad.max_segments);
        let res = integ.integrate_to_infinity(
            3 * np,
            |sigma, out: &mut [f64]| {
                for (k, p) in phases.iter().enumerate() {
                    out[3 * k..3 * k + 3].copy_from_slice(eval(p, sigma).as_slice());
                }
            },
            t_near,
            t_near.max(l),
            &breaks,
        );
        let mut value = Vector3::zeros();
        for k in 0..np {
            value += Vector3::from_column_slice(&res.value[3 * k..3 * k + 3]);
        }
        value /= np as f64;
        // Boundary terms of the phase average. With `G(σ, τ)` the integrand
        // at frozen phase `τ` and Fourier coefficients `c_m(σ)` in `τ`, each
        // oscillating mode integrates by parts to
        //   −c_m/(iω_m) + c_m′/(iω_m)² − c_m″/(iω_m)³ + …   at σ = T;
        // the first two are applied to the resolved modes `|m| < n/2` and the
        // rest is bounded as a geometric series. σ-derivatives by central
        // differences.
        let dt = l / 16.0;
        let modes = if np > 1 { (np - 1) / 2 } else { 0 };
        let kernels = |tau: f64| {
            let (mut w1, mut w2) = (0.0, 0.0);
            for m in 1..=modes {
                let om = 2.0 * PI * m as f64 / l;
                let (sn, cs) = (om * tau).sin_cos();
                w1 += 2.0 * sn / om;
                w2 -= 2.0 * cs / (om * om);
            }
            (w1, w2)
        };
        let (mut first, mut second, mut second_coarse) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        let mut start = Vec::with_capacity(np);
        // per mode: cos/sin sums of ∂_σG and ∂²_σG for a parity-free remainder
        let mut spectra = vec![[Vector3::zeros(); 4]; modes];
        for p in &phases {
            let f0 = eval(p, t_near);
            start.push(f0);
            if modes == 0 {
                continue;
            }
            let (fp, fm) = (eval(p, t_near + dt), eval(p, t_near - dt));
            let (fp2, fm2) = (eval(p, t_near + 2.0 * dt), eval(p, t_near - 2.0 * dt));
            let (w1, w2) = kernels(p.0);
            let d1 = (fp - fm) / (2.0 * dt);
            let d2 = (fp - f0 * 2.0 + fm) / (dt * dt);
            first += f0 * w1;
            second += d1 * w2;
            second_coarse += (fp2 - fm2) * (w2 / (4.0 * dt));
            for (m, sp) in spectra.iter_mut().enumerate() {
                let (sn, cs) = (2.0 * PI * (m + 1) as f64 * p.0 / l).sin_cos();
                sp[0] += d1 * cs;
                sp[1] += d1 * sn;
                sp[2] += d2 * cs;
                sp[3] += d2 * sn;
            }
        }
        let scale = 1.0 / np as f64;
        let (first, second, second_coarse) = (first * scale, second * scale, second_coarse * scale);
        // remainder after two terms: Σ_m 2|c_m″|/ω³ · Σ_j ρ_m^j with the
        // observed per-mode ratio ρ_m = |c_m″| / (ω|c_m′|)
        let remainder: f64 = spectra
            .iter()
            .enumerate()
            .map(|(m, sp)| {
                let om = 2.0 * PI * (m + 1) as f64 / l;
                let amp = |c: &Vector3<f64>, s: &Vector3<f64>| scale * (c.norm_squared() + s.norm_squared()).sqrt();
                let (a1, a2) = (amp(&sp[0], &sp[1]), amp(&sp[2], &sp[3]));
                let rho = if a1 > 0.0 { (a2 / (om * a1)).min(0.9) } else { 0.9 };
                2.0 * a2 / om.powi(3) / (1.0 - rho)
            })
            .sum();
        let mean = |v: &[Vector3<f64>]| v.iter().sum::<Vector3<f64>>() / np as f64;
        // phase aliasing: disagreement of the rule's mean with the shifted
        // rule at σ = T, integrated against the slowest (σ^{-3/2}) decay
        let probe_mean = probes.iter().map(|p| eval(p, t_near)).sum::<Vector3<f64>>() / probes.len() as f64;
        let alias = 2.0 * t_near * (probe_mean - mean(&start)).norm();
        let h = l / t_near;
        let correction = first + second;
        let roundoff = 64.0 * f64::EPSILON * (value + correction).norm();
        let tail_error =
            remainder + (second - second_coarse).norm() / 3.0 + h.powi(3) * first.norm() + alias + roundoff;
        Ok(PointValue {
            value: value + correction,
            error: res.error / np as f64 + tail_error,
            tail_error,
            evaluations: res.evaluations + 5 * np + probes.len(),
        })
    }

    /// `(S g)(x, t)`.
    pub fn point(&self, x: &Vector3<f64>, t: f64) -> Result<PointValue> {
        let mut out = PointValue { value: Vector3::zeros(), error: 0.0, tail_error: 0.0, evaluations: 0 };
        for j in 0..self.shapes.len() {
            let amp = self.shapes[j].0;
            let p = self.single(j).point_unit(x, t)?;
            out.value += p.value * amp;
            out.error += p.error * amp.abs();
            out.tail_error += p.tail_error * amp.abs();
            out.evaluations += p.evaluations;
        }
        Ok(out)
    }

    fn point_unit(&self, x: &Vector3<f64>, t: f64) -> Result<PointValue> {
        let t_near = self.quad.near_periods * self.period();
        let near = self.near_part(x, t, t_near);
        let far = self.far_part(x, t, t_near)?;
        Ok(PointValue {
            value: near.value + far.value,
            error: near.error + far.error,
            tail_error: far.tail_error,
            evaluations: near.evaluations + far.evaluations,
        })
    }

    /// Whether `S g` is the same at every time.
    pub fn is_steady(&self) -> bool {
        self.path.spec().is_autonomous() && self.forcing.is_steady()
    }

    /// `S g` on every node of `grid`, in the weight of order `m`.
    pub fn apply(&self, grid: Arc<FieldGrid>, m: f64) -> Result<OperatorOutput> {
        if (grid.period - self.period()).abs() > 1e-12 * self.period() {
            return Err(WakeError::InvalidArgument("grid period differs from the motion period".into()));
        }
        let slice = grid.n_shells() * grid.n_directions();
        let times = if self.is_steady() { 1 } else { grid.n_times() };
        let points: Vec<PointValue> = (0..slice * times)
            .into_par_iter()
            .map(|i| {
                let (t, s, d) = grid.unpack(i);
                self.point(&grid.position(s, d), grid.times[t])
            })
            .collect::<Result<_>>()?;
        let full = |i: usize| &points[i % (slice * times)];
        let n = grid.len();
        let values = (0..n).map(|i| full(i).value).collect();
        let errors = (0..n).map(|i| full(i).error).collect();
        let tail_errors = (0..n).map(|i| full(i).tail_error).collect();
        let out = OperatorOutput { field: WeightedField::new(grid, m, values)?, errors, tail_errors };
        check_tail(&out, &self.quad, self.trivial_monodromy)?;
        Ok(out)
    }
}

fn check_tail(out: &OperatorOutput, quad: &QuadratureSpec, averaged: bool) -> Result<()> {
    let norm = out.field.weighted_norm();
    let tail = out.weighted_tail_error();
    if norm == 0.0 || tail <= quad.tail_tol * norm {
        return Ok(());
    }
    let relative = tail / norm;
    // a bound-only tail decays like T^{-1/2}
    let factor = if averaged { 2.0 } else { (relative / quad.tail_tol).powi(2) };
    Err(WakeError::TailError {
        relative,
        tolerance: quad.tail_tol,
        required_t_cut: quad.near_periods * factor,
    })
}


/// Weights `w_i` with `Σ w_i f(r_i) ≈ ∫ f(r) r² dr` over `[r_0, r_n]`, from
/// the piecewise quadratic interpolant on consecutive node triples (the
/// last interval of an odd count uses the trailing triple).
pub fn radial_weights_quadratic(radii: &[f64]) -> Vec<f64> {
    let n = radii.len();
    let mut w = vec![0.0; n];
    if n < 3 {
        return FieldGrid::radial_weights(radii);
    }
    let (gx, gw) = gauss_legendre(4);
    let mut add = |i0: usize, a: f64, b: f64| {
        let nodes = [radii[i0], radii[i0 + 1], radii[i0 + 2]];
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (u, wu) in gx.iter().zip(&gw) {
            let r = mid + half * u;
            for m in 0..3 {
                let mut lag = 1.0;
                for k in 0..3 {
                    if k != m {
                        lag *= (r - nodes[k]) / (nodes[m] - nodes[k]);
                    }
                }
                w[i0 + m] += wu * half * lag * r * r;
            }
        }
    };
    let mut i = 0;
    while i + 2 < n {
        add(i, radii[i], radii[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        add(n - 3, radii[n - 2], radii[n - 1]);
    }
    w
}

/// Point sources `(y, b, slot, c)` discretizing `∫ dy` over a grid: node `y`
/// carries weight `c` times the grid value in spatial `slot`, smeared into a
/// heat blob of variance parameter `b` (`E_σ ∗ Γ_b = E_{σ+b}`).
#[derive(Debug, Clone)]
pub struct GridSources {
    pub points: Vec<Vector3<f64>>,
    pub blobs: Vec<f64>,
    pub slots: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl GridSources {
    /// Radial weights times the angular rule, with extra shells out to
    /// `cutoff_factor · R_max` extrapolated from the outer shell through the
    /// weight of order `m`.
    pub fn new(grid: &FieldGrid, m: f64, quad: &QuadratureSpec) -> Self {
        let n = grid.radii.len();
        let r_max = grid.radii[n - 1];
        let ratio = grid.spec.ratio();
        let mut radii = grid.radii.clone();
        while *radii.last().expect("non-empty") < quad.cutoff_factor * r_max * (1.0 - 1e-12) {
            let next = radii.last().expect("non-empty") * ratio;
            radii.push(next);
        }
        let weights = radial_weights_quadratic(&radii);
        let nd = grid.n_directions();
        let angular = (4.0 * PI / nd as f64).sqrt();
        let mut out = Self { points: Vec::new(), blobs: Vec::new(), slots: Vec::new(), coeffs: Vec::new() };
        for (s, &r) in radii.iter().enumerate() {
            let radial = if s + 1 < radii.len() { radii[s + 1] - r } else { r - radii[s - 1] };
            let h = radial.max(angular * r).max(radii[1]);
            let blob = 0.5 * (quad.blob_factor * h).powi(2);
            let slot_shell = s.min(n - 1);
            for d in 0..nd {
                let y = grid.directions[d] * r;
                let mut c = weights[s] * 4.0 * PI * grid.direction_weights[d];
                if s >= n {
                    let outer = grid.directions[d] * r_max;
                    c *= weight(&outer, &grid.zeta, m) / weight(&y, &grid.zeta, m);
                }
                out.points.push(y);
                out.blobs.push(blob);
                out.slots.push(slot_shell * nd + d);
                out.coeffs.push(c);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes per σ-panel of the operator quadrature.
const SIGMA_NODES: usize = 5;

fn sigma_gl() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    GL.get_or_init(|| gauss_legendre(SIGMA_NODES))
}

/// Composite rule in `σ` on `[lo, ∞)`: geometric panels of ratio two from
/// `floor`, refined around the wake passage of `z = x − y` and at `extra`
/// breaks, and a `σ = top/v` map beyond `top`.
fn sigma_rule(
    z: &Vector3<f64>,
    zeta: &Vector3<f64>,
    blob: f64,
    lo: f64,
    extra: &[f64],
    breaks: &mut Vec<f64>,
    out: &mut Vec<(f64, f64)>,
) {
    breaks.clear();
    out.clear();
    let floor = 0.5 * blob.max(1e-4);
    let top = (4.0 * (z.norm() + blob.sqrt() + 1.0).powi(2)).max(2.0 * lo.max(floor));
    breaks.push(lo);
    let mut g = if lo > 0.0 { lo } else { floor };
    while g < top {
        if g > lo {
            breaks.push(g);
        }
        g *= 2.0;
    }
    breaks.push(top);
    let z2 = zeta.norm_squared();
    if z2 > 0.0 {
        let s_star = -z.dot(zeta) / z2;
        if s_star > lo {
            let zn = zeta / z2.sqrt();
            let perp = (z - zn * z.dot(&zn)).norm();
            let width = (perp + (s_star + blob).sqrt() + 1.0) / z2.sqrt();
            for k in [-8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
                let b = s_star + k * width;
                if b > lo && b < top {
                    breaks.push(b);
                }
            }
        }
    }
    breaks.extend(extra.iter().copied().filter(|&b| b > lo && b < top));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (x, w) = sigma_gl();
    for win in breaks.windows(2) {
        let (mid, half) = (0.5 * (win[0] + win[1]), 0.5 * (win[1] - win[0]));
        for (u, wu) in x.iter().zip(w) {
            out.push((mid + half * u, wu * half));
        }
    }
    // ∫_top^∞ f dσ = ∫_0^1 f(top/v) top/v² dv
    for (a, b) in [(0.0, 0.5), (0.5, 1.0)] {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (u, wu) in x.iter().zip(w) {
            let v: f64 = mid + half * u;
            out.push((top / v, wu * half * top / (v * v)));
        }
    }
}

/// `acc[i·9 + a·3 + b] −= w Σ_{p,n} ∂_nE_ip(z, heat) Φ_pa Φ_nb`.
#[inline]
fn accumulate_kernel(acc: &mut [f64], z: &Vector3<f64>, heat: f64, phi: Option<&Matrix3<f64>>, w: f64) {
    let g = stokes_gradient(z, heat);
    match phi {
        None => {
            for i in 0..3 {
                for p in 0..3 {
                    for n in 0..3 {
                        acc[i * 9 + p * 3 + n] -= w * g[n][(i, p)];
                    }
                }
            }
        }
        Some(phi) => {
            for i in 0..3 {
                // t[a][n] = Σ_p ∂_nE_ip Φ_pa
                let mut t = [[0.0; 3]; 3];
                for (a, ta) in t.iter_mut().enumerate() {
                    for (n, tan) in ta.iter_mut().enumerate() {
                        *tan = (0..3).map(|p| g[n][(i, p)] * phi[(p, a)]).sum();
                    }
                }
                for (a, ta) in t.iter().enumerate() {
                    for b in 0..3 {
                        let v: f64 = (0..3).map(|n| ta[n] * phi[(n, b)]).sum();
                        acc[i * 9 + a * 3 + b] -= w * v;
                    }
                }
            }
        }
    }
}

/// `Σ_{l≤L} (2l+1) P_l(μ)`, the reproducing kernel of spherical
/// polynomials of degree `≤ L` for the normalized surface measure.
fn reproducing_kernel(band: usize, mu: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, mu);
    let mut sum = 1.0;
    if band >= 1 {
        sum += 3.0 * mu;
    }
    for l in 1..band {
        let lf = l as f64;
        let p2 = ((2.0 * lf + 1.0) * mu * p1 - lf * p0) / (lf + 1.0);
        sum += (2.0 * lf + 3.0) * p2;
        p0 = p1;
        p1 = p2;
    }
    sum
}

fn band_limit(n_directions: usize) -> Result<usize> {
    match n_directions {
        6 => Ok(1),
        14 => Ok(2),
        26 => Ok(3),
        50 => Ok(5),
        n => Err(WakeError::InvalidArgument(format!("no band limit known for {n} directions"))),
    }
}

/// Average of `R G(Rᵀ·) Rᵀ` over rotations `R` about a fixed axis, on one
/// shell: exact for angular content up to the band limit of the rule.
#[derive(Debug, Clone)]
struct RotationAverage {
    dirs: usize,
    /// `(dirs·9) × (dirs·9)`, row-major.
    block: Vec<f64>,
}

impl RotationAverage {
    fn new(grid: &FieldGrid, axis: &Vector3<f64>, phases: usize) -> Result<Self> {
        let nd = grid.n_directions();
        let band = band_limit(nd)?;
        let axis = axis.normalize();
        let n = phases.max(2 * band + 6);
        let mut block = vec![0.0; nd * 9 * nd * 9];
        for k in 0..n {
            let r = *Rotation3::new(axis * (2.0 * PI * k as f64 / n as f64)).matrix();
            for i in 0..nd {
                let u = r.transpose() * grid.directions[i];
                for j in 0..nd {
                    let c = grid.direction_weights[j] * reproducing_kernel(band, u.dot(&grid.directions[j])) / n as f64;
                    for a in 0..3 {
                        for b in 0..3 {
                            let row = (i * 9 + a * 3 + b) * nd * 9 + j * 9;
                            for cc in 0..3 {
                                for e in 0..3 {
                                    block[row + cc * 3 + e] += c * r[(a, cc)] * r[(b, e)];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { dirs: nd, block })
    }

    /// Applies the average shell by shell to a flattened slice `[(s·nd + d)·9 + a·3 + b]`.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let w = self.dirs * 9;
        let mut out = vec![0.0; g.len()];
        for (src, dst) in g.chunks(w).zip(out.chunks_mut(w)) {
            for (row, o) in dst.iter_mut().enumerate() {
                *o = self.block[row * w..(row + 1) * w].iter().zip(src).map(|(a, b)| a * b).sum();
            }
        }
        out
    }
}

/// Periodic interpolation weights on `n` uniform nodes (trigonometric, with
/// the Nyquist mode split evenly).
fn periodic_weights(s: f64, period: f64, n: usize, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let u = 2.0 * PI * (s / period - k as f64 / n as f64);
        let mut v = 1.0;
        let half = n / 2;
        for j in 1..=half {
            let c = (j as f64 * u).cos();
            v += if 2 * j == n { c } else { 2.0 * c };
        }
        *o = v / n as f64;
    }
}


/// Local singularity subtraction at an output node `x`: the grid sum acts
/// on `G − G(x)φ` with a Gaussian `φ = e^{−|y−x|²/2ℓ²}`, and the exact
/// contribution of `G(x)φ` is added back as one heat blob at `x` of
/// variance parameter `ℓ²/2` and mass `(2πℓ²)^{3/2}`.
struct LocalSubtraction {
    x: Vector3<f64>,
    slot: usize,
    ell: f64,
}

impl LocalSubtraction {
    fn new(grid: &FieldGrid, x: &Vector3<f64>, slot: usize) -> Self {
        Self { x: *x, slot, ell: (0.5 * x.norm()).max(grid.radii[1]) }
    }

    /// Source `j` (`j == len` is the added-back blob) with its scatter list.
    fn term(&self, src: &GridSources, j: usize) -> (Vector3<f64>, f64, [Option<(usize, f64)>; 2]) {
        let l2 = self.ell * self.ell;
        if j == src.len() {
            return (self.x, 0.5 * l2, [Some((self.slot, (2.0 * PI * l2).powf(1.5))), None]);
        }
        let y = src.points[j];
        let c = src.coeffs[j];
        let phi = (-(y - self.x).norm_squared() / (2.0 * l2)).exp();
        let sub = if phi > 1e-16 { Some((self.slot, -c * phi)) } else { None };
        (y, src.blobs[j], [Some((src.slots[j], c)), sub])
    }
}

/// How `Λ` treats time: one steady slice (autonomous motion and steady
/// data) or the full periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    Steady,
    Periodic,
}

impl LambdaMode {
    pub fn for_problem(path: &RotationPath, forcing_is_steady: bool) -> Self {
        if path.spec().is_autonomous() && forcing_is_steady {
            LambdaMode::Steady
        } else {
            LambdaMode::Periodic
        }
    }
}

/// `Λ` on a grid: a dense, time-integrated source-sum matrix (`f32`
/// storage, `f64` accumulation) mapping tensor node values to velocities.
///
/// In steady mode with rotation the range `σ ≥ T` acts on the rotation
/// average of the input instead of rotating the kernel.
pub struct LambdaOperator {
    grid: Arc<FieldGrid>,
    mode: LambdaMode,
    rows: usize,
    cols: usize,
    near: Vec<f32>,
    far: Option<(Vec<f32>, RotationAverage)>,
    sources: usize,
}

impl std::fmt::Debug for LambdaOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LambdaOperator")
            .field("mode", &self.mode)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("sources", &self.sources)
            .field("rotation_average", &self.far.is_some())
            .finish()
    }
}

impl LambdaOperator {
    /// `m_in` is the weight order of the tensors it will act on (used to
    /// extrapolate beyond the grid).
    pub fn new(path: &RotationPath, grid: Arc<FieldGrid>, m_in: f64, quad: &QuadratureSpec, mode: LambdaMode) -> Result<Self> {
        quad.validate()?;
        let l = path.spec().period();
        if (grid.period - l).abs() > 1e-12 * l {
            return Err(WakeError::InvalidArgument("grid period differs from the motion period".into()));
        }
        let sources = GridSources::new(&grid, m_in, quad);
        match mode {
            LambdaMode::Steady => Self::steady(path, grid, &sources, quad),
            LambdaMode::Periodic => Self::periodic(path, grid, &sources, quad),
        }
    }

    pub fn mode(&self) -> LambdaMode {
        self.mode
    }

    pub fn grid(&self) -> &Arc<FieldGrid> {
        &self.grid
    }

    /// Bytes held by the matrices.
    pub fn memory(&self) -> usize {
        4 * (self.near.len() + self.far.as_ref().map_or(0, |f| f.0.len()))
    }

    fn steady(path: &RotationPath, grid: Arc<FieldGrid>, src: &GridSources, quad: &QuadratureSpec) -> Result<Self> {
        let spec = path.spec();
        if !spec.is_autonomous() {
            return Err(WakeError::Precondition("steady Λ needs an autonomous motion".into()));
        }
        let (eta, omega) = (spec.eta(0.0), spec.omega(0.0));
        let rotating = omega.norm() > 1e-14;
        if rotating && eta.cross(&omega).norm() > 1e-12 * eta.norm() * omega.norm() {
            return Err(WakeError::Precondition("steady Λ with rotation needs η parallel to ω".into()));
        }
        let n_sp = grid.spatial_len();
        let (rows, cols) = (3 * n_sp, 9 * n_sp);
        let l = spec.period();
        let turn = if rotating { 2.0 * PI / omega.norm() } else { l };
        let t1 = (quad.operator_near_periods * l / turn).ceil().max(1.0) * turn;
        let extra: Vec<f64> = if rotating { (1..=((t1 / turn).round() as usize * 8)).map(|k| k as f64 * turn / 8.0).collect() } else { Vec::new() };
        let em_phases = 16;
        let rot = |s: f64| *Rotation3::new(-omega * s).matrix();
        let mut near = vec![0f32; rows * cols];
        let mut far = if rotating { vec![0f32; rows * cols] } else { Vec::new() };
        let build = |o: usize, near_blk: &mut [f32], far_blk: Option<&mut [f32]>| {
            let x = grid.position(o / grid.n_directions(), o % grid.n_directions());
            let mut nb = vec![0.0f64; 3 * cols];
            let mut fb = if rotating { vec![0.0f64; 3 * cols] } else { Vec::new() };
            let (mut breaks, mut nodes) = (Vec::new(), Vec::new());
            let local = LocalSubtraction::new(&grid, &x, o);
            for j in 0..=src.len() {
                let (y, b, scatter) = local.term(src, j);
                sigma_rule(&(x - y), &eta, b, 0.0, &extra, &mut breaks, &mut nodes);
                let (mut an, mut af) = ([0.0; 27], [0.0; 27]);
                for &(sigma, w) in &nodes {
                    if !rotating {
                        accumulate_kernel(&mut an, &(x + eta * sigma - y), sigma + b, None, w);
                    } else if sigma < t1 {
                        let phi = rot(sigma);
                        accumulate_kernel(&mut an, &(x + eta * sigma - phi * y), sigma + b, Some(&phi), w);
                    } else {
                        accumulate_kernel(&mut af, &(x + eta * sigma - y), sigma + b, None, w);
                    }
                }
                if rotating {
                    // boundary term of the rotation-phase average at σ = T
                    for k in 0..em_phases {
                        let tau = (k as f64 + 0.5) * turn / em_phases as f64;
                        let phi = rot(tau);
                        let wk = (0.5 * turn - tau) / em_phases as f64;
                        accumulate_kernel(&mut an, &(x + eta * t1 - phi * y), t1 + b, Some(&phi), wk);
                    }
                }
                for &(slot, c) in scatter.iter().flatten() {
                    let col = 9 * slot;
                    for i in 0..3 {
                        for q in 0..9 {
                            nb[i * cols + col + q] += c * an[i * 9 + q];
                            if rotating {
                                fb[i * cols + col + q] += c * af[i * 9 + q];
                            }
                        }
                    }
                }
            }
            near_blk.iter_mut().zip(&nb).for_each(|(o, v)| *o = *v as f32);
            if let Some(fbk) = far_blk {
                fbk.iter_mut().zip(&fb).for_each(|(o, v)| *o = *v as f32);
            }
        };
        if rotating {
            near.par_chunks_mut(3 * cols)
                .zip(far.par_chunks_mut(3 * cols))
                .enumerate()
                .for_each(|(o, (nb, fb))| build(o, nb, Some(fb)));
        } else {
            near.par_chunks_mut(3 * cols).enumerate().for_each(|(o, nb)| build(o, nb, None));
        }
        let far = if rotating { Some((far, RotationAverage::new(&grid, &omega, em_phases)?)) } else { None };
        Ok(Self { grid, mode: LambdaMode::Steady, rows, cols, near, far, sources: src.len() })
    }

    fn periodic(path: &RotationPath, grid: Arc<FieldGrid>, src: &GridSources, quad: &QuadratureSpec) -> Result<Self> {
        if (path.monodromy() - Matrix3::identity()).norm() > 1e-9 {
            return Err(WakeError::Precondition("periodic Λ needs a trivial monodromy".into()));
        }
        let l = path.spec().period();
        let zeta = grid.zeta;
        let (n_sp, n_t) = (grid.spatial_len(), grid.n_times());
        let (rows, cols) = (3 * n_sp * n_t, 9 * n_sp * n_t);
        let t1 = quad.operator_near_periods.ceil() * l;
        let extra: Vec<f64> = (1..=(quad.operator_near_periods.ceil() as usize * 8)).map(|k| k as f64 * l / 8.0).collect();
        let mut near = vec![0f32; rows * cols];
        near.par_chunks_mut(3 * cols).enumerate().for_each(|(o, blk)| {
            let (tk, s, d) = grid.unpack(o);
            let (x, t_o) = (grid.position(s, d), grid.times[tk]);
            let phases: Vec<(f64, Matrix3<f64>, Vector3<f64>)> = (0..n_t)
                .map(|k| {
                    let tau = (t_o - t1 - grid.times[k]).rem_euclid(l);
                    let sigma = t1 + tau;
                    let (phi, dd) = path.evolution_and_drift(t_o, t_o - sigma);
                    (tau, phi, dd - zeta * sigma)
                })
                .collect();
            let mut rb = vec![0.0f64; 3 * cols];
            let (mut breaks, mut nodes) = (Vec::new(), Vec::new());
            let mut acc = vec![0.0; 27 * n_t];
            let mut iw = vec![0.0; n_t];
            let local = LocalSubtraction::new(&grid, &x, s * grid.n_directions() + d);
            for j in 0..=src.len() {
                let (y, b, scatter) = local.term(src, j);
                sigma_rule(&(x - y), &zeta, b, 0.0, &extra, &mut breaks, &mut nodes);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &(sigma, w) in &nodes {
                    if sigma < t1 {
                        let (phi, dd) = path.evolution_and_drift(t_o, t_o - sigma);
                        let mut tmp = [0.0; 27];
                        accumulate_kernel(&mut tmp, &(x + dd - phi * y), sigma + b, Some(&phi), w);
                        periodic_weights(t_o - sigma, l, n_t, &mut iw);
                        for k in 0..n_t {
                            for q in 0..27 {
                                acc[27 * k + q] += iw[k] * tmp[q];
                            }
                        }
                    } else {
                        for (k, (_, phi, delta)) in phases.iter().enumerate() {
                            let z = x + zeta * sigma + delta - phi * y;
                            accumulate_kernel(&mut acc[27 * k..27 * k + 27], &z, sigma + b, Some(phi), w / n_t as f64);
                        }
                    }
                }
                for (k, (tau, phi, delta)) in phases.iter().enumerate() {
                    let z = x + zeta * t1 + delta - phi * y;
                    accumulate_kernel(&mut acc[27 * k..27 * k + 27], &z, t1 + b, Some(phi), (0.5 * l - tau) / n_t as f64);
                }
                for &(slot, c) in scatter.iter().flatten() {
                    for k in 0..n_t {
                        let col = 9 * (k * n_sp + slot);
                        for i in 0..3 {
                            for q in 0..9 {
                                rb[i * cols + col + q] += c * acc[27 * k + i * 9 + q];
                            }
                        }
                    }
                }
            }
            blk.iter_mut().zip(&rb).for_each(|(o, v)| *o = *v as f32);
        });
        Ok(Self { grid, mode: LambdaMode::Periodic, rows, cols, near, far: None, sources: src.len() })
    }

    fn matvec(matrix: &[f32], cols: usize, g: &[f64]) -> Vec<f64> {
        matrix
            .par_chunks(cols)
            .map(|row| row.iter().zip(g).map(|(a, b)| *a as f64 * b).sum())
            .collect()
    }

    /// `Λ G` with output weight order `m_out`.
    pub fn apply(&self, g: &TensorField, m_out: f64) -> Result<WeightedField> {
        let grid = g.grid();
        if !Arc::ptr_eq(grid, &self.grid) && grid.as_ref() != self.grid.as_ref() {
            return Err(WakeError::InvalidArgument("tensor field lives on a different grid".into()));
        }
        let n_sp = grid.spatial_len();
        let flat = |vals: &[Matrix3<f64>]| -> Vec<f64> {
            vals.iter().flat_map(|m| (0..9).map(move |q| m[(q / 3, q % 3)])).collect()
        };
        let out: Vec<f64> = match self.mode {
            LambdaMode::Steady => {
                let slice = &g.values()[..n_sp];
                let scale = slice.iter().map(|m| m.norm()).fold(0.0, f64::max);
                for t in 1..grid.n_times() {
                    let other = &g.values()[t * n_sp..(t + 1) * n_sp];
                    if other.iter().zip(slice).any(|(a, b)| (a - b).norm() > 1e-12 * scale) {
                        return Err(WakeError::Precondition("steady Λ applied to a time-dependent tensor".into()));
                    }
                }
                let v = flat(slice);
                let mut y = Self::matvec(&self.near, self.cols, &v);
                if let Some((far, avg)) = &self.far {
                    let yf = Self::matvec(far, self.cols, &avg.apply(&v));
                    y.iter_mut().zip(&yf).for_each(|(a, b)| *a += b);
                }
                let mut full = Vec::with_capacity(3 * grid.len());
                for _ in 0..grid.n_times() {
                    full.extend_from_slice(&y);
                }
                full
            }
            LambdaMode::Periodic => Self::matvec(&self.near, self.cols, &flat(g.values())),
        };
        debug_assert_eq!(out.len(), 3 * grid.len());
        let values = out.chunks(3).map(Vector3::from_column_slice).collect();
        WeightedField::new(self.grid.clone(), m_out, values)
    }
}


/// Volume rule for compactly supported analytic data on `B_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeRule {
    pub n_rho: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for VolumeRule {
    fn default() -> Self {
        Self { n_rho: 12, n_theta: 24, n_phi: 36 }
    }
}

/// `(Λ G)(x, t)` restricted to `σ ∈ [a, b]` (`b = None`: to infinity, which
/// is only meaningful when the integrand does not oscillate in `σ`), for a
/// tensor `G(y, s)` supported in `B_R`, by a fixed volume rule split at
/// `radial_breaks`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_compact_point<G>(
    path: &RotationPath,
    tensor: G,
    radial_breaks: &[f64],
    x: &Vector3<f64>,
    t: f64,
    a: f64,
    b: Option<f64>,
    quad: &QuadratureSpec,
    rule: &VolumeRule,
) -> PointValue
where
    G: Fn(&Vector3<f64>, f64) -> Matrix3<f64>,
{
    let sphere = SphereRule::product(rule.n_theta, rule.n_phi, &Vector3::z());
    let (gx, gw) = gauss_legendre(rule.n_rho);
    let mut nodes = Vec::new();
    for win in radial_breaks.windows(2) {
        let (mid, half) = (0.5 * (win[0] + win[1]), 0.5 * (win[1] - win[0]));
        for (u, wu) in gx.iter().zip(&gw) {
            let rho = mid + half * u;
            for (d, wd) in sphere.points.iter().zip(&sphere.weights) {
                nodes.push((d * rho, rho * rho * wu * half * 4.0 * PI * wd));
            }
        }
    }
    let f = |sigma: f64, out: &mut [f64]| {
        let (phi, d) = path.evolution_and_drift(t, t - sigma);
        let w = x + d;
        let mut v = Vector3::zeros();
        for (y, wy) in &nodes {
            let m = phi * tensor(y, t - sigma) * phi.transpose();
            let g = stokes_gradient(&(w - phi * y), sigma);
            for (n, gn) in g.iter().enumerate() {
                v -= gn * m.column(n) * *wy;
            }
        }
        out.copy_from_slice(v.as_slice());
    };
    let integ = AdaptiveVec::new(quad.rel_tol, quad.abs_tol).with_max_segments(quad.max_segments);
    let l = path.spec().period();
    let res = match b {
        Some(b) => {
            let mut br = vec![a, b];
            let mut k = (a / (0.25 * l)).floor() + 1.0;
            while 0.25 * l * k < b {
                br.push(0.25 * l * k);
                k += 1.0;
            }
            br.sort_by(f64::total_cmp);
            integ.integrate_with_breaks(3, f, &br)
        }
        None => integ.integrate_to_infinity(3, f, a, l.max(1.0), &[a + l, a + 4.0 * l, a + 16.0 * l, a + 64.0 * l]),
    };
    PointValue { value: Vector3::from_column_slice(&res.value), error: res.error, tail_error: 0.0, evaluations: res.evaluations }
}


/// Norm ratios of a sweep and their maximum, the fitted constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub ratios: Vec<f64>,
    /// Weighted quadrature error of each ratio, where one is available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
    pub constant: f64,
}

impl ConstantFit {
    fn new(ratios: Vec<f64>, errors: Option<Vec<f64>>) -> Self {
        let constant = ratios.iter().copied().fold(0.0, f64::max);
        Self { ratios, errors, constant }
    }
}

/// `C₀,fit = max [Sg]_{1,ζ} / sup|g|` over a family of forcings.
pub fn estimate_c0(
    path: &RotationPath,
    zeta: &Vector3<f64>,
    family: &[SyntheticForcing],
    grid: Arc<FieldGrid>,
    quad: &QuadratureSpec,
) -> Result<ConstantFit> {
    let (mut ratios, mut errors) = (Vec::new(), Vec::new());
    for g in family {
        let k = g.sup_norm();
        if !(k > 0.0) {
            return Err(WakeError::InvalidArgument("C₀ sweep needs nonzero forcings".into()));
        }
        let out = SyntheticDuhamel::new(path, g, zeta, quad)?.apply(grid.clone(), 1.0)?;
        ratios.push(out.field.weighted_norm() / k);
        errors.push(out.weighted_error() / k);
    }
    Ok(ConstantFit::new(ratios, Some(errors)))
}

/// `C₁,fit = max [ΛG]_{1,ζ} / [G]_{2,ζ}` over a family of tensor fields.
pub fn estimate_c1(op: &LambdaOperator, family: &[TensorField]) -> Result<ConstantFit> {
    let mut ratios = Vec::with_capacity(family.len());
    for g in family {
        let n = g.weighted_norm();
        if !(n > 0.0) {
            return Err(WakeError::InvalidArgument("C₁ sweep needs nonzero tensors".into()));
        }
        ratios.push(op.apply(g, 1.0)?.weighted_norm() / n);
    }
    Ok(ConstantFit::new(ratios, None))
}
