//! Smooth cut-off, the divergence-free lift of the boundary rigid motion, the
//! forcing pair `(f, F)` it induces, Newtonian potential gradients, and
//! synthetic compactly supported periodic forcings in divergence form.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WakeError};
use crate::quadrature::{gauss_legendre, orthonormal_frame, Adaptive, SphereRule};
use crate::rigid_motion::{hat, RigidMotionSpec};

/// `ψ(r) = s(2−r) / (s(2−r) + s(r−1))`, `s(t) = exp(−1/t)`: equal to 1 on
/// `[0, 1]` and 0 on `[2, ∞)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cutoff;

impl Cutoff {
    pub const INNER: f64 = 1.0;
    pub const OUTER: f64 = 2.0;
    /// Radii splitting the bridge for quadrature along rays.
    pub const BREAKS: [f64; 4] = [1.0, 1.25, 1.5, 1.75];

    pub fn value(r: f64) -> f64 {
        Self::derivatives(r)[0]
    }

    /// `[ψ, ψ′, ψ″, ψ‴]` at `r`.
    pub fn derivatives(r: f64) -> [f64; 4] {
        let u = r - Self::INNER;
        if u <= 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        if u >= 1.0 {
            return [0.0; 4];
        }
        // ψ = L(g) with L(g) = 1/(1+eᵍ), g = −1/u + 1/(1−u)
        let v = 1.0 - u;
        let g = -1.0 / u + 1.0 / v;
        let (l, lc) = if g > 0.0 {
            let e = (-g).exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        } else {
            let e = g.exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        };
        let a = l * lc;
        if a == 0.0 {
            return [l, 0.0, 0.0, 0.0];
        }
        let g1 = 1.0 / (u * u) + 1.0 / (v * v);
        let g2 = -2.0 / u.powi(3) + 2.0 / v.powi(3);
        let g3 = 6.0 / u.powi(4) + 6.0 / v.powi(4);
        let l1 = -a;
        let l2 = a * (lc - l);
        let l3 = -a * (1.0 - 6.0 * a);
        [
            l,
            l1 * g1,
            l2 * g1 * g1 + l1 * g2,
            l3 * g1.powi(3) + 3.0 * l2 * g1 * g2 + l1 * g3,
        ]
    }

    /// `4π ∫₀^r ψ(s) s² ds`.
    pub fn mass(r: f64) -> f64 {
        let ball = 4.0 * PI / 3.0;
        if r <= Self::INNER {
            return ball * r.max(0.0).powi(3);
        }
        if r >= Self::OUTER {
            return Self::total_mass();
        }
        ball + 4.0 * PI * Self::annulus_moment(r)
    }

    /// `4π ∫₀^2 ψ s² ds`.
    pub fn total_mass() -> f64 {
        static TOTAL: OnceLock<f64> = OnceLock::new();
        *TOTAL.get_or_init(|| 4.0 * PI / 3.0 + 4.0 * PI * Self::annulus_moment(Self::OUTER))
    }

    fn annulus_moment(r: f64) -> f64 {
        Adaptive::new(1e-14, 1e-16)
            .integrate(|s| Self::value(s) * s * s, Self::INNER, r)
            .map(|i| i.value)
            .expect("smooth cut-off moment converges")
    }
}

/// Radial bump `χ(ρ) = ψ(2ρ/R)` supported in `B_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub radius: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Self { radius: Cutoff::OUTER }
    }
}

impl Bump {
    pub fn scale(&self) -> f64 {
        Cutoff::OUTER / self.radius
    }

    /// `[χ, χ′, χ″, χ‴]` at `ρ`.
    pub fn derivatives(&self, rho: f64) -> [f64; 4] {
        let k = self.scale();
        let d = Cutoff::derivatives(k * rho);
        [d[0], k * d[1], k * k * d[2], k.powi(3) * d[3]]
    }

    pub fn value(&self, rho: f64) -> f64 {
        Cutoff::value(self.scale() * rho)
    }

    /// `∫_{B_ρ} χ`.
    pub fn mass(&self, rho: f64) -> f64 {
        Cutoff::mass(self.scale() * rho) / self.scale().powi(3)
    }

    pub fn total_mass(&self) -> f64 {
        Cutoff::total_mass() / self.scale().powi(3)
    }

    /// Radii where the profile changes character (edges of the bridge).
    pub fn breaks(&self) -> [f64; 4] {
        Cutoff::BREAKS.map(|b| b / self.scale())
    }
}

/// Lift `b`, its gradient `(∇b)_{ij} = ∂_j b_i`, Laplacian and time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftSample {
    pub b: Vector3<f64>,
    pub grad: Matrix3<f64>,
    pub laplacian: Vector3<f64>,
    pub dt: Vector3<f64>,
}

/// Rigid-motion data frozen at one instant.
#[derive(Debug, Clone, Copy)]
struct Motion {
    eta: Vector3<f64>,
    omega: Vector3<f64>,
    eta_dot: Vector3<f64>,
    omega_dot: Vector3<f64>,
}

impl Motion {
    fn at(spec: &RigidMotionSpec, t: f64) -> Self {
        Self {
            eta: spec.eta(t),
            omega: spec.omega(t),
            eta_dot: spec.eta_dot(t),
            omega_dot: spec.omega_dot(t),
        }
    }

    fn dt_lift(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let r = x.norm();
        let vdot = self.eta_dot + self.omega_dot.cross(x);
        if r <= Cutoff::INNER {
            return vdot;
        }
        let [p0, p1, ..] = Cutoff::derivatives(r);
        let alpha = p0 + 0.5 * r * p1;
        let beta = 0.5 * p1 / r;
        vdot * alpha - x * (beta * x.dot(&self.eta_dot))
    }

    fn lift(&self, x: &Vector3<f64>) -> LiftSample {
        let r = x.norm();
        let w = hat(&self.omega);
        let v = self.eta + self.omega.cross(x);
        let vdot = self.eta_dot + self.omega_dot.cross(x);
        if r <= Cutoff::INNER {
            return LiftSample {
                b: v,
                grad: w,
                laplacian: Vector3::zeros(),
                dt: vdot,
            };
        }
        // b = αV − β(x·η)x with α = ψ + ½rψ′, β = ψ′/(2r)
        let [p0, p1, p2, p3] = Cutoff::derivatives(r);
        let alpha = p0 + 0.5 * r * p1;
        let alpha1 = 1.5 * p1 + 0.5 * r * p2;
        let alpha2 = 2.0 * p2 + 0.5 * r * p3;
        let beta = 0.5 * p1 / r;
        let beta1 = 0.5 * (p2 / r - p1 / (r * r));
        let beta2 = 0.5 * (p3 / r - 2.0 * p2 / (r * r) + 2.0 * p1 / r.powi(3));
        let xe = x.dot(&self.eta);
        let b = v * alpha - x * (beta * xe);
        let grad = v * x.transpose() * (alpha1 / r) + w * alpha
            - x * x.transpose() * (beta1 / r * xe)
            - x * self.eta.transpose() * beta
            - Matrix3::identity() * (beta * xe);
        let laplacian = v * (alpha2 + 2.0 * alpha1 / r) + self.omega.cross(x) * (2.0 * alpha1 / r)
            - x * ((beta2 + 6.0 * beta1 / r) * xe)
            - self.eta * (2.0 * beta);
        let dt = vdot * alpha - x * (beta * x.dot(&self.eta_dot));
        LiftSample { b, grad, laplacian, dt }
    }

    /// `f = Δb + (∇b)V − ω×b − ∂_t b − (∇b)b`.
    fn force(&self, x: &Vector3<f64>) -> (LiftSample, Vector3<f64>) {
        let s = self.lift(x);
        let v = self.eta + self.omega.cross(x);
        let f = s.laplacian + s.grad * v - self.omega.cross(&s.b) - s.dt - s.grad * s.b;
        (s, f)
    }
}

/// The lift `b = ½ rot[ψ(|x|)(η×x − |x|²ω)]` and its derivatives at `(x, t)`.
pub fn lift_field(spec: &RigidMotionSpec, x: &Vector3<f64>, t: f64) -> LiftSample {
    Motion::at(spec, t).lift(x)
}

/// Force density `f` of the lift at `(x, t)` (no potential term needed).
pub fn lift_force_density(spec: &RigidMotionSpec, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
    Motion::at(spec, t).force(x).1
}

/// `f`, `F` and the potential part `F₀` of the lift forcing at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingSample {
    pub x: Vector3<f64>,
    pub t: f64,
    pub f: Vector3<f64>,
    pub big_f: Matrix3<f64>,
    pub f0: Matrix3<f64>,
    /// Quadrature error estimate of `F₀` (and hence of `F`).
    pub f0_error: f64,
}

/// `f = div F` with `F = ∇b + b⊗V − (ω×x)⊗b − F₀ − b⊗b` and
/// `F₀ = −∇N ∗ ∂_t b`, `N = (4π|x|)⁻¹`.
pub fn assemble_forcing(spec: &RigidMotionSpec, x: &Vector3<f64>, t: f64) -> Result<ForcingSample> {
    assemble_forcing_with(spec, x, t, &PotentialRule::default())
}

pub fn assemble_forcing_with(spec: &RigidMotionSpec, x: &Vector3<f64>, t: f64, rule: &PotentialRule) -> Result<ForcingSample> {
    let motion = Motion::at(spec, t);
    let (s, f) = motion.force(x);
    let potential = if motion.eta_dot.norm() == 0.0 && motion.omega_dot.norm() == 0.0 {
        PotentialGradient::default()
    } else {
        let h = |y: &Vector3<f64>| motion.dt_lift(y);
        newtonian_potential_gradient(&h, Cutoff::OUTER, &Cutoff::BREAKS, x, rule)?
    };
    let v = motion.eta + motion.omega.cross(x);
    let rot = motion.omega.cross(x);
    let big_f = s.grad + s.b * v.transpose() - rot * s.b.transpose() - potential.value - s.b * s.b.transpose();
    Ok(ForcingSample {
        x: *x,
        t,
        f,
        big_f,
        f0: potential.value,
        f0_error: potential.error,
    })
}

/// Resolution of the ray quadrature for Newtonian potential gradients. The
/// error estimate compares this rule with one 1.5× finer in every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialRule {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_rho: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for PotentialRule {
    fn default() -> Self {
        Self {
            n_theta: 80,
            n_phi: 96,
            n_rho: 24,
            rel_tol: 1e-6,
            abs_tol: 1e-12,
        }
    }
}

impl PotentialRule {
    fn refined(&self) -> Self {
        let up = |n: usize| (3 * n).div_ceil(2);
        Self {
            n_theta: up(self.n_theta),
            n_phi: up(self.n_phi),
            n_rho: up(self.n_rho),
            ..*self
        }
    }
}

/// `−∇N ∗ h` as a matrix `G_{ij} = −(∂_j N ∗ h_i)` with its error estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PotentialGradient {
    pub value: Matrix3<f64>,
    pub error: f64,
}

/// Ray line integral of `h` from `x` along `u` over the ball `B_support`,
/// split where the ray crosses the spheres `|y| = c` for `c` in `breaks`.
fn ray_integral<H>(h: &H, x: &Vector3<f64>, u: &Vector3<f64>, support: f64, breaks: &[f64], gl: &(Vec<f64>, Vec<f64>)) -> Vector3<f64>
where
    H: Fn(&Vector3<f64>) -> Vector3<f64> + ?Sized,
{
    let xu = x.dot(u);
    let x2 = x.norm_squared();
    let disc = xu * xu - x2 + support * support;
    if disc <= 0.0 {
        return Vector3::zeros();
    }
    let sq = disc.sqrt();
    let (lo, hi) = ((-xu - sq).max(0.0), -xu + sq);
    if hi <= lo {
        return Vector3::zeros();
    }
    let mut cuts = [0.0f64; 16];
    let mut n = 0;
    cuts[n] = lo;
    n += 1;
    for &c in breaks.iter().take(7) {
        let d = xu * xu - x2 + c * c;
        if d > 0.0 {
            let s = d.sqrt();
            for rho in [-xu - s, -xu + s] {
                if rho > lo && rho < hi {
                    cuts[n] = rho;
                    n += 1;
                }
            }
        }
    }
    cuts[n] = hi;
    n += 1;
    let cuts = &mut cuts[..n];
    cuts.sort_by(f64::total_cmp);
    let mut acc = Vector3::zeros();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, wt) in gl.0.iter().zip(&gl.1) {
            let rho = mid + half * t;
            acc += h(&(x + u * rho)) * (wt * half);
        }
    }
    acc
}

fn potential_pass<H>(h: &H, support: f64, breaks: &[f64], x: &Vector3<f64>, rule: &PotentialRule) -> Matrix3<f64>
where
    H: Fn(&Vector3<f64>) -> Vector3<f64> + ?Sized,
{
    let r = x.norm();
    let axis = if r > 0.0 { -x / r } else { Vector3::z() };
    let frame = orthonormal_frame(&axis);
    // Outside the support only the cone of rays hitting B_support matters.
    let c0 = if r > support { (1.0 - (support / r).powi(2)).max(0.0).sqrt() } else { -1.0 };
    let (ct, wt) = gauss_legendre(rule.n_theta);
    let gl = gauss_legendre(rule.n_rho);
    let half = 0.5 * (1.0 - c0);
    let dphi = 2.0 * PI / rule.n_phi as f64;
    let mut acc = Matrix3::zeros();
    for (t, w) in ct.iter().zip(&wt) {
        let c = c0 + half * (t + 1.0);
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..rule.n_phi {
            let phi = dphi * (k as f64 + 0.5);
            let u = frame * Vector3::new(s * phi.cos(), s * phi.sin(), c);
            let line = ray_integral(h, x, &u, support, breaks, &gl);
            acc += line * u.transpose() * (w * half * dphi);
        }
    }
    acc * (-1.0 / (4.0 * PI))
}

/// `G = −∇(4π|x|)⁻¹ ∗ h` for a vector profile `h` supported in
/// `B_support`, via rays centred at `x` (the `|x−y|⁻²` singularity cancels
/// against the radial Jacobian). `breaks` lists radii where `h` varies
/// sharply. Errors when the two-resolution estimate misses the tolerance.
pub fn newtonian_potential_gradient<H>(h: &H, support: f64, breaks: &[f64], x: &Vector3<f64>, rule: &PotentialRule) -> Result<PotentialGradient>
where
    H: Fn(&Vector3<f64>) -> Vector3<f64> + ?Sized,
{
    if !(support > 0.0 && support.is_finite()) {
        return Err(WakeError::InvalidArgument(format!("support radius must be positive (got {support})")));
    }
    if !x.iter().all(|c| c.is_finite()) {
        return Err(WakeError::NonFinite("potential evaluation point"));
    }
    let coarse = potential_pass(h, support, breaks, x, rule);
    let fine = potential_pass(h, support, breaks, x, &rule.refined());
    if !fine.iter().all(|c| c.is_finite()) {
        return Err(WakeError::NonFinite("potential gradient"));
    }
    let error = (fine - coarse).norm();
    let tolerance = rule.rel_tol * fine.norm() + rule.abs_tol;
    if error > tolerance {
        return Err(WakeError::Quadrature { estimate: error, tolerance });
    }
    Ok(PotentialGradient { value: fine, error })
}

/// Scalar version: `−∇N ∗ h` as a vector, with its error estimate.
pub fn newtonian_potential_gradient_scalar<H>(h: &H, support: f64, breaks: &[f64], x: &Vector3<f64>, rule: &PotentialRule) -> Result<(Vector3<f64>, f64)>
where
    H: Fn(&Vector3<f64>) -> f64 + ?Sized,
{
    let lifted = |y: &Vector3<f64>| Vector3::new(h(y), 0.0, 0.0);
    let g = newtonian_potential_gradient(&lifted, support, breaks, x, rule)?;
    Ok((g.value.row(0).transpose(), g.error))
}

/// Scalar `l`-periodic amplitude `h(t) = mean + Σ_k cos_k cos(2πkt/l) + sin_k sin(2πkt/l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Temporal {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Default for Temporal {
    fn default() -> Self {
        Self::steady()
    }
}

impl Temporal {
    pub fn steady() -> Self {
        Self { mean: 1.0, cos: vec![], sin: vec![] }
    }

    /// `1 + cos(2πt/l)`.
    pub fn raised_cosine() -> Self {
        Self { mean: 1.0, cos: vec![1.0], sin: vec![] }
    }

    pub fn value(&self, t: f64, period: f64) -> f64 {
        let w = 2.0 * PI * t / period;
        let mut v = self.mean;
        for (k, c) in self.cos.iter().enumerate() {
            v += c * ((k + 1) as f64 * w).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            v += s * ((k + 1) as f64 * w).sin();
        }
        v
    }

    pub fn is_steady(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|c| *c == 0.0)
    }

    /// Upper bound `|mean| + Σ(|cos_k| + |sin_k|)` of `sup|h|`.
    pub fn sup_bound(&self) -> f64 {
        self.mean.abs() + self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.cos.iter().chain(&self.sin).all(|c| c.is_finite())
    }
}

/// Spatial shape of one forcing term, built from the radial bump `χ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Spatial {
    /// `g = χ e` with `G = −∇N ∗ (χe)` (not compactly supported).
    Monopole { direction: [f64; 3] },
    /// `g = C∇χ = div(χC)`.
    Dipole { tensor: [[f64; 3]; 3] },
    /// `g = ∇×(χe)`, the dipole with `C = −[e]×`.
    Curl { axis: [f64; 3] },
}

impl Spatial {
    /// The tensor `C` of the dipole form (`None` for monopoles).
    pub fn dipole_tensor(&self) -> Option<Matrix3<f64>> {
        match self {
            Spatial::Monopole { .. } => None,
            Spatial::Dipole { tensor } => Some(Matrix3::from_fn(|i, j| tensor[i][j])),
            Spatial::Curl { axis } => Some(-hat(&Vector3::from(*axis))),
        }
    }

    pub fn monopole_direction(&self) -> Option<Vector3<f64>> {
        match self {
            Spatial::Monopole { direction } => Some(Vector3::from(*direction)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTerm {
    pub amplitude: f64,
    pub spatial: Spatial,
    #[serde(default)]
    pub temporal: Temporal,
}

/// A space-time point value of a forcing and of its divergence potential.
pub trait ForcingField: Sync {
    fn period(&self) -> f64;
    /// Radius of a ball containing the spatial support.
    fn support_radius(&self) -> f64;
    fn value(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64>;
}

/// `g(x, t) = Σ A_k h_k(t) s_k(x)` with compact support in `B_R`, `R ≤ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticForcing {
    pub period: f64,
    pub bump: Bump,
    pub terms: Vec<ForcingTerm>,
}

impl SyntheticForcing {
    pub fn new(period: f64, bump: Bump, terms: Vec<ForcingTerm>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(WakeError::InvalidArgument(format!("forcing period must be positive (got {period})")));
        }
        if !(bump.radius > 0.0 && bump.radius.is_finite()) {
            return Err(WakeError::InvalidArgument(format!("bump radius must be positive (got {})", bump.radius)));
        }
        if bump.radius > Cutoff::OUTER * (1.0 + 1e-12) {
            return Err(WakeError::Precondition(format!(
                "forcing support radius {} leaves B_2",
                bump.radius
            )));
        }
        for term in &terms {
            let finite = match &term.spatial {
                Spatial::Monopole { direction } => direction.iter().all(|c| c.is_finite()),
                Spatial::Dipole { tensor } => tensor.iter().flatten().all(|c| c.is_finite()),
                Spatial::Curl { axis } => axis.iter().all(|c| c.is_finite()),
            };
            if !finite || !term.amplitude.is_finite() || !term.temporal.is_finite() {
                return Err(WakeError::NonFinite("forcing term"));
            }
        }
        Ok(Self { period, bump, terms })
    }

    /// `A (1 + cos 2πt/l) ∇×(χ e₃)`.
    pub fn default_profile(amplitude: f64, period: f64) -> Result<Self> {
        Self::new(
            period,
            Bump::default(),
            vec![ForcingTerm {
                amplitude,
                spatial: Spatial::Curl { axis: [0.0, 0.0, 1.0] },
                temporal: Temporal::raised_cosine(),
            }],
        )
    }

    /// Steady net force `A χ e`.
    pub fn steady_force(amplitude: f64, direction: Vector3<f64>, period: f64) -> Result<Self> {
        Self::new(
            period,
            Bump::default(),
            vec![ForcingTerm {
                amplitude,
                spatial: Spatial::Monopole { direction: direction.into() },
                temporal: Temporal::steady(),
            }],
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn is_steady(&self) -> bool {
        self.terms.iter().all(|t| t.temporal.is_steady())
    }

    /// Same forcing with every amplitude multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude *= alpha;
        }
        out
    }

    /// The forcing delayed by `shift`: `g′(x, t) = g(x, t − shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        let w = 2.0 * PI * shift / self.period;
        for term in &mut out.terms {
            let n = term.temporal.cos.len().max(term.temporal.sin.len());
            term.temporal.cos.resize(n, 0.0);
            term.temporal.sin.resize(n, 0.0);
            for k in 0..n {
                let (c, s) = (term.temporal.cos[k], term.temporal.sin[k]);
                let (sn, cs) = ((k + 1) as f64 * w).sin_cos();
                // cos(k(θ−w)) = cos kθ cos kw + sin kθ sin kw
                term.temporal.cos[k] = c * cs - s * sn;
                term.temporal.sin[k] = s * cs + c * sn;
            }
        }
        out
    }

    /// Divergence potential `G = G₀ + G₁` with `g = div G`, `(div G)_i = ∂_j G_{ij}`.
    /// `G₀` of a radial monopole is the shell-theorem form of `−∇N ∗ (χe)`.
    pub fn potential(&self, x: &Vector3<f64>, t: f64) -> Matrix3<f64> {
        let r = x.norm();
        let chi = self.bump.value(r);
        let mut out = Matrix3::zeros();
        for term in &self.terms {
            let a = term.amplitude * term.temporal.value(t, self.period);
            if a == 0.0 {
                continue;
            }
            match &term.spatial {
                Spatial::Monopole { direction } => {
                    if r > 0.0 {
                        let e = Vector3::from(*direction);
                        out += e * x.transpose() * (a * self.bump.mass(r) / (4.0 * PI * r.powi(3)));
                    }
                }
                s => out += s.dipole_tensor().expect("dipole form") * (a * chi),
            }
        }
        out
    }

    /// Sampled `sup_{x,t} |g|` over the support (the forcing size `k_g`).
    pub fn sup_norm(&self) -> f64 {
        let rule = SphereRule::lebedev(50).expect("tabulated rule");
        let nt = if self.is_steady() { 1 } else { 64 };
        let mut best = 0.0f64;
        for it in 0..nt {
            let t = self.period * it as f64 / nt as f64;
            for k in 0..=80 {
                let r = self.bump.radius * k as f64 / 80.0;
                for u in &rule.points {
                    best = best.max(self.value(&(u * r), t).norm());
                }
            }
        }
        best
    }

    /// Sampled `sup_{x,t} |G|` over the ball `B_{4R}`.
    pub fn potential_sup(&self) -> f64 {
        let rule = SphereRule::lebedev(26).expect("tabulated rule");
        let nt = if self.is_steady() { 1 } else { 32 };
        let mut best = 0.0f64;
        for it in 0..nt {
            let t = self.period * it as f64 / nt as f64;
            for k in 0..=80 {
                let r = 4.0 * self.bump.radius * k as f64 / 80.0;
                for u in &rule.points {
                    best = best.max(self.potential(&(u * r), t).norm());
                }
            }
        }
        best
    }
}

impl ForcingField for SyntheticForcing {
    fn period(&self) -> f64 {
        self.period
    }

    fn support_radius(&self) -> f64 {
        self.bump.radius
    }

    fn value(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let r = x.norm();
        if r >= self.bump.radius {
            return Vector3::zeros();
        }
        let [chi, chi1, ..] = self.bump.derivatives(r);
        let grad = if r > 0.0 { x * (chi1 / r) } else { Vector3::zeros() };
        let mut out = Vector3::zeros();
        for term in &self.terms {
            let a = term.amplitude * term.temporal.value(t, self.period);
            if a == 0.0 {
                continue;
            }
            match &term.spatial {
                Spatial::Monopole { direction } => out += Vector3::from(*direction) * (a * chi),
                s => out += s.dipole_tensor().expect("dipole form") * grad * a,
            }
        }
        out
    }
}

/// The lift force density `f` of a rigid motion, viewed as a forcing.
#[derive(Debug, Clone)]
pub struct LiftForcing {
    pub spec: RigidMotionSpec,
}

impl ForcingField for LiftForcing {
    fn period(&self) -> f64 {
        self.spec.period()
    }

    fn support_radius(&self) -> f64 {
        Cutoff::OUTER
    }

    fn value(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        lift_force_density(&self.spec, x, t)
    }
}

/// Result of [`check_contract`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    /// Largest `|g|` found outside the declared support.
    pub support_violation: f64,
    /// Largest `|g(x, t+l) − g(x, t)|` relative to `sup|g|`.
    pub periodicity_defect: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples the support and periodicity contract a solver right-hand side needs.
pub fn check_contract(field: &dyn ForcingField, samples: usize, seed: u64) -> ContractReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, rs) = (field.period(), field.support_radius());
    let mut outside = 0.0f64;
    let mut defect = 0.0f64;
    let mut scale = 0.0f64;
    let unit = |rng: &mut ChaCha8Rng| {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi = rng.gen_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).sqrt();
        Vector3::new(s * phi.cos(), s * phi.sin(), z)
    };
    for _ in 0..samples {
        let t = rng.gen_range(0.0..l);
        let x = unit(&mut rng) * rng.gen_range(rs..4.0 * rs);
        outside = outside.max(field.value(&x, t).norm());
        let y = unit(&mut rng) * rng.gen_range(0.0..rs);
        let a = field.value(&y, t);
        let b = field.value(&y, t + l);
        scale = scale.max(a.norm());
        defect = defect.max((a - b).norm());
    }
    let periodicity_defect = if scale > 0.0 { defect / scale } else { defect };
    ContractReport {
        support_violation: outside,
        periodicity_defect,
        samples,
        pass: outside == 0.0 && periodicity_defect <= 1e-10,
    }
}
