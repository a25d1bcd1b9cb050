//! Time-periodic rigid motion of the body: translational velocity `η(t)` and
//! angular velocity `ω(t)` given as truncated Fourier series, the evolution
//! matrices of `dφ/dt = −ω(t) × φ`, and the wake-admissibility diagnostics.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WakeError};
use crate::quadrature::gauss_legendre;

/// Relative threshold used for the parallelism test `ω(t) ∥ ζ`.
pub const PARALLEL_TOL: f64 = 1e-8;

/// Growth ratio above which the sampled drift is flagged as unbounded.
pub const GROWTH_FLAG: f64 = 1.5;

/// `v(t) = Σ_k cos[k] cos(2πkt/l) + sin[k] sin(2πkt/l)`. The `k = 0` sine
/// coefficient is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries3 {
    pub cos: Vec<[f64; 3]>,
    pub sin: Vec<[f64; 3]>,
}

impl FourierSeries3 {
    pub fn zero() -> Self {
        Self {
            cos: vec![[0.0; 3]],
            sin: vec![[0.0; 3]],
        }
    }

    pub fn constant(v: Vector3<f64>) -> Self {
        Self {
            cos: vec![[v.x, v.y, v.z]],
            sin: vec![[0.0; 3]],
        }
    }

    /// Single harmonic `c cos(2πkt/l) + s sin(2πkt/l)` added to a mean.
    pub fn harmonic(mean: Vector3<f64>, k: usize, c: Vector3<f64>, s: Vector3<f64>) -> Self {
        let mut cos = vec![[0.0; 3]; k + 1];
        let mut sin = vec![[0.0; 3]; k + 1];
        cos[0] = [mean.x, mean.y, mean.z];
        cos[k] = [cos[k][0] + c.x, cos[k][1] + c.y, cos[k][2] + c.z];
        sin[k] = [s.x, s.y, s.z];
        Self { cos, sin }
    }

    fn len(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    fn coeff(v: &[[f64; 3]], k: usize) -> Vector3<f64> {
        v.get(k).map(|c| Vector3::new(c[0], c[1], c[2])).unwrap_or_else(Vector3::zeros)
    }

    pub fn cos_coeff(&self, k: usize) -> Vector3<f64> {
        Self::coeff(&self.cos, k)
    }

    pub fn sin_coeff(&self, k: usize) -> Vector3<f64> {
        if k == 0 {
            Vector3::zeros()
        } else {
            Self::coeff(&self.sin, k)
        }
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.cos_coeff(0)
    }

    pub fn value(&self, t: f64, period: f64) -> Vector3<f64> {
        let w = 2.0 * PI / period;
        let mut out = self.cos_coeff(0);
        for k in 1..self.len() {
            let (s, c) = (w * k as f64 * t).sin_cos();
            out += self.cos_coeff(k) * c + self.sin_coeff(k) * s;
        }
        out
    }

    pub fn derivative(&self, t: f64, period: f64) -> Vector3<f64> {
        let w = 2.0 * PI / period;
        let mut out = Vector3::zeros();
        for k in 1..self.len() {
            let wk = w * k as f64;
            let (s, c) = (wk * t).sin_cos();
            out += (self.sin_coeff(k) * c - self.cos_coeff(k) * s) * wk;
        }
        out
    }

    /// Analytic bound `Σ_k (|cos_k| + |sin_k|)` on `sup |v|`.
    pub fn sup_bound(&self) -> f64 {
        (0..self.len())
            .map(|k| self.cos_coeff(k).norm() + self.sin_coeff(k).norm())
            .sum()
    }

    /// Analytic bound on `sup |v′|`.
    pub fn derivative_bound(&self, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        (1..self.len())
            .map(|k| w * k as f64 * (self.cos_coeff(k).norm() + self.sin_coeff(k).norm()))
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        (1..self.len()).all(|k| self.cos_coeff(k) == Vector3::zeros() && self.sin_coeff(k) == Vector3::zeros())
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.mean() == Vector3::zeros()
    }

    /// All nonzero coefficient vectors.
    pub fn coefficient_vectors(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        for k in 0..self.len() {
            for v in [self.cos_coeff(k), self.sin_coeff(k)] {
                if v.norm() > 0.0 {
                    out.push(v);
                }
            }
        }
        out
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.cos.is_empty() {
            return Err(WakeError::InvalidArgument(format!("{name}.cos needs at least the k = 0 entry")));
        }
        let finite = self.cos.iter().chain(&self.sin).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(WakeError::NonFinite("Fourier coefficient"));
        }
        Ok(())
    }
}

/// Time-periodic rigid motion `(η, ω)` with period `l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidMotionSpec {
    period: f64,
    eta: FourierSeries3,
    omega: FourierSeries3,
    amplitude: f64,
}

impl RigidMotionSpec {
    pub fn new(period: f64, eta: FourierSeries3, omega: FourierSeries3) -> Result<Self> {
        if !period.is_finite() {
            return Err(WakeError::NonFinite("period"));
        }
        if period <= 0.0 {
            return Err(WakeError::InvalidArgument("period must be positive".into()));
        }
        eta.validate("eta")?;
        omega.validate("omega")?;
        let mut spec = Self {
            period,
            eta,
            omega,
            amplitude: 0.0,
        };
        spec.amplitude = spec.sampled_amplitude();
        Ok(spec)
    }

    /// Constant translation and rotation.
    pub fn steady(eta: Vector3<f64>, omega: Vector3<f64>, period: f64) -> Result<Self> {
        Self::new(period, FourierSeries3::constant(eta), FourierSeries3::constant(omega))
    }

    pub fn at_rest(period: f64) -> Result<Self> {
        Self::new(period, FourierSeries3::zero(), FourierSeries3::zero())
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eta_series(&self) -> &FourierSeries3 {
        &self.eta
    }

    pub fn omega_series(&self) -> &FourierSeries3 {
        &self.omega
    }

    pub fn eta(&self, t: f64) -> Vector3<f64> {
        self.eta.value(t, self.period)
    }

    pub fn omega(&self, t: f64) -> Vector3<f64> {
        self.omega.value(t, self.period)
    }

    pub fn eta_dot(&self, t: f64) -> Vector3<f64> {
        self.eta.derivative(t, self.period)
    }

    pub fn omega_dot(&self, t: f64) -> Vector3<f64> {
        self.omega.derivative(t, self.period)
    }

    /// `‖(η, ω)‖_{W^{1,∞}}`: the largest of `sup|η|, sup|ω|, sup|η′|, sup|ω′|`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Analytic Fourier bound on [`Self::amplitude`].
    pub fn amplitude_bound(&self) -> f64 {
        self.eta
            .sup_bound()
            .max(self.omega.sup_bound())
            .max(self.eta.derivative_bound(self.period))
            .max(self.omega.derivative_bound(self.period))
    }

    /// `sup_t |ω(t)|` by sampling.
    pub fn omega_sup(&self) -> f64 {
        sampled_sup(&|t: f64| self.omega(t).norm(), self.period)
    }

    /// True when neither `η` nor `ω` depends on time.
    pub fn is_autonomous(&self) -> bool {
        self.eta.is_constant() && self.omega.is_constant()
    }

    fn sampled_amplitude(&self) -> f64 {
        let l = self.period;
        let fs: [&dyn Fn(f64) -> f64; 4] = [
            &|t| self.eta(t).norm(),
            &|t| self.omega(t).norm(),
            &|t| self.eta_dot(t).norm(),
            &|t| self.omega_dot(t).norm(),
        ];
        fs.iter().map(|f| sampled_sup(f, l)).fold(0.0, f64::max)
    }

    /// RK4 step size that keeps `h·sup|ω|` small.
    fn max_step(&self) -> f64 {
        let w = self.omega.sup_bound();
        let mut h = self.period / 256.0;
        if w > 0.0 {
            h = h.min(0.01 / w);
        }
        h
    }
}

/// Sup of a smooth periodic function: dense sampling followed by golden-section
/// refinement around the best sample.
fn sampled_sup<F: Fn(f64) -> f64 + ?Sized>(f: &F, period: f64) -> f64 {
    let n = 4096;
    let dt = period / n as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        let t = i as f64 * dt;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = (best.0 - dt, best.0 + dt);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.1.max(fc).max(fd)
}

/// Skew matrix `[w]_×` with `[w]_× v = w × v`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Nearest orthogonal matrix (orthogonal polar factor).
pub fn project_orthogonal(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    u * vt
}

/// Axis-angle vector `θa` of a rotation matrix, stable near `θ = 0` and `θ = π`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = v.norm();
    let theta = sin.atan2(cos);
    if sin > 1e-6 {
        return v * (theta / sin);
    }
    if cos > 0.0 {
        // θ ≈ 0: log R ≈ skew part.
        return v;
    }
    // θ ≈ π: axis from the symmetric part R + I = 2aaᵀ (+ O(sin)).
    let b = (r + Matrix3::identity()) * 0.5;
    let k = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap_or(0);
    let mut a = b.column(k).into_owned() / b[(k, k)].max(1e-300).sqrt();
    a.normalize_mut();
    if a.dot(&v) < 0.0 {
        a = -a;
    }
    a * theta
}

/// Evolution matrix `Φ(t, s)` paired with the times it maps between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    pub matrix: Matrix3<f64>,
    pub t: f64,
    pub s: f64,
}

impl RotationMatrix {
    pub fn orthogonality_defect(&self) -> f64 {
        (self.matrix.transpose() * self.matrix - Matrix3::identity()).norm()
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }
}

/// One classical RK4 step for `Φ′ = −[ω(τ)]_× Φ`, together with the transported
/// translation `J′ = Φᵀ η` when `eta` is supplied.
fn rk4_step(
    spec: &RigidMotionSpec,
    tau: f64,
    h: f64,
    phi: &Matrix3<f64>,
    j: &Vector3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let f = |t: f64, p: &Matrix3<f64>| -> (Matrix3<f64>, Vector3<f64>) {
        (-hat(&spec.omega(t)) * p, p.transpose() * spec.eta(t))
    };
    let (k1, l1) = f(tau, phi);
    let (k2, l2) = f(tau + 0.5 * h, &(phi + k1 * (0.5 * h)));
    let (k3, l3) = f(tau + 0.5 * h, &(phi + k2 * (0.5 * h)));
    let (k4, l4) = f(tau + h, &(phi + k3 * h));
    (
        phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0),
        j + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0),
    )
}

fn march(
    spec: &RigidMotionSpec,
    from: f64,
    to: f64,
    phi: Matrix3<f64>,
    j: Vector3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let span = to - from;
    if span == 0.0 {
        return (phi, j);
    }
    let n = (span.abs() / spec.max_step()).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let (mut p, mut q) = (phi, j);
    for i in 0..n {
        let (np, nq) = rk4_step(spec, from + i as f64 * h, h, &p, &q);
        p = np;
        q = nq;
    }
    (p, q)
}

/// `Φ(t, s)`: solution of `dΦ/dt = −[ω(t)]_× Φ`, `Φ(s, s) = I`, by RK4 on
/// substeps of length at most `l/256`, projected back onto the orthogonal group.
pub fn evolution_matrix(spec: &RigidMotionSpec, t: f64, s: f64) -> Result<RotationMatrix> {
    if !t.is_finite() || !s.is_finite() {
        return Err(WakeError::NonFinite("evolution time"));
    }
    let (phi, _) = march(spec, s, t, Matrix3::identity(), Vector3::zeros());
    Ok(RotationMatrix {
        matrix: project_orthogonal(&phi),
        t,
        s,
    })
}

/// `Φ(t, s)` and `∫_s^t Φ(τ, s)ᵀ η(τ) dτ` by composite Gauss–Legendre
/// quadrature, marching RK4 between the quadrature nodes.
fn transported_translation(spec: &RigidMotionSpec, s: f64, t: f64, panels_per_period: usize) -> (Matrix3<f64>, Vector3<f64>) {
    let (gx, gw) = gauss_legendre(8);
    let n_panels = (((t - s) / spec.period) * panels_per_period as f64).ceil().max(1.0) as usize;
    let h = (t - s) / n_panels as f64;
    let mut phi = Matrix3::identity();
    let mut tau = s;
    let mut acc = Vector3::zeros();
    for p in 0..n_panels {
        let a = s + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            let node = a + 0.5 * h * (1.0 + x);
            phi = march(spec, tau, node, phi, Vector3::zeros()).0;
            tau = node;
            acc += phi.transpose() * spec.eta(node) * (0.5 * h * w);
        }
    }
    let phi_t = march(spec, tau, t, phi, Vector3::zeros()).0;
    (project_orthogonal(&phi_t), acc)
}

/// `∫_s^t {Φ(t, τ) η(τ) − ζ} dτ`.
pub fn wake_drift(spec: &RigidMotionSpec, s: f64, t: f64, zeta: &Vector3<f64>) -> Result<Vector3<f64>> {
    wake_drift_with_resolution(spec, s, t, zeta, 16)
}

/// [`wake_drift`] with an explicit number of Gauss panels per period.
pub fn wake_drift_with_resolution(
    spec: &RigidMotionSpec,
    s: f64,
    t: f64,
    zeta: &Vector3<f64>,
    panels_per_period: usize,
) -> Result<Vector3<f64>> {
    if !s.is_finite() || !t.is_finite() {
        return Err(WakeError::NonFinite("drift interval"));
    }
    if s > t {
        return Err(WakeError::Precondition(format!("wake drift needs s <= t (got s = {s}, t = {t})")));
    }
    if s == t {
        return Ok(Vector3::zeros());
    }
    let (phi_ts, integral) = transported_translation(spec, s, t, panels_per_period);
    Ok(phi_ts * integral - zeta * (t - s))
}

/// Read-only cache of the evolution matrices over one period plus the
/// monodromy `Φ(l, 0)`, giving `Φ(t, s)` and the drift `∫_s^t Φ(t,τ)η(τ)dτ`
/// for arbitrary `t, s` via periodicity.
#[derive(Debug, Clone)]
pub struct RotationPath {
    spec: RigidMotionSpec,
    step: f64,
    phi: Vec<Matrix3<f64>>,
    j: Vec<Vector3<f64>>,
    monodromy_axis_angle: Vector3<f64>,
}

impl RotationPath {
    pub fn new(spec: &RigidMotionSpec) -> Self {
        let nodes = 1024;
        let step = spec.period / nodes as f64;
        let mut phi = Vec::with_capacity(nodes + 1);
        let mut j = Vec::with_capacity(nodes + 1);
        let (mut p, mut q) = (Matrix3::identity(), Vector3::zeros());
        phi.push(p);
        j.push(q);
        for i in 0..nodes {
            let (np, nq) = march(spec, i as f64 * step, (i + 1) as f64 * step, p, q);
            p = project_orthogonal(&np);
            q = nq;
            phi.push(p);
            j.push(q);
        }
        let monodromy_axis_angle = rotation_log(&phi[nodes]);
        Self {
            spec: spec.clone(),
            step,
            phi,
            j,
            monodromy_axis_angle,
        }
    }

    pub fn spec(&self) -> &RigidMotionSpec {
        &self.spec
    }

    pub fn monodromy(&self) -> Matrix3<f64> {
        self.phi[self.phi.len() - 1]
    }

    fn monodromy_power(&self, n: i64) -> Matrix3<f64> {
        if n == 0 {
            return Matrix3::identity();
        }
        *Rotation3::new(self.monodromy_axis_angle * n as f64).matrix()
    }

    /// `Σ_{k=0}^{n−1} (Mᵏ)ᵀ v` for the monodromy `M`, `n ≥ 0`.
    fn monodromy_sum(&self, n: i64, v: &Vector3<f64>) -> Vector3<f64> {
        debug_assert!(n >= 0);
        let theta = self.monodromy_axis_angle.norm();
        let nf = n as f64;
        if theta < 1e-14 {
            return v * nf;
        }
        let a = self.monodromy_axis_angle / theta;
        let par = a * a.dot(v);
        let perp = v - par;
        let alpha = -theta;
        let half = 0.5 * alpha;
        let (sc, ss) = if half.sin().abs() < 1e-12 {
            (nf, 0.0)
        } else {
            let f = (nf * half).sin() / half.sin();
            (f * ((nf - 1.0) * half).cos(), f * ((nf - 1.0) * half).sin())
        };
        par * nf + perp * sc + a.cross(&perp) * ss
    }

    fn within_period(&self, tau: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let i = ((tau / self.step).floor() as usize).min(self.phi.len() - 2);
        let t0 = i as f64 * self.step;
        march(&self.spec, t0, tau, self.phi[i], self.j[i])
    }

    fn split(&self, t: f64) -> (i64, f64) {
        let l = self.spec.period;
        let n = (t / l).floor();
        let mut tau = t - n * l;
        let mut n = n as i64;
        if tau >= l {
            tau -= l;
            n += 1;
        }
        (n, tau.max(0.0))
    }

    /// `Φ(t, 0)` and `J(t) = ∫_0^t Φ(τ, 0)ᵀ η(τ) dτ`.
    pub fn from_origin(&self, t: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let (n, tau) = self.split(t);
        let (p_tau, j_tau) = self.within_period(tau);
        let mn = self.monodromy_power(n);
        let jl = self.j[self.j.len() - 1];
        let j_nl = if n >= 0 {
            self.monodromy_sum(n, &jl)
        } else {
            -(mn.transpose() * self.monodromy_sum(-n, &jl))
        };
        (p_tau * mn, j_nl + mn.transpose() * j_tau)
    }

    /// `Φ(t, s)`.
    pub fn evolution(&self, t: f64, s: f64) -> Matrix3<f64> {
        let (pt, _) = self.from_origin(t);
        let (ps, _) = self.from_origin(s);
        pt * ps.transpose()
    }

    /// `(Φ(t, s), ∫_s^t Φ(t, τ) η(τ) dτ)`.
    pub fn evolution_and_drift(&self, t: f64, s: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let (pt, jt) = self.from_origin(t);
        let (ps, js) = self.from_origin(s);
        (pt * ps.transpose(), pt * (jt - js))
    }

    /// `∫_s^t {Φ(t, τ) η(τ) − ζ} dτ` from the cache.
    pub fn wake_drift(&self, s: f64, t: f64, zeta: &Vector3<f64>) -> Vector3<f64> {
        self.evolution_and_drift(t, s).1 - zeta * (t - s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub s: f64,
    pub t: f64,
    pub drift: [f64; 3],
}

/// Finite-window diagnosis of the wake condition for a candidate `ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeReport {
    pub zeta: [f64; 3],
    #[serde(rename = "M")]
    pub m_estimate: f64,
    pub parallel_ok: bool,
    /// Searched range of `t − s`.
    pub window: [f64; 2],
    pub growth_ratio: f64,
    /// Growth diagnostic verdict; a sampling heuristic, not a proof of boundedness.
    pub bounded: bool,
    pub samples: Vec<DriftSample>,
}

impl WakeReport {
    pub fn admissible(&self) -> bool {
        self.bounded && self.parallel_ok
    }
}

/// Checks `sup_t |ω(t) × ζ| ≤ 10⁻⁸ max(1, |ζ|) sup|ω|` (always true for `ζ = 0`).
pub fn omega_parallel_to(spec: &RigidMotionSpec, zeta: &Vector3<f64>) -> bool {
    let zn = zeta.norm();
    if zn == 0.0 {
        return true;
    }
    let cross_sup = sampled_sup(&|t: f64| spec.omega(t).cross(zeta).norm(), spec.period);
    cross_sup <= PARALLEL_TOL * zn.max(1.0) * spec.omega_sup()
}

/// Samples the drift over `s ∈ [0, l)`, `t − s ∈ [0, window]`.
pub fn wake_constant(spec: &RigidMotionSpec, zeta: &Vector3<f64>, window: f64) -> Result<WakeReport> {
    wake_constant_sampled(spec, zeta, window, 16, 64)
}

/// [`wake_constant`] with explicit sample counts (`s` samples per period,
/// `t − s` samples per period).
pub fn wake_constant_sampled(
    spec: &RigidMotionSpec,
    zeta: &Vector3<f64>,
    window: f64,
    s_samples: usize,
    lag_samples_per_period: usize,
) -> Result<WakeReport> {
    let l = spec.period;
    if !window.is_finite() || window <= 0.0 {
        return Err(WakeError::InvalidArgument("degenerate window".into()));
    }
    if window < 2.0 * l {
        return Err(WakeError::Precondition(format!("window {window} shorter than two periods")));
    }
    let path = RotationPath::new(spec);
    let n_lag = ((window / l) * lag_samples_per_period as f64).ceil() as usize;
    let mut samples = Vec::with_capacity(s_samples * (n_lag + 1));
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for i in 0..s_samples {
        let s = l * i as f64 / s_samples as f64;
        let (ps, js) = path.from_origin(s);
        for k in 0..=n_lag {
            let lag = window * k as f64 / n_lag as f64;
            let t = s + lag;
            let (pt, jt) = path.from_origin(t);
            let _ = ps;
            let d = pt * (jt - js) - zeta * lag;
            let m = d.norm();
            if lag <= 0.5 * window {
                first = first.max(m);
            } else {
                second = second.max(m);
            }
            samples.push(DriftSample { s, t, drift: [d.x, d.y, d.z] });
        }
    }
    let m_estimate = first.max(second);
    let growth_ratio = if first > 1e-12 {
        second / first
    } else if second > 1e-12 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(WakeReport {
        zeta: [zeta.x, zeta.y, zeta.z],
        m_estimate,
        parallel_ok: omega_parallel_to(spec, zeta),
        window: [0.0, window],
        growth_ratio,
        bounded: growth_ratio <= GROWTH_FLAG,
        samples,
    })
}

/// Which admissible family a candidate `ζ` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateCase {
    NoTranslation,
    NoRotation,
    CommonAxis,
    ZeroMeanFixedAxis,
}

fn all_parallel(vs: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let first = vs.iter().find(|v| v.norm() > 0.0)?;
    let e = first.normalize();
    vs.iter()
        .all(|v| v.cross(&e).norm() <= 1e-12 * v.norm())
        .then_some(e)
}

/// Candidate `ζ` for the admissible families: the mean of `η` when `η = 0`,
/// `ω = 0`, or both share a constant axis; `(1/l)∫₀^l Φ(t,0)ᵀη(t)dt` when `ω`
/// has a fixed direction and zero mean.
pub fn candidate_zeta(spec: &RigidMotionSpec) -> Result<(Vector3<f64>, CandidateCase)> {
    let eta = spec.eta_series();
    let omega = spec.omega_series();
    if eta.is_zero() {
        return Ok((Vector3::zeros(), CandidateCase::NoTranslation));
    }
    if omega.is_zero() {
        return Ok((eta.mean(), CandidateCase::NoRotation));
    }
    let mut all = eta.coefficient_vectors();
    all.extend(omega.coefficient_vectors());
    if all_parallel(&all).is_some() {
        return Ok((eta.mean(), CandidateCase::CommonAxis));
    }
    let omega_axis = all_parallel(&omega.coefficient_vectors());
    let mean_scale = omega.sup_bound();
    if omega_axis.is_some() && omega.mean().norm() <= 1e-12 * mean_scale {
        let l = spec.period();
        let (_, integral) = transported_translation(spec, 0.0, l, 32);
        return Ok((integral / l, CandidateCase::ZeroMeanFixedAxis));
    }
    Err(WakeError::NoCandidate(
        "rotation neither vanishes, shares a constant axis with the translation, nor has a fixed axis with zero mean".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rodrigues(omega: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
        // exp(−dt [ω]_×)
        let th = omega.norm() * dt;
        if th == 0.0 {
            return Matrix3::identity();
        }
        let k = hat(&(omega / omega.norm()));
        Matrix3::identity() - k * th.sin() + k * k * (1.0 - th.cos())
    }

    #[test]
    fn zero_rotation_gives_identity() {
        let spec = RigidMotionSpec::steady(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), 1.0).unwrap();
        let phi = evolution_matrix(&spec, 3.7, -1.2).unwrap();
        assert!((phi.matrix - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn constant_spin_quarter_turn() {
        let w = Vector3::new(0.0, 0.0, 2.0 * PI);
        let spec = RigidMotionSpec::steady(Vector3::zeros(), w, 1.0).unwrap();
        let phi = evolution_matrix(&spec, 0.25, 0.0).unwrap();
        let e1 = phi.matrix * Vector3::x();
        assert!((e1 - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-9, "{e1}");
        assert!((phi.matrix - rodrigues(&w, 0.25)).norm() < 1e-9);
    }

    #[test]
    fn non_finite_times_rejected() {
        let spec = RigidMotionSpec::at_rest(1.0).unwrap();
        assert!(matches!(evolution_matrix(&spec, f64::NAN, 0.0), Err(WakeError::NonFinite(_))));
        assert!(RigidMotionSpec::at_rest(0.0).is_err());
    }

    #[test]
    fn drift_closed_form_without_rotation() {
        let zeta = Vector3::new(0.3, 0.0, 0.0);
        let eps = 0.2;
        let eta = FourierSeries3::harmonic(zeta, 1, Vector3::new(eps, 0.0, 0.0), Vector3::zeros());
        let spec = RigidMotionSpec::new(1.0, eta, FourierSeries3::zero()).unwrap();
        let (s, t) = (0.15, 2.4);
        let d = wake_drift(&spec, s, t, &zeta).unwrap();
        let expect = eps / (2.0 * PI) * ((2.0 * PI * t).sin() - (2.0 * PI * s).sin());
        assert!((d.x - expect).abs() < 1e-12 && d.y.abs() < 1e-14, "{d}");
        assert!(wake_drift(&spec, 1.0, 0.5, &zeta).is_err());
    }

    #[test]
    fn amplitude_matches_single_harmonic_bound() {
        let eta = FourierSeries3::harmonic(Vector3::zeros(), 1, Vector3::new(0.5, 0.0, 0.0), Vector3::zeros());
        let spec = RigidMotionSpec::new(1.0, eta, FourierSeries3::zero()).unwrap();
        // |η′| has sup 2π·0.5
        assert!((spec.amplitude() - PI).abs() < 1e-8);
        assert!((spec.amplitude_bound() - PI).abs() < 1e-12);
    }

    #[test]
    fn rotation_path_agrees_with_direct_solve() {
        let omega = FourierSeries3::harmonic(
            Vector3::new(0.3, -0.2, 0.4),
            1,
            Vector3::new(0.5, 0.1, 0.0),
            Vector3::new(0.0, 0.7, -0.3),
        );
        let eta = FourierSeries3::harmonic(Vector3::new(0.2, 0.0, 1.0), 2, Vector3::new(0.1, 0.3, 0.0), Vector3::zeros());
        let spec = RigidMotionSpec::new(1.3, eta, omega).unwrap();
        let path = RotationPath::new(&spec);
        let zeta = Vector3::new(0.1, 0.2, 0.3);
        for &(t, s) in &[(0.4, 0.1), (5.1, -2.3), (-0.7, -4.05), (12.0, 0.0)] {
            let direct = evolution_matrix(&spec, t, s).unwrap().matrix;
            assert!((path.evolution(t, s) - direct).norm() < 1e-9, "t={t} s={s}");
            if t > s {
                let d1 = wake_drift(&spec, s, t, &zeta).unwrap();
                let d2 = path.wake_drift(s, t, &zeta);
                assert!((d1 - d2).norm() < 1e-8, "{d1} vs {d2}");
            }
        }
    }

    #[test]
    fn candidate_for_common_axis_is_mean_eta() {
        let e = Vector3::new(0.0, 0.0, 1.0);
        let spec = RigidMotionSpec::steady(e * 0.7, e * 2.0, 1.0).unwrap();
        let (z, case) = candidate_zeta(&spec).unwrap();
        assert_eq!(case, CandidateCase::CommonAxis);
        assert!((z - e * 0.7).norm() < 1e-15);
    }

    #[test]
    fn candidate_rejects_generic_motion() {
        let spec = RigidMotionSpec::steady(Vector3::x(), Vector3::z(), 1.0).unwrap();
        assert!(matches!(candidate_zeta(&spec), Err(WakeError::NoCandidate(_))));
    }

    #[test]
    fn zero_translation_candidate_is_zero() {
        let omega = FourierSeries3::harmonic(Vector3::new(1.0, 2.0, 0.0), 1, Vector3::z(), Vector3::zeros());
        let spec = RigidMotionSpec::new(1.0, FourierSeries3::zero(), omega).unwrap();
        assert_eq!(candidate_zeta(&spec).unwrap().0, Vector3::zeros());
    }

    #[test]
    fn rotation_log_round_trips() {
        for v in [
            Vector3::zeros(),
            Vector3::new(1e-9, 0.0, -2e-9),
            Vector3::new(0.3, -1.2, 0.4),
            Vector3::new(0.0, 0.0, PI - 1e-9),
            Vector3::new(1.0, 1.0, 0.0).normalize() * PI,
        ] {
            let r = *Rotation3::new(v).matrix();
            let back = *Rotation3::new(rotation_log(&r)).matrix();
            assert!((back - r).norm() < 1e-12, "{v}");
        }
    }

    #[test]
    fn window_preconditions() {
        let spec = RigidMotionSpec::at_rest(1.0).unwrap();
        assert!(wake_constant(&spec, &Vector3::zeros(), 1.5).is_err());
        assert!(wake_constant(&spec, &Vector3::zeros(), 0.0).is_err());
    }
}
