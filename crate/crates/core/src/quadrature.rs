//! Quadrature building blocks: Gauss–Legendre and Gauss–Kronrod panels, a
//! globally adaptive 1-D integrator, and spherical rules.

use std::collections::BinaryHeap;

use nalgebra::Vector3;

use crate::error::{Result, WakeError};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A Gauss–Kronrod pair on `[-1, 1]`. Every node carries its Kronrod weight
/// and, for nodes shared with the embedded Gauss rule, the Gauss weight.
#[derive(Debug, Clone)]
pub struct KronrodRule {
    pub nodes: Vec<f64>,
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
}

impl KronrodRule {
    /// 7-point Kronrod extension of the 3-point Gauss rule.
    pub fn k7() -> Self {
        let x = [0.960_491_268_708_020_3, 0.774_596_669_241_483_4, 0.434_243_749_346_802_6];
        let wk = [
            0.104_656_226_026_467_26,
            0.268_488_089_868_333_44,
            0.401_397_414_775_962_2,
            0.450_916_538_658_474_1,
        ];
        let wg = [0.0, 5.0 / 9.0, 0.0, 8.0 / 9.0];
        Self::symmetric(&x, &wk, &wg)
    }

    /// 15-point Kronrod extension of the 7-point Gauss rule.
    pub fn k15() -> Self {
        let x = [
            0.991_455_371_120_812_6,
            0.949_107_912_342_758_5,
            0.864_864_423_359_769_1,
            0.741_531_185_599_394_4,
            0.586_087_235_467_691_1,
            0.405_845_151_377_397_2,
            0.207_784_955_007_898_5,
        ];
        let wk = [
            0.022_935_322_010_529_225,
            0.063_092_092_629_978_55,
            0.104_790_010_322_250_18,
            0.140_653_259_715_525_92,
            0.169_004_726_639_267_9,
            0.190_350_578_064_785_4,
            0.204_432_940_075_298_9,
            0.209_482_141_084_727_83,
        ];
        let wg = [
            0.0,
            0.129_484_966_168_869_7,
            0.0,
            0.279_705_391_489_276_7,
            0.0,
            0.381_830_050_505_118_9,
            0.0,
            0.417_959_183_673_469_4,
        ];
        Self::symmetric(&x, &wk, &wg)
    }

    fn symmetric(pos: &[f64], wk: &[f64], wg: &[f64]) -> Self {
        let mut nodes = Vec::new();
        let mut kronrod = Vec::new();
        let mut gauss = Vec::new();
        for i in 0..pos.len() {
            nodes.push(-pos[i]);
            kronrod.push(wk[i]);
            gauss.push(wg[i]);
        }
        nodes.push(0.0);
        kronrod.push(wk[pos.len()]);
        gauss.push(wg[pos.len()]);
        for i in (0..pos.len()).rev() {
            nodes.push(pos[i]);
            kronrod.push(wk[i]);
            gauss.push(wg[i]);
        }
        Self { nodes, kronrod, gauss }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the pair to `[a, b]`, returning `(kronrod, gauss)` estimates.
    pub fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut k = 0.0;
        let mut g = 0.0;
        for i in 0..self.nodes.len() {
            let v = f(c + h * self.nodes[i]);
            k += self.kronrod[i] * v;
            g += self.gauss[i] * v;
        }
        (k * h, g * h)
    }

    /// Kronrod estimate with the QUADPACK error heuristic
    /// `resasc · min(1, (200 |K − G| / resasc)^{3/2})`.
    pub fn estimate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut vals = [0.0f64; 31];
        let n = self.nodes.len();
        let (mut k, mut g) = (0.0, 0.0);
        for i in 0..n {
            let v = f(c + h * self.nodes[i]);
            vals[i] = v;
            k += self.kronrod[i] * v;
            g += self.gauss[i] * v;
        }
        let mean = 0.5 * k;
        let resasc: f64 = (0..n).map(|i| self.kronrod[i] * (vals[i] - mean).abs()).sum::<f64>() * h.abs();
        let diff = ((k - g) * h).abs();
        let err = if resasc > 0.0 && diff > 0.0 {
            resasc * (200.0 * diff / resasc).powf(1.5).min(1.0)
        } else {
            diff
        };
        (k * h, err.max(50.0 * f64::EPSILON * (k * h).abs()))
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integrator.
#[derive(Debug, Clone)]
pub struct Adaptive {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
    rule: KronrodRule,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self::new(1e-10, 0.0)
    }
}

impl Adaptive {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            max_segments: 4000,
            rule: KronrodRule::k15(),
        }
    }

    pub fn with_max_segments(mut self, n: usize) -> Self {
        self.max_segments = n;
        self
    }

    fn segment<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> Segment {
        let (value, error) = self.rule.estimate(a, b, &mut *f);
        Segment { a, b, value, error }
    }

    /// Integrates over `[a, b]`, subdividing at the given interior breakpoints first.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        breaks: &[f64],
    ) -> Result<Integral> {
        if breaks.len() < 2 {
            return Err(WakeError::InvalidArgument("need at least two breakpoints".into()));
        }
        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                heap.push(self.segment(w[0], w[1], &mut f));
                evaluations += self.rule.len();
            }
        }
        loop {
            let (value, error) = heap
                .iter()
                .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target || heap.len() >= self.max_segments {
                if error > target && error > 10.0 * target {
                    return Err(WakeError::Quadrature {
                        estimate: error,
                        tolerance: target,
                    });
                }
                return Ok(Integral {
                    value,
                    error,
                    evaluations,
                });
            }
            let worst = heap.pop().expect("heap is never empty here");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Segment can no longer be split in floating point.
                heap.push(Segment { error: 0.0, ..worst });
                continue;
            }
            heap.push(self.segment(worst.a, mid, &mut f));
            heap.push(self.segment(mid, worst.b, &mut f));
            evaluations += 2 * self.rule.len();
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        self.integrate_with_breaks(f, &[a, b])
    }

    /// Integrates over `[a, ∞)` via `x = a + scale·(u / (1 − u))²`, which keeps
    /// algebraic tails down to `x^{−3/2}` regular at `u = 1`. Finite
    /// breakpoints (`> a`) are mapped into the unit interval.
    pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        a: f64,
        scale: f64,
        breaks: &[f64],
    ) -> Result<Integral> {
        let mut ub = vec![0.0];
        for &b in breaks {
            if b > a {
                let y = ((b - a) / scale).sqrt();
                ub.push(y / (1.0 + y));
            }
        }
        ub.push(1.0);
        ub.sort_by(f64::total_cmp);
        ub.dedup();
        self.integrate_with_breaks(
            |u| {
                if u >= 1.0 {
                    return 0.0;
                }
                let om = 1.0 - u;
                let w = u / om;
                let v = f(a + scale * w * w);
                if v == 0.0 {
                    0.0
                } else {
                    v * 2.0 * scale * w / (om * om)
                }
            },
            &ub,
        )
    }
}

/// Result of a vector-valued adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct VecIntegral {
    pub value: Vec<f64>,
    /// Euclidean norm of the per-component error estimates.
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct VecSegment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

/// Globally adaptive Gauss–Kronrod (7/15) for integrands with `dim`
/// components. The integrand writes its values into the provided slice. The
/// tolerance applies to the Euclidean norm; the result is returned even when
/// the segment budget runs out (`converged = false`).
#[derive(Debug, Clone)]
pub struct AdaptiveVec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
    rule: KronrodRule,
}

impl AdaptiveVec {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            max_segments: 200,
            rule: KronrodRule::k15(),
        }
    }

    pub fn with_max_segments(mut self, n: usize) -> Self {
        self.max_segments = n.max(1);
        self
    }

    fn segment<F: FnMut(f64, &mut [f64])>(&self, a: f64, b: f64, dim: usize, f: &mut F, buf: &mut [f64], vals: &mut [f64]) -> VecSegment {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let n = self.rule.nodes.len();
        let mut k = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for i in 0..n {
            f(c + h * self.rule.nodes[i], buf);
            for d in 0..dim {
                let v = buf[d];
                vals[i * dim + d] = v;
                k[d] += self.rule.kronrod[i] * v;
                g[d] += self.rule.gauss[i] * v;
            }
        }
        let mut err2 = 0.0;
        for d in 0..dim {
            let mean = 0.5 * k[d];
            let resasc: f64 = (0..n).map(|i| self.rule.kronrod[i] * (vals[i * dim + d] - mean).abs()).sum::<f64>() * h.abs();
            let diff = ((k[d] - g[d]) * h).abs();
            let e = if resasc > 0.0 && diff > 0.0 {
                resasc * (200.0 * diff / resasc).powf(1.5).min(1.0)
            } else {
                diff
            };
            let e = e.max(50.0 * f64::EPSILON * (k[d] * h).abs());
            err2 += e * e;
            k[d] *= h;
        }
        VecSegment { a, b, value: k, error: err2.sqrt() }
    }

    /// Integrates over consecutive breakpoints (at least two).
    pub fn integrate_with_breaks<F: FnMut(f64, &mut [f64])>(&self, dim: usize, mut f: F, breaks: &[f64]) -> VecIntegral {
        let n = self.rule.nodes.len();
        let mut buf = vec![0.0; dim];
        let mut vals = vec![0.0; dim * n];
        let mut segs: Vec<VecSegment> = Vec::new();
        let mut evaluations = 0;
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                segs.push(self.segment(w[0], w[1], dim, &mut f, &mut buf, &mut vals));
                evaluations += n;
            }
        }
        let total = |segs: &[VecSegment]| {
            let mut v = vec![0.0; dim];
            let mut e = 0.0;
            for s in segs {
                for d in 0..dim {
                    v[d] += s.value[d];
                }
                e += s.error;
            }
            (v, e)
        };
        let max_segments = self.max_segments.max(segs.len());
        loop {
            let (value, error) = total(&segs);
            let norm = value.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = self.abs_tol.max(self.rel_tol * norm);
            if error <= target || segs.len() >= max_segments || segs.is_empty() {
                return VecIntegral {
                    value,
                    error,
                    evaluations,
                    converged: error <= target,
                };
            }
            let worst = (0..segs.len())
                .max_by(|&i, &j| segs[i].error.total_cmp(&segs[j].error))
                .expect("non-empty");
            let s = segs.swap_remove(worst);
            let mid = 0.5 * (s.a + s.b);
            if mid <= s.a || mid >= s.b {
                segs.push(VecSegment { error: 0.0, ..s });
                continue;
            }
            segs.push(self.segment(s.a, mid, dim, &mut f, &mut buf, &mut vals));
            segs.push(self.segment(mid, s.b, dim, &mut f, &mut buf, &mut vals));
            evaluations += 2 * n;
        }
    }

    /// `[a, ∞)` through the same map as [`Adaptive::integrate_to_infinity`].
    pub fn integrate_to_infinity<F: FnMut(f64, &mut [f64])>(&self, dim: usize, mut f: F, a: f64, scale: f64, breaks: &[f64]) -> VecIntegral {
        let mut ub = vec![0.0];
        for &b in breaks {
            if b > a {
                let y = ((b - a) / scale).sqrt();
                ub.push(y / (1.0 + y));
            }
        }
        ub.push(1.0);
        ub.sort_by(f64::total_cmp);
        ub.dedup();
        self.integrate_with_breaks(
            dim,
            |u, out: &mut [f64]| {
                if u >= 1.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let om = 1.0 - u;
                let w = u / om;
                f(a + scale * w * w, out);
                let jac = 2.0 * scale * w / (om * om);
                out.iter_mut().for_each(|o| *o *= jac);
            },
            &ub,
        )
    }
}

/// Weighted point set on the unit sphere; weights sum to one.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

fn octahedral_orbit(a: f64, b: f64, c: f64) -> Vec<Vector3<f64>> {
    let mut out: Vec<Vector3<f64>> = Vec::new();
    let perms = [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ];
    for p in perms {
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    let v = Vector3::new(sx * p[0], sy * p[1], sz * p[2]);
                    if !out.iter().any(|w| (w - v).norm() < 1e-12) {
                        out.push(v);
                    }
                }
            }
        }
    }
    out
}

impl SphereRule {
    /// Lebedev rules of 6, 14, 26 or 50 points (exact to degree 3, 5, 7, 11).
    pub fn lebedev(n: usize) -> Result<Self> {
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let s3 = 1.0 / 3f64.sqrt();
        let orbits: Vec<(Vec<Vector3<f64>>, f64)> = match n {
            6 => vec![(octahedral_orbit(1.0, 0.0, 0.0), 1.0 / 6.0)],
            14 => vec![
                (octahedral_orbit(1.0, 0.0, 0.0), 1.0 / 15.0),
                (octahedral_orbit(s3, s3, s3), 3.0 / 40.0),
            ],
            26 => vec![
                (octahedral_orbit(1.0, 0.0, 0.0), 1.0 / 21.0),
                (octahedral_orbit(s2, s2, 0.0), 4.0 / 105.0),
                (octahedral_orbit(s3, s3, s3), 9.0 / 280.0),
            ],
            50 => {
                let l = 1.0 / 11f64.sqrt();
                let m = 3.0 / 11f64.sqrt();
                vec![
                    (octahedral_orbit(1.0, 0.0, 0.0), 4.0 / 315.0),
                    (octahedral_orbit(s2, s2, 0.0), 64.0 / 2835.0),
                    (octahedral_orbit(s3, s3, s3), 27.0 / 1280.0),
                    (octahedral_orbit(l, l, m), 14641.0 / 725_760.0),
                ]
            }
            _ => {
                return Err(WakeError::InvalidArgument(format!(
                    "no Lebedev rule with {n} points (use 6, 14, 26 or 50)"
                )))
            }
        };
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (pts, w) in orbits {
            for p in pts {
                points.push(p);
                weights.push(w);
            }
        }
        debug_assert_eq!(points.len(), n);
        Ok(Self { points, weights })
    }

    /// Product rule: Gauss–Legendre in `cos θ` times the trapezoid rule in `φ`,
    /// with the pole along `axis`.
    pub fn product(n_theta: usize, n_phi: usize, axis: &Vector3<f64>) -> Self {
        let frame = orthonormal_frame(axis);
        let (u, wu) = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ci, wi) in u.iter().zip(&wu) {
            let st = (1.0 - ci * ci).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_phi as f64;
                let local = Vector3::new(st * phi.cos(), st * phi.sin(), *ci);
                points.push(frame * local);
                weights.push(wi / (2.0 * n_phi as f64));
            }
        }
        Self { points, weights }
    }

    /// Returns the rule expressed in a frame whose third axis is `axis`.
    pub fn rotated_to(&self, axis: &Vector3<f64>) -> Self {
        let frame = orthonormal_frame(axis);
        Self {
            points: self.points.iter().map(|p| frame * p).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rotation whose third column is the unit vector along `axis` (the identity
/// for a zero axis).
pub fn orthonormal_frame(axis: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    let n = axis.norm();
    if n == 0.0 {
        return nalgebra::Matrix3::identity();
    }
    let e3 = axis / n;
    if (e3 - Vector3::z()).norm() < 1e-14 {
        return nalgebra::Matrix3::identity();
    }
    let helper = if e3.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - e3 * e3.dot(&helper)).normalize();
    let e2 = e3.cross(&e1);
    nalgebra::Matrix3::from_columns(&[e1, e2, e3])
}
