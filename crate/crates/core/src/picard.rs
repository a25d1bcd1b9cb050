//! Fixed-point solution of `v = Sg + Λ(v⊗v)` in the weighted space `X_{1,ζ}`
//! and the pointwise decay diagnostics of the converged field.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::duhamel::{LambdaMode, LambdaOperator, OperatorOutput, QuadratureSpec, SyntheticDuhamel};
use crate::error::{Result, WakeError};
use crate::forcing::SyntheticForcing;
use crate::rigid_motion::{wake_constant, RigidMotionSpec, RotationPath, WakeReport};
use crate::weights::{FieldGrid, GridSpec, WeightedField};

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// `Sg = 0`, so `v = 0` after one step.
    ZeroForcing,
    Converged,
    /// An increment failed to shrink (`q ≥ 1`): forcing too large.
    NonContraction,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Relative increment `[v_{n+1} − v_n] / [v_{n+1}]` that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50 }
    }
}

/// Iteration history and the fitted constants of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct PicardState {
    pub amplitude: f64,
    pub zeta: [f64; 3],
    /// `k_g = sup |g|`.
    pub k_g: f64,
    pub c0_fit: f64,
    pub c1_fit: f64,
    /// `[Sg]_{1,ζ}` with its quadrature and time-tail error bounds.
    pub linear_norm: f64,
    pub linear_error: f64,
    pub linear_tail_error: f64,
    /// `[v_n]_{1,ζ}` for `n = 0, 1, …`.
    pub norms: Vec<f64>,
    /// `[v_{n+1} − v_n]_{1,ζ}`.
    pub increments: Vec<f64>,
    /// `q_n = increments[n] / increments[n−1]`.
    pub ratios: Vec<f64>,
    /// `[ΛG]_{1,ζ} / [G]_{2,ζ}` for `G = v_n⊗v_n`.
    pub lambda_ratios: Vec<f64>,
    pub stop: StopReason,
    pub converged: bool,
    pub tol: f64,
    /// `[v − Sg − Λ(v⊗v)]_{1,ζ} / [v]_{1,ζ}` for the returned `v`.
    pub residual: f64,
    /// `(1 − √(1 − 4C₀C₁k_g)) / (2C₁)` when the discriminant is positive.
    pub ball_radius: Option<f64>,
    /// `[v]_{1,ζ} / ball_radius`.
    pub ball_ratio: Option<f64>,
    /// A priori Lipschitz constant `2C₁[v]` of `v ↦ Λ(v⊗v)` at the solution.
    pub lipschitz: f64,
    #[serde(skip)]
    pub linear: WeightedField,
    #[serde(skip)]
    pub iterates: Vec<WeightedField>,
}

impl PicardState {
    pub fn solution(&self) -> &WeightedField {
        self.iterates.last().expect("at least the starting iterate")
    }

    pub fn norm(&self) -> f64 {
        *self.norms.last().expect("at least the starting iterate")
    }

    /// Largest measured increment ratio. Successive ratios alternate in
    /// size, so the last one depends on where the iteration happened to stop.
    pub fn contraction(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }
}

/// Smaller root of `C₁r² − r + C₀k_g = 0`, the radius of the contraction ball.
pub fn ball_radius(c0: f64, c1: f64, k_g: f64) -> Option<f64> {
    let disc = 1.0 - 4.0 * c0 * c1 * k_g;
    if disc <= 0.0 || c1 <= 0.0 {
        return None;
    }
    // 2C₀k_g / (1 + √disc) avoids cancellation for small k_g.
    Some(2.0 * c0 * k_g / (1.0 + disc.sqrt()))
}

/// Operators of one configuration, assembled once: `Sg` for the unit forcing
/// and the grid `Λ`. Since `S` is linear, solves at any amplitude `A` reuse
/// them through `v = A·Sg + Λ(v⊗v)`.
pub struct PicardProblem {
    pub zeta: Vector3<f64>,
    pub wake: WakeReport,
    pub forcing: SyntheticForcing,
    pub linear: OperatorOutput,
    pub lambda: LambdaOperator,
    k_g_unit: f64,
}

impl std::fmt::Debug for PicardProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PicardProblem")
            .field("zeta", &self.zeta)
            .field("k_g_unit", &self.k_g_unit)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

impl PicardProblem {
    /// Checks the wake condition and `ω ∥ ζ`, then builds `Sg` and `Λ`.
    pub fn new(
        spec: &RigidMotionSpec,
        zeta: &Vector3<f64>,
        forcing: &SyntheticForcing,
        grid: &GridSpec,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        if (forcing.period - spec.period()).abs() > 1e-12 * spec.period() {
            return Err(WakeError::InvalidArgument("forcing period differs from the motion period".into()));
        }
        let wake = wake_constant(spec, zeta, 8.0 * spec.period())?;
        if !wake.parallel_ok {
            return Err(WakeError::Inadmissible("ω is not parallel to ζ".into()));
        }
        if !wake.bounded {
            return Err(WakeError::Inadmissible(format!(
                "wake drift grows (ratio {:.3} between half windows)",
                wake.growth_ratio
            )));
        }
        let path = RotationPath::new(spec);
        let grid = Arc::new(FieldGrid::new(grid, zeta, spec.period())?);
        let linear = SyntheticDuhamel::new(&path, forcing, zeta, quad)?.apply(grid.clone(), 1.0)?;
        let mode = LambdaMode::for_problem(&path, forcing.is_steady());
        let lambda = LambdaOperator::new(&path, grid, 2.0, quad, mode)?;
        Ok(Self {
            zeta: *zeta,
            wake,
            forcing: forcing.clone(),
            linear,
            lambda,
            k_g_unit: forcing.sup_norm(),
        })
    }

    pub fn grid(&self) -> &Arc<FieldGrid> {
        self.lambda.grid()
    }

    fn quadratic(&self, v: &WeightedField) -> Result<(WeightedField, f64)> {
        let g = v.outer();
        let out = self.lambda.apply(&g, 1.0)?;
        let ratio = if g.weighted_norm() > 0.0 {
            out.weighted_norm() / g.weighted_norm()
        } else {
            0.0
        };
        Ok((out, ratio))
    }

    /// Iterates `v_{n+1} = A·Sg + Λ(v_n⊗v_n)` from `v₀ = A·Sg`.
    pub fn solve(&self, amplitude: f64, opts: &PicardOptions) -> Result<PicardState> {
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(WakeError::InvalidArgument("tolerance must be positive and max_iter at least 1".into()));
        }
        if !amplitude.is_finite() {
            return Err(WakeError::NonFinite("forcing amplitude"));
        }
        let sg = self.linear.field.scaled(amplitude);
        let k_g = amplitude.abs() * self.k_g_unit;
        let (linear_error, linear_tail_error) = (
            amplitude.abs() * self.linear.weighted_error(),
            amplitude.abs() * self.linear.weighted_tail_error(),
        );
        let mut state = PicardState {
            amplitude,
            zeta: self.zeta.into(),
            k_g,
            c0_fit: 0.0,
            c1_fit: 0.0,
            linear_norm: sg.weighted_norm(),
            linear_error,
            linear_tail_error,
            norms: vec![sg.weighted_norm()],
            increments: Vec::new(),
            ratios: Vec::new(),
            lambda_ratios: Vec::new(),
            stop: StopReason::MaxIterations,
            converged: false,
            tol: opts.tol,
            residual: 0.0,
            ball_radius: None,
            ball_ratio: None,
            lipschitz: 0.0,
            linear: sg.clone(),
            iterates: vec![sg.clone()],
        };
        if sg.weighted_norm() == 0.0 {
            state.stop = StopReason::ZeroForcing;
            state.converged = true;
            return Ok(state);
        }
        state.c0_fit = state.linear_norm / k_g;
        let mut current = sg.clone();
        for _ in 0..opts.max_iter {
            let (quad_term, ratio) = self.quadratic(&current)?;
            state.lambda_ratios.push(ratio);
            let next = sg.axpy(1.0, &quad_term)?;
            let inc = next.axpy(-1.0, &current)?.weighted_norm();
            if let Some(&prev) = state.increments.last() {
                state.ratios.push(if prev > 0.0 { inc / prev } else { 0.0 });
            }
            state.increments.push(inc);
            state.norms.push(next.weighted_norm());
            state.iterates.push(next.clone());
            current = next;
            if inc <= opts.tol * current.weighted_norm() {
                state.stop = StopReason::Converged;
                state.converged = state.ratios.last().is_none_or(|&q| q < 1.0);
                break;
            }
            if state.ratios.last().is_some_and(|&q| q >= 1.0) {
                state.stop = StopReason::NonContraction;
                break;
            }
        }
        let (quad_term, ratio) = self.quadratic(&current)?;
        state.lambda_ratios.push(ratio);
        let residual = sg.axpy(1.0, &quad_term)?.axpy(-1.0, &current)?.weighted_norm();
        state.residual = residual / current.weighted_norm();
        state.c1_fit = state.lambda_ratios.iter().copied().fold(0.0, f64::max);
        state.lipschitz = 2.0 * state.c1_fit * current.weighted_norm();
        state.ball_radius = ball_radius(state.c0_fit, state.c1_fit, k_g);
        state.ball_ratio = state.ball_radius.map(|r| current.weighted_norm() / r);
        Ok(state)
    }
}

/// One-shot solve of `v = Sg + Λ(v⊗v)` for the given forcing.
pub fn solve_periodic(
    spec: &RigidMotionSpec,
    zeta: &Vector3<f64>,
    forcing: &SyntheticForcing,
    grid: &GridSpec,
    quad: &QuadratureSpec,
    opts: &PicardOptions,
) -> Result<PicardState> {
    PicardProblem::new(spec, zeta, forcing, grid, quad)?.solve(1.0, opts)
}

/// Least-squares slope of `log sup_t |v|` against `log |x|` along one ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    pub label: String,
    /// Requested direction and the grid direction actually sampled.
    pub requested: [f64; 3],
    pub direction: [f64; 3],
    pub slope: f64,
    pub stderr: f64,
    pub shells: usize,
    /// `(|x|, sup_t |v|)` samples used in the fit.
    pub samples: Vec<[f64; 2]>,
}

pub const MIN_FIT_SHELLS: usize = 8;

/// Fits the radial decay exponent along each ray over shells with
/// `r_lo ≤ |x| ≤ r_hi`, which must lie inside `[R_max/8, R_max]`.
pub fn decay_fit(v: &WeightedField, rays: &[(String, Vector3<f64>)], r_lo: f64, r_hi: f64) -> Result<Vec<RayFit>> {
    let grid = v.grid();
    let r_max = *grid.radii.last().expect("nonempty grid");
    let slack = 1e-9 * r_max;
    if !(r_lo > 0.0 && r_lo < r_hi) || r_lo < r_max / 8.0 - slack || r_hi > r_max + slack {
        return Err(WakeError::InvalidArgument(format!(
            "fit range [{r_lo}, {r_hi}] must be inside [R_max/8, R_max] = [{}, {r_max}]",
            r_max / 8.0
        )));
    }
    let shells: Vec<usize> = (0..grid.n_shells())
        .filter(|&s| grid.radii[s] >= r_lo - slack && grid.radii[s] <= r_hi + slack)
        .collect();
    if shells.len() < MIN_FIT_SHELLS {
        return Err(WakeError::Precondition(format!(
            "decay fit needs at least {MIN_FIT_SHELLS} shells in range, found {}",
            shells.len()
        )));
    }
    rays.iter()
        .map(|(label, u)| {
            let un = u.norm();
            if !(un > 0.0) || !un.is_finite() {
                return Err(WakeError::InvalidArgument(format!("ray {label} has no direction")));
            }
            let d = grid.nearest_direction(&(u / un));
            let samples: Vec<[f64; 2]> = shells.iter().map(|&s| [grid.radii[s], v.time_sup(s, d)]).collect();
            if samples.iter().any(|p| !(p[1] > 0.0)) {
                return Err(WakeError::Precondition(format!("field vanishes on ray {label}; no decay exponent")));
            }
            let pts: Vec<(f64, f64)> = samples.iter().map(|p| (p[0].ln(), p[1].ln())).collect();
            let (slope, stderr) = least_squares_slope(&pts);
            let dir = grid.directions[d];
            Ok(RayFit {
                label: label.clone(),
                requested: (u / un).into(),
                direction: dir.into(),
                slope,
                stderr,
                shells: shells.len(),
                samples,
            })
        })
        .collect()
}

fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = if pts.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, stderr)
}

/// Rays `−ζ̂` (wake), `+ζ̂` and one perpendicular direction; for `ζ = 0` the
/// three coordinate-like rays `−e₃`, `+e₃`, `e₁`.
pub fn standard_rays(zeta: &Vector3<f64>) -> Vec<(String, Vector3<f64>)> {
    let (axis, perp) = if zeta.norm() > 0.0 {
        let a = zeta.normalize();
        let trial = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        (a, (trial - a * a.dot(&trial)).normalize())
    } else {
        (Vector3::z(), Vector3::x())
    };
    vec![
        ("wake".to_string(), -axis),
        ("upstream".to_string(), axis),
        ("perpendicular".to_string(), perp),
    ]
}

/// `[v]_{1,ζ}` on a grid and on the grid with `R_max` doubled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub norm: f64,
    pub norm_doubled: f64,
    pub r_max: f64,
    pub r_max_doubled: f64,
    pub relative_change: f64,
    pub finite: bool,
    pub stable: bool,
}

pub const EXTENSION_TOL: f64 = 0.1;

impl PointwiseReport {
    pub fn compare(base: &PicardState, doubled: &PicardState) -> Self {
        let (a, b) = (base.norm(), doubled.norm());
        let relative_change = if a > 0.0 { (b - a).abs() / a } else if b == 0.0 { 0.0 } else { f64::INFINITY };
        let finite = a.is_finite() && b.is_finite() && base.converged && doubled.converged;
        Self {
            norm: a,
            norm_doubled: b,
            r_max: *base.solution().grid().radii.last().expect("nonempty grid"),
            r_max_doubled: *doubled.solution().grid().radii.last().expect("nonempty grid"),
            relative_change,
            finite,
            stable: finite && relative_change < EXTENSION_TOL,
        }
    }
}

/// Re-solves on the grid with `R_max` doubled (same radial ratio) and
/// compares the weighted sup of the two solutions.
pub fn verify_pointwise(
    spec: &RigidMotionSpec,
    zeta: &Vector3<f64>,
    forcing: &SyntheticForcing,
    grid: &GridSpec,
    quad: &QuadratureSpec,
    amplitude: f64,
    opts: &PicardOptions,
    base: &PicardState,
) -> Result<(PointwiseReport, PicardState)> {
    let doubled = PicardProblem::new(spec, zeta, forcing, &grid.doubled(), quad)?.solve(amplitude, opts)?;
    Ok((PointwiseReport::compare(base, &doubled), doubled))
}
