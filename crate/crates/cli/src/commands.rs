use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};
use wake_core::duhamel::QuadratureSpec;
use wake_core::kernels::{self, DecayGrid};
use wake_core::oseen_bounds::{self as bounds, BoundCheckResult, BoundSample, STABILITY_TOL};
use wake_core::picard::{self, PicardOptions, PicardProblem, PicardState, PointwiseReport, RayFit, StopReason};
use wake_core::rigid_motion::{candidate_zeta, wake_constant, CandidateCase};
use wake_core::{Matrix3, RigidMotionSpec, Vector3, WakeError, WeightedField};

use crate::config::{RunConfig, ZetaChoice};

/// Result of a subcommand: the JSON printed on stdout and whether every
/// check it performed passed.
#[derive(Debug)]
pub struct Report {
    pub passed: bool,
    pub summary: Value,
}

fn mat(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(f.flush()?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Resolves `ζ`; `Ok(None)` when `auto` finds no admissible family.
fn resolve_zeta(spec: &RigidMotionSpec, choice: &ZetaChoice) -> anyhow::Result<Option<(Vector3<f64>, Option<CandidateCase>)>> {
    match choice {
        ZetaChoice::Fixed(z) => Ok(Some((Vector3::from(*z), None))),
        ZetaChoice::Auto(_) => match candidate_zeta(spec) {
            Ok((z, case)) => Ok(Some((z, Some(case)))),
            Err(WakeError::Inadmissible(_)) => Ok(None),
            Err(e) => Err(e.into()),
        },
    }
}

pub fn check_wake(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<Report> {
    let spec = cfg.motion()?;
    let Some((zeta, case)) = resolve_zeta(&spec, &cfg.solver.zeta)? else {
        let summary = json!({ "admissible": false, "reason": "no candidate ζ: motion is outside the admissible families" });
        if let Some(dir) = out {
            ensure_dir(dir)?;
            write_json(&dir.join("wake.json"), &summary)?;
        }
        return Ok(Report { passed: false, summary });
    };
    let report = wake_constant(&spec, &zeta, cfg.solver.wake_window * spec.period())?;
    let summary = json!({
        "admissible": report.admissible(),
        "zeta": vec3(&zeta),
        "candidate_case": case,
        "M": report.m_estimate,
        "parallel_ok": report.parallel_ok,
        "bounded": report.bounded,
        "growth_ratio": report.growth_ratio,
        "window": report.window,
    });
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("wake.json"), &report)?;
    }
    Ok(Report { passed: report.admissible(), summary })
}

pub struct KernelQuery {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub t: f64,
    pub s: f64,
}

/// `E(x, t−s)` with its gradient, and `K(x, y; t, s)` for the configured motion.
pub fn kernel(cfg: Option<&RunConfig>, q: &KernelQuery) -> anyhow::Result<Report> {
    let x = Vector3::from(q.x);
    let e = kernels::stokes_fundamental(&x, q.t - q.s)?;
    let g = kernels::grad_stokes_fundamental(&x, q.t - q.s)?;
    let mut summary = json!({
        "x": q.x,
        "tau": q.t - q.s,
        "E": mat(&e.matrix),
        "E_norm": e.norm(),
        "grad_E_norm": g.norm(),
        "column_divergence": vec3(&g.column_divergence()),
        "grad_E": g.components.iter().map(mat).collect::<Vec<_>>(),
    });
    if let Some(cfg) = cfg {
        let spec = cfg.motion()?;
        let k = kernels::kernel_K(&spec, &x, &Vector3::from(q.y), q.t, q.s)?;
        summary["K"] = json!({
            "y": q.y,
            "t": q.t,
            "s": q.s,
            "matrix": mat(&k.matrix),
            "phi": mat(&k.phi),
            "drift": vec3(&k.drift),
        });
    }
    Ok(Report { passed: true, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    IntY0,
    DeuIneq,
    Deu2,
    Auxi1,
    Auxi2,
    OseenGrad,
    EstStokes,
    All,
}

impl Inequality {
    const EACH: [Inequality; 7] = [
        Inequality::IntY0,
        Inequality::DeuIneq,
        Inequality::Deu2,
        Inequality::Auxi1,
        Inequality::Auxi2,
        Inequality::OseenGrad,
        Inequality::EstStokes,
    ];

    fn name(self) -> &'static str {
        match self {
            Inequality::IntY0 => "int-y0",
            Inequality::DeuIneq => "deu-ineq",
            Inequality::Deu2 => "deu2",
            Inequality::Auxi1 => "auxi1",
            Inequality::Auxi2 => "auxi2",
            Inequality::OseenGrad => "oseen-grad",
            Inequality::EstStokes => "est-stokes",
            Inequality::All => "all",
        }
    }
}

const INT_Y_TOL: f64 = 1e-6;

fn check_int_y0() -> anyhow::Result<BoundCheckResult> {
    let mut rows = Vec::new();
    for alpha in [1.75, 2.0, 3.0, 4.5] {
        for s in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
            let ratio = bounds::int_y_identity(alpha, s)?;
            rows.push(BoundSample { x: [0.0; 3], param: alpha, lhs: ratio, bound: 1.0, ratio });
        }
    }
    let c2_err = (bounds::int_y_constant(2.0)? - std::f64::consts::PI.powi(2)).abs();
    let violations = rows.iter().filter(|r| (r.ratio - 1.0).abs() > INT_Y_TOL).count();
    let worst = rows.iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
    Ok(BoundCheckResult {
        name: "int-y0".into(),
        samples: rows.len(),
        worst_ratio: 1.0 + worst,
        fitted_constant: bounds::int_y_constant(2.0)?,
        doubling_change: c2_err,
        violations,
        pass: violations == 0 && c2_err <= 1e-12,
        rows,
    })
}

fn check_est_stokes() -> anyhow::Result<BoundCheckResult> {
    let (coarse, fine) = (DecayGrid::log_spaced(32), DecayGrid::log_spaced(64));
    let mut rows = Vec::new();
    let mut change = 0.0f64;
    for order in [0, 1] {
        let (a, b) = (kernels::verify_kernel_decay(order, &coarse)?, kernels::verify_kernel_decay(order, &fine)?);
        change = change.max((b - a).abs() / b);
        rows.push(BoundSample { x: [0.0; 3], param: order as f64, lhs: b, bound: 1.0, ratio: b });
    }
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(BoundCheckResult {
        name: "est-stokes".into(),
        samples: 2 * (coarse.len() + fine.len()),
        worst_ratio: worst,
        fitted_constant: worst,
        doubling_change: change,
        violations: 0,
        pass: rows.iter().all(|r| r.ratio.is_finite()) && change < STABILITY_TOL,
        rows,
    })
}

fn run_check(cfg: &RunConfig, which: Inequality) -> anyhow::Result<BoundCheckResult> {
    let b = &cfg.bounds;
    let zeta = cfg.bounds_zeta();
    Ok(match which {
        Inequality::IntY0 => check_int_y0()?,
        Inequality::DeuIneq => {
            let samples = bounds::random_deuring_samples(cfg.seed, b.deu_samples, &zeta, b.deu_radius);
            bounds::check_deu_ineq(&samples, &zeta, b.deu_radius)?
        }
        Inequality::Deu2 => bounds::check_deu2(&zeta, b.deu_radius, 4 * b.sweep)?,
        Inequality::Auxi1 => bounds::check_auxi1(&zeta, b.sweep)?,
        Inequality::Auxi2 => bounds::check_auxi2(&b.bump, b.q, &zeta, b.sweep.div_ceil(2))?,
        Inequality::OseenGrad => bounds::check_oseen_grad(b.radii_per_decade)?,
        Inequality::EstStokes => check_est_stokes()?,
        Inequality::All => unreachable!("expanded by the caller"),
    })
}

/// Runs the selected bound checks; writes `bounds_<name>.csv` and `bounds.json`.
pub fn verify_bounds(cfg: &RunConfig, which: Inequality, out: Option<&Path>) -> anyhow::Result<Report> {
    let selected: Vec<Inequality> = if which == Inequality::All { Inequality::EACH.to_vec() } else { vec![which] };
    let mut results = Vec::new();
    for w in selected {
        let res = run_check(cfg, w)?;
        if let Some(dir) = out {
            ensure_dir(dir)?;
            let mut f = create(&dir.join(format!("bounds_{}.csv", w.name())))?;
            writeln!(f, "x,y,z,param,lhs,bound,ratio")?;
            for r in &res.rows {
                writeln!(f, "{:?},{:?},{:?},{:?},{:?},{:?},{:?}", r.x[0], r.x[1], r.x[2], r.param, r.lhs, r.bound, r.ratio)?;
            }
            f.flush()?;
        }
        results.push(res);
    }
    let passed = results.iter().all(|r| r.pass);
    let summary = json!({ "zeta": vec3(&cfg.bounds_zeta()), "seed": cfg.seed, "passed": passed, "checks": results });
    if let Some(dir) = out {
        write_json(&dir.join("bounds.json"), &summary)?;
    }
    Ok(Report { passed, summary })
}

fn rays_for(cfg: Option<&RunConfig>, zeta: &Vector3<f64>) -> Vec<(String, Vector3<f64>)> {
    match cfg {
        Some(c) if !c.decay.rays.is_empty() => c.decay.rays.iter().map(|r| (r.label.clone(), Vector3::from(r.direction))).collect(),
        _ => picard::standard_rays(zeta),
    }
}

fn fit_range(r_lo: Option<f64>, r_hi: Option<f64>, r_max: f64) -> (f64, f64) {
    (r_lo.unwrap_or(r_max / 8.0), r_hi.unwrap_or(r_max))
}

fn write_decay_csv(path: &Path, fits: &[RayFit]) -> anyhow::Result<()> {
    let mut f = create(path)?;
    writeln!(f, "ray,slope,stderr,shells,dx,dy,dz")?;
    for r in fits {
        let d = r.direction;
        writeln!(f, "{},{:?},{:?},{},{:?},{:?},{:?}", r.label, r.slope, r.stderr, r.shells, d[0], d[1], d[2])?;
    }
    Ok(f.flush()?)
}

fn write_norms_csv(path: &Path, s: &PicardState) -> anyhow::Result<()> {
    let mut f = create(path)?;
    writeln!(f, "iteration,norm,increment,ratio,lambda_ratio")?;
    let opt = |v: Option<&f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for (n, norm) in s.norms.iter().enumerate() {
        // ratios[k] compares increments k+1 and k, i.e. iterate n = k + 2
        let ratio = n.checked_sub(2).and_then(|k| s.ratios.get(k));
        let inc = n.checked_sub(1).and_then(|k| s.increments.get(k));
        writeln!(f, "{n},{norm:?},{},{},{}", opt(inc), opt(ratio), opt(s.lambda_ratios.get(n)))?;
    }
    Ok(f.flush()?)
}

fn write_field_csv(path: &Path, v: &WeightedField) -> anyhow::Result<()> {
    let mut f = create(path)?;
    v.write_csv(&mut f)?;
    Ok(f.flush()?)
}

fn fits_json(fits: &[RayFit]) -> Value {
    fits.iter()
        .map(|r| json!({ "ray": r.label, "direction": r.direction, "slope": r.slope, "stderr": r.stderr, "shells": r.shells }))
        .collect()
}

/// End-to-end periodic solve: wake check, Picard iteration, decay fits and
/// the `R_max`-doubling check. Writes `summary.json`, `norms.csv`,
/// `field.csv` and `decay.csv` into `out`.
pub fn solve(cfg: &RunConfig, out: &Path) -> anyhow::Result<Report> {
    let spec = cfg.motion()?;
    let forcing = cfg.forcing()?;
    ensure_dir(out)?;
    let refuse = |reason: String| -> anyhow::Result<Report> {
        let summary = json!({ "admissible": false, "reason": reason, "config": cfg });
        write_json(&out.join("summary.json"), &summary)?;
        Ok(Report { passed: false, summary })
    };
    let Some((zeta, case)) = resolve_zeta(&spec, &cfg.solver.zeta)? else {
        return refuse("no candidate ζ: motion is outside the admissible families".into());
    };
    let quad: &QuadratureSpec = &cfg.quadrature;
    let problem = match PicardProblem::new(&spec, &zeta, &forcing, &cfg.grid, quad) {
        Ok(p) => p,
        Err(WakeError::Inadmissible(msg)) => return refuse(msg),
        Err(e) => return Err(e.into()),
    };
    let opts = PicardOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter };
    let state = problem.solve(cfg.forcing.amplitude, &opts)?;
    write_norms_csv(&out.join("norms.csv"), &state)?;
    write_field_csv(&out.join("field.csv"), state.solution())?;

    let r_max = cfg.grid.r_max;
    let (lo, hi) = fit_range(cfg.decay.r_lo, cfg.decay.r_hi, r_max);
    let fits = if state.converged && state.stop != StopReason::ZeroForcing {
        picard::decay_fit(state.solution(), &rays_for(Some(cfg), &zeta), lo, hi)?
    } else {
        Vec::new()
    };
    write_decay_csv(&out.join("decay.csv"), &fits)?;

    let mut pointwise = None;
    let mut doubled_summary = Value::Null;
    if cfg.solver.extension && state.converged {
        let (report, doubled) =
            picard::verify_pointwise(&spec, &zeta, &forcing, &cfg.grid, quad, cfg.forcing.amplitude, &opts, &state)?;
        doubled_summary = json!({
            "converged": doubled.converged,
            "norm": doubled.norm(),
            "linear_error": doubled.linear_error,
            "linear_tail_error": doubled.linear_tail_error,
        });
        pointwise = Some(report);
    }
    let passed = state.converged && pointwise.as_ref().is_none_or(|p: &PointwiseReport| p.stable);
    let wake = &problem.wake;
    let summary = json!({
        "admissible": true,
        "passed": passed,
        "zeta": vec3(&zeta),
        "candidate_case": case,
        "wake": { "M": wake.m_estimate, "growth_ratio": wake.growth_ratio, "bounded": wake.bounded, "parallel_ok": wake.parallel_ok },
        "state": state,
        "decay": { "r_lo": lo, "r_hi": hi, "fits": fits_json(&fits) },
        "pointwise": pointwise,
        "doubled": doubled_summary,
        "config": cfg,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(Report { passed, summary })
}

/// Decay exponents of a field written by `solve`; `ζ` defaults to the one
/// stored in the field header.
pub fn decay_fit(
    cfg: Option<&RunConfig>,
    field: &Path,
    zeta: Option<[f64; 3]>,
    r_lo: Option<f64>,
    r_hi: Option<f64>,
    out: Option<&Path>,
) -> anyhow::Result<Report> {
    let file = File::open(field).with_context(|| format!("opening {}", field.display()))?;
    let v = WeightedField::read_csv(BufReader::new(file))?;
    let zeta = zeta.map(Vector3::from).unwrap_or(v.grid().zeta);
    let r_max = *v.grid().radii.last().expect("nonempty grid");
    let (lo, hi) = fit_range(r_lo.or(cfg.and_then(|c| c.decay.r_lo)), r_hi.or(cfg.and_then(|c| c.decay.r_hi)), r_max);
    let fits = picard::decay_fit(&v, &rays_for(cfg, &zeta), lo, hi)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_decay_csv(&dir.join("decay.csv"), &fits)?;
    }
    let summary = json!({ "field": field_name(field), "zeta": vec3(&zeta), "norm": v.weighted_norm(), "r_lo": lo, "r_hi": hi, "fits": fits_json(&fits) });
    Ok(Report { passed: true, summary })
}

fn field_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Default output directory when neither flag nor config names one.
pub fn default_out(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("wake-out"))
}

pub fn ensure_exists(p: &Path) -> anyhow::Result<()> {
    if !p.exists() {
        bail!("{} does not exist", p.display());
    }
    Ok(())
}
