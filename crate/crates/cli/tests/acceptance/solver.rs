use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use sha2::{Digest, Sha256};
use wake_cli::commands::{self, Inequality};
use wake_cli::config::ZetaChoice;
use wake_cli::RunConfig;
use wake_core::picard::*;
use wake_core::rigid_motion::candidate_zeta;
use wake_core::Vector3;

use crate::{Checks, Outcome};

const AMPLITUDES: [f64; 3] = [0.025, 0.05, 0.1];
const PER_CONFIG_BUDGET: f64 = 900.0;

struct Solved {
    name: &'static str,
    cfg: RunConfig,
    zeta: Vector3<f64>,
    state: PicardState,
    seconds: f64,
}

/// Solutions at the configured amplitude, shared between the Picard and decay criteria.
static SOLVED: Mutex<Vec<Solved>> = Mutex::new(Vec::new());

fn bundled(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.cfg"));
    RunConfig::load(&path).unwrap()
}

fn zeta_of(cfg: &RunConfig) -> Vector3<f64> {
    match &cfg.solver.zeta {
        ZetaChoice::Fixed(z) => Vector3::from(*z),
        ZetaChoice::Auto(_) => candidate_zeta(&cfg.motion().unwrap()).unwrap().0,
    }
}

fn opts(cfg: &RunConfig) -> PicardOptions {
    PicardOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter }
}

/// Builds the problem and runs the amplitude sweep; returns the checks and
/// the state at the configured amplitude.
fn sweep(name: &'static str, c: &mut Checks) -> Solved {
    let start = Instant::now();
    let cfg = bundled(name);
    let zeta = zeta_of(&cfg);
    let problem = PicardProblem::new(&cfg.motion().unwrap(), &zeta, &cfg.forcing().unwrap(), &cfg.grid, &cfg.quadrature).unwrap();
    let o = opts(&cfg);

    let zero = problem.solve(0.0, &o).unwrap();
    c.add(format!("{name}: g = 0 → v = 0"), zero.stop == StopReason::ZeroForcing && zero.norm() == 0.0);

    let states: Vec<PicardState> = AMPLITUDES.iter().map(|&a| problem.solve(a, &o).unwrap()).collect();
    let qs: Vec<f64> = states.iter().map(|s| s.contraction().unwrap_or(f64::NAN)).collect();
    let converged = states.iter().all(|s| s.converged);
    c.add(
        format!("{name}: q = {:?} < 1, decreasing with A", qs.iter().map(|q| format!("{q:.2e}")).collect::<Vec<_>>()),
        converged && qs.iter().all(|&q| q < 1.0) && qs.windows(2).all(|w| w[0] < w[1]),
    );

    let state = problem.solve(cfg.forcing.amplitude, &o).unwrap();
    c.add(format!("{name}: residual {:.1e} ≤ 2·tol", state.residual), state.converged && state.residual <= 2.0 * o.tol);
    let ratio = state.ball_ratio.unwrap_or(f64::NAN);
    c.add(format!("{name}: [v]/r_ball = {ratio:.4}"), (1.0 / 1.1..=1.1).contains(&ratio));
    let seconds = start.elapsed().as_secs_f64();
    c.add(format!("{name}: {seconds:.0} s < {PER_CONFIG_BUDGET:.0} s"), seconds < PER_CONFIG_BUDGET);
    Solved { name, cfg, zeta, state, seconds }
}

pub fn picard_suite() -> Outcome {
    let mut c = Checks::default();
    let mut solved = SOLVED.lock().unwrap();
    solved.clear();
    for name in ["rotation_only", "oseen_wake", "zero_mean_rotation"] {
        solved.push(sweep(name, &mut c));
    }
    c.outcome()
}

fn solved_state(name: &'static str) -> (RunConfig, Vector3<f64>, PicardState, f64) {
    let mut solved = SOLVED.lock().unwrap();
    if let Some(s) = solved.iter().find(|s| s.name == name) {
        return (s.cfg.clone(), s.zeta, s.state.clone(), 0.0);
    }
    let start = Instant::now();
    let cfg = bundled(name);
    let zeta = zeta_of(&cfg);
    let state = solve_periodic(&cfg.motion().unwrap(), &zeta, &cfg.forcing().unwrap().scaled(cfg.forcing.amplitude), &cfg.grid, &cfg.quadrature, &opts(&cfg)).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    solved.push(Solved { name, cfg: cfg.clone(), zeta, state: state.clone(), seconds });
    (cfg, zeta, state, seconds)
}

pub fn decay_suite() -> Outcome {
    let mut c = Checks::default();
    let mut total = 0.0;
    for name in ["rotation_only", "oseen_wake"] {
        let start = Instant::now();
        let (cfg, zeta, state, solve_time) = solved_state(name);
        let shared = SOLVED.lock().unwrap().iter().find(|s| s.name == name).map(|s| s.seconds).unwrap_or(solve_time);
        let r_max = cfg.grid.r_max;
        let fits = decay_fit(state.solution(), &standard_rays(&zeta), r_max / 8.0, r_max).unwrap();
        for f in &fits {
            let (want, tol) = if zeta.norm() == 0.0 || f.label == "wake" { (-1.0, 0.15) } else { (-2.0, 0.2) };
            c.add(format!("{name} {}: slope {:.3} (want {want} ± {tol})", f.label, f.slope), (f.slope - want).abs() <= tol);
        }
        let (report, _) = verify_pointwise(
            &cfg.motion().unwrap(),
            &zeta,
            &cfg.forcing().unwrap(),
            &cfg.grid,
            &cfg.quadrature,
            cfg.forcing.amplitude,
            &opts(&cfg),
            &state,
        )
        .unwrap();
        c.add(format!("{name}: [v] change {:.1e} under R_max → {:.0}", report.relative_change, report.r_max_doubled), report.stable);
        total += shared + start.elapsed().as_secs_f64();
    }
    c.add(format!("solve + checks {total:.0} s < 1800 s"), total < 1800.0);
    c.outcome()
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), format!("{:x}", Sha256::digest(fs::read(p).unwrap()))))
        .collect()
}

const SMALL: &str = r#"
seed = 11

[motion]
eta = { mean = [0.0, 0.0, 1.0], sin = [[0.8, 0.0, 0.0]] }
omega = { sin = [[0.0, 0.0, 3.0]] }

[forcing]
amplitude = 0.1
terms = [{ amplitude = 1.0, spatial = { kind = "monopole", direction = [0.0, 0.0, 1.0] }, temporal = { mean = 1.0, cos = [0.5] } }]

[grid]
r_max = 16.0
r_min = 0.5
shells = 16
directions = 6
times = 4

[solver]
extension = false

[decay]
r_lo = 2.0

[bounds]
zeta = [0.0, 0.0, 1.0]
deu_samples = 20000
"#;

pub fn determinism() -> Outcome {
    let cfg = RunConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        commands::solve(&cfg, &out).unwrap();
        commands::verify_bounds(&cfg, Inequality::DeuIneq, Some(&out)).unwrap();
        commands::check_wake(&cfg, Some(&out)).unwrap();
        runs.push(hashes(&out));
    }
    let mut c = Checks::default();
    c.add(format!("{} output files hash-equal across runs", runs[0].len()), runs[0] == runs[1] && runs[0].len() >= 6);
    c.outcome()
}
