use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use wake_core::duhamel::QuadratureSpec;
use wake_core::forcing::{Bump, ForcingTerm, SyntheticForcing};
use wake_core::oseen_bounds::RadialBump;
use wake_core::{FourierSeries3, GridSpec, RigidMotionSpec, Vector3};

/// Mean plus harmonics `k = 1, 2, …` of one component of the motion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    pub mean: [f64; 3],
    pub cos: Vec<[f64; 3]>,
    pub sin: Vec<[f64; 3]>,
}

impl SeriesConfig {
    pub fn to_series(&self) -> FourierSeries3 {
        let mut cos = vec![self.mean];
        cos.extend(&self.cos);
        let mut sin = vec![[0.0; 3]];
        sin.extend(&self.sin);
        FourierSeries3 { cos, sin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub period: f64,
    pub eta: SeriesConfig,
    pub omega: SeriesConfig,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { period: 1.0, eta: SeriesConfig::default(), omega: SeriesConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    /// Overall amplitude `A` multiplying every term.
    pub amplitude: f64,
    pub bump_radius: f64,
    pub terms: Vec<ForcingTerm>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self { amplitude: 0.1, bump_radius: Bump::default().radius, terms: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaChoice {
    Auto(String),
    Fixed([f64; 3]),
}

impl Default for ZetaChoice {
    fn default() -> Self {
        ZetaChoice::Auto("auto".into())
    }
}

impl ZetaChoice {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        if s == "auto" {
            return Ok(ZetaChoice::default());
        }
        Ok(ZetaChoice::Fixed(parse_vec3(s)?))
    }
}

pub fn parse_vec3(s: &str) -> anyhow::Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse {s:?} as x,y,z"))?;
    match parts.as_slice() {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => bail!("expected three comma-separated numbers, got {s:?}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub zeta: ZetaChoice,
    pub tol: f64,
    pub max_iter: usize,
    /// Window of the wake-drift search, in periods.
    pub wake_window: f64,
    /// Re-solve with `R_max` doubled and report the change of `[v]`.
    pub extension: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { zeta: ZetaChoice::default(), tol: 1e-6, max_iter: 50, wake_window: 8.0, extension: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayConfig {
    pub label: String,
    pub direction: [f64; 3],
}

/// Radial fit range; defaults to `[R_max/8, R_max]` and the wake, upstream
/// and perpendicular rays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub rays: Vec<RayConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// `ζ` used by the potential bounds; the motion's mean translation if unset.
    pub zeta: Option<[f64; 3]>,
    pub deu_samples: usize,
    pub deu_radius: f64,
    pub sweep: usize,
    pub radii_per_decade: usize,
    pub q: f64,
    pub bump: RadialBump,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            zeta: None,
            deu_samples: 100_000,
            deu_radius: 1.0,
            sweep: 6,
            radii_per_decade: 4,
            q: 2.0,
            bump: RadialBump { radius: 1.0, height: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub motion: MotionConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Checks every section; called again after flag overrides.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.motion()?;
        if !self.forcing.terms.is_empty() {
            self.forcing()?;
        }
        if !self.forcing.amplitude.is_finite() {
            bail!("forcing.amplitude must be finite");
        }
        self.grid.validate()?;
        self.quadrature.validate()?;
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || !(s.wake_window > 0.0) {
            bail!("solver needs tol > 0, max_iter ≥ 1 and wake_window > 0");
        }
        if let ZetaChoice::Auto(word) = &s.zeta {
            if word != "auto" {
                bail!("solver.zeta must be \"auto\" or [x, y, z], got {word:?}");
            }
        }
        let d = &self.decay;
        if let (Some(a), Some(b)) = (d.r_lo, d.r_hi) {
            if !(a > 0.0 && a < b) {
                bail!("decay range needs 0 < r_lo < r_hi");
            }
        }
        if d.rays.iter().any(|r| Vector3::from(r.direction).norm() == 0.0) {
            bail!("decay rays need nonzero directions");
        }
        let b = &self.bounds;
        if b.deu_samples == 0 || !(b.deu_radius > 0.0) || b.sweep < 2 || b.radii_per_decade == 0 {
            bail!("bounds need deu_samples ≥ 1, deu_radius > 0, sweep ≥ 2, radii_per_decade ≥ 1");
        }
        Ok(())
    }

    pub fn motion(&self) -> anyhow::Result<RigidMotionSpec> {
        let m = &self.motion;
        Ok(RigidMotionSpec::new(m.period, m.eta.to_series(), m.omega.to_series())?)
    }

    /// The forcing with unit overall amplitude (the solver scales by `A`).
    pub fn forcing(&self) -> anyhow::Result<SyntheticForcing> {
        if self.forcing.terms.is_empty() {
            bail!("forcing.terms is empty");
        }
        Ok(SyntheticForcing::new(
            self.motion.period,
            Bump { radius: self.forcing.bump_radius },
            self.forcing.terms.clone(),
        )?)
    }

    pub fn bounds_zeta(&self) -> Vector3<f64> {
        self.bounds.zeta.map(Vector3::from).unwrap_or_else(|| Vector3::from(self.motion.eta.mean))
    }
}
