//! Anisotropic wake weights `w_{m,ζ}(x) = (1+|x|)^m (1+|ζ||x|+ζ·x)^m`, the
//! space-time grid on which fields are stored, and weighted sup norms.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WakeError};
use crate::quadrature::SphereRule;

/// `(1+|x|)^m (1+|ζ||x|+ζ·x)^m`; never below 1.
#[inline]
pub fn weight(x: &Vector3<f64>, zeta: &Vector3<f64>, m: f64) -> f64 {
    let r = x.norm();
    let wake = (1.0 + zeta.norm() * r + zeta.dot(x)).max(1.0);
    ((1.0 + r) * wake).powf(m)
}

/// `c_* = (1+M)²(1+2M|ζ|)²`, the constant in `w_{1,ζ}(z)² ≤ c_* w_{1,ζ}(y)²`
/// for `z` the transported point of `y`.
pub fn comparability_constant(m_const: f64, zeta: &Vector3<f64>) -> Result<f64> {
    if !m_const.is_finite() || m_const < 0.0 {
        return Err(WakeError::Precondition(format!("wake constant must be >= 0 (got {m_const})")));
    }
    let a = (1.0 + m_const) * (1.0 + 2.0 * m_const * zeta.norm());
    Ok(a * a)
}

/// Layout of the space-time grid. Shell 0 is the origin; shells `1..shells`
/// are geometric between `r_min` and `r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub r_max: f64,
    pub r_min: f64,
    pub shells: usize,
    pub directions: usize,
    pub times: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_max: 64.0,
            r_min: 0.25,
            shells: 32,
            directions: 50,
            times: 16,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(WakeError::InvalidArgument(format!(
                "grid needs 0 < r_min < r_max (got {} and {})",
                self.r_min, self.r_max
            )));
        }
        if self.shells < 3 {
            return Err(WakeError::InvalidArgument("grid needs at least 3 shells".into()));
        }
        if self.times == 0 {
            return Err(WakeError::InvalidArgument("grid needs at least one time sample".into()));
        }
        SphereRule::lebedev(self.directions)?;
        Ok(())
    }

    /// Ratio between consecutive positive shells.
    pub fn ratio(&self) -> f64 {
        (self.r_max / self.r_min).powf(1.0 / (self.shells - 2) as f64)
    }

    /// Same radial ratio and inner shells, outer radius doubled.
    pub fn doubled(&self) -> Self {
        let extra = (2f64.ln() / self.ratio().ln()).round() as usize;
        let shells = self.shells + extra.max(1);
        let ratio = self.ratio();
        Self {
            r_max: self.r_min * ratio.powi((shells - 2) as i32),
            shells,
            ..self.clone()
        }
    }
}

/// Concrete grid: radii, unit directions (Lebedev, rotated so that `e₃ ↦ ζ̂`),
/// and uniform times on one period.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub zeta: Vector3<f64>,
    pub period: f64,
    pub radii: Vec<f64>,
    pub directions: Vec<Vector3<f64>>,
    pub direction_weights: Vec<f64>,
    pub times: Vec<f64>,
}

impl FieldGrid {
    pub fn new(spec: &GridSpec, zeta: &Vector3<f64>, period: f64) -> Result<Self> {
        spec.validate()?;
        if !(period > 0.0 && period.is_finite()) {
            return Err(WakeError::InvalidArgument(format!("period must be positive (got {period})")));
        }
        let ratio = spec.ratio();
        let mut radii = vec![0.0];
        for k in 0..spec.shells - 1 {
            radii.push(spec.r_min * ratio.powi(k as i32));
        }
        *radii.last_mut().expect("at least three shells") = spec.r_max;
        let rule = SphereRule::lebedev(spec.directions)?;
        let rule = if zeta.norm() > 0.0 { rule.rotated_to(zeta) } else { rule };
        let times = (0..spec.times).map(|k| period * k as f64 / spec.times as f64).collect();
        Ok(Self {
            spec: spec.clone(),
            zeta: *zeta,
            period,
            radii,
            directions: rule.points,
            direction_weights: rule.weights,
            times,
        })
    }

    pub fn n_shells(&self) -> usize {
        self.radii.len()
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Spatial nodes per time slice.
    pub fn spatial_len(&self) -> usize {
        self.n_shells() * self.n_directions()
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.n_times()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, t: usize, shell: usize, dir: usize) -> usize {
        (t * self.n_shells() + shell) * self.n_directions() + dir
    }

    /// `(t_index, shell, dir)` of a flat index.
    #[inline]
    pub fn unpack(&self, i: usize) -> (usize, usize, usize) {
        let nd = self.n_directions();
        let ns = self.n_shells();
        (i / (nd * ns), (i / nd) % ns, i % nd)
    }

    #[inline]
    pub fn position(&self, shell: usize, dir: usize) -> Vector3<f64> {
        self.directions[dir] * self.radii[shell]
    }

    /// Index of the grid direction closest to `u`.
    pub fn nearest_direction(&self, u: &Vector3<f64>) -> usize {
        let u = u.normalize();
        let mut best = (0, f64::NEG_INFINITY);
        for (k, d) in self.directions.iter().enumerate() {
            let c = d.dot(&u);
            if c > best.1 {
                best = (k, c);
            }
        }
        best.0
    }

    /// Interpolation weights on the sphere: inverse-square-distance averaging
    /// over the nearest grid directions (exact at grid directions).
    pub fn direction_stencil(&self, u: &Vector3<f64>) -> Vec<(usize, f64)> {
        const K: usize = 4;
        let n = u.norm();
        if n == 0.0 {
            return vec![(0, 1.0)];
        }
        let u = u / n;
        let mut d2: Vec<(usize, f64)> = self
            .directions
            .iter()
            .enumerate()
            .map(|(k, d)| (k, (d - u).norm_squared()))
            .collect();
        d2.sort_by(|a, b| a.1.total_cmp(&b.1));
        if d2[0].1 < 1e-24 {
            return vec![(d2[0].0, 1.0)];
        }
        let take = &d2[..K.min(d2.len())];
        let total: f64 = take.iter().map(|(_, e)| 1.0 / e).sum();
        take.iter().map(|&(k, e)| (k, (1.0 / e) / total)).collect()
    }

    /// Volume weights `∫ hat_s(r) r² dr` of piecewise-linear radial
    /// interpolation on the given radii (first radius 0).
    pub fn radial_weights(radii: &[f64]) -> Vec<f64> {
        let n = radii.len();
        let mut w = vec![0.0; n];
        for k in 0..n - 1 {
            let (a, b) = (radii[k], radii[k + 1]);
            let h = b - a;
            // ∫_a^b (b−r)/h r² dr and ∫_a^b (r−a)/h r² dr
            let left = (b.powi(4) / 12.0 - b * a.powi(3) / 3.0 + a.powi(4) / 4.0) / h;
            let right = (3.0 * b.powi(4) / 12.0 - a * b.powi(3) / 3.0 + a.powi(4) / 12.0) / h;
            w[k] += left;
            w[k + 1] += right;
        }
        w
    }

    pub fn header(&self, m: f64) -> GridHeader {
        GridHeader {
            grid: self.spec.clone(),
            m,
            zeta: [self.zeta.x, self.zeta.y, self.zeta.z],
            period: self.period,
        }
    }
}

/// JSON header written in front of field CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub grid: GridSpec,
    pub m: f64,
    pub zeta: [f64; 3],
    pub period: f64,
}

fn norm_max<T: Sync>(grid: &FieldGrid, values: &[T], m: f64, size: impl Fn(&T) -> f64 + Sync) -> f64 {
    let nsp = grid.spatial_len();
    let w: Vec<f64> = (0..nsp)
        .map(|i| {
            let (_, s, d) = grid.unpack(i);
            weight(&grid.position(s, d), &grid.zeta, m)
        })
        .collect();
    values
        .par_iter()
        .enumerate()
        .map(|(i, v)| w[i % nsp] * size(v))
        .reduce(|| 0.0, f64::max)
}

/// Vector field sampled on a [`FieldGrid`] together with its weighted sup
/// norm `max w_{m,ζ}(x)|v(x,t)|`.
#[derive(Debug, Clone)]
pub struct WeightedField {
    grid: Arc<FieldGrid>,
    m: f64,
    values: Vec<Vector3<f64>>,
    norm: f64,
}

impl WeightedField {
    pub fn new(grid: Arc<FieldGrid>, m: f64, values: Vec<Vector3<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(WakeError::InvalidArgument(format!(
                "field has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(WakeError::NonFinite("field value"));
        }
        let norm = norm_max(&grid, &values, m, |v| v.norm());
        Ok(Self { grid, m, values, norm })
    }

    pub fn zeros(grid: Arc<FieldGrid>, m: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            m,
            values: vec![Vector3::zeros(); n],
            norm: 0.0,
        }
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn(grid: Arc<FieldGrid>, m: f64, f: impl Fn(&Vector3<f64>, f64) -> Vector3<f64> + Sync) -> Result<Self> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (t, s, d) = grid.unpack(i);
                f(&grid.position(s, d), grid.times[t])
            })
            .collect();
        Self::new(grid, m, values)
    }

    pub fn grid(&self) -> &Arc<FieldGrid> {
        &self.grid
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Vector3<f64>> {
        self.values
    }

    pub fn value(&self, t: usize, shell: usize, dir: usize) -> Vector3<f64> {
        self.values[self.grid.index(t, shell, dir)]
    }

    pub fn weighted_norm(&self) -> f64 {
        self.norm
    }

    /// Same values measured with another exponent `m`.
    pub fn with_m(&self, m: f64) -> Self {
        let norm = norm_max(&self.grid, &self.values, m, |v| v.norm());
        Self {
            m,
            norm,
            ..self.clone()
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * alpha).collect(),
            norm: self.norm * alpha.abs(),
            ..self.clone()
        }
    }

    /// `self + alpha·other` (grids must coincide).
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.len() != other.grid.len() {
            return Err(WakeError::InvalidArgument("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b * alpha).collect();
        Self::new(self.grid.clone(), self.m, values)
    }

    /// `max_t |v(x_node, t)|` for one spatial node.
    pub fn time_sup(&self, shell: usize, dir: usize) -> f64 {
        (0..self.grid.n_times())
            .map(|t| self.value(t, shell, dir).norm())
            .fold(0.0, f64::max)
    }

    /// `v ⊗ v` as a tensor field measured with `m = 2m_v`.
    pub fn outer(&self) -> TensorField {
        let values = self.values.iter().map(|v| v * v.transpose()).collect();
        TensorField::new(self.grid.clone(), 2.0 * self.m, values).expect("outer product of a finite field is finite")
    }

    /// CSV with columns `r, dir_index, t_index, vx, vy, vz` after a
    /// `# {json header}` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = serde_json::to_string(&self.grid.header(self.m)).map_err(std::io::Error::other)?;
        writeln!(out, "# {header}")?;
        writeln!(out, "r,dir_index,t_index,vx,vy,vz")?;
        for (i, v) in self.values.iter().enumerate() {
            let (t, s, d) = self.grid.unpack(i);
            writeln!(out, "{:?},{d},{t},{:?},{:?},{:?}", self.grid.radii[s], v.x, v.y, v.z)?;
        }
        Ok(())
    }

    /// Reads a file written by [`WeightedField::write_csv`], rebuilding the grid.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |msg: String| WakeError::InvalidArgument(format!("field csv: {msg}"));
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| bad(e.to_string()))?;
        let json = first.strip_prefix("# ").ok_or_else(|| bad("missing header line".into()))?;
        let header: GridHeader = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
        let grid = Arc::new(FieldGrid::new(&header.grid, &Vector3::from(header.zeta), header.period)?);
        lines.next();
        let mut values = vec![Vector3::zeros(); grid.len()];
        let mut seen = 0;
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns in {line:?}")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
            let idx = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
            let r = num(cols[0])?;
            let (d, t) = (idx(cols[1])?, idx(cols[2])?);
            let shell = grid
                .radii
                .iter()
                .position(|&x| (x - r).abs() <= 1e-12 * r.max(1.0))
                .ok_or_else(|| bad(format!("radius {r} is not on the grid")))?;
            if d >= grid.n_directions() || t >= grid.n_times() {
                return Err(bad(format!("index out of range in {line:?}")));
            }
            values[grid.index(t, shell, d)] = Vector3::new(num(cols[3])?, num(cols[4])?, num(cols[5])?);
            seen += 1;
        }
        if seen != grid.len() {
            return Err(bad(format!("{seen} rows for {} nodes", grid.len())));
        }
        Self::new(grid, header.m, values)
    }
}

/// Rank-2 tensor field on a [`FieldGrid`]; `|G|` is the Frobenius norm, so
/// `[v⊗v]_{2m} = [v]_m²`.
#[derive(Debug, Clone)]
pub struct TensorField {
    grid: Arc<FieldGrid>,
    m: f64,
    values: Vec<Matrix3<f64>>,
    norm: f64,
}

impl TensorField {
    pub fn new(grid: Arc<FieldGrid>, m: f64, values: Vec<Matrix3<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(WakeError::InvalidArgument(format!(
                "tensor field has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(WakeError::NonFinite("tensor field value"));
        }
        let norm = norm_max(&grid, &values, m, |v| v.norm());
        Ok(Self { grid, m, values, norm })
    }

    pub fn zeros(grid: Arc<FieldGrid>, m: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            m,
            values: vec![Matrix3::zeros(); n],
            norm: 0.0,
        }
    }

    pub fn from_fn(grid: Arc<FieldGrid>, m: f64, f: impl Fn(&Vector3<f64>, f64) -> Matrix3<f64> + Sync) -> Result<Self> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (t, s, d) = grid.unpack(i);
                f(&grid.position(s, d), grid.times[t])
            })
            .collect();
        Self::new(grid, m, values)
    }

    pub fn grid(&self) -> &Arc<FieldGrid> {
        &self.grid
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn values(&self) -> &[Matrix3<f64>] {
        &self.values
    }

    pub fn weighted_norm(&self) -> f64 {
        self.norm
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * alpha).collect(),
            norm: self.norm * alpha.abs(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(zeta: Vector3<f64>) -> Arc<FieldGrid> {
        let spec = GridSpec {
            r_max: 8.0,
            r_min: 0.5,
            shells: 6,
            directions: 14,
            times: 3,
        };
        Arc::new(FieldGrid::new(&spec, &zeta, 1.0).unwrap())
    }

    #[test]
    fn weight_examples() {
        let x = Vector3::new(0.3, -2.0, 1.0);
        assert!((weight(&x, &Vector3::zeros(), 1.5) - (1.0 + x.norm()).powf(1.5)).abs() < 1e-12);
        let zeta = Vector3::new(0.0, 0.0, 1.0);
        assert!((weight(&Vector3::new(0.0, 0.0, -9.0), &zeta, 1.0) - 10.0).abs() < 1e-12);
        assert!((weight(&Vector3::new(0.0, 0.0, 9.0), &zeta, 1.0) - 190.0).abs() < 1e-12);
    }

    #[test]
    fn comparability_examples() {
        assert_eq!(comparability_constant(0.0, &Vector3::x()).unwrap(), 1.0);
        assert!((comparability_constant(1.0, &Vector3::x()).unwrap() - 36.0).abs() < 1e-12);
        assert!(comparability_constant(-1.0, &Vector3::x()).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = small_grid(Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(g.radii[0], 0.0);
        assert!((g.radii[1] - 0.5).abs() < 1e-15 && g.radii[5] == 8.0);
        let r = g.spec.ratio();
        for k in 2..g.n_shells() {
            assert!((g.radii[k] / g.radii[k - 1] - r).abs() < 1e-12);
        }
        assert!(g.directions.iter().any(|d| (d - Vector3::y()).norm() < 1e-12));
        assert!(g.directions.iter().any(|d| (d + Vector3::y()).norm() < 1e-12));
        for i in [0, 17, g.len() - 1] {
            let (t, s, d) = g.unpack(i);
            assert_eq!(g.index(t, s, d), i);
        }
    }

    #[test]
    fn radial_weights_integrate_polynomials() {
        let radii = [0.0, 0.4, 1.0, 1.7, 3.0];
        let w = FieldGrid::radial_weights(&radii);
        // piecewise-linear interpolation reproduces linear functions exactly
        let ones: f64 = w.iter().sum();
        assert!((ones - 9.0).abs() < 1e-12);
        let lin: f64 = w.iter().zip(&radii).map(|(a, r)| a * r).sum();
        assert!((lin - 81.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_keeps_ratio() {
        let s = GridSpec::default();
        let d = s.doubled();
        assert!((d.ratio() - s.ratio()).abs() < 1e-12);
        assert!((d.r_max / s.r_max - 2.0).abs() < 0.2);
    }

    #[test]
    fn inverse_weight_has_unit_norm() {
        let zeta = Vector3::new(0.0, 0.0, 1.0);
        let g = small_grid(zeta);
        let f = WeightedField::from_fn(g.clone(), 1.0, |x, _| Vector3::x() / weight(x, &zeta, 1.0)).unwrap();
        assert!((f.weighted_norm() - 1.0).abs() < 1e-14);
        assert_eq!(WeightedField::zeros(g, 1.0).weighted_norm(), 0.0);
        let h = f.scaled(-3.0);
        assert!((h.weighted_norm() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn triangle_inequality_holds() {
        let g = small_grid(Vector3::new(0.5, 0.0, 0.0));
        let a = WeightedField::from_fn(g.clone(), 1.0, |x, t| Vector3::new(x.y.sin(), t, 1.0) / (1.0 + x.norm_squared())).unwrap();
        let b = WeightedField::from_fn(g, 1.0, |x, t| Vector3::new(1.0, x.z * t, -x.x) / (2.0 + x.norm().powi(3))).unwrap();
        let s = a.axpy(1.0, &b).unwrap();
        assert!(s.weighted_norm() <= a.weighted_norm() + b.weighted_norm() + 1e-15);
    }

    #[test]
    fn outer_product_norm_squares() {
        let g = small_grid(Vector3::new(0.0, 0.0, 2.0));
        let a = WeightedField::from_fn(g, 1.0, |x, _| Vector3::new(1.0, 2.0, x.x) / (1.0 + x.norm_squared())).unwrap();
        let t = a.outer();
        assert!((t.weighted_norm() - a.weighted_norm().powi(2)).abs() < 1e-12 * t.weighted_norm());
    }

    #[test]
    fn stencil_is_exact_on_nodes_and_normalized() {
        let g = small_grid(Vector3::zeros());
        let st = g.direction_stencil(&g.directions[5]);
        assert_eq!(st, vec![(5, 1.0)]);
        let st = g.direction_stencil(&Vector3::new(0.3, 0.2, 0.9));
        assert!((st.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let g = small_grid(Vector3::new(0.0, 0.0, 1.0));
        let a = WeightedField::from_fn(g, 1.0, |x, t| Vector3::new(x.x, x.y * t, 1.0 / 3.0)).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = WeightedField::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.weighted_norm(), b.weighted_norm());
    }
}
