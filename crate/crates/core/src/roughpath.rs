//! Rough-path algebra on finite time grids.
//!
//! All objects live on a [`TimeGrid`]. Two-index quantities (increments,
//! level-2 tensors, controls) are stored on the upper triangle `i <= j` of
//! grid indices, so every supremum over partitions is a supremum over grid
//! partitions.
//!
//! Level-2 convention: `ZZ^{kl}_{st} = ∫_s^t Z^k_{sr} dz^l_r`, so Chen's relation
//! reads `ZZ_{st} = ZZ_{sθ} + ZZ_{θt} + Z_{sθ} ⊗ Z_{θt}` with
//! `(a ⊗ b)^{kl} = a^k b^l`. Tensors are flattened row-major, index `k*K + l`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Strictly increasing times `0 = t_0 < ... < t_{n-1} = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 {
            return invalid(format!("time grid needs at least 2 points, got {}", t.len()));
        }
        if t[0] != 0.0 {
            return invalid(format!("time grid must start at 0, got {}", t[0]));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return invalid("time grid contains non-finite values");
        }
        if let Some(w) = t.windows(2).position(|w| w[1] <= w[0]) {
            return invalid(format!("time grid not strictly increasing at index {}", w + 1));
        }
        Ok(Self { t })
    }

    /// `n_intervals + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, n_intervals: usize) -> Result<Self> {
        if !(horizon > 0.0) || n_intervals == 0 {
            return invalid("uniform grid needs horizon > 0 and at least one interval");
        }
        let mut t: Vec<f64> = (0..=n_intervals)
            .map(|i| horizon * i as f64 / n_intervals as f64)
            .collect();
        t[n_intervals] = horizon;
        Self::new(t)
    }

    /// Dyadic grid with `2^level + 1` points.
    pub fn dyadic(horizon: f64, level: u32) -> Result<Self> {
        Self::uniform(horizon, 1usize << level)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn n_points(&self) -> usize {
        self.t.len()
    }

    pub fn horizon(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Index of `time` if it is a grid point (up to `1e-12` relative).
    pub fn index_of(&self, time: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.t.partition_point(|&x| x < time - tol);
        (pos < self.t.len() && (self.t[pos] - time).abs() <= tol).then_some(pos)
    }

    /// Sub-grid made of the listed indices (must start at 0, be increasing).
    pub fn subgrid(&self, indices: &[usize]) -> Result<Self> {
        if indices.first() != Some(&0) {
            return invalid("sub-grid indices must start at 0");
        }
        Self::new(indices.iter().map(|&i| self.t[i]).collect())
    }
}

impl<'de> Deserialize<'de> for TimeGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            t: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        TimeGrid::new(raw.t).map_err(serde::de::Error::custom)
    }
}

/// A path sampled at every point of a grid, with values in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path1 {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path1 {
    /// `values` is point-major: entry `i*dim + k` is component `k` at `t_i`.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("path dimension must be at least 1");
        }
        if values.len() != grid.n_points() * dim {
            return invalid(format!(
                "path expects {} values ({} points x dim {}), got {}",
                grid.n_points() * dim,
                grid.n_points(),
                dim,
                values.len()
            ));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_points() * dim);
        for &t in grid.times() {
            let v = f(t);
            if v.len() != dim {
                return invalid("path callback returned the wrong dimension");
            }
            values.extend(v);
        }
        Self::new(grid, dim, values)
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Component `k` of the piecewise-linear interpolant at time `t`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let times = self.grid.times();
        let n = times.len();
        let j = times.partition_point(|&x| x <= t).clamp(1, n - 1);
        let (t0, t1) = (times[j - 1], times[j]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        for k in 0..self.dim {
            out[k] = (1.0 - w) * self.at(j - 1)[k] + w * self.at(j)[k];
        }
    }

    /// Piecewise-linear interpolant re-sampled on another grid.
    pub fn resample(&self, grid: &TimeGrid) -> Result<Self> {
        let mut values = vec![0.0; grid.n_points() * self.dim];
        for (i, &t) in grid.times().iter().enumerate() {
            self.interpolate(t, &mut values[i * self.dim..(i + 1) * self.dim]);
        }
        Self::new(grid.clone(), self.dim, values)
    }

    /// Restriction to a sub-grid given by point indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let grid = self.grid.subgrid(indices)?;
        let values = indices.iter().flat_map(|&i| self.at(i).to_vec()).collect();
        Self::new(grid, self.dim, values)
    }

    /// Slope of the interpolant on segment `[t_j, t_{j+1}]`.
    pub fn segment_slope(&self, j: usize) -> Vec<f64> {
        let dt = self.grid.t[j + 1] - self.grid.t[j];
        (0..self.dim)
            .map(|k| (self.at(j + 1)[k] - self.at(j)[k]) / dt)
            .collect()
    }
}

/// Number of stored pairs `i <= j` for an `n`-point grid.
fn n_pairs(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Values attached to ordered pairs `(t_i, t_j)`, `i <= j`, of a grid.
///
/// Each entry is a vector of length `dim` (1 for scalars, `K` for
/// increments, `K*K` for level-2 tensors). Diagonal entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoIndexMap {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl TwoIndexMap {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let n = grid.n_points();
        Self { grid, dim, values: vec![0.0; n_pairs(n) * dim] }
    }

    /// Fill from a callback `f(i, j, out)` on every pair `i < j`.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut m = Self::zeros(grid, dim);
        let n = m.n();
        for i in 0..n {
            for j in i + 1..n {
                let o = m.offset(i, j);
                f(i, j, &mut m.values[o..o + dim]);
            }
        }
        m
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.grid.n_points()
    }

    /// Row `i` stores `n - i` entries, so it starts at `i*n - i(i-1)/2`.
    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.n());
        let n = self.n();
        (i * n - i * i.saturating_sub(1) / 2 + (j - i)) * self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        let d = self.dim;
        &mut self.values[o..o + d]
    }

    /// Scalar entry (panics in debug builds if `dim != 1`).
    #[inline]
    pub fn scalar(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[self.offset(i, j)]
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// `self - other`, entrywise. Grids and dimensions must agree.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.dim != other.dim {
            return invalid("two-index maps live on different grids or dimensions");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), dim: self.dim, values })
    }

    /// `δg_{sθt} = g_{st} - g_{sθ} - g_{θt}` at indices `i <= m <= j`.
    pub fn delta_at(&self, i: usize, m: usize, j: usize, out: &mut [f64]) {
        let (a, b, c) = (self.get(i, j), self.get(i, m), self.get(m, j));
        for k in 0..self.dim {
            out[k] = a[k] - b[k] - c[k];
        }
    }

    /// Euclidean norm of each entry, as a scalar map.
    pub fn norms(&self) -> Self {
        let values = self
            .values
            .chunks(self.dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Self { grid: self.grid.clone(), dim: 1, values }
    }

    /// Restriction to a sub-grid given by point indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let grid = self.grid.subgrid(indices)?;
        Ok(Self::from_fn(grid, self.dim, |a, b, out| {
            out.copy_from_slice(self.get(indices[a], indices[b]))
        }))
    }
}

/// Increments `p_t - p_s` of a path on every grid pair.
pub fn delta1(p: &Path1) -> Result<TwoIndexMap> {
    if p.grid.n_points() < 2 {
        return invalid("delta1 needs at least 2 grid points");
    }
    let dim = p.dim;
    Ok(TwoIndexMap::from_fn(p.grid.clone(), dim, |i, j, out| {
        for k in 0..dim {
            out[k] = p.at(j)[k] - p.at(i)[k];
        }
    }))
}

/// Lazy view of `δg` on grid triples.
pub struct Delta2<'a> {
    g: &'a TwoIndexMap,
}

/// Second increment of a two-index map, evaluated on demand.
pub fn delta2(g: &TwoIndexMap) -> Delta2<'_> {
    Delta2 { g }
}

impl Delta2<'_> {
    pub fn at(&self, i: usize, m: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.g.dim];
        self.g.delta_at(i, m, j, &mut out);
        out
    }

    /// Largest absolute component over all triples `i <= m <= j`.
    pub fn max_abs(&self) -> f64 {
        let n = self.g.n();
        let mut buf = vec![0.0; self.g.dim];
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 2..n {
                for m in i + 1..j {
                    self.g.delta_at(i, m, j, &mut buf);
                    for &x in &buf {
                        worst = worst.max(x.abs());
                    }
                }
            }
        }
        worst
    }
}

/// Nonnegative, superadditive function on grid pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    map: TwoIndexMap,
}

impl ControlGrid {
    /// Wraps values without checking superadditivity; see
    /// [`ControlGrid::superadditivity_defect`].
    pub fn from_map(map: TwoIndexMap) -> Result<Self> {
        if map.dim() != 1 {
            return invalid("a control is scalar-valued");
        }
        if map.raw().iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return invalid("control values must be finite and nonnegative");
        }
        Ok(Self { map })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { map: TwoIndexMap::zeros(grid, 1) }
    }

    /// `ω(s,t) = t - s`.
    pub fn time(grid: TimeGrid) -> Self {
        let t = grid.times().to_vec();
        Self { map: TwoIndexMap::from_fn(grid, 1, |i, j, o| o[0] = t[j] - t[i]) }
    }

    /// `ω(s,t) = F(t) - F(s)` for a nondecreasing `F` given at grid points.
    pub fn additive(grid: TimeGrid, cumulative: &[f64]) -> Result<Self> {
        if cumulative.len() != grid.n_points() {
            return invalid("cumulative values must match the grid");
        }
        if cumulative.windows(2).any(|w| w[1] < w[0]) {
            return invalid("cumulative values must be nondecreasing");
        }
        Ok(Self { map: TwoIndexMap::from_fn(grid, 1, |i, j, o| o[0] = cumulative[j] - cumulative[i]) })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.map.grid()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.map.scalar(i, j)
    }

    pub fn as_map(&self) -> &TwoIndexMap {
        &self.map
    }

    /// Entrywise `ω^a`; superadditivity is preserved for `a >= 1`.
    pub fn powf(&self, a: f64) -> Self {
        let mut map = self.map.clone();
        map.values.iter_mut().for_each(|x| *x = x.powf(a));
        Self { map }
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut map = self.map.clone();
        map.values.iter_mut().for_each(|x| *x *= c);
        Self { map }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid() != other.grid() {
            return invalid("controls live on different grids");
        }
        let mut map = self.map.clone();
        map.values.iter_mut().zip(&other.map.values).for_each(|(a, b)| *a += b);
        Ok(Self { map })
    }

    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self { map: self.map.restrict(indices)? })
    }

    /// `max(ω(s,θ) + ω(θ,t) - ω(s,t))` over grid triples; `<= 0` for a control.
    pub fn superadditivity_defect(&self) -> f64 {
        let n = self.map.n();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in i + 2..n {
                let w = self.get(i, j);
                for m in i + 1..j {
                    worst = worst.max(self.get(i, m) + self.get(m, j) - w);
                }
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(format!("p-variation needs finite p >= 1, got {p}")));
    }
    Ok(())
}

/// `sup Σ |g_{t_i t_{i+1}}|^p` over grid partitions of `[t_a, t_b]`, by
/// dynamic programming over right endpoints. `weights` holds `|g|^p`.
fn pvar_power_window(weights: &TwoIndexMap, a: usize, b: usize) -> f64 {
    let mut best = vec![0.0; b - a + 1];
    for j in a + 1..=b {
        let mut v: f64 = 0.0;
        for i in a..j {
            v = v.max(best[i - a] + weights.scalar(i, j));
        }
        best[j - a] = v;
    }
    best[b - a]
}

fn powered_norms(g: &TwoIndexMap, p: f64) -> TwoIndexMap {
    let mut w = g.norms();
    w.values.iter_mut().for_each(|x| *x = x.powf(p));
    w
}

/// p-variation of `g` over the grid window `[t_a, t_b]` (indices), with
/// Euclidean norms on vector/tensor entries.
pub fn p_variation(g: &TwoIndexMap, p: f64, window: (usize, usize)) -> Result<f64> {
    check_p(p)?;
    let (a, b) = window;
    if a > b || b >= g.n() {
        return invalid(format!("window ({a},{b}) outside grid of {} points", g.n()));
    }
    if a == b {
        return Ok(0.0);
    }
    let w = powered_norms(g, p);
    Ok(pvar_power_window(&w, a, b).powf(1.0 / p))
}

/// `ω(s,t) = sup Σ |g|^p` on every grid window, i.e. the p-th power of the
/// p-variation. One DP sweep per left endpoint, `O(n^3)` overall.
pub fn pvar_control(g: &TwoIndexMap, p: f64) -> Result<ControlGrid> {
    check_p(p)?;
    let w = powered_norms(g, p);
    let n = g.n();
    let mut out = TwoIndexMap::zeros(g.grid().clone(), 1);
    let mut best = vec![0.0; n];
    for a in 0..n {
        best[a] = 0.0;
        for j in a + 1..n {
            let mut v: f64 = 0.0;
            for i in a..j {
                v = v.max(best[i] + w.scalar(i, j));
            }
            best[j] = v;
            out.get_mut(a, j)[0] = v;
        }
    }
    ControlGrid::from_map(out)
}

/// Level-1 and level-2 data on a grid with Hölder-type exponent `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    alpha: f64,
    k: usize,
    z: TwoIndexMap,
    zz: TwoIndexMap,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
        return Err(Error::InvalidExponent(format!("alpha must lie in (1/3, 1/2], got {alpha}")));
    }
    Ok(())
}

impl RoughPath {
    pub fn new(alpha: f64, z: TwoIndexMap, zz: TwoIndexMap) -> Result<Self> {
        check_alpha(alpha)?;
        let k = z.dim();
        if zz.dim() != k * k || z.grid() != zz.grid() {
            return invalid("level-2 map must be K x K on the level-1 grid");
        }
        Ok(Self { alpha, k, z, zz })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &TimeGrid {
        self.z.grid()
    }

    pub fn z(&self) -> &TwoIndexMap {
        &self.z
    }

    pub fn zz(&self) -> &TwoIndexMap {
        &self.zz
    }

    /// The path `t -> Z_{0t}`.
    pub fn level1_path(&self) -> Path1 {
        let n = self.grid().n_points();
        let mut v = vec![0.0; n * self.k];
        for j in 1..n {
            v[j * self.k..(j + 1) * self.k].copy_from_slice(self.z.get(0, j));
        }
        Path1 { grid: self.grid().clone(), dim: self.k, values: v }
    }

    /// `max |Z_{st}|` over grid pairs, the scale used by relative tolerances.
    pub fn scale(&self) -> f64 {
        self.z.raw().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Restriction to a sub-grid given by point indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.alpha, self.z.restrict(indices)?, self.zz.restrict(indices)?)
    }
}

/// Exact level-2 lift of the piecewise-linear interpolant of `z`.
///
/// Each segment contributes `½ Δ ⊗ Δ`; segments are glued with Chen's
/// relation, so no quadrature is involved. `alpha` defaults to ½.
pub fn canonical_lift(z: &Path1) -> Result<RoughPath> {
    canonical_lift_with_alpha(z, 0.5)
}

pub fn canonical_lift_with_alpha(z: &Path1, alpha: f64) -> Result<RoughPath> {
    let n = z.grid.n_points();
    if n < 2 {
        return invalid("canonical lift needs at least 2 grid points");
    }
    let k = z.dim;
    let level1 = delta1(z)?;
    let mut zz = TwoIndexMap::zeros(z.grid.clone(), k * k);
    let mut acc = vec![0.0; k * k];
    let mut seg = vec![0.0; k];
    for i in 0..n {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for j in i..n - 1 {
            for c in 0..k {
                seg[c] = z.at(j + 1)[c] - z.at(j)[c];
            }
            let zij = level1.get(i, j);
            for a in 0..k {
                for b in 0..k {
                    acc[a * k + b] += zij[a] * seg[b] + 0.5 * seg[a] * seg[b];
                }
            }
            zz.get_mut(i, j + 1).copy_from_slice(&acc);
        }
    }
    RoughPath::new(alpha, level1, zz)
}

/// `max |δZZ_{sθt} - Z_{sθ} ⊗ Z_{θt}|` over grid triples (max-norm).
pub fn chen_residual(r: &RoughPath) -> f64 {
    let n = r.grid().n_points();
    let k = r.k;
    let mut buf = vec![0.0; k * k];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 2..n {
            for m in i + 1..j {
                r.zz.delta_at(i, m, j, &mut buf);
                let (a, b) = (r.z.get(i, m), r.z.get(m, j));
                for p in 0..k {
                    for q in 0..k {
                        worst = worst.max((buf[p * k + q] - a[p] * b[q]).abs());
                    }
                }
            }
        }
    }
    worst
}

/// `max |sym ZZ_{st} - ½ Z_{st} ⊗ Z_{st}|` over grid pairs.
pub fn geometricity_defect(r: &RoughPath) -> f64 {
    let n = r.grid().n_points();
    let k = r.k;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (z, zz) = (r.z.get(i, j), r.zz.get(i, j));
            for p in 0..k {
                for q in 0..k {
                    let sym = 0.5 * (zz[p * k + q] + zz[q * k + p]);
                    worst = worst.max((sym - 0.5 * z[p] * z[q]).abs());
                }
            }
        }
    }
    worst
}

/// Bracket path `[Z]`, a `K*K`-valued path with `[Z]_0 = 0`, accumulated
/// along consecutive grid intervals from `Z ⊗ Z - 2 sym ZZ`.
pub fn bracket(r: &RoughPath) -> Path1 {
    let n = r.grid().n_points();
    let k = r.k;
    let mut values = vec![0.0; n * k * k];
    for j in 0..n - 1 {
        let (z, zz) = (r.z.get(j, j + 1), r.zz.get(j, j + 1));
        for p in 0..k {
            for q in 0..k {
                let inc = z[p] * z[q] - (zz[p * k + q] + zz[q * k + p]);
                values[(j + 1) * k * k + p * k + q] = values[j * k * k + p * k + q] + inc;
            }
        }
    }
    Path1 { grid: r.grid().clone(), dim: k * k, values }
}

/// `ZZ' = ZZ - ½ δβ`: converts a geometric lift into the lift with bracket `β`.
pub fn ito_from_geometric(r: &RoughPath, bracket_path: &Path1) -> Result<RoughPath> {
    let k = r.k;
    if bracket_path.dim != k * k || bracket_path.grid != *r.grid() {
        return invalid("bracket path must be K x K valued on the rough path's grid");
    }
    if bracket_path.at(0).iter().any(|&x| x != 0.0) {
        return invalid("bracket path must vanish at time 0");
    }
    let mut zz = r.zz.clone();
    let n = r.grid().n_points();
    for i in 0..n {
        for j in i + 1..n {
            let (bi, bj) = (bracket_path.at(i), bracket_path.at(j));
            let e = zz.get_mut(i, j);
            for c in 0..k * k {
                e[c] -= 0.5 * (bj[c] - bi[c]);
            }
        }
    }
    RoughPath::new(r.alpha, r.z.clone(), zz)
}

/// `sup_t |Z¹_{0t} - Z²_{0t}| + |Z¹ - Z²|_{1/α-var} + |ZZ¹ - ZZ²|_{1/(2α)-var}`.
pub fn rough_metric(r1: &RoughPath, r2: &RoughPath) -> Result<f64> {
    if r1.grid() != r2.grid() || r1.k != r2.k {
        return invalid("rough paths must share grid and dimension");
    }
    if r1.alpha != r2.alpha {
        return invalid("rough paths must share alpha");
    }
    let dz = r1.z.sub(&r2.z)?;
    let dzz = r1.zz.sub(&r2.zz)?;
    let n = r1.grid().n_points();
    let sup0 = (1..n)
        .map(|j| dz.get(0, j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let alpha = r1.alpha;
    Ok(sup0 + p_variation(&dz, 1.0 / alpha, (0, n - 1))? + p_variation(&dzz, 0.5 / alpha, (0, n - 1))?)
}

/// `ω_Z(s,t) = |Z|^{1/α}_{1/α-var;[s,t]} + |ZZ|^{1/(2α)}_{1/(2α)-var;[s,t]}`.
pub fn omega_z(r: &RoughPath) -> Result<ControlGrid> {
    let a = pvar_control(&r.z, 1.0 / r.alpha)?;
    let b = pvar_control(&r.zz, 0.5 / r.alpha)?;
    a.add(&b)
}

/// Brownian path with `K` independent components on the dyadic grid of the
/// given level, deterministic in `seed`.
pub fn sample_bm_path(seed: u64, level: u32, k: usize, horizon: f64) -> Result<Path1> {
    if level == 0 || level > 24 {
        return invalid(format!("Brownian level must be in 1..=24, got {level}"));
    }
    if k == 0 || !(horizon > 0.0) {
        return invalid("Brownian sample needs K >= 1 and T > 0");
    }
    let grid = TimeGrid::dyadic(horizon, level)?;
    let n = grid.n_points();
    let sd = (horizon / (n - 1) as f64).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * k];
    for j in 1..n {
        for c in 0..k {
            let xi: f64 = StandardNormal.sample(&mut rng);
            values[j * k + c] = values[(j - 1) * k + c] + sd * xi;
        }
    }
    Path1::new(grid, k, values)
}

/// Canonical (Stratonovich) lift of a seeded dyadic Brownian sample.
pub fn sample_bm_lift(seed: u64, level: u32, k: usize, horizon: f64) -> Result<RoughPath> {
    canonical_lift(&sample_bm_path(seed, level, k, horizon)?)
}

/// JSON layout of a rough path. `Z[i][j-i]` and `ZZ[i][j-i]` hold the entries
/// for the pair `(t_i, t_j)`, `j >= i`; level-2 entries are `K x K` nested
/// row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoughPathJson {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub times: Vec<f64>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "ZZ")]
    pub zz: Vec<Vec<Vec<Vec<f64>>>>,
}

impl RoughPath {
    pub fn to_json_value(&self) -> RoughPathJson {
        let n = self.grid().n_points();
        let k = self.k;
        let z = (0..n).map(|i| (i..n).map(|j| self.z.get(i, j).to_vec()).collect()).collect();
        let zz = (0..n)
            .map(|i| {
                (i..n)
                    .map(|j| self.zz.get(i, j).chunks(k).map(|r| r.to_vec()).collect())
                    .collect()
            })
            .collect();
        RoughPathJson {
            alpha: self.alpha,
            horizon: self.grid().horizon(),
            times: self.grid().times().to_vec(),
            z,
            zz,
        }
    }

    pub fn from_json_value(j: &RoughPathJson) -> Result<Self> {
        let grid = TimeGrid::new(j.times.clone())?;
        if (grid.horizon() - j.horizon).abs() > 1e-12 * j.horizon.abs().max(1.0) {
            return invalid("field T does not match the last time");
        }
        let n = grid.n_points();
        if j.z.len() != n || j.zz.len() != n {
            return invalid("Z and ZZ need one row per time");
        }
        let k = j.z[0].first().map(|v| v.len()).unwrap_or(0);
        if k == 0 {
            return invalid("Z entries must be nonempty vectors");
        }
        let mut z = TwoIndexMap::zeros(grid.clone(), k);
        let mut zz = TwoIndexMap::zeros(grid, k * k);
        for i in 0..n {
            if j.z[i].len() != n - i || j.zz[i].len() != n - i {
                return invalid(format!("row {i} of Z/ZZ must have {} entries", n - i));
            }
            for c in 0..n - i {
                let v = &j.z[i][c];
                let t = &j.zz[i][c];
                if v.len() != k || t.len() != k || t.iter().any(|r| r.len() != k) {
                    return invalid(format!("entry ({i},{}) has the wrong shape", i + c));
                }
                z.get_mut(i, i + c).copy_from_slice(v);
                let dst = zz.get_mut(i, i + c);
                for (p, row) in t.iter().enumerate() {
                    dst[p * k..(p + 1) * k].copy_from_slice(row);
                }
            }
        }
        RoughPath::new(j.alpha, z, zz)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("rough path serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: RoughPathJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("rough path JSON: {e}")))?;
        Self::from_json_value(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: &[f64]) -> TimeGrid {
        TimeGrid::new(t.to_vec()).unwrap()
    }

    #[test]
    fn pair_storage_round_trips() {
        let g = TimeGrid::uniform(1.0, 6).unwrap();
        let m = TwoIndexMap::from_fn(g, 2, |i, j, o| {
            o[0] = i as f64;
            o[1] = j as f64;
        });
        for i in 0..7 {
            for j in i + 1..7 {
                assert_eq!(m.get(i, j), &[i as f64, j as f64]);
            }
            assert_eq!(m.get(i, i), &[0.0, 0.0]);
        }
    }

    #[test]
    fn delta1_of_identity_path() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let p = Path1::scalar(g, vec![0.0, 0.5, 1.0]).unwrap();
        let d = delta1(&p).unwrap();
        assert_eq!(d.scalar(0, 2), 1.0);
        assert_eq!(d.scalar(0, 1), 0.5);
        assert_eq!(delta2(&d).max_abs(), 0.0);
    }

    #[test]
    fn delta2_of_squared_time() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let t = g.times().to_vec();
        let m = TwoIndexMap::from_fn(g, 1, |i, j, o| o[0] = (t[j] - t[i]).powi(2));
        assert_eq!(delta2(&m).at(0, 1, 2), vec![0.5]);
    }

    #[test]
    fn delta1_rejects_short_grid() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
    }

    #[test]
    fn pvar_peak_path_prefers_fine_partition() {
        let p = Path1::scalar(grid(&[0.0, 1.0, 2.0]), vec![0.0, 1.0, 0.0]).unwrap();
        let g = delta1(&p).unwrap();
        assert_eq!(p_variation(&g, 1.0, (0, 2)).unwrap(), 2.0);
        assert!(matches!(p_variation(&g, 0.5, (0, 2)), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn lift_of_l_shaped_path_has_known_area() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let z = Path1::new(g, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let r = canonical_lift(&z).unwrap();
        let zz = r.zz().get(0, 2);
        assert!((zz[1] - 1.0).abs() < 1e-15, "ZZ^12 = {}", zz[1]);
        assert!(zz[2].abs() < 1e-15, "ZZ^21 = {}", zz[2]);
        assert!((zz[0] - 0.5).abs() < 1e-15 && (zz[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_path_lift_and_control() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let z = Path1::from_fn(g.clone(), 1, |t| vec![t]).unwrap();
        let r = canonical_lift(&z).unwrap();
        let t = g.times();
        for i in 0..9 {
            for j in i..9 {
                let want = 0.5 * (t[j] - t[i]).powi(2);
                assert!((r.zz().scalar(i, j) - want).abs() < 1e-15);
            }
        }
        // 2-variation of Z is attained by the single interval; 1-variation of
        // ZZ = ½(t-s)² is as well.
        let w = omega_z(&r).unwrap();
        assert!((w.get(0, 8) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bracket_of_ito_scalar_lift_is_time() {
        let g = TimeGrid::uniform(2.0, 10).unwrap();
        let z = Path1::from_fn(g.clone(), 1, |t| vec![(3.0 * t).sin()]).unwrap();
        let r = canonical_lift(&z).unwrap();
        assert!(bracket(&r).values().iter().all(|&x| x.abs() < 1e-14));
        let beta = Path1::from_fn(g.clone(), 1, |t| vec![t]).unwrap();
        let ito = ito_from_geometric(&r, &beta).unwrap();
        let back = bracket(&ito);
        for (a, b) in back.values().iter().zip(beta.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((geometricity_defect(&ito) - 1.0).abs() < 1e-12, "defect at (0,T) is T/2");
        assert!(chen_residual(&ito) < 1e-12);
    }

    #[test]
    fn ito_requires_zero_start() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let r = canonical_lift(&Path1::from_fn(g.clone(), 1, |t| vec![t]).unwrap()).unwrap();
        let beta = Path1::from_fn(g, 1, |t| vec![t + 1.0]).unwrap();
        assert!(ito_from_geometric(&r, &beta).is_err());
    }

    #[test]
    fn perturbed_area_breaks_chen() {
        let z = sample_bm_path(3, 4, 2, 1.0).unwrap();
        let mut r = canonical_lift(&z).unwrap();
        let eps = 1e-3;
        r.zz.get_mut(2, 9)[1] += eps;
        assert!(chen_residual(&r) >= eps * (1.0 - 1e-9));
    }

    #[test]
    fn bm_sample_is_deterministic() {
        let a = sample_bm_lift(11, 6, 2, 1.0).unwrap();
        let b = sample_bm_lift(11, 6, 2, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_bm_lift(12, 6, 2, 1.0).unwrap());
    }

    #[test]
    fn bm_terminal_variance_matches_horizon() {
        let horizon = 2.0;
        let n = 10_000;
        let mut acc = [0.0; 2];
        for seed in 0..n {
            let p = sample_bm_path(seed, 2, 2, horizon).unwrap();
            let last = p.at(4);
            acc[0] += last[0] * last[0];
            acc[1] += last[1] * last[1];
        }
        for a in acc {
            let var = a / n as f64;
            assert!((var / horizon - 1.0).abs() < 0.05, "variance {var}");
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample_bm_lift(5, 3, 2, 1.0).unwrap().with_alpha(0.45).unwrap();
        let back = RoughPath::from_json(&r.to_json()).unwrap();
        assert_eq!(r, back);
        assert!(RoughPath::from_json("{\"alpha\":0.45}").is_err());
    }
}
