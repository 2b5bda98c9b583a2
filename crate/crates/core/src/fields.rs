//! Periodic grid functions on the unit torus and their norms.
//!
//! Nodes sit at `x = i·h`, `h = 1/N`, with `x` running fastest in 2D
//! (node index `ix + N·iy`). Inner products are node sums weighted by `h^d`.
//!
//! Sobolev norms of order `k >= 0` sum the squared L² norms of all centered
//! difference derivatives `D^β`, `|β| <= k`, each multi-index counted once.
//! On the torus these are Fourier multipliers, which is how they are
//! evaluated. Negative orders use the reciprocal multiplier, so
//! `|⟨f,g⟩| <= ‖f‖_{-k} ‖g‖_k` holds exactly for every grid pair.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::roughpath::TimeGrid;

/// Uniform periodic grid with `N` points per axis on `[0,1)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGrid {
    d: usize,
    n: usize,
}

impl SpatialGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::Unsupported(format!("spatial dimension must be 1 or 2, got {d}")));
        }
        if n < 8 {
            return invalid(format!("spatial grid needs N >= 8, got {n}"));
        }
        Ok(Self { d, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node volume `h^d`.
    pub fn cell(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Coordinates of node `idx` (second entry is 0 in 1D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let h = self.h();
        [(idx % self.n) as f64 * h, (idx / self.n) as f64 * h]
    }

    /// Index of the node shifted by `off` cells along `axis`, periodically.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, off: isize) -> usize {
        let n = self.n as isize;
        if axis == 0 {
            let ix = (idx % self.n) as isize;
            idx - ix as usize + (ix + off).rem_euclid(n) as usize
        } else {
            let iy = (idx / self.n) as isize;
            let ix = idx % self.n;
            ix + (iy + off).rem_euclid(n) as usize * self.n
        }
    }

    /// Signed integer wavenumbers of spectral index `idx`.
    pub fn wavenumber(&self, idx: usize) -> [f64; 2] {
        let n = self.n;
        let fold = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        [fold(idx % n), if self.d == 2 { fold(idx / n) } else { 0.0 }]
    }

    /// Symbol of the centered difference along each axis: `sin(2πξh)/h`.
    pub fn centered_symbol(&self, idx: usize) -> [f64; 2] {
        let h = self.h();
        let xi = self.wavenumber(idx);
        [
            (2.0 * std::f64::consts::PI * xi[0] * h).sin() / h,
            (2.0 * std::f64::consts::PI * xi[1] * h).sin() / h,
        ]
    }
}

/// Real values at the nodes of a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("grid function expects {} values, got {}", grid.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("grid function value at node {i} is not finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f(x, y)` at the nodes (`y = 0` in 1D).
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                f(c[0], c[1])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return invalid("grid functions live on different grids");
        }
        Ok(())
    }

    /// `⟨f, g⟩ = h^d Σ f g`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.cell() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += c * b);
    }
}

/// JSON layout `{"d", "n", "values"}` with values in node order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFunctionJson {
    pub d: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GridFunctionJson { d: self.grid.d, n: self.grid.n, values: self.values.clone() })
            .expect("grid function serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: GridFunctionJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("grid function JSON: {e}")))?;
        Self::new(SpatialGrid::new(j.d, j.n)?, j.values)
    }
}

/// Centered difference `(f_{i+1} - f_{i-1}) / 2h` along `axis`.
pub fn diff_centered(f: &GridFunction, axis: usize) -> GridFunction {
    let g = f.grid;
    let s = 0.5 / g.h();
    let v = &f.values;
    let values = (0..g.len()).map(|i| s * (v[g.shift(i, axis, 1)] - v[g.shift(i, axis, -1)])).collect();
    GridFunction { grid: g, values }
}

/// Forward difference `(f_{i+1} - f_i) / h` along `axis`.
pub fn diff_forward(f: &GridFunction, axis: usize) -> GridFunction {
    let g = f.grid;
    let s = 1.0 / g.h();
    let v = &f.values;
    let values = (0..g.len()).map(|i| s * (v[g.shift(i, axis, 1)] - v[i])).collect();
    GridFunction { grid: g, values }
}

/// Backward difference `(f_i - f_{i-1}) / h` along `axis`.
pub fn diff_backward(f: &GridFunction, axis: usize) -> GridFunction {
    let g = f.grid;
    let s = 1.0 / g.h();
    let v = &f.values;
    let values = (0..g.len()).map(|i| s * (v[i] - v[g.shift(i, axis, -1)])).collect();
    GridFunction { grid: g, values }
}

/// `Σ_i ‖D^+_i f‖²`, the discrete Dirichlet energy used by the solver.
pub fn grad_sq(f: &GridFunction) -> f64 {
    (0..f.grid.d).map(|a| diff_forward(f, a).inner(&diff_forward(f, a))).sum()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_axes(grid: &SpatialGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse { p.plan_fft_inverse(n) } else { p.plan_fft_forward(n) };
        // Rows are contiguous in x.
        plan.process(data);
        if grid.d == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for ix in 0..n {
                for iy in 0..n {
                    col[iy] = data[ix + n * iy];
                }
                plan.process(&mut col);
                for iy in 0..n {
                    data[ix + n * iy] = col[iy];
                }
            }
        }
    });
}

/// Unnormalized DFT, `F_ξ = Σ_x f_x e^{-2πi ξ·x}`.
pub fn spectrum(f: &GridFunction) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_axes(&f.grid, &mut data, false);
    data
}

/// Real part of the inverse DFT, including the `1/N^d` factor.
pub fn from_spectrum(grid: SpatialGrid, mut data: Vec<Complex64>) -> GridFunction {
    fft_axes(&grid, &mut data, true);
    let s = 1.0 / grid.len() as f64;
    GridFunction { grid, values: data.iter().map(|c| c.re * s).collect() }
}

/// Applies the Fourier multiplier `m(idx)` (indexed by spectral position).
pub fn apply_multiplier(f: &GridFunction, m: impl Fn(usize) -> Complex64) -> GridFunction {
    let mut s = spectrum(f);
    s.iter_mut().enumerate().for_each(|(i, c)| *c *= m(i));
    from_spectrum(f.grid, s)
}

/// `Σ_{|β|<=k} Π_i s_i^{2β_i}` for centered symbols `s`.
pub fn sobolev_weight(grid: &SpatialGrid, idx: usize, k: u32) -> f64 {
    let s = grid.centered_symbol(idx);
    let (a, b) = (s[0] * s[0], s[1] * s[1]);
    let mut w = 0.0;
    for j in 0..=k {
        if grid.d == 1 {
            w += a.powi(j as i32);
        } else {
            for b1 in 0..=j {
                w += a.powi(b1 as i32) * b.powi((j - b1) as i32);
            }
        }
    }
    w
}

/// Discrete `W^{k,2}` norm for `k` in `-3..=3`.
pub fn sobolev_norm(f: &GridFunction, k: i32) -> Result<f64> {
    if !(-3..=3).contains(&k) {
        return Err(Error::UnsupportedOrder { order: k, min: -3, max: 3 });
    }
    let g = f.grid;
    let s = spectrum(f);
    let kk = k.unsigned_abs();
    let sum: f64 = s
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let w = sobolev_weight(&g, i, kk);
            c.norm_sqr() * if k >= 0 { w } else { 1.0 / w }
        })
        .sum();
    // Parseval: h^d Σ f² = h^{2d} Σ |F|².
    Ok(g.cell() * sum.sqrt())
}

/// `Σ_{j<=k} max_{|β|=j} max_x |D^β f|` with centered differences.
pub fn winf_norm(f: &GridFunction, k: i32) -> Result<f64> {
    if !(0..=3).contains(&k) {
        return Err(Error::UnsupportedOrder { order: k, min: 0, max: 3 });
    }
    let d = f.grid.d;
    // Derivatives of order j, generated by applying D^c along non-decreasing axes.
    let mut level: Vec<(usize, GridFunction)> = vec![(0, f.clone())];
    let mut total = f.sup_norm();
    for _ in 1..=k {
        let mut next = Vec::new();
        for (last_axis, g) in &level {
            for axis in *last_axis..d {
                next.push((axis, diff_centered(g, axis)));
            }
        }
        total += next.iter().map(|(_, g)| g.sup_norm()).fold(0.0f64, f64::max);
        level = next;
    }
    Ok(total)
}

/// Time-indexed fields sharing one spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    time: TimeGrid,
    fields: Vec<GridFunction>,
}

impl Trajectory {
    pub fn new(time: TimeGrid, fields: Vec<GridFunction>) -> Result<Self> {
        if fields.len() != time.n_points() {
            return invalid(format!("trajectory has {} fields for {} times", fields.len(), time.n_points()));
        }
        let g = fields[0].grid;
        if fields.iter().any(|f| f.grid != g) {
            return invalid("trajectory fields must share one spatial grid");
        }
        Ok(Self { time, fields })
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn fields(&self) -> &[GridFunction] {
        &self.fields
    }

    pub fn at(&self, i: usize) -> &GridFunction {
        &self.fields[i]
    }

    pub fn spatial_grid(&self) -> &SpatialGrid {
        &self.fields[0].grid
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn last(&self) -> &GridFunction {
        &self.fields[self.fields.len() - 1]
    }

    /// Restriction to a subset of recorded times.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.time.subgrid(indices)?, indices.iter().map(|&i| self.fields[i].clone()).collect())
    }
}

/// Trapezoid rule for samples `y` at `times`.
pub fn trapezoid(times: &[f64], y: &[f64]) -> f64 {
    times.windows(2).zip(y.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn spatial_lp(f: &GridFunction, p: f64) -> f64 {
    if p.is_infinite() {
        f.sup_norm()
    } else {
        (f.grid.cell() * f.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// `(∫ (∫ |u|^κ dx)^{ρ/κ} dt)^{1/ρ}`; either exponent may be `f64::INFINITY`.
pub fn mixed_norm(u: &Trajectory, rho: f64, kap: f64) -> Result<f64> {
    if !(rho >= 1.0) || !(kap >= 1.0) {
        return Err(Error::InvalidExponent(format!("mixed norm needs exponents >= 1, got ({rho}, {kap})")));
    }
    let per_time: Vec<f64> = u.fields.iter().map(|f| spatial_lp(f, kap)).collect();
    if rho.is_infinite() {
        return Ok(per_time.iter().cloned().fold(0.0, f64::max));
    }
    let powered: Vec<f64> = per_time.iter().map(|v| v.powf(rho)).collect();
    Ok(trapezoid(u.time.times(), &powered).powf(1.0 / rho))
}

/// Whether `(ρ, κ)` is admissible for the interpolation inequality in `d`.
pub fn admissible_pair(rho: f64, kap: f64, d: usize) -> bool {
    let df = d as f64;
    let balance = 1.0 / rho + df / (2.0 * kap) >= df / 4.0 - 1e-12;
    let ranges = match d {
        1 => rho >= 4.0 && kap >= 2.0,
        2 => rho > 2.0 && kap >= 2.0 && kap.is_finite(),
        _ => false,
    };
    balance && ranges
}

/// `‖∇u‖_{L²L²} + sup_t |u_t|_{L²}`, the energy-space norm.
pub fn energy_space_norm(u: &Trajectory) -> f64 {
    let g: Vec<f64> = u.fields.iter().map(grad_sq).collect();
    let sup = u.fields.iter().map(|f| f.l2_norm()).fold(0.0, f64::max);
    trapezoid(u.time.times(), &g).sqrt() + sup
}

/// `‖u‖_{L^ρ L^κ} / (‖∇u‖_{L²L²} + sup_t |u_t|_{L²})`, zero for `u ≡ 0`.
pub fn interpolation_check(u: &Trajectory, rho: f64, kap: f64) -> Result<f64> {
    let d = u.spatial_grid().d;
    if !admissible_pair(rho, kap, d) {
        return Err(Error::InvalidExponentPair { rho, kappa: kap, d });
    }
    let num = mixed_norm(u, rho, kap)?;
    let den = energy_space_norm(u);
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// Fixed trigonometric test functions with precomputed `W^{k,∞}` norms.
///
/// 1D: the constant and `cos/sin(2πkx)`, `k = 1..4`. 2D: the constant and
/// `cos/sin(2π(k₁x + k₂y))` over eight wave vectors.
#[derive(Debug, Clone)]
pub struct TestDictionary {
    members: Vec<GridFunction>,
    winf: Vec<[f64; 4]>,
}

impl TestDictionary {
    pub fn standard(grid: SpatialGrid) -> Self {
        use std::f64::consts::PI;
        let waves: Vec<(f64, f64)> = if grid.d == 1 {
            (1..=4).map(|k| (k as f64, 0.0)).collect()
        } else {
            vec![(1., 0.), (0., 1.), (1., 1.), (1., -1.), (2., 0.), (0., 2.), (2., 1.), (1., 2.)]
        };
        let mut members = vec![GridFunction::constant(grid, 1.0)];
        for (a, b) in waves {
            members.push(GridFunction::from_fn(grid, |x, y| (2.0 * PI * (a * x + b * y)).cos()));
            members.push(GridFunction::from_fn(grid, |x, y| (2.0 * PI * (a * x + b * y)).sin()));
        }
        Self::from_members(members).expect("standard dictionary is valid")
    }

    pub fn from_members(members: Vec<GridFunction>) -> Result<Self> {
        if members.is_empty() {
            return invalid("test dictionary must be nonempty");
        }
        let winf = members
            .iter()
            .map(|m| {
                let mut w = [0.0; 4];
                for (k, slot) in w.iter_mut().enumerate() {
                    *slot = winf_norm(m, k as i32).expect("order in range");
                }
                w
            })
            .collect::<Vec<_>>();
        if winf.iter().any(|w| !(w[3] > 0.0) || !w[3].is_finite()) {
            return invalid("dictionary members need finite nonzero W^{3,inf} norms");
        }
        Ok(Self { members, winf })
    }

    pub fn members(&self) -> &[GridFunction] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `|φ_i|_{W^{k,∞}}` for `k` in `0..=3`.
    pub fn winf(&self, i: usize, k: usize) -> f64 {
        self.winf[i][k]
    }

    /// `max_φ |⟨f, φ⟩| / |φ|_{W^{k,∞}}`.
    pub fn dual_sup(&self, f: &GridFunction, k: usize) -> f64 {
        self.members
            .iter()
            .zip(&self.winf)
            .map(|(m, w)| f.inner(m).abs() / w[k])
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g1(n: usize) -> SpatialGrid {
        SpatialGrid::new(1, n).unwrap()
    }

    #[test]
    fn shift_wraps_both_axes() {
        let g = SpatialGrid::new(2, 8).unwrap();
        assert_eq!(g.shift(7, 0, 1), 0);
        assert_eq!(g.shift(0, 0, -1), 7);
        assert_eq!(g.shift(3, 1, -1), 3 + 56);
        assert_eq!(g.shift(60, 1, 1), 4);
    }

    #[test]
    fn sobolev_matches_physical_differences() {
        let g = SpatialGrid::new(2, 16).unwrap();
        let f = GridFunction::from_fn(g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos() + x * (1.0 - x));
        let dx = diff_centered(&f, 0);
        let dy = diff_centered(&f, 1);
        let phys1 = f.inner(&f) + dx.inner(&dx) + dy.inner(&dy);
        assert!((sobolev_norm(&f, 1).unwrap().powi(2) - phys1).abs() < 1e-10 * phys1);
        let dxx = diff_centered(&dx, 0);
        let dxy = diff_centered(&dx, 1);
        let dyy = diff_centered(&dy, 1);
        let phys2 = phys1 + dxx.inner(&dxx) + dxy.inner(&dxy) + dyy.inner(&dyy);
        assert!((sobolev_norm(&f, 2).unwrap().powi(2) - phys2).abs() < 1e-10 * phys2);
    }

    #[test]
    fn negative_norm_of_single_mode() {
        let f = GridFunction::from_fn(g1(256), |x, _| (2.0 * PI * x).sin());
        let want = 0.5f64.sqrt() / (1.0 + 4.0 * PI * PI).sqrt();
        assert!((sobolev_norm(&f, -1).unwrap() - want).abs() < 1e-3 * want);
        assert!(matches!(sobolev_norm(&f, 4), Err(Error::UnsupportedOrder { .. })));
        assert_eq!(sobolev_norm(&GridFunction::zeros(g1(16)), -2).unwrap(), 0.0);
    }

    #[test]
    fn winf_of_sine() {
        let n = 256;
        let f = GridFunction::from_fn(g1(n), |x, _| (2.0 * PI * x).sin());
        let h = 1.0 / n as f64;
        assert!((winf_norm(&f, 1).unwrap() - (1.0 + 2.0 * PI)).abs() < 10.0 * h * h * 2.0 * PI * 4.0 * PI * PI);
        assert!((winf_norm(&GridFunction::constant(g1(8), -2.5), 3).unwrap() - 2.5).abs() < 1e-15);
        assert!(winf_norm(&f, 4).is_err());
    }

    #[test]
    fn mixed_norm_closed_form() {
        let g = g1(256);
        let tg = TimeGrid::uniform(1.0, 2000).unwrap();
        let fields = tg
            .times()
            .iter()
            .map(|&t| GridFunction::from_fn(g, |x, _| (-t).exp() * (2.0 * PI * x).sin()))
            .collect();
        let u = Trajectory::new(tg.clone(), fields).unwrap();
        let want = ((1.0 - (-2.0f64).exp()) / 4.0).sqrt();
        assert!((mixed_norm(&u, 2.0, 2.0).unwrap() - want).abs() < 1e-3);
        let ones = Trajectory::new(tg.clone(), vec![GridFunction::constant(g, 1.0); tg.n_points()]).unwrap();
        for (r, k) in [(1.0, 1.0), (3.0, f64::INFINITY), (f64::INFINITY, 2.0)] {
            assert!((mixed_norm(&ones, r, k).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(mixed_norm(&ones, 0.5, 2.0).is_err());
    }

    #[test]
    fn interpolation_pairs() {
        let g = g1(64);
        let tg = TimeGrid::uniform(1.0, 4).unwrap();
        let u = Trajectory::new(tg.clone(), vec![GridFunction::zeros(g); 5]).unwrap();
        assert_eq!(interpolation_check(&u, 4.0, f64::INFINITY).unwrap(), 0.0);
        assert!(matches!(interpolation_check(&u, 3.0, 2.0), Err(Error::InvalidExponentPair { .. })));
    }

    #[test]
    fn dictionary_sizes() {
        assert_eq!(TestDictionary::standard(g1(32)).len(), 9);
        assert_eq!(TestDictionary::standard(SpatialGrid::new(2, 16).unwrap()).len(), 17);
    }

    #[test]
    fn grid_function_json_round_trip() {
        let f = GridFunction::from_fn(g1(8), |x, _| x * x);
        assert_eq!(GridFunction::from_json(&f.to_json()).unwrap(), f);
        assert!(GridFunction::from_json(r#"{"d":1,"n":8,"values":[1.0]}"#).is_err());
    }
}
