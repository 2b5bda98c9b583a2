//! Unbounded rough drivers and the smoothing/translation operators that go
//! with them.
//!
//! Noise coefficients `(σ, ν)` define first-order operators
//! `G_k u = σ^{ki} D_i u + ν^k u` and their formal adjoints
//! `G*_k φ = -D_i(σ^{ki} φ) + ν^k φ`, where `D_i` is the centered difference.
//! Since `D_i` is skew-adjoint on the torus, `⟨G_k u, φ⟩ = ⟨u, G*_k φ⟩` holds
//! exactly on the grid. A rough path `(Z, ZZ)` then yields
//!
//! * `B*_{st} = Z^k_{st} G*_k`,
//! * `𝔹*_{st} = ZZ^{kl}_{st} G*_k G*_l`,
//!
//! which satisfy `δ𝔹*_{sθt} = B*_{sθ} B*_{θt}` whenever the path satisfies
//! Chen's relation `δZZ_{sθt} = Z_{sθ} ⊗ Z_{θt}`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fields::{
    apply_multiplier, diff_centered, from_spectrum, sobolev_weight, spectrum, GridFunction, SpatialGrid,
    TestDictionary,
};
use crate::roughpath::{omega_z, ControlGrid, RoughPath};

/// Noise data: `σ` is `K x d` (entry `k*d + i`), `ν` has `K` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCoefficients {
    grid: SpatialGrid,
    k: usize,
    sigma: Vec<GridFunction>,
    nu: Vec<GridFunction>,
    sigma_zero: Vec<bool>,
    nu_zero: Vec<bool>,
}

impl NoiseCoefficients {
    pub fn new(grid: SpatialGrid, k: usize, sigma: Vec<GridFunction>, nu: Vec<GridFunction>) -> Result<Self> {
        let d = grid.d();
        if k == 0 {
            return invalid("noise needs K >= 1");
        }
        if sigma.len() != k * d || nu.len() != k {
            return invalid(format!(
                "noise expects {} sigma fields and {} nu fields, got {} and {}",
                k * d,
                k,
                sigma.len(),
                nu.len()
            ));
        }
        if sigma.iter().chain(&nu).any(|f| *f.grid() != grid) {
            return invalid("noise coefficients must live on the solver grid");
        }
        let sigma_zero = (0..k).map(|c| (0..d).all(|i| sigma[c * d + i].sup_norm() == 0.0)).collect();
        let nu_zero = nu.iter().map(|f| f.sup_norm() == 0.0).collect();
        Ok(Self { grid, k, sigma, nu, sigma_zero, nu_zero })
    }

    pub fn zero(grid: SpatialGrid, k: usize) -> Self {
        let z = GridFunction::zeros(grid);
        Self::new(grid, k, vec![z.clone(); k * grid.d()], vec![z; k]).expect("zero noise is valid")
    }

    /// Spatially constant coefficients; `sigma` is `K x d` row-major.
    pub fn constant(grid: SpatialGrid, k: usize, sigma: &[f64], nu: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            k,
            sigma.iter().map(|&s| GridFunction::constant(grid, s)).collect(),
            nu.iter().map(|&v| GridFunction::constant(grid, v)).collect(),
        )
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self, k: usize, i: usize) -> &GridFunction {
        &self.sigma[k * self.grid.d() + i]
    }

    pub fn nu(&self, k: usize) -> &GridFunction {
        &self.nu[k]
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_zero.iter().chain(&self.nu_zero).all(|&z| z)
    }

    /// `(max_k |σ^k|_{W^{3,∞}}, max_k |ν^k|_{W^{2,∞}})`.
    pub fn regularity(&self) -> (f64, f64) {
        let s = self.sigma.iter().map(|f| crate::fields::winf_norm(f, 3).unwrap()).fold(0.0, f64::max);
        let n = self.nu.iter().map(|f| crate::fields::winf_norm(f, 2).unwrap()).fold(0.0, f64::max);
        (s, n)
    }

    /// Same `σ`, `ν` multiplied by `c`.
    pub fn with_nu_scaled(&self, c: f64) -> Self {
        let nu = self.nu.iter().map(|f| f.scale(c)).collect();
        Self::new(self.grid, self.k, self.sigma.clone(), nu).expect("scaling keeps shapes")
    }

    /// `G_k u = σ^{ki} D_i u + ν^k u`.
    pub fn apply_g(&self, k: usize, u: &GridFunction) -> GridFunction {
        let mut out = if self.nu_zero[k] { GridFunction::zeros(self.grid) } else { self.nu[k].mul(u) };
        if !self.sigma_zero[k] {
            for i in 0..self.grid.d() {
                out = out.add(&self.sigma(k, i).mul(&diff_centered(u, i)));
            }
        }
        out
    }

    /// `G*_k φ = -D_i(σ^{ki} φ) + ν^k φ`.
    pub fn apply_g_star(&self, k: usize, phi: &GridFunction) -> GridFunction {
        let mut out = if self.nu_zero[k] { GridFunction::zeros(self.grid) } else { self.nu[k].mul(phi) };
        if !self.sigma_zero[k] {
            for i in 0..self.grid.d() {
                out.axpy(-1.0, &diff_centered(&self.sigma(k, i).mul(phi), i));
            }
        }
        out
    }

    /// `L u = Σ_k v^k G_k u` for a fixed vector `v` (a path slope).
    pub fn apply_weighted(&self, v: &[f64], u: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(self.grid);
        for (k, &c) in v.iter().enumerate() {
            if c != 0.0 && !(self.sigma_zero[k] && self.nu_zero[k]) {
                out.axpy(c, &self.apply_g(k, u));
            }
        }
        out
    }

    /// `max_x Σ_i |Σ_k σ^{ki}(x) v^k|`, the transport speed for slope `v`.
    pub fn transport_speed(&self, v: &[f64]) -> f64 {
        let d = self.grid.d();
        let mut worst: f64 = 0.0;
        for x in 0..self.grid.len() {
            let mut s = 0.0;
            for i in 0..d {
                let c: f64 = (0..self.k).map(|k| self.sigma(k, i).values()[x] * v[k]).sum();
                s += c.abs();
            }
            worst = worst.max(s);
        }
        worst
    }

    /// `max_x |Σ_k ν^k(x) v^k|`.
    pub fn zero_order_rate(&self, v: &[f64]) -> f64 {
        (0..self.grid.len())
            .map(|x| (0..self.k).map(|k| self.nu[k].values()[x] * v[k]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Unbounded rough driver generated by `(σ, ν)` and a rough path.
///
/// The scale constant `C` in `ω_B = C·ω_Z` is the smallest value for which
/// the driver bounds hold on every grid pair and dictionary member, measured
/// in the `W^{k,2}` scale at construction.
#[derive(Debug, Clone)]
pub struct Driver {
    path: Arc<RoughPath>,
    noise: Arc<NoiseCoefficients>,
    dict: Arc<TestDictionary>,
    omega_z: Arc<ControlGrid>,
    constant: f64,
}

/// Largest ratios found by [`driver_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverBounds {
    /// `max ‖B*φ‖_k / (ω_Z^α ‖φ‖_{k+1})` for `k = 0, 2`.
    pub b_raw: [f64; 2],
    /// `max ‖𝔹*φ‖_k / (ω_Z^{2α} ‖φ‖_{k+2})` for `k = 0, 1`.
    pub bb_raw: [f64; 2],
    /// The same ratios with `ω_B = C ω_Z` in place of `ω_Z`; at most 1.
    pub b: [f64; 2],
    pub bb: [f64; 2],
    /// `max(b_raw^{1/α}, bb_raw^{1/(2α)})`, the smallest admissible `C`.
    pub implied_constant: f64,
}

/// Gram matrix `⟨v_a, v_b⟩_{W^{k,2}}` of a family of fields.
fn sobolev_gram(fields: &[GridFunction], k: u32) -> Vec<f64> {
    let g = *fields[0].grid();
    let specs: Vec<Vec<Complex64>> = fields.iter().map(spectrum).collect();
    let w: Vec<f64> = (0..g.len()).map(|i| sobolev_weight(&g, i, k)).collect();
    let m = fields.len();
    let mut out = vec![0.0; m * m];
    let c = g.cell() * g.cell();
    for a in 0..m {
        for b in a..m {
            let s: f64 = (0..g.len()).map(|i| w[i] * (specs[a][i] * specs[b][i].conj()).re).sum();
            out[a * m + b] = c * s;
            out[b * m + a] = c * s;
        }
    }
    out
}

fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            s += v[a] * m[a * n + b] * v[b];
        }
    }
    s.max(0.0)
}

fn scan_bounds(path: &RoughPath, noise: &NoiseCoefficients, dict: &TestDictionary, omega: &ControlGrid) -> ([f64; 2], [f64; 2]) {
    let kk = noise.k();
    let alpha = path.alpha();
    let n = path.grid().n_points();
    let mut b_raw = [0.0f64; 2];
    let mut bb_raw = [0.0f64; 2];
    if noise.is_zero() {
        return (b_raw, bb_raw);
    }
    for phi in dict.members() {
        let first: Vec<GridFunction> = (0..kk).map(|k| noise.apply_g_star(k, phi)).collect();
        let mut second = Vec::with_capacity(kk * kk);
        for k in 0..kk {
            for l in 0..kk {
                second.push(noise.apply_g_star(k, &first[l]));
            }
        }
        let gb = [sobolev_gram(&first, 0), sobolev_gram(&first, 2)];
        let gbb = [sobolev_gram(&second, 0), sobolev_gram(&second, 1)];
        let nb = [crate::fields::sobolev_norm(phi, 1).unwrap(), crate::fields::sobolev_norm(phi, 3).unwrap()];
        let nbb = [crate::fields::sobolev_norm(phi, 2).unwrap(), crate::fields::sobolev_norm(phi, 3).unwrap()];
        for i in 0..n {
            for j in i + 1..n {
                let w = omega.get(i, j);
                if w <= 0.0 {
                    continue;
                }
                let (z, zz) = (path.z().get(i, j), path.zz().get(i, j));
                let (wa, w2a) = (w.powf(alpha), w.powf(2.0 * alpha));
                for c in 0..2 {
                    b_raw[c] = b_raw[c].max(quad_form(&gb[c], z).sqrt() / (wa * nb[c]));
                    bb_raw[c] = bb_raw[c].max(quad_form(&gbb[c], zz).sqrt() / (w2a * nbb[c]));
                }
            }
        }
    }
    (b_raw, bb_raw)
}

fn implied_constant(alpha: f64, b: [f64; 2], bb: [f64; 2]) -> f64 {
    let rb = b[0].max(b[1]);
    let rbb = bb[0].max(bb[1]);
    rb.powf(1.0 / alpha).max(rbb.powf(0.5 / alpha))
}

impl Driver {
    /// Builds the driver with the standard dictionary of the noise grid.
    pub fn new(path: Arc<RoughPath>, noise: Arc<NoiseCoefficients>) -> Result<Self> {
        let dict = Arc::new(TestDictionary::standard(*noise.grid()));
        Self::with_dictionary(path, noise, dict)
    }

    pub fn with_dictionary(path: Arc<RoughPath>, noise: Arc<NoiseCoefficients>, dict: Arc<TestDictionary>) -> Result<Self> {
        if path.k() != noise.k() {
            return invalid(format!("rough path has K={} but noise has K={}", path.k(), noise.k()));
        }
        if dict.members()[0].grid() != noise.grid() {
            return invalid("dictionary and noise live on different grids");
        }
        let omega = Arc::new(omega_z(&path)?);
        let (b, bb) = scan_bounds(&path, &noise, &dict, &omega);
        let constant = implied_constant(path.alpha(), b, bb);
        Ok(Self { path, noise, dict, omega_z: omega, constant })
    }

    pub fn path(&self) -> &RoughPath {
        &self.path
    }

    pub fn noise(&self) -> &NoiseCoefficients {
        &self.noise
    }

    pub fn dictionary(&self) -> &TestDictionary {
        &self.dict
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn omega_z(&self) -> &ControlGrid {
        &self.omega_z
    }

    /// `ω_B = C·ω_Z`.
    pub fn omega_b(&self) -> ControlGrid {
        self.omega_z.scale(self.constant)
    }

    pub fn omega_b_at(&self, i: usize, j: usize) -> f64 {
        self.constant * self.omega_z.get(i, j)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.grid() != self.noise.grid() {
            return invalid("field and driver live on different spatial grids");
        }
        Ok(())
    }
}

/// `B*_{st} φ = Σ_k Z^k_{st} G*_k φ` for grid indices `s <= t`.
pub fn b_star(d: &Driver, phi: &GridFunction, s: usize, t: usize) -> Result<GridFunction> {
    d.check(phi)?;
    let z = d.path.z().get(s, t);
    let mut out = GridFunction::zeros(*phi.grid());
    for (k, &c) in z.iter().enumerate() {
        if c != 0.0 {
            out.axpy(c, &d.noise.apply_g_star(k, phi));
        }
    }
    Ok(out)
}

/// `𝔹*_{st} φ = Σ_{k,l} ZZ^{kl}_{st} G*_k G*_l φ`.
pub fn bb_star(d: &Driver, phi: &GridFunction, s: usize, t: usize) -> Result<GridFunction> {
    d.check(phi)?;
    let kk = d.noise.k();
    let zz = d.path.zz().get(s, t);
    let mut out = GridFunction::zeros(*phi.grid());
    for l in 0..kk {
        if (0..kk).all(|k| zz[k * kk + l] == 0.0) {
            continue;
        }
        let inner = d.noise.apply_g_star(l, phi);
        for k in 0..kk {
            let c = zz[k * kk + l];
            if c != 0.0 {
                out.axpy(c, &d.noise.apply_g_star(k, &inner));
            }
        }
    }
    Ok(out)
}

/// `B_{st} u = Σ_k Z^k_{st} G_k u`, the adjoint of [`b_star`].
pub fn b_forward(d: &Driver, u: &GridFunction, s: usize, t: usize) -> Result<GridFunction> {
    d.check(u)?;
    Ok(d.noise.apply_weighted(d.path.z().get(s, t), u))
}

/// `𝔹_{st} u = Σ_{k,l} ZZ^{kl}_{st} G_l G_k u`, the adjoint of [`bb_star`].
pub fn bb_forward(d: &Driver, u: &GridFunction, s: usize, t: usize) -> Result<GridFunction> {
    d.check(u)?;
    let kk = d.noise.k();
    let zz = d.path.zz().get(s, t);
    let mut out = GridFunction::zeros(*u.grid());
    for k in 0..kk {
        let inner = d.noise.apply_g(k, u);
        for l in 0..kk {
            let c = zz[k * kk + l];
            if c != 0.0 {
                out.axpy(c, &d.noise.apply_g(l, &inner));
            }
        }
    }
    Ok(out)
}

/// At most `m` evenly spread indices of `0..n`, always including both ends.
pub(crate) fn spread_indices(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    let mut v: Vec<usize> = (0..m).map(|i| ((i as f64) * (n - 1) as f64 / (m - 1) as f64).round() as usize).collect();
    v.dedup();
    v
}

/// `max ‖δ𝔹*_{sθt}φ - B*_{sθ}B*_{θt}φ‖_{L²} / |φ|_{W^{3,∞}}` over grid
/// triples and dictionary members. Grids with more than 17 points are
/// checked on 17 evenly spread indices, since the cost is cubic.
pub fn driver_chen_residual(d: &Driver, dict: &TestDictionary) -> Result<f64> {
    let idx = spread_indices(d.path.grid().n_points(), 17);
    let mut worst: f64 = 0.0;
    for (pi, phi) in dict.members().iter().enumerate() {
        let norm = dict.winf(pi, 3);
        for a in 0..idx.len() {
            for c in a + 2..idx.len() {
                let (s, t) = (idx[a], idx[c]);
                let whole = bb_star(d, phi, s, t)?;
                for &m in &idx[a + 1..c] {
                    let mut lhs = whole.sub(&bb_star(d, phi, s, m)?);
                    lhs.axpy(-1.0, &bb_star(d, phi, m, t)?);
                    let rhs = b_star(d, &b_star(d, phi, m, t)?, s, m)?;
                    worst = worst.max(lhs.sub(&rhs).l2_norm() / norm);
                }
            }
        }
    }
    Ok(worst)
}

/// Driver bounds measured over every grid pair and dictionary member.
pub fn driver_bound_check(d: &Driver, dict: &TestDictionary) -> Result<DriverBounds> {
    if dict.members()[0].grid() != d.noise.grid() {
        return invalid("dictionary and driver live on different grids");
    }
    let (b_raw, bb_raw) = scan_bounds(&d.path, &d.noise, dict, &d.omega_z);
    let alpha = d.path.alpha();
    let c = d.constant;
    let norm = |x: f64, e: f64| if x == 0.0 { 0.0 } else { x / c.powf(e) };
    Ok(DriverBounds {
        b_raw,
        bb_raw,
        b: [norm(b_raw[0], alpha), norm(b_raw[1], alpha)],
        bb: [norm(bb_raw[0], 2.0 * alpha), norm(bb_raw[1], 2.0 * alpha)],
        implied_constant: implied_constant(alpha, b_raw, bb_raw),
    })
}

/// Driver with `ν` replaced by `2ν`; path, `σ` and dictionary are shared and
/// the scale constant is re-measured.
pub fn hat_driver(d: &Driver) -> Result<Driver> {
    let noise = Arc::new(d.noise.with_nu_scaled(2.0));
    let (b, bb) = scan_bounds(&d.path, &noise, &d.dict, &d.omega_z);
    Ok(Driver {
        path: d.path.clone(),
        noise,
        dict: d.dict.clone(),
        omega_z: d.omega_z.clone(),
        constant: implied_constant(d.path.alpha(), b, bb),
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("smoothing parameter must lie in (0,1), got {eta}"));
    }
    Ok(())
}

/// Normalized bump `exp(-1/(1-|x|²))`, scaled to radius `eta`, sampled at the
/// node offsets of the torus. Weights sum to exactly one.
pub fn mollifier_weights(grid: SpatialGrid, eta: f64) -> Result<GridFunction> {
    check_eta(eta)?;
    let fold = |x: f64| if x > 0.5 { x - 1.0 } else { x };
    let mut w = GridFunction::from_fn(grid, |x, y| {
        let r2 = (fold(x).powi(2) + fold(y).powi(2)) / (eta * eta);
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    });
    let mass: f64 = w.values().iter().sum();
    if mass == 0.0 {
        w.values_mut()[0] = 1.0;
    } else {
        w.values_mut().iter_mut().for_each(|v| *v /= mass);
    }
    Ok(w)
}

/// Periodic convolution with the bump of radius `eta`.
pub fn mollify(f: &GridFunction, eta: f64) -> Result<GridFunction> {
    let w = mollifier_weights(*f.grid(), eta)?;
    let ws = spectrum(&w);
    let mut fs = spectrum(f);
    fs.iter_mut().zip(&ws).for_each(|(a, b)| *a *= b);
    Ok(from_spectrum(*f.grid(), fs))
}

/// Smoothing families. Resolvent and heat use the Laplacian built from
/// centered differences, `-Σ_i D_i²`, so they act diagonally in the same
/// Fourier basis as the discrete Sobolev norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JVariant {
    Resolvent,
    Heat,
    Mollifier,
}

fn centered_laplacian_symbol(grid: &SpatialGrid, idx: usize) -> f64 {
    let s = grid.centered_symbol(idx);
    s[0] * s[0] + s[1] * s[1]
}

/// Fourier multiplier of `J_η`, indexed by spectral position.
pub fn smoothing_symbol(grid: SpatialGrid, eta: f64, variant: JVariant) -> Result<Vec<f64>> {
    check_eta(eta)?;
    Ok(match variant {
        JVariant::Resolvent => (0..grid.len()).map(|i| 1.0 / (1.0 + eta * eta * centered_laplacian_symbol(&grid, i))).collect(),
        JVariant::Heat => (0..grid.len()).map(|i| (-eta * eta * centered_laplacian_symbol(&grid, i)).exp()).collect(),
        JVariant::Mollifier => spectrum(&mollifier_weights(grid, eta)?).iter().map(|c| c.re).collect(),
    })
}

pub fn smoothing_j(f: &GridFunction, eta: f64, variant: JVariant) -> Result<GridFunction> {
    let m = smoothing_symbol(*f.grid(), eta, variant)?;
    Ok(apply_multiplier(f, |i| Complex64::new(m[i], 0.0)))
}

/// Operator-norm constants of `J_η` between discrete Sobolev spaces:
/// `j1 = |J|_{k→k}`, `j2 = η |J|_{k→k+1}`, `j3 = η^{-m} |I - J|_{k+m→k}`.
///
/// The suprema run over wavenumbers `|ξ_i| <= N/4`. Beyond that band the
/// centered symbol `sin(2πξh)/h` folds back towards zero, so the discrete
/// norms treat the Nyquist mode like a constant and any convolution that
/// damps it would get an `η^{-m}` constant for reasons unrelated to `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JConstants {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

pub fn smoothing_constants(grid: SpatialGrid, eta: f64, variant: JVariant, k: u32, m: u32) -> Result<JConstants> {
    if k + 1 > 3 || k + m > 3 || m == 0 {
        return Err(Error::UnsupportedOrder { order: (k + m.max(1)) as i32, min: 0, max: 3 });
    }
    let sym = smoothing_symbol(grid, eta, variant)?;
    let mut c = JConstants { j1: 0.0, j2: 0.0, j3: 0.0 };
    let band = (grid.n() / 4) as f64;
    for (i, &v) in sym.iter().enumerate() {
        if grid.wavenumber(i).iter().any(|x| x.abs() > band) {
            continue;
        }
        let wk = sobolev_weight(&grid, i, k);
        c.j1 = c.j1.max(v.abs());
        c.j2 = c.j2.max(eta * v.abs() * (sobolev_weight(&grid, i, k + 1) / wk).sqrt());
        c.j3 = c.j3.max((1.0 - v).abs() * (wk / sobolev_weight(&grid, i, k + m)).sqrt() / eta.powi(m as i32));
    }
    Ok(c)
}

fn smooth_step(u: f64) -> f64 {
    let e = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (e(u), e(1.0 - u));
    a / (a + b)
}

/// `θ_η(r)`: 1 for `r <= 1 - 3η`, 0 for `r >= 1 - 2η`, smooth in between.
pub fn theta_ramp(r: f64, eta: f64) -> f64 {
    smooth_step((1.0 - 2.0 * eta - r) / eta)
}

/// `Θ_η(x) = θ_η(|y|²)` in the centered coordinates `y = 2(x - ½)`, which
/// map the torus cell onto `[-1, 1)^d`.
pub fn theta_field(grid: SpatialGrid, eta: f64) -> Result<GridFunction> {
    if !(eta > 0.0 && eta < 1.0 / 6.0) {
        return invalid(format!("cutoff parameter must lie in (0, 1/6), got {eta}"));
    }
    let d = grid.d();
    Ok(GridFunction::from_fn(grid, |x, y| {
        let y1 = 2.0 * (x - 0.5);
        let y2 = if d == 2 { 2.0 * (y - 0.5) } else { 0.0 };
        theta_ramp(y1 * y1 + y2 * y2, eta)
    }))
}

pub fn cutoff_theta(f: &GridFunction, eta: f64) -> Result<GridFunction> {
    Ok(theta_field(*f.grid(), eta)?.mul(f))
}

/// `τ_a f(x) = f(x - a)` by a Fourier phase shift.
pub fn translate(f: &GridFunction, a: &[f64]) -> Result<GridFunction> {
    let g = *f.grid();
    if a.len() != g.d() {
        return invalid(format!("shift must have {} components", g.d()));
    }
    let a2 = [a[0], if g.d() == 2 { a[1] } else { 0.0 }];
    Ok(apply_multiplier(f, |i| {
        let xi = g.wavenumber(i);
        Complex64::from_polar(1.0, -2.0 * PI * (xi[0] * a2[0] + xi[1] * a2[1]))
    }))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return invalid(format!("epsilon must be positive, got {eps}"));
    }
    Ok(())
}

/// `Δ_ε^a f = (τ_{-εa} f - τ_{εa} f) / 2ε`, which tends to `a·∇f`.
pub fn finite_difference(f: &GridFunction, a: &[f64], eps: f64) -> Result<GridFunction> {
    check_eps(eps)?;
    let plus: Vec<f64> = a.iter().map(|x| eps * x).collect();
    let minus: Vec<f64> = plus.iter().map(|x| -x).collect();
    Ok(translate(f, &minus)?.sub(&translate(f, &plus)?).scale(0.5 / eps))
}

/// `m_ε^a f = ½(τ_{-εa} + τ_{εa}) f`.
pub fn local_mean(f: &GridFunction, a: &[f64], eps: f64) -> Result<GridFunction> {
    check_eps(eps)?;
    let plus: Vec<f64> = a.iter().map(|x| eps * x).collect();
    let minus: Vec<f64> = plus.iter().map(|x| -x).collect();
    Ok(translate(f, &minus)?.add(&translate(f, &plus)?).scale(0.5))
}
