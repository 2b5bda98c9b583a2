//! Classical variational solver for the parabolic equation
//! `∂_t u = A u + (σ^{ki} ∂_i u + ν^k u) ż^k` on the periodic grid, with a
//! piecewise-linear driver `z`.
//!
//! The elliptic part `A u = ∂_i(a^{ij} ∂_j u) + b^i ∂_i u + c u` is discretized
//! as `Σ_i D^-_i(a^{ii}_face D^+_i u) + D_1(a^{12} D_2 u) + D_2(a^{12} D_1 u) +
//! b·D u + c u`, with face values `a_{i+½} = ½(a_i + a_{i+1})` and centered
//! `D`. Summation by parts then gives the weak form used by [`apply_a_weak`]
//! exactly, so the discrete weak identity is the scheme itself.
//!
//! One step over `[t_n, t_{n+1}]` with segment slope `ż`:
//!
//! ```text
//! (I - θ dt A^{n+1}) u^{n+1} = e^{dt ż^k G_k} u^n + (1-θ) dt A^n u^n
//! ```
//!
//! The noise exponential is summed as a Taylor series; with centered
//! differences `σ·D` is skew-adjoint, so the exponential is an isometry up to
//! the `ν` part and the transport stays stable under the CFL limit
//! `dt <= h / (max|σ ż| + max|b|)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::driver::{spread_indices, Driver, NoiseCoefficients};
use crate::error::{invalid, Error, Result};
use crate::fields::{
    diff_backward, diff_centered, diff_forward, from_spectrum, grad_sq, spectrum, trapezoid, GridFunction,
    SpatialGrid, Trajectory,
};
use crate::roughpath::{ControlGrid, Path1, TimeGrid};
use crate::sewing::gronwall_bound;

/// A scalar coefficient, possibly varying in space and time.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(GridFunction),
    TimeDependent(Arc<dyn Fn(f64) -> GridFunction + Send + Sync>),
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Field(g) => write!(f, "Field(N={})", g.grid().n()),
            Self::TimeDependent(_) => write!(f, "TimeDependent(..)"),
        }
    }
}

impl Coefficient {
    pub fn at(&self, grid: SpatialGrid, t: f64) -> GridFunction {
        match self {
            Self::Constant(c) => GridFunction::constant(grid, *c),
            Self::Field(g) => g.clone(),
            Self::TimeDependent(f) => f(t),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Self::TimeDependent(_))
    }

    fn check(&self, grid: SpatialGrid) -> Result<()> {
        let g = match self {
            Self::Constant(c) if !c.is_finite() => return invalid("coefficient constant is not finite"),
            Self::Constant(_) => return Ok(()),
            Self::Field(g) => g.clone(),
            Self::TimeDependent(f) => f(0.0),
        };
        if *g.grid() != grid {
            return invalid("coefficient field lives on a different grid");
        }
        if !g.is_finite() {
            return invalid("coefficient field has non-finite values");
        }
        Ok(())
    }
}

/// `a` holds `[a11]` in 1D and `[a11, a12, a22]` in 2D.
#[derive(Debug, Clone)]
pub struct EllipticCoefficients {
    grid: SpatialGrid,
    a: Vec<Coefficient>,
    b: Vec<Coefficient>,
    c: Coefficient,
    m: f64,
    big_m: f64,
    r: f64,
    q: f64,
}

#[allow(clippy::too_many_arguments)]
impl EllipticCoefficients {
    pub fn new(
        grid: SpatialGrid,
        a: Vec<Coefficient>,
        b: Vec<Coefficient>,
        c: Coefficient,
        m: f64,
        big_m: f64,
        r: f64,
        q: f64,
    ) -> Result<Self> {
        let d = grid.d();
        let na = if d == 1 { 1 } else { 3 };
        if a.len() != na || b.len() != d {
            return invalid(format!("expected {na} diffusion and {d} drift components, got {} and {}", a.len(), b.len()));
        }
        if !(m > 0.0) || !(big_m.is_finite()) || m > big_m {
            return invalid(format!("ellipticity bounds need 0 < m <= M, got m={m}, M={big_m}"));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::InvalidExponent(format!("r must lie in [1, inf), got {r}")));
        }
        let df = d as f64;
        if !(q > 1.0_f64.max(df / 2.0)) || 1.0 / r + df / (2.0 * q) > 1.0 + 1e-12 {
            return Err(Error::InvalidExponent(format!(
                "(r, q) = ({r}, {q}) violates 1/r + d/(2q) <= 1, q > max(1, d/2)"
            )));
        }
        for coef in a.iter().chain(&b).chain(std::iter::once(&c)) {
            coef.check(grid)?;
        }
        Ok(Self { grid, a, b, c, m, big_m, r, q })
    }

    /// `a = a0·I`, `b = c = 0`, `m = M = a0`, `r = q = 2`.
    pub fn heat(grid: SpatialGrid, a0: f64) -> Result<Self> {
        let d = grid.d();
        let a = if d == 1 {
            vec![Coefficient::Constant(a0)]
        } else {
            vec![Coefficient::Constant(a0), Coefficient::Constant(0.0), Coefficient::Constant(a0)]
        };
        Self::new(grid, a, vec![Coefficient::Constant(0.0); d], Coefficient::Constant(0.0), a0, a0, 2.0, 2.0)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_time_dependent(&self) -> bool {
        self.a.iter().chain(&self.b).chain(std::iter::once(&self.c)).any(|c| c.is_time_dependent())
    }

    pub fn a_at(&self, t: f64) -> Vec<GridFunction> {
        self.a.iter().map(|c| c.at(self.grid, t)).collect()
    }

    pub fn b_at(&self, t: f64) -> Vec<GridFunction> {
        self.b.iter().map(|c| c.at(self.grid, t)).collect()
    }

    pub fn c_at(&self, t: f64) -> GridFunction {
        self.c.at(self.grid, t)
    }

    /// Discrete operator frozen at time `t`.
    pub fn operator_at(&self, t: f64) -> Operator {
        let g = self.grid;
        let a = self.a_at(t);
        let (diag, a12) = if g.d() == 1 { (vec![a[0].clone()], None) } else { (vec![a[0].clone(), a[2].clone()], Some(a[1].clone())) };
        let faces = diag.iter().enumerate().map(|(axis, f)| face_average(f, axis)).collect();
        Operator { grid: g, faces, a12, b: self.b_at(t), c: self.c_at(t) }
    }
}

fn face_average(f: &GridFunction, axis: usize) -> Vec<f64> {
    let g = *f.grid();
    let v = f.values();
    (0..g.len()).map(|i| 0.5 * (v[i] + v[g.shift(i, axis, 1)])).collect()
}

/// `A_h` at a fixed time. `faces[axis][i]` is the diffusivity on the face
/// between node `i` and its `+axis` neighbour.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: SpatialGrid,
    faces: Vec<Vec<f64>>,
    a12: Option<GridFunction>,
    b: Vec<GridFunction>,
    c: GridFunction,
}

impl Operator {
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let g = self.grid;
        let mut out = self.c.mul(u);
        for (axis, face) in self.faces.iter().enumerate() {
            let mut flux = diff_forward(u, axis);
            flux.values_mut().iter_mut().zip(face).for_each(|(f, a)| *f *= a);
            out = out.add(&diff_backward(&flux, axis));
        }
        if let Some(a12) = &self.a12 {
            let dx = diff_centered(u, 0);
            let dy = diff_centered(u, 1);
            out = out.add(&diff_centered(&a12.mul(&dy), 0)).add(&diff_centered(&a12.mul(&dx), 1));
        }
        for (axis, b) in self.b.iter().enumerate() {
            out = out.add(&b.mul(&diff_centered(u, axis)));
        }
        debug_assert_eq!(*out.grid(), g);
        out
    }

    /// `⟨A_h u, φ⟩` written in weak form.
    pub fn weak(&self, u: &GridFunction, phi: &GridFunction) -> f64 {
        let cell = self.grid.cell();
        let mut s = 0.0;
        for (axis, face) in self.faces.iter().enumerate() {
            let (du, dp) = (diff_forward(u, axis), diff_forward(phi, axis));
            s -= cell * face.iter().zip(du.values()).zip(dp.values()).map(|((a, x), y)| a * x * y).sum::<f64>();
        }
        if let Some(a12) = &self.a12 {
            let (ux, uy) = (diff_centered(u, 0), diff_centered(u, 1));
            let (px, py) = (diff_centered(phi, 0), diff_centered(phi, 1));
            s -= a12.mul(&uy).inner(&px) + a12.mul(&ux).inner(&py);
        }
        for (axis, b) in self.b.iter().enumerate() {
            s += b.mul(&diff_centered(u, axis)).inner(phi);
        }
        s + self.c.mul(u).inner(phi)
    }

    /// Adds `shift` to every face diffusivity along axis 0 (1D only).
    fn shifted(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        out.faces[0].iter_mut().zip(shift).for_each(|(a, s)| *a += s);
        out
    }

    fn min_face(&self) -> f64 {
        self.faces.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    fn max_drift(&self) -> f64 {
        let n = self.grid.len();
        (0..n).map(|i| self.b.iter().map(|b| b.values()[i].abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Solves `(I - k A_h) x = rhs`.
    fn solve_shifted(&self, k: f64, rhs: &GridFunction) -> Result<GridFunction> {
        if k == 0.0 {
            return Ok(rhs.clone());
        }
        if self.grid.d() == 1 {
            self.solve_cyclic(k, rhs)
        } else {
            self.solve_bicgstab(k, rhs)
        }
    }

    fn solve_cyclic(&self, k: f64, rhs: &GridFunction) -> Result<GridFunction> {
        let n = self.grid.n();
        let h = self.grid.h();
        let (f, b, c) = (&self.faces[0], self.b[0].values(), self.c.values());
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for i in 0..n {
            let left = f[(i + n - 1) % n];
            let right = f[i];
            lo[i] = -k * (left / (h * h) - b[i] / (2.0 * h));
            up[i] = -k * (right / (h * h) + b[i] / (2.0 * h));
            di[i] = 1.0 - k * (-(left + right) / (h * h) + c[i]);
        }
        let x = cyclic_thomas(&lo, &di, &up, rhs.values());
        let out = GridFunction::new(self.grid, x)?;
        if !out.is_finite() {
            return Err(Error::Divergence { step: 0, time: f64::NAN });
        }
        Ok(out)
    }

    fn solve_bicgstab(&self, k: f64, rhs: &GridFunction) -> Result<GridFunction> {
        let g = self.grid;
        let mean_a = self.faces.iter().flatten().sum::<f64>() / (self.faces.len() * g.len()) as f64;
        let h = g.h();
        let precond = |r: &GridFunction| -> GridFunction {
            let mut s = spectrum(r);
            for (i, v) in s.iter_mut().enumerate() {
                let xi = g.wavenumber(i);
                let lap: f64 = xi.iter().map(|x| 4.0 * (std::f64::consts::PI * x * h).sin().powi(2) / (h * h)).sum();
                *v /= Complex64::new(1.0 + k * mean_a * lap, 0.0);
            }
            from_spectrum(g, s)
        };
        let op = |x: &GridFunction| x.sub(&self.apply(x).scale(k));
        let bnorm = rhs.l2_norm();
        if bnorm == 0.0 {
            return Ok(GridFunction::zeros(g));
        }
        let mut x = precond(rhs);
        let mut r = rhs.sub(&op(&x));
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = GridFunction::zeros(g);
        let mut p = GridFunction::zeros(g);
        for _ in 0..500 {
            if r.l2_norm() <= 1e-13 * bnorm {
                return Ok(x);
            }
            let rho_new = r0.inner(&r);
            if rho_new == 0.0 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p = r.add(&p.sub(&v.scale(omega)).scale(beta));
            let ph = precond(&p);
            v = op(&ph);
            alpha = rho / r0.inner(&v);
            let s = r.sub(&v.scale(alpha));
            let sh = precond(&s);
            let t = op(&sh);
            let tt = t.inner(&t);
            omega = if tt == 0.0 { 0.0 } else { t.inner(&s) / tt };
            x = x.add(&ph.scale(alpha)).add(&sh.scale(omega));
            r = s.sub(&t.scale(omega));
        }
        if r.l2_norm() <= 1e-10 * bnorm {
            return Ok(x);
        }
        Err(Error::Divergence { step: 0, time: f64::NAN })
    }
}

/// Periodic tridiagonal solve (Sherman–Morrison on the Thomas algorithm).
/// Row `i` reads `lo[i] x[i-1] + di[i] x[i] + up[i] x[i+1] = r[i]`.
fn cyclic_thomas(lo: &[f64], di: &[f64], up: &[f64], r: &[f64]) -> Vec<f64> {
    let n = di.len();
    let alpha = up[n - 1];
    let beta = lo[0];
    let gamma = -di[0];
    let mut d = di.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    let solve = |rhs: &[f64]| {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = up[0] / d[0];
        x[0] = rhs[0] / d[0];
        for i in 1..n {
            let m = d[i] - lo[i] * c[i - 1];
            c[i] = up[i] / m;
            x[i] = (rhs[i] - lo[i] * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let x = solve(r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve(&u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

/// Per-node eigenvalue margins: `lower = min(λ_min - m)`, `upper = min(M - λ_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityMargins {
    pub lower: f64,
    pub upper: f64,
}

impl EllipticityMargins {
    pub fn holds(&self) -> bool {
        self.lower >= -1e-12 && self.upper >= -1e-12
    }
}

/// Exact eigenvalue bounds of `a` at every node and every given time.
pub fn ellipticity_check(e: &EllipticCoefficients, times: &[f64]) -> EllipticityMargins {
    let mut out = EllipticityMargins { lower: f64::INFINITY, upper: f64::INFINITY };
    let default = [0.0];
    let times = if times.is_empty() { &default[..] } else { times };
    for &t in times {
        let a = e.a_at(t);
        for i in 0..e.grid.len() {
            let (lmin, lmax) = if a.len() == 1 {
                (a[0].values()[i], a[0].values()[i])
            } else {
                let (p, o, s) = (a[0].values()[i], a[1].values()[i], a[2].values()[i]);
                let mid = 0.5 * (p + s);
                let rad = (0.25 * (p - s) * (p - s) + o * o).sqrt();
                (mid - rad, mid + rad)
            };
            out.lower = out.lower.min(lmin - e.m);
            out.upper = out.upper.min(e.big_m - lmax);
        }
        if !e.is_time_dependent() {
            break;
        }
    }
    out
}

/// `-⟨a∇u, ∇φ⟩ + ⟨b·∇u, φ⟩ + ⟨cu, φ⟩` at time `t`, equal to `⟨A_h u, φ⟩`.
pub fn apply_a_weak(e: &EllipticCoefficients, u: &GridFunction, phi: &GridFunction, t: f64) -> Result<f64> {
    u.check_same_grid(phi)?;
    if *u.grid() != e.grid {
        return invalid("field and coefficients live on different grids");
    }
    Ok(e.operator_at(t).weak(u, phi))
}

/// What to do when the requested `dt` breaks the transport CFL limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepPolicy {
    #[default]
    Refuse,
    Substep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub grid: SpatialGrid,
    pub dt: f64,
    pub horizon: f64,
    pub theta: f64,
    pub policy: StepPolicy,
}

impl SolveConfig {
    /// Crank–Nicolson, refusing CFL violations.
    pub fn new(grid: SpatialGrid, dt: f64, horizon: f64) -> Self {
        Self { grid, dt, horizon, theta: 0.5, policy: StepPolicy::Refuse }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_policy(mut self, policy: StepPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0) {
            return invalid(format!("T must be positive, got {}", self.horizon));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return invalid(format!("theta must lie in [1/2, 1], got {}", self.theta));
        }
        Ok(())
    }
}

/// Cumulative drift quantities at the driver breakpoints, accumulated with
/// the scheme's own quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRecord {
    /// `Σ dt (θ A^{n+1} u^{n+1} + (1-θ) A^n u^n)`, so that
    /// `⟨lambda[j] - lambda[i], φ⟩` is the drift increment seen by the scheme.
    pub lambda: Vec<GridFunction>,
    /// `Σ dt (u^{n+1} + u^n) ⊙ (θ A^{n+1} u^{n+1} + (1-θ) A^n u^n)`, the
    /// discrete counterpart of `2∫ u A u`.
    pub mu: Vec<GridFunction>,
    /// Trapezoid sums of `|∇u|²` over the substeps.
    pub grad_sq: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveFlags {
    pub steps: usize,
    /// Largest step actually used.
    pub max_dt: f64,
    /// Some face diffusivity of the Itô-modified operator was negative.
    pub negative_diffusivity: bool,
    /// Time at which blow-up stopped an Itô-modified run.
    pub blow_up: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub drift: DriftRecord,
    pub flags: SolveFlags,
}

impl Solution {
    /// `λ_{st}(φ)` between breakpoint indices `s <= t`.
    pub fn lambda(&self, phi: &GridFunction, s: usize, t: usize) -> f64 {
        self.drift.lambda[t].sub(&self.drift.lambda[s]).inner(phi)
    }

    /// `μ_{st}(φ)` between breakpoint indices `s <= t`.
    pub fn mu(&self, phi: &GridFunction, s: usize, t: usize) -> f64 {
        self.drift.mu[t].sub(&self.drift.mu[s]).inner(phi)
    }

    /// `G_t = |u_t|² + min(1, m) ∫_0^t |∇u|²` with the substep quadrature.
    pub fn energy_series(&self, m: f64) -> Result<Path1> {
        let w = m.min(1.0);
        let vals = self.trajectory.fields().iter().zip(&self.drift.grad_sq).map(|(u, g)| u.inner(u) + w * g).collect();
        Path1::scalar(self.trajectory.time().clone(), vals)
    }
}

/// `e^{dt L} u - u` with `L = Σ v^k G_k`, summed until the terms drop below
/// `1e-16` relative (at most 60 terms).
fn noise_increment(noise: &NoiseCoefficients, slope: &[f64], dt: f64, u: &GridFunction) -> GridFunction {
    let mut inc = GridFunction::zeros(*u.grid());
    if noise.is_zero() || slope.iter().all(|&v| v == 0.0) {
        return inc;
    }
    let scale = u.sup_norm();
    let mut term = u.clone();
    for m in 1..=60 {
        term = noise.apply_weighted(slope, &term).scale(dt / m as f64);
        inc.axpy(1.0, &term);
        if term.sup_norm() <= 1e-16 * (scale + inc.sup_norm()) {
            break;
        }
    }
    inc
}

struct Ito<'a> {
    bracket: &'a Path1,
    sigma2_face: Vec<f64>,
}

fn check_inputs(e: &EllipticCoefficients, noise: &NoiseCoefficients, z: &Path1, u0: &GridFunction, cfg: &SolveConfig) -> Result<()> {
    cfg.validate()?;
    let g = cfg.grid;
    if e.grid != g || *noise.grid() != g || *u0.grid() != g {
        return invalid("coefficients, noise, initial datum and config must share one spatial grid");
    }
    if z.dim() != noise.k() {
        return invalid(format!("driver has {} components but noise has K={}", z.dim(), noise.k()));
    }
    let zt = z.grid().horizon();
    if (zt - cfg.horizon).abs() > 1e-12 * cfg.horizon.max(1.0) {
        return invalid(format!("driver horizon {zt} differs from T={}", cfg.horizon));
    }
    if !u0.is_finite() {
        return invalid("initial datum has non-finite values");
    }
    let times = if e.is_time_dependent() { z.grid().times().to_vec() } else { vec![0.0] };
    let margins = ellipticity_check(e, &times);
    if !margins.holds() {
        return invalid(format!(
            "ellipticity violated: lower margin {:e}, upper margin {:e} (check a, m, M)",
            margins.lower, margins.upper
        ));
    }
    Ok(())
}

fn run(
    e: &EllipticCoefficients,
    noise: &NoiseCoefficients,
    z: &Path1,
    u0: &GridFunction,
    cfg: &SolveConfig,
    ito: Option<Ito<'_>>,
) -> Result<Solution> {
    let g = cfg.grid;
    let h = g.h();
    let theta = cfg.theta;
    let bp = z.grid().times();
    let nb = bp.len();
    let e0 = u0.inner(u0);

    let mut flags = SolveFlags::default();
    let mut u = u0.clone();
    let mut fields = vec![u0.clone()];
    let mut lam = GridFunction::zeros(g);
    let mut mu = GridFunction::zeros(g);
    let mut gsum = 0.0;
    let mut rec = DriftRecord { lambda: vec![lam.clone()], mu: vec![mu.clone()], grad_sq: vec![0.0] };
    let mut times = vec![0.0];
    let time_dep = e.is_time_dependent();
    let frozen = e.operator_at(0.0);
    let op_at = |t: f64| if time_dep { e.operator_at(t) } else { frozen.clone() };

    let mut step = 0usize;
    for j in 0..nb - 1 {
        let (ta, tb) = (bp[j], bp[j + 1]);
        let len = tb - ta;
        let slope = z.segment_slope(j);
        let mut nsub = ((len / cfg.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let speed = noise.transport_speed(&slope) + op_at(ta).max_drift().max(op_at(tb).max_drift());
        let limit = if speed > 0.0 { h / speed } else { f64::INFINITY };
        let sub_dt = len / nsub as f64;
        if sub_dt > limit * (1.0 + 1e-12) {
            match cfg.policy {
                StepPolicy::Refuse => return Err(Error::StabilityViolation { segment: j, dt: sub_dt, limit }),
                StepPolicy::Substep => nsub = (len / limit).ceil() as usize,
            }
        }
        let dt = len / nsub as f64;
        flags.max_dt = flags.max_dt.max(dt);

        // The Itô shift is constant on each substep; both ends of the θ-step
        // use the same shifted operator.
        let shift = |t0: f64, t1: f64| -> Option<Vec<f64>> {
            ito.as_ref().map(|it| {
                let mut a = [0.0];
                let mut b = [0.0];
                it.bracket.interpolate(t0, &mut a);
                it.bracket.interpolate(t1, &mut b);
                let phidot = (b[0] - a[0]) / (t1 - t0);
                it.sigma2_face.iter().map(|s| -0.5 * s * phidot).collect()
            })
        };
        let mut au = None;
        for s in 0..nsub {
            let t0 = ta + dt * s as f64;
            let t1 = if s + 1 == nsub { tb } else { ta + dt * (s + 1) as f64 };
            let sh = shift(t0, t1);
            let mut op0 = op_at(t0);
            let mut op1 = op_at(t1);
            if let Some(sh) = &sh {
                op0 = op0.shifted(sh);
                op1 = op1.shifted(sh);
                if op1.min_face() < 0.0 || op0.min_face() < 0.0 {
                    flags.negative_diffusivity = true;
                }
            }
            // A^n u^n is reusable when the operator did not change.
            let a0u = match au.take() {
                Some(v) if !time_dep && ito.is_none() => v,
                _ => op0.apply(&u),
            };
            let mut rhs = u.add(&noise_increment(noise, &slope, dt, &u));
            if theta < 1.0 {
                rhs.axpy((1.0 - theta) * dt, &a0u);
            }
            step += 1;
            let next = match op1.solve_shifted(theta * dt, &rhs) {
                Ok(v) => v,
                Err(Error::Divergence { .. }) if ito.is_none() => return Err(Error::Divergence { step, time: t1 }),
                Err(Error::Divergence { .. }) => {
                    flags.blow_up = Some(t1);
                    break;
                }
                Err(err) => return Err(err),
            };
            let energy = next.inner(&next);
            if !next.is_finite() || !energy.is_finite() {
                if ito.is_none() {
                    return Err(Error::Divergence { step, time: t1 });
                }
                flags.blow_up = Some(t1);
                break;
            }
            let a1u = op1.apply(&next);
            let mut drift = a1u.scale(theta * dt);
            drift.axpy((1.0 - theta) * dt, &a0u);
            lam.axpy(1.0, &drift);
            mu.axpy(1.0, &next.add(&u).mul(&drift));
            gsum += 0.5 * dt * (grad_sq(&u) + grad_sq(&next));
            u = next;
            au = Some(a1u);
            if ito.is_some() && e0 > 0.0 && energy > 1e12 * e0 {
                flags.blow_up = Some(t1);
                if s + 1 < nsub {
                    times.push(t1);
                    fields.push(u.clone());
                    rec.lambda.push(lam.clone());
                    rec.mu.push(mu.clone());
                    rec.grad_sq.push(gsum);
                }
                break;
            }
        }
        if flags.blow_up.is_some() {
            if times.len() == 1 {
                // Nothing after t=0 was recorded; keep the last finite state.
                let t_last = times[0] + f64::EPSILON.max(1e-300);
                times.push(t_last);
                fields.push(u.clone());
                rec.lambda.push(lam.clone());
                rec.mu.push(mu.clone());
                rec.grad_sq.push(gsum);
            }
            if *times.last().unwrap() < tb && fields.last() != Some(&u) {
                times.push(flags.blow_up.unwrap());
                fields.push(u.clone());
                rec.lambda.push(lam.clone());
                rec.mu.push(mu.clone());
                rec.grad_sq.push(gsum);
            }
            break;
        }
        times.push(tb);
        fields.push(u.clone());
        rec.lambda.push(lam.clone());
        rec.mu.push(mu.clone());
        rec.grad_sq.push(gsum);
    }
    flags.steps = step;
    let time = if times.len() == nb { z.grid().clone() } else { TimeGrid::new(times)? };
    Ok(Solution { trajectory: Trajectory::new(time, fields)?, drift: rec, flags })
}

/// θ-scheme solve of `∂_t u = A u + (σ^{ki}∂_i u + ν^k u) ż^k` along the
/// piecewise-linear `z`. The trajectory is recorded at `z`'s breakpoints.
pub fn solve_smooth(
    e: &EllipticCoefficients,
    noise: &NoiseCoefficients,
    z: &Path1,
    u0: &GridFunction,
    cfg: &SolveConfig,
) -> Result<Solution> {
    check_inputs(e, noise, z, u0, cfg)?;
    run(e, noise, z, u0, cfg, None)
}

/// Same scheme for `∂_t u = a ∂_xx u + σ ∂_x u ż - ½ σ² ∂_xx u φ̇`, with the
/// correction folded into the implicit diffusivity `a - ½σ²φ̇`. `bracket` is
/// the path `φ`, sampled by linear interpolation.
///
/// Negative effective diffusivity is flagged, not refused. A run whose
/// energy exceeds `1e12` times the initial energy, or turns non-finite, is
/// stopped and the blow-up time recorded; the trajectory then ends at the
/// last finite state.
pub fn solve_ito_modified(
    e: &EllipticCoefficients,
    noise: &NoiseCoefficients,
    z: &Path1,
    bracket: &Path1,
    u0: &GridFunction,
    cfg: &SolveConfig,
) -> Result<Solution> {
    if cfg.grid.d() != 1 || noise.k() != 1 {
        return Err(Error::Unsupported("the Itô-modified equation is implemented for d = K = 1".into()));
    }
    if bracket.dim() != 1 {
        return invalid("bracket must be a scalar path");
    }
    check_inputs(e, noise, z, u0, cfg)?;
    let s2 = noise.sigma(0, 0).map(|s| s * s);
    let sigma2_face = face_average(&s2, 0);
    run(e, noise, z, u0, cfg, Some(Ito { bracket, sigma2_face }))
}

/// `G_t = |u_t|² + min(1, m) ∫_0^t |∇u_r|² dr`, trapezoid over the
/// trajectory's times.
pub fn energy_series(u: &Trajectory, m: f64) -> Result<Path1> {
    let t = u.time().times();
    let gs: Vec<f64> = u.fields().iter().map(grad_sq).collect();
    let w = m.min(1.0);
    let mut acc = 0.0;
    let mut vals = Vec::with_capacity(t.len());
    for j in 0..t.len() {
        if j > 0 {
            acc += 0.5 * (t[j] - t[j - 1]) * (gs[j] + gs[j - 1]);
        }
        let f = u.at(j);
        vals.push(f.inner(f) + w * acc);
    }
    Path1::scalar(u.time().clone(), vals)
}

/// `λ = ∫_s^t ⟨A u, φ⟩` and `μ = 2∫_s^t ⟨u A u, φ⟩` by the trapezoid rule
/// over the trajectory's times between indices `s <= t`.
pub fn drift_functionals(e: &EllipticCoefficients, u: &Trajectory, phi: &GridFunction, s: usize, t: usize) -> Result<(f64, f64)> {
    if s > t || t >= u.len() {
        return invalid(format!("window ({s},{t}) outside trajectory of {} times", u.len()));
    }
    if *u.spatial_grid() != e.grid || *phi.grid() != e.grid {
        return invalid("trajectory, test function and coefficients must share one grid");
    }
    let times = &u.time().times()[s..=t];
    let mut lam = Vec::with_capacity(times.len());
    let mut mu = Vec::with_capacity(times.len());
    for (j, &r) in (s..=t).zip(times) {
        let au = e.operator_at(r).apply(u.at(j));
        lam.push(au.inner(phi));
        mu.push(2.0 * u.at(j).mul(&au).inner(phi));
    }
    Ok((trapezoid(times, &lam), trapezoid(times, &mu)))
}

fn lp(f: &GridFunction, p: f64) -> f64 {
    (f.grid().cell() * f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Cumulative `𝐛(0,t) = ∫_0^t |b_r|^{2r}_{L^{2q}} dr` and
/// `𝐜(0,t) = ∫_0^t |c_r|^r_{L^q} dr` at the given times.
pub fn coefficient_controls(e: &EllipticCoefficients, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (r, q) = (e.r, e.q);
    let mut bv = Vec::with_capacity(times.len());
    let mut cv = Vec::with_capacity(times.len());
    for &t in times {
        let b = e.b_at(t);
        let mag = b.iter().fold(GridFunction::zeros(e.grid), |acc, f| acc.zip_map(f, |a, x| a + x * x)).map(f64::sqrt);
        bv.push(lp(&mag, 2.0 * q).powf(2.0 * r));
        cv.push(lp(&e.c_at(t), q).powf(r));
    }
    let cumulate = |v: &[f64]| -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for j in 1..times.len() {
            acc += 0.5 * (times[j] - times[j - 1]) * (v[j] + v[j - 1]);
            out.push(acc);
        }
        out
    };
    (cumulate(&bv), cumulate(&cv))
}

/// Outcome of the energy Gronwall check on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCheck {
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub bound: Vec<f64>,
    /// Constant `C` with `ω = C ω̃`, the smallest making the Gronwall
    /// hypothesis hold on every checked pair.
    pub constant: f64,
    pub kappa: f64,
    /// `max_t G_t / bound_t`.
    pub max_ratio: f64,
    /// `sup_t |u_t|² / |u_0|²`.
    pub sup_l2_ratio: f64,
}

impl EnergyCheck {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-12
    }
}

/// Checks `G_t <= gronwall_bound` for a run driven by `driver`'s path.
///
/// The composite control is `ω̃ = 𝐛^{κ/r} + 𝐜^{κ/r} + ω_B^{κα} + ω_B^{2κα}
/// + ω_B^{3κα}` with `κ = max(1/α, r)`, evaluated on at most 257 breakpoints.
/// Its constant is measured from the run as the smallest `C` for which
/// `δG_{st} <= (sup_{[s,t]} G)(C ω̃(s,t))^{1/κ}` on every checked pair, and
/// the bound uses `φ = 0`, `L = 1`.
pub fn energy_gronwall_check(sol: &Solution, e: &EllipticCoefficients, driver: &Driver) -> Result<EnergyCheck> {
    let traj = &sol.trajectory;
    if traj.time() != driver.path().grid() {
        return invalid("solution must be recorded on the driver's grid");
    }
    let alpha = driver.path().alpha();
    let kappa = (1.0 / alpha).max(e.r);
    let gfull = sol.energy_series(e.m)?;
    let gv: Vec<f64> = gfull.values().to_vec();
    let idx = spread_indices(gv.len(), 257);
    let sub = traj.time().subgrid(&idx)?;
    let times = sub.times().to_vec();
    let (bc, cc) = coefficient_controls(e, &times);
    let ob = driver.omega_b().restrict(&idx)?;
    let n = idx.len();
    let mut tilde = crate::roughpath::TwoIndexMap::zeros(sub.clone(), 1);
    let mut constant: f64 = 0.0;
    for a in 0..n {
        let mut sup = gv[idx[a]];
        for c in a + 1..n {
            for &v in &gv[idx[c - 1]..=idx[c]] {
                sup = sup.max(v);
            }
            let w = ob.get(a, c);
            let wt = (bc[c] - bc[a]).powf(kappa / e.r)
                + (cc[c] - cc[a]).powf(kappa / e.r)
                + w.powf(kappa * alpha)
                + w.powf(2.0 * kappa * alpha)
                + w.powf(3.0 * kappa * alpha);
            tilde.get_mut(a, c)[0] = wt;
            let dg = gv[idx[c]] - gv[idx[a]];
            if dg > 0.0 {
                let need = (dg / sup).powf(kappa);
                constant = constant.max(if wt > 0.0 { need / wt } else { f64::INFINITY });
            }
        }
    }
    let omega = ControlGrid::from_map(tilde)?.scale(if constant.is_finite() { constant } else { 0.0 });
    let g: Vec<f64> = idx.iter().map(|&i| gv[i]).collect();
    let bound = if constant.is_finite() {
        gronwall_bound(g[0], &omega, None, kappa, 1.0)?.values().to_vec()
    } else {
        vec![f64::NAN; n]
    };
    let max_ratio = g
        .iter()
        .zip(&bound)
        .map(|(a, b)| if *a == 0.0 { 0.0 } else if b.is_nan() { f64::INFINITY } else { a / b })
        .fold(0.0, f64::max);
    let e0 = traj.at(0).inner(traj.at(0));
    let sup_l2 = traj.fields().iter().map(|u| u.inner(u)).fold(0.0, f64::max);
    Ok(EnergyCheck {
        times,
        g,
        bound,
        constant,
        kappa,
        max_ratio,
        sup_l2_ratio: if e0 > 0.0 { sup_l2 / e0 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g1(n: usize) -> SpatialGrid {
        SpatialGrid::new(1, n).unwrap()
    }

    fn linear_z(t: f64, n: usize, k: usize) -> Path1 {
        Path1::from_fn(TimeGrid::uniform(t, n).unwrap(), k, |s| vec![s; k]).unwrap()
    }

    #[test]
    fn cyclic_thomas_matches_dense_residual() {
        let n = 9;
        let lo: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let up: Vec<f64> = (0..n).map(|i| -0.2 + 0.02 * i as f64).collect();
        let di: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let r: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = cyclic_thomas(&lo, &di, &up, &r);
        for i in 0..n {
            let v = lo[i] * x[(i + n - 1) % n] + di[i] * x[i] + up[i] * x[(i + 1) % n];
            assert!((v - r[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn weak_form_of_sine() {
        let g = g1(256);
        let e = EllipticCoefficients::heat(g, 1.0).unwrap();
        let u = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let w = apply_a_weak(&e, &u, &u, 0.0).unwrap();
        assert!((w + 2.0 * PI * PI).abs() < 2.0 * PI * PI * 1e-3);
        let strong = e.operator_at(0.0).apply(&u).inner(&u);
        assert!((w - strong).abs() < 1e-12);
    }

    #[test]
    fn ellipticity_margins() {
        let g = SpatialGrid::new(2, 8).unwrap();
        let c = Coefficient::Constant;
        let e = EllipticCoefficients::new(g, vec![c(2.0), c(0.0), c(0.5)], vec![c(0.0), c(0.0)], c(0.0), 0.5, 2.0, 2.0, 2.0).unwrap();
        let mut claimed = e.clone();
        claimed.m = 1.0;
        let mm = ellipticity_check(&claimed, &[]);
        assert!((mm.lower + 0.5).abs() < 1e-15);
        assert_eq!(mm.upper, 0.0);
        assert!(EllipticCoefficients::new(g, vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0)], c(0.0), 2.0, 1.0, 2.0, 2.0).is_err());
        assert!(EllipticCoefficients::new(g, vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0)], c(0.0), 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn heat_mode_decays_at_the_exact_rate() {
        let g = g1(256);
        let e = EllipticCoefficients::heat(g, 1.0).unwrap();
        let noise = NoiseCoefficients::zero(g, 1);
        let z = linear_z(0.1, 10, 1);
        let u0 = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let sol = solve_smooth(&e, &noise, &z, &u0, &SolveConfig::new(g, 1e-4, 0.1)).unwrap();
        let want = u0.scale((-4.0 * PI * PI * 0.1).exp());
        assert!(sol.trajectory.last().sub(&want).l2_norm() <= 1e-3 * want.l2_norm());
    }

    #[test]
    fn zero_order_noise_is_an_exponential_factor() {
        let g = g1(64);
        let e = EllipticCoefficients::heat(g, 1e-6).unwrap();
        let noise = NoiseCoefficients::constant(g, 1, &[0.0], &[0.8]).unwrap();
        let z = linear_z(1.0, 8, 1);
        let u0 = GridFunction::from_fn(g, |x, _| 1.0 + 0.1 * (2.0 * PI * x).cos());
        let sol = solve_smooth(&e, &noise, &z, &u0, &SolveConfig::new(g, 1e-2, 1.0)).unwrap();
        let ratio = sol.trajectory.last().values()[5] / u0.values()[5];
        assert!((ratio / 0.8f64.exp() - 1.0).abs() < 0.01);
    }

    #[test]
    fn cfl_violation_is_refused_or_substepped() {
        let g = g1(64);
        let e = EllipticCoefficients::heat(g, 0.01).unwrap();
        let noise = NoiseCoefficients::constant(g, 1, &[1.0], &[0.0]).unwrap();
        let z = linear_z(1.0, 4, 1);
        let u0 = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let cfg = SolveConfig::new(g, 0.1, 1.0);
        assert!(matches!(solve_smooth(&e, &noise, &z, &u0, &cfg), Err(Error::StabilityViolation { .. })));
        let sol = solve_smooth(&e, &noise, &z, &u0, &cfg.with_policy(StepPolicy::Substep)).unwrap();
        assert!(sol.flags.max_dt <= g.h() * (1.0 + 1e-12));
    }

    #[test]
    fn zero_bracket_reproduces_the_smooth_run() {
        let g = g1(64);
        let e = EllipticCoefficients::heat(g, 0.1).unwrap();
        let noise = NoiseCoefficients::constant(g, 1, &[0.5], &[0.0]).unwrap();
        let z = crate::roughpath::sample_bm_path(3, 5, 1, 0.25).unwrap();
        let flat = Path1::scalar(z.grid().clone(), vec![0.0; z.grid().n_points()]).unwrap();
        let u0 = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let cfg = SolveConfig::new(g, 1e-3, 0.25).with_policy(StepPolicy::Substep);
        let a = solve_smooth(&e, &noise, &z, &u0, &cfg).unwrap();
        let b = solve_ito_modified(&e, &noise, &z, &flat, &u0, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn two_dimensional_heat_solve() {
        let g = SpatialGrid::new(2, 16).unwrap();
        let e = EllipticCoefficients::heat(g, 0.5).unwrap();
        let u0 = GridFunction::from_fn(g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let z = linear_z(0.05, 5, 1);
        let sol = solve_smooth(&e, &NoiseCoefficients::zero(g, 1), &z, &u0, &SolveConfig::new(g, 1e-3, 0.05)).unwrap();
        let h = g.h();
        let lam = 2.0 * 4.0 * (PI * h).sin().powi(2) / (h * h);
        let x = 0.5 * lam * 1e-3;
        let want = u0.scale(((1.0 - 0.5 * x) / (1.0 + 0.5 * x)).powi(50));
        assert!(sol.trajectory.last().sub(&want).l2_norm() < 1e-10);
    }

    #[test]
    fn drift_of_constant_test_function_vanishes() {
        let g = g1(32);
        let e = EllipticCoefficients::heat(g, 1.0).unwrap();
        let u0 = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin() + 0.3);
        let z = linear_z(0.05, 5, 1);
        let sol = solve_smooth(&e, &NoiseCoefficients::zero(g, 1), &z, &u0, &SolveConfig::new(g, 1e-3, 0.05)).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let (lam, _) = drift_functionals(&e, &sol.trajectory, &one, 0, 5).unwrap();
        assert!(lam.abs() < 1e-12);
        assert!(sol.lambda(&one, 0, 5).abs() < 1e-12);
    }
}
