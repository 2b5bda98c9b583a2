//! Sewing by dyadic refinement, the Λ map, and the rough Gronwall bound.
//!
//! A germ `B_{st}` is integrated over each interval of a base grid by summing
//! it over `2^ℓ` sub-intervals and letting `ℓ` grow. The integral is then
//! assembled as increments of a single path, so `δℐ = 0` holds exactly.
//!
//! Plain dyadic sums converge like `2^{-ℓ(θ-1)}` for a germ with `δB` of
//! order `θ > 1`. Because this error is geometric in `ℓ`, Aitken's Δ²
//! extrapolation across levels is applied by default; it is exact for purely
//! geometric errors and leaves non-geometric sequences untouched.

use crate::error::{invalid, Error, Result};
use crate::roughpath::{ControlGrid, Path1, TimeGrid, TwoIndexMap};

/// A two-parameter germ that can be evaluated at arbitrary `s < t`.
pub trait Germ: Sync {
    /// Length of the value vector.
    fn dim(&self) -> usize;

    fn eval(&self, s: f64, t: f64, out: &mut [f64]);

    /// Times at which the germ is natively sampled. Refinement inserts these
    /// before falling back to arithmetic midpoints.
    fn knots(&self) -> Option<&[f64]> {
        None
    }

    /// Whether the germ can be evaluated away from its knots.
    fn off_knot(&self) -> bool {
        true
    }
}

/// Germ defined by a closure `f(s, t, out)`.
pub struct FnGerm<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, f64, &mut [f64]) + Sync> FnGerm<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, f64, &mut [f64]) + Sync> Germ for FnGerm<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, s: f64, t: f64, out: &mut [f64]) {
        (self.f)(s, t, out)
    }
}

/// A two-index map seen as a germ; it is only defined at its grid points.
pub struct MapGerm<'a>(pub &'a TwoIndexMap);

impl Germ for MapGerm<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, s: f64, t: f64, out: &mut [f64]) {
        let g = self.0.grid();
        let (i, j) = (g.index_of(s), g.index_of(t));
        match (i, j) {
            (Some(i), Some(j)) => out.copy_from_slice(self.0.get(i, j)),
            _ => panic!("map germ evaluated off its grid at ({s}, {t})"),
        }
    }

    fn knots(&self) -> Option<&[f64]> {
        Some(self.0.grid().times())
    }

    fn off_knot(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SewingOptions {
    /// Stopping tolerance, relative to the largest `|B|` on base intervals.
    pub tol: f64,
    pub max_level: u32,
    /// Aitken Δ² extrapolation across levels.
    pub accelerate: bool,
}

impl Default for SewingOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_level: 20, accelerate: true }
    }
}

/// Output of [`rough_integral`]: the additive map and, per refinement level,
/// the largest successive difference among intervals still refining.
#[derive(Debug, Clone)]
pub struct SewingReport {
    pub integral: TwoIndexMap,
    pub history: Vec<(u32, f64)>,
    pub levels_used: u32,
}

struct Refined {
    value: Vec<f64>,
    diffs: Vec<(u32, f64)>,
}

fn split_point(germ: &dyn Germ, a: f64, b: f64) -> Option<f64> {
    if let Some(k) = germ.knots() {
        let lo = k.partition_point(|&x| x <= a);
        let hi = k.partition_point(|&x| x < b);
        if hi > lo {
            return Some(k[(lo + hi - 1) / 2]);
        }
    }
    germ.off_knot().then_some(0.5 * (a + b))
}

fn refine_interval(germ: &dyn Germ, a: f64, b: f64, tol: f64, opts: &SewingOptions) -> Result<Refined> {
    let dim = germ.dim();
    let mut pts = vec![a, b];
    let mut buf = vec![0.0; dim];
    let sum_over = |pts: &[f64], buf: &mut [f64]| {
        let mut s = vec![0.0; dim];
        for w in pts.windows(2) {
            germ.eval(w[0], w[1], buf);
            for k in 0..dim {
                s[k] += buf[k];
            }
        }
        s
    };
    let mut raw = vec![sum_over(&pts, &mut buf)];
    let mut est = raw[0].clone();
    let mut diffs = Vec::new();
    for level in 1..=opts.max_level {
        let mut next = Vec::with_capacity(2 * pts.len());
        let mut grew = false;
        for w in pts.windows(2) {
            next.push(w[0]);
            if let Some(m) = split_point(germ, w[0], w[1]) {
                next.push(m);
                grew = true;
            }
        }
        next.push(b);
        if !grew {
            diffs.push((level, 0.0));
            return Ok(Refined { value: est, diffs });
        }
        pts = next;
        let s = sum_over(&pts, &mut buf);
        raw.push(s);
        let l = raw.len() - 1;
        let mut new_est = raw[l].clone();
        if opts.accelerate && l >= 2 {
            for k in 0..dim {
                let d1 = raw[l - 1][k] - raw[l - 2][k];
                let d2 = raw[l][k] - raw[l - 1][k];
                if d1 != 0.0 {
                    let r = d2 / d1;
                    if r.is_finite() && r > 0.0 && r < 0.9 {
                        new_est[k] = raw[l][k] + d2 * r / (1.0 - r);
                    }
                }
            }
        }
        let diff = new_est
            .iter()
            .zip(&est)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        diffs.push((level, diff));
        let prev = std::mem::replace(&mut est, new_est);
        if diff < tol && (level >= 2 || !opts.accelerate || diff == 0.0) {
            return Ok(Refined { value: est, diffs });
        }
        if level == opts.max_level {
            return Err(Error::NonConvergentGerm { level, diff, tol, last: est, prev });
        }
    }
    Ok(Refined { value: est, diffs })
}

/// Rough integral `ℐ` of `germ` on `grid`, as an exactly additive map.
pub fn rough_integral(grid: &TimeGrid, germ: &dyn Germ, opts: &SewingOptions) -> Result<SewingReport> {
    if !(opts.tol > 0.0) {
        return invalid("sewing tolerance must be positive");
    }
    let t = grid.times();
    let n = t.len();
    let dim = germ.dim();
    let mut buf = vec![0.0; dim];
    let mut scale: f64 = 0.0;
    for w in t.windows(2) {
        germ.eval(w[0], w[1], &mut buf);
        scale = buf.iter().fold(scale, |m, x| m.max(x.abs()));
    }
    let tol = opts.tol * if scale > 0.0 { scale } else { 1.0 };
    let mut path = vec![0.0; n * dim];
    let mut history: Vec<(u32, f64)> = Vec::new();
    let mut levels_used = 0;
    for j in 0..n - 1 {
        let r = refine_interval(germ, t[j], t[j + 1], tol, opts)?;
        for k in 0..dim {
            path[(j + 1) * dim + k] = path[j * dim + k] + r.value[k];
        }
        for (level, d) in r.diffs {
            levels_used = levels_used.max(level);
            match history.iter_mut().find(|(l, _)| *l == level) {
                Some(e) => e.1 = e.1.max(d),
                None => history.push((level, d)),
            }
        }
    }
    history.sort_by_key(|e| e.0);
    let integral = TwoIndexMap::from_fn(grid.clone(), dim, |i, j, out| {
        for k in 0..dim {
            out[k] = path[j * dim + k] - path[i * dim + k];
        }
    });
    Ok(SewingReport { integral, history, levels_used })
}

/// Rough integral of a map germ over its own grid.
pub fn rough_integral_map(b: &TwoIndexMap, opts: &SewingOptions) -> Result<TwoIndexMap> {
    Ok(rough_integral(b.grid(), &MapGerm(b), opts)?.integral)
}

/// `Λ_{st} = B_{st} - ℐ_{st}` on every grid pair.
pub fn lambda_map(grid: &TimeGrid, germ: &dyn Germ, opts: &SewingOptions) -> Result<TwoIndexMap> {
    let integral = rough_integral(grid, germ, opts)?.integral;
    let t = grid.times().to_vec();
    let dim = germ.dim();
    let b = TwoIndexMap::from_fn(grid.clone(), dim, |i, j, out| germ.eval(t[i], t[j], out));
    b.sub(&integral)
}

/// `τ_{κ,L} = min(L, (2e²)^{-κ})`.
pub fn gronwall_tau(kappa: f64, l: f64) -> f64 {
    l.min((2.0 * std::f64::consts::E.powi(2)).powf(-kappa))
}

/// Rough Gronwall bound at every grid time:
/// `2 exp(ω(0,T)/τ) [G_0 + sup_{r<=t} |φ(0,r)| exp(-ω(0,r)/τ)]`.
///
/// `phi` is optional and defaults to zero.
pub fn gronwall_bound(
    g0: f64,
    omega: &ControlGrid,
    phi: Option<&TwoIndexMap>,
    kappa: f64,
    l: f64,
) -> Result<Path1> {
    if !(kappa > 0.0) || !(l > 0.0) {
        return invalid(format!("Gronwall bound needs kappa > 0 and L > 0, got kappa={kappa}, L={l}"));
    }
    let grid = omega.grid();
    if let Some(p) = phi {
        if p.grid() != grid || p.dim() != 1 {
            return invalid("phi must be scalar on the control's grid");
        }
    }
    let tau = gronwall_tau(kappa, l);
    let n = grid.n_points();
    let front = 2.0 * (omega.get(0, n - 1) / tau).exp();
    let mut running: f64 = 0.0;
    let mut values = Vec::with_capacity(n);
    for j in 0..n {
        if let Some(p) = phi {
            running = running.max(p.scalar(0, j).abs() * (-omega.get(0, j) / tau).exp());
        }
        values.push(front * (g0 + running));
    }
    Path1::scalar(grid.clone(), values)
}

/// Largest nondecreasing sequence compatible with the Gronwall hypothesis
/// `δG_{st} <= (sup_{[s,t]} G) ω(s,t)^{1/κ}` on every pair with `ω <= L`:
/// `G_j = min_i G_i / (1 - ω(t_i,t_j)^{1/κ})`. Needs `L < 1`.
pub fn extremal_gronwall_sequence(g0: f64, omega: &ControlGrid, kappa: f64, l: f64) -> Result<Vec<f64>> {
    if !(l > 0.0 && l < 1.0) || !(kappa > 0.0) {
        return invalid("extremal sequence needs 0 < L < 1 and kappa > 0");
    }
    let n = omega.grid().n_points();
    let mut g = vec![g0; n];
    for j in 1..n {
        let mut best = f64::INFINITY;
        for i in 0..j {
            let w = omega.get(i, j);
            if w <= l {
                best = best.min(g[i] / (1.0 - w.powf(1.0 / kappa)));
            }
        }
        g[j] = if best.is_finite() { best } else { g[j - 1] };
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_germ_is_reproduced() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let germ = FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = t.sin() - s.sin());
        let rep = rough_integral(&g, &germ, &SewingOptions::default()).unwrap();
        let t = g.times();
        for i in 0..9 {
            for j in i..9 {
                assert!((rep.integral.scalar(i, j) - (t[j].sin() - t[i].sin())).abs() < 1e-15);
            }
        }
        let lam = lambda_map(&g, &germ, &SewingOptions::default()).unwrap();
        assert!(lam.raw().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn map_germ_uses_existing_points_only() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let t = g.times().to_vec();
        let b = TwoIndexMap::from_fn(g, 1, |i, j, o| o[0] = (t[j] - t[i]).powi(2));
        let i = rough_integral_map(&b, &SewingOptions::default()).unwrap();
        assert!((i.scalar(0, 4) - 4.0 * 0.0625).abs() < 1e-15);
    }

    #[test]
    fn t_dt_integral() {
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        let germ = FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = s * (t - s));
        let opts = SewingOptions { tol: 1e-12, max_level: 16, accelerate: true };
        let rep = rough_integral(&g, &germ, &opts).unwrap();
        assert!((rep.integral.scalar(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rough_germ_reports_nonconvergence() {
        // δB of order 1/2: sums oscillate without settling.
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        let germ = FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| {
            o[0] = (t - s).sqrt() * (1000.0 * s).sin()
        });
        let opts = SewingOptions { tol: 1e-12, max_level: 6, accelerate: true };
        match rough_integral(&g, &germ, &opts) {
            Err(Error::NonConvergentGerm { level, last, prev, .. }) => {
                assert_eq!(level, 6);
                assert_eq!(last.len(), 1);
                assert_eq!(prev.len(), 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn gronwall_zero_inputs() {
        let g = TimeGrid::uniform(1.0, 5).unwrap();
        let b = gronwall_bound(3.0, &ControlGrid::zeros(g), None, 2.0, 1.0).unwrap();
        assert!(b.values().iter().all(|&x| x == 6.0));
        assert!(gronwall_bound(1.0, &ControlGrid::zeros(TimeGrid::uniform(1.0, 2).unwrap()), None, 0.0, 1.0).is_err());
    }

    #[test]
    fn gronwall_monotone_in_control() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let w = ControlGrid::time(g.clone()).scale(0.01);
        let a = gronwall_bound(1.0, &w, None, 2.0, 0.5).unwrap();
        let b = gronwall_bound(1.0, &w.scale(1.5), None, 2.0, 0.5).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn extremal_sequence_meets_hypothesis() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let w = ControlGrid::time(g).powf(1.5).scale(0.3);
        let seq = extremal_gronwall_sequence(1.0, &w, 2.0, 0.5).unwrap();
        for i in 0..21 {
            for j in i + 1..21 {
                let sup = seq[i..=j].iter().cloned().fold(0.0, f64::max);
                assert!(seq[j] - seq[i] <= sup * w.get(i, j).sqrt() * (1.0 + 1e-12));
            }
        }
    }
}
