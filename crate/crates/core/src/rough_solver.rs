//! Rough-driver experiments built on the classical solver: Wong–Zakai
//! approximation, remainder scaling diagnostics of the Davie expansion,
//! stability of the solution map, and the stochastic parabolicity demo.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::driver::{b_star, bb_star, hat_driver, Driver, NoiseCoefficients};
use crate::error::{invalid, Error, Result};
use crate::fields::{mixed_norm, sobolev_norm, GridFunction, TestDictionary, Trajectory};
use crate::parabolic::{
    coefficient_controls, energy_gronwall_check, solve_ito_modified, solve_smooth, EllipticCoefficients, EnergyCheck,
    SolveConfig, Solution,
};
use crate::roughpath::{canonical_lift_with_alpha, rough_metric, sample_bm_path, Path1, RoughPath, TimeGrid};
use crate::stats::ols;

/// Default Hölder exponent for Brownian-driven experiments.
pub const DEFAULT_ALPHA: f64 = 0.45;

/// Source of the driver for a Wong–Zakai sweep.
#[derive(Debug, Clone)]
pub enum WongZakaiInput {
    /// Level-1 path `Z_{0·}` of a rough path, sampled at dyadic times.
    Rough(Arc<RoughPath>),
    /// Seeded Brownian motion sampled at the finest requested level.
    Brownian { seed: u64, k: usize, alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct WongZakaiLevel {
    pub level: u32,
    /// Canonical lift of `z^n`, represented on the finest dyadic grid.
    pub lift: RoughPath,
    pub solution: Result<Solution>,
}

#[derive(Debug, Clone)]
pub struct WongZakaiReport {
    pub levels: Vec<WongZakaiLevel>,
    /// `‖u^{n+1} - u^n‖_{L²(I;L²)}` per consecutive pair; `None` when either
    /// level failed.
    pub l2l2: Vec<Option<f64>>,
    /// `d(𝐙^n, 𝐙^{n+1})` per consecutive pair.
    pub metric: Vec<f64>,
}

impl WongZakaiReport {
    /// Successive ratios `l2l2[i+1] / l2l2[i]`.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.l2l2
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                _ => None,
            })
            .collect()
    }
}

/// `(∫ |u_t - v_t|²_{L²} dt)^{1/2}` for trajectories on one time grid, with
/// the difference interpolated linearly in time and integrated exactly.
///
/// The trapezoid rule on `|u - v|²` would overstate a difference that peaks
/// at a single node by half, which is exactly the shape of consecutive
/// Wong-Zakai iterates at the finest level.
pub fn l2l2_distance(u: &Trajectory, v: &Trajectory) -> Result<f64> {
    if u.time() != v.time() || u.spatial_grid() != v.spatial_grid() {
        return invalid("trajectories must share time and spatial grids");
    }
    let t = u.time().times();
    let diffs: Vec<GridFunction> = u.fields().iter().zip(v.fields()).map(|(a, b)| a.sub(b)).collect();
    let mut total = 0.0;
    for j in 1..t.len() {
        let (a, b) = (&diffs[j - 1], &diffs[j]);
        total += (t[j] - t[j - 1]) * (a.inner(a) + a.inner(b) + b.inner(b)) / 3.0;
    }
    Ok(total.max(0.0).sqrt())
}

/// Solves along dyadic piecewise-linear approximations `z^n`, one per level,
/// in parallel. Every level is represented on the finest dyadic grid so the
/// trajectories and lifts are directly comparable.
pub fn wong_zakai_solve(
    input: &WongZakaiInput,
    levels: std::ops::RangeInclusive<u32>,
    e: &EllipticCoefficients,
    noise: &NoiseCoefficients,
    u0: &GridFunction,
    cfg: &SolveConfig,
) -> Result<WongZakaiReport> {
    let (lo, hi) = (*levels.start(), *levels.end());
    if lo == 0 || lo > hi {
        return invalid(format!("levels must be increasing and positive, got {lo}..={hi}"));
    }
    let horizon = cfg.horizon;
    let fine = TimeGrid::dyadic(horizon, hi)?;
    let (base, alpha) = match input {
        WongZakaiInput::Brownian { seed, k, alpha } => (sample_bm_path(*seed, hi, *k, horizon)?, *alpha),
        WongZakaiInput::Rough(r) => {
            if (r.grid().horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
                return invalid("rough path horizon differs from the configured T");
            }
            (r.level1_path(), r.alpha())
        }
    };
    let mut paths = Vec::new();
    for level in lo..=hi {
        let coarse = base.resample(&TimeGrid::dyadic(horizon, level)?)?;
        let z = coarse.resample(&fine)?;
        paths.push((level, z));
    }
    let results: Vec<Result<WongZakaiLevel>> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|(level, z)| {
                s.spawn(move || {
                    let lift = canonical_lift_with_alpha(z, alpha)?;
                    let solution = solve_smooth(e, noise, z, u0, cfg);
                    Ok(WongZakaiLevel { level: *level, lift, solution })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let levels: Vec<WongZakaiLevel> = results.into_iter().collect::<Result<_>>()?;
    let mut l2l2 = Vec::new();
    let mut metric = Vec::new();
    for w in levels.windows(2) {
        l2l2.push(match (&w[0].solution, &w[1].solution) {
            (Ok(a), Ok(b)) => Some(l2l2_distance(&a.trajectory, &b.trajectory)?),
            _ => None,
        });
        metric.push(rough_metric(&w[0].lift, &w[1].lift)?);
    }
    Ok(WongZakaiReport { levels, l2l2, metric })
}

/// All aligned dyadic windows of `2^m` grid steps with `2^m >= min_steps`,
/// keeping scales that still contain at least `min_count` windows.
pub fn dyadic_windows(n_points: usize, min_steps: usize, min_count: usize) -> Vec<(usize, usize)> {
    let steps = n_points.saturating_sub(1);
    let mut out = Vec::new();
    let mut len = 1usize;
    while len <= steps {
        if len >= min_steps && steps / len >= min_count {
            let mut s = 0;
            while s + len <= steps {
                out.push((s, s + len));
                s += len;
            }
        }
        len *= 2;
    }
    out
}

/// Log-log slope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Number of windows that entered the fit.
    pub windows: usize,
}

/// Outcome of a remainder exponent against its target rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Slope reaches the target rate.
    Pass,
    /// Slope misses the target but still exceeds 1, the minimal order a weak
    /// solution's remainder needs.
    OnlyOnePlus,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderDiagnostics {
    pub windows: Vec<(usize, usize)>,
    /// `pairings[w][i]`: pairing of the remainder on window `w` with
    /// dictionary member `i`.
    pub pairings: Vec<Vec<f64>>,
    /// Dictionary dual norm per window, `max_i |pairing| / |φ_i|_{W^{k,∞}}`.
    pub dual: Vec<f64>,
    /// Control value per window used as the fit abscissa.
    pub omega: Vec<f64>,
    /// `ω_B >= ω_μ` on the window.
    pub noise_dominated: Vec<bool>,
    /// OLS of `log dual` on `log ω` over the noise-dominated windows.
    pub fit: ExponentFit,
    /// OLS of per-scale means of `log dual` on per-scale means of `log ω`.
    /// Less scatter, but dominated by the few windows at the top scales.
    /// `None` when the usable windows span fewer than two lengths.
    pub fit_scale_means: Option<ExponentFit>,
}

impl RemainderDiagnostics {
    pub fn verdict(&self, target: f64) -> Verdict {
        if self.fit.slope >= target {
            Verdict::Pass
        } else if self.fit.slope > 1.0 {
            Verdict::OnlyOnePlus
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Sharp,
    Natural,
    Square,
}

fn check_run(sol: &Solution, d: &Driver, dict: &TestDictionary) -> Result<()> {
    if sol.trajectory.time() != d.path().grid() {
        return invalid("solution must be recorded on the driver's time grid");
    }
    if dict.members()[0].grid() != sol.trajectory.spatial_grid() {
        return invalid("dictionary and solution live on different grids");
    }
    Ok(())
}

/// Drift control `ω_μ(s,t) = Σ_j |λ_{t_{j+1}} - λ_{t_j}|_{W^{-1,2}}` over
/// consecutive breakpoints, as a prefix sum.
fn drift_control_prefix(sol: &Solution) -> Vec<f64> {
    let l = &sol.drift.lambda;
    let mut acc = vec![0.0];
    for j in 1..l.len() {
        let v = sobolev_norm(&l[j].sub(&l[j - 1]), -1).unwrap_or(0.0);
        acc.push(acc[j - 1] + v);
    }
    acc
}

struct Evaluator<'a> {
    kind: Kind,
    sol: &'a Solution,
    driver: &'a Driver,
    dict: &'a TestDictionary,
    squares: Option<Vec<GridFunction>>,
}

impl Evaluator<'_> {
    fn order(&self) -> usize {
        match self.kind {
            Kind::Sharp => 2,
            _ => 3,
        }
    }

    fn field(&self, j: usize) -> &GridFunction {
        match &self.squares {
            Some(sq) => &sq[j],
            None => self.sol.trajectory.at(j),
        }
    }

    fn pairings(&self, s: usize, t: usize) -> Result<Vec<f64>> {
        let (us, ut) = (self.field(s), self.field(t));
        let du = ut.sub(us);
        let mut out = Vec::with_capacity(self.dict.len());
        for phi in self.dict.members() {
            let mut v = du.inner(phi) - us.inner(&b_star(self.driver, phi, s, t)?);
            match self.kind {
                Kind::Sharp => {}
                Kind::Natural => v -= self.sol.lambda(phi, s, t) + us.inner(&bb_star(self.driver, phi, s, t)?),
                Kind::Square => v -= self.sol.mu(phi, s, t) + us.inner(&bb_star(self.driver, phi, s, t)?),
            }
            out.push(v);
        }
        Ok(out)
    }

    fn dual(&self, p: &[f64]) -> f64 {
        let k = self.order();
        p.iter().enumerate().map(|(i, v)| v.abs() / self.dict.winf(i, k)).fold(0.0, f64::max)
    }
}

fn fit_exponent(omega: &[f64], dual: &[f64], lens: &[usize], keep: &[bool]) -> Result<(ExponentFit, Option<ExponentFit>)> {
    let idx: Vec<usize> = (0..dual.len()).filter(|&i| keep[i] && dual[i] > 0.0 && omega[i] > 0.0).collect();
    if idx.len() < 4 {
        return Err(Error::FitUndetermined(format!("{} usable windows, need at least 4", idx.len())));
    }
    let x: Vec<f64> = idx.iter().map(|&i| omega[i].ln()).collect();
    let y: Vec<f64> = idx.iter().map(|&i| dual[i].ln()).collect();
    let (slope, intercept, r2) =
        ols(&x, &y).ok_or_else(|| Error::FitUndetermined("windows share one control value".into()))?;
    let raw = ExponentFit { slope, intercept, r2, windows: idx.len() };
    let mut scales: Vec<usize> = idx.iter().map(|&i| lens[i]).collect();
    scales.sort_unstable();
    scales.dedup();
    if scales.len() < 2 {
        return Ok((raw, None));
    }
    let mut mx = Vec::new();
    let mut my = Vec::new();
    for &len in &scales {
        let sel: Vec<usize> = idx.iter().cloned().filter(|&i| lens[i] == len).collect();
        mx.push(sel.iter().map(|&i| omega[i].ln()).sum::<f64>() / sel.len() as f64);
        my.push(sel.iter().map(|&i| dual[i].ln()).sum::<f64>() / sel.len() as f64);
    }
    let means = ols(&mx, &my).map(|(slope, intercept, r2)| ExponentFit { slope, intercept, r2, windows: idx.len() });
    Ok((raw, means))
}

fn diagnostics(ev: &Evaluator<'_>, windows: &[(usize, usize)], with_drift_in_omega: bool) -> Result<RemainderDiagnostics> {
    check_run(ev.sol, ev.driver, ev.dict)?;
    let n = ev.sol.trajectory.len();
    if windows.iter().any(|&(s, t)| s >= t || t >= n) {
        return invalid("windows must be grid pairs s < t inside the run");
    }
    let mu_prefix = drift_control_prefix(ev.sol);
    let mut pairings = Vec::with_capacity(windows.len());
    let mut dual = Vec::with_capacity(windows.len());
    let mut omega = Vec::with_capacity(windows.len());
    let mut noise_dominated = Vec::with_capacity(windows.len());
    for &(s, t) in windows {
        let p = ev.pairings(s, t)?;
        dual.push(ev.dual(&p));
        pairings.push(p);
        let wb = ev.driver.omega_b_at(s, t);
        let wm = mu_prefix[t] - mu_prefix[s];
        noise_dominated.push(wb >= wm);
        omega.push(if with_drift_in_omega { wb + wm } else { wb });
    }
    let lens: Vec<usize> = windows.iter().map(|&(s, t)| t - s).collect();
    let (fit, fit_scale_means) = fit_exponent(&omega, &dual, &lens, &noise_dominated)?;
    Ok(RemainderDiagnostics { windows: windows.to_vec(), pairings, dual, omega, noise_dominated, fit, fit_scale_means })
}

/// `⟨u♯_{st}, φ⟩ = ⟨δu_{st}, φ⟩ - ⟨u_s, B*_{st} φ⟩`, normalized by
/// `|φ|_{W^{2,∞}}` and fitted against `ω_B + ω_μ`.
pub fn remainder_sharp(sol: &Solution, d: &Driver, dict: &TestDictionary, windows: &[(usize, usize)]) -> Result<RemainderDiagnostics> {
    let ev = Evaluator { kind: Kind::Sharp, sol, driver: d, dict, squares: None };
    diagnostics(&ev, windows, true)
}

/// `⟨u♮_{st}, φ⟩ = ⟨δu_{st}, φ⟩ - λ_{st}(φ) - ⟨u_s, B*_{st}φ⟩ - ⟨u_s, 𝔹*_{st}φ⟩`,
/// normalized by `|φ|_{W^{3,∞}}` and fitted against `ω_B`. The drift uses the
/// run's own quadrature, recorded in the solution.
pub fn remainder_natural(sol: &Solution, d: &Driver, dict: &TestDictionary, windows: &[(usize, usize)]) -> Result<RemainderDiagnostics> {
    let ev = Evaluator { kind: Kind::Natural, sol, driver: d, dict, squares: None };
    diagnostics(&ev, windows, false)
}

/// Remainder of the equation for `u²` with the hat driver (`ν` doubled):
/// `⟨δ(u²)_{st}, φ⟩ - μ_{st}(φ) - ⟨u²_s, B̂*φ⟩ - ⟨u²_s, 𝔹̂*φ⟩`.
pub fn square_equation_check(sol: &Solution, d: &Driver, dict: &TestDictionary, windows: &[(usize, usize)]) -> Result<RemainderDiagnostics> {
    let hat = hat_driver(d)?;
    let squares = sol.trajectory.fields().iter().map(|u| u.mul(u)).collect();
    let ev = Evaluator { kind: Kind::Square, sol, driver: &hat, dict, squares: Some(squares) };
    diagnostics(&ev, windows, false)
}

/// 1-variation of the natural remainder's dual norm over `[s,t]`, restricted
/// to partitions by the points of the `r`-th dyadic refinement of the window,
/// for `r = 0..=max_refine`. The sequence is nondecreasing by construction
/// and bounded when the remainder has finite 1-variation.
pub fn natural_variation_proxy(sol: &Solution, d: &Driver, dict: &TestDictionary, window: (usize, usize), max_refine: u32) -> Result<Vec<f64>> {
    check_run(sol, d, dict)?;
    let (s, t) = window;
    if s >= t || t >= sol.trajectory.len() {
        return invalid("window outside the run");
    }
    let ev = Evaluator { kind: Kind::Natural, sol, driver: d, dict, squares: None };
    let mut out = Vec::new();
    for r in 0..=max_refine {
        let parts = 1usize << r;
        if parts > t - s {
            break;
        }
        let pts: Vec<usize> = (0..=parts).map(|i| s + ((t - s) * i) / parts).collect();
        let m = pts.len();
        let mut best = vec![0.0f64; m];
        for j in 1..m {
            let mut v: f64 = 0.0;
            for i in 0..j {
                v = v.max(best[i] + ev.dual(&ev.pairings(pts[i], pts[j])?));
            }
            best[j] = v;
        }
        out.push(best[m - 1]);
    }
    Ok(out)
}

/// One arm of a stability comparison.
#[derive(Debug, Clone, Copy)]
pub struct StabilityArm<'a> {
    pub e: &'a EllipticCoefficients,
    pub path: &'a RoughPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    /// Rough-path distance of the two drivers.
    pub rough_distance: f64,
    /// `‖b¹-b²‖_{L^{2r}L^{2q}} + ‖c¹-c²‖_{L^r L^q}` on the run's time grid.
    pub coefficient_distance: f64,
    pub l2l2: f64,
    /// `sup_t |u¹_t - u²_t|_{W^{-1,2}}`.
    pub sup_h_minus1: f64,
}

fn coefficient_distance(e1: &EllipticCoefficients, e2: &EllipticCoefficients, time: &TimeGrid) -> Result<f64> {
    let t = time.times();
    let diff = |f: &dyn Fn(&EllipticCoefficients, f64) -> GridFunction| -> Result<Trajectory> {
        Trajectory::new(time.clone(), t.iter().map(|&s| f(e1, s).sub(&f(e2, s))).collect())
    };
    let mut total = 0.0;
    for axis in 0..e1.grid().d() {
        let db = diff(&|e, s| e.b_at(s)[axis].clone())?;
        total += mixed_norm(&db, 2.0 * e1.r(), 2.0 * e1.q())?;
    }
    let dc = diff(&|e, s| e.c_at(s))?;
    Ok(total + mixed_norm(&dc, e1.r(), e1.q())?)
}

/// Solves every arm (in parallel) and tabulates driver, coefficient and
/// solution distances per pair. Solves use the level-1 path of each arm.
pub fn stability_experiment(
    pairs: &[(StabilityArm<'_>, StabilityArm<'_>)],
    noise: &NoiseCoefficients,
    u0: &GridFunction,
    cfg: &SolveConfig,
) -> Result<Vec<StabilityRow>> {
    for (a, b) in pairs {
        if a.path.grid() != b.path.grid() {
            return invalid("paired drivers must share a time grid");
        }
        if a.e.grid() != b.e.grid() {
            return invalid("paired coefficients must share a spatial grid");
        }
    }
    let solved: Vec<Result<(Solution, Solution)>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(a, b)| {
                s.spawn(move || -> Result<(Solution, Solution)> {
                    let ua = solve_smooth(a.e, noise, &a.path.level1_path(), u0, cfg)?;
                    let ub = solve_smooth(b.e, noise, &b.path.level1_path(), u0, cfg)?;
                    Ok((ua, ub))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut rows = Vec::with_capacity(pairs.len());
    for ((a, b), res) in pairs.iter().zip(solved) {
        let (ua, ub) = res?;
        let sup = ua
            .trajectory
            .fields()
            .iter()
            .zip(ub.trajectory.fields())
            .map(|(x, y)| sobolev_norm(&x.sub(y), -1))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rows.push(StabilityRow {
            rough_distance: rough_metric(a.path, b.path)?,
            coefficient_distance: coefficient_distance(a.e, b.e, ua.trajectory.time())?,
            l2l2: l2l2_distance(&ua.trajectory, &ub.trajectory)?,
            sup_h_minus1: sup,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ParabolicityReport {
    /// `a0 - σ0²/2`, the effective diffusivity of the Itô-modified equation.
    pub margin: f64,
    /// `|u_t|²` at the recorded times of each run.
    pub ito_energy: Vec<f64>,
    pub stratonovich_energy: Vec<f64>,
    /// Last recorded `|u|²` over `|u_0|²`.
    pub ito_ratio: f64,
    pub stratonovich_ratio: f64,
    /// Largest relative increase of `|u|²` between consecutive records.
    pub ito_max_increase: f64,
    pub ito_blow_up: Option<f64>,
    pub negative_diffusivity: bool,
    pub stratonovich_check: EnergyCheck,
}

/// Runs `∂_t u = a0 ∂_xx u + σ0 ∂_x u ż` along `z` twice: as written
/// (geometric/Stratonovich reading) and with the Itô correction
/// `-½σ0² ∂_xx u` (bracket `φ(t) = t`). The initial datum is `sin(2πx)`.
pub fn parabolicity_demo(a0: f64, sigma0: f64, z: &Path1, cfg: &SolveConfig) -> Result<ParabolicityReport> {
    let g = cfg.grid;
    if g.d() != 1 || z.dim() != 1 {
        return Err(Error::Unsupported("the parabolicity demo runs with d = K = 1".into()));
    }
    let e = EllipticCoefficients::heat(g, a0)?;
    let noise = NoiseCoefficients::constant(g, 1, &[sigma0], &[0.0])?;
    let u0 = GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin());
    let bracket = Path1::from_fn(z.grid().clone(), 1, |t| vec![t])?;
    let (ito, strat) = std::thread::scope(|s| {
        let hi = s.spawn(|| solve_ito_modified(&e, &noise, z, &bracket, &u0, cfg));
        let hs = s.spawn(|| solve_smooth(&e, &noise, z, &u0, cfg));
        (hi.join().expect("solver thread panicked"), hs.join().expect("solver thread panicked"))
    });
    let (ito, strat) = (ito?, strat?);
    let driver = Driver::new(Arc::new(canonical_lift_with_alpha(z, DEFAULT_ALPHA)?), Arc::new(noise.clone()))?;
    let check = energy_gronwall_check(&strat, &e, &driver)?;
    let energies = |s: &Solution| s.trajectory.fields().iter().map(|u| u.inner(u)).collect::<Vec<f64>>();
    let ie = energies(&ito);
    let se = energies(&strat);
    let max_inc = ie.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else { 0.0 }).fold(f64::NEG_INFINITY, f64::max);
    Ok(ParabolicityReport {
        margin: a0 - 0.5 * sigma0 * sigma0,
        ito_ratio: ie[ie.len() - 1] / ie[0],
        stratonovich_ratio: se[se.len() - 1] / se[0],
        ito_max_increase: max_inc,
        ito_blow_up: ito.flags.blow_up,
        negative_diffusivity: ito.flags.negative_diffusivity,
        ito_energy: ie,
        stratonovich_energy: se,
        stratonovich_check: check,
    })
}

/// Sums of `𝐛` and `𝐜` over the run, handy for experiment summaries.
pub fn coefficient_control_totals(e: &EllipticCoefficients, time: &TimeGrid) -> (f64, f64) {
    let (b, c) = coefficient_controls(e, time.times());
    (*b.last().unwrap_or(&0.0), *c.last().unwrap_or(&0.0))
}
