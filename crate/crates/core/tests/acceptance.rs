//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed. The
//! verdicts are a report: the process exits 0 unless `ACCEPTANCE_STRICT=1`
//! is set, in which case any FAIL exits 1. `ACCEPTANCE_ONLY=n` runs a single
//! criterion.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpde::driver::{
    finite_difference, smoothing_constants, smoothing_j, theta_field, Driver, JVariant, NoiseCoefficients,
};
use rpde::fields::{sobolev_norm, winf_norm, GridFunction, SpatialGrid, TestDictionary};
use rpde::parabolic::{
    energy_gronwall_check, solve_smooth, Coefficient, EllipticCoefficients, SolveConfig, StepPolicy,
};
use rpde::rough_solver::{
    dyadic_windows, parabolicity_demo, remainder_natural, remainder_sharp, square_equation_check, wong_zakai_solve,
    WongZakaiInput,
};
use rpde::roughpath::{
    canonical_lift, canonical_lift_with_alpha, chen_residual, geometricity_defect, p_variation, sample_bm_path,
    ControlGrid, Path1, TimeGrid, TwoIndexMap,
};
use rpde::sewing::{extremal_gronwall_sequence, gronwall_bound, lambda_map, rough_integral, FnGerm, SewingOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Observed convergence orders between consecutive refinements.
fn orders(errors: &[f64], factor: f64) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).ln() / factor.ln()).collect()
}

fn sine(g: SpatialGrid) -> GridFunction {
    GridFunction::from_fn(g, |x, _| (2.0 * PI * x).sin())
}

// Criterion 1 -----------------------------------------------------------------

/// p-variation by enumerating every subset of interior points.
fn brute_force_pvar(x: &[f64], p: f64) -> f64 {
    let n = x.len();
    let inner = n - 2;
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << inner) {
        let mut prev = 0;
        let mut sum = 0.0;
        for i in 1..n {
            if i == n - 1 || mask & (1 << (i - 1)) != 0 {
                sum += (x[i] - x[prev]).abs().powf(p);
                prev = i;
            }
        }
        best = best.max(sum);
    }
    best.powf(1.0 / p)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_pvar: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=12);
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grid = TimeGrid::uniform(1.0, n - 1).unwrap();
        let path = Path1::scalar(grid.clone(), vals.clone()).unwrap();
        let inc = TwoIndexMap::from_fn(grid, 1, |i, j, o| o[0] = path.at(j)[0] - path.at(i)[0]);
        for p in [1.0, 2.0, 3.0] {
            let got = p_variation(&inc, p, (0, n - 1)).unwrap();
            let want = brute_force_pvar(&vals, p);
            worst_pvar = worst_pvar.max((got - want).abs() / want.max(1e-300));
        }
    }
    let mut worst_alg: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed as usize % 3);
        let n = 20;
        let grid = TimeGrid::new((0..n).map(|i| i as f64 + 0.3 * (i as f64).sin().abs()).collect()).unwrap();
        let vals: Vec<f64> = (0..n * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = canonical_lift(&Path1::new(grid, k, vals).unwrap()).unwrap();
        let scale = r.z().raw().iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2).max(1.0);
        worst_alg = worst_alg.max(chen_residual(&r) / scale).max(geometricity_defect(&r) / scale);
    }
    outcome(
        worst_pvar <= 1e-12 && worst_alg <= 1e-10,
        format!("p-var vs enumeration rel err {worst_pvar:.2e} (tol 1e-12); Chen/geometricity rel {worst_alg:.2e} (tol 1e-10)"),
    )
}

// Criterion 2 -----------------------------------------------------------------

fn criterion_2() -> Outcome {
    let opts = SewingOptions { tol: 1e-8, max_level: 14, accelerate: true };
    let grid = TimeGrid::uniform(1.0, 1).unwrap();
    let lin = FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = s * (t - s));
    let trig = FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = s.cos() * (t.sin() - s.sin()));
    let mut young_err: f64 = 0.0;
    let mut young_ok = true;
    for (germ, exact) in [(&lin as &dyn rpde::sewing::Germ, 0.5), (&trig, 0.5 + (2.0f64).sin() / 4.0)] {
        match rough_integral(&grid, germ, &opts) {
            Ok(rep) => young_err = young_err.max((rep.integral.scalar(0, 1) - exact).abs()),
            Err(e) => {
                eprintln!("sewing failed: {e}");
                young_ok = false
            }
        }
    }
    let mut worst_ratio: f64 = 0.0;
    let zeta = |a: f64| (1..200_000).map(|n| (n as f64).powf(-a)).sum::<f64>() + 200_000f64.powf(1.0 - a) / (a - 1.0);
    let lgrid = TimeGrid::uniform(1.0, 32).unwrap();
    let lopts = SewingOptions { tol: 1e-7, max_level: 24, accelerate: true };
    for a in [1.2, 1.5, 2.0] {
        let e = a / 2.0;
        let germ = FnGerm::new(1, move |s: f64, t: f64, o: &mut [f64]| o[0] = s.powf(e) * (t.powf(e) - s.powf(e)));
        let lam = match lambda_map(&lgrid, &germ, &lopts) {
            Ok(l) => l,
            Err(_) => return outcome(false, format!("Λ map did not converge for a={a}")),
        };
        let c = 2f64.powf(a) * zeta(a);
        let t = lgrid.times();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                worst_ratio = worst_ratio.max(lam.scalar(i, j).abs() / (c * (t[j] - t[i]).powf(a)));
            }
        }
    }
    outcome(
        young_ok && young_err <= 1e-6 && worst_ratio <= 1.0,
        format!("Young integral err {young_err:.2e} (tol 1e-6, level 14); max |Λ|/(2^a ζ(a)(t-s)^a) = {worst_ratio:.3}"),
    )
}

// Criterion 3 -----------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let kappa = [2.0, 2.5, 3.0][case % 3];
        let l = 0.5;
        let n = 40;
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        let tau = rpde::sewing::gronwall_tau(kappa, l);
        // ω(s,t) = c (F(t) - F(s))^p with F increasing: superadditive for p >= 1.
        let p = rng.random_range(1.0..2.0);
        let total = rng.random_range(0.5..20.0) * tau;
        let jumps: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut f = vec![0.0];
        for j in &jumps {
            f.push(f.last().unwrap() + j);
        }
        let fmax = *f.last().unwrap();
        let cum = TwoIndexMap::from_fn(grid.clone(), 1, |i, j, o| o[0] = total * ((f[j] - f[i]) / fmax).powf(p));
        let omega = ControlGrid::from_map(cum).unwrap();
        let g0 = rng.random_range(0.5..2.0);
        let g = extremal_gronwall_sequence(g0, &omega, kappa, l).unwrap();
        let bound = gronwall_bound(g0, &omega, None, kappa, l).unwrap();
        for (gj, bj) in g.iter().zip(bound.values()) {
            worst = worst.max(gj / bj);
        }
    }
    outcome(worst <= 1.0, format!("max G_t / bound_t = {worst:.3e} over 20 extremal sequences"))
}

// Criterion 4 -----------------------------------------------------------------

fn heat_error(n: usize, dt: f64) -> f64 {
    let g = SpatialGrid::new(1, n).unwrap();
    let e = EllipticCoefficients::heat(g, 1.0).unwrap();
    let t = 0.1;
    let z = Path1::from_fn(TimeGrid::uniform(t, 1).unwrap(), 1, |s| vec![s]).unwrap();
    let u0 = sine(g);
    let sol = solve_smooth(&e, &NoiseCoefficients::zero(g, 1), &z, &u0, &SolveConfig::new(g, dt, t)).unwrap();
    let exact = u0.scale((-4.0 * PI * PI * t).exp());
    sol.trajectory.last().sub(&exact).l2_norm() / exact.l2_norm()
}

fn transport_constant(a: f64) -> f64 {
    let g = SpatialGrid::new(1, 256).unwrap();
    let e = EllipticCoefficients::heat(g, a).unwrap();
    let (s0, t) = (0.7, 1.0);
    let noise = NoiseCoefficients::constant(g, 1, &[s0], &[0.0]).unwrap();
    let z = Path1::from_fn(TimeGrid::uniform(t, 1).unwrap(), 1, |s| vec![s]).unwrap();
    let cfg = SolveConfig::new(g, 1e-3, t).with_policy(StepPolicy::Substep);
    let sol = solve_smooth(&e, &noise, &z, &sine(g), &cfg).unwrap();
    let shifted = GridFunction::from_fn(g, |x, _| (2.0 * PI * (x + s0 * t)).sin());
    sol.trajectory.last().sub(&shifted).l2_norm() / (a * t)
}

fn criterion_4() -> Outcome {
    let space: Vec<f64> = [64, 128, 256].iter().map(|&n| heat_error(n, 1e-5)).collect();
    let time: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&dt| heat_error(1024, dt)).collect();
    let so = orders(&space, 2.0);
    let to = orders(&time, 2.0);
    let c: Vec<f64> = [1e-2, 1e-3].iter().map(|&a| transport_constant(a)).collect();
    let spread = c[0].max(c[1]) / c[0].min(c[1]);
    let pass = so.iter().all(|&o| o >= 1.8) && to.iter().all(|&o| o >= 1.8) && spread <= 2.0;
    outcome(
        pass,
        format!(
            "spatial orders {:.3?}, temporal orders {:.3?} (min 1.8); transport C(a) = {:.3?}, spread {spread:.3} (max 2)",
            so, to, c
        ),
    )
}

// Criterion 5 -----------------------------------------------------------------

fn random_case(case: u64) -> (EllipticCoefficients, NoiseCoefficients, GridFunction, Path1) {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + case);
    let two_d = case % 5 == 4;
    let g = if two_d { SpatialGrid::new(2, 16).unwrap() } else { SpatialGrid::new(1, 64).unwrap() };
    let k = if case % 3 == 2 { 2 } else { 1 };
    let a0 = rng.random_range(0.05..0.3);
    let amp = rng.random_range(0.0..0.4);
    let ph = rng.random_range(0.0..1.0);
    let a11 = GridFunction::from_fn(g, |x, y| a0 * (1.0 + amp * (2.0 * PI * (x + y + ph)).sin()));
    let (m, big_m) = (a0 * (1.0 - amp), a0 * (1.0 + amp));
    let beta = rng.random_range(0.0..0.5);
    let x0 = rng.random_range(0.0..1.0);
    let step = move |x: f64| if (x - x0).rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
    let b1 = GridFunction::from_fn(g, |x, _| beta * step(x));
    let gamma = rng.random_range(0.0..0.4);
    let c = if case % 2 == 0 {
        Coefficient::Field(GridFunction::from_fn(g, |x, y| gamma * step(x + 0.25 * y) - 0.1))
    } else {
        Coefficient::TimeDependent(Arc::new(move |t: f64| GridFunction::from_fn(g, |x, _| gamma * step(x - t))))
    };
    let e = if two_d {
        let a22 = a11.map(|v| v * 0.8 + 0.2 * a0);
        let lo = m.min(0.8 * m + 0.2 * a0);
        EllipticCoefficients::new(
            g,
            vec![Coefficient::Field(a11), Coefficient::Constant(0.0), Coefficient::Field(a22)],
            vec![Coefficient::Field(b1), Coefficient::Constant(0.1)],
            c,
            lo,
            big_m,
            3.0,
            3.0,
        )
        .unwrap()
    } else {
        EllipticCoefficients::new(g, vec![Coefficient::Field(a11)], vec![Coefficient::Field(b1)], c, m, big_m, 2.0, 2.0)
            .unwrap()
    };
    let d = g.d();
    let mut sigma = Vec::new();
    let mut nu = Vec::new();
    for kk in 0..k {
        for i in 0..d {
            let s = rng.random_range(0.2..1.0);
            let w = rng.random_range(0.0..0.3);
            sigma.push(GridFunction::from_fn(g, |x, y| s * (1.0 + w * (2.0 * PI * (x + (kk + i) as f64 * y)).cos())));
        }
        let v = rng.random_range(-0.3..0.3);
        nu.push(GridFunction::from_fn(g, |x, _| v * (2.0 * PI * x).sin()));
    }
    let noise = NoiseCoefficients::new(g, k, sigma, nu).unwrap();
    let u0 = GridFunction::from_fn(g, |x, y| (2.0 * PI * x).sin() + 0.5 * (2.0 * PI * y).cos() + 0.2);
    let z = sample_bm_path(case, 6, k, 1.0).unwrap();
    (e, noise, u0, z)
}

fn criterion_5() -> Outcome {
    let results: Vec<(f64, f64, bool)> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..20u64)
            .map(|case| {
                s.spawn(move || {
                    let (e, noise, u0, z) = random_case(case);
                    let g = *e.grid();
                    let cfg = SolveConfig::new(g, 2e-3, 1.0).with_policy(StepPolicy::Substep);
                    let sol = solve_smooth(&e, &noise, &z, &u0, &cfg).unwrap();
                    let lift = Arc::new(canonical_lift_with_alpha(&z, 0.45).unwrap());
                    let driver = Driver::new(lift, Arc::new(noise)).unwrap();
                    let chk = energy_gronwall_check(&sol, &e, &driver).unwrap();
                    (chk.max_ratio, chk.sup_l2_ratio, chk.bound.iter().all(|b| b.is_finite()))
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let worst_g = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_l2 = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let finite = results.iter().filter(|r| r.2).count();
    outcome(
        worst_g <= 1.0 && worst_l2 <= 10.0,
        format!("max G/bound {worst_g:.3e}; max sup|u|²/|u0|² {worst_l2:.3} (max 10); finite bounds in {finite}/20 runs"),
    )
}

// Criterion 6 -----------------------------------------------------------------

fn criterion_6() -> Outcome {
    let alpha = 0.45;
    let g = SpatialGrid::new(1, 256).unwrap();
    let e = EllipticCoefficients::heat(g, 0.02).unwrap();
    let noise = NoiseCoefficients::constant(g, 1, &[1.0], &[0.2]).unwrap();
    let z = sample_bm_path(6, 10, 1, 1.0).unwrap();
    let cfg = SolveConfig::new(g, 1e-3, 1.0).with_policy(StepPolicy::Substep);
    let sol = solve_smooth(&e, &noise, &z, &sine(g), &cfg).unwrap();
    let driver = Driver::new(Arc::new(canonical_lift_with_alpha(&z, alpha).unwrap()), Arc::new(noise)).unwrap();
    let dict = TestDictionary::standard(g);
    let windows = dyadic_windows(z.grid().n_points(), 8, 4);
    let sharp = remainder_sharp(&sol, &driver, &dict, &windows);
    let nat = remainder_natural(&sol, &driver, &dict, &windows);
    let sq = square_equation_check(&sol, &driver, &dict, &windows);
    let (sharp, nat, sq) = match (sharp, nat, sq) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => return outcome(false, format!("fit failed: {:?} {:?} {:?}", a.err(), b.err(), c.err())),
    };
    let means = |r: &rpde::rough_solver::RemainderDiagnostics| {
        r.fit_scale_means.map_or("n/a".to_string(), |f| format!("{:.3}", f.slope))
    };
    let pass = sharp.fit.slope >= 2.0 * alpha - 0.1
        && nat.fit.slope >= 3.0 * alpha - 0.15
        && sq.fit.slope >= 3.0 * alpha - 0.15
        && [sharp.fit.r2, nat.fit.r2, sq.fit.r2].iter().all(|&r| r >= 0.9);
    outcome(
        pass,
        format!(
            "per-window OLS slopes u♯ {:.3} (min 0.80), u♮ {:.3} (min 1.20), u²♮ {:.3} (min 1.20); R² {:.3}/{:.3}/{:.3} (min 0.9); per-scale-mean slopes {}/{}/{}",
            sharp.fit.slope,
            nat.fit.slope,
            sq.fit.slope,
            sharp.fit.r2,
            nat.fit.r2,
            sq.fit.r2,
            means(&sharp),
            means(&nat),
            means(&sq)
        ),
    )
}

// Criterion 7 -----------------------------------------------------------------

fn criterion_7() -> Outcome {
    let g = SpatialGrid::new(1, 128).unwrap();
    let e = EllipticCoefficients::heat(g, 0.05).unwrap();
    let noise = NoiseCoefficients::constant(g, 1, &[1.0], &[0.0]).unwrap();
    let cfg = SolveConfig::new(g, 1e-3, 1.0).with_policy(StepPolicy::Substep);
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let input = WongZakaiInput::Brownian { seed, k: 1, alpha: 0.45 };
        let rep = wong_zakai_solve(&input, 6..=10, &e, &noise, &sine(g), &cfg).unwrap();
        let ratios: Vec<f64> = rep.ratios().into_iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();
        let ratio_ok = ratios.iter().all(|&r| r <= 0.8);
        let metric_ok = rep.metric.windows(2).all(|w| w[1] < w[0]);
        pass &= ratio_ok && metric_ok;
        lines.push(format!(
            "seed {seed}: ratios {:.3?} metric {:.3?}",
            ratios, rep.metric
        ));
    }
    outcome(pass, lines.join("; "))
}

// Criterion 8 -----------------------------------------------------------------

fn criterion_8() -> Outcome {
    let g = SpatialGrid::new(1, 256).unwrap();
    let z = sample_bm_path(8, 8, 1, 0.5).unwrap();
    let cfg = SolveConfig::new(g, 1e-3, 0.5).with_policy(StepPolicy::Substep);
    let mut pass = true;
    let mut parts = Vec::new();
    for s2 in [1.0f64, 1.8, 2.42] {
        let rep = parabolicity_demo(1.0, s2.sqrt(), &z, &cfg).unwrap();
        let ito_ok = if s2 < 2.0 { rep.ito_ratio <= 1.01 } else { rep.ito_ratio >= 10.0 };
        let strat_ok = rep.stratonovich_check.holds();
        pass &= ito_ok && strat_ok;
        parts.push(format!(
            "σ²={s2}: Itô ratio {:.3e}, Stratonovich G/bound {:.2e}",
            rep.ito_ratio, rep.stratonovich_check.max_ratio
        ));
    }
    outcome(pass, parts.join("; "))
}

// Criterion 9 -----------------------------------------------------------------

fn criterion_9() -> Outcome {
    let etas: Vec<f64> = (2..=6).map(|p| 2f64.powi(-p)).collect();
    let mut worst_spread: f64 = 1.0;
    let mut worst_case = String::new();
    let mut dict_ok = true;
    for variant in [JVariant::Resolvent, JVariant::Heat, JVariant::Mollifier] {
        for (k, m) in [(0u32, 1u32), (0, 2), (1, 1), (1, 2), (2, 1)] {
            let mut j = [Vec::new(), Vec::new(), Vec::new()];
            for &n in &[128usize, 256] {
                let g = SpatialGrid::new(1, n).unwrap();
                let dict = TestDictionary::standard(g);
                for &eta in &etas {
                    let c = smoothing_constants(g, eta, variant, k, m).unwrap();
                    j[0].push(c.j1);
                    j[1].push(c.j2);
                    j[2].push(c.j3);
                    for f in dict.members() {
                        let jf = smoothing_j(f, eta, variant).unwrap();
                        let nk = sobolev_norm(f, k as i32).unwrap();
                        let r2 = eta * sobolev_norm(&jf, k as i32 + 1).unwrap() / nk;
                        let r3 = sobolev_norm(&f.sub(&jf), k as i32).unwrap()
                            / (eta.powi(m as i32) * sobolev_norm(f, (k + m) as i32).unwrap());
                        dict_ok &= r2 <= c.j2 * (1.0 + 1e-9) && r3 <= c.j3 * (1.0 + 1e-9);
                    }
                }
            }
            for (name, series) in ["J1", "J2", "J3"].iter().zip(&j) {
                let (lo, hi) = series.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
                if hi / lo > worst_spread {
                    worst_spread = hi / lo;
                    worst_case = format!("{name} {variant:?} k={k} m={m}, range [{lo:.3}, {hi:.3}]");
                }
            }
        }
    }
    // Δ_ε convergence on a single mode.
    let g = SpatialGrid::new(1, 128).unwrap();
    let f = sine(g);
    let df = GridFunction::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x).cos());
    let errs: Vec<f64> =
        [0.1, 0.05, 0.025, 0.0125].iter().map(|&e| finite_difference(&f, &[1.0], e).unwrap().sub(&df).sup_norm()).collect();
    let fd_order = orders(&errs, 2.0).into_iter().fold(f64::INFINITY, f64::min);
    // Cutoff bounds on dictionary members localized to the unit ball.
    let g = SpatialGrid::new(1, 1024).unwrap();
    let bump = GridFunction::from_fn(g, |x, _| {
        let y = 2.0 * (x - 0.5);
        (1.0 - y * y).max(0.0).powi(4)
    });
    let dict = TestDictionary::standard(g);
    let cut_etas = [0.125, 0.0625, 0.03125];
    let mut cut_growth: f64 = 0.0;
    for f in dict.members() {
        let psi = bump.mul(f);
        let mut first: Option<Vec<f64>> = None;
        for &eta in &cut_etas {
            let th = theta_field(g, eta).unwrap();
            let mut ratios = Vec::new();
            for k in 0..=2 {
                ratios.push(winf_norm(&th.mul(&psi), k).unwrap() / winf_norm(&psi, k).unwrap());
            }
            let rest = psi.sub(&th.mul(&psi));
            for k in 0..=3 {
                for l in 0..=k {
                    ratios.push(winf_norm(&rest, l).unwrap() / (eta.powi(k - l) * winf_norm(&psi, k).unwrap()));
                }
            }
            match &first {
                None => first = Some(ratios),
                Some(base) => {
                    for (r, b) in ratios.iter().zip(base) {
                        if *b > 0.0 {
                            cut_growth = cut_growth.max(r / b);
                        }
                    }
                }
            }
        }
    }
    let pass = worst_spread <= 2.0 && dict_ok && fd_order >= 1.8 && cut_growth <= 2.0;
    outcome(
        pass,
        format!(
            "J constant spread {worst_spread:.3} (max 2; worst {worst_case}), dictionary within constants: {dict_ok}; Δ_ε order {fd_order:.3} (min 1.8); cutoff constant growth {cut_growth:.3} (max 2)"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("rough-path algebra", criterion_1),
        ("sewing", criterion_2),
        ("Gronwall", criterion_3),
        ("classical solver", criterion_4),
        ("energy inequality", criterion_5),
        ("remainder rates", criterion_6),
        ("Wong-Zakai", criterion_7),
        ("stochastic parabolicity", criterion_8),
        ("smoothing and finite differences", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{name}]: {verdict} ({:.1}s) {}", i + 1, start.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
        return;
    }
    println!("acceptance: all criteria passed");
}
