//! One function per subcommand. Each writes its tables through [`Output`]
//! and returns a JSON summary that is also written as `summary.json`.

use std::sync::Arc;

use serde_json::{json, Value};

use rpde::driver::{smoothing_constants, Driver, JConstants, JVariant};
use rpde::fields::{grad_sq, TestDictionary};
use rpde::parabolic::{energy_gronwall_check, energy_series, solve_smooth, Solution};
use rpde::rough_solver::{
    dyadic_windows, parabolicity_demo, remainder_natural, remainder_sharp, square_equation_check, stability_experiment,
    wong_zakai_solve, ExponentFit, RemainderDiagnostics, StabilityArm, Verdict, WongZakaiInput,
};
use rpde::roughpath::{
    canonical_lift_with_alpha, chen_residual, geometricity_defect, rough_metric, sample_bm_path, ControlGrid, Path1,
    RoughPath, TimeGrid,
};
use rpde::sewing::{extremal_gronwall_sequence, gronwall_bound, gronwall_tau, rough_integral, FnGerm, SewingOptions};

use crate::config::{DriverKind, Loaded, Task};
use crate::error::CliError;
use crate::output::{jnum, num, Csv, Output};

pub fn run(task: Task, l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    match task {
        Task::Lift => lift(l, out),
        Task::Metric => metric(l, out),
        Task::SewingDemo => sewing_demo(l, out),
        Task::GronwallDemo => gronwall_demo(l, out),
        Task::Solve => solve(l, out),
        Task::Wongzakai => wongzakai(l, out),
        Task::Remainders => remainders(l, out),
        Task::Energy => energy(l, out),
        Task::Stability => stability(l, out),
        Task::Parabolicity => parabolicity(l, out),
        Task::SmoothingCheck => smoothing_check(l, out),
    }
}

fn finite(what: &str, vals: &[f64]) -> Result<(), CliError> {
    match vals.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CliError::Numerical(format!("{what} is not finite at index {i}"))),
        None => Ok(()),
    }
}

/// Driver path and its rough lift (the stored one for file drivers).
fn driver_lift(l: &Loaded) -> Result<(Path1, RoughPath), CliError> {
    let (z, stored) = l.driver_path()?;
    let r = match stored {
        Some(r) => r,
        None => canonical_lift_with_alpha(&z, l.alpha())?,
    };
    Ok((z, r))
}

fn solve_run(l: &Loaded) -> Result<(Solution, Path1, RoughPath), CliError> {
    let e = l.coefficients()?;
    let noise = l.noise(l.noise_dim())?;
    let (z, r) = driver_lift(l)?;
    let sol = solve_smooth(&e, &noise, &z, &l.initial()?, &l.solve_config())?;
    if sol.trajectory.fields().iter().any(|u| !u.is_finite()) {
        return Err(CliError::Numerical("solution left the finite range".into()));
    }
    Ok((sol, z, r))
}

fn fit_json(f: &ExponentFit) -> Value {
    json!({ "slope": jnum(f.slope), "intercept": jnum(f.intercept), "r2": jnum(f.r2), "windows": f.windows })
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::OnlyOnePlus => "only-one-plus",
        Verdict::Fail => "fail",
    }
}

/// Canonical lift of the configured driver: `lift.json` and the increments
/// `Z_{0t}`, `ZZ_{0t}` in `lift.csv`.
fn lift(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (_, r) = driver_lift(l)?;
    let k = r.k();
    let mut head: Vec<String> = vec!["t".into()];
    head.extend((1..=k).map(|i| format!("z{i}")));
    for a in 1..=k {
        head.extend((1..=k).map(|b| format!("zz{a}{b}")));
    }
    let mut csv = Csv::new(&head.iter().map(String::as_str).collect::<Vec<_>>());
    for (j, &t) in r.grid().times().iter().enumerate() {
        let mut row = vec![t];
        row.extend_from_slice(r.z().get(0, j));
        row.extend_from_slice(r.zz().get(0, j));
        csv.nums(&row);
    }
    out.csv("lift.csv", &csv)?;
    out.text("lift.json", &r.to_json())?;
    Ok(json!({
        "alpha": r.alpha(),
        "k": k,
        "points": r.grid().n_points(),
        "chen_residual": jnum(chen_residual(&r)),
        "geometricity_defect": jnum(geometricity_defect(&r)),
    }))
}

/// Rough distance between consecutive dyadic interpolations of one
/// Brownian sample. `params.levels = [lo, hi]`.
fn metric(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (lo, hi) = l.param_levels((3, l.level()))?;
    let horizon = l.cfg.time.horizon;
    let base = sample_bm_path(l.cfg.seed, hi, l.noise_dim(), horizon)?;
    let fine = TimeGrid::dyadic(horizon, hi)?;
    let lifts = (lo..=hi)
        .map(|n| {
            let z = base.resample(&TimeGrid::dyadic(horizon, n)?)?.resample(&fine)?;
            canonical_lift_with_alpha(&z, l.alpha())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = Csv::new(&["level", "next_level", "metric"]);
    let mut vals = Vec::new();
    for (i, w) in lifts.windows(2).enumerate() {
        let d = rough_metric(&w[0], &w[1])?;
        vals.push(d);
        csv.row(vec![(lo + i as u32).to_string(), (lo + i as u32 + 1).to_string(), num(d)]);
    }
    finite("rough metric", &vals)?;
    out.csv("metric.csv", &csv)?;
    Ok(json!({ "levels": [lo, hi], "metric": vals }))
}

/// Sewing of a Young germ `f_s δg_{st}` on `[0, T]`, with the refinement
/// history. `params.germ` is `"linear"` (f = g = t) or `"trig"`
/// (f = cos, g = sin); `params.max_level` and `params.tol` tune the sewing.
fn sewing_demo(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let germ_name = l.param_str("germ", "trig")?.to_string();
    let opts = SewingOptions {
        tol: l.param_f64("tol", 1e-8)?,
        max_level: l.param_u32("max_level", 14)?,
        accelerate: l.cfg.params.get("accelerate").and_then(Value::as_bool).unwrap_or(true),
    };
    let horizon = l.cfg.time.horizon;
    let grid = TimeGrid::uniform(horizon, 1)?;
    let (rep, exact) = match germ_name.as_str() {
        "linear" => (
            rough_integral(&grid, &FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = s * (t - s)), &opts)?,
            0.5 * horizon * horizon,
        ),
        "trig" => (
            rough_integral(&grid, &FnGerm::new(1, |s: f64, t: f64, o: &mut [f64]| o[0] = s.cos() * (t.sin() - s.sin())), &opts)?,
            0.5 * horizon + 0.25 * (2.0 * horizon).sin(),
        ),
        other => return Err(l.error(Some("params"), "germ", format!("params.germ must be \"linear\" or \"trig\", got \"{other}\""))),
    };
    let mut csv = Csv::new(&["level", "max_difference"]);
    for &(lev, diff) in &rep.history {
        csv.row(vec![lev.to_string(), num(diff)]);
    }
    out.csv("sewing.csv", &csv)?;
    let integral = rep.integral.scalar(0, 1);
    finite("sewn integral", &[integral])?;
    Ok(json!({
        "germ": germ_name,
        "integral": integral,
        "exact": exact,
        "error": (integral - exact).abs(),
        "levels_used": rep.levels_used,
    }))
}

/// Extremal sequence for `ω(s,t) = c (t - s)` on a dyadic grid against the
/// rough Gronwall bound. Params: `kappa`, `L`, `scale`, `g0`.
fn gronwall_demo(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let kappa = l.param_f64("kappa", 2.0)?;
    let big_l = l.param_f64("L", 0.5)?;
    let scale = l.param_f64("scale", 1.0)?;
    let g0 = l.param_f64("g0", 1.0)?;
    if !(scale > 0.0) {
        return Err(l.error(Some("params"), "scale", "params.scale must be positive"));
    }
    let omega = ControlGrid::time(TimeGrid::dyadic(l.cfg.time.horizon, l.level())?).scale(scale);
    let g = extremal_gronwall_sequence(g0, &omega, kappa, big_l)?;
    let bound = gronwall_bound(g0, &omega, None, kappa, big_l)?;
    let mut csv = Csv::new(&["t", "G", "bound"]);
    let mut worst: f64 = 0.0;
    for (j, &t) in omega.grid().times().iter().enumerate() {
        let b = bound.at(j)[0];
        worst = worst.max(g[j] / b);
        csv.nums(&[t, g[j], b]);
    }
    finite("extremal sequence", &g)?;
    out.csv("gronwall.csv", &csv)?;
    Ok(json!({ "kappa": kappa, "L": big_l, "tau": gronwall_tau(kappa, big_l), "max_ratio": jnum(worst) }))
}

/// Classical solve along the level-1 driver path: `solve.csv` with
/// `|u|`, `|∇u|` and `G` at the driver breakpoints, plus a run manifest.
fn solve(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (sol, _, _) = solve_run(l)?;
    let m = l.coefficients()?.m();
    let g = energy_series(&sol.trajectory, m)?;
    let mut csv = Csv::new(&["t", "l2", "grad_l2", "G"]);
    for (j, (&t, u)) in sol.trajectory.time().times().iter().zip(sol.trajectory.fields()).enumerate() {
        csv.nums(&[t, u.l2_norm(), grad_sq(u).sqrt(), g.at(j)[0]]);
    }
    out.csv("solve.csv", &csv)?;
    let source: Value = serde_json::from_str(&l.text).expect("config already parsed");
    out.json(
        "manifest.json",
        &json!({
            "config": source,
            "steps": sol.flags.steps,
            "max_dt": sol.flags.max_dt,
            "records": sol.trajectory.len(),
        }),
    )?;
    let last = sol.trajectory.last();
    Ok(json!({ "steps": sol.flags.steps, "final_l2": last.l2_norm(), "final_G": g.values()[g.values().len() - 1] }))
}

/// Wong-Zakai sweep over dyadic interpolations of the driver.
/// `params.levels = [lo, hi]`.
fn wongzakai(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (lo, hi) = l.param_levels((4, l.level()))?;
    let e = l.coefficients()?;
    let k = l.noise_dim();
    let noise = l.noise(k)?;
    let kind = l.cfg.driver.as_ref().map_or(DriverKind::Bm, |d| d.kind);
    let input = match kind {
        DriverKind::Bm => WongZakaiInput::Brownian { seed: l.cfg.seed, k, alpha: l.alpha() },
        _ => WongZakaiInput::Rough(Arc::new(driver_lift(l)?.1)),
    };
    let rep = wong_zakai_solve(&input, lo..=hi, &e, &noise, &l.initial()?, &l.solve_config())?;
    for lev in &rep.levels {
        if let Err(err) = &lev.solution {
            return Err(err.clone().into());
        }
    }
    let ratios = rep.ratios();
    let mut csv = Csv::new(&["level", "next_level", "metric", "l2l2", "l2l2_ratio"]);
    for (i, (&d, dist)) in rep.metric.iter().zip(&rep.l2l2).enumerate() {
        let ratio = if i == 0 { None } else { ratios[i - 1] };
        csv.row(vec![
            (lo + i as u32).to_string(),
            (lo + i as u32 + 1).to_string(),
            num(d),
            dist.map_or(String::new(), num),
            ratio.map_or(String::new(), num),
        ]);
    }
    out.csv("wongzakai.csv", &csv)?;
    let dists: Vec<f64> = rep.l2l2.iter().map(|d| d.unwrap_or(f64::NAN)).collect();
    finite("Wong-Zakai distance", &dists)?;
    Ok(json!({
        "levels": [lo, hi],
        "metric": rep.metric,
        "l2l2": dists,
        "ratios": ratios.iter().map(|r| r.map_or(Value::Null, jnum)).collect::<Vec<_>>(),
    }))
}

/// Remainder exponents of the sharp, natural and square equations on
/// dyadic windows of at least 8 driver steps.
fn remainders(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (sol, z, r) = solve_run(l)?;
    let noise = Arc::new(l.noise(l.noise_dim())?);
    let driver = Driver::new(Arc::new(r), noise)?;
    let dict = TestDictionary::standard(l.grid());
    let windows = dyadic_windows(z.grid().n_points(), 8, 4);
    let alpha = driver.path().alpha();
    let runs: [(&str, RemainderDiagnostics, f64); 3] = [
        ("sharp", remainder_sharp(&sol, &driver, &dict, &windows)?, 2.0 * alpha),
        ("natural", remainder_natural(&sol, &driver, &dict, &windows)?, 3.0 * alpha),
        ("square", square_equation_check(&sol, &driver, &dict, &windows)?, 3.0 * alpha),
    ];
    let mut csv = Csv::new(&["equation", "s", "t", "omega", "dual", "noise_dominated"]);
    let mut summary = serde_json::Map::new();
    let times = z.grid().times();
    for (name, d, target) in &runs {
        for (w, &(s, t)) in d.windows.iter().enumerate() {
            csv.row(vec![
                name.to_string(),
                num(times[s]),
                num(times[t]),
                num(d.omega[w]),
                num(d.dual[w]),
                u8::from(d.noise_dominated[w]).to_string(),
            ]);
        }
        summary.insert(
            name.to_string(),
            json!({
                "target": target,
                "fit": fit_json(&d.fit),
                "fit_scale_means": d.fit_scale_means.as_ref().map_or(Value::Null, fit_json),
                "verdict": verdict_name(d.verdict(*target)),
            }),
        );
    }
    out.csv("remainders.csv", &csv)?;
    out.json("fits.json", &Value::Object(summary.clone()))?;
    Ok(Value::Object(summary))
}

/// Energy `G_t` against the rough Gronwall bound with run-measured controls.
fn energy(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let (sol, _, r) = solve_run(l)?;
    let e = l.coefficients()?;
    let driver = Driver::new(Arc::new(r), Arc::new(l.noise(l.noise_dim())?))?;
    let chk = energy_gronwall_check(&sol, &e, &driver)?;
    finite("energy", &chk.g)?;
    let mut csv = Csv::new(&["t", "G", "bound"]);
    for ((&t, &g), &b) in chk.times.iter().zip(&chk.g).zip(&chk.bound) {
        csv.nums(&[t, g, b]);
    }
    out.csv("energy.csv", &csv)?;
    Ok(json!({
        "constant": jnum(chk.constant),
        "kappa": chk.kappa,
        "max_ratio": jnum(chk.max_ratio),
        "sup_l2_ratio": jnum(chk.sup_l2_ratio),
        "holds": chk.holds(),
    }))
}

/// Solution-map stability: the driver path is scaled by `1 + ε` and `c` is
/// shifted by `ε` for each `ε` in `params.eps`.
fn stability(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let eps = l.param_list("eps", &[0.2, 0.1, 0.05, 0.025])?;
    let base_e = l.coefficients()?;
    let noise = l.noise(l.noise_dim())?;
    let (z, r) = driver_lift(l)?;
    let mut arms = Vec::with_capacity(eps.len());
    for &ep in &eps {
        let zp = Path1::new(z.grid().clone(), z.dim(), z.values().iter().map(|v| v * (1.0 + ep)).collect())?;
        arms.push((l.coefficients_shifted(ep)?, canonical_lift_with_alpha(&zp, r.alpha())?));
    }
    let pairs: Vec<_> = arms
        .iter()
        .map(|(e, p)| (StabilityArm { e: &base_e, path: &r }, StabilityArm { e, path: p }))
        .collect();
    let rows = stability_experiment(&pairs, &noise, &l.initial()?, &l.solve_config())?;
    let mut csv = Csv::new(&["eps", "rough_distance", "coefficient_distance", "l2l2", "sup_h_minus1"]);
    for (&ep, row) in eps.iter().zip(&rows) {
        let vals = [ep, row.rough_distance, row.coefficient_distance, row.l2l2, row.sup_h_minus1];
        finite("stability row", &vals)?;
        csv.nums(&vals);
    }
    out.csv("stability.csv", &csv)?;
    Ok(json!({ "rows": rows.len() }))
}

/// Itô against Stratonovich readings of `∂_t u = a0 ∂_xx u + σ0 ∂_x u ż`
/// for each `σ0²` in `params.sigma2`; `params.a0` sets the diffusivity.
fn parabolicity(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let a0 = l.param_f64("a0", 1.0)?;
    let s2 = l.param_list("sigma2", &[1.0, 1.8, 2.42])?;
    if let Some(bad) = s2.iter().find(|v| !(**v >= 0.0)) {
        return Err(l.error(Some("params"), "sigma2", format!("params.sigma2 entries must be nonnegative, got {bad}")));
    }
    let (z, _) = l.driver_path()?;
    let cfg = l.solve_config();
    let mut csv = Csv::new(&[
        "sigma2",
        "margin",
        "ito_ratio",
        "stratonovich_ratio",
        "ito_max_increase",
        "ito_blow_up",
        "negative_diffusivity",
        "stratonovich_bound_ratio",
    ]);
    let mut summary = Vec::new();
    for &v in &s2 {
        let rep = parabolicity_demo(a0, v.sqrt(), &z, &cfg)?;
        csv.row(vec![
            num(v),
            num(rep.margin),
            num(rep.ito_ratio),
            num(rep.stratonovich_ratio),
            num(rep.ito_max_increase),
            rep.ito_blow_up.map_or(String::new(), num),
            u8::from(rep.negative_diffusivity).to_string(),
            num(rep.stratonovich_check.max_ratio),
        ]);
        summary.push(json!({
            "sigma2": v,
            "margin": rep.margin,
            "ito_ratio": jnum(rep.ito_ratio),
            "stratonovich_ratio": jnum(rep.stratonovich_ratio),
            "ito_blow_up": rep.ito_blow_up,
            "stratonovich_energy_holds": rep.stratonovich_check.holds(),
        }));
    }
    out.csv("parabolicity.csv", &csv)?;
    Ok(Value::Array(summary))
}

/// Operator-norm constants of the smoothing families over `params.eta`.
fn smoothing_check(l: &Loaded, out: &mut Output) -> Result<Value, CliError> {
    let etas = l.param_list("eta", &[0.25, 0.125, 0.0625, 0.03125])?;
    let g = l.grid();
    let variants = [("resolvent", JVariant::Resolvent), ("heat", JVariant::Heat), ("mollifier", JVariant::Mollifier)];
    let orders = [(0u32, 1u32), (0, 2), (1, 1), (1, 2), (2, 1)];
    let mut csv = Csv::new(&["variant", "eta", "k", "m", "j1", "j2", "j3"]);
    let mut spread = serde_json::Map::new();
    for (name, v) in variants {
        let mut worst: f64 = 1.0;
        for (k, m) in orders {
            let cs = etas.iter().map(|&eta| smoothing_constants(g, eta, v, k, m)).collect::<Result<Vec<_>, _>>()?;
            for (&eta, c) in etas.iter().zip(&cs) {
                csv.row(vec![name.into(), num(eta), k.to_string(), m.to_string(), num(c.j1), num(c.j2), num(c.j3)]);
            }
            for pick in [|c: &JConstants| c.j1, |c: &JConstants| c.j2, |c: &JConstants| c.j3] {
                let vals: Vec<f64> = cs.iter().map(pick).collect();
                let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
                if lo > 0.0 {
                    worst = worst.max(hi / lo);
                }
            }
        }
        spread.insert(name.into(), jnum(worst));
    }
    out.csv("smoothing.csv", &csv)?;
    Ok(json!({ "max_spread_over_eta": spread }))
}
