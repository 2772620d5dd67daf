use anyhow::Result;
use pam_core::manifold::{ManifoldModel, Point};
use pam_core::moments::{ChaosEngine, EngineSettings};
use pam_core::noise::NoiseSpec;
use pam_core::solver::{
    comparison_experiment, encode_trajectories, estimate_lyapunov, holder_diagnostic,
    moment_envelope, positivity_probe, simulate_ensemble, weak_time_zero_check, EnsembleOptions,
    PathEnsemble, Simulator, SolverConfig, TestFunction,
};
use pam_core::stats::Verdict;
use serde_json::json;

use crate::config::{
    point, CompareParams, ExperimentConfig, HolderParams, IntermittencyParams, MomentsParams,
    SimulateParams,
};
use crate::error::Tag;
use crate::record::{num, ResultRecord, Table};

fn even_checkpoints(horizon: f64, dt: f64, count: usize) -> Vec<f64> {
    let steps = (horizon / dt).round() as usize;
    let mut out: Vec<f64> = (1..=count)
        .map(|i| ((i * steps) as f64 / count as f64).round().max(1.0) * dt)
        .collect();
    out.dedup();
    out
}

/// `|Ê[u] - J_μ(t₀ + t, x)| ≤ 3 stderr` at every checkpoint and probe.
fn mean_consistency(
    rec: &mut ResultRecord,
    sim: &Simulator,
    ens: &PathEnsemble,
    mu: &pam_core::measure::InitialMeasure,
) {
    let mut worst = 0.0f64;
    for c in 0..ens.times.len() {
        for p in 0..ens.probes.len() {
            let r = ens.moment(1, c, p);
            let j = sim.heat_value(mu, sim.config.smoothing + ens.times[c], &ens.probes[p]);
            let z = if r.stderr > 0.0 {
                (r.mean - j).abs() / r.stderr
            } else if (r.mean - j).abs() < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    rec.output("mean_max_standardized_error", num(worst));
    rec.check(
        "mean-consistency",
        "solver.mean-follows-heat-flow",
        worst <= 3.0,
        format!("max |E[u] - J| / stderr = {worst:.3} over checkpoints and probes"),
    );
}

pub fn moments(rec: &mut ResultRecord, p: &MomentsParams, seed: u64) -> Result<()> {
    let model = ManifoldModel::<f64>::new(p.model);
    let spec = NoiseSpec::new(p.alpha, p.rho, model.dim).tag("noise")?;
    let settings = EngineSettings::new(
        p.series.bandwidth,
        p.series.noise_bandwidth,
        p.series.time_intervals,
    );
    let engine = ChaosEngine::new(model, spec, settings).tag("moments")?;
    let mesh = model
        .make_mesh(2 * p.series.bandwidth + 2)
        .tag("manifold")?;
    let mu = p.initial.build_on(p.model, &mesh).tag("solver")?;
    let x = point(p.model, &p.at).tag("manifold")?;
    let r = engine
        .second_moment(p.time, &x, &x, &mu, p.smoothing, p.beta, p.series.orders)
        .tag("moments")?;
    let mut t = Table::new(&["order", "term"]);
    for (n, v) in r.orders.iter().enumerate() {
        t.push(vec![json!(n), num(*v)]);
    }
    rec.table("series_terms", t);
    rec.output("series", &r);
    rec.check(
        "series-convergence",
        "moments.series-converged",
        r.converged,
        format!(
            "partial sum {:.8e}, tail {:.3e}, quadrature error {:.3e}",
            r.partial_sum, r.tail_bound, r.quadrature_error
        ),
    );
    if let Some(cc) = &p.cross_check {
        let cfg = SolverConfig {
            model: p.model,
            bandwidth: cc.bandwidth,
            noise_bandwidth: cc.noise_bandwidth,
            mesh_resolution: None,
            alpha: p.alpha,
            rho: p.rho,
            beta: p.beta,
            dt: cc.dt,
            horizon: p.time,
            smoothing: p.smoothing,
            paths: cc.paths,
            seed,
        };
        let sim = Simulator::new(cfg).tag("solver")?;
        let mu_mc = p.initial.build(&sim).tag("solver")?;
        let opts = EnsembleOptions {
            checkpoints: vec![p.time],
            probes: vec![x],
            ..Default::default()
        };
        let ens = simulate_ensemble(&sim, &mu_mc, &opts).tag("solver")?;
        let m = ens.moment(2, 0, 0);
        let diff = (m.mean - r.partial_sum).abs();
        let bound = 3.0 * m.stderr + r.error_bar();
        rec.output("monte_carlo_second_moment", &m);
        rec.output("series_mc_difference", num(diff));
        rec.output("series_mc_bound", num(bound));
        rec.check(
            "series-mc-crosscheck",
            "moments.series-mc-agreement",
            diff <= bound,
            format!(
                "|{:.6e} - {:.6e}| = {diff:.3e} against 3 stderr + tail = {bound:.3e} ({} paths)",
                m.mean, r.partial_sum, m.paths
            ),
        );
        mean_consistency(rec, &sim, &ens, &mu_mc);
    }
    Ok(())
}

pub fn simulate(
    rec: &mut ResultRecord,
    cfg: &ExperimentConfig,
    p: &SimulateParams,
    seed: u64,
) -> Result<()> {
    let sim = Simulator::new(p.solver.solver_config(seed)).tag("solver")?;
    let mu = p.initial.build(&sim).tag("solver")?;
    let probes = p
        .probes
        .iter()
        .map(|c| point(p.solver.model, c))
        .collect::<pam_core::error::Result<Vec<_>>>()
        .tag("manifold")?;
    let opts = EnsembleOptions {
        checkpoints: even_checkpoints(p.solver.horizon, p.solver.dt, p.checkpoints),
        probes,
        dump_paths: p.dump_paths.min(p.solver.paths),
        test_functions: vec![vec![1.0; sim.mesh.len()]],
        ..Default::default()
    };
    let ens = simulate_ensemble(&sim, &mu, &opts).tag("solver")?;
    let mut t = Table::new(&[
        "time",
        "probe",
        "order",
        "mean",
        "stderr",
        "naive_mean",
        "naive_stderr",
        "heat_flow",
    ]);
    for r in ens.moment_table(&[1, 2, 4]) {
        let j = sim.heat_value(&mu, sim.config.smoothing + r.time, &ens.probes[r.probe]);
        t.push(vec![
            num(r.time),
            json!(r.probe),
            json!(r.order),
            num(r.mean),
            num(r.stderr),
            num(r.naive_mean),
            num(r.naive_stderr),
            num(j.powi(r.order as i32)),
        ]);
    }
    rec.table("moments", t);
    let mut second = Table::new(&["time", "probe", "mean", "stderr"]);
    for c in 0..ens.times.len() {
        for probe in 0..ens.probes.len() {
            let r = ens.moment(2, c, probe);
            second.push(vec![num(r.time), json!(probe), num(r.mean), num(r.stderr)]);
        }
    }
    rec.table("second_moment", second);
    rec.plot("second_moment", "time", "mean", Some("probe"), false, true);
    rec.output("blowup_fraction", num(ens.blowup_fraction()));
    rec.output(
        "negative_multiplier_fraction",
        num(ens.negative_multiplier_fraction),
    );
    rec.output("times", &ens.times);
    mean_consistency(rec, &sim, &ens, &mu);

    let mut mass = Table::new(&["time", "mean_mass", "stderr"]);
    for c in 0..ens.times.len() {
        let (m, s) = pam_core::stats::mean_stderr(&ens.integrals(c, 0));
        mass.push(vec![num(ens.times[c]), num(m), num(s)]);
    }
    rec.table("mass", mass);

    let mut env = Table::new(&[
        "probe",
        "order",
        "constant",
        "theta",
        "validation_ratio",
        "passed",
    ]);
    for probe in 0..ens.probes.len() {
        for order in [2, 4] {
            let e = moment_envelope(&sim, &ens, &mu, probe, order, p.slack);
            env.push(vec![
                json!(probe),
                json!(order),
                num(e.envelope.constant),
                num(e.envelope.theta),
                num(e.envelope.validation_ratio),
                json!(e.envelope.passed),
            ]);
            if order == 2 {
                rec.check(
                    "moment-envelope",
                    &format!("moments.envelope-second-moment.probe-{probe}"),
                    e.envelope.passed,
                    format!(
                        "C = {:.4}, theta = {:.4}, held-out ratio {:.4} (slack {})",
                        e.envelope.constant, e.envelope.theta, e.envelope.validation_ratio, p.slack
                    ),
                );
            }
        }
    }
    rec.table("moment_envelopes", env);

    if !p.positivity_levels.is_empty() {
        let last = ens.times.len() - 1;
        let r = positivity_probe(&ens, last, &p.positivity_levels);
        let mut t = Table::new(&[
            "epsilon",
            "hits",
            "paths",
            "probability",
            "ci_low",
            "ci_high",
        ]);
        for row in &r.rows {
            t.push(vec![
                num(row.epsilon),
                json!(row.hits),
                json!(row.paths),
                num(row.probability),
                num(row.ci_low),
                num(row.ci_high),
            ]);
        }
        rec.table("positivity", t);
        rec.verdict(
            "positivity",
            "solver.positive-infimum-probability",
            r.verdict,
            format!(
                "P[min u(t) >= eps] with 95% Wilson intervals at t = {}",
                r.time
            ),
        );
    }
    if opts.dump_paths > 0 {
        let bytes =
            encode_trajectories(cfg.hash(), &ens.times, &ens.dumped_fields()).tag("solver")?;
        rec.output("trajectory_file", "trajectories.bin");
        rec.artifacts.push(("trajectories.bin".into(), bytes));
    }
    Ok(())
}

pub fn intermittency(rec: &mut ResultRecord, p: &IntermittencyParams, seed: u64) -> Result<()> {
    let mut t = Table::new(&[
        "beta",
        "target",
        "slope",
        "ci_low",
        "ci_high",
        "half_width",
        "margin",
        "verdict",
    ]);
    let mut curve = Table::new(&["beta", "time", "log_second_moment"]);
    let mut slopes = vec![];
    for &beta in &p.betas {
        let cfg = SolverConfig {
            beta,
            ..p.solver.solver_config(seed)
        };
        let sim = Simulator::new(cfg).tag("solver")?;
        let mu = p.initial.build(&sim).tag("solver")?;
        let count = (p.solver.horizon / p.checkpoint_spacing).round() as usize;
        let opts = EnsembleOptions {
            checkpoints: even_checkpoints(p.solver.horizon, p.solver.dt, count),
            probes: vec![point(p.solver.model, &p.probe).tag("manifold")?],
            ..Default::default()
        };
        let ens = simulate_ensemble(&sim, &mu, &opts).tag("solver")?;
        for c in 0..ens.times.len() {
            curve.push(vec![
                num(beta),
                num(ens.times[c]),
                num(ens.moment(2, c, 0).mean.ln()),
            ]);
        }
        let l = estimate_lyapunov(&ens, 0, p.window, p.bootstrap, seed).tag("solver")?;
        t.push(vec![
            num(beta),
            num(l.target),
            num(l.slope),
            num(l.ci_low),
            num(l.ci_high),
            num(l.half_width),
            num(l.margin),
            json!(l.verdict.as_str()),
        ]);
        rec.verdict(
            "lyapunov-lower-bound",
            &format!("moments.lyapunov-lower-bound.beta-{beta}"),
            l.verdict,
            format!(
                "slope {:.4} (95% CI [{:.4}, {:.4}]) against beta^2 rho / m0 = {:.4} over [{}, {}]",
                l.slope, l.ci_low, l.ci_high, l.target, p.window.0, p.window.1
            ),
        );
        slopes.push((beta, l.slope));
    }
    if slopes.len() > 1 {
        let mut sorted = slopes.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ordered = sorted
            .windows(2)
            .all(|w| w[0].0 == w[1].0 || w[0].1 < w[1].1);
        rec.check(
            "lyapunov-lower-bound",
            "moments.lyapunov-ordering",
            ordered,
            format!("slopes by beta: {sorted:?}"),
        );
    }
    rec.table("lyapunov", t);
    rec.table("log_second_moment", curve);
    rec.plot(
        "log_second_moment",
        "time",
        "log_second_moment",
        Some("beta"),
        false,
        false,
    );
    Ok(())
}

pub fn compare(rec: &mut ResultRecord, p: &CompareParams, seed: u64) -> Result<()> {
    let mut t = Table::new(&[
        "dt",
        "comparisons",
        "violations",
        "violation_fraction",
        "min_margin",
        "negative_multiplier_fraction",
    ]);
    let mut fractions = vec![];
    for &dt in &p.dts {
        let cfg = SolverConfig {
            dt,
            ..p.solver.solver_config(seed)
        };
        let sim = Simulator::new(cfg).tag("solver")?;
        let lower = p.lower.build(&sim).tag("solver")?;
        let upper = p.upper.build(&sim).tag("solver")?;
        let cps = even_checkpoints(p.solver.horizon, dt, p.checkpoints);
        let r = comparison_experiment(&sim, &lower, &upper, &cps, p.tolerance).tag("solver")?;
        t.push(vec![
            num(dt),
            json!(r.comparisons),
            json!(r.violations),
            num(r.violation_fraction),
            num(r.min_margin),
            num(r.negative_multiplier_fraction),
        ]);
        if r.strict {
            rec.output(&format!("strict_min_margin_dt_{dt}"), num(r.min_margin));
        }
        fractions.push((dt, r.violation_fraction));
    }
    let (dt0, f0) = fractions[0];
    rec.check(
        "comparison-principle",
        "solver.comparison-violation-rate",
        f0 <= p.max_violation,
        format!(
            "violation fraction {f0:e} at dt = {dt0} (limit {:e})",
            p.max_violation
        ),
    );
    for w in fractions.windows(2) {
        rec.check(
            "comparison-principle",
            &format!("solver.comparison-refinement.dt-{}", w[1].0),
            w[1].1 <= 0.5 * w[0].1,
            format!(
                "violation fraction {:e} at dt = {} after {:e} at dt = {}",
                w[1].1, w[1].0, w[0].1, w[0].0
            ),
        );
    }
    rec.table("comparison", t);
    Ok(())
}

pub fn holder(rec: &mut ResultRecord, p: &HolderParams, seed: u64) -> Result<()> {
    let base = p.solver.solver_config(seed);
    let sim = Simulator::new(base.clone()).tag("solver")?;
    let mu = p.initial.build(&sim).tag("solver")?;
    let dt = p.solver.dt;
    let start = (p.time / dt).round() * dt;
    let mut cps = vec![start];
    for &lag in &p.lags {
        let t = start + lag as f64 * dt;
        if t <= p.solver.horizon + 1e-12 && lag > 0 {
            cps.push(t);
        }
    }
    cps.sort_by(|a, b| a.total_cmp(b));
    cps.dedup();
    let opts = EnsembleOptions {
        checkpoints: cps,
        probes: vec![point(p.solver.model, &p.probe).tag("manifold")?],
        snapshots: vec![0],
        ..Default::default()
    };
    let ens = simulate_ensemble(&sim, &mu, &opts).tag("solver")?;
    let mut inc = Table::new(&["order", "direction", "lag", "moment"]);
    let mut fits = Table::new(&[
        "order",
        "nu",
        "spatial_exponent",
        "spatial_target",
        "temporal_exponent",
        "temporal_target",
    ]);
    for &order in &p.orders {
        let r = holder_diagnostic(&sim, &ens, order, 0, p.spatial_window).tag("solver")?;
        for row in &r.spatial {
            inc.push(vec![
                json!(order),
                json!("space"),
                num(row.lag),
                num(row.moment),
            ]);
        }
        for row in &r.temporal {
            inc.push(vec![
                json!(order),
                json!("time"),
                num(row.lag),
                num(row.moment),
            ]);
        }
        fits.push(vec![
            json!(order),
            num(r.nu),
            num(r.spatial_exponent),
            num(r.spatial_target),
            num(r.temporal_exponent),
            num(r.temporal_target),
        ]);
        rec.verdict(
            "holder-regularity",
            &format!("solver.holder-space.p-{order}"),
            r.spatial_verdict,
            format!(
                "exponent {:.4} against p min(nu/2, 1) = {:.4}",
                r.spatial_exponent, r.spatial_target
            ),
        );
        rec.verdict(
            "holder-regularity",
            &format!("solver.holder-time.p-{order}"),
            r.temporal_verdict,
            format!(
                "exponent {:.4} against p min(nu/4, 1/2) = {:.4}",
                r.temporal_exponent, r.temporal_target
            ),
        );
    }
    rec.table("increments", inc);
    rec.table("holder_fits", fits);
    rec.plot("increments", "lag", "moment", Some("direction"), true, true);

    if !p.weak_times.is_empty() {
        let basis = &sim.basis;
        let first = |x: &Point<f64>| basis.eval(1, x);
        let unit = |_: &Point<f64>| 1.0;
        let functions: Vec<TestFunction<'_>> = vec![&unit, &first];
        let r = weak_time_zero_check(&base, &mu, &functions, &p.weak_times, p.weak_tolerance)
            .tag("solver")?;
        let mut t = Table::new(&["time", "function", "defect", "stderr"]);
        for row in &r.rows {
            t.push(vec![
                num(row.time),
                json!(row.function),
                num(row.defect),
                num(row.stderr),
            ]);
        }
        rec.table("weak_time_zero", t);
        rec.output("weak_time_zero_min_ratio", num(r.min_ratio));
        let halving = r
            .rows
            .iter()
            .filter(|row| row.function == 1)
            .collect::<Vec<_>>();
        let ratio_ok = halving
            .windows(2)
            .all(|w| w[0].defect >= 2.0 * w[1].defect - 3.0 * (w[0].stderr + 2.0 * w[1].stderr));
        rec.verdict(
            "weak-time-zero",
            "solver.weak-continuity-at-zero",
            r.verdict,
            format!(
                "decreasing: {}, extrapolated limit {:.3e} (tolerance {:e})",
                r.decreasing, r.extrapolated_limit, r.tolerance
            ),
        );
        rec.verdict(
            "weak-time-zero",
            "solver.weak-defect-halving",
            if ratio_ok {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            },
            format!("smallest ratio of consecutive defects {:.3}", r.min_ratio),
        );
    }
    Ok(())
}
