use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{
    checkpoint_steps, simulate_ensemble, EnsembleOptions, PathEnsemble, PathNoise,
};
use super::{Simulator, SolverConfig};
use crate::error::{Error, Result};
use crate::manifold::Point;
use crate::measure::InitialMeasure;
use crate::quadrature::pairwise_sum;
use crate::stats::{
    bootstrap_indices, fit_exponential_envelope, least_squares, mean, mean_stderr, quantile,
    wilson_interval, ExponentialEnvelope, Verdict,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub window: (f64, f64),
    pub points: usize,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub half_width: f64,
    /// `β² ρ / m₀`.
    pub target: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

/// Least-squares slope of `ln Ê[u(t, x)²]` over the window, with a path bootstrap.
pub fn estimate_lyapunov(
    ens: &PathEnsemble,
    probe: usize,
    window: (f64, f64),
    resamples: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    let idx: Vec<usize> = (0..ens.times.len())
        .filter(|&c| ens.times[c] >= window.0 - 1e-12 && ens.times[c] <= window.1 + 1e-12)
        .collect();
    let target = ens.constant_rate;
    if idx.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "window [{}, {}] holds {} checkpoints, need at least 3",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&c| ens.times[c]).collect();
    let sq: Vec<Vec<f64>> = idx
        .iter()
        .map(|&c| ens.v_at(c, probe).iter().map(|v| v * v).collect())
        .collect();
    let slope_of = |means: &[f64]| -> f64 {
        let y: Vec<f64> = means
            .iter()
            .zip(&t)
            .map(|(m, ti)| m.ln() + target * ti)
            .collect();
        least_squares(&t, &y).slope
    };
    let slope = slope_of(&sq.iter().map(|s| mean(s)).collect::<Vec<_>>());
    let n = sq[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let pick = bootstrap_indices(&mut rng, n);
        let means: Vec<f64> = sq
            .iter()
            .map(|s| pairwise_sum(&pick.iter().map(|&i| s[i]).collect::<Vec<_>>()) / n as f64)
            .collect();
        boot.push(slope_of(&means));
    }
    let (ci_low, ci_high) = (quantile(&boot, 0.025), quantile(&boot, 0.975));
    let half_width = 0.5 * (ci_high - ci_low);
    let verdict =
        if !slope.is_finite() || window.1 - window.0 < 1.0 || half_width > 0.5 * target.max(0.1) {
            Verdict::Inconclusive
        } else {
            Verdict::from_bool(slope >= target - half_width)
        };
    Ok(LyapunovReport {
        window,
        points: idx.len(),
        slope,
        ci_low,
        ci_high,
        half_width,
        target,
        margin: slope - target,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub dt: f64,
    pub paths: usize,
    /// `tol_disc` relative to `max |u₂|` on the same path and checkpoint.
    pub relative_tolerance: f64,
    pub comparisons: u64,
    pub violations: u64,
    pub violation_fraction: f64,
    /// Minimum of `u₂ - u₁` over checkpoints, mesh and paths.
    pub min_margin: f64,
    pub max_abs_difference: f64,
    pub strict: bool,
    pub negative_multiplier_fraction: f64,
}

/// Coupled runs from `μ₁ ≤ μ₂` on the same noise path.
pub fn comparison_experiment(
    sim: &Simulator,
    mu1: &InitialMeasure,
    mu2: &InitialMeasure,
    checkpoints: &[f64],
    relative_tolerance: f64,
) -> Result<ComparisonReport> {
    if !mu1.is_dominated_by(mu2)? {
        return Err(Error::InvalidInput(
            "comparison needs mu1 <= mu2 as measures".into(),
        ));
    }
    let strict = !mu2.is_dominated_by(mu1)?;
    let steps = checkpoint_steps(sim, checkpoints)?;
    let a = sim.init_state(mu1)?;
    let b = sim.init_state(mu2)?;
    let last = *steps
        .last()
        .ok_or_else(|| Error::InvalidInput("no checkpoints".into()))?;
    let per_path: Vec<(u64, u64, f64, f64, u64)> = (0..sim.config.paths)
        .into_par_iter()
        .map(|path| {
            let mut noise = PathNoise::new(sim, path);
            let (mut v1, mut v2) = (a.clone(), b.clone());
            let mut log_z = 0.0;
            let (mut cmp, mut bad, mut neg) = (0u64, 0u64, 0u64);
            let (mut margin, mut diff) = (f64::INFINITY, 0.0f64);
            let mut next = 0;
            for step in 1..=last {
                let dw0 = noise.draw(sim);
                log_z += sim.log_factor_increment(dw0);
                neg += sim.step_fluctuation(&mut v1, &noise.fluctuation, &mut noise.scratch);
                sim.step_fluctuation(&mut v2, &noise.fluctuation, &mut noise.scratch);
                if step == steps[next] {
                    let z = f64::exp(log_z);
                    let tol = relative_tolerance * v2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    for (x, y) in v1.iter().zip(&v2) {
                        cmp += 1;
                        if x > &(y + tol) {
                            bad += 1;
                        }
                        margin = margin.min((y - x) * z);
                        diff = diff.max(((y - x) * z).abs());
                    }
                    next += 1;
                }
            }
            (cmp, bad, margin, diff, neg)
        })
        .collect();
    let comparisons: u64 = per_path.iter().map(|r| r.0).sum();
    let violations: u64 = per_path.iter().map(|r| r.1).sum();
    let negative: u64 = per_path.iter().map(|r| r.4).sum();
    Ok(ComparisonReport {
        dt: sim.config.dt,
        paths: sim.config.paths,
        relative_tolerance,
        comparisons,
        violations,
        violation_fraction: violations as f64 / comparisons as f64,
        min_margin: per_path.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        max_abs_difference: per_path.iter().map(|r| r.3).fold(0.0, f64::max),
        strict,
        negative_multiplier_fraction: negative as f64
            / (sim.config.paths * last * sim.mesh.len()) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityRow {
    pub epsilon: f64,
    pub hits: usize,
    pub paths: usize,
    pub probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub time: f64,
    pub rows: Vec<PositivityRow>,
    pub verdict: Verdict,
}

/// Empirical `P[min_mesh u(t) ≥ ε]` with Wilson intervals; passes when every `ε > 0` level excludes 0.
pub fn positivity_probe(
    ens: &PathEnsemble,
    checkpoint: usize,
    epsilons: &[f64],
) -> PositivityReport {
    let minima = ens.mesh_minima(checkpoint);
    let rows: Vec<PositivityRow> = epsilons
        .iter()
        .map(|&e| {
            let hits = minima.iter().filter(|&&m| m >= e).count();
            let (lo, hi) = wilson_interval(hits, minima.len());
            PositivityRow {
                epsilon: e,
                hits,
                paths: minima.len(),
                probability: hits as f64 / minima.len() as f64,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();
    let ok = rows
        .iter()
        .filter(|r| r.epsilon > 0.0)
        .all(|r| r.ci_low > 0.0);
    PositivityReport {
        time: ens.times[checkpoint],
        rows,
        verdict: Verdict::from_bool(ok),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementRow {
    pub lag: f64,
    pub moment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    pub order: u32,
    pub nu: f64,
    pub spatial_target: f64,
    pub temporal_target: f64,
    pub spatial_exponent: f64,
    pub temporal_exponent: f64,
    pub spatial: Vec<IncrementRow>,
    pub temporal: Vec<IncrementRow>,
    /// Spatial exponent within `[0.9, 1.1]` times its target.
    pub spatial_sharp: bool,
    pub spatial_verdict: Verdict,
    pub temporal_verdict: Verdict,
}

/// Regresses log increment moments on log lags. The snapshot at `checkpoint` gives spatial pairs and
/// probe 0 at later checkpoints gives temporal lags.
pub fn holder_diagnostic(
    sim: &Simulator,
    ens: &PathEnsemble,
    order: u32,
    checkpoint: usize,
    spatial_window: (f64, f64),
) -> Result<HolderReport> {
    if order != 2 && order != 4 {
        return Err(Error::InvalidInput(format!(
            "increment order must be 2 or 4, got {order}"
        )));
    }
    let fields = ens.snapshot(checkpoint).ok_or_else(|| {
        Error::InvalidInput(format!("no snapshot kept at checkpoint {checkpoint}"))
    })?;
    let d = sim.model.dim as f64;
    let nu = 2.0 * sim.config.alpha + 2.0 - d;
    let p = order as f64;
    let spatial_target = p * (nu / 2.0).min(1.0);
    let temporal_target = p * (nu / 4.0).min(0.5);

    let m = sim.mesh.len();
    let bases: Vec<usize> = (0..8).map(|i| i * m / 8).collect();
    let levels = 12;
    let (r0, r1) = spatial_window;
    let mut spatial = Vec::new();
    for k in 0..levels {
        let r = r0 * (r1 / r0).powf(k as f64 / (levels - 1) as f64);
        let mut vals = Vec::new();
        let mut dist = Vec::new();
        for &i in &bases {
            let x = &sim.mesh.points[i];
            let (j, dj) = (0..m)
                .map(|j| (j, sim.model.distance_unchecked(x, &sim.mesh.points[j])))
                .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()))
                .unwrap_or((i, 0.0));
            if dj <= 0.0 {
                continue;
            }
            dist.push(dj);
            vals.extend(fields.iter().map(|f| (f[i] - f[j]).abs().powf(p)));
        }
        if dist.is_empty() {
            continue;
        }
        let lag = mean(&dist);
        if spatial
            .last()
            .is_some_and(|r: &IncrementRow| (r.lag - lag).abs() < 1e-12)
        {
            continue;
        }
        spatial.push(IncrementRow {
            lag,
            moment: mean(&vals),
        });
    }

    let base = ens.u_at(checkpoint, 0);
    let temporal: Vec<IncrementRow> = (checkpoint + 1..ens.times.len())
        .map(|c| {
            let later = ens.u_at(c, 0);
            let vals: Vec<f64> = later
                .iter()
                .zip(&base)
                .map(|(a, b)| (a - b).abs().powf(p))
                .collect();
            IncrementRow {
                lag: ens.times[c] - ens.times[checkpoint],
                moment: mean(&vals),
            }
        })
        .collect();

    let fit = |rows: &[IncrementRow]| -> (f64, bool) {
        let pts: Vec<&IncrementRow> = rows.iter().filter(|r| r.moment > 0.0).collect();
        if pts.len() < 4 {
            return (f64::NAN, false);
        }
        let x: Vec<f64> = pts.iter().map(|r| r.lag.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|r| r.moment.ln()).collect();
        let range = pts.last().map_or(1.0, |r| r.lag) / pts[0].lag;
        (least_squares(&x, &y).slope, range >= 4.0)
    };
    let (spatial_exponent, s_ok) = fit(&spatial);
    let (temporal_exponent, t_ok) = fit(&temporal);
    let judge = |e: f64, target: f64, ok: bool| {
        if !ok || !e.is_finite() {
            Verdict::Inconclusive
        } else {
            Verdict::from_bool(e >= 0.9 * target)
        }
    };
    Ok(HolderReport {
        order,
        nu,
        spatial_target,
        temporal_target,
        spatial_exponent,
        temporal_exponent,
        spatial_sharp: spatial_exponent >= 0.9 * spatial_target
            && spatial_exponent <= 1.1 * spatial_target,
        spatial_verdict: judge(spatial_exponent, spatial_target, s_ok),
        temporal_verdict: judge(temporal_exponent, temporal_target, t_ok),
        spatial,
        temporal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectRow {
    /// Total time since the measure, `t₀ + t`.
    pub time: f64,
    pub function: usize,
    pub defect: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakTimeZeroReport {
    pub rows: Vec<DefectRow>,
    /// Smallest ratio of consecutive defects along the decreasing time sequence.
    pub min_ratio: f64,
    pub extrapolated_limit: f64,
    pub tolerance: f64,
    pub decreasing: bool,
    pub verdict: Verdict,
}

/// A test function on the manifold.
pub type TestFunction<'a> = &'a (dyn Fn(&Point<f64>) -> f64 + Sync);

/// `E[(∫ u(τ) φ dm - ∫ φ dμ)²]` along a decreasing sequence of total times `τ`. Each `τ` is split
/// evenly between smoothing and simulated time.
pub fn weak_time_zero_check(
    base: &SolverConfig,
    mu: &InitialMeasure,
    functions: &[TestFunction<'_>],
    times: &[f64],
    tolerance: f64,
) -> Result<WeakTimeZeroReport> {
    if times.windows(2).any(|w| w[1] >= w[0]) || times.len() < 2 {
        return Err(Error::InvalidInput(
            "time sequence must decrease and have at least two entries".into(),
        ));
    }
    let mut rows = Vec::new();
    for &tau in times {
        let half = (tau / 2.0 / base.dt).round().max(1.0) * base.dt;
        let cfg = SolverConfig {
            smoothing: half,
            horizon: half,
            ..base.clone()
        };
        let sim = Simulator::new(cfg)?;
        let tf: Vec<Vec<f64>> = functions
            .iter()
            .map(|f| sim.mesh.points.iter().map(f).collect())
            .collect();
        let opts = EnsembleOptions {
            checkpoints: vec![half],
            test_functions: tf,
            ..Default::default()
        };
        let ens = simulate_ensemble(&sim, mu, &opts)?;
        for (k, f) in functions.iter().enumerate() {
            let target = mu.integrate(|p| f(p));
            let sq: Vec<f64> = ens
                .integrals(0, k)
                .iter()
                .map(|v| (v - target).powi(2))
                .collect();
            let (m, s) = mean_stderr(&sq);
            rows.push(DefectRow {
                time: 2.0 * half,
                function: k,
                defect: m,
                stderr: s,
            });
        }
    }
    let nf = functions.len();
    let mut min_ratio = f64::INFINITY;
    let mut decreasing = true;
    let mut extrapolated: f64 = 0.0;
    for k in 0..nf {
        let d: Vec<&DefectRow> = rows.iter().filter(|r| r.function == k).collect();
        for w in d.windows(2) {
            min_ratio = min_ratio.min(w[0].defect / w[1].defect);
            decreasing &= w[1].defect < w[0].defect;
        }
        let (a, b) = (d[d.len() - 2], d[d.len() - 1]);
        let slope = (a.defect - b.defect) / (a.time - b.time);
        extrapolated = extrapolated.max(b.defect - slope * b.time);
    }
    let verdict = Verdict::from_bool(decreasing && extrapolated.abs() <= tolerance);
    Ok(WeakTimeZeroReport {
        rows,
        min_ratio,
        extrapolated_limit: extrapolated,
        tolerance,
        decreasing,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEnvelopeReport {
    pub order: u32,
    pub probe: usize,
    pub times: Vec<f64>,
    /// `Ê[u^p]^{1/p} / J_μ(t₀ + t, x)`.
    pub ratios: Vec<f64>,
    pub envelope: ExponentialEnvelope,
}

/// Fits `Ê[u^p]^{1/p} ≤ C J_μ(t₀ + t, x) e^{θ t}` on even checkpoints, validates on odd ones.
pub fn moment_envelope(
    sim: &Simulator,
    ens: &PathEnsemble,
    mu: &InitialMeasure,
    probe: usize,
    order: u32,
    slack: f64,
) -> MomentEnvelopeReport {
    let x = ens.probes[probe];
    let ratios: Vec<f64> = (0..ens.times.len())
        .map(|c| {
            let m = ens.moment(order, c, probe).mean;
            m.powf(1.0 / order as f64) / sim.heat_value(mu, sim.config.smoothing + ens.times[c], &x)
        })
        .collect();
    let envelope = fit_exponential_envelope(&ens.times, &ratios, slack);
    MomentEnvelopeReport {
        order,
        probe,
        times: ens.times.clone(),
        ratios,
        envelope,
    }
}
