use anyhow::Result;
use pam_core::fgeom::{check_global_bound, estimate_zeta, ZetaSampling};
use pam_core::manifold::{ManifoldModel, ModelKind, Point};
use pam_core::moments::{
    h_lambda_envelope, h_recursion, k1_functions, verify_all_integral_estimates,
    verify_l1_structure, ChaosEngine, EngineSettings, EstimateSettings, K1Settings,
};
use pam_core::noise::{
    covariance, rho_nonneg_threshold, verify_riesz_bound, CovarianceKernel, NoiseSpec,
};
use pam_core::quadrature::{grading_exponent, log_space};
use pam_core::spectral::{
    circle_image_sum, verify_gaussian_domination, verify_kernel_bound, verify_li_yau,
    KernelBoundForm, SpectralBasis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::f64::consts::PI;

use crate::config::{GeometryParams, IntegralParams, KernelParams, NoiseParams};
use crate::error::Tag;
use crate::record::{num, ResultRecord, Table};

fn model(kind: ModelKind) -> ManifoldModel<f64> {
    ManifoldModel::new(kind)
}

pub fn geometry(rec: &mut ResultRecord, p: &GeometryParams, seed: u64) -> Result<()> {
    let mut sweep = Table::new(&[
        "model",
        "samples",
        "max_violation",
        "max_decomposition_residual",
        "min_f",
        "antipodal_max_deviation",
    ]);
    let mut zeta = Table::new(&[
        "model",
        "scale",
        "sampling",
        "samples",
        "zeta_hat",
        "zeta_hat_doubled",
        "relative_change",
    ]);
    for &kind in &p.models {
        let m = model(kind);
        let r = check_global_bound(&m, p.samples, seed);
        sweep.push(vec![
            json!(kind.name()),
            json!(r.samples),
            num(r.max_violation),
            num(r.max_decomposition_residual),
            num(r.min_f),
            r.antipodal_max_deviation
                .map_or(serde_json::Value::Null, num),
        ]);
        rec.check(
            "three-distance-sweep",
            &format!("fgeom.three-distance-bound.{kind}"),
            r.max_violation <= 1e-12,
            format!(
                "max violation {:e} over {} samples",
                r.max_violation, r.samples
            ),
        );
        if let Some(a) = r.antipodal_max_deviation {
            rec.check(
                "three-distance-sweep",
                &format!("fgeom.antipodal-equality.{kind}"),
                a <= 1e-12,
                format!("max deviation {a:e}"),
            );
        }
        rec.check(
            "decomposition-identity",
            &format!("fgeom.decomposition-identity.{kind}"),
            r.max_decomposition_residual <= 1e-10,
            format!("max residual {:e}", r.max_decomposition_residual),
        );

        let scale = m.unique_geodesic_scale();
        let sampling = match kind {
            ModelKind::FlatTorus2 => ZetaSampling::Local {
                radius: m.injectivity_radius / 2.0,
            },
            _ => ZetaSampling::Global,
        };
        let a = estimate_zeta(&m, scale, p.zeta_samples, seed, sampling).tag("fgeom")?;
        let b = estimate_zeta(
            &m,
            scale,
            2 * p.zeta_samples,
            seed.wrapping_add(1),
            sampling,
        )
        .tag("fgeom")?;
        let change = (b.zeta_hat / a.zeta_hat - 1.0).abs();
        zeta.push(vec![
            json!(kind.name()),
            num(scale),
            json!(match sampling {
                ZetaSampling::Global => "global",
                ZetaSampling::Local { .. } => "local",
            }),
            json!(a.samples_used),
            num(a.zeta_hat),
            num(b.zeta_hat),
            num(change),
        ]);
        match kind {
            ModelKind::FlatTorus2 => rec.check(
                "zeta-scale",
                "fgeom.zeta-flat-torus-unit",
                (a.zeta_hat - 1.0).abs() <= 1e-8 && (b.zeta_hat - 1.0).abs() <= 1e-8,
                format!("zeta_hat {} and {} at D = {scale}", a.zeta_hat, b.zeta_hat),
            ),
            ModelKind::Sphere2 => rec.check(
                "zeta-scale",
                "fgeom.zeta-sphere-positive-stable",
                a.zeta_hat > 0.0 && b.zeta_hat > 0.0 && change < 0.05,
                format!(
                    "zeta_hat {} then {} under doubling ({:.2}% change)",
                    a.zeta_hat,
                    b.zeta_hat,
                    100.0 * change
                ),
            ),
            ModelKind::Circle => {}
        }
    }
    rec.table("three_distance", sweep);
    rec.table("zeta", zeta);
    Ok(())
}

pub fn kernels(rec: &mut ResultRecord, p: &KernelParams, seed: u64) -> Result<()> {
    if p.models.contains(&ModelKind::Circle) {
        let basis =
            SpectralBasis::for_min_time(ManifoldModel::circle(), 0.05, 1e-13).tag("spectral")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(f64, f64)> = (0..p.pairs)
            .map(|_| {
                (
                    rng.random::<f64>() * 2.0 * PI,
                    rng.random::<f64>() * 2.0 * PI,
                )
            })
            .collect();
        let mut t = Table::new(&["t", "max_abs_error"]);
        let mut worst = 0.0f64;
        for time in log_space(0.05, 5.0, p.times) {
            let mut e = 0.0f64;
            for &(a, b) in &pairs {
                let s = basis.heat_kernel_truncated(time, &Point::circle(a), &Point::circle(b));
                e = e.max((s - circle_image_sum(time, a - b)).abs());
            }
            worst = worst.max(e);
            t.push(vec![num(time), num(e)]);
        }
        rec.check(
            "heat-kernel-oracle",
            "spectral.circle-image-sum",
            worst <= 1e-10,
            format!(
                "max |spectral - image sum| = {worst:e} over {} pairs, bandwidth {}",
                p.pairs, basis.bandwidth
            ),
        );
        rec.output("circle_oracle_max_error", num(worst));
        rec.table("circle_oracle", t);
        rec.plot("circle_oracle", "t", "max_abs_error", None, true, true);
    }
    let mut env = Table::new(&[
        "model",
        "bound",
        "fitted_constant",
        "validation_constant",
        "passed",
        "refinement_change",
    ]);
    for &kind in &p.models {
        let m = model(kind);
        let res = match kind {
            ModelKind::Circle => 256,
            ModelKind::FlatTorus2 => 32,
            ModelKind::Sphere2 => 24,
        };
        let basis = SpectralBasis::for_min_time(m, 0.01, 1e-10).tag("spectral")?;
        let times = log_space(0.01, 5.0, p.times);
        let ly = verify_li_yau(&basis, p.epsilon, &times, res).tag("spectral")?;
        let small = verify_kernel_bound(
            &basis,
            KernelBoundForm::SmallTime,
            &log_space(0.01, 1.0, p.times),
            res,
            p.slack,
        )
        .tag("spectral")?;
        let dom = verify_gaussian_domination(
            0.5,
            p.epsilon,
            m.dim,
            0.05,
            m.diameter,
            &log_space(1e-3, 0.99, p.times),
            32,
        );
        for (name, e, change) in [
            ("li-yau", &ly.envelope, Some(ly.refinement_change)),
            ("small-time", &small.envelope, Some(small.refinement_change)),
            ("gaussian-domination", &dom, None),
        ] {
            env.push(vec![
                json!(kind.name()),
                json!(name),
                num(e.fitted_constant),
                num(e.validation_constant),
                json!(e.passed),
                change.map_or(serde_json::Value::Null, num),
            ]);
            rec.check(
                "envelope-suite",
                &format!("spectral.{name}.{kind}"),
                e.passed,
                format!(
                    "fit {:.4}, held-out {:.4}, slack {}",
                    e.fitted_constant, e.validation_constant, e.slack
                ),
            );
        }
    }
    rec.table("kernel_envelopes", env);
    Ok(())
}

pub fn noise(rec: &mut ResultRecord, p: &NoiseParams) -> Result<()> {
    let circle = ManifoldModel::circle();
    let basis = SpectralBasis::new(circle, p.bandwidth).tag("spectral")?;
    let spec = NoiseSpec::new(1.0, 0.0, 1).tag("noise")?;
    let x = Point::circle(0.7);
    let diag = covariance(&basis, &spec, &x, &x).tag("noise")?;
    rec.output("circle_g1_diagonal", num(diag));
    rec.check(
        "noise-kernel",
        "noise.circle-diagonal",
        (diag - PI / 6.0).abs() <= 1e-6,
        format!("G_1(x,x) = {diag} against pi/6 = {}", PI / 6.0),
    );
    let wide = SpectralBasis::new(circle, 20_000).tag("spectral")?;
    let mesh = circle.make_mesh(16).tag("manifold")?;
    let rho_star = rho_nonneg_threshold(&wide, &spec, &mesh);
    rec.output("circle_rho_star", num(rho_star));
    rec.check(
        "noise-kernel",
        "noise.rho-star-circle",
        (rho_star - PI * PI / 6.0).abs() <= 1e-6,
        format!("rho* = {rho_star} against pi^2/6 = {}", PI * PI / 6.0),
    );
    let mut rows = Table::new(&["model", "alpha", "bandwidth", "max_row_sum"]);
    let mut riesz = Table::new(&[
        "model",
        "alpha",
        "fitted_constant",
        "validation_constant",
        "passed",
        "refinement_change",
    ]);
    for &kind in &p.models {
        let m = model(kind);
        let (k, res) = match kind {
            ModelKind::Circle => (p.bandwidth, 2 * p.bandwidth + 2),
            ModelKind::FlatTorus2 => (12, 26),
            ModelKind::Sphere2 => (12, 14),
        };
        let b = SpectralBasis::new(m, k).tag("spectral")?;
        let mesh = m.make_mesh(res).tag("manifold")?;
        for &alpha in &p.riesz_alpha {
            if alpha <= (m.dim as f64 - 2.0) / 2.0 {
                continue;
            }
            let s = NoiseSpec::new(alpha, 0.0, m.dim).tag("noise")?;
            let row_sum = CovarianceKernel::new(&b, s, &mesh).max_row_sum();
            rows.push(vec![json!(kind.name()), num(alpha), json!(k), num(row_sum)]);
            rec.check(
                "noise-kernel",
                &format!("noise.mean-zero-rows.{kind}.alpha-{alpha}"),
                row_sum <= 1e-8,
                format!("max |row sum| {row_sum:e}"),
            );
            let r = verify_riesz_bound(&m, alpha, 0.02, 25).tag("noise")?;
            riesz.push(vec![
                json!(kind.name()),
                num(alpha),
                num(r.envelope.fitted_constant),
                num(r.envelope.validation_constant),
                json!(r.envelope.passed),
                num(r.refinement_change),
            ]);
            rec.check(
                "envelope-suite",
                &format!("noise.riesz-bound.{kind}.alpha-{alpha}"),
                r.envelope.passed,
                format!(
                    "fit {:.4}, held-out {:.4}",
                    r.envelope.fitted_constant, r.envelope.validation_constant
                ),
            );
        }
    }
    rec.table("row_sums", rows);
    rec.table("riesz_envelopes", riesz);
    Ok(())
}

pub fn integrals(rec: &mut ResultRecord, p: &IntegralParams, seed: u64) -> Result<()> {
    let mut est = Table::new(&[
        "model",
        "estimate",
        "fitted_constant",
        "validation_constant",
        "passed",
        "refinement_change",
    ]);
    let mut k1 = Table::new(&["model", "s", "k1_l", "k1_s"]);
    let mut hl = Table::new(&[
        "model",
        "lambda",
        "constant",
        "theta",
        "validation_ratio",
        "passed",
    ]);
    let times = log_space(p.time_range.0, p.time_range.1, p.time_points);
    for im in &p.models {
        let m = model(im.model);
        let kind = im.model;
        let mut s =
            EstimateSettings::new(im.alpha, im.mesh_resolution, im.refined_resolution, seed);
        s.times = times.clone();
        s.tuples = p.tuples;
        s.slack = p.slack;
        for r in verify_all_integral_estimates(m, &s).tag("moments")? {
            est.push(vec![
                json!(kind.name()),
                json!(r.estimate),
                num(r.envelope.fitted_constant),
                num(r.envelope.validation_constant),
                json!(r.envelope.passed),
                num(r.refinement_change),
            ]);
            rec.check(
                "envelope-suite",
                &format!("{}.{kind}", r.estimate),
                r.envelope.passed,
                format!(
                    "fit {:.4}, held-out {:.4}",
                    r.envelope.fitted_constant, r.envelope.validation_constant
                ),
            );
        }
        let mut ks = K1Settings::new(
            im.alpha,
            im.mesh_resolution,
            log_space(p.time_range.0, 2.0, 10),
            seed,
        );
        ks.tuples = p.tuples;
        ks.slack = p.slack;
        let kr = k1_functions(m, &ks).tag("moments")?;
        for row in &kr.rows {
            k1.push(vec![
                json!(kind.name()),
                num(row.s),
                num(row.k1_l),
                num(row.k1_s),
            ]);
        }
        rec.check(
            "envelope-suite",
            &format!("integral.k1-power-law.{kind}"),
            kr.envelope.passed,
            format!(
                "C_H = {:.4}; fit {:.4}, held-out {:.4}",
                kr.c_h, kr.envelope.fitted_constant, kr.envelope.validation_constant
            ),
        );

        let exponent = (2.0 * im.alpha - m.dim as f64) / 2.0;
        let gamma = grading_exponent(im.alpha, m.dim);
        let h = h_recursion(120, 2.0, 64, gamma, exponent, |_, s| 1.0 + s.powf(exponent))
            .tag("moments")?;
        for lambda in [0.25, 0.5, 1.0] {
            let r = h_lambda_envelope(lambda, &h, p.slack).tag("moments")?;
            hl.push(vec![
                json!(kind.name()),
                num(lambda),
                num(r.envelope.constant),
                num(r.envelope.theta),
                num(r.envelope.validation_ratio),
                json!(r.envelope.passed),
            ]);
            rec.check(
                "envelope-suite",
                &format!("moments.h-lambda-exponential.{kind}.lambda-{lambda}"),
                r.envelope.passed,
                format!(
                    "theta {:.4}, held-out ratio {:.4}",
                    r.envelope.theta, r.envelope.validation_ratio
                ),
            );
        }
    }
    if p.models.iter().any(|m| m.model == ModelKind::Circle) {
        let alpha = p
            .models
            .iter()
            .find(|m| m.model == ModelKind::Circle)
            .map_or(1.0, |m| m.alpha.max(0.75));
        let spec = NoiseSpec::new(alpha, 2.0 * PI, 1).tag("noise")?;
        let engine = ChaosEngine::new(
            ManifoldModel::circle(),
            spec,
            EngineSettings::new(48, 16, 128),
        )
        .tag("moments")?;
        let targets: Vec<(Point<f64>, Point<f64>)> = [0.0, 0.5, 1.0, 2.0, PI]
            .iter()
            .map(|&a| (Point::circle(a), Point::circle(a + 0.3)))
            .collect();
        let r = verify_l1_structure(
            &engine,
            (&Point::circle(0.0), &Point::circle(0.2)),
            &targets,
            2.0,
            1.0,
            p.slack,
        )
        .tag("moments")?;
        rec.check(
            "envelope-suite",
            "moments.l1-structure.circle",
            r.envelope.passed,
            format!(
                "fit {:.4}, held-out {:.4}",
                r.envelope.fitted_constant, r.envelope.validation_constant
            ),
        );
    }
    rec.table("integral_estimates", est);
    rec.table("k1", k1);
    rec.plot("k1", "s", "k1_s", Some("model"), true, true);
    rec.table("h_lambda", hl);
    Ok(())
}
