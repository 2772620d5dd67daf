use super::*;
use crate::measure::j_mu;
use crate::stats::Verdict;
use std::f64::consts::PI;

fn circle(beta: f64, paths: usize) -> SolverConfig {
    SolverConfig {
        model: ModelKind::Circle,
        bandwidth: 32,
        noise_bandwidth: 16,
        mesh_resolution: None,
        alpha: 1.0,
        rho: PI * PI / 6.0,
        beta,
        dt: 0.002,
        horizon: 0.2,
        smoothing: 0.05,
        paths,
        seed: 7,
    }
}

#[test]
fn init_state_examples() {
    let sim = Simulator::new(circle(0.0, 1)).unwrap();
    let x0 = Point::circle(0.4);
    let u = sim.init_state(&InitialMeasure::dirac(x0)).unwrap();
    for (p, v) in sim.mesh.points.iter().zip(&u) {
        assert!((v - sim.basis.heat_kernel(0.05, &x0, p).unwrap()).abs() < 1e-10);
    }
    assert!((sim.mesh.integrate(&u) - 1.0).abs() < 1e-8);
    let one = sim.init_state(&InitialMeasure::volume(&sim.mesh)).unwrap();
    assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn config_invariants() {
    let mut c = circle(0.5, 1);
    c.smoothing = c.dt / 2.0;
    assert!(Simulator::new(c).is_err());
    let mut c = circle(0.5, 1);
    c.alpha = -0.5;
    assert!(Simulator::new(c).is_err());
    let mut c = circle(0.5, 1);
    c.dt = 0.0;
    assert!(Simulator::new(c).is_err());
}

#[test]
fn beta_zero_is_the_semigroup() {
    for kind in [ModelKind::Circle, ModelKind::FlatTorus2, ModelKind::Sphere2] {
        let cfg = SolverConfig {
            model: kind,
            bandwidth: if kind == ModelKind::Circle { 32 } else { 8 },
            ..circle(0.0, 1)
        };
        let sim = Simulator::new(cfg).unwrap();
        let x0 = sim.mesh.points[3];
        let mu = InitialMeasure::dirac(x0);
        let mut u = sim.init_state(&mu).unwrap();
        let mut s = sim.scratch();
        let inc = NoiseIncrement {
            constant: 0.0,
            fluctuation: vec![0.0; sim.mesh.len()],
        };
        for _ in 0..10 {
            sim.step(&mut u, &inc, &mut s);
        }
        let exact = sim.heat_field(&mu, 0.05 + 10.0 * sim.config.dt);
        let err = u
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{kind:?}: {err}");
    }
}

#[test]
fn single_step_coefficients() {
    let sim = Simulator::new(circle(0.7, 1)).unwrap();
    let xi: Vec<f64> = (0..=sim.sampler.mode_count)
        .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
        .collect();
    let mut fl = vec![0.0; sim.mesh.len()];
    let c0 = sim
        .sampler
        .increment_from_normals(&xi, sim.config.dt, &mut fl);
    let mut u = vec![1.0; sim.mesh.len()];
    sim.step(
        &mut u,
        &NoiseIncrement {
            constant: c0,
            fluctuation: fl,
        },
        &mut sim.scratch(),
    );
    let dt = sim.config.dt;
    let m0 = 2.0 * PI;
    let noise_modes = sim.sampler.mode_count + 1;
    for n in 0..sim.basis.len() {
        let lam = sim.basis.eigenvalues[n];
        let expected = if n == 0 {
            m0.sqrt() * (1.0 + 0.7 * c0)
        } else if n < noise_modes {
            (-lam * dt / 2.0).exp() * 0.7 * dt.sqrt() * xi[n] * lam.powf(-0.5)
        } else {
            0.0
        };
        let got: f64 = sim
            .mesh
            .points
            .iter()
            .zip(&u)
            .zip(&sim.mesh.weights)
            .map(|((p, v), w)| v * w * sim.basis.eval(n, p))
            .sum();
        assert!(
            (got - expected).abs() < 1e-12,
            "mode {n}: {got} vs {expected}"
        );
    }
}

fn opts(sim: &Simulator) -> EnsembleOptions {
    EnsembleOptions {
        checkpoints: vec![0.05, 0.1, 0.2],
        probes: vec![Point::circle(0.0), Point::circle(1.0)],
        snapshots: vec![2],
        dump_paths: 2,
        ..Default::default()
    }
    .with_mesh(sim)
}

trait WithMesh {
    fn with_mesh(self, sim: &Simulator) -> Self;
}
impl WithMesh for EnsembleOptions {
    fn with_mesh(mut self, sim: &Simulator) -> Self {
        self.test_functions = vec![vec![1.0; sim.mesh.len()]];
        self
    }
}

#[test]
fn beta_zero_ensemble_has_no_variance() {
    let sim = Simulator::new(circle(0.0, 50)).unwrap();
    let mu = InitialMeasure::dirac(Point::circle(0.0));
    let ens = simulate_ensemble(&sim, &mu, &opts(&sim)).unwrap();
    for row in ens.moment_table(&[1, 2]) {
        assert!(row.stderr < 1e-14);
    }
    let j = j_mu(&sim.basis, 0.05 + 0.2, &Point::circle(0.0), &mu).unwrap();
    assert!(
        (ens.moment(1, 2, 0).mean - j).abs() < 1e-8,
        "{} {j}",
        ens.moment(1, 2, 0).mean
    );
}

#[test]
fn mean_matches_heat_flow_and_mass_is_a_martingale() {
    let sim = Simulator::new(circle(0.8, 4000)).unwrap();
    let mu = InitialMeasure::dirac(Point::circle(0.0));
    let ens = simulate_ensemble(&sim, &mu, &opts(&sim)).unwrap();
    for c in 0..3 {
        for p in 0..2 {
            let r = ens.moment(1, c, p);
            let j = sim.heat_value(&mu, 0.05 + ens.times[c], &ens.probes[p]);
            assert!(
                (r.naive_mean - j).abs() <= 3.0 * r.naive_stderr,
                "{c} {p}: {} vs {j} ({})",
                r.naive_mean,
                r.naive_stderr
            );
        }
        let (m, s) = crate::stats::mean_stderr(&ens.integrals(c, 0));
        assert!((m - 1.0).abs() <= 3.0 * s);
    }
    assert_eq!(ens.blowup_fraction(), 0.0);
}

#[test]
fn linearity_and_coupling_are_exact() {
    let sim = Simulator::new(circle(0.9, 6)).unwrap();
    let mu = InitialMeasure::dirac(Point::circle(0.3));
    let a = simulate_ensemble(&sim, &mu, &opts(&sim))
        .unwrap()
        .dumped_fields();
    let b = simulate_ensemble(&sim, &mu.scaled(2.0).unwrap(), &opts(&sim))
        .unwrap()
        .dumped_fields();
    for (pa, pb) in a
        .iter()
        .flatten()
        .flatten()
        .zip(b.iter().flatten().flatten())
    {
        assert_eq!(2.0 * pa, *pb);
    }
    let same = comparison_experiment(&sim, &mu, &mu, &[0.1, 0.2], 1e-10).unwrap();
    assert_eq!(
        (same.violations, same.max_abs_difference, same.strict),
        (0, 0.0, false)
    );
    let other = InitialMeasure::new(
        vec![(Point::circle(0.3), 1.0), (Point::circle(2.0), 1.0)],
        None,
    )
    .unwrap();
    let fine = Simulator::new(SolverConfig {
        bandwidth: 200,
        ..circle(0.9, 6)
    })
    .unwrap();
    let r = comparison_experiment(&fine, &mu, &other, &[0.1, 0.2], 1e-10).unwrap();
    assert!(r.strict && r.violation_fraction <= 1e-3, "{r:?}");
    assert!(comparison_experiment(&sim, &other, &mu, &[0.1], 1e-10).is_err());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let sim = Simulator::new(circle(0.9, 40)).unwrap();
    let mu = InitialMeasure::dirac(Point::circle(0.0));
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            simulate_ensemble(&sim, &mu, &opts(&sim))
                .unwrap()
                .moment_table(&[1, 2, 4])
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn dump_roundtrip() {
    let sim = Simulator::new(circle(0.5, 3)).unwrap();
    let ens = simulate_ensemble(
        &sim,
        &InitialMeasure::dirac(Point::circle(0.0)),
        &opts(&sim),
    )
    .unwrap();
    let fields = ens.dumped_fields();
    assert_eq!(fields.len(), 2);
    let bytes = encode_trajectories([9; 32], &ens.times, &fields).unwrap();
    assert_eq!(bytes.len(), 64 + 8 * (3 + 2 * 3 * sim.mesh.len()));
    let (h, back) = decode_trajectories(&bytes).unwrap();
    assert_eq!(
        (h.config_hash, h.mesh_size, h.paths, h.times.clone()),
        ([9; 32], sim.mesh.len(), 2, ens.times.clone())
    );
    assert_eq!(back, fields);
    assert!(decode_trajectories(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn positivity_and_lyapunov_at_beta_zero() {
    let mut cfg = circle(0.0, 20);
    cfg.horizon = 3.0;
    cfg.dt = 0.01;
    let sim = Simulator::new(cfg).unwrap();
    let mu = InitialMeasure::volume(&sim.mesh);
    let o = EnsembleOptions {
        checkpoints: (1..=30).map(|i| 0.1 * i as f64).collect(),
        probes: vec![Point::circle(0.0)],
        ..Default::default()
    };
    let ens = simulate_ensemble(&sim, &mu, &o).unwrap();
    let l = estimate_lyapunov(&ens, 0, (1.0, 3.0), 50, 1).unwrap();
    assert!(l.slope.abs() < 1e-9 && l.verdict == Verdict::Pass);
    let p = positivity_probe(&ens, 29, &[0.0, 0.5, 2.0]);
    assert_eq!(
        p.rows.iter().map(|r| r.hits).collect::<Vec<_>>(),
        vec![20, 20, 0]
    );
    let env = moment_envelope(&sim, &ens, &mu, 0, 2, 0.1);
    assert!(env.envelope.passed && env.ratios.iter().all(|r| (r - 1.0).abs() < 1e-9));
}
