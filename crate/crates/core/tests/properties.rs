use std::f64::consts::{PI, TAU};

use pam_core::fgeom::{check_decomposition, f_value};
use pam_core::manifold::{ManifoldModel, ModelKind, Point};
use pam_core::measure::InitialMeasure;
use pam_core::moments::{ChaosEngine, EngineSettings};
use pam_core::noise::{spectral_inner, CovarianceKernel, NoiseSpec};
use pam_core::solver::{simulate_ensemble, EnsembleOptions, Simulator, SolverConfig};
use pam_core::spectral::{GaussianComparison, SpectralBasis};
use proptest::prelude::*;

const KINDS: [ModelKind; 3] = [ModelKind::Circle, ModelKind::FlatTorus2, ModelKind::Sphere2];

fn kind() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(KINDS.to_vec())
}

/// A point from two uniforms; uniform with respect to the volume measure.
fn place(kind: ModelKind, u: f64, v: f64) -> Point<f64> {
    match kind {
        ModelKind::Circle => Point::circle(TAU * u),
        ModelKind::FlatTorus2 => Point::torus(u, v),
        ModelKind::Sphere2 => Point::sphere((1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(), TAU * v),
    }
}

fn unit() -> std::ops::Range<f64> {
    0.0..1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn triangle_inequality(k in kind(), a in unit(), b in unit(), c in unit(), d in unit(), e in unit(), f in unit()) {
        let m = ManifoldModel::<f64>::new(k);
        let (x, y, z) = (place(k, a, b), place(k, c, d), place(k, e, f));
        let dxz = m.distance(&x, &z).unwrap();
        prop_assert!(dxz <= m.distance(&x, &y).unwrap() + m.distance(&y, &z).unwrap() + 1e-12);
        prop_assert!(dxz <= m.diameter + 1e-12);
    }

    #[test]
    fn geodesic_points_are_evenly_spaced(k in kind(), a in unit(), b in unit(), c in unit(), d in unit(),
                                         s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let m = ManifoldModel::<f64>::new(k);
        let x = place(k, a, b);
        let y = place(k, c, d);
        let dxy = m.distance(&x, &y).unwrap();
        prop_assume!(dxy < m.injectivity_radius * 0.999);
        let p = m.geodesic_point(&x, &y, s).unwrap();
        let q = m.geodesic_point(&x, &y, t).unwrap();
        prop_assert!((m.distance(&p, &q).unwrap() - (s - t).abs() * dxy).abs() < 1e-10);
    }

    #[test]
    fn three_distance_function(k in kind(), w in 0.0..=1.0f64, a in unit(), b in unit(), c in unit(), d in unit(),
                               e in unit(), f in unit()) {
        let m = ManifoldModel::<f64>::new(k);
        let (x, y, z) = (place(k, a, b), place(k, c, d), place(k, e, f));
        let fv = f_value(&m, w, &x, &y, &z).unwrap();
        let r = m.distance(&x, &z).unwrap() - w * m.distance(&x, &y).unwrap();
        prop_assert!(fv >= -1e-12);
        prop_assert!(fv >= r * r - 1e-12);
        // equal up to rounding, since 1 - (1 - w) need not be w in floating point
        prop_assert!((fv - f_value(&m, 1.0 - w, &y, &x, &z).unwrap()).abs() <= 1e-12 * fv.abs().max(1.0));
        prop_assert!(check_decomposition(&m, w, &x, &y, &z).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn antipodal_equality_on_the_sphere(w in 0.0..=1.0f64, a in unit(), b in unit(), e in unit(), f in unit()) {
        let m = ManifoldModel::<f64>::sphere();
        let x = place(ModelKind::Sphere2, a, b);
        let y = m.antipode(&x);
        let z = place(ModelKind::Sphere2, e, f);
        let r = m.distance(&x, &z).unwrap() - w * m.distance(&x, &y).unwrap();
        prop_assert!((f_value(&m, w, &x, &y, &z).unwrap() - r * r).abs() <= 1e-12);
    }

    #[test]
    fn gaussian_is_below_its_tilde_form(t in 1e-4..1.0f64, r in 1e-3..4.0f64, eps in 0.0..2.0f64) {
        let one = GaussianComparison::new(eps, 1);
        prop_assert!(one.g(t, r) <= one.g_tilde(t, r));
        let two = GaussianComparison::new(eps, 2);
        prop_assert!(two.g(t, r) < two.g_tilde(t, r) || two.g(t, r) == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_kernel_semigroup_and_stationarity(k in kind(), s in 0.05..0.6f64, dt in 0.05..0.6f64,
                                              a in unit(), b in unit(), c in unit(), d in unit()) {
        let m = ManifoldModel::<f64>::new(k);
        let basis = SpectralBasis::for_min_time(m, 0.05, 1e-12).unwrap();
        let mesh = m.make_mesh(2 * basis.bandwidth + 4).unwrap();
        let (x, y) = (place(k, a, b), place(k, c, d));
        let t = s + dt;
        let ps: Vec<f64> = mesh.points.iter().map(|z| basis.heat_kernel(s, &x, z).unwrap()).collect();
        let pt: Vec<f64> = mesh.points.iter().map(|z| basis.heat_kernel(dt, z, &y).unwrap()).collect();
        let prod: Vec<f64> = ps.iter().zip(&pt).map(|(p, q)| p * q).collect();
        prop_assert!((mesh.integrate(&prod) - basis.heat_kernel(t, &x, &y).unwrap()).abs() < 1e-8);
        prop_assert!((mesh.integrate(&ps) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn covariance_is_bilinear_and_norms_are_ordered(k in kind(), seed in any::<u64>(), rho in 0.0..3.0f64) {
        use rand::{Rng, SeedableRng};
        let m = ManifoldModel::<f64>::new(k);
        let basis = SpectralBasis::new(m, 6).unwrap();
        let mesh = m.make_mesh(16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = |c: &[f64]| -> Vec<f64> {
            mesh.points.iter().map(|p| basis.eval_all(p).iter().zip(c).map(|(e, c)| e * c).sum()).collect()
        };
        let spec = NoiseSpec::new(1.5, rho, m.dim).unwrap();
        let kernel = CovarianceKernel::new(&basis, spec, &mesh);
        let direct = kernel.bilinear(&field(&a), &field(&b));
        prop_assert!((direct - spectral_inner(&basis, &spec, &a, &b)).abs() < 1e-6);

        // L² ⊂ H^{α,ρ} ⊂ H^{β,ρ} for α < β: every nonzero eigenvalue is at least 1
        let norm = |alpha: f64| spectral_inner(&basis, &NoiseSpec::new(alpha, rho, m.dim).unwrap(), &a, &a);
        let l2: f64 = a.iter().skip(1).map(|x| x * x).sum::<f64>() + rho * a[0] * a[0];
        prop_assert!(norm(0.5) <= l2 + 1e-12);
        prop_assert!(norm(1.0) <= norm(0.5) + 1e-12);
        prop_assert!(norm(2.0) <= norm(1.0) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chaos_terms_are_nonnegative_and_partial_sums_grow(t in 0.1..1.0f64, x in 0.0..TAU, beta in 0.1..1.0f64) {
        let spec = NoiseSpec::new(1.0, 2.0 * PI, 1).unwrap();
        let engine = ChaosEngine::new(ManifoldModel::circle(), spec, EngineSettings::new(16, 8, 32)).unwrap();
        let mu = InitialMeasure::dirac(Point::circle(0.0));
        let r = engine.second_moment(t, &Point::circle(x), &Point::circle(x), &mu, 0.05, beta, 3).unwrap();
        prop_assert!(r.orders.iter().all(|&l| l >= -1e-12), "{:?}", r.orders);
    }

    #[test]
    fn doubling_the_initial_measure_doubles_every_path(seed in any::<u64>(), a in 0.0..TAU) {
        let cfg = SolverConfig {
            model: ModelKind::Circle,
            bandwidth: 8,
            noise_bandwidth: 4,
            mesh_resolution: None,
            alpha: 1.0,
            rho: 2.0 * PI,
            beta: 0.8,
            dt: 0.01,
            horizon: 0.2,
            smoothing: 0.02,
            paths: 6,
            seed,
        };
        let sim = Simulator::new(cfg).unwrap();
        let mu = InitialMeasure::dirac(Point::circle(a));
        let opts = EnsembleOptions { checkpoints: vec![0.1, 0.2], dump_paths: 6, ..Default::default() };
        let one = simulate_ensemble(&sim, &mu, &opts).unwrap().dumped_fields();
        let two = simulate_ensemble(&sim, &mu.scaled(2.0).unwrap(), &opts).unwrap().dumped_fields();
        for (p, q) in one.iter().flatten().flatten().zip(two.iter().flatten().flatten()) {
            prop_assert_eq!(2.0 * p, *q);
        }
    }
}
