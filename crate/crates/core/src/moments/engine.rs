//! Mode-space chaos engine for `L_n` and the second moment.
//!
//! `L_n(s, x₀, ·, x₀', ·)` for a fixed pair of sources is stored as a symmetric-in-structure matrix
//! `Â(s)` of heat-basis coefficients, so `L_n(s, x₀, y, x₀', y') = φ(y)ᵀ Â(s) φ(y')`. One step of
//! the recursion multiplies by the covariance on the mesh, projects back, and integrates the heat
//! semigroup exactly against a piecewise-linear interpolant in time.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point, QuadratureMesh};
use crate::measure::InitialMeasure;
use crate::moments::hseries::{power_law_h, power_law_tail};
use crate::noise::{check_dalang, CovarianceKernel, NoiseSpec};
use crate::quadrature::{graded_grid, grading_exponent};
use crate::spectral::{GaussianComparison, SpectralBasis};

/// Entries of the covariance Gram below `-NEGATIVITY_TOLERANCE * max|G|` violate the precondition.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineSettings {
    pub bandwidth: usize,
    pub noise_bandwidth: usize,
    /// Defaults to the smallest mesh on which the spatial quadrature is exact for the truncated fields.
    pub mesh_resolution: Option<usize>,
    pub time_intervals: usize,
    /// Defaults to the `α`-dependent grading exponent.
    pub grading: Option<f64>,
    /// `ε` of the Gaussian envelope used in the tail bound.
    pub envelope_epsilon: f64,
    /// Convergence is declared when `tail / partial_sum` is below this.
    pub tolerance: f64,
}

impl EngineSettings {
    pub fn new(bandwidth: usize, noise_bandwidth: usize, time_intervals: usize) -> Self {
        EngineSettings {
            bandwidth,
            noise_bandwidth,
            mesh_resolution: None,
            time_intervals,
            grading: None,
            envelope_epsilon: 1.0,
            tolerance: 1e-6,
        }
    }
}

/// Mesh resolution making `∫ φ_m φ_{m'} φ_a φ_b G` exact for heat band `k` and noise band `kn`.
pub fn exact_mesh_resolution(kind: ModelKind, k: usize, kn: usize) -> usize {
    let degree = 3 * k + kn;
    match kind {
        ModelKind::Circle | ModelKind::FlatTorus2 => (degree + 1).max(4),
        ModelKind::Sphere2 => (degree / 2 + 1).max(4),
    }
}

/// `L_n` for a fixed source pair on a time grid, as mode-space coefficient matrices.
#[derive(Clone, Debug)]
pub struct ChaosTensor {
    pub order: usize,
    pub times: Vec<f64>,
    pub values: Vec<DMatrix<f64>>,
}

impl ChaosTensor {
    pub fn scaled(&self, c: f64) -> ChaosTensor {
        ChaosTensor {
            order: self.order,
            times: self.times.clone(),
            values: self.values.iter().map(|a| a * c).collect(),
        }
    }
}

/// `(z - 1 + e^{-z}) / z²`: weight of the right node.
fn psi0(z: f64) -> f64 {
    if z < 1e-2 {
        0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0
    } else {
        (z - 1.0 + (-z).exp()) / (z * z)
    }
}

/// `(1 - (1+z) e^{-z}) / z²`: weight of the left node.
fn psi1(z: f64) -> f64 {
    if z < 1e-2 {
        0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0
    } else {
        (1.0 - (1.0 + z) * (-z).exp()) / (z * z)
    }
}

#[derive(Clone, Debug)]
pub struct ChaosEngine {
    pub basis: SpectralBasis<f64>,
    pub spec: NoiseSpec,
    pub settings: EngineSettings,
    pub mesh: QuadratureMesh<f64>,
    phi: DMatrix<f64>,
    wphi: DMatrix<f64>,
    cov: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSeriesResult {
    pub t: f64,
    pub beta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub n_max: usize,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    /// `β^{2n} ∫∫ L_n dμ dμ'` for `n = 0..=n_max`.
    pub orders: Vec<f64>,
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub quadrature_error: f64,
    /// Fitted growth constant `C` in `L_n <= (2C)^n E E' h̃_n`.
    pub growth_constant: f64,
    pub converged: bool,
}

impl MomentSeriesResult {
    pub fn error_bar(&self) -> f64 {
        self.tail_bound + self.quadrature_error
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence(format!(
                "chaos tail {:e} exceeds tolerance relative to partial sum {:e} at N={}; try a smaller β²t",
                self.tail_bound, self.partial_sum, self.n_max
            )))
        }
    }
}

impl ChaosEngine {
    pub fn new(
        model: ManifoldModel<f64>,
        spec: NoiseSpec,
        settings: EngineSettings,
    ) -> Result<Self> {
        let (ok, margin) = check_dalang(&model, spec.alpha);
        if !ok {
            return Err(Error::Precondition(format!(
                "noise exponent α={} violates the Dalang condition (margin {margin})",
                spec.alpha
            )));
        }
        if settings.time_intervals < 2 || settings.time_intervals % 2 == 1 {
            return Err(Error::InvalidInput(
                "time_intervals must be even and at least 2".into(),
            ));
        }
        let basis = SpectralBasis::new(model, settings.bandwidth)?;
        let res = settings.mesh_resolution.unwrap_or_else(|| {
            exact_mesh_resolution(model.kind, settings.bandwidth, settings.noise_bandwidth)
        });
        let mesh = model.make_mesh(res)?;
        // a zero noise band keeps only the constant mode
        let cov = if settings.noise_bandwidth == 0 {
            DMatrix::from_element(mesh.len(), mesh.len(), spec.rho / model.volume)
        } else {
            let noise_basis = SpectralBasis::new(model, settings.noise_bandwidth)?;
            CovarianceKernel::new(&noise_basis, spec, &mesh).gram
        };
        let scale = cov.abs().max();
        let min = cov.min();
        if min < -NEGATIVITY_TOLERANCE * scale {
            return Err(Error::Precondition(format!(
                "covariance takes the negative value {min:e} on the mesh; raise ρ to at least the nonnegativity threshold"
            )));
        }
        let phi = basis.mode_matrix(&mesh);
        let mut wphi = phi.clone();
        for (i, &w) in mesh.weights.iter().enumerate() {
            wphi.row_mut(i).scale_mut(w);
        }
        Ok(ChaosEngine {
            basis,
            spec,
            settings,
            mesh,
            phi,
            wphi,
            cov,
        })
    }

    pub fn grading(&self) -> f64 {
        self.settings
            .grading
            .unwrap_or_else(|| grading_exponent(self.spec.alpha, self.basis.model.dim))
    }

    pub fn time_grid(&self, t: f64, intervals: usize) -> Vec<f64> {
        graded_grid(t, intervals, self.grading())
    }

    /// `Â_0(s) = diag(e(s)) c c'ᵀ diag(e(s))` with `e_m(s) = e^{-λ_m s/2}`.
    pub fn order0(&self, times: &[f64], c: &[f64], cp: &[f64]) -> ChaosTensor {
        let n = self.basis.len();
        let values = times
            .iter()
            .map(|&s| {
                let e: Vec<f64> = self
                    .basis
                    .eigenvalues
                    .iter()
                    .map(|l| (-l * s / 2.0).exp())
                    .collect();
                DMatrix::from_fn(n, n, |i, j| e[i] * c[i] * cp[j] * e[j])
            })
            .collect();
        ChaosTensor {
            order: 0,
            times: times.to_vec(),
            values,
        }
    }

    /// `Φᵀ W ((Φ Â Φᵀ) ∘ G) W Φ`.
    fn project_product(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = &(&self.phi * a) * self.phi.transpose();
        let h = n.component_mul(&self.cov);
        self.wphi.transpose() * (h * &self.wphi)
    }

    /// `L_0 ▷ w`, the next order of the recursion on the same time grid.
    pub fn chaos_step(&self, w: &ChaosTensor) -> ChaosTensor {
        let chat: Vec<DMatrix<f64>> = w
            .values
            .par_iter()
            .map(|a| self.project_product(a))
            .collect();
        let n = self.basis.len();
        let lam = &self.basis.eigenvalues;
        let mut values = Vec::with_capacity(w.times.len());
        values.push(DMatrix::zeros(n, n));
        for i in 1..w.times.len() {
            let h = w.times[i] - w.times[i - 1];
            let prev = &values[i - 1];
            let next = DMatrix::from_fn(n, n, |a, b| {
                let z = 0.5 * (lam[a] + lam[b]) * h;
                (-z).exp() * prev[(a, b)]
                    + h * (psi1(z) * chat[i - 1][(a, b)] + psi0(z) * chat[i][(a, b)])
            });
            values.push(next);
        }
        ChaosTensor {
            order: w.order + 1,
            times: w.times.clone(),
            values,
        }
    }

    /// `L_n(t_j, ·, x, ·, x')` for the stored sources.
    pub fn evaluate(&self, w: &ChaosTensor, j: usize, x: &Point<f64>, xp: &Point<f64>) -> f64 {
        let fx = self.basis.eval_all(x);
        let fxp = self.basis.eval_all(xp);
        let a = &w.values[j];
        let mut s = 0.0;
        for (i, u) in fx.iter().enumerate() {
            let mut r = 0.0;
            for (k, v) in fxp.iter().enumerate() {
                r += a[(i, k)] * v;
            }
            s += u * r;
        }
        s
    }

    /// The tensor at node `j` on the mesh, `Φ Â Φᵀ`.
    pub fn on_mesh(&self, w: &ChaosTensor, j: usize) -> DMatrix<f64> {
        &(&self.phi * &w.values[j]) * self.phi.transpose()
    }

    /// `L_0..=L_N` on a graded grid over `[0, t]`.
    pub fn series(
        &self,
        t: f64,
        intervals: usize,
        c: &[f64],
        cp: &[f64],
        n_max: usize,
    ) -> Vec<ChaosTensor> {
        let times = self.time_grid(t, intervals);
        let mut out = vec![self.order0(&times, c, cp)];
        for _ in 0..n_max {
            let next = self.chaos_step(out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// Heat-basis coefficients of `J_μ(t₀, ·)`.
    pub fn source_coefficients(&self, mu: &InitialMeasure, smoothing: f64) -> Vec<f64> {
        let c = mu.coefficients(&self.basis);
        c.iter()
            .zip(&self.basis.eigenvalues)
            .map(|(v, l)| v * (-l * smoothing / 2.0).exp())
            .collect()
    }

    /// `∫ μ(dz) [G^ε_t(d(z,x)) + 1]`.
    fn envelope(&self, mu: &InitialMeasure, t: f64, x: &Point<f64>) -> f64 {
        let g = GaussianComparison::new(self.settings.envelope_epsilon, self.basis.model.dim);
        let model = self.basis.model;
        mu.integrate(|z| g.g(t, model.distance_unchecked(z, x)) + 1.0)
    }

    fn run(
        &self,
        t: f64,
        x: &Point<f64>,
        xp: &Point<f64>,
        sources: (&InitialMeasure, &InitialMeasure),
        smoothing: f64,
        beta: f64,
        n_max: usize,
    ) -> Result<MomentSeriesResult> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time must be positive, got {t}"
            )));
        }
        if n_max < 1 {
            return Err(Error::InvalidInput(
                "series needs at least one order".into(),
            ));
        }
        let (mu, mup) = sources;
        let c = self.source_coefficients(mu, smoothing);
        let cp = self.source_coefficients(mup, smoothing);
        let j = self.settings.time_intervals;
        let b2 = beta * beta;
        let collect = |tensors: &[ChaosTensor]| -> Vec<f64> {
            tensors
                .iter()
                .enumerate()
                .map(|(n, w)| b2.powi(n as i32) * self.evaluate(w, w.times.len() - 1, x, xp))
                .collect()
        };
        let fine = collect(&self.series(t, j, &c, &cp, n_max));
        let coarse = collect(&self.series(t, j / 2, &c, &cp, n_max));
        let partial_sum: f64 = fine.iter().sum();
        let quadrature_error = (partial_sum - coarse.iter().sum::<f64>()).abs();

        let p = (2.0 * self.spec.alpha - self.basis.model.dim as f64) / 2.0;
        let env = self.envelope(mu, t + smoothing, x) * self.envelope(mup, t + smoothing, xp);
        let h = power_law_h(p, n_max, t);
        let mut growth_constant = 0.0f64;
        for n in 1..=n_max {
            let raw = self.evaluate_raw(&fine, n, b2);
            if raw > 0.0 {
                growth_constant =
                    growth_constant.max((raw / (env * h[n])).powf(1.0 / n as f64) / 2.0);
            }
        }
        let tail_bound = if beta == 0.0 {
            0.0
        } else {
            env * power_law_tail(p, 2.0 * growth_constant * b2, t, n_max)?
        };
        let converged = tail_bound <= self.settings.tolerance * partial_sum.abs();
        if fine.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence(
                "chaos series produced a non-finite term".into(),
            ));
        }
        Ok(MomentSeriesResult {
            t,
            beta,
            alpha: self.spec.alpha,
            rho: self.spec.rho,
            n_max,
            x: x.coords(),
            x_prime: xp.coords(),
            orders: fine,
            partial_sum,
            tail_bound,
            quadrature_error,
            growth_constant,
            converged,
        })
    }

    /// Recovers the unweighted `∫∫ L_n` from the `β`-weighted order list.
    fn evaluate_raw(&self, orders: &[f64], n: usize, b2: f64) -> f64 {
        if b2 == 0.0 {
            0.0
        } else {
            orders[n] / b2.powi(n as i32)
        }
    }

    /// `Σ_{n<=N} β^{2n} L_n(t, x₀, x, x₀', x')` for point sources.
    pub fn k_beta_partial(
        &self,
        t: f64,
        x: &Point<f64>,
        x0: &Point<f64>,
        xp: &Point<f64>,
        x0p: &Point<f64>,
        beta: f64,
        n_max: usize,
    ) -> Result<MomentSeriesResult> {
        let (d0, d0p) = (InitialMeasure::dirac(*x0), InitialMeasure::dirac(*x0p));
        self.run(t, x, xp, (&d0, &d0p), 0.0, beta, n_max)
    }

    /// `E[u(t,x)u(t,x')]` for initial data `J_μ(t₀, ·)` (`t₀ = smoothing`, possibly 0):
    /// `Σ_{n<=N} β^{2n} ∫∫ L_n μ(dz) μ(dz')`, whose `n = 0` term is `J_μ(t,x) J_μ(t,x')`.
    pub fn second_moment(
        &self,
        t: f64,
        x: &Point<f64>,
        xp: &Point<f64>,
        mu: &InitialMeasure,
        smoothing: f64,
        beta: f64,
        n_max: usize,
    ) -> Result<MomentSeriesResult> {
        self.run(t, x, xp, (mu, mu), smoothing, beta, n_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::covariance;
    use crate::quadrature::gauss_legendre_on;
    use crate::spectral::circle_image_sum;
    use std::f64::consts::PI;

    fn circle_engine(k: usize, kn: usize, intervals: usize, grading: Option<f64>) -> ChaosEngine {
        let spec = NoiseSpec::new(1.0, PI * PI / 6.0, 1).unwrap();
        let mut s = EngineSettings::new(k, kn, intervals);
        s.grading = grading;
        ChaosEngine::new(ManifoldModel::circle(), spec, s).unwrap()
    }

    /// Direct nested quadrature of `L_1(t, x₀, x, x₀', x')`: Gauss–Legendre in time, a fine uniform
    /// mesh in space, full heat kernels and the zonal covariance.
    fn brute_l1(engine: &ChaosEngine, t: f64, x0: f64, x: f64, x0p: f64, xp: f64) -> f64 {
        let noise =
            SpectralBasis::new(ManifoldModel::circle(), engine.settings.noise_bandwidth).unwrap();
        let m = 1024;
        let h = 2.0 * PI / m as f64;
        let z: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        let g: Vec<Vec<f64>> = z
            .iter()
            .map(|a| {
                z.iter()
                    .map(|b| {
                        covariance(&noise, &engine.spec, &Point::circle(*a), &Point::circle(*b))
                            .unwrap_or(0.0)
                    })
                    .collect()
            })
            .collect();
        // the diagonal uses the truncated sum, as the engine does
        let diag =
            crate::noise::g_alpha_truncated(&noise, 1.0, &Point::circle(0.0), &Point::circle(0.0))
                + engine.spec.rho / (2.0 * PI);
        let kern = |s: f64, a: f64, b: f64| circle_image_sum(s, a - b);
        let mut total = 0.0;
        for (s, w) in gauss_legendre_on(24, 0.0, t) {
            let left: Vec<f64> = z
                .iter()
                .map(|zz| kern(s, x0, *zz) * kern(t - s, *zz, x))
                .collect();
            let right: Vec<f64> = z
                .iter()
                .map(|zz| kern(s, x0p, *zz) * kern(t - s, *zz, xp))
                .collect();
            let mut acc = 0.0;
            for i in 0..m {
                let mut r = 0.0;
                for j in 0..m {
                    let gij = if i == j { diag } else { g[i][j] };
                    r += gij * right[j];
                }
                acc += left[i] * r;
            }
            total += w * acc * h * h;
        }
        total
    }

    #[test]
    fn zero_and_linearity() {
        let e = circle_engine(8, 4, 16, None);
        let times = e.time_grid(0.5, 16);
        let zero = ChaosTensor {
            order: 0,
            times: times.clone(),
            values: vec![DMatrix::zeros(17, 17); 17],
        };
        assert!(e
            .chaos_step(&zero)
            .values
            .iter()
            .all(|a| a.iter().all(|v| *v == 0.0)));
        let c = e.basis.eval_all(&Point::circle(0.3));
        let w = e.order0(&times, &c, &c);
        let a = e.chaos_step(&w);
        let b = e.chaos_step(&w.scaled(2.5));
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u * 2.5 - v).abs().max() <= 1e-12 * v.abs().max());
        }
    }

    #[test]
    fn l0_examples() {
        let e = circle_engine(24, 4, 8, None);
        let (x0, x, x0p, xp) = (
            Point::circle(0.1),
            Point::circle(1.0),
            Point::circle(2.0),
            Point::circle(4.0),
        );
        let times = [0.0, 1.0];
        let w = e.order0(&times, &e.basis.eval_all(&x0), &e.basis.eval_all(&x0p));
        let v = e.evaluate(&w, 1, &x, &xp);
        let oracle = circle_image_sum(1.0, 0.9) * circle_image_sum(1.0, 2.0);
        assert!((v - oracle).abs() < 1e-10);
        let ws = e.order0(&times, &e.basis.eval_all(&x0p), &e.basis.eval_all(&x0));
        assert!((e.evaluate(&ws, 1, &xp, &x) - v).abs() < 1e-14);
        let far = e.order0(&[80.0], &e.basis.eval_all(&x0), &e.basis.eval_all(&x0p));
        assert!((e.evaluate(&far, 0, &x, &xp) - 1.0 / (4.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn l1_matches_brute_force() {
        let e = circle_engine(48, 8, 256, None);
        let t = 0.5;
        let tuples = [
            (0.0, 0.0, 0.0, 0.0),
            (0.3, 1.1, 2.0, 0.7),
            (1.0, 1.4, 5.0, 4.2),
            (2.5, 3.0, 2.5, 2.9),
            (0.0, 3.1, 6.0, 0.4),
        ];
        for (x0, x, x0p, xp) in tuples {
            let c = e.basis.eval_all(&Point::circle(x0));
            let cp = e.basis.eval_all(&Point::circle(x0p));
            let s = e.series(t, 256, &c, &cp, 1);
            let v = e.evaluate(&s[1], 256, &Point::circle(x), &Point::circle(xp));
            let oracle = brute_l1(&e, t, x0, x, x0p, xp);
            assert!(
                (v / oracle - 1.0).abs() < 1e-4,
                "({x0},{x},{x0p},{xp}): {v} vs {oracle}"
            );
        }
    }

    #[test]
    fn constant_noise_closed_form() {
        // with only the constant mode, L_n = (ρ/m₀)^n t^n / n! · P_t(x₀,x) P_t(x₀',x')
        let spec = NoiseSpec::new(1.0, 3.0, 1).unwrap();
        let e = ChaosEngine::new(
            ManifoldModel::circle(),
            spec,
            EngineSettings::new(40, 0, 256),
        )
        .unwrap();
        let (x0, x, x0p, xp) = (
            Point::circle(0.0),
            Point::circle(0.7),
            Point::circle(2.0),
            Point::circle(2.5),
        );
        let t = 0.4;
        let s = e.series(t, 256, &e.basis.eval_all(&x0), &e.basis.eval_all(&x0p), 3);
        let c = 3.0 / (2.0 * PI);
        let base = circle_image_sum(t, 0.7) * circle_image_sum(t, 0.5);
        let mut fact = 1.0;
        for (n, w) in s.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            let exact = c.powi(n as i32) * t.powi(n as i32) / fact * base;
            let v = e.evaluate(w, 256, &x, &xp);
            assert!((v / exact - 1.0).abs() < 1e-5, "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn beta_zero_is_homogeneous() {
        let e = circle_engine(32, 8, 32, None);
        let mu = InitialMeasure::dirac(Point::circle(0.0));
        let x = Point::circle(0.4);
        let r = e.second_moment(0.5, &x, &x, &mu, 0.0, 0.0, 2).unwrap();
        let j = circle_image_sum(0.5, 0.4);
        assert!((r.partial_sum - j * j).abs() < 1e-10);
        assert_eq!(r.tail_bound, 0.0);
        assert_eq!(&r.orders[1..], &[0.0, 0.0]);
    }

    #[test]
    fn terms_positive_and_decaying() {
        let e = circle_engine(48, 8, 64, None);
        let x0 = Point::circle(0.0);
        let r = e.k_beta_partial(0.5, &x0, &x0, &x0, &x0, 0.25, 3).unwrap();
        assert!(r.orders.iter().all(|&v| v > 0.0));
        let ratios: Vec<f64> = r.orders.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios[1] < 1.0 && ratios[2] < ratios[1], "{ratios:?}");
        assert!(r.converged);
        assert!(r.tail_bound > 0.0 && r.tail_bound < r.orders[3]);
    }

    #[test]
    fn refuses_negative_covariance() {
        let spec = NoiseSpec::new(1.0, 0.5, 1).unwrap();
        let err = ChaosEngine::new(ManifoldModel::circle(), spec, EngineSettings::new(8, 8, 8))
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn quadrature_error_shrinks_with_refinement() {
        let mu = InitialMeasure::dirac(Point::circle(0.0));
        let x = Point::circle(0.2);
        let a = circle_engine(32, 8, 32, None)
            .second_moment(0.5, &x, &x, &mu, 0.02, 0.5, 2)
            .unwrap();
        let b = circle_engine(32, 8, 64, None)
            .second_moment(0.5, &x, &x, &mu, 0.02, 0.5, 2)
            .unwrap();
        assert!(b.quadrature_error < a.quadrature_error / 2.0);
        assert!((a.partial_sum - b.partial_sum).abs() <= a.quadrature_error);
    }
}
