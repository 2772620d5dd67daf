//! Spatially colored, temporally white noise: covariance kernel, nonnegativity threshold and sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point, QuadratureMesh};
use crate::quadrature::{gauss_legendre_on, legendre_all, log_space};
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;
use crate::stats::{fit_validate, EnvelopeReport, EnvelopeSample};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub rho: f64,
    /// `α - (d-2)/2`; positive exactly when the noise admits a random-field solution.
    pub dalang_margin: f64,
}

impl NoiseSpec {
    pub fn new(alpha: f64, rho: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rho must be nonnegative, got {rho}"
            )));
        }
        Ok(NoiseSpec {
            alpha,
            rho,
            dalang_margin: alpha - (dim as f64 - 2.0) / 2.0,
        })
    }
}

/// Returns whether `α > (d-2)/2` together with the margin.
pub fn check_dalang<T: Scalar>(model: &ManifoldModel<T>, alpha: f64) -> (bool, f64) {
    let margin = alpha - (model.dim as f64 - 2.0) / 2.0;
    (margin > 0.0, margin)
}

/// Truncated `G_α(x,y) = sum_{1 <= n <= N} φ_n(x)φ_n(y) λ_n^{-α}` (no constant mode).
pub fn g_alpha_truncated<T: Scalar>(
    basis: &SpectralBasis<T>,
    alpha: f64,
    x: &Point<T>,
    y: &Point<T>,
) -> T {
    let a = T::lit(alpha);
    let k_max = basis.bandwidth;
    match (x, y) {
        (Point::Circle(p), Point::Circle(q)) => {
            let delta = *p - *q;
            let mut s = T::zero();
            for k in (1..=k_max).rev() {
                let kf = T::lit(k as f64);
                s += (kf * delta).cos() / (kf * kf).powf(a);
            }
            s / T::PI()
        }
        (Point::Torus(u1, v1), Point::Torus(u2, v2)) => {
            let (du, dv) = (*u1 - *u2, *v1 - *v2);
            let four_pi2 = T::lit(4.0) * T::PI() * T::PI();
            let cu: Vec<T> = (0..=k_max)
                .map(|j| (T::TAU() * T::lit(j as f64) * du).cos())
                .collect();
            let cv: Vec<T> = (0..=k_max)
                .map(|j| (T::TAU() * T::lit(j as f64) * dv).cos())
                .collect();
            let b2 = (k_max * k_max) as i64;
            let mut s = T::zero();
            for j in -(k_max as i64)..=(k_max as i64) {
                for k in -(k_max as i64)..=(k_max as i64) {
                    let n2 = j * j + k * k;
                    if n2 == 0 || n2 > b2 {
                        continue;
                    }
                    let lam = four_pi2 * T::lit(n2 as f64);
                    s +=
                        cu[j.unsigned_abs() as usize] * cv[k.unsigned_abs() as usize] / lam.powf(a);
                }
            }
            s
        }
        _ => {
            let d = basis.model.distance_unchecked(x, y);
            let p = legendre_all(k_max, d.cos());
            let mut s = T::zero();
            for l in (1..=k_max).rev() {
                let lf = T::lit(l as f64);
                s += (lf + lf + T::one()) * p[l] / (lf * (lf + T::one())).powf(a);
            }
            s / (T::lit(4.0) * T::PI())
        }
    }
}

/// Sum beyond the band of `φ_n(x)²/λ_n^α`, i.e. the on-diagonal truncation error.
pub fn diagonal_tail(kind: ModelKind, bandwidth: usize, alpha: f64) -> f64 {
    use std::f64::consts::PI;
    match kind {
        ModelKind::Circle => euler_maclaurin_power_tail(bandwidth as f64, 2.0 * alpha) / PI,
        ModelKind::Sphere2 => {
            let f = |l: f64| (2.0 * l + 1.0) * (l * (l + 1.0)).powf(-alpha);
            let df = |l: f64| {
                let q = l * (l + 1.0);
                2.0 * q.powf(-alpha) - alpha * (2.0 * l + 1.0).powi(2) * q.powf(-alpha - 1.0)
            };
            let start = bandwidth.max(1);
            let stop = start.max(4000);
            let mut s = 0.0;
            for l in (start + 1..=stop).rev() {
                s += f(l as f64);
            }
            let n = stop as f64;
            let tail =
                (n * (n + 1.0)).powf(1.0 - alpha) / (alpha - 1.0) - f(n) / 2.0 - df(n) / 12.0;
            (s + tail) / (4.0 * PI)
        }
        ModelKind::FlatTorus2 => {
            let four_pi2 = 4.0 * PI * PI;
            let r = bandwidth.max(400) as i64;
            let b2 = (bandwidth * bandwidth) as i64;
            let mut s = 0.0;
            for j in -r..=r {
                for k in -r..=r {
                    let n2 = j * j + k * k;
                    if n2 > b2 && n2 <= r * r {
                        s += (four_pi2 * n2 as f64).powf(-alpha);
                    }
                }
            }
            let rf = r as f64 + 0.5;
            s + 2.0 * PI * four_pi2.powf(-alpha) * rf.powf(2.0 - 2.0 * alpha) / (2.0 * alpha - 2.0)
        }
    }
}

/// `sum_{k > K} k^{-s}` by Euler–Maclaurin, accurate to `O(K^{-s-5})`.
pub fn euler_maclaurin_power_tail(k: f64, s: f64) -> f64 {
    k.powf(1.0 - s) / (s - 1.0) - k.powf(-s) / 2.0 + s * k.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * k.powf(-s - 3.0) / 720.0
}

/// `G_{α,ρ}(x,y) = ρ/m₀ + G_α(x,y)`. Off the diagonal this is the truncated spectral sum; on the
/// diagonal the full series value is returned (truncated sum plus tail), and refused for `α <= d/2`.
pub fn covariance<T: Scalar>(
    basis: &SpectralBasis<T>,
    spec: &NoiseSpec,
    x: &Point<T>,
    y: &Point<T>,
) -> Result<T> {
    let model = &basis.model;
    let base = T::lit(spec.rho) / model.volume + g_alpha_truncated(basis, spec.alpha, x, y);
    if model.distance(x, y)? == T::zero() {
        let half_dim = model.dim as f64 / 2.0;
        if spec.alpha <= half_dim {
            return Err(Error::DivergentDiagonal {
                alpha: spec.alpha,
                half_dim,
            });
        }
        return Ok(base + T::lit(diagonal_tail(model.kind, basis.bandwidth, spec.alpha)));
    }
    Ok(base)
}

/// `(1/Γ(α)) ∫₀^∞ s^{α-1} (P_s(x,y) - 1/m₀) ds` with the truncated kernel of `½Δ`.
/// Equals `2^α G_α(x,y)` mode by mode.
pub fn g_alpha_via_heat_integral(
    basis: &SpectralBasis<f64>,
    alpha: f64,
    x: &Point<f64>,
    y: &Point<f64>,
) -> f64 {
    let m0 = basis.model.volume;
    let lam1 = basis.first_nonzero_eigenvalue();
    let u_lo = (1e-12f64 / basis.eigenvalues.last().copied().unwrap_or(1.0)).ln();
    let u_hi = (80.0 / lam1).ln();
    let steps = 20000;
    let h = (u_hi - u_lo) / steps as f64;
    let mut s = 0.0;
    for i in 0..=steps {
        let u = u_lo + h * i as f64;
        let t = u.exp();
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        s += w * (alpha * u).exp() * (basis.heat_kernel_truncated(t, x, y) - 1.0 / m0);
    }
    s * h / statrs::function::gamma::gamma(alpha)
}

/// Smallest `ρ` making `G_{α,ρ}` nonnegative on the mesh: `m₀ · max(0, -min G_α)`.
pub fn rho_nonneg_threshold(
    basis: &SpectralBasis<f64>,
    spec: &NoiseSpec,
    mesh: &QuadratureMesh<f64>,
) -> f64 {
    let m0 = basis.model.volume;
    let min = match basis.model.kind {
        // uniform grids are closed under differences, so one base point sees every offset
        ModelKind::Circle | ModelKind::FlatTorus2 => {
            let x0 = mesh.points[0];
            mesh.points
                .iter()
                .map(|y| g_alpha_truncated(basis, spec.alpha, &x0, y))
                .fold(f64::INFINITY, f64::min)
        }
        ModelKind::Sphere2 => {
            let mut m = f64::INFINITY;
            for (i, x) in mesh.points.iter().enumerate() {
                for y in &mesh.points[i..] {
                    m = m.min(g_alpha_truncated(basis, spec.alpha, x, y));
                }
            }
            m
        }
    };
    m0 * (-min).max(0.0)
}

/// Mesh Gram matrix of the truncated covariance.
#[derive(Clone, Debug)]
pub struct CovarianceKernel {
    pub spec: NoiseSpec,
    pub bandwidth: usize,
    pub gram: DMatrix<f64>,
    /// Gram of the `G_α` part alone.
    pub gram_alpha: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl CovarianceKernel {
    pub fn new(basis: &SpectralBasis<f64>, spec: NoiseSpec, mesh: &QuadratureMesh<f64>) -> Self {
        let phi = basis.mode_matrix(mesh);
        let mut scaled = phi.clone();
        for n in 0..basis.len() {
            let lam = basis.eigenvalues[n];
            let w = if lam > 0.0 {
                lam.powf(-spec.alpha)
            } else {
                0.0
            };
            scaled.column_mut(n).scale_mut(w);
        }
        let gram_alpha = &scaled * phi.transpose();
        let c = spec.rho / basis.model.volume;
        let gram = gram_alpha.map(|v| v + c);
        CovarianceKernel {
            spec,
            bandwidth: basis.bandwidth,
            gram,
            gram_alpha,
            weights: mesh.weights.clone(),
        }
    }

    /// `max_i |sum_j w_j G_α(x_i, x_j)|`.
    pub fn max_row_sum(&self) -> f64 {
        let w = DVector::from_column_slice(&self.weights);
        (&self.gram_alpha * w).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.gram + self.gram.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.gram - self.gram.transpose()).abs().max()
    }

    pub fn min_entry(&self) -> f64 {
        self.gram.min()
    }

    /// `∫∫ φ(x) G_{α,ρ}(x,y) ψ(y)` by mesh quadrature.
    pub fn bilinear(&self, phi: &[f64], psi: &[f64]) -> f64 {
        let wphi =
            DVector::from_iterator(phi.len(), phi.iter().zip(&self.weights).map(|(a, w)| a * w));
        let wpsi =
            DVector::from_iterator(psi.len(), psi.iter().zip(&self.weights).map(|(a, w)| a * w));
        wphi.dot(&(&self.gram * wpsi))
    }
}

/// Spectral inner product `ρ a₀b₀ + sum_{n>=1} a_n b_n λ_n^{-α}` on coefficient vectors.
pub fn spectral_inner(basis: &SpectralBasis<f64>, spec: &NoiseSpec, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for n in 0..basis.len() {
        let lam = basis.eigenvalues[n];
        let w = if lam > 0.0 {
            lam.powf(-spec.alpha)
        } else {
            spec.rho
        };
        s += w * a[n] * b[n];
    }
    s
}

/// A noise increment over one time step, split into the spatially constant part and the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    /// Value of the constant-mode component (the same at every mesh point).
    pub constant: f64,
    pub fluctuation: Vec<f64>,
}

impl NoiseIncrement {
    pub fn field(&self) -> Vec<f64> {
        self.fluctuation.iter().map(|v| v + self.constant).collect()
    }
}

/// Karhunen–Loève sampler on a fixed mesh.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    pub spec: NoiseSpec,
    /// `sqrt(ρ/m₀)`: constant-mode amplitude per unit `sqrt(dt)`.
    pub constant_amplitude: f64,
    /// Mesh-by-mode matrix of `λ_n^{-α/2} φ_n(x_i)`, constant mode excluded.
    pub field_matrix: DMatrix<f64>,
    pub mode_count: usize,
}

impl NoiseSampler {
    pub fn new(basis: &SpectralBasis<f64>, spec: NoiseSpec, mesh: &QuadratureMesh<f64>) -> Self {
        let phi = basis.mode_matrix(mesh);
        let cols = basis.len() - 1;
        let mut b = DMatrix::zeros(mesh.len(), cols);
        for n in 1..basis.len() {
            let s = basis.eigenvalues[n].powf(-spec.alpha / 2.0);
            b.column_mut(n - 1).copy_from(&(phi.column(n) * s));
        }
        NoiseSampler {
            spec,
            constant_amplitude: (spec.rho / basis.model.volume).sqrt(),
            field_matrix: b,
            mode_count: cols,
        }
    }

    /// Draws the standard normals: index 0 is the constant mode.
    pub fn draw_normals<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    /// Builds the increment from given standard normals `xi` (length `mode_count + 1`).
    pub fn increment_from_normals(&self, xi: &[f64], dt: f64, fluctuation: &mut [f64]) -> f64 {
        let sdt = dt.sqrt();
        let rows = self.field_matrix.nrows();
        fluctuation.iter_mut().for_each(|v| *v = 0.0);
        if rows > 0 {
            for (col, x) in self
                .field_matrix
                .as_slice()
                .chunks_exact(rows)
                .zip(&xi[1..])
            {
                let coef = sdt * x;
                for (f, b) in fluctuation.iter_mut().zip(col) {
                    *f += coef * b;
                }
            }
        }
        sdt * self.constant_amplitude * xi[0]
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> NoiseIncrement {
        let mut xi = vec![0.0; self.mode_count + 1];
        self.draw_normals(rng, &mut xi);
        let mut fluctuation = vec![0.0; self.field_matrix.nrows()];
        let constant = self.increment_from_normals(&xi, dt, &mut fluctuation);
        NoiseIncrement {
            constant,
            fluctuation,
        }
    }
}

/// Envelope of `|G_α|` by regime of `α` against `d/2`.
pub fn riesz_envelope(alpha: f64, dim: usize, r: f64) -> f64 {
    let half = dim as f64 / 2.0;
    if (alpha - half).abs() < 1e-12 {
        1.0 + (-r.ln()).max(0.0)
    } else if alpha < half {
        r.powf(2.0 * alpha - dim as f64)
    } else {
        1.0
    }
}

fn pairs_at_distance(model: &ManifoldModel<f64>, r: f64) -> Vec<(Point<f64>, Point<f64>)> {
    match model.kind {
        ModelKind::Circle => vec![(Point::circle(0.0), Point::circle(r))],
        ModelKind::Sphere2 => vec![(Point::sphere(0.0, 0.0), Point::sphere(r, 0.0))],
        ModelKind::FlatTorus2 => {
            let mut v = vec![];
            if r <= 0.5 {
                v.push((Point::torus(0.0, 0.0), Point::torus(r, 0.0)));
            }
            let s = r / 2f64.sqrt();
            v.push((Point::torus(0.0, 0.0), Point::torus(s, s)));
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RieszReport {
    pub envelope: EnvelopeReport,
    pub refined_constant: f64,
    pub refinement_change: f64,
}

/// `q_t(x,y) - 1/m₀` for the kernel `q_t` of `e^{tΔ}`, accurate at every `t > 0`: image sums at small
/// times on the circle and torus, a Legendre series with enough terms on the sphere.
fn heat_fluctuation(kind: ModelKind, x: &Point<f64>, y: &Point<f64>, t: f64) -> f64 {
    fn periodic(t: f64, x: f64, period: f64) -> f64 {
        // 1D kernel of e^{tΔ} with period `period`, minus its mean 1/period
        if t < period * period / 12.0 {
            let pre = (4.0 * PI * t).sqrt().recip();
            (-8..=8)
                .map(|m| pre * (-(x + m as f64 * period).powi(2) / (4.0 * t)).exp())
                .sum::<f64>()
                - 1.0 / period
        } else {
            let w = 2.0 * PI / period;
            (1..=12)
                .map(|k| {
                    2.0 / period * (-(w * k as f64).powi(2) * t).exp() * (w * k as f64 * x).cos()
                })
                .sum()
        }
    }
    match (kind, x, y) {
        (ModelKind::Circle, Point::Circle(a), Point::Circle(b)) => periodic(t, a - b, 2.0 * PI),
        (ModelKind::FlatTorus2, Point::Torus(u1, v1), Point::Torus(u2, v2)) => {
            let a = periodic(t, u1 - u2, 1.0);
            let b = periodic(t, v1 - v2, 1.0);
            a + b + a * b
        }
        (ModelKind::Sphere2, Point::Sphere { .. }, Point::Sphere { .. }) => {
            let c = ManifoldModel::<f64>::sphere()
                .distance_unchecked(x, y)
                .cos();
            let l_max = ((60.0 / t).sqrt().ceil() as usize + 2).min(200_000);
            let (mut p_prev, mut p) = (1.0, c);
            let mut s = 0.0;
            for l in 1..=l_max {
                let lf = l as f64;
                s += (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * t).exp() * p;
                let next = ((2.0 * lf + 1.0) * c * p - lf * p_prev) / (lf + 1.0);
                p_prev = p;
                p = next;
            }
            s
        }
        _ => f64::NAN,
    }
}

/// `G_α(x,y)` for `x != y` from `Γ(α) λ^{-α} = ∫ t^{α-1} e^{-λt} dt`, integrated in `ln t` with
/// Gauss–Legendre panels of width `panel`. Needs no spectral truncation, so it resolves small `α`.
pub fn g_alpha_subordinated(
    model: &ManifoldModel<f64>,
    alpha: f64,
    x: &Point<f64>,
    y: &Point<f64>,
    panel: f64,
) -> f64 {
    let r = model.distance_unchecked(x, y);
    let lam1 = match model.kind {
        ModelKind::Circle => 1.0,
        ModelKind::FlatTorus2 => 4.0 * PI * PI,
        ModelKind::Sphere2 => 2.0,
    };
    // below t_lo the kernel is below e^{-50} of its peak; above t_hi the fluctuation is below e^{-60}
    let t_lo = r * r / 200.0;
    let (u_lo, u_hi) = (t_lo.ln(), (60.0 / lam1).ln());
    let panels = ((u_hi - u_lo) / panel).ceil() as usize;
    let h = (u_hi - u_lo) / panels as f64;
    let mut s = -t_lo.powf(alpha) / (alpha * model.volume);
    for i in 0..panels {
        let a = u_lo + h * i as f64;
        for (u, w) in gauss_legendre_on(16, a, a + h) {
            let t = u.exp();
            s += w * (alpha * u).exp() * heat_fluctuation(model.kind, x, y, t);
        }
    }
    s / statrs::function::gamma::gamma(alpha)
}

fn riesz_samples(
    model: &ManifoldModel<f64>,
    alpha: f64,
    radii: &[f64],
    panel: f64,
) -> Vec<EnvelopeSample> {
    let mut out = vec![];
    for (i, &r) in radii.iter().enumerate() {
        for (x, y) in pairs_at_distance(model, r) {
            out.push(EnvelopeSample {
                param_index: i,
                lhs: g_alpha_subordinated(model, alpha, &x, &y, panel).abs(),
                envelope: riesz_envelope(alpha, model.dim, r),
            });
        }
    }
    out
}

/// Fits `|G_α(x,y)| <= C · envelope(d(x,y))` over `r in [r_min, D_M]`, then repeats with half the
/// quadrature panel width and a doubled grid.
pub fn verify_riesz_bound(
    model: &ManifoldModel<f64>,
    alpha: f64,
    r_min: f64,
    points: usize,
) -> Result<RieszReport> {
    if alpha <= 0.0 || r_min <= 0.0 || points < 2 {
        return Err(Error::InvalidInput(
            "Riesz sweep needs alpha > 0, r_min > 0 and two radii".into(),
        ));
    }
    let radii = log_space(r_min, model.diameter, points);
    let envelope = fit_validate(&riesz_samples(model, alpha, &radii, 0.5), 0.1);
    let fine_radii = log_space(r_min, model.diameter, 2 * points - 1);
    let refined_constant = riesz_samples(model, alpha, &fine_radii, 0.25)
        .iter()
        .map(|s| s.lhs / s.envelope)
        .fold(f64::NEG_INFINITY, f64::max);
    let c = envelope.fitted_constant.max(envelope.validation_constant);
    Ok(RieszReport {
        envelope,
        refined_constant,
        refinement_change: (refined_constant / c - 1.0).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn circle_diagonal_is_pi_over_six() {
        let b = SpectralBasis::new(ManifoldModel::<f64>::circle(), 64).unwrap();
        let spec = NoiseSpec::new(1.0, 0.0, 1).unwrap();
        let x = Point::circle(0.7);
        let g = covariance(&b, &spec, &x, &x).unwrap();
        assert!((g - PI / 6.0).abs() < 1e-10, "{g}");
    }

    #[test]
    fn diagonal_refused_below_half_dimension() {
        let b = SpectralBasis::new(ManifoldModel::<f64>::sphere(), 8).unwrap();
        let spec = NoiseSpec::new(1.0, 0.0, 2).unwrap();
        let x = Point::sphere(0.3, 0.3);
        assert!(matches!(
            covariance(&b, &spec, &x, &x),
            Err(Error::DivergentDiagonal { .. })
        ));
        assert!(covariance(&b, &spec, &x, &Point::sphere(1.0, 0.3)).is_ok());
    }

    #[test]
    fn sphere_diagonal_tail_converges() {
        let spec = NoiseSpec::new(1.5, 0.0, 2).unwrap();
        let x = Point::sphere(0.2f64, 0.1);
        let a = covariance(
            &SpectralBasis::new(ManifoldModel::sphere(), 16).unwrap(),
            &spec,
            &x,
            &x,
        )
        .unwrap();
        let b = covariance(
            &SpectralBasis::new(ManifoldModel::sphere(), 64).unwrap(),
            &spec,
            &x,
            &x,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn dalang_examples() {
        assert_eq!(
            check_dalang(&ManifoldModel::<f64>::circle(), 0.1),
            (true, 0.6)
        );
        assert!(!check_dalang(&ManifoldModel::<f64>::sphere(), 0.0).0);
        assert_eq!(
            check_dalang(&ManifoldModel::<f64>::flat_torus(), 0.5),
            (true, 0.5)
        );
    }

    #[test]
    fn threshold_for_circle() {
        let model = ManifoldModel::<f64>::circle();
        let b = SpectralBasis::new(model, 10_000).unwrap();
        let spec = NoiseSpec::new(1.0, 0.0, 1).unwrap();
        let rho = rho_nonneg_threshold(&b, &spec, &model.make_mesh(64).unwrap());
        assert!((rho - PI * PI / 6.0).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn gram_properties() {
        for (model, band, res) in [
            (ManifoldModel::<f64>::circle(), 16, 40),
            (ManifoldModel::flat_torus(), 4, 12),
            (ManifoldModel::sphere(), 6, 10),
        ] {
            let b = SpectralBasis::new(model, band).unwrap();
            let mesh = model.make_mesh(res).unwrap();
            let spec = NoiseSpec::new(1.25, 0.0, model.dim).unwrap();
            let rho = rho_nonneg_threshold(&b, &spec, &mesh);
            let k = CovarianceKernel::new(&b, NoiseSpec { rho, ..spec }, &mesh);
            assert!(k.max_row_sum() < 1e-8, "{:?}", model.kind);
            assert!(k.min_eigenvalue() > -1e-10);
            assert!(k.min_entry() > -1e-10);
            assert!(k.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn heat_integral_is_two_to_alpha_times_spectral() {
        let b = SpectralBasis::new(ManifoldModel::<f64>::circle(), 12).unwrap();
        let (x, y) = (Point::circle(0.0), Point::circle(1.1));
        for alpha in [0.5, 1.0, 1.7] {
            let spectral = g_alpha_truncated(&b, alpha, &x, &y);
            let integral = g_alpha_via_heat_integral(&b, alpha, &x, &y);
            assert!(
                (integral - 2f64.powf(alpha) * spectral).abs() < 1e-6,
                "{alpha}: {integral} {spectral}"
            );
        }
    }

    #[test]
    fn sampler_mode_variances() {
        let model = ManifoldModel::<f64>::circle();
        let b = SpectralBasis::new(model, 6).unwrap();
        let mesh = model.make_mesh(32).unwrap();
        let spec = NoiseSpec::new(1.0, 2.0, 1).unwrap();
        let s = NoiseSampler::new(&b, spec, &mesh);
        let phi = b.mode_matrix(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dt = 0.01;
        let n = 20000;
        let (mut s11, mut s12, mut s00) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let f = s.sample_increment(&mut rng, dt).field();
            let proj = |m: usize| {
                (0..mesh.len())
                    .map(|i| mesh.weights[i] * f[i] * phi[(i, m)])
                    .sum::<f64>()
            };
            let (p0, p1, p2) = (proj(0), proj(1), proj(2));
            s11 += p1 * p1;
            s12 += p1 * p2;
            s00 += p0 * p0;
        }
        let nf = n as f64;
        assert!((s11 / nf / dt - 1.0).abs() < 0.05);
        assert!((s12 / nf / dt).abs() < 0.05);
        assert!((s00 / nf / dt - 2.0).abs() < 0.1);
    }

    #[test]
    fn subordination_matches_spectral_sum() {
        let c = ManifoldModel::<f64>::circle();
        let b = SpectralBasis::new(c, 64).unwrap();
        let (x, y) = (Point::circle(0.0), Point::circle(2.0));
        let exact = g_alpha_subordinated(&c, 1.0, &x, &y, 0.5);
        // circle α=1: Σ cos(kr)/(πk²) = (π²/6 - πr/2 + r²/4)/π
        let closed = (PI * PI / 6.0 - PI * 2.0 / 2.0 + 1.0) / PI;
        assert!((exact - closed).abs() < 1e-10, "{exact} {closed}");
        assert!((g_alpha_truncated(&b, 1.0, &x, &y) - closed).abs() < 1e-3);
        for model in [ManifoldModel::<f64>::flat_torus(), ManifoldModel::sphere()] {
            let mesh = model.make_mesh(8).unwrap();
            let b = SpectralBasis::new(model, 48).unwrap();
            let (x, y) = (mesh.points[0], mesh.points[5]);
            let exact = g_alpha_subordinated(&model, 2.0, &x, &y, 0.5);
            assert!(
                (exact - g_alpha_truncated(&b, 2.0, &x, &y)).abs() < 1e-5,
                "{model:?}"
            );
        }
    }

    #[test]
    fn riesz_regimes() {
        let c = ManifoldModel::<f64>::circle();
        for alpha in [0.25, 0.5] {
            let r = verify_riesz_bound(&c, alpha, 0.02, 25).unwrap();
            assert!(r.envelope.passed && r.refinement_change < 0.05, "{r:?}");
        }
        let r = verify_riesz_bound(&ManifoldModel::sphere(), 1.5, 0.05, 25).unwrap();
        assert!(r.envelope.passed && r.refinement_change < 0.05, "{r:?}");
    }
}
