//! Laplacian eigenbases, heat kernels, bridge densities and Gaussian comparison functions.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point, QuadratureMesh};
use crate::quadrature::legendre_all;
use crate::scalar::Scalar;
use crate::stats::{fit_validate, EnvelopeReport, EnvelopeSample};

/// Kernel values are trusted only while the neglected spectral tail is below this.
pub const KERNEL_TAIL_TOLERANCE: f64 = 1e-10;
/// Below this time the circle kernel switches to the image sum.
pub const CIRCLE_IMAGE_SUM_TIME: f64 = 0.01;
/// Kernel sweeps skip values smaller than this multiple of their numerical error.
const RESOLVED_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Circle {
        k: usize,
        trig: Trig,
    },
    /// Product of 1D Fourier modes; `j = 0` or `k = 0` carry the constant function.
    Torus {
        j: usize,
        k: usize,
        tj: Trig,
        tk: Trig,
    },
    /// Real spherical harmonic; negative `m` is the sine family.
    Sphere {
        l: usize,
        m: i64,
    },
}

/// Eigenpairs of `-Δ` up to a bandwidth: `k <= K` (circle), `j² + k² <= K²` (torus), `l <= K` (sphere).
#[derive(Clone, Debug)]
pub struct SpectralBasis<T> {
    pub model: ManifoldModel<T>,
    pub bandwidth: usize,
    pub modes: Vec<Mode>,
    pub eigenvalues: Vec<T>,
}

fn trig_pairs(j: usize) -> &'static [Trig] {
    if j == 0 {
        &[Trig::Cos]
    } else {
        &[Trig::Cos, Trig::Sin]
    }
}

impl<T: Scalar> SpectralBasis<T> {
    pub fn new(model: ManifoldModel<T>, bandwidth: usize) -> Result<Self> {
        if bandwidth < 1 {
            return Err(Error::InvalidInput(
                "spectral bandwidth must be >= 1".into(),
            ));
        }
        let mut pairs: Vec<(f64, Mode)> = Vec::new();
        match model.kind {
            ModelKind::Circle => {
                for k in 0..=bandwidth {
                    for &trig in trig_pairs(k) {
                        pairs.push(((k * k) as f64, Mode::Circle { k, trig }));
                    }
                }
            }
            ModelKind::FlatTorus2 => {
                let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
                for j in 0..=bandwidth {
                    for k in 0..=bandwidth {
                        if j * j + k * k > bandwidth * bandwidth {
                            continue;
                        }
                        for &tj in trig_pairs(j) {
                            for &tk in trig_pairs(k) {
                                pairs.push((
                                    four_pi2 * (j * j + k * k) as f64,
                                    Mode::Torus { j, k, tj, tk },
                                ));
                            }
                        }
                    }
                }
            }
            ModelKind::Sphere2 => {
                for l in 0..=bandwidth {
                    for m in -(l as i64)..=(l as i64) {
                        pairs.push(((l * (l + 1)) as f64, Mode::Sphere { l, m }));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(SpectralBasis {
            model,
            bandwidth,
            eigenvalues: pairs.iter().map(|p| T::lit(p.0)).collect(),
            modes: pairs.into_iter().map(|p| p.1).collect(),
        })
    }

    /// Smallest basis whose kernel tail is below `tol` for all `t >= t_min`.
    pub fn for_min_time(model: ManifoldModel<T>, t_min: f64, tol: f64) -> Result<Self> {
        Self::new(model, required_bandwidth(model.kind, t_min, tol))
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn first_nonzero_eigenvalue(&self) -> T {
        self.eigenvalues
            .iter()
            .copied()
            .find(|&l| l > T::zero())
            .unwrap_or(T::zero())
    }

    pub fn eval(&self, n: usize, p: &Point<T>) -> T {
        self.eval_all(p)[n]
    }

    /// All basis functions at one point, in basis order.
    pub fn eval_all(&self, p: &Point<T>) -> Vec<T> {
        let two = T::lit(2.0);
        match *p {
            Point::Circle(theta) => {
                let c0 = T::one() / T::TAU().sqrt();
                let c = T::one() / T::PI().sqrt();
                self.modes
                    .iter()
                    .map(|m| match *m {
                        Mode::Circle { k: 0, .. } => c0,
                        Mode::Circle { k, trig: Trig::Cos } => c * (T::lit(k as f64) * theta).cos(),
                        Mode::Circle { k, trig: Trig::Sin } => c * (T::lit(k as f64) * theta).sin(),
                        _ => unreachable!(),
                    })
                    .collect()
            }
            Point::Torus(u, v) => {
                let b = self.bandwidth;
                let tab = |x: T| {
                    let mut cs = Vec::with_capacity(b + 1);
                    let mut sn = Vec::with_capacity(b + 1);
                    for j in 0..=b {
                        let arg = T::TAU() * T::lit(j as f64) * x;
                        cs.push(if j == 0 {
                            T::one()
                        } else {
                            two.sqrt() * arg.cos()
                        });
                        sn.push(two.sqrt() * arg.sin());
                    }
                    (cs, sn)
                };
                let (cu, su) = tab(u);
                let (cv, sv) = tab(v);
                self.modes
                    .iter()
                    .map(|m| match *m {
                        Mode::Torus { j, k, tj, tk } => {
                            let a = if tj == Trig::Cos { cu[j] } else { su[j] };
                            let b = if tk == Trig::Cos { cv[k] } else { sv[k] };
                            a * b
                        }
                        _ => unreachable!(),
                    })
                    .collect()
            }
            Point::Sphere { colat, lon } => {
                let plm = normalized_legendre_table(self.bandwidth, colat.cos(), colat.sin());
                let l_max = self.bandwidth;
                self.modes
                    .iter()
                    .map(|mode| match *mode {
                        Mode::Sphere { l, m } => {
                            let am = m.unsigned_abs() as usize;
                            let p = plm[table_index(l, am, l_max)];
                            if m == 0 {
                                p
                            } else if m > 0 {
                                two.sqrt() * p * (T::lit(am as f64) * lon).cos()
                            } else {
                                two.sqrt() * p * (T::lit(am as f64) * lon).sin()
                            }
                        }
                        _ => unreachable!(),
                    })
                    .collect()
            }
        }
    }

    /// Neglected kernel tail `sum_{n > N} e^{-λ_n t/2} sup|φ_n|²` summed per eigenspace.
    pub fn tail_bound(&self, t: f64) -> f64 {
        kernel_tail(self.model.kind, self.bandwidth, t)
    }

    /// Heat kernel of `½Δ` from the truncated spectral sum (circle: image sum below `t = 0.01`).
    pub fn heat_kernel(&self, t: T, x: &Point<T>, y: &Point<T>) -> Result<T> {
        if t <= T::zero() {
            return Err(Error::InvalidInput(format!(
                "heat kernel needs t > 0, got {t}"
            )));
        }
        let tf = t.as_f64();
        if self.model.kind == ModelKind::Circle && tf < CIRCLE_IMAGE_SUM_TIME {
            let d = self.model.distance(x, y)?;
            return Ok(circle_image_sum(t, d));
        }
        let tail = self.tail_bound(tf);
        if tail > KERNEL_TAIL_TOLERANCE {
            return Err(Error::Truncation {
                t: tf,
                tail,
                tol: KERNEL_TAIL_TOLERANCE,
                required: required_bandwidth(self.model.kind, tf, KERNEL_TAIL_TOLERANCE),
            });
        }
        Ok(self.heat_kernel_truncated(t, x, y))
    }

    /// The truncated spectral sum itself, without tail checks or fallbacks.
    pub fn heat_kernel_truncated(&self, t: T, x: &Point<T>, y: &Point<T>) -> T {
        let half = T::lit(0.5);
        match (x, y) {
            (Point::Circle(a), Point::Circle(b)) => {
                let delta = *a - *b;
                let mut s = T::zero();
                for k in (1..=self.bandwidth).rev() {
                    let kf = T::lit(k as f64);
                    s += (-kf * kf * t * half).exp() * (kf * delta).cos();
                }
                T::one() / T::TAU() + s / T::PI()
            }
            (Point::Torus(u1, v1), Point::Torus(u2, v2)) => {
                let factors = |delta: T| -> Vec<T> {
                    (0..=self.bandwidth)
                        .map(|j| {
                            let jf = T::lit(j as f64);
                            let w = (-T::lit(2.0) * T::PI() * T::PI() * jf * jf * t).exp();
                            w * (T::TAU() * jf * delta).cos()
                        })
                        .collect()
                };
                let fu = factors(*u1 - *u2);
                let fv = factors(*v1 - *v2);
                // prefix[m] = sum_{|k| <= m} fv[|k|]
                let mut prefix = Vec::with_capacity(self.bandwidth + 1);
                let mut acc = T::zero();
                for (k, &f) in fv.iter().enumerate() {
                    acc += if k == 0 { f } else { f + f };
                    prefix.push(acc);
                }
                let b2 = self.bandwidth * self.bandwidth;
                let mut s = T::zero();
                for (j, &f) in fu.iter().enumerate() {
                    let m = isqrt(b2 - j * j);
                    let term = f * prefix[m];
                    s += if j == 0 { term } else { term + term };
                }
                s
            }
            _ => {
                let d = self.model.distance_unchecked(x, y);
                let p = legendre_all(self.bandwidth, d.cos());
                let mut s = T::zero();
                for l in (0..=self.bandwidth).rev() {
                    let lf = T::lit(l as f64);
                    s += (lf + lf + T::one()) * (-lf * (lf + T::one()) * t * half).exp() * p[l];
                }
                s / (T::lit(4.0) * T::PI())
            }
        }
    }

    /// Brownian-bridge density `P_s(x,z) P_{t-s}(z,y) / P_t(x,y)`.
    pub fn bridge_density(
        &self,
        t: T,
        x: &Point<T>,
        y: &Point<T>,
        s: T,
        z: &Point<T>,
    ) -> Result<T> {
        if !(s > T::zero() && s < t) {
            return Err(Error::InvalidInput(format!(
                "bridge needs 0 < s < t, got s={s}, t={t}"
            )));
        }
        let den = self.heat_kernel(t, x, y)?;
        if den <= T::zero() {
            return Err(Error::DegenerateKernel(format!(
                "P_t(x,y) = {den} is not positive; raise the bandwidth"
            )));
        }
        Ok(self.heat_kernel(s, x, z)? * self.heat_kernel(t - s, z, y)? / den)
    }
}

impl SpectralBasis<f64> {
    /// Mesh-by-mode matrix `Φ[i, n] = φ_n(x_i)`.
    pub fn mode_matrix(&self, mesh: &QuadratureMesh<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(mesh.len(), self.len());
        for (i, p) in mesh.points.iter().enumerate() {
            for (n, v) in self.eval_all(p).into_iter().enumerate() {
                m[(i, n)] = v;
            }
        }
        m
    }

    /// Discrete Gram matrix `Φᵀ W Φ`; the identity when the mesh resolves the band.
    pub fn gram(&self, mesh: &QuadratureMesh<f64>) -> DMatrix<f64> {
        let phi = self.mode_matrix(mesh);
        let mut wphi = phi.clone();
        for (i, &w) in mesh.weights.iter().enumerate() {
            wphi.row_mut(i).scale_mut(w);
        }
        phi.transpose() * wphi
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn table_index(l: usize, m: usize, _l_max: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Orthonormal associated Legendre functions: `p̄_l^m(cos θ) e^{imφ}` is L²(S²)-normalized.
fn normalized_legendre_table<T: Scalar>(l_max: usize, x: T, s: T) -> Vec<T> {
    let mut out = vec![T::zero(); (l_max + 1) * (l_max + 2) / 2];
    let mut pmm = T::one() / (T::lit(4.0) * T::PI()).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = T::lit(m as f64);
            pmm = pmm * ((mf + mf + T::one()) / (mf + mf)).sqrt() * s;
        }
        out[table_index(m, m, l_max)] = pmm;
        if m < l_max {
            let mf = T::lit(m as f64);
            out[table_index(m + 1, m, l_max)] = (mf + mf + T::lit(3.0)).sqrt() * x * pmm;
        }
        for l in (m + 2)..=l_max {
            let lf = T::lit(l as f64);
            let mf = T::lit(m as f64);
            let a = ((T::lit(4.0) * lf * lf - T::one()) / (lf * lf - mf * mf)).sqrt();
            let lm1 = lf - T::one();
            let b = ((lm1 * lm1 - mf * mf) / (T::lit(4.0) * lm1 * lm1 - T::one())).sqrt();
            out[table_index(l, m, l_max)] =
                a * (x * out[table_index(l - 1, m, l_max)] - b * out[table_index(l - 2, m, l_max)]);
        }
    }
    out
}

/// Wrapped-Gaussian heat kernel of `½ d²/dθ²` on the unit circle.
pub fn circle_image_sum<T: Scalar>(t: T, theta: T) -> T {
    let tf = t.as_f64();
    let images = ((2.0 * tf * 50.0).sqrt() / std::f64::consts::TAU).ceil() as i64 + 1;
    let norm = T::one() / (T::TAU() * t).sqrt();
    let mut s = T::zero();
    for j in -images..=images {
        let r = theta + T::TAU() * T::lit(j as f64);
        s += (-(r * r) / (t + t)).exp();
    }
    norm * s
}

/// Sum over eigenspaces beyond the band of `mult · sup|φ|² · e^{-λ t/2}`.
pub fn kernel_tail(kind: ModelKind, bandwidth: usize, t: f64) -> f64 {
    use std::f64::consts::PI;
    let mut tail = 0.0;
    match kind {
        ModelKind::Circle => {
            let mut k = bandwidth + 1;
            loop {
                let term = (-((k * k) as f64) * t / 2.0).exp() / PI;
                tail += term;
                if term < 1e-30 * tail.max(1e-300) || term == 0.0 {
                    break;
                }
                k += 1;
            }
        }
        ModelKind::Sphere2 => {
            let mut l = bandwidth + 1;
            loop {
                let lf = l as f64;
                let term = (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * t / 2.0).exp();
                tail += term;
                if term < 1e-30 * tail.max(1e-300) || term == 0.0 {
                    break;
                }
                l += 1;
            }
        }
        ModelKind::FlatTorus2 => {
            // each lattice point carries sum φ² = 1 on the unit torus
            let rate = 2.0 * PI * PI * t;
            let r_max = bandwidth.max(((80.0 / rate).sqrt()) as usize + 2) + 1;
            let b2 = (bandwidth * bandwidth) as i64;
            for j in -(r_max as i64)..=(r_max as i64) {
                for k in -(r_max as i64)..=(r_max as i64) {
                    let n2 = j * j + k * k;
                    if n2 > b2 {
                        tail += (-rate * n2 as f64).exp();
                    }
                }
            }
        }
    }
    tail
}

/// Smallest bandwidth with `kernel_tail < tol` at time `t`.
pub fn required_bandwidth(kind: ModelKind, t: f64, tol: f64) -> usize {
    let mut b = 1;
    while kernel_tail(kind, b, t) >= tol {
        b = if b < 16 { b + 1 } else { b + b / 8 };
    }
    // walk back to the minimal value after coarse growth
    while b > 1 && kernel_tail(kind, b - 1, t) < tol {
        b -= 1;
    }
    b
}

/// The Gaussian `G^ε_t(r) = t^{-d/2} exp(-r²/((2+ε)t))` and its companion `G̃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianComparison<T> {
    pub epsilon: T,
    pub c_eps: T,
    pub dim: usize,
}

impl<T: Scalar> GaussianComparison<T> {
    pub fn new(epsilon: T, dim: usize) -> Self {
        GaussianComparison {
            epsilon,
            c_eps: T::lit(2.0) + epsilon,
            dim,
        }
    }

    pub fn g(&self, t: T, r: T) -> T {
        t.powf(-T::lit(self.dim as f64) / T::lit(2.0)) * (-(r * r) / (self.c_eps * t)).exp()
    }

    pub fn g_tilde(&self, t: T, r: T) -> T {
        let pre = t.powf(-T::lit((self.dim as f64 - 1.0) / 2.0)).max(T::one());
        pre * self.g(t, r)
    }

    /// `G` or `G̃` depending on the flag.
    pub fn gaussian_g(&self, t: T, r: T, tilde: bool) -> T {
        if tilde {
            self.g_tilde(t, r)
        } else {
            self.g(t, r)
        }
    }
}

/// Which upper bound the kernel sweep checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelBoundForm {
    /// `P_t <= C (G^ε_t(d) + t ∧ 1)`.
    LiYau { epsilon: f64 },
    /// `P_t <= C G̃⁰_t(d)`, meaningful for `t <= 1`.
    SmallTime,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBoundReport {
    pub envelope: EnvelopeReport,
    pub refined_constant: f64,
    pub refinement_change: f64,
    pub stable: bool,
}

fn kernel_bound_samples(
    basis: &SpectralBasis<f64>,
    form: KernelBoundForm,
    times: &[f64],
    mesh: &QuadratureMesh<f64>,
) -> Result<Vec<EnvelopeSample>> {
    let dim = basis.model.dim;
    let x0 = mesh.points[0];
    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut env_at_best = 1.0;
        // pairs whose kernel value is within 1e3 of the truncation and rounding error carry no information
        let diag = basis.heat_kernel(t, &x0, &x0)?;
        let floor = RESOLVED_FACTOR * (basis.tail_bound(t) + 1e-14 * diag);
        for y in &mesh.points {
            let p = basis.heat_kernel(t, &x0, y)?;
            if p < floor {
                continue;
            }
            let d = basis.model.distance_unchecked(&x0, y);
            let env = match form {
                KernelBoundForm::LiYau { epsilon } => {
                    GaussianComparison::new(epsilon, dim).g(t, d) + t.min(1.0)
                }
                KernelBoundForm::SmallTime => GaussianComparison::new(0.0, dim).g_tilde(t, d),
            };
            if p / env > best {
                best = p / env;
                env_at_best = env;
            }
        }
        out.push(EnvelopeSample {
            param_index: i,
            lhs: best * env_at_best,
            envelope: env_at_best,
        });
    }
    Ok(out)
}

/// Sweeps `P_t(x,y)` against the chosen envelope over a time grid and the mesh, fitting the constant
/// on even times and validating on odd ones; repeats on a doubled grid to check stability.
pub fn verify_kernel_bound(
    basis: &SpectralBasis<f64>,
    form: KernelBoundForm,
    times: &[f64],
    mesh_resolution: usize,
    slack: f64,
) -> Result<KernelBoundReport> {
    let mesh = basis.model.make_mesh(mesh_resolution)?;
    let samples = kernel_bound_samples(basis, form, times, &mesh)?;
    let envelope = fit_validate(&samples, slack);

    let mut fine_times = Vec::with_capacity(2 * times.len());
    for w in times.windows(2) {
        fine_times.push(w[0]);
        fine_times.push((w[0] * w[1]).sqrt());
    }
    fine_times.push(*times.last().unwrap());
    let fine_mesh = basis.model.make_mesh(2 * mesh_resolution)?;
    let fine = kernel_bound_samples(basis, form, &fine_times, &fine_mesh)?;
    let refined_constant = fine
        .iter()
        .map(|s| s.lhs / s.envelope)
        .fold(f64::NEG_INFINITY, f64::max);
    let coarse_constant = envelope.fitted_constant.max(envelope.validation_constant);
    let refinement_change = (refined_constant / coarse_constant - 1.0).abs();
    Ok(KernelBoundReport {
        envelope,
        refined_constant,
        refinement_change,
        stable: refinement_change < 0.05,
    })
}

/// Li–Yau sweep with envelope `G^ε_t(d) + t ∧ 1`.
pub fn verify_li_yau(
    basis: &SpectralBasis<f64>,
    epsilon: f64,
    times: &[f64],
    mesh_resolution: usize,
) -> Result<KernelBoundReport> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("Li–Yau sweep needs epsilon > 0".into()));
    }
    verify_kernel_bound(
        basis,
        KernelBoundForm::LiYau { epsilon },
        times,
        mesh_resolution,
        0.1,
    )
}

/// Fits `G̃^{ε'}_t(r) <= C G^ε_t(r)` for `r >= r_min`, `t in (0,1)`; fit on even t, validate on odd t.
pub fn verify_gaussian_domination(
    eps_prime: f64,
    eps: f64,
    dim: usize,
    r_min: f64,
    r_max: f64,
    times: &[f64],
    radii: usize,
) -> EnvelopeReport {
    let lo = GaussianComparison::new(eps_prime, dim);
    let hi = GaussianComparison::new(eps, dim);
    let mut samples = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        for r in crate::quadrature::lin_space(r_min, r_max, radii) {
            samples.push(EnvelopeSample {
                param_index: i,
                lhs: lo.g_tilde(t, r),
                envelope: hi.g(t, r),
            });
        }
    }
    fit_validate(&samples, 0.1)
}
