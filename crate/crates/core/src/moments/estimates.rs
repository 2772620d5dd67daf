//! Sampled-sup sweeps of the single and double integral estimates, the `k¹` functions and the
//! structural `L_1` bound. Every "there is a constant" claim becomes a fit on even parameter indices
//! and a validation on odd ones.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point, QuadratureMesh};
use crate::moments::engine::ChaosEngine;
use crate::spectral::GaussianComparison;
use crate::stats::{fit_validate, EnvelopeReport, EnvelopeSample};

/// The family `G^{[n]} = G^{ε_n}` with `ε_n = (1 - 1/n) ε`, plus the bridge quotient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianBoundFamily {
    pub epsilon: f64,
    pub dim: usize,
    /// Scale `D` separating the near and far denominators of the quotient.
    pub scale: f64,
}

impl GaussianBoundFamily {
    pub fn new(epsilon: f64, model: &ManifoldModel<f64>) -> Self {
        GaussianBoundFamily {
            epsilon,
            dim: model.dim,
            scale: model.unique_geodesic_scale(),
        }
    }

    pub fn epsilon_n(&self, n: usize) -> f64 {
        (1.0 - 1.0 / n as f64) * self.epsilon
    }

    pub fn c_n(&self, n: usize) -> f64 {
        2.0 + self.epsilon_n(n)
    }

    pub fn member(&self, n: usize) -> GaussianComparison<f64> {
        GaussianComparison::new(self.epsilon_n(n), self.dim)
    }

    pub fn g(&self, n: usize, t: f64, r: f64) -> f64 {
        self.member(n).g(t, r)
    }

    pub fn g_tilde(&self, n: usize, t: f64, r: f64) -> f64 {
        self.member(n).g_tilde(t, r)
    }

    /// `G^n_{t,x,y}(s,z)` from the three distances.
    pub fn quotient(&self, n: usize, t: f64, s: f64, d_xz: f64, d_zy: f64, d_xy: f64) -> f64 {
        bridge_quotient(&self.member(n), self.scale, t, s, d_xz, d_zy, d_xy)
    }
}

/// `G_s(d(x,z)) G_{t-s}(d(z,y))` over `G_t(d(x,y))` if `d(x,y) < D`, else over `G̃_t(d(x,y))`.
pub fn bridge_quotient(
    g: &GaussianComparison<f64>,
    scale: f64,
    t: f64,
    s: f64,
    d_xz: f64,
    d_zy: f64,
    d_xy: f64,
) -> f64 {
    let den = if d_xy < scale {
        g.g(t, d_xy)
    } else {
        g.g_tilde(t, d_xy)
    };
    g.g(s, d_xz) * g.g(t - s, d_zy) / den
}

/// Mesh quadrature with a precomputed Riesz matrix `R[i,j] = d(x_i,x_j)^{2α-d}`; the diagonal holds
/// the average of `r^{2α-d}` over the equal-volume ball of the cell.
#[derive(Clone, Debug)]
pub struct RieszQuadrature {
    pub model: ManifoldModel<f64>,
    pub mesh: QuadratureMesh<f64>,
    pub exponent: f64,
    riesz: DMatrix<f64>,
    /// `R W 1`.
    riesz_one: DVector<f64>,
}

fn ball_volume_constant(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        d => {
            std::f64::consts::PI.powf(d as f64 / 2.0)
                / statrs::function::gamma::gamma(d as f64 / 2.0 + 1.0)
        }
    }
}

impl RieszQuadrature {
    pub fn new(model: ManifoldModel<f64>, resolution: usize, alpha: f64) -> Result<Self> {
        let mesh = model.make_mesh(resolution)?;
        let dim = model.dim as f64;
        let exponent = 2.0 * alpha - dim;
        if exponent <= -dim {
            return Err(Error::InvalidInput(format!(
                "Riesz exponent {exponent} is not locally integrable in dimension {}",
                model.dim
            )));
        }
        let m = mesh.len();
        let omega = ball_volume_constant(model.dim);
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|j| {
                        if i == j {
                            let r = (mesh.weights[i] / omega).powf(1.0 / dim);
                            dim * r.powf(exponent) / (exponent + dim)
                        } else {
                            model
                                .distance_unchecked(&mesh.points[i], &mesh.points[j])
                                .powf(exponent)
                        }
                    })
                    .collect()
            })
            .collect();
        let riesz = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        let w = DVector::from_column_slice(&mesh.weights);
        let riesz_one = &riesz * &w;
        Ok(RieszQuadrature {
            model,
            mesh,
            exponent,
            riesz,
            riesz_one,
        })
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    /// Typical node spacing `(m₀/M)^{1/d}`.
    pub fn spacing(&self) -> f64 {
        (self.model.volume / self.len() as f64).powf(1.0 / self.model.dim as f64)
    }

    pub fn single(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mesh.weights).map(|(a, w)| a * w).sum()
    }

    /// `∫∫ u(y) d(y,y')^{2α-d} v(y')`.
    pub fn double(&self, u: &[f64], v: &[f64]) -> f64 {
        let wv = DVector::from_iterator(
            v.len(),
            v.iter().zip(&self.mesh.weights).map(|(a, w)| a * w),
        );
        let rv = &self.riesz * wv;
        self.single_against(u, &rv)
    }

    /// `∫∫ u(y) d(y,y')^{2α-d} dy'`.
    pub fn double_with_one(&self, u: &[f64]) -> f64 {
        self.single_against(u, &self.riesz_one)
    }

    fn single_against(&self, u: &[f64], rv: &DVector<f64>) -> f64 {
        u.iter()
            .zip(&self.mesh.weights)
            .zip(rv.iter())
            .map(|((a, w), r)| a * w * r)
            .sum()
    }

    /// `y ↦ d(y, x_k)^{2α-d}` for the mesh node `k`.
    pub fn riesz_to(&self, k: usize) -> Vec<f64> {
        self.riesz.row(k).iter().copied().collect()
    }

    pub fn distances_from(&self, k: usize) -> Vec<f64> {
        let x = self.mesh.points[k];
        self.mesh
            .points
            .iter()
            .map(|y| self.model.distance_unchecked(&x, y))
            .collect()
    }

    pub fn nearest_node(&self, p: &Point<f64>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, y) in self.mesh.points.iter().enumerate() {
            let d = self.model.distance_unchecked(p, y);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Node whose distance from node `k` is closest to `r`.
    pub fn node_at_distance(&self, k: usize, r: f64) -> usize {
        let d = self.distances_from(k);
        let mut best = (f64::INFINITY, k);
        for (i, v) in d.iter().enumerate() {
            if (v - r).abs() < best.0 {
                best = ((v - r).abs(), i);
            }
        }
        best.1
    }
}

/// The ten integral estimates behind the `L_1` bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum IntegralEstimate {
    SingleGauss,
    SingleRiesz,
    SingleGaussRiesz,
    SingleBridge,
    SingleBridgeRiesz,
    DoubleGaussRiesz,
    DoubleGaussRieszGauss,
    DoubleBridgeRiesz,
    DoubleBridgeRieszGauss,
    DoubleBridgeRieszBridge,
}

impl IntegralEstimate {
    pub const ALL: [IntegralEstimate; 10] = [
        IntegralEstimate::SingleGauss,
        IntegralEstimate::SingleRiesz,
        IntegralEstimate::SingleGaussRiesz,
        IntegralEstimate::SingleBridge,
        IntegralEstimate::SingleBridgeRiesz,
        IntegralEstimate::DoubleGaussRiesz,
        IntegralEstimate::DoubleGaussRieszGauss,
        IntegralEstimate::DoubleBridgeRiesz,
        IntegralEstimate::DoubleBridgeRieszGauss,
        IntegralEstimate::DoubleBridgeRieszBridge,
    ];

    pub fn id(self) -> &'static str {
        match self {
            IntegralEstimate::SingleGauss => "integral.single-gauss",
            IntegralEstimate::SingleRiesz => "integral.single-riesz",
            IntegralEstimate::SingleGaussRiesz => "integral.single-gauss-riesz",
            IntegralEstimate::SingleBridge => "integral.single-bridge",
            IntegralEstimate::SingleBridgeRiesz => "integral.single-bridge-riesz",
            IntegralEstimate::DoubleGaussRiesz => "integral.double-gauss-riesz",
            IntegralEstimate::DoubleGaussRieszGauss => "integral.double-gauss-riesz-gauss",
            IntegralEstimate::DoubleBridgeRiesz => "integral.double-bridge-riesz",
            IntegralEstimate::DoubleBridgeRieszGauss => "integral.double-bridge-riesz-gauss",
            IntegralEstimate::DoubleBridgeRieszBridge => "integral.double-bridge-riesz-bridge",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        IntegralEstimate::ALL.iter().copied().find(|e| e.id() == id)
    }

    pub fn is_bridge(self) -> bool {
        matches!(
            self,
            IntegralEstimate::SingleBridge
                | IntegralEstimate::SingleBridgeRiesz
                | IntegralEstimate::DoubleBridgeRiesz
                | IntegralEstimate::DoubleBridgeRieszGauss
                | IntegralEstimate::DoubleBridgeRieszBridge
        )
    }

    /// Right-hand side shape: `1`, `t^{γ/2} + 1` or `(a(1-a)t)^{γ/2} + 1` with `γ = 2α - d`.
    pub fn envelope(self, exponent: f64, t: f64, a: f64) -> f64 {
        match self {
            IntegralEstimate::SingleGaussRiesz | IntegralEstimate::DoubleGaussRieszGauss => {
                t.powf(exponent / 2.0) + 1.0
            }
            IntegralEstimate::SingleBridgeRiesz
            | IntegralEstimate::DoubleBridgeRieszGauss
            | IntegralEstimate::DoubleBridgeRieszBridge => {
                (a * (1.0 - a) * t).powf(exponent / 2.0) + 1.0
            }
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSettings {
    pub alpha: f64,
    /// `ε` of the claim; the integrands use `ε' = epsilon_prime`.
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub mesh_resolution: usize,
    pub refined_resolution: usize,
    pub times: Vec<f64>,
    /// Bridge fractions `a ∈ (0, ½)`.
    pub fractions: Vec<f64>,
    pub tuples: usize,
    pub seed: u64,
    pub slack: f64,
}

impl EstimateSettings {
    pub fn new(alpha: f64, mesh_resolution: usize, refined_resolution: usize, seed: u64) -> Self {
        EstimateSettings {
            alpha,
            epsilon: 1.0,
            epsilon_prime: 0.5,
            mesh_resolution,
            refined_resolution,
            times: vec![],
            fractions: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.45],
            tuples: 12,
            seed,
            slack: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRow {
    pub t: f64,
    pub a: f64,
    pub lhs: f64,
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralEstimateReport {
    pub estimate: String,
    pub model: ModelKind,
    pub rows: Vec<EstimateRow>,
    pub envelope: EnvelopeReport,
    pub refined_constant: f64,
    pub refinement_change: f64,
    pub stable: bool,
}

/// Up to four mesh points per sup-argument: two bridge/base pairs `(a, b)` and `(c, e)`.
#[derive(Clone, Copy, Debug)]
struct Tuple {
    a: Point<f64>,
    b: Point<f64>,
    c: Point<f64>,
    e: Point<f64>,
}

/// Sup-arguments mixing random nodes with structured partners: coincident, at `D/2`, just inside
/// and just outside `D`, and antipodal.
fn sample_tuples(q: &RieszQuadrature, count: usize, seed: u64) -> Vec<Tuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = q.model.unique_geodesic_scale();
    let partner = |k: usize, slot: usize, rng: &mut ChaCha8Rng| -> usize {
        match slot % 6 {
            0 => k,
            1 => q.node_at_distance(k, 0.5 * scale),
            2 => q.node_at_distance(k, 0.95 * scale),
            3 => q.node_at_distance(k, 1.05 * scale),
            4 => q.nearest_node(&q.model.antipode(&q.mesh.points[k])),
            _ => rng.random_range(0..q.len()),
        }
    };
    (0..count)
        .map(|i| {
            let a = rng.random_range(0..q.len());
            let b = partner(a, i, &mut rng);
            let c = if i % 2 == 0 {
                a
            } else {
                rng.random_range(0..q.len())
            };
            let e = partner(c, i / 6 + i, &mut rng);
            Tuple {
                a: q.mesh.points[a],
                b: q.mesh.points[b],
                c: q.mesh.points[c],
                e: q.mesh.points[e],
            }
        })
        .collect()
}

struct Evaluator<'a> {
    q: &'a RieszQuadrature,
    g: GaussianComparison<f64>,
    scale: f64,
}

impl Evaluator<'_> {
    fn gauss(&self, x: &Point<f64>, t: f64) -> Vec<f64> {
        self.q
            .mesh
            .points
            .iter()
            .map(|y| self.g.g(t, self.q.model.distance_unchecked(x, y)))
            .collect()
    }

    fn bridge(&self, x: &Point<f64>, z: &Point<f64>, t: f64, s: f64) -> Vec<f64> {
        let m = &self.q.model;
        let dxz = m.distance_unchecked(x, z);
        self.q
            .mesh
            .points
            .iter()
            .map(|y| {
                bridge_quotient(
                    &self.g,
                    self.scale,
                    t,
                    s,
                    m.distance_unchecked(x, y),
                    m.distance_unchecked(y, z),
                    dxz,
                )
            })
            .collect()
    }

    fn riesz_to(&self, x: &Point<f64>) -> Vec<f64> {
        self.q.riesz_to(self.q.nearest_node(x))
    }

    fn lhs(&self, est: IntegralEstimate, tp: &Tuple, t: f64, a: f64) -> f64 {
        let q = self.q;
        let s = a * t;
        let mul = |u: Vec<f64>, v: Vec<f64>| -> Vec<f64> {
            u.iter().zip(&v).map(|(p, r)| p * r).collect()
        };
        match est {
            IntegralEstimate::SingleGauss => q.single(&self.gauss(&tp.a, t)),
            IntegralEstimate::SingleRiesz => q.single(&self.riesz_to(&tp.a)),
            IntegralEstimate::SingleGaussRiesz => {
                q.single(&mul(self.gauss(&tp.a, t), self.riesz_to(&tp.b)))
            }
            IntegralEstimate::SingleBridge => q.single(&self.bridge(&tp.a, &tp.b, t, s)),
            IntegralEstimate::SingleBridgeRiesz => {
                q.single(&mul(self.bridge(&tp.a, &tp.b, t, s), self.riesz_to(&tp.e)))
            }
            IntegralEstimate::DoubleGaussRiesz => q.double_with_one(&self.gauss(&tp.a, t)),
            IntegralEstimate::DoubleGaussRieszGauss => {
                q.double(&self.gauss(&tp.a, t), &self.gauss(&tp.c, t))
            }
            IntegralEstimate::DoubleBridgeRiesz => {
                q.double_with_one(&self.bridge(&tp.a, &tp.b, t, s))
            }
            IntegralEstimate::DoubleBridgeRieszGauss => q.double(
                &self.bridge(&tp.a, &tp.b, t, s),
                &self.gauss(&tp.c, a * (1.0 - a) * t),
            ),
            IntegralEstimate::DoubleBridgeRieszBridge => q.double(
                &self.bridge(&tp.a, &tp.b, t, s),
                &self.bridge(&tp.c, &tp.e, t, s),
            ),
        }
    }
}

/// Parameter grid `(t, a)`; bridge estimates keep `t <= 1`, `a < ½` and a resolvable `a(1-a)t`.
fn parameter_grid(
    est: IntegralEstimate,
    settings: &EstimateSettings,
    min_time: f64,
) -> Vec<(f64, f64)> {
    if est == IntegralEstimate::SingleRiesz {
        return (0..settings.tuples.max(2)).map(|_| (1.0, 0.0)).collect();
    }
    let times: Vec<f64> = settings
        .times
        .iter()
        .copied()
        .filter(|&t| t >= min_time)
        .collect();
    if !est.is_bridge() {
        return times.into_iter().map(|t| (t, 0.0)).collect();
    }
    let mut out = vec![];
    for &t in times.iter().filter(|&&t| t <= 1.0) {
        for &a in settings.fractions.iter().filter(|&&a| a > 0.0 && a < 0.5) {
            if a * (1.0 - a) * t >= min_time {
                out.push((t, a));
            }
        }
    }
    out
}

fn sweep(
    est: IntegralEstimate,
    q: &RieszQuadrature,
    settings: &EstimateSettings,
    params: &[(f64, f64)],
    tuples: &[Tuple],
) -> Vec<EstimateRow> {
    let ev = Evaluator {
        q,
        g: GaussianComparison::new(settings.epsilon_prime, q.model.dim),
        scale: q.model.unique_geodesic_scale(),
    };
    params
        .par_iter()
        .enumerate()
        .map(|(i, &(t, a))| {
            let lhs = if est == IntegralEstimate::SingleRiesz {
                ev.lhs(est, &tuples[i % tuples.len()], t, a)
            } else {
                tuples
                    .iter()
                    .map(|tp| ev.lhs(est, tp, t, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            EstimateRow {
                t,
                a,
                lhs,
                envelope: est.envelope(q.exponent, t, a),
            }
        })
        .collect()
}

fn rows_to_samples(rows: &[EstimateRow]) -> Vec<EnvelopeSample> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| EnvelopeSample {
            param_index: i,
            lhs: r.lhs,
            envelope: r.envelope,
        })
        .collect()
}

/// Runs one estimate on the base mesh and on the refined mesh.
pub fn verify_integral_estimate(
    model: ManifoldModel<f64>,
    est: IntegralEstimate,
    settings: &EstimateSettings,
) -> Result<IntegralEstimateReport> {
    let q = RieszQuadrature::new(model, settings.mesh_resolution, settings.alpha)?;
    let fine = RieszQuadrature::new(model, settings.refined_resolution, settings.alpha)?;
    verify_with(est, settings, &q, &fine)
}

/// Runs every estimate, sharing the Riesz matrices.
pub fn verify_all_integral_estimates(
    model: ManifoldModel<f64>,
    settings: &EstimateSettings,
) -> Result<Vec<IntegralEstimateReport>> {
    let q = RieszQuadrature::new(model, settings.mesh_resolution, settings.alpha)?;
    let fine = RieszQuadrature::new(model, settings.refined_resolution, settings.alpha)?;
    IntegralEstimate::ALL
        .iter()
        .map(|&e| verify_with(e, settings, &q, &fine))
        .collect()
}

fn verify_with(
    est: IntegralEstimate,
    settings: &EstimateSettings,
    q: &RieszQuadrature,
    fine: &RieszQuadrature,
) -> Result<IntegralEstimateReport> {
    let min_time = (2.0 * q.spacing()).powi(2);
    let params = parameter_grid(est, settings, min_time);
    if params.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: fewer than two parameter points resolvable on the mesh (minimum time {min_time:.3e})",
            est.id()
        )));
    }
    let tuples = sample_tuples(q, settings.tuples, settings.seed);
    let rows = sweep(est, q, settings, &params, &tuples);
    let envelope = fit_validate(&rows_to_samples(&rows), settings.slack);

    let fine_tuples: Vec<Tuple> = tuples
        .iter()
        .map(|tp| {
            let snap = |p: &Point<f64>| fine.mesh.points[fine.nearest_node(p)];
            Tuple {
                a: snap(&tp.a),
                b: snap(&tp.b),
                c: snap(&tp.c),
                e: snap(&tp.e),
            }
        })
        .collect();
    let fine_rows = sweep(est, fine, settings, &params, &fine_tuples);
    let refined_constant = fine_rows
        .iter()
        .map(|r| r.lhs / r.envelope)
        .fold(f64::NEG_INFINITY, f64::max);
    let coarse = envelope.fitted_constant.max(envelope.validation_constant);
    let refinement_change = (refined_constant / coarse - 1.0).abs();
    Ok(IntegralEstimateReport {
        estimate: est.id().to_string(),
        model: q.model.kind,
        rows,
        envelope,
        refined_constant,
        refinement_change,
        stable: refinement_change < 0.05,
    })
}

/// The nine cross terms of `∫∫ R¹ d^{2α-d}`, grouped by the estimate that controls them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct K1Terms {
    pub constant: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub f_f: f64,
    pub f_g: f64,
    pub g_g: f64,
}

impl K1Terms {
    pub fn total(&self) -> f64 {
        self.constant + self.c_f + self.c_g + self.f_f + self.f_g + self.g_g
    }

    /// Estimate controlling each term.
    pub fn controlling_estimates() -> [(&'static str, IntegralEstimate); 6] {
        [
            ("constant", IntegralEstimate::SingleRiesz),
            ("c_f", IntegralEstimate::DoubleGaussRiesz),
            ("c_g", IntegralEstimate::DoubleBridgeRiesz),
            ("f_f", IntegralEstimate::DoubleGaussRieszGauss),
            ("f_g", IntegralEstimate::DoubleBridgeRieszGauss),
            ("g_g", IntegralEstimate::DoubleBridgeRieszBridge),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct K1Row {
    pub s: f64,
    pub k1_l: f64,
    pub k1_s: f64,
    /// Cross terms at the maximizing arguments of `k¹_S`.
    pub terms: K1Terms,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct K1Settings {
    pub alpha: f64,
    pub epsilon: f64,
    pub mesh_resolution: usize,
    pub s_grid: Vec<f64>,
    /// Sampled `t = m s` for the sup over `t >= 2s`.
    pub t_multipliers: Vec<f64>,
    pub tuples: usize,
    pub seed: u64,
    pub slack: f64,
}

impl K1Settings {
    pub fn new(alpha: f64, mesh_resolution: usize, s_grid: Vec<f64>, seed: u64) -> Self {
        K1Settings {
            alpha,
            epsilon: 1.0,
            mesh_resolution,
            s_grid,
            t_multipliers: vec![2.0, 3.0, 5.0, 10.0],
            tuples: 12,
            seed,
            slack: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct K1Report {
    pub model: ModelKind,
    pub c_h: f64,
    pub rows: Vec<K1Row>,
    /// Fit of `k¹_L + k¹_S <= C (1 + s^{(2α-d)/2})`.
    pub envelope: EnvelopeReport,
}

/// Sampled sup of `[G_{t-s}(d(x₀,z))+1][G_s(d(z,x))+1] / [den(x₀,x)+1] - G_{t,x,x₀}(s,z) - f(z)`,
/// the constant `C_H` of the decomposition; never below zero.
pub fn fit_c_h(
    q: &RieszQuadrature,
    family: &GaussianBoundFamily,
    n: usize,
    pairs: &[(f64, f64)],
    seed: u64,
) -> f64 {
    let g = family.member(n);
    let m = &q.model;
    let tuples = sample_tuples(q, 12, seed);
    let mut best = 0.0f64;
    for &(s, t) in pairs {
        for tp in &tuples {
            let (x0, x) = (tp.a, tp.b);
            let d0x = m.distance_unchecked(&x0, &x);
            let den = if d0x < family.scale {
                g.g(t, d0x)
            } else {
                g.g_tilde(t, d0x)
            };
            for z in &q.mesh.points {
                let (d0z, dzx) = (m.distance_unchecked(&x0, z), m.distance_unchecked(z, &x));
                let (a, b) = (g.g(t - s, d0z), g.g(s, dzx));
                let lhs = (a + 1.0) * (b + 1.0) / (den + 1.0);
                let quotient = a * b / den;
                best = best.max(lhs - quotient - (a + b));
            }
        }
    }
    best
}

/// `k¹_L(s)` and `k¹_S(s)` by sampled sup, with `k¹_S` assembled from the product form
/// `R¹ = (G¹(*) + f¹(*) + C_H)(G¹(*') + f¹(*') + C_H)`.
pub fn k1_functions(model: ManifoldModel<f64>, settings: &K1Settings) -> Result<K1Report> {
    let q = RieszQuadrature::new(model, settings.mesh_resolution, settings.alpha)?;
    let family = GaussianBoundFamily::new(settings.epsilon, &model);
    let g1 = family.member(1);
    let min_time = (2.0 * q.spacing()).powi(2);
    let s_grid: Vec<f64> = settings
        .s_grid
        .iter()
        .copied()
        .filter(|&s| s >= min_time)
        .collect();
    if s_grid.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "k¹ sweep needs two s values above {min_time:.3e}"
        )));
    }
    let pairs: Vec<(f64, f64)> = s_grid
        .iter()
        .flat_map(|&s| {
            settings
                .t_multipliers
                .iter()
                .map(move |&m| (s, m.max(2.0) * s))
        })
        .collect();
    let c_h = fit_c_h(&q, &family, 1, &pairs, settings.seed);
    let tuples = sample_tuples(&q, settings.tuples, settings.seed);
    let ones = vec![1.0; q.len()];
    let dist = |p: &Point<f64>| -> Vec<f64> {
        q.mesh
            .points
            .iter()
            .map(|y| model.distance_unchecked(p, y))
            .collect()
    };

    let rows: Vec<K1Row> = s_grid
        .par_iter()
        .map(|&s| {
            let mut k1_l = f64::NEG_INFINITY;
            for tp in &tuples {
                let u: Vec<f64> = dist(&tp.a).iter().map(|r| g1.g(s, *r) + 1.0).collect();
                let v: Vec<f64> = dist(&tp.c).iter().map(|r| g1.g(s, *r) + 1.0).collect();
                k1_l = k1_l.max(q.double(&u, &v));
            }
            let mut k1_s = f64::NEG_INFINITY;
            let mut terms = K1Terms::default();
            for &mult in &settings.t_multipliers {
                let t = mult.max(2.0) * s;
                for tp in &tuples {
                    // (x₀, x) = (a, b), (x₀', x') = (c, e)
                    let parts = |x0: &Point<f64>, x: &Point<f64>| -> (Vec<f64>, Vec<f64>) {
                        let d0x = model.distance_unchecked(x0, x);
                        let (d0, dx) = (dist(x0), dist(x));
                        let gq: Vec<f64> = d0
                            .iter()
                            .zip(&dx)
                            .map(|(a, b)| bridge_quotient(&g1, family.scale, t, s, *b, *a, d0x))
                            .collect();
                        let f: Vec<f64> = d0
                            .iter()
                            .zip(&dx)
                            .map(|(a, b)| g1.g(t - s, *a) + g1.g(s, *b))
                            .collect();
                        (gq, f)
                    };
                    let (gq, f) = parts(&tp.a, &tp.b);
                    let (gqp, fp) = parts(&tp.c, &tp.e);
                    let tt = K1Terms {
                        constant: c_h * c_h * q.double(&ones, &ones),
                        c_f: c_h * (q.double_with_one(&f) + q.double_with_one(&fp)),
                        c_g: c_h * (q.double_with_one(&gq) + q.double_with_one(&gqp)),
                        f_f: q.double(&f, &fp),
                        f_g: q.double(&f, &gqp) + q.double(&gq, &fp),
                        g_g: q.double(&gq, &gqp),
                    };
                    if tt.total() > k1_s {
                        k1_s = tt.total();
                        terms = tt;
                    }
                }
            }
            K1Row {
                s,
                k1_l,
                k1_s,
                terms,
            }
        })
        .collect();
    let exponent = q.exponent;
    let samples: Vec<EnvelopeSample> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| EnvelopeSample {
            param_index: i,
            lhs: r.k1_l + r.k1_s,
            envelope: 1.0 + r.s.powf(exponent / 2.0),
        })
        .collect();
    Ok(K1Report {
        model: model.kind,
        c_h,
        rows,
        envelope: fit_validate(&samples, settings.slack),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L1StructureReport {
    pub times: Vec<f64>,
    /// Sampled max over targets of `L_1 / ([G^{[2]}_t(d(x₀,x))+1][G^{[2]}_t(d(x₀',x'))+1])`.
    pub normalized: Vec<f64>,
    /// `∫₀ᵗ (1 + s^{(2α-d)/2}) ds`.
    pub k1_integral: Vec<f64>,
    pub envelope: EnvelopeReport,
}

/// Checks `L_1(t,x₀,x,x₀',x') <= C [G^{[2]}_t+1][G^{[2]}_t+1] ∫₀ᵗ k¹` with the `k¹` shape
/// `1 + s^{(2α-d)/2}`, over engine output on a time grid and a set of targets.
pub fn verify_l1_structure(
    engine: &ChaosEngine,
    sources: (&Point<f64>, &Point<f64>),
    targets: &[(Point<f64>, Point<f64>)],
    t_max: f64,
    epsilon: f64,
    slack: f64,
) -> Result<L1StructureReport> {
    let model = engine.basis.model;
    let family = GaussianBoundFamily::new(epsilon, &model);
    let c = engine.basis.eval_all(sources.0);
    let cp = engine.basis.eval_all(sources.1);
    let tensors = engine.series(t_max, engine.settings.time_intervals, &c, &cp, 1);
    let l1 = &tensors[1];
    let p = (2.0 * engine.spec.alpha - model.dim as f64) / 2.0;
    let mut times = vec![];
    let mut normalized = vec![];
    let mut k1_integral = vec![];
    // skip the first few nodes, where the truncated kernels are not yet resolved
    let start = l1.times.len() / 8;
    for j in start.max(1)..l1.times.len() {
        let t = l1.times[j];
        let mut best = f64::NEG_INFINITY;
        for (x, xp) in targets {
            let v = engine.evaluate(l1, j, x, xp);
            let den = (family.g(2, t, model.distance_unchecked(sources.0, x)) + 1.0)
                * (family.g(2, t, model.distance_unchecked(sources.1, xp)) + 1.0);
            best = best.max(v / den);
        }
        times.push(t);
        normalized.push(best);
        k1_integral.push(t + t.powf(p + 1.0) / (p + 1.0));
    }
    let samples: Vec<EnvelopeSample> = normalized
        .iter()
        .zip(&k1_integral)
        .enumerate()
        .map(|(i, (l, k))| EnvelopeSample {
            param_index: i,
            lhs: *l,
            envelope: *k,
        })
        .collect();
    Ok(L1StructureReport {
        times,
        normalized,
        k1_integral,
        envelope: fit_validate(&samples, slack),
    })
}
