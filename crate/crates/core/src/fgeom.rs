//! The three-distance function `F_{a;x,y}(z)` and sampled checks of its lower bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FEvaluation<T> {
    pub a: T,
    pub x: Point<T>,
    pub y: Point<T>,
    pub z: Point<T>,
    pub f_value: T,
    pub r_defect: T,
    pub l_defect: T,
}

/// `(1-a) d(x,z)² + a d(z,y)² - a(1-a) d(x,y)²`.
pub fn f_value<T: Scalar>(
    model: &ManifoldModel<T>,
    a: T,
    x: &Point<T>,
    y: &Point<T>,
    z: &Point<T>,
) -> Result<T> {
    let dxz = model.distance(x, z)?;
    let dzy = model.distance(z, y)?;
    let dxy = model.distance(x, y)?;
    Ok(f_from_distances(a, dxy, dxz, dzy))
}

#[inline]
fn f_from_distances<T: Scalar>(a: T, dxy: T, dxz: T, dzy: T) -> T {
    let b = T::one() - a;
    b * dxz * dxz + a * dzy * dzy - a * b * dxy * dxy
}

/// Time-parametrized form `F_{s,t;x,y}(z) = F_{s/t;x,y}(z) · t / (s(t-s))`.
pub fn f_value_st<T: Scalar>(
    model: &ManifoldModel<T>,
    s: T,
    t: T,
    x: &Point<T>,
    y: &Point<T>,
    z: &Point<T>,
) -> Result<T> {
    if !(s > T::zero() && s < t) {
        return Err(Error::InvalidInput(format!(
            "need 0 < s < t, got s={s}, t={t}"
        )));
    }
    Ok(f_value(model, s / t, x, y, z)? * t / (s * (t - s)))
}

/// `r = d(x,z) - a d(x,y)` and `ℓ = (1-a) d(x,y) - d(y,z)`.
pub fn defects<T: Scalar>(
    model: &ManifoldModel<T>,
    a: T,
    x: &Point<T>,
    y: &Point<T>,
    z: &Point<T>,
) -> Result<(T, T)> {
    let dxy = model.distance(x, y)?;
    let dxz = model.distance(x, z)?;
    let dyz = model.distance(y, z)?;
    Ok((dxz - a * dxy, (T::one() - a) * dxy - dyz))
}

pub fn evaluate<T: Scalar>(
    model: &ManifoldModel<T>,
    a: T,
    x: &Point<T>,
    y: &Point<T>,
    z: &Point<T>,
) -> Result<FEvaluation<T>> {
    let (r, l) = defects(model, a, x, y, z)?;
    Ok(FEvaluation {
        a,
        x: *x,
        y: *y,
        z: *z,
        f_value: f_value(model, a, x, y, z)?,
        r_defect: r,
        l_defect: l,
    })
}

#[inline]
fn decomposition_residual<T: Scalar>(a: T, dxy: T, dxz: T, dzy: T) -> T {
    let b = T::one() - a;
    let r = dxz - a * dxy;
    let l = b * dxy - dzy;
    let two = T::lit(2.0);
    f_from_distances(a, dxy, dxz, dzy) - (two * a * b * dxy * (r - l) + b * r * r + a * l * l)
}

/// `F - [2a(1-a)d(r-ℓ) + (1-a)r² + aℓ²]`; zero on any metric space.
pub fn check_decomposition<T: Scalar>(
    model: &ManifoldModel<T>,
    a: T,
    x: &Point<T>,
    y: &Point<T>,
    z: &Point<T>,
) -> Result<T> {
    let dxy = model.distance(x, y)?;
    let dxz = model.distance(x, z)?;
    let dzy = model.distance(z, y)?;
    Ok(decomposition_residual(a, dxy, dxz, dzy))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlobalBoundReport {
    pub model: ModelKind,
    pub samples: usize,
    /// max of `(d(x,z) - a d(x,y))² - F`.
    pub max_violation: f64,
    pub max_decomposition_residual: f64,
    pub min_f: f64,
    pub min_r_minus_l: f64,
    /// max `|F - r²|` with `y` antipodal to `x`; absent on the torus where it is not an identity.
    pub antipodal_max_deviation: Option<f64>,
}

const CHUNK: usize = 4096;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn sample_a<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    0.01 + 0.98 * rng.random::<f64>()
}

#[derive(Clone, Copy)]
struct Acc {
    violation: f64,
    residual: f64,
    min_f: f64,
    min_rl: f64,
    antipodal: f64,
}

impl Acc {
    fn new() -> Self {
        Acc {
            violation: f64::NEG_INFINITY,
            residual: 0.0,
            min_f: f64::INFINITY,
            min_rl: f64::INFINITY,
            antipodal: 0.0,
        }
    }

    fn merge(self, o: Acc) -> Acc {
        Acc {
            violation: self.violation.max(o.violation),
            residual: self.residual.max(o.residual),
            min_f: self.min_f.min(o.min_f),
            min_rl: self.min_rl.min(o.min_rl),
            antipodal: self.antipodal.max(o.antipodal),
        }
    }
}

/// Samples `(a, x, y, z)` uniformly and records the worst case of the global lower bound
/// `F >= (d(x,z) - a d(x,y))²`, the defect identity, and the antipodal equality case.
pub fn check_global_bound(
    model: &ManifoldModel<f64>,
    samples: usize,
    seed: u64,
) -> GlobalBoundReport {
    let chunks = samples.div_ceil(CHUNK);
    let antipodal_identity = model.kind != ModelKind::FlatTorus2;
    let acc = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = Acc::new();
            let n = CHUNK.min(samples - c * CHUNK);
            for _ in 0..n {
                let a = sample_a(&mut rng);
                let x = model.sample_point(&mut rng);
                let y = model.sample_point(&mut rng);
                let z = model.sample_point(&mut rng);
                let dxy = model.distance_unchecked(&x, &y);
                let dxz = model.distance_unchecked(&x, &z);
                let dzy = model.distance_unchecked(&z, &y);
                let f = f_from_distances(a, dxy, dxz, dzy);
                let r = dxz - a * dxy;
                let l = (1.0 - a) * dxy - dzy;
                acc.violation = acc.violation.max(r * r - f);
                acc.residual = acc
                    .residual
                    .max(decomposition_residual(a, dxy, dxz, dzy).abs());
                acc.min_f = acc.min_f.min(f);
                acc.min_rl = acc.min_rl.min(r - l);
                if antipodal_identity {
                    let ya = model.antipode(&x);
                    let dxy = model.distance_unchecked(&x, &ya);
                    let dzy = model.distance_unchecked(&z, &ya);
                    let f = f_from_distances(a, dxy, dxz, dzy);
                    let r = dxz - a * dxy;
                    acc.antipodal = acc.antipodal.max((f - r * r).abs());
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::new(), Acc::merge);
    GlobalBoundReport {
        model: model.kind,
        samples,
        max_violation: acc.violation,
        max_decomposition_residual: acc.residual,
        min_f: acc.min_f,
        min_r_minus_l: acc.min_rl,
        antipodal_max_deviation: antipodal_identity.then_some(acc.antipodal),
    }
}

/// Where the third point `z` is drawn from when estimating ζ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ZetaSampling {
    /// `z` uniform on the whole manifold.
    Global,
    /// `x`, `y`, `z` all uniform in one geodesic ball of the given radius.
    Local { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaReport {
    pub model: ModelKind,
    pub scale: f64,
    pub sampling: ZetaSampling,
    pub samples_used: usize,
    pub zeta_hat: f64,
    pub max_ratio: f64,
    /// `(lower edge, count)` over `[0, 1.05)` in bins of 0.05; ratios above go to the last bin.
    pub histogram: Vec<(f64, usize)>,
}

const ZETA_EXCLUSION: f64 = 1e-8;

fn sample_ball<R: Rng + ?Sized>(
    model: &ManifoldModel<f64>,
    rng: &mut R,
    c: &Point<f64>,
    radius: f64,
) -> Point<f64> {
    loop {
        let p = model.sample_point(rng);
        if model.distance_unchecked(c, &p) < radius {
            return p;
        }
    }
}

/// Minimum of `F_{a;x,y}(z) / d²(γ_xy(a), z)` over samples with `d(x,y) < scale`.
pub fn estimate_zeta(
    model: &ManifoldModel<f64>,
    scale: f64,
    samples: usize,
    seed: u64,
    sampling: ZetaSampling,
) -> Result<ZetaReport> {
    let limit = model.unique_geodesic_scale();
    if !(scale > 0.0 && scale <= limit + 1e-15) {
        return Err(Error::InvalidInput(format!(
            "scale {scale} must lie in (0, {limit}] for {}",
            model.kind
        )));
    }
    if let ZetaSampling::Local { radius } = sampling {
        if !(radius > 0.0 && 2.0 * radius <= model.injectivity_radius) {
            return Err(Error::InvalidInput(format!(
                "local ball radius {radius} too large"
            )));
        }
    }
    const BINS: usize = 21;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, f64, usize, Vec<usize>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed ^ 0x5a5a_0000_0000, c);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut used = 0;
            let mut hist = vec![0usize; BINS];
            let n = CHUNK.min(samples - c * CHUNK);
            for _ in 0..n {
                let a = sample_a(&mut rng);
                let (x, y, z) = match sampling {
                    ZetaSampling::Global => {
                        let x = model.sample_point(&mut rng);
                        let y = sample_ball(model, &mut rng, &x, scale);
                        (x, y, model.sample_point(&mut rng))
                    }
                    ZetaSampling::Local { radius } => {
                        let centre = model.sample_point(&mut rng);
                        let x = sample_ball(model, &mut rng, &centre, radius);
                        let y = loop {
                            let y = sample_ball(model, &mut rng, &centre, radius);
                            if model.distance_unchecked(&x, &y) < scale {
                                break y;
                            }
                        };
                        (x, y, sample_ball(model, &mut rng, &centre, radius))
                    }
                };
                let g = match model.geodesic_point(&x, &y, a) {
                    Ok(g) => g,
                    Err(_) => continue,
                };
                let dg = model.distance_unchecked(&g, &z);
                if dg < ZETA_EXCLUSION {
                    continue;
                }
                let dxy = model.distance_unchecked(&x, &y);
                let f = f_from_distances(
                    a,
                    dxy,
                    model.distance_unchecked(&x, &z),
                    model.distance_unchecked(&z, &y),
                );
                let ratio = f / (dg * dg);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
                used += 1;
                hist[((ratio.max(0.0) / 0.05) as usize).min(BINS - 1)] += 1;
            }
            (lo, hi, used, hist)
        })
        .collect();
    let mut zeta = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut used = 0;
    let mut hist = vec![0usize; BINS];
    for (lo, hi, u, h) in parts {
        zeta = zeta.min(lo);
        max_ratio = max_ratio.max(hi);
        used += u;
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    Ok(ZetaReport {
        model: model.kind,
        scale,
        sampling,
        samples_used: used,
        zeta_hat: zeta,
        max_ratio,
        histogram: hist
            .into_iter()
            .enumerate()
            .map(|(i, c)| (0.05 * i as f64, c))
            .collect(),
    })
}
