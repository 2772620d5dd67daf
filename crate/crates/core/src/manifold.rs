//! The three closed models: unit circle, unit flat torus, unit round sphere.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "torus2", alias = "flat_torus_2d")]
    FlatTorus2,
    #[serde(rename = "sphere2", alias = "sphere_2d")]
    Sphere2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Circle, ModelKind::FlatTorus2, ModelKind::Sphere2];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Circle => "circle",
            ModelKind::FlatTorus2 => "torus2",
            ModelKind::Sphere2 => "sphere2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(ModelKind::Circle),
            "torus2" | "flat_torus_2d" => Ok(ModelKind::FlatTorus2),
            "sphere2" | "sphere_2d" => Ok(ModelKind::Sphere2),
            other => Err(Error::InvalidInput(format!(
                "unknown model '{other}' (expected circle, torus2 or sphere2)"
            ))),
        }
    }
}

/// A point in the model's chart, normalized into the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point<T> {
    /// Angle in `[0, 2π)`.
    Circle(T),
    /// Coordinates in `[0, 1)²`.
    Torus(T, T),
    /// Colatitude in `[0, π]`, longitude in `[0, 2π)`.
    Sphere { colat: T, lon: T },
}

fn wrap<T: Scalar>(x: T, period: T) -> T {
    let r = x % period;
    let r = if r < T::zero() { r + period } else { r };
    if r >= period {
        T::zero()
    } else {
        r
    }
}

/// Signed shortest displacement on a circle of the given period, in `[-period/2, period/2)`.
fn signed_wrap<T: Scalar>(delta: T, period: T) -> T {
    let half = period / T::lit(2.0);

    wrap(delta + half, period) - half
}

impl<T: Scalar> Point<T> {
    pub fn circle(theta: T) -> Self {
        Point::Circle(wrap(theta, T::TAU()))
    }

    pub fn torus(u: T, v: T) -> Self {
        Point::Torus(wrap(u, T::one()), wrap(v, T::one()))
    }

    pub fn sphere(colat: T, lon: T) -> Self {
        let pi = T::PI();
        let c = wrap(colat, T::TAU());
        let (colat, lon) = if c > pi {
            (T::TAU() - c, lon + pi)
        } else {
            (c, lon)
        };
        Point::Sphere {
            colat,
            lon: wrap(lon, T::TAU()),
        }
    }

    pub fn from_unit_vector(v: [T; 3]) -> Self {
        let rho = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let colat = rho.atan2(v[2]);
        let lon = v[1].atan2(v[0]);
        Point::Sphere {
            colat,
            lon: wrap(lon, T::TAU()),
        }
    }

    pub fn unit_vector(&self) -> Option<[T; 3]> {
        match *self {
            Point::Sphere { colat, lon } => {
                let s = colat.sin();
                Some([s * lon.cos(), s * lon.sin(), colat.cos()])
            }
            _ => None,
        }
    }

    pub fn coords(&self) -> Vec<T> {
        match *self {
            Point::Circle(t) => vec![t],
            Point::Torus(u, v) => vec![u, v],
            Point::Sphere { colat, lon } => vec![colat, lon],
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Point::Circle(_) => ModelKind::Circle,
            Point::Torus(..) => ModelKind::FlatTorus2,
            Point::Sphere { .. } => ModelKind::Sphere2,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Point<U> {
        let c = |x: T| U::lit(x.as_f64());
        match *self {
            Point::Circle(t) => Point::Circle(c(t)),
            Point::Torus(u, v) => Point::Torus(c(u), c(v)),
            Point::Sphere { colat, lon } => Point::Sphere {
                colat: c(colat),
                lon: c(lon),
            },
        }
    }
}

/// Builds a point of the given model from chart coordinates.
pub fn point_from_coords<T: Scalar>(kind: ModelKind, coords: &[T]) -> Result<Point<T>> {
    match (kind, coords) {
        (ModelKind::Circle, [t]) => Ok(Point::circle(*t)),
        (ModelKind::FlatTorus2, [u, v]) => Ok(Point::torus(*u, *v)),
        (ModelKind::Sphere2, [c, l]) => Ok(Point::sphere(*c, *l)),
        _ => Err(Error::InvalidInput(format!(
            "{kind} expects {} coordinate(s), got {}",
            if kind == ModelKind::Circle { 1 } else { 2 },
            coords.len()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldModel<T> {
    pub kind: ModelKind,
    pub dim: usize,
    pub volume: T,
    pub diameter: T,
    pub injectivity_radius: T,
    pub curvature_upper_bound: T,
}

#[derive(Clone, Debug)]
pub struct QuadratureMesh<T> {
    pub kind: ModelKind,
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
    pub resolution: usize,
}

impl<T: Scalar> QuadratureMesh<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, values: &[T]) -> T {
        self.weights
            .iter()
            .zip(values)
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
    }
}

impl<T: Scalar> ManifoldModel<T> {
    pub fn new(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Circle => Self::circle(),
            ModelKind::FlatTorus2 => Self::flat_torus(),
            ModelKind::Sphere2 => Self::sphere(),
        }
    }

    pub fn circle() -> Self {
        ManifoldModel {
            kind: ModelKind::Circle,
            dim: 1,
            volume: T::TAU(),
            diameter: T::PI(),
            injectivity_radius: T::PI(),
            curvature_upper_bound: T::zero(),
        }
    }

    pub fn flat_torus() -> Self {
        ManifoldModel {
            kind: ModelKind::FlatTorus2,
            dim: 2,
            volume: T::one(),
            diameter: T::FRAC_1_SQRT_2(),
            injectivity_radius: T::lit(0.5),
            curvature_upper_bound: T::zero(),
        }
    }

    pub fn sphere() -> Self {
        ManifoldModel {
            kind: ModelKind::Sphere2,
            dim: 2,
            volume: T::lit(4.0) * T::PI(),
            diameter: T::PI(),
            injectivity_radius: T::PI(),
            curvature_upper_bound: T::one(),
        }
    }

    fn check(&self, p: &Point<T>) -> Result<()> {
        if p.kind() != self.kind {
            return Err(Error::InvalidInput(format!(
                "point of kind {} used with model {}",
                p.kind(),
                self.kind
            )));
        }
        Ok(())
    }

    pub fn distance(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// Distance without the kind check; mismatched kinds panic.
    pub fn distance_unchecked(&self, x: &Point<T>, y: &Point<T>) -> T {
        match (x, y) {
            (Point::Circle(a), Point::Circle(b)) => signed_wrap(*b - *a, T::TAU()).abs(),
            (Point::Torus(a, b), Point::Torus(c, d)) => {
                let du = signed_wrap(*c - *a, T::one());
                let dv = signed_wrap(*d - *b, T::one());
                (du * du + dv * dv).sqrt()
            }
            (Point::Sphere { .. }, Point::Sphere { .. }) => {
                let a = x.unit_vector().unwrap();
                let b = y.unit_vector().unwrap();
                let cross = [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                let sn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                let cs = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                sn.atan2(cs)
            }
            _ => panic!("point kinds do not match"),
        }
    }

    /// Constant-speed minimizing geodesic from `x` (a = 0) to `y` (a = 1).
    pub fn geodesic_point(&self, x: &Point<T>, y: &Point<T>, a: T) -> Result<Point<T>> {
        let d = self.distance(x, y)?;
        if d >= self.injectivity_radius {
            return Err(Error::CutLocus {
                distance: d.as_f64(),
                limit: self.injectivity_radius.as_f64(),
            });
        }
        Ok(match (x, y) {
            (Point::Circle(p), Point::Circle(q)) => {
                Point::circle(*p + a * signed_wrap(*q - *p, T::TAU()))
            }
            (Point::Torus(p1, p2), Point::Torus(q1, q2)) => Point::torus(
                *p1 + a * signed_wrap(*q1 - *p1, T::one()),
                *p2 + a * signed_wrap(*q2 - *p2, T::one()),
            ),
            _ => {
                if d == T::zero() {
                    return Ok(*x);
                }
                let u = x.unit_vector().unwrap();
                let w = y.unit_vector().unwrap();
                let (sd, cd) = (d.sin(), d.cos());
                let mut out = [T::zero(); 3];
                let (sa, ca) = ((a * d).sin(), (a * d).cos());
                for i in 0..3 {
                    let tangent = (w[i] - cd * u[i]) / sd;
                    out[i] = ca * u[i] + sa * tangent;
                }
                Point::from_unit_vector(out)
            }
        })
    }

    pub fn make_mesh(&self, resolution: usize) -> Result<QuadratureMesh<T>> {
        if resolution < 4 {
            return Err(Error::InvalidInput(format!(
                "mesh resolution must be >= 4, got {resolution}"
            )));
        }
        let n = resolution;
        let nf = T::lit(n as f64);
        let (points, weights) = match self.kind {
            ModelKind::Circle => {
                let w = T::TAU() / nf;
                let pts = (0..n)
                    .map(|j| Point::circle(T::TAU() * T::lit(j as f64) / nf))
                    .collect();
                (pts, vec![w; n])
            }
            ModelKind::FlatTorus2 => {
                let w = T::one() / (nf * nf);
                let mut pts = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        pts.push(Point::torus(T::lit(i as f64) / nf, T::lit(j as f64) / nf));
                    }
                }
                (pts, vec![w; n * n])
            }
            ModelKind::Sphere2 => {
                let (z, wz) = gauss_legendre::<T>(n);
                let dphi = T::PI() / nf;
                let mut pts = Vec::with_capacity(2 * n * n);
                let mut ws = Vec::with_capacity(2 * n * n);
                for i in 0..n {
                    let colat = z[n - 1 - i].acos();
                    for j in 0..2 * n {
                        pts.push(Point::Sphere {
                            colat,
                            lon: dphi * T::lit(j as f64),
                        });
                        ws.push(wz[n - 1 - i] * dphi);
                    }
                }
                (pts, ws)
            }
        };
        Ok(QuadratureMesh {
            kind: self.kind,
            points,
            weights,
            resolution,
        })
    }

    /// Scale below which minimizing geodesics are unique and the bridge concentration bound applies.
    pub fn unique_geodesic_scale(&self) -> T {
        let k = if self.curvature_upper_bound > T::zero() {
            self.curvature_upper_bound
        } else {
            T::one()
        };
        let half_inj = self.injectivity_radius / T::lit(2.0);
        let curv = T::PI() / (T::lit(4.0) * k.sqrt());
        half_inj.min(curv)
    }

    /// Uniform sample with respect to the volume measure.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        match self.kind {
            ModelKind::Circle => Point::circle(T::lit(rng.random::<f64>() * std::f64::consts::TAU)),
            ModelKind::FlatTorus2 => {
                Point::torus(T::lit(rng.random::<f64>()), T::lit(rng.random::<f64>()))
            }
            ModelKind::Sphere2 => {
                let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let lon = rng.random::<f64>() * std::f64::consts::TAU;
                Point::sphere(T::lit(z.clamp(-1.0, 1.0).acos()), T::lit(lon))
            }
        }
    }

    /// The point at distance `d(x, y)`-maximal position from `x`, used for antipodal slices.
    pub fn antipode(&self, x: &Point<T>) -> Point<T> {
        match *x {
            Point::Circle(t) => Point::circle(t + T::PI()),
            Point::Torus(u, v) => Point::torus(u + T::lit(0.5), v + T::lit(0.5)),
            Point::Sphere { colat, lon } => Point::sphere(T::PI() - colat, lon + T::PI()),
        }
    }
}
