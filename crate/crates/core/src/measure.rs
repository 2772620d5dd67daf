//! Finite initial measures: Dirac atoms plus an optional density on a quadrature mesh.

use crate::error::{Error, Result};
use crate::manifold::{ModelKind, Point, QuadratureMesh};
use crate::spectral::SpectralBasis;

#[derive(Clone, Debug)]
pub struct InitialMeasure {
    pub atoms: Vec<(Point<f64>, f64)>,
    /// Density values with respect to the volume measure, on the mesh nodes.
    pub density: Option<(QuadratureMesh<f64>, Vec<f64>)>,
    pub total_mass: f64,
}

impl InitialMeasure {
    pub fn new(
        atoms: Vec<(Point<f64>, f64)>,
        density: Option<(QuadratureMesh<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        if let Some((_, m)) = atoms.iter().find(|(_, m)| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "atom masses must be positive and finite, got {m}"
            )));
        }
        let mut total: f64 = atoms.iter().map(|a| a.1).sum();
        if let Some((mesh, values)) = &density {
            if values.len() != mesh.len() {
                return Err(Error::InvalidInput(format!(
                    "density has {} values for a mesh of {} points",
                    values.len(),
                    mesh.len()
                )));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "density must be nonnegative and finite".into(),
                ));
            }
            total += mesh.integrate(values);
        }
        let kinds: Vec<ModelKind> = atoms
            .iter()
            .map(|a| a.0.kind())
            .chain(density.iter().map(|d| d.0.kind))
            .collect();
        if kinds.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidInput(
                "measure mixes points of different models".into(),
            ));
        }
        Ok(InitialMeasure {
            atoms,
            density,
            total_mass: total,
        })
    }

    pub fn dirac(p: Point<f64>) -> Self {
        InitialMeasure {
            atoms: vec![(p, 1.0)],
            density: None,
            total_mass: 1.0,
        }
    }

    /// The volume measure, represented by the constant density 1.
    pub fn volume(mesh: &QuadratureMesh<f64>) -> Self {
        let values = vec![1.0; mesh.len()];
        let total = mesh.integrate(&values);
        InitialMeasure {
            atoms: vec![],
            density: Some((mesh.clone(), values)),
            total_mass: total,
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale must be positive, got {c}"
            )));
        }
        InitialMeasure::new(
            self.atoms.iter().map(|(p, m)| (*p, m * c)).collect(),
            self.density
                .as_ref()
                .map(|(mesh, v)| (mesh.clone(), v.iter().map(|x| x * c).collect())),
        )
    }

    /// Coefficients `∫ φ_n dμ` in the given basis.
    pub fn coefficients(&self, basis: &SpectralBasis<f64>) -> Vec<f64> {
        let mut c = vec![0.0; basis.len()];
        for (p, m) in &self.atoms {
            for (ci, v) in c.iter_mut().zip(basis.eval_all(p)) {
                *ci += m * v;
            }
        }
        if let Some((mesh, values)) = &self.density {
            for ((p, w), d) in mesh.points.iter().zip(&mesh.weights).zip(values) {
                if *d == 0.0 {
                    continue;
                }
                for (ci, v) in c.iter_mut().zip(basis.eval_all(p)) {
                    *ci += w * d * v;
                }
            }
        }
        c
    }

    /// `∫ f dμ` for a function given pointwise.
    pub fn integrate<F: FnMut(&Point<f64>) -> f64>(&self, mut f: F) -> f64 {
        let mut s: f64 = self.atoms.iter().map(|(p, m)| m * f(p)).sum();
        if let Some((mesh, values)) = &self.density {
            for ((p, w), d) in mesh.points.iter().zip(&mesh.weights).zip(values) {
                if *d != 0.0 {
                    s += w * d * f(p);
                }
            }
        }
        s
    }

    /// Whether `self <= other` as measures. Atoms must be matched by atoms of at least equal mass
    /// at the same point; densities are compared node by node on a common mesh.
    pub fn is_dominated_by(&self, other: &InitialMeasure) -> Result<bool> {
        for (p, m) in &self.atoms {
            let matched: f64 = other
                .atoms
                .iter()
                .filter(|(q, _)| q == p)
                .map(|a| a.1)
                .sum();
            if matched < *m {
                return Ok(false);
            }
        }
        match (&self.density, &other.density) {
            (None, _) => Ok(true),
            (Some(_), None) => Ok(false),
            (Some((m1, d1)), Some((m2, d2))) => {
                if m1.len() != m2.len() || m1.points != m2.points {
                    return Err(Error::InvalidInput(
                        "densities live on different meshes".into(),
                    ));
                }
                Ok(d1.iter().zip(d2).all(|(a, b)| a <= b))
            }
        }
    }
}

/// `J_μ(t, x) = ∫ P_t(x, y) μ(dy)`.
pub fn j_mu(
    basis: &SpectralBasis<f64>,
    t: f64,
    x: &Point<f64>,
    mu: &InitialMeasure,
) -> Result<f64> {
    let mut s = 0.0;
    for (p, m) in &mu.atoms {
        s += m * basis.heat_kernel(t, p, x)?;
    }
    if let Some((mesh, values)) = &mu.density {
        for ((p, w), d) in mesh.points.iter().zip(&mesh.weights).zip(values) {
            if *d != 0.0 {
                s += w * d * basis.heat_kernel(t, p, x)?;
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldModel;

    #[test]
    fn j_mu_examples() {
        let model = ManifoldModel::<f64>::circle();
        let b = SpectralBasis::for_min_time(model, 0.1, 1e-10).unwrap();
        let (a, c, x) = (Point::circle(0.0), Point::circle(2.0), Point::circle(0.5));
        let d = j_mu(&b, 0.3, &x, &InitialMeasure::dirac(a)).unwrap();
        assert_eq!(d, b.heat_kernel(0.3, &a, &x).unwrap());
        let mix = InitialMeasure::new(vec![(a, 0.5), (c, 0.5)], None).unwrap();
        let avg = 0.5 * (b.heat_kernel(0.3, &a, &x).unwrap() + b.heat_kernel(0.3, &c, &x).unwrap());
        assert!((j_mu(&b, 0.3, &x, &mix).unwrap() - avg).abs() < 1e-15);
        let vol = InitialMeasure::volume(&model.make_mesh(64).unwrap());
        assert!((j_mu(&b, 0.3, &x, &vol).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ordering() {
        let (a, c) = (Point::circle(0.0), Point::circle(1.0));
        let small = InitialMeasure::dirac(a);
        let big = InitialMeasure::new(vec![(a, 1.0), (c, 1.0)], None).unwrap();
        assert!(small.is_dominated_by(&big).unwrap());
        assert!(!big.is_dominated_by(&small).unwrap());
        assert!(InitialMeasure::new(vec![(a, -1.0)], None).is_err());
    }
}
