use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::manifold::{ModelKind, QuadratureMesh};
use crate::spectral::SpectralBasis;

/// The discrete heat semigroup `S_Δt` acting on mesh fields.
#[derive(Clone)]
pub enum Propagator {
    /// Full-band odd uniform circle mesh: multiply DFT coefficients by `e^{-k² Δt / 2}`.
    CircleFft {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
        factors: Vec<f64>,
        scratch_len: usize,
    },
    /// Projection on the basis: `S = Φ diag(e^{-λ Δt / 2}) (W Φ)ᵀ`.
    Spectral {
        phi: DMatrix<f64>,
        wphi_t: DMatrix<f64>,
        decay: DVector<f64>,
    },
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Propagator::CircleFft { factors, .. } => write!(f, "CircleFft(n={})", factors.len()),
            Propagator::Spectral { phi, .. } => {
                write!(f, "Spectral({}x{})", phi.nrows(), phi.ncols())
            }
        }
    }
}

/// Per-path work buffers.
#[derive(Clone, Debug)]
pub struct Scratch {
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    coef: DVector<f64>,
}

impl Propagator {
    pub fn new(basis: &SpectralBasis<f64>, mesh: &QuadratureMesh<f64>, dt: f64) -> Result<Self> {
        let n = mesh.len();
        if basis.model.kind == ModelKind::Circle && n == 2 * basis.bandwidth + 1 {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let factors = (0..n)
                .map(|i| {
                    let k = if i <= n / 2 {
                        i as f64
                    } else {
                        i as f64 - n as f64
                    };
                    (-k * k * dt / 2.0).exp() / n as f64
                })
                .collect();
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            return Ok(Propagator::CircleFft {
                forward,
                inverse,
                factors,
                scratch_len,
            });
        }
        let phi = basis.mode_matrix(mesh);
        let gram = basis.gram(mesh);
        let err = (&gram - DMatrix::identity(gram.nrows(), gram.ncols()))
            .abs()
            .max();
        if err > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "mesh resolution {} does not resolve bandwidth {} (Gram error {err:.2e})",
                mesh.resolution, basis.bandwidth
            )));
        }
        let mut wphi = phi.clone();
        for (i, &w) in mesh.weights.iter().enumerate() {
            wphi.row_mut(i).scale_mut(w);
        }
        let decay = DVector::from_iterator(
            basis.len(),
            basis.eigenvalues.iter().map(|l| (-l * dt / 2.0).exp()),
        );
        Ok(Propagator::Spectral {
            phi,
            wphi_t: wphi.transpose(),
            decay,
        })
    }

    pub fn scratch(&self) -> Scratch {
        match self {
            Propagator::CircleFft {
                factors,
                scratch_len,
                ..
            } => Scratch {
                buf: vec![Complex::default(); factors.len()],
                fft: vec![Complex::default(); *scratch_len],
                coef: DVector::zeros(0),
            },
            Propagator::Spectral { decay, .. } => Scratch {
                buf: Vec::new(),
                fft: Vec::new(),
                coef: DVector::zeros(decay.len()),
            },
        }
    }

    pub fn apply(&self, state: &mut [f64], scratch: &mut Scratch) {
        match self {
            Propagator::CircleFft {
                forward,
                inverse,
                factors,
                ..
            } => {
                for (b, &u) in scratch.buf.iter_mut().zip(state.iter()) {
                    *b = Complex::new(u, 0.0);
                }
                forward.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
                for (b, f) in scratch.buf.iter_mut().zip(factors) {
                    *b *= *f;
                }
                inverse.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
                for (u, b) in state.iter_mut().zip(&scratch.buf) {
                    *u = b.re;
                }
            }
            Propagator::Spectral { phi, wphi_t, decay } => {
                let v = DVector::from_column_slice(state);
                scratch.coef.gemv(1.0, wphi_t, &v, 0.0);
                scratch.coef.component_mul_assign(decay);
                let out = phi * &scratch.coef;
                state.copy_from_slice(out.as_slice());
            }
        }
    }
}
