//! Monte Carlo solver for the mild equation with measure initial data, and the experiment drivers
//! built on it.
//!
//! The noise splits into its spatially constant mode and a mean-zero fluctuation. The constant
//! mode commutes with the heat semigroup, so `u = Z v` with the exact lognormal factor
//! `Z_t = exp(β c W⁰_t - β² c² t / 2)`, `c² = ρ/m₀`, and `v` follows the exponential-Euler step
//! `v⁺ = S_Δt[v (1 + β ΔW')]`. The simulation clock starts after the smoothing time `t₀`.

mod dump;
mod ensemble;
mod experiments;
mod propagator;

pub use dump::{decode_trajectories, encode_trajectories, TrajectoryHeader, TRAJECTORY_MAGIC};
pub use ensemble::{simulate_ensemble, EnsembleOptions, MomentRow, PathEnsemble};
pub use experiments::{
    comparison_experiment, estimate_lyapunov, holder_diagnostic, moment_envelope, positivity_probe,
    weak_time_zero_check, ComparisonReport, DefectRow, HolderReport, IncrementRow, LyapunovReport,
    MomentEnvelopeReport, PositivityReport, PositivityRow, TestFunction, WeakTimeZeroReport,
};
pub use propagator::{Propagator, Scratch};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, ModelKind, Point, QuadratureMesh};
use crate::measure::InitialMeasure;
use crate::noise::{check_dalang, NoiseIncrement, NoiseSampler, NoiseSpec};
use crate::spectral::SpectralBasis;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub model: ModelKind,
    pub bandwidth: usize,
    pub noise_bandwidth: usize,
    /// Defaults to the full-band mesh for the heat bandwidth.
    pub mesh_resolution: Option<usize>,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Smoothing time `t₀` of the initial measure.
    pub smoothing: f64,
    pub paths: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let model = ManifoldModel::<f64>::new(self.model);
        let (ok, margin) = check_dalang(&model, self.alpha);
        if !ok {
            return Err(Error::InvalidInput(format!(
                "alpha={} violates the Dalang condition (margin {margin})",
                self.alpha
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.smoothing < self.dt {
            return Err(Error::InvalidInput(format!(
                "smoothing time {} must be at least dt {}",
                self.smoothing, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidInput("paths must be at least 1".into()));
        }
        if self.bandwidth == 0 || self.noise_bandwidth == 0 {
            return Err(Error::InvalidInput("bandwidths must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn default_mesh_resolution(&self) -> usize {
        match self.model {
            ModelKind::Circle | ModelKind::FlatTorus2 => 2 * self.bandwidth + 1,
            ModelKind::Sphere2 => self.bandwidth + 1,
        }
    }
}

/// Everything a path needs: mesh, propagator, noise sampler and probe interpolation rows.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub config: SolverConfig,
    pub model: ManifoldModel<f64>,
    pub basis: SpectralBasis<f64>,
    pub mesh: QuadratureMesh<f64>,
    pub propagator: Propagator,
    pub sampler: NoiseSampler,
    /// `β² ρ / m₀`, the growth rate of `E[Z²]`.
    pub constant_rate: f64,
}

impl Simulator {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let model = ManifoldModel::<f64>::new(config.model);
        let basis = SpectralBasis::new(model, config.bandwidth)?;
        let res = config
            .mesh_resolution
            .unwrap_or_else(|| config.default_mesh_resolution());
        let mesh = model.make_mesh(res)?;
        let spec = NoiseSpec::new(config.alpha, config.rho, model.dim)?;
        let noise_basis = SpectralBasis::new(model, config.noise_bandwidth)?;
        let sampler = NoiseSampler::new(&noise_basis, spec, &mesh);
        let propagator = Propagator::new(&basis, &mesh, config.dt)?;
        let constant_rate = config.beta * config.beta * config.rho / model.volume;
        Ok(Simulator {
            config,
            model,
            basis,
            mesh,
            propagator,
            sampler,
            constant_rate,
        })
    }

    /// `J_μ(t₀, ·)` on the mesh, from the truncated spectral expansion.
    pub fn init_state(&self, mu: &InitialMeasure) -> Result<Vec<f64>> {
        if !(mu.total_mass > 0.0) {
            return Err(Error::InvalidInput(
                "initial measure has zero total mass".into(),
            ));
        }
        Ok(self.heat_field(mu, self.config.smoothing))
    }

    /// `J_μ(t, ·)` on the mesh.
    pub fn heat_field(&self, mu: &InitialMeasure, t: f64) -> Vec<f64> {
        let c = mu.coefficients(&self.basis);
        let decayed: Vec<f64> = c
            .iter()
            .zip(&self.basis.eigenvalues)
            .map(|(v, l)| v * (-l * t / 2.0).exp())
            .collect();
        self.mesh
            .points
            .iter()
            .map(|p| {
                self.basis
                    .eval_all(p)
                    .iter()
                    .zip(&decayed)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `J_μ(t, x)` from the same truncated expansion.
    pub fn heat_value(&self, mu: &InitialMeasure, t: f64, x: &Point<f64>) -> f64 {
        let c = mu.coefficients(&self.basis);
        self.basis
            .eval_all(x)
            .iter()
            .zip(c.iter().zip(&self.basis.eigenvalues))
            .map(|(p, (v, l))| p * v * (-l * t / 2.0).exp())
            .sum()
    }

    /// Row `r` with `r · v = ` the band-limited interpolant of the mesh field `v` at `x`.
    pub fn probe_row(&self, x: &Point<f64>) -> Vec<f64> {
        let phi = self.basis.eval_all(x);
        let modes = self.basis.mode_matrix(&self.mesh);
        let row = DMatrix::from_row_slice(1, phi.len(), &phi) * modes.transpose();
        row.iter()
            .zip(&self.mesh.weights)
            .map(|(a, w)| a * w)
            .collect()
    }

    /// The literal full-noise step `u⁺ = S_Δt[u (1 + β ΔW)]`.
    pub fn step(&self, state: &mut [f64], inc: &NoiseIncrement, scratch: &mut Scratch) {
        let b = self.config.beta;
        for (u, f) in state.iter_mut().zip(&inc.fluctuation) {
            *u *= 1.0 + b * (f + inc.constant);
        }
        self.propagator.apply(state, scratch);
    }

    /// The fluctuation step `v⁺ = S_Δt[v (1 + β ΔW')]`; returns how many multipliers were negative.
    pub fn step_fluctuation(
        &self,
        state: &mut [f64],
        fluctuation: &[f64],
        scratch: &mut Scratch,
    ) -> u64 {
        let b = self.config.beta;
        let mut negative = 0;
        for (u, f) in state.iter_mut().zip(fluctuation) {
            let m = 1.0 + b * f;
            if m < 0.0 {
                negative += 1;
            }
            *u *= m;
        }
        self.propagator.apply(state, scratch);
        negative
    }

    /// Increment of `ln Z` over one step for the constant-mode increment `ΔW⁰`.
    pub fn log_factor_increment(&self, constant: f64) -> f64 {
        let b = self.config.beta;
        b * constant - 0.5 * self.constant_rate * self.config.dt
    }

    pub fn scratch(&self) -> Scratch {
        self.propagator.scratch()
    }
}

#[cfg(test)]
mod tests;
