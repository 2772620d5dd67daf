use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::propagator::Scratch;
use super::Simulator;
use crate::error::{Error, Result};
use crate::manifold::Point;
use crate::measure::InitialMeasure;
use crate::stats::mean_stderr;

/// Fields beyond which a path counts as blown up.
const BLOWUP_LEVEL: f64 = 1e250;

#[derive(Clone, Debug, Default)]
pub struct EnsembleOptions {
    /// Times since the start of the simulation clock; rounded to whole steps.
    pub checkpoints: Vec<f64>,
    pub probes: Vec<Point<f64>>,
    /// Checkpoint indices at which every path keeps its whole field.
    pub snapshots: Vec<usize>,
    /// Mesh values of test functions `φ`; each path records `∫ v φ` at every checkpoint.
    pub test_functions: Vec<Vec<f64>>,
    /// Number of leading paths whose fields are kept at every checkpoint.
    pub dump_paths: usize,
}

/// Noise draws for one path: its own ChaCha stream, so paths can be replayed and coupled.
pub(crate) struct PathNoise {
    rng: ChaCha8Rng,
    xi: Vec<f64>,
    pub fluctuation: Vec<f64>,
    pub scratch: Scratch,
}

impl PathNoise {
    pub fn new(sim: &Simulator, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(sim.config.seed);
        rng.set_stream(path as u64);
        PathNoise {
            rng,
            xi: vec![0.0; sim.sampler.mode_count + 1],
            fluctuation: vec![0.0; sim.mesh.len()],
            scratch: sim.scratch(),
        }
    }

    /// Draws the next increment; returns the constant-mode part.
    pub fn draw(&mut self, sim: &Simulator) -> f64 {
        sim.sampler.draw_normals(&mut self.rng, &mut self.xi);
        sim.sampler
            .increment_from_normals(&self.xi, sim.config.dt, &mut self.fluctuation)
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct PathRecord {
    /// `v` at `[checkpoint * probes + probe]`.
    pub probe: Vec<f64>,
    pub log_z: Vec<f64>,
    pub min_v: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// `∫ v φ` at `[checkpoint * functions + function]`.
    pub integrals: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub negative: u64,
    pub blowup: Option<usize>,
}

/// Moment estimate `E[u(t, x)^p]` at one checkpoint and probe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub time: f64,
    pub probe: usize,
    pub order: u32,
    /// Rao–Blackwellized over the constant mode: `E[Z^p] · mean(v^p)`.
    pub mean: f64,
    pub stderr: f64,
    /// Plain sample mean of `u^p`.
    pub naive_mean: f64,
    pub naive_stderr: f64,
    pub paths: usize,
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub probes: Vec<Point<f64>>,
    pub constant_rate: f64,
    pub paths: usize,
    pub blown_up: usize,
    /// Fraction of (step, node) multipliers `1 + β ΔW'` that were negative.
    pub negative_multiplier_fraction: f64,
    pub(crate) records: Vec<PathRecord>,
    pub(crate) functions: usize,
    pub(crate) snapshot_indices: Vec<usize>,
}

impl PathEnsemble {
    pub fn blowup_fraction(&self) -> f64 {
        self.blown_up as f64 / self.paths as f64
    }

    pub(crate) fn survivors(&self) -> impl Iterator<Item = &PathRecord> {
        self.records.iter().filter(|r| r.blowup.is_none())
    }

    pub fn surviving_paths(&self) -> usize {
        self.survivors().count()
    }

    /// `E[Z_t^p] = exp(p (p-1) β² c² t / 2)`.
    pub fn factor_moment(&self, order: u32, t: f64) -> f64 {
        let p = order as f64;
        (0.5 * p * (p - 1.0) * self.constant_rate * t).exp()
    }

    pub fn v_at(&self, checkpoint: usize, probe: usize) -> Vec<f64> {
        let np = self.probes.len();
        self.survivors()
            .map(|r| r.probe[checkpoint * np + probe])
            .collect()
    }

    pub fn u_at(&self, checkpoint: usize, probe: usize) -> Vec<f64> {
        let np = self.probes.len();
        self.survivors()
            .map(|r| r.probe[checkpoint * np + probe] * r.log_z[checkpoint].exp())
            .collect()
    }

    pub fn moment(&self, order: u32, checkpoint: usize, probe: usize) -> MomentRow {
        let t = self.times[checkpoint];
        let v: Vec<f64> = self
            .v_at(checkpoint, probe)
            .iter()
            .map(|x| x.powi(order as i32))
            .collect();
        let u: Vec<f64> = self
            .u_at(checkpoint, probe)
            .iter()
            .map(|x| x.powi(order as i32))
            .collect();
        let (mv, sv) = mean_stderr(&v);
        let (mu, su) = mean_stderr(&u);
        let f = self.factor_moment(order, t);
        MomentRow {
            time: t,
            probe,
            order,
            mean: f * mv,
            stderr: f * sv,
            naive_mean: mu,
            naive_stderr: su,
            paths: v.len(),
        }
    }

    pub fn moment_table(&self, orders: &[u32]) -> Vec<MomentRow> {
        let mut rows = Vec::new();
        for c in 0..self.times.len() {
            for p in 0..self.probes.len() {
                for &o in orders {
                    rows.push(self.moment(o, c, p));
                }
            }
        }
        rows
    }

    /// Whole fields `u = Z v` at a snapshot checkpoint, one per surviving path.
    pub fn snapshot(&self, checkpoint: usize) -> Option<Vec<Vec<f64>>> {
        let k = self
            .snapshot_indices
            .iter()
            .position(|&c| c == checkpoint)?;
        Some(
            self.survivors()
                .map(|r| {
                    let z = r.log_z[checkpoint].exp();
                    r.snapshots[k].iter().map(|v| v * z).collect()
                })
                .collect(),
        )
    }

    /// `∫ u φ_f` per surviving path at a checkpoint.
    pub fn integrals(&self, checkpoint: usize, function: usize) -> Vec<f64> {
        self.survivors()
            .map(|r| {
                r.integrals[checkpoint * self.functions + function] * r.log_z[checkpoint].exp()
            })
            .collect()
    }

    /// Minimum of `u` over the mesh per surviving path.
    pub fn mesh_minima(&self, checkpoint: usize) -> Vec<f64> {
        self.survivors()
            .map(|r| r.min_v[checkpoint] * r.log_z[checkpoint].exp())
            .collect()
    }

    /// Full fields `u` at every checkpoint for the dumped paths, indexed `[path][checkpoint]`.
    pub fn dumped_fields(&self) -> Vec<Vec<Vec<f64>>> {
        self.records
            .iter()
            .take_while(|r| !r.fields.is_empty())
            .map(|r| {
                r.fields
                    .iter()
                    .zip(&r.log_z)
                    .map(|(f, lz)| f.iter().map(|v| v * lz.exp()).collect())
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn checkpoint_steps(sim: &Simulator, checkpoints: &[f64]) -> Result<Vec<usize>> {
    let total = sim.config.steps();
    let mut steps = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let s = (t / sim.config.dt).round() as usize;
        if s == 0 || s > total {
            return Err(Error::InvalidInput(format!(
                "checkpoint {t} outside (0, {}] on the step grid",
                sim.config.horizon
            )));
        }
        if steps.last().is_some_and(|&l| l >= s) {
            return Err(Error::InvalidInput(format!(
                "checkpoints must be increasing, got {t} after a later one"
            )));
        }
        steps.push(s);
    }
    Ok(steps)
}

/// Runs `paths` independent trajectories; the result does not depend on the thread count.
pub fn simulate_ensemble(
    sim: &Simulator,
    mu: &InitialMeasure,
    opts: &EnsembleOptions,
) -> Result<PathEnsemble> {
    let steps = checkpoint_steps(sim, &opts.checkpoints)?;
    if opts.snapshots.iter().any(|&c| c >= steps.len()) {
        return Err(Error::InvalidInput(
            "snapshot index beyond the checkpoint list".into(),
        ));
    }
    if opts
        .test_functions
        .iter()
        .any(|f| f.len() != sim.mesh.len())
    {
        return Err(Error::InvalidInput(
            "test function length differs from the mesh size".into(),
        ));
    }
    let init = sim.init_state(mu)?;
    let rows: Vec<Vec<f64>> = opts.probes.iter().map(|p| sim.probe_row(p)).collect();
    let weighted: Vec<Vec<f64>> = opts
        .test_functions
        .iter()
        .map(|f| {
            f.iter()
                .zip(&sim.mesh.weights)
                .map(|(a, w)| a * w)
                .collect()
        })
        .collect();
    let records: Vec<PathRecord> = (0..sim.config.paths)
        .into_par_iter()
        .map(|path| run_path(sim, &init, &steps, &rows, &weighted, opts, path))
        .collect();
    let blown_up = records.iter().filter(|r| r.blowup.is_some()).count();
    if blown_up == records.len() {
        let step = records.iter().filter_map(|r| r.blowup).min().unwrap_or(0);
        return Err(Error::Blowup { step });
    }
    let negative: u64 = records.iter().map(|r| r.negative).sum();
    let multipliers =
        (sim.config.paths * steps.last().copied().unwrap_or(0) * sim.mesh.len()) as f64;
    Ok(PathEnsemble {
        times: steps.iter().map(|&s| s as f64 * sim.config.dt).collect(),
        steps,
        probes: opts.probes.clone(),
        constant_rate: sim.constant_rate,
        paths: sim.config.paths,
        blown_up,
        negative_multiplier_fraction: if multipliers > 0.0 {
            negative as f64 / multipliers
        } else {
            0.0
        },
        records,
        functions: opts.test_functions.len(),
        snapshot_indices: opts.snapshots.clone(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn run_path(
    sim: &Simulator,
    init: &[f64],
    steps: &[usize],
    rows: &[Vec<f64>],
    weighted: &[Vec<f64>],
    opts: &EnsembleOptions,
    path: usize,
) -> PathRecord {
    let mut noise = PathNoise::new(sim, path);
    let mut v = init.to_vec();
    let mut log_z = 0.0;
    let mut rec = PathRecord::default();
    let keep_fields = path < opts.dump_paths;
    let mut next = 0;
    let last = steps.last().copied().unwrap_or(0);
    for step in 1..=last {
        let dw0 = noise.draw(sim);
        log_z += sim.log_factor_increment(dw0);
        rec.negative += sim.step_fluctuation(&mut v, &noise.fluctuation, &mut noise.scratch);
        if v.iter().any(|x| !x.is_finite() || x.abs() > BLOWUP_LEVEL) {
            rec.blowup = Some(step);
            return rec;
        }
        if step == steps[next] {
            rec.probe.extend(rows.iter().map(|r| dot(r, &v)));
            rec.log_z.push(log_z);
            rec.min_v
                .push(v.iter().copied().fold(f64::INFINITY, f64::min));
            rec.integrals.extend(weighted.iter().map(|f| dot(f, &v)));
            if opts.snapshots.contains(&next) {
                rec.snapshots.push(v.clone());
            }
            if keep_fields {
                rec.fields.push(v.clone());
            }
            next += 1;
        }
    }
    rec
}
