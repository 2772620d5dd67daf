//! One runner per experiment kind; each fills a [`ResultRecord`].

mod stochastic;
mod verify;

use anyhow::Result;

use crate::config::{Experiment, ExperimentConfig};
use crate::record::ResultRecord;

pub fn run(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(
        &cfg.id,
        cfg.experiment.kind(),
        &cfg.hash_hex(),
        cfg.canonical.clone(),
    );
    let seed = cfg.seed.unwrap_or(0);
    match &cfg.experiment {
        Experiment::VerifyGeometry(p) => verify::geometry(&mut rec, p, seed)?,
        Experiment::VerifyKernels(p) => verify::kernels(&mut rec, p, seed)?,
        Experiment::VerifyNoise(p) => verify::noise(&mut rec, p)?,
        Experiment::VerifyIntegrals(p) => verify::integrals(&mut rec, p, seed)?,
        Experiment::Moments(p) => stochastic::moments(&mut rec, p, seed)?,
        Experiment::Simulate(p) => stochastic::simulate(&mut rec, cfg, p, seed)?,
        Experiment::Intermittency(p) => stochastic::intermittency(&mut rec, p, seed)?,
        Experiment::Compare(p) => stochastic::compare(&mut rec, p, seed)?,
        Experiment::Holder(p) => stochastic::holder(&mut rec, p, seed)?,
        Experiment::Report(p) => crate::report::into_record(&mut rec, &p.directory)?,
    }
    Ok(rec)
}
