//! Data-parallel Monte-Carlo evaluation.
//!
//! Samples are cut into fixed-size chunks; chunk `i` draws streams
//! `i * chunk ..` under the run seed, so the results are identical for any
//! worker count and equal to the sequential estimators in the core crate.

use jointlab_core::batch::Batch;
use jointlab_core::evaluation::Setting;
use jointlab_core::mechanism::Mechanism;
use jointlab_core::outcome::AuctionOutcome;
use jointlab_core::rng;
use jointlab_core::training::{estimate_regret, RegretConfig, RowRegret};
use rayon::prelude::*;

use crate::Error;

pub fn pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn chunks(samples: usize, chunk: usize) -> Vec<(u64, usize)> {
    (0..samples).step_by(chunk.max(1)).map(|start| (start as u64, chunk.min(samples - start))).collect()
}

/// Per-sample revenue, in sample order.
pub fn par_revenues(
    pool: &rayon::ThreadPool,
    mech: &(dyn Mechanism + Sync),
    setting: &Setting,
    reserve: f64,
    samples: usize,
    seed: u64,
    chunk: usize,
) -> Result<Vec<f64>, Error> {
    let parts: Vec<Result<Vec<f64>, Error>> = pool.install(|| {
        chunks(samples, chunk)
            .into_par_iter()
            .map(|(first, len)| {
                let batch = setting.sample(len, seed, first);
                let outcomes = mech.run_rows(&batch, &batch.bids, &setting.ctrs, reserve)?;
                check_outcomes(&batch, &outcomes, setting, reserve, first)?;
                Ok(outcomes.iter().map(|o| o.revenue(&setting.ctrs, reserve)).collect())
            })
            .collect()
    });
    let mut out = Vec::with_capacity(samples);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Feasibility, nonnegative payments and ex-post IR of every outcome.
fn check_outcomes(batch: &Batch, outcomes: &[AuctionOutcome], setting: &Setting, reserve: f64, first: u64) -> Result<(), Error> {
    for (r, o) in outcomes.iter().enumerate() {
        let inst = batch
            .instance(r, &setting.ctrs, reserve)
            .map_err(|e| Error::Invariant(format!("sample {}: {e}", first + r as u64)))?;
        o.check(&inst, 1e-9)
            .map_err(|v| Error::Invariant(format!("sample {}: {v:?}", first + r as u64)))?;
    }
    Ok(())
}

/// Per-sample regret on the first `samples` samples, with the samples
/// themselves.
#[allow(clippy::too_many_arguments)]
pub fn par_regret(
    pool: &rayon::ThreadPool,
    mech: &(dyn Mechanism + Sync),
    setting: &Setting,
    reserve: f64,
    samples: usize,
    seed: u64,
    chunk: usize,
    cfg: &RegretConfig,
) -> Result<(Vec<RowRegret>, Batch), Error> {
    let restart_seed = rng::derive(seed, 3);
    let parts: Vec<Result<(Vec<RowRegret>, Batch), Error>> = pool.install(|| {
        chunks(samples, chunk)
            .into_par_iter()
            .map(|(first, len)| {
                let batch = setting.sample(len, seed, first);
                let rows = estimate_regret(mech, &batch, &setting.ctrs, reserve, &setting.prior, cfg, restart_seed, first)?;
                Ok((rows, batch))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(samples);
    let mut batches = Vec::new();
    for p in parts {
        let (r, b) = p?;
        rows.extend(r);
        batches.push(b);
    }
    if batches.is_empty() {
        batches.push(setting.sample(0, seed, 0));
    }
    Ok((rows, Batch::concat(&batches)))
}
