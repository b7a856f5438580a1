//! Monte-Carlo estimators, comparison tables and allocation grids.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::distributions::Distribution;
use crate::error::{ConfigError, MechanismError};
use crate::exact::{critical_value, CriticalValue};
use crate::market::{fixtures, AuctionInstance};
use crate::mechanism::Mechanism;
use crate::training::{estimate_regret, RegretConfig, RowRegret};

/// An experiment setting such as `U_2` or `LN_8x5`: prior family, bundle
/// count and slot count. Slot `k` (1-based) of `m` has CTR `1 - (k-1)/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub label: String,
    pub prior: Distribution,
    pub n_bundles: usize,
    pub ctrs: Vec<f64>,
}

impl Setting {
    pub fn parse(label: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::BadSetting(label.to_string());
        let (family, shape) = label.split_once('_').ok_or_else(bad)?;
        let prior = match family {
            "U" => Distribution::uniform01(),
            "E" => Distribution::texp2(),
            "N" => Distribution::tnorm(),
            "LN" => Distribution::tlognorm(),
            _ => return Err(bad()),
        };
        let (n, m) = match shape.split_once('x') {
            Some((n, m)) => (n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?),
            None => (shape.parse().map_err(|_| bad())?, 1usize),
        };
        if n == 0 || m == 0 {
            return Err(bad());
        }
        Ok(Self { label: label.to_string(), prior, n_bundles: n, ctrs: ctrs_for(m) })
    }

    pub fn n_slots(&self) -> usize {
        self.ctrs.len()
    }

    /// `count` samples starting at stream `first`.
    pub fn sample(&self, count: usize, seed: u64, first: u64) -> Batch {
        Batch::sample(self.n_bundles, &self.prior, count, seed, first)
    }
}

/// `(1, 1 - 1/m, ..., 1/m)`.
pub fn ctrs_for(m: usize) -> Vec<f64> {
    (0..m).map(|k| 1.0 - k as f64 / m as f64).collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, stderr: 0.0, samples: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            libm::sqrt(var / n as f64)
        } else {
            0.0
        };
        Self { mean, stderr, samples: n }
    }
}

/// Per-sample revenue (payments plus reserve value of unsold clicks).
pub fn revenues(mech: &dyn Mechanism, batch: &Batch, ctrs: &[f64], reserve: f64) -> Result<Vec<f64>, MechanismError> {
    Ok(mech.run_rows(batch, &batch.bids, ctrs, reserve)?.iter().map(|o| o.revenue(ctrs, reserve)).collect())
}

/// Revenue over `samples` fresh graphs and profiles of `setting`.
pub fn mc_revenue(
    mech: &dyn Mechanism,
    setting: &Setting,
    reserve: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate, MechanismError> {
    let batch = setting.sample(samples, seed, 0);
    Ok(Estimate::from_values(&revenues(mech, &batch, &setting.ctrs, reserve)?))
}

/// Aggregated regret over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub samples: usize,
    /// Mean of `sum_i rgt_i / 2n`.
    pub per_bidder_2n: f64,
    /// Mean of `sum_i rgt_i / |R u S|`.
    pub per_bidder_present: f64,
    /// Mean of `sum_i rgt_i`.
    pub bidder_total: f64,
    /// Mean of `sum_e rgt^e`.
    pub bundle_total: f64,
    /// Mean `rgt^e` per edge index.
    pub per_edge: Vec<f64>,
    /// Largest single-bidder gain seen.
    pub max_bidder: f64,
}

impl RegretSummary {
    pub fn from_rows(rows: &[RowRegret], batch: &Batch) -> Self {
        let n = batch.n();
        let count = rows.len().max(1) as f64;
        let mut s = Self {
            samples: rows.len(),
            per_bidder_2n: 0.0,
            per_bidder_present: 0.0,
            bidder_total: 0.0,
            bundle_total: 0.0,
            per_edge: vec![0.0; n],
            max_bidder: 0.0,
        };
        for (r, row) in rows.iter().enumerate() {
            let total: f64 = row.bidder.iter().sum();
            let present = (0..2 * n).filter(|&c| batch.present(r, c)).count();
            s.bidder_total += total / count;
            s.per_bidder_2n += total / (2 * n) as f64 / count;
            s.per_bidder_present += total / present as f64 / count;
            s.bundle_total += row.side.iter().sum::<f64>() / count;
            for e in 0..n {
                s.per_edge[e] += (row.side[e] + row.side[n + e]) / count;
            }
            s.max_bidder = row.bidder.iter().copied().fold(s.max_bidder, f64::max);
        }
        s
    }
}

/// Regret of `mech` over `samples` fresh samples of `setting`.
pub fn mc_regret(
    mech: &dyn Mechanism,
    setting: &Setting,
    reserve: f64,
    samples: usize,
    seed: u64,
    cfg: &RegretConfig,
) -> Result<RegretSummary, MechanismError> {
    let batch = setting.sample(samples, seed, 0);
    let rows = estimate_regret(mech, &batch, &setting.ctrs, reserve, &setting.prior, cfg, crate::rng::derive(seed, 3), 0)?;
    Ok(RegretSummary::from_rows(&rows, &batch))
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub setting: String,
    pub mechanism: String,
    pub revenue: f64,
    pub stderr: f64,
    /// Mean per-bidder regret (`/ 2n`); `None` when not estimated.
    pub regret: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Revenue (and optionally regret on the first `regret_samples` samples) of
/// each mechanism on one shared sample set.
pub fn compare(
    setting: &Setting,
    mechanisms: &[&dyn Mechanism],
    samples: usize,
    seed: u64,
    regret: Option<(&RegretConfig, usize)>,
) -> Result<Vec<TableRow>, MechanismError> {
    let batch = setting.sample(samples, seed, 0);
    let regret_batch = regret.map(|(_, k)| batch.select(&(0..k.min(samples)).collect::<Vec<_>>()));
    mechanisms
        .iter()
        .map(|mech| {
            let est = Estimate::from_values(&revenues(*mech, &batch, &setting.ctrs, 0.0)?);
            let regret = match (regret, &regret_batch) {
                (Some((cfg, _)), Some(rb)) => {
                    let rows = estimate_regret(*mech, rb, &setting.ctrs, 0.0, &setting.prior, cfg, crate::rng::derive(seed, 3), 0)?;
                    Some(RegretSummary::from_rows(&rows, rb).per_bidder_2n)
                }
                _ => None,
            };
            Ok(TableRow {
                setting: setting.label.clone(),
                mechanism: mech.name().to_string(),
                revenue: est.mean,
                stderr: est.stderr,
                regret,
                samples,
                seed,
            })
        })
        .collect()
}

/// Graphs used for allocation-grid exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFixture {
    /// `e1 = (r1, s1)`, `e2 = (r2, s1)`; `s1` fixed, `r1` on x, `r2` on y.
    SharedSupplier,
    /// `e1 = (r1, s1)`, `e2 = (r2, s2)`; `r2 = s2` fixed, `r1` on x, `s1` on y.
    DisjointPairs,
}

impl GridFixture {
    pub fn name(self) -> &'static str {
        match self {
            GridFixture::SharedSupplier => "shared_supplier",
            GridFixture::DisjointPairs => "disjoint_pairs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shared_supplier" => Some(GridFixture::SharedSupplier),
            "disjoint_pairs" => Some(GridFixture::DisjointPairs),
            _ => None,
        }
    }

    /// `(instance, x bidder, y bidder)` with the free bids at `(x, y)`.
    pub fn instance(self, fixed: f64, x: f64, y: f64) -> (AuctionInstance, usize, usize) {
        let (graph, values, xb, yb) = match self {
            // r1, r2, s1
            GridFixture::SharedSupplier => (fixtures::shared_supplier(), vec![x, y, fixed], 0, 1),
            // r1, r2, s1, s2
            GridFixture::DisjointPairs => (fixtures::disjoint_pairs(), vec![x, fixed, y, fixed], 0, 2),
        };
        (AuctionInstance::new(graph, values, vec![1.0], 0.0).expect("fixture instance"), xb, yb)
    }
}

/// Probability that bundle `e1` takes the slot, on a square grid of bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationGrid {
    pub fixture: GridFixture,
    pub fixed: f64,
    /// Grid coordinates, shared by both axes.
    pub axis: Vec<f64>,
    /// `win[iy * len + ix]`.
    pub win: Vec<f64>,
    /// Smallest winning x bid per y row under the exact mechanism; `None`
    /// when no bid in the support wins.
    pub boundary: Option<Vec<Option<f64>>>,
}

impl AllocationGrid {
    pub fn resolution(&self) -> usize {
        self.axis.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.win[iy * self.axis.len() + ix]
    }

    /// Cells where the `>= 0.5` decision differs from `reference`'s.
    pub fn disagreement(&self, reference: &AllocationGrid) -> usize {
        self.win.iter().zip(&reference.win).filter(|(a, b)| (**a >= 0.5) != (**b >= 0.5)).count()
    }
}

/// Evaluates `mech` over a `resolution x resolution` grid on `[0, 1]^2`.
/// With `exact_prior` set the analytic win boundary of the optimal
/// mechanism under that prior is attached.
pub fn allocation_grid(
    mech: &dyn Mechanism,
    fixture: GridFixture,
    fixed: f64,
    resolution: usize,
    exact_prior: Option<&Distribution>,
) -> Result<AllocationGrid, MechanismError> {
    let axis: Vec<f64> = if resolution > 1 {
        (0..resolution).map(|i| i as f64 / (resolution - 1) as f64).collect()
    } else {
        vec![0.0; resolution]
    };
    let mut instances = Vec::with_capacity(resolution * resolution);
    for &y in &axis {
        for &x in &axis {
            instances.push(fixture.instance(fixed, x, y).0);
        }
    }
    let batch = Batch::from_instances(2, &instances)?;
    let outcomes = mech.run_rows(&batch, &batch.bids, &[1.0], 0.0)?;
    let win = outcomes.iter().map(|o| o.allocation(0, 0)).collect();
    let boundary = match exact_prior {
        Some(prior) => Some(
            axis.iter()
                .map(|&y| {
                    let (inst, xb, _) = fixture.instance(fixed, 0.0, y);
                    Ok(match critical_value(&inst, prior, xb)? {
                        CriticalValue::Value(v) => Some(v),
                        CriticalValue::Infeasible => None,
                    })
                })
                .collect::<Result<Vec<_>, MechanismError>>()?,
        ),
        None => None,
    };
    Ok(AllocationGrid { fixture, fixed, axis, win, boundary })
}

/// CSV-ready label such as `shared_supplier@0.25`.
pub fn grid_label(grid: &AllocationGrid) -> String {
    format!("{}@{}", grid.fixture.name(), grid.fixed)
}
