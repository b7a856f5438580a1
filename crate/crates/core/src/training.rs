//! Bundle regret, misreport ascent and the augmented Lagrangian training loop.
//!
//! Misreports are held per `(sample, edge-side)`: variable `k` of a sample is
//! a report of the bidder owning edge-side `k`, and only that edge-side's
//! utility is credited to it. This realizes the per-bundle maximum of the
//! bundle regret `rgt^e = gain_r^e + gain_s^e`.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::bundlenet::{BundleNet, NetConfig};
use crate::diff::{Adam, AdamConfig, ColumnTable, GatherMap, Tape, Tensor, Var};
use crate::distributions::Distribution;
use crate::error::{ConfigError, MechanismError};
use crate::market::Side;
use crate::mechanism::Mechanism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Training samples `L`.
    pub samples: usize,
    pub test_samples: usize,
    /// Minibatch size `C`.
    pub batch_size: usize,
    pub passes: usize,
    /// Misreport ascent steps `Γ` per minibatch.
    pub misreport_steps: usize,
    /// Misreport step size `γ`.
    pub misreport_lr: f64,
    /// Adam step size `η`.
    pub lr: f64,
    pub rho: f64,
    pub rho_increment: f64,
    pub rho_every_passes: usize,
    /// Multiplier update period `H`, in parameter steps.
    pub mu_period: usize,
    pub mu_init: f64,
    pub width: usize,
    pub hidden_layers: usize,
    /// History row cadence, in parameter steps.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            samples: 20_000,
            test_samples: 5_000,
            batch_size: 128,
            passes: 30,
            misreport_steps: 25,
            misreport_lr: 0.05,
            lr: 1e-3,
            rho: 1.0,
            rho_increment: 1.0,
            rho_every_passes: 2,
            mu_period: 100,
            mu_init: 0.0,
            width: 100,
            hidden_layers: 2,
            log_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = ConfigError::BadTrainConfig;
        if self.samples == 0 || self.batch_size == 0 {
            return Err(bad("samples and batch_size must be positive"));
        }
        if self.misreport_steps == 0 {
            return Err(bad("misreport_steps must be at least 1"));
        }
        if self.mu_period == 0 || self.rho_every_passes == 0 || self.log_every == 0 {
            return Err(bad("periods must be at least 1"));
        }
        let rates = [self.misreport_lr, self.lr, self.rho];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(bad("rates must be positive"));
        }
        if !(self.rho_increment >= 0.0 && self.mu_init >= 0.0) {
            return Err(bad("rho_increment and mu_init must be nonnegative"));
        }
        if self.width == 0 || self.hidden_layers == 0 {
            return Err(bad("network must have a hidden layer"));
        }
        Ok(())
    }

    /// Parameter steps per pass (the last partial minibatch counts).
    pub fn steps_per_pass(&self) -> usize {
        self.samples.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub net: BundleNet,
    pub adam: Adam,
    /// One multiplier per edge.
    pub mu: Vec<f64>,
    pub rho: f64,
    pub step: u64,
    pub pass: u64,
    /// Misreports of the latest minibatch, `rows x 2n`.
    pub misreports: Tensor,
}

impl TrainState {
    pub fn new(net_config: NetConfig, config: &TrainConfig) -> Self {
        let net = BundleNet::init(net_config, crate::rng::derive(config.seed, 1));
        let adam = Adam::new(AdamConfig::default(), net.tensors());
        let n = net.n_bundles();
        Self {
            net,
            adam,
            mu: vec![config.mu_init; n],
            rho: config.rho,
            step: 0,
            pass: 0,
            misreports: Tensor::zeros(0, 2 * n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub pass: u64,
    pub revenue: f64,
    pub mean_regret: f64,
    pub max_edge_regret: f64,
    pub loss: f64,
    pub rho: f64,
}

/// Value, revenue and per-edge regret of the Lagrangian on one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub revenue: f64,
    pub regret: Vec<f64>,
}

/// Batch with one row per `(sample, edge-side)`: the owner's bid is replaced
/// by that misreport. Returns the expanded batch and its bids.
fn expand(batch: &Batch, mis: &Tensor) -> (Batch, Tensor) {
    let w = 2 * batch.n();
    assert_eq!(mis.shape(), [batch.rows(), w], "misreport shape");
    let wide = batch.repeat(w);
    let mut bids = wide.bids.clone();
    for b in 0..batch.rows() {
        for (k, &c) in batch.cols(b).iter().enumerate() {
            bids.set(b * w + k, c as usize, mis.get(b, k));
        }
    }
    (wide, bids)
}

/// `out[0] = in[row % width]` per row.
fn diagonal_select(rows: usize, width: usize) -> GatherMap {
    GatherMap {
        out_cols: 1,
        weights: vec![1.0],
        in_col: ColumnTable::PerRow((0..rows).map(|r| (r % width) as u32).collect()),
        out_col: ColumnTable::Shared(vec![0]),
    }
}

/// `out[e] = in[e] + in[n + e]`.
fn edge_sum(n: usize) -> GatherMap {
    GatherMap {
        out_cols: n,
        weights: vec![1.0; 2 * n],
        in_col: ColumnTable::Shared((0..2 * n as u32).collect()),
        out_col: ColumnTable::Shared((0..2 * n).map(|k| (k % n) as u32).collect()),
    }
}

/// `v_k clicks_k - p_k` for every edge-side.
fn record_side_utility(tape: &mut Tape, net: &BundleNet, params: &[Var], bids: Var, batch: &Batch, values: &Tensor) -> (Var, Var) {
    let out = net.record(tape, params, bids, batch);
    let v = tape.constant(batch.side_values(values));
    let gross = tape.mul(v, out.clicks);
    (tape.sub(gross, out.payments), out.payments)
}

/// Edge-side utilities (`rows x 2n`) of truthful owners when the mechanism
/// sees `bids`.
pub fn side_utilities(net: &BundleNet, batch: &Batch, bids: &Tensor, values: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, false);
    let b = tape.constant(bids.clone());
    let (u, _) = record_side_utility(&mut tape, net, &params, b, batch, values);
    tape.value(u).clone()
}

/// `sum(mask * u)` over edge-side utilities of owners valued at `values`,
/// and its gradient w.r.t. `bids`.
pub fn utility_gradient(net: &BundleNet, batch: &Batch, bids: &Tensor, values: &Tensor, mask: &Tensor) -> (f64, Tensor) {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, false);
    let b = tape.leaf(bids.clone());
    let (u, _) = record_side_utility(&mut tape, net, &params, b, batch, values);
    let m = tape.constant(mask.clone());
    let weighted = tape.mul(u, m);
    let total = tape.sum_all(weighted);
    let value = tape.value(total).item();
    let mut grads = tape.backward(total);
    (value, grads.take(b).expect("bids are a leaf"))
}

struct Recorded {
    loss: Var,
    revenue: Var,
    regret: Var,
}

fn record_lagrangian(
    tape: &mut Tape,
    net: &BundleNet,
    params: &[Var],
    batch: &Batch,
    mis: &Tensor,
    mu: &[f64],
    rho: f64,
) -> Recorded {
    let (n, rows) = (batch.n(), batch.rows());
    let w = 2 * n;
    let truthful = tape.constant(batch.bids.clone());
    let (u_true, payments) = record_side_utility(tape, net, params, truthful, batch, &batch.bids);
    let (wide, wide_bids) = expand(batch, mis);
    let wide_bids = tape.constant(wide_bids);
    let (u_wide, _) = record_side_utility(tape, net, params, wide_bids, &wide, &wide.bids);
    let u_mis = tape.gather(u_wide, Rc::new(diagonal_select(rows * w, w)));
    let u_mis = tape.reshape(u_mis, rows, w);
    let gain = tape.sub(u_mis, u_true);
    let gain = tape.relu(gain);
    let side_regret = tape.mean_rows(gain);
    let regret = tape.gather(side_regret, Rc::new(edge_sum(n)));

    let total = tape.sum_all(payments);
    let revenue = tape.scale(total, 1.0 / rows.max(1) as f64);
    let mu = tape.constant(Tensor::row(mu.to_vec()));
    let weighted = tape.mul(regret, mu);
    let weighted = tape.sum_all(weighted);
    let sq = tape.square(regret);
    let sq = tape.sum_all(sq);
    let penalty = tape.scale(sq, 0.5 * rho);
    let neg_rev = tape.scale(revenue, -1.0);
    let loss = tape.add(neg_rev, weighted);
    let loss = tape.add(loss, penalty);
    Recorded { loss, revenue, regret }
}

fn terms(tape: &Tape, r: &Recorded) -> LossTerms {
    LossTerms {
        loss: tape.value(r.loss).item(),
        revenue: tape.value(r.revenue).item(),
        regret: tape.value(r.regret).data().to_vec(),
    }
}

/// `-rev + sum_e mu_e rgt^e + rho/2 sum_e (rgt^e)^2` at the given misreports.
pub fn lagrangian_loss(net: &BundleNet, batch: &Batch, mis: &Tensor, mu: &[f64], rho: f64) -> LossTerms {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, false);
    let r = record_lagrangian(&mut tape, net, &params, batch, mis, mu, rho);
    terms(&tape, &r)
}

/// Loss terms plus the gradient for every parameter tensor.
pub fn lagrangian_grad(net: &BundleNet, batch: &Batch, mis: &Tensor, mu: &[f64], rho: f64) -> (LossTerms, Vec<Tensor>) {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, true);
    let r = record_lagrangian(&mut tape, net, &params, batch, mis, mu, rho);
    let mut grads = tape.backward(r.loss);
    let g = params
        .iter()
        .zip(net.tensors())
        .map(|(&p, t)| grads.take(p).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    (terms(&tape, &r), g)
}

/// Per-edge regret at the supplied misreports: mean over the batch of the
/// positive parts of both sides' utility gains.
pub fn bundle_regret(net: &BundleNet, batch: &Batch, mis: &Tensor) -> Vec<f64> {
    lagrangian_loss(net, batch, mis, &vec![0.0; batch.n()], 0.0).regret
}

/// `steps` projected gradient-ascent steps on `x`, each coordinate clamped
/// to `[lo, hi]`.
pub fn gradient_ascent(
    x: &mut [f64],
    steps: usize,
    lr: f64,
    lo: f64,
    hi: f64,
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
) {
    for _ in 0..steps {
        let g = grad(x);
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi = (*xi + lr * gi).clamp(lo, hi);
        }
    }
}

/// Gradient of each misreport's own edge-side utility.
fn misreport_gradient(net: &BundleNet, batch: &Batch, mis: &Tensor) -> Tensor {
    let w = 2 * batch.n();
    let (wide, wide_bids) = expand(batch, mis);
    let mut tape = Tape::new();
    let params = net.register(&mut tape, false);
    let bids = tape.leaf(wide_bids);
    let (u, _) = record_side_utility(&mut tape, net, &params, bids, &wide, &wide.bids);
    let target = tape.gather(u, Rc::new(diagonal_select(wide.rows(), w)));
    let total = tape.sum_all(target);
    let grads = tape.backward(total);
    let g = grads.get(bids).expect("bids are a leaf");
    let mut out = Tensor::zeros(batch.rows(), w);
    for b in 0..batch.rows() {
        for (k, &c) in batch.cols(b).iter().enumerate() {
            out.set(b, k, g.get(b * w + k, c as usize));
        }
    }
    out
}

/// `steps` ascent steps of size `lr` on every misreport variable, clamped to
/// the prior's support.
pub fn misreport_ascent(net: &BundleNet, batch: &Batch, mis: &mut Tensor, steps: usize, lr: f64, prior: &Distribution) {
    let (lo, hi) = prior.support();
    let rows = mis.rows();
    let cols = mis.cols();
    gradient_ascent(mis.data_mut(), steps, lr, lo, hi, |x| {
        let current = Tensor::from_vec(rows, cols, x.to_vec());
        misreport_gradient(net, batch, &current).into_data()
    });
}

/// Fresh uniform misreports over the prior's support.
pub fn init_misreports<R: rand::Rng + ?Sized>(rows: usize, n: usize, prior: &Distribution, rng: &mut R) -> Tensor {
    let (lo, hi) = prior.support();
    Tensor::from_vec(rows, 2 * n, (0..rows * 2 * n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// One minibatch of training: misreport ascent, one Adam
/// step, and a multiplier update every `mu_period` steps.
pub fn train_step<R: rand::Rng + ?Sized>(
    state: &mut TrainState,
    config: &TrainConfig,
    batch: &Batch,
    prior: &Distribution,
    rng: &mut R,
) -> LossTerms {
    let mut mis = init_misreports(batch.rows(), batch.n(), prior, rng);
    misreport_ascent(&state.net, batch, &mut mis, config.misreport_steps, config.misreport_lr, prior);
    let (terms, grads) = lagrangian_grad(&state.net, batch, &mis, &state.mu, state.rho);
    state.adam.step(state.net.tensors_mut(), &grads, config.lr);
    state.step += 1;
    if state.step.is_multiple_of(config.mu_period as u64) {
        let regret = bundle_regret(&state.net, batch, &mis);
        for (m, r) in state.mu.iter_mut().zip(regret) {
            *m += state.rho * r;
        }
    }
    state.misreports = mis;
    terms
}

/// Full training run over `data`. `observe` sees the state after every pass
/// together with the history so far.
pub fn train(
    net_config: NetConfig,
    config: &TrainConfig,
    data: &Batch,
    prior: &Distribution,
    mut observe: impl FnMut(&TrainState, &[HistoryRow]),
) -> Result<(TrainState, Vec<HistoryRow>), ConfigError> {
    config.validate()?;
    if net_config.n_bundles != data.n() {
        return Err(ConfigError::BadTrainConfig("network and data disagree on the bundle count"));
    }
    let mut state = TrainState::new(net_config, config);
    let mut rng = crate::rng::seeded(crate::rng::derive(config.seed, 2));
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.rows()).collect();
    for pass in 0..config.passes {
        state.pass = pass as u64;
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select(chunk);
            let t = train_step(&mut state, config, &batch, prior, &mut rng);
            if state.step.is_multiple_of(config.log_every as u64) {
                history.push(HistoryRow {
                    step: state.step,
                    pass: pass as u64,
                    revenue: t.revenue,
                    mean_regret: t.regret.iter().sum::<f64>() / t.regret.len() as f64,
                    max_edge_regret: t.regret.iter().copied().fold(0.0, f64::max),
                    loss: t.loss,
                    rho: state.rho,
                });
            }
        }
        if (pass + 1) % config.rho_every_passes == 0 {
            state.rho += config.rho_increment;
        }
        state.pass = pass as u64 + 1;
        observe(&state, &history);
    }
    Ok((state, history))
}

/// Search budget of the evaluation-time regret estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretConfig {
    /// Evenly spaced misreports per bidder over the support, endpoints included.
    pub grid: usize,
    /// Random restarts of ascent on each bidder's total utility.
    pub restarts: usize,
    pub steps: usize,
    pub lr: f64,
    /// Also ascend every edge-side utility from its best grid point.
    pub side_ascent: bool,
    /// Upper bound on rows per forward pass.
    pub chunk_rows: usize,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self { grid: 101, restarts: 10, steps: 200, lr: 0.05, side_ascent: true, chunk_rows: 4096 }
    }
}

/// Regret of one sample. Entries of absent bidders are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRegret {
    /// Whole-utility gain per bid column.
    pub bidder: Vec<f64>,
    /// Bundle-utility gain per edge-side.
    pub side: Vec<f64>,
}

/// One evaluation point: `row`'s bids with column `col` replaced by `bid`.
#[derive(Debug, Clone, Copy)]
struct Probe {
    row: usize,
    col: usize,
    bid: f64,
}

fn probe_batch(batch: &Batch, probes: &[Probe]) -> (Batch, Tensor) {
    let rows: Vec<usize> = probes.iter().map(|p| p.row).collect();
    let sub = batch.select(&rows);
    let mut bids = sub.bids.clone();
    for (i, p) in probes.iter().enumerate() {
        bids.set(i, p.col, p.bid);
    }
    (sub, bids)
}

/// Edge-side utilities of truthful owners at every probe.
fn probe_utilities(
    mech: &dyn Mechanism,
    batch: &Batch,
    probes: &[Probe],
    ctrs: &[f64],
    reserve: f64,
    chunk: usize,
) -> Result<Tensor, MechanismError> {
    let n = batch.n();
    let mut out = Vec::with_capacity(probes.len() * 2 * n);
    for part in probes.chunks(chunk.max(1)) {
        let (sub, bids) = probe_batch(batch, part);
        if let Some(net) = mech.network() {
            out.extend_from_slice(side_utilities(net, &sub, &bids, &sub.bids).data());
            continue;
        }
        let outcomes = mech.run_rows(&sub, &bids, ctrs, reserve)?;
        let values = sub.side_values(&sub.bids);
        for (r, o) in outcomes.iter().enumerate() {
            for k in 0..2 * n {
                let side = if k < n { Side::Retailer } else { Side::Supplier };
                out.push(o.bundle_utility(k % n, side, values.get(r, k), ctrs));
            }
        }
    }
    Ok(Tensor::from_vec(probes.len(), 2 * n, out))
}

/// Ascends each probe's bid on `sum_k mask[i, k] u_k`, clamped to `[lo, hi]`.
fn probe_ascent(net: &BundleNet, batch: &Batch, probes: &mut [Probe], mask: &Tensor, cfg: &RegretConfig, lo: f64, hi: f64) {
    let w = 2 * batch.n();
    for (ci, part) in probes.chunks_mut(cfg.chunk_rows.max(1)).enumerate() {
        let base = ci * cfg.chunk_rows.max(1);
        let rows: Vec<usize> = (base..base + part.len()).collect();
        let mask = Tensor::from_vec(part.len(), w, rows.iter().flat_map(|&r| mask.row_slice(r).to_vec()).collect());
        for _ in 0..cfg.steps {
            let (sub, bids) = probe_batch(batch, part);
            let (_, g) = utility_gradient(net, &sub, &bids, &sub.bids, &mask);
            for (i, p) in part.iter_mut().enumerate() {
                p.bid = (p.bid + cfg.lr * g.get(i, p.col)).clamp(lo, hi);
            }
        }
    }
}

/// Conservative regret estimate for every row of `batch`.
///
/// For each bidder a common candidate set is searched: the grid, then (for
/// differentiable mechanisms) random-restart ascent on the bidder's total
/// utility and ascent on each of its bundle utilities. Both the bidder gain
/// and each bundle gain are maxima over that set, floored at zero, so
/// `sum_i rgt_i <= sum_e rgt^e` holds row by row. Restarts for row `r` draw
/// from stream `first + r` under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_regret(
    mech: &dyn Mechanism,
    batch: &Batch,
    ctrs: &[f64],
    reserve: f64,
    prior: &Distribution,
    cfg: &RegretConfig,
    seed: u64,
    first: u64,
) -> Result<Vec<RowRegret>, MechanismError> {
    let (n, rows) = (batch.n(), batch.rows());
    let w = 2 * n;
    let (lo, hi) = prior.support();
    let truthful: Vec<Probe> = (0..rows).map(|row| Probe { row, col: 0, bid: batch.bids.get(row, 0) }).collect();
    let base = probe_utilities(mech, batch, &truthful, ctrs, reserve, cfg.chunk_rows)?;
    let mut out: Vec<RowRegret> = (0..rows).map(|_| RowRegret { bidder: vec![0.0; w], side: vec![0.0; w] }).collect();
    // best grid bid per edge-side, for the side ascents
    let mut best_grid: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, lo); rows * w];

    let mut absorb = |probes: &[Probe], utils: &Tensor, best_grid: Option<&mut Vec<(f64, f64)>>| {
        let mut best_grid = best_grid;
        for (i, p) in probes.iter().enumerate() {
            let mut total = 0.0;
            for k in batch.sides_of(p.row, p.col) {
                let gain = utils.get(i, k) - base.get(p.row, k);
                total += gain;
                let s = &mut out[p.row].side[k];
                *s = s.max(gain);
                if let Some(bg) = best_grid.as_deref_mut() {
                    let slot = &mut bg[p.row * w + k];
                    if utils.get(i, k) > slot.0 {
                        *slot = (utils.get(i, k), p.bid);
                    }
                }
            }
            let b = &mut out[p.row].bidder[p.col];
            *b = b.max(total);
        }
    };

    let columns: Vec<(usize, usize)> =
        (0..rows).flat_map(|r| (0..w).filter(move |&c| batch.present(r, c)).map(move |c| (r, c))).collect();
    if cfg.grid > 0 {
        let step = if cfg.grid > 1 { (hi - lo) / (cfg.grid - 1) as f64 } else { 0.0 };
        let probes: Vec<Probe> = columns
            .iter()
            .flat_map(|&(row, col)| (0..cfg.grid).map(move |t| Probe { row, col, bid: lo + step * t as f64 }))
            .collect();
        let utils = probe_utilities(mech, batch, &probes, ctrs, reserve, cfg.chunk_rows)?;
        absorb(&probes, &utils, Some(&mut best_grid));
    }

    if let Some(net) = mech.network() {
        if cfg.restarts > 0 && cfg.steps > 0 {
            let mut probes = Vec::with_capacity(columns.len() * cfg.restarts);
            let mut mask = Vec::with_capacity(columns.len() * cfg.restarts * w);
            let mut rngs: Vec<crate::rng::Rng> = (0..rows).map(|r| crate::rng::stream(seed, first + r as u64)).collect();
            for &(row, col) in &columns {
                let owned: Vec<usize> = batch.sides_of(row, col).collect();
                for _ in 0..cfg.restarts {
                    probes.push(Probe { row, col, bid: rngs[row].gen_range(lo..hi) });
                    mask.extend((0..w).map(|k| if owned.contains(&k) { 1.0 } else { 0.0 }));
                }
            }
            let mask = Tensor::from_vec(probes.len(), w, mask);
            probe_ascent(net, batch, &mut probes, &mask, cfg, lo, hi);
            let utils = probe_utilities(mech, batch, &probes, ctrs, reserve, cfg.chunk_rows)?;
            absorb(&probes, &utils, None);
        }
        if cfg.side_ascent && cfg.steps > 0 {
            let mut probes = Vec::with_capacity(rows * w);
            let mut mask = Vec::with_capacity(rows * w * w);
            for row in 0..rows {
                for (k, &c) in batch.cols(row).iter().enumerate() {
                    let (_, start) = best_grid[row * w + k];
                    let start = if cfg.grid > 0 { start } else { batch.bids.get(row, c as usize) };
                    probes.push(Probe { row, col: c as usize, bid: start });
                    mask.extend((0..w).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
            }
            let mask = Tensor::from_vec(probes.len(), w, mask);
            probe_ascent(net, batch, &mut probes, &mask, cfg, lo, hi);
            let utils = probe_utilities(mech, batch, &probes, ctrs, reserve, cfg.chunk_rows)?;
            absorb(&probes, &utils, None);
        }
    }
    for r in &mut out {
        for x in r.bidder.iter_mut().chain(r.side.iter_mut()) {
            *x = x.max(0.0);
        }
    }
    Ok(out)
}

/// Per-bidder-column regret from random-restart ascent on whole utilities,
/// averaged over the batch.
pub fn bidder_regret(
    net: &BundleNet,
    batch: &Batch,
    prior: &Distribution,
    restarts: usize,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Vec<f64> {
    let cfg = RegretConfig { grid: 0, restarts, steps, lr, side_ascent: false, ..RegretConfig::default() };
    let ctrs = net.config.ctrs.clone();
    let rows = estimate_regret(net, batch, &ctrs, 0.0, prior, &cfg, seed, 0).expect("network matches its own batch");
    let mut mean = vec![0.0; 2 * batch.n()];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(&r.bidder) {
            *m += x / rows.len() as f64;
        }
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, m: usize, width: usize, seed: u64) -> (BundleNet, Batch) {
        let ctrs: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / m as f64).collect();
        let net = BundleNet::init(NetConfig { n_bundles: n, ctrs, width, hidden_layers: 2 }, seed);
        let batch = Batch::sample(n, &Distribution::uniform01(), 16, seed + 50, 0);
        (net, batch)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig { misreport_steps: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        let c = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        let c = TrainConfig { mu_period: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        assert_eq!(TrainConfig::default().steps_per_pass(), 157);
    }

    #[test]
    fn toy_ascent_reaches_maximizer() {
        // u(x) = -(x - 0.3)^2, maximizer 0.3
        let mut x = [0.9, 0.0];
        gradient_ascent(&mut x, 200, 0.1, 0.0, 1.0, |x| x.iter().map(|v| -2.0 * (v - 0.3)).collect());
        assert!(x.iter().all(|v| (v - 0.3).abs() < 1e-9));
        let mut y = [0.9];
        gradient_ascent(&mut y, 0, 0.1, 0.0, 1.0, |_| unreachable!());
        assert_eq!(y, [0.9]);
        // maximizer outside the support: clamped at the boundary
        let mut z = [0.5];
        gradient_ascent(&mut z, 100, 0.5, 0.0, 1.0, |x| vec![-2.0 * (x[0] - 3.0)]);
        assert_eq!(z, [1.0]);
    }

    #[test]
    fn ascent_stays_in_support_and_improves() {
        let prior = Distribution::uniform01();
        let (net, batch) = tiny(2, 1, 8, 3);
        let mut rng = crate::rng::seeded(1);
        let mut mis = init_misreports(batch.rows(), 2, &prior, &mut rng);
        let before = bundle_regret(&net, &batch, &mis).iter().sum::<f64>();
        misreport_ascent(&net, &batch, &mut mis, 50, 0.05, &prior);
        assert!(mis.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let after = bundle_regret(&net, &batch, &mis).iter().sum::<f64>();
        assert!(after >= before - 1e-9, "{before} -> {after}");
    }

    #[test]
    fn truthful_misreports_have_zero_regret() {
        let (net, batch) = tiny(3, 2, 6, 4);
        let truthful = batch.side_values(&batch.bids);
        let r = bundle_regret(&net, &batch, &truthful);
        assert!(r.iter().all(|&x| x.abs() < 1e-12));
        let t = lagrangian_loss(&net, &batch, &truthful, &[1.0, 2.0, 3.0], 5.0);
        assert!((t.loss + t.revenue).abs() < 1e-12);
    }

    #[test]
    fn loss_plug_in_arithmetic() {
        let (net, batch) = tiny(2, 1, 6, 5);
        let mut rng = crate::rng::seeded(2);
        let mis = init_misreports(batch.rows(), 2, &Distribution::uniform01(), &mut rng);
        let t = lagrangian_loss(&net, &batch, &mis, &[0.0, 0.0], 2.0);
        let expect = -t.revenue + t.regret.iter().map(|g| g * g).sum::<f64>();
        assert!((t.loss - expect).abs() < 1e-12);
        let t2 = lagrangian_loss(&net, &batch, &mis, &[0.5, 1.5], 0.0);
        let expect = -t2.revenue + 0.5 * t2.regret[0] + 1.5 * t2.regret[1];
        assert!((t2.loss - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (net, batch) = tiny(2, 1, 4, 6);
        let mut rng = crate::rng::seeded(3);
        let mis = init_misreports(batch.rows(), 2, &Distribution::uniform01(), &mut rng);
        let (mu, rho) = ([0.7, 1.3], 4.0);
        let (_, grads) = lagrangian_grad(&net, &batch, &mis, &mu, rho);
        let mut checked = 0;
        for (ti, g) in grads.iter().enumerate() {
            for i in 0..g.len() {
                let h = 1e-6;
                let eval = |delta: f64| {
                    let mut p = net.clone();
                    p.tensors_mut().nth(ti).unwrap().data_mut()[i] += delta;
                    lagrangian_loss(&p, &batch, &mis, &mu, rho).loss
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g.data()[i];
                assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-4), "tensor {ti} entry {i}: {an} vs {fd}");
                checked += 1;
            }
        }
        assert_eq!(checked, net.param_count());
    }

    fn light() -> RegretConfig {
        RegretConfig { grid: 21, restarts: 2, steps: 20, ..RegretConfig::default() }
    }

    #[test]
    fn regret_of_reference_mechanisms() {
        use crate::mechanism::{FixedSlots, Optimal, PayYourBid};
        let prior = Distribution::uniform01();
        let batch = Batch::sample(3, &prior, 40, 8, 0);
        let grid = RegretConfig { grid: 101, ..RegretConfig::default() };
        let opt = Optimal { prior };
        for mech in [&opt as &dyn Mechanism, &FixedSlots] {
            let rows = estimate_regret(mech, &batch, &[1.0], 0.0, &prior, &grid, 0, 0).unwrap();
            let worst = rows.iter().flat_map(|r| r.bidder.iter().chain(&r.side)).fold(0.0, |a: f64, &b| a.max(b));
            assert!(worst < 1e-6, "{}: {worst}", mech.name());
        }
        let rows = estimate_regret(&PayYourBid, &batch, &[1.0], 0.0, &prior, &grid, 0, 0).unwrap();
        let total: f64 = rows.iter().map(|r| r.bidder.iter().sum::<f64>()).sum();
        assert!(total > 0.1);
    }

    #[test]
    fn bidder_regret_bounded_by_bundle_regret() {
        let prior = Distribution::uniform01();
        for seed in 0..6u64 {
            let (net, batch) = tiny(2 + seed as usize % 2, 1 + seed as usize % 2, 6, seed + 20);
            let rows = estimate_regret(&net, &batch, &net.config.ctrs.clone(), 0.0, &prior, &light(), seed, 0).unwrap();
            for r in &rows {
                assert!(r.bidder.iter().sum::<f64>() <= r.side.iter().sum::<f64>() + 1e-12);
            }
        }
    }

    #[test]
    fn estimator_is_chunk_invariant() {
        let prior = Distribution::uniform01();
        let (net, batch) = tiny(2, 2, 5, 31);
        let ctrs = net.config.ctrs.clone();
        let whole = estimate_regret(&net, &batch, &ctrs, 0.0, &prior, &light(), 4, 0).unwrap();
        let small = RegretConfig { chunk_rows: 7, ..light() };
        assert_eq!(estimate_regret(&net, &batch, &ctrs, 0.0, &prior, &small, 4, 0).unwrap(), whole);
        let tail = batch.select(&(10..16).collect::<Vec<_>>());
        assert_eq!(estimate_regret(&net, &tail, &ctrs, 0.0, &prior, &light(), 4, 10).unwrap(), whole[10..]);
        let per_col = bidder_regret(&net, &batch, &prior, 2, 10, 0.05, 1);
        assert_eq!(per_col.len(), 4);
        assert!(per_col.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn smoke_training_is_deterministic() {
        let prior = Distribution::uniform01();
        let config = TrainConfig {
            samples: 200,
            batch_size: 50,
            passes: 12,
            misreport_steps: 3,
            mu_period: 5,
            log_every: 4,
            width: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let data = Batch::sample(2, &prior, config.samples, 1, 0);
        let net = NetConfig { n_bundles: 2, ctrs: vec![1.0], width: 8, hidden_layers: 2 };
        let mut mus = Vec::new();
        let (state, history) = train(net.clone(), &config, &data, &prior, |s, _| mus.push(s.mu.clone())).unwrap();
        assert_eq!(state.step, 48);
        assert_eq!(history.len(), 12);
        assert!(history.iter().all(|h| h.loss.is_finite()));
        assert_eq!(state.rho, 7.0);
        for w in mus.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b >= a));
        }
        let (again, history2) = train(net, &config, &data, &prior, |_, _| ()).unwrap();
        assert_eq!(history, history2);
        assert_eq!(state, again);
    }
}
