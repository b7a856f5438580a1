//! BundleNet: a learned multi-slot joint auction.
//!
//! Bids become per-edge features (`SB^e` stacked, `DB^e` divided). The
//! allocation network maps the flattened `SB` to a hidden code `Y`, then two
//! affine heads give `(n+1) x (m+1)` logits. One is softmaxed along rows, the
//! other down columns, and their cellwise minimum with the dummy row and
//! column trimmed off is the allocation. The payment network maps `DB` to a
//! fraction per edge-side that scales the bidder's allocated value.

use alloc::rc::Rc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::diff::{Activation, ColumnTable, GatherMap, Layer, MlpParams, SoftmaxAxis, Tape, Tensor, Var};
use crate::error::MechanismError;
use crate::market::AuctionInstance;
use crate::outcome::AuctionOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n_bundles: usize,
    pub ctrs: Vec<f64>,
    /// Hidden width, also the width of `Y`.
    pub width: usize,
    /// Hidden layers in each of the two networks.
    pub hidden_layers: usize,
}

impl NetConfig {
    pub fn n_slots(&self) -> usize {
        self.ctrs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleNet {
    pub config: NetConfig,
    pub alloc: MlpParams,
    pub row_head: Layer,
    pub col_head: Layer,
    pub pay: MlpParams,
}

/// Tape handles produced by [`BundleNet::record`].
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// `rows x nm` allocation, edge-major.
    pub alloc: Var,
    /// `rows x 2n` CTR-weighted allocation `x^e . ctr` of each edge-side.
    pub clicks: Var,
    /// `rows x 2n` payment fractions in `[0, 1]`.
    pub fractions: Var,
    /// `rows x 2n` payments.
    pub payments: Var,
}

impl BundleNet {
    pub fn init(config: NetConfig, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed);
        let (n, m, d) = (config.n_bundles, config.n_slots(), config.width);
        let mut widths = alloc::vec![n * m];
        widths.extend(core::iter::repeat_n(d, config.hidden_layers.max(1)));
        let alloc = MlpParams::init(&widths, Activation::Tanh, Activation::Tanh, &mut rng);
        let padded = (n + 1) * (m + 1);
        let row_head = Layer::init(d, padded, Activation::Identity, &mut rng);
        let col_head = Layer::init(d, padded, Activation::Identity, &mut rng);
        widths[0] = 2 * n * m;
        widths.push(2 * n);
        let pay = MlpParams::init(&widths, Activation::Tanh, Activation::Sigmoid, &mut rng);
        Self { config, alloc, row_head, col_head, pay }
    }

    pub fn n_bundles(&self) -> usize {
        self.config.n_bundles
    }

    pub fn n_slots(&self) -> usize {
        self.config.n_slots()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.alloc
            .tensors()
            .chain([&self.row_head.weight, &self.row_head.bias, &self.col_head.weight, &self.col_head.bias])
            .chain(self.pay.tensors())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.alloc
            .tensors_mut()
            .chain([
                &mut self.row_head.weight,
                &mut self.row_head.bias,
                &mut self.col_head.weight,
                &mut self.col_head.bias,
            ])
            .chain(self.pay.tensors_mut())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Shapes agree with the configuration and every weight is finite.
    pub fn is_valid(&self) -> bool {
        let (n, m, d) = (self.n_bundles(), self.n_slots(), self.config.width);
        let padded = (n + 1) * (m + 1);
        let head_ok = |h: &Layer| h.weight.shape() == [d, padded] && h.bias.shape() == [1, padded];
        self.alloc.is_valid()
            && self.pay.is_valid()
            && self.alloc.input_width() == n * m
            && self.alloc.output_width() == d
            && self.pay.input_width() == 2 * n * m
            && self.pay.output_width() == 2 * n
            && head_ok(&self.row_head)
            && head_ok(&self.col_head)
            && self.row_head.weight.is_finite()
            && self.col_head.weight.is_finite()
    }

    /// Puts every parameter on the tape, in [`BundleNet::tensors`] order.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect()
    }

    /// Records the mechanism on `bids` (`rows x 2n`, laid out by `batch`).
    pub fn record(&self, tape: &mut Tape, params: &[Var], bids: Var, batch: &Batch) -> NetOutput {
        let (n, m) = (self.n_bundles(), self.n_slots());
        let ctrs = &self.config.ctrs;
        let na = 2 * self.alloc.layers.len();
        let (pa, rest) = params.split_at(na);
        let (heads, pp) = rest.split_at(4);

        let sb = tape.gather(bids, Rc::new(batch.stacked_map(ctrs)));
        let y = self.alloc.record(tape, sb, pa);
        let row_logits = tape.affine(y, heads[0], heads[1]);
        let col_logits = tape.affine(y, heads[2], heads[3]);
        let dr = tape.softmax(row_logits, n + 1, m + 1, SoftmaxAxis::Rows);
        let dc = tape.softmax(col_logits, n + 1, m + 1, SoftmaxAxis::Cols);
        let padded = tape.min(dr, dc);
        let alloc = tape.gather(padded, Rc::new(trim_map(n, m)));
        let clicks = tape.gather(alloc, Rc::new(clicks_map(n, ctrs)));

        let db = tape.gather(bids, Rc::new(batch.divided_map(ctrs)));
        let fractions = self.pay.record(tape, db, pp);
        let side_bids = tape.gather(bids, Rc::new(batch.side_bid_map()));
        let charged = tape.mul(fractions, side_bids);
        let payments = tape.mul(charged, clicks);
        NetOutput { alloc, clicks, fractions, payments }
    }

    /// Forward pass without gradients: `(allocation rows x nm, payments rows x 2n)`.
    pub fn forward(&self, batch: &Batch, bids: &Tensor) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let b = tape.constant(bids.clone());
        let out = self.record(&mut tape, &params, b, batch);
        (tape.value(out.alloc).clone(), tape.value(out.payments).clone())
    }

    fn check_shape(&self, instance: &AuctionInstance) -> Result<(), MechanismError> {
        if instance.n_bundles() != self.n_bundles() || instance.ctrs != self.config.ctrs {
            return Err(MechanismError::ShapeMismatch {
                expected_n: self.n_bundles(),
                expected_m: self.n_slots(),
                n: instance.n_bundles(),
                m: instance.n_slots(),
            });
        }
        Ok(())
    }

    /// Outcome of the network on one instance.
    pub fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        self.check_shape(instance)?;
        let batch = Batch::from_instances(self.n_bundles(), [instance])?;
        let (alloc, pay) = self.forward(&batch, &batch.bids);
        Ok(outcome_row(self.n_bundles(), self.n_slots(), &alloc, &pay, 0))
    }
}

/// Unpacks one batch row into an [`AuctionOutcome`].
pub fn outcome_row(n: usize, m: usize, alloc: &Tensor, pay: &Tensor, row: usize) -> AuctionOutcome {
    let p = pay.row_slice(row);
    let payments = (0..n).map(|e| [p[e], p[n + e]]).collect();
    AuctionOutcome::from_parts(m, alloc.row_slice(row).to_vec(), payments)
}

/// `(n+1) x (m+1)` padded matrix to its top-left `n x m` block.
fn trim_map(n: usize, m: usize) -> GatherMap {
    let mut in_col = Vec::with_capacity(n * m);
    for e in 0..n {
        for j in 0..m {
            in_col.push((e * (m + 1) + j) as u32);
        }
    }
    GatherMap {
        out_cols: n * m,
        weights: alloc::vec![1.0; n * m],
        in_col: ColumnTable::Shared(in_col),
        out_col: ColumnTable::Shared((0..(n * m) as u32).collect()),
    }
}

/// `clicks[side n + e] = sum_j A[e, j] ctr_j` for both sides.
fn clicks_map(n: usize, ctrs: &[f64]) -> GatherMap {
    let m = ctrs.len();
    let mut weights = Vec::with_capacity(2 * n * m);
    let mut in_col = Vec::with_capacity(2 * n * m);
    let mut out_col = Vec::with_capacity(2 * n * m);
    for e in 0..n {
        for (j, &c) in ctrs.iter().enumerate() {
            for k in [e, n + e] {
                weights.push(c);
                in_col.push((e * m + j) as u32);
                out_col.push(k as u32);
            }
        }
    }
    GatherMap {
        out_cols: 2 * n,
        weights,
        in_col: ColumnTable::Shared(in_col),
        out_col: ColumnTable::Shared(out_col),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use crate::market::MarketGraph;
    use alloc::vec;

    fn config(n: usize, ctrs: Vec<f64>, width: usize) -> NetConfig {
        NetConfig { n_bundles: n, ctrs, width, hidden_layers: 2 }
    }

    fn random_batch(n: usize, ctrs: &[f64], rows: usize, seed: u64) -> Batch {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(seed);
        let insts: Vec<AuctionInstance> = (0..rows)
            .map(|_| {
                let g = MarketGraph::sample(n, &mut rng);
                AuctionInstance::sample(g, &d, ctrs.to_vec(), 0.0, &mut rng).unwrap()
            })
            .collect();
        Batch::from_instances(n, &insts).unwrap()
    }

    #[test]
    fn shapes_and_validity() {
        let net = BundleNet::init(config(3, vec![1.0, 0.5], 8), 1);
        assert!(net.is_valid());
        assert_eq!(net.tensors().count(), 2 * 2 + 4 + 2 * 3);
        let batch = random_batch(3, &[1.0, 0.5], 5, 2);
        let (a, p) = net.forward(&batch, &batch.bids);
        assert_eq!(a.shape(), [5, 6]);
        assert_eq!(p.shape(), [5, 6]);
    }

    #[test]
    fn zero_logits_split_evenly() {
        let mut net = BundleNet::init(config(1, vec![1.0], 4), 3);
        for h in [&mut net.row_head, &mut net.col_head] {
            h.weight = Tensor::zeros(4, 4);
            h.bias = Tensor::zeros(1, 4);
        }
        let inst = AuctionInstance::new(crate::market::fixtures::single(), vec![0.3, 0.7], vec![1.0], 0.0).unwrap();
        let out = net.run(&inst).unwrap();
        assert!((out.allocation(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn padded_matrix_is_doubly_substochastic() {
        for draw in 0..200u64 {
            let n = 1 + (draw % 4) as usize;
            let m = 1 + (draw / 4 % 3) as usize;
            let ctrs: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / m as f64).collect();
            let net = BundleNet::init(config(n, ctrs.clone(), 6), draw);
            let batch = random_batch(n, &ctrs, 4, draw + 1000);
            let mut tape = Tape::new();
            let params = net.register(&mut tape, false);
            let b = tape.constant(batch.bids.clone());
            let sb = tape.gather(b, Rc::new(batch.stacked_map(&ctrs)));
            let y = net.alloc.record(&mut tape, sb, &params[..2 * net.alloc.layers.len()]);
            let k = 2 * net.alloc.layers.len();
            let rl = tape.affine(y, params[k], params[k + 1]);
            let cl = tape.affine(y, params[k + 2], params[k + 3]);
            let dr = tape.softmax(rl, n + 1, m + 1, SoftmaxAxis::Rows);
            let dc = tape.softmax(cl, n + 1, m + 1, SoftmaxAxis::Cols);
            let mm = tape.min(dr, dc);
            let a = tape.value(mm);
            for r in 0..a.rows() {
                let row = a.row_slice(r);
                for i in 0..=n {
                    assert!(row[i * (m + 1)..(i + 1) * (m + 1)].iter().sum::<f64>() <= 1.0 + 1e-9);
                }
                for j in 0..=m {
                    assert!((0..=n).map(|i| row[i * (m + 1) + j]).sum::<f64>() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn outcomes_are_feasible_and_ir() {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(5);
        for draw in 0..100u64 {
            let n = 1 + (draw % 5) as usize;
            let m = 1 + (draw % 3) as usize;
            let ctrs: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / m as f64).collect();
            let net = BundleNet::init(config(n, ctrs.clone(), 5), draw);
            let g = MarketGraph::sample(n, &mut rng);
            let inst = AuctionInstance::sample(g, &d, ctrs, 0.0, &mut rng).unwrap();
            let out = net.run(&inst).unwrap();
            out.check(&inst, 1e-12).unwrap();
            for i in 0..inst.graph.n_bidders() {
                assert!(out.bidder_utility(&inst.graph, i, inst.values[i], &inst.ctrs) >= -1e-12);
            }
            let doubled = AuctionInstance::new(
                inst.graph.clone(),
                inst.values.iter().map(|v| 2.0 * v).collect(),
                inst.ctrs.clone(),
                0.0,
            )
            .unwrap();
            net.run(&doubled).unwrap().check(&doubled, 1e-12).unwrap();
            assert_eq!(net.run(&inst).unwrap(), out);
        }
    }

    #[test]
    fn payment_fraction_extremes() {
        let mut net = BundleNet::init(config(2, vec![1.0], 4), 9);
        let inst = AuctionInstance::new(crate::market::fixtures::disjoint_pairs(), vec![0.9, 0.3, 0.8, 0.4], vec![1.0], 0.0)
            .unwrap();
        let last = net.pay.layers.last_mut().unwrap();
        last.weight = Tensor::zeros(last.inputs(), last.outputs());
        last.bias = Tensor::filled(1, last.outputs(), -800.0);
        assert_eq!(net.run(&inst).unwrap().total_payment(), 0.0);
        let last = net.pay.layers.last_mut().unwrap();
        last.bias = Tensor::filled(1, last.outputs(), 800.0);
        let out = net.run(&inst).unwrap();
        for i in 0..4 {
            assert!(out.bidder_utility(&inst.graph, i, inst.values[i], &inst.ctrs).abs() < 1e-12);
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let ctrs = vec![1.0, 0.6];
        let net = BundleNet::init(config(2, ctrs.clone(), 4), 11);
        let batch = random_batch(2, &ctrs, 3, 12);
        // weighted sum of every output so each entry contributes
        let objective = |bids: &Tensor| -> f64 {
            let (a, p) = net.forward(&batch, bids);
            a.data().iter().enumerate().map(|(i, x)| x * (1.0 + 0.1 * i as f64)).sum::<f64>()
                + p.data().iter().enumerate().map(|(i, x)| x * (0.5 + 0.2 * i as f64)).sum::<f64>()
        };
        let mut tape = Tape::new();
        let params = net.register(&mut tape, false);
        let b = tape.leaf(batch.bids.clone());
        let out = net.record(&mut tape, &params, b, &batch);
        let wa = Tensor::from_vec(
            3,
            4,
            (0..12).map(|i| 1.0 + 0.1 * i as f64).collect(),
        );
        let wp = Tensor::from_vec(3, 4, (0..12).map(|i| 0.5 + 0.2 * i as f64).collect());
        let ca = tape.constant(wa);
        let cp = tape.constant(wp);
        let ta = tape.mul(out.alloc, ca);
        let tp = tape.mul(out.payments, cp);
        let s = tape.add(ta, tp);
        let total = tape.sum_all(s);
        let grads = tape.backward(total);
        let g = grads.get(b).unwrap();
        for r in 0..3 {
            for &c in batch.cols(r) {
                let c = c as usize;
                let h = 1e-6;
                let mut plus = batch.bids.clone();
                plus.set(r, c, plus.get(r, c) + h);
                let mut minus = batch.bids.clone();
                minus.set(r, c, minus.get(r, c) - h);
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = g.get(r, c);
                assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-3), "row {r} col {c}: {an} vs {fd}");
            }
        }
    }
}
