//! A common interface over every auction in the crate.

use alloc::vec::Vec;

use crate::batch::Batch;
use crate::bundlenet::{outcome_row, BundleNet};
use crate::diff::Tensor;
use crate::distributions::Distribution;
use crate::error::MechanismError;
use crate::exact::optimal_run;
use crate::market::{AuctionInstance, Side};
use crate::outcome::AuctionOutcome;
use crate::vcg::{vcg_allocate, vcg_price, VcgVariant};

pub trait Mechanism {
    fn name(&self) -> &str;

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError>;

    /// Outcomes for every row of `batch` with bids taken from `bids`.
    fn run_rows(
        &self,
        batch: &Batch,
        bids: &Tensor,
        ctrs: &[f64],
        reserve: f64,
    ) -> Result<Vec<AuctionOutcome>, MechanismError> {
        (0..batch.rows())
            .map(|r| self.run(&batch.instance_with(r, bids.row_slice(r), ctrs, reserve)?))
            .collect()
    }

    /// The network behind this mechanism, when it can be differentiated.
    fn network(&self) -> Option<&BundleNet> {
        None
    }
}

/// Revenue-optimal single-slot mechanism with one prior shared by all bidders.
#[derive(Debug, Clone)]
pub struct Optimal {
    pub prior: Distribution,
}

impl Mechanism for Optimal {
    fn name(&self) -> &str {
        "optimal"
    }

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        optimal_run(instance, &self.prior)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rvcg {
    pub variant: VcgVariant,
}

impl Mechanism for Rvcg {
    fn name(&self) -> &str {
        "rvcg"
    }

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        Ok(vcg_price(instance, self.variant))
    }
}

/// Welfare-ranked slots, every winner pays its own bid per click.
#[derive(Debug, Clone, Copy, Default)]
pub struct PayYourBid;

impl Mechanism for PayYourBid {
    fn name(&self) -> &str {
        "pay_your_bid"
    }

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        let assignment = vcg_allocate(instance);
        let mut out = AuctionOutcome::empty(instance.n_bundles(), instance.n_slots());
        for (k, e) in assignment.slots.iter().enumerate() {
            let Some(e) = *e else { continue };
            out.set_allocation(e, k, 1.0);
            let b = instance.graph.edge(e);
            for side in Side::BOTH {
                out.set_payment(e, side, instance.ctrs[k] * instance.values[b.member(side)]);
            }
        }
        Ok(out)
    }
}

/// Bundle `k` always gets slot `k`, nobody pays.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedSlots;

impl Mechanism for FixedSlots {
    fn name(&self) -> &str {
        "fixed_slots"
    }

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        let mut out = AuctionOutcome::empty(instance.n_bundles(), instance.n_slots());
        for k in 0..instance.n_slots().min(instance.n_bundles()) {
            out.set_allocation(k, k, 1.0);
        }
        Ok(out)
    }
}

impl Mechanism for BundleNet {
    fn name(&self) -> &str {
        "bundlenet"
    }

    fn run(&self, instance: &AuctionInstance) -> Result<AuctionOutcome, MechanismError> {
        BundleNet::run(self, instance)
    }

    fn run_rows(
        &self,
        batch: &Batch,
        bids: &Tensor,
        ctrs: &[f64],
        _reserve: f64,
    ) -> Result<Vec<AuctionOutcome>, MechanismError> {
        if batch.n() != self.n_bundles() || ctrs != self.config.ctrs.as_slice() {
            return Err(MechanismError::ShapeMismatch {
                expected_n: self.n_bundles(),
                expected_m: self.n_slots(),
                n: batch.n(),
                m: ctrs.len(),
            });
        }
        let (alloc, pay) = self.forward(batch, bids);
        Ok((0..batch.rows()).map(|r| outcome_row(self.n_bundles(), self.n_slots(), &alloc, &pay, r)).collect())
    }

    fn network(&self) -> Option<&BundleNet> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundlenet::NetConfig;
    use crate::market::MarketGraph;
    use alloc::vec;

    #[test]
    fn pay_your_bid_extracts_everything() {
        let inst = AuctionInstance::new(crate::market::fixtures::disjoint_pairs(), vec![0.9, 0.3, 0.8, 0.4], vec![1.0], 0.0)
            .unwrap();
        let out = PayYourBid.run(&inst).unwrap();
        assert!((out.total_payment() - 1.7).abs() < 1e-12);
        out.check(&inst, 1e-12).unwrap();
    }

    #[test]
    fn batched_rows_match_single_runs() {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(4);
        let ctrs = vec![1.0, 0.5];
        let insts: Vec<AuctionInstance> = (0..6)
            .map(|_| AuctionInstance::sample(MarketGraph::sample(3, &mut rng), &d, ctrs.clone(), 0.0, &mut rng).unwrap())
            .collect();
        let batch = Batch::from_instances(3, &insts).unwrap();
        let net = BundleNet::init(NetConfig { n_bundles: 3, ctrs: ctrs.clone(), width: 6, hidden_layers: 1 }, 2);
        let mechs: [&dyn Mechanism; 3] = [&net, &Rvcg::default(), &PayYourBid];
        for mech in mechs {
            let rows = mech.run_rows(&batch, &batch.bids, &ctrs, 0.0).unwrap();
            for (inst, out) in insts.iter().zip(rows) {
                assert_eq!(mech.run(inst).unwrap(), out);
            }
        }
    }
}
