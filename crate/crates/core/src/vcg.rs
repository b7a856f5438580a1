//! Revised-VCG multi-slot baseline.
//!
//! Bundles are ranked by stacked bid `b_r + b_s` and the top `min(m, n)`
//! take the slots in CTR order, which maximizes welfare because CTRs are
//! sorted. Each allocated bidder pays its Clarke externality, computed by
//! removing every bundle it belongs to; payments are clamped at zero in the
//! default variant.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::market::{AuctionInstance, Side};
use crate::outcome::AuctionOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VcgVariant {
    /// `p_i = max(0, W_{-i} - W_others)`.
    #[default]
    Clamped,
    /// `p_i = W_{-i} - W_others`, possibly negative.
    Unclamped,
}

/// Slot assignment produced by [`vcg_allocate`].
#[derive(Debug, Clone, PartialEq)]
pub struct VcgAssignment {
    /// Bundle in each slot, `None` when there are fewer bundles than slots.
    pub slots: Vec<Option<usize>>,
    pub welfare: f64,
}

fn stacked_bid(instance: &AuctionInstance, e: usize) -> f64 {
    let b = instance.graph.edge(e);
    instance.values[b.retailer] + instance.values[b.supplier]
}

/// Bundles sorted by stacked bid, descending, lower index first on ties.
fn ranking(instance: &AuctionInstance, allowed: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.n_bundles()).filter(|&e| allowed(e)).collect();
    order.sort_by(|&a, &b| {
        stacked_bid(instance, b)
            .partial_cmp(&stacked_bid(instance, a))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn welfare_of(instance: &AuctionInstance, order: &[usize]) -> f64 {
    order.iter().zip(&instance.ctrs).map(|(&e, c)| c * stacked_bid(instance, e)).sum()
}

pub fn vcg_allocate(instance: &AuctionInstance) -> VcgAssignment {
    let order = ranking(instance, |_| true);
    let m = instance.n_slots();
    let slots = (0..m).map(|k| order.get(k).copied()).collect();
    VcgAssignment { slots, welfare: welfare_of(instance, &order) }
}

/// Allocation plus Clarke payments, split per bundle in proportion to each
/// bundle's share of the bidder's own CTR-weighted bid.
pub fn vcg_price(instance: &AuctionInstance, variant: VcgVariant) -> AuctionOutcome {
    let assignment = vcg_allocate(instance);
    let graph = &instance.graph;
    let mut out = AuctionOutcome::empty(instance.n_bundles(), instance.n_slots());
    for (k, e) in assignment.slots.iter().enumerate() {
        if let Some(e) = *e {
            out.set_allocation(e, k, 1.0);
        }
    }
    for bidder in 0..graph.n_bidders() {
        let bid = instance.values[bidder];
        // (bundle, side, own contribution ctr_k * b_i) for each won bundle
        let won: Vec<(usize, Side, f64)> = assignment
            .slots
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.map(|e| (k, e)))
            .filter(|&(_, e)| graph.edge(e).touches(bidder))
            .map(|(k, e)| {
                let side = if graph.edge(e).retailer == bidder { Side::Retailer } else { Side::Supplier };
                (e, side, instance.ctrs[k] * bid)
            })
            .collect();
        if won.is_empty() {
            continue;
        }
        let own: f64 = won.iter().map(|w| w.2).sum();
        let without = ranking(instance, |e| !graph.edge(e).touches(bidder));
        let w_minus = welfare_of(instance, &without);
        let mut price = w_minus - (assignment.welfare - own);
        if variant == VcgVariant::Clamped {
            price = price.max(0.0);
        }
        for (e, side, contribution) in won {
            let share = if own > 0.0 { contribution / own } else { 0.0 };
            out.set_payment(e, side, price * share);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use crate::market::{fixtures, MarketGraph};
    use alloc::vec;

    /// Exhaustive best matching of bundles to slots (each bundle at most once).
    fn brute_welfare(inst: &AuctionInstance) -> f64 {
        fn go(inst: &AuctionInstance, slot: usize, used: &mut Vec<bool>) -> f64 {
            if slot == inst.n_slots() {
                return 0.0;
            }
            let mut best = go(inst, slot + 1, used);
            for e in 0..inst.n_bundles() {
                if !used[e] {
                    used[e] = true;
                    let b = inst.graph.edge(e);
                    let w = inst.ctrs[slot] * (inst.values[b.retailer] + inst.values[b.supplier]);
                    best = best.max(w + go(inst, slot + 1, used));
                    used[e] = false;
                }
            }
            best
        }
        go(inst, 0, &mut vec![false; inst.n_bundles()])
    }

    #[test]
    fn allocation_examples() {
        let inst = AuctionInstance::new(fixtures::disjoint_pairs(), vec![0.9, 0.3, 0.8, 0.4], vec![1.0], 0.0)
            .unwrap();
        let a = vcg_allocate(&inst);
        assert_eq!(a.slots, vec![Some(0)]);
        assert!((a.welfare - 1.7).abs() < 1e-12);

        let few = AuctionInstance::new(fixtures::single(), vec![0.2, 0.3], vec![1.0, 0.5, 0.2], 0.0)
            .unwrap();
        assert_eq!(vcg_allocate(&few).slots, vec![Some(0), None, None]);

        let tie = AuctionInstance::new(fixtures::disjoint_pairs(), vec![0.5, 0.4, 0.5, 0.6], vec![1.0], 0.0)
            .unwrap();
        assert_eq!(vcg_allocate(&tie).slots, vec![Some(0)]);
    }

    #[test]
    fn payment_examples() {
        let inst = AuctionInstance::new(fixtures::disjoint_pairs(), vec![0.9, 0.3, 0.8, 0.4], vec![1.0], 0.0)
            .unwrap();
        let out = vcg_price(&inst, VcgVariant::Clamped);
        assert_eq!(out.payment(0, Side::Retailer), 0.0);
        assert_eq!(out.payment(0, Side::Supplier), 0.0);
        let raw = vcg_price(&inst, VcgVariant::Unclamped);
        assert!((raw.payment(0, Side::Retailer) + 0.1).abs() < 1e-12);
        assert!((raw.payment(0, Side::Supplier) + 0.2).abs() < 1e-12);

        let inst = AuctionInstance::new(fixtures::shared_supplier(), vec![0.9, 0.5, 0.6], vec![1.0], 0.0)
            .unwrap();
        let out = vcg_price(&inst, VcgVariant::Clamped);
        assert!((out.payment(0, Side::Retailer) - 0.5).abs() < 1e-12);
        assert_eq!(out.payment(0, Side::Supplier), 0.0);

        let one = AuctionInstance::new(fixtures::single(), vec![0.7, 0.2], vec![1.0], 0.0).unwrap();
        assert_eq!(vcg_price(&one, VcgVariant::Clamped).total_payment(), 0.0);
    }

    #[test]
    fn welfare_optimal_and_ir() {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(17);
        for i in 0..400 {
            let n = 1 + i % 5;
            let m = 1 + (i / 5) % 5;
            let ctrs: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / m as f64).collect();
            let g = MarketGraph::sample(n, &mut rng);
            let inst = AuctionInstance::sample(g, &d, ctrs, 0.0, &mut rng).unwrap();
            let a = vcg_allocate(&inst);
            assert!((a.welfare - brute_welfare(&inst)).abs() < 1e-12);
            let out = vcg_price(&inst, VcgVariant::Clamped);
            out.check(&inst, 1e-12).unwrap();
        }
    }

    fn max_gain(inst: &AuctionInstance, variant: VcgVariant) -> f64 {
        let truthful = vcg_price(inst, variant);
        let mut worst = f64::NEG_INFINITY;
        for bidder in 0..inst.graph.n_bidders() {
            let v = inst.values[bidder];
            let u = truthful.bidder_utility(&inst.graph, bidder, v, &inst.ctrs);
            for k in 0..=50 {
                let out = vcg_price(&inst.with_value(bidder, k as f64 / 50.0), variant);
                worst = worst.max(out.bidder_utility(&inst.graph, bidder, v, &inst.ctrs) - u);
            }
        }
        worst
    }

    #[test]
    fn unclamped_payments_are_truthful() {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(23);
        for i in 0..150 {
            let m = 1 + i % 3;
            let ctrs: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / m as f64).collect();
            let g = MarketGraph::sample(1 + i % 4, &mut rng);
            let inst = AuctionInstance::sample(g, &d, ctrs, 0.0, &mut rng).unwrap();
            assert!(max_gain(&inst, VcgVariant::Unclamped) <= 1e-9);
        }
    }

    #[test]
    fn clamped_payments_are_truthful_with_one_slot() {
        let d = Distribution::uniform01();
        let mut rng = crate::rng::seeded(29);
        for i in 0..150 {
            let g = MarketGraph::sample(1 + i % 5, &mut rng);
            let inst = AuctionInstance::sample(g, &d, vec![1.0], 0.0, &mut rng).unwrap();
            assert!(max_gain(&inst, VcgVariant::Clamped) <= 1e-9);
        }
    }

    #[test]
    fn clamping_can_reward_lies_across_slots() {
        // Retailer r1 shares two bundles; its clamped price is 0 when it wins
        // one slot, so bidding up to win both slots raises its utility.
        let g = MarketGraph::from_local(2, 2, [(0, 0), (0, 1), (1, 0)]).unwrap();
        let inst = AuctionInstance::new(g, vec![0.2, 0.6, 0.9, 0.1], vec![1.0, 0.5], 0.0).unwrap();
        assert!(max_gain(&inst, VcgVariant::Clamped) > 1e-3);
        assert!(max_gain(&inst, VcgVariant::Unclamped) <= 1e-9);
    }
}
