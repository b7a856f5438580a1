//! Allocation/payment outcomes and the utilities they induce.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::market::{AuctionInstance, MarketGraph, Side};

/// Per-bundle slot probabilities and per-side payments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    n_slots: usize,
    /// Row-major `n_bundles x n_slots`.
    allocation: Vec<f64>,
    /// `[retailer, supplier]` payment per bundle.
    payments: Vec<[f64; 2]>,
}

/// A broken outcome invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeViolation {
    SlotOverAllocated { slot: usize, total: f64 },
    BundleOverAllocated { bundle: usize, total: f64 },
    ProbabilityOutOfRange { bundle: usize, slot: usize, p: f64 },
    NegativePayment { bundle: usize, side: Side, p: f64 },
    IndividualRationality { bundle: usize, side: Side, payment: f64, value: f64 },
}

impl AuctionOutcome {
    /// Nothing allocated, nothing paid.
    pub fn empty(n_bundles: usize, n_slots: usize) -> Self {
        Self {
            n_slots,
            allocation: vec![0.0; n_bundles * n_slots],
            payments: vec![[0.0; 2]; n_bundles],
        }
    }

    pub fn from_parts(n_slots: usize, allocation: Vec<f64>, payments: Vec<[f64; 2]>) -> Self {
        assert_eq!(allocation.len(), payments.len() * n_slots, "allocation shape");
        Self { n_slots, allocation, payments }
    }

    pub fn n_bundles(&self) -> usize {
        self.payments.len()
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Probability that `bundle` occupies `slot`.
    pub fn allocation(&self, bundle: usize, slot: usize) -> f64 {
        self.allocation[bundle * self.n_slots + slot]
    }

    pub fn allocation_row(&self, bundle: usize) -> &[f64] {
        &self.allocation[bundle * self.n_slots..(bundle + 1) * self.n_slots]
    }

    pub fn set_allocation(&mut self, bundle: usize, slot: usize, p: f64) {
        self.allocation[bundle * self.n_slots + slot] = p;
    }

    pub fn payment(&self, bundle: usize, side: Side) -> f64 {
        self.payments[bundle][side.index()]
    }

    pub fn set_payment(&mut self, bundle: usize, side: Side, p: f64) {
        self.payments[bundle][side.index()] = p;
    }

    /// `x^e . lambda`: expected clicks received by a bundle.
    pub fn weighted_allocation(&self, bundle: usize, ctrs: &[f64]) -> f64 {
        self.allocation_row(bundle).iter().zip(ctrs).map(|(x, c)| x * c).sum()
    }

    /// Total probability mass a bundle receives over all slots.
    pub fn allocated(&self, bundle: usize) -> f64 {
        self.allocation_row(bundle).iter().sum()
    }

    /// Sum of all payments; equals revenue when the reserve is 0.
    pub fn total_payment(&self) -> f64 {
        self.payments.iter().map(|p| p[0] + p[1]).sum()
    }

    /// Auctioneer revenue including the reserve value of unsold clicks:
    /// `v0 (1 - sum_e x^e) . lambda + sum_e p^e`.
    pub fn revenue(&self, ctrs: &[f64], reserve: f64) -> f64 {
        let mut unsold: f64 = ctrs.iter().sum();
        for e in 0..self.n_bundles() {
            unsold -= self.weighted_allocation(e, ctrs);
        }
        reserve * unsold + self.total_payment()
    }

    /// `u_i^e = v_i (x^e . lambda) - p_i^e` for the given side of a bundle.
    pub fn bundle_utility(&self, bundle: usize, side: Side, value: f64, ctrs: &[f64]) -> f64 {
        value * self.weighted_allocation(bundle, ctrs) - self.payment(bundle, side)
    }

    /// `u_i = sum_{e in E_i} u_i^e`.
    pub fn bidder_utility(&self, graph: &MarketGraph, bidder: usize, value: f64, ctrs: &[f64]) -> f64 {
        graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.touches(bidder))
            .map(|(e, b)| {
                let side = if b.retailer == bidder { Side::Retailer } else { Side::Supplier };
                self.bundle_utility(e, side, value, ctrs)
            })
            .sum()
    }

    /// `p_i = sum_{e in E_i} p_i^e`.
    pub fn bidder_payment(&self, graph: &MarketGraph, bidder: usize) -> f64 {
        graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.touches(bidder))
            .map(|(e, b)| {
                let side = if b.retailer == bidder { Side::Retailer } else { Side::Supplier };
                self.payment(e, side)
            })
            .sum()
    }

    /// Checks feasibility, nonnegative payments and ex-post IR against the
    /// instance's (truthful) values, all to within `tol`.
    pub fn check(&self, instance: &AuctionInstance, tol: f64) -> Result<(), OutcomeViolation> {
        let n = self.n_bundles();
        for e in 0..n {
            for k in 0..self.n_slots {
                let p = self.allocation(e, k);
                if !(-tol..=1.0 + tol).contains(&p) {
                    return Err(OutcomeViolation::ProbabilityOutOfRange { bundle: e, slot: k, p });
                }
            }
            let total = self.allocated(e);
            if total > 1.0 + tol {
                return Err(OutcomeViolation::BundleOverAllocated { bundle: e, total });
            }
        }
        for k in 0..self.n_slots {
            let total: f64 = (0..n).map(|e| self.allocation(e, k)).sum();
            if total > 1.0 + tol {
                return Err(OutcomeViolation::SlotOverAllocated { slot: k, total });
            }
        }
        for (e, b) in instance.graph.edges().iter().enumerate() {
            let clicks = self.weighted_allocation(e, &instance.ctrs);
            for side in Side::BOTH {
                let p = self.payment(e, side);
                if p < -tol {
                    return Err(OutcomeViolation::NegativePayment { bundle: e, side, p });
                }
                let value = instance.values[b.member(side)] * clicks;
                if p > value + tol {
                    return Err(OutcomeViolation::IndividualRationality {
                        bundle: e,
                        side,
                        payment: p,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    /// Slot index held by each bundle in a deterministic outcome.
    pub fn assigned_slot(&self, bundle: usize) -> Option<usize> {
        self.allocation_row(bundle).iter().position(|&p| p >= 0.5)
    }
}
