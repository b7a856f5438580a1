//! Revenue-optimal single-slot joint auction for regular bidders.
//!
//! The slot goes to the bundle with the largest virtual value
//! `c^e = c_r(b_r) + c_s(b_s)` provided it clears the reserve; each member
//! of the winning bundle pays its critical bid, the smallest report that
//! would still have won with everyone else fixed.

use alloc::vec::Vec;

use crate::distributions::Priors;
use crate::error::MechanismError;
use crate::market::{AuctionInstance, Side};
use crate::outcome::AuctionOutcome;

/// Critical bid of a bidder, or a marker that no report in the support wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalValue {
    Value(f64),
    Infeasible,
}

impl CriticalValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CriticalValue::Value(v) => Some(v),
            CriticalValue::Infeasible => None,
        }
    }
}

fn require_single_slot(instance: &AuctionInstance) -> Result<(), MechanismError> {
    match instance.n_slots() {
        1 => Ok(()),
        m => Err(MechanismError::UnsupportedSlots(m)),
    }
}

/// Virtual value of every bidder's report.
pub fn bidder_virtual_values<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
) -> Result<Vec<f64>, MechanismError> {
    instance.check_support(priors)?;
    Ok(instance
        .values
        .iter()
        .enumerate()
        .map(|(i, &b)| priors.prior(i).virtual_value_extended(b))
        .collect())
}

/// `c^e = c_r(b_r) + c_s(b_s)`.
pub fn bundle_virtual_value<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    edge: usize,
    priors: &P,
) -> Result<f64, MechanismError> {
    let b = instance.graph.edge(edge);
    let vv = |i: usize| -> Result<f64, MechanismError> {
        let d = priors.prior(i);
        let v = instance.values[i];
        if !d.contains(v) {
            return Err(crate::error::DistError::OutOfSupport { v }.into());
        }
        Ok(d.virtual_value_extended(v))
    };
    Ok(vv(b.retailer)? + vv(b.supplier)?)
}

/// Winning bundle: highest virtual value, lowest index on ties, and only if
/// it reaches the reserve.
pub fn optimal_winner<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
) -> Result<Option<usize>, MechanismError> {
    require_single_slot(instance)?;
    let vv = bidder_virtual_values(instance, priors)?;
    let mut best: Option<(usize, f64)> = None;
    for (e, b) in instance.graph.edges().iter().enumerate() {
        let c = vv[b.retailer] + vv[b.supplier];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((e, c));
        }
    }
    Ok(best.filter(|&(_, c)| c >= instance.reserve).map(|(e, _)| e))
}

/// Allocation of the optimal mechanism; payments are left at zero.
pub fn optimal_allocate<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
) -> Result<AuctionOutcome, MechanismError> {
    let mut out = AuctionOutcome::empty(instance.n_bundles(), 1);
    if let Some(e) = optimal_winner(instance, priors)? {
        out.set_allocation(e, 0, 1.0);
    }
    Ok(out)
}

/// Smallest report with which `bidder`'s best bundle still wins.
///
/// For a retailer `r` with strongest neighbour `s*`, the bundle `(r, s*)`
/// must reach `max(v0, max_{e not touching r} c^e)`, so the threshold on
/// `c_r` is that level minus `c_{s*}`; suppliers are symmetric.
pub fn critical_value<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
    bidder: usize,
) -> Result<CriticalValue, MechanismError> {
    require_single_slot(instance)?;
    let graph = &instance.graph;
    graph.side_of(bidder)?;
    let vv = bidder_virtual_values(instance, priors)?;
    let partner = graph
        .neighbors(bidder)?
        .into_iter()
        .fold(None::<usize>, |best, j| match best {
            Some(b) if vv[b] >= vv[j] => Some(b),
            _ => Some(j),
        })
        .expect("every bidder has a neighbour");
    let rival = graph
        .bundles_excluding(bidder)?
        .into_iter()
        .map(|e| {
            let b = graph.edge(e);
            vv[b.retailer] + vv[b.supplier]
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = instance.reserve.max(rival) - vv[partner];
    Ok(match priors.prior(bidder).inverse_virtual_value(threshold) {
        Ok(v) => CriticalValue::Value(v),
        Err(_) => CriticalValue::Infeasible,
    })
}

/// Full optimal mechanism: the winner's members each pay
/// `ctr_1 * critical bid`, everyone else pays nothing.
pub fn optimal_run<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
) -> Result<AuctionOutcome, MechanismError> {
    let mut out = optimal_allocate(instance, priors)?;
    let Some(e) = optimal_winner(instance, priors)? else {
        return Ok(out);
    };
    let b = instance.graph.edge(e);
    let ctr = instance.ctrs[0];
    for side in Side::BOTH {
        let price = critical_value(instance, priors, b.member(side))?.value().unwrap_or(0.0);
        out.set_payment(e, side, ctr * price);
    }
    Ok(out)
}

/// Exhaustive maximizer of `sum_e (c^e - v0) x^e` over the deterministic
/// single-slot allocations (give the slot to one bundle, or to nobody).
///
/// Returns the winning bundle with its surplus `c^e - v0`, or `None` when
/// every bundle's surplus is negative.
pub fn brute_force_virtual_surplus<P: Priors + ?Sized>(
    instance: &AuctionInstance,
    priors: &P,
) -> Result<Option<(usize, f64)>, MechanismError> {
    require_single_slot(instance)?;
    let n = instance.n_bundles();
    let mut best_choice: Option<usize> = None;
    let mut best_objective = f64::NEG_INFINITY;
    // candidates: bundle 0..n, then "unallocated" with objective 0
    for choice in (0..n).map(Some).chain(core::iter::once(None)) {
        let objective: f64 = match choice {
            Some(e) => bundle_virtual_value(instance, e, priors)? - instance.reserve,
            None => 0.0,
        };
        if objective > best_objective {
            best_objective = objective;
            best_choice = choice;
        }
    }
    Ok(best_choice.map(|e| (e, best_objective)))
}
