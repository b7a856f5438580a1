//! Fast property suite behind `jointlab selftest`.

use jointlab_core::batch::Batch;
use jointlab_core::bundlenet::{BundleNet, NetConfig};
use jointlab_core::distributions::Distribution;
use jointlab_core::evaluation::{allocation_grid, ctrs_for, GridFixture};
use jointlab_core::exact::{brute_force_virtual_surplus, optimal_winner};
use jointlab_core::mechanism::{Mechanism, Optimal, PayYourBid};
use jointlab_core::training::{estimate_regret, RegretConfig};
use jointlab_core::{rng, AuctionInstance, MarketGraph};

type Probe = fn() -> (bool, String);

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn exact_matches_oracle() -> (bool, String) {
    let mut bad = 0;
    for prior in [Distribution::uniform01(), Distribution::texp2(), Distribution::tnorm()] {
        let mut r = rng::seeded(1);
        for i in 0..500 {
            let g = MarketGraph::sample(1 + i % 5, &mut r);
            let inst = AuctionInstance::sample(g, &prior, vec![1.0], 0.0, &mut r).expect("valid sample");
            let oracle = brute_force_virtual_surplus(&inst, &prior).expect("single slot").map(|(e, _)| e);
            if optimal_winner(&inst, &prior).expect("single slot") != oracle {
                bad += 1;
            }
        }
    }
    (bad == 0, format!("{bad} disagreements in 1500 instances"))
}

fn exact_is_truthful() -> (bool, String) {
    let prior = Distribution::uniform01();
    let batch = Batch::sample(3, &prior, 50, 2, 0);
    let cfg = RegretConfig { grid: 101, ..RegretConfig::default() };
    let rows = estimate_regret(&Optimal { prior }, &batch, &[1.0], 0.0, &prior, &cfg, 0, 0).expect("runs");
    let worst = rows.iter().flat_map(|r| r.bidder.iter()).fold(0.0f64, |a, &b| a.max(b));
    (worst <= 1e-9, format!("max gain {worst:.3e}"))
}

fn pay_your_bid_has_regret() -> (bool, String) {
    let prior = Distribution::uniform01();
    let batch = Batch::sample(2, &prior, 50, 3, 0);
    let cfg = RegretConfig { grid: 21, ..RegretConfig::default() };
    let rows = estimate_regret(&PayYourBid, &batch, &[1.0], 0.0, &prior, &cfg, 0, 0).expect("runs");
    let total: f64 = rows.iter().map(|r| r.bidder.iter().sum::<f64>()).sum();
    (total > 0.0, format!("total gain {total:.3}"))
}

fn network_outcomes_valid() -> (bool, String) {
    let prior = Distribution::uniform01();
    let mut bad = 0;
    for draw in 0..100u64 {
        let n = 1 + (draw % 5) as usize;
        let ctrs = ctrs_for(1 + (draw % 3) as usize);
        let net = BundleNet::init(NetConfig { n_bundles: n, ctrs: ctrs.clone(), width: 8, hidden_layers: 2 }, draw);
        let batch = Batch::sample(n, &prior, 10, draw, 0);
        let outcomes = net.run_rows(&batch, &batch.bids, &ctrs, 0.0).expect("shapes match");
        for (r, o) in outcomes.iter().enumerate() {
            let inst = batch.instance(r, &ctrs, 0.0).expect("valid row");
            if o.check(&inst, 1e-9).is_err() {
                bad += 1;
            }
        }
    }
    (bad == 0, format!("{bad} invalid outcomes in 1000"))
}

fn regret_bound() -> (bool, String) {
    let prior = Distribution::uniform01();
    let cfg = RegretConfig { grid: 11, restarts: 1, steps: 10, ..RegretConfig::default() };
    let mut worst = f64::NEG_INFINITY;
    for draw in 0..5u64 {
        let net = BundleNet::init(NetConfig { n_bundles: 2, ctrs: vec![1.0], width: 6, hidden_layers: 2 }, draw);
        let batch = Batch::sample(2, &prior, 16, draw + 7, 0);
        let rows = estimate_regret(&net, &batch, &[1.0], 0.0, &prior, &cfg, draw, 0).expect("runs");
        let bidder: f64 = rows.iter().map(|r| r.bidder.iter().sum::<f64>()).sum();
        let bundle: f64 = rows.iter().map(|r| r.side.iter().sum::<f64>()).sum();
        worst = worst.max(bidder - bundle);
    }
    (worst <= 1e-6, format!("max (bidder - bundle) {worst:.3e}"))
}

fn exact_grid() -> (bool, String) {
    let prior = Distribution::uniform01();
    let opt = Optimal { prior };
    let g = allocation_grid(&opt, GridFixture::SharedSupplier, 0.5, 21, Some(&prior)).expect("fixture runs");
    let ok = g.win.iter().all(|&w| w == 0.0 || w == 1.0) && g.boundary.is_some();
    (ok, "deterministic grid with boundary".into())
}

pub fn run() -> Vec<Check> {
    let suite: [(&'static str, Probe); 6] = [
        ("exact allocation equals brute-force oracle", exact_matches_oracle),
        ("exact mechanism is truthful on a grid", exact_is_truthful),
        ("pay-your-bid shows regret", pay_your_bid_has_regret),
        ("network outcomes feasible and IR", network_outcomes_valid),
        ("bidder regret bounded by bundle regret", regret_bound),
        ("exact allocation grid", exact_grid),
    ];
    suite
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = f();
            Check { name, passed, detail }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_is_green() {
        for c in super::run() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
