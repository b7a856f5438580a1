use jointlab_core::batch::Batch;
use jointlab_core::bundlenet::{BundleNet, NetConfig};
use jointlab_core::evaluation::ctrs_for;
use jointlab_core::exact::{brute_force_virtual_surplus, optimal_run, optimal_winner};
use jointlab_core::mechanism::Mechanism;
use jointlab_core::vcg::{vcg_allocate, vcg_price, VcgVariant};
use jointlab_core::{rng, AuctionInstance, Distribution, MarketGraph, Side};
use proptest::prelude::*;

fn prior(kind: usize) -> Distribution {
    match kind {
        0 => Distribution::uniform01(),
        1 => Distribution::texp2(),
        2 => Distribution::tnorm(),
        _ => Distribution::tlognorm(),
    }
}

fn instance(n: usize, m: usize, kind: usize, seed: u64) -> AuctionInstance {
    let mut r = rng::seeded(seed);
    let g = MarketGraph::sample(n, &mut r);
    AuctionInstance::sample(g, &prior(kind), ctrs_for(m), 0.0, &mut r).unwrap()
}

/// Best CTR-weighted stacked bid over every injective bundle-to-slot map.
fn best_welfare(inst: &AuctionInstance) -> f64 {
    fn go(inst: &AuctionInstance, slot: usize, used: &mut Vec<bool>) -> f64 {
        if slot == inst.ctrs.len() {
            return 0.0;
        }
        let mut best = go(inst, slot + 1, used);
        for e in 0..inst.n_bundles() {
            if used[e] {
                continue;
            }
            let b = inst.graph.edge(e);
            used[e] = true;
            let w = inst.ctrs[slot] * (inst.values[b.retailer] + inst.values[b.supplier]) + go(inst, slot + 1, used);
            used[e] = false;
            best = best.max(w);
        }
        best
    }
    go(inst, 0, &mut vec![false; inst.n_bundles()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exact_winner_matches_exhaustive_search(n in 1usize..7, kind in 0usize..4, seed in any::<u64>()) {
        let inst = instance(n, 1, kind, seed);
        let p = prior(kind);
        let oracle = brute_force_virtual_surplus(&inst, &p).unwrap().map(|(e, _)| e);
        prop_assert_eq!(optimal_winner(&inst, &p).unwrap(), oracle);
    }

    #[test]
    fn exact_outcome_is_feasible_and_ir(n in 1usize..7, kind in 0usize..4, seed in any::<u64>()) {
        let inst = instance(n, 1, kind, seed);
        let out = optimal_run(&inst, &prior(kind)).unwrap();
        prop_assert!(out.check(&inst, 1e-12).is_ok());
        for e in 0..n {
            if out.allocated(e) == 0.0 {
                prop_assert_eq!(out.payment(e, Side::Retailer), 0.0);
                prop_assert_eq!(out.payment(e, Side::Supplier), 0.0);
            }
        }
    }

    #[test]
    fn vcg_maximizes_welfare(n in 1usize..6, m in 1usize..4, seed in any::<u64>()) {
        let inst = instance(n, m, 0, seed);
        let a = vcg_allocate(&inst);
        prop_assert!((a.welfare - best_welfare(&inst)).abs() < 1e-12);
        let out = vcg_price(&inst, VcgVariant::Clamped);
        prop_assert!(out.check(&inst, 1e-9).is_ok());
    }

    #[test]
    fn batch_rows_rebuild_their_instances(n in 1usize..6, m in 1usize..4, seed in any::<u64>()) {
        let items: Vec<AuctionInstance> = (0..4).map(|i| instance(n, m, 0, seed.wrapping_add(i))).collect();
        let batch = Batch::from_instances(n, &items).unwrap();
        for (r, inst) in items.iter().enumerate() {
            prop_assert_eq!(&batch.instance(r, &inst.ctrs, 0.0).unwrap(), inst);
        }
    }

    #[test]
    fn network_outcomes_are_feasible_and_ir(n in 1usize..6, m in 1usize..4, seed in any::<u64>()) {
        let ctrs = ctrs_for(m);
        let net = BundleNet::init(NetConfig { n_bundles: n, ctrs: ctrs.clone(), width: 8, hidden_layers: 2 }, seed);
        let batch = Batch::sample(n, &Distribution::uniform01(), 8, seed, 0);
        let outs = net.run_rows(&batch, &batch.bids, &ctrs, 0.0).unwrap();
        for (r, o) in outs.iter().enumerate() {
            prop_assert!(o.check(&batch.instance(r, &ctrs, 0.0).unwrap(), 1e-12).is_ok());
        }
    }

    #[test]
    fn quantile_inverts_cdf(kind in 0usize..4, p in 0.001f64..0.999) {
        let d = prior(kind);
        let v = d.quantile(p);
        prop_assert!(d.contains(v));
        prop_assert!((d.cdf(v).unwrap() - p).abs() < 1e-8);
    }

    #[test]
    fn instances_survive_json(n in 1usize..6, m in 1usize..4, seed in any::<u64>()) {
        let inst = instance(n, m, 0, seed);
        let text = serde_json::to_string(&inst).unwrap();
        let back: AuctionInstance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, inst);
    }
}
