use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::network::{BuyerSpec, CostFunction, DemandBound, PeerKind, PeerSpec, SellerSpec, UtilityFunction};

fn seller(id: u32, bus: usize, cost: f64, g_max: f64) -> PeerSpec {
    PeerSpec {
        id,
        bus,
        kind: PeerKind::Seller(SellerSpec {
            g_min: 0.0,
            g_max,
            cost: CostFunction::linear(cost),
        }),
    }
}

fn buyer(id: u32, bus: usize, upsilon: f64, d_min: f64, d_max: f64) -> PeerSpec {
    PeerSpec {
        id,
        bus,
        kind: PeerKind::Buyer(BuyerSpec {
            d_min,
            d_max,
            d_min_source: DemandBound::Value(d_min),
            d_max_source: DemandBound::Value(d_max),
            utility: UtilityFunction::Surplus { upsilon },
        }),
    }
}

fn offers(prices: &[f64]) -> Vec<Offer> {
    prices
        .iter()
        .enumerate()
        .map(|(trade, &price)| Offer {
            trade,
            price,
            charge: 0.0,
        })
        .collect()
}

fn config(size: f64, step: f64) -> MatchConfig {
    MatchConfig {
        trade_size: size,
        delta_rho: step,
        max_iterations: 100_000,
    }
}

#[test]
fn parallel_edges_follow_the_smaller_capacity() {
    let peers = PeerSet::new(vec![seller(1, 0, 10.0, 2.0), buyer(2, 1, 50.0, 0.0, 0.5)]).unwrap();
    assert_eq!(build_trade_graph_parallel(&peers, &config(0.1, 1.0)).unwrap().len(), 5);
    let peers = PeerSet::new(vec![seller(1, 0, 10.0, 2.0), buyer(2, 1, 50.0, 0.0, 0.2)]).unwrap();
    assert_eq!(
        build_trade_graph_parallel(&peers, &config(0.01, 1.0)).unwrap().len(),
        20
    );
    assert!(build_trade_graph_parallel(&peers, &config(3.0, 1.0))
        .unwrap()
        .is_empty());
    assert!(build_trade_graph_parallel(&peers, &config(0.0, 1.0)).is_err());
}

#[test]
fn seller_takes_the_two_best_prices() {
    let s = seller(1, 0, 10.0, 0.2);
    let sel = select_trades(&s, &offers(&[12.0, 11.0, 9.0]), 0.1);
    assert_eq!(sel.trades, vec![0, 1]);
    assert_eq!(sel, select_trades_exhaustive(&s, &offers(&[12.0, 11.0, 9.0]), 0.1));
}

#[test]
fn buyer_takes_only_the_cheap_trade() {
    let b = buyer(1, 0, 50.0, 0.0, 1.0);
    let sel = select_trades(&b, &offers(&[40.0, 55.0]), 0.1);
    assert_eq!(sel.trades, vec![0]);
    assert_eq!(sel, select_trades_exhaustive(&b, &offers(&[40.0, 55.0]), 0.1));
}

#[test]
fn large_charge_rejects_an_attractive_trade() {
    let b = buyer(1, 0, 50.0, 0.0, 1.0);
    let o = [Offer {
        trade: 0,
        price: 20.0,
        charge: 100.0,
    }];
    assert!(select_trades(&b, &o, 0.1).trades.is_empty());
    let s = seller(2, 0, 10.0, 1.0);
    assert!(select_trades(&s, &o, 0.1).trades.is_empty());
}

#[test]
fn buyer_floor_is_met_at_a_loss_or_flagged() {
    let b = buyer(1, 0, 50.0, 0.2, 0.3);
    let sel = select_trades(&b, &offers(&[70.0, 60.0, 80.0]), 0.1);
    assert_eq!(sel.trades, vec![0, 1]);
    assert!(sel.floor_met);
    let sel = select_trades(&b, &offers(&[70.0]), 0.1);
    assert_eq!(sel.trades, vec![0]);
    assert!(!sel.floor_met);
}

#[test]
fn single_pair_settles_just_above_cost() {
    let peers = PeerSet::new(vec![seller(1, 0, 10.0, 1.0), buyer(2, 1, 50.0, 0.0, 1.0)]).unwrap();
    let cfg = config(1.0, 1.0);
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let out = run_price_adjustment(&g, &peers, &[0.0], &cfg, None).unwrap();
    assert!(out.converged);
    assert_eq!(out.graph.matched, vec![0]);
    assert_eq!(out.book.settled_price(0), Some(11.0));
    assert!(verify_stability(&out.graph, &peers, &[0.0], &cfg).is_stable());
}

#[test]
fn no_price_clears_when_value_is_below_cost() {
    let peers = PeerSet::new(vec![seller(1, 0, 60.0, 1.0), buyer(2, 1, 50.0, 0.0, 1.0)]).unwrap();
    let cfg = config(0.5, 1.0);
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let out = run_price_adjustment(&g, &peers, &[0.0, 0.0], &cfg, None).unwrap();
    assert!(out.converged);
    assert!(out.graph.matched.is_empty());
    assert!(verify_stability(&out.graph, &peers, &[0.0, 0.0], &cfg).is_stable());
}

#[test]
fn detector_fires_on_a_profitable_unmatched_trade() {
    let peers = PeerSet::new(vec![seller(1, 0, 10.0, 1.0), buyer(2, 1, 50.0, 0.0, 1.0)]).unwrap();
    let cfg = config(1.0, 1.0);
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let report = verify_stability(&g, &peers, &[0.0], &cfg);
    assert_eq!(report.blocking.len(), 1);
    assert_eq!(report.blocking[0].price, 11.0);
}

#[test]
fn inelastic_buyer_stalls_at_the_ceiling() {
    let peers = PeerSet::new(vec![seller(1, 0, 200.0, 1.0), buyer(2, 1, 50.0, 1.0, 1.0)]).unwrap();
    let cfg = config(1.0, 5.0);
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let out = run_price_adjustment(&g, &peers, &[0.0], &cfg, None).unwrap();
    assert!(out.converged);
    assert_eq!(out.stalled, vec![0]);
    assert_eq!(out.unmet_floors, Vec::<usize>::new());
    assert!(out.graph.matched.is_empty());
    assert_eq!(out.book.price(0), 55.0);
}

#[test]
fn iteration_limit_returns_partial_result() {
    let peers = PeerSet::new(vec![seller(1, 0, 30.0, 1.0), buyer(2, 1, 50.0, 0.0, 1.0)]).unwrap();
    let cfg = MatchConfig {
        max_iterations: 3,
        ..config(1.0, 1.0)
    };
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let out = run_price_adjustment(&g, &peers, &[0.0], &cfg, None).unwrap();
    assert!(!out.converged);
    assert!(out.graph.matched.is_empty());
    assert_eq!(out.trace.len(), 3);
}

#[test]
fn trace_is_written_as_csv() {
    let peers = PeerSet::new(vec![seller(1, 0, 2.0, 1.0), buyer(2, 1, 50.0, 0.0, 1.0)]).unwrap();
    let cfg = config(1.0, 1.0);
    let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
    let out = run_price_adjustment(&g, &peers, &[0.0], &cfg, None).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iteration,settled,raised,volume,mean_settled_price,max_price\n"));
    assert_eq!(text.lines().count(), out.trace.len() + 1);
}

fn random_instance(rng: &mut ChaCha8Rng) -> PeerSet {
    let ns = rng.gen_range(1..=4);
    let nb = rng.gen_range(1..=6);
    let mut specs = Vec::new();
    for k in 0..ns {
        specs.push(seller(
            k as u32 + 1,
            k,
            rng.gen_range(1.0..40.0),
            rng.gen_range(1..=4) as f64 * 0.1,
        ));
    }
    for k in 0..nb {
        let d_max = rng.gen_range(1..=3) as f64 * 0.1;
        let d_min = if rng.gen_bool(0.2) { 0.1 } else { 0.0 };
        specs.push(buyer((ns + k) as u32 + 1, k, rng.gen_range(5.0..60.0), d_min, d_max));
    }
    PeerSet::new(specs).unwrap()
}

#[test]
fn random_matches_are_stable_and_capacity_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = config(0.1, 0.5);
    for _ in 0..40 {
        let peers = random_instance(&mut rng);
        let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
        let charges: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let out = run_price_adjustment(&g, &peers, &charges, &cfg, None).unwrap();
        assert!(out.converged);
        let by_peer = out.graph.matched_by_peer(peers.len());
        for (i, p) in peers.peers.iter().enumerate() {
            assert!(by_peer[i] <= p.capacity() + 1e-12);
        }
        let report = verify_stability(&out.graph, &peers, &charges, &cfg);
        assert!(report.is_stable(), "{:?}", report.blocking);
        let again = run_price_adjustment(&g, &peers, &charges, &cfg, None).unwrap();
        assert_eq!(again.book, out.book);
    }
}

proptest! {
    #[test]
    fn greedy_selection_matches_enumeration(
        prices in prop::collection::vec(0.0f64..60.0, 0..10),
        charges in prop::collection::vec(-3.0f64..3.0, 10),
        cost in 1.0f64..50.0,
        c2 in prop_oneof![Just(0.0), 0.0f64..100.0],
        cap in 0usize..6,
        floor in 0usize..3,
        as_buyer in any::<bool>(),
    ) {
        let size = 0.1;
        let peer = if as_buyer {
            buyer(1, 0, cost, (floor.min(cap)) as f64 * size, cap as f64 * size)
        } else {
            PeerSpec {
                id: 1,
                bus: 0,
                kind: PeerKind::Seller(SellerSpec {
                    g_min: (floor.min(cap)) as f64 * size,
                    g_max: cap as f64 * size,
                    cost: CostFunction { c1: cost, c2 },
                }),
            }
        };
        let o: Vec<Offer> = prices
            .iter()
            .zip(&charges)
            .enumerate()
            .map(|(trade, (&price, &charge))| Offer { trade, price, charge })
            .collect();
        let greedy = select_trades(&peer, &o, size);
        let exact = select_trades_exhaustive(&peer, &o, size);
        prop_assert_eq!(&greedy.trades, &exact.trades);
        prop_assert!((greedy.value - exact.value).abs() < 1e-9);
        prop_assert_eq!(greedy.floor_met, exact.floor_met);
    }

    #[test]
    fn seller_prices_never_fall_during_a_run(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peers = random_instance(&mut rng);
        let cfg = MatchConfig { max_iterations: 1, ..config(0.1, 0.5) };
        let g = build_trade_graph_parallel(&peers, &cfg).unwrap();
        let charges = vec![0.0; g.len()];
        let mut book: Option<PriceBook> = None;
        for _ in 0..60 {
            let out = run_price_adjustment(&g, &peers, &charges, &cfg, book.as_ref()).unwrap();
            if let Some(prev) = &book {
                for w in 0..g.len() {
                    prop_assert!(out.book.ticks[w] >= prev.ticks[w]);
                }
            }
            book = Some(out.book);
        }
    }
}

#[test]
fn rebasing_carries_the_net_price() {
    let mut book = PriceBook::new(3, 0.5);
    book.ticks = vec![4, 1, 10];
    let next = book.rebased(&[0.0, 1.0, 2.0], &[1.0, -1.0, 2.2]);
    assert_eq!(next.ticks, vec![6, 0, 10]);
}
