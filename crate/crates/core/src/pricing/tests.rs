use proptest::prelude::*;

use super::*;
use crate::network::synthetic::FeederSpec;
use crate::network::{BuyerSpec, CostFunction, DemandBound, PeerKind, PeerSpec, SellerSpec, UtilityFunction};
use crate::trade::GraphKind;

fn seller(id: u32, bus: usize, cost: f64) -> PeerSpec {
    PeerSpec {
        id,
        bus,
        kind: PeerKind::Seller(SellerSpec {
            g_min: 0.0,
            g_max: 10.0,
            cost: CostFunction::linear(cost),
        }),
    }
}

fn buyer(id: u32, bus: usize) -> PeerSpec {
    PeerSpec {
        id,
        bus,
        kind: PeerKind::Buyer(BuyerSpec {
            d_min: 0.0,
            d_max: 10.0,
            d_min_source: DemandBound::Value(0.0),
            d_max_source: DemandBound::Value(10.0),
            utility: UtilityFunction::Surplus { upsilon: 100.0 },
        }),
    }
}

#[test]
fn same_bus_trade_has_no_charge() {
    let lambda = [50.0, 51.0, 53.0];
    assert_eq!(trade_charge(&lambda, 2, 2).unwrap(), 0.0);
    assert_eq!(trade_charge(&lambda, 0, 2).unwrap(), 1.5);
    let c = trade_charge(&lambda, 2, 1).unwrap();
    assert!(c < 0.0);
    assert!(trade_charge(&lambda, 0, 7).is_err());
}

#[test]
fn negative_charge_discounts_the_buyer() {
    let case = FeederSpec::default().chain(&[(0.0, 0.0), (0.0, 0.0)]);
    let peers = PeerSet::new(vec![seller(1, 2, 10.0), buyer(2, 1)]).unwrap();
    let mut g = TradeGraph::from_edges(GraphKind::Simple, &peers, [(0, 1, 0.5)]);
    let table = ChargeTable::from_lambda(&g, &peers, &[50.0, 49.0, 52.0]).unwrap();
    g.trades[0].charge = table.charges[0];
    g.trades[0].price_buyer = 30.0;
    g.trades[0].price_seller = 30.0;
    g.matched = vec![0];
    let s = Settlement::from_graph(&g, &peers, &case);
    assert!(s.rows[0].charge < 0.0);
    assert!(s.rows[0].buyer_payment < 30.0 * 0.5);
    assert!((table.total_nuc(&g) - s.nuc).abs() < 1e-12);
}

#[test]
fn average_charge_of_single_trade_and_empty_set() {
    let peers = PeerSet::new(vec![seller(1, 0, 10.0), buyer(2, 1)]).unwrap();
    let mut g = TradeGraph::from_edges(GraphKind::Simple, &peers, [(0, 1, 0.3)]);
    assert_eq!(average_charge(&g), None);
    g.trades[0].charge = 0.42;
    g.matched = vec![0];
    assert!((average_charge(&g).unwrap() - 0.42).abs() < 1e-15);
}

#[test]
fn revenue_reductions() {
    let spec = FeederSpec {
        tariff: 120.0,
        ..FeederSpec::default()
    };
    let case = spec.chain(&[(0.5, 0.0), (0.3, 0.0)]);
    let r = utility_revenue(&case, 0.0, Architecture::infer(&case));
    assert_eq!(r.architecture, Architecture::Current);
    assert!((r.total - 120.0 * 0.8).abs() < 1e-9);
    let mixed = utility_revenue(&case, 0.0, Architecture::Mixed);
    assert_eq!(mixed.total, r.total);

    let case = case.with_uniform_gamma(1.0).unwrap();
    let r = utility_revenue(&case, 3.5, Architecture::infer(&case));
    assert_eq!(r.architecture, Architecture::P2p);
    assert_eq!(r.total, 3.5);
    assert_eq!(utility_revenue(&case, 3.5, Architecture::Mixed).total, 3.5);
}

proptest! {
    #[test]
    fn charge_is_antisymmetric(l in prop::collection::vec(-100.0f64..200.0, 2..8), i in 0usize..8, j in 0usize..8) {
        let (i, j) = (i % l.len(), j % l.len());
        let a = trade_charge(&l, i, j).unwrap();
        let b = trade_charge(&l, j, i).unwrap();
        prop_assert_eq!(a, -b);
    }

    #[test]
    fn settlement_conserves_money(
        trades in prop::collection::vec((0usize..3, 0usize..3, 0.0f64..2.0, 0.0f64..100.0), 0..20),
        lambda in prop::collection::vec(30.0f64..70.0, 4),
    ) {
        let case = FeederSpec::default().chain(&[(0.0, 0.0); 3]);
        let peers = PeerSet::new(vec![
            seller(1, 0, 10.0), seller(2, 1, 12.0), seller(3, 2, 9.0),
            buyer(4, 1), buyer(5, 2), buyer(6, 3),
        ]).unwrap();
        let mut g = TradeGraph::from_edges(
            GraphKind::Simple,
            &peers,
            trades.iter().map(|&(s, b, q, _)| (s, 3 + b, q)),
        );
        let table = ChargeTable::from_lambda(&g, &peers, &lambda).unwrap();
        for (t, &(_, _, _, rho)) in g.trades.iter_mut().zip(&trades) {
            t.charge = table.charges[t.id];
            t.price_buyer = rho;
            t.price_seller = rho;
        }
        g.matched = (0..g.len()).collect();
        prop_assert!(g.check_partition(&peers).is_ok());
        let s = Settlement::from_graph(&g, &peers, &case);
        let scale = s.consumer_payments.abs().max(1.0);
        prop_assert!(s.conservation_error().abs() <= 1e-12 * scale);
        prop_assert!((s.nuc - table.total_nuc(&g)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn mixed_revenue_is_continuous_in_gamma(gamma in 0.0f64..=1.0, nuc in -5.0f64..5.0) {
        let case = FeederSpec { tariff: 90.0, ..FeederSpec::default() }.chain(&[(0.4, 0.0), (0.6, 0.0)]);
        let at = |g: f64| utility_revenue(&case.clone().with_uniform_gamma(g).unwrap(), nuc, Architecture::Mixed).total;
        let expected = 90.0 * (1.0 - gamma) + nuc;
        prop_assert!((at(gamma) - expected).abs() < 1e-9);
        prop_assert_eq!(at(0.0), utility_revenue(&case, 0.0, Architecture::Current).total + nuc);
        prop_assert_eq!(at(1.0), nuc);
    }
}
