use super::*;
use crate::network::synthetic::FeederSpec;
use crate::network::{BuyerSpec, CostFunction, DemandBound, PeerKind, PeerSpec, SellerSpec};

fn solve_fixed(case: &NetworkCase) -> OpfSolution {
    let input = OpfInput {
        case,
        injections: PeerInjections::none(case),
    };
    solve_opf(&build_opf(&input).unwrap()).unwrap()
}

/// Exact two-bus power flow by fixed-point iteration on the DistFlow
/// equations with the root pinned at `v0`; returns the root import.
fn two_bus_import(p: f64, q: f64, r: f64, x: f64, v0: f64) -> f64 {
    let mut a = 0.0;
    for _ in 0..200 {
        let fp = p + r * a;
        let fq = q + x * a;
        a = (fp * fp + fq * fq) / v0;
    }
    p + r * a
}

#[test]
fn two_bus_lambda_matches_finite_difference_oracle() {
    let spec = FeederSpec::default();
    let case = spec.chain(&[(1.0, 0.0)]);
    let sol = solve_fixed(&case);
    assert!(sol.is_optimal(), "{}", sol.termination);

    let h = 1e-4;
    let cw = spec.wholesale_price;
    let dp =
        (two_bus_import(1.0 + h, 0.0, 0.01, 0.01, 1.0) - two_bus_import(1.0 - h, 0.0, 0.01, 0.01, 1.0)) / (2.0 * h);
    let oracle = cw * dp;
    assert!((sol.lambda[1] - oracle).abs() < 1e-5, "{} vs {}", sol.lambda[1], oracle);
    assert!((sol.lambda[0] - cw).abs() < 1e-6);
    assert!(sol.lambda[1] > sol.lambda[0]);
    assert!((sol.p0 - two_bus_import(1.0, 0.0, 0.01, 0.01, 1.0)).abs() < 1e-7);
}

#[test]
fn counts_follow_buses_and_lines() {
    let spec = FeederSpec {
        rating: Some(5.0),
        ..FeederSpec::default()
    };
    let case = spec.chain(&[(0.1, 0.0), (0.2, 0.1), (0.1, 0.05)]);
    let input = OpfInput {
        case: &case,
        injections: PeerInjections::none(&case),
    };
    let prog = build_opf(&input).unwrap();
    assert_eq!(prog.active_balance_rows(), 4);
    assert_eq!(prog.reactive_balance_rows(), 4);
    assert_eq!(prog.current_cones(), 3);
    assert_eq!(prog.rating_cones(), 6);
    assert!(prog.layout.sellers.is_empty());
}

#[test]
fn zero_load_is_a_fixed_point() {
    let case = FeederSpec::default().chain(&[(0.0, 0.0), (0.0, 0.0)]);
    let sol = solve_fixed(&case);
    assert!(sol.is_optimal());
    for l in 0..2 {
        assert!(sol.fp[l].abs() < 1e-7 && sol.fq[l].abs() < 1e-7 && sol.a[l].abs() < 1e-7);
    }
    assert!(sol.p0.abs() < 1e-7);
    let report = check_exactness(&sol, &case);
    assert!(report.max_gap() < 1e-9, "{:?}", report.gaps);
}

#[test]
fn demand_beyond_ratings_is_infeasible() {
    let spec = FeederSpec {
        rating: Some(0.5),
        ..FeederSpec::default()
    };
    let case = spec.chain(&[(1.0, 0.0)]);
    let sol = solve_fixed(&case);
    assert_eq!(sol.status, OpfStatus::Infeasible, "{}", sol.termination);
    assert!(sol.lambda.iter().all(|l| l.is_nan()));
}

#[test]
fn exactness_detector_fires_on_perturbed_current() {
    let case = FeederSpec::default().chain(&[(0.5, 0.2), (0.3, 0.1)]);
    let mut sol = solve_fixed(&case);
    let report = check_exactness(&sol, &case);
    assert!(report.is_exact(), "{:?}", report.gaps);
    sol.a[1] += 0.1;
    let report = check_exactness(&sol, &case);
    assert_eq!(report.flagged, vec![1]);
}

#[test]
fn lambda_is_marginal_cost_of_demand() {
    let spec = FeederSpec {
        base_mva: 10.0,
        r: 0.02,
        x: 0.03,
        ..FeederSpec::default()
    };
    let loads = [(1.0, 0.3), (2.0, 0.5), (1.5, 0.2)];
    let base = solve_fixed(&spec.chain(&loads));
    let h = 1e-4;
    for bus in 0..loads.len() {
        let mut up = loads;
        up[bus].0 += h;
        let mut down = loads;
        down[bus].0 -= h;
        let fd = (solve_fixed(&spec.chain(&up)).objective - solve_fixed(&spec.chain(&down)).objective) / (2.0 * h);
        // The objective also carries the tariff income on the utility-served share.
        let fd = fd + spec.tariff;
        let lam = base.lambda[bus + 1];
        assert!(
            (fd - lam).abs() < 1e-3 * lam.abs().max(1.0),
            "bus {bus}: fd {fd} vs λ {lam}"
        );
    }
}

#[test]
fn strong_duality_and_balance() {
    let spec = FeederSpec {
        base_mva: 10.0,
        r: 0.02,
        x: 0.03,
        rating: Some(20.0),
        ..FeederSpec::default()
    };
    let case = spec.tree(&[(1, 1.0, 0.3), (2, 2.0, 0.5), (2, 1.5, 0.2), (1, 0.7, 0.1)]);
    let sol = solve_fixed(&case);
    assert!(sol.is_optimal());
    let scale = sol.objective.abs().max(1.0);
    assert!((sol.objective - sol.dual_objective).abs() < 1e-6 * scale);
    let w = fixed_withdrawals(&case, &vec![BusInjection::default(); case.buses.len()]);
    assert!(sol.balance_residual(&case, &w) < 1e-6);
    // Conservation: import covers demand plus losses.
    let demand: f64 = w.iter().sum();
    assert!((sol.p0 - demand - sol.losses(&case)).abs() < 1e-6);
    // Ratings are slack, so their multipliers vanish.
    assert!(sol.eta_plus.iter().chain(&sol.eta_minus).all(|e| e.abs() < 1e-6));
}

#[test]
fn binding_rating_has_positive_multiplier() {
    let spec = FeederSpec {
        rating: Some(1.2),
        ..FeederSpec::default()
    };
    let mut case = spec.chain(&[(0.0, 0.0), (0.9, 0.0)]);
    case.generators.push(crate::network::UtilityGenerator {
        bus: 2,
        cost: 80.0,
        p_min: 0.0,
        p_max: 1.0,
        q_min: -1.0,
        q_max: 1.0,
    });
    case.lines[0].rating = Some(0.5);
    let sol = solve_fixed(&case);
    assert!(sol.is_optimal(), "{}", sol.termination);
    assert!(sol.eta_plus[0] > 1e-3 || sol.eta_minus[0] > 1e-3);
    assert!(sol.eta_plus.iter().chain(&sol.eta_minus).all(|&e| e >= -1e-7));
    assert!(sol.lambda[2] > sol.lambda[0] + 1.0);
}

#[test]
fn near_lossless_network_has_uniform_prices() {
    let spec = FeederSpec {
        r: 1e-6,
        x: 1e-6,
        ..FeederSpec::default()
    };
    let case = spec.tree(&[(1, 0.5, 0.1), (2, 0.4, 0.1), (1, 0.3, 0.0)]);
    let sol = solve_fixed(&case);
    for l in &sol.lambda {
        assert!((l - spec.wholesale_price).abs() < 1e-3, "{:?}", sol.lambda);
    }
}

#[test]
fn co_optimization_adds_peer_variables() {
    let spec = FeederSpec {
        gamma: 1.0,
        ..FeederSpec::default()
    };
    let case = spec.chain(&[(0.3, 0.0), (0.2, 0.0)]);
    let peers = PeerSet::new(vec![
        PeerSpec {
            id: 1,
            bus: 1,
            kind: PeerKind::Seller(SellerSpec {
                g_min: 0.0,
                g_max: 1.0,
                cost: CostFunction::linear(10.0),
            }),
        },
        PeerSpec {
            id: 2,
            bus: 2,
            kind: PeerKind::Buyer(BuyerSpec {
                d_min: 0.2,
                d_max: 0.2,
                d_min_source: DemandBound::Value(0.2),
                d_max_source: DemandBound::Value(0.2),
                utility: UtilityFunction::Surplus { upsilon: 100.0 },
            }),
        },
    ])
    .unwrap();
    let trades = [(0, 1)];
    let input = OpfInput {
        case: &case,
        injections: PeerInjections::CoOptimize {
            peers: &peers,
            trades: &trades,
        },
    };
    let prog = build_opf(&input).unwrap();
    assert_eq!(prog.mode, OpfMode::CoOptimize);
    assert_eq!(prog.layout.sellers.len(), 1);
    assert_eq!(prog.layout.buyers.len(), 1);
    assert_eq!(prog.layout.n_trade, 1);
    let sol = solve_opf(&prog).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.trade_quantity[0] - 0.2).abs() < 1e-7);
    assert!((sol.seller_output[0] - 0.2).abs() < 1e-7);
    // The peer's bus imports the remaining demand at bus 2.
    let w = coopt_withdrawals(&case, &peers, &sol);
    assert!(sol.balance_residual(&case, &w) < 1e-6);
}

#[test]
fn fixed_input_length_is_checked() {
    let case = FeederSpec::default().chain(&[(0.1, 0.0)]);
    let input = OpfInput {
        case: &case,
        injections: PeerInjections::Fixed(vec![BusInjection::default()]),
    };
    assert!(build_opf(&input).is_err());
}

#[test]
fn resistance_free_line_is_reported_tight() {
    let spec = FeederSpec {
        r: 0.0,
        x: 1e-6,
        ..FeederSpec::default()
    };
    let case = spec.chain(&[(0.3, 0.1), (0.2, 0.05)]);
    let sol = solve_fixed(&case);
    assert!(sol.is_optimal());
    assert!(check_exactness(&sol, &case).max_gap() < 1e-9);
}
