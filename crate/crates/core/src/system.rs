//! System-centric clearing: one continuous trade per seller-buyer pair,
//! cleared by welfare maximization alone or jointly with the network OPF.

use clarabel::solver::SolverStatus;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{NetworkCase, PeerSet, UtilityFunction};
use crate::opf::{
    build_opf, solve_opf, BlockKind, Cone, ConicProgram, OpfInput, OpfSolution, OpfStatus, PeerInjections,
    SolverOptions,
};
use crate::pricing::trade_charge;
use crate::trade::{GraphKind, TradeGraph};

/// Trades below this quantity, MW, are interior-point dust and not matched.
pub const QUANTITY_FLOOR: f64 = 1e-6;

/// One edge per (seller, buyer) pair, sellers outer, both in file order.
pub fn build_trade_graph_simple(peers: &PeerSet) -> TradeGraph {
    let edges: Vec<(usize, usize, f64)> = peers
        .sellers()
        .iter()
        .flat_map(|&s| peers.buyers().iter().map(move |&b| (s, b, 0.0)))
        .collect();
    TradeGraph::from_edges(GraphKind::Simple, peers, edges)
}

#[derive(Clone, Debug, Serialize)]
pub struct Clearing {
    pub graph: TradeGraph,
    /// Embedded OPF solution when cleared jointly with the network.
    pub opf: Option<OpfSolution>,
    /// Maximized objective, $/h: peer welfare, plus utility profit when
    /// co-optimized.
    pub welfare: f64,
    /// Output per peer (sellers) or consumption (buyers), MW, indexed like
    /// `PeerSet::peers`.
    pub peer_quantity: Vec<f64>,
}

impl Clearing {
    pub fn matched_volume(&self) -> f64 {
        self.graph.matched_volume()
    }
}

/// Clears the graph. With `coopt` the network OPF is embedded and its duals
/// are returned for settlement.
pub fn clear_system_centric(graph: &TradeGraph, peers: &PeerSet, case: &NetworkCase, coopt: bool) -> Result<Clearing> {
    let pairs: Vec<(usize, usize)> = graph.trades.iter().map(|t| (t.seller, t.buyer)).collect();
    let (quantities, opf, welfare) = if coopt {
        let input = OpfInput {
            case,
            injections: PeerInjections::CoOptimize { peers, trades: &pairs },
        };
        let sol = solve_opf(&build_opf(&input)?)?;
        match sol.status {
            OpfStatus::Optimal => {}
            OpfStatus::Infeasible => {
                return Err(Error::Solver(
                    "co-optimized clearing is infeasible: peer bounds cannot be met within network limits".into(),
                ))
            }
            OpfStatus::NumericFailure => {
                return Err(Error::Solver(format!(
                    "co-optimized clearing failed ({}); check for unbounded utilities",
                    sol.termination
                )))
            }
        }
        let welfare = -sol.objective;
        (sol.trade_quantity.clone(), Some(sol), welfare)
    } else {
        let (q, w) = clear_standalone(peers, &pairs)?;
        (q, None, w)
    };

    let mut graph = graph.clone();
    for (t, q) in graph.trades.iter_mut().zip(&quantities) {
        t.quantity = q.max(0.0);
    }
    graph.matched = graph
        .trades
        .iter()
        .filter(|t| t.quantity > QUANTITY_FLOOR)
        .map(|t| t.id)
        .collect();
    let peer_quantity = graph.trades.iter().fold(vec![0.0; peers.len()], |mut acc, t| {
        acc[t.seller] += t.quantity;
        acc[t.buyer] += t.quantity;
        acc
    });
    Ok(Clearing {
        graph,
        opf,
        welfare,
        peer_quantity,
    })
}

/// Welfare maximization over the trades alone, MW quantities.
fn clear_standalone(peers: &PeerSet, pairs: &[(usize, usize)]) -> Result<(Vec<f64>, f64)> {
    let mut p = ConicProgram::default();
    let sellers = peers.sellers();
    let buyers = peers.buyers();
    let g0 = p.num_vars();
    for &i in sellers {
        p.add_var(format!("g[{}]", peers.peers[i].id));
    }
    let d0 = p.num_vars();
    for &i in buyers {
        p.add_var(format!("d[{}]", peers.peers[i].id));
    }
    let t0 = p.num_vars();
    for &(s, b) in pairs {
        p.add_var(format!("t[{},{}]", peers.peers[s].id, peers.peers[b].id));
    }
    for (k, &i) in sellers.iter().enumerate() {
        let s = peers.peers[i].seller().expect("seller");
        p.q[g0 + k] = s.cost.c1;
        if s.cost.c2 > 0.0 {
            p.p_diag.push((g0 + k, 2.0 * s.cost.c2));
        }
    }
    for (k, &i) in buyers.iter().enumerate() {
        let b = peers.peers[i].buyer().expect("buyer");
        match b.utility {
            UtilityFunction::Surplus { upsilon } => {
                p.q[d0 + k] = -upsilon;
                p.constant += upsilon * b.d_min;
            }
            UtilityFunction::Quadratic { u1, u2 } => {
                p.q[d0 + k] = -u1;
                if u2 > 0.0 {
                    p.p_diag.push((d0 + k, 2.0 * u2));
                }
            }
        }
    }
    for (k, &i) in sellers.iter().enumerate() {
        let mut e = vec![(g0 + k, 1.0)];
        e.extend(
            pairs
                .iter()
                .enumerate()
                .filter(|(_, t)| t.0 == i)
                .map(|(w, _)| (t0 + w, -1.0)),
        );
        p.push_block(Cone::Zero, BlockKind::SellerAggregate(i), &[(&e, 0.0)]);
    }
    for (k, &i) in buyers.iter().enumerate() {
        let mut e = vec![(d0 + k, 1.0)];
        e.extend(
            pairs
                .iter()
                .enumerate()
                .filter(|(_, t)| t.1 == i)
                .map(|(w, _)| (t0 + w, -1.0)),
        );
        p.push_block(Cone::Zero, BlockKind::BuyerAggregate(i), &[(&e, 0.0)]);
    }
    for (k, &i) in sellers.iter().enumerate() {
        let s = peers.peers[i].seller().expect("seller");
        let x = g0 + k;
        p.push_block(
            Cone::Nonneg,
            BlockKind::SellerBounds(i),
            &[(&[(x, 1.0)], s.g_max), (&[(x, -1.0)], -s.g_min)],
        );
    }
    for (k, &i) in buyers.iter().enumerate() {
        let b = peers.peers[i].buyer().expect("buyer");
        let x = d0 + k;
        p.push_block(
            Cone::Nonneg,
            BlockKind::BuyerBounds(i),
            &[(&[(x, 1.0)], b.d_max), (&[(x, -1.0)], -b.d_min)],
        );
    }
    for w in 0..pairs.len() {
        p.push_block(Cone::Nonneg, BlockKind::TradeNonneg(w), &[(&[(t0 + w, -1.0)], 0.0)]);
    }
    if p.num_vars() == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let raw = p.solve(SolverOptions::default())?;
    match raw.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Solver(
                "welfare maximization is infeasible: peer bounds are inconsistent".into(),
            ))
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(Error::Solver(
                "welfare maximization is unbounded: check utility functions".into(),
            ))
        }
        other => return Err(Error::Solver(format!("welfare maximization failed: {other:?}"))),
    }
    let welfare = -p.objective(&raw.x);
    Ok((raw.x[t0..t0 + pairs.len()].to_vec(), welfare))
}

/// Prices the matched trades at the midpoint of the endpoint DLMPs and
/// charges half the DLMP difference, so buyers pay their own DLMP and sellers
/// receive theirs.
pub fn settle_system_centric(clearing: &mut Clearing, peers: &PeerSet) -> Result<()> {
    let lambda = match &clearing.opf {
        Some(sol) if sol.is_optimal() => sol.lambda.clone(),
        _ => return Err(Error::invalid("system-centric settlement", "missing network duals")),
    };
    let matched = clearing.graph.matched.clone();
    for w in matched {
        let t = &mut clearing.graph.trades[w];
        let (sb, bb) = (peers.peers[t.seller].bus, peers.peers[t.buyer].bus);
        let rho = 0.5 * (lambda[sb] + lambda[bb]);
        t.charge = trade_charge(&lambda, sb, bb)?;
        t.price_seller = rho;
        t.price_buyer = rho;
    }
    Ok(())
}
