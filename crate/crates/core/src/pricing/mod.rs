//! DLMP recovery, network usage charges, settlement and utility revenue.

mod dlmp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkCase, PeerSet};
use crate::trade::TradeGraph;

pub use dlmp::{
    coefficients, denominator, recover_dlmp, Coefficients, DlmpVector, LineCheck, DEGENERACY_TOL, UNLOADED_TOL,
};

/// Each side of a trade pays half the DLMP difference.
pub const CHARGE_SPLIT: f64 = 2.0;

/// `c = (λ_buyer - λ_seller) / 2`, $/MWh. Negative charges are passed through.
pub fn trade_charge(lambda: &[f64], seller_bus: usize, buyer_bus: usize) -> Result<f64> {
    let ls = lambda
        .get(seller_bus)
        .ok_or_else(|| Error::invalid("trade", format!("seller bus index {seller_bus} has no price")))?;
    let lb = lambda
        .get(buyer_bus)
        .ok_or_else(|| Error::invalid("trade", format!("buyer bus index {buyer_bus} has no price")))?;
    Ok((lb - ls) / CHARGE_SPLIT)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChargeTable {
    /// Per-trade charge, indexed by trade id, $/MWh.
    pub charges: Vec<f64>,
    pub split: f64,
}

impl ChargeTable {
    pub fn uniform(n: usize, value: f64) -> Self {
        ChargeTable {
            charges: vec![value; n],
            split: CHARGE_SPLIT,
        }
    }

    /// DLMP-based charges for every trade of the graph.
    pub fn from_lambda(graph: &TradeGraph, peers: &PeerSet, lambda: &[f64]) -> Result<Self> {
        let charges = graph
            .trades
            .iter()
            .map(|t| trade_charge(lambda, peers.peers[t.seller].bus, peers.peers[t.buyer].bus))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChargeTable {
            charges,
            split: CHARGE_SPLIT,
        })
    }

    /// Total collected over the matched trades, $/h.
    pub fn total_nuc(&self, graph: &TradeGraph) -> f64 {
        graph
            .matched_trades()
            .map(|t| self.split * self.charges[t.id] * t.quantity)
            .sum()
    }
}

/// Quantity-weighted mean charge over the matched set, `None` when it is empty.
pub fn average_charge(graph: &TradeGraph) -> Option<f64> {
    let (cp, p) = graph
        .matched_trades()
        .fold((0.0, 0.0), |(cp, p), t| (cp + t.charge * t.quantity, p + t.quantity));
    (p > 0.0).then(|| cp / p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SettlementRow {
    pub trade: usize,
    pub seller: u32,
    pub buyer: u32,
    pub seller_bus: u32,
    pub buyer_bus: u32,
    /// MW.
    pub quantity: f64,
    /// $/MWh.
    pub price: f64,
    /// $/MWh.
    pub charge: f64,
    /// `(ρ + c) p`, $/h.
    pub buyer_payment: f64,
    /// `(ρ - c) p`, $/h.
    pub seller_revenue: f64,
}

/// Per-trade and aggregate settlement of a matched trade set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settlement {
    pub rows: Vec<SettlementRow>,
    pub consumer_payments: f64,
    pub producer_revenues: f64,
    pub nuc: f64,
    /// `Σ C_n(g_n)` over sellers at their matched output, $/h.
    pub generation_cost: f64,
    pub volume: f64,
}

impl Settlement {
    /// Settles the matched trades at their buying price and charge.
    pub fn from_graph(graph: &TradeGraph, peers: &PeerSet, case: &NetworkCase) -> Settlement {
        let rows: Vec<SettlementRow> = graph
            .matched_trades()
            .map(|t| {
                let (s, b) = (&peers.peers[t.seller], &peers.peers[t.buyer]);
                let price = t.price_buyer;
                SettlementRow {
                    trade: t.id,
                    seller: s.id,
                    buyer: b.id,
                    seller_bus: case.buses[s.bus].id,
                    buyer_bus: case.buses[b.bus].id,
                    quantity: t.quantity,
                    price,
                    charge: t.charge,
                    buyer_payment: (price + t.charge) * t.quantity,
                    seller_revenue: (price - t.charge) * t.quantity,
                }
            })
            .collect();
        let consumer_payments = rows.iter().map(|r| r.buyer_payment).sum();
        let producer_revenues = rows.iter().map(|r| r.seller_revenue).sum();
        let nuc = rows.iter().map(|r| CHARGE_SPLIT * r.charge * r.quantity).sum();
        let sold = graph.matched_by_peer(peers.len());
        let generation_cost = peers
            .sellers()
            .iter()
            .map(|&i| peers.peers[i].seller().expect("seller").cost.eval(sold[i]))
            .sum();
        Settlement {
            volume: rows.iter().map(|r| r.quantity).sum(),
            rows,
            consumer_payments,
            producer_revenues,
            nuc,
            generation_cost,
        }
    }

    /// `payments - revenues - NUC`; zero up to rounding.
    pub fn conservation_error(&self) -> f64 {
        self.consumer_payments - self.producer_revenues - self.nuc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// All demand served by the utility at tariff.
    Current,
    /// Utility serves `(1 - Γ_b)` of each bus and collects charges on trades.
    Mixed,
    /// All demand traded between peers; the utility earns charges only.
    P2p,
}

impl Architecture {
    pub fn infer(case: &NetworkCase) -> Architecture {
        if case.buses.iter().all(|b| b.gamma == 0.0) {
            Architecture::Current
        } else if case.buses.iter().all(|b| b.gamma == 1.0) {
            Architecture::P2p
        } else {
            Architecture::Mixed
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevenueReport {
    pub architecture: Architecture,
    /// Π^u, $/h.
    pub total: f64,
    pub tariff_income: f64,
    pub nuc_income: f64,
}

/// Utility revenue under the given architecture.
pub fn utility_revenue(case: &NetworkCase, nuc: f64, architecture: Architecture) -> RevenueReport {
    let mva = case.base.mva;
    let (tariff_income, nuc_income) = match architecture {
        Architecture::Current => (case.buses.iter().map(|b| b.tariff * b.demand_p).sum::<f64>() * mva, 0.0),
        Architecture::Mixed => (
            case.buses
                .iter()
                .map(|b| b.tariff * b.demand_p * (1.0 - b.gamma))
                .sum::<f64>()
                * mva,
            nuc,
        ),
        Architecture::P2p => (0.0, nuc),
    };
    RevenueReport {
        architecture,
        total: tariff_income + nuc_income,
        tariff_income,
        nuc_income,
    }
}

#[cfg(test)]
mod tests;
