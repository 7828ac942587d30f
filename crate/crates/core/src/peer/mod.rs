//! Peer-centric matching: standard-size parallel trades, per-peer selection
//! and an ascending price adjustment to a stable match.

mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PeerSet;
use crate::trade::{GraphKind, TradeGraph};

pub use select::{select_trades, select_trades_exhaustive, Offer, Selection};

/// Slack used when converting capacities to whole trade units.
const UNIT_ROUNDING: f64 = 1e-9;
/// Gains at or below this, $/h, do not count as improvements.
const GAIN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Standard trade size P, MW.
    pub trade_size: f64,
    /// Price step, $/MWh.
    pub delta_rho: f64,
    pub max_iterations: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            trade_size: 0.01,
            delta_rho: 0.1,
            max_iterations: 100_000,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trade_size > 0.0 && self.trade_size.is_finite()) {
            return Err(Error::Config(format!(
                "trade size must be positive, got {}",
                self.trade_size
            )));
        }
        if !(self.delta_rho > 0.0 && self.delta_rho.is_finite()) {
            return Err(Error::Config(format!(
                "price step must be positive, got {}",
                self.delta_rho
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Whole trade units that fit in `quantity` MW.
    pub fn units(&self, quantity: f64) -> usize {
        (quantity / self.trade_size + UNIT_ROUNDING).floor().max(0.0) as usize
    }
}

/// Parallel edges of size P: `min(Gmax, Dmax) / P` per seller-buyer pair,
/// sellers outer, buyers inner, both in file order.
pub fn build_trade_graph_parallel(peers: &PeerSet, config: &MatchConfig) -> Result<TradeGraph> {
    config.validate()?;
    let mut edges = Vec::new();
    for &s in peers.sellers() {
        for &b in peers.buyers() {
            let k = config.units(peers.peers[s].capacity().min(peers.peers[b].capacity()));
            edges.extend(std::iter::repeat_n((s, b, config.trade_size), k));
        }
    }
    if edges.is_empty() && !peers.sellers().is_empty() && !peers.buyers().is_empty() {
        log::warn!(
            "trade size {} MW exceeds every seller-buyer capacity; the trade graph is empty",
            config.trade_size
        );
    }
    Ok(TradeGraph::from_edges(
        GraphKind::Parallel {
            size: config.trade_size,
        },
        peers,
        edges,
    ))
}

/// Prices move in whole steps of Δρ; both sides of a trade quote the same
/// price, so a trade settles at the price both accepted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceBook {
    pub delta_rho: f64,
    /// Price of each trade in steps of `delta_rho`.
    pub ticks: Vec<u64>,
    pub settled: Vec<bool>,
}

impl PriceBook {
    pub fn new(n_trades: usize, delta_rho: f64) -> Self {
        PriceBook {
            delta_rho,
            ticks: vec![0; n_trades],
            settled: vec![false; n_trades],
        }
    }

    /// Keeps prices of a previous book for a graph of the same shape;
    /// settlement flags are cleared.
    pub fn warm_start(previous: &PriceBook, n_trades: usize, delta_rho: f64) -> Self {
        let mut book = PriceBook::new(n_trades, delta_rho);
        if previous.ticks.len() == n_trades && previous.delta_rho == delta_rho {
            book.ticks.clone_from(&previous.ticks);
        }
        book
    }

    /// Moves each price by the change in its charge, so the seller's net
    /// price is carried into the next round. Ticks are rounded down and
    /// never drop below zero.
    pub fn rebased(&self, old_charges: &[f64], new_charges: &[f64]) -> Self {
        let mut book = self.clone();
        for (w, t) in book.ticks.iter_mut().enumerate() {
            let shift = ((new_charges[w] - old_charges[w]) / self.delta_rho + UNIT_ROUNDING).floor() as i64;
            *t = (*t as i64 + shift).max(0) as u64;
        }
        book
    }

    pub fn price(&self, trade: usize) -> f64 {
        self.ticks[trade] as f64 * self.delta_rho
    }

    pub fn seller_price(&self, trade: usize) -> f64 {
        self.price(trade)
    }

    pub fn buyer_price(&self, trade: usize) -> f64 {
        self.price(trade)
    }

    pub fn settled_price(&self, trade: usize) -> Option<f64> {
        self.settled[trade].then(|| self.price(trade))
    }
}

/// One line of the convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub settled: usize,
    pub raised: usize,
    pub volume: f64,
    pub mean_settled_price: f64,
    pub max_price: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchOutcome {
    /// Graph with matched set, settled prices and quantities filled in.
    pub graph: TradeGraph,
    pub book: PriceBook,
    pub iterations: usize,
    /// False when the iteration limit stopped the loop.
    pub converged: bool,
    /// Trades still rejected by the seller at the price ceiling.
    pub stalled: Vec<usize>,
    /// Peers whose floor could not be met with the available trades.
    pub unmet_floors: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

/// Price above which no buyer with the given charges accepts a trade.
pub fn price_ceiling(peers: &PeerSet, charges: &[f64], delta_rho: f64) -> f64 {
    let min_charge = charges.iter().copied().fold(0.0, f64::min);
    peers.max_valuation() - min_charge + delta_rho
}

fn offers_of(
    graph: &TradeGraph,
    peer: usize,
    book: &PriceBook,
    charges: &[f64],
    filter: impl Fn(usize) -> bool,
) -> Vec<Offer> {
    graph
        .trades_of(peer)
        .iter()
        .copied()
        .filter(|&w| filter(w))
        .map(|w| Offer {
            trade: w,
            price: book.price(w),
            charge: charges[w],
        })
        .collect()
}

/// Ascending price adjustment. Each iteration buyers select from all their
/// trades at the current prices, then sellers select among the trades their
/// buyers accepted. Trades chosen by both settle; trades accepted by the
/// buyer and rejected by the seller rise by Δρ; trades the buyer rejects
/// stay dormant. The loop stops when no price moves.
pub fn run_price_adjustment(
    graph: &TradeGraph,
    peers: &PeerSet,
    charges: &[f64],
    config: &MatchConfig,
    warm: Option<&PriceBook>,
) -> Result<MatchOutcome> {
    config.validate()?;
    if charges.len() != graph.len() {
        return Err(Error::Config(format!(
            "{} charges given for {} trades",
            charges.len(),
            graph.len()
        )));
    }
    let size = config.trade_size;
    let n = graph.len();
    let mut book = match warm {
        Some(prev) => PriceBook::warm_start(prev, n, config.delta_rho),
        None => PriceBook::new(n, config.delta_rho),
    };
    let ceiling = price_ceiling(peers, charges, config.delta_rho);
    let max_ticks = (ceiling / config.delta_rho + UNIT_ROUNDING).floor() as u64;

    let mut trace = Vec::new();
    let mut accepted_b = vec![false; n];
    let mut accepted_s = vec![false; n];
    let mut unmet = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stalled = Vec::new();
    while iterations < config.max_iterations {
        iterations += 1;
        let buyer_sel: Vec<Selection> = peers
            .buyers()
            .par_iter()
            .map(|&m| select_trades(&peers.peers[m], &offers_of(graph, m, &book, charges, |_| true), size))
            .collect();
        accepted_b.iter_mut().for_each(|x| *x = false);
        for sel in &buyer_sel {
            for &w in &sel.trades {
                accepted_b[w] = true;
            }
        }
        let seller_sel: Vec<Selection> = peers
            .sellers()
            .par_iter()
            .map(|&s| {
                select_trades(
                    &peers.peers[s],
                    &offers_of(graph, s, &book, charges, |w| accepted_b[w]),
                    size,
                )
            })
            .collect();
        accepted_s.iter_mut().for_each(|x| *x = false);
        for sel in &seller_sel {
            for &w in &sel.trades {
                accepted_s[w] = true;
            }
        }

        let mut raised = 0;
        stalled.clear();
        for w in 0..n {
            book.settled[w] = accepted_b[w] && accepted_s[w];
            if accepted_b[w] && !accepted_s[w] {
                if book.ticks[w] < max_ticks {
                    book.ticks[w] += 1;
                    raised += 1;
                } else {
                    stalled.push(w);
                }
            }
        }
        let settled: Vec<usize> = (0..n).filter(|&w| book.settled[w]).collect();
        trace.push(TraceRow {
            iteration: iterations,
            settled: settled.len(),
            raised,
            volume: settled.len() as f64 * size,
            mean_settled_price: if settled.is_empty() {
                0.0
            } else {
                settled.iter().map(|&w| book.price(w)).sum::<f64>() / settled.len() as f64
            },
            max_price: book.ticks.iter().copied().max().unwrap_or(0) as f64 * config.delta_rho,
        });
        if raised == 0 {
            converged = true;
            unmet = peers
                .buyers()
                .iter()
                .zip(&buyer_sel)
                .chain(peers.sellers().iter().zip(&seller_sel))
                .filter(|(_, sel)| !sel.floor_met)
                .map(|(&i, _)| i)
                .collect();
            unmet.sort_unstable();
            break;
        }
    }
    if !converged {
        log::warn!(
            "price adjustment stopped after {iterations} iterations without converging; unsettled trades are dropped"
        );
    }
    if !stalled.is_empty() {
        log::warn!(
            "{} trades stalled at the price ceiling {ceiling:.3} $/MWh",
            stalled.len()
        );
    }

    let mut out = graph.clone();
    out.matched = (0..n).filter(|&w| book.settled[w]).collect();
    for t in &mut out.trades {
        t.quantity = size;
        t.price_seller = book.price(t.id);
        t.price_buyer = book.price(t.id);
        t.charge = charges[t.id];
    }
    Ok(MatchOutcome {
        graph: out,
        book,
        iterations,
        converged,
        stalled,
        unmet_floors: unmet,
        trace,
    })
}

/// Writes the convergence trace as CSV.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| Error::parse("trace", e))?;
    }
    w.flush().map_err(|e| Error::parse("trace", e))?;
    Ok(())
}

/// An unmatched trade both of whose peers would gain by adding it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockingTrade {
    pub trade: usize,
    /// Lowest grid price at which the seller gains, $/MWh.
    pub price: f64,
    pub seller_gain: f64,
    pub buyer_gain: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StabilityReport {
    pub checked: usize,
    pub blocking: Vec<BlockingTrade>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.blocking.is_empty()
    }
}

/// Value of the matched trades of one peer at their settled prices.
fn matched_value(graph: &TradeGraph, peers: &PeerSet, peer: usize, charges: &[f64], size: f64) -> (Vec<Offer>, f64) {
    let offers: Vec<Offer> = graph
        .trades_of(peer)
        .iter()
        .copied()
        .filter(|w| graph.matched.binary_search(w).is_ok())
        .map(|w| Offer {
            trade: w,
            price: graph.trades[w].price_buyer,
            charge: charges[w],
        })
        .collect();
    let value = select::value_of(&peers.peers[peer], &offers, size);
    (offers, value)
}

/// Gain of a peer from re-optimizing over its matched trades plus `extra`,
/// counted only when `extra` is part of the new selection.
fn gain_with(peers: &PeerSet, peer: usize, base: &[Offer], base_value: f64, extra: Offer, size: f64) -> f64 {
    let mut offers = base.to_vec();
    offers.push(extra);
    let sel = select_trades(&peers.peers[peer], &offers, size);
    if sel.trades.contains(&extra.trade) {
        sel.value - base_value
    } else {
        0.0
    }
}

/// Looks for unmatched trades that both endpoints would add at some price on
/// the grid `{0, Δρ, 2Δρ, ...}` up to the ceiling. The seller's gain rises
/// with the price and the buyer's falls, so only the lowest price at which
/// the seller gains needs checking.
pub fn verify_stability(graph: &TradeGraph, peers: &PeerSet, charges: &[f64], config: &MatchConfig) -> StabilityReport {
    let size = config.trade_size;
    let max_ticks = (price_ceiling(peers, charges, config.delta_rho) / config.delta_rho + UNIT_ROUNDING).floor() as u64;
    let base: Vec<(Vec<Offer>, f64)> = (0..peers.len())
        .map(|n| matched_value(graph, peers, n, charges, size))
        .collect();
    let mut report = StabilityReport::default();
    for t in &graph.trades {
        if graph.matched.binary_search(&t.id).is_ok() {
            continue;
        }
        report.checked += 1;
        let offer = |ticks: u64| Offer {
            trade: t.id,
            price: ticks as f64 * config.delta_rho,
            charge: charges[t.id],
        };
        let (sb, sv) = &base[t.seller];
        let seller_gain = |k: u64| gain_with(peers, t.seller, sb, *sv, offer(k), size);
        if seller_gain(max_ticks) <= GAIN_TOL {
            continue;
        }
        let (mut lo, mut hi) = (0u64, max_ticks);
        if seller_gain(0) > GAIN_TOL {
            hi = 0;
        } else {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if seller_gain(mid) > GAIN_TOL {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        let (bb, bv) = &base[t.buyer];
        let buyer_gain = gain_with(peers, t.buyer, bb, *bv, offer(hi), size);
        if buyer_gain > GAIN_TOL {
            report.blocking.push(BlockingTrade {
                trade: t.id,
                price: hi as f64 * config.delta_rho,
                seller_gain: seller_gain(hi),
                buyer_gain,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests;
