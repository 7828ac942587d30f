//! Per-peer choice among standard-size trades.

use serde::Serialize;

use crate::network::{PeerKind, PeerSpec};

/// A trade offered to a peer at a price and charge, both $/MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Offer {
    pub trade: usize,
    pub price: f64,
    pub charge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    /// Chosen trade ids, ascending.
    pub trades: Vec<usize>,
    /// Objective of the peer at the chosen set, $/h.
    pub value: f64,
    /// False when fewer trades were offered than the peer must take.
    pub floor_met: bool,
}

/// Unit value of an offer to the peer: net revenue for a seller, minus net
/// payment for a buyer.
fn unit_value(peer: &PeerSpec, o: &Offer, size: f64) -> f64 {
    match peer.kind {
        PeerKind::Seller(_) => (o.price - o.charge) * size,
        PeerKind::Buyer(_) => -(o.price + o.charge) * size,
    }
}

/// Own value of trading `k` units: minus cost or utility.
fn own_value(peer: &PeerSpec, k: usize, size: f64) -> f64 {
    let q = k as f64 * size;
    match &peer.kind {
        PeerKind::Seller(s) => -s.cost.eval(q),
        PeerKind::Buyer(b) => b.utility.eval(q, b.d_min),
    }
}

fn unit_bounds(peer: &PeerSpec, size: f64) -> (usize, usize) {
    let units = |q: f64| (q / size + super::UNIT_ROUNDING).floor().max(0.0) as usize;
    (units(peer.floor()), units(peer.capacity()))
}

/// Objective of the peer when trading exactly the given offers.
pub(crate) fn value_of(peer: &PeerSpec, offers: &[Offer], size: f64) -> f64 {
    offers.iter().map(|o| unit_value(peer, o, size)).sum::<f64>() + own_value(peer, offers.len(), size)
}

/// Optimal subset for a convex cost or concave utility: sort by unit value
/// (ties by trade id), take up to the floor, then keep taking while the next
/// unit strictly adds value. Ties in value favour fewer trades.
pub fn select_trades(peer: &PeerSpec, offers: &[Offer], size: f64) -> Selection {
    let (floor, cap) = unit_bounds(peer, size);
    let mut ranked: Vec<(f64, usize)> = offers.iter().map(|o| (unit_value(peer, o, size), o.trade)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut value = own_value(peer, 0, size);
    let mut taken = Vec::new();
    for (k, &(v, w)) in ranked.iter().enumerate().take(cap) {
        let marginal = v + own_value(peer, k + 1, size) - own_value(peer, k, size);
        if k >= floor && !(marginal > 0.0) {
            break;
        }
        value += marginal;
        taken.push(w);
    }
    taken.sort_unstable();
    Selection {
        floor_met: taken.len() >= floor,
        trades: taken,
        value,
    }
}

/// Reference selection by enumerating every subset of at most 20 offers.
/// Best value wins; ties go to fewer trades, then to the lexicographically
/// smallest sorted id list. Subsets below the floor are considered only
/// when no subset reaches it.
pub fn select_trades_exhaustive(peer: &PeerSpec, offers: &[Offer], size: f64) -> Selection {
    assert!(offers.len() <= 20, "exhaustive selection is limited to 20 offers");
    let (floor, cap) = unit_bounds(peer, size);
    let reachable = floor.min(offers.len());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << offers.len()) {
        let k = mask.count_ones() as usize;
        if k > cap || k < reachable {
            continue;
        }
        let chosen: Vec<Offer> = (0..offers.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| offers[i])
            .collect();
        let value = value_of(peer, &chosen, size);
        let mut ids: Vec<usize> = chosen.iter().map(|o| o.trade).collect();
        ids.sort_unstable();
        let better = match &best {
            None => true,
            Some((bv, bids)) => {
                let tol = 1e-9 * bv.abs().max(1.0);
                value > bv + tol || (value >= bv - tol && (ids.len(), &ids) < (bids.len(), bids))
            }
        };
        if better {
            best = Some((value, ids));
        }
    }
    let (value, trades) = best.unwrap_or((own_value(peer, 0, size), Vec::new()));
    Selection {
        floor_met: trades.len() >= floor,
        trades,
        value,
    }
}
