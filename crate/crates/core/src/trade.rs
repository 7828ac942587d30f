//! Bipartite trade graph between sellers and buyers.

use serde::Serialize;

use crate::network::{PeerSet, Side};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trade {
    pub id: usize,
    /// Index into `PeerSet::peers`.
    pub seller: usize,
    /// Index into `PeerSet::peers`.
    pub buyer: usize,
    /// MW.
    pub quantity: f64,
    /// Selling price, $/MWh.
    pub price_seller: f64,
    /// Buying price, $/MWh.
    pub price_buyer: f64,
    /// Network usage charge paid by each side, $/MWh.
    pub charge: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GraphKind {
    /// One continuous-quantity edge per seller-buyer pair.
    Simple,
    /// Parallel edges of a fixed standard size, MW.
    Parallel { size: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeGraph {
    pub kind: GraphKind,
    pub trades: Vec<Trade>,
    /// Trade ids touching each peer, indexed like `PeerSet::peers`.
    pub by_peer: Vec<Vec<usize>>,
    /// Ids of the matched trades, ascending.
    pub matched: Vec<usize>,
}

impl TradeGraph {
    /// Creates a graph from `(seller, buyer, quantity)` edges in order.
    pub fn from_edges(kind: GraphKind, peers: &PeerSet, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut by_peer = vec![Vec::new(); peers.len()];
        let trades: Vec<Trade> = edges
            .into_iter()
            .enumerate()
            .map(|(id, (seller, buyer, quantity))| {
                by_peer[seller].push(id);
                by_peer[buyer].push(id);
                Trade {
                    id,
                    seller,
                    buyer,
                    quantity,
                    price_seller: 0.0,
                    price_buyer: 0.0,
                    charge: 0.0,
                }
            })
            .collect();
        TradeGraph {
            kind,
            trades,
            by_peer,
            matched: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    /// Trade ids of one peer.
    pub fn trades_of(&self, peer: usize) -> &[usize] {
        &self.by_peer[peer]
    }

    pub fn matched_trades(&self) -> impl Iterator<Item = &Trade> {
        self.matched.iter().map(|&w| &self.trades[w])
    }

    /// Total matched quantity, MW.
    pub fn matched_volume(&self) -> f64 {
        self.matched_trades().map(|t| t.quantity).sum()
    }

    /// Matched quantity per peer, MW.
    pub fn matched_by_peer(&self, n_peers: usize) -> Vec<f64> {
        let mut q = vec![0.0; n_peers];
        for t in self.matched_trades() {
            q[t.seller] += t.quantity;
            q[t.buyer] += t.quantity;
        }
        q
    }

    /// Checks that every trade joins a seller to a buyer and that the per-peer
    /// sets cover the trade set exactly once from each side.
    pub fn check_partition(&self, peers: &PeerSet) -> Result<(), String> {
        let mut seen_s = vec![0usize; self.trades.len()];
        let mut seen_b = vec![0usize; self.trades.len()];
        for (n, ids) in self.by_peer.iter().enumerate() {
            for &w in ids {
                let t = &self.trades[w];
                match peers.peers[n].side() {
                    Side::Seller if t.seller == n => seen_s[w] += 1,
                    Side::Buyer if t.buyer == n => seen_b[w] += 1,
                    _ => return Err(format!("trade {w} listed under unrelated peer {n}")),
                }
            }
        }
        for t in &self.trades {
            if peers.peers[t.seller].side() != Side::Seller || peers.peers[t.buyer].side() != Side::Buyer {
                return Err(format!("trade {} does not join a seller to a buyer", t.id));
            }
            if seen_s[t.id] != 1 || seen_b[t.id] != 1 {
                return Err(format!("trade {} not covered exactly once per side", t.id));
            }
            if !(t.quantity >= 0.0) {
                return Err(format!("trade {} has negative quantity", t.id));
            }
        }
        if self.matched.iter().any(|&w| w >= self.trades.len()) {
            return Err("matched set refers to unknown trades".into());
        }
        Ok(())
    }
}
