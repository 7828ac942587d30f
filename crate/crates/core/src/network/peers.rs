//! Peer population: producers with cost functions and consumers with
//! utility functions and demand bounds. Quantities are in MW, prices in $/MWh.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NetworkCase;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Seller,
    Buyer,
}

/// `C(g) = c1 g + c2 g^2`, $ per hour for g in MW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

impl CostFunction {
    pub fn linear(c1: f64) -> Self {
        CostFunction { c1, c2: 0.0 }
    }

    pub fn eval(&self, g: f64) -> f64 {
        self.c1 * g + self.c2 * g * g
    }
}

/// Consumer utility in $ per hour for consumption d in MW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum UtilityFunction {
    /// `Upsilon (d - Dmin)` above the floor, minus infinity below it.
    Surplus { upsilon: f64 },
    /// `u1 d - u2 d^2`.
    Quadratic { u1: f64, u2: f64 },
}

impl UtilityFunction {
    /// Utility on the feasible range; the floor is enforced by the caller.
    pub fn eval(&self, d: f64, d_min: f64) -> f64 {
        match *self {
            UtilityFunction::Surplus { upsilon } => upsilon * (d - d_min),
            UtilityFunction::Quadratic { u1, u2 } => u1 * d - u2 * d * d,
        }
    }

    /// Highest marginal valuation, used to cap ascending prices.
    pub fn max_marginal(&self) -> f64 {
        match *self {
            UtilityFunction::Surplus { upsilon } => upsilon,
            UtilityFunction::Quadratic { u1, .. } => u1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandBound {
    Value(f64),
    /// The literal string `"from-case"`: `Gamma_b * Dp_b` of the peer's bus.
    FromCase(FromCaseTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FromCaseTag {
    #[serde(rename = "from-case")]
    FromCase,
}

impl DemandBound {
    fn resolve(&self, case: &NetworkCase, bus: usize) -> f64 {
        match self {
            DemandBound::Value(v) => *v,
            DemandBound::FromCase(_) => {
                let b = &case.buses[bus];
                b.gamma * b.demand_p * case.base.mva
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SellerSpec {
    pub g_min: f64,
    pub g_max: f64,
    pub cost: CostFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuyerSpec {
    pub d_min: f64,
    pub d_max: f64,
    pub d_min_source: DemandBound,
    pub d_max_source: DemandBound,
    pub utility: UtilityFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PeerKind {
    Seller(SellerSpec),
    Buyer(BuyerSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeerSpec {
    pub id: u32,
    /// Bus index into the case.
    pub bus: usize,
    pub kind: PeerKind,
}

impl PeerSpec {
    pub fn side(&self) -> Side {
        match self.kind {
            PeerKind::Seller(_) => Side::Seller,
            PeerKind::Buyer(_) => Side::Buyer,
        }
    }

    pub fn seller(&self) -> Option<&SellerSpec> {
        match &self.kind {
            PeerKind::Seller(s) => Some(s),
            PeerKind::Buyer(_) => None,
        }
    }

    pub fn buyer(&self) -> Option<&BuyerSpec> {
        match &self.kind {
            PeerKind::Buyer(b) => Some(b),
            PeerKind::Seller(_) => None,
        }
    }

    /// Largest quantity the peer can trade, MW.
    pub fn capacity(&self) -> f64 {
        match &self.kind {
            PeerKind::Seller(s) => s.g_max,
            PeerKind::Buyer(b) => b.d_max,
        }
    }

    /// Quantity the peer must trade, MW.
    pub fn floor(&self) -> f64 {
        match &self.kind {
            PeerKind::Seller(s) => s.g_min,
            PeerKind::Buyer(b) => b.d_min,
        }
    }
}

/// Validated peers, partitioned into sellers and buyers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeerSet {
    pub peers: Vec<PeerSpec>,
    sellers: Vec<usize>,
    buyers: Vec<usize>,
}

impl PeerSet {
    pub fn new(peers: Vec<PeerSpec>) -> Result<PeerSet> {
        let mut ids = HashSet::new();
        let mut seller_buses = HashSet::new();
        let mut sellers = Vec::new();
        let mut buyers = Vec::new();
        for (i, p) in peers.iter().enumerate() {
            let record = format!("peer {}", p.id);
            if !ids.insert(p.id) {
                return Err(Error::invalid(record, "duplicate peer id"));
            }
            match &p.kind {
                PeerKind::Seller(s) => {
                    if !(0.0 <= s.g_min && s.g_min <= s.g_max && s.g_max.is_finite()) {
                        return Err(Error::invalid(record, "seller bounds must satisfy 0 <= Gmin <= Gmax"));
                    }
                    if !(s.cost.c2 >= 0.0) {
                        return Err(Error::invalid(record, "cost must be convex (c2 >= 0)"));
                    }
                    if !seller_buses.insert(p.bus) {
                        return Err(Error::invalid(record, "a bus hosts at most one seller"));
                    }
                    sellers.push(i);
                }
                PeerKind::Buyer(b) => {
                    if !(0.0 <= b.d_min && b.d_min <= b.d_max + 1e-12 && b.d_max.is_finite()) {
                        return Err(Error::invalid(record, "buyer bounds must satisfy 0 <= Dmin <= Dmax"));
                    }
                    if let UtilityFunction::Quadratic { u2, .. } = b.utility {
                        if !(u2 >= 0.0) {
                            return Err(Error::invalid(record, "utility must be concave (u2 >= 0)"));
                        }
                    }
                    buyers.push(i);
                }
            }
        }
        Ok(PeerSet { peers, sellers, buyers })
    }

    pub fn empty() -> PeerSet {
        PeerSet::default()
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    /// Indices into `peers` of the sellers, in file order.
    pub fn sellers(&self) -> &[usize] {
        &self.sellers
    }

    /// Indices into `peers` of the buyers, in file order.
    pub fn buyers(&self) -> &[usize] {
        &self.buyers
    }

    /// Recomputes `from-case` demand bounds, e.g. after a Gamma override.
    pub fn rebind(&mut self, case: &NetworkCase) {
        for p in &mut self.peers {
            if let PeerKind::Buyer(b) = &mut p.kind {
                b.d_min = b.d_min_source.resolve(case, p.bus);
                b.d_max = b.d_max_source.resolve(case, p.bus);
            }
        }
    }

    /// Highest marginal valuation among buyers.
    pub fn max_valuation(&self) -> f64 {
        self.buyers
            .iter()
            .filter_map(|&i| self.peers[i].buyer())
            .map(|b| b.utility.max_marginal())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeerFile {
    /// Buyer valuation used when a record gives neither `Upsilon` nor `utility`.
    #[serde(rename = "Upsilon", default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    #[serde(default)]
    pub peers: Vec<PeerRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostRecord {
    Linear(f64),
    Quadratic(CostFunction),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    pub u1: f64,
    pub u2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerRecord {
    pub n: u32,
    pub bus: u32,
    pub side: Side,
    #[serde(rename = "Gmin", default, skip_serializing_if = "Option::is_none")]
    pub g_min: Option<f64>,
    #[serde(rename = "Gmax", default, skip_serializing_if = "Option::is_none")]
    pub g_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostRecord>,
    #[serde(rename = "Dmin", default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<DemandBound>,
    #[serde(rename = "Dmax", default, skip_serializing_if = "Option::is_none")]
    pub d_max: Option<DemandBound>,
    #[serde(rename = "Upsilon", default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<QuadraticUtility>,
}

impl PeerFile {
    pub fn read(path: &Path) -> Result<PeerFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn resolve(&self, case: &NetworkCase) -> Result<PeerSet> {
        let mut peers = Vec::with_capacity(self.peers.len());
        for rec in &self.peers {
            let record = format!("peer {}", rec.n);
            let bus = case
                .bus_index(rec.bus)
                .ok_or_else(|| Error::invalid(&record, format!("unknown bus {}", rec.bus)))?;
            let has_seller_fields = rec.g_min.is_some() || rec.g_max.is_some() || rec.cost.is_some();
            let has_buyer_fields =
                rec.d_min.is_some() || rec.d_max.is_some() || rec.upsilon.is_some() || rec.utility.is_some();
            if has_seller_fields && has_buyer_fields {
                return Err(Error::invalid(
                    record,
                    "declares both seller and buyer parameters; a peer has one side per scenario",
                ));
            }
            let kind = match rec.side {
                Side::Seller => {
                    if has_buyer_fields {
                        return Err(Error::invalid(record, "seller carries buyer parameters"));
                    }
                    let g_max = rec.g_max.ok_or_else(|| Error::invalid(&record, "missing Gmax"))?;
                    let cost = match rec.cost.clone() {
                        Some(CostRecord::Linear(c)) => CostFunction::linear(c),
                        Some(CostRecord::Quadratic(c)) => c,
                        None => return Err(Error::invalid(record, "missing cost")),
                    };
                    PeerKind::Seller(SellerSpec {
                        g_min: rec.g_min.unwrap_or(0.0),
                        g_max,
                        cost,
                    })
                }
                Side::Buyer => {
                    if has_seller_fields {
                        return Err(Error::invalid(record, "buyer carries seller parameters"));
                    }
                    let d_max_source = rec
                        .d_max
                        .clone()
                        .ok_or_else(|| Error::invalid(&record, "missing Dmax"))?;
                    let d_min_source = rec.d_min.clone().unwrap_or(DemandBound::Value(0.0));
                    let utility = match (rec.utility, rec.upsilon.or(self.upsilon)) {
                        (Some(q), _) => UtilityFunction::Quadratic { u1: q.u1, u2: q.u2 },
                        (None, Some(upsilon)) => UtilityFunction::Surplus { upsilon },
                        (None, None) => return Err(Error::invalid(record, "missing Upsilon or utility")),
                    };
                    PeerKind::Buyer(BuyerSpec {
                        d_min: d_min_source.resolve(case, bus),
                        d_max: d_max_source.resolve(case, bus),
                        d_min_source,
                        d_max_source,
                        utility,
                    })
                }
            };
            peers.push(PeerSpec { id: rec.n, bus, kind });
        }
        PeerSet::new(peers)
    }
}

/// Reads a peer file and binds it to the case.
pub fn load_peers(path: &Path, case: &NetworkCase) -> Result<PeerSet> {
    PeerFile::read(path)?.resolve(case)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_file;
    use super::*;

    fn case() -> NetworkCase {
        NetworkCase::from_file(&tiny_file()).unwrap()
    }

    fn parse(json: &str) -> PeerFile {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn resolves_from_case_bounds_and_partitions() {
        let f = parse(
            r#"{"Upsilon": 100, "peers": [
                {"n": 1, "bus": 1, "side": "seller", "Gmax": 2, "cost": 50},
                {"n": 2, "bus": 2, "side": "buyer", "Dmin": "from-case", "Dmax": "from-case"},
                {"n": 3, "bus": 3, "side": "buyer", "Dmax": 0.2, "utility": {"u1": 80, "u2": 5}}
            ]}"#,
        );
        let set = f.resolve(&case()).unwrap();
        assert_eq!(set.sellers(), &[0]);
        assert_eq!(set.buyers(), &[1, 2]);
        let b = set.peers[1].buyer().unwrap();
        assert!((b.d_max - 0.25).abs() < 1e-12);
        assert!((b.d_min - 0.25).abs() < 1e-12);
        assert_eq!(b.utility, UtilityFunction::Surplus { upsilon: 100.0 });
        assert_eq!(set.max_valuation(), 100.0);
    }

    #[test]
    fn rebind_follows_gamma() {
        let f = parse(r#"{"Upsilon": 100, "peers": [{"n": 2, "bus": 2, "side": "buyer", "Dmax": "from-case"}]}"#);
        let case = case().with_uniform_gamma(1.0).unwrap();
        let mut set = f.resolve(&case).unwrap();
        assert!((set.peers[0].capacity() - 0.5).abs() < 1e-12);
        let case = case.with_uniform_gamma(0.2).unwrap();
        set.rebind(&case);
        assert!((set.peers[0].capacity() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_bus_and_both_sides() {
        let f = parse(r#"{"peers": [{"n": 7, "bus": 42, "side": "seller", "Gmax": 1, "cost": 1}]}"#);
        let err = f.resolve(&case()).unwrap_err().to_string();
        assert!(err.contains("peer 7") && err.contains("unknown bus 42"), "{err}");

        let f = parse(
            r#"{"peers": [{"n": 8, "bus": 2, "side": "seller", "Gmax": 1, "cost": 1, "Dmax": 0.3, "Upsilon": 9}]}"#,
        );
        let err = f.resolve(&case()).unwrap_err().to_string();
        assert!(err.contains("peer 8") && err.contains("both"), "{err}");
    }

    #[test]
    fn rejects_two_sellers_on_one_bus() {
        let f = parse(
            r#"{"peers": [
                {"n": 1, "bus": 2, "side": "seller", "Gmax": 1, "cost": 1},
                {"n": 2, "bus": 2, "side": "seller", "Gmax": 1, "cost": 2}
            ]}"#,
        );
        assert!(f.resolve(&case()).unwrap_err().to_string().contains("peer 2"));
    }

    #[test]
    fn empty_file_gives_empty_set() {
        let set = parse("{}").resolve(&case()).unwrap();
        assert!(set.sellers().is_empty() && set.buyers().is_empty());
    }
}
