//! Radial distribution case model: buses, lines, utility generators and the
//! wholesale interconnection at the root.
//!
//! Files carry physical units (MW, MVAr, MVA, ohm). A loaded [`NetworkCase`]
//! holds per-unit quantities on its [`Base`]; prices stay in $/MWh.

mod file;
pub mod matpower;
mod peers;
pub mod synthetic;

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{BusRecord, CaseFile, Defaults, GeneratorRecord, LineRecord, SupplyLimits};
pub use peers::{
    load_peers, BuyerSpec, CostFunction, CostRecord, DemandBound, FromCaseTag, PeerFile, PeerKind, PeerRecord, PeerSet,
    PeerSpec, QuadraticUtility, SellerSpec, Side, UtilityFunction,
};

/// Power and voltage bases used for per-unit normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Base {
    #[serde(rename = "MVA")]
    pub mva: f64,
    #[serde(rename = "kV")]
    pub kv: f64,
}

impl Base {
    /// Base impedance in ohm.
    pub fn impedance(&self) -> f64 {
        self.kv * self.kv / self.mva
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    /// Label used in files and reports.
    pub id: u32,
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub demand_p: f64,
    pub demand_q: f64,
    /// Retail tariff, $/MWh.
    pub tariff: f64,
    /// Squared voltage magnitude bounds.
    pub v_min: f64,
    pub v_max: f64,
    /// Share of the bus demand procured on the peer platform.
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub id: u32,
    /// Sending-end bus index.
    pub from: usize,
    /// Receiving-end bus index.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Apparent power limit; `None` means unlimited.
    pub rating: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilityGenerator {
    pub bus: usize,
    /// $/MWh.
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

/// Wholesale interconnection injecting at the root bus.
#[derive(Clone, Debug, PartialEq)]
pub struct WholesaleSupply {
    /// $/MWh.
    pub price: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base: Base,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<UtilityGenerator>,
    pub root: usize,
    pub wholesale: WholesaleSupply,
}

/// Input format tag for [`load_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseFormat {
    /// `case.json`, or a directory holding `case.json` and optionally `defaults.json`.
    Json,
    /// A directory with MATPOWER-style `bus.csv` and `branch.csv` tables plus `defaults.json`.
    MatpowerCsv,
}

impl CaseFormat {
    pub fn detect(path: &Path) -> CaseFormat {
        if path.is_dir() && !path.join("case.json").exists() && path.join("bus.csv").exists() {
            CaseFormat::MatpowerCsv
        } else {
            CaseFormat::Json
        }
    }
}

/// Loads, validates and normalizes a case.
pub fn load_case(path: &Path, format: CaseFormat) -> Result<NetworkCase> {
    match format {
        CaseFormat::Json => {
            let (case_path, defaults_path) = if path.is_dir() {
                (path.join("case.json"), Some(path.join("defaults.json")))
            } else {
                (path.to_path_buf(), None)
            };
            let mut file = CaseFile::read(&case_path)?;
            if let Some(dp) = defaults_path.filter(|p| p.exists()) {
                file.apply_defaults(&Defaults::read(&dp)?);
            }
            NetworkCase::from_file(&file)
        }
        CaseFormat::MatpowerCsv => {
            let defaults_path = path.join("defaults.json");
            let defaults = if defaults_path.exists() {
                Defaults::read(&defaults_path)?
            } else {
                Defaults::default()
            };
            let file = matpower::convert(
                &path.join("bus.csv"),
                &path.join("branch.csv"),
                &matpower::ConvertOptions::from_defaults(&defaults),
            )?;
            NetworkCase::from_file(&file)
        }
    }
}

/// Resolves a `--case` argument to the case file or directory and the default
/// peer file next to it, if any.
pub fn peers_path_for(case: &Path) -> Option<PathBuf> {
    let dir = if case.is_dir() { case } else { case.parent()? };
    let p = dir.join("peers.json");
    p.exists().then_some(p)
}

impl NetworkCase {
    pub fn from_file(file: &CaseFile) -> Result<NetworkCase> {
        let base = file.base;
        if !(base.mva > 0.0 && base.kv > 0.0) {
            return Err(Error::invalid("base", "MVA and kV bases must be positive"));
        }
        let zb = base.impedance();

        let mut index = HashMap::with_capacity(file.buses.len());
        let mut buses = Vec::with_capacity(file.buses.len());
        for (i, rec) in file.buses.iter().enumerate() {
            let record = format!("bus {}", rec.b);
            if index.insert(rec.b, i).is_some() {
                return Err(Error::invalid(record, "duplicate bus id"));
            }
            let need = |v: Option<f64>, field: &str| {
                v.ok_or_else(|| Error::invalid(format!("bus {}", rec.b), format!("missing {field}")))
            };
            buses.push(Bus {
                id: rec.b,
                shunt_g: rec.g / base.mva,
                shunt_b: rec.b_shunt / base.mva,
                demand_p: rec.dp / base.mva,
                demand_q: rec.dq / base.mva,
                tariff: need(rec.tariff, "T")?,
                v_min: need(rec.v_min, "Vmin")?,
                v_max: need(rec.v_max, "Vmax")?,
                gamma: need(rec.gamma, "Gamma")?,
            });
        }
        let lookup = |id: u32, record: &str| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::invalid(record, format!("references unknown bus {id}")))
        };

        let mut lines = Vec::with_capacity(file.lines.len());
        for rec in &file.lines {
            let record = format!("line {}", rec.l);
            lines.push(Line {
                id: rec.l,
                from: lookup(rec.o, &record)?,
                to: lookup(rec.r, &record)?,
                r: rec.r_ohm / zb,
                x: rec.x_ohm / zb,
                rating: rec.s.map(|s| s / base.mva),
            });
        }

        let mut generators = Vec::with_capacity(file.generators.len());
        for (k, rec) in file.generators.iter().enumerate() {
            let record = format!("generator {} at bus {}", k + 1, rec.b);
            generators.push(UtilityGenerator {
                bus: lookup(rec.b, &record)?,
                cost: rec.cu,
                p_min: rec.p_min / base.mva,
                p_max: rec.p_max / base.mva,
                q_min: rec.q_min / base.mva,
                q_max: rec.q_max / base.mva,
            });
        }

        let root = lookup(file.root, "root")?;
        let price = file
            .wholesale_price
            .ok_or_else(|| Error::invalid("case", "missing wholesale price Cw"))?;
        let limits = file.root_supply.clone().unwrap_or_default();
        let case = NetworkCase {
            name: file.name.clone(),
            base,
            buses,
            lines,
            generators,
            root,
            wholesale: WholesaleSupply {
                price,
                p_min: limits.p_min / base.mva,
                p_max: limits.p_max / base.mva,
                q_min: limits.q_min / base.mva,
                q_max: limits.q_max / base.mva,
            },
        };
        case.validate()?;
        Ok(case)
    }

    /// Converts back to the physical-unit file representation.
    pub fn to_file(&self) -> CaseFile {
        let mva = self.base.mva;
        let zb = self.base.impedance();
        CaseFile {
            name: self.name.clone(),
            base: self.base,
            root: self.buses[self.root].id,
            wholesale_price: Some(self.wholesale.price),
            root_supply: Some(SupplyLimits {
                p_min: self.wholesale.p_min * mva,
                p_max: self.wholesale.p_max * mva,
                q_min: self.wholesale.q_min * mva,
                q_max: self.wholesale.q_max * mva,
            }),
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    b: b.id,
                    g: b.shunt_g * mva,
                    b_shunt: b.shunt_b * mva,
                    dp: b.demand_p * mva,
                    dq: b.demand_q * mva,
                    tariff: Some(b.tariff),
                    v_min: Some(b.v_min),
                    v_max: Some(b.v_max),
                    gamma: Some(b.gamma),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    l: l.id,
                    o: self.buses[l.from].id,
                    r: self.buses[l.to].id,
                    r_ohm: l.r * zb,
                    x_ohm: l.x * zb,
                    s: l.rating.map(|s| s * mva),
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    b: self.buses[g.bus].id,
                    cu: g.cost,
                    p_min: g.p_min * mva,
                    p_max: g.p_max * mva,
                    q_min: g.q_min * mva,
                    q_max: g.q_max * mva,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::invalid("case", "no buses"));
        }
        for b in &self.buses {
            let record = format!("bus {}", b.id);
            if !(0.0..=1.0).contains(&b.gamma) {
                return Err(Error::invalid(record, format!("Gamma {} outside [0, 1]", b.gamma)));
            }
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(Error::invalid(
                    record,
                    format!(
                        "voltage bounds [{}, {}] must satisfy 0 < Vmin <= Vmax",
                        b.v_min, b.v_max
                    ),
                ));
            }
            if !(b.demand_p >= 0.0) {
                return Err(Error::invalid(record, "negative active demand"));
            }
            if ![b.shunt_g, b.shunt_b, b.demand_q, b.tariff]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::invalid(record, "non-finite value"));
            }
        }
        for l in &self.lines {
            let record = format!("line {}", l.id);
            if l.from == l.to {
                return Err(Error::invalid(record, "line connects a bus to itself"));
            }
            if !(l.r >= 0.0 && l.x >= 0.0) {
                return Err(Error::invalid(record, "negative impedance"));
            }
            if let Some(s) = l.rating {
                if !(s > 0.0) {
                    return Err(Error::invalid(record, "rating must be positive"));
                }
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            if !(g.p_min <= g.p_max && g.q_min <= g.q_max) {
                return Err(Error::invalid(format!("generator {}", k + 1), "inverted output limits"));
            }
        }
        let w = &self.wholesale;
        if !(w.p_min <= w.p_max && w.q_min <= w.q_max) {
            return Err(Error::invalid("root supply", "inverted limits"));
        }
        self.check_radial()
    }

    /// Rejects anything that is not a connected tree over all buses.
    fn check_radial(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in &self.lines {
            if let Some(path) = tree_path(&adjacency, l.from, l.to) {
                let ids: Vec<String> = path.iter().map(|&b| self.buses[b].id.to_string()).collect();
                return Err(Error::invalid(
                    format!("line {}", l.id),
                    format!("closes a cycle through buses {}", ids.join(" -> ")),
                ));
            }
            adjacency[l.from].push(l.to);
            adjacency[l.to].push(l.from);
        }
        if self.lines.len() + 1 != n {
            return Err(Error::invalid(
                "topology",
                format!(
                    "{} lines for {} buses; a radial feeder needs {}",
                    self.lines.len(),
                    n,
                    n - 1
                ),
            ));
        }
        let order = bfs_order(&adjacency, self.root);
        if order.len() != n {
            let mut reached = vec![false; n];
            for &b in &order {
                reached[b] = true;
            }
            let missing: Vec<String> = (0..n)
                .filter(|&b| !reached[b])
                .map(|b| self.buses[b].id.to_string())
                .collect();
            return Err(Error::invalid(
                "topology",
                format!("buses not connected to the root: {}", missing.join(", ")),
            ));
        }
        Ok(())
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Total active demand in MW.
    pub fn total_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.demand_p).sum::<f64>() * self.base.mva
    }

    /// Demand procured through the peer platform, `sum_b Gamma_b D_b`, in MW.
    pub fn p2p_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.gamma * b.demand_p).sum::<f64>() * self.base.mva
    }

    /// Sets the same penetration level on every bus.
    pub fn with_uniform_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid("gamma override", format!("{gamma} outside [0, 1]")));
        }
        for b in &mut self.buses {
            b.gamma = gamma;
        }
        Ok(self)
    }

    /// Overrides individual buses, keyed by bus id.
    pub fn with_gamma_overrides(mut self, overrides: &HashMap<u32, f64>) -> Result<Self> {
        for (&id, &g) in overrides {
            let i = self
                .bus_index(id)
                .ok_or_else(|| Error::invalid("gamma override", format!("unknown bus {id}")))?;
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(
                    "gamma override",
                    format!("{g} outside [0, 1] at bus {id}"),
                ));
            }
            self.buses[i].gamma = g;
        }
        Ok(self)
    }

    /// Lines leaving each bus (sending end) and arriving at it (receiving end).
    pub fn incidence(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let n = self.buses.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (k, l) in self.lines.iter().enumerate() {
            out[l.from].push(k);
            inc[l.to].push(k);
        }
        (out, inc)
    }
}

fn bfs_order(adjacency: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut seen = vec![false; adjacency.len()];
    let mut order = Vec::with_capacity(adjacency.len());
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(b) = queue.pop_front() {
        order.push(b);
        for &c in &adjacency[b] {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    order
}

/// Path between two buses in the forest built so far, if they are already connected.
fn tree_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; adjacency.len()];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(b) = queue.pop_front() {
        if b == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &c in &adjacency[b] {
            if prev[c] == usize::MAX {
                prev[c] = b;
                queue.push_back(c);
            }
        }
    }
    None
}
