//! Small generated feeders for tests, examples and benchmarks.

use super::{Base, BusRecord, CaseFile, LineRecord, NetworkCase, SupplyLimits};

/// Parameters of a generated feeder. Impedances are per-unit on `base_mva`.
#[derive(Clone, Debug)]
pub struct FeederSpec {
    pub base_mva: f64,
    pub kv: f64,
    pub r: f64,
    pub x: f64,
    /// MVA; `None` leaves lines unrated.
    pub rating: Option<f64>,
    pub tariff: f64,
    pub wholesale_price: f64,
    pub gamma: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            base_mva: 1.0,
            kv: 10.0,
            r: 0.01,
            x: 0.01,
            rating: None,
            tariff: 100.0,
            wholesale_price: 50.0,
            gamma: 0.0,
            v_min: 0.81,
            v_max: 1.21,
        }
    }
}

impl FeederSpec {
    /// Builds a feeder from `(parent, load MW, load MVAr)` per non-root bus;
    /// bus ids are `1..=n` with bus 1 as the root pinned at 1.0 p.u.
    pub fn tree(&self, buses: &[(u32, f64, f64)]) -> NetworkCase {
        let zb = self.kv * self.kv / self.base_mva;
        let mut bus_records = vec![BusRecord {
            b: 1,
            g: 0.0,
            b_shunt: 0.0,
            dp: 0.0,
            dq: 0.0,
            tariff: Some(self.tariff),
            v_min: Some(1.0),
            v_max: Some(1.0),
            gamma: Some(self.gamma),
        }];
        let mut lines = Vec::new();
        for (k, &(parent, p, q)) in buses.iter().enumerate() {
            let id = k as u32 + 2;
            bus_records.push(BusRecord {
                b: id,
                g: 0.0,
                b_shunt: 0.0,
                dp: p,
                dq: q,
                tariff: Some(self.tariff),
                v_min: Some(self.v_min),
                v_max: Some(self.v_max),
                gamma: Some(self.gamma),
            });
            lines.push(LineRecord {
                l: k as u32 + 1,
                o: parent,
                r: id,
                r_ohm: self.r * zb,
                x_ohm: self.x * zb,
                s: self.rating,
            });
        }
        let file = CaseFile {
            name: "synthetic".into(),
            base: Base {
                mva: self.base_mva,
                kv: self.kv,
            },
            root: 1,
            wholesale_price: Some(self.wholesale_price),
            root_supply: Some(SupplyLimits::default()),
            buses: bus_records,
            lines,
            generators: Vec::new(),
        };
        NetworkCase::from_file(&file).expect("generated feeder is valid")
    }

    /// A chain `1 - 2 - ... - n` with the given loads on buses `2..=n`.
    pub fn chain(&self, loads: &[(f64, f64)]) -> NetworkCase {
        let spec: Vec<(u32, f64, f64)> = loads
            .iter()
            .enumerate()
            .map(|(k, &(p, q))| (k as u32 + 1, p, q))
            .collect();
        self.tree(&spec)
    }
}
