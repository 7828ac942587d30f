//! On-disk JSON schema for cases and per-feeder defaults (physical units).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Base;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub name: String,
    pub base: Base,
    pub root: u32,
    #[serde(rename = "Cw", default, skip_serializing_if = "Option::is_none")]
    pub wholesale_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_supply: Option<SupplyLimits>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(default)]
    pub generators: Vec<GeneratorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub b: u32,
    #[serde(rename = "G", default)]
    pub g: f64,
    #[serde(rename = "B", default)]
    pub b_shunt: f64,
    #[serde(rename = "Dp", default)]
    pub dp: f64,
    #[serde(rename = "Dq", default)]
    pub dq: f64,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub tariff: Option<f64>,
    #[serde(rename = "Vmin", default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(rename = "Vmax", default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub l: u32,
    pub o: u32,
    pub r: u32,
    /// Ohm.
    #[serde(rename = "R")]
    pub r_ohm: f64,
    /// Ohm.
    #[serde(rename = "X")]
    pub x_ohm: f64,
    /// MVA.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub b: u32,
    #[serde(rename = "Cu")]
    pub cu: f64,
    #[serde(rename = "Pmin", default)]
    pub p_min: f64,
    #[serde(rename = "Pmax")]
    pub p_max: f64,
    #[serde(rename = "Qmin", default)]
    pub q_min: f64,
    #[serde(rename = "Qmax", default)]
    pub q_max: f64,
}

/// Wholesale import limits at the root, MW / MVAr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyLimits {
    #[serde(rename = "Pmin")]
    pub p_min: f64,
    #[serde(rename = "Pmax")]
    pub p_max: f64,
    #[serde(rename = "Qmin")]
    pub q_min: f64,
    #[serde(rename = "Qmax")]
    pub q_max: f64,
}

impl Default for SupplyLimits {
    fn default() -> Self {
        SupplyLimits {
            p_min: -1e3,
            p_max: 1e3,
            q_min: -1e3,
            q_max: 1e3,
        }
    }
}

/// Feeder-level values for parameters the source data does not carry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    /// Power base for tabular sources that do not carry one.
    #[serde(rename = "baseMVA", default, skip_serializing_if = "Option::is_none")]
    pub base_mva: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub tariff: Option<f64>,
    #[serde(rename = "Cw", default, skip_serializing_if = "Option::is_none")]
    pub wholesale_price: Option<f64>,
    #[serde(rename = "Vmin", default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(rename = "Vmax", default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Root bus squared voltage; pins the substation when set.
    #[serde(rename = "V0", default, skip_serializing_if = "Option::is_none")]
    pub v_root: Option<f64>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "Upsilon", default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_supply: Option<SupplyLimits>,
    /// Rescale bus demands so the total matches this value, MW.
    #[serde(rename = "total_load", default, skip_serializing_if = "Option::is_none")]
    pub total_load: Option<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

impl CaseFile {
    pub fn read(path: &Path) -> Result<CaseFile> {
        read_json(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case file serializes")
    }

    /// Fills fields the case leaves unset. Values already present win.
    pub fn apply_defaults(&mut self, d: &Defaults) {
        if self.wholesale_price.is_none() {
            self.wholesale_price = d.wholesale_price;
        }
        if self.root_supply.is_none() {
            self.root_supply = d.root_supply.clone();
        }
        let root = self.root;
        for b in &mut self.buses {
            b.tariff = b.tariff.or(d.tariff);
            b.gamma = b.gamma.or(d.gamma);
            if b.b == root && d.v_root.is_some() {
                b.v_min = b.v_min.or(d.v_root);
                b.v_max = b.v_max.or(d.v_root);
            }
            b.v_min = b.v_min.or(d.v_min);
            b.v_max = b.v_max.or(d.v_max);
        }
        for l in &mut self.lines {
            l.s = l.s.or(d.rating);
        }
        if let Some(target) = d.total_load {
            let total: f64 = self.buses.iter().map(|b| b.dp).sum();
            if total > 0.0 {
                let k = target / total;
                for b in &mut self.buses {
                    b.dp *= k;
                    b.dq *= k;
                }
            }
        }
    }
}

impl Defaults {
    pub fn read(path: &Path) -> Result<Defaults> {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_only_missing_fields() {
        let mut f: CaseFile = serde_json::from_str(
            r#"{"name":"x","base":{"MVA":1,"kV":1},"root":1,
                "buses":[{"b":1,"Dp":1.0,"Vmin":1,"Vmax":1},{"b":2,"Dp":3.0,"T":80}],
                "lines":[{"l":1,"o":1,"r":2,"R":0.1,"X":0.1}]}"#,
        )
        .unwrap();
        let d = Defaults {
            tariff: Some(120.0),
            wholesale_price: Some(40.0),
            v_min: Some(0.81),
            v_max: Some(1.21),
            rating: Some(5.0),
            gamma: Some(0.0),
            total_load: Some(8.0),
            ..Defaults::default()
        };
        f.apply_defaults(&d);
        assert_eq!(f.wholesale_price, Some(40.0));
        assert_eq!(f.buses[0].tariff, Some(120.0));
        assert_eq!(f.buses[1].tariff, Some(80.0));
        assert_eq!(f.buses[0].v_min, Some(1.0));
        assert_eq!(f.buses[1].v_max, Some(1.21));
        assert_eq!(f.lines[0].s, Some(5.0));
        assert!((f.buses[0].dp - 2.0).abs() < 1e-12);
        assert!((f.buses[1].dp - 6.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("case.json");
        std::fs::write(&p, "{ not json").unwrap();
        let err = CaseFile::read(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }
}
