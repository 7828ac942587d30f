//! Converter from MATPOWER-style `bus` / `branch` tables to the JSON case schema.
//!
//! Expected columns (header row required, extra columns ignored):
//! `bus.csv`: `bus_i, type, Pd, Qd, Gs, Bs, baseKV, Vmax, Vmin` with the
//! reference bus marked `type = 3` and voltage limits as magnitudes.
//! `branch.csv`: `fbus, tbus, r, x, rateA, status` with impedances in p.u. on
//! the system base and `rateA = 0` meaning no limit.

use std::path::Path;

use serde::Deserialize;

use super::{Base, BusRecord, CaseFile, Defaults, LineRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ConvertOptions {
    pub name: String,
    pub base_mva: f64,
    pub defaults: Defaults,
}

impl ConvertOptions {
    pub fn from_defaults(defaults: &Defaults) -> Self {
        ConvertOptions {
            name: "matpower".into(),
            base_mva: defaults.base_mva.unwrap_or(100.0),
            defaults: defaults.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct BusRow {
    bus_i: u32,
    #[serde(rename = "type")]
    kind: u8,
    #[serde(rename = "Pd")]
    pd: f64,
    #[serde(rename = "Qd")]
    qd: f64,
    #[serde(rename = "Gs")]
    gs: f64,
    #[serde(rename = "Bs")]
    bs: f64,
    #[serde(rename = "baseKV")]
    base_kv: f64,
    #[serde(rename = "Vmax")]
    vmax: f64,
    #[serde(rename = "Vmin")]
    vmin: f64,
}

#[derive(Debug, Deserialize)]
struct BranchRow {
    fbus: u32,
    tbus: u32,
    r: f64,
    x: f64,
    #[serde(rename = "rateA")]
    rate_a: f64,
    status: u8,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(format!("{} row {}", path.display(), i + 2), e)))
        .collect()
}

/// Reads the two tables and produces a case file with defaults applied.
pub fn convert(bus_csv: &Path, branch_csv: &Path, opts: &ConvertOptions) -> Result<CaseFile> {
    let buses: Vec<BusRow> = read_rows(bus_csv)?;
    let branches: Vec<BranchRow> = read_rows(branch_csv)?;
    from_rows(&buses, &branches, opts)
}

fn from_rows(buses: &[BusRow], branches: &[BranchRow], opts: &ConvertOptions) -> Result<CaseFile> {
    let roots: Vec<&BusRow> = buses.iter().filter(|b| b.kind == 3).collect();
    let root = match roots.as_slice() {
        [r] => r,
        [] => return Err(Error::invalid("bus table", "no reference bus (type 3)")),
        _ => {
            let ids: Vec<String> = roots.iter().map(|b| b.bus_i.to_string()).collect();
            return Err(Error::invalid(
                "bus table",
                format!("several reference buses: {}", ids.join(", ")),
            ));
        }
    };
    let base = Base {
        mva: opts.base_mva,
        kv: root.base_kv,
    };
    let zb = base.impedance();

    let bus_records = buses
        .iter()
        .map(|b| BusRecord {
            b: b.bus_i,
            g: b.gs,
            b_shunt: b.bs,
            dp: b.pd,
            dq: b.qd,
            tariff: None,
            v_min: (b.vmin > 0.0).then_some(b.vmin * b.vmin),
            v_max: (b.vmax > 0.0).then_some(b.vmax * b.vmax),
            gamma: None,
        })
        .collect();
    let line_records = branches
        .iter()
        .filter(|br| br.status != 0)
        .enumerate()
        .map(|(k, br)| LineRecord {
            l: k as u32 + 1,
            o: br.fbus,
            r: br.tbus,
            r_ohm: br.r * zb,
            x_ohm: br.x * zb,
            s: (br.rate_a > 0.0).then_some(br.rate_a),
        })
        .collect();

    let mut file = CaseFile {
        name: opts.name.clone(),
        base,
        root: root.bus_i,
        wholesale_price: None,
        root_supply: None,
        buses: bus_records,
        lines: line_records,
        generators: Vec::new(),
    };
    file.apply_defaults(&opts.defaults);
    Ok(file)
}
