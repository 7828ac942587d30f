//! Result artifacts and report tables. Every emitter sorts its rows by a
//! total order and formats numbers with fixed precision, so identical runs
//! produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordinator::{line_loading, mean_line_loading, Mode, RunResult, Scenario, ScenarioConfig, SweepCell};
use crate::error::{Error, Result};
use crate::pricing::Architecture;

/// File written by `clear` for one run.
pub const RUN_SUMMARY: &str = "summary.json";
/// File written by `sweep`.
pub const SWEEP_CELLS: &str = "sweep.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Md,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" => Ok(Format::Md),
            other => Err(Error::Config(format!(
                "unknown format '{other}', expected csv, json or md"
            ))),
        }
    }
}

/// Machine-readable summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub scenario_hash: String,
    pub case: String,
    pub converged: bool,
    pub network_optimal: bool,
    pub rounds: usize,
    pub p2p_demand: f64,
    pub matched_trades: usize,
    pub matched_volume: f64,
    pub average_charge: Option<f64>,
    pub consumer_payments: f64,
    pub producer_revenues: f64,
    pub nuc: f64,
    pub generation_cost: f64,
    pub architecture: Architecture,
    pub utility_revenue: f64,
    pub welfare: Option<f64>,
    pub mean_line_loading: Option<f64>,
    pub exact: Option<bool>,
    pub stable: Option<bool>,
    pub config: ScenarioConfig,
    /// Command-line values that replaced the scenario's settings.
    #[serde(default)]
    pub overrides: BTreeMap<String, serde_json::Value>,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, result: &RunResult) -> Self {
        let sol = result.opf.as_ref().filter(|s| s.is_optimal());
        RunSummary {
            mode: result.mode,
            scenario_hash: result.scenario_hash.clone(),
            case: scenario.case.name.clone(),
            converged: result.converged,
            network_optimal: sol.is_some(),
            rounds: result.rounds,
            p2p_demand: scenario.case.p2p_demand_mw(),
            matched_trades: result.graph.matched.len(),
            matched_volume: result.graph.matched_volume(),
            average_charge: result.average_charge(),
            consumer_payments: result.settlement.consumer_payments,
            producer_revenues: result.settlement.producer_revenues,
            nuc: result.settlement.nuc,
            generation_cost: result.settlement.generation_cost,
            architecture: result.revenue.architecture,
            utility_revenue: result.revenue.total,
            welfare: result.welfare,
            mean_line_loading: sol.and_then(|s| mean_line_loading(&scenario.case, s)),
            exact: result.exactness.as_ref().map(|e| e.is_exact()),
            stable: result.stability.as_ref().map(|s| s.is_stable()),
            config: scenario.config.clone(),
            overrides: BTreeMap::new(),
        }
    }

    /// Converged with a feasible network solution.
    pub fn is_success(&self) -> bool {
        self.converged && self.network_optimal
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Signed zero prints as `-0.00`; normalize it.
fn fixed(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Settled trades, sorted by trade id.
pub fn settlement_csv(result: &RunResult) -> String {
    let mut out = String::from(
        "trade,seller,buyer,seller_bus,buyer_bus,quantity_mw,price,charge,buyer_payment,seller_revenue,scenario\n",
    );
    let mut rows: Vec<_> = result.settlement.rows.iter().collect();
    rows.sort_by_key(|r| r.trade);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.trade,
            r.seller,
            r.buyer,
            r.seller_bus,
            r.buyer_bus,
            r.quantity,
            r.price,
            r.charge,
            r.buyer_payment,
            r.seller_revenue,
            result.scenario_hash
        );
    }
    out
}

/// DLMPs and voltage magnitudes by bus, in case order.
pub fn bus_csv(scenario: &Scenario, result: &RunResult) -> String {
    let mut out = String::from("bus,lambda,voltage,scenario\n");
    if let Some(sol) = result.opf.as_ref().filter(|s| s.is_optimal()) {
        for ((bus, l), v) in scenario
            .case
            .buses
            .iter()
            .zip(&sol.lambda)
            .zip(sol.voltage_magnitudes())
        {
            let _ = writeln!(out, "{},{:.6},{:.6},{}", bus.id, l, v, result.scenario_hash);
        }
    }
    out
}

/// Line flows, loading and relaxation gap, in case order.
pub fn line_csv(scenario: &Scenario, result: &RunResult) -> String {
    let mut out = String::from("line,from,to,p_mw,q_mvar,loading_pct,gap,scenario\n");
    let case = &scenario.case;
    if let Some(sol) = result.opf.as_ref().filter(|s| s.is_optimal()) {
        let loading = line_loading(case, sol);
        let gaps = result.exactness.as_ref().map(|e| e.gaps.clone()).unwrap_or_default();
        for (l, line) in case.lines.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{},{}",
                line.id,
                case.buses[line.from].id,
                case.buses[line.to].id,
                sol.fp_mw(l),
                sol.fq_mvar(l),
                opt(loading[l], 4),
                gaps.get(l).map(|g| format!("{g:.3e}")).unwrap_or_default(),
                result.scenario_hash
            );
        }
    }
    out
}

/// Peer-centric coordination rounds.
pub fn rounds_csv(result: &RunResult) -> String {
    let mut out = String::from("round,matched,volume_mw,feasible,match_iterations,max_charge_change,average_charge\n");
    for r in &result.round_log {
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{},{:.6},{}",
            r.round,
            r.matched,
            r.volume,
            r.feasible,
            r.match_iterations,
            r.max_charge_change,
            opt(r.average_charge, 6)
        );
    }
    out
}

/// Sweep cells ordered by Γ, then mode.
pub fn sorted_cells(cells: &[SweepCell]) -> Vec<&SweepCell> {
    let mut v: Vec<&SweepCell> = cells.iter().collect();
    v.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.mode.cmp(&b.mode)));
    v
}

/// One row per sweep cell.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(
        "gamma,mode,p2p_demand_mw,matched_volume_mw,average_charge,nuc,consumer_payments,producer_revenues,\
         generation_cost,utility_revenue,welfare,mean_line_loading_pct,rounds,converged,error,scenario\n",
    );
    for c in sorted_cells(cells) {
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.gamma,
            c.mode,
            c.p2p_demand,
            opt(c.matched_volume, 6),
            opt(c.average_charge, 6),
            opt(c.nuc, 6),
            opt(c.consumer_payments, 6),
            opt(c.producer_revenues, 6),
            opt(c.generation_cost, 6),
            opt(c.utility_revenue, 6),
            opt(c.welfare, 6),
            opt(c.mean_line_loading, 4),
            c.rounds.map(|r| r.to_string()).unwrap_or_default(),
            c.converged,
            c.error.as_deref().unwrap_or("").replace(',', ";"),
            c.scenario_hash
        );
    }
    out
}

/// Long-form per-bus voltage and DLMP series for the sweep.
pub fn bus_series_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("gamma,mode,bus_index,lambda,voltage,scenario\n");
    for c in sorted_cells(cells) {
        if let (Some(l), Some(v)) = (&c.lambda, &c.voltage) {
            for (b, (l, v)) in l.iter().zip(v).enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{}",
                    c.gamma, c.mode, b, l, v, c.scenario_hash
                );
            }
        }
    }
    out
}

/// Long-form line loading series, percent of rating.
pub fn loading_series_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("gamma,mode,line_index,loading_pct,scenario\n");
    for c in sorted_cells(cells) {
        if let Some(loading) = &c.loading {
            for (l, x) in loading.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", c.gamma, c.mode, l, opt(*x, 4), c.scenario_hash);
            }
        }
    }
    out
}

/// Mean absolute DLMP difference between the two modes at each Γ where both
/// solved.
pub fn dlmp_gap_by_gamma(cells: &[SweepCell]) -> Vec<(f64, Option<f64>)> {
    gammas(cells)
        .into_iter()
        .map(|g| {
            let find = |m: Mode| {
                cells
                    .iter()
                    .find(|c| c.gamma == g && c.mode == m)
                    .and_then(|c| c.lambda.as_ref())
            };
            let gap = match (find(Mode::System), find(Mode::Peer)) {
                (Some(a), Some(b)) if a.len() == b.len() && !a.is_empty() => {
                    Some(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
                }
                _ => None,
            };
            (g, gap)
        })
        .collect()
}

fn gammas(cells: &[SweepCell]) -> Vec<f64> {
    let mut g: Vec<f64> = cells.iter().map(|c| c.gamma).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Rows of the penetration table: a label and one value per Γ.
fn sweep_table_rows(cells: &[SweepCell]) -> (Vec<f64>, Vec<(String, Vec<String>)>) {
    let grid = gammas(cells);
    let cell = |g: f64, m: Mode| cells.iter().find(|c| c.gamma == g && c.mode == m);
    let demand = grid
        .iter()
        .map(|&g| {
            cells
                .iter()
                .find(|c| c.gamma == g)
                .map(|c| fixed(c.p2p_demand, 2))
                .unwrap_or_default()
        })
        .collect();
    let mut rows = vec![
        ("Γ_b".to_string(), grid.iter().map(|g| g.to_string()).collect()),
        ("Σ Γ_b D^p_b, MW".to_string(), demand),
    ];
    for (mode, label) in [(Mode::System, "System"), (Mode::Peer, "Peer")] {
        if cells.iter().any(|c| c.mode == mode) {
            rows.push((
                format!("E(c^n) {label}, $/MWh"),
                grid.iter()
                    .map(|&g| match cell(g, mode) {
                        Some(c) if c.error.is_none() => fixed(c.average_charge.unwrap_or(0.0), 2),
                        Some(_) => "failed".into(),
                        None => String::new(),
                    })
                    .collect(),
            ));
        }
    }
    for (mode, label) in [(Mode::System, "System"), (Mode::Peer, "Peer")] {
        if cells.iter().any(|c| c.mode == mode) {
            rows.push((
                format!("Mean line loading {label}, %"),
                grid.iter()
                    .map(|&g| {
                        cell(g, mode)
                            .and_then(|c| c.mean_line_loading)
                            .map(|x| fixed(x, 2))
                            .unwrap_or_default()
                    })
                    .collect(),
            ));
        }
    }
    if cells.iter().any(|c| c.mode == Mode::System) && cells.iter().any(|c| c.mode == Mode::Peer) {
        rows.push((
            "Mean |λ^SC - λ^PC|, $/MWh".to_string(),
            dlmp_gap_by_gamma(cells).into_iter().map(|(_, d)| opt(d, 3)).collect(),
        ));
    }
    (grid, rows)
}

/// Penetration sweep table.
pub fn sweep_table(cells: &[SweepCell], format: Format) -> String {
    match format {
        Format::Json => {
            let (_, rows) = sweep_table_rows(cells);
            let map: BTreeMap<String, Vec<String>> = rows.into_iter().collect();
            let hashes: Vec<(f64, Mode, &str)> = sorted_cells(cells)
                .into_iter()
                .map(|c| (c.gamma, c.mode, c.scenario_hash.as_str()))
                .collect();
            let doc = serde_json::json!({ "rows": map, "scenarios": hashes });
            serde_json::to_string_pretty(&doc).expect("table serializes") + "\n"
        }
        Format::Csv => {
            let (_, rows) = sweep_table_rows(cells);
            let mut out = String::new();
            for (label, values) in rows {
                let _ = writeln!(out, "{},{}", label.replace(',', ";"), values.join(","));
            }
            for mode in [Mode::System, Mode::Peer] {
                let hashes: Vec<String> = sorted_cells(cells)
                    .into_iter()
                    .filter(|c| c.mode == mode)
                    .map(|c| c.scenario_hash.clone())
                    .collect();
                if !hashes.is_empty() {
                    let _ = writeln!(out, "scenario {mode},{}", hashes.join(","));
                }
            }
            out
        }
        Format::Md => {
            let (grid, rows) = sweep_table_rows(cells);
            let mut rows = rows.into_iter();
            let (label, values) = rows.next().expect("grid row");
            let mut out = format!("| {label} | {} |\n|---|", values.join(" | "));
            for _ in &grid {
                out.push_str("---:|");
            }
            out.push('\n');
            for (label, values) in rows {
                let _ = writeln!(out, "| {label} | {} |", values.join(" | "));
            }
            out.push_str("\nScenarios:\n\n");
            for c in sorted_cells(cells) {
                let _ = writeln!(out, "- Γ={} {}: `{}`", c.gamma, c.mode, c.scenario_hash);
            }
            out
        }
    }
}

/// Settlement table, one row per run, ordered by mode then scenario hash.
pub fn settlement_table(runs: &[RunSummary], format: Format) -> String {
    let mut runs: Vec<&RunSummary> = runs.iter().collect();
    runs.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.scenario_hash.cmp(&b.scenario_hash)));
    let label = |m: Mode| match m {
        Mode::System => "System-centric",
        Mode::Peer => "Peer-centric",
    };
    match format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = runs
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "configuration": label(r.mode),
                        "consumer_payments": fixed(r.consumer_payments, 2),
                        "producer_revenues": fixed(r.producer_revenues, 2),
                        "nuc": fixed(r.nuc, 2),
                        "generation_cost": fixed(r.generation_cost, 2),
                        "scenario": r.scenario_hash,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&rows).expect("table serializes") + "\n"
        }
        Format::Csv => {
            let mut out =
                String::from("configuration,consumer_payments,producer_revenues,nuc,generation_cost,scenario\n");
            for r in runs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    label(r.mode),
                    fixed(r.consumer_payments, 2),
                    fixed(r.producer_revenues, 2),
                    fixed(r.nuc, 2),
                    fixed(r.generation_cost, 2),
                    r.scenario_hash
                );
            }
            out
        }
        Format::Md => {
            let mut out = String::from(
                "| Configuration | Consumer payments, $ | Producer revenues, $ | NUC, $ | Generation cost, $ | Scenario |\n\
                 |---|---:|---:|---:|---:|---|\n",
            );
            for r in runs {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | `{}` |",
                    label(r.mode),
                    fixed(r.consumer_payments, 2),
                    fixed(r.producer_revenues, 2),
                    fixed(r.nuc, 2),
                    fixed(r.generation_cost, 2),
                    r.scenario_hash
                );
            }
            out
        }
    }
}

/// Results found in a directory.
#[derive(Clone, Debug)]
pub enum Results {
    Runs(Vec<RunSummary>),
    Sweep(Vec<SweepCell>),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Loads a sweep, or run summaries from the directory and its immediate
/// subdirectories.
pub fn load_results(dir: &Path) -> Result<Results> {
    let sweep = dir.join(SWEEP_CELLS);
    if sweep.exists() {
        return Ok(Results::Sweep(read_json(&sweep)?));
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    if dir.join(RUN_SUMMARY).exists() {
        paths.push(dir.join(RUN_SUMMARY));
    }
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path().join(RUN_SUMMARY);
            if p.exists() {
                paths.push(p);
            }
        }
    }
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no results in {}: expected {SWEEP_CELLS} (written by sweep) or {RUN_SUMMARY} \
             (written by clear, in the directory or one level below)",
            dir.display()
        )));
    }
    paths.sort();
    let runs = paths
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<Vec<RunSummary>>>()?;
    Ok(Results::Runs(runs))
}

/// Renders whichever table the results support.
pub fn render(results: &Results, format: Format) -> String {
    match results {
        Results::Runs(runs) => settlement_table(runs, format),
        Results::Sweep(cells) => sweep_table(cells, format),
    }
}
