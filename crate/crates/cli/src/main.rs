//! `gridshare`: clear peer-to-peer trading scenarios on radial feeders, run
//! penetration sweeps and render report tables.
//!
//! Exit codes: 0 when every run converged with a feasible network solution,
//! 2 when a run finished but was flagged (non-convergence, infeasible
//! network check, failed sweep cell), 1 on errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridshare_core::coordinator::{run_gamma_sweep, GammaOverride, Mode, Scenario, ScenarioConfig};
use gridshare_core::opf::PeerInjections;
use gridshare_core::report::{self, Format, Results, RunSummary, RUN_SUMMARY, SWEEP_CELLS};
use gridshare_core::{build_opf, check_exactness, load_case, recover_dlmp, solve_opf, CaseFormat, OpfInput};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "gridshare",
    version,
    about = "Peer-to-peer energy trading on radial distribution feeders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a case and its peers and report what was found.
    Validate(CaseArgs),
    /// Solve the network OPF with no peer trades.
    SolveOpf(OpfArgs),
    /// Clear one scenario and write settlement, DLMP and revenue artifacts.
    Clear(ClearArgs),
    /// Run a penetration sweep over both or one mode.
    Sweep(SweepArgs),
    /// Render tables and figure series from a results directory.
    Report(ReportArgs),
    /// Convert a MATPOWER-style CSV case directory to case JSON.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// Case JSON file, or a directory with case.json or bus.csv/branch.csv.
    #[arg(long)]
    case: PathBuf,
    /// Peer file; defaults to peers.json next to the case.
    #[arg(long)]
    peers: Option<PathBuf>,
}

#[derive(Args)]
struct OpfArgs {
    #[arg(long)]
    case: PathBuf,
    /// Uniform penetration, or per-bus `bus:value` pairs separated by commas.
    #[arg(long)]
    gamma: Option<String>,
    /// Directory for bus and line CSVs and the summary.
    #[arg(long, default_value = "results/opf")]
    out: PathBuf,
    /// Also write the conic program in text form.
    #[arg(long)]
    dump: bool,
}

#[derive(Args, Default)]
struct Overrides {
    /// Scenario JSON; `--case` and the flags below override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    peers: Option<PathBuf>,
    /// Uniform penetration, or per-bus `bus:value` pairs separated by commas.
    #[arg(long)]
    gamma: Option<String>,
    /// Standard trade size P, MW.
    #[arg(long)]
    trade_size: Option<f64>,
    /// Price step, $/MWh.
    #[arg(long)]
    delta_rho: Option<f64>,
    /// Charge applied to matched trades after an infeasible network check, $/MWh.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Charge change below which coordination stops, $/MWh.
    #[arg(long)]
    charge_tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct ClearArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, default_value = "results/clear")]
    out: PathBuf,
    /// Format of the table printed to stdout.
    #[arg(long, default_value = "md", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// `system`, `peer` or `both`.
    #[arg(long, default_value = "both")]
    mode: String,
    /// Comma-separated penetration levels in [0, 1].
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6")]
    gamma_grid: String,
    #[arg(long, default_value = "results/sweep")]
    out: PathBuf,
    #[arg(long, default_value = "md", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory written by `clear` or `sweep`.
    dir: PathBuf,
    #[arg(long, default_value = "md", value_parser = parse_format)]
    format: Format,
    /// Directory for the table and figure series; stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    case: PathBuf,
    /// Output case JSON.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: gridshare_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: gridshare_core::Error| e.to_string())
}

fn parse_gamma(s: &str) -> Result<GammaOverride> {
    if let Ok(g) = s.trim().parse::<f64>() {
        return Ok(GammaOverride::Uniform(g));
    }
    let mut map = BTreeMap::new();
    for pair in s.split(',') {
        let (bus, value) = pair
            .split_once(':')
            .with_context(|| format!("gamma '{s}' is neither a number nor bus:value pairs"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("bad gamma value in '{pair}'"))?;
        map.insert(bus.trim().to_string(), value);
    }
    Ok(GammaOverride::PerBus(map))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|g| {
            g.trim()
                .parse::<f64>()
                .with_context(|| format!("bad gamma grid value '{g}'"))
        })
        .collect()
}

impl Overrides {
    /// Builds the scenario config and records every flag that was applied.
    fn config(&self, mode: Option<Mode>) -> Result<(ScenarioConfig, BTreeMap<String, serde_json::Value>)> {
        let mut applied = BTreeMap::new();
        let mut cfg = match (&self.scenario, &self.case) {
            (Some(path), _) => ScenarioConfig::read(path)?,
            (None, Some(case)) => ScenarioConfig::new(case, mode.unwrap_or(Mode::System)),
            (None, None) => bail!("either --scenario or --case is required"),
        };
        if let (Some(_), Some(case)) = (&self.scenario, &self.case) {
            cfg.case = case.clone();
            applied.insert("case".into(), json!(case));
        }
        if let Some(m) = mode {
            cfg.mode = m;
            applied.insert("mode".into(), json!(m));
        }
        if let Some(p) = &self.peers {
            cfg.peers = Some(p.clone());
            applied.insert("peers".into(), json!(p));
        }
        if let Some(g) = &self.gamma {
            let g = parse_gamma(g)?;
            applied.insert("gamma".into(), json!(g));
            cfg.gamma = Some(g);
        }
        if let Some(v) = self.trade_size {
            cfg.matching.trade_size = v;
            applied.insert("trade_size".into(), json!(v));
        }
        if let Some(v) = self.delta_rho {
            cfg.matching.delta_rho = v;
            applied.insert("delta_rho".into(), json!(v));
        }
        if let Some(v) = self.max_iterations {
            cfg.matching.max_iterations = v;
            applied.insert("max_iterations".into(), json!(v));
        }
        if let Some(v) = self.epsilon {
            cfg.coordination.epsilon = v;
            applied.insert("epsilon".into(), json!(v));
        }
        if let Some(v) = self.max_rounds {
            cfg.coordination.max_rounds = v;
            applied.insert("max_rounds".into(), json!(v));
        }
        if let Some(v) = self.charge_tolerance {
            cfg.coordination.charge_tolerance = v;
            applied.insert("charge_tolerance".into(), json!(v));
        }
        cfg.validate()?;
        Ok((cfg, applied))
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
        Format::Md => "md",
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn validate(args: &CaseArgs) -> Result<ExitCode> {
    let case = load_case(&args.case, CaseFormat::detect(&args.case))?;
    let peers_path = args
        .peers
        .clone()
        .or_else(|| gridshare_core::network::peers_path_for(&args.case));
    let peers = match &peers_path {
        Some(p) => Some(gridshare_core::load_peers(p, &case)?),
        None => None,
    };
    let doc = json!({
        "case": case.name,
        "buses": case.buses.len(),
        "lines": case.lines.len(),
        "generators": case.generators.len(),
        "root_bus": case.buses[case.root].id,
        "total_demand_mw": case.total_demand_mw(),
        "p2p_demand_mw": case.p2p_demand_mw(),
        "peers": peers.as_ref().map(|p| p.len()),
        "sellers": peers.as_ref().map(|p| p.sellers().len()),
        "buyers": peers.as_ref().map(|p| p.buyers().len()),
    });
    print!("{}", pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn solve_opf_cmd(args: &OpfArgs) -> Result<ExitCode> {
    let mut case = load_case(&args.case, CaseFormat::detect(&args.case))?;
    if let Some(g) = &args.gamma {
        case = parse_gamma(g)?.apply(case)?;
    }
    let input = OpfInput {
        case: &case,
        injections: PeerInjections::none(&case),
    };
    let program = build_opf(&input)?;
    let sol = solve_opf(&program)?;
    create_dir(&args.out)?;
    if args.dump {
        write(&args.out, "program.txt", &program.dump())?;
    }
    let mut summary = json!({
        "case": case.name,
        "status": sol.status,
        "termination": sol.termination,
        "iterations": sol.iterations,
    });
    if sol.is_optimal() {
        let dlmp = recover_dlmp(&sol, &case)?;
        let exact = check_exactness(&sol, &case);
        summary["objective"] = json!(sol.objective);
        summary["wholesale_import_mw"] = json!(sol.p0_mw());
        summary["losses_mw"] = json!(sol.losses(&case));
        summary["max_relaxation_gap"] = json!(exact.max_gap());
        summary["exact"] = json!(exact.is_exact());
        summary["max_dlmp_residual"] = json!(dlmp.max_relative_residual(&case, true));
        let mut buses = String::from("bus,lambda,mu,voltage\n");
        for (b, v) in sol.voltage_magnitudes().iter().enumerate() {
            buses.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                case.buses[b].id, sol.lambda[b], sol.mu[b], v
            ));
        }
        write(&args.out, "buses.csv", &buses)?;
        let loading = gridshare_core::coordinator::line_loading(&case, &sol);
        let mut lines = String::from("line,from,to,p_mw,q_mvar,loading_pct,gap\n");
        for (l, line) in case.lines.iter().enumerate() {
            lines.push_str(&format!(
                "{},{},{},{:.6},{:.6},{},{:.3e}\n",
                line.id,
                case.buses[line.from].id,
                case.buses[line.to].id,
                sol.fp_mw(l),
                sol.fq_mvar(l),
                loading[l].map(|x| format!("{x:.4}")).unwrap_or_default(),
                exact.gaps[l]
            ));
        }
        write(&args.out, "lines.csv", &lines)?;
    }
    write(&args.out, "opf.json", &pretty(&summary)?)?;
    print!("{}", pretty(&summary)?);
    Ok(if sol.is_optimal() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn clear(args: &ClearArgs) -> Result<ExitCode> {
    let (cfg, applied) = args.overrides.config(args.mode)?;
    let scenario = Scenario::load(&cfg)?;
    let result = scenario.run()?;
    let mut summary = RunSummary::new(&scenario, &result);
    summary.overrides = applied;

    create_dir(&args.out)?;
    write(&args.out, RUN_SUMMARY, &pretty(&summary)?)?;
    write(&args.out, "settlement.csv", &report::settlement_csv(&result))?;
    write(&args.out, "dlmp.csv", &report::bus_csv(&scenario, &result))?;
    write(&args.out, "lines.csv", &report::line_csv(&scenario, &result))?;
    let revenue = json!({ "scenario": result.scenario_hash, "revenue": result.revenue });
    write(&args.out, "revenue.json", &pretty(&revenue)?)?;
    if !result.round_log.is_empty() {
        write(&args.out, "rounds.csv", &report::rounds_csv(&result))?;
    }
    if !result.match_trace.is_empty() {
        let mut trace = Vec::new();
        gridshare_core::peer::write_trace_csv(&result.match_trace, &mut trace)?;
        write(&args.out, "trace.csv", &String::from_utf8(trace)?)?;
    }
    print!(
        "{}",
        report::settlement_table(std::slice::from_ref(&summary), args.format)
    );

    if !summary.is_success() {
        eprintln!(
            "warning: run flagged (converged: {}, network feasible: {})",
            summary.converged, summary.network_optimal
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_sweep_series(dir: &Path, cells: &[gridshare_core::coordinator::SweepCell]) -> Result<()> {
    write(dir, "buses.csv", &report::bus_series_csv(cells))?;
    write(dir, "loading.csv", &report::loading_series_csv(cells))
}

fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    let modes = match args.mode.as_str() {
        "both" => vec![Mode::System, Mode::Peer],
        m => vec![parse_mode(m).map_err(anyhow::Error::msg)?],
    };
    let grid = parse_grid(&args.gamma_grid)?;
    let (cfg, mut applied) = args.overrides.config(None)?;
    applied.insert("gamma_grid".into(), json!(grid));
    let base = Scenario::load(&cfg)?;
    let cells = run_gamma_sweep(&base, &grid, &modes)?;

    create_dir(&args.out)?;
    write(&args.out, SWEEP_CELLS, &pretty(&report::sorted_cells(&cells))?)?;
    write(&args.out, "sweep.csv", &report::sweep_csv(&cells))?;
    write_sweep_series(&args.out, &cells)?;
    let manifest = json!({
        "case": base.case.name,
        "base_scenario": base.hash(),
        "modes": modes,
        "config": cfg,
        "overrides": applied,
        "cells": cells.len(),
        "failed": cells.iter().filter(|c| c.error.is_some()).count(),
        "not_converged": cells.iter().filter(|c| !c.converged).count(),
    });
    write(&args.out, "manifest.json", &pretty(&manifest)?)?;
    let table = report::sweep_table(&cells, args.format);
    write(&args.out, &format!("table.{}", extension(args.format)), &table)?;
    print!("{table}");

    let flagged = cells.iter().filter(|c| !c.converged || c.error.is_some()).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} of {} cells failed or did not converge", cells.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn report_cmd(args: &ReportArgs) -> Result<ExitCode> {
    let results = report::load_results(&args.dir)?;
    let table = report::render(&results, args.format);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write(out, &format!("table.{}", extension(args.format)), &table)?;
        if let Results::Sweep(cells) = &results {
            write_sweep_series(out, cells)?;
        }
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn convert(args: &ConvertArgs) -> Result<ExitCode> {
    if CaseFormat::detect(&args.case) != CaseFormat::MatpowerCsv {
        bail!("{} is not a directory with bus.csv and branch.csv", args.case.display());
    }
    let case = load_case(&args.case, CaseFormat::MatpowerCsv)?;
    std::fs::write(&args.out, case.to_file().to_json() + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::SolveOpf(a) => solve_opf_cmd(a),
        Command::Clear(a) => clear(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report_cmd(a),
        Command::Convert(a) => convert(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
