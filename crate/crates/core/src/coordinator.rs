//! End-to-end workflows: one-shot co-optimized settlement, the iterative
//! match, network check and charge update loop, and penetration sweeps.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{load_case, load_peers, peers_path_for, CaseFormat, NetworkCase, PeerKind, PeerSet};
use crate::opf::{
    build_opf, check_exactness, coopt_withdrawals, fixed_withdrawals, solve_opf, BusInjection, ExactnessReport,
    OpfInput, OpfSolution, PeerInjections,
};
use crate::peer::{
    build_trade_graph_parallel, run_price_adjustment, verify_stability, MatchConfig, PriceBook, StabilityReport,
    TraceRow,
};
use crate::pricing::{
    average_charge, recover_dlmp, utility_revenue, Architecture, ChargeTable, DlmpVector, RevenueReport, Settlement,
};
use crate::system::{build_trade_graph_simple, clear_system_centric, settle_system_centric};
use crate::trade::TradeGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    System,
    Peer,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::System => "system",
            Mode::Peer => "peer",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "system" => Ok(Mode::System),
            "peer" => Ok(Mode::Peer),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected system or peer"
            ))),
        }
    }
}

/// Penetration override: one value for every bus or values per bus id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaOverride {
    Uniform(f64),
    /// Keyed by bus id.
    PerBus(BTreeMap<String, f64>),
}

impl GammaOverride {
    pub fn apply(&self, case: NetworkCase) -> Result<NetworkCase> {
        match self {
            GammaOverride::Uniform(g) => case.with_uniform_gamma(*g),
            GammaOverride::PerBus(map) => {
                let map = map
                    .iter()
                    .map(|(k, &v)| {
                        k.parse::<u32>()
                            .map(|id| (id, v))
                            .map_err(|_| Error::Config(format!("gamma override key '{k}' is not a bus id")))
                    })
                    .collect::<Result<HashMap<u32, f64>>>()?;
                case.with_gamma_overrides(&map)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinationConfig {
    pub max_rounds: usize,
    /// Charge applied to matched trades when the network cannot carry them, $/MWh.
    pub epsilon: f64,
    /// Largest per-trade charge change, $/MWh, that still counts as converged.
    pub charge_tolerance: f64,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        CoordinationConfig {
            max_rounds: 50,
            epsilon: 50.0,
            charge_tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: PathBuf,
    /// Defaults to `peers.json` next to the case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peers: Option<PathBuf>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaOverride>,
    #[serde(default)]
    pub matching: MatchConfig,
    #[serde(default)]
    pub coordination: CoordinationConfig,
}

impl ScenarioConfig {
    pub fn new(case: impl Into<PathBuf>, mode: Mode) -> Self {
        ScenarioConfig {
            case: case.into(),
            peers: None,
            mode,
            gamma: None,
            matching: MatchConfig::default(),
            coordination: CoordinationConfig::default(),
        }
    }

    /// Reads a JSON scenario; relative paths are taken from the file's directory.
    pub fn read(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if cfg.case.is_relative() {
            cfg.case = dir.join(&cfg.case);
        }
        if let Some(p) = cfg.peers.as_mut().filter(|p| p.is_relative()) {
            *p = dir.join(&*p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.matching.validate()?;
        let c = &self.coordination;
        if !(c.epsilon > 0.0 && c.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", c.epsilon)));
        }
        if c.max_rounds == 0 {
            return Err(Error::Config("max rounds must be at least 1".into()));
        }
        if !(c.charge_tolerance > 0.0) {
            return Err(Error::Config("charge tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A loaded scenario: case with penetration applied and peers bound to it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub case: NetworkCase,
    pub peers: PeerSet,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn load(config: &ScenarioConfig) -> Result<Scenario> {
        config.validate()?;
        let case = load_case(&config.case, CaseFormat::detect(&config.case))?;
        let peers = match config.peers.clone().or_else(|| peers_path_for(&config.case)) {
            Some(p) => load_peers(&p, &case)?,
            None => PeerSet::empty(),
        };
        Scenario::from_parts(case, peers, config.clone())
    }

    /// Applies the configured penetration and rebinds case-derived peer bounds.
    pub fn from_parts(case: NetworkCase, mut peers: PeerSet, config: ScenarioConfig) -> Result<Scenario> {
        config.validate()?;
        let case = match &config.gamma {
            Some(g) => g.apply(case)?,
            None => case,
        };
        peers.rebind(&case);
        Ok(Scenario { case, peers, config })
    }

    pub fn with_gamma(&self, gamma: f64, mode: Mode) -> Result<Scenario> {
        let mut config = self.config.clone();
        config.gamma = Some(GammaOverride::Uniform(gamma));
        config.mode = mode;
        let case = self.case.clone().with_uniform_gamma(gamma)?;
        Scenario::from_parts(case, self.peers.clone(), config)
    }

    /// SHA-256 over the case, the peers and every run parameter.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            case: crate::network::CaseFile,
            peers: &'a [crate::network::PeerSpec],
            mode: Mode,
            matching: &'a MatchConfig,
            coordination: &'a CoordinationConfig,
        }
        let text = serde_json::to_string(&Canonical {
            case: self.case.to_file(),
            peers: &self.peers.peers,
            mode: self.config.mode,
            matching: &self.config.matching,
            coordination: &self.config.coordination,
        })
        .expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn run(&self) -> Result<RunResult> {
        match self.config.mode {
            Mode::System => run_system_centric(self),
            Mode::Peer => run_peer_centric(self),
        }
    }
}

/// One coordination round of the peer-centric loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRow {
    pub round: usize,
    pub matched: usize,
    pub volume: f64,
    pub feasible: bool,
    pub match_iterations: usize,
    pub max_charge_change: f64,
    pub average_charge: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub mode: Mode,
    pub scenario_hash: String,
    /// Trade graph with the matched set, prices and charges.
    pub graph: TradeGraph,
    pub price_book: Option<PriceBook>,
    pub opf: Option<OpfSolution>,
    pub dlmp: Option<DlmpVector>,
    pub exactness: Option<ExactnessReport>,
    pub settlement: Settlement,
    pub revenue: RevenueReport,
    /// Peer welfare plus utility profit, $/h; `None` when the network check failed.
    pub welfare: Option<f64>,
    pub rounds: usize,
    pub converged: bool,
    pub stability: Option<StabilityReport>,
    pub round_log: Vec<RoundRow>,
    pub match_trace: Vec<TraceRow>,
}

impl RunResult {
    pub fn average_charge(&self) -> Option<f64> {
        average_charge(&self.graph)
    }
}

/// `Σ U_m(d_m) - Σ C_n(g_n)` over the traded quantities, MW per peer.
pub fn peer_welfare(peers: &PeerSet, quantity: &[f64]) -> f64 {
    peers
        .peers
        .iter()
        .zip(quantity)
        .map(|(p, &q)| match &p.kind {
            PeerKind::Seller(s) => -s.cost.eval(q),
            PeerKind::Buyer(b) => b.utility.eval(q, b.d_min),
        })
        .sum()
}

/// Social welfare: peer welfare plus the utility's profit on the network
/// solution (tariff income minus supply costs).
pub fn social_welfare(peers: &PeerSet, quantity: &[f64], fixed_opf: &OpfSolution) -> Option<f64> {
    fixed_opf
        .is_optimal()
        .then(|| peer_welfare(peers, quantity) - fixed_opf.objective)
}

/// Single co-optimized solve, DLMP recovery, midpoint settlement.
pub fn run_system_centric(scenario: &Scenario) -> Result<RunResult> {
    let (case, peers) = (&scenario.case, &scenario.peers);
    let graph = build_trade_graph_simple(peers);
    let mut clearing = clear_system_centric(&graph, peers, case, true)?;
    let sol = clearing.opf.clone().expect("co-optimized clearing carries the OPF");
    let dlmp = recover_dlmp(&sol, case)?;
    settle_system_centric(&mut clearing, peers)?;
    let settlement = Settlement::from_graph(&clearing.graph, peers, case);
    let revenue = utility_revenue(case, settlement.nuc, Architecture::infer(case));
    let exactness = check_exactness(&sol, case);
    if !exactness.is_exact() {
        log::warn!("relaxation is not exact on {} lines", exactness.flagged.len());
    }
    Ok(RunResult {
        mode: Mode::System,
        scenario_hash: scenario.hash(),
        graph: clearing.graph,
        price_book: None,
        opf: Some(sol),
        dlmp: Some(dlmp),
        exactness: Some(exactness),
        settlement,
        revenue,
        welfare: Some(clearing.welfare),
        rounds: 1,
        converged: true,
        stability: None,
        round_log: Vec::new(),
        match_trace: Vec::new(),
    })
}

/// Bus injections, MW, of the matched trades.
pub fn matched_injections(case: &NetworkCase, peers: &PeerSet, graph: &TradeGraph) -> Vec<BusInjection> {
    let mut inj = vec![BusInjection::default(); case.buses.len()];
    for t in graph.matched_trades() {
        inj[peers.peers[t.seller].bus].sold += t.quantity;
        inj[peers.peers[t.buyer].bus].bought += t.quantity;
    }
    inj
}

fn solve_fixed(case: &NetworkCase, inj: Vec<BusInjection>) -> Result<OpfSolution> {
    let input = OpfInput {
        case,
        injections: PeerInjections::Fixed(inj),
    };
    solve_opf(&build_opf(&input)?)
}

/// Match, check the network with the matched injections fixed, update the
/// charges, repeat until the matched set and the charges stop changing.
pub fn run_peer_centric(scenario: &Scenario) -> Result<RunResult> {
    let (case, peers) = (&scenario.case, &scenario.peers);
    let cfg = &scenario.config;
    let graph = build_trade_graph_parallel(peers, &cfg.matching)?;
    let n = graph.len();
    let mut charges = vec![0.0; n];
    let mut book: Option<PriceBook> = None;
    let mut previous: Option<Vec<usize>> = None;
    let mut round_log = Vec::new();
    let mut converged = false;
    let mut last = None;

    for round in 1..=cfg.coordination.max_rounds {
        let outcome = run_price_adjustment(&graph, peers, &charges, &cfg.matching, book.as_ref())?;
        let sol = solve_fixed(case, matched_injections(case, peers, &outcome.graph))?;
        // Only matched trades are repriced; the others keep their last charge.
        let mut next = charges.clone();
        if sol.is_optimal() {
            let table = ChargeTable::from_lambda(&graph, peers, &sol.lambda)?;
            for &w in &outcome.graph.matched {
                next[w] = table.charges[w];
            }
        } else {
            for &w in &outcome.graph.matched {
                next[w] = cfg.coordination.epsilon;
            }
        }
        let change = charges
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let same_set = previous.as_ref() == Some(&outcome.graph.matched);
        round_log.push(RoundRow {
            round,
            matched: outcome.graph.matched.len(),
            volume: outcome.graph.matched_volume(),
            feasible: sol.is_optimal(),
            match_iterations: outcome.iterations,
            max_charge_change: change,
            average_charge: average_charge(&outcome.graph),
        });
        log::debug!(
            "round {round}: {} trades, feasible {}, charge change {change:.2e}",
            outcome.graph.matched.len(),
            sol.is_optimal()
        );
        previous = Some(outcome.graph.matched.clone());
        book = Some(outcome.book.rebased(&charges, &next));
        let done = sol.is_optimal() && outcome.converged && same_set && change < cfg.coordination.charge_tolerance;
        last = Some((outcome, sol, charges.clone(), next.clone()));
        charges = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "peer-centric coordination did not converge in {} rounds",
            cfg.coordination.max_rounds
        );
    }

    let (outcome, sol, used, billed) = last.expect("at least one round");
    let mut graph = outcome.graph;
    for t in &mut graph.trades {
        t.charge = if sol.is_optimal() { billed[t.id] } else { used[t.id] };
    }
    let stability = verify_stability(&graph, peers, &used, &cfg.matching);
    let settlement = Settlement::from_graph(&graph, peers, case);
    let revenue = utility_revenue(case, settlement.nuc, Architecture::infer(case));
    let quantity = graph.matched_by_peer(peers.len());
    let welfare = social_welfare(peers, &quantity, &sol);
    let (dlmp, exactness) = if sol.is_optimal() {
        (Some(recover_dlmp(&sol, case)?), Some(check_exactness(&sol, case)))
    } else {
        (None, None)
    };
    Ok(RunResult {
        mode: Mode::Peer,
        scenario_hash: scenario.hash(),
        graph,
        price_book: Some(outcome.book),
        opf: Some(sol),
        dlmp,
        exactness,
        settlement,
        revenue,
        welfare,
        rounds: round_log.len(),
        converged,
        stability: Some(stability),
        round_log,
        match_trace: outcome.trace,
    })
}

/// Realized welfare of a system-centric result evaluated like a peer-centric
/// one, from its matched quantities and a fixed-injection solve.
pub fn realized_welfare(scenario: &Scenario, result: &RunResult) -> Result<Option<f64>> {
    let quantity = result.graph.matched_by_peer(scenario.peers.len());
    let sol = solve_fixed(
        &scenario.case,
        matched_injections(&scenario.case, &scenario.peers, &result.graph),
    )?;
    Ok(social_welfare(&scenario.peers, &quantity, &sol))
}

/// Loading of each rated line, percent of its rating, at the more loaded end.
pub fn line_loading(case: &NetworkCase, sol: &OpfSolution) -> Vec<Option<f64>> {
    case.lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            line.rating.map(|s| {
                let send = sol.fp[l].hypot(sol.fq[l]);
                let recv = (sol.fp[l] - sol.a[l] * line.r).hypot(sol.fq[l] - sol.a[l] * line.x);
                100.0 * send.max(recv) / s
            })
        })
        .collect()
}

pub fn mean_line_loading(case: &NetworkCase, sol: &OpfSolution) -> Option<f64> {
    let rated: Vec<f64> = line_loading(case, sol).into_iter().flatten().collect();
    (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64)
}

/// Active withdrawals, p.u., of a result's network solution.
pub fn withdrawals(scenario: &Scenario, result: &RunResult) -> Option<Vec<f64>> {
    let sol = result.opf.as_ref()?;
    Some(match result.mode {
        Mode::System => coopt_withdrawals(&scenario.case, &scenario.peers, sol),
        Mode::Peer => fixed_withdrawals(
            &scenario.case,
            &matched_injections(&scenario.case, &scenario.peers, &result.graph),
        ),
    })
}

/// Summary of one (Γ, mode) cell of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub mode: Mode,
    pub scenario_hash: String,
    /// `Σ Γ_b D_b`, MW.
    pub p2p_demand: f64,
    pub matched_volume: Option<f64>,
    pub average_charge: Option<f64>,
    pub nuc: Option<f64>,
    pub consumer_payments: Option<f64>,
    pub producer_revenues: Option<f64>,
    pub generation_cost: Option<f64>,
    pub utility_revenue: Option<f64>,
    pub welfare: Option<f64>,
    pub mean_line_loading: Option<f64>,
    pub rounds: Option<usize>,
    pub converged: bool,
    pub lambda: Option<Vec<f64>>,
    pub voltage: Option<Vec<f64>>,
    pub loading: Option<Vec<Option<f64>>>,
    pub error: Option<String>,
}

impl SweepCell {
    fn failed(gamma: f64, mode: Mode, p2p_demand: f64, hash: String, error: String) -> Self {
        SweepCell {
            gamma,
            mode,
            scenario_hash: hash,
            p2p_demand,
            matched_volume: None,
            average_charge: None,
            nuc: None,
            consumer_payments: None,
            producer_revenues: None,
            generation_cost: None,
            utility_revenue: None,
            welfare: None,
            mean_line_loading: None,
            rounds: None,
            converged: false,
            lambda: None,
            voltage: None,
            loading: None,
            error: Some(error),
        }
    }

    pub fn from_result(scenario: &Scenario, gamma: f64, r: &RunResult) -> Self {
        let sol = r.opf.as_ref().filter(|s| s.is_optimal());
        SweepCell {
            gamma,
            mode: r.mode,
            scenario_hash: r.scenario_hash.clone(),
            p2p_demand: scenario.case.p2p_demand_mw(),
            matched_volume: Some(r.graph.matched_volume()),
            average_charge: Some(r.average_charge().unwrap_or(0.0)),
            nuc: Some(r.settlement.nuc),
            consumer_payments: Some(r.settlement.consumer_payments),
            producer_revenues: Some(r.settlement.producer_revenues),
            generation_cost: Some(r.settlement.generation_cost),
            utility_revenue: Some(r.revenue.total),
            welfare: r.welfare,
            mean_line_loading: sol.and_then(|s| mean_line_loading(&scenario.case, s)),
            rounds: Some(r.rounds),
            converged: r.converged,
            lambda: sol.map(|s| s.lambda.clone()),
            voltage: sol.map(|s| s.voltage_magnitudes()),
            loading: sol.map(|s| line_loading(&scenario.case, s)),
            error: None,
        }
    }
}

/// Runs every (Γ, mode) cell concurrently; failures are recorded per cell.
pub fn run_gamma_sweep(base: &Scenario, grid: &[f64], modes: &[Mode]) -> Result<Vec<SweepCell>> {
    if let Some(g) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Config(format!("gamma grid value {g} outside [0, 1]")));
    }
    let cells: Vec<(f64, Mode)> = grid.iter().flat_map(|&g| modes.iter().map(move |&m| (g, m))).collect();
    Ok(cells
        .par_iter()
        .map(|&(gamma, mode)| match base.with_gamma(gamma, mode) {
            Ok(scenario) => match scenario.run() {
                Ok(r) => SweepCell::from_result(&scenario, gamma, &r),
                Err(e) => {
                    log::warn!("sweep cell gamma={gamma} mode={mode} failed: {e}");
                    SweepCell::failed(
                        gamma,
                        mode,
                        scenario.case.p2p_demand_mw(),
                        scenario.hash(),
                        e.to_string(),
                    )
                }
            },
            Err(e) => SweepCell::failed(
                gamma,
                mode,
                gamma * base.case.total_demand_mw(),
                String::new(),
                e.to_string(),
            ),
        })
        .collect())
}
