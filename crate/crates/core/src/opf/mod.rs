//! Second-order-cone branch-flow OPF over a radial feeder.
//!
//! Objective coefficients are scaled by `1 / base MVA` so that balance-row
//! duals come out directly in $/MWh; primal quantities stay per-unit.

mod program;

use clarabel::solver::SolverStatus;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{NetworkCase, PeerKind, PeerSet, UtilityFunction};

pub use program::{Block, BlockKind, Cone, ConicProgram, RawSolution, SolverOptions};

/// Rows treat `|Vmax - Vmin|` below this as a pinned voltage.
const FIXED_VOLTAGE_TOL: f64 = 1e-12;
/// Default relative exactness gap above which a line is flagged.
pub const EXACTNESS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpfMode {
    FixedInjections,
    CoOptimize,
}

/// Peer trading at one bus, MW.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BusInjection {
    pub sold: f64,
    pub bought: f64,
}

#[derive(Clone, Debug)]
pub enum PeerInjections<'a> {
    /// Peer quantities are parameters; one entry per bus of the case.
    Fixed(Vec<BusInjection>),
    /// Peer outputs, consumptions and trade quantities are decision variables.
    /// Trades are `(seller, buyer)` index pairs into `peers.peers`.
    CoOptimize {
        peers: &'a PeerSet,
        trades: &'a [(usize, usize)],
    },
}

impl PeerInjections<'_> {
    /// No peer trading at all.
    pub fn none(case: &NetworkCase) -> PeerInjections<'static> {
        PeerInjections::Fixed(vec![BusInjection::default(); case.buses.len()])
    }

    pub fn mode(&self) -> OpfMode {
        match self {
            PeerInjections::Fixed(_) => OpfMode::FixedInjections,
            PeerInjections::CoOptimize { .. } => OpfMode::CoOptimize,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OpfInput<'a> {
    pub case: &'a NetworkCase,
    pub injections: PeerInjections<'a>,
}

impl<'a> OpfInput<'a> {
    pub fn validate(&self) -> Result<()> {
        match &self.injections {
            PeerInjections::Fixed(inj) => {
                if inj.len() != self.case.buses.len() {
                    return Err(Error::invalid(
                        "opf input",
                        format!("{} injections for {} buses", inj.len(), self.case.buses.len()),
                    ));
                }
                for (b, i) in inj.iter().enumerate() {
                    if !(i.sold.is_finite() && i.bought.is_finite()) {
                        let id = self.case.buses[b].id;
                        return Err(Error::invalid(format!("injection at bus {id}"), "not finite"));
                    }
                }
            }
            PeerInjections::CoOptimize { peers, trades } => {
                for p in &peers.peers {
                    if p.bus >= self.case.buses.len() {
                        return Err(Error::invalid(format!("peer {}", p.id), "bus outside the case"));
                    }
                }
                for &(s, b) in trades.iter() {
                    let ok = peers.peers.get(s).and_then(|p| p.seller()).is_some()
                        && peers.peers.get(b).and_then(|p| p.buyer()).is_some();
                    if !ok {
                        return Err(Error::invalid(
                            "trade",
                            format!("({s}, {b}) is not a seller-buyer pair"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Variable offsets of an assembled program.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    pub n_bus: usize,
    pub n_line: usize,
    pub fp: usize,
    pub fq: usize,
    pub a: usize,
    pub v: usize,
    pub p0: usize,
    pub q0: usize,
    pub pg: usize,
    pub qg: usize,
    pub n_gen: usize,
    /// Seller output variables, one per entry of `sellers`.
    pub g: usize,
    pub sellers: Vec<usize>,
    /// Buyer consumption variables, one per entry of `buyers`.
    pub d: usize,
    pub buyers: Vec<usize>,
    pub trade: usize,
    pub n_trade: usize,
}

#[derive(Clone, Debug)]
pub struct OpfProgram {
    pub program: ConicProgram,
    pub layout: Layout,
    pub mode: OpfMode,
    pub base_mva: f64,
    /// Per-unit ratings, `None` for unrated lines.
    ratings: Vec<Option<f64>>,
    /// Sending bus of each resistance-free line.
    lossless: Vec<(usize, usize)>,
    active_rows: Vec<usize>,
    reactive_rows: Vec<usize>,
}

impl OpfProgram {
    pub fn active_balance_rows(&self) -> usize {
        self.program.count(|k| matches!(k, BlockKind::ActiveBalance(_)))
    }

    pub fn reactive_balance_rows(&self) -> usize {
        self.program.count(|k| matches!(k, BlockKind::ReactiveBalance(_)))
    }

    pub fn current_cones(&self) -> usize {
        self.program.count(|k| matches!(k, BlockKind::CurrentCone(_)))
    }

    pub fn rating_cones(&self) -> usize {
        self.program
            .count(|k| matches!(k, BlockKind::RatingForward(_) | BlockKind::RatingBackward(_)))
    }

    pub fn dump(&self) -> String {
        self.program.dump()
    }
}

/// Assembles the conic program.
pub fn build_opf(input: &OpfInput) -> Result<OpfProgram> {
    input.validate()?;
    let case = input.case;
    let mva = case.base.mva;
    let nb = case.buses.len();
    let nl = case.lines.len();
    let mut p = ConicProgram::default();

    let mut lay = Layout {
        n_bus: nb,
        n_line: nl,
        n_gen: case.generators.len(),
        ..Layout::default()
    };
    lay.fp = p.q.len();
    for l in &case.lines {
        p.add_var(format!("fp[{}]", l.id));
    }
    lay.fq = p.q.len();
    for l in &case.lines {
        p.add_var(format!("fq[{}]", l.id));
    }
    lay.a = p.q.len();
    for l in &case.lines {
        p.add_var(format!("a[{}]", l.id));
    }
    lay.v = p.q.len();
    for b in &case.buses {
        p.add_var(format!("v[{}]", b.id));
    }
    lay.p0 = p.add_var("p0".into());
    lay.q0 = p.add_var("q0".into());
    lay.pg = p.q.len();
    for k in 0..lay.n_gen {
        p.add_var(format!("pg[{k}]"));
    }
    lay.qg = p.q.len();
    for k in 0..lay.n_gen {
        p.add_var(format!("qg[{k}]"));
    }

    // Fixed withdrawals and, when co-optimizing, peer variables.
    let mut fixed_net = vec![0.0; nb];
    let mut coopt: Option<(&PeerSet, &[(usize, usize)])> = None;
    match &input.injections {
        PeerInjections::Fixed(inj) => {
            for (b, i) in inj.iter().enumerate() {
                fixed_net[b] = (i.bought - i.sold) / mva;
            }
        }
        PeerInjections::CoOptimize { peers, trades } => {
            lay.sellers = peers.sellers().to_vec();
            lay.buyers = peers.buyers().to_vec();
            lay.n_trade = trades.len();
            lay.g = p.q.len();
            for &i in &lay.sellers {
                p.add_var(format!("g[{}]", peers.peers[i].id));
            }
            lay.d = p.q.len();
            for &i in &lay.buyers {
                p.add_var(format!("d[{}]", peers.peers[i].id));
            }
            lay.trade = p.q.len();
            for &(s, b) in trades.iter() {
                p.add_var(format!("t[{},{}]", peers.peers[s].id, peers.peers[b].id));
            }
            coopt = Some((peers, trades));
        }
    }

    // Objective.
    p.q[lay.p0] = case.wholesale.price;
    for (k, g) in case.generators.iter().enumerate() {
        p.q[lay.pg + k] = g.cost;
    }
    p.constant = -case
        .buses
        .iter()
        .map(|b| b.tariff * b.demand_p * (1.0 - b.gamma))
        .sum::<f64>();
    if let Some((peers, _)) = coopt {
        for (k, &i) in lay.sellers.iter().enumerate() {
            let s = peers.peers[i].seller().expect("seller");
            p.q[lay.g + k] = s.cost.c1;
            if s.cost.c2 > 0.0 {
                p.p_diag.push((lay.g + k, 2.0 * s.cost.c2 * mva));
            }
        }
        for (k, &i) in lay.buyers.iter().enumerate() {
            let b = peers.peers[i].buyer().expect("buyer");
            match b.utility {
                UtilityFunction::Surplus { upsilon } => {
                    p.q[lay.d + k] = -upsilon;
                    p.constant += upsilon * b.d_min / mva;
                }
                UtilityFunction::Quadratic { u1, u2 } => {
                    p.q[lay.d + k] = -u1;
                    if u2 > 0.0 {
                        p.p_diag.push((lay.d + k, 2.0 * u2 * mva));
                    }
                }
            }
        }
    }

    // Equalities: balances, voltage drops, pinned voltages, trade aggregation.
    let (out_lines, in_lines) = case.incidence();
    let mut active_rows = Vec::with_capacity(nb);
    let mut reactive_rows = Vec::with_capacity(nb);
    for (b, bus) in case.buses.iter().enumerate() {
        let mut e: Vec<(usize, f64)> = Vec::new();
        for &l in &out_lines[b] {
            e.push((lay.fp + l, 1.0));
        }
        for &l in &in_lines[b] {
            e.push((lay.fp + l, -1.0));
            e.push((lay.a + l, case.lines[l].r));
        }
        for (k, g) in case.generators.iter().enumerate() {
            if g.bus == b {
                e.push((lay.pg + k, -1.0));
            }
        }
        if b == case.root {
            e.push((lay.p0, -1.0));
        }
        e.push((lay.v + b, bus.shunt_g));
        if let Some((peers, _)) = coopt {
            for (k, &i) in lay.sellers.iter().enumerate() {
                if peers.peers[i].bus == b {
                    e.push((lay.g + k, -1.0));
                }
            }
            for (k, &i) in lay.buyers.iter().enumerate() {
                if peers.peers[i].bus == b {
                    e.push((lay.d + k, 1.0));
                }
            }
        }
        let withdrawal = bus.demand_p * (1.0 - bus.gamma) + fixed_net[b];
        active_rows.push(p.num_rows());
        p.push_block(Cone::Zero, BlockKind::ActiveBalance(b), &[(&e, -withdrawal)]);
    }
    for (b, bus) in case.buses.iter().enumerate() {
        let mut e: Vec<(usize, f64)> = Vec::new();
        for &l in &out_lines[b] {
            e.push((lay.fq + l, 1.0));
        }
        for &l in &in_lines[b] {
            e.push((lay.fq + l, -1.0));
            e.push((lay.a + l, case.lines[l].x));
        }
        for (k, g) in case.generators.iter().enumerate() {
            if g.bus == b {
                e.push((lay.qg + k, -1.0));
            }
        }
        if b == case.root {
            e.push((lay.q0, -1.0));
        }
        e.push((lay.v + b, -bus.shunt_b));
        reactive_rows.push(p.num_rows());
        p.push_block(Cone::Zero, BlockKind::ReactiveBalance(b), &[(&e, -bus.demand_q)]);
    }
    for (l, line) in case.lines.iter().enumerate() {
        let e = [
            (lay.v + line.from, 1.0),
            (lay.v + line.to, -1.0),
            (lay.fp + l, -2.0 * line.r),
            (lay.fq + l, -2.0 * line.x),
            (lay.a + l, line.r * line.r + line.x * line.x),
        ];
        p.push_block(Cone::Zero, BlockKind::VoltageDrop(l), &[(&e, 0.0)]);
    }
    for (b, bus) in case.buses.iter().enumerate() {
        if (bus.v_max - bus.v_min).abs() <= FIXED_VOLTAGE_TOL {
            p.push_block(
                Cone::Zero,
                BlockKind::VoltageFixed(b),
                &[(&[(lay.v + b, 1.0)], bus.v_min)],
            );
        }
    }
    if let Some((_, trades)) = coopt {
        for (k, &i) in lay.sellers.iter().enumerate() {
            let mut e = vec![(lay.g + k, 1.0)];
            e.extend(
                trades
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.0 == i)
                    .map(|(w, _)| (lay.trade + w, -1.0)),
            );
            p.push_block(Cone::Zero, BlockKind::SellerAggregate(i), &[(&e, 0.0)]);
        }
        for (k, &i) in lay.buyers.iter().enumerate() {
            let mut e = vec![(lay.d + k, 1.0)];
            e.extend(
                trades
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.1 == i)
                    .map(|(w, _)| (lay.trade + w, -1.0)),
            );
            p.push_block(Cone::Zero, BlockKind::BuyerAggregate(i), &[(&e, 0.0)]);
        }
    }

    // Inequalities.
    for (b, bus) in case.buses.iter().enumerate() {
        if (bus.v_max - bus.v_min).abs() > FIXED_VOLTAGE_TOL {
            let x = lay.v + b;
            p.push_block(
                Cone::Nonneg,
                BlockKind::VoltageBounds(b),
                &[(&[(x, 1.0)], bus.v_max), (&[(x, -1.0)], -bus.v_min)],
            );
        }
    }
    for l in 0..nl {
        p.push_block(
            Cone::Nonneg,
            BlockKind::CurrentNonneg(l),
            &[(&[(lay.a + l, -1.0)], 0.0)],
        );
    }
    let w = &case.wholesale;
    p.push_block(
        Cone::Nonneg,
        BlockKind::RootBounds,
        &[
            (&[(lay.p0, 1.0)], w.p_max),
            (&[(lay.p0, -1.0)], -w.p_min),
            (&[(lay.q0, 1.0)], w.q_max),
            (&[(lay.q0, -1.0)], -w.q_min),
        ],
    );
    for (k, g) in case.generators.iter().enumerate() {
        p.push_block(
            Cone::Nonneg,
            BlockKind::GeneratorBounds(k),
            &[
                (&[(lay.pg + k, 1.0)], g.p_max),
                (&[(lay.pg + k, -1.0)], -g.p_min),
                (&[(lay.qg + k, 1.0)], g.q_max),
                (&[(lay.qg + k, -1.0)], -g.q_min),
            ],
        );
    }
    if let Some((peers, trades)) = coopt {
        for (k, &i) in lay.sellers.iter().enumerate() {
            let s = peers.peers[i].seller().expect("seller");
            let x = lay.g + k;
            p.push_block(
                Cone::Nonneg,
                BlockKind::SellerBounds(i),
                &[(&[(x, 1.0)], s.g_max / mva), (&[(x, -1.0)], -s.g_min / mva)],
            );
        }
        for (k, &i) in lay.buyers.iter().enumerate() {
            let b = peers.peers[i].buyer().expect("buyer");
            let x = lay.d + k;
            p.push_block(
                Cone::Nonneg,
                BlockKind::BuyerBounds(i),
                &[(&[(x, 1.0)], b.d_max / mva), (&[(x, -1.0)], -b.d_min / mva)],
            );
        }
        for w in 0..trades.len() {
            p.push_block(
                Cone::Nonneg,
                BlockKind::TradeNonneg(w),
                &[(&[(lay.trade + w, -1.0)], 0.0)],
            );
        }
    }

    // Cones.
    let mut ratings = Vec::with_capacity(nl);
    for (l, line) in case.lines.iter().enumerate() {
        ratings.push(line.rating);
        if let Some(s) = line.rating {
            let (fp, fq, a) = (lay.fp + l, lay.fq + l, lay.a + l);
            p.push_block(
                Cone::SecondOrder,
                BlockKind::RatingForward(l),
                &[(&[], s), (&[(fp, -1.0)], 0.0), (&[(fq, -1.0)], 0.0)],
            );
            p.push_block(
                Cone::SecondOrder,
                BlockKind::RatingBackward(l),
                &[
                    (&[], s),
                    (&[(fp, -1.0), (a, line.r)], 0.0),
                    (&[(fq, -1.0), (a, line.x)], 0.0),
                ],
            );
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        let (fp, fq, a, vo) = (lay.fp + l, lay.fq + l, lay.a + l, lay.v + line.from);
        p.push_block(
            Cone::SecondOrder,
            BlockKind::CurrentCone(l),
            &[
                (&[(a, -1.0), (vo, -1.0)], 0.0),
                (&[(fp, -2.0)], 0.0),
                (&[(fq, -2.0)], 0.0),
                (&[(a, -1.0), (vo, 1.0)], 0.0),
            ],
        );
    }

    Ok(OpfProgram {
        program: p,
        layout: lay,
        mode: input.injections.mode(),
        base_mva: mva,
        ratings,
        lossless: case
            .lines
            .iter()
            .enumerate()
            .filter(|(_, line)| line.r == 0.0)
            .map(|(l, line)| (l, line.from))
            .collect(),
        active_rows,
        reactive_rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpfStatus {
    Optimal,
    Infeasible,
    NumericFailure,
}

/// Primal and dual solution. Flows, currents, voltages and generation are
/// per-unit on `base_mva`; use the `*_mw` helpers for physical units.
/// Duals are in $/MWh (λ, μ) and $/MWh per p.u. (η).
#[derive(Clone, Debug, Serialize)]
pub struct OpfSolution {
    pub status: OpfStatus,
    pub mode: OpfMode,
    /// Solver termination reason.
    pub termination: String,
    pub iterations: u32,
    pub base_mva: f64,
    pub fp: Vec<f64>,
    pub fq: Vec<f64>,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub p0: f64,
    pub q0: f64,
    /// Co-optimized seller outputs, buyer consumptions and trades, MW.
    pub seller_output: Vec<f64>,
    pub buyer_consumption: Vec<f64>,
    pub trade_quantity: Vec<f64>,
    /// Minimized objective in $/h: costs minus tariff income, and in
    /// co-optimization also minus buyer utility.
    pub objective: f64,
    pub dual_objective: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
}

impl OpfSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == OpfStatus::Optimal
    }

    pub fn p0_mw(&self) -> f64 {
        self.p0 * self.base_mva
    }

    pub fn fp_mw(&self, l: usize) -> f64 {
        self.fp[l] * self.base_mva
    }

    pub fn fq_mvar(&self, l: usize) -> f64 {
        self.fq[l] * self.base_mva
    }

    /// Apparent power at the sending end, MVA.
    pub fn sending_mva(&self, l: usize) -> f64 {
        self.fp[l].hypot(self.fq[l]) * self.base_mva
    }

    /// Voltage magnitudes, p.u.
    pub fn voltage_magnitudes(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Largest absolute residual of the active and reactive balance rows, p.u.
    pub fn balance_residual(&self, case: &NetworkCase, withdrawals: &[f64]) -> f64 {
        let (out_lines, in_lines) = case.incidence();
        let mut worst: f64 = 0.0;
        for (b, bus) in case.buses.iter().enumerate() {
            let mut hp = withdrawals[b] + bus.shunt_g * self.v[b];
            let mut hq = bus.demand_q - bus.shunt_b * self.v[b];
            for &l in &out_lines[b] {
                hp += self.fp[l];
                hq += self.fq[l];
            }
            for &l in &in_lines[b] {
                hp -= self.fp[l] - self.a[l] * case.lines[l].r;
                hq -= self.fq[l] - self.a[l] * case.lines[l].x;
            }
            for (k, g) in case.generators.iter().enumerate() {
                if g.bus == b {
                    hp -= self.pg[k];
                    hq -= self.qg[k];
                }
            }
            if b == case.root {
                hp -= self.p0;
                hq -= self.q0;
            }
            worst = worst.max(hp.abs()).max(hq.abs());
        }
        worst
    }

    /// Total line losses `Σ a R`, p.u.
    pub fn losses(&self, case: &NetworkCase) -> f64 {
        case.lines.iter().zip(&self.a).map(|(l, a)| a * l.r).sum()
    }
}

pub fn solve_opf(prog: &OpfProgram) -> Result<OpfSolution> {
    solve_opf_with(prog, SolverOptions::default())
}

pub fn solve_opf_with(prog: &OpfProgram, opts: SolverOptions) -> Result<OpfSolution> {
    let raw = prog.program.solve(opts)?;
    let status = match raw.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => OpfStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => OpfStatus::Infeasible,
        _ => OpfStatus::NumericFailure,
    };
    if raw.status == SolverStatus::AlmostSolved {
        log::warn!("OPF solved to reduced accuracy");
    }
    Ok(extract(prog, raw.status, status, &raw.x, &raw.z, raw.iterations))
}

fn extract(
    prog: &OpfProgram,
    raw: SolverStatus,
    status: OpfStatus,
    x: &[f64],
    z: &[f64],
    iterations: u32,
) -> OpfSolution {
    let lay = &prog.layout;
    let cp = &prog.program;
    let mva = prog.base_mva;
    let optimal = status == OpfStatus::Optimal;
    let take = |start: usize, len: usize| -> Vec<f64> {
        if optimal {
            x[start..start + len].to_vec()
        } else {
            vec![f64::NAN; len]
        }
    };
    let dual = |row: usize| if optimal { z[row] } else { f64::NAN };
    let eta = |kind: fn(usize) -> BlockKind| -> Vec<f64> {
        (0..lay.n_line)
            .map(|l| match (prog.ratings[l], cp.block(kind(l))) {
                (Some(s), Some(block)) => dual(block.start) / (2.0 * s),
                _ => 0.0,
            })
            .collect()
    };
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * mva).collect::<Vec<_>>();
    let objective = if optimal { cp.objective(x) * mva } else { f64::NAN };
    let dual_objective = if optimal {
        // Dual value of the scaled program: -½xᵀPx - bᵀz + c.
        let quad: f64 = cp.p_diag.iter().map(|&(i, p)| 0.5 * p * x[i] * x[i]).sum();
        let bz: f64 = cp.b.iter().zip(z).map(|(b, z)| b * z).sum();
        (cp.constant - quad - bz) * mva
    } else {
        f64::NAN
    };
    let fp = take(lay.fp, lay.n_line);
    let fq = take(lay.fq, lay.n_line);
    let v = take(lay.v, lay.n_bus);
    let mut a = take(lay.a, lay.n_line);
    // Without resistance the current costs nothing, so the solver may leave
    // it anywhere above the cone; the tight point is an equally optimal choice.
    if optimal {
        for &(l, from) in &prog.lossless {
            a[l] = (fp[l] * fp[l] + fq[l] * fq[l]) / v[from];
        }
    }
    OpfSolution {
        status,
        mode: prog.mode,
        termination: format!("{raw:?}"),
        iterations,
        base_mva: mva,
        fp,
        fq,
        a,
        v,
        pg: take(lay.pg, lay.n_gen),
        qg: take(lay.qg, lay.n_gen),
        p0: if optimal { x[lay.p0] } else { f64::NAN },
        q0: if optimal { x[lay.q0] } else { f64::NAN },
        seller_output: scale(take(lay.g, lay.sellers.len())),
        buyer_consumption: scale(take(lay.d, lay.buyers.len())),
        trade_quantity: scale(take(lay.trade, lay.n_trade)),
        objective,
        dual_objective,
        lambda: prog.active_rows.iter().map(|&r| dual(r)).collect(),
        mu: prog.reactive_rows.iter().map(|&r| dual(r)).collect(),
        eta_plus: eta(BlockKind::RatingForward),
        eta_minus: eta(BlockKind::RatingBackward),
    }
}

/// Relative gap of the current cone on each line.
#[derive(Clone, Debug, Serialize)]
pub struct ExactnessReport {
    pub gaps: Vec<f64>,
    pub flagged: Vec<usize>,
    pub tolerance: f64,
}

impl ExactnessReport {
    pub fn is_exact(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub fn check_exactness(sol: &OpfSolution, case: &NetworkCase) -> ExactnessReport {
    check_exactness_with(sol, case, EXACTNESS_TOL)
}

pub fn check_exactness_with(sol: &OpfSolution, case: &NetworkCase, tolerance: f64) -> ExactnessReport {
    let gaps: Vec<f64> = case
        .lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let av = sol.a[l] * sol.v[line.from];
            (av - sol.fp[l] * sol.fp[l] - sol.fq[l] * sol.fq[l]) / av.max(1.0)
        })
        .collect();
    let flagged = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| !(g.abs() <= tolerance))
        .map(|(l, _)| l)
        .collect();
    ExactnessReport {
        gaps,
        flagged,
        tolerance,
    }
}

/// Per-bus active withdrawal in p.u. implied by fixed injections.
pub fn fixed_withdrawals(case: &NetworkCase, inj: &[BusInjection]) -> Vec<f64> {
    case.buses
        .iter()
        .zip(inj)
        .map(|(b, i)| b.demand_p * (1.0 - b.gamma) + (i.bought - i.sold) / case.base.mva)
        .collect()
}

/// Per-bus active withdrawal in p.u. of a co-optimized solution.
pub fn coopt_withdrawals(case: &NetworkCase, peers: &PeerSet, sol: &OpfSolution) -> Vec<f64> {
    let mut w: Vec<f64> = case.buses.iter().map(|b| b.demand_p * (1.0 - b.gamma)).collect();
    let mut si = 0;
    let mut bi = 0;
    for p in &peers.peers {
        match p.kind {
            PeerKind::Seller(_) => {
                w[p.bus] -= sol.seller_output[si] / case.base.mva;
                si += 1;
            }
            PeerKind::Buyer(_) => {
                w[p.bus] += sol.buyer_consumption[bi] / case.base.mva;
                bi += 1;
            }
        }
    }
    w
}

#[cfg(test)]
mod tests;
