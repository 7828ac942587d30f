//! Closed-form DLMP reconstruction along each line, used to cross-check the
//! solver duals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::opf::OpfSolution;

/// Lines whose closed-form denominator falls below this (p.u.) are degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Lines with flows and squared current below this (p.u.) count as unloaded.
pub const UNLOADED_TOL: f64 = 1e-6;

/// Coefficients A1..A5 for one line. `a5` follows the printed expression;
/// `a5_consistent` replaces its `2 (fp)^3 X` term by `(fp)^3 X`, the form
/// obtained by eliminating the line's stationarity conditions directly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a5_consistent: f64,
}

pub fn denominator(fp: f64, fq: f64, a: f64, r: f64, x: f64) -> f64 {
    (fp * fp + fq * fq) * x - a * fq * (r * r + x * x)
}

/// Evaluates the coefficients from per-unit primal values, or `None` when
/// the denominator is degenerate.
pub fn coefficients(fp: f64, fq: f64, a: f64, r: f64, x: f64) -> Option<Coefficients> {
    let d = denominator(fp, fq, a, r, x);
    if !(d.abs() >= DEGENERACY_TOL) {
        return None;
    }
    let s2 = fp * fp + fq * fq;
    let (r2, x2) = (r * r, x * x);
    let a1 = (s2 * x + a * fq * (r2 - x2) - 2.0 * a * fp * r * x) / d;
    let a2 = (s2 * r - a * fp * (r2 + x2)) / d;
    let a3 = (-s2 * r + a * fp * (r2 - x2) + 2.0 * a * fq * r * x) / d;
    let cross = 2.0 * fp * fq * (fp * r - fq * x);
    let a4 = (2.0 * (fq.powi(3) * r - fp.powi(3) * x) + cross) / d;
    let tail = 2.0 * a * a * (fq * r.powi(3) - fp * x.powi(3)) - 4.0 * a * fp * fq * (r2 - x2)
        + 4.0 * a * r * x * (fp * fp - fq * fq)
        - 2.0 * a * a * r * x * (fp * r - fq * x);
    let a5 = (2.0 * (fq.powi(3) * r - 2.0 * fp.powi(3) * x) + cross + tail) / d;
    let a5_consistent = (2.0 * (fq.powi(3) * r - fp.powi(3) * x) + cross + tail) / d;
    Some(Coefficients {
        a1,
        a2,
        a3,
        a4,
        a5,
        a5_consistent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineCheck {
    pub line: usize,
    pub denominator: f64,
    pub degenerate: bool,
    pub unloaded: bool,
    pub coefficients: Option<Coefficients>,
    /// Reconstructed sending-end price with the printed A5, $/MWh.
    pub reconstructed: Option<f64>,
    /// Reconstructed sending-end price with the consistent A5, $/MWh.
    pub reconstructed_consistent: Option<f64>,
    /// `|λ_o - reconstructed|`.
    pub residual: Option<f64>,
    pub residual_consistent: Option<f64>,
}

/// Solver duals (authoritative) plus per-line closed-form diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DlmpVector {
    /// Active-power DLMP per bus, $/MWh.
    pub lambda: Vec<f64>,
    /// Reactive-power price per bus, $/MVArh.
    pub mu: Vec<f64>,
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
    pub lines: Vec<LineCheck>,
}

impl DlmpVector {
    /// Worst residual over non-degenerate lines, scaled by `max(1, |λ_o|)`.
    pub fn max_relative_residual(&self, case: &NetworkCase, consistent: bool) -> f64 {
        self.lines
            .iter()
            .filter_map(|c| {
                let r = if consistent { c.residual_consistent } else { c.residual };
                r.map(|r| r / self.lambda[case.lines[c.line].from].abs().max(1.0))
            })
            .fold(0.0, f64::max)
    }

    pub fn degenerate_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|c| c.degenerate).map(|c| c.line).collect()
    }

    pub fn unloaded_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|c| c.unloaded).map(|c| c.line).collect()
    }
}

pub fn recover_dlmp(sol: &OpfSolution, case: &NetworkCase) -> Result<DlmpVector> {
    if !sol.is_optimal() {
        return Err(Error::invalid(
            "OPF solution",
            format!("not optimal ({})", sol.termination),
        ));
    }
    let lines = case
        .lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let (fp, fq, a) = (sol.fp[l], sol.fq[l], sol.a[l]);
            let coefficients = coefficients(fp, fq, a, line.r, line.x);
            let rhs = |c: &Coefficients, a5: f64| {
                c.a1 * sol.lambda[line.to]
                    + c.a2 * sol.mu[line.from]
                    + c.a3 * sol.mu[line.to]
                    + c.a4 * sol.eta_plus[l]
                    + a5 * sol.eta_minus[l]
            };
            let reconstructed = coefficients.map(|c| rhs(&c, c.a5));
            let reconstructed_consistent = coefficients.map(|c| rhs(&c, c.a5_consistent));
            let lam = sol.lambda[line.from];
            if coefficients.is_none() {
                log::debug!("line {}: degenerate closed form, solver dual used", line.id);
            }
            LineCheck {
                line: l,
                denominator: denominator(fp, fq, a, line.r, line.x),
                degenerate: coefficients.is_none(),
                unloaded: fp.abs().max(fq.abs()).max(a.abs()) < UNLOADED_TOL,
                coefficients,
                reconstructed,
                reconstructed_consistent,
                residual: reconstructed.map(|r| (lam - r).abs()),
                residual_consistent: reconstructed_consistent.map(|r| (lam - r).abs()),
            }
        })
        .collect();
    Ok(DlmpVector {
        lambda: sol.lambda.clone(),
        mu: sol.mu.clone(),
        eta_plus: sol.eta_plus.clone(),
        eta_minus: sol.eta_minus.clone(),
        lines,
    })
}
