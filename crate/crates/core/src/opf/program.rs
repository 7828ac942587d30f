//! Solver-agnostic conic program: `min ½xᵀPx + qᵀx + c  s.t.  Ax + s = b, s ∈ K`.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

/// Cone of one block of constraint rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    /// Equalities, `s = 0`.
    Zero,
    /// Inequalities, `s ≥ 0`.
    Nonneg,
    /// `s₀ ≥ ‖s₁..‖₂`.
    SecondOrder,
}

/// What a block of rows models; the payload is a bus, line or peer index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    ActiveBalance(usize),
    ReactiveBalance(usize),
    VoltageDrop(usize),
    VoltageFixed(usize),
    SellerAggregate(usize),
    BuyerAggregate(usize),
    VoltageBounds(usize),
    CurrentNonneg(usize),
    RootBounds,
    GeneratorBounds(usize),
    SellerBounds(usize),
    BuyerBounds(usize),
    TradeNonneg(usize),
    RatingForward(usize),
    RatingBackward(usize),
    CurrentCone(usize),
}

impl BlockKind {
    fn label(&self) -> String {
        use BlockKind::*;
        match *self {
            ActiveBalance(b) => format!("active_balance bus={b}"),
            ReactiveBalance(b) => format!("reactive_balance bus={b}"),
            VoltageDrop(l) => format!("voltage_drop line={l}"),
            VoltageFixed(b) => format!("voltage_fixed bus={b}"),
            SellerAggregate(n) => format!("seller_aggregate peer={n}"),
            BuyerAggregate(n) => format!("buyer_aggregate peer={n}"),
            VoltageBounds(b) => format!("voltage_bounds bus={b}"),
            CurrentNonneg(l) => format!("current_nonneg line={l}"),
            RootBounds => "root_bounds".to_string(),
            GeneratorBounds(k) => format!("generator_bounds gen={k}"),
            SellerBounds(n) => format!("seller_bounds peer={n}"),
            BuyerBounds(n) => format!("buyer_bounds peer={n}"),
            TradeNonneg(w) => format!("trade_nonneg trade={w}"),
            RatingForward(l) => format!("rating_forward line={l}"),
            RatingBackward(l) => format!("rating_backward line={l}"),
            CurrentCone(l) => format!("current_cone line={l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub cone: Cone,
    pub kind: BlockKind,
    /// First row of the block.
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    pub var_names: Vec<String>,
    pub q: Vec<f64>,
    /// Diagonal of P as `(index, value)`.
    pub p_diag: Vec<(usize, f64)>,
    pub constant: f64,
    /// Triplets `(row, col, value)` of A.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn add_var(&mut self, name: String) -> usize {
        self.var_names.push(name);
        self.q.push(0.0);
        self.q.len() - 1
    }

    /// Appends a block whose rows are given as `(entries, rhs)`.
    pub fn push_block(&mut self, cone: Cone, kind: BlockKind, rows: &[(&[(usize, f64)], f64)]) {
        let start = self.b.len();
        for (entries, rhs) in rows {
            let r = self.b.len();
            for &(c, v) in entries.iter() {
                if v != 0.0 {
                    self.a.push((r, c, v));
                }
            }
            self.b.push(*rhs);
        }
        self.blocks.push(Block {
            cone,
            kind,
            start,
            len: rows.len(),
        });
    }

    pub fn count(&self, pred: impl Fn(&BlockKind) -> bool) -> usize {
        self.blocks.iter().filter(|b| pred(&b.kind)).count()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    /// Plain-text dump: a header line, the variables, the objective, then
    /// one section per block listing its rows as `coef*var ... | rhs`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "conic-program vars={} rows={} blocks={}",
            self.num_vars(),
            self.num_rows(),
            self.blocks.len()
        );
        let _ = writeln!(out, "variables");
        for (i, name) in self.var_names.iter().enumerate() {
            let _ = writeln!(out, "  x{i} {name}");
        }
        let _ = writeln!(out, "objective constant {:.17e}", self.constant);
        for (i, &c) in self.q.iter().enumerate() {
            if c != 0.0 {
                let _ = writeln!(out, "  linear x{i} {c:.17e}");
            }
        }
        for &(i, p) in &self.p_diag {
            let _ = writeln!(out, "  quadratic x{i} {p:.17e}");
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_rows()];
        for &(r, c, v) in &self.a {
            rows[r].push((c, v));
        }
        for block in &self.blocks {
            let cone = match block.cone {
                Cone::Zero => "zero",
                Cone::Nonneg => "nonneg",
                Cone::SecondOrder => "soc",
            };
            let _ = writeln!(out, "block {cone} {} {}", block.len, block.kind.label());
            for (r, row) in rows.iter().enumerate().skip(block.start).take(block.len) {
                let _ = write!(out, " ");
                let mut entries = row.clone();
                entries.sort_by_key(|e| e.0);
                for (c, v) in entries {
                    let _ = write!(out, " {v:.17e}*x{c}");
                }
                let _ = writeln!(out, " | {:.17e}", self.b[r]);
            }
        }
        out
    }

    /// Evaluates `b - Ax` (the slack) at a point.
    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.b.clone();
        for &(r, c, v) in &self.a {
            s[r] -= v * x[c];
        }
        s
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.q.iter().zip(x).map(|(q, x)| q * x).sum();
        let quad: f64 = self.p_diag.iter().map(|&(i, p)| 0.5 * p * x[i] * x[i]).sum();
        self.constant + lin + quad
    }
}

/// Interior-point tolerances.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_ktratio: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-8,
            tol_gap: 1e-10,
            tol_ktratio: 1e-8,
            max_iter: 400,
        }
    }
}

/// Unscaled solver output: primal `x` and cone duals `z`.
#[derive(Clone, Debug)]
pub struct RawSolution {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: u32,
}

impl ConicProgram {
    pub fn solve(&self, opts: SolverOptions) -> Result<RawSolution> {
        let n = self.num_vars();
        let m = self.num_rows();
        let p_mat = CscMatrix::new_from_triplets(
            n,
            n,
            self.p_diag.iter().map(|d| d.0).collect(),
            self.p_diag.iter().map(|d| d.0).collect(),
            self.p_diag.iter().map(|d| d.1).collect(),
        );
        let a_mat = CscMatrix::new_from_triplets(
            m,
            n,
            self.a.iter().map(|t| t.0).collect(),
            self.a.iter().map(|t| t.1).collect(),
            self.a.iter().map(|t| t.2).collect(),
        );

        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for block in &self.blocks {
            match (block.cone, cones.last_mut()) {
                (Cone::Zero, Some(SupportedConeT::ZeroConeT(k))) => *k += block.len,
                (Cone::Nonneg, Some(SupportedConeT::NonnegativeConeT(k))) => *k += block.len,
                (Cone::Zero, _) => cones.push(SupportedConeT::ZeroConeT(block.len)),
                (Cone::Nonneg, _) => cones.push(SupportedConeT::NonnegativeConeT(block.len)),
                (Cone::SecondOrder, _) => cones.push(SupportedConeT::SecondOrderConeT(block.len)),
            }
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(opts.tol_feas)
            .tol_gap_abs(opts.tol_gap)
            .tol_gap_rel(opts.tol_gap)
            .tol_ktratio(opts.tol_ktratio)
            .max_iter(opts.max_iter)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p_mat, &self.q, &a_mat, &self.b, &cones, settings)
            .map_err(|e| Error::Solver(format!("setup: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        Ok(RawSolution {
            status: sol.status,
            x: sol.x.clone(),
            z: sol.z.clone(),
            iterations: sol.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_lists_blocks_in_order() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x".into());
        let y = p.add_var("y".into());
        p.q[x] = 1.0;
        p.push_block(
            Cone::Zero,
            BlockKind::ActiveBalance(0),
            &[(&[(x, 1.0), (y, -1.0)], 0.0)],
        );
        p.push_block(
            Cone::SecondOrder,
            BlockKind::RatingForward(0),
            &[(&[], 2.0), (&[(x, -1.0)], 0.0), (&[(y, -1.0)], 0.0)],
        );
        let text = p.dump();
        assert!(text.starts_with("conic-program vars=2 rows=4 blocks=2"));
        let zero = text.find("block zero 1 active_balance bus=0").unwrap();
        let soc = text.find("block soc 3 rating_forward line=0").unwrap();
        assert!(zero < soc);
        assert_eq!(p.slack(&[1.0, 1.0]), vec![0.0, 2.0, 1.0, 1.0]);
    }
}
