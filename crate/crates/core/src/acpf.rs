//! Newton-Raphson AC power flow in polar form, used as an independent check
//! of the conic relaxation. The root bus is the slack; every other bus has a
//! fixed complex injection.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::opf::OpfSolution;

#[derive(Clone, Debug, Serialize)]
pub struct PowerFlow {
    /// Voltage magnitudes, p.u.
    pub vm: Vec<f64>,
    /// Voltage angles, rad.
    pub va: Vec<f64>,
    pub iterations: usize,
    /// Largest power mismatch at exit, p.u.
    pub mismatch: f64,
}

/// Bus admittance matrix with series line impedances and bus shunts.
pub fn admittance(case: &NetworkCase) -> DMatrix<Complex64> {
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for l in &case.lines {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.r, l.x);
        y[(l.from, l.from)] += ys;
        y[(l.to, l.to)] += ys;
        y[(l.from, l.to)] -= ys;
        y[(l.to, l.from)] -= ys;
    }
    for (b, bus) in case.buses.iter().enumerate() {
        y[(b, b)] += Complex64::new(bus.shunt_g, bus.shunt_b);
    }
    y
}

/// Net injections, p.u., implied by an OPF solution and its active withdrawals.
pub fn injections_from_opf(case: &NetworkCase, sol: &OpfSolution, withdrawals: &[f64]) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = case
        .buses
        .iter()
        .zip(withdrawals)
        .map(|(b, w)| Complex64::new(-w, -b.demand_q))
        .collect();
    for (k, g) in case.generators.iter().enumerate() {
        s[g.bus] += Complex64::new(sol.pg[k], sol.qg[k]);
    }
    s
}

/// Solves for the voltages given injections at the non-root buses and the
/// root voltage magnitude.
pub fn newton_power_flow(
    case: &NetworkCase,
    injections: &[Complex64],
    root_vm: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlow> {
    let n = case.buses.len();
    if injections.len() != n {
        return Err(Error::Config(format!("{} injections for {n} buses", injections.len())));
    }
    let y = admittance(case);
    let pq: Vec<usize> = (0..n).filter(|&b| b != case.root).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    vm[case.root] = root_vm;

    let calc = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        let v: Vec<Complex64> = vm.iter().zip(va).map(|(&r, &t)| Complex64::from_polar(r, t)).collect();
        (0..n)
            .map(|i| {
                let current: Complex64 = (0..n).map(|k| y[(i, k)] * v[k]).sum();
                v[i] * current.conj()
            })
            .collect()
    };

    for iter in 0..=max_iter {
        let s = calc(&vm, &va);
        let mut f = DVector::zeros(2 * m);
        for (k, &i) in pq.iter().enumerate() {
            f[k] = s[i].re - injections[i].re;
            f[m + k] = s[i].im - injections[i].im;
        }
        let mismatch = f.amax();
        if mismatch < tol {
            return Ok(PowerFlow {
                vm,
                va,
                iterations: iter,
                mismatch,
            });
        }
        if iter == max_iter {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let g = y[(i, k)].re;
                let b = y[(i, k)].im;
                if i == k {
                    let (p, q) = (s[i].re, s[i].im);
                    let (gii, bii) = (g, b);
                    let v = vm[i];
                    jac[(r, c)] = -q - bii * v * v;
                    jac[(r, m + c)] = p / v + gii * v;
                    jac[(m + r, c)] = p - gii * v * v;
                    jac[(m + r, m + c)] = q / v - bii * v;
                } else {
                    let t = va[i] - va[k];
                    let (st, ct) = t.sin_cos();
                    jac[(r, c)] = vm[i] * vm[k] * (g * st - b * ct);
                    jac[(r, m + c)] = vm[i] * (g * ct + b * st);
                    jac[(m + r, c)] = -vm[i] * vm[k] * (g * ct + b * st);
                    jac[(m + r, m + c)] = vm[i] * (g * st - b * ct);
                }
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| Error::Solver("power flow Jacobian is singular".into()))?;
        for (k, &i) in pq.iter().enumerate() {
            va[i] += dx[k];
            vm[i] += dx[m + k];
        }
    }
    Err(Error::Solver(format!(
        "power flow did not converge in {max_iter} iterations"
    )))
}
