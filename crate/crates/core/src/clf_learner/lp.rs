//! Dense linear-programming solver for the candidate learner.
//!
//! Problems have few variables (CLF parameters plus the Chebyshev radius,
//! at most ~80) and up to a few thousand inequality rows, so we solve the
//! dual with a two-phase revised simplex: the dual has one equation per
//! primal variable and one nonnegative variable per row. The primal
//! solution is recovered from the simplex multipliers at optimality.
//! Dantzig pricing switches to Bland's rule after a run of degenerate
//! pivots to rule out cycling.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN_LIMIT: usize = 200;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Maximizes `c·x` subject to `a_i·x ≥ b_i` over free `x`.
///
/// The caller must supply constraints that make the optimum finite
/// (Chebyshev problems always do via the parameter box rows).
pub fn solve_max(c: &[f64], rows: &[(Vec<f64>, f64)]) -> Result<LpSolution> {
    let n = c.len();
    let m = rows.len();
    if m == 0 {
        return Err(Error::LpSolverFailure("no constraint rows".into()));
    }
    for (a, _) in rows {
        if a.len() != n {
            return Err(Error::LpSolverFailure("row length mismatch".into()));
        }
    }

    // Dual of  max c'x  s.t.  −a_i·x ≤ −b_i:
    //   min (−b)'y  s.t.  (−A)'y = c,  y ≥ 0.
    let mut a_mat = DMatrix::zeros(n, m);
    for (j, (a, _)) in rows.iter().enumerate() {
        for i in 0..n {
            a_mat[(i, j)] = -a[i];
        }
    }
    let costs: Vec<f64> = rows.iter().map(|(_, b)| -b).collect();
    let rhs = DVector::from_row_slice(c);

    let mut simplex = Simplex::new(a_mat, rhs, costs);
    simplex.run()?;

    // Simplex multipliers of the dual equations are the primal solution.
    let x = simplex.multipliers();
    let value: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, value })
}

struct Simplex {
    /// Equality matrix including artificial columns (n_eq × (m + n_eq)).
    a: DMatrix<f64>,
    rhs: DVector<f64>,
    costs: Vec<f64>,
    n_eq: usize,
    n_real: usize,
    basis: Vec<usize>,
}

impl Simplex {
    fn new(mut a: DMatrix<f64>, mut rhs: DVector<f64>, costs: Vec<f64>) -> Self {
        let n_eq = a.nrows();
        let n_real = a.ncols();
        // Flip equation signs so the artificial basis is feasible.
        for i in 0..n_eq {
            if rhs[i] < 0.0 {
                rhs[i] = -rhs[i];
                for j in 0..n_real {
                    a[(i, j)] = -a[(i, j)];
                }
            }
        }
        let mut full = DMatrix::zeros(n_eq, n_real + n_eq);
        full.view_mut((0, 0), (n_eq, n_real)).copy_from(&a);
        for i in 0..n_eq {
            full[(i, n_real + i)] = 1.0;
        }
        let basis = (n_real..n_real + n_eq).collect();
        Self {
            a: full,
            rhs,
            costs,
            n_eq,
            n_real,
            basis,
        }
    }

    fn run(&mut self) -> Result<()> {
        // Phase 1: drive the artificials to zero.
        let phase1: Vec<f64> = (0..self.n_real + self.n_eq)
            .map(|j| if j >= self.n_real { 1.0 } else { 0.0 })
            .collect();
        let val = self.optimize(&phase1, true)?;
        if val > 1e-7 {
            return Err(Error::LpSolverFailure(
                "dual infeasible (primal objective unbounded)".into(),
            ));
        }
        // Phase 2 with the real costs; artificials priced out.
        let mut phase2: Vec<f64> = self.costs.clone();
        phase2.resize(self.n_real + self.n_eq, 1e18);
        self.optimize(&phase2, false)?;
        Ok(())
    }

    /// Primal-simplex iterations for min cost'y over the current basis.
    fn optimize(&mut self, cost: &[f64], phase1: bool) -> Result<f64> {
        let mut degenerate_run = 0usize;
        for _iter in 0..200_000 {
            let binv = self.basis_inverse()?;
            let yb = &binv * &self.rhs;
            // π' = c_B' B⁻¹
            let cb = DVector::from_iterator(self.n_eq, self.basis.iter().map(|&j| cost[j]));
            let pi = binv.transpose() * cb;

            // Pricing.
            let use_bland = degenerate_run >= DEGENERATE_RUN_LIMIT;
            let mut entering: Option<(usize, f64)> = None;
            let limit = if phase1 {
                self.n_real + self.n_eq
            } else {
                self.n_real
            };
            for j in 0..limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let col = self.a.column(j);
                let reduced = cost[j] - pi.dot(&col.into_owned());
                if reduced < -PIVOT_TOL {
                    if use_bland {
                        entering = Some((j, reduced));
                        break;
                    }
                    match entering {
                        Some((_, best)) if reduced >= best => {}
                        _ => entering = Some((j, reduced)),
                    }
                }
            }
            let Some((q, _)) = entering else {
                let obj = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| cost[j] * yb[i])
                    .sum();
                return Ok(obj);
            };

            // Ratio test.
            let dir = &binv * self.a.column(q).into_owned();
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.n_eq {
                if dir[i] > PIVOT_TOL {
                    let ratio = yb[i].max(0.0) / dir[i];
                    match leave {
                        Some((li, cur))
                            if ratio > cur + PIVOT_TOL
                                || (ratio > cur - PIVOT_TOL && self.basis[i] >= self.basis[li]) => {}
                        _ => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((l, step)) = leave else {
                return Err(Error::LpSolverFailure("dual unbounded".into()));
            };
            if step <= PIVOT_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.basis[l] = q;
        }
        Err(Error::LpSolverFailure("simplex iteration limit".into()))
    }

    fn basis_inverse(&self) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(self.n_eq, self.n_eq);
        for (i, &j) in self.basis.iter().enumerate() {
            b.set_column(i, &self.a.column(j));
        }
        b.try_inverse()
            .ok_or_else(|| Error::LpSolverFailure("singular basis".into()))
    }

    /// Simplex multipliers for the real cost vector at the current basis.
    fn multipliers(&self) -> Vec<f64> {
        let binv = self.basis_inverse().expect("basis invertible at optimum");
        let mut cost = self.costs.clone();
        cost.resize(self.n_real + self.n_eq, 0.0);
        let cb = DVector::from_iterator(self.n_eq, self.basis.iter().map(|&j| cost[j]));
        let pi = binv.transpose() * cb;
        pi.iter().cloned().collect()
    }
}
