//! Discrete demonstrations and the iLQR trajectory optimizer that
//! produces them.
//!
//! A demonstration steers an initial state into the eps0 ball around the
//! origin while keeping every sampled state/input pair inside the safety
//! box `S`, approximately minimizing the finite-horizon quadratic cost.
//! The optimizer is an iterative LQR with quadratic penalties for box
//! violations and a terminal penalty pulling the final state into the
//! equilibrium neighbourhood; the penalty weights escalate a few times if
//! the converged iterate is infeasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ControlSystem, CostSpec, Region};
use crate::error::Error;
use crate::Result;

/// Sampled state/control trajectory of fixed step `h` ending in the eps0
/// ball. `states` and `inputs` have equal length; the trailing input is
/// the one the optimizer would have applied at the terminal sample (zero
/// when the horizon was fully consumed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDemonstration {
    pub h: f64,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// Index into a parent demonstration if this is a suffix view.
    pub origin_index: Option<usize>,
}

impl DiscreteDemonstration {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time span `(len − 1)·h`.
    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.h
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("demonstration is nonempty")
    }

    /// Checks the demonstration invariants: every pair in `S`, terminal
    /// state in the eps0 ball, no interior state already inside it, and
    /// consecutive states consistent with one RK4 step of the recorded
    /// control within `1e-3·(1 + ‖x_j‖)` per step.
    pub fn validate(&self, sys: &ControlSystem, region: &Region) -> Result<()> {
        if self.states.is_empty() || self.states.len() != self.inputs.len() {
            return Err(Error::InvalidConfig(
                "demonstration must have matching nonempty state/input sequences".into(),
            ));
        }
        for (x, u) in self.states.iter().zip(&self.inputs) {
            if !region.in_s(x, u) {
                return Err(Error::InvalidConfig(
                    "demonstration leaves the safety box S".into(),
                ));
            }
        }
        if !region.in_h0(self.final_state()) {
            return Err(Error::InvalidConfig(
                "demonstration does not end in the eps0 ball".into(),
            ));
        }
        for x in &self.states[..self.len() - 1] {
            if region.in_h0(x) {
                return Err(Error::InvalidConfig(
                    "demonstration has an interior state inside the eps0 ball".into(),
                ));
            }
        }
        for j in 0..self.len() - 1 {
            let pred = dynamics::integrate_step(sys, &self.states[j], &self.inputs[j], self.h)?;
            let tol = 1e-3 * (1.0 + self.states[j].norm());
            if (&pred - &self.states[j + 1]).norm() > tol {
                return Err(Error::InvalidConfig(format!(
                    "demonstration step {j} inconsistent with RK4 replay"
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the iLQR demonstrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstratorConfig {
    pub horizon_steps: usize,
    pub max_outer_iterations: usize,
    pub regularization_init: f64,
    pub convergence_tol: f64,
    pub terminal_weight: f64,
    pub constraint_penalty_weight: f64,
}

impl DemonstratorConfig {
    pub fn for_horizon(horizon_steps: usize) -> Self {
        Self {
            horizon_steps,
            max_outer_iterations: 250,
            regularization_init: 1.0,
            convergence_tol: 1e-8,
            terminal_weight: 400.0,
            constraint_penalty_weight: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon_steps > 0
            && self.max_outer_iterations > 0
            && self.regularization_init > 0.0
            && self.convergence_tol > 0.0
            && self.terminal_weight > 0.0
            && self.constraint_penalty_weight > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "all demonstrator parameters must be positive".into(),
            ))
        }
    }
}

/// Computes a discrete demonstration from `x0`.
///
/// The returned trajectory is truncated at the first sample inside the
/// eps0 ball. Initial states already inside it yield a length-1
/// demonstration.
pub fn demonstrate(
    sys: &ControlSystem,
    cost: &CostSpec,
    region: &Region,
    x0: &DVector<f64>,
    cfg: &DemonstratorConfig,
    h: f64,
) -> Result<DiscreteDemonstration> {
    cfg.validate()?;
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }
    if !region.in_d(x0) {
        return Err(Error::DemonstrationFailed {
            x0: x0.iter().copied().collect(),
            reason: "initial state outside D".into(),
        });
    }
    if region.in_h0(x0) {
        return Ok(DiscreteDemonstration {
            h,
            states: vec![x0.clone()],
            inputs: vec![DVector::zeros(sys.input_dim())],
            origin_index: None,
        });
    }

    let mut solver = Ilqr::new(sys, cost, region, h, cfg);
    let mut rho = cfg.constraint_penalty_weight;
    let mut w_term = cfg.terminal_weight;
    // Start from a stabilizing LQR rollout when the linearization admits
    // one; a plain zero-control start can settle into trajectory families
    // (fall-through swings) that no positive candidate can accompany.
    let mut warm: Option<Vec<DVector<f64>>> = lqr_initial_controls(sys, cost, region, x0, cfg, h);
    // Up to three penalty escalations on converged-but-infeasible iterates.
    for _attempt in 0..4 {
        let (states, inputs) = solver.solve(x0, warm.take(), rho, w_term)?;
        if let Some(trunc) = first_h0_index(&states, region) {
            let feasible = (0..=trunc).all(|j| {
                let u = inputs
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| DVector::zeros(sys.input_dim()));
                region.in_s(&states[j], &u)
            });
            if feasible {
                let demo_states = states[..=trunc].to_vec();
                let demo_inputs: Vec<DVector<f64>> = (0..=trunc)
                    .map(|j| {
                        inputs
                            .get(j)
                            .cloned()
                            .unwrap_or_else(|| DVector::zeros(sys.input_dim()))
                    })
                    .collect();
                return Ok(DiscreteDemonstration {
                    h,
                    states: demo_states,
                    inputs: demo_inputs,
                    origin_index: None,
                });
            }
            rho *= 10.0;
        } else {
            rho *= 10.0;
            w_term *= 10.0;
        }
        warm = Some(inputs);
    }
    Err(Error::DemonstrationFailed {
        x0: x0.iter().copied().collect(),
        reason: "optimizer did not produce a feasible trajectory into the eps0 ball".into(),
    })
}

fn first_h0_index(states: &[DVector<f64>], region: &Region) -> Option<usize> {
    states.iter().position(|x| region.in_h0(x))
}

/// Open-loop controls of an equilibrium-LQR rollout from `x0`, used as
/// the optimizer's initial guess. `None` if the linearization is not
/// stabilizable or the rollout blows up.
fn lqr_initial_controls(
    sys: &ControlSystem,
    cost: &CostSpec,
    region: &Region,
    x0: &DVector<f64>,
    cfg: &DemonstratorConfig,
    h: f64,
) -> Option<Vec<DVector<f64>>> {
    let weights = crate::lqr_tracking::TrackingCostMatrices::new(
        cost.q_state.clone(),
        cost.r_input.clone(),
    )
    .ok()?;
    let eq = crate::lqr_tracking::equilibrium_lqr(sys, &weights, h).ok()?;
    let bound: f64 = region
        .s_input
        .lo()
        .iter()
        .chain(region.s_input.hi())
        .fold(0.0, |acc, v| acc.max(v.abs()));
    let mut x = x0.clone();
    let mut inputs = Vec::with_capacity(cfg.horizon_steps);
    for _ in 0..cfg.horizon_steps {
        let mut u = eq.control(&x);
        for v in u.iter_mut() {
            *v = v.clamp(-bound, bound);
        }
        match dynamics::integrate_step(sys, &x, &u, h) {
            Ok(next) if next.norm() < 1e6 => {
                inputs.push(u);
                x = next;
            }
            _ => return None,
        }
    }
    Some(inputs)
}

/// Diagnostic: maximum control deviation over time and coordinate
/// perturbations `x0 + δ·e_i`, probing continuity of the demonstrator in
/// its initial state.
pub fn continuity_probe(
    sys: &ControlSystem,
    cost: &CostSpec,
    region: &Region,
    x0: &DVector<f64>,
    delta: f64,
    cfg: &DemonstratorConfig,
    h: f64,
) -> Result<f64> {
    if delta == 0.0 {
        return Ok(0.0);
    }
    let base = demonstrate(sys, cost, region, x0, cfg, h)?;
    let mut worst = 0.0_f64;
    for i in 0..x0.len() {
        let mut shifted = x0.clone();
        shifted[i] += delta;
        let other = demonstrate(sys, cost, region, &shifted, cfg, h)?;
        let len = base.len().min(other.len());
        for j in 0..len {
            worst = worst.max((&base.inputs[j] - &other.inputs[j]).norm());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// iLQR with box penalties
// ---------------------------------------------------------------------------

struct Ilqr<'a> {
    sys: &'a ControlSystem,
    cost: &'a CostSpec,
    h: f64,
    horizon: usize,
    max_iter: usize,
    tol: f64,
    mu_init: f64,
    state_box: BoxPenalty,
    input_box: BoxPenalty,
}

/// Quadratic hinge penalty for an axis-aligned box.
struct BoxPenalty {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxPenalty {
    fn from_box(b: &crate::dynamics::AxisBox) -> Self {
        // Aim strictly inside S so the exact box test passes afterwards.
        let margin: Vec<f64> = b
            .lo()
            .iter()
            .zip(b.hi())
            .map(|(l, h)| 1e-3 * (h - l))
            .collect();
        Self {
            lo: b.lo().iter().zip(&margin).map(|(l, m)| l + m).collect(),
            hi: b.hi().iter().zip(&margin).map(|(h, m)| h - m).collect(),
        }
    }

    fn value(&self, v: &DVector<f64>) -> f64 {
        let mut p = 0.0;
        for i in 0..v.len() {
            let above = (v[i] - self.hi[i]).max(0.0);
            let below = (self.lo[i] - v[i]).max(0.0);
            p += above * above + below * below;
        }
        p
    }

    fn grad(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            (0..v.len()).map(|i| {
                2.0 * (v[i] - self.hi[i]).max(0.0) - 2.0 * (self.lo[i] - v[i]).max(0.0)
            }),
        )
    }

    fn hess_diag(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            (0..v.len()).map(|i| {
                if v[i] > self.hi[i] || v[i] < self.lo[i] {
                    2.0
                } else {
                    0.0
                }
            }),
        )
    }
}

impl<'a> Ilqr<'a> {
    fn new(
        sys: &'a ControlSystem,
        cost: &'a CostSpec,
        region: &Region,
        h: f64,
        cfg: &DemonstratorConfig,
    ) -> Self {
        Self {
            sys,
            cost,
            h,
            horizon: cfg.horizon_steps,
            max_iter: cfg.max_outer_iterations,
            tol: cfg.convergence_tol,
            mu_init: cfg.regularization_init,
            state_box: BoxPenalty::from_box(&region.s_state),
            input_box: BoxPenalty::from_box(&region.s_input),
        }
    }

    fn rollout(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(x0.clone());
        for u in inputs {
            let next = dynamics::integrate_step(self.sys, states.last().unwrap(), u, self.h)?;
            states.push(next);
        }
        Ok(states)
    }

    fn total_cost(
        &self,
        states: &[DVector<f64>],
        inputs: &[DVector<f64>],
        rho: f64,
        w_term: f64,
    ) -> f64 {
        let mut j = 0.0;
        for (x, u) in states.iter().zip(inputs) {
            j += self.h * dynamics::running_cost(self.cost, x, u)
                + rho * (self.state_box.value(x) + self.input_box.value(u));
        }
        let xt = states.last().unwrap();
        j += w_term * xt.norm_squared() + rho * self.state_box.value(xt);
        j
    }

    /// Jacobians of the RK4 transition map via the chain rule through the
    /// four stages.
    fn step_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.sys.state_dim();
        let h = self.h;
        let eye = DMatrix::identity(n, n);

        let k1 = self.sys.f(x, u);
        let x2 = x + &k1 * (h / 2.0);
        let k2 = self.sys.f(&x2, u);
        let x3 = x + &k2 * (h / 2.0);
        let k3 = self.sys.f(&x3, u);
        let x4 = x + &k3 * h;

        let a1 = self.sys.jac_x(x, u);
        let a2 = self.sys.jac_x(&x2, u);
        let a3 = self.sys.jac_x(&x3, u);
        let a4 = self.sys.jac_x(&x4, u);
        let b1 = self.sys.jac_u(x, u);
        let b2 = self.sys.jac_u(&x2, u);
        let b3 = self.sys.jac_u(&x3, u);
        let b4 = self.sys.jac_u(&x4, u);

        let dk1 = a1;
        let dk2 = &a2 * (&eye + &dk1 * (h / 2.0));
        let dk3 = &a3 * (&eye + &dk2 * (h / 2.0));
        let dk4 = &a4 * (&eye + &dk3 * h);
        let fx = &eye + (&dk1 + &dk2 * 2.0 + &dk3 * 2.0 + &dk4) * (h / 6.0);

        let ek1 = b1;
        let ek2 = &a2 * &ek1 * (h / 2.0) + b2;
        let ek3 = &a3 * &ek2 * (h / 2.0) + b3;
        let ek4 = &a4 * &ek3 * h + b4;
        let fu = (&ek1 + &ek2 * 2.0 + &ek3 * 2.0 + &ek4) * (h / 6.0);

        (fx, fu)
    }

    /// Runs the optimizer from zero (or warm-started) controls; returns the
    /// final trajectory. Accepted iterates never increase the penalized
    /// objective.
    fn solve(
        &mut self,
        x0: &DVector<f64>,
        warm: Option<Vec<DVector<f64>>>,
        rho: f64,
        w_term: f64,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let n = self.sys.state_dim();
        let m = self.sys.input_dim();
        let mut inputs = warm.unwrap_or_else(|| vec![DVector::zeros(m); self.horizon]);
        let mut states = self.rollout(x0, &inputs)?;
        let mut j_cur = self.total_cost(&states, &inputs, rho, w_term);
        let mut mu = self.mu_init;

        for _iter in 0..self.max_iter {
            // Backward pass.
            let xt = states.last().unwrap();
            let mut vx = xt * (2.0 * w_term) + self.state_box.grad(xt) * rho;
            let mut vxx = DMatrix::identity(n, n) * (2.0 * w_term)
                + DMatrix::from_diagonal(&(self.state_box.hess_diag(xt) * rho));
            let mut ks: Vec<DVector<f64>> = Vec::with_capacity(self.horizon);
            let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(self.horizon);
            let mut backward_ok = true;

            for k in (0..self.horizon).rev() {
                let x = &states[k];
                let u = &inputs[k];
                let (fx, fu) = self.step_jacobians(x, u);

                let lx = &self.cost.q_state * x * (2.0 * self.h) + self.state_box.grad(x) * rho;
                let lu = &self.cost.r_input * u * (2.0 * self.h) + self.input_box.grad(u) * rho;
                let lxx = &self.cost.q_state * (2.0 * self.h)
                    + DMatrix::from_diagonal(&(self.state_box.hess_diag(x) * rho));
                let luu = &self.cost.r_input * (2.0 * self.h)
                    + DMatrix::from_diagonal(&(self.input_box.hess_diag(u) * rho));

                let qx = &lx + fx.transpose() * &vx;
                let qu = &lu + fu.transpose() * &vx;
                let qxx = &lxx + fx.transpose() * &vxx * &fx;
                let qux = fu.transpose() * &vxx * &fx;
                let quu = &luu + fu.transpose() * &vxx * &fu + DMatrix::identity(m, m) * mu;

                let chol = match quu.clone().cholesky() {
                    Some(c) => c,
                    None => {
                        backward_ok = false;
                        break;
                    }
                };
                let kff = -chol.solve(&qu);
                let kfb = -chol.solve(&qux);

                vx = &qx
                    + kfb.transpose() * &quu * &kff
                    + kfb.transpose() * &qu
                    + qux.transpose() * &kff;
                vxx = &qxx
                    + kfb.transpose() * &quu * &kfb
                    + kfb.transpose() * &qux
                    + qux.transpose() * &kfb;
                vxx = (&vxx + vxx.transpose()) * 0.5;

                ks.push(kff);
                gains.push(kfb);
            }

            if !backward_ok {
                mu *= 10.0;
                if mu > 1e10 {
                    break;
                }
                continue;
            }
            ks.reverse();
            gains.reverse();

            // Forward pass with backtracking line search.
            let mut accepted = false;
            let mut alpha = 1.0;
            for _ in 0..12 {
                let mut xs = Vec::with_capacity(self.horizon + 1);
                let mut us = Vec::with_capacity(self.horizon);
                xs.push(x0.clone());
                let mut diverged = false;
                for k in 0..self.horizon {
                    let dx = &xs[k] - &states[k];
                    let u = &inputs[k] + &ks[k] * alpha + &gains[k] * dx;
                    match dynamics::integrate_step(self.sys, &xs[k], &u, self.h) {
                        Ok(next) => {
                            us.push(u);
                            xs.push(next);
                        }
                        Err(_) => {
                            diverged = true;
                            break;
                        }
                    }
                }
                if !diverged {
                    let j_new = self.total_cost(&xs, &us, rho, w_term);
                    if j_new < j_cur {
                        let delta = j_cur - j_new;
                        states = xs;
                        inputs = us;
                        j_cur = j_new;
                        accepted = true;
                        mu = (mu * 0.5).max(1e-9);
                        if delta <= self.tol * (1.0 + j_cur.abs()) {
                            return Ok((states, inputs));
                        }
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                mu *= 10.0;
                if mu > 1e10 {
                    break;
                }
            }
        }
        Ok((states, inputs))
    }
}
