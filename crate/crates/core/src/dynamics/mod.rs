//! Control systems, regions, quadratic running costs and the fixed-step
//! RK4 integrator used everywhere in the crate.
//!
//! All systems are expressed in deviation input coordinates: the stored
//! vector field satisfies `f(0, 0) = 0`, with any nonzero trim input of
//! the physical model (hover thrust and the like) recorded in
//! [`ControlSystem::u_eq`] and added back only when talking about the
//! raw actuators.

pub mod benchmarks;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Error;
use crate::Result;

type VecFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Smooth control system `ẋ = f(x, u)` with analytic Jacobians.
#[derive(Clone)]
pub struct ControlSystem {
    name: String,
    state_dim: usize,
    input_dim: usize,
    /// Trim input of the underlying physical model; `f` is already shifted
    /// so that the origin with zero (deviation) input is an equilibrium.
    u_eq: DVector<f64>,
    f: Arc<VecFn>,
    jac_x: Arc<MatFn>,
    jac_u: Arc<MatFn>,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

impl ControlSystem {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac_x: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        jac_u: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            u_eq: DVector::zeros(input_dim),
            f: Arc::new(f),
            jac_x: Arc::new(jac_x),
            jac_u: Arc::new(jac_u),
        }
    }

    /// Builds a system from the vector field alone, deriving both Jacobians
    /// by central finite differences. Intended for tests and ad-hoc models.
    pub fn from_field(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        let f = Arc::new(f);
        let fx = f.clone();
        let fu = f.clone();
        let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
            central_jacobian(state_dim, x.len(), |p| fx(p, u), x)
        };
        let jac_u = move |x: &DVector<f64>, u: &DVector<f64>| {
            central_jacobian(state_dim, u.len(), |p| fu(x, p), u)
        };
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            u_eq: DVector::zeros(input_dim),
            f,
            jac_x: Arc::new(jac_x),
            jac_u: Arc::new(jac_u),
        }
    }

    pub fn with_u_eq(mut self, u_eq: DVector<f64>) -> Self {
        assert_eq!(u_eq.len(), self.input_dim);
        self.u_eq = u_eq;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Trim input of the raw model. Controllers work in deviation inputs;
    /// the raw actuator command is `u_eq + u`.
    pub fn u_eq(&self) -> &DVector<f64> {
        &self.u_eq
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }

    /// `∂f/∂x` at `(x, u)`.
    pub fn jac_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_x)(x, u)
    }

    /// `∂f/∂u` at `(x, u)`.
    pub fn jac_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_u)(x, u)
    }

    /// Control-affine split `f(x, u) = f0(x) + G(x)·u`, taken at `u = 0`.
    /// Exact for all benchmark systems; callers that need the split on a
    /// general system should verify affineness first.
    pub fn affine_split(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let zero = DVector::zeros(self.input_dim);
        (self.f(x, &zero), self.jac_u(x, &zero))
    }

    /// Checks `f(x, u) = f0(x) + G(x)u` at a few probe inputs.
    pub fn is_control_affine(&self, probes: &[DVector<f64>], tol: f64) -> bool {
        let zero = DVector::zeros(self.input_dim);
        for x in probes {
            let (f0, g) = self.affine_split(x);
            for k in 0..self.input_dim {
                let mut u = zero.clone();
                u[k] = 0.37 + 0.11 * k as f64;
                let lhs = self.f(x, &u);
                let rhs = &f0 + &g * &u;
                if (lhs - rhs).amax() > tol {
                    return false;
                }
            }
        }
        true
    }
}

fn central_jacobian(
    rows: usize,
    cols: usize,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    at: &DVector<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let step = 1e-6 * (1.0 + at[j].abs());
        let mut hi = at.clone();
        let mut lo = at.clone();
        hi[j] += step;
        lo[j] -= step;
        let col = (f(&hi) - f(&lo)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

/// Axis-aligned box `[lo, hi]` in some ℝᵏ.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "box must have positive volume");
        Self { lo, hi }
    }

    /// Symmetric box `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Self {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    /// Box from per-dimension half-widths, centered at the origin.
    pub fn from_half_widths(hw: &[f64]) -> Self {
        Self::new(hw.iter().map(|w| -w).collect(), hw.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| self.lo[i] <= v && v <= self.hi[i])
    }

    /// Strict interior membership (open-set check, zero tolerance).
    pub fn contains_interior(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| self.lo[i] < v && v < self.hi[i])
    }

    pub fn contains_box(&self, inner: &AxisBox) -> bool {
        self.dim() == inner.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= inner.lo[i] && inner.hi[i] <= self.hi[i])
    }

    /// Scales all half-widths about the box center.
    pub fn scaled(&self, factor: f64) -> Self {
        let lo = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h) - 0.5 * factor * (h - l))
            .collect();
        let hi = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h) + 0.5 * factor * (h - l))
            .collect();
        Self { lo, hi }
    }

    /// Shrinks every side by `margin` (absolute). Used by the demonstrator
    /// to aim strictly inside the safety box.
    pub fn shrunk(&self, margin: f64) -> Self {
        let lo: Vec<f64> = self.lo.iter().map(|l| l + margin).collect();
        let hi: Vec<f64> = self.hi.iter().map(|h| h - margin).collect();
        Self::new(lo, hi)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| rng.random_range(l..h)),
        )
    }

    pub fn clamp(&self, x: &mut DVector<f64>) {
        for i in 0..self.dim() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)),
        )
    }
}

/// Region of interest `D`, safety box `S` (split into its state and input
/// projections) and the equilibrium neighbourhood radius `eps0`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub d: AxisBox,
    pub s_state: AxisBox,
    pub s_input: AxisBox,
    pub eps0: f64,
}

impl Region {
    pub fn new(d: AxisBox, s_state: AxisBox, s_input: AxisBox, eps0: f64) -> Result<Self> {
        let region = Self {
            d,
            s_state,
            s_input,
            eps0,
        };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps0 <= 0.0 {
            return Err(Error::InvalidConfig("eps0 must be positive".into()));
        }
        if !self.s_state.contains_box(&self.d) {
            return Err(Error::InvalidConfig(
                "D must be contained in the state projection of S".into(),
            ));
        }
        // eps0-ball around the origin must sit in the interior of D.
        for i in 0..self.d.dim() {
            if self.d.lo()[i] >= -self.eps0 || self.d.hi()[i] <= self.eps0 {
                return Err(Error::InvalidConfig(
                    "the eps0 ball must lie in the interior of D".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.d.dim()
    }

    /// `‖x‖₂ ≤ eps0`.
    pub fn in_h0(&self, x: &DVector<f64>) -> bool {
        x.norm() <= self.eps0
    }

    pub fn in_d(&self, x: &DVector<f64>) -> bool {
        self.d.contains(x)
    }

    pub fn in_d_interior(&self, x: &DVector<f64>) -> bool {
        self.d.contains_interior(x)
    }

    pub fn in_s(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        self.s_state.contains(x) && self.s_input.contains(u)
    }
}

/// Quadratic running cost `x'Qx + u'Ru`.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub q_state: DMatrix<f64>,
    pub r_input: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q_state: DMatrix<f64>, r_input: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric_positive_definite(&q_state) || !is_symmetric_positive_definite(&r_input) {
            return Err(Error::InvalidConfig(
                "cost matrices must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { q_state, r_input })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            q_state: DMatrix::identity(n, n),
            r_input: DMatrix::identity(m, m),
        }
    }
}

pub fn is_symmetric_positive_definite(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let sym_err = (m - m.transpose()).amax();
    if sym_err > 1e-9 * (1.0 + m.amax()) {
        return false;
    }
    m.clone().cholesky().is_some()
}

/// Running cost integrand `x'Qx + u'Ru`.
pub fn running_cost(cost: &CostSpec, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (x.transpose() * &cost.q_state * x)[(0, 0)] + (u.transpose() * &cost.r_input * u)[(0, 0)]
}

/// One classical RK4 step of `ẋ = f(x, u)` with `u` held constant over `[0, h]`.
pub fn integrate_step(
    sys: &ControlSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    debug_assert!(h > 0.0);
    let k1 = sys.f(x, u);
    let k2 = sys.f(&(x + &k1 * (h / 2.0)), u);
    let k3 = sys.f(&(x + &k2 * (h / 2.0)), u);
    let k4 = sys.f(&(x + &k3 * h), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::IntegrationDiverged)
    }
}

/// Exit status of a closed-loop simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStatus {
    /// The state entered the eps0 ball around the origin.
    ReachedH0,
    /// Some sampled `(x, u)` left the safety box `S`.
    LeftS,
    /// The step budget ran out without any other event.
    Completed,
}

/// Sampled closed-loop trajectory.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub h: f64,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub status: SimStatus,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trace has at least the initial state")
    }
}

/// Rolls the closed loop `ẋ = f(x, ctrl(x, t))` forward with the controller
/// sampled and held over each step. Halts at the first status-changing
/// event: entering the eps0 ball, leaving `S`, or exhausting `n_steps`.
pub fn simulate(
    sys: &ControlSystem,
    x0: &DVector<f64>,
    controller: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>,
    h: f64,
    n_steps: usize,
    region: &Region,
) -> Result<SimTrace> {
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut inputs = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    for k in 0..=n_steps {
        let t = k as f64 * h;
        if region.in_h0(&x) {
            let u = controller(&x, t);
            states.push(x);
            inputs.push(u);
            return Ok(SimTrace {
                h,
                states,
                inputs,
                status: SimStatus::ReachedH0,
            });
        }
        let u = controller(&x, t);
        let left_s = !region.in_s(&x, &u);
        states.push(x.clone());
        inputs.push(u.clone());
        if left_s {
            return Ok(SimTrace {
                h,
                states,
                inputs,
                status: SimStatus::LeftS,
            });
        }
        if k == n_steps {
            break;
        }
        x = integrate_step(sys, &x, &u, h)?;
    }
    Ok(SimTrace {
        h,
        states,
        inputs,
        status: SimStatus::Completed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_integrator() -> ControlSystem {
        ControlSystem::new(
            "integrator1",
            1,
            1,
            |_x, u| DVector::from_row_slice(&[u[0]]),
            |_x, _u| DMatrix::zeros(1, 1),
            |_x, _u| DMatrix::identity(1, 1),
        )
    }

    fn scalar_decay() -> ControlSystem {
        ControlSystem::new(
            "decay",
            1,
            0,
            |x, _u| DVector::from_row_slice(&[-x[0]]),
            |_x, _u| DMatrix::from_row_slice(1, 1, &[-1.0]),
            |_x, _u| DMatrix::zeros(1, 0),
        )
    }

    #[test]
    fn rk4_exact_for_constant_derivative() {
        let sys = scalar_integrator();
        let x = DVector::from_row_slice(&[0.0]);
        let u = DVector::from_row_slice(&[1.0]);
        let next = integrate_step(&sys, &x, &u, 0.1).unwrap();
        assert_relative_eq!(next[0], 0.1, max_relative = 1e-15);
    }

    #[test]
    fn rk4_matches_hand_expanded_decay_step() {
        // Oracle: k1..k4 expanded by hand for ẋ = −x, x = 1, h = 0.1.
        let h: f64 = 0.1;
        let k1 = -1.0;
        let k2 = -(1.0 + h / 2.0 * k1);
        let k3 = -(1.0 + h / 2.0 * k2);
        let k4 = -(1.0 + h * k3);
        let expected = 1.0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        assert_relative_eq!(expected, 0.9048375, epsilon = 1e-9);

        let sys = scalar_decay();
        let x = DVector::from_row_slice(&[1.0]);
        let u = DVector::zeros(0);
        let next = integrate_step(&sys, &x, &u, h).unwrap();
        assert_relative_eq!(next[0], expected, max_relative = 1e-15);
    }

    #[test]
    fn rk4_order_check() {
        // Halving h shrinks the local error by about 2^5 = 32 for ẋ = −x.
        let sys = scalar_decay();
        let u = DVector::zeros(0);
        let x = DVector::from_row_slice(&[1.0]);
        let exact = |h: f64| (-h as f64).exp();
        let err = |h: f64| (integrate_step(&sys, &x, &u, h).unwrap()[0] - exact(h)).abs();
        let ratio = err(0.2) / err(0.1);
        assert!((24.0..=40.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn diverging_step_reports_error() {
        let sys = ControlSystem::new(
            "blowup",
            1,
            0,
            |x, _u| DVector::from_row_slice(&[x[0] * x[0]]),
            |x, _u| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]]),
            |_x, _u| DMatrix::zeros(1, 0),
        );
        let x = DVector::from_row_slice(&[1e200]);
        let u = DVector::zeros(0);
        assert!(matches!(
            integrate_step(&sys, &x, &u, 1.0),
            Err(Error::IntegrationDiverged)
        ));
    }

    #[test]
    fn running_cost_examples() {
        let c = CostSpec::identity(1, 1);
        let x = DVector::from_row_slice(&[1.0]);
        let u = DVector::from_row_slice(&[1.0]);
        assert_relative_eq!(running_cost(&c, &x, &u), 2.0);

        let c2 = CostSpec::identity(2, 1);
        let x = DVector::from_row_slice(&[2.0, 1.0]);
        let u = DVector::from_row_slice(&[3.0]);
        assert_relative_eq!(running_cost(&c2, &x, &u), 14.0);

        let zx = DVector::zeros(2);
        let zu = DVector::zeros(1);
        assert_relative_eq!(running_cost(&c2, &zx, &zu), 0.0);
    }

    #[test]
    fn cost_spec_rejects_indefinite_matrices() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(CostSpec::new(q, DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn region_validation() {
        let d = AxisBox::symmetric(2, 1.0);
        let s = AxisBox::symmetric(2, 2.0);
        let u = AxisBox::symmetric(1, 10.0);
        assert!(Region::new(d.clone(), s.clone(), u.clone(), 0.1).is_ok());
        // eps0 ball not in the interior of D
        assert!(Region::new(d.clone(), s.clone(), u.clone(), 1.0).is_err());
        // D not inside S
        assert!(Region::new(s.clone(), d, u, 0.1).is_err());
    }

    #[test]
    fn simulate_immediate_h0() {
        let sys = scalar_integrator();
        let region = Region::new(
            AxisBox::symmetric(1, 1.0),
            AxisBox::symmetric(1, 2.0),
            AxisBox::symmetric(1, 10.0),
            0.5,
        )
        .unwrap();
        let x0 = DVector::from_row_slice(&[0.2]);
        let ctrl = |_x: &DVector<f64>, _t: f64| DVector::from_row_slice(&[0.0]);
        let trace = simulate(&sys, &x0, &ctrl, 0.1, 0, &region).unwrap();
        assert_eq!(trace.status, SimStatus::ReachedH0);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn simulate_leaves_s() {
        let sys = scalar_integrator();
        let region = Region::new(
            AxisBox::symmetric(1, 1.0),
            AxisBox::symmetric(1, 1.5),
            AxisBox::symmetric(1, 10.0),
            0.01,
        )
        .unwrap();
        let x0 = DVector::from_row_slice(&[0.9]);
        let ctrl = |_x: &DVector<f64>, _t: f64| DVector::from_row_slice(&[1.0]);
        let trace = simulate(&sys, &x0, &ctrl, 0.5, 10, &region).unwrap();
        assert_eq!(trace.status, SimStatus::LeftS);
        assert!(trace.final_state()[0] > 1.5);
    }

    #[test]
    fn affine_probe_detects_nonaffine_system() {
        let affine = scalar_integrator();
        let probes = vec![DVector::from_row_slice(&[0.3])];
        assert!(affine.is_control_affine(&probes, 1e-9));

        let nonaffine = ControlSystem::from_field("sq", 1, 1, |_x, u| {
            DVector::from_row_slice(&[u[0] * u[0]])
        });
        assert!(!nonaffine.is_control_affine(&probes, 1e-9));
    }
}
