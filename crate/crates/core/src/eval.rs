//! Closed-loop cost evaluation and the universal-formula baseline.
//!
//! Costs are trapezoidal sums of the quadratic running cost along the
//! sampled closed loop. Every evaluation uses the same harness: the
//! controller under test runs until the state enters the eps0 ball, the
//! equilibrium LQR contracts it to eps0/10, and the residual tail is
//! closed with the regulator's quadratic value function, so comparisons
//! are horizon-independent.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clf_learner::CandidateCLF;
use crate::dynamics::{self, AxisBox, ControlSystem, CostSpec, Region};
use crate::error::Error;
use crate::lqr_tracking::EquilibriumLqr;
use crate::switching::{RunStatus, SwitchingController};
use crate::Result;

/// Stabilizing feedback from a Lyapunov function via the universal
/// formula on the control-affine split `f(x) = f0(x) + G(x)u`:
/// `u = −(a + √(a² + x'Qx·b²))/b · G'∇L` with `a = ∇L'f0`,
/// `b = ‖G'∇L‖²`, and `u = 0` on the `b = 0` branch.
#[derive(Debug, Clone)]
pub struct SontagController {
    sys: ControlSystem,
    candidate: CandidateCLF,
    comparison_q: DMatrix<f64>,
}

impl SontagController {
    /// Verifies the control-affine split at a few probe states before
    /// accepting the system.
    pub fn new(
        sys: ControlSystem,
        candidate: CandidateCLF,
        comparison_q: DMatrix<f64>,
        region: &Region,
    ) -> Result<Self> {
        let probes: Vec<DVector<f64>> = (0..5)
            .map(|i| {
                let t = (i as f64 + 1.0) / 6.0;
                DVector::from_iterator(
                    region.state_dim(),
                    region
                        .d
                        .lo()
                        .iter()
                        .zip(region.d.hi())
                        .map(|(l, h)| l + t * (h - l)),
                )
            })
            .collect();
        if !sys.is_control_affine(&probes, 1e-6) {
            return Err(Error::InvalidConfig(
                "universal-formula controller requires control-affine dynamics".into(),
            ));
        }
        if comparison_q.nrows() != sys.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.state_dim(),
                got: comparison_q.nrows(),
            });
        }
        Ok(Self {
            sys,
            candidate,
            comparison_q,
        })
    }

    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        let grad = self.candidate.gradient(x);
        let (f0, g) = self.sys.affine_split(x);
        let a = grad.dot(&f0);
        let bvec = g.transpose() * &grad;
        let b = bvec.norm_squared();
        if b.abs() <= 1e-12 {
            return DVector::zeros(self.sys.input_dim());
        }
        let xqx = (x.transpose() * &self.comparison_q * x)[(0, 0)];
        let scale = (a + (a * a + xqx * b * b).sqrt()) / b;
        -bvec * scale
    }

    /// Time derivative of the Lyapunov function along the closed loop;
    /// equals `−√(a² + x'Qx·b²)` wherever `b ≠ 0`.
    pub fn lyapunov_rate(&self, x: &DVector<f64>) -> f64 {
        let grad = self.candidate.gradient(x);
        let u = self.control(x);
        grad.dot(&self.sys.f(x, &u))
    }
}

/// Controller handle accepted by the cost harness.
pub enum EvalController<'a> {
    Switching(&'a SwitchingController),
    Feedback(&'a dyn Fn(&DVector<f64>) -> DVector<f64>),
}

/// Cost of one closed-loop run, `None` when the sample did not stabilize
/// (left `S`, exceeded the step cap, or diverged).
pub fn closed_loop_cost(
    sys: &ControlSystem,
    cost: &CostSpec,
    controller: &EvalController,
    x0: &DVector<f64>,
    h: f64,
    region: &Region,
    eq: &EquilibriumLqr,
    step_cap: usize,
) -> Result<Option<f64>> {
    match controller {
        EvalController::Switching(ctrl) => {
            let k_min = ctrl.policy.min_steps(ctrl.h).max(1);
            let max_switches = step_cap / k_min + 1;
            let trace = ctrl.run_switching(x0, max_switches)?;
            if trace.status != RunStatus::Stabilized || trace.len() > step_cap {
                return Ok(None);
            }
            let mut total = trapezoid_cost(cost, &trace.states, &trace.inputs, h);
            total += eq.tail_cost(trace.final_state());
            Ok(Some(total))
        }
        EvalController::Feedback(law) => {
            let mut states = Vec::new();
            let mut inputs = Vec::new();
            let mut x = x0.clone();
            let mut reached = false;
            // Phase 1: the controller under test, down to the eps0 ball.
            for _ in 0..step_cap {
                if region.in_h0(&x) {
                    reached = true;
                    break;
                }
                let u = law(&x);
                if !region.in_s(&x, &u) {
                    return Ok(None);
                }
                states.push(x.clone());
                inputs.push(u.clone());
                x = match dynamics::integrate_step(sys, &x, &u, h) {
                    Ok(next) => next,
                    Err(Error::IntegrationDiverged) => return Ok(None),
                    Err(e) => return Err(e),
                };
            }
            if !reached {
                return Ok(None);
            }
            // Phase 2: equilibrium LQR to eps0/10.
            let mut contracted = false;
            for _ in 0..step_cap {
                if x.norm() <= region.eps0 / 10.0 {
                    contracted = true;
                    break;
                }
                let u = eq.control(&x);
                if !region.in_s(&x, &u) {
                    return Ok(None);
                }
                states.push(x.clone());
                inputs.push(u.clone());
                x = match dynamics::integrate_step(sys, &x, &u, h) {
                    Ok(next) => next,
                    Err(Error::IntegrationDiverged) => return Ok(None),
                    Err(e) => return Err(e),
                };
            }
            if !contracted {
                return Ok(None);
            }
            states.push(x.clone());
            inputs.push(DVector::zeros(sys.input_dim()));
            let mut total = trapezoid_cost(cost, &states, &inputs, h);
            total += eq.tail_cost(&x);
            Ok(Some(total))
        }
    }
}

fn trapezoid_cost(
    cost: &CostSpec,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    h: f64,
) -> f64 {
    if states.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut prev = dynamics::running_cost(cost, &states[0], &inputs[0]);
    for k in 1..states.len() {
        let cur = dynamics::running_cost(cost, &states[k], &inputs[k]);
        total += 0.5 * h * (prev + cur);
        prev = cur;
    }
    total
}

/// One paired evaluation point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub x0: Vec<f64>,
    pub cost_a: Option<f64>,
    pub cost_b: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramData {
    pub lo: f64,
    pub hi: f64,
    pub bins_a: Vec<u32>,
    pub bins_b: Vec<u32>,
}

/// Paired costs of two controllers over a deterministic sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub n_samples: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub failures_a: usize,
    pub failures_b: usize,
    pub histogram: Option<HistogramData>,
    pub samples: Vec<ComparisonSample>,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV: one row per sample `{x0…, cost_a, cost_b, status_a, status_b}`.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.x0.len());
        let mut out = String::new();
        for i in 1..=n {
            out.push_str(&format!("x0_{i},"));
        }
        out.push_str("cost_a,cost_b,status_a,status_b\n");
        for s in &self.samples {
            for v in &s.x0 {
                out.push_str(&format!("{v},"));
            }
            let fmt = |c: &Option<f64>| match c {
                Some(v) => (format!("{v}"), "stabilized"),
                None => (String::new(), "not_stabilized"),
            };
            let (ca, sa) = fmt(&s.cost_a);
            let (cb, sb) = fmt(&s.cost_b);
            out.push_str(&format!("{ca},{cb},{sa},{sb}\n"));
        }
        out
    }
}

/// Evaluates both controllers on `n_samples` seeded uniform draws from
/// `sample_box` and bins the pooled stabilized costs into 50 buckets.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    sys: &ControlSystem,
    cost: &CostSpec,
    region: &Region,
    eq: &EquilibriumLqr,
    controller_a: &EvalController,
    controller_b: &EvalController,
    sample_box: &AxisBox,
    n_samples: usize,
    seed: u64,
    h: f64,
    step_cap: usize,
) -> Result<CostReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x0 = sample_box.sample_uniform(&mut rng);
        let cost_a = closed_loop_cost(sys, cost, controller_a, &x0, h, region, eq, step_cap)?;
        let cost_b = closed_loop_cost(sys, cost, controller_b, &x0, h, region, eq, step_cap)?;
        samples.push(ComparisonSample {
            x0: x0.iter().copied().collect(),
            cost_a,
            cost_b,
        });
    }
    let collect = |pick: fn(&ComparisonSample) -> Option<f64>| -> (Vec<f64>, usize) {
        let vals: Vec<f64> = samples.iter().filter_map(pick).collect();
        let failures = samples.len() - vals.len();
        (vals, failures)
    };
    let (vals_a, failures_a) = collect(|s| s.cost_a);
    let (vals_b, failures_b) = collect(|s| s.cost_b);
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let histogram = build_histogram(&vals_a, &vals_b, 50);
    Ok(CostReport {
        n_samples,
        mean_a: mean(&vals_a),
        mean_b: mean(&vals_b),
        failures_a,
        failures_b,
        histogram,
        samples,
    })
}

fn build_histogram(a: &[f64], b: &[f64], bins: usize) -> Option<HistogramData> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.is_empty() {
        return None;
    }
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { hi - lo } else { 1.0 };
    let mut bins_a = vec![0u32; bins];
    let mut bins_b = vec![0u32; bins];
    let place = |v: f64| (((v - lo) / width * bins as f64) as usize).min(bins - 1);
    for &v in a {
        bins_a[place(v)] += 1;
    }
    for &v in b {
        bins_b[place(v)] += 1;
    }
    Some(HistogramData {
        lo,
        hi,
        bins_a,
        bins_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf_learner::PolynomialBasis;
    use crate::lqr_tracking::{equilibrium_lqr, TrackingCostMatrices};
    use approx::assert_relative_eq;

    fn scalar_integrator() -> (ControlSystem, CostSpec, Region) {
        let sys = ControlSystem::new(
            "integrator1",
            1,
            1,
            |_x, u| DVector::from_row_slice(&[u[0]]),
            |_x, _u| DMatrix::zeros(1, 1),
            |_x, _u| DMatrix::identity(1, 1),
        );
        let region = Region::new(
            AxisBox::symmetric(1, 2.0),
            AxisBox::symmetric(1, 4.0),
            AxisBox::symmetric(1, 100.0),
            0.01,
        )
        .unwrap();
        (sys, CostSpec::identity(1, 1), region)
    }

    fn x_squared_candidate() -> CandidateCLF {
        let basis = PolynomialBasis::new(1, 2, true, true);
        CandidateCLF::new(basis, vec![1.0], -10.0, 10.0).unwrap()
    }

    #[test]
    fn cost_of_origin_is_zero() {
        let (sys, cost, region) = scalar_integrator();
        let w = TrackingCostMatrices::identity(1, 1);
        let eq = equilibrium_lqr(&sys, &w, 0.01).unwrap();
        let law = |x: &DVector<f64>| -x.clone();
        let ctrl = EvalController::Feedback(&law);
        let x0 = DVector::zeros(1);
        let c = closed_loop_cost(&sys, &cost, &ctrl, &x0, 0.01, &region, &eq, 100_000)
            .unwrap()
            .unwrap();
        assert_relative_eq!(c, 0.0);
    }

    #[test]
    fn scalar_lqr_cost_matches_riccati_value() {
        // For ẋ = u with Q = R = 1 the optimal cost from x0 is x0²
        // (continuous Riccati solution p = 1).
        let (sys, cost, region) = scalar_integrator();
        let h = 0.01;
        let w = TrackingCostMatrices::identity(1, 1);
        let eq = equilibrium_lqr(&sys, &w, h).unwrap();
        let gain = eq.clone();
        let law = move |x: &DVector<f64>| gain.control(x);
        let ctrl = EvalController::Feedback(&law);
        for &x0v in &[1.0_f64, -0.5, 1.7] {
            let x0 = DVector::from_row_slice(&[x0v]);
            let c = closed_loop_cost(&sys, &cost, &ctrl, &x0, h, &region, &eq, 1_000_000)
                .unwrap()
                .unwrap();
            let expected = x0v * x0v;
            assert!(
                (c - expected).abs() <= 0.02 * expected,
                "cost {c} vs ARE value {expected}"
            );
        }
    }

    #[test]
    fn tail_closure_matches_long_simulation() {
        // Truncating at the eps0 ball and adding h·x'Sx reproduces the
        // fully simulated cost.
        let (sys, cost, mut region) = scalar_integrator();
        let h = 0.01;
        let w = TrackingCostMatrices::identity(1, 1);
        let eq = equilibrium_lqr(&sys, &w, h).unwrap();
        let x0 = DVector::from_row_slice(&[1.0]);
        // Large eps0: mostly tail. Tiny eps0: mostly simulation.
        region.eps0 = 0.9;
        let gain = eq.clone();
        let law = move |x: &DVector<f64>| gain.control(x);
        let ctrl = EvalController::Feedback(&law);
        let coarse = closed_loop_cost(&sys, &cost, &ctrl, &x0, h, &region, &eq, 1_000_000)
            .unwrap()
            .unwrap();
        region.eps0 = 0.001;
        let fine = closed_loop_cost(&sys, &cost, &ctrl, &x0, h, &region, &eq, 1_000_000)
            .unwrap()
            .unwrap();
        assert!(
            (coarse - fine).abs() <= 0.03 * fine,
            "tail-closed {coarse} vs simulated {fine}"
        );
    }

    #[test]
    fn sontag_zero_gradient_gives_zero_control() {
        let (sys, _cost, region) = scalar_integrator();
        let ctrl =
            SontagController::new(sys, x_squared_candidate(), DMatrix::identity(1, 1), &region)
                .unwrap();
        let u = ctrl.control(&DVector::zeros(1));
        assert_relative_eq!(u[0], 0.0);
    }

    #[test]
    fn sontag_scalar_closed_form() {
        // ẋ = u, L = x²: a = 0, b = 4x², x'Qx = x² ⇒ u = −2x|x|.
        let (sys, _cost, region) = scalar_integrator();
        let ctrl =
            SontagController::new(sys, x_squared_candidate(), DMatrix::identity(1, 1), &region)
                .unwrap();
        for &xv in &[0.5_f64, -0.5, 1.3, -2.0] {
            let u = ctrl.control(&DVector::from_row_slice(&[xv]));
            assert_relative_eq!(u[0], -2.0 * xv * xv.abs(), epsilon = 1e-9);
        }
    }

    #[test]
    fn sontag_zero_input_column_contributes_nothing() {
        // Second input column of G is zero: that channel stays silent.
        let sys = ControlSystem::new(
            "one_dead_channel",
            1,
            2,
            |_x, u| DVector::from_row_slice(&[u[0]]),
            |_x, _u| DMatrix::zeros(1, 1),
            |_x, _u| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        );
        let region = Region::new(
            AxisBox::symmetric(1, 2.0),
            AxisBox::symmetric(1, 4.0),
            AxisBox::symmetric(2, 100.0),
            0.01,
        )
        .unwrap();
        let ctrl =
            SontagController::new(sys, x_squared_candidate(), DMatrix::identity(1, 1), &region)
                .unwrap();
        let u = ctrl.control(&DVector::from_row_slice(&[1.0]));
        assert_relative_eq!(u[1], 0.0);
        assert!(u[0] < 0.0);
    }

    #[test]
    fn sontag_decreases_lyapunov_along_closed_loop() {
        let b = crate::dynamics::benchmarks::pendulum();
        let basis = PolynomialBasis::new(2, 2, true, true);
        // Published baseline shape: 7.50θ² + 3.43θ̇² + 1.74θθ̇.
        let mut p = vec![0.0; basis.dim()];
        for (k, e) in basis.exponents().iter().enumerate() {
            match e.as_slice() {
                [2, 0] => p[k] = 7.50,
                [0, 2] => p[k] = 3.43,
                [1, 1] => p[k] = 1.74,
                _ => {}
            }
        }
        let cand = CandidateCLF::new(basis, p, -10.0, 10.0).unwrap();
        let ctrl =
            SontagController::new(b.system.clone(), cand, DMatrix::identity(2, 2), &b.region)
                .unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = DVector::from_iterator(
                2,
                (0..2).map(|_| rng.random_range(-3.0..3.0_f64)),
            );
            let grad = ctrl.candidate.gradient(&x);
            let (_f0, g) = ctrl.sys.affine_split(&x);
            let bval = (g.transpose() * &grad).norm_squared();
            if bval > 1e-8 {
                assert!(
                    ctrl.lyapunov_rate(&x) < 0.0,
                    "L must decrease at {x:?}"
                );
            }
        }
    }

    #[test]
    fn compare_same_controller_gives_identical_columns() {
        let (sys, cost, region) = scalar_integrator();
        let w = TrackingCostMatrices::identity(1, 1);
        let eq = equilibrium_lqr(&sys, &w, 0.01).unwrap();
        let gain = eq.clone();
        let law = move |x: &DVector<f64>| gain.control(x);
        let a = EvalController::Feedback(&law);
        let b = EvalController::Feedback(&law);
        let report = compare(
            &sys,
            &cost,
            &region,
            &eq,
            &a,
            &b,
            &AxisBox::symmetric(1, 1.5),
            25,
            9,
            0.01,
            1_000_000,
        )
        .unwrap();
        assert_eq!(report.failures_a, 0);
        for s in &report.samples {
            assert_eq!(s.cost_a, s.cost_b);
        }
        assert_eq!(report.mean_a, report.mean_b);

        let empty = compare(
            &sys,
            &cost,
            &region,
            &eq,
            &a,
            &b,
            &AxisBox::symmetric(1, 1.5),
            0,
            9,
            0.01,
            1_000,
        )
        .unwrap();
        assert_eq!(empty.n_samples, 0);
        assert!(empty.mean_a.is_none());
        assert!(empty.histogram.is_none());
    }

    #[test]
    fn cost_additivity_along_a_trace() {
        // Trapezoid composition: splitting a trace at any index preserves
        // the total.
        let states: Vec<DVector<f64>> = (0..10)
            .map(|k| DVector::from_row_slice(&[1.0 / (k + 1) as f64]))
            .collect();
        let inputs: Vec<DVector<f64>> = (0..10)
            .map(|k| DVector::from_row_slice(&[0.3 * k as f64]))
            .collect();
        let cost = CostSpec::identity(1, 1);
        let whole = trapezoid_cost(&cost, &states, &inputs, 0.1);
        for split in 1..9 {
            let first = trapezoid_cost(&cost, &states[..=split], &inputs[..=split], 0.1);
            let second = trapezoid_cost(&cost, &states[split..], &inputs[split..], 0.1);
            assert_relative_eq!(whole, first + second, epsilon = 1e-12);
        }
    }
}
