//! Time-varying LQR gain schedules along demonstrations and the
//! equilibrium LQR.
//!
//! The schedule comes from the backward Riccati recursion on the
//! discretized linearization `A_j = I + h·∂f/∂x`, `B_j = h·∂f/∂u` taken at
//! the demonstration samples, with terminal condition `S_T = Q_LQR`. The
//! tracking control between samples is the piecewise-linear interpolation
//! of the two neighbouring node laws. Demonstration sample `j` (0-based)
//! corresponds to time `j·h`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::demonstrator::DiscreteDemonstration;
use crate::dynamics::{is_symmetric_positive_definite, ControlSystem};
use crate::error::Error;
use crate::Result;

/// Positive-definite weights of the tracking LQR.
#[derive(Debug, Clone)]
pub struct TrackingCostMatrices {
    pub q_lqr: DMatrix<f64>,
    pub r_lqr: DMatrix<f64>,
}

impl TrackingCostMatrices {
    pub fn new(q_lqr: DMatrix<f64>, r_lqr: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric_positive_definite(&q_lqr) || !is_symmetric_positive_definite(&r_lqr) {
            return Err(Error::InvalidConfig(
                "tracking cost matrices must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { q_lqr, r_lqr })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            q_lqr: DMatrix::identity(n, n),
            r_lqr: DMatrix::identity(m, m),
        }
    }
}

/// Per-sample Riccati matrices and gains for tracking one demonstration.
///
/// `s_seq[j]` is the cost-to-go matrix at sample `j`; since the backward
/// recursion only depends on the future, the schedule of any suffix of the
/// demonstration is the corresponding tail of these sequences.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    h: f64,
    s_seq: Vec<DMatrix<f64>>,
    k_seq: Vec<DMatrix<f64>>,
    demo: Arc<DiscreteDemonstration>,
}

impl GainSchedule {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.s_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_seq.is_empty()
    }

    pub fn demo(&self) -> &Arc<DiscreteDemonstration> {
        &self.demo
    }

    pub fn riccati(&self, j: usize) -> &DMatrix<f64> {
        &self.s_seq[j]
    }

    pub fn gain(&self, j: usize) -> &DMatrix<f64> {
        &self.k_seq[j]
    }

    /// Node control law `ũ_j − K_j(x − x̃_j)`, evaluated exactly at grid
    /// node `j`. The closed-loop simulators use this form so that replays
    /// from a demonstration state are bit-exact.
    pub fn control_at_node(&self, x: &DVector<f64>, j: usize) -> DVector<f64> {
        &self.demo.inputs[j] - &self.k_seq[j] * (x - &self.demo.states[j])
    }

    /// Estimated tracking cost `(x − x̃_j)' S_j (x − x̃_j)` from node `j`.
    pub fn estimated_cost_from(&self, x: &DVector<f64>, j: usize) -> f64 {
        let dx = x - &self.demo.states[j];
        (dx.transpose() * &self.s_seq[j] * &dx)[(0, 0)]
    }
}

/// Builds the gain schedule for a demonstration: terminal condition
/// `S_{T} = Q_LQR`, then
/// `S_j = Q + A_j'(S_{j+1} − S_{j+1}B_j(R + B_j'S_{j+1}B_j)⁻¹B_j'S_{j+1})A_j`
/// and `K_j = (R + B_j'S_{j+1}B_j)⁻¹B_j'S_{j+1}A_j`. The terminal gain
/// reuses the terminal Riccati matrix so the interpolation is defined up
/// to the last sample.
pub fn build_schedule(
    sys: &ControlSystem,
    demo: Arc<DiscreteDemonstration>,
    w: &TrackingCostMatrices,
) -> Result<GainSchedule> {
    let t_len = demo.len();
    if t_len == 0 {
        return Err(Error::InvalidConfig("empty demonstration".into()));
    }
    let h = demo.h;
    let n = sys.state_dim();
    let eye = DMatrix::identity(n, n);

    let mut s_seq = vec![DMatrix::zeros(n, n); t_len];
    let mut k_seq = vec![DMatrix::zeros(sys.input_dim(), n); t_len];
    s_seq[t_len - 1] = w.q_lqr.clone();

    let gain_and_step = |s_next: &DMatrix<f64>,
                         x: &DVector<f64>,
                         u: &DVector<f64>|
     -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let a = &eye + sys.jac_x(x, u) * h;
        let b = sys.jac_u(x, u) * h;
        let m = &w.r_lqr + b.transpose() * s_next * &b;
        let eigs = m.clone().symmetric_eigenvalues();
        let (lo, hi) = (
            eigs.iter().cloned().fold(f64::INFINITY, f64::min),
            eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        if !(lo > 0.0) || hi / lo > 1e12 {
            return Err(Error::RiccatiSingular);
        }
        let chol = m.cholesky().ok_or(Error::RiccatiSingular)?;
        let k = chol.solve(&(b.transpose() * s_next * &a));
        let sb = s_next * &b;
        let inner = s_next - &sb * chol.solve(&sb.transpose());
        let mut s = &w.q_lqr + a.transpose() * inner * &a;
        s = (&s + s.transpose()) * 0.5;
        if s.clone().cholesky().is_none() {
            return Err(Error::RiccatiSingular);
        }
        Ok((s, k))
    };

    for j in (0..t_len - 1).rev() {
        let (s, k) = gain_and_step(&s_seq[j + 1], &demo.states[j], &demo.inputs[j])?;
        s_seq[j] = s;
        k_seq[j] = k;
    }
    // Terminal gain from S_T itself.
    let (_s, k_t) = gain_and_step(
        &s_seq[t_len - 1],
        &demo.states[t_len - 1],
        &demo.inputs[t_len - 1],
    )?;
    k_seq[t_len - 1] = k_t;

    Ok(GainSchedule {
        h,
        s_seq,
        k_seq,
        demo,
    })
}

/// Piecewise-linearly interpolated tracking control at continuous time
/// `t ∈ [0, (T−1)·h]`: the node laws at the two neighbouring samples,
/// blended linearly in `t`.
pub fn tracking_control(sched: &GainSchedule, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let max_t = (sched.len() - 1) as f64 * sched.h;
    if t < -1e-12 || t > max_t + 1e-9 * (1.0 + max_t) {
        return Err(Error::TimeOutOfRange { t, max: max_t });
    }
    let t = t.clamp(0.0, max_t);
    if sched.len() == 1 {
        return Ok(sched.control_at_node(x, 0));
    }
    let j = ((t / sched.h).floor() as usize).min(sched.len() - 2);
    let tau = t - j as f64 * sched.h;
    let u_j = sched.control_at_node(x, j);
    let u_next = sched.control_at_node(x, j + 1);
    Ok(&u_j + (u_next - &u_j) * (tau / sched.h))
}

/// Estimated tracking cost from the start of the demonstration.
pub fn estimated_tracking_cost(sched: &GainSchedule, x: &DVector<f64>) -> f64 {
    sched.estimated_cost_from(x, 0)
}

/// Static equilibrium LQR `u = −K_eq·x` from the discretized
/// linearization at the origin, with the same `A = I + hA_c`, `B = hB_c`
/// convention as tracking.
#[derive(Debug, Clone)]
pub struct EquilibriumLqr {
    gain: DMatrix<f64>,
    riccati: DMatrix<f64>,
    h: f64,
}

impl EquilibriumLqr {
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn riccati(&self) -> &DMatrix<f64> {
        &self.riccati
    }

    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.gain * x)
    }

    /// Value-function closure of the continuous-time cost integral from
    /// `x` under this regulator: `h · x'Sx`, since the converged discrete
    /// Riccati matrix prices the unweighted sample sum.
    pub fn tail_cost(&self, x: &DVector<f64>) -> f64 {
        self.h * (x.transpose() * &self.riccati * x)[(0, 0)]
    }
}

/// Iterates the discrete Riccati recursion with constant `(A, B)` until
/// `‖S_{k+1} − S_k‖∞ < 1e−10·(1 + ‖S‖∞)` (at most 1e5 iterations) and
/// checks that the closed loop `A − BK` has spectral radius below one.
/// The tolerance is scale-relative: converged Riccati matrices reach 1e8
/// on the stiffer benchmarks, where an absolute 1e−10 sits below f64
/// resolution.
pub fn equilibrium_lqr(
    sys: &ControlSystem,
    w: &TrackingCostMatrices,
    h: f64,
) -> Result<EquilibriumLqr> {
    let n = sys.state_dim();
    let x0 = DVector::zeros(n);
    let u0 = DVector::zeros(sys.input_dim());
    let a = DMatrix::identity(n, n) + sys.jac_x(&x0, &u0) * h;
    let b = sys.jac_u(&x0, &u0) * h;

    let mut s = w.q_lqr.clone();
    let mut converged = false;
    for _ in 0..100_000 {
        let m = &w.r_lqr + b.transpose() * &s * &b;
        let chol = m.cholesky().ok_or(Error::NotStabilizable)?;
        let sb = &s * &b;
        let inner = &s - &sb * chol.solve(&sb.transpose());
        let mut s_next = &w.q_lqr + a.transpose() * inner * &a;
        s_next = (&s_next + s_next.transpose()) * 0.5;
        if !s_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NotStabilizable);
        }
        let diff = (&s_next - &s).amax();
        s = s_next;
        if diff < 1e-10 * (1.0 + s.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable);
    }
    let m = &w.r_lqr + b.transpose() * &s * &b;
    let chol = m.cholesky().ok_or(Error::NotStabilizable)?;
    let gain = chol.solve(&(b.transpose() * &s * &a));
    let closed = &a - &b * &gain;
    let radius = closed
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::NotStabilizable);
    }
    Ok(EquilibriumLqr {
        gain,
        riccati: s,
        h,
    })
}
