//! The six benchmark systems, each with its published parameter values,
//! quadratic cost, region of interest and default algorithm settings.
//!
//! Gravity-offset models (ducted fan, quadcopter) are shifted by their trim
//! input so the origin is an equilibrium of the stored vector field; the
//! trim is kept in `ControlSystem::u_eq`.

use nalgebra::{DMatrix, DVector};

use super::{AxisBox, ControlSystem, CostSpec, Region};
use crate::error::Error;
use crate::Result;

/// A benchmark bundle: the system, its cost, its region and the default
/// synthesis parameters of the corresponding experiment.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub system: ControlSystem,
    pub cost: CostSpec,
    pub region: Region,
    /// Demonstration step length (s).
    pub h: f64,
    /// Demonstration horizon (s).
    pub t_horizon: f64,
    /// Minimum time between trajectory switches (s).
    pub t_min: f64,
    /// Sufficient-decrease factor.
    pub gamma: f64,
    /// Polynomial candidate degree bound.
    pub basis_degree: u32,
    /// Keep only monomials of even total degree.
    pub even_only: bool,
    /// Candidate parameter box `[-p_bound, p_bound]^d`.
    pub p_bound: f64,
    /// LQR tracking cost (defaults to the running cost matrices).
    pub q_lqr: DMatrix<f64>,
    pub r_lqr: DMatrix<f64>,
    /// Acceptance threshold used in the original experiment.
    pub accept_n: u64,
}

pub const BENCHMARK_NAMES: [&str; 6] = [
    "pendulum",
    "cart_pole",
    "rtac",
    "acrobot",
    "ducted_fan",
    "quadcopter",
];

/// Looks up a benchmark by name.
pub fn benchmark(name: &str) -> Result<Benchmark> {
    match name {
        "pendulum" => Ok(pendulum()),
        "cart_pole" => Ok(cart_pole()),
        "rtac" => Ok(rtac()),
        "acrobot" => Ok(acrobot()),
        "ducted_fan" => Ok(ducted_fan()),
        "quadcopter" => Ok(quadcopter()),
        other => Err(Error::UnknownBenchmark(other.to_string())),
    }
}

/// Wide input box used where the experiments put no explicit bound on the
/// actuators; it keeps S bounded without ever becoming active.
fn wide_input_box(m: usize) -> AxisBox {
    AxisBox::symmetric(m, 1e3)
}

/// Inverted pendulum: θ̈ = (g/l)·sinθ − b·θ̇/(ml²) + u/(ml²),
/// m = 1, l = 0.5, g = 9.81, b = 0.1. State (θ, θ̇), θ = 0 upright.
pub fn pendulum() -> Benchmark {
    let a = 9.81 / 0.5; // g/l
    let c = 0.1 / 0.25; // b/(m l²)
    let k = 1.0 / 0.25; // 1/(m l²)
    let system = ControlSystem::new(
        "pendulum",
        2,
        1,
        move |x, u| DVector::from_row_slice(&[x[1], a * x[0].sin() - c * x[1] + k * u[0]]),
        move |x, _u| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, a * x[0].cos(), -c]),
        move |_x, _u| DMatrix::from_row_slice(2, 1, &[0.0, k]),
    );
    let d = AxisBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]);
    // S defaults to twice D; the angular velocity is reduced to [-8, 8].
    let s_state = AxisBox::new(vec![-8.0, -8.0], vec![8.0, 8.0]);
    let region = Region::new(d, s_state, wide_input_box(1), 0.05).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(2, 1),
        region,
        h: 0.05,
        t_horizon: 10.0,
        t_min: 0.5,
        gamma: 0.01,
        basis_degree: 4,
        even_only: false,
        p_bound: 10.0,
        q_lqr: DMatrix::identity(2, 2),
        r_lqr: DMatrix::identity(1, 1),
        accept_n: 20_000,
    }
}

/// Inverted pendulum on a cart, m = 0.21, M = 0.815, l = 0.305.
/// State (x, θ, ẋ, θ̇), input u = horizontal force on the cart.
pub fn cart_pole() -> Benchmark {
    let m = 0.21_f64;
    let big_m = 0.815_f64;
    let l = 0.305_f64;
    let g = 9.81_f64;
    let f = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (theta, om) = (x[1], x[3]);
        let (s, c) = theta.sin_cos();
        let den1 = 4.0 * (big_m + m) - 3.0 * m * c * c;
        let num1 = 4.0 * u[0] + 4.0 * m * l * om * om * s - 3.0 * m * g * s * c;
        let den2 = l * (4.0 / 3.0 * (big_m + m) - m * c * c);
        let num2 = (big_m + m) * g * s - u[0] * c - m * l * om * om * s * c;
        DVector::from_row_slice(&[x[2], om, num1 / den1, num2 / den2])
    };
    let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (theta, om) = (x[1], x[3]);
        let (s, c) = theta.sin_cos();
        let cos2 = c * c - s * s;
        let den1 = 4.0 * (big_m + m) - 3.0 * m * c * c;
        let num1 = 4.0 * u[0] + 4.0 * m * l * om * om * s - 3.0 * m * g * s * c;
        let dnum1 = 4.0 * m * l * om * om * c - 3.0 * m * g * cos2;
        let dden1 = 6.0 * m * c * s;
        let den2 = l * (4.0 / 3.0 * (big_m + m) - m * c * c);
        let num2 = (big_m + m) * g * s - u[0] * c - m * l * om * om * s * c;
        let dnum2 = (big_m + m) * g * c + u[0] * s - m * l * om * om * cos2;
        let dden2 = l * 2.0 * m * c * s;
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j[(2, 1)] = (dnum1 * den1 - num1 * dden1) / (den1 * den1);
        j[(2, 3)] = 8.0 * m * l * om * s / den1;
        j[(3, 1)] = (dnum2 * den2 - num2 * dden2) / (den2 * den2);
        j[(3, 3)] = -2.0 * m * l * om * s * c / den2;
        j
    };
    let jac_u = move |x: &DVector<f64>, _u: &DVector<f64>| {
        let c = x[1].cos();
        let den1 = 4.0 * (big_m + m) - 3.0 * m * c * c;
        let den2 = l * (4.0 / 3.0 * (big_m + m) - m * c * c);
        DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 4.0 / den1, -c / den2])
    };
    let system = ControlSystem::new("cart_pole", 4, 1, f, jac_x, jac_u);
    let d = AxisBox::new(vec![-2.5, -2.0, -2.5, -2.5], vec![2.5, 2.0, 2.5, 2.5]);
    // Cart position is constrained to [-6, 6]; other states get twice D.
    let s_state = AxisBox::new(vec![-6.0, -4.0, -5.0, -5.0], vec![6.0, 4.0, 5.0, 5.0]);
    let region = Region::new(d, s_state, wide_input_box(1), 0.1).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(4, 1),
        region,
        h: 0.05,
        t_horizon: 10.0,
        t_min: 0.5,
        gamma: 0.01,
        basis_degree: 2,
        even_only: true,
        p_bound: 10.0,
        q_lqr: DMatrix::identity(4, 4),
        r_lqr: DMatrix::identity(1, 1),
        accept_n: 50_000,
    }
}

/// Rotational/translational actuator with coupling 0.2.
pub fn rtac() -> Benchmark {
    let eps = 0.2_f64;
    let f = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (s, c) = x[2].sin_cos();
        let den = 1.0 - eps * eps * c * c;
        let core = x[0] - eps * x[3] * x[3] * s;
        DVector::from_row_slice(&[
            x[1],
            (-core - eps * c * u[0]) / den,
            x[3],
            (eps * c * core + eps * c * u[0]) / den,
        ])
    };
    let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (s, c) = x[2].sin_cos();
        let den = 1.0 - eps * eps * c * c;
        let dden = 2.0 * eps * eps * c * s;
        let core = x[0] - eps * x[3] * x[3] * s;
        let dcore_d3 = -eps * x[3] * x[3] * c;
        let dcore_d4 = -2.0 * eps * x[3] * s;
        let num2 = -core - eps * c * u[0];
        let num4 = eps * c * (core + u[0]);
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -1.0 / den;
        j[(1, 2)] = ((-dcore_d3 + eps * s * u[0]) * den - num2 * dden) / (den * den);
        j[(1, 3)] = -dcore_d4 / den;
        j[(2, 3)] = 1.0;
        j[(3, 0)] = eps * c / den;
        j[(3, 2)] =
            ((-eps * s * (core + u[0]) + eps * c * dcore_d3) * den - num4 * dden) / (den * den);
        j[(3, 3)] = eps * c * dcore_d4 / den;
        j
    };
    let jac_u = move |x: &DVector<f64>, _u: &DVector<f64>| {
        let c = x[2].cos();
        let den = 1.0 - eps * eps * c * c;
        DMatrix::from_row_slice(4, 1, &[0.0, -eps * c / den, 0.0, eps * c / den])
    };
    let system = ControlSystem::new("rtac", 4, 1, f, jac_x, jac_u);
    let d = AxisBox::symmetric(4, 5.0);
    let s_state = AxisBox::symmetric(4, 10.0);
    let region = Region::new(d, s_state, wide_input_box(1), 0.05).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(4, 1),
        region,
        h: 0.05,
        t_horizon: 150.0,
        t_min: 4.0,
        gamma: 0.01,
        basis_degree: 4,
        even_only: true,
        p_bound: 10.0,
        q_lqr: DMatrix::identity(4, 4),
        r_lqr: DMatrix::identity(1, 1),
        accept_n: 100_000,
    }
}

/// Inverted double pendulum (acrobot), torque at the second joint.
/// m1 = 7, m2 = 8, l1 = 1/2, l2 = 3/4; state (θ1, θ2, θ̇1, θ̇2).
pub fn acrobot() -> Benchmark {
    let m1 = 7.0_f64;
    let m2 = 8.0_f64;
    let l1 = 0.5_f64;
    let l2 = 0.75_f64;
    let g = 9.81_f64;
    // Point masses at the rod ends: M11 = (m1+m2)l1² + m2l2² + 2c·cosθ2,
    // G1 driven by g·l1·(m1+m2). This is the model that reproduces the
    // published equilibrium gain.
    let a = (m1 + m2) * l1 * l1;
    let b = m2 * l2 * l2;
    let c = m2 * l1 * l2;
    let d = g * l1 * (m1 + m2);
    let e = g * m2 * l2;

    // Solves M(θ2)·acc = w for the 2x2 mass matrix.
    let solve_mass = move |theta2: f64, w: (f64, f64)| -> (f64, f64) {
        let c2 = theta2.cos();
        let m11 = a + b + 2.0 * c * c2;
        let m12 = b + c * c2;
        let m22 = b;
        let det = m11 * m22 - m12 * m12;
        debug_assert!(det.abs() >= 1e-12, "acrobot mass matrix near singular");
        ((m22 * w.0 - m12 * w.1) / det, (m11 * w.1 - m12 * w.0) / det)
    };
    // Coriolis term C(θ, θ̇)·θ̇ and gravity term G(θ).
    let bias = move |x: &DVector<f64>| -> (f64, f64, f64, f64) {
        let s2 = x[1].sin();
        let (w1, w2) = (x[2], x[3]);
        let h1 = -c * s2 * (2.0 * w1 * w2 + w2 * w2);
        let h2 = c * s2 * w1 * w1;
        let g1 = -(d * x[0].sin() + e * (x[0] + x[1]).sin());
        let g2 = -(e * (x[0] + x[1]).sin());
        (h1, h2, g1, g2)
    };
    let f = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (h1, h2, g1, g2) = bias(x);
        let (acc1, acc2) = solve_mass(x[1], (-h1 - g1, u[0] - h2 - g2));
        DVector::from_row_slice(&[x[2], x[3], acc1, acc2])
    };
    let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (s2, c2) = x[1].sin_cos();
        let (w1, w2) = (x[2], x[3]);
        let (h1, h2, g1, g2) = bias(x);
        let acc = solve_mass(x[1], (-h1 - g1, u[0] - h2 - g2));
        // ∂acc/∂q = M⁻¹(∂w/∂q − (∂M/∂q)·acc); M depends only on θ2.
        let c1 = x[0].cos();
        let c12 = (x[0] + x[1]).cos();
        let dg1_d1 = -(d * c1 + e * c12);
        let dg2_d1 = -(e * c12);
        let dg_d2 = -(e * c12); // both components share ∂/∂θ2
        let dh1_d2 = -c * c2 * (2.0 * w1 * w2 + w2 * w2);
        let dh2_d2 = c * c2 * w1 * w1;
        let dm_acc = (
            -2.0 * c * s2 * acc.0 - c * s2 * acc.1,
            -c * s2 * acc.0,
        );
        let col1 = solve_mass(x[1], (-dg1_d1, -dg2_d1));
        let col2 = solve_mass(
            x[1],
            (-dh1_d2 - dg_d2 - dm_acc.0, -dh2_d2 - dg_d2 - dm_acc.1),
        );
        let col3 = solve_mass(x[1], (2.0 * c * s2 * w2, -2.0 * c * s2 * w1));
        let col4 = solve_mass(x[1], (c * s2 * (2.0 * w1 + 2.0 * w2), 0.0));
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j[(2, 0)] = col1.0;
        j[(3, 0)] = col1.1;
        j[(2, 1)] = col2.0;
        j[(3, 1)] = col2.1;
        j[(2, 2)] = col3.0;
        j[(3, 2)] = col3.1;
        j[(2, 3)] = col4.0;
        j[(3, 3)] = col4.1;
        j
    };
    let jac_u = move |x: &DVector<f64>, _u: &DVector<f64>| {
        let col = solve_mass(x[1], (0.0, 1.0));
        DMatrix::from_row_slice(4, 1, &[0.0, 0.0, col.0, col.1])
    };
    let system = ControlSystem::new("acrobot", 4, 1, f, jac_x, jac_u);
    let d_box = AxisBox::symmetric(4, 0.15);
    // Stabilizing trajectories leave D considerably; keep S roomy.
    let s_state = AxisBox::symmetric(4, 1.5);
    let region = Region::new(d_box, s_state, wide_input_box(1), 1e-5).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(4, 1),
        region,
        h: 0.01,
        t_horizon: 8.0,
        t_min: 1.5,
        gamma: 0.01,
        basis_degree: 4,
        even_only: true,
        p_bound: 100.0,
        q_lqr: DMatrix::identity(4, 4) * 1000.0,
        // The input weight is not stated for this example; 100·I is the
        // value that reproduces the published equilibrium gain.
        r_lqr: DMatrix::identity(1, 1) * 100.0,
        accept_n: 200_000,
    }
}

/// Planar ducted fan in hover mode, m = 11.2, g = 0.28, J = 0.0462,
/// r = 0.156, d_c = 0.1. State (x, y, θ, ẋ, ẏ, θ̇), raw inputs (u1, u2)
/// with trim (0, m·g).
pub fn ducted_fan() -> Benchmark {
    let m = 11.2_f64;
    let g = 0.28_f64;
    let j_in = 0.0462_f64;
    let r_arm = 0.156_f64;
    let dc = 0.1_f64;
    let trim = m * g;
    let f = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (s, c) = x[2].sin_cos();
        let u1 = u[0];
        let u2 = trim + u[1];
        DVector::from_row_slice(&[
            x[3],
            x[4],
            x[5],
            (-dc * x[3] + u1 * c - u2 * s) / m,
            (-dc * x[4] + u2 * c + u1 * s - m * g) / m,
            r_arm * u1 / j_in,
        ])
    };
    let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (s, c) = x[2].sin_cos();
        let u1 = u[0];
        let u2 = trim + u[1];
        let mut j = DMatrix::zeros(6, 6);
        j[(0, 3)] = 1.0;
        j[(1, 4)] = 1.0;
        j[(2, 5)] = 1.0;
        j[(3, 2)] = (-u1 * s - u2 * c) / m;
        j[(3, 3)] = -dc / m;
        j[(4, 2)] = (-u2 * s + u1 * c) / m;
        j[(4, 4)] = -dc / m;
        j
    };
    let jac_u = move |x: &DVector<f64>, _u: &DVector<f64>| {
        let (s, c) = x[2].sin_cos();
        let mut j = DMatrix::zeros(6, 2);
        j[(3, 0)] = c / m;
        j[(3, 1)] = -s / m;
        j[(4, 0)] = s / m;
        j[(4, 1)] = c / m;
        j[(5, 0)] = r_arm / j_in;
        j
    };
    let system = ControlSystem::new("ducted_fan", 6, 2, f, jac_x, jac_u)
        .with_u_eq(DVector::from_row_slice(&[0.0, trim]));
    let d = AxisBox::symmetric(6, 1.0);
    let s_state = AxisBox::symmetric(6, 2.0);
    let region = Region::new(d, s_state, wide_input_box(2), 0.01).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(6, 2),
        region,
        h: 0.05,
        t_horizon: 40.0,
        t_min: 1.5,
        gamma: 0.01,
        basis_degree: 2,
        even_only: true,
        p_bound: 100.0,
        q_lqr: DMatrix::identity(6, 6),
        r_lqr: DMatrix::identity(2, 2),
        accept_n: 200_000,
    }
}

/// Quadcopter with thrust u1 and direct angular-acceleration inputs.
/// State (x, y, z, ψ, θ, φ, ẋ, ẏ, ż, ψ̇, θ̇, φ̇); all accelerations carry
/// the 1/m factor as printed in the source model. Mass and gravity are
/// not stated there; defaults m = 1, g = 9.81.
pub fn quadcopter() -> Benchmark {
    quadcopter_with(1.0, 9.81)
}

pub fn quadcopter_with(m: f64, g: f64) -> Benchmark {
    let trim = m * g;
    // Thrust direction components and their angle partials.
    // ax = sinφ sinψ + cosφ cosψ sinθ
    // ay = cosφ sinθ sinψ − cosψ sinφ
    // az = cosθ cosφ
    let f = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (psi, theta, phi) = (x[3], x[4], x[5]);
        let (sps, cps) = psi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sph, cph) = phi.sin_cos();
        let u1 = trim + u[0];
        let ax = sph * sps + cph * cps * sth;
        let ay = cph * sth * sps - cps * sph;
        let az = cth * cph;
        DVector::from_row_slice(&[
            x[6],
            x[7],
            x[8],
            x[9],
            x[10],
            x[11],
            u1 * ax / m,
            u1 * ay / m,
            (u1 * az - m * g) / m,
            u[1] / m,
            u[2] / m,
            u[3] / m,
        ])
    };
    let jac_x = move |x: &DVector<f64>, u: &DVector<f64>| {
        let (psi, theta, phi) = (x[3], x[4], x[5]);
        let (sps, cps) = psi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sph, cph) = phi.sin_cos();
        let u1 = trim + u[0];
        let mut j = DMatrix::zeros(12, 12);
        for i in 0..6 {
            j[(i, i + 6)] = 1.0;
        }
        // ∂ax
        j[(6, 3)] = u1 * (sph * cps - cph * sps * sth) / m;
        j[(6, 4)] = u1 * (cph * cps * cth) / m;
        j[(6, 5)] = u1 * (cph * sps - sph * cps * sth) / m;
        // ∂ay
        j[(7, 3)] = u1 * (cph * sth * cps + sps * sph) / m;
        j[(7, 4)] = u1 * (cph * cth * sps) / m;
        j[(7, 5)] = u1 * (-sph * sth * sps - cps * cph) / m;
        // ∂az
        j[(8, 4)] = u1 * (-sth * cph) / m;
        j[(8, 5)] = u1 * (-cth * sph) / m;
        j
    };
    let jac_u = move |x: &DVector<f64>, _u: &DVector<f64>| {
        let (psi, theta, phi) = (x[3], x[4], x[5]);
        let (sps, cps) = psi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sph, cph) = phi.sin_cos();
        let mut j = DMatrix::zeros(12, 4);
        j[(6, 0)] = (sph * sps + cph * cps * sth) / m;
        j[(7, 0)] = (cph * sth * sps - cps * sph) / m;
        j[(8, 0)] = cth * cph / m;
        j[(9, 1)] = 1.0 / m;
        j[(10, 2)] = 1.0 / m;
        j[(11, 3)] = 1.0 / m;
        j
    };
    let system = ControlSystem::new("quadcopter", 12, 4, f, jac_x, jac_u)
        .with_u_eq(DVector::from_row_slice(&[trim, 0.0, 0.0, 0.0]));
    let d = AxisBox::symmetric(12, 1.0);
    let s_state = AxisBox::symmetric(12, 10.0);
    let region = Region::new(d, s_state, wide_input_box(4), 0.01).expect("valid region");
    Benchmark {
        system,
        cost: CostSpec::identity(12, 4),
        region,
        h: 0.05,
        t_horizon: 10.0,
        t_min: 1.0,
        gamma: 0.01,
        basis_degree: 2,
        even_only: true,
        p_bound: 100.0,
        q_lqr: DMatrix::identity(12, 12),
        r_lqr: DMatrix::identity(4, 4),
        accept_n: 1_000_000,
    }
}
