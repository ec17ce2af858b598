//! Linearly parametrized CLF candidates, the inequality store fed by
//! demonstration compatibility and positivity counterexamples, and the
//! Chebyshev-center candidate selector.
//!
//! Candidates are polynomials `L_p(x) = Σ p_k·φ_k(x)` over a monomial
//! basis without constant term, so `L_p(0) = 0` by construction. Strict
//! inequalities are realized with a fixed margin on unit-normalized rows.

pub mod lp;

use std::collections::HashSet;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::demonstrator::DiscreteDemonstration;
use crate::dynamics::Region;
use crate::error::Error;
use crate::Result;

/// Margin realizing strict inequalities on unit-normalized rows.
pub const DELTA_MARGIN: f64 = 1e-6;
/// Radii at or below this are reported as an empty candidate set.
pub const RADIUS_TOL: f64 = 1e-8;

/// Monomial basis over ℝⁿ. The constant monomial is always excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialBasis {
    n: usize,
    degree: u32,
    even_powers_only: bool,
    include_linear: bool,
    exponents: Vec<Vec<u32>>,
}

impl PolynomialBasis {
    pub fn new(n: usize, degree: u32, even_powers_only: bool, include_linear: bool) -> Self {
        let mut exponents = Vec::new();
        for total in 1..=degree {
            if even_powers_only && total % 2 != 0 {
                continue;
            }
            if !include_linear && total == 1 {
                continue;
            }
            let mut exp = vec![0u32; n];
            collect_exponents(&mut exponents, &mut exp, 0, total);
        }
        Self {
            n,
            degree,
            even_powers_only,
            include_linear,
            exponents,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Evaluates all monomials at `x`.
    pub fn monomials(&self, x: &DVector<f64>) -> Vec<f64> {
        self.exponents
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .map(|(i, &p)| x[i].powi(p as i32))
                    .product()
            })
            .collect()
    }

    /// Coefficient row of the decrease condition between two consecutive
    /// samples: `φ(to) − φ(from)`.
    pub fn decrease_row(&self, from: &DVector<f64>, to: &DVector<f64>) -> Vec<f64> {
        let a = self.monomials(from);
        let b = self.monomials(to);
        b.iter().zip(&a).map(|(x, y)| x - y).collect()
    }
}

fn collect_exponents(out: &mut Vec<Vec<u32>>, exp: &mut Vec<u32>, idx: usize, remaining: u32) {
    if idx == exp.len() - 1 {
        exp[idx] = remaining;
        out.push(exp.clone());
        exp[idx] = 0;
        return;
    }
    // Highest power on the leading variable first.
    for p in (0..=remaining).rev() {
        exp[idx] = p;
        collect_exponents(out, exp, idx + 1, remaining - p);
        exp[idx] = 0;
    }
}

/// A candidate `L_p` with its parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCLF {
    pub basis: PolynomialBasis,
    pub p: Vec<f64>,
    pub p_min: f64,
    pub p_max: f64,
}

impl CandidateCLF {
    pub fn new(basis: PolynomialBasis, p: Vec<f64>, p_min: f64, p_max: f64) -> Result<Self> {
        if p.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: p.len(),
            });
        }
        if p.iter().any(|&v| v < p_min - 1e-12 || v > p_max + 1e-12) {
            return Err(Error::InvalidConfig(
                "candidate parameters outside the parameter box".into(),
            ));
        }
        Ok(Self {
            basis,
            p,
            p_min,
            p_max,
        })
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.basis
            .monomials(x)
            .iter()
            .zip(&self.p)
            .map(|(phi, p)| phi * p)
            .sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(self.basis.n);
        for (e, &pk) in self.basis.exponents.iter().zip(&self.p) {
            if pk == 0.0 {
                continue;
            }
            for i in 0..self.basis.n {
                if e[i] == 0 {
                    continue;
                }
                let mut term = pk * e[i] as f64;
                for (k, &pow) in e.iter().enumerate() {
                    let p = if k == i { pow - 1 } else { pow };
                    term *= x[k].powi(p as i32);
                }
                grad[i] += term;
            }
        }
        grad
    }

    /// Human-readable polynomial, one term per basis monomial.
    pub fn to_text(&self, var_names: Option<&[String]>) -> String {
        let mut out = String::new();
        for (k, (e, &c)) in self.basis.exponents.iter().zip(&self.p).enumerate() {
            if k > 0 {
                out.push_str(if c < 0.0 { " - " } else { " + " });
            } else if c < 0.0 {
                out.push('-');
            }
            out.push_str(&format!("{:.6}", c.abs()));
            for (i, &pow) in e.iter().enumerate() {
                if pow == 0 {
                    continue;
                }
                let name = var_names
                    .and_then(|v| v.get(i).cloned())
                    .unwrap_or_else(|| format!("x{}", i + 1));
                if pow == 1 {
                    out.push_str(&format!("*{name}"));
                } else {
                    out.push_str(&format!("*{name}^{pow}"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    Positivity,
    Decrease,
}

/// One half-space `a·p ≥ b` with `‖a‖ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub a: Vec<f64>,
    pub b: f64,
    pub tag: RowTag,
}

impl Inequality {
    pub fn slack(&self, p: &[f64]) -> f64 {
        self.a.iter().zip(p).map(|(a, p)| a * p).sum::<f64>() - self.b
    }
}

/// Accumulated linear constraints on the candidate parameters.
#[derive(Debug, Clone, Default)]
pub struct InequalityStore {
    rows: Vec<Inequality>,
    seen: HashSet<u64>,
    /// Set when an unsatisfiable zero row shows up (e.g. a positivity
    /// counterexample at which every basis monomial vanishes).
    contradiction: bool,
}

impl InequalityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Inequality] {
        &self.rows
    }

    pub fn has_contradiction(&self) -> bool {
        self.contradiction
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self
            .rows
            .iter()
            .filter(|r| r.tag == RowTag::Positivity)
            .count();
        (pos, self.rows.len() - pos)
    }

    /// Normalizes and inserts `a·p ≥ b·‖a‖`; duplicates (by coefficient
    /// hash) are dropped. Returns whether a new row was stored.
    pub fn push_raw(&mut self, a: &[f64], b_unit: f64, tag: RowTag) -> bool {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            if b_unit > 0.0 {
                self.contradiction = true;
            }
            return false;
        }
        let row = Inequality {
            a: a.iter().map(|v| v / norm).collect(),
            b: b_unit,
            tag,
        };
        let mut hasher = DefaultHasher::new();
        for v in &row.a {
            v.to_bits().hash(&mut hasher);
        }
        row.b.to_bits().hash(&mut hasher);
        (tag == RowTag::Positivity).hash(&mut hasher);
        let key = hasher.finish();
        if self.seen.insert(key) {
            self.rows.push(row);
            true
        } else {
            false
        }
    }

    pub fn restore_rows(&mut self, rows: Vec<Inequality>) {
        for r in rows {
            self.push_raw(&r.a.clone(), r.b, r.tag);
        }
    }

    /// Adds the positivity row `L(x_j) ≥ δ·‖row‖` for every sample and the
    /// decrease row `L(x_{j+1}) − L(x_j) ≤ −δ·‖row‖` for every consecutive
    /// pair of the demonstration. When `current` is given, rows it already
    /// satisfies with slack ≥ 2δ are skipped. Returns the number of rows
    /// actually stored.
    pub fn add_compatibility_constraints(
        &mut self,
        basis: &PolynomialBasis,
        demo: &DiscreteDemonstration,
        current: Option<&CandidateCLF>,
    ) -> usize {
        let mut added = 0;
        let keep = |row: &[f64], b: f64| -> bool {
            match current {
                None => true,
                Some(cand) => {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm < 1e-300 {
                        return true; // let push_raw classify it
                    }
                    let lhs: f64 =
                        row.iter().zip(&cand.p).map(|(a, p)| a * p).sum::<f64>() / norm;
                    lhs - b < 2.0 * DELTA_MARGIN
                }
            }
        };
        for x in &demo.states {
            let row = basis.monomials(x);
            if keep(&row, DELTA_MARGIN) && self.push_raw(&row, DELTA_MARGIN, RowTag::Positivity) {
                added += 1;
            }
        }
        for j in 0..demo.len().saturating_sub(1) {
            let mut row = basis.decrease_row(&demo.states[j], &demo.states[j + 1]);
            // Stored as −Δφ·p ≥ δ.
            for v in &mut row {
                *v = -*v;
            }
            if keep(&row, DELTA_MARGIN) && self.push_raw(&row, DELTA_MARGIN, RowTag::Decrease) {
                added += 1;
            }
        }
        added
    }

    /// Adds a positivity row for a counterexample point in `D \ H^ε0`.
    pub fn add_positivity_counterexample(
        &mut self,
        basis: &PolynomialBasis,
        x_c: &DVector<f64>,
        region: &Region,
    ) -> Result<()> {
        if !region.in_d(x_c) || region.in_h0(x_c) {
            return Err(Error::InvalidConfig(
                "positivity counterexample must lie in D outside the eps0 ball".into(),
            ));
        }
        let row = basis.monomials(x_c);
        self.push_raw(&row, DELTA_MARGIN, RowTag::Positivity);
        Ok(())
    }
}

/// Result of the Chebyshev-center solve.
#[derive(Debug, Clone)]
pub enum ChebyshevOutcome {
    /// Center of the largest inscribed ball and its radius.
    Center(CandidateCLF, f64),
    /// The feasible polyhedron is empty up to the radius tolerance.
    Infeasible,
}

/// Solves `max r` s.t. `a_i·p − b_i ≥ r` for every stored row and
/// `p ∈ [p_min, p_max]^d` (box rows included as inequalities with the same
/// radius term). Infeasible iff the optimal radius is ≤ 1e−8.
pub fn chebyshev_center(
    store: &InequalityStore,
    basis: &PolynomialBasis,
    p_min: f64,
    p_max: f64,
) -> Result<ChebyshevOutcome> {
    if store.has_contradiction() {
        return Ok(ChebyshevOutcome::Infeasible);
    }
    let d = basis.dim();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(store.len() + 2 * d);
    for r in store.rows() {
        let mut a = r.a.clone();
        a.push(-1.0);
        rows.push((a, r.b));
    }
    for j in 0..d {
        let mut lo = vec![0.0; d + 1];
        lo[j] = 1.0;
        lo[d] = -1.0;
        rows.push((lo, p_min));
        let mut hi = vec![0.0; d + 1];
        hi[j] = -1.0;
        hi[d] = -1.0;
        rows.push((hi, -p_max));
    }
    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    let sol = lp::solve_max(&c, &rows)?;
    let radius = sol.value;
    if radius <= RADIUS_TOL {
        return Ok(ChebyshevOutcome::Infeasible);
    }
    let mut p = sol.x[..d].to_vec();
    for v in &mut p {
        *v = v.clamp(p_min, p_max);
    }
    let candidate = CandidateCLF::new(basis.clone(), p, p_min, p_max)?;
    debug_assert!(
        store
            .rows()
            .iter()
            .all(|r| r.slack(&candidate.p) >= radius * (1.0 - 1e-9) - 1e-12),
        "relearn soundness violated"
    );
    Ok(ChebyshevOutcome::Center(candidate, radius))
}

/// Discrete compatibility with margin zero: positivity at every sample and
/// a strict decrease across every consecutive pair.
pub fn is_discretely_compatible(candidate: &CandidateCLF, demo: &DiscreteDemonstration) -> bool {
    let mut prev: Option<f64> = None;
    for x in &demo.states {
        let v = candidate.evaluate(x);
        if v <= 0.0 {
            return false;
        }
        if let Some(p) = prev {
            if v - p >= 0.0 {
                return false;
            }
        }
        prev = Some(v);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn demo_from_states(states: &[Vec<f64>]) -> DiscreteDemonstration {
        DiscreteDemonstration {
            h: 0.05,
            states: states
                .iter()
                .map(|s| DVector::from_row_slice(s))
                .collect(),
            inputs: vec![DVector::zeros(1); states.len()],
            origin_index: None,
        }
    }

    #[test]
    fn basis_dimensions_match_published_parameter_counts() {
        assert_eq!(PolynomialBasis::new(2, 4, false, true).dim(), 14);
        assert_eq!(PolynomialBasis::new(4, 2, true, true).dim(), 10);
        assert_eq!(PolynomialBasis::new(4, 4, true, true).dim(), 45);
        assert_eq!(PolynomialBasis::new(6, 2, true, true).dim(), 21);
        assert_eq!(PolynomialBasis::new(12, 2, true, true).dim(), 78);
    }

    #[test]
    fn no_duplicate_or_constant_monomials() {
        let basis = PolynomialBasis::new(3, 4, false, true);
        let mut seen = HashSet::new();
        for e in basis.exponents() {
            assert!(e.iter().sum::<u32>() >= 1);
            assert!(seen.insert(e.clone()));
        }
    }

    #[test]
    fn published_pendulum_candidate_evaluates_correctly() {
        // All 14 monomials equal one at (1, 1), so L(1,1) is the
        // coefficient sum: 28.968.
        let basis = PolynomialBasis::new(2, 4, false, true);
        let coeffs: Vec<(Vec<u32>, f64)> = vec![
            (vec![1, 0], -0.019),
            (vec![2, 0], 8.330),
            (vec![3, 0], -4.689),
            (vec![4, 0], 7.490),
            (vec![0, 1], 0.037),
            (vec![1, 1], 4.326),
            (vec![2, 1], -0.000),
            (vec![3, 1], 2.605),
            (vec![0, 2], 1.888),
            (vec![1, 2], 0.000),
            (vec![2, 2], 4.492),
            (vec![0, 3], -0.721),
            (vec![1, 3], 3.539),
            (vec![0, 4], 1.690),
        ];
        let mut p = vec![0.0; basis.dim()];
        for (e, c) in coeffs {
            let k = basis
                .exponents()
                .iter()
                .position(|x| *x == e)
                .expect("monomial in basis");
            p[k] = c;
        }
        let cand = CandidateCLF::new(basis, p, -10.0, 10.0).unwrap();
        let x = DVector::from_row_slice(&[1.0, 1.0]);
        assert_relative_eq!(cand.evaluate(&x), 28.968, epsilon = 1e-12);
        assert_relative_eq!(cand.evaluate(&DVector::zeros(2)), 0.0);
    }

    #[test]
    fn gradient_of_theta_squared() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let k = basis
            .exponents()
            .iter()
            .position(|e| *e == vec![2, 0])
            .unwrap();
        let mut p = vec![0.0; basis.dim()];
        p[k] = 1.0;
        let cand = CandidateCLF::new(basis, p, -10.0, 10.0).unwrap();
        let g = cand.gradient(&DVector::from_row_slice(&[2.0, 0.0]));
        assert_relative_eq!(g[0], 4.0);
        assert_relative_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let basis = PolynomialBasis::new(3, 4, false, true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cand = CandidateCLF::new(basis, p, -10.0, 10.0).unwrap();
        for _ in 0..50 {
            let x = DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-2.0..2.0_f64)));
            let g = cand.gradient(&x);
            for i in 0..3 {
                let step = 1e-6 * (1.0 + x[i].abs());
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += step;
                lo[i] -= step;
                let fd = (cand.evaluate(&hi) - cand.evaluate(&lo)) / (2.0 * step);
                let denom = 1.0_f64.max(fd.abs());
                assert!(
                    (g[i] - fd).abs() / denom <= 1e-6,
                    "grad mismatch: {} vs {}",
                    g[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn decrease_row_arithmetic() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let from = DVector::from_row_slice(&[1.0, 0.0]);
        let to = DVector::from_row_slice(&[0.9, -0.1]);
        let row = basis.decrease_row(&from, &to);
        assert_relative_eq!(row[0], -0.19, epsilon = 1e-12);
        assert_relative_eq!(row[1], -0.09, epsilon = 1e-12);
        assert_relative_eq!(row[2], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn compatibility_row_counts() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let mut store = InequalityStore::new();
        let single = demo_from_states(&[vec![1.0, 0.5]]);
        assert_eq!(store.add_compatibility_constraints(&basis, &single, None), 1);
        assert_eq!(store.counts(), (1, 0));

        let mut store = InequalityStore::new();
        let five = demo_from_states(&[
            vec![1.0, 0.0],
            vec![0.8, -0.1],
            vec![0.6, -0.17],
            vec![0.4, -0.11],
            vec![0.2, -0.03],
        ]);
        assert_eq!(store.add_compatibility_constraints(&basis, &five, None), 9);
        assert_eq!(store.counts(), (5, 4));
    }

    #[test]
    fn thinning_skips_rows_with_slack() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        // Candidate L = x² + y² easily satisfies rows of a shrinking demo.
        let mut p = vec![0.0; basis.dim()];
        for (k, e) in basis.exponents().iter().enumerate() {
            if *e == vec![2, 0] || *e == vec![0, 2] {
                p[k] = 1.0;
            }
        }
        let cand = CandidateCLF::new(basis.clone(), p, -10.0, 10.0).unwrap();
        let mut store = InequalityStore::new();
        let demo = demo_from_states(&[vec![1.0, 0.0], vec![0.5, 0.0], vec![0.25, 0.0]]);
        let added = store.add_compatibility_constraints(&basis, &demo, Some(&cand));
        assert_eq!(added, 0);
    }

    #[test]
    fn chebyshev_box_only() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let store = InequalityStore::new();
        match chebyshev_center(&store, &basis, -1.0, 1.0).unwrap() {
            ChebyshevOutcome::Center(c, r) => {
                assert_relative_eq!(r, 1.0, epsilon = 1e-8);
                for v in &c.p {
                    assert!(v.abs() <= 1e-8);
                }
            }
            ChebyshevOutcome::Infeasible => panic!("box-only problem is feasible"),
        }
    }

    #[test]
    fn chebyshev_single_row_one_dim() {
        // One parameter (basis {x²}), raw row p ≥ 0 on P = [−1, 1]:
        // center 0.5, radius 0.5.
        let basis = PolynomialBasis::new(1, 2, true, true);
        assert_eq!(basis.dim(), 1);
        let mut store = InequalityStore::new();
        store.push_raw(&[1.0], 0.0, RowTag::Positivity);
        match chebyshev_center(&store, &basis, -1.0, 1.0).unwrap() {
            ChebyshevOutcome::Center(c, r) => {
                assert_relative_eq!(c.p[0], 0.5, epsilon = 1e-8);
                assert_relative_eq!(r, 0.5, epsilon = 1e-8);
            }
            ChebyshevOutcome::Infeasible => panic!("feasible"),
        }
    }

    #[test]
    fn chebyshev_contradictory_rows() {
        let basis = PolynomialBasis::new(1, 2, true, true);
        let mut store = InequalityStore::new();
        store.push_raw(&[1.0], 0.6, RowTag::Positivity);
        store.push_raw(&[-1.0], 0.6, RowTag::Positivity);
        assert!(matches!(
            chebyshev_center(&store, &basis, -1.0, 1.0).unwrap(),
            ChebyshevOutcome::Infeasible
        ));
    }

    #[test]
    fn adding_rows_never_increases_radius() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let mut store = InequalityStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut last_r = f64::INFINITY;
        for _ in 0..20 {
            let a: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            store.push_raw(&a, -0.5, RowTag::Positivity);
            match chebyshev_center(&store, &basis, -1.0, 1.0).unwrap() {
                ChebyshevOutcome::Center(_, r) => {
                    assert!(r <= last_r + 1e-9, "radius grew: {r} > {last_r}");
                    last_r = r;
                }
                ChebyshevOutcome::Infeasible => break,
            }
        }
    }

    #[test]
    fn duplicate_counterexamples_are_deduplicated() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let region = Region::new(
            crate::dynamics::AxisBox::symmetric(2, 2.0),
            crate::dynamics::AxisBox::symmetric(2, 4.0),
            crate::dynamics::AxisBox::symmetric(1, 10.0),
            0.1,
        )
        .unwrap();
        let mut store = InequalityStore::new();
        let x = DVector::from_row_slice(&[1.0, 1.0]);
        store.add_positivity_counterexample(&basis, &x, &region).unwrap();
        store.add_positivity_counterexample(&basis, &x, &region).unwrap();
        assert_eq!(store.len(), 1);

        let inside = DVector::from_row_slice(&[0.05, 0.0]);
        assert!(store
            .add_positivity_counterexample(&basis, &inside, &region)
            .is_err());
    }

    #[test]
    fn incompatible_with_outward_spiral() {
        // ẋ = x with u = 0: norms grow, so L = x'x cannot decrease.
        let basis = PolynomialBasis::new(2, 2, true, true);
        let mut p = vec![0.0; basis.dim()];
        for (k, e) in basis.exponents().iter().enumerate() {
            if *e == vec![2, 0] || *e == vec![0, 2] {
                p[k] = 1.0;
            }
        }
        let cand = CandidateCLF::new(basis, p, -10.0, 10.0).unwrap();
        let growing = demo_from_states(&[vec![0.5, 0.0], vec![0.55, 0.1], vec![0.62, 0.2]]);
        assert!(!is_discretely_compatible(&cand, &growing));
        let shrinking = demo_from_states(&[vec![0.5, 0.0], vec![0.4, 0.0], vec![0.3, 0.0]]);
        assert!(is_discretely_compatible(&cand, &shrinking));
        // Length-1 demonstrations reduce to positivity.
        let single = demo_from_states(&[vec![0.5, 0.0]]);
        assert!(is_discretely_compatible(&cand, &single));
    }

    #[test]
    fn relearn_satisfies_all_rows_with_radius_slack() {
        let basis = PolynomialBasis::new(2, 2, true, true);
        let mut store = InequalityStore::new();
        let demo = demo_from_states(&[
            vec![1.0, 0.0],
            vec![0.8, -0.1],
            vec![0.6, -0.1],
            vec![0.4, -0.05],
        ]);
        store.add_compatibility_constraints(&basis, &demo, None);
        match chebyshev_center(&store, &basis, -10.0, 10.0).unwrap() {
            ChebyshevOutcome::Center(cand, r) => {
                for row in store.rows() {
                    assert!(row.slack(&cand.p) >= r * (1.0 - 1e-9) - 1e-12);
                }
                assert!(is_discretely_compatible(&cand, &demo));
            }
            ChebyshevOutcome::Infeasible => panic!("feasible fixture"),
        }
    }
}
