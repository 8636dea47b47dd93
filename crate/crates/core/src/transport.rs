//! Wasserstein distances between discrete measures on the line.
//!
//! In one dimension the monotone (quantile) coupling is optimal for every
//! convex cost `|x - y|^lambda` and for the sup cost, so `d_lambda` and
//! `d_inf` reduce to a single merge of the two CDFs. [`lp_oracle`] solves the
//! full transport linear program for validation.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::scalar::{Accumulator, Scalar};

/// Largest combined support size accepted by [`lp_oracle`].
pub const LP_ORACLE_LIMIT: usize = 12;
/// Cumulative masses closer than this are merged into one breakpoint.
pub const BREAKPOINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingEntry<T> {
    pub source: T,
    pub target: T,
    pub mass: T,
}

/// A transport plan between two discrete measures.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling<T> {
    pub entries: Vec<CouplingEntry<T>>,
}

impl<T: Scalar> Coupling<T> {
    /// `sum mass * |x - y|^lambda`.
    pub fn cost(&self, lambda: T) -> T {
        let mut acc = Accumulator::new();
        for e in &self.entries {
            acc.add(e.mass * pow_cost((e.source - e.target).abs(), lambda));
        }
        acc.value()
    }

    /// Largest displacement carried by the plan.
    pub fn max_displacement(&self) -> T {
        self.entries.iter().map(|e| (e.source - e.target).abs()).fold(T::zero(), T::max)
    }

    /// Mass shipped out of each atom of `mu` (in `mu`'s atom order).
    pub fn source_marginal(&self, mu: &DiscreteMeasure<T>) -> Vec<T> {
        marginal(mu, self.entries.iter().map(|e| (e.source, e.mass)))
    }

    /// Mass received by each atom of `nu`.
    pub fn target_marginal(&self, nu: &DiscreteMeasure<T>) -> Vec<T> {
        marginal(nu, self.entries.iter().map(|e| (e.target, e.mass)))
    }
}

fn marginal<T: Scalar>(mu: &DiscreteMeasure<T>, flows: impl Iterator<Item = (T, T)>) -> Vec<T> {
    let mut acc = vec![Accumulator::new(); mu.len()];
    for (x, mass) in flows {
        let idx = mu
            .atoms()
            .binary_search_by(|a| a.position.partial_cmp(&x).expect("finite positions"))
            .expect("coupling entry lies on an atom");
        acc[idx].add(mass);
    }
    acc.iter().map(Accumulator::value).collect()
}

fn pow_cost<T: Scalar>(d: T, lambda: T) -> T {
    if d == T::zero() {
        T::zero()
    } else if lambda.fract() == T::zero() && lambda <= T::of(64.0) {
        d.powi(lambda.to_i32().expect("small integer exponent"))
    } else {
        (lambda * d.ln()).exp()
    }
}

/// The quantile coupling of `mu` and `nu`.
///
/// CDF breakpoints that agree to within [`BREAKPOINT_TOL`] are treated as a
/// single breakpoint, so rounding in the masses never produces a spurious
/// sliver of mass between far-apart atoms.
pub fn monotone_coupling<T: Scalar>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>) -> Coupling<T> {
    let fa = mu.cdf();
    let fb = nu.cdf();
    let xa = mu.atoms();
    let xb = nu.atoms();
    let snap = T::tol(BREAKPOINT_TOL);
    let mut entries = Vec::with_capacity(xa.len() + xb.len());
    let (mut i, mut j) = (0, 0);
    let mut level = T::zero();
    while i < xa.len() && j < xb.len() {
        let (a, b) = (fa[i], fb[j]);
        let next = a.min(b);
        let mass = next - level;
        if mass > T::zero() {
            entries.push(CouplingEntry { source: xa[i].position, target: xb[j].position, mass });
        }
        if (a - b).abs() <= snap {
            level = a.max(b);
            i += 1;
            j += 1;
        } else if a < b {
            level = a;
            i += 1;
        } else {
            level = b;
            j += 1;
        }
    }
    Coupling { entries }
}

/// `d_lambda(mu, nu)` for finite `lambda >= 1`.
pub fn d_lambda<T: Scalar>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, lambda: T) -> Result<T> {
    if !(lambda >= T::one()) || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and at least 1"));
    }
    let cost = monotone_coupling(mu, nu).cost(lambda);
    Ok(cost.max(T::zero()).powf(lambda.recip()))
}

/// `d_inf(mu, nu)`: the largest displacement of the monotone coupling.
pub fn d_inf<T: Scalar>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>) -> T {
    monotone_coupling(mu, nu).max_displacement()
}

/// Exact optimum of the transport LP `min sum pi_ij |x_i - y_j|^lambda` over
/// all couplings, by the simplex method. Returns the optimal cost, i.e.
/// `d_lambda^lambda`.
pub fn lp_oracle<T: Scalar>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, lambda: T) -> Result<T> {
    let (n, m) = (mu.len(), nu.len());
    if n + m > LP_ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge { atoms: n + m, limit: LP_ORACLE_LIMIT });
    }
    if !(lambda >= T::one()) || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and at least 1"));
    }
    let lambda = lambda.as_f64();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(n * m);
    for a in mu.atoms() {
        for b in nu.atoms() {
            let d = (a.position.as_f64() - b.position.as_f64()).abs();
            let cost = if d == 0.0 { 0.0 } else { d.powf(lambda) };
            vars.push(problem.add_var(cost, (0.0, f64::INFINITY)));
        }
    }
    for (i, a) in mu.atoms().iter().enumerate() {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        problem.add_constraint(row.as_slice(), ComparisonOp::Eq, a.mass.as_f64());
    }
    // The last column constraint is implied by the others and the equal totals.
    for (j, b) in nu.atoms().iter().enumerate().take(m - 1) {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], 1.0)).collect();
        problem.add_constraint(col.as_slice(), ComparisonOp::Eq, b.mass.as_f64());
    }
    let solution = problem.solve().map_err(|e| Error::LinearProgram(e.to_string()))?;
    Ok(T::of(solution.objective()))
}
