//! The moment inequality
//! `E|X - Y|^(2n+1) - 2 E[X^(2n+1)] - M (E[X^(2n)])^2 >= 0`
//! for i.i.d. `X, Y` with vanishing odd moments up to order `2n - 1` and
//! `|X| <= ((2n-1)/(3M))^(1/(2n-1))`: evaluation, random constrained
//! distributions, and two-atom counterexamples for weakened variants.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::{compensated_sum, Accumulator, Scalar};

/// Odd-moment constraints must hold to this accuracy.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// A left-hand side below this counts as a violation.
pub const VIOLATION_TOL: f64 = -1e-10;

/// A finitely supported law on `[-c, c]` whose odd moments of order
/// `1, 3, ..., 2n - 1` vanish.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentDistribution<T> {
    atoms: Vec<(T, T)>,
    n: u32,
    c: T,
}

fn ipow<T: Scalar>(x: T, k: u32) -> T {
    x.powi(k as i32)
}

impl<T: Scalar> MomentDistribution<T> {
    /// Validates `(position, weight)` pairs against the support bound `c`
    /// and the odd-moment constraints for `n`.
    pub fn new(atoms: Vec<(T, T)>, n: u32, c: T) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite()) || !c.is_finite() {
            return Err(Error::NonFinite("distribution atoms"));
        }
        if atoms.iter().any(|&(_, w)| w < T::zero()) {
            return Err(invalid("weights must be non-negative"));
        }
        let total = compensated_sum(atoms.iter().map(|a| a.1));
        let tol = T::of(CONSTRAINT_TOL);
        if (total - T::one()).abs() > tol {
            return Err(Error::ConstraintViolation((total - T::one()).as_f64()));
        }
        if atoms.iter().any(|&(x, _)| x.abs() > c * (T::one() + T::tol(1e-12))) {
            return Err(invalid("atom outside [-c, c]"));
        }
        let dist = Self { atoms, n, c };
        dist.check_odd_moments(n)?;
        Ok(dist)
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn c(&self) -> T {
        self.c
    }

    /// `E[X^k]`.
    pub fn moment(&self, k: u32) -> T {
        compensated_sum(self.atoms.iter().map(|&(x, w)| w * ipow(x, k)))
    }

    /// `E|X - Y|^k` for independent copies, as an exact double sum.
    pub fn abs_difference_moment(&self, k: u32) -> T {
        let mut acc = Accumulator::new();
        for (i, &(xi, wi)) in self.atoms.iter().enumerate() {
            for &(xj, wj) in &self.atoms[i + 1..] {
                acc.add(T::of(2.0) * wi * wj * ipow((xi - xj).abs(), k));
            }
        }
        acc.value()
    }

    fn check_odd_moments(&self, n: u32) -> Result<()> {
        for j in 1..=n {
            let mk = self.moment(2 * j - 1);
            if mk.abs() > T::of(CONSTRAINT_TOL) {
                return Err(Error::ConstraintViolation(mk.as_f64()));
            }
        }
        Ok(())
    }
}

/// `E|X - Y|^(2n+1) - 2 E[X^(2n+1)] - M (E[X^(2n)])^2`.
pub fn lhs_value<T: Scalar>(dist: &MomentDistribution<T>, n: u32, big_m: T) -> Result<T> {
    if n == 0 || !(big_m > T::zero()) {
        return Err(invalid("need n >= 1 and M > 0"));
    }
    dist.check_odd_moments(n)?;
    let even = dist.moment(2 * n);
    Ok(dist.abs_difference_moment(2 * n + 1) - T::of(2.0) * dist.moment(2 * n + 1) - big_m * even * even)
}

/// `((2n-1)/(3M))^(1/(2n-1))`.
pub fn support_bound<T: Scalar>(n: u32, big_m: T) -> T {
    let k = T::of(f64::from(2 * n - 1));
    (k / (T::of(3.0) * big_m)).powf(k.recip())
}

/// The equality-constraint rows `1, x, x^3, ..., x^(2n-1)` of the weight
/// polytope, orthonormalized. `lower` holds the Gram-Schmidt coefficients
/// so that `rows = lower * basis`.
struct Constraints<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<Vec<T>>,
    lower: Vec<Vec<T>>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    compensated_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

impl<T: Scalar> Constraints<T> {
    fn new(grid: &[T], n: u32) -> Self {
        let rows: Vec<Vec<T>> = std::iter::once(vec![T::one(); grid.len()])
            .chain((1..=n).map(|j| grid.iter().map(|&x| ipow(x, 2 * j - 1)).collect()))
            .collect();
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(rows.len());
        let mut lower = vec![vec![T::zero(); rows.len()]; rows.len()];
        for (i, row) in rows.iter().enumerate() {
            let mut v = row.clone();
            // modified Gram-Schmidt, two passes for orthogonality
            for _ in 0..2 {
                for (k, q) in basis.iter().enumerate() {
                    let proj = dot(&v, q);
                    lower[i][k] = lower[i][k] + proj;
                    v.iter_mut().zip(q).for_each(|(a, &b)| *a = *a - proj * b);
                }
            }
            let norm = dot(&v, &v).sqrt();
            lower[i][i] = norm;
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
        Self { rows, basis, lower }
    }

    /// Removes the row-space component of `z`.
    fn project_null(&self, z: &mut [T]) {
        for q in &self.basis {
            let proj = dot(z, q);
            z.iter_mut().zip(q).for_each(|(a, &b)| *a = *a - proj * b);
        }
    }

    /// Minimal-norm correction restoring `sum w = 1` and the odd moments.
    fn restore(&self, w: &mut [T]) {
        let target = |i: usize| if i == 0 { T::one() } else { T::zero() };
        let r: Vec<T> = self.rows.iter().enumerate().map(|(i, row)| dot(row, w) - target(i)).collect();
        let mut y = vec![T::zero(); r.len()];
        for i in 0..r.len() {
            let s = compensated_sum((0..i).map(|k| self.lower[i][k] * y[k]));
            y[i] = (r[i] - s) / self.lower[i][i];
        }
        for (k, q) in self.basis.iter().enumerate() {
            w.iter_mut().zip(q).for_each(|(a, &b)| *a = *a - y[k] * b);
        }
    }
}

/// Symmetric grid of `size` points spanning `[-c, c]`.
fn symmetric_grid<T: Scalar>(c: T, size: usize) -> Vec<T> {
    let last = T::of((size - 1) as f64);
    (0..size).map(|k| c * (T::of(2.0 * k as f64) / last - T::one())).collect()
}

/// Draws weights on a symmetric grid of `grid_size` points in `[-c, c]`
/// from the polytope `{w >= 0, sum w = 1, odd moments 1..2n-1 vanish}` by
/// hit-and-run (chain length `50 * grid_size`) started at uniform weights.
pub fn sample_constrained<T: Scalar>(n: u32, c: T, grid_size: usize, seed: u64) -> Result<MomentDistribution<T>> {
    if n == 0 || grid_size < 2 * n as usize + 2 {
        return Err(invalid(format!("grid of {grid_size} points is too small for n = {n}")));
    }
    if !(c > T::zero()) || !c.is_finite() {
        return Err(invalid("support bound must be positive"));
    }
    let mut rng = rng::stream(seed, 0);
    Ok(sample_with(n, c, grid_size, &mut rng))
}

fn sample_with<T: Scalar, R: Rng>(n: u32, c: T, grid_size: usize, rng: &mut R) -> MomentDistribution<T> {
    let grid = symmetric_grid(c, grid_size);
    let cons = Constraints::new(&grid, n);
    let mut w = vec![T::one() / T::of(grid_size as f64); grid_size];
    for _ in 0..50 * grid_size {
        let mut d: Vec<T> = (0..grid_size).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect();
        cons.project_null(&mut d);
        let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
        for (&wi, &di) in w.iter().zip(&d) {
            if di > T::zero() {
                lo = lo.max(-wi / di);
            } else if di < T::zero() {
                hi = hi.min(-wi / di);
            }
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            continue;
        }
        let t = lo + (hi - lo) * T::of(rng.gen::<f64>());
        w.iter_mut().zip(&d).for_each(|(a, &b)| *a = (*a + t * b).max(T::zero()));
    }
    for _ in 0..3 {
        cons.restore(&mut w);
        if w.iter().all(|&a| a >= T::zero()) {
            break;
        }
        w.iter_mut().for_each(|a| *a = a.max(T::zero()));
    }
    MomentDistribution { atoms: grid.into_iter().zip(w).collect(), n, c }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchReport<T> {
    pub min_lhs: T,
    pub violations: usize,
    pub trials: usize,
    /// Support bound the samples were drawn at.
    pub c: T,
    /// The sample attaining `min_lhs`.
    pub worst: MomentDistribution<T>,
}

/// Evaluates the inequality on `trials` independent samples at the exact
/// support bound. Trial `i` uses its own stream derived from `(seed, i)`.
pub fn verify_batch<T: Scalar>(n: u32, big_m: T, trials: usize, seed: u64) -> Result<BatchReport<T>> {
    if trials == 0 || n == 0 || !(big_m > T::zero()) || !big_m.is_finite() {
        return Err(invalid("need trials >= 1, n >= 1 and M > 0"));
    }
    let c = support_bound(n, big_m);
    let grid_size = 4 * n as usize + 8;
    let results: Vec<(T, MomentDistribution<T>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let dist = sample_with(n, c, grid_size, &mut rng);
            lhs_value(&dist, n, big_m).map(|v| (v, dist))
        })
        .collect::<Result<_>>()?;
    let violations = results.iter().filter(|(v, _)| *v < T::of(VIOLATION_TOL)).count();
    let (min_lhs, worst) = results
        .into_iter()
        .reduce(|best, next| if next.0 < best.0 { next } else { best })
        .expect("at least one trial");
    Ok(BatchReport { min_lhs, violations, trials, c, worst })
}

/// A weakened form of the inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Variant {
    /// `2 E[X^3]` replaced by `C E[X^3]` with `C > 2`.
    ReplaceC(f64),
    /// `(E[X^2])^2` replaced by `E[X^4]`.
    ReplaceFourthMoment,
}

/// Left-hand side of a weakened variant at `n = 1`.
pub fn variant_lhs<T: Scalar>(dist: &MomentDistribution<T>, variant: Variant, big_m: T) -> T {
    let spread = dist.abs_difference_moment(3);
    match variant {
        Variant::ReplaceC(cc) => {
            let second = dist.moment(2);
            spread - T::of(cc) * dist.moment(3) - big_m * second * second
        }
        Variant::ReplaceFourthMoment => spread - T::of(2.0) * dist.moment(3) - big_m * dist.moment(4),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample<T> {
    pub distribution: MomentDistribution<T>,
    /// Probability `t` of the atom at `c`.
    pub t: T,
    pub value: T,
}

/// Searches the mean-zero two-atom laws `X = c` w.p. `t`,
/// `X = -tc/(1-t)` w.p. `1-t`, with `c = 1/(3M)` and `t = k/2000` in
/// `(0, 1/2)`, for the most negative left-hand side of `variant`.
pub fn sharpness_counterexample<T: Scalar>(variant: Variant, n: u32, big_m: T) -> Result<Counterexample<T>> {
    if n != 1 {
        return Err(invalid("counterexamples are only searched at n = 1"));
    }
    if let Variant::ReplaceC(cc) = variant {
        if !(cc > 2.0) || !cc.is_finite() {
            return Err(invalid("the constant must exceed 2"));
        }
    }
    if !(big_m > T::zero()) || !big_m.is_finite() {
        return Err(invalid("M must be positive"));
    }
    let c = (T::of(3.0) * big_m).recip();
    let best = (1..1000)
        .map(|k| {
            let t = T::of(k as f64 / 2000.0);
            let s = T::one() - t;
            let dist = MomentDistribution { atoms: vec![(-t * c / s, s), (c, t)], n: 1, c };
            (variant_lhs(&dist, variant, big_m), t, dist)
        })
        .reduce(|best, next| if next.0 < best.0 { next } else { best })
        .expect("non-empty grid");
    let (value, t, distribution) = best;
    if value < -T::of(1e-12) {
        Ok(Counterexample { distribution, t, value })
    } else {
        Err(Error::NotFound(format!("no counterexample on the t-grid for {variant:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_two_point() {
        let zero = MomentDistribution::new(vec![(0.0, 1.0)], 1, 1.0).unwrap();
        assert_eq!(lhs_value(&zero, 1, 1.0).unwrap(), 0.0);
        let c = 1.0 / 3.0;
        let pm = MomentDistribution::new(vec![(-c, 0.5), (c, 0.5)], 1, c).unwrap();
        assert!((lhs_value(&pm, 1, 1.0).unwrap() - 11.0f64 / 81.0).abs() < 1e-15);
        let skew = MomentDistribution::new(vec![(-1.0 / 27.0, 0.9), (c, 0.1)], 1, c).unwrap();
        assert!(lhs_value(&skew, 1, 1.0).unwrap() >= 0.0);
        assert!(variant_lhs(&skew, Variant::ReplaceC(2.5), 1.0) < 0.0);
    }

    #[test]
    fn rejects_constraint_violations() {
        assert!(matches!(MomentDistribution::new(vec![(0.0, 0.5), (1.0, 0.5)], 1, 1.0), Err(Error::ConstraintViolation(_))));
        assert!(MomentDistribution::new(vec![(-2.0, 0.5), (2.0, 0.5)], 1, 1.0).is_err());
        assert!(MomentDistribution::new(vec![(0.0, 0.7)], 1, 1.0).is_err());
    }

    #[test]
    fn sampled_constraints_hold() {
        for &(n, c, g) in &[(1u32, 1.0 / 3.0, 8usize), (2, 0.5, 10), (3, 1.0, 20)] {
            let d = sample_constrained(n, c, g, 11).unwrap();
            assert_eq!(d.atoms().len(), g);
            assert!((d.atoms().iter().map(|a| a.1).sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 1..=n {
                assert!(d.moment(2 * j - 1).abs() < 1e-12);
            }
            assert!(d.atoms().iter().all(|&(x, w)| w >= 0.0 && x.abs() <= c));
        }
        assert!(sample_constrained::<f64>(2, 0.5, 5, 0).is_err());
    }

    #[test]
    fn support_bounds() {
        assert!((support_bound(1, 1.0f64) - 1.0 / 3.0).abs() < 1e-16);
        assert!((support_bound(2, 0.5) - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_counterexamples() {
        let (big_m, c) = (1.0, 1.0 / 3.0);
        let two_atom = |t: f64| {
            let s = 1.0 - t;
            MomentDistribution::new(vec![(-t * c / s, s), (c, t)], 1, c).unwrap()
        };
        let (t, s, cc) = (0.1, 0.9, 2.5);
        let closed = t * c.powi(3) * (2.0 - cc * (1.0 - 2.0 * t) - big_m * c * t) / (s * s);
        assert!((variant_lhs(&two_atom(t), Variant::ReplaceC(cc), big_m) - closed).abs() < 1e-15);
        let (t, s) = (0.05, 0.95);
        let closed = t * c.powi(3) * (4.0 * t / (s * s) - big_m * c * (1.0 + t.powi(3) / s.powi(3)));
        assert!((variant_lhs(&two_atom(t), Variant::ReplaceFourthMoment, big_m) - closed).abs() < 1e-15);
    }

    #[test]
    fn counterexample_search() {
        let ce = sharpness_counterexample(Variant::ReplaceC(2.5), 1, 1.0).unwrap();
        assert!(ce.value < -1e-12);
        let ce = sharpness_counterexample(Variant::ReplaceFourthMoment, 1, 1.0).unwrap();
        assert!(ce.value < -1e-12);
        assert!(sharpness_counterexample(Variant::ReplaceC(2.0), 1, 1.0).is_err());
        assert!(sharpness_counterexample(Variant::ReplaceFourthMoment, 2, 1.0).is_err());
    }

    #[test]
    fn small_batch_is_clean() {
        let r = verify_batch(1, 1.0, 200, 3).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.min_lhs >= -1e-10);
        assert_eq!(r, verify_batch(1, 1.0, 200, 3).unwrap());
    }
}
