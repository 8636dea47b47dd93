//! Where the balanced two-Dirac state `rho = (delta_0 + delta_1)/2` stops
//! being optimal as the exponents vary.
//!
//! Against the three-atom family
//! `rho_m = ((1-m)/2) delta_0 + m delta_{1/2} + ((1-m)/2) delta_1`, whose
//! energy has slope `-f(p)` at `m = 0`, the sign of
//! `f(p) = V(1)/2 - V(1/2)` decides first-order stability. Near `p = q`
//! that sign is the sign of `g(q) = q ln 2 + 1 - 2^(q-1)`, which changes at
//! `q*`.

use rayon::prelude::*;

use crate::energy::interaction_energy;
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::potential::Potential;
use crate::rng;
use crate::roots::bisect_checked;
use crate::scalar::Scalar;
use crate::search::{global_search, SearchOptions};
use crate::transport::d_inf;

/// `p_lower` gives up above this exponent.
pub const P_CAP: f64 = 200.0;
/// Largest `q` for which `p_lower` is searched.
pub const Q_CAP: f64 = 3.0;
/// Energy tolerance for declaring the two-Dirac state optimal in a scan.
pub const ENERGY_MATCH: f64 = 1e-6;
/// Transport tolerance for declaring the two-Dirac state optimal in a scan.
pub const SHAPE_MATCH: f64 = 1e-3;

/// `f(p) = 1/(2p) - 1/(2q) - 1/(p 2^p) + 1/(q 2^q)`.
pub fn f_of_p<T: Scalar>(p: T, q: T) -> T {
    let two = T::of(2.0);
    (two * p).recip() - (two * q).recip() - (p * two.powf(p)).recip() + (q * two.powf(q)).recip()
}

/// `g(q) = q ln 2 + 1 - 2^(q-1)`.
pub fn g_of_q<T: Scalar>(q: T) -> T {
    q * T::LN_2() + T::one() - T::of(2.0).powf(q - T::one())
}

/// The root of `g` in `[2, 3]`.
pub fn q_star<T: Scalar>() -> Result<T> {
    bisect_checked(g_of_q, T::of(2.0), T::of(3.0), 80, T::tol(1e-12))
}

/// The first root of `f(., q)` above `q`, for `0 < q < q*`; `None` when
/// `q >= q*` (including the capped range `q > 3`), where `f` starts out
/// non-positive.
pub fn p_lower<T: Scalar>(q: T) -> Result<Option<T>> {
    if !(q > T::zero()) || !q.is_finite() {
        return Err(invalid("q must be positive"));
    }
    if q > T::of(Q_CAP) || q >= q_star::<T>()? {
        return Ok(None);
    }
    let f = |p: T| f_of_p(p, q);
    let mut lo = q + T::of(1e-6);
    if !(f(lo) > T::zero()) {
        return Err(Error::NoBracket { lo: lo.as_f64(), hi: lo.as_f64() });
    }
    let mut step = T::of(1e-3);
    let mut hi = q + step;
    while f(hi) > T::zero() {
        lo = hi;
        step = step * T::of(2.0);
        hi = q + step;
        if hi > T::of(P_CAP) {
            return Err(Error::NoBracket { lo: lo.as_f64(), hi: P_CAP });
        }
    }
    bisect_checked(f, lo, hi, 200, T::tol(1e-12)).map(Some)
}

/// `((1-m)/2) delta_0 + m delta_{1/2} + ((1-m)/2) delta_1`.
pub fn three_atom_measure<T: Scalar>(m: T) -> Result<DiscreteMeasure<T>> {
    if !(m >= T::zero() && m < T::one()) {
        return Err(invalid("m must lie in [0, 1)"));
    }
    let side = (T::one() - m) / T::of(2.0);
    DiscreteMeasure::from_atoms([(T::zero(), side), (T::of(0.5), m), (T::one(), side)])
}

/// `E(rho_m) = m(1-m) V(1/2) + ((1-m)^2/4) V(1)`.
pub fn three_atom_energy<T: Scalar>(pot: &Potential<T>, m: T) -> T {
    let rest = T::one() - m;
    m * rest * pot.value(T::of(0.5)) + rest * rest / T::of(4.0) * pot.min_value()
}

/// `dE(rho_m)/dm` at `m = 0`, which equals `-f(p)`.
pub fn three_atom_slope_at_zero<T: Scalar>(pot: &Potential<T>) -> T {
    pot.value(T::of(0.5)) - pot.min_value() / T::of(2.0)
}

/// Potential for a phase computation: the strict constructor when `q >= 2`,
/// the relaxed one otherwise.
pub fn phase_potential<T: Scalar>(p: T, q: T) -> Result<Potential<T>> {
    if q >= T::of(2.0) {
        Potential::new(p, q)
    } else {
        Potential::relaxed(p, q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint<T> {
    pub p: T,
    pub q: T,
    pub global_best_energy: T,
    /// `V(1)/4`.
    pub two_dirac_energy: T,
    pub is_two_dirac_optimal: bool,
    pub atoms_of_best: DiscreteMeasure<T>,
    /// `d_inf` from the canonical best measure to the balanced two-Dirac state.
    pub distance_to_two_dirac: T,
}

/// First grid point from which the two-Dirac state stays optimal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdEstimate<T> {
    pub p: T,
    /// Previous grid point (or `q` at the start of the grid); the threshold
    /// lies in `(lower, p]` as far as the grid can tell.
    pub lower: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScan<T> {
    pub points: Vec<PhasePoint<T>>,
    pub threshold: Option<ThresholdEstimate<T>>,
}

/// Global search at every `p` of an ascending grid, compared with the
/// balanced two-Dirac state (which is always included as a candidate).
pub fn p_star_scan<T: Scalar>(
    q: T,
    p_grid: &[T],
    n_atoms: usize,
    n_starts: usize,
    seed: u64,
) -> Result<PhaseScan<T>> {
    if p_grid.is_empty() || p_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("p grid must be non-empty and strictly ascending"));
    }
    if !(p_grid[0] > q) {
        return Err(invalid("every p must exceed q"));
    }
    let star = DiscreteMeasure::two_dirac(T::of(0.5))?;
    let opts = SearchOptions::default();
    let points: Vec<PhasePoint<T>> = p_grid
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let pot = phase_potential(p, q)?;
            let found = global_search(&pot, n_atoms, n_starts, rng::derive_seed(seed, k as u64), &opts)?;
            let two_dirac_energy = pot.min_value() / T::of(4.0);
            let (best_energy, best) = if found.energy < two_dirac_energy {
                (found.energy, found.minimizer)
            } else {
                (interaction_energy(&pot, &star), star.clone())
            };
            let distance = d_inf(&best.canonicalize(), &star);
            Ok(PhasePoint {
                p,
                q,
                global_best_energy: best_energy,
                two_dirac_energy,
                is_two_dirac_optimal: (best_energy - two_dirac_energy).abs() <= T::of(ENERGY_MATCH)
                    && distance <= T::of(SHAPE_MATCH),
                atoms_of_best: best,
                distance_to_two_dirac: distance,
            })
        })
        .collect::<Result<_>>()?;
    let first_stable = points.iter().rposition(|pt| !pt.is_two_dirac_optimal).map_or(0, |k| k + 1);
    let threshold = (first_stable < points.len()).then(|| ThresholdEstimate {
        p: points[first_stable].p,
        lower: if first_stable == 0 { q } else { points[first_stable - 1].p },
    });
    Ok(PhaseScan { points, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_vanishes_on_the_diagonal() {
        for q in [2.0f64, 2.5, 3.0] {
            assert!(f_of_p(q, q).abs() <= 1e-15);
        }
        assert!(f_of_p(2.2f64, 2.0) > 0.0);
        assert!(f_of_p(3.0f64, 2.0).abs() < 1e-16);
    }

    #[test]
    fn g_values_and_root() {
        assert!((g_of_q(2.0f64) - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((g_of_q(3.0f64) - (3.0 * 2f64.ln() - 3.0)).abs() < 1e-15);
        let qs: f64 = q_star().unwrap();
        assert!(g_of_q(qs).abs() <= 1e-12);
        assert!((qs - 2.42134).abs() < 1e-4);
        assert!(g_of_q(qs - 1e-6) > 0.0 && g_of_q(qs + 1e-6) < 0.0);
    }

    #[test]
    fn lower_threshold() {
        let p2 = p_lower(2.0f64).unwrap().unwrap();
        assert!((p2 - 3.0).abs() < 1e-9);
        assert!(f_of_p(p2, 2.0).abs() <= 1e-12);
        for k in 1..100 {
            let p = 2.0 + (p2 - 2.0) * k as f64 / 100.0;
            assert!(f_of_p(p, 2.0) > 0.0);
        }
        assert_eq!(p_lower(2.5f64).unwrap(), None);
        assert_eq!(p_lower(3.5f64).unwrap(), None);
        let p15 = p_lower(1.5f64).unwrap().unwrap();
        assert!(p15 > 1.5 && f_of_p(p15, 1.5).abs() <= 1e-12);
        assert!(p_lower(0.0f64).is_err());
    }

    #[test]
    fn three_atom_family() {
        let pot = Potential::<f64>::new(3.0, 2.0).unwrap();
        assert_eq!(three_atom_energy(&pot, 0.0), pot.min_value() / 4.0);
        let direct = interaction_energy(&pot, &three_atom_measure(0.25).unwrap());
        assert!((three_atom_energy(&pot, 0.25) - direct).abs() < 1e-12);
        let pot = Potential::<f64>::new(2.2, 2.0).unwrap();
        assert!((three_atom_slope_at_zero(&pot) + f_of_p(2.2, 2.0)).abs() < 1e-15);
        assert!(three_atom_slope_at_zero(&pot) < 0.0);
    }

    #[test]
    fn scan_threshold_logic() {
        let scan = p_star_scan(2.0, &[3.5, 6.0], 3, 4, 1).unwrap();
        for pt in &scan.points {
            assert!(pt.global_best_energy <= pt.two_dirac_energy + 1e-9);
        }
        assert!(scan.points[1].is_two_dirac_optimal);
        assert!(p_star_scan(2.0, &[3.0, 2.5], 3, 2, 1).is_err());
        assert!(p_star_scan(2.0, &[2.0], 3, 2, 1).is_err());
    }
}
