//! Local-minimality classification of the two-Dirac steady states
//! `rho_m = m delta_0 + (1 - m) delta_1` in the `d_inf` topology.
//!
//! The verdict is analytic. Saddles come with an explicit lower-energy
//! measure built from one of two perturbation families: splitting an atom
//! symmetrically, or leaking a mass `eta^alpha` from an atom a distance
//! `eta` towards the other.

use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::interaction_energy;
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::potential::Potential;
use crate::transport::d_inf;

/// Parameters within this distance of a case boundary are snapped to it.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Witnesses must lower the energy by more than this.
pub const MIN_DROP: f64 = 1e-12;
/// Witnesses live in the closed `d_inf` ball of this radius.
pub const WITNESS_RADIUS: f64 = 1e-2;
// Searching slightly inside the ball keeps `1 - x` from rounding outside it.
const SEARCH_RADIUS: f64 = WITNESS_RADIUS * (1.0 - 1e-6);
/// Leak mass exponent: a leak over distance `eta` moves mass `eta^2`.
pub const LEAK_ALPHA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    StrictLocalMin,
    Saddle,
}

/// Which atom a perturbation acts on: `Right` perturbs the mass-`m` atom at
/// 0, `Left` the mass-`(1 - m)` atom at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WitnessFamily {
    SymmetricSplit { side: Side, x: f64 },
    Leak { side: Side, eta: f64, alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub family: WitnessFamily,
    pub measure: DiscreteMeasure<f64>,
    /// `E(rho_m) - E(measure)`, evaluated directly on the measure.
    pub energy_drop: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub p: f64,
    pub q: f64,
    pub m: f64,
    pub verdict: Verdict,
    /// Case of the classification table, 1 to 6.
    pub case_id: u8,
    pub witness: Option<Witness>,
    /// `min_i (V''(1) m_j + V''(0) m_i) / 2`: positive in cases 1 and 2,
    /// non-positive in cases 3 to 6.
    pub margin: f64,
    /// `m` sits on an endpoint of the case-2 interval, or `p`, `q` or `m`
    /// was snapped to a boundary value within [`BOUNDARY_TOL`].
    pub at_boundary: bool,
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// `a == b` exactly, or within [`BOUNDARY_TOL`] (second flag set when snapped).
fn snaps_to(a: f64, b: &BigRational, b_float: f64) -> (bool, bool) {
    if rational(a) == *b {
        (true, false)
    } else if (a - b_float).abs() <= BOUNDARY_TOL {
        (true, true)
    } else {
        (false, false)
    }
}

fn validate(p: f64, q: f64, m: f64) -> Result<()> {
    if !(p.is_finite() && q.is_finite() && m.is_finite()) {
        return Err(Error::NonFinite("classification parameters"));
    }
    if !(q >= 2.0 && p > q) {
        return Err(Error::InvalidPotential { p, q, reason: "need p > q >= 2" });
    }
    if !(m > 0.0 && m < 1.0) {
        return Err(invalid(format!("mass m = {m} must lie in (0, 1)")));
    }
    Ok(())
}

fn curvature_margin(pot: &Potential<f64>, m: f64) -> Result<f64> {
    let v0 = pot.eval(0.0, 2)?;
    let v1 = pot.eval(1.0, 2)?;
    Ok(((v1 * (1.0 - m) + v0 * m) / 2.0).min((v1 * m + v0 * (1.0 - m)) / 2.0))
}

fn verdict_only(p: f64, q: f64, m: f64) -> (Verdict, u8, bool) {
    let two = BigRational::from_integer(2.into());
    let (q_is_two, q_snap) = snaps_to(q, &two, 2.0);
    if !q_is_two {
        return (Verdict::StrictLocalMin, 1, false);
    }
    let three = BigRational::from_integer(3.into());
    let (p_is_three, p_snap) = snaps_to(p, &three, 3.0);
    if p_is_three {
        let half = BigRational::new(1.into(), 2.into());
        let (m_half, m_snap) = snaps_to(m, &half, 0.5);
        return if m_half {
            (Verdict::StrictLocalMin, 6, q_snap || p_snap || m_snap)
        } else {
            (Verdict::Saddle, 5, q_snap || p_snap)
        };
    }
    if p < 3.0 {
        return (Verdict::Saddle, 4, q_snap);
    }
    let pr = rational(p);
    let one = BigRational::one();
    let lo = &one / (&pr - &one);
    let hi = (&pr - &two) / (&pr - &one);
    let (at_lo, _) = snaps_to(m, &lo, 1.0 / (p - 1.0));
    let (at_hi, _) = snaps_to(m, &hi, (p - 2.0) / (p - 1.0));
    if at_lo || at_hi {
        return (Verdict::Saddle, 3, true);
    }
    let mr = rational(m);
    if mr > lo && mr < hi {
        (Verdict::StrictLocalMin, 2, q_snap)
    } else {
        (Verdict::Saddle, 3, q_snap)
    }
}

/// Classifies `rho_m` for `p > q >= 2`, `m` in `(0, 1)`.
///
/// * 1: `q > 2`, strict local minimizer for every `m`.
/// * 2: `q = 2`, `p > 3`, `1/(p-1) < m < (p-2)/(p-1)`: strict local minimizer.
/// * 3: `q = 2`, `p > 3`, `m` outside that open interval: saddle.
/// * 4: `q = 2`, `2 < p < 3`: saddle.
/// * 5: `p = 3`, `q = 2`, `m != 1/2`: saddle.
/// * 6: `p = 3`, `q = 2`, `m = 1/2`: strict local minimizer.
///
/// Boundary tests are exact on the rational values of the inputs, with
/// snapping at [`BOUNDARY_TOL`]. Saddles carry a [`saddle_witness`].
pub fn classify_analytic(p: f64, q: f64, m: f64) -> Result<Classification> {
    validate(p, q, m)?;
    let pot = Potential::new(p, q)?;
    let (verdict, case_id, at_boundary) = verdict_only(p, q, m);
    let witness = match verdict {
        Verdict::Saddle => Some(find_witness(&pot, m)?),
        Verdict::StrictLocalMin => None,
    };
    Ok(Classification { p, q, m, verdict, case_id, witness, margin: curvature_margin(&pot, m)?, at_boundary })
}

/// Classifies every `(p, m)` pair of a grid at fixed `q`, in parallel.
/// Invalid combinations (`p <= q`) are skipped.
pub fn classify_grid(q: f64, ps: &[f64], ms: &[f64]) -> Result<Vec<Classification>> {
    let points: Vec<(f64, f64)> =
        ps.iter().filter(|&&p| p > q).flat_map(|&p| ms.iter().map(move |&m| (p, m))).collect();
    points.into_par_iter().map(|(p, m)| classify_analytic(p, q, m)).collect()
}

/// `E''(0)` of the symmetric split of one atom of `rho_m` at `q = 2`:
/// `-(p-1) m (m - (p-2)/(p-1))` for `Right`, `(1-m)(m(p-2) - (1-m))` for `Left`.
pub fn split_second_derivative(p: f64, q: f64, m: f64, side: Side) -> Result<f64> {
    if q != 2.0 {
        return Err(invalid("split second derivative is only available for q = 2"));
    }
    if !(p > 2.0) || !p.is_finite() || !(m > 0.0 && m < 1.0) {
        return Err(invalid("need p > 2 and m in (0, 1)"));
    }
    Ok(match side {
        Side::Right => -(p - 1.0) * m * (m - (p - 2.0) / (p - 1.0)),
        Side::Left => (1.0 - m) * (m * (p - 2.0) - (1.0 - m)),
    })
}

/// The split measure: `Right` gives `(m/2) delta_{-x} + (m/2) delta_x + (1-m) delta_1`,
/// `Left` gives `m delta_0 + ((1-m)/2)(delta_{1-x} + delta_{1+x})`.
pub fn split_measure(m: f64, x: f64, side: Side) -> Result<DiscreteMeasure<f64>> {
    match side {
        Side::Right => DiscreteMeasure::from_atoms([(-x, m / 2.0), (x, m / 2.0), (1.0, 1.0 - m)]),
        Side::Left => DiscreteMeasure::from_atoms([(0.0, m), (1.0 - x, (1.0 - m) / 2.0), (1.0 + x, (1.0 - m) / 2.0)]),
    }
}

/// `E(split) - E(rho_m)` in closed form.
pub fn split_energy_change(pot: &Potential<f64>, m: f64, x: f64, side: Side) -> f64 {
    let w = match side {
        Side::Right => m,
        Side::Left => 1.0 - m,
    };
    let outer = pot.value_offset_from_one(x) + pot.value_offset_from_one(-x);
    w * w / 4.0 * pot.value(2.0 * x) + w * (1.0 - w) / 2.0 * outer
}

/// The leak measure with `eps = eta^alpha`: `Right` gives
/// `(m - eps) delta_0 + eps delta_eta + (1-m) delta_1`, `Left` gives
/// `m delta_0 + eps delta_{1-eta} + (1-m-eps) delta_1`.
pub fn leak_measure(m: f64, eta: f64, alpha: f64, side: Side) -> Result<DiscreteMeasure<f64>> {
    let eps = eta.powf(alpha);
    match side {
        Side::Right => DiscreteMeasure::from_atoms([(0.0, m - eps), (eta, eps), (1.0, 1.0 - m)]),
        Side::Left => DiscreteMeasure::from_atoms([(0.0, m), (1.0 - eta, eps), (1.0, 1.0 - m - eps)]),
    }
}

/// `E(leak) - E(rho_m) = eps [(w - eps) V(eta) + (1 - w)(V(1 - eta) - V(1))]`
/// where `w` is the mass of the leaking atom.
pub fn leak_energy_change(pot: &Potential<f64>, m: f64, eta: f64, alpha: f64, side: Side) -> f64 {
    let w = match side {
        Side::Right => m,
        Side::Left => 1.0 - m,
    };
    let eps = eta.powf(alpha);
    eps * ((w - eps) * pot.value(eta) + (1.0 - w) * pot.value_offset_from_one(-eta))
}

/// Minimizes `f` over `(0, hi]`: a uniform scan followed by golden-section
/// refinement around the best sample.
fn line_minimize(f: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    const SAMPLES: usize = 64;
    let (mut best_x, mut best) = (hi, f(hi));
    let mut best_k = SAMPLES;
    for k in 1..SAMPLES {
        let x = hi * k as f64 / SAMPLES as f64;
        let v = f(x);
        if v < best {
            (best_x, best, best_k) = (x, v, k);
        }
    }
    let step = hi / SAMPLES as f64;
    let (mut a, mut b) = ((best_k as f64 - 1.0) * step, ((best_k + 1) as f64 * step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = (a + b) / 2.0;
    let v = f(mid);
    if mid > 0.0 && v < best {
        (mid, v)
    } else {
        (best_x, best)
    }
}

fn find_witness(pot: &Potential<f64>, m: f64) -> Result<Witness> {
    let base = interaction_energy(pot, &DiscreteMeasure::two_dirac(m)?);
    let star = DiscreteMeasure::two_dirac(m)?;
    let mut candidates = Vec::with_capacity(4);
    for side in [Side::Right, Side::Left] {
        let (x, _) = line_minimize(|x| split_energy_change(pot, m, x, side), SEARCH_RADIUS);
        candidates.push((WitnessFamily::SymmetricSplit { side, x }, split_measure(m, x, side)?));
        let w = if side == Side::Right { m } else { 1.0 - m };
        let cap = SEARCH_RADIUS.min(w.powf(1.0 / LEAK_ALPHA) * 0.5);
        let (eta, _) = line_minimize(|e| leak_energy_change(pot, m, e, LEAK_ALPHA, side), cap);
        candidates.push((WitnessFamily::Leak { side, eta, alpha: LEAK_ALPHA }, leak_measure(m, eta, LEAK_ALPHA, side)?));
    }
    candidates
        .into_iter()
        .map(|(family, measure)| {
            let drop = base - interaction_energy(pot, &measure);
            Witness { family, measure, energy_drop: drop }
        })
        .filter(|w| w.energy_drop > MIN_DROP && d_inf(&w.measure, &star) <= WITNESS_RADIUS)
        .max_by(|a, b| a.energy_drop.total_cmp(&b.energy_drop))
        .ok_or(Error::WitnessNotFound { p: pot.p(), q: pot.q(), m })
}

/// A measure within `d_inf <= 1e-2` of `rho_m` with strictly lower energy.
///
/// Fails with [`Error::WitnessNotFound`] if none of the split or leak
/// families descends, which would contradict the saddle verdict.
pub fn saddle_witness(p: f64, q: f64, m: f64) -> Result<Witness> {
    validate(p, q, m)?;
    if verdict_only(p, q, m).0 != Verdict::Saddle {
        return Err(invalid("saddle witness requested for a strict local minimizer"));
    }
    find_witness(&Potential::new(p, q)?, m)
}

/// Certified quadratic constants of a strict minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginCertificate {
    pub epsilon: f64,
    /// `eps - V''(0)/2`: `V(x) >= -a x^2` for `|x| <= r0_hint`.
    pub a: f64,
    /// `V''(1)/2 - eps`: `V(x) - V(1) >= b (x-1)^2` for `|x - 1| <= r0_hint`.
    pub b: f64,
    pub r0_hint: f64,
    /// `max_i (a m_i^2 - b m_0 m_1)`, negative when certified.
    pub decisive: f64,
}

/// Quadratic sandwich constants for cases 1 and 2.
///
/// `eps` is half the value at which `a m_i^2 - b m_0 m_1 < 0` becomes tight
/// for one of the atoms; `r0_hint` is the largest `0.25 / 2^k` on which the
/// two sandwich bounds hold at 1000 sample points each.
pub fn strict_min_margin(p: f64, q: f64, m: f64) -> Result<MarginCertificate> {
    validate(p, q, m)?;
    let (verdict, case_id, _) = verdict_only(p, q, m);
    if verdict != Verdict::StrictLocalMin || case_id > 2 {
        return Err(invalid("margin certificates cover cases 1 and 2 only"));
    }
    let pot = Potential::new(p, q)?;
    let tight = curvature_margin(&pot, m)?;
    if !(tight > 0.0) {
        return Err(Error::Inconclusive);
    }
    let epsilon = tight / 2.0;
    let a = epsilon - pot.eval(0.0, 2)? / 2.0;
    let b = pot.eval(1.0, 2)? / 2.0 - epsilon;
    let (m0, m1) = (m, 1.0 - m);
    let decisive = (a * m0 * m0 - b * m0 * m1).max(a * m1 * m1 - b * m0 * m1);
    if !(decisive < 0.0) {
        return Err(Error::Inconclusive);
    }
    const POINTS: usize = 1000;
    let holds = |r0: f64| {
        (0..POINTS).all(|k| {
            let h = r0 * (2.0 * k as f64 / (POINTS - 1) as f64 - 1.0);
            pot.value(h) + a * h * h >= 0.0 && pot.value_offset_from_one(h) - b * h * h >= 0.0
        })
    };
    let mut r0 = 0.25;
    for _ in 0..60 {
        if holds(r0) {
            return Ok(MarginCertificate { epsilon, a, b, r0_hint: r0, decisive });
        }
        r0 /= 2.0;
    }
    Err(Error::Inconclusive)
}
