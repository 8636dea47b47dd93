//! Local and multistart minimization of the interaction energy over atomic
//! measures, and randomized probing of `d_inf` neighbourhoods.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{energy_at, interaction_energy, mass_gradient_at, velocities_at};
use crate::error::{invalid, Result};
use crate::measure::{DiscreteMeasure, MeasureFile};
use crate::potential::Potential;
use crate::rng;
use crate::scalar::{compensated_sum, Scalar};

/// Atoms closer than this are fused after every outer iteration.
pub const SEARCH_MERGE_TOL: f64 = 1e-9;
/// Masses below this are deleted after a simplex projection.
pub const MASS_FLOOR: f64 = 1e-10;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
/// Energy decrease below which a perturbation counts as a descent direction.
pub const DESCENT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SearchOptions<T> {
    /// Stop once every atom's velocity is below this.
    pub tol: T,
    /// With mass optimization, also require the projected mass gradient to
    /// be below this. Masses feed `d_inf` directly, so this is much tighter.
    pub mass_tol: T,
    pub max_iters: usize,
    pub optimize_masses: bool,
}

impl<T: Scalar> Default for SearchOptions<T> {
    fn default() -> Self {
        Self { tol: T::of(1e-9), mass_tol: T::tol(1e-13), max_iters: 20_000, optimize_masses: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult<T> {
    /// Canonicalized minimizer.
    pub minimizer: DiscreteMeasure<T>,
    pub energy: T,
    pub starts: usize,
    pub best_start_index: usize,
    /// Steady-state residual of the minimizer.
    pub residual: T,
    pub converged: bool,
    pub iterations: usize,
    /// Energy after every accepted iteration, starting with the initial energy.
    pub energy_history: Vec<T>,
}

/// JSON layout of a search result.
#[derive(Clone, Debug, Serialize)]
pub struct SearchReport {
    pub energy: f64,
    pub atoms: Vec<(f64, f64)>,
    pub residual: f64,
    pub converged: bool,
    pub starts: usize,
}

impl<T: Scalar> From<&SearchResult<T>> for SearchReport {
    fn from(r: &SearchResult<T>) -> Self {
        Self {
            energy: r.energy.as_f64(),
            atoms: MeasureFile::from(&r.minimizer).atoms,
            residual: r.residual.as_f64(),
            converged: r.converged,
            starts: r.starts,
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (k, &uk) in u.iter().enumerate() {
        cumsum = cumsum + uk;
        let t = (cumsum - T::one()) / T::of((k + 1) as f64);
        if uk - t > T::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

fn rebuild<T: Scalar>(positions: &[T], masses: &[T]) -> Result<DiscreteMeasure<T>> {
    let floor = T::of(MASS_FLOOR);
    let mu = DiscreteMeasure::from_atoms(
        positions.iter().zip(masses).filter(|(_, &m)| m >= floor).map(|(&x, &m)| (x, m)),
    )?;
    Ok(mu.merge_atoms(T::of(SEARCH_MERGE_TOL)))
}

/// Energy differences below this are indistinguishable from rounding.
fn rounding_noise<T: Scalar>(e0: T, e1: T) -> T {
    T::epsilon() * T::of(64.0) * e0.abs().max(e1.abs())
}

/// One projected-gradient step on the masses with an exact line search.
///
/// At fixed positions the energy is the quadratic form `m^T A m / 2` with
/// `A_ij = V(x_i - x_j)`, so along `d = P(m - g/L) - m` the optimal step in
/// `[0, 1]` is available in closed form (`L` bounds the spectral norm of
/// `A`). Returns `None` when `d` is not a descent direction.
fn mass_step<T: Scalar>(pot: &Potential<T>, x: &[T], m: &[T], g: &[T]) -> Option<Vec<T>> {
    let n = x.len();
    let a = |i: usize, j: usize| pot.value(x[i] - x[j]);
    let bound = (0..n)
        .map(|i| compensated_sum((0..n).map(|j| a(i, j).abs())))
        .fold(T::zero(), T::max)
        .max(T::epsilon());
    let target = project_to_simplex(&m.iter().zip(g).map(|(&mi, &gi)| mi - gi / bound).collect::<Vec<_>>());
    let d: Vec<T> = target.iter().zip(m).map(|(&t, &mi)| t - mi).collect();
    // d sums to zero only up to rounding; the tangential part of g is what counts
    let g_mean = compensated_sum(g.iter().copied()) / T::of(n as f64);
    let slope = compensated_sum(g.iter().zip(&d).map(|(&gi, &di)| (gi - g_mean) * di));
    if !(slope < T::zero()) {
        return None;
    }
    let curvature = compensated_sum((0..n).map(|i| d[i] * compensated_sum((0..n).map(|j| a(i, j) * d[j]))));
    let t = if curvature > T::zero() { (-slope / curvature).min(T::one()) } else { T::one() };
    Some(m.iter().zip(&d).map(|(&mi, &di)| (mi + t * di).max(T::zero())).collect())
}

fn mass_stationarity<T: Scalar>(masses: &[T], grad: &[T]) -> T {
    let trial: Vec<T> = masses.iter().zip(grad).map(|(&m, &g)| m - g).collect();
    project_to_simplex(&trial).iter().zip(masses).map(|(&p, &m)| (p - m).abs()).fold(T::zero(), T::max)
}

/// Descent on atom positions (and optionally masses) from `mu0`.
///
/// Positions follow the velocity field with an Armijo backtracking line
/// search (`c = 1e-4`, halving, at most 40 halvings); masses take projected
/// gradient steps on the simplex. Running out of iterations is not an
/// error: the best point is returned with `converged = false`.
pub fn local_minimize<T: Scalar>(
    pot: &Potential<T>,
    mu0: &DiscreteMeasure<T>,
    opts: &SearchOptions<T>,
) -> Result<SearchResult<T>> {
    if !(opts.tol > T::zero()) || !(opts.mass_tol > T::zero()) {
        return Err(invalid("search tolerance must be positive"));
    }
    let c = T::of(ARMIJO_C);
    let two = T::of(2.0);
    let alpha_max = T::of(1e3);
    let mut mu = mu0.merge_atoms(T::of(SEARCH_MERGE_TOL));
    let mut energy = interaction_energy(pot, &mu);
    let mut history = vec![energy];
    let mut alpha = T::one();
    let mut previous: Option<(Vec<T>, Vec<T>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let x = mu.positions();
        let m = mu.masses();
        let v = velocities_at(pot, &x, &m);
        let residual = v.iter().map(|a| a.abs()).fold(T::zero(), T::max);
        let mass_grad = opts.optimize_masses.then(|| mass_gradient_at(pot, &x, &m));
        let stationarity = mass_grad.as_ref().map_or(T::zero(), |g| mass_stationarity(&m, g));
        if residual <= opts.tol && stationarity <= opts.mass_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut x_new = x.clone();
        let mut moved = false;

        // position step along v (the gradient in the mass-weighted metric)
        if residual > T::zero() {
            let decrease = compensated_sum(m.iter().zip(&v).map(|(&mi, &vi)| mi * vi * vi));
            // Barzilai-Borwein trial step in the mass-weighted metric
            let bb = previous.as_ref().filter(|(px, _)| px.len() == x.len()).and_then(|(px, pv)| {
                let ss = compensated_sum((0..x.len()).map(|i| m[i] * (x[i] - px[i]) * (x[i] - px[i])));
                let sy = compensated_sum((0..x.len()).map(|i| m[i] * (x[i] - px[i]) * (pv[i] - v[i])));
                (sy > T::zero() && ss > T::zero()).then(|| ss / sy)
            });
            let mut a = bb.unwrap_or(alpha * two).min(alpha_max);
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<T> = x.iter().zip(&v).map(|(&xi, &vi)| xi + a * vi).collect();
                let e = energy_at(pot, &trial, &m);
                let noise = rounding_noise(energy, e);
                let accept = if c * a * decrease > noise {
                    e <= energy - c * a * decrease
                } else {
                    e <= energy + noise && {
                        // below energy resolution: require the slope at the trial point to still descend
                        let vt = velocities_at(pot, &trial, &m);
                        compensated_sum(m.iter().zip(vt.iter().zip(&v)).map(|(&mi, (&a1, &a0))| mi * a1 * a0)) >= T::zero()
                    }
                };
                if accept {
                    x_new = trial;
                    alpha = a;
                    moved = true;
                    break;
                }
                a = a / two;
            }
        }

        previous = Some((x.clone(), v.clone()));
        let mut m_new = m.clone();
        if let Some(g) = mass_grad.filter(|_| stationarity > T::zero()) {
            let g = if moved { mass_gradient_at(pot, &x_new, &m) } else { g };
            if let Some(next) = mass_step(pot, &x_new, &m, &g) {
                m_new = next;
                moved = true;
            }
        }

        if !moved {
            // line searches exhausted: rounding-limited, stop here
            break;
        }
        mu = rebuild(&x_new, &m_new)?;
        energy = interaction_energy(pot, &mu);
        history.push(energy);
    }
    let minimizer = mu.canonicalize();
    let energy = interaction_energy(pot, &minimizer);
    let residual = crate::energy::steady_residual(pot, &minimizer);
    Ok(SearchResult {
        minimizer,
        energy,
        starts: 1,
        best_start_index: 0,
        residual,
        converged,
        iterations,
        energy_history: history,
    })
}

/// Best of `n_starts` local minimizations (masses optimized) from
/// `n_atoms` equal-mass atoms placed uniformly at random in `[0, R]`.
///
/// Starts run in parallel; the lowest energy wins, ties going to the lowest
/// start index, so the result depends only on `seed`.
pub fn global_search<T: Scalar>(
    pot: &Potential<T>,
    n_atoms: usize,
    n_starts: usize,
    seed: u64,
    opts: &SearchOptions<T>,
) -> Result<SearchResult<T>> {
    if n_atoms == 0 || n_starts == 0 {
        return Err(invalid("need at least one atom and one start"));
    }
    let opts = SearchOptions { optimize_masses: true, ..opts.clone() };
    let big_r = pot.radii().big_r;
    let results: Vec<Result<SearchResult<T>>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let start = DiscreteMeasure::from_atoms((0..n_atoms).map(|_| (T::of(rng.gen::<f64>()) * big_r, T::one())))?;
            local_minimize(pot, &start, &opts)
        })
        .collect();
    let mut best: Option<(usize, SearchResult<T>)> = None;
    for (k, r) in results.into_iter().enumerate() {
        let r = r?;
        if best.as_ref().is_none_or(|(_, b)| r.energy < b.energy) {
            best = Some((k, r));
        }
    }
    let (k, mut r) = best.expect("at least one start");
    r.starts = n_starts;
    r.best_start_index = k;
    Ok(r)
}

/// Outcome of [`perturb_probe`].
#[derive(Clone, Debug)]
pub struct ProbeResult<T> {
    pub found_descent: bool,
    pub witness: Option<DiscreteMeasure<T>>,
    /// `min E(sample) - E(mu)` over all samples.
    pub delta: T,
    pub samples: usize,
}

/// Structured perturbations of one atom inside a `d_inf` ball of radius
/// `epsilon`: symmetric two-point splits and small mass leaks.
fn structured_perturbations<T: Scalar>(mu: &DiscreteMeasure<T>, epsilon: T) -> Vec<Vec<(T, T)>> {
    let atoms = mu.atoms();
    let mut out = Vec::new();
    let half = T::of(0.5);
    for i in 0..atoms.len() {
        let rest = || atoms.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, a)| (a.position, a.mass));
        let (xi, mi) = (atoms[i].position, atoms[i].mass);
        for k in 0..8 {
            let x = epsilon * T::of(0.5f64.powi(k));
            let mut split: Vec<(T, T)> = rest().collect();
            split.push((xi - x, mi * half));
            split.push((xi + x, mi * half));
            out.push(split);
            for alpha in [1.5, 2.0, 3.0] {
                let w = x.powf(T::of(alpha));
                if w >= mi {
                    continue;
                }
                for dir in [-T::one(), T::one()] {
                    let mut leak: Vec<(T, T)> = rest().collect();
                    leak.push((xi, mi - w));
                    leak.push((xi + dir * x, w));
                    out.push(leak);
                }
            }
        }
    }
    out
}

/// Searches the `d_inf` ball of radius `epsilon` around `mu` for a measure
/// of lower energy.
///
/// Every sample moves mass by at most `epsilon`: each atom is split into at
/// most three fragments, each displaced by at most `epsilon`, so the
/// fragment coupling certifies `d_inf <= epsilon`. Besides `n_samples`
/// random samples the probe always evaluates the structured split and leak
/// families. A witness is reported when the energy drops by more than
/// [`DESCENT_THRESHOLD`].
pub fn perturb_probe<T: Scalar>(
    pot: &Potential<T>,
    mu: &DiscreteMeasure<T>,
    epsilon: T,
    n_samples: usize,
    seed: u64,
) -> Result<ProbeResult<T>> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(invalid("epsilon must be positive"));
    }
    let base = interaction_energy(pot, mu);
    let eval = |pairs: &[(T, T)]| -> (T, Vec<(T, T)>) {
        let (x, m): (Vec<T>, Vec<T>) = pairs.iter().copied().unzip();
        (energy_at(pot, &x, &m) - base, pairs.to_vec())
    };
    let structured = structured_perturbations(mu, epsilon);
    let random: Vec<(T, Vec<(T, T)>)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream(seed, s as u64);
            let scale = epsilon * T::of(10f64.powf(-3.0 * rng.gen::<f64>()));
            let mut pairs = Vec::with_capacity(3 * mu.len());
            for a in mu.atoms() {
                let pieces = rng.gen_range(1..=3);
                let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen::<f64>()).collect();
                cuts.push(0.0);
                cuts.push(1.0);
                cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                for w in cuts.windows(2) {
                    let frac = T::of(w[1] - w[0]);
                    let shift = scale * T::of(rng.gen_range(-1.0..=1.0));
                    pairs.push((a.position + shift, a.mass * frac));
                }
            }
            eval(&pairs)
        })
        .collect();
    let samples = structured.len() + random.len();
    let mut best: Option<(T, Vec<(T, T)>)> = None;
    for (d, pairs) in structured.iter().map(|p| eval(p)).chain(random) {
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, pairs));
        }
    }
    let (delta, pairs) = best.expect("probe evaluates at least the structured families");
    let found = delta < -T::of(DESCENT_THRESHOLD);
    let witness = if found { Some(DiscreteMeasure::from_atoms(pairs)?) } else { None };
    Ok(ProbeResult { found_descent: found, witness, delta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let p = project_to_simplex::<f64>(&[0.5, 0.5]);
        assert_eq!(p, vec![0.5, 0.5]);
        let p = project_to_simplex::<f64>(&[2.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_to_simplex::<f64>(&[0.4, 0.4, 0.4]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn steady_start_is_returned_unchanged() {
        let pot = Potential::<f64>::new(4.0, 2.5).unwrap();
        let mu = DiscreteMeasure::two_dirac(0.3).unwrap();
        let r = local_minimize(&pot, &mu, &SearchOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.minimizer, mu.canonicalize());
    }

    #[test]
    fn two_atoms_relax_to_unit_gap() {
        let pot = Potential::<f64>::new(3.0, 2.0).unwrap();
        let mu = DiscreteMeasure::from_atoms([(0.0, 0.5), (0.5, 0.5)]).unwrap();
        let r = local_minimize(&pot, &mu, &SearchOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.minimizer.diameter() - 1.0).abs() < 1e-9);
        assert!((r.energy + 1.0 / 24.0).abs() < 1e-12);
        assert!(r.residual <= 1e-9);
        assert!(r.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let pot = Potential::<f64>::new(3.0, 2.0).unwrap();
        let mu = DiscreteMeasure::from_atoms([(0.0, 0.5), (0.3, 0.5)]).unwrap();
        let opts = SearchOptions { max_iters: 1, ..SearchOptions::default() };
        let r = local_minimize(&pot, &mu, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.energy < interaction_energy(&pot, &mu));
    }

    #[test]
    fn strict_minimum_has_no_descent() {
        let pot = Potential::<f64>::new(4.0, 3.0).unwrap();
        let mu = DiscreteMeasure::two_dirac(0.5).unwrap();
        let probe = perturb_probe(&pot, &mu, 1e-2, 500, 1).unwrap();
        assert!(!probe.found_descent);
        assert!(probe.witness.is_none());
        assert!(probe.delta.abs() <= 10.0 * 1e-4);
    }

    #[test]
    fn unbalanced_two_dirac_has_descent() {
        let pot = Potential::<f64>::new(4.0, 2.0).unwrap();
        let mu = DiscreteMeasure::two_dirac(0.9).unwrap();
        let probe = perturb_probe(&pot, &mu, 1e-2, 200, 1).unwrap();
        assert!(probe.found_descent);
        let w = probe.witness.unwrap();
        assert!(interaction_energy(&pot, &w) < interaction_energy(&pot, &mu) - 1e-12);
        assert!(crate::transport::d_inf(&w, &mu) <= 1e-2 + 1e-15);
    }
}
