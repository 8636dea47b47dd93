//! Interaction energy `E(mu) = 1/2 sum_ij m_i m_j V(x_i - x_j)` and the
//! associated aggregation velocity field `v = -(V' * mu)`.

use rayon::prelude::*;

use crate::measure::DiscreteMeasure;
use crate::potential::Potential;
use crate::scalar::{compensated_sum, Accumulator, Scalar};

/// Row-parallel evaluation kicks in above this many atoms. Row results are
/// reduced in index order, so the value does not depend on the schedule.
const PARALLEL_ROWS: usize = 256;

/// Energy, per-atom gradient and steady-state residual of one measure.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport<T> {
    pub energy: T,
    pub position_gradient: Vec<T>,
    pub steady_residual: T,
}

/// Energy, its position gradient and the steady-state residual at once.
pub fn report<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>) -> EnergyReport<T> {
    EnergyReport {
        energy: interaction_energy(pot, mu),
        position_gradient: position_gradient(pot, mu),
        steady_residual: steady_residual(pot, mu),
    }
}

/// `E(mu)`. The diagonal terms vanish since `V(0) = 0`; the off-diagonal
/// pairs are summed once each with compensation.
pub fn interaction_energy<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>) -> T {
    let atoms = mu.atoms();
    let row = |i: usize| {
        let xi = atoms[i].position;
        let mut acc = Accumulator::new();
        for b in &atoms[i + 1..] {
            acc.add(b.mass * pot.value(b.position - xi));
        }
        atoms[i].mass * acc.value()
    };
    let rows: Vec<T> = if atoms.len() >= PARALLEL_ROWS {
        (0..atoms.len()).into_par_iter().map(row).collect()
    } else {
        (0..atoms.len()).map(row).collect()
    };
    compensated_sum(rows)
}

/// Velocity of the aggregation equation at `x`: `-sum_j m_j V'(x - x_j)`.
pub fn velocity_field<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>, x: T) -> T {
    -compensated_sum(mu.atoms().iter().map(|a| a.mass * pot.slope(x - a.position)))
}

/// Velocities at every atom.
pub fn atom_velocities<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>) -> Vec<T> {
    velocities_at(pot, mu.atoms().iter().map(|a| a.position).collect::<Vec<_>>().as_slice(), &mu.masses())
}

/// Velocities for raw position/mass arrays (positions need not be sorted).
pub(crate) fn velocities_at<T: Scalar>(pot: &Potential<T>, positions: &[T], masses: &[T]) -> Vec<T> {
    let n = positions.len();
    let mut acc = vec![Accumulator::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let s = pot.slope(positions[i] - positions[j]);
            // V' is odd: atom j feels the opposite force.
            acc[i].add(-masses[j] * s);
            acc[j].add(masses[i] * s);
        }
    }
    acc.iter().map(Accumulator::value).collect()
}

/// Energy for raw position/mass arrays.
pub(crate) fn energy_at<T: Scalar>(pot: &Potential<T>, positions: &[T], masses: &[T]) -> T {
    let mut acc = Accumulator::new();
    for i in 0..positions.len() {
        let mut row = Accumulator::new();
        for j in i + 1..positions.len() {
            row.add(masses[j] * pot.value(positions[j] - positions[i]));
        }
        acc.add(masses[i] * row.value());
    }
    acc.value()
}

/// `max_i |(V' * mu)(x_i)|`; zero exactly at discrete steady states.
pub fn steady_residual<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>) -> T {
    atom_velocities(pot, mu).into_iter().map(T::abs).fold(T::zero(), T::max)
}

/// `dE/dx_i = m_i sum_j m_j V'(x_i - x_j) = -m_i v(x_i)`.
pub fn position_gradient<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>) -> Vec<T> {
    atom_velocities(pot, mu).into_iter().zip(mu.atoms()).map(|(v, a)| -a.mass * v).collect()
}

/// `dE/dm_i = sum_j m_j V(x_i - x_j)` (energy as a quadratic form in the masses).
pub(crate) fn mass_gradient_at<T: Scalar>(pot: &Potential<T>, positions: &[T], masses: &[T]) -> Vec<T> {
    positions
        .iter()
        .map(|&xi| compensated_sum(positions.iter().zip(masses).map(|(&xj, &mj)| mj * pot.value(xi - xj))))
        .collect()
}
