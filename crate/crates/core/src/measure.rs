//! Finitely supported probability measures on the real line.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{compensated_sum, Accumulator, Scalar};

/// Positions closer than this are coalesced on construction.
pub const CONSTRUCTION_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom<T> {
    pub position: T,
    pub mass: T,
}

/// A probability measure `sum_i m_i delta_{x_i}`.
///
/// Positions are strictly increasing, masses positive, total mass one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<T> {
    atoms: Vec<Atom<T>>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    /// Builds a measure from unsorted `(position, mass)` pairs.
    ///
    /// Zero masses are dropped, positions within `1e-12` are merged at their
    /// mass-weighted mean, and the result is normalized to total mass one.
    pub fn from_atoms<I: IntoIterator<Item = (T, T)>>(pairs: I) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut any = false;
        for (position, mass) in pairs {
            any = true;
            if !position.is_finite() || !mass.is_finite() {
                return Err(Error::NonFinite("atom position or mass"));
            }
            if mass < T::zero() {
                return Err(invalid("atom masses must be non-negative"));
            }
            if mass > T::zero() {
                atoms.push(Atom { position, mass });
            }
        }
        if !any {
            return Err(Error::EmptyMeasure);
        }
        if atoms.is_empty() {
            return Err(Error::ZeroMass);
        }
        atoms.sort_by(|a, b| a.position.partial_cmp(&b.position).unwrap_or(Ordering::Equal));
        let mut atoms = coalesce(atoms, T::of(CONSTRUCTION_MERGE_TOL));
        normalize(&mut atoms);
        Ok(Self { atoms })
    }

    /// `m delta_0 + (1 - m) delta_1`.
    pub fn two_dirac(m: T) -> Result<Self> {
        if !(m > T::zero() && m < T::one()) {
            return Err(invalid("two-Dirac mass must lie in (0, 1)"));
        }
        Ok(Self { atoms: vec![Atom { position: T::zero(), mass: m }, Atom { position: T::one(), mass: T::one() - m }] })
    }

    /// `delta_x`.
    pub fn dirac(x: T) -> Result<Self> {
        Self::from_atoms([(x, T::one())])
    }

    /// Trusted constructor for sorted, distinct, positive atoms summing to one.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<Atom<T>>) -> Self {
        debug_assert!(!atoms.is_empty());
        debug_assert!(atoms.windows(2).all(|w| w[0].position < w[1].position));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> Vec<T> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn masses(&self) -> Vec<T> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn total_mass(&self) -> T {
        compensated_sum(self.atoms.iter().map(|a| a.mass))
    }

    /// Center of mass.
    pub fn mean(&self) -> T {
        compensated_sum(self.atoms.iter().map(|a| a.mass * a.position))
    }

    /// Largest minus smallest support point.
    pub fn diameter(&self) -> T {
        self.atoms[self.atoms.len() - 1].position - self.atoms[0].position
    }

    /// Pushes the measure forward under `x -> x + t`.
    pub fn translate(&self, t: T) -> Self {
        Self { atoms: self.atoms.iter().map(|a| Atom { position: a.position + t, mass: a.mass }).collect() }
    }

    /// Pushes the measure forward under `x -> -x`.
    pub fn reflect(&self) -> Self {
        Self { atoms: self.atoms.iter().rev().map(|a| Atom { position: -a.position, mass: a.mass }).collect() }
    }

    /// Representative modulo translation and reflection.
    ///
    /// The leftmost atom is moved to 0; of the result and its mirror image
    /// `x -> diameter - x` the lexicographically smaller `(position, mass)`
    /// list is returned. Entries within `1e-12` compare equal, and a
    /// measure equal to its mirror keeps its own orientation.
    pub fn canonicalize(&self) -> Self {
        let shift = self.atoms[0].position;
        let direct: Vec<Atom<T>> =
            self.atoms.iter().map(|a| Atom { position: a.position - shift, mass: a.mass }).collect();
        let diam = direct[direct.len() - 1].position;
        let mirrored: Vec<Atom<T>> =
            direct.iter().rev().map(|a| Atom { position: diam - a.position, mass: a.mass }).collect();
        let tol = T::tol(1e-12);
        if lexicographic(&mirrored, &direct, tol) == Ordering::Less {
            Self { atoms: mirrored }
        } else {
            Self { atoms: direct }
        }
    }

    /// Replaces every chain of atoms with consecutive gaps `<= tol` by one
    /// atom at the chain's mass-weighted mean.
    pub fn merge_atoms(&self, tol: T) -> Self {
        Self { atoms: coalesce(self.atoms.clone(), tol.max(T::zero())) }
    }

    /// Smallest support point `x` with `F(x) >= u`.
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(invalid("quantile level must lie in (0, 1)"));
        }
        let mut acc = Accumulator::new();
        for a in &self.atoms {
            acc.add(a.mass);
            if acc.value() >= u {
                return Ok(a.position);
            }
        }
        Ok(self.atoms[self.atoms.len() - 1].position)
    }

    /// Cumulative masses `F(x_i)`, last entry forced to one.
    pub fn cdf(&self) -> Vec<T> {
        let mut acc = Accumulator::new();
        let mut out: Vec<T> = self
            .atoms
            .iter()
            .map(|a| {
                acc.add(a.mass);
                acc.value()
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = T::one();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MeasureFile::from(self)).expect("measure serializes")
    }

    /// Reads `{"atoms": [[x, m], ...]}`; atom order is irrelevant.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(s).map_err(|e| invalid(format!("measure JSON: {e}")))?;
        file.to_measure()
    }
}

fn lexicographic<T: Scalar>(a: &[Atom<T>], b: &[Atom<T>], tol: T) -> Ordering {
    let cmp = |x: T, y: T| {
        if (x - y).abs() <= tol {
            Ordering::Equal
        } else if x < y {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    };
    for (x, y) in a.iter().zip(b) {
        let o = cmp(x.position, y.position).then(cmp(x.mass, y.mass));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn coalesce<T: Scalar>(sorted: Vec<Atom<T>>, tol: T) -> Vec<Atom<T>> {
    let mut out: Vec<Atom<T>> = Vec::with_capacity(sorted.len());
    let mut group: Vec<Atom<T>> = Vec::new();
    let flush = |group: &mut Vec<Atom<T>>, out: &mut Vec<Atom<T>>| {
        if group.len() == 1 {
            out.push(group[0]);
        } else if !group.is_empty() {
            let mass = compensated_sum(group.iter().map(|a| a.mass));
            let moment = compensated_sum(group.iter().map(|a| a.mass * a.position));
            let lo = group[0].position;
            let hi = group[group.len() - 1].position;
            let position = (moment / mass).max(lo).min(hi);
            out.push(Atom { position, mass });
        }
        group.clear();
    };
    for atom in sorted {
        if let Some(last) = group.last() {
            if atom.position - last.position > tol {
                flush(&mut group, &mut out);
            }
        }
        group.push(atom);
    }
    flush(&mut group, &mut out);
    // Weighted means of neighbouring groups can collide only when a group
    // straddles a gap of exactly `tol`; keep positions strictly increasing.
    out.dedup_by(|b, a| {
        if b.position <= a.position {
            a.mass = a.mass + b.mass;
            true
        } else {
            false
        }
    });
    out
}

fn normalize<T: Scalar>(atoms: &mut [Atom<T>]) {
    let total = compensated_sum(atoms.iter().map(|a| a.mass));
    for a in atoms.iter_mut() {
        a.mass = a.mass / total;
    }
}

/// JSON layout of a measure: `{"atoms": [[x, m], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeasureFile {
    pub atoms: Vec<(f64, f64)>,
}

impl MeasureFile {
    pub fn to_measure<T: Scalar>(&self) -> Result<DiscreteMeasure<T>> {
        DiscreteMeasure::from_atoms(self.atoms.iter().map(|&(x, m)| (T::of(x), T::of(m))))
    }
}

impl<T: Scalar> From<&DiscreteMeasure<T>> for MeasureFile {
    fn from(mu: &DiscreteMeasure<T>) -> Self {
        Self { atoms: mu.atoms.iter().map(|a| (a.position.as_f64(), a.mass.as_f64())).collect() }
    }
}
