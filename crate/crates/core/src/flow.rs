//! Particle integration of the aggregation equation.
//!
//! Atoms move with the velocity field `v = -(V' * mu)` while keeping their
//! masses. Atoms that come within [`FLOW_MERGE_TOL`] of each other are fused
//! at their center of mass, which conserves total mass and momentum.

use std::io::Write;

use serde::Serialize;

use crate::energy::{interaction_energy, steady_residual, velocities_at};
use crate::error::{invalid, Error, Result};
use crate::measure::{Atom, DiscreteMeasure, MeasureFile};
use crate::potential::Potential;
use crate::scalar::Scalar;

pub const FLOW_MERGE_TOL: f64 = 1e-9;

/// Why [`simulate`] stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    ResidualBelowTol,
    MaxTime,
    MergeCollapse,
}

#[derive(Clone, Debug)]
pub struct FlowOptions<T> {
    pub dt: T,
    pub max_time: T,
    pub residual_tol: T,
    /// Record a snapshot every this many steps (the initial and final states
    /// are always recorded).
    pub snapshot_every: usize,
}

impl<T: Scalar> FlowOptions<T> {
    /// Defaults with `dt = 1e-3 * min(1, 1 / V''(R))`.
    pub fn for_potential(pot: &Potential<T>) -> Self {
        Self { dt: default_dt(pot), max_time: T::of(100.0), residual_tol: T::of(1e-10), snapshot_every: 100 }
    }
}

pub fn default_dt<T: Scalar>(pot: &Potential<T>) -> T {
    let curvature = pot.eval(pot.radii().big_r, 2).unwrap_or(T::one());
    T::of(1e-3) * T::one().min(curvature.recip())
}

/// A sampled solution of the flow.
#[derive(Clone, Debug)]
pub struct FlowTrajectory<T> {
    pub snapshots: Vec<(T, DiscreteMeasure<T>)>,
    pub energies: Vec<T>,
    pub terminated: Termination,
    pub steps: usize,
    /// Number of atom fusions performed.
    pub merges: usize,
    /// Largest single-step energy increase observed (zero or negative when
    /// the energy decayed monotonically).
    pub max_step_increase: T,
    pub final_residual: T,
}

impl<T: Scalar> FlowTrajectory<T> {
    pub fn final_measure(&self) -> &DiscreteMeasure<T> {
        &self.snapshots.last().expect("trajectory has an initial snapshot").1
    }

    /// CSV with columns `time,energy,atom_count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,energy,atom_count")?;
        for ((t, mu), e) in self.snapshots.iter().zip(&self.energies) {
            writeln!(out, "{},{},{}", t.as_f64(), e.as_f64(), mu.len())?;
        }
        Ok(())
    }

    /// One JSON object per snapshot: `{"time": t, "atoms": [[x, m], ...]}`.
    pub fn write_snapshots_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line {
            time: f64,
            atoms: Vec<(f64, f64)>,
        }
        for (t, mu) in &self.snapshots {
            let line = Line { time: t.as_f64(), atoms: MeasureFile::from(mu).atoms };
            writeln!(out, "{}", serde_json::to_string(&line).expect("snapshot serializes"))?;
        }
        Ok(())
    }
}

fn add_scaled<T: Scalar>(x: &[T], k: &[T], h: T) -> Vec<T> {
    x.iter().zip(k).map(|(&a, &b)| a + h * b).collect()
}

/// One classical Runge-Kutta step of `x_i' = v(x_i)` followed by merging.
pub fn step<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>, dt: T) -> Result<DiscreteMeasure<T>> {
    Ok(step_counted(pot, mu, dt)?.0)
}

fn step_counted<T: Scalar>(pot: &Potential<T>, mu: &DiscreteMeasure<T>, dt: T) -> Result<(DiscreteMeasure<T>, usize)> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(invalid("time step must be positive"));
    }
    let x = mu.positions();
    let m = mu.masses();
    let two = T::of(2.0);
    let half = dt / two;
    let k1 = velocities_at(pot, &x, &m);
    let k2 = velocities_at(pot, &add_scaled(&x, &k1, half), &m);
    let k3 = velocities_at(pot, &add_scaled(&x, &k2, half), &m);
    let k4 = velocities_at(pot, &add_scaled(&x, &k3, dt), &m);
    let sixth = dt / T::of(6.0);
    let mut atoms: Vec<Atom<T>> = (0..x.len())
        .map(|i| Atom { position: x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]), mass: m[i] })
        .collect();
    if atoms.iter().any(|a| !a.position.is_finite()) {
        return Err(Error::BlowUp { time: f64::NAN });
    }
    // Collisions can in principle reorder atoms within one step.
    if atoms.windows(2).any(|w| w[0].position >= w[1].position) {
        atoms.sort_by(|a, b| a.position.partial_cmp(&b.position).expect("finite"));
        let merged = DiscreteMeasure::from_atoms(atoms.iter().map(|a| (a.position, a.mass)))?;
        let out = merged.merge_atoms(T::of(FLOW_MERGE_TOL));
        let fused = mu.len() - out.len();
        return Ok((out, fused));
    }
    let moved = DiscreteMeasure::from_sorted_unchecked(atoms);
    let out = moved.merge_atoms(T::of(FLOW_MERGE_TOL));
    let fused = moved.len() - out.len();
    Ok((out, fused))
}

/// Integrates the flow from `mu0` until the steady-state residual drops to
/// `residual_tol`, the time reaches `max_time`, or a single atom remains.
pub fn simulate<T: Scalar>(
    pot: &Potential<T>,
    mu0: &DiscreteMeasure<T>,
    opts: &FlowOptions<T>,
) -> Result<FlowTrajectory<T>> {
    if !(opts.dt > T::zero()) || !(opts.max_time > T::zero()) || !(opts.residual_tol > T::zero()) {
        return Err(invalid("dt, max_time and residual_tol must be positive"));
    }
    let every = opts.snapshot_every.max(1);
    let mut mu = mu0.clone();
    let mut time = T::zero();
    let mut energy = interaction_energy(pot, &mu);
    let mut traj = FlowTrajectory {
        snapshots: vec![(time, mu.clone())],
        energies: vec![energy],
        terminated: Termination::MaxTime,
        steps: 0,
        merges: 0,
        max_step_increase: T::neg_infinity(),
        final_residual: steady_residual(pot, &mu),
    };
    loop {
        let residual = steady_residual(pot, &mu);
        traj.final_residual = residual;
        if mu.len() == 1 {
            traj.terminated = Termination::MergeCollapse;
            break;
        }
        if residual <= opts.residual_tol {
            traj.terminated = Termination::ResidualBelowTol;
            break;
        }
        if time >= opts.max_time {
            traj.terminated = Termination::MaxTime;
            break;
        }
        let (next, fused) = step_counted(pot, &mu, opts.dt).map_err(|e| match e {
            Error::BlowUp { .. } => Error::BlowUp { time: time.as_f64() },
            other => other,
        })?;
        traj.steps += 1;
        traj.merges += fused;
        time = T::of(traj.steps as f64) * opts.dt;
        let next_energy = interaction_energy(pot, &next);
        traj.max_step_increase = traj.max_step_increase.max(next_energy - energy);
        energy = next_energy;
        mu = next;
        if traj.steps % every == 0 {
            traj.snapshots.push((time, mu.clone()));
            traj.energies.push(energy);
        }
    }
    if traj.snapshots.last().map(|(t, _)| *t) != Some(time) {
        traj.snapshots.push((time, mu.clone()));
        traj.energies.push(energy);
    }
    if traj.steps == 0 {
        traj.max_step_increase = T::zero();
    }
    Ok(traj)
}
