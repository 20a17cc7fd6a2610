use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::label::ParticleLabel;
use crate::error::{Error, Result};

const TIME_EPS: f64 = 1e-12;

/// Position of a particle together with the value of the single-particle
/// martingale along its line of descent. `zeta == 0` means absorbed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub position: f64,
    pub zeta: f64,
}

impl MotionState {
    pub fn new(position: f64, zeta: f64) -> Self {
        MotionState { position, zeta }
    }

    pub fn is_absorbed(&self) -> bool {
        self.zeta <= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub time: f64,
    pub state: MotionState,
}

/// One particle of a marked tree.
///
/// `death` is `+inf` for particles still alive at the horizon, in which case
/// `children` is `None`. The path always starts at `birth`; it ends at the
/// death time, or at the horizon for survivors, and may carry recorded
/// interior points in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub label: ParticleLabel,
    pub birth: f64,
    pub death: f64,
    pub children: Option<u32>,
    pub path: Vec<PathPoint>,
}

impl ParticleRecord {
    pub fn is_alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }

    /// Died with no offspring; sits at the graveyard from `death` on.
    pub fn is_graveyard(&self) -> bool {
        self.children == Some(0)
    }

    pub fn in_graveyard_at(&self, t: f64) -> bool {
        self.is_graveyard() && self.death <= t
    }

    /// `sigma_u(t) = sigma_u ∧ t`.
    pub fn birth_until(&self, t: f64) -> f64 {
        self.birth.min(t)
    }

    /// `tau_u(t) = tau_u ∧ t`.
    pub fn death_until(&self, t: f64) -> f64 {
        self.death.min(t)
    }

    pub fn birth_state(&self) -> MotionState {
        self.path[0].state
    }

    pub fn last_state(&self) -> MotionState {
        self.path[self.path.len() - 1].state
    }

    /// State at `t`, which must be a recorded path time within the lifetime.
    pub fn state_at(&self, t: f64) -> Result<MotionState> {
        let tol = TIME_EPS * t.abs().max(1.0);
        let idx = self.path.partition_point(|p| p.time < t - tol);
        match self.path.get(idx) {
            Some(p) if (p.time - t).abs() <= tol => Ok(p.state),
            _ => Err(Error::PathNotRecorded {
                label: self.label.to_string(),
                t,
            }),
        }
    }

    /// Path points with times in `[birth, t]`.
    pub fn path_until(&self, t: f64) -> &[PathPoint] {
        let tol = TIME_EPS * t.abs().max(1.0);
        let end = self.path.partition_point(|p| p.time <= t + tol);
        &self.path[..end]
    }
}

/// A complete realization of the branching process up to a fixed horizon.
#[derive(Clone, Debug)]
pub struct MarkedTree {
    records: Vec<ParticleRecord>,
    index: HashMap<ParticleLabel, usize>,
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    horizon: f64,
    origin: f64,
}

impl MarkedTree {
    /// Assembles and validates a tree. Records may come in any order.
    pub fn from_records(records: Vec<ParticleRecord>, horizon: f64, origin: f64) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.label.clone(), i).is_some() {
                return Err(Error::MalformedTree(format!("duplicate label {}", r.label)));
            }
        }
        if !index.contains_key(&ParticleLabel::root()) {
            return Err(Error::MalformedTree("missing initial ancestor".into()));
        }

        let mut parents = vec![None; records.len()];
        let mut children = vec![Vec::new(); records.len()];
        for (i, r) in records.iter().enumerate() {
            if r.path.is_empty() {
                return Err(Error::MalformedTree(format!("{} has an empty path", r.label)));
            }
            if !(r.birth <= r.death) {
                return Err(Error::MalformedTree(format!(
                    "{} dies at {} before its birth at {}",
                    r.label, r.death, r.birth
                )));
            }
            if r.birth > horizon + TIME_EPS {
                return Err(Error::MalformedTree(format!("{} born after the horizon", r.label)));
            }
            match (r.death.is_finite(), r.children) {
                (true, None) => {
                    return Err(Error::MalformedTree(format!(
                        "{} died at {} with undecided offspring",
                        r.label, r.death
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::MalformedTree(format!(
                        "{} is alive at the horizon but has offspring",
                        r.label
                    )))
                }
                _ => {}
            }
            if let Some(parent) = r.label.parent() {
                let p = *index.get(&parent).ok_or_else(|| {
                    Error::MalformedTree(format!("{} has no parent in the tree", r.label))
                })?;
                let j = *r.label.path().last().unwrap();
                let a = records[p].children.unwrap_or(0);
                if j > a {
                    return Err(Error::MalformedTree(format!(
                        "{} exceeds its parent's {a} children",
                        r.label
                    )));
                }
                if (records[p].death - r.birth).abs() > TIME_EPS * r.birth.abs().max(1.0) {
                    return Err(Error::MalformedTree(format!(
                        "{} born at {} but parent died at {}",
                        r.label, r.birth, records[p].death
                    )));
                }
                parents[i] = Some(p);
            }
        }
        for (i, r) in records.iter().enumerate() {
            let a = r.children.unwrap_or(0);
            let mut kids = Vec::with_capacity(a as usize);
            for j in 1..=a {
                let child = index.get(&r.label.child(j)).ok_or_else(|| {
                    Error::MalformedTree(format!("{} is missing child {j}", r.label))
                })?;
                kids.push(*child);
            }
            children[i] = kids;
        }

        Ok(MarkedTree {
            records,
            index,
            parents,
            children,
            horizon,
            origin,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ParticleRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &ParticleRecord {
        &self.records[idx]
    }

    pub fn index_of(&self, label: &ParticleLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn get(&self, label: &ParticleLabel) -> Option<&ParticleRecord> {
        self.index_of(label).map(|i| &self.records[i])
    }

    pub fn root_index(&self) -> usize {
        self.index[&ParticleLabel::root()]
    }

    pub fn parent_of(&self, idx: usize) -> Option<usize> {
        self.parents[idx]
    }

    pub fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Indices of `idx` and all its ancestors, starting from `idx`.
    pub fn lineage(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(idx), move |&i| self.parents[i])
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.horizon + TIME_EPS * self.horizon.max(1.0) {
            return Err(Error::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Indices of particles alive at `t`, in record order.
    pub fn alive_indices(&self, t: f64) -> Result<Vec<usize>> {
        self.check_time(t)?;
        Ok(self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_alive_at(t))
            .map(|(i, _)| i)
            .collect())
    }

    /// `N(t)`: labels of particles alive at `t`. Graveyard particles are excluded.
    pub fn alive_at(&self, t: f64) -> Result<Vec<ParticleLabel>> {
        Ok(self
            .alive_indices(t)?
            .into_iter()
            .map(|i| self.records[i].label.clone())
            .collect())
    }

    /// Particles that died childless by time `t`.
    pub fn graveyard_indices(&self, t: f64) -> Result<Vec<usize>> {
        self.check_time(t)?;
        Ok(self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.in_graveyard_at(t))
            .map(|(i, _)| i)
            .collect())
    }

    /// Particles that terminate a line of descent: alive at the horizon or
    /// in the graveyard.
    pub fn is_terminal(&self, idx: usize) -> bool {
        let r = &self.records[idx];
        r.children.is_none() || r.is_graveyard()
    }

    /// The ancestor of `idx` (inclusive) occupying its line of descent at `t`:
    /// alive at `t`, or the line's graveyard particle if it died out by `t`.
    pub fn holder_at(&self, idx: usize, t: f64) -> Option<usize> {
        self.lineage(idx).find(|&i| {
            let r = &self.records[i];
            r.is_alive_at(t) || (r.in_graveyard_at(t) && i == idx)
        })
    }
}
