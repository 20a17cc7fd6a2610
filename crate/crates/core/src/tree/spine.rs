use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::label::ParticleLabel;
use super::marked::{MarkedTree, MotionState, ParticleRecord};
use crate::error::{Error, Result};

/// Lines of descent followed by `k` marks.
///
/// Mark `i` is stored as the label of the particle that terminates its line:
/// the sequence of child indices chosen at each branch event on the way down.
/// A line ends either at a particle alive at the horizon or at a particle that
/// died childless, where the mark stays in the graveyard.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpineAssignment {
    terminals: Vec<ParticleLabel>,
}

impl SpineAssignment {
    pub fn new(terminals: Vec<ParticleLabel>) -> Result<Self> {
        if terminals.is_empty() {
            return Err(Error::InconsistentSpines("need at least one mark".into()));
        }
        Ok(SpineAssignment { terminals })
    }

    pub fn k(&self) -> usize {
        self.terminals.len()
    }

    pub fn terminals(&self) -> &[ParticleLabel] {
        &self.terminals
    }

    /// Checks every line ends at a terminal particle of `tree`.
    pub fn validate(&self, tree: &MarkedTree) -> Result<Vec<usize>> {
        self.terminals
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let idx = tree.index_of(label).ok_or_else(|| {
                    Error::InconsistentSpines(format!("mark {} sits on missing particle {label}", i + 1))
                })?;
                if !tree.is_terminal(idx) {
                    return Err(Error::InconsistentSpines(format!(
                        "mark {} stops at {label}, which has children",
                        i + 1
                    )));
                }
                Ok(idx)
            })
            .collect()
    }
}

/// The particles that have carried at least one of `k` marks up to `time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonRealization {
    time: f64,
    nodes: Vec<ParticleRecord>,
    mark_counts: Vec<u32>,
    carriers: Vec<ParticleLabel>,
    split_times: Vec<Vec<f64>>,
}

impl SkeletonRealization {
    /// Builds a skeleton from its nodes (parents before children) and the
    /// particle carrying each mark at `time`. Mark counts and split times are
    /// derived from the labels.
    pub fn from_nodes(time: f64, nodes: Vec<ParticleRecord>, carriers: Vec<ParticleLabel>) -> Result<Self> {
        let mark_counts: Vec<u32> = nodes
            .iter()
            .map(|n| carriers.iter().filter(|c| n.label.is_ancestor_of(c)).count() as u32)
            .collect();
        if let Some(pos) = mark_counts.iter().position(|&d| d == 0) {
            return Err(Error::InconsistentSpines(format!(
                "skeleton node {} carries no mark",
                nodes[pos].label
            )));
        }
        for c in &carriers {
            if !nodes.iter().any(|n| &n.label == c) {
                return Err(Error::InconsistentSpines(format!("carrier {c} is not a skeleton node")));
            }
        }
        let k = carriers.len();
        let mut split_times = vec![vec![f64::INFINITY; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                if carriers[i] != carriers[j] {
                    let mrca = carriers[i].common_ancestor(&carriers[j]);
                    let node = nodes.iter().find(|n| n.label == mrca).ok_or_else(|| {
                        Error::InconsistentSpines(format!("ancestor {mrca} missing from skeleton"))
                    })?;
                    split_times[i][j] = node.death;
                    split_times[j][i] = node.death;
                }
            }
        }
        Ok(SkeletonRealization {
            time,
            nodes,
            mark_counts,
            carriers,
            split_times,
        })
    }

    pub fn k(&self) -> usize {
        self.carriers.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn nodes(&self) -> &[ParticleRecord] {
        &self.nodes
    }

    pub fn mark_counts(&self) -> &[u32] {
        &self.mark_counts
    }

    pub fn node(&self, label: &ParticleLabel) -> Option<(&ParticleRecord, u32)> {
        self.nodes
            .iter()
            .position(|n| &n.label == label)
            .map(|i| (&self.nodes[i], self.mark_counts[i]))
    }

    /// `D(v)`; zero for particles outside the skeleton.
    pub fn mark_count(&self, label: &ParticleLabel) -> u32 {
        self.node(label).map_or(0, |(_, d)| d)
    }

    /// The particle carrying each mark at the skeleton time.
    pub fn carriers(&self) -> &[ParticleLabel] {
        &self.carriers
    }

    /// `T(i, j)` for zero-based marks; `+inf` if they never separated.
    pub fn split_time(&self, i: usize, j: usize) -> f64 {
        self.split_times[i][j]
    }

    pub fn split_times(&self) -> &[Vec<f64>] {
        &self.split_times
    }

    /// Spine states at the skeleton time, `None` for marks in the graveyard.
    pub fn spine_states(&self) -> Result<Vec<Option<MotionState>>> {
        self.carriers
            .iter()
            .map(|c| {
                let (rec, _) = self.node(c).expect("carrier is a node");
                if rec.in_graveyard_at(self.time) {
                    Ok(None)
                } else {
                    rec.state_at(self.time).map(Some)
                }
            })
            .collect()
    }

    /// Total marks held at time `s` by skeleton particles alive at `s` or
    /// resting in the graveyard. Equals `k` for every `s` up to the skeleton time.
    pub fn marks_held_at(&self, s: f64) -> u32 {
        self.nodes
            .iter()
            .zip(&self.mark_counts)
            .filter(|(n, _)| n.is_alive_at(s) || n.in_graveyard_at(s))
            .map(|(_, d)| *d)
            .sum()
    }

    /// Nodes holding marks at `s`.
    pub fn holders_at(&self, s: f64) -> Vec<&ParticleRecord> {
        self.nodes
            .iter()
            .filter(|n| n.is_alive_at(s) || n.in_graveyard_at(s))
            .collect()
    }
}

/// Restricts a tree with spines to the skeleton at time `t`.
pub fn extract_skeleton(tree: &MarkedTree, spines: &SpineAssignment, t: f64) -> Result<SkeletonRealization> {
    tree.check_time(t)?;
    let terminals = spines.validate(tree)?;
    let mut carriers = Vec::with_capacity(terminals.len());
    let mut members: BTreeMap<usize, ()> = BTreeMap::new();
    for &term in &terminals {
        let holder = tree.holder_at(term, t).ok_or_else(|| {
            Error::InconsistentSpines(format!("no particle holds the line to {} at {t}", tree.record(term).label))
        })?;
        carriers.push(tree.record(holder).label.clone());
        for a in tree.lineage(holder) {
            members.insert(a, ());
        }
    }
    // Ascending generation keeps parents ahead of children.
    let mut nodes: Vec<ParticleRecord> = members.keys().map(|&i| tree.record(i).clone()).collect();
    nodes.sort_by(|a, b| {
        a.label
            .generation()
            .cmp(&b.label.generation())
            .then_with(|| a.label.cmp(&b.label))
    });
    SkeletonRealization::from_nodes(t, nodes, carriers)
}

/// Conditional probability, given the tree, that mark `i` sits on `tuple[i]` at `t`.
///
/// Each strict ancestor `v` contributes `A_v^{-D(v)}` where `D(v)` counts the
/// tuple entries descending from `v`.
pub fn spine_probability(tree: &MarkedTree, tuple: &[ParticleLabel], t: f64) -> Result<f64> {
    tree.check_time(t)?;
    let mut counts: BTreeMap<usize, i32> = BTreeMap::new();
    for label in tuple {
        let idx = tree
            .index_of(label)
            .ok_or_else(|| Error::UnknownParticle(label.to_string()))?;
        let rec = tree.record(idx);
        if !(rec.is_alive_at(t) || rec.in_graveyard_at(t)) {
            return Err(Error::InconsistentSpines(format!(
                "{label} neither alive nor in the graveyard at {t}"
            )));
        }
        for a in tree.lineage(idx).skip(1) {
            *counts.entry(a).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(v, d)| {
            let a = tree.record(v).children.expect("strict ancestor has offspring") as f64;
            a.powi(-d)
        })
        .product())
}

/// Every particle a mark can occupy at `t`: alive particles and graveyard particles.
pub fn occupiable_at(tree: &MarkedTree, t: f64) -> Result<Vec<ParticleLabel>> {
    let mut out = tree.alive_at(t)?;
    out.extend(
        tree.graveyard_indices(t)?
            .into_iter()
            .map(|i| tree.record(i).label.clone()),
    );
    Ok(out)
}

/// All ordered `k`-tuples drawn from `items` (with repetition).
pub fn for_each_tuple<T, F: FnMut(&[&T])>(items: &[T], k: usize, mut f: F) {
    if items.is_empty() {
        if k == 0 {
            f(&[]);
        }
        return;
    }
    let mut odometer = vec![0usize; k];
    let mut buf: Vec<&T> = vec![&items[0]; k];
    loop {
        for (slot, &i) in buf.iter_mut().zip(&odometer) {
            *slot = &items[i];
        }
        f(&buf);
        let mut pos = 0;
        loop {
            if pos == k {
                return;
            }
            odometer[pos] += 1;
            if odometer[pos] < items.len() {
                break;
            }
            odometer[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::marked::fixtures::*;

    fn l(p: &[u32]) -> ParticleLabel {
        ParticleLabel::from_path(p.to_vec()).unwrap()
    }

    #[test]
    fn single_mark_is_a_line() {
        let tree = uneven();
        let spines = SpineAssignment::new(vec![l(&[1, 2])]).unwrap();
        let sk = extract_skeleton(&tree, &spines, 1.0).unwrap();
        let got: Vec<_> = sk.nodes().iter().map(|n| n.label.clone()).collect();
        assert_eq!(got, vec![l(&[]), l(&[1]), l(&[1, 2])]);
        assert!(sk.mark_counts().iter().all(|&d| d == 1));
        assert_eq!(sk.split_time(0, 0), f64::INFINITY);
    }

    #[test]
    fn two_marks_together() {
        let tree = one_binary_branch();
        let spines = SpineAssignment::new(vec![l(&[1]), l(&[1])]).unwrap();
        let sk = extract_skeleton(&tree, &spines, 1.0).unwrap();
        assert_eq!(sk.nodes().len(), 2);
        assert_eq!(sk.mark_count(&l(&[])), 2);
        assert_eq!(sk.mark_count(&l(&[1])), 2);
        assert_eq!(sk.split_time(0, 1), f64::INFINITY);
    }

    #[test]
    fn two_marks_split() {
        let tree = one_binary_branch();
        let spines = SpineAssignment::new(vec![l(&[1]), l(&[2])]).unwrap();
        let sk = extract_skeleton(&tree, &spines, 1.0).unwrap();
        assert_eq!(sk.nodes().len(), 3);
        assert_eq!(sk.mark_count(&l(&[])), 2);
        assert_eq!(sk.mark_count(&l(&[1])), 1);
        assert_eq!(sk.mark_count(&l(&[2])), 1);
        assert_eq!(sk.split_time(0, 1), 0.3);
        assert_eq!(sk.split_time(1, 0), 0.3);
        assert_eq!(sk.split_time(1, 1), f64::INFINITY);
    }

    #[test]
    fn skeleton_before_the_split() {
        let tree = one_binary_branch();
        let spines = SpineAssignment::new(vec![l(&[1]), l(&[2])]).unwrap();
        let sk = extract_skeleton(&tree, &spines, 0.2).unwrap();
        assert_eq!(sk.nodes().len(), 1);
        assert_eq!(sk.carriers(), &[l(&[]), l(&[])]);
        assert_eq!(sk.split_time(0, 1), f64::INFINITY);
    }

    #[test]
    fn marks_are_conserved_through_the_graveyard() {
        let tree = uneven();
        let spines = SpineAssignment::new(vec![l(&[2]), l(&[1, 1]), l(&[1, 1])]).unwrap();
        let sk = extract_skeleton(&tree, &spines, 1.0).unwrap();
        for s in [0.0, 0.29, 0.3, 0.5, 0.7, 0.8, 0.95, 1.0] {
            assert_eq!(sk.marks_held_at(s), 3, "s = {s}");
        }
        let states = sk.spine_states().unwrap();
        assert!(states[0].is_none());
        assert!(states[1].is_some());
    }

    #[test]
    fn rejects_mark_on_missing_child() {
        let tree = one_binary_branch();
        let spines = SpineAssignment::new(vec![l(&[3])]).unwrap();
        assert!(matches!(
            extract_skeleton(&tree, &spines, 1.0),
            Err(Error::InconsistentSpines(_))
        ));
        let inner = SpineAssignment::new(vec![l(&[])]).unwrap();
        assert!(extract_skeleton(&tree, &inner, 1.0).is_err());
    }

    #[test]
    fn spine_probability_examples() {
        let lone = MarkedTree::from_records(vec![rec(&[], 0.0, f64::INFINITY, None)], 1.0, 0.0).unwrap();
        assert_eq!(spine_probability(&lone, &[l(&[]), l(&[])], 0.5).unwrap(), 1.0);

        let tree = one_binary_branch();
        assert_eq!(spine_probability(&tree, &[l(&[1])], 1.0).unwrap(), 0.5);
        assert_eq!(spine_probability(&tree, &[l(&[1]), l(&[2])], 1.0).unwrap(), 0.25);
        assert!(matches!(
            spine_probability(&tree, &[l(&[4])], 1.0),
            Err(Error::UnknownParticle(_))
        ));
    }

    #[test]
    fn spine_probability_sums_to_one() {
        let tree = uneven();
        for k in 1..=3 {
            for t in [0.1, 0.5, 0.7, 0.9, 1.0] {
                let slots = occupiable_at(&tree, t).unwrap();
                let mut total = 0.0;
                let mut err = None;
                for_each_tuple(&slots, k, |tuple| {
                    let owned: Vec<_> = tuple.iter().map(|x| (*x).clone()).collect();
                    match spine_probability(&tree, &owned, t) {
                        Ok(p) => total += p,
                        Err(e) => err = Some(e),
                    }
                });
                assert!(err.is_none());
                assert!((total - 1.0).abs() < 1e-12, "k={k} t={t} total={total}");
            }
        }
    }

    #[test]
    fn tuples_enumerate_all() {
        let mut n = 0;
        for_each_tuple(&[1, 2, 3], 2, |_| n += 1);
        assert_eq!(n, 9);
        let mut m = 0;
        for_each_tuple::<i32, _>(&[], 2, |_| m += 1);
        assert_eq!(m, 0);
    }
}
