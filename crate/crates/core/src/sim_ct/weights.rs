use super::ContinuousModel;
use crate::error::{Error, Result};
use crate::laws::BranchRate;
use crate::tree::{extract_skeleton, for_each_tuple, MarkedTree, ParticleLabel, PathPoint, SpineAssignment};
use crate::util::KahanSum;

/// `int_from^to R(X_s) ds` along a recorded path. Exact for constant `R`,
/// trapezoidal over the recorded points otherwise.
pub fn rate_integral(rate: &BranchRate, path: &[PathPoint], from: f64, to: f64) -> f64 {
    if let Some(r) = rate.constant_value() {
        return r * (to - from);
    }
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for p in path {
        if p.time < from {
            continue;
        }
        let t = p.time.min(to);
        let r = rate.eval(p.state.position);
        if let Some((t0, r0)) = prev {
            acc += 0.5 * (r0 + r) * (t - t0);
        }
        prev = Some((t, r));
        if p.time >= to {
            break;
        }
    }
    acc
}

/// Per-particle ingredients of the Gibbs weights at a fixed time: the
/// `zeta` ratio and the integrated branching rate over `[sigma_v(t), tau_v(t)]`.
pub struct TupleWeights<'a> {
    tree: &'a MarkedTree,
    t: f64,
    moments: Vec<f64>,
    ratio: Vec<f64>,
    rint: Vec<f64>,
    zeta_end: Vec<f64>,
    counts: Vec<u32>,
    touched: Vec<usize>,
}

impl<'a> TupleWeights<'a> {
    pub fn new(tree: &'a MarkedTree, model: &ContinuousModel, t: f64, k: usize) -> Result<Self> {
        tree.check_time(t)?;
        let n = tree.len();
        let mut ratio = vec![f64::NAN; n];
        let mut rint = vec![f64::NAN; n];
        let mut zeta_end = vec![f64::NAN; n];
        for (i, r) in tree.records().iter().enumerate() {
            if r.birth > t {
                continue;
            }
            let end = r.death_until(t);
            let z_end = if r.is_alive_at(t) {
                r.state_at(t)?.zeta
            } else if r.is_graveyard() {
                0.0
            } else {
                r.last_state().zeta
            };
            let z_start = r.birth_state().zeta;
            ratio[i] = if z_start > 0.0 { z_end / z_start } else { 0.0 };
            rint[i] = rate_integral(&model.rate, &r.path, r.birth, end);
            zeta_end[i] = z_end;
        }
        Ok(TupleWeights {
            tree,
            t,
            moments: (0..=k as u32).map(|j| model.law.moment(j)).collect(),
            ratio,
            rint,
            zeta_end,
            counts: vec![0; n],
            touched: Vec::new(),
        })
    }

    /// `1{zeta(u_i, t) > 0 for all i} prod_{v in skel_u(t)} zeta-ratio * E_u(v, t)`
    /// for a tuple of tree indices alive at `t`.
    pub fn weight(&mut self, tuple: &[usize]) -> f64 {
        if tuple.iter().any(|&i| !(self.zeta_end[i] > 0.0)) {
            return 0.0;
        }
        for &u in tuple {
            for v in self.tree.lineage(u) {
                if self.counts[v] == 0 {
                    self.touched.push(v);
                }
                self.counts[v] += 1;
            }
        }
        let mut ratio = 1.0;
        let mut log_e = 0.0;
        for &v in &self.touched {
            let d = self.counts[v] as usize;
            ratio *= self.ratio[v];
            log_e -= (self.moments[d] - 1.0) * self.rint[v];
            self.counts[v] = 0;
        }
        self.touched.clear();
        ratio * log_e.exp()
    }

    pub fn time(&self) -> f64 {
        self.t
    }
}

/// Unnormalized Gibbs weight of one tuple of labels alive at `t`.
pub fn tuple_weight(tree: &MarkedTree, model: &ContinuousModel, tuple: &[ParticleLabel], t: f64) -> Result<f64> {
    let idx = tuple
        .iter()
        .map(|l| {
            let i = tree.index_of(l).ok_or_else(|| Error::UnknownParticle(l.to_string()))?;
            if tree.record(i).is_alive_at(t) {
                Ok(i)
            } else {
                Err(Error::InconsistentSpines(format!("{l} is not alive at {t}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = TupleWeights::new(tree, model, t, tuple.len())?;
    Ok(w.weight(&idx))
}

fn tuple_count(n: usize, k: usize, cap: f64) -> Result<()> {
    let needed = (n as f64).powi(k as i32);
    if needed > cap {
        return Err(Error::EnumerationCap { needed, cap });
    }
    Ok(())
}

/// `Z^k(t)`: the sum of tuple weights over all ordered `k`-tuples of `N(t)`.
pub fn z_process(tree: &MarkedTree, model: &ContinuousModel, t: f64, k: usize, cap: f64) -> Result<f64> {
    let alive = tree.alive_indices(t)?;
    tuple_count(alive.len(), k, cap)?;
    let mut w = TupleWeights::new(tree, model, t, k)?;
    let mut sum = KahanSum::default();
    let mut scratch = vec![0usize; k];
    for_each_tuple(&alive, k, |tuple| {
        for (s, &&i) in scratch.iter_mut().zip(tuple) {
            *s = i;
        }
        sum.add(w.weight(&scratch));
    });
    Ok(sum.total())
}

/// Normalized Gibbs weights of every ordered `k`-tuple of `N(t)` with a
/// positive weight, together with `Z^k(t)`.
pub fn gibbs_weights(
    tree: &MarkedTree,
    model: &ContinuousModel,
    t: f64,
    k: usize,
    cap: f64,
) -> Result<(Vec<(Vec<ParticleLabel>, f64)>, f64)> {
    let alive = tree.alive_indices(t)?;
    tuple_count(alive.len(), k, cap)?;
    let mut w = TupleWeights::new(tree, model, t, k)?;
    let mut raw = Vec::new();
    let mut z = KahanSum::default();
    let mut scratch = vec![0usize; k];
    for_each_tuple(&alive, k, |tuple| {
        for (s, &&i) in scratch.iter_mut().zip(tuple) {
            *s = i;
        }
        let x = w.weight(&scratch);
        if x > 0.0 {
            z.add(x);
            raw.push((scratch.iter().map(|&i| tree.record(i).label.clone()).collect(), x));
        }
    });
    let z = z.total();
    Ok((raw.into_iter().map(|(l, x)| (l, x / z)).collect(), z))
}

/// `tilde zeta^k(t)` for a tree with spines.
pub fn zeta_tilde(tree: &MarkedTree, spines: &SpineAssignment, model: &ContinuousModel, t: f64) -> Result<f64> {
    let sk = extract_skeleton(tree, spines, t)?;
    for state in sk.spine_states()? {
        match state {
            Some(s) if s.zeta > 0.0 => {}
            _ => return Ok(0.0),
        }
    }
    let mut ratio = 1.0;
    let mut log_w = 0.0;
    for (node, &d) in sk.nodes().iter().zip(sk.mark_counts()) {
        let end = node.death_until(t);
        let alive = node.is_alive_at(t);
        let z_end = if alive {
            node.state_at(t)?.zeta
        } else if node.is_graveyard() {
            0.0
        } else {
            node.last_state().zeta
        };
        let z_start = node.birth_state().zeta;
        if !(z_end > 0.0 && z_start > 0.0) {
            return Ok(0.0);
        }
        ratio *= z_end / z_start;
        log_w -= (model.law.moment(d) - 1.0) * rate_integral(&model.rate, &node.path, node.birth, end);
        if !alive {
            let a = node.children.expect("dead skeleton node has offspring") as f64;
            log_w += d as f64 * a.ln();
        }
    }
    Ok(ratio * log_w.exp())
}
