//! Exact direct-method stepping over a [`ReactionNet`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::network::ReactionNet;

/// Complete binary tree of partial sums over channel propensities. Parents
/// are recomputed from their children on every update, so no rounding drift
/// accumulates.
#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub(crate) fn new(values: &[f64]) -> Self {
        let size = values.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + values.len()].copy_from_slice(values);
        for p in (1..size).rev() {
            nodes[p] = nodes[2 * p] + nodes[2 * p + 1];
        }
        Self { size, nodes }
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, v: f64) {
        let mut p = self.size + i;
        self.nodes[p] = v;
        while p > 1 {
            p /= 2;
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
        }
    }

    /// Leaf whose cumulative interval contains `target ∈ [0, total)`; never a
    /// zero-weight leaf.
    #[inline]
    pub(crate) fn find(&self, mut target: f64) -> usize {
        let mut p = 1;
        while p < self.size {
            let left = self.nodes[2 * p];
            if (target < left || self.nodes[2 * p + 1] <= 0.0) && left > 0.0 {
                p *= 2;
            } else {
                target -= left;
                p = 2 * p + 1;
            }
        }
        p - self.size
    }
}

pub(crate) enum Step {
    Fired(usize),
    /// Clock reached the requested time with no event in between.
    Reached,
    /// Total propensity is zero and the requested time is infinite.
    Stalled,
}

pub(crate) struct Direct<'a> {
    pub net: &'a ReactionNet,
    pub x: Vec<u64>,
    pub t: f64,
    pub infectives: u64,
    tree: SumTree,
    rng: ChaCha8Rng,
    pending: Option<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    touched: Vec<u32>,
    /// `∫ a_c dt` per channel when tracking is on.
    pub integrals: Option<Vec<f64>>,
}

#[inline]
pub(crate) fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

impl<'a> Direct<'a> {
    pub(crate) fn new(net: &'a ReactionNet, x0: Vec<u64>, rng: ChaCha8Rng, track_integrals: bool) -> Self {
        let props: Vec<f64> = net.channels.iter().map(|c| c.prop.eval(&x0)).collect();
        let infectives = x0.iter().zip(&net.infective).filter(|(_, &f)| f).map(|(&v, _)| v).sum();
        Self {
            net,
            tree: SumTree::new(&props),
            x: x0,
            t: 0.0,
            infectives,
            rng,
            pending: None,
            stamp: vec![0; net.channels.len()],
            epoch: 0,
            touched: Vec::new(),
            integrals: track_integrals.then(|| vec![0.0; net.channels.len()]),
        }
    }

    fn accumulate(&mut self, until: f64) {
        if let Some(acc) = self.integrals.as_mut() {
            let dt = until - self.t;
            for (c, a) in acc.iter_mut().enumerate() {
                *a += self.tree.get(c) * dt;
            }
        }
    }

    /// Fires the next event if it occurs no later than `t_max`.
    pub(crate) fn advance(&mut self, t_max: f64) -> Step {
        let next = match self.pending {
            Some(t) => t,
            None => {
                let total = self.tree.total();
                let t = if total > 0.0 {
                    self.t + exp1(&mut self.rng) / total
                } else {
                    f64::INFINITY
                };
                self.pending = Some(t);
                t
            }
        };
        if next > t_max || next == f64::INFINITY {
            if t_max == f64::INFINITY {
                return Step::Stalled;
            }
            self.accumulate(t_max);
            self.t = t_max;
            return Step::Reached;
        }
        self.accumulate(next);
        self.t = next;
        self.pending = None;
        let u: f64 = self.rng.random();
        let c = self.tree.find(u * self.tree.total());
        self.fire(c);
        Step::Fired(c)
    }

    fn fire(&mut self, c: usize) {
        let net = self.net;
        let ch = &net.channels[c];
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.touched.clear();
        for &(k, delta) in ch.effects() {
            let k = k as usize;
            if delta > 0 {
                self.x[k] += delta as u64;
            } else {
                self.x[k] -= (-delta) as u64;
            }
            if net.infective[k] {
                if delta > 0 {
                    self.infectives += delta as u64;
                } else {
                    self.infectives -= (-delta) as u64;
                }
            }
            for &d in &net.deps[k] {
                if self.stamp[d as usize] != self.epoch {
                    self.stamp[d as usize] = self.epoch;
                    self.touched.push(d);
                }
            }
        }
        for idx in 0..self.touched.len() {
            let d = self.touched[idx] as usize;
            let a = net.channels[d].prop.eval(&self.x);
            self.tree.set(d, a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_tree_selection() {
        let t = SumTree::new(&[1.0, 0.0, 2.0]);
        assert_eq!(t.total(), 3.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        let mut t = SumTree::new(&[0.0, 0.0, 0.0, 4.0, 0.0]);
        assert_eq!(t.find(3.9999999), 3);
        t.set(3, 0.0);
        t.set(0, 1.0);
        assert_eq!(t.total(), 1.0);
        assert_eq!(t.find(0.9999), 0);
    }
}
