//! Random-time-change simulation driven by one unit-rate Poisson process per
//! channel, so that two processes built from the same model share every
//! infective clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::direct::{exp1, Step};
use super::network::ReactionNet;
use super::RngSpec;

const MARK_DOMAIN: u64 = u64::MAX;

/// Stream of the unit Poisson process (or mark sequence) named `id`.
pub(crate) fn channel_rng(spec: RngSpec, id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&spec.seed.to_le_bytes());
    key[8..16].copy_from_slice(&id.to_le_bytes());
    key[16..24].copy_from_slice(b"netsir-q");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(spec.stream);
    rng
}

struct Clock {
    rng: ChaCha8Rng,
    rate: f64,
    /// Internal time `∫ a dt` at `t_last`.
    internal: f64,
    t_last: f64,
    /// Next point of the unit Poisson process.
    next_point: f64,
    fire_at: f64,
}

impl Clock {
    fn schedule(&mut self) {
        self.fire_at = if self.rate > 0.0 {
            self.t_last + (self.next_point - self.internal) / self.rate
        } else {
            f64::INFINITY
        };
    }
}

/// Indexed binary min-heap on `(fire_at, channel)`.
struct Heap {
    heap: Vec<u32>,
    pos: Vec<usize>,
}

impl Heap {
    fn new(n: usize, clocks: &[Clock]) -> Self {
        let mut h = Self {
            heap: (0..n as u32).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.down(i, clocks);
        }
        h
    }

    #[inline]
    fn less(a: u32, b: u32, clocks: &[Clock]) -> bool {
        let (ta, tb) = (clocks[a as usize].fire_at, clocks[b as usize].fire_at);
        ta < tb || (ta == tb && a < b)
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i] as usize] = i;
        self.pos[self.heap[j] as usize] = j;
    }

    fn up(&mut self, mut i: usize, clocks: &[Clock]) {
        while i > 0 {
            let p = (i - 1) / 2;
            if Self::less(self.heap[i], self.heap[p], clocks) {
                self.swap(i, p);
                i = p;
            } else {
                break;
            }
        }
    }

    fn down(&mut self, mut i: usize, clocks: &[Clock]) {
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < self.heap.len() && Self::less(self.heap[l], self.heap[m], clocks) {
                m = l;
            }
            if r < self.heap.len() && Self::less(self.heap[r], self.heap[m], clocks) {
                m = r;
            }
            if m == i {
                break;
            }
            self.swap(i, m);
            i = m;
        }
    }

    fn update(&mut self, c: usize, clocks: &[Clock]) {
        let i = self.pos[c];
        self.up(i, clocks);
        self.down(self.pos[c], clocks);
    }

    fn top(&self) -> Option<usize> {
        self.heap.first().map(|&c| c as usize)
    }
}

pub(crate) enum Firing {
    Applied(usize),
    /// Thinned infection clock fired but the mark rejected the contact.
    Rejected,
}

pub(crate) struct Nrm<'a> {
    pub net: &'a ReactionNet,
    pub x: Vec<u64>,
    pub t: f64,
    pub infectives: u64,
    clocks: Vec<Clock>,
    heap: Heap,
    marks: Vec<ChaCha8Rng>,
}

impl<'a> Nrm<'a> {
    pub(crate) fn new(net: &'a ReactionNet, x0: Vec<u64>, spec: RngSpec) -> Self {
        let mut clocks: Vec<Clock> = net
            .channels
            .iter()
            .map(|ch| {
                let mut rng = channel_rng(spec, ch.id(net.n));
                let first = exp1(&mut rng);
                let mut c = Clock {
                    rng,
                    rate: ch.prop.eval(&x0),
                    internal: 0.0,
                    t_last: 0.0,
                    next_point: first,
                    fire_at: 0.0,
                };
                c.schedule();
                c
            })
            .collect();
        let heap = Heap::new(clocks.len(), &clocks);
        clocks.shrink_to_fit();
        let marks = (0..net.n).map(|k| channel_rng(spec, MARK_DOMAIN - k as u64)).collect();
        let infectives = x0.iter().zip(&net.infective).filter(|(_, &f)| f).map(|(&v, _)| v).sum();
        Self {
            net,
            x: x0,
            t: 0.0,
            infectives,
            clocks,
            heap,
            marks,
        }
    }

    pub(crate) fn advance(&mut self, t_max: f64) -> (Step, Option<Firing>) {
        let Some(c) = self.heap.top() else {
            return if t_max.is_finite() {
                self.t = t_max;
                (Step::Reached, None)
            } else {
                (Step::Stalled, None)
            };
        };
        let at = self.clocks[c].fire_at;
        if at > t_max || at == f64::INFINITY {
            if t_max == f64::INFINITY {
                return (Step::Stalled, None);
            }
            self.t = t_max;
            return (Step::Reached, None);
        }
        self.t = at;
        let clock = &mut self.clocks[c];
        clock.internal = clock.next_point;
        clock.t_last = at;
        clock.next_point += exp1(&mut clock.rng);
        clock.schedule();
        self.heap.update(c, &self.clocks);
        let net = self.net;
        let ch = &net.channels[c];
        if ch.thinned {
            let k = ch.from as usize;
            let n = net.n;
            let (s, pop) = (self.x[k], self.x[k] + self.x[n + k] + self.x[2 * n + k]);
            let mark: f64 = self.marks[k].random();
            if (s as f64) < mark * pop as f64 {
                return (Step::Fired(c), Some(Firing::Rejected));
            }
        }
        let mut touched: Vec<u32> = Vec::with_capacity(8);
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
                if !touched.contains(&d) {
                    touched.push(d);
                }
            }
        }
        for d in touched {
            let d = d as usize;
            let rate = net.channels[d].prop.eval(&self.x);
            let clock = &mut self.clocks[d];
            if rate == clock.rate {
                continue;
            }
            clock.internal += clock.rate * (at - clock.t_last);
            clock.t_last = at;
            clock.rate = rate;
            clock.schedule();
            self.heap.update(d, &self.clocks);
        }
        (Step::Fired(c), Some(Firing::Applied(c)))
    }
}
