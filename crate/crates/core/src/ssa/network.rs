//! Transition classes of the three jump processes as reaction channels.

use crate::model::NetworkModel;

use super::EventKind;

/// Which process a state vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `x_k` at index `k`.
    Population,
    /// `s_k`, `i_k`, `r_k` at indices `k`, `n + k`, `2n + k`.
    Sir,
    /// Branching infectives `i_k` at index `k`.
    Branching,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Propensity {
    /// `c0 + c1·Σ x[terms]`.
    Affine { c0: f64, c1: f64, terms: [u32; 3], len: u8 },
    /// `β·x_i·x_s/(x_s + x_i + x_r)`, zero on an empty node.
    MassAction { beta: f64, s: u32, i: u32, r: u32 },
}

impl Propensity {
    fn affine(c0: f64, c1: f64, terms: &[u32]) -> Self {
        let mut t = [0; 3];
        t[..terms.len()].copy_from_slice(terms);
        Propensity::Affine {
            c0,
            c1,
            terms: t,
            len: terms.len() as u8,
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[u64]) -> f64 {
        match *self {
            Propensity::Affine { c0, c1, terms, len } => {
                if c1 == 0.0 {
                    return c0;
                }
                let sum: u64 = terms[..len as usize].iter().map(|&k| x[k as usize]).sum();
                c0 + c1 * sum as f64
            }
            Propensity::MassAction { beta, s, i, r } => {
                let (xs, xi) = (x[s as usize], x[i as usize]);
                let total = xs + xi + x[r as usize];
                if total == 0 {
                    0.0
                } else {
                    beta * (xi as f64) * (xs as f64) / total as f64
                }
            }
        }
    }

    fn inputs(&self) -> Vec<u32> {
        match *self {
            Propensity::Affine { c1, terms, len, .. } => {
                if c1 == 0.0 {
                    vec![]
                } else {
                    terms[..len as usize].to_vec()
                }
            }
            Propensity::MassAction { s, i, r, .. } => vec![s, i, r],
        }
    }

    fn is_zero(&self) -> bool {
        match *self {
            Propensity::Affine { c0, c1, .. } => c0 == 0.0 && c1 == 0.0,
            Propensity::MassAction { beta, .. } => beta == 0.0,
        }
    }
}

/// Sub-channel codes; together with `(from, to)` they name a channel
/// independently of which process it is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Code {
    InConst = 0,
    InBirth = 1,
    DeathS = 2,
    DeathI = 3,
    DeathR = 4,
    MoveS = 5,
    MoveI = 6,
    MoveR = 7,
    Infection = 8,
    Recovery = 9,
    In = 10,
    Death = 11,
    Move = 12,
}

#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub kind: EventKind,
    pub code: Code,
    pub from: u32,
    pub to: u32,
    pub prop: Propensity,
    pub effects: [(u32, i8); 2],
    pub n_effects: u8,
    /// Coupled infection clock: fires at rate `β·i` and is accepted with
    /// probability `s/(s+i+r)` through a uniform mark.
    pub thinned: bool,
}

impl Channel {
    pub(crate) fn effects(&self) -> &[(u32, i8)] {
        &self.effects[..self.n_effects as usize]
    }

    /// Identifier shared by the same transition in every process of one model.
    pub(crate) fn id(&self, n: usize) -> u64 {
        let n = n as u64;
        (self.code as u64) * n * n + self.from as u64 * n + self.to as u64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ReactionNet {
    pub layout: Layout,
    pub n: usize,
    pub channels: Vec<Channel>,
    /// Channels whose propensity reads each compartment.
    pub deps: Vec<Vec<u32>>,
    pub infective: Vec<bool>,
}

struct Builder {
    channels: Vec<Channel>,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        kind: EventKind,
        code: Code,
        from: usize,
        to: usize,
        prop: Propensity,
        effects: &[(usize, i8)],
        thinned: bool,
    ) {
        if prop.is_zero() {
            return;
        }
        let mut e = [(0u32, 0i8); 2];
        for (slot, &(k, d)) in e.iter_mut().zip(effects) {
            *slot = (k as u32, d);
        }
        self.channels.push(Channel {
            kind,
            code,
            from: from as u32,
            to: to as u32,
            prop,
            effects: e,
            n_effects: effects.len() as u8,
            thinned,
        });
    }
}

fn finish(layout: Layout, n: usize, dim: usize, channels: Vec<Channel>, infective: Vec<bool>) -> ReactionNet {
    let mut deps = vec![Vec::new(); dim];
    for (c, ch) in channels.iter().enumerate() {
        for k in ch.prop.inputs() {
            if !deps[k as usize].contains(&(c as u32)) {
                deps[k as usize].push(c as u32);
            }
        }
    }
    ReactionNet {
        layout,
        n,
        channels,
        deps,
        infective,
    }
}

fn targets(model: &NetworkModel<f64>, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..model.n()).filter_map(move |j| {
        let th = model.transfer()[(k, j)];
        (j != k && th > 0.0).then_some((j, th))
    })
}

pub(crate) fn population_net(model: &NetworkModel<f64>, scale: f64) -> ReactionNet {
    let n = model.n();
    let mut b = Builder { channels: vec![] };
    for k in 0..n {
        let kk = k as u32;
        b.push(
            EventKind::In,
            Code::In,
            k,
            k,
            Propensity::affine(scale * model.immigration()[k], model.birth()[k], &[kk]),
            &[(k, 1)],
            false,
        );
        b.push(
            EventKind::Death,
            Code::Death,
            k,
            k,
            Propensity::affine(0.0, model.death()[k], &[kk]),
            &[(k, -1)],
            false,
        );
        for (j, th) in targets(model, k) {
            b.push(
                EventKind::Move,
                Code::Move,
                k,
                j,
                Propensity::affine(0.0, th, &[kk]),
                &[(k, -1), (j, 1)],
                false,
            );
        }
    }
    finish(Layout::Population, n, n, b.channels, vec![false; n])
}

/// The nine transition classes of the SIR process. With `coupled`, inflow is
/// split into its constant and birth parts and infection becomes a thinned
/// `β·i` clock, matching the shared-stream construction.
pub(crate) fn sir_net(model: &NetworkModel<f64>, scale: f64, coupled: bool) -> ReactionNet {
    let n = model.n();
    let mut b = Builder { channels: vec![] };
    for k in 0..n {
        let (s, i, r) = (k, n + k, 2 * n + k);
        let sir = [s as u32, i as u32, r as u32];
        let d = model.death()[k];
        if coupled {
            b.push(
                EventKind::In,
                Code::InConst,
                k,
                k,
                Propensity::affine(scale * model.immigration()[k], 0.0, &[]),
                &[(s, 1)],
                false,
            );
            b.push(
                EventKind::In,
                Code::InBirth,
                k,
                k,
                Propensity::affine(0.0, model.birth()[k], &sir),
                &[(s, 1)],
                false,
            );
        } else {
            b.push(
                EventKind::In,
                Code::In,
                k,
                k,
                Propensity::affine(scale * model.immigration()[k], model.birth()[k], &sir),
                &[(s, 1)],
                false,
            );
        }
        b.push(
            EventKind::DeathS,
            Code::DeathS,
            k,
            k,
            Propensity::affine(0.0, d, &[s as u32]),
            &[(s, -1)],
            false,
        );
        b.push(
            EventKind::DeathI,
            Code::DeathI,
            k,
            k,
            Propensity::affine(0.0, d, &[i as u32]),
            &[(i, -1)],
            false,
        );
        b.push(
            EventKind::DeathR,
            Code::DeathR,
            k,
            k,
            Propensity::affine(0.0, d, &[r as u32]),
            &[(r, -1)],
            false,
        );
        for (j, th) in targets(model, k) {
            for (kind, code, c) in [
                (EventKind::MoveS, Code::MoveS, 0),
                (EventKind::MoveI, Code::MoveI, 1),
                (EventKind::MoveR, Code::MoveR, 2),
            ] {
                let (from, to) = (c * n + k, c * n + j);
                b.push(
                    kind,
                    code,
                    k,
                    j,
                    Propensity::affine(0.0, th, &[from as u32]),
                    &[(from, -1), (to, 1)],
                    false,
                );
            }
        }
        let beta = model.infection()[k];
        let infection = if coupled {
            Propensity::affine(0.0, beta, &[i as u32])
        } else {
            Propensity::MassAction {
                beta,
                s: s as u32,
                i: i as u32,
                r: r as u32,
            }
        };
        b.push(
            EventKind::Infection,
            Code::Infection,
            k,
            k,
            infection,
            &[(s, -1), (i, 1)],
            coupled,
        );
        b.push(
            EventKind::Recovery,
            Code::Recovery,
            k,
            k,
            Propensity::affine(0.0, model.recovery()[k], &[i as u32]),
            &[(i, -1), (r, 1)],
            false,
        );
    }
    let mut infective = vec![false; 3 * n];
    infective[n..2 * n].iter_mut().for_each(|f| *f = true);
    finish(Layout::Sir, n, 3 * n, b.channels, infective)
}

/// Infectives reproducing at rate `β_k`, dying at `d_k`, recovering at
/// `γ_k` and moving at `θ_{k,j}`, with the same channel names as the SIR net.
pub(crate) fn branching_net(model: &NetworkModel<f64>) -> ReactionNet {
    let n = model.n();
    let mut b = Builder { channels: vec![] };
    for k in 0..n {
        let kk = k as u32;
        b.push(
            EventKind::DeathI,
            Code::DeathI,
            k,
            k,
            Propensity::affine(0.0, model.death()[k], &[kk]),
            &[(k, -1)],
            false,
        );
        for (j, th) in targets(model, k) {
            b.push(
                EventKind::MoveI,
                Code::MoveI,
                k,
                j,
                Propensity::affine(0.0, th, &[kk]),
                &[(k, -1), (j, 1)],
                false,
            );
        }
        b.push(
            EventKind::Infection,
            Code::Infection,
            k,
            k,
            Propensity::affine(0.0, model.infection()[k], &[kk]),
            &[(k, 1)],
            false,
        );
        b.push(
            EventKind::Recovery,
            Code::Recovery,
            k,
            k,
            Propensity::affine(0.0, model.recovery()[k], &[kk]),
            &[(k, -1)],
            false,
        );
    }
    finish(Layout::Branching, n, n, b.channels, vec![true; n])
}
