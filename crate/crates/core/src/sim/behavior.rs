//! What a relay does with a message it has just taken custody of.

use rand::Rng;

use crate::model::SimTime;

/// Selective-drop schedule of a grey-hole (or a colluder, which drops the
/// same way before covering its tracks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropMode {
    /// Each relayed message is dropped independently with this probability.
    Probability(f64),
    /// Every relayed message arriving in the first half of each `period`
    /// cycle is dropped.
    Periodic { period: SimTime },
    /// Every n-th relayed message is dropped.
    EveryNth(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    Honest,
    Blackhole,
    Greyhole(DropMode),
    /// Colluders drop per their mode, if any, and forge records to hide it.
    Colluder(Option<DropMode>),
}

impl Behavior {
    pub fn is_malicious(&self) -> bool {
        !matches!(self, Behavior::Honest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    Drop,
}

/// `relay_count` is the 1-based number of relayed messages this node has
/// received so far, counting the current one. Only the probabilistic mode
/// draws from `rng`.
pub fn decide_forward<R: Rng + ?Sized>(
    behavior: &Behavior,
    relay_count: u64,
    now: SimTime,
    rng: &mut R,
) -> ForwardDecision {
    let mode = match behavior {
        Behavior::Honest | Behavior::Colluder(None) => return ForwardDecision::Forward,
        Behavior::Blackhole => return ForwardDecision::Drop,
        Behavior::Greyhole(mode) | Behavior::Colluder(Some(mode)) => mode,
    };
    let drop = match *mode {
        DropMode::Probability(p) => rng.random_bool(p),
        DropMode::Periodic { period } => {
            let period = period.as_millis().max(1);
            now.as_millis() % period < period.div_ceil(2)
        }
        DropMode::EveryNth(n) => n > 0 && relay_count.is_multiple_of(n),
    };
    if drop {
        ForwardDecision::Drop
    } else {
        ForwardDecision::Forward
    }
}
