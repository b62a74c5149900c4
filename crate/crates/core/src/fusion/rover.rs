use serde::{Deserialize, Serialize};

use super::align::{align, Op};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoverConfig {
    /// Weight of word frequency against confidence.
    pub alpha: f64,
    /// Confidence assigned to the empty word.
    pub null_conf: f64,
}

impl Default for RoverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            null_conf: 0.4,
        }
    }
}

impl RoverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.null_conf) {
            return Err(Error::invalid("alpha and null_conf must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A scored word; the unit of ROVER input and output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub token: String,
    pub confidence: f64,
}

impl ScoredWord {
    pub fn new(token: impl Into<String>, confidence: f64) -> Self {
        Self {
            token: token.into(),
            confidence,
        }
    }
}

/// Word transition network: `slots[i][s]` is system `s`'s word at slot `i`
/// or `None` for the empty word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordTransitionNetwork {
    pub slots: Vec<Vec<Option<ScoredWord>>>,
    pub systems: usize,
}

impl WordTransitionNetwork {
    /// Merges systems in order. A slot matches a word already present in it
    /// at no cost; substitutions, insertions and deletions cost 1.
    pub fn build(inputs: &[Vec<ScoredWord>]) -> Result<Self> {
        let (first, rest) = inputs.split_first().ok_or_else(|| Error::invalid("ROVER needs at least one system"))?;
        let mut net = Self {
            slots: first.iter().map(|w| vec![Some(w.clone())]).collect(),
            systems: 1,
        };
        for sys in rest {
            net.merge(sys);
        }
        Ok(net)
    }

    fn slot_has(&self, i: usize, token: &str) -> bool {
        self.slots[i].iter().flatten().any(|w| w.token == token)
    }

    fn merge(&mut self, sys: &[ScoredWord]) {
        let ops = align(self.slots.len(), sys.len(), |i, j| self.slot_has(i, &sys[j].token));
        let prior = self.systems;
        let mut merged = Vec::with_capacity(ops.len());
        let mut old = std::mem::take(&mut self.slots).into_iter();
        for op in ops {
            match op {
                Op::Match(_, j) | Op::Sub(_, j) => {
                    let mut slot = old.next().expect("alignment covers every slot");
                    slot.push(Some(sys[j].clone()));
                    merged.push(slot);
                }
                Op::Del(_) => {
                    let mut slot = old.next().expect("alignment covers every slot");
                    slot.push(None);
                    merged.push(slot);
                }
                Op::Ins(j) => {
                    let mut slot = vec![None; prior];
                    slot.push(Some(sys[j].clone()));
                    merged.push(slot);
                }
            }
        }
        self.slots = merged;
        self.systems += 1;
    }
}

/// Score of each candidate in a slot, candidates in order of the first
/// system that proposed them.
fn vote(slot: &[Option<ScoredWord>], cfg: &RoverConfig) -> Option<ScoredWord> {
    let n = slot.len() as f64;
    // (token, count, max confidence)
    let mut cands: Vec<(Option<&str>, usize, f64)> = Vec::new();
    for w in slot {
        let key = w.as_ref().map(|w| w.token.as_str());
        let conf = w.as_ref().map_or(cfg.null_conf, |w| w.confidence);
        match cands.iter_mut().find(|c| c.0 == key) {
            Some(c) => {
                c.1 += 1;
                c.2 = c.2.max(conf);
            }
            None => cands.push((key, 1, conf)),
        }
    }
    let score = |c: &(Option<&str>, usize, f64)| cfg.alpha * (c.1 as f64 / n) + (1.0 - cfg.alpha) * c.2;
    let mut best = &cands[0];
    for c in &cands[1..] {
        if score(c) > score(best) + 1e-12 {
            best = c;
        }
    }
    best.0.map(|t| ScoredWord::new(t, best.2))
}

/// Fuses system outputs by textual alignment and voting with
/// `alpha * N_w / N_sys + (1 - alpha) * conf(w)`, where `conf` is the
/// maximum confidence of `w` in the slot and `null_conf` for the empty
/// word. Ties go to the earliest system's word; each output word carries
/// its maximum confidence.
pub fn rover(inputs: &[Vec<ScoredWord>], cfg: &RoverConfig) -> Result<Vec<ScoredWord>> {
    cfg.validate()?;
    let net = WordTransitionNetwork::build(inputs)?;
    Ok(net.slots.iter().filter_map(|s| vote(s, cfg)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(s: &str) -> Vec<ScoredWord> {
        s.split_whitespace().map(|t| ScoredWord::new(t, 1.0)).collect()
    }

    fn tokens(out: &[ScoredWord]) -> Vec<&str> {
        out.iter().map(|w| w.token.as_str()).collect()
    }

    #[test]
    fn three_system_example() {
        let out = rover(&[sys("a b"), sys("a c"), sys("a")], &RoverConfig::default()).unwrap();
        assert_eq!(tokens(&out), vec!["a", "b"]);
        let net = WordTransitionNetwork::build(&[sys("a b"), sys("a c"), sys("a")]).unwrap();
        assert_eq!(net.slots.len(), 2);
        assert_eq!(net.slots[1][2], None);
    }

    #[test]
    fn idempotent_and_identical() {
        let x = vec![ScoredWord::new("x", 0.3), ScoredWord::new("y", 0.9)];
        assert_eq!(rover(&[x.clone()], &RoverConfig::default()).unwrap(), x);
        assert_eq!(
            tokens(&rover(&[sys("p q r"), sys("p q r"), sys("p q r")], &RoverConfig::default()).unwrap()),
            vec!["p", "q", "r"]
        );
    }

    #[test]
    fn majority_with_alpha_one() {
        let cfg = RoverConfig {
            alpha: 1.0,
            null_conf: 0.4,
        };
        let low = vec![ScoredWord::new("a", 0.01)];
        let out = rover(&[vec![ScoredWord::new("b", 1.0)], low.clone(), low], &cfg).unwrap();
        assert_eq!(tokens(&out), vec!["a"]);
    }

    #[test]
    fn insertion_backfills_epsilon() {
        let net = WordTransitionNetwork::build(&[sys("a c"), sys("a b c")]).unwrap();
        assert_eq!(net.slots.len(), 3);
        assert_eq!(net.slots[1][0], None);
        assert_eq!(net.slots[1][1].as_ref().unwrap().token, "b");
        let out = rover(&[sys("a c"), sys("a b c")], &RoverConfig::default()).unwrap();
        // b: 0.4 + 0.2 = 0.6 beats the empty word's 0.4 + 0.08
        assert_eq!(tokens(&out), vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(rover(&[], &RoverConfig::default()).is_err());
    }
}
