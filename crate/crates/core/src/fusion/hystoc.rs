use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::align::{align, Op};
use crate::error::{Error, Result};

/// A competing word (or epsilon when `word` is `None`) within a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub word: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    /// Word of the pivot hypothesis here; `None` for slots created by
    /// insertions relative to the pivot.
    pub pivot: Option<String>,
    /// Arcs in order of first contribution; at most one epsilon.
    pub arcs: Vec<Arc>,
}

impl Slot {
    pub fn confidence(&self, word: Option<&str>) -> f64 {
        self.arcs
            .iter()
            .find(|a| a.word.as_deref() == word)
            .map_or(0.0, |a| a.confidence)
    }

    pub fn total(&self) -> f64 {
        self.arcs.iter().map(|a| a.confidence).sum()
    }

    fn add(&mut self, word: Option<&str>, mass: f64) {
        match self.arcs.iter_mut().find(|a| a.word.as_deref() == word) {
            Some(a) => a.confidence += mass,
            None => self.arcs.push(Arc {
                word: word.map(str::to_string),
                confidence: mass,
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionNetwork {
    pub slots: Vec<Slot>,
}

/// Compacts weighted hypotheses into a confusion network around the most
/// probable one (the pivot, first on ties). Every other hypothesis is
/// aligned to the pivot; its posterior goes to the aligned word, or to
/// epsilon where it skips a pivot word. Words it inserts open new slots in
/// which everyone else votes epsilon. Slot masses sum to the total
/// posterior mass supplied.
pub fn hystoc_confusion_network<S: AsRef<str>>(hyps: &[(Vec<S>, f64)]) -> Result<ConfusionNetwork> {
    if hyps.is_empty() {
        return Err(Error::invalid("no hypotheses to compact"));
    }
    if hyps.iter().any(|(_, p)| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::invalid("posteriors must be finite and non-negative"));
    }
    let mut pivot_idx = 0;
    for (i, (_, p)) in hyps.iter().enumerate() {
        if *p > hyps[pivot_idx].1 {
            pivot_idx = i;
        }
    }
    let pivot: Vec<&str> = hyps[pivot_idx].0.iter().map(AsRef::as_ref).collect();
    let total: f64 = hyps.iter().map(|(_, p)| p).sum();

    let mut main: Vec<Slot> = pivot
        .iter()
        .map(|w| Slot {
            pivot: Some(w.to_string()),
            arcs: Vec::new(),
        })
        .collect();
    // insertion slots keyed by (gap before pivot word, ordinal in the gap)
    let mut inserted: BTreeMap<(usize, usize), Slot> = BTreeMap::new();

    for (h, (tokens, p)) in hyps.iter().enumerate() {
        let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        if h == pivot_idx {
            for (slot, w) in main.iter_mut().zip(&pivot) {
                slot.add(Some(w), *p);
            }
            continue;
        }
        let ops = align(pivot.len(), tokens.len(), |i, j| pivot[i] == tokens[j]);
        let (mut gap, mut ordinal) = (0, 0);
        for op in ops {
            match op {
                Op::Match(i, j) | Op::Sub(i, j) => {
                    main[i].add(Some(tokens[j]), *p);
                    gap = i + 1;
                    ordinal = 0;
                }
                Op::Del(i) => {
                    main[i].add(None, *p);
                    gap = i + 1;
                    ordinal = 0;
                }
                Op::Ins(j) => {
                    inserted
                        .entry((gap, ordinal))
                        .or_insert_with(|| Slot {
                            pivot: None,
                            arcs: vec![Arc {
                                word: None,
                                confidence: 0.0,
                            }],
                        })
                        .add(Some(tokens[j]), *p);
                    ordinal += 1;
                }
            }
        }
    }

    let mut slots = Vec::with_capacity(main.len() + inserted.len());
    let mut ins = inserted.into_iter().peekable();
    for (g, slot) in main.into_iter().enumerate() {
        while let Some(((gap, _), _)) = ins.peek() {
            if *gap > g {
                break;
            }
            slots.push(ins.next().expect("peeked").1);
        }
        slots.push(slot);
    }
    slots.extend(ins.map(|(_, s)| s));
    for slot in &mut slots {
        if slot.pivot.is_none() {
            let words: f64 = slot.arcs.iter().filter(|a| a.word.is_some()).map(|a| a.confidence).sum();
            slot.arcs[0].confidence = (total - words).max(0.0);
        }
    }
    Ok(ConfusionNetwork { slots })
}
