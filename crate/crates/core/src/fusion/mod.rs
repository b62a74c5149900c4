//! ASR hypothesis fusion: N-best lists to confusion networks with word
//! confidences, ROVER voting across systems, and WER scoring.

pub mod align;
mod ctm;
mod hystoc;
mod nbest;
mod rover;
mod wer;

pub use ctm::{cn_to_ctm, format_ctm, group_by_utterance, parse_ctm, CtmRecord};
pub use hystoc::{hystoc_confusion_network, Arc, ConfusionNetwork, Slot};
pub use nbest::{parse_nbest, posteriors_from_scores, Hypothesis, NBestList};
pub use rover::{rover, RoverConfig, ScoredWord, WordTransitionNetwork};
pub use wer::{format_trn, parse_trn, score_trn, wer, WerReport};

use crate::error::Result;

/// N-best list to CTM at the given temperature.
pub fn nbest_to_ctm(n: &NBestList, temperature: f64, scores_are_probs: bool) -> Result<Vec<CtmRecord>> {
    let post = posteriors_from_scores(n, temperature, scores_are_probs)?;
    let hyps: Vec<(Vec<String>, f64)> = n
        .hypotheses
        .iter()
        .zip(post)
        .map(|(h, p)| (h.tokens.clone(), p))
        .collect();
    Ok(cn_to_ctm(&hystoc_confusion_network(&hyps)?, &n.utt_id))
}

/// ROVER over CTM files, utterance by utterance. Utterances appear in the
/// order first seen across the inputs; a system without an utterance
/// contributes an empty hypothesis for it.
pub fn rover_ctm(systems: &[Vec<CtmRecord>], cfg: &RoverConfig) -> Result<Vec<CtmRecord>> {
    let grouped: Vec<Vec<(String, Vec<CtmRecord>)>> = systems.iter().map(|s| group_by_utterance(s)).collect();
    let mut utts: Vec<&str> = Vec::new();
    for g in &grouped {
        for (u, _) in g {
            if !utts.contains(&u.as_str()) {
                utts.push(u);
            }
        }
    }
    let mut out = Vec::new();
    for utt in utts {
        let inputs: Vec<Vec<ScoredWord>> = grouped
            .iter()
            .map(|g| {
                g.iter()
                    .find(|(u, _)| u == utt)
                    .map(|(_, recs)| recs.iter().map(|r| ScoredWord::new(r.token.clone(), r.confidence)).collect())
                    .unwrap_or_default()
            })
            .collect();
        let fused = rover(&inputs, cfg)?;
        out.extend(
            fused
                .iter()
                .enumerate()
                .map(|(i, w)| CtmRecord::indexed(utt, i, &w.token, w.confidence)),
        );
    }
    Ok(out)
}
