use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::hystoc::ConfusionNetwork;
use crate::error::{Error, Result};

/// One line of a CTM file: `utt_id channel start duration token confidence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmRecord {
    pub utt_id: String,
    pub channel: String,
    pub start: f64,
    pub duration: f64,
    pub token: String,
    pub confidence: f64,
}

impl CtmRecord {
    /// Record with synthetic timing: start at the word index, duration 1.
    pub fn indexed(utt_id: &str, word_index: usize, token: &str, confidence: f64) -> Self {
        Self {
            utt_id: utt_id.to_string(),
            channel: "1".into(),
            start: word_index as f64,
            duration: 1.0,
            token: token.to_string(),
            confidence,
        }
    }
}

/// The pivot path of `cn` with each word's slot confidence; slots where
/// the pivot has no word are skipped.
pub fn cn_to_ctm(cn: &ConfusionNetwork, utt_id: &str) -> Vec<CtmRecord> {
    cn.slots
        .iter()
        .filter_map(|s| {
            let w = s.pivot.as_deref()?;
            Some((w, s.confidence(Some(w))))
        })
        .enumerate()
        .map(|(i, (w, c))| CtmRecord::indexed(utt_id, i, w, c))
        .collect()
}

/// Parses CTM lines; `;;` comments and blank lines are skipped and a
/// missing confidence column reads as 1.
pub fn parse_ctm(text: &str) -> Result<Vec<CtmRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;") {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| Error::Parse { line: i + 1, message };
        if !(5..=6).contains(&f.len()) {
            return Err(err(format!("expected 5 or 6 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{what} {s:?} is not a number")))
        };
        let confidence = if f.len() == 6 { num(f[5], "confidence")? } else { 1.0 };
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        out.push(CtmRecord {
            utt_id: f[0].to_string(),
            channel: f[1].to_string(),
            start: num(f[2], "start")?,
            duration: num(f[3], "duration")?,
            token: f[4].to_string(),
            confidence,
        });
    }
    Ok(out)
}

/// Formats records one per line; numbers use the shortest representation
/// that parses back to the same value.
pub fn format_ctm(records: &[CtmRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            r.utt_id, r.channel, r.start, r.duration, r.token, r.confidence
        );
    }
    s
}

/// Records grouped per utterance in order of first appearance, keeping file
/// order within each utterance.
pub fn group_by_utterance(records: &[CtmRecord]) -> Vec<(String, Vec<CtmRecord>)> {
    let mut groups: Vec<(String, Vec<CtmRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(u, _)| *u == r.utt_id) {
            Some((_, g)) => g.push(r.clone()),
            None => groups.push((r.utt_id.clone(), vec![r.clone()])),
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::hystoc_confusion_network;

    #[test]
    fn three_hypothesis_records() {
        let hyps = [
            (vec!["A", "B", "C"], 0.7),
            (vec!["A", "B"], 0.2),
            (vec!["A", "C"], 0.1),
        ];
        let ctm = cn_to_ctm(&hystoc_confusion_network(&hyps).unwrap(), "utt");
        let got: Vec<(&str, f64)> = ctm.iter().map(|r| (r.token.as_str(), r.confidence)).collect();
        assert_eq!(got.len(), 3);
        for ((t, c), (et, ec)) in got.iter().zip([("A", 1.0), ("B", 0.9), ("C", 0.8)]) {
            assert_eq!(*t, et);
            assert!((c - ec).abs() < 1e-12);
        }
        assert_eq!(ctm[2].start, 2.0);
        assert!(cn_to_ctm(&ConfusionNetwork::default(), "u").is_empty());
    }

    #[test]
    fn round_trip() {
        let recs = vec![
            CtmRecord::indexed("u1", 0, "hello", 0.1 + 0.2),
            CtmRecord::indexed("u1", 1, "world", 1.0 / 3.0),
        ];
        assert_eq!(parse_ctm(&format_ctm(&recs)).unwrap(), recs);
    }

    #[test]
    fn parse_variants_and_errors() {
        let r = parse_ctm(";; comment\nu 1 0.5 0.2 w\n").unwrap();
        assert_eq!(r[0].confidence, 1.0);
        assert!(parse_ctm("u 1 0 1 w 1.5").is_err());
        assert!(matches!(parse_ctm("u 1 x 1 w 0.5"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_ctm("u 1 0").is_err());
    }
}
