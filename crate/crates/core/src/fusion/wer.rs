use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// Reference length.
    pub reference_words: usize,
    pub wer: f64,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn finish(mut self) -> Self {
        self.wer = self.errors() as f64 / self.reference_words.max(1) as f64;
        self
    }

    /// Pooled counts of several utterances.
    pub fn combine(reports: &[WerReport]) -> WerReport {
        reports
            .iter()
            .fold(WerReport::default(), |acc, r| WerReport {
                substitutions: acc.substitutions + r.substitutions,
                deletions: acc.deletions + r.deletions,
                insertions: acc.insertions + r.insertions,
                reference_words: acc.reference_words + r.reference_words,
                wer: 0.0,
            })
            .finish()
    }
}

/// Minimum edit distance with unit costs. Among minimal alignments the one
/// with fewest substitutions is counted; since the substitution count is
/// the same whichever side is the reference, swapping the two sequences
/// exactly swaps insertions and deletions.
pub fn wer<S: AsRef<str>>(reference: &[S], hyp: &[S]) -> WerReport {
    let (n, m) = (reference.len(), hyp.len());
    // (cost, substitutions, deletions)
    let mut d = vec![vec![(0usize, 0usize, 0usize); m + 1]; n + 1];
    for i in 1..=n {
        d[i][0] = (i, 0, i);
    }
    for j in 1..=m {
        d[0][j] = (j, 0, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hyp[j - 1].as_ref();
            let (c, s, dl) = d[i - 1][j - 1];
            let diag = if same { (c, s, dl) } else { (c + 1, s + 1, dl) };
            let (c, s, dl) = d[i - 1][j];
            let del = (c + 1, s, dl + 1);
            let (c, s, dl) = d[i][j - 1];
            let ins = (c + 1, s, dl);
            d[i][j] = [diag, del, ins]
                .into_iter()
                .min_by_key(|&(c, s, _)| (c, s))
                .expect("three candidates");
        }
    }
    let (cost, substitutions, deletions) = d[n][m];
    WerReport {
        substitutions,
        deletions,
        insertions: cost - substitutions - deletions,
        reference_words: n,
        wer: 0.0,
    }
    .finish()
}

/// Parses TRN lines `token token ... (utt_id)`.
pub fn parse_trn(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let open = line.rfind('(').filter(|_| line.ends_with(')')).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected a trailing (utt_id)".into(),
        })?;
        let utt = line[open + 1..line.len() - 1].trim();
        if utt.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty utterance id".into(),
            });
        }
        let tokens = line[..open].split_whitespace().map(str::to_string).collect();
        out.push((utt.to_string(), tokens));
    }
    Ok(out)
}

pub fn format_trn(utt_id: &str, tokens: &[String]) -> String {
    if tokens.is_empty() {
        format!("({utt_id})")
    } else {
        format!("{} ({utt_id})", tokens.join(" "))
    }
}

/// Per-utterance and pooled WER of `hyp` against `reference`; a reference
/// utterance missing from the hypotheses scores as all deletions, and
/// hypotheses without a reference are an error.
pub fn score_trn(
    reference: &[(String, Vec<String>)],
    hyp: &[(String, Vec<String>)],
) -> Result<(Vec<(String, WerReport)>, WerReport)> {
    if let Some((u, _)) = hyp.iter().find(|(u, _)| !reference.iter().any(|(r, _)| r == u)) {
        return Err(Error::UnknownUtterance(u.clone()));
    }
    let empty = Vec::new();
    let per: Vec<(String, WerReport)> = reference
        .iter()
        .map(|(u, r)| {
            let h = hyp.iter().find(|(hu, _)| hu == u).map_or(&empty, |(_, h)| h);
            (u.clone(), wer(r, h))
        })
        .collect();
    let total = WerReport::combine(&per.iter().map(|(_, r)| *r).collect::<Vec<_>>());
    Ok((per, total))
}
