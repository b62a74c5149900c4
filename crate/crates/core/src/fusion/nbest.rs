use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    /// Log-probability, or a probability when the list says so.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub utt_id: String,
    pub hypotheses: Vec<Hypothesis>,
}

/// Parses `utt_id<TAB>score<TAB>token token ...` lines, grouping
/// consecutive or scattered lines of one utterance in order of first
/// appearance. Blank lines are skipped; an empty token field is an empty
/// hypothesis.
pub fn parse_nbest(text: &str) -> Result<Vec<NBestList>> {
    let mut lists: Vec<NBestList> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let utt = fields.next().unwrap_or("").trim();
        let score = fields.next().ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected utt_id<TAB>score<TAB>tokens".into(),
        })?;
        let score: f64 = score.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("score {score:?} is not a number"),
        })?;
        if utt.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty utterance id".into(),
            });
        }
        if !score.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: "score must be finite".into(),
            });
        }
        let tokens = fields
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let hyp = Hypothesis { tokens, score };
        match lists.iter_mut().find(|l| l.utt_id == utt) {
            Some(l) => l.hypotheses.push(hyp),
            None => lists.push(NBestList {
                utt_id: utt.to_string(),
                hypotheses: vec![hyp],
            }),
        }
    }
    Ok(lists)
}

/// Softmax of `score / temperature`. With `scores_are_probs` the scores are
/// used as probabilities and only renormalised.
pub fn posteriors_from_scores(n: &NBestList, temperature: f64, scores_are_probs: bool) -> Result<Vec<f64>> {
    if n.hypotheses.is_empty() {
        return Err(Error::invalid(format!("n-best list for {} is empty", n.utt_id)));
    }
    let scores: Vec<f64> = n.hypotheses.iter().map(|h| h.score).collect();
    if scores_are_probs {
        if scores.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("probabilities must be non-negative"));
        }
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("probabilities sum to zero"));
        }
        return Ok(scores.iter().map(|p| p / total).collect());
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(scores: &[f64]) -> NBestList {
        NBestList {
            utt_id: "u".into(),
            hypotheses: scores
                .iter()
                .map(|&score| Hypothesis {
                    tokens: vec!["a".into()],
                    score,
                })
                .collect(),
        }
    }

    #[test]
    fn parses_and_groups() {
        let text = "u1\t-1.5\ta b c\nu2\t-0.1\tx\n\nu1\t-2\t\n";
        let lists = parse_nbest(text).unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].hypotheses.len(), 2);
        assert_eq!(lists[0].hypotheses[0].tokens, vec!["a", "b", "c"]);
        assert!(lists[0].hypotheses[1].tokens.is_empty());
        assert_eq!(lists[1].hypotheses[0].score, -0.1);
    }

    #[test]
    fn parse_errors_carry_line() {
        match parse_nbest("u1\t-1\ta\nu2 nonsense") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_nbest("u1\tabc\ta").is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = posteriors_from_scores(&list(&[0.3; 4]), 1.0, false).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let p = posteriors_from_scores(&list(&[0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()]), 1.0, false).unwrap();
        for (a, b) in p.iter().zip([0.7, 0.2, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = posteriors_from_scores(&list(&[-1.0, -5.0, -30.0]), 1e6, false).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-4));
        assert!(posteriors_from_scores(&list(&[0.0]), 0.0, false).is_err());
        let p = posteriors_from_scores(&list(&[2.0, 6.0]), 1.0, true).unwrap();
        assert_eq!(p, vec![0.25, 0.75]);
    }
}
