use farfield_core::fusion::{
    cn_to_ctm, format_ctm, hystoc_confusion_network, nbest_to_ctm, parse_ctm, parse_nbest, posteriors_from_scores,
    rover, rover_ctm, wer, CtmRecord, RoverConfig, ScoredWord,
};
use proptest::prelude::*;

fn words(n: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..n)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn hyps() -> impl Strategy<Value = Vec<(Vec<String>, f64)>> {
    prop::collection::vec((words(6), 0.01f64..1.0), 1..6).prop_map(|mut v| {
        let total: f64 = v.iter().map(|(_, p)| p).sum();
        v.iter_mut().for_each(|(_, p)| *p /= total);
        v
    })
}

/// Levenshtein distance by plain recursion over prefixes.
fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut memo = vec![vec![usize::MAX; b.len() + 1]; a.len() + 1];
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut Vec<Vec<usize>>) -> usize {
        if memo[i][j] != usize::MAX {
            return memo[i][j];
        }
        let v = if i == 0 {
            j
        } else if j == 0 {
            i
        } else {
            let sub = go(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
            sub.min(go(a, b, i - 1, j, memo) + 1).min(go(a, b, i, j - 1, memo) + 1)
        };
        memo[i][j] = v;
        v
    }
    go(a, b, a.len(), b.len(), &mut memo)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn slot_masses_sum_to_one(h in hyps()) {
        let cn = hystoc_confusion_network(&h).unwrap();
        for s in &cn.slots {
            prop_assert!((s.total() - 1.0).abs() <= 1e-9);
            prop_assert!(s.arcs.iter().filter(|a| a.word.is_none()).count() <= 1);
            prop_assert!(s.arcs.iter().all(|a| (0.0..=1.0 + 1e-12).contains(&a.confidence)));
        }
    }

    #[test]
    fn adding_a_hypothesis_moves_confidences_by_at_most_its_mass(h in hyps(), extra in words(6), frac in 0.0f64..1.0) {
        // keep the pivot: the newcomer is no more probable than it
        let top = h.iter().map(|(_, p)| *p).fold(0.0, f64::max);
        let p = frac * top;
        let before = hystoc_confusion_network(&h).unwrap();
        let mut more = h.clone();
        more.push((extra, p));
        let after = hystoc_confusion_network(&more).unwrap();
        let pivot_slots = |cn: &farfield_core::fusion::ConfusionNetwork| {
            cn.slots.iter().filter(|s| s.pivot.is_some()).cloned().collect::<Vec<_>>()
        };
        let (b, a) = (pivot_slots(&before), pivot_slots(&after));
        prop_assert_eq!(b.len(), a.len());
        for (sb, sa) in b.iter().zip(&a) {
            for arc in sb.arcs.iter().chain(&sa.arcs) {
                let w = arc.word.as_deref();
                prop_assert!((sa.confidence(w) - sb.confidence(w)).abs() <= p + 1e-12);
            }
        }
    }

    #[test]
    fn rover_of_one_system_is_identity(x in prop::collection::vec((prop::sample::select(vec!["a", "b", "c"]), 0.0f64..=1.0), 0..8)) {
        let sys: Vec<ScoredWord> = x.into_iter().map(|(t, c)| ScoredWord::new(t, c)).collect();
        prop_assert_eq!(rover(&[sys.clone()], &RoverConfig::default()).unwrap(), sys);
    }

    #[test]
    fn agreeing_systems_fuse_to_themselves(x in words(8), n in 1usize..5) {
        let sys: Vec<ScoredWord> = x.iter().map(|t| ScoredWord::new(t.clone(), 0.7)).collect();
        let out = rover(&vec![sys.clone(); n], &RoverConfig::default()).unwrap();
        prop_assert_eq!(out, sys);
    }

    #[test]
    fn wer_matches_edit_distance_and_swaps(r in words(8), h in words(8)) {
        let f = wer(&r, &h);
        prop_assert_eq!(f.errors(), edit_distance(&r, &h));
        let g = wer(&h, &r);
        prop_assert_eq!(f.substitutions, g.substitutions);
        prop_assert_eq!((f.insertions, f.deletions), (g.deletions, g.insertions));
    }

    #[test]
    fn ctm_round_trip(x in prop::collection::vec((prop::sample::select(vec!["a", "b", "c"]), 0.0f64..=1.0), 0..8)) {
        let recs: Vec<CtmRecord> = x.iter().enumerate().map(|(i, (t, c))| CtmRecord::indexed("u1", i, t, *c)).collect();
        prop_assert_eq!(parse_ctm(&format_ctm(&recs)).unwrap(), recs);
    }
}

#[test]
fn softmax_posteriors() {
    let lists = parse_nbest(&format!(
        "u1\t{}\tA B C\nu1\t{}\tA B\nu1\t{}\tA C\n",
        0.7f64.ln(),
        0.2f64.ln(),
        0.1f64.ln()
    ))
    .unwrap();
    let p = posteriors_from_scores(&lists[0], 1.0, false).unwrap();
    for (a, b) in p.iter().zip([0.7, 0.2, 0.1]) {
        assert!((a - b).abs() < 1e-12);
    }
    let flat = posteriors_from_scores(&lists[0], 1e6, false).unwrap();
    assert!(flat.iter().all(|q| (q - 1.0 / 3.0).abs() < 1e-4));
    assert!(posteriors_from_scores(&lists[0], 0.0, false).is_err());
    let ctm = nbest_to_ctm(&lists[0], 1.0, false).unwrap();
    let got: Vec<(&str, f64)> = ctm.iter().map(|r| (r.token.as_str(), r.confidence)).collect();
    for ((t, c), (et, ec)) in got.iter().zip([("A", 1.0), ("B", 0.9), ("C", 0.8)]) {
        assert_eq!(*t, et);
        assert!((c - ec).abs() < 1e-12);
    }
}

#[test]
fn empty_network_gives_empty_ctm() {
    let cn = hystoc_confusion_network(&[(Vec::<String>::new(), 1.0)]).unwrap();
    assert!(cn_to_ctm(&cn, "u").is_empty());
}

#[test]
fn rover_over_ctm_files() {
    let a = parse_ctm("u1 1 0 1 a 1.0\nu1 1 1 1 b 1.0\nu2 1 0 1 x 0.9\n").unwrap();
    let b = parse_ctm("u1 1 0 1 a 1.0\nu1 1 1 1 c 1.0\n").unwrap();
    let c = parse_ctm("u1 1 0 1 a 1.0\n").unwrap();
    let out = rover_ctm(&[a, b, c], &RoverConfig::default()).unwrap();
    let toks: Vec<(&str, &str)> = out.iter().map(|r| (r.utt_id.as_str(), r.token.as_str())).collect();
    // u2 is seen by one system of three: x scores 0.8/3 + 0.2*0.9 = 0.447,
    // the empty word 0.8*2/3 + 0.2*0.4 = 0.613
    assert_eq!(toks, vec![("u1", "a"), ("u1", "b")]);
}
