/// One step of an edit alignment between a reference sequence `a` (rows)
/// and a new sequence `b` (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Match(usize, usize),
    Sub(usize, usize),
    /// `a[i]` has no counterpart in `b`.
    Del(usize),
    /// `b[j]` has no counterpart in `a`.
    Ins(usize),
}

/// Unit-cost Levenshtein alignment. Among optimal alignments the trace
/// prefers, step by step from the end, match, then substitution, then
/// deletion, then insertion.
pub fn align(n: usize, m: usize, same: impl Fn(usize, usize) -> bool) -> Vec<Op> {
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(!same(i - 1, j - 1));
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let eq = same(i - 1, j - 1);
            if eq && d[i][j] == d[i - 1][j - 1] {
                ops.push(Op::Match(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
            if !eq && d[i][j] == d[i - 1][j - 1] + 1 {
                ops.push(Op::Sub(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            ops.push(Op::Del(i - 1));
            i -= 1;
        } else {
            ops.push(Op::Ins(j - 1));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(a: &str, b: &str) -> Vec<Op> {
        let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        align(a.len(), b.len(), |i, j| a[i] == b[j])
    }

    #[test]
    fn deletion_inside() {
        assert_eq!(run("abc", "ac"), vec![Op::Match(0, 0), Op::Del(1), Op::Match(2, 1)]);
    }

    #[test]
    fn substitution_preferred_over_indel_pair() {
        assert_eq!(run("a", "b"), vec![Op::Sub(0, 0)]);
    }

    #[test]
    fn empty_sides() {
        assert_eq!(run("", "xy"), vec![Op::Ins(0), Op::Ins(1)]);
        assert_eq!(run("xy", ""), vec![Op::Del(0), Op::Del(1)]);
        assert!(run("", "").is_empty());
    }
}
