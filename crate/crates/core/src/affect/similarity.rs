//! Edit-distance based word similarity used for vocabulary and lexicon resolution.

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)`, with two empty strings counting as identical.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Upper bound on [`string_similarity`] from lengths alone.
pub(crate) fn similarity_bound(len_a: usize, len_b: usize) -> f64 {
    let longest = len_a.max(len_b);
    if longest == 0 {
        return 1.0;
    }
    1.0 - len_a.abs_diff(len_b) as f64 / longest as f64
}

/// Most similar candidate whose similarity to `word` is strictly above
/// `threshold`. Ties go to the lexicographically smallest candidate.
pub fn best_match<'a, I>(word: &str, candidates: I, threshold: f64) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let len = word.chars().count();
    let mut best: Option<(f64, &str)> = None;
    for c in candidates {
        if similarity_bound(len, c.chars().count()) <= threshold {
            continue;
        }
        let s = string_similarity(word, c);
        if s <= threshold {
            continue;
        }
        best = match best {
            Some((bs, bw)) if bs > s || (bs == s && bw <= c) => Some((bs, bw)),
            _ => Some((s, c)),
        };
    }
    best.map(|(_, w)| w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Exponential reference recursion straight from the definition.
    fn lev_oracle(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                if x == y {
                    lev_oracle(ra, rb)
                } else {
                    1 + lev_oracle(ra, b).min(lev_oracle(a, rb)).min(lev_oracle(ra, rb))
                }
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(string_similarity("cat", "cat"), 1.0);
        assert!((string_similarity("kat", "cat") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(string_similarity("a", ""), 0.0);
        assert_eq!(string_similarity("", ""), 1.0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn boundary_is_strict() {
        // one substitution in ten characters is exactly 0.9
        assert!((string_similarity("abcdefghij", "abcdefghiq") - 0.9).abs() < 1e-15);
        assert_eq!(best_match("abcdefghij", ["abcdefghiq"], 0.9), None);
        assert_eq!(best_match("abcdefghijk", ["abcdefghijq"], 0.9), Some("abcdefghijq"));
    }

    #[test]
    fn ties_break_lexicographically() {
        let cands = ["abcdefghijkz", "abcdefghijky"];
        assert_eq!(best_match("abcdefghijkx", cands, 0.9), Some("abcdefghijky"));
    }

    proptest! {
        #[test]
        fn matches_oracle(a in "[abc]{0,6}", b in "[abc]{0,6}") {
            let ca: Vec<char> = a.chars().collect();
            let cb: Vec<char> = b.chars().collect();
            prop_assert_eq!(levenshtein(&a, &b), lev_oracle(&ca, &cb));
        }

        #[test]
        fn symmetric_and_identity(a in "[a-e]{0,8}", b in "[a-e]{0,8}") {
            prop_assert_eq!(string_similarity(&a, &b), string_similarity(&b, &a));
            prop_assert_eq!(string_similarity(&a, &b) == 1.0, a == b);
            let s = string_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
