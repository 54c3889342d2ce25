use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edit counts of one or more aligned sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`; zero when there are no reference words.
    pub fn rate(&self) -> f64 {
        if self.reference_words == 0 {
            0.0
        } else {
            self.errors() as f64 / self.reference_words as f64
        }
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.reference_words += other.reference_words;
    }
}

/// Unit-cost Levenshtein alignment counts; no reference check.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ErrorCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    // each cell holds (cost, S, I, D)
    let mut prev: Vec<(usize, usize, usize, usize)> = (0..=m).map(|j| (j, 0, j, 0)).collect();
    for i in 1..=n {
        let mut cur = vec![(i, 0, 0, i); m + 1];
        for j in 1..=m {
            let diag = prev[j - 1];
            let sub = if reference[i - 1] == hypothesis[j - 1] {
                diag
            } else {
                (diag.0 + 1, diag.1 + 1, diag.2, diag.3)
            };
            let del = (prev[j].0 + 1, prev[j].1, prev[j].2, prev[j].3 + 1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1, cur[j - 1].2 + 1, cur[j - 1].3);
            // equal cost: most substitutions
            cur[j] = [sub, del, ins]
                .into_iter()
                .min_by_key(|c| (c.0, usize::MAX - c.1))
                .expect("three options");
        }
        prev = cur;
    }
    let (_, s, ins, d) = prev[m];
    ErrorCounts {
        substitutions: s,
        insertions: ins,
        deletions: d,
        reference_words: n,
    }
}

/// Word error rate of one hypothesis.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<ErrorCounts> {
    if reference.is_empty() {
        return Err(Error::Invalid("WER needs a non-empty reference".into()));
    }
    Ok(edit_counts(reference, hypothesis))
}

/// Relative WER reduction `(base - new) / base`.
pub fn werr(base: f64, new: f64) -> Result<f64> {
    if base <= 0.0 {
        return Err(Error::Invalid(format!("WERR undefined for baseline WER {base}")));
    }
    Ok((base - new) / base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_cases() {
        assert_eq!(wer(&["a", "b"], &["a", "b"]).unwrap().rate(), 0.0);
        let c = wer(&["a", "b", "c"], &["a", "x", "c"]).unwrap();
        assert_eq!((c.substitutions, c.insertions, c.deletions), (1, 0, 0));
        assert!((c.rate() - 1.0 / 3.0).abs() < 1e-15);
        let c = wer::<&str>(&["a", "b"], &[]).unwrap();
        assert_eq!((c.rate(), c.deletions), (1.0, 2));
        assert!(wer::<&str>(&[], &["a"]).is_err());
    }

    #[test]
    fn relative_reduction() {
        assert!((werr(17.37, 15.05).unwrap() * 100.0 - 13.357).abs() < 1e-3);
        assert_eq!(werr(0.2, 0.2).unwrap(), 0.0);
        assert!(werr(0.0, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn insertions_mirror_deletions(r in prop::collection::vec(0u8..4, 1..8), h in prop::collection::vec(0u8..4, 1..8)) {
            let a = edit_counts(&r, &h);
            let b = edit_counts(&h, &r);
            prop_assert_eq!(a.errors(), b.errors());
            prop_assert_eq!(a.insertions, b.deletions);
            prop_assert_eq!(a.deletions, b.insertions);
        }
    }
}
