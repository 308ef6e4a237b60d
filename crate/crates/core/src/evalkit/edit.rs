use serde::Serialize;

use crate::error::{Error, Result};

use super::{Metric, MetricCounts, MetricResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub hits: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn merge(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            hits: self.hits + o.hits,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Levenshtein alignment with substitution/deletion/insertion counts.
/// Backtrace prefers diagonal moves, then deletions.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut c = EditCounts {
        reference_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                if same {
                    c.hits += 1;
                } else {
                    c.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '。' | '，' | '！' | '？' | '、' | '；' | '：' | '…' | '“' | '”' | '‘' | '’'
        )
}

/// WER tokenization: lowercase, split on whitespace, trim punctuation from
/// both ends of each word, drop words that were pure punctuation.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(is_punct).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn rate(metric: Metric, counts: EditCounts) -> Result<MetricResult> {
    if counts.reference_len == 0 {
        return Err(Error::contract(format!("{metric:?}: empty reference")));
    }
    Ok(MetricResult {
        metric,
        value: counts.errors() as f64 / counts.reference_len as f64,
        counts: MetricCounts::Edit(counts),
    })
}

/// Word error rate `(S + D + I) / N`.
pub fn wer(reference: &str, hypothesis: &str) -> Result<MetricResult> {
    rate(
        Metric::Wer,
        edit_counts(&normalize_words(reference), &normalize_words(hypothesis)),
    )
}

/// Character error rate over Unicode code points; whitespace counts.
pub fn cer(reference: &str, hypothesis: &str) -> Result<MetricResult> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    rate(Metric::Cer, edit_counts(&r, &h))
}

/// Corpus-level rate: total errors over total reference length.
pub fn corpus_error_rate(metric: Metric, pairs: &[(String, String)]) -> Result<MetricResult> {
    let per_pair = crate::exec::Exec::default().map_slice(pairs, |(r, h)| match metric {
        Metric::Wer => Ok(edit_counts(&normalize_words(r), &normalize_words(h))),
        Metric::Cer => {
            let r: Vec<char> = r.chars().collect();
            let h: Vec<char> = h.chars().collect();
            Ok(edit_counts(&r, &h))
        }
        other => Err(Error::contract(format!("{other:?} is not an edit-distance metric"))),
    });
    let total = per_pair
        .into_iter()
        .try_fold(EditCounts::default(), |acc, c| c.map(|c| acc.merge(c)))?;
    rate(metric, total)
}

pub fn accuracy(predictions: &[String], labels: &[String]) -> Result<MetricResult> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::contract(format!(
            "accuracy: {} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(MetricResult {
        metric: Metric::Accuracy,
        value: correct as f64 / labels.len() as f64,
        counts: MetricCounts::Accuracy {
            correct,
            total: labels.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wer_examples() {
        assert_eq!(wer("hello world", "hello world").unwrap().value, 0.0);
        let r = wer("hello world", "hello word").unwrap();
        assert_eq!(r.value, 0.5);
        assert!(matches!(
            r.counts,
            MetricCounts::Edit(EditCounts { substitutions: 1, .. })
        ));
        let r = wer("a b c", "").unwrap();
        assert_eq!(r.value, 1.0);
        assert!(matches!(r.counts, MetricCounts::Edit(EditCounts { deletions: 3, .. })));
        assert!(wer("", "a").is_err());
        assert!(wer(" ... ", "a").is_err());
    }

    #[test]
    fn wer_normalizes_case_and_punctuation() {
        assert_eq!(wer("Hello, World!", "hello world").unwrap().value, 0.0);
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer("abc", "abc").unwrap().value, 0.0);
        assert!((cer("abc", "abd").unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cer("你好", "你号").unwrap().value, 0.5);
        assert_eq!(cer("a b", "ab").unwrap().value, 1.0 / 3.0);
    }

    #[test]
    fn insertions_can_exceed_one() {
        let r = wer("a", "a b c").unwrap();
        assert_eq!(r.value, 2.0);
    }

    #[test]
    fn corpus_rate_pools_counts() {
        let pairs = vec![
            ("a b".to_string(), "a".to_string()),
            ("c d e f".to_string(), "c d e f".to_string()),
        ];
        assert!((corpus_error_rate(Metric::Wer, &pairs).unwrap().value - 1.0 / 6.0).abs() < 1e-15);
        assert!(corpus_error_rate(Metric::Bleu, &pairs).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let p = vec!["a".to_string(), "b".to_string()];
        let l = vec!["a".to_string(), "c".to_string()];
        assert_eq!(accuracy(&p, &l).unwrap().value, 0.5);
        assert!(accuracy(&p, &l[..1]).is_err());
    }
}
