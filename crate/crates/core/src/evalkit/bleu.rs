use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Metric, MetricCounts, MetricResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to matches and totals for n >= 2.
    AddOne,
}

fn ngrams<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

#[derive(Default)]
struct Stats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    hyp_len: usize,
    ref_len: usize,
}

fn sentence_stats(references: &[String], hypothesis: &str, max_n: usize) -> Stats {
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let refs: Vec<Vec<&str>> = references.iter().map(|r| r.split_whitespace().collect()).collect();
    let mut s = Stats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: hyp.len(),
        ref_len: 0,
    };
    // Closest reference length, shorter on ties.
    s.ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
        .unwrap_or(0);
    for n in 1..=max_n {
        let h = ngrams(&hyp, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        s.matches[n - 1] = h
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
    }
    s
}

fn score(s: Stats, smoothing: Smoothing) -> MetricResult {
    let max_n = s.matches.len();
    let mut log_sum = 0.0;
    let mut zero = s.hyp_len == 0;
    for n in 0..max_n {
        let (mut m, mut t) = (s.matches[n] as f64, s.totals[n] as f64);
        if smoothing == Smoothing::AddOne && n > 0 {
            m += 1.0;
            t += 1.0;
        }
        if m == 0.0 || t == 0.0 {
            zero = true;
            break;
        }
        log_sum += (m / t).ln();
    }
    let bp = if s.hyp_len == 0 {
        0.0
    } else if s.hyp_len >= s.ref_len {
        1.0
    } else {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    };
    let value = if zero {
        0.0
    } else {
        (bp * (log_sum / max_n as f64).exp()).min(1.0)
    };
    MetricResult {
        metric: Metric::Bleu,
        value,
        counts: MetricCounts::Ngram {
            matches: s.matches,
            totals: s.totals,
            hyp_len: s.hyp_len,
            ref_len: s.ref_len,
            brevity_penalty: bp,
        },
    }
}

fn check(references: &[String], max_n: usize) -> Result<()> {
    if references.is_empty() {
        return Err(Error::contract("bleu: at least one reference is required"));
    }
    if max_n == 0 {
        return Err(Error::contract("bleu: max_n must be at least 1"));
    }
    Ok(())
}

/// Sentence BLEU with clipped n-gram precision, geometric mean and brevity
/// penalty. Tokens are whitespace-delimited.
pub fn bleu(references: &[String], hypothesis: &str, max_n: usize, smoothing: Smoothing) -> Result<MetricResult> {
    check(references, max_n)?;
    Ok(score(sentence_stats(references, hypothesis, max_n), smoothing))
}

/// Corpus BLEU: n-gram counts and lengths are pooled before scoring.
pub fn corpus_bleu(items: &[(Vec<String>, String)], max_n: usize, smoothing: Smoothing) -> Result<MetricResult> {
    if items.is_empty() {
        return Err(Error::contract("bleu: empty corpus"));
    }
    for (refs, _) in items {
        check(refs, max_n)?;
    }
    let per = crate::exec::Exec::default().map_slice(items, |(r, h)| sentence_stats(r, h, max_n));
    let mut total = Stats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..Default::default()
    };
    for s in per {
        for n in 0..max_n {
            total.matches[n] += s.matches[n];
            total.totals[n] += s.totals[n];
        }
        total.hyp_len += s.hyp_len;
        total.ref_len += s.ref_len;
    }
    Ok(score(total, smoothing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(r: &[&str]) -> Vec<String> {
        r.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_and_disjoint() {
        let r = refs(&["the quick brown fox jumps"]);
        assert_eq!(
            bleu(&r, "the quick brown fox jumps", 4, Smoothing::None).unwrap().value,
            1.0
        );
        assert_eq!(bleu(&r, "a b c d e", 4, Smoothing::None).unwrap().value, 0.0);
    }

    #[test]
    fn brevity_penalty_case() {
        let r = refs(&["the cat sat"]);
        let v = bleu(&r, "the cat", 2, Smoothing::None).unwrap().value;
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_is_zero() {
        assert_eq!(bleu(&refs(&["a b"]), "", 4, Smoothing::None).unwrap().value, 0.0);
        assert!(bleu(&[], "a", 4, Smoothing::None).is_err());
    }

    #[test]
    fn clipping() {
        let r = bleu(&refs(&["the cat"]), "the the the", 1, Smoothing::None).unwrap();
        match r.counts {
            MetricCounts::Ngram { matches, totals, .. } => {
                assert_eq!(matches, vec![1]);
                assert_eq!(totals, vec![3]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn smoothing_rescues_short_hypotheses() {
        let r = refs(&["a b c d"]);
        assert_eq!(bleu(&r, "a x c y", 4, Smoothing::None).unwrap().value, 0.0);
        assert!(bleu(&r, "a x c y", 4, Smoothing::AddOne).unwrap().value > 0.0);
    }

    #[test]
    fn corpus_pools_counts() {
        let items = vec![
            (refs(&["a b c d"]), "a b c d".to_string()),
            (refs(&["e f g h i"]), "e f g h i".to_string()),
        ];
        assert_eq!(corpus_bleu(&items, 4, Smoothing::None).unwrap().value, 1.0);
    }
}
