//! BLEU and ROUGE-L on whitespace tokens (case-sensitive, punctuation kept).

use std::collections::HashMap;

use super::MetricsError;
use crate::textdiff::tokenize;

const ROUGE_BETA: f64 = 1.2;

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Default, Clone)]
struct BleuStats {
    matches: Vec<u64>,
    totals: Vec<u64>,
    cand_len: u64,
    ref_len: u64,
}

fn sentence_stats(candidate: &str, references: &[&str], max_n: usize) -> BleuStats {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<&str>> = references.iter().map(|r| tokenize(r)).collect();
    let mut stats = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        cand_len: cand.len() as u64,
        // Closest reference length, shorter on ties.
        ref_len: refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| (len.abs_diff(cand.len()), len))
            .unwrap_or(0) as u64,
    };
    for n in 1..=max_n {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        stats.matches[n - 1] = clipped as u64;
        stats.totals[n - 1] = cand.len().saturating_sub(n - 1) as u64;
    }
    stats
}

fn bleu_from_stats(stats: &BleuStats) -> f64 {
    if stats.cand_len == 0 || stats.matches[0] == 0 {
        return 0.0;
    }
    let max_n = stats.matches.len();
    let mut log_sum = 0.0;
    for n in 0..max_n {
        let (m, t) = (stats.matches[n] as f64, stats.totals[n] as f64);
        // Unigrams are unsmoothed; higher orders get add-one smoothing.
        let p = if n == 0 { m / t } else { (m + 1.0) / (t + 1.0) };
        log_sum += p.ln();
    }
    let (c, r) = (stats.cand_len as f64, stats.ref_len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * (log_sum / max_n as f64).exp()
}

/// Sentence BLEU in `[0, 100]` with uniform weights up to `max_n`, brevity
/// penalty against the closest reference length, and add-one smoothing of
/// the 2..=max_n gram precisions.
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S], max_n: usize) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let refs: Vec<&str> = references.iter().map(AsRef::as_ref).collect();
    Ok(bleu_from_stats(&sentence_stats(candidate, &refs, max_n.max(1))))
}

/// Corpus BLEU: clipped counts and lengths are summed over all segments
/// before the precisions and brevity penalty are taken.
pub fn corpus_bleu<S: AsRef<str>>(
    candidates: &[S],
    references: &[Vec<S>],
    max_n: usize,
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            pred: candidates.len(),
            reference: references.len(),
        });
    }
    let max_n = max_n.max(1);
    let mut total = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..BleuStats::default()
    };
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(MetricsError::EmptyReference);
        }
        let refs: Vec<&str> = refs.iter().map(AsRef::as_ref).collect();
        let s = sentence_stats(cand.as_ref(), &refs, max_n);
        for n in 0..max_n {
            total.matches[n] += s.matches[n];
            total.totals[n] += s.totals[n];
        }
        total.cand_len += s.cand_len;
        total.ref_len += s.ref_len;
    }
    Ok(bleu_from_stats(&total))
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure in `[0, 100]` with recall weighted by beta = 1.2.
/// Two empty strings score 100.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() && r.is_empty() {
        return 100.0;
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / c.len() as f64;
    let recall = lcs as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    100.0 * (1.0 + b2) * precision * recall / (recall + b2 * precision)
}
