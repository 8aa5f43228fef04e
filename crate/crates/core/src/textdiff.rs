//! Word-level diff statistics for reader studies.
//!
//! The matcher is the gestalt (Ratcliff/Obershelp) scheme: find the longest
//! common block, recurse on the pieces left and right of it. Among equally long
//! blocks the one starting earliest in `a` wins, then earliest in `b`. There is
//! no junk or popularity heuristic, so results are fully determined by the two
//! token sequences.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::taxonomy::LabelSet;

/// Splits on Unicode whitespace. Case and punctuation are preserved.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// A run of `len` equal tokens at `a[a_pos..]` and `b[b_pos..]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub a_pos: usize,
    pub b_pos: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Equal,
    Insert,
    Delete,
    Replace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opcode {
    pub kind: OpKind,
    pub a_lo: usize,
    pub a_hi: usize,
    pub b_lo: usize,
    pub b_hi: usize,
}

/// Longest common block of `a[alo..ahi]` and `b[blo..bhi]`.
fn longest_match<T: Eq + std::hash::Hash>(
    a: &[T],
    b2j: &HashMap<&T, Vec<usize>>,
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
) -> Block {
    let mut best = Block {
        a_pos: alo,
        b_pos: blo,
        len: 0,
    };
    // j2len[j] = length of the match ending at a[i-1], b[j].
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for (i, token) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut next: HashMap<usize, usize> = HashMap::new();
        if let Some(positions) = b2j.get(token) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > 0 {
                    j2len.get(&(j - 1)).copied().unwrap_or(0)
                } else {
                    0
                } + 1;
                next.insert(j, k);
                if k > best.len {
                    best = Block {
                        a_pos: i + 1 - k,
                        b_pos: j + 1 - k,
                        len: k,
                    };
                }
            }
        }
        j2len = next;
    }
    best
}

/// Matching blocks of `a` and `b`, ordered, non-overlapping, with adjacent
/// blocks merged, terminated by the zero-length sentinel `(a.len(), b.len(), 0)`.
pub fn matching_blocks<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> Vec<Block> {
    let mut b2j: HashMap<&T, Vec<usize>> = HashMap::new();
    for (j, token) in b.iter().enumerate() {
        b2j.entry(token).or_default().push(j);
    }
    let mut queue = vec![((0, a.len()), (0, b.len()))];
    let mut blocks = Vec::new();
    while let Some(((alo, ahi), (blo, bhi))) = queue.pop() {
        let m = longest_match(a, &b2j, (alo, ahi), (blo, bhi));
        if m.len > 0 {
            if alo < m.a_pos && blo < m.b_pos {
                queue.push(((alo, m.a_pos), (blo, m.b_pos)));
            }
            if m.a_pos + m.len < ahi && m.b_pos + m.len < bhi {
                queue.push(((m.a_pos + m.len, ahi), (m.b_pos + m.len, bhi)));
            }
            blocks.push(m);
        }
    }
    blocks.sort_by_key(|m| (m.a_pos, m.b_pos));

    let mut merged: Vec<Block> = Vec::with_capacity(blocks.len() + 1);
    for m in blocks {
        match merged.last_mut() {
            Some(last) if last.a_pos + last.len == m.a_pos && last.b_pos + last.len == m.b_pos => {
                last.len += m.len;
            }
            _ => merged.push(m),
        }
    }
    merged.push(Block {
        a_pos: a.len(),
        b_pos: b.len(),
        len: 0,
    });
    merged
}

/// Edit script turning `a` into `b`. Opcodes tile both sequences in order.
pub fn opcodes<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> Vec<Opcode> {
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    for block in matching_blocks(a, b) {
        let kind = match (i < block.a_pos, j < block.b_pos) {
            (true, true) => Some(OpKind::Replace),
            (true, false) => Some(OpKind::Delete),
            (false, true) => Some(OpKind::Insert),
            (false, false) => None,
        };
        if let Some(kind) = kind {
            ops.push(Opcode {
                kind,
                a_lo: i,
                a_hi: block.a_pos,
                b_lo: j,
                b_hi: block.b_pos,
            });
        }
        i = block.a_pos + block.len;
        j = block.b_pos + block.len;
        if block.len > 0 {
            ops.push(Opcode {
                kind: OpKind::Equal,
                a_lo: block.a_pos,
                a_hi: i,
                b_lo: block.b_pos,
                b_hi: j,
            });
        }
    }
    ops
}

/// Word-level edit counts and similarity of an original/edited text pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub insertions: usize,
    pub deletions: usize,
    /// A replaced span counts `max(original len, edited len)` tokens.
    pub replacements: usize,
    pub matches: usize,
    /// `2 * matches / (original tokens + edited tokens)`; 1.0 for two empty texts.
    pub similarity_ratio: f64,
}

impl DiffStats {
    pub fn changed(&self) -> bool {
        self.similarity_ratio < 1.0
            || self.insertions + self.deletions + self.replacements > 0
    }
}

pub fn similarity_ratio(matches: usize, total_tokens: usize) -> f64 {
    if total_tokens == 0 {
        1.0
    } else {
        2.0 * matches as f64 / total_tokens as f64
    }
}

pub fn diff_stats(original: &str, edited: &str) -> DiffStats {
    let a = tokenize(original);
    let b = tokenize(edited);
    let mut stats = DiffStats {
        insertions: 0,
        deletions: 0,
        replacements: 0,
        matches: 0,
        similarity_ratio: 0.0,
    };
    for op in opcodes(&a, &b) {
        let (a_len, b_len) = (op.a_hi - op.a_lo, op.b_hi - op.b_lo);
        match op.kind {
            OpKind::Equal => stats.matches += a_len,
            OpKind::Insert => stats.insertions += b_len,
            OpKind::Delete => stats.deletions += a_len,
            OpKind::Replace => stats.replacements += a_len.max(b_len),
        }
    }
    stats.similarity_ratio = similarity_ratio(stats.matches, a.len() + b.len());
    stats
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no records to summarize")]
pub struct EmptyInput;

/// Agreement between automatic and reviewed utterance labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConsistency {
    pub n: usize,
    /// Pairs whose disease names agree, statuses ignored.
    pub matched: usize,
    /// Pairs that agree exactly under the comparison used.
    pub exact_matches: usize,
    pub exact_match_rate: f64,
    pub mean_jaccard: f64,
}

/// Compares label-set pairs. With `with_status` the compared items are
/// `(disease, status)` pairs, otherwise disease names.
pub fn label_consistency(
    pairs: &[(LabelSet, LabelSet)],
    with_status: bool,
) -> Result<LabelConsistency, EmptyInput> {
    if pairs.is_empty() {
        return Err(EmptyInput);
    }
    let items = |set: &LabelSet| -> BTreeSet<String> {
        if with_status {
            set.iter().map(|l| l.to_string()).collect()
        } else {
            set.disease_set()
        }
    };
    let mut matched = 0;
    let mut exact = 0;
    let mut jaccard_sum = 0.0;
    for (auto, reviewed) in pairs {
        if auto.disease_set() == reviewed.disease_set() {
            matched += 1;
        }
        let (x, y) = (items(auto), items(reviewed));
        if x == y {
            exact += 1;
        }
        jaccard_sum += jaccard(&x, &y);
    }
    let n = pairs.len();
    Ok(LabelConsistency {
        n,
        matched,
        exact_matches: exact,
        exact_match_rate: exact as f64 / n as f64,
        mean_jaccard: jaccard_sum / n as f64,
    })
}

/// Aggregate edit statistics over reviewed studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub total: usize,
    pub changed: usize,
    /// Percentage in `[0, 100]`.
    pub percent_changed: f64,
    pub mean_insertions: f64,
    pub mean_deletions: f64,
    pub mean_replacements: f64,
    pub mean_similarity_ratio: f64,
}

impl ReviewSummary {
    pub fn from_stats(stats: &[DiffStats]) -> Result<ReviewSummary, EmptyInput> {
        if stats.is_empty() {
            return Err(EmptyInput);
        }
        let n = stats.len() as f64;
        let mean = |f: fn(&DiffStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        let changed = stats.iter().filter(|s| s.changed()).count();
        Ok(ReviewSummary {
            total: stats.len(),
            changed,
            percent_changed: 100.0 * changed as f64 / n,
            mean_insertions: mean(|s| s.insertions as f64),
            mean_deletions: mean(|s| s.deletions as f64),
            mean_replacements: mean(|s| s.replacements as f64),
            mean_similarity_ratio: mean(|s| s.similarity_ratio),
        })
    }

    /// Plain-text listing, one statistic per line.
    pub fn listing(&self) -> String {
        format!(
            "Total studies reviewed: {}\n\
             Studies with changes: {} ({:.2}%)\n\
             Average insertions per study: {:.2}\n\
             Average deletions per study: {:.2}\n\
             Average replacements per study: {:.2}\n\
             Average similarity ratio: {:.2}",
            self.total,
            self.changed,
            self.percent_changed,
            self.mean_insertions,
            self.mean_deletions,
            self.mean_replacements,
            self.mean_similarity_ratio
        )
    }
}

impl LabelConsistency {
    pub fn listing(&self) -> String {
        format!(
            "Total utterances reviewed: {}\n\
             Matched utterances: {}\n\
             Exact Match Rate: {:.2}\n\
             Average Jaccard Similarity: {:.2}",
            self.n, self.matched, self.exact_match_rate, self.mean_jaccard
        )
    }
}

/// Diff statistics of every `(original, edited)` pair, aggregated.
pub fn review_summary<S: AsRef<str>>(records: &[(S, S)]) -> Result<ReviewSummary, EmptyInput> {
    let stats: Vec<DiffStats> = records
        .iter()
        .map(|(o, e)| diff_stats(o.as_ref(), e.as_ref()))
        .collect();
    ReviewSummary::from_stats(&stats)
}
