//! Sentence-level n-gram metrics: n-gram counting, BLEU-n with add-one
//! smoothing, and the derived gradient scale factor (1 - F) / n.

use std::collections::HashMap;

use crate::caption::{Caption, TokenId};
use crate::{Error, Result};

/// Counted n-grams of a single sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile {
    order: usize,
    counts: HashMap<Vec<TokenId>, usize>,
}

impl NgramProfile {
    /// Count the `order`-grams of `tokens` via sliding windows.
    pub fn of(tokens: &[TokenId], order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        let mut counts = HashMap::new();
        if tokens.len() >= order {
            for window in tokens.windows(order) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        Self { order, counts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self, gram: &[TokenId]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Total number of counted n-grams: `max(0, len - order + 1)`.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<TokenId>, usize)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    /// Pointwise max against another profile of the same order — the clip
    /// reference used by modified precision.
    pub fn max_with(&mut self, other: &NgramProfile) {
        debug_assert_eq!(self.order, other.order);
        for (gram, count) in &other.counts {
            let slot = self.counts.entry(gram.clone()).or_insert(0);
            *slot = (*slot).max(*count);
        }
    }
}

/// A sentence-level BLEU-n score together with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub value: f64,
    pub order: usize,
    pub brevity_penalty: f64,
    /// Clipped modified precision per order 1..=n, after smoothing.
    pub precisions: Vec<f64>,
    /// Set when the candidate had no content tokens; the score is 0.
    pub degenerate: bool,
}

/// Sentence-level BLEU-n of a candidate against one or more references.
///
/// BOS/EOS/PAD are stripped before scoring. Modified precision is clipped
/// against the per-gram maximum across references. Orders >= 2 receive
/// add-one smoothing when their clipped match count is zero, so short
/// sentences and near-misses keep a usable score; order 1 is unsmoothed.
/// The brevity penalty is exp(1 - r/c) for c < r, with r the reference
/// length closest to c (ties to the shorter reference).
pub fn bleu(candidate: &Caption, references: &[Caption], order: usize) -> Result<BleuScore> {
    if !(1..=4).contains(&order) {
        return Err(Error::Config(format!("BLEU order must be in 1..=4, got {order}")));
    }
    if references.is_empty() {
        return Err(Error::Config("BLEU requires at least one reference".into()));
    }
    let cand = candidate.content_ids();
    let refs: Vec<Vec<TokenId>> = references.iter().map(|r| r.content_ids()).collect();
    if refs.iter().any(|r| r.is_empty()) {
        return Err(Error::Config("BLEU references must be non-empty".into()));
    }
    if cand.is_empty() {
        return Ok(BleuScore {
            value: 0.0,
            order,
            brevity_penalty: 0.0,
            precisions: vec![0.0; order],
            degenerate: true,
        });
    }

    let mut precisions = Vec::with_capacity(order);
    for n in 1..=order {
        let cand_profile = NgramProfile::of(&cand, n);
        let mut clip = NgramProfile::of(&refs[0], n);
        for r in &refs[1..] {
            clip.max_with(&NgramProfile::of(r, n));
        }
        let total = cand_profile.total();
        let matched: usize =
            cand_profile.iter().map(|(gram, count)| count.min(clip.count(gram))).sum();
        let p = if n >= 2 && matched == 0 {
            (matched + 1) as f64 / (total + 1) as f64
        } else {
            matched as f64 / total as f64
        };
        precisions.push(p);
    }

    let c = cand.len();
    let r = closest_reference_length(c, &refs);
    let brevity_penalty = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };

    let value = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / order as f64;
        brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore { value, order, brevity_penalty, precisions, degenerate: false })
}

fn closest_reference_length(c: usize, refs: &[Vec<TokenId>]) -> usize {
    let mut best = refs[0].len();
    for r in &refs[1..] {
        let len = r.len();
        let d = len.abs_diff(c);
        let best_d = best.abs_diff(c);
        if d < best_d || (d == best_d && len < best) {
            best = len;
        }
    }
    best
}

/// The gradient scale factor (1 - F) / n of the latent update, where F is
/// the BLEU-n value. Zero exactly when the captions match; at most 1/n.
pub fn scale_factor(candidate: &Caption, references: &[Caption], order: usize) -> Result<f64> {
    let score = bleu(candidate, references, order)?;
    Ok((1.0 - score.value) / order as f64)
}
