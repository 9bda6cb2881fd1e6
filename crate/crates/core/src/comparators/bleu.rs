use std::collections::HashMap;

use super::ComparatorError;

/// Lower-cased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of `candidate` against a single `reference`.
///
/// Uniform weights over n = 1..=max_n, clipped counts, brevity penalty when
/// the candidate is shorter. An order with zero clipped matches is smoothed
/// to (0 + 1) / (total + 1); orders with matches are left as they are.
pub fn bleu(reference: &str, candidate: &str, max_n: usize) -> Result<f64, ComparatorError> {
    if max_n == 0 {
        return Err(ComparatorError::Config("bleu max_n must be positive".into()));
    }
    let ref_tokens = tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(ComparatorError::Undefined("empty BLEU reference".into()));
    }
    let cand_tokens = tokenize(candidate);
    if cand_tokens.is_empty() {
        return Ok(0.0);
    }
    if ref_tokens == cand_tokens {
        return Ok(1.0);
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let ref_counts = ngram_counts(&ref_tokens, n);
        let cand_counts = ngram_counts(&cand_tokens, n);
        let total: usize = cand_counts.values().sum();
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let geo_mean = (log_sum / max_n as f64).exp();
    Ok((brevity_penalty(ref_tokens.len(), cand_tokens.len()) * geo_mean).clamp(0.0, 1.0))
}

pub fn brevity_penalty(ref_len: usize, cand_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    }
}
