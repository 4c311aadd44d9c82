//! Sequential-dependence Markov random field ranker.
//!
//! Cliques are the single query terms (T), adjacent query-term pairs matched
//! as exact ordered bigrams (O), and the same pairs matched anywhere inside
//! an unordered window (U). Each feature is a Dirichlet-smoothed log
//! probability.

use super::{MrfParams, Query, RankedList};
use crate::corpus::{DocId, PositionalIndex};

/// Collection counts of zero are floored to this value so that features of
/// expressions that never occur stay finite. It only shifts every document's
/// score by the same constant.
const MIN_COLLECTION_COUNT: f64 = 0.5;

/// Occurrences of `first` immediately followed by `second`.
pub fn ordered_count(first: &[u32], second: &[u32]) -> u64 {
    let mut j = 0;
    let mut n = 0;
    for &p in first {
        while j < second.len() && second[j] <= p {
            j += 1;
        }
        if j < second.len() && second[j] == p + 1 {
            n += 1;
        }
    }
    n
}

/// Occurrence pairs `(p, q)` of the two terms that fit in a window of
/// `window` tokens, i.e. `|p - q| < window`, in either order.
pub fn unordered_count(first: &[u32], second: &[u32], window: u32) -> u64 {
    let span = window.saturating_sub(1);
    let mut lo = 0;
    let mut n = 0u64;
    for &p in first {
        let low = p.saturating_sub(span);
        while lo < second.len() && second[lo] < low {
            lo += 1;
        }
        let high = p.saturating_add(span);
        let hi = lo + second[lo..].partition_point(|&q| q <= high);
        n += (hi - lo) as u64;
    }
    n
}

fn smoothed_log(
    count: f64,
    collection_count: f64,
    collection_len: f64,
    doc_len: f64,
    mu: f64,
) -> f64 {
    let background = collection_count.max(MIN_COLLECTION_COUNT) / collection_len;
    ((count + mu * background) / (doc_len + mu)).ln()
}

/// Per-clique feature values for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfFeatures {
    /// One per query term.
    pub term: Vec<f64>,
    /// One per adjacent query-term pair.
    pub ordered: Vec<f64>,
    /// One per adjacent query-term pair.
    pub unordered: Vec<f64>,
}

struct PairCounts {
    ordered: f64,
    unordered: f64,
}

/// Collection-wide ordered and unordered counts for each adjacent pair.
fn collection_pair_counts(
    index: &PositionalIndex,
    terms: &[String],
    window: u32,
) -> Vec<PairCounts> {
    terms
        .windows(2)
        .map(|pair| {
            let mut counts = PairCounts {
                ordered: 0.0,
                unordered: 0.0,
            };
            for cand in index.candidates(pair) {
                counts.ordered += ordered_count(cand.positions[0], cand.positions[1]) as f64;
                counts.unordered +=
                    unordered_count(cand.positions[0], cand.positions[1], window) as f64;
            }
            counts
        })
        .collect()
}

fn features_for(
    index: &PositionalIndex,
    terms: &[String],
    positions: &[&[u32]],
    doc_len: u32,
    pair_counts: &[PairCounts],
    params: &MrfParams,
) -> MrfFeatures {
    let c = index.collection_length() as f64;
    let d = doc_len as f64;
    let term = terms
        .iter()
        .zip(positions)
        .map(|(t, pos)| {
            smoothed_log(
                pos.len() as f64,
                index.collection_frequency(t) as f64,
                c,
                d,
                params.mu,
            )
        })
        .collect();
    let mut ordered = Vec::with_capacity(pair_counts.len());
    let mut unordered = Vec::with_capacity(pair_counts.len());
    for (i, counts) in pair_counts.iter().enumerate() {
        let (a, b) = (positions[i], positions[i + 1]);
        ordered.push(smoothed_log(
            ordered_count(a, b) as f64,
            counts.ordered,
            c,
            d,
            params.mu,
        ));
        unordered.push(smoothed_log(
            unordered_count(a, b, params.window_size) as f64,
            counts.unordered,
            c,
            d,
            params.mu,
        ));
    }
    MrfFeatures {
        term,
        ordered,
        unordered,
    }
}

/// Feature values of `doc_id` for `query`. Terms missing from the document
/// get smoothed (finite) values. Returns `None` for an unknown document or
/// an empty collection.
pub fn mrf_features(
    index: &PositionalIndex,
    doc_id: DocId,
    query: &Query,
    params: &MrfParams,
) -> Option<MrfFeatures> {
    let doc_len = index.doc_length(doc_id)?;
    if index.collection_length() == 0 {
        return None;
    }
    let positions: Vec<&[u32]> = query
        .terms
        .iter()
        .map(|t| index.positions(doc_id, t))
        .collect();
    let pairs = collection_pair_counts(index, &query.terms, params.window_size);
    Some(features_for(
        index,
        &query.terms,
        &positions,
        doc_len,
        &pairs,
        params,
    ))
}

fn weighted(f: &MrfFeatures, params: &MrfParams) -> f64 {
    params.lambda_t * f.term.iter().sum::<f64>()
        + params.lambda_o * f.ordered.iter().sum::<f64>()
        + params.lambda_u * f.unordered.iter().sum::<f64>()
}

/// Full sequential-dependence score over the conjunctive candidates.
pub fn score_mrf(index: &PositionalIndex, query: &Query, params: &MrfParams) -> RankedList {
    let candidates = index.candidates(&query.terms);
    let pairs = if candidates.is_empty() {
        Vec::new()
    } else {
        collection_pair_counts(index, &query.terms, params.window_size)
    };
    let scores = candidates
        .iter()
        .map(|cand| {
            let f = features_for(
                index,
                &query.terms,
                &cand.positions,
                cand.doc_len,
                &pairs,
                params,
            );
            (cand.doc_id, weighted(&f, params))
        })
        .collect();
    RankedList::from_scores(query.id.clone(), scores)
}

/// Term cliques only: `lambda_T * sum f_T`.
pub fn score_term_only(index: &PositionalIndex, query: &Query, params: &MrfParams) -> RankedList {
    let c = index.collection_length() as f64;
    let cfs: Vec<f64> = query
        .terms
        .iter()
        .map(|t| index.collection_frequency(t) as f64)
        .collect();
    let scores = index
        .candidates(&query.terms)
        .iter()
        .map(|cand| {
            let d = cand.doc_len as f64;
            let sum: f64 = cand
                .positions
                .iter()
                .zip(&cfs)
                .map(|(pos, &cf)| smoothed_log(pos.len() as f64, cf, c, d, params.mu))
                .sum();
            (cand.doc_id, params.lambda_t * sum)
        })
        .collect();
    RankedList::from_scores(query.id.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_on_small_documents() {
        assert_eq!(ordered_count(&[1], &[2]), 1);
        assert_eq!(unordered_count(&[1], &[2], 8), 1);
        // [b, x, x, x, a]
        assert_eq!(ordered_count(&[5], &[1]), 0);
        assert_eq!(unordered_count(&[5], &[1], 8), 1);
        assert_eq!(unordered_count(&[10], &[1], 8), 0);
        assert_eq!(unordered_count(&[9], &[1], 9), 1);
    }

    #[test]
    fn absent_term_is_smoothed_below_present() {
        let index = PositionalIndex::build([(1, "a b c d"), (2, "c d a b")], false).unwrap();
        let q = Query::new("q", &["a", "b"]);
        let params = MrfParams::default();
        let f = mrf_features(&index, 1, &q, &params).unwrap();
        assert!(f.term.iter().all(|v| v.is_finite()));
        // "c" and "a" share collection frequency 2
        let absent =
            PositionalIndex::build([(1, "a b d d"), (2, "c d a b"), (3, "c x x x")], false)
                .unwrap();
        let fa = mrf_features(&absent, 1, &Query::new("q", &["a", "c"]), &params).unwrap();
        assert!(fa.term[1].is_finite());
        assert!(fa.term[1] < fa.term[0]);
    }

    #[test]
    fn term_only_reduction_is_exact() {
        let index =
            PositionalIndex::build([(1, "a b c a"), (2, "b x x a"), (3, "a c b b a")], false)
                .unwrap();
        let q = Query::new("q", &["a", "b", "c"]);
        let params = MrfParams {
            lambda_t: 1.0,
            lambda_o: 0.0,
            lambda_u: 0.0,
            ..Default::default()
        };
        assert_eq!(
            score_mrf(&index, &q, &params),
            score_term_only(&index, &q, &params)
        );
    }

    #[test]
    fn single_term_has_no_pair_features() {
        let index = PositionalIndex::build([(1, "a b"), (2, "a a")], false).unwrap();
        let q = Query::new("q", &["a"]);
        let params = MrfParams::default();
        let f = mrf_features(&index, 2, &q, &params).unwrap();
        assert!(f.ordered.is_empty() && f.unordered.is_empty());
        let list = score_mrf(&index, &q, &params);
        let expected = params.lambda_t * f.term[0];
        let got = list.entries.iter().find(|e| e.0 == 2).unwrap().1;
        assert_eq!(got, expected);
    }
}
