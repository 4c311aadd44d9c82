use super::{Bm25Params, Query, RankedList};
use crate::corpus::PositionalIndex;

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; always positive, 0 for an empty
/// collection.
pub fn idf(index: &PositionalIndex, term: &str) -> f64 {
    let n = index.doc_count();
    if n == 0 {
        return 0.0;
    }
    let df = index.document_frequency(term) as f64;
    (1.0 + (n as f64 - df + 0.5) / (df + 0.5)).ln()
}

/// `k1 * (1 - b + b * |d| / avg_d)`.
pub fn length_normalizer(params: &Bm25Params, doc_len: u32, avg_doc_length: f64) -> f64 {
    let ratio = if avg_doc_length > 0.0 {
        doc_len as f64 / avg_doc_length
    } else {
        0.0
    };
    params.k1 * (1.0 - params.b + params.b * ratio)
}

/// One term's BM25 contribution given its frequency and the document's
/// length normalizer.
pub fn bm25_term_score(weight: f64, freq: f64, k1: f64, normalizer: f64) -> f64 {
    weight * freq * (k1 + 1.0) / (freq + normalizer)
}

pub fn score_bm25(index: &PositionalIndex, query: &Query, params: &Bm25Params) -> RankedList {
    let weights: Vec<f64> = query.terms.iter().map(|t| idf(index, t)).collect();
    let avg = index.avg_doc_length();
    let scores = index
        .candidates(&query.terms)
        .iter()
        .map(|cand| {
            let norm = length_normalizer(params, cand.doc_len, avg);
            let score = weights
                .iter()
                .zip(&cand.positions)
                .map(|(&w, pos)| bm25_term_score(w, pos.len() as f64, params.k1, norm))
                .sum();
            (cand.doc_id, score)
        })
        .collect();
    RankedList::from_scores(query.id.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idf_values() {
        let one = PositionalIndex::build([(1, "a")], false).unwrap();
        assert!((idf(&one, "a") - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((idf(&one, "a") - 0.28768207245178).abs() < 1e-12);

        let three = PositionalIndex::build([(1, "a"), (2, "b"), (3, "c")], false).unwrap();
        assert!((idf(&three, "zzz") - 8.0f64.ln()).abs() < 1e-15);
        assert!((idf(&three, "zzz") - 2.0794415416798).abs() < 1e-12);

        let empty = PositionalIndex::build(std::iter::empty(), false).unwrap();
        assert_eq!(idf(&empty, "a"), 0.0);
    }

    #[test]
    fn average_length_document_with_freq_k1() {
        // |d| = avg_d and f = k1 = 1
        let idx = PositionalIndex::build([(1, "a b"), (2, "c d")], false).unwrap();
        let params = Bm25Params { k1: 1.0, b: 0.75 };
        let w = idf(&idx, "a");
        let list = score_bm25(&idx, &Query::new("q", &["a"]), &params);
        assert_eq!(list.entries.len(), 1);
        assert!((list.entries[0].1 - w * 2.0 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_matching_documents_are_not_candidates() {
        let idx = PositionalIndex::build([(1, "a b"), (2, "a"), (3, "c")], false).unwrap();
        let list = score_bm25(&idx, &Query::new("q", &["a", "b"]), &Bm25Params::default());
        assert_eq!(list.doc_ids(), vec![1]);
    }
}
