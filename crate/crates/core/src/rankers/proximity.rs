//! Accumulator-based (BM25TP) and minimum-distance (EXP) proximity rankers.

use log::warn;

use super::bm25::{bm25_term_score, idf, length_normalizer, score_bm25};
use super::{BlendParams, Bm25Params, Query, RankedList};
use crate::corpus::{DocId, PositionalIndex};
use crate::error::{Error, Result};

/// Distance from `occurrence` back to the closest earlier position in
/// `other`: `occurrence - p` for the greatest `p < occurrence`, so adjacent
/// tokens are 1 apart. `None` when nothing in `other` precedes.
pub fn preceding_distance(occurrence: u32, other: &[u32]) -> Option<u32> {
    let idx = other.partition_point(|&p| p < occurrence);
    (idx > 0).then(|| occurrence - other[idx - 1])
}

pub fn dist(
    index: &PositionalIndex,
    doc_id: DocId,
    term: &str,
    occurrence: u32,
    other: &str,
) -> Result<Option<u32>> {
    if term == other {
        return Err(Error::SameTerm(term.to_string()));
    }
    Ok(preceding_distance(
        occurrence,
        index.positions(doc_id, other),
    ))
}

/// `sum over occurrences o of t: dist(o, s)^-2`, skipping occurrences with no
/// preceding `s`. Both slices must be sorted ascending.
pub fn tpi_positions(term: &[u32], other: &[u32]) -> f64 {
    let mut j = 0;
    let mut total = 0.0;
    for &o in term {
        while j < other.len() && other[j] < o {
            j += 1;
        }
        if j > 0 {
            let d = (o - other[j - 1]) as f64;
            total += 1.0 / (d * d);
        }
    }
    total
}

pub fn tpi(index: &PositionalIndex, doc_id: DocId, term: &str, other: &str) -> Result<f64> {
    if term == other {
        return Err(Error::SameTerm(term.to_string()));
    }
    Ok(tpi_positions(
        index.positions(doc_id, term),
        index.positions(doc_id, other),
    ))
}

/// The capped accumulator score, summed over terms: for each term,
/// `min(1, w) * acc (k1 + 1) / (acc + K)`.
pub fn accumulator_score(weights: &[f64], accumulators: &[f64], k1: f64, normalizer: f64) -> f64 {
    weights
        .iter()
        .zip(accumulators)
        .map(|(&w, &acc)| w.min(1.0) * acc * (k1 + 1.0) / (acc + normalizer))
        .sum()
}

/// Smallest gap between occurrences of two different terms, given one
/// sorted position list per distinct term. `None` when fewer than two
/// lists are non-empty.
pub fn min_dist_positions(lists: &[&[u32]]) -> Option<u32> {
    let mut tagged: Vec<(u32, usize)> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, ps)| ps.iter().map(move |&p| (p, i)))
        .collect();
    tagged.sort_unstable();
    tagged
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| w[1].0 - w[0].0)
        .min()
}

pub fn min_dist<S: AsRef<str>>(index: &PositionalIndex, doc_id: DocId, terms: &[S]) -> Option<u32> {
    let terms = crate::corpus::dedup_terms(terms);
    let lists: Vec<&[u32]> = terms.iter().map(|t| index.positions(doc_id, t)).collect();
    min_dist_positions(&lists)
}

fn fallback(
    index: &PositionalIndex,
    query: &Query,
    params: &Bm25Params,
    ranker: &str,
) -> RankedList {
    warn!(
        "query {}: {ranker} needs two distinct terms, using BM25",
        query.id
    );
    let mut list = score_bm25(index, query, params);
    list.tp_fallback = true;
    list
}

/// `beta * S_acc + (1 - beta) * S_bm25` over the conjunctive candidates.
pub fn score_bm25tp(
    index: &PositionalIndex,
    query: &Query,
    params: &Bm25Params,
    blend: &BlendParams,
) -> RankedList {
    if query.len() < 2 {
        return fallback(index, query, params, "BM25TP");
    }
    let weights: Vec<f64> = query.terms.iter().map(|t| idf(index, t)).collect();
    let avg = index.avg_doc_length();
    let mut acc = vec![0.0; weights.len()];
    let scores = index
        .candidates(&query.terms)
        .iter()
        .map(|cand| {
            let norm = length_normalizer(params, cand.doc_len, avg);
            let mut bm25 = 0.0;
            for (i, pos) in cand.positions.iter().enumerate() {
                bm25 += bm25_term_score(weights[i], pos.len() as f64, params.k1, norm);
                let tpi_sum: f64 = cand
                    .positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, other)| tpi_positions(pos, other))
                    .sum();
                acc[i] = weights[i] * tpi_sum;
            }
            let tp = accumulator_score(&weights, &acc, params.k1, norm);
            (cand.doc_id, blend.beta * tp + (1.0 - blend.beta) * bm25)
        })
        .collect();
    RankedList::from_scores(query.id.clone(), scores)
}

/// `epsilon * ln(alpha + exp(-min_dist)) + (1 - epsilon) * S_bm25`.
pub fn score_exp(
    index: &PositionalIndex,
    query: &Query,
    params: &Bm25Params,
    blend: &BlendParams,
) -> RankedList {
    if query.len() < 2 {
        return fallback(index, query, params, "EXP");
    }
    let weights: Vec<f64> = query.terms.iter().map(|t| idf(index, t)).collect();
    let avg = index.avg_doc_length();
    let scores = index
        .candidates(&query.terms)
        .iter()
        .map(|cand| {
            let norm = length_normalizer(params, cand.doc_len, avg);
            let bm25: f64 = weights
                .iter()
                .zip(&cand.positions)
                .map(|(&w, pos)| bm25_term_score(w, pos.len() as f64, params.k1, norm))
                .sum();
            let closeness =
                min_dist_positions(&cand.positions).map_or(0.0, |d| (-(d as f64)).exp());
            let tp = (blend.alpha + closeness).ln();
            (
                cand.doc_id,
                blend.epsilon * tp + (1.0 - blend.epsilon) * bm25,
            )
        })
        .collect();
    RankedList::from_scores(query.id.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(text: &str) -> PositionalIndex {
        PositionalIndex::build([(1, text)], false).unwrap()
    }

    #[test]
    fn dist_cases() {
        let two = idx("search engine");
        assert_eq!(dist(&two, 1, "engine", 2, "search").unwrap(), Some(1));
        let gap = idx("search x x engine");
        assert_eq!(dist(&gap, 1, "engine", 4, "search").unwrap(), Some(3));
        assert_eq!(dist(&two, 1, "search", 1, "engine").unwrap(), None);
        assert!(matches!(
            dist(&two, 1, "search", 1, "search"),
            Err(Error::SameTerm(_))
        ));
    }

    #[test]
    fn tpi_cases() {
        let two = idx("search engine");
        assert_eq!(tpi(&two, 1, "engine", "search").unwrap(), 1.0);
        assert_eq!(tpi(&two, 1, "search", "engine").unwrap(), 0.0);
        assert!(tpi(&two, 1, "engine", "engine").is_err());
    }

    #[test]
    fn min_dist_cases() {
        let two = idx("search engine");
        assert_eq!(min_dist(&two, 1, &["search", "engine"]), Some(1));
        assert_eq!(min_dist(&two, 1, &["search", "missing"]), None);
        let spread = idx("a x x b x a");
        assert_eq!(min_dist(&spread, 1, &["a", "b"]), Some(2));
    }

    #[test]
    fn exp_tp_term_at_distance_one() {
        let index = idx("x search engine x");
        let q = Query::new("q", &["search", "engine"]);
        let only_tp = BlendParams {
            epsilon: 1.0,
            beta: 0.0,
            alpha: 0.3,
        };
        let list = score_exp(&index, &q, &Bm25Params::default(), &only_tp);
        // ln(0.3 + e^-1) = ln(0.6678794...)
        assert!((list.entries[0].1 - (-0.403_647_599_021_736_8)).abs() < 1e-12);
    }

    #[test]
    fn blend_endpoints_equal_bm25() {
        let index = PositionalIndex::build(
            [(1, "a b c a"), (2, "b x x a"), (3, "a c b"), (4, "c c")],
            false,
        )
        .unwrap();
        let q = Query::new("q", &["a", "b"]);
        let p = Bm25Params::default();
        let base = score_bm25(&index, &q, &p);
        let zero = BlendParams {
            epsilon: 0.0,
            beta: 0.0,
            alpha: 0.3,
        };
        assert_eq!(score_bm25tp(&index, &q, &p, &zero), base);
        assert_eq!(score_exp(&index, &q, &p, &zero), base);
    }

    #[test]
    fn single_term_falls_back() {
        let index = idx("a b");
        let q = Query::new("q", &["a"]);
        let list = score_exp(&index, &q, &Bm25Params::default(), &BlendParams::default());
        assert!(list.tp_fallback);
        let mut base = score_bm25(&index, &q, &Bm25Params::default());
        base.tp_fallback = true;
        assert_eq!(list, base);
    }

    #[test]
    fn zero_accumulator_scales_bm25() {
        // Any candidate holding two terms has one preceding the other, so a
        // zero accumulator only arises synthetically.
        assert_eq!(accumulator_score(&[2.0, 0.5], &[0.0, 0.0], 1.2, 1.0), 0.0);
    }
}
