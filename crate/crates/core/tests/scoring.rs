use proptest::prelude::*;

use proxsel::corpus::PositionalIndex;
use proxsel::rankers::{
    accumulator_score, min_dist, score_bm25, score_bm25tp, score_exp, score_mrf, score_term_only,
    tpi, BlendParams, Bm25Params, MrfParams, Query, RankedList,
};

fn score_of(list: &RankedList, doc: u32) -> f64 {
    list.entries
        .iter()
        .find(|e| e.0 == doc)
        .expect("doc ranked")
        .1
}

#[test]
fn bm25_five_doc_hand_oracle() {
    let index = PositionalIndex::build(
        [
            (1, "apple banana apple"),
            (2, "banana cherry"),
            (3, "apple cherry banana banana"),
            (4, "cherry cherry"),
            (5, "apple date"),
        ],
        false,
    )
    .unwrap();
    let list = score_bm25(
        &index,
        &Query::new("q", &["apple", "banana"]),
        &Bm25Params::default(),
    );
    assert_eq!(list.len(), 2);

    // N = 5, avg_d = 13/5, df(apple) = df(banana) = 3
    let w = (1.0f64 + 2.5 / 3.5).ln();
    let k1 = 1.2;
    let norm = |len: f64| k1 * (0.25 + 0.75 * len / 2.6);
    let term = |f: f64, k: f64| w * f * 2.2 / (f + k);
    let d1 = term(2.0, norm(3.0)) + term(1.0, norm(3.0));
    let d3 = term(1.0, norm(4.0)) + term(2.0, norm(4.0));
    assert!((score_of(&list, 1) - d1).abs() < 1e-9);
    assert!((score_of(&list, 3) - d3).abs() < 1e-9);
    assert_eq!(list.doc_ids(), vec![1, 3]);
}

#[test]
fn bm25_identity_at_average_length() {
    // |d| = avg_d and f = k1 = 1 gives w * (k1 + 1) / 2
    let index = PositionalIndex::build([(1, "x y"), (2, "x z")], false).unwrap();
    let params = Bm25Params { k1: 1.0, b: 0.75 };
    let list = score_bm25(&index, &Query::new("q", &["y"]), &params);
    let w = (1.0f64 + 1.5 / 1.5).ln();
    assert!((list.entries[0].1 - w * 2.0 / 2.0).abs() < 1e-12);
}

const D1: &str =
    "word search engine word word word word search engine word word word word word word";
const D2: &str =
    "search word word search word word engine search word engine search word engine word";

fn toy_index() -> PositionalIndex {
    let filler = "alpha beta gamma delta word epsilon zeta eta theta iota";
    let mut docs = vec![(1, D1), (2, D2)];
    for id in 3..=10 {
        docs.push((id, filler));
    }
    PositionalIndex::build(docs, false).unwrap()
}

#[test]
fn toy_documents_tpi_by_hand() {
    let index = toy_index();
    // d1: search {2, 8}, engine {3, 9}
    assert_eq!(tpi(&index, 1, "engine", "search").unwrap(), 2.0);
    assert_eq!(tpi(&index, 1, "search", "engine").unwrap(), 1.0 / 25.0);
    // d2: search {1, 4, 8, 11}, engine {7, 10, 13}
    assert_eq!(tpi(&index, 2, "search", "engine").unwrap(), 2.0);
    let expected = 1.0 / 9.0 + 1.0 / 4.0 + 1.0 / 4.0;
    assert!((tpi(&index, 2, "engine", "search").unwrap() - expected).abs() < 1e-12);
}

#[test]
fn toy_documents_bm25tp_by_hand() {
    let index = toy_index();
    let query = Query::new("q", &["search", "engine"]);
    let bm25 = Bm25Params::default();
    let blend = BlendParams {
        beta: 0.5,
        ..BlendParams::default()
    };
    // N = 10, df = 2 for both terms; |C| = 15 + 14 + 8 * 10 = 109
    let w = (1.0f64 + 8.5 / 2.5).ln();
    let avg = 109.0 / 10.0;
    let norm = |len: f64| 1.2 * (0.25 + 0.75 * len / avg);
    let term = |f: f64, k: f64| w * f * 2.2 / (f + k);
    let acc_part = |acc: f64, k: f64| w.min(1.0) * acc * 2.2 / (acc + k);

    let k1 = norm(15.0);
    let bm25_d1 = term(2.0, k1) + term(2.0, k1);
    let tp_d1 = acc_part(w / 25.0, k1) + acc_part(w * 2.0, k1);
    let k2 = norm(14.0);
    let bm25_d2 = term(4.0, k2) + term(3.0, k2);
    let tp_d2 = acc_part(w * 2.0, k2) + acc_part(w * (1.0 / 9.0 + 0.5), k2);

    let list = score_bm25tp(&index, &query, &bm25, &blend);
    assert!((score_of(&list, 1) - (0.5 * tp_d1 + 0.5 * bm25_d1)).abs() < 1e-9);
    assert!((score_of(&list, 2) - (0.5 * tp_d2 + 0.5 * bm25_d2)).abs() < 1e-9);

    let plain = score_bm25(&index, &query, &bm25);
    assert!(score_of(&plain, 2) >= score_of(&plain, 1));
    // d2's "engine search" and "search word engine" runs give it more
    // accumulated proximity than d1, so it stays ahead under the blend.
    assert!(tp_d2 > tp_d1);
    assert_eq!(list.doc_ids(), vec![2, 1]);
}

#[test]
fn exp_blend_by_hand() {
    let index = toy_index();
    let query = Query::new("q", &["search", "engine"]);
    let blend = BlendParams {
        epsilon: 0.4,
        ..BlendParams::default()
    };
    let list = score_exp(&index, &query, &Bm25Params::default(), &blend);
    let plain = score_bm25(&index, &query, &Bm25Params::default());
    let tp = (0.3 + (-1.0f64).exp()).ln();
    for doc in [1, 2] {
        let expected = 0.4 * tp + 0.6 * score_of(&plain, doc);
        assert!((score_of(&list, doc) - expected).abs() < 1e-9);
    }
}

#[test]
fn mrf_five_doc_hand_oracle() {
    let index = PositionalIndex::build(
        [
            (1, "a b c"),
            (2, "b a x x"),
            (3, "a x x x x x x x x b"),
            (4, "a b a b"),
            (5, "c c c"),
        ],
        false,
    )
    .unwrap();
    let params = MrfParams::default();
    let query = Query::new("q", &["a", "b"]);
    let list = score_mrf(&index, &query, &params);
    // |C| = 24; cf(a) = cf(b) = 5; ordered "a b" occurs 3 times and
    // window-8 co-occurrences number 1 + 1 + 0 + 4 = 6.
    let mu = 2500.0;
    let f = |count: f64, cf: f64, len: f64| ((count + mu * cf / 24.0) / (len + mu)).ln();
    let expected = |tf_a: f64, tf_b: f64, ordered: f64, unordered: f64, len: f64| {
        0.85 * (f(tf_a, 5.0, len) + f(tf_b, 5.0, len))
            + 0.10 * f(ordered, 3.0, len)
            + 0.05 * f(unordered, 6.0, len)
    };
    let cases = [
        (1, expected(1.0, 1.0, 1.0, 1.0, 3.0)),
        (2, expected(1.0, 1.0, 0.0, 1.0, 4.0)),
        (3, expected(1.0, 1.0, 0.0, 0.0, 10.0)),
        (4, expected(2.0, 2.0, 2.0, 4.0, 4.0)),
    ];
    assert_eq!(list.len(), 4);
    for (doc, value) in cases {
        assert!((score_of(&list, doc) - value).abs() < 1e-9, "doc {doc}");
    }
}

#[test]
fn mrf_term_only_reduction_is_exact() {
    let index =
        PositionalIndex::build([(1, "a b c a"), (2, "b a"), (3, "a c b b b")], false).unwrap();
    let query = Query::new("q", &["a", "b"]);
    let params = MrfParams {
        lambda_t: 1.0,
        lambda_o: 0.0,
        lambda_u: 0.0,
        ..MrfParams::default()
    };
    let full = score_mrf(&index, &query, &params);
    let terms = score_term_only(&index, &query, &params);
    assert_eq!(full.entries, terms.entries);
}

fn brute_min_dist(tokens: &[u8], terms: &[u8]) -> Option<u32> {
    let mut best: Option<u32> = None;
    for (i, a) in tokens.iter().enumerate() {
        for (j, b) in tokens.iter().enumerate() {
            if a != b && terms.contains(a) && terms.contains(b) {
                let d = i.abs_diff(j) as u32;
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
    }
    best
}

fn brute_tpi(tokens: &[u8], t: u8, s: u8) -> f64 {
    let mut total = 0.0;
    for (i, &x) in tokens.iter().enumerate() {
        if x != t {
            continue;
        }
        let preceding = (0..i).rev().find(|&j| tokens[j] == s);
        if let Some(j) = preceding {
            let d = (i - j) as f64;
            total += 1.0 / (d * d);
        }
    }
    total
}

fn text_of(tokens: &[u8]) -> String {
    tokens
        .iter()
        .map(|t| format!("t{t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn min_dist_matches_brute_force(tokens in prop::collection::vec(0u8..6, 1..200)) {
        let index = PositionalIndex::build([(1, text_of(&tokens).as_str())], false).unwrap();
        let terms = ["t0", "t1", "t2"];
        prop_assert_eq!(min_dist(&index, 1, &terms), brute_min_dist(&tokens, &[0, 1, 2]));
    }

    #[test]
    fn tpi_matches_brute_force(tokens in prop::collection::vec(0u8..4, 1..200)) {
        let index = PositionalIndex::build([(1, text_of(&tokens).as_str())], false).unwrap();
        for (t, s) in [(0u8, 1u8), (1, 0), (2, 3), (3, 0)] {
            let got = tpi(&index, 1, &format!("t{t}"), &format!("t{s}")).unwrap();
            prop_assert!((got - brute_tpi(&tokens, t, s)).abs() < 1e-9);
        }
    }

    #[test]
    fn accumulator_score_is_monotone(
        weights in prop::collection::vec(0.01f64..5.0, 1..5),
        accs in prop::collection::vec(0.0f64..10.0, 5),
        bump in 0.0f64..5.0,
        which in 0usize..5,
        norm in 0.1f64..3.0,
    ) {
        let accs = &accs[..weights.len()];
        let i = which % weights.len();
        let mut raised = accs.to_vec();
        raised[i] += bump;
        prop_assert!(accumulator_score(&weights, &raised, 1.2, norm) >= accumulator_score(&weights, accs, 1.2, norm));
    }

    #[test]
    fn rankers_ignore_document_order(
        docs in prop::collection::vec(prop::collection::vec(0u8..5, 1..30), 2..15),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let texts: Vec<String> = docs.iter().map(|d| text_of(d)).collect();
        let forward: Vec<(u32, &str)> = texts.iter().enumerate().map(|(i, t)| (i as u32 + 1, t.as_str())).collect();
        let mut shuffled = forward.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = PositionalIndex::build(forward, false).unwrap();
        let b = PositionalIndex::build(shuffled, false).unwrap();
        let q = Query::new("q", &["t0", "t1"]);
        let p = proxsel::ScoringParams::default();
        for kind in proxsel::RankerKind::ALL {
            prop_assert_eq!(kind.score_tp(&a, &q, &p), kind.score_tp(&b, &q, &p));
            prop_assert_eq!(kind.score_base(&a, &q, &p), kind.score_base(&b, &q, &p));
        }
    }
}

#[test]
fn ranked_list_tie_order_is_canonical() {
    let a = RankedList::from_scores("q", vec![(3, 1.0), (1, 1.0), (2, 2.0)]);
    let b = RankedList::from_scores("q", vec![(1, 1.0), (2, 2.0), (3, 1.0)]);
    assert_eq!(a, b);
    assert_eq!(a.doc_ids(), vec![2, 1, 3]);
}
