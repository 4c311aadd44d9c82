//! Document rankers over a conjunctive candidate set.
//!
//! Every ranker scores exactly the documents returned by
//! [`PositionalIndex::candidates`], so base and proximity rankings of one
//! query are always over the same documents.

mod bm25;
mod mrf;
mod proximity;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{dedup_terms, DocId, PositionalIndex};
use crate::error::{Error, Result};

pub use bm25::{bm25_term_score, idf, length_normalizer, score_bm25};
pub use mrf::{
    mrf_features, ordered_count, score_mrf, score_term_only, unordered_count, MrfFeatures,
};
pub use proximity::{
    accumulator_score, dist, min_dist, min_dist_positions, preceding_distance, score_bm25tp,
    score_exp, tpi, tpi_positions,
};

/// A query as a list of distinct normalized terms in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub terms: Vec<String>,
}

impl Query {
    pub fn new<S: AsRef<str>>(id: impl Into<String>, terms: &[S]) -> Self {
        Query {
            id: id.into(),
            terms: dedup_terms(terms),
        }
    }

    /// Normalizes `text` with the index's tokenizer settings.
    pub fn parse(id: impl Into<String>, text: &str, index: &PositionalIndex) -> Self {
        Query::new(id, &index.normalize_query(text))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(Error::invalid(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!(
                "b must be in [0,1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Weights mixing a proximity score with BM25.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendParams {
    /// Weight of the EXP proximity term.
    pub epsilon: f64,
    /// Weight of the accumulator (BM25TP) proximity term.
    pub beta: f64,
    /// Additive constant inside the EXP logarithm.
    pub alpha: f64,
}

impl Default for BlendParams {
    fn default() -> Self {
        BlendParams {
            epsilon: 0.5,
            beta: 0.5,
            alpha: 0.3,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Sequential-dependence weights and smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrfParams {
    pub lambda_t: f64,
    pub lambda_o: f64,
    pub lambda_u: f64,
    pub window_size: u32,
    pub mu: f64,
}

impl Default for MrfParams {
    fn default() -> Self {
        MrfParams {
            lambda_t: 0.85,
            lambda_o: 0.10,
            lambda_u: 0.05,
            window_size: 8,
            mu: 2500.0,
        }
    }
}

impl MrfParams {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_t, self.lambda_o, self.lambda_u];
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("MRF lambdas must be non-negative"));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "MRF lambdas must sum to 1, got {sum}"
            )));
        }
        if self.window_size < 2 {
            return Err(Error::invalid("MRF window_size must be >= 2"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::invalid("MRF mu must be > 0"));
        }
        Ok(())
    }
}

/// All ranking parameters in one bundle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringParams {
    pub bm25: Bm25Params,
    pub blend: BlendParams,
    pub mrf: MrfParams,
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        self.blend.validate()?;
        self.mrf.validate()
    }
}

/// Documents for one query, best first. Equal scores are ordered by
/// ascending doc id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(DocId, f64)>,
    /// Set when a proximity ranker had fewer than two distinct terms and
    /// returned plain BM25 instead.
    pub tp_fallback: bool,
}

impl RankedList {
    pub fn from_scores(query_id: impl Into<String>, mut entries: Vec<(DocId, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        RankedList {
            query_id: query_id.into(),
            entries,
            tp_fallback: false,
        }
    }

    pub fn doc_ids(&self) -> Vec<DocId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

/// The three proximity rankers and their non-proximity counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RankerKind {
    #[serde(rename = "EXP")]
    Exp,
    #[serde(rename = "MRF")]
    Mrf,
    #[serde(rename = "BM25TP")]
    Bm25Tp,
}

impl RankerKind {
    pub const ALL: [RankerKind; 3] = [RankerKind::Exp, RankerKind::Mrf, RankerKind::Bm25Tp];

    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Exp => "EXP",
            RankerKind::Mrf => "MRF",
            RankerKind::Bm25Tp => "BM25TP",
        }
    }

    /// Ranking with the proximity component.
    pub fn score_tp(
        self,
        index: &PositionalIndex,
        query: &Query,
        params: &ScoringParams,
    ) -> RankedList {
        match self {
            RankerKind::Exp => score_exp(index, query, &params.bm25, &params.blend),
            RankerKind::Mrf => score_mrf(index, query, &params.mrf),
            RankerKind::Bm25Tp => score_bm25tp(index, query, &params.bm25, &params.blend),
        }
    }

    /// The matching ranking without proximity: BM25 for EXP and BM25TP, the
    /// term-only part for MRF.
    pub fn score_base(
        self,
        index: &PositionalIndex,
        query: &Query,
        params: &ScoringParams,
    ) -> RankedList {
        match self {
            RankerKind::Exp | RankerKind::Bm25Tp => score_bm25(index, query, &params.bm25),
            RankerKind::Mrf => score_term_only(index, query, &params.mrf),
        }
    }

    pub fn score(
        self,
        use_tp: bool,
        index: &PositionalIndex,
        query: &Query,
        params: &ScoringParams,
    ) -> RankedList {
        if use_tp {
            self.score_tp(index, query, params)
        } else {
            self.score_base(index, query, params)
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EXP" => Ok(RankerKind::Exp),
            "MRF" => Ok(RankerKind::Mrf),
            "BM25TP" => Ok(RankerKind::Bm25Tp),
            _ => Err(Error::invalid(format!(
                "unknown ranker {s:?} (expected EXP, MRF or BM25TP)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_list_tie_order() {
        let list = RankedList::from_scores("q", vec![(5, 1.0), (2, 3.0), (3, 1.0), (1, 1.0)]);
        assert_eq!(list.doc_ids(), vec![2, 1, 3, 5]);
    }

    #[test]
    fn query_dedups() {
        let q = Query::new("q", &["a", "b", "a"]);
        assert_eq!(q.terms, vec!["a", "b"]);
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn param_validation() {
        assert!(ScoringParams::default().validate().is_ok());
        assert!(Bm25Params { k1: 0.0, b: 0.5 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.5 }.validate().is_err());
        assert!(BlendParams {
            epsilon: 1.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BlendParams {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let mut m = MrfParams::default();
        m.lambda_u = 0.2;
        assert!(m.validate().is_err());
        let mut m = MrfParams::default();
        m.window_size = 1;
        assert!(m.validate().is_err());
    }

    #[test]
    fn ranker_names_round_trip() {
        for kind in RankerKind::ALL {
            assert_eq!(kind.name().parse::<RankerKind>().unwrap(), kind);
        }
        assert!("bm25".parse::<RankerKind>().is_err());
    }
}
