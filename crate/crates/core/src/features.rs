//! Query features computed from index statistics alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{dedup_terms, PositionalIndex};
use crate::error::{Error, Result};
use crate::rankers::{idf, Query, RankerKind};

/// Mean over the documents containing `term` of its mean position in that
/// document; 0 for a term that occurs nowhere.
pub fn general_pos(index: &PositionalIndex, term: &str) -> f64 {
    index.general_position(term)
}

/// Summary statistics of a per-term value sequence in query order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermStatistics {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
    pub sum_sq: f64,
    /// Sum of `(next - prev)^2` over consecutive pairs with `prev < next`.
    pub asc_sq_sum: f64,
    /// Sum of `(prev - next)^2` over consecutive pairs with `prev > next`.
    pub desc_sq_sum: f64,
}

impl TermStatistics {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return TermStatistics::default();
        }
        let sum: f64 = values.iter().sum();
        let mut s = TermStatistics {
            mean: sum / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sum,
            sum_sq: values.iter().map(|v| v * v).sum(),
            asc_sq_sum: 0.0,
            desc_sq_sum: 0.0,
        };
        for w in values.windows(2) {
            let d = w[1] - w[0];
            if w[0] < w[1] {
                s.asc_sq_sum += d * d;
            } else if w[0] > w[1] {
                s.desc_sq_sum += d * d;
            }
        }
        // guard against the mean drifting outside [min, max] by rounding
        s.mean = s.mean.clamp(s.min, s.max);
        s
    }
}

/// One query's feature vector, plus its label once known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub query_id: String,
    /// Number of distinct terms.
    pub query_length: usize,
    /// Size of the conjunctive result set.
    pub n_relevant_docs: usize,
    pub idf: TermStatistics,
    pub pos: TermStatistics,
    pub label: Option<u8>,
}

/// Every feature that can be fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    QueryLength,
    NRelevantDocs,
    IdfMean,
    IdfMin,
    IdfMax,
    IdfSum,
    IdfSumSq,
    IdfAscSqSum,
    IdfDescSqSum,
    PosMean,
    PosMin,
    PosMax,
    PosSum,
    PosSumSq,
    PosAscSqSum,
    PosDescSqSum,
}

impl Feature {
    pub const ALL: [Feature; 16] = [
        Feature::QueryLength,
        Feature::NRelevantDocs,
        Feature::IdfMean,
        Feature::IdfMin,
        Feature::IdfMax,
        Feature::IdfSum,
        Feature::IdfSumSq,
        Feature::IdfAscSqSum,
        Feature::IdfDescSqSum,
        Feature::PosMean,
        Feature::PosMin,
        Feature::PosMax,
        Feature::PosSum,
        Feature::PosSumSq,
        Feature::PosAscSqSum,
        Feature::PosDescSqSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::QueryLength => "query_length",
            Feature::NRelevantDocs => "n_relevant_docs",
            Feature::IdfMean => "idf_mean",
            Feature::IdfMin => "idf_min",
            Feature::IdfMax => "idf_max",
            Feature::IdfSum => "idf_sum",
            Feature::IdfSumSq => "idf_sum_sq",
            Feature::IdfAscSqSum => "idf_asc_sq_sum",
            Feature::IdfDescSqSum => "idf_desc_sq_sum",
            Feature::PosMean => "pos_mean",
            Feature::PosMin => "pos_min",
            Feature::PosMax => "pos_max",
            Feature::PosSum => "pos_sum",
            Feature::PosSumSq => "pos_sum_sq",
            Feature::PosAscSqSum => "pos_asc_sq_sum",
            Feature::PosDescSqSum => "pos_desc_sq_sum",
        }
    }

    fn needs_intersection(self) -> bool {
        self == Feature::NRelevantDocs
    }

    fn is_idf(self) -> bool {
        Feature::ALL[2..9].contains(&self)
    }

    fn is_pos(self) -> bool {
        Feature::ALL[9..].contains(&self)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature {s:?}")))
    }
}

impl QueryFeatures {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::QueryLength => self.query_length as f64,
            Feature::NRelevantDocs => self.n_relevant_docs as f64,
            Feature::IdfMean => self.idf.mean,
            Feature::IdfMin => self.idf.min,
            Feature::IdfMax => self.idf.max,
            Feature::IdfSum => self.idf.sum,
            Feature::IdfSumSq => self.idf.sum_sq,
            Feature::IdfAscSqSum => self.idf.asc_sq_sum,
            Feature::IdfDescSqSum => self.idf.desc_sq_sum,
            Feature::PosMean => self.pos.mean,
            Feature::PosMin => self.pos.min,
            Feature::PosMax => self.pos.max,
            Feature::PosSum => self.pos.sum,
            Feature::PosSumSq => self.pos.sum_sq,
            Feature::PosAscSqSum => self.pos.asc_sq_sum,
            Feature::PosDescSqSum => self.pos.desc_sq_sum,
        }
    }

    /// All features in [`Feature::ALL`] order.
    pub fn values(&self) -> Vec<f64> {
        Feature::ALL.iter().map(|&f| self.get(f)).collect()
    }

    /// Rebuilds features from values in [`Feature::ALL`] order.
    pub fn from_values(
        query_id: impl Into<String>,
        values: &[f64],
        label: Option<u8>,
    ) -> Result<Self> {
        if values.len() != Feature::ALL.len() {
            return Err(Error::Dimension {
                expected: Feature::ALL.len(),
                got: values.len(),
            });
        }
        let stats = |o: usize| TermStatistics {
            mean: values[o],
            min: values[o + 1],
            max: values[o + 2],
            sum: values[o + 3],
            sum_sq: values[o + 4],
            asc_sq_sum: values[o + 5],
            desc_sq_sum: values[o + 6],
        };
        Ok(QueryFeatures {
            query_id: query_id.into(),
            query_length: values[0] as usize,
            n_relevant_docs: values[1] as usize,
            idf: stats(2),
            pos: stats(9),
            label,
        })
    }
}

/// Computes the full feature vector for a query.
pub fn extract_features<S: AsRef<str>>(
    index: &PositionalIndex,
    terms: &[S],
    query_id: &str,
) -> Result<QueryFeatures> {
    let terms = dedup_terms(terms);
    if terms.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut f = term_features(index, &terms, query_id, true, true);
    f.n_relevant_docs = index.candidates(&terms).len();
    Ok(f)
}

/// Length plus the idf and/or position statistics; skipped families stay
/// zero.
fn term_features(
    index: &PositionalIndex,
    terms: &[String],
    query_id: &str,
    idf_stats: bool,
    pos_stats: bool,
) -> QueryFeatures {
    let stats = |on: bool, value: &dyn Fn(&str) -> f64| {
        if on {
            TermStatistics::of(&terms.iter().map(|t| value(t)).collect::<Vec<_>>())
        } else {
            TermStatistics::default()
        }
    };
    QueryFeatures {
        query_id: query_id.to_string(),
        query_length: terms.len(),
        n_relevant_docs: 0,
        idf: stats(idf_stats, &|t| idf(index, t)),
        pos: stats(pos_stats, &|t| general_pos(index, t)),
        label: None,
    }
}

/// An ordered subset of features fed to a classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub name: String,
    pub features: Vec<Feature>,
}

impl FeatureMask {
    pub fn new(name: impl Into<String>, features: Vec<Feature>) -> Self {
        FeatureMask {
            name: name.into(),
            features,
        }
    }

    /// Per-ranker default subsets.
    pub fn preset(kind: RankerKind) -> Self {
        use Feature::*;
        match kind {
            RankerKind::Exp => FeatureMask::new("exp", vec![PosMax, PosMin, PosSum, PosMean]),
            RankerKind::Mrf => FeatureMask::new("mrf", vec![IdfSum, IdfMax, PosMin]),
            RankerKind::Bm25Tp => {
                FeatureMask::new("bm25tp", vec![IdfMin, IdfSumSq, IdfDescSqSum, PosSum])
            }
        }
    }

    pub fn all() -> Self {
        FeatureMask::new("all", Feature::ALL.to_vec())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn project(&self, features: &QueryFeatures) -> Vec<f64> {
        self.features.iter().map(|&f| features.get(f)).collect()
    }

    /// Masked feature values for `query`, skipping the list intersection
    /// unless the mask needs the result-set size.
    pub fn extract(&self, index: &PositionalIndex, query: &Query) -> Result<Vec<f64>> {
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let idf_stats = self.features.iter().any(|f| f.is_idf());
        let pos_stats = self.features.iter().any(|f| f.is_pos());
        let mut f = term_features(index, &query.terms, &query.id, idf_stats, pos_stats);
        if self.features.iter().any(|f| f.needs_intersection()) {
            f.n_relevant_docs = index.candidates(&query.terms).len();
        }
        Ok(self.project(&f))
    }
}
