//! Benefit labeling, per-length classifier training, and query routing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PositionalIndex;
use crate::error::{Error, Result};
use crate::eval::average_precision;
use crate::exec::Execution;
use crate::features::{extract_features, Feature, FeatureMask, QueryFeatures};
use crate::formats::Qrels;
use crate::neural::{self, NetConfig, NeuralNet, Sample};
use crate::rankers::{Query, RankerKind, ScoringParams};

/// Query lengths the classifiers are trained for.
pub const DEFAULT_LENGTHS: RangeInclusive<usize> = 3..=5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Hidden-node count and momentum per ranker and query length (3, 4, 5).
pub fn default_net_shape(kind: RankerKind, length: usize) -> Option<(usize, f64)> {
    let table: [(usize, f64); 3] = match kind {
        RankerKind::Exp => [(43, 1.0), (58, 0.85), (47, 0.85)],
        RankerKind::Mrf => [(45, 0.35), (39, 0.9), (47, 0.85)],
        RankerKind::Bm25Tp => [(52, 0.95), (10, 0.25), (20, 0.75)],
    };
    length.checked_sub(3).and_then(|i| table.get(i).copied())
}

/// 1 when the proximity ranking has strictly higher AP; ties are 0.
pub fn benefit_label(ap_base: f64, ap_tp: f64) -> u8 {
    u8::from(ap_tp > ap_base)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub query: Query,
    pub features: QueryFeatures,
    pub ap_base: f64,
    pub ap_tp: f64,
    pub label: u8,
}

impl LabeledQuery {
    pub fn length(&self) -> usize {
        self.query.len()
    }
}

/// A query left out of labeling, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub query_id: String,
    pub reason: String,
}

/// Scores each query with the proximity ranker and its base ranker and
/// labels it by which gives the higher AP. Queries without relevant
/// judgments or outside `lengths` are excluded.
#[allow(clippy::too_many_arguments)]
pub fn label_queries(
    index: &PositionalIndex,
    queries: &[Query],
    qrels: &Qrels,
    kind: RankerKind,
    params: &ScoringParams,
    lengths: &RangeInclusive<usize>,
    ap_depth: usize,
    exec: Execution,
) -> (Vec<LabeledQuery>, Vec<Exclusion>) {
    let results: Vec<std::result::Result<LabeledQuery, Exclusion>> = exec.map(queries, |q| {
        let exclude = |reason: String| Exclusion {
            query_id: q.id.clone(),
            reason,
        };
        if !lengths.contains(&q.len()) {
            return Err(exclude(format!("length {} outside {lengths:?}", q.len())));
        }
        let relevant = qrels.relevant(&q.id);
        if relevant.is_empty() {
            return Err(exclude("no judged-relevant documents".into()));
        }
        let base = kind.score_base(index, q, params).doc_ids();
        let tp = kind.score_tp(index, q, params).doc_ids();
        let ap_base =
            average_precision(&base, &relevant, ap_depth).expect("non-empty relevant set");
        let ap_tp = average_precision(&tp, &relevant, ap_depth).expect("non-empty relevant set");
        let label = benefit_label(ap_base, ap_tp);
        let mut features =
            extract_features(index, &q.terms, &q.id).map_err(|e| exclude(e.to_string()))?;
        features.label = Some(label);
        Ok(LabeledQuery {
            query: q.clone(),
            features,
            ap_base,
            ap_tp,
            label,
        })
    });
    let mut labeled = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(l) => labeled.push(l),
            Err(e) => {
                info!("query {} excluded from labeling: {}", e.query_id, e.reason);
                excluded.push(e);
            }
        }
    }
    (labeled, excluded)
}

/// Training share of a stratum of `n` queries: `round(fraction * n)`,
/// leaving at least one query for testing when `n >= 2`.
fn train_count(n: usize, fraction: f64) -> usize {
    let k = (fraction * n as f64).round() as usize;
    if n >= 2 {
        k.min(n - 1)
    } else {
        k.min(n)
    }
}

/// Seeded split stratified by (length, label). Both halves keep the input
/// order.
pub fn split_train_test(
    labeled: &[LabeledQuery],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledQuery>, Vec<LabeledQuery>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let mut strata: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for (i, l) in labeled.iter().enumerate() {
        strata.entry((l.length(), l.label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; labeled.len()];
    for ((len, label), mut members) in strata {
        members.shuffle(&mut rng);
        let k = train_count(members.len(), train_fraction);
        if k == 0 || k == members.len() {
            warn!(
                "stratum (length {len}, label {label}) with {} queries lands entirely in one split",
                members.len()
            );
        }
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) =
        labeled.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(l, _)| l).collect(),
        test.into_iter().map(|(l, _)| l).collect(),
    ))
}

/// Per-length classifiers for one ranker.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub ranker: RankerKind,
    pub mask: FeatureMask,
    pub threshold: f64,
    pub nets: BTreeMap<usize, NeuralNet>,
}

/// Training hyperparameters for every length, defaulting hidden nodes and
/// momentum from [`default_net_shape`].
pub fn default_net_configs(
    kind: RankerKind,
    mask: &FeatureMask,
    seed: u64,
) -> BTreeMap<usize, NetConfig> {
    DEFAULT_LENGTHS
        .filter_map(|len| {
            let (hidden, momentum) = default_net_shape(kind, len)?;
            let mut cfg = NetConfig::new(mask.len(), hidden);
            cfg.momentum = momentum;
            cfg.seed = seed.wrapping_add(len as u64);
            Some((len, cfg))
        })
        .collect()
}

/// Trains one network per configured length on the masked features of
/// labeled rows.
pub fn train_selector(
    train: &[QueryFeatures],
    kind: RankerKind,
    mask: FeatureMask,
    configs: &BTreeMap<usize, NetConfig>,
    threshold: f64,
) -> Result<SelectorModel> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold must be in (0,1)"));
    }
    let mut nets = BTreeMap::new();
    for (&len, cfg) in configs {
        if cfg.num_inputs != mask.len() {
            return Err(Error::Dimension {
                expected: mask.len(),
                got: cfg.num_inputs,
            });
        }
        let samples: Vec<Sample> = train
            .iter()
            .filter(|f| f.query_length == len)
            .map(|f| {
                let label = f
                    .label
                    .ok_or_else(|| Error::invalid(format!("query {} has no label", f.query_id)))?;
                Ok(Sample::new(mask.project(f), label))
            })
            .collect::<Result<_>>()?;
        let (net, log) = neural::train(cfg, &samples).map_err(|e| match e {
            Error::MissingClass { missing } => Error::invalid(format!(
                "{kind} length {len}: training split has no queries labeled {missing}"
            )),
            other => other,
        })?;
        info!(
            "{kind} length {len}: {} samples, {} iterations, final loss {:.6}",
            samples.len(),
            log.losses.len(),
            log.losses.last().copied().unwrap_or(f64::NAN)
        );
        nets.insert(len, net);
    }
    Ok(SelectorModel {
        ranker: kind,
        mask,
        threshold,
        nets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteDecision {
    pub use_tp: bool,
    /// Classifier output; `None` when no network covers the query length.
    pub probability: Option<f64>,
}

/// Proximity iff the length's network outputs at least the threshold.
/// Lengths without a network go to the base ranker.
pub fn route(model: &SelectorModel, index: &PositionalIndex, query: &Query) -> RouteDecision {
    let Some(net) = model.nets.get(&query.len()) else {
        return RouteDecision {
            use_tp: false,
            probability: None,
        };
    };
    let probability = model
        .mask
        .extract(index, query)
        .and_then(|x| net.forward(&x))
        .expect("mask and network dimensions agree");
    RouteDecision {
        use_tp: probability >= model.threshold,
        probability: Some(probability),
    }
}

const SELECTOR_HEADER: &str = "proxsel-selector 1";

impl SelectorModel {
    pub fn to_text(&self) -> String {
        let names: Vec<&str> = self.mask.features.iter().map(|f| f.name()).collect();
        let mut out = format!("{SELECTOR_HEADER}\n");
        let _ = writeln!(out, "ranker {}", self.ranker);
        let _ = writeln!(out, "threshold {:?}", self.threshold);
        let _ = writeln!(out, "mask {} {}", self.mask.name, names.join(","));
        for (len, net) in &self.nets {
            let _ = writeln!(out, "length {len}");
            out.push_str(&net.to_text());
            out.push_str("end\n");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format(0, m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SELECTOR_HEADER) {
            return Err(bad(
                "not a selector model file (or unsupported version)".into()
            ));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(format!("expected `{key}`, found {line:?}")))
        };
        let ranker: RankerKind = field("ranker")?.parse()?;
        let threshold: f64 = field("threshold")?
            .parse()
            .map_err(|_| bad("bad threshold".into()))?;
        let mask_line = field("mask")?;
        let (name, list) = mask_line
            .split_once(' ')
            .ok_or_else(|| bad("bad mask line".into()))?;
        let features: Vec<Feature> = list.split(',').map(str::parse).collect::<Result<_>>()?;
        let mask = FeatureMask::new(name, features);
        let mut nets = BTreeMap::new();
        let mut rest: Vec<&str> = lines.collect();
        rest.retain(|l| !l.trim().is_empty());
        let mut i = 0;
        while i < rest.len() {
            let len: usize = rest[i]
                .strip_prefix("length ")
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(format!("expected `length N`, found {:?}", rest[i])))?;
            let end = rest[i + 1..]
                .iter()
                .position(|l| l.trim() == "end")
                .ok_or_else(|| bad(format!("network for length {len} is not terminated")))?;
            let block = rest[i + 1..i + 1 + end].join("\n");
            let net = NeuralNet::from_text(&block)?;
            if net.num_inputs != mask.len() {
                return Err(Error::Dimension {
                    expected: mask.len(),
                    got: net.num_inputs,
                });
            }
            nets.insert(len, net);
            i += end + 2;
        }
        Ok(SelectorModel {
            ranker,
            mask,
            threshold,
            nets,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Standardizer;

    fn labeled(id: usize, len: usize, label: u8) -> LabeledQuery {
        let terms: Vec<String> = (0..len).map(|i| format!("t{id}_{i}")).collect();
        let query = Query::new(format!("q{id}"), &terms);
        let mut features =
            QueryFeatures::from_values(query.id.clone(), &[0.0; 16], Some(label)).unwrap();
        features.query_length = len;
        LabeledQuery {
            query,
            features,
            ap_base: 0.5,
            ap_tp: if label == 1 { 0.6 } else { 0.5 },
            label,
        }
    }

    #[test]
    fn label_rule() {
        assert_eq!(benefit_label(0.5, 0.5), 0);
        assert_eq!(benefit_label(0.5, 0.51), 1);
        assert_eq!(benefit_label(0.5, 0.4), 0);
    }

    #[test]
    fn default_shapes() {
        assert_eq!(default_net_shape(RankerKind::Exp, 3), Some((43, 1.0)));
        assert_eq!(default_net_shape(RankerKind::Bm25Tp, 4), Some((10, 0.25)));
        assert_eq!(default_net_shape(RankerKind::Mrf, 5), Some((47, 0.85)));
        assert_eq!(default_net_shape(RankerKind::Mrf, 2), None);
        assert_eq!(default_net_shape(RankerKind::Mrf, 6), None);
    }

    #[test]
    fn split_per_stratum() {
        let mut all = Vec::new();
        for i in 0..100 {
            all.push(labeled(i, 3 + i % 3, (i % 2) as u8));
        }
        let (train, test) = split_train_test(&all, 0.7, 9).unwrap();
        assert_eq!(train.len() + test.len(), 100);
        for len in 3..=5 {
            for label in 0..=1u8 {
                let n = all
                    .iter()
                    .filter(|l| l.length() == len && l.label == label)
                    .count();
                let k = train
                    .iter()
                    .filter(|l| l.length() == len && l.label == label)
                    .count();
                assert!(
                    (k as f64 - 0.7 * n as f64).abs() <= 1.0,
                    "{len}/{label}: {k} of {n}"
                );
            }
        }
        let again = split_train_test(&all, 0.7, 9).unwrap();
        assert_eq!(again.0, train);
        assert!(split_train_test(&all, 1.0, 9).is_err());
    }

    #[test]
    fn split_rounding_boundary() {
        let all: Vec<LabeledQuery> = (0..10).map(|i| labeled(i, 3, 1)).collect();
        let (train, test) = split_train_test(&all, 0.999, 1).unwrap();
        assert_eq!((train.len(), test.len()), (9, 1));
    }

    fn fixed_model(b2: f64) -> SelectorModel {
        let mask = FeatureMask::preset(RankerKind::Mrf);
        let net = NeuralNet {
            num_inputs: 3,
            num_hidden: 1,
            w1: vec![0.0; 3],
            b1: vec![0.0],
            w2: vec![0.0],
            b2,
            standardizer: Standardizer::identity(3),
        };
        SelectorModel {
            ranker: RankerKind::Mrf,
            mask,
            threshold: 0.5,
            nets: [(3, net)].into(),
        }
    }

    #[test]
    fn routing_rules() {
        let index = PositionalIndex::build([(1, "a b c d")], false).unwrap();
        let model = fixed_model(0.0);
        let two = Query::new("q", &["a", "b"]);
        assert_eq!(
            route(&model, &index, &two),
            RouteDecision {
                use_tp: false,
                probability: None
            }
        );
        let three = Query::new("q", &["a", "b", "c"]);
        let d = route(&model, &index, &three);
        assert_eq!(d.probability, Some(0.5));
        assert!(d.use_tp, "0.5 >= threshold routes to TP");
        // sigmoid(ln 1.5) = 0.6
        let d = route(&fixed_model(1.5f64.ln()), &index, &three);
        assert!((d.probability.unwrap() - 0.6).abs() < 1e-12 && d.use_tp);
        let d = route(&fixed_model(-1.0), &index, &three);
        assert!(!d.use_tp);
    }

    #[test]
    fn model_text_round_trip() {
        let model = fixed_model(0.25);
        let back = SelectorModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
        assert!(SelectorModel::from_text("garbage").is_err());
        let broken = model.to_text().replace("end\n", "");
        assert!(SelectorModel::from_text(&broken).is_err());
    }

    #[test]
    fn single_class_length_rejected() {
        let train: Vec<QueryFeatures> = (0..6).map(|i| labeled(i, 3, 1).features).collect();
        let mask = FeatureMask::preset(RankerKind::Exp);
        let mut configs = BTreeMap::new();
        configs.insert(3, NetConfig::new(mask.len(), 4));
        let err = train_selector(&train, RankerKind::Exp, mask, &configs, 0.5).unwrap_err();
        assert!(err.to_string().contains("length 3"), "{err}");
    }
}
