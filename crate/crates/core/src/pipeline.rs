//! Command-level stages: loading inputs, parameter sweeps, labeling,
//! feature selection, training, evaluation, and the end-to-end protocol.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::RunConfig;
use crate::corpus::PositionalIndex;
use crate::error::{Error, Result};
use crate::eval::{
    self, evaluate_policy, format_curve, format_report, misprediction_costs, proportion_curve,
    EvalOptions, MispredictionTable, Policy, PolicyEvaluation,
};
use crate::exec::Execution;
use crate::featselect::{score_features, FeatureScoreTable};
use crate::features::{Feature, FeatureMask, QueryFeatures};
use crate::formats::{self, format_features, Qrels};
use crate::rankers::{Query, RankerKind, ScoringParams};
use crate::selector::{
    label_queries, route, split_train_test, train_selector, LabeledQuery, SelectorModel,
};
use crate::synth::{self, SynthParams};

/// Index, parsed queries and judgments for a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub index: PositionalIndex,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
}

/// Reads the configured files, or generates the synthetic collection when
/// corpus, queries or qrels are not configured. A configured index file is
/// loaded instead of rebuilding from the corpus.
pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let p = &config.paths;
    let (docs, raw_queries, qrels) = match (&p.corpus, &p.queries, &p.qrels) {
        (corpus, Some(q), Some(r)) if corpus.is_some() || p.index.is_some() => {
            let docs = match corpus {
                Some(c) if p.index.as_ref().is_none_or(|i| !i.exists()) => {
                    Some(formats::read_corpus(c)?)
                }
                _ => None,
            };
            (docs, formats::read_queries(q)?, formats::read_qrels(r)?)
        }
        _ => {
            info!("no corpus/queries/qrels configured; generating the synthetic collection");
            let s = synth::generate(&SynthParams::from_config(config));
            (Some(s.documents), s.queries, s.qrels)
        }
    };
    let index = match docs {
        Some(docs) => PositionalIndex::build(
            docs.iter().map(|(id, t)| (*id, t.as_str())),
            config.use_stemming,
        )?,
        None => PositionalIndex::load(p.index.as_ref().expect("index path"))?,
    };
    let queries = raw_queries
        .iter()
        .map(|(id, text)| Query::parse(id.clone(), text, &index))
        .collect();
    Ok(Inputs {
        index,
        queries,
        qrels,
    })
}

/// Summary printed after indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSummary {
    pub doc_count: usize,
    pub avg_doc_length: f64,
    pub vocabulary_size: usize,
}

pub fn cmd_index(corpus: &Path, index_path: &Path, use_stemming: bool) -> Result<IndexSummary> {
    let docs = formats::read_corpus(corpus)?;
    let index = PositionalIndex::build(docs.iter().map(|(id, t)| (*id, t.as_str())), use_stemming)?;
    index.save(index_path)?;
    Ok(IndexSummary {
        doc_count: index.doc_count(),
        avg_doc_length: index.avg_doc_length(),
        vocabulary_size: index.vocabulary_size(),
    })
}

/// The blend weight a ranker's sweep tunes, if any.
pub fn swept_parameter(kind: RankerKind) -> Option<&'static str> {
    match kind {
        RankerKind::Exp => Some("epsilon"),
        RankerKind::Bm25Tp => Some("beta"),
        RankerKind::Mrf => None,
    }
}

fn with_weight(params: &ScoringParams, kind: RankerKind, value: f64) -> ScoringParams {
    let mut p = *params;
    match kind {
        RankerKind::Exp => p.blend.epsilon = value,
        RankerKind::Bm25Tp => p.blend.beta = value,
        RankerKind::Mrf => {}
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub ranker: RankerKind,
    pub parameter: &'static str,
    /// `(value, MAP)` for every grid point in grid order.
    pub points: Vec<(f64, f64)>,
    pub best: f64,
    pub best_map: f64,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\tMAP\n", self.parameter);
        for (v, m) in &self.points {
            let _ = writeln!(out, "{v}\t{m:.6}");
        }
        out
    }
}

/// MAP of the proximity ranker for each grid value of its blend weight.
/// The best value wins; ties go to the smaller value. `None` for MRF,
/// whose weights are not swept.
pub fn sweep(
    inputs: &Inputs,
    kind: RankerKind,
    params: &ScoringParams,
    grid: &[f64],
    options: &EvalOptions,
    exec: Execution,
) -> Result<Option<SweepResult>> {
    let Some(parameter) = swept_parameter(kind) else {
        return Ok(None);
    };
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let options = EvalOptions {
        measure_throughput: false,
        ..options.clone()
    };
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&v| {
            let p = with_weight(params, kind, v);
            let e = evaluate_policy(
                &inputs.index,
                &inputs.queries,
                &inputs.qrels,
                kind,
                Policy::TpAll,
                &p,
                &options,
                exec,
            );
            (v, e.map())
        })
        .collect();
    let (best, best_map) = points
        .iter()
        .copied()
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("non-empty grid");
    Ok(Some(SweepResult {
        ranker: kind,
        parameter,
        points,
        best,
        best_map,
    }))
}

/// Per-query labeling output with the AP pair.
pub fn format_labels(labeled: &[LabeledQuery]) -> String {
    let mut out = String::from("query_id\tlength\tap_base\tap_tp\tlabel\n");
    for l in labeled {
        let _ = writeln!(
            out,
            "{}\t{}\t{:?}\t{:?}\t{}",
            l.query.id,
            l.length(),
            l.ap_base,
            l.ap_tp,
            l.label
        );
    }
    out
}

/// Scores all features on labeled rows.
pub fn feature_report(
    rows: &[QueryFeatures],
    relief_iterations: usize,
    seed: u64,
) -> Result<FeatureScoreTable> {
    let names: Vec<String> = Feature::ALL.iter().map(|f| f.name().to_string()).collect();
    let samples: Vec<Vec<f64>> = rows.iter().map(QueryFeatures::values).collect();
    let labels: Vec<u8> = rows
        .iter()
        .map(|r| {
            r.label
                .ok_or_else(|| Error::invalid(format!("query {} has no label", r.query_id)))
        })
        .collect::<Result<_>>()?;
    score_features(&names, &samples, &labels, relief_iterations, seed)
}

/// Trains the per-length selector for `kind` from the config's shapes.
pub fn train_from_config(
    config: &RunConfig,
    kind: RankerKind,
    rows: &[QueryFeatures],
) -> Result<SelectorModel> {
    let configs: BTreeMap<usize, _> = config
        .lengths()
        .map(|len| Ok((len, config.net_config(kind, len)?)))
        .collect::<Result<_>>()?;
    train_selector(
        rows,
        kind,
        FeatureMask::preset(kind),
        &configs,
        config.selector.threshold,
    )
}

/// Evaluations of the policies for one ranker, tpNo first.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policies(
    inputs: &Inputs,
    queries: &[Query],
    kind: RankerKind,
    model: Option<&SelectorModel>,
    oracle_labels: &HashMap<String, u8>,
    params: &ScoringParams,
    options: &EvalOptions,
    exec: Execution,
) -> Vec<PolicyEvaluation> {
    let mut policies = vec![Policy::TpNo, Policy::TpAll];
    if let Some(m) = model {
        policies.push(Policy::TpS(m));
    }
    policies.push(Policy::Oracle(oracle_labels));
    policies
        .into_iter()
        .map(|p| {
            evaluate_policy(
                &inputs.index,
                queries,
                &inputs.qrels,
                kind,
                p,
                params,
                options,
                exec,
            )
        })
        .collect()
}

/// Everything the pipeline produced for one ranker.
#[derive(Debug, Clone)]
pub struct RankerRun {
    pub ranker: RankerKind,
    pub params: ScoringParams,
    pub sweep: Option<SweepResult>,
    pub labeled: Vec<LabeledQuery>,
    pub train: Vec<LabeledQuery>,
    pub test: Vec<LabeledQuery>,
    pub features: FeatureScoreTable,
    pub model: SelectorModel,
    pub evaluations: Vec<PolicyEvaluation>,
    pub curve: Vec<(f64, f64)>,
    pub mispredictions: MispredictionTable,
}

impl RankerRun {
    pub fn evaluation(&self, suffix: &str) -> Option<&PolicyEvaluation> {
        self.evaluations.iter().find(|e| e.method.ends_with(suffix))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub runs: Vec<RankerRun>,
    /// Report file name to contents.
    pub reports: BTreeMap<String, String>,
    /// Model file name to contents.
    pub models: BTreeMap<String, String>,
}

/// Sweep, label, split, feature report, per-length training and the
/// four-policy evaluation on the test split, for one ranker.
pub fn run_ranker(config: &RunConfig, inputs: &Inputs, kind: RankerKind) -> Result<RankerRun> {
    let exec = config.execution();
    let options = config.eval_options();
    let mut params = config.scoring_params();
    let sweep_result = if config.sweep.enabled {
        sweep(inputs, kind, &params, &config.sweep.grid, &options, exec)
            .map_err(|e| e.in_stage("sweep"))?
    } else {
        None
    };
    if let Some(s) = &sweep_result {
        info!(
            "{kind}: {} = {} (MAP {:.4})",
            s.parameter, s.best, s.best_map
        );
        params = with_weight(&params, kind, s.best);
    }

    let (labeled, excluded) = label_queries(
        &inputs.index,
        &inputs.queries,
        &inputs.qrels,
        kind,
        &params,
        &config.lengths(),
        options.ap_depth,
        exec,
    );
    if labeled.is_empty() {
        return Err(Error::invalid(format!(
            "no labelable queries ({} excluded)",
            excluded.len()
        ))
        .in_stage("label"));
    }
    let (train, test) = split_train_test(&labeled, config.selector.train_fraction, config.seed)
        .map_err(|e| e.in_stage("split"))?;
    let train_rows: Vec<QueryFeatures> = train.iter().map(|l| l.features.clone()).collect();
    let features = feature_report(
        &train_rows,
        config.featselect.relief_iterations,
        config.seed,
    )
    .map_err(|e| e.in_stage("featselect"))?;
    let model = train_from_config(config, kind, &train_rows).map_err(|e| e.in_stage("train"))?;

    let test_queries: Vec<Query> = test.iter().map(|l| l.query.clone()).collect();
    let oracle: HashMap<String, u8> = test.iter().map(|l| (l.query.id.clone(), l.label)).collect();
    let evaluations = evaluate_policies(
        inputs,
        &test_queries,
        kind,
        Some(&model),
        &oracle,
        &params,
        &options,
        exec,
    );

    let pairs: Vec<(f64, f64)> = labeled.iter().map(|l| (l.ap_base, l.ap_tp)).collect();
    let curve = proportion_curve(&pairs);
    let mispredictions = misprediction_costs(
        &test
            .iter()
            .map(|l| {
                let predicted = u8::from(route(&model, &inputs.index, &l.query).use_tp);
                (l.ap_base, l.ap_tp, l.label, predicted)
            })
            .collect::<Vec<_>>(),
    );
    Ok(RankerRun {
        ranker: kind,
        params,
        sweep: sweep_result,
        labeled,
        train,
        test,
        features,
        model,
        evaluations,
        curve,
        mispredictions,
    })
}

/// Runs every configured ranker and renders the report files.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let inputs = load_inputs(config).map_err(|e| e.in_stage("load"))?;
    let runs: Vec<RankerRun> = config
        .rankers
        .iter()
        .map(|&k| run_ranker(config, &inputs, k))
        .collect::<Result<_>>()?;

    let mut reports = BTreeMap::new();
    let mut models = BTreeMap::new();
    let rows: Vec<eval::MetricRow> = runs
        .iter()
        .flat_map(|r| r.evaluations.iter().flat_map(|e| e.rows.iter().cloned()))
        .collect();
    reports.insert("report.tsv".to_string(), format_report(&rows));
    for r in &runs {
        let name = r.ranker.name().to_lowercase();
        reports.insert(format!("curve_{name}.tsv"), format_curve(&r.curve));
        reports.insert(
            format!("mispredictions_{name}.tsv"),
            r.mispredictions.to_tsv(),
        );
        reports.insert(format!("featselect_{name}.tsv"), r.features.to_tsv());
        reports.insert(format!("labels_{name}.tsv"), format_labels(&r.labeled));
        let rows: Vec<QueryFeatures> = r.labeled.iter().map(|l| l.features.clone()).collect();
        reports.insert(format!("features_{name}.tsv"), format_features(&rows));
        if let Some(s) = &r.sweep {
            reports.insert(format!("sweep_{name}.tsv"), s.to_tsv());
        }
        models.insert(format!("selector_{name}.model"), r.model.to_text());
    }
    Ok(PipelineOutput {
        runs,
        reports,
        models,
    })
}

/// Default output directory when the config names none.
pub const DEFAULT_REPORT_DIR: &str = "reports";

impl PipelineOutput {
    /// Writes reports to the report directory and models to the model
    /// directory (default: `models/` inside the report directory).
    pub fn write(&self, config: &RunConfig) -> Result<PathBuf> {
        let report_dir = config
            .paths
            .report_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_REPORT_DIR));
        let model_dir = config
            .paths
            .model_dir
            .clone()
            .unwrap_or_else(|| report_dir.join("models"));
        std::fs::create_dir_all(&report_dir)?;
        std::fs::create_dir_all(&model_dir)?;
        for (name, text) in &self.reports {
            std::fs::write(report_dir.join(name), text)?;
        }
        for (name, text) in &self.models {
            std::fs::write(model_dir.join(name), text)?;
        }
        Ok(report_dir)
    }
}

/// Result of an ad-hoc query.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub query: Query,
    pub use_tp: bool,
    pub probability: Option<f64>,
    pub hits: Vec<(crate::corpus::DocId, f64)>,
}

/// Routes a query with the model (base ranker without one) and returns the
/// top `k` documents.
pub fn search(
    index: &PositionalIndex,
    model: Option<&SelectorModel>,
    kind: RankerKind,
    params: &ScoringParams,
    text: &str,
    k: usize,
) -> Result<SearchResult> {
    let query = Query::parse("query", text, index);
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let decision = match model {
        Some(m) => {
            if m.ranker != kind {
                return Err(Error::invalid(format!(
                    "model was trained for {}, not {kind}",
                    m.ranker
                )));
            }
            route(m, index, &query)
        }
        None => crate::selector::RouteDecision {
            use_tp: false,
            probability: None,
        },
    };
    let mut list = kind.score(decision.use_tp, index, &query, params);
    list.truncate(k);
    Ok(SearchResult {
        query,
        use_tp: decision.use_tp,
        probability: decision.probability,
        hits: list.entries,
    })
}
