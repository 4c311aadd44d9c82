//! Plain-text file formats: corpus, queries, TREC qrels and runs, and
//! feature files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::DocId;
use crate::error::{Error, Result};
use crate::features::{Feature, QueryFeatures};
use crate::rankers::RankedList;

fn parse_error(source: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// `doc_id<TAB>text` per line.
pub fn parse_corpus(text: &str, source: &Path) -> Result<Vec<(DocId, String)>> {
    content_lines(text)
        .map(|(n, line)| {
            let (id, body) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(source, n, "expected `doc_id<TAB>text`"))?;
            let id = id
                .trim()
                .parse::<DocId>()
                .map_err(|_| parse_error(source, n, format!("bad document id {id:?}")))?;
            Ok((id, body.to_string()))
        })
        .collect()
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<(DocId, String)>> {
    let path = path.as_ref();
    parse_corpus(&std::fs::read_to_string(path)?, path)
}

pub fn write_corpus(docs: &[(DocId, String)]) -> String {
    let mut out = String::new();
    for (id, text) in docs {
        let _ = writeln!(out, "{id}\t{text}");
    }
    out
}

/// `query_id<TAB>query text` per line.
pub fn parse_queries(text: &str, source: &Path) -> Result<Vec<(String, String)>> {
    content_lines(text)
        .map(|(n, line)| {
            let (id, body) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(source, n, "expected `query_id<TAB>text`"))?;
            if id.trim().is_empty() {
                return Err(parse_error(source, n, "empty query id"));
            }
            Ok((id.trim().to_string(), body.to_string()))
        })
        .collect()
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_queries(&std::fs::read_to_string(path)?, path)
}

pub fn write_queries(queries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (id, text) in queries {
        let _ = writeln!(out, "{id}\t{text}");
    }
    out
}

/// Graded relevance judgments per query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: DocId, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id, grade);
    }

    /// Graded judgments for a query (empty if unjudged).
    pub fn grades(&self, query_id: &str) -> BTreeMap<DocId, u32> {
        self.judgments.get(query_id).cloned().unwrap_or_default()
    }

    /// Documents judged with grade >= 1.
    pub fn relevant(&self, query_id: &str) -> HashSet<DocId> {
        self.judgments
            .get(query_id)
            .map(|m| m.iter().filter(|(_, &g)| g >= 1).map(|(&d, _)| d).collect())
            .unwrap_or_default()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }
}

/// TREC qrels: `query_id iteration doc_id relevance`. Negative grades are
/// read as 0.
pub fn parse_qrels(text: &str, source: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (n, line) in content_lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [q, _, d, rel] = fields.as_slice() else {
            return Err(parse_error(
                source,
                n,
                "expected `query_id 0 doc_id relevance`",
            ));
        };
        let doc = d
            .parse::<DocId>()
            .map_err(|_| parse_error(source, n, format!("bad document id {d:?}")))?;
        let grade = rel
            .parse::<i64>()
            .map_err(|_| parse_error(source, n, format!("bad relevance {rel:?}")))?;
        qrels.insert(*q, doc, grade.max(0) as u32);
    }
    Ok(qrels)
}

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    parse_qrels(&std::fs::read_to_string(path)?, path)
}

/// TREC run lines `query_id Q0 doc_id rank score tag`, ranks from 1.
pub fn format_run(list: &RankedList, tag: &str) -> String {
    let mut out = String::new();
    for (rank, (doc, score)) in list.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {:.6} {}",
            list.query_id,
            doc,
            rank + 1,
            score,
            tag
        );
    }
    out
}

/// One parsed run line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: DocId,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

pub fn parse_run(text: &str, source: &Path) -> Result<Vec<RunEntry>> {
    content_lines(text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [q, _, d, rank, score, tag] = f.as_slice() else {
                return Err(parse_error(source, n, "expected six run fields"));
            };
            Ok(RunEntry {
                query_id: q.to_string(),
                doc_id: d
                    .parse()
                    .map_err(|_| parse_error(source, n, "bad doc id"))?,
                rank: rank
                    .parse()
                    .map_err(|_| parse_error(source, n, "bad rank"))?,
                score: score
                    .parse()
                    .map_err(|_| parse_error(source, n, "bad score"))?,
                tag: tag.to_string(),
            })
        })
        .collect()
}

const UNSET_LABEL: &str = "-";

/// Feature file with a header naming every feature.
pub fn format_features(rows: &[QueryFeatures]) -> String {
    let names: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    let mut out = format!("query_id\tlabel\t{}\n", names.join(","));
    for row in rows {
        let label = row.label.map_or(UNSET_LABEL.to_string(), |l| l.to_string());
        let values: Vec<String> = row.values().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}\t{}\t{}", row.query_id, label, values.join(","));
    }
    out
}

pub fn parse_features(text: &str, source: &Path) -> Result<Vec<QueryFeatures>> {
    let mut lines = content_lines(text);
    let (hn, header) = lines
        .next()
        .ok_or_else(|| parse_error(source, 1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let [_, _, names] = cols.as_slice() else {
        return Err(parse_error(
            source,
            hn,
            "header must have three tab-separated columns",
        ));
    };
    let features: Vec<Feature> = names
        .split(',')
        .map(|n| n.trim().parse::<Feature>())
        .collect::<Result<_>>()
        .map_err(|e| parse_error(source, hn, e.to_string()))?;
    let mut rows = Vec::new();
    for (n, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, label, values] = cols.as_slice() else {
            return Err(parse_error(
                source,
                n,
                "expected `query_id<TAB>label<TAB>values`",
            ));
        };
        let label = match *label {
            UNSET_LABEL => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(parse_error(source, n, format!("bad label {other:?}"))),
        };
        let parsed: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_error(source, n, "bad feature value"))?;
        if parsed.len() != features.len() {
            return Err(parse_error(
                source,
                n,
                format!("{} values for {} features", parsed.len(), features.len()),
            ));
        }
        let mut full = vec![0.0; Feature::ALL.len()];
        for (f, v) in features.iter().zip(parsed) {
            let slot = Feature::ALL
                .iter()
                .position(|x| x == f)
                .expect("known feature");
            full[slot] = v;
        }
        rows.push(QueryFeatures::from_values(*id, &full, label)?);
    }
    Ok(rows)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<QueryFeatures>> {
    let path = path.as_ref();
    parse_features(&std::fs::read_to_string(path)?, path)
}

/// Path used in parse errors for in-memory text.
pub fn memory_source() -> PathBuf {
    PathBuf::from("<memory>")
}
