//! Positional inverted index over a tokenized document collection.

mod codec;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::normalize;

pub use codec::{decode_index, encode_index, FORMAT_VERSION, MAGIC};

pub type DocId = u32;

/// A normalized document. Positions are the 1-based offsets into `tokens`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: DocId,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: DocId, raw_text: &str, use_stemming: bool) -> Self {
        Document {
            doc_id,
            tokens: normalize(raw_text, use_stemming),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: DocId,
    /// Strictly increasing 1-based token offsets.
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn frequency(&self) -> u32 {
        self.positions.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub term: String,
    /// Sorted by ascending `doc_id`.
    pub entries: Vec<Posting>,
}

impl PostingList {
    pub fn document_frequency(&self) -> usize {
        self.entries.len()
    }

    pub fn collection_frequency(&self) -> u64 {
        self.entries.iter().map(|e| e.positions.len() as u64).sum()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.entries.iter().map(|e| e.doc_id)
    }

    /// Mean over documents of the mean within-document position.
    fn general_position(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .entries
            .iter()
            .map(|e| {
                let sum: u64 = e.positions.iter().map(|&p| p as u64).sum();
                sum as f64 / e.positions.len() as f64
            })
            .sum();
        total / self.entries.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TermStats {
    collection_frequency: u64,
    general_position: f64,
}

/// One document that contains every term of a conjunctive query, with the
/// position lists aligned to the query term order.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub doc_id: DocId,
    pub doc_len: u32,
    pub positions: Vec<&'a [u32]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionalIndex {
    postings: BTreeMap<String, PostingList>,
    doc_lengths: BTreeMap<DocId, u32>,
    avg_doc_length: f64,
    collection_length: u64,
    use_stemming: bool,
    term_stats: HashMap<String, TermStats>,
}

impl PositionalIndex {
    /// Builds an index from `(doc_id, raw_text)` pairs.
    pub fn build<'a, I>(documents: I, use_stemming: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (DocId, &'a str)>,
    {
        let docs = documents
            .into_iter()
            .map(|(id, text)| Document::new(id, text, use_stemming));
        Self::from_documents(docs, use_stemming)
    }

    /// Builds an index from already-normalized documents.
    pub fn from_documents<I>(documents: I, use_stemming: bool) -> Result<Self>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut postings: BTreeMap<String, PostingList> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for doc in documents {
            if doc_lengths.insert(doc.doc_id, doc.len() as u32).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id));
            }
            let mut local: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
            for (i, token) in doc.tokens.iter().enumerate() {
                local.entry(token.as_str()).or_default().push(i as u32 + 1);
            }
            for (term, positions) in local {
                postings
                    .entry(term.to_string())
                    .or_insert_with(|| PostingList {
                        term: term.to_string(),
                        entries: Vec::new(),
                    })
                    .entries
                    .push(Posting {
                        doc_id: doc.doc_id,
                        positions,
                    });
            }
        }
        for list in postings.values_mut() {
            list.entries.sort_unstable_by_key(|e| e.doc_id);
        }
        Ok(Self::assemble(postings, doc_lengths, use_stemming))
    }

    pub(crate) fn assemble(
        postings: BTreeMap<String, PostingList>,
        doc_lengths: BTreeMap<DocId, u32>,
        use_stemming: bool,
    ) -> Self {
        let collection_length: u64 = doc_lengths.values().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            collection_length as f64 / doc_lengths.len() as f64
        };
        let term_stats = postings
            .iter()
            .map(|(term, list)| {
                let stats = TermStats {
                    collection_frequency: list.collection_frequency(),
                    general_position: list.general_position(),
                };
                (term.clone(), stats)
            })
            .collect();
        PositionalIndex {
            postings,
            doc_lengths,
            avg_doc_length,
            collection_length,
            use_stemming,
            term_stats,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    /// Total number of tokens in the collection.
    pub fn collection_length(&self) -> u64 {
        self.collection_length
    }

    pub fn uses_stemming(&self) -> bool {
        self.use_stemming
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, doc_id: DocId) -> Option<u32> {
        self.doc_lengths.get(&doc_id).copied()
    }

    pub fn doc_lengths(&self) -> &BTreeMap<DocId, u32> {
        &self.doc_lengths
    }

    pub fn posting_list(&self, term: &str) -> Option<&PostingList> {
        self.postings.get(term)
    }

    pub fn posting_lists(&self) -> impl Iterator<Item = &PostingList> {
        self.postings.values()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |l| l.entries.len())
    }

    pub fn collection_frequency(&self, term: &str) -> u64 {
        self.term_stats
            .get(term)
            .map_or(0, |s| s.collection_frequency)
    }

    /// Cached mean within-document position of `term`; 0 when absent.
    pub fn general_position(&self, term: &str) -> f64 {
        self.term_stats
            .get(term)
            .map_or(0.0, |s| s.general_position)
    }

    /// Positions of `term` in `doc_id`, empty when the term does not occur.
    pub fn positions(&self, doc_id: DocId, term: &str) -> &[u32] {
        self.postings
            .get(term)
            .and_then(|list| {
                list.entries
                    .binary_search_by_key(&doc_id, |e| e.doc_id)
                    .ok()
                    .map(|i| list.entries[i].positions.as_slice())
            })
            .unwrap_or(&[])
    }

    /// Normalizes query text the same way documents were normalized.
    pub fn normalize_query(&self, text: &str) -> Vec<String> {
        normalize(text, self.use_stemming)
    }

    /// Documents containing every term, ascending. Any absent term gives an
    /// empty result.
    pub fn intersect<S: AsRef<str>>(&self, terms: &[S]) -> Vec<DocId> {
        self.candidates(terms)
            .into_iter()
            .map(|c| c.doc_id)
            .collect()
    }

    /// Conjunctive candidates with per-term positions aligned to `terms`.
    /// Duplicate terms are matched once each but keep their slot.
    pub fn candidates<S: AsRef<str>>(&self, terms: &[S]) -> Vec<Candidate<'_>> {
        if terms.is_empty() {
            return Vec::new();
        }
        let mut lists = Vec::with_capacity(terms.len());
        for term in terms {
            match self.postings.get(term.as_ref()) {
                Some(list) => lists.push(list.entries.as_slice()),
                None => return Vec::new(),
            }
        }
        let mut order: Vec<usize> = (0..lists.len()).collect();
        order.sort_by_key(|&i| lists[i].len());
        let driver = order[0];
        let mut cursors = vec![0usize; lists.len()];
        let mut out = Vec::new();
        'docs: for entry in lists[driver] {
            let doc_id = entry.doc_id;
            let mut slots: Vec<&[u32]> = vec![&[]; lists.len()];
            slots[driver] = &entry.positions;
            for &i in &order[1..] {
                let rest = &lists[i][cursors[i]..];
                let skip = gallop(rest, doc_id);
                cursors[i] += skip;
                match lists[i].get(cursors[i]) {
                    Some(e) if e.doc_id == doc_id => slots[i] = &e.positions,
                    Some(_) => continue 'docs,
                    None => break 'docs,
                }
            }
            out.push(Candidate {
                doc_id,
                doc_len: self.doc_lengths[&doc_id],
                positions: slots,
            });
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, encode_index(self))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        decode_index(&bytes)
    }
}

/// Number of leading entries with `doc_id < target`, found by exponential
/// then binary search.
fn gallop(entries: &[Posting], target: DocId) -> usize {
    let mut hi = 1;
    while hi < entries.len() && entries[hi - 1].doc_id < target {
        hi *= 2;
    }
    let hi = hi.min(entries.len());
    let lo = hi / 2;
    lo + entries[lo..hi].partition_point(|e| e.doc_id < target)
}

/// Deduplicates terms keeping first occurrences in order.
pub fn dedup_terms<S: AsRef<str>>(terms: &[S]) -> Vec<String> {
    let mut seen = HashSet::new();
    terms
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| seen.insert(*t))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aba() -> PositionalIndex {
        PositionalIndex::build([(1, "a b a")], false).unwrap()
    }

    #[test]
    fn single_document_postings() {
        let idx = aba();
        let a = idx.posting_list("a").unwrap();
        assert_eq!(
            a.entries,
            vec![Posting {
                doc_id: 1,
                positions: vec![1, 3]
            }]
        );
        assert_eq!(a.entries[0].frequency(), 2);
        let b = idx.posting_list("b").unwrap();
        assert_eq!(
            b.entries,
            vec![Posting {
                doc_id: 1,
                positions: vec![2]
            }]
        );
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.avg_doc_length(), 3.0);
    }

    #[test]
    fn empty_corpus() {
        let idx = PositionalIndex::build(std::iter::empty(), true).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.avg_doc_length(), 0.0);
        assert!(idx.intersect(&["x"]).is_empty());
    }

    #[test]
    fn mean_length() {
        let idx = PositionalIndex::build([(1, "a b c d"), (2, "a b c d e f")], false).unwrap();
        assert_eq!(idx.avg_doc_length(), 5.0);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = PositionalIndex::build([(7, "a"), (7, "b")], false).unwrap_err();
        assert!(matches!(err, Error::DuplicateDocId(7)));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn intersection_cases() {
        let idx = PositionalIndex::build(
            [(1, "a b"), (2, "a c"), (3, "b c"), (4, "a b c"), (5, "c")],
            false,
        )
        .unwrap();
        assert_eq!(idx.intersect(&["a"]), vec![1, 2, 4]);
        assert_eq!(idx.intersect(&["a", "b"]), vec![1, 4]);
        assert_eq!(idx.intersect(&["a", "b", "c"]), vec![4]);
        assert!(idx.intersect(&["a", "zzz"]).is_empty());
        let disjoint = PositionalIndex::build([(1, "x"), (2, "y")], false).unwrap();
        assert!(disjoint.intersect(&["x", "y"]).is_empty());
    }

    #[test]
    fn candidate_positions_follow_term_order() {
        let idx = PositionalIndex::build([(3, "b x a b")], false).unwrap();
        let cands = idx.candidates(&["a", "b"]);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].positions, vec![&[3u32][..], &[1, 4][..]]);
        assert_eq!(cands[0].doc_len, 4);
    }

    #[test]
    fn gallop_counts_smaller_entries() {
        let entries: Vec<Posting> = [2, 4, 6, 8, 10, 12, 14]
            .iter()
            .map(|&d| Posting {
                doc_id: d,
                positions: vec![1],
            })
            .collect();
        for target in 0..16 {
            let expected = entries.iter().filter(|e| e.doc_id < target).count();
            assert_eq!(gallop(&entries, target), expected, "target {target}");
        }
    }

    #[test]
    fn dedup_keeps_first() {
        assert_eq!(dedup_terms(&["b", "a", "b", "c", "a"]), vec!["b", "a", "c"]);
    }
}
