//! Seeded synthetic test collection.
//!
//! Every query owns a judged pool of documents that contain all of its
//! terms once each, padded with Zipf-distributed background words. Pools
//! come in two kinds. In a *phrase* pool the relevant documents hold the
//! query terms as one contiguous phrase while the non-relevant ones scatter
//! them, and the non-relevant documents are a little shorter, so BM25 alone
//! prefers them. In a *scatter* pool the roles are swapped: relevant
//! documents scatter the terms and are shorter, decoys hold the phrase.
//! Phrase pools keep their terms early in the documents and scatter pools
//! late, so term positions tell the two apart. A share of documents has
//! its layout flipped, and unjudged distractors that scatter the terms
//! widen every candidate set.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::corpus::DocId;
use crate::error::Result;
use crate::formats::{write_corpus, write_queries, Qrels};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub min_length: usize,
    pub max_length: usize,
    pub queries_per_length: usize,
    pub docs_per_query: usize,
    pub background_docs: usize,
    /// Unjudged documents per query that contain all its terms.
    pub distractors_per_query: usize,
    /// Share of queries with phrase pools.
    pub phrase_fraction: f64,
    /// Probability that a judged document gets the other pool kind's
    /// layout.
    pub layout_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 42,
            min_length: 3,
            max_length: 5,
            queries_per_length: 30,
            docs_per_query: 6,
            background_docs: 150,
            distractors_per_query: 24,
            phrase_fraction: 0.6,
            layout_noise: 0.1,
        }
    }
}

impl SynthParams {
    pub fn from_config(config: &RunConfig) -> Self {
        SynthParams {
            seed: config.seed,
            min_length: config.selector.min_length,
            max_length: config.selector.max_length,
            queries_per_length: config.synth.queries_per_length,
            docs_per_query: config.synth.docs_per_query,
            background_docs: config.synth.background_docs,
            distractors_per_query: config.synth.distractors_per_query,
            ..SynthParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<(DocId, String)>,
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
}

/// File locations written by [`SynthCorpus::write_to`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
}

impl SynthCorpus {
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SynthFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files = SynthFiles {
            corpus: dir.join("corpus.tsv"),
            queries: dir.join("queries.tsv"),
            qrels: dir.join("qrels.txt"),
        };
        std::fs::write(&files.corpus, write_corpus(&self.documents))?;
        std::fs::write(&files.queries, write_queries(&self.queries))?;
        std::fs::write(&files.qrels, self.qrels.to_trec())?;
        Ok(files)
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const BACKGROUND_VOCABULARY: usize = 3000;
/// Width of the document span holding a pool's query terms.
const REGION: usize = 60;
/// Smallest gap between scattered query-term occurrences.
const SCATTER_GAP: usize = 9;
/// Extra tokens on the documents BM25 should rank lower.
const LENGTH_PENALTY: usize = 6;

struct Words {
    seen: BTreeSet<String>,
}

impl Words {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=4);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
            }
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }
}

/// Chooses `count` slots in `[lo, lo + REGION)` pairwise at least
/// `SCATTER_GAP` apart.
fn scatter_slots(rng: &mut ChaCha8Rng, lo: usize, count: usize) -> Vec<usize> {
    let slack = REGION - 1 - (count - 1) * SCATTER_GAP;
    // Stars and bars: sorted offsets in [0, slack] spread over the gaps.
    let mut extra: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=slack)).collect();
    extra.sort_unstable();
    extra
        .iter()
        .enumerate()
        .map(|(i, e)| lo + e + i * SCATTER_GAP)
        .collect()
}

pub fn generate(params: &SynthParams) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut words = Words {
        seen: BTreeSet::new(),
    };
    let background: Vec<String> = (0..BACKGROUND_VOCABULARY)
        .map(|_| words.fresh(&mut rng))
        .collect();
    let zipf = WeightedIndex::new((1..=background.len()).map(|r| 1.0 / r as f64))
        .expect("positive weights");
    let filler = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n)
            .map(|_| background[zipf.sample(rng)].clone())
            .collect()
    };

    let mut bodies: Vec<(Option<(String, u32)>, String)> = Vec::new();
    let mut queries = Vec::new();
    let relevant_per_query = (params.docs_per_query / 3).max(1);
    let mut qn = 0;
    for length in params.min_length..=params.max_length {
        for _ in 0..params.queries_per_length {
            qn += 1;
            let qid = format!("q{qn:03}");
            let terms: Vec<String> = (0..length).map(|_| words.fresh(&mut rng)).collect();
            queries.push((qid.clone(), terms.join(" ")));
            let phrase_pool = rng.gen_bool(params.phrase_fraction);
            let region_start = if phrase_pool {
                rng.gen_range(0..=25)
            } else {
                rng.gen_range(35..=60)
            };
            let base_len = REGION + 60 + rng.gen_range(0..=20);
            let place = |rng: &mut ChaCha8Rng, tokens: &mut [String], phrase: bool| {
                if phrase {
                    let start = region_start + rng.gen_range(0..=REGION - length);
                    tokens[start..start + length].clone_from_slice(&terms);
                } else {
                    let mut slots = scatter_slots(rng, region_start, length);
                    slots.shuffle(rng);
                    for (t, s) in terms.iter().zip(slots) {
                        tokens[s] = t.clone();
                    }
                }
            };
            for d in 0..params.docs_per_query {
                let relevant = d < relevant_per_query;
                let shorter = relevant != phrase_pool;
                let has_phrase = (relevant == phrase_pool) != rng.gen_bool(params.layout_noise);
                let len = base_len + if shorter { 0 } else { LENGTH_PENALTY };
                let mut tokens = filler(&mut rng, len);
                place(&mut rng, &mut tokens, has_phrase);
                let grade = if relevant { rng.gen_range(1..=2) } else { 0 };
                bodies.push((Some((qid.clone(), grade)), tokens.join(" ")));
            }
            for _ in 0..params.distractors_per_query {
                let len = base_len + rng.gen_range(0..=30);
                let mut tokens = filler(&mut rng, len);
                place(&mut rng, &mut tokens, false);
                bodies.push((None, tokens.join(" ")));
            }
        }
    }
    for _ in 0..params.background_docs {
        let len = rng.gen_range(80..=160);
        bodies.push((None, filler(&mut rng, len).join(" ")));
    }

    let mut ids: Vec<DocId> = (1..=bodies.len() as DocId).collect();
    ids.shuffle(&mut rng);
    let mut qrels = Qrels::new();
    let mut documents: Vec<(DocId, String)> = Vec::with_capacity(bodies.len());
    for ((judgment, text), id) in bodies.into_iter().zip(ids) {
        if let Some((qid, grade)) = judgment {
            qrels.insert(qid, id, grade);
        }
        documents.push((id, text));
    }
    documents.sort_by_key(|d| d.0);
    SynthCorpus {
        documents,
        queries,
        qrels,
    }
}
