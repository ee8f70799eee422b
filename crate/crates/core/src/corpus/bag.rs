use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{is_apostrophe, stem_token, stopwords, ReviewRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmerKind {
    Porter,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub min_token_len: usize,
    pub min_corpus_count: u64,
    pub max_corpus_count: u64,
    pub stopwords: BTreeSet<String>,
    pub stemmer: StemmerKind,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_token_len: 3,
            min_corpus_count: 10,
            max_corpus_count: 100_000,
            stopwords: stopwords::english(),
            stemmer: StemmerKind::Porter,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_corpus_count == 0 || self.min_corpus_count >= self.max_corpus_count {
            return Err(Error::InvalidConfig(format!(
                "need 0 < min_corpus_count ({}) < max_corpus_count ({})",
                self.min_corpus_count, self.max_corpus_count
            )));
        }
        Ok(())
    }
}

/// Dense term <-> index mapping with corpus counts. Terms are indexed in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    terms: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::new(r.terms, r.counts)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { terms: v.terms, counts: v.counts }
    }
}

impl Vocabulary {
    pub fn new(terms: Vec<String>, counts: Vec<u64>) -> Self {
        assert_eq!(terms.len(), counts.len());
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { terms, counts, index }
    }

    /// Vocabulary of `n` placeholder terms `w0000..`, for synthetic corpora.
    pub fn synthetic(n: usize) -> Self {
        let terms = (0..n).map(|i| format!("w{i:04}")).collect();
        Vocabulary::new(terms, vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// SHA-256 over the newline-joined term list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub review_id: String,
    /// (term index, count) pairs, sorted by term index, counts >= 1.
    pub terms: Vec<(u32, u32)>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.terms.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Token sequence in term-index order.
    pub fn tokens(&self) -> impl Iterator<Item = u32> + '_ {
        self.terms
            .iter()
            .flat_map(|&(t, c)| std::iter::repeat_n(t, c as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagCorpus {
    pub docs: Vec<Document>,
    pub total_tokens: usize,
}

impl BagCorpus {
    pub fn new(docs: Vec<Document>) -> Self {
        let total_tokens = docs.iter().map(Document::len).sum();
        BagCorpus { docs, total_tokens }
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc_lengths(&self) -> Vec<usize> {
        self.docs.iter().map(Document::len).collect()
    }

    /// Indices of documents left empty by pruning. They stay in the corpus
    /// so review-level joins keep their alignment.
    pub fn empty_documents(&self) -> Vec<usize> {
        (0..self.docs.len()).filter(|&d| self.docs[d].is_empty()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed_term_count: usize,
    pub removed_occurrence_count: u64,
    pub retained_term_count: usize,
    pub retained_occurrence_count: u64,
    pub empty_documents: usize,
}

/// Tokenizes one text up to (and including) stemming: lowercase, drop
/// apostrophes, split on any non-alphabetic character, drop short tokens,
/// drop stopwords, stem.
pub fn tokenize(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .filter(|c| !is_apostrophe(*c))
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| t.chars().count() >= config.min_token_len)
        .filter(|t| !config.stopwords.contains(*t))
        .map(|t| match config.stemmer {
            StemmerKind::Porter => stem_token(t),
            StemmerKind::None => t.to_owned(),
        })
        .collect()
}

pub fn preprocess(
    reviews: &[ReviewRecord],
    config: &PreprocessConfig,
) -> Result<(BagCorpus, Vocabulary, PruneReport)> {
    let docs: Vec<(&str, &str)> = reviews
        .iter()
        .map(|r| (r.review_id.as_str(), r.text.as_str()))
        .collect();
    preprocess_texts(&docs, config)
}

/// Builds the pruned corpus from `(document id, text)` pairs. Output is
/// independent of rayon's worker count.
pub fn preprocess_texts(
    docs: &[(&str, &str)],
    config: &PreprocessConfig,
) -> Result<(BagCorpus, Vocabulary, PruneReport)> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidInput("no reviews to preprocess".into()));
    }
    let tokenized: Vec<Vec<String>> = docs
        .par_iter()
        .map(|(_, text)| tokenize(text, config))
        .collect();

    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for tokens in &tokenized {
        for t in tokens {
            *totals.entry(t.as_str()).or_default() += 1;
        }
    }

    let mut report = PruneReport::default();
    let mut terms = Vec::new();
    let mut counts = Vec::new();
    for (term, &count) in &totals {
        if (config.min_corpus_count..=config.max_corpus_count).contains(&count) {
            terms.push((*term).to_owned());
            counts.push(count);
            report.retained_term_count += 1;
            report.retained_occurrence_count += count;
        } else {
            report.removed_term_count += 1;
            report.removed_occurrence_count += count;
        }
    }
    let vocab = Vocabulary::new(terms, counts);

    let documents: Vec<Document> = docs
        .par_iter()
        .zip(tokenized.par_iter())
        .map(|((id, _), tokens)| {
            let mut bag: BTreeMap<u32, u32> = BTreeMap::new();
            for t in tokens {
                if let Some(idx) = vocab.get(t) {
                    *bag.entry(idx).or_default() += 1;
                }
            }
            Document {
                review_id: (*id).to_owned(),
                terms: bag.into_iter().collect(),
            }
        })
        .collect();
    let corpus = BagCorpus::new(documents);
    report.empty_documents = corpus.empty_documents().len();
    if report.empty_documents == corpus.num_docs() {
        return Err(Error::DegenerateCorpus);
    }
    if report.empty_documents > 0 {
        log::info!(
            "{} of {} documents empty after pruning; excluded from topic fitting",
            report.empty_documents,
            corpus.num_docs()
        );
    }
    Ok((corpus, vocab, report))
}
