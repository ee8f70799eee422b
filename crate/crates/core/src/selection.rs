//! Topic-count selection by UMass coherence and FREX exclusivity.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BagCorpus, Vocabulary};
use crate::lda::{self, LdaModel, LdaSettings};
use crate::util::{argsort_desc, mean};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScores {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

impl TopicScores {
    fn new(per_topic: Vec<f64>) -> Self {
        let mean = mean(&per_topic);
        TopicScores { per_topic, mean }
    }
}

/// Sorted ids of the documents containing each term in `terms`.
fn postings(corpus: &BagCorpus, terms: &[usize]) -> Vec<Vec<u32>> {
    let mut slot = std::collections::HashMap::new();
    for (i, &t) in terms.iter().enumerate() {
        slot.entry(t as u32).or_insert(i);
    }
    let mut out = vec![Vec::new(); terms.len()];
    for (d, doc) in corpus.docs.iter().enumerate() {
        for &(w, _) in &doc.terms {
            if let Some(&i) = slot.get(&w) {
                out[i].push(d as u32);
            }
        }
    }
    // Duplicate terms share the first slot's list.
    for (i, &t) in terms.iter().enumerate() {
        let first = slot[&(t as u32)];
        if first != i {
            out[i] = out[first].clone();
        }
    }
    out
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// UMass coherence of explicit top-word lists (each ordered by decreasing
/// probability). A top word absent from every document is counted as if it
/// occurred once, so its pairs contribute `log(1/1) = 0`.
pub fn coherence_of_top_words(top_words: &[Vec<usize>], corpus: &BagCorpus) -> TopicScores {
    let per_topic = top_words
        .iter()
        .map(|top| {
            let lists = postings(corpus, top);
            let mut c = 0.0;
            for m in 1..top.len() {
                for l in 0..m {
                    let dl = lists[l].len();
                    if dl == 0 {
                        log::warn!("top word {} occurs in no document", top[l]);
                    }
                    let co = intersection_size(&lists[m], &lists[l]);
                    c += ((co as f64 + 1.0) / dl.max(1) as f64).ln();
                }
            }
            c
        })
        .collect();
    TopicScores::new(per_topic)
}

/// UMass coherence of each topic's top-`m` words over `corpus`.
pub fn semantic_coherence(model: &LdaModel, corpus: &BagCorpus, m: usize) -> Result<TopicScores> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("coherence needs at least 2 top words, got {m}")));
    }
    let top: Vec<Vec<usize>> = (0..model.num_topics()).map(|t| model.top_word_ids(t, m)).collect();
    Ok(coherence_of_top_words(&top, corpus))
}

/// Empirical CDF of `x` within `sorted`, with tied values sharing their
/// mid-rank: `(#{y < x} + (#{y == x} + 1) / 2) / n`.
fn ecdf(sorted: &[f64], x: f64) -> f64 {
    let below = sorted.partition_point(|&y| y < x);
    let through = sorted.partition_point(|&y| y <= x);
    (below as f64 + (through - below + 1) as f64 / 2.0) / sorted.len() as f64
}

/// FREX exclusivity computed directly from a topic-word matrix.
pub fn exclusivity_of_phi(phi: &DMatrix<f64>, m: usize, w: f64) -> Result<TopicScores> {
    let (k, v) = phi.shape();
    if k < 2 {
        return Err(Error::SingleTopic);
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::InvalidConfig(format!("FREX weight must lie in (0, 1), got {w}")));
    }
    let col_sums: Vec<f64> = (0..v).map(|j| phi.column(j).sum()).collect();
    let per_topic = (0..k)
        .map(|t| {
            let row: Vec<f64> = phi.row(t).iter().copied().collect();
            let excl: Vec<f64> = row
                .iter()
                .zip(&col_sums)
                .map(|(&p, &s)| if s > 0.0 { p / s } else { 0.0 })
                .collect();
            let mut excl_sorted = excl.clone();
            excl_sorted.sort_by(f64::total_cmp);
            let mut row_sorted = row.clone();
            row_sorted.sort_by(f64::total_cmp);
            let top = argsort_desc(&row);
            let scores: Vec<f64> = top[..m.min(v)]
                .iter()
                .map(|&j| {
                    let fe = ecdf(&excl_sorted, excl[j]);
                    let ff = ecdf(&row_sorted, row[j]);
                    1.0 / (w / fe + (1.0 - w) / ff)
                })
                .collect();
            mean(&scores)
        })
        .collect();
    Ok(TopicScores::new(per_topic))
}

/// Mean FREX score of each topic's top-`m` words (`m` is clamped to V).
pub fn exclusivity(model: &LdaModel, m: usize, w: f64) -> Result<TopicScores> {
    exclusivity_of_phi(model.phi(), m, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
    pub lda: LdaSettings,
    /// Top words per topic for both metrics.
    pub top_m: usize,
    /// FREX exclusivity weight.
    pub frex_weight: f64,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_min: 3,
            k_max: 100,
            step: 1,
            lda: LdaSettings::default(),
            top_m: 10,
            frex_weight: 0.7,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn ks(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.step.max(1)).collect()
    }

    /// Seed for the model with `k` topics.
    pub fn seed_for(&self, k: usize) -> u64 {
        self.base_seed ^ k as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_min > self.k_max || self.step == 0 {
            return Err(Error::InvalidConfig(format!(
                "sweep range {}..={} step {} must satisfy 2 <= k_min <= k_max, step >= 1",
                self.k_min, self.k_max, self.step
            )));
        }
        if self.top_m < 2 {
            return Err(Error::InvalidConfig("top_m must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub k: usize,
    pub seed: u64,
    pub coherence_raw: f64,
    pub exclusivity_raw: f64,
    pub coherence_norm: f64,
    pub exclusivity_norm: f64,
    pub coherence_per_topic: Vec<f64>,
    pub exclusivity_per_topic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scores: Vec<ModelScore>,
    pub config: SweepConfig,
}

/// Rescales raw scores so their mean is 1: `1 + (x - mean) / |mean|`. For a
/// positive mean this is `x / mean`; for a negative mean (UMass coherence)
/// it keeps "larger is better".
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let m = mean(raw);
    if m == 0.0 || !m.is_finite() {
        return vec![1.0; raw.len()];
    }
    if m > 0.0 {
        return raw.iter().map(|x| x / m).collect();
    }
    raw.iter().map(|x| 1.0 + (x - m) / m.abs()).collect()
}

impl SweepTable {
    /// Builds a table from raw scores, filling in the normalised columns.
    pub fn from_scores(mut scores: Vec<ModelScore>, config: SweepConfig) -> Self {
        scores.sort_by_key(|s| s.k);
        let coh = normalize(&scores.iter().map(|s| s.coherence_raw).collect::<Vec<_>>());
        let exc = normalize(&scores.iter().map(|s| s.exclusivity_raw).collect::<Vec<_>>());
        for ((s, c), e) in scores.iter_mut().zip(coh).zip(exc) {
            s.coherence_norm = c;
            s.exclusivity_norm = e;
        }
        SweepTable { scores, config }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["K", "coherence_raw", "exclusivity_raw", "coherence_norm", "exclusivity_norm"])?;
        for s in &self.scores {
            w.write_record([
                s.k.to_string(),
                s.coherence_raw.to_string(),
                s.exclusivity_raw.to_string(),
                s.coherence_norm.to_string(),
                s.exclusivity_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores one fitted model.
pub fn score_model(model: &LdaModel, corpus: &BagCorpus, config: &SweepConfig) -> Result<ModelScore> {
    let coh = semantic_coherence(model, corpus, config.top_m)?;
    let exc = exclusivity(model, config.top_m, config.frex_weight)?;
    Ok(ModelScore {
        k: model.num_topics(),
        seed: model.hyper().seed,
        coherence_raw: coh.mean,
        exclusivity_raw: exc.mean,
        coherence_norm: 1.0,
        exclusivity_norm: 1.0,
        coherence_per_topic: coh.per_topic,
        exclusivity_per_topic: exc.per_topic,
    })
}

/// Fits and scores one model per K in the configured range, in parallel.
/// If any fit fails the error carries the table of the K values that
/// completed.
pub fn sweep(corpus: &BagCorpus, vocab: &Vocabulary, config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let results: Vec<(usize, Result<ModelScore>)> = config
        .ks()
        .into_par_iter()
        .map(|k| {
            let hyper = config.lda.hyper(k, config.seed_for(k));
            let r = lda::fit(corpus, vocab, k, &hyper).and_then(|m| score_model(&m, corpus, config));
            (k, r)
        })
        .collect();
    let mut scores = Vec::new();
    let mut failure = None;
    for (k, r) in results {
        match r {
            Ok(s) => scores.push(s),
            Err(e) if failure.is_none() => failure = Some((k, e)),
            Err(e) => log::warn!("sweep fit for K={k} also failed: {e}"),
        }
    }
    let table = SweepTable::from_scores(scores, config.clone());
    match failure {
        None => Ok(table),
        Some((k, e)) => Err(Error::SweepAborted { k, partial: Box::new(table), source: Box::new(e) }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub coherence_norm: f64,
    pub exclusivity_norm: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub coherence_weight: f64,
    pub exclusivity_weight: f64,
    pub winner: Candidate,
    pub runner_up: Option<Candidate>,
}

/// Picks the K maximising `coherence_norm + exclusivity_norm`; ties go to
/// the smaller K.
pub fn select_k(table: &SweepTable) -> Result<Selection> {
    select_k_weighted(table, 1.0, 1.0)
}

pub fn select_k_weighted(table: &SweepTable, coherence_weight: f64, exclusivity_weight: f64) -> Result<Selection> {
    if table.scores.is_empty() {
        return Err(Error::InvalidInput("empty sweep table".into()));
    }
    let mut ranked: Vec<Candidate> = table
        .scores
        .iter()
        .map(|s| Candidate {
            k: s.k,
            coherence_norm: s.coherence_norm,
            exclusivity_norm: s.exclusivity_norm,
            combined: coherence_weight * s.coherence_norm + exclusivity_weight * s.exclusivity_norm,
        })
        .collect();
    ranked.sort_by(|a, b| b.combined.total_cmp(&a.combined).then(a.k.cmp(&b.k)));
    let mut it = ranked.into_iter();
    let winner = it.next().expect("non-empty");
    Ok(Selection {
        k: winner.k,
        coherence_weight,
        exclusivity_weight,
        winner,
        runner_up: it.next(),
    })
}
