//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from
//! `(n_dk + alpha) * (n_kv + beta) / (n_k + V * beta)` with the token's own
//! assignment removed from the counts. Point estimates of the topic-word
//! (`phi`) and document-topic (`theta`) distributions are averaged over
//! every `sample_lag`-th sweep after burn-in.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BagCorpus, Vocabulary};
use crate::util::{argsort_desc, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaHyperparams {
    /// Symmetric document-topic prior.
    pub alpha: f64,
    /// Symmetric topic-word prior.
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps between retained samples after burn-in.
    pub sample_lag: usize,
    pub seed: u64,
}

impl LdaHyperparams {
    /// Defaults for `k` topics: alpha = 50/K, beta = 0.01, 1000 sweeps with
    /// 500 burn-in, every 10th sweep retained.
    pub fn for_topics(k: usize) -> Self {
        LdaHyperparams {
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            burn_in: 500,
            sample_lag: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha ({}) and beta ({}) must be positive",
                self.alpha, self.beta
            )));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.sample_lag == 0 {
            return Err(Error::InvalidConfig("sample_lag must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hyperparameters independent of K and seed, as stored in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaSettings {
    /// Fixed alpha; `None` means 50/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
}

impl Default for LdaSettings {
    fn default() -> Self {
        let h = LdaHyperparams::for_topics(1);
        LdaSettings {
            alpha: None,
            beta: h.beta,
            iterations: h.iterations,
            burn_in: h.burn_in,
            sample_lag: h.sample_lag,
        }
    }
}

impl LdaSettings {
    pub fn hyper(&self, k: usize, seed: u64) -> LdaHyperparams {
        LdaHyperparams {
            alpha: self.alpha.unwrap_or(50.0 / k.max(1) as f64),
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            sample_lag: self.sample_lag,
            seed,
        }
    }
}

/// Final-state assignment counts of a fitted chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    /// D x K, row-major.
    pub doc_topic: Vec<u32>,
    /// K x V, row-major.
    pub topic_term: Vec<u32>,
    pub topic_total: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    k: usize,
    /// K x V topic-word distributions.
    phi: DMatrix<f64>,
    /// D x K document-topic distributions, aligned with the training corpus.
    theta: DMatrix<f64>,
    hyper: LdaHyperparams,
    vocab: Vocabulary,
    doc_ids: Vec<String>,
    counts: Option<CountTables>,
}

/// Collapsed Gibbs chain state. Exposed read-only to fit observers.
pub struct Sampler<'a> {
    corpus: &'a BagCorpus,
    k: usize,
    v: usize,
    hyper: LdaHyperparams,
    /// Token offsets per document into `z` / `tokens`.
    offsets: Vec<usize>,
    tokens: Vec<u32>,
    z: Vec<u16>,
    ndk: Vec<u32>,
    /// V x K (term-major for locality in the inner loop).
    nvk: Vec<u32>,
    nk: Vec<u64>,
    sweeps: usize,
    rng: ChaCha8Rng,
    cumulative: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(corpus: &'a BagCorpus, v: usize, k: usize, hyper: LdaHyperparams) -> Self {
        let mut offsets = Vec::with_capacity(corpus.num_docs() + 1);
        let mut tokens = Vec::with_capacity(corpus.total_tokens);
        offsets.push(0);
        for doc in &corpus.docs {
            tokens.extend(doc.tokens());
            offsets.push(tokens.len());
        }
        let mut s = Sampler {
            corpus,
            k,
            v,
            hyper,
            offsets,
            z: vec![0; tokens.len()],
            tokens,
            ndk: vec![0; corpus.num_docs() * k],
            nvk: vec![0; v * k],
            nk: vec![0; k],
            sweeps: 0,
            rng: rng(hyper.seed, 0),
            cumulative: vec![0.0; k],
        };
        for d in 0..corpus.num_docs() {
            for i in s.offsets[d]..s.offsets[d + 1] {
                let topic = s.rng.random_range(0..k);
                s.assign(d, i, topic);
            }
        }
        s
    }

    fn from_assignments(corpus: &'a BagCorpus, v: usize, k: usize, hyper: LdaHyperparams, z: &[u16]) -> Self {
        let mut s = Sampler::new(corpus, v, k, hyper);
        s.ndk.iter_mut().for_each(|c| *c = 0);
        s.nvk.iter_mut().for_each(|c| *c = 0);
        s.nk.iter_mut().for_each(|c| *c = 0);
        for d in 0..corpus.num_docs() {
            for i in s.offsets[d]..s.offsets[d + 1] {
                s.assign(d, i, z[i] as usize);
            }
        }
        s
    }

    fn assign(&mut self, d: usize, i: usize, topic: usize) {
        let w = self.tokens[i] as usize;
        self.z[i] = topic as u16;
        self.ndk[d * self.k + topic] += 1;
        self.nvk[w * self.k + topic] += 1;
        self.nk[topic] += 1;
    }

    fn sweep(&mut self) {
        let k = self.k;
        let (alpha, beta) = (self.hyper.alpha, self.hyper.beta);
        let vbeta = self.v as f64 * beta;
        for d in 0..self.corpus.num_docs() {
            let dk = d * k;
            for i in self.offsets[d]..self.offsets[d + 1] {
                let w = self.tokens[i] as usize;
                let wk = w * k;
                let old = self.z[i] as usize;
                self.ndk[dk + old] -= 1;
                self.nvk[wk + old] -= 1;
                self.nk[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (self.ndk[dk + t] as f64 + alpha) * (self.nvk[wk + t] as f64 + beta)
                        / (self.nk[t] as f64 + vbeta);
                    self.cumulative[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.cumulative.partition_point(|&c| c <= u).min(k - 1);

                self.z[i] = new as u16;
                self.ndk[dk + new] += 1;
                self.nvk[wk + new] += 1;
                self.nk[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    /// Number of completed sweeps.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn doc_topic_count(&self, d: usize, topic: usize) -> u32 {
        self.ndk[d * self.k + topic]
    }

    pub fn topic_term_count(&self, topic: usize, term: usize) -> u32 {
        self.nvk[term * self.k + topic]
    }

    pub fn topic_total(&self, topic: usize) -> u64 {
        self.nk[topic]
    }

    /// phi estimated from the current counts alone.
    pub fn phi_estimate(&self) -> DMatrix<f64> {
        let beta = self.hyper.beta;
        let vbeta = self.v as f64 * beta;
        DMatrix::from_fn(self.k, self.v, |t, w| {
            (self.nvk[w * self.k + t] as f64 + beta) / (self.nk[t] as f64 + vbeta)
        })
    }

    /// theta estimated from the current counts alone.
    pub fn theta_estimate(&self) -> DMatrix<f64> {
        let alpha = self.hyper.alpha;
        let kalpha = self.k as f64 * alpha;
        DMatrix::from_fn(self.corpus.num_docs(), self.k, |d, t| {
            let len = (self.offsets[d + 1] - self.offsets[d]) as f64;
            (self.ndk[d * self.k + t] as f64 + alpha) / (len + kalpha)
        })
    }

    /// Verifies count conservation and row-stochasticity of the current
    /// point estimates.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let k = self.k;
        for d in 0..self.corpus.num_docs() {
            let len = (self.offsets[d + 1] - self.offsets[d]) as u64;
            let sum: u64 = self.ndk[d * k..(d + 1) * k].iter().map(|&c| c as u64).sum();
            if sum != len {
                return Err(format!("doc {d}: sum_k n_dk = {sum}, length {len}"));
            }
        }
        for t in 0..k {
            let sum: u64 = (0..self.v).map(|w| self.nvk[w * k + t] as u64).sum();
            if sum != self.nk[t] {
                return Err(format!("topic {t}: sum_v n_kv = {sum}, n_k = {}", self.nk[t]));
            }
        }
        let total: u64 = self.nk.iter().sum();
        if total as usize != self.tokens.len() {
            return Err(format!("sum_k n_k = {total}, tokens {}", self.tokens.len()));
        }
        check_row_stochastic(&self.phi_estimate(), "phi")?;
        check_row_stochastic(&self.theta_estimate(), "theta")?;
        Ok(())
    }

    /// Per-token average log-likelihood of the current point estimates.
    pub fn log_likelihood(&self) -> f64 {
        per_token_log_likelihood(&self.phi_estimate(), &self.theta_estimate(), self.corpus)
    }
}

pub(crate) fn check_row_stochastic(m: &DMatrix<f64>, name: &str) -> std::result::Result<(), String> {
    for (r, row) in m.row_iter().enumerate() {
        if row.iter().any(|&x| !(x >= 0.0)) {
            return Err(format!("{name} row {r} has a negative or NaN entry"));
        }
        let s = row.sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(format!("{name} row {r} sums to {s}"));
        }
    }
    Ok(())
}

fn per_token_log_likelihood(phi: &DMatrix<f64>, theta: &DMatrix<f64>, corpus: &BagCorpus) -> f64 {
    if corpus.total_tokens == 0 {
        return 0.0;
    }
    let k = phi.nrows();
    let mut ll = 0.0;
    for (d, doc) in corpus.docs.iter().enumerate() {
        for &(w, c) in &doc.terms {
            let p: f64 = (0..k).map(|t| theta[(d, t)] * phi[(t, w as usize)]).sum();
            ll += c as f64 * p.ln();
        }
    }
    ll / corpus.total_tokens as f64
}

/// Fits LDA with `k` topics.
pub fn fit(corpus: &BagCorpus, vocab: &Vocabulary, k: usize, hyper: &LdaHyperparams) -> Result<LdaModel> {
    fit_traced(corpus, vocab, k, hyper, |_| {})
}

/// Like [`fit`], calling `observer` with the chain state after every sweep.
pub fn fit_traced(
    corpus: &BagCorpus,
    vocab: &Vocabulary,
    k: usize,
    hyper: &LdaHyperparams,
    mut observer: impl FnMut(&Sampler<'_>),
) -> Result<LdaModel> {
    hyper.validate()?;
    check_corpus(corpus, vocab)?;
    if k == 0 || k > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!("topic count {k} out of range")));
    }
    if k > corpus.total_tokens {
        return Err(Error::TooManyTopics { k, tokens: corpus.total_tokens });
    }
    if k >= vocab.len() {
        log::warn!("fitting {k} topics over a vocabulary of only {} terms", vocab.len());
    }

    let mut sampler = Sampler::new(corpus, vocab.len(), k, *hyper);
    let mut phi_acc = DMatrix::zeros(k, vocab.len());
    let mut theta_acc = DMatrix::zeros(corpus.num_docs(), k);
    let mut samples = 0usize;
    for _ in 0..hyper.iterations {
        sampler.sweep();
        observer(&sampler);
        let done = sampler.sweeps();
        if done > hyper.burn_in && (done - hyper.burn_in) % hyper.sample_lag == 0 {
            phi_acc += sampler.phi_estimate();
            theta_acc += sampler.theta_estimate();
            samples += 1;
        }
    }
    if samples == 0 {
        phi_acc = sampler.phi_estimate();
        theta_acc = sampler.theta_estimate();
        samples = 1;
    }
    let mut phi = phi_acc / samples as f64;
    let mut theta = theta_acc / samples as f64;
    renormalize_rows(&mut phi);
    renormalize_rows(&mut theta);
    Ok(LdaModel {
        k,
        phi,
        theta,
        hyper: *hyper,
        vocab: vocab.clone(),
        doc_ids: corpus.docs.iter().map(|d| d.review_id.clone()).collect(),
        counts: Some(sampler.count_tables()),
    })
}

impl Sampler<'_> {
    fn count_tables(&self) -> CountTables {
        let k = self.k;
        let mut topic_term = vec![0; k * self.v];
        for w in 0..self.v {
            for t in 0..k {
                topic_term[t * self.v + w] = self.nvk[w * k + t];
            }
        }
        CountTables {
            doc_topic: self.ndk.clone(),
            topic_term,
            topic_total: self.nk.clone(),
        }
    }
}

/// Averaging rounds each row away from 1 by a few ulps; pull it back.
fn renormalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
}

fn check_corpus(corpus: &BagCorpus, vocab: &Vocabulary) -> Result<()> {
    if corpus.total_tokens == 0 {
        return Err(Error::DegenerateCorpus);
    }
    for doc in &corpus.docs {
        if let Some(&(w, _)) = doc.terms.iter().find(|(w, _)| *w as usize >= vocab.len()) {
            return Err(Error::InvalidInput(format!(
                "document {} references term {w} outside a vocabulary of {}",
                doc.review_id,
                vocab.len()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub theta: Vec<f64>,
    /// Tokens dropped because they are not in the model vocabulary.
    pub oov_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaMetadata {
    pub k: usize,
    pub n_terms: usize,
    pub n_docs: usize,
    pub hyper: LdaHyperparams,
    pub vocab_fingerprint: String,
}

impl LdaModel {
    /// Assembles a model from explicit distributions (rows must be
    /// stochastic).
    pub fn from_parts(
        phi: DMatrix<f64>,
        theta: DMatrix<f64>,
        vocab: Vocabulary,
        doc_ids: Vec<String>,
        hyper: LdaHyperparams,
    ) -> Result<Self> {
        let k = phi.nrows();
        if phi.ncols() != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), found: phi.ncols() });
        }
        if theta.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, found: theta.ncols() });
        }
        if theta.nrows() != doc_ids.len() {
            return Err(Error::DimensionMismatch { expected: doc_ids.len(), found: theta.nrows() });
        }
        check_row_stochastic(&phi, "phi").map_err(Error::InvalidInput)?;
        check_row_stochastic(&theta, "theta").map_err(Error::InvalidInput)?;
        Ok(LdaModel { k, phi, theta, hyper, vocab, doc_ids, counts: None })
    }

    /// Point estimates from a fixed set of token assignments (one topic per
    /// token, tokens in [`crate::corpus::Document::tokens`] order).
    pub fn from_assignments(
        corpus: &BagCorpus,
        vocab: &Vocabulary,
        k: usize,
        hyper: &LdaHyperparams,
        assignments: &[u16],
    ) -> Result<Self> {
        check_corpus(corpus, vocab)?;
        if assignments.len() != corpus.total_tokens {
            return Err(Error::DimensionMismatch { expected: corpus.total_tokens, found: assignments.len() });
        }
        if let Some(&bad) = assignments.iter().find(|&&z| z as usize >= k) {
            return Err(Error::InvalidInput(format!("assignment {bad} >= K={k}")));
        }
        let s = Sampler::from_assignments(corpus, vocab.len(), k, *hyper, assignments);
        Ok(LdaModel {
            k,
            phi: s.phi_estimate(),
            theta: s.theta_estimate(),
            hyper: *hyper,
            vocab: vocab.clone(),
            doc_ids: corpus.docs.iter().map(|d| d.review_id.clone()).collect(),
            counts: Some(s.count_tables()),
        })
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn hyper(&self) -> &LdaHyperparams {
        &self.hyper
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Final chain counts; `None` for models loaded from disk or built from
    /// parts.
    pub fn counts(&self) -> Option<&CountTables> {
        self.counts.as_ref()
    }

    pub fn phi_row(&self, topic: usize) -> Vec<f64> {
        self.phi.row(topic).iter().copied().collect()
    }

    pub fn theta_row(&self, doc: usize) -> Vec<f64> {
        self.theta.row(doc).iter().copied().collect()
    }

    /// Term indices of the `m` most probable terms of `topic`; ties broken by
    /// ascending term index.
    pub fn top_word_ids(&self, topic: usize, m: usize) -> Vec<usize> {
        let mut ids = argsort_desc(&self.phi_row(topic));
        ids.truncate(m);
        ids
    }

    pub fn top_words(&self, topic: usize, m: usize) -> Vec<(String, f64)> {
        self.top_word_ids(topic, m)
            .into_iter()
            .map(|w| (self.vocab.term(w).to_owned(), self.phi[(topic, w)]))
            .collect()
    }

    /// Folds a new document in with phi held fixed. `terms` are term strings;
    /// out-of-vocabulary ones are dropped.
    pub fn infer_document(&self, terms: &[&str], fold_in_iters: usize, seed: u64) -> Inference {
        let mut oov = 0;
        let mut ids = Vec::with_capacity(terms.len());
        for t in terms {
            match self.vocab.get(t) {
                Some(id) => ids.push(id),
                None => oov += 1,
            }
        }
        let mut inf = self.infer_tokens(&ids, fold_in_iters, seed);
        inf.oov_tokens = oov;
        inf
    }

    /// Fold-in for a bag of `(term index, count)` pairs.
    pub fn infer_bag(&self, bag: &[(u32, u32)], fold_in_iters: usize, seed: u64) -> Inference {
        let v = self.vocab.len() as u32;
        let oov = bag.iter().filter(|(w, _)| *w >= v).map(|&(_, c)| c as usize).sum();
        let ids: Vec<u32> = bag
            .iter()
            .filter(|(w, _)| *w < v)
            .flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize))
            .collect();
        let mut inf = self.infer_tokens(&ids, fold_in_iters, seed);
        inf.oov_tokens = oov;
        inf
    }

    fn infer_tokens(&self, ids: &[u32], fold_in_iters: usize, seed: u64) -> Inference {
        let k = self.k;
        if ids.is_empty() {
            log::warn!("document has no in-vocabulary tokens; returning uniform topic mixture");
            return Inference { theta: vec![1.0 / k as f64; k], oov_tokens: 0 };
        }
        let alpha = self.hyper.alpha;
        let mut rng = rng(seed, 0);
        let mut z: Vec<usize> = ids.iter().map(|_| rng.random_range(0..k)).collect();
        let mut ndk = vec![0u32; k];
        for &t in &z {
            ndk[t] += 1;
        }
        let iters = fold_in_iters.max(1);
        let keep_from = iters / 2;
        let mut acc = vec![0.0; k];
        let mut cumulative = vec![0.0; k];
        let denom = ids.len() as f64 + k as f64 * alpha;
        for it in 0..iters {
            for (i, &w) in ids.iter().enumerate() {
                ndk[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[t] as f64 + alpha) * self.phi[(t, w as usize)];
                    cumulative[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = cumulative.partition_point(|&c| c <= u).min(k - 1);
                z[i] = new;
                ndk[new] += 1;
            }
            if it >= keep_from {
                for t in 0..k {
                    acc[t] += (ndk[t] as f64 + alpha) / denom;
                }
            }
        }
        let sum: f64 = acc.iter().sum();
        let theta = acc.iter().map(|a| a / sum).collect();
        Inference { theta, oov_tokens: 0 }
    }

    /// Per-token average log-likelihood of `corpus` under this model. The
    /// corpus must be the one the model was fitted on (theta rows align).
    pub fn log_likelihood(&self, corpus: &BagCorpus) -> Result<f64> {
        if corpus.num_docs() != self.theta.nrows() {
            return Err(Error::DimensionMismatch { expected: self.theta.nrows(), found: corpus.num_docs() });
        }
        check_corpus_terms(corpus, self.vocab.len())?;
        Ok(per_token_log_likelihood(&self.phi, &self.theta, corpus))
    }

    pub fn metadata(&self) -> LdaMetadata {
        LdaMetadata {
            k: self.k,
            n_terms: self.vocab.len(),
            n_docs: self.doc_ids.len(),
            hyper: self.hyper,
            vocab_fingerprint: self.vocab.fingerprint(),
        }
    }

    /// Writes `model.json`, `phi.csv` (K rows, one column per term) and
    /// `theta.csv` (one row per document, one column per topic) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&self.metadata())? + "\n")?;

        let mut w = csv::Writer::from_path(dir.join("phi.csv"))?;
        w.write_record(std::iter::once("topic").chain(self.vocab.terms().iter().map(String::as_str)))?;
        for t in 0..self.k {
            w.write_record(
                std::iter::once(t.to_string()).chain(self.phi.row(t).iter().map(|x| x.to_string())),
            )?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("theta.csv"))?;
        w.write_record(std::iter::once("doc".to_owned()).chain((0..self.k).map(|t| format!("topic_{t}"))))?;
        for (d, id) in self.doc_ids.iter().enumerate() {
            w.write_record(
                std::iter::once(id.clone()).chain(self.theta.row(d).iter().map(|x| x.to_string())),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: LdaMetadata = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));

        let mut r = csv::Reader::from_path(dir.join("phi.csv"))?;
        let terms: Vec<String> = r.headers()?.iter().skip(1).map(str::to_owned).collect();
        let mut phi_vals = Vec::new();
        for rec in r.records() {
            for s in rec?.iter().skip(1) {
                phi_vals.push(parse(s)?);
            }
        }
        let n_terms = terms.len();
        let vocab = Vocabulary::new(terms, vec![0; n_terms]);
        if vocab.fingerprint() != meta.vocab_fingerprint {
            return Err(Error::InvalidInput("phi.csv vocabulary does not match model.json fingerprint".into()));
        }
        if phi_vals.len() != meta.k * n_terms {
            return Err(Error::DimensionMismatch { expected: meta.k * n_terms, found: phi_vals.len() });
        }
        let phi = DMatrix::from_row_slice(meta.k, n_terms, &phi_vals);

        let mut r = csv::Reader::from_path(dir.join("theta.csv"))?;
        let mut doc_ids = Vec::new();
        let mut theta_vals = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            doc_ids.push(rec.get(0).unwrap_or_default().to_owned());
            for s in rec.iter().skip(1) {
                theta_vals.push(parse(s)?);
            }
        }
        if theta_vals.len() != doc_ids.len() * meta.k {
            return Err(Error::DimensionMismatch { expected: doc_ids.len() * meta.k, found: theta_vals.len() });
        }
        let theta = DMatrix::from_row_slice(doc_ids.len(), meta.k, &theta_vals);
        LdaModel::from_parts(phi, theta, vocab, doc_ids, meta.hyper)
    }
}

fn check_corpus_terms(corpus: &BagCorpus, v: usize) -> Result<()> {
    match corpus.docs.iter().flat_map(|d| &d.terms).find(|(w, _)| *w as usize >= v) {
        Some(&(w, _)) => Err(Error::InvalidInput(format!("term {w} outside a vocabulary of {v}"))),
        None => Ok(()),
    }
}
