//! Seeded synthetic data: LDA-generated bag-of-words corpora with known
//! parameters, and complete review/metadata tables for end-to-end runs.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::Serialize;

use crate::corpus::{
    write_reviews, BagCorpus, CcgRow, Document, ImdRow, Month, Ratings, RegisterRow, ReviewRecord, Vocabulary,
};
use crate::util::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaFixtureSpec {
    pub k: usize,
    pub vocab: usize,
    pub docs: usize,
    pub doc_len: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LdaFixtureSpec {
    fn default() -> Self {
        LdaFixtureSpec { k: 5, vocab: 500, docs: 2000, doc_len: 50, alpha: 0.1, beta: 0.01 }
    }
}

pub struct LdaFixture {
    pub corpus: BagCorpus,
    pub vocab: Vocabulary,
    /// Generating topic-word distributions, K x V.
    pub phi: DMatrix<f64>,
    /// Generating document-topic distributions, D x K.
    pub theta: DMatrix<f64>,
}

/// Draws from a symmetric Dirichlet via normalised gammas. With very small
/// concentrations every gamma draw can underflow; a single random atom is
/// used then.
pub fn dirichlet(r: &mut ChaCha8Rng, n: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut x: Vec<f64> = (0..n).map(|_| gamma.sample(r)).collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 && s.is_finite() {
        x.iter_mut().for_each(|v| *v /= s);
    } else {
        x.iter_mut().for_each(|v| *v = 0.0);
        x[r.random_range(0..n)] = 1.0;
    }
    x
}

fn draw(r: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let u = r.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumsum(p: impl Iterator<Item = f64>) -> Vec<f64> {
    p.scan(0.0, |acc, x| {
        *acc += x;
        Some(*acc)
    })
    .collect()
}

/// Samples a corpus from the LDA generative process.
pub fn lda_corpus(spec: &LdaFixtureSpec, seed: u64) -> LdaFixture {
    let mut r = rng(seed, 0);
    let phi_rows: Vec<Vec<f64>> = (0..spec.k).map(|_| dirichlet(&mut r, spec.vocab, spec.beta)).collect();
    let phi_cum: Vec<Vec<f64>> = phi_rows.iter().map(|row| cumsum(row.iter().copied())).collect();
    let mut theta = DMatrix::zeros(spec.docs, spec.k);
    let mut docs = Vec::with_capacity(spec.docs);
    for d in 0..spec.docs {
        let th = dirichlet(&mut r, spec.k, spec.alpha);
        let th_cum = cumsum(th.iter().copied());
        let mut counts = vec![0u32; spec.vocab];
        for _ in 0..spec.doc_len {
            let z = draw(&mut r, &th_cum);
            counts[draw(&mut r, &phi_cum[z])] += 1;
        }
        for (t, p) in th.into_iter().enumerate() {
            theta[(d, t)] = p;
        }
        docs.push(Document {
            review_id: format!("d{d:05}"),
            terms: counts
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .map(|(w, c)| (w as u32, c))
                .collect(),
        });
    }
    let corpus = BagCorpus::new(docs);
    let mut term_counts = vec![0u64; spec.vocab];
    for doc in &corpus.docs {
        for &(w, c) in &doc.terms {
            term_counts[w as usize] += c as u64;
        }
    }
    let vocab = Vocabulary::new(Vocabulary::synthetic(spec.vocab).terms().to_vec(), term_counts);
    let phi = DMatrix::from_fn(spec.k, spec.vocab, |t, w| phi_rows[t][w]);
    LdaFixture { corpus, vocab, phi, theta }
}

/// Review themes: word pool, whether the theme is favourable (+1),
/// unfavourable (-1) or neutral (0).
const THEMES: &[(&[&str], i8)] = &[
    (&["excellent", "friendly", "caring", "wonderful", "brilliant", "thank", "kind", "lovely", "professional", "fantastic"], 1),
    (&["rude", "receptionist", "ignored", "unhelpful", "attitude", "shouted", "complaint", "dismissive", "arrogant", "appalling"], -1),
    (&["phone", "engaged", "queue", "ringing", "answer", "morning", "eight", "minutes", "lines", "redial"], -1),
    (&["appointment", "booking", "online", "weeks", "available", "routine", "urgent", "slots", "system", "wait"], 0),
    (&["prescription", "pharmacy", "repeat", "medication", "collect", "request", "chemist", "tablets", "dose", "ready"], 0),
    (&["nurse", "blood", "test", "results", "injection", "clinic", "vaccination", "smear", "checkup", "pressure"], 1),
    (&["diagnosis", "referral", "hospital", "specialist", "scan", "treatment", "pain", "symptoms", "listened", "explained"], 0),
];

const FILLER: &[&str] = &["the", "was", "and", "i", "to", "my", "a", "very", "it", "with", "at", "on"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReviewFixtureSpec {
    pub reviews: usize,
    pub practices: usize,
    pub ccgs: usize,
    pub months: usize,
    pub start: Month,
    /// Probability each rating is left blank.
    pub missing_rate: f64,
}

impl Default for ReviewFixtureSpec {
    fn default() -> Self {
        ReviewFixtureSpec {
            reviews: 1000,
            practices: 40,
            ccgs: 8,
            months: 12,
            start: Month { year: 2014, month: 1 },
            missing_rate: 0.1,
        }
    }
}

/// Reviews plus the register, deprivation and CCG tables they join against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewDataset {
    pub reviews: Vec<ReviewRecord>,
    pub register: Vec<RegisterRow>,
    pub imd: Vec<ImdRow>,
    pub ccg: Vec<CcgRow>,
}

fn add_months(m: Month, n: usize) -> Month {
    let idx = m.year as i64 * 12 + (m.month as i64 - 1) + n as i64;
    Month { year: (idx / 12) as i32, month: (idx % 12) as u32 + 1 }
}

/// Generates reviews whose words come from a small set of themes and whose
/// star ratings rise with favourable and fall with unfavourable themes.
/// One practice is left out of the register and one review names an
/// unknown practice so that enrichment drops are exercised.
pub fn review_dataset(spec: &ReviewFixtureSpec, seed: u64) -> ReviewDataset {
    let mut r = rng(seed, 1);
    let noise = Normal::new(0.0, 0.6).expect("valid sd");

    let practice = |p: usize| format!("P{p:03}");
    let mut register = Vec::new();
    let mut imd = Vec::new();
    let mut ccg = Vec::new();
    let mut practice_effect = Vec::with_capacity(spec.practices);
    for p in 0..spec.practices {
        ccg.push(CcgRow { practice_id: practice(p), ccg_id: format!("C{:02}", p % spec.ccgs.max(1)) });
        practice_effect.push(noise.sample(&mut r) * 0.5);
        if p + 1 == spec.practices {
            continue;
        }
        for l in 0..r.random_range(1..=3) {
            let lsoa = format!("L{p:03}{l}");
            register.push(RegisterRow { practice_id: practice(p), lsoa: lsoa.clone(), patients: r.random_range(200..4000) });
            imd.push(ImdRow { lsoa, imd_score: (r.random::<f64>() * 60.0 * 100.0).round() / 100.0 });
        }
    }

    let mut reviews = Vec::with_capacity(spec.reviews);
    for i in 0..spec.reviews {
        let p = r.random_range(0..spec.practices);
        let mix = dirichlet(&mut r, THEMES.len(), 0.3);
        let mix_cum = cumsum(mix.iter().copied());
        let len = r.random_range(15..40);
        let mut words = Vec::with_capacity(len);
        for j in 0..len {
            if r.random::<f64>() < 0.3 {
                words.push(FILLER[r.random_range(0..FILLER.len())].to_owned());
                continue;
            }
            let pool = THEMES[draw(&mut r, &mix_cum)].0;
            let mut w = pool[r.random_range(0..pool.len())].to_owned();
            if j % 7 == 6 {
                w.push('.');
            }
            words.push(w);
        }
        let tone: f64 = mix.iter().zip(THEMES).map(|(m, (_, s))| m * *s as f64).sum();
        let ratings = Ratings(std::array::from_fn(|d| {
            if r.random::<f64>() < spec.missing_rate {
                return None;
            }
            let x = 3.2 + 2.5 * tone + practice_effect[p] + noise.sample(&mut r) + 0.1 * d as f64;
            Some(x.round().clamp(1.0, 5.0) as u8)
        }));
        reviews.push(ReviewRecord {
            review_id: format!("R{i:05}"),
            practice_id: if i + 1 == spec.reviews { "P999".into() } else { practice(p) },
            posted_month: add_months(spec.start, r.random_range(0..spec.months)),
            text: words.join(" "),
            ratings,
        });
    }
    ReviewDataset { reviews, register, imd, ccg }
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl ReviewDataset {
    /// Writes reviews.csv, register.csv, imd.csv and ccg.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_reviews(&dir.join("reviews.csv"), &self.reviews)?;
        write_table(&dir.join("register.csv"), &self.register)?;
        write_table(&dir.join("imd.csv"), &self.imd)?;
        write_table(&dir.join("ccg.csv"), &self.ccg)?;
        Ok(())
    }
}
