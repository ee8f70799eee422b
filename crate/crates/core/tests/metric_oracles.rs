//! Coherence and exclusivity against brute-force evaluation on small corpora.

use nalgebra::DMatrix;
use proptest::prelude::*;
use reviewlens_core::corpus::{BagCorpus, Document, Vocabulary};
use reviewlens_core::lda::{LdaHyperparams, LdaModel};
use reviewlens_core::selection::{exclusivity_of_phi, semantic_coherence};

fn corpus_from(docs: &[Vec<u32>]) -> BagCorpus {
    BagCorpus::new(
        docs.iter()
            .enumerate()
            .map(|(i, toks)| {
                let mut counts = std::collections::BTreeMap::new();
                for &t in toks {
                    *counts.entry(t).or_insert(0u32) += 1;
                }
                Document { review_id: format!("d{i}"), terms: counts.into_iter().collect() }
            })
            .collect(),
    )
}

fn top_words(row: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // Stable sort keeps lower term ids first among equal probabilities.
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
    idx.truncate(m);
    idx
}

fn brute_coherence(docs: &[Vec<u32>], top: &[usize]) -> f64 {
    let df = |w: usize| docs.iter().filter(|d| d.contains(&(w as u32))).count();
    let co = |a: usize, b: usize| docs.iter().filter(|d| d.contains(&(a as u32)) && d.contains(&(b as u32))).count();
    let mut c = 0.0;
    for m in 1..top.len() {
        for l in 0..m {
            c += ((co(top[m], top[l]) as f64 + 1.0) / df(top[l]).max(1) as f64).ln();
        }
    }
    c
}

fn brute_ecdf(values: &[f64], x: f64) -> f64 {
    let below = values.iter().filter(|&&v| v < x).count() as f64;
    let equal = values.iter().filter(|&&v| v == x).count() as f64;
    (below + (equal + 1.0) / 2.0) / values.len() as f64
}

fn brute_frex(phi: &[Vec<f64>], m: usize, w: f64) -> Vec<f64> {
    let v = phi[0].len();
    phi.iter()
        .map(|row| {
            let excl: Vec<f64> = (0..v)
                .map(|j| {
                    let s: f64 = phi.iter().map(|r| r[j]).sum();
                    row[j] / s
                })
                .collect();
            let top = top_words(row, m.min(v));
            let total: f64 = top
                .iter()
                .map(|&j| 1.0 / (w / brute_ecdf(&excl, excl[j]) + (1.0 - w) / brute_ecdf(row, row[j])))
                .sum();
            total / top.len() as f64
        })
        .collect()
}

fn normalise(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn model(phi: &[Vec<f64>], n_docs: usize) -> LdaModel {
    let (k, v) = (phi.len(), phi[0].len());
    let phi_m = DMatrix::from_fn(k, v, |i, j| phi[i][j]);
    let theta = DMatrix::from_element(n_docs, k, 1.0 / k as f64);
    LdaModel::from_parts(
        phi_m,
        theta,
        Vocabulary::synthetic(v),
        (0..n_docs).map(|i| format!("d{i}")).collect(),
        LdaHyperparams::for_topics(k),
    )
    .unwrap()
}

fn setup() -> impl Strategy<Value = (Vec<Vec<u32>>, Vec<Vec<f64>>, usize)> {
    (2usize..=5, 4usize..=15, 1usize..=20).prop_flat_map(|(k, v, d)| {
        (
            prop::collection::vec(prop::collection::vec(0..v as u32, 0..12), d),
            // Coarse weights produce ties within and across topics.
            prop::collection::vec(prop::collection::vec((1u32..=6).prop_map(f64::from), v), k),
            2usize..=v,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coherence_matches_pair_counting((docs, weights, m) in setup()) {
        let phi = normalise(weights);
        let lda = model(&phi, docs.len());
        let scores = semantic_coherence(&lda, &corpus_from(&docs), m).unwrap();
        for (t, row) in phi.iter().enumerate() {
            let expected = brute_coherence(&docs, &top_words(row, m));
            prop_assert!((scores.per_topic[t] - expected).abs() <= 1e-9, "topic {t}: {} vs {expected}", scores.per_topic[t]);
        }
        let mean: f64 = scores.per_topic.iter().sum::<f64>() / phi.len() as f64;
        prop_assert!((scores.mean - mean).abs() <= 1e-9);
    }

    #[test]
    fn exclusivity_matches_formula((_docs, weights, m) in setup(), w in 0.05f64..0.95) {
        let phi = normalise(weights);
        let (k, v) = (phi.len(), phi[0].len());
        let got = exclusivity_of_phi(&DMatrix::from_fn(k, v, |i, j| phi[i][j]), m, w).unwrap();
        for (a, b) in got.per_topic.iter().zip(brute_frex(&phi, m, w)) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
}
