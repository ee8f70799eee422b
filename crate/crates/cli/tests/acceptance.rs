//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Criterion 11 needs the original review data. Point
//! `REVIEWLENS_NHS_CONFIG` at a pipeline config whose inputs are those files
//! to run it; otherwise it is reported as skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reviewlens_core::corpus::{BagCorpus, Dimension, Document, Month, Vocabulary};
use reviewlens_core::forest::{self, metrics, ConfusionMatrix, ForestConfig};
use reviewlens_core::lda::{self, LdaHyperparams, LdaModel, LdaSettings};
use reviewlens_core::linreg::{lasso, ols, LassoOptions, LassoProblem};
use reviewlens_core::panel::{fit_two_way_fe, PanelCell, PanelTable, SeKind};
use reviewlens_core::review_cluster::{hellinger, kmeans, KmeansConfig};
use reviewlens_core::selection::{exclusivity_of_phi, select_k, semantic_coherence, sweep, SweepConfig};
use reviewlens_core::synth::{dirichlet, lda_corpus, LdaFixtureSpec};
use reviewlens_core::topic_graph::{louvain, Edge, Polarity, TopicGraph, TopicNode};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool").install(f)
}

// ---------------------------------------------------------------- 1

/// Rows are predicted stars, columns true stars.
const REFERENCE: [(&str, [[u64; 5]; 5], f64); 6] = [
    (
        "phone",
        [
            [14328, 3363, 3081, 1050, 1230],
            [9160, 3630, 3682, 1612, 1694],
            [6182, 3035, 4645, 2439, 5401],
            [3275, 1950, 3463, 3358, 18768],
            [1165, 660, 1507, 2396, 45314],
        ],
        0.487,
    ),
    (
        "appt",
        [
            [39078, 694, 258, 769, 1441],
            [15447, 759, 247, 885, 1553],
            [7531, 574, 454, 1855, 5435],
            [4098, 390, 248, 4318, 19874],
            [2352, 182, 162, 3845, 33939],
        ],
        0.537,
    ),
    (
        "dignity",
        [
            [20755, 555, 2817, 479, 2192],
            [9651, 570, 2686, 607, 1783],
            [8136, 618, 4377, 1207, 3331],
            [3520, 312, 3219, 1386, 8023],
            [1935, 140, 1537, 812, 65740],
        ],
        0.634,
    ),
    (
        "involved",
        [
            [24753, 117, 1049, 669, 2890],
            [9821, 166, 705, 499, 1940],
            [10312, 103, 1310, 955, 3390],
            [7036, 69, 1089, 1124, 9876],
            [3737, 46, 616, 689, 63427],
        ],
        0.620,
    ),
    (
        "recommend",
        [
            [51384, 11, 4, 5, 3207],
            [8455, 57, 1, 2, 1035],
            [4919, 0, 30, 6, 1618],
            [2824, 2, 3, 89, 7491],
            [3801, 1, 3, 23, 61417],
        ],
        0.772,
    ),
    (
        "info",
        [
            [19701, 82, 997, 1657, 2738],
            [7924, 137, 724, 1233, 1727],
            [9893, 73, 1067, 1788, 3362],
            [8517, 57, 1126, 2392, 10270],
            [3870, 21, 528, 1496, 65008],
        ],
        0.603,
    ),
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut accs = Vec::new();
    for (name, counts, expected) in REFERENCE {
        let cm = ConfusionMatrix { counts };
        let m = metrics(&cm).map_err(|e| e.to_string())?;
        check((m.accuracy - expected).abs() <= 0.0005, || format!("{name} accuracy {:.4} vs {expected}", m.accuracy))?;
        accs.push(format!("{:.3}", m.accuracy));
        match name {
            "phone" => {
                check(cm.total() == 146_388, || format!("phone total {}", cm.total()))?;
                let c = m.per_class[0];
                check((c.precision - 0.622).abs() <= 0.001 && (c.recall - 0.420).abs() <= 0.001, || {
                    format!("phone 1-star precision {:.4} recall {:.4}", c.precision, c.recall)
                })?;
            }
            "dignity" => {
                let c = m.per_class[4];
                check((c.precision - 0.937).abs() <= 0.001 && (c.recall - 0.811).abs() <= 0.001, || {
                    format!("dignity 5-star precision {:.4} recall {:.4}", c.precision, c.recall)
                })?;
            }
            _ => {}
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("accuracies {}; phone total 146388; {elapsed:.2?}", accs.join(" ")))
}

// ---------------------------------------------------------------- 2

fn hellinger_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let bc: f64 = a.row(i).iter().zip(b.row(j).iter()).map(|(p, q)| (p * q).sqrt()).sum();
    (1.0 - bc).max(0.0).sqrt()
}

/// Greedy one-to-one matching on the smallest remaining Hellinger distance.
fn greedy_match(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Vec<f64> {
    let k = est.nrows();
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| (hellinger_rows(est, i, truth, j), i, j)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut used_e, mut used_t) = (vec![false; k], vec![false; k]);
    let mut out = Vec::new();
    for (h, i, j) in pairs {
        if !used_e[i] && !used_t[j] {
            used_e[i] = true;
            used_t[j] = true;
            out.push(h);
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let fx = lda_corpus(&LdaFixtureSpec::default(), 11);
    let hyper = LdaHyperparams { alpha: 0.1, beta: 0.01, iterations: 1000, burn_in: 500, sample_lag: 10, seed: 5 };
    let mut sweeps = 0;
    let mut violation = None;
    let model = single_thread(|| {
        lda::fit_traced(&fx.corpus, &fx.vocab, 5, &hyper, |s| {
            sweeps += 1;
            if violation.is_some() {
                return;
            }
            if let Err(e) = s.check_invariants() {
                violation = Some(format!("sweep {}: {e}", s.sweeps()));
                return;
            }
            let phi = s.phi_estimate();
            let theta = s.theta_estimate();
            let bad_phi = (0..phi.nrows()).find(|&r| (phi.row(r).sum() - 1.0).abs() > 1e-9);
            let bad_theta = (0..theta.nrows()).find(|&r| (theta.row(r).sum() - 1.0).abs() > 1e-9);
            if bad_phi.is_some() || bad_theta.is_some() {
                violation = Some(format!("sweep {}: rows not stochastic", s.sweeps()));
            }
        })
    })
    .map_err(|e| e.to_string())?;
    if let Some(v) = violation {
        return Err(v);
    }
    check(sweeps == 1000, || format!("observed {sweeps} sweeps"))?;
    let h = greedy_match(model.phi(), &fx.phi);
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    let elapsed = start.elapsed();
    check(mean <= 0.25, || format!("mean matched Hellinger {mean:.4}"))?;
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("mean matched Hellinger {mean:.4}; invariants held on all {sweeps} sweeps; {elapsed:.1?}"))
}

// ---------------------------------------------------------------- 3

fn corpus_from(docs: &[Vec<u32>]) -> BagCorpus {
    BagCorpus::new(
        docs.iter()
            .enumerate()
            .map(|(i, toks)| {
                let mut counts = BTreeMap::new();
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
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    idx.truncate(m);
    idx
}

fn brute_coherence(docs: &[Vec<u32>], top: &[usize]) -> f64 {
    let has = |d: &Vec<u32>, w: usize| d.contains(&(w as u32));
    let mut c = 0.0;
    for m in 1..top.len() {
        for l in 0..m {
            let co = docs.iter().filter(|d| has(d, top[m]) && has(d, top[l])).count() as f64;
            let df = docs.iter().filter(|d| has(d, top[l])).count().max(1) as f64;
            c += ((co + 1.0) / df).ln();
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
            let excl: Vec<f64> = (0..v).map(|j| row[j] / phi.iter().map(|r| r[j]).sum::<f64>()).collect();
            let top = top_words(row, m.min(v));
            top.iter()
                .map(|&j| 1.0 / (w / brute_ecdf(&excl, excl[j]) + (1.0 - w) / brute_ecdf(row, row[j])))
                .sum::<f64>()
                / top.len() as f64
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let cases = 300;
    for case in 0..cases {
        let k = r.random_range(2..=5);
        let v = r.random_range(4..=15);
        let d = r.random_range(1..=20);
        let docs: Vec<Vec<u32>> =
            (0..d).map(|_| (0..r.random_range(0..12)).map(|_| r.random_range(0..v as u32)).collect()).collect();
        // Coarse integer weights force ties.
        let phi: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let w: Vec<f64> = (0..v).map(|_| r.random_range(1..=6) as f64).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let m = r.random_range(2..=v);
        let w = r.random_range(0.05..0.95);
        let phi_m = DMatrix::from_fn(k, v, |i, j| phi[i][j]);
        let model = LdaModel::from_parts(
            phi_m.clone(),
            DMatrix::from_element(d, k, 1.0 / k as f64),
            Vocabulary::synthetic(v),
            (0..d).map(|i| format!("d{i}")).collect(),
            LdaHyperparams::for_topics(k),
        )
        .map_err(|e| e.to_string())?;
        let coh = semantic_coherence(&model, &corpus_from(&docs), m).map_err(|e| e.to_string())?;
        for (t, row) in phi.iter().enumerate() {
            let diff = (coh.per_topic[t] - brute_coherence(&docs, &top_words(row, m))).abs();
            worst = worst.max(diff);
            check(diff <= 1e-9, || format!("case {case} coherence topic {t} off by {diff:e}"))?;
        }
        let exc = exclusivity_of_phi(&phi_m, m, w).map_err(|e| e.to_string())?;
        for (t, (a, b)) in exc.per_topic.iter().zip(brute_frex(&phi, m, w)).enumerate() {
            let diff = (a - b).abs();
            worst = worst.max(diff);
            check(diff <= 1e-9, || format!("case {case} FREX topic {t} off by {diff:e}"))?;
        }
    }
    Ok(format!("{cases} random corpora; max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let fx = lda_corpus(&LdaFixtureSpec::default(), 11);
    let mut picks = Vec::new();
    for seed in 0..10u64 {
        let cfg = SweepConfig {
            k_min: 2,
            k_max: 10,
            step: 1,
            lda: LdaSettings { alpha: None, beta: 0.01, iterations: 300, burn_in: 150, sample_lag: 10 },
            top_m: 10,
            frex_weight: 0.7,
            base_seed: seed,
        };
        let table = sweep(&fx.corpus, &fx.vocab, &cfg).map_err(|e| e.to_string())?;
        let n = table.scores.len() as f64;
        let cm = table.scores.iter().map(|s| s.coherence_norm).sum::<f64>() / n;
        let em = table.scores.iter().map(|s| s.exclusivity_norm).sum::<f64>() / n;
        check((cm - 1.0).abs() <= 1e-12 && (em - 1.0).abs() <= 1e-12, || {
            format!("seed {seed}: normalised means {cm} / {em}")
        })?;
        picks.push(select_k(&table).map_err(|e| e.to_string())?.k);
    }
    let hits = picks.iter().filter(|k| (4..=6).contains(*k)).count();
    let single = sweep(
        &fx.corpus,
        &fx.vocab,
        &SweepConfig {
            k_min: 5,
            k_max: 5,
            lda: LdaSettings { alpha: None, beta: 0.01, iterations: 60, burn_in: 30, sample_lag: 10 },
            ..SweepConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let s = &single.scores[0];
    check(s.coherence_norm == 1.0 && s.exclusivity_norm == 1.0, || "single-K normalisation is not exactly 1".into())?;
    check(hits >= 8, || format!("K in 4..=6 for {hits}/10 seeds: {picks:?}"))?;
    Ok(format!("selected K {picks:?} ({hits}/10 in 4..=6); normalised means 1"))
}

// ---------------------------------------------------------------- 5

fn random_panel(r: &mut ChaCha8Rng) -> PanelTable {
    loop {
        let groups = r.random_range(2..=20);
        let months = r.random_range(2..=12);
        let ge: Vec<f64> = (0..groups).map(|_| r.random_range(-1.0..1.0)).collect();
        let te: Vec<f64> = (0..months).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut cells = Vec::new();
        for g in 0..groups {
            for t in 0..months {
                if r.random_bool(0.25) {
                    continue;
                }
                let positive = r.random_range(0.0..0.7);
                let negative = r.random_range(0.0..0.3);
                let imd_weighted = r.random_range(5.0..50.0);
                let patients_registered = r.random_range(2000.0..15000.0);
                let y = 3.0 + ge[g] + te[t] + 1.2 * positive - 2.0 * negative - 0.01 * imd_weighted
                    + 2e-5 * patients_registered
                    + r.random_range(-0.5..0.5);
                cells.push(PanelCell {
                    ccg_id: format!("C{g:02}"),
                    month: Month { year: 2015, month: t as u32 + 1 },
                    ratings: [Some(y), None, None, None, None, None],
                    positive,
                    negative,
                    neutral: 1.0 - positive - negative,
                    imd_weighted,
                    patients_registered,
                    n_reviews: 1,
                });
            }
        }
        let g = cells.iter().map(|c| c.ccg_id.clone()).collect::<std::collections::BTreeSet<_>>().len();
        let t = cells.iter().map(|c| c.month).collect::<std::collections::BTreeSet<_>>().len();
        if cells.len() >= 4 + g + t + 2 {
            return PanelTable { cells };
        }
    }
}

/// OLS of y on regressors + intercept + CCG and month dummies (first level
/// of each dropped), via an SVD of the column-normalised design.
fn dummy_ols(panel: &PanelTable) -> Vec<f64> {
    let mut ccgs: Vec<&str> = panel.cells.iter().map(|c| c.ccg_id.as_str()).collect();
    ccgs.sort();
    ccgs.dedup();
    let mut months: Vec<Month> = panel.cells.iter().map(|c| c.month).collect();
    months.sort();
    months.dedup();
    let n = panel.len();
    let p = 5 + (ccgs.len() - 1) + (months.len() - 1);
    let x = DMatrix::from_fn(n, p, |i, j| {
        let c = &panel.cells[i];
        match j {
            0 => c.positive,
            1 => c.negative,
            2 => c.imd_weighted,
            3 => c.patients_registered,
            4 => 1.0,
            j if j < 4 + ccgs.len() => f64::from(u8::from(c.ccg_id == ccgs[j - 4])),
            j => f64::from(u8::from(c.month == months[j - 4 - ccgs.len() + 1])),
        }
    });
    let y = DVector::from_iterator(n, panel.cells.iter().map(|c| c.ratings[0].unwrap()));
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let scaled = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / norms[j]);
    let svd = scaled.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    let beta = svd.solve(&y, cutoff).expect("svd solve");
    (0..4).map(|j| beta[j] / norms[j]).collect()
}

fn criterion_5() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for case in 0..100 {
        let panel = random_panel(&mut r);
        let fe = fit_two_way_fe(&panel, Dimension::Phone, SeKind::Hc1).map_err(|e| format!("case {case}: {e}"))?;
        for (c, o) in fe.coefficients.iter().zip(dummy_ols(&panel)) {
            let d = (c.estimate - o).abs();
            worst = worst.max(d);
            check(d <= 1e-8, || format!("case {case} {}: {} vs dummy OLS {o}", c.name, c.estimate))?;
        }
        let shifts: Vec<f64> = (0..20).map(|_| r.random_range(-3.0..3.0)).collect();
        let mut shifted = panel.clone();
        for c in &mut shifted.cells {
            let g: usize = c.ccg_id[1..].parse().unwrap();
            c.ratings[0] = c.ratings[0].map(|y| y + shifts[g]);
        }
        let moved = fit_two_way_fe(&shifted, Dimension::Phone, SeKind::Hc1).map_err(|e| e.to_string())?;
        for (a, b) in fe.coefficients.iter().zip(&moved.coefficients) {
            let d = (a.estimate - b.estimate).abs();
            worst_shift = worst_shift.max(d);
            check(d <= 1e-8, || format!("case {case} {}: shift moved estimate by {d:e}", a.name))?;
        }
    }
    Ok(format!("100 panels; max |FE - dummy OLS| {worst:.1e}; max shift change {worst_shift:.1e}"))
}

// ---------------------------------------------------------------- 6

fn lasso_data(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, j| r.random_range(-1.0..1.0) * (j + 1) as f64);
    let y = (0..n)
        .map(|i| 0.5 + (0..p).map(|j| if j % 2 == 0 { x[(i, j)] / (j + 1) as f64 } else { 0.0 }).sum::<f64>() + 0.3 * r.random_range(-1.0..1.0))
        .collect();
    (x, y)
}

fn criterion_6() -> Outcome {
    let mut worst_ols: f64 = 0.0;
    for seed in 0..20 {
        let (x, y) = lasso_data(seed, 80, 5);
        let a = ols(&x, &y).map_err(|e| e.to_string())?;
        let b = lasso(&x, &y, 0.0).map_err(|e| e.to_string())?;
        let d = a.coefficients.iter().zip(&b.coefficients).map(|(u, v)| (u - v).abs()).fold((a.intercept - b.intercept).abs(), f64::max);
        worst_ols = worst_ols.max(d);
        check(d <= 1e-6, || format!("seed {seed}: lambda=0 differs from OLS by {d:e}"))?;

        let prob = LassoProblem::new(&x, &y).map_err(|e| e.to_string())?;
        let lmax = prob.lambda_max();
        for l in [lmax, 2.0 * lmax] {
            let fit = lasso(&x, &y, l).map_err(|e| e.to_string())?;
            check(fit.coefficients.iter().all(|c| *c == 0.0), || format!("seed {seed}: nonzero at lambda {l}"))?;
        }
        for frac in [0.0, 0.01, 0.1, 0.5] {
            let mut trace = Vec::new();
            prob.solve(lmax * frac, None, &LassoOptions::default(), |_, o| trace.push(o)).map_err(|e| e.to_string())?;
            for w in trace.windows(2) {
                check(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), || format!("seed {seed}: objective rose {} -> {}", w[0], w[1]))?;
            }
        }
    }
    // Single predictor: b = S(z'(y - ybar)/n, lambda) / sd(x).
    let mut r = ChaCha8Rng::seed_from_u64(66);
    let mut worst_cf: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(8..40);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let slope = r.random_range(-2.0..2.0);
        let y: Vec<f64> = xs.iter().map(|v| slope * v + r.random_range(-1.0..1.0)).collect();
        let lambda = r.random_range(0.0..1.5);
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let sd = (xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / nf).sqrt();
        let ym = y.iter().sum::<f64>() / nf;
        let rho = xs.iter().zip(&y).map(|(a, b)| (a - mx) / sd * (b - ym)).sum::<f64>() / nf;
        let st = rho.signum() * (rho.abs() - lambda).max(0.0);
        let fit = lasso(&DMatrix::from_column_slice(n, 1, &xs), &y, lambda).map_err(|e| e.to_string())?;
        let d = (fit.coefficients[0] - st / sd).abs();
        worst_cf = worst_cf.max(d);
        check(d <= 1e-10, || format!("closed form off by {d:e}"))?;
    }
    Ok(format!("lambda=0 vs OLS {worst_ols:.1e}; exact zeros at lambda_max; objective monotone; closed form {worst_cf:.1e}"))
}

// ---------------------------------------------------------------- 7

fn separable(n: usize, seed: u64) -> (DMatrix<f64>, Vec<u8>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
    let x = DMatrix::from_fn(n, 3, |i, j| if j + 1 == y[i] as usize { 0.9 } else { 0.05 } + r.random_range(-0.04..0.04));
    (x, y)
}

fn criterion_7() -> Outcome {
    let (x, y) = separable(300, 7);
    let cfg = ForestConfig { n_trees: 200, seed: 3, ..Default::default() };
    let acc = forest::fit(&x, &y, &cfg).map_err(|e| e.to_string())?.oob_accuracy(&y);
    check(acc >= 0.95, || format!("separable OOB accuracy {acc:.3}"))?;

    let mut first = 0;
    for seed in 0..100u64 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = DMatrix::from_fn(200, 5, |_, _| r.random::<f64>());
        let y: Vec<u8> = (0..200).map(|i| ((x[(i, 0)] * 5.0).floor() as u8).min(4) + 1).collect();
        let m = forest::fit(&x, &y, &ForestConfig { n_trees: 50, seed, ..Default::default() }).map_err(|e| e.to_string())?;
        if m.importance().entries[0].feature == 0 {
            first += 1;
        }
    }
    check(first >= 95, || format!("informative feature first in {first}/100"))?;

    let dup = DMatrix::from_fn(300, 4, |i, j| x[(i, j.min(2))]);
    let with_dup = forest::fit(&dup, &y, &cfg).map_err(|e| e.to_string())?.oob_accuracy(&y);
    let shift = (acc - with_dup).abs();
    check(shift <= 0.02, || format!("duplicated feature moved OOB accuracy by {shift:.3}"))?;
    Ok(format!("separable OOB {acc:.3}; informative first {first}/100; duplicate shift {shift:.3}"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..5 {
        let rows: Vec<Vec<f64>> = (0..400).map(|_| dirichlet(&mut r, 6, 0.3)).collect();
        let x = DMatrix::from_fn(400, 6, |i, j| rows[i][j]);
        let m = kmeans(&x, &KmeansConfig { k: 8, restarts: 4, max_iters: 100, seed }).map_err(|e| e.to_string())?;
        for w in m.inertia_trace.windows(2) {
            check(w[1] <= w[0] + 1e-12 * w[0].max(1.0), || format!("seed {seed}: inertia rose {} -> {}", w[0], w[1]))?;
        }
    }
    let rows: Vec<Vec<f64>> = (0..30).map(|_| dirichlet(&mut r, 4, 0.5)).collect();
    let x = DMatrix::from_fn(30, 4, |i, j| rows[i][j]);
    let m = kmeans(&x, &KmeansConfig { k: 30, restarts: 2, max_iters: 50, seed: 1 }).map_err(|e| e.to_string())?;
    check(m.inertia.abs() <= 1e-12, || format!("k=n inertia {}", m.inertia))?;

    let h = |p: &[f64], q: &[f64]| hellinger(p, q).map_err(|e| e.to_string());
    for t in 0..100 {
        let n = r.random_range(2..12);
        let (p, q, s) = (dirichlet(&mut r, n, 1.0), dirichlet(&mut r, n, 1.0), dirichlet(&mut r, n, 1.0));
        let (pq, qp, pp) = (h(&p, &q)?, h(&q, &p)?, h(&p, &p)?);
        check((pq - qp).abs() <= 1e-12, || format!("triple {t}: asymmetric"))?;
        check(pp.abs() <= 1e-12, || format!("triple {t}: H(p,p) = {pp}"))?;
        check(pq <= h(&p, &s)? + h(&s, &q)? + 1e-12, || format!("triple {t}: triangle inequality"))?;
    }
    let disjoint = h(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7])?;
    check((disjoint - 1.0).abs() <= 1e-12, || format!("disjoint H = {disjoint}"))?;
    Ok("Lloyd inertia monotone; k=n inertia 0; Hellinger metric on 100 triples; disjoint = 1".into())
}

// ---------------------------------------------------------------- 9

fn graph(n: usize, edges: &[(usize, usize, f64)]) -> TopicGraph {
    TopicGraph {
        nodes: (0..n)
            .map(|id| TopicNode { id, label: format!("t{id}"), prevalence: 1.0 / n as f64, community: id, polarity: Polarity::Neutral })
            .collect(),
        edges: edges.iter().map(|&(source, target, weight)| Edge { source, target, weight }).collect(),
    }
}

fn modularity(n: usize, edges: &[(usize, usize, f64)], membership: &[usize]) -> f64 {
    let mut deg = vec![0.0; n];
    let (mut internal, mut two_m) = (0.0, 0.0);
    for &(a, b, w) in edges {
        deg[a] += w;
        deg[b] += w;
        two_m += 2.0 * w;
        if membership[a] == membership[b] {
            internal += 2.0 * w;
        }
    }
    let mut tot = vec![0.0; n];
    for i in 0..n {
        tot[membership[i]] += deg[i];
    }
    (internal - tot.iter().map(|t| t * t).sum::<f64>() / two_m) / two_m
}

fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur[i] = c;
            rec(i + 1, max.max(c), cur, out);
        }
    }
    let mut out = Vec::new();
    rec(1, 0, &mut vec![0; n], &mut out);
    out
}

fn criterion_9() -> Outcome {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    edges.push((3, 4, 0.1));
    let p = louvain(&graph(8, &edges), 1.0, 0).map_err(|e| e.to_string())?;
    check(p.num_communities() == 2, || format!("two cliques gave {} communities", p.num_communities()))?;

    let all = set_partitions(6);
    let singletons: Vec<usize> = (0..6).collect();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let mut worst_gap: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                if r.random_bool(0.5) {
                    edges.push((i, j, r.random_range(0.05..1.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        tested += 1;
        let best = all.iter().map(|m| modularity(6, &edges, m)).fold(f64::NEG_INFINITY, f64::max);
        let got = louvain(&graph(6, &edges), 1.0, tested).map_err(|e| e.to_string())?;
        let q = modularity(6, &edges, &got.membership);
        worst_gap = worst_gap.max(best - q);
        check(q >= best - 0.02, || format!("graph {tested}: {q:.4} vs optimum {best:.4}"))?;
        check(q >= modularity(6, &edges, &singletons) - 1e-12, || format!("graph {tested}: below singleton partition"))?;
    }
    Ok(format!("two cliques -> 2 communities; 100 random graphs, max gap to optimum {worst_gap:.4}"))
}

// ---------------------------------------------------------------- 10

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn run_pipeline(config: &Path, out: &Path, threads: &str) -> Result<Duration, String> {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_reviewlens"))
        .args(["-c", config.to_str().unwrap(), "-o", out.to_str().unwrap(), "-j", threads, "all"])
        .env_remove("REVIEWLENS_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("pipeline failed ({:?}): {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    Ok(start.elapsed())
}

fn criterion_10() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/config.json");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ta = run_pipeline(&config, &a, "1")?;
    let tb = run_pipeline(&config, &b, "4")?;
    let limit = Duration::from_secs(300);
    check(ta < limit && tb < limit, || format!("runs took {ta:?} and {tb:?}"))?;
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let differing: Vec<&String> = sa.keys().chain(sb.keys()).filter(|k| sa.get(*k) != sb.get(*k)).collect();
    check(differing.is_empty(), || format!("outputs differ: {differing:?}"))?;
    Ok(format!("{} files byte-identical across 1 and 4 threads; {ta:.1?} / {tb:.1?}", sa.len()))
}

// ---------------------------------------------------------------- 11

const REFERENCE_ACCURACY: [f64; 6] = [0.487, 0.537, 0.634, 0.620, 0.772, 0.603];

fn json(path: &Path) -> Result<serde_json::Value, String> {
    serde_json::from_str(&fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?).map_err(|e| e.to_string())
}

fn criterion_11(config: &Path) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path();
    run_pipeline(config, out, &std::thread::available_parallelism().map_or(1, |n| n.get()).to_string())?;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let vocab = fs::read_to_string(out.join("ingest/vocabulary.csv")).map_err(|e| e.to_string())?.lines().count() - 1;
    notes.push(format!("vocabulary {vocab}"));
    if vocab != 7660 {
        failures.push(format!("vocabulary {vocab} != 7660"));
    }
    let retained = json(&out.join("ingest/drop_report.json"))?["retained"].as_u64().unwrap_or(0);
    notes.push(format!("merged {retained}"));
    if retained != 144_192 {
        failures.push(format!("merge retained {retained} != 144192"));
    }
    let cells = fs::read_to_string(out.join("panel/panel.csv")).map_err(|e| e.to_string())?.lines().count() - 1;
    notes.push(format!("cells {cells}"));
    if cells != 9306 {
        failures.push(format!("panel cells {cells} != 9306"));
    }
    let k = json(&out.join("sweep/selection.json"))?["k"].as_u64().unwrap_or(0) as i64;
    notes.push(format!("K {k}"));
    if (k - 57).abs() > 5 {
        failures.push(format!("selected K {k} not within 5 of 57"));
    }
    let forests = json(&out.join("link/metrics.json"))?;
    for (i, f) in forests.as_array().into_iter().flatten().enumerate() {
        let acc = f["oob_accuracy"].as_f64().unwrap_or(f64::NAN);
        if !((acc - REFERENCE_ACCURACY[i]).abs() <= 0.03) {
            failures.push(format!("{} accuracy {acc:.3} vs {}", f["dimension"], REFERENCE_ACCURACY[i]));
        }
    }
    let fe = json(&out.join("panel/fe.json"))?;
    for (i, model) in fe.as_array().into_iter().flatten().enumerate() {
        let coef = |name: &str| {
            model["coefficients"].as_array().into_iter().flatten().find(|c| c["name"] == name).cloned().unwrap_or_default()
        };
        let (pos, neg) = (coef("positive"), coef("negative"));
        if !(pos["estimate"].as_f64().unwrap_or(0.0) > 0.0) {
            failures.push(format!("model {}: positive coefficient not > 0", i + 1));
        }
        let neg_est = neg["estimate"].as_f64().unwrap_or(0.0);
        let neg_p = neg["p_value"].as_f64().unwrap_or(1.0);
        if i == 3 {
            if neg_p < 0.05 {
                failures.push("model 4: negative coefficient significant".into());
            }
        } else if !(neg_est < 0.0) {
            failures.push(format!("model {}: negative coefficient not < 0", i + 1));
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("reference confusion-matrix metrics", criterion_1),
        ("LDA recovery", criterion_2),
        ("coherence/exclusivity oracles", criterion_3),
        ("sweep selection", criterion_4),
        ("fixed-effects oracle", criterion_5),
        ("lasso correctness", criterion_6),
        ("forest properties", criterion_7),
        ("clustering", criterion_8),
        ("Louvain", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    match std::env::var_os("REVIEWLENS_NHS_CONFIG") {
        Some(cfg) => match criterion_11(Path::new(&cfg)) {
            Ok(detail) => println!("criterion 11 PASS  original-data reproduction: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion 11 FAIL  original-data reproduction: {why}");
            }
        },
        None => println!("criterion 11 SKIP  original-data reproduction: REVIEWLENS_NHS_CONFIG not set"),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
