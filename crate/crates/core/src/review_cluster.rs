//! k-means over document-topic proportions, Hellinger distances and TF-IDF
//! cluster labels.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BagCorpus, Dimension, Ratings, Vocabulary};
use crate::topic_graph::Polarity;
use crate::util::{argsort_desc, rng};
use crate::{Error, Result};

/// Hellinger distance `(1/sqrt 2) * ||sqrt p - sqrt q||_2`.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((s / 2.0).sqrt().min(1.0))
}

/// Projects a row onto the simplex by clamping negatives and renormalising.
fn to_simplex(row: &[f64]) -> Option<Vec<f64>> {
    let clamped: Vec<f64> = row.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = clamped.iter().sum();
    (s > 0.0).then(|| clamped.iter().map(|x| x / s).collect())
}

/// Pairwise Hellinger distances between centroids (rows).
pub fn hellinger_matrix(centroids: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = centroids.nrows();
    let rows = (0..k)
        .map(|i| {
            let row: Vec<f64> = centroids.row(i).iter().copied().collect();
            to_simplex(&row).ok_or_else(|| Error::ZeroDistribution(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let d = hellinger(&rows[i], &rows[j])?;
            h[(i, j)] = d;
            h[(j, i)] = d;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig { k: 100, restarts: 10, max_iters: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub assignment: Vec<usize>,
    /// k x K centroid matrix.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Lloyd iterations run by the chosen restart.
    pub iterations: usize,
    /// Index of the chosen restart.
    pub restart: usize,
    /// Inertia after every assignment step of the chosen restart.
    pub inertia_trace: Vec<f64>,
    /// Final inertia of every restart.
    pub restart_inertias: Vec<f64>,
    /// Clusters that went empty at some point and were reseeded.
    pub reseeded: Vec<usize>,
    /// Clusters with no members in the final assignment.
    pub empty: Vec<usize>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centroids.nrows()];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-first seeding: a random first point, then repeatedly the point
/// farthest from every chosen centre (ties to the lowest index).
fn farthest_first(points: &[Vec<f64>], k: usize, first: usize) -> Vec<Vec<f64>> {
    let mut centres = vec![points[first].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centres.len() < k {
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        centres.push(points[best].clone());
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, &points[best]));
        }
    }
    centres
}

struct Run {
    assignment: Vec<usize>,
    centres: Vec<Vec<f64>>,
    inertia: f64,
    trace: Vec<f64>,
    reseeded: Vec<usize>,
}

fn assign(points: &[Vec<f64>], centres: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, centre) in centres.iter().enumerate() {
                let d = sq_dist(p, centre);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iters: usize, first: usize) -> Run {
    let dim = points[0].len();
    let mut centres = farthest_first(points, k, first);
    let mut trace = Vec::new();
    let mut reseeded = Vec::new();
    let mut assignment;
    loop {
        let assigned = assign(points, &centres);
        assignment = assigned.iter().map(|a| a.0).collect::<Vec<_>>();
        let mut dist: Vec<f64> = assigned.iter().map(|a| a.1).collect();

        // Move the farthest point into each empty cluster.
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                });
            let Some(far) = far else { continue };
            sizes[assignment[far]] -= 1;
            assignment[far] = c;
            sizes[c] = 1;
            dist[far] = 0.0;
            centres[c] = points[far].clone();
            if !reseeded.contains(&c) {
                reseeded.push(c);
            }
        }

        let inertia: f64 = dist.iter().sum();
        let prev = trace.last().copied();
        trace.push(inertia);
        if let Some(prev) = prev {
            assert!(
                inertia <= prev + 1e-12 * prev.abs().max(1.0),
                "Lloyd inertia increased from {prev} to {inertia}"
            );
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }

        let converged = prev.is_some_and(|p| p - inertia < 1e-9);
        if converged || trace.len() >= max_iters {
            break;
        }
    }
    // Inertia against the final centres.
    let inertia = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centres[a])).sum();
    Run { assignment, centres, inertia, trace, reseeded }
}

/// k-means with farthest-first seeding; the restart with the lowest inertia
/// wins (ties to the earlier restart).
pub fn kmeans(x: &DMatrix<f64>, config: &KmeansConfig) -> Result<ClusterModel> {
    let n = x.nrows();
    let KmeansConfig { k, restarts, max_iters, seed } = *config;
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if restarts == 0 || max_iters == 0 {
        return Err(Error::InvalidConfig("restarts and max_iters must be >= 1".into()));
    }
    let points: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let first = rng(seed, r as u64).random_range(0..n);
            lloyd(&points, k, max_iters, first)
        })
        .collect();
    let restart_inertias: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| restart_inertias[a].total_cmp(&restart_inertias[b]).then(a.cmp(&b)))
        .expect("at least one restart");
    let run = runs.into_iter().nth(best).expect("index in range");
    let mut sizes = vec![0usize; k];
    for &a in &run.assignment {
        sizes[a] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&c| sizes[c] == 0).collect();
    if !empty.is_empty() {
        log::warn!("{} clusters are empty (duplicate points)", empty.len());
    }
    let dim = x.ncols();
    Ok(ClusterModel {
        centroids: DMatrix::from_fn(k, dim, |c, j| run.centres[c][j]),
        iterations: run.trace.len(),
        assignment: run.assignment,
        inertia: run.inertia,
        restart: best,
        inertia_trace: run.trace,
        restart_inertias,
        reseeded: run.reseeded,
        empty,
    })
}

/// Top TF-IDF terms per cluster, each cluster's documents pooled into one
/// pseudo-document. `idf = ln(k / #clusters containing the term)`; terms with
/// a non-positive score are never listed.
pub fn tfidf_labels(
    assignment: &[usize],
    corpus: &BagCorpus,
    k: usize,
    vocab: &Vocabulary,
    top_n: usize,
) -> Result<Vec<Vec<(String, f64)>>> {
    if assignment.len() != corpus.num_docs() {
        return Err(Error::DimensionMismatch { expected: corpus.num_docs(), found: assignment.len() });
    }
    let v = vocab.len();
    let mut counts = vec![vec![0u64; v]; k];
    for (doc, &c) in corpus.docs.iter().zip(assignment) {
        if c >= k {
            return Err(Error::InvalidInput(format!("cluster {c} >= k={k}")));
        }
        for &(w, n) in &doc.terms {
            counts[c][w as usize] += n as u64;
        }
    }
    let df: Vec<usize> = (0..v).map(|w| counts.iter().filter(|row| row[w] > 0).count()).collect();
    Ok(counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Vec::new();
            }
            let scores: Vec<f64> = (0..v)
                .map(|w| {
                    if row[w] == 0 {
                        return 0.0;
                    }
                    row[w] as f64 / total as f64 * (k as f64 / df[w] as f64).ln()
                })
                .collect();
            argsort_desc(&scores)
                .into_iter()
                .take_while(|&w| scores[w] > 0.0)
                .take(top_n)
                .map(|w| (vocab.term(w).to_owned(), scores[w]))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPolarity {
    /// Mean theta mass on positive, negative and neutral topics.
    pub mass: [f64; 3],
    pub dominant: Polarity,
}

/// Dominant topic polarity of each cluster; ties resolve to neutral.
pub fn polarity_color(
    assignment: &[usize],
    topic_polarity: &[Polarity],
    theta: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<ClusterPolarity>> {
    if topic_polarity.len() != theta.ncols() {
        return Err(Error::DimensionMismatch { expected: theta.ncols(), found: topic_polarity.len() });
    }
    if assignment.len() != theta.nrows() {
        return Err(Error::DimensionMismatch { expected: theta.nrows(), found: assignment.len() });
    }
    let mut sums = vec![[0.0; 3]; k];
    let mut sizes = vec![0usize; k];
    for (d, &c) in assignment.iter().enumerate() {
        sizes[c] += 1;
        for (t, p) in topic_polarity.iter().enumerate() {
            sums[c][p.index()] += theta[(d, t)];
        }
    }
    Ok(sums
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| {
            let mass = s.map(|x| if n > 0 { x / n as f64 } else { 0.0 });
            let max = mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<Polarity> = Polarity::ALL.into_iter().filter(|p| mass[p.index()] == max).collect();
            let dominant = if winners.len() == 1 { winners[0] } else { Polarity::Neutral };
            ClusterPolarity { mass, dominant }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub top_terms: Vec<String>,
    pub polarity: Polarity,
    /// Mean star rating per dimension over the cluster's reviews that rated it.
    pub mean_ratings: [Option<f64>; 6],
}

/// Combines sizes, TF-IDF labels, dominant polarity and mean ratings.
pub fn summarize(
    model: &ClusterModel,
    labels: &[Vec<(String, f64)>],
    polarity: &[ClusterPolarity],
    ratings: &[Ratings],
) -> Vec<ClusterSummary> {
    let k = model.centroids.nrows();
    let mut sums = vec![[(0.0, 0usize); 6]; k];
    for (&c, r) in model.assignment.iter().zip(ratings) {
        for dim in Dimension::ALL {
            if let Some(v) = r.get(dim) {
                let e = &mut sums[c][dim.index()];
                e.0 += v as f64;
                e.1 += 1;
            }
        }
    }
    let sizes = model.sizes();
    (0..k)
        .map(|c| ClusterSummary {
            cluster: c,
            size: sizes[c],
            top_terms: labels.get(c).map(|l| l.iter().map(|(t, _)| t.clone()).collect()).unwrap_or_default(),
            polarity: polarity.get(c).map_or(Polarity::Neutral, |p| p.dominant),
            mean_ratings: sums[c].map(|(s, n)| (n > 0).then(|| s / n as f64)),
        })
        .collect()
}
