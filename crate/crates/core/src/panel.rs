//! CCG x month panel aggregation and two-way fixed-effects regression.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Dimension, EnrichedReview, Month};
use crate::topic_graph::Polarity;
use crate::{Error, Result};

/// Group means are driven below this (relative to the column's scale).
pub const ABSORB_TOL: f64 = 1e-10;
const ABSORB_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell {
    pub ccg_id: String,
    pub month: Month,
    /// Mean rating per [`Dimension`]; `None` when no review in the cell rated it.
    pub ratings: [Option<f64>; 6],
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
    pub imd_weighted: f64,
    pub patients_registered: f64,
    pub n_reviews: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelTable {
    /// Sorted by (ccg_id, month).
    pub cells: Vec<PanelCell>,
}

#[derive(Default)]
struct CellAcc {
    rating_sum: [f64; 6],
    rating_n: [usize; 6],
    mass: [f64; 3],
    imd: f64,
    patients: f64,
    n: usize,
}

/// Averages reviews into one cell per (CCG, month). `theta[i]` is the topic
/// mixture of `reviews[i]`; cluster proportions sum θ over each polarity.
pub fn aggregate(reviews: &[EnrichedReview], theta: &[Vec<f64>], polarity: &[Polarity]) -> Result<PanelTable> {
    if theta.len() != reviews.len() {
        return Err(Error::DimensionMismatch { expected: reviews.len(), found: theta.len() });
    }
    let mut cells: BTreeMap<(&str, Month), CellAcc> = BTreeMap::new();
    for (r, t) in reviews.iter().zip(theta) {
        if t.len() != polarity.len() {
            return Err(Error::DimensionMismatch { expected: polarity.len(), found: t.len() });
        }
        let acc = cells.entry((r.ccg_id.as_str(), r.review.posted_month)).or_default();
        for (d, v) in r.review.ratings.0.iter().enumerate() {
            if let Some(v) = v {
                acc.rating_sum[d] += *v as f64;
                acc.rating_n[d] += 1;
            }
        }
        let total: f64 = t.iter().sum();
        for (p, w) in polarity.iter().zip(t) {
            acc.mass[p.index()] += w / total;
        }
        acc.imd += r.imd_weighted;
        acc.patients += r.patients_registered as f64;
        acc.n += 1;
    }
    let cells = cells
        .into_iter()
        .map(|((ccg, month), a)| {
            let n = a.n as f64;
            let mut ratings = [None; 6];
            for d in 0..6 {
                if a.rating_n[d] > 0 {
                    ratings[d] = Some(a.rating_sum[d] / a.rating_n[d] as f64);
                }
            }
            PanelCell {
                ccg_id: ccg.to_owned(),
                month,
                ratings,
                positive: a.mass[Polarity::Positive.index()] / n,
                negative: a.mass[Polarity::Negative.index()] / n,
                neutral: a.mass[Polarity::Neutral.index()] / n,
                imd_weighted: a.imd / n,
                patients_registered: a.patients / n,
                n_reviews: a.n,
            }
        })
        .collect();
    Ok(PanelTable { cells })
}

impl PanelTable {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["ccg_id".to_owned(), "month".to_owned()];
        header.extend(Dimension::ALL.iter().map(|d| format!("rating_{}", d.key())));
        header.extend(
            ["positive", "negative", "neutral", "imd_weighted", "patients_registered", "n_reviews"].map(String::from),
        );
        w.write_record(&header)?;
        for c in &self.cells {
            let mut row = vec![c.ccg_id.clone(), c.month.to_string()];
            row.extend(c.ratings.iter().map(|r| r.map_or_else(String::new, |v| v.to_string())));
            row.extend([c.positive, c.negative, c.neutral, c.imd_weighted, c.patients_registered].map(|v| v.to_string()));
            row.push(c.n_reviews.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Demeans every column by each factor in turn until all factor-level means
/// are below [`ABSORB_TOL`] (scaled by the column's magnitude). `factors[f][i]`
/// is the level of row `i`. A constant column maps to exact zeros.
pub fn within_residualize(columns: &[Vec<f64>], factors: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
    let n = columns.first().map_or(0, Vec::len);
    for c in columns {
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.len() });
        }
    }
    for f in factors {
        if f.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.len() });
        }
    }
    let levels: Vec<usize> = factors.iter().map(|f| f.iter().max().map_or(0, |m| m + 1)).collect();
    let counts: Vec<Vec<f64>> = factors
        .iter()
        .zip(&levels)
        .map(|(f, &l)| {
            let mut c = vec![0.0; l];
            for &g in f.iter() {
                c[g] += 1.0;
            }
            c
        })
        .collect();
    columns
        .iter()
        .map(|col| {
            if col.iter().all(|v| *v == col[0]) {
                return Ok(vec![0.0; n]);
            }
            let tol = ABSORB_TOL * col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut v = col.clone();
            for it in 0..ABSORB_MAX_ITERS {
                let mut worst: f64 = 0.0;
                for ((f, &l), cnt) in factors.iter().zip(&levels).zip(&counts) {
                    let mut sums = vec![0.0; l];
                    for (x, &g) in v.iter().zip(f.iter()) {
                        sums[g] += x;
                    }
                    for (s, c) in sums.iter_mut().zip(cnt) {
                        if *c > 0.0 {
                            *s /= c;
                            worst = worst.max(s.abs());
                        }
                    }
                    for (x, &g) in v.iter_mut().zip(f.iter()) {
                        *x -= sums[g];
                    }
                }
                if worst < tol {
                    return Ok(v);
                }
                if it + 1 == ABSORB_MAX_ITERS {
                    return Err(Error::AbsorptionNotConverged { iterations: ABSORB_MAX_ITERS, max_mean: worst });
                }
            }
            unreachable!()
        })
        .collect()
}

/// Number of connected components of the bipartite level graph linking the
/// levels of two factors through shared rows.
pub fn connected_components(a: &[usize], b: &[usize]) -> usize {
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut parent: Vec<usize> = (0..na + nb).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (&i, &j) in a.iter().zip(b) {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, na + j));
        if ri != rj {
            parent[ri] = rj;
        }
    }
    let mut used = vec![false; na + nb];
    for &i in a {
        used[i] = true;
    }
    for &j in b {
        used[na + j] = true;
    }
    (0..na + nb).filter(|&x| used[x] && find(&mut parent, x) == x).count()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeKind {
    /// Heteroskedasticity-robust, n/(n-k) scaled.
    #[default]
    Hc1,
    /// Clustered by the first factor (CCG) with the CR1 small-sample factor.
    Cluster,
}

/// Estimates from OLS on absorbed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbedFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// Total sum of squares about the grand mean.
    pub tss: f64,
    /// Sum of squares of the absorbed dependent variable.
    pub tss_within: f64,
    /// Rank of the intercept plus both sets of dummies.
    pub absorbed: usize,
    pub df_resid: usize,
    /// Degrees of freedom used for p-values.
    pub df_test: usize,
}

/// Least squares of `y` on `x` (columns) with two absorbed factors.
/// `names` label the columns of `x` in errors.
pub fn absorbed_ols(
    y: &[f64],
    x: &[Vec<f64>],
    names: &[&str],
    group: &[usize],
    time: &[usize],
    se: SeKind,
) -> Result<AbsorbedFit> {
    let n = y.len();
    let p = x.len();
    if names.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: names.len() });
    }
    let mut cols: Vec<Vec<f64>> = vec![y.to_vec()];
    cols.extend(x.iter().cloned());
    let t = within_residualize(&cols, &[group, time])?;
    let yt = DVector::from_column_slice(&t[0]);
    let xt = DMatrix::from_fn(n, p, |i, j| t[j + 1][i]);
    for j in 0..p {
        let before: f64 = x[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let after = xt.column(j).norm();
        if after <= 1e-9 * before.max(1e-300) {
            return Err(Error::RankDeficient { columns: vec![format!("{} (absorbed by fixed effects)", names[j])] });
        }
    }
    let absorbed = {
        let g = group.iter().max().map_or(0, |m| m + 1);
        let tm = time.iter().max().map_or(0, |m| m + 1);
        g + tm - connected_components(group, time)
    };
    if n <= p + absorbed {
        return Err(Error::InsufficientPanel(format!("{n} observations for {p} regressors and {absorbed} absorbed effects")));
    }
    let xtx = xt.transpose() * &xt;
    let all = || Error::RankDeficient { columns: names.iter().map(|s| (*s).to_owned()).collect() };
    // Reciprocal condition number of the correlation-scaled cross product;
    // the eigenvector of the smallest eigenvalue names the collinear set.
    let d: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt()).collect();
    let corr = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (d[i] * d[j]));
    let eig = corr.symmetric_eigen();
    let lo = eig.eigenvalues.imin();
    let rcond = eig.eigenvalues[lo] / eig.eigenvalues.max();
    if !(rcond > 1e-12) {
        let v = eig.eigenvectors.column(lo);
        let big = v.amax();
        let columns = (0..p).filter(|&j| v[j].abs() >= 0.1 * big).map(|j| names[j].to_owned()).collect();
        return Err(Error::RankDeficient { columns });
    }
    let chol = xtx.cholesky().ok_or_else(all)?;
    let bread = chol.inverse();
    let beta = chol.solve(&(xt.transpose() * &yt));
    let resid = &yt - &xt * &beta;
    let ssr = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let k = p + absorbed;
    let df_resid = n - k;
    let (meat, scale, df_test) = match se {
        SeKind::Hc1 => {
            let mut m = DMatrix::zeros(p, p);
            for i in 0..n {
                let xi = xt.row(i).transpose();
                m += &xi * xi.transpose() * (resid[i] * resid[i]);
            }
            (m, n as f64 / df_resid as f64, df_resid)
        }
        SeKind::Cluster => {
            let g = group.iter().max().map_or(0, |m| m + 1);
            let mut score = vec![DVector::zeros(p); g];
            for i in 0..n {
                score[group[i]] += xt.row(i).transpose() * resid[i];
            }
            let mut m = DMatrix::zeros(p, p);
            for s in &score {
                m += s * s.transpose();
            }
            let gf = g as f64;
            if g < 2 {
                return Err(Error::InsufficientPanel("clustered errors need at least two clusters".into()));
            }
            (m, gf / (gf - 1.0) * (n as f64 - 1.0) / df_resid as f64, g - 1)
        }
    };
    let v = &bread * meat * &bread * scale;
    Ok(AbsorbedFit {
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..p).map(|j| v[(j, j)].max(0.0).sqrt()).collect(),
        residuals: resid.iter().copied().collect(),
        ssr,
        tss,
        tss_within: yt.norm_squared(),
        absorbed,
        df_resid,
        df_test,
    })
}

pub const REGRESSORS: [&str; 4] = ["positive", "negative", "imd_weighted", "patients_registered"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeCoefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `None` when the standard error is zero.
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeResult {
    pub dimension: Dimension,
    pub coefficients: Vec<FeCoefficient>,
    pub se_kind: SeKind,
    /// Overall R² of the equivalent dummy-variable model.
    pub r2: f64,
    pub adj_r2: f64,
    pub r2_within: f64,
    pub n_obs: usize,
    pub n_ccg: usize,
    pub n_months: usize,
    pub absorbed: usize,
    pub singletons_dropped: usize,
    /// Cells without the dependent rating.
    pub missing_cells: usize,
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Rows remaining after repeatedly removing observations that are alone in
/// their level of either factor.
pub fn drop_singletons(group: &[usize], time: &[usize]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..group.len()).collect();
    loop {
        let mut cg: BTreeMap<usize, usize> = BTreeMap::new();
        let mut ct: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in &keep {
            *cg.entry(group[i]).or_default() += 1;
            *ct.entry(time[i]).or_default() += 1;
        }
        let before = keep.len();
        keep.retain(|&i| cg[&group[i]] > 1 && ct[&time[i]] > 1);
        if keep.len() == before {
            return keep;
        }
    }
}

fn relabel<T: Ord + Clone>(keys: &[T]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for k in keys {
        let next = map.len();
        map.entry(k.clone()).or_insert(next);
    }
    (keys.iter().map(|k| map[k]).collect(), map.len())
}

/// Two-way (CCG, month) fixed-effects regression of one rating dimension on
/// the positive and negative cluster proportions, IMD and list size.
pub fn fit_two_way_fe(panel: &PanelTable, dim: Dimension, se: SeKind) -> Result<FeResult> {
    let rated: Vec<&PanelCell> = panel.cells.iter().filter(|c| c.ratings[dim.index()].is_some()).collect();
    let missing_cells = panel.len() - rated.len();
    if missing_cells * 2 > panel.len() {
        log::warn!("{dim}: rating missing in {missing_cells} of {} cells", panel.len());
    }
    let (g_all, _) = relabel(&rated.iter().map(|c| c.ccg_id.as_str()).collect::<Vec<_>>());
    let (t_all, _) = relabel(&rated.iter().map(|c| c.month).collect::<Vec<_>>());
    let keep = drop_singletons(&g_all, &t_all);
    let singletons_dropped = rated.len() - keep.len();
    if singletons_dropped > 0 {
        log::info!("{dim}: dropped {singletons_dropped} singleton observations");
    }
    let cells: Vec<&PanelCell> = keep.iter().map(|&i| rated[i]).collect();
    let (group, n_ccg) = relabel(&cells.iter().map(|c| c.ccg_id.as_str()).collect::<Vec<_>>());
    let (time, n_months) = relabel(&cells.iter().map(|c| c.month).collect::<Vec<_>>());
    if n_ccg < 2 || n_months < 2 {
        return Err(Error::InsufficientPanel(format!(
            "{dim}: need at least 2 CCGs and 2 months, found {n_ccg} and {n_months}"
        )));
    }
    let y: Vec<f64> = cells.iter().map(|c| c.ratings[dim.index()].expect("filtered")).collect();
    let x = vec![
        cells.iter().map(|c| c.positive).collect(),
        cells.iter().map(|c| c.negative).collect(),
        cells.iter().map(|c| c.imd_weighted).collect(),
        cells.iter().map(|c| c.patients_registered).collect(),
    ];
    let fit = absorbed_ols(&y, &x, &REGRESSORS, &group, &time, se)?;
    let tdist = StudentsT::new(0.0, 1.0, fit.df_test as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let coefficients = REGRESSORS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (b, s) = (fit.coefficients[j], fit.std_errors[j]);
            let t = (s > 0.0).then(|| b / s);
            let p = t.map(|t| 2.0 * tdist.sf(t.abs()));
            FeCoefficient {
                name: (*name).to_owned(),
                estimate: b,
                std_error: s,
                t_stat: t,
                p_value: p,
                stars: p.map_or("", stars).to_owned(),
            }
        })
        .collect();
    let n = y.len();
    let r2 = if fit.tss > 0.0 { 1.0 - fit.ssr / fit.tss } else { 0.0 };
    let r2_within = if fit.tss_within > 0.0 { 1.0 - fit.ssr / fit.tss_within } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / fit.df_resid as f64;
    Ok(FeResult {
        dimension: dim,
        coefficients,
        se_kind: se,
        r2,
        adj_r2,
        r2_within,
        n_obs: n,
        n_ccg,
        n_months,
        absorbed: fit.absorbed,
        singletons_dropped,
        missing_cells,
    })
}

/// One model per rating dimension, fitted in parallel.
pub fn fit_all(panel: &PanelTable, se: SeKind) -> Vec<Result<FeResult>> {
    Dimension::ALL.par_iter().map(|&d| fit_two_way_fe(panel, d, se)).collect()
}

/// Regression table: one column per model, estimates with standard errors
/// in brackets underneath.
pub fn format_table(results: &[FeResult]) -> String {
    let w = 16;
    let mut out = String::new();
    let _ = write!(out, "{:<22}", "");
    for i in 0..results.len() {
        let _ = write!(out, "{:>w$}", format!("Model {}", i + 1));
    }
    out.push('\n');
    let _ = write!(out, "{:<22}", "");
    for r in results {
        let _ = write!(out, "{:>w$}", r.dimension.key());
    }
    out.push('\n');
    let rule = "-".repeat(22 + w * results.len());
    let _ = writeln!(out, "{rule}");
    for (j, name) in REGRESSORS.iter().enumerate() {
        let _ = write!(out, "{name:<22}");
        for r in results {
            let c = &r.coefficients[j];
            let _ = write!(out, "{:>w$}", format!("{:.3}{}", c.estimate, c.stars));
        }
        out.push('\n');
        let _ = write!(out, "{:<22}", "");
        for r in results {
            let _ = write!(out, "{:>w$}", format!("({:.3})", r.coefficients[j].std_error));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{rule}");
    for (label, f) in [
        ("R2", (|r: &FeResult| format!("{:.3}", r.r2)) as fn(&FeResult) -> String),
        ("Adj. R2", |r| format!("{:.3}", r.adj_r2)),
        ("Within R2", |r| format!("{:.3}", r.r2_within)),
        ("Num. obs.", |r| r.n_obs.to_string()),
        ("CCG effects", |r| r.n_ccg.to_string()),
        ("Month effects", |r| r.n_months.to_string()),
    ] {
        let _ = write!(out, "{label:<22}");
        for r in results {
            let _ = write!(out, "{:>w$}", f(r));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{rule}");
    let kind = match results.first().map(|r| r.se_kind) {
        Some(SeKind::Cluster) => "Standard errors clustered by CCG",
        _ => "Robust (HC1) standard errors",
    };
    let _ = writeln!(out, "{kind} in brackets. *** p < 0.001; ** p < 0.01; * p < 0.05");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Ratings, ReviewRecord};
    use crate::util::rng;
    use rand::Rng;

    fn review(ccg: &str, month: (i32, u32), rating: Option<u8>, imd: f64) -> EnrichedReview {
        EnrichedReview {
            review: ReviewRecord {
                review_id: "r".into(),
                practice_id: "p".into(),
                posted_month: Month { year: month.0, month: month.1 },
                text: String::new(),
                ratings: Ratings([rating, None, None, None, None, None]),
            },
            ccg_id: ccg.into(),
            imd_weighted: imd,
            patients_registered: 1000,
        }
    }

    #[test]
    fn aggregation() {
        let pol = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];
        let reviews =
            vec![review("A", (2014, 1), Some(4), 10.0), review("A", (2014, 1), None, 20.0), review("B", (2014, 2), Some(2), 5.0)];
        let theta = vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.1, 0.5], vec![1.0, 0.0, 0.0]];
        let p = aggregate(&reviews, &theta, &pol).unwrap();
        assert_eq!(p.len(), 2);
        let a = &p.cells[0];
        assert!((a.positive - 0.3).abs() < 1e-15);
        assert!((a.positive + a.negative + a.neutral - 1.0).abs() < 1e-9);
        assert_eq!(a.ratings[0], Some(4.0));
        assert_eq!(a.ratings[1], None);
        assert_eq!((a.imd_weighted, a.n_reviews), (15.0, 2));
        assert_eq!(p.cells[1].positive, 1.0);
    }

    #[test]
    fn balanced_two_by_two() {
        // y_it - ybar_i - ybar_t + ybar
        let y = vec![1.0, 2.0, 4.0, 7.0];
        let g = [0, 0, 1, 1];
        let t = [0, 1, 0, 1];
        let r = within_residualize(&[y], &[&g, &t]).unwrap();
        let expected = [0.5, -0.5, -0.5, 0.5];
        for (a, b) in r[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn one_level_is_centering() {
        let y = vec![1.0, 2.0, 6.0];
        let r = within_residualize(&[y], &[&[0, 0, 0]]).unwrap();
        assert_eq!(r[0], vec![-2.0, -1.0, 3.0]);
        let c = within_residualize(&[vec![0.1; 5]], &[&[0, 1, 0, 1, 2], &[0, 0, 1, 1, 1]]).unwrap();
        assert!(c[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn components_and_singletons() {
        assert_eq!(connected_components(&[0, 0, 1, 2], &[0, 1, 1, 2]), 2);
        let keep = drop_singletons(&[0, 0, 1, 1, 2], &[0, 1, 0, 1, 1]);
        assert_eq!(keep, vec![0, 1, 2, 3]);
    }

    fn synthetic_panel(groups: usize, months: usize, seed: u64, beta: f64) -> PanelTable {
        let mut r = rng(seed, 0);
        let ge: Vec<f64> = (0..groups).map(|_| r.random::<f64>()).collect();
        let te: Vec<f64> = (0..months).map(|_| r.random::<f64>()).collect();
        let mut cells = Vec::new();
        for g in 0..groups {
            for t in 0..months {
                let pos: f64 = r.random::<f64>() * 0.6;
                let neg: f64 = r.random::<f64>() * 0.3;
                let imd = 10.0 + r.random::<f64>() * 20.0;
                let pat = 5000.0 + r.random::<f64>() * 4000.0;
                let y = 2.0 + ge[g] + te[t] + beta * pos - 1.5 * neg + 0.01 * imd;
                cells.push(PanelCell {
                    ccg_id: format!("C{g:02}"),
                    month: Month { year: 2014, month: t as u32 + 1 },
                    ratings: [Some(y), None, None, None, None, None],
                    positive: pos,
                    negative: neg,
                    neutral: 1.0 - pos - neg,
                    imd_weighted: imd,
                    patients_registered: pat,
                    n_reviews: 1,
                });
            }
        }
        PanelTable { cells }
    }

    #[test]
    fn generative_recovery() {
        let p = synthetic_panel(6, 8, 3, 3.0);
        let fe = fit_two_way_fe(&p, Dimension::Phone, SeKind::Hc1).unwrap();
        assert!((fe.coefficients[0].estimate - 3.0).abs() < 1e-8);
        assert!((fe.coefficients[1].estimate + 1.5).abs() < 1e-8);
        assert!((fe.coefficients[2].estimate - 0.01).abs() < 1e-8);
        assert!(fe.coefficients[3].estimate.abs() < 1e-10);
        assert!((fe.r2 - 1.0).abs() < 1e-10);
        assert_eq!(fe.n_obs, 48);
        assert_eq!(fe.absorbed, 6 + 8 - 1);
        assert!(fit_two_way_fe(&p, Dimension::Info, SeKind::Hc1).is_err());
    }

    #[test]
    fn constant_depvar() {
        let mut p = synthetic_panel(4, 5, 9, 3.0);
        for c in &mut p.cells {
            c.ratings[0] = Some(3.0);
        }
        let fe = fit_two_way_fe(&p, Dimension::Phone, SeKind::Cluster).unwrap();
        assert!(fe.coefficients.iter().all(|c| c.estimate == 0.0 && c.p_value.is_none()));
        assert_eq!(fe.r2, 0.0);
    }

    #[test]
    fn table_layout() {
        let mut p = synthetic_panel(5, 6, 4, 3.0);
        let mut r = rng(1, 1);
        for c in &mut p.cells {
            c.ratings[0] = c.ratings[0].map(|v| v + r.random::<f64>());
        }
        let fe = fit_two_way_fe(&p, Dimension::Phone, SeKind::Hc1).unwrap();
        assert!(fe.coefficients.iter().all(|c| c.std_error > 0.0));
        let text = format_table(&[fe.clone(), fe]);
        assert!(text.contains("Model 2") && text.contains("positive") && text.contains("Num. obs."));
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn no_neutral_mass_names_the_pair() {
        let mut p = synthetic_panel(5, 6, 8, 3.0);
        for c in &mut p.cells {
            c.negative = 1.0 - c.positive;
            c.neutral = 0.0;
        }
        match fit_two_way_fe(&p, Dimension::Phone, SeKind::Hc1) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, ["positive", "negative"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
