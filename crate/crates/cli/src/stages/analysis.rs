//! link, panel and cluster: the stages downstream of the topic model.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use reviewlens_core::corpus::Dimension;
use reviewlens_core::forest::{self, metrics, ForestConfig, Metrics};
use reviewlens_core::linreg::{cv_error, lasso, rank_predictors, select_lambda, CvReport, Estimator};
use reviewlens_core::panel::{aggregate, fit_all, format_table};
use reviewlens_core::topic_graph::Polarity;
use reviewlens_core::Error;
use reviewlens_core::review_cluster::{hellinger_matrix, kmeans, polarity_color, summarize, tfidf_labels, KmeansConfig};
use serde::{Deserialize, Serialize};

use super::topic_label;
use crate::artifacts::{strings, write_csv, write_json, Ctx, Stage};
use crate::CliError;

/// Theta rows and star ratings of the reviews that rated `dim`.
fn rated(theta: &DMatrix<f64>, ratings: &[Option<u8>], cols: usize) -> (DMatrix<f64>, Vec<u8>) {
    let rows: Vec<usize> = (0..ratings.len()).filter(|&i| ratings[i].is_some()).collect();
    let x = DMatrix::from_fn(rows.len(), cols, |i, j| theta[(rows[i], j)]);
    (x, rows.iter().map(|&i| ratings[i].expect("filtered")).collect())
}

/// Stream offset so each dimension gets its own seed.
fn dim_seed(seed: u64, dim: Dimension) -> u64 {
    seed ^ ((dim.index() as u64 + 1) << 32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSummary {
    pub dimension: String,
    pub n: usize,
    pub oob_accuracy: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub dimension: String,
    pub model: String,
    pub n: usize,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub baseline_sd: f64,
    pub lambdas: Vec<f64>,
    pub zero_variance_folds: Vec<usize>,
}

impl CvSummary {
    fn new(dim: Dimension, model: &str, r: CvReport) -> Self {
        CvSummary {
            dimension: dim.key().to_owned(),
            model: model.to_owned(),
            n: r.folds.len(),
            fold_rmse: r.fold_rmse,
            mean_rmse: r.mean_rmse,
            baseline_sd: r.baseline_sd,
            lambdas: r.lambdas,
            zero_variance_folds: r.zero_variance_folds,
        }
    }
}

struct DimLink {
    forest: ForestSummary,
    confusion: String,
    importance: Vec<(usize, f64, usize)>,
    cv_ols: CvSummary,
    cv_lasso: CvSummary,
    lasso_lambda: f64,
    lasso: Vec<(f64, Option<usize>)>,
}

fn link_dimension(ctx: &Ctx, theta: &DMatrix<f64>, ratings: &[Option<u8>], dim: Dimension) -> Result<DimLink, CliError> {
    let k = theta.ncols();
    let seed = dim_seed(ctx.seed(), dim);
    let (x, y) = rated(theta, ratings, k);
    if y.is_empty() {
        return Err(CliError::Compute(format!("no reviews rate {}", dim.key())));
    }
    let f = &ctx.cfg.forest;
    let cfg = ForestConfig { n_trees: f.n_trees, mtry: f.mtry, min_node: f.min_node, seed, regression: false };
    let model = forest::fit(&x, &y, &cfg)?;
    let cm = model.oob_confusion(&y)?;
    let forest = ForestSummary {
        dimension: dim.key().to_owned(),
        n: y.len(),
        oob_accuracy: model.oob_accuracy(&y),
        metrics: metrics(&cm)?,
    };
    let importance = model.importance().entries.iter().map(|e| (e.feature, e.importance, e.rank)).collect();

    // Proportions sum to one, so OLS with an intercept drops the last topic.
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let l = &ctx.cfg.linreg;
    let x_ols = x.columns(0, k - 1).into_owned();
    let cv_ols = CvSummary::new(dim, "ols", cv_error(&x_ols, &yf, &Estimator::Ols, l.folds, seed)?);
    let cv_lasso = CvSummary::new(dim, "lasso", cv_error(&x, &yf, &l.lasso(), l.folds, seed)?);
    let lambda = select_lambda(&x, &yf, l.lasso_grid, l.lasso_ratio, l.inner_folds, seed)?;
    let fit = lasso(&x, &yf, lambda)?;
    let mut lasso_ranked = vec![(0.0, None); k];
    for r in rank_predictors(&fit) {
        lasso_ranked[r.feature] = (r.coefficient, r.rank);
    }
    Ok(DimLink {
        forest,
        confusion: cm.to_csv(),
        importance,
        cv_ols,
        cv_lasso,
        lasso_lambda: lambda,
        lasso: lasso_ranked,
    })
}

pub fn link(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Fit, Stage::Link)?;
    let model = ctx.model()?;
    let enriched = ctx.enriched()?;
    let dir = ctx.begin(Stage::Link)?;
    let theta = model.theta();
    let k = theta.ncols();
    if k < 2 {
        return Err(CliError::Compute("link needs at least two topics".into()));
    }
    let results: Vec<Result<DimLink, CliError>> = Dimension::ALL
        .par_iter()
        .map(|&dim| {
            let ratings: Vec<Option<u8>> = enriched.iter().map(|e| e.review.ratings.get(dim)).collect();
            link_dimension(ctx, theta, &ratings, dim)
        })
        .collect();
    let results: Vec<DimLink> = results.into_iter().collect::<Result<_, _>>()?;
    let labels: Vec<String> = (0..k).map(|t| topic_label(&model, t)).collect();

    let mut imp_rows = Vec::new();
    for (dim, r) in Dimension::ALL.iter().zip(&results) {
        std::fs::write(dir.join(format!("confusion_{}.csv", dim.key())), &r.confusion)
            .map_err(|e| CliError::io(&dir, e))?;
        for &(f, imp, rank) in &r.importance {
            imp_rows.push(vec![dim.key().to_owned(), f.to_string(), labels[f].clone(), imp.to_string(), rank.to_string()]);
        }
    }
    write_csv(&dir.join("importance.csv"), &strings(["dimension", "feature", "label", "importance", "rank"]), imp_rows)?;
    let forests: Vec<&ForestSummary> = results.iter().map(|r| &r.forest).collect();
    write_json(&dir.join("metrics.json"), &forests)?;

    // Rows are model specs, columns the six dimensions and their mean.
    let header: Vec<String> = std::iter::once("model".to_owned())
        .chain(Dimension::ALL.iter().map(|d| d.key().to_owned()))
        .chain(std::iter::once("mean".to_owned()))
        .collect();
    let row = |name: String, vals: Vec<f64>| {
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        std::iter::once(name).chain(vals.iter().chain([&m]).map(|v| v.to_string())).collect::<Vec<_>>()
    };
    write_csv(
        &dir.join("cv.csv"),
        &header,
        [
            row(format!("ols_k{k}"), results.iter().map(|r| r.cv_ols.mean_rmse).collect()),
            row(format!("lasso_k{k}"), results.iter().map(|r| r.cv_lasso.mean_rmse).collect()),
            row("sd_baseline".to_owned(), results.iter().map(|r| r.cv_ols.baseline_sd).collect()),
        ],
    )?;
    let cv: Vec<&CvSummary> = results.iter().flat_map(|r| [&r.cv_ols, &r.cv_lasso]).collect();
    write_json(&dir.join("cv.json"), &cv)?;

    let mut header = strings(["topic", "label"]);
    for d in Dimension::ALL {
        header.push(format!("coef_{}", d.key()));
        header.push(format!("rank_{}", d.key()));
    }
    write_csv(
        &dir.join("lasso_rankings.csv"),
        &header,
        (0..k).map(|t| {
            let mut row = vec![t.to_string(), labels[t].clone()];
            for r in &results {
                let (c, rank) = r.lasso[t];
                row.push(c.to_string());
                row.push(rank.map(|x| x.to_string()).unwrap_or_default());
            }
            row
        }),
    )?;
    let lambdas: BTreeMap<&str, f64> = Dimension::ALL.iter().zip(&results).map(|(d, r)| (d.key(), r.lasso_lambda)).collect();
    write_json(&dir.join("lasso_lambda.json"), &lambdas)?;
    ctx.finish(Stage::Link, &[Stage::Ingest, Stage::Fit], BTreeMap::new())
}

pub fn panel(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Fit, Stage::Panel)?;
    ctx.require(Stage::Graph, Stage::Panel)?;
    let model = ctx.model()?;
    let enriched = ctx.enriched()?;
    let polarity = ctx.polarity()?;
    let dir = ctx.begin(Stage::Panel)?;
    let theta = model.theta();
    let rows: Vec<Vec<f64>> = (0..theta.nrows()).map(|d| model.theta_row(d)).collect();
    let table = aggregate(&enriched, &rows, &polarity.topic_polarity)?;
    table.write_csv(&dir.join("panel.csv"))?;
    let no_neutral = !polarity.topic_polarity.contains(&Polarity::Neutral);
    let results = fit_all(&table, ctx.cfg.panel.se)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| match e {
            Error::RankDeficient { .. } if no_neutral => CliError::Compute(format!(
                "{e}; the topic graph has no neutral community, so positive and negative proportions sum to one \
                 (adjust graph.resolution, graph.edge_quantile or graph.polarity_band)"
            )),
            e => e.into(),
        })?;
    write_json(&dir.join("fe.json"), &results)?;
    std::fs::write(dir.join("table.txt"), format_table(&results)).map_err(|e| CliError::io(&dir, e))?;
    ctx.finish(Stage::Panel, &[Stage::Ingest, Stage::Fit, Stage::Graph], BTreeMap::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KmeansSummary {
    k: usize,
    inertia: f64,
    iterations: usize,
    restart: usize,
    restart_inertias: Vec<f64>,
    reseeded: Vec<usize>,
    empty: Vec<usize>,
}

pub fn cluster(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Fit, Stage::Cluster)?;
    ctx.require(Stage::Graph, Stage::Cluster)?;
    let model = ctx.model()?;
    let corpus = ctx.corpus()?;
    let vocab = ctx.vocabulary()?;
    let enriched = ctx.enriched()?;
    let polarity = ctx.polarity()?;
    let dir = ctx.begin(Stage::Cluster)?;
    let c = &ctx.cfg.cluster;
    let theta = model.theta();
    let km = kmeans(theta, &KmeansConfig { k: c.k, restarts: c.restarts, max_iters: c.max_iters, seed: ctx.seed() })?;
    let k = km.centroids.nrows();
    let labels = tfidf_labels(&km.assignment, &corpus, k, &vocab, c.top_terms)?;
    let colors = polarity_color(&km.assignment, &polarity.topic_polarity, theta, k)?;
    let ratings: Vec<_> = enriched.iter().map(|e| e.review.ratings).collect();
    let summary = summarize(&km, &labels, &colors, &ratings);

    write_csv(
        &dir.join("clusters.csv"),
        &strings(["review_id", "cluster"]),
        model.doc_ids().iter().zip(&km.assignment).map(|(id, c)| [id.clone(), c.to_string()]),
    )?;
    let topics = km.centroids.ncols();
    write_csv(
        &dir.join("centroids.csv"),
        &std::iter::once("cluster".to_owned()).chain((0..topics).map(|t| format!("topic_{t}"))).collect::<Vec<_>>(),
        (0..k).map(|i| std::iter::once(i.to_string()).chain(km.centroids.row(i).iter().map(|v| v.to_string())).collect::<Vec<_>>()),
    )?;
    let mut header = strings(["cluster", "size", "polarity", "positive_mass", "negative_mass", "neutral_mass", "top_terms"]);
    header.extend(Dimension::ALL.iter().map(|d| format!("mean_{}", d.key())));
    write_csv(
        &dir.join("cluster_summary.csv"),
        &header,
        summary.iter().zip(&colors).map(|(s, col)| {
            let mut row = vec![s.cluster.to_string(), s.size.to_string(), s.polarity.as_str().to_owned()];
            row.extend(col.mass.iter().map(|m| m.to_string()));
            row.push(s.top_terms.join(" "));
            row.extend(s.mean_ratings.iter().map(|m| m.map(|v| v.to_string()).unwrap_or_default()));
            row
        }),
    )?;
    let h = hellinger_matrix(&km.centroids)?;
    write_csv(
        &dir.join("hellinger.csv"),
        &std::iter::once("cluster".to_owned()).chain((0..k).map(|j| j.to_string())).collect::<Vec<_>>(),
        (0..k).map(|i| std::iter::once(i.to_string()).chain((0..k).map(|j| h[(i, j)].to_string())).collect::<Vec<_>>()),
    )?;
    write_json(
        &dir.join("model.json"),
        &KmeansSummary {
            k,
            inertia: km.inertia,
            iterations: km.iterations,
            restart: km.restart,
            restart_inertias: km.restart_inertias.clone(),
            reseeded: km.reseeded.clone(),
            empty: km.empty.clone(),
        },
    )?;
    write_json(&dir.join("summary.json"), &summary)?;
    ctx.finish(Stage::Cluster, &[Stage::Ingest, Stage::Fit, Stage::Graph], BTreeMap::new())
}
