use std::collections::BTreeMap;
use std::fmt::Write as _;

use reviewlens_core::corpus::Dimension;
use reviewlens_core::panel::{format_table, FeResult};
use reviewlens_core::review_cluster::ClusterSummary;
use reviewlens_core::selection::Selection;
use reviewlens_core::topic_graph::{prevalence, CommunityPartition};
use serde::Serialize;

use super::analysis::{CvSummary, ForestSummary};
use super::topic_label;
use crate::artifacts::{read_json, write_json, Ctx, Stage};
use crate::CliError;

const TOP_TOPICS: usize = 10;
const TOP_FEATURES: usize = 5;
const TOP_CLUSTERS: usize = 10;

#[derive(Debug, Serialize)]
struct TopicEntry {
    topic: usize,
    label: String,
    prevalence: f64,
    community: usize,
    polarity: String,
}

#[derive(Debug, Serialize)]
struct FeatureEntry {
    topic: usize,
    label: String,
    importance: f64,
}

#[derive(Debug, Serialize)]
struct ForestEntry {
    dimension: String,
    oob_accuracy: f64,
    top_features: Vec<FeatureEntry>,
}

#[derive(Debug, Serialize)]
struct Report {
    seed: u64,
    config_hash: String,
    k: usize,
    selection: Option<Selection>,
    communities: usize,
    modularity: f64,
    top_topics: Vec<TopicEntry>,
    forests: Vec<ForestEntry>,
    /// Mean CV RMSE per model and dimension, plus the SD baseline.
    cv: BTreeMap<String, BTreeMap<String, f64>>,
    fixed_effects: Vec<FeResult>,
    largest_clusters: Vec<ClusterSummary>,
}

#[derive(Debug, serde::Deserialize)]
struct ImportanceRow {
    dimension: String,
    feature: usize,
    label: String,
    importance: f64,
    rank: usize,
}

pub fn report(ctx: &Ctx) -> Result<(), CliError> {
    for s in [Stage::Fit, Stage::Graph, Stage::Link, Stage::Panel, Stage::Cluster] {
        ctx.require(s, Stage::Report)?;
    }
    let model = ctx.model()?;
    let corpus = ctx.corpus()?;
    let polarity = ctx.polarity()?;
    let selection: Option<Selection> = if ctx.has(Stage::Sweep) && ctx.cfg.topics.k.is_none() {
        Some(read_json(&ctx.dir(Stage::Sweep).join("selection.json"))?)
    } else {
        None
    };
    let partition: CommunityPartition = read_json(&ctx.dir(Stage::Graph).join("communities.json"))?;
    let forests: Vec<ForestSummary> = read_json(&ctx.dir(Stage::Link).join("metrics.json"))?;
    let cv_runs: Vec<CvSummary> = read_json(&ctx.dir(Stage::Link).join("cv.json"))?;
    let fixed_effects: Vec<FeResult> = read_json(&ctx.dir(Stage::Panel).join("fe.json"))?;
    let clusters: Vec<ClusterSummary> = read_json(&ctx.dir(Stage::Cluster).join("summary.json"))?;
    let importance_path = ctx.dir(Stage::Link).join("importance.csv");
    let importance: Vec<ImportanceRow> = csv::Reader::from_path(&importance_path)
        .and_then(|mut r| r.deserialize().collect())
        .map_err(|e| CliError::csv(&importance_path, e))?;
    let dir = ctx.begin(Stage::Report)?;

    let k = model.num_topics();
    let prev = prevalence(&model, &corpus)?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| prev[b].total_cmp(&prev[a]).then(a.cmp(&b)));
    let top_topics = order
        .into_iter()
        .take(TOP_TOPICS)
        .map(|t| TopicEntry {
            topic: t,
            label: topic_label(&model, t),
            prevalence: prev[t],
            community: partition.membership[t],
            polarity: polarity.topic_polarity[t].as_str().to_owned(),
        })
        .collect();
    let forests = forests
        .into_iter()
        .map(|f| {
            let mut top: Vec<&ImportanceRow> = importance.iter().filter(|r| r.dimension == f.dimension).collect();
            top.sort_by_key(|r| r.rank);
            ForestEntry {
                top_features: top
                    .into_iter()
                    .take(TOP_FEATURES)
                    .map(|r| FeatureEntry { topic: r.feature, label: r.label.clone(), importance: r.importance })
                    .collect(),
                dimension: f.dimension,
                oob_accuracy: f.oob_accuracy,
            }
        })
        .collect();
    let mut cv: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &cv_runs {
        cv.entry(r.model.clone()).or_default().insert(r.dimension.clone(), r.mean_rmse);
        if r.model == "ols" {
            cv.entry("sd_baseline".into()).or_default().insert(r.dimension.clone(), r.baseline_sd);
        }
    }
    let mut largest = clusters;
    largest.sort_by(|a, b| b.size.cmp(&a.size).then(a.cluster.cmp(&b.cluster)));
    largest.truncate(TOP_CLUSTERS);

    let report = Report {
        seed: ctx.seed(),
        config_hash: ctx.cfg.fingerprint(),
        k,
        selection,
        communities: partition.num_communities(),
        modularity: partition.modularity,
        top_topics,
        forests,
        cv,
        fixed_effects,
        largest_clusters: largest,
    };
    write_json(&dir.join("report.json"), &report)?;
    std::fs::write(dir.join("report.txt"), render(&report)).map_err(|e| CliError::io(&dir, e))?;
    ctx.finish(
        Stage::Report,
        &[Stage::Ingest, Stage::Sweep, Stage::Fit, Stage::Graph, Stage::Link, Stage::Panel, Stage::Cluster],
        BTreeMap::new(),
    )
}

fn render(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "reviewlens report (seed {}, config {})", r.seed, &r.config_hash[..12]);
    let _ = writeln!(s);
    match &r.selection {
        Some(sel) => {
            let _ = writeln!(s, "Topics: K = {} (selected, combined score {:.4})", r.k, sel.winner.combined);
        }
        None => {
            let _ = writeln!(s, "Topics: K = {} (fixed)", r.k);
        }
    }
    let _ = writeln!(s, "Communities: {} (modularity {:.4})", r.communities, r.modularity);
    let _ = writeln!(s);
    let _ = writeln!(s, "Top topics by prevalence");
    for t in &r.top_topics {
        let _ = writeln!(
            s,
            "  {:>4}  {:.4}  {:<8}  c{:<3} {}",
            t.topic, t.prevalence, t.polarity, t.community, t.label
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Random forests (OOB accuracy, top topics)");
    for f in &r.forests {
        let tops: Vec<String> = f.top_features.iter().map(|e| format!("{} [{}]", e.topic, e.label)).collect();
        let _ = writeln!(s, "  {:<10} {:.3}  {}", f.dimension, f.oob_accuracy, tops.join("; "));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Cross-validated RMSE");
    let _ = write!(s, "  {:<12}", "");
    for d in Dimension::ALL {
        let _ = write!(s, " {:>10}", d.key());
    }
    let _ = writeln!(s);
    for (model, vals) in &r.cv {
        let _ = write!(s, "  {model:<12}");
        for d in Dimension::ALL {
            match vals.get(d.key()) {
                Some(v) => {
                    let _ = write!(s, " {v:>10.4}");
                }
                None => {
                    let _ = write!(s, " {:>10}", "");
                }
            }
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Two-way fixed effects");
    s += &format_table(&r.fixed_effects);
    let _ = writeln!(s);
    let _ = writeln!(s, "Largest review clusters");
    for c in &r.largest_clusters {
        let _ = writeln!(s, "  {:>4}  n={:<6} {:<8} {}", c.cluster, c.size, c.polarity.as_str(), c.top_terms.join(" "));
    }
    s
}
