//! ingest, sweep, fit and graph.

use std::collections::BTreeMap;

use reviewlens_core::corpus::{enrich_reviews, load_ccg, load_imd, load_register, load_reviews, preprocess, write_enriched};
use reviewlens_core::lda;
use reviewlens_core::selection::{select_k, sweep as run_sweep, Selection};
use reviewlens_core::topic_graph::{assign_polarity, build_graph, export, louvain, prevalence, similarity_matrix};
use reviewlens_core::Error;

use super::topic_label;
use crate::artifacts::{read_json, sha256_file, strings, write_csv, write_json, Ctx, Stage};
use crate::CliError;

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let inputs = &ctx.cfg.inputs;
    let named = [
        ("reviews", &inputs.reviews),
        ("register", &inputs.register),
        ("imd", &inputs.imd),
        ("ccg", &inputs.ccg),
    ];
    let mut hashes = BTreeMap::new();
    for (name, path) in named {
        if path.as_os_str().is_empty() {
            return Err(CliError::Usage(format!("inputs.{name} is not set")));
        }
        if !path.is_file() {
            return Err(CliError::Usage(format!("inputs.{name}: {} does not exist", path.display())));
        }
        hashes.insert(name.to_owned(), sha256_file(path)?);
    }
    if let Some(p) = &ctx.cfg.preprocess.stopwords_file {
        if !p.is_file() {
            return Err(CliError::Usage(format!("preprocess.stopwords_file: {} does not exist", p.display())));
        }
        hashes.insert("stopwords".to_owned(), sha256_file(p)?);
    }
    let pre = ctx.cfg.preprocess_config()?;
    let dir = ctx.begin(Stage::Ingest)?;

    let (reviews, load_report) = load_reviews(&inputs.reviews, &inputs.columns)?;
    for r in &load_report.rejected {
        log::warn!("reviews line {}: {}", r.line, r.reason);
    }
    let register = load_register(&inputs.register)?;
    let imd = load_imd(&inputs.imd)?;
    let ccg = load_ccg(&inputs.ccg)?;
    let (enriched, drop_report) = enrich_reviews(&reviews, &register, &imd, &ccg);
    log::info!("{} reviews loaded, {} retained after merge", reviews.len(), enriched.len());
    let records: Vec<_> = enriched.iter().map(|e| e.review.clone()).collect();
    let (corpus, vocab, prune_report) = preprocess(&records, &pre)?;
    log::info!("vocabulary of {} terms, {} tokens", vocab.len(), corpus.total_tokens);

    write_enriched(&dir.join("enriched.csv"), &enriched)?;
    write_json(&dir.join("corpus.json"), &corpus)?;
    write_csv(
        &dir.join("vocabulary.csv"),
        &strings(["term", "count"]),
        vocab.terms().iter().zip(vocab.counts()).map(|(t, c)| [t.clone(), c.to_string()]),
    )?;
    write_json(&dir.join("load_report.json"), &load_report)?;
    write_json(&dir.join("drop_report.json"), &drop_report)?;
    write_json(&dir.join("prune_report.json"), &prune_report)?;
    ctx.finish(Stage::Ingest, &[], hashes)
}

pub fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Ingest, Stage::Sweep)?;
    let corpus = ctx.corpus()?;
    let vocab = ctx.vocabulary()?;
    let dir = ctx.begin(Stage::Sweep)?;
    let cfg = ctx.cfg.sweep_config();
    let table = match run_sweep(&corpus, &vocab, &cfg) {
        Ok(t) => t,
        Err(Error::SweepAborted { k, partial, source }) => {
            partial.write_csv(&dir.join("sweep_partial.csv"))?;
            return Err(CliError::Compute(format!(
                "sweep aborted at K={k}: {source}; completed K values written to sweep_partial.csv"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    table.write_csv(&dir.join("sweep.csv"))?;
    let selection = select_k(&table)?;
    log::info!("selected K={}", selection.k);
    write_json(&dir.join("selection.json"), &selection)?;
    ctx.finish(Stage::Sweep, &[Stage::Ingest], BTreeMap::new())
}

/// Topic count: explicit override, else the sweep's selection.
fn chosen_k(ctx: &Ctx) -> Result<usize, CliError> {
    if let Some(k) = ctx.cfg.topics.k {
        return Ok(k);
    }
    ctx.require(Stage::Sweep, Stage::Fit)?;
    let s: Selection = read_json(&ctx.dir(Stage::Sweep).join("selection.json"))?;
    Ok(s.k)
}

pub fn fit(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Ingest, Stage::Fit)?;
    let k = chosen_k(ctx)?;
    let corpus = ctx.corpus()?;
    let vocab = ctx.vocabulary()?;
    let enriched = ctx.enriched()?;
    let dir = ctx.begin(Stage::Fit)?;
    let topics = &ctx.cfg.topics;
    let hyper = topics.lda.hyper(k, ctx.cfg.sweep_config().seed_for(k));
    let model = lda::fit(&corpus, &vocab, k, &hyper)?;
    model.save(&dir.join("model"))?;

    let top_m = topics.top_words;
    write_csv(
        &dir.join("top_words.csv"),
        &strings(["topic", "rank", "term", "probability"]),
        (0..k).flat_map(|t| {
            model
                .top_words(t, top_m)
                .into_iter()
                .enumerate()
                .map(move |(r, (w, p))| vec![t.to_string(), (r + 1).to_string(), w, p.to_string()])
        }),
    )?;
    let prev = prevalence(&model, &corpus)?;
    write_csv(
        &dir.join("prevalence.csv"),
        &strings(["topic", "label", "prevalence"]),
        prev.iter().enumerate().map(|(t, p)| vec![t.to_string(), topic_label(&model, t), p.to_string()]),
    )?;

    // Reviews with the largest share of each topic.
    let theta = model.theta();
    let n_rep = topics.representative_reviews;
    let mut rows = Vec::new();
    for t in 0..k {
        let mut docs: Vec<usize> = (0..theta.nrows()).filter(|&d| !corpus.docs[d].is_empty()).collect();
        docs.sort_by(|&a, &b| theta[(b, t)].total_cmp(&theta[(a, t)]).then(a.cmp(&b)));
        for (r, &d) in docs.iter().take(n_rep).enumerate() {
            rows.push(vec![
                t.to_string(),
                (r + 1).to_string(),
                model.doc_ids()[d].clone(),
                theta[(d, t)].to_string(),
                enriched[d].review.text.clone(),
            ]);
        }
    }
    write_csv(&dir.join("representative.csv"), &strings(["topic", "rank", "review_id", "proportion", "text"]), rows)?;
    ctx.finish(Stage::Fit, &[Stage::Ingest, Stage::Sweep], BTreeMap::new())
}

pub fn graph(ctx: &Ctx) -> Result<(), CliError> {
    ctx.require(Stage::Fit, Stage::Graph)?;
    let model = ctx.model()?;
    let corpus = ctx.corpus()?;
    let enriched = ctx.enriched()?;
    let dir = ctx.begin(Stage::Graph)?;
    let g = &ctx.cfg.graph;

    let prev = prevalence(&model, &corpus)?;
    let s = similarity_matrix(&model);
    let mut graph = build_graph(&s, &prev, g.edge_quantile)?;
    for node in &mut graph.nodes {
        node.label = topic_label(&model, node.id);
    }
    let partition = louvain(&graph, g.resolution, ctx.seed())?;
    graph.apply_partition(&partition);
    let ratings: Vec<Option<f64>> = enriched.iter().map(|e| e.review.ratings.mean_available()).collect();
    let polarity = assign_polarity(&partition, model.theta(), &ratings, g.polarity_band)?;
    graph.apply_polarity(&polarity.topic_polarity);
    log::info!("{} communities, modularity {:.4}", partition.num_communities(), partition.modularity);

    for &f in &g.formats {
        export(&graph, f, &dir)?;
    }
    let k = s.nrows();
    write_csv(
        &dir.join("similarity.csv"),
        &std::iter::once("topic".to_owned()).chain((0..k).map(|t| format!("topic_{t}"))).collect::<Vec<_>>(),
        (0..k).map(|i| std::iter::once(i.to_string()).chain((0..k).map(|j| s[(i, j)].to_string())).collect::<Vec<_>>()),
    )?;
    write_json(&dir.join("communities.json"), &partition)?;
    write_json(&dir.join("polarity.json"), &polarity)?;
    ctx.finish(Stage::Graph, &[Stage::Ingest, Stage::Fit], BTreeMap::new())
}
