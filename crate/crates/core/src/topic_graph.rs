//! Topic prevalence, Hellinger similarity between topics, the thresholded
//! topic graph, Louvain communities, rating polarity and graph export.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BagCorpus;
use crate::lda::LdaModel;
use crate::review_cluster::hellinger;
use crate::util::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            _ => Err(Error::Parse(format!("unknown polarity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: usize,
    pub label: String,
    pub prevalence: f64,
    pub community: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Undirected weighted topic graph. Edges have `source < target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicGraph {
    pub nodes: Vec<TopicNode>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community of each node, densely numbered in order of first appearance.
    pub membership: Vec<usize>,
    pub modularity: f64,
}

impl CommunityPartition {
    pub fn num_communities(&self) -> usize {
        self.membership.iter().max().map_or(0, |m| m + 1)
    }
}

/// Token-weighted share of the corpus assigned to each topic.
pub fn prevalence(model: &LdaModel, corpus: &BagCorpus) -> Result<Vec<f64>> {
    let theta = model.theta();
    if theta.nrows() != corpus.num_docs() {
        return Err(Error::DimensionMismatch { expected: theta.nrows(), found: corpus.num_docs() });
    }
    Ok(prevalence_from(theta, &corpus.doc_lengths()))
}

pub fn prevalence_from(theta: &DMatrix<f64>, doc_lengths: &[usize]) -> Vec<f64> {
    let k = theta.ncols();
    let total: usize = doc_lengths.iter().sum();
    if total == 0 {
        return vec![1.0 / k as f64; k];
    }
    let mut p = vec![0.0; k];
    for (d, &len) in doc_lengths.iter().enumerate() {
        for (t, pt) in p.iter_mut().enumerate() {
            *pt += len as f64 * theta[(d, t)];
        }
    }
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

/// `S[i][j] = 1 - Hellinger(phi_i, phi_j)`, with an exact unit diagonal.
pub fn similarity_matrix(model: &LdaModel) -> DMatrix<f64> {
    similarity_from_phi(model.phi())
}

pub fn similarity_from_phi(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let k = phi.nrows();
    let rows: Vec<Vec<f64>> = phi.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut s = DMatrix::identity(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let h = hellinger(&rows[i], &rows[j]).expect("rows share a length");
            let v = (1.0 - h).clamp(0.0, 1.0);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Linear-interpolation quantile of sorted data (the common "type 7"
/// definition).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Keeps the edges whose similarity is strictly above the `edge_quantile`
/// quantile of all off-diagonal similarities. `edge_quantile = 0` keeps
/// every pair with positive similarity.
pub fn build_graph(s: &DMatrix<f64>, prevalence: &[f64], edge_quantile: f64) -> Result<TopicGraph> {
    let k = s.nrows();
    if s.ncols() != k || prevalence.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: prevalence.len() });
    }
    if !(0.0..1.0).contains(&edge_quantile) {
        return Err(Error::InvalidConfig(format!("edge_quantile must lie in [0, 1), got {edge_quantile}")));
    }
    let mut off: Vec<f64> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).map(|(i, j)| s[(i, j)]).collect();
    off.sort_by(f64::total_cmp);
    let threshold = if edge_quantile == 0.0 || off.is_empty() { 0.0 } else { quantile(&off, edge_quantile) };
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let w = s[(i, j)];
            if w > threshold && w > 0.0 {
                edges.push(Edge { source: i, target: j, weight: w });
            }
        }
    }
    if edges.is_empty() && k > 1 {
        log::warn!("no topic pair exceeds the similarity threshold {threshold}; graph has no edges");
    }
    let nodes = (0..k)
        .map(|id| TopicNode {
            id,
            label: format!("topic{}", id + 1),
            prevalence: prevalence[id],
            community: id,
            polarity: Polarity::Neutral,
        })
        .collect();
    Ok(TopicGraph { nodes, edges })
}

impl TopicGraph {
    /// Dense symmetric adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let mut a = vec![vec![0.0; n]; n];
        for e in &self.edges {
            a[e.source][e.target] += e.weight;
            a[e.target][e.source] += e.weight;
        }
        a
    }

    pub fn apply_partition(&mut self, partition: &CommunityPartition) {
        for (node, &c) in self.nodes.iter_mut().zip(&partition.membership) {
            node.community = c;
        }
    }

    pub fn apply_polarity(&mut self, topic_polarity: &[Polarity]) {
        for (node, &p) in self.nodes.iter_mut().zip(topic_polarity) {
            node.polarity = p;
        }
    }
}

/// Weighted modularity of `membership` on a dense symmetric adjacency
/// matrix (diagonal entries count twice an internal edge weight).
pub fn modularity(adjacency: &[Vec<f64>], membership: &[usize], resolution: f64) -> f64 {
    let n = adjacency.len();
    let degree: Vec<f64> = adjacency.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if membership[i] == membership[j] {
                q += adjacency[i][j] - resolution * degree[i] * degree[j] / two_m;
            }
        }
    }
    q / two_m
}

/// One local-moving pass over a (possibly aggregated) graph. Returns the
/// community of each node and whether anything moved.
fn local_moves(a: &[Vec<f64>], resolution: f64, order: &[usize]) -> (Vec<usize>, bool) {
    let n = a.len();
    let degree: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut moved_any = false;
    let mut links = vec![0.0; n];
    loop {
        let mut moved = false;
        for &i in order {
            let ci = comm[i];
            tot[ci] -= degree[i];
            links.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..n {
                if j != i && a[i][j] != 0.0 {
                    links[comm[j]] += a[i][j];
                }
            }
            let gain = |c: usize| links[c] - resolution * tot[c] * degree[i] / two_m;
            let mut best = ci;
            let mut best_gain = gain(ci);
            for c in 0..n {
                if c != ci && links[c] > 0.0 {
                    let g = gain(c);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
            }
            tot[best] += degree[i];
            if best != ci {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

fn renumber(comm: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    comm.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Node orders tried by [`louvain`].
pub const LOUVAIN_STARTS: usize = 10;

/// Two-phase Louvain community detection, best of [`LOUVAIN_STARTS`]
/// seeded node orders. Never returns a partition with lower modularity than
/// all-singletons.
pub fn louvain(graph: &TopicGraph, resolution: f64, seed: u64) -> Result<CommunityPartition> {
    louvain_multistart(graph, resolution, seed, LOUVAIN_STARTS)
}

/// Runs Louvain once per start (start `s` shuffles node visits with stream
/// `s`) and keeps the highest modularity; ties go to the earliest start.
pub fn louvain_multistart(graph: &TopicGraph, resolution: f64, seed: u64, starts: usize) -> Result<CommunityPartition> {
    let n = graph.nodes.len();
    if n == 0 {
        return Err(Error::InvalidInput("graph has no nodes".into()));
    }
    if starts == 0 {
        return Err(Error::InvalidConfig("louvain needs at least one start".into()));
    }
    let adjacency = graph.adjacency();
    let singletons: Vec<usize> = (0..n).collect();
    let q_single = modularity(&adjacency, &singletons, resolution);
    let mut best = CommunityPartition { membership: singletons, modularity: q_single };
    if graph.edges.is_empty() {
        best.modularity = 0.0;
        return Ok(best);
    }
    for s in 0..starts {
        let membership = louvain_pass(&adjacency, resolution, &mut rng(seed, s as u64));
        let q = modularity(&adjacency, &membership, resolution);
        if q > best.modularity + 1e-12 {
            best = CommunityPartition { membership, modularity: q };
        }
    }
    Ok(best)
}

fn louvain_pass(adjacency: &[Vec<f64>], resolution: f64, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..adjacency.len()).collect();
    let mut a = adjacency.to_vec();
    loop {
        let m = a.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(r);
        let (comm, moved) = local_moves(&a, resolution, &order);
        if !moved {
            break;
        }
        let comm = renumber(&comm);
        let c = comm.iter().max().map_or(0, |x| x + 1);
        membership = membership.iter().map(|&x| comm[x]).collect();
        let mut agg = vec![vec![0.0; c]; c];
        for i in 0..m {
            for j in 0..m {
                agg[comm[i]][comm[j]] += a[i][j];
            }
        }
        a = agg;
        if c == m {
            break;
        }
    }
    renumber(&membership)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityReport {
    /// Pearson correlation of each topic's proportion with the review's mean
    /// star rating.
    pub topic_correlation: Vec<f64>,
    pub community_correlation: Vec<f64>,
    pub community_polarity: Vec<Polarity>,
    /// Polarity inherited by each topic from its community.
    pub topic_polarity: Vec<Polarity>,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Labels communities positive/negative/neutral by the mean correlation of
/// their topics' proportions with review ratings. `ratings[d]` is review
/// `d`'s mean available star rating (rows without one are skipped).
pub fn assign_polarity(
    partition: &CommunityPartition,
    theta: &DMatrix<f64>,
    ratings: &[Option<f64>],
    band: f64,
) -> Result<PolarityReport> {
    let k = theta.ncols();
    if ratings.len() != theta.nrows() {
        return Err(Error::DimensionMismatch { expected: theta.nrows(), found: ratings.len() });
    }
    if partition.membership.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: partition.membership.len() });
    }
    let rows: Vec<usize> = (0..ratings.len()).filter(|&d| ratings[d].is_some()).collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rated reviews for polarity assignment".into()));
    }
    let y: Vec<f64> = rows.iter().map(|&d| ratings[d].expect("filtered")).collect();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let constant = y.iter().all(|v| *v == y_mean);
    if constant {
        log::warn!("ratings have zero variance; every community is neutral");
    }
    let topic_correlation: Vec<f64> = (0..k)
        .map(|t| {
            let x: Vec<f64> = rows.iter().map(|&d| theta[(d, t)]).collect();
            pearson(&x, &y).unwrap_or(0.0)
        })
        .collect();
    let c = partition.num_communities();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (t, &comm) in partition.membership.iter().enumerate() {
        sums[comm] += topic_correlation[t];
        counts[comm] += 1;
    }
    let community_correlation: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| s / n.max(1) as f64).collect();
    let community_polarity: Vec<Polarity> = community_correlation
        .iter()
        .map(|&r| match r {
            _ if constant => Polarity::Neutral,
            r if r > band => Polarity::Positive,
            r if r < -band => Polarity::Negative,
            _ => Polarity::Neutral,
        })
        .collect();
    let topic_polarity = partition.membership.iter().map(|&c| community_polarity[c]).collect();
    Ok(PolarityReport { topic_correlation, community_correlation, community_polarity, topic_polarity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Graphml,
    Csv,
    Dot,
}

/// Writes the graph into `dir` as `topics.graphml`, `nodes.csv` +
/// `edges.csv`, or `topics.dot`. Returns the paths written.
pub fn export(graph: &TopicGraph, format: ExportFormat, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ExportFormat::Graphml => {
            let p = dir.join("topics.graphml");
            fs::write(&p, to_graphml(graph))?;
            Ok(vec![p])
        }
        ExportFormat::Csv => {
            let (n, e) = (dir.join("nodes.csv"), dir.join("edges.csv"));
            write_csv(graph, &n, &e)?;
            Ok(vec![n, e])
        }
        ExportFormat::Dot => {
            let p = dir.join("topics.dot");
            fs::write(&p, to_dot(graph))?;
            Ok(vec![p])
        }
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn to_graphml(graph: &TopicGraph) -> String {
    let mut s = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
         \x20 <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n\
         \x20 <key id=\"prevalence\" for=\"node\" attr.name=\"prevalence\" attr.type=\"double\"/>\n\
         \x20 <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n\
         \x20 <key id=\"polarity\" for=\"node\" attr.name=\"polarity\" attr.type=\"string\"/>\n\
         \x20 <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n\
         \x20 <graph id=\"topics\" edgedefault=\"undirected\">\n",
    );
    for n in &graph.nodes {
        s += &format!(
            "    <node id=\"n{}\">\n      <data key=\"label\">{}</data>\n      <data key=\"prevalence\">{}</data>\n      <data key=\"community\">{}</data>\n      <data key=\"polarity\">{}</data>\n    </node>\n",
            n.id,
            xml_escape(&n.label),
            n.prevalence,
            n.community,
            n.polarity
        );
    }
    for e in &graph.edges {
        s += &format!(
            "    <edge source=\"n{}\" target=\"n{}\">\n      <data key=\"weight\">{}</data>\n    </edge>\n",
            e.source, e.target, e.weight
        );
    }
    s += "  </graph>\n</graphml>\n";
    s
}

fn node_index(id: &str) -> Result<usize> {
    id.strip_prefix('n')
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| Error::Parse(format!("unexpected GraphML node id `{id}`")))
}

/// Parses GraphML written by [`to_graphml`].
pub fn from_graphml(text: &str) -> Result<TopicGraph> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Parse(e.to_string()))?;
    let data = |node: roxmltree::Node<'_, '_>, key: &str| -> Result<String> {
        node.children()
            .find(|c| c.has_tag_name("data") && c.attribute("key") == Some(key))
            .map(|c| c.text().unwrap_or_default().to_owned())
            .ok_or_else(|| Error::Parse(format!("missing `{key}` data")))
    };
    let num = |s: String| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for el in doc.descendants() {
        if el.has_tag_name("node") {
            nodes.push(TopicNode {
                id: node_index(el.attribute("id").unwrap_or_default())?,
                label: data(el, "label")?,
                prevalence: num(data(el, "prevalence")?)?,
                community: data(el, "community")?.parse().map_err(|_| Error::Parse("community".into()))?,
                polarity: data(el, "polarity")?.parse()?,
            });
        } else if el.has_tag_name("edge") {
            edges.push(Edge {
                source: node_index(el.attribute("source").unwrap_or_default())?,
                target: node_index(el.attribute("target").unwrap_or_default())?,
                weight: num(data(el, "weight")?)?,
            });
        }
    }
    Ok(TopicGraph { nodes, edges })
}

pub fn write_csv(graph: &TopicGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(nodes_path)?;
    w.write_record(["id", "label", "prevalence", "community", "polarity"])?;
    for n in &graph.nodes {
        w.write_record([n.id.to_string(), n.label.clone(), n.prevalence.to_string(), n.community.to_string(), n.polarity.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(edges_path)?;
    w.write_record(["source", "target", "weight"])?;
    for e in &graph.edges {
        w.write_record([e.source.to_string(), e.target.to_string(), e.weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_dot(graph: &TopicGraph) -> String {
    let mut s = String::from("graph topics {\n");
    for n in &graph.nodes {
        s += &format!(
            "  n{} [label=\"{}\", width={:.4}, community={}, polarity={}];\n",
            n.id,
            n.label.replace('"', "\\\""),
            0.3 + 5.0 * n.prevalence.sqrt(),
            n.community,
            n.polarity
        );
    }
    for e in &graph.edges {
        s += &format!("  n{} -- n{} [weight={}, penwidth={:.4}];\n", e.source, e.target, e.weight, 0.5 + 4.5 * e.weight);
    }
    s += "}\n";
    s
}
