//! Pipeline configuration: one JSON document, overridable from flags and the
//! `REVIEWLENS_SEED` environment variable.

use std::path::{Path, PathBuf};

use reviewlens_core::corpus::{stopwords, ColumnMapping, PreprocessConfig, StemmerKind};
use reviewlens_core::forest::ForestConfig;
use reviewlens_core::lda::LdaSettings;
use reviewlens_core::linreg::Estimator;
use reviewlens_core::panel::SeKind;
use reviewlens_core::review_cluster::KmeansConfig;
use reviewlens_core::selection::SweepConfig;
use reviewlens_core::topic_graph::ExportFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub reviews: PathBuf,
    pub register: PathBuf,
    pub imd: PathBuf,
    pub ccg: PathBuf,
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub min_token_len: usize,
    pub min_corpus_count: u64,
    pub max_corpus_count: u64,
    /// One stopword per line; the built-in English list when absent.
    pub stopwords_file: Option<PathBuf>,
    pub stemmer: StemmerKind,
}

impl Default for Preprocess {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        Preprocess {
            min_token_len: d.min_token_len,
            min_corpus_count: d.min_corpus_count,
            max_corpus_count: d.max_corpus_count,
            stopwords_file: None,
            stemmer: d.stemmer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
    pub top_m: usize,
    pub frex_weight: f64,
    pub lda: LdaSettings,
}

impl Default for Sweep {
    fn default() -> Self {
        let d = SweepConfig::default();
        Sweep { k_min: d.k_min, k_max: d.k_max, step: d.step, top_m: d.top_m, frex_weight: d.frex_weight, lda: d.lda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topics {
    /// Fixed topic count; skips the dependency on `sweep`.
    pub k: Option<usize>,
    pub lda: LdaSettings,
    pub top_words: usize,
    pub representative_reviews: usize,
}

impl Default for Topics {
    fn default() -> Self {
        Topics { k: None, lda: LdaSettings::default(), top_words: 10, representative_reviews: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Graph {
    pub edge_quantile: f64,
    pub resolution: f64,
    pub polarity_band: f64,
    pub formats: Vec<ExportFormat>,
}

impl Default for Graph {
    fn default() -> Self {
        Graph {
            edge_quantile: 0.9,
            resolution: 1.0,
            polarity_band: 0.02,
            formats: vec![ExportFormat::Graphml, ExportFormat::Csv, ExportFormat::Dot],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Forest {
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_node: usize,
}

impl Default for Forest {
    fn default() -> Self {
        let d = ForestConfig::default();
        Forest { n_trees: d.n_trees, mtry: d.mtry, min_node: d.min_node }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Linreg {
    pub folds: usize,
    pub lasso_grid: usize,
    pub lasso_ratio: f64,
    pub inner_folds: usize,
}

impl Default for Linreg {
    fn default() -> Self {
        Linreg { folds: 5, lasso_grid: 50, lasso_ratio: 1e-3, inner_folds: 5 }
    }
}

impl Linreg {
    pub fn lasso(&self) -> Estimator {
        Estimator::Lasso { grid: self.lasso_grid, ratio: self.lasso_ratio, inner_folds: self.inner_folds }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Panel {
    pub se: SeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cluster {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub top_terms: usize,
}

impl Default for Cluster {
    fn default() -> Self {
        let d = KmeansConfig::default();
        Cluster { k: d.k, restarts: d.restarts, max_iters: d.max_iters, top_terms: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub inputs: Inputs,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub preprocess: Preprocess,
    pub sweep: Sweep,
    pub topics: Topics,
    pub graph: Graph,
    pub forest: Forest,
    pub linreg: Linreg,
    pub panel: Panel,
    pub cluster: Cluster,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            inputs: Inputs::default(),
            output_dir: PathBuf::from("reviewlens-out"),
            seed: 0,
            threads: None,
            preprocess: Preprocess::default(),
            sweep: Sweep::default(),
            topics: Topics::default(),
            graph: Graph::default(),
            forest: Forest::default(),
            linreg: Linreg::default(),
            panel: Panel::default(),
            cluster: Cluster::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.inputs.reviews,
            &mut cfg.inputs.register,
            &mut cfg.inputs.imd,
            &mut cfg.inputs.ccg,
            &mut cfg.output_dir,
        ] {
            resolve(base, p);
        }
        if let Some(p) = cfg.preprocess.stopwords_file.as_mut() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Hash of every setting that can change results. Paths and the thread
    /// count are excluded; input contents are hashed by `ingest` instead.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.inputs.reviews = PathBuf::new();
        c.inputs.register = PathBuf::new();
        c.inputs.imd = PathBuf::new();
        c.inputs.ccg = PathBuf::new();
        c.output_dir = PathBuf::new();
        c.threads = None;
        c.preprocess.stopwords_file = None;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig, CliError> {
        let p = &self.preprocess;
        let stopwords = match &p.stopwords_file {
            Some(path) => stopwords::load(path)
                .map_err(|e| CliError::Usage(format!("cannot read stopwords {}: {e}", path.display())))?,
            None => stopwords::english(),
        };
        Ok(PreprocessConfig {
            min_token_len: p.min_token_len,
            min_corpus_count: p.min_corpus_count,
            max_corpus_count: p.max_corpus_count,
            stopwords,
            stemmer: p.stemmer,
        })
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let s = &self.sweep;
        SweepConfig {
            k_min: s.k_min,
            k_max: s.k_max,
            step: s.step,
            lda: s.lda,
            top_m: s.top_m,
            frex_weight: s.frex_weight,
            base_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.sweep_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.topics.k == Some(0) {
            return bad("topics.k must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.graph.edge_quantile) {
            return bad(format!("graph.edge_quantile must lie in [0, 1), got {}", self.graph.edge_quantile));
        }
        if self.forest.n_trees == 0 || self.forest.min_node == 0 {
            return bad("forest.n_trees and forest.min_node must be at least 1".into());
        }
        if self.linreg.folds < 2 || self.linreg.inner_folds < 2 || self.linreg.lasso_grid == 0 {
            return bad("linreg folds must be >= 2 and lasso_grid >= 1".into());
        }
        if self.cluster.k == 0 || self.cluster.restarts == 0 {
            return bad("cluster.k and cluster.restarts must be at least 1".into());
        }
        Ok(())
    }
}
