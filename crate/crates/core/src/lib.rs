//! Quantitative satisfaction insights from free-text service reviews.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`]: review/metadata ingestion, enrichment and the pruned
//!   bag-of-words corpus (Porter stemming, stopwords, frequency pruning).
//! * [`lda`]: latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//! * [`selection`]: UMass coherence, FREX exclusivity and topic-count sweeps.
//! * [`topic_graph`]: prevalence, Hellinger similarity, Louvain communities,
//!   polarity labelling and graph export.
//! * [`forest`]: random-forest rating classifiers with OOB evaluation.
//! * [`linreg`]: OLS and coordinate-descent lasso with cross-validation.
//! * [`panel`]: CCG x month aggregation and two-way fixed-effects regression.
//! * [`review_cluster`]: k-means over topic proportions, Hellinger matrices
//!   and TF-IDF cluster labels.
//!
//! [`synth`] generates seeded synthetic corpora and review tables for tests
//! and demos.

pub mod corpus;
pub mod error;
pub mod forest;
pub mod lda;
pub mod linreg;
pub mod panel;
pub mod review_cluster;
pub mod selection;
pub mod synth;
pub mod topic_graph;

mod util;

pub use error::{Error, Result};
