mod analysis;
mod report;
mod topics;

pub use analysis::{cluster, link, panel};
pub use report::report;
pub use topics::{fit, graph, ingest, sweep};

use reviewlens_core::lda::LdaModel;

/// Short human label for a topic: its three most probable terms.
pub(crate) fn topic_label(model: &LdaModel, topic: usize) -> String {
    model
        .top_words(topic, 3)
        .into_iter()
        .map(|(w, _)| w)
        .collect::<Vec<_>>()
        .join(" ")
}
