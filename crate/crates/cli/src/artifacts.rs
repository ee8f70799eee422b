//! Stage directories, manifests and the readers for persisted artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use reviewlens_core::corpus::{read_enriched, BagCorpus, EnrichedReview, Vocabulary};
use reviewlens_core::lda::LdaModel;
use reviewlens_core::topic_graph::PolarityReport;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Sweep,
    Fit,
    Graph,
    Link,
    Panel,
    Cluster,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sweep => "sweep",
            Stage::Fit => "fit",
            Stage::Graph => "graph",
            Stage::Link => "link",
            Stage::Panel => "panel",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub artifact_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of each upstream stage's manifest.
    pub upstream: BTreeMap<String, String>,
    /// SHA-256 of external input files (ingest only).
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file the stage wrote, keyed by path relative to the
    /// stage directory.
    pub files: BTreeMap<String, String>,
}

/// Everything a stage needs: resolved configuration and output root.
pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
}

impl Ctx {
    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.dir(stage).join(MANIFEST).is_file()
    }

    /// Fails with exit status 2 unless `stage` has completed.
    pub fn require(&self, stage: Stage, by: Stage) -> Result<(), CliError> {
        if self.has(stage) {
            Ok(())
        } else {
            Err(CliError::MissingUpstream { stage: by.name(), needs: stage.name() })
        }
    }

    /// Clears the stage directory so no stale artifact survives a rerun.
    pub fn begin(&self, stage: Stage) -> Result<PathBuf, CliError> {
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Hashes the stage's files and writes its manifest last, marking the
    /// stage complete.
    pub fn finish(
        &self,
        stage: Stage,
        upstream: &[Stage],
        inputs: BTreeMap<String, String>,
    ) -> Result<(), CliError> {
        let dir = self.dir(stage);
        let mut files = BTreeMap::new();
        collect_files(&dir, &dir, &mut files)?;
        let mut up = BTreeMap::new();
        for s in upstream {
            if self.has(*s) {
                up.insert(s.name().to_owned(), sha256_file(&self.dir(*s).join(MANIFEST))?);
            }
        }
        let manifest = Manifest {
            stage: stage.name().to_owned(),
            artifact_version: ARTIFACT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: self.cfg.fingerprint(),
            seed: self.seed(),
            upstream: up,
            inputs,
            files,
        };
        write_json(&dir.join(MANIFEST), &manifest)?;
        log::info!("{} complete", stage.name());
        Ok(())
    }

    pub fn enriched(&self) -> Result<Vec<EnrichedReview>, CliError> {
        Ok(read_enriched(&self.dir(Stage::Ingest).join("enriched.csv"))?)
    }

    pub fn corpus(&self) -> Result<BagCorpus, CliError> {
        read_json(&self.dir(Stage::Ingest).join("corpus.json"))
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, CliError> {
        let path = self.dir(Stage::Ingest).join("vocabulary.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        for row in r.deserialize::<(String, u64)>() {
            let (t, c) = row.map_err(|e| CliError::csv(&path, e))?;
            terms.push(t);
            counts.push(c);
        }
        Ok(Vocabulary::new(terms, counts))
    }

    pub fn model(&self) -> Result<LdaModel, CliError> {
        Ok(LdaModel::load(&self.dir(Stage::Fit).join("model"))?)
    }

    pub fn polarity(&self) -> Result<PolarityReport, CliError> {
        read_json(&self.dir(Stage::Graph).join("polarity.json"))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST) {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_file(&p)?);
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))? + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))
}

/// Writes a header and rows of already-formatted fields.
pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn strings<const N: usize>(names: [&str; N]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
