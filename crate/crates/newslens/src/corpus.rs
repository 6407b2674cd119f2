//! Corpus manifest loading and run persistence.
//!
//! A corpus is a JSON manifest (an array of article entries) next to plain
//! UTF-8 body files. A persisted run is a directory holding `run.json` (the
//! record with raw agent outputs factored out), one raw output file per
//! stage under `raw/<agent>/<article_id>.txt`, and `digest.txt` with the
//! record's comparison digest.
//!
//! The comparison digest covers the canonicalized record minus `run_id` and
//! `timestamp`, so two runs over the same inputs with the same outputs are
//! digest-equal no matter when they ran. Any edit to the persisted files
//! surfaces as a digest mismatch at load time.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::digest::{canonical_json, sha256_hex};
use crate::domain::{
    Article, FramingGroup, FramingLabel, FramingSubtype, RunRecord,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: io::Error,
    },
    #[error("manifest is not valid: {0}")]
    ManifestFormat(String),
    #[error("article body file missing: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate article id: {0}")]
    DuplicateId(String),
    #[error("article {0} has an empty body")]
    EmptyBody(String),
    #[error("article {id} has unknown framing label: {value}")]
    UnknownFramingGroup { id: String, value: String },
    #[error("run directory already exists: {0}")]
    RunDirExists(PathBuf),
    #[error("corrupt run record at {path}: {detail}")]
    CorruptRecord { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    outlet: String,
    framing: ManifestFraming,
    topic: String,
    source_path: String,
}

#[derive(Debug, Deserialize)]
struct ManifestFraming {
    group: String,
    #[serde(default)]
    subtype: Option<String>,
}

fn parse_group(id: &str, value: &str) -> Result<FramingGroup, CorpusError> {
    match value {
        "progressive" => Ok(FramingGroup::Progressive),
        "conservative" => Ok(FramingGroup::Conservative),
        "center" => Ok(FramingGroup::Center),
        _ => Err(CorpusError::UnknownFramingGroup {
            id: id.to_string(),
            value: value.to_string(),
        }),
    }
}

fn parse_subtype(id: &str, value: &str) -> Result<FramingSubtype, CorpusError> {
    match value {
        "left" => Ok(FramingSubtype::Left),
        "left-center" => Ok(FramingSubtype::LeftCenter),
        "right-center" => Ok(FramingSubtype::RightCenter),
        "right" => Ok(FramingSubtype::Right),
        _ => Err(CorpusError::UnknownFramingGroup {
            id: id.to_string(),
            value: value.to_string(),
        }),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Loads a corpus manifest and every referenced article body.
///
/// `source_path` entries resolve relative to the manifest's directory.
/// Article ids are restricted to `[A-Za-z0-9._-]` because they become file
/// names in run directories and fixture sets.
pub fn load_manifest(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| CorpusError::ManifestFormat(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = BTreeSet::new();
    let mut articles = Vec::with_capacity(entries.len());
    for entry in entries {
        if !valid_id(&entry.id) {
            return Err(CorpusError::ManifestFormat(format!(
                "article id {:?} contains characters outside [A-Za-z0-9._-]",
                entry.id
            )));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        let group = parse_group(&entry.id, &entry.framing.group)?;
        let subtype = entry
            .framing
            .subtype
            .as_deref()
            .map(|s| parse_subtype(&entry.id, s))
            .transpose()?;

        let body_path = base.join(&entry.source_path);
        if !body_path.is_file() {
            return Err(CorpusError::MissingFile(body_path));
        }
        let body = fs::read_to_string(&body_path).map_err(io_err(&body_path))?;
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyBody(entry.id));
        }

        articles.push(Article {
            id: entry.id,
            outlet: entry.outlet,
            framing: FramingLabel { group, subtype },
            topic: entry.topic,
            body,
            source_path: entry.source_path,
        });
    }
    Ok(articles)
}

/// Digest of a run record excluding `run_id` and `timestamp`: two runs with
/// identical inputs, outputs, and configuration compare equal.
pub fn comparison_digest(run: &RunRecord) -> String {
    let mut value = serde_json::to_value(run).expect("run record serializes");
    if let Value::Object(map) = &mut value {
        map.remove("run_id");
        map.remove("timestamp");
    }
    sha256_hex(canonical_json(&value).as_bytes())
}

/// Persists a run as a new directory `<dir>/<run_id>`. Raw agent outputs go
/// to individual files under `raw/`; `run.json` holds everything else;
/// `digest.txt` holds the comparison digest. Run directories are
/// write-once: an existing directory for the same run id is an error.
pub fn persist_run(run: &RunRecord, dir: &Path) -> Result<PathBuf, CorpusError> {
    let run_dir = dir.join(&run.run_id);
    if run_dir.exists() {
        return Err(CorpusError::RunDirExists(run_dir));
    }
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;

    let mut stripped = run.clone();
    for state in &mut stripped.states {
        for outcome in state.outcomes.values_mut() {
            let agent_dir = run_dir.join("raw").join(outcome.agent.slug());
            fs::create_dir_all(&agent_dir).map_err(io_err(&agent_dir))?;
            let raw_path = agent_dir.join(format!("{}.txt", state.article.id));
            fs::write(&raw_path, &outcome.raw_text).map_err(io_err(&raw_path))?;
            outcome.raw_text = String::new();
        }
    }

    let json_path = run_dir.join("run.json");
    let json = serde_json::to_string_pretty(&stripped).expect("run record serializes");
    fs::write(&json_path, json).map_err(io_err(&json_path))?;

    let digest_path = run_dir.join("digest.txt");
    fs::write(&digest_path, comparison_digest(run)).map_err(io_err(&digest_path))?;

    Ok(run_dir)
}

/// Loads a persisted run, reattaches raw outputs, and verifies the stored
/// comparison digest. Any mismatch (edited metrics, edited raw output,
/// missing raw file) is reported as a corrupt record.
pub fn load_run(run_dir: &Path) -> Result<RunRecord, CorpusError> {
    let json_path = run_dir.join("run.json");
    let text = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
    let mut run: RunRecord = serde_json::from_str(&text).map_err(|e| CorpusError::CorruptRecord {
        path: json_path.clone(),
        detail: format!("run.json does not parse: {e}"),
    })?;

    for state in &mut run.states {
        for outcome in state.outcomes.values_mut() {
            let raw_path = run_dir
                .join("raw")
                .join(outcome.agent.slug())
                .join(format!("{}.txt", state.article.id));
            outcome.raw_text = fs::read_to_string(&raw_path).map_err(|e| {
                if e.kind() == io::ErrorKind::NotFound {
                    CorpusError::CorruptRecord {
                        path: raw_path.clone(),
                        detail: "raw output file missing".into(),
                    }
                } else {
                    io_err(&raw_path)(e)
                }
            })?;
        }
    }

    let digest_path = run_dir.join("digest.txt");
    let stored = fs::read_to_string(&digest_path)
        .map_err(io_err(&digest_path))?
        .trim()
        .to_string();
    let actual = comparison_digest(&run);
    if stored != actual {
        return Err(CorpusError::CorruptRecord {
            path: run_dir.to_path_buf(),
            detail: format!("digest mismatch: stored {stored}, computed {actual}"),
        });
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::domain::{PipelineConfig, PipelineVariant};
    use crate::pipeline::PipelineRunner;
    use std::collections::BTreeMap;

    fn write_corpus(dir: &Path, entries: &str, bodies: &[(&str, &str)]) -> PathBuf {
        for (name, text) in bodies {
            let path = dir.join(name);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, text).unwrap();
        }
        let manifest = dir.join("manifest.json");
        fs::write(&manifest, entries).unwrap();
        manifest
    }

    #[test]
    fn loads_manifest_with_subtypes() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(
            dir.path(),
            r#"[
                {"id":"a1","outlet":"wsj","framing":{"group":"conservative","subtype":"right-center"},"topic":"ukraine","source_path":"articles/a1.txt"},
                {"id":"a2","outlet":"ndtv","framing":{"group":"center"},"topic":"kashmir","source_path":"articles/a2.txt"}
            ]"#,
            &[
                ("articles/a1.txt", "Body one."),
                ("articles/a2.txt", "Body two."),
            ],
        );
        let articles = load_manifest(&manifest).unwrap();
        assert_eq!(articles.len(), 2);
        assert_eq!(articles[0].framing.group, FramingGroup::Conservative);
        assert_eq!(
            articles[0].framing.subtype,
            Some(FramingSubtype::RightCenter)
        );
        assert_eq!(articles[1].framing.subtype, None);
        assert_eq!(articles[1].body, "Body two.");
    }

    #[test]
    fn rejects_unknown_framing_group() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(
            dir.path(),
            r#"[{"id":"a1","outlet":"o","framing":{"group":"centrist"},"topic":"t","source_path":"a1.txt"}]"#,
            &[("a1.txt", "Body.")],
        );
        let err = load_manifest(&manifest).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::UnknownFramingGroup { value, .. } if value == "centrist"
        ));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(
            dir.path(),
            r#"[
                {"id":"a1","outlet":"o","framing":{"group":"center"},"topic":"t","source_path":"a1.txt"},
                {"id":"a1","outlet":"o","framing":{"group":"center"},"topic":"t","source_path":"a1.txt"}
            ]"#,
            &[("a1.txt", "Body.")],
        );
        assert!(matches!(
            load_manifest(&manifest).unwrap_err(),
            CorpusError::DuplicateId(id) if id == "a1"
        ));
    }

    #[test]
    fn rejects_empty_body_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(
            dir.path(),
            r#"[{"id":"a1","outlet":"o","framing":{"group":"center"},"topic":"t","source_path":"a1.txt"}]"#,
            &[("a1.txt", "   \n")],
        );
        assert!(matches!(
            load_manifest(&manifest).unwrap_err(),
            CorpusError::EmptyBody(id) if id == "a1"
        ));

        let manifest2 = write_corpus(
            dir.path(),
            r#"[{"id":"a2","outlet":"o","framing":{"group":"center"},"topic":"t","source_path":"nope.txt"}]"#,
            &[],
        );
        assert!(matches!(
            load_manifest(&manifest2).unwrap_err(),
            CorpusError::MissingFile(_)
        ));
    }

    #[test]
    fn rejects_hostile_article_ids() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(
            dir.path(),
            r#"[{"id":"../evil","outlet":"o","framing":{"group":"center"},"topic":"t","source_path":"a1.txt"}]"#,
            &[("a1.txt", "Body.")],
        );
        assert!(matches!(
            load_manifest(&manifest).unwrap_err(),
            CorpusError::ManifestFormat(_)
        ));
    }

    fn sample_run() -> RunRecord {
        let mut fixtures = BTreeMap::new();
        fixtures.insert(
            "fact_verifier/a1".to_string(),
            r#"{"verified_core_events":["e"],"contested_claims":[],"structural_omissions":[]}"#
                .to_string(),
        );
        fixtures.insert(
            "progressive_analyst/a1".to_string(),
            r#"{"ideological_framing":"left view","linguistic_markers":[],"left_omissions":[],"adversarial_critique":"c"}"#
                .to_string(),
        );
        fixtures.insert(
            "conservative_analyst/a1".to_string(),
            r#"{"ideological_framing":"right view","linguistic_markers":[],"right_omissions":[],"adversarial_critique":"c"}"#
                .to_string(),
        );
        fixtures.insert(
            "propaganda_detector/a1".to_string(),
            r#"{"manipulation_index":0.5,"detected_techniques":[]}"#.to_string(),
        );
        fixtures.insert(
            "neutral_summarizer/a1".to_string(),
            r#"{"consensus_reality":"cr","battleground_of_spin":{"left_interpretation":"l","right_interpretation":"r"},"de_biased_summary":"s","omission_map":{"left_missing":[],"right_missing":[],"both_missing":[]},"media_literacy_takeaway":"t"}"#
                .to_string(),
        );
        let backend = ScriptedBackend::from_fixtures(fixtures);
        let runner = PipelineRunner::new(&backend, "model", PipelineConfig::default());
        let article = Article {
            id: "a1".into(),
            outlet: "outlet".into(),
            framing: FramingLabel {
                group: FramingGroup::Center,
                subtype: None,
            },
            topic: "topic".into(),
            body: "Body text.".into(),
            source_path: "articles/a1.txt".into(),
        };
        runner.run_batch(&[article]).unwrap()
    }

    #[test]
    fn persist_load_round_trip_preserves_everything() {
        let run = sample_run();
        let dir = tempfile::tempdir().unwrap();
        let run_dir = persist_run(&run, dir.path()).unwrap();
        assert!(run_dir.join("run.json").is_file());
        assert!(run_dir
            .join("raw/fact_verifier/a1.txt")
            .is_file());

        let loaded = load_run(&run_dir).unwrap();
        assert_eq!(loaded, run);
        assert_eq!(comparison_digest(&loaded), comparison_digest(&run));
    }

    #[test]
    fn run_directories_are_write_once() {
        let run = sample_run();
        let dir = tempfile::tempdir().unwrap();
        persist_run(&run, dir.path()).unwrap();
        assert!(matches!(
            persist_run(&run, dir.path()).unwrap_err(),
            CorpusError::RunDirExists(_)
        ));
    }

    #[test]
    fn variant_affects_comparison_digest() {
        let mut run = sample_run();
        let base = comparison_digest(&run);
        run.variant = PipelineVariant::AblatedNoPropaganda;
        assert_ne!(comparison_digest(&run), base);
    }

    #[test]
    fn run_id_and_timestamp_do_not_affect_digest() {
        let mut run = sample_run();
        let base = comparison_digest(&run);
        run.run_id = "different".into();
        run.timestamp = "2000-01-01T00:00:00Z".into();
        assert_eq!(comparison_digest(&run), base);
    }

    #[test]
    fn tampered_raw_output_is_detected() {
        let run = sample_run();
        let dir = tempfile::tempdir().unwrap();
        let run_dir = persist_run(&run, dir.path()).unwrap();
        let raw = run_dir.join("raw/propaganda_detector/a1.txt");
        fs::write(&raw, r#"{"manipulation_index":0.9,"detected_techniques":[]}"#).unwrap();
        assert!(matches!(
            load_run(&run_dir).unwrap_err(),
            CorpusError::CorruptRecord { .. }
        ));
    }

    #[test]
    fn tampered_metrics_are_detected() {
        let run = sample_run();
        let dir = tempfile::tempdir().unwrap();
        let run_dir = persist_run(&run, dir.path()).unwrap();
        let json_path = run_dir.join("run.json");
        let text = fs::read_to_string(&json_path).unwrap();
        fs::write(&json_path, text.replace("0.5", "0.9")).unwrap();
        assert!(matches!(
            load_run(&run_dir).unwrap_err(),
            CorpusError::CorruptRecord { .. }
        ));
    }

    #[test]
    fn missing_raw_file_is_detected() {
        let run = sample_run();
        let dir = tempfile::tempdir().unwrap();
        let run_dir = persist_run(&run, dir.path()).unwrap();
        fs::remove_file(run_dir.join("raw/neutral_summarizer/a1.txt")).unwrap();
        assert!(matches!(
            load_run(&run_dir).unwrap_err(),
            CorpusError::CorruptRecord { .. }
        ));
    }
}
