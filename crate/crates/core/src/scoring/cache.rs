//! Prediction cache: JSON lines, a header line followed by one
//! [`Prediction`] per line.
//!
//! While a run is in progress completed batches are appended as a journal, so
//! an interrupted run resumes where it stopped. On completion the file is
//! rewritten in query order, which makes it byte-identical across runs.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Prediction, ScoringError};
use crate::corpus::format::write_atomic;

pub const CACHE_FORMAT: &str = "factcons-predictions/1";

/// Everything that must match for cached predictions to be reusable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format: String,
    pub endpoint: String,
    pub seed: u64,
    pub n_passages: usize,
    pub want_retrieval: bool,
    pub dataset_digest: String,
    /// Extra run context, e.g. the intervention plan digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl CacheHeader {
    pub fn new(
        endpoint: impl Into<String>,
        seed: u64,
        n_passages: usize,
        want_retrieval: bool,
        dataset_digest: impl Into<String>,
    ) -> Self {
        Self {
            format: CACHE_FORMAT.to_string(),
            endpoint: endpoint.into(),
            seed,
            n_passages,
            want_retrieval,
            dataset_digest: dataset_digest.into(),
            context: None,
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    /// Describes the first field that differs from `expected`.
    pub fn mismatch(&self, expected: &CacheHeader) -> Option<String> {
        let fields: [(&str, String, String); 7] = [
            ("format", self.format.clone(), expected.format.clone()),
            ("endpoint", self.endpoint.clone(), expected.endpoint.clone()),
            ("seed", self.seed.to_string(), expected.seed.to_string()),
            ("n_passages", self.n_passages.to_string(), expected.n_passages.to_string()),
            (
                "want_retrieval",
                self.want_retrieval.to_string(),
                expected.want_retrieval.to_string(),
            ),
            ("dataset_digest", self.dataset_digest.clone(), expected.dataset_digest.clone()),
            (
                "context",
                format!("{:?}", self.context),
                format!("{:?}", expected.context),
            ),
        ];
        fields
            .into_iter()
            .find(|(_, have, want)| have != want)
            .map(|(name, have, want)| format!("{name} is {have:?}, expected {want:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct CacheContents {
    pub header: CacheHeader,
    pub predictions: Vec<Prediction>,
}

fn cache_err(path: &Path, message: impl Into<String>) -> ScoringError {
    ScoringError::Cache {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a cache file. `Ok(None)` if it does not exist.
///
/// A torn final line (an interrupted journal append) is ignored; a malformed
/// line anywhere else is an error.
pub fn read_cache(path: &Path) -> Result<Option<CacheContents>, ScoringError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(cache_err(path, e.to_string())),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let Some((first, rest)) = lines.split_first() else {
        return Err(cache_err(path, "empty cache file"));
    };
    let header: CacheHeader = serde_json::from_str(first)
        .map_err(|e| cache_err(path, format!("line 1: bad header: {e}")))?;
    let mut predictions = Vec::with_capacity(rest.len());
    for (i, line) in rest.iter().enumerate() {
        match serde_json::from_str::<Prediction>(line) {
            Ok(p) => predictions.push(p),
            Err(_) if !complete && i + 1 == rest.len() => {
                log::warn!("{}: ignoring torn final line", path.display());
            }
            Err(e) => return Err(cache_err(path, format!("line {}: {e}", i + 2))),
        }
    }
    Ok(Some(CacheContents {
        header,
        predictions,
    }))
}

/// Canonical cache bytes: header line then predictions in the given order.
pub fn encode_cache(header: &CacheHeader, predictions: &[Prediction]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_cache(path: &Path, header: &CacheHeader, predictions: &[Prediction]) -> Result<(), ScoringError> {
    write_atomic(path, encode_cache(header, predictions).as_bytes()).map_err(|e| cache_err(path, e.to_string()))
}

/// Append-only journal of completed batches.
pub struct Journal {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Journal {
    /// Opens `path` for appending, writing `header` first if the file is new.
    pub fn open(path: &Path, header: &CacheHeader) -> Result<Self, ScoringError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| cache_err(path, e.to_string()))?;
        }
        let fresh = !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| cache_err(path, e.to_string()))?;
        let mut journal = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        if fresh {
            let line = serde_json::to_string(header).expect("header serializes");
            journal.write_line(&line)?;
        }
        Ok(journal)
    }

    fn write_line(&mut self, line: &str) -> Result<(), ScoringError> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| cache_err(&self.path, e.to_string()))
    }

    pub fn append(&mut self, predictions: &[Prediction]) -> Result<(), ScoringError> {
        let mut buf = String::new();
        for p in predictions {
            buf.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            buf.push('\n');
        }
        self.out
            .write_all(buf.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| cache_err(&self.path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QueryKey;

    fn prediction(i: usize) -> Prediction {
        Prediction {
            query: QueryKey {
                relation_id: "R".into(),
                subject: format!("s{i}"),
                template_index: 0,
            },
            chosen: "a".into(),
            scores: vec![0.0, -1.25],
            passages: None,
            query_embedding: None,
            free_generation: None,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let h = CacheHeader::new("mock:oracle", 1, 20, false, "abc");
        let ps: Vec<_> = (0..3).map(prediction).collect();
        write_cache(&path, &h, &ps).unwrap();
        let c = read_cache(&path).unwrap().unwrap();
        assert_eq!(c.header, h);
        assert_eq!(c.predictions, ps);
    }

    #[test]
    fn torn_tail_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let h = CacheHeader::new("mock:oracle", 1, 20, false, "abc");
        let mut text = encode_cache(&h, &[prediction(0)]);
        text.push_str("{\"query\":{\"rel");
        fs::write(&path, text).unwrap();
        assert_eq!(read_cache(&path).unwrap().unwrap().predictions.len(), 1);
    }

    #[test]
    fn corrupt_middle_line_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let h = CacheHeader::new("mock:oracle", 1, 20, false, "abc");
        let text = format!("{}garbage\n{}", encode_cache(&h, &[]), serde_json::to_string(&prediction(1)).unwrap() + "\n");
        fs::write(&path, text).unwrap();
        assert!(read_cache(&path).is_err());
    }

    #[test]
    fn missing_file_is_none() {
        assert!(read_cache(Path::new("/nonexistent/cache.jsonl")).unwrap().is_none());
    }

    #[test]
    fn mismatch_names_field() {
        let a = CacheHeader::new("mock:oracle", 1, 20, false, "abc");
        let mut b = a.clone();
        assert_eq!(a.mismatch(&b), None);
        b.seed = 2;
        assert!(a.mismatch(&b).unwrap().starts_with("seed"));
    }
}
