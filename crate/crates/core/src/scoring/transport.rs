//! Out-of-process scorers: a child process speaking JSON lines over stdio, and
//! an HTTP service taking one POST per batch.
//!
//! Both use the same framing: one `ScoreRequest` JSON object per line in, one
//! `ScoreResponse` JSON object per line out.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use super::{ScoreRequest, ScoreResponse, Scorer, ScoringError};

/// Serializes a batch as newline-terminated JSON lines.
pub fn encode_requests(requests: &[ScoreRequest]) -> String {
    let mut body = String::new();
    for r in requests {
        body.push_str(&serde_json::to_string(r).expect("request serializes"));
        body.push('\n');
    }
    body
}

/// Parses one response line. On failure the error names the request id from
/// the line if it can be recovered, else `fallback_id`.
pub fn decode_response(line: &str, fallback_id: &str) -> Result<ScoreResponse, ScoringError> {
    serde_json::from_str::<ScoreResponse>(line).map_err(|e| {
        let id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("request_id").and_then(|i| i.as_str()).map(str::to_string))
            .unwrap_or_else(|| fallback_id.to_string());
        ScoringError::protocol(id, format!("malformed response line: {e}"))
    })
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for ChildIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Runs `sh -c <command>` once and keeps it alive across batches.
///
/// Batches are serialized through one child; a transport failure kills the
/// child and the next batch respawns it.
pub struct ExecScorer {
    command: String,
    io: Mutex<Option<ChildIo>>,
}

impl ExecScorer {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            io: Mutex::new(None),
        }
    }

    fn spawn(&self) -> Result<ChildIo, ScoringError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoringError::Transport(format!("cannot spawn {:?}: {e}", self.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ChildIo {
            child,
            stdin,
            stdout,
        })
    }

    fn exchange(io: &mut ChildIo, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
        let body = encode_requests(requests);
        let ChildIo {
            child,
            stdin,
            stdout,
        } = io;
        // Write on a separate thread so a child that answers line by line
        // cannot deadlock against a full pipe.
        std::thread::scope(|scope| {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                stdin.write_all(body.as_bytes())?;
                stdin.flush()
            });
            let mut read = || -> Result<Vec<ScoreResponse>, ScoringError> {
                let mut out = Vec::with_capacity(requests.len());
                let mut line = String::new();
                for req in requests {
                    line.clear();
                    let n = stdout
                        .read_line(&mut line)
                        .map_err(|e| ScoringError::Transport(format!("reading from scorer: {e}")))?;
                    if n == 0 {
                        return Err(ScoringError::Transport(
                            "scorer closed its output before answering every request".into(),
                        ));
                    }
                    out.push(decode_response(line.trim_end(), &req.request_id)?);
                }
                Ok(out)
            };
            let result = read();
            if result.is_err() {
                // Unblocks the writer if the child stopped reading.
                let _ = child.kill();
            }
            let written = writer.join().expect("writer thread panicked");
            let out = result?;
            written.map_err(|e| ScoringError::Transport(format!("writing to scorer: {e}")))?;
            Ok(out)
        })
    }
}

impl Scorer for ExecScorer {
    fn identity(&self) -> String {
        format!("exec:{}", self.command)
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
        let mut guard = self.io.lock().expect("scorer mutex poisoned");
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let result = Self::exchange(guard.as_mut().expect("child present"), requests);
        if result.is_err() {
            // The stream position is unknown after any failure; start over.
            *guard = None;
        }
        result
    }
}

/// POSTs each batch as a JSON-lines body and reads JSON lines back.
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: url.into(),
            agent: config.into(),
        }
    }
}

impl Scorer for HttpScorer {
    fn identity(&self) -> String {
        format!("http:{}", self.url)
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
        let first_id = requests.first().map(|r| r.request_id.as_str()).unwrap_or("");
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/x-ndjson")
            .send(encode_requests(requests))
            .map_err(|e| ScoringError::Transport(format!("POST {}: {e}", self.url)))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ScoringError::Transport(format!("reading response from {}: {e}", self.url)))?;
        if status >= 500 {
            return Err(ScoringError::Transport(format!("{} answered HTTP {status}", self.url)));
        }
        if status >= 400 {
            return Err(ScoringError::protocol(
                first_id,
                format!("{} rejected the batch with HTTP {status}: {}", self.url, body.trim()),
            ));
        }
        let lines: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != requests.len() {
            return Err(ScoringError::protocol(
                first_id,
                format!("{} responses for a batch of {}", lines.len(), requests.len()),
            ));
        }
        lines
            .iter()
            .zip(requests)
            .map(|(l, r)| decode_response(l, &r.request_id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_names_request_from_line() {
        let err = decode_response(r#"{"request_id":"P1:0:x","scores":"oops"}"#, "fallback").unwrap_err();
        assert!(matches!(err, ScoringError::Protocol { ref request_id, .. } if request_id == "P1:0:x"));
    }

    #[test]
    fn decode_falls_back_to_position() {
        let err = decode_response("not json", "P1:2:y").unwrap_err();
        assert!(matches!(err, ScoringError::Protocol { ref request_id, .. } if request_id == "P1:2:y"));
    }

    #[test]
    fn encode_is_one_line_per_request() {
        let r = ScoreRequest {
            request_id: "a".into(),
            prompt: "x\ny".into(),
            candidates: vec!["c".into()],
            want_retrieval: false,
            n_passages: 20,
            forced_passages: None,
        };
        let body = encode_requests(&[r.clone(), r]);
        assert_eq!(body.lines().count(), 2);
    }

    #[test]
    fn exec_echo_scorer() {
        // A shell scorer that answers every line with a fixed two-candidate response.
        let cmd = r#"while read -r line; do id=$(printf '%s' "$line" | sed 's/.*"request_id":"\([^"]*\)".*/\1/'); printf '{"request_id":"%s","scores":[-1.0,0.0]}\n' "$id"; done"#;
        let s = ExecScorer::new(cmd);
        let reqs: Vec<_> = (0..3)
            .map(|i| ScoreRequest {
                request_id: format!("R:0:s{i}"),
                prompt: "p".into(),
                candidates: vec!["a".into(), "b".into()],
                want_retrieval: false,
                n_passages: 20,
                forced_passages: None,
            })
            .collect();
        let out = s.score_batch(&reqs).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].request_id, "R:0:s2");
        // Child is reused for the next batch.
        assert_eq!(s.score_batch(&reqs[..1]).unwrap().len(), 1);
    }

    #[test]
    fn exec_dead_child_is_transport_error() {
        let s = ExecScorer::new("exit 0");
        let req = ScoreRequest {
            request_id: "R:0:s".into(),
            prompt: "p".into(),
            candidates: vec!["a".into()],
            want_retrieval: false,
            n_passages: 20,
            forced_passages: None,
        };
        assert!(matches!(s.score_batch(&[req]), Err(ScoringError::Transport(_))));
    }
}
