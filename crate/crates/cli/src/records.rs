//! File formats shared by the subcommands: trajectory files, per-candidate
//! score records, fusion records, and the append-only run records the
//! ablation runner emits (line-delimited JSON, one record per line).

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use vsf_core::{SubScores, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed records in {path} at line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

/// Trajectory file: the scenario-file trajectory schema plus an echo of
/// the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub params: serde_json::Value,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryFile {
    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| RecordError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        let text = serde_json::to_string_pretty(self).expect("trajectory file serialization");
        std::fs::write(path, text).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// One scored candidate in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub scenario_id: String,
    pub traj_index: usize,
    pub scorer_id: String,
    pub stage1: SubScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<SubScores>,
    pub epdms: f64,
}

/// Fusion outcome for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseRecord {
    pub scenario_id: String,
    pub selected_index: usize,
    pub fused: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlm: Option<VlmOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmOutcome {
    pub presented: Vec<(char, String, usize)>,
    pub fell_back: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

/// One (scenario, config) evaluation from the ablation runner. Wall time
/// is tracked in memory and reported in the timing sidecar only, keeping
/// record files byte-reproducible across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub config_name: String,
    pub selected_index: usize,
    pub stage1: SubScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<SubScores>,
    pub stage1_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_score: Option<f64>,
    pub epdms: f64,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunErrorRecord {
    pub scenario_id: String,
    pub config_name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordLine {
    Error(RunErrorRecord),
    Run(RunRecord),
}

impl RecordLine {
    pub fn config_name(&self) -> &str {
        match self {
            RecordLine::Run(r) => &r.config_name,
            RecordLine::Error(e) => &e.config_name,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RecordError> {
    let file = std::fs::File::create(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    let io_err = |source: std::io::Error| RecordError::Io {
        path: path.display().to_string(),
        source,
    };
    for item in items {
        let line = serde_json::to_string(item).expect("record serialization");
        writer.write_all(line.as_bytes()).map_err(io_err)?;
        writer.write_all(b"\n").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let file = std::fs::File::open(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_line_distinguishes_runs_and_errors() {
        let run = RecordLine::Run(RunRecord {
            scenario_id: "s1".into(),
            config_name: "oracle solo".into(),
            selected_index: 3,
            stage1: SubScores::all(1.0),
            stage2: None,
            stage1_score: 1.0,
            stage2_score: None,
            epdms: 1.0,
            wall_ms: 12.5,
        });
        let err = RecordLine::Error(RunErrorRecord {
            scenario_id: "s2".into(),
            config_name: "oracle solo".into(),
            error: "dac: missing map data".into(),
        });
        let run_json = serde_json::to_string(&run).unwrap();
        let err_json = serde_json::to_string(&err).unwrap();
        assert!(!run_json.contains("wall_ms"), "wall time must stay out of record files");
        let back_run: RecordLine = serde_json::from_str(&run_json).unwrap();
        let back_err: RecordLine = serde_json::from_str(&err_json).unwrap();
        assert!(matches!(back_run, RecordLine::Run(_)));
        assert!(matches!(back_err, RecordLine::Error(_)));
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let items = vec![
            ScoreRecord {
                scenario_id: "a".into(),
                traj_index: 0,
                scorer_id: "oracle".into(),
                stage1: SubScores::all(0.5),
                stage2: None,
                epdms: 0.5,
            },
            ScoreRecord {
                scenario_id: "a".into(),
                traj_index: 1,
                scorer_id: "oracle".into(),
                stage1: SubScores::all(1.0),
                stage2: Some(SubScores::all(1.0)),
                epdms: 1.0,
            },
        ];
        write_jsonl(&path, &items).unwrap();
        let back: Vec<ScoreRecord> = read_jsonl(&path).unwrap();
        assert_eq!(items, back);

        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            read_jsonl::<ScoreRecord>(&path),
            Err(RecordError::Malformed { line: 1, .. })
        ));
    }
}
