//! Append-only JSONL replay log and atomic checkpoints.
//!
//! A record is acknowledged only after its full line, newline included, is
//! written. A trailing fragment without a newline is therefore a write the
//! crash interrupted; it is dropped (and truncated away) on open. A
//! newline-terminated line that does not parse is corruption and fails
//! recovery.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tracing::{info, warn};

use crate::engine::{Engine, EngineConfig, ReplayRecord, CHECKPOINT_FORMAT_VERSION};
use crate::error::{EngineError, Result, ServiceError};

pub const LOG_FILE: &str = "replay.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Parsed contents of a replay log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub records: Vec<ReplayRecord>,
    /// Length of the valid prefix in bytes.
    pub valid_len: u64,
    /// Bytes of an interrupted final write, if any.
    pub torn_tail: u64,
}

/// Reads `path`; a missing file is an empty log.
pub fn read_log(path: &Path) -> Result<LogContents> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut records: Vec<ReplayRecord> = Vec::new();
    let mut offset = 0usize;
    let mut line = 0usize;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break;
        };
        line += 1;
        let raw = &bytes[offset..offset + nl];
        let expected_seq = records.last().map_or(1, |r| r.seq + 1);
        let record: ReplayRecord = serde_json::from_slice(raw).map_err(|e| ServiceError::CorruptLog {
            path: path.to_path_buf(),
            line,
            expected_seq,
            reason: e.to_string(),
        })?;
        if let Some(prev) = records.last() {
            if record.seq != prev.seq + 1 {
                return Err(EngineError::SequenceGap {
                    expected: prev.seq + 1,
                    found: record.seq,
                }
                .into());
            }
        }
        records.push(record);
        offset += nl + 1;
    }
    Ok(LogContents {
        records,
        valid_len: offset as u64,
        torn_tail: (bytes.len() - offset) as u64,
    })
}

/// Open handle for appending records.
#[derive(Debug)]
pub struct ReplayLog {
    path: PathBuf,
    out: BufWriter<File>,
    fsync: bool,
}

impl ReplayLog {
    /// Opens `path` for appending, cutting off any torn tail first.
    pub fn open(path: &Path, fsync: bool) -> Result<(Self, LogContents)> {
        let contents = read_log(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if contents.torn_tail > 0 {
            warn!(path = %path.display(), bytes = contents.torn_tail, "dropping torn tail of replay log");
            file.set_len(contents.valid_len)?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
                fsync,
            },
            contents,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record as a full line and flushes it.
    pub fn append(&mut self, record: &ReplayRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        if self.fsync {
            self.out.get_ref().sync_data()?;
        }
        Ok(())
    }
}

/// Writes the engine to `path` through a temporary file and a rename, so a
/// crash leaves either the old or the new checkpoint.
pub fn save_checkpoint(engine: &Engine, path: &Path) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer(&mut out, engine)?;
        out.flush()?;
        out.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Option<Engine>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let engine: Engine = serde_json::from_slice(&bytes)?;
    if engine.format_version() != CHECKPOINT_FORMAT_VERSION {
        return Err(ServiceError::CheckpointVersion {
            path: path.to_path_buf(),
            found: engine.format_version(),
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    Ok(Some(engine))
}

/// Rebuilds the engine from the checkpoint at `checkpoint` (a fresh engine
/// from `config` if there is none) plus every logged record after it.
pub fn recover(config: &EngineConfig, epoch_unix_ms: u64, checkpoint: &Path, log: &Path) -> Result<Engine> {
    let mut engine = match load_checkpoint(checkpoint)? {
        Some(e) => e,
        None => Engine::new(config.clone(), epoch_unix_ms)?,
    };
    let contents = read_log(log)?;
    replay(&mut engine, &contents.records)?;
    info!(
        last_seq = engine.last_seq(),
        records = contents.records.len(),
        "recovered engine state"
    );
    Ok(engine)
}

/// Applies `records` in order, skipping those the engine already holds.
pub fn replay(engine: &mut Engine, records: &[ReplayRecord]) -> Result<()> {
    for r in records {
        if r.seq <= engine.last_seq() {
            continue;
        }
        engine.apply(r)?;
    }
    Ok(())
}
