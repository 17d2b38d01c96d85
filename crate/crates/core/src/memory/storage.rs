use std::io;
use std::path::PathBuf;

use thiserror::Error;

use super::TraceFrame;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no frame {t}: the trace has {count} frame(s)")]
    OutOfRange { t: u32, count: u32 },
}

/// Where frames go. Frames are numbered from 1 and immutable once
/// appended, except that a backend can drop a suffix for a re-run.
pub trait StorageBackend {
    fn append_frame(&mut self, frame: &TraceFrame) -> Result<(), StorageError>;
    fn load_frame(&self, t: u32) -> Result<TraceFrame, StorageError>;
    fn frame_count(&self) -> u32;
    /// Keeps frames 1..=count and discards the rest.
    fn truncate(&mut self, count: u32) -> Result<(), StorageError>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryBackend {
    frames: Vec<TraceFrame>,
}

impl MemoryBackend {
    pub fn frames(&self) -> &[TraceFrame] {
        &self.frames
    }
}

impl StorageBackend for MemoryBackend {
    fn append_frame(&mut self, frame: &TraceFrame) -> Result<(), StorageError> {
        self.frames.push(frame.clone());
        Ok(())
    }

    fn load_frame(&self, t: u32) -> Result<TraceFrame, StorageError> {
        let count = self.frame_count();
        if t == 0 || t > count {
            return Err(StorageError::OutOfRange { t, count });
        }
        Ok(self.frames[t as usize - 1].clone())
    }

    fn frame_count(&self) -> u32 {
        self.frames.len() as u32
    }

    fn truncate(&mut self, count: u32) -> Result<(), StorageError> {
        self.frames.truncate(count as usize);
        Ok(())
    }
}

/// Shortest decimal that parses back to the same double, in scientific
/// notation only for very large or very small magnitudes.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
