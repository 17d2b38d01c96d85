//! Run directory backend: one CSV file per kind of record, one row per
//! value, rows sorted by tick and address.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::storage::{format_value, StorageBackend, StorageError};
use super::{Address, TraceFrame};
use crate::rng::RngState;

const FILES: [(&str, &str); 4] = [
    ("frames.csv", "tick,address,value"),
    ("animats.csv", "tick,base_address,stage,index"),
    ("rng.csv", "tick,state_hex"),
    ("alloc.csv", "tick,counter,value"),
];
const FRAMES: usize = 0;
const ANIMATS: usize = 1;
const RNG: usize = 2;
const ALLOC: usize = 3;

pub const META_FILE: &str = "meta.txt";
const NEXT_FREE: &str = "next_free";

#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    files: Vec<File>,
    /// `ends[t][i]`: byte length of file `i` once frames 1..=t are written.
    ends: Vec<[u64; 4]>,
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl FileBackend {
    /// Starts an empty trace in `dir`, replacing any trace already there.
    pub fn create(dir: &Path) -> Result<FileBackend, StorageError> {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        let mut files = Vec::new();
        let mut start = [0; 4];
        for (i, (name, header)) in FILES.iter().enumerate() {
            let path = dir.join(name);
            fs::write(&path, format!("{header}\n")).map_err(io_error(&path))?;
            files.push(open(&path)?);
            start[i] = header.len() as u64 + 1;
        }
        Ok(FileBackend {
            dir: dir.to_path_buf(),
            files,
            ends: vec![start],
        })
    }

    /// Opens an existing trace for reading or continuing.
    pub fn open(dir: &Path) -> Result<FileBackend, StorageError> {
        let mut files = Vec::new();
        let mut per_file: Vec<Vec<(u32, u64)>> = Vec::new();
        let mut header_ends = [0; 4];
        for (i, (name, header)) in FILES.iter().enumerate() {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(io_error(&path))?;
            let mut offset = 0u64;
            let mut rows = Vec::new();
            for (n, line) in text.split_inclusive('\n').enumerate() {
                offset += line.len() as u64;
                let line = line.trim_end_matches('\n');
                if n == 0 {
                    if line != *header {
                        return Err(format_error(&path, 1, format!("expected header `{header}`")));
                    }
                    header_ends[i] = offset;
                    continue;
                }
                let tick = line
                    .split(',')
                    .next()
                    .and_then(|t| t.parse::<u32>().ok())
                    .ok_or_else(|| format_error(&path, n + 1, "missing tick".into()))?;
                rows.push((tick, offset));
            }
            per_file.push(rows);
            files.push(open(&path)?);
        }

        let count = per_file[RNG].len() as u32;
        let mut last = vec![[0u64; 4]; count as usize + 1];
        for (i, rows) in per_file.iter().enumerate() {
            let mut previous = 0;
            for &(tick, offset) in rows {
                if tick < previous || tick == 0 || tick > count {
                    return Err(format_error(
                        &dir.join(FILES[i].0),
                        0,
                        format!("tick {tick} out of order or beyond the {count} recorded"),
                    ));
                }
                last[tick as usize][i] = offset;
                previous = tick;
            }
        }
        let mut ends = vec![header_ends];
        for t in 1..=count as usize {
            let mut end = ends[t - 1];
            for i in 0..4 {
                end[i] = end[i].max(last[t][i]);
            }
            ends.push(end);
        }
        Ok(FileBackend {
            dir: dir.to_path_buf(),
            files,
            ends,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read_rows(&self, i: usize, t: u32) -> Result<String, StorageError> {
        let start = self.ends[t as usize - 1][i];
        let end = self.ends[t as usize][i];
        let path = self.dir.join(FILES[i].0);
        let mut file = &self.files[i];
        let mut buf = vec![0; (end - start) as usize];
        file.seek(SeekFrom::Start(start)).map_err(io_error(&path))?;
        file.read_exact(&mut buf).map_err(io_error(&path))?;
        String::from_utf8(buf).map_err(|_| format_error(&path, 0, "invalid UTF-8".into()))
    }
}

fn open(path: &Path) -> Result<File, StorageError> {
    OpenOptions::new()
        .read(true)
        .append(true)
        .open(path)
        .map_err(io_error(path))
}

fn format_error(path: &Path, line: usize, message: String) -> StorageError {
    StorageError::Format {
        path: path.to_path_buf(),
        line,
        message,
    }
}

impl StorageBackend for FileBackend {
    fn append_frame(&mut self, frame: &TraceFrame) -> Result<(), StorageError> {
        let t = self.frame_count() + 1;
        let mut text: [String; 4] = Default::default();
        for (a, v) in &frame.values {
            let _ = writeln!(text[FRAMES], "{t},{a},{}", format_value(*v));
        }
        for (a, (stage, index)) in &frame.animats {
            let _ = writeln!(text[ANIMATS], "{t},{a},{stage},{index}");
        }
        let _ = writeln!(text[RNG], "{t},{}", frame.rng);
        let _ = writeln!(text[ALLOC], "{t},{NEXT_FREE},{}", frame.next_free);
        for (stage, index) in &frame.next_index {
            let _ = writeln!(text[ALLOC], "{t},{stage},{index}");
        }

        let mut end = *self.ends.last().unwrap();
        for (i, chunk) in text.iter().enumerate() {
            let path = self.dir.join(FILES[i].0);
            self.files[i]
                .write_all(chunk.as_bytes())
                .map_err(io_error(&path))?;
            end[i] += chunk.len() as u64;
        }
        for (i, file) in self.files.iter_mut().enumerate() {
            file.flush().map_err(io_error(&self.dir.join(FILES[i].0)))?;
        }
        self.ends.push(end);
        Ok(())
    }

    fn load_frame(&self, t: u32) -> Result<TraceFrame, StorageError> {
        let count = self.frame_count();
        if t == 0 || t > count {
            return Err(StorageError::OutOfRange { t, count });
        }
        let bad = |i: usize, line: &str| {
            format_error(&self.dir.join(FILES[i].0), 0, format!("malformed row `{line}`"))
        };
        let fields = |i: usize, line: &'_ str, n: usize| -> Result<Vec<String>, StorageError> {
            let parts: Vec<String> = line.split(',').skip(1).map(str::to_string).collect();
            if parts.len() == n {
                Ok(parts)
            } else {
                Err(bad(i, line))
            }
        };
        let address = |i: usize, line: &str, s: &str| {
            s.parse::<u32>()
                .ok()
                .and_then(Address::new)
                .ok_or_else(|| bad(i, line))
        };

        let mut values = BTreeMap::new();
        for line in self.read_rows(FRAMES, t)?.lines() {
            let f = fields(FRAMES, line, 2)?;
            let v = f[1].parse::<f64>().map_err(|_| bad(FRAMES, line))?;
            values.insert(address(FRAMES, line, &f[0])?, v);
        }
        let mut animats = BTreeMap::new();
        for line in self.read_rows(ANIMATS, t)?.lines() {
            let f = fields(ANIMATS, line, 3)?;
            let index = f[2].parse::<u32>().map_err(|_| bad(ANIMATS, line))?;
            animats.insert(address(ANIMATS, line, &f[0])?, (f[1].clone(), index));
        }
        let rng_rows = self.read_rows(RNG, t)?;
        let line = rng_rows.lines().next().unwrap_or("");
        let f = fields(RNG, line, 1)?;
        let rng: RngState = f[0].parse().map_err(|_| bad(RNG, line))?;

        let mut next_free = None;
        let mut next_index = BTreeMap::new();
        for line in self.read_rows(ALLOC, t)?.lines() {
            let f = fields(ALLOC, line, 2)?;
            if f[0] == NEXT_FREE {
                next_free = Some(address(ALLOC, line, &f[1])?);
            } else {
                let index = f[1].parse::<u32>().map_err(|_| bad(ALLOC, line))?;
                next_index.insert(f[0].clone(), index);
            }
        }
        let next_free = next_free.ok_or_else(|| bad(ALLOC, "(next_free missing)"))?;

        Ok(TraceFrame {
            values,
            animats,
            rng,
            next_free,
            next_index,
        })
    }

    fn frame_count(&self) -> u32 {
        self.ends.len() as u32 - 1
    }

    fn truncate(&mut self, count: u32) -> Result<(), StorageError> {
        if count >= self.frame_count() {
            return Ok(());
        }
        let end = self.ends[count as usize];
        for (i, file) in self.files.iter().enumerate() {
            file.set_len(end[i])
                .map_err(io_error(&self.dir.join(FILES[i].0)))?;
        }
        self.ends.truncate(count as usize + 1);
        Ok(())
    }
}

/// Writes `meta.txt` as `key=value` lines in the given order.
pub fn write_meta(dir: &Path, entries: &[(String, String)]) -> Result<(), StorageError> {
    let mut text = String::new();
    for (k, v) in entries {
        let _ = writeln!(text, "{k}={v}");
    }
    let path = dir.join(META_FILE);
    fs::write(&path, text).map_err(io_error(&path))
}

pub fn read_meta(dir: &Path) -> Result<BTreeMap<String, String>, StorageError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(io_error(&path))?;
    let mut meta = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_error(&path, n + 1, "expected key=value".into()))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{MemoryBackend, MemoryImage};

    fn frames() -> Vec<TraceFrame> {
        let mut m = MemoryImage::new();
        m.allocate_static(2);
        let egg = m.allocate("Egg", 3, 1);
        let mut out = Vec::new();
        for t in 1..=4u32 {
            if t <= 3 {
                m.write(egg, f64::from(t) * 0.1).unwrap();
                m.write_delta(egg.offset(2), 1e-300).unwrap();
            }
            if t == 2 {
                m.allocate("Adult", 2, 1);
            }
            if t == 3 {
                m.kill(egg).unwrap();
            }
            let f = m.snapshot(RngState(u64::from(t) * 0x1234_5678_9abc));
            m.load(&f, t);
            out.push(f);
        }
        out
    }

    #[test]
    fn backends_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = FileBackend::create(dir.path()).unwrap();
        let mut mem = MemoryBackend::default();
        for f in frames() {
            file.append_frame(&f).unwrap();
            mem.append_frame(&f).unwrap();
        }
        assert_eq!(file.frame_count(), 4);
        for t in 1..=4 {
            assert_eq!(file.load_frame(t).unwrap(), mem.load_frame(t).unwrap());
        }
        assert!(file.load_frame(0).is_err());
        assert!(file.load_frame(5).is_err());

        let reopened = FileBackend::open(dir.path()).unwrap();
        assert_eq!(reopened.frame_count(), 4);
        for t in 1..=4 {
            assert_eq!(reopened.load_frame(t).unwrap(), mem.load_frame(t).unwrap());
        }
    }

    #[test]
    fn layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = FileBackend::create(dir.path()).unwrap();
        for f in frames().into_iter().take(2) {
            file.append_frame(&f).unwrap();
        }
        let rng = fs::read_to_string(dir.path().join("rng.csv")).unwrap();
        assert_eq!(rng, "tick,state_hex\n1,0000123456789abc\n2,00002468acf13578\n");
        let animats = fs::read_to_string(dir.path().join("animats.csv")).unwrap();
        assert_eq!(
            animats,
            "tick,base_address,stage,index\n1,3,Egg,1\n2,3,Egg,1\n2,6,Adult,1\n"
        );
        let frames = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
        assert!(frames.starts_with("tick,address,value\n1,1,0\n1,2,0\n1,3,0.1\n1,4,0\n1,5,1e-300\n"));
    }

    #[test]
    fn truncate_then_continue() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = FileBackend::create(dir.path()).unwrap();
        let all = frames();
        for f in &all {
            file.append_frame(f).unwrap();
        }
        let full = fs::read(dir.path().join("frames.csv")).unwrap();
        file.truncate(1).unwrap();
        assert_eq!(file.frame_count(), 1);
        for f in &all[1..] {
            file.append_frame(f).unwrap();
        }
        assert_eq!(fs::read(dir.path().join("frames.csv")).unwrap(), full);
        assert_eq!(file.load_frame(3).unwrap(), all[2]);
    }

    #[test]
    fn meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ("version".to_string(), "1".to_string()),
            ("status".to_string(), "completed".to_string()),
        ];
        write_meta(dir.path(), &entries).unwrap();
        let meta = read_meta(dir.path()).unwrap();
        assert_eq!(meta["status"], "completed");
        assert_eq!(
            fs::read_to_string(dir.path().join(META_FILE)).unwrap(),
            "version=1\nstatus=completed\n"
        );
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let err = FileBackend::open(Path::new("/nonexistent/run")).unwrap_err();
        assert!(matches!(err, StorageError::Io { .. }));
    }
}
