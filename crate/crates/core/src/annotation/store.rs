use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use super::{AnnotationRecord, NewAnnotation};
use crate::error::{Error, Result};

struct Inner {
    file: File,
    records: Vec<AnnotationRecord>,
    next_id: u64,
}

/// Append-only JSON-lines store. Appends go through one lock and are synced
/// before returning; readers get a snapshot taken under the same lock.
pub struct AnnotationStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl AnnotationStore {
    /// Opens or creates the store. An unparsable final line without its
    /// newline is the remnant of an interrupted append and is cut off; any
    /// other malformed line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let (records, good) = if path.exists() { scan(&path)? } else { (Vec::new(), 0) };
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() > good {
            file.set_len(good)?;
        }
        if good > 0 && !ends_with_newline(&path)? {
            file.write_all(b"\n")?;
        }
        let next_id = records.iter().map(|r| r.id + 1).max().unwrap_or(1);
        Ok(Self { path, inner: Mutex::new(Inner { file, records, next_id }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates, stamps and durably appends one judgment.
    pub fn record(&self, new: NewAnnotation) -> Result<AnnotationRecord> {
        let delta_e = new.validate()?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let rec = AnnotationRecord {
            id: inner.next_id,
            prompt: new.prompt,
            response: new.response,
            target_emotion: new.target_emotion,
            gamma_used: new.gamma_used,
            annotated_vad: new.annotated_vad,
            delta_e,
            timestamp,
        };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        inner.file.write_all(line.as_bytes())?;
        inner.file.sync_data()?;
        inner.next_id += 1;
        inner.records.push(rec.clone());
        Ok(rec)
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads every record of a store file without opening it for writing.
pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    Ok(scan(path)?.0)
}

fn ends_with_newline(path: &Path) -> Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut b = [0u8; 1];
    f.read_exact(&mut b)?;
    Ok(b[0] == b'\n')
}

/// Records plus the byte length of the intact prefix.
fn scan(path: &Path) -> Result<(Vec<AnnotationRecord>, u64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    let mut good = 0u64;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            if complete {
                good += n as u64;
            }
            continue;
        }
        match serde_json::from_str::<AnnotationRecord>(text) {
            Ok(r) => {
                out.push(r);
                good += n as u64;
            }
            Err(_) if !complete => break,
            Err(e) => return Err(Error::Parse { path: path.to_path_buf(), line: line_no, msg: e.to_string() }),
        }
    }
    Ok((out, good))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::{Emotion, EmotionDistribution, VadVector};

    fn new(i: usize) -> NewAnnotation {
        NewAnnotation {
            prompt: format!("prompt {i}"),
            response: format!("response \"{i}\"\n"),
            target_emotion: EmotionDistribution::one_hot(Emotion::ALL[i % 6]),
            gamma_used: 10.0 * i as f64 / 19.0,
            annotated_vad: VadVector::new(0.1 * (i % 10) as f64, 0.3, 1.0 / 3.0),
            delta_e: None,
        }
    }

    #[test]
    fn round_trip_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let written: Vec<_> = {
            let s = AnnotationStore::open(&p).unwrap();
            (0..7).map(|i| s.record(new(i)).unwrap()).collect()
        };
        let s = AnnotationStore::open(&p).unwrap();
        assert_eq!(s.records(), written);
        assert_eq!(written.iter().map(|r| r.id).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
        assert_eq!(s.record(new(9)).unwrap().id, 8);
    }

    #[test]
    fn rejected_records_are_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let s = AnnotationStore::open(&p).unwrap();
        let mut bad = new(1);
        bad.annotated_vad = VadVector::new(2.0, 0.0, 0.0);
        assert!(s.record(bad).is_err());
        assert!(s.is_empty());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
    }

    #[test]
    fn torn_tail_is_dropped_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        {
            let s = AnnotationStore::open(&p).unwrap();
            s.record(new(0)).unwrap();
            s.record(new(1)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"id\":3,\"prom").unwrap();
        let s = AnnotationStore::open(&p).unwrap();
        assert_eq!(s.len(), 2);
        s.record(new(2)).unwrap();
        drop(s);
        assert_eq!(read_records(&p).unwrap().len(), 3);

        std::fs::write(&p, "not json\n").unwrap();
        assert!(matches!(AnnotationStore::open(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn concurrent_appends_are_serialized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let s = AnnotationStore::open(&p).unwrap();
        std::thread::scope(|sc| {
            for t in 0..4 {
                let s = &s;
                sc.spawn(move || {
                    for i in 0..10 {
                        s.record(new(t * 10 + i)).unwrap();
                    }
                });
            }
        });
        let back = read_records(&p).unwrap();
        assert_eq!(back.len(), 40);
        let mut ids: Vec<_> = back.iter().map(|r| r.id).collect();
        ids.sort();
        assert_eq!(ids, (1..=40).collect::<Vec<_>>());
    }
}
