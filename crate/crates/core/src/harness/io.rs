//! Reading and writing JSON and line-delimited JSON files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::HarnessError;

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Read { path: path.to_path_buf(), source })
}

/// Parse one record per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    parse_jsonl(&read_text(path)?, path)
}

/// [`read_jsonl`] on text already in memory; `origin` names it in errors.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<Vec<T>, HarnessError> {
    let path = origin;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let wrap = |source| HarnessError::Write { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    f(&mut w).and_then(|_| w.flush()).map_err(wrap)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), HarnessError> {
    write_with(path, |w| {
        for r in records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ProgramRecord;

    #[test]
    fn jsonl_round_trip_skips_blank_lines_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let recs = vec![ProgramRecord { id: "a".into(), utterance: None, program: "exist(find[x])".into() }];
        write_jsonl(&path, &recs).unwrap();
        assert_eq!(read_jsonl::<ProgramRecord>(&path).unwrap(), recs);
        fs::write(&path, "{\"id\":\"a\",\"program\":\"x\"}\n\n{\"id\":1}\n").unwrap();
        match read_jsonl::<ProgramRecord>(&path) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(read_jsonl::<ProgramRecord>(&dir.path().join("missing")).unwrap_err().exit_code(), 2);
    }
}
