use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["case_id", "volume_path", "mask_path", "grade"];

/// One case of a cohort. Relative paths are resolved against the manifest's
/// directory when read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub volume_path: PathBuf,
    pub mask_path: PathBuf,
    pub grade: u8,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest {
            row: 0,
            message: format!("{}: {e}", path.display()),
        })?;
    let headers = reader.headers().map_err(|e| Error::Manifest {
        row: 0,
        message: e.to_string(),
    })?;
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Manifest {
            row: 0,
            message: format!("missing column `{name}`"),
        })?;
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Manifest {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |c: usize| {
            row.get(cols[c]).ok_or_else(|| Error::Manifest {
                row: row_no,
                message: format!("missing value for `{}`", COLUMNS[c]),
            })
        };
        let case_id = field(0)?.to_string();
        if case_id.is_empty() {
            return Err(Error::Manifest {
                row: row_no,
                message: "empty case_id".into(),
            });
        }
        let grade_text = field(3)?;
        let grade = grade_text
            .parse::<u8>()
            .ok()
            .filter(|g| *g <= 3)
            .ok_or_else(|| Error::Manifest {
                row: row_no,
                message: format!("grade `{grade_text}` outside 0..3"),
            })?;
        if !seen.insert(case_id.clone()) {
            return Err(Error::Manifest {
                row: row_no,
                message: format!("duplicate case_id `{case_id}`"),
            });
        }
        records.push(CaseRecord {
            case_id,
            volume_path: base.join(field(1)?),
            mask_path: base.join(field(2)?),
            grade,
        });
    }
    Ok(records)
}

/// Writes records with paths as given.
pub fn write_manifest(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            r.case_id.as_str(),
            &r.volume_path.to_string_lossy(),
            &r.mask_path.to_string_lossy(),
            &r.grade.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn valid_manifest_in_order() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "case_id,volume_path,mask_path,grade\nb,b.json,bm.json,2\na,a.json,am.json,0\nc,/abs/c.json,cm.json,3\n",
        );
        let recs = read_manifest(&p).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(
            recs.iter().map(|r| r.case_id.as_str()).collect::<Vec<_>>(),
            ["b", "a", "c"]
        );
        assert_eq!(recs[0].volume_path, d.path().join("b.json"));
        assert_eq!(recs[2].volume_path, PathBuf::from("/abs/c.json"));
        assert_eq!(recs[1].grade, 0);
    }

    #[test]
    fn bad_grade_and_duplicates() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "case_id,volume_path,mask_path,grade\na,a,b,1\nb,a,b,4\n");
        assert!(matches!(read_manifest(&p), Err(Error::Manifest { row: 2, .. })));
        let p = write(d.path(), "case_id,volume_path,mask_path,grade\na,a,b,1\na,a,b,2\n");
        assert!(matches!(read_manifest(&p), Err(Error::Manifest { row: 2, .. })));
    }

    #[test]
    fn missing_column() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "case_id,volume_path,grade\na,a,1\n");
        match read_manifest(&p) {
            Err(Error::Manifest { row: 0, message }) => assert!(message.contains("mask_path")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
