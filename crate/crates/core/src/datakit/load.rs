use std::fs::File;
use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        s.parse()
            .map(LabelColumn::Index)
            .map_err(|_| Error::InvalidHyperparams(format!("label column must be an index or \"last\", got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub task: TaskKind,
    pub delimiter: u8,
    /// Classification only: this value maps to `+1`, everything else to
    /// `−1`. When absent labels must be `{0, 1}` or `{−1, +1}`.
    pub positive_label: Option<f64>,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, task: TaskKind) -> Self {
        Self {
            path: path.into(),
            label_column: LabelColumn::Last,
            has_header: false,
            task,
            delimiter: b',',
            positive_label: None,
        }
    }
}

/// Reads the file named by `spec`. Ids are assigned sequentially from 0.
pub fn load_csv(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    let file = File::open(&spec.path).map_err(|e| Error::Parse {
        line: 0,
        column: 0,
        message: format!("cannot open {}: {e}", spec.path.display()),
    })?;
    parse_csv(file, spec)
}

/// As [`load_csv`] but from any reader; `spec.path` is ignored.
pub fn parse_csv<R: Read>(reader: R, spec: &DatasetSpec) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .delimiter(spec.delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, column: 0, message: e.to_string() }
        })?;
        let line = record.position().map_or(out.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let n = record.len();
        if *width.get_or_insert(n) != n {
            return Err(Error::Parse {
                line,
                column: n,
                message: format!("expected {} fields, found {n}", width.unwrap_or(n)),
            });
        }
        let label_at = match spec.label_column {
            LabelColumn::Last => n.checked_sub(1),
            LabelColumn::Index(i) => (i < n).then_some(i),
        }
        .filter(|_| n >= 2)
        .ok_or_else(|| Error::Parse {
            line,
            column: n,
            message: format!("label column out of range for {n} fields"),
        })?;
        let mut features = Vec::with_capacity(n - 1);
        let mut raw_label = 0.0;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                column: j + 1,
                message: format!("not a finite number: {cell:?}"),
            })?;
            if j == label_at {
                raw_label = v;
            } else {
                features.push(v);
            }
        }
        let target = match spec.task {
            TaskKind::Regression => raw_label,
            TaskKind::Classification => map_label(raw_label, spec.positive_label, line)?,
        };
        out.push(Sample::new(out.len() as u64, features, target));
    }
    if out.is_empty() {
        return Err(Error::EmptyData(spec.path.display().to_string()));
    }
    Ok(out)
}

fn map_label(v: f64, positive: Option<f64>, line: usize) -> Result<f64> {
    if let Some(p) = positive {
        return Ok(if v == p { 1.0 } else { -1.0 });
    }
    match v {
        1.0 => Ok(1.0),
        0.0 | -1.0 => Ok(-1.0),
        _ => Err(Error::LabelDomain {
            line,
            message: format!("label {v} is not in {{0, 1}} or {{-1, +1}}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls() -> DatasetSpec {
        DatasetSpec::new("inline", TaskKind::Classification)
    }

    #[test]
    fn label_last_maps_zero_one() {
        let s = parse_csv("1.0,2.0,1\n3.0,4.0,0".as_bytes(), &cls()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].target, s[1].target), (1.0, -1.0));
        assert_eq!(s[1].features, vec![3.0, 4.0]);
        assert_eq!((s[0].id.0, s[1].id.0), (0, 1));
    }

    #[test]
    fn header_is_skipped() {
        let mut spec = cls();
        spec.has_header = true;
        let s = parse_csv("a,b,y\n1,2,-1\n".as_bytes(), &spec).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].target, -1.0);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        match parse_csv("1,2,1\n3,x,0\n".as_bytes(), &cls()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn label_domain() {
        assert!(matches!(parse_csv("1,2,3\n".as_bytes(), &cls()), Err(Error::LabelDomain { line: 1, .. })));
        let mut spec = cls();
        spec.positive_label = Some(1.0);
        spec.delimiter = b'\t';
        let s = parse_csv("1\t2\t1\n3\t4\t2\n".as_bytes(), &spec).unwrap();
        assert_eq!((s[0].target, s[1].target), (1.0, -1.0));
    }

    #[test]
    fn label_index_and_regression() {
        let mut spec = DatasetSpec::new("inline", TaskKind::Regression);
        spec.label_column = LabelColumn::Index(0);
        let s = parse_csv("0.5,1,2\n".as_bytes(), &spec).unwrap();
        assert_eq!(s[0].target, 0.5);
        assert_eq!(s[0].features, vec![1.0, 2.0]);
        spec.label_column = LabelColumn::Index(7);
        assert!(matches!(parse_csv("0.5,1,2\n".as_bytes(), &spec), Err(Error::Parse { .. })));
    }

    #[test]
    fn ragged_and_empty() {
        assert!(matches!(parse_csv("1,2,1\n1,1\n".as_bytes(), &cls()), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv("".as_bytes(), &cls()), Err(Error::EmptyData(_))));
        let missing = DatasetSpec::new("/nonexistent/file.csv", TaskKind::Classification);
        assert!(matches!(load_csv(&missing), Err(Error::Parse { line: 0, .. })));
    }

    #[test]
    fn label_column_from_str() {
        assert_eq!("last".parse::<LabelColumn>().unwrap(), LabelColumn::Last);
        assert_eq!("3".parse::<LabelColumn>().unwrap(), LabelColumn::Index(3));
        assert!("x".parse::<LabelColumn>().is_err());
    }
}
