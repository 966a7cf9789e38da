//! The label CSV shared by the labeler, the label mapper, the splitter and
//! the evaluator:
//!
//! ```text
//! study_uid,chest_wall,pleura,parenchyma,cardio,abnormal,source
//! 1.2.840.1,0,0,1,0,1,keyword
//! ```

use std::io::{Read, Write};

use crate::labels::{Flags, LabelClass, LabelSource};

pub const LABEL_HEADER: [&str; 7] = [
    "study_uid",
    "chest_wall",
    "pleura",
    "parenchyma",
    "cardio",
    "abnormal",
    "source",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub study_uid: String,
    pub flags: Flags,
    pub source: LabelSource,
}

#[derive(Debug, thiserror::Error)]
pub enum LabelFileError {
    #[error("line 1: expected header `{}`", LABEL_HEADER.join(","))]
    HeaderMismatch,
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn bad_row(line: u64, message: impl Into<String>) -> LabelFileError {
    LabelFileError::BadRow {
        line,
        message: message.into(),
    }
}

pub fn write_label_csv<W: Write>(out: W, rows: &[LabelRow]) -> Result<(), LabelFileError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(LABEL_HEADER)?;
    for row in rows {
        let bits = row.flags.bits();
        let mut record = Vec::with_capacity(7);
        record.push(row.study_uid.clone());
        record.extend(bits.iter().map(|b| b.to_string()));
        record.push(row.source.as_str().to_owned());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_label_csv<R: Read>(input: R) -> Result<Vec<LabelRow>, LabelFileError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    match records.next() {
        Some(header) => {
            let header = header?;
            if header.iter().ne(LABEL_HEADER.iter().copied()) {
                return Err(LabelFileError::HeaderMismatch);
            }
        }
        None => return Err(LabelFileError::HeaderMismatch),
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != LABEL_HEADER.len() {
            return Err(bad_row(line, format!("expected 7 fields, found {}", record.len())));
        }
        let mut flags = Flags::NORMAL;
        for class in LabelClass::ALL {
            let v = &record[class.index() + 1];
            let bit = match v.trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad_row(line, format!("{class}: expected 0 or 1, found `{other}`"))),
            };
            flags.set(class, bit);
        }
        let source = record[6]
            .trim()
            .parse()
            .map_err(|_| bad_row(line, format!("unknown source `{}`", &record[6])))?;
        let study_uid = record[0].to_owned();
        if study_uid.is_empty() {
            return Err(bad_row(line, "empty study_uid"));
        }
        rows.push(LabelRow {
            study_uid,
            flags,
            source,
        });
    }
    Ok(rows)
}

/// Per-class scores in `[0, 1]`, for AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub study_uid: String,
    pub scores: [f64; 5],
}

/// Read `study_uid,chest_wall,…,abnormal` with real-valued scores.
pub fn read_score_csv<R: Read>(input: R) -> Result<Vec<ScoreRow>, LabelFileError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let expected = &LABEL_HEADER[..6];
    match records.next() {
        Some(h) if h.as_ref().is_ok_and(|h| h.iter().eq(expected.iter().copied())) => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(LabelFileError::HeaderMismatch),
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 6 {
            return Err(bad_row(line, format!("expected 6 fields, found {}", record.len())));
        }
        let mut scores = [0.0; 5];
        for (i, s) in scores.iter_mut().enumerate() {
            let v: f64 = record[i + 1]
                .trim()
                .parse()
                .map_err(|_| bad_row(line, format!("bad score `{}`", &record[i + 1])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad_row(line, format!("score {v} outside [0, 1]")));
            }
            *s = v;
        }
        rows.push(ScoreRow {
            study_uid: record[0].to_owned(),
            scores,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_bit_exact() {
        let mut buf = Vec::new();
        let row = LabelRow {
            study_uid: "u1".into(),
            flags: Flags::from_bits([0, 1, 0, 0, 1]),
            source: LabelSource::Keyword,
        };
        write_label_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "study_uid,chest_wall,pleura,parenchyma,cardio,abnormal,source\nu1,0,1,0,0,1,keyword\n"
        );
        assert_eq!(read_label_csv(text.as_bytes()).unwrap(), vec![row]);
    }

    #[test]
    fn empty_body_is_header_only() {
        let mut buf = Vec::new();
        write_label_csv(&mut buf, &[]).unwrap();
        assert_eq!(buf, b"study_uid,chest_wall,pleura,parenchyma,cardio,abnormal,source\n");
        assert!(read_label_csv(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let h = "study_uid,chest_wall,pleura,parenchyma,cardio,abnormal,source\n";
        assert!(matches!(read_label_csv("a,b\n".as_bytes()), Err(LabelFileError::HeaderMismatch)));
        assert!(matches!(
            read_label_csv(format!("{h}u,0,2,0,0,0,keyword\n").as_bytes()),
            Err(LabelFileError::BadRow { line: 2, .. })
        ));
        assert!(matches!(
            read_label_csv(format!("{h}u,0,0,0,0,0,guess\n").as_bytes()),
            Err(LabelFileError::BadRow { .. })
        ));
    }

    #[test]
    fn score_file() {
        let text = "study_uid,chest_wall,pleura,parenchyma,cardio,abnormal\nu,0.1,0.2,0.3,0.4,0.5\n";
        let rows = read_score_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[0].scores[4], 0.5);
        let bad = text.replace("0.5", "1.5");
        assert!(read_score_csv(bad.as_bytes()).is_err());
    }
}
