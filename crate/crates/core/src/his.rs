//! HIS session XML ingest.
//!
//! One XML file holds one examination session: a header shared by every
//! report in the session, followed by the reports themselves.
//!
//! ```xml
//! <Session>
//!   <Header>
//!     <SessionId>S1</SessionId>
//!     <PatientId>P1</PatientId>
//!     <CheckInTime>2021-03-04T07:30:00+07:00</CheckInTime>
//!     <CheckOutTime>2021-03-04T11:00:00+07:00</CheckOutTime>
//!   </Header>
//!   <Reports>
//!     <Report>
//!       <ReportId>R1</ReportId>            <!-- optional -->
//!       <ServiceId>CXR01</ServiceId>
//!       <ReportTime>2021-03-04T08:15:00+07:00</ReportTime>
//!       <Description>...</Description>
//!     </Report>
//!   </Reports>
//! </Session>
//! ```
//!
//! Timestamps must carry an explicit UTC offset. Unknown child elements of
//! `Header` and `Report` are ignored.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub patient_id: String,
    pub check_in_time: DateTime<Utc>,
    pub check_out_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub report_id: String,
    pub session_id: String,
    pub patient_id: String,
    pub service_id: String,
    pub report_time: DateTime<Utc>,
    pub description: String,
    pub check_in_time: DateTime<Utc>,
    pub check_out_time: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum HisError {
    #[error("malformed XML at {path}: {message}")]
    MalformedXml { path: String, message: String },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("bad timestamp at {path}: `{value}`")]
    BadTimestamp { path: String, value: String },
    #[error("service whitelist is empty")]
    EmptyWhitelist,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HisError {
    fn malformed(path: &[String], message: impl Into<String>) -> HisError {
        HisError::MalformedXml {
            path: join_path(path),
            message: message.into(),
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> HisError {
        HisError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn join_path(path: &[String]) -> String {
    if path.is_empty() {
        "/".to_owned()
    } else {
        path.join("/")
    }
}

/// Parse an ISO-8601 instant with an explicit offset. Naive timestamps are
/// rejected.
pub fn parse_instant(value: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(value.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

#[derive(Default)]
struct HeaderFields {
    session_id: Option<String>,
    patient_id: Option<String>,
    check_in: Option<String>,
    check_out: Option<String>,
}

#[derive(Default)]
struct ReportFields {
    report_id: Option<String>,
    service_id: Option<String>,
    report_time: Option<String>,
    description: Option<String>,
}

/// Parse one session file into its header and its reports in document order.
pub fn parse_session_file(xml: &[u8]) -> Result<(SessionRecord, Vec<ReportRecord>), HisError> {
    let xml = xml.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(xml);
    let text = std::str::from_utf8(xml).map_err(|e| {
        HisError::MalformedXml {
            path: "/".into(),
            message: format!("input is not UTF-8: {e}"),
        }
    })?;

    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(false);

    let mut path: Vec<String> = Vec::new();
    let mut header = HeaderFields::default();
    let mut seen_header = false;
    let mut seen_reports = false;
    let mut reports: Vec<(String, ReportFields)> = Vec::new();
    // Text accumulated for the current leaf element.
    let mut leaf_text: Option<String> = None;
    let mut seen_root = false;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| HisError::malformed(&path, e.to_string()))?;
        match event {
            Event::Decl(decl) => {
                if let Some(enc) = decl.encoding() {
                    let enc = enc.map_err(|e| HisError::malformed(&path, e.to_string()))?;
                    let enc = String::from_utf8_lossy(&enc).to_ascii_lowercase();
                    if enc != "utf-8" && enc != "utf8" {
                        return Err(HisError::malformed(
                            &path,
                            format!("unsupported encoding `{enc}`, only UTF-8 is accepted"),
                        ));
                    }
                }
            }
            Event::Start(start) => {
                let name = element_name(&start, &path)?;
                if leaf_text.is_some() {
                    return Err(HisError::schema(
                        format!("{}/{name}", join_path(&path)),
                        "unexpected element inside text field",
                    ));
                }
                if is_unknown_field(&path, &name) {
                    let end = start.to_end().into_owned();
                    reader
                        .read_to_end(end.name())
                        .map_err(|e| HisError::malformed(&path, e.to_string()))?;
                    continue;
                }
                if path.is_empty() {
                    if seen_root {
                        return Err(HisError::malformed(&path, "multiple root elements"));
                    }
                    seen_root = true;
                }
                open_element(&name, &mut path, &mut seen_header, &mut seen_reports, &mut reports)?;
                if is_leaf(&path) {
                    leaf_text = Some(String::new());
                }
            }
            Event::Empty(start) => {
                let name = element_name(&start, &path)?;
                if is_unknown_field(&path, &name) {
                    continue;
                }
                if path.is_empty() {
                    return Err(HisError::schema(name, "root element must be <Session> with content"));
                }
                open_element(&name, &mut path, &mut seen_header, &mut seen_reports, &mut reports)?;
                if is_leaf(&path) {
                    store_leaf(&path, String::new(), &mut header, &mut reports)?;
                }
                path.pop();
            }
            Event::Text(t) => {
                let chunk = t
                    .unescape()
                    .map_err(|e| HisError::malformed(&path, e.to_string()))?;
                match leaf_text.as_mut() {
                    Some(buf) => buf.push_str(&chunk),
                    None if chunk.trim().is_empty() => {}
                    None => {
                        return Err(HisError::schema(join_path(&path), "unexpected text content"));
                    }
                }
            }
            Event::CData(t) => {
                let chunk = std::str::from_utf8(&t)
                    .map_err(|e| HisError::malformed(&path, e.to_string()))?;
                match leaf_text.as_mut() {
                    Some(buf) => buf.push_str(chunk),
                    None => return Err(HisError::schema(join_path(&path), "unexpected CDATA")),
                }
            }
            Event::End(_) => {
                if let Some(text) = leaf_text.take() {
                    store_leaf(&path, text, &mut header, &mut reports)?;
                }
                path.pop();
            }
            Event::Eof => break,
            Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }

    if !seen_root {
        return Err(HisError::malformed(&path, "document has no root element"));
    }
    if !seen_header {
        return Err(HisError::schema("Session/Header", "missing required element"));
    }

    let session = build_session(header)?;
    let mut out = Vec::with_capacity(reports.len());
    for (i, (rpath, fields)) in reports.into_iter().enumerate() {
        out.push(build_report(&session, i, &rpath, fields)?);
    }
    Ok((session, out))
}

fn element_name(start: &BytesStart<'_>, path: &[String]) -> Result<String, HisError> {
    std::str::from_utf8(start.name().as_ref())
        .map(str::to_owned)
        .map_err(|e| HisError::malformed(path, e.to_string()))
}

/// Push `name` onto the path, checking that it may appear at this position.
fn open_element(
    name: &str,
    path: &mut Vec<String>,
    seen_header: &mut bool,
    seen_reports: &mut bool,
    reports: &mut Vec<(String, ReportFields)>,
) -> Result<(), HisError> {
    let parent: Vec<&str> = path
        .iter()
        .map(|s| s.split('[').next().unwrap_or(s))
        .collect();
    let segment = match (parent.as_slice(), name) {
        ([], "Session") => name.to_owned(),
        ([], other) => {
            return Err(HisError::schema(other, "root element must be <Session>"));
        }
        (["Session"], "Header") => {
            if std::mem::replace(seen_header, true) {
                return Err(HisError::schema("Session/Header", "duplicate element"));
            }
            name.to_owned()
        }
        (["Session"], "Reports") => {
            if std::mem::replace(seen_reports, true) {
                return Err(HisError::schema("Session/Reports", "duplicate element"));
            }
            name.to_owned()
        }
        (["Session"], other) => {
            return Err(HisError::schema(format!("Session/{other}"), "unexpected element"));
        }
        (["Session", "Reports"], "Report") => {
            let seg = format!("Report[{}]", reports.len());
            reports.push((format!("Session/Reports/{seg}"), ReportFields::default()));
            seg
        }
        (["Session", "Reports"], other) => {
            return Err(HisError::schema(
                format!("Session/Reports/{other}"),
                "unexpected element",
            ));
        }
        // Children of Header and Report: known leaves are validated on close,
        // unknown ones are skipped.
        _ => name.to_owned(),
    };
    path.push(segment);
    Ok(())
}

const HEADER_FIELDS: [&str; 4] = ["SessionId", "PatientId", "CheckInTime", "CheckOutTime"];
const REPORT_FIELDS: [&str; 4] = ["ReportId", "ServiceId", "ReportTime", "Description"];

/// A child of `Header` or `Report` that is not part of the schema.
fn is_unknown_field(parent: &[String], name: &str) -> bool {
    match parent.len() {
        2 => parent[1] == "Header" && !HEADER_FIELDS.contains(&name),
        3 => parent[1] == "Reports" && !REPORT_FIELDS.contains(&name),
        _ => false,
    }
}

fn is_leaf(path: &[String]) -> bool {
    (path.len() == 3 && path[1] == "Header") || (path.len() == 4 && path[1] == "Reports")
}

fn store_leaf(
    path: &[String],
    text: String,
    header: &mut HeaderFields,
    reports: &mut [(String, ReportFields)],
) -> Result<(), HisError> {
    let name = path.last().map(String::as_str).unwrap_or_default();
    let slot = if path[1] == "Header" {
        match name {
            "SessionId" => &mut header.session_id,
            "PatientId" => &mut header.patient_id,
            "CheckInTime" => &mut header.check_in,
            "CheckOutTime" => &mut header.check_out,
            _ => return Ok(()),
        }
    } else {
        let Some((_, fields)) = reports.last_mut() else {
            return Ok(());
        };
        match name {
            "ReportId" => &mut fields.report_id,
            "ServiceId" => &mut fields.service_id,
            "ReportTime" => &mut fields.report_time,
            "Description" => &mut fields.description,
            _ => return Ok(()),
        }
    };
    if slot.is_some() {
        return Err(HisError::schema(join_path(path), "duplicate element"));
    }
    *slot = Some(text);
    Ok(())
}

fn required(value: Option<String>, path: &str) -> Result<String, HisError> {
    match value {
        Some(v) if !v.trim().is_empty() => Ok(v.trim().to_owned()),
        Some(_) => Err(HisError::schema(path, "element is empty")),
        None => Err(HisError::schema(path, "missing required element")),
    }
}

fn timestamp(value: Option<String>, path: &str) -> Result<DateTime<Utc>, HisError> {
    let raw = required(value, path)?;
    parse_instant(&raw).ok_or(HisError::BadTimestamp {
        path: path.to_owned(),
        value: raw,
    })
}

fn build_session(h: HeaderFields) -> Result<SessionRecord, HisError> {
    let session = SessionRecord {
        session_id: required(h.session_id, "Session/Header/SessionId")?,
        patient_id: required(h.patient_id, "Session/Header/PatientId")?,
        check_in_time: timestamp(h.check_in, "Session/Header/CheckInTime")?,
        check_out_time: timestamp(h.check_out, "Session/Header/CheckOutTime")?,
    };
    if session.check_out_time < session.check_in_time {
        return Err(HisError::schema(
            "Session/Header/CheckOutTime",
            "check-out precedes check-in",
        ));
    }
    Ok(session)
}

fn build_report(
    session: &SessionRecord,
    index: usize,
    path: &str,
    f: ReportFields,
) -> Result<ReportRecord, HisError> {
    let report_id = match f.report_id {
        Some(id) if !id.trim().is_empty() => id.trim().to_owned(),
        _ => format!("{}#{index}", session.session_id),
    };
    let description = match f.description {
        Some(d) if !d.trim().is_empty() => d,
        Some(_) => return Err(HisError::schema(format!("{path}/Description"), "element is empty")),
        None => {
            return Err(HisError::schema(
                format!("{path}/Description"),
                "missing required element",
            ))
        }
    };
    Ok(ReportRecord {
        report_id,
        session_id: session.session_id.clone(),
        patient_id: session.patient_id.clone(),
        service_id: required(f.service_id, &format!("{path}/ServiceId"))?,
        report_time: timestamp(f.report_time, &format!("{path}/ReportTime"))?,
        description,
        check_in_time: session.check_in_time,
        check_out_time: session.check_out_time,
    })
}

/// Write a session back out in the documented schema.
///
/// Report ids are always emitted, so a parsed-then-written file keeps any
/// synthesized ids stable.
pub fn write_session_xml(session: &SessionRecord, reports: &[ReportRecord]) -> String {
    use quick_xml::escape::escape;
    let ts = |t: &DateTime<Utc>| t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true);

    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Session>\n  <Header>\n");
    out.push_str(&format!("    <SessionId>{}</SessionId>\n", escape(&session.session_id)));
    out.push_str(&format!("    <PatientId>{}</PatientId>\n", escape(&session.patient_id)));
    out.push_str(&format!("    <CheckInTime>{}</CheckInTime>\n", ts(&session.check_in_time)));
    out.push_str(&format!("    <CheckOutTime>{}</CheckOutTime>\n", ts(&session.check_out_time)));
    out.push_str("  </Header>\n  <Reports>\n");
    for r in reports {
        out.push_str("    <Report>\n");
        out.push_str(&format!("      <ReportId>{}</ReportId>\n", escape(&r.report_id)));
        out.push_str(&format!("      <ServiceId>{}</ServiceId>\n", escape(&r.service_id)));
        out.push_str(&format!("      <ReportTime>{}</ReportTime>\n", ts(&r.report_time)));
        out.push_str(&format!("      <Description>{}</Description>\n", escape(&r.description)));
        out.push_str("    </Report>\n");
    }
    out.push_str("  </Reports>\n</Session>\n");
    out
}

/// Keep the reports whose service id is whitelisted, in input order.
pub fn filter_chest_reports(
    reports: Vec<ReportRecord>,
    whitelist: &HashSet<String>,
) -> Result<Vec<ReportRecord>, HisError> {
    if whitelist.is_empty() {
        return Err(HisError::EmptyWhitelist);
    }
    Ok(reports
        .into_iter()
        .filter(|r| whitelist.contains(&r.service_id))
        .collect())
}

/// Read a whitelist file: one service id per line, `#` starts a comment.
pub fn read_whitelist(path: &Path) -> Result<HashSet<String>, HisError> {
    let text = std::fs::read_to_string(path).map_err(|source| HisError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_whitelist(&text))
}

pub fn parse_whitelist(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default().trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

/// All `*.xml` files directly under `dir`, sorted by file name.
pub fn session_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, HisError> {
    let io_err = |source| HisError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file()
            && path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("xml"))
        {
            files.insert(path);
        }
    }
    Ok(files.into_iter().collect())
}

/// Parse every session file under `dir` (in parallel) and return all reports
/// in file-name order. The error names the offending file.
pub fn ingest_dir(dir: &Path) -> Result<(usize, Vec<ReportRecord>), (std::path::PathBuf, HisError)> {
    use rayon::prelude::*;

    let files = session_files(dir).map_err(|e| (dir.to_path_buf(), e))?;
    let parsed: Vec<_> = files
        .par_iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(|source| {
                (
                    path.clone(),
                    HisError::Io {
                        path: path.display().to_string(),
                        source,
                    },
                )
            })?;
            parse_session_file(&bytes)
                .map(|(_, reports)| reports)
                .map_err(|e| (path.clone(), e))
        })
        .collect::<Result<_, _>>()?;
    let sessions = parsed.len();
    Ok((sessions, parsed.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<Session>
  <Header>
    <SessionId>S1</SessionId>
    <PatientId>P1</PatientId>
    <CheckInTime>2021-03-04T07:30:00+07:00</CheckInTime>
    <CheckOutTime>2021-03-04T11:00:00+07:00</CheckOutTime>
  </Header>
  <Reports>
    <Report>
      <ServiceId>CXR01</ServiceId>
      <ReportTime>2021-03-04T08:15:00+07:00</ReportTime>
      <Description>Tim phổi bình thường - Gãy xương đòn trái</Description>
    </Report>
  </Reports>
</Session>"#;

    fn with_header(check_in: &str, check_out: &str, body: &str) -> String {
        format!(
            "<Session><Header><SessionId>S</SessionId><PatientId>P</PatientId>\
             <CheckInTime>{check_in}</CheckInTime><CheckOutTime>{check_out}</CheckOutTime>\
             </Header><Reports>{body}</Reports></Session>"
        )
    }

    #[test]
    fn single_report_inherits_header() {
        let (s, reports) = parse_session_file(ONE.as_bytes()).unwrap();
        assert_eq!(s.session_id, "S1");
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!(r.session_id, "S1");
        assert_eq!(r.patient_id, "P1");
        assert_eq!(r.report_id, "S1#0");
        assert_eq!(r.check_in_time, s.check_in_time);
        assert_eq!(r.report_time.to_rfc3339(), "2021-03-04T01:15:00+00:00");
        assert_eq!(r.description, "Tim phổi bình thường - Gãy xương đòn trái");
    }

    #[test]
    fn zero_reports() {
        let xml = with_header("2021-01-01T00:00:00Z", "2021-01-01T01:00:00Z", "");
        let (_, reports) = parse_session_file(xml.as_bytes()).unwrap();
        assert!(reports.is_empty());
        let xml = xml.replace("<Reports></Reports>", "<Reports/>");
        assert!(parse_session_file(xml.as_bytes()).unwrap().1.is_empty());
        let xml = xml.replace("<Reports/>", "");
        assert!(parse_session_file(xml.as_bytes()).unwrap().1.is_empty());
    }

    #[test]
    fn check_out_before_check_in_is_rejected() {
        let xml = with_header("2021-01-01T05:00:00Z", "2021-01-01T01:00:00Z", "");
        let err = parse_session_file(xml.as_bytes()).unwrap_err();
        assert!(matches!(err, HisError::SchemaViolation { ref path, .. } if path.ends_with("CheckOutTime")), "{err}");
    }

    #[test]
    fn naive_timestamp_is_rejected() {
        let xml = with_header("2021-01-01T05:00:00", "2021-01-01T07:00:00Z", "");
        let err = parse_session_file(xml.as_bytes()).unwrap_err();
        assert!(matches!(err, HisError::BadTimestamp { ref path, .. } if path == "Session/Header/CheckInTime"));
    }

    #[test]
    fn missing_element_reports_path() {
        let body = "<Report><ServiceId>A</ServiceId><ReportTime>2021-01-01T00:30:00Z</ReportTime></Report>";
        let xml = with_header("2021-01-01T00:00:00Z", "2021-01-01T01:00:00Z", body);
        let err = parse_session_file(xml.as_bytes()).unwrap_err();
        match err {
            HisError::SchemaViolation { path, .. } => {
                assert_eq!(path, "Session/Reports/Report[0]/Description")
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn blank_description_is_rejected() {
        let body = "<Report><ServiceId>A</ServiceId><ReportTime>2021-01-01T00:30:00Z</ReportTime><Description>   </Description></Report>";
        let xml = with_header("2021-01-01T00:00:00Z", "2021-01-01T01:00:00Z", body);
        assert!(matches!(
            parse_session_file(xml.as_bytes()),
            Err(HisError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn syntax_error_is_malformed() {
        let err = parse_session_file(b"<Session><Header></Session>").unwrap_err();
        assert!(matches!(err, HisError::MalformedXml { .. }), "{err}");
    }

    #[test]
    fn non_utf8_encodings_are_rejected() {
        let xml = ONE.replace("UTF-8", "ISO-8859-1");
        assert!(matches!(
            parse_session_file(xml.as_bytes()),
            Err(HisError::MalformedXml { .. })
        ));
        assert!(matches!(
            parse_session_file(b"<Session>\xff</Session>"),
            Err(HisError::MalformedXml { .. })
        ));
    }

    #[test]
    fn wrong_root_is_schema_violation() {
        assert!(matches!(
            parse_session_file(b"<Visit/>"),
            Err(HisError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn escaped_text_and_cdata() {
        let body = "<Report><ReportId>R9</ReportId><ServiceId>A</ServiceId><ReportTime>2021-01-01T00:30:00Z</ReportTime>\
                    <Description>a &amp; b <![CDATA[<c>]]></Description></Report>";
        let xml = with_header("2021-01-01T00:00:00Z", "2021-01-01T01:00:00Z", body);
        let (_, r) = parse_session_file(xml.as_bytes()).unwrap();
        assert_eq!(r[0].description, "a & b <c>");
        assert_eq!(r[0].report_id, "R9");
    }

    #[test]
    fn unknown_fields_are_skipped() {
        let body = "<Report><Doctor><Name>X</Name></Doctor><ServiceId>A</ServiceId>\
                    <ReportTime>2021-01-01T00:30:00Z</ReportTime><Description>d</Description></Report>";
        let xml = with_header("2021-01-01T00:00:00Z", "2021-01-01T01:00:00Z", body);
        assert_eq!(parse_session_file(xml.as_bytes()).unwrap().1.len(), 1);
    }

    #[test]
    fn filter_keeps_whitelisted_in_order() {
        let (_, base) = parse_session_file(ONE.as_bytes()).unwrap();
        let mk = |svc: &str| ReportRecord {
            service_id: svc.into(),
            ..base[0].clone()
        };
        let input = vec![mk("A"), mk("B"), mk("A")];
        let wl: HashSet<String> = ["A".to_owned()].into();
        let out = filter_chest_reports(input.clone(), &wl).unwrap();
        assert_eq!(out, vec![mk("A"), mk("A")]);
        let all: HashSet<String> = ["A".to_owned(), "B".to_owned()].into();
        assert_eq!(filter_chest_reports(input.clone(), &all).unwrap(), input);
        assert!(matches!(
            filter_chest_reports(input, &HashSet::new()),
            Err(HisError::EmptyWhitelist)
        ));
    }

    #[test]
    fn whitelist_file_format() {
        let wl = parse_whitelist("# chest\nCXR01\n  CXR02  # PA\n\n");
        assert_eq!(wl.len(), 2);
        assert!(wl.contains("CXR02"));
    }
}
