//! Trace-point database and its XML file form.
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <tracepoints max_tp="3" fingerprint="9f2c...">
//!   <tp id="0" pou="Sign" kind="block" line="9" col="5" file="sign.st"/>
//! </tracepoints>
//! ```
//!
//! Generated identifier names are recorded as extra header attributes only
//! when they differ from the defaults (`tpa`, `tpr`, `tp_reset`, `tp_save`).

use std::fmt::Write as _;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::depmodel::{DependencyModel, NodeId, NodeKind};

#[derive(Debug, Error)]
pub enum TraceDbError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace-point database: {0}")]
    Malformed(String),
    #[error("fingerprint mismatch: database {expected}, project {actual}")]
    FingerprintMismatch { expected: String, actual: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointKind {
    Block,
    Step,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Block => "block",
            PointKind::Step => "step",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePoint {
    pub id: u32,
    /// Qualified owner: `Pou`, `Pou.Action` for blocks, `Pou.Step` for steps.
    pub pou: String,
    pub kind: PointKind,
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl TracePoint {
    /// Model node this point records: the block with the same sequential id,
    /// or the step with the same qualified name.
    pub fn node_in(&self, model: &DependencyModel) -> Option<NodeId> {
        match self.kind {
            PointKind::Block => model.block(self.id).map(|n| n.id),
            PointKind::Step => model.find(NodeKind::Step, &self.pou).map(|n| n.id),
        }
    }
}

/// Identifiers chosen for the generated tracing runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceNames {
    pub array: String,
    pub record: String,
    pub reset: String,
    pub save: String,
}

impl Default for TraceNames {
    fn default() -> Self {
        TraceNames {
            array: "tpa".into(),
            record: "tpr".into(),
            reset: "tp_reset".into(),
            save: "tp_save".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePointDatabase {
    /// Sorted by id; ids are `0..=max_tp`.
    pub points: Vec<TracePoint>,
    pub max_tp: i64,
    pub fingerprint: String,
    pub names: TraceNames,
}

impl TracePointDatabase {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: u32) -> Option<&TracePoint> {
        self.points.get(id as usize).filter(|p| p.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.points.iter().map(|p| p.id)
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = write!(
            out,
            "<tracepoints max_tp=\"{}\" fingerprint=\"{}\"",
            self.max_tp,
            escape(&self.fingerprint)
        );
        let defaults = TraceNames::default();
        for (attr, value, default) in [
            ("array", &self.names.array, &defaults.array),
            ("record", &self.names.record, &defaults.record),
            ("reset", &self.names.reset, &defaults.reset),
            ("save", &self.names.save, &defaults.save),
        ] {
            if value != default {
                let _ = write!(out, " {attr}=\"{}\"", escape(value));
            }
        }
        out.push_str(">\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "  <tp id=\"{}\" pou=\"{}\" kind=\"{}\" line=\"{}\" col=\"{}\" file=\"{}\"/>",
                p.id,
                escape(&p.pou),
                p.kind.as_str(),
                p.line,
                p.col,
                escape(&p.file)
            );
        }
        out.push_str("</tracepoints>\n");
        out
    }

    pub fn from_xml(text: &str) -> Result<Self, TraceDbError> {
        let mut reader = Reader::from_str(text);
        reader.config_mut().trim_text(true);
        let mut header: Option<TracePointDatabase> = None;
        let mut closed = false;
        loop {
            let event = reader
                .read_event()
                .map_err(|e| TraceDbError::Malformed(e.to_string()))?;
            match event {
                Event::Decl(_) | Event::Comment(_) => {}
                Event::Start(ref e) | Event::Empty(ref e) => {
                    let self_closing = matches!(event, Event::Empty(_));
                    match e.name().as_ref() {
                        "tracepoints" if header.is_none() => {
                            header = Some(parse_header(e)?);
                            closed = self_closing;
                        }
                        "tp" => {
                            let db = header.as_mut().ok_or_else(|| {
                                TraceDbError::Malformed("<tp> outside <tracepoints>".into())
                            })?;
                            db.points.push(parse_point(e)?);
                        }
                        other => {
                            return Err(TraceDbError::Malformed(format!(
                                "unexpected element <{other}>"
                            )))
                        }
                    }
                }
                Event::End(e) => {
                    if e.name().as_ref() == "tracepoints" {
                        closed = true;
                    }
                }
                Event::Eof => break,
                Event::Text(t) => {
                    return Err(TraceDbError::Malformed(format!(
                        "unexpected text '{}'",
                        t.as_ref()
                    )))
                }
                _ => {}
            }
        }
        let db = header.ok_or_else(|| TraceDbError::Malformed("missing <tracepoints>".into()))?;
        if !closed {
            return Err(TraceDbError::Malformed("unterminated <tracepoints>".into()));
        }
        for (i, p) in db.points.iter().enumerate() {
            if p.id as usize != i {
                return Err(TraceDbError::Malformed(format!(
                    "trace point ids must be 0..N in order, found {} at position {i}",
                    p.id
                )));
            }
        }
        if db.max_tp != db.points.len() as i64 - 1 {
            return Err(TraceDbError::Malformed(format!(
                "max_tp {} does not match {} points",
                db.max_tp,
                db.points.len()
            )));
        }
        Ok(db)
    }
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

fn attrs(e: &BytesStart<'_>) -> Result<Vec<(String, String)>, TraceDbError> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(|err| TraceDbError::Malformed(err.to_string()))?;
            let key = a.key.as_ref().to_string();
            let raw = a.value.to_string();
            let value = quick_xml::escape::unescape(&raw)
                .map_err(|err| TraceDbError::Malformed(err.to_string()))?
                .into_owned();
            Ok((key, value))
        })
        .collect()
}

fn required<'a>(attrs: &'a [(String, String)], key: &str, elem: &str) -> Result<&'a str, TraceDbError> {
    attrs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| TraceDbError::Malformed(format!("<{elem}> lacks attribute '{key}'")))
}

fn number<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, TraceDbError> {
    value
        .parse()
        .map_err(|_| TraceDbError::Malformed(format!("attribute '{key}' is not a number: '{value}'")))
}

fn parse_header(e: &BytesStart<'_>) -> Result<TracePointDatabase, TraceDbError> {
    let a = attrs(e)?;
    let mut names = TraceNames::default();
    for (k, v) in &a {
        match k.as_str() {
            "array" => names.array = v.clone(),
            "record" => names.record = v.clone(),
            "reset" => names.reset = v.clone(),
            "save" => names.save = v.clone(),
            _ => {}
        }
    }
    Ok(TracePointDatabase {
        points: Vec::new(),
        max_tp: number(required(&a, "max_tp", "tracepoints")?, "max_tp")?,
        fingerprint: required(&a, "fingerprint", "tracepoints")?.to_string(),
        names,
    })
}

fn parse_point(e: &BytesStart<'_>) -> Result<TracePoint, TraceDbError> {
    let a = attrs(e)?;
    let kind = match required(&a, "kind", "tp")? {
        "block" => PointKind::Block,
        "step" => PointKind::Step,
        other => return Err(TraceDbError::Malformed(format!("unknown point kind '{other}'"))),
    };
    Ok(TracePoint {
        id: number(required(&a, "id", "tp")?, "id")?,
        pou: required(&a, "pou", "tp")?.to_string(),
        kind,
        file: required(&a, "file", "tp")?.to_string(),
        line: number(required(&a, "line", "tp")?, "line")?,
        col: number(required(&a, "col", "tp")?, "col")?,
    })
}

pub fn emit_tp_database(db: &TracePointDatabase, path: &Path) -> Result<(), TraceDbError> {
    std::fs::write(path, db.to_xml()).map_err(|source| TraceDbError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a database; when `expected_fingerprint` is given it must match the
/// recorded one.
pub fn load_tp_database(
    path: &Path,
    expected_fingerprint: Option<&str>,
) -> Result<TracePointDatabase, TraceDbError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceDbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let db = TracePointDatabase::from_xml(&text)?;
    if let Some(actual) = expected_fingerprint {
        if actual != db.fingerprint {
            return Err(TraceDbError::FingerprintMismatch {
                expected: db.fingerprint,
                actual: actual.to_string(),
            });
        }
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(id: u32, kind: PointKind) -> TracePoint {
        TracePoint {
            id,
            pou: "Sign".into(),
            kind,
            file: "sign.st".into(),
            line: 9 + id,
            col: 5,
        }
    }

    fn db(n: u32) -> TracePointDatabase {
        TracePointDatabase {
            points: (0..n).map(|i| point(i, PointKind::Block)).collect(),
            max_tp: n as i64 - 1,
            fingerprint: "abc123".into(),
            names: TraceNames::default(),
        }
    }

    #[test]
    fn four_points_xml() {
        let xml = db(4).to_xml();
        assert_eq!(xml.matches("<tp ").count(), 4);
        assert!(xml.starts_with(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<tracepoints max_tp=\"3\" fingerprint=\"abc123\">\n"
        ));
        assert!(xml.contains(
            "  <tp id=\"0\" pou=\"Sign\" kind=\"block\" line=\"9\" col=\"5\" file=\"sign.st\"/>\n"
        ));
    }

    #[test]
    fn empty_database() {
        let d = db(0);
        assert_eq!(d.max_tp, -1);
        let xml = d.to_xml();
        assert!(xml.contains("max_tp=\"-1\""));
        assert_eq!(TracePointDatabase::from_xml(&xml).unwrap(), d);
    }

    #[test]
    fn renamed_runtime_is_recorded() {
        let mut d = db(1);
        d.names.record = "tpr_1".into();
        let xml = d.to_xml();
        assert!(xml.contains(" record=\"tpr_1\""));
        assert!(!xml.contains(" array="));
        assert_eq!(TracePointDatabase::from_xml(&xml).unwrap(), d);
    }

    #[test]
    fn rejects_gaps_and_bad_kind() {
        let bad = db(2).to_xml().replace("id=\"1\"", "id=\"5\"");
        assert!(matches!(
            TracePointDatabase::from_xml(&bad),
            Err(TraceDbError::Malformed(_))
        ));
        let bad = db(1).to_xml().replace("kind=\"block\"", "kind=\"edge\"");
        assert!(TracePointDatabase::from_xml(&bad).is_err());
        assert!(TracePointDatabase::from_xml("<nope/>").is_err());
    }

    #[test]
    fn fingerprint_checked_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tp.xml");
        emit_tp_database(&db(2), &path).unwrap();
        assert!(load_tp_database(&path, Some("abc123")).is_ok());
        assert!(matches!(
            load_tp_database(&path, Some("other")),
            Err(TraceDbError::FingerprintMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn xml_round_trip(
            owners in proptest::collection::vec(("[A-Za-z_][A-Za-z0-9_.<&\"]{0,12}", any::<bool>(), 1u32..5000, 1u32..200), 0..40),
            fp in "[0-9a-f]{0,64}",
        ) {
            let points: Vec<TracePoint> = owners
                .into_iter()
                .enumerate()
                .map(|(i, (pou, step, line, col))| TracePoint {
                    id: i as u32,
                    pou,
                    kind: if step { PointKind::Step } else { PointKind::Block },
                    file: "dir/file name.st".into(),
                    line,
                    col,
                })
                .collect();
            let d = TracePointDatabase {
                max_tp: points.len() as i64 - 1,
                points,
                fingerprint: fp,
                names: TraceNames::default(),
            };
            prop_assert_eq!(TracePointDatabase::from_xml(&d.to_xml()).unwrap(), d);
        }
    }
}
