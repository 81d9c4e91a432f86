use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_budget, line_chunks, lines_of, Diagnostic, IngestError, ParseOptions, Parsed};

const TABLE: &str = "xdr";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Call,
    #[default]
    Data,
    Handshake,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Call => "call",
            EventKind::Data => "data",
            EventKind::Handshake => "handshake",
        }
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("data") {
            Ok(EventKind::Data)
        } else if s.eq_ignore_ascii_case("call") {
            Ok(EventKind::Call)
        } else if s.eq_ignore_ascii_case("handshake") {
            Ok(EventKind::Handshake)
        } else {
            Err(())
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One pseudonymous subscriber transaction at a cell site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XdrEvent {
    pub subscriber_id: String,
    pub ts: i64,
    pub cell_id: String,
    #[serde(default)]
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Csv,
    Ndjson,
}

impl Encoding {
    /// NDJSON when the first non-blank byte opens an object, CSV otherwise.
    pub fn detect(bytes: &[u8]) -> Encoding {
        match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(b'{') => Encoding::Ndjson,
            _ => Encoding::Csv,
        }
    }
}

/// Borrowed view of one accepted line.
pub(crate) struct RecordRef<'a> {
    pub subscriber_id: Cow<'a, str>,
    pub ts: i64,
    pub cell_id: Cow<'a, str>,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug)]
pub(super) struct CsvSchema {
    subscriber_id: usize,
    ts: usize,
    cell_id: usize,
    kind: Option<usize>,
    width: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Schema {
    Csv(CsvSchema),
    Ndjson,
}

/// Resolves the schema and returns it with the body slice and the line number
/// of the body's first line.
pub(crate) fn prepare(bytes: &[u8]) -> Result<(Schema, &[u8], usize), IngestError> {
    if bytes.is_empty() {
        return Ok((Schema::Ndjson, bytes, 1));
    }
    if Encoding::detect(bytes) == Encoding::Ndjson {
        return Ok((Schema::Ndjson, bytes, 1));
    }
    // Header is the first non-blank line.
    let mut offset = 0;
    let mut line_no = 1;
    for raw in bytes.split(|&b| b == b'\n') {
        let next = offset + raw.len() + 1;
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        if line.iter().all(u8::is_ascii_whitespace) {
            offset = next;
            line_no += 1;
            continue;
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(line);
        let header = rdr
            .records()
            .next()
            .transpose()
            .map_err(|e| IngestError::csv(TABLE, line_no, e))?
            .ok_or(IngestError::MissingHeader { table: TABLE })?;
        let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
        let col = |name: &'static str| names.iter().position(|h| h == name);
        let need = |name: &'static str| col(name).ok_or(IngestError::MissingColumn { table: TABLE, column: name });
        let schema = CsvSchema {
            subscriber_id: need("subscriber_id")?,
            ts: need("ts")?,
            cell_id: need("cell_id")?,
            kind: col("kind"),
            width: names.len(),
        };
        let body = &bytes[next.min(bytes.len())..];
        return Ok((Schema::Csv(schema), body, line_no + 1));
    }
    Err(IngestError::MissingHeader { table: TABLE })
}

/// Visits every accepted line of `chunk`; returns (lines seen, diagnostics).
pub(crate) fn scan_chunk<F>(
    schema: Schema,
    chunk: &[u8],
    first_line: usize,
    horizon: Option<(i64, i64)>,
    mut visit: F,
) -> (usize, Vec<Diagnostic>)
where
    F: FnMut(usize, RecordRef<'_>),
{
    let mut lines = 0;
    let mut diags = Vec::new();
    for (line_no, line) in lines_of(chunk, first_line) {
        lines += 1;
        let parsed = match schema {
            Schema::Csv(s) => parse_csv_line(&s, line, line_no),
            Schema::Ndjson => parse_json_line(line, line_no),
        };
        match parsed.and_then(|r| check_record(r, line_no, horizon)) {
            Ok(r) => visit(line_no, r),
            Err(d) => diags.push(d),
        }
    }
    (lines, diags)
}

fn check_record(r: RecordRef<'_>, line: usize, horizon: Option<(i64, i64)>) -> Result<RecordRef<'_>, Diagnostic> {
    if r.subscriber_id.trim().is_empty() {
        return Err(Diagnostic::new(line, Some("subscriber_id"), "empty"));
    }
    if r.cell_id.trim().is_empty() {
        return Err(Diagnostic::new(line, Some("cell_id"), "empty"));
    }
    if let Some((lo, hi)) = horizon {
        if r.ts < lo || r.ts >= hi {
            return Err(Diagnostic::new(line, Some("ts"), format!("{} outside observation horizon [{lo}, {hi})", r.ts)));
        }
    }
    Ok(r)
}

fn parse_ts(raw: &str, line: usize) -> Result<i64, Diagnostic> {
    raw.trim()
        .parse::<i64>()
        .map_err(|_| Diagnostic::new(line, Some("ts"), format!("malformed timestamp `{raw}`")))
}

fn parse_kind(raw: &str, line: usize) -> Result<EventKind, Diagnostic> {
    raw.parse().map_err(|_| Diagnostic::new(line, Some("kind"), format!("unknown event kind `{raw}`")))
}

fn parse_csv_line<'a>(s: &CsvSchema, line: &'a [u8], line_no: usize) -> Result<RecordRef<'a>, Diagnostic> {
    let text = std::str::from_utf8(line).map_err(|_| Diagnostic::new(line_no, None, "invalid UTF-8"))?;
    if text.contains('"') {
        return parse_quoted_csv_line(s, text, line_no);
    }
    // Fast path: unquoted fields.
    let mut fields: [&str; 8] = [""; 8];
    let mut n = 0;
    for f in text.split(',') {
        if n < fields.len() {
            fields[n] = f;
        }
        n += 1;
    }
    if n != s.width || n > fields.len() {
        return Err(Diagnostic::new(line_no, None, format!("expected {} fields, found {n}", s.width)));
    }
    Ok(RecordRef {
        subscriber_id: Cow::Borrowed(fields[s.subscriber_id].trim()),
        ts: parse_ts(fields[s.ts], line_no)?,
        cell_id: Cow::Borrowed(fields[s.cell_id].trim()),
        kind: match s.kind {
            Some(k) => parse_kind(fields[k], line_no)?,
            None => EventKind::Data,
        },
    })
}

fn parse_quoted_csv_line<'a>(s: &CsvSchema, text: &str, line_no: usize) -> Result<RecordRef<'a>, Diagnostic> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let rec = match rdr.records().next() {
        Some(Ok(r)) => r,
        Some(Err(e)) => return Err(Diagnostic::new(line_no, None, e.to_string())),
        None => return Err(Diagnostic::new(line_no, None, "empty record")),
    };
    if rec.len() != s.width {
        return Err(Diagnostic::new(line_no, None, format!("expected {} fields, found {}", s.width, rec.len())));
    }
    Ok(RecordRef {
        subscriber_id: Cow::Owned(rec[s.subscriber_id].trim().to_string()),
        ts: parse_ts(&rec[s.ts], line_no)?,
        cell_id: Cow::Owned(rec[s.cell_id].trim().to_string()),
        kind: match s.kind {
            Some(k) => parse_kind(&rec[k], line_no)?,
            None => EventKind::Data,
        },
    })
}

#[derive(Deserialize)]
struct JsonLine<'a> {
    #[serde(borrow)]
    subscriber_id: Option<Cow<'a, str>>,
    ts: Option<serde_json::Value>,
    #[serde(borrow)]
    cell_id: Option<Cow<'a, str>>,
    #[serde(borrow)]
    kind: Option<Cow<'a, str>>,
}

fn parse_json_line(line: &[u8], line_no: usize) -> Result<RecordRef<'_>, Diagnostic> {
    let j: JsonLine<'_> = serde_json::from_slice(line).map_err(|e| Diagnostic::new(line_no, None, format!("invalid JSON: {e}")))?;
    let subscriber_id = j.subscriber_id.ok_or_else(|| Diagnostic::new(line_no, Some("subscriber_id"), "missing"))?;
    let cell_id = j.cell_id.ok_or_else(|| Diagnostic::new(line_no, Some("cell_id"), "missing"))?;
    let ts = match j.ts {
        Some(serde_json::Value::Number(n)) => {
            n.as_i64().ok_or_else(|| Diagnostic::new(line_no, Some("ts"), format!("malformed timestamp `{n}`")))?
        }
        Some(serde_json::Value::String(s)) => parse_ts(&s, line_no)?,
        Some(other) => return Err(Diagnostic::new(line_no, Some("ts"), format!("malformed timestamp `{other}`"))),
        None => return Err(Diagnostic::new(line_no, Some("ts"), "missing")),
    };
    let kind = match j.kind {
        Some(k) => parse_kind(&k, line_no)?,
        None => EventKind::Data,
    };
    Ok(RecordRef { subscriber_id, ts, cell_id, kind })
}

/// Parses an xDR export (CSV with header, or NDJSON) into typed events.
///
/// Events come back in file order; the work is split into newline-aligned
/// chunks parsed in parallel and merged in line order.
pub fn parse_xdr(bytes: &[u8], opts: &ParseOptions) -> Result<Parsed<XdrEvent>, IngestError> {
    let (schema, body, first_line) = prepare(bytes)?;
    let parts = rayon::current_num_threads() * 4;
    let results: Vec<(Vec<XdrEvent>, usize, Vec<Diagnostic>)> = line_chunks(body, first_line, parts)
        .into_par_iter()
        .map(|(chunk, line)| {
            let mut out = Vec::new();
            let (lines, diags) = scan_chunk(schema, chunk, line, opts.horizon, |_, r| {
                out.push(XdrEvent {
                    subscriber_id: r.subscriber_id.into_owned(),
                    ts: r.ts,
                    cell_id: r.cell_id.into_owned(),
                    kind: r.kind,
                })
            });
            (out, lines, diags)
        })
        .collect();
    let mut parsed = Parsed { records: Vec::new(), diagnostics: Vec::new(), lines: 0 };
    for (records, lines, diags) in results {
        parsed.records.extend(records);
        parsed.lines += lines;
        parsed.diagnostics.extend(diags);
    }
    check_budget(parsed.lines, &parsed.diagnostics, opts)?;
    Ok(parsed)
}

/// Writes events in the canonical CSV schema.
pub fn write_xdr_csv<W: Write>(events: &[XdrEvent], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_id", "ts", "cell_id", "kind"])?;
    for e in events {
        w.write_record([e.subscriber_id.as_str(), &e.ts.to_string(), e.cell_id.as_str(), e.kind.as_str()])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, ts: i64, c: &str, kind: EventKind) -> XdrEvent {
        XdrEvent { subscriber_id: s.into(), ts, cell_id: c.into(), kind }
    }

    #[test]
    fn csv_line_maps_fields() {
        let p = parse_xdr(b"subscriber_id,ts,cell_id,kind\nu1,1582848000,c9,data\n", &ParseOptions::default()).unwrap();
        assert_eq!(p.records, vec![ev("u1", 1_582_848_000, "c9", EventKind::Data)]);
        assert_eq!(p.lines, 1);
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn malformed_timestamp_names_line_and_field() {
        let input = b"subscriber_id,ts,cell_id,kind\nu1,not-a-time,c9,data\n";
        let opts = ParseOptions { max_error_rate: 1.0, horizon: None };
        let p = parse_xdr(input, &opts).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.diagnostics.len(), 1);
        let d = &p.diagnostics[0];
        assert_eq!((d.line, d.field), (2, Some("ts")));
        assert!(d.to_string().contains("line 2"));
    }

    #[test]
    fn kind_column_is_optional_and_reorderable() {
        let p = parse_xdr(b"cell_id,subscriber_id,ts\nc1,u1,5\n", &ParseOptions::default()).unwrap();
        assert_eq!(p.records, vec![ev("u1", 5, "c1", EventKind::Data)]);
    }

    #[test]
    fn quoted_fields_take_slow_path() {
        let p = parse_xdr(b"subscriber_id,ts,cell_id,kind\n\"u,1\",5,c1,call\n", &ParseOptions::default()).unwrap();
        assert_eq!(p.records, vec![ev("u,1", 5, "c1", EventKind::Call)]);
    }

    #[test]
    fn ndjson_equivalent_keys() {
        let input = b"{\"subscriber_id\":\"u1\",\"ts\":7,\"cell_id\":\"c2\",\"kind\":\"handshake\"}\n{\"subscriber_id\":\"u2\",\"ts\":\"8\",\"cell_id\":\"c3\"}\n";
        let p = parse_xdr(input, &ParseOptions::default()).unwrap();
        assert_eq!(p.records, vec![ev("u1", 7, "c2", EventKind::Handshake), ev("u2", 8, "c3", EventKind::Data)]);
    }

    #[test]
    fn error_budget_aborts() {
        let input = b"subscriber_id,ts,cell_id,kind\nu1,x,c9,data\nu1,1,c9,data\n";
        let err = parse_xdr(input, &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::ErrorBudgetExceeded { rejected: 1, lines: 2, .. }));
    }

    #[test]
    fn horizon_rejects_out_of_range() {
        let opts = ParseOptions { max_error_rate: 1.0, horizon: Some((10, 20)) };
        let p = parse_xdr(b"subscriber_id,ts,cell_id\nu,9,c\nu,10,c\nu,20,c\n", &opts).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.diagnostics.iter().map(|d| d.line).collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn bad_width_and_unknown_kind() {
        let opts = ParseOptions { max_error_rate: 1.0, horizon: None };
        let p = parse_xdr(b"subscriber_id,ts,cell_id,kind\nu,1,c\nu,1,c,sms\n,1,c,data\n", &opts).unwrap();
        let fields: Vec<_> = p.diagnostics.iter().map(|d| d.field).collect();
        assert_eq!(fields, vec![None, Some("kind"), Some("subscriber_id")]);
    }

    #[test]
    fn missing_header_column() {
        let err = parse_xdr(b"subscriber_id,time,cell_id\n", &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { column: "ts", .. }));
    }

    fn token() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9_.:-]{1,12}"
    }

    fn event() -> impl Strategy<Value = XdrEvent> {
        (token(), any::<i64>(), token(), prop_oneof![Just(EventKind::Call), Just(EventKind::Data), Just(EventKind::Handshake)])
            .prop_map(|(s, ts, c, kind)| XdrEvent { subscriber_id: s, ts, cell_id: c, kind })
    }

    proptest! {
        #[test]
        fn canonical_csv_round_trips(events in prop::collection::vec(event(), 0..60)) {
            let mut buf = Vec::new();
            write_xdr_csv(&events, &mut buf).unwrap();
            let parsed = parse_xdr(&buf, &ParseOptions::default()).unwrap();
            prop_assert_eq!(parsed.records, events);
        }

        #[test]
        fn parsing_is_total(lines in prop::collection::vec("[a-z0-9,\"]{0,20}", 0..40)) {
            let mut input = String::from("subscriber_id,ts,cell_id,kind\n");
            for l in &lines { input.push_str(l); input.push('\n'); }
            let opts = ParseOptions { max_error_rate: 1.0, horizon: None };
            let p = parse_xdr(input.as_bytes(), &opts).unwrap();
            let non_blank = lines.iter().filter(|l| !l.trim().is_empty()).count();
            prop_assert_eq!(p.lines, non_blank);
            prop_assert_eq!(p.records.len() + p.diagnostics.len(), non_blank);
        }
    }
}
