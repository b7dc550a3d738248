//! CSV documents with leading `# key=value` metadata rows.

use std::fmt::Display;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct FormatError(pub String);

impl FormatError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvDoc {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvDoc {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Result<usize, FormatError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FormatError::new(format!("missing column {name:?}")))
    }

    pub fn expect_header(&self, expected: &[&str]) -> Result<(), FormatError> {
        if self.header.iter().map(String::as_str).eq(expected.iter().copied()) {
            Ok(())
        } else {
            Err(FormatError::new(format!(
                "unexpected header {:?}, expected {:?}",
                self.header.join(","),
                expected.join(",")
            )))
        }
    }
}

pub fn parse_field<T: std::str::FromStr>(value: &str, what: &str, line: usize) -> Result<T, FormatError>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| FormatError::new(format!("row {line}: bad {what} {value:?}: {e}")))
}

pub fn read_doc(text: &str) -> Result<CsvDoc, FormatError> {
    let mut doc = CsvDoc::default();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            let rest = rest.trim();
            match rest.split_once('=') {
                Some((k, v)) => doc.meta.push((k.trim().to_string(), v.trim().to_string())),
                None if rest.is_empty() => {}
                None => return Err(FormatError::new(format!("metadata row without `=`: {line:?}"))),
            }
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    doc.header = reader
        .headers()
        .map_err(|e| FormatError::new(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if doc.header.is_empty() || doc.header.iter().all(String::is_empty) {
        return Err(FormatError::new("missing CSV header"));
    }
    for record in reader.records() {
        let record = record.map_err(|e| FormatError::new(e.to_string()))?;
        doc.rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(doc)
}

pub fn write_doc<R, F>(meta: &[(String, String)], header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = Vec<F>>,
    F: AsRef<str>,
{
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    writer.write_record(header).expect("in-memory csv write");
    for row in rows {
        writer
            .write_record(row.iter().map(|f| f.as_ref()))
            .expect("in-memory csv write");
    }
    let bytes = writer.into_inner().expect("in-memory csv flush");
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    out
}

/// Formats a float so that it parses back to the identical value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_keys_survive() {
        let text = write_doc(
            &[("default_action".into(), "N".into())],
            &["state_key", "action"],
            vec![vec!["3,4", "E"], vec!["1,1", "S"]],
        );
        assert!(text.starts_with("# default_action=N\nstate_key,action\n\"3,4\",E\n"));
        let doc = read_doc(&text).unwrap();
        assert_eq!(doc.meta("default_action"), Some("N"));
        assert_eq!(doc.rows[0], vec!["3,4".to_string(), "E".to_string()]);
        doc.expect_header(&["state_key", "action"]).unwrap();
        assert!(doc.expect_header(&["a"]).is_err());
    }

    #[test]
    fn ragged_rows_are_errors() {
        assert!(read_doc("a,b\n1,2,3\n").is_err());
    }
}
