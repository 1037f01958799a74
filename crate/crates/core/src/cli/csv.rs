//! CSV emission. Every file starts with a `# schema: <name>/<version>` line
//! followed by a header row.

use std::fmt::Write as _;
use std::path::Path;

use super::CliError;

pub struct Table {
    buf: String,
    columns: usize,
}

impl Table {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        let mut buf = format!("# schema: {schema}\n");
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    /// Appends one row; panics on a column-count mismatch, which is a bug.
    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut n = 0;
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            write!(self.buf, "{c}").expect("writing to a String");
            n += 1;
        }
        assert_eq!(n, self.columns, "row width");
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        crate::snapshot::write_atomic(path, self.buf.as_bytes())
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}

/// Reads a CSV body: skips `#` comment lines and returns the header plus
/// `(line number, fields)` rows.
pub fn read(text: &str) -> (Option<Vec<String>>, Vec<(usize, Vec<String>)>) {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if header.is_none() {
            header = Some(fields);
        } else {
            rows.push((i + 1, fields));
        }
    }
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_line_and_header() {
        let mut t = Table::new("demo/1", &["a", "b"]);
        t.row([1.5, 2.0]);
        assert_eq!(t.as_str(), "# schema: demo/1\na,b\n1.5,2\n");
        let (h, rows) = read(t.as_str());
        assert_eq!(h.unwrap(), vec!["a", "b"]);
        assert_eq!(rows, vec![(3, vec!["1.5".to_string(), "2".to_string()])]);
    }
}
