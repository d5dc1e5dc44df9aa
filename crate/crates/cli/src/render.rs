use serde::Serialize;

use crate::args::Format;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    report: &'a T,
}

pub fn json<T: Serialize>(command: &str, report: &T) -> Result<String, CliError> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        report,
    };
    let mut s = serde_json::to_string_pretty(&env)
        .map_err(|e| CliError::data(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// A rectangular table rendered as aligned text or CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub title: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(headers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Table {
            title: None,
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn titled(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = String::new();
        if let Some(t) = &self.title {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str(&line(&self.headers));
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::data(format!("cannot write csv: {e}"));
        w.write_record(&self.headers).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::data(format!("cannot write csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| CliError::data(e.to_string()))
    }
}

/// Render `tables` in a non-JSON format; text separates them with blank lines.
pub fn tables(format: Format, tables: &[Table]) -> Result<String, CliError> {
    match format {
        Format::Text => Ok(tables
            .iter()
            .map(Table::to_text)
            .collect::<Vec<_>>()
            .join("\n")),
        Format::Csv => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                out.push_str(&t.to_csv()?);
            }
            Ok(out)
        }
        Format::Json => unreachable!("json is rendered from the report"),
    }
}

/// Fixed-decimal number for text tables; full precision otherwise.
pub fn num(v: f64, format: Format, digits: usize) -> String {
    match format {
        Format::Text if v.is_finite() => format!("{v:.digits$}"),
        _ => format!("{v}"),
    }
}

pub fn opt_num(v: Option<f64>, format: Format, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |v| num(v, format, digits))
}

pub fn interval(ci: [f64; 2], format: Format, digits: usize) -> String {
    format!(
        "[{}, {}]",
        num(ci[0], format, digits),
        num(ci[1], format, digits)
    )
}
