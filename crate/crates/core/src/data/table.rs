use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Options for reading delimited text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// One named column. Tokens are kept verbatim (trimmed) so a table written
/// back out is cell-identical; `numbers` is the parsed view of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    tokens: Vec<Option<String>>,
    numbers: Vec<Option<f64>>,
}

impl Column {
    pub fn new(name: impl Into<String>, tokens: Vec<Option<String>>) -> Self {
        let tokens: Vec<Option<String>> = tokens
            .into_iter()
            .map(|t| t.and_then(normalize_token))
            .collect();
        let numbers = tokens
            .iter()
            .map(|t| t.as_deref().and_then(parse_number))
            .collect();
        Column {
            name: name.into(),
            tokens,
            numbers,
        }
    }

    /// Builds a column from numeric cells, formatting with the shortest
    /// representation that parses back to the same value.
    pub fn from_numbers(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        let tokens = values.iter().map(|v| v.map(format_number)).collect();
        Column {
            name: name.into(),
            tokens,
            numbers: values,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Option<String>] {
        &self.tokens
    }

    pub fn token(&self, row: usize) -> Option<&str> {
        self.tokens[row].as_deref()
    }

    pub fn numbers(&self) -> &[Option<f64>] {
        &self.numbers
    }

    pub fn number(&self, row: usize) -> Option<f64> {
        self.numbers[row]
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.tokens[row].is_none()
    }

    pub fn missing_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_none()).count()
    }

    /// True when every present token parses as a finite number.
    pub fn all_numeric(&self) -> bool {
        self.tokens
            .iter()
            .zip(&self.numbers)
            .all(|(t, n)| t.is_none() || n.is_some())
    }

    fn select(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            tokens: rows.iter().map(|&r| self.tokens[r].clone()).collect(),
            numbers: rows.iter().map(|&r| self.numbers[r]).collect(),
        }
    }
}

pub(crate) fn normalize_token(token: String) -> Option<String> {
    let trimmed = token.trim();
    if trimmed.is_empty() {
        None
    } else if trimmed.len() == token.len() {
        Some(token)
    } else {
        Some(trimmed.to_string())
    }
}

pub(crate) fn parse_number(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn format_number(value: f64) -> String {
    // `{}` on f64 is the shortest round-tripping representation.
    format!("{value}")
}

/// Column-major table of raw cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    columns: Vec<Column>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if let Some(first) = columns.first() {
            let n = first.len();
            if let Some(bad) = columns.iter().find(|c| c.len() != n) {
                return Err(Error::Shape(format!(
                    "column `{}` has {} rows, expected {n}",
                    bad.name(),
                    bad.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name `{}`",
                    c.name()
                )));
            }
        }
        Ok(Table { columns })
    }

    /// Builds a table from row-major string records.
    pub fn from_rows<S: AsRef<str>>(header: &[S], rows: &[Vec<Option<String>>]) -> Result<Self> {
        let width = header.len();
        let mut cols: Vec<Vec<Option<String>>> = vec![Vec::with_capacity(rows.len()); width];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: width,
                    found: row.len(),
                });
            }
            for (j, cell) in row.iter().enumerate() {
                cols[j].push(cell.clone());
            }
        }
        Table::new(
            header
                .iter()
                .zip(cols)
                .map(|(h, c)| Column::new(h.as_ref(), c))
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0 || self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// A new table holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
        }
    }

    /// A new table without the named column.
    pub fn without_column(&self, name: &str) -> Table {
        Table {
            columns: self
                .columns
                .iter()
                .filter(|c| c.name() != name)
                .cloned()
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record(self.columns.iter().map(Column::name))?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| c.token(r).unwrap_or("")))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), b',')
    }
}

/// Reads a delimited file from disk.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// Reads delimited text (RFC 4180 quoting). Empty tokens become missing.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut rows: Vec<Vec<Option<String>>> = Vec::new();
    let header: Vec<String> = if options.has_header {
        match records.next() {
            Some(rec) => rec?.iter().map(str::to_string).collect(),
            None => return Err(Error::EmptyTable),
        }
    } else {
        Vec::new()
    };
    for rec in records {
        let rec = rec?;
        rows.push(rec.iter().map(|t| normalize_token(t.to_string())).collect());
    }
    let header = if options.has_header {
        header
    } else {
        let width = rows.first().map_or(0, Vec::len);
        (0..width).map(|i| format!("col_{i}")).collect()
    };
    if header.is_empty() {
        return Err(Error::EmptyTable);
    }
    Table::from_rows(&header, &rows)
}
