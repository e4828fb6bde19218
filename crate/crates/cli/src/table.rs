//! Comma-delimited output with a header row and LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, Result};

pub struct Table {
    writer: csv::Writer<BufWriter<File>>,
    path: String,
}

impl Table {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        let mut table = Self {
            writer,
            path: path.display().to_string(),
        };
        table.row(header.iter().map(|h| h.as_ref().to_string()))?;
        Ok(table)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        let cells: Vec<String> = cells.into_iter().collect();
        self.writer.write_record(&cells).map_err(|e| self.csv_error(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn csv_error(&self, e: csv::Error) -> CliError {
        CliError::Io {
            path: self.path.clone(),
            source: std::io::Error::other(e),
        }
    }
}

/// Shortest representation that parses back to the same value.
pub fn float(x: f64) -> String {
    format!("{x}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
