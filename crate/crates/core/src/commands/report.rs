use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Collects the files a command writes, relative to its output directory.
pub(crate) struct Outputs<'a> {
    root: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    pub fn new(root: &'a Path) -> Self {
        Self {
            root,
            files: Vec::new(),
        }
    }

    /// Registers `name` and returns its full path.
    pub fn file(&mut self, name: impl Into<PathBuf>) -> PathBuf {
        let rel = name.into();
        let full = self.root.join(&rel);
        self.files.push(rel);
        full
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.file(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        for row in rows {
            w.serialize(row)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Both a CSV table and its JSON mirror, `<stem>.csv` and `<stem>.json`.
    pub fn table<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<()> {
        self.csv(&format!("{stem}.csv"), rows)?;
        self.json(&format!("{stem}.json"), rows)
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.files
    }
}

/// Prints a left-aligned text table to standard output.
pub(crate) fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        println!("{}", parts.join("  ").trim_end());
    };
    line(headers.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
}
