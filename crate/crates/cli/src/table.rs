//! CSV output with round-trip float formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// 17 significant digits, which round-trips any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvWriter {
    out: BufWriter<File>,
    width: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self {
            out,
            width: header.len(),
        })
    }

    /// One row; integer columns are passed through `ints` as leading fields.
    pub fn row(&mut self, ints: &[usize], floats: &[f64]) -> io::Result<()> {
        debug_assert_eq!(ints.len() + floats.len(), self.width);
        let mut line = String::with_capacity(24 * self.width);
        for (i, v) in ints.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        for (i, v) in floats.iter().enumerate() {
            if i > 0 || !ints.is_empty() {
                line.push(',');
            }
            line.push_str(&fmt_f64(*v));
        }
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}
