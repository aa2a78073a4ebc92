//! CSV output with a config-echo preamble.
//!
//! Every file starts with `# key = value` comment lines carrying the
//! resolved configuration and run metadata, so any result is
//! re-derivable from its own header. Readers should treat `#` lines as
//! comments. Missing statistics (e.g. variance below two samples) are
//! written as `nan`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::trainer::TrainConfig;

pub struct CsvFile {
    out: BufWriter<fs::File>,
}

impl CsvFile {
    /// Creates the file and writes the config echo plus `extra` metadata
    /// as comment lines.
    pub fn create(
        path: impl AsRef<Path>,
        cfg: &TrainConfig,
        extra: &[(&str, &str)],
    ) -> io::Result<CsvFile> {
        let file = fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        for (k, v) in extra {
            writeln!(out, "# {k} = {v}")?;
        }
        for (k, v) in cfg.echo_entries() {
            writeln!(out, "# {k} = {v}")?;
        }
        Ok(CsvFile { out })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> io::Result<()> {
        let line: Vec<String> = fields.iter().map(|f| escape(f.as_ref())).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// `nan` for absent optional statistics, full-precision decimal otherwise.
pub fn opt_stat(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "nan".to_string(),
    }
}
