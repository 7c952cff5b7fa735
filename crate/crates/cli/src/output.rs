//! Versioned JSON-lines and CSV writers.
//!
//! The first line of every file is a header carrying the schema name, its
//! version and the generation time; everything after it depends only on the
//! configuration and the seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

pub struct Jsonl {
    pub path: PathBuf,
    out: BufWriter<File>,
}

impl Jsonl {
    pub fn create(dir: &Path, name: &str, schema: &str) -> Result<Self, CliError> {
        let (path, mut out) = create(dir, name)?;
        let header = serde_json::json!({ "schema": schema, "version": SCHEMA_VERSION, "generated_at": timestamp() });
        writeln!(out, "{header}")?;
        Ok(Jsonl { path, out })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.out, record)?;
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush()?;
        Ok(self.path)
    }
}

pub struct Csv {
    pub path: PathBuf,
    out: csv::Writer<BufWriter<File>>,
}

impl Csv {
    /// Writes `# schema=.. version=.. generated_at=..` and then the column header.
    pub fn create(dir: &Path, name: &str, schema: &str, columns: &[&str]) -> Result<Self, CliError> {
        let (path, mut file) = create(dir, name)?;
        writeln!(file, "# schema={schema} version={SCHEMA_VERSION} generated_at={}", timestamp())?;
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        out.write_record(columns)?;
        Ok(Csv { path, out })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.out.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush()?;
        Ok(self.path)
    }
}
