//! Output directory handling: CSV files are written under a `.partial`
//! suffix and renamed only once the command has succeeded, then the manifest
//! is written atomically next to them.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

/// Version of every CSV schema this binary writes.
pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";

struct Pending {
    name: String,
    schema: String,
}

pub struct Outputs {
    dir: PathBuf,
    pending: Vec<Pending>,
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.partial"))
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
        })
    }

    /// Opens `name` for writing and emits the header row.
    pub fn csv(&mut self, name: &str, header: &[String]) -> Result<csv::Writer<File>, CliError> {
        if self.pending.iter().any(|p| p.name == name) {
            return Err(CliError::Internal(format!("output {name} opened twice")));
        }
        let file = File::create(partial(&self.dir, name))?;
        self.pending.push(Pending {
            name: name.to_string(),
            schema: header.join(","),
        });
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(writer)
    }

    /// Publishes the CSV files and writes the manifest. `manifest` is
    /// extended with the output list.
    pub fn finish(self, mut manifest: Value) -> Result<(), CliError> {
        let files: Vec<Value> = self
            .pending
            .iter()
            .map(
                |p| json!({ "file": p.name, "schema": p.schema, "schema_version": SCHEMA_VERSION }),
            )
            .collect();
        manifest["outputs"] = Value::Array(files);
        for p in &self.pending {
            fs::rename(partial(&self.dir, &p.name), self.dir.join(&p.name))?;
        }
        let tmp = self.dir.join(format!("{MANIFEST}.partial"));
        fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
        fs::rename(&tmp, self.dir.join(MANIFEST))?;
        Ok(())
    }

    /// Removes everything this run wrote.
    pub fn discard(self) {
        for p in &self.pending {
            let _ = fs::remove_file(partial(&self.dir, &p.name));
        }
        let _ = fs::remove_file(self.dir.join(format!("{MANIFEST}.partial")));
    }
}

pub fn energy_columns(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|k| format!("e_{k}"))
}
