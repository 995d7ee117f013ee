//! Result files: NDJSON streams, CSV summaries, raw field dumps and the
//! run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfigFile;
use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(invalid(format!("{} is not a directory", dir.display())));
        }
        if !force && fs::read_dir(dir)?.next().is_some() {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Line-delimited JSON; every record is flushed as soon as it is written,
/// so an interrupted run leaves only complete lines behind it.
pub struct NdjsonWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl NdjsonWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write<T: Serialize>(&self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut out = self.out.lock().expect("ndjson writer poisoned");
        out.write_all(&line)?;
        out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes the real-space values of `field` as little-endian `f64`, row
/// major, to `<stem>.bin`, with a plain-text description in `<stem>.txt`.
/// Returns both file names.
pub fn dump_field(dir: &Path, stem: &str, field: &SpectralField, t: f64) -> Result<[String; 2]> {
    let values = field.inverse();
    let n = field.grid().n();
    let bytes: Vec<u8> = values.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let bin = format!("{stem}.bin");
    let txt = format!("{stem}.txt");
    fs::write(dir.join(&bin), bytes)?;
    fs::write(
        dir.join(&txt),
        format!(
            "name = {stem}\nt = {t}\nn = {n}\ndtype = float64 little-endian\nlayout = row-major [i][j], x_i = 2*pi*i/n\n"
        ),
    )?;
    Ok([bin, txt])
}

/// Reads back a dump written by [`dump_field`].
pub fn read_field_dump(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(invalid(format!("{} is not a float64 dump", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(dir: &Path, name: &str) -> Result<Self> {
        let bytes = fs::read(dir.join(name))?;
        Ok(Self {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerSource {
    Flag,
    Env,
    Default,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workers {
    pub count: usize,
    pub source: WorkerSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: RunConfigFile,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub complete: bool,
    pub workers: Workers,
    pub files: Vec<FileEntry>,
    /// Quantities fixed during the run, such as a calibrated `K`.
    pub derived: serde_json::Map<String, serde_json::Value>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn start(command: &str, config: &RunConfigFile, workers: Workers) -> Self {
        Self {
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            command: command.to_string(),
            config: config.clone(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            complete: false,
            workers,
            files: Vec::new(),
            derived: serde_json::Map::new(),
            error: None,
        }
    }

    pub fn derive(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.derived.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Checksums `files` (relative to `dir`) and stamps the end time.
    pub fn finish(&mut self, dir: &Path, files: &[String], error: Option<String>) -> Result<()> {
        self.files = files
            .iter()
            .filter(|f| dir.join(f).exists())
            .map(|f| FileEntry::of(dir, f))
            .collect::<Result<_>>()?;
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.complete = error.is_none();
        self.error = error;
        Ok(())
    }

    /// Replaces `dir/manifest.json` through a rename, so readers never see
    /// a half-written manifest.
    pub fn write_atomic(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(format!(".{MANIFEST_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn refuses_non_empty_dir() {
        let tmp = tempfile::tempdir().unwrap();
        prepare_output_dir(tmp.path(), false).unwrap();
        fs::write(tmp.path().join("x"), b"1").unwrap();
        assert!(matches!(prepare_output_dir(tmp.path(), false), Err(Error::OutputExists(_))));
        prepare_output_dir(tmp.path(), true).unwrap();
    }

    #[test]
    fn ndjson_lines_parse_independently() {
        let tmp = tempfile::tempdir().unwrap();
        let w = NdjsonWriter::create(&tmp.path().join("a.ndjson")).unwrap();
        w.write(&serde_json::json!({"a": 1})).unwrap();
        w.write(&serde_json::json!({"a": 2})).unwrap();
        let text = fs::read_to_string(w.path()).unwrap();
        // a truncated tail must not spoil earlier records
        let truncated = format!("{text}{{\"a\": 3");
        let good: Vec<serde_json::Value> = truncated
            .lines()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect();
        assert_eq!(good.len(), 2);
        assert_eq!(good[1]["a"], 2);
    }

    #[test]
    fn field_dump_round_trip() {
        let g = make_grid(8).unwrap();
        let f = SpectralField::cosine(&g, 0.5, (1, 0)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let [bin, _] = dump_field(tmp.path(), "u", &f, 0.25).unwrap();
        let back = read_field_dump(&tmp.path().join(bin)).unwrap();
        assert_eq!(back, f.inverse().values());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
