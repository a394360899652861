//! JSON Lines recording files: a header line, then one scan per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use radclutter::{Recording, Scan, SensorMount};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub const RECORDING_FORMAT: &str = "radclutter-recording";
pub const RECORDING_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub mounts: Vec<SensorMount>,
    /// Tool name, version, seed and scenario of the producing run, plus any
    /// later processing steps. No wall-clock time, so output is reproducible.
    #[serde(default)]
    pub generator: Map<String, Value>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordingFile {
    pub header: Header,
    pub recording: Recording,
}

impl RecordingFile {
    pub fn new(recording: Recording, generator: Map<String, Value>) -> Self {
        RecordingFile {
            header: Header {
                format: RECORDING_FORMAT.into(),
                version: RECORDING_VERSION,
                mounts: recording.mounts.clone(),
                generator,
                extra: Map::new(),
            },
            recording,
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| CliError::Data(format!("{origin}: empty recording file")))?;
        let raw: Value = serde_json::from_str(first)
            .map_err(|e| CliError::Data(format!("{origin}:1: header is not JSON: {e}")))?;
        let format = raw.get("format").and_then(Value::as_str).unwrap_or_default();
        if format != RECORDING_FORMAT {
            return Err(CliError::Data(format!("{origin}: not a recording file (format {format:?})")));
        }
        let header: Header = serde_json::from_value(raw)
            .map_err(|e| CliError::Data(format!("{origin}:1: invalid header: {e}")))?;
        if header.version != RECORDING_VERSION {
            return Err(CliError::Data(format!(
                "{origin}: recording version {} unsupported, expected {RECORDING_VERSION}",
                header.version
            )));
        }
        let scans = lines
            .map(|(i, line)| {
                serde_json::from_str::<Scan>(line)
                    .map_err(|e| CliError::Data(format!("{origin}:{}: invalid scan: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let recording = Recording {
            mounts: header.mounts.clone(),
            scans,
        };
        recording.validate()?;
        Ok(RecordingFile { header, recording })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = self.header.clone();
        header.mounts = self.recording.mounts.clone();
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for scan in &self.recording.scans {
            serde_json::to_writer(&mut out, scan)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::config("output", format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let ctx = |what: &str| format!("{what} {}", path.display());
    {
        let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(ctx("creating"), e))?;
        f.write_all(bytes).map_err(|e| CliError::io(ctx("writing"), e))?;
        f.sync_all().map_err(|e| CliError::io(ctx("syncing"), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::io(ctx("renaming into"), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use radclutter::synth::{generate_recording, preset};

    #[test]
    fn round_trip_is_byte_stable_and_keeps_unknown_fields() {
        let rec = generate_recording(&preset("separable", 3).unwrap()).unwrap();
        let mut file = RecordingFile::new(rec, Map::new());
        file.header.extra.insert("site".into(), Value::from("test track"));
        file.recording.scans[0].extra.insert("weather".into(), Value::from("rain"));
        file.recording.scans[0].detections[0]
            .extra
            .insert("doppler_bin".into(), Value::from(17));
        let bytes = file.to_bytes().unwrap();
        let back = RecordingFile::parse(std::str::from_utf8(&bytes).unwrap(), "mem").unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_foreign_and_malformed_input() {
        assert!(RecordingFile::parse("", "mem").is_err());
        assert!(RecordingFile::parse("{\"format\":\"other\"}", "mem").is_err());
        let rec = generate_recording(&preset("separable", 3).unwrap()).unwrap();
        let text = String::from_utf8(RecordingFile::new(rec, Map::new()).to_bytes().unwrap()).unwrap();
        let broken = format!("{text}{{\"scan_id\": }}\n");
        let err = RecordingFile::parse(&broken, "mem").unwrap_err().to_string();
        assert!(err.contains("invalid scan"), "{err}");
    }
}
