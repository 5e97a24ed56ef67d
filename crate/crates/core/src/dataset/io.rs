//! On-disk format: `manifest.json`, one CSV per (session, position) and one
//! JSON-lines segment table per session.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Position, Segment, SensorStream, Session, CHANNELS};
use crate::signal::Signal;
use crate::util::format_sig;

pub const STREAM_HEADER: &str = "t,ax,ay,az,lax,lay,laz,gx,gy,gz,mask";
const MANIFEST_VERSION: u32 = 1;
const SIG_DIGITS: usize = 6;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    sessions: Vec<ManifestSession>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSession {
    session_id: String,
    subject_id: String,
    segments: String,
    streams: Vec<ManifestStream>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestStream {
    position: String,
    sample_rate_hz: f64,
    path: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Reads and validates a dataset directory.
///
/// Duplicate timestamps are dropped (first occurrence kept) and recorded in
/// [`Dataset::load_warnings`]; every other contract violation is an error.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let root = root.as_ref();
    let manifest_path = root.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| DatasetError::Manifest { path: manifest_path.clone(), message: e.to_string() })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DatasetError::Manifest {
            path: manifest_path,
            message: format!("unsupported version {}", manifest.version),
        });
    }

    let mut warnings = Vec::new();
    let mut sessions = Vec::with_capacity(manifest.sessions.len());
    for ms in manifest.sessions {
        let mut streams = Vec::with_capacity(ms.streams.len());
        for entry in &ms.streams {
            let position: Position = entry.position.parse()?;
            let path = root.join(&entry.path);
            let (stream, dropped) = read_stream_csv(&path, position, entry.sample_rate_hz)?;
            if dropped > 0 {
                warnings.push(format!(
                    "{}/{}: dropped {dropped} rows with duplicate timestamps",
                    ms.session_id, position
                ));
            }
            streams.push(stream);
        }
        let seg_path = root.join(&ms.segments);
        let segments = read_segments(&seg_path)?;
        sessions.push(Session { session_id: ms.session_id, subject_id: ms.subject_id, streams, segments });
    }
    Ok(Dataset { sessions, load_warnings: warnings })
}

fn read_stream_csv(
    path: &Path,
    position: Position,
    sample_rate_hz: f64,
) -> Result<(SensorStream, usize), DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(io_err(path))?
        .ok_or_else(|| DatasetError::ShapeMismatch { path: path.into(), line: 1, message: "empty file".into() })?;
    if header.trim_end() != STREAM_HEADER {
        return Err(DatasetError::ShapeMismatch {
            path: path.into(),
            line: 1,
            message: format!("expected header `{STREAM_HEADER}`"),
        });
    }

    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    let mut mask = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CHANNELS + 2 {
            return Err(DatasetError::ShapeMismatch {
                path: path.into(),
                line: lineno,
                message: format!("expected {} fields, found {}", CHANNELS + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, DatasetError> {
            s.trim().parse::<f64>().map_err(|e| DatasetError::Parse {
                path: path.into(),
                line: lineno,
                message: format!("`{s}`: {e}"),
            })
        };
        let t = parse(fields[0])?;
        if let Some(&prev) = timestamps.last() {
            if t < prev {
                return Err(DatasetError::NonMonotone { path: path.into(), line: lineno });
            }
        }
        let row_flag = match fields[CHANNELS + 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(DatasetError::Parse {
                    path: path.into(),
                    line: lineno,
                    message: format!("mask must be 0 or 1, found `{other}`"),
                })
            }
        };
        let mut any_missing = false;
        for field in &fields[1..=CHANNELS] {
            let f = field.trim();
            if f.is_empty() || f.eq_ignore_ascii_case("nan") {
                any_missing = true;
                data.push(f64::NAN);
                mask.push(true);
            } else {
                let v = parse(f)?;
                if !v.is_finite() {
                    return Err(DatasetError::Parse {
                        path: path.into(),
                        line: lineno,
                        message: "non-finite sample".into(),
                    });
                }
                data.push(v);
                mask.push(false);
            }
        }
        if any_missing != row_flag {
            return Err(DatasetError::MaskMismatch { path: path.into(), line: lineno });
        }
        timestamps.push(t);
    }
    let n = timestamps.len();
    let samples = Signal::from_vec(n, CHANNELS, data).expect("row-wise construction");
    SensorStream::new_dedup(position, sample_rate_hz, timestamps, samples, mask).map_err(|e| match e {
        DatasetError::InvalidStream(m) => DatasetError::InvalidStream(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_segments(path: &Path) -> Result<Vec<Segment>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Segment>(l).map_err(|e| DatasetError::Parse {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Writes one stream table. Floats use six significant digits; a row with
/// any masked channel leaves those fields empty and sets `mask=1`.
pub fn write_stream_csv<W: Write>(stream: &SensorStream, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{STREAM_HEADER}")?;
    let samples = stream.samples();
    let mut line = String::new();
    for (t, &ts) in stream.timestamps().iter().enumerate() {
        line.clear();
        line.push_str(&format_sig(ts, SIG_DIGITS));
        for c in 0..CHANNELS {
            line.push(',');
            if !stream.is_missing(t, c) {
                line.push_str(&format_sig(samples.get(t, c), SIG_DIGITS));
            }
        }
        line.push_str(if stream.row_missing(t) { ",1" } else { ",0" });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Writes `dataset` under `root` (created if needed) in the layout
/// [`load_dataset`] reads.
pub fn write_dataset(dataset: &Dataset, root: impl AsRef<Path>) -> Result<(), DatasetError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut manifest = Manifest { version: MANIFEST_VERSION, sessions: Vec::new() };
    for session in &dataset.sessions {
        let dir = root.join(&session.session_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut streams = Vec::new();
        for stream in &session.streams {
            let rel = format!("{}/{}.csv", session.session_id, stream.position);
            let path = root.join(&rel);
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(file);
            write_stream_csv(stream, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
            streams.push(ManifestStream {
                position: stream.position.to_string(),
                sample_rate_hz: stream.sample_rate_hz,
                path: rel,
            });
        }
        let seg_rel = format!("{}/segments.jsonl", session.session_id);
        let seg_path = root.join(&seg_rel);
        let mut text = String::new();
        for seg in &session.segments {
            text.push_str(&serde_json::to_string(seg).expect("segment serializes"));
            text.push('\n');
        }
        fs::write(&seg_path, text).map_err(io_err(&seg_path))?;
        manifest.sessions.push(ManifestSession {
            session_id: session.session_id.clone(),
            subject_id: session.subject_id.clone(),
            segments: seg_rel,
            streams,
        });
    }
    let path: PathBuf = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}
