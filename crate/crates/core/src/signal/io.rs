//! Record files.
//!
//! Native records are a pair `<id>.manifest` (JSON) + `<id>.sig` holding
//! little-endian `f32` samples, channel-major, with NaN for missing samples.
//! CSV records have a `time` column followed by one column per channel; blank
//! cells are missing. A CSV may carry a sidecar `<stem>.manifest` supplying
//! sampling rate, annotations and class label.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{Annotation, Record};
use crate::{Error, Result};

/// On-disk manifest. Optional fields may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_rate: Option<f64>,
    #[serde(default)]
    pub channel_names: Vec<String>,
    /// Samples per channel; required for native records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<u32>,
    /// `LABEL@INDEX` strings.
    #[serde(default)]
    pub annotations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_channel: Option<String>,
}

fn manifest_path_for(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

fn read_manifest(path: &Path) -> Result<RecordManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

fn parse_annotations(path: &Path, raw: &[String]) -> Result<Vec<Annotation>> {
    raw.iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse()
                .map_err(|m: String| Error::parse(path, format!("annotation {i}"), m))
        })
        .collect()
}

/// Loads a record from a `.csv`, `.manifest` or `.sig` path.
pub fn load_record(path: &Path) -> Result<Record> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_csv(path),
        Some("manifest") | Some("sig") => load_native(&path.with_extension("")),
        _ => Err(Error::parse(path, "name", "expected a .csv, .manifest or .sig file")),
    }
}

/// Loads `<base>.manifest` + `<base>.sig`.
pub fn load_native(base: &Path) -> Result<Record> {
    let mpath = base.with_extension("manifest");
    let spath = base.with_extension("sig");
    let m = read_manifest(&mpath)?;
    let fs_hz = m
        .sampling_rate
        .ok_or_else(|| Error::parse(&mpath, "sampling_rate", "missing"))?;
    let len = m.length.ok_or_else(|| Error::parse(&mpath, "length", "missing"))?;
    if m.channel_names.is_empty() {
        return Err(Error::parse(&mpath, "channel_names", "no channels"));
    }
    let bytes = fs::read(&spath).map_err(|e| Error::io(&spath, e))?;
    let expected = m.channel_names.len() * len * 4;
    if bytes.len() != expected {
        return Err(Error::parse(
            &spath,
            format!("byte {}", bytes.len().min(expected)),
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut channels = Vec::with_capacity(m.channel_names.len());
    let mut masks = Vec::with_capacity(m.channel_names.len());
    for chunk in bytes.chunks_exact(len * 4).take(m.channel_names.len()) {
        let mut ch = Vec::with_capacity(len);
        let mut mask = Vec::with_capacity(len);
        for b in chunk.chunks_exact(4) {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            mask.push(v.is_finite());
            ch.push(if v.is_finite() { v as f64 } else { 0.0 });
        }
        channels.push(ch);
        masks.push(mask);
    }
    if len == 0 {
        channels = vec![Vec::new(); m.channel_names.len()];
        masks = vec![Vec::new(); m.channel_names.len()];
    }
    let id = m.id.clone().unwrap_or_else(|| {
        base.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let r = Record {
        id,
        sampling_rate: fs_hz,
        channel_names: m.channel_names.clone(),
        channels,
        masks,
        annotations: parse_annotations(&mpath, &m.annotations)?,
        class_label: m.class_label,
        pair_channel: m.pair_channel.clone(),
        source: None,
    };
    r.validate()?;
    Ok(r)
}

/// Writes `<dir>/<id>.manifest` and `<dir>/<id>.sig`; returns the base path.
pub fn save_record(record: &Record, dir: &Path) -> Result<PathBuf> {
    record.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = dir.join(&record.id);
    let manifest = RecordManifest {
        id: Some(record.id.clone()),
        sampling_rate: Some(record.sampling_rate),
        channel_names: record.channel_names.clone(),
        length: Some(record.len()),
        class_label: record.class_label,
        annotations: record.annotations.iter().map(|a| a.to_string()).collect(),
        pair_channel: record.pair_channel.clone(),
    };
    let mut bytes = Vec::with_capacity(record.n_channels() * record.len() * 4);
    for (ch, mask) in record.channels.iter().zip(&record.masks) {
        for (&v, &ok) in ch.iter().zip(mask) {
            let x = if ok { v as f32 } else { f32::NAN };
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mpath = base.with_extension("manifest");
    let spath = base.with_extension("sig");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    fs::write(&spath, bytes).map_err(|e| Error::io(&spath, e))?;
    Ok(base)
}

/// Loads a CSV record. The sampling rate comes from the sidecar manifest if
/// present, otherwise from the spacing of the first two time stamps.
pub fn load_csv(path: &Path) -> Result<Record> {
    let sidecar = manifest_path_for(path);
    let manifest = if sidecar.exists() {
        Some(read_manifest(&sidecar)?)
    } else {
        None
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 2 {
        return Err(Error::parse(
            path,
            "line 1",
            "header needs a time column and at least one channel",
        ));
    }
    if headers.iter().any(str::is_empty) {
        return Err(Error::parse(path, "line 1", "empty column name in header"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut channels = vec![Vec::new(); names.len()];
    let mut masks = vec![Vec::new(); names.len()];
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| -> Result<Option<f64>> {
            let s = &row[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                Error::parse(
                    path,
                    format!("line {line} column {}", i + 1),
                    format!("`{s}` is not a number"),
                )
            })
        };
        times.push(cell(0)?.ok_or_else(|| Error::parse(path, format!("line {line}"), "blank time cell"))?);
        for c in 0..names.len() {
            match cell(c + 1)? {
                Some(v) if v.is_finite() => {
                    channels[c].push(v);
                    masks[c].push(true);
                }
                _ => {
                    channels[c].push(0.0);
                    masks[c].push(false);
                }
            }
        }
    }
    let manifest = manifest.unwrap_or(RecordManifest {
        id: None,
        sampling_rate: None,
        channel_names: Vec::new(),
        length: None,
        class_label: None,
        annotations: Vec::new(),
        pair_channel: None,
    });
    let fs_hz = match manifest.sampling_rate {
        Some(f) => f,
        None => {
            if times.len() < 2 || times[1] <= times[0] {
                return Err(Error::parse(
                    path,
                    "line 2",
                    "cannot infer sampling rate from time column",
                ));
            }
            1.0 / (times[1] - times[0])
        }
    };
    let id = manifest.id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let r = Record {
        id,
        sampling_rate: fs_hz,
        channel_names: names,
        channels,
        masks,
        annotations: parse_annotations(&sidecar, &manifest.annotations)?,
        class_label: manifest.class_label,
        pair_channel: manifest.pair_channel,
        source: None,
    };
    r.validate()?;
    Ok(r)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let position = e
        .position()
        .map(|p| format!("line {} byte {}", p.line(), p.byte()))
        .unwrap_or_else(|| "unknown position".into());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::parse(
            path,
            position,
            format!("ragged row: {len} fields, header has {expected_len}"),
        ),
        other => Error::parse(path, position, format!("{other:?}")),
    }
}

/// Lists record base paths (manifest files) in a directory, sorted by name.
pub fn list_records(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        match p.extension().and_then(|e| e.to_str()) {
            Some("manifest") if p.with_extension("sig").exists() => out.push(p),
            Some("csv") => out.push(p),
            _ => {}
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::record::WaveLabel;

    #[test]
    fn csv_with_blank_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut s = String::from("time,I,II\n");
        for i in 0..10 {
            let b = if i == 4 {
                String::new()
            } else {
                format!("{}", i as f64 * 0.5)
            };
            s += &format!("{},{},{b}\n", i as f64 * 0.01, i);
        }
        fs::write(&p, s).unwrap();
        let r = load_record(&p).unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r.missing_count(), 1);
        assert!(!r.masks[1][4]);
        assert!((r.sampling_rate - 100.0).abs() < 1e-9);
    }

    #[test]
    fn csv_sidecar_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut s = String::from("time,I\n");
        for i in 0..50 {
            s += &format!("{i},0.1\n");
        }
        fs::write(&p, s).unwrap();
        fs::write(
            dir.path().join("r.manifest"),
            r#"{"sampling_rate": 100.0, "annotations": ["R@37"], "class_label": 2}"#,
        )
        .unwrap();
        let r = load_record(&p).unwrap();
        assert_eq!(r.annotations, vec![Annotation::new(37, WaveLabel::R)]);
        assert_eq!(r.class_label, Some(2));
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "time,I\n0,1\n0.01,2,3\n").unwrap();
        match load_record(&p) {
            Err(Error::Parse { position, .. }) => assert!(position.contains("line 3"), "{position}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_wave_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "time,I\n0,1\n0.01,2\n").unwrap();
        fs::write(dir.path().join("r.manifest"), r#"{"annotations": ["U@1"]}"#).unwrap();
        assert!(matches!(load_record(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn native_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Record::new(
            "rec1",
            250.0,
            vec!["noisy".into(), "clean".into()],
            vec![vec![0.5, -1.25, 3.0], vec![0.0, 1.0, 2.0]],
        )
        .unwrap();
        r.masks[0][1] = false;
        r.channels[0][1] = 0.0;
        r.annotations = vec![Annotation::new(2, WaveLabel::T), Annotation::new(0, WaveLabel::P)];
        r.class_label = Some(4);
        r.pair_channel = Some("clean".into());
        let base = save_record(&r, dir.path()).unwrap();
        let back = load_record(&base.with_extension("manifest")).unwrap();
        assert_eq!(back, r);
    }
}
