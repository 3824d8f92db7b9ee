//! Binary window shards.
//!
//! A shard is `ECGWIN01`, a little-endian `u32` window count, then per window:
//! provenance (`u32` id length, id bytes, `u32` channel, `u64` start), a
//! payload tag byte with its data, and the signal as a `u32` length plus
//! `f64` values. Class ids are `u32`; marks are one byte each.

use std::fs;
use std::path::Path;

use ecgbench_core::signal::window::{Payload, Provenance, Window};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"ECGWIN01";
/// Windows per shard file.
pub const SHARD_SIZE: usize = 1024;

pub fn encode(windows: &[Window]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    put_u32(&mut b, windows.len());
    for w in windows {
        let p = &w.provenance;
        put_u32(&mut b, p.record_id.len());
        b.extend_from_slice(p.record_id.as_bytes());
        put_u32(&mut b, p.channel);
        b.extend_from_slice(&(p.start as u64).to_le_bytes());
        match &w.payload {
            Payload::Unlabeled => b.push(0),
            Payload::Class(c) => {
                b.push(1);
                b.extend_from_slice(&c.to_le_bytes());
            }
            Payload::Marks(m) => {
                b.push(2);
                put_u32(&mut b, m.len());
                b.extend(m.iter().map(|&v| v as u8));
            }
            Payload::Future(f) => {
                b.push(3);
                put_f64s(&mut b, f);
            }
            Payload::Target(t) => {
                b.push(4);
                put_f64s(&mut b, t);
            }
        }
        put_f64s(&mut b, &w.signal);
    }
    b
}

fn put_u32(b: &mut Vec<u8>, v: usize) {
    b.extend_from_slice(&u32::try_from(v).expect("shard field fits in u32").to_le_bytes());
}

fn put_f64s(b: &mut Vec<u8>, xs: &[f64]) {
    put_u32(b, xs.len());
    for x in xs {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CliError::Data(format!(
                "{}: truncated at byte {} (need {n} more)",
                self.name, self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn bad(&self, what: String) -> CliError {
        CliError::Data(format!("{}: byte {}: {what}", self.name, self.pos))
    }
}

pub fn decode(bytes: &[u8], name: &str) -> Result<Vec<Window>> {
    let mut r = Reader { bytes, pos: 0, name };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CliError::Data(format!("{name}: not a window shard")));
    }
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()? as usize;
        let record_id = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.bad("record id is not UTF-8".into()))?;
        let channel = r.u32()? as usize;
        let start = r.u64()? as usize;
        let payload = match r.u8()? {
            0 => Payload::Unlabeled,
            1 => Payload::Class(r.u32()?),
            2 => {
                let len = r.u32()? as usize;
                Payload::Marks(r.take(len)?.iter().map(|&v| v != 0).collect())
            }
            3 => Payload::Future(r.f64s()?),
            4 => Payload::Target(r.f64s()?),
            tag => return Err(r.bad(format!("unknown payload tag {tag}"))),
        };
        let signal = r.f64s()?;
        out.push(Window {
            signal,
            payload,
            provenance: Provenance {
                record_id,
                channel,
                start,
            },
        });
    }
    if r.pos != bytes.len() {
        return Err(r.bad("trailing bytes".into()));
    }
    Ok(out)
}

/// Writes `windows` as `<split>-NNNN.win` files under `dir`; returns the file
/// names in order. An empty split writes no files.
pub fn write_split(dir: &Path, split: &str, windows: &[Window]) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for (i, chunk) in windows.chunks(SHARD_SIZE).enumerate() {
        let name = format!("{split}-{i:04}.win");
        let path = dir.join(&name);
        fs::write(&path, encode(chunk)).map_err(|e| CliError::io(&path, e))?;
        names.push(name);
    }
    Ok(names)
}

pub fn read_shards(dir: &Path, names: &[String]) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.extend(decode(&bytes, name)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(payload: Payload, start: usize) -> Window {
        Window {
            signal: (0..500).map(|i| (i as f64 * 0.1).sin() + 1e-17 * i as f64).collect(),
            payload,
            provenance: Provenance {
                record_id: "rec0003#1".into(),
                channel: 1,
                start,
            },
        }
    }

    #[test]
    fn every_payload_round_trips() {
        let ws = vec![
            window(Payload::Unlabeled, 0),
            window(Payload::Class(7), 250),
            window(Payload::Marks((0..500).map(|i| i % 97 == 0).collect()), 500),
            window(Payload::Future(vec![0.5; 100]), 750),
            window(Payload::Target(vec![-1.25; 500]), 1000),
        ];
        assert_eq!(decode(&encode(&ws), "t").unwrap(), ws);
    }

    #[test]
    fn corruption_is_a_data_error() {
        let bytes = encode(&[window(Payload::Class(1), 0)]);
        assert!(matches!(decode(&bytes[..bytes.len() - 3], "t"), Err(CliError::Data(_))));
        assert!(matches!(decode(b"NOTASHRD\0\0\0\0", "t"), Err(CliError::Data(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra, "t").is_err());
    }

    #[test]
    fn shards_split_and_rejoin() {
        let dir = tempfile::tempdir().unwrap();
        let ws: Vec<Window> = (0..SHARD_SIZE + 3)
            .map(|i| window(Payload::Class(i as u32 % 2), i))
            .collect();
        let names = write_split(dir.path(), "train", &ws).unwrap();
        assert_eq!(names, ["train-0000.win", "train-0001.win"]);
        assert_eq!(read_shards(dir.path(), &names).unwrap(), ws);
    }
}
