//! OBADS001 dataset files: 8-byte ASCII magic, u32-LE n_samples/C/H/W, a name
//! table (u16-LE length + UTF-8 each), then per sample f32-LE label, f32-LE
//! lat, f32-LE lon, u64-LE timestamp and C·H·W f32-LE feature values
//! (feature-major, row-major inside each grid).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, GridSample};
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"OBADS001";

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let (c, h, w) = dataset.shape();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    for v in [dataset.len(), c, h, w] {
        if v > u32::MAX as usize {
            return Err(ObaError::InvalidArg(format!("dimension {v} exceeds u32")));
        }
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for name in &dataset.feature_names {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(ObaError::InvalidArg(format!(
                "feature name too long: {name}"
            )));
        }
        out.write_all(&(bytes.len() as u16).to_le_bytes())?;
        out.write_all(bytes)?;
    }
    for s in &dataset.samples {
        out.write_all(&(s.label as f32).to_le_bytes())?;
        out.write_all(&(s.station_lat as f32).to_le_bytes())?;
        out.write_all(&(s.station_lon as f32).to_le_bytes())?;
        out.write_all(&s.timestamp.to_le_bytes())?;
        for &v in s.features.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ObaError::Format(format!(
            "bad magic {:?}, expected OBADS001",
            String::from_utf8_lossy(&magic)
        )));
    }
    let n = read_u32(&mut r, "sample count")? as usize;
    let c = read_u32(&mut r, "channel count")? as usize;
    let h = read_u32(&mut r, "grid height")? as usize;
    let w = read_u32(&mut r, "grid width")? as usize;
    let mut names = Vec::with_capacity(c);
    for i in 0..c {
        let len = read_u16(&mut r, "name length")? as usize;
        let mut bytes = vec![0u8; len];
        read_exact(&mut r, &mut bytes, "feature name")?;
        names.push(
            String::from_utf8(bytes)
                .map_err(|_| ObaError::Format(format!("feature name {i} is not UTF-8")))?,
        );
    }
    let cells = c * h * w;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let label = read_f32(&mut r, "label")? as f64;
        let lat = read_f32(&mut r, "latitude")? as f64;
        let lon = read_f32(&mut r, "longitude")? as f64;
        let mut ts = [0u8; 8];
        read_exact(&mut r, &mut ts, "timestamp")?;
        let mut data = Vec::with_capacity(cells);
        for _ in 0..cells {
            data.push(read_f32(&mut r, "feature values")? as f64);
        }
        let features = Tensor::from_vec(&[c, h, w], data)?;
        samples.push(
            GridSample::new(features, label, lat, lon, u64::from_le_bytes(ts))
                .map_err(|e| ObaError::Format(format!("sample {i}: {e}")))?,
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ObaError::Format("trailing bytes after last sample".into()));
    }
    Dataset::new(names, samples, (c, h, w))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| ObaError::Format(format!("truncated file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut buf = [0u8; 2];
    read_exact(r, &mut buf, what)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read, what: &str) -> Result<f32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(f32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_clean(v: f64) -> f64 {
        v as f32 as f64
    }

    fn random_dataset(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples = (0..n)
            .map(|i| {
                let data: Vec<f64> = (0..3 * 4 * 4)
                    .map(|_| f32_clean(rng.gen_range(-10.0..10.0)))
                    .collect();
                let label = if rng.gen_bool(0.5) {
                    0.0
                } else {
                    f32_clean((rng.gen_range(1..200) as f64) / 10.0)
                };
                GridSample::new(
                    Tensor::from_vec(&[3, 4, 4], data).unwrap(),
                    label,
                    f32_clean(rng.gen_range(25.0..35.0)),
                    f32_clean(rng.gen_range(115.0..125.0)),
                    1_600_000_000 + i as u64 * 21_600,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(
            vec!["tp@sfc".into(), "t@850".into(), "q@500".into()],
            samples,
            (3, 4, 4),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.obads");
        let ds = random_dataset(3);
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
        let path2 = dir.path().join("d2.obads");
        write_dataset(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.obads");
        let names = (0..37).map(|i| format!("f{i}@sfc")).collect();
        let ds = Dataset::new(names, vec![], (37, 17, 17)).unwrap();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
        assert_eq!(back.shape(), (37, 17, 17));
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obads");
        let ds = random_dataset(1);
        write_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match read_dataset(&path) {
            Err(ObaError::Format(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.obads");
        let ds = random_dataset(2);
        write_dataset(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        match read_dataset(&path) {
            Err(ObaError::Format(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_in_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lbl.obads");
        let ds = random_dataset(1);
        write_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // label is the first f32 after header + name table
        let name_table: usize = ds.feature_names.iter().map(|n| 2 + n.len()).sum();
        let off = 8 + 16 + name_table;
        bytes[off..off + 4].copy_from_slice(&0.05f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match read_dataset(&path) {
            Err(ObaError::Format(msg)) => assert!(msg.contains("sample 0"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
