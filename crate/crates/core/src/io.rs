//! Field snapshots: one JSON header line
//! `{"dims":[..],"spacing":[..],"field":"name","time":t}` followed by the
//! raw little-endian `f64` data, `x₁` fastest, then `x₂`, then `x₃`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_ops::ScalarField3D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub field: String,
    pub time: f64,
}

pub fn write_snapshot<W: Write>(mut w: W, name: &str, f: &ScalarField3D, time: f64) -> Result<()> {
    if f.data.len() != f.dims.iter().product::<usize>() {
        return Err(Error::Grid(format!("{} values for dims {:?}", f.data.len(), f.dims)));
    }
    let h = SnapshotHeader { dims: f.dims, spacing: f.spacing, field: name.to_string(), time };
    serde_json::to_writer(&mut w, &h)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * f.data.len());
    for v in &f.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<(SnapshotHeader, ScalarField3D)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: SnapshotHeader = serde_json::from_str(line.trim_end_matches('\n'))?;
    let n: usize = h.dims.iter().product();
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Grid("trailing bytes after snapshot data".into()));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((h.clone(), ScalarField3D { dims: h.dims, spacing: h.spacing, data }))
}

pub fn save_snapshot(path: &std::path::Path, name: &str, f: &ScalarField3D, time: f64) -> Result<()> {
    write_snapshot(std::io::BufWriter::new(std::fs::File::create(path)?), name, f, time)
}

pub fn load_snapshot(path: &std::path::Path) -> Result<(SnapshotHeader, ScalarField3D)> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ScalarField3D {
        ScalarField3D { dims: [2, 3, 2], spacing: [0.5, 0.25, 1.0], data: (0..12).map(|i| i as f64 * 0.1 - 0.3).collect() }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "rho", &f, 0.125).unwrap();
        let (h, g) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(h.field, "rho");
        assert_eq!(h.time, 0.125);
        assert_eq!(g, f);
    }

    #[test]
    fn layout() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "u", &f, 1.0).unwrap();
        let nl = buf.iter().position(|b| *b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&buf[..nl]).unwrap(),
            r#"{"dims":[2,3,2],"spacing":[0.5,0.25,1.0],"field":"u","time":1.0}"#
        );
        assert_eq!(buf.len(), nl + 1 + 8 * 12);
        assert_eq!(&buf[nl + 1..nl + 9], &(-0.3f64).to_le_bytes());
    }

    #[test]
    fn truncated_data_rejected() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "u", &field(), 0.0).unwrap();
        buf.pop();
        assert!(read_snapshot(&buf[..]).is_err());
    }
}
