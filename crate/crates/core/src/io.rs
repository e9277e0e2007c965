//! File formats: TSR3 binary tensors, CSV index triples, key=value
//! manifests, and CSV reports.
//!
//! TSR3 layout: the 4-byte magic `TSR3`, three little-endian `u32` dims, then
//! `D1·D2·D3` little-endian `f64` values in row-major order of the mode-1
//! unfolding (row `i1` slowest, column `i2 + i3·D2`). Masks are stored as
//! TSR3 tensors of zeros and ones.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::TraceRow;
use crate::tensor::{ObservationMask, Tensor3};

pub const TSR3_MAGIC: &[u8; 4] = b"TSR3";

pub fn write_tsr3<W: Write>(mut w: W, t: &Tensor3) -> Result<()> {
    let [d1, d2, d3] = t.dims();
    w.write_all(TSR3_MAGIC)?;
    for d in [d1, d2, d3] {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let data = t.as_slice();
    let mut buf = Vec::with_capacity(8 * d2 * d3);
    for i in 0..d1 {
        buf.clear();
        for c in 0..d2 * d3 {
            buf.extend_from_slice(&data[i + d1 * c].to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tsr3<R: Read>(mut r: R) -> Result<Tensor3> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a TSR3 header".into()))?;
    if &magic != TSR3_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected TSR3")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| Error::Format("truncated TSR3 header".into()))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    if dims.contains(&0) {
        return Err(Error::Format(format!("TSR3 dims must be positive, got {dims:?}")));
    }
    let [d1, d2, d3] = dims;
    let n =
        d1.checked_mul(d2).and_then(|x| x.checked_mul(d3)).ok_or_else(|| Error::Format("TSR3 dims overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(Error::Format(format!("TSR3 payload has {} bytes, expected {}", bytes.len(), 8 * n)));
    }
    let mut data = vec![0.0; n];
    for (pos, chunk) in bytes.chunks_exact(8).enumerate() {
        let (i, c) = (pos / (d2 * d3), pos % (d2 * d3));
        data[i + d1 * c] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    Tensor3::from_vec(dims, data)
}

pub fn save_tsr3(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    write_tsr3(BufWriter::new(File::create(path)?), t)
}

pub fn load_tsr3(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let file =
        File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_tsr3(BufReader::new(file))
}

/// Interprets a 0/1 tensor as a mask; any other value is an error.
pub fn mask_from_tensor(t: &Tensor3) -> Result<ObservationMask> {
    if let Some(v) = t.as_slice().iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Format(format!("mask tensor holds {v}, expected 0 or 1")));
    }
    Ok(ObservationMask::from_nonzero(t))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &ObservationMask) -> Result<()> {
    save_tsr3(path, &mask.to_tensor())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    mask_from_tensor(&load_tsr3(path)?)
}

/// Writes `i,j,k,value` rows with 1-based indices, in storage order. With a
/// mask only its members are written.
pub fn write_triples<W: Write>(w: W, t: &Tensor3, mask: Option<&ObservationMask>) -> Result<()> {
    let [d1, d2, d3] = t.dims();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "j", "k", "value"]).map_err(csv_err)?;
    for k in 0..d3 {
        for j in 0..d2 {
            for i in 0..d1 {
                if mask.is_some_and(|m| !m.contains(i, j, k)) {
                    continue;
                }
                let row = [(i + 1).to_string(), (j + 1).to_string(), (k + 1).to_string(), t.get(i, j, k).to_string()];
                out.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `i,j,k,value` rows (1-based). Listed entries form the returned mask;
/// unlisted entries are zero. Without `dims` the extent is the largest index
/// seen per mode.
pub fn read_triples<R: Read>(r: R, dims: Option<[usize; 3]>) -> Result<(Tensor3, ObservationMask)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["i", "j", "k", "value"] {
        return Err(Error::Format(format!(
            "expected header i,j,k,value, got {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 4 {
            return Err(Error::Format(format!("row {} has {} fields", line + 2, rec.len())));
        }
        let idx = |f: usize| -> Result<usize> {
            let v: usize =
                rec[f].parse().map_err(|_| Error::Format(format!("row {}: bad index `{}`", line + 2, &rec[f])))?;
            if v == 0 {
                return Err(Error::Format(format!("row {}: indices are 1-based", line + 2)));
            }
            Ok(v - 1)
        };
        let value: f64 =
            rec[3].parse().map_err(|_| Error::Format(format!("row {}: bad value `{}`", line + 2, &rec[3])))?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("row {} value", line + 2)));
        }
        entries.push((idx(0)?, idx(1)?, idx(2)?, value));
    }
    let dims = match dims {
        Some(d) => d,
        None => {
            if entries.is_empty() {
                return Err(Error::Format("no rows to infer dimensions from".into()));
            }
            let mut d = [0; 3];
            for &(i, j, k, _) in &entries {
                d = [d[0].max(i + 1), d[1].max(j + 1), d[2].max(k + 1)];
            }
            d
        }
    };
    let mut t = Tensor3::zeros(dims)?;
    for &(i, j, k, v) in &entries {
        if i >= dims[0] || j >= dims[1] || k >= dims[2] {
            return Err(Error::dims(format!("index ({},{},{}) outside {dims:?}", i + 1, j + 1, k + 1)));
        }
        t.set(i, j, k, v);
    }
    let mask = ObservationMask::from_triples(dims, entries.iter().map(|&(i, j, k, _)| (i, j, k)))?;
    Ok((t, mask))
}

pub fn save_triples(path: impl AsRef<Path>, t: &Tensor3, mask: Option<&ObservationMask>) -> Result<()> {
    write_triples(BufWriter::new(File::create(path)?), t, mask)
}

pub fn load_triples(path: impl AsRef<Path>, dims: Option<[usize; 3]>) -> Result<(Tensor3, ObservationMask)> {
    read_triples(BufReader::new(File::open(path)?), dims)
}

/// Loads a tensor by extension: `.csv` as triples, anything else as TSR3.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(load_triples(path, None)?.0)
    } else {
        load_tsr3(path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Ordered `key=value` lines; `#` starts a comment line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Format(format!("line {}: empty key", n + 1)));
            }
            if out.iter().any(|(x, _): &(String, String)| x == k) {
                return Err(Error::Format(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            out.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self(out))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Writes a header and rows as CSV.
pub fn write_csv<W: Write, S: AsRef<str>>(w: W, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Format(format!("row has {} fields, header has {}", row.len(), header.len())));
        }
        out.write_record(row.iter().map(|s| s.as_ref())).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub const TRACE_HEADER: [&str; 10] = [
    "iter",
    "objective",
    "res_split",
    "res_difference",
    "res_coupling",
    "chg_x",
    "chg_core",
    "chg_lowrank",
    "chg_anomaly",
    "anomaly_support",
];

/// One row per outer iteration; `res_split` is the root sum of squares of
/// the three factor-split gaps.
pub fn write_trace_csv<W: Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|t| {
            let split = t.residuals.split.iter().map(|v| v * v).sum::<f64>().sqrt();
            vec![
                t.iter.to_string(),
                t.objective.to_string(),
                split.to_string(),
                t.residuals.difference.to_string(),
                t.residuals.coupling.to_string(),
                t.changes.x.to_string(),
                t.changes.core.to_string(),
                t.changes.lowrank.to_string(),
                t.changes.anomaly.to_string(),
                t.anomaly_support.to_string(),
            ]
        })
        .collect();
    write_csv(w, &TRACE_HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor3 {
        Tensor3::from_fn([2, 2, 2], |i, j, k| (100 * (i + 1) + 10 * (j + 1) + k + 1) as f64).unwrap()
    }

    #[test]
    fn tsr3_byte_order_follows_unfolding_rows() {
        let mut buf = Vec::new();
        write_tsr3(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..4], b"TSR3");
        assert_eq!(&buf[4..16], &[2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        let values: Vec<f64> = buf[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(values, [111.0, 121.0, 112.0, 122.0, 211.0, 221.0, 212.0, 222.0]);
        assert_eq!(read_tsr3(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn tsr3_rejects_bad_input() {
        assert!(matches!(read_tsr3(&b"TSR"[..]), Err(Error::Format(_))));
        assert!(matches!(read_tsr3(&b"XXXX\x01\0\0\0\x01\0\0\0\x01\0\0\0"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        write_tsr3(&mut buf, &sample()).unwrap();
        buf.pop();
        assert!(matches!(read_tsr3(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn triples_roundtrip_and_mask() {
        let t = sample();
        let mask = ObservationMask::from_fn([2, 2, 2], |i, j, _| i != j).unwrap();
        let mut buf = Vec::new();
        write_triples(&mut buf, &t, Some(&mask)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,k,value\n2,1,1,211\n"));
        let (back, m) = read_triples(&buf[..], Some([2, 2, 2])).unwrap();
        assert_eq!(m, mask);
        assert_eq!(back, crate::tensor::project_observed(&t, &mask).unwrap());
        assert!(read_triples(&b"i,j,k,value\n0,1,1,2\n"[..], None).is_err());
        assert!(read_triples(&b"a,b,c,d\n1,1,1,2\n"[..], None).is_err());
        assert!(read_triples(&b"i,j,k,value\n3,1,1,2\n"[..], Some([2, 2, 2])).is_err());
    }

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("# run\nseed = 3\nname=a=b\n\n").unwrap();
        assert_eq!(kv.get("seed"), Some("3"));
        assert_eq!(kv.get("name"), Some("a=b"));
        assert_eq!(kv.render(), "seed=3\nname=a=b\n");
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn mask_tensor_must_be_binary() {
        let t = Tensor3::from_vec([2, 1, 1], vec![1.0, 0.5]).unwrap();
        assert!(mask_from_tensor(&t).is_err());
    }
}
