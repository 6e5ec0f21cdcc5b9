//! STID1 binary ensemble files and CSV export.
//!
//! Layout (all little-endian): 8-byte magic `STIDENT1`; u64 version, paths,
//! times, space dims, points per dim, components; f64 t0, dt, then x0/dx per
//! dim; then the samples in (path, component, time, y, x) order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{TrajectoryEnsemble, UniformGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STIDENT1";
pub const VERSION: u64 = 1;

/// Serializes an ensemble to STID1 bytes.
pub fn encode(ens: &TrajectoryEnsemble) -> Result<Vec<u8>> {
    ens.check_finite()?;
    let g = &ens.grid;
    let dims = g.space_dims();
    let header_len = 8 + 8 * (5 + dims) + 8 * (2 + 2 * dims);
    let mut out = Vec::with_capacity(header_len + 8 * ens.values().len());
    out.extend_from_slice(MAGIC);
    let put_u64 = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
    put_u64(&mut out, VERSION);
    put_u64(&mut out, ens.num_paths as u64);
    put_u64(&mut out, g.num_times as u64);
    put_u64(&mut out, dims as u64);
    for &m in &g.num_space {
        put_u64(&mut out, m as u64);
    }
    put_u64(&mut out, ens.num_components as u64);
    out.extend_from_slice(&g.t0.to_le_bytes());
    out.extend_from_slice(&g.dt.to_le_bytes());
    for d in 0..dims {
        out.extend_from_slice(&g.x0[d].to_le_bytes());
        out.extend_from_slice(&g.dx[d].to_le_bytes());
    }
    for v in ens.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, expected_total: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                expected: expected_total.max(self.pos + n),
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, 0)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, 0)?.try_into().unwrap()))
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} out of range: {v}")))
}

/// Parses STID1 bytes.
pub fn decode(buf: &[u8]) -> Result<TrajectoryEnsemble> {
    if buf.len() < 8 || &buf[..8] != MAGIC {
        return Err(Error::Format("missing STIDENT1 magic".into()));
    }
    let mut r = Reader { buf, pos: 8 };
    let version = r.u64()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let num_paths = to_usize(r.u64()?, "num_paths")?;
    let num_times = to_usize(r.u64()?, "num_times")?;
    let dims = to_usize(r.u64()?, "num_space_dims")?;
    if dims == 0 || dims > 2 {
        return Err(Error::InvalidGrid(format!(
            "space dimension must be 1 or 2, got {dims}"
        )));
    }
    let mut num_space = Vec::with_capacity(dims);
    for _ in 0..dims {
        num_space.push(to_usize(r.u64()?, "num_space")?);
    }
    let num_components = to_usize(r.u64()?, "num_components")?;
    let t0 = r.f64()?;
    let dt = r.f64()?;
    let mut x0 = Vec::with_capacity(dims);
    let mut dx = Vec::with_capacity(dims);
    for _ in 0..dims {
        x0.push(r.f64()?);
        dx.push(r.f64()?);
    }
    let grid = UniformGrid {
        t0,
        dt,
        num_times,
        x0,
        dx,
        num_space,
        periodic: true,
    };
    grid.validate()?;
    let count = num_paths
        .checked_mul(num_components)
        .and_then(|v| v.checked_mul(num_times))
        .and_then(|v| v.checked_mul(grid.points()))
        .ok_or_else(|| Error::Format("sample count overflows".into()))?;
    let expected = r.pos + 8 * count;
    if buf.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: buf.len(),
        });
    }
    if buf.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            buf.len() - expected
        )));
    }
    let values = buf[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TrajectoryEnsemble::new(grid, num_paths, num_components, values)
}

pub fn write_ensemble(ens: &TrajectoryEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(ens)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_ensemble(path: impl AsRef<Path>) -> Result<TrajectoryEnsemble> {
    decode(&fs::read(path)?)
}

/// Writes one CSV row per (path, component, time): leading index columns,
/// then the space samples in storage order.
pub fn write_csv(ens: &TrajectoryEnsemble, mut w: impl Write) -> Result<()> {
    let p = ens.grid.points();
    write!(w, "path,component,time")?;
    for m in 0..p {
        write!(w, ",x{m}")?;
    }
    writeln!(w)?;
    for n in 0..ens.num_paths {
        for c in 0..ens.num_components {
            for i in 0..ens.grid.num_times {
                write!(w, "{n},{c},{}", ens.grid.time(i))?;
                for v in ens.slice(n, c, i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
    }
    Ok(())
}
