//! Little-endian binary files for snapshots, bases and trajectories.
//!
//! ```text
//! "TRRM" | u32 version | u8 kind | u32 nx | u32 ny | f64 lx | f64 ly | u8 bc | u32 count
//! ```
//!
//! followed by a kind-specific payload. Fields are stored as the u array then
//! the v array, row-major. The lid multiplier is not stored: lifts carry the
//! lid of a cavity grid, every other field is homogeneous.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Boundary, Grid, Lid, VectorField};
use crate::fom::SnapshotSet;
use crate::pod::PodBasis;
use crate::tr_rom::Trajectory;

pub const MAGIC: &[u8; 4] = b"TRRM";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FileKind {
    Snapshots = 1,
    Basis = 2,
    Trajectory = 3,
}

fn bc_code(bc: Boundary) -> u8 {
    match bc {
        Boundary::Periodic => 0,
        Boundary::Cavity(Lid::Uniform) => 1,
        Boundary::Cavity(Lid::Regularized) => 2,
    }
}

fn bc_from_code(c: u8) -> Result<Boundary> {
    match c {
        0 => Ok(Boundary::Periodic),
        1 => Ok(Boundary::Cavity(Lid::Uniform)),
        2 => Ok(Boundary::Cavity(Lid::Regularized)),
        _ => Err(Error::Codec(format!("unknown boundary code {c}"))),
    }
}

fn lift_multiplier(grid: &Grid) -> f64 {
    if grid.is_periodic() {
        0.0
    } else {
        1.0
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: FileKind, grid: Option<&Grid>, count: usize) -> Result<Self> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.0.push(kind as u8);
        match grid {
            Some(g) => {
                w.u32(to_u32(g.nx)?);
                w.u32(to_u32(g.ny)?);
                w.f64(g.lx);
                w.f64(g.ly);
                w.0.push(bc_code(g.bc));
            }
            None => {
                w.u32(0);
                w.u32(0);
                w.f64(0.0);
                w.f64(0.0);
                w.0.push(0);
            }
        }
        w.u32(to_u32(count)?);
        Ok(w)
    }

    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn f64s(&mut self, xs: &[f64]) {
        self.0.reserve(8 * xs.len());
        for &x in xs {
            self.f64(x);
        }
    }

    fn field(&mut self, f: &VectorField, lid: f64) -> Result<()> {
        if f.lid != lid {
            return Err(Error::Codec(format!("field has lid multiplier {} where {lid} is stored implicitly", f.lid)));
        }
        self.f64s(&f.u);
        self.f64s(&f.v);
        Ok(())
    }
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Codec(format!("{n} does not fit in u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

struct Header {
    grid: Option<Grid>,
    count: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Codec(format!("truncated payload: need {n} bytes at offset {}, have {}", self.pos, self.buf.len() - self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Codec("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn field(&mut self, grid: Grid, lid: f64) -> Result<VectorField> {
        let u = self.f64s(grid.u_len())?;
        let v = self.f64s(grid.v_len())?;
        VectorField::from_parts(grid, u, v, lid)
    }

    fn header(buf: &'a [u8], kind: FileKind) -> Result<(Self, Header)> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Codec("bad magic, not a TRRM file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Codec(format!("unsupported version {version}, expected {VERSION}")));
        }
        let k = r.u8()?;
        if k != kind as u8 {
            return Err(Error::Codec(format!("file kind {k}, expected {} ({kind:?})", kind as u8)));
        }
        let (nx, ny) = (r.u32()? as usize, r.u32()? as usize);
        let (lx, ly) = (r.f64()?, r.f64()?);
        let bc = r.u8()?;
        let count = r.u32()? as usize;
        let grid = match kind {
            FileKind::Trajectory => None,
            _ => Some(Grid::new(nx, ny, lx, ly, bc_from_code(bc)?).map_err(|e| Error::Codec(format!("bad grid header: {e}")))?),
        };
        Ok((r, Header { grid, count }))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Codec(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_snapshots(s: &SnapshotSet) -> Result<Vec<u8>> {
    let mut w = Writer::header(FileKind::Snapshots, Some(&s.grid), s.len())?;
    w.f64s(&s.times);
    w.field(&s.lift, lift_multiplier(&s.grid))?;
    for f in &s.fields {
        w.field(f, 0.0)?;
    }
    Ok(w.0)
}

/// The provenance hash is not part of the format and decodes as `None`.
pub fn decode_snapshots(buf: &[u8]) -> Result<SnapshotSet> {
    let (mut r, h) = Reader::header(buf, FileKind::Snapshots)?;
    let grid = h.grid.expect("snapshot files carry a grid");
    let times = r.f64s(h.count)?;
    let lift = r.field(grid, lift_multiplier(&grid))?;
    let fields = (0..h.count).map(|_| r.field(grid, 0.0)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    SnapshotSet::new(lift, fields, times).map_err(|e| Error::Codec(e.to_string()))
}

/// Payload: eigenvalues, gradient norms, lift, modes, then the two rest
/// energies outside the stored modes.
pub fn encode_basis(b: &PodBasis) -> Result<Vec<u8>> {
    let n = b.rank();
    if b.eigenvalues.len() != n || b.gradnorms.len() != n {
        return Err(Error::Codec("basis spectrum and mode counts differ".into()));
    }
    let mut w = Writer::header(FileKind::Basis, Some(&b.grid), n)?;
    w.f64s(&b.eigenvalues);
    w.f64s(&b.gradnorms);
    w.field(&b.lift, lift_multiplier(&b.grid))?;
    for m in &b.modes {
        w.field(m, 0.0)?;
    }
    w.f64(b.rest_l2);
    w.f64(b.rest_h10);
    Ok(w.0)
}

pub fn decode_basis(buf: &[u8]) -> Result<PodBasis> {
    let (mut r, h) = Reader::header(buf, FileKind::Basis)?;
    let grid = h.grid.expect("basis files carry a grid");
    let eigenvalues = r.f64s(h.count)?;
    let gradnorms = r.f64s(h.count)?;
    let lift = r.field(grid, lift_multiplier(&grid))?;
    let modes = (0..h.count).map(|_| r.field(grid, 0.0)).collect::<Result<Vec<_>>>()?;
    let rest_l2 = r.f64()?;
    let rest_h10 = r.f64()?;
    r.finish()?;
    Ok(PodBasis { grid, lift, modes, eigenvalues, gradnorms, rest_l2, rest_h10 })
}

/// Diagnostics and the divergence flag are not stored.
pub fn encode_trajectory(t: &Trajectory) -> Result<Vec<u8>> {
    if t.times.len() != t.coeffs.len() || t.coeffs.iter().any(|row| row.len() != t.r) {
        return Err(Error::Codec("trajectory rows do not match its rank and times".into()));
    }
    let mut w = Writer::header(FileKind::Trajectory, None, t.len())?;
    w.u32(to_u32(t.r)?);
    w.f64s(&t.times);
    for row in &t.coeffs {
        w.f64s(row);
    }
    Ok(w.0)
}

pub fn decode_trajectory(buf: &[u8]) -> Result<Trajectory> {
    let (mut r, h) = Reader::header(buf, FileKind::Trajectory)?;
    let rank = r.u32()? as usize;
    let times = r.f64s(h.count)?;
    let coeffs = (0..h.count).map(|_| r.f64s(rank)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Trajectory { r: rank, times, coeffs, diagnostics: Vec::new(), diverged: false })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(std::fs::write(path, bytes)?)
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    decode_snapshots(&std::fs::read(path)?)
}

pub fn read_basis(path: &Path) -> Result<PodBasis> {
    decode_basis(&std::fs::read(path)?)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    decode_trajectory(&std::fs::read(path)?)
}
