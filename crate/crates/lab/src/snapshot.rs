//! Binary sidecar holding a replay buffer so a run can resume with the same memory.
//!
//! Layout (all little-endian): magic `MERB`, `u32` version, `u64` capacity,
//! `u64` age, `u64` record count, then each record as a `u32` byte length
//! followed by `u32` task id, `u32` label, `u32` feature count and the `f32`
//! features.

use std::io::{self, Read, Write};

use mer_core::replay::ReservoirBuffer;
use mer_core::Example;

const MAGIC: &[u8; 4] = b"MERB";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a buffer snapshot (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("invalid buffer: {0}")]
    Buffer(String),
}

pub fn write_snapshot(w: &mut impl Write, buffer: &ReservoirBuffer<Example>) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(buffer.capacity() as u64).to_le_bytes())?;
    w.write_all(&buffer.age().to_le_bytes())?;
    w.write_all(&(buffer.len() as u64).to_le_bytes())?;
    let mut record = Vec::new();
    for ex in buffer.items() {
        record.clear();
        record.extend_from_slice(&(ex.task_id as u32).to_le_bytes());
        record.extend_from_slice(&(ex.y as u32).to_le_bytes());
        record.extend_from_slice(&(ex.x.len() as u32).to_le_bytes());
        for v in &ex.x {
            record.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&(record.len() as u32).to_le_bytes())?;
        w.write_all(&record)?;
    }
    Ok(())
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("four bytes"))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_snapshot(r: &mut impl Read) -> Result<ReservoirBuffer<Example>, SnapshotError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let capacity = read_u64(r)? as usize;
    let age = read_u64(r)?;
    let count = read_u64(r)? as usize;
    let mut items = Vec::with_capacity(count.min(capacity));
    for index in 0..count {
        let len = read_u32(r)? as usize;
        let mut b = vec![0; len];
        r.read_exact(&mut b)?;
        let bad = |message: String| SnapshotError::Record { index, message };
        if len < 12 {
            return Err(bad(format!("{len} bytes is shorter than the record header")));
        }
        let dim = u32_at(&b, 8) as usize;
        if len != 12 + 4 * dim {
            return Err(bad(format!("{len} bytes does not match {dim} features")));
        }
        let x = b[12..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
        items.push(Example { x, y: u32_at(&b, 4) as usize, task_id: u32_at(&b, 0) as usize });
    }
    ReservoirBuffer::from_parts(items, capacity, age).map_err(|e| SnapshotError::Buffer(e.to_string()))
}
