//! Little-endian primitives shared by the checkpoint and cache formats.

use std::io::{self, Read, Write};

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> io::Result<()> {
    for &v in vals {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn write_usizes<W: Write>(w: &mut W, vals: &[usize]) -> io::Result<()> {
    write_u64(w, vals.len() as u64)?;
    for &v in vals {
        write_u64(w, v as u64)?;
    }
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a length-prefixed UTF-8 string, refusing lengths above `max_len`.
pub fn read_str<R: Read>(r: &mut R, max_len: usize) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    if len > max_len {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("string length {len} exceeds {max_len}"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

pub fn read_usizes<R: Read>(r: &mut R) -> io::Result<Vec<usize>> {
    let n = read_u64(r)? as usize;
    (0..n).map(|_| read_u64(r).map(|v| v as usize)).collect()
}
