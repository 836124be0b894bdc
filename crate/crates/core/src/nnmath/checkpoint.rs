//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "HICREC01"
//! version u32
//! count   u32      number of tensors
//! per tensor:
//!   name_len u32, name UTF-8 bytes
//!   ndims u32, dims u64 × ndims
//!   values f64 × Π dims, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dense::DenseMatrix;
use super::params::ParamStore;
use crate::binio::*;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HICREC01";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, store: &ParamStore) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, store.len() as u32)?;
    for (name, t) in store.iter() {
        write_str(w, name)?;
        write_u32(w, 2)?;
        write_u64(w, t.value.rows() as u64)?;
        write_u64(w, t.value.cols() as u64)?;
        write_f64s(w, t.value.as_slice())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ParamStore> {
    let bad = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(bad)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".to_string()));
    }
    let version = read_u32(r).map_err(bad)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r).map_err(bad)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = read_str(r, 1 << 16).map_err(bad)?;
        let ndims = read_u32(r).map_err(bad)?;
        let dims = (0..ndims)
            .map(|_| read_u64(r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(bad)?;
        let (rows, cols) = match dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: unsupported rank {}",
                    other.len()
                )))
            }
        };
        let values = read_f64s(r, rows * cols).map_err(bad)?;
        store.insert(name, DenseMatrix::from_vec(rows, cols, values)?)?;
    }
    Ok(store)
}

pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, store).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::init::xavier_init;

    #[test]
    fn header_layout() {
        let mut s = ParamStore::new();
        s.insert("rec.W", DenseMatrix::from_rows(&[&[1.0, 2.0]])).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &s).unwrap();
        assert_eq!(&buf[..8], b"HICREC01");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 5);
        assert_eq!(&buf[20..25], b"rec.W");
        // ndims + 2 dims + 2 values
        assert_eq!(buf.len(), 25 + 4 + 16 + 16);
        assert_eq!(f64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap()), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn roundtrip(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            let mut s = ParamStore::new();
            s.insert("aspect.a.gcn.0.W", xavier_init(rows, cols, seed)).unwrap();
            s.insert("rec.W", xavier_init(1, cols, seed + 1)).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &s).unwrap();
            let back = read_checkpoint(&mut buf.as_slice()).unwrap();
            let names: Vec<_> = back.names().collect();
            proptest::prop_assert_eq!(names, vec!["aspect.a.gcn.0.W", "rec.W"]);
            for (n, t) in s.iter() {
                proptest::prop_assert_eq!(&back.get(n).unwrap().value, &t.value);
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&mut &b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        let mut s = ParamStore::new();
        s.insert("x", DenseMatrix::zeros(3, 3)).unwrap();
        write_checkpoint(&mut buf, &s).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
