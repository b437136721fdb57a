//! Binary on-disk cache for a built graph bank, so repeated runs over the
//! same data skip the Gram product. Little-endian layout behind the
//! `MCGF1` magic, closed by a hash trailer over everything before it.

use crate::error::{Error, Result};
use crate::graph::{AdjustmentMap, FilterFamily, ItemGraphBank};
use crate::sparse::SparseMatrix;
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

const MAGIC: &[u8; 5] = b"MCGF1";

/// 64-bit FNV-1a; also used for config fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Incremental FNV-1a writer wrapper so the checksum covers exactly the
/// bytes written.
struct HashingWriter<W: Write> {
    inner: W,
    hash: u64,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hash: 0xcbf29ce484222325,
        }
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        for &b in &buf[..n] {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(0x100000001b3);
        }
        Ok(n)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hash: u64,
}

impl<R: Read> HashingReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            hash: 0xcbf29ce484222325,
        }
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        for &b in &buf[..n] {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(0x100000001b3);
        }
        Ok(n)
    }
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_matrix<W: Write>(w: &mut W, m: &SparseMatrix) -> std::io::Result<()> {
    write_u64(w, m.n_rows() as u64)?;
    write_u64(w, m.n_cols() as u64)?;
    write_u64(w, m.nnz() as u64)?;
    for &o in m.row_offsets() {
        write_u64(w, o as u64)?;
    }
    for &c in m.col_indices() {
        w.write_all(&c.to_le_bytes())?;
    }
    for &v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_matrix<R: Read>(r: &mut R) -> Result<SparseMatrix> {
    let n_rows = read_u64(r)? as usize;
    let n_cols = read_u64(r)? as usize;
    let nnz = read_u64(r)? as usize;
    let mut row_offsets = Vec::with_capacity(n_rows + 1);
    for _ in 0..=n_rows {
        row_offsets.push(read_u64(r)? as usize);
    }
    let mut col_indices = Vec::with_capacity(nnz);
    let mut buf4 = [0u8; 4];
    for _ in 0..nnz {
        r.read_exact(&mut buf4)?;
        col_indices.push(u32::from_le_bytes(buf4));
    }
    let mut values = Vec::with_capacity(nnz);
    let mut buf8 = [0u8; 8];
    for _ in 0..nnz {
        r.read_exact(&mut buf8)?;
        values.push(f64::from_le_bytes(buf8));
    }
    SparseMatrix::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
        .map_err(|e| Error::Cache(format!("invalid cached matrix: {e}")))
}

fn family_byte(f: FilterFamily) -> u8 {
    match f {
        FilterFamily::Linear => b'L',
        FilterFamily::Inward => b'I',
        FilterFamily::Outward => b'O',
    }
}

fn family_from(b: u8) -> Result<FilterFamily> {
    match b {
        b'L' => Ok(FilterFamily::Linear),
        b'I' => Ok(FilterFamily::Inward),
        b'O' => Ok(FilterFamily::Outward),
        other => Err(Error::Cache(format!("unknown family tag {other}"))),
    }
}

/// Write a bank; adjusted graphs sharing storage with the unadjusted one
/// are stored as references, not copies.
pub fn save_bank(path: &Path, bank: &ItemGraphBank) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = HashingWriter::new(BufWriter::new(file));
        w.write_all(MAGIC)?;
        write_matrix(&mut w, &bank.p_tilde)?;
        write_u64(&mut w, bank.adjusted.len() as u64)?;
        for (&family, graph) in &bank.adjusted {
            w.write_all(&[family_byte(family)])?;
            let s = *bank.s_f_values.get(&family).unwrap_or(&1.0);
            w.write_all(&s.to_le_bytes())?;
            if Arc::ptr_eq(graph, &bank.p_tilde) {
                w.write_all(&[0u8])?;
            } else {
                w.write_all(&[1u8])?;
                write_matrix(&mut w, graph)?;
            }
        }
        let checksum = w.hash;
        let mut inner = w.inner;
        inner.write_all(&checksum.to_le_bytes())?;
        inner.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a bank, verifying magic, checksum, and matrix invariants.
pub fn load_bank(path: &Path) -> Result<ItemGraphBank> {
    let file = std::fs::File::open(path)?;
    let mut r = HashingReader::new(BufReader::new(file));
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Cache("bad magic; not a graph cache file".into()));
    }
    let p_tilde = Arc::new(read_matrix(&mut r)?);
    let n_adjusted = read_u64(&mut r)? as usize;
    let mut adjusted = BTreeMap::new();
    let mut s_f_values = AdjustmentMap::new();
    for _ in 0..n_adjusted {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let family = family_from(tag[0])?;
        let mut sbuf = [0u8; 8];
        r.read_exact(&mut sbuf)?;
        s_f_values.insert(family, f64::from_le_bytes(sbuf));
        let mut shared = [0u8; 1];
        r.read_exact(&mut shared)?;
        let graph = match shared[0] {
            0 => Arc::clone(&p_tilde),
            1 => Arc::new(read_matrix(&mut r)?),
            other => return Err(Error::Cache(format!("bad sharing tag {other}"))),
        };
        adjusted.insert(family, graph);
    }
    let computed = r.hash;
    let mut trailer = [0u8; 8];
    r.inner.read_exact(&mut trailer)?;
    if u64::from_le_bytes(trailer) != computed {
        return Err(Error::Cache("checksum mismatch; cache corrupted".into()));
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Cache("trailing bytes after checksum".into()));
    }
    Ok(ItemGraphBank {
        p_tilde,
        adjusted,
        s_f_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_item_graph, uniform_adjustment, DEFAULT_NNZ_CAP};
    use crate::ingest::{generate_synthetic, SyntheticSpec};

    fn sample_bank(s: f64) -> ItemGraphBank {
        let t = generate_synthetic(&SyntheticSpec {
            n_users: 15,
            n_items: 12,
            n_mc_ratings: 200,
            n_criteria: 2,
            sparsity: 0.5,
            seed: 2,
        })
        .unwrap();
        let mut s_f = uniform_adjustment(s);
        s_f.insert(FilterFamily::Outward, 1.0); // exercise the shared path
        build_item_graph(&t, &s_f, DEFAULT_NNZ_CAP).unwrap()
    }

    #[test]
    fn round_trip_preserves_bank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        let bank = sample_bank(1.4);
        save_bank(&path, &bank).unwrap();
        let loaded = load_bank(&path).unwrap();
        assert_eq!(*loaded.p_tilde, *bank.p_tilde);
        assert_eq!(loaded.s_f_values, bank.s_f_values);
        for (f, g) in &bank.adjusted {
            assert_eq!(**g, **loaded.adjusted.get(f).unwrap());
        }
        // Sharing survives the round trip.
        assert!(Arc::ptr_eq(
            loaded.adjusted.get(&FilterFamily::Outward).unwrap(),
            &loaded.p_tilde
        ));
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        save_bank(&path, &sample_bank(0.8)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_bank(&path).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        std::fs::write(&path, b"NOTMAGIC-and-more").unwrap();
        assert!(load_bank(&path).is_err());
    }

    #[test]
    fn truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        save_bank(&path, &sample_bank(1.0)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_bank(&path).is_err());
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
