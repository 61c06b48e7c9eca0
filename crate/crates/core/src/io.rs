//! Binary container formats shared with external tooling.
//!
//! BMAT:  magic "BMAT1", u32 rows, u32 cols, u8 dtype (0 = f32, 1 = f64),
//!        little-endian row-major payload.
//! TOKS1: magic "TOKS1", u32 vocab_size, u32 doc_count, then per document
//!        u32 length followed by u32 token ids.
//! LBLS1: magic "LBLS1", u32 count, u32 ids.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::ngram::TokenStream;
use std::io::{Read, Write};
use std::path::Path;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_magic<R: Read>(r: &mut R, expect: &[u8; 5]) -> Result<()> {
    let mut buf = [0u8; 5];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &buf != expect {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}",
            std::str::from_utf8(expect).unwrap()
        )));
    }
    Ok(())
}

pub fn write_bmat(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(14 + 8 * m.data.len());
    out.extend_from_slice(b"BMAT1");
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    out.push(1u8);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_bmat(path: &Path) -> Result<DenseMatrix> {
    let mut f = std::fs::File::open(path)?;
    read_magic(&mut f, b"BMAT1")?;
    let rows = read_u32(&mut f)? as usize;
    let cols = read_u32(&mut f)? as usize;
    let mut dtype = [0u8; 1];
    f.read_exact(&mut dtype)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    match dtype[0] {
        0 => {
            let mut buf = vec![0u8; count * 4];
            f.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated f32 payload: {e}")))?;
            for chunk in buf.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        1 => {
            let mut buf = vec![0u8; count * 8];
            f.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated f64 payload: {e}")))?;
            for chunk in buf.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        d => return Err(Error::Format(format!("unknown dtype {d}"))),
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tokens(path: &Path, ts: &TokenStream) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"TOKS1");
    out.extend_from_slice(&ts.vocab_size.to_le_bytes());
    out.extend_from_slice(&(ts.documents.len() as u32).to_le_bytes());
    for doc in &ts.documents {
        out.extend_from_slice(&(doc.len() as u32).to_le_bytes());
        for &t in doc {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_tokens(path: &Path) -> Result<TokenStream> {
    let mut f = std::fs::File::open(path)?;
    read_magic(&mut f, b"TOKS1")?;
    let vocab_size = read_u32(&mut f)?;
    let doc_count = read_u32(&mut f)? as usize;
    let mut documents = Vec::with_capacity(doc_count);
    for _ in 0..doc_count {
        let len = read_u32(&mut f)? as usize;
        let mut buf = vec![0u8; len * 4];
        f.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated document: {e}")))?;
        documents.push(
            buf.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    TokenStream::new(documents, vocab_size).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut out = Vec::with_capacity(9 + 4 * labels.len());
    out.extend_from_slice(b"LBLS1");
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut f = std::fs::File::open(path)?;
    read_magic(&mut f, b"LBLS1")?;
    let count = read_u32(&mut f)? as usize;
    let mut buf = vec![0u8; count * 4];
    f.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated labels: {e}")))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write `bytes` atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
