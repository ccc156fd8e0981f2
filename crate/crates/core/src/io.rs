//! File formats.
//!
//! | what                | text                                   | binary |
//! |---------------------|----------------------------------------|--------|
//! | codebook            | JSON `{"dim": d, "entries": [[..],..]}`| `PIVQCB1\0`, u32 K, u32 d, K·d f64 LE |
//! | embeddings          | CSV, one row per vector, `d` columns   | `PIVQEM1\0`, u32 count, u32 d, f64 LE |
//! | coded dataset       | JSON Lines `{"id": "..", "codes": [..]}` | |

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{PivqError, Result};
use crate::types::{CodeSet, Codebook, Embedding};

pub const CODEBOOK_MAGIC: &[u8; 8] = b"PIVQCB1\0";
pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"PIVQEM1\0";

#[derive(Serialize, Deserialize)]
struct CodebookJson {
    dim: usize,
    entries: Vec<Vec<f64>>,
}

pub fn codebook_to_json(cb: &Codebook) -> Result<String> {
    let doc = CodebookJson {
        dim: cb.dim(),
        entries: cb.entries().map(<[f64]>::to_vec).collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn codebook_from_json(text: &str) -> Result<Codebook> {
    let doc: CodebookJson = serde_json::from_str(text)?;
    if doc.entries.is_empty() {
        return Err(PivqError::EmptyCodebook);
    }
    let entries = doc
        .entries
        .into_iter()
        .map(|e| {
            if e.len() != doc.dim {
                return Err(PivqError::DimensionMismatch {
                    expected: doc.dim,
                    actual: e.len(),
                });
            }
            Embedding::new(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Codebook::new(entries)
}

fn write_matrix(magic: &[u8; 8], rows: usize, dim: usize, values: &[f64]) -> Result<Vec<u8>> {
    let to_u32 = |x: usize| {
        u32::try_from(x).map_err(|_| PivqError::invalid(format!("{x} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(16 + values.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&to_u32(rows)?.to_le_bytes());
    out.extend_from_slice(&to_u32(dim)?.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_matrix(magic: &[u8; 8], bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(PivqError::parse("truncated header"));
    }
    if &bytes[..8] != magic {
        return Err(PivqError::parse("bad magic bytes"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| PivqError::parse("header sizes overflow"))?;
    if body.len() != expected {
        return Err(PivqError::parse(format!(
            "expected {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, dim, values))
}

pub fn codebook_to_bytes(cb: &Codebook) -> Result<Vec<u8>> {
    write_matrix(CODEBOOK_MAGIC, cb.len(), cb.dim(), cb.as_flat())
}

pub fn codebook_from_bytes(bytes: &[u8]) -> Result<Codebook> {
    let (k, dim, values) = read_matrix(CODEBOOK_MAGIC, bytes)?;
    if k == 0 {
        return Err(PivqError::EmptyCodebook);
    }
    if dim == 0 {
        return Err(PivqError::parse("zero dimension"));
    }
    Codebook::from_flat(dim, values)
}

/// Reads either codebook format, sniffing the magic bytes.
pub fn read_codebook(bytes: &[u8]) -> Result<Codebook> {
    if bytes.starts_with(b"PIVQ") {
        codebook_from_bytes(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| PivqError::parse(e.to_string()))?;
        codebook_from_json(text)
    }
}

pub fn embeddings_to_bytes(zs: &[Embedding]) -> Result<Vec<u8>> {
    let dim = zs.first().map_or(0, Embedding::dim);
    let mut values = Vec::with_capacity(zs.len() * dim);
    for z in zs {
        crate::error::check_dim(dim, z.dim())?;
        values.extend_from_slice(z.as_slice());
    }
    write_matrix(EMBEDDINGS_MAGIC, zs.len(), dim, &values)
}

pub fn embeddings_from_bytes(bytes: &[u8]) -> Result<Vec<Embedding>> {
    let (count, dim, values) = read_matrix(EMBEDDINGS_MAGIC, bytes)?;
    if count > 0 && dim == 0 {
        return Err(PivqError::parse("zero dimension"));
    }
    values
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|c| Embedding::new(c.to_vec()))
        .collect()
}

/// One embedding per line, comma separated, no header.
pub fn embeddings_to_csv(zs: &[Embedding]) -> String {
    let mut out = String::new();
    for z in zs {
        let row: Vec<String> = z.as_slice().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn embeddings_from_csv(text: &str) -> Result<Vec<Embedding>> {
    let mut out: Vec<Embedding> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    PivqError::parse(format!("line {}: {f:?}: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first() {
            crate::error::check_dim(first.dim(), values.len())?;
        }
        out.push(Embedding::new(values)?);
    }
    Ok(out)
}

/// Reads either embedding format, sniffing the magic bytes.
pub fn read_embeddings(bytes: &[u8]) -> Result<Vec<Embedding>> {
    if bytes.starts_with(b"PIVQ") {
        embeddings_from_bytes(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| PivqError::parse(e.to_string()))?;
        embeddings_from_csv(text)
    }
}

/// One line of a coded dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedSample {
    pub id: String,
    pub codes: CodeSet,
}

pub fn write_coded<W: Write>(mut w: W, samples: &[CodedSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn coded_to_string(samples: &[CodedSample]) -> Result<String> {
    let mut buf = Vec::new();
    write_coded(&mut buf, samples)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn read_coded<R: BufRead>(r: R) -> Result<Vec<CodedSample>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: CodedSample = serde_json::from_str(&line)
            .map_err(|e| PivqError::parse(format!("line {}: {e}", lineno + 1)))?;
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_codebook() -> Codebook {
        Codebook::new(vec![
            Embedding::new(vec![0.1, -2.5]).unwrap(),
            Embedding::new(vec![1e-300, 7.0 / 3.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn codebook_round_trips() {
        let cb = sample_codebook();
        assert_eq!(codebook_from_bytes(&codebook_to_bytes(&cb).unwrap()).unwrap(), cb);
        assert_eq!(codebook_from_json(&codebook_to_json(&cb).unwrap()).unwrap(), cb);
        assert_eq!(read_codebook(&codebook_to_bytes(&cb).unwrap()).unwrap(), cb);
        assert_eq!(read_codebook(codebook_to_json(&cb).unwrap().as_bytes()).unwrap(), cb);
    }

    #[test]
    fn binary_layout() {
        let bytes = codebook_to_bytes(&sample_codebook()).unwrap();
        assert_eq!(&bytes[..8], b"PIVQCB1\0");
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &0.1f64.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 4 * 8);
    }

    #[test]
    fn codebook_parse_errors() {
        assert!(matches!(
            codebook_from_json(r#"{"dim": 2, "entries": []}"#),
            Err(PivqError::EmptyCodebook)
        ));
        assert!(codebook_from_json(r#"{"dim": 2, "entries": [[1.0]]}"#).is_err());
        let mut bytes = codebook_to_bytes(&sample_codebook()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(codebook_from_bytes(&bytes), Err(PivqError::Parse(_))));
        let bytes = codebook_to_bytes(&sample_codebook()).unwrap();
        assert!(codebook_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(codebook_from_bytes(&bytes[..10]).is_err());
        let empty = write_matrix(CODEBOOK_MAGIC, 0, 2, &[]).unwrap();
        assert!(matches!(codebook_from_bytes(&empty), Err(PivqError::EmptyCodebook)));
    }

    #[test]
    fn embeddings_round_trip() {
        let zs = vec![
            Embedding::new(vec![1.0, 2.5, -0.125]).unwrap(),
            Embedding::new(vec![0.1, 0.2, 0.3]).unwrap(),
        ];
        assert_eq!(embeddings_from_csv(&embeddings_to_csv(&zs)).unwrap(), zs);
        assert_eq!(read_embeddings(&embeddings_to_bytes(&zs).unwrap()).unwrap(), zs);
        assert!(embeddings_from_csv("1,2\n3\n").is_err());
        assert!(embeddings_from_csv("1,abc\n").is_err());
    }

    #[test]
    fn coded_round_trip() {
        let samples = vec![
            CodedSample {
                id: "a".into(),
                codes: CodeSet::new(vec![3, 1]).unwrap(),
            },
            CodedSample {
                id: "b".into(),
                codes: CodeSet::new(vec![]).unwrap(),
            },
        ];
        let text = coded_to_string(&samples).unwrap();
        assert_eq!(text, "{\"id\":\"a\",\"codes\":[1,3]}\n{\"id\":\"b\",\"codes\":[]}\n");
        assert_eq!(read_coded(text.as_bytes()).unwrap(), samples);
        assert!(read_coded("{\"id\":\"x\",\"codes\":[1,1]}\n".as_bytes()).is_err());
    }
}
