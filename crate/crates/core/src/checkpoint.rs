//! Parameter checkpoint container.
//!
//! Little-endian layout: magic `AGTC`, `u32` version (1), `u32` descriptor
//! length and the UTF-8 descriptor, then blocks until end of file, each
//! `u32` name length, name bytes, `u32` rows, `u32` cols and `rows × cols`
//! `f32` values row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CKPT_MAGIC: &[u8; 4] = b"AGTC";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub descriptor: String,
    pub blocks: Vec<(String, Matrix)>,
}

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{what} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

impl ParamFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        push_u32(&mut out, self.descriptor.len(), "descriptor length")?;
        out.extend_from_slice(self.descriptor.as_bytes());
        for (name, m) in &self.blocks {
            push_u32(&mut out, name.len(), "block name length")?;
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, m.rows(), "rows")?;
            push_u32(&mut out, m.cols(), "cols")?;
            for v in m.to_f32() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4).map_err(|_| Error::Format("checkpoint too short".into()))? != CKPT_MAGIC {
            return Err(Error::Format("bad magic, expected AGTC".into()));
        }
        let version = c.u32()?;
        if version != CKPT_VERSION as usize {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let descriptor = c.string()?;
        let mut blocks = Vec::new();
        while !c.done() {
            let name = c.string()?;
            let rows = c.u32()?;
            let cols = c.u32()?;
            let raw = c.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| {
                Error::Format("block size overflow".into())
            })?)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            blocks.push((name, Matrix::from_f32(rows, cols, &data)?));
        }
        Ok(Self { descriptor, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamFile {
        ParamFile {
            descriptor: "model=agtm;layers=2".into(),
            blocks: vec![
                ("a".into(), Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap()),
                ("bias".into(), Matrix::zeros(1, 3)),
                ("empty".into(), Matrix::zeros(0, 4)),
            ],
        }
    }

    #[test]
    fn roundtrip() {
        let f = sample();
        assert_eq!(ParamFile::decode(&f.encode().unwrap()).unwrap(), f);
    }

    #[test]
    fn layout() {
        let f = ParamFile {
            descriptor: "x".into(),
            blocks: vec![("w".into(), Matrix::from_rows(&[vec![1.0]]).unwrap())],
        };
        let b = f.encode().unwrap();
        let mut expected = b"AGTC".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.push(b'x');
        expected.extend(1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn rejects_corruption() {
        let b = sample().encode().unwrap();
        assert!(ParamFile::decode(&b[..b.len() - 2]).is_err());
        let mut bad = b.clone();
        bad[0] = b'Z';
        assert!(ParamFile::decode(&bad).is_err());
        let mut bad = b;
        bad[4] = 9;
        assert!(ParamFile::decode(&bad).is_err());
    }
}
