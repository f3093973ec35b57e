//! Self-describing binary container used by spectral/descriptor caches and
//! training checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"UMC1"
//! u32    format version
//! u32    section count
//! per section:
//!   u16  name length, then UTF-8 name
//!   u8   dtype (0 = f64 matrix, 1 = u64 vector, 2 = raw bytes)
//!   u64  rows, u64 cols
//!   payload
//! ```
//!
//! Matrices are stored as f64 row-major regardless of the in-memory scalar
//! type, so caches written at one precision load at another.

use crate::error::{Error, Result};
use crate::scalar::Real;
use ndarray::Array2;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"UMC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Section {
    Matrix { rows: usize, cols: usize, data: Vec<f64> },
    U64s(Vec<u64>),
    Bytes(Vec<u8>),
}

/// An ordered set of named sections.
#[derive(Debug, Default, Clone)]
pub struct Container {
    sections: BTreeMap<String, Section>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_matrix<T: Real>(&mut self, name: &str, m: &Array2<T>) {
        let data = m.iter().map(|x| x.as_f64()).collect();
        self.sections.insert(
            name.to_string(),
            Section::Matrix { rows: m.nrows(), cols: m.ncols(), data },
        );
    }

    pub fn put_vector<T: Real>(&mut self, name: &str, v: &[T]) {
        let data = v.iter().map(|x| x.as_f64()).collect();
        self.sections
            .insert(name.to_string(), Section::Matrix { rows: v.len(), cols: 1, data });
    }

    pub fn put_u64s(&mut self, name: &str, v: &[u64]) {
        self.sections.insert(name.to_string(), Section::U64s(v.to_vec()));
    }

    pub fn put_u64(&mut self, name: &str, x: u64) {
        self.put_u64s(name, &[x]);
    }

    pub fn put_bytes(&mut self, name: &str, v: &[u8]) {
        self.sections.insert(name.to_string(), Section::Bytes(v.to_vec()));
    }

    pub fn put_str(&mut self, name: &str, s: &str) {
        self.put_bytes(name, s.as_bytes());
    }

    fn get(&self, path: &str, name: &str) -> Result<&Section> {
        self.sections.get(name).ok_or_else(|| Error::Container {
            path: path.to_string(),
            msg: format!("missing section `{name}`"),
        })
    }

    pub fn matrix<T: Real>(&self, path: &str, name: &str) -> Result<Array2<T>> {
        match self.get(path, name)? {
            Section::Matrix { rows, cols, data } => {
                let v: Vec<T> = data.iter().map(|&x| T::of(x)).collect();
                Array2::from_shape_vec((*rows, *cols), v).map_err(|e| Error::Container {
                    path: path.to_string(),
                    msg: format!("section `{name}`: {e}"),
                })
            }
            _ => Err(Error::Container {
                path: path.to_string(),
                msg: format!("section `{name}` is not a matrix"),
            }),
        }
    }

    pub fn vector<T: Real>(&self, path: &str, name: &str) -> Result<Vec<T>> {
        Ok(self.matrix::<T>(path, name)?.into_raw_vec_and_offset().0)
    }

    pub fn u64s(&self, path: &str, name: &str) -> Result<Vec<u64>> {
        match self.get(path, name)? {
            Section::U64s(v) => Ok(v.clone()),
            _ => Err(Error::Container {
                path: path.to_string(),
                msg: format!("section `{name}` is not u64"),
            }),
        }
    }

    pub fn u64(&self, path: &str, name: &str) -> Result<u64> {
        let v = self.u64s(path, name)?;
        v.first().copied().ok_or_else(|| Error::Container {
            path: path.to_string(),
            msg: format!("section `{name}` is empty"),
        })
    }

    pub fn bytes(&self, path: &str, name: &str) -> Result<Vec<u8>> {
        match self.get(path, name)? {
            Section::Bytes(v) => Ok(v.clone()),
            _ => Err(Error::Container {
                path: path.to_string(),
                msg: format!("section `{name}` is not bytes"),
            }),
        }
    }

    pub fn str(&self, path: &str, name: &str) -> Result<String> {
        String::from_utf8(self.bytes(path, name)?).map_err(|e| Error::Container {
            path: path.to_string(),
            msg: format!("section `{name}`: {e}"),
        })
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (name, sec) in &self.sections {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            match sec {
                Section::Matrix { rows, cols, data } => {
                    w.write_all(&[0u8])?;
                    w.write_all(&(*rows as u64).to_le_bytes())?;
                    w.write_all(&(*cols as u64).to_le_bytes())?;
                    for x in data {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Section::U64s(v) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    w.write_all(&1u64.to_le_bytes())?;
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Section::Bytes(v) => {
                    w.write_all(&[2u8])?;
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    w.write_all(&1u64.to_le_bytes())?;
                    w.write_all(v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read, path: &str) -> Result<Self> {
        let bad = |msg: String| Error::Container { path: path.to_string(), msg };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u16(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
            let mut dtype = [0u8; 1];
            r.read_exact(&mut dtype)?;
            let rows = read_u64(r)? as usize;
            let cols = read_u64(r)? as usize;
            let sec = match dtype[0] {
                0 => {
                    let mut data = vec![0f64; rows * cols];
                    for x in &mut data {
                        *x = f64::from_le_bytes(read_8(r)?);
                    }
                    Section::Matrix { rows, cols, data }
                }
                1 => {
                    let mut v = vec![0u64; rows];
                    for x in &mut v {
                        *x = u64::from_le_bytes(read_8(r)?);
                    }
                    Section::U64s(v)
                }
                2 => {
                    let mut v = vec![0u8; rows];
                    r.read_exact(&mut v)?;
                    Section::Bytes(v)
                }
                d => return Err(bad(format!("unknown dtype {d}"))),
            };
            sections.insert(name, sec);
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f, &path.display().to_string())
    }
}

fn read_8(r: &mut impl Read) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
