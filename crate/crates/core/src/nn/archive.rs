//! Single-file container of named `f32` arrays plus a JSON manifest.
//!
//! Layout (little-endian): magic `FLAR`, `u32` version, `u32` manifest length,
//! manifest JSON bytes, `u32` tensor count, then per tensor: `u32` name length,
//! UTF-8 name, `u32` rank, `u32` dims, and the `f32` values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::param::{Module, Param, ParamVisitor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FLAR";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    pub manifest: serde_json::Value,
    pub tensors: BTreeMap<String, ArchiveTensor>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| format_err(format!("truncated archive: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

impl TensorArchive {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.insert(name.into(), ArchiveTensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&ArchiveTensor> {
        self.tensors.get(name).ok_or_else(|| format_err(format!("archive is missing tensor `{name}`")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(manifest.len() as u32).to_le_bytes())?;
        w.write_all(&manifest)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut bytes = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| format_err("not a tensor archive"))?;
        if &magic != MAGIC {
            return Err(format_err("not a tensor archive (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(format_err(format!("unsupported archive version {version}")));
        }
        let mlen = read_u32(r)? as usize;
        let mut mbytes = vec![0u8; mlen];
        r.read_exact(&mut mbytes).map_err(|_| format_err("truncated manifest"))?;
        let manifest = serde_json::from_slice(&mbytes)?;
        let count = read_u32(r)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let nlen = read_u32(r)? as usize;
            let mut name = vec![0u8; nlen];
            r.read_exact(&mut name).map_err(|_| format_err("truncated tensor name"))?;
            let name = String::from_utf8(name).map_err(|_| format_err("tensor name is not UTF-8"))?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let mut bytes = vec![0u8; len * 4];
            r.read_exact(&mut bytes).map_err(|_| format_err(format!("truncated data for `{name}`")))?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.insert(name, ArchiveTensor { shape, data });
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

/// Copies every parameter and buffer of `module` into `archive` under `prefix`.
pub fn export_module(module: &mut dyn Module<f32>, prefix: &str, archive: &mut TensorArchive) {
    struct Export<'a>(&'a mut TensorArchive);
    impl ParamVisitor<f32> for Export<'_> {
        fn param(&mut self, name: &str, p: &mut Param<f32>) {
            self.0.insert(name, p.shape.clone(), p.value.clone());
        }
        fn buffer(&mut self, name: &str, b: &mut Vec<f32>) {
            self.0.insert(name, vec![b.len()], b.clone());
        }
    }
    module.visit(prefix, &mut Export(archive));
}

/// Loads every parameter and buffer of `module` from `archive`; shapes must match.
pub fn import_module(module: &mut dyn Module<f32>, prefix: &str, archive: &TensorArchive) -> Result<()> {
    struct Import<'a> {
        archive: &'a TensorArchive,
        error: Option<Error>,
    }
    impl Import<'_> {
        fn fetch(&mut self, name: &str, shape: &[usize]) -> Option<Vec<f32>> {
            if self.error.is_some() {
                return None;
            }
            match self.archive.get(name) {
                Ok(t) if t.shape == shape => Some(t.data.clone()),
                Ok(t) => {
                    self.error = Some(Error::Format(format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape)));
                    None
                }
                Err(e) => {
                    self.error = Some(e);
                    None
                }
            }
        }
    }
    impl ParamVisitor<f32> for Import<'_> {
        fn param(&mut self, name: &str, p: &mut Param<f32>) {
            if let Some(v) = self.fetch(name, &p.shape.clone()) {
                p.value = v;
                p.zero_grad();
            }
        }
        fn buffer(&mut self, name: &str, b: &mut Vec<f32>) {
            if let Some(v) = self.fetch(name, &[b.len()]) {
                *b = v;
            }
        }
    }
    let mut v = Import { archive, error: None };
    module.visit(prefix, &mut v);
    v.error.map_or(Ok(()), Err)
}
