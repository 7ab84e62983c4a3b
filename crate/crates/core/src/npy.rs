//! Minimal NPY (format version 1.0) reader/writer for little-endian
//! `float32` and `float64` C-order arrays.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not an NPY v1.0 file")]
    BadHeader,
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(String),
    #[error("shape {shape:?} needs {expected} values, payload has {found}")]
    SizeMismatch { shape: Vec<usize>, expected: usize, found: usize },
}

/// Element types that can be stored.
pub trait NpyElement: Copy {
    const DESCR: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl NpyElement for f32 {
    const DESCR: &'static str = "<f4";
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl NpyElement for f64 {
    const DESCR: &'static str = "<f8";
    const SIZE: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

fn header<T: NpyElement>(shape: &[usize]) -> Vec<u8> {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!("({})", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut dict = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}", T::DESCR, dims);
    // magic + version + u16 length + dict + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    dict.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn encode<T: NpyElement>(shape: &[usize], data: &[T]) -> Result<Vec<u8>, NpyError> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(NpyError::SizeMismatch { shape: shape.to_vec(), expected, found: data.len() });
    }
    let mut out = header::<T>(shape);
    out.reserve(data.len() * T::SIZE);
    for &x in data {
        x.write_le(&mut out);
    }
    Ok(out)
}

pub fn write<T: NpyElement>(path: impl AsRef<Path>, shape: &[usize], data: &[T]) -> Result<(), NpyError> {
    let bytes = encode(shape, data)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn parse_shape(dict: &str) -> Option<Vec<usize>> {
    let start = dict.find("'shape':")? + "'shape':".len();
    let open = start + dict[start..].find('(')?;
    let close = open + dict[open..].find(')')?;
    dict[open + 1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

pub fn decode<T: NpyElement>(bytes: &[u8]) -> Result<(Vec<usize>, Vec<T>), NpyError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC || bytes[6] != 1 {
        return Err(NpyError::BadHeader);
    }
    let len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let dict = std::str::from_utf8(bytes.get(10..10 + len).ok_or(NpyError::BadHeader)?).map_err(|_| NpyError::BadHeader)?;
    if !dict.contains(&format!("'descr': '{}'", T::DESCR)) {
        let descr = dict.split('\'').nth(3).unwrap_or("?").to_string();
        return Err(NpyError::UnsupportedDtype(descr));
    }
    if dict.contains("'fortran_order': True") {
        return Err(NpyError::BadHeader);
    }
    let shape = parse_shape(dict).ok_or(NpyError::BadHeader)?;
    let payload = &bytes[10 + len..];
    let expected: usize = shape.iter().product();
    if payload.len() != expected * T::SIZE {
        return Err(NpyError::SizeMismatch { shape, expected, found: payload.len() / T::SIZE });
    }
    Ok((shape, payload.chunks_exact(T::SIZE).map(T::read_le).collect()))
}

pub fn read<T: NpyElement>(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<T>), NpyError> {
    decode(&fs::read(path)?)
}
