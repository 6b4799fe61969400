//! Minimal `.npy` reader/writer for little-endian `f8` and `b1` arrays of rank 1 or 2.
//!
//! Files are written as format 1.0 with the header padded to a 64-byte
//! boundary, the same layout numpy produces. Versions 2.0 and 3.0 are read.

use std::fs;
use std::path::Path;

use crate::array::Matrix;
use crate::error::{CarError, Result};

const MAGIC: &[u8] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F64(Vec<f64>),
    Bool(Vec<bool>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::F64(v) => v.len(),
            NpyData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn descr(&self) -> &'static str {
        match self {
            NpyData::F64(_) => "<f8",
            NpyData::Bool(_) => "|b1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn f64_1d(values: Vec<f64>) -> Self {
        NpyArray {
            shape: vec![values.len()],
            data: NpyData::F64(values),
        }
    }

    pub fn bool_1d(values: Vec<bool>) -> Self {
        NpyArray {
            shape: vec![values.len()],
            data: NpyData::Bool(values),
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        NpyArray {
            shape: vec![m.rows(), m.cols()],
            data: NpyData::F64(m.as_slice().to_vec()),
        }
    }

    pub fn dtype(&self) -> &'static str {
        self.data.descr()
    }

    pub fn into_f64_1d(self) -> Result<Vec<f64>> {
        match (self.shape.len(), self.data) {
            (1, NpyData::F64(v)) => Ok(v),
            (_, NpyData::Bool(_)) => Err(CarError::UnsupportedDtype("|b1 (expected <f8)".into())),
            (r, _) => Err(CarError::shape("array rank", 1, r)),
        }
    }

    pub fn into_bool_1d(self) -> Result<Vec<bool>> {
        match (self.shape.len(), self.data) {
            (1, NpyData::Bool(v)) => Ok(v),
            (_, NpyData::F64(_)) => Err(CarError::UnsupportedDtype("<f8 (expected |b1)".into())),
            (r, _) => Err(CarError::shape("array rank", 1, r)),
        }
    }

    pub fn into_matrix(self) -> Result<Matrix> {
        match (self.shape.as_slice(), self.data) {
            (&[r, c], NpyData::F64(v)) => Matrix::new(r, c, v),
            (_, NpyData::Bool(_)) => Err(CarError::UnsupportedDtype("|b1 (expected <f8)".into())),
            (s, _) => Err(CarError::shape("array rank", 2, s.len())),
        }
    }
}

fn header_text(shape: &[usize], descr: &str) -> String {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {dims}, }}")
}

/// Serializes `array` as npy 1.0 bytes.
pub fn to_bytes(array: &NpyArray) -> Result<Vec<u8>> {
    let expected: usize = array.shape.iter().product();
    if array.shape.is_empty() || array.shape.len() > 2 || expected != array.data.len() {
        return Err(CarError::shape(
            "npy array",
            format!("{} elements", expected),
            format!("{} elements", array.data.len()),
        ));
    }
    let mut header = header_text(&array.shape, array.data.descr());
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.extend(std::iter::repeat_n(' ', (ALIGN - unpadded % ALIGN) % ALIGN));
    header.push('\n');
    let hlen = u16::try_from(header.len()).map_err(|_| CarError::MalformedHeader("header too long".into()))?;

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + array.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&hlen.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &array.data {
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
    }
    Ok(out)
}

/// Value of `'key': ...` in a header dict, up to the next top-level comma.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat_sq = format!("'{key}'");
    let pat_dq = format!("\"{key}\"");
    let start = header
        .find(&pat_sq)
        .map(|i| i + pat_sq.len())
        .or_else(|| header.find(&pat_dq).map(|i| i + pat_dq.len()))
        .ok_or_else(|| CarError::MalformedHeader(format!("missing key '{key}'")))?;
    let rest = header[start..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| CarError::MalformedHeader(format!("no ':' after '{key}'")))?
        .trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| CarError::MalformedHeader(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

fn parse_header(header: &str) -> Result<(String, bool, Vec<usize>)> {
    let descr = dict_value(header, "descr")?.trim_matches(|c| c == '\'' || c == '"').to_string();
    let fortran = match dict_value(header, "fortran_order")? {
        "False" => false,
        "True" => true,
        other => return Err(CarError::MalformedHeader(format!("fortran_order = {other}"))),
    };
    let dims = dict_value(header, "shape")?;
    let inner = dims
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| CarError::MalformedHeader(format!("shape = {dims}")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| CarError::MalformedHeader(format!("shape = {dims}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((descr, fortran, shape))
}

pub fn from_bytes(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < MAGIC.len() + 2 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CarError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (hlen, body) = match major {
        1 if bytes.len() >= 10 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        1..=3 => return Err(CarError::MalformedHeader("truncated header length".into())),
        _ => return Err(CarError::UnsupportedVersion(major, minor)),
    };
    let header = bytes
        .get(body..body + hlen)
        .ok_or_else(|| CarError::MalformedHeader("truncated header".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| CarError::MalformedHeader("header is not text".into()))?;
    let (descr, fortran, shape) = parse_header(header)?;
    let payload = &bytes[body + hlen..];

    let width = match descr.as_str() {
        "<f8" => 8,
        "|b1" | "<b1" | "b1" | "?" => 1,
        _ => return Err(CarError::UnsupportedDtype(descr)),
    };
    if shape.is_empty() || shape.len() > 2 {
        return Err(CarError::shape("array rank", "1 or 2", shape.len()));
    }
    if fortran && shape.len() == 2 && shape[0] > 1 && shape[1] > 1 {
        return Err(CarError::MalformedHeader("fortran_order arrays are not supported".into()));
    }
    let count: usize = shape.iter().product();
    if payload.len() != count * width {
        return Err(CarError::shape(
            "npy payload",
            format!("{} bytes", count * width),
            format!("{} bytes", payload.len()),
        ));
    }
    let data = if width == 8 {
        NpyData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        )
    } else {
        NpyData::Bool(
            payload
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(CarError::Malformed(format!("boolean byte {b}"))),
                })
                .collect::<Result<_>>()?,
        )
    };
    Ok(NpyArray { shape, data })
}

pub fn read_array(path: impl AsRef<Path>) -> Result<NpyArray> {
    from_bytes(&fs::read(path)?)
}

pub fn write_array(path: impl AsRef<Path>, array: &NpyArray) -> Result<()> {
    fs::write(path, to_bytes(array)?)?;
    Ok(())
}
