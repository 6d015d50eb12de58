//! Reading and writing the numpy `.npy` container.
//!
//! Versions 1.0 and 2.0 are read; 1.0 is always written. Only little-endian
//! `f4`/`f8` floats, `u1` bytes and `b1` booleans in C order are supported.
//! See <https://numpy.org/doc/stable/reference/generated/numpy.lib.format.html>.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, FeatureGrid};

/// The npy magic string.
pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

const ALIGNMENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    U1,
    B1,
}

impl Dtype {
    fn from_descr(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F4),
            "<f8" => Ok(Dtype::F8),
            "|u1" | "<u1" | ">u1" | "=u1" => Ok(Dtype::U1),
            "|b1" => Ok(Dtype::B1),
            other => Err(Error::UnsupportedFormat(format!("dtype '{other}'"))),
        }
    }

    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::U1 => "|u1",
            Dtype::B1 => "|b1",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
            Dtype::U1 | Dtype::B1 => 1,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Dtype::F4 | Dtype::F8)
    }
}

/// Decoded header plus raw payload.
#[derive(Debug, Clone)]
pub struct NpyArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl NpyArray {
    /// Widens a float payload to `f64`.
    fn to_f64(&self) -> Result<Vec<f64>> {
        match self.dtype {
            Dtype::F4 => Ok(self
                .data
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()),
            Dtype::F8 => Ok(self
                .data
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect()),
            other => Err(Error::UnsupportedFormat(format!(
                "expected a float array, found dtype '{}'",
                other.descr()
            ))),
        }
    }
}

/// Anything `read_tensor` can return.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Grid(FeatureGrid),
    Mask(BinaryMask),
}

/// Parses an npy container from bytes.
pub fn parse(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let (header_len, offset) = match (bytes[6], bytes[7]) {
        (1, 0) => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated v2 header length".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        (major, minor) => {
            return Err(Error::Format(format!(
                "unsupported npy version {major}.{minor}"
            )))
        }
    };
    let end = offset + header_len;
    if bytes.len() < end {
        return Err(Error::Format("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[offset..end])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;
    if dict.fortran_order {
        return Err(Error::UnsupportedFormat("fortran_order arrays".into()));
    }
    let dtype = Dtype::from_descr(&dict.descr)?;
    let count = dict
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let payload = &bytes[end..];
    if payload.len() != count * dtype.size() {
        return Err(Error::Format(format!(
            "payload is {} bytes, shape {:?} of {} needs {}",
            payload.len(),
            dict.shape,
            dtype.descr(),
            count * dtype.size()
        )));
    }
    Ok(NpyArray {
        dtype,
        shape: dict.shape,
        data: payload.to_vec(),
    })
}

/// Serializes an array as an npy v1.0 container.
pub fn encode(dtype: Dtype, shape: &[usize], data: &[u8]) -> Vec<u8> {
    let shape_str = match shape {
        [single] => format!("({single},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // magic(6) + version(2) + length(2) + header + '\n' is a multiple of ALIGNMENT
    let unpadded = 10 + header.len() + 1;
    let pad = (ALIGNMENT - unpadded % ALIGNMENT) % ALIGNMENT;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}

/// Decodes a feature grid `(H, W, C)` or a mask `(H, W)` from npy bytes.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let array = parse(bytes)?;
    match (array.shape.len(), array.dtype) {
        (3, dtype) if dtype.is_float() => {
            let values = array.to_f64()?;
            let [h, w, c] = [array.shape[0], array.shape[1], array.shape[2]];
            Ok(Tensor::Grid(FeatureGrid::new(h, w, c, values)?))
        }
        (2, Dtype::U1 | Dtype::B1) => {
            let bits = array
                .data
                .iter()
                .enumerate()
                .map(|(i, &b)| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Validation(format!(
                        "mask value {other} at flat index {i}, expected 0 or 1"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Tensor::Mask(BinaryMask::new(
                array.shape[0],
                array.shape[1],
                bits,
            )?))
        }
        (rank, dtype) => Err(Error::UnsupportedFormat(format!(
            "rank-{rank} array of dtype '{}' is neither an (H,W,C) float grid nor an (H,W) mask",
            dtype.descr()
        ))),
    }
}

pub fn encode_grid(grid: &FeatureGrid) -> Vec<u8> {
    let data: Vec<u8> = grid.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(
        Dtype::F8,
        &[grid.height(), grid.width(), grid.channels()],
        &data,
    )
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    encode(Dtype::U1, &[mask.height(), mask.width()], &data)
}

/// Encodes an `(H, W)` float map as `<f8`.
pub fn encode_map(height: usize, width: usize, scores: &[f64]) -> Vec<u8> {
    let data: Vec<u8> = scores.iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(Dtype::F8, &[height, width], &data)
}

/// Decodes an `(H, W)` float map. Returns `(height, width, values)`.
pub fn decode_map(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let array = parse(bytes)?;
    if array.shape.len() != 2 || !array.dtype.is_float() {
        return Err(Error::UnsupportedFormat(format!(
            "expected an (H,W) float map, found shape {:?} of '{}'",
            array.shape,
            array.dtype.descr()
        )));
    }
    let values = array.to_f64()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite value at flat index {i}"
        )));
    }
    Ok((array.shape[0], array.shape[1], values))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a grid or mask. Float32 payloads are widened; the grid's normalized
/// flag is false and its source id is the file path.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    match decode_tensor(&read_bytes(path)?)? {
        Tensor::Grid(g) => Ok(Tensor::Grid(g.with_source_id(path.display().to_string()))),
        mask => Ok(mask),
    }
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    match read_tensor(path.as_ref())? {
        Tensor::Grid(g) => Ok(g),
        Tensor::Mask(_) => Err(Error::UnsupportedFormat(format!(
            "{} holds a mask, expected an (H,W,C) feature grid",
            path.as_ref().display()
        ))),
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    match read_tensor(path.as_ref())? {
        Tensor::Mask(m) => Ok(m),
        Tensor::Grid(_) => Err(Error::UnsupportedFormat(format!(
            "{} holds a feature grid, expected an (H,W) mask",
            path.as_ref().display()
        ))),
    }
}

pub fn read_map(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    decode_map(&read_bytes(path.as_ref())?)
}

/// Writes a grid as `<f8` or a mask as `|u1`, npy v1.0, C order.
pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = match tensor {
        Tensor::Grid(g) => encode_grid(g),
        Tensor::Mask(m) => encode_mask(m),
    };
    write_bytes(path.as_ref(), &bytes)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// The three keys numpy writes into the header dict.
#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    fn parse(header: &str) -> Result<Self> {
        let body = header.trim_end_matches(['\n', ' ', '\0']).trim();
        let body = body
            .strip_prefix('{')
            .and_then(|b| b.strip_suffix('}'))
            .ok_or_else(|| Error::Format(format!("header is not a dict: {body:?}")))?;

        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        let mut rest = body.trim();
        while !rest.is_empty() {
            let (key, after) = take_quoted(rest)?;
            let after = after
                .trim_start()
                .strip_prefix(':')
                .ok_or_else(|| Error::Format(format!("expected ':' after key '{key}'")))?
                .trim_start();
            let after = match key {
                "descr" => {
                    let (value, after) = take_quoted(after)?;
                    descr = Some(value.to_string());
                    after
                }
                "fortran_order" => {
                    if let Some(a) = after.strip_prefix("True") {
                        fortran_order = Some(true);
                        a
                    } else if let Some(a) = after.strip_prefix("False") {
                        fortran_order = Some(false);
                        a
                    } else {
                        return Err(Error::Format("fortran_order is not a bool".into()));
                    }
                }
                "shape" => {
                    let close = after
                        .find(')')
                        .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
                    let inner = after
                        .strip_prefix('(')
                        .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
                    shape = Some(parse_shape(&inner[..close - 1])?);
                    &after[close + 1..]
                }
                other => return Err(Error::Format(format!("unexpected header key '{other}'"))),
            };
            let after = after.trim_start();
            rest = after.strip_prefix(',').unwrap_or(after).trim_start();
        }
        match (descr, fortran_order, shape) {
            (Some(descr), Some(fortran_order), Some(shape)) => Ok(HeaderDict {
                descr,
                fortran_order,
                shape,
            }),
            _ => Err(Error::Format(
                "header must define descr, fortran_order and shape".into(),
            )),
        }
    }
}

fn take_quoted(s: &str) -> Result<(&str, &str)> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format(format!("expected a quoted string at {s:?}")))?;
    let body = &s[1..];
    let end = body
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated string in header".into()))?;
    Ok((&body[..end], &body[end + 1..]))
}

fn parse_shape(inner: &str) -> Result<Vec<usize>> {
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
        })
        .collect()
}
