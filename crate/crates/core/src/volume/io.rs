//! VVF/1 volume files: a `key = value` text header closed by `END\n`,
//! followed by little-endian f32 voxels (x fastest) and, when declared,
//! one 0/1 mask byte per voxel.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Geometry, Volume};
use crate::error::{Error, Result};
use crate::serde_util::{matrix_from_row_major, matrix_to_row_major};

const KEYS: [&str; 7] = [
    "vvf_version",
    "dims",
    "spacing_mm",
    "origin_mm",
    "axes",
    "dtype",
    "mask",
];

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(volume.data().len() * 5 + 256);
    write_volume_to(volume, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_volume_to<W: Write>(volume: &Volume, mut w: W) -> std::io::Result<()> {
    let g = volume.geometry();
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    writeln!(w, "vvf_version = 1")?;
    writeln!(w, "dims = {} {} {}", g.dims[0], g.dims[1], g.dims[2])?;
    writeln!(w, "spacing_mm = {}", join(&g.spacing))?;
    writeln!(w, "origin_mm = {}", join(&g.origin))?;
    writeln!(w, "axes = {}", join(&matrix_to_row_major(&g.axes)))?;
    writeln!(w, "dtype = f32le")?;
    writeln!(
        w,
        "mask = {}",
        if volume.mask().is_some() {
            "present"
        } else {
            "absent"
        }
    )?;
    writeln!(w, "END")?;
    let mut payload = Vec::with_capacity(volume.data().len() * 4);
    for v in volume.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    if let Some(mask) = volume.mask() {
        let bytes: Vec<u8> = mask.iter().map(|&m| m as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

pub fn read_volume_from<R: Read>(mut r: R) -> Result<Volume> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format(0, format!("read failed: {e}")))?;
    parse(&bytes)
}

#[derive(Default)]
struct Header {
    dims: Option<[usize; 3]>,
    spacing: Option<[f64; 3]>,
    origin: Option<[f64; 3]>,
    axes: Option<[f64; 9]>,
    mask: Option<bool>,
    version: bool,
    dtype: bool,
}

fn numbers<T: std::str::FromStr, const N: usize>(value: &str, offset: u64, key: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::format(
            offset,
            format!("'{key}' expects {N} values, got {}", parts.len()),
        ));
    }
    let parsed: Vec<T> = parts
        .iter()
        .map(|p| p.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(offset, format!("'{key}' has a malformed number")))?;
    parsed
        .try_into()
        .map_err(|_| Error::format(offset, "internal length mismatch"))
}

fn parse(bytes: &[u8]) -> Result<Volume> {
    let mut header = Header::default();
    let mut pos = 0usize;
    let payload_start = loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::format(pos as u64, "header is not terminated by END"));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| Error::format(pos as u64, "header line is not UTF-8"))?;
        let offset = pos as u64;
        pos += nl + 1;
        if line == "END" {
            break pos;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(offset, format!("expected 'key = value', got '{line}'")));
        };
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(Error::format(offset, format!("unknown header key '{key}'")));
        }
        let dup = || Error::format(offset, format!("duplicate header key '{key}'"));
        match key {
            "vvf_version" => {
                if header.version {
                    return Err(dup());
                }
                if value != "1" {
                    return Err(Error::format(offset, format!("unsupported version '{value}'")));
                }
                header.version = true;
            }
            "dims" => {
                if header.dims.is_some() {
                    return Err(dup());
                }
                header.dims = Some(numbers(value, offset, key)?);
            }
            "spacing_mm" => {
                if header.spacing.is_some() {
                    return Err(dup());
                }
                header.spacing = Some(numbers(value, offset, key)?);
            }
            "origin_mm" => {
                if header.origin.is_some() {
                    return Err(dup());
                }
                header.origin = Some(numbers(value, offset, key)?);
            }
            "axes" => {
                if header.axes.is_some() {
                    return Err(dup());
                }
                header.axes = Some(numbers(value, offset, key)?);
            }
            "dtype" => {
                if header.dtype {
                    return Err(dup());
                }
                if value != "f32le" {
                    return Err(Error::format(offset, format!("unsupported dtype '{value}'")));
                }
                header.dtype = true;
            }
            "mask" => {
                if header.mask.is_some() {
                    return Err(dup());
                }
                header.mask = Some(match value {
                    "present" => true,
                    "absent" => false,
                    other => {
                        return Err(Error::format(offset, format!("bad mask value '{other}'")))
                    }
                });
            }
            _ => unreachable!(),
        }
    };

    let end = payload_start as u64;
    let missing = |k: &str| Error::format(end, format!("missing header key '{k}'"));
    if !header.version {
        return Err(missing("vvf_version"));
    }
    if !header.dtype {
        return Err(missing("dtype"));
    }
    let dims = header.dims.ok_or_else(|| missing("dims"))?;
    let spacing = header.spacing.ok_or_else(|| missing("spacing_mm"))?;
    let origin = header.origin.ok_or_else(|| missing("origin_mm"))?;
    let axes = header.axes.ok_or_else(|| missing("axes"))?;
    let has_mask = header.mask.ok_or_else(|| missing("mask"))?;

    let geometry = Geometry::new(dims, spacing, origin, matrix_from_row_major(&axes))
        .map_err(|e| Error::format(end, e.to_string()))?;
    let n = geometry.len();
    let data_bytes = n * 4;
    let expected = data_bytes + if has_mask { n } else { 0 };
    let available = bytes.len() - payload_start;
    if available < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {available}"),
        ));
    }
    if available > expected {
        return Err(Error::format(
            (payload_start + expected) as u64,
            format!("{} trailing bytes after payload", available - expected),
        ));
    }
    let data: Vec<f32> = bytes[payload_start..payload_start + data_bytes]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mask = if has_mask {
        let start = payload_start + data_bytes;
        let mut m = Vec::with_capacity(n);
        for (i, &b) in bytes[start..start + n].iter().enumerate() {
            match b {
                0 => m.push(false),
                1 => m.push(true),
                other => {
                    return Err(Error::format(
                        (start + i) as u64,
                        format!("mask byte must be 0 or 1, got {other}"),
                    ))
                }
            }
        }
        Some(m)
    } else {
        None
    };
    Volume::new(geometry, data, mask).map_err(|e| Error::format(end, e.to_string()))
}
