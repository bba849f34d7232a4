//! Per-pair expansion bitmap and its lossless serialized form.
//!
//! Wire layout: `mode (1 byte: 0 = Raw, 1 = RunLength) | bit_count (u32 BE) | body`.
//!
//! * Raw: `ceil(bit_count / 8)` bytes, MSB-first, final byte zero-padded.
//! * RunLength: unsigned LEB128 run lengths alternating 0-runs and 1-runs,
//!   starting with a (possibly empty) 0-run. Only the first run may be empty.
//!
//! The encoder picks RunLength only when its body is strictly smaller.

use thiserror::Error;

use crate::pixel_codec::PairClass;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("pair {index} selected for expansion but classified {class:?}")]
    SelectionMismatch { index: usize, class: PairClass },
    #[error("class and selection sequences differ in length ({classes} vs {selected})")]
    LengthMismatch { classes: usize, selected: usize },
    #[error("corrupt location map: {0}")]
    CorruptMap(&'static str),
}

const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MapMode {
    Raw = 0,
    RunLength = 1,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationMap {
    bits: Vec<bool>,
}

impl LocationMap {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedMap {
    pub mode: MapMode,
    pub bit_count: u32,
    pub body: Vec<u8>,
}

pub fn build_map(classes: &[PairClass], selected: &[bool]) -> Result<LocationMap, MapError> {
    if classes.len() != selected.len() {
        return Err(MapError::LengthMismatch {
            classes: classes.len(),
            selected: selected.len(),
        });
    }
    for (index, (&class, &sel)) in classes.iter().zip(selected).enumerate() {
        if sel && class != PairClass::Expandable {
            return Err(MapError::SelectionMismatch { index, class });
        }
    }
    Ok(LocationMap::from_bits(selected.to_vec()))
}

fn pack_raw(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

fn push_varint(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn encode_runs(bits: &[bool]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &b in bits {
        if b == current {
            run += 1;
        } else {
            push_varint(&mut out, run);
            current = b;
            run = 1;
        }
    }
    if run > 0 {
        push_varint(&mut out, run);
    }
    out
}

pub fn compress(m: &LocationMap) -> CompressedMap {
    let bit_count = u32::try_from(m.len()).expect("location map longer than u32::MAX bits");
    let raw = pack_raw(&m.bits);
    let rle = encode_runs(&m.bits);
    if rle.len() < raw.len() {
        CompressedMap {
            mode: MapMode::RunLength,
            bit_count,
            body: rle,
        }
    } else {
        CompressedMap {
            mode: MapMode::Raw,
            bit_count,
            body: raw,
        }
    }
}

/// Reads one LEB128 value, returning it and the number of bytes consumed.
fn read_varint(bytes: &[u8]) -> Result<(u32, usize), MapError> {
    let mut value = 0u64;
    for (i, &byte) in bytes.iter().enumerate().take(5) {
        value |= u64::from(byte & 0x7f) << (7 * i);
        if byte & 0x80 == 0 {
            let v =
                u32::try_from(value).map_err(|_| MapError::CorruptMap("run length overflow"))?;
            return Ok((v, i + 1));
        }
    }
    if bytes.len() < 5 {
        Err(MapError::CorruptMap("truncated run length"))
    } else {
        Err(MapError::CorruptMap("run length overflow"))
    }
}

/// Decodes a body from the front of `body`, returning the bits and the
/// number of body bytes consumed.
fn decode_body(mode: MapMode, bit_count: u32, body: &[u8]) -> Result<(Vec<bool>, usize), MapError> {
    let n = bit_count as usize;
    match mode {
        MapMode::Raw => {
            let need = n.div_ceil(8);
            if body.len() < need {
                return Err(MapError::CorruptMap("raw body shorter than bit count"));
            }
            let bits: Vec<bool> = (0..n)
                .map(|i| body[i / 8] >> (7 - i % 8) & 1 == 1)
                .collect();
            if !n.is_multiple_of(8) && body[need - 1] & (0xffu8 >> (n % 8)) != 0 {
                return Err(MapError::CorruptMap("nonzero padding bits"));
            }
            Ok((bits, need))
        }
        MapMode::RunLength => {
            let mut bits = Vec::with_capacity(n);
            let mut pos = 0;
            let mut current = false;
            let mut first = true;
            while bits.len() < n {
                let (run, used) = read_varint(&body[pos..])?;
                pos += used;
                if run == 0 && !first {
                    return Err(MapError::CorruptMap("empty run"));
                }
                if bits.len() + run as usize > n {
                    return Err(MapError::CorruptMap("runs exceed bit count"));
                }
                bits.resize(bits.len() + run as usize, current);
                current = !current;
                first = false;
            }
            Ok((bits, pos))
        }
    }
}

pub fn decompress(c: &CompressedMap) -> Result<LocationMap, MapError> {
    let (bits, used) = decode_body(c.mode, c.bit_count, &c.body)?;
    if used != c.body.len() {
        return Err(MapError::CorruptMap("trailing bytes after map body"));
    }
    Ok(LocationMap::from_bits(bits))
}

impl CompressedMap {
    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.push(self.mode as u8);
        out.extend_from_slice(&self.bit_count.to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses a serialized map from the front of `bytes`, which may carry
    /// further data. Returns the map and the number of bytes it occupied.
    pub fn read_prefix(bytes: &[u8]) -> Result<(Self, usize), MapError> {
        if bytes.len() < HEADER_LEN {
            return Err(MapError::CorruptMap("truncated header"));
        }
        let mode = match bytes[0] {
            0 => MapMode::Raw,
            1 => MapMode::RunLength,
            _ => return Err(MapError::CorruptMap("unknown mode")),
        };
        let bit_count = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let (_, used) = decode_body(mode, bit_count, &bytes[HEADER_LEN..])?;
        let map = CompressedMap {
            mode,
            bit_count,
            body: bytes[HEADER_LEN..HEADER_LEN + used].to_vec(),
        };
        Ok((map, HEADER_LEN + used))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MapError> {
        let (map, used) = Self::read_prefix(bytes)?;
        if used != bytes.len() {
            return Err(MapError::CorruptMap("trailing bytes after map"));
        }
        Ok(map)
    }
}
