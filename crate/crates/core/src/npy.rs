//! Reading and writing NPY v1.0 array files.
//!
//! Only the subset the stores need is supported: little-endian `f4` and `i8`
//! payloads in C order behind a version 1.0 header. Version 2.0/3.0 headers,
//! Fortran order, and every other dtype are rejected.
//!
//! Layout of a file:
//!
//! ```text
//! \x93NUMPY 0x01 0x00 <u16 LE header_len> <ASCII dict, space padded, '\n'> <payload>
//! ```
//!
//! The writer pads the dictionary so that `10 + header_len` is a multiple of 64.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
/// Magic, version, and header length field.
pub const PREAMBLE_LEN: usize = 10;
const ALIGNMENT: usize = 64;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported npy version {0}.{1} (only 1.0 is accepted)")]
    UnsupportedVersion(u8, u8),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {found:?}, expected {expected:?}")]
    UnsupportedDtype {
        found: String,
        expected: &'static str,
    },
    #[error("fortran-order arrays are not supported")]
    FortranOrder,
    #[error("expected a rank-{expected} array, found shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} unexpected bytes after the payload")]
    TrailingData(u64),
    #[error("shape {shape:?} does not match {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
}

/// Element types the stores use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    I64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::I64 => "<i8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::I64 => 8,
        }
    }

    fn from_descr(descr: &str) -> Option<Self> {
        match descr {
            "<f4" => Some(Dtype::F32),
            "<i8" => Some(Dtype::I64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

impl Header {
    pub fn element_count(&self) -> Option<usize> {
        self.shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn payload_len(&self) -> Option<u64> {
        self.element_count()
            .and_then(|n| n.checked_mul(self.dtype.size()))
            .map(|n| n as u64)
    }

    /// Canonical encoding: preamble plus space-padded dictionary.
    pub fn encode(&self) -> Vec<u8> {
        let shape = match self.shape.as_slice() {
            [single] => format!("({single},)"),
            dims => {
                let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
                format!("({})", parts.join(", "))
            }
        };
        let mut dict = format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
            self.dtype.descr(),
            shape
        );
        let unpadded = PREAMBLE_LEN + dict.len() + 1;
        let total = unpadded.div_ceil(ALIGNMENT) * ALIGNMENT;
        dict.extend(std::iter::repeat_n(' ', total - unpadded));
        dict.push('\n');

        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out
    }
}

/// Reads and validates the preamble and header dictionary from `reader`,
/// leaving it positioned at the first payload byte. Returns the header and
/// the total header length in bytes.
pub fn read_header<R: Read>(reader: &mut R) -> Result<(Header, usize), NpyError> {
    let mut preamble = [0u8; PREAMBLE_LEN];
    read_exact_or(reader, &mut preamble, || {
        NpyError::MalformedHeader("file shorter than the npy preamble".into())
    })?;
    if preamble[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if preamble[6..8] != [1, 0] {
        return Err(NpyError::UnsupportedVersion(preamble[6], preamble[7]));
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut dict = vec![0u8; header_len];
    read_exact_or(reader, &mut dict, || {
        NpyError::MalformedHeader(format!(
            "header declares {header_len} bytes but file ends early"
        ))
    })?;
    let header = parse_dict(&dict)?;
    Ok((header, PREAMBLE_LEN + header_len))
}

/// Parses a complete header from the start of `bytes`.
pub fn parse_header(bytes: &[u8]) -> Result<(Header, usize), NpyError> {
    let mut cursor = bytes;
    read_header(&mut cursor)
}

fn read_exact_or<R: Read>(
    reader: &mut R,
    buf: &mut [u8],
    on_eof: impl FnOnce() -> NpyError,
) -> Result<(), NpyError> {
    match reader.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(on_eof()),
        Err(e) => Err(e.into()),
    }
}

fn parse_dict(raw: &[u8]) -> Result<Header, NpyError> {
    let text = std::str::from_utf8(raw)
        .ok()
        .filter(|t| t.is_ascii())
        .ok_or_else(|| NpyError::MalformedHeader("header is not ASCII".into()))?;
    let mut parser = DictParser {
        src: text.as_bytes(),
        pos: 0,
    };
    let entries = parser.parse()?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (key, value) in entries {
        let slot_taken = match (key.as_str(), value) {
            ("descr", Value::Str(s)) => descr.replace(s).is_some(),
            ("fortran_order", Value::Bool(b)) => fortran.replace(b).is_some(),
            ("shape", Value::Tuple(t)) => shape.replace(t).is_some(),
            (k @ ("descr" | "fortran_order" | "shape"), _) => {
                return Err(NpyError::MalformedHeader(format!(
                    "wrong value type for '{k}'"
                )))
            }
            (k, _) => return Err(NpyError::MalformedHeader(format!("unexpected key '{k}'"))),
        };
        if slot_taken {
            return Err(NpyError::MalformedHeader(format!("duplicate key '{key}'")));
        }
    }
    let descr = descr.ok_or_else(|| NpyError::MalformedHeader("missing 'descr'".into()))?;
    let fortran =
        fortran.ok_or_else(|| NpyError::MalformedHeader("missing 'fortran_order'".into()))?;
    let shape = shape.ok_or_else(|| NpyError::MalformedHeader("missing 'shape'".into()))?;

    let dtype = Dtype::from_descr(&descr).ok_or(NpyError::UnsupportedDtype {
        found: descr,
        expected: "<f4 or <i8",
    })?;
    if fortran {
        return Err(NpyError::FortranOrder);
    }
    Ok(Header { dtype, shape })
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parser for the Python dict literal numpy writes.
struct DictParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl DictParser<'_> {
    fn err(&self, what: &str) -> NpyError {
        NpyError::MalformedHeader(format!("{what} at offset {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn parse(&mut self) -> Result<Vec<(String, Value)>, NpyError> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            entries.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        if self.peek().is_some() {
            return Err(self.err("trailing characters after dictionary"));
        }
        Ok(entries)
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while let Some(&c) = self.src.get(self.pos) {
            if c == quote {
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                return Ok(s);
            }
            if c == b'\\' || c == b'\n' {
                return Err(self.err("unsupported character in string"));
            }
            self.pos += 1;
        }
        Err(self.err("unterminated string"))
    }

    fn value(&mut self) -> Result<Value, NpyError> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => self.tuple().map(Value::Tuple),
            Some(b'T') => self.keyword("True").map(|_| Value::Bool(true)),
            Some(b'F') => self.keyword("False").map(|_| Value::Bool(false)),
            _ => Err(self.err("expected a value")),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), NpyError> {
        if self.src[self.pos..].starts_with(word.as_bytes()) {
            self.pos += word.len();
            Ok(())
        } else {
            Err(self.err("unknown identifier"))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, NpyError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(c) if c.is_ascii_digit() => {
                    dims.push(self.integer()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')' in shape")),
                    }
                }
                _ => return Err(self.err("expected a dimension")),
            }
        }
        Ok(dims)
    }

    fn integer(&mut self) -> Result<usize, NpyError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        digits
            .parse::<usize>()
            .map_err(|_| self.err("dimension out of range"))
    }
}

/// Anything that can sit in an npy payload.
trait Element: bytemuck::Pod {
    const DTYPE: Dtype;
    fn swap_from_le(self) -> Self;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn swap_from_le(self) -> Self {
        f32::from_bits(u32::from_le(self.to_bits()))
    }
}

impl Element for i64 {
    const DTYPE: Dtype = Dtype::I64;
    fn swap_from_le(self) -> Self {
        i64::from_le(self)
    }
}

fn read_payload<T: Element, R: Read>(reader: &mut R, header: &Header) -> Result<Vec<T>, NpyError> {
    if header.dtype != T::DTYPE {
        return Err(NpyError::UnsupportedDtype {
            found: header.dtype.descr().to_string(),
            expected: T::DTYPE.descr(),
        });
    }
    let count = header
        .element_count()
        .ok_or_else(|| NpyError::MalformedHeader("shape overflows".into()))?;
    let expected = header
        .payload_len()
        .ok_or_else(|| NpyError::MalformedHeader("shape overflows".into()))?;

    // Grow the buffer as bytes arrive so a lying header cannot force a huge
    // allocation before truncation is detected.
    let mut values: Vec<T> = Vec::new();
    let mut filled = 0usize;
    const CHUNK: usize = 1 << 20;
    while filled < count {
        let next = (filled + CHUNK / std::mem::size_of::<T>()).min(count);
        values.resize(next, T::zeroed());
        let bytes: &mut [u8] = bytemuck::cast_slice_mut(&mut values[filled..next]);
        let mut got = 0;
        while got < bytes.len() {
            match reader.read(&mut bytes[got..]) {
                Ok(0) => {
                    let found = (filled * T::DTYPE.size() + got) as u64;
                    return Err(NpyError::Truncated { expected, found });
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        filled = next;
    }
    let trailing = io::copy(reader, &mut io::sink())?;
    if trailing > 0 {
        return Err(NpyError::TrailingData(trailing));
    }
    if cfg!(target_endian = "big") {
        for v in &mut values {
            *v = v.swap_from_le();
        }
    }
    Ok(values)
}

/// Reads a whole float32 array from `reader`.
pub fn read_f32<R: Read>(reader: &mut R) -> Result<(Vec<usize>, Vec<f32>), NpyError> {
    let (header, _) = read_header(reader)?;
    let values = read_payload::<f32, _>(reader, &header)?;
    Ok((header.shape, values))
}

/// Reads a whole int64 array from `reader`.
pub fn read_i64<R: Read>(reader: &mut R) -> Result<(Vec<usize>, Vec<i64>), NpyError> {
    let (header, _) = read_header(reader)?;
    let values = read_payload::<i64, _>(reader, &header)?;
    Ok((header.shape, values))
}

pub fn read_f32_file(path: &Path) -> Result<(Vec<usize>, Vec<f32>), NpyError> {
    let mut file = io::BufReader::new(File::open(path)?);
    read_f32(&mut file)
}

pub fn read_i64_file(path: &Path) -> Result<(Vec<usize>, Vec<i64>), NpyError> {
    let mut file = io::BufReader::new(File::open(path)?);
    read_i64(&mut file)
}

/// Reads only the header of a file on disk.
pub fn read_header_file(path: &Path) -> Result<Header, NpyError> {
    let mut file = io::BufReader::new(File::open(path)?);
    read_header(&mut file).map(|(h, _)| h)
}

fn check_len(shape: &[usize], len: usize) -> Result<(), NpyError> {
    let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if expected != Some(len) {
        return Err(NpyError::ShapeMismatch {
            shape: shape.to_vec(),
            len,
        });
    }
    Ok(())
}

fn write_elements<T: Element, W: Write>(
    writer: &mut W,
    shape: &[usize],
    values: &[T],
) -> Result<(), NpyError> {
    check_len(shape, values.len())?;
    let header = Header {
        dtype: T::DTYPE,
        shape: shape.to_vec(),
    };
    writer.write_all(&header.encode())?;
    if cfg!(target_endian = "little") {
        writer.write_all(bytemuck::cast_slice(values))?;
    } else {
        for v in values {
            writer.write_all(bytemuck::bytes_of(&v.swap_from_le()))?;
        }
    }
    Ok(())
}

pub fn write_f32<W: Write>(
    writer: &mut W,
    shape: &[usize],
    values: &[f32],
) -> Result<(), NpyError> {
    write_elements(writer, shape, values)
}

pub fn write_i64<W: Write>(
    writer: &mut W,
    shape: &[usize],
    values: &[i64],
) -> Result<(), NpyError> {
    write_elements(writer, shape, values)
}

/// Writes a float32 array file with a canonical v1.0 header.
pub fn write_array_file(path: &Path, shape: &[usize], values: &[f32]) -> Result<(), NpyError> {
    check_len(shape, values.len())?;
    let mut out = BufWriter::new(File::create(path)?);
    write_f32(&mut out, shape, values)?;
    out.flush()?;
    Ok(())
}

pub fn write_i64_file(path: &Path, shape: &[usize], values: &[i64]) -> Result<(), NpyError> {
    check_len(shape, values.len())?;
    let mut out = BufWriter::new(File::create(path)?);
    write_i64(&mut out, shape, values)?;
    out.flush()?;
    Ok(())
}
