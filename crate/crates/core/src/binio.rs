//! Little-endian framing shared by the binary artifact formats.

use crate::text::fnv1a64;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn with_header(magic: &[u8; 4], version: u32) -> Self {
        let mut w = ByteWriter::default();
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Appends the FNV-1a checksum of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let sum = fnv1a64(&self.buf);
        self.u64(sum);
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Verifies magic, version and trailing checksum.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, FormatError> {
        if bytes.len() < 16 {
            return Err(FormatError::Truncated(bytes.len()));
        }
        let found: [u8; 4] = bytes[..4].try_into().unwrap();
        if &found != magic {
            return Err(FormatError::BadMagic { expected: *magic, found });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let mut r = ByteReader { buf: body, pos: 4 };
        let v = r.u32()?;
        if v != version {
            return Err(FormatError::UnsupportedVersion {
                found: v,
                supported: version,
            });
        }
        if fnv1a64(body).to_le_bytes() != trailer {
            return Err(FormatError::ChecksumMismatch);
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    /// Length prefix that must fit in the remaining bytes at `min_item` bytes each.
    pub fn count(&mut self, min_item: usize) -> Result<usize, FormatError> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_item as u64) > remaining {
            return Err(FormatError::Truncated(self.pos));
        }
        Ok(n as usize)
    }

    pub fn expect_end(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Invalid(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}
