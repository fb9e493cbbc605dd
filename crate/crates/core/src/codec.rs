//! Big-endian, length-prefixed binary encoding shared by the container
//! formats (ciphertexts, keys, shares, envelopes).

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported curve id {0}")]
    UnsupportedCurve(u8),
    #[error("unexpected container kind {0}")]
    WrongKind(u8),
    #[error("invalid group element encoding")]
    InvalidElement,
    #[error("invalid utf-8 string")]
    InvalidUtf8,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid field: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// `u32` length then the bytes.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(u32::try_from(bytes.len()).expect("section under 4 GiB"));
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    /// Writes a length-prefixed section produced by `f`.
    pub fn section(&mut self, f: impl FnOnce(&mut Writer)) -> &mut Self {
        let mut inner = Writer::new();
        f(&mut inner);
        self.bytes(&inner.buf)
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.raw(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.raw(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.raw(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.raw(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.raw(n)
    }

    pub fn str(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.bytes()?).map_err(|_| CodecError::InvalidUtf8)
    }

    /// Reads a length-prefixed section as its own reader.
    pub fn section(&mut self) -> Result<Reader<'a>, CodecError> {
        Ok(Reader::new(self.bytes()?))
    }

    /// Reads a `u32` element count, rejecting counts that could not fit in
    /// the remaining input at `min_size` bytes each.
    pub fn count(&mut self, min_size: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size.max(1)) > self.buf.len() {
            return Err(CodecError::Truncated);
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

/// Fixed container header: 8-byte magic, `u16` version, curve id, kind.
pub(crate) fn write_header(w: &mut Writer, magic: &[u8; 8], version: u16, curve: u8, kind: u8) {
    w.raw(magic).u16(version).u8(curve).u8(kind);
}

pub(crate) fn read_header(r: &mut Reader<'_>, magic: &[u8; 8], version: u16, curve: u8, kind: u8) -> Result<(), CodecError> {
    if r.raw(8)? != magic {
        return Err(CodecError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let v = r.u16()?;
    if v != version {
        return Err(CodecError::UnsupportedVersion(v));
    }
    let c = r.u8()?;
    if c != curve {
        return Err(CodecError::UnsupportedCurve(c));
    }
    let k = r.u8()?;
    if k != kind {
        return Err(CodecError::WrongKind(k));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_nest() {
        let mut w = Writer::new();
        w.u8(7).section(|s| {
            s.str("hello").u64(42);
        });
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.u8().unwrap(), 7);
        let mut s = r.section().unwrap();
        assert_eq!(s.str().unwrap(), "hello");
        assert_eq!(s.u64().unwrap(), 42);
        s.finish().unwrap();
        r.finish().unwrap();
    }

    #[test]
    fn truncation_detected() {
        let mut w = Writer::new();
        w.str("abcdef");
        let bytes = w.into_bytes();
        assert_eq!(Reader::new(&bytes[..5]).str(), Err(CodecError::Truncated));
        assert_eq!(Reader::new(&[0, 0, 0, 9]).count(1), Err(CodecError::Truncated));
    }

    #[test]
    fn header_checks() {
        let mut w = Writer::new();
        write_header(&mut w, b"TESTMAG1", 1, 1, 3);
        let bytes = w.into_bytes();
        assert!(read_header(&mut Reader::new(&bytes), b"TESTMAG1", 1, 1, 3).is_ok());
        assert!(matches!(read_header(&mut Reader::new(&bytes), b"OTHERMAG", 1, 1, 3), Err(CodecError::BadMagic { .. })));
        assert_eq!(read_header(&mut Reader::new(&bytes), b"TESTMAG1", 2, 1, 3), Err(CodecError::UnsupportedVersion(1)));
        assert_eq!(read_header(&mut Reader::new(&bytes), b"TESTMAG1", 1, 1, 4), Err(CodecError::WrongKind(3)));
    }
}
