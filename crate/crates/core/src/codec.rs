//! Fixed-layout big-endian byte encoding used by wire payloads, threshold
//! transcripts and transaction serialization.

use num_bigint::BigUint;
use thiserror::Error;

use crate::group::{scalar_from_bytes, scalar_to_bytes, Point, Scalar, POINT_LEN, SCALAR_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid point encoding")]
    BadPoint,
    #[error("scalar out of range")]
    BadScalar,
    #[error("invalid {0} tag {1}")]
    BadTag(&'static str, u8),
    #[error("invalid utf-8 string")]
    BadString,
    #[error("length {0} exceeds limit")]
    TooLong(usize),
}

/// Upper bound on any length-prefixed field.
pub const MAX_VAR_LEN: usize = 1 << 20;

#[derive(Default, Debug, Clone)]
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

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    /// u32 length prefix followed by the bytes.
    pub fn var(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.bytes(v)
    }

    pub fn point(&mut self, p: &Point) -> &mut Self {
        self.bytes(&p.to_bytes())
    }

    pub fn scalar(&mut self, s: &Scalar) -> &mut Self {
        self.bytes(&scalar_to_bytes(s))
    }

    pub fn biguint(&mut self, n: &BigUint) -> &mut Self {
        self.var(&n.to_bytes_be())
    }

    pub fn string(&mut self, s: &str) -> &mut Self {
        self.var(s.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        if end > self.data.len() {
            return Err(DecodeError::Truncated);
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("N bytes"))
    }

    pub fn var(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        if len > MAX_VAR_LEN {
            return Err(DecodeError::TooLong(len));
        }
        self.take(len)
    }

    pub fn point(&mut self) -> Result<Point, DecodeError> {
        Point::from_bytes(self.take(POINT_LEN)?).ok_or(DecodeError::BadPoint)
    }

    pub fn scalar(&mut self) -> Result<Scalar, DecodeError> {
        scalar_from_bytes(self.take(SCALAR_LEN)?).ok_or(DecodeError::BadScalar)
    }

    pub fn biguint(&mut self) -> Result<BigUint, DecodeError> {
        Ok(BigUint::from_bytes_be(self.var()?))
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.var()?.to_vec()).map_err(|_| DecodeError::BadString)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_rejects_truncation_and_trailing() {
        let mut w = Writer::new();
        w.u32(7).var(b"abc").u64(9);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.var().unwrap(), b"abc");
        assert_eq!(r.u64().unwrap(), 9);
        r.finish().unwrap();

        let mut r = Reader::new(&bytes[..bytes.len() - 1]);
        r.u32().unwrap();
        r.var().unwrap();
        assert_eq!(r.u64(), Err(DecodeError::Truncated));

        let mut r = Reader::new(&bytes);
        r.u32().unwrap();
        assert_eq!(r.finish(), Err(DecodeError::Trailing(bytes.len() - 4)));
    }
}
