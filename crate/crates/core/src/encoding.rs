//! Length-prefixed field encoding used for every content hash.
//!
//! Each field is a 4-byte big-endian length followed by the field bytes.
//! Integers are 8-byte big-endian. A coffer field is the concatenation of
//! its member ids in ascending order.

use crate::types::Hash32;

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(mut self, tag: u8) -> Self {
        self.buf.push(tag);
        self
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        let len = u32::try_from(b.len()).expect("field longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn ids<'a>(self, ids: impl IntoIterator<Item = &'a Hash32>) -> Self {
        let mut flat = Vec::new();
        for id in ids {
            flat.extend_from_slice(&id.0);
        }
        self.bytes(&flat)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError(pub String);

impl std::fmt::Display for DecodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "decode error: {}", self.0)
    }
}

impl std::error::Error for DecodeError {}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn tag(&mut self) -> Result<u8, DecodeError> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| DecodeError("missing tag".into()))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(4).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| DecodeError(format!("truncated length at byte {}", self.pos)))?;
        let len = u32::from_be_bytes(self.buf[self.pos..end].try_into().unwrap()) as usize;
        let stop = end
            .checked_add(len)
            .filter(|&s| s <= self.buf.len())
            .ok_or_else(|| DecodeError(format!("field of length {len} overruns input")))?;
        self.pos = stop;
        Ok(&self.buf[end..stop])
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.bytes()?;
        let arr: [u8; 8] = b
            .try_into()
            .map_err(|_| DecodeError(format!("integer field has {} bytes", b.len())))?;
        Ok(u64::from_be_bytes(arr))
    }

    /// Reads a coffer field; rejects unsorted or duplicated ids so that
    /// decoding is the exact inverse of encoding.
    pub fn ids(&mut self) -> Result<Vec<Hash32>, DecodeError> {
        let b = self.bytes()?;
        if b.len() % 32 != 0 {
            return Err(DecodeError(format!("id list of {} bytes", b.len())));
        }
        let ids: Vec<Hash32> = b.chunks_exact(32).map(|c| Hash32(c.try_into().unwrap())).collect();
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError("coffer ids not strictly ascending".into()));
        }
        Ok(ids)
    }

    pub fn end(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_fields() {
        let a = Hash32([1; 32]);
        let b = Hash32([2; 32]);
        let enc = Writer::new().tag(7).u64(42).bytes(b"xy").ids([&a, &b]).finish();
        let mut r = Reader::new(&enc);
        assert_eq!(r.tag().unwrap(), 7);
        assert_eq!(r.u64().unwrap(), 42);
        assert_eq!(r.bytes().unwrap(), b"xy");
        assert_eq!(r.ids().unwrap(), vec![a, b]);
        r.end().unwrap();
    }

    #[test]
    fn rejects_unsorted_ids() {
        let a = Hash32([1; 32]);
        let b = Hash32([2; 32]);
        let enc = Writer::new().ids([&b, &a]).finish();
        assert!(Reader::new(&enc).ids().is_err());
    }

    #[test]
    fn rejects_truncation() {
        let enc = Writer::new().u64(1).finish();
        assert!(Reader::new(&enc[..6]).u64().is_err());
    }
}
