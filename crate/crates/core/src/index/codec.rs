//! Small binary reader/writer shared by the on-disk formats.

use integer_encoding::VarInt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt record: {0}")]
pub struct CodecError(pub String);

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, b: u8) {
        self.buf.push(b);
    }

    pub fn varint(&mut self, n: u64) {
        let mut tmp = [0u8; 10];
        let len = n.encode_var(&mut tmp);
        self.buf.extend_from_slice(&tmp[..len]);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.varint(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| CodecError("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn varint(&mut self) -> Result<u64, CodecError> {
        let (n, len) = u64::decode_var(&self.buf[self.pos..])
            .ok_or_else(|| CodecError(format!("bad varint at byte {}", self.pos)))?;
        self.pos += len;
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.varint()? as usize;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CodecError(format!("length {len} overruns the record")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| CodecError("invalid UTF-8".into()))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        let end = self.pos + 8;
        let raw: [u8; 8] = self
            .buf
            .get(self.pos..end)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| CodecError("unexpected end of input".into()))?;
        self.pos = end;
        Ok(f64::from_le_bytes(raw))
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.is_done() {
            Ok(())
        } else {
            Err(CodecError(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub(crate) fn encode_varint(n: u64) -> Vec<u8> {
    n.encode_var_vec()
}

pub(crate) fn decode_varint(b: &[u8]) -> Result<u64, CodecError> {
    let mut r = Reader::new(b);
    let n = r.varint()?;
    r.finish()?;
    Ok(n)
}
