use std::collections::BTreeMap;

use super::codec::{CodecError, Reader, Writer};

pub const PAYLOAD_VERSION: u8 = 1;

/// Occurrences of one path in one model, and that model's path total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub count: u64,
    pub total: u64,
}

/// The models holding one path. Serialized as a version byte followed by
/// `(id, count, total)` entries in id order; ids are length-prefixed UTF-8,
/// numbers are unsigned varints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PostingPayload {
    pub entries: BTreeMap<String, Posting>,
}

impl PostingPayload {
    pub fn df(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(PAYLOAD_VERSION);
        w.varint(self.entries.len() as u64);
        for (id, p) in &self.entries {
            w.bytes(id.as_bytes());
            w.varint(p.count);
            w.varint(p.total);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != PAYLOAD_VERSION {
            return Err(CodecError(format!("unknown payload version {version}")));
        }
        let n = r.varint()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let id = r.string()?;
            let count = r.varint()?;
            let total = r.varint()?;
            if count == 0 || total < count {
                return Err(CodecError(format!(
                    "posting for '{id}' has count {count} and total {total}"
                )));
            }
            entries.insert(id, Posting { count, total });
        }
        r.finish()?;
        Ok(PostingPayload { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = PostingPayload::default();
        p.entries.insert("sm1".into(), Posting { count: 1, total: 1032 });
        p.entries.insert("sm2".into(), Posting { count: 3, total: 7 });
        let bytes = p.encode();
        assert_eq!(bytes[0], PAYLOAD_VERSION);
        assert_eq!(PostingPayload::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn layout_is_fixed() {
        let mut p = PostingPayload::default();
        p.entries.insert("sm1".into(), Posting { count: 1, total: 1032 });
        assert_eq!(p.encode(), vec![1, 1, 3, b's', b'm', b'1', 1, 0x88, 0x08]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PostingPayload::decode(&[]).is_err());
        assert!(PostingPayload::decode(&[9, 0]).is_err());
        assert!(PostingPayload::decode(&[1, 1, 1, b'a', 2, 1]).is_err());
        assert!(PostingPayload::decode(&[1, 0, 0]).is_err());
    }
}
