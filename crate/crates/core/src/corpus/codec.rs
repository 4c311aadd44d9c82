//! Binary index file.
//!
//! Layout: `MAGIC`, `u32` format version, `u8` stemming flag, then three
//! sections, each `u8` tag + `u64` payload length + payload:
//!
//! * `1` stats: doc count, then `(doc_id delta, length)` pairs
//! * `2` dictionary: term count, then `(term length, term bytes, df)`
//! * `3` postings: per term in dictionary order, per entry
//!   `(doc_id delta, frequency, position deltas...)`
//!
//! All integers inside sections are unsigned LEB128; fixed-width fields are
//! little-endian.

use std::collections::BTreeMap;

use super::{DocId, PositionalIndex, Posting, PostingList};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PXIX";
pub const FORMAT_VERSION: u32 = 1;

const TAG_STATS: u8 = 1;
const TAG_DICTIONARY: u8 = 2;
const TAG_POSTINGS: u8 = 3;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub fn encode_index(index: &PositionalIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(index.use_stemming as u8);

    let mut stats = Vec::new();
    put_varint(&mut stats, index.doc_lengths.len() as u64);
    let mut prev = 0u64;
    for (&id, &len) in &index.doc_lengths {
        put_varint(&mut stats, id as u64 - prev);
        put_varint(&mut stats, len as u64);
        prev = id as u64;
    }
    put_section(&mut out, TAG_STATS, &stats);

    let mut dict = Vec::new();
    put_varint(&mut dict, index.postings.len() as u64);
    for (term, list) in &index.postings {
        put_varint(&mut dict, term.len() as u64);
        dict.extend_from_slice(term.as_bytes());
        put_varint(&mut dict, list.entries.len() as u64);
    }
    put_section(&mut out, TAG_DICTIONARY, &dict);

    let mut body = Vec::new();
    for list in index.postings.values() {
        let mut prev_doc = 0u64;
        for entry in &list.entries {
            put_varint(&mut body, entry.doc_id as u64 - prev_doc);
            prev_doc = entry.doc_id as u64;
            put_varint(&mut body, entry.positions.len() as u64);
            let mut prev_pos = 0u64;
            for &p in &entry.positions {
                put_varint(&mut body, p as u64 - prev_pos);
                prev_pos = p as u64;
            }
        }
    }
    put_section(&mut out, TAG_POSTINGS, &body);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::format(self.pos as u64, message)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("unexpected end of file (needed {n} bytes)")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64> {
        let start = self.pos;
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.u8()?;
            v |= ((byte & 0x7f) as u64) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::format(start as u64, "varint longer than 10 bytes"))
    }

    fn varint_u32(&mut self, what: &str) -> Result<u32> {
        let start = self.pos;
        let v = self.varint()?;
        u32::try_from(v)
            .map_err(|_| Error::format(start as u64, format!("{what} {v} overflows u32")))
    }

    /// Reads a section header and returns the offset where its payload ends.
    fn section(&mut self, expected: u8) -> Result<usize> {
        let tag_at = self.pos;
        let tag = self.u8()?;
        if tag != expected {
            return Err(Error::format(
                tag_at as u64,
                format!("expected section {expected}, found {tag}"),
            ));
        }
        let len = self.u64_le()? as usize;
        if self.bytes.len() - self.pos < len {
            return Err(self.err(format!("section {tag} claims {len} bytes past end of file")));
        }
        Ok(self.pos + len)
    }

    fn finish_section(&self, end: usize, tag: u8) -> Result<()> {
        if self.pos != end {
            return Err(self.err(format!("section {tag} has trailing bytes")));
        }
        Ok(())
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<PositionalIndex> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad magic bytes"));
    }
    let version = r.u32_le()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported format version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    let use_stemming = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::format(8, format!("bad stemming flag {other}"))),
    };

    let end = r.section(TAG_STATS)?;
    let n_docs = r.varint()?;
    let mut doc_lengths = BTreeMap::new();
    let mut prev = 0u64;
    for i in 0..n_docs {
        let at = r.pos;
        let delta = r.varint()?;
        if i > 0 && delta == 0 {
            return Err(Error::format(
                at as u64,
                "document ids not strictly increasing",
            ));
        }
        let id = prev + delta;
        let id =
            DocId::try_from(id).map_err(|_| Error::format(at as u64, "doc id overflows u32"))?;
        let len = r.varint_u32("document length")?;
        doc_lengths.insert(id, len);
        prev = id as u64;
    }
    r.finish_section(end, TAG_STATS)?;

    let end = r.section(TAG_DICTIONARY)?;
    let n_terms = r.varint()?;
    let mut dictionary = Vec::new();
    for _ in 0..n_terms {
        let len = r.varint()? as usize;
        let at = r.pos;
        let raw = r.take(len)?;
        let term = std::str::from_utf8(raw)
            .map_err(|_| Error::format(at as u64, "term is not valid UTF-8"))?
            .to_string();
        let df = r.varint()?;
        if df == 0 {
            return Err(r.err(format!("term {term:?} has zero document frequency")));
        }
        dictionary.push((term, df));
    }
    r.finish_section(end, TAG_DICTIONARY)?;

    let end = r.section(TAG_POSTINGS)?;
    let mut postings = BTreeMap::new();
    for (term, df) in dictionary {
        let mut entries = Vec::with_capacity(df as usize);
        let mut prev_doc = 0u64;
        for i in 0..df {
            let at = r.pos;
            let delta = r.varint()?;
            if i > 0 && delta == 0 {
                return Err(Error::format(
                    at as u64,
                    "posting doc ids not strictly increasing",
                ));
            }
            let doc = prev_doc + delta;
            prev_doc = doc;
            let doc_id = DocId::try_from(doc)
                .map_err(|_| Error::format(at as u64, "doc id overflows u32"))?;
            let Some(&doc_len) = doc_lengths.get(&doc_id) else {
                return Err(Error::format(
                    at as u64,
                    format!("posting references unknown document {doc_id}"),
                ));
            };
            let freq = r.varint()?;
            if freq == 0 || freq > doc_len as u64 {
                return Err(r.err(format!(
                    "frequency {freq} invalid for document of length {doc_len}"
                )));
            }
            let mut positions = Vec::with_capacity(freq as usize);
            let mut prev_pos = 0u64;
            for _ in 0..freq {
                let at = r.pos;
                let d = r.varint()?;
                if d == 0 {
                    return Err(Error::format(
                        at as u64,
                        "positions not strictly increasing",
                    ));
                }
                prev_pos += d;
                if prev_pos > doc_len as u64 {
                    return Err(Error::format(at as u64, "position beyond document length"));
                }
                positions.push(prev_pos as u32);
            }
            entries.push(Posting { doc_id, positions });
        }
        postings.insert(term.clone(), PostingList { term, entries });
    }
    r.finish_section(end, TAG_POSTINGS)?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after postings section"));
    }
    Ok(PositionalIndex::assemble(
        postings,
        doc_lengths,
        use_stemming,
    ))
}
