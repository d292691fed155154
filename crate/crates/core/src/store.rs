//! The temporal knowledge store: every fact verbalized, embedded without the
//! prompt and searched by exact cosine similarity.
//!
//! File layout: magic `TKS1`, `d: u32`, `n: u64`, 32-byte params fingerprint,
//! then `n` records and a CRC32 of everything before it. A record is
//! `fact_id: u64`, the time payload, the verbalized text, the subject,
//! predicate and object labels (each `u32` length + UTF-8) and `d` f32
//! values. Time payload: tag byte (0 point, 1 interval) followed by one or two
//! timestamps as `year: i32, month: u8, day: u8` with 0 for absent fields.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::embedder::{cosine_slices, EmbedError, EmbedderParams, Vector};
use crate::kg::{verbalize, FactId, FactTime, TemporalFact, TemporalKG, TimeInterval, Timestamp};

pub const STORE_VERSION: u8 = 1;
const MAGIC: &[u8; 3] = b"TKS";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot build a store from an empty graph")]
    EmptyKG,
    #[error("query has dimension {found}, store has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("store format version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub fact: TemporalFact,
    pub text: String,
    pub vector: Vector,
}

impl StoreEntry {
    pub fn fact_id(&self) -> FactId {
        self.fact.id
    }

    pub fn time(&self) -> &FactTime {
        &self.fact.time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub fact_id: FactId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalKnowledgeStore {
    dim: usize,
    entries: Vec<StoreEntry>,
    fingerprint: [u8; 32],
}

pub fn build_store(kg: &TemporalKG, params: &EmbedderParams) -> Result<TemporalKnowledgeStore, StoreError> {
    if kg.is_empty() {
        return Err(StoreError::EmptyKG);
    }
    params.validate()?;
    let entries = kg
        .facts()
        .par_iter()
        .map(|fact| {
            let text = verbalize(fact);
            let vector = params.embed(&text, false)?;
            Ok(StoreEntry {
                fact: fact.clone(),
                text,
                vector,
            })
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    Ok(TemporalKnowledgeStore {
        dim: params.dim(),
        entries,
        fingerprint: params.fingerprint(),
    })
}

/// Total order used for every ranking: score descending, then fact id.
pub fn rank_order(a: (f64, FactId), b: (f64, FactId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl TemporalKnowledgeStore {
    /// Assembles a store from prepared entries, checking shape and id
    /// uniqueness.
    pub fn from_entries(dim: usize, entries: Vec<StoreEntry>, fingerprint: [u8; 32]) -> Result<Self, StoreError> {
        let mut ids = std::collections::HashSet::new();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    found: e.vector.dim(),
                });
            }
            if !ids.insert(e.fact.id) {
                return Err(StoreError::CorruptStore(format!("duplicate fact id {}", e.fact.id)));
            }
        }
        Ok(TemporalKnowledgeStore {
            dim,
            entries,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn entry(&self, id: FactId) -> Option<&StoreEntry> {
        // Built stores keep entries at their id; loaded or assembled ones may not.
        match self.entries.get(id.0 as usize) {
            Some(e) if e.fact.id == id => Some(e),
            _ => self.entries.iter().find(|e| e.fact.id == id),
        }
    }

    /// Exact top-k by cosine.
    pub fn search(&self, query: &Vector, k: usize) -> Result<Vec<SearchHit>, StoreError> {
        self.search_slice(query.values(), k)
    }

    pub fn search_slice(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if query.len() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        if query.iter().all(|&v| v == 0.0) {
            return Err(StoreError::Embed(EmbedError::ZeroVector));
        }
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .map(|e| SearchHit {
                fact_id: e.fact.id,
                // A degenerate entry is orthogonal to everything.
                score: cosine_slices(query, e.vector.values()).unwrap_or(0.0),
            })
            .collect();
        let cmp = |a: &SearchHit, b: &SearchHit| rank_order((a.score, a.fact_id), (b.score, b.fact_id));
        let k = k.min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_unstable_by(cmp);
        Ok(hits)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_timestamp(out: &mut Vec<u8>, t: Timestamp) {
    out.extend_from_slice(&t.year_value().to_le_bytes());
    out.push(t.month_value().unwrap_or(0));
    out.push(t.day_value().unwrap_or(0));
}

fn encode(store: &TemporalKnowledgeStore, version: u8) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(b'0' + version);
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.entries.len() as u64).to_le_bytes());
    out.extend_from_slice(&store.fingerprint);
    for e in &store.entries {
        out.extend_from_slice(&e.fact.id.0.to_le_bytes());
        match e.fact.time {
            FactTime::Point { at } => {
                out.push(0);
                put_timestamp(&mut out, at);
            }
            FactTime::Interval { begin, end } => {
                out.push(1);
                put_timestamp(&mut out, begin);
                put_timestamp(&mut out, end);
            }
        }
        put_str(&mut out, &e.text);
        put_str(&mut out, &e.fact.subject);
        put_str(&mut out, &e.fact.predicate);
        put_str(&mut out, &e.fact.object);
        for v in e.vector.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_store<W: Write>(store: &TemporalKnowledgeStore, mut sink: W) -> Result<(), StoreError> {
    sink.write_all(&encode(store, STORE_VERSION))?;
    Ok(())
}

/// Writes the store under an arbitrary format version number; exists so
/// readers can be tested against files from other versions.
pub fn save_store_as_version<W: Write>(store: &TemporalKnowledgeStore, version: u8, mut sink: W) -> Result<(), StoreError> {
    assert!(version <= 9, "single-digit versions only");
    sink.write_all(&encode(store, version))?;
    Ok(())
}

pub fn load_store<R: Read>(source: R) -> Result<TemporalKnowledgeStore, StoreError> {
    load_store_versioned(source, STORE_VERSION)
}

/// Reads a store, accepting only format `expected_version`. There is no
/// migration between versions.
pub fn load_store_versioned<R: Read>(mut source: R, expected_version: u8) -> Result<TemporalKnowledgeStore, StoreError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..3] != MAGIC || !bytes[3].is_ascii_digit() {
        return Err(StoreError::CorruptStore("bad magic".into()));
    }
    let found = bytes[3] - b'0';
    if found != expected_version {
        return Err(StoreError::VersionMismatch {
            found,
            expected: expected_version,
        });
    }
    if bytes.len() < 4 + 4 + 8 + 32 + 4 {
        return Err(StoreError::CorruptStore("truncated header".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(StoreError::CorruptStore("checksum mismatch".into()));
    }
    decode(&body[4..]).ok_or_else(|| StoreError::CorruptStore("malformed record".into()))?
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.bytes.len() < n {
            return None;
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Some(head)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }

    fn timestamp(&mut self) -> Option<Timestamp> {
        let year = i32::from_le_bytes(self.take(4)?.try_into().unwrap());
        match (self.u8()?, self.u8()?) {
            (0, 0) => Timestamp::year(year).ok(),
            (m, 0) => Timestamp::month(year, m).ok(),
            (0, _) => None,
            (m, d) => Timestamp::day(year, m, d).ok(),
        }
    }
}

fn decode(body: &[u8]) -> Option<Result<TemporalKnowledgeStore, StoreError>> {
    let mut c = Cursor { bytes: body };
    let dim = c.u32()? as usize;
    let n = c.u64()? as usize;
    let fingerprint: [u8; 32] = c.take(32)?.try_into().unwrap();
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = FactId(c.u64()?);
        let time = match c.u8()? {
            0 => FactTime::point(c.timestamp()?),
            1 => {
                let begin = c.timestamp()?;
                let end = c.timestamp()?;
                FactTime::interval(TimeInterval::new(begin, end).ok()?)
            }
            _ => return None,
        };
        let text = c.string()?;
        let subject = c.string()?;
        let predicate = c.string()?;
        let object = c.string()?;
        let raw = c.take(dim.checked_mul(4)?)?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let vector = if values.iter().all(|&v| v == 0.0) {
            Vector::new(values)
        } else {
            Vector::normalized(values)
        };
        entries.push(StoreEntry {
            fact: TemporalFact {
                id,
                subject,
                predicate,
                object,
                time,
            },
            text,
            vector,
        });
    }
    if !c.bytes.is_empty() {
        return None;
    }
    Some(TemporalKnowledgeStore::from_entries(dim, entries, fingerprint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::EmbedderConfig;
    use crate::kg::{load_quadruples, QuadrupleFormat};

    fn kg() -> TemporalKG {
        load_quadruples(
            "Kenya\tvisit\tJapan\t2010-01-04\n\
             Chile\tcriticize\tNorway\t2011-06\n\
             Egypt\tmember of\tUnited Nations\t1945\t2020\n"
                .as_bytes(),
            QuadrupleFormat::Auto,
        )
        .unwrap()
    }

    fn params() -> EmbedderParams {
        EmbedderParams::init(EmbedderConfig {
            dim: 16,
            buckets: 256,
            prompt_len: 2,
            seed: 5,
        })
    }

    #[test]
    fn one_entry_per_fact() {
        let store = build_store(&kg(), &params()).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.dim(), 16);
        assert_eq!(store.entries()[2].text, "Egypt member of United Nations from 1945 to 2020");
        assert!(store.entries().iter().all(|e| e.vector.is_normalized()));
        assert_eq!(store.fingerprint(), params().fingerprint());
    }

    #[test]
    fn empty_graph_rejected() {
        let empty = TemporalKG::builder().build();
        assert!(matches!(build_store(&empty, &params()), Err(StoreError::EmptyKG)));
    }

    #[test]
    fn self_query_ranks_first() {
        let store = build_store(&kg(), &params()).unwrap();
        let q = store.entries()[1].vector.clone();
        let hits = store.search(&q, 1).unwrap();
        assert_eq!(hits[0].fact_id, FactId(1));
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(store.search(&q, 50).unwrap().len(), 3);
    }

    #[test]
    fn search_errors() {
        let store = build_store(&kg(), &params()).unwrap();
        assert!(matches!(store.search(&Vector::new(vec![1.0; 3]), 1), Err(StoreError::DimensionMismatch { .. })));
        assert!(matches!(store.search(&store.entries()[0].vector, 0), Err(StoreError::InvalidK)));
    }

    #[test]
    fn round_trip_and_corruption() {
        let store = build_store(&kg(), &params()).unwrap();
        let mut buf = Vec::new();
        save_store(&store, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"TKS1");
        assert_eq!(load_store(buf.as_slice()).unwrap(), store);

        let mut again = Vec::new();
        save_store(&build_store(&kg(), &params()).unwrap(), &mut again).unwrap();
        assert_eq!(buf, again);

        assert!(matches!(load_store(&buf[..buf.len() - 7]), Err(StoreError::CorruptStore(_))));
        let mut flipped = buf.clone();
        flipped[60] ^= 0x40;
        assert!(matches!(load_store(flipped.as_slice()), Err(StoreError::CorruptStore(_))));
    }

    #[test]
    fn old_version_is_refused() {
        let store = build_store(&kg(), &params()).unwrap();
        let mut v1 = Vec::new();
        save_store_as_version(&store, 1, &mut v1).unwrap();
        assert!(matches!(
            load_store_versioned(v1.as_slice(), 2),
            Err(StoreError::VersionMismatch { found: 1, expected: 2 })
        ));
    }
}
