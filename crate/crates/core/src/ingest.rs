//! Representation bundles on disk (JSON lines or a little-endian binary
//! layout) and static word-vector tables.
//!
//! Text bundle: a header object `{"format", "version", "d", "count",
//! "metadata"}` on the first line, then one `{"id", "L", "values"}` object per
//! sentence with values in row-major order (`values[j * L + i]` is dimension
//! `j` of token `i`).
//!
//! Binary bundle: `RGB1`, `d: u32`, `count: u64`, then per sentence
//! `id_len: u32`, UTF-8 id, `L: u32` and `d * L` column-major `f64`s. An
//! optional trailer `META`, `n: u32`, then `n` length-prefixed key/value
//! string pairs carries the metadata.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ReprMatrix;

pub const BINARY_MAGIC: &[u8; 4] = b"RGB1";
const META_MAGIC: &[u8; 4] = b"META";
const TEXT_FORMAT: &str = "repgeo-bundle";

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub matrix: ReprMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReprBundle {
    d: usize,
    sentences: Vec<Sentence>,
    pub metadata: IndexMap<String, String>,
}

impl ReprBundle {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            sentences: Vec::new(),
            metadata: IndexMap::new(),
        }
    }

    /// Ids are the corpus indices.
    pub fn from_corpus(corpus: Vec<ReprMatrix>) -> Result<Self> {
        let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
        let mut b = Self::new(d);
        for (i, m) in corpus.into_iter().enumerate() {
            b.push(i.to_string(), m)?;
        }
        Ok(b)
    }

    pub fn push(&mut self, id: impl Into<String>, matrix: ReprMatrix) -> Result<()> {
        let id = id.into();
        if matrix.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: matrix.d(),
                context: Some(format!("sentence {id:?}")),
            });
        }
        if self.sentences.iter().any(|s| s.id == id) {
            return Err(Error::DuplicateId(id));
        }
        self.sentences.push(Sentence { id, matrix });
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn matrices(&self) -> Vec<ReprMatrix> {
        self.sentences.iter().map(|s| s.matrix.clone()).collect()
    }

    pub fn into_matrices(self) -> Vec<ReprMatrix> {
        self.sentences.into_iter().map(|s| s.matrix).collect()
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextHeader {
    format: String,
    version: u32,
    d: usize,
    count: usize,
    #[serde(default)]
    metadata: IndexMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextSentence {
    id: String,
    #[serde(rename = "L")]
    l: usize,
    values: Vec<f64>,
}

fn parse_error(path: &Path, location: impl Into<String>, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.to_string(),
    }
}

pub fn write_text<W: Write>(bundle: &ReprBundle, mut w: W) -> std::io::Result<()> {
    let header = TextHeader {
        format: TEXT_FORMAT.into(),
        version: 1,
        d: bundle.d,
        count: bundle.len(),
        metadata: bundle.metadata.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for s in &bundle.sentences {
        let m = &s.matrix;
        let values = (0..m.d())
            .flat_map(|j| (0..m.len()).map(move |i| m.get(j, i)))
            .collect();
        let line = TextSentence {
            id: s.id.clone(),
            l: m.len(),
            values,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()
}

/// `path` only labels errors.
pub fn read_text<R: BufRead>(reader: R, path: &Path) -> Result<ReprBundle> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_error(path, "line 1", "missing header"))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: TextHeader =
        serde_json::from_str(&first).map_err(|e| parse_error(path, "line 1", e))?;
    if header.format != TEXT_FORMAT || header.version != 1 {
        return Err(parse_error(
            path,
            "line 1",
            format!(
                "unsupported format {:?} version {}",
                header.format, header.version
            ),
        ));
    }
    let mut bundle = ReprBundle::new(header.d);
    bundle.metadata = header.metadata;
    for (idx, line) in lines {
        let loc = format!("line {}", idx + 1);
        let line = line.map_err(|e| Error::io(path, e))?;
        let s: TextSentence =
            serde_json::from_str(&line).map_err(|e| parse_error(path, &loc, e))?;
        if s.l == 0 || !s.values.len().is_multiple_of(s.l) {
            return Err(parse_error(
                path,
                &loc,
                format!("{} values do not form L = {} columns", s.values.len(), s.l),
            ));
        }
        let d = s.values.len() / s.l;
        if d != bundle.d {
            return Err(Error::DimensionMismatch {
                expected: bundle.d,
                found: d,
                context: Some(format!("sentence {:?} at {loc}", s.id)),
            });
        }
        let mut col_major = vec![0.0; s.values.len()];
        for j in 0..d {
            for i in 0..s.l {
                col_major[i * d + j] = s.values[j * s.l + i];
            }
        }
        let m = ReprMatrix::from_column_major(d, s.l, col_major)
            .map_err(|e| parse_error(path, &loc, e))?;
        bundle.push(s.id, m)?;
    }
    if bundle.len() != header.count {
        return Err(parse_error(
            path,
            "end of file",
            format!(
                "header declares {} sentences, found {}",
                header.count,
                bundle.len()
            ),
        ));
    }
    Ok(bundle)
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_binary<W: Write>(bundle: &ReprBundle, mut w: W) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(bundle.d as u32).to_le_bytes())?;
    w.write_all(&(bundle.len() as u64).to_le_bytes())?;
    for s in &bundle.sentences {
        put_str(&mut w, &s.id)?;
        w.write_all(&(s.matrix.len() as u32).to_le_bytes())?;
        for x in s.matrix.as_column_major() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    if !bundle.metadata.is_empty() {
        w.write_all(META_MAGIC)?;
        w.write_all(&(bundle.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &bundle.metadata {
            put_str(&mut w, k)?;
            put_str(&mut w, v)?;
        }
    }
    w.flush()
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(format!("truncated {what}"))),
        }
    }

    fn error(&self, message: impl ToString) -> Error {
        parse_error(self.path, format!("byte offset {}", self.pos), message)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let at = self.pos;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            parse_error(
                self.path,
                format!("byte offset {at}"),
                format!("{what} is not UTF-8"),
            )
        })
    }
}

/// `path` only labels errors.
pub fn read_binary(bytes: &[u8], path: &Path) -> Result<ReprBundle> {
    let mut c = ByteCursor {
        bytes,
        pos: 0,
        path,
    };
    if c.take(4, "magic")? != BINARY_MAGIC {
        return Err(parse_error(path, "byte offset 0", "bad magic"));
    }
    let d = c.u32("dimension")? as usize;
    let count = c.u64("sentence count")?;
    let mut bundle = ReprBundle::new(d);
    for _ in 0..count {
        let id = c.string("sentence id")?;
        let l = c.u32("sentence length")? as usize;
        let at = c.pos;
        let n = d
            .checked_mul(l)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| c.error("payload size overflows"))?;
        let payload = c.take(n, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let m = ReprMatrix::from_column_major(d, l, data).map_err(|e| {
            parse_error(
                path,
                format!("byte offset {at}"),
                format!("sentence {id:?}: {e}"),
            )
        })?;
        bundle.push(id, m)?;
    }
    if c.pos < bytes.len() {
        if c.take(4, "metadata marker")? != META_MAGIC {
            return Err(c.error("unexpected trailing bytes"));
        }
        let n = c.u32("metadata count")?;
        for _ in 0..n {
            let k = c.string("metadata key")?;
            let v = c.string("metadata value")?;
            bundle.metadata.insert(k, v);
        }
        if c.pos != bytes.len() {
            return Err(c.error("unexpected trailing bytes"));
        }
    }
    Ok(bundle)
}

/// Sniffs the binary magic; anything else is read as text.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<ReprBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes, path)
    } else {
        read_text(bytes.as_slice(), path)
    }
}

/// Binary for a `.bin` extension, text otherwise.
pub fn write_bundle(bundle: &ReprBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    let binary = path.extension().is_some_and(|e| e == "bin");
    if binary {
        write_binary(bundle, w)
    } else {
        write_text(bundle, w)
    }
    .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    d: usize,
    entries: IndexMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let word = word.into();
        let line = self.entries.len() + 1;
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvalidSpec(format!("invalid word {word:?}")));
        }
        if vector.len() != self.d {
            return Err(Error::InconsistentDimension {
                line,
                expected: self.d,
                found: vector.len(),
            });
        }
        if self.entries.contains_key(&word) {
            return Err(Error::DuplicateWord { line, word });
        }
        self.entries.insert(word, vector);
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }
}

/// `path` only labels errors.
pub fn read_word_vectors<R: BufRead>(
    reader: R,
    path: &Path,
    expect_header: bool,
) -> Result<WordVectorTable> {
    let mut table: Option<WordVectorTable> = None;
    let mut declared: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let n = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(first) = fields.next() else { continue };
        let loc = format!("line {n}");
        if expect_header && declared.is_none() && table.is_none() {
            let parse = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
            let count = parse(Some(first));
            let d = parse(fields.next());
            match (count, d, fields.next()) {
                (Some(count), Some(d), None) if d > 0 => {
                    declared = Some(count);
                    table = Some(WordVectorTable::new(d));
                }
                _ => return Err(parse_error(path, loc, "expected header \"<count> <dim>\"")),
            }
            continue;
        }
        let vector = fields
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_error(path, &loc, format!("invalid number {f:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(parse_error(
                path,
                &loc,
                format!("word {first:?} has no values"),
            ));
        }
        let t = table.get_or_insert_with(|| WordVectorTable::new(vector.len()));
        if vector.len() != t.d {
            return Err(Error::InconsistentDimension {
                line: n,
                expected: t.d,
                found: vector.len(),
            });
        }
        if t.entries.contains_key(first) {
            return Err(Error::DuplicateWord {
                line: n,
                word: first.to_string(),
            });
        }
        t.entries.insert(first.to_string(), vector);
    }
    let table = table.ok_or_else(|| parse_error(path, "end of file", "no entries"))?;
    if let Some(count) = declared {
        if count != table.len() {
            return Err(parse_error(
                path,
                "end of file",
                format!("header declares {count} entries, found {}", table.len()),
            ));
        }
    }
    Ok(table)
}

/// Whitespace-separated `word v1 .. vd` lines, optionally after a
/// `count dim` header.
pub fn parse_word_vectors(path: impl AsRef<Path>, expect_header: bool) -> Result<WordVectorTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_vectors(BufReader::new(file), path, expect_header)
}

/// Entry order is preserved and values use shortest round-trip decimals.
pub fn write_word_vectors<W: Write>(
    table: &WordVectorTable,
    mut w: W,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(w, "{} {}", table.len(), table.d)?;
    }
    for (word, v) in &table.entries {
        write!(w, "{word}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    #[default]
    Skip,
    Error,
}

impl std::str::FromStr for OovPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "skip" => Ok(Self::Skip),
            "error" => Ok(Self::Error),
            _ => Err(format!("unknown OOV policy {s:?} (expected skip or error)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticRepr {
    pub bundle: ReprBundle,
    pub oov_skipped: usize,
}

/// Column `i` of sentence `s` is the table vector of its `i`-th kept token.
pub fn sentences_to_repr<S: AsRef<str>>(
    table: &WordVectorTable,
    sentences: &[Vec<S>],
    oov: OovPolicy,
) -> Result<StaticRepr> {
    let mut bundle = ReprBundle::new(table.d);
    let mut oov_skipped = 0;
    for (index, tokens) in sentences.iter().enumerate() {
        let mut columns: Vec<&[f64]> = Vec::with_capacity(tokens.len());
        for tok in tokens {
            match (table.get(tok.as_ref()), oov) {
                (Some(v), _) => columns.push(v),
                (None, OovPolicy::Skip) => oov_skipped += 1,
                (None, OovPolicy::Error) => {
                    return Err(Error::UnknownWord {
                        index,
                        word: tok.as_ref().to_string(),
                    })
                }
            }
        }
        if columns.len() < 2 {
            return Err(Error::TooShortAfterOov {
                index,
                remaining: columns.len(),
            });
        }
        bundle.push(index.to_string(), ReprMatrix::from_columns(&columns)?)?;
    }
    bundle
        .metadata
        .insert("source".into(), "word_vectors".into());
    bundle
        .metadata
        .insert("oov_skipped".into(), oov_skipped.to_string());
    Ok(StaticRepr {
        bundle,
        oov_skipped,
    })
}

/// One sentence per non-empty line, split on whitespace.
pub fn read_sentences(path: impl AsRef<Path>, lowercase: bool) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    if lowercase {
                        t.to_lowercase()
                    } else {
                        t.to_string()
                    }
                })
                .collect()
        })
        .collect())
}

/// Sentence ids must be unique; used when assembling bundles from parts.
pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}
