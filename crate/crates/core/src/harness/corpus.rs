//! Bag-of-words corpora in the UCI `docword` / `vocab` format.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid split: {0}")]
    Split(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, message: message.into() }
}

/// One document as sorted `(word id, count)` pairs, counts ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub entries: Vec<(u32, u32)>,
}

impl Document {
    /// Sorts by word and merges repeated words.
    pub fn new(mut entries: Vec<(u32, u32)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(entries.len());
        for (w, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == w => last.1 += c,
                _ if c > 0 => merged.push((w, c)),
                _ => {}
            }
        }
        Self { entries: merged }
    }

    /// Builds a document from a token stream.
    pub fn from_tokens(tokens: impl IntoIterator<Item = u32>) -> Self {
        Self::new(tokens.into_iter().map(|w| (w, 1)).collect())
    }

    pub fn total_tokens(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    /// The document as individual word tokens, in word order.
    pub fn tokens(&self) -> Vec<u32> {
        self.entries.iter().flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub num_words: usize,
    pub docs: Vec<Document>,
    pub vocab: Option<Vec<String>>,
}

impl Corpus {
    pub fn new(num_words: usize, docs: Vec<Document>) -> Self {
        Self { num_words, docs, vocab: None }
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(Document::total_tokens).sum()
    }

    /// Number of distinct (document, word) pairs.
    pub fn nnz(&self) -> usize {
        self.docs.iter().map(|d| d.entries.len()).sum()
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            num_words: self.num_words,
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }
}

fn header_value(lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>, what: &str) -> Result<usize, CorpusError> {
    let (n, line) = lines.next().ok_or_else(|| parse_err(0, format!("missing header field {what}")))?;
    let line = line?;
    line.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(n + 1, format!("expected {what}, found {:?}", line.trim())))
}

/// Parses a UCI bag-of-words corpus.
///
/// `docword` starts with three header lines (D, V, NNZ) followed by NNZ
/// lines `docID wordID count`, all 1-indexed. `vocab`, when given, holds
/// one word per line and must have exactly V lines.
pub fn load_uci_corpus<R: BufRead, S: BufRead>(docword: R, vocab: Option<S>) -> Result<Corpus, CorpusError> {
    let mut lines = docword.lines().enumerate();
    let num_docs = header_value(&mut lines, "D")?;
    let num_words = header_value(&mut lines, "V")?;
    let nnz = header_value(&mut lines, "NNZ")?;

    let mut docs: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); num_docs];
    let mut seen = 0usize;
    for (n, line) in lines {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| parse_err(lineno, format!("invalid {what} {s:?}")))
        };
        let (doc, word, count) = (parse(fields[0], "docID")?, parse(fields[1], "wordID")?, parse(fields[2], "count")?);
        if doc == 0 || doc as usize > num_docs {
            return Err(parse_err(lineno, format!("docID {doc} outside 1..={num_docs}")));
        }
        if word == 0 || word as usize > num_words {
            return Err(parse_err(lineno, format!("wordID {word} outside 1..={num_words}")));
        }
        if count == 0 || count > u32::MAX as u64 {
            return Err(parse_err(lineno, format!("invalid count {count}")));
        }
        seen += 1;
        if seen > nnz {
            return Err(parse_err(lineno, format!("more than NNZ = {nnz} entries")));
        }
        *docs[doc as usize - 1].entry(word as u32 - 1).or_insert(0) += count as u32;
    }
    if seen != nnz {
        return Err(parse_err(3, format!("header declares NNZ = {nnz}, found {seen} entries")));
    }

    let vocab = match vocab {
        Some(reader) => {
            let words: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let words: Vec<String> = words.into_iter().map(|w| w.trim().to_owned()).collect();
            let words = match words.iter().rposition(|w| !w.is_empty()) {
                Some(last) => words[..=last].to_vec(),
                None => Vec::new(),
            };
            if words.len() != num_words {
                return Err(parse_err(words.len(), format!("vocabulary has {} words, header says V = {num_words}", words.len())));
            }
            Some(words)
        }
        None => None,
    };

    Ok(Corpus {
        num_words,
        docs: docs.into_iter().map(|m| Document { entries: m.into_iter().collect() }).collect(),
        vocab,
    })
}

/// Document indices of a seeded train/test split; both sorted.
pub fn split_indices(num_docs: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::Split(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let num_test = (num_docs as f64 * test_fraction).round() as usize;
    if num_test == 0 || num_test >= num_docs {
        return Err(CorpusError::Split(format!(
            "fraction {test_fraction} of {num_docs} documents leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..num_docs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..num_test].to_vec();
    let mut train = order[num_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Document-level train/test split, deterministic under `seed`.
pub fn split_train_test(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    let (train, test) = split_indices(corpus.num_docs(), test_fraction, seed)?;
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

/// Reads a dense real matrix, one row per line, fields separated by
/// whitespace or commas. Lines starting with '#' are ignored.
pub fn load_dense_matrix<R: BufRead>(reader: R) -> Result<Vec<Vec<f64>>, CorpusError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(n + 1, format!("invalid number {s:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(n + 1, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Corpus, CorpusError> {
        load_uci_corpus(text.as_bytes(), None::<&[u8]>)
    }

    #[test]
    fn minimal_file() {
        let c = load("2\n3\n2\n1 1 4\n2 3 1\n").unwrap();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.num_words, 3);
        assert_eq!(c.total_tokens(), 5);
        assert_eq!(c.docs[0].entries, vec![(0, 4)]);
        assert_eq!(c.docs[1].entries, vec![(2, 1)]);
    }

    #[test]
    fn empty_body() {
        let c = load("3\n10\n0\n").unwrap();
        assert_eq!(c.num_docs(), 3);
        assert_eq!(c.total_tokens(), 0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("2\n3\n1\n1 4 1\n", 4),
            ("2\n3\n1\n3 1 1\n", 4),
            ("2\n3\n1\n1 1\n", 4),
            ("2\n3\n2\n1 1 1\n2 x 1\n", 5),
            ("2\n3\n1\n1 1 0\n", 4),
            ("2\n3\n1\n1 1 1\n2 2 2\n", 5),
            ("2\nthree\n1\n", 2),
        ];
        for (text, line) in cases {
            match load(text) {
                Err(CorpusError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(load("2\n3\n3\n1 1 1\n"), Err(CorpusError::Parse { .. })));
        assert!(matches!(load("2\n3\n"), Err(CorpusError::Parse { .. })));
    }

    #[test]
    fn vocabulary() {
        let c = load_uci_corpus("1\n2\n1\n1 2 3\n".as_bytes(), Some("alpha\nbeta\n".as_bytes())).unwrap();
        assert_eq!(c.vocab.unwrap(), vec!["alpha", "beta"]);
        let bad = load_uci_corpus("1\n2\n1\n1 2 3\n".as_bytes(), Some("alpha\n".as_bytes()));
        assert!(bad.is_err());
    }

    #[test]
    fn split_properties() {
        let c = Corpus::new(5, (0..1000).map(|i| Document::new(vec![(i % 5, 1 + i % 3)])).collect());
        let (a_train, a_test) = split_indices(1000, 0.2, 7).unwrap();
        let (b_train, b_test) = split_indices(1000, 0.2, 7).unwrap();
        assert_eq!((a_train.clone(), a_test.clone()), (b_train, b_test));
        let (_, other_test) = split_indices(1000, 0.2, 8).unwrap();
        assert_ne!(a_test, other_test);
        let mut all: Vec<usize> = a_train.iter().chain(&a_test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(a_test.len(), 200);
        let (train, test) = split_train_test(&c, 0.2, 7).unwrap();
        assert_eq!(train.num_docs() + test.num_docs(), 1000);
        assert_eq!(train.total_tokens() + test.total_tokens(), c.total_tokens());
    }

    #[test]
    fn split_rejects_empty_sides() {
        assert!(split_indices(10, 0.0, 1).is_err());
        assert!(split_indices(10, 1.0, 1).is_err());
        assert!(split_indices(3, 0.01, 1).is_err());
        assert!(split_indices(3, 0.99, 1).is_err());
    }

    #[test]
    fn dense_matrix() {
        let rows = load_dense_matrix("# header\n1.0 2.0\n3,4\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(load_dense_matrix("1 2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn document_merges_duplicates() {
        let d = Document::from_tokens([3, 1, 3, 3]);
        assert_eq!(d.entries, vec![(1, 1), (3, 3)]);
        assert_eq!(d.tokens(), vec![1, 3, 3, 3]);
    }
}
