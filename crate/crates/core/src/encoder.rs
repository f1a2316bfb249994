//! Token encoders: a deterministic hashing featurizer and a reader for
//! precomputed embedding files.
//!
//! Precomputed files start with `e <width>` and then hold one token per line:
//! `<sentence_index> <position> v1 ... v_e`, where the sentence index counts
//! sentences within the cell's corpus from zero.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use xxhash_rust::xxh64::xxh64;

use crate::data::Corpus;
use crate::error::{Error, Result};

const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub ngram_orders: BTreeSet<usize>,
    pub window: usize,
    pub hash_seed: u64,
}

impl FeaturizerConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidArgument(format!(
                "featurizer width {} is below the minimum of 8",
                self.dim
            )));
        }
        if self.ngram_orders.contains(&0) {
            return Err(Error::InvalidArgument("n-gram order 0".into()));
        }
        Ok(())
    }
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            dim: 768,
            ngram_orders: [2, 3, 4].into(),
            window: 1,
            hash_seed: 0,
        }
    }
}

fn token_keys(token: &str, orders: &BTreeSet<usize>) -> Vec<String> {
    let mut keys = vec![format!("w:{token}")];
    let marked: Vec<char> = std::iter::once('^')
        .chain(token.chars())
        .chain(std::iter::once('$'))
        .collect();
    for &n in orders {
        if n > marked.len() {
            continue;
        }
        for gram in marked.windows(n) {
            keys.push(format!("g{n}:{}", gram.iter().collect::<String>()));
        }
    }
    keys
}

/// Signed feature hashing of each token and its neighbours, unit-normalized.
pub fn featurize(tokens: &[String], config: &FeaturizerConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let keys: Vec<Vec<String>> = tokens
        .iter()
        .map(|t| token_keys(t, &config.ngram_orders))
        .collect();
    let w = config.window as isize;
    let mut out = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() as isize {
        let mut v = vec![0.0; config.dim];
        for off in -w..=w {
            let j = i + off;
            if j < 0 || j >= tokens.len() as isize {
                continue;
            }
            for key in &keys[j as usize] {
                let k = format!("{off}|{key}");
                let h = xxh64(k.as_bytes(), config.hash_seed);
                let s = xxh64(k.as_bytes(), config.hash_seed ^ SIGN_SALT);
                let sign = if s & 1 == 0 { 1.0 } else { -1.0 };
                v[(h % config.dim as u64) as usize] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub width: usize,
    vectors: HashMap<(usize, usize), Vec<f64>>,
}

impl EmbeddingTable {
    pub fn get(&self, sentence: usize, position: usize) -> Result<&[f64]> {
        self.vectors
            .get(&(sentence, position))
            .map(Vec::as_slice)
            .ok_or(Error::MissingEmbedding { sentence, position })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_precomputed(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let width = loop {
        match lines.next() {
            None => return Err(Error::EmptyFile(path.to_path_buf())),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => {
                let mut f = l.split_whitespace();
                match (f.next(), f.next().map(str::parse::<usize>), f.next()) {
                    (Some("e"), Some(Ok(w)), None) if w > 0 => break w,
                    _ => return Err(Error::parse(path, i + 1, "expected header `e <width>`")),
                }
            }
        }
    };
    let mut vectors = HashMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::parse(
                path,
                line_no,
                "expected `<sentence> <position> values...`",
            ));
        }
        let sentence: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "sentence index is not an integer"))?;
        let position: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "position is not an integer"))?;
        let values = fields[2..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(path, line_no, "non-numeric embedding value"))?;
        if values.len() != width {
            return Err(Error::EmbeddingWidth {
                path: path.to_path_buf(),
                line: line_no,
                expected: width,
                got: values.len(),
            });
        }
        if vectors.insert((sentence, position), values).is_some() {
            return Err(Error::parse(
                path,
                line_no,
                "duplicate (sentence, position)",
            ));
        }
    }
    Ok(EmbeddingTable { width, vectors })
}

pub fn write_precomputed(
    path: &Path,
    width: usize,
    rows: &[(usize, usize, Vec<f64>)],
) -> Result<()> {
    let mut out = format!("e {width}\n");
    for (s, p, v) in rows {
        out.push_str(&format!("{s} {p}"));
        for x in v {
            // `{:?}` prints the shortest string that parses back to the same f64.
            out.push_str(&format!(" {x:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Where token embeddings come from.
#[derive(Debug, Clone)]
pub enum Embedder {
    Featurizer(FeaturizerConfig),
    Precomputed(HashMap<crate::data::Cell, PathBuf>),
}

impl Embedder {
    /// Embeds every sentence of `corpus`, in corpus order.
    pub fn embed(&self, corpus: &Corpus) -> Result<Vec<Vec<Vec<f64>>>> {
        match self {
            Embedder::Featurizer(cfg) => corpus
                .sentences
                .iter()
                .map(|s| featurize(&s.tokens, cfg))
                .collect(),
            Embedder::Precomputed(paths) => {
                let path = paths.get(&corpus.cell).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "no embedding file listed for cell {}",
                        corpus.cell
                    ))
                })?;
                let table = load_precomputed(path)?;
                embed_from_table(corpus, &table)
            }
        }
    }

    pub fn width(&self) -> Option<usize> {
        match self {
            Embedder::Featurizer(cfg) => Some(cfg.dim),
            Embedder::Precomputed(_) => None,
        }
    }
}

pub fn embed_from_table(corpus: &Corpus, table: &EmbeddingTable) -> Result<Vec<Vec<Vec<f64>>>> {
    corpus
        .sentences
        .iter()
        .enumerate()
        .map(|(si, s)| {
            (0..s.tokens.len())
                .map(|p| table.get(si, p).map(<[f64]>::to_vec))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let cfg = FeaturizerConfig::new(64);
        let a = featurize(&toks("the cat sat"), &cfg).unwrap();
        let b = featurize(&toks("the cat sat"), &cfg).unwrap();
        assert_eq!(a, b);
        for v in &a {
            assert_eq!(v.len(), 64);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn context_changes_vector() {
        let cfg = FeaturizerConfig::new(256);
        let a = featurize(&toks("the cat sat"), &cfg).unwrap();
        let b = featurize(&toks("a cat ran"), &cfg).unwrap();
        assert_ne!(a[1], b[1]);
        let iso = FeaturizerConfig {
            window: 0,
            ..FeaturizerConfig::new(256)
        };
        let a = featurize(&toks("the cat sat"), &iso).unwrap();
        let b = featurize(&toks("a cat ran"), &iso).unwrap();
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn hash_seed_matters() {
        let a = featurize(&toks("hello"), &FeaturizerConfig::new(32)).unwrap();
        let cfg = FeaturizerConfig {
            hash_seed: 7,
            ..FeaturizerConfig::new(32)
        };
        assert_ne!(a, featurize(&toks("hello"), &cfg).unwrap());
    }

    #[test]
    fn narrow_width_rejected() {
        assert!(featurize(&toks("x"), &FeaturizerConfig::new(4)).is_err());
    }

    #[test]
    fn precomputed_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        write_precomputed(&p, 2, &[(0, 0, vec![0.1, -2.0]), (0, 1, vec![1e-300, 3.5])]).unwrap();
        let t = load_precomputed(&p).unwrap();
        assert_eq!(t.get(0, 1).unwrap(), &[1e-300, 3.5]);
        assert!(matches!(
            t.get(1, 0),
            Err(Error::MissingEmbedding {
                sentence: 1,
                position: 0
            })
        ));

        fs::write(&p, "e 3\n0 0 1 2 3\n0 1 1 2\n").unwrap();
        assert!(matches!(
            load_precomputed(&p),
            Err(Error::EmbeddingWidth {
                line: 3,
                expected: 3,
                got: 2,
                ..
            })
        ));
        fs::write(&p, "e 2\n0 0 1 x\n").unwrap();
        assert!(matches!(
            load_precomputed(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&p, "width 2\n").unwrap();
        assert!(matches!(
            load_precomputed(&p),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
