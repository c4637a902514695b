//! Fixed-length statement vectors.
//!
//! Real encoders run outside this crate; their output is attached with
//! [`attach_external`]. [`surrogate_embed`] is a vocabulary-free signed
//! feature-hashing embedder used for fixtures and demos.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    External,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Outcome of attaching vectors: ids of quotes that still lack one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachReport {
    pub attached: usize,
    pub unembedded: Vec<String>,
}

/// Attaches externally computed vectors to corpus quotes.
///
/// All vectors must share one dimension; the first vector (in id order)
/// sets it. Quotes without a vector are listed in the report.
pub fn attach_external(
    corpus: &Corpus,
    vectors: &BTreeMap<String, Vec<f64>>,
) -> Result<(Corpus, AttachReport)> {
    let mut dim = None;
    for (id, v) in vectors {
        if corpus.quote(id).is_none() {
            return Err(Error::UnknownReference(id.clone()));
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::DimensionMismatch {
                    id: Some(id.clone()),
                    expected: d,
                    got: v.len(),
                })
            }
            _ => {}
        }
    }
    let mut out = corpus.clone();
    let mut report = AttachReport::default();
    for q in out.quotes_mut() {
        match vectors.get(&q.id) {
            Some(v) => {
                q.embedding = Some(v.clone());
                report.attached += 1;
            }
            None => report.unembedded.push(q.id.clone()),
        }
    }
    Ok((out, report))
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn hash_token(token: &str, seed: u64) -> u64 {
    let mut h = XxHash64::with_seed(seed);
    h.write(token.as_bytes());
    h.finish()
}

/// Signed feature hashing over word unigrams and bigrams, L2-normalised.
pub fn surrogate_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < 2 {
        return Err(Error::invalid("embedding dimension must be at least 2"));
    }
    let words = tokenize(text);
    if words.is_empty() {
        return Err(Error::invalid("text has no tokens"));
    }
    let mut values = vec![0.0; dim];
    let mut add = |token: &str| {
        let h = hash_token(token, seed);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[(h % dim as u64) as usize] += sign;
    };
    for w in &words {
        add(w);
    }
    for pair in words.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every hashed token cancelled; fall back to the first token alone
        let h = hash_token(&words[0], seed);
        values[(h % dim as u64) as usize] = 1.0;
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(EmbeddingVector {
        values,
        source: EmbeddingSource::Surrogate,
    })
}

/// Embeds every quote lacking a vector with the surrogate embedder.
pub fn embed_missing(corpus: &Corpus, dim: usize, seed: u64) -> Result<Corpus> {
    let mut out = corpus.clone();
    for q in out.quotes_mut() {
        if q.embedding.is_none() {
            q.embedding = Some(surrogate_embed(&q.text, dim, seed)?.values);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub quote_id: String,
    pub vector: Vec<f64>,
}

pub fn read_sidecar(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SidecarRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(rec.quote_id.clone(), rec.vector).is_some() {
            return Err(Error::DuplicateId(rec.quote_id));
        }
    }
    Ok(out)
}

pub fn write_sidecar<W: std::io::Write>(mut w: W, corpus: &Corpus) -> Result<()> {
    for q in corpus.quotes() {
        if let Some(v) = &q.embedding {
            let rec = SidecarRecord {
                quote_id: q.id.clone(),
                vector: v.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w).map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_quotes, IngestConfig};

    fn corpus(n: usize) -> Corpus {
        let lines: Vec<String> = (0..n)
            .map(|i| {
                serde_json::json!({"id": format!("q{i}"), "person_id": "p", "timestamp": "2001-01-01", "text": "some words"})
                    .to_string()
            })
            .collect();
        parse_quotes(&lines.join("\n"), vec![], &IngestConfig::default()).unwrap().0
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn attach_all() {
        let c = corpus(3);
        let v: BTreeMap<_, _> = (0..3).map(|i| (format!("q{i}"), vec![i as f64; 512])).collect();
        let (out, rep) = attach_external(&c, &v).unwrap();
        assert_eq!(rep.attached, 3);
        assert!(rep.unembedded.is_empty());
        for q in out.quotes() {
            assert_eq!(q.embedding.as_ref(), v.get(&q.id));
        }
    }

    #[test]
    fn attach_rejects_wrong_dimension_by_id() {
        let c = corpus(3);
        let mut v: BTreeMap<_, _> = (0..3).map(|i| (format!("q{i}"), vec![0.0; 512])).collect();
        v.insert("q2".into(), vec![0.0; 511]);
        match attach_external(&c, &v) {
            Err(Error::DimensionMismatch { id, expected, got }) => {
                assert_eq!(id.as_deref(), Some("q2"));
                assert_eq!((expected, got), (512, 511));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn attach_flags_missing_and_unknown() {
        let c = corpus(3);
        let v: BTreeMap<_, _> = (0..2).map(|i| (format!("q{i}"), vec![1.0; 4])).collect();
        let (_, rep) = attach_external(&c, &v).unwrap();
        assert_eq!(rep.unembedded, vec!["q2".to_string()]);
        let bad: BTreeMap<_, _> = [("zz".to_string(), vec![1.0; 4])].into();
        assert!(matches!(attach_external(&c, &bad), Err(Error::UnknownReference(_))));
    }

    #[test]
    fn surrogate_is_deterministic_and_unit_norm() {
        let a = surrogate_embed("The left wing party", 512, 7).unwrap();
        let b = surrogate_embed("The left wing party", 512, 7).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(a.source, EmbeddingSource::Surrogate);
    }

    #[test]
    fn surrogate_distinguishes_texts() {
        let a = surrogate_embed("left wing", 512, 1).unwrap();
        let b = surrogate_embed("entirely unrelated words", 512, 1).unwrap();
        assert!(cosine(&a.values, &b.values) < 1.0);
    }

    #[test]
    fn surrogate_rejects_empty_and_tiny_dim() {
        assert!(surrogate_embed("  ... !!", 16, 0).is_err());
        assert!(surrogate_embed("hello", 1, 0).is_err());
    }

    #[test]
    fn case_and_punctuation_are_normalised() {
        let a = surrogate_embed("Hello, World!", 64, 3).unwrap();
        let b = surrogate_embed("hello world", 64, 3).unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn single_token_texts_unit_norm(word in "[a-z]{1,12}", dim in 2usize..600, seed in proptest::num::u64::ANY) {
            let v = surrogate_embed(&word, dim, seed).unwrap();
            let norm: f64 = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            proptest::prop_assert!((norm - 1.0).abs() < 1e-12);
            proptest::prop_assert_eq!(v.values.iter().filter(|x| **x != 0.0).count(), 1);
        }
    }
}
