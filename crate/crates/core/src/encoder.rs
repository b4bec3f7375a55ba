//! Request representations by mean pooling over a token embedding table.
//!
//! Text format of an embedding file:
//!
//! ```text
//! dim 3 count 2
//! hungry 0.1 -0.2 0.3
//! view 0 1 0.5
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Request};
use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Unknown tokens contribute a zero vector (and still count in the mean).
    #[default]
    ZeroVector,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    pub trainable: bool,
    pub oov_policy: OovPolicy,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    dim: usize,
    trainable: bool,
    oov_policy: OovPolicy,
    tokens: Vec<String>,
    data: Vec<f64>,
}

impl TryFrom<RawTable> for EmbeddingTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        if raw.data.len() != raw.dim * raw.tokens.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.dim * raw.tokens.len(),
                actual: raw.data.len(),
            });
        }
        let mut table = EmbeddingTable::new(raw.dim, raw.oov_policy)?;
        table.trainable = raw.trainable;
        for (token, row) in raw.tokens.into_iter().zip(raw.data.chunks(raw.dim)) {
            table.insert(token, row.to_vec())?;
        }
        Ok(table)
    }
}

impl From<EmbeddingTable> for RawTable {
    fn from(t: EmbeddingTable) -> Self {
        RawTable {
            dim: t.dim,
            trainable: t.trainable,
            oov_policy: t.oov_policy,
            tokens: t.tokens,
            data: t.data,
        }
    }
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_policy: OovPolicy) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            trainable: false,
            oov_policy,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Flat row-major storage, one row of `dim` values per token.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Inserts or overwrites a token vector.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector".into()));
        }
        let token = token.into();
        match self.index.get(&token) {
            Some(&idx) => self.data[idx * self.dim..(idx + 1) * self.dim].copy_from_slice(&vector),
            None => {
                self.index.insert(token.clone(), self.tokens.len());
                self.tokens.push(token);
                self.data.extend_from_slice(&vector);
            }
        }
        Ok(())
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Parse {
            line: 1,
            message: "header must be `dim D count N`".into(),
        };
        if header.len() != 4 || header[0] != "dim" || header[2] != "count" {
            return Err(bad_header());
        }
        let dim: usize = header[1].parse().map_err(|_| bad_header())?;
        let count: usize = header[3].parse().map_err(|_| bad_header())?;
        let mut table = EmbeddingTable::new(dim, OovPolicy::default())?;
        for (i, line) in lines {
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap_or_default();
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("bad value {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {dim} values for {token:?}, got {}", values.len()),
                });
            }
            if table.index.contains_key(token) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate token {token:?}"),
                });
            }
            table.insert(token, values).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        if table.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {count} tokens, found {}", table.len()),
            });
        }
        Ok(table)
    }

    /// Shortest round-trip decimal formatting, so write -> read is exact.
    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("dim {} count {}\n", self.dim, self.len());
        for (i, token) in self.tokens.iter().enumerate() {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!(
                    "token {token:?} cannot be written in the whitespace-separated format"
                )));
            }
            out.push_str(token);
            for v in self.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Resolves tokens to table rows; `None` marks an OOV token under the zero-vector policy.
    pub fn lookup(&self, tokens: &[String]) -> Result<Vec<Option<usize>>> {
        tokens
            .iter()
            .map(|t| match (self.index_of(t), self.oov_policy) {
                (Some(i), _) => Ok(Some(i)),
                (None, OovPolicy::ZeroVector) => {
                    log::warn!("out-of-vocabulary token {t:?}; using zero vector");
                    Ok(None)
                }
                (None, OovPolicy::Error) => Err(Error::OutOfVocabulary(t.clone())),
            })
            .collect()
    }

    /// Mean of the rows in `indices`; `None` entries contribute zeros.
    pub fn pool(&self, indices: &[Option<usize>]) -> Vector {
        let mut out = vec![0.0; self.dim];
        for idx in indices.iter().flatten() {
            for (o, v) in out.iter_mut().zip(self.row(*idx)) {
                *o += v;
            }
        }
        let n = indices.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

pub fn encode_tokens(tokens: &[String], table: &EmbeddingTable) -> Result<Vector> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokens(String::new()));
    }
    Ok(table.pool(&table.lookup(tokens)?))
}

/// Element-wise mean of the request's token vectors.
pub fn encode(request: &Request, table: &EmbeddingTable) -> Result<Vector> {
    if request.tokens.is_empty() {
        return Err(Error::EmptyTokens(request.id.clone()));
    }
    encode_tokens(&request.tokens, table)
}

pub fn encode_all(dataset: &Dataset, table: &EmbeddingTable) -> Result<Vec<Vector>> {
    dataset.requests.iter().map(|r| encode(r, table)).collect()
}

/// Backpropagates a gradient w.r.t. a pooled vector into a flat table-shaped
/// gradient buffer: each token occurrence receives `grad / len`.
pub fn pooling_backward(indices: &[Option<usize>], grad_pooled: &[f64], grad_table: &mut [f64]) {
    let dim = grad_pooled.len();
    let scale = 1.0 / indices.len() as f64;
    for idx in indices.iter().flatten() {
        let row = &mut grad_table[idx * dim..(idx + 1) * dim];
        for (g, d) in row.iter_mut().zip(grad_pooled) {
            *g += d * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{categories, request};
    use crate::corpus::SplitTag;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(entries[0].1.len(), OovPolicy::ZeroVector).unwrap();
        for (tok, v) in entries {
            t.insert(*tok, v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn two_point_mean() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(encode(&request("r", &["a", "b"], 0, None), &t).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_token_is_identity() {
        let t = table(&[("a", &[0.3, -2.5])]);
        assert_eq!(encode(&request("r", &["a"], 0, None), &t).unwrap(), vec![0.3, -2.5]);
    }

    #[test]
    fn multiset_mean() {
        let t = table(&[("a", &[3.0, 0.0]), ("b", &[0.0, 3.0])]);
        let got = encode(&request("r", &["a", "a", "b"], 0, None), &t).unwrap();
        // brute force: (3+3+0)/3, (0+0+3)/3
        assert_eq!(got, vec![2.0, 1.0]);
    }

    #[test]
    fn oov_policies() {
        let mut t = table(&[("a", &[2.0, 4.0])]);
        let r = request("r", &["a", "zzz"], 0, None);
        assert_eq!(encode(&r, &t).unwrap(), vec![1.0, 2.0]);
        t.oov_policy = OovPolicy::Error;
        assert!(matches!(encode(&r, &t), Err(Error::OutOfVocabulary(tok)) if tok == "zzz"));
    }

    #[test]
    fn empty_tokens_error() {
        let t = table(&[("a", &[1.0])]);
        assert!(matches!(encode(&request("r", &[], 0, None), &t), Err(Error::EmptyTokens(_))));
    }

    #[test]
    fn encode_all_matches_pointwise() {
        let t = table(&[("a", &[1.0, 2.0]), ("b", &[-1.0, 0.5]), ("c", &[0.0, 0.0])]);
        let d = Dataset {
            categories: categories(2),
            requests: vec![
                request("1", &["a"], 0, None),
                request("2", &["b", "c"], 1, None),
                request("3", &["a", "b", "c"], 0, None),
            ],
            split: SplitTag::Train,
        };
        let all = encode_all(&d, &t).unwrap();
        assert_eq!(all.len(), 3);
        for (r, v) in d.requests.iter().zip(&all) {
            assert_eq!(&encode(r, &t).unwrap(), v);
        }
        let empty = Dataset { requests: vec![], ..d };
        assert!(encode_all(&empty, &t).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = table(&[("a", &[0.1, -1e-300, 3.0]), ("b", &[1.0 / 3.0, 2.5e10, -0.0])]);
        let text = t.to_text().unwrap();
        assert!(text.starts_with("dim 3 count 2\n"));
        let back = EmbeddingTable::parse_text(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(EmbeddingTable::parse_text("dim 2 count 1\na 1.0\n").is_err());
        assert!(EmbeddingTable::parse_text("dim 2 count 2\na 1 2\n").is_err());
        assert!(EmbeddingTable::parse_text("dims 2 count 1\na 1 2\n").is_err());
        assert!(EmbeddingTable::parse_text("dim 1 count 2\na 1\na 2\n").is_err());
        assert!(EmbeddingTable::parse_text("dim 1 count 1\na x\n").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let mut t = table(&[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])]);
        t.trainable = true;
        let json = serde_json::to_string(&t).unwrap();
        let back: EmbeddingTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.index_of("b"), Some(1));
    }

    #[test]
    fn backward_distributes_over_occurrences() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let idx = t.lookup(&["a".into(), "a".into(), "b".into(), "oov".into()]).unwrap();
        let mut grad = vec![0.0; 4];
        pooling_backward(&idx, &[4.0, 8.0], &mut grad);
        assert_eq!(grad, vec![2.0, 4.0, 1.0, 2.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_table() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
            (1usize..5, 1usize..6).prop_flat_map(|(dim, vocab)| {
                (
                    proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, dim), vocab),
                    proptest::collection::vec(0..vocab, 1..8),
                )
            })
        }

        fn build(rows: &[Vec<f64>], scale: f64) -> EmbeddingTable {
            let mut t = EmbeddingTable::new(rows[0].len(), OovPolicy::Error).unwrap();
            for (i, r) in rows.iter().enumerate() {
                t.insert(format!("t{i}"), r.iter().map(|v| v * scale).collect()).unwrap();
            }
            t
        }

        proptest! {
            #[test]
            fn permutation_invariant_and_linear((rows, picks) in arb_table(), c in -3.0f64..3.0) {
                let t = build(&rows, 1.0);
                let tokens: Vec<String> = picks.iter().map(|i| format!("t{i}")).collect();
                let mut reversed = tokens.clone();
                reversed.reverse();
                let a = encode_tokens(&tokens, &t).unwrap();
                let b = encode_tokens(&reversed, &t).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
                let scaled = encode_tokens(&tokens, &build(&rows, c)).unwrap();
                for (x, y) in a.iter().zip(&scaled) {
                    prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()));
                }
            }
        }
    }
}
