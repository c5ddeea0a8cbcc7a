//! Deterministic text embeddings (TF-IDF, signed feature hashing, or
//! externally computed vectors) and cosine similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Default output dimension of the hashed bag-of-words backend.
pub const DEFAULT_HASH_DIM: usize = 1 << 15;

/// Offset basis of 64-bit FNV-1a; fixed so hashed embeddings are
/// bit-identical across platforms and releases.
pub const HASH_SEED: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a64(s: &str) -> u64 {
    s.bytes()
        .fold(HASH_SEED, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<F> {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<F>,
}

impl<F: Scalar> EmbeddingVector<F> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(values: &[F]) -> Self {
        let (indices, vals) = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        Self {
            dim: values.len(),
            indices,
            values: vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> F {
        self.values.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    /// A zero vector is a legal value, flagged wherever it is consumed.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn scaled(&self, alpha: F) -> Self {
        Self {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| v * alpha).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> F {
        let (mut a, mut b) = (0, 0);
        let mut acc = F::zero();
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    fn from_sparse(dim: usize, entries: BTreeMap<u32, F>) -> Self {
        let (indices, values) = entries.into_iter().filter(|(_, v)| !v.is_zero()).unzip();
        Self {
            dim,
            indices,
            values,
        }
    }

    fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > F::zero() {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self
    }
}

/// Cosine similarity plus a flag for the zero-norm convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine<F> {
    pub value: F,
    /// One side had zero norm; `value` is then 0.
    pub zero_norm: bool,
}

pub fn cosine<F: Scalar>(u: &EmbeddingVector<F>, v: &EmbeddingVector<F>) -> Result<Cosine<F>> {
    if u.dim != v.dim {
        return Err(Error::DimensionMismatch {
            expected: u.dim,
            actual: v.dim,
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu.is_zero() || nv.is_zero() {
        return Ok(Cosine {
            value: F::zero(),
            zero_norm: true,
        });
    }
    let value = (u.dot(v) / (nu * nv)).max(-F::one()).min(F::one());
    Ok(Cosine {
        value,
        zero_norm: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Tfidf,
    HashedBow,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermStats {
    pub id: u32,
    pub df: usize,
}

/// Lookup table of precomputed vectors keyed by the space-joined token string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalEmbeddings {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl ExternalEmbeddings {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.table.get(key).map(Vec::as_slice)
    }
}

#[derive(Deserialize)]
struct ExternalLine {
    key: String,
    vector: Vec<f64>,
}

pub fn load_external_embeddings(path: impl AsRef<Path>) -> Result<ExternalEmbeddings> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_external_embeddings(BufReader::new(file))
}

pub fn read_external_embeddings(reader: impl BufRead) -> Result<ExternalEmbeddings> {
    let mut out = ExternalEmbeddings::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<external embeddings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExternalLine =
            serde_json::from_str(&line).map_err(|e| Error::ExternalEmbeddings {
                line: line_no,
                reason: e.to_string(),
            })?;
        if parsed.vector.is_empty() || parsed.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExternalEmbeddings {
                line: line_no,
                reason: "vector must be non-empty and finite".into(),
            });
        }
        if out.table.is_empty() {
            out.dim = parsed.vector.len();
        } else if parsed.vector.len() != out.dim {
            return Err(Error::ExternalEmbeddings {
                line: line_no,
                reason: format!("dimension {} differs from {}", parsed.vector.len(), out.dim),
            });
        }
        out.table.insert(parsed.key, parsed.vector);
    }
    Ok(out)
}

/// Fitted, immutable embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    backend: Backend,
    num_docs: usize,
    dim: usize,
    vocabulary: BTreeMap<String, TermStats>,
    idf: Vec<f64>,
    external: Option<ExternalEmbeddings>,
}

/// Smoothed inverse document frequency.
pub fn idf(num_docs: usize, df: usize) -> f64 {
    ((1.0 + num_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Fits an embedder. Each item of `corpus` is one IDF unit.
///
/// Term ids are assigned in lexicographic order, so the fitted state does
/// not depend on the order of the corpus.
pub fn fit_embedder<I, D, S>(corpus: I, backend: Backend, dim: Option<usize>) -> Result<Embedder>
where
    I: IntoIterator<Item = D>,
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    match backend {
        Backend::Tfidf => {
            let mut df: BTreeMap<String, usize> = BTreeMap::new();
            let mut num_docs = 0;
            for doc in corpus {
                num_docs += 1;
                let terms: BTreeSet<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
                for t in terms {
                    *df.entry(t.to_string()).or_default() += 1;
                }
            }
            if num_docs == 0 {
                return Err(Error::EmptyCorpus);
            }
            let vocabulary = df
                .into_iter()
                .enumerate()
                .map(|(id, (term, df))| (term, TermStats { id: id as u32, df }))
                .collect();
            Ok(Embedder::from_vocabulary(num_docs, vocabulary))
        }
        Backend::HashedBow => {
            let dim = dim.unwrap_or(DEFAULT_HASH_DIM);
            if !dim.is_power_of_two() || dim > u32::MAX as usize {
                return Err(Error::InvalidArgument(format!(
                    "hashed-bow dimension must be a power of two, got {dim}"
                )));
            }
            Ok(Embedder {
                backend,
                num_docs: 0,
                dim,
                vocabulary: BTreeMap::new(),
                idf: Vec::new(),
                external: None,
            })
        }
        Backend::External => Err(Error::InvalidArgument(
            "external embeddings are loaded, not fitted; use Embedder::external".into(),
        )),
    }
}

impl Embedder {
    fn from_vocabulary(num_docs: usize, vocabulary: BTreeMap<String, TermStats>) -> Self {
        let mut idf_table = vec![0.0; vocabulary.len()];
        for stats in vocabulary.values() {
            idf_table[stats.id as usize] = idf(num_docs, stats.df);
        }
        Embedder {
            backend: Backend::Tfidf,
            num_docs,
            dim: vocabulary.len(),
            vocabulary,
            idf: idf_table,
            external: None,
        }
    }

    pub fn external(table: ExternalEmbeddings) -> Self {
        Embedder {
            backend: Backend::External,
            num_docs: 0,
            dim: table.dim(),
            vocabulary: BTreeMap::new(),
            idf: Vec::new(),
            external: Some(table),
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn term(&self, term: &str) -> Option<TermStats> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.term(term).map(|s| self.idf[s.id as usize])
    }

    /// Embeds a token sequence. TF-IDF and hashed vectors are L2-normalized
    /// (or the zero vector); external vectors are returned verbatim.
    pub fn embed<F: Scalar, S: AsRef<str>>(&self, tokens: &[S]) -> Result<EmbeddingVector<F>> {
        match self.backend {
            Backend::Tfidf => {
                let mut tf: BTreeMap<u32, usize> = BTreeMap::new();
                for t in tokens {
                    if let Some(stats) = self.vocabulary.get(t.as_ref()) {
                        *tf.entry(stats.id).or_default() += 1;
                    }
                }
                let weights = tf
                    .into_iter()
                    .map(|(id, n)| (id, F::from_f64_lossy(n as f64 * self.idf[id as usize])))
                    .collect();
                Ok(EmbeddingVector::from_sparse(self.dim, weights).normalized())
            }
            Backend::HashedBow => {
                let mask = (self.dim - 1) as u64;
                let mut buckets: BTreeMap<u32, F> = BTreeMap::new();
                for t in tokens {
                    let h = fnv1a64(t.as_ref());
                    let sign = if h >> 63 == 1 { -F::one() } else { F::one() };
                    *buckets.entry((h & mask) as u32).or_insert_with(F::zero) += sign;
                }
                Ok(EmbeddingVector::from_sparse(self.dim, buckets).normalized())
            }
            Backend::External => {
                let key = tokens
                    .iter()
                    .map(AsRef::as_ref)
                    .collect::<Vec<_>>()
                    .join(" ");
                let table = self
                    .external
                    .as_ref()
                    .expect("external backend carries a table");
                let values = table.get(&key).ok_or(Error::MissingEmbedding(key))?;
                let values: Vec<F> = values.iter().map(|&v| F::from_f64_lossy(v)).collect();
                Ok(EmbeddingVector::from_dense(&values))
            }
        }
    }

    pub fn to_state(&self) -> EmbedderState {
        let mut vocabulary: Vec<(String, u32, usize)> = self
            .vocabulary
            .iter()
            .map(|(t, s)| (t.clone(), s.id, s.df))
            .collect();
        vocabulary.sort_by_key(|(_, id, _)| *id);
        EmbedderState {
            backend: self.backend,
            num_docs: self.num_docs,
            dim: self.dim,
            vocabulary,
        }
    }

    /// Rebuilds an embedder from its serialized state. External state needs
    /// the vector table supplied separately.
    pub fn from_state(state: EmbedderState, external: Option<ExternalEmbeddings>) -> Result<Self> {
        match state.backend {
            Backend::Tfidf => {
                let vocabulary = state
                    .vocabulary
                    .into_iter()
                    .map(|(term, id, df)| (term, TermStats { id, df }))
                    .collect::<BTreeMap<_, _>>();
                let mut ids: Vec<u32> = vocabulary.values().map(|s| s.id).collect();
                ids.sort_unstable();
                if ids.iter().enumerate().any(|(i, &id)| id as usize != i) {
                    return Err(Error::InvalidArgument("vocabulary ids must be 0..n".into()));
                }
                Ok(Embedder::from_vocabulary(state.num_docs, vocabulary))
            }
            Backend::HashedBow => fit_embedder(
                Vec::<Vec<String>>::new(),
                Backend::HashedBow,
                Some(state.dim),
            ),
            Backend::External => match external {
                Some(table) if table.dim() == state.dim || state.dim == 0 => {
                    Ok(Embedder::external(table))
                }
                Some(table) => Err(Error::DimensionMismatch {
                    expected: state.dim,
                    actual: table.dim(),
                }),
                None => Err(Error::InvalidArgument(
                    "external embedder state needs its vector table".into(),
                )),
            },
        }
    }
}

/// Serialized embedder: `{backend, num_docs, dim, vocabulary: [[term, id, df], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderState {
    pub backend: Backend,
    pub num_docs: usize,
    pub dim: usize,
    pub vocabulary: Vec<(String, u32, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn two_doc() -> Embedder {
        fit_embedder([toks("a b"), toks("a")], Backend::Tfidf, None).unwrap()
    }

    #[test]
    fn tfidf_document_frequencies() {
        let e = two_doc();
        assert_eq!(e.term("a").unwrap().df, 2);
        assert_eq!(e.term("b").unwrap().df, 1);
        assert!((e.idf_of("b").unwrap() - ((1.5f64).ln() + 1.0)).abs() < 1e-15);
        assert!((e.idf_of("b").unwrap() - 1.405).abs() < 1e-3);
        assert_eq!(e.idf_of("a").unwrap(), 1.0);
    }

    #[test]
    fn tfidf_embedding_hand_values() {
        let e = two_doc();
        let v: EmbeddingVector<f64> = e.embed(&toks("a a b")).unwrap();
        let dense = v.to_dense();
        // unnormalized (2 * 1, 1 * (ln 1.5 + 1))
        let b = 1.5f64.ln() + 1.0;
        let n = (4.0 + b * b).sqrt();
        assert!((dense[0] - 2.0 / n).abs() < 1e-15);
        assert!((dense[1] - b / n).abs() < 1e-15);
        assert!((dense[0] - 0.818).abs() < 1e-3);
        assert!((dense[1] - 0.575).abs() < 1e-3);
    }

    #[test]
    fn empty_and_unseen_give_zero_vector() {
        let e = two_doc();
        let v: EmbeddingVector<f64> = e.embed::<f64, String>(&[]).unwrap();
        assert!(v.is_zero());
        let v: EmbeddingVector<f64> = e.embed(&toks("zzz")).unwrap();
        assert!(v.is_zero());
    }

    #[test]
    fn tfidf_empty_corpus_errors() {
        let r = fit_embedder(Vec::<Vec<String>>::new(), Backend::Tfidf, None);
        assert!(matches!(r, Err(Error::EmptyCorpus)));
    }

    #[test]
    fn tfidf_fit_is_order_independent() {
        let a = fit_embedder([toks("x y"), toks("y z")], Backend::Tfidf, None).unwrap();
        let b = fit_embedder([toks("y z"), toks("x y")], Backend::Tfidf, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hashed_bow_is_stateless() {
        let e = fit_embedder(Vec::<Vec<String>>::new(), Backend::HashedBow, Some(8)).unwrap();
        assert_eq!(e.dim(), 8);
        assert_eq!(e.to_state().vocabulary.len(), 0);
        assert!(fit_embedder(Vec::<Vec<String>>::new(), Backend::HashedBow, Some(12)).is_err());
        let v: EmbeddingVector<f64> = e.embed(&toks("a b c")).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_hand_values() {
        let u = EmbeddingVector::from_dense(&[1.0f64, 0.0]);
        let v = EmbeddingVector::from_dense(&[0.0f64, 1.0]);
        let w = EmbeddingVector::from_dense(&[1.0f64, 1.0]);
        assert_eq!(cosine(&u, &u).unwrap().value, 1.0);
        assert_eq!(cosine(&u, &v).unwrap().value, 0.0);
        assert!((cosine(&w, &u).unwrap().value - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_and_mismatch() {
        let z = EmbeddingVector::<f64>::zeros(2);
        let u = EmbeddingVector::from_dense(&[1.0f64, 0.0]);
        let c = cosine(&z, &u).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.zero_norm);
        let w = EmbeddingVector::from_dense(&[1.0f64, 0.0, 0.0]);
        assert!(cosine(&u, &w).is_err());
    }

    #[test]
    fn external_lookup_and_errors() {
        let data = "{\"key\":\"a\",\"vector\":[1,2,3,4]}\n{\"key\":\"b\",\"vector\":[0,1,0,0]}\n";
        let table = read_external_embeddings(data.as_bytes()).unwrap();
        let e = Embedder::external(table);
        let v: EmbeddingVector<f64> = e.embed(&["a"]).unwrap();
        assert_eq!(v.to_dense(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            e.embed::<f64, _>(&["c"]),
            Err(Error::MissingEmbedding(_))
        ));

        let bad = "{\"key\":\"a\",\"vector\":[1,2,3,4]}\n{\"key\":\"b\",\"vector\":[0,1,0,0,5]}\n";
        assert!(matches!(
            read_external_embeddings(bad.as_bytes()),
            Err(Error::ExternalEmbeddings { line: 2, .. })
        ));
    }

    #[test]
    fn state_round_trip() {
        let e = fit_embedder(
            [toks("q r s"), toks("s t"), toks("q")],
            Backend::Tfidf,
            None,
        )
        .unwrap();
        let json = serde_json::to_string(&e.to_state()).unwrap();
        assert!(json.starts_with("{\"backend\":\"tfidf\""));
        let back = Embedder::from_state(serde_json::from_str(&json).unwrap(), None).unwrap();
        assert_eq!(back, e);
    }
}
