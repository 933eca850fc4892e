//! Dense retrieval through an external embedding service, plus a
//! deterministic hashing embedder for offline runs.

use serde::{Deserialize, Serialize};

use super::bm25::tokenize;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Embedding service contract:
/// request `{texts: [..]}` -> `{vectors: [[..], ..], dim}`.
pub trait EmbeddingService: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn id(&self) -> &str;
}

/// HTTP-backed embedding client; endpoint normally resolved from the
/// `EMBED_ENDPOINT` environment variable.
#[cfg(feature = "http")]
pub struct HttpEmbeddingService {
    retriever_id: String,
    endpoint: String,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpEmbeddingService {
    pub fn new(retriever_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            retriever_id: retriever_id.into(),
            endpoint: endpoint.into(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f32>>,
    #[allow(dead_code)]
    dim: usize,
}

#[cfg(feature = "http")]
impl EmbeddingService for HttpEmbeddingService {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let reply: EmbedReply = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::Embedding {
                retriever_id: self.retriever_id.clone(),
                message: e.to_string(),
            })?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Embedding {
                retriever_id: self.retriever_id.clone(),
                message: format!("invalid embedding reply: {e}"),
            })?;
        if reply.vectors.len() != texts.len() {
            return Err(Error::Embedding {
                retriever_id: self.retriever_id.clone(),
                message: format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    reply.vectors.len()
                ),
            });
        }
        Ok(reply.vectors)
    }

    fn id(&self) -> &str {
        &self.retriever_id
    }
}

/// Deterministic feature-hashing embedder for mock-mode runs and tests:
/// each token hashes to a signed bucket, vectors are L2-normalized.
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(2) }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        use sha2::{Digest, Sha256};
        let mut v = vec![0.0f32; self.dim];
        for token in tokenize(text) {
            let digest = Sha256::digest(token.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

impl EmbeddingService for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn id(&self) -> &str {
        "hash"
    }
}

/// Corpus embeddings plus the service used to embed queries.
pub struct DenseIndex {
    service: Box<dyn EmbeddingService>,
    doc_ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

impl DenseIndex {
    /// Embed every corpus document once. Document order follows the corpus.
    pub fn build(corpus: &Corpus, service: Box<dyn EmbeddingService>) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Precondition("cannot index an empty corpus".into()));
        }
        let texts: Vec<String> = corpus.iter().map(|d| d.text.clone()).collect();
        let vectors = service.embed(&texts)?;
        Ok(Self {
            doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
            vectors,
            service,
        })
    }

    pub fn id(&self) -> &str {
        self.service.id()
    }

    /// Exact cosine top-`k`, ties broken by ascending doc_id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query_vec = self
            .service
            .embed(&[query.to_string()])?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Embedding {
                retriever_id: self.service.id().to_string(),
                message: "no query vector returned".into(),
            })?;
        let mut ranked: Vec<(String, f64)> = self
            .doc_ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, vec)| (id.clone(), cosine(&query_vec, vec)))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }
}

/// Cosine similarity; zero vectors score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..n {
        dot += a[i] as f64 * b[i] as f64;
        na += (a[i] as f64).powi(2);
        nb += (b[i] as f64).powi(2);
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document::new("d0", "solar panels convert sunlight"),
            Document::new("d1", "wind turbines harvest moving air"),
            Document::new("d2", "ocean tides drive generators"),
        ])
        .unwrap()
    }

    #[test]
    fn identical_text_has_maximal_cosine() {
        let index = DenseIndex::build(&corpus(), Box::new(HashEmbedder::default())).unwrap();
        let top = index.search("wind turbines harvest moving air", 3).unwrap();
        assert_eq!(top[0].0, "d1");
        assert!((top[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hash_embeddings_are_deterministic() {
        let e = HashEmbedder::default();
        let a = e.embed(&["some query text".to_string()]).unwrap();
        let b = e.embed(&["some query text".to_string()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cosine_of_orthogonal_axes_is_zero() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 1.0]) - 1.0).abs() < 1e-12);
    }
}
