//! Card text encoding and dataset similarity.
//!
//! The built-in embedder (`hash-v1`) is a 256-bucket hashed bag of tokens:
//! each lowercase alphanumeric token adds one to bucket
//! `FNV-1a-64(token) mod 256`, and the counts are L2-normalized. Integer
//! hashing and a fixed accumulation order make it bit-identical across
//! platforms.

use std::time::Duration;

use thiserror::Error;

use crate::cards::{DataCard, LabelSpace};

pub const EMBEDDING_DIM: usize = 256;
pub const EMBED_URL_ENV: &str = "AUTOMLGPT_EMBED_URL";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("embedding endpoint failed: {0}")]
    Endpoint(String),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn bucket_of(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % EMBEDDING_DIM as u64) as usize
}

/// A vector that is either unit length or all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes `raw`; a zero (or non-finite) vector becomes all zeros.
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Embedding {
                values: vec![0.0; raw.len()],
            };
        }
        Embedding {
            values: raw.into_iter().map(|x| x / norm).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|x| *x == 0.0)
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Embedding, EncoderError>;
}

pub fn embed_hash_v1(text: &str) -> Embedding {
    let mut counts = vec![0.0f64; EMBEDDING_DIM];
    for token in tokenize(text) {
        counts[bucket_of(&token)] += 1.0;
    }
    Embedding::from_raw(counts)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        "hash-v1"
    }

    fn embed(&self, text: &str) -> Result<Embedding, EncoderError> {
        Ok(embed_hash_v1(text))
    }
}

/// Client for an external embedding endpoint:
/// `POST {"input": text}` → `{"embedding": [f64]}`.
pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>) -> Result<Self, EncoderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| EncoderError::Endpoint(e.to_string()))?;
        Ok(HttpEmbedder {
            url: url.into(),
            client,
        })
    }

    pub fn from_env() -> Option<Result<Self, EncoderError>> {
        std::env::var(EMBED_URL_ENV).ok().map(HttpEmbedder::new)
    }
}

/// The external embedder when its URL is configured, otherwise the built-in
/// hash embedder.
pub fn embedder_from_env() -> Result<Box<dyn Embedder>, EncoderError> {
    match HttpEmbedder::from_env() {
        Some(e) => Ok(Box::new(e?)),
        None => Ok(Box::new(HashEmbedder)),
    }
}

#[derive(serde::Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.url
    }

    fn embed(&self, text: &str) -> Result<Embedding, EncoderError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "input": text }))
            .send()
            .map_err(|e| EncoderError::Endpoint(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EncoderError::Endpoint(format!("status {}", resp.status())));
        }
        let body: EmbedResponse = resp.json().map_err(|e| EncoderError::Endpoint(e.to_string()))?;
        Ok(Embedding::from_raw(body.embedding))
    }
}

/// `scale task_description sorted-labels input_type`, single-space joined;
/// absent scale is omitted.
pub fn card_text(data: &DataCard) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(scale) = data.scale {
        parts.push(scale.to_string());
    }
    if !data.task_description.is_empty() {
        parts.push(data.task_description.clone());
    }
    match &data.label_space {
        LabelSpace::Classes(classes) => {
            let mut sorted = classes.clone();
            sorted.sort();
            parts.extend(sorted);
        }
        LabelSpace::Description(d) => parts.push(d.clone()),
    }
    parts.push(data.input_type.as_str().to_string());
    parts.join(" ")
}

/// Cosine similarity clamped to `[0, 1]`; anything against a zero vector is 0.
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64, EncoderError> {
    if a.dim() != b.dim() {
        return Err(EncoderError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Similarity of two data cards under `embedder`.
pub fn card_similarity(embedder: &dyn Embedder, a: &DataCard, b: &DataCard) -> Result<f64, EncoderError> {
    similarity(&embedder.embed(&card_text(a))?, &embedder.embed(&card_text(b))?)
}
