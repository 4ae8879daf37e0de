//! Text embedding with a deterministic offline fallback.

use super::provider::ProviderError;
use crate::util::fnv64;

/// Maps text batches to fixed-dimension vectors.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Hashed token-frequency projection: lowercase word tokens hash into a
/// fixed number of signed buckets, then the vector is L2-normalized.
/// Fully deterministic, no network, fixed seed.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self {
            dimension: 256,
            seed: 0x9e3779b97f4a7c15,
        }
    }
}

impl HashedEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self { dimension, seed }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dimension];
        for token in tokenize(text) {
            let mut bytes = self.seed.to_le_bytes().to_vec();
            bytes.extend_from_slice(token.as_bytes());
            let h = fnv64(&bytes);
            let idx = (h % self.dimension as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

impl Embedder for HashedEmbedder {
    fn id(&self) -> String {
        format!("hashed-tf-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Cosine similarity; 0 when either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_embed_identically() {
        let e = HashedEmbedder::default();
        let vs = e.embed(&["a".into(), "a".into()]).unwrap();
        assert_eq!(vs[0], vs[1]);
    }

    #[test]
    fn disjoint_token_inputs_differ() {
        let e = HashedEmbedder::default();
        let vs = e
            .embed(&["risk agent".into(), "geography agent".into()])
            .unwrap();
        assert_ne!(vs[0], vs[1]);
    }

    #[test]
    fn near_synonym_roles_are_closer_than_unrelated_roles() {
        let e = HashedEmbedder::default();
        let vs = e
            .embed(&[
                "network connectivity expert".into(),
                "network connectivity specialist".into(),
                "geographic proximity analyst".into(),
            ])
            .unwrap();
        let near = cosine(&vs[0], &vs[1]);
        let far = cosine(&vs[0], &vs[2]);
        assert!(
            near > far,
            "expected shared-token similarity {near} to exceed {far}"
        );
    }

    #[test]
    fn vectors_are_unit_length_or_zero() {
        let e = HashedEmbedder::default();
        let vs = e.embed(&["some text here".into(), "".into()]).unwrap();
        let norm0: f64 = vs[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm0 - 1.0).abs() < 1e-12);
        assert!(vs[1].iter().all(|&x| x == 0.0));
    }
}
