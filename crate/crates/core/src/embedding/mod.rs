//! Dense embeddings: the unit-norm vector type, cosine similarity, and the
//! providers that produce vectors from text.

mod cache;
mod hash;
mod service;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::CachedEmbedder;
pub use hash::HashEmbedder;
pub use service::{ServiceEmbedder, ServiceRequest, ServiceResponse};

use crate::error::EmbedError;

const NORM_TOLERANCE: f64 = 1e-6;

/// A finite, unit-norm vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalize `components`. Fails on empty, zero or non-finite input.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self, EmbedError> {
        if components.is_empty() || components.iter().any(|c| !c.is_finite()) {
            return Err(EmbedError::Degenerate);
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::Degenerate);
        }
        for c in &mut components {
            *c /= norm;
        }
        Ok(Self(components))
    }

    /// Wrap components that are already unit-norm, bit for bit.
    pub fn from_unit(components: Vec<f64>) -> Result<Self, EmbedError> {
        if components.is_empty() || components.iter().any(|c| !c.is_finite()) {
            return Err(EmbedError::Degenerate);
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbedError::Degenerate);
        }
        Ok(Self(components))
    }

    /// Standard basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `normalize(keep * self + (1 - keep) * other)`, used when merging duplicates.
    pub fn blend(&self, other: &Embedding, keep: f64) -> Result<Embedding, EmbedError> {
        check_dims(self, other)?;
        let mixed = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| keep * a + (1.0 - keep) * b)
            .collect();
        Embedding::normalized(mixed)
    }
}

impl std::ops::Neg for &Embedding {
    type Output = Embedding;
    fn neg(self) -> Embedding {
        Embedding(self.0.iter().map(|c| -c).collect())
    }
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<(), EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine_sim(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    Ok(dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything that turns text into unit-norm vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderMode {
    DeterministicHash,
    ExternalService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub mode: EmbedderMode,
    /// `host:port` of the embedding service; required in external mode.
    pub endpoint: Option<String>,
    /// Maximum cached text-to-vector entries; 0 disables the cache.
    pub cache_capacity: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dimension: 384,
            mode: EmbedderMode::DeterministicHash,
            endpoint: None,
            cache_capacity: 4096,
            seed: 0x5eed_cafe,
        }
    }
}

impl EmbedderConfig {
    pub fn hashed(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension < 8 {
            return Err(EmbedError::Config(format!(
                "dimension {} is below the minimum of 8",
                self.dimension
            )));
        }
        match (self.mode, &self.endpoint) {
            (EmbedderMode::ExternalService, None) => Err(EmbedError::Config(
                "external-service mode requires an endpoint".into(),
            )),
            (EmbedderMode::DeterministicHash, Some(_)) => Err(EmbedError::Config(
                "an endpoint is only valid in external-service mode".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, EmbedError> {
        self.validate()?;
        let inner: Box<dyn EmbeddingProvider> = match self.mode {
            EmbedderMode::DeterministicHash => {
                Box::new(HashEmbedder::new(self.dimension, self.seed))
            }
            EmbedderMode::ExternalService => Box::new(ServiceEmbedder::new(
                self.endpoint.clone().unwrap_or_default(),
                self.dimension,
            )),
        };
        if self.cache_capacity == 0 {
            return Ok(Arc::from(inner));
        }
        Ok(Arc::new(CachedEmbedder::new(inner, self.cache_capacity)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_identities() {
        let e = HashEmbedder::new(64, 7);
        let v = e.embed("alpine lake").unwrap();
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_sim(&v, &-&v).unwrap() + 1.0).abs() < 1e-12);
        let e1 = Embedding::basis(16, 0);
        let e2 = Embedding::basis(16, 1);
        assert_eq!(cosine_sim(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Embedding::basis(8, 0);
        let b = Embedding::basis(9, 0);
        assert!(matches!(
            cosine_sim(&a, &b),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EmbedderConfig::hashed(4, 0).validate().is_err());
        let ext = EmbedderConfig {
            mode: EmbedderMode::ExternalService,
            ..Default::default()
        };
        assert!(ext.validate().is_err());
        let ext = EmbedderConfig {
            endpoint: Some("127.0.0.1:1".into()),
            ..ext
        };
        assert!(ext.validate().is_ok());
    }

    #[test]
    fn normalization_rejects_degenerate_vectors() {
        assert!(Embedding::normalized(vec![0.0; 4]).is_err());
        assert!(Embedding::normalized(vec![f64::NAN, 1.0]).is_err());
        assert!(Embedding::from_unit(vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(a in "[a-z ]{1,40}", b in "[a-z ]{1,40}") {
            let e = HashEmbedder::new(32, 11);
            if let (Ok(va), Ok(vb)) = (e.embed(&a), e.embed(&b)) {
                let ab = cosine_sim(&va, &vb).unwrap();
                let ba = cosine_sim(&vb, &va).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab.abs() <= 1.0);
            }
        }
    }
}
