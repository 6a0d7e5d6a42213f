use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;

use super::{Embedding, EmbeddingProvider};
use crate::error::EmbedError;

/// LRU cache in front of another provider. Lookups and inserts are serialized
/// by a mutex; the wrapped provider is called outside the lock.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<LruCache<String, Embedding>>,
}

impl<E: EmbeddingProvider> CachedEmbedder<E> {
    pub fn new(inner: E, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("capacity is at least one");
        Self {
            inner,
            cache: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if let Some(hit) = self
            .cache
            .lock()
            .expect("embedding cache poisoned")
            .get(text)
        {
            return Ok(hit.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .put(text.to_string(), v.clone());
        Ok(v)
    }
}
