//! Deterministic character-n-gram hashing embedder. No external model; good
//! enough to rank component names against a requirement.

use super::Embedder;
use crate::hashutil::fnv1a64;

#[derive(Debug, Clone, Copy)]
pub struct NgramEmbedder {
    pub dim: usize,
    pub n: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { dim: 64, n: 3 }
    }
}

impl Embedder for NgramEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dim];
        if chars.is_empty() {
            return v;
        }
        let windows: Vec<String> = if chars.len() < self.n {
            vec![chars.iter().collect()]
        } else {
            chars.windows(self.n).map(|w| w.iter().collect()).collect()
        };
        for gram in windows {
            let bucket = (fnv1a64(gram.as_bytes()) % self.dim as u64) as usize;
            v[bucket] += 1.0;
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

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}
