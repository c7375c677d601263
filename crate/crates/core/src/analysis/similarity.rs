use serde::{Deserialize, Serialize};

use crate::backbone::ForwardTrace;
use crate::error::{FptError, Result};
use crate::numerics::Matrix;

/// Number of equal-width histogram bins over `[-1, 1]`.
pub const SIMILARITY_BINS: usize = 20;

/// Per-layer token cosine similarity within one sample (or averaged over a
/// batch of samples).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSimilarityProfile {
    /// Mean similarity over distinct unordered token pairs, one per layer.
    pub layer_means: Vec<f64>,
    /// Pair counts per bin, one histogram per layer. Bin `k` covers
    /// `[-1 + k·w, -1 + (k+1)·w)` with the last bin closed at 1.
    pub histograms: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn bin_of(s: f64) -> usize {
    let w = 2.0 / SIMILARITY_BINS as f64;
    (((s + 1.0) / w).floor().max(0.0) as usize).min(SIMILARITY_BINS - 1)
}

fn layer_pairs(m: &Matrix, warnings: &mut Vec<String>, layer: usize) -> (f64, Vec<u64>) {
    let n = m.rows();
    let norms: Vec<f64> = (0..n).map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.contains(&0.0) {
        warnings.push(format!("layer {layer}: zero-norm token; its pairs count as similarity 0"));
    }
    let mut hist = vec![0u64; SIMILARITY_BINS];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            sum += s;
            hist[bin_of(s)] += 1;
        }
    }
    (sum / (n * (n - 1) / 2) as f64, hist)
}

/// Cosine similarity between every distinct pair of tokens in every layer of
/// a forward trace.
pub fn token_similarity(trace: &ForwardTrace) -> Result<TokenSimilarityProfile> {
    let mut warnings = Vec::new();
    let mut layer_means = Vec::with_capacity(trace.layers.len());
    let mut histograms = Vec::with_capacity(trace.layers.len());
    for (l, m) in trace.layers.iter().enumerate() {
        if m.rows() < 2 {
            return Err(FptError::InvalidInput(format!("layer {l} has {} token(s); need at least 2", m.rows())));
        }
        let (mean, hist) = layer_pairs(m, &mut warnings, l);
        layer_means.push(mean);
        histograms.push(hist);
    }
    Ok(TokenSimilarityProfile { layer_means, histograms, warnings })
}

/// Averages per-sample profiles: means are averaged, histograms summed.
pub fn token_similarity_batch(traces: &[ForwardTrace]) -> Result<TokenSimilarityProfile> {
    let first = traces.first().ok_or_else(|| FptError::InvalidInput("no traces given".into()))?;
    let mut acc = token_similarity(first)?;
    for t in &traces[1..] {
        let p = token_similarity(t)?;
        if p.layer_means.len() != acc.layer_means.len() {
            return Err(FptError::Shape("traces have different layer counts".into()));
        }
        for (a, b) in acc.layer_means.iter_mut().zip(&p.layer_means) {
            *a += b;
        }
        for (ha, hb) in acc.histograms.iter_mut().zip(&p.histograms) {
            ha.iter_mut().zip(hb).for_each(|(a, b)| *a += b);
        }
        for w in p.warnings {
            if !acc.warnings.contains(&w) {
                acc.warnings.push(w);
            }
        }
    }
    acc.layer_means.iter_mut().for_each(|m| *m /= traces.len() as f64);
    Ok(acc)
}

impl TokenSimilarityProfile {
    /// `layer,mean,bin_0,…` rows, one per layer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,mean");
        for k in 0..SIMILARITY_BINS {
            s.push_str(&format!(",bin_{k}"));
        }
        s.push('\n');
        for (l, (m, h)) in self.layer_means.iter().zip(&self.histograms).enumerate() {
            s.push_str(&format!("{l},{m}"));
            for c in h {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}
