//! Frozen randomly initialized sequence networks over codeword vectors.
//!
//! Both backends draw their parameters once from seeded Gaussians at scale
//! 1/sqrt(d) and never change them afterwards. They consume sequences of
//! d-dimensional codeword vectors and emit one raw d-dimensional output
//! vector (pre-quantization). All arithmetic is 64-bit and deterministic.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::codebook::{CodebookError, VectorCodebook};
use crate::decode::{BackendError, BackendKind, Context, ModelBackend, Response};
use crate::symbol::SymbolId;

/// Box-Muller Gaussian; deterministic given the stream.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| gaussian(rng) * scale).collect()
}

/// y = W x for a row-major (rows x cols) matrix.
pub(crate) fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for j in 0..cols {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
    y
}

fn hash_params(chunks: &[&[f64]]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        for v in *chunk {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Parameters of the recurrent backend: state update
/// `s_t = tanh(W_rec s_{t-1} + W_in x_t + b)`, readout `W_out s_T + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub d: usize,
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub c: Vec<f64>,
}

/// Everything the forward pass computed, kept for backpropagation.
pub struct RnnForward {
    /// Pre-activations per step.
    pub pre: Vec<Vec<f64>>,
    /// States per step (post tanh), s[0] is the first update output.
    pub states: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl RnnParams {
    pub fn seeded(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        RnnParams {
            d,
            w_in: gaussian_matrix(&mut rng, d, d, scale),
            w_rec: gaussian_matrix(&mut rng, d, d, scale),
            b: gaussian_matrix(&mut rng, d, 1, scale),
            w_out: gaussian_matrix(&mut rng, d, d, scale),
            c: gaussian_matrix(&mut rng, d, 1, scale),
        }
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> RnnForward {
        let d = self.d;
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(xs.len());
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(xs.len());
        let mut prev = vec![0.0; d];
        for x in xs {
            let mut pre = matvec(&self.w_rec, &prev, d, d);
            let inx = matvec(&self.w_in, x, d, d);
            for i in 0..d {
                pre[i] += inx[i] + self.b[i];
            }
            let state: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
            pres.push(pre);
            states.push(state.clone());
            prev = state;
        }
        let mut output = matvec(&self.w_out, &prev, d, d);
        for i in 0..d {
            output[i] += self.c[i];
        }
        RnnForward { pre: pres, states, output }
    }

    pub fn param_hash(&self) -> String {
        hash_params(&[&self.w_in, &self.w_rec, &self.b, &self.w_out, &self.c])
    }
}

/// Parameters of the attention backend: one pre-normalization causal
/// self-attention block with an output projection and residual connection;
/// the output is the block's value at the last position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub d: usize,
    pub heads: usize,
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub w_o: Vec<f64>,
}

/// Forward cache for the attention block (queries at the last position only).
pub struct AttnForward {
    /// Normalized inputs per position.
    pub normed: Vec<Vec<f64>>,
    /// Per-position layer-norm statistics (mean, inverse stddev).
    pub ln_stats: Vec<(f64, f64)>,
    /// Keys and values per position, queries at the last position.
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub query: Vec<f64>,
    /// Softmax weights per head over positions.
    pub weights: Vec<Vec<f64>>,
    /// Concatenated head outputs.
    pub mixed: Vec<f64>,
    pub output: Vec<f64>,
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) fn layer_norm(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    (x.iter().map(|v| (v - mean) * inv).collect(), mean, inv)
}

impl AttnParams {
    /// Eight heads when the dimension splits evenly, fewer for tiny d.
    pub fn heads_for(d: usize) -> usize {
        if d % 8 == 0 && d >= 8 {
            8
        } else if d % 4 == 0 && d >= 4 {
            4
        } else if d % 2 == 0 {
            2
        } else {
            1
        }
    }

    pub fn seeded(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        AttnParams {
            d,
            heads: Self::heads_for(d),
            w_q: gaussian_matrix(&mut rng, d, d, scale),
            w_k: gaussian_matrix(&mut rng, d, d, scale),
            w_v: gaussian_matrix(&mut rng, d, d, scale),
            w_o: gaussian_matrix(&mut rng, d, d, scale),
        }
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> AttnForward {
        let d = self.d;
        let heads = self.heads;
        let dh = d / heads;
        let t_last = xs.len() - 1;
        let mut normed = Vec::with_capacity(xs.len());
        let mut ln_stats = Vec::with_capacity(xs.len());
        for x in xs {
            let (n, mean, inv) = layer_norm(x);
            normed.push(n);
            ln_stats.push((mean, inv));
        }
        let keys: Vec<Vec<f64>> = normed.iter().map(|n| matvec(&self.w_k, n, d, d)).collect();
        let values: Vec<Vec<f64>> = normed.iter().map(|n| matvec(&self.w_v, n, d, d)).collect();
        let query = matvec(&self.w_q, &normed[t_last], d, d);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = Vec::with_capacity(heads);
        let mut mixed = vec![0.0; d];
        for h in 0..heads {
            let range = h * dh..(h + 1) * dh;
            let mut scores: Vec<f64> = keys
                .iter()
                .map(|k| {
                    query[range.clone()]
                        .iter()
                        .zip(&k[range.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            for s in scores.iter_mut() {
                *s /= total;
            }
            for (t, w) in scores.iter().enumerate() {
                for (j, slot) in range.clone().enumerate() {
                    mixed[slot] += w * values[t][range.start + j];
                }
            }
            weights.push(scores);
        }
        let proj = matvec(&self.w_o, &mixed, d, d);
        let output: Vec<f64> = xs[t_last].iter().zip(&proj).map(|(x, p)| x + p).collect();
        AttnForward { normed, ln_stats, keys, values, query, weights, mixed, output }
    }

    pub fn param_hash(&self) -> String {
        hash_params(&[&self.w_q, &self.w_k, &self.w_v, &self.w_o])
    }
}

/// Nearest-codeword quantization: the symbol whose codeword minimizes L2
/// distance, ties to the lowest symbol id.
pub fn quantize<'a>(
    vector: &[f64],
    codebook: &'a VectorCodebook,
) -> Result<(SymbolId, &'a [f64]), CodebookError> {
    codebook.nearest(vector).ok_or(CodebookError::EmptyCodebook)
}

fn check_inputs(d: usize, context: &Context) -> Result<Vec<Vec<f64>>, BackendError> {
    let Context::Vectors(xs) = context else {
        return Err(BackendError::Other("vector backend expects codeword vectors".into()));
    };
    if xs.is_empty() {
        return Err(BackendError::Other("empty input sequence".into()));
    }
    for x in *xs {
        if x.len() != d {
            return Err(BackendError::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    Ok(xs.to_vec())
}

/// Frozen random recurrent network backend.
pub struct RandomRecurrentBackend {
    pub params: RnnParams,
    window: usize,
}

impl RandomRecurrentBackend {
    pub fn new(d: usize, seed: u64) -> Self {
        RandomRecurrentBackend { params: RnnParams::seeded(d, seed), window: 64 }
    }

    pub fn param_hash(&self) -> String {
        self.params.param_hash()
    }
}

impl ModelBackend for RandomRecurrentBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Vector
    }
    fn context_window(&self) -> usize {
        self.window
    }
    fn respond(&self, context: &Context) -> Result<Response, BackendError> {
        let xs = check_inputs(self.params.d, context)?;
        Ok(Response::Vector(self.params.forward(&xs).output))
    }
    fn identity(&self) -> String {
        format!("random-rnn(d={})", self.params.d)
    }
}

/// Frozen random attention backend.
pub struct RandomAttentionBackend {
    pub params: AttnParams,
    window: usize,
}

impl RandomAttentionBackend {
    pub fn new(d: usize, seed: u64) -> Self {
        RandomAttentionBackend { params: AttnParams::seeded(d, seed), window: 64 }
    }

    pub fn param_hash(&self) -> String {
        self.params.param_hash()
    }
}

impl ModelBackend for RandomAttentionBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Vector
    }
    fn context_window(&self) -> usize {
        self.window
    }
    fn respond(&self, context: &Context) -> Result<Response, BackendError> {
        let xs = check_inputs(self.params.d, context)?;
        Ok(Response::Vector(self.params.forward(&xs).output))
    }
    fn identity(&self) -> String {
        format!("random-attn(d={},h={})", self.params.d, self.params.heads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn zero_input_zero_bias_gives_zero_output() {
        let mut p = RnnParams::seeded(4, 1);
        p.b = vec![0.0; 4];
        p.c = vec![0.0; 4];
        let out = p.forward(&[vec![0.0; 4]]).output;
        assert!(out.iter().all(|v| *v == 0.0));
        let a = AttnParams::seeded(4, 1);
        let out = a.forward(&[vec![0.0; 4]]).output;
        assert!(out.iter().all(|v| *v == 0.0));
    }

    /// Independent straight-line recomputation of the recurrent formulas.
    fn rnn_reference(p: &RnnParams, xs: &[Vec<f64>]) -> Vec<f64> {
        let d = p.d;
        let mut s = vec![0.0; d];
        for x in xs {
            let mut next = vec![0.0; d];
            for i in 0..d {
                let mut acc = p.b[i];
                for j in 0..d {
                    acc += p.w_rec[i * d + j] * s[j];
                }
                for j in 0..d {
                    acc += p.w_in[i * d + j] * x[j];
                }
                next[i] = acc.tanh();
            }
            s = next;
        }
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut acc = p.c[i];
            for j in 0..d {
                acc += p.w_out[i * d + j] * s[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Independent straight-line recomputation of the attention formulas.
    fn attn_reference(p: &AttnParams, xs: &[Vec<f64>]) -> Vec<f64> {
        let d = p.d;
        let heads = p.heads;
        let dh = d / heads;
        let norm = |x: &[f64]| -> Vec<f64> {
            let mean = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            x.iter().map(|v| (v - mean) * inv).collect()
        };
        let apply = |w: &[f64], x: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|i| (0..d).map(|j| w[i * d + j] * x[j]).sum::<f64>())
                .collect()
        };
        let normed: Vec<Vec<f64>> = xs.iter().map(|x| norm(x)).collect();
        let t = xs.len() - 1;
        let q = apply(&p.w_q, &normed[t]);
        let ks: Vec<Vec<f64>> = normed.iter().map(|n| apply(&p.w_k, n)).collect();
        let vs: Vec<Vec<f64>> = normed.iter().map(|n| apply(&p.w_v, n)).collect();
        let mut mixed = vec![0.0; d];
        for h in 0..heads {
            let lo = h * dh;
            let mut scores: Vec<f64> = (0..xs.len())
                .map(|s| {
                    (0..dh).map(|j| q[lo + j] * ks[s][lo + j]).sum::<f64>() / (dh as f64).sqrt()
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in scores.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in scores.iter_mut() {
                *v /= total;
            }
            for s in 0..xs.len() {
                for j in 0..dh {
                    mixed[lo + j] += scores[s] * vs[s][lo + j];
                }
            }
        }
        let proj = apply(&p.w_o, &mixed);
        (0..d).map(|i| xs[t][i] + proj[i]).collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
    }

    // The reference sums in a different association order, so agreement is
    // checked to twelve digits rather than bit for bit.
    #[test]
    fn dual_implementation_agrees() {
        let p = RnnParams::seeded(4, 17);
        let xs = vec![
            vec![0.3, -0.2, 0.7, 0.1],
            vec![-0.5, 0.4, 0.0, 0.9],
            vec![0.2, 0.2, -0.3, -0.8],
        ];
        let got = p.forward(&xs).output;
        let want = rnn_reference(&p, &xs);
        assert!(close(&got, &want), "{got:?} vs {want:?}");

        let a = AttnParams::seeded(4, 17);
        let got = a.forward(&xs).output;
        let want = attn_reference(&a, &xs);
        assert!(close(&got, &want), "{got:?} vs {want:?}");
    }

    #[test]
    fn recurrent_depends_on_order_attention_respects_causality() {
        let p = RnnParams::seeded(6, 3);
        let x1 = vec![vec![0.1; 6], vec![0.9; 6], vec![-0.4; 6]];
        let x2 = vec![vec![0.9; 6], vec![0.1; 6], vec![-0.4; 6]];
        assert_ne!(p.forward(&x1).output, p.forward(&x2).output);

        // Causal mask: the output at position t ignores later positions, so
        // extending the sequence never changes the prefix output.
        let a = AttnParams::seeded(8, 3);
        let xs = vec![vec![0.3; 8], vec![-0.2; 8]];
        let prefix_out = a.forward(&xs[..1]).output;
        let mut extended = xs.clone();
        extended[1] = vec![5.0; 8];
        let prefix_again = a.forward(&extended[..1]).output;
        assert_eq!(prefix_out, prefix_again);
    }

    #[test]
    fn quantize_matches_exhaustive_scan() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 4;
        let mut entries = BTreeMap::new();
        for i in 0..12u32 {
            entries.insert(SymbolId(i), (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let book = VectorCodebook::new(entries, SymbolId(0)).unwrap();
        for _ in 0..1000 {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (got, _) = quantize(&v, &book).unwrap();
            // Independent scan, highest id first with strict improvement.
            let mut best = None;
            for (sym, cw) in book.entries().iter().rev() {
                let dist: f64 = cw.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                best = match best {
                    None => Some((*sym, dist)),
                    Some((_, bd)) if dist <= bd => Some((*sym, dist)),
                    keep => keep,
                };
            }
            assert_eq!(got, best.unwrap().0);
        }
    }

    #[test]
    fn quantize_is_identity_on_codewords_with_tie_rule() {
        let mut entries = BTreeMap::new();
        entries.insert(SymbolId(0), vec![0.0, 0.0]);
        entries.insert(SymbolId(1), vec![1.0, 1.0]);
        entries.insert(SymbolId(2), vec![1.0, 1.0]);
        let book = VectorCodebook::new(entries, SymbolId(0)).unwrap();
        assert_eq!(quantize(&[1.0, 1.0], &book).unwrap().0, SymbolId(1));
        assert_eq!(quantize(&[0.0, 0.0], &book).unwrap().0, SymbolId(0));
    }

    #[test]
    fn params_are_frozen_across_calls() {
        let backend = RandomRecurrentBackend::new(8, 42);
        let before = backend.param_hash();
        for _ in 0..5 {
            let _ = backend
                .respond(&Context::Vectors(&[vec![0.5; 8], vec![-0.5; 8]]))
                .unwrap();
        }
        assert_eq!(backend.param_hash(), before);
        let same_seed = RandomRecurrentBackend::new(8, 42);
        assert_eq!(same_seed.param_hash(), before);
        let other_seed = RandomRecurrentBackend::new(8, 43);
        assert_ne!(other_seed.param_hash(), before);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let backend = RandomAttentionBackend::new(8, 1);
        let err = backend.respond(&Context::Vectors(&[vec![0.0; 4]])).unwrap_err();
        assert!(matches!(err, BackendError::DimensionMismatch { expected: 8, got: 4 }));
    }
}
