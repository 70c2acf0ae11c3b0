//! Utterance-sequence encoder: self-attention blocks with a stack-level skip.

use emofusion_core::init::{layer_norm_init, linear_init};
use emofusion_core::Tensor;
use rand_chacha::ChaCha8Rng;

use crate::attention::MultiHeadAttention;
use crate::Dropout;

const LAYER_NORM_EPS: f64 = 1e-5;

/// One post-norm transformer block: self-attention and a gelu feed-forward,
/// each wrapped in residual + layer norm.
pub struct EncoderBlock {
    attn: MultiHeadAttention,
    ln1_gain: Tensor,
    ln1_bias: Tensor,
    ln2_gain: Tensor,
    ln2_bias: Tensor,
    ff_w1: Tensor,
    ff_b1: Tensor,
    ff_w2: Tensor,
    ff_b2: Tensor,
}

impl EncoderBlock {
    /// `hidden` is the feed-forward width; pass `None` for the usual 4x.
    pub fn new(dim: usize, heads: usize, hidden: Option<usize>, rng: &mut ChaCha8Rng) -> Self {
        let hidden = hidden.unwrap_or(4 * dim);
        assert!(hidden >= 1, "feed-forward width must be positive");
        let (ln1_gain, ln1_bias) = layer_norm_init(dim);
        let (ln2_gain, ln2_bias) = layer_norm_init(dim);
        let (ff_w1, ff_b1) = linear_init(dim, hidden, rng);
        let (ff_w2, ff_b2) = linear_init(hidden, dim, rng);
        EncoderBlock {
            attn: MultiHeadAttention::new(dim, dim, heads, rng),
            ln1_gain,
            ln1_bias,
            ln2_gain,
            ln2_bias,
            ff_w1,
            ff_b1,
            ff_w2,
            ff_b2,
        }
    }

    pub fn forward(&self, x: &Tensor, drop: &mut Dropout) -> Tensor {
        let attended = drop.apply(&self.attn.forward(x, x, x));
        let h = x
            .add(&attended)
            .layer_norm(&self.ln1_gain, &self.ln1_bias, LAYER_NORM_EPS);
        let ff = drop.apply(
            &h.linear(&self.ff_w1, &self.ff_b1)
                .gelu()
                .linear(&self.ff_w2, &self.ff_b2),
        );
        h.add(&ff)
            .layer_norm(&self.ln2_gain, &self.ln2_bias, LAYER_NORM_EPS)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.attn.params(&format!("{prefix}.attn"), out);
        for (name, t) in [
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
            ("ff_w1", &self.ff_w1),
            ("ff_b1", &self.ff_b1),
            ("ff_w2", &self.ff_w2),
            ("ff_b2", &self.ff_b2),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}

/// A pile of [`EncoderBlock`]s where every block's output is added back onto
/// its input, so even a deep stack starts close to the identity map.
pub struct EncoderStack {
    blocks: Vec<EncoderBlock>,
}

impl EncoderStack {
    pub fn new(
        dim: usize,
        heads: usize,
        depth: usize,
        hidden: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let blocks = (0..depth)
            .map(|_| EncoderBlock::new(dim, heads, hidden, rng))
            .collect();
        EncoderStack { blocks }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn forward(&self, x: &Tensor, drop: &mut Dropout) -> Tensor {
        let mut current = x.clone();
        for block in &self.blocks {
            current = block.forward(&current, drop).add(&current);
        }
        current
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.params(&format!("{prefix}.block{i}"), out);
        }
    }
}

/// Fixed sinusoidal position table for `rows` utterances of width `dim`:
/// even columns sine, odd columns cosine, geometric frequency ladder.
pub fn positional_encoding(rows: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; rows * dim];
    for pos in 0..rows {
        for j in 0..dim {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
            data[pos * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::from_vec(&[rows, dim], data)
}
