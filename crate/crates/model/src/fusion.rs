//! Cross-modal fusion: text rows query the other modalities for attention
//! weights, then re-mix themselves under those weights.

use emofusion_core::init::linear_init;
use emofusion_core::Tensor;
use rand_chacha::ChaCha8Rng;

use crate::attention::MultiHeadAttention;
use crate::Dropout;

/// One fusion layer. Each branch scores text rows against one companion
/// modality (keys) while both queries and values stay in text space, so a
/// text row can borrow another text row that the companion modality says is
/// relevant. Branch outputs are concatenated and projected back to text
/// width; that projection output is the next layer's text input.
pub struct FusionLayer {
    branches: Vec<MultiHeadAttention>,
    fc_w: Tensor,
    fc_b: Tensor,
}

impl FusionLayer {
    /// `key_dims` lists the row width of each companion modality, in the
    /// order keys will be passed to [`FusionLayer::forward`].
    pub fn new(d_text: usize, key_dims: &[usize], heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(!key_dims.is_empty(), "fusion needs at least one companion modality");
        let branches = key_dims
            .iter()
            .map(|&dk| MultiHeadAttention::new(d_text, dk, heads, rng))
            .collect();
        let (fc_w, fc_b) = linear_init(key_dims.len() * d_text, d_text, rng);
        FusionLayer { branches, fc_w, fc_b }
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn forward(&self, text: &Tensor, keys: &[&Tensor], drop: &mut Dropout) -> Tensor {
        assert!(
            keys.len() == self.branches.len(),
            "fusion layer built for {} companion modalities, got {}",
            self.branches.len(),
            keys.len()
        );
        let outputs: Vec<Tensor> = self
            .branches
            .iter()
            .zip(keys)
            .map(|(attn, k)| drop.apply(&attn.forward(text, k, text)))
            .collect();
        let refs: Vec<&Tensor> = outputs.iter().collect();
        drop.apply(&Tensor::concat_cols(&refs).linear(&self.fc_w, &self.fc_b))
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, branch) in self.branches.iter().enumerate() {
            branch.params(&format!("{prefix}.branch{i}"), out);
        }
        out.push((format!("{prefix}.fc_w"), self.fc_w.clone()));
        out.push((format!("{prefix}.fc_b"), self.fc_b.clone()));
    }
}

/// A chain of fusion layers. The text slot threads through the chain while
/// the companion keys stay fixed; outputs of every layer are returned so the
/// caller can inspect intermediate fusions.
pub struct FusionStack {
    layers: Vec<FusionLayer>,
}

impl FusionStack {
    pub fn new(
        d_text: usize,
        key_dims: &[usize],
        heads: usize,
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..depth)
            .map(|_| FusionLayer::new(d_text, key_dims, heads, rng))
            .collect();
        FusionStack { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Returns one output per layer; the last entry feeds the classifier.
    pub fn forward(&self, text: &Tensor, keys: &[&Tensor], drop: &mut Dropout) -> Vec<Tensor> {
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = text.clone();
        for layer in &self.layers {
            current = layer.forward(&current, keys, drop);
            outputs.push(current.clone());
        }
        outputs
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.params(&format!("{prefix}.layer{i}"), out);
        }
    }
}
