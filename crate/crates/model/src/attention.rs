//! Scaled dot-product attention with multiple heads.

use emofusion_core::init::linear_init;
use emofusion_core::Tensor;
use rand_chacha::ChaCha8Rng;

/// Multi-head attention projecting queries/values from one space and keys
/// from a possibly different one. Query and value inputs share a width so
/// cross-modal use can pass the same carrier tensor for both.
pub struct MultiHeadAttention {
    heads: usize,
    d_model: usize,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
}

impl MultiHeadAttention {
    /// `d_model` is the query/value width and the output width; `d_key` is
    /// the width of the key input rows.
    pub fn new(d_model: usize, d_key: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads >= 1, "attention needs at least one head");
        assert!(
            d_model % heads == 0,
            "model width {d_model} not divisible into {heads} heads"
        );
        let (wq, bq) = linear_init(d_model, d_model, rng);
        let (wk, bk) = linear_init(d_key, d_model, rng);
        let (wv, bv) = linear_init(d_model, d_model, rng);
        let (wo, bo) = linear_init(d_model, d_model, rng);
        MultiHeadAttention {
            heads,
            d_model,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    /// Rows of `queries` attend over rows of `keys`, mixing rows of
    /// `values`. `keys` and `values` must agree on row count.
    pub fn forward(&self, queries: &Tensor, keys: &Tensor, values: &Tensor) -> Tensor {
        assert!(
            keys.shape()[0] == values.shape()[0],
            "attention: {} key rows vs {} value rows",
            keys.shape()[0],
            values.shape()[0]
        );
        let q = queries.linear(&self.wq, &self.bq);
        let k = keys.linear(&self.wk, &self.bk);
        let v = values.linear(&self.wv, &self.bv);

        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice_cols(h * dh, dh);
            let kh = k.slice_cols(h * dh, dh);
            let vh = v.slice_cols(h * dh, dh);
            let weights = qh.matmul(&kh.transpose()).mul_scalar(scale).softmax(1);
            head_outputs.push(weights.matmul(&vh));
        }
        let refs: Vec<&Tensor> = head_outputs.iter().collect();
        Tensor::concat_cols(&refs).linear(&self.wo, &self.bo)
    }

    /// Attention weights of the first head, for inspection only.
    pub fn first_head_weights(&self, queries: &Tensor, keys: &Tensor) -> Tensor {
        let dh = self.d_model / self.heads;
        let qh = queries.linear(&self.wq, &self.bq).slice_cols(0, dh);
        let kh = keys.linear(&self.wk, &self.bk).slice_cols(0, dh);
        qh.matmul(&kh.transpose())
            .mul_scalar(1.0 / (dh as f64).sqrt())
            .softmax(1)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (name, t) in [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}
