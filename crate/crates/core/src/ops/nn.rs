use rand::Rng;

use super::lane_extents;
use crate::Tensor;

impl Tensor {
    /// Softmax along `axis`, stabilized by max subtraction per lane.
    pub fn softmax(&self, axis: usize) -> Tensor {
        let (outer, len, inner) = lane_extents(self.shape(), axis);
        assert!(len > 0, "softmax: empty axis {axis} in {:?}", self.shape());
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mut hi = f64::NEG_INFINITY;
                for l in 0..len {
                    hi = hi.max(x[at(l)]);
                }
                let mut z = 0.0;
                for l in 0..len {
                    let e = (x[at(l)] - hi).exp();
                    out[at(l)] = e;
                    z += e;
                }
                for l in 0..len {
                    out[at(l)] /= z;
                }
            }
        }
        drop(x);
        let saved = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; saved.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let mut dot = 0.0;
                        for l in 0..len {
                            dot += g[at(l)] * saved[at(l)];
                        }
                        for l in 0..len {
                            dx[at(l)] = saved[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Normalizes the last axis to zero mean and unit variance (biased
    /// variance plus `eps`), then applies a learned per-feature affine map.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
        let d = *self
            .shape()
            .last()
            .expect("layer_norm: rank-0 tensor has no feature axis");
        assert!(d > 0, "layer_norm: empty feature axis in {:?}", self.shape());
        assert!(
            gain.shape() == [d] && bias.shape() == [d],
            "layer_norm: gain {:?} and bias {:?} must both be [{d}]",
            gain.shape(),
            bias.shape()
        );
        let lanes = self.len() / d;
        let x = self.data();
        let gm = gain.data();
        let bm = bias.data();
        let mut out = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; lanes];
        for l in 0..lanes {
            let row = &x[l * d..(l + 1) * d];
            let mu: f64 = row.iter().sum::<f64>() / d as f64;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[l] = istd;
            for j in 0..d {
                let h = (row[j] - mu) * istd;
                xhat[l * d + j] = h;
                out[l * d + j] = gm[j] * h + bm[j];
            }
        }
        drop(x);
        drop(gm);
        drop(bm);
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let gm = parents[1].to_vec();
                let mut dx = vec![0.0; lanes * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for l in 0..lanes {
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..d {
                        let idx = l * d + j;
                        let dh = g[idx] * gm[j];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[idx];
                        dgain[j] += g[idx] * xhat[idx];
                        dbias[j] += g[idx];
                    }
                    mean_dh /= d as f64;
                    mean_dh_h /= d as f64;
                    for j in 0..d {
                        let idx = l * d + j;
                        let dh = g[idx] * gm[j];
                        dx[idx] = inv_std[l] * (dh - mean_dh - xhat[idx] * mean_dh_h);
                    }
                }
                parents[0].accumulate_grad(&dx);
                parents[1].accumulate_grad(&dgain);
                parents[2].accumulate_grad(&dbias);
            }),
        )
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales survivors by `1 / (1 - rate)`, so the expectation is
    /// unchanged. `rate` 0 is the identity.
    pub fn dropout<R: Rng>(&self, rate: f64, rng: &mut R) -> Tensor {
        assert!(
            (0.0..1.0).contains(&rate),
            "dropout: rate {rate} outside [0, 1)"
        );
        if rate == 0.0 {
            return Tensor::from_op(
                self.shape().to_vec(),
                self.to_vec(),
                vec![self.clone()],
                Box::new(|g, parents| parents[0].accumulate_grad(g)),
            );
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let out: Vec<f64> = self.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let dx: Vec<f64> = g.iter().zip(&mask).map(|(gi, m)| gi * m).collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Scales rows of a 2-D tensor to unit Euclidean norm. Panics on a zero
    /// row since the direction would be undefined.
    pub fn l2_normalize_rows(&self) -> Tensor {
        assert!(
            self.rank() == 2,
            "l2_normalize_rows: expected rank 2, got shape {:?}",
            self.shape()
        );
        let norms_sq = self.mul(self).sum_last_axis();
        assert!(
            norms_sq.data().iter().all(|&v| v > 0.0),
            "l2_normalize_rows: zero-norm row"
        );
        self.mul_row_scalar(&norms_sq.powf(-0.5))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::Tensor;

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let y = x.softmax(1);
        let d = y.to_vec();
        assert!((d[0..3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((d[3..6].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(d[2] > d[1] && d[1] > d[0]);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]);
        let shifted = x.add_scalar(500.0);
        let a = x.softmax(0).to_vec();
        let b = shifted.softmax(0).to_vec();
        for (ai, bi) in a.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_large_magnitudes() {
        let x = Tensor::from_vec(&[2], vec![1000.0, -1000.0]);
        let y = x.softmax(0).to_vec();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
    }

    #[test]
    fn layer_norm_centers_and_scales() {
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let gain = Tensor::from_vec(&[4], vec![1.0; 4]);
        let bias = Tensor::from_vec(&[4], vec![0.0; 4]);
        let y = x.layer_norm(&gain, &bias, 1e-5).to_vec();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    #[should_panic(expected = "must both be [3]")]
    fn layer_norm_rejects_mismatched_affine() {
        let x = Tensor::zeros(&[2, 3]);
        x.layer_norm(&Tensor::zeros(&[2]), &Tensor::zeros(&[3]), 1e-5);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.dropout(0.0, &mut rng).to_vec(), x.to_vec());
    }

    #[test]
    fn dropout_keeps_expectation_roughly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::full(&[10_000], 1.0);
        let y = x.dropout(0.4, &mut rng);
        let mean = y.to_vec().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean} drifted");
    }

    #[test]
    fn l2_normalize_rows_gives_unit_norm() {
        let x = Tensor::from_vec(&[2, 2], vec![3.0, 4.0, 5.0, 12.0]);
        let y = x.l2_normalize_rows();
        let d = y.to_vec();
        assert!((d[0] - 0.6).abs() < 1e-15);
        assert!((d[1] - 0.8).abs() < 1e-15);
        let n2 = d[2] * d[2] + d[3] * d[3];
        assert!((n2 - 1.0).abs() < 1e-12);
    }
}
