use super::lane_extents;
use crate::Tensor;

impl Tensor {
    /// Sum over all elements, producing a rank-0 tensor.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate_grad(&vec![g[0]; n]);
            }),
        )
    }

    /// Mean over all elements, producing a rank-0 tensor.
    pub fn mean(&self) -> Tensor {
        assert!(self.len() > 0, "mean of an empty tensor");
        self.sum().mul_scalar(1.0 / self.len() as f64)
    }

    /// Sum along the last axis; the result drops that axis.
    pub fn sum_last_axis(&self) -> Tensor {
        assert!(
            self.rank() >= 1,
            "sum_last_axis: rank-0 tensor has no axis to reduce"
        );
        let d = *self.shape().last().unwrap();
        assert!(d > 0, "sum_last_axis: empty last axis in {:?}", self.shape());
        let lanes = self.len() / d;
        let x = self.data();
        let out: Vec<f64> = (0..lanes)
            .map(|l| x[l * d..(l + 1) * d].iter().sum())
            .collect();
        drop(x);
        Tensor::from_op(
            self.shape()[..self.rank() - 1].to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; lanes * d];
                for l in 0..lanes {
                    dx[l * d..(l + 1) * d].fill(g[l]);
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Mean along the last axis; the result drops that axis.
    pub fn mean_last_axis(&self) -> Tensor {
        let d = *self
            .shape()
            .last()
            .expect("mean_last_axis: rank-0 tensor has no axis to reduce");
        assert!(d > 0, "mean_last_axis: empty last axis in {:?}", self.shape());
        self.sum_last_axis().mul_scalar(1.0 / d as f64)
    }

    /// Maximum along `axis`; the result drops that axis. Ties route the
    /// gradient to the first maximal element of each lane.
    pub fn max_pool_over_axis(&self, axis: usize) -> Tensor {
        let (outer, len, inner) = lane_extents(self.shape(), axis);
        assert!(
            len > 0,
            "max_pool_over_axis: empty axis {axis} in {:?}",
            self.shape()
        );
        let x = self.data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    let v = x[(o * len + l) * inner + i];
                    let slot = o * inner + i;
                    if v > out[slot] {
                        out[slot] = v;
                        argmax[slot] = l;
                    }
                }
            }
        }
        drop(x);
        let mut new_shape = self.shape().to_vec();
        new_shape.remove(axis);
        Tensor::from_op(
            new_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        dx[(o * len + argmax[slot]) * inner + i] = g[slot];
                    }
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }
}
