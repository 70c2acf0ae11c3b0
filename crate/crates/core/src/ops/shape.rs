use crate::Tensor;

impl Tensor {
    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, new_shape: &[usize]) -> Tensor {
        let expect: usize = new_shape.iter().product();
        assert!(
            expect == self.len(),
            "reshape: cannot view {:?} as {:?}",
            self.shape(),
            new_shape
        );
        Tensor::from_op(
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, parents| parents[0].accumulate_grad(g)),
        )
    }

    /// Matrix transpose of a 2-D tensor.
    pub fn transpose(&self) -> Tensor {
        assert!(
            self.rank() == 2,
            "transpose: expected rank 2, got shape {:?}",
            self.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        let x = self.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = x[i * m + j];
            }
        }
        drop(x);
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; n * m];
                for j in 0..m {
                    for i in 0..n {
                        dx[i * m + j] = g[j * n + i];
                    }
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Concatenates 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let n = parts[0].shape().first().copied().unwrap_or(0);
        for p in parts {
            assert!(
                p.rank() == 2 && p.shape()[0] == n,
                "concat_cols: expected {n} rows, got shape {:?}",
                p.shape()
            );
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut col = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let src = p.data();
            for i in 0..n {
                out[i * total + col..i * total + col + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            col += w;
        }
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op(
            vec![n, total],
            out,
            parents,
            Box::new(move |g, parents| {
                let mut col = 0;
                for (p, &w) in parents.iter().zip(&widths) {
                    let mut dp = vec![0.0; n * w];
                    for i in 0..n {
                        dp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + col..i * total + col + w]);
                    }
                    p.accumulate_grad(&dp);
                    col += w;
                }
            }),
        )
    }

    /// Column window `[start, start + width)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, width: usize) -> Tensor {
        assert!(
            self.rank() == 2,
            "slice_cols: expected rank 2, got shape {:?}",
            self.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        assert!(
            start + width <= m,
            "slice_cols: window {start}..{} exceeds {m} columns",
            start + width
        );
        let x = self.data();
        let mut out = vec![0.0; n * width];
        for i in 0..n {
            out[i * width..(i + 1) * width]
                .copy_from_slice(&x[i * m + start..i * m + start + width]);
        }
        drop(x);
        Tensor::from_op(
            vec![n, width],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; n * m];
                for i in 0..n {
                    dx[i * m + start..i * m + start + width]
                        .copy_from_slice(&g[i * width..(i + 1) * width]);
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Stacks rank-1 tensors of equal length into a matrix, one per row.
    pub fn stack_rows(rows: &[&Tensor]) -> Tensor {
        assert!(!rows.is_empty(), "stack_rows: no inputs");
        let d = rows[0].len();
        for r in rows {
            assert!(
                r.rank() == 1 && r.len() == d,
                "stack_rows: expected [{d}] rows, got shape {:?}",
                r.shape()
            );
        }
        let n = rows.len();
        let mut out = vec![0.0; n * d];
        for (i, r) in rows.iter().enumerate() {
            out[i * d..(i + 1) * d].copy_from_slice(&r.data());
        }
        let parents: Vec<Tensor> = rows.iter().map(|r| (*r).clone()).collect();
        Tensor::from_op(
            vec![n, d],
            out,
            parents,
            Box::new(move |g, parents| {
                for (i, p) in parents.iter().enumerate() {
                    p.accumulate_grad(&g[i * d..(i + 1) * d]);
                }
            }),
        )
    }

    /// Row `i` of a 2-D tensor as a rank-1 tensor.
    pub fn row(&self, i: usize) -> Tensor {
        assert!(
            self.rank() == 2,
            "row: expected rank 2, got shape {:?}",
            self.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        assert!(i < n, "row: index {i} out of range for {n} rows");
        let out = self.data()[i * m..(i + 1) * m].to_vec();
        Tensor::from_op(
            vec![m],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; n * m];
                dx[i * m..(i + 1) * m].copy_from_slice(g);
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Picks one column per row: `out[i] = x[i, picks[i]]`.
    pub fn select_per_row(&self, picks: &[usize]) -> Tensor {
        assert!(
            self.rank() == 2,
            "select_per_row: expected rank 2, got shape {:?}",
            self.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        assert!(
            picks.len() == n,
            "select_per_row: {} picks for {n} rows",
            picks.len()
        );
        let x = self.data();
        let out: Vec<f64> = picks
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < m, "select_per_row: column {j} out of range for {m}");
                x[i * m + j]
            })
            .collect();
        drop(x);
        let picks = picks.to_vec();
        Tensor::from_op(
            vec![n],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut dx = vec![0.0; n * m];
                for (i, &j) in picks.iter().enumerate() {
                    dx[i * m + j] = g[i];
                }
                parents[0].accumulate_grad(&dx);
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn transpose_round_trip() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = x.transpose();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(t.transpose().to_vec(), x.to_vec());
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(&[2, 1], vec![9.0, 8.0]);
        let c = Tensor::concat_cols(&[&a, &b]);
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        assert_eq!(c.slice_cols(2, 1).to_vec(), vec![9.0, 8.0]);
        assert_eq!(c.slice_cols(0, 2).to_vec(), a.to_vec());
    }

    #[test]
    fn slice_cols_routes_gradient_into_window() {
        let x = Tensor::param(&[2, 3], vec![0.0; 6]);
        x.slice_cols(1, 2).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "cannot view")]
    fn reshape_rejects_wrong_count() {
        Tensor::zeros(&[2, 3]).reshape(&[7]);
    }

    #[test]
    fn select_per_row_picks_and_scatters() {
        let x = Tensor::param(&[2, 3], vec![0.1, 0.7, 0.2, 0.5, 0.3, 0.2]);
        let y = x.select_per_row(&[1, 0]);
        assert_eq!(y.to_vec(), vec![0.7, 0.5]);
        y.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn stack_rows_grad_splits_back() {
        let a = Tensor::param(&[2], vec![1.0, 2.0]);
        let b = Tensor::param(&[2], vec![3.0, 4.0]);
        let m = Tensor::stack_rows(&[&a, &b]);
        assert_eq!(m.shape(), &[2, 2]);
        m.mul_scalar(2.0).sum().backward();
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0]);
    }
}
