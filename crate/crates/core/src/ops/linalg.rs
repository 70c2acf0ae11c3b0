use crate::Tensor;

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

impl Tensor {
    /// 2-D matrix product `[n,k] x [k,m] -> [n,m]`.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        assert!(
            self.rank() == 2 && rhs.rank() == 2,
            "matmul: expected two rank-2 tensors, got {:?} and {:?}",
            self.shape(),
            rhs.shape()
        );
        let (n, k) = (self.shape()[0], self.shape()[1]);
        let (k2, m) = (rhs.shape()[0], rhs.shape()[1]);
        assert!(
            k == k2,
            "matmul: inner dimensions disagree, {:?} vs {:?}",
            self.shape(),
            rhs.shape()
        );
        let out = matmul_raw(&self.data(), &rhs.data(), n, k, m);
        Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, parents| {
                let a = parents[0].to_vec();
                let b = parents[1].to_vec();
                // dA = g . B^T computed as dA[i,p] = sum_j g[i,j] B[p,j]
                let mut da = vec![0.0; n * k];
                for i in 0..n {
                    for p in 0..k {
                        let mut acc = 0.0;
                        let grow = &g[i * m..(i + 1) * m];
                        let brow = &b[p * m..(p + 1) * m];
                        for (gv, bv) in grow.iter().zip(brow) {
                            acc += gv * bv;
                        }
                        da[i * k + p] = acc;
                    }
                }
                // dB = A^T . g
                let mut db = vec![0.0; k * m];
                for i in 0..n {
                    for p in 0..k {
                        let aip = a[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let grow = &g[i * m..(i + 1) * m];
                        let drow = &mut db[p * m..(p + 1) * m];
                        for (dv, gv) in drow.iter_mut().zip(grow) {
                            *dv += aip * gv;
                        }
                    }
                }
                parents[0].accumulate_grad(&da);
                parents[1].accumulate_grad(&db);
            }),
        )
    }

    /// Adds a rank-1 bias to every row of a 2-D tensor.
    pub fn add_row_broadcast(&self, bias: &Tensor) -> Tensor {
        assert!(
            self.rank() == 2 && bias.rank() == 1 && self.shape()[1] == bias.len(),
            "add_row_broadcast: shape mismatch {:?} vs {:?}",
            self.shape(),
            bias.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        let b = bias.data();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(idx, v)| v + b[idx % m])
            .collect();
        drop(b);
        Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate_grad(g);
                let mut db = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        db[j] += g[i * m + j];
                    }
                }
                parents[1].accumulate_grad(&db);
            }),
        )
    }

    /// Scales row `i` of a 2-D tensor by `scale[i]`.
    pub fn mul_row_scalar(&self, scale: &Tensor) -> Tensor {
        assert!(
            self.rank() == 2 && scale.rank() == 1 && self.shape()[0] == scale.len(),
            "mul_row_scalar: shape mismatch {:?} vs {:?}",
            self.shape(),
            scale.shape()
        );
        let (n, m) = (self.shape()[0], self.shape()[1]);
        let s = scale.data();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(idx, v)| v * s[idx / m])
            .collect();
        drop(s);
        Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone(), scale.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].to_vec();
                let s = parents[1].to_vec();
                let mut dx = vec![0.0; n * m];
                let mut ds = vec![0.0; n];
                for i in 0..n {
                    for j in 0..m {
                        dx[i * m + j] = g[i * m + j] * s[i];
                        ds[i] += g[i * m + j] * x[i * m + j];
                    }
                }
                parents[0].accumulate_grad(&dx);
                parents[1].accumulate_grad(&ds);
            }),
        )
    }

    /// Affine map `x . w + b` for `x [n,in]`, `w [in,out]`, `b [out]`.
    pub fn linear(&self, weight: &Tensor, bias: &Tensor) -> Tensor {
        self.matmul(weight).add_row_broadcast(bias)
    }
}
