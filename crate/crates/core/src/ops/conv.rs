use crate::Tensor;

impl Tensor {
    /// 2-D convolution of a single `[C, H, W]` sample with `[OC, C, KH, KW]`
    /// kernels, per-channel bias, the given stride and symmetric zero
    /// padding. Output is `[OC, H', W']` with `H' = (H + 2p - KH)/s + 1`.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
        assert!(
            self.rank() == 3 && weight.rank() == 4,
            "conv2d: expected input [C,H,W] and weight [OC,C,KH,KW], got {:?} and {:?}",
            self.shape(),
            weight.shape()
        );
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (oc, wc, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        assert!(
            c == wc,
            "conv2d: input channels {:?} do not match weight {:?}",
            self.shape(),
            weight.shape()
        );
        assert!(
            bias.shape() == [oc],
            "conv2d: bias {:?} must be [{oc}]",
            bias.shape()
        );
        assert!(stride > 0, "conv2d: stride must be positive");
        assert!(
            h + 2 * pad >= kh && w + 2 * pad >= kw,
            "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        );
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;

        let x = self.data();
        let wt = weight.data();
        let b = bias.data();
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for y0 in 0..oh {
                for x0 in 0..ow {
                    let mut acc = b[o];
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (y0 * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (x0 * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += x[(ci * h + iy as usize) * w + ix as usize]
                                    * wt[((o * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(o * oh + y0) * ow + x0] = acc;
                }
            }
        }
        drop(x);
        drop(wt);
        drop(b);

        Tensor::from_op(
            vec![oc, oh, ow],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].to_vec();
                let wt = parents[1].to_vec();
                let mut dx = vec![0.0; c * h * w];
                let mut dw = vec![0.0; oc * c * kh * kw];
                let mut db = vec![0.0; oc];
                for o in 0..oc {
                    for y0 in 0..oh {
                        for x0 in 0..ow {
                            let go = g[(o * oh + y0) * ow + x0];
                            if go == 0.0 {
                                continue;
                            }
                            db[o] += go;
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let iy = (y0 * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (x0 * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let xi = (ci * h + iy as usize) * w + ix as usize;
                                        let wi = ((o * c + ci) * kh + ky) * kw + kx;
                                        dx[xi] += go * wt[wi];
                                        dw[wi] += go * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
                parents[0].accumulate_grad(&dx);
                parents[1].accumulate_grad(&dw);
                parents[2].accumulate_grad(&db);
            }),
        )
    }
}
