use super::assert_same_shape;
use crate::Tensor;

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Tensor {
        assert_same_shape("add", self, rhs);
        let data = self
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|g, parents| {
                parents[0].accumulate_grad(g);
                parents[1].accumulate_grad(g);
            }),
        )
    }

    pub fn sub(&self, rhs: &Tensor) -> Tensor {
        assert_same_shape("sub", self, rhs);
        let data = self
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|g, parents| {
                parents[0].accumulate_grad(g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                parents[1].accumulate_grad(&neg);
            }),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor) -> Tensor {
        assert_same_shape("mul", self, rhs);
        let data = self
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|g, parents| {
                let a = parents[0].to_vec();
                let b = parents[1].to_vec();
                let da: Vec<f64> = g.iter().zip(&b).map(|(gi, bi)| gi * bi).collect();
                let db: Vec<f64> = g.iter().zip(&a).map(|(gi, ai)| gi * ai).collect();
                parents[0].accumulate_grad(&da);
                parents[1].accumulate_grad(&db);
            }),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|a| a + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| parents[0].accumulate_grad(g)),
        )
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|a| a * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let dx: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|a| a.exp()).collect();
        let saved = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let dx: Vec<f64> = g.iter().zip(&saved).map(|(gi, yi)| gi * yi).collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Natural log. Inputs must be positive; pair with [`Tensor::clamp_min`]
    /// when fed from probabilities.
    pub fn ln(&self) -> Tensor {
        let data = self.data().iter().map(|a| a.ln()).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].to_vec();
                let dx: Vec<f64> = g.iter().zip(&x).map(|(gi, xi)| gi / xi).collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    pub fn sqrt(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|a| a.sqrt()).collect();
        let saved = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&saved)
                    .map(|(gi, yi)| gi * 0.5 / yi)
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    pub fn powf(&self, p: f64) -> Tensor {
        let data = self.data().iter().map(|a| a.powf(p)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&x)
                    .map(|(gi, xi)| gi * p * xi.powf(p - 1.0))
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Gradient at exactly zero takes the inactive branch.
    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|a| a.max(0.0)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&x)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Gaussian error linear unit, tanh form.
    pub fn gelu(&self) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&x| {
                let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&x)
                    .map(|(gi, &xi)| {
                        let u = GELU_SCALE * (xi + GELU_CUBIC * xi * xi * xi);
                        let t = u.tanh();
                        let du = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * xi * xi);
                        gi * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
                    })
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Elementwise `max(x, floor)`. Clamped positions block the gradient.
    pub fn clamp_min(&self, floor: f64) -> Tensor {
        let data = self.data().iter().map(|a| a.max(floor)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&x)
                    .map(|(gi, xi)| if *xi > floor { *gi } else { 0.0 })
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        )
    }
}
