//! Metric-learning and classification losses.
//!
//! Every loss exists in two forms that must agree: a plain scalar form used
//! by tests and metrics, and a graph form over [`Tensor`]s used by training.
//! The scalar form is the oracle for the graph form.

use std::error::Error;
use std::fmt;

use emofusion_core::Tensor;

/// Default epsilon inside the variance-loss square root.
pub const VARIANCE_EPS: f64 = 1e-4;
/// Probabilities are floored here before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Euclidean distances among an (anchor, positive, negative) triple. With
/// unit-normalized representations each lies in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletDistances {
    pub d_ap: f64,
    pub d_an: f64,
    pub d_pn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginComponents {
    pub m_sim: f64,
    pub m_dissim: f64,
    pub m_am: f64,
}

/// `N x d` batch of representations plus the variance epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBatch {
    pub z: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
}

impl RepresentationBatch {
    pub fn new(z: Vec<f64>, n: usize, d: usize) -> RepresentationBatch {
        assert!(
            z.len() == n * d,
            "batch data length {} does not match {n}x{d}",
            z.len()
        );
        RepresentationBatch {
            z,
            n,
            d,
            eps: VARIANCE_EPS,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> RepresentationBatch {
        assert!(!rows.is_empty(), "batch needs at least one row");
        let d = rows[0].len();
        let mut z = Vec::with_capacity(rows.len() * d);
        for r in rows {
            assert!(r.len() == d, "ragged row of length {} in {d}-dim batch", r.len());
            z.extend_from_slice(r);
        }
        RepresentationBatch::new(z, rows.len(), d)
    }

    pub fn with_eps(mut self, eps: f64) -> RepresentationBatch {
        self.eps = eps;
        self
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.z[i * self.d + j])
    }
}

/// Weights of the combined extractor objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractorLossConfig {
    pub lambda_amt: f64,
    pub lambda_cov: f64,
    pub lambda_var: f64,
}

impl Default for ExtractorLossConfig {
    fn default() -> ExtractorLossConfig {
        ExtractorLossConfig {
            lambda_amt: 20.0,
            lambda_cov: 5.0,
            lambda_var: 1.0,
        }
    }
}

/// Off-diagonal treatment in the covariance loss. The squared form is the
/// default; the raw signed sum is kept only for comparison runs since it is
/// unbounded below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceForm {
    #[default]
    SquaredOffDiagonal,
    RawOffDiagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    /// Variance and covariance need at least two rows.
    BatchTooSmall(usize),
    InconsistentBatch(String),
    LabelOutOfRange { label: usize, classes: usize },
    BadProbShape { len: usize, classes: usize },
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossError::BatchTooSmall(n) => write!(f, "batch of {n} rows, need at least 2"),
            LossError::InconsistentBatch(msg) => write!(f, "inconsistent batch: {msg}"),
            LossError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} outside [0, {classes})")
            }
            LossError::BadProbShape { len, classes } => {
                write!(f, "{len} probabilities do not tile rows of {classes} classes")
            }
        }
    }
}

impl Error for LossError {}

/// `‖u − v‖₂`.
pub fn pairwise_distance(u: &[f64], v: &[f64]) -> f64 {
    assert!(
        u.len() == v.len(),
        "pairwise_distance: dimension mismatch {} vs {}",
        u.len(),
        v.len()
    );
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Margin that grows when the positive drifts away or the negative creeps
/// close: `m_sim = 1 + 2 e^{-4 d_ap}`, `m_dissim = 1 + 2 e^{4 d_an - 4}`.
pub fn adaptive_margin(d_ap: f64, d_an: f64) -> MarginComponents {
    let m_sim = 1.0 + 2.0 * (-4.0 * d_ap).exp();
    let m_dissim = 1.0 + 2.0 * (4.0 * d_an - 4.0).exp();
    MarginComponents {
        m_sim,
        m_dissim,
        m_am: m_sim + m_dissim,
    }
}

/// Adaptive-margin triplet loss. Deliberately hinge-free: a hinge goes flat
/// once the margin is met, while here every configuration outside a single
/// stationary point keeps a nonzero pull on the distances.
pub fn amt_loss(t: &TripletDistances) -> f64 {
    t.d_ap - (t.d_an + t.d_pn) / 2.0 + adaptive_margin(t.d_ap, t.d_an).m_am
}

fn column_mean_and_var(batch: &RepresentationBatch, j: usize) -> (f64, f64) {
    let mean = batch.column(j).sum::<f64>() / batch.n as f64;
    let var = batch.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (batch.n - 1) as f64;
    (mean, var)
}

/// Mean over dimensions of `1 - sqrt(Var(column) + eps)`, unbiased variance.
/// Pushes every dimension's spread toward 1, the anti-collapse term.
pub fn variance_loss(batch: &RepresentationBatch) -> Result<f64, LossError> {
    if batch.n < 2 {
        return Err(LossError::BatchTooSmall(batch.n));
    }
    let total: f64 = (0..batch.d)
        .map(|j| 1.0 - (column_mean_and_var(batch, j).1 + batch.eps).sqrt())
        .sum();
    Ok(total / batch.d as f64)
}

/// Covariance loss with the default squared off-diagonal form.
pub fn covariance_loss(batch: &RepresentationBatch) -> Result<f64, LossError> {
    covariance_loss_with(batch, CovarianceForm::SquaredOffDiagonal)
}

/// Sum of off-diagonal entries of the unbiased covariance matrix, squared or
/// raw per `form`, divided by the dimension.
pub fn covariance_loss_with(
    batch: &RepresentationBatch,
    form: CovarianceForm,
) -> Result<f64, LossError> {
    if batch.n < 2 {
        return Err(LossError::BatchTooSmall(batch.n));
    }
    let means: Vec<f64> = (0..batch.d)
        .map(|j| batch.column(j).sum::<f64>() / batch.n as f64)
        .collect();
    let mut acc = 0.0;
    for i in 0..batch.d {
        for j in 0..batch.d {
            if i == j {
                continue;
            }
            let mut cov = 0.0;
            for r in 0..batch.n {
                cov += (batch.z[r * batch.d + i] - means[i])
                    * (batch.z[r * batch.d + j] - means[j]);
            }
            cov /= (batch.n - 1) as f64;
            acc += match form {
                CovarianceForm::SquaredOffDiagonal => cov * cov,
                CovarianceForm::RawOffDiagonal => cov,
            };
        }
    }
    Ok(acc / batch.d as f64)
}

/// Weighted extractor objective: mean triplet loss plus the variance and
/// covariance regularizers summed over the anchor, positive and negative
/// batches.
pub fn extractor_loss(
    triplets: &[TripletDistances],
    za: &RepresentationBatch,
    zp: &RepresentationBatch,
    zn: &RepresentationBatch,
    cfg: &ExtractorLossConfig,
) -> Result<f64, LossError> {
    assert!(
        cfg.lambda_amt >= 0.0 && cfg.lambda_cov >= 0.0 && cfg.lambda_var >= 0.0,
        "loss weights must be nonnegative"
    );
    if za.n != zp.n || za.n != zn.n || za.n != triplets.len() {
        return Err(LossError::InconsistentBatch(format!(
            "{} triplets with batches of {}, {}, {} rows",
            triplets.len(),
            za.n,
            zp.n,
            zn.n
        )));
    }
    if triplets.is_empty() {
        return Err(LossError::BatchTooSmall(0));
    }
    let amt = triplets.iter().map(amt_loss).sum::<f64>() / triplets.len() as f64;
    let cov = covariance_loss(za)? + covariance_loss(zp)? + covariance_loss(zn)?;
    let var = variance_loss(za)? + variance_loss(zp)? + variance_loss(zn)?;
    Ok(cfg.lambda_amt * amt + cfg.lambda_cov * cov + cfg.lambda_var * var)
}

/// Mean negative log-probability of the true class over all rows. `probs`
/// is row-major with `classes` entries per row; rows are utterances pooled
/// across the batch's dialogs.
pub fn cross_entropy(probs: &[f64], classes: usize, labels: &[usize]) -> Result<f64, LossError> {
    if classes == 0 || probs.len() != labels.len() * classes {
        return Err(LossError::BadProbShape {
            len: probs.len(),
            classes,
        });
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(LossError::LabelOutOfRange { label, classes });
        }
        total -= probs[i * classes + label].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Row-wise Euclidean distances between two `[n, d]` tensors.
pub fn row_distances_graph(a: &Tensor, b: &Tensor) -> Tensor {
    let diff = a.sub(b);
    diff.mul(&diff).sum_last_axis().sqrt()
}

/// Graph form of the mean adaptive-margin triplet loss over row-aligned
/// anchor/positive/negative batches.
pub fn amt_loss_graph(za: &Tensor, zp: &Tensor, zn: &Tensor) -> Tensor {
    let d_ap = row_distances_graph(za, zp);
    let d_an = row_distances_graph(za, zn);
    let d_pn = row_distances_graph(zp, zn);
    let m_sim = d_ap.mul_scalar(-4.0).exp().mul_scalar(2.0).add_scalar(1.0);
    let m_dissim = d_an
        .mul_scalar(4.0)
        .add_scalar(-4.0)
        .exp()
        .mul_scalar(2.0)
        .add_scalar(1.0);
    d_ap.sub(&d_an.add(&d_pn).mul_scalar(0.5))
        .add(&m_sim)
        .add(&m_dissim)
        .mean()
}

/// Unbiased per-column variance of an `[n, d]` tensor as a `[d]` tensor.
fn column_variance_graph(z: &Tensor) -> Tensor {
    let n = z.shape()[0];
    assert!(n >= 2, "variance needs at least 2 rows, got {n}");
    let zt = z.transpose();
    let means = zt.mean_last_axis();
    let ones = Tensor::from_vec(&[1, n], vec![1.0; n]);
    let centered = zt.sub(&means.reshape(&[z.shape()[1], 1]).matmul(&ones));
    centered
        .mul(&centered)
        .sum_last_axis()
        .mul_scalar(1.0 / (n - 1) as f64)
}

/// Graph form of [`variance_loss`].
pub fn variance_loss_graph(z: &Tensor, eps: f64) -> Tensor {
    column_variance_graph(z)
        .add_scalar(eps)
        .sqrt()
        .neg()
        .add_scalar(1.0)
        .mean()
}

/// Graph form of [`covariance_loss_with`].
pub fn covariance_loss_graph(z: &Tensor, form: CovarianceForm) -> Tensor {
    let (n, d) = (z.shape()[0], z.shape()[1]);
    assert!(n >= 2, "covariance needs at least 2 rows, got {n}");
    let zt = z.transpose();
    let means = zt.mean_last_axis();
    let ones = Tensor::from_vec(&[1, n], vec![1.0; n]);
    let centered = zt.sub(&means.reshape(&[d, 1]).matmul(&ones));
    let cov = centered
        .matmul(&centered.transpose())
        .mul_scalar(1.0 / (n - 1) as f64);
    let diag_picks: Vec<usize> = (0..d).collect();
    let diag = cov.select_per_row(&diag_picks);
    let off_total = match form {
        CovarianceForm::SquaredOffDiagonal => cov.mul(&cov).sum().sub(&diag.mul(&diag).sum()),
        CovarianceForm::RawOffDiagonal => cov.sum().sub(&diag.sum()),
    };
    off_total.mul_scalar(1.0 / d as f64)
}

/// Graph form of [`extractor_loss`] on `[n, d]` representation tensors.
pub fn extractor_loss_graph(
    za: &Tensor,
    zp: &Tensor,
    zn: &Tensor,
    cfg: &ExtractorLossConfig,
    form: CovarianceForm,
    eps: f64,
) -> Tensor {
    let amt = amt_loss_graph(za, zp, zn).mul_scalar(cfg.lambda_amt);
    let cov = covariance_loss_graph(za, form)
        .add(&covariance_loss_graph(zp, form))
        .add(&covariance_loss_graph(zn, form))
        .mul_scalar(cfg.lambda_cov);
    let var = variance_loss_graph(za, eps)
        .add(&variance_loss_graph(zp, eps))
        .add(&variance_loss_graph(zn, eps))
        .mul_scalar(cfg.lambda_var);
    amt.add(&cov).add(&var)
}

/// Graph form of [`cross_entropy`] on `[n, classes]` probabilities.
pub fn cross_entropy_graph(probs: &Tensor, labels: &[usize]) -> Tensor {
    probs
        .select_per_row(labels)
        .clamp_min(PROB_FLOOR)
        .ln()
        .mean()
        .neg()
}
