//! Finite-difference gradient suite: every differentiable building block and
//! the full micro-scale dialog model are checked against central differences.
//! Shared by the `gradcheck` subcommand and the release gate tests.

use std::fmt::Write as _;

use emofusion_core::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
use emofusion_core::Tensor;
use emofusion_model::attention::MultiHeadAttention;
use emofusion_model::dialog::{DialogFeatures, DialogModel, FusionKind, ModalitySet, ModelConfig};
use emofusion_model::encoder::EncoderBlock;
use emofusion_model::extractor::{Extractor, ExtractorConfig};
use emofusion_model::fusion::FusionLayer;
use emofusion_model::losses::{
    amt_loss_graph, covariance_loss_graph, cross_entropy_graph, extractor_loss_graph,
    variance_loss_graph, CovarianceForm, ExtractorLossConfig, VARIANCE_EPS,
};
use emofusion_model::Dropout;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.within(DEFAULT_TOLERANCE)
    }
}

fn rand_param(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform_param(shape, -0.8, 0.8, rng)
}

/// Runs every check and returns one report per block, in a fixed order.
pub fn run_gradient_suite(seed: u64) -> Vec<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let push = |entries: &mut Vec<SuiteEntry>, name, params: Vec<Tensor>, f: Box<dyn Fn() -> Tensor>| {
        let report = check_gradients(&params, move || f(), DEFAULT_STEP);
        entries.push(SuiteEntry { name, report });
    };

    // Smooth elementwise chain through exp, ln, sqrt and gelu.
    {
        let a = rand_param(&[2, 3], &mut rng);
        let p = a.clone();
        push(
            &mut entries,
            "elementwise chain",
            vec![a],
            Box::new(move || {
                p.mul(&p)
                    .add_scalar(1.0)
                    .ln()
                    .exp()
                    .sqrt()
                    .gelu()
                    .mean()
            }),
        );
    }

    // Reductions and the frame-axis max pool.
    {
        let x = rand_param(&[3, 4, 5], &mut rng);
        let p = x.clone();
        push(
            &mut entries,
            "reduction stack",
            vec![x],
            Box::new(move || {
                let pooled = p.max_pool_over_axis(1);
                let rows = pooled.sum_last_axis();
                rows.mul(&rows).mean()
            }),
        );
    }

    // Shape plumbing: reshape, transpose, slicing, stacking and row gathers.
    {
        let x = rand_param(&[2, 6], &mut rng);
        let p = x.clone();
        push(
            &mut entries,
            "shape plumbing",
            vec![x],
            Box::new(move || {
                let t = p.reshape(&[3, 4]).transpose();
                let left = t.slice_cols(0, 2);
                let right = t.slice_cols(1, 2);
                let glued = Tensor::concat_cols(&[&left, &right]);
                let stacked = Tensor::stack_rows(&[&glued.row(0), &glued.row(2)]);
                stacked.select_per_row(&[1, 3]).mul(&stacked.select_per_row(&[0, 2])).sum()
            }),
        );
    }

    // Row broadcasts, powers, and rectification away from the kink.
    {
        let x = rand_param(&[3, 4], &mut rng);
        let b = rand_param(&[4], &mut rng);
        let s = rand_param(&[3], &mut rng);
        let (px, pb, ps) = (x.clone(), b.clone(), s.clone());
        push(
            &mut entries,
            "broadcast and power",
            vec![x, b, s],
            Box::new(move || {
                px.add_row_broadcast(&pb)
                    .mul_row_scalar(&ps)
                    .add_scalar(3.0)
                    .relu()
                    .clamp_min(0.1)
                    .powf(2.5)
                    .sub(&px)
                    .mean()
            }),
        );
    }

    // Affine map into a row softmax, read out through a label gather.
    {
        let x = rand_param(&[3, 4], &mut rng);
        let w = rand_param(&[4, 5], &mut rng);
        let b = rand_param(&[5], &mut rng);
        let (px, pw, pb) = (x.clone(), w.clone(), b.clone());
        push(
            &mut entries,
            "linear softmax cross entropy",
            vec![x, w, b],
            Box::new(move || {
                let probs = px.linear(&pw, &pb).softmax(1);
                cross_entropy_graph(&probs, &[0, 3, 2])
            }),
        );
    }

    // Layer normalization with learned gain and bias.
    {
        let x = rand_param(&[4, 6], &mut rng);
        let gain = rand_param(&[6], &mut rng);
        let bias = rand_param(&[6], &mut rng);
        let (px, pg, pb) = (x.clone(), gain.clone(), bias.clone());
        push(
            &mut entries,
            "layer norm",
            vec![x, gain, bias],
            Box::new(move || px.layer_norm(&pg, &pb, 1e-5).mul(&px).mean()),
        );
    }

    // Strided convolution feeding a smooth nonlinearity.
    {
        let x = rand_param(&[2, 5, 5], &mut rng);
        let w = rand_param(&[3, 2, 3, 3], &mut rng);
        let b = rand_param(&[3], &mut rng);
        let (px, pw, pb) = (x.clone(), w.clone(), b.clone());
        push(
            &mut entries,
            "conv2d",
            vec![x, w, b],
            Box::new(move || px.conv2d(&pw, &pb, 2, 1).gelu().mean()),
        );
    }

    // Metric and regularization losses over row batches.
    {
        let za = rand_param(&[4, 5], &mut rng);
        let zp = rand_param(&[4, 5], &mut rng);
        let zn = rand_param(&[4, 5], &mut rng);
        let (a, p, n) = (za.clone(), zp.clone(), zn.clone());
        push(
            &mut entries,
            "adaptive margin triplet loss",
            vec![za.clone(), zp.clone(), zn.clone()],
            Box::new(move || amt_loss_graph(&a, &p, &n)),
        );

        let v = za.clone();
        push(
            &mut entries,
            "variance loss",
            vec![za.clone()],
            Box::new(move || variance_loss_graph(&v, VARIANCE_EPS)),
        );

        let c = za.clone();
        push(
            &mut entries,
            "covariance loss (squared)",
            vec![za.clone()],
            Box::new(move || covariance_loss_graph(&c, CovarianceForm::SquaredOffDiagonal)),
        );

        let c = za.clone();
        push(
            &mut entries,
            "covariance loss (raw)",
            vec![za.clone()],
            Box::new(move || covariance_loss_graph(&c, CovarianceForm::RawOffDiagonal)),
        );

        let (a, p, n) = (za.clone(), zp.clone(), zn.clone());
        push(
            &mut entries,
            "combined representation loss",
            vec![za, zp, zn],
            Box::new(move || {
                extractor_loss_graph(
                    &a,
                    &p,
                    &n,
                    &ExtractorLossConfig::default(),
                    CovarianceForm::SquaredOffDiagonal,
                    VARIANCE_EPS,
                )
            }),
        );
    }

    // Multi-head cross attention, all projections included.
    {
        let attn = MultiHeadAttention::new(6, 4, 2, &mut rng);
        let q = rand_param(&[3, 6], &mut rng);
        let k = rand_param(&[3, 4], &mut rng);
        let v = rand_param(&[3, 6], &mut rng);
        let mut params = vec![q.clone(), k.clone(), v.clone()];
        let mut named = Vec::new();
        attn.params("attn", &mut named);
        params.extend(named.into_iter().map(|(_, t)| t));
        let (pq, pk, pv) = (q, k, v);
        push(
            &mut entries,
            "multi-head attention",
            params,
            Box::new(move || attn.forward(&pq, &pk, &pv).mean()),
        );
    }

    // Encoder block: self attention, feed forward, both layer norms.
    {
        let block = EncoderBlock::new(6, 2, Some(8), &mut rng);
        let x = rand_param(&[4, 6], &mut rng);
        let mut params = vec![x.clone()];
        let mut named = Vec::new();
        block.params("block", &mut named);
        params.extend(named.into_iter().map(|(_, t)| t));
        let px = x;
        push(
            &mut entries,
            "encoder block",
            params,
            Box::new(move || block.forward(&px, &mut Dropout::Off).mean()),
        );
    }

    // Fusion layer with two companion branches.
    {
        let layer = FusionLayer::new(6, &[4, 4], 2, &mut rng);
        let text = rand_param(&[3, 6], &mut rng);
        let ka = rand_param(&[3, 4], &mut rng);
        let kv = rand_param(&[3, 4], &mut rng);
        let mut params = vec![text.clone(), ka.clone(), kv.clone()];
        let mut named = Vec::new();
        layer.params("fusion", &mut named);
        params.extend(named.into_iter().map(|(_, t)| t));
        let (pt, pa, pv) = (text, ka, kv);
        push(
            &mut entries,
            "fusion layer",
            params,
            Box::new(move || layer.forward(&pt, &[&pa, &pv], &mut Dropout::Off).mean()),
        );
    }

    // Full model, both fusion modes: three utterances, four classes.
    for (name, fusion) in [
        ("dialog model (attention fusion)", FusionKind::Attention),
        ("dialog model (concat fusion)", FusionKind::Concat),
    ] {
        let cfg = ModelConfig {
            d_text: 8,
            d_audio: 4,
            d_visual: 4,
            text_encoders: 1,
            audio_encoders: 1,
            visual_encoders: 1,
            fusion_layers: 2,
            heads: 2,
            ff_hidden: Some(6),
            dropout: 0.0,
            n_classes: 4,
            positional_encoding: false,
            fusion,
            modalities: ModalitySet::default(),
        };
        let model = DialogModel::new(cfg, &mut rng).expect("micro config is valid");
        let labels = vec![0usize, 1, 3];
        let dialog = DialogFeatures::new(
            Some(rand_param(&[3, 8], &mut rng)),
            Some(rand_param(&[3, 4], &mut rng)),
            Some(rand_param(&[3, 4], &mut rng)),
            labels.clone(),
        )
        .expect("feature rows align");
        let params: Vec<Tensor> = model.params().into_iter().map(|(_, t)| t).collect();
        push(
            &mut entries,
            name,
            params,
            Box::new(move || {
                let state = model.forward(&dialog, &mut Dropout::Off);
                cross_entropy_graph(&state.probs, &labels)
            }),
        );
    }

    // Extractor trunk under the combined metric loss.
    {
        let cfg = ExtractorConfig {
            input_shape: [1, 5, 5],
            stage_channels: vec![2],
            representation_dim: 3,
            normalize_output: true,
        };
        let extractor = Extractor::new(cfg, &mut rng);
        let inputs: Vec<Tensor> = (0..6).map(|_| rand_param(&[1, 5, 5], &mut rng)).collect();
        let params: Vec<Tensor> = extractor.params().into_iter().map(|(_, t)| t).collect();
        push(
            &mut entries,
            "extractor metric loss",
            params,
            Box::new(move || {
                let gather = |ix: [usize; 2]| {
                    let refs: Vec<&Tensor> = ix.iter().map(|&i| &inputs[i]).collect();
                    extractor.represent_batch(&refs)
                };
                let za = gather([0, 1]);
                let zp = gather([2, 3]);
                let zn = gather([4, 5]);
                extractor_loss_graph(
                    &za,
                    &zp,
                    &zn,
                    &ExtractorLossConfig::default(),
                    CovarianceForm::SquaredOffDiagonal,
                    VARIANCE_EPS,
                )
            }),
        );
    }

    entries
}

pub fn suite_passes(entries: &[SuiteEntry]) -> bool {
    entries.iter().all(SuiteEntry::passed)
}

/// One line per block: PASS/FAIL, worst relative error, elements compared.
pub fn format_suite(entries: &[SuiteEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let verdict = if e.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{verdict} {:<34} max_rel_err {:.3e} over {} elements",
            e.name, e.report.max_rel_err, e.report.checked
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_green_and_covers_the_model() {
        let entries = run_gradient_suite(0);
        assert!(entries.len() >= 12);
        for e in &entries {
            assert!(
                e.passed(),
                "{}: max_rel_err {} (param {}, element {}, analytic {}, numeric {})",
                e.name,
                e.report.max_rel_err,
                e.report.param,
                e.report.element,
                e.report.analytic,
                e.report.numeric
            );
        }
        let text = format_suite(&entries);
        assert_eq!(text.lines().count(), entries.len());
        assert!(text.lines().all(|l| l.starts_with("PASS")));
    }
}
