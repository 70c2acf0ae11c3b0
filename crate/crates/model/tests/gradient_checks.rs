//! Finite-difference checks through every composite module, catching wiring
//! mistakes that per-op checks cannot see.

use emofusion_core::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
use emofusion_core::Tensor;
use emofusion_model::attention::MultiHeadAttention;
use emofusion_model::dialog::{
    DialogFeatures, DialogModel, FusionKind, ModalitySet, ModelConfig,
};
use emofusion_model::encoder::EncoderBlock;
use emofusion_model::extractor::{extractor_train_step, sample_triplets, Extractor, ExtractorConfig};
use emofusion_model::fusion::FusionLayer;
use emofusion_model::losses::{
    amt_loss_graph, covariance_loss_graph, cross_entropy_graph, extractor_loss_graph,
    variance_loss_graph, CovarianceForm, ExtractorLossConfig, VARIANCE_EPS,
};
use emofusion_model::Dropout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_param(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::param(shape, data)
}

fn random_const(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data)
}

fn assert_pass(module: &str, report: GradCheckReport) {
    assert!(
        report.within(DEFAULT_TOLERANCE),
        "{module}: rel err {:.3e} at param {} element {} (analytic {:.6e}, numeric {:.6e})",
        report.max_rel_err,
        report.param,
        report.element,
        report.analytic,
        report.numeric
    );
}

#[test]
fn attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let attn = MultiHeadAttention::new(4, 3, 2, &mut rng);
    let q = random_param(&[3, 4], &mut rng);
    let k = random_param(&[2, 3], &mut rng);
    let v = random_param(&[2, 4], &mut rng);

    let mut params = vec![q.clone(), k.clone(), v.clone()];
    let mut named = Vec::new();
    attn.params("attn", &mut named);
    params.extend(named.into_iter().map(|(_, p)| p));

    let report = check_gradients(
        &params,
        || {
            let y = attn.forward(&q, &k, &v);
            y.mul(&y).mean()
        },
        DEFAULT_STEP,
    );
    assert_pass("attention", report);
}

#[test]
fn encoder_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let block = EncoderBlock::new(4, 2, Some(6), &mut rng);
    let x = random_param(&[3, 4], &mut rng);

    let mut params = vec![x.clone()];
    let mut named = Vec::new();
    block.params("block", &mut named);
    params.extend(named.into_iter().map(|(_, p)| p));

    let report = check_gradients(
        &params,
        || {
            let y = block.forward(&x, &mut Dropout::Off);
            y.mul(&y).mean()
        },
        DEFAULT_STEP,
    );
    assert_pass("encoder block", report);
}

#[test]
fn fusion_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let layer = FusionLayer::new(4, &[2, 3], 2, &mut rng);
    let text = random_param(&[3, 4], &mut rng);
    let audio = random_param(&[3, 2], &mut rng);
    let visual = random_param(&[3, 3], &mut rng);

    let mut params = vec![text.clone(), audio.clone(), visual.clone()];
    let mut named = Vec::new();
    layer.params("fusion", &mut named);
    params.extend(named.into_iter().map(|(_, p)| p));

    let report = check_gradients(
        &params,
        || {
            let y = layer.forward(&text, &[&audio, &visual], &mut Dropout::Off);
            y.mul(&y).mean()
        },
        DEFAULT_STEP,
    );
    assert_pass("fusion layer", report);
}

#[test]
fn loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let za = random_param(&[4, 3], &mut rng);
    let zp = random_param(&[4, 3], &mut rng);
    let zn = random_param(&[4, 3], &mut rng);
    let params = vec![za.clone(), zp.clone(), zn.clone()];

    assert_pass(
        "amt loss",
        check_gradients(&params, || amt_loss_graph(&za, &zp, &zn), DEFAULT_STEP),
    );
    assert_pass(
        "variance loss",
        check_gradients(&params[..1], || variance_loss_graph(&za, VARIANCE_EPS), DEFAULT_STEP),
    );
    for form in [CovarianceForm::SquaredOffDiagonal, CovarianceForm::RawOffDiagonal] {
        assert_pass(
            "covariance loss",
            check_gradients(&params[..1], || covariance_loss_graph(&za, form), DEFAULT_STEP),
        );
    }
    assert_pass(
        "combined extractor loss",
        check_gradients(
            &params,
            || {
                extractor_loss_graph(
                    &za,
                    &zp,
                    &zn,
                    &ExtractorLossConfig::default(),
                    CovarianceForm::SquaredOffDiagonal,
                    VARIANCE_EPS,
                )
            },
            DEFAULT_STEP,
        ),
    );

    let logits = random_param(&[4, 3], &mut rng);
    assert_pass(
        "cross entropy through softmax",
        check_gradients(
            &[logits.clone()],
            || cross_entropy_graph(&logits.softmax(1), &[0, 2, 1, 0]),
            DEFAULT_STEP,
        ),
    );
}

fn micro_config(fusion: FusionKind) -> ModelConfig {
    ModelConfig {
        d_text: 4,
        d_audio: 2,
        d_visual: 2,
        text_encoders: 1,
        audio_encoders: 1,
        visual_encoders: 1,
        fusion_layers: 2,
        heads: 2,
        ff_hidden: Some(6),
        dropout: 0.0,
        n_classes: 3,
        positional_encoding: false,
        fusion,
        modalities: ModalitySet::default(),
    }
}

fn full_model_report(fusion: FusionKind, seed: u64) -> GradCheckReport {
    let cfg = micro_config(fusion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DialogModel::new(cfg.clone(), &mut rng).unwrap();
    let labels = vec![0usize, 2, 1];
    let dialog = DialogFeatures::new(
        Some(random_const(&[3, 4], &mut rng)),
        Some(random_const(&[3, 2], &mut rng)),
        Some(random_const(&[3, 2], &mut rng)),
        labels.clone(),
    )
    .unwrap();
    let params: Vec<Tensor> = model.params().into_iter().map(|(_, p)| p).collect();
    check_gradients(
        &params,
        || {
            let state = model.forward(&dialog, &mut Dropout::Off);
            cross_entropy_graph(&state.probs, &labels)
        },
        DEFAULT_STEP,
    )
}

#[test]
fn full_model_gradients_attention_fusion() {
    assert_pass("dialog model (attention)", full_model_report(FusionKind::Attention, 105));
}

#[test]
fn full_model_gradients_concat_fusion() {
    assert_pass("dialog model (concat)", full_model_report(FusionKind::Concat, 106));
}

#[test]
fn extractor_loss_gradients_through_conv_trunk() {
    let cfg = ExtractorConfig {
        input_shape: [1, 5, 5],
        stage_channels: vec![2],
        representation_dim: 3,
        normalize_output: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let ex = Extractor::new(cfg, &mut rng);
    let inputs: Vec<Tensor> = (0..4)
        .map(|i| {
            let mean = if i < 2 { -0.8 } else { 0.8 };
            let data = (0..25).map(|_| mean + rng.random_range(-0.2..0.2)).collect();
            Tensor::from_vec(&[1, 5, 5], data)
        })
        .collect();
    let triplets = sample_triplets(&[0, 0, 1, 1], 3, &mut rng).unwrap();
    let params: Vec<Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();

    let report = check_gradients(
        &params,
        || {
            let gather = |pick: fn(&emofusion_model::extractor::Triplet) -> usize| {
                triplets.iter().map(|t| &inputs[pick(t)]).collect::<Vec<_>>()
            };
            extractor_loss_graph(
                &ex.represent_batch(&gather(|t| t.anchor)),
                &ex.represent_batch(&gather(|t| t.positive)),
                &ex.represent_batch(&gather(|t| t.negative)),
                &ExtractorLossConfig::default(),
                CovarianceForm::SquaredOffDiagonal,
                VARIANCE_EPS,
            )
        },
        DEFAULT_STEP,
    );
    assert_pass("extractor metric objective", report);
}

#[test]
fn extractor_steps_reduce_metric_loss() {
    let cfg = ExtractorConfig {
        input_shape: [1, 6, 6],
        stage_channels: vec![3],
        representation_dim: 4,
        normalize_output: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let ex = Extractor::new(cfg, &mut rng);
    let inputs: Vec<Tensor> = (0..8)
        .map(|i| {
            let mean = if i < 4 { -1.0 } else { 1.0 };
            let data = (0..36).map(|_| mean + rng.random_range(-0.3..0.3)).collect();
            Tensor::from_vec(&[1, 6, 6], data)
        })
        .collect();
    let labels = [0, 0, 0, 0, 1, 1, 1, 1];
    let params: Vec<Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();
    let mut opt = emofusion_core::optim::AdamW::new(
        emofusion_core::optim::AdamWConfig::new(3e-3, 0.0),
        &params,
    );

    let mut first = None;
    let mut last = 0.0;
    for _ in 0..25 {
        let triplets = sample_triplets(&labels, 6, &mut rng).unwrap();
        last = extractor_train_step(
            &ex,
            &inputs,
            &labels,
            &triplets,
            &ExtractorLossConfig::default(),
            CovarianceForm::SquaredOffDiagonal,
            &mut opt,
        )
        .unwrap();
        first.get_or_insert(last);
    }
    let first = first.unwrap();
    assert!(
        last < first,
        "metric loss should fall: started {first:.4}, ended {last:.4}"
    );
}
