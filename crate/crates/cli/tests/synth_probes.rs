//! Statistical contracts of the synthetic corpus generator, checked with
//! linear probes: zero separation is indistinguishable from chance and wide
//! separation is linearly separable from any single modality.

mod common;

use common::{single_modality, split_xy, Pick};
use emofusion_cli::probe::{linear_probe_accuracy, ProbeConfig};
use emofusion_cli::synth::{generate_synthetic_corpus, SynthSpec};

fn spec(separation: f64, n_dialogs: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n_dialogs,
        utterances_per_dialog: 6,
        d_text: 12,
        d_audio: 8,
        d_visual: 8,
        classes: 4,
        separation,
        cross_modal_only: false,
        seed,
    }
}

fn concat_modalities(records: &[emofusion_cli::corpus::CorpusRecord]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (text, labels) = single_modality(records, Pick::Text);
    let (audio, _) = single_modality(records, Pick::Audio);
    let (visual, _) = single_modality(records, Pick::Visual);
    let x = text
        .into_iter()
        .zip(audio)
        .zip(visual)
        .map(|((mut t, a), v)| {
            t.extend(a);
            t.extend(v);
            t
        })
        .collect();
    (x, labels)
}

#[test]
fn zero_separation_stays_at_chance() {
    let mut sum = 0.0;
    for seed in 0..5u64 {
        let records = generate_synthetic_corpus(&spec(0.0, 80, seed)).unwrap();
        let (x, y) = concat_modalities(&records);
        let s = split_xy(&x, &y, 0.25, seed);
        sum += linear_probe_accuracy(
            &s.train_x,
            &s.train_y,
            &s.test_x,
            &s.test_y,
            4,
            &ProbeConfig::default(),
        )
        .unwrap();
    }
    let mean = sum / 5.0;
    assert!(
        (mean - 0.25).abs() <= 0.05,
        "mean probe accuracy {mean:.3} should be 1/4 within 5 points"
    );
}

#[test]
fn wide_separation_is_separable_from_any_single_modality() {
    let records = generate_synthetic_corpus(&spec(5.0, 40, 9)).unwrap();
    for (pick, name) in [
        (Pick::Text, "text"),
        (Pick::Audio, "audio"),
        (Pick::Visual, "visual"),
    ] {
        let (x, y) = single_modality(&records, pick);
        let s = split_xy(&x, &y, 0.25, 9);
        let acc = linear_probe_accuracy(
            &s.train_x,
            &s.train_y,
            &s.test_x,
            &s.test_y,
            4,
            &ProbeConfig::default(),
        )
        .unwrap();
        assert!(acc > 0.9, "{name} probe accuracy {acc:.3} at separation 5");
    }
}
