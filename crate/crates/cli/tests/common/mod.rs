#![allow(dead_code)]

use std::path::PathBuf;

use emofusion_cli::corpus::{AudioField, Corpus, CorpusRecord, FramesField};
use emofusion_cli::train::seeded_split;

#[derive(Clone, Copy)]
pub enum Pick {
    Text,
    Audio,
    Visual,
}

/// Pulls one modality's feature vectors out of a synthetic corpus, paired
/// with utterance labels.
pub fn single_modality(records: &[CorpusRecord], pick: Pick) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records {
        for u in &r.utterances {
            let x = match pick {
                Pick::Text => u.text_embedding.clone(),
                Pick::Audio => match &u.audio {
                    AudioField::Features(f) => f.clone(),
                    AudioField::Wav { .. } => panic!("synthetic corpora carry feature audio"),
                },
                Pick::Visual => match &u.frames {
                    Some(FramesField::Features(f)) => f.clone(),
                    _ => panic!("synthetic corpora carry feature frames"),
                },
            };
            xs.push(x);
            ys.push(u.label);
        }
    }
    (xs, ys)
}

pub struct SplitXY {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<usize>,
}

pub fn split_xy(xs: &[Vec<f64>], ys: &[usize], holdout: f64, seed: u64) -> SplitXY {
    let (train, test) = seeded_split(xs.len(), holdout, seed);
    let take = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            ix.iter().map(|&i| xs[i].clone()).collect(),
            ix.iter().map(|&i| ys[i]).collect(),
        )
    };
    let (train_x, train_y) = take(&train);
    let (test_x, test_y) = take(&test);
    SplitXY {
        train_x,
        train_y,
        test_x,
        test_y,
    }
}

/// Splits whole dialogs before pooling utterances, so per-dialog artifacts
/// cannot leak between the probe's train and test sets.
pub fn dialog_split_features(
    records: &[CorpusRecord],
    pick: Pick,
    holdout: f64,
    seed: u64,
) -> SplitXY {
    let (train, test) = seeded_split(records.len(), holdout, seed);
    let pool = |ix: &[usize]| {
        let picked: Vec<CorpusRecord> = ix.iter().map(|&i| records[i].clone()).collect();
        single_modality(&picked, pick)
    };
    let (train_x, train_y) = pool(&train);
    let (test_x, test_y) = pool(&test);
    SplitXY {
        train_x,
        train_y,
        test_x,
        test_y,
    }
}

/// Wraps in-memory records as a corpus rooted at the current directory.
pub fn in_memory_corpus(records: Vec<CorpusRecord>) -> Corpus {
    Corpus {
        records,
        base_dir: PathBuf::from("."),
    }
}
