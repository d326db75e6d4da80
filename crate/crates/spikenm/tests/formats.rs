use std::fs;
use std::path::{Path, PathBuf};

use spikenm::checkpoint::{self, Checkpoint};
use spikenm::config::{self, ResolvedConfig};
use spikenm::dataset::ImageSet;
use spikenm::exec::Rayon;
use spikenm::maskfile;
use spikenm::run::dataset_for;
use spikenm_core::mask::{HardMask, MaskConfig, TensorMask};
use spikenm_core::pipeline::{Phase, Trainer, TrainerState};

fn minimal() -> ResolvedConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/minimal.toml");
    config::load(Some(&path), &[], Some(3)).unwrap()
}

/// States after `units` trainer units of the minimal config.
fn state_after(rc: &ResolvedConfig, units: usize) -> TrainerState {
    let data = dataset_for(rc).unwrap();
    let exec = Rayon::new(Some(1)).unwrap();
    let mut t = Trainer::new(rc.run.clone(), &data, rc.hash).unwrap();
    for _ in 0..units {
        t.advance(&exec).unwrap();
    }
    t.state
}

fn assert_bit_equal(a: &TrainerState, b: &TrainerState) {
    assert_eq!(a, b);
    let bits = |s: &TrainerState| checkpoint::encode_state(s).to_bytes();
    assert_eq!(bits(a), bits(b));
}

#[test]
fn checkpoint_round_trips_every_phase() {
    let rc = minimal();
    let dir = tempfile::tempdir().unwrap();
    let search = rc.run.epochs_search;
    for units in [0, 1, search, search + 1, search + 3] {
        let state = state_after(&rc, units);
        let path = dir.path().join(format!("u{}.ckpt", units));
        checkpoint::save_state(&state, &path).unwrap();
        let back = checkpoint::load_state(&path, &rc.run).unwrap();
        assert_bit_equal(&state, &back);
        assert_eq!(back.phase == Phase::Search, units <= search);
    }
}

#[test]
fn resumed_trainer_matches_uninterrupted_run() {
    let rc = minimal();
    let data = dataset_for(&rc).unwrap();
    let exec = Rayon::new(Some(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    checkpoint::save_state(&state_after(&rc, 2), &path).unwrap();
    let mut resumed = Trainer::resume(rc.run.clone(), &data, checkpoint::load_state(&path, &rc.run).unwrap()).unwrap();
    while resumed.advance(&exec).unwrap().is_some() {}
    let total = rc.run.epochs_search + 1 + rc.run.epochs_finetune + 1;
    assert_bit_equal(&resumed.state, &state_after(&rc, total));
}

fn corrupt(path: &Path, f: impl FnOnce(&mut Vec<u8>)) {
    let mut bytes = fs::read(path).unwrap();
    f(&mut bytes);
    fs::write(path, bytes).unwrap();
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let rc = minimal();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    checkpoint::save_state(&state_after(&rc, 1), &path).unwrap();
    let good = fs::read(&path).unwrap();
    assert!(Checkpoint::from_bytes(&good, &path).is_ok());
    assert!(Checkpoint::from_bytes(&good[..good.len() - 1], &path).is_err());
    assert!(Checkpoint::from_bytes(&good[..20], &path).is_err());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad_magic, &path).is_err());
    let mut bad_version = good.clone();
    bad_version[8] = 9;
    assert!(Checkpoint::from_bytes(&bad_version, &path).is_err());
    corrupt(&path, |b| b.push(0));
    assert!(checkpoint::load_state(&path, &rc.run).is_err());

    // A config with a different network shape cannot absorb the state.
    let mut other = rc.run.clone();
    other.model.hidden = vec![7];
    checkpoint::save_state(&state_after(&rc, 1), &path).unwrap();
    assert!(checkpoint::load_state(&path, &other).is_err());
}

fn sample_masks() -> Vec<(usize, TensorMask)> {
    // 3 x 10 tensor, 2:4: three blocks per row, the last one padded to 2 valid positions.
    let cfg = MaskConfig::for_layer(2, 4, 3, 10).unwrap();
    let blocks: Vec<HardMask> = (0..cfg.num_blocks)
        .map(|b| {
            let bits = match (b % 3, b / 3) {
                (2, _) => vec![1, 0, 0, 0],
                (_, 0) => vec![1, 1, 0, 0],
                (_, 1) => vec![0, 0, 1, 0],
                _ => vec![0, 1, 0, 1],
            };
            HardMask { bits }
        })
        .collect();
    let a = TensorMask::new(cfg, blocks).unwrap();
    let cfg8 = MaskConfig::for_layer(2, 8, 2, 8).unwrap();
    let b = TensorMask::new(cfg8, vec![HardMask { bits: vec![0, 0, 0, 1, 0, 0, 0, 1] }; 2]).unwrap();
    vec![(0, a), (2, b)]
}

#[test]
fn mask_file_round_trips_with_exact_size() {
    let masks = sample_masks();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.snmmask");
    maskfile::write(&masks, &path).unwrap();
    let size = fs::metadata(&path).unwrap().len() as usize;
    let expected: usize =
        16 + masks.iter().map(|(_, m)| 24 + (m.cfg.num_blocks * m.cfg.block_size).div_ceil(8)).sum::<usize>();
    assert_eq!(size, expected);
    assert_eq!(size, 16 + (24 + 5) + (24 + 2));

    let back = maskfile::read(&path).unwrap();
    assert_eq!(back, masks);
    for ((_, a), (_, b)) in masks.iter().zip(&back) {
        assert_eq!(maskfile::popcount_histogram(a), maskfile::popcount_histogram(b));
    }
    assert_eq!(maskfile::popcount_histogram(&masks[0].1), vec![0, 5, 4, 0, 0]);
}

#[test]
fn damaged_mask_files_are_rejected() {
    let bytes = maskfile::encode(&sample_masks());
    let p = Path::new("m.snmmask");
    assert!(maskfile::decode(&bytes, p).is_ok());
    assert!(maskfile::decode(&bytes[..bytes.len() - 1], p).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(maskfile::decode(&extra, p).is_err());
    let mut magic = bytes.clone();
    magic[3] = 0;
    assert!(maskfile::decode(&magic, p).is_err());
    // Three ones in a 2:4 block.
    let mut over = bytes.clone();
    over[16 + 24] |= 0b0000_0100;
    assert!(maskfile::decode(&over, p).is_err());
}

#[test]
fn dataset_file_round_trips() {
    let set = ImageSet {
        height: 2,
        width: 3,
        channels: 1,
        num_classes: 3,
        labels: vec![0, 2, 1, 2],
        pixels: (0..24).map(|k| (k * 11) as u8).collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.snmdata");
    set.write(&path).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 32 + 4 + 24);
    let back = ImageSet::read(&path).unwrap();
    assert_eq!(back, set);
    let samples = back.samples();
    assert_eq!(samples.len(), 4);
    assert_eq!(samples[1].label, 2);
    assert_eq!(samples[1].intensities[0], 66.0 / 255.0);

    let bytes = set.to_bytes();
    assert!(ImageSet::from_bytes(&bytes[..bytes.len() - 1], &path).is_err());
    let mut bad_label = bytes.clone();
    bad_label[32] = 7;
    assert!(ImageSet::from_bytes(&bad_label, &path).is_err());
}

#[test]
fn shipped_digits_file_loads() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/digits8x8.snmdata");
    let set = ImageSet::read(&path).unwrap();
    assert_eq!((set.height, set.width, set.channels, set.num_classes), (8, 8, 1, 10));
    assert_eq!(set.len(), 1797);
}

mod roundtrip {
    use proptest::prelude::*;
    use spikenm::maskfile;
    use spikenm_core::mask::{gumbel_draw, BlockLogits, HardMask, MaskConfig, SamplingMode, TensorMask};
    use spikenm_core::rng::{substream, Stream};

    fn random_mask(n: usize, m: usize, rows: usize, cols: usize, seed: u64) -> TensorMask {
        let cfg = MaskConfig::for_layer(n, m, rows, cols).unwrap();
        let mut rng = substream(seed, Stream::MaskNoise, &[]);
        let blocks = (0..cfg.num_blocks)
            .map(|b| {
                let logits = BlockLogits::with_padding(vec![0.0; m], cfg.valid_len(b));
                HardMask {
                    bits: gumbel_draw(&logits, n, 1.0, SamplingMode::WithReplacement, &mut rng).unwrap().mask_bits(),
                }
            })
            .collect();
        TensorMask::new(cfg, blocks).unwrap()
    }

    proptest! {
        #[test]
        fn any_mask_set_round_trips(
            specs in prop::collection::vec((1usize..=16, 1usize..=16, 1usize..6, 1usize..40, any::<u64>()), 0..4),
        ) {
            let masks: Vec<(usize, TensorMask)> = specs
                .iter()
                .enumerate()
                .map(|(l, &(a, b, rows, cols, seed))| (l, random_mask(a.min(b), a.max(b), rows, cols, seed)))
                .collect();
            let bytes = maskfile::encode(&masks);
            prop_assert_eq!(bytes.len(), maskfile::encoded_len(&masks));
            let back = maskfile::decode(&bytes, std::path::Path::new("p")).unwrap();
            prop_assert_eq!(&back, &masks);
            for ((_, a), (_, b)) in masks.iter().zip(&back) {
                prop_assert_eq!(maskfile::popcount_histogram(a), maskfile::popcount_histogram(b));
            }
        }
    }
}
