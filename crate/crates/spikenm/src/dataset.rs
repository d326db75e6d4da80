//! Flat image dataset files and dataset construction.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | 8         | magic `SNMDATA\0`              |
//! | 8      | 4         | version (1)                    |
//! | 12     | 4         | height                         |
//! | 16     | 4         | width                          |
//! | 20     | 4         | channels                       |
//! | 24     | 4         | sample count `n`               |
//! | 28     | 4         | class count                    |
//! | 32     | n         | labels, one byte each          |
//! | 32 + n | n·h·w·c   | pixels, u8, sample-major       |
//!
//! Pixels are read as `value / 255`.

use std::fs;
use std::path::{Path, PathBuf};

use spikenm_core::data::{generate_synthetic, Dataset, DatasetKind, Sample, SpikeDatasetSpec};
use spikenm_core::rng::{substream, Stream};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SNMDATA\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub num_classes: u32,
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl ImageSet {
    pub fn input_dim(&self) -> usize {
        (self.height * self.width * self.channels) as usize
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample> {
        let d = self.input_dim();
        self.labels
            .iter()
            .zip(self.pixels.chunks_exact(d))
            .map(|(&label, px)| Sample {
                intensities: px.iter().map(|&p| f64::from(p) / 255.0).collect(),
                label: label as usize,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.labels.len() + self.pixels.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.height, self.width, self.channels, self.labels.len() as u32, self.num_classes] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a SNMDATA file".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        let (version, height, width, channels, count, classes) = (word(0), word(1), word(2), word(3), word(4), word(5));
        if version != VERSION {
            return Err(bad(format!("unsupported version {}", version)));
        }
        let n = count as usize;
        let d = (height as usize) * (width as usize) * (channels as usize);
        let expected = HEADER_LEN + n + n * d;
        if bytes.len() != expected {
            return Err(bad(format!(
                "expected {} bytes for {} samples of {} pixels, found {}",
                expected,
                n,
                d,
                bytes.len()
            )));
        }
        let labels = bytes[HEADER_LEN..HEADER_LEN + n].to_vec();
        if let Some(l) = labels.iter().find(|&&l| u32::from(l) >= classes) {
            return Err(bad(format!("label {} out of range for {} classes", l, classes)));
        }
        Ok(Self { height, width, channels, num_classes: classes, labels, pixels: bytes[HEADER_LEN + n..].to_vec() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Resolve `source_path` against the directory of the config file.
pub fn resolve_source(spec: &SpikeDatasetSpec, base_dir: &Path) -> Option<PathBuf> {
    spec.source_path.as_ref().map(|p| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    })
}

/// Build the dataset a run trains on. Synthetic data is keyed by the run seed.
pub fn load_dataset(spec: &SpikeDatasetSpec, seed: u64, base_dir: &Path) -> Result<Dataset> {
    match spec.kind {
        DatasetKind::SyntheticPatterns => Ok(generate_synthetic(spec, &mut substream(seed, Stream::Dataset, &[]))?),
        DatasetKind::ImageRateCoded => {
            let path = resolve_source(spec, base_dir)
                .ok_or_else(|| Error::Config("dataset.source_path is required".into()))?;
            let set = ImageSet::read(&path)?;
            if set.input_dim() != spec.input_dim {
                return Err(Error::Config(format!(
                    "dataset.input_dim = {} but {} holds {}x{}x{} images",
                    spec.input_dim,
                    path.display(),
                    set.height,
                    set.width,
                    set.channels
                )));
            }
            if set.num_classes as usize != spec.num_classes {
                return Err(Error::Config(format!(
                    "dataset.num_classes = {} but {} declares {}",
                    spec.num_classes,
                    path.display(),
                    set.num_classes
                )));
            }
            Ok(Dataset::from_samples(spec.input_dim, spec.num_classes, set.samples(), spec.test_every)?)
        }
    }
}
