//! Datasets and spike encoding.
//!
//! A dataset holds per-sample intensities in `[0, 1]`; spikes are drawn when a
//! sample is presented. The rate encoder fires `Bernoulli(intensity)` at every
//! step, the direct encoder feeds the intensities themselves as input current.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::bail;
use crate::rng::{bernoulli, uniform};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DatasetKind {
    #[default]
    SyntheticPatterns,
    ImageRateCoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Encoder {
    #[default]
    Rate,
    DirectFirstLayer,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SpikeDatasetSpec {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub time_steps: usize,
    pub input_dim: usize,
    pub encoder: Encoder,
    pub source_path: Option<String>,
    /// Synthetic only.
    pub samples_per_class: usize,
    /// Gap between low and high template rates, in `[0, 1]`.
    pub margin: f64,
    /// Per-sample uniform perturbation of the template rates.
    pub jitter: f64,
    /// Give every class the same template.
    pub identical_templates: bool,
    /// Every `test_every`-th sample of each class goes to the test split.
    pub test_every: usize,
}

impl Default for SpikeDatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::SyntheticPatterns,
            num_classes: 4,
            time_steps: 8,
            input_dim: 32,
            encoder: Encoder::Rate,
            source_path: None,
            samples_per_class: 50,
            margin: 0.6,
            jitter: 0.1,
            identical_templates: false,
            test_every: 5,
        }
    }
}

impl SpikeDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.time_steps == 0 {
            bail!(Config, "dataset.time_steps must be at least 1");
        }
        if self.num_classes < 2 {
            bail!(Config, "dataset.num_classes must be at least 2, got {}", self.num_classes);
        }
        if self.test_every < 2 {
            bail!(Config, "dataset.test_every must be at least 2, got {}", self.test_every);
        }
        match self.kind {
            DatasetKind::SyntheticPatterns => {
                if self.input_dim == 0 || self.samples_per_class == 0 {
                    bail!(Config, "synthetic data needs input_dim and samples_per_class >= 1");
                }
                if !(0.0..=1.0).contains(&self.margin) || !(0.0..=1.0).contains(&self.jitter) {
                    bail!(Config, "dataset.margin and dataset.jitter must lie in [0, 1]");
                }
            }
            DatasetKind::ImageRateCoded => {
                if self.source_path.is_none() {
                    bail!(Config, "dataset.source_path is required for image_rate_coded");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub intensities: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub num_classes: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Stratified split: the `k`-th sample of each class is held out when
    /// `k % test_every == test_every - 1`.
    pub fn from_samples(input_dim: usize, num_classes: usize, samples: Vec<Sample>, test_every: usize) -> Result<Self> {
        if test_every == 0 {
            bail!(Config, "test_every must be positive");
        }
        let mut seen = vec![0usize; num_classes];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for s in samples {
            if s.label >= num_classes {
                bail!(Domain, "label {} out of range for {} classes", s.label, num_classes);
            }
            if s.intensities.len() != input_dim {
                bail!(Dimension, "sample has {} inputs, expected {}", s.intensities.len(), input_dim);
            }
            if s.intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
                bail!(Domain, "intensities must lie in [0, 1]");
            }
            let k = seen[s.label];
            seen[s.label] += 1;
            if k % test_every == test_every - 1 {
                test.push(s);
            } else {
                train.push(s);
            }
        }
        Ok(Self { input_dim, num_classes, train, test })
    }

    /// Little-endian dump of every label and intensity, train then test.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in self.train.iter().chain(&self.test) {
            out.extend_from_slice(&(s.label as u32).to_le_bytes());
            for v in &s.intensities {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Class-conditional rate patterns.
///
/// Each class draws a binary template over the inputs; its rates are
/// `0.5 ± margin/2`. Each sample perturbs them by `U(-jitter, jitter)` and
/// clips to `[0, 1]`. Samples are emitted class-interleaved.
pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SpikeDatasetSpec, rng: &mut R) -> Result<Dataset> {
    if spec.kind != DatasetKind::SyntheticPatterns {
        bail!(Config, "generate_synthetic needs kind = synthetic_patterns");
    }
    spec.validate()?;
    let d = spec.input_dim;
    let lo = 0.5 - spec.margin / 2.0;
    let hi = 0.5 + spec.margin / 2.0;
    let mut templates: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    for c in 0..spec.num_classes {
        if spec.identical_templates && c > 0 {
            templates.push(templates[0].clone());
            continue;
        }
        templates.push((0..d).map(|_| if bernoulli(rng, 0.5) { hi } else { lo }).collect());
    }
    let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for _ in 0..spec.samples_per_class {
        for (label, t) in templates.iter().enumerate() {
            let intensities = t
                .iter()
                .map(|&r| {
                    let v = if spec.jitter > 0.0 { r + uniform(rng, -spec.jitter, spec.jitter) } else { r };
                    v.clamp(0.0, 1.0)
                })
                .collect();
            samples.push(Sample { intensities, label });
        }
    }
    Dataset::from_samples(d, spec.num_classes, samples, spec.test_every)
}

/// Binary spike tensor `[batch, T, input_dim]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBatch {
    pub batch: usize,
    pub time_steps: usize,
    pub input_dim: usize,
    pub spikes: Vec<u8>,
    pub labels: Vec<usize>,
}

impl EncodedBatch {
    pub fn spike(&self, b: usize, t: usize, d: usize) -> u8 {
        self.spikes[(b * self.time_steps + t) * self.input_dim + d]
    }

    /// Sample `b` as network input, one vector per step.
    pub fn input(&self, b: usize) -> Vec<Vec<f64>> {
        (0..self.time_steps)
            .map(|t| {
                let start = (b * self.time_steps + t) * self.input_dim;
                self.spikes[start..start + self.input_dim].iter().map(|&s| f64::from(s)).collect()
            })
            .collect()
    }
}

fn check_intensities(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        bail!(Domain, "intensity {} outside [0, 1]", v);
    }
    Ok(())
}

/// `spike[b, t, d] ~ Bernoulli(intensity[b, d])`, drawn batch-, then step-major.
pub fn encode_rate<R: Rng + ?Sized>(images: &[Sample], time_steps: usize, rng: &mut R) -> Result<EncodedBatch> {
    if time_steps == 0 {
        bail!(Domain, "time_steps must be at least 1");
    }
    let input_dim = images.first().map_or(0, |s| s.intensities.len());
    let mut spikes = Vec::with_capacity(images.len() * time_steps * input_dim);
    for s in images {
        if s.intensities.len() != input_dim {
            bail!(Dimension, "ragged batch: {} vs {} inputs", s.intensities.len(), input_dim);
        }
        check_intensities(&s.intensities)?;
        for _ in 0..time_steps {
            spikes.extend(s.intensities.iter().map(|&p| u8::from(bernoulli(rng, p))));
        }
    }
    Ok(EncodedBatch {
        batch: images.len(),
        time_steps,
        input_dim,
        spikes,
        labels: images.iter().map(|s| s.label).collect(),
    })
}

/// Network input for one sample under `encoder`.
pub fn encode_sample<R: Rng + ?Sized>(
    intensities: &[f64],
    time_steps: usize,
    encoder: Encoder,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if time_steps == 0 {
        bail!(Domain, "time_steps must be at least 1");
    }
    check_intensities(intensities)?;
    Ok(match encoder {
        Encoder::Rate => (0..time_steps)
            .map(|_| intensities.iter().map(|&p| if bernoulli(rng, p) { 1.0 } else { 0.0 }).collect())
            .collect(),
        Encoder::DirectFirstLayer => vec![intensities.to_vec(); time_steps],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn sample(v: f64, d: usize) -> Sample {
        Sample { intensities: vec![v; d], label: 0 }
    }

    #[test]
    fn extreme_intensities_are_deterministic() {
        let mut rng = substream(0, Stream::Encode, &[]);
        let b = encode_rate(&[sample(0.0, 3), sample(1.0, 3)], 50, &mut rng).unwrap();
        for t in 0..50 {
            for d in 0..3 {
                assert_eq!(b.spike(0, t, d), 0);
                assert_eq!(b.spike(1, t, d), 1);
            }
        }
    }

    #[test]
    fn half_intensity_fires_half_the_time() {
        let mut rng = substream(5, Stream::Encode, &[]);
        let b = encode_rate(&[sample(0.5, 1)], 1000, &mut rng).unwrap();
        let rate = b.spikes.iter().map(|&s| f64::from(s)).sum::<f64>() / 1000.0;
        assert!((rate - 0.5).abs() < 0.05, "rate {}", rate);
    }

    #[test]
    fn out_of_range_intensity_is_a_domain_error() {
        let mut rng = substream(0, Stream::Encode, &[]);
        assert!(matches!(encode_rate(&[sample(1.5, 2)], 3, &mut rng), Err(crate::Error::Domain(_))));
        assert!(encode_sample(&[-0.1], 3, Encoder::Rate, &mut rng).is_err());
        assert!(encode_rate(&[sample(0.5, 2)], 0, &mut rng).is_err());
    }

    #[test]
    fn direct_encoding_repeats_the_intensities() {
        let mut rng = substream(0, Stream::Encode, &[]);
        let x = encode_sample(&[0.2, 0.7], 3, Encoder::DirectFirstLayer, &mut rng).unwrap();
        assert_eq!(x, vec![vec![0.2, 0.7]; 3]);
    }

    #[test]
    fn batch_input_matches_raw_tensor() {
        let mut rng = substream(2, Stream::Encode, &[]);
        let b = encode_rate(&[sample(0.3, 4), sample(0.8, 4)], 5, &mut rng).unwrap();
        let x = b.input(1);
        for t in 0..5 {
            for d in 0..4 {
                assert_eq!(x[t][d], f64::from(b.spike(1, t, d)));
            }
        }
    }

    #[test]
    fn synthetic_generation_is_seeded() {
        let spec = SpikeDatasetSpec::default();
        let a = generate_synthetic(&spec, &mut substream(4, Stream::Dataset, &[])).unwrap();
        let b = generate_synthetic(&spec, &mut substream(4, Stream::Dataset, &[])).unwrap();
        let c = generate_synthetic(&spec, &mut substream(5, Stream::Dataset, &[])).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn split_is_stratified() {
        let spec = SpikeDatasetSpec { num_classes: 10, samples_per_class: 20, ..Default::default() };
        let ds = generate_synthetic(&spec, &mut substream(0, Stream::Dataset, &[])).unwrap();
        assert_eq!(ds.test.len(), 40);
        assert_eq!(ds.train.len(), 160);
        for c in 0..10 {
            assert_eq!(ds.test.iter().filter(|s| s.label == c).count(), 4);
        }
    }

    #[test]
    fn identical_templates_share_rates() {
        let spec = SpikeDatasetSpec { identical_templates: true, jitter: 0.0, ..Default::default() };
        let ds = generate_synthetic(&spec, &mut substream(0, Stream::Dataset, &[])).unwrap();
        let first = &ds.train[0].intensities;
        assert!(ds.train.iter().all(|s| &s.intensities == first));
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let mut rng = substream(0, Stream::Dataset, &[]);
        let bad = SpikeDatasetSpec { time_steps: 0, ..Default::default() };
        assert!(matches!(generate_synthetic(&bad, &mut rng), Err(crate::Error::Config(_))));
        let img = SpikeDatasetSpec { kind: DatasetKind::ImageRateCoded, ..Default::default() };
        assert!(generate_synthetic(&img, &mut rng).is_err());
        assert!(img.validate().is_err());
    }

    proptest! {
        #[test]
        fn rate_encoder_is_binary_with_valid_labels(p in proptest::collection::vec(0.0f64..=1.0, 1..8), seed in 0u64..1000) {
            let mut rng = substream(seed, Stream::Encode, &[]);
            let s = Sample { intensities: p, label: 1 };
            let b = encode_rate(&[s.clone(), s], 6, &mut rng).unwrap();
            prop_assert!(b.spikes.iter().all(|&v| v <= 1));
            prop_assert!(b.labels.iter().all(|&l| l < 2));
        }

        #[test]
        fn rate_error_shrinks_like_inverse_sqrt_t(p in 0.05f64..0.95, seed in 0u64..1000) {
            let mut rng = substream(seed, Stream::Encode, &[1]);
            let t = 4000;
            let b = encode_rate(&[sample(p, 1)], t, &mut rng).unwrap();
            let rate = b.spikes.iter().map(|&s| f64::from(s)).sum::<f64>() / t as f64;
            // 5 standard deviations.
            prop_assert!((rate - p).abs() < 5.0 * libm::sqrt(p * (1.0 - p) / t as f64));
        }
    }
}
