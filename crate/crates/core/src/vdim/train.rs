use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_isp, mlr_loss, record_mlr, DownsamplerParams, ParamVars, VdimParams};
use crate::encoder::{encode, EncoderSpec, Origin};
use crate::error::{Error, Result};
use crate::image_io::{build_image_pyramid, resize_to_patch_multiple, Image, ImagePyramid};
use crate::numerics::{adam_step, AdamState, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            batch: 4,
            seed: 0,
        }
    }
}

/// Frozen encoder output and guidance pyramid for one training image.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub f0: Tensor,
    pub pyramid: ImagePyramid,
}

impl PreparedSample {
    pub fn new(image: &Image, encoder: &EncoderSpec) -> Result<Self> {
        let image = resize_to_patch_multiple(image, encoder.patch)?;
        let f0 = encode(&image, encoder, Origin::Overview)?.data;
        let pyramid = build_image_pyramid(&image, encoder.patch, 3)?;
        Ok(Self { f0, pyramid })
    }

    fn image_dims(&self) -> (usize, usize) {
        let s = self.f0.shape();
        (s[0] * self.pyramid.patch, s[1] * self.pyramid.patch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Entry 0 is the corpus-mean loss before training; entry `k` is the
    /// mini-batch loss at step `k` (before that step's update).
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    /// Corpus-mean loss after the last update.
    pub final_loss: f64,
}

/// Mean MLR loss over all samples.
pub fn corpus_loss(samples: &[PreparedSample], vdim: &VdimParams, down: &DownsamplerParams) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let f0 = crate::encoder::FeatureMap::new(0, Origin::Overview, s.f0.clone())?;
        let isp = build_isp(&f0, &s.pyramid, vdim)?;
        total += mlr_loss(&isp, down, s.image_dims(), s.pyramid.patch)?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains the upsampling and downsampler parameters jointly with Adam on
/// the MLR loss. The encoder stays frozen.
pub fn pretrain_vdim(
    corpus: &[Image],
    encoder: &EncoderSpec,
    vdim: &mut VdimParams,
    down: &mut DownsamplerParams,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if encoder.channels != down.channels() {
        return Err(Error::Shape(format!(
            "encoder emits {} channels, downsampler expects {}",
            encoder.channels,
            down.channels()
        )));
    }
    let samples = corpus
        .iter()
        .map(|img| PreparedSample::new(img, encoder))
        .collect::<Result<Vec<_>>>()?;
    pretrain_prepared(&samples, vdim, down, config)
}

/// As [`pretrain_vdim`] on samples that are already encoded.
pub fn pretrain_prepared(
    samples: &[PreparedSample],
    vdim: &mut VdimParams,
    down: &mut DownsamplerParams,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let initial_loss = corpus_loss(samples, vdim, down)?;
    if !initial_loss.is_finite() {
        return Err(Error::Diverged { step: 0, loss: initial_loss });
    }
    let mut loss_curve = Vec::with_capacity(config.steps + 1);
    loss_curve.push(initial_loss);

    let shapes: Vec<Vec<usize>> = vdim
        .tensors()
        .into_iter()
        .chain(down.tensors())
        .map(|t| t.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(&shape_refs, config.lr);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 1..=config.steps {
        let mut batch = Vec::with_capacity(config.batch);
        while batch.len() < config.batch {
            if cursor == order.len() {
                order = (0..samples.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, vdim, down);
        let mut terms = Vec::with_capacity(batch.len());
        for &i in &batch {
            terms.push(record_mlr(&mut tape, &vars, &samples[i].f0, &samples[i].pyramid, vdim.radius)?);
        }
        let sum = tape.sum_scalars(&terms)?;
        let loss = tape.scale(sum, 1.0 / batch.len() as f64);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged { step, loss: value });
        }
        loss_curve.push(value);
        let grads = tape.backward(loss)?;
        let grad_refs = vars.collect(&grads);

        let mut params: Vec<&mut Tensor> = vdim.tensors_mut();
        params.extend(down.tensors_mut());
        adam_step(&mut params, &grad_refs, &mut adam)?;
    }

    let final_loss = corpus_loss(samples, vdim, down)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { step: config.steps, loss: final_loss });
    }
    Ok(TrainReport {
        loss_curve,
        initial_loss,
        final_loss,
    })
}
