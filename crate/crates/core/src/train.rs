//! Deterministic SGD training loop.
//!
//! Batch sampling is a pure function of (seed, iteration), so a run can be
//! resumed from a checkpoint and reproduce the uninterrupted trajectory
//! bitwise. Per-sample gradients may be computed on worker threads through
//! the `BatchExecutor` hook; accumulation always happens in batch order, so
//! results do not depend on the thread count.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::float::Float;
use crate::loss::{return_loss, sparse_l2, LossBundle};
use crate::metrics::{evaluate_pooled, MetricZone, MetricsReport};
use crate::model::{Gradients, Model, ModelOutput, SensorInputs};
use crate::pcdm::{LidarGeometry, Pcdm};
use crate::rng::{substream, SplitMix64};
use crate::sim::Sample;
use crate::tensor::Tensor;
use crate::DscError;

/// In-memory dataset with split assignment and sensor geometry.
pub struct TrainData {
    pub samples: Vec<Sample>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub hdl_geom: LidarGeometry,
    pub scala_geom: LidarGeometry,
}

/// Convert an interleaved RGB image into a planar (c, h, w) tensor in [0,1].
/// `channels` is 3 for RGB or 1 for the luminance mean.
pub fn image_tensor<T: Float>(
    img: &crate::sim::Image,
    channels: usize,
) -> Result<Tensor<T>, DscError> {
    let (h, w) = (img.height, img.width);
    match channels {
        3 => {
            let mut t = Tensor::zeros(&[3, h, w]);
            let d = t.data_mut();
            for i in 0..h * w {
                for c in 0..3 {
                    d[c * h * w + i] = T::from_f64(img.rgb[i * 3 + c] as f64 / 255.0);
                }
            }
            Ok(t)
        }
        1 => {
            let mut t = Tensor::zeros(&[1, h, w]);
            let d = t.data_mut();
            for i in 0..h * w {
                let sum = img.rgb[i * 3] as f64 + img.rgb[i * 3 + 1] as f64 + img.rgb[i * 3 + 2] as f64;
                d[i] = T::from_f64(sum / (3.0 * 255.0));
            }
            Ok(t)
        }
        other => Err(DscError::Invalid {
            message: alloc::format!("camera branches support 1 or 3 input channels, got {other}"),
        }),
    }
}

/// Convert a low-resolution scanner PCDM into branch input channels:
/// depth normalized by max range, plus the return mask when `channels` is 2.
pub fn scala_tensor<T: Float>(
    pcdm: &Pcdm,
    max_range: f64,
    channels: usize,
) -> Result<Tensor<T>, DscError> {
    let (r, c) = (pcdm.rows, pcdm.cols);
    if channels != 1 && channels != 2 {
        return Err(DscError::Invalid {
            message: alloc::format!("lidar branches support 1 or 2 input channels, got {channels}"),
        });
    }
    let mut t = Tensor::zeros(&[channels, r, c]);
    let d = t.data_mut();
    for i in 0..r * c {
        d[i] = T::from_f64(pcdm.depth[i] as f64 / max_range);
        if channels == 2 {
            d[r * c + i] = T::from_f64(pcdm.mask[i] as f64);
        }
    }
    Ok(t)
}

/// Assemble the input map for every branch the model declares. Well-known
/// sensor ids: `camera_left`, `camera_right`, `scala`.
pub fn prepare_inputs<T: Float>(
    model: &Model<T>,
    sample: &Sample,
    scala_geom: &LidarGeometry,
) -> Result<SensorInputs<T>, DscError> {
    let mut inputs = SensorInputs::new();
    for b in &model.branches {
        let spec = model
            .config
            .branch(&b.sensor_id)
            .expect("branch exists in config");
        let t = match b.sensor_id.as_str() {
            "camera_left" => image_tensor(&sample.left, spec.channels_in)?,
            "camera_right" => image_tensor(&sample.right, spec.channels_in)?,
            "scala" => scala_tensor(&sample.scala, scala_geom.max_range, spec.channels_in)?,
            other => {
                return Err(DscError::MissingSensor {
                    sensor: String::from(other),
                })
            }
        };
        let (_, h, w) = t.dims3("prepare_inputs")?;
        if (h, w) != spec.input {
            return Err(DscError::ShapeMismatch {
                context: "prepare_inputs: sample dims vs branch input",
                expected: alloc::vec![spec.input.0, spec.input.1],
                got: alloc::vec![h, w],
            });
        }
        inputs.insert(b.sensor_id.clone(), t);
    }
    Ok(inputs)
}

pub fn depth_target<T: Float>(gt: &Pcdm) -> Tensor<T> {
    let mut t = Tensor::zeros(&[1, gt.rows, gt.cols]);
    for (d, &v) in t.data_mut().iter_mut().zip(&gt.depth) {
        *d = T::from_f64(v as f64);
    }
    t
}

pub fn mask_target<T: Float>(gt: &Pcdm) -> Tensor<T> {
    let mut t = Tensor::zeros(&[1, gt.rows, gt.cols]);
    for (d, &v) in t.data_mut().iter_mut().zip(&gt.mask) {
        *d = T::from_f64(v as f64);
    }
    t
}

/// Forward + losses + blocked backward for one sample.
pub fn sample_gradients<T: Float>(
    model: &Model<T>,
    data: &TrainData,
    sample_index: usize,
    lambda_return: f64,
) -> Result<(Gradients<T>, LossBundle), DscError> {
    let sample = &data.samples[sample_index];
    let inputs = prepare_inputs(model, sample, &data.scala_geom)?;
    let trace = model.forward_traced(&inputs)?;
    let gt_depth = depth_target::<T>(&sample.hdl64);
    let gt_mask = mask_target::<T>(&sample.hdl64);
    let (dl, gdepth, n_valid) = sparse_l2(&trace.output.depth, &gt_depth, &gt_mask)?;
    let (rl, mut glogits) = return_loss(&trace.output.return_logits, &gt_mask)?;
    let lam = T::from_f64(lambda_return);
    for v in glogits.data_mut() {
        *v = *v * lam;
    }
    let grads = model.backward(&trace, &gdepth, &glogits)?;
    Ok((
        grads,
        LossBundle {
            depth_loss: dl.to_f64(),
            return_loss: rl.to_f64(),
            n_valid,
        },
    ))
}

/// Forward-only pass for one sample.
pub fn sample_output<T: Float>(
    model: &Model<T>,
    data: &TrainData,
    sample_index: usize,
) -> Result<ModelOutput<T>, DscError> {
    let sample = &data.samples[sample_index];
    let inputs = prepare_inputs(model, sample, &data.scala_geom)?;
    model.forward(&inputs)
}

/// Maps batches of samples to per-sample results. Implementations may run
/// elements on worker threads but must return results in input order.
pub trait BatchExecutor<T: Float>: Sync {
    fn batch_gradients(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
        lambda_return: f64,
    ) -> Result<Vec<(Gradients<T>, LossBundle)>, DscError>;

    fn forward_many(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
    ) -> Result<Vec<ModelOutput<T>>, DscError>;
}

/// Single-threaded reference executor.
pub struct SequentialExecutor;

impl<T: Float> BatchExecutor<T> for SequentialExecutor {
    fn batch_gradients(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
        lambda_return: f64,
    ) -> Result<Vec<(Gradients<T>, LossBundle)>, DscError> {
        indices
            .iter()
            .map(|&i| sample_gradients(model, data, i, lambda_return))
            .collect()
    }

    fn forward_many(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
    ) -> Result<Vec<ModelOutput<T>>, DscError> {
        indices
            .iter()
            .map(|&i| sample_output(model, data, i))
            .collect()
    }
}

/// Learning rate at an iteration: the base rate decayed by the configured
/// factor once per completed decay interval.
pub fn lr_at(cfg: &TrainConfig, iteration: usize) -> f64 {
    let k = iteration / cfg.lr_decay_every;
    let mut lr = cfg.lr;
    for _ in 0..k {
        lr *= cfg.lr_decay_factor;
    }
    lr
}

/// Classical momentum SGD with coupled weight decay:
/// `v <- momentum*v + (grad + wd*param); param <- param - lr*v`.
/// Aborts on non-finite gradients.
pub fn sgd_step<T: Float>(
    params: &mut [&mut Tensor<T>],
    grads: &Gradients<T>,
    velocity: &mut [Tensor<T>],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<(), DscError> {
    if params.len() != grads.tensors.len() || params.len() != velocity.len() {
        return Err(DscError::Invalid {
            message: String::from("sgd_step: parameter/gradient/velocity counts differ"),
        });
    }
    let lr_t = T::from_f64(lr);
    let mom = T::from_f64(momentum);
    let wd = T::from_f64(weight_decay);
    for ((p, g), v) in params.iter_mut().zip(&grads.tensors).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() {
            return Err(DscError::ShapeMismatch {
                context: "sgd_step",
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        for ((pv, gv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(v.data_mut().iter_mut())
        {
            if !gv.is_finite() {
                return Err(DscError::NonFinite {
                    context: String::from("sgd_step: gradient"),
                });
            }
            *vv = mom * *vv + (*gv + wd * *pv);
            *pv = *pv - lr_t * *vv;
        }
    }
    Ok(())
}

pub fn zero_velocity<T: Float>(model: &Model<T>) -> Vec<Tensor<T>> {
    model.params().iter().map(|t| Tensor::zeros(t.shape())).collect()
}

/// Scale a contiguous group of gradient tensors to a maximum L2 norm.
fn clip_group<T: Float>(tensors: &mut [Tensor<T>], max_norm: f64) {
    let mut sq = 0.0f64;
    for t in tensors.iter() {
        for v in t.data() {
            let x = v.to_f64();
            sq += x * x;
        }
    }
    let norm = libm::sqrt(sq);
    if norm > max_norm {
        let s = T::from_f64(max_norm / norm);
        for t in tensors.iter_mut() {
            for v in t.data_mut() {
                *v = *v * s;
            }
        }
    }
}

/// Clip the batch gradient by global L2 norm. The trunk-path parameters and
/// the return-head parameters are clipped as independent groups so the clip
/// factor cannot carry return-loss information across the stop-gradient
/// boundary; trunk updates stay bitwise independent of the return loss.
pub fn clip_gradients<T: Float>(grads: &mut Gradients<T>, split: usize, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let (trunk_path, return_head) = grads.tensors.split_at_mut(split);
    clip_group(trunk_path, max_norm);
    clip_group(return_head, max_norm);
}

/// Positions into the train split for one iteration: epoch-wise seeded
/// shuffles consumed in fixed-size slices, derived statelessly from
/// (seed, iteration) so resumed runs reproduce the schedule.
pub fn batch_positions(n_train: usize, batch_size: usize, seed: u64, iteration: usize) -> Vec<usize> {
    let bpe = n_train.div_ceil(batch_size).max(1);
    let epoch = iteration / bpe;
    let pos = iteration % bpe;
    let mut perm: Vec<usize> = (0..n_train).collect();
    let mut rng = SplitMix64::new(substream(seed, 0xB47C_u64.wrapping_add(epoch as u64)));
    rng.shuffle(&mut perm);
    let lo = pos * batch_size;
    let hi = core::cmp::min(lo + batch_size, n_train);
    perm[lo..hi].to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub depth_loss: f64,
    pub return_loss: f64,
    pub lr: f64,
    pub n_valid: usize,
}

/// Receives per-iteration logs and periodic checkpoints.
pub trait TrainSink<T: Float> {
    fn on_log(&mut self, record: &LogRecord) -> Result<(), DscError>;
    fn on_checkpoint(
        &mut self,
        model: &Model<T>,
        velocity: &[Tensor<T>],
        iteration: usize,
        metrics: &MetricsReport,
    ) -> Result<(), DscError>;
}

/// Evaluate the model on the validation split, pooling cells across samples.
pub fn evaluate_split<T: Float>(
    model: &Model<T>,
    data: &TrainData,
    indices: &[usize],
    zones: &[MetricZone],
    executor: &dyn BatchExecutor<T>,
) -> Result<MetricsReport, DscError> {
    let outputs = executor.forward_many(model, data, indices)?;
    let preds: Vec<(Vec<f32>, Vec<f32>)> = outputs
        .iter()
        .map(|o| (o.depth.to_f32_vec(), o.return_logits.to_f32_vec()))
        .collect();
    let pairs: Vec<(&[f32], &[f32], &Pcdm)> = preds
        .iter()
        .zip(indices)
        .map(|((d, l), &i)| (d.as_slice(), l.as_slice(), &data.samples[i].hdl64))
        .collect();
    evaluate_pooled(&pairs, &data.hdl_geom, zones)
}

/// Run the training loop from `start_iteration` to `cfg.max_iterations`.
/// Checkpoints fire every `eval_every` iterations and at the end.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Float>(
    model: &mut Model<T>,
    velocity: &mut [Tensor<T>],
    data: &TrainData,
    cfg: &TrainConfig,
    zones: &[MetricZone],
    executor: &dyn BatchExecutor<T>,
    sink: &mut dyn TrainSink<T>,
    start_iteration: usize,
) -> Result<(), DscError> {
    cfg.validate()?;
    if data.train_idx.is_empty() {
        return Err(DscError::Invalid {
            message: String::from("training split is empty"),
        });
    }
    for t in start_iteration..cfg.max_iterations {
        let positions = batch_positions(data.train_idx.len(), cfg.batch_size, cfg.seed, t);
        let indices: Vec<usize> = positions.iter().map(|&p| data.train_idx[p]).collect();
        let results = executor.batch_gradients(model, data, &indices, cfg.lambda_return)?;
        let n = results.len();
        let mut iter_results = results.into_iter();
        let (mut acc, first_losses) = iter_results.next().ok_or(DscError::Invalid {
            message: String::from("empty batch"),
        })?;
        let mut depth_loss = first_losses.depth_loss;
        let mut return_loss_sum = first_losses.return_loss;
        let mut n_valid = first_losses.n_valid;
        for (g, l) in iter_results {
            acc.add_assign(&g);
            depth_loss += l.depth_loss;
            return_loss_sum += l.return_loss;
            n_valid += l.n_valid;
        }
        acc.scale(T::from_f64(1.0 / n as f64));
        clip_gradients(&mut acc, model.return_head_param_split(), cfg.clip_norm);
        let lr = lr_at(cfg, t);
        sgd_step(
            &mut model.params_mut(),
            &acc,
            velocity,
            lr,
            cfg.momentum,
            cfg.weight_decay,
        )?;
        sink.on_log(&LogRecord {
            iteration: t,
            depth_loss: depth_loss / n as f64,
            return_loss: return_loss_sum / n as f64,
            lr,
            n_valid,
        })?;
        let done = t + 1 == cfg.max_iterations;
        if (t + 1) % cfg.eval_every == 0 || done {
            let metrics = evaluate_split(model, data, &data.val_idx, zones, executor)?;
            sink.on_checkpoint(model, velocity, t + 1, &metrics)?;
        }
    }
    Ok(())
}
