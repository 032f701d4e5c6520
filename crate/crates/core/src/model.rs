//! DSCnet construction and execution: per-sensor resize branches feeding a
//! channel concatenation, a V-style encoder/decoder trunk with skip
//! connections, and linear depth / return-logit heads.
//!
//! The return head reads the final trunk features through a stop-gradient
//! boundary: its loss trains only the head itself, never the trunk.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::config::{KernelMode, LayerSpec, ModelConfig, SensorKind, Stride};
use crate::float::Float;
use crate::layers::{
    concat_backward, concat_channels, conv2d_backward, conv2d_forward, dwsep_backward,
    dwsep_forward, relu_backward, relu_forward, sigmoid_scalar, tconv2d_backward, tconv2d_forward,
    Pad,
};
use crate::pcdm::{LidarGeometry, PointCloud};
use crate::rng::{fnv1a64, substream, SplitMix64};
use crate::tensor::Tensor;
use crate::DscError;

/// Operator kind of one expanded unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitOp {
    Conv { stride: (usize, usize) },
    Tconv { up: (usize, usize) },
}

/// Whether the unit runs as a dense or depthwise-separable convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitMode {
    Dense,
    Separable,
}

/// One concrete convolution unit with resolved shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedUnit {
    pub name: String,
    pub op: UnitOp,
    pub mode: UnitMode,
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize),
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    pub relu: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedBranch {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub units: Vec<ExpandedUnit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedDecoder {
    pub up: ExpandedUnit,
    pub post: ExpandedUnit,
    /// Index into `encoders` whose output is concatenated after upsampling.
    pub skip_encoder: Option<usize>,
}

/// Fully shape-checked model plan; weight allocation and resource counting
/// both walk this.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedModel {
    pub grid: (usize, usize),
    pub branches: Vec<ExpandedBranch>,
    pub fusion_channels: usize,
    pub encoders: Vec<ExpandedUnit>,
    pub decoders: Vec<ExpandedDecoder>,
    pub depth_head: ExpandedUnit,
    pub return_head: ExpandedUnit,
}

impl ExpandedModel {
    pub fn all_units(&self) -> Vec<&ExpandedUnit> {
        let mut v = Vec::new();
        for b in &self.branches {
            v.extend(b.units.iter());
        }
        v.extend(self.encoders.iter());
        for d in &self.decoders {
            v.push(&d.up);
            v.push(&d.post);
        }
        v.push(&self.depth_head);
        v.push(&self.return_head);
        v
    }
}

fn unit_out_hw(op: UnitOp, in_hw: (usize, usize), _kernel: (usize, usize)) -> (usize, usize) {
    match op {
        UnitOp::Conv { stride } => (in_hw.0.div_ceil(stride.0), in_hw.1.div_ceil(stride.1)),
        UnitOp::Tconv { up } => (in_hw.0 * up.0, in_hw.1 * up.1),
    }
}

fn expand_row(
    name_prefix: &str,
    unit_no: &mut usize,
    row: &LayerSpec,
    cin: &mut usize,
    hw: &mut (usize, usize),
    kernel_mode: KernelMode,
    out: &mut Vec<ExpandedUnit>,
) -> Result<(), DscError> {
    for _ in 0..row.units {
        let (op, mode) = match row.stride {
            Stride::Conv(sh, sw) => {
                // Stride-1 axes must use odd kernels so `same` padding is
                // shape preserving.
                if (sh == 1 && row.kernel.0 % 2 == 0) || (sw == 1 && row.kernel.1 % 2 == 0) {
                    return Err(DscError::Invalid {
                        message: format!(
                            "{name_prefix}.u{unit_no:02}: stride-1 axes need odd kernels, got {:?}",
                            row.kernel
                        ),
                    });
                }
                let mode = if kernel_mode == KernelMode::Separable && row.kernel.0 * row.kernel.1 > 1
                {
                    UnitMode::Separable
                } else {
                    UnitMode::Dense
                };
                (UnitOp::Conv { stride: (sh, sw) }, mode)
            }
            Stride::Up(uh, uw) => {
                if row.kernel.0 < uh || row.kernel.1 < uw {
                    return Err(DscError::Invalid {
                        message: format!(
                            "{name_prefix}.u{unit_no:02}: kernel {:?} must cover up factors ({uh},{uw})",
                            row.kernel
                        ),
                    });
                }
                (UnitOp::Tconv { up: (uh, uw) }, UnitMode::Dense)
            }
        };
        let out_hw = unit_out_hw(op, *hw, row.kernel);
        out.push(ExpandedUnit {
            name: format!("{name_prefix}.u{unit_no:02}"),
            op,
            mode,
            cin: *cin,
            cout: row.channels_out,
            kernel: row.kernel,
            in_hw: *hw,
            out_hw,
            relu: true,
        });
        *cin = row.channels_out;
        *hw = out_hw;
        *unit_no += 1;
    }
    Ok(())
}

/// Resolve a config into concrete units, checking the whole shape chain.
pub fn expand_model(config: &ModelConfig) -> Result<ExpandedModel, DscError> {
    let grid = config.grid();

    let mut branches = Vec::new();
    let mut fusion_channels = 0;
    for spec in &config.branches {
        let prefix = format!("branch.{}", spec.sensor_id);
        let mut units = Vec::new();
        let mut cin = spec.channels_in;
        let mut hw = spec.input;
        let mut unit_no = 0usize;
        for row in &spec.layers {
            expand_row(
                &prefix,
                &mut unit_no,
                row,
                &mut cin,
                &mut hw,
                config.kernel_mode,
                &mut units,
            )?;
        }
        if hw != grid {
            return Err(DscError::ShapeChain {
                unit: units.last().map(|u| u.name.clone()).unwrap_or(prefix),
                expected: grid,
                got: hw,
            });
        }
        fusion_channels += cin;
        branches.push(ExpandedBranch {
            sensor_id: spec.sensor_id.clone(),
            kind: spec.kind,
            units,
        });
    }

    let levels = config.trunk.channels.len();
    let ch = &config.trunk.channels;
    if grid.0 % (1 << levels) != 0 || grid.1 % (1 << levels) != 0 {
        return Err(DscError::Invalid {
            message: format!(
                "trunk with {levels} levels needs grid divisible by {}, got {}x{}",
                1 << levels,
                grid.0,
                grid.1
            ),
        });
    }

    let conv_mode = |k: (usize, usize)| {
        if config.kernel_mode == KernelMode::Separable && k.0 * k.1 > 1 {
            UnitMode::Separable
        } else {
            UnitMode::Dense
        }
    };

    // Encoders: level l halves the grid and moves to ch[l].
    let mut encoders = Vec::new();
    let mut hw = grid;
    let mut cin = fusion_channels;
    for (l, &c) in ch.iter().enumerate() {
        let op = UnitOp::Conv { stride: (2, 2) };
        let out_hw = unit_out_hw(op, hw, (3, 3));
        encoders.push(ExpandedUnit {
            name: format!("trunk.enc{l}"),
            op,
            mode: conv_mode((3, 3)),
            cin,
            cout: c,
            kernel: (3, 3),
            in_hw: hw,
            out_hw,
            relu: true,
        });
        cin = c;
        hw = out_hw;
    }

    // Decoders walk back up; step j goes from level j to level j-1 and
    // concatenates the encoder output at that level (except at level 0).
    let mut decoders = Vec::new();
    let mut cur = *ch.last().unwrap();
    for j in (1..=levels).rev() {
        let cout = if j >= 2 { ch[j - 2] } else { ch[0] };
        let up_op = UnitOp::Tconv { up: (2, 2) };
        let up_out = unit_out_hw(up_op, hw, (3, 3));
        let up = ExpandedUnit {
            name: format!("trunk.dec{j}.up"),
            op: up_op,
            mode: UnitMode::Dense,
            cin: cur,
            cout,
            kernel: (3, 3),
            in_hw: hw,
            out_hw: up_out,
            relu: true,
        };
        let skip_encoder = if j >= 2 { Some(j - 2) } else { None };
        let concat_in = cout + skip_encoder.map(|e| encoders[e].cout).unwrap_or(0);
        let post = ExpandedUnit {
            name: format!("trunk.dec{j}.post"),
            op: UnitOp::Conv { stride: (1, 1) },
            mode: conv_mode((3, 3)),
            cin: concat_in,
            cout,
            kernel: (3, 3),
            in_hw: up_out,
            out_hw: up_out,
            relu: true,
        };
        decoders.push(ExpandedDecoder {
            up,
            post,
            skip_encoder,
        });
        cur = cout;
        hw = up_out;
    }
    debug_assert_eq!(hw, grid);

    let head = |name: &str| ExpandedUnit {
        name: name.to_string(),
        op: UnitOp::Conv { stride: (1, 1) },
        mode: UnitMode::Dense,
        cin: cur,
        cout: 1,
        kernel: (1, 1),
        in_hw: grid,
        out_hw: grid,
        relu: false,
    };

    Ok(ExpandedModel {
        grid,
        branches,
        fusion_channels,
        encoders,
        decoders,
        depth_head: head("head.depth"),
        return_head: head("head.return"),
    })
}

// ---------------------------------------------------------------------------
// Built model with weights
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum UnitWeights<T> {
    Dense { w: Tensor<T> },
    Separable { dw: Tensor<T>, pw: Tensor<T> },
    Transposed { w: Tensor<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unit<T> {
    pub meta: ExpandedUnit,
    pub weights: UnitWeights<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchNet<T> {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub units: Vec<Unit<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLevel<T> {
    pub up: Unit<T>,
    pub post: Unit<T>,
    pub skip_encoder: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub grid: (usize, usize),
    pub branches: Vec<BranchNet<T>>,
    pub encoders: Vec<Unit<T>>,
    pub decoders: Vec<DecoderLevel<T>>,
    pub depth_head: Unit<T>,
    pub return_head: Unit<T>,
}

/// Map from sensor id to its prepared input tensor.
pub type SensorInputs<T> = BTreeMap<String, Tensor<T>>;

/// Fixed output gain of the depth head, meters per unit of head output.
/// Hidden features are O(0.1..1); targets are tens of meters. The gain
/// bridges that range with head weights O(1), keeping the head's loss
/// curvature in the same band as every other layer so one global learning
/// rate serves all of them. The head remains linear and unbounded.
pub const DEPTH_SCALE: f64 = 12.0;

/// Initial depth-head bias: predictions start near a typical scene depth
/// (DEPTH_BIAS_INIT * DEPTH_SCALE meters) instead of zero, which keeps
/// early residuals moderate.
pub const DEPTH_BIAS_INIT: f64 = 1.0;

/// Gain on the fan-in-scaled uniform bound for hidden convolutions.
/// Offsets the per-layer magnitude decay of ReLU stacks over positive-mean
/// inputs, holding feature scales in a usable band at trunk depth.
const INIT_GAIN: f64 = 1.4;


#[derive(Clone, Debug)]
pub struct ModelOutput<T> {
    /// Depth prediction in meters, (1, rows, cols), linear head.
    pub depth: Tensor<T>,
    /// Return-classifier logits, (1, rows, cols).
    pub return_logits: Tensor<T>,
}

fn init_uniform<T: Float>(
    shape: &[usize],
    fan_in: usize,
    gain: f64,
    seed: u64,
    name: &str,
) -> Tensor<T> {
    let mut rng = SplitMix64::new(substream(seed, fnv1a64(name.as_bytes())));
    let bound = gain * libm::sqrt(6.0 / fan_in.max(1) as f64);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::from_f64((rng.next_f64() * 2.0 - 1.0) * bound);
    }
    t
}

fn build_unit<T: Float>(meta: &ExpandedUnit, seed: u64) -> Unit<T> {
    let (kh, kw) = meta.kernel;
    // Heads start at zero weights: predictions begin at the bias prior and
    // trunk gradients ramp up with the head weights, a built-in warmup that
    // keeps plain momentum SGD from killing ReLUs in the first steps.
    let head = meta.name.starts_with("head.");
    let gain = if head { 0.0 } else { INIT_GAIN };
    let weights = match (meta.op, meta.mode) {
        (UnitOp::Tconv { .. }, _) => UnitWeights::Transposed {
            w: init_uniform(
                &[meta.cout, meta.cin, kh, kw],
                meta.cin * kh * kw,
                gain,
                seed,
                &format!("{}.w", meta.name),
            ),
        },
        (_, UnitMode::Dense) => UnitWeights::Dense {
            w: init_uniform(
                &[meta.cout, meta.cin, kh, kw],
                meta.cin * kh * kw,
                gain,
                seed,
                &format!("{}.w", meta.name),
            ),
        },
        (_, UnitMode::Separable) => UnitWeights::Separable {
            dw: init_uniform(
                &[meta.cin, kh, kw],
                kh * kw,
                gain,
                seed,
                &format!("{}.dw", meta.name),
            ),
            pw: init_uniform(
                &[meta.cout, meta.cin, 1, 1],
                meta.cin,
                gain,
                seed,
                &format!("{}.pw", meta.name),
            ),
        },
    };
    let mut bias = Tensor::zeros(&[meta.cout]);
    if meta.name == "head.depth" {
        for v in bias.data_mut() {
            *v = T::from_f64(DEPTH_BIAS_INIT);
        }
    }
    Unit {
        meta: meta.clone(),
        weights,
        bias,
    }
}

/// Build a model from its config. Weight streams are keyed by parameter
/// name, so identical branches get identical weights regardless of
/// declaration order.
pub fn build_model<T: Float>(config: &ModelConfig) -> Result<Model<T>, DscError> {
    let em = expand_model(config)?;
    let seed = config.seed;
    Ok(Model {
        config: config.clone(),
        grid: em.grid,
        branches: em
            .branches
            .iter()
            .map(|b| BranchNet {
                sensor_id: b.sensor_id.clone(),
                kind: b.kind,
                units: b.units.iter().map(|u| build_unit(u, seed)).collect(),
            })
            .collect(),
        encoders: em.encoders.iter().map(|u| build_unit(u, seed)).collect(),
        decoders: em
            .decoders
            .iter()
            .map(|d| DecoderLevel {
                up: build_unit(&d.up, seed),
                post: build_unit(&d.post, seed),
                skip_encoder: d.skip_encoder,
            })
            .collect(),
        depth_head: build_unit(&em.depth_head, seed),
        return_head: build_unit(&em.return_head, seed),
    })
}

fn unit_forward<T: Float>(unit: &Unit<T>, x: &Tensor<T>) -> Result<Tensor<T>, DscError> {
    let m = &unit.meta;
    if x.shape() != [m.cin, m.in_hw.0, m.in_hw.1] {
        return Err(DscError::Invalid {
            message: format!(
                "{}: expected input [{}, {}, {}], got {:?}",
                m.name,
                m.cin,
                m.in_hw.0,
                m.in_hw.1,
                x.shape()
            ),
        });
    }
    let y = match (&unit.weights, m.op) {
        (UnitWeights::Dense { w }, UnitOp::Conv { stride }) => {
            let pad = Pad::same(m.in_hw, m.kernel, stride);
            conv2d_forward(x, w, &unit.bias, stride, pad)?
        }
        (UnitWeights::Separable { dw, pw }, UnitOp::Conv { stride }) => {
            let pad = Pad::same(m.in_hw, m.kernel, stride);
            dwsep_forward(x, dw, pw, &unit.bias, stride, pad)?
        }
        (UnitWeights::Transposed { w }, UnitOp::Tconv { up }) => {
            tconv2d_forward(x, w, &unit.bias, up)?
        }
        _ => {
            return Err(DscError::Invalid {
                message: format!("{}: inconsistent unit weights", m.name),
            })
        }
    };
    Ok(if m.relu { relu_forward(&y) } else { y })
}

/// Gradient tensors for one unit, ordered like `Unit::param_refs`.
type UnitGrads<T> = Vec<Tensor<T>>;

fn unit_backward<T: Float>(
    unit: &Unit<T>,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, UnitGrads<T>), DscError> {
    let m = &unit.meta;
    let g = if m.relu {
        relu_backward(grad_out, output)
    } else {
        grad_out.clone()
    };
    match (&unit.weights, m.op) {
        (UnitWeights::Dense { w }, UnitOp::Conv { stride }) => {
            let pad = Pad::same(m.in_hw, m.kernel, stride);
            let (gin, gw, gb) = conv2d_backward(&g, input, w, stride, pad)?;
            Ok((gin, vec![gw, gb]))
        }
        (UnitWeights::Separable { dw, pw }, UnitOp::Conv { stride }) => {
            let pad = Pad::same(m.in_hw, m.kernel, stride);
            let (gin, gdw, gpw, gb) = dwsep_backward(&g, input, dw, pw, stride, pad)?;
            Ok((gin, vec![gdw, gpw, gb]))
        }
        (UnitWeights::Transposed { w }, UnitOp::Tconv { up }) => {
            let (gin, gw, gb) = tconv2d_backward(&g, input, w, up)?;
            Ok((gin, vec![gw, gb]))
        }
        _ => Err(DscError::Invalid {
            message: format!("{}: inconsistent unit weights", m.name),
        }),
    }
}

impl<T: Float> Unit<T> {
    pub fn param_refs(&self) -> Vec<(&str, &Tensor<T>)> {
        match &self.weights {
            UnitWeights::Dense { w } | UnitWeights::Transposed { w } => {
                vec![("w", w), ("b", &self.bias)]
            }
            UnitWeights::Separable { dw, pw } => {
                vec![("dw", dw), ("pw", pw), ("b", &self.bias)]
            }
        }
    }

    pub fn param_refs_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match &mut self.weights {
            UnitWeights::Dense { w } | UnitWeights::Transposed { w } => vec![w, &mut self.bias],
            UnitWeights::Separable { dw, pw } => vec![dw, pw, &mut self.bias],
        }
    }
}

/// Per-parameter gradients in canonical parameter order.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = *v * factor;
            }
        }
    }

    pub fn check_finite(&self) -> Result<(), DscError> {
        for t in &self.tensors {
            t.check_finite("gradients")?;
        }
        Ok(())
    }
}

struct UnitIo<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

/// Cached activations from a traced forward pass, consumed by `backward`.
pub struct Trace<T> {
    branch_io: Vec<Vec<UnitIo<T>>>,
    enc_io: Vec<UnitIo<T>>,
    dec_up_io: Vec<UnitIo<T>>,
    dec_post_io: Vec<UnitIo<T>>,
    feat: Tensor<T>,
    pub output: ModelOutput<T>,
}

impl<T: Float> Model<T> {
    /// Canonical unit order: branches (sorted by sensor id), encoders,
    /// decoders (up then post per level), depth head, return head.
    pub fn units(&self) -> Vec<&Unit<T>> {
        let mut v = Vec::new();
        for b in &self.branches {
            v.extend(b.units.iter());
        }
        v.extend(self.encoders.iter());
        for d in &self.decoders {
            v.push(&d.up);
            v.push(&d.post);
        }
        v.push(&self.depth_head);
        v.push(&self.return_head);
        v
    }

    fn units_mut(&mut self) -> Vec<&mut Unit<T>> {
        let mut v: Vec<&mut Unit<T>> = Vec::new();
        for b in &mut self.branches {
            v.extend(b.units.iter_mut());
        }
        v.extend(self.encoders.iter_mut());
        for d in &mut self.decoders {
            v.push(&mut d.up);
            v.push(&mut d.post);
        }
        v.push(&mut self.depth_head);
        v.push(&mut self.return_head);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for u in self.units() {
            for (suffix, _) in u.param_refs() {
                names.push(format!("{}.{}", u.meta.name, suffix));
            }
        }
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.units()
            .into_iter()
            .flat_map(|u| u.param_refs().into_iter().map(|(_, t)| t))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for u in self.units_mut() {
            v.extend(u.param_refs_mut());
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Index of the first return-head tensor in canonical parameter order;
    /// everything before it sits on the depth side of the stop-gradient
    /// boundary.
    pub fn return_head_param_split(&self) -> usize {
        self.params().len() - self.return_head.param_refs().len()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            tensors: self
                .params()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    /// Export parameters as (name, f32 payload, shape) entries.
    pub fn export_params(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        self.param_names()
            .into_iter()
            .zip(self.params())
            .map(|(n, t)| (n, t.shape().to_vec(), t.to_f32_vec()))
            .collect()
    }

    /// Load parameters by name; every model parameter must be present with
    /// a matching shape.
    pub fn load_params(&mut self, entries: &[(String, Vec<usize>, Vec<f32>)]) -> Result<(), DscError> {
        let names = self.param_names();
        let mut params = self.params_mut();
        for (name, slot) in names.iter().zip(params.iter_mut()) {
            let found = entries
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or(DscError::Invalid {
                    message: format!("checkpoint is missing parameter `{name}`"),
                })?;
            if found.1 != slot.shape() {
                return Err(DscError::ShapeMismatch {
                    context: "load_params",
                    expected: slot.shape().to_vec(),
                    got: found.1.clone(),
                });
            }
            for (dst, src) in slot.data_mut().iter_mut().zip(&found.2) {
                *dst = T::from_f64(*src as f64);
            }
        }
        Ok(())
    }

    fn branch_forward(
        &self,
        inputs: &SensorInputs<T>,
        trace: Option<&mut Vec<Vec<UnitIo<T>>>>,
    ) -> Result<Vec<Tensor<T>>, DscError> {
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut ios = trace;
        for b in &self.branches {
            let mut x = inputs
                .get(&b.sensor_id)
                .ok_or(DscError::MissingSensor {
                    sensor: b.sensor_id.clone(),
                })?
                .clone();
            let mut io = Vec::new();
            for u in &b.units {
                let y = unit_forward(u, &x)?;
                if ios.is_some() {
                    io.push(UnitIo {
                        input: x.clone(),
                        output: y.clone(),
                    });
                }
                x = y;
            }
            if let Some(t) = ios.as_deref_mut() {
                t.push(io);
            }
            outs.push(x);
        }
        Ok(outs)
    }

    fn trunk_forward(
        &self,
        fused: Tensor<T>,
        mut enc_trace: Option<&mut Vec<UnitIo<T>>>,
        mut dec_up_trace: Option<&mut Vec<UnitIo<T>>>,
        mut dec_post_trace: Option<&mut Vec<UnitIo<T>>>,
    ) -> Result<Tensor<T>, DscError> {
        let mut enc_outs: Vec<Tensor<T>> = Vec::with_capacity(self.encoders.len());
        let mut x = fused;
        for u in &self.encoders {
            let y = unit_forward(u, &x)?;
            if let Some(t) = enc_trace.as_deref_mut() {
                t.push(UnitIo {
                    input: x.clone(),
                    output: y.clone(),
                });
            }
            enc_outs.push(y.clone());
            x = y;
        }
        for d in &self.decoders {
            let up = unit_forward(&d.up, &x)?;
            if let Some(t) = dec_up_trace.as_deref_mut() {
                t.push(UnitIo {
                    input: x.clone(),
                    output: up.clone(),
                });
            }
            let cat = match d.skip_encoder {
                Some(e) => concat_channels(&[&up, &enc_outs[e]])?,
                None => up,
            };
            let y = unit_forward(&d.post, &cat)?;
            if let Some(t) = dec_post_trace.as_deref_mut() {
                t.push(UnitIo {
                    input: cat,
                    output: y.clone(),
                });
            }
            x = y;
        }
        Ok(x)
    }

    fn apply_depth_scale(mut depth: Tensor<T>) -> Tensor<T> {
        let s = T::from_f64(DEPTH_SCALE);
        for v in depth.data_mut() {
            *v = *v * s;
        }
        depth
    }

    /// Inference-only forward pass; caches nothing.
    pub fn forward(&self, inputs: &SensorInputs<T>) -> Result<ModelOutput<T>, DscError> {
        let outs = self.branch_forward(inputs, None)?;
        let fused = concat_channels(&outs.iter().collect::<Vec<_>>())?;
        let feat = self.trunk_forward(fused, None, None, None)?;
        Ok(ModelOutput {
            depth: Self::apply_depth_scale(unit_forward(&self.depth_head, &feat)?),
            return_logits: unit_forward(&self.return_head, &feat)?,
        })
    }

    /// Forward pass that records every unit's input/output for `backward`.
    pub fn forward_traced(&self, inputs: &SensorInputs<T>) -> Result<Trace<T>, DscError> {
        let mut branch_io = Vec::new();
        let outs = self.branch_forward(inputs, Some(&mut branch_io))?;
        let fused = concat_channels(&outs.iter().collect::<Vec<_>>())?;
        let mut enc_io = Vec::new();
        let mut dec_up_io = Vec::new();
        let mut dec_post_io = Vec::new();
        let feat = self.trunk_forward(
            fused,
            Some(&mut enc_io),
            Some(&mut dec_up_io),
            Some(&mut dec_post_io),
        )?;
        let output = ModelOutput {
            depth: Self::apply_depth_scale(unit_forward(&self.depth_head, &feat)?),
            return_logits: unit_forward(&self.return_head, &feat)?,
        };
        Ok(Trace {
            branch_io,
            enc_io,
            dec_up_io,
            dec_post_io,
            feat,
            output,
        })
    }

    /// Backward pass with the stop-gradient boundary in front of the return
    /// head: `grad_return_logits` reaches only the return head's parameters,
    /// so trunk and branch gradients are identical with or without the
    /// return loss.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_depth: &Tensor<T>,
        grad_return_logits: &Tensor<T>,
    ) -> Result<Gradients<T>, DscError> {
        let n_units = self.units().len();
        let mut per_unit: Vec<Option<UnitGrads<T>>> = (0..n_units).map(|_| None).collect();

        // Canonical unit indexing.
        let mut branch_base = Vec::with_capacity(self.branches.len());
        let mut at = 0;
        for b in &self.branches {
            branch_base.push(at);
            at += b.units.len();
        }
        let enc_base = at;
        let dec_base = enc_base + self.encoders.len();
        let depth_idx = dec_base + 2 * self.decoders.len();
        let return_idx = depth_idx + 1;

        // Heads. The return head's input gradient is dropped (blocking).
        let (_, rh_grads) = unit_backward(
            &self.return_head,
            &trace.feat,
            &trace.output.return_logits,
            grad_return_logits,
        )?;
        per_unit[return_idx] = Some(rh_grads);
        // Chain through the fixed depth gain: pred = DEPTH_SCALE * conv(f).
        let scaled_grad_depth = Self::apply_depth_scale(grad_depth.clone());
        let (mut cur, dh_grads) = unit_backward(
            &self.depth_head,
            &trace.feat,
            &trace.output.depth,
            &scaled_grad_depth,
        )?;
        per_unit[depth_idx] = Some(dh_grads);

        // Decoders in reverse execution order.
        let mut enc_skip_grads: Vec<Option<Tensor<T>>> =
            (0..self.encoders.len()).map(|_| None).collect();
        for (i, d) in self.decoders.iter().enumerate().rev() {
            let post_io = &trace.dec_post_io[i];
            let (gcat, post_grads) = unit_backward(&d.post, &post_io.input, &post_io.output, &cur)?;
            per_unit[dec_base + 2 * i + 1] = Some(post_grads);
            let gup = match d.skip_encoder {
                Some(e) => {
                    let parts =
                        concat_backward(&gcat, &[d.up.meta.cout, self.encoders[e].meta.cout])?;
                    let mut it = parts.into_iter();
                    let gup = it.next().unwrap();
                    enc_skip_grads[e] = Some(it.next().unwrap());
                    gup
                }
                None => gcat,
            };
            let up_io = &trace.dec_up_io[i];
            let (gin, up_grads) = unit_backward(&d.up, &up_io.input, &up_io.output, &gup)?;
            per_unit[dec_base + 2 * i] = Some(up_grads);
            cur = gin;
        }

        // Encoders in reverse, folding in skip gradients.
        for (l, u) in self.encoders.iter().enumerate().rev() {
            if let Some(skip) = &enc_skip_grads[l] {
                for (a, b) in cur.data_mut().iter_mut().zip(skip.data()) {
                    *a += *b;
                }
            }
            let io = &trace.enc_io[l];
            let (gin, grads) = unit_backward(u, &io.input, &io.output, &cur)?;
            per_unit[enc_base + l] = Some(grads);
            cur = gin;
        }

        // Split the fused gradient back into branch tails.
        let branch_channels: Vec<usize> = self
            .branches
            .iter()
            .map(|b| b.units.last().unwrap().meta.cout)
            .collect();
        let mut branch_grads = concat_backward(&cur, &branch_channels)?.into_iter();
        for (bi, b) in self.branches.iter().enumerate() {
            let mut g = branch_grads.next().unwrap();
            for (ui, u) in b.units.iter().enumerate().rev() {
                let io = &trace.branch_io[bi][ui];
                let (gin, grads) = unit_backward(u, &io.input, &io.output, &g)?;
                per_unit[branch_base[bi] + ui] = Some(grads);
                g = gin;
            }
        }

        let mut tensors = Vec::new();
        for slot in per_unit {
            tensors.extend(slot.expect("all units visited in backward"));
        }
        Ok(Gradients { tensors })
    }
}

/// Sigmoid-mask the depth prediction and lift surviving cells to 3-D points
/// along their cell-center rays.
pub fn reconstruct_pointcloud<T: Float>(
    output: &ModelOutput<T>,
    geometry: &LidarGeometry,
    threshold: f64,
) -> Result<PointCloud, DscError> {
    let (_, rows, cols) = output.depth.dims3("reconstruct_pointcloud depth")?;
    if rows != geometry.rows() || cols != geometry.cols {
        return Err(DscError::ShapeMismatch {
            context: "reconstruct_pointcloud: output grid vs geometry",
            expected: vec![geometry.rows(), geometry.cols],
            got: vec![rows, cols],
        });
    }
    if output.return_logits.shape() != output.depth.shape() {
        return Err(DscError::ShapeMismatch {
            context: "reconstruct_pointcloud: logits vs depth",
            expected: output.depth.shape().to_vec(),
            got: output.return_logits.shape().to_vec(),
        });
    }
    let mut points = Vec::new();
    let depth = output.depth.data();
    let logits = output.return_logits.data();
    for r in 0..rows {
        for c in 0..cols {
            let p = sigmoid_scalar(logits[r * cols + c].to_f64());
            if p >= threshold {
                let dir = geometry.cell_dir(r, c);
                let d = depth[r * cols + c].to_f64();
                points.push([dir[0] * d, dir[1] * d, dir[2] * d]);
            }
        }
    }
    Ok(PointCloud {
        points,
        reflectivity: None,
    })
}
