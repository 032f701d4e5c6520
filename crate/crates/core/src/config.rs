//! Declarative model/training configuration and its structured-text format.
//!
//! The format is line-based: `[section]` or `[section argument]` headers,
//! `key = value` entries, `#` comments. Branch layer rows mirror the resize
//! branch tables: units, channels, kernel dims, stride per line, where a
//! stride of `1/2` denotes transposed-convolution upsampling by 2.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::fnv1a64;
use crate::DscError;

/// Reference trunk grid at scale 1.0; the working grid is this times `scale`.
pub const BASE_GRID: (usize, usize) = (64, 256);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelMode {
    Dense,
    Separable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorKind {
    Camera,
    Lidar,
}

/// One table row: `units` stacked convolutions sharing kernel/stride/width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub units: usize,
    pub channels_out: usize,
    pub kernel: (usize, usize),
    pub stride: Stride,
}

/// Integer stride for convolutions; `Up` holds the reciprocal of a
/// fractional stride (so paper-style `(1/2, 1)` is `Up(2, 1)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stride {
    Conv(usize, usize),
    Up(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSpec {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub channels_in: usize,
    pub input: (usize, usize),
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrunkSpec {
    /// Encoder/decoder channel schedule, one entry per stride-2 level.
    pub channels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub seed: u64,
    pub scale: f64,
    pub kernel_mode: KernelMode,
    pub precision: Precision,
    /// Branches sorted canonically by sensor id; concat follows this order.
    pub branches: Vec<BranchSpec>,
    pub trunk: TrunkSpec,
}

impl ModelConfig {
    /// Working trunk grid: the scale-1 reference grid times `scale`.
    pub fn grid(&self) -> (usize, usize) {
        let r = (BASE_GRID.0 as f64 * self.scale + 0.5) as usize;
        let c = (BASE_GRID.1 as f64 * self.scale + 0.5) as usize;
        (r.max(1), c.max(1))
    }

    pub fn sensor_ids(&self) -> Vec<String> {
        self.branches.iter().map(|b| b.sensor_id.clone()).collect()
    }

    pub fn branch(&self, sensor_id: &str) -> Option<&BranchSpec> {
        self.branches.iter().find(|b| b.sensor_id == sensor_id)
    }
}

/// Optimizer and schedule settings. Defaults carry the reference training
/// routine; `desk()` is the scaled-down stand-in used for CPU runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// Weight on the return-classifier loss. Gradient blocking makes the
    /// trunk insensitive to it.
    pub lambda_return: f64,
    /// Global L2 gradient-norm ceiling, applied independently to the
    /// trunk-path parameters and to the return head (so the clip factor
    /// cannot leak return-loss information across the stop-gradient
    /// boundary). 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.013,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_decay_factor: 0.2,
            lr_decay_every: 60_000,
            batch_size: 48,
            max_iterations: 180_000,
            eval_every: 5_000,
            seed: 0,
            lambda_return: 1.0,
            clip_norm: 10.0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale stand-in for the full schedule: small batches, short run,
    /// proportionally earlier decay, and a learning rate retuned for the
    /// much smaller batch.
    pub fn desk() -> Self {
        TrainConfig {
            lr: 0.004,
            batch_size: 4,
            max_iterations: 5_000,
            lr_decay_every: 2_000,
            eval_every: 1_000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DscError> {
        let pos = [
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lambda_return", self.lambda_return),
        ];
        for (name, v) in pos {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(DscError::Invalid {
                    message: format!("train config: {name} must be finite and >= 0"),
                });
            }
        }
        if !(self.lr > 0.0) {
            return Err(DscError::Invalid {
                message: "train config: lr must be positive".to_string(),
            });
        }
        if !(self.clip_norm >= 0.0) || !self.clip_norm.is_finite() {
            return Err(DscError::Invalid {
                message: "train config: clip_norm must be finite and >= 0".to_string(),
            });
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(DscError::Invalid {
                message: "train config: lr_decay_factor must be in (0, 1)".to_string(),
            });
        }
        if self.lr_decay_every == 0
            || self.batch_size == 0
            || self.max_iterations == 0
            || self.eval_every == 0
        {
            return Err(DscError::Invalid {
                message: "train config: counts must be positive".to_string(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Structured-text document parsing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub arg: Option<String>,
    pub entries: Vec<Entry>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Doc {
    pub sections: Vec<Section>,
}

impl Doc {
    pub fn parse(text: &str) -> Result<Doc, DscError> {
        let mut sections: Vec<Section> = vec![Section {
            name: String::new(),
            arg: None,
            entries: Vec::new(),
            line: 0,
        }];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner.strip_suffix(']').ok_or(DscError::Config {
                    line: line_no,
                    message: "unterminated section header".to_string(),
                })?;
                let inner = inner.trim();
                let (name, arg) = match inner.split_once(char::is_whitespace) {
                    Some((n, a)) => (n.to_string(), Some(a.trim().to_string())),
                    None => (inner.to_string(), None),
                };
                if name.is_empty() {
                    return Err(DscError::Config {
                        line: line_no,
                        message: "empty section name".to_string(),
                    });
                }
                sections.push(Section {
                    name,
                    arg,
                    entries: Vec::new(),
                    line: line_no,
                });
            } else if let Some((k, v)) = line.split_once('=') {
                sections.last_mut().unwrap().entries.push(Entry {
                    key: k.trim().to_string(),
                    value: v.trim().to_string(),
                    line: line_no,
                });
            } else {
                return Err(DscError::Config {
                    line: line_no,
                    message: format!("expected `key = value` or `[section]`, got `{line}`"),
                });
            }
        }
        Ok(Doc { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, DscError> {
        self.get(key).ok_or(DscError::Config {
            line: self.line,
            message: format!("section [{}] is missing key `{}`", self.name, key),
        })
    }
}

fn parse_usize(e: &Entry) -> Result<usize, DscError> {
    e.value.parse::<usize>().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("`{}`: expected an unsigned integer, got `{}`", e.key, e.value),
    })
}

fn parse_u64(e: &Entry) -> Result<u64, DscError> {
    e.value.parse::<u64>().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("`{}`: expected an unsigned integer, got `{}`", e.key, e.value),
    })
}

fn parse_f64(e: &Entry) -> Result<f64, DscError> {
    parse_fraction(&e.value).ok_or(DscError::Config {
        line: e.line,
        message: format!("`{}`: expected a number, got `{}`", e.key, e.value),
    })
}

/// Accepts plain decimals and `a/b` fractions.
fn parse_fraction(s: &str) -> Option<f64> {
    if let Some((a, b)) = s.split_once('/') {
        let a = a.trim().parse::<f64>().ok()?;
        let b = b.trim().parse::<f64>().ok()?;
        if b == 0.0 {
            return None;
        }
        Some(a / b)
    } else {
        s.trim().parse::<f64>().ok()
    }
}

fn parse_usize_list(e: &Entry) -> Result<Vec<usize>, DscError> {
    e.value
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| DscError::Config {
                line: e.line,
                message: format!("`{}`: expected integers, got `{}`", e.key, t),
            })
        })
        .collect()
}

/// One stride token: an integer or a reciprocal fraction like `1/2`.
fn parse_stride_token(tok: &str, line: usize) -> Result<(usize, bool), DscError> {
    if let Some((num, den)) = tok.split_once('/') {
        let (num, den) = (num.trim(), den.trim());
        let n: usize = num.parse().ok().filter(|&n| n == 1).ok_or(DscError::Config {
            line,
            message: format!("fractional stride must be of the form 1/k, got `{tok}`"),
        })?;
        let d: usize = den.parse().map_err(|_| DscError::Config {
            line,
            message: format!("bad stride `{tok}`"),
        })?;
        let _ = n;
        if d == 0 {
            return Err(DscError::Config {
                line,
                message: "stride denominator must be positive".to_string(),
            });
        }
        Ok((d, true))
    } else {
        let v: usize = tok.parse().map_err(|_| DscError::Config {
            line,
            message: format!("bad stride `{tok}`"),
        })?;
        if v == 0 {
            return Err(DscError::Config {
                line,
                message: "stride must be positive".to_string(),
            });
        }
        Ok((v, false))
    }
}

fn parse_layer_row(e: &Entry) -> Result<LayerSpec, DscError> {
    let toks: Vec<&str> = e.value.split_whitespace().collect();
    if toks.len() != 6 {
        return Err(DscError::Config {
            line: e.line,
            message: format!(
                "layer row needs 6 fields (units channels kh kw sh sw), got {}",
                toks.len()
            ),
        });
    }
    let units: usize = toks[0].parse().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("bad units `{}`", toks[0]),
    })?;
    let channels: usize = toks[1].parse().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("bad channels `{}`", toks[1]),
    })?;
    let kh: usize = toks[2].parse().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("bad kernel `{}`", toks[2]),
    })?;
    let kw: usize = toks[3].parse().map_err(|_| DscError::Config {
        line: e.line,
        message: format!("bad kernel `{}`", toks[3]),
    })?;
    let (sh, sh_up) = parse_stride_token(toks[4], e.line)?;
    let (sw, sw_up) = parse_stride_token(toks[5], e.line)?;
    if units == 0 || channels == 0 || kh == 0 || kw == 0 {
        return Err(DscError::Config {
            line: e.line,
            message: "layer row fields must be positive".to_string(),
        });
    }
    let stride = if sh_up || sw_up {
        // A fractional stride on either axis makes the row transposed;
        // a plain `1` on the other axis means no upsampling there.
        if (sh_up && sh == 0) || (sw_up && sw == 0) {
            unreachable!()
        }
        if (!sh_up && sh != 1) || (!sw_up && sw != 1) {
            return Err(DscError::Config {
                line: e.line,
                message: "cannot mix downsampling and upsampling in one row".to_string(),
            });
        }
        Stride::Up(if sh_up { sh } else { 1 }, if sw_up { sw } else { 1 })
    } else {
        Stride::Conv(sh, sw)
    };
    if units > 1 && !matches!(stride, Stride::Conv(1, 1)) {
        return Err(DscError::Config {
            line: e.line,
            message: "multi-unit rows must use stride (1,1)".to_string(),
        });
    }
    Ok(LayerSpec {
        units,
        channels_out: channels,
        kernel: (kh, kw),
        stride,
    })
}

impl ModelConfig {
    pub fn from_doc(doc: &Doc) -> Result<ModelConfig, DscError> {
        let model = doc.section("model").ok_or(DscError::Config {
            line: 0,
            message: "missing [model] section".to_string(),
        })?;
        let seed = model.get("seed").map(parse_u64).transpose()?.unwrap_or(0);
        let scale = model.get("scale").map(parse_f64).transpose()?.unwrap_or(1.0);
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(DscError::Config {
                line: model.line,
                message: "scale must be in (0, 1]".to_string(),
            });
        }
        let kernel_mode = match model.get("kernel_mode").map(|e| e.value.as_str()) {
            None | Some("dense") => KernelMode::Dense,
            Some("separable") => KernelMode::Separable,
            Some(other) => {
                return Err(DscError::Config {
                    line: model.line,
                    message: format!("kernel_mode must be dense|separable, got `{other}`"),
                })
            }
        };
        let precision = match model.get("precision").map(|e| e.value.as_str()) {
            None | Some("f32") => Precision::F32,
            Some("f64") => Precision::F64,
            Some(other) => {
                return Err(DscError::Config {
                    line: model.line,
                    message: format!("precision must be f32|f64, got `{other}`"),
                })
            }
        };

        let trunk_sec = doc.section("trunk").ok_or(DscError::Config {
            line: 0,
            message: "missing [trunk] section".to_string(),
        })?;
        let channels = parse_usize_list(trunk_sec.require("channels")?)?;
        if channels.is_empty() {
            return Err(DscError::Config {
                line: trunk_sec.line,
                message: "trunk channels must list at least one level".to_string(),
            });
        }

        let mut branches = Vec::new();
        for sec in doc.sections_named("branch") {
            let sensor_id = sec.arg.clone().ok_or(DscError::Config {
                line: sec.line,
                message: "branch section needs a sensor id: [branch <id>]".to_string(),
            })?;
            let kind = match sec.require("kind")?.value.as_str() {
                "camera" => SensorKind::Camera,
                "lidar" => SensorKind::Lidar,
                other => {
                    return Err(DscError::Config {
                        line: sec.line,
                        message: format!("branch kind must be camera|lidar, got `{other}`"),
                    })
                }
            };
            let channels_in = parse_usize(sec.require("channels_in")?)?;
            let input = parse_usize_list(sec.require("input")?)?;
            if input.len() != 2 {
                return Err(DscError::Config {
                    line: sec.line,
                    message: "branch input must be `rows cols`".to_string(),
                });
            }
            let mut layers = Vec::new();
            for e in sec.entries.iter().filter(|e| e.key == "layer") {
                layers.push(parse_layer_row(e)?);
            }
            if layers.is_empty() {
                return Err(DscError::Config {
                    line: sec.line,
                    message: "branch has no layer rows".to_string(),
                });
            }
            branches.push(BranchSpec {
                sensor_id,
                kind,
                channels_in,
                input: (input[0], input[1]),
                layers,
            });
        }
        if branches.is_empty() {
            return Err(DscError::Config {
                line: 0,
                message: "model needs at least one [branch] section".to_string(),
            });
        }
        branches.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
        for pair in branches.windows(2) {
            if pair[0].sensor_id == pair[1].sensor_id {
                return Err(DscError::Config {
                    line: 0,
                    message: format!("duplicate branch `{}`", pair[0].sensor_id),
                });
            }
        }

        Ok(ModelConfig {
            seed,
            scale,
            kernel_mode,
            precision,
            branches,
            trunk: TrunkSpec { channels },
        })
    }

    pub fn parse(text: &str) -> Result<ModelConfig, DscError> {
        ModelConfig::from_doc(&Doc::parse(text)?)
    }

    /// Canonical text form used for echoing, persisting and hashing.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[model]\n");
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("scale = {}\n", self.scale));
        s.push_str(&format!(
            "kernel_mode = {}\n",
            match self.kernel_mode {
                KernelMode::Dense => "dense",
                KernelMode::Separable => "separable",
            }
        ));
        s.push_str(&format!(
            "precision = {}\n",
            match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            }
        ));
        s.push_str("\n[trunk]\nchannels =");
        for c in &self.trunk.channels {
            s.push_str(&format!(" {c}"));
        }
        s.push('\n');
        for b in &self.branches {
            s.push_str(&format!("\n[branch {}]\n", b.sensor_id));
            s.push_str(&format!(
                "kind = {}\n",
                match b.kind {
                    SensorKind::Camera => "camera",
                    SensorKind::Lidar => "lidar",
                }
            ));
            s.push_str(&format!("channels_in = {}\n", b.channels_in));
            s.push_str(&format!("input = {} {}\n", b.input.0, b.input.1));
            for l in &b.layers {
                let (sh, sw) = match l.stride {
                    Stride::Conv(a, b) => (format!("{a}"), format!("{b}")),
                    Stride::Up(a, b) => (
                        if a == 1 { "1".to_string() } else { format!("1/{a}") },
                        if b == 1 { "1".to_string() } else { format!("1/{b}") },
                    ),
                };
                s.push_str(&format!(
                    "layer = {} {} {} {} {} {}\n",
                    l.units, l.channels_out, l.kernel.0, l.kernel.1, sh, sw
                ));
            }
        }
        s
    }

    pub fn config_hash(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }
}

impl TrainConfig {
    /// Read a `[train]` section, starting from desk or reference defaults.
    pub fn from_doc(doc: &Doc, base: TrainConfig) -> Result<TrainConfig, DscError> {
        let mut cfg = base;
        if let Some(sec) = doc.section("train") {
            for e in &sec.entries {
                match e.key.as_str() {
                    "lr" => cfg.lr = parse_f64(e)?,
                    "momentum" => cfg.momentum = parse_f64(e)?,
                    "weight_decay" => cfg.weight_decay = parse_f64(e)?,
                    "lr_decay_factor" => cfg.lr_decay_factor = parse_f64(e)?,
                    "lr_decay_every" => cfg.lr_decay_every = parse_usize(e)?,
                    "batch_size" => cfg.batch_size = parse_usize(e)?,
                    "max_iterations" => cfg.max_iterations = parse_usize(e)?,
                    "eval_every" => cfg.eval_every = parse_usize(e)?,
                    "seed" => cfg.seed = parse_u64(e)?,
                    "lambda_return" => cfg.lambda_return = parse_f64(e)?,
                    "clip_norm" => cfg.clip_norm = parse_f64(e)?,
                    other => {
                        return Err(DscError::Config {
                            line: e.line,
                            message: format!("unknown [train] key `{other}`"),
                        })
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn canonical_text(&self) -> String {
        format!(
            "[train]\nlr = {}\nmomentum = {}\nweight_decay = {}\nlr_decay_factor = {}\n\
             lr_decay_every = {}\nbatch_size = {}\nmax_iterations = {}\neval_every = {}\n\
             seed = {}\nlambda_return = {}\nclip_norm = {}\n",
            self.lr,
            self.momentum,
            self.weight_decay,
            self.lr_decay_factor,
            self.lr_decay_every,
            self.batch_size,
            self.max_iterations,
            self.eval_every,
            self.seed,
            self.lambda_return,
            self.clip_norm
        )
    }
}
