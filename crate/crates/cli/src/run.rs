//! Command orchestration: threaded batch execution, training with file
//! logging/checkpointing/resume, evaluation reports, inference export and
//! resource counting.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dsc_core::config::{Doc, KernelMode, ModelConfig, Precision, TrainConfig};
use dsc_core::float::Float;
use dsc_core::metrics::{default_zones, zones_from_doc, MetricZone, MetricsReport};
use dsc_core::model::{build_model, reconstruct_pointcloud, Gradients, Model, ModelOutput};
use dsc_core::resource::{count_model_sections, ResourceCount, SectionCounts};
use dsc_core::rng::fnv1a64;
use dsc_core::loss::LossBundle;
use dsc_core::train::{
    evaluate_split, sample_gradients, sample_output, train, zero_velocity, BatchExecutor,
    LogRecord, TrainData, TrainSink,
};
use dsc_core::tensor::Tensor;
use dsc_core::DscError;

use crate::checkpoint::{self, checkpoint_paths, TensorEntry};
use crate::dataset::{self, SensorSet};
use crate::error::{Category, CliError, Result};
use crate::manifest::Manifest;
use crate::{pcdm_file, ply, report};

/// Worker-thread cap: `DSC_THREADS` when set, otherwise the machine's
/// available parallelism.
pub fn worker_threads() -> usize {
    if let Ok(v) = std::env::var("DSC_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Batch executor running sample elements on worker threads. Results are
/// reassembled in batch order, so outputs are identical for any thread
/// count.
pub struct ThreadedExecutor {
    pub threads: usize,
}

impl ThreadedExecutor {
    fn run<T, R: Send>(
        &self,
        indices: &[usize],
        f: impl Fn(usize) -> std::result::Result<R, DscError> + Sync,
        _marker: std::marker::PhantomData<T>,
    ) -> std::result::Result<Vec<R>, DscError> {
        let nt = self.threads.max(1).min(indices.len().max(1));
        if nt <= 1 {
            return indices.iter().map(|&i| f(i)).collect();
        }
        let mut slots: Vec<Option<std::result::Result<R, DscError>>> =
            (0..indices.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..nt {
                let f = &f;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::new();
                    for (j, &i) in indices.iter().enumerate() {
                        if j % nt == t {
                            out.push((j, f(i)));
                        }
                    }
                    out
                }));
            }
            for h in handles {
                for (j, r) in h.join().expect("worker thread panicked") {
                    slots[j] = Some(r);
                }
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every slot filled"))
            .collect()
    }
}

impl<T: Float> BatchExecutor<T> for ThreadedExecutor {
    fn batch_gradients(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
        lambda_return: f64,
    ) -> std::result::Result<Vec<(Gradients<T>, LossBundle)>, DscError> {
        self.run(
            indices,
            |i| sample_gradients(model, data, i, lambda_return),
            std::marker::PhantomData::<T>,
        )
    }

    fn forward_many(
        &self,
        model: &Model<T>,
        data: &TrainData,
        indices: &[usize],
    ) -> std::result::Result<Vec<ModelOutput<T>>, DscError> {
        self.run(
            indices,
            |i| sample_output(model, data, i),
            std::marker::PhantomData::<T>,
        )
    }
}

/// Parsed run configuration: model, trainer, raw text for persistence.
pub struct ResolvedConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ResolvedConfig {
    pub fn parse(text: &str) -> Result<ResolvedConfig> {
        let doc = Doc::parse(text).map_err(CliError::from)?;
        let model = ModelConfig::from_doc(&doc).map_err(CliError::from)?;
        let train = TrainConfig::from_doc(&doc, TrainConfig::default()).map_err(CliError::from)?;
        Ok(ResolvedConfig { model, train })
    }

    pub fn read(path: &Path) -> Result<ResolvedConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&path.display().to_string(), e))?;
        ResolvedConfig::parse(&text)
    }

    /// Canonical text of the full resolved configuration.
    pub fn canonical_text(&self) -> String {
        format!(
            "{}\n{}",
            self.model.canonical_text(),
            self.train.canonical_text()
        )
    }

    pub fn echo(&self) {
        println!("# resolved configuration (hash {:016x})", self.hash());
        print!("{}", self.canonical_text());
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }
}

fn needed_sensors(model: &ModelConfig) -> Result<SensorSet> {
    SensorSet::from_ids(model.branches.iter().map(|b| b.sensor_id.as_str()))
}

fn check_grid(model: &ModelConfig, manifest: &Manifest) -> Result<()> {
    if model.grid() != (manifest.hdl_rows, manifest.hdl_cols) {
        return Err(CliError::new(
            Category::Shape,
            format!(
                "model grid {}x{} does not match dataset grid {}x{}",
                model.grid().0,
                model.grid().1,
                manifest.hdl_rows,
                manifest.hdl_cols
            ),
        ));
    }
    Ok(())
}

fn write_meta(
    path: &Path,
    iteration: usize,
    config_hash: u64,
    metrics: &MetricsReport,
) -> Result<()> {
    let mut s = format!(
        "iteration = {iteration}\nconfig_hash = {config_hash:016x}\n\n"
    );
    s.push_str(&report::encode_kv(metrics, None));
    std::fs::write(path, s).map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn read_meta_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

struct FileSink<'a> {
    log: std::fs::File,
    out_dir: &'a Path,
    config_hash: u64,
    started: Instant,
    max_iterations: usize,
}

impl<'a> FileSink<'a> {
    fn new(out_dir: &'a Path, config_hash: u64, max_iterations: usize) -> Result<Self> {
        let log_path = out_dir.join("train.log");
        let log = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| CliError::io(&log_path.display().to_string(), e))?;
        Ok(FileSink {
            log,
            out_dir,
            config_hash,
            started: Instant::now(),
            max_iterations,
        })
    }
}

impl<T: Float> TrainSink<T> for FileSink<'_> {
    fn on_log(&mut self, r: &LogRecord) -> std::result::Result<(), DscError> {
        // Deterministic fields only; wall-clock timing goes to stderr.
        writeln!(
            self.log,
            "iter={} depth_loss={} return_loss={} lr={} n_valid={}",
            r.iteration, r.depth_loss, r.return_loss, r.lr, r.n_valid
        )
        .map_err(|e| DscError::Invalid {
            message: format!("writing train.log: {e}"),
        })
    }

    fn on_checkpoint(
        &mut self,
        model: &Model<T>,
        velocity: &[Tensor<T>],
        iteration: usize,
        metrics: &MetricsReport,
    ) -> std::result::Result<(), DscError> {
        let to_cli = |e: CliError| DscError::Invalid {
            message: e.to_string(),
        };
        let paths = checkpoint_paths(self.out_dir, iteration);
        let weights = model.export_params();
        checkpoint::write(&paths.weights, &weights).map_err(to_cli)?;
        let names = model.param_names();
        let momentum: Vec<TensorEntry> = names
            .into_iter()
            .zip(velocity)
            .map(|(n, t)| (n, t.shape().to_vec(), t.to_f32_vec()))
            .collect();
        checkpoint::write(&paths.momentum, &momentum).map_err(to_cli)?;
        write_meta(&paths.meta, iteration, self.config_hash, metrics).map_err(to_cli)?;
        eprintln!(
            "[{iteration}/{}] absErrorRel={:.4}% returnErr={:.4}% elapsed={:.1}s",
            self.max_iterations,
            metrics.overall.abs_rel_pct,
            metrics.return_error_pct,
            self.started.elapsed().as_secs_f64()
        );
        Ok(())
    }
}

fn run_train<T: Float>(
    cfg: &ResolvedConfig,
    data: &TrainData,
    out_dir: &Path,
    threads: usize,
) -> Result<()> {
    let mut model: Model<T> = build_model(&cfg.model).map_err(CliError::from)?;
    let mut velocity = zero_velocity(&model);
    let mut start_iteration = 0usize;

    if let Some(it) = checkpoint::latest_checkpoint(out_dir)? {
        let paths = checkpoint_paths(out_dir, it);
        let meta = read_meta_kv(&paths.meta)?;
        if let Some((_, h)) = meta.iter().find(|(k, _)| k == "config_hash") {
            let expect = format!("{:016x}", cfg.hash());
            if *h != expect {
                return Err(CliError::new(
                    Category::Config,
                    format!(
                        "checkpoint at iteration {it} was trained with config hash {h}, current is {expect}"
                    ),
                ));
            }
        }
        let weights = checkpoint::read(&paths.weights)?;
        model.load_params(&weights).map_err(CliError::from)?;
        let momentum = checkpoint::read(&paths.momentum)?;
        load_velocity(&model, &mut velocity, &momentum)?;
        start_iteration = it;
        eprintln!("resuming from checkpoint at iteration {it}");
    }

    if start_iteration >= cfg.train.max_iterations {
        eprintln!(
            "checkpoint already at {start_iteration} >= max_iterations {}; nothing to do",
            cfg.train.max_iterations
        );
        return Ok(());
    }

    let executor = ThreadedExecutor { threads };
    let mut sink = FileSink::new(out_dir, cfg.hash(), cfg.train.max_iterations)?;
    train(
        &mut model,
        &mut velocity,
        data,
        &cfg.train,
        &default_zones(),
        &executor,
        &mut sink,
        start_iteration,
    )
    .map_err(CliError::from)
}

fn load_velocity<T: Float>(
    model: &Model<T>,
    velocity: &mut [Tensor<T>],
    entries: &[TensorEntry],
) -> Result<()> {
    let names = model.param_names();
    for (name, slot) in names.iter().zip(velocity.iter_mut()) {
        let found = entries
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| CliError::format(format!("momentum sidecar missing `{name}`")))?;
        if found.1 != slot.shape() {
            return Err(CliError::format(format!(
                "momentum tensor `{name}` has shape {:?}, expected {:?}",
                found.1,
                slot.shape()
            )));
        }
        for (dst, src) in slot.data_mut().iter_mut().zip(&found.2) {
            *dst = T::from_f64(*src as f64);
        }
    }
    Ok(())
}

pub fn train_command(config_path: &Path, data_dir: &Path, out_dir: &Path) -> Result<()> {
    let cfg = ResolvedConfig::read(config_path)?;
    cfg.echo();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(&out_dir.display().to_string(), e))?;
    let resolved_path = out_dir.join("config.resolved");
    std::fs::write(&resolved_path, cfg.canonical_text())
        .map_err(|e| CliError::io(&resolved_path.display().to_string(), e))?;

    let needed = needed_sensors(&cfg.model)?;
    let (manifest, data) = dataset::load(data_dir, &needed)?;
    dataset::check_split(&manifest)?;
    check_grid(&cfg.model, &manifest)?;
    if data.train_idx.is_empty() {
        return Err(CliError::data("dataset has no training samples"));
    }
    let threads = worker_threads();
    eprintln!(
        "training on {} samples ({} train / {} val), {} threads",
        manifest.samples,
        data.train_idx.len(),
        data.val_idx.len(),
        threads
    );
    match cfg.model.precision {
        Precision::F32 => run_train::<f32>(&cfg, &data, out_dir, threads),
        Precision::F64 => run_train::<f64>(&cfg, &data, out_dir, threads),
    }
}

/// Locate the config for a checkpoint: explicit flag or the
/// `config.resolved` persisted next to it.
fn config_for_checkpoint(ckpt: &Path, explicit: Option<&Path>) -> Result<ResolvedConfig> {
    if let Some(p) = explicit {
        return ResolvedConfig::read(p);
    }
    let sibling = ckpt
        .parent()
        .map(|d| d.join("config.resolved"))
        .filter(|p| p.exists());
    match sibling {
        Some(p) => ResolvedConfig::read(&p),
        None => Err(CliError::new(
            Category::Config,
            "no config.resolved next to the checkpoint; pass --config",
        )),
    }
}

fn load_model_from_checkpoint<T: Float>(
    cfg: &ResolvedConfig,
    ckpt: &Path,
) -> Result<Model<T>> {
    let mut model: Model<T> = build_model(&cfg.model).map_err(CliError::from)?;
    let weights = checkpoint::read(ckpt)?;
    model.load_params(&weights).map_err(CliError::from)?;
    // The meta sidecar, when present, must agree on the config hash.
    if let Some(it) = checkpoint::iteration_of(ckpt) {
        if let Some(dir) = ckpt.parent() {
            let meta_path = checkpoint_paths(dir, it).meta;
            if meta_path.exists() {
                let meta = read_meta_kv(&meta_path)?;
                if let Some((_, h)) = meta.iter().find(|(k, _)| k == "config_hash") {
                    let expect = format!("{:016x}", cfg.hash());
                    if *h != expect {
                        return Err(CliError::new(
                            Category::Config,
                            format!("checkpoint config hash {h} does not match {expect}"),
                        ));
                    }
                }
            }
        }
    }
    Ok(model)
}

pub struct EvalArgs<'a> {
    pub ckpt: &'a Path,
    pub data_dir: &'a Path,
    pub zones: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub out_dir: Option<&'a Path>,
}

pub fn eval_command(args: &EvalArgs<'_>) -> Result<()> {
    let cfg = config_for_checkpoint(args.ckpt, args.config)?;
    cfg.echo();
    let zones = match args.zones {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(&p.display().to_string(), e))?;
            let doc = Doc::parse(&text).map_err(CliError::from)?;
            let z = zones_from_doc(&doc).map_err(CliError::from)?;
            if z.is_empty() {
                return Err(CliError::new(Category::Config, "zones file defines no zones"));
            }
            z
        }
        None => default_zones(),
    };
    let needed = needed_sensors(&cfg.model)?;
    let (manifest, data) = dataset::load(args.data_dir, &needed)?;
    check_grid(&cfg.model, &manifest)?;
    if data.val_idx.is_empty() {
        return Err(CliError::data("dataset has no validation samples"));
    }
    fn eval_with<T: Float>(
        cfg: &ResolvedConfig,
        ckpt: &Path,
        data: &TrainData,
        zones: &[MetricZone],
    ) -> Result<MetricsReport> {
        let model: Model<T> = load_model_from_checkpoint(cfg, ckpt)?;
        let executor = ThreadedExecutor {
            threads: worker_threads(),
        };
        evaluate_split(&model, data, &data.val_idx, zones, &executor).map_err(CliError::from)
    }

    let resources = count_model_sections(&cfg.model).map_err(CliError::from)?;
    let report = match cfg.model.precision {
        Precision::F32 => eval_with::<f32>(&cfg, args.ckpt, &data, &zones)?,
        Precision::F64 => eval_with::<f64>(&cfg, args.ckpt, &data, &zones)?,
    };
    let table = report::encode_table(&report, Some(resources.total));
    print!("{table}");
    let out_dir = args
        .out_dir
        .map(Path::to_path_buf)
        .or_else(|| args.ckpt.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(&out_dir.display().to_string(), e))?;
    let kv_path = out_dir.join("metrics.kv");
    std::fs::write(&kv_path, report::encode_kv(&report, Some(resources.total)))
        .map_err(|e| CliError::io(&kv_path.display().to_string(), e))?;
    let table_path = out_dir.join("metrics.txt");
    std::fs::write(&table_path, table)
        .map_err(|e| CliError::io(&table_path.display().to_string(), e))?;
    Ok(())
}

pub struct InferArgs<'a> {
    pub ckpt: &'a Path,
    pub sample_dir: &'a Path,
    pub out: &'a Path,
    pub threshold: f64,
    pub config: Option<&'a Path>,
}

pub fn infer_command(args: &InferArgs<'_>) -> Result<()> {
    let cfg = config_for_checkpoint(args.ckpt, args.config)?;
    cfg.echo();
    let ext = args
        .out
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if !matches!(ext.as_str(), "ply" | "csv" | "pcdm") {
        return Err(CliError::usage(format!(
            "unsupported output extension `.{ext}` (expected .ply, .csv or .pcdm)"
        )));
    }
    let data_root = args.sample_dir.parent().ok_or_else(|| {
        CliError::data("sample directory must live inside a dataset directory")
    })?;
    let manifest = Manifest::read(data_root)?;
    check_grid(&cfg.model, &manifest)?;
    let rig = manifest.rig();
    let needed = needed_sensors(&cfg.model)?;
    let sample = dataset::load_sample(args.sample_dir, &needed, &manifest)?;

    fn infer_with<T: Float>(
        cfg: &ResolvedConfig,
        ckpt: &Path,
        sample: &dsc_core::sim::Sample,
        scala_geom: &dsc_core::pcdm::LidarGeometry,
    ) -> Result<ModelOutput<f32>> {
        let model: Model<T> = load_model_from_checkpoint(cfg, ckpt)?;
        let inputs = dsc_core::train::prepare_inputs::<T>(&model, sample, scala_geom)
            .map_err(CliError::from)?;
        let out = model.forward(&inputs).map_err(CliError::from)?;
        Ok(ModelOutput {
            depth: out.depth.cast::<f32>(),
            return_logits: out.return_logits.cast::<f32>(),
        })
    }

    let output = match cfg.model.precision {
        Precision::F32 => infer_with::<f32>(&cfg, args.ckpt, &sample, &rig.scala)?,
        Precision::F64 => infer_with::<f64>(&cfg, args.ckpt, &sample, &rig.scala)?,
    };

    let comments = vec![
        format!("config_hash {:016x}", cfg.hash()),
        format!("checkpoint {}", args.ckpt.display()),
        format!("sample {}", args.sample_dir.display()),
        format!("threshold {}", args.threshold),
    ];
    match ext.as_str() {
        "ply" => {
            let cloud = reconstruct_pointcloud(&output, &rig.hdl, args.threshold)
                .map_err(CliError::from)?;
            ply::write_ply(args.out, &cloud, &comments)?;
            println!("wrote {} ({} vertices)", args.out.display(), cloud.len());
        }
        "csv" => {
            let cloud = reconstruct_pointcloud(&output, &rig.hdl, args.threshold)
                .map_err(CliError::from)?;
            ply::write_csv(args.out, &cloud, &comments)?;
            println!("wrote {} ({} points)", args.out.display(), cloud.len());
        }
        "pcdm" => {
            let pcdm = predicted_pcdm(&output, &rig.hdl, args.threshold);
            pcdm_file::write(args.out, &pcdm, &rig.hdl)?;
            let sidecar = args.out.with_extension("pcdm.cfg");
            std::fs::write(&sidecar, cfg.canonical_text())
                .map_err(|e| CliError::io(&sidecar.display().to_string(), e))?;
            println!(
                "wrote {} ({} returns)",
                args.out.display(),
                pcdm.returns()
            );
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Masked prediction as a PCDM: cells at or above the probability threshold
/// keep their predicted depth clamped into the representable (0, max_range]
/// band; everything else is a non-return.
pub fn predicted_pcdm(
    output: &ModelOutput<f32>,
    geometry: &dsc_core::pcdm::LidarGeometry,
    threshold: f64,
) -> dsc_core::pcdm::Pcdm {
    let rows = geometry.rows();
    let cols = geometry.cols;
    let mut pcdm = dsc_core::pcdm::Pcdm::zeros(rows, cols);
    let max_range = if geometry.max_range.is_finite() {
        geometry.max_range as f32
    } else {
        f32::MAX
    };
    for i in 0..rows * cols {
        let logit = output.return_logits.data()[i] as f64;
        let p = dsc_core::layers::sigmoid_scalar(logit);
        if p >= threshold {
            let d = output.depth.data()[i].clamp(0.001, max_range);
            pcdm.depth[i] = d;
            pcdm.mask[i] = 1;
        }
    }
    pcdm
}

pub fn count_command(config_path: &Path, compare: bool, no_trunk: bool) -> Result<()> {
    let cfg = ResolvedConfig::read(config_path)?;
    cfg.echo();
    println!();
    let counts = |mode: KernelMode| -> Result<SectionCounts> {
        let model = ModelConfig {
            kernel_mode: mode,
            ..cfg.model.clone()
        };
        count_model_sections(&model).map_err(CliError::from)
    };
    let print_table = |label: &str, sc: &SectionCounts| {
        println!("{label}");
        println!("{:<28} {:>12} {:>12} {:>14}", "Section", "GFLOP", "Params(MB)", "Params");
        let mut shown_total = ResourceCount::ZERO;
        for (name, c) in &sc.sections {
            if no_trunk && (name == "trunk" || name == "heads") {
                continue;
            }
            println!(
                "{:<28} {:>12.4} {:>12.4} {:>14}",
                name,
                c.gflops(),
                c.param_mb(),
                c.params
            );
            shown_total = shown_total + *c;
        }
        println!(
            "{:<28} {:>12.4} {:>12.4} {:>14}",
            "total",
            shown_total.gflops(),
            shown_total.param_mb(),
            shown_total.params
        );
        shown_total
    };
    if compare {
        let dense = counts(KernelMode::Dense)?;
        let lite = counts(KernelMode::Separable)?;
        let d = print_table("dense kernels:", &dense);
        println!();
        let l = print_table("separable kernels (lite):", &lite);
        println!();
        println!(
            "dense/lite ratio: {:.2}x FLOPs, {:.2}x parameters",
            d.flops as f64 / l.flops as f64,
            d.params as f64 / l.params as f64
        );
    } else {
        let sc = counts(cfg.model.kernel_mode)?;
        print_table(
            match cfg.model.kernel_mode {
                KernelMode::Dense => "dense kernels:",
                KernelMode::Separable => "separable kernels (lite):",
            },
            &sc,
        );
    }
    Ok(())
}

pub fn validate_command(files: &[PathBuf]) -> Result<()> {
    if files.is_empty() {
        return Err(CliError::usage("validate-pcdm needs at least one file"));
    }
    let mut failed = false;
    for f in files {
        match pcdm_file::read(f) {
            Ok((pcdm, geom)) => println!(
                "ok {}: rows={} cols={} returns={} azimuth=[{:.4}, {:.4}]",
                f.display(),
                pcdm.rows,
                pcdm.cols,
                pcdm.returns(),
                geom.az_min,
                geom.az_max
            ),
            Err(e) => {
                println!("invalid {}: {}", f.display(), e.message);
                failed = true;
            }
        }
    }
    if failed {
        return Err(CliError::format("one or more PCDM files failed validation"));
    }
    Ok(())
}

pub struct GenDataArgs<'a> {
    pub out: &'a Path,
    pub samples: usize,
    pub seed: u64,
    pub scale: f64,
}

pub fn gen_data_command(args: &GenDataArgs<'_>) -> Result<()> {
    println!(
        "# resolved configuration\nout = {}\nsamples = {}\nseed = {}\nscale = {}",
        args.out.display(),
        args.samples,
        args.seed,
        args.scale
    );
    let threads = worker_threads();
    let started = Instant::now();
    let manifest = dataset::generate(args.out, args.samples, args.seed, args.scale, threads)?;
    eprintln!(
        "generated {} samples in {:.1}s ({} threads)",
        manifest.samples,
        started.elapsed().as_secs_f64(),
        threads
    );
    println!(
        "dataset at {}: {} samples, grid {}x{}, images {}x{}, split {}/{}",
        args.out.display(),
        manifest.samples,
        manifest.hdl_rows,
        manifest.hdl_cols,
        manifest.image_height,
        manifest.image_width,
        manifest.train.len(),
        manifest.val.len()
    );
    Ok(())
}
