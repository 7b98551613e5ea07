//! Command implementations behind the binary: training runs with artifact
//! emission, checkpoint evaluation, and single-sample translation demos.
//!
//! Output files are created fresh and never overwritten, so parallel seed
//! sweeps can share an output tree without clobbering each other. Every
//! artifact embeds the producing config's hash.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::RunConfig;
use crate::data;
use crate::error::{Error, Result};
use crate::gan::{LossRow, Mode, TrainSink, TrainedSystem};
use crate::metrics::{self, EvalModels, MetricsReport};
use crate::nn::{Model, ModelSpec};

/// Final state of a training run, for the summary line.
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub mode: Mode,
    pub final_report: Option<MetricsReport>,
    pub gen_params_one2one: usize,
    pub gen_params_baseline: usize,
}

impl TrainSummary {
    pub fn render(&self) -> String {
        let mut s = format!(
            "run complete: mode={} out={} config_hash={}\n",
            self.mode,
            self.out_dir.display(),
            self.config_hash
        );
        s.push_str(&format!(
            "generator parameters: one2one={} baseline={}\n",
            self.gen_params_one2one, self.gen_params_baseline
        ));
        if let Some(r) = &self.final_report {
            s.push_str(&format!(
                "final epoch {}: self_inverse_residual={} residual_x={} residual_y={}\n",
                r.epoch, r.self_inverse_residual, r.residual_x, r.residual_y
            ));
            let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "final metrics: psnr_x2y={} psnr_y2x={} ssim_x2y={} ssim_y2x={} injectivity={} bias_x2y={} bias_y2x={}\n",
                cell(r.psnr_x2y),
                cell(r.psnr_y2x),
                cell(r.ssim_x2y),
                cell(r.ssim_y2x),
                cell(r.injectivity_score),
                cell(r.bias_gap_x2y),
                cell(r.bias_gap_y2x),
            ));
        }
        s
    }
}

fn create_new(path: &Path) -> Result<fs::File> {
    Ok(fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)?)
}

struct FsSink {
    loss: std::io::BufWriter<fs::File>,
    metrics: std::io::BufWriter<fs::File>,
    checkpoints: PathBuf,
    config_hash: String,
}

impl FsSink {
    fn new(out: &Path, config_hash: &str) -> Result<Self> {
        let mut loss = std::io::BufWriter::new(create_new(&out.join("loss.csv"))?);
        writeln!(loss, "# config_hash={config_hash}")?;
        writeln!(loss, "{}", LossRow::csv_header())?;
        let mut metrics = std::io::BufWriter::new(create_new(&out.join("metrics.csv"))?);
        writeln!(metrics, "# config_hash={config_hash}")?;
        writeln!(metrics, "{}", MetricsReport::csv_header())?;
        let checkpoints = out.join("checkpoints");
        fs::create_dir_all(&checkpoints)?;
        Ok(FsSink {
            loss,
            metrics,
            checkpoints,
            config_hash: config_hash.to_string(),
        })
    }
}

impl TrainSink for FsSink {
    fn on_loss(&mut self, row: &LossRow) -> Result<()> {
        writeln!(self.loss, "{}", row.csv_row())?;
        Ok(())
    }

    fn on_eval(&mut self, report: &MetricsReport) -> Result<()> {
        writeln!(self.metrics, "{}", report.csv_row(&self.config_hash))?;
        Ok(())
    }

    fn on_checkpoint(&mut self, epoch: u64, system: &TrainedSystem) -> Result<()> {
        let mut meta = CheckpointMeta::default();
        meta.push("mode", system.mode());
        meta.push("config_hash", &self.config_hash);
        meta.push("epoch", epoch);
        let path = self.checkpoints.join(format!("epoch_{epoch:04}.ckpt"));
        checkpoint::save(&path, &meta, &system.labeled_models())
    }
}

/// Runs training per the config: emits the loss CSV, metrics CSV,
/// checkpoints, translated sample dumps, and a summary.
pub fn cmd_train(config: &RunConfig, base_dir: &Path) -> Result<TrainSummary> {
    let task = config.build_task(base_dir)?;
    let opts = config.train_options(&task)?;
    let hash = config.hash();
    let out = &config.run.out;
    fs::create_dir_all(out)?;
    let mut cfg_file = create_new(&out.join("config.ini"))?;
    cfg_file.write_all(config.to_canonical_string().as_bytes())?;

    let mut sink = FsSink::new(out, &hash)?;
    let outcome = crate::gan::train(&task, &opts, &mut sink);
    drop(sink);
    let (system, history) = match outcome {
        Ok(v) => v,
        Err(err) => {
            if let Error::NonFiniteLoss {
                iteration,
                loss,
                value,
            } = &err
            {
                let diag = out.join("abort.txt");
                let _ = fs::write(
                    &diag,
                    format!(
                        "config_hash={hash}\nnon-finite {loss} = {value} at iteration {iteration}\n"
                    ),
                );
                eprintln!("training aborted; diagnostic written to {}", diag.display());
            }
            return Err(err);
        }
    };

    dump_samples(&task, &system, config, out, &hash)?;

    let (gen_spec, _) = config.model_specs(&task)?;
    let one = ModelSpec::Generator(gen_spec).param_count();
    let summary = TrainSummary {
        out_dir: out.clone(),
        config_hash: hash,
        mode: config.run.mode,
        final_report: history.last().cloned(),
        gen_params_one2one: one,
        gen_params_baseline: 2 * one,
    };
    fs::write(out.join("summary.txt"), summary.render())?;
    Ok(summary)
}

/// Writes a handful of held-out samples and their translations for
/// external plotting: CSV point clouds for vector tasks, PGM images for
/// image tasks.
fn dump_samples(
    task: &data::DomainTask,
    system: &TrainedSystem,
    config: &RunConfig,
    out: &Path,
    hash: &str,
) -> Result<()> {
    let dir = out.join("samples");
    fs::create_dir_all(&dir)?;
    let seed = metrics::eval_seed(config.run.seed_data);
    let count = config.run.n_eval.min(8);
    let xs = task.sample_x(seed, count);
    let ys = task.sample_y(seed, count);
    let models = system.eval_models();
    let x2y = metrics::model_map(models.x2y);
    let y2x = metrics::model_map(models.y2x);
    let tag = format!("config_hash={hash}");

    if task.sample_shape().len() == 1 {
        let fwd: Vec<_> = xs.iter().map(&x2y).collect::<Result<_>>()?;
        let back: Vec<_> = ys.iter().map(&y2x).collect::<Result<_>>()?;
        data::save_points_csv(&dir.join("x_in.csv"), &xs, Some(&tag))?;
        data::save_points_csv(&dir.join("x2y.csv"), &fwd, Some(&tag))?;
        data::save_points_csv(&dir.join("y_in.csv"), &ys, Some(&tag))?;
        data::save_points_csv(&dir.join("y2x.csv"), &back, Some(&tag))?;
    } else {
        for (i, x) in xs.iter().enumerate() {
            data::save_pgm(&dir.join(format!("x_in_{i}.pgm")), x, Some(&tag))?;
            data::save_pgm(&dir.join(format!("x2y_{i}.pgm")), &x2y(x)?, Some(&tag))?;
        }
        for (i, y) in ys.iter().enumerate() {
            data::save_pgm(&dir.join(format!("y_in_{i}.pgm")), y, Some(&tag))?;
            data::save_pgm(&dir.join(format!("y2x_{i}.pgm")), &y2x(y)?, Some(&tag))?;
        }
    }
    Ok(())
}

fn find_model<'a>(models: &'a [(String, Model)], label: &str, path: &Path) -> Result<&'a Model> {
    models
        .iter()
        .find(|(l, _)| l == label)
        .map(|(_, m)| m)
        .ok_or_else(|| {
            Error::Checkpoint(format!(
                "{} does not contain a model labeled `{label}`",
                path.display()
            ))
        })
}

/// Evaluates a checkpoint on the configured task and appends one metrics
/// row (tagged with the checkpoint's producing config hash) to the output
/// directory's metrics log.
pub fn cmd_eval(
    config: &RunConfig,
    base_dir: &Path,
    checkpoint_path: &Path,
    seed_override: Option<u64>,
) -> Result<(MetricsReport, String)> {
    let task = config.build_task(base_dir)?;
    let (meta, models) = checkpoint::load(checkpoint_path)?;
    let mode: Mode = meta
        .get("mode")
        .unwrap_or("one2one")
        .parse()
        .map_err(Error::Checkpoint)?;
    let g = find_model(&models, "g", checkpoint_path)?;
    let eval = match mode {
        Mode::One2One => EvalModels {
            x2y: g,
            y2x: g,
            shared_generator: true,
        },
        Mode::Baseline => EvalModels {
            x2y: g,
            y2x: find_model(&models, "f", checkpoint_path)?,
            shared_generator: false,
        },
    };
    if eval.x2y.input_shape() != task.sample_shape() {
        return Err(Error::DimMismatch {
            op: "cmd_eval",
            lhs: eval.x2y.input_shape(),
            rhs: task.sample_shape().to_vec(),
        });
    }
    let seed = seed_override.unwrap_or_else(|| metrics::eval_seed(config.run.seed_data));
    let mut report = metrics::evaluate(&eval, &task, config.run.n_eval, seed)?;
    if let Some(epoch) = meta.get("epoch").and_then(|e| e.parse().ok()) {
        report.epoch = epoch;
    }
    let hash = meta
        .get("config_hash")
        .map(str::to_string)
        .unwrap_or_else(|| config.hash());
    let row = report.csv_row(&hash);

    fs::create_dir_all(&config.run.out)?;
    let log = config.run.out.join("metrics.csv");
    let mut file = if log.exists() {
        fs::OpenOptions::new().append(true).open(&log)?
    } else {
        let mut f = create_new(&log)?;
        writeln!(f, "# config_hash={hash}")?;
        writeln!(f, "{}", MetricsReport::csv_header())?;
        f
    };
    writeln!(file, "{row}")?;
    Ok((report, row))
}

/// Translates one input file through the checkpointed generator `repeat`
/// times and writes the result in the same format. Applying it twice on a
/// well-trained involution checkpoint approximately reproduces the input.
pub fn cmd_demo(
    checkpoint_path: &Path,
    input: &Path,
    output: &Path,
    repeat: u32,
    expected_config: Option<&RunConfig>,
) -> Result<()> {
    if repeat == 0 {
        return Err(Error::InvalidArg {
            op: "cmd_demo",
            msg: "repeat must be at least 1".into(),
        });
    }
    let (meta, models) = checkpoint::load(checkpoint_path)?;
    if let (Some(cfg), Some(recorded)) = (expected_config, meta.get("config_hash")) {
        let expected = cfg.hash();
        if recorded != expected {
            return Err(Error::InvalidArg {
                op: "cmd_demo",
                msg: format!(
                    "checkpoint was produced by config {recorded}, not the given config {expected}"
                ),
            });
        }
    }
    let g = find_model(&models, "g", checkpoint_path)?;
    let translate = |t: &crate::autodiff::Tensor| -> Result<crate::autodiff::Tensor> {
        let mut cur = t.clone();
        for _ in 0..repeat {
            cur = metrics::model_map(g)(&cur)?;
        }
        Ok(cur)
    };
    let tag = meta
        .get("config_hash")
        .map(|h| format!("config_hash={h}"))
        .unwrap_or_else(|| "config_hash=unknown".into());

    match input.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let points = data::load_points_csv(input)?;
            let translated: Vec<_> = points.iter().map(&translate).collect::<Result<_>>()?;
            data::save_points_csv(output, &translated, Some(&tag))?;
        }
        Some("pgm") => {
            let image = data::load_pgm(input)?;
            data::save_pgm(output, &translate(&image)?, Some(&tag))?;
        }
        _ => {
            return Err(Error::InvalidArg {
                op: "cmd_demo",
                msg: format!(
                    "cannot tell the format of {} (want .csv or .pgm)",
                    input.display()
                ),
            })
        }
    }
    Ok(())
}
