//! Run configuration: a flat `key = value` file with `[section]` headers.
//!
//! Parsing is strict: unknown sections or keys and duplicate keys are
//! errors, so a typo can never silently fall back to a default. Every value
//! is range-checked. A config round-trips losslessly through
//! [`RunConfig::to_canonical_string`] (floats use shortest round-trip
//! decimals), and the FNV-1a hash of that canonical form tags every
//! artifact a run produces. Full-line `#` comments are allowed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{self, DomainTask};
use crate::error::{Error, Result};
use crate::gan::{GanOptions, Mode, TrainOptions};
use crate::metrics;
use crate::nn::{DiscriminatorSpec, GeneratorSpec};
use crate::optim::{AdamHyper, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskName {
    Reflection,
    Affine,
    ImageInversion,
    Files,
}

impl std::fmt::Display for TaskName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskName::Reflection => "reflection",
            TaskName::Affine => "affine",
            TaskName::ImageInversion => "image_inversion",
            TaskName::Files => "files",
        })
    }
}

impl std::str::FromStr for TaskName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reflection" => Ok(TaskName::Reflection),
            "affine" => Ok(TaskName::Affine),
            "image_inversion" => Ok(TaskName::ImageInversion),
            "files" => Ok(TaskName::Files),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Vector,
    Conv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    pub name: TaskName,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    /// Dataset manifest for the `files` task, relative to the config file.
    pub manifest: Option<PathBuf>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            name: TaskName::Reflection,
            n: 2000,
            height: 16,
            width: 16,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub mode: Mode,
    pub out: PathBuf,
    pub epochs: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub n_eval: usize,
    pub seed_data: u64,
    pub seed_init: u64,
    pub seed_train: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::One2One,
            out: PathBuf::from("out"),
            epochs: 200,
            eval_every: 20,
            checkpoint_every: 100,
            n_eval: 200,
            seed_data: 1,
            seed_init: 2,
            seed_train: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub gen_channels: Vec<usize>,
    pub disc_channels: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Vector,
            hidden: vec![32, 32],
            disc_hidden: vec![32],
            gen_channels: vec![1, 8, 16, 8, 1],
            disc_channels: vec![1, 8, 16],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_x: 10.0,
            lambda_y: 10.0,
            lambda: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub fixed_epochs: u64,
    pub decay_epochs: u64,
    pub pool_capacity: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            fixed_epochs: 100,
            decay_epochs: 100,
            pool_capacity: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub run: RunSection,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
}

fn join_list(values: &[usize]) -> String {
    if values.is_empty() {
        return "none".into();
    }
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Canonical text form; parsing it reproduces the config exactly.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[task]");
        let _ = writeln!(s, "name = {}", self.task.name);
        let _ = writeln!(s, "n = {}", self.task.n);
        let _ = writeln!(s, "height = {}", self.task.height);
        let _ = writeln!(s, "width = {}", self.task.width);
        if let Some(manifest) = &self.task.manifest {
            let _ = writeln!(s, "manifest = {}", manifest.display());
        }
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "mode = {}", self.run.mode);
        let _ = writeln!(s, "out = {}", self.run.out.display());
        let _ = writeln!(s, "epochs = {}", self.run.epochs);
        let _ = writeln!(s, "eval_every = {}", self.run.eval_every);
        let _ = writeln!(s, "checkpoint_every = {}", self.run.checkpoint_every);
        let _ = writeln!(s, "n_eval = {}", self.run.n_eval);
        let _ = writeln!(s, "seed_data = {}", self.run.seed_data);
        let _ = writeln!(s, "seed_init = {}", self.run.seed_init);
        let _ = writeln!(s, "seed_train = {}", self.run.seed_train);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(
            s,
            "kind = {}",
            match self.model.kind {
                ModelKind::Vector => "vector",
                ModelKind::Conv => "conv",
            }
        );
        let _ = writeln!(s, "hidden = {}", join_list(&self.model.hidden));
        let _ = writeln!(s, "disc_hidden = {}", join_list(&self.model.disc_hidden));
        let _ = writeln!(s, "gen_channels = {}", join_list(&self.model.gen_channels));
        let _ = writeln!(s, "disc_channels = {}", join_list(&self.model.disc_channels));
        let _ = writeln!(s, "\n[loss]");
        let _ = writeln!(s, "lambda_x = {}", self.loss.lambda_x);
        let _ = writeln!(s, "lambda_y = {}", self.loss.lambda_y);
        let _ = writeln!(s, "lambda = {}", self.loss.lambda);
        let _ = writeln!(s, "\n[optim]");
        let _ = writeln!(s, "lr = {}", self.optim.lr);
        let _ = writeln!(s, "beta1 = {}", self.optim.beta1);
        let _ = writeln!(s, "beta2 = {}", self.optim.beta2);
        let _ = writeln!(s, "eps = {}", self.optim.eps);
        let _ = writeln!(s, "fixed_epochs = {}", self.optim.fixed_epochs);
        let _ = writeln!(s, "decay_epochs = {}", self.optim.decay_epochs);
        let _ = writeln!(s, "pool_capacity = {}", self.optim.pool_capacity);
        s
    }

    /// FNV-1a hash of the canonical form, as 16 hex digits. Embedded in
    /// every artifact so any output traces back to its producing config.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in self.to_canonical_string().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// Builds the configured task. `base_dir` anchors relative manifest
    /// paths (callers pass the config file's directory).
    pub fn build_task(&self, base_dir: &Path) -> Result<DomainTask> {
        match self.task.name {
            TaskName::Reflection => data::make_reflection_task(self.run.seed_data, self.task.n),
            TaskName::Affine => data::make_affine_task(self.run.seed_data, self.task.n),
            TaskName::ImageInversion => data::make_image_inversion_task(
                self.run.seed_data,
                self.task.n,
                self.task.height,
                self.task.width,
            ),
            TaskName::Files => {
                let manifest = self.task.manifest.as_ref().ok_or_else(|| Error::Config {
                    key: "task.manifest".into(),
                    line: 0,
                    msg: "the files task needs a manifest path".into(),
                })?;
                data::load_manifest(&base_dir.join(manifest))
            }
        }
    }

    /// Generator/discriminator specs matching the task's sample shape.
    pub fn model_specs(&self, task: &DomainTask) -> Result<(GeneratorSpec, DiscriminatorSpec)> {
        let shape = task.sample_shape();
        match (self.model.kind, shape.len()) {
            (ModelKind::Vector, 1) => Ok((
                GeneratorSpec::Vector {
                    dim: shape[0],
                    hidden: self.model.hidden.clone(),
                },
                DiscriminatorSpec::Vector {
                    input_dim: shape[0],
                    hidden: self.model.disc_hidden.clone(),
                },
            )),
            (ModelKind::Conv, 3) => {
                let channels = &self.model.gen_channels;
                if channels.first() != Some(&shape[0]) || channels.last() != Some(&shape[0]) {
                    return Err(Error::Spec(format!(
                        "gen_channels {channels:?} must start and end with the task's {} channel(s)",
                        shape[0]
                    )));
                }
                if self.model.disc_channels.first() != Some(&shape[0]) {
                    return Err(Error::Spec(format!(
                        "disc_channels {:?} must start with the task's {} channel(s)",
                        self.model.disc_channels, shape[0]
                    )));
                }
                Ok((
                    GeneratorSpec::Conv {
                        channels: channels.clone(),
                        height: shape[1],
                        width: shape[2],
                    },
                    DiscriminatorSpec::Conv {
                        channels: self.model.disc_channels.clone(),
                        height: shape[1],
                        width: shape[2],
                    },
                ))
            }
            (kind, _) => Err(Error::Spec(format!(
                "model kind {kind:?} does not match task sample shape {shape:?}"
            ))),
        }
    }

    /// Assembles the training options for the configured task.
    pub fn train_options(&self, task: &DomainTask) -> Result<TrainOptions> {
        let (gen_spec, disc_spec) = self.model_specs(task)?;
        Ok(TrainOptions {
            mode: self.run.mode,
            epochs: self.run.epochs,
            gen_spec,
            disc_spec,
            gan: GanOptions {
                lambda_x: self.loss.lambda_x,
                lambda_y: self.loss.lambda_y,
                lambda: self.loss.lambda,
                pool_capacity: self.optim.pool_capacity,
                lr_schedule: Schedule {
                    base_lr: self.optim.lr,
                    fixed_epochs: self.optim.fixed_epochs,
                    decay_epochs: self.optim.decay_epochs,
                },
                hyper: AdamHyper {
                    beta1: self.optim.beta1,
                    beta2: self.optim.beta2,
                    eps: self.optim.eps,
                },
                seed_init: self.run.seed_init,
                seed_train: self.run.seed_train,
            },
            eval_every: self.run.eval_every,
            checkpoint_every: self.run.checkpoint_every,
            n_eval: self.run.n_eval,
            eval_seed: metrics::eval_seed(self.run.seed_data),
        })
    }
}

fn cfg_err(key: &str, line: usize, msg: impl ToString) -> Error {
    Error::Config {
        key: key.to_string(),
        line,
        msg: msg.to_string(),
    }
}

struct Assign<'a> {
    section: &'a str,
    key: &'a str,
    value: &'a str,
    line: usize,
}

impl Assign<'_> {
    fn full_key(&self) -> String {
        format!("{}.{}", self.section, self.key)
    }

    fn parse<T: std::str::FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| cfg_err(&self.full_key(), self.line, e))
    }

    fn parse_list(&self) -> Result<Vec<usize>> {
        if self.value == "none" {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|e| cfg_err(&self.full_key(), self.line, format!("`{tok}`: {e}")))
            })
            .collect()
    }

    fn positive_f64(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(cfg_err(&self.full_key(), self.line, "must be positive and finite"))
        }
    }

    fn unit_interval(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if (0.0..1.0).contains(&v) {
            Ok(v)
        } else {
            Err(cfg_err(&self.full_key(), self.line, "must lie in [0, 1)"))
        }
    }

    fn at_least(&self, min: u64) -> Result<u64> {
        let v: u64 = self.parse()?;
        if v >= min {
            Ok(v)
        } else {
            Err(cfg_err(&self.full_key(), self.line, format!("must be >= {min}")))
        }
    }
}

/// Parses a config from text. Unknown keys, unknown sections, duplicates,
/// and out-of-range values are all errors carrying the key and line.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen: std::collections::BTreeSet<String> = Default::default();

    for (line_no, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            match name {
                "task" | "run" | "model" | "loss" | "optim" => section = name.to_string(),
                other => return Err(cfg_err(other, line_no, "unknown section")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(cfg_err(line, line_no, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if section.is_empty() {
            return Err(cfg_err(key, line_no, "key before any [section] header"));
        }
        let a = Assign {
            section: &section,
            key,
            value,
            line: line_no,
        };
        if !seen.insert(a.full_key()) {
            return Err(cfg_err(&a.full_key(), line_no, "duplicate key"));
        }
        apply(&mut cfg, &a)?;
    }

    if cfg.task.name == TaskName::Files && cfg.task.manifest.is_none() {
        return Err(cfg_err("task.manifest", 0, "the files task needs a manifest path"));
    }
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, a: &Assign<'_>) -> Result<()> {
    match (a.section, a.key) {
        ("task", "name") => cfg.task.name = a.parse()?,
        ("task", "n") => cfg.task.n = a.at_least(1)? as usize,
        ("task", "height") => cfg.task.height = a.at_least(1)? as usize,
        ("task", "width") => cfg.task.width = a.at_least(1)? as usize,
        ("task", "manifest") => cfg.task.manifest = Some(PathBuf::from(a.value)),

        ("run", "mode") => cfg.run.mode = a.parse()?,
        ("run", "out") => cfg.run.out = PathBuf::from(a.value),
        ("run", "epochs") => cfg.run.epochs = a.parse()?,
        ("run", "eval_every") => cfg.run.eval_every = a.at_least(1)?,
        ("run", "checkpoint_every") => cfg.run.checkpoint_every = a.at_least(1)?,
        ("run", "n_eval") => cfg.run.n_eval = a.at_least(2)? as usize,
        ("run", "seed_data") => cfg.run.seed_data = a.parse()?,
        ("run", "seed_init") => cfg.run.seed_init = a.parse()?,
        ("run", "seed_train") => cfg.run.seed_train = a.parse()?,

        ("model", "kind") => {
            cfg.model.kind = match a.value {
                "vector" => ModelKind::Vector,
                "conv" => ModelKind::Conv,
                other => {
                    return Err(cfg_err(
                        &a.full_key(),
                        a.line,
                        format!("unknown kind `{other}` (want vector or conv)"),
                    ))
                }
            }
        }
        ("model", "hidden") => cfg.model.hidden = a.parse_list()?,
        ("model", "disc_hidden") => cfg.model.disc_hidden = a.parse_list()?,
        ("model", "gen_channels") => cfg.model.gen_channels = a.parse_list()?,
        ("model", "disc_channels") => cfg.model.disc_channels = a.parse_list()?,

        ("loss", "lambda_x") => cfg.loss.lambda_x = a.positive_f64()?,
        ("loss", "lambda_y") => cfg.loss.lambda_y = a.positive_f64()?,
        ("loss", "lambda") => cfg.loss.lambda = a.positive_f64()?,

        ("optim", "lr") => {
            let v: f64 = a.parse()?;
            if v < 0.0 || !v.is_finite() {
                return Err(cfg_err(&a.full_key(), a.line, "must be >= 0 and finite"));
            }
            cfg.optim.lr = v;
        }
        ("optim", "beta1") => cfg.optim.beta1 = a.unit_interval()?,
        ("optim", "beta2") => cfg.optim.beta2 = a.unit_interval()?,
        ("optim", "eps") => cfg.optim.eps = a.positive_f64()?,
        ("optim", "fixed_epochs") => cfg.optim.fixed_epochs = a.parse()?,
        ("optim", "decay_epochs") => cfg.optim.decay_epochs = a.parse()?,
        ("optim", "pool_capacity") => cfg.optim.pool_capacity = a.at_least(1)? as usize,

        _ => return Err(cfg_err(&a.full_key(), a.line, "unknown key")),
    }
    Ok(())
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config { key, line, msg } => Error::Config {
            key: format!("{}: {key}", path.display()),
            line,
            msg,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_config_gives_paper_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.loss.lambda_x, 10.0);
        assert_eq!(cfg.loss.lambda_y, 10.0);
        assert_eq!(cfg.optim.lr, 2e-4);
        assert_eq!(cfg.optim.pool_capacity, 50);
        assert_eq!(cfg.optim.fixed_epochs, 100);
        assert_eq!(cfg.optim.decay_epochs, 100);
        assert_eq!(cfg.optim.beta1, 0.5);
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_name_and_line() {
        let text = "[loss]\nlamda_x = 10\n";
        match parse_config_str(text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "loss.lamda_x");
                assert_eq!(line, 2);
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_out_of_range_keys_are_rejected() {
        assert!(parse_config_str("[optim]\nlr = 0.1\nlr = 0.2\n").is_err());
        assert!(parse_config_str("[optim]\nbeta1 = 1.0\n").is_err());
        assert!(parse_config_str("[run]\neval_every = 0\n").is_err());
        assert!(parse_config_str("[loss]\nlambda_x = 0\n").is_err());
        assert!(parse_config_str("[task]\nname = files\n").is_err());
        assert!(parse_config_str("[bogus]\nx = 1\n").is_err());
        assert!(parse_config_str("x = 1\n").is_err());
    }

    #[test]
    fn canonical_round_trip_reproduces_config() {
        let mut cfg = RunConfig::default();
        cfg.task.name = TaskName::ImageInversion;
        cfg.task.n = 150;
        cfg.model.kind = ModelKind::Conv;
        cfg.run.mode = Mode::Baseline;
        cfg.optim.lr = 0.000123456789;
        cfg.loss.lambda = 7.25;
        let text = cfg.to_canonical_string();
        let parsed = parse_config_str(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.hash(), cfg.hash());
    }

    #[test]
    fn hash_distinguishes_configs() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.run.seed_train = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn model_specs_respect_task_shape() {
        let cfg = RunConfig::default();
        let task = crate::data::make_reflection_task(1, 100).unwrap();
        let (gen, disc) = cfg.model_specs(&task).unwrap();
        assert_eq!(
            gen,
            GeneratorSpec::Vector {
                dim: 2,
                hidden: vec![32, 32]
            }
        );
        assert_eq!(
            disc,
            DiscriminatorSpec::Vector {
                input_dim: 2,
                hidden: vec![32]
            }
        );

        // Conv model on a vector task is a spec error.
        let mut bad = RunConfig::default();
        bad.model.kind = ModelKind::Conv;
        assert!(bad.model_specs(&task).is_err());
    }

    proptest! {
        #[test]
        fn random_configs_round_trip(
            n in 100usize..5000,
            epochs in 0u64..500,
            seed_data in any::<u64>(),
            seed_init in any::<u64>(),
            seed_train in any::<u64>(),
            lr in 0.0f64..0.1,
            lambda in 0.001f64..100.0,
            beta1 in 0.0f64..0.999,
            pool in 1usize..200,
            baseline in any::<bool>(),
        ) {
            let mut cfg = RunConfig::default();
            cfg.task.n = n;
            cfg.run.epochs = epochs;
            cfg.run.seed_data = seed_data;
            cfg.run.seed_init = seed_init;
            cfg.run.seed_train = seed_train;
            cfg.run.mode = if baseline { Mode::Baseline } else { Mode::One2One };
            cfg.optim.lr = lr;
            cfg.optim.beta1 = beta1;
            cfg.optim.pool_capacity = pool;
            cfg.loss.lambda_x = lambda;
            let parsed = parse_config_str(&cfg.to_canonical_string()).unwrap();
            prop_assert_eq!(parsed, cfg);
        }
    }
}
