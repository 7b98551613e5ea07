//! Trainable system assemblies: one shared self-inverse generator with two
//! discriminators, and the two-generator baseline.

use crate::error::{Error, Result};
use crate::metrics::EvalModels;
use crate::nn::{build_discriminator, build_generator, DiscriminatorSpec, GeneratorSpec, Model};
use crate::optim::{AdamHyper, AdamState, Schedule};
use crate::subseed;

use super::pool::ImagePool;

/// Training mode selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    One2One,
    Baseline,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::One2One => "one2one",
            Mode::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "one2one" => Ok(Mode::One2One),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}` (want one2one or baseline)")),
        }
    }
}

/// Shared knobs for both system kinds.
#[derive(Clone, Debug)]
pub struct GanOptions {
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// Joint cycle weight of the baseline objective.
    pub lambda: f64,
    pub pool_capacity: usize,
    pub lr_schedule: Schedule,
    pub hyper: AdamHyper,
    pub seed_init: u64,
    pub seed_train: u64,
}

fn check_lambda(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArg {
            op: "gan_options",
            msg: format!("{name} must be positive and finite, got {value}"),
        })
    }
}

/// One shared generator routing both translation directions, two
/// discriminators, per-direction loss weights, and per-model optimizer
/// state.
pub struct One2OneSystem {
    pub generator: Model,
    pub disc_x: Model,
    pub disc_y: Model,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub pool_x: ImagePool,
    pub pool_y: ImagePool,
    pub opt_g: AdamState,
    pub opt_dx: AdamState,
    pub opt_dy: AdamState,
    pub hyper: AdamHyper,
    pub schedule: Schedule,
}

impl One2OneSystem {
    pub fn new(
        gen_spec: GeneratorSpec,
        disc_spec: DiscriminatorSpec,
        opts: &GanOptions,
    ) -> Result<Self> {
        check_lambda("lambda_x", opts.lambda_x)?;
        check_lambda("lambda_y", opts.lambda_y)?;
        let generator = build_generator(gen_spec, subseed(opts.seed_init, 0))?;
        let disc_x = build_discriminator(disc_spec.clone(), subseed(opts.seed_init, 1))?;
        let disc_y = build_discriminator(disc_spec, subseed(opts.seed_init, 2))?;
        Ok(One2OneSystem {
            opt_g: AdamState::new(&generator),
            opt_dx: AdamState::new(&disc_x),
            opt_dy: AdamState::new(&disc_y),
            pool_x: ImagePool::new(opts.pool_capacity, subseed(opts.seed_train, 100))?,
            pool_y: ImagePool::new(opts.pool_capacity, subseed(opts.seed_train, 101))?,
            generator,
            disc_x,
            disc_y,
            lambda_x: opts.lambda_x,
            lambda_y: opts.lambda_y,
            hyper: opts.hyper,
            schedule: opts.lr_schedule,
        })
    }
}

/// Two generators with identical spec and independent parameters, trained
/// with the joint objective.
pub struct BaselineSystem {
    pub gen_x2y: Model,
    pub gen_y2x: Model,
    pub disc_x: Model,
    pub disc_y: Model,
    pub lambda: f64,
    pub pool_x: ImagePool,
    pub pool_y: ImagePool,
    pub opt_g: AdamState,
    pub opt_f: AdamState,
    pub opt_dx: AdamState,
    pub opt_dy: AdamState,
    pub hyper: AdamHyper,
    pub schedule: Schedule,
}

impl BaselineSystem {
    pub fn new(
        gen_spec: GeneratorSpec,
        disc_spec: DiscriminatorSpec,
        opts: &GanOptions,
    ) -> Result<Self> {
        check_lambda("lambda", opts.lambda)?;
        // The X->Y generator and the discriminators share init seeds with
        // the one2one system so comparisons start from matched weights.
        let gen_x2y = build_generator(gen_spec.clone(), subseed(opts.seed_init, 0))?;
        let gen_y2x = build_generator(gen_spec, subseed(opts.seed_init, 3))?;
        let disc_x = build_discriminator(disc_spec.clone(), subseed(opts.seed_init, 1))?;
        let disc_y = build_discriminator(disc_spec, subseed(opts.seed_init, 2))?;
        Ok(BaselineSystem {
            opt_g: AdamState::new(&gen_x2y),
            opt_f: AdamState::new(&gen_y2x),
            opt_dx: AdamState::new(&disc_x),
            opt_dy: AdamState::new(&disc_y),
            pool_x: ImagePool::new(opts.pool_capacity, subseed(opts.seed_train, 100))?,
            pool_y: ImagePool::new(opts.pool_capacity, subseed(opts.seed_train, 101))?,
            gen_x2y,
            gen_y2x,
            disc_x,
            disc_y,
            lambda: opts.lambda,
            hyper: opts.hyper,
            schedule: opts.lr_schedule,
        })
    }
}

/// Either trained system, for evaluation and checkpointing.
pub enum TrainedSystem {
    One2One(One2OneSystem),
    Baseline(BaselineSystem),
}

impl TrainedSystem {
    pub fn mode(&self) -> Mode {
        match self {
            TrainedSystem::One2One(_) => Mode::One2One,
            TrainedSystem::Baseline(_) => Mode::Baseline,
        }
    }

    pub fn eval_models(&self) -> EvalModels<'_> {
        match self {
            TrainedSystem::One2One(s) => EvalModels {
                x2y: &s.generator,
                y2x: &s.generator,
                shared_generator: true,
            },
            TrainedSystem::Baseline(s) => EvalModels {
                x2y: &s.gen_x2y,
                y2x: &s.gen_y2x,
                shared_generator: false,
            },
        }
    }

    /// Models in checkpoint order with their labels.
    pub fn labeled_models(&self) -> Vec<(&'static str, &Model)> {
        match self {
            TrainedSystem::One2One(s) => vec![
                ("g", &s.generator),
                ("d_x", &s.disc_x),
                ("d_y", &s.disc_y),
            ],
            TrainedSystem::Baseline(s) => vec![
                ("g", &s.gen_x2y),
                ("f", &s.gen_y2x),
                ("d_x", &s.disc_x),
                ("d_y", &s.disc_y),
            ],
        }
    }

    /// Total parameters across this system's generators.
    pub fn generator_param_count(&self) -> usize {
        match self {
            TrainedSystem::One2One(s) => s.generator.param_count(),
            TrainedSystem::Baseline(s) => s.gen_x2y.param_count() + s.gen_y2x.param_count(),
        }
    }
}
