//! Training loops.
//!
//! Each shared-generator iteration performs three steps on one unpaired
//! sample pair: (1) X->Y objective, backward, generator step; (2) Y->X
//! objective, backward, generator step; (3) one update per discriminator
//! against its pooled fake (the fake produced in steps 1-2, detached, no
//! recomputation). The baseline performs one joint generator update
//! followed by the same discriminator updates.
//!
//! The loop is strictly sequential; the tape is cleared after every
//! backward, so memory stays flat across iterations. A non-finite loss
//! aborts with the iteration index and loss name rather than skipping.

use crate::autodiff::{backward, Tape, Tensor};
use crate::data::{DomainTask, UnpairedSampler};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::nn::{DiscriminatorSpec, GeneratorSpec};
use crate::optim::{adam_step, lr_at};
use crate::subseed;

use super::losses::{adv_loss_discriminator, baseline_generator_loss, direction_loss};
use super::system::{BaselineSystem, GanOptions, Mode, One2OneSystem, TrainedSystem};

/// Loss values of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationLosses {
    pub x2y_adv: f64,
    pub x2y_cyc: f64,
    pub y2x_adv: f64,
    pub y2x_cyc: f64,
    pub d_x: f64,
    pub d_y: f64,
}

/// One row of the per-iteration loss log.
#[derive(Clone, Copy, Debug)]
pub struct LossRow {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    pub losses: IterationLosses,
}

impl LossRow {
    pub fn csv_header() -> &'static str {
        "iteration,epoch,lr,loss_x2y_adv,loss_x2y_cyc,loss_y2x_adv,loss_y2x_cyc,loss_dx,loss_dy"
    }

    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.lr,
            l.x2y_adv,
            l.x2y_cyc,
            l.y2x_adv,
            l.y2x_cyc,
            l.d_x,
            l.d_y
        )
    }
}

fn ensure_finite(iteration: u64, loss: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss {
            iteration,
            loss,
            value,
        })
    }
}

/// The three-step update for the shared generator. Returns all loss values
/// of the iteration.
pub fn train_iteration_one2one(
    tape: &mut Tape,
    sys: &mut One2OneSystem,
    x: &Tensor,
    y: &Tensor,
    lr: f64,
    iteration: u64,
) -> Result<IterationLosses> {
    // Step 1: X -> Y direction, generator update.
    let parts = direction_loss(tape, &sys.generator, &sys.disc_y, x, sys.lambda_x)?;
    let x2y_adv = ensure_finite(iteration, "loss_x2y_adv", parts.adversarial.item())?;
    let x2y_cyc = ensure_finite(iteration, "loss_x2y_cyc", parts.cycle.item())?;
    let fake_y = parts.fake.detach();
    let grads = backward(tape, &parts.total)?;
    tape.clear();
    adam_step(&mut sys.generator, &grads, &mut sys.opt_g, lr, &sys.hyper)?;

    // Step 2: Y -> X direction, second generator update.
    let parts = direction_loss(tape, &sys.generator, &sys.disc_x, y, sys.lambda_y)?;
    let y2x_adv = ensure_finite(iteration, "loss_y2x_adv", parts.adversarial.item())?;
    let y2x_cyc = ensure_finite(iteration, "loss_y2x_cyc", parts.cycle.item())?;
    let fake_x = parts.fake.detach();
    let grads = backward(tape, &parts.total)?;
    tape.clear();
    adam_step(&mut sys.generator, &grads, &mut sys.opt_g, lr, &sys.hyper)?;

    // Step 3: discriminators, individually, against pooled fakes.
    let pooled_y = sys.pool_y.query(&fake_y);
    let loss_dy = adv_loss_discriminator(tape, &sys.disc_y, y, &pooled_y)?;
    let d_y = ensure_finite(iteration, "loss_dy", loss_dy.item())?;
    let grads = backward(tape, &loss_dy)?;
    tape.clear();
    adam_step(&mut sys.disc_y, &grads, &mut sys.opt_dy, lr, &sys.hyper)?;

    let pooled_x = sys.pool_x.query(&fake_x);
    let loss_dx = adv_loss_discriminator(tape, &sys.disc_x, x, &pooled_x)?;
    let d_x = ensure_finite(iteration, "loss_dx", loss_dx.item())?;
    let grads = backward(tape, &loss_dx)?;
    tape.clear();
    adam_step(&mut sys.disc_x, &grads, &mut sys.opt_dx, lr, &sys.hyper)?;

    Ok(IterationLosses {
        x2y_adv,
        x2y_cyc,
        y2x_adv,
        y2x_cyc,
        d_x,
        d_y,
    })
}

/// Baseline iteration: one joint update for both generators, then the
/// discriminator updates.
pub fn train_iteration_baseline(
    tape: &mut Tape,
    sys: &mut BaselineSystem,
    x: &Tensor,
    y: &Tensor,
    lr: f64,
    iteration: u64,
) -> Result<IterationLosses> {
    let parts = baseline_generator_loss(
        tape,
        &sys.gen_x2y,
        &sys.gen_y2x,
        &sys.disc_y,
        &sys.disc_x,
        x,
        y,
        sys.lambda,
    )?;
    let x2y_adv = ensure_finite(iteration, "loss_x2y_adv", parts.adv_x2y.item())?;
    let x2y_cyc = ensure_finite(iteration, "loss_x2y_cyc", parts.cyc_x.item())?;
    let y2x_adv = ensure_finite(iteration, "loss_y2x_adv", parts.adv_y2x.item())?;
    let y2x_cyc = ensure_finite(iteration, "loss_y2x_cyc", parts.cyc_y.item())?;
    let fake_y = parts.fake_y.detach();
    let fake_x = parts.fake_x.detach();
    let grads = backward(tape, &parts.total)?;
    tape.clear();
    adam_step(&mut sys.gen_x2y, &grads, &mut sys.opt_g, lr, &sys.hyper)?;
    adam_step(&mut sys.gen_y2x, &grads, &mut sys.opt_f, lr, &sys.hyper)?;

    let pooled_y = sys.pool_y.query(&fake_y);
    let loss_dy = adv_loss_discriminator(tape, &sys.disc_y, y, &pooled_y)?;
    let d_y = ensure_finite(iteration, "loss_dy", loss_dy.item())?;
    let grads = backward(tape, &loss_dy)?;
    tape.clear();
    adam_step(&mut sys.disc_y, &grads, &mut sys.opt_dy, lr, &sys.hyper)?;

    let pooled_x = sys.pool_x.query(&fake_x);
    let loss_dx = adv_loss_discriminator(tape, &sys.disc_x, x, &pooled_x)?;
    let d_x = ensure_finite(iteration, "loss_dx", loss_dx.item())?;
    let grads = backward(tape, &loss_dx)?;
    tape.clear();
    adam_step(&mut sys.disc_x, &grads, &mut sys.opt_dx, lr, &sys.hyper)?;

    Ok(IterationLosses {
        x2y_adv,
        x2y_cyc,
        y2x_adv,
        y2x_cyc,
        d_x,
        d_y,
    })
}

/// Receives artifacts as training progresses.
pub trait TrainSink {
    fn on_loss(&mut self, _row: &LossRow) -> Result<()> {
        Ok(())
    }
    fn on_eval(&mut self, _report: &MetricsReport) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _epoch: u64, _system: &TrainedSystem) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;
impl TrainSink for NullSink {}

/// Everything `train` needs beyond the task itself.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub mode: Mode,
    pub epochs: u64,
    pub gen_spec: GeneratorSpec,
    pub disc_spec: DiscriminatorSpec,
    pub gan: GanOptions,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub n_eval: usize,
    pub eval_seed: u64,
}

/// Full training run: epoch loop over freshly shuffled unpaired samplers,
/// per-epoch learning rate from the schedule, periodic evaluation and
/// checkpoints (plus one of each at initialization and at the end).
/// A zero-epoch run returns the initialized system, an initial checkpoint,
/// and an empty history.
pub fn train(
    task: &DomainTask,
    opts: &TrainOptions,
    sink: &mut dyn TrainSink,
) -> Result<(TrainedSystem, Vec<MetricsReport>)> {
    if opts.eval_every == 0 || opts.checkpoint_every == 0 {
        return Err(Error::InvalidArg {
            op: "train",
            msg: "eval_every and checkpoint_every must be at least 1".into(),
        });
    }
    let gen_shape = crate::nn::ModelSpec::Generator(opts.gen_spec.clone()).input_shape();
    if gen_shape != task.sample_shape() {
        return Err(Error::DimMismatch {
            op: "train",
            lhs: gen_shape,
            rhs: task.sample_shape().to_vec(),
        });
    }

    let mut system = match opts.mode {
        Mode::One2One => TrainedSystem::One2One(One2OneSystem::new(
            opts.gen_spec.clone(),
            opts.disc_spec.clone(),
            &opts.gan,
        )?),
        Mode::Baseline => TrainedSystem::Baseline(BaselineSystem::new(
            opts.gen_spec.clone(),
            opts.disc_spec.clone(),
            &opts.gan,
        )?),
    };

    sink.on_checkpoint(0, &system)?;
    let mut history = Vec::new();
    if opts.epochs == 0 {
        return Ok((system, history));
    }

    let run_eval = |epoch: u64,
                        system: &TrainedSystem,
                        history: &mut Vec<MetricsReport>,
                        sink: &mut dyn TrainSink|
     -> Result<()> {
        let mut report = metrics::evaluate(&system.eval_models(), task, opts.n_eval, opts.eval_seed)?;
        report.epoch = epoch;
        sink.on_eval(&report)?;
        history.push(report);
        Ok(())
    };
    run_eval(0, &system, &mut history, sink)?;

    let (xs, ys) = task.training_sets();
    let iterations_per_epoch = xs.len().max(ys.len()) as u64;
    let mut sampler_x = UnpairedSampler::new(xs, subseed(opts.gan.seed_train, 10))?;
    let mut sampler_y = UnpairedSampler::new(ys, subseed(opts.gan.seed_train, 11))?;

    let mut tape = Tape::new();
    let mut iteration = 0u64;
    for epoch in 0..opts.epochs {
        let lr = match &system {
            TrainedSystem::One2One(s) => lr_at(&s.schedule, epoch),
            TrainedSystem::Baseline(s) => lr_at(&s.schedule, epoch),
        };
        for _ in 0..iterations_per_epoch {
            let x = sampler_x.next_batch();
            let y = sampler_y.next_batch();
            let losses = match &mut system {
                TrainedSystem::One2One(s) => {
                    train_iteration_one2one(&mut tape, s, &x, &y, lr, iteration)?
                }
                TrainedSystem::Baseline(s) => {
                    train_iteration_baseline(&mut tape, s, &x, &y, lr, iteration)?
                }
            };
            sink.on_loss(&LossRow {
                iteration,
                epoch,
                lr,
                losses,
            })?;
            iteration += 1;
        }
        let done = epoch + 1;
        if done % opts.eval_every == 0 || done == opts.epochs {
            run_eval(done, &system, &mut history, sink)?;
        }
        if done % opts.checkpoint_every == 0 || done == opts.epochs {
            sink.on_checkpoint(done, &system)?;
        }
    }
    Ok((system, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_reflection_task;
    use crate::nn::{DiscriminatorSpec, GeneratorSpec};
    use crate::optim::{AdamHyper, Schedule};

    fn small_options(seed: u64) -> GanOptions {
        GanOptions {
            lambda_x: 10.0,
            lambda_y: 10.0,
            lambda: 10.0,
            pool_capacity: 50,
            lr_schedule: Schedule {
                base_lr: 2e-4,
                fixed_epochs: 100,
                decay_epochs: 100,
            },
            hyper: AdamHyper::default(),
            seed_init: subseed(seed, 1),
            seed_train: subseed(seed, 2),
        }
    }

    fn vec_specs() -> (GeneratorSpec, DiscriminatorSpec) {
        (
            GeneratorSpec::Vector {
                dim: 2,
                hidden: vec![8],
            },
            DiscriminatorSpec::Vector {
                input_dim: 2,
                hidden: vec![6],
            },
        )
    }

    fn sample_pair(task: &crate::data::DomainTask) -> (Tensor, Tensor) {
        let (xs, ys) = task.training_sets();
        (xs[0].clone(), ys[0].clone())
    }

    #[test]
    fn one2one_steps_generator_twice_per_iteration() {
        let (gs, ds) = vec_specs();
        let mut sys = One2OneSystem::new(gs, ds, &small_options(5)).unwrap();
        let task = make_reflection_task(1, 100).unwrap();
        let (x, y) = sample_pair(&task);
        let mut tape = Tape::new();
        for i in 0..3 {
            train_iteration_one2one(&mut tape, &mut sys, &x, &y, 2e-4, i).unwrap();
        }
        assert_eq!(sys.opt_g.step_count(), 6);
        assert_eq!(sys.opt_dx.step_count(), 3);
        assert_eq!(sys.opt_dy.step_count(), 3);
    }

    #[test]
    fn baseline_steps_each_generator_once_per_iteration() {
        let (gs, ds) = vec_specs();
        let mut sys = BaselineSystem::new(gs, ds, &small_options(5)).unwrap();
        let task = make_reflection_task(1, 100).unwrap();
        let (x, y) = sample_pair(&task);
        let mut tape = Tape::new();
        for i in 0..3 {
            train_iteration_baseline(&mut tape, &mut sys, &x, &y, 2e-4, i).unwrap();
        }
        assert_eq!(sys.opt_g.step_count(), 3);
        assert_eq!(sys.opt_f.step_count(), 3);
        assert_eq!(sys.opt_dx.step_count(), 3);
        assert_eq!(sys.opt_dy.step_count(), 3);
    }

    #[test]
    fn discriminator_update_leaves_generator_untouched() {
        let (gs, ds) = vec_specs();
        let mut sys = One2OneSystem::new(gs, ds, &small_options(9)).unwrap();
        let task = make_reflection_task(2, 100).unwrap();
        let (x, y) = sample_pair(&task);

        // Reproduce step 3 in isolation: a pooled (detached) fake feeds the
        // discriminator loss; the generator must receive no gradient.
        let mut tape = Tape::new();
        let fake = sys.generator.forward(&mut tape, &x).unwrap().detach();
        let pooled = sys.pool_y.query(&fake);
        let loss = adv_loss_discriminator(&mut tape, &sys.disc_y, &y, &pooled).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        for p in sys.generator.parameters() {
            assert!(
                grads.wrt(&p.value).is_none(),
                "generator parameter {} received gradient from discriminator update",
                p.name
            );
        }
        for p in sys.disc_y.parameters() {
            assert!(grads.wrt(&p.value).is_some());
        }
    }

    #[test]
    fn losses_are_non_negative_and_logged() {
        let (gs, ds) = vec_specs();
        let mut sys = One2OneSystem::new(gs, ds, &small_options(11)).unwrap();
        let task = make_reflection_task(3, 100).unwrap();
        let (x, y) = sample_pair(&task);
        let mut tape = Tape::new();
        let l = train_iteration_one2one(&mut tape, &mut sys, &x, &y, 2e-4, 0).unwrap();
        for v in [l.x2y_adv, l.x2y_cyc, l.y2x_adv, l.y2x_cyc, l.d_x, l.d_y] {
            assert!(v >= 0.0 && v.is_finite());
        }
    }

    #[test]
    fn three_iteration_run_is_bit_reproducible() {
        let run = || -> Vec<u64> {
            let (gs, ds) = vec_specs();
            let mut sys = One2OneSystem::new(gs, ds, &small_options(21)).unwrap();
            let task = make_reflection_task(4, 100).unwrap();
            let (xs, ys) = task.training_sets();
            let mut tape = Tape::new();
            let mut bits = Vec::new();
            for i in 0..3 {
                let l = train_iteration_one2one(
                    &mut tape,
                    &mut sys,
                    &xs[i as usize],
                    &ys[i as usize],
                    2e-4,
                    i,
                )
                .unwrap();
                for v in [l.x2y_adv, l.x2y_cyc, l.y2x_adv, l.y2x_cyc, l.d_x, l.d_y] {
                    bits.push(v.to_bits());
                }
            }
            for p in sys.generator.parameters() {
                bits.extend(p.value.data().iter().map(|v| v.to_bits()));
            }
            bits
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_loss_aborts_with_context() {
        let (gs, ds) = vec_specs();
        let mut sys = One2OneSystem::new(gs, ds, &small_options(13)).unwrap();
        // Poison the Y discriminator so the first adversarial term overflows.
        let n = sys.disc_y.flat_len();
        sys.disc_y.load_flat(&vec![1e308; n]).unwrap();
        let task = make_reflection_task(5, 100).unwrap();
        let (x, y) = sample_pair(&task);
        let mut tape = Tape::new();
        match train_iteration_one2one(&mut tape, &mut sys, &x, &y, 2e-4, 7) {
            Err(Error::NonFiniteLoss { iteration, loss, .. }) => {
                assert_eq!(iteration, 7);
                assert_eq!(loss, "loss_x2y_adv");
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    struct Collect {
        rows: Vec<LossRow>,
        evals: Vec<MetricsReport>,
        checkpoints: Vec<u64>,
    }
    impl TrainSink for Collect {
        fn on_loss(&mut self, row: &LossRow) -> Result<()> {
            self.rows.push(*row);
            Ok(())
        }
        fn on_eval(&mut self, report: &MetricsReport) -> Result<()> {
            self.evals.push(report.clone());
            Ok(())
        }
        fn on_checkpoint(&mut self, epoch: u64, _system: &TrainedSystem) -> Result<()> {
            self.checkpoints.push(epoch);
            Ok(())
        }
    }

    fn train_opts(mode: Mode, epochs: u64, seed: u64) -> TrainOptions {
        let (gen_spec, disc_spec) = vec_specs();
        TrainOptions {
            mode,
            epochs,
            gen_spec,
            disc_spec,
            gan: small_options(seed),
            eval_every: 2,
            checkpoint_every: 2,
            n_eval: 40,
            eval_seed: 9999,
        }
    }

    #[test]
    fn zero_epoch_run_returns_empty_history() {
        let task = make_reflection_task(6, 100).unwrap();
        let mut sink = Collect {
            rows: vec![],
            evals: vec![],
            checkpoints: vec![],
        };
        let (_, history) = train(&task, &train_opts(Mode::One2One, 0, 1), &mut sink).unwrap();
        assert!(history.is_empty());
        assert!(sink.rows.is_empty());
        assert_eq!(sink.checkpoints, vec![0]);
    }

    #[test]
    fn train_emits_rows_evals_and_checkpoints() {
        let task = make_reflection_task(7, 100).unwrap();
        let mut sink = Collect {
            rows: vec![],
            evals: vec![],
            checkpoints: vec![],
        };
        let (system, history) = train(&task, &train_opts(Mode::One2One, 3, 2), &mut sink).unwrap();
        assert_eq!(sink.rows.len(), 300);
        // Initial eval plus epochs 2 and 3.
        let epochs: Vec<u64> = history.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 2, 3]);
        assert_eq!(sink.checkpoints, vec![0, 2, 3]);
        match system {
            TrainedSystem::One2One(s) => {
                assert_eq!(s.opt_g.step_count(), 600);
            }
            _ => unreachable!(),
        }
        // Iteration indices are consecutive and epochs non-decreasing.
        for (i, row) in sink.rows.iter().enumerate() {
            assert_eq!(row.iteration, i as u64);
        }
    }

    #[test]
    fn same_seed_same_loss_trajectory() {
        let task = make_reflection_task(8, 100).unwrap();
        let run = |mode| -> Vec<String> {
            let mut sink = Collect {
                rows: vec![],
                evals: vec![],
                checkpoints: vec![],
            };
            train(&task, &train_opts(mode, 2, 3), &mut sink).unwrap();
            sink.rows.iter().map(|r| r.csv_row()).collect()
        };
        assert_eq!(run(Mode::One2One), run(Mode::One2One));
        assert_eq!(run(Mode::Baseline), run(Mode::Baseline));
    }

    #[test]
    fn residual_matches_mean_cycle_loss_on_same_samples() {
        use super::super::losses::cycle_loss;
        let (gs, ds) = vec_specs();
        let sys = One2OneSystem::new(gs, ds, &small_options(17)).unwrap();
        let task = make_reflection_task(9, 100).unwrap();
        let xs = task.sample_x(123, 20);
        let residual = crate::metrics::self_inverse_residual(&sys.generator, &xs).unwrap();
        let mut tape = Tape::new();
        let mut mean = 0.0;
        for x in &xs {
            mean += cycle_loss(&mut tape, &sys.generator, x).unwrap().item();
            tape.clear();
        }
        mean /= xs.len() as f64;
        assert!((residual - mean).abs() < 1e-15);
    }

    #[test]
    fn train_rejects_mismatched_task_and_model() {
        let task = make_reflection_task(10, 100).unwrap();
        let mut opts = train_opts(Mode::One2One, 1, 4);
        opts.gen_spec = GeneratorSpec::Conv {
            channels: vec![1, 4, 1],
            height: 16,
            width: 16,
        };
        assert!(matches!(
            train(&task, &opts, &mut NullSink),
            Err(Error::DimMismatch { .. })
        ));
    }
}
