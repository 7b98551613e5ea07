//! Adversarial and cycle objectives.
//!
//! Adversarial terms use least-squares targets (real -> 1, fake -> 0) in
//! place of log-likelihood. The shared-generator objectives are separated
//! per transfer direction: each direction combines one adversarial term
//! against that direction's discriminator with the direction's own cycle
//! term through the same generator applied twice. The baseline keeps two
//! generators and one joint objective.

use crate::autodiff::{ops, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::Model;

/// Generator-side adversarial loss: mse(D(fake), 1). Gradients flow into
/// the generator through the discriminator.
pub fn adv_loss_generator(tape: &mut Tape, disc: &Model, fake: &Tensor) -> Result<Tensor> {
    let scores = disc.forward(tape, fake)?;
    let ones = Tensor::filled(scores.shape(), 1.0);
    ops::mse_loss(tape, &scores, &ones)
}

/// Discriminator loss: (mse(D(real), 1) + mse(D(fake), 0)) / 2. The fake
/// must be detached (pooled history values are), so no gradient can reach
/// the generator.
pub fn adv_loss_discriminator(
    tape: &mut Tape,
    disc: &Model,
    real: &Tensor,
    fake_pooled: &Tensor,
) -> Result<Tensor> {
    if fake_pooled.requires_grad() {
        return Err(Error::InvalidArg {
            op: "adv_loss_discriminator",
            msg: "fake sample must be detached from the generator graph".into(),
        });
    }
    let real_scores = disc.forward(tape, real)?;
    let ones = Tensor::filled(real_scores.shape(), 1.0);
    let real_term = ops::mse_loss(tape, &real_scores, &ones)?;
    let fake_scores = disc.forward(tape, fake_pooled)?;
    let zeros = Tensor::zeros(fake_scores.shape());
    let fake_term = ops::mse_loss(tape, &fake_scores, &zeros)?;
    let sum = ops::add(tape, &real_term, &fake_term)?;
    ops::scale(tape, &sum, 0.5)
}

/// Cycle-consistency through the shared generator applied twice:
/// ||G(G(z)) - z||_1. Serves both transfer directions.
pub fn cycle_loss(tape: &mut Tape, generator: &Model, z: &Tensor) -> Result<Tensor> {
    let once = generator.forward(tape, z)?;
    let twice = generator.forward(tape, &once)?;
    ops::l1_loss(tape, &twice, z)
}

/// Components of one direction's objective for the shared generator.
pub struct DirectionLosses {
    pub total: Tensor,
    pub adversarial: Tensor,
    pub cycle: Tensor,
    /// G(z), kept so the iteration can pool it without recomputation.
    pub fake: Tensor,
}

/// Full objective for one transfer direction:
/// mse(D(G(z)), 1) + lambda * ||G(G(z)) - z||_1.
/// With `disc` = D_Y and `z` from X this is the X->Y objective; with D_X
/// and a Y sample it is the Y->X objective.
pub fn direction_loss(
    tape: &mut Tape,
    generator: &Model,
    disc: &Model,
    z: &Tensor,
    lambda: f64,
) -> Result<DirectionLosses> {
    if lambda < 0.0 {
        return Err(Error::InvalidArg {
            op: "direction_loss",
            msg: format!("cycle weight must be non-negative, got {lambda}"),
        });
    }
    let fake = generator.forward(tape, z)?;
    let adversarial = {
        let scores = disc.forward(tape, &fake)?;
        let ones = Tensor::filled(scores.shape(), 1.0);
        ops::mse_loss(tape, &scores, &ones)?
    };
    let round = generator.forward(tape, &fake)?;
    let cycle = ops::l1_loss(tape, &round, z)?;
    let weighted = ops::scale(tape, &cycle, lambda)?;
    let total = ops::add(tape, &adversarial, &weighted)?;
    Ok(DirectionLosses {
        total,
        adversarial,
        cycle,
        fake,
    })
}

/// Components of the baseline's joint generator objective.
pub struct BaselineGenLosses {
    pub total: Tensor,
    pub adv_x2y: Tensor,
    pub adv_y2x: Tensor,
    pub cyc_x: Tensor,
    pub cyc_y: Tensor,
    pub fake_y: Tensor,
    pub fake_x: Tensor,
}

/// Joint loss for the two-generator baseline:
/// mse(D_Y(G(x)), 1) + mse(D_X(F(y)), 1)
///   + lambda * (||F(G(x)) - x||_1 + ||G(F(y)) - y||_1).
#[allow(clippy::too_many_arguments)]
pub fn baseline_generator_loss(
    tape: &mut Tape,
    g: &Model,
    f: &Model,
    disc_y: &Model,
    disc_x: &Model,
    x: &Tensor,
    y: &Tensor,
    lambda: f64,
) -> Result<BaselineGenLosses> {
    if lambda < 0.0 {
        return Err(Error::InvalidArg {
            op: "baseline_generator_loss",
            msg: format!("cycle weight must be non-negative, got {lambda}"),
        });
    }
    let fake_y = g.forward(tape, x)?;
    let adv_x2y = {
        let scores = disc_y.forward(tape, &fake_y)?;
        let ones = Tensor::filled(scores.shape(), 1.0);
        ops::mse_loss(tape, &scores, &ones)?
    };
    let fake_x = f.forward(tape, y)?;
    let adv_y2x = {
        let scores = disc_x.forward(tape, &fake_x)?;
        let ones = Tensor::filled(scores.shape(), 1.0);
        ops::mse_loss(tape, &scores, &ones)?
    };
    let back_x = f.forward(tape, &fake_y)?;
    let cyc_x = ops::l1_loss(tape, &back_x, x)?;
    let back_y = g.forward(tape, &fake_x)?;
    let cyc_y = ops::l1_loss(tape, &back_y, y)?;

    let adv = ops::add(tape, &adv_x2y, &adv_y2x)?;
    let cyc = ops::add(tape, &cyc_x, &cyc_y)?;
    let weighted = ops::scale(tape, &cyc, lambda)?;
    let total = ops::add(tape, &adv, &weighted)?;
    Ok(BaselineGenLosses {
        total,
        adv_x2y,
        adv_y2x,
        cyc_x,
        cyc_y,
        fake_y,
        fake_x,
    })
}
