//! Separated adversarial and cycle objectives for the shared self-inverse
//! generator, the two-generator baseline, the fake-image history pool, and
//! both training loops.

mod losses;
mod pool;
mod system;
mod train;

pub use losses::{
    adv_loss_discriminator, adv_loss_generator, baseline_generator_loss, cycle_loss,
    direction_loss, BaselineGenLosses, DirectionLosses,
};
pub use pool::ImagePool;
pub use system::{BaselineSystem, GanOptions, Mode, One2OneSystem, TrainedSystem};
pub use train::{
    train, train_iteration_baseline, train_iteration_one2one, IterationLosses, LossRow, NullSink,
    TrainOptions, TrainSink,
};
